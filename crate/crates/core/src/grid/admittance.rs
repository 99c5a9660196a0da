use num_complex::Complex64;

use super::{GridError, NetworkCase};

/// Two-port admittances of one branch in the from/to frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

impl BranchAdmittance {
    /// Complex power entering the branch at the from and to ends.
    pub fn end_flows(&self, v: &[Complex64]) -> (Complex64, Complex64) {
        let (vf, vt) = (v[self.from], v[self.to]);
        let i_f = self.yff * vf + self.yft * vt;
        let i_t = self.ytf * vf + self.ytt * vt;
        (vf * i_f.conj(), vt * i_t.conj())
    }
}

/// Sparse bus admittance matrix stored row-wise, plus the branch two-ports
/// used to evaluate flows. Out-of-service branches have no entry in
/// `branches` (`None`).
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    n: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
    pub branches: Vec<Option<BranchAdmittance>>,
}

impl AdmittanceMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Nonzeros of row `i` as `(column, value)`, columns ascending.
    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or_default()
    }

    /// `Y * v`
    pub fn mul(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, y)| y * v[j]).sum())
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Assembles the bus admittance matrix with series impedance, line charging,
/// off-nominal taps, phase shifts and bus shunts.
pub fn build_admittance(case: &NetworkCase) -> Result<AdmittanceMatrix, GridError> {
    let n = case.n_bus();
    let mut dense_rows: Vec<std::collections::BTreeMap<usize, Complex64>> =
        vec![Default::default(); n];
    let mut branches = Vec::with_capacity(case.branches.len());
    for (k, br) in case.branches.iter().enumerate() {
        if !br.in_service {
            branches.push(None);
            continue;
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(GridError::SingularBranch { branch: k });
        }
        let (f, t) = case.branch_ends(k);
        let ys = Complex64::new(br.r, br.x).inv();
        let charging = Complex64::new(0.0, br.b_charge / 2.0);
        let tap = Complex64::from_polar(br.tap, br.shift);
        let ytt = ys + charging;
        let yff = ytt / (tap * tap.conj());
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        *dense_rows[f].entry(f).or_default() += yff;
        *dense_rows[f].entry(t).or_default() += yft;
        *dense_rows[t].entry(f).or_default() += ytf;
        *dense_rows[t].entry(t).or_default() += ytt;
        branches.push(Some(BranchAdmittance {
            from: f,
            to: t,
            yff,
            yft,
            ytf,
            ytt,
        }));
    }
    for (i, bus) in case.buses.iter().enumerate() {
        // every diagonal is stored so the Jacobian pattern is stable
        *dense_rows[i].entry(i).or_default() += Complex64::new(bus.gs, bus.bs);
    }
    let rows = dense_rows
        .into_iter()
        .map(|r| r.into_iter().collect())
        .collect();
    Ok(AdmittanceMatrix { n, rows, branches })
}
