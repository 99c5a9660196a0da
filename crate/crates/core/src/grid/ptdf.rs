use faer::linalg::solvers::Solve;
use faer::Mat;

use super::{GridError, NetworkCase};

/// Per-branch DC susceptance `1 / (x * tap)`, zero for out-of-service branches.
pub fn dc_susceptances(case: &NetworkCase) -> Result<Vec<f64>, GridError> {
    case.branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            if !br.in_service {
                Ok(0.0)
            } else if br.x == 0.0 {
                Err(GridError::SingularBranch { branch: k })
            } else {
                Ok(1.0 / (br.x * br.tap))
            }
        })
        .collect()
}

/// Dense branch-by-bus shift factor matrix.
#[derive(Debug, Clone)]
pub struct PtdfMatrix {
    /// Id of the bus that absorbs the balance.
    pub slack_bus: usize,
    /// Position of the slack bus in `case.buses`.
    pub slack_index: usize,
    n_branch: usize,
    n_bus: usize,
    /// Row-major `n_branch x n_bus`.
    data: Vec<f64>,
}

impl PtdfMatrix {
    pub fn get(&self, branch: usize, bus: usize) -> f64 {
        self.data[branch * self.n_bus + bus]
    }

    pub fn row(&self, branch: usize) -> &[f64] {
        &self.data[branch * self.n_bus..(branch + 1) * self.n_bus]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_branch, self.n_bus)
    }

    /// Branch flows for the injection vector `p` (slack entry ignored).
    pub fn flows(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.n_bus);
        (0..self.n_branch)
            .map(|l| self.row(l).iter().zip(p).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Φᵀ w` for a per-branch weight vector.
    pub fn transpose_mul(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.n_branch);
        let mut out = vec![0.0; self.n_bus];
        for (l, &wl) in w.iter().enumerate() {
            if wl != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(l)) {
                    *o += wl * a;
                }
            }
        }
        out
    }
}

/// Reduced nodal susceptance matrix with the slack row and column removed,
/// factorized once. Maps non-slack injections to angles (slack angle 0).
pub(crate) struct ReducedSusceptance {
    slack: usize,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
}

impl ReducedSusceptance {
    pub(crate) fn new(case: &NetworkCase, slack: usize) -> Result<Self, GridError> {
        case.check_connected()?;
        let b = dc_susceptances(case)?;
        let n = case.n_bus();
        let pos = |i: usize| if i < slack { Some(i) } else if i == slack { None } else { Some(i - 1) };
        let mut m = Mat::<f64>::zeros(n - 1, n - 1);
        for (k, _) in case.in_service_branches() {
            let (f, t) = case.branch_ends(k);
            let bk = b[k];
            if let Some(pf) = pos(f) {
                m[(pf, pf)] += bk;
            }
            if let Some(pt) = pos(t) {
                m[(pt, pt)] += bk;
            }
            if let (Some(pf), Some(pt)) = (pos(f), pos(t)) {
                m[(pf, pt)] -= bk;
                m[(pt, pf)] -= bk;
            }
        }
        Ok(Self {
            slack,
            lu: m.partial_piv_lu(),
            n,
        })
    }

    /// Angles for the given bus injections; the slack entry of `p` is ignored.
    pub(crate) fn angles(&self, p: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::zeros(self.n - 1, 1);
        let mut r = 0;
        for (i, &pi) in p.iter().enumerate() {
            if i != self.slack {
                rhs[(r, 0)] = pi;
                r += 1;
            }
        }
        let sol = self.lu.solve(&rhs);
        let mut theta = vec![0.0; self.n];
        let mut r = 0;
        for (i, t) in theta.iter_mut().enumerate() {
            if i != self.slack {
                *t = sol[(r, 0)];
                r += 1;
            }
        }
        theta
    }
}

/// DC flow on each branch, `b (θ_f − θ_t)`.
pub fn dc_branch_flows(case: &NetworkCase, theta: &[f64]) -> Result<Vec<f64>, GridError> {
    let b = dc_susceptances(case)?;
    Ok((0..case.branches.len())
        .map(|k| {
            let (f, t) = case.branch_ends(k);
            b[k] * (theta[f] - theta[t])
        })
        .collect())
}

/// Builds the PTDF with bus `slack_bus` (an id) as the balancing bus.
pub fn build_ptdf(case: &NetworkCase, slack_bus: usize) -> Result<PtdfMatrix, GridError> {
    let n = case.n_bus();
    let nb = case.branches.len();
    let slack = case
        .bus_index(slack_bus)
        .ok_or_else(|| GridError::MalformedCase(format!("unknown slack bus {slack_bus}")))?;
    let reduced = ReducedSusceptance::new(case, slack)?;
    let b = dc_susceptances(case)?;
    // X = B_red^{-1} embedded with a zero slack row/column
    let mut eye = Mat::<f64>::zeros(n - 1, n - 1);
    for i in 0..n - 1 {
        eye[(i, i)] = 1.0;
    }
    let x_red = reduced.lu.solve(&eye);
    let full = |i: usize| if i < slack { Some(i) } else if i == slack { None } else { Some(i - 1) };
    let mut data = vec![0.0; nb * n];
    for k in 0..nb {
        if !case.branches[k].in_service {
            continue;
        }
        let (f, t) = case.branch_ends(k);
        for j in 0..n {
            let Some(cj) = full(j) else { continue };
            let xf = full(f).map_or(0.0, |rf| x_red[(rf, cj)]);
            let xt = full(t).map_or(0.0, |rt| x_red[(rt, cj)]);
            data[k * n + j] = b[k] * (xf - xt);
        }
    }
    Ok(PtdfMatrix {
        slack_bus,
        slack_index: slack,
        n_branch: nb,
        n_bus: n,
        data,
    })
}
