//! Linear loss factors about a reference dispatch.

use crate::grid::{build_ptdf, NetworkCase, ReducedSusceptance};
use crate::linalg::SparseMatrix;
use crate::qp::{solve_qp, QpProblem};

use super::{check_capacity, check_status, generation_cost, DcError, DcOptions, DcSolution, LossTag};

/// `ℓ(p) = ell_ref + λᵀp` about the flows `ref_flows`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossFactors {
    pub lambda: Vec<f64>,
    pub ell_ref: f64,
    pub ref_flows: Vec<f64>,
    /// Bus that absorbs the modeled losses.
    pub slack_bus: usize,
}

impl LossFactors {
    pub fn losses(&self, p: &[f64]) -> f64 {
        self.ell_ref + self.lambda.iter().zip(p).map(|(l, x)| l * x).sum::<f64>()
    }
}

/// Differentiates `Σ r f²` with `f = Φ p` at the reference point:
/// `λ = 2 Φᵀ (r ⊙ f_ref)`, and picks `ell_ref` so the linear model is exact
/// there.
///
/// `Φ` here maps net injections (generation positive) to flows; with the
/// withdrawal-positive convention the same vector reads `−2 (r ⊙ f)ᵀ Φ`.
pub fn compute_loss_factors(case: &NetworkCase, reference: &DcSolution, slack_bus: usize) -> Result<LossFactors, DcError> {
    if reference.flow_from.len() != case.branches.len() || reference.p_g_sp.len() != case.generators.len() {
        return Err(DcError::MissingReference("reference was solved on a different case".into()));
    }
    let ptdf = build_ptdf(case, slack_bus)?;
    let weighted: Vec<f64> = case
        .branches
        .iter()
        .zip(&reference.flow_from)
        .map(|(br, f)| if br.in_service { 2.0 * br.r * f } else { 0.0 })
        .collect();
    let lambda = ptdf.transpose_mul(&weighted);
    let p_ref = reference.bus_injections(case);
    let quadratic: f64 = case
        .in_service_branches()
        .map(|(k, br)| br.r * reference.flow_from[k].powi(2))
        .sum();
    let ell_ref = quadratic - lambda.iter().zip(&p_ref).map(|(l, p)| l * p).sum::<f64>();
    Ok(LossFactors {
        lambda,
        ell_ref,
        ref_flows: reference.flow_from.clone(),
        slack_bus,
    })
}

/// PTDF-based DCOPF with one system balance `Σp_g − Σp_d = ℓ_ref + λᵀp`.
/// Losses are withdrawn at the slack bus; angles come from a DC flow with
/// the dispatch fixed.
pub fn solve_dc_lllf(case: &NetworkCase, factors: &LossFactors) -> Result<DcSolution, DcError> {
    solve_with(case, factors, &DcOptions::default())
}

pub(super) fn solve_with(case: &NetworkCase, factors: &LossFactors, options: &DcOptions) -> Result<DcSolution, DcError> {
    if factors.lambda.len() != case.n_bus() || factors.ref_flows.len() != case.branches.len() {
        return Err(DcError::MissingReference("loss factors were built for a different case".into()));
    }
    check_capacity(case)?;
    let ptdf = build_ptdf(case, factors.slack_bus)?;
    let gens: Vec<usize> = case.in_service_generators().map(|(g, _)| g).collect();
    let gen_bus: Vec<usize> = gens.iter().map(|&g| case.idx(case.generators[g].bus)).collect();
    let n = gens.len();
    let base = case.base_mva;
    let mut qp = QpProblem::new(n);
    let mut h = Vec::new();
    for (col, &g) in gens.iter().enumerate() {
        let gen = &case.generators[g];
        h.push((col, col, 2.0 * gen.cost.c2 * base * base));
        qp.c[col] = gen.cost.c1 * base;
        qp.lb[col] = gen.p_min;
        qp.ub[col] = gen.p_max;
    }
    qp.h = SparseMatrix::from_triplets(n, n, &h);

    let p_d: Vec<f64> = case.buses.iter().map(|b| b.p_d).collect();
    let lambda_pd: f64 = factors.lambda.iter().zip(&p_d).map(|(l, d)| l * d).sum();
    let eq: Vec<_> = gen_bus.iter().enumerate().map(|(col, &i)| (0, col, 1.0 - factors.lambda[i])).collect();
    qp.a_eq = SparseMatrix::from_triplets(1, n, &eq);
    qp.b_eq = vec![case.total_demand() + factors.ell_ref - lambda_pd];

    let minus_pd: Vec<f64> = p_d.iter().map(|d| -d).collect();
    let load_flows = ptdf.flows(&minus_pd);
    let mut rows = Vec::new();
    for (k, br) in case.in_service_branches() {
        let Some(rate) = br.rate_a else { continue };
        let phi = ptdf.row(k);
        for sign in [1.0, -1.0] {
            let r = qp.b_in.len();
            for (col, &i) in gen_bus.iter().enumerate() {
                if phi[i] != 0.0 {
                    rows.push((r, col, sign * phi[i]));
                }
            }
            qp.b_in.push(rate - sign * load_flows[k]);
        }
    }
    qp.a_in = SparseMatrix::from_triplets(qp.b_in.len(), n, &rows);

    let sol = solve_qp(&qp, options.qp_tol, options.qp_max_iter)?;
    check_status(&sol)?;
    let mut p_g_sp = vec![0.0; case.generators.len()];
    for (col, &g) in gens.iter().enumerate() {
        p_g_sp[g] = sol.x[col];
    }
    let mut out = DcSolution {
        loss_model: LossTag::Lllf,
        base_mva: base,
        objective: generation_cost(case, &p_g_sp),
        p_g_sp,
        theta_dc: Vec::new(),
        flow_from: Vec::new(),
        flow_to: Vec::new(),
        modeled_losses: 0.0,
        rounds: 1,
    };
    let p = out.bus_injections(case);
    out.modeled_losses = factors.losses(&p);
    out.flow_from = ptdf.flows(&p);
    out.flow_to = out.flow_from.iter().map(|f| -f).collect();
    out.theta_dc = ReducedSusceptance::new(case, ptdf.slack_index)?.angles(&p);
    Ok(out)
}
