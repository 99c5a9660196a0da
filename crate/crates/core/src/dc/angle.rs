//! Angle-based formulations: lossless base and the directed-flow loss models.

use crate::grid::{dc_susceptances, NetworkCase};
use crate::linalg::SparseMatrix;
use crate::qp::{solve_qp, QpProblem};

use super::{check_capacity, check_status, generation_cost, DcError, DcOptions, DcSolution, LossTag};

/// Column layout: in-service generator outputs, non-reference angles, then
/// one `←p` column per directed (lossy) branch.
struct Layout {
    gens: Vec<usize>,
    theta: Vec<Option<usize>>,
    back: Vec<Option<usize>>,
    b: Vec<f64>,
    n: usize,
}

impl Layout {
    fn new(case: &NetworkCase, directed: bool) -> Result<Self, DcError> {
        case.check_connected()?;
        let b = dc_susceptances(case)?;
        let gens: Vec<usize> = case.in_service_generators().map(|(g, _)| g).collect();
        let slack = case.ref_bus();
        let mut n = gens.len();
        let theta = (0..case.n_bus())
            .map(|i| {
                (i != slack).then(|| {
                    n += 1;
                    n - 1
                })
            })
            .collect();
        let back = case
            .branches
            .iter()
            .map(|br| {
                (directed && br.in_service && br.r > 0.0).then(|| {
                    n += 1;
                    n - 1
                })
            })
            .collect();
        Ok(Self { gens, theta, back, b, n })
    }

    /// `→p_k = b_k (θ_f − θ_t)` as sparse coefficients.
    fn forward(&self, case: &NetworkCase, k: usize) -> Vec<(usize, f64)> {
        let (f, t) = case.branch_ends(k);
        let mut out = Vec::with_capacity(2);
        if let Some(c) = self.theta[f] {
            out.push((c, self.b[k]));
        }
        if let Some(c) = self.theta[t] {
            out.push((c, -self.b[k]));
        }
        out
    }

    fn eval(terms: &[(usize, f64)], x: &[f64]) -> f64 {
        terms.iter().map(|&(c, v)| v * x[c]).sum()
    }
}

struct Model {
    layout: Layout,
    qp: QpProblem,
    /// Line limit rows, fixed at build time.
    limit_rows: Vec<(usize, usize, f64)>,
    limit_b: Vec<f64>,
    /// Tangent cuts as `(branch, f₀)`.
    cuts: Vec<(usize, f64)>,
}

impl Model {
    fn build(case: &NetworkCase, directed: bool) -> Result<Self, DcError> {
        let layout = Layout::new(case, directed)?;
        let n = layout.n;
        let base = case.base_mva;
        let mut qp = QpProblem::new(n);

        let mut h = Vec::new();
        for (col, &g) in layout.gens.iter().enumerate() {
            let gen = &case.generators[g];
            h.push((col, col, 2.0 * gen.cost.c2 * base * base));
            qp.c[col] = gen.cost.c1 * base;
            qp.lb[col] = gen.p_min;
            qp.ub[col] = gen.p_max;
        }
        qp.h = SparseMatrix::from_triplets(n, n, &h);

        // bus balance: generation − outgoing flows = demand
        let mut eq = Vec::new();
        for (col, &g) in layout.gens.iter().enumerate() {
            eq.push((case.idx(case.generators[g].bus), col, 1.0));
        }
        let mut in_rows = Vec::new();
        let mut n_in = 0;
        for (k, br) in case.in_service_branches() {
            let (f, t) = case.branch_ends(k);
            let fwd = layout.forward(case, k);
            for &(c, v) in &fwd {
                eq.push((f, c, -v));
            }
            match layout.back[k] {
                Some(bc) => {
                    eq.push((t, bc, -1.0));
                    if let Some(rate) = br.rate_a {
                        qp.lb[bc] = -rate;
                        qp.ub[bc] = rate;
                    }
                }
                None => {
                    for &(c, v) in &fwd {
                        eq.push((t, c, v));
                    }
                }
            }
            if let Some(rate) = br.rate_a {
                for sign in [1.0, -1.0] {
                    for &(c, v) in &fwd {
                        in_rows.push((n_in, c, sign * v));
                    }
                    qp.b_in.push(rate);
                    n_in += 1;
                }
            }
        }
        qp.a_eq = SparseMatrix::from_triplets(case.n_bus(), n, &eq);
        qp.b_eq = case.buses.iter().map(|b| b.p_d).collect();
        let limit_b = std::mem::take(&mut qp.b_in);
        Ok(Self { layout, qp, limit_rows: in_rows, limit_b, cuts: Vec::new() })
    }

    /// Adds `r (2 f₀ →p − f₀²) ≤ →p + ←p` for branch `k`.
    fn add_cut(&mut self, k: usize, f0: f64) {
        debug_assert!(self.layout.back[k].is_some(), "cut on a directed branch");
        self.cuts.push((k, f0));
    }

    /// Drops cuts that sit more than `slack` below the line's current loss;
    /// the cut at zero is always kept.
    fn prune_cuts(&mut self, case: &NetworkCase, sol: &DcSolution, slack: f64) {
        self.cuts.retain(|&(k, f0)| {
            let (f, b) = (sol.flow_from[k], sol.flow_to[k]);
            f0 == 0.0 || f + b - case.branches[k].r * (2.0 * f0 * f - f0 * f0) <= slack
        });
    }

    fn assemble(&mut self, case: &NetworkCase) {
        let mut rows = self.limit_rows.clone();
        let mut b = self.limit_b.clone();
        for &(k, f0) in &self.cuts {
            let r = case.branches[k].r;
            let bc = self.layout.back[k].expect("cut on a directed branch");
            let row = b.len();
            for (c, v) in self.layout.forward(case, k) {
                rows.push((row, c, (2.0 * r * f0 - 1.0) * v));
            }
            rows.push((row, bc, -1.0));
            b.push(r * f0 * f0);
        }
        self.qp.a_in = SparseMatrix::from_triplets(b.len(), self.layout.n, &rows);
        self.qp.b_in = b;
    }

    fn solve(&mut self, case: &NetworkCase, tag: LossTag, options: &DcOptions, qp_tol: f64, rounds: usize) -> Result<DcSolution, DcError> {
        self.assemble(case);
        let sol = solve_qp(&self.qp, qp_tol, options.qp_max_iter)?;
        check_status(&sol)?;
        let x = &sol.x;
        let mut p_g_sp = vec![0.0; case.generators.len()];
        for (col, &g) in self.layout.gens.iter().enumerate() {
            p_g_sp[g] = x[col];
        }
        let theta_dc: Vec<f64> = self.layout.theta.iter().map(|c| c.map_or(0.0, |c| x[c])).collect();
        let mut flow_from = vec![0.0; case.branches.len()];
        let mut flow_to = vec![0.0; case.branches.len()];
        for (k, _) in case.in_service_branches() {
            let fwd = Layout::eval(&self.layout.forward(case, k), x);
            flow_from[k] = fwd;
            flow_to[k] = self.layout.back[k].map_or(-fwd, |c| x[c]);
        }
        let modeled_losses = flow_from.iter().zip(&flow_to).map(|(a, b)| a + b).sum();
        Ok(DcSolution {
            loss_model: tag,
            base_mva: case.base_mva,
            objective: generation_cost(case, &p_g_sp),
            p_g_sp,
            theta_dc,
            flow_from,
            flow_to,
            modeled_losses,
            rounds,
        })
    }
}

/// Lossless DCOPF in the angle formulation, reference angle fixed at 0.
pub fn solve_dc_base(case: &NetworkCase) -> Result<DcSolution, DcError> {
    solve_base_with(case, &DcOptions::default())
}

pub(super) fn solve_base_with(case: &NetworkCase, options: &DcOptions) -> Result<DcSolution, DcError> {
    check_capacity(case)?;
    let mut model = Model::build(case, false)?;
    let mut sol = model.solve(case, LossTag::Base, options, options.qp_tol, 1)?;
    sol.modeled_losses = 0.0;
    Ok(sol)
}

/// Directed-flow DCOPF with one tangent cut per lossy line at the
/// reference flow, plus `→p + ←p ≥ 0`.
pub fn solve_dc_lloa(case: &NetworkCase, reference: &DcSolution) -> Result<DcSolution, DcError> {
    solve_lloa_with(case, reference, &DcOptions::default())
}

pub(super) fn solve_lloa_with(case: &NetworkCase, reference: &DcSolution, options: &DcOptions) -> Result<DcSolution, DcError> {
    if reference.flow_from.len() != case.branches.len() {
        return Err(DcError::MissingReference(format!(
            "reference has {} branch flows, case has {} branches",
            reference.flow_from.len(),
            case.branches.len()
        )));
    }
    check_capacity(case)?;
    let mut model = Model::build(case, true)?;
    for k in lossy(&model) {
        model.add_cut(k, 0.0);
        if reference.flow_from[k] != 0.0 {
            model.add_cut(k, reference.flow_from[k]);
        }
    }
    model.solve(case, LossTag::Lloa, options, options.qp_tol, 1)
}

/// Slack (p.u.) beyond which an old tangent cut is dropped.
const CUT_SLACK: f64 = 1e-6;

fn lossy(model: &Model) -> Vec<usize> {
    (0..model.layout.back.len()).filter(|&k| model.layout.back[k].is_some()).collect()
}

/// Directed-flow DCOPF with `→p + ←p ≥ r (→p)²` on every lossy line.
///
/// The quadratic constraint is imposed through tangent cuts, starting from
/// the lossless flows and adding a cut at each line's current flow until the
/// modeled losses settle within `tol_loss` (relative) and match `Σ r (→p)²`.
pub fn solve_dc_lqcp(case: &NetworkCase, tol_loss: f64) -> Result<DcSolution, DcError> {
    solve_dc_lqcp_with(case, &DcOptions { tol_loss, ..DcOptions::default() })
}

pub fn solve_dc_lqcp_with(case: &NetworkCase, options: &DcOptions) -> Result<DcSolution, DcError> {
    let tol_loss = options.tol_loss;
    if !(tol_loss > 0.0) {
        return Err(DcError::SolverFailure(format!("tol_loss must be positive, got {tol_loss}")));
    }
    let start = solve_base_with(case, options)?;
    let mut model = Model::build(case, true)?;
    let lines = lossy(&model);
    for &k in &lines {
        model.add_cut(k, 0.0);
        if start.flow_from[k] != 0.0 {
            model.add_cut(k, start.flow_from[k]);
        }
    }
    // Cut gaps are measured against the QP solution, so solve more tightly
    // than the loss tolerance.
    let qp_tol = options.qp_tol.min(0.1 * tol_loss);
    let mut previous: Option<f64> = None;
    for round in 1..=options.max_cut_rounds {
        let mut sol = model.solve(case, LossTag::Lqcp, options, qp_tol, round)?;
        let losses = sol.modeled_losses;
        let scale = losses.abs().max(1e-12);
        let quadratic: f64 = lines.iter().map(|&k| case.branches[k].r * sol.flow_from[k].powi(2)).sum();
        let tight = (quadratic - losses).abs() <= 10.0 * tol_loss * scale;
        let settled = previous.is_some_and(|p| (losses - p).abs() <= tol_loss * scale);
        let threshold = tol_loss * scale / lines.len().max(1) as f64;
        // far-off tangents only slow the QP down
        model.prune_cuts(case, &sol, CUT_SLACK);
        let mut added = 0;
        for &k in &lines {
            let f = sol.flow_from[k];
            let gap = case.branches[k].r * f * f - (f + sol.flow_to[k]);
            if gap > threshold {
                model.add_cut(k, f);
                added += 1;
            }
        }
        if (tight && settled) || added == 0 {
            sol.rounds = round;
            return Ok(sol);
        }
        previous = Some(losses);
    }
    Err(DcError::CutLoopDiverged {
        rounds: options.max_cut_rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dc::testing::{congested_three_bus, two_bus};
    use crate::fixtures::{generator, linear_cost, ref_bus};

    #[test]
    fn single_bus_balance_forces_dispatch() {
        let mut b = ref_bus(1);
        b.p_d = 0.5;
        let case = NetworkCase::new("one", 100.0, vec![b], vec![], vec![generator(1, 0.0, 1.0, linear_cost(10.0))]).unwrap();
        let sol = solve_dc_base(&case).unwrap();
        assert!((sol.p_g_sp[0] - 0.5).abs() < 1e-8);
        assert!((sol.objective - 500.0).abs() < 1e-5);
        assert_eq!(sol.modeled_losses, 0.0);
    }

    #[test]
    fn base_is_lossless() {
        let case = two_bus(0.01, 0.5);
        let sol = solve_dc_base(&case).unwrap();
        assert!((sol.total_generation() - 0.5).abs() < 1e-8);
        assert!((sol.flow_from[0] - 0.5).abs() < 1e-8);
        assert_eq!(sol.flow_to[0], -sol.flow_from[0]);
        assert!((sol.theta_dc[1] + 0.05).abs() < 1e-8);
    }

    #[test]
    fn congestion_binds_the_cheap_unit() {
        // f12 = (1 + P1) / 3 on the equal-reactance triangle, so P1 ≤ 3·0.4 − 1
        let case = congested_three_bus(0.4);
        let sol = solve_dc_base(&case).unwrap();
        assert!((sol.p_g_sp[0] - 0.2).abs() < 1e-6);
        assert!((sol.flow_from[0] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        let case = two_bus(0.01, 5.0);
        assert!(matches!(solve_dc_base(&case), Err(DcError::InfeasibleDispatch(_))));
    }

    #[test]
    fn lqcp_two_bus_matches_fixed_point() {
        // p = 0.5 + r p², smaller root
        let r: f64 = 0.01;
        let want = (1.0 - (1.0 - 4.0 * r * 0.5).sqrt()) / (2.0 * r);
        let sol = solve_dc_lqcp(&two_bus(r, 0.5), 1e-8).unwrap();
        assert!((sol.p_g_sp[0] - want).abs() < 1e-7, "{}", sol.p_g_sp[0]);
        assert!((sol.modeled_losses - r * want * want).abs() < 1e-8);
        let line = sol.flow_from[0] + sol.flow_to[0];
        assert!(line >= r * sol.flow_from[0].powi(2) - 1e-6);
    }

    #[test]
    fn lossless_lines_reduce_lqcp_to_base() {
        let case = two_bus(0.0, 0.5);
        let base = solve_dc_base(&case).unwrap();
        let lqcp = solve_dc_lqcp(&case, 1e-8).unwrap();
        assert!((base.objective - lqcp.objective).abs() < 1e-6);
        assert_eq!(lqcp.flow_to[0], -lqcp.flow_from[0]);
    }

    #[test]
    fn lloa_two_bus_cut_at_base_flow() {
        let r = 0.01;
        let case = two_bus(r, 0.5);
        let base = solve_dc_base(&case).unwrap();
        let sol = solve_dc_lloa(&case, &base).unwrap();
        // f = 0.5 + r (2·0.5·f − 0.25)  =>  f = (0.5 − 0.25 r) / (1 − r)
        let f = (0.5 - 0.25 * r) / (1.0 - r);
        assert!((sol.flow_from[0] - f).abs() < 1e-8);
        let cut = r * (2.0 * 0.5 * f - 0.25);
        assert!((sol.modeled_losses - cut).abs() < 1e-8);
    }

    #[test]
    fn lloa_with_zero_reference_equals_base() {
        let case = two_bus(0.01, 0.5);
        let base = solve_dc_base(&case).unwrap();
        let mut zero = base.clone();
        zero.flow_from.iter_mut().for_each(|f| *f = 0.0);
        let sol = solve_dc_lloa(&case, &zero).unwrap();
        assert!((sol.objective - base.objective).abs() < 1e-8 * base.objective);
    }
}
