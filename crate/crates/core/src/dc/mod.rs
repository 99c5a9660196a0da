//! DC optimal power flow with four loss treatments.
//!
//! * `Base`: lossless angle formulation.
//! * `Lllf`: linear loss factors about a reference point, one system balance.
//! * `Lqcp`: directed flows with the convex loss constraint
//!   `→p + ←p ≥ r·(→p)²`, enforced by a tangent-cut loop.
//! * `Lloa`: the same directed-flow model with a single tangent cut per line
//!   at the reference flow.

mod angle;
mod lllf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, NetworkCase};
use crate::qp::{QpError, QpSolution, QpStatus};

pub use angle::{solve_dc_base, solve_dc_lloa, solve_dc_lqcp, solve_dc_lqcp_with};
pub use lllf::{compute_loss_factors, solve_dc_lllf, LossFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossTag {
    #[serde(rename = "DC_BASE")]
    Base,
    #[serde(rename = "DC_LLLF")]
    Lllf,
    #[serde(rename = "DC_LQCP")]
    Lqcp,
    #[serde(rename = "DC_LLOA")]
    Lloa,
}

impl LossTag {
    pub const ALL: [LossTag; 4] = [LossTag::Base, LossTag::Lllf, LossTag::Lqcp, LossTag::Lloa];

    pub fn label(self) -> &'static str {
        match self {
            LossTag::Base => "DC_BASE",
            LossTag::Lllf => "DC_LLLF",
            LossTag::Lqcp => "DC_LQCP",
            LossTag::Lloa => "DC_LLOA",
        }
    }
}

impl std::fmt::Display for LossTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Loss treatment plus the linearization point used by `Lllf` and `Lloa`.
/// Without a reference, one is produced by a `Base` solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    pub tag: LossTag,
    pub reference: Option<DcSolution>,
}

impl LossModel {
    pub fn new(tag: LossTag) -> Self {
        Self { tag, reference: None }
    }

    pub fn with_reference(tag: LossTag, reference: DcSolution) -> Self {
        Self {
            tag,
            reference: Some(reference),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcOptions {
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    /// Relative loss change that ends the LQCP cut loop.
    pub tol_loss: f64,
    pub max_cut_rounds: usize,
}

impl Default for DcOptions {
    fn default() -> Self {
        Self {
            qp_tol: crate::qp::DEFAULT_TOL,
            qp_max_iter: crate::qp::DEFAULT_MAX_ITER,
            tol_loss: 1e-8,
            max_cut_rounds: 50,
        }
    }
}

/// A solved dispatch. Everything is per unit except `objective` ($/h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DcSolutionRecord", try_from = "DcSolutionRecord")]
pub struct DcSolution {
    pub loss_model: LossTag,
    pub base_mva: f64,
    /// Setpoint of every generator in case order; out-of-service units are 0.
    pub p_g_sp: Vec<f64>,
    pub theta_dc: Vec<f64>,
    /// `→p`: flow leaving the from bus.
    pub flow_from: Vec<f64>,
    /// `←p`: flow leaving the to bus. Equals `−→p` on lossless branches.
    pub flow_to: Vec<f64>,
    pub modeled_losses: f64,
    pub objective: f64,
    /// QP solves (cut rounds for LQCP, otherwise 1).
    pub rounds: usize,
}

impl DcSolution {
    /// Net active injection at every bus, `C_g p_g − p_d`.
    pub fn bus_injections(&self, case: &NetworkCase) -> Vec<f64> {
        let mut p: Vec<f64> = case.buses.iter().map(|b| -b.p_d).collect();
        for (g, gen) in case.in_service_generators() {
            p[case.idx(gen.bus)] += self.p_g_sp[g];
        }
        p
    }

    pub fn total_generation(&self) -> f64 {
        self.p_g_sp.iter().sum()
    }
}

/// On-disk form of [`DcSolution`], in MW.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DcSolutionRecord {
    loss_model: LossTag,
    base_mva: f64,
    objective: f64,
    modeled_losses_mw: f64,
    p_g_mw: Vec<f64>,
    flow_from_mw: Vec<f64>,
    flow_to_mw: Vec<f64>,
    theta_dc_rad: Vec<f64>,
    rounds: usize,
}

impl From<DcSolution> for DcSolutionRecord {
    fn from(s: DcSolution) -> Self {
        let mw = |v: Vec<f64>| v.into_iter().map(|x| x * s.base_mva).collect();
        Self {
            loss_model: s.loss_model,
            base_mva: s.base_mva,
            objective: s.objective,
            modeled_losses_mw: s.modeled_losses * s.base_mva,
            p_g_mw: mw(s.p_g_sp),
            flow_from_mw: mw(s.flow_from),
            flow_to_mw: mw(s.flow_to),
            theta_dc_rad: s.theta_dc,
            rounds: s.rounds,
        }
    }
}

impl TryFrom<DcSolutionRecord> for DcSolution {
    type Error = String;

    fn try_from(r: DcSolutionRecord) -> Result<Self, String> {
        if !(r.base_mva > 0.0) {
            return Err(format!("base_mva must be positive, got {}", r.base_mva));
        }
        let pu = |v: Vec<f64>| v.into_iter().map(|x| x / r.base_mva).collect();
        Ok(Self {
            loss_model: r.loss_model,
            base_mva: r.base_mva,
            objective: r.objective,
            modeled_losses: r.modeled_losses_mw / r.base_mva,
            p_g_sp: pu(r.p_g_mw),
            flow_from: pu(r.flow_from_mw),
            flow_to: pu(r.flow_to_mw),
            theta_dc: r.theta_dc_rad,
            rounds: r.rounds,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcError {
    #[error("dispatch infeasible: {0}")]
    InfeasibleDispatch(String),
    #[error("QP solver failed: {0}")]
    SolverFailure(String),
    #[error("LQCP cut loop did not converge after {rounds} rounds")]
    CutLoopDiverged { rounds: usize },
    #[error("reference dispatch unusable: {0}")]
    MissingReference(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<QpError> for DcError {
    fn from(e: QpError) -> Self {
        DcError::SolverFailure(e.to_string())
    }
}

fn check_status(sol: &QpSolution) -> Result<(), DcError> {
    match sol.status {
        QpStatus::Optimal => Ok(()),
        QpStatus::Infeasible => Err(DcError::InfeasibleDispatch(
            "no dispatch satisfies the balance and limits".into(),
        )),
        other => Err(DcError::SolverFailure(format!(
            "status {other:?} after {} iterations",
            sol.iterations
        ))),
    }
}

/// Necessary condition that the fleet can cover the load at all.
fn check_capacity(case: &NetworkCase) -> Result<(), DcError> {
    let cap: f64 = case.in_service_generators().map(|(_, g)| g.p_max).sum();
    let floor: f64 = case.in_service_generators().map(|(_, g)| g.p_min).sum();
    let demand = case.total_demand();
    if case.in_service_generators().next().is_none() {
        return Err(DcError::InfeasibleDispatch("no in-service generators".into()));
    }
    if demand > cap {
        return Err(DcError::InfeasibleDispatch(format!(
            "demand {demand:.6} p.u. exceeds capacity {cap:.6} p.u."
        )));
    }
    if demand < floor {
        return Err(DcError::InfeasibleDispatch(format!(
            "demand {demand:.6} p.u. is below minimum output {floor:.6} p.u."
        )));
    }
    Ok(())
}

/// Generation cost in $/h of a per-unit dispatch covering every generator.
fn generation_cost(case: &NetworkCase, p_g: &[f64]) -> f64 {
    case.in_service_generators()
        .map(|(g, gen)| gen.cost.eval_mw(p_g[g] * case.base_mva))
        .sum()
}

/// Solves the requested variant, building a `Base` reference when `Lllf` or
/// `Lloa` come without one.
pub fn solve_dc(case: &NetworkCase, model: &LossModel, options: &DcOptions) -> Result<DcSolution, DcError> {
    let reference = |case: &NetworkCase| match &model.reference {
        Some(r) => Ok(r.clone()),
        None => angle::solve_base_with(case, options),
    };
    match model.tag {
        LossTag::Base => angle::solve_base_with(case, options),
        LossTag::Lqcp => solve_dc_lqcp_with(case, options),
        LossTag::Lllf => {
            let r = reference(case)?;
            let slack = case.buses[case.ref_bus()].id;
            let factors = compute_loss_factors(case, &r, slack)?;
            lllf::solve_with(case, &factors, options)
        }
        LossTag::Lloa => {
            let r = reference(case)?;
            angle::solve_lloa_with(case, &r, options)
        }
    }
}
