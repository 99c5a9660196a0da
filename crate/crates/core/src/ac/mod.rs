//! Newton-Raphson AC power flow with optional headroom-based distributed
//! slack and PV/PQ switching on reactive limits.

mod newton;
mod slack;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dc::DcSolution;
use crate::grid::{build_admittance, AdmittanceMatrix, BusRole, GridError, NetworkCase};

pub use slack::{distribute_slack, SlackAllocation, SlackMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcVariant {
    /// Single slack, no reactive limits.
    #[serde(rename = "AC_BASE")]
    Base,
    /// Single slack with PV/PQ switching.
    #[serde(rename = "AC_BTS")]
    Bts,
    /// Distributed slack, no reactive limits.
    #[serde(rename = "AC_DS")]
    Ds,
    /// Distributed slack with PV/PQ switching.
    #[serde(rename = "AC_SPF")]
    Spf,
}

impl AcVariant {
    pub const ALL: [AcVariant; 4] = [AcVariant::Base, AcVariant::Bts, AcVariant::Ds, AcVariant::Spf];

    pub fn distributed(self) -> bool {
        matches!(self, AcVariant::Ds | AcVariant::Spf)
    }

    pub fn switching(self) -> bool {
        matches!(self, AcVariant::Bts | AcVariant::Spf)
    }

    pub fn label(self) -> &'static str {
        match self {
            AcVariant::Base => "AC_BASE",
            AcVariant::Bts => "AC_BTS",
            AcVariant::Ds => "AC_DS",
            AcVariant::Spf => "AC_SPF",
        }
    }
}

impl std::fmt::Display for AcVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum WarmStart {
    /// `|V| = 1` (controlled buses at their setpoint), all angles 0.
    #[default]
    Flat,
    /// Magnitudes and angles of an earlier solution; controlled buses are
    /// still reset to their setpoint.
    FromState { vm: Vec<f64>, va: Vec<f64> },
}

impl WarmStart {
    pub fn from_state(state: &PowerFlowState) -> Self {
        WarmStart::FromState {
            vm: state.vm.clone(),
            va: state.va.clone(),
        }
    }
}

/// Voltage held at generator buses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VoltageTarget {
    /// 1.0 p.u. at every voltage-controlled bus.
    #[default]
    Nominal,
    /// The `VG` column of the first in-service generator at the bus.
    Setpoint,
}

/// When distributed-slack participation factors are recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ParticipationUpdate {
    /// From the fixed setpoints, once per switching round.
    #[default]
    PerRound,
    /// From the headroom left at the current dispatch, before every Newton
    /// step.
    PerIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub eps_q: f64,
    pub eps_v: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub warm_start: WarmStart,
    pub voltage_target: VoltageTarget,
    pub participation: ParticipationUpdate,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            eps_q: 1e-4,
            eps_v: 1e-5,
            max_inner: 30,
            max_outer: 50,
            warm_start: WarmStart::Flat,
            voltage_target: VoltageTarget::Nominal,
            participation: ParticipationUpdate::PerRound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clamp {
    Free,
    AtQmax,
    AtQmin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    pub variant: AcVariant,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub bus_types: Vec<BusRole>,
    pub clamp: Vec<Clamp>,
    pub converged: bool,
    /// Newton iterations summed over all switching rounds.
    pub inner_iters: usize,
    /// Power flow solves, one per switching round.
    pub outer_iters: usize,
    /// PV/PQ transitions over the whole run.
    pub switches: usize,
    pub allocation: SlackAllocation,
    /// `‖mismatch‖∞` before every Newton step.
    pub residual_history: Vec<f64>,
}

impl PowerFlowState {
    pub fn voltages(&self) -> Vec<Complex64> {
        newton::voltages(&self.vm, &self.va)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcError {
    #[error("Newton iterations diverged after {iterations} steps (mismatch {mismatch:e})")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("switching still active after {rounds} rounds")]
    SwitchLimit { rounds: usize },
    #[error("singular power flow Jacobian")]
    SingularJacobian,
    #[error("no in-service generator available for the slack")]
    NoGenerators,
    #[error("setpoints cover {got} generators, case has {want}")]
    SetpointMismatch { got: usize, want: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Which buses regulate voltage, and at what magnitude.
struct Control {
    gens_at: Vec<Vec<usize>>,
    controlled: Vec<bool>,
    v_sp: Vec<f64>,
}

impl Control {
    fn new(case: &NetworkCase, target: VoltageTarget) -> Self {
        let gens_at = case.generators_by_bus();
        let controlled: Vec<bool> = case
            .buses
            .iter()
            .zip(&gens_at)
            .map(|(b, g)| b.role != BusRole::Pq && !g.is_empty())
            .collect();
        let v_sp = gens_at
            .iter()
            .zip(&controlled)
            .map(|(g, &c)| match (c, target) {
                (true, VoltageTarget::Setpoint) => case.generators[g[0]].v_setpoint,
                _ => 1.0,
            })
            .collect();
        Self {
            gens_at,
            controlled,
            v_sp,
        }
    }
}

/// Bus type assignment and clamp state after one switching round.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub bus_types: Vec<BusRole>,
    pub clamp: Vec<Clamp>,
    pub switch_count: usize,
}

/// Evaluates every voltage-controlled non-REF bus at once.
///
/// A PV bus whose total reactive output leaves `[Σq_min − ε_q, Σq_max + ε_q]`
/// becomes PQ with its units clamped at the violated bound. A clamped bus
/// returns to PV once its voltage has moved past the setpoint by more than
/// `ε_v` in the relieving direction (above it for `AtQmax`, below it for
/// `AtQmin`); landing exactly on the deadband edge keeps it clamped.
pub fn switching_round(case: &NetworkCase, state: &PowerFlowState, options: &SolverOptions) -> SwitchOutcome {
    let control = Control::new(case, options.voltage_target);
    let mut bus_types = state.bus_types.clone();
    let mut clamp = state.clamp.clone();
    let mut switch_count = 0;
    for i in 0..case.n_bus() {
        if !control.controlled[i] || bus_types[i] == BusRole::Ref {
            continue;
        }
        let gens = &control.gens_at[i];
        let next = match (bus_types[i], clamp[gens[0]]) {
            (BusRole::Pv, _) => {
                let q: f64 = gens.iter().map(|&g| state.q_g[g]).sum();
                let q_max: f64 = gens.iter().map(|&g| case.generators[g].q_max).sum();
                let q_min: f64 = gens.iter().map(|&g| case.generators[g].q_min).sum();
                if q > q_max + options.eps_q {
                    Some((BusRole::Pq, Clamp::AtQmax))
                } else if q < q_min - options.eps_q {
                    Some((BusRole::Pq, Clamp::AtQmin))
                } else {
                    None
                }
            }
            (BusRole::Pq, Clamp::AtQmax) if state.vm[i] > control.v_sp[i] + options.eps_v => Some((BusRole::Pv, Clamp::Free)),
            (BusRole::Pq, Clamp::AtQmin) if state.vm[i] < control.v_sp[i] - options.eps_v => Some((BusRole::Pv, Clamp::Free)),
            _ => None,
        };
        if let Some((role, c)) = next {
            bus_types[i] = role;
            gens.iter().for_each(|&g| clamp[g] = c);
            switch_count += 1;
        }
    }
    SwitchOutcome {
        bus_types,
        clamp,
        switch_count,
    }
}

/// Reactive output of a unit that is not regulating voltage.
fn fixed_q(case: &NetworkCase, clamp: &[Clamp], g: usize) -> f64 {
    let gen = &case.generators[g];
    match clamp[g] {
        Clamp::AtQmax => gen.q_max,
        Clamp::AtQmin => gen.q_min,
        Clamp::Free => gen.q_g,
    }
}

/// Splits the reactive output required at each regulating bus over its
/// units in proportion to their reactive ranges.
fn assign_reactive(case: &NetworkCase, control: &Control, types: &[BusRole], clamp: &[Clamp], s: &[Complex64]) -> Vec<f64> {
    let mut q_g = vec![0.0; case.generators.len()];
    for (i, gens) in control.gens_at.iter().enumerate() {
        if gens.is_empty() {
            continue;
        }
        if !(control.controlled[i] && types[i] != BusRole::Pq) {
            for &g in gens {
                q_g[g] = fixed_q(case, clamp, g);
            }
            continue;
        }
        let q_bus = s[i].im + case.buses[i].q_d;
        let q_min: f64 = gens.iter().map(|&g| case.generators[g].q_min).sum();
        let range: f64 = gens.iter().map(|&g| case.generators[g].q_max - case.generators[g].q_min).sum();
        for &g in gens {
            let gen = &case.generators[g];
            q_g[g] = if gens.len() == 1 {
                q_bus
            } else if range.is_finite() && range > 0.0 {
                gen.q_min + (q_bus - q_min) * (gen.q_max - gen.q_min) / range
            } else {
                q_bus / gens.len() as f64
            };
        }
    }
    q_g
}

fn bus_participation(case: &NetworkCase, pi_g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; case.n_bus()];
    for (g, gen) in case.in_service_generators() {
        out[case.idx(gen.bus)] += pi_g[g];
    }
    out
}

/// Solves the AC power flow for fixed DC setpoints.
///
/// Returns `Ok` with `converged = false` when Newton stalls without
/// diverging; hard failures are errors.
pub fn run_acpf(case: &NetworkCase, setpoints: &DcSolution, variant: AcVariant, options: &SolverOptions) -> Result<PowerFlowState, AcError> {
    let y = build_admittance(case)?;
    run_acpf_with(case, &y, &setpoints.p_g_sp, variant, options)
}

/// As [`run_acpf`] with a prebuilt admittance matrix and raw setpoints.
pub fn run_acpf_with(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    p_sp: &[f64],
    variant: AcVariant,
    options: &SolverOptions,
) -> Result<PowerFlowState, AcError> {
    let n_gen = case.generators.len();
    if p_sp.len() != n_gen {
        return Err(AcError::SetpointMismatch { got: p_sp.len(), want: n_gen });
    }
    case.check_connected()?;
    let p_sp: Vec<f64> = (0..n_gen).map(|g| if case.generators[g].in_service { p_sp[g] } else { 0.0 }).collect();
    let control = Control::new(case, options.voltage_target);
    let ref_bus = case.ref_bus();
    let distributed = variant.distributed();

    let mut types: Vec<BusRole> = (0..case.n_bus())
        .map(|i| {
            if i == ref_bus {
                BusRole::Ref
            } else if control.controlled[i] {
                BusRole::Pv
            } else {
                BusRole::Pq
            }
        })
        .collect();
    let mut clamp = vec![Clamp::Free; n_gen];

    let (mut vm, mut va) = match &options.warm_start {
        WarmStart::FromState { vm, va } if vm.len() == case.n_bus() && va.len() == case.n_bus() => (vm.clone(), va.clone()),
        _ => (vec![1.0; case.n_bus()], vec![0.0; case.n_bus()]),
    };
    for i in 0..case.n_bus() {
        if control.controlled[i] {
            vm[i] = control.v_sp[i];
        }
    }

    let slack_gen = control.gens_at[ref_bus].first().copied();
    let mut allocation = if distributed {
        distribute_slack(&case.generators, &p_sp, 0.0)?
    } else {
        let g = slack_gen.ok_or(AcError::NoGenerators)?;
        let mut pi_g = vec![0.0; n_gen];
        pi_g[g] = 1.0;
        SlackAllocation { pi_g, ell_tot: 0.0, mode: SlackMode::SingleSlack }
    };

    let mut history = Vec::new();
    let mut inner_iters = 0;
    let mut switches = 0;
    let mut ell = 0.0;
    for outer in 1..=options.max_outer.max(1) {
        let mut inj = newton::Injections {
            p: case.buses.iter().map(|b| -b.p_d).collect(),
            q: case.buses.iter().map(|b| -b.q_d).collect(),
            pi_bus: if distributed { bus_participation(case, &allocation.pi_g) } else { vec![0.0; case.n_bus()] },
        };
        for (g, gen) in case.in_service_generators() {
            let i = case.idx(gen.bus);
            inj.p[i] += p_sp[g];
            if types[i] == BusRole::Pq {
                inj.q[i] += fixed_q(case, &clamp, g);
            }
        }
        let layout = newton::Layout::new(&types, distributed);
        let mut live_pi = allocation.pi_g.clone();
        let mut per_iteration = |ell: f64| {
            let current: Vec<f64> = p_sp.iter().zip(&live_pi).map(|(p, pi)| p + pi * ell).collect();
            if let Ok(a) = distribute_slack(&case.generators, &current, ell) {
                live_pi = a.pi_g;
            }
            bus_participation(case, &live_pi)
        };
        let per_iter = distributed && options.participation == ParticipationUpdate::PerIteration;
        let refresh: Option<&mut dyn FnMut(f64) -> Vec<f64>> = per_iter.then_some(&mut per_iteration as _);
        let outcome = newton::solve(y, &layout, &mut inj, &mut vm, &mut va, &mut ell, options.tol, options.max_inner, &mut history, refresh)?;
        if per_iter {
            allocation.pi_g = live_pi;
        }
        inner_iters += outcome.iterations;

        let s = newton::injected_power(y, &newton::voltages(&vm, &va));
        let q_g = assign_reactive(case, &control, &types, &clamp, &s);
        let p_g = if distributed {
            allocation.ell_tot = ell;
            allocation.dispatch(&p_sp)
        } else {
            let g = slack_gen.ok_or(AcError::NoGenerators)?;
            let others: f64 = control.gens_at[ref_bus].iter().filter(|&&o| o != g).map(|&o| p_sp[o]).sum();
            let mut p_g = p_sp.clone();
            p_g[g] = s[ref_bus].re + case.buses[ref_bus].p_d - others;
            allocation.ell_tot = p_g[g] - p_sp[g];
            p_g
        };
        let mut state = PowerFlowState {
            variant,
            vm: vm.clone(),
            va: va.clone(),
            p_g,
            q_g,
            bus_types: types.clone(),
            clamp: clamp.clone(),
            converged: outcome.converged,
            inner_iters,
            outer_iters: outer,
            switches,
            allocation: allocation.clone(),
            residual_history: history.clone(),
        };
        if !outcome.converged || !variant.switching() {
            return Ok(state);
        }
        let round = switching_round(case, &state, options);
        if round.switch_count == 0 {
            return Ok(state);
        }
        if outer == options.max_outer {
            state.converged = false;
            return Err(AcError::SwitchLimit { rounds: outer });
        }
        switches += round.switch_count;
        for i in 0..case.n_bus() {
            if round.bus_types[i] == BusRole::Pv && types[i] == BusRole::Pq {
                vm[i] = control.v_sp[i];
            }
        }
        types = round.bus_types;
        clamp = round.clamp;
        if distributed && options.participation == ParticipationUpdate::PerRound {
            allocation = SlackAllocation { ell_tot: ell, ..distribute_slack(&case.generators, &p_sp, 0.0)? };
        }
    }
    Err(AcError::SwitchLimit { rounds: options.max_outer })
}

/// `injection − calculated` on the equations a state was solved for: active
/// power at non-REF buses (every bus under distributed slack) and reactive
/// power at PQ buses.
pub fn compute_mismatch(case: &NetworkCase, state: &PowerFlowState) -> Result<Vec<f64>, AcError> {
    let y = build_admittance(case)?;
    let s = newton::injected_power(&y, &state.voltages());
    let distributed = state.allocation.mode != SlackMode::SingleSlack;
    let mut p: Vec<f64> = case.buses.iter().map(|b| -b.p_d).collect();
    let mut q: Vec<f64> = case.buses.iter().map(|b| -b.q_d).collect();
    for (g, gen) in case.in_service_generators() {
        let i = case.idx(gen.bus);
        p[i] += state.p_g[g];
        q[i] += state.q_g[g];
    }
    let mut out = Vec::new();
    for i in 0..case.n_bus() {
        if distributed || state.bus_types[i] != BusRole::Ref {
            out.push(p[i] - s[i].re);
        }
    }
    for i in 0..case.n_bus() {
        if state.bus_types[i] == BusRole::Pq {
            out.push(q[i] - s[i].im);
        }
    }
    Ok(out)
}
