//! ACOPF inequality checks on a converged AC state, and dispatch metrics
//! against an external reference.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ac::PowerFlowState;
use crate::grid::{build_admittance, GridError, NetworkCase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("state did not converge")]
    NotConverged,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reference cost must be positive")]
    ZeroReferenceCost,
    #[error("reference dispatch: {0}")]
    Reference(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Active,
    Reactive,
    Voltage,
    Thermal,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Active, Category::Reactive, Category::Voltage, Category::Thermal];

    pub fn label(self) -> &'static str {
        match self {
            Category::Active => "active",
            Category::Reactive => "reactive",
            Category::Voltage => "voltage",
            Category::Thermal => "thermal",
        }
    }
}

/// One element outside its limit: generator index, bus id or branch index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub element: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryReport {
    pub count: usize,
    pub max_violation: f64,
    pub sum_violation: f64,
    pub details: Vec<Violation>,
}

impl CategoryReport {
    pub fn from_details(details: Vec<Violation>) -> Self {
        Self {
            count: details.len(),
            max_violation: details.iter().fold(0.0, |m, v| m.max(v.magnitude)),
            sum_violation: details.iter().map(|v| v.magnitude).fold(0.0, |a, b| a + b),
            details,
        }
    }
}

/// Violations per category. Magnitudes are p.u. except thermal (percent of
/// the rating).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    pub active: CategoryReport,
    pub reactive: CategoryReport,
    pub voltage: CategoryReport,
    pub thermal: CategoryReport,
}

impl ViolationReport {
    pub fn get(&self, c: Category) -> &CategoryReport {
        match c {
            Category::Active => &self.active,
            Category::Reactive => &self.reactive,
            Category::Voltage => &self.voltage,
            Category::Thermal => &self.thermal,
        }
    }

    pub fn total_count(&self) -> usize {
        Category::ALL.iter().map(|&c| self.get(c).count).sum()
    }

    /// One row per category in the layout of the violation tables.
    pub fn csv_rows(&self, dc_variant: &str, ac_variant: &str) -> Vec<ViolationRow> {
        Category::ALL
            .iter()
            .map(|&c| {
                let r = self.get(c);
                ViolationRow {
                    dc_variant: dc_variant.to_string(),
                    ac_variant: ac_variant.to_string(),
                    category: c,
                    count: r.count,
                    max: r.max_violation,
                    sum: r.sum_violation,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    pub dc_variant: String,
    pub ac_variant: String,
    pub category: Category,
    pub count: usize,
    pub max: f64,
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationOptions {
    /// Magnitudes at or below this are solver noise (p.u.).
    pub threshold: f64,
    /// Same for thermal overloads, in percent.
    pub thermal_threshold_pct: f64,
    /// Reactive excursions inside the switching deadband are not counted.
    pub reactive_deadband: f64,
}

impl Default for ViolationOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            thermal_threshold_pct: 1e-4,
            reactive_deadband: 1e-4,
        }
    }
}

fn outside(x: f64, lo: f64, hi: f64) -> f64 {
    (x - hi).max(lo - x).max(0.0)
}

pub fn check_violations(case: &NetworkCase, state: &PowerFlowState) -> Result<ViolationReport, FeasibilityError> {
    check_violations_with(case, state, &ViolationOptions::default())
}

pub fn check_violations_with(case: &NetworkCase, state: &PowerFlowState, opts: &ViolationOptions) -> Result<ViolationReport, FeasibilityError> {
    if !state.converged {
        return Err(FeasibilityError::NotConverged);
    }
    if state.vm.len() != case.n_bus() || state.p_g.len() != case.generators.len() {
        return Err(FeasibilityError::DimensionMismatch("state does not match case".into()));
    }
    let keep = |element: usize, magnitude: f64, floor: f64| (magnitude > floor).then_some(Violation { element, magnitude });

    let active = case
        .in_service_generators()
        .filter_map(|(g, gen)| keep(g, outside(state.p_g[g], gen.p_min, gen.p_max), opts.threshold))
        .collect();
    let reactive = case
        .in_service_generators()
        .filter_map(|(g, gen)| keep(g, outside(state.q_g[g], gen.q_min, gen.q_max), opts.threshold + opts.reactive_deadband))
        .collect();
    let voltage = case
        .buses
        .iter()
        .zip(&state.vm)
        .filter_map(|(b, &vm)| keep(b.id, outside(vm, b.v_min, b.v_max), opts.threshold))
        .collect();

    let y = build_admittance(case)?;
    let v = state.voltages();
    let mut thermal = Vec::new();
    for (k, br) in case.in_service_branches() {
        let Some(rate) = br.rate_a.filter(|&r| r > 0.0) else { continue };
        let ba = y.branches[k].as_ref().expect("in-service branch has a two-port");
        let (sf, st) = ba.end_flows(&v);
        let over = (sf.norm().max(st.norm()) - rate) / rate * 100.0;
        if let Some(viol) = keep(k, over.max(0.0), opts.thermal_threshold_pct) {
            thermal.push(viol);
        }
    }
    Ok(ViolationReport {
        active: CategoryReport::from_details(active),
        reactive: CategoryReport::from_details(reactive),
        voltage: CategoryReport::from_details(voltage),
        thermal: CategoryReport::from_details(thermal),
    })
}

/// Ground-truth dispatch from an external ACOPF solve, in p.u. on the case
/// base.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDispatch {
    pub p_g_ref: Vec<f64>,
    pub cost_ref: f64,
    pub source: String,
}

#[derive(Debug, Deserialize)]
struct ReferenceFile {
    case: String,
    generators: Vec<ReferenceGen>,
    cost: f64,
}

#[derive(Debug, Deserialize)]
struct ReferenceGen {
    bus: usize,
    index: usize,
    pg_mw: f64,
}

impl ReferenceDispatch {
    /// Parses the JSON form `{"case", "generators": [{"bus", "index", "pg_mw"}], "cost"}`,
    /// where `index` is the 0-based generator row. Every in-service
    /// generator of `case` must be listed.
    pub fn from_json(text: &str, case: &NetworkCase) -> Result<Self, FeasibilityError> {
        let file: ReferenceFile = serde_json::from_str(text).map_err(|e| FeasibilityError::Reference(e.to_string()))?;
        let mut p_g_ref = vec![f64::NAN; case.generators.len()];
        for g in &file.generators {
            let Some(gen) = case.generators.get(g.index) else {
                return Err(FeasibilityError::Reference(format!("generator index {} out of range", g.index)));
            };
            if gen.bus != g.bus {
                return Err(FeasibilityError::Reference(format!(
                    "generator {} sits at bus {}, reference says {}",
                    g.index, gen.bus, g.bus
                )));
            }
            p_g_ref[g.index] = g.pg_mw / case.base_mva;
        }
        for (g, gen) in case.generators.iter().enumerate() {
            if p_g_ref[g].is_nan() {
                if gen.in_service {
                    return Err(FeasibilityError::Reference(format!("generator {g} missing")));
                }
                p_g_ref[g] = 0.0;
            }
        }
        Ok(Self {
            p_g_ref,
            cost_ref: file.cost,
            source: file.case,
        })
    }

    pub fn read(path: impl AsRef<Path>, case: &NetworkCase) -> Result<Self, FeasibilityError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FeasibilityError::Reference(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, case)
    }
}

/// `(1/G) Σ |p_i − p_ref_i|` in p.u.
pub fn compute_mae(result: &[f64], reference: &ReferenceDispatch) -> Result<f64, FeasibilityError> {
    if result.len() != reference.p_g_ref.len() || result.is_empty() {
        return Err(FeasibilityError::DimensionMismatch(format!(
            "{} generators against {} in the reference",
            result.len(),
            reference.p_g_ref.len()
        )));
    }
    let sum: f64 = result.iter().zip(&reference.p_g_ref).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / result.len() as f64)
}

/// `|cost − cost_ref| / cost_ref · 100`.
pub fn compute_cost_difference(cost: f64, reference: &ReferenceDispatch) -> Result<f64, FeasibilityError> {
    if !(reference.cost_ref > 0.0) {
        return Err(FeasibilityError::ZeroReferenceCost);
    }
    Ok((cost - reference.cost_ref).abs() / reference.cost_ref * 100.0)
}

/// Total cost in $/h with each curve evaluated on MW output.
pub fn dispatch_cost(case: &NetworkCase, p_g: &[f64]) -> Result<f64, FeasibilityError> {
    if p_g.len() != case.generators.len() {
        return Err(FeasibilityError::DimensionMismatch(format!(
            "{} outputs for {} generators",
            p_g.len(),
            case.generators.len()
        )));
    }
    Ok(case
        .in_service_generators()
        .map(|(g, gen)| gen.cost.eval_mw(p_g[g] * case.base_mva))
        .fold(0.0, |a, b| a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ac::{run_acpf_with, AcVariant, SolverOptions};
    use crate::fixtures::{case30, two_bus, CASE118_ACOPF_REFERENCE};
    use crate::grid::CostCurve;

    fn solved(case: &NetworkCase, p_sp: &[f64]) -> PowerFlowState {
        let y = build_admittance(case).unwrap();
        run_acpf_with(case, &y, p_sp, AcVariant::Base, &SolverOptions::default()).unwrap()
    }

    fn reference(p: &[f64], cost: f64) -> ReferenceDispatch {
        ReferenceDispatch { p_g_ref: p.to_vec(), cost_ref: cost, source: "test".into() }
    }

    #[test]
    fn feasible_state_is_clean() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let report = check_violations(&case, &solved(&case, &[0.5])).unwrap();
        assert_eq!(report, ViolationReport::default());
    }

    #[test]
    fn crafted_overvoltage() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let mut state = solved(&case, &[0.5]);
        state.vm[1] = case.buses[1].v_max + 0.02;
        let report = check_violations(&case, &state).unwrap();
        assert_eq!(report.voltage.count, 1);
        assert!((report.voltage.max_violation - 0.02).abs() < 1e-12);
        assert_eq!(report.voltage.details[0].element, 2);
        assert_eq!(report.active.count + report.reactive.count, 0);
    }

    #[test]
    fn reactive_deadband_respected() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let mut state = solved(&case, &[0.5]);
        let q_max = case.generators[0].q_max;
        state.q_g[0] = q_max + 0.5e-4;
        assert_eq!(check_violations(&case, &state).unwrap().reactive.count, 0);
        state.q_g[0] = q_max + 2e-4;
        let r = check_violations(&case, &state).unwrap().reactive;
        assert_eq!(r.count, 1);
        assert!((r.max_violation - 2e-4).abs() < 1e-12);
    }

    #[test]
    fn thermal_uses_worse_end() {
        let mut case = two_bus(0.05, 0.1, 0.5, 0.2);
        let state = solved(&case, &[0.5]);
        let y = build_admittance(&case).unwrap();
        let (sf, st) = y.branches[0].unwrap().end_flows(&state.voltages());
        assert!(sf.norm() > st.norm());
        case.branches[0].rate_a = Some(st.norm());
        let t = check_violations(&case, &state).unwrap().thermal;
        assert_eq!(t.count, 1);
        let want = (sf.norm() - st.norm()) / st.norm() * 100.0;
        assert!((t.max_violation - want).abs() < 1e-9);
        // swapping the branch ends gives the same answer
        let mut flipped = case.clone();
        let br = &mut flipped.branches[0];
        std::mem::swap(&mut br.from_bus, &mut br.to_bus);
        let t2 = check_violations(&flipped, &state).unwrap().thermal;
        assert!((t2.max_violation - t.max_violation).abs() < 1e-9);
    }

    #[test]
    fn aggregates_match_details() {
        let case = case30();
        let p_sp: Vec<f64> = case.generators.iter().map(|g| g.p_g * 1.3).collect();
        let mut state = solved(&case, &p_sp);
        for v in state.vm.iter_mut().step_by(3) {
            *v += 0.08;
        }
        let report = check_violations(&case, &state).unwrap();
        assert!(report.total_count() > 0);
        for c in Category::ALL {
            let r = report.get(c);
            assert_eq!(*r, CategoryReport::from_details(r.details.clone()));
        }
        assert_eq!(report.csv_rows("DC_BASE", "AC_BASE").len(), 4);
    }

    #[test]
    fn unconverged_state_rejected() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let mut state = solved(&case, &[0.5]);
        state.converged = false;
        assert_eq!(check_violations(&case, &state), Err(FeasibilityError::NotConverged));
    }

    #[test]
    fn mae_arithmetic() {
        let r = reference(&[0.4, 0.9], 100.0);
        assert!((compute_mae(&[0.5, 0.7], &r).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(compute_mae(&[0.4, 0.9], &r).unwrap(), 0.0);
        assert!(compute_mae(&[0.4], &r).is_err());
    }

    #[test]
    fn cost_difference_arithmetic() {
        let r = reference(&[0.0], 100.0);
        assert!((compute_cost_difference(110.0, &r).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(compute_cost_difference(100.0, &r).unwrap(), 0.0);
        assert_eq!(compute_cost_difference(1.0, &reference(&[0.0], 0.0)), Err(FeasibilityError::ZeroReferenceCost));
    }

    #[test]
    fn cost_on_megawatts() {
        let mut case = two_bus(0.01, 0.1, 0.5, 0.2);
        case.generators[0].cost = CostCurve { c2: 0.1, c1: 10.0, c0: 5.0 };
        assert!((dispatch_cost(&case, &[0.2]).unwrap() - 245.0).abs() < 1e-12);
        assert_eq!(dispatch_cost(&case, &[0.0]).unwrap(), 5.0);
    }

    #[test]
    fn reference_file_parses() {
        let case = crate::fixtures::case118();
        let r = ReferenceDispatch::from_json(CASE118_ACOPF_REFERENCE, &case).unwrap();
        assert_eq!(r.p_g_ref.len(), case.generators.len());
        assert!(r.cost_ref > 1e5);
        assert!(ReferenceDispatch::from_json(CASE118_ACOPF_REFERENCE, &case30()).is_err());
    }
}
