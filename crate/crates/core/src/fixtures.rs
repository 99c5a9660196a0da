//! Bundled MATPOWER cases and small hand-built networks for tests,
//! benchmarks and examples.

use crate::grid::{parse_matpower_case, Branch, Bus, BusRole, CostCurve, Generator, NetworkCase};

pub const CASE30: &str = include_str!("../data/case30.m");
pub const CASE39: &str = include_str!("../data/case39.m");
pub const CASE118: &str = include_str!("../data/case118.m");
/// ACOPF dispatch for `case118`, kept as an external ground truth.
pub const CASE118_ACOPF_REFERENCE: &str = include_str!("../data/case118_acopf_reference.json");

/// Looks up a bundled case by name (`case30`, `case39`, `case118`).
pub fn builtin(name: &str) -> Option<NetworkCase> {
    let text = match name {
        "case30" => CASE30,
        "case39" => CASE39,
        "case118" => CASE118,
        _ => return None,
    };
    Some(parse_matpower_case(text).expect("bundled case parses"))
}

pub fn case30() -> NetworkCase {
    builtin("case30").unwrap()
}

pub fn case39() -> NetworkCase {
    builtin("case39").unwrap()
}

pub fn case118() -> NetworkCase {
    builtin("case118").unwrap()
}

pub fn bus(id: usize, role: BusRole, p_d: f64, q_d: f64) -> Bus {
    Bus {
        id,
        role,
        p_d,
        q_d,
        gs: 0.0,
        bs: 0.0,
        vm_init: 1.0,
        va_init: 0.0,
        v_min: 0.9,
        v_max: 1.1,
    }
}

pub fn ref_bus(id: usize) -> Bus {
    bus(id, BusRole::Ref, 0.0, 0.0)
}

pub fn pq_bus(id: usize, p_d: f64) -> Bus {
    bus(id, BusRole::Pq, p_d, 0.0)
}

pub fn line(from: usize, to: usize, r: f64, x: f64) -> Branch {
    Branch {
        from_bus: from,
        to_bus: to,
        r,
        x,
        b_charge: 0.0,
        rate_a: None,
        tap: 1.0,
        shift: 0.0,
        in_service: true,
    }
}

pub fn generator(bus: usize, p_min: f64, p_max: f64, cost: CostCurve) -> Generator {
    Generator {
        bus,
        p_g: 0.0,
        q_g: 0.0,
        p_min,
        p_max,
        q_min: -10.0,
        q_max: 10.0,
        v_setpoint: 1.0,
        in_service: true,
        cost,
    }
}

pub fn linear_cost(c1: f64) -> CostCurve {
    CostCurve { c2: 0.0, c1, c0: 0.0 }
}

/// A generator-free network, for matrix-only tests.
pub fn simple_case(buses: Vec<Bus>, branches: Vec<Branch>) -> NetworkCase {
    NetworkCase::new("test", 100.0, buses, branches, Vec::new()).expect("valid test case")
}

/// Slack generator at bus 1 feeding a PQ load `p_d + j q_d` at bus 2
/// through `z = r + jx`.
pub fn two_bus(r: f64, x: f64, p_d: f64, q_d: f64) -> NetworkCase {
    NetworkCase::new(
        "two_bus",
        100.0,
        vec![ref_bus(1), bus(2, BusRole::Pq, p_d, q_d)],
        vec![line(1, 2, r, x)],
        vec![generator(1, 0.0, 2.0, linear_cost(10.0))],
    )
    .expect("valid two-bus case")
}
