use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::GridError;

/// Bus role as declared in the case file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusRole {
    #[serde(rename = "PQ")]
    Pq,
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "REF")]
    Ref,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub role: BusRole,
    /// Active demand (p.u.).
    pub p_d: f64,
    /// Reactive demand (p.u.).
    pub q_d: f64,
    /// Shunt conductance (p.u. at 1 p.u. voltage).
    pub gs: f64,
    /// Shunt susceptance (p.u. at 1 p.u. voltage).
    pub bs: f64,
    pub vm_init: f64,
    /// Initial angle in radians.
    pub va_init: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b_charge: f64,
    /// Apparent power rating in p.u.; `None` means unlimited.
    pub rate_a: Option<f64>,
    /// Off-nominal tap ratio; 1.0 for plain lines.
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub in_service: bool,
}

/// Polynomial generation cost evaluated on MW output.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval_mw(&self, p_mw: f64) -> f64 {
        self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_g: f64,
    pub q_g: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_setpoint: f64,
    pub in_service: bool,
    pub cost: CostCurve,
}

/// A per-unit network model. Construct through [`NetworkCase::new`] (or the
/// MATPOWER parser) so that references are validated.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    index: HashMap<usize, usize>,
}

impl NetworkCase {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, GridError> {
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return Err(GridError::MalformedCase(format!(
                "baseMVA must be positive, got {base_mva}"
            )));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (k, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(GridError::MalformedCase(format!(
                    "duplicate bus id {}",
                    bus.id
                )));
            }
            if !(bus.v_min > 0.0) {
                return Err(GridError::MalformedCase(format!(
                    "bus {} has non-positive v_min {}",
                    bus.id, bus.v_min
                )));
            }
        }
        for (k, br) in branches.iter().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return Err(GridError::DanglingReference {
                        element: format!("branch {k}"),
                        bus: end,
                    });
                }
            }
            if br.rate_a.is_some_and(|r| r < 0.0) {
                return Err(GridError::MalformedCase(format!(
                    "branch {k} has a negative rating"
                )));
            }
        }
        for (k, g) in generators.iter().enumerate() {
            if !index.contains_key(&g.bus) {
                return Err(GridError::DanglingReference {
                    element: format!("generator {k}"),
                    bus: g.bus,
                });
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(GridError::MalformedCase(format!(
                    "generator {k} has inverted limits"
                )));
            }
            if g.cost.c2 < 0.0 {
                return Err(GridError::MalformedCase(format!(
                    "generator {k} has a concave cost curve"
                )));
            }
        }
        match buses.iter().filter(|b| b.role == BusRole::Ref).count() {
            0 => return Err(GridError::NoRefBus),
            1 => {}
            n => {
                return Err(GridError::MalformedCase(format!(
                    "{n} reference buses, expected exactly one"
                )))
            }
        }
        Ok(Self {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            index,
        })
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn idx(&self, id: usize) -> usize {
        self.bus_index(id).expect("bus id validated at construction")
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn ref_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.role == BusRole::Ref)
            .expect("exactly one REF bus")
    }

    /// `(from_index, to_index)` of a branch.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        let br = &self.branches[k];
        (self.idx(br.from_bus), self.idx(br.to_bus))
    }

    pub fn in_service_generators(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators.iter().enumerate().filter(|(_, g)| g.in_service)
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.in_service)
    }

    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.p_d).sum()
    }

    /// In-service generator indices hosted by each bus, indexed by bus position.
    pub fn generators_by_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (g, gen) in self.in_service_generators() {
            out[self.idx(gen.bus)].push(g);
        }
        out
    }

    /// Copy of the case with bus demands replaced.
    pub fn with_demand(&self, p_d: &[f64], q_d: &[f64]) -> NetworkCase {
        assert_eq!(p_d.len(), self.buses.len());
        assert_eq!(q_d.len(), self.buses.len());
        let mut out = self.clone();
        for (bus, (&p, &q)) in out.buses.iter_mut().zip(p_d.iter().zip(q_d)) {
            bus.p_d = p;
            bus.q_d = q;
        }
        out
    }

    /// Checks that every in-service branch set forms one connected island.
    pub fn check_connected(&self) -> Result<(), GridError> {
        let n = self.buses.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (k, _) in self.in_service_branches() {
            let (f, t) = self.branch_ends(k);
            let (a, b) = (find(&mut parent, f), find(&mut parent, t));
            if a != b {
                parent[a] = b;
            }
        }
        let islands = (0..n).filter(|&i| find(&mut parent, i) == i).count();
        if islands > 1 {
            return Err(GridError::IslandedNetwork { islands });
        }
        Ok(())
    }
}
