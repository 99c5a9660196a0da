//! Network data: case types, the MATPOWER reader and derived matrices.

mod admittance;
mod case;
mod matpower;
mod ptdf;

pub use admittance::{build_admittance, AdmittanceMatrix, BranchAdmittance};
pub use case::{Branch, Bus, BusRole, CostCurve, Generator, NetworkCase};
pub use matpower::{parse_matpower_case, read_matpower_case};
pub use ptdf::{build_ptdf, dc_branch_flows, dc_susceptances, PtdfMatrix};
pub(crate) use ptdf::ReducedSusceptance;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("malformed case: {0}")]
    MalformedCase(String),
    #[error("unsupported cost for generator {generator}: {reason}")]
    UnsupportedCost { generator: usize, reason: String },
    #[error("{element} references unknown bus {bus}")]
    DanglingReference { element: String, bus: usize },
    #[error("case has no reference bus")]
    NoRefBus,
    #[error("branch {branch} has zero impedance")]
    SingularBranch { branch: usize },
    #[error("network splits into {islands} islands")]
    IslandedNetwork { islands: usize },
    #[error("reading case: {0}")]
    Io(String),
}
