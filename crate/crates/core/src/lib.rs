//! DCOPF to ACPF feasibility restoration.
//!
//! A loss-aware DC dispatch (four loss models) feeds a Newton power flow
//! with optional distributed slack and PV/PQ switching; the resulting AC
//! state is checked against every ACOPF inequality.

pub mod fixtures;
pub mod grid;
pub mod linalg;
pub mod qp;
pub mod dc;
pub mod ac;
pub mod feasibility;
pub mod scenario;
pub mod pipeline;

pub use grid::{
    build_admittance, build_ptdf, parse_matpower_case, read_matpower_case, AdmittanceMatrix,
    Branch, Bus, BusRole, CostCurve, Generator, GridError, NetworkCase, PtdfMatrix,
};
pub use dc::{solve_dc, DcError, DcOptions, DcSolution, LossModel, LossTag};
pub use ac::{run_acpf, AcError, AcVariant, PowerFlowState, SolverOptions, WarmStart};
pub use feasibility::{check_violations, Category, ReferenceDispatch, ViolationReport};
pub use scenario::{generate_batch, Scenario, ScenarioConfig};
pub use pipeline::{run_batch, run_pipeline, BatchOutput, OutputFormat, PipelineOptions, PipelineRunRecord, RunMetadata, Stage};
