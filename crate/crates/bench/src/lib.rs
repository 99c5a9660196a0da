//! Benchmark harness for the dispatch and power flow kernels.

use dcac_core::{fixtures, solve_dc, DcOptions, DcSolution, LossModel, LossTag, NetworkCase};

/// A bundled case with its lossless dispatch, the usual starting point for
/// power flow benchmarks.
pub fn case_with_dispatch(name: &str) -> (NetworkCase, DcSolution) {
    let case = fixtures::builtin(name).expect("bundled case");
    let dc = solve_dc(&case, &LossModel::new(LossTag::Base), &DcOptions::default()).expect("base dispatch");
    (case, dc)
}
