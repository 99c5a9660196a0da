//! DCOPF → ACPF orchestration over scenario batches, aggregation and result
//! files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ac::{run_acpf_with, AcVariant, PowerFlowState, SolverOptions, WarmStart};
use crate::dc::{solve_dc, DcOptions, DcSolution, LossModel, LossTag};
use crate::feasibility::{
    check_violations_with, compute_cost_difference, compute_mae, dispatch_cost, Category,
    ReferenceDispatch, ViolationOptions, ViolationReport,
};
use crate::grid::{build_admittance, NetworkCase};
use crate::scenario::{generate_batch, ScenarioConfig, ScenarioError, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub dc: DcOptions,
    /// `warm_start` here is overridden per run when `warm_from_base` is set.
    pub ac: SolverOptions,
    pub violation: ViolationOptions,
    /// Start non-Base AC variants from the converged AC_BASE state of the
    /// same dispatch.
    pub warm_from_base: bool,
    /// When false, `time_s` is left empty so result files are reproducible.
    pub record_timing: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            dc: DcOptions::default(),
            ac: SolverOptions::default(),
            violation: ViolationOptions::default(),
            warm_from_base: false,
            record_timing: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Parse,
    Dc,
    Ac,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Dc => "dc",
            Stage::Ac => "ac",
        }
    }
}

/// What produced a record's load and how it was solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `None` for the nominal load.
    pub seed: Option<u64>,
    pub sigma: f64,
    pub pf_min: f64,
    pub pf_max: f64,
    pub pf_digest: Option<String>,
    pub tol: f64,
    pub eps_q: f64,
    pub eps_v: f64,
}

impl Provenance {
    fn nominal(ac: &SolverOptions) -> Self {
        Self {
            seed: None,
            sigma: 0.0,
            pf_min: 1.0,
            pf_max: 1.0,
            pf_digest: None,
            tol: ac.tol,
            eps_q: ac.eps_q,
            eps_v: ac.eps_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRunRecord {
    pub case: String,
    pub dc_variant: LossTag,
    pub ac_variant: AcVariant,
    pub scenario: usize,
    pub converged: bool,
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// Present only for converged runs.
    pub violations: Option<ViolationReport>,
    /// Generation cost of the AC dispatch ($/h).
    pub cost: Option<f64>,
    pub mae: Option<f64>,
    pub cd: Option<f64>,
    pub time_s: Option<f64>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("no records to emit")]
    EmptyRecords,
    #[error("worker pool: {0}")]
    WorkerPool(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

struct Context<'a> {
    case: &'a NetworkCase,
    scenario: usize,
    options: &'a PipelineOptions,
    reference: Option<&'a ReferenceDispatch>,
    provenance: &'a Provenance,
}

impl Context<'_> {
    fn failed(&self, dc: LossTag, ac: AcVariant, stage: Stage, error: String, time_s: f64) -> PipelineRunRecord {
        PipelineRunRecord {
            case: self.case.name.clone(),
            dc_variant: dc,
            ac_variant: ac,
            scenario: self.scenario,
            converged: false,
            inner_iters: 0,
            outer_iters: 0,
            violations: None,
            cost: None,
            mae: None,
            cd: None,
            time_s: self.options.record_timing.then_some(time_s),
            failed_stage: Some(stage),
            error: Some(error),
            provenance: self.provenance.clone(),
        }
    }

    fn finish(&self, dc: LossTag, state: &PowerFlowState, time_s: f64) -> PipelineRunRecord {
        let variant = state.variant;
        let mut rec = self.failed(dc, variant, Stage::Ac, String::new(), time_s);
        rec.inner_iters = state.inner_iters;
        rec.outer_iters = state.outer_iters;
        if !state.converged {
            rec.error = Some(format!(
                "no convergence after {} Newton iterations",
                state.inner_iters
            ));
            return rec;
        }
        let metrics = (|| {
            let report = check_violations_with(self.case, state, &self.options.violation)?;
            let cost = dispatch_cost(self.case, &state.p_g)?;
            let (mae, cd) = match self.reference {
                Some(r) => (Some(compute_mae(&state.p_g, r)?), Some(compute_cost_difference(cost, r)?)),
                None => (None, None),
            };
            Ok::<_, crate::feasibility::FeasibilityError>((report, cost, mae, cd))
        })();
        match metrics {
            Ok((report, cost, mae, cd)) => {
                rec.converged = true;
                rec.violations = Some(report);
                rec.cost = Some(cost);
                rec.mae = mae;
                rec.cd = cd;
                rec.failed_stage = None;
                rec.error = None;
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        rec
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// All `(dc, ac)` combinations on one load. The DC_BASE solve is shared by
/// the variants that need a reference point.
fn run_combinations(
    case: &NetworkCase,
    dcs: &[LossTag],
    acs: &[AcVariant],
    options: &PipelineOptions,
    reference: Option<&ReferenceDispatch>,
    provenance: &Provenance,
    scenario: usize,
) -> Vec<PipelineRunRecord> {
    let ctx = Context { case, scenario, options, reference, provenance };
    let mut out = Vec::with_capacity(dcs.len() * acs.len());

    let y = match build_admittance(case) {
        Ok(y) => y,
        Err(e) => {
            for &dc in dcs {
                for &ac in acs {
                    out.push(ctx.failed(dc, ac, Stage::Ac, e.to_string(), 0.0));
                }
            }
            return out;
        }
    };

    let needs_base = dcs.iter().any(|d| matches!(d, LossTag::Base | LossTag::Lllf | LossTag::Lloa));
    let base: Option<(Result<DcSolution, String>, f64)> = needs_base.then(|| {
        let (r, t) = timed(|| solve_dc(case, &LossModel::new(LossTag::Base), &options.dc));
        (r.map_err(|e| e.to_string()), t)
    });

    for &dc in dcs {
        let (solution, dc_time) = match (dc, &base) {
            (LossTag::Base, Some((r, t))) => (r.clone(), *t),
            (LossTag::Lllf | LossTag::Lloa, Some((Ok(b), t))) => {
                let model = LossModel::with_reference(dc, b.clone());
                let (r, t2) = timed(|| solve_dc(case, &model, &options.dc));
                (r.map_err(|e| e.to_string()), t + t2)
            }
            (LossTag::Lllf | LossTag::Lloa, Some((Err(e), t))) => {
                (Err(format!("reference solve failed: {e}")), *t)
            }
            _ => {
                let (r, t) = timed(|| solve_dc(case, &LossModel::new(dc), &options.dc));
                (r.map_err(|e| e.to_string()), t)
            }
        };
        let solution = match solution {
            Ok(s) => s,
            Err(e) => {
                for &ac in acs {
                    out.push(ctx.failed(dc, ac, Stage::Dc, e.clone(), dc_time));
                }
                continue;
            }
        };

        let run = |variant: AcVariant, warm: WarmStart| {
            let mut ac_opts = options.ac.clone();
            if options.warm_from_base {
                ac_opts.warm_start = warm;
            }
            timed(|| run_acpf_with(case, &y, &solution.p_g_sp, variant, &ac_opts))
        };
        let base_state = (options.warm_from_base && acs.iter().any(|&a| a != AcVariant::Base))
            .then(|| run(AcVariant::Base, options.ac.warm_start.clone()));
        let warm = match &base_state {
            Some((Ok(s), _)) if s.converged => WarmStart::from_state(s),
            _ => options.ac.warm_start.clone(),
        };

        for &ac in acs {
            let (result, ac_time) = match (&base_state, ac) {
                (Some((r, t)), AcVariant::Base) => (r.clone(), *t),
                _ => run(ac, warm.clone()),
            };
            out.push(match result {
                Ok(state) => ctx.finish(dc, &state, dc_time + ac_time),
                Err(e) => ctx.failed(dc, ac, Stage::Ac, e.to_string(), dc_time + ac_time),
            });
        }
    }
    out
}

/// One DCOPF → ACPF run at the case's own load.
pub fn run_pipeline(
    case: &NetworkCase,
    dc: LossTag,
    ac: AcVariant,
    options: &PipelineOptions,
    reference: Option<&ReferenceDispatch>,
) -> PipelineRunRecord {
    let provenance = Provenance::nominal(&options.ac);
    run_combinations(case, &[dc], &[ac], options, reference, &provenance, 0)
        .pop()
        .expect("one combination")
}

/// Mean, min and max over converged runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Aggregates for one `(dc, ac)` pair. Means cover converged runs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub dc_variant: LossTag,
    pub ac_variant: AcVariant,
    pub runs: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    pub mean_inner_iters: Option<f64>,
    pub mean_outer_iters: Option<f64>,
    pub mean_time_s: Option<f64>,
    /// Summed violation magnitude per category, indexed like [`Category::ALL`].
    pub violation_sums: [Option<Stat>; 4],
    pub mean_mae: Option<f64>,
    pub mean_cd: Option<f64>,
}

impl VariantSummary {
    pub fn violation_sum(&self, c: Category) -> Option<Stat> {
        self.violation_sums[Category::ALL.iter().position(|&x| x == c).unwrap()]
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(records: &[PipelineRunRecord], dcs: &[LossTag], acs: &[AcVariant]) -> Vec<VariantSummary> {
    let mut out = Vec::new();
    for &dc in dcs {
        for &ac in acs {
            let members: Vec<&PipelineRunRecord> =
                records.iter().filter(|r| r.dc_variant == dc && r.ac_variant == ac).collect();
            let ok: Vec<&PipelineRunRecord> = members.iter().copied().filter(|r| r.converged).collect();
            let sums = Category::ALL.map(|c| {
                let v: Vec<f64> = ok
                    .iter()
                    .filter_map(|r| r.violations.as_ref())
                    .map(|v| v.get(c).sum_violation)
                    .collect();
                Stat::of(&v)
            });
            out.push(VariantSummary {
                dc_variant: dc,
                ac_variant: ac,
                runs: members.len(),
                converged: ok.len(),
                convergence_rate: if members.is_empty() { 0.0 } else { ok.len() as f64 / members.len() as f64 },
                mean_inner_iters: mean(ok.iter().map(|r| r.inner_iters as f64)),
                mean_outer_iters: mean(ok.iter().map(|r| r.outer_iters as f64)),
                mean_time_s: mean(ok.iter().filter_map(|r| r.time_s)),
                violation_sums: sums,
                mean_mae: mean(ok.iter().filter_map(|r| r.mae)),
                mean_cd: mean(ok.iter().filter_map(|r| r.cd)),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    /// Ordered by scenario, then DC variant, then AC variant, in the order given.
    pub records: Vec<PipelineRunRecord>,
    pub summary: Vec<VariantSummary>,
}

/// Runs every `(dc, ac)` pair on each scenario of `config`. `n_samples == 0`
/// runs the nominal load once. `workers = None` uses the global rayon pool.
pub fn run_batch(
    case: &NetworkCase,
    dcs: &[LossTag],
    acs: &[AcVariant],
    config: &ScenarioConfig,
    options: &PipelineOptions,
    reference: Option<&ReferenceDispatch>,
    workers: Option<usize>,
) -> Result<BatchOutput, PipelineError> {
    let records = if config.n_samples == 0 {
        let provenance = Provenance::nominal(&options.ac);
        run_combinations(case, dcs, acs, options, reference, &provenance, 0)
    } else {
        let scenarios = generate_batch(case, config)?;
        let work = || {
            scenarios
                .par_iter()
                .flat_map_iter(|s| {
                    let provenance = Provenance {
                        seed: Some(config.seed),
                        sigma: config.sigma,
                        pf_min: config.pf_min,
                        pf_max: config.pf_max,
                        pf_digest: Some(s.pf_digest.clone()),
                        tol: options.ac.tol,
                        eps_q: options.ac.eps_q,
                        eps_v: options.ac.eps_v,
                    };
                    run_combinations(&s.apply(case), dcs, acs, options, reference, &provenance, s.index)
                })
                .collect::<Vec<_>>()
        };
        match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::WorkerPool(e.to_string()))?
                .install(work),
            None => work(),
        }
    };
    let summary = summarize(&records, dcs, acs);
    Ok(BatchOutput { records, summary })
}

/// Header information written ahead of the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub rng: String,
    pub case: String,
    pub seed: u64,
    pub sigma: f64,
    pub pf_min: f64,
    pub pf_max: f64,
    pub samples: usize,
    pub tol: f64,
    pub eps_q: f64,
    pub eps_v: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub warm_from_base: bool,
}

impl RunMetadata {
    pub fn new(case: &NetworkCase, config: &ScenarioConfig, options: &PipelineOptions) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ALGORITHM.to_string(),
            case: case.name.clone(),
            seed: config.seed,
            sigma: config.sigma,
            pf_min: config.pf_min,
            pf_max: config.pf_max,
            samples: config.n_samples,
            tol: options.ac.tol,
            eps_q: options.ac.eps_q,
            eps_v: options.ac.eps_v,
            max_inner: options.ac.max_inner,
            max_outer: options.ac.max_outer,
            warm_from_base: options.warm_from_base,
        }
    }

    fn comment_line(&self) -> String {
        format!(
            "# version={} rng=\"{}\" case={} seed={} sigma={} pf_min={} pf_max={} samples={} tol={} eps_q={} eps_v={} max_inner={} max_outer={} warm_from_base={}",
            self.version, self.rng, self.case, self.seed, self.sigma, self.pf_min, self.pf_max, self.samples,
            self.tol, self.eps_q, self.eps_v, self.max_inner, self.max_outer, self.warm_from_base
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    case: &'a str,
    dc: &'static str,
    ac: &'static str,
    sample: usize,
    converged: bool,
    inner_iters: usize,
    outer_iters: usize,
    viol_p_count: Option<usize>,
    viol_p_max: Option<f64>,
    viol_p_sum: Option<f64>,
    viol_q_count: Option<usize>,
    viol_q_max: Option<f64>,
    viol_q_sum: Option<f64>,
    viol_v_count: Option<usize>,
    viol_v_max: Option<f64>,
    viol_v_sum: Option<f64>,
    viol_th_count: Option<usize>,
    viol_th_max: Option<f64>,
    viol_th_sum: Option<f64>,
    mae: Option<f64>,
    cd: Option<f64>,
    time_s: Option<f64>,
    cost: Option<f64>,
    failed_stage: Option<&'static str>,
    seed: Option<u64>,
    sigma: f64,
    tol: f64,
    eps_q: f64,
    eps_v: f64,
    pf_digest: Option<&'a str>,
    error: Option<&'a str>,
}

impl<'a> From<&'a PipelineRunRecord> for CsvRecord<'a> {
    fn from(r: &'a PipelineRunRecord) -> Self {
        let cat = |c: Category| r.violations.as_ref().map(|v| v.get(c));
        let count = |c| cat(c).map(|x| x.count);
        let max = |c| cat(c).map(|x| x.max_violation);
        let sum = |c| cat(c).map(|x| x.sum_violation);
        use Category::*;
        Self {
            case: &r.case,
            dc: r.dc_variant.label(),
            ac: r.ac_variant.label(),
            sample: r.scenario,
            converged: r.converged,
            inner_iters: r.inner_iters,
            outer_iters: r.outer_iters,
            viol_p_count: count(Active),
            viol_p_max: max(Active),
            viol_p_sum: sum(Active),
            viol_q_count: count(Reactive),
            viol_q_max: max(Reactive),
            viol_q_sum: sum(Reactive),
            viol_v_count: count(Voltage),
            viol_v_max: max(Voltage),
            viol_v_sum: sum(Voltage),
            viol_th_count: count(Thermal),
            viol_th_max: max(Thermal),
            viol_th_sum: sum(Thermal),
            mae: r.mae,
            cd: r.cd,
            time_s: r.time_s,
            cost: r.cost,
            failed_stage: r.failed_stage.map(Stage::label),
            seed: r.provenance.seed,
            sigma: r.provenance.sigma,
            tol: r.provenance.tol,
            eps_q: r.provenance.eps_q,
            eps_v: r.provenance.eps_v,
            pf_digest: r.provenance.pf_digest.as_deref(),
            error: r.error.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct CsvSummary {
    dc: &'static str,
    ac: &'static str,
    runs: usize,
    converged: usize,
    convergence_rate: f64,
    mean_inner_iters: Option<f64>,
    mean_outer_iters: Option<f64>,
    mean_time_s: Option<f64>,
    viol_p_sum_mean: Option<f64>,
    viol_p_sum_min: Option<f64>,
    viol_p_sum_max: Option<f64>,
    viol_q_sum_mean: Option<f64>,
    viol_q_sum_min: Option<f64>,
    viol_q_sum_max: Option<f64>,
    viol_v_sum_mean: Option<f64>,
    viol_v_sum_min: Option<f64>,
    viol_v_sum_max: Option<f64>,
    viol_th_sum_mean: Option<f64>,
    viol_th_sum_min: Option<f64>,
    viol_th_sum_max: Option<f64>,
    mae_mean: Option<f64>,
    cd_mean: Option<f64>,
}

impl From<&VariantSummary> for CsvSummary {
    fn from(s: &VariantSummary) -> Self {
        let [p, q, v, th] = s.violation_sums;
        Self {
            dc: s.dc_variant.label(),
            ac: s.ac_variant.label(),
            runs: s.runs,
            converged: s.converged,
            convergence_rate: s.convergence_rate,
            mean_inner_iters: s.mean_inner_iters,
            mean_outer_iters: s.mean_outer_iters,
            mean_time_s: s.mean_time_s,
            viol_p_sum_mean: p.map(|x| x.mean),
            viol_p_sum_min: p.map(|x| x.min),
            viol_p_sum_max: p.map(|x| x.max),
            viol_q_sum_mean: q.map(|x| x.mean),
            viol_q_sum_min: q.map(|x| x.min),
            viol_q_sum_max: q.map(|x| x.max),
            viol_v_sum_mean: v.map(|x| x.mean),
            viol_v_sum_min: v.map(|x| x.min),
            viol_v_sum_max: v.map(|x| x.max),
            viol_th_sum_mean: th.map(|x| x.mean),
            viol_th_sum_min: th.map(|x| x.min),
            viol_th_sum_max: th.map(|x| x.max),
            mae_mean: s.mean_mae,
            cd_mean: s.mean_cd,
        }
    }
}

fn write_csv<W: Write, T: Serialize>(mut w: W, metadata: &RunMetadata, rows: impl Iterator<Item = T>) -> Result<(), PipelineError> {
    writeln!(w, "{}", metadata.comment_line())?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Record table: a `#` metadata line, the header, one row per record.
pub fn write_records_csv<W: Write>(w: W, records: &[PipelineRunRecord], metadata: &RunMetadata) -> Result<(), PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyRecords);
    }
    write_csv(w, metadata, records.iter().map(CsvRecord::from))
}

pub fn write_summary_csv<W: Write>(w: W, summary: &[VariantSummary], metadata: &RunMetadata) -> Result<(), PipelineError> {
    write_csv(w, metadata, summary.iter().map(CsvSummary::from))
}

#[derive(Serialize, Deserialize)]
struct RecordsFile {
    metadata: RunMetadata,
    records: Vec<PipelineRunRecord>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    metadata: &'a RunMetadata,
    summary: &'a [VariantSummary],
}

pub fn records_to_json(records: &[PipelineRunRecord], metadata: &RunMetadata) -> Result<String, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyRecords);
    }
    let file = RecordsFile { metadata: metadata.clone(), records: records.to_vec() };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn records_from_json(text: &str) -> Result<(RunMetadata, Vec<PipelineRunRecord>), PipelineError> {
    let file: RecordsFile = serde_json::from_str(text)?;
    Ok((file.metadata, file.records))
}

/// Writes `records.{csv,json}` and `summary.{csv,json}` into `dir` and
/// returns their paths.
pub fn emit_results(
    records: &[PipelineRunRecord],
    summary: &[VariantSummary],
    metadata: &RunMetadata,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyRecords);
    }
    std::fs::create_dir_all(dir)?;
    let (rec_path, sum_path) = match format {
        OutputFormat::Csv => (dir.join("records.csv"), dir.join("summary.csv")),
        OutputFormat::Json => (dir.join("records.json"), dir.join("summary.json")),
    };
    match format {
        OutputFormat::Csv => {
            write_records_csv(std::io::BufWriter::new(std::fs::File::create(&rec_path)?), records, metadata)?;
            write_summary_csv(std::io::BufWriter::new(std::fs::File::create(&sum_path)?), summary, metadata)?;
        }
        OutputFormat::Json => {
            std::fs::write(&rec_path, records_to_json(records, metadata)?)?;
            let s = SummaryFile { metadata, summary };
            std::fs::write(&sum_path, serde_json::to_string_pretty(&s)?)?;
        }
    }
    Ok(vec![rec_path, sum_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{case30, two_bus};

    fn quiet() -> PipelineOptions {
        PipelineOptions { record_timing: false, ..Default::default() }
    }

    #[test]
    fn two_bus_all_variants_converge() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let out = run_batch(&case, &LossTag::ALL, &AcVariant::ALL, &ScenarioConfig { n_samples: 0, ..Default::default() }, &quiet(), None, None).unwrap();
        assert_eq!(out.records.len(), 16);
        for r in &out.records {
            assert!(r.converged, "{:?}", r);
            assert!(r.failed_stage.is_none());
        }
    }

    #[test]
    fn infeasible_dispatch_attributed_to_dc() {
        let case = two_bus(0.01, 0.1, 5.0, 0.0);
        let r = run_pipeline(&case, LossTag::Base, AcVariant::Spf, &quiet(), None);
        assert!(!r.converged);
        assert_eq!(r.failed_stage, Some(Stage::Dc));
        assert!(r.error.is_some());
    }

    #[test]
    fn zero_sigma_matches_nominal() {
        let case = case30();
        let config = ScenarioConfig { sigma: 0.0, pf_min: 1.0, pf_max: 1.0, n_samples: 4, seed: 3 };
        let mut unity = case.clone();
        for b in unity.buses.iter_mut().filter(|b| b.p_d > 0.0) {
            b.q_d = 0.0;
        }
        let nominal = run_pipeline(&unity, LossTag::Base, AcVariant::Spf, &quiet(), None);
        let out = run_batch(&case, &[LossTag::Base], &[AcVariant::Spf], &config, &quiet(), None, Some(2)).unwrap();
        for r in &out.records {
            assert_eq!(r.violations, nominal.violations);
            assert_eq!(r.inner_iters, nominal.inner_iters);
            assert_eq!(r.cost, nominal.cost);
        }
    }

    #[test]
    fn ordering_and_summary_means() {
        let case = case30();
        let config = ScenarioConfig { n_samples: 3, seed: 5, ..Default::default() };
        let dcs = [LossTag::Base, LossTag::Lllf];
        let acs = [AcVariant::Base, AcVariant::Spf];
        let out = run_batch(&case, &dcs, &acs, &config, &quiet(), None, Some(3)).unwrap();
        let keys: Vec<_> = out.records.iter().map(|r| (r.scenario, r.dc_variant, r.ac_variant)).collect();
        let mut want = Vec::new();
        for s in 0..3 {
            for &d in &dcs {
                for &a in &acs {
                    want.push((s, d, a));
                }
            }
        }
        assert_eq!(keys, want);
        for s in &out.summary {
            let members: Vec<_> = out
                .records
                .iter()
                .filter(|r| r.dc_variant == s.dc_variant && r.ac_variant == s.ac_variant && r.converged)
                .collect();
            let m = members.iter().map(|r| r.inner_iters as f64).sum::<f64>() / members.len() as f64;
            assert!((s.mean_inner_iters.unwrap() - m).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let r = run_pipeline(&case, LossTag::Base, AcVariant::Base, &quiet(), None);
        let meta = RunMetadata::new(&case, &ScenarioConfig::default(), &quiet());
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &[r], &meta).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("# version="));
        assert!(lines[1].starts_with("case,dc,ac,sample,converged,inner_iters,outer_iters,viol_p_count"));
        assert!(lines[2].starts_with("two_bus,DC_BASE,AC_BASE,0,true"));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let case = case30();
        let out = run_batch(&case, &[LossTag::Base], &[AcVariant::Base], &ScenarioConfig { n_samples: 2, ..Default::default() }, &PipelineOptions::default(), None, None).unwrap();
        let meta = RunMetadata::new(&case, &ScenarioConfig::default(), &quiet());
        let a = records_to_json(&out.records, &meta).unwrap();
        let (m, recs) = records_from_json(&a).unwrap();
        assert_eq!(records_to_json(&recs, &m).unwrap(), a);
    }

    #[test]
    fn empty_records_rejected() {
        let case = case30();
        let meta = RunMetadata::new(&case, &ScenarioConfig::default(), &quiet());
        assert!(matches!(write_records_csv(Vec::new(), &[], &meta), Err(PipelineError::EmptyRecords)));
    }
}
