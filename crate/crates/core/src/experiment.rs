//! Declarative experiment configs and the seeded (method × seed) runner.
//!
//! ```toml
//! budget = 80
//! seeds = [0, 1, 2, 3]
//! output_dir = "out/c1"          # relative to the config file
//! workers = 4                    # optional; defaults to all cores
//!
//! [task]
//! builtin = "synthetic_c1"       # or: domain_spec = "spec.toml", table = "table.csv"
//! task_seed = 0
//!
//! [[methods]]
//! kind = "mivabo"
//! [methods.bo]                   # any BoLoopConfig field except budget and seed
//! n_init = 5
//!
//! [[methods]]
//! kind = "random"
//!
//! [[methods]]
//! name = "sa"
//! kind = "sa_penalty"
//! penalty = 500.0                # optional; defaults to the task's reference penalty
//! ```
//!
//! Outputs: `traces/<method>/seed_<seed>.csv` per cell, `metrics.csv` (tidy,
//! one row per method, seed and iteration), `summary.csv` (mean and standard
//! deviation across seeds) and `manifest.json` (resolved config, library
//! version, config hash). `MIVABO_OUTPUT_DIR` overrides `output_dir`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{
    run_bo_streaming, AcquisitionOptimizer, BoLoopConfig, MixedAnnealSchedule, Objective,
};
use crate::benchmarks::{
    load_table_surrogate, make_synthetic_constrained, make_synthetic_unconstrained,
    penalty_from_range, random_search_streaming, sa_search_streaming, summarize,
    synthetic_table_csv, table_from_reader, tidy_rows, write_tidy_csv, xgboost_domain_spec,
    MethodTraces, PenaltyWrapper, SyntheticObjective, SyntheticTask, TableSurrogate,
};
use crate::domain::spec::DomainSpec;
use crate::domain::MixedDomain;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureExpansion};
use crate::rng::derive_seed;
use crate::trace::{TraceRecord, TraceWriter};

pub const OUTPUT_DIR_ENV: &str = "MIVABO_OUTPUT_DIR";
pub const DEFAULT_TABLE_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinTask {
    /// 8 binary and 8 continuous inputs, unconstrained.
    SyntheticC1,
    /// As `synthetic_c1` with at most two active binary inputs.
    SyntheticC2Card2,
    /// Generated nearest-neighbour table over a ten-parameter boosting space.
    XgboostTable,
}

impl BuiltinTask {
    pub const ALL: [BuiltinTask; 3] = [
        Self::SyntheticC1,
        Self::SyntheticC2Card2,
        Self::XgboostTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SyntheticC1 => "synthetic_c1",
            Self::SyntheticC2Card2 => "synthetic_c2_card2",
            Self::XgboostTable => "xgboost_table",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::SyntheticC1 => "linear ground truth over 8 binary + 8 continuous inputs, 16 Fourier features, noisy",
            Self::SyntheticC2Card2 => "synthetic_c1 restricted to at most 2 active binary inputs",
            Self::XgboostTable => "nearest-neighbour surrogate over a generated table, 3 discrete + 7 continuous parameters",
        }
    }
}

/// Model features for tasks that do not come with their own expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFeatures {
    pub m_cont: usize,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Defaults to a seed derived from the task seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelFeatures {
    fn default() -> Self {
        Self {
            m_cont: 8,
            sigma: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_spec: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Fixes the task instance (true weights, generated table); run seeds vary
    /// only the optimizers and observation noise.
    #[serde(default)]
    pub task_seed: u64,
    /// Observation noise precision of synthetic tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_beta: Option<f64>,
    /// Rows of the generated table for `xgboost_table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_rows: Option<usize>,
    /// Feature map of the surrogate model. Synthetic tasks default to their
    /// ground-truth expansion; table tasks to [`ModelFeatures::default`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_features: Option<ModelFeatures>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Thompson sampling with the configured acquisition optimizer.
    Mivabo,
    /// Thompson sampling with simulated annealing on the acquisition.
    MivaboSa,
    /// Uniform sampling of the feasible set.
    Random,
    /// Uniform sampling ignoring user constraints; violations cost a penalty.
    RandomPenalty,
    /// Simulated annealing on the objective; violations cost a penalty.
    SaPenalty,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mivabo => "mivabo",
            Self::MivaboSa => "mivabo_sa",
            Self::Random => "random",
            Self::RandomPenalty => "random_penalty",
            Self::SaPenalty => "sa_penalty",
        }
    }

    fn uses_penalty(self) -> bool {
        matches!(self, Self::RandomPenalty | Self::SaPenalty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// Label used in output paths and metrics; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: MethodKind,
    /// Loop settings for the model-based kinds; `budget` and `seed` are set by the runner.
    #[serde(default)]
    pub bo: BoLoopConfig,
    /// Annealing schedule for `sa_penalty`.
    #[serde(default)]
    pub schedule: MixedAnnealSchedule,
    /// Penalty for infeasible queries of the penalty-based kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            name: None,
            kind,
            bo: BoLoopConfig::default(),
            schedule: MixedAnnealSchedule::default(),
            penalty: None,
        }
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub budget: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub task: TaskSpec,
    pub methods: Vec<MethodSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("mivabo-out")
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Parse without touching the file system.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    /// Parse, resolve relative paths against the config's directory, apply
    /// the output-directory override and validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.output_dir);
        if let Some(p) = cfg.task.domain_spec.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.task.table.as_mut() {
            rebase(p);
        }
        cfg.apply_env_override();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env_override(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(config_err("budget must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds list is empty"));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(config_err(format!("duplicate seed {s}")));
        }
        if self.methods.is_empty() {
            return Err(config_err("methods list is empty"));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers must be positive"));
        }
        let mut labels = HashSet::new();
        for m in &self.methods {
            let label = m.label();
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(config_err(format!(
                    "method name `{label}` must be non-empty [A-Za-z0-9_-]"
                )));
            }
            if !labels.insert(label) {
                return Err(config_err(format!("duplicate method name `{label}`")));
            }
            if matches!(m.kind, MethodKind::Mivabo | MethodKind::MivaboSa) {
                let bo = BoLoopConfig {
                    budget: self.budget,
                    ..m.bo.clone()
                };
                bo.validate()
                    .map_err(|e| config_err(format!("method `{label}`: {e}")))?;
            }
            if let Some(p) = m.penalty {
                if !p.is_finite() {
                    return Err(config_err(format!(
                        "method `{label}`: penalty must be finite"
                    )));
                }
            }
        }
        let t = &self.task;
        match (t.builtin, &t.domain_spec, &t.table) {
            (Some(_), None, None) => {}
            (None, Some(spec), Some(table)) => {
                for p in [spec, table] {
                    if !p.is_file() {
                        return Err(config_err(format!("file not found: {}", p.display())));
                    }
                }
            }
            _ => {
                return Err(config_err(
                    "task needs either `builtin` or both `domain_spec` and `table`",
                ))
            }
        }
        if t.builtin.is_some_and(|b| b != BuiltinTask::XgboostTable) && t.table_rows.is_some() {
            return Err(config_err(
                "`table_rows` only applies to the xgboost_table task",
            ));
        }
        if t.noise_beta.is_some_and(|b| !(b > 0.0)) {
            return Err(config_err("noise_beta must be positive"));
        }
        Ok(())
    }
}

enum TaskInstance {
    Synthetic(SyntheticTask),
    Table(TableSurrogate),
}

enum TaskObjective<'a> {
    Synthetic(SyntheticObjective<'a>),
    Table(&'a TableSurrogate),
}

impl Objective for TaskObjective<'_> {
    fn evaluate(&mut self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        match self {
            Self::Synthetic(o) => o.evaluate(x_disc, x_cont),
            Self::Table(t) => t.lookup(x_disc, x_cont),
        }
    }
}

/// A task ready to run: domain, model features, objective factory and
/// reference quantities.
pub struct PreparedTask {
    name: String,
    instance: TaskInstance,
    features: FeatureExpansion,
    /// Best achievable value where known (synthetic oracle, table minimum).
    pub optimum: Option<f64>,
    /// Default penalty for constraint-unaware methods.
    pub reference_penalty: f64,
}

impl PreparedTask {
    pub fn prepare(spec: &TaskSpec) -> Result<Self> {
        let (name, instance) = match (spec.builtin, &spec.domain_spec, &spec.table) {
            (Some(b @ (BuiltinTask::SyntheticC1 | BuiltinTask::SyntheticC2Card2)), _, _) => {
                let mut task = if b == BuiltinTask::SyntheticC1 {
                    make_synthetic_unconstrained(spec.task_seed)?
                } else {
                    make_synthetic_constrained(spec.task_seed)?
                };
                if let Some(beta) = spec.noise_beta {
                    task.noise_beta = beta;
                }
                (b.name().to_string(), TaskInstance::Synthetic(task))
            }
            (Some(BuiltinTask::XgboostTable), _, _) => {
                let ds = xgboost_domain_spec();
                let rows = spec.table_rows.unwrap_or(DEFAULT_TABLE_ROWS);
                let csv =
                    synthetic_table_csv(&ds, rows, derive_seed(spec.task_seed, "table-rows"))?;
                let table = table_from_reader(csv.as_bytes(), &ds)?;
                (
                    BuiltinTask::XgboostTable.name().to_string(),
                    TaskInstance::Table(table),
                )
            }
            (None, Some(ds), Some(table)) => {
                let ds = DomainSpec::load(ds)?;
                let t = load_table_surrogate(table, &ds)?;
                (
                    format!("table:{}", spec.table.as_ref().unwrap().display()),
                    TaskInstance::Table(t),
                )
            }
            _ => return Err(config_err("task is not fully specified")),
        };
        let domain = match &instance {
            TaskInstance::Synthetic(t) => &t.domain,
            TaskInstance::Table(t) => t.domain(),
        };
        let features = match (&instance, &spec.model_features) {
            (TaskInstance::Synthetic(t), None) => t.fe.clone(),
            (_, mf) => {
                let mf = mf.clone().unwrap_or_default();
                FeatureExpansion::new(
                    domain.d_disc(),
                    domain.d_cont(),
                    &FeatureConfig {
                        m_cont: mf.m_cont,
                        sigma: mf.sigma,
                        seed: mf
                            .seed
                            .unwrap_or_else(|| derive_seed(spec.task_seed, "model-features")),
                        rff_scopes: None,
                    },
                )?
            }
        };
        let (optimum, reference_penalty) = match &instance {
            TaskInstance::Synthetic(t) => (Some(t.oracle()?.value), t.reference_penalty()?),
            TaskInstance::Table(t) => {
                let lo = t.metrics().iter().copied().fold(f64::INFINITY, f64::min);
                let hi = t
                    .metrics()
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                (Some(lo), penalty_from_range(lo, hi))
            }
        };
        Ok(Self {
            name,
            instance,
            features,
            optimum,
            reference_penalty,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &MixedDomain {
        match &self.instance {
            TaskInstance::Synthetic(t) => &t.domain,
            TaskInstance::Table(t) => t.domain(),
        }
    }

    pub fn features(&self) -> &FeatureExpansion {
        &self.features
    }

    fn objective(&self, noise_seed: u64) -> TaskObjective<'_> {
        match &self.instance {
            TaskInstance::Synthetic(t) => TaskObjective::Synthetic(t.objective(noise_seed)),
            TaskInstance::Table(t) => TaskObjective::Table(t),
        }
    }

    /// Run one (method, seed) cell, streaming its records to `sink`.
    pub fn run_cell(
        &self,
        method: &MethodSpec,
        budget: usize,
        seed: u64,
        mut sink: impl FnMut(&TraceRecord) -> Result<()>,
    ) -> Result<Vec<TraceRecord>> {
        let domain = self.domain();
        let mut objective = self.objective(derive_seed(seed, "observation-noise"));
        let penalty = method.penalty.unwrap_or(self.reference_penalty);
        match method.kind {
            MethodKind::Mivabo | MethodKind::MivaboSa => {
                let mut bo = BoLoopConfig {
                    budget,
                    seed,
                    ..method.bo.clone()
                };
                if method.kind == MethodKind::MivaboSa
                    && bo.optimizer == AcquisitionOptimizer::Alternating
                {
                    bo.optimizer = AcquisitionOptimizer::Annealing {
                        schedule: MixedAnnealSchedule::default(),
                        penalty: 1e3,
                    };
                }
                Ok(run_bo_streaming(&mut objective, domain, &self.features, &bo, sink)?.trace)
            }
            MethodKind::Random => {
                random_search_streaming(&mut objective, domain, budget, seed, true, &mut sink)
            }
            MethodKind::RandomPenalty => {
                let mut wrapped = PenaltyWrapper::new(objective, domain.clone(), penalty);
                random_search_streaming(&mut wrapped, domain, budget, seed, false, &mut sink)
            }
            MethodKind::SaPenalty => {
                let mut wrapped = PenaltyWrapper::new(objective, domain.clone(), penalty);
                sa_search_streaming(
                    &mut wrapped,
                    domain,
                    budget,
                    seed,
                    &method.schedule,
                    &mut sink,
                )
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: String,
    pub seed: u64,
    pub trace_path: PathBuf,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub task: String,
    pub optimum: Option<f64>,
    /// Cells in (method, seed) config order.
    pub cells: Vec<CellResult>,
}

impl ExperimentReport {
    /// Traces of one method in seed order.
    pub fn traces(&self, method: &str) -> Vec<&[TraceRecord]> {
        self.cells
            .iter()
            .filter(|c| c.method == method)
            .map(|c| c.trace.as_slice())
            .collect()
    }

    /// Final incumbent per seed of one method; `None` where nothing feasible was seen.
    pub fn final_incumbents(&self, method: &str) -> Vec<Option<f64>> {
        self.traces(method)
            .iter()
            .map(|t| t.last().and_then(|r| r.incumbent))
            .collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    config_hash: String,
    task: &'a str,
    optimum: Option<f64>,
    reference_penalty: f64,
    config: &'a ExperimentConfig,
    cells: Vec<ManifestCell>,
}

#[derive(Serialize)]
struct ManifestCell {
    method: String,
    seed: u64,
    trace: String,
    rows: usize,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    method: &'a str,
    metric: &'static str,
    iter: usize,
    mean: f64,
    std: f64,
    n: usize,
}

/// Config with every default made explicit, as recorded in the manifest.
pub fn resolve(cfg: &ExperimentConfig, task: &PreparedTask) -> ExperimentConfig {
    let mut out = cfg.clone();
    for m in &mut out.methods {
        m.name = Some(m.label().to_string());
        if m.kind.uses_penalty() && m.penalty.is_none() {
            m.penalty = Some(task.reference_penalty);
        }
    }
    out
}

/// Lowercase hex SHA-256 of the canonical JSON form of `cfg`, excluding the
/// output directory.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut cfg = cfg.clone();
    cfg.output_dir = PathBuf::new();
    let json = serde_json::to_string(&cfg).map_err(|e| config_err(e.to_string()))?;
    Ok(Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn trace_rel_path(method: &str, seed: u64) -> PathBuf {
    Path::new("traces")
        .join(method)
        .join(format!("seed_{seed}.csv"))
}

fn write_atomically(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(fs::File::create(&tmp)?);
    write(&mut w)?;
    w.into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn run_cell_to_file(
    task: &PreparedTask,
    method: &MethodSpec,
    budget: usize,
    seed: u64,
    path: &Path,
) -> Result<Vec<TraceRecord>> {
    let tmp = path.with_extension("csv.tmp");
    let mut writer = TraceWriter::new(fs::File::create(&tmp)?)?;
    match task.run_cell(method, budget, seed, |r| writer.write(r)) {
        Ok(trace) => {
            writer.into_inner()?.sync_all()?;
            fs::rename(&tmp, path)?;
            Ok(trace)
        }
        Err(e) => {
            drop(writer);
            fs::rename(&tmp, path.with_extension("partial.csv"))?;
            Err(e)
        }
    }
}

/// Run every (method, seed) cell and write traces, metrics and manifest.
///
/// Cells run in parallel; each is sequential and deterministic given its
/// seed. If any cell fails the remaining outputs are still written and the
/// first failure is returned; the failed cell's rows are kept in
/// `seed_<seed>.partial.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let task = PreparedTask::prepare(&cfg.task)?;
    let resolved = resolve(cfg, &task);
    let out = &cfg.output_dir;
    for m in &resolved.methods {
        fs::create_dir_all(out.join("traces").join(m.label()))?;
    }
    let jobs: Vec<(&MethodSpec, u64)> = resolved
        .methods
        .iter()
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let results: Vec<(String, u64, PathBuf, Result<Vec<TraceRecord>>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, seed)| {
                let rel = trace_rel_path(m.label(), seed);
                let res = run_cell_to_file(&task, m, cfg.budget, seed, &out.join(&rel));
                (m.label().to_string(), seed, rel, res)
            })
            .collect()
    });

    let mut cells = Vec::new();
    let mut first_err = None;
    for (method, seed, rel, res) in results {
        match res {
            Ok(trace) => cells.push(CellResult {
                method,
                seed,
                trace_path: out.join(rel),
                trace,
            }),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let report = ExperimentReport {
        task: task.name().to_string(),
        optimum: task.optimum,
        cells,
    };
    write_outputs(&report, &resolved, &task)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn write_outputs(
    report: &ExperimentReport,
    resolved: &ExperimentConfig,
    task: &PreparedTask,
) -> Result<()> {
    let out = &resolved.output_dir;
    let pool: Vec<MethodTraces> = resolved
        .methods
        .iter()
        .map(|m| MethodTraces {
            method: m.label().to_string(),
            traces: report
                .traces(m.label())
                .into_iter()
                .map(<[_]>::to_vec)
                .collect(),
        })
        .collect();
    let rows = tidy_rows(&pool, report.optimum);
    write_atomically(&out.join("metrics.csv"), |w| write_tidy_csv(w, &rows))?;

    write_atomically(&out.join("summary.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for m in &pool {
            let series = |f: &dyn Fn(&crate::benchmarks::TidyRow) -> Option<f64>| -> Vec<Vec<f64>> {
                let mut by_seed: Vec<Vec<f64>> = Vec::new();
                let mut last_seed = None;
                for r in rows.iter().filter(|r| r.method == m.method) {
                    if last_seed != Some(r.seed) {
                        by_seed.push(Vec::new());
                        last_seed = Some(r.seed);
                    }
                    if let Some(v) = f(r) {
                        by_seed.last_mut().unwrap().push(v);
                    }
                }
                by_seed
            };
            let metrics: [(&'static str, Vec<Vec<f64>>); 2] = [
                ("normalized_error", series(&|r| Some(r.normalized_error))),
                ("regret", series(&|r| r.regret)),
            ];
            for (metric, s) in metrics {
                for it in summarize(&s) {
                    csv.serialize(SummaryRow {
                        method: &m.method,
                        metric,
                        iter: it.iter,
                        mean: it.mean,
                        std: it.std,
                        n: it.n,
                    })?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    })?;

    let manifest = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(resolved)?,
        task: task.name(),
        optimum: report.optimum,
        reference_penalty: task.reference_penalty,
        config: resolved,
        cells: report
            .cells
            .iter()
            .map(|c| ManifestCell {
                method: c.method.clone(),
                seed: c.seed,
                trace: c
                    .trace_path
                    .strip_prefix(out)
                    .unwrap_or(&c.trace_path)
                    .display()
                    .to_string(),
                rows: c.trace.len(),
            })
            .collect(),
    };
    write_atomically(&out.join("manifest.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_toml_str(
            r#"
            budget = 8
            seeds = [0, 1]
            [task]
            builtin = "synthetic_c2_card2"
            [[methods]]
            kind = "mivabo"
            [methods.bo]
            n_init = 3
            [[methods]]
            kind = "random_penalty"
            [[methods]]
            kind = "sa_penalty"
            "#,
        )
        .unwrap();
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let base = small(dir.path());
        let mut c = base.clone();
        c.methods.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.seeds = vec![1, 1];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.task = TaskSpec {
            domain_spec: Some(dir.path().join("missing.toml")),
            table: Some(dir.path().join("missing.csv")),
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.methods.push(MethodSpec::new(MethodKind::Mivabo));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base;
        c.methods[0].bo.n_init = 20;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_toml_str("budget = 3\nseeds = [0]\nbogus = 1\n[task]\nbuiltin = \"synthetic_c1\"\nmethods = []"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn runs_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.cells.len(), 6);
        for c in &report.cells {
            assert!(c.trace_path.is_file());
            assert_eq!(crate::trace::load_trace(&c.trace_path).unwrap(), c.trace);
        }
        assert!(report
            .traces("mivabo")
            .iter()
            .flat_map(|t| t.iter())
            .all(|r| r.violations == 0));
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 6 * 8);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
        assert!(manifest["config"]["methods"][1]["penalty"]
            .as_f64()
            .is_some());
        assert!(dir.path().join("summary.csv").is_file());
        let leftovers = fs::read_dir(dir.path().join("traces/mivabo"))
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "tmp")
            })
            .count();
        assert_eq!(leftovers, 0);
    }

    #[test]
    fn rerun_is_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_experiment(&small(a.path())).unwrap();
        let rb = run_experiment(&small(b.path())).unwrap();
        for (ca, cb) in ra.cells.iter().zip(&rb.cells) {
            for (x, y) in ca.trace.iter().zip(&cb.trace) {
                assert_eq!((&x.x_disc, &x.x_cont, x.y), (&y.x_disc, &y.x_cont, y.y));
            }
        }
        let hash = |d: &Path| {
            let m: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap())
                    .unwrap();
            m["config_hash"].clone()
        };
        assert_eq!(hash(a.path()), hash(b.path()));
        let mut other = small(a.path());
        other.budget = 9;
        assert_ne!(
            config_hash(&other).unwrap(),
            hash(a.path()).as_str().unwrap()
        );
    }

    #[test]
    fn failing_cell_keeps_partial_rows() {
        let dir = tempfile::tempdir().unwrap();
        let spec = xgboost_domain_spec();
        let csv = synthetic_table_csv(&spec, 50, 1).unwrap();
        let spec_path = dir.path().join("spec.toml");
        let table_path = dir.path().join("table.csv");
        fs::write(&spec_path, spec.to_toml_string().unwrap()).unwrap();
        fs::write(&table_path, csv).unwrap();
        let mut cfg = small(&dir.path().join("out"));
        cfg.task = TaskSpec {
            domain_spec: Some(spec_path),
            table: Some(table_path),
            ..Default::default()
        };
        cfg.methods = vec![MethodSpec::new(MethodKind::Random)];
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert!(report.optimum.is_some());

        let task = PreparedTask::prepare(&cfg.task).unwrap();
        let path = dir.path().join("fail.csv");
        let mut n = 0;
        let err = {
            let tmp = path.with_extension("csv.tmp");
            let mut w = TraceWriter::new(fs::File::create(&tmp).unwrap()).unwrap();
            let r = task.run_cell(&cfg.methods[0], 5, 0, |rec| {
                n += 1;
                w.write(rec)?;
                if n == 3 {
                    Err(Error::Objective("boom".into()))
                } else {
                    Ok(())
                }
            });
            drop(w);
            fs::rename(&tmp, path.with_extension("partial.csv")).unwrap();
            r.unwrap_err()
        };
        assert!(matches!(err, Error::Objective(_)));
        let partial = crate::trace::load_trace(path.with_extension("partial.csv")).unwrap();
        assert_eq!(partial.len(), 3);
    }
}
