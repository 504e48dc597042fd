//! Seeded Monte-Carlo experiment driver.
//!
//! Every replication draws from its own stream `Rng::new(seed).substream(rep)`
//! and replications run in parallel on the current rayon pool. Results are
//! gathered in replication order, so output bytes do not depend on the
//! thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regressors::{fit_forest, fit_knn, fit_tree, DictionaryConfig, Regressor};
use crate::reject::{
    evaluate_reject, oracle_predictor, RejectEvaluation, RejectPredictor, DEFAULT_RANDOMIZATION,
};
use crate::rng::Rng;
use crate::simdata::{generate, sample_features, ModelId, ModelSpec};
use crate::varpipe::{
    best_candidate_oracle, empirical_l2_error, fit_f_dictionary, fit_variance_with_dictionary,
    Mode, Selector, VariancePipeline,
};

pub const DEFAULT_EPSILONS: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "C")]
    C,
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "Best")]
    Best,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "plugin-tree")]
    PluginTree,
    #[serde(rename = "plugin-rf")]
    PluginRf,
    #[serde(rename = "plugin-MS")]
    PluginMs,
    #[serde(rename = "plugin-C")]
    PluginC,
    #[serde(rename = "plugin-knn")]
    PluginKnn,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::C,
        Method::Ms,
        Method::Best,
        Method::Oracle,
        Method::PluginTree,
        Method::PluginRf,
        Method::PluginMs,
        Method::PluginC,
        Method::PluginKnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::C => "C",
            Method::Ms => "MS",
            Method::Best => "Best",
            Method::Oracle => "oracle",
            Method::PluginTree => "plugin-tree",
            Method::PluginRf => "plugin-rf",
            Method::PluginMs => "plugin-MS",
            Method::PluginC => "plugin-C",
            Method::PluginKnn => "plugin-knn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(key))
            .ok_or_else(|| {
                let valid: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!(
                    "unknown method {s:?}; valid methods: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Table1,
    OracleReject,
    PluginReject,
}

impl RunKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            RunKind::Table1 => "table1",
            RunKind::OracleReject => "oracle_reject",
            RunKind::PluginReject => "plugin_reject",
        }
    }

    fn allowed(self) -> &'static [Method] {
        match self {
            RunKind::Table1 => &[Method::C, Method::Ms, Method::Best],
            RunKind::OracleReject => &[Method::Oracle],
            RunKind::PluginReject => &[
                Method::PluginTree,
                Method::PluginRf,
                Method::PluginC,
                Method::PluginMs,
                Method::PluginKnn,
            ],
        }
    }

    fn default_methods(self) -> Vec<Method> {
        match self {
            RunKind::Table1 => vec![Method::C, Method::Ms, Method::Best],
            RunKind::OracleReject => vec![Method::Oracle],
            RunKind::PluginReject => vec![
                Method::PluginTree,
                Method::PluginRf,
                Method::PluginC,
                Method::PluginMs,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<ModelId>,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_agg: usize,
    /// Calibration sample size for the reject-option CDF.
    pub calib_size: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub reps: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    /// Empty means the run's default method set.
    pub methods: Vec<Method>,
    pub output_dir: Option<PathBuf>,
    /// Width `u` of the tie-breaking perturbation.
    pub randomization: f64,
    #[serde(skip)]
    pub dictionary: DictionaryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            n: 1000,
            n_agg: 1000,
            calib_size: 100,
            t: 1000,
            reps: 20,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            seed: 1,
            methods: Vec::new(),
            output_dir: None,
            randomization: DEFAULT_RANDOMIZATION,
            dictionary: DictionaryConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, kind: RunKind) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        for (name, v) in [
            ("n", self.n),
            ("N", self.n_agg),
            ("T", self.t),
            ("reps", self.reps),
            ("calib_size", self.calib_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return Err(Error::Config(format!("epsilon {e} outside [0, 1)")));
        }
        if kind != RunKind::Table1 && self.epsilons.is_empty() {
            return Err(Error::Config("no epsilon values given".into()));
        }
        if !(self.randomization > 0.0 && self.randomization.is_finite()) {
            return Err(Error::Config("randomization width must be positive".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| !kind.allowed().contains(m)) {
            let valid: Vec<_> = kind.allowed().iter().map(|m| m.name()).collect();
            return Err(Error::Config(format!(
                "method {m} does not apply to {}; valid methods: {}",
                kind.file_stem(),
                valid.join(", ")
            )));
        }
        Ok(())
    }

    fn methods_for(&self, kind: RunKind) -> Vec<Method> {
        if self.methods.is_empty() {
            kind.default_methods()
        } else {
            self.methods.clone()
        }
    }

    fn replication_rng(&self, rep: usize) -> Rng {
        Rng::new(self.seed).substream(rep as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: ModelId,
    pub method: Method,
    pub epsilon: Option<f64>,
    pub err_mean: f64,
    pub err_std: f64,
    pub rate_mean: Option<f64>,
    pub rate_std: Option<f64>,
    /// Values entering the error statistics.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RawRow {
    pub model: ModelId,
    pub method: Method,
    pub rep: usize,
    pub epsilon: Option<f64>,
    pub err: f64,
    pub rate: Option<f64>,
    pub all_rejected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub model: ModelId,
    pub rep: usize,
    pub message: String,
}

/// Post-fit invariants of one replication's MS and C pipelines.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineChecks {
    pub model: ModelId,
    pub rep: usize,
    /// Smallest variance prediction over the test sample (both pipelines).
    pub min_variance: f64,
    /// MS variance risk equals the minimum over its 12 candidates.
    pub ms_is_argmin: bool,
    /// C variance risk minus the best single candidate's risk.
    pub c_excess_over_best_single: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub kind: RunKind,
    pub n: usize,
    pub n_agg: usize,
    pub rows: Vec<SummaryRow>,
    pub raw: Vec<RawRow>,
    pub failures: Vec<Failure>,
    pub checks: Vec<PipelineChecks>,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RunSummary {
    pub fn row(&self, model: ModelId, method: Method, epsilon: Option<f64>) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.method == method && r.epsilon == epsilon)
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<String>| {
            w.write_record(&rec).expect("in-memory write")
        };
        match self.kind {
            RunKind::Table1 => {
                write(
                    &mut w,
                    ["model", "method", "n", "N", "err_mean", "err_std"]
                        .map(String::from)
                        .to_vec(),
                );
                for r in &self.rows {
                    write(
                        &mut w,
                        vec![
                            r.model.to_string(),
                            r.method.to_string(),
                            self.n.to_string(),
                            self.n_agg.to_string(),
                            r.err_mean.to_string(),
                            r.err_std.to_string(),
                        ],
                    );
                }
            }
            _ => {
                write(
                    &mut w,
                    [
                        "model",
                        "method",
                        "epsilon",
                        "err_mean",
                        "err_std",
                        "rate_mean",
                        "rate_std",
                    ]
                    .map(String::from)
                    .to_vec(),
                );
                for r in &self.rows {
                    write(
                        &mut w,
                        vec![
                            r.model.to_string(),
                            r.method.to_string(),
                            fmt_opt(r.epsilon),
                            r.err_mean.to_string(),
                            r.err_std.to_string(),
                            fmt_opt(r.rate_mean),
                            fmt_opt(r.rate_std),
                        ],
                    );
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    /// Variance-error runs: one row per replication with each method's error.
    /// Reject runs: one row per (replication, method, epsilon).
    pub fn raw_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self.kind {
            RunKind::Table1 => {
                let mut methods: Vec<Method> = self.raw.iter().map(|r| r.method).collect();
                methods.sort();
                methods.dedup();
                let mut header = vec!["model".to_string(), "n".into(), "N".into(), "rep".into()];
                header.extend(methods.iter().map(|m| m.to_string()));
                w.write_record(&header).expect("in-memory write");
                let mut per_rep: BTreeMap<(ModelId, usize), BTreeMap<Method, f64>> =
                    BTreeMap::new();
                for r in &self.raw {
                    per_rep
                        .entry((r.model, r.rep))
                        .or_default()
                        .insert(r.method, r.err);
                }
                for ((model, rep), errs) in per_rep {
                    let mut rec = vec![
                        model.to_string(),
                        self.n.to_string(),
                        self.n_agg.to_string(),
                        rep.to_string(),
                    ];
                    rec.extend(
                        methods
                            .iter()
                            .map(|m| errs.get(m).map_or(String::new(), f64::to_string)),
                    );
                    w.write_record(&rec).expect("in-memory write");
                }
            }
            _ => {
                w.write_record([
                    "model",
                    "method",
                    "rep",
                    "epsilon",
                    "err",
                    "rate",
                    "all_rejected",
                ])
                .expect("in-memory write");
                for r in &self.raw {
                    w.write_record([
                        r.model.to_string(),
                        r.method.to_string(),
                        r.rep.to_string(),
                        fmt_opt(r.epsilon),
                        r.err.to_string(),
                        fmt_opt(r.rate),
                        r.all_rejected.to_string(),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    /// Write `<stem>_summary.csv` and `<stem>_raw.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = self.kind.file_stem();
        let summary = dir.join(format!("{stem}_summary.csv"));
        let raw = dir.join(format!("{stem}_raw.csv"));
        std::fs::write(&summary, self.summary_csv())?;
        std::fs::write(&raw, self.raw_csv())?;
        Ok((summary, raw))
    }

    fn finish(mut self, cfg: &ExperimentConfig) -> Result<Self> {
        self.rows = summarize(&self.raw);
        if let Some(dir) = &cfg.output_dir {
            self.write(dir)?;
        }
        Ok(self)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn summarize(raw: &[RawRow]) -> Vec<SummaryRow> {
    // group in first-seen order
    let mut keys: Vec<(ModelId, Method, Option<u64>)> = Vec::new();
    let mut groups: Vec<Vec<&RawRow>> = Vec::new();
    for r in raw {
        let key = (r.model, r.method, r.epsilon.map(f64::to_bits));
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    keys.iter()
        .zip(groups)
        .map(|(&(model, method, eps), rows)| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| !r.all_rejected)
                .map(|r| r.err)
                .collect();
            let (err_mean, err_std) = mean_std(&errs);
            let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate).collect();
            let (rate_mean, rate_std) = if rates.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&rates);
                (Some(m), Some(s))
            };
            SummaryRow {
                model,
                method,
                epsilon: eps.map(f64::from_bits),
                err_mean,
                err_std,
                rate_mean,
                rate_std,
                count: errs.len(),
            }
        })
        .collect()
}

/// Run `job` on a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(job))
}

type RepOutput = (Vec<RawRow>, Option<PipelineChecks>);

fn collect_replications(
    cfg: &ExperimentConfig,
    kind: RunKind,
    run_one: impl Fn(ModelId, usize) -> Result<RepOutput> + Sync,
) -> RunSummary {
    let mut summary = RunSummary {
        kind,
        n: cfg.n,
        n_agg: cfg.n_agg,
        rows: Vec::new(),
        raw: Vec::new(),
        failures: Vec::new(),
        checks: Vec::new(),
    };
    for &model in &cfg.models {
        let results: Vec<Result<RepOutput>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_one(model, rep))
            .collect();
        for (rep, res) in results.into_iter().enumerate() {
            match res {
                Ok((rows, checks)) => {
                    summary.raw.extend(rows);
                    summary.checks.extend(checks);
                }
                Err(e) => summary.failures.push(Failure {
                    model,
                    rep,
                    message: e.to_string(),
                }),
            }
        }
    }
    summary
}

fn generate_labeled(spec: &ModelSpec, n: usize, rng: &Rng, key: u64) -> Result<Dataset> {
    generate(spec, n, &mut rng.substream(key))
}

fn pipeline_checks(
    model: ModelId,
    rep: usize,
    ms: &VariancePipeline,
    c: &VariancePipeline,
    dt: &Dataset,
) -> PipelineChecks {
    let min_variance = dt
        .rows()
        .flat_map(|row| [ms.predict_variance(row), c.predict_variance(row)])
        .fold(f64::INFINITY, f64::min);
    let ms_is_argmin = match ms.var_selector() {
        Selector::Index(j) => ms.var_risks().iter().all(|r| ms.var_risks()[*j] <= *r),
        Selector::Weights(_) => false,
    };
    let best_single = c.var_risks().iter().copied().fold(f64::INFINITY, f64::min);
    PipelineChecks {
        model,
        rep,
        min_variance,
        ms_is_argmin,
        c_excess_over_best_single: c.var_objective() - best_single,
    }
}

/// Variance-estimation study: MS, C and best-single-pair errors per replication.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate(RunKind::Table1)?;
    let methods = cfg.methods_for(RunKind::Table1);
    let summary = collect_replications(cfg, RunKind::Table1, |model, rep| {
        let spec = ModelSpec::new(model);
        let rng = cfg.replication_rng(rep);
        let dn = generate_labeled(&spec, cfg.n, &rng, 1)?;
        let dbig = generate_labeled(&spec, cfg.n_agg, &rng, 2)?;
        let dt = generate_labeled(&spec, cfg.t, &rng, 3)?;
        let mut rows = Vec::new();
        let mut record = |method, err| {
            rows.push(RawRow {
                model,
                method,
                rep,
                epsilon: None,
                err,
                rate: None,
                all_rejected: false,
            })
        };

        let mut checks = None;
        if methods.iter().any(|m| matches!(m, Method::C | Method::Ms)) {
            let (ms, c) = fit_both(&dn, &dbig, &cfg.dictionary, &rng.substream(4))?;
            for &m in &methods {
                match m {
                    Method::Ms => record(
                        m,
                        empirical_l2_error(|x| ms.predict_variance(x), &spec, &dt)?,
                    ),
                    Method::C => record(
                        m,
                        empirical_l2_error(|x| c.predict_variance(x), &spec, &dt)?,
                    ),
                    _ => {}
                }
            }
            checks = Some(pipeline_checks(model, rep, &ms, &c, &dt));
        }
        if methods.contains(&Method::Best) {
            let all = dn.concat(&dbig)?;
            let best = best_candidate_oracle(&all, &spec, &dt, &cfg.dictionary, &rng.substream(5))?;
            record(Method::Best, best.error);
        }
        // keep the configured method order within a replication
        rows.sort_by_key(|r| methods.iter().position(|m| *m == r.method));
        Ok((rows, checks))
    });
    summary.finish(cfg)
}

/// MS and C pipelines sharing one stage-one dictionary.
pub fn fit_both(
    dn: &Dataset,
    dbig: &Dataset,
    dictionary: &DictionaryConfig,
    rng: &Rng,
) -> Result<(VariancePipeline, VariancePipeline)> {
    let f_dictionary = Arc::new(fit_f_dictionary(dn, dictionary, rng)?);
    let ms = fit_variance_with_dictionary(
        Mode::Ms,
        Arc::clone(&f_dictionary),
        dn,
        dbig,
        dictionary,
        rng,
    )?;
    let c = fit_variance_with_dictionary(Mode::C, f_dictionary, dn, dbig, dictionary, rng)?;
    Ok((ms, c))
}

/// Reject option with the true regression and variance functions.
pub fn run_oracle_reject(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate(RunKind::OracleReject)?;
    let summary = collect_replications(cfg, RunKind::OracleReject, |model, rep| {
        let spec = ModelSpec::new(model);
        let rng = cfg.replication_rng(rep);
        let calib = sample_features(&spec, cfg.calib_size, &mut rng.substream(1));
        let dt = generate_labeled(&spec, cfg.t, &rng, 2)?;
        let rule = oracle_predictor(&spec, calib.chunks_exact(spec.dim))?;
        let mut rows = Vec::with_capacity(cfg.epsilons.len());
        for (k, &eps) in cfg.epsilons.iter().enumerate() {
            let eval = evaluate_reject(&rule, &dt, eps, &mut rng.substream(100 + k as u64))?;
            rows.push(reject_row(model, Method::Oracle, rep, eps, eval));
        }
        Ok((rows, None))
    });
    summary.finish(cfg)
}

fn reject_row(
    model: ModelId,
    method: Method,
    rep: usize,
    eps: f64,
    eval: RejectEvaluation,
) -> RawRow {
    RawRow {
        model,
        method,
        rep,
        epsilon: Some(eps),
        err: eval.err,
        rate: Some(eval.rate),
        all_rejected: eval.all_rejected,
    }
}

/// Squared residuals of `f_hat` as new targets on the same features.
fn squared_residuals(data: &Dataset, f_hat: &Regressor) -> Result<Dataset> {
    let z = data
        .rows()
        .zip(data.y())
        .map(|(row, y)| (y - f_hat.predict(row)).powi(2))
        .collect();
    data.with_targets(z)
}

/// Plug-in reject option: each method supplies an estimate of the regression
/// and of the variance function; the single-learner methods fit the
/// regression on `D_n` and the variance on `D_N`'s squared residuals.
pub fn run_plugin_reject(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate(RunKind::PluginReject)?;
    let methods = cfg.methods_for(RunKind::PluginReject);
    let summary = collect_replications(cfg, RunKind::PluginReject, |model, rep| {
        let spec = ModelSpec::new(model);
        let rng = cfg.replication_rng(rep);
        let dn = generate_labeled(&spec, cfg.n, &rng, 1)?;
        let dbig = generate_labeled(&spec, cfg.n_agg, &rng, 2)?;
        let calib = sample_features(&spec, cfg.calib_size, &mut rng.substream(3));
        let dt = generate_labeled(&spec, cfg.t, &rng, 4)?;
        let calib_rows = || calib.chunks_exact(spec.dim);

        let pipelines = if methods
            .iter()
            .any(|m| matches!(m, Method::PluginC | Method::PluginMs))
        {
            Some(fit_both(&dn, &dbig, &cfg.dictionary, &rng.substream(5))?)
        } else {
            None
        };

        let mut rows = Vec::new();
        for (mi, &method) in methods.iter().enumerate() {
            let stream = rng.substream(1_000 + mi as u64);
            let single = |fit: &dyn Fn(&Dataset, &Rng) -> Result<Regressor>| -> Result<(Regressor, Regressor)> {
                let f_hat = fit(&dn, &stream.substream(1))?;
                let s_hat = fit(&squared_residuals(&dbig, &f_hat)?, &stream.substream(2))?;
                Ok((f_hat, s_hat))
            };
            let tree =
                |d: &Dataset, _: &Rng| fit_tree(d, &cfg.dictionary.tree).map(Regressor::from);
            let forest = |d: &Dataset, r: &Rng| {
                fit_forest(d, cfg.dictionary.forest_ntrees[2], r).map(Regressor::from)
            };
            let knn =
                |d: &Dataset, _: &Rng| fit_knn(d, cfg.dictionary.knn_ks[1]).map(Regressor::from);
            let mut calib_rng = stream.substream(3);
            let mut evals = Vec::with_capacity(cfg.epsilons.len());
            let mut run_eps = |rule: &dyn crate::reject::RejectRule| -> Result<()> {
                for (k, &eps) in cfg.epsilons.iter().enumerate() {
                    let eval = evaluate_reject(
                        &DynRule(rule),
                        &dt,
                        eps,
                        &mut stream.substream(100 + k as u64),
                    )?;
                    evals.push((eps, eval));
                }
                Ok(())
            };
            match method {
                Method::PluginTree | Method::PluginRf | Method::PluginKnn => {
                    let (f_hat, s_hat) = match method {
                        Method::PluginTree => single(&tree)?,
                        Method::PluginRf => single(&forest)?,
                        _ => single(&knn)?,
                    };
                    let rule = RejectPredictor::calibrate(
                        |x: &[f64]| f_hat.predict(x),
                        |x: &[f64]| s_hat.predict(x).max(0.0),
                        calib_rows(),
                        cfg.randomization,
                        &mut calib_rng,
                    )?;
                    run_eps(&rule)?;
                }
                Method::PluginC | Method::PluginMs => {
                    let (ms, c) = pipelines
                        .as_ref()
                        .expect("pipelines fitted for aggregate methods");
                    let p = if method == Method::PluginC { c } else { ms };
                    let rule = RejectPredictor::calibrate(
                        |x: &[f64]| p.predict_f(x),
                        |x: &[f64]| p.predict_variance(x),
                        calib_rows(),
                        cfg.randomization,
                        &mut calib_rng,
                    )?;
                    run_eps(&rule)?;
                }
                other => {
                    return Err(Error::Config(format!(
                        "method {other} is not a plug-in method"
                    )))
                }
            }
            rows.extend(
                evals
                    .into_iter()
                    .map(|(eps, e)| reject_row(model, method, rep, eps, e)),
            );
        }
        let checks = pipelines
            .as_ref()
            .map(|(ms, c)| pipeline_checks(model, rep, ms, c, &dt));
        Ok((rows, checks))
    });
    summary.finish(cfg)
}

struct DynRule<'a>(&'a dyn crate::reject::RejectRule);

impl crate::reject::RejectRule for DynRule<'_> {
    fn decide(&self, x: &[f64], epsilon: f64, rng: &mut Rng) -> crate::reject::RejectOutcome {
        self.0.decide(x, epsilon, rng)
    }
}
