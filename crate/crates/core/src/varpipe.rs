//! Two-stage residual-based estimation of the conditional variance.
//!
//! Stage one aggregates a dictionary of regression machines fitted on `D_n`
//! (selector fitted on `D_N`). Stage two fits the same machine family on `D_n`
//! against squared residuals of the stage-one aggregate and aggregates those
//! variance candidates on `D_N`, whose squared residuals serve as targets.
//! Variance candidates are clipped at zero before they are aggregated, so
//! every aggregate is nonnegative.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregate::{argmin, combine, convex_solve, CandidateSet, SimplexWeights};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regressors::{build_dictionary, DictionaryConfig, Regressor};
use crate::rng::Rng;
use crate::simdata::ModelSpec;

const STREAM_F_DICTIONARY: u64 = 0;
const STREAM_VAR_DICTIONARY: u64 = 1;
const STREAM_BEST_F: u64 = 2;
const STREAM_BEST_VAR: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "C")]
    C,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ms => "MS",
            Mode::C => "C",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MS" => Ok(Mode::Ms),
            "C" => Ok(Mode::C),
            _ => Err(Error::Config(format!(
                "unknown aggregation mode {s:?}; valid modes: MS, C"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Index(usize),
    Weights(SimplexWeights),
}

impl Selector {
    fn fit(mode: Mode, cands: &CandidateSet) -> Result<(Selector, f64)> {
        match mode {
            Mode::Ms => {
                let risks = cands.risks();
                let s = argmin(&risks);
                Ok((Selector::Index(s), risks[s]))
            }
            Mode::C => {
                let sol = convex_solve(cands)?;
                Ok((Selector::Weights(sol.weights), sol.objective))
            }
        }
    }

    /// Aggregate of `machine(j)` over the machines this selector uses.
    fn apply(&self, mut machine: impl FnMut(usize) -> f64) -> f64 {
        match self {
            Selector::Index(j) => machine(*j),
            Selector::Weights(w) => {
                let w = w.as_slice();
                combine(
                    w,
                    (0..w.len()).map(|j| if w[j] != 0.0 { machine(j) } else { 0.0 }),
                )
            }
        }
    }
}

/// A fitted MS or C variance estimator, with its stage-one regression aggregate.
#[derive(Clone, Debug)]
pub struct VariancePipeline {
    mode: Mode,
    f_dictionary: Arc<Vec<Regressor>>,
    f_selector: Selector,
    var_dictionary: Vec<Regressor>,
    var_selector: Selector,
    f_risks: Vec<f64>,
    var_risks: Vec<f64>,
    f_objective: f64,
    var_objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineSummary {
    pub mode: Mode,
    pub f_selector: Selector,
    pub var_selector: Selector,
    /// Aggregation-sample risk of each regression machine.
    pub f_risks: Vec<f64>,
    /// Aggregation-sample risk of each (clipped) variance candidate.
    pub var_risks: Vec<f64>,
    pub f_objective: f64,
    pub var_objective: f64,
}

impl VariancePipeline {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn f_selector(&self) -> &Selector {
        &self.f_selector
    }

    pub fn var_selector(&self) -> &Selector {
        &self.var_selector
    }

    pub fn f_dictionary(&self) -> &[Regressor] {
        &self.f_dictionary
    }

    pub fn var_dictionary(&self) -> &[Regressor] {
        &self.var_dictionary
    }

    /// Aggregation-sample risks of the clipped variance candidates.
    pub fn var_risks(&self) -> &[f64] {
        &self.var_risks
    }

    /// Aggregation-sample risk of the fitted variance aggregate.
    pub fn var_objective(&self) -> f64 {
        self.var_objective
    }

    /// Stage-one regression aggregate.
    pub fn predict_f(&self, x: &[f64]) -> f64 {
        self.f_selector.apply(|j| self.f_dictionary[j].predict(x))
    }

    pub fn predict_variance(&self, x: &[f64]) -> f64 {
        self.var_selector
            .apply(|j| self.var_dictionary[j].predict(x).max(0.0))
    }

    pub fn summary(&self) -> PipelineSummary {
        PipelineSummary {
            mode: self.mode,
            f_selector: self.f_selector.clone(),
            var_selector: self.var_selector.clone(),
            f_risks: self.f_risks.clone(),
            var_risks: self.var_risks.clone(),
            f_objective: self.f_objective,
            var_objective: self.var_objective,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("summary holds finite numbers")
    }
}

/// Assemble a pipeline from already fitted parts (diagnostics and tests).
pub fn assemble_pipeline(
    f_dictionary: Vec<Regressor>,
    f_selector: Selector,
    var_dictionary: Vec<Regressor>,
    var_selector: Selector,
) -> Result<VariancePipeline> {
    let mode = match (&f_selector, &var_selector) {
        (Selector::Index(_), Selector::Index(_)) => Mode::Ms,
        (Selector::Weights(_), Selector::Weights(_)) => Mode::C,
        _ => {
            return Err(Error::input(
                "both selectors must be indices (MS) or weights (C)",
            ))
        }
    };
    for (sel, dict) in [
        (&f_selector, &f_dictionary),
        (&var_selector, &var_dictionary),
    ] {
        let ok = match sel {
            Selector::Index(j) => *j < dict.len(),
            Selector::Weights(w) => w.len() == dict.len(),
        };
        if !ok {
            return Err(Error::input("selector does not match its dictionary"));
        }
    }
    Ok(VariancePipeline {
        mode,
        f_dictionary: Arc::new(f_dictionary),
        f_selector,
        var_dictionary,
        var_selector,
        f_risks: Vec::new(),
        var_risks: Vec::new(),
        f_objective: f64::NAN,
        var_objective: f64::NAN,
    })
}

fn check_samples(dn: &Dataset, dbig: &Dataset) -> Result<()> {
    if dn.is_empty() || dbig.is_empty() {
        return Err(Error::input("both samples must be nonempty"));
    }
    if dn.dim() != dbig.dim() {
        return Err(Error::input(format!(
            "sample dimensions differ: {} vs {}",
            dn.dim(),
            dbig.dim()
        )));
    }
    Ok(())
}

/// Stage-one dictionary on `D_n`. Shared by the MS and C pipelines of one
/// replication, which therefore see identical regression machines.
pub fn fit_f_dictionary(
    dn: &Dataset,
    config: &DictionaryConfig,
    rng: &Rng,
) -> Result<Vec<Regressor>> {
    build_dictionary(dn, config, &rng.substream(STREAM_F_DICTIONARY))
        .map_err(|e| e.at_stage("regression dictionary"))
}

pub fn fit_variance(
    mode: Mode,
    dn: &Dataset,
    dbig: &Dataset,
    config: &DictionaryConfig,
    rng: &Rng,
) -> Result<VariancePipeline> {
    check_samples(dn, dbig)?;
    let f_dictionary = Arc::new(fit_f_dictionary(dn, config, rng)?);
    fit_variance_with_dictionary(mode, f_dictionary, dn, dbig, config, rng)
}

/// Steps two to five of the pipeline on a given stage-one dictionary.
pub fn fit_variance_with_dictionary(
    mode: Mode,
    f_dictionary: Arc<Vec<Regressor>>,
    dn: &Dataset,
    dbig: &Dataset,
    config: &DictionaryConfig,
    rng: &Rng,
) -> Result<VariancePipeline> {
    check_samples(dn, dbig)?;
    if f_dictionary.is_empty() {
        return Err(Error::input("empty regression dictionary"));
    }

    // (2) regression selector on D_N
    let f_columns: Vec<Vec<f64>> = f_dictionary.iter().map(|m| m.predict_all(dbig)).collect();
    let f_cands = CandidateSet::from_columns(&f_columns, dbig.y().to_vec())
        .map_err(|e| e.at_stage("regression aggregation"))?;
    let f_risks = f_cands.risks();
    let (f_selector, f_objective) =
        Selector::fit(mode, &f_cands).map_err(|e| e.at_stage("regression aggregation"))?;

    // (3) squared residuals of the aggregate on D_n
    let z_small: Vec<f64> = dn
        .rows()
        .zip(dn.y())
        .map(|(row, y)| (y - f_selector.apply(|j| f_dictionary[j].predict(row))).powi(2))
        .collect();

    // (4) variance dictionary on D_n
    let var_dictionary = build_dictionary(
        &dn.with_targets(z_small)?,
        config,
        &rng.substream(STREAM_VAR_DICTIONARY),
    )
    .map_err(|e| e.at_stage("variance dictionary"))?;

    // (5) variance selector on D_N against its own squared residuals
    let z_big: Vec<f64> = (0..dbig.len())
        .map(|i| (dbig.y()[i] - f_selector.apply(|j| f_columns[j][i])).powi(2))
        .collect();
    let var_columns: Vec<Vec<f64>> = var_dictionary
        .iter()
        .map(|m| dbig.rows().map(|row| m.predict(row).max(0.0)).collect())
        .collect();
    let var_cands = CandidateSet::from_columns(&var_columns, z_big)
        .map_err(|e| e.at_stage("variance aggregation"))?;
    let var_risks = var_cands.risks();
    let (var_selector, var_objective) =
        Selector::fit(mode, &var_cands).map_err(|e| e.at_stage("variance aggregation"))?;

    Ok(VariancePipeline {
        mode,
        f_dictionary,
        f_selector,
        var_dictionary,
        var_selector,
        f_risks,
        var_risks,
        f_objective,
        var_objective,
    })
}

/// Mean squared deviation between an estimate and the true variance over the
/// features of `dt`.
pub fn empirical_l2_error(
    sigma2_hat: impl Fn(&[f64]) -> f64,
    spec: &ModelSpec,
    dt: &Dataset,
) -> Result<f64> {
    if dt.is_empty() {
        return Err(Error::input("test sample is empty"));
    }
    if dt.dim() != spec.dim {
        return Err(Error::input(
            "test sample dimension does not match the model",
        ));
    }
    let total: f64 = dt
        .rows()
        .map(|row| (sigma2_hat(row) - spec.sigma2_star_unchecked(row)).powi(2))
        .sum();
    Ok(total / dt.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct BestCandidate {
    /// Regression machine index.
    pub f_index: usize,
    /// Variance machine index.
    pub var_index: usize,
    pub error: f64,
    /// Test error of every (regression, variance) pair, regression-major.
    pub errors: Vec<f64>,
}

/// Best single (regression, variance) machine pair in hindsight.
///
/// Fits the regression dictionary on `d_all`; for each regression machine fits
/// the variance dictionary on `d_all` against its squared residuals; returns
/// the pair with the smallest test error on `dt`.
pub fn best_candidate_oracle(
    d_all: &Dataset,
    spec: &ModelSpec,
    dt: &Dataset,
    config: &DictionaryConfig,
    rng: &Rng,
) -> Result<BestCandidate> {
    check_samples(d_all, dt)?;
    let f_dictionary = build_dictionary(d_all, config, &rng.substream(STREAM_BEST_F))
        .map_err(|e| e.at_stage("oracle regression dictionary"))?;
    let mut errors = Vec::with_capacity(f_dictionary.len() * f_dictionary.len());
    for (s, f) in f_dictionary.iter().enumerate() {
        let z: Vec<f64> = d_all
            .rows()
            .zip(d_all.y())
            .map(|(row, y)| (y - f.predict(row)).powi(2))
            .collect();
        let var_dictionary = build_dictionary(
            &d_all.with_targets(z)?,
            config,
            &rng.substream(STREAM_BEST_VAR + s as u64),
        )
        .map_err(|e| e.at_stage("oracle variance dictionary"))?;
        for m in &var_dictionary {
            errors.push(empirical_l2_error(|x| m.predict(x).max(0.0), spec, dt)?);
        }
    }
    let best = argmin(&errors);
    let per_f = errors.len() / f_dictionary.len();
    Ok(BestCandidate {
        f_index: best / per_f,
        var_index: best % per_f,
        error: errors[best],
        errors,
    })
}
