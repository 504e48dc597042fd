//! Regression with a reject option.
//!
//! A predictor abstains on inputs whose (estimated) conditional variance lies
//! in the upper `epsilon` fraction of its distribution. The distribution is
//! an empirical CDF over a calibration sample; for plug-in predictors each
//! variance value is perturbed by `zeta ~ U[0, u]` so that ties cannot distort
//! the rejection rate.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simdata::ModelSpec;

pub const DEFAULT_RANDOMIZATION: f64 = 1e-9;
// slack for `1 - epsilon` being rounded just below a multiple of 1/N
const THRESHOLD_SLACK: f64 = 1e-12;

/// Empirical distribution function of a calibration sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("empirical CDF needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("empirical CDF values must be finite"));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of calibration values `<= v`.
    pub fn evaluate(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= v) as f64 / self.sorted.len() as f64
    }
}

/// ECDF of `sigma2_hat(X_i) + zeta_i` over the calibration rows.
pub fn calibrate_cdf<'a>(
    sigma2_hat: impl Fn(&[f64]) -> f64,
    rows: impl IntoIterator<Item = &'a [f64]>,
    u: f64,
    rng: &mut Rng,
) -> Result<EmpiricalCdf> {
    check_width(u)?;
    let values: Vec<f64> = rows
        .into_iter()
        .map(|x| sigma2_hat(x) + u * rng.uniform())
        .collect();
    EmpiricalCdf::from_values(values)
}

fn check_width(u: f64) -> Result<()> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::input(format!(
            "randomization width must be positive, got {u}"
        )));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::input(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

fn accepts(cdf: &EmpiricalCdf, score: f64, epsilon: f64) -> bool {
    cdf.evaluate(score) <= 1.0 - epsilon + THRESHOLD_SLACK
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RejectOutcome {
    Predict(f64),
    Reject,
}

impl RejectOutcome {
    pub fn is_reject(&self) -> bool {
        matches!(self, RejectOutcome::Reject)
    }
}

pub trait RejectRule {
    fn decide(&self, x: &[f64], epsilon: f64, rng: &mut Rng) -> RejectOutcome;
}

/// Plug-in predictor built from a regression estimate and a variance estimate.
pub struct RejectPredictor<F, S> {
    f_hat: F,
    sigma2_hat: S,
    cdf: EmpiricalCdf,
    u: f64,
}

impl<F, S> RejectPredictor<F, S>
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> f64,
{
    pub fn new(f_hat: F, sigma2_hat: S, cdf: EmpiricalCdf, u: f64) -> Result<Self> {
        check_width(u)?;
        Ok(Self {
            f_hat,
            sigma2_hat,
            cdf,
            u,
        })
    }

    /// Calibrate on the unlabeled `rows` and wrap up the predictor.
    pub fn calibrate<'a>(
        f_hat: F,
        sigma2_hat: S,
        rows: impl IntoIterator<Item = &'a [f64]>,
        u: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let cdf = calibrate_cdf(&sigma2_hat, rows, u, rng)?;
        Self::new(f_hat, sigma2_hat, cdf, u)
    }

    pub fn cdf(&self) -> &EmpiricalCdf {
        &self.cdf
    }
}

impl<F, S> RejectRule for RejectPredictor<F, S>
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> f64,
{
    /// Draws a fresh `zeta` for every call.
    fn decide(&self, x: &[f64], epsilon: f64, rng: &mut Rng) -> RejectOutcome {
        let score = (self.sigma2_hat)(x) + self.u * rng.uniform();
        if accepts(&self.cdf, score, epsilon) {
            RejectOutcome::Predict((self.f_hat)(x))
        } else {
            RejectOutcome::Reject
        }
    }
}

pub fn decide<R: RejectRule>(
    rule: &R,
    x: &[f64],
    epsilon: f64,
    rng: &mut Rng,
) -> Result<RejectOutcome> {
    check_epsilon(epsilon)?;
    Ok(rule.decide(x, epsilon, rng))
}

/// Rule using the true regression and variance functions, thresholded with an
/// ECDF of true variance values on a calibration sample.
#[derive(Clone, Debug)]
pub struct OracleRule {
    spec: ModelSpec,
    cdf: EmpiricalCdf,
}

pub fn oracle_predictor<'a>(
    spec: &ModelSpec,
    calibration_rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<OracleRule> {
    let mut values = Vec::new();
    for row in calibration_rows {
        values.push(spec.sigma2_star(row)?);
    }
    Ok(OracleRule {
        spec: *spec,
        cdf: EmpiricalCdf::from_values(values)?,
    })
}

impl OracleRule {
    pub fn cdf(&self) -> &EmpiricalCdf {
        &self.cdf
    }
}

impl RejectRule for OracleRule {
    fn decide(&self, x: &[f64], epsilon: f64, _rng: &mut Rng) -> RejectOutcome {
        if accepts(&self.cdf, self.spec.sigma2_star_unchecked(x), epsilon) {
            RejectOutcome::Predict(self.spec.f_star_unchecked(x))
        } else {
            RejectOutcome::Reject
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RejectEvaluation {
    /// Mean squared error over accepted points (0 when everything was rejected).
    pub err: f64,
    pub rate: f64,
    pub accepted: usize,
    /// Every test point was rejected; `err` carries no information.
    pub all_rejected: bool,
}

pub fn evaluate_reject<R: RejectRule>(
    rule: &R,
    dt: &Dataset,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<RejectEvaluation> {
    check_epsilon(epsilon)?;
    if dt.is_empty() {
        return Err(Error::input("test sample is empty"));
    }
    let mut accepted = 0usize;
    let mut sq = 0.0;
    for (row, y) in dt.rows().zip(dt.y()) {
        if let RejectOutcome::Predict(v) = rule.decide(row, epsilon, rng) {
            accepted += 1;
            sq += (y - v) * (y - v);
        }
    }
    let all_rejected = accepted == 0;
    Ok(RejectEvaluation {
        err: if all_rejected {
            0.0
        } else {
            sq / accepted as f64
        },
        rate: (dt.len() - accepted) as f64 / dt.len() as f64,
        accepted,
        all_rejected,
    })
}
