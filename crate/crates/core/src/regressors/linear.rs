//! Penalized linear regression: ridge (closed form), lasso and elastic net
//! (cyclic coordinate descent).
//!
//! All three work on standardized features (centered, scaled to unit
//! population variance) with a centered response and an unpenalized
//! intercept. The penalized objective is
//!
//! ```text
//! (1/2n) |y - b - X beta|^2 + lambda * (alpha |beta|_1 + (1 - alpha)/2 |beta|^2)
//! ```
//!
//! so ridge solves `(X'X/n + lambda I) beta = X'y/n` and lasso is `alpha = 1`.
//! Constant features get a zero coefficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const CD_TOLERANCE: f64 = 1e-7;
pub const CD_MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Ridge,
    Lasso,
    Enet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    kind: LinearKind,
    lambda: f64,
    alpha: f64,
    intercept: f64,
    coef: Vec<f64>,
    std_coef: Vec<f64>,
    sweeps: usize,
}

impl LinearModel {
    /// Assemble a model from raw-scale parameters.
    pub fn from_parts(kind: LinearKind, intercept: f64, coef: Vec<f64>) -> Self {
        Self {
            kind,
            lambda: 0.0,
            alpha: 0.0,
            intercept,
            std_coef: coef.clone(),
            coef,
            sweeps: 0,
        }
    }

    pub fn kind(&self) -> LinearKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.coef.len()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Coefficients on the raw feature scale.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Coefficients on the standardized feature scale.
    pub fn standardized_coefficients(&self) -> &[f64] {
        &self.std_coef
    }

    /// Coordinate-descent sweeps used (0 for the closed-form ridge).
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Standardized copy of the design, stored column-major.
struct Standardized {
    n: usize,
    means: Vec<f64>,
    scales: Vec<f64>,
    columns: Vec<Vec<f64>>,
    y_mean: f64,
    y_centered: Vec<f64>,
}

impl Standardized {
    fn new(data: &Dataset) -> Self {
        let n = data.len();
        let d = data.dim();
        let nf = n as f64;
        let mut means = vec![0.0; d];
        for row in data.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= nf);
        let mut columns = vec![Vec::with_capacity(n); d];
        for row in data.rows() {
            for (j, v) in row.iter().enumerate() {
                columns[j].push(v - means[j]);
            }
        }
        let mut scales = vec![0.0; d];
        for (col, s) in columns.iter_mut().zip(scales.iter_mut()) {
            let var = col.iter().map(|v| v * v).sum::<f64>() / nf;
            // relative test so that round-off in the mean is not mistaken for signal
            let magnitude = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if var.sqrt() > 1e-12 * (1.0 + magnitude) && var > 0.0 {
                *s = var.sqrt();
                col.iter_mut().for_each(|v| *v /= *s);
            } else {
                col.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let y_mean = data.y().iter().sum::<f64>() / nf;
        let y_centered = data.y().iter().map(|v| v - y_mean).collect();
        Self {
            n,
            means,
            scales,
            columns,
            y_mean,
            y_centered,
        }
    }

    fn active(&self) -> Vec<usize> {
        (0..self.scales.len())
            .filter(|&j| self.scales[j] > 0.0)
            .collect()
    }

    fn to_model(
        &self,
        kind: LinearKind,
        lambda: f64,
        alpha: f64,
        std_coef: Vec<f64>,
        sweeps: usize,
    ) -> LinearModel {
        let coef: Vec<f64> = std_coef
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean
            - coef
                .iter()
                .zip(&self.means)
                .map(|(c, m)| c * m)
                .sum::<f64>();
        LinearModel {
            kind,
            lambda,
            alpha,
            intercept,
            coef,
            std_coef,
            sweeps,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::input(format!(
            "penalty must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

pub fn fit_ridge(data: &Dataset, lambda: f64) -> Result<LinearModel> {
    check_lambda(lambda)?;
    if data.is_empty() {
        return Err(Error::input("ridge needs at least one row"));
    }
    let s = Standardized::new(data);
    let active = s.active();
    let p = active.len();
    let nf = s.n as f64;
    let mut std_coef = vec![0.0; data.dim()];
    if p > 0 {
        let gram = DMatrix::from_fn(p, p, |a, b| {
            let dot: f64 = s.columns[active[a]]
                .iter()
                .zip(&s.columns[active[b]])
                .map(|(u, v)| u * v)
                .sum();
            dot / nf + if a == b { lambda } else { 0.0 }
        });
        let rhs = DVector::from_fn(p, |a, _| {
            s.columns[active[a]]
                .iter()
                .zip(&s.y_centered)
                .map(|(u, v)| u * v)
                .sum::<f64>()
                / nf
        });
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("ridge system is not positive definite"))?;
        let l_diag = chol.l_dirty().diagonal();
        let max_pivot = l_diag.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min_pivot = l_diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if min_pivot <= 1e-7 * max_pivot {
            return Err(Error::numerical(
                "ridge system is singular (collinear features)",
            ));
        }
        let beta = chol.solve(&rhs);
        for (a, &j) in active.iter().enumerate() {
            std_coef[j] = beta[a];
        }
    }
    Ok(s.to_model(LinearKind::Ridge, lambda, 0.0, std_coef, 0))
}

pub fn fit_lasso(data: &Dataset, lambda: f64) -> Result<LinearModel> {
    fit_coordinate_descent(data, LinearKind::Lasso, lambda, 1.0, CD_MAX_SWEEPS)
}

pub fn fit_enet(data: &Dataset, lambda: f64, alpha: f64) -> Result<LinearModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!(
            "elastic-net mixing must lie in [0, 1], got {alpha}"
        )));
    }
    fit_coordinate_descent(data, LinearKind::Enet, lambda, alpha, CD_MAX_SWEEPS)
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn fit_coordinate_descent(
    data: &Dataset,
    kind: LinearKind,
    lambda: f64,
    alpha: f64,
    max_sweeps: usize,
) -> Result<LinearModel> {
    check_lambda(lambda)?;
    if data.is_empty() {
        return Err(Error::input("coordinate descent needs at least one row"));
    }
    let s = Standardized::new(data);
    let nf = s.n as f64;
    let active = s.active();
    let l1 = lambda * alpha;
    let shrink = 1.0 + lambda * (1.0 - alpha);
    let mut beta = vec![0.0; data.dim()];
    let mut resid = s.y_centered.clone();

    for sweep in 1..=max_sweeps {
        let mut max_change = 0.0_f64;
        for &j in &active {
            let col = &s.columns[j];
            let old = beta[j];
            let rho = col.iter().zip(&resid).map(|(u, r)| u * r).sum::<f64>() / nf + old;
            let new = soft_threshold(rho, l1) / shrink;
            let delta = new - old;
            if delta != 0.0 {
                for (r, u) in resid.iter_mut().zip(col) {
                    *r -= u * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if !max_change.is_finite() {
            return Err(Error::Numerical {
                message: "coordinate descent diverged".into(),
                last_iterate: Some(beta),
            });
        }
        if max_change < CD_TOLERANCE {
            return Ok(s.to_model(kind, lambda, alpha, beta, sweep));
        }
    }
    Err(Error::Numerical {
        message: format!("coordinate descent did not converge in {max_sweeps} sweeps"),
        last_iterate: Some(beta),
    })
}
