//! Model-selection and convex aggregation of candidate predictors.
//!
//! Both work on a [`CandidateSet`]: candidate predictions on an aggregation
//! sample plus the targets they should match. Model selection picks the
//! column with the smallest empirical risk; convex aggregation finds the
//! simplex weights minimizing the empirical risk of the weighted column sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressors::Regressor;

pub const SIMPLEX_TOLERANCE: f64 = 1e-12;
pub const PGD_MAX_ITER: usize = 100_000;
pub const PGD_DECREASE_TOL: f64 = 1e-10;
const PGD_PATIENCE: usize = 3;

/// Nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::input("simplex weights need at least one entry"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(
                "simplex weights must be finite and nonnegative",
            ));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "simplex weights sum to {total}, not 1"
            )));
        }
        Ok(Self(w))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn vertex(m: usize, j: usize) -> Self {
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("weights are finite")
    }
}

/// Candidate predictions (`rows x candidates`, row-major) and targets.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    preds: Vec<f64>,
    targets: Vec<f64>,
    m: usize,
}

impl CandidateSet {
    pub fn new(preds: Vec<f64>, targets: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 || targets.is_empty() {
            return Err(Error::input(
                "candidate set needs at least one candidate and one row",
            ));
        }
        if preds.len() != targets.len() * m {
            return Err(Error::input(format!(
                "{} predictions do not form {} rows x {m} candidates",
                preds.len(),
                targets.len()
            )));
        }
        if preds.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::input(
                "candidate predictions and targets must be finite",
            ));
        }
        Ok(Self { preds, targets, m })
    }

    /// Build from one prediction vector per candidate.
    pub fn from_columns(columns: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let n = targets.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::input(
                "candidate column length differs from target length",
            ));
        }
        let mut preds = Vec::with_capacity(n * columns.len());
        for i in 0..n {
            preds.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(preds, targets, columns.len())
    }

    pub fn candidates(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.preds.chunks_exact(self.m).map(|r| r[j]).collect()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.preds[i * self.m..(i + 1) * self.m]
    }

    /// Empirical risk of the weighted combination, computed from residuals.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let n = self.rows();
        (0..n)
            .map(|i| {
                let fit: f64 = self.row(i).iter().zip(w).map(|(p, q)| p * q).sum();
                (self.targets[i] - fit).powi(2)
            })
            .sum::<f64>()
            / n as f64
    }

    /// Per-candidate empirical risks.
    pub fn risks(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.m];
        for (row, t) in self.preds.chunks_exact(self.m).zip(&self.targets) {
            for (a, p) in acc.iter_mut().zip(row) {
                *a += (t - p) * (t - p);
            }
        }
        let n = self.rows() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Mean squared deviation between predictions and targets.
pub fn empirical_risk(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::input(format!(
            "risk needs equal nonzero lengths, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / preds.len() as f64)
}

/// Index of the first candidate with minimal empirical risk.
pub fn ms_select(cands: &CandidateSet) -> usize {
    argmin(&cands.risks())
}

pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = j;
        }
    }
    best
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> SimplexWeights {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        w.iter_mut().for_each(|x| *x /= total);
    }
    SimplexWeights(w)
}

#[derive(Clone, Debug)]
pub struct ConvexSolution {
    pub weights: SimplexWeights,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each projected-gradient step.
    pub trace: Vec<f64>,
}

pub fn convex_weights(cands: &CandidateSet) -> Result<SimplexWeights> {
    convex_solve(cands).map(|s| s.weights)
}

/// Simplex-constrained least squares.
///
/// Projected gradient descent from the barycenter with step `1/L`, where `L`
/// is the largest absolute row sum of the Hessian `(2/N) P'P`. Stops once the
/// objective has decreased by less than `1e-10` for three consecutive steps.
/// The iterate is then polished by an exact solve on its support and finally
/// compared against every vertex, so the returned objective never exceeds the
/// best single candidate's risk.
pub fn convex_solve(cands: &CandidateSet) -> Result<ConvexSolution> {
    let m = cands.candidates();
    if m == 1 {
        let objective = cands.objective(&[1.0]);
        return Ok(ConvexSolution {
            weights: SimplexWeights::vertex(1, 0),
            objective,
            iterations: 0,
            trace: vec![objective],
        });
    }
    let n = cands.rows() as f64;
    // objective(w) = w'Gw - 2 b'w + c
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut cross = DVector::<f64>::zeros(m);
    for (i, t) in cands.targets.iter().enumerate() {
        let row = cands.row(i);
        for a in 0..m {
            cross[a] += row[a] * t / n;
            for b in a..m {
                gram[(a, b)] += row[a] * row[b] / n;
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let lipschitz = (0..m)
        .map(|a| (0..m).map(|b| 2.0 * gram[(a, b)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let offset = cands.targets.iter().map(|t| t * t).sum::<f64>() / n;
    let quad = |w: &DVector<f64>| w.dot(&(&gram * w)) - 2.0 * cross.dot(w) + offset;

    let mut w = DVector::from_element(m, 1.0 / m as f64);
    let mut current = quad(&w);
    if !current.is_finite() {
        return Err(Error::numerical(
            "convex aggregation objective is not finite",
        ));
    }
    let mut trace = vec![current];
    let mut iterations = 0;
    if lipschitz > 0.0 {
        let mut stalled = 0;
        while iterations < PGD_MAX_ITER {
            iterations += 1;
            let grad = (&gram * &w - &cross) * 2.0;
            let step = &w - grad / lipschitz;
            let next = DVector::from_vec(project_simplex(step.as_slice()).0);
            let value = quad(&next);
            if !value.is_finite() {
                return Err(Error::Numerical {
                    message: "convex aggregation objective is not finite".into(),
                    last_iterate: Some(w.as_slice().to_vec()),
                });
            }
            let decrease = current - value;
            w = next;
            current = value;
            trace.push(value);
            stalled = if decrease < PGD_DECREASE_TOL {
                stalled + 1
            } else {
                0
            };
            if stalled >= PGD_PATIENCE {
                break;
            }
        }
    }

    current = cands.objective(w.as_slice());
    if let Some(polished) = polish_on_support(&gram, &cross, w.as_slice()) {
        let value = cands.objective(&polished);
        if value <= current {
            w = DVector::from_vec(polished);
            current = value;
        }
    }
    let risks = cands.risks();
    let best_vertex = argmin(&risks);
    if risks[best_vertex] < current {
        w = DVector::from_vec(SimplexWeights::vertex(m, best_vertex).0);
        current = risks[best_vertex];
    }
    Ok(ConvexSolution {
        weights: SimplexWeights(w.as_slice().to_vec()),
        objective: current,
        iterations,
        trace,
    })
}

/// Equality-constrained minimizer on the support of `w` (zero elsewhere), if
/// that system is nonsingular and its solution stays in the simplex.
fn polish_on_support(gram: &DMatrix<f64>, cross: &DVector<f64>, w: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
    let k = support.len();
    if k < 2 {
        return None;
    }
    // [2G_SS 1; 1' 0] [w; mu] = [2b_S; 1]
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for (a, &ja) in support.iter().enumerate() {
        for (b, &jb) in support.iter().enumerate() {
            kkt[(a, b)] = 2.0 * gram[(ja, jb)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = 2.0 * cross[ja];
    }
    rhs[k] = 1.0;
    let solution = kkt.lu().solve(&rhs)?;
    if solution.iter().any(|v| !v.is_finite()) || solution.rows(0, k).iter().any(|&v| v < 0.0) {
        return None;
    }
    let mut out = vec![0.0; w.len()];
    for (a, &j) in support.iter().enumerate() {
        out[j] = solution[a];
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Some(out)
}

pub fn predict_ms(regressors: &[Regressor], idx: usize, x: &[f64]) -> Result<f64> {
    regressors.get(idx).map(|r| r.predict(x)).ok_or_else(|| {
        Error::input(format!(
            "machine index {idx} out of range ({} machines)",
            regressors.len()
        ))
    })
}

pub fn predict_convex(regressors: &[Regressor], w: &SimplexWeights, x: &[f64]) -> Result<f64> {
    if w.len() != regressors.len() {
        return Err(Error::input(format!(
            "{} weights for {} machines",
            w.len(),
            regressors.len()
        )));
    }
    Ok(combine(
        w.as_slice(),
        regressors.iter().map(|r| r.predict(x)),
    ))
}

/// Weighted sum skipping zero weights, so a vertex reproduces its machine exactly.
pub(crate) fn combine(w: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    w.iter()
        .zip(values)
        .filter(|(wj, _)| **wj != 0.0)
        .map(|(wj, v)| wj * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn risk_arithmetic() {
        assert_eq!(empirical_risk(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(empirical_risk(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(empirical_risk(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert!(empirical_risk(&[0.0], &[1.0, 3.0]).is_err());
        assert!(empirical_risk(&[], &[]).is_err());
    }

    #[test]
    fn selection_picks_exact_column() {
        let targets = vec![1.0, 2.0, 3.0];
        let cols = vec![vec![0.0, 0.0, 0.0], targets.clone(), vec![1.0, 2.0, 4.0]];
        let c = CandidateSet::from_columns(&cols, targets).unwrap();
        assert_eq!(ms_select(&c), 1);
        let single = CandidateSet::from_columns(&[vec![9.0]], vec![1.0]).unwrap();
        assert_eq!(ms_select(&single), 0);
    }

    #[test]
    fn selection_ties_go_low() {
        let c = CandidateSet::from_columns(&[vec![1.0], vec![0.0], vec![0.0]], vec![0.5]).unwrap();
        assert_eq!(ms_select(&c), 0);
    }

    #[test]
    fn projection_examples() {
        let w = project_simplex(&[0.2, 0.3, 0.5]);
        for (a, b) in w.as_slice().iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(project_simplex(&[2.0, 0.0]).as_slice(), &[1.0, 0.0]);
        let w = project_simplex(&[-5.0, -5.0]);
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn convex_single_candidate() {
        let c = CandidateSet::from_columns(&[vec![1.0, 2.0]], vec![0.0, 0.0]).unwrap();
        let s = convex_solve(&c).unwrap();
        assert_eq!(s.weights.as_slice(), &[1.0]);
        assert_eq!(s.objective, 2.5);
    }

    #[test]
    fn convex_finds_exact_column() {
        let mut rng = Rng::new(4);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..30).map(|_| rng.uniform()).collect())
            .collect();
        let targets = cols[2].clone();
        let c = CandidateSet::from_columns(&cols, targets).unwrap();
        let s = convex_solve(&c).unwrap();
        assert!(s.objective < 1e-6);
        assert!((s.weights.as_slice()[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn convex_interior_optimum() {
        // targets are the midpoint of two columns
        let a = vec![0.0, 1.0, 0.0, 2.0];
        let b = vec![1.0, 0.0, 2.0, 0.0];
        let t: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let c = CandidateSet::from_columns(&[a, b], t).unwrap();
        let s = convex_solve(&c).unwrap();
        assert!(s.objective < 1e-20);
        assert!((s.weights.as_slice()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn convex_with_zero_predictions() {
        let c =
            CandidateSet::from_columns(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0]).unwrap();
        let s = convex_solve(&c).unwrap();
        assert_eq!(s.objective, 1.0);
    }

    #[test]
    fn weight_prediction() {
        use crate::regressors::{LinearKind, LinearModel};
        let machines: Vec<Regressor> = [1.0, 3.0]
            .iter()
            .map(|&c| LinearModel::from_parts(LinearKind::Ridge, c, vec![0.0]).into())
            .collect();
        let half = SimplexWeights::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(predict_convex(&machines, &half, &[0.0]).unwrap(), 2.0);
        assert_eq!(
            predict_convex(&machines, &SimplexWeights::vertex(2, 1), &[0.0]).unwrap(),
            3.0
        );
        assert_eq!(predict_ms(&machines, 0, &[0.0]).unwrap(), 1.0);
        assert!(predict_ms(&machines, 2, &[0.0]).is_err());
        assert!(predict_convex(&machines, &SimplexWeights::uniform(3), &[0.0]).is_err());
    }

    #[test]
    fn weights_validate_and_serialize() {
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![-0.5, 1.5]).is_err());
        let w = SimplexWeights::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(w.to_json(), "[0.25,0.75]");
        let back: SimplexWeights = serde_json::from_str(&w.to_json()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn candidate_set_validation() {
        assert!(CandidateSet::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0], 2).is_err());
        assert!(CandidateSet::new(vec![f64::NAN, 2.0], vec![1.0], 2).is_err());
        assert!(CandidateSet::new(vec![], vec![], 1).is_err());
    }
}
