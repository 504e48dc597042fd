use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Brute-force k-nearest-neighbour regressor (Euclidean distance on raw
/// features). Equidistant neighbours are ranked by training row index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

pub fn fit_knn(data: &Dataset, k: usize) -> Result<Knn> {
    if k == 0 || k > data.len() {
        return Err(Error::input(format!(
            "knn needs 1 <= k <= n, got k = {k} with n = {}",
            data.len()
        )));
    }
    Ok(Knn {
        k,
        dim: data.dim(),
        x: data.x().to_vec(),
        y: data.y().to_vec(),
    })
}

impl Knn {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict(&self, query: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_rank);
        }
        let nearest = &mut dist[..self.k];
        nearest.sort_unstable_by_key(|&(_, i)| i);
        nearest.iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Dataset {
        Dataset::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            1,
        )
        .unwrap()
    }

    #[test]
    fn k_equals_n_is_the_mean() {
        let m = fit_knn(&line(), 5).unwrap();
        for q in [-3.0, 0.5, 10.0] {
            assert!((m.predict(&[q]) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_neighbour_at_training_point() {
        let m = fit_knn(&line(), 1).unwrap();
        assert_eq!(m.predict(&[3.0]), 3.0);
    }

    #[test]
    fn two_neighbours_hand_sorted() {
        // distances from 1.6: 1.6, 0.6, 0.4, 1.4, 2.4 -> rows 2 and 1
        let m = fit_knn(&line(), 2).unwrap();
        assert!((m.predict(&[1.6]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_lower_row_index() {
        // query 1.5 is equidistant from rows 1 and 2
        let d = Dataset::new(vec![0.0, 1.0, 2.0], vec![0.0, 10.0, 20.0], 1).unwrap();
        let m = fit_knn(&d, 1).unwrap();
        assert_eq!(m.predict(&[1.5]), 10.0);
    }

    #[test]
    fn k_out_of_range() {
        assert!(fit_knn(&line(), 6).is_err());
        assert!(fit_knn(&line(), 0).is_err());
    }
}
