use serde::{Deserialize, Serialize};

use super::tree::{grow, FeatureSampler, Presorted, Tree, TreeParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Random-forest settings. Defaults follow the usual regression-forest
/// conventions: bootstrap resampling, `max(1, d/3)` candidate features per
/// split, terminal nodes of at least 5 rows, unlimited depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub ntree: usize,
    /// Candidate features per split; `None` means `max(1, d / 3)`.
    pub mtry: Option<usize>,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn with_ntree(ntree: usize) -> Self {
        Self {
            ntree,
            ..Self::default()
        }
    }
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            ntree: 500,
            mtry: None,
            tree: TreeParams {
                max_depth: usize::MAX,
                min_leaf: 5,
                min_split: 10,
            },
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn dim(&self) -> usize {
        self.trees[0].dim()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest(data: &Dataset, ntree: usize, rng: &Rng) -> Result<Forest> {
    fit_forest_with(data, &ForestParams::with_ntree(ntree), rng)
}

/// Tree `t` draws from `rng.substream(t)`, so the fit depends only on the
/// stream seed.
pub fn fit_forest_with(data: &Dataset, params: &ForestParams, rng: &Rng) -> Result<Forest> {
    if params.ntree == 0 {
        return Err(Error::input("a forest needs at least one tree"));
    }
    if data.is_empty() {
        return Err(Error::input("cannot grow a forest on an empty dataset"));
    }
    params.tree.validate()?;
    let d = data.dim();
    let mtry = params.mtry.unwrap_or((d / 3).max(1));
    if mtry == 0 || mtry > d {
        return Err(Error::input(format!(
            "mtry must lie in 1..={d}, got {mtry}"
        )));
    }
    let n = data.len();
    let presorted = Presorted::new(data);
    let trees = (0..params.ntree)
        .map(|t| {
            let mut tree_rng = rng.substream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| tree_rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = FeatureSampler {
                mtry,
                rng: &mut tree_rng,
            };
            grow(data, &presorted, &rows, &params.tree, Some(sampler))
        })
        .collect();
    Ok(Forest { trees })
}
