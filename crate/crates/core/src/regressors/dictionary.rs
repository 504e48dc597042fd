use serde::{Deserialize, Serialize};

use super::{
    fit_enet, fit_forest_with, fit_knn, fit_lasso, fit_ridge, fit_tree, ForestParams, Regressor,
    TreeParams,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DICTIONARY_SIZE: usize = 12;

/// Hyper-parameters of the 12 machines. The machine order is fixed:
/// forest x3, knn x3, lasso x2, ridge x2, tree, elastic net.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryConfig {
    pub forest_ntrees: [usize; 3],
    pub knn_ks: [usize; 3],
    pub lasso_lambdas: [f64; 2],
    pub ridge_lambdas: [f64; 2],
    pub enet_lambda: f64,
    pub enet_alpha: f64,
    pub tree: TreeParams,
    pub forest: ForestParams,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            forest_ntrees: [50, 150, 500],
            knn_ks: [7, 13, 22],
            lasso_lambdas: [0.5, 2.0],
            ridge_lambdas: [0.9, 3.0],
            enet_lambda: 1.0,
            enet_alpha: 0.6,
            tree: TreeParams::default(),
            forest: ForestParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MachineSpec {
    Forest { params: ForestParams },
    Knn { k: usize },
    Lasso { lambda: f64 },
    Ridge { lambda: f64 },
    Tree { params: TreeParams },
    Enet { lambda: f64, alpha: f64 },
}

impl MachineSpec {
    pub fn name(&self) -> String {
        match self {
            MachineSpec::Forest { params } => format!("forest(ntree={})", params.ntree),
            MachineSpec::Knn { k } => format!("knn(k={k})"),
            MachineSpec::Lasso { lambda } => format!("lasso(lambda={lambda})"),
            MachineSpec::Ridge { lambda } => format!("ridge(lambda={lambda})"),
            MachineSpec::Tree { .. } => "tree".to_string(),
            MachineSpec::Enet { lambda, alpha } => format!("enet(lambda={lambda},alpha={alpha})"),
        }
    }

    /// Fit this machine; only forests consume `rng`.
    pub fn fit(&self, data: &Dataset, rng: &Rng) -> Result<Regressor> {
        Ok(match *self {
            MachineSpec::Forest { params } => fit_forest_with(data, &params, rng)?.into(),
            MachineSpec::Knn { k } => fit_knn(data, k)?.into(),
            MachineSpec::Lasso { lambda } => fit_lasso(data, lambda)?.into(),
            MachineSpec::Ridge { lambda } => fit_ridge(data, lambda)?.into(),
            MachineSpec::Tree { params } => fit_tree(data, &params)?.into(),
            MachineSpec::Enet { lambda, alpha } => fit_enet(data, lambda, alpha)?.into(),
        })
    }
}

impl DictionaryConfig {
    pub fn machines(&self) -> Vec<MachineSpec> {
        let mut out = Vec::with_capacity(DICTIONARY_SIZE);
        out.extend(self.forest_ntrees.iter().map(|&ntree| MachineSpec::Forest {
            params: ForestParams {
                ntree,
                ..self.forest
            },
        }));
        out.extend(self.knn_ks.iter().map(|&k| MachineSpec::Knn { k }));
        out.extend(
            self.lasso_lambdas
                .iter()
                .map(|&lambda| MachineSpec::Lasso { lambda }),
        );
        out.extend(
            self.ridge_lambdas
                .iter()
                .map(|&lambda| MachineSpec::Ridge { lambda }),
        );
        out.push(MachineSpec::Tree { params: self.tree });
        out.push(MachineSpec::Enet {
            lambda: self.enet_lambda,
            alpha: self.enet_alpha,
        });
        out
    }

    fn min_rows(&self) -> usize {
        self.knn_ks.iter().copied().max().unwrap_or(1)
    }
}

/// Fit all 12 machines on `data`. Machine `j` draws from `rng.substream(j)`.
pub fn build_dictionary(
    data: &Dataset,
    config: &DictionaryConfig,
    rng: &Rng,
) -> Result<Vec<Regressor>> {
    if data.len() < config.min_rows() {
        return Err(Error::input(format!(
            "the dictionary needs at least {} rows, got {}",
            config.min_rows(),
            data.len()
        )));
    }
    config
        .machines()
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            spec.fit(data, &rng.substream(j as u64))
                .map_err(|e| Error::Machine {
                    index: j,
                    name: spec.name(),
                    source: Box::new(e),
                })
        })
        .collect()
}
