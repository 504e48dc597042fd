//! Base learners behind one prediction interface, and the 12-machine
//! dictionary built from them.

mod dictionary;
mod forest;
mod knn;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

pub use dictionary::{build_dictionary, DictionaryConfig, MachineSpec, DICTIONARY_SIZE};
pub use forest::{fit_forest, fit_forest_with, Forest, ForestParams};
pub use knn::{fit_knn, Knn};
pub use linear::{
    fit_enet, fit_lasso, fit_ridge, LinearKind, LinearModel, CD_MAX_SWEEPS, CD_TOLERANCE,
};
pub use tree::{fit_tree, Node, Tree, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Knn,
    Tree,
    Forest,
    Ridge,
    Lasso,
    Enet,
}

/// A fitted prediction rule. Immutable once fitted.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "lowercase")]
pub enum Regressor {
    Knn(Knn),
    Tree(Tree),
    Forest(Forest),
    Linear(LinearModel),
}

impl Regressor {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Regressor::Knn(_) => RegressorKind::Knn,
            Regressor::Tree(_) => RegressorKind::Tree,
            Regressor::Forest(_) => RegressorKind::Forest,
            Regressor::Linear(m) => match m.kind() {
                LinearKind::Ridge => RegressorKind::Ridge,
                LinearKind::Lasso => RegressorKind::Lasso,
                LinearKind::Enet => RegressorKind::Enet,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Regressor::Knn(m) => m.dim(),
            Regressor::Tree(m) => m.dim(),
            Regressor::Forest(m) => m.dim(),
            Regressor::Linear(m) => m.dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Knn(m) => m.predict(x),
            Regressor::Tree(m) => m.predict(x),
            Regressor::Forest(m) => m.predict(x),
            Regressor::Linear(m) => m.predict(x),
        }
    }

    /// Predictions for every row of `data`.
    pub fn predict_all(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|row| self.predict(row)).collect()
    }
}

impl From<Knn> for Regressor {
    fn from(m: Knn) -> Self {
        Regressor::Knn(m)
    }
}

impl From<Tree> for Regressor {
    fn from(m: Tree) -> Self {
        Regressor::Tree(m)
    }
}

impl From<Forest> for Regressor {
    fn from(m: Forest) -> Self {
        Regressor::Forest(m)
    }
}

impl From<LinearModel> for Regressor {
    fn from(m: LinearModel) -> Self {
        Regressor::Linear(m)
    }
}

const DUMP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Dump<T> {
    version: u32,
    regressor: T,
}

/// Versioned JSON dump of a fitted regressor, for debugging.
pub fn dump_json(model: &Regressor) -> String {
    serde_json::to_string(&Dump {
        version: DUMP_VERSION,
        regressor: model,
    })
    .expect("fitted regressors contain only finite numbers")
}

pub fn load_json(text: &str) -> crate::Result<Regressor> {
    let dump: Dump<Regressor> = serde_json::from_str(text)
        .map_err(|e| crate::Error::Input(format!("bad model dump: {e}")))?;
    if dump.version != DUMP_VERSION {
        return Err(crate::Error::Input(format!(
            "unsupported model dump version {}",
            dump.version
        )));
    }
    Ok(dump.regressor)
}
