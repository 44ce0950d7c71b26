use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::update::{node_rows, update_tree_rows, MoveStats, Scratch};
use super::{BartConfig, SplitIndex, Tree};

pub const FOREST_FORMAT: &str = "sacebart-forest";
pub const FOREST_FORMAT_VERSION: u32 = 1;

/// A sum of trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    trees: Vec<Tree>,
}

impl Serialize for Forest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ForestFile {
            format: FOREST_FORMAT.to_string(),
            version: FOREST_FORMAT_VERSION,
            trees: self.trees.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Forest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = ForestFile::deserialize(d)?;
        if file.format != FOREST_FORMAT {
            return Err(D::Error::custom(format!(
                "unknown forest format `{}`",
                file.format
            )));
        }
        if file.version != FOREST_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "unsupported forest format version {}",
                file.version
            )));
        }
        for tree in &file.trees {
            tree.check().map_err(D::Error::custom)?;
        }
        Ok(Forest { trees: file.trees })
    }
}

impl Forest {
    /// `n_trees` root-only trees with value 0.
    pub fn new(n_trees: usize) -> Self {
        Forest {
            trees: vec![Tree::leaf(0.0); n_trees],
        }
    }

    pub fn from_trees(trees: Vec<Tree>) -> Self {
        Forest { trees }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Sum of the leaf values `x` routes to, accumulated in tree order.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for tree in &self.trees {
            total += tree.predict(x)?;
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from)
    }
}

/// A forest bound to a training set, caching each tree's contribution at
/// every training row.
#[derive(Clone, Debug)]
pub struct ForestFit {
    forest: Forest,
    tree_fits: Vec<Vec<f64>>,
    fitted: Vec<f64>,
    rows: Vec<Vec<Vec<u32>>>,
    moves: MoveStats,
    scratch: Scratch,
    residual: Vec<f64>,
}

impl ForestFit {
    pub fn new(forest: Forest, index: &SplitIndex) -> Result<Self> {
        let k = index.n_vars();
        if let Some(var) = forest.trees.iter().filter_map(Tree::max_var).max() {
            if var >= k {
                return Err(Error::Structural(format!(
                    "forest uses covariate {var} but the training set has {k}"
                )));
            }
        }
        let n = index.n_rows();
        let x = index.covariates();
        let tree_fits: Vec<Vec<f64>> = forest
            .trees
            .iter()
            .map(|t| (0..n).map(|i| t.evaluate(x.row(i))).collect())
            .collect();
        let rows = forest.trees.iter().map(|t| node_rows(t, index)).collect();
        let mut fit = ForestFit {
            forest,
            tree_fits,
            rows,
            fitted: vec![0.0; n],
            moves: MoveStats::default(),
            scratch: Scratch::default(),
            residual: vec![0.0; n],
        };
        fit.resum();
        Ok(fit)
    }

    /// Root-only forest of `config.n_trees` zero leaves.
    pub fn empty(index: &SplitIndex, config: &BartConfig) -> Self {
        Self::new(Forest::new(config.n_trees), index).expect("root-only trees are valid")
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn into_forest(self) -> Forest {
        self.forest
    }

    /// Current sum-of-trees value at every training row.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn tree_fit(&self, j: usize) -> &[f64] {
        &self.tree_fits[j]
    }

    pub fn move_stats(&self) -> &MoveStats {
        &self.moves
    }

    pub fn reset_move_stats(&mut self) {
        self.moves = MoveStats::default();
    }

    pub(crate) fn set_move_stats(&mut self, moves: MoveStats) {
        self.moves = moves;
    }

    fn resum(&mut self) {
        self.fitted.iter_mut().for_each(|f| *f = 0.0);
        for fits in &self.tree_fits {
            for (f, t) in self.fitted.iter_mut().zip(fits) {
                *f += t;
            }
        }
    }

    /// Update every tree once, in index order, against its partial residuals
    /// `response - (fit of the other trees)`. Only rows flagged in `active`
    /// enter the likelihood; fits are refreshed at every row.
    #[allow(clippy::too_many_arguments)]
    pub fn backfit_sweep<R: Rng + ?Sized>(
        &mut self,
        index: &SplitIndex,
        response: &[f64],
        active: &[bool],
        sigma2: f64,
        config: &BartConfig,
        rng: &mut R,
    ) -> Result<()> {
        let n = index.n_rows();
        if response.len() != n || active.len() != n {
            return Err(Error::Input(format!(
                "response/active lengths {}/{} do not match {} training rows",
                response.len(),
                active.len(),
                n
            )));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Input(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        for j in 0..self.forest.trees.len() {
            for i in 0..n {
                self.residual[i] = if active[i] {
                    response[i] - (self.fitted[i] - self.tree_fits[j][i])
                } else {
                    0.0
                };
            }
            let tree = &mut self.forest.trees[j];
            let rows = &mut self.rows[j];
            update_tree_rows(
                tree,
                index,
                rows,
                &self.residual,
                active,
                sigma2,
                config,
                &mut self.moves,
                &mut self.scratch,
                rng,
            );
            let fits = &mut self.tree_fits[j];
            for leaf in tree.leaves() {
                let value = tree.leaf_value(leaf).expect("leaf");
                for &i in &rows[leaf] {
                    let i = i as usize;
                    self.fitted[i] += value - fits[i];
                    fits[i] = value;
                }
            }
        }
        self.resum();
        if let Some(i) = self.fitted.iter().position(|f| !f.is_finite()) {
            return Err(Error::Numerical {
                unit: i,
                message: "forest fit is not finite".into(),
            });
        }
        Ok(())
    }

    /// Backfitting on the probit scale: the error variance is fixed at 1.
    pub fn probit_sweep<R: Rng + ?Sized>(
        &mut self,
        index: &SplitIndex,
        latent: &[f64],
        active: &[bool],
        config: &BartConfig,
        rng: &mut R,
    ) -> Result<()> {
        self.backfit_sweep(index, latent, active, 1.0, config, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bart::DecisionRule;

    #[test]
    fn predict_is_additive() {
        let mut a = Tree::leaf(0.0);
        let (l, r) = a.grow(0, DecisionRule { var: 0, cut: 0.0 });
        a.set_leaf_value(l, 1.0);
        a.set_leaf_value(r, 2.0);
        let b = Tree::leaf(-0.25);
        let forest = Forest::from_trees(vec![a, b]);
        assert_eq!(forest.predict(&[-1.0]).unwrap(), 0.75);
        assert_eq!(forest.predict(&[1.0]).unwrap(), 1.75);
        assert_eq!(
            Forest::from_trees(vec![Tree::leaf(2.5)])
                .predict(&[0.0])
                .unwrap(),
            2.5
        );
        assert_eq!(Forest::new(50).predict(&[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn json_is_versioned_and_validated() {
        let forest = Forest::from_trees(vec![Tree::leaf(1.5), Tree::leaf(-0.5)]);
        let json = forest.to_json().unwrap();
        assert!(json.contains("\"format\":\"sacebart-forest\""));
        assert!(json.contains("\"version\":1"));
        assert_eq!(Forest::from_json(&json).unwrap(), forest);
        let bumped = json.replace("\"version\":1", "\"version\":99");
        assert!(Forest::from_json(&bumped).is_err());
    }
}
