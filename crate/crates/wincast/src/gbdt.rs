//! Gradient-boosted decision trees with second-order (Newton) boosting.
//!
//! Each boosting round fits one regression tree to the per-row gradients and
//! hessians of the loss at the current scores. A leaf holding rows with
//! gradient sum `G` and hessian sum `H` gets weight `w* = -G / (H + lambda)`;
//! splitting a node is worth
//!
//! ```text
//! gain = 1/2 * [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda)
//!                - (G_L+G_R)^2/(H_L+H_R+lambda) ] - gamma
//! ```
//!
//! and only strictly positive-gain splits are taken. Two growth policies are
//! supported: level-wise (split every frontier node until a depth cap) and
//! leaf-wise (always split the highest-gain leaf until a leaf-count cap).
//! Training is fully deterministic: no row or column subsampling, stable
//! tie-breaking everywhere (first column / lowest threshold / earliest leaf).

mod grower;

use serde::{Deserialize, Serialize};

pub(crate) use grower::DatasetLayout;
use grower::Grower;

use crate::enhance::FeatureMatrix;
use crate::{Error, Result};

/// Training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Binary cross-entropy on logit scores; predictions pass through a
    /// sigmoid.
    Logistic,
    /// Squared error on raw scores; predictions are clamped to [0, 1].
    SquaredError,
}

/// Tree growth policy with its size budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Breadth-first: split every splittable node above the depth cap.
    LevelWise { max_depth: u32 },
    /// Best-first: repeatedly split the highest-gain leaf, up to a leaf cap.
    LeafWise { max_leaves: u32 },
}

impl Growth {
    /// Short human-readable form, e.g. `level_wise(d=4)`.
    pub fn describe(self) -> String {
        match self {
            Growth::LevelWise { max_depth } => format!("level_wise(d={max_depth})"),
            Growth::LeafWise { max_leaves } => format!("leaf_wise(l={max_leaves})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Per-leaf complexity penalty subtracted from every split gain.
    pub gamma: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    pub growth: Growth,
    pub loss: Loss,
}

impl Hyperparams {
    pub fn new(growth: Growth) -> Hyperparams {
        Hyperparams {
            n_trees: 50,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 0.0,
            growth,
            loss: Loss::Logistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.n_trees >= 1, "n_trees must be at least 1")?;
        check(
            self.learning_rate.is_finite() && self.learning_rate > 0.0 && self.learning_rate <= 1.0,
            "learning_rate must lie in (0, 1]",
        )?;
        check(
            self.lambda.is_finite() && self.lambda >= 0.0,
            "lambda must be finite and non-negative",
        )?;
        check(
            self.gamma.is_finite() && self.gamma >= 0.0,
            "gamma must be finite and non-negative",
        )?;
        check(
            self.min_child_weight.is_finite() && self.min_child_weight >= 0.0,
            "min_child_weight must be finite and non-negative",
        )?;
        match self.growth {
            Growth::LevelWise { max_depth } => {
                check((1..=32).contains(&max_depth), "max_depth must lie in 1..=32")?
            }
            Growth::LeafWise { max_leaves } => check(
                (2..=65_536).contains(&max_leaves),
                "max_leaves must lie in 2..=65536",
            )?,
        }
        Ok(())
    }
}

/// Per-row first and second derivatives of the loss at the current scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss of one labeled example at raw score `s`.
pub(crate) fn loss_value(y: f64, s: f64, loss: Loss) -> f64 {
    match loss {
        // max(s,0) - s*y + ln(1 + exp(-|s|)) == -y ln p - (1-y) ln (1-p)
        Loss::Logistic => s.max(0.0) - s * y + (-s.abs()).exp().ln_1p(),
        Loss::SquaredError => (y - s) * (y - s),
    }
}

/// Gradients and hessians of `loss` for each row.
///
/// Logistic: `g = p - y`, `h = p (1 - p)` with `p = sigmoid(score)`.
/// Squared error: `g = 2 (s - y)`, `h = 2`.
pub fn grad_hess(labels: &[f64], scores: &[f64], loss: Loss) -> Result<GradHess> {
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "grad_hess: {} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let mut g = Vec::with_capacity(labels.len());
    let mut h = Vec::with_capacity(labels.len());
    for (&y, &s) in labels.iter().zip(scores) {
        if !s.is_finite() {
            return Err(Error::Numeric(format!("grad_hess: non-finite score {s}")));
        }
        match loss {
            Loss::Logistic => {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::Numeric(format!(
                        "logistic loss requires 0/1 labels, got {y}"
                    )));
                }
                let p = sigmoid(s);
                g.push(p - y);
                h.push(p * (1.0 - p));
            }
            Loss::SquaredError => {
                if !y.is_finite() {
                    return Err(Error::Numeric(format!("grad_hess: non-finite label {y}")));
                }
                g.push(2.0 * (s - y));
                h.push(2.0);
            }
        }
    }
    Ok(GradHess { g, h })
}

/// Optimal leaf weight `-G / (H + lambda)` for a leaf with gradient sum `G`
/// and hessian sum `H`.
pub fn leaf_weight(g_sum: f64, h_sum: f64, lambda: f64) -> Result<f64> {
    let denom = h_sum + lambda;
    if !(denom > 0.0) {
        return Err(Error::Numeric(format!(
            "leaf weight undefined: hessian sum + lambda = {denom} must be positive"
        )));
    }
    Ok(-g_sum / denom)
}

/// Core gain formula, shared verbatim by the grower and `split_gain` so both
/// produce bit-identical values.
pub(crate) fn gain_core(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> f64 {
    let parent_g = g_l + g_r;
    let parent_h = h_l + h_r;
    0.5 * (g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda)
        - parent_g * parent_g / (parent_h + lambda))
        - gamma
}

/// Gain of splitting a node into children with sums `(g_l, h_l)` and
/// `(g_r, h_r)`.
pub fn split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> Result<f64> {
    for (h, side) in [(h_l, "left"), (h_r, "right")] {
        if !(h + lambda > 0.0) {
            return Err(Error::Numeric(format!(
                "split gain undefined: {side} hessian sum + lambda = {} must be positive",
                h + lambda
            )));
        }
    }
    Ok(gain_core(g_l, h_l, g_r, h_r, lambda, gamma))
}

/// One tree node. Serialized untagged: internal nodes are objects with
/// `feature`/`threshold`/`left`/`right`, leaves carry only `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Internal {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        weight: f64,
    },
}

/// A single regression tree stored as a flat node array rooted at index 0.
/// Rows route left when `row[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Raw (unscaled) leaf weight for one feature row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match self.nodes[idx] {
                Node::Leaf { weight } => return weight,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Depth of the deepest leaf (root-only tree has depth 0).
    pub fn depth(&self) -> u32 {
        fn walk(nodes: &[Node], idx: usize) -> u32 {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    fn leaf_weight_squares(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { weight } => weight * weight,
                Node::Internal { .. } => 0.0,
            })
            .sum()
    }
}

/// Grow a single tree on explicit gradients/hessians (one boosting step).
pub fn grow_tree(data: &FeatureMatrix, gh: &GradHess, hp: &Hyperparams) -> Result<DecisionTree> {
    hp.validate()?;
    if gh.g.len() != data.n_rows() || gh.h.len() != data.n_rows() {
        return Err(Error::Shape(format!(
            "grow_tree: {} rows vs {} gradients / {} hessians",
            data.n_rows(),
            gh.g.len(),
            gh.h.len()
        )));
    }
    let layout = DatasetLayout::build(data);
    let pairs: Vec<(f64, f64)> = gh.g.iter().copied().zip(gh.h.iter().copied()).collect();
    Ok(Grower::new(&layout, &pairs, hp).grow()?.tree)
}

/// A trained boosted-tree model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub hyperparams: Hyperparams,
    /// Constant prior score: logit of the training label mean (clamped to
    /// +-10) for logistic loss, the plain mean for squared error.
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

impl GbdtModel {
    /// Raw score of one feature row: base score plus the learning-rate-scaled
    /// sum of tree outputs.
    pub fn predict_raw(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.hyperparams.learning_rate * sum
    }

    /// Win probabilities for every row of `data`.
    pub fn predict_proba(&self, data: &FeatureMatrix) -> Result<Vec<f64>> {
        if data.n_cols() != self.n_features {
            return Err(Error::Shape(format!(
                "predict_proba: model expects {} features, matrix has {}",
                self.n_features,
                data.n_cols()
            )));
        }
        Ok((0..data.n_rows())
            .map(|i| {
                let raw = self.predict_raw(data.row(i));
                match self.hyperparams.loss {
                    Loss::Logistic => sigmoid(raw),
                    Loss::SquaredError => raw.clamp(0.0, 1.0),
                }
            })
            .collect())
    }
}

fn base_score(labels: &[f64], loss: Loss) -> f64 {
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    match loss {
        Loss::Logistic => (mean / (1.0 - mean)).ln().clamp(-10.0, 10.0),
        Loss::SquaredError => mean,
    }
}

/// Train on a labeled matrix. See [`train_traced`] for the objective trace.
pub fn train(data: &FeatureMatrix, hp: &Hyperparams) -> Result<GbdtModel> {
    Ok(train_traced(data, hp)?.0)
}

/// Train and return the regularized objective after every round.
///
/// The trace has `n_trees + 1` entries: entry 0 is the loss at the base
/// score, entry t the total loss plus accumulated tree penalties
/// (`gamma * leaves + 1/2 lambda * sum(scaled leaf weights^2)`) after tree t.
pub fn train_traced(data: &FeatureMatrix, hp: &Hyperparams) -> Result<(GbdtModel, Vec<f64>)> {
    let layout = DatasetLayout::build(data);
    train_with_layout(data, &layout, hp)
}

/// Training entry point for callers that reuse one layout for many fits on
/// the same matrix (cross-validation trains every ensemble member on shared
/// per-fold layouts).
pub(crate) fn train_with_layout(
    data: &FeatureMatrix,
    layout: &DatasetLayout,
    hp: &Hyperparams,
) -> Result<(GbdtModel, Vec<f64>)> {
    hp.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Shape("training requires at least one row".to_string()));
    }
    let labels = data.labels_dense()?;
    if hp.loss == Loss::Logistic {
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::Numeric(format!(
                "logistic loss requires 0/1 labels, got {bad}"
            )));
        }
    }

    let base = base_score(&labels, hp.loss);
    let mut scores = vec![base; labels.len()];
    let total_loss = |scores: &[f64]| -> f64 {
        labels
            .iter()
            .zip(scores)
            .map(|(&y, &s)| loss_value(y, s, hp.loss))
            .sum()
    };

    let mut trees = Vec::with_capacity(hp.n_trees);
    let mut objective = Vec::with_capacity(hp.n_trees + 1);
    let mut penalty = 0.0;
    objective.push(total_loss(&scores));
    for _ in 0..hp.n_trees {
        let gh = grad_hess(&labels, &scores, hp.loss)?;
        let pairs: Vec<(f64, f64)> = gh.g.iter().copied().zip(gh.h.iter().copied()).collect();
        let out = Grower::new(layout, &pairs, hp).grow()?;
        for (score, w) in scores.iter_mut().zip(&out.row_weight) {
            *score += hp.learning_rate * w;
        }
        let lr2 = hp.learning_rate * hp.learning_rate;
        penalty += hp.gamma * out.tree.n_leaves() as f64
            + 0.5 * hp.lambda * lr2 * out.tree.leaf_weight_squares();
        objective.push(total_loss(&scores) + penalty);
        trees.push(out.tree);
    }

    Ok((
        GbdtModel {
            hyperparams: *hp,
            base_score: base,
            n_features: data.n_cols(),
            trees,
        },
        objective,
    ))
}
