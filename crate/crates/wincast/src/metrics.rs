//! Statistical and monetary performance metrics plus ROC/AUC.
//!
//! Statistical metrics count opportunities; monetary metrics weight each
//! opportunity by its contract value, so `precision_m` reads as "of the money
//! predicted to be won, how much actually was". Won is the positive class
//! throughout. Degenerate ratios (0/0) yield 0 and are recorded by name
//! instead of aborting, so batch reports always complete.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outcome counts of a binary classification (won = positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

/// Contract-value sums in each confusion quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonetaryCounts {
    pub true_pos_value: f64,
    pub true_neg_value: f64,
    pub false_pos_value: f64,
    pub false_neg_value: f64,
}

/// Count-based metrics with the names of any 0/0 ratios encountered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub degenerate: Vec<String>,
}

/// Value-weighted metrics with the names of any 0/0 ratios encountered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonetaryMetrics {
    pub precision_m: f64,
    pub recall_m: f64,
    pub accuracy_m: f64,
    pub degenerate: Vec<String>,
}

/// Full evaluation of one predictor on one record batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// `None` when undefined (single-class batch or no probabilities given).
    pub auc: Option<f64>,
    pub precision_m: f64,
    pub recall_m: f64,
    pub accuracy_m: f64,
    /// Metric names that hit a 0/0 denominator and were reported as 0.
    pub degenerate: Vec<String>,
}

fn check_equal_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: lengths {a} vs {b}")));
    }
    Ok(())
}

/// Tally a confusion matrix from aligned predicted/actual outcome slices.
pub fn confusion(predicted: &[bool], actual: &[bool]) -> Result<ConfusionCounts> {
    check_equal_len(predicted.len(), actual.len(), "confusion inputs")?;
    let mut c = ConfusionCounts {
        true_pos: 0,
        true_neg: 0,
        false_pos: 0,
        false_neg: 0,
    };
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => c.true_pos += 1,
            (false, false) => c.true_neg += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Sum contract values into confusion quadrants.
pub fn monetary_counts(predicted: &[bool], actual: &[bool], values: &[f64]) -> Result<MonetaryCounts> {
    check_equal_len(predicted.len(), actual.len(), "monetary inputs")?;
    check_equal_len(predicted.len(), values.len(), "monetary values")?;
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Numeric(format!(
            "contract values must be finite and >= 0, got {bad}"
        )));
    }
    let mut c = MonetaryCounts {
        true_pos_value: 0.0,
        true_neg_value: 0.0,
        false_pos_value: 0.0,
        false_neg_value: 0.0,
    };
    for ((&p, &a), &v) in predicted.iter().zip(actual).zip(values) {
        match (p, a) {
            (true, true) => c.true_pos_value += v,
            (false, false) => c.true_neg_value += v,
            (true, false) => c.false_pos_value += v,
            (false, true) => c.false_neg_value += v,
        }
    }
    Ok(c)
}

/// 0/0-safe ratio; pushes `name` onto `degenerate` when both sides are zero.
fn ratio(num: f64, den: f64, name: &'static str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

/// Precision, recall, accuracy and F1 from confusion counts.
pub fn statistical_metrics(c: &ConfusionCounts) -> StatisticalMetrics {
    let mut degenerate = Vec::new();
    let tp = c.true_pos as f64;
    let precision = ratio(tp, (c.true_pos + c.false_pos) as f64, "precision", &mut degenerate);
    let recall = ratio(tp, (c.true_pos + c.false_neg) as f64, "recall", &mut degenerate);
    let accuracy = ratio(
        (c.true_pos + c.true_neg) as f64,
        c.total() as f64,
        "accuracy",
        &mut degenerate,
    );
    // Harmonic mean of precision and recall.
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1", &mut degenerate);
    StatisticalMetrics {
        precision,
        recall,
        accuracy,
        f1,
        degenerate,
    }
}

/// Value-weighted precision, recall and accuracy from monetary counts.
pub fn monetary_metrics(c: &MonetaryCounts) -> MonetaryMetrics {
    let mut degenerate = Vec::new();
    let precision_m = ratio(
        c.true_pos_value,
        c.true_pos_value + c.false_pos_value,
        "precision_m",
        &mut degenerate,
    );
    let recall_m = ratio(
        c.true_pos_value,
        c.true_pos_value + c.false_neg_value,
        "recall_m",
        &mut degenerate,
    );
    let total = c.true_pos_value + c.true_neg_value + c.false_pos_value + c.false_neg_value;
    let accuracy_m = ratio(
        c.true_pos_value + c.true_neg_value,
        total,
        "accuracy_m",
        &mut degenerate,
    );
    MonetaryMetrics {
        precision_m,
        recall_m,
        accuracy_m,
        degenerate,
    }
}

/// Area under the ROC curve via the Mann-Whitney rank statistic.
///
/// Tied probabilities receive half credit, which makes this exactly the
/// trapezoidal area under the ROC curve. Errors when either class is absent
/// (the metric is undefined) or a probability is not finite.
pub fn roc_auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_equal_len(probs.len(), labels.len(), "roc_auc inputs")?;
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("probabilities must be finite".to_string()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes (got {n_pos} won, {n_neg} lost)"
        )));
    }

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_unstable_by(|&a, &b| probs[a].total_cmp(&probs[b]));

    // Average 1-based ranks over tied runs, sum them for the positive class.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        let pos_in_run = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += avg_rank * pos_in_run as f64;
        i = j;
    }

    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

impl MetricReport {
    /// Assemble a full report. AUC is included when `probs` is given and both
    /// classes are present; a single-class batch leaves it `None` rather than
    /// failing the report.
    pub fn compute(
        predicted: &[bool],
        actual: &[bool],
        values: &[f64],
        probs: Option<&[f64]>,
    ) -> Result<MetricReport> {
        let stat = statistical_metrics(&confusion(predicted, actual)?);
        let money = monetary_metrics(&monetary_counts(predicted, actual, values)?);
        let auc = match probs {
            Some(p) => match roc_auc(p, actual) {
                Ok(auc) => Some(auc),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        let mut degenerate = stat.degenerate.clone();
        degenerate.extend(money.degenerate.iter().cloned());
        Ok(MetricReport {
            precision: stat.precision,
            recall: stat.recall,
            accuracy: stat.accuracy,
            f1: stat.f1,
            auc,
            precision_m: money.precision_m,
            recall_m: money.recall_m,
            accuracy_m: money.accuracy_m,
            degenerate,
        })
    }
}

/// Render one or two reports as aligned text tables (metric rows, one column
/// per predictor), rounded to two decimals.
pub fn render_comparison(ml: &MetricReport, user: Option<&MetricReport>) -> String {
    let fmt = |v: f64| format!("{v:.2}");
    let fmt_opt = |v: Option<f64>| v.map(fmt).unwrap_or_else(|| "-".to_string());
    let stat_rows: Vec<(&str, String, Option<String>)> = vec![
        ("Precision", fmt(ml.precision), user.map(|u| fmt(u.precision))),
        ("Recall", fmt(ml.recall), user.map(|u| fmt(u.recall))),
        ("F1-score", fmt(ml.f1), user.map(|u| fmt(u.f1))),
        ("Accuracy", fmt(ml.accuracy), user.map(|u| fmt(u.accuracy))),
        ("AUC", fmt_opt(ml.auc), user.map(|u| fmt_opt(u.auc))),
    ];
    let money_rows: Vec<(&str, String, Option<String>)> = vec![
        ("Precision_m", fmt(ml.precision_m), user.map(|u| fmt(u.precision_m))),
        ("Recall_m", fmt(ml.recall_m), user.map(|u| fmt(u.recall_m))),
        ("Accuracy_m", fmt(ml.accuracy_m), user.map(|u| fmt(u.accuracy_m))),
    ];

    let mut out = String::new();
    for (title, rows) in [("Statistical performance", stat_rows), ("Monetary performance", money_rows)] {
        out.push_str(title);
        out.push('\n');
        if user.is_some() {
            out.push_str(&format!("  {:<12} {:>13} {:>13}\n", "Metric", "User-entered", "ML-predicted"));
        } else {
            out.push_str(&format!("  {:<12} {:>13}\n", "Metric", "ML-predicted"));
        }
        for (name, ml_v, user_v) in rows {
            match user_v {
                Some(u) => out.push_str(&format!("  {name:<12} {u:>13} {ml_v:>13}\n")),
                None => out.push_str(&format!("  {name:<12} {ml_v:>13}\n")),
            }
        }
        out.push('\n');
    }
    out
}
