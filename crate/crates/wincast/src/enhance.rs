//! Feature enhancement: per-category lookup statistics and the dense feature
//! matrix.
//!
//! For every categorical feature, a lookup table maps each observed value to
//! win/loss counts and won-contract-value moments computed on the *training*
//! split only — evaluation and open records are enhanced with the training
//! tables, never their own outcomes, so no label information leaks. Values
//! unseen in training (or with fewer than [`SPARSE_MIN_WON`] won deals) fall
//! back to whole-training-set statistics.
//!
//! Each record expands to 135 numeric columns: 18 base columns (13 ordinal
//! category codes, 3 key-account flags, duration, contract value) plus 9
//! derived columns per categorical feature (the 8 lookup statistics and a
//! 1-D Mahalanobis distance between the record's contract value and the
//! category's won-value distribution).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ingest::{CatFeature, RecordSet};
use crate::{Error, Result};

/// Standard-deviation floor for the Mahalanobis denominator.
pub const MAHALANOBIS_EPS: f64 = 1e-9;
/// Upper cap on the Mahalanobis distance (hit when std is ~zero).
pub const MAHALANOBIS_CAP: f64 = 1e6;
/// Minimum won deals a category value needs before its own value moments are
/// trusted; below this the fallback moments are substituted.
pub const SPARSE_MIN_WON: u32 = 2;

/// Names of the 9 per-category derived statistics, in column order.
pub const DERIVED_STATS: [&str; 9] = [
    "n_total",
    "n_won",
    "n_lost",
    "mean_won_value",
    "sem_won_value",
    "std_won_value",
    "win_rate",
    "cv_won_value",
    "mahalanobis",
];

/// Aggregated outcome history of one categorical value.
///
/// Moments are *materialized*: sparse values already carry the substituted
/// fallback statistics, so enhancement is a plain lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupRow {
    pub feature_value: String,
    pub n_total: u32,
    pub n_won: u32,
    pub n_lost: u32,
    pub mean_won_value: f64,
    pub sem_won_value: f64,
    pub std_won_value: f64,
    pub win_rate: f64,
    pub cv_won_value: f64,
}

/// Lookup table of one categorical feature, rows in first-appearance order
/// (which doubles as the ordinal encoding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub feature: CatFeature,
    pub rows: IndexMap<String, LookupRow>,
    /// Whole-training-set statistics; used for unseen and sparse values.
    pub fallback: LookupRow,
}

impl LookupTable {
    /// Row for a value, or the fallback when unseen.
    pub fn row_or_fallback(&self, value: &str) -> &LookupRow {
        self.rows.get(value).unwrap_or(&self.fallback)
    }

    /// Ordinal code for a value: first-appearance index in training, or
    /// `rows.len()` (one past the last) for unseen values.
    pub fn ordinal(&self, value: &str) -> usize {
        self.rows.get_index_of(value).unwrap_or(self.rows.len())
    }
}

/// 1-D Mahalanobis distance: `|x - mean| / max(std, eps)`, capped.
pub fn mahalanobis_1d(x: f64, mean: f64, std: f64) -> f64 {
    let d = (x - mean).abs() / std.max(MAHALANOBIS_EPS);
    d.min(MAHALANOBIS_CAP)
}

/// Sample moments of won contract values: (mean, std with n-1 denominator,
/// sem, cv). Defined for n >= 2 and positive mean; the caller substitutes
/// fallbacks otherwise.
fn won_value_moments(values: &[f64]) -> (f64, f64, f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    let sem = std / n.sqrt();
    let cv = if mean > 0.0 { Some(std / mean) } else { None };
    (mean, std, sem, cv)
}

fn require_closed_complete(rs: &RecordSet, what: &str) -> Result<()> {
    for r in &rs.records {
        if !r.is_complete() {
            return Err(Error::Record {
                id: r.opportunity_id.clone(),
                message: format!("{what} requires complete records (missing: {:?})", r.missing_fields()),
            });
        }
        if !r.is_closed() {
            return Err(Error::Record {
                id: r.opportunity_id.clone(),
                message: format!("{what} requires closed records, found status `open`"),
            });
        }
    }
    Ok(())
}

/// Build the lookup table of one categorical feature from closed, complete
/// training records.
pub fn build_lookup(train: &RecordSet, feature: CatFeature) -> Result<LookupTable> {
    require_closed_complete(train, "lookup construction")?;

    struct Acc {
        n_total: u32,
        won_values: Vec<f64>,
    }
    let mut groups: IndexMap<String, Acc> = IndexMap::new();
    let mut all = Acc { n_total: 0, won_values: Vec::new() };
    for r in &train.records {
        let value = r
            .categorical(feature)
            .expect("checked complete above")
            .to_string();
        let acc = groups.entry(value).or_insert_with(|| Acc {
            n_total: 0,
            won_values: Vec::new(),
        });
        acc.n_total += 1;
        all.n_total += 1;
        if r.label() == Some(1.0) {
            let v = r.total_contract_value.expect("checked complete above");
            acc.won_values.push(v);
            all.won_values.push(v);
        }
    }

    // Fallback row: same formulas over the whole set; degenerate moments
    // (fewer than 2 wins overall, or non-positive mean) become 0.
    let fallback = {
        let n_won = all.won_values.len() as u32;
        let (mean, std, sem, cv) = match n_won {
            0 => (0.0, 0.0, 0.0, None),
            1 => (all.won_values[0], 0.0, 0.0, None),
            _ => won_value_moments(&all.won_values),
        };
        LookupRow {
            feature_value: String::new(),
            n_total: all.n_total,
            n_won,
            n_lost: all.n_total - n_won,
            mean_won_value: mean,
            sem_won_value: sem,
            std_won_value: std,
            win_rate: if all.n_total > 0 { n_won as f64 / all.n_total as f64 } else { 0.0 },
            cv_won_value: cv.unwrap_or(0.0),
        }
    };

    let rows = groups
        .into_iter()
        .map(|(value, acc)| {
            let n_won = acc.won_values.len() as u32;
            // Sparse values inherit the fallback's value moments; a single
            // win keeps its own mean but borrows spread statistics.
            let (mean, std, sem, cv) = if n_won >= SPARSE_MIN_WON {
                let (mean, std, sem, cv) = won_value_moments(&acc.won_values);
                (mean, std, sem, cv.unwrap_or(fallback.cv_won_value))
            } else if n_won == 1 {
                (
                    acc.won_values[0],
                    fallback.std_won_value,
                    fallback.sem_won_value,
                    fallback.cv_won_value,
                )
            } else {
                (
                    fallback.mean_won_value,
                    fallback.std_won_value,
                    fallback.sem_won_value,
                    fallback.cv_won_value,
                )
            };
            let row = LookupRow {
                feature_value: value.clone(),
                n_total: acc.n_total,
                n_won,
                n_lost: acc.n_total - n_won,
                mean_won_value: mean,
                sem_won_value: sem,
                std_won_value: std,
                win_rate: n_won as f64 / acc.n_total as f64,
                cv_won_value: cv,
            };
            (value, row)
        })
        .collect();

    Ok(LookupTable {
        feature,
        rows,
        fallback,
    })
}

/// Build all thirteen lookup tables, in canonical feature order.
pub fn build_lookups(train: &RecordSet) -> Result<Vec<LookupTable>> {
    CatFeature::ALL
        .iter()
        .map(|&f| build_lookup(train, f))
        .collect()
}

/// Dense row-major numeric matrix with named columns, aligned record ids and
/// optional outcome labels. All values are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    row_ids: Vec<String>,
    column_names: Vec<String>,
    values: Vec<f64>,
    n_cols: usize,
    labels: Vec<Option<f64>>,
}

impl FeatureMatrix {
    pub fn new(
        row_ids: Vec<String>,
        column_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n_rows = row_ids.len();
        let n_cols = column_names.len();
        if values.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "matrix values: expected {n_rows} x {n_cols} = {}, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        if labels.len() != n_rows {
            return Err(Error::Shape(format!(
                "matrix labels: expected {n_rows}, got {}",
                labels.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "feature matrix must be finite, got {bad}"
            )));
        }
        Ok(FeatureMatrix {
            row_ids,
            column_names,
            values,
            n_cols,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn labels(&self) -> &[Option<f64>] {
        &self.labels
    }

    /// Labels as a dense vector; errors if any row is unlabeled.
    pub fn labels_dense(&self) -> Result<Vec<f64>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| {
                    Error::Record {
                        id: self.row_ids[i].clone(),
                        message: "record has no outcome label".to_string(),
                    }
                })
            })
            .collect()
    }

    /// Copy out a row subset (used by cross-validation folds).
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            column_names: self.column_names.clone(),
            values,
            n_cols: self.n_cols,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

/// Column names of the enhanced matrix: 18 base + 13 x 9 derived = 135.
pub fn enhanced_column_names() -> Vec<String> {
    let mut names: Vec<String> = CatFeature::ALL.iter().map(|f| f.as_str().to_string()).collect();
    names.extend(
        [
            "key_account_energy",
            "key_account_healthcare",
            "key_account_finance",
            "project_duration",
            "total_contract_value",
        ]
        .map(String::from),
    );
    for f in CatFeature::ALL {
        for stat in DERIVED_STATS {
            names.push(format!("{}__{}", f.as_str(), stat));
        }
    }
    names
}

/// Expand records into the 135-column feature matrix using training lookups.
///
/// Records may be closed or open (open rows get no label); every record must
/// be complete. `status` and `user_probability` are deliberately excluded
/// from the matrix — the former is the target, the latter is the human
/// baseline the model is compared against.
pub fn enhance_records(rs: &RecordSet, lookups: &[LookupTable]) -> Result<FeatureMatrix> {
    if lookups.len() != CatFeature::ALL.len()
        || lookups
            .iter()
            .zip(CatFeature::ALL)
            .any(|(t, f)| t.feature != f)
    {
        return Err(Error::Config(
            "expected 13 lookup tables in canonical feature order".to_string(),
        ));
    }

    let column_names = enhanced_column_names();
    let n_cols = column_names.len();
    let mut values = Vec::with_capacity(rs.records.len() * n_cols);
    let mut labels = Vec::with_capacity(rs.records.len());
    let mut row_ids = Vec::with_capacity(rs.records.len());

    for r in &rs.records {
        if !r.is_complete() {
            return Err(Error::Record {
                id: r.opportunity_id.clone(),
                message: format!(
                    "enhancement requires complete records (missing: {:?})",
                    r.missing_fields()
                ),
            });
        }
        let tcv = r.total_contract_value.expect("checked complete");

        // Base columns: ordinal category codes, flags, numerics.
        for (table, feature) in lookups.iter().zip(CatFeature::ALL) {
            let value = r.categorical(feature).expect("checked complete");
            values.push(table.ordinal(value) as f64);
        }
        values.push(r.key_account_energy.expect("checked complete") as u8 as f64);
        values.push(r.key_account_healthcare.expect("checked complete") as u8 as f64);
        values.push(r.key_account_finance.expect("checked complete") as u8 as f64);
        values.push(r.project_duration.expect("checked complete"));
        values.push(tcv);

        // Derived columns: 8 lookup statistics + Mahalanobis per feature.
        for (table, feature) in lookups.iter().zip(CatFeature::ALL) {
            let value = r.categorical(feature).expect("checked complete");
            let row = table.row_or_fallback(value);
            values.push(row.n_total as f64);
            values.push(row.n_won as f64);
            values.push(row.n_lost as f64);
            values.push(row.mean_won_value);
            values.push(row.sem_won_value);
            values.push(row.std_won_value);
            values.push(row.win_rate);
            values.push(row.cv_won_value);
            values.push(mahalanobis_1d(tcv, row.mean_won_value, row.std_won_value));
        }

        labels.push(r.label());
        row_ids.push(r.opportunity_id.clone());
    }

    FeatureMatrix::new(row_ids, column_names, values, labels)
}
