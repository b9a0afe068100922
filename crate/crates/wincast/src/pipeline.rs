//! Pipeline orchestration: train a deployable artifact from a history CSV,
//! score new records with it, and persist it as a single JSON file.
//!
//! Training runs ingest → drop-incomplete → closed-only filter → split →
//! lookup building → enhancement → ensemble training → boundary calibration,
//! then embeds a held-out evaluation in the artifact's metadata. Prediction
//! never retrains or recalibrates: it reuses the artifact's lookups, members
//! and boundary grid, so a record scores bit-identically wherever it is
//! scored (batch CLI or the serving endpoint).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{calibrate_boundaries, BoundaryGrid};
use crate::enhance::{build_lookups, enhance_records, enhanced_column_names, LookupTable};
use crate::ensemble::{train_ensemble, CvReport, EnsembleModel};
use crate::ingest::{
    drop_missing, parse_records, parse_records_path, split_train_test, CatFeature, RecordSet,
    Segment,
};
use crate::metrics::MetricReport;
use crate::{Error, Result};

/// Artifact format identifier; bumped on any breaking layout change.
pub const SCHEMA_VERSION: &str = "wincast-artifact/1";

/// Below this many closed records, training proceeds but emits a warning —
/// per-cell boundary calibration needs a few dozen records in each of the
/// twelve segment-quartile cells to mean anything.
pub const RECOMMENDED_CLOSED_RECORDS: usize = 1000;

/// Which split's records feed boundary calibration. `Train` (the default)
/// reuses the training rows with in-sample probabilities; `Test` spends the
/// held-out rows on calibration instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySource {
    Train,
    Test,
}

/// Training-run configuration around the fixed model recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Single seed driving the train/test split and the fold partition.
    pub seed: u64,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub boundary_source: BoundarySource,
    /// Recorded verbatim in the artifact when given. Left `None` by default
    /// so identical inputs keep producing byte-identical artifacts.
    pub timestamp: Option<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 7,
            train_fraction: 0.7,
            cv_folds: 10,
            boundary_source: BoundarySource::Train,
            timestamp: None,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction.is_finite()
            && self.train_fraction > 0.0
            && self.train_fraction < 1.0)
        {
            return Err(Error::Config(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            )));
        }
        Ok(())
    }
}

/// Provenance and quality evidence stored alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub boundary_source: BoundarySource,
    /// Caller-supplied wall-clock stamp; `None` keeps artifacts reproducible.
    pub trained_at: Option<String>,
    /// Where the training records came from (file path or generator tag).
    pub data_provenance: String,
    /// SHA-256 of the training input (CSV bytes when trained from a file).
    pub data_fingerprint: String,
    pub n_input_records: usize,
    pub n_dropped_incomplete: usize,
    pub n_closed: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub cv_report: CvReport,
    /// Held-out evaluation of the deployed decision path (grid thresholds).
    pub test_metrics: MetricReport,
    /// Same held-out records judged by the human forecast at threshold 0.5.
    pub test_user_metrics: MetricReport,
}

/// The deployable unit: everything needed to score a record, in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: String,
    /// Thirteen lookup tables in canonical feature order.
    pub lookups: Vec<LookupTable>,
    pub ensemble: EnsembleModel,
    pub boundary_grid: BoundaryGrid,
    pub training_metadata: TrainingMetadata,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ModelArtifact {
    /// Canonical single-line JSON rendering (also the fingerprint input).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact contains only serializable finite values")
    }

    /// SHA-256 over the canonical JSON; stable across save/load round-trips.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    /// Structural invariants every loaded or assembled artifact must hold.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version.clone(),
                expected: SCHEMA_VERSION.to_string(),
            });
        }
        if self.lookups.len() != CatFeature::ALL.len()
            || self
                .lookups
                .iter()
                .zip(CatFeature::ALL)
                .any(|(t, f)| t.feature != f)
        {
            return Err(Error::Config(
                "artifact must carry 13 lookup tables in canonical feature order".to_string(),
            ));
        }
        let members = &self.ensemble.members;
        if members.is_empty() {
            return Err(Error::Config("artifact has no ensemble members".to_string()));
        }
        if self.ensemble.weights.len() != members.len() {
            return Err(Error::Shape(format!(
                "artifact has {} members but {} weights",
                members.len(),
                self.ensemble.weights.len()
            )));
        }
        let weight_sum: f64 = self.ensemble.weights.iter().sum();
        if self
            .ensemble
            .weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
            || (weight_sum - 1.0).abs() > 1e-9
        {
            return Err(Error::Numeric(format!(
                "artifact voting weights must be non-negative and sum to 1, sum is {weight_sum}"
            )));
        }
        let n_features = enhanced_column_names().len();
        if let Some(m) = members.iter().find(|m| m.n_features != n_features) {
            return Err(Error::Shape(format!(
                "ensemble member expects {} features, enhanced records have {n_features}",
                m.n_features
            )));
        }
        let grid = &self.boundary_grid;
        let all_thresholds = grid
            .thresholds
            .iter()
            .flatten()
            .chain(&grid.segment_thresholds);
        for &t in all_thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!(
                    "boundary threshold {t} lies outside [0, 1]"
                )));
            }
        }
        for cuts in &grid.cuts {
            if !(cuts[0] <= cuts[1] && cuts[1] <= cuts[2]) {
                return Err(Error::Config(format!(
                    "quartile cuts must be ascending, got {cuts:?}"
                )));
            }
        }
        Ok(())
    }
}

/// An artifact plus anything the caller should surface but not fail on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub warnings: Vec<String>,
}

/// Write the artifact as one JSON file.
pub fn save_artifact(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    fs::write(path, artifact.to_json()).map_err(|e| Error::io(path, e))
}

/// Read an artifact back, refusing foreign schema versions and structurally
/// invalid contents. A corrupted file fails atomically: no partial artifact.
pub fn load_artifact(path: &Path) -> Result<ModelArtifact> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_artifact(&text)
}

/// Interpret serialized artifact JSON, refusing foreign schema versions and
/// structurally invalid contents.
pub fn parse_artifact(text: &str) -> Result<ModelArtifact> {
    // Check the version before interpreting the rest, so an artifact from a
    // different schema reports incompatibility rather than a parse error.
    #[derive(Deserialize)]
    struct VersionProbe {
        schema_version: String,
    }
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: probe.schema_version,
            expected: SCHEMA_VERSION.to_string(),
        });
    }

    let artifact: ModelArtifact = serde_json::from_str(text)?;
    artifact.validate()?;
    Ok(artifact)
}

/// Fit the boundary grid from a record batch and its win probabilities.
fn fit_boundary_grid(rs: &RecordSet, probs: &[f64]) -> Result<BoundaryGrid> {
    let labels: Vec<bool> = rs.records.iter().map(|r| r.label() == Some(1.0)).collect();
    let segments: Vec<Segment> = rs
        .records
        .iter()
        .map(|r| r.segment.expect("calibration records are complete"))
        .collect();
    let values: Vec<f64> = rs
        .records
        .iter()
        .map(|r| r.total_contract_value.expect("calibration records are complete"))
        .collect();
    calibrate_boundaries(probs, &labels, &segments, &values)
}

/// Score a closed record batch through the grid and report ML and human
/// metrics side by side.
fn evaluate_closed(
    rs: &RecordSet,
    probs: &[f64],
    grid: &BoundaryGrid,
) -> Result<(MetricReport, MetricReport)> {
    let actual: Vec<bool> = rs.records.iter().map(|r| r.label() == Some(1.0)).collect();
    let values: Vec<f64> = rs
        .records
        .iter()
        .map(|r| r.total_contract_value.expect("evaluation records are complete"))
        .collect();
    let predicted: Vec<bool> = rs
        .records
        .iter()
        .zip(probs)
        .map(|(r, &p)| {
            grid.classify(
                r.segment.expect("evaluation records are complete"),
                r.total_contract_value.expect("evaluation records are complete"),
                p,
            )
            .predicted_won
        })
        .collect();
    let ml = MetricReport::compute(&predicted, &actual, &values, Some(probs))?;

    let user_probs: Vec<f64> = rs
        .records
        .iter()
        .map(|r| r.user_probability.expect("evaluation records are complete"))
        .collect();
    let user_predicted: Vec<bool> = user_probs.iter().map(|&p| p > 0.5).collect();
    let user = MetricReport::compute(&user_predicted, &actual, &values, Some(&user_probs))?;
    Ok((ml, user))
}

/// Train a deployable artifact from an opportunity-history CSV file.
pub fn run_ml_pipeline(train_csv: &Path, options: &TrainOptions) -> Result<TrainOutcome> {
    let bytes = fs::read(train_csv).map_err(|e| Error::io(train_csv, e))?;
    let rs = parse_records(bytes.as_slice(), &train_csv.display().to_string())
        .map_err(|e| e.in_stage("ingest"))?;
    train_from_records(&rs, &sha256_hex(&bytes), options)
}

/// Train a deployable artifact from already-parsed records.
///
/// `data_fingerprint` is recorded verbatim (the file pipeline passes the
/// SHA-256 of the CSV bytes). Incomplete records are dropped, open records
/// are excluded from training, and the held-out test evaluation is embedded
/// in the artifact's metadata.
pub fn train_from_records(
    records: &RecordSet,
    data_fingerprint: &str,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    options.validate()?;
    let mut warnings = Vec::new();

    let (complete, n_dropped) = drop_missing(records);
    let closed = RecordSet::new(
        complete
            .records
            .iter()
            .filter(|r| r.is_closed())
            .cloned()
            .collect(),
        complete.provenance.clone(),
    );
    if closed.len() < RECOMMENDED_CLOSED_RECORDS {
        warnings.push(format!(
            "training on {} closed records; at least {RECOMMENDED_CLOSED_RECORDS} are \
             recommended for stable boundary calibration",
            closed.len()
        ));
    }

    if closed.is_empty() {
        return Err(Error::Config(
            "history contains no complete closed records to train on".to_string(),
        )
        .in_stage("split"));
    }
    let (train_rs, test_rs) = split_train_test(&closed, options.train_fraction, options.seed)
        .map_err(|e| e.in_stage("split"))?;
    if train_rs.is_empty() || test_rs.is_empty() {
        return Err(Error::Config(format!(
            "train_fraction {} leaves an empty split ({} train / {} test of {} closed records)",
            options.train_fraction,
            train_rs.len(),
            test_rs.len(),
            closed.len()
        ))
        .in_stage("split"));
    }

    let lookups = build_lookups(&train_rs).map_err(|e| e.in_stage("lookups"))?;
    let train_m = enhance_records(&train_rs, &lookups).map_err(|e| e.in_stage("enhance"))?;
    let test_m = enhance_records(&test_rs, &lookups).map_err(|e| e.in_stage("enhance"))?;

    let (ensemble, cv_report) = train_ensemble(&train_m, options.cv_folds, options.seed)
        .map_err(|e| e.in_stage("train_ensemble"))?;

    let train_probs = ensemble
        .predict_proba(&train_m)
        .map_err(|e| e.in_stage("calibrate"))?;
    let test_probs = ensemble
        .predict_proba(&test_m)
        .map_err(|e| e.in_stage("evaluate"))?;

    let (cal_rs, cal_probs) = match options.boundary_source {
        BoundarySource::Train => (&train_rs, &train_probs),
        BoundarySource::Test => (&test_rs, &test_probs),
    };
    let boundary_grid =
        fit_boundary_grid(cal_rs, cal_probs).map_err(|e| e.in_stage("calibrate"))?;

    let (test_metrics, test_user_metrics) = evaluate_closed(&test_rs, &test_probs, &boundary_grid)
        .map_err(|e| e.in_stage("evaluate"))?;

    let artifact = ModelArtifact {
        schema_version: SCHEMA_VERSION.to_string(),
        lookups,
        ensemble,
        boundary_grid,
        training_metadata: TrainingMetadata {
            seed: options.seed,
            train_fraction: options.train_fraction,
            cv_folds: options.cv_folds,
            boundary_source: options.boundary_source,
            trained_at: options.timestamp.clone(),
            data_provenance: records.provenance.clone(),
            data_fingerprint: data_fingerprint.to_string(),
            n_input_records: records.len(),
            n_dropped_incomplete: n_dropped,
            n_closed: closed.len(),
            n_train: train_rs.len(),
            n_test: test_rs.len(),
            cv_report,
            test_metrics,
            test_user_metrics,
        },
    };
    artifact.validate()?;
    Ok(TrainOutcome { artifact, warnings })
}

/// Refit only the boundary grid of an existing artifact against a data file,
/// replaying the artifact's recorded split so `Train`/`Test` mean the same
/// rows they meant during training. The ensemble is reused, never retrained.
pub fn recalibrate(
    artifact: &ModelArtifact,
    records: &RecordSet,
    source: BoundarySource,
) -> Result<ModelArtifact> {
    artifact.validate()?;
    let (complete, _) = drop_missing(records);
    let closed = RecordSet::new(
        complete
            .records
            .iter()
            .filter(|r| r.is_closed())
            .cloned()
            .collect(),
        complete.provenance.clone(),
    );
    let meta = &artifact.training_metadata;
    let (train_rs, test_rs) = split_train_test(&closed, meta.train_fraction, meta.seed)
        .map_err(|e| e.in_stage("split"))?;
    let chosen = match source {
        BoundarySource::Train => train_rs,
        BoundarySource::Test => test_rs,
    };
    let matrix =
        enhance_records(&chosen, &artifact.lookups).map_err(|e| e.in_stage("enhance"))?;
    let probs = artifact
        .ensemble
        .predict_proba(&matrix)
        .map_err(|e| e.in_stage("score"))?;
    let boundary_grid =
        fit_boundary_grid(&chosen, &probs).map_err(|e| e.in_stage("calibrate"))?;

    let mut out = artifact.clone();
    out.boundary_grid = boundary_grid;
    out.training_metadata.boundary_source = source;
    out.validate()?;
    Ok(out)
}

/// One scored record of a prediction report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub opportunity_id: String,
    pub probability: f64,
    pub segment: Segment,
    /// Contract-value quartile (1..=4) under the artifact's cuts.
    pub quartile: u8,
    /// The threshold that judged this record.
    pub threshold: f64,
    pub predicted_won: bool,
}

/// Scored records in input order, plus aggregate metrics when the batch
/// carried ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub rows: Vec<PredictionRow>,
    /// Present when at least one input record was closed.
    pub ml_metrics: Option<MetricReport>,
    /// The human forecast on the same closed records, for comparison.
    pub user_metrics: Option<MetricReport>,
}

impl PredictionReport {
    /// Render rows as CSV with shortest-round-trip float formatting, so the
    /// report is byte-stable and parses back to identical numbers.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["opportunity_id", "probability", "segment", "quartile", "threshold", "decision"])
            .expect("in-memory CSV write cannot fail");
        for row in &self.rows {
            w.write_record([
                row.opportunity_id.as_str(),
                &row.probability.to_string(),
                row.segment.as_str(),
                &row.quartile.to_string(),
                &row.threshold.to_string(),
                if row.predicted_won { "won" } else { "lost" },
            ])
            .expect("in-memory CSV write cannot fail");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush cannot fail"))
            .expect("CSV output is UTF-8")
    }
}

/// Score a CSV of records with a trained artifact. See [`predict_records`].
pub fn run_prediction_pipeline(
    data_csv: &Path,
    artifact: &ModelArtifact,
) -> Result<PredictionReport> {
    let rs = parse_records_path(data_csv).map_err(|e| e.in_stage("ingest"))?;
    predict_records(&rs, artifact)
}

/// Score records with a trained artifact: enhance with the artifact's
/// lookups (unseen categorical values take the fallback row), soft-vote the
/// ensemble, and classify against the boundary grid. Every input record
/// yields exactly one row, in input order. When closed records are present,
/// the report additionally carries ML and human metric aggregates.
pub fn predict_records(records: &RecordSet, artifact: &ModelArtifact) -> Result<PredictionReport> {
    artifact.validate()?;
    let matrix =
        enhance_records(records, &artifact.lookups).map_err(|e| e.in_stage("enhance"))?;
    let probs = artifact
        .ensemble
        .predict_proba(&matrix)
        .map_err(|e| e.in_stage("score"))?;

    let mut rows = Vec::with_capacity(records.len());
    for (r, &p) in records.records.iter().zip(&probs) {
        let segment = r.segment.expect("enhanced records are complete");
        let value = r.total_contract_value.expect("enhanced records are complete");
        let decision = artifact.boundary_grid.classify(segment, value, p);
        rows.push(PredictionRow {
            opportunity_id: r.opportunity_id.clone(),
            probability: p,
            segment,
            quartile: decision.quartile,
            threshold: decision.threshold,
            predicted_won: decision.predicted_won,
        });
    }

    // Evaluation mode: aggregate over whichever input records are closed.
    let closed_idx: Vec<usize> = records
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_closed())
        .map(|(i, _)| i)
        .collect();
    let (ml_metrics, user_metrics) = if closed_idx.is_empty() {
        (None, None)
    } else {
        let actual: Vec<bool> = closed_idx
            .iter()
            .map(|&i| records.records[i].label() == Some(1.0))
            .collect();
        let values: Vec<f64> = closed_idx
            .iter()
            .map(|&i| {
                records.records[i]
                    .total_contract_value
                    .expect("enhanced records are complete")
            })
            .collect();
        let predicted: Vec<bool> = closed_idx.iter().map(|&i| rows[i].predicted_won).collect();
        let sub_probs: Vec<f64> = closed_idx.iter().map(|&i| probs[i]).collect();
        let ml = MetricReport::compute(&predicted, &actual, &values, Some(&sub_probs))
            .map_err(|e| e.in_stage("evaluate"))?;

        let user_probs: Vec<f64> = closed_idx
            .iter()
            .map(|&i| {
                records.records[i]
                    .user_probability
                    .expect("enhanced records are complete")
            })
            .collect();
        let user_predicted: Vec<bool> = user_probs.iter().map(|&p| p > 0.5).collect();
        let user = MetricReport::compute(&user_predicted, &actual, &values, Some(&user_probs))
            .map_err(|e| e.in_stage("evaluate"))?;
        (Some(ml), Some(user))
    };

    Ok(PredictionReport {
        rows,
        ml_metrics,
        user_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{records_to_csv, Status};
    use crate::synth::{generate, SynthConfig};
    use std::sync::OnceLock;

    /// One small-but-real training run shared by the whole module: 600
    /// records, 3-fold CV. Pipeline mechanics are identical to full scale.
    fn fixture() -> &'static (TrainOutcome, RecordSet, String) {
        static FIXTURE: OnceLock<(TrainOutcome, RecordSet, String)> = OnceLock::new();
        FIXTURE.get_or_init(|| {
            let rs = generate(&SynthConfig {
                n_records: 600,
                seed: 13,
                ..SynthConfig::default()
            })
            .unwrap();
            let options = TrainOptions {
                cv_folds: 3,
                ..TrainOptions::default()
            };
            let csv = records_to_csv(&rs);
            let outcome = train_from_records(&rs, "test-fingerprint", &options).unwrap();
            (outcome, rs, csv)
        })
    }

    fn scoring_batch(n: usize, seed: u64) -> RecordSet {
        generate(&SynthConfig {
            n_records: n,
            seed,
            missing_rate: 0.0,
            open_fraction: 1.0,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn training_assembles_a_valid_artifact_with_metadata() {
        let (outcome, rs, _) = fixture();
        let a = &outcome.artifact;
        a.validate().unwrap();
        assert_eq!(a.lookups.len(), 13);
        assert_eq!(a.ensemble.members.len(), 34);
        assert_eq!(a.boundary_grid.thresholds.iter().flatten().count(), 12);

        let meta = &a.training_metadata;
        assert_eq!(meta.n_input_records, rs.len());
        assert_eq!(
            meta.n_input_records,
            meta.n_dropped_incomplete
                + meta.n_closed
                + rs.records
                    .iter()
                    .filter(|r| r.is_complete() && !r.is_closed())
                    .count()
        );
        assert_eq!(meta.n_train + meta.n_test, meta.n_closed);
        assert_eq!(meta.cv_report.rows.len(), 35, "34 members + ensemble row");
        assert_eq!(meta.data_fingerprint, "test-fingerprint");
        assert_eq!(meta.trained_at, None);
        assert!(meta.test_metrics.accuracy > 0.5, "model must beat coin flips");

        // 600 records < 1000 recommended → exactly the one warning.
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("recommended"));
    }

    #[test]
    fn file_pipeline_matches_in_memory_training_and_records_the_hash() {
        let (outcome, _, csv) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        fs::write(&path, csv).unwrap();
        let options = TrainOptions {
            cv_folds: 3,
            ..TrainOptions::default()
        };
        let from_file = run_ml_pipeline(&path, &options).unwrap();

        let expected_hash = sha256_hex(csv.as_bytes());
        assert_eq!(from_file.artifact.training_metadata.data_fingerprint, expected_hash);

        // Identical inputs and seeds → identical models; only the recorded
        // provenance and fingerprint strings differ.
        let mut a = from_file.artifact.clone();
        let b = &outcome.artifact;
        a.training_metadata.data_fingerprint = b.training_metadata.data_fingerprint.clone();
        a.training_metadata.data_provenance = b.training_metadata.data_provenance.clone();
        assert_eq!(&a, b);
    }

    #[test]
    fn save_load_round_trip_preserves_fingerprint_and_predictions() {
        let (outcome, _, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_artifact(&outcome.artifact, &path).unwrap();
        let loaded = load_artifact(&path).unwrap();

        assert_eq!(loaded.fingerprint(), outcome.artifact.fingerprint());
        assert_eq!(loaded, outcome.artifact);

        let batch = scoring_batch(40, 99);
        let before = predict_records(&batch, &outcome.artifact).unwrap();
        let after = predict_records(&batch, &loaded).unwrap();
        assert_eq!(before, after, "round-trip must not perturb a single bit");
    }

    #[test]
    fn load_rejects_foreign_versions_and_corrupt_files() {
        let (outcome, _, _) = fixture();
        let dir = tempfile::tempdir().unwrap();

        let foreign = dir.path().join("foreign.json");
        let doctored = outcome
            .artifact
            .to_json()
            .replace(SCHEMA_VERSION, "wincast-artifact/999");
        fs::write(&foreign, doctored).unwrap();
        assert!(matches!(
            load_artifact(&foreign),
            Err(Error::SchemaVersion { .. })
        ));

        let truncated = dir.path().join("truncated.json");
        let json = outcome.artifact.to_json();
        fs::write(&truncated, &json[..json.len() / 2]).unwrap();
        assert!(matches!(
            load_artifact(&truncated),
            Err(Error::ArtifactParse(_))
        ));

        assert!(matches!(
            load_artifact(&dir.path().join("absent.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn prediction_covers_every_record_in_order_with_sane_decisions() {
        let (outcome, _, _) = fixture();
        let mut batch = scoring_batch(100, 41);
        // An account value the training set has never seen must still score
        // (it takes the lookup fallback row).
        batch.records[17].account = "account_unseen_in_training".to_string();

        let report = predict_records(&batch, &outcome.artifact).unwrap();
        assert_eq!(report.rows.len(), 100);
        for (row, record) in report.rows.iter().zip(&batch.records) {
            assert_eq!(row.opportunity_id, record.opportunity_id);
            assert!((0.0..=1.0).contains(&row.probability));
            assert!((0.0..=1.0).contains(&row.threshold));
            assert!((1..=4).contains(&row.quartile));
            assert_eq!(row.predicted_won, row.probability > row.threshold);
        }
        // Open batch → no ground truth, no metric aggregates.
        assert!(report.ml_metrics.is_none());
        assert!(report.user_metrics.is_none());

        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 101);
        assert_eq!(
            lines[0],
            "opportunity_id,probability,segment,quartile,threshold,decision"
        );
        assert!(lines[1..]
            .iter()
            .all(|l| l.ends_with(",won") || l.ends_with(",lost")));
        // Probabilities parse back bit-exactly from the CSV.
        let p1: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(p1, report.rows[0].probability);
    }

    #[test]
    fn closed_records_flip_prediction_into_evaluation_mode() {
        let (outcome, rs, _) = fixture();
        let closed = RecordSet::new(
            rs.records
                .iter()
                .filter(|r| r.is_complete() && r.is_closed())
                .take(80)
                .cloned()
                .collect(),
            "closed-slice",
        );
        let report = predict_records(&closed, &outcome.artifact).unwrap();
        assert_eq!(report.rows.len(), 80);
        let ml = report.ml_metrics.as_ref().expect("ground truth present");
        let user = report.user_metrics.as_ref().expect("ground truth present");
        assert!((0.0..=1.0).contains(&ml.accuracy));
        assert!(ml.auc.is_some());
        assert!((0.0..=1.0).contains(&user.accuracy));
    }

    #[test]
    fn incomplete_scoring_records_are_rejected_with_the_field_name() {
        let (outcome, _, _) = fixture();
        let mut batch = scoring_batch(5, 55);
        batch.records[2].project_duration = None;
        let err = predict_records(&batch, &outcome.artifact).unwrap_err();
        assert!(err.to_string().contains("project_duration"), "{err}");
    }

    #[test]
    fn recalibration_replaces_only_the_grid() {
        let (outcome, rs, _) = fixture();
        let recal = recalibrate(&outcome.artifact, rs, BoundarySource::Test).unwrap();
        assert_eq!(recal.ensemble, outcome.artifact.ensemble);
        assert_eq!(recal.lookups, outcome.artifact.lookups);
        assert_ne!(recal.boundary_grid, outcome.artifact.boundary_grid);
        assert_eq!(
            recal.training_metadata.boundary_source,
            BoundarySource::Test
        );
        recal.validate().unwrap();

        // Replaying the training source reproduces the original grid.
        let replay = recalibrate(&outcome.artifact, rs, BoundarySource::Train).unwrap();
        assert_eq!(replay.boundary_grid, outcome.artifact.boundary_grid);
    }

    #[test]
    fn single_segment_history_fails_in_the_calibrate_stage() {
        let (outcome, rs, _) = fixture();
        let mut mono = rs.clone();
        for r in &mut mono.records {
            r.segment = Some(Segment::Healthcare);
        }
        let err = recalibrate(&outcome.artifact, &mono, BoundarySource::Train).unwrap_err();
        match err {
            Error::Stage { stage, source } => {
                assert_eq!(stage, "calibrate");
                assert!(matches!(*source, Error::MissingSegments(_)));
            }
            other => panic!("expected a calibrate-stage error, got {other}"),
        }
    }

    #[test]
    fn invalid_options_and_empty_inputs_are_validation_errors() {
        let rs = generate(&SynthConfig {
            n_records: 50,
            seed: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        for options in [
            TrainOptions {
                train_fraction: 0.0,
                ..TrainOptions::default()
            },
            TrainOptions {
                train_fraction: 1.0,
                ..TrainOptions::default()
            },
            TrainOptions {
                cv_folds: 1,
                ..TrainOptions::default()
            },
        ] {
            let err = train_from_records(&rs, "x", &options).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
            assert!(err.is_validation());
        }

        // All-open history leaves nothing to train on → split-stage error.
        let open = generate(&SynthConfig {
            n_records: 50,
            seed: 3,
            open_fraction: 1.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let err = train_from_records(&open, "x", &TrainOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "split", .. }), "{err}");
    }

    #[test]
    fn status_column_is_not_a_model_input() {
        // Flipping a status changes nothing about how that record scores —
        // the artifact never looks at outcomes when predicting.
        let (outcome, _, _) = fixture();
        let batch = scoring_batch(10, 77);
        let mut flipped = batch.clone();
        for r in &mut flipped.records {
            r.status = Some(Status::Won);
        }
        let open_report = predict_records(&batch, &outcome.artifact).unwrap();
        let closed_report = predict_records(&flipped, &outcome.artifact).unwrap();
        assert_eq!(open_report.rows, closed_report.rows);
        assert!(closed_report.ml_metrics.is_some());
    }
}
