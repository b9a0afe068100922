//! Heterogeneous GBDT ensemble with cross-validated soft voting.
//!
//! Thirty-four member configurations — seventeen level-wise, seventeen
//! leaf-wise, spanning tree size, learning rate and regularization — are
//! each scored by k-fold cross-validation on the training matrix. Every
//! member then retrains on all training rows, and members vote on new
//! records with weights proportional to how far their cross-validated
//! accuracy clears coin-flipping (`max(accuracy - 0.5, epsilon)`), so a
//! member that generalizes poorly is nearly muted rather than merely
//! down-ranked.
//!
//! All 34 members share each fold's dataset layout (and the full-data
//! layout), which keeps the 374 model fits affordable; training remains
//! byte-for-byte deterministic for a given matrix, fold count and seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::enhance::FeatureMatrix;
use crate::gbdt::{train_with_layout, DatasetLayout, GbdtModel, Growth, Hyperparams};
use crate::{Error, Result};

/// Weight floor: members at or below coin-flip accuracy keep this nominal
/// mass instead of zero so the weight vector stays normalizable.
pub const WEIGHT_EPSILON: f64 = 1e-6;

const LEARNING_RATES: [f64; 3] = [0.05, 0.1, 0.3];
/// (lambda, gamma) pairs: mild L2 only, then strong L2 with a split tax.
const REGULARIZATIONS: [(f64, f64); 2] = [(1.0, 0.0), (5.0, 1.0)];
const LEVEL_DEPTHS: [u32; 4] = [3, 4, 5, 6];
const LEAF_COUNTS: [u32; 4] = [7, 15, 31, 63];
const MEMBERS_PER_FAMILY: usize = 17;

/// The fixed 34-member roster: for each growth family, walk (size asc,
/// learning rate asc, regularization) lexicographically and keep the first
/// seventeen. Every member trains 50 trees with min_child_weight 1.
pub fn make_schedule() -> Vec<Hyperparams> {
    let mut schedule = Vec::with_capacity(2 * MEMBERS_PER_FAMILY);
    let families: [Vec<Growth>; 2] = [
        LEVEL_DEPTHS
            .iter()
            .map(|&d| Growth::LevelWise { max_depth: d })
            .collect(),
        LEAF_COUNTS
            .iter()
            .map(|&l| Growth::LeafWise { max_leaves: l })
            .collect(),
    ];
    for sizes in families {
        let mut family = Vec::new();
        for growth in sizes {
            for lr in LEARNING_RATES {
                for (lambda, gamma) in REGULARIZATIONS {
                    let mut hp = Hyperparams::new(growth);
                    hp.n_trees = 50;
                    hp.learning_rate = lr;
                    hp.lambda = lambda;
                    hp.gamma = gamma;
                    hp.min_child_weight = 1.0;
                    family.push(hp);
                }
            }
        }
        family.truncate(MEMBERS_PER_FAMILY);
        schedule.extend(family);
    }
    schedule
}

/// Deterministic k-fold partition: indices are shuffled once with a seeded
/// RNG and cut into k contiguous blocks whose sizes differ by at most one
/// (the first `n % k` folds take the extra row).
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    if n < k {
        return Err(Error::Config(format!(
            "cannot cut {n} rows into {k} folds"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// k-fold cross-validation of a single configuration: for each fold, train
/// on the other k−1 folds and score accuracy at threshold 0.5 on the
/// held-out rows. Returns the per-fold accuracies and their mean; both are
/// deterministic for a given matrix, fold count and seed.
pub fn cross_validate(
    data: &FeatureMatrix,
    hp: &Hyperparams,
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    hp.validate()?;
    let n = data.n_rows();
    let labels = data.labels_dense()?;
    let folds = make_folds(n, k, seed)?;
    let mut fold_acc = Vec::with_capacity(k);
    for fold in &folds {
        let train_rows: Vec<usize> = {
            let mut in_fold = vec![false; n];
            for &i in fold {
                in_fold[i] = true;
            }
            (0..n).filter(|&i| !in_fold[i]).collect()
        };
        let model = crate::gbdt::train(&data.select_rows(&train_rows), hp)?;
        let probs = model.predict_proba(&data.select_rows(fold))?;
        let fold_labels: Vec<f64> = fold.iter().map(|&i| labels[i]).collect();
        fold_acc.push(accuracy_at_half(&probs, &fold_labels));
    }
    let mean = fold_acc.iter().sum::<f64>() / k as f64;
    Ok((fold_acc, mean))
}

/// Weighted average of member probabilities. Weights must be non-negative
/// with positive sum; they are normalized internally, so `[2, 1]` and
/// `[2/3, 1/3]` vote identically.
pub fn soft_vote(member_probs: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if member_probs.is_empty() {
        return Err(Error::Shape("soft_vote needs at least one member".to_string()));
    }
    if member_probs.len() != weights.len() {
        return Err(Error::Shape(format!(
            "soft_vote: {} members vs {} weights",
            member_probs.len(),
            weights.len()
        )));
    }
    let n = member_probs[0].len();
    if let Some((i, bad)) = member_probs
        .iter()
        .enumerate()
        .find(|(_, p)| p.len() != n)
    {
        return Err(Error::Shape(format!(
            "soft_vote: member {i} predicted {} rows, expected {n}",
            bad.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Numeric(
            "soft_vote weights must be finite and non-negative".to_string(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numeric(
            "soft_vote weights must not all be zero".to_string(),
        ));
    }
    let mut out = vec![0.0; n];
    for (probs, &w) in member_probs.iter().zip(weights) {
        let w = w / total;
        for (acc, &p) in out.iter_mut().zip(probs) {
            *acc += w * p;
        }
    }
    Ok(out)
}

/// Normalized voting weights from mean cross-validated accuracies:
/// proportional to the margin above coin-flipping, floored at
/// [`WEIGHT_EPSILON`]. Accuracies 0.9 and 0.7 yield weights 2/3 and 1/3.
pub fn accuracy_weights(mean_accuracy: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = mean_accuracy
        .iter()
        .map(|&a| (a - 0.5).max(WEIGHT_EPSILON))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn accuracy_at_half(probs: &[f64], labels: &[f64]) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|&(&p, &y)| (p > 0.5) == (y == 1.0))
        .count();
    correct as f64 / labels.len() as f64
}

/// The voting ensemble: members aligned with their weights (summing to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<GbdtModel>,
    pub weights: Vec<f64>,
}

impl EnsembleModel {
    pub fn n_features(&self) -> usize {
        self.members.first().map_or(0, |m| m.n_features)
    }

    /// Soft-vote win probabilities for every row of `data`.
    pub fn predict_proba(&self, data: &FeatureMatrix) -> Result<Vec<f64>> {
        let member_probs: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.predict_proba(data))
            .collect::<Result<_>>()?;
        soft_vote(&member_probs, &self.weights)
    }
}

/// One line of the cross-validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub name: String,
    pub growth: String,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Final voting weight (1.0 on the ensemble row).
    pub weight: f64,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Per-member and ensemble cross-validation accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// One row per member plus a final `ensemble` row.
    pub rows: Vec<CvRow>,
}

impl CvReport {
    /// CSV rendering: `model,growth,learning_rate,lambda,gamma,weight,
    /// fold_1..fold_k,mean` with shortest-round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,growth,learning_rate,lambda,gamma,weight");
        for f in 1..=self.k {
            out.push_str(&format!(",fold_{f}"));
        }
        out.push_str(",mean\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                row.name, row.growth, row.learning_rate, row.lambda, row.gamma, row.weight
            ));
            for acc in &row.fold_accuracy {
                out.push_str(&format!(",{acc}"));
            }
            out.push_str(&format!(",{}\n", row.mean_accuracy));
        }
        out
    }
}

/// Train the standard 34-member ensemble. See [`train_ensemble_with`].
pub fn train_ensemble(
    data: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<(EnsembleModel, CvReport)> {
    train_ensemble_with(data, &make_schedule(), k, seed)
}

/// Cross-validate every scheduled configuration, retrain each on the full
/// matrix, and weight their votes by cross-validated accuracy margin.
///
/// All members see the *same* fold partition, so their accuracies are
/// comparable; each member's out-of-fold predictions are also soft-voted
/// into the report's final `ensemble` row.
pub fn train_ensemble_with(
    data: &FeatureMatrix,
    schedule: &[Hyperparams],
    k: usize,
    seed: u64,
) -> Result<(EnsembleModel, CvReport)> {
    if schedule.is_empty() {
        return Err(Error::Config("ensemble schedule is empty".to_string()));
    }
    for hp in schedule {
        hp.validate()?;
    }
    let n = data.n_rows();
    let labels = data.labels_dense()?;
    let folds = make_folds(n, k, seed)?;

    // Out-of-fold probabilities per member, assembled across folds.
    let mut oof: Vec<Vec<f64>> = vec![vec![0.0; n]; schedule.len()];
    let mut fold_acc: Vec<Vec<f64>> = vec![Vec::with_capacity(k); schedule.len()];
    for fold in &folds {
        let train_rows: Vec<usize> = {
            let mut in_fold = vec![false; n];
            for &i in fold {
                in_fold[i] = true;
            }
            (0..n).filter(|&i| !in_fold[i]).collect()
        };
        let train_m = data.select_rows(&train_rows);
        let val_m = data.select_rows(fold);
        let val_labels: Vec<f64> = fold.iter().map(|&i| labels[i]).collect();
        let layout = DatasetLayout::build(&train_m);
        for (m, hp) in schedule.iter().enumerate() {
            let (model, _) = train_with_layout(&train_m, &layout, hp)?;
            let probs = model.predict_proba(&val_m)?;
            fold_acc[m].push(accuracy_at_half(&probs, &val_labels));
            for (&i, &p) in fold.iter().zip(&probs) {
                oof[m][i] = p;
            }
        }
    }

    let mean_acc: Vec<f64> = fold_acc
        .iter()
        .map(|accs| accs.iter().sum::<f64>() / accs.len() as f64)
        .collect();
    let weights = accuracy_weights(&mean_acc);

    // Final members trained on every row, sharing one layout.
    let full_layout = DatasetLayout::build(data);
    let members: Vec<GbdtModel> = schedule
        .iter()
        .map(|hp| train_with_layout(data, &full_layout, hp).map(|(m, _)| m))
        .collect::<Result<_>>()?;

    // Ensemble row: vote the out-of-fold predictions with the final weights.
    let ensemble_oof = soft_vote(&oof, &weights)?;
    let ensemble_fold_acc: Vec<f64> = folds
        .iter()
        .map(|fold| {
            let probs: Vec<f64> = fold.iter().map(|&i| ensemble_oof[i]).collect();
            let fold_labels: Vec<f64> = fold.iter().map(|&i| labels[i]).collect();
            accuracy_at_half(&probs, &fold_labels)
        })
        .collect();

    let mut rows: Vec<CvRow> = schedule
        .iter()
        .enumerate()
        .map(|(m, hp)| CvRow {
            name: format!("model_{:02}", m + 1),
            growth: hp.growth.describe(),
            learning_rate: hp.learning_rate,
            lambda: hp.lambda,
            gamma: hp.gamma,
            weight: weights[m],
            fold_accuracy: fold_acc[m].clone(),
            mean_accuracy: mean_acc[m],
        })
        .collect();
    rows.push(CvRow {
        name: "ensemble".to_string(),
        growth: "soft_vote".to_string(),
        learning_rate: 0.0,
        lambda: 0.0,
        gamma: 0.0,
        weight: 1.0,
        fold_accuracy: ensemble_fold_acc.clone(),
        mean_accuracy: ensemble_fold_acc.iter().sum::<f64>() / k as f64,
    });

    Ok((
        EnsembleModel { members, weights },
        CvReport { k, seed, rows },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::{build_lookups, enhance_records};
    use crate::gbdt::Loss;
    use crate::synth::{generate, SynthConfig};
    use proptest::prelude::*;

    #[test]
    fn schedule_is_34_members_lexicographic_per_family() {
        let schedule = make_schedule();
        assert_eq!(schedule.len(), 34);

        for hp in &schedule {
            assert_eq!(hp.n_trees, 50);
            assert_eq!(hp.min_child_weight, 1.0);
            assert_eq!(hp.loss, Loss::Logistic);
            assert!(LEARNING_RATES.contains(&hp.learning_rate));
            assert!(REGULARIZATIONS.contains(&(hp.lambda, hp.gamma)));
            hp.validate().unwrap();
        }

        // 17 per family, sizes filled smallest-first: 6 + 6 + 5, so the
        // largest size in each grid never makes the cut.
        let level: Vec<_> = schedule
            .iter()
            .filter(|hp| matches!(hp.growth, Growth::LevelWise { .. }))
            .collect();
        let leaf: Vec<_> = schedule
            .iter()
            .filter(|hp| matches!(hp.growth, Growth::LeafWise { .. }))
            .collect();
        assert_eq!(level.len(), 17);
        assert_eq!(leaf.len(), 17);
        for (sizes, members, size_of) in [
            (
                LEVEL_DEPTHS,
                &level,
                (&|hp: &Hyperparams| match hp.growth {
                    Growth::LevelWise { max_depth } => max_depth,
                    Growth::LeafWise { .. } => unreachable!(),
                }) as &dyn Fn(&Hyperparams) -> u32,
            ),
            (
                LEAF_COUNTS,
                &leaf,
                &|hp: &Hyperparams| match hp.growth {
                    Growth::LeafWise { max_leaves } => max_leaves,
                    Growth::LevelWise { .. } => unreachable!(),
                },
            ),
        ] {
            let counts: Vec<usize> = sizes
                .iter()
                .map(|&s| members.iter().filter(|hp| size_of(hp) == s).count())
                .collect();
            assert_eq!(counts, vec![6, 6, 5, 0]);
            // Lexicographic: (size, lr, lambda) keys never decrease.
            let keys: Vec<(u32, f64, f64)> = members
                .iter()
                .map(|hp| (size_of(hp), hp.learning_rate, hp.lambda))
                .collect();
            let mut sorted = keys.clone();
            sorted.sort_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.total_cmp(&b.2))
            });
            assert_eq!(keys, sorted);
        }

        // No duplicate configurations.
        for (i, a) in schedule.iter().enumerate() {
            for b in &schedule[i + 1..] {
                assert_ne!(a, b);
            }
        }

        // First member pins the documented lexicographic start.
        assert_eq!(schedule[0].growth, Growth::LevelWise { max_depth: 3 });
        assert_eq!(schedule[0].learning_rate, 0.05);
        assert_eq!((schedule[0].lambda, schedule[0].gamma), (1.0, 0.0));
    }

    #[test]
    fn folds_partition_deterministically() {
        let folds = make_folds(103, 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = vec![0u8; 103];
        for fold in &folds {
            assert!(fold.len() == 10 || fold.len() == 11);
            for &i in fold {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "each row in exactly one fold");
        assert_eq!(folds[0].len(), 11, "first n % k folds take the extra row");

        assert_eq!(folds, make_folds(103, 10, 7).unwrap());
        assert_ne!(folds, make_folds(103, 10, 8).unwrap());
        assert!(make_folds(5, 1, 0).is_err());
        assert!(make_folds(3, 4, 0).is_err());
    }

    #[test]
    fn accuracy_margins_become_weights() {
        let w = accuracy_weights(&[0.9, 0.7]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);

        // At or below coin-flip, members share the epsilon floor equally.
        let w = accuracy_weights(&[0.5, 0.45, 0.3]);
        for wi in &w {
            assert!((wi - 1.0 / 3.0).abs() < 1e-12);
        }

        let w = accuracy_weights(&[0.8, 0.5]);
        assert!(w[0] > 0.99 && w[1] < 0.01, "coin-flip members are muted");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_vote_worked_example_and_validation() {
        let votes = soft_vote(
            &[vec![0.2, 0.8], vec![0.6, 0.4]],
            &[2.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap();
        assert!((votes[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((votes[1] - 2.0 / 3.0).abs() < 1e-12);

        // Unnormalized weights vote identically.
        let unnorm = soft_vote(&[vec![0.2, 0.8], vec![0.6, 0.4]], &[2.0, 1.0]).unwrap();
        for (a, b) in votes.iter().zip(&unnorm) {
            assert!((a - b).abs() < 1e-15);
        }

        assert!(matches!(soft_vote(&[], &[]), Err(Error::Shape(_))));
        assert!(matches!(
            soft_vote(&[vec![0.5]], &[0.5, 0.5]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            soft_vote(&[vec![0.5], vec![0.1, 0.2]], &[0.5, 0.5]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            soft_vote(&[vec![0.5]], &[-1.0]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            soft_vote(&[vec![0.5]], &[0.0]),
            Err(Error::Numeric(_))
        ));
    }

    proptest! {
        #[test]
        fn soft_vote_stays_in_the_convex_hull(
            probs in proptest::collection::vec(
                proptest::collection::vec(0.0f64..=1.0, 5),
                1..6,
            ),
            raw_weights in proptest::collection::vec(0.01f64..10.0, 6),
        ) {
            let weights = &raw_weights[..probs.len()];
            let votes = soft_vote(&probs, weights).unwrap();
            for (i, &v) in votes.iter().enumerate() {
                let lo = probs.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi = probs.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn soft_vote_is_permutation_invariant(
            seed_probs in proptest::collection::vec(0.0f64..=1.0, 8),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let probs: Vec<Vec<f64>> = seed_probs.chunks(2).map(|c| c.to_vec()).collect();
            let weights = vec![1.0, 2.0, 3.0, 4.0];
            let votes = soft_vote(&probs, &weights).unwrap();

            let mut order: Vec<usize> = (0..4).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let probs_p: Vec<Vec<f64>> = order.iter().map(|&i| probs[i].clone()).collect();
            let weights_p: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
            let votes_p = soft_vote(&probs_p, &weights_p).unwrap();
            for (a, b) in votes.iter().zip(&votes_p) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Small enhanced matrix from synthetic records for end-to-end checks.
    fn small_matrix(n: usize, seed: u64) -> FeatureMatrix {
        let rs = generate(&SynthConfig {
            n_records: n,
            seed,
            missing_rate: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let lookups = build_lookups(&rs).unwrap();
        enhance_records(&rs, &lookups).unwrap()
    }

    #[test]
    fn short_schedule_ensemble_trains_reports_and_repeats() {
        let data = small_matrix(400, 3);
        let schedule: Vec<Hyperparams> = make_schedule()
            .into_iter()
            .step_by(9)
            .map(|mut hp| {
                hp.n_trees = 15;
                hp
            })
            .collect();
        assert_eq!(schedule.len(), 4);

        let (model, report) = train_ensemble_with(&data, &schedule, 3, 11).unwrap();
        assert_eq!(model.members.len(), 4);
        assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(report.rows.len(), 5, "4 members + ensemble row");
        for row in &report.rows {
            assert_eq!(row.fold_accuracy.len(), 3);
            for &acc in &row.fold_accuracy {
                assert!((0.0..=1.0).contains(&acc));
            }
            let mean = row.fold_accuracy.iter().sum::<f64>() / 3.0;
            assert!((row.mean_accuracy - mean).abs() < 1e-12);
        }
        assert_eq!(report.rows[4].name, "ensemble");
        // Signal-bearing data: the ensemble should clearly beat coin flips.
        assert!(report.rows[4].mean_accuracy > 0.6);

        // Voting output is a valid probability vector.
        let probs = model.predict_proba(&data).unwrap();
        assert_eq!(probs.len(), 400);
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));

        // Same inputs, same bytes.
        let (model2, report2) = train_ensemble_with(&data, &schedule, 3, 11).unwrap();
        assert_eq!(
            serde_json::to_string(&model).unwrap(),
            serde_json::to_string(&model2).unwrap()
        );
        assert_eq!(report, report2);

        // A different fold seed changes the report but not its shape.
        let (_, report3) = train_ensemble_with(&data, &schedule, 3, 12).unwrap();
        assert_eq!(report3.rows.len(), 5);
        assert_ne!(report, report3);
    }

    #[test]
    fn cross_validate_matches_majority_baseline_on_featureless_data() {
        // One constant column leaves no legal split, so every fold's model
        // predicts the training base rate (~0.6 > 0.5 → always "won") and
        // fold accuracy is just that fold's won fraction.
        let n = 1_000;
        let data = FeatureMatrix::new(
            (0..n).map(|i| format!("R{i}")).collect(),
            vec!["flat".to_string()],
            vec![1.0; n],
            (0..n).map(|i| Some(f64::from(u8::from(i % 5 < 3)))).collect(),
        )
        .unwrap();
        let hp = Hyperparams::new(Growth::LevelWise { max_depth: 3 });
        let (folds, mean) = cross_validate(&data, &hp, 10, 4).unwrap();
        assert_eq!(folds.len(), 10);
        // Equal fold sizes make the mean of fold accuracies the overall won
        // fraction exactly.
        assert!((mean - 0.6).abs() < 1e-12, "mean accuracy {mean}");
        assert_eq!(
            (folds.clone(), mean),
            cross_validate(&data, &hp, 10, 4).unwrap()
        );

        assert!(cross_validate(&data, &hp, 1, 0).is_err());
        let tiny = data.select_rows(&[0, 1, 2]);
        assert!(cross_validate(&tiny, &hp, 10, 0).is_err());
    }

    #[test]
    fn cv_report_renders_csv() {
        let data = small_matrix(200, 5);
        let schedule: Vec<Hyperparams> = make_schedule()
            .into_iter()
            .take(2)
            .map(|mut hp| {
                hp.n_trees = 10;
                hp
            })
            .collect();
        let (_, report) = train_ensemble_with(&data, &schedule, 2, 1).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4, "header + 2 members + ensemble");
        assert_eq!(
            lines[0],
            "model,growth,learning_rate,lambda,gamma,weight,fold_1,fold_2,mean"
        );
        assert!(lines[1].starts_with("model_01,level_wise(d=3),0.05,1,0,"));
        assert!(lines[3].starts_with("ensemble,soft_vote,"));
        // Every data cell parses back as CSV.
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 9);
        }
    }
}
