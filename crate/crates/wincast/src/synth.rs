//! Seeded synthetic opportunity generator.
//!
//! Every categorical value gets a latent win propensity; a record's true win
//! probability is the sigmoid of a weighted propensity mix plus a
//! contract-value quartile effect, shifted by a base offset solved (by
//! bisection) so the *mean* true probability equals `won_prior` exactly.
//! Outcomes are Bernoulli draws from the true probability, and the recorded
//! human forecast is that same probability corrupted with Gaussian noise —
//! so a model that recovers the latent structure can beat the human
//! baseline, and `signal_strength = 0` yields pure coin-flip labels.
//!
//! Generation is fully deterministic for a given config: one seeded RNG,
//! fixed draw order, no platform-dependent paths.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::gbdt::sigmoid;
use crate::ingest::{CatFeature, OpportunityRecord, RecordSet, Segment, Status};
use crate::{Error, Result};

/// Relative weight of each categorical feature's propensity in the latent
/// log-odds, in [`CatFeature::ALL`] order (segment last). Deliberately
/// uneven: `account` and `sales_lead` carry most of the signal, mirroring
/// how a couple of relationship features dominate real sales funnels.
const FEATURE_WEIGHTS: [f64; 13] = [
    0.5, 0.4, 0.6, 0.4, 0.6, 2.2, 0.5, 1.7, 1.2, 0.5, 0.4, 0.3, 0.4,
];

/// Log-odds per unit of `signal_strength` applied to the weighted propensity
/// mean. Centered uniform propensities give that mean a standard deviation
/// of ~0.10 across records, so the default `signal_strength` of 3 spreads
/// the latent log-odds enough for a strong-but-beatable classifier.
const GAIN: f64 = 12.5;

/// Log-odds per unit of `signal_strength` per contract-value quartile step.
const QUARTILE_GAIN: f64 = 0.25;

/// Lognormal (mu, sigma) of project duration in days.
const DURATION_PARAMS: (f64, f64) = (4.8, 0.6);

/// Standard normal quartile points (z at 25% and 75%).
const Z_QUARTILE: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_records: usize,
    pub seed: u64,
    /// Target mean win probability; the realized won fraction differs only
    /// by Bernoulli noise.
    pub won_prior: f64,
    /// 0 removes all structure (labels become fair-prior coin flips);
    /// larger values sharpen the latent probabilities toward 0/1.
    pub signal_strength: f64,
    /// Probability of Healthcare / Energy / Finance, in that order.
    pub segment_mix: [f64; 3],
    /// Distinct-value counts of the 12 free-form categorical features, in
    /// schema order (segment is governed by `segment_mix`).
    pub cardinalities: [usize; 12],
    /// Lognormal (mu, sigma) of total contract value per segment.
    pub value_params: [(f64, f64); 3],
    /// Fraction of records that get exactly one field blanked; capped below
    /// 0.05 so incompleteness stays a nuisance, not a regime.
    pub missing_rate: f64,
    /// Standard deviation of the noise added to the true probability to form
    /// the human `user_probability` forecast.
    pub noise_user_prediction: f64,
    /// Fraction of records left open (no outcome yet).
    pub open_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_records: 10_000,
            seed: 0,
            won_prior: 0.58,
            signal_strength: 3.0,
            segment_mix: [0.44, 0.31, 0.25],
            cardinalities: [12, 8, 48, 14, 36, 320, 52, 90, 110, 24, 10, 5],
            value_params: [(11.0, 1.0), (11.5, 1.2), (10.5, 0.9)],
            missing_rate: 0.009,
            noise_user_prediction: 0.4,
            open_fraction: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.n_records >= 1, "n_records must be at least 1")?;
        check(
            self.won_prior > 0.0 && self.won_prior < 1.0,
            "won_prior must lie strictly between 0 and 1",
        )?;
        check(
            self.signal_strength.is_finite() && self.signal_strength >= 0.0,
            "signal_strength must be finite and non-negative",
        )?;
        check(
            self.segment_mix.iter().all(|&p| p > 0.0)
                && (self.segment_mix.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "segment_mix must be positive and sum to 1",
        )?;
        check(
            self.cardinalities.iter().all(|&c| c >= 1),
            "cardinalities must be at least 1",
        )?;
        check(
            self.value_params
                .iter()
                .chain([&DURATION_PARAMS])
                .all(|&(m, s)| m.is_finite() && s.is_finite() && s > 0.0),
            "value_params must be finite with positive sigma",
        )?;
        check(
            (0.0..0.05).contains(&self.missing_rate),
            "missing_rate must lie in [0, 0.05)",
        )?;
        check(
            self.noise_user_prediction.is_finite() && self.noise_user_prediction >= 0.0,
            "noise_user_prediction must be finite and non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&self.open_fraction),
            "open_fraction must lie in [0, 1]",
        )?;
        Ok(())
    }
}

/// Solve `mean(sigmoid(b + e_i)) = target` for the base log-odds `b`.
/// The mean is strictly increasing in `b`, so bisection converges to
/// floating-point resolution.
fn solve_base_offset(effects: &[f64], target: f64) -> f64 {
    let mean_at = |b: f64| {
        effects.iter().map(|&e| sigmoid(b + e)).sum::<f64>() / effects.len() as f64
    };
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Fields that the missing-value injector may blank, as (name, blanking fn).
/// Identity, segment and status always survive so dropped rows are
/// attributable purely to field-level gaps.
fn blank_field(record: &mut OpportunityRecord, slot: usize) {
    match slot {
        0 => record.business_unit.clear(),
        1 => record.opportunity_type.clear(),
        2 => record.project_location.clear(),
        3 => record.general_now.clear(),
        4 => record.detailed_now.clear(),
        5 => record.account.clear(),
        6 => record.account_location.clear(),
        7 => record.sales_lead.clear(),
        8 => record.engagement_manager.clear(),
        9 => record.sub_practice.clear(),
        10 => record.practice.clear(),
        11 => record.group_practice.clear(),
        12 => record.key_account_energy = None,
        13 => record.key_account_healthcare = None,
        14 => record.key_account_finance = None,
        15 => record.user_probability = None,
        16 => record.project_duration = None,
        _ => record.total_contract_value = None,
    }
}
const N_BLANKABLE: usize = 18;

pub fn generate(config: &SynthConfig) -> Result<RecordSet> {
    config.validate()?;
    let n = config.n_records;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal is valid");

    // Latent win propensity in [0, 1] per categorical value, centered per
    // feature so the base offset alone controls the prior.
    let mut propensities: Vec<Vec<f64>> = Vec::with_capacity(13);
    for &card in config.cardinalities.iter().chain([&3usize]) {
        let mut p: Vec<f64> = (0..card).map(|_| rng.random()).collect();
        let mean = p.iter().sum::<f64>() / card as f64;
        p.iter_mut().for_each(|v| *v -= mean);
        propensities.push(p);
    }

    let value_dists: Vec<LogNormal<f64>> = config
        .value_params
        .iter()
        .map(|&(m, s)| LogNormal::new(m, s).expect("validated sigma > 0"))
        .collect();
    let duration_dist =
        LogNormal::new(DURATION_PARAMS.0, DURATION_PARAMS.1).expect("constant sigma > 0");
    // Theoretical quartile cuts of each segment's value distribution.
    let quartile_cuts: Vec<[f64; 3]> = config
        .value_params
        .iter()
        .map(|&(m, s)| [(m - Z_QUARTILE * s).exp(), m.exp(), (m + Z_QUARTILE * s).exp()])
        .collect();

    let weight_total: f64 = FEATURE_WEIGHTS.iter().sum();
    let mut records = Vec::with_capacity(n);
    let mut effects = Vec::with_capacity(n);
    for i in 0..n {
        let u_seg: f64 = rng.random();
        let segment = if u_seg < config.segment_mix[0] {
            Segment::Healthcare
        } else if u_seg < config.segment_mix[0] + config.segment_mix[1] {
            Segment::Energy
        } else {
            Segment::Finance
        };
        let si = segment.index();

        // Free-form categorical draws, skewed toward low indices so a few
        // values are common and a long tail is rare.
        let mut cat_idx = [0usize; 12];
        let mut effect = FEATURE_WEIGHTS[12] * propensities[12][si];
        for (f, &card) in config.cardinalities.iter().enumerate() {
            let u: f64 = rng.random();
            let idx = ((card as f64 * u * u) as usize).min(card - 1);
            cat_idx[f] = idx;
            effect += FEATURE_WEIGHTS[f] * propensities[f][idx];
        }
        effect /= weight_total;

        let key_energy = rng.random_bool(if segment == Segment::Energy { 0.3 } else { 0.05 });
        let key_health = rng.random_bool(if segment == Segment::Healthcare { 0.3 } else { 0.05 });
        let key_finance = rng.random_bool(if segment == Segment::Finance { 0.3 } else { 0.05 });

        let value = value_dists[si].sample(&mut rng);
        let duration = duration_dist.sample(&mut rng);
        let cuts = &quartile_cuts[si];
        let quartile = 1 + cuts.iter().filter(|&&c| value > c).count(); // 1..=4
        let q_center = quartile as f64 - 2.5;

        effects.push(
            config.signal_strength * (GAIN * effect + QUARTILE_GAIN * q_center),
        );

        let name = |f: usize, idx: usize| {
            format!("{}_{:03}", CatFeature::ALL[f].as_str(), idx + 1)
        };
        records.push(OpportunityRecord {
            opportunity_id: format!("OPP-{:06}", i + 1),
            business_unit: name(0, cat_idx[0]),
            opportunity_type: name(1, cat_idx[1]),
            project_location: name(2, cat_idx[2]),
            general_now: name(3, cat_idx[3]),
            detailed_now: name(4, cat_idx[4]),
            account: name(5, cat_idx[5]),
            account_location: name(6, cat_idx[6]),
            sales_lead: name(7, cat_idx[7]),
            engagement_manager: name(8, cat_idx[8]),
            sub_practice: name(9, cat_idx[9]),
            practice: name(10, cat_idx[10]),
            group_practice: name(11, cat_idx[11]),
            segment: Some(segment),
            key_account_energy: Some(key_energy),
            key_account_healthcare: Some(key_health),
            key_account_finance: Some(key_finance),
            status: None,
            user_probability: None,
            project_duration: Some(duration),
            total_contract_value: Some(value),
        });
    }

    // Anchor the mean true probability at the prior, then draw outcomes and
    // noisy human forecasts.
    let base = solve_base_offset(&effects, config.won_prior);
    for (record, &e) in records.iter_mut().zip(&effects) {
        let q = sigmoid(base + e);
        let won = rng.random::<f64>() < q;
        record.status = Some(if won { Status::Won } else { Status::Lost });
        let noisy = q + config.noise_user_prediction * std_normal.sample(&mut rng);
        record.user_probability = Some(noisy.clamp(0.0, 1.0));
    }

    // Open records: a deterministic sample loses its outcome.
    let n_open = (config.open_fraction * n as f64).round() as usize;
    if n_open > 0 {
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        for &i in &indices[..n_open] {
            records[i].status = Some(Status::Open);
        }
    }

    // Missing-field injection: an exact count of records each lose exactly
    // one blankable field, so `drop_missing` removes a predictable share.
    let n_missing = (config.missing_rate * n as f64).round() as usize;
    if n_missing > 0 {
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        for &i in &indices[..n_missing] {
            let slot = rng.random_range(0..N_BLANKABLE);
            blank_field(&mut records[i], slot);
        }
    }

    Ok(RecordSet::new(
        records,
        format!("synthetic(seed={}, n={n})", config.seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::{build_lookups, enhance_records};
    use crate::gbdt::{train, Growth, Hyperparams};
    use crate::ingest::{drop_missing, records_to_csv, split_train_test, Status};
    use crate::metrics::roc_auc;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let config = SynthConfig {
            n_records: 500,
            seed: 11,
            open_fraction: 0.05,
            ..SynthConfig::default()
        };
        let a = records_to_csv(&generate(&config).unwrap());
        let b = records_to_csv(&generate(&config).unwrap());
        assert_eq!(a, b, "same seed must give byte-identical output");

        let other = records_to_csv(
            &generate(&SynthConfig {
                seed: 12,
                ..config
            })
            .unwrap(),
        );
        assert_ne!(a, other, "different seeds must differ");
    }

    #[test]
    fn won_fraction_tracks_the_prior() {
        for (prior, seed) in [(0.58, 1u64), (0.3, 2), (0.75, 3)] {
            let rs = generate(&SynthConfig {
                n_records: 10_000,
                seed,
                won_prior: prior,
                missing_rate: 0.0,
                ..SynthConfig::default()
            })
            .unwrap();
            let won = rs
                .records
                .iter()
                .filter(|r| r.status == Some(Status::Won))
                .count();
            let frac = won as f64 / rs.len() as f64;
            assert!(
                (frac - prior).abs() <= 0.01,
                "won fraction {frac} strayed from prior {prior}"
            );
        }
    }

    #[test]
    fn missing_injection_hits_an_exact_record_count() {
        let config = SynthConfig {
            n_records: 2_000,
            seed: 5,
            missing_rate: 0.009,
            ..SynthConfig::default()
        };
        let rs = generate(&config).unwrap();
        let expected = (0.009 * 2_000f64).round() as usize; // 18
        let incomplete = rs.records.iter().filter(|r| !r.is_complete()).count();
        assert_eq!(incomplete, expected);
        for r in &rs.records {
            assert!(r.missing_fields().len() <= 1, "at most one field per record");
        }
        let (kept, dropped) = drop_missing(&rs);
        assert_eq!(dropped, expected);
        assert_eq!(kept.len(), 2_000 - expected);
    }

    #[test]
    fn segment_mix_open_fraction_and_domains_hold() {
        let config = SynthConfig {
            n_records: 10_000,
            seed: 9,
            open_fraction: 0.1,
            missing_rate: 0.0,
            ..SynthConfig::default()
        };
        let rs = generate(&config).unwrap();

        let mut seg_counts = [0usize; 3];
        let mut open = 0usize;
        let mut ids = std::collections::HashSet::new();
        for r in &rs.records {
            seg_counts[r.segment.unwrap().index()] += 1;
            if r.status == Some(Status::Open) {
                open += 1;
            }
            assert!(ids.insert(r.opportunity_id.clone()), "ids must be unique");
            let p = r.user_probability.unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert!(r.total_contract_value.unwrap() > 0.0);
            assert!(r.project_duration.unwrap() > 0.0);
        }
        assert_eq!(open, 1_000);
        for (count, mix) in seg_counts.iter().zip(config.segment_mix) {
            let frac = *count as f64 / rs.len() as f64;
            assert!(
                (frac - mix).abs() < 0.02,
                "segment fraction {frac} strayed from mix {mix}"
            );
        }
        // Cardinality ceilings are respected.
        let distinct_accounts: std::collections::HashSet<_> =
            rs.records.iter().map(|r| r.account.as_str()).collect();
        assert!(distinct_accounts.len() <= 320);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases: Vec<Box<dyn Fn(&mut SynthConfig)>> = vec![
            Box::new(|c| c.n_records = 0),
            Box::new(|c| c.won_prior = 0.0),
            Box::new(|c| c.won_prior = 1.0),
            Box::new(|c| c.signal_strength = -1.0),
            Box::new(|c| c.segment_mix = [0.5, 0.5, 0.5]),
            Box::new(|c| c.cardinalities[3] = 0),
            Box::new(|c| c.value_params[1].1 = 0.0),
            Box::new(|c| c.missing_rate = 0.05),
            Box::new(|c| c.noise_user_prediction = f64::NAN),
            Box::new(|c| c.open_fraction = 1.5),
        ];
        for mutate in cases {
            let mut config = SynthConfig::default();
            mutate(&mut config);
            assert!(matches!(generate(&config), Err(Error::Config(_))));
        }
    }

    /// Train a small model on a generated set and return its test AUC.
    fn auc_at_signal(signal: f64, seed: u64) -> f64 {
        let rs = generate(&SynthConfig {
            n_records: 3_000,
            seed,
            signal_strength: signal,
            missing_rate: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let (train_rs, test_rs) = split_train_test(&rs, 0.7, 77).unwrap();
        let lookups = build_lookups(&train_rs).unwrap();
        let train_m = enhance_records(&train_rs, &lookups).unwrap();
        let test_m = enhance_records(&test_rs, &lookups).unwrap();
        let mut hp = Hyperparams::new(Growth::LevelWise { max_depth: 3 });
        hp.n_trees = 30;
        hp.learning_rate = 0.3;
        let model = train(&train_m, &hp).unwrap();
        let probs = model.predict_proba(&test_m).unwrap();
        let labels: Vec<bool> = test_m
            .labels_dense()
            .unwrap()
            .iter()
            .map(|&y| y == 1.0)
            .collect();
        roc_auc(&probs, &labels).unwrap()
    }

    /// Full-scale generation sanity: at default signal, even one depth-3
    /// tree on enhanced features separates outcomes well.
    #[test]
    fn full_scale_single_tree_recovers_signal() {
        let rs = generate(&SynthConfig {
            n_records: 25_000,
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        let (rs, _) = drop_missing(&rs);
        let (train_rs, test_rs) = split_train_test(&rs, 0.7, 7).unwrap();
        let lookups = build_lookups(&train_rs).unwrap();
        let train_m = enhance_records(&train_rs, &lookups).unwrap();
        let test_m = enhance_records(&test_rs, &lookups).unwrap();
        let mut hp = Hyperparams::new(Growth::LevelWise { max_depth: 3 });
        hp.n_trees = 1;
        hp.min_child_weight = 1.0;
        let model = train(&train_m, &hp).unwrap();
        let probs = model.predict_proba(&test_m).unwrap();
        let labels: Vec<bool> = test_m
            .labels_dense()
            .unwrap()
            .iter()
            .map(|&y| y == 1.0)
            .collect();
        let auc = roc_auc(&probs, &labels).unwrap();
        assert!(auc > 0.75, "single-tree AUC {auc} should exceed 0.75");
    }

    #[test]
    fn zero_signal_means_no_learnable_structure() {
        let auc = auc_at_signal(0.0, 21);
        assert!(
            (0.42..=0.58).contains(&auc),
            "null AUC {auc} should hover near 0.5"
        );
    }

    #[test]
    fn stronger_signal_yields_higher_auc() {
        let low = auc_at_signal(0.5, 21);
        let high = auc_at_signal(3.0, 21);
        assert!(
            high > low + 0.05,
            "AUC should rise with signal: {low} -> {high}"
        );
        assert!(high > 0.75, "full-signal AUC {high} should be strong");
    }
}
