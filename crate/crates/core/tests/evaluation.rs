use har_core::data::synthetic::{planted_recording, planted_windows, PlantedSpec};
use har_core::data::{Labeling, NullPolicy, RawRecording};
use har_core::eval::{
    class_attention_maps, evaluate_sample_wise, evaluate_window_wise, fold_seed, profiles_csv, run_loso, sweep_csv, window_size_sweep,
    Classifier, ConfusionMatrix, Experiment, SWEEP_HEADER,
};
use har_core::model::{HarModel, ModelConfig};
use har_core::numerics::{Rng, Tensor};
use har_core::train::{TrainMode, TrainRunConfig};
use proptest::prelude::*;

struct ChannelSign;

impl Classifier for ChannelSign {
    fn num_classes(&self) -> usize {
        2
    }

    fn classify(&self, window: &Tensor) -> har_core::Result<usize> {
        let last = window.shape()[0] - 1;
        Ok(usize::from(window.at2(last, 0) > 0.0))
    }
}

fn experiment(t: usize) -> Experiment {
    Experiment {
        model: ModelConfig {
            window_len: t,
            channels: 2,
            classes: 2,
            d_model: 4,
            n_blocks: 1,
            n_heads: 1,
            ffn_dim: Some(8),
            k_filters: 2,
            dropout: 0.0,
            ..Default::default()
        },
        train: TrainRunConfig {
            batch_size: 16,
            max_epochs: 2,
            patience: 2,
            mode: TrainMode::WindowWise,
            ..Default::default()
        },
        overlap: 0.5,
        labeling: Labeling::Majority,
        null_policy: NullPolicy::Drop,
        normalize: true,
        val_fraction: 0.25,
    }
}

fn subject(spec: &PlantedSpec, id: &str, seed: u64) -> RawRecording {
    planted_recording(spec, id, &[(0, 24), (1, 24), (0, 16)], 10.0, seed).unwrap()
}

fn names() -> Vec<String> {
    vec!["still".into(), "moving".into()]
}

#[test]
fn scored_counts_match_protocol_definitions() {
    let spec = PlantedSpec::new(2, 2, 1).unwrap();
    let rec = subject(&spec, "s", 1);
    for t in [1, 4, 9] {
        let (cm, preds) = evaluate_sample_wise(&ChannelSign, &rec, t).unwrap();
        assert_eq!(cm.total() as usize, rec.len() - t + 1);
        assert_eq!(preds.iter().filter(|p| p.is_some()).count(), rec.len() - t + 1);
        assert!(preds[..t - 1].iter().all(Option::is_none));
        // Boundary padding covers every sample: one window per ceil(segment / T).
        let expected: usize = [24usize, 24, 16].iter().map(|n| n.div_ceil(t)).sum();
        assert_eq!(evaluate_window_wise(&ChannelSign, &rec, t).unwrap().total() as usize, expected);
    }
    assert!(evaluate_window_wise(&ChannelSign, &rec, rec.len() + 1).is_err());
}

#[test]
fn loso_with_two_subjects() {
    let spec = PlantedSpec::new(2, 2, 1).unwrap();
    let recs = vec![subject(&spec, "a", 2), subject(&spec, "b", 3)];
    let exp = experiment(4);
    let (report, runs) = run_loso(&recs, &exp, 17, "planted", &names()).unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(report.folds.iter().map(|f| f.held_out.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    let mean = (runs[0].outcome.sample.macro_f1 + runs[1].outcome.sample.macro_f1) / 2.0;
    assert_eq!(report.f1_sample, Some(mean));
    let mean = (runs[0].outcome.window.macro_f1 + runs[1].outcome.window.macro_f1) / 2.0;
    assert_eq!(report.f1_window, Some(mean));
    assert_ne!(runs[0].seed, runs[1].seed);
    assert_eq!(runs[1].seed, fold_seed(17, 1));
    let (again, _) = run_loso(&recs, &exp, 17, "planted", &names()).unwrap();
    assert_eq!(again, report);
    assert!(run_loso(&recs[..1], &exp, 17, "planted", &names()).is_err());
}

#[test]
fn fold_seeds_are_distinct_and_stable() {
    let seeds: Vec<u64> = (0..50).map(|i| fold_seed(9, i)).collect();
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), 50);
    assert_eq!(seeds, (0..50).map(|i| fold_seed(9, i)).collect::<Vec<_>>());
}

#[test]
fn sweep_preserves_order_and_reproduces() {
    let spec = PlantedSpec::new(2, 2, 1).unwrap();
    let train = vec![subject(&spec, "a", 4)];
    let test = vec![subject(&spec, "b", 5)];
    let exp = experiment(4);
    let single = window_size_sweep(&[4], &exp, &train, &[], &test, 6, &names()).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].window_size_seconds, 0.4);
    let rows = window_size_sweep(&[6, 4], &exp, &train, &[], &test, 6, &names()).unwrap();
    assert_eq!(rows.iter().map(|r| r.window_size_samples).collect::<Vec<_>>(), [6, 4]);
    assert_eq!(rows[1], single[0]);
    assert_eq!(window_size_sweep(&[6, 4], &exp, &train, &[], &test, 6, &names()).unwrap(), rows);
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().next(), Some(SWEEP_HEADER));
    assert_eq!(csv.lines().count(), 3);
    assert!(window_size_sweep(&[], &exp, &train, &[], &test, 6, &names()).is_err());
}

#[test]
fn attention_maps_are_distributions() {
    let spec = PlantedSpec::new(3, 2, 1).unwrap();
    let data = planted_windows(&spec, 10, 5, 7);
    let cfg = ModelConfig { channels: 3, window_len: 5, ..experiment(5).model };
    let model = HarModel::new(cfg, 8).unwrap();
    let summary = class_attention_maps(&model, &data, None).unwrap();
    assert_eq!(summary.maps.len() + summary.skipped.len(), 2);
    let total: usize = summary.maps.iter().map(|m| m.windows).sum();
    assert_eq!(total, 10);
    for m in &summary.maps {
        assert_eq!(m.mean_scores.shape(), &[5, 3]);
        for t in 0..5 {
            assert!((m.mean_scores.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((m.profile().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let sensors: Vec<String> = ["x", "y", "z"].map(String::from).to_vec();
    let csv = profiles_csv(&summary.maps, &sensors, &names());
    assert_eq!(csv.lines().next(), Some("class,x,y,z"));
    assert!(class_attention_maps(&model, &data, Some(&[2])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn macro_f1_is_label_permutation_invariant(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
        seed in any::<u64>(),
    ) {
        let mut perm: Vec<usize> = (0..4).collect();
        Rng::new(seed).shuffle(&mut perm);
        let a = ConfusionMatrix::from_pairs(4, pairs.iter().copied()).unwrap().macro_f1().unwrap();
        let b = ConfusionMatrix::from_pairs(4, pairs.iter().map(|&(t, p)| (perm[t], perm[p]))).unwrap().macro_f1().unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
