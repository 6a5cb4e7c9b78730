use std::path::PathBuf;

use proptest::prelude::*;
use rst_core::baselines::{run_variant, TrainedModel, Variant};
use rst_core::eval::{evaluate, MetricMode};
use rst_core::experiment::ExperimentConfig;
use rst_core::infometrics::{gjs, score, Distribution, ScoreParams};

fn quick() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml");
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn every_variant_trains_and_round_trips() {
    let mut config = quick();
    config.split.unlabeled = 120;
    config.run.train.epochs = 3;
    let split = config.prepare(1).unwrap().split;
    for variant in Variant::ALL {
        let spec = config.spec(variant);
        let out = run_variant(&spec, &split.labeled, &split.unlabeled, 2).unwrap();
        let report = evaluate(|x| out.model.predict(x), &split.test, 2, MetricMode::Accuracy).unwrap();
        assert!(report.value > 0.5, "{variant}: {}", report.value);

        let text = out.model.to_model_file(&[("variant", variant.to_string())]);
        let (meta, back) = TrainedModel::from_model_file(&text).unwrap();
        assert_eq!(meta, vec![("variant".to_string(), variant.to_string())]);
        assert_eq!(back.fingerprint(), out.model.fingerprint());
        for d in &split.test {
            assert_eq!(back.predict(&d.features).unwrap(), out.model.predict(&d.features).unwrap());
        }
    }
}

#[test]
fn prepared_split_respects_sizes_and_seed() {
    let config = quick();
    let a = config.prepare(5).unwrap();
    let b = config.prepare(5).unwrap();
    let c = config.prepare(6).unwrap();
    assert_eq!(a.split.labeled.len(), 50);
    assert_eq!(a.split.unlabeled.len(), 400);
    assert_eq!(a.split.test.len(), 250);
    assert!(a.split.unlabeled.iter().all(|d| d.label.is_none()));
    assert_eq!(a.split.fingerprint(), b.split.fingerprint());
    assert_ne!(a.split.fingerprint(), c.split.fingerprint());
}

fn dist(n: usize) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(0.0f64..1.0, n)
        .prop_filter("mass", |v| v.iter().sum::<f64>() > 1e-6)
        .prop_map(|v| {
            let s: f64 = v.iter().sum();
            Distribution::new(v.iter().map(|x| x / s).collect()).unwrap()
        })
}

proptest! {
    #[test]
    fn score_is_positive_and_symmetric(
        (a, b, c) in (2usize..6).prop_flat_map(|n| (dist(n), dist(n), dist(n)))
    ) {
        let p = ScoreParams::default();
        let s = score(&[a.clone(), b.clone(), c.clone()], &p).unwrap();
        prop_assert!(s > 0.0);
        let t = score(&[c.clone(), a.clone(), b.clone()], &p).unwrap();
        prop_assert!((s - t).abs() <= 1e-9 * s.max(1.0));
        let g = gjs(&[a.clone(), b, c]).unwrap();
        prop_assert!(g >= 0.0 && g <= (3f64).ln() + 1e-12);
        prop_assert_eq!(gjs(&[a.clone(), a]).unwrap(), 0.0);
    }
}
