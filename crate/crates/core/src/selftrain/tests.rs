use super::*;
use crate::data::{stratified_split, synth, Generator, Split, SynthSpec};

fn small_split(seed: u64, n_unlabeled: usize) -> Split {
    let corpus = synth(&SynthSpec {
        generator: Generator::GaussianBlobs,
        n_classes: 2,
        n_samples: 40 + n_unlabeled + 10,
        class_weights: None,
        dim: 3,
        class_separation: 3.0,
        overlap_noise_sigma: 1.0,
        seed,
    })
    .unwrap();
    stratified_split(&corpus, 40, n_unlabeled, 10, seed).unwrap()
}

fn quick_config() -> RunConfig {
    RunConfig {
        hidden_width: 4,
        train: TrainParams {
            epochs: 3,
            ..TrainParams::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn loop_invariants_hold_every_iteration() {
    let split = small_split(1, 120);
    let all_ids: HashSet<String> = split
        .labeled
        .iter()
        .chain(&split.unlabeled)
        .map(|d| d.id.clone())
        .collect();
    let labeled_before = split.labeled.clone();
    let mut lp = RstLoop::new(&split.labeled, &split.unlabeled, 2, quick_config()).unwrap();
    let mut last_u = lp.unlabeled().len();
    let mut iterations = 0;
    while let Some(record) = lp.step().unwrap() {
        iterations += 1;
        assert!(record.n_unlabeled < last_u);
        assert_eq!(last_u - record.n_unlabeled, record.selected_ids.len());
        assert!(record.selected_ids.len() <= record.step);
        assert_eq!(record.snapshot_checks.len(), 2);
        assert!(record.snapshot_checks.iter().all(|(a, b)| a == b));
        last_u = record.n_unlabeled;

        let mut seen = HashSet::new();
        for id in lp
            .labeled()
            .iter()
            .map(|d| &d.id)
            .chain(lp.unlabeled().iter().map(|d| &d.id))
            .chain(lp.pseudo_labels().iter().map(|p| &p.doc_id))
        {
            assert!(seen.insert(id.clone()), "duplicate id {id}");
        }
        assert_eq!(seen, all_ids);
        assert!(lp.pseudo_labels().windows(2).all(|w| w[0].iteration <= w[1].iteration));
        for p in lp.pseudo_labels() {
            let soft = Distribution::from_logits(&p.mean_logits, 1.0).unwrap();
            for (a, b) in soft.probs().iter().zip(p.soft_label.probs()) {
                assert!((a - b).abs() < 1e-9);
            }
            assert_eq!(p.hard_label, p.soft_label.argmax());
        }
    }
    assert!(iterations <= 120);
    assert!(lp.is_done());
    assert_eq!(lp.labeled(), &labeled_before[..]);
    let outcome = lp.finish().unwrap();
    assert_eq!(outcome.report.pseudo_labels.len(), 120);
    assert_eq!(outcome.report.records.len(), iterations);
}

#[test]
fn first_iteration_is_supervised_only() {
    let split = small_split(2, 30);
    let config = quick_config();
    let lp = RstLoop::new(&split.labeled, &split.unlabeled, 2, config.clone()).unwrap();
    let lp = RstLoop { iteration: 1, ..lp };
    let member = lp.train_member(0).unwrap();

    let idx = subsample(40, 28, config.seed, lp.member_tag(purpose::SUBSAMPLE_LABELED, 0));
    let labeled: Vec<Document> = idx.iter().map(|&i| split.labeled[i].clone()).collect();
    let init_seed = rng::derive(config.seed, lp.member_tag(purpose::MEMBER_SEED, 0));
    let mut manual = ClassifierState::init(3, 2, 4, init_seed).unwrap();
    let snap = capture_snapshot(&manual, &labeled, 2.0).unwrap();
    manual.train_finetune(&labeled, Some(&snap), &config.train, init_seed).unwrap();
    assert_eq!(member.state, manual);
}

#[test]
fn empty_pool_gives_supervised_model() {
    let split = small_split(3, 0);
    let config = quick_config();
    let outcome = run_rst(&split.labeled, &[], 2, &config).unwrap();
    assert!(outcome.report.records.is_empty());
    let init_seed = rng::derive(config.seed, Tag::new(purpose::FINAL_SEED, 0, 0));
    let mut manual = ClassifierState::init(3, 2, 4, init_seed).unwrap();
    let snap = capture_snapshot(&manual, &split.labeled, 2.0).unwrap();
    manual.train_finetune(&split.labeled, Some(&snap), &config.train, init_seed).unwrap();
    assert_eq!(outcome.model, manual);
}

#[test]
fn deterministic_and_parallel_matches_sequential() {
    let split = small_split(4, 60);
    let sequential = run_rst(&split.labeled, &split.unlabeled, 2, &quick_config()).unwrap();
    let again = run_rst(&split.labeled, &split.unlabeled, 2, &quick_config()).unwrap();
    let parallel = run_rst(
        &split.labeled,
        &split.unlabeled,
        2,
        &RunConfig { parallel: true, ..quick_config() },
    )
    .unwrap();
    assert_eq!(sequential.report.records, again.report.records);
    assert_eq!(sequential.model.fingerprint(), again.model.fingerprint());
    assert_eq!(sequential.report.records, parallel.report.records);
    assert_eq!(sequential.model.fingerprint(), parallel.model.fingerprint());
}

#[test]
fn member_subsamples_are_independent() {
    let a = subsample(40, 28, 7, Tag::new(purpose::SUBSAMPLE_PSEUDO, 3, 0));
    let b = subsample(40, 28, 7, Tag::new(purpose::SUBSAMPLE_PSEUDO, 3, 1));
    assert_ne!(a, b);
    assert_eq!(a.len(), 28);
}

#[test]
fn iteration_moves_a_batch() {
    let split = small_split(5, 50);
    let (pseudo, pool, record) =
        rst_iteration(&split.labeled, &split.unlabeled, &[], 2, 1, &quick_config()).unwrap();
    assert_eq!(record.step, 4);
    assert_eq!(pool.len() + pseudo.len(), 50);
    assert!(!pseudo.is_empty());
    assert!(pseudo.iter().all(|p| p.iteration == 1));
    let (pseudo2, pool2, _) = rst_iteration(&split.labeled, &pool, &pseudo, 2, 2, &quick_config()).unwrap();
    assert!(pool2.len() < pool.len());
    assert!(pseudo2.iter().skip(pseudo.len()).all(|p| p.iteration == 2));
}

#[test]
fn input_validation() {
    let split = small_split(6, 10);
    assert!(run_rst(&[], &split.unlabeled, 2, &quick_config()).is_err());
    let bad = RunConfig { classifiers: 1, ..quick_config() };
    assert!(run_rst(&split.labeled, &split.unlabeled, 2, &bad).is_err());
    let bad = RunConfig { sample_ratio: 0.0, ..quick_config() };
    assert!(run_rst(&split.labeled, &split.unlabeled, 2, &bad).is_err());
    let mut dup = split.unlabeled.clone();
    dup[0].id = split.labeled[0].id.clone();
    assert!(run_rst(&split.labeled, &dup, 2, &quick_config()).is_err());
}
