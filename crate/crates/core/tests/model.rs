use comet::concepts::ConceptSet;
use comet::data::{make_synthetic, split_dataset, Dataset, Splits, Standardizer, SyntheticSpec};
use comet::episodes::{EpisodeSampler, EpisodeSpec};
use comet::exec::Execution;
use comet::model::{
    class_neg_scores, compute_prototypes, ensemble_predict, episode_loss, eval_rng, evaluate, evaluate_ensemble,
    evaluate_with, predict, predict_proba, protonet, train, CometModel, ModelConfig, TrainConfig,
};
use comet::nn::{softmax_nll, ForwardMode};
use comet::rng::stream;

fn planted(spec: &SyntheticSpec) -> (Splits, ConceptSet) {
    let (ds, concepts, _) = make_synthetic(spec).unwrap();
    let splits = split_dataset(&ds, &spec.default_split(&ds.class_names)).unwrap();
    (splits, concepts.with_whole_input())
}

fn model(concepts: ConceptSet, seed: u64) -> CometModel {
    CometModel::new(concepts, &ModelConfig::default(), &mut stream(seed, "init", 0)).unwrap()
}

fn first_episode(ds: &Dataset, seed: u64) -> comet::episodes::Episode {
    EpisodeSampler::new(ds, EpisodeSpec::default()).unwrap().sample(&mut stream(seed, "eval-episode", 0))
}

#[test]
fn zero_noise_episode_is_classified_perfectly() {
    let spec = SyntheticSpec { noise_sd: 0.0, ..Default::default() };
    let (splits, concepts) = planted(&spec);
    let m = model(concepts, 1);
    for i in 0..20 {
        let ep = EpisodeSampler::new(&splits.test, EpisodeSpec::default())
            .unwrap()
            .sample(&mut stream(5, "eval-episode", i));
        let (_, acc) = episode_loss(&m, &splits.test, &ep, ForwardMode::Eval, &mut eval_rng()).unwrap();
        assert_eq!(acc, 1.0, "episode {i}");
    }
}

#[test]
fn predict_proba_composes_softmax_with_class_scores() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let m = model(concepts, 2);
    let ep = first_episode(&splits.val, 3);
    let bank = compute_prototypes(&m, &splits.val, &ep.classes, &ep.support, ForwardMode::Eval, &mut eval_rng()).unwrap();
    for &(row, pos) in &ep.query {
        let x = splits.val.x.row(row);
        let scores = class_neg_scores(&m, &bank, x, ForwardMode::Eval, &mut eval_rng()).unwrap();
        let (probs, nll) = softmax_nll(&scores, pos).unwrap();
        let p = predict_proba(&m, &bank, x).unwrap();
        for (a, b) in probs.iter().zip(&p) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((nll + p[pos].ln()).abs() <= 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn protonet_matches_direct_prototype_softmax() {
    let (splits, _) = planted(&SyntheticSpec::default());
    let ds = &splits.test;
    let m = protonet(ds.dim(), &ModelConfig::default(), &mut stream(4, "init", 0)).unwrap();
    assert_eq!(m.n_concepts(), 1);
    assert!(m.concepts.masks()[0].is_all_ones());

    let ep = first_episode(ds, 6);
    let bank = compute_prototypes(&m, ds, &ep.classes, &ep.support, ForwardMode::Eval, &mut eval_rng()).unwrap();
    let protos: Vec<Vec<f64>> = ep
        .support
        .iter()
        .map(|rows| {
            let emb = m.embed_concept(0, &ds.x.select_rows(rows)).unwrap();
            let mut p = vec![0.0; m.embed_dim()];
            for r in emb.iter_rows() {
                p.iter_mut().zip(r).for_each(|(a, v)| *a += v / rows.len() as f64);
            }
            p
        })
        .collect();
    for &(row, _) in &ep.query {
        let x = ds.x.select_rows(&[row]);
        let f = m.embed_concept(0, &x).unwrap();
        let neg: Vec<f64> = protos
            .iter()
            .map(|p| -f.row(0).iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .collect();
        let z: f64 = neg.iter().map(|s| s.exp()).sum();
        let p = predict_proba(&m, &bank, x.row(0)).unwrap();
        for (k, s) in neg.iter().enumerate() {
            assert!((s.exp() / z - p[k]).abs() <= 1e-10);
        }
    }
}

#[test]
fn protonet_loss_equals_single_whole_input_comet() {
    let (splits, _) = planted(&SyntheticSpec::default());
    let ds = &splits.train;
    let cfg = ModelConfig::default();
    let p = protonet(ds.dim(), &cfg, &mut stream(8, "init", 0)).unwrap();
    let c = CometModel::new(ConceptSet::whole_input(ds.dim()).unwrap(), &cfg, &mut stream(8, "init", 0)).unwrap();
    let ep = first_episode(ds, 9);
    for mode in [ForwardMode::Eval, ForwardMode::Train] {
        let a = episode_loss(&p, ds, &ep, mode, &mut stream(1, "dropout", 0)).unwrap();
        let b = episode_loss(&c, ds, &ep, mode, &mut stream(1, "dropout", 0)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn pulling_a_prototype_closer_raises_its_probability() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let ds = &splits.val;
    let m = model(concepts, 10);
    let ep = first_episode(ds, 11);
    let bank = compute_prototypes(&m, ds, &ep.classes, &ep.support, ForwardMode::Eval, &mut eval_rng()).unwrap();
    let (row, _) = ep.query[0];
    let x = ds.x.select_rows(&[row]);
    let before = predict_proba(&m, &bank, x.row(0)).unwrap();
    for k in 0..bank.way() {
        for j in 0..m.n_concepts() {
            let mut moved = bank.clone();
            moved.protos[k][j] = m.embed_concept(j, &x).unwrap().row(0).to_vec();
            let after = predict_proba(&m, &moved, x.row(0)).unwrap();
            assert!(after[k] > before[k], "class {k} concept {j}");
        }
    }
}

#[test]
fn single_episode_evaluation_has_zero_interval() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let m = model(concepts, 12);
    let r = evaluate(&m, &splits.test, EpisodeSpec::default(), 1, 13).unwrap();
    let ep = first_episode(&splits.test, 13);
    let (_, acc) = episode_loss(&m, &splits.test, &ep, ForwardMode::Eval, &mut eval_rng()).unwrap();
    assert_eq!(r.mean_accuracy, acc);
    assert_eq!(r.ci95_halfwidth, 0.0);
    assert_eq!(r.per_episode_accuracy, vec![acc]);
}

#[test]
fn evaluation_is_deterministic_under_both_strategies() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let m = model(concepts, 14);
    let spec = EpisodeSpec::default();
    let seq = evaluate_with(&m, &splits.test, spec, 40, 15, Execution::Sequential).unwrap();
    let par = evaluate_with(&m, &splits.test, spec, 40, 15, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq, evaluate(&m, &splits.test, spec, 40, 15).unwrap());
}

#[test]
fn untrained_loss_is_in_sanity_band() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let z = Standardizer::fit(&splits.train);
    let ds = z.apply(&splits.val).unwrap();
    let m = model(concepts, 16);
    let sampler = EpisodeSampler::new(&ds, EpisodeSpec::default()).unwrap();
    let n = 100;
    let mean = (0..n)
        .map(|i| {
            let ep = sampler.sample(&mut stream(17, "eval-episode", i));
            episode_loss(&m, &ds, &ep, ForwardMode::Eval, &mut eval_rng()).unwrap().0
        })
        .sum::<f64>()
        / n as f64;
    assert!((0.0..=5f64.ln() + 2.0).contains(&mean), "mean loss {mean}");
}

#[test]
fn training_raises_validation_accuracy() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let m = model(concepts, 18);
    let spec = EpisodeSpec::default();
    let before = evaluate(&m, &splits.val, spec, 100, 19).unwrap().mean_accuracy;
    let cfg = TrainConfig { episodes: 200, seed: 18, ..Default::default() };
    let out = train(m, &splits.train, Some((&splits.val).into()), spec, &cfg).unwrap();
    let after = evaluate(&out.model, &splits.val, spec, 100, 19).unwrap().mean_accuracy;
    assert!(after > before, "before {before}, after {after}");
}

#[test]
fn training_is_reproducible() {
    let (splits, concepts) = planted(&SyntheticSpec::default());
    let cfg = TrainConfig { episodes: 30, val_every: 10, log_every: 10, val_episodes: 10, seed: 20, ..Default::default() };
    let run = || {
        train(model(concepts.clone(), 20), &splits.train, Some((&splits.val).into()), EpisodeSpec::default(), &cfg)
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.model, b.model);
    assert_eq!(a.best_val_acc, b.best_val_acc);
}

#[test]
fn one_member_ensemble_is_that_member() {
    let (splits, _) = planted(&SyntheticSpec::default());
    let ds = &splits.test;
    let m = protonet(ds.dim(), &ModelConfig::default(), &mut stream(21, "init", 0)).unwrap();
    let ep = first_episode(ds, 22);
    let bank = compute_prototypes(&m, ds, &ep.classes, &ep.support, ForwardMode::Eval, &mut eval_rng()).unwrap();
    for &(row, _) in &ep.query {
        let x = ds.x.row(row);
        assert_eq!(
            ensemble_predict(std::slice::from_ref(&m), std::slice::from_ref(&bank), x).unwrap(),
            predict(&m, &bank, x).unwrap()
        );
    }
    let spec = EpisodeSpec::default();
    let ens = evaluate_ensemble(std::slice::from_ref(&m), ds, spec, 20, 23, Execution::default()).unwrap();
    let alone = evaluate(&m, ds, spec, 20, 23).unwrap();
    assert_eq!(ens.ensemble, alone);
    assert_eq!(ens.members, vec![alone]);
    assert!(ensemble_predict(&[], &[], ds.x.row(0)).is_err());
}
