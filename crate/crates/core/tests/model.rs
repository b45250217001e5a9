use hctc::data::{generate_synthetic, SyntheticSpec};
use hctc::model::{
    build_model, count_params, encode_targets, stl_parity, train_step, ModelGraph, RunConfig,
    TopologyConfig, TopologyKind, TrainingConfig, TrainingExample,
};
use hctc::nn::{InitConfig, ParamGroup, Sgd};
use hctc::numerics::{grad_check, GradCheckConfig, Tensor2D};
use hctc::units::{UnitCodec, UnitSpec};
use hctc::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORPUS: &[&str] = &[
    "cold cold old code",
    "bold cod doc",
    "clod old cold",
    "coded bold cold",
];

fn codecs(names: &[&str]) -> Vec<UnitCodec> {
    names
        .iter()
        .map(|n| UnitSpec::parse(n).unwrap().build_codec(CORPUS).unwrap())
        .collect()
}

fn toy(kind: TopologyKind, heads: &[&str]) -> TopologyConfig {
    TopologyConfig {
        kind,
        input_dim: 3,
        shared_layers: 2,
        hidden: 3,
        projection: 4,
        heads: heads.iter().map(|s| s.to_string()).collect(),
        head_hidden: 2,
        seed: 7,
        init: InitConfig {
            range: 0.4,
            forget_bias: 1.0,
        },
        ..TopologyConfig::default()
    }
}

fn four_heads() -> Vec<&'static str> {
    vec!["char", "s3", "s6", "s12"]
}

fn random_input(seed: u64, frames: usize, dim: usize) -> Tensor2D<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor2D::from_fn(dim, frames, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn hmtl_structure_matches_cascade() {
    let heads = four_heads();
    let m: ModelGraph<f64> = build_model(&toy(TopologyKind::Hmtl, &heads), codecs(&heads)).unwrap();
    assert_eq!(m.taps(), 4);
    let taps: Vec<usize> = m.heads().iter().map(|h| h.tap).collect();
    assert_eq!(taps, vec![0, 1, 2, 3]);
    let names = m.param_names();
    assert_eq!(
        names.iter().filter(|n| n.starts_with("shared.")).count(),
        12
    );
    assert_eq!(
        names
            .iter()
            .filter(|n| n.starts_with("projection."))
            .count(),
        2
    );
    assert_eq!(
        names.iter().filter(|n| n.starts_with("cascade.")).count(),
        18
    );
    let classes: Vec<usize> = m.codecs().iter().map(|c| c.inventory().len()).collect();
    for (h, c) in m.heads().iter().zip(&classes) {
        assert_eq!(h.classes(), *c);
    }
    assert_eq!(m.param_count(), count_params(m.config(), &classes).unwrap());
}

#[test]
fn bmtl_heads_all_read_e0() {
    let heads = four_heads();
    let cfg = toy(TopologyKind::Bmtl, &heads);
    let m: ModelGraph<f64> = build_model(&cfg, codecs(&heads)).unwrap();
    assert_eq!(m.taps(), 1);
    assert!(m.heads().iter().all(|h| h.tap == 0));
    let classes: Vec<usize> = m.codecs().iter().map(|c| c.inventory().len()).collect();
    let hmtl = count_params(&toy(TopologyKind::Hmtl, &heads), &classes).unwrap();
    assert_ne!(m.param_count(), hmtl);
    let one = codecs(&["char"]);
    let c1 = [one[0].inventory().len()];
    assert_eq!(
        count_params(&toy(TopologyKind::Bmtl, &["char"]), &c1).unwrap(),
        count_params(&toy(TopologyKind::Hmtl, &["char"]), &c1).unwrap()
    );
}

#[test]
fn paper_scale_counts_and_parity() {
    // F = 129, H = 320, projection 340; |L'| = 48 for characters, 388 for s300
    let hmtl = TopologyConfig {
        heads: vec!["char".into(), "s300".into()],
        ..TopologyConfig::default()
    };
    let classes = [48, 388];
    assert_eq!(count_params(&hmtl, &classes).unwrap(), 10_722_056);
    let bmtl = TopologyConfig {
        kind: TopologyKind::Bmtl,
        ..hmtl.clone()
    };
    assert_eq!(count_params(&bmtl, &classes).unwrap(), 8_261_896);
    let report = stl_parity(&hmtl, &classes, 1, 200).unwrap();
    assert!(report.exact());
    assert_eq!(report.delta(), 0);
    assert_eq!(report.config.cascade, vec![313]);
    assert_eq!(report.config.head_hidden, 336);
    assert_eq!(report.config.bottleneck, 2528);
    assert_eq!(count_params(&report.config, &[388]).unwrap(), 10_722_056);
}

#[test]
fn parity_reports_residual_when_search_is_capped() {
    let hmtl = TopologyConfig {
        heads: vec!["char".into(), "s300".into()],
        ..TopologyConfig::default()
    };
    let report = stl_parity(&hmtl, &[48, 388], 1, 3).unwrap();
    assert!(!report.exact());
    assert_eq!(report.delta(), report.achieved as i64 - 10_722_056);
    assert!(report.delta().abs() < 2 * 320 + 389);
}

#[test]
fn config_errors() {
    let heads = four_heads();
    let stl = toy(TopologyKind::Stl, &heads);
    assert!(matches!(
        build_model::<f64>(&stl, codecs(&heads)),
        Err(Error::Config(_))
    ));
    let short = TopologyConfig {
        cascade: vec![3, 3],
        ..toy(TopologyKind::Hmtl, &heads)
    };
    assert!(matches!(
        build_model::<f64>(&short, codecs(&heads)),
        Err(Error::Config(_))
    ));
    let reversed = ["s12", "s6", "s3", "char"];
    assert!(matches!(
        build_model::<f64>(&toy(TopologyKind::Hmtl, &reversed), codecs(&reversed)),
        Err(Error::Config(_))
    ));
    let cfg = toy(TopologyKind::Hmtl, &heads);
    assert!(build_model::<f64>(&cfg, codecs(&heads[..3])).is_err());
}

#[test]
fn posteriors_are_normalized() {
    let heads = four_heads();
    let m: ModelGraph<f64> = build_model(&toy(TopologyKind::Hmtl, &heads), codecs(&heads)).unwrap();
    let x = random_input(1, 6, 3);
    let posts = m.forward_all_heads(&x).unwrap();
    assert_eq!(posts.len(), 4);
    for (p, h) in posts.iter().zip(m.heads()) {
        assert_eq!(p.classes(), h.classes());
        assert_eq!(p.frames(), 6);
        for t in 0..6 {
            let s: f64 = (0..p.classes()).map(|k| p.log_prob(k, t).exp()).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }
    assert!(m.forward_all_heads(&random_input(1, 6, 4)).is_err());
}

#[test]
fn cascade_perturbation_is_local() {
    let heads = four_heads();
    let m: ModelGraph<f64> = build_model(&toy(TopologyKind::Hmtl, &heads), codecs(&heads)).unwrap();
    let x = random_input(2, 5, 3);
    let base = m.forward_all_heads(&x).unwrap();
    let names = m.param_names();
    for layer in 0..3 {
        let idx = names
            .iter()
            .position(|n| *n == format!("cascade.{layer}.fwd.w_in"))
            .unwrap();
        let mut params: Vec<Tensor2D<f64>> = m.tensors().into_iter().cloned().collect();
        let v = params[idx].get(0, 0);
        params[idx].set(0, 0, v + 0.5);
        let mut perturbed = m.clone();
        perturbed.set_params(&params).unwrap();
        let out = perturbed.forward_all_heads(&x).unwrap();
        // cascade layer `layer` produces tap layer + 1
        for h in 0..=layer {
            assert_eq!(
                out[h], base[h],
                "head {h} moved when cascade {layer} changed"
            );
        }
        assert_ne!(out[layer + 1], base[layer + 1]);
    }
}

fn targets_for(m: &ModelGraph<f64>, text: &str) -> Vec<Vec<usize>> {
    encode_targets(m.codecs(), text).unwrap()
}

#[test]
fn head_gradients_stop_at_their_tap() {
    let heads = four_heads();
    let m: ModelGraph<f64> = build_model(&toy(TopologyKind::Hmtl, &heads), codecs(&heads)).unwrap();
    let x = random_input(3, 12, 3);
    let targets = targets_for(&m, "cold");
    let names = m.param_names();
    for k in 0..4 {
        let mut w = vec![0.0; 4];
        w[k] = 1.0;
        let (_, grads) = m.loss_and_gradients(&x, &targets, &w).unwrap().unwrap();
        for (name, g) in names.iter().zip(&grads) {
            if let Some(rest) = name.strip_prefix("cascade.") {
                let layer: usize = rest.split('.').next().unwrap().parse().unwrap();
                if layer >= k {
                    assert!(
                        g.data().iter().all(|&v| v == 0.0),
                        "{name} has gradient from head {k}"
                    );
                } else {
                    assert!(
                        g.data().iter().any(|&v| v != 0.0),
                        "{name} lacks gradient from head {k}"
                    );
                }
            }
        }
    }
}

#[test]
fn hmtl_gradient_check() {
    let heads = ["char", "s3", "s6"];
    let m: ModelGraph<f64> = build_model(&toy(TopologyKind::Hmtl, &heads), codecs(&heads)).unwrap();
    let x = random_input(4, 9, 3);
    let targets = targets_for(&m, "cod");
    let weights = [1.0, 0.5, 2.0];
    let params: Vec<Tensor2D<f64>> = m.tensors().into_iter().cloned().collect();
    let report = grad_check(
        |p| {
            let mut g = m.clone();
            g.set_params(p)?;
            let (loss, grads) = g.loss_and_gradients(&x, &targets, &weights)?.unwrap();
            Ok((loss.combined, grads))
        },
        &params,
        &GradCheckConfig {
            samples: 300,
            ..GradCheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.checked >= 200);
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}

#[test]
fn single_weight_equals_stl_on_that_head() {
    let heads = four_heads();
    let hmtl: ModelGraph<f64> =
        build_model(&toy(TopologyKind::Hmtl, &heads), codecs(&heads)).unwrap();
    let mut stl: ModelGraph<f64> =
        build_model(&toy(TopologyKind::Stl, &["char"]), codecs(&["char"])).unwrap();
    let by_name: std::collections::HashMap<String, Tensor2D<f64>> = hmtl
        .param_names()
        .into_iter()
        .zip(hmtl.tensors().into_iter().cloned())
        .collect();
    let copied: Vec<Tensor2D<f64>> = stl
        .param_names()
        .iter()
        .map(|n| by_name[n].clone())
        .collect();
    stl.set_params(&copied).unwrap();
    let x = random_input(5, 10, 3);
    let targets = targets_for(&hmtl, "old");
    let (l_h, g_h) = hmtl
        .loss_and_gradients(&x, &targets, &[1.0, 0.0, 0.0, 0.0])
        .unwrap()
        .unwrap();
    let (l_s, g_s) = stl
        .loss_and_gradients(&x, &targets[..1], &[1.0])
        .unwrap()
        .unwrap();
    assert_eq!(l_h.combined, l_s.combined);
    assert_eq!(l_h.per_head[1..], [None, None, None]);
    let grads_h: std::collections::HashMap<String, Tensor2D<f64>> =
        hmtl.param_names().into_iter().zip(g_h).collect();
    for (name, g) in stl.param_names().iter().zip(&g_s) {
        assert_eq!(&grads_h[name], g, "{name}");
    }
    for (name, g) in &grads_h {
        if !stl.param_names().contains(name) {
            assert!(g.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }
}

fn synthetic_examples(m: &ModelGraph<f64>, n: usize) -> Vec<TrainingExample<f64>> {
    let spec = SyntheticSpec {
        feature_dim: 3,
        alphabet: 4,
        lexicon_size: 6,
        words_per_utterance: [1, 2],
        word_length: [2, 3],
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, n)
        .unwrap()
        .into_iter()
        .map(|u| TrainingExample {
            utt_id: u.transcript.utt_id.clone(),
            targets: encode_targets(m.codecs(), &u.transcript.text).unwrap(),
            features: u.features.into_values(),
        })
        .collect()
}

fn synthetic_codecs(names: &[&str]) -> Vec<UnitCodec> {
    let spec = SyntheticSpec {
        feature_dim: 3,
        alphabet: 4,
        lexicon_size: 6,
        words_per_utterance: [1, 2],
        word_length: [2, 3],
        ..SyntheticSpec::default()
    };
    let texts: Vec<String> = generate_synthetic(&spec, 50)
        .unwrap()
        .into_iter()
        .map(|u| u.transcript.text)
        .collect();
    names
        .iter()
        .map(|n| UnitSpec::parse(n).unwrap().build_codec(&texts).unwrap())
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let heads = ["char", "s4"];
    let mut m: ModelGraph<f64> =
        build_model(&toy(TopologyKind::Hmtl, &heads), synthetic_codecs(&heads)).unwrap();
    let before = m.clone();
    let examples = synthetic_examples(&m, 3);
    let batch: Vec<&TrainingExample<f64>> = examples.iter().collect();
    let sgd = Sgd {
        learning_rate: 0.0,
        clip_norm: 5.0,
    };
    let loss = train_step(&mut m, &batch, &[1.0, 1.0], &sgd, None).unwrap();
    assert!(loss.combined > 0.0);
    assert_eq!(m, before);
}

#[test]
fn training_reduces_smoothed_loss() {
    let heads = ["char", "s4"];
    let mut m: ModelGraph<f64> =
        build_model(&toy(TopologyKind::Hmtl, &heads), synthetic_codecs(&heads)).unwrap();
    let examples = synthetic_examples(&m, 5);
    let batch: Vec<&TrainingExample<f64>> = examples.iter().collect();
    let sgd = Sgd {
        learning_rate: 0.05,
        clip_norm: 5.0,
    };
    let mut losses = Vec::new();
    for _ in 0..200 {
        losses.push(
            train_step(&mut m, &batch, &[1.0, 1.0], &sgd, None)
                .unwrap()
                .combined,
        );
    }
    let smoothed: Vec<f64> = losses
        .chunks(20)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    assert!(smoothed.windows(2).all(|w| w[1] < w[0]), "{smoothed:?}");
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let heads = ["char", "s4"];
    let cfg = toy(TopologyKind::Hmtl, &heads);
    let run = |jobs: usize| {
        let mut m: ModelGraph<f64> = build_model(&cfg, synthetic_codecs(&heads)).unwrap();
        let examples = synthetic_examples(&m, 6);
        let tc = TrainingConfig {
            epochs: 2,
            batch_size: 4,
            jobs,
            optimizer: Sgd {
                learning_rate: 0.05,
                clip_norm: 5.0,
            },
            ..TrainingConfig::default()
        };
        hctc::model::train(&mut m, &examples, &tc, |_, _| {}).unwrap();
        m
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
}

#[test]
fn infeasible_utterances_are_skipped() {
    let heads = ["char", "s4"];
    let mut m: ModelGraph<f64> =
        build_model(&toy(TopologyKind::Hmtl, &heads), synthetic_codecs(&heads)).unwrap();
    let mut examples = synthetic_examples(&m, 2);
    examples[1].features = random_input(0, 1, 3);
    let sgd = Sgd::default();
    let all: Vec<&TrainingExample<f64>> = examples.iter().collect();
    let loss = train_step(&mut m, &all, &[1.0, 1.0], &sgd, None).unwrap();
    assert_eq!((loss.used, loss.skipped), (1, 1));
    let only_bad = [&examples[1]];
    assert!(matches!(
        train_step(&mut m, &only_bad, &[1.0, 1.0], &sgd, None),
        Err(Error::EmptyBatch)
    ));
}

#[test]
fn checkpoint_round_trip() {
    let heads = four_heads();
    let cfg = TopologyConfig {
        bottleneck: 3,
        ..toy(TopologyKind::Hmtl, &heads)
    };
    let m: ModelGraph<f64> = build_model(&cfg, codecs(&heads)).unwrap();
    let bytes = m.to_bytes().unwrap();
    assert_eq!(&bytes[..4], b"HCTC");
    let back = ModelGraph::<f64>::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let x = random_input(9, 4, 3);
    assert_eq!(
        back.forward_all_heads(&x).unwrap(),
        m.forward_all_heads(&x).unwrap()
    );

    let single: ModelGraph<f32> = m.cast();
    let sb = single.to_bytes().unwrap();
    let widened = ModelGraph::<f64>::from_bytes(&sb).unwrap();
    assert_eq!(widened.cast::<f32>(), single);

    assert!(matches!(
        ModelGraph::<f64>::from_bytes(&bytes[..bytes.len() - 3]),
        Err(Error::Parse { .. })
    ));
    let mut bad = bytes.clone();
    bad[1] = b'X';
    assert!(matches!(
        ModelGraph::<f64>::from_bytes(&bad),
        Err(Error::Parse { offset: 0, .. })
    ));
}

#[test]
fn run_config_toml_round_trip() {
    let cfg = RunConfig::default();
    let text = cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    let partial =
        RunConfig::from_toml("[model]\nkind = \"bmtl\"\nheads = [\"char\", \"s300\"]\n").unwrap();
    assert_eq!(partial.model.kind, TopologyKind::Bmtl);
    assert_eq!(partial.model.hidden, 320);
    assert!(RunConfig::from_toml("[model]\nwidth = 3\n").is_err());
}
