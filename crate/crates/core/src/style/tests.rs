use proptest::prelude::*;

use super::*;
use crate::classifier::{ClassifierConfig, ClassifierModel};
use crate::corpus::{tokenize, DialogueTriple, Vocab, LABEL, LABEL_NEUTRAL, LABEL_POLITE, LABEL_RUDE};
use crate::dialogue::{
    decode, make_examples, run_decode, train_dialogue, DecodeMode, DialogueConfig, LanguageModel, LmConfig, LmPolicy,
    Seq2seq, TokenMask, TrainConfig, TrainExample,
};
use crate::numerics::gradcheck::numeric_grads;
use crate::numerics::{Graph, ParamStore, Rng, Tensor};

fn triples() -> Vec<DialogueTriple> {
    [
        (
            "did you see the dog ?",
            "the dog was big .",
            "the dog was small , thanks .",
        ),
        ("where is the cat ?", "the cat is here .", "the cat was red , idiot ."),
        (
            "is it cold ?",
            "i think the rain is cold .",
            "please , the rain was warm .",
        ),
        ("what now ?", "we wait .", "whatever , we wait ."),
    ]
    .iter()
    .map(|(a, b, c)| DialogueTriple {
        u1: tokenize(a),
        u2: tokenize(b),
        u3: tokenize(c),
    })
    .collect()
}

fn vocab() -> Vocab {
    let t = triples();
    Vocab::build(
        t.iter()
            .flat_map(|x| [x.u1.as_slice(), x.u2.as_slice(), x.u3.as_slice()]),
        1000,
    )
}

fn s2s(seed: u64) -> Seq2seq {
    let cfg = DialogueConfig {
        embed_dim: 6,
        hidden: 5,
        attention: 4,
        encoder_layers: 1,
        decoder_layers: 2,
        dropout: 0.0,
        max_len: 10,
        ..DialogueConfig::default()
    };
    Seq2seq::new(cfg, vocab(), None, &mut Rng::seed(seed)).unwrap()
}

fn lm(seed: u64) -> LanguageModel {
    let cfg = LmConfig {
        embed_dim: 6,
        hidden: 5,
        layers: 2,
        dropout: 0.0,
        max_len: 10,
        ..LmConfig::default()
    };
    LanguageModel::new(cfg, vocab(), None, &mut Rng::seed(seed)).unwrap()
}

fn classifier(seed: u64) -> ClassifierModel {
    let cfg = ClassifierConfig {
        embed_dim: 6,
        hidden: 4,
        widths: vec![2, 3],
        filters: 3,
        dropout: 0.0,
        ..ClassifierConfig::default()
    };
    ClassifierModel::new(cfg, vocab(), None, &mut Rng::seed(seed)).unwrap()
}

fn examples(m: &Seq2seq) -> Vec<TrainExample> {
    let mask = TokenMask::new(&m.vocab, &m.config.profanity);
    make_examples(&triples(), &m.vocab, m.config.max_len, &mask, true).unwrap()
}

#[test]
fn fuse_step_examples() {
    let p = [0.8, 0.2];
    let q = [0.2, 0.8];
    let at = |alpha| fuse_step(&p, &q, &FusionConfig { alpha }).unwrap();
    assert_eq!(at(1.0), p.to_vec());
    assert_eq!(at(0.0), q.to_vec());
    assert_eq!(at(0.5), vec![0.5, 0.5]);
    assert!(fuse_step(&p, &[1.0], &FusionConfig::default()).is_err());
    assert!(fuse_step(&p, &q, &FusionConfig { alpha: 1.5 }).is_err());
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 6).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn fusion_is_convex(p in distribution(), q in distribution(), alpha in 0.0f64..=1.0) {
        let f = fuse_step(&p, &q, &FusionConfig { alpha }).unwrap();
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(f.iter().all(|&x| x >= 0.0));
        let f32_sum: f32 = f.iter().map(|&x| x as f32).sum();
        prop_assert!((f32_sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn full_weight_fusion_keeps_the_argmax(p in distribution(), q in distribution()) {
        let f = fuse_step(&p, &q, &FusionConfig { alpha: 1.0 }).unwrap();
        let arg = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(arg(&f), arg(&p));
    }
}

#[test]
fn fusion_endpoints_match_single_models() {
    let (m, l) = (s2s(1), lm(2));
    let data = examples(&m);
    let sources: Vec<&[usize]> = data.iter().map(|e| e.source.as_slice()).collect();
    let greedy = DecodeMode::Greedy;
    let fused = fusion_decode(
        &m,
        &l,
        &sources,
        &FusionConfig { alpha: 1.0 },
        greedy,
        10,
        &mut Rng::seed(0),
    )
    .unwrap();
    let base = decode(&m, &sources, None, greedy, 10, &mut Rng::seed(0)).unwrap();
    for (f, b) in fused.iter().zip(&base) {
        assert_eq!(f.tokens, b.tokens);
    }
    let fused = fusion_decode(
        &m,
        &l,
        &sources,
        &FusionConfig { alpha: 0.0 },
        greedy,
        10,
        &mut Rng::seed(0),
    )
    .unwrap();
    let mut policy = LmPolicy::new(&l, 1).unwrap();
    let lm_only = run_decode(&mut policy, 1, greedy, 10, false, &mut Rng::seed(0)).unwrap();
    for f in &fused {
        assert_eq!(f.tokens, lm_only[0].tokens);
    }
}

#[test]
fn fusion_requires_a_shared_vocabulary() {
    let m = s2s(3);
    let other = Vocab::build([&["x".to_string()][..]], 10);
    let l = LanguageModel::new(lm(4).config, other, None, &mut Rng::seed(0)).unwrap();
    let src = [crate::corpus::SEP];
    assert!(fusion_decode(
        &m,
        &l,
        &[&src],
        &FusionConfig::default(),
        DecodeMode::Greedy,
        5,
        &mut Rng::seed(0)
    )
    .is_err());
}

#[test]
fn score_bins() {
    assert_eq!(score_bin(0.85).unwrap(), LABEL_POLITE);
    assert_eq!(score_bin(0.8).unwrap(), LABEL_POLITE);
    assert_eq!(score_bin(1.0).unwrap(), LABEL_POLITE);
    assert_eq!(score_bin(0.79).unwrap(), LABEL_NEUTRAL);
    assert_eq!(score_bin(0.2).unwrap(), LABEL_NEUTRAL);
    assert_eq!(score_bin(0.19).unwrap(), LABEL_RUDE);
    assert_eq!(score_bin(0.0).unwrap(), LABEL_RUDE);
    assert!(score_bin(1.01).is_err());
    assert!(score_bin(-0.1).is_err());
}

#[test]
fn label_scaling_touches_only_the_label_position() {
    let m = s2s(5);
    let data = examples(&m);
    let labelled: Vec<Vec<usize>> = data
        .iter()
        .map(|e| lft_source(&e.source, LftMode::Continuous, 0.3).unwrap().0)
        .collect();
    let refs: Vec<&[usize]> = labelled.iter().map(Vec::as_slice).collect();
    let b = refs.len();
    let embed = |scale: f64| {
        let mut g = Graph::new(&m.params);
        let scales = vec![scale; b];
        let x = m.embed_sources(&mut g, &refs, Some(&scales)).unwrap();
        g.value(x).clone()
    };
    let (zero, half, one) = (embed(0.0), embed(0.5), embed(1.0));
    let table = m.params.get(m.embedding_id());
    for r in 0..b {
        assert!(zero.row_slice(r).iter().all(|&x| x == 0.0));
        assert_eq!(one.row_slice(r), table.row_slice(LABEL));
        let halved: Vec<f32> = table.row_slice(LABEL).iter().map(|&x| x * 0.5).collect();
        assert_eq!(half.row_slice(r), halved.as_slice());
    }
    for r in b..zero.rows() {
        assert_eq!(zero.row_slice(r), one.row_slice(r));
        assert_eq!(half.row_slice(r), one.row_slice(r));
    }
}

#[test]
fn lft_prepare_prepends_classifier_labels() {
    let m = s2s(6);
    let c = classifier(7);
    let data = examples(&m);
    let cont = lft_prepare(&data, &c, &m.vocab, LftMode::Continuous).unwrap();
    let disc = lft_prepare(&data, &c, &m.vocab, LftMode::Discrete).unwrap();
    for ((e, a), d) in data.iter().zip(&cont).zip(&disc) {
        let text = crate::dialogue::response_tokens(&m.vocab, &e.target);
        let score = c.score(&text).unwrap();
        assert_eq!(a.source[0], LABEL);
        assert_eq!(&a.source[1..], e.source.as_slice());
        assert_eq!(a.label, Some(crate::dialogue::StyleLabel::Scaled(score)));
        assert_eq!(d.source[0], score_bin(score).unwrap());
        assert_eq!(d.label_scale(), 1.0);
        assert_eq!(a.target, e.target);
    }
}

#[test]
fn lft_decode_is_deterministic_and_checks_the_score() {
    let m = s2s(8);
    let data = examples(&m);
    let sources: Vec<&[usize]> = data.iter().map(|e| e.source.as_slice()).collect();
    let run = |score: f64, seed: u64| {
        lft_decode(
            &m,
            &sources,
            score,
            LftMode::Continuous,
            DecodeMode::Greedy,
            10,
            &mut Rng::seed(seed),
        )
    };
    assert_eq!(run(0.7, 1).unwrap(), run(0.7, 2).unwrap());
    assert!(run(1.2, 0).is_err());
    assert!(lft_decode(
        &m,
        &sources,
        0.9,
        LftMode::Discrete,
        DecodeMode::Greedy,
        10,
        &mut Rng::seed(0)
    )
    .is_ok());
}

fn sample(reward: f64, log_probs: Vec<f64>) -> SampledResponse {
    SampledResponse {
        tokens: vec![9; log_probs.len()],
        log_probs,
        reward,
    }
}

#[test]
fn rl_loss_examples() {
    let cfg = RlConfig::default();
    assert_eq!(rl_loss(&sample(0.5, vec![-1.0, -3.0]), &cfg), 0.0);
    assert!((rl_loss(&sample(1.0, vec![-0.5, -1.5]), &cfg) - 1.0).abs() < 1e-12);
    let rude = RlConfig {
        sign: RewardSign::EncourageRude,
        ..cfg
    };
    assert!((rl_loss(&sample(1.0, vec![-2.0]), &rude) + 1.0).abs() < 1e-12);
    let norm = RlConfig {
        length_normalize: true,
        ..cfg
    };
    assert!((rl_loss(&sample(1.0, vec![-0.5, -1.5]), &norm) - 0.5).abs() < 1e-12);
}

#[test]
fn rl_loss_is_linear_in_the_advantage() {
    let cfg = RlConfig::default();
    let lp = vec![-0.7, -1.1, -0.2];
    let total: f64 = lp.iter().sum();
    for r in [0.1, 0.5, 0.9] {
        let loss = rl_loss(&sample(r, lp.clone()), &cfg);
        assert!((loss - (-(r - cfg.baseline) * total)).abs() < 1e-12);
    }
    let (a, b, c) = (
        rl_loss(&sample(0.1, lp.clone()), &cfg),
        rl_loss(&sample(0.5, lp.clone()), &cfg),
        rl_loss(&sample(0.9, lp), &cfg),
    );
    assert!(((c - b) - (b - a)).abs() < 1e-12);
}

#[test]
fn rl_config_validation() {
    assert!(RlConfig {
        beta: -1.0,
        ..RlConfig::default()
    }
    .validate()
    .is_err());
    assert!(RlConfig {
        beta: f64::NAN,
        ..RlConfig::default()
    }
    .validate()
    .is_err());
    assert!(RlConfig {
        baseline: 1.5,
        ..RlConfig::default()
    }
    .validate()
    .is_err());
    assert!(RlConfig {
        samples: 0,
        ..RlConfig::default()
    }
    .validate()
    .is_err());
}

/// Two-step policy over three tokens: `p(a) = softmax(first)`,
/// `p(b | a) = softmax(second[a])`.
fn toy_log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
    row.iter().map(|x| x - m - z.ln()).collect()
}

fn toy_probs(store: &ParamStore<f64>) -> Vec<f64> {
    let first = toy_log_softmax(store.get(store.id("first").unwrap()).data());
    let second = store.get(store.id("second").unwrap());
    let mut out = Vec::with_capacity(9);
    for (a, fa) in first.iter().enumerate() {
        let cond = toy_log_softmax(second.row_slice(a));
        out.extend(cond.iter().map(|cb| (fa + cb).exp()));
    }
    out
}

#[test]
fn reinforce_gradient_is_unbiased_on_an_enumerable_policy() {
    let mut store = ParamStore::<f64>::new();
    store.add("first", Tensor::row(vec![0.3, -0.2, 0.5]).unwrap()).unwrap();
    store
        .add(
            "second",
            Tensor::matrix(3, 3, vec![0.1, 0.4, -0.3, -0.5, 0.2, 0.0, 0.6, -0.1, 0.3]).unwrap(),
        )
        .unwrap();
    let rewards = [0.9, 0.1, 0.4, 0.7, 0.2, 0.95, 0.05, 0.6, 0.3];
    let cfg = RlConfig::default();

    let probs = toy_probs(&store);
    let mut rng = Rng::seed(42);
    let draws = 100_000;
    let mut counts = [0usize; 9];
    for _ in 0..draws {
        counts[rng.categorical(&probs)] += 1;
    }

    let mut g = Graph::new(&store);
    let first = g.param(store.id("first").unwrap());
    let second = g.param(store.id("second").unwrap());
    let lp1 = g.log_softmax(first).unwrap();
    let lp2 = g.log_softmax(second).unwrap();
    let seqs: Vec<(usize, usize)> = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).collect();
    let a_ids: Vec<usize> = seqs.iter().map(|s| s.0).collect();
    let b_ids: Vec<usize> = seqs.iter().map(|s| s.1).collect();
    let rows1 = g.gather(lp1, &[0; 9]).unwrap();
    let step1 = g.pick(rows1, &a_ids).unwrap();
    let rows2 = g.gather(lp2, &a_ids).unwrap();
    let step2 = g.pick(rows2, &b_ids).unwrap();
    let seq_lp = g.add(step1, step2).unwrap();
    let weights: Vec<f64> = (0..9)
        .map(|y| counts[y] as f64 / draws as f64 * rl_sequence_weight(rewards[y], &cfg))
        .collect();
    let w = g.constant(Tensor::column(weights).unwrap()).unwrap();
    let weighted = g.mul(seq_lp, w).unwrap();
    let loss = g.sum(weighted).unwrap();
    let mc = g.backward(loss).unwrap().into_params();

    let exact = numeric_grads(&store, 1e-6, |s| {
        Ok(-toy_probs(s).iter().zip(&rewards).map(|(p, r)| p * r).sum::<f64>())
    })
    .unwrap();

    let (mut dot, mut nm, mut ne) = (0.0, 0.0, 0.0);
    for (id, e) in store.ids().zip(&exact) {
        for (m, x) in mc.get(id).unwrap().data().iter().zip(e.data()) {
            dot += m * x;
            nm += m * m;
            ne += x * x;
        }
    }
    let cosine = dot / (nm.sqrt() * ne.sqrt());
    assert!(cosine > 0.99, "cosine {cosine}");
}

#[test]
fn zero_weight_rl_reproduces_likelihood_training() {
    let base = s2s(9);
    let data = examples(&base);
    let c = classifier(10);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        ..TrainConfig::default()
    };
    let mut plain = base.clone();
    let plain_log = train_dialogue(&mut plain, &data, &cfg, &mut Rng::seed(11)).unwrap();
    let mut rl = base.clone();
    let rl_cfg = RlConfig {
        beta: 0.0,
        ..RlConfig::default()
    };
    let log = train_rl(&mut rl, &data, &c, &rl_cfg, &cfg, &mut Rng::seed(11)).unwrap();
    assert_eq!(plain.params, rl.params);
    assert_eq!(plain_log, log.train);
    assert_eq!(log.step_rewards.len(), log.train.steps);
}

#[test]
fn rl_training_is_deterministic_and_moves_parameters() {
    let base = s2s(12);
    let data = examples(&base);
    let c = classifier(13);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let rl_cfg = RlConfig {
        samples: 2,
        ..RlConfig::default()
    };
    let (mut a, mut b) = (base.clone(), base.clone());
    let la = train_rl(&mut a, &data, &c, &rl_cfg, &cfg, &mut Rng::seed(14)).unwrap();
    let lb = train_rl(&mut b, &data, &c, &rl_cfg, &cfg, &mut Rng::seed(14)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(la, lb);
    let mut plain = base.clone();
    train_dialogue(&mut plain, &data, &cfg, &mut Rng::seed(14)).unwrap();
    assert_ne!(plain.params, a.params);
    assert!(la.step_rewards.iter().all(|r| (0.0..=1.0).contains(r)));
}

#[test]
fn sampled_responses_carry_consistent_log_probs() {
    let m = s2s(15);
    let c = classifier(16);
    let data = examples(&m);
    let sources: Vec<&[usize]> = data.iter().map(|e| e.source.as_slice()).collect();
    let samples = sample_responses(&m, &c, &sources, None, &RlConfig::default(), &mut Rng::seed(17)).unwrap();
    let mask = TokenMask::new(&m.vocab, &m.config.profanity);
    for s in &samples {
        assert_eq!(s.tokens.len(), s.log_probs.len());
        assert!((0.0..=1.0).contains(&s.reward));
        assert!(s.log_probs.iter().all(|&l| l <= 0.0 && l.is_finite()));
        assert!(s.tokens.iter().all(|&t| !mask.blocked(t)));
    }
}

#[test]
fn strategy_metadata_round_trips() {
    for s in [
        StyleStrategy::Base,
        StyleStrategy::Fusion { alpha: 0.5 },
        StyleStrategy::Lft {
            mode: LftMode::Continuous,
            target_score: 1.0,
        },
        StyleStrategy::Rl {
            beta: 2.0,
            baseline: 0.5,
            sign: RewardSign::EncourageRude,
        },
    ] {
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<StyleStrategy>(&json).unwrap(), s);
    }
}
