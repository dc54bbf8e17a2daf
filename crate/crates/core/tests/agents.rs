use numgame::agents::{
    encode_canonical, gumbel_softmax_sample, relaxed_softmax, AgentConfig, GameKind, Listener,
    Message, MessageInput, SpeakMode, Speaker,
};
use numgame::kernel::{softmax, Graph, Tensor};
use numgame::meanings::{
    encode_meaning, enumerate_meanings, EncodedMeaning, GameConfig, MeaningSet, Representation,
    DEFAULT_MEANING_CAP,
};
use numgame::rng::RunRng;
use proptest::prelude::*;

fn small() -> AgentConfig {
    AgentConfig {
        d_emb: 8,
        d_hid: 12,
        temperature: 1.0,
    }
}

fn speaker_h(speaker: &Speaker, inputs: &[EncodedMeaning]) -> Vec<f64> {
    let mut g = Graph::new();
    let p = speaker.params().bind_frozen(&mut g).unwrap();
    let h = speaker.encode(&mut g, &p, inputs).unwrap();
    g.value(h).data().to_vec()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn set_encoder_ignores_presentation_order() {
    let game = GameConfig::default();
    let speaker = Speaker::new(&game, &small(), &mut RunRng::new(1).stream("init"));
    let m = MeaningSet::new(vec![3, 2], 5).unwrap();
    let canonical = speaker_h(&speaker, &[encode_canonical(&m, &game)]);
    let mut shuffle = RunRng::new(2).stream("presentation");
    for _ in 0..20 {
        let e = encode_meaning(&m, &game, Representation::SetSequence, &mut shuffle);
        assert!(max_abs_diff(&speaker_h(&speaker, &[e]), &canonical) < 1e-6);
    }
}

#[test]
fn zero_parameter_encoder_gives_zero_state() {
    for repr in [Representation::SetSequence, Representation::LinearCounts] {
        let game = GameConfig {
            representation: repr,
            ..GameConfig::default()
        };
        let mut speaker = Speaker::new(&game, &small(), &mut RunRng::new(1).stream("init"));
        speaker.params_mut().zero_all();
        let m = MeaningSet::new(vec![1, 4], 5).unwrap();
        let h = speaker_h(&speaker, &[encode_canonical(&m, &game)]);
        assert!(h.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn encoder_separates_multiplicities() {
    let game = GameConfig::default();
    let aab = MeaningSet::new(vec![2, 1], 5).unwrap();
    let ab = MeaningSet::new(vec![1, 1], 5).unwrap();
    let distinct = (0..100)
        .filter(|&seed| {
            let s = Speaker::new(&game, &small(), &mut RunRng::new(seed).stream("init"));
            let a = speaker_h(&s, &[encode_canonical(&aab, &game)]);
            let b = speaker_h(&s, &[encode_canonical(&ab, &game)]);
            max_abs_diff(&a, &b) > 1e-6
        })
        .count();
    assert!(distinct >= 95, "only {distinct}/100 initializations separate AAB from AB");
}

#[test]
fn noiseless_gumbel_picks_the_largest_logit() {
    let relaxed = relaxed_softmax(&[2.0, 0.0, 0.0], &[0.0; 3], 1.0);
    assert_eq!(numgame::kernel::argmax(&relaxed), 0);
    assert!((relaxed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn gumbel_marginals_match_softmax() {
    let logits = [1.0, -0.5, 0.3, 2.0];
    let p = softmax(&logits);
    let mut rng = RunRng::new(11).stream("gumbel");
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[gumbel_softmax_sample(&logits, 1.0, &mut rng).0] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&p)
        .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn straight_through_gradient_is_the_relaxed_gradient() {
    let logits = vec![0.4, -1.2, 0.9, 0.1];
    let noise = vec![0.3, -0.2, 0.5, 1.1];
    let w = vec![1.5, -0.7, 0.2, 2.0];
    let tau = 0.7;
    let mut g = Graph::new();
    let l = g.param(Tensor::matrix(1, 4, logits.clone()).unwrap()).unwrap();
    let n = g.input(Tensor::matrix(1, 4, noise.clone()).unwrap()).unwrap();
    let wn = g.input(Tensor::matrix(1, 4, w.clone()).unwrap()).unwrap();
    let s = g.add(l, n).unwrap();
    let s = g.scale(s, 1.0 / tau).unwrap();
    let r = g.softmax(s).unwrap();
    let hard = g.straight_through(r).unwrap();
    let hv = g.value(hard).data().to_vec();
    assert_eq!(hv.iter().filter(|&&v| v == 1.0).count(), 1);
    assert_eq!(hv.iter().filter(|&&v| v == 0.0).count(), 3);
    let prod = g.mul(hard, wn).unwrap();
    let loss = g.sum(prod).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = grads.get(l).unwrap().data().to_vec();
    let f = |x: &[f64]| -> f64 {
        relaxed_softmax(x, &noise, tau)
            .iter()
            .zip(&w)
            .map(|(a, b)| a * b)
            .sum()
    };
    let h = 1e-6;
    for j in 0..4 {
        let mut plus = logits.clone();
        plus[j] += h;
        let mut minus = logits.clone();
        minus[j] -= h;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        assert!((numeric - analytic[j]).abs() < 1e-7, "{j}: {numeric} vs {}", analytic[j]);
    }
}

#[test]
fn greedy_decoding_is_deterministic() {
    let game = GameConfig::default();
    let speaker = Speaker::new(&game, &small(), &mut RunRng::new(5).stream("init"));
    let inputs: Vec<EncodedMeaning> = enumerate_meanings(&game, DEFAULT_MEANING_CAP)
        .unwrap()
        .iter()
        .map(|m| encode_canonical(m, &game))
        .collect();
    assert_eq!(
        speaker.greedy_messages(&inputs).unwrap(),
        speaker.greedy_messages(&inputs).unwrap()
    );
}

#[test]
fn relaxed_message_rows_must_sum_to_one() {
    assert!(Message::from_relaxed(vec![vec![0.5, 0.6]]).is_err());
    let m = Message::from_relaxed(vec![vec![0.2, 0.8], vec![0.9, 0.1]]).unwrap();
    assert_eq!(m.symbols(), &[1, 0]);
    assert!(Message::new(vec![0, 3], 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn messages_have_fixed_length_and_valid_symbols(
        seed in 0u64..1000,
        len in 1usize..6,
        vocab in 2usize..12,
        mode in prop_oneof![Just(SpeakMode::Greedy), Just(SpeakMode::Sample), Just(SpeakMode::GumbelSt)],
    ) {
        let game = GameConfig { message_length: len, vocab_size: vocab, ..GameConfig::default() };
        let speaker = Speaker::new(&game, &small(), &mut RunRng::new(seed).stream("init"));
        let ms = enumerate_meanings(&game, DEFAULT_MEANING_CAP).unwrap();
        let inputs: Vec<EncodedMeaning> = ms.iter().map(|m| encode_canonical(m, &game)).collect();
        let mut g = Graph::new();
        let p = speaker.params().bind(&mut g).unwrap();
        let h = speaker.encode(&mut g, &p, &inputs).unwrap();
        let out = speaker.speak(&mut g, &p, h, mode, &mut RunRng::new(seed).stream("gumbel")).unwrap();
        prop_assert_eq!(out.symbols.len(), ms.len());
        for m in &out.symbols {
            prop_assert_eq!(m.len(), len);
            prop_assert!(m.iter().all(|&s| s < vocab));
        }
        if mode == SpeakMode::GumbelSt {
            prop_assert_eq!(out.one_hot.len(), len);
        }
        if mode == SpeakMode::Sample {
            let nll = g.value(out.neg_log_prob.unwrap()).data().to_vec();
            prop_assert!(nll.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }
}

#[test]
fn one_hot_and_symbol_messages_are_read_identically() {
    let game = GameConfig::default();
    let listener = Listener::new(&game, &small(), GameKind::Reconstruct, &mut RunRng::new(3).stream("init"));
    let msgs = vec![vec![1, 4, 4, 9], vec![0, 2, 7, 3]];
    let mut g = Graph::new();
    let p = listener.params().bind_frozen(&mut g).unwrap();
    let a = listener.encode_message(&mut g, &p, MessageInput::Symbols(&msgs)).unwrap();
    let steps: Vec<_> = (0..4)
        .map(|k| {
            let ids: Vec<usize> = msgs.iter().map(|m| m[k]).collect();
            g.input(Tensor::one_hot(&ids, 10).unwrap()).unwrap()
        })
        .collect();
    let b = listener.encode_message(&mut g, &p, MessageInput::OneHot(&steps)).unwrap();
    assert!(max_abs_diff(g.value(a).data(), g.value(b).data()) < 1e-9);
    let targets = vec![
        MeaningSet::new(vec![2, 1], 5).unwrap(),
        MeaningSet::new(vec![0, 3], 5).unwrap(),
    ];
    let (la, _) = listener.reconstruct_logits(&mut g, &p, a, &targets).unwrap();
    let (lb, _) = listener.reconstruct_logits(&mut g, &p, b, &targets).unwrap();
    for (x, y) in la.iter().zip(&lb) {
        assert!(max_abs_diff(g.value(*x).data(), g.value(*y).data()) < 1e-9);
    }
}

#[test]
fn zero_parameter_listeners_are_uniform() {
    let game = GameConfig::default();
    let msgs = vec![vec![1, 4, 4, 9]];
    let target = vec![MeaningSet::new(vec![2, 1], 5).unwrap()];

    let mut rec = Listener::new(&game, &small(), GameKind::Reconstruct, &mut RunRng::new(3).stream("init"));
    rec.params_mut().zero_all();
    let mut g = Graph::new();
    let p = rec.params().bind(&mut g).unwrap();
    let h = rec.encode_message(&mut g, &p, MessageInput::Symbols(&msgs)).unwrap();
    assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    let (logits, _) = rec.reconstruct_logits(&mut g, &p, h, &target).unwrap();
    for l in logits {
        assert!(g.value(l).data().iter().all(|&v| v == 0.0));
    }

    let mut sel = Listener::new(&game, &small(), GameKind::Select, &mut RunRng::new(3).stream("init"));
    sel.params_mut().zero_all();
    let mut g = Graph::new();
    let p = sel.params().bind(&mut g).unwrap();
    let h = sel.encode_message(&mut g, &p, MessageInput::Symbols(&msgs)).unwrap();
    let cands = vec![target.iter().chain(&target).map(|m| encode_canonical(m, &game)).collect()];
    let logits = sel.choose_logits(&mut g, &p, h, &cands).unwrap();
    assert!(g.value(logits).data().iter().all(|&v| v == 0.0));
}

fn candidate_list(game: &GameConfig, counts: &[[usize; 2]]) -> Vec<EncodedMeaning> {
    counts
        .iter()
        .map(|c| encode_canonical(&MeaningSet::new(c.to_vec(), 5).unwrap(), game))
        .collect()
}

#[test]
fn choose_logits_follow_candidates() {
    for repr in [Representation::SetSequence, Representation::LinearCounts] {
        let game = GameConfig {
            representation: repr,
            ..GameConfig::default()
        };
        let sel = Listener::new(&game, &small(), GameKind::Select, &mut RunRng::new(8).stream("init"));
        let msgs = vec![vec![3, 1, 0, 2]];
        let order = [[1, 2], [4, 0], [1, 2], [0, 5]];
        let permuted = [[0, 5], [1, 2], [4, 0], [1, 2]];
        let mut g = Graph::new();
        let p = sel.params().bind_frozen(&mut g).unwrap();
        let h = sel.encode_message(&mut g, &p, MessageInput::Symbols(&msgs)).unwrap();
        let a = sel.choose_logits(&mut g, &p, h, &[candidate_list(&game, &order)]).unwrap();
        let b = sel.choose_logits(&mut g, &p, h, &[candidate_list(&game, &permuted)]).unwrap();
        let (a, b) = (g.value(a).data().to_vec(), g.value(b).data().to_vec());
        assert!((a[0] - a[2]).abs() < 1e-12, "duplicates differ");
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            assert!((a[i] - b[j]).abs() < 1e-9);
        }
        assert!(sel.choose_logits(&mut g, &p, h, &[candidate_list(&game, &order[..1])]).is_err());
    }
}

#[test]
fn baseline_head_reads_the_set_encoding() {
    // the no-message baseline feeds h_s^s straight into the listener head
    let game = GameConfig::default();
    let speaker = Speaker::new(&game, &small(), &mut RunRng::new(4).stream("init"));
    let sel = Listener::new(&game, &small(), GameKind::Select, &mut RunRng::new(5).stream("init"));
    let m = MeaningSet::new(vec![2, 2], 5).unwrap();
    let mut g = Graph::new();
    let sp = speaker.params().bind_frozen(&mut g).unwrap();
    let lp = sel.params().bind_frozen(&mut g).unwrap();
    let hs = speaker.encode(&mut g, &sp, &[encode_canonical(&m, &game)]).unwrap();
    let cands = candidate_list(&game, &[[2, 2], [2, 2], [1, 0]]);
    let logits = sel.choose_logits(&mut g, &lp, hs, &[cands]).unwrap();
    let v = g.value(logits).data();
    assert!((v[0] - v[1]).abs() < 1e-12);

    let mut zero_s = speaker.clone();
    zero_s.params_mut().zero_all();
    let mut g = Graph::new();
    let sp = zero_s.params().bind_frozen(&mut g).unwrap();
    let lp = sel.params().bind_frozen(&mut g).unwrap();
    let hs = zero_s.encode(&mut g, &sp, &[encode_canonical(&m, &game)]).unwrap();
    let cands = candidate_list(&game, &[[2, 2], [3, 3], [1, 0]]);
    let logits = sel.choose_logits(&mut g, &lp, hs, &[cands]).unwrap();
    assert!(g.value(logits).data().iter().all(|&v| v == 0.0));
}

#[test]
fn log_prob_of_uniform_speaker() {
    let game = GameConfig::default();
    let mut speaker = Speaker::new(&game, &small(), &mut RunRng::new(4).stream("init"));
    speaker.params_mut().zero_all();
    let ms = enumerate_meanings(&game, DEFAULT_MEANING_CAP).unwrap();
    let inputs: Vec<EncodedMeaning> = ms.iter().map(|m| encode_canonical(m, &game)).collect();
    let msgs: Vec<Vec<usize>> = (0..ms.len()).map(|i| vec![i % 10, 3, (i * 7) % 10, 1]).collect();
    let lp = speaker.log_prob(&inputs, &msgs).unwrap();
    let expected = 35.0 * 4.0 * (0.1f64).ln();
    assert!((lp - expected).abs() < 1e-9);
    assert!(speaker.log_prob(&inputs[..1], &[vec![0, 0, 0, 10]]).is_err());
}
