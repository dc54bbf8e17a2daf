mod support;

use numgame::agents::{AgentConfig, GameKind, Listener, Speaker};
use numgame::meanings::{enumerate_meanings, GameConfig, MeaningSet, DEFAULT_MEANING_CAP};
use numgame::rng::RunRng;
use numgame::training::{
    advantage, choice_loss, evaluate, reconstruct_loss, train_pair, Estimator, GameData,
    TrainConfig,
};
use rand::Rng;
use support::bandit::{bandit_grad, estimator_variance, reinforce_error};

fn oracle_log_loss(logits: &[f64], target: usize) -> f64 {
    // log-sum-exp by direct summation, no max shift
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    z.ln() - logits[target]
}

#[test]
fn reconstruct_loss_limits() {
    let m = MeaningSet::new(vec![2, 1], 5).unwrap();
    // canonical sequence A A B stop
    let seq = [0, 0, 1, 2];
    let perfect: Vec<Vec<f64>> = seq
        .iter()
        .map(|&t| (0..3).map(|c| if c == t { 40.0 } else { -40.0 }).collect())
        .collect();
    assert!(reconstruct_loss(&perfect, &m).unwrap() < 1e-9);
    let uniform = vec![vec![0.0; 3]; 4];
    let l = reconstruct_loss(&uniform, &m).unwrap();
    assert!((l - 4.0 * 3f64.ln()).abs() < 1e-12);
    assert!(reconstruct_loss(&uniform[..3], &m).is_err());
}

#[test]
fn reconstruct_loss_matches_direct_summation() {
    let mut rng = RunRng::new(2).stream("test");
    for _ in 0..50 {
        let counts = vec![rng.gen_range(0..4), rng.gen_range(1..4)];
        let m = MeaningSet::new(counts.clone(), 5).unwrap();
        let mut seq = vec![0; counts[0]];
        seq.extend(vec![1; counts[1]]);
        seq.push(2);
        let logits: Vec<Vec<f64>> = seq
            .iter()
            .map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let oracle: f64 = logits
            .iter()
            .zip(&seq)
            .map(|(l, &t)| oracle_log_loss(l, t))
            .sum();
        assert!((reconstruct_loss(&logits, &m).unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn choice_loss_limits_and_oracle() {
    assert!(choice_loss(&[10.0, -10.0], 0).unwrap() <= 1e-6);
    assert!((choice_loss(&[0.0; 5], 3).unwrap() - 5f64.ln()).abs() < 1e-12);
    assert!(choice_loss(&[0.0; 5], 5).is_err());
    let mut rng = RunRng::new(3).stream("test");
    for _ in 0..50 {
        let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let c = rng.gen_range(0..5);
        assert!((choice_loss(&logits, c).unwrap() - oracle_log_loss(&logits, c)).abs() < 1e-9);
    }
}

#[test]
fn reward_is_negative_loss() {
    assert_eq!(advantage(Estimator::Reinforce, 0.7, None).unwrap(), -0.7);
    assert_eq!(advantage(Estimator::Scst, 0.7, Some(0.7)).unwrap(), 0.0);
    assert!(advantage(Estimator::Scst, 0.7, None).is_err());
    assert!(advantage(Estimator::Gumbel, 0.7, None).is_err());
}

#[test]
fn zero_advantage_gives_zero_gradient() {
    let d = bandit_grad(Estimator::Scst, [0.3, -0.2], 0, [0.5, 0.5]);
    assert_eq!(d, [0.0, 0.0]);
}

#[test]
fn reinforce_matches_enumerated_policy_gradient() {
    let mut rng = RunRng::new(21).stream("bandit");
    let err = reinforce_error([0.4, -0.3], [0.2, 1.3], 100_000, &mut rng);
    assert!(err < 1e-2, "relative error {err}");
}

#[test]
fn scst_has_lower_variance_than_reinforce() {
    let theta = [0.4, -0.3];
    let losses = [0.2, 1.3];
    let mut rng = RunRng::new(22).stream("bandit");
    let vr = estimator_variance(Estimator::Reinforce, theta, losses, &mut rng);
    let vs = estimator_variance(Estimator::Scst, theta, losses, &mut rng);
    assert!(vs <= vr, "scst {vs} > reinforce {vr}");
}

fn tiny() -> AgentConfig {
    AgentConfig {
        d_emb: 8,
        d_hid: 16,
        temperature: 1.0,
    }
}

#[test]
fn zero_epochs_leave_agents_unchanged() {
    let game = GameConfig::default();
    let mut init = RunRng::new(1).stream("init");
    let mut s = Speaker::new(&game, &tiny(), &mut init);
    let mut l = Listener::new(&game, &tiny(), GameKind::Select, &mut init);
    let (s0, l0) = (s.params().clone(), l.params().clone());
    let data = GameData::full(enumerate_meanings(&game, DEFAULT_MEANING_CAP).unwrap());
    let cfg = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let stats = train_pair(&mut s, &mut l, &data, &cfg, &RunRng::new(1)).unwrap();
    assert!(stats.is_empty());
    assert_eq!(s.params(), &s0);
    assert_eq!(l.params(), &l0);
}

#[test]
fn training_is_seed_deterministic() {
    for est in [Estimator::Gumbel, Estimator::Reinforce, Estimator::Scst] {
        for kind in [GameKind::Select, GameKind::Reconstruct] {
            let run = || {
                let game = GameConfig::default();
                let rng = RunRng::new(9);
                let mut init = rng.stream("init");
                let mut s = Speaker::new(&game, &tiny(), &mut init);
                let mut l = Listener::new(&game, &tiny(), kind, &mut init);
                let data = GameData::full(enumerate_meanings(&game, DEFAULT_MEANING_CAP).unwrap());
                let cfg = TrainConfig {
                    estimator: est,
                    max_epochs: 3,
                    ..TrainConfig::default()
                };
                let stats = train_pair(&mut s, &mut l, &data, &cfg, &rng).unwrap();
                (stats, s.params().clone())
            };
            let (a, pa) = run();
            let (b, pb) = run();
            assert_eq!(a, b);
            assert_eq!(pa, pb);
            assert_eq!(a.len(), 3);
            assert!(a.iter().all(|s| s.loss >= 0.0 && (0.0..=1.0).contains(&s.train_acc)));
        }
    }
}

#[test]
fn untrained_uniform_select_is_at_chance() {
    let game = GameConfig::default();
    let mut init = RunRng::new(1).stream("init");
    let mut s = Speaker::new(&game, &tiny(), &mut init);
    let mut l = Listener::new(&game, &tiny(), GameKind::Select, &mut init);
    s.params_mut().zero_all();
    l.params_mut().zero_all();
    let space = enumerate_meanings(&game, DEFAULT_MEANING_CAP).unwrap();
    let trials: Vec<MeaningSet> = space.iter().cycle().take(1000).cloned().collect();
    let acc = evaluate(&s, &l, &trials, &space, true, &mut RunRng::new(2).stream("d")).unwrap();
    assert!((acc - 0.2).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn a_pair_memorizes_a_toy_space() {
    // six meanings: one object type counted 1..=6
    let game = GameConfig {
        num_object_types: 1,
        max_count: 6,
        message_length: 2,
        vocab_size: 6,
        num_distractors: 2,
        ..GameConfig::default()
    };
    let space = enumerate_meanings(&game, DEFAULT_MEANING_CAP).unwrap();
    assert_eq!(space.len(), 6);
    let rng = RunRng::new(3);
    let mut init = rng.stream("init");
    let agent = AgentConfig {
        d_emb: 16,
        d_hid: 32,
        temperature: 1.0,
    };
    let mut s = Speaker::new(&game, &agent, &mut init);
    let mut l = Listener::new(&game, &agent, GameKind::Reconstruct, &mut init);
    let cfg = TrainConfig {
        max_epochs: 3000,
        ..TrainConfig::default()
    };
    let stats = train_pair(&mut s, &mut l, &GameData::full(space.clone()), &cfg, &rng).unwrap();
    assert!(stats.len() < 3000, "no early stop");
    assert_eq!(stats.last().unwrap().train_acc, 1.0);
    let acc = evaluate(&s, &l, &space, &space, true, &mut RunRng::new(4).stream("d")).unwrap();
    assert_eq!(acc, 1.0);
}
