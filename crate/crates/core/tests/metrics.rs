use numgame::meanings::{enumerate_meanings, GameConfig, DEFAULT_MEANING_CAP};
use numgame::metrics::{
    concept_sharing_test, edit_distance, make_compositional, make_holistic, make_positional,
    median, scramble, spearman, topographic_similarity, Correlation, Language, MetricPair,
};
use numgame::rng::RunRng;
use proptest::prelude::*;
use rand::seq::SliceRandom;

/// Exponential recursive Levenshtein distance.
fn naive_edit(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = naive_edit(ra, rb) + usize::from(x != y);
            sub.min(naive_edit(ra, b) + 1).min(naive_edit(a, rb) + 1)
        }
    }
}

/// Spearman through a direct O(n²) rank count.
fn naive_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn space() -> (GameConfig, Vec<numgame::meanings::MeaningSet>) {
    let g = GameConfig::default();
    let s = enumerate_meanings(&g, DEFAULT_MEANING_CAP).unwrap();
    (g, s)
}

proptest! {
    #[test]
    fn edit_distance_matches_recursion(a in prop::collection::vec(0u8..4, 0..7), b in prop::collection::vec(0u8..4, 0..7)) {
        prop_assert_eq!(edit_distance(&a, &b), naive_edit(&a, &b));
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
    }

    #[test]
    fn edit_distance_triangle(
        a in prop::collection::vec(0u8..3, 0..8),
        b in prop::collection::vec(0u8..3, 0..8),
        c in prop::collection::vec(0u8..3, 0..8),
    ) {
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn spearman_matches_rank_oracle(pairs in prop::collection::vec((0u8..6, 0u8..6), 3..30)) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        match spearman(&xs, &ys).unwrap() {
            Correlation::Defined { rho, p_value } => {
                prop_assert!((rho - naive_spearman(&xs, &ys)).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&p_value));
            }
            Correlation::Degenerate => {
                let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
                prop_assert!(constant(&xs) || constant(&ys));
            }
        }
    }

    #[test]
    fn toposim_ignores_symbol_names(seed in any::<u64>()) {
        let (g, s) = space();
        let mut rng = RunRng::new(seed).stream("lang");
        let lang = make_holistic(&s, g.vocab_size, g.message_length, &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..g.vocab_size).collect();
        perm.shuffle(&mut rng);
        let renamed = lang.relabel(&perm).unwrap();
        for p in MetricPair::ALL {
            let a = topographic_similarity(&lang, p).unwrap().rho();
            let b = topographic_similarity(&renamed, p).unwrap().rho();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn structured_languages_score_high_and_holistic_near_zero() {
    let (g, s) = space();
    let mut rng = RunRng::new(1).stream("langs");
    let comp = make_compositional(&s, g.max_count, g.vocab_size, &mut rng).unwrap();
    let rho = |l: &Language, p| topographic_similarity(l, p).unwrap().rho().unwrap();
    assert!((rho(&comp, MetricPair::HAM_EDIT) - 1.0).abs() < 1e-12);
    let pos = make_positional(&s, g.max_count, g.vocab_size, &mut rng).unwrap();
    assert!((rho(&pos, MetricPair::HAM_EDIT) - 1.0).abs() < 1e-12);

    let holistic: Vec<f64> = (0..25)
        .map(|seed| {
            let l = make_holistic(&s, g.vocab_size, g.message_length, &mut RunRng::new(seed).stream("h")).unwrap();
            rho(&l, MetricPair::HAM_EDIT)
        })
        .collect();
    let m = median(&holistic).unwrap();
    assert!(m.abs() < 0.05, "holistic median {m}");
}

#[test]
fn scrambling_interpolates_toward_holistic() {
    let (g, s) = space();
    let base = make_positional(&s, g.max_count, g.vocab_size, &mut RunRng::new(2).stream("p")).unwrap();
    let mut last = f64::INFINITY;
    for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let l = scramble(&base, f, g.vocab_size, &mut RunRng::new(3).stream("s")).unwrap();
        let changed = base
            .entries()
            .iter()
            .zip(l.entries())
            .filter(|(a, b)| a.message != b.message)
            .count();
        assert_eq!(changed, (f * s.len() as f64).round() as usize);
        let r = topographic_similarity(&l, MetricPair::HAM_EDIT).unwrap().rho().unwrap();
        assert!(r <= last + 1e-12, "rho rose to {r} at fraction {f}");
        last = r;
    }
}

#[test]
fn compositional_language_shares_numerals_significantly() {
    let (g, s) = space();
    let comp = make_compositional(&s, g.max_count, g.vocab_size, &mut RunRng::new(4).stream("c")).unwrap();
    let t = concept_sharing_test(&comp, 2, &mut RunRng::new(5).stream("n")).unwrap();
    assert_eq!(t.positive_pairs, 15);
    assert_eq!(t.negative_pairs, 15);
    let (n, c) = t.by_ngram[0];
    assert_eq!(n, 1);
    assert!(c.rho().unwrap() > 0.5 && c.p_value().unwrap() < 0.01, "{c:?}");
}

#[test]
fn concept_sharing_refuses_tiny_languages() {
    let g = GameConfig {
        num_object_types: 1,
        ..GameConfig::default()
    };
    let s = enumerate_meanings(&g, DEFAULT_MEANING_CAP).unwrap();
    let l = make_holistic(&s, g.vocab_size, g.message_length, &mut RunRng::new(1).stream("h")).unwrap();
    assert!(concept_sharing_test(&l, 2, &mut RunRng::new(1).stream("n")).is_err());
}
