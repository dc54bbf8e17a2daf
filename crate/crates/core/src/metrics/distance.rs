//! Distances between meanings and between messages.

use std::collections::HashSet;
use std::hash::Hash;

use crate::error::{contract, Result};
use crate::meanings::MeaningSequence;

/// Levenshtein distance with unit insert, delete and substitute costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn edit_distance_str(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

pub fn hamming_distance(a: &MeaningSequence, b: &MeaningSequence) -> Result<usize> {
    contract!(
        a.len() == b.len(),
        "hamming distance of {a} and {b}: lengths differ"
    );
    Ok(a.as_str()
        .bytes()
        .zip(b.as_str().bytes())
        .filter(|(x, y)| x != y)
        .count())
}

pub fn euclidean_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    contract!(
        a.len() == b.len(),
        "euclidean distance: {} vs {} object types",
        a.len(),
        b.len()
    );
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Default n-gram weights: half unigrams, half bigrams.
pub const DEFAULT_BLEU_WEIGHTS: [f64; 2] = [0.5, 0.5];

fn ngrams<T: Hash + Eq + Clone>(xs: &[T], n: usize) -> HashSet<Vec<T>> {
    if xs.len() < n {
        return HashSet::new();
    }
    xs.windows(n).map(<[T]>::to_vec).collect()
}

/// `|common distinct n-grams| / |union of distinct n-grams|`; 0 when neither
/// message is long enough to have an n-gram.
pub fn ngram_overlap<T: Hash + Eq + Clone>(a: &[T], b: &[T], n: usize) -> f64 {
    let (ga, gb) = (ngrams(a, n), ngrams(b, n));
    let union = ga.union(&gb).count();
    if union == 0 {
        return 0.0;
    }
    ga.intersection(&gb).count() as f64 / union as f64
}

/// Weighted n-gram overlap; `weights[k]` weighs `(k+1)`-grams and must sum to 1.
pub fn bleu_similarity<T: Hash + Eq + Clone>(a: &[T], b: &[T], weights: &[f64]) -> Result<f64> {
    contract!(
        !weights.is_empty() && (weights.iter().sum::<f64>() - 1.0).abs() < 1e-9,
        "BLEU weights {weights:?} must sum to 1"
    );
    Ok(weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * ngram_overlap(a, b, k + 1))
        .sum())
}

pub fn bleu_distance<T: Hash + Eq + Clone>(a: &[T], b: &[T], weights: &[f64]) -> Result<f64> {
    Ok(1.0 - bleu_similarity(a, b, weights)?)
}
