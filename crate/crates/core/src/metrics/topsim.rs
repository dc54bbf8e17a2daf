//! Topographic similarity and the shared-numeral significance test.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distance::{
    bleu_distance, edit_distance, euclidean_distance, hamming_distance, ngram_overlap,
    DEFAULT_BLEU_WEIGHTS,
};
use super::language::Language;
use super::stats::{spearman, Correlation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeaningMetric {
    Hamming,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageMetric {
    Edit,
    Bleu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricPair {
    pub meaning: MeaningMetric,
    pub message: MessageMetric,
}

impl MetricPair {
    pub const HAM_EDIT: MetricPair = MetricPair {
        meaning: MeaningMetric::Hamming,
        message: MessageMetric::Edit,
    };
    pub const HAM_BLEU: MetricPair = MetricPair {
        meaning: MeaningMetric::Hamming,
        message: MessageMetric::Bleu,
    };
    pub const EUCLID_EDIT: MetricPair = MetricPair {
        meaning: MeaningMetric::Euclidean,
        message: MessageMetric::Edit,
    };
    pub const EUCLID_BLEU: MetricPair = MetricPair {
        meaning: MeaningMetric::Euclidean,
        message: MessageMetric::Bleu,
    };
    pub const ALL: [MetricPair; 4] = [
        Self::HAM_EDIT,
        Self::HAM_BLEU,
        Self::EUCLID_EDIT,
        Self::EUCLID_BLEU,
    ];

    pub fn name(&self) -> &'static str {
        match (self.meaning, self.message) {
            (MeaningMetric::Hamming, MessageMetric::Edit) => "Ham+Edit",
            (MeaningMetric::Hamming, MessageMetric::Bleu) => "Ham+BLEU",
            (MeaningMetric::Euclidean, MessageMetric::Edit) => "Euclid+Edit",
            (MeaningMetric::Euclidean, MessageMetric::Bleu) => "Euclid+BLEU",
        }
    }
}

impl fmt::Display for MetricPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricPair::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Refused(format!("unknown metric pair {s:?}")))
    }
}

/// Pairwise meaning and message distances over all unordered meaning pairs.
pub fn pairwise_distances(lang: &Language, pair: MetricPair) -> Result<(Vec<f64>, Vec<f64>)> {
    let es = lang.entries();
    let counts: Vec<Vec<usize>> = es.iter().map(|e| e.meaning.counts()).collect();
    let n = es.len();
    let mut dm = Vec::with_capacity(n * (n - 1) / 2);
    let mut dv = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dm.push(match pair.meaning {
                MeaningMetric::Hamming => hamming_distance(&es[i].meaning, &es[j].meaning)? as f64,
                MeaningMetric::Euclidean => euclidean_distance(&counts[i], &counts[j])?,
            });
            dv.push(match pair.message {
                MessageMetric::Edit => edit_distance(&es[i].message, &es[j].message) as f64,
                MessageMetric::Bleu => {
                    bleu_distance(&es[i].message, &es[j].message, &DEFAULT_BLEU_WEIGHTS)?
                }
            });
        }
    }
    Ok((dm, dv))
}

/// Spearman correlation between meaning distances and message distances.
pub fn topographic_similarity(lang: &Language, pair: MetricPair) -> Result<Correlation> {
    if lang.len() < 3 {
        return Err(Error::Contract(format!(
            "topographic similarity needs at least 3 meanings, got {}",
            lang.len()
        )));
    }
    let (dm, dv) = pairwise_distances(lang, pair)?;
    spearman(&dm, &dv)
}

/// ρ for all four metric pairs; degenerate correlations map to `None`.
pub fn toposim_all(lang: &Language) -> Result<Vec<(MetricPair, Option<f64>)>> {
    MetricPair::ALL
        .into_iter()
        .map(|p| Ok((p, topographic_similarity(lang, p)?.rho())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSharing {
    pub positive_pairs: usize,
    pub negative_pairs: usize,
    /// `(n, correlation between BLEU-n and the sharing indicator)`.
    pub by_ngram: Vec<(usize, Correlation)>,
}

/// Tests whether messages of meanings built from the same counts (e.g. `43`
/// and `34`) overlap more than messages of meanings sharing no count at all.
///
/// Positives are every unordered pair whose count multisets coincide;
/// negatives are an equally sized seeded sample of pairs with disjoint count
/// values.
pub fn concept_sharing_test<R: Rng + ?Sized>(
    lang: &Language,
    max_n: usize,
    rng: &mut R,
) -> Result<ConceptSharing> {
    let es = lang.entries();
    let counts: Vec<Vec<usize>> = es.iter().map(|e| e.meaning.counts()).collect();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..es.len() {
        for j in i + 1..es.len() {
            let (mut a, mut b) = (counts[i].clone(), counts[j].clone());
            a.sort_unstable();
            b.sort_unstable();
            if a == b {
                positives.push((i, j));
                continue;
            }
            let sa: BTreeSet<_> = counts[i].iter().collect();
            if counts[j].iter().all(|c| !sa.contains(c)) {
                negatives.push((i, j));
            }
        }
    }
    if positives.len() < 2 || negatives.len() < positives.len() {
        return Err(Error::Refused(format!(
            "concept sharing needs at least 2 positive pairs and as many negatives; found {} positive, {} negative",
            positives.len(),
            negatives.len()
        )));
    }
    let sampled: Vec<(usize, usize)> = negatives
        .choose_multiple(rng, positives.len())
        .copied()
        .collect();
    let pairs: Vec<((usize, usize), f64)> = positives
        .iter()
        .map(|&p| (p, 1.0))
        .chain(sampled.iter().map(|&p| (p, 0.0)))
        .collect();
    let indicator: Vec<f64> = pairs.iter().map(|(_, s)| *s).collect();
    let by_ngram = (1..=max_n)
        .map(|n| {
            let sims: Vec<f64> = pairs
                .iter()
                .map(|((i, j), _)| ngram_overlap(&es[*i].message, &es[*j].message, n))
                .collect();
            Ok((n, spearman(&sims, &indicator)?))
        })
        .collect::<Result<_>>()?;
    Ok(ConceptSharing {
        positive_pairs: positives.len(),
        negative_pairs: sampled.len(),
        by_ngram,
    })
}
