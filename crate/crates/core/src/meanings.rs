//! Meaning spaces: multisets of objects, their encodings, splits and
//! distractor draws.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Largest meaning space [`enumerate_meanings`] builds unless told otherwise.
pub const DEFAULT_MEANING_CAP: usize = 1_000_000;

/// Count characters used in meaning sequences: `0-9` then `a-z`.
const COUNT_DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// A shuffled sequence of one-hot object vectors.
    #[default]
    SetSequence,
    /// One vector of concatenated one-hot count blocks.
    LinearCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub num_object_types: usize,
    pub max_count: usize,
    pub message_length: usize,
    pub vocab_size: usize,
    pub num_distractors: usize,
    pub representation: Representation,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            num_object_types: 2,
            max_count: 5,
            message_length: 4,
            vocab_size: 10,
            num_distractors: 4,
            representation: Representation::SetSequence,
        }
    }
}

impl GameConfig {
    /// Checks hard invariants and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        contract!(
            self.num_object_types > 0
                && self.max_count > 0
                && self.message_length > 0
                && self.num_distractors > 0,
            "game config fields must be positive: {self:?}"
        );
        contract!(self.vocab_size >= 2, "vocabulary needs at least 2 symbols");
        contract!(
            self.max_count < COUNT_DIGITS.len(),
            "max count {} exceeds the {} count digits available",
            self.max_count,
            COUNT_DIGITS.len() - 1
        );
        let mut warnings = Vec::new();
        let messages = (self.vocab_size as f64).powi(self.message_length as i32);
        let meanings = self.meaning_space_size() as f64;
        if messages < meanings {
            warnings.push(format!(
                "message space ({messages}) is smaller than meaning space ({meanings})"
            ));
        }
        Ok(warnings)
    }

    /// `(N_o + 1)^|O| - 1`, saturating.
    pub fn meaning_space_size(&self) -> usize {
        (self.max_count + 1)
            .checked_pow(self.num_object_types as u32)
            .map_or(usize::MAX, |n| n - 1)
    }

    /// Width of the linear-counts input vector.
    pub fn linear_width(&self) -> usize {
        self.num_object_types * (self.max_count + 1)
    }

    /// Longest object sequence a reconstruct listener may emit, plus stop.
    pub fn max_reconstruct_steps(&self) -> usize {
        self.max_count * self.num_object_types + 1
    }
}

/// A non-empty multiset of objects, stored as per-type counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeaningSet {
    counts: Vec<usize>,
}

impl MeaningSet {
    pub fn new(counts: Vec<usize>, max_count: usize) -> Result<Self> {
        contract!(!counts.is_empty(), "meaning with no object types");
        contract!(
            counts.iter().any(|&c| c > 0),
            "the empty set is not a meaning"
        );
        contract!(
            counts.iter().all(|&c| c <= max_count),
            "counts {counts:?} exceed max count {max_count}"
        );
        Ok(Self { counts })
    }

    /// Builds a meaning from its object list, e.g. `[0, 1, 0]` for `{A, B, A}`.
    pub fn from_objects(objects: &[usize], num_types: usize, max_count: usize) -> Result<Self> {
        let mut counts = vec![0; num_types];
        for &o in objects {
            contract!(o < num_types, "object type {o} >= {num_types}");
            counts[o] += 1;
        }
        Self::new(counts, max_count)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_types(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Objects in canonical type order: all A's, then all B's, ...
    pub fn canonical_objects(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| std::iter::repeat(t).take(c))
            .collect()
    }

    pub fn sequence(&self) -> MeaningSequence {
        MeaningSequence(
            self.counts
                .iter()
                .map(|&c| COUNT_DIGITS[c] as char)
                .collect(),
        )
    }

    /// Human form such as `3A2B`.
    pub fn label(&self) -> String {
        self.counts
            .iter()
            .enumerate()
            .map(|(t, c)| format!("{}{}", COUNT_DIGITS[*c] as char, object_name(t)))
            .collect()
    }
}

impl fmt::Display for MeaningSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Letter name of an object type: `A`, `B`, ... then `O26`, `O27`, ...
pub fn object_name(t: usize) -> String {
    if t < 26 {
        ((b'A' + t as u8) as char).to_string()
    } else {
        format!("O{t}")
    }
}

/// Concatenated count digits, e.g. `"32"` for `{A, A, A, B, B}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeaningSequence(String);

impl MeaningSequence {
    pub fn parse(s: &str) -> Result<Self> {
        contract!(!s.is_empty(), "empty meaning sequence");
        for b in s.bytes() {
            contract!(
                COUNT_DIGITS.contains(&b),
                "invalid count digit {:?} in meaning sequence {s:?}",
                b as char
            );
        }
        Ok(Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.0
            .bytes()
            .map(|b| COUNT_DIGITS.iter().position(|&d| d == b).expect("validated digit"))
            .collect()
    }

    pub fn to_meaning(&self, max_count: usize) -> Result<MeaningSet> {
        MeaningSet::new(self.counts(), max_count)
    }
}

impl fmt::Display for MeaningSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every non-empty count vector, in lexicographic order (first type most
/// significant).
pub fn enumerate_meanings(config: &GameConfig, cap: usize) -> Result<Vec<MeaningSet>> {
    config.validate()?;
    let size = config.meaning_space_size();
    if size > cap {
        return Err(Error::Refused(format!(
            "meaning space has {size} meanings; raise the cap to at least {size}"
        )));
    }
    let k = config.num_object_types;
    let base = config.max_count + 1;
    let mut out = Vec::with_capacity(size);
    let mut counts = vec![0; k];
    loop {
        // odometer increment, last type fastest
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            counts[i] += 1;
            if counts[i] < base {
                break;
            }
            counts[i] = 0;
        }
        out.push(MeaningSet {
            counts: counts.clone(),
        });
    }
}

/// Agent-facing form of a meaning.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedMeaning {
    /// Object type ids in presentation order; each stands for a one-hot row.
    Sequence(Vec<usize>),
    /// Concatenated one-hot count blocks.
    Linear(Vec<f64>),
}

impl EncodedMeaning {
    /// One-hot rows of a sequence encoding.
    pub fn one_hot_rows(&self, num_types: usize) -> Option<Vec<Vec<f64>>> {
        match self {
            EncodedMeaning::Sequence(ids) => Some(
                ids.iter()
                    .map(|&o| {
                        let mut v = vec![0.0; num_types];
                        v[o] = 1.0;
                        v
                    })
                    .collect(),
            ),
            EncodedMeaning::Linear(_) => None,
        }
    }
}

/// Encodes a meaning for an agent. Sequence order is shuffled with `rng`.
pub fn encode_meaning<R: Rng + ?Sized>(
    meaning: &MeaningSet,
    config: &GameConfig,
    representation: Representation,
    rng: &mut R,
) -> EncodedMeaning {
    match representation {
        Representation::SetSequence => {
            let mut objects = meaning.canonical_objects();
            objects.shuffle(rng);
            EncodedMeaning::Sequence(objects)
        }
        Representation::LinearCounts => EncodedMeaning::Linear(linear_counts(meaning, config)),
    }
}

pub fn linear_counts(meaning: &MeaningSet, config: &GameConfig) -> Vec<f64> {
    let block = config.max_count + 1;
    let mut v = vec![0.0; config.linear_width()];
    for (t, &c) in meaning.counts().iter().enumerate() {
        v[t * block + c] = 1.0;
    }
    v
}

/// Seeded split into `(train, eval)` with `round(ratio * n)` training meanings.
pub fn split_dataset<R: Rng + ?Sized>(
    meanings: &[MeaningSet],
    ratio: f64,
    rng: &mut R,
) -> Result<(Vec<MeaningSet>, Vec<MeaningSet>)> {
    contract!(
        ratio > 0.0 && ratio < 1.0,
        "split ratio {ratio} outside (0, 1)"
    );
    if meanings.len() < 2 {
        return Err(Error::Refused(format!(
            "cannot split {} meaning(s); need at least 2",
            meanings.len()
        )));
    }
    let n_train = (ratio * meanings.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..meanings.len()).collect();
    order.shuffle(rng);
    let mut train_ids = order[..n_train].to_vec();
    let mut eval_ids = order[n_train..].to_vec();
    train_ids.sort_unstable();
    eval_ids.sort_unstable();
    Ok((
        train_ids.iter().map(|&i| meanings[i].clone()).collect(),
        eval_ids.iter().map(|&i| meanings[i].clone()).collect(),
    ))
}

/// Candidate list for one Set-Select round.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub items: Vec<MeaningSet>,
    pub correct: usize,
}

/// Draws `k` distinct distractors from `pool` and inserts `target` at a
/// uniformly random slot.
pub fn sample_distractors<R: Rng + ?Sized>(
    target: &MeaningSet,
    pool: &[MeaningSet],
    k: usize,
    rng: &mut R,
) -> Result<Candidates> {
    let eligible: Vec<&MeaningSet> = pool.iter().filter(|m| *m != target).collect();
    if eligible.len() < k {
        return Err(Error::Refused(format!(
            "need {k} distractors but the pool has only {} meanings different from {target}; short by {}",
            eligible.len(),
            k - eligible.len()
        )));
    }
    let mut items: Vec<MeaningSet> = eligible
        .choose_multiple(rng, k)
        .map(|m| (*m).clone())
        .collect();
    let correct = rng.gen_range(0..=k);
    items.insert(correct, target.clone());
    Ok(Candidates { items, correct })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub train_ids: Vec<String>,
    pub eval_ids: Vec<String>,
}

impl SplitManifest {
    pub fn new(seed: u64, ratio: f64, train: &[MeaningSet], eval: &[MeaningSet]) -> Self {
        let ids = |ms: &[MeaningSet]| ms.iter().map(|m| m.sequence().to_string()).collect();
        Self {
            seed,
            ratio,
            train_ids: ids(train),
            eval_ids: ids(eval),
        }
    }
}

/// One row per meaning: `meaning_sequence,counts` with `;`-joined counts.
pub fn write_meanings_csv(path: &Path, meanings: &[MeaningSet]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["meaning_sequence", "counts"])?;
    for m in meanings {
        let counts: Vec<String> = m.counts().iter().map(usize::to_string).collect();
        w.write_record([m.sequence().to_string(), counts.join(";")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_meanings_csv(path: &Path, max_count: usize) -> Result<Vec<MeaningSet>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let counts = rec
            .get(1)
            .unwrap_or_default()
            .split(';')
            .map(|c| {
                c.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Contract(format!("bad count {c:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(MeaningSet::new(counts, max_count)?);
    }
    Ok(out)
}
