//! Speaker and listener networks.

mod encoder;
mod listener;
mod speaker;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::kernel::{argmax, softmax};
use crate::meanings::{linear_counts, EncodedMeaning, GameConfig, MeaningSet, Representation};
use crate::rng::gumbel;

pub use encoder::SetEncoder;
pub use listener::{Listener, MessageInput};
pub use speaker::{SpeakOutput, Speaker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub d_emb: usize,
    pub d_hid: usize,
    /// Gumbel-softmax temperature.
    pub temperature: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            d_emb: 64,
            d_hid: 128,
            temperature: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(
            self.d_emb > 0 && self.d_hid > 0,
            "agent widths must be positive"
        );
        contract!(
            self.temperature > 0.0 && self.temperature.is_finite(),
            "temperature must be positive, got {}",
            self.temperature
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    /// The listener regenerates the object sequence.
    Reconstruct,
    /// The listener picks the target among distractors.
    Select,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakMode {
    Greedy,
    Sample,
    GumbelSt,
}

/// A discrete message, optionally with the relaxed rows it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    symbols: Vec<usize>,
    relaxed: Option<Vec<Vec<f64>>>,
}

impl Message {
    pub fn new(symbols: Vec<usize>, vocab_size: usize) -> Result<Self> {
        contract!(!symbols.is_empty(), "empty message");
        contract!(
            symbols.iter().all(|&s| s < vocab_size),
            "message {symbols:?} has a symbol outside a vocabulary of {vocab_size}"
        );
        Ok(Self {
            symbols,
            relaxed: None,
        })
    }

    /// Hard symbols are the row argmaxes of `relaxed`.
    pub fn from_relaxed(relaxed: Vec<Vec<f64>>) -> Result<Self> {
        contract!(!relaxed.is_empty(), "empty message");
        for row in &relaxed {
            let s: f64 = row.iter().sum();
            contract!(
                (s - 1.0).abs() <= 1e-9 && row.iter().all(|&p| p >= 0.0),
                "relaxed row does not sum to 1 (sum {s})"
            );
        }
        Ok(Self {
            symbols: relaxed.iter().map(|r| argmax(r)).collect(),
            relaxed: Some(relaxed),
        })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn relaxed(&self) -> Option<&[Vec<f64>]> {
        self.relaxed.as_deref()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// One Gumbel-softmax draw: the hard symbol and the relaxed row
/// `softmax((logits + g) / tau)`.
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &[f64],
    tau: f64,
    rng: &mut R,
) -> (usize, Vec<f64>) {
    let noise: Vec<f64> = logits.iter().map(|_| gumbel(rng)).collect();
    let relaxed = relaxed_softmax(logits, &noise, tau);
    (argmax(&relaxed), relaxed)
}

/// `softmax((logits + noise) / tau)`.
pub fn relaxed_softmax(logits: &[f64], noise: &[f64], tau: f64) -> Vec<f64> {
    let noisy: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(&l, &g)| (l + g) / tau)
        .collect();
    softmax(&noisy)
}

/// Unshuffled encoding, used wherever results must not depend on order.
pub fn encode_canonical(meaning: &MeaningSet, config: &GameConfig) -> EncodedMeaning {
    match config.representation {
        Representation::SetSequence => EncodedMeaning::Sequence(meaning.canonical_objects()),
        Representation::LinearCounts => EncodedMeaning::Linear(linear_counts(meaning, config)),
    }
}
