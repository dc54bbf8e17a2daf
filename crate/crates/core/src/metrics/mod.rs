//! Language tables, reference languages and compositionality metrics.

mod distance;
mod language;
mod probability;
mod reference;
mod stats;
mod topsim;

pub use distance::{
    bleu_distance, bleu_similarity, edit_distance, edit_distance_str, euclidean_distance,
    hamming_distance, ngram_overlap, DEFAULT_BLEU_WEIGHTS,
};
pub use language::{parse_message, render_message, symbol_char, Language, LanguageEntry, SYMBOL_ALPHABET};
pub use probability::{aligned_language_log_prob, language_log_prob, MAX_ALIGN_VOCAB};
pub use reference::{make_compositional, make_holistic, make_positional, scramble};
pub use stats::{average_ranks, median, spearman, Correlation};
pub use topsim::{
    concept_sharing_test, pairwise_distances, topographic_similarity, toposim_all, ConceptSharing,
    MeaningMetric, MessageMetric, MetricPair,
};
