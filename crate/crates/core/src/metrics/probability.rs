//! Probability of a whole language under a speaker.

use crate::agents::{encode_canonical, Speaker};
use crate::error::{contract, Error, Result};
use crate::meanings::EncodedMeaning;

use super::language::Language;

/// Largest vocabulary the symbol alignment will handle.
pub const MAX_ALIGN_VOCAB: usize = 20;

fn inputs_and_messages(
    speaker: &Speaker,
    lang: &Language,
) -> Result<(Vec<EncodedMeaning>, Vec<Vec<usize>>)> {
    let game = speaker.game();
    contract!(
        lang.message_length() == game.message_length,
        "language messages have length {}, speaker emits {}",
        lang.message_length(),
        game.message_length
    );
    contract!(
        lang.symbols_used() <= game.vocab_size,
        "language uses symbol {} outside a vocabulary of {}",
        lang.symbols_used() - 1,
        game.vocab_size
    );
    let meanings = lang.meanings(game.max_count)?;
    contract!(
        meanings.iter().all(|m| m.num_types() == game.num_object_types),
        "language meanings do not match the speaker's object types"
    );
    let inputs = meanings.iter().map(|m| encode_canonical(m, game)).collect();
    let messages = lang.entries().iter().map(|e| e.message.clone()).collect();
    Ok((inputs, messages))
}

/// `Σ_i log p(m_i | s_i)` with every message teacher-forced.
pub fn language_log_prob(speaker: &Speaker, lang: &Language) -> Result<f64> {
    let (inputs, messages) = inputs_and_messages(speaker, lang)?;
    speaker.log_prob(&inputs, &messages)
}

/// Log-probability of the language after renaming the symbols at each
/// position by the bijection the speaker likes best.
///
/// Symbols start out meaningless, so two tables that differ only in symbol
/// names at a position encode the same language. Positions are aligned left
/// to right; each step is an exact assignment problem given the already
/// renamed prefix. Returns the aligned log-probability and the per-position
/// renaming (`maps[k][old] = new`).
pub fn aligned_language_log_prob(
    speaker: &Speaker,
    lang: &Language,
) -> Result<(f64, Vec<Vec<usize>>)> {
    let (inputs, mut messages) = inputs_and_messages(speaker, lang)?;
    let v = speaker.game().vocab_size;
    if v > MAX_ALIGN_VOCAB {
        return Err(Error::Refused(format!(
            "symbol alignment supports vocabularies up to {MAX_ALIGN_VOCAB}, got {v}"
        )));
    }
    let mut total = 0.0;
    let mut maps = Vec::new();
    for k in 0..speaker.game().message_length {
        let dists = speaker.step_log_probs(&inputs, &messages)?;
        let mut score = vec![vec![0.0; v]; v];
        for (row, m) in messages.iter().enumerate() {
            for (b, s) in score[m[k]].iter_mut().enumerate() {
                *s += dists[k][row][b];
            }
        }
        let (best, map) = best_assignment(&score);
        total += best;
        for m in &mut messages {
            m[k] = map[m[k]];
        }
        maps.push(map);
    }
    Ok((total, maps))
}

/// Maximum-weight perfect matching of rows to columns by dynamic programming
/// over column subsets.
fn best_assignment(score: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = score.len();
    let full = 1usize << n;
    let mut dp = vec![f64::NEG_INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    dp[0] = 0.0;
    for mask in 0..full {
        if dp[mask] == f64::NEG_INFINITY {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == n {
            continue;
        }
        for col in 0..n {
            if mask & (1 << col) != 0 {
                continue;
            }
            let next = mask | (1 << col);
            let val = dp[mask] + score[row][col];
            if val > dp[next] {
                dp[next] = val;
                choice[next] = col;
            }
        }
    }
    let mut map = vec![0; n];
    let mut mask = full - 1;
    for row in (0..n).rev() {
        let col = choice[mask];
        map[row] = col;
        mask &= !(1 << col);
    }
    (dp[full - 1], map)
}
