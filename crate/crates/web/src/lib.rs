//! WebAssembly bindings for the static demo page in `www/`.

use serde_json::{json, Map, Value};
use wasm_bindgen::prelude::*;

use numgame::meanings::{enumerate_meanings, GameConfig, MeaningSequence};
use numgame::metrics::{
    concept_sharing_test, make_compositional, make_holistic, make_positional, parse_message,
    render_message, toposim_all, Language, LanguageEntry,
};
use numgame::rng::RunRng;

/// Larger spaces make the pairwise metrics too slow for a page.
pub const MAX_DEMO_MEANINGS: usize = 400;

pub fn language_csv(lang: &Language) -> Result<String, String> {
    let mut out = String::from("meaning_sequence,message\n");
    for e in lang.entries() {
        let msg = render_message(&e.message).map_err(|e| e.to_string())?;
        out.push_str(&format!("{},{msg}\n", e.meaning.as_str()));
    }
    Ok(out)
}

pub fn parse_language(csv_text: &str) -> Result<Language, String> {
    let mut entries = Vec::new();
    for (i, line) in csv_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("meaning")) {
            continue;
        }
        let (m, msg) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected meaning,message", i + 1))?;
        entries.push(LanguageEntry {
            meaning: MeaningSequence::parse(m.trim()).map_err(|e| format!("line {}: {e}", i + 1))?,
            message: parse_message(msg.trim()).map_err(|e| format!("line {}: {e}", i + 1))?,
        });
    }
    if entries.len() > MAX_DEMO_MEANINGS {
        return Err(format!("at most {MAX_DEMO_MEANINGS} meanings"));
    }
    Language::new(entries).map_err(|e| e.to_string())
}

pub fn reference(
    kind: &str,
    num_types: usize,
    max_count: usize,
    vocab_size: usize,
    message_length: usize,
    seed: u64,
) -> Result<String, String> {
    let game = GameConfig {
        num_object_types: num_types,
        max_count,
        message_length,
        vocab_size,
        ..GameConfig::default()
    };
    let space = enumerate_meanings(&game, MAX_DEMO_MEANINGS).map_err(|e| e.to_string())?;
    let mut rng = RunRng::new(seed).stream("demo");
    let lang = match kind {
        "compositional" => make_compositional(&space, max_count, vocab_size, &mut rng),
        "positional" => make_positional(&space, max_count, vocab_size, &mut rng),
        "holistic" => make_holistic(&space, vocab_size, message_length, &mut rng),
        other => return Err(format!("unknown language kind {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    language_csv(&lang)
}

pub fn score(csv_text: &str, seed: u64) -> Result<Value, String> {
    let lang = parse_language(csv_text)?;
    if lang.len() < 3 {
        return Err("scoring needs at least 3 meanings".into());
    }
    let toposim: Map<String, Value> = toposim_all(&lang)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(p, rho)| (p.name().to_string(), json!(rho)))
        .collect();
    let significance = match concept_sharing_test(&lang, 2, &mut RunRng::new(seed).stream("negatives")) {
        Ok(t) => json!({
            "positive_pairs": t.positive_pairs,
            "by_ngram": t
                .by_ngram
                .iter()
                .map(|(n, c)| json!({"n": n, "rho": c.rho(), "p_value": c.p_value()}))
                .collect::<Vec<_>>(),
        }),
        Err(e) => json!({"unavailable": e.to_string()}),
    };
    Ok(json!({"meanings": lang.len(), "toposim": toposim, "significance": significance}))
}

pub fn grid(csv_text: &str) -> Result<String, String> {
    let lang = parse_language(csv_text)?;
    let max_count = lang
        .entries()
        .iter()
        .flat_map(|e| e.meaning.counts())
        .max()
        .unwrap_or(0);
    lang.grid(max_count)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| "the grid needs exactly two object types".to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// A reference language as CSV. `kind` is `compositional`, `positional` or
/// `holistic`.
#[wasm_bindgen]
pub fn reference_language(
    kind: &str,
    num_types: usize,
    max_count: usize,
    vocab_size: usize,
    message_length: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(reference(kind, num_types, max_count, vocab_size, message_length, seed))
}

/// Topographic similarity under all four metric pairs plus the
/// shared-numeral test when it applies, as JSON.
#[wasm_bindgen]
pub fn score_language(csv_text: &str, seed: u64) -> Result<String, JsError> {
    js(score(csv_text, seed).map(|v| v.to_string()))
}

/// Count-by-count table of a two-type language.
#[wasm_bindgen]
pub fn language_grid(csv_text: &str) -> Result<String, JsError> {
    js(grid(csv_text))
}
