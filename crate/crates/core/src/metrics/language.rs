use std::collections::HashSet;
use std::path::Path;

use crate::error::{contract, Error, Result};
use crate::meanings::{MeaningSet, MeaningSequence};

/// Characters used to print symbol ids: `a-z`, `A-Z`, `0-9`.
pub const SYMBOL_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

pub fn symbol_char(id: usize) -> Result<char> {
    SYMBOL_ALPHABET
        .get(id)
        .map(|&b| b as char)
        .ok_or_else(|| Error::Contract(format!("symbol id {id} has no printable form")))
}

pub fn render_message(symbols: &[usize]) -> Result<String> {
    symbols.iter().map(|&s| symbol_char(s)).collect()
}

pub fn parse_message(text: &str) -> Result<Vec<usize>> {
    text.chars()
        .map(|c| {
            SYMBOL_ALPHABET
                .iter()
                .position(|&b| b as char == c)
                .ok_or_else(|| Error::Contract(format!("unknown message symbol {c:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageEntry {
    pub meaning: MeaningSequence,
    pub message: Vec<usize>,
}

/// A table assigning one message to each meaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Language {
    entries: Vec<LanguageEntry>,
}

impl Language {
    pub fn new(entries: Vec<LanguageEntry>) -> Result<Self> {
        contract!(!entries.is_empty(), "empty language");
        let len = entries[0].message.len();
        let width = entries[0].meaning.len();
        let mut seen = HashSet::new();
        for e in &entries {
            contract!(
                e.message.len() == len,
                "message for {} has length {}, expected {len}",
                e.meaning,
                e.message.len()
            );
            contract!(
                e.meaning.len() == width,
                "meaning {} has {} digits, expected {width}",
                e.meaning,
                e.meaning.len()
            );
            contract!(
                seen.insert(e.meaning.clone()),
                "meaning {} appears twice",
                e.meaning
            );
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (MeaningSet, Vec<usize>)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(m, message)| LanguageEntry {
                    meaning: m.sequence(),
                    message,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[LanguageEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn message_length(&self) -> usize {
        self.entries[0].message.len()
    }

    /// Largest symbol id plus one.
    pub fn symbols_used(&self) -> usize {
        self.entries
            .iter()
            .flat_map(|e| e.message.iter())
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn message_for(&self, meaning: &MeaningSequence) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| &e.meaning == meaning)
            .map(|e| e.message.as_slice())
    }

    pub fn meanings(&self, max_count: usize) -> Result<Vec<MeaningSet>> {
        self.entries
            .iter()
            .map(|e| e.meaning.to_meaning(max_count))
            .collect()
    }

    /// Number of distinct messages.
    pub fn distinct_messages(&self) -> usize {
        self.entries
            .iter()
            .map(|e| &e.message)
            .collect::<HashSet<_>>()
            .len()
    }

    /// Applies `map` to every symbol.
    pub fn relabel(&self, map: &[usize]) -> Result<Language> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let message = e
                    .message
                    .iter()
                    .map(|&s| {
                        map.get(s)
                            .copied()
                            .ok_or_else(|| Error::Contract(format!("no relabel for symbol {s}")))
                    })
                    .collect::<Result<_>>()?;
                Ok(LanguageEntry {
                    meaning: e.meaning.clone(),
                    message,
                })
            })
            .collect::<Result<_>>()?;
        Language::new(entries)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["meaning_sequence", "message"])?;
        for e in &self.entries {
            w.write_record([e.meaning.as_str(), &render_message(&e.message)?])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Language> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let meaning = MeaningSequence::parse(rec.get(0).unwrap_or_default())?;
            let message = parse_message(rec.get(1).unwrap_or_default())?;
            entries.push(LanguageEntry { meaning, message });
        }
        Language::new(entries)
    }

    /// The table layout used for two object types: rows are counts of `B`,
    /// columns counts of `A`, the empty set's cell left blank. `None` when the
    /// language does not have exactly two object types.
    pub fn grid(&self, max_count: usize) -> Result<Option<String>> {
        if self.entries[0].meaning.len() != 2 {
            return Ok(None);
        }
        let width = self.message_length().max(2);
        let mut out = String::new();
        out.push_str(&format!("{:>4} |", ""));
        for a in 0..=max_count {
            out.push_str(&format!(" {:>width$} |", format!("{a}A")));
        }
        out.push('\n');
        for b in 0..=max_count {
            out.push_str(&format!("{:>4} |", format!("{b}B")));
            for a in 0..=max_count {
                let cell = if a == 0 && b == 0 {
                    String::new()
                } else {
                    let m = MeaningSet::new(vec![a, b], max_count)?;
                    match self.message_for(&m.sequence()) {
                        Some(msg) => render_message(msg)?,
                        None => String::new(),
                    }
                };
                out.push_str(&format!(" {cell:>width$} |"));
            }
            out.push('\n');
        }
        Ok(Some(out))
    }
}
