//! Hand-built reference languages: compositional, positional, holistic and
//! partially scrambled mixtures.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::language::{Language, LanguageEntry};
use crate::error::{contract, Error, Result};
use crate::meanings::MeaningSet;

/// Spells each meaning digit-then-object, e.g. `4A2B`, through one random
/// injective relabeling of digits and object names onto symbols.
pub fn make_compositional<R: Rng + ?Sized>(
    meanings: &[MeaningSet],
    max_count: usize,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Language> {
    contract!(!meanings.is_empty(), "no meanings");
    let types = meanings[0].num_types();
    let needed = max_count + 1 + types;
    if vocab_size < needed {
        return Err(Error::Refused(format!(
            "compositional language needs {needed} symbols, vocabulary has {vocab_size}"
        )));
    }
    let mut symbols: Vec<usize> = (0..vocab_size).collect();
    symbols.shuffle(rng);
    let digit = &symbols[..=max_count];
    let object = &symbols[max_count + 1..needed];
    Language::from_pairs(meanings.iter().map(|m| {
        let msg = m
            .counts()
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| [digit[c], object[t]])
            .collect();
        (m.clone(), msg)
    }))
}

/// One symbol per object type: position `i` carries the count of type `i`
/// through its own random injective map.
pub fn make_positional<R: Rng + ?Sized>(
    meanings: &[MeaningSet],
    max_count: usize,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Language> {
    contract!(!meanings.is_empty(), "no meanings");
    if vocab_size < max_count + 1 {
        return Err(Error::Refused(format!(
            "positional language needs {} symbols per position, vocabulary has {vocab_size}",
            max_count + 1
        )));
    }
    let types = meanings[0].num_types();
    let maps: Vec<Vec<usize>> = (0..types)
        .map(|_| {
            let mut s: Vec<usize> = (0..vocab_size).collect();
            s.shuffle(rng);
            s.truncate(max_count + 1);
            s
        })
        .collect();
    Language::from_pairs(meanings.iter().map(|m| {
        let msg = m
            .counts()
            .iter()
            .enumerate()
            .map(|(t, &c)| maps[t][c])
            .collect();
        (m.clone(), msg)
    }))
}

fn decode(mut code: usize, vocab_size: usize, length: usize) -> Vec<usize> {
    let mut out = vec![0; length];
    for slot in out.iter_mut().rev() {
        *slot = code % vocab_size;
        code /= vocab_size;
    }
    out
}

/// `n` distinct messages drawn uniformly from `vocab^length`.
fn distinct_messages<R: Rng + ?Sized>(
    n: usize,
    vocab_size: usize,
    length: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let space = vocab_size.checked_pow(length as u32);
    if let Some(space) = space {
        if space < n {
            return Err(Error::Refused(format!(
                "message space {vocab_size}^{length} = {space} is smaller than {n} meanings"
            )));
        }
        if space <= 1 << 24 {
            return Ok(index::sample(rng, space, n)
                .into_iter()
                .map(|c| decode(c, vocab_size, length))
                .collect());
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let m: Vec<usize> = (0..length).map(|_| rng.gen_range(0..vocab_size)).collect();
        if seen.insert(m.clone()) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Messages drawn uniformly without replacement.
pub fn make_holistic<R: Rng + ?Sized>(
    meanings: &[MeaningSet],
    vocab_size: usize,
    length: usize,
    rng: &mut R,
) -> Result<Language> {
    contract!(!meanings.is_empty(), "no meanings");
    contract!(vocab_size >= 1 && length >= 1, "empty message space");
    let msgs = distinct_messages(meanings.len(), vocab_size, length, rng)?;
    Language::from_pairs(meanings.iter().cloned().zip(msgs))
}

/// Replaces the messages of a random `fraction` of meanings with fresh
/// messages not used elsewhere, interpolating between `base` and holistic.
pub fn scramble<R: Rng + ?Sized>(
    base: &Language,
    fraction: f64,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Language> {
    contract!(
        (0.0..=1.0).contains(&fraction),
        "scramble fraction {fraction} outside [0, 1]"
    );
    let n = base.len();
    let k = (fraction * n as f64).round() as usize;
    let len = base.message_length();
    let mut used: HashSet<Vec<usize>> = base.entries().iter().map(|e| e.message.clone()).collect();
    let picked = index::sample(rng, n, k).into_vec();
    let mut entries: Vec<LanguageEntry> = base.entries().to_vec();
    for i in picked {
        let mut attempts = 0;
        loop {
            let m: Vec<usize> = (0..len).map(|_| rng.gen_range(0..vocab_size)).collect();
            attempts += 1;
            if used.insert(m.clone()) || attempts > 10_000 {
                entries[i].message = m;
                break;
            }
        }
    }
    Language::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanings::{enumerate_meanings, GameConfig, DEFAULT_MEANING_CAP};
    use crate::metrics::language::render_message;
    use crate::rng::RunRng;

    fn space() -> Vec<MeaningSet> {
        enumerate_meanings(&GameConfig::default(), DEFAULT_MEANING_CAP).unwrap()
    }

    #[test]
    fn compositional_spells_digit_object_pairs() {
        let mut rng = RunRng::new(1).stream("language");
        let lang = make_compositional(&space(), 5, 10, &mut rng).unwrap();
        assert_eq!(lang.message_length(), 4);
        assert_eq!(lang.distinct_messages(), 35);
        // object symbols sit at odd positions and never vary
        let e = lang.entries();
        assert!(e.iter().all(|x| x.message[1] == e[0].message[1] && x.message[3] == e[0].message[3]));
        assert!(make_compositional(&space(), 5, 7, &mut rng).is_err());
    }

    #[test]
    fn relabeling_example_from_the_table() {
        // A→s, B→r, 4→w, 2→y gives "wsyr" for 4A2B
        let m = MeaningSet::new(vec![4, 2], 5).unwrap();
        let mut rng = RunRng::new(1).stream("language");
        let lang = make_compositional(&[m.clone()], 5, 26, &mut rng).unwrap();
        let msg = lang.message_for(&m.sequence()).unwrap().to_vec();
        let (s, r, w, y) = (18, 17, 22, 24);
        let mut map: Vec<usize> = (0..26).collect();
        map[msg[0]] = w;
        map[msg[1]] = s;
        map[msg[2]] = y;
        map[msg[3]] = r;
        let relabeled = lang.relabel(&map).unwrap();
        assert_eq!(render_message(relabeled.message_for(&m.sequence()).unwrap()).unwrap(), "wsyr");
    }

    #[test]
    fn holistic_messages_are_distinct() {
        let mut rng = RunRng::new(4).stream("language");
        let lang = make_holistic(&space(), 10, 4, &mut rng).unwrap();
        assert_eq!(lang.distinct_messages(), 35);
        assert!(make_holistic(&space(), 2, 5, &mut rng).is_err());
        let tight = make_holistic(&space(), 6, 2, &mut rng).unwrap();
        assert_eq!(tight.distinct_messages(), 35);
    }

    #[test]
    fn positional_uses_one_symbol_per_type() {
        let mut rng = RunRng::new(2).stream("language");
        let lang = make_positional(&space(), 5, 10, &mut rng).unwrap();
        assert_eq!(lang.message_length(), 2);
        assert_eq!(lang.distinct_messages(), 35);
    }

    #[test]
    fn scramble_endpoints() {
        let mut rng = RunRng::new(3).stream("language");
        let base = make_positional(&space(), 5, 10, &mut rng).unwrap();
        assert_eq!(scramble(&base, 0.0, 10, &mut rng).unwrap(), base);
        let all = scramble(&base, 1.0, 10, &mut rng).unwrap();
        let same = base
            .entries()
            .iter()
            .zip(all.entries())
            .filter(|(a, b)| a.message == b.message)
            .count();
        assert_eq!(same, 0);
    }
}
