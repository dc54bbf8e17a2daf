use std::path::Path;

use super::manifest::{Recipe, RunManifest};
use super::output::{curves_from_stats, dump_language, write_json, write_language, Curve, SeedSummary};
use crate::agents::{Listener, Speaker};
use crate::error::{Error, Result};
use crate::meanings::{enumerate_meanings, split_dataset, MeaningSet, Representation, SplitManifest, DEFAULT_MEANING_CAP};
use crate::metrics::{
    concept_sharing_test, make_compositional, make_holistic, make_positional, scramble,
    toposim_all, Language, MetricPair,
};
use crate::nil::{run_nil, write_generations_csv, NilSetup, Probe};
use crate::rng::RunRng;
use crate::training::{
    epochs_to_reach, train_listener, train_pair, train_speaker_until, write_epoch_stats_csv,
    GameData,
};

pub(super) type SeedResult = (SeedSummary, Vec<Curve>);

pub(super) fn run_seed(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    match m.recipe {
        Recipe::Emerge => emerge(m, seed, dir),
        Recipe::Generalise => generalise(m, seed, dir),
        Recipe::LearningSpeed => learning_speed(m, seed, dir),
        Recipe::NilCompare => nil_compare(m, seed, dir),
        Recipe::LinearNil => linear_nil(m, seed, dir),
        Recipe::Significance => significance(m, seed, dir),
        Recipe::Toposim => toposim(m, seed, dir),
    }
}

fn space(m: &RunManifest) -> Result<Vec<MeaningSet>> {
    enumerate_meanings(&m.game, DEFAULT_MEANING_CAP)
}

fn put_toposim(summary: &mut SeedSummary, prefix: &str, lang: &Language) -> Result<()> {
    if lang.len() < 3 {
        return Ok(());
    }
    for (pair, rho) in toposim_all(lang)? {
        summary.insert(format!("{prefix}{}", pair.name()), rho);
    }
    Ok(())
}

fn emerge(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let space = space(m)?;
    let rng = RunRng::new(seed);
    let mut init = rng.stream("init");
    let mut speaker = Speaker::new(&m.game, &m.agent, &mut init);
    let mut listener = Listener::new(&m.game, &m.agent, m.game_kind, &mut init);
    let stats = train_pair(
        &mut speaker,
        &mut listener,
        &GameData::full(space.clone()),
        &m.train,
        &rng.child("train"),
    )?;
    write_epoch_stats_csv(&dir.join("epochs.csv"), &stats)?;
    let lang = dump_language(&speaker, &space, dir, "language")?;
    let mut s = SeedSummary::new();
    s.insert("train_acc".into(), stats.last().map(|x| x.train_acc));
    s.insert("epochs".into(), Some(stats.len() as f64));
    s.insert("distinct_messages".into(), Some(lang.distinct_messages() as f64));
    put_toposim(&mut s, "toposim.", &lang)?;
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, curves_from_stats(seed, "", &stats)))
}

fn generalise(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let space = space(m)?;
    let rng = RunRng::new(seed);
    let (train, eval) = split_dataset(&space, m.split_ratio, &mut rng.stream("split"))?;
    write_json(
        &dir.join("split.json"),
        &SplitManifest::new(seed, m.split_ratio, &train, &eval),
    )?;
    let mut init = rng.stream("init");
    let mut speaker = Speaker::new(&m.game, &m.agent, &mut init);
    let mut listener = Listener::new(&m.game, &m.agent, m.game_kind, &mut init);
    let data = GameData {
        train,
        eval,
        pool: space.clone(),
    };
    let stats = train_pair(&mut speaker, &mut listener, &data, &m.train, &rng.child("train"))?;
    write_epoch_stats_csv(&dir.join("epochs.csv"), &stats)?;
    dump_language(&speaker, &space, dir, "language")?;
    let mut s = SeedSummary::new();
    let last = stats.last();
    s.insert("train_acc".into(), last.map(|x| x.train_acc));
    s.insert("eval_acc".into(), last.and_then(|x| x.eval_acc));
    s.insert(
        "best_eval_acc".into(),
        stats.iter().filter_map(|x| x.eval_acc).reduce(f64::max),
    );
    s.insert("epochs".into(), Some(stats.len() as f64));
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, curves_from_stats(seed, "", &stats)))
}

/// The perfectly structured reference language whose messages have the
/// game's length, if one exists.
fn structured_language(m: &RunManifest, space: &[MeaningSet], rng: &RunRng) -> Result<Option<(String, Language)>> {
    let g = &m.game;
    let mut r = rng.stream("structured-language");
    if g.message_length == 2 * g.num_object_types && g.vocab_size >= g.max_count + 1 + g.num_object_types {
        Ok(Some(("compositional".into(), make_compositional(space, g.max_count, g.vocab_size, &mut r)?)))
    } else if g.message_length == g.num_object_types && g.vocab_size > g.max_count {
        Ok(Some(("positional".into(), make_positional(space, g.max_count, g.vocab_size, &mut r)?)))
    } else {
        Ok(None)
    }
}

fn fixed_languages(
    m: &RunManifest,
    space: &[MeaningSet],
    scrambles: &[f64],
    rng: &RunRng,
) -> Result<Vec<(String, Language)>> {
    let g = &m.game;
    let mut out = Vec::new();
    if let Some((name, base)) = structured_language(m, space, rng)? {
        for &f in scrambles {
            let lang = scramble(&base, f, g.vocab_size, &mut rng.stream(&format!("scramble-{f}")))?;
            out.push((format!("scramble-{f}"), lang));
        }
        out.insert(0, (name, base));
    }
    let holistic = make_holistic(space, g.vocab_size, g.message_length, &mut rng.stream("holistic"))?;
    out.push(("holistic".into(), holistic));
    Ok(out)
}

fn pairs_of(lang: &Language, max_count: usize) -> Result<Vec<(MeaningSet, Vec<usize>)>> {
    lang.entries()
        .iter()
        .map(|e| Ok((e.meaning.to_meaning(max_count)?, e.message.clone())))
        .collect()
}

fn learning_speed(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let space = space(m)?;
    let rng = RunRng::new(seed);
    let opts = &m.learning_speed;
    let mut langs = fixed_languages(m, &space, &opts.scramble, &rng)?;
    if opts.emergent {
        let mut init = rng.stream("emergent-init");
        let mut speaker = Speaker::new(&m.game, &m.agent, &mut init);
        let mut listener = Listener::new(&m.game, &m.agent, m.game_kind, &mut init);
        let stats = train_pair(
            &mut speaker,
            &mut listener,
            &GameData::full(space.clone()),
            &m.train,
            &rng.child("emergent-train"),
        )?;
        write_epoch_stats_csv(&dir.join("emergent-epochs.csv"), &stats)?;
        let inputs: Vec<_> = space.iter().map(|x| crate::agents::encode_canonical(x, &m.game)).collect();
        let lang = Language::from_pairs(space.iter().cloned().zip(speaker.greedy_messages(&inputs)?))?;
        langs.push(("emergent".into(), lang));
    }
    let mut s = SeedSummary::new();
    let mut curves = Vec::new();
    for (name, lang) in &langs {
        write_language(lang, m.game.max_count, dir, &format!("{name}.language"))?;
        put_toposim(&mut s, &format!("{name}.rho."), lang)?;
        let pairs = pairs_of(lang, m.game.max_count)?;
        let mut init = rng.stream(&format!("{name}-init"));
        let mut listener = Listener::new(&m.game, &m.agent, m.game_kind, &mut init);
        let ls = train_listener(&mut listener, &pairs, &space, &m.train, &rng.child(&format!("{name}-listener")))?;
        write_epoch_stats_csv(&dir.join(format!("{name}.listener.csv")), &ls)?;
        s.insert(format!("{name}.listener_epochs"), epochs_to_reach(&ls, opts.level).map(|e| e as f64));
        curves.extend(curves_from_stats(seed, &format!("{name}.listener."), &ls));
        if opts.speakers {
            let mut speaker = Speaker::new(&m.game, &m.agent, &mut init);
            let ss = train_speaker_until(
                &mut speaker,
                &pairs,
                m.train.max_epochs,
                Some(&m.train),
                &m.train,
                &rng.child(&format!("{name}-speaker")),
            )?;
            write_epoch_stats_csv(&dir.join(format!("{name}.speaker.csv")), &ss)?;
            s.insert(format!("{name}.speaker_epochs"), epochs_to_reach(&ss, opts.level).map(|e| e as f64));
            curves.extend(curves_from_stats(seed, &format!("{name}.speaker."), &ss));
        }
    }
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, curves))
}

fn nil_curves(seed: u64, records: &[crate::nil::GenerationRecord]) -> Vec<Curve> {
    let mut curves: Vec<Curve> = MetricPair::ALL
        .iter()
        .map(|&p| Curve {
            seed,
            series: p.name().to_string(),
            points: records
                .iter()
                .filter_map(|r| r.rho(p).map(|v| (r.generation, v)))
                .collect(),
        })
        .collect();
    if let Some(first) = records.first() {
        for (name, _) in &first.probes {
            curves.push(Curve {
                seed,
                series: format!("probe.{name}.aligned_log_prob"),
                points: records
                    .iter()
                    .filter_map(|r| r.probe(name).map(|p| (r.generation, p.aligned_log_prob)))
                    .collect(),
            });
        }
    }
    curves
}

fn write_nil(dir: &Path, max_count: usize, records: &[crate::nil::GenerationRecord]) -> Result<()> {
    write_generations_csv(&dir.join("generations.csv"), records)?;
    let langs = dir.join("languages");
    std::fs::create_dir_all(&langs)?;
    for r in records {
        write_language(&r.language, max_count, &langs, &format!("generation-{:03}", r.generation))?;
    }
    Ok(())
}

fn nil_compare(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let space = space(m)?;
    let setup = NilSetup {
        game: m.game,
        agent: m.agent,
        kind: m.game_kind,
        data: GameData::full(space),
        probes: Vec::new(),
    };
    let records = run_nil(&setup, &m.nil_config(), &RunRng::new(seed))?;
    write_nil(dir, m.game.max_count, &records)?;
    // generation 0 is exactly a plainly trained pair on the same seed
    let (first, last) = (&records[0], records.last().expect("at least one generation"));
    let mut s = SeedSummary::new();
    for p in MetricPair::ALL {
        s.insert(format!("normal.{}", p.name()), first.rho(p));
        s.insert(format!("nil.{}", p.name()), last.rho(p));
        s.insert(
            format!("improvement.{}", p.name()),
            last.rho(p).zip(first.rho(p)).map(|(a, b)| a - b),
        );
    }
    s.insert("generations".into(), Some(records.len() as f64));
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, nil_curves(seed, &records)))
}

fn linear_nil(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let mut m = m.clone();
    m.game.representation = Representation::LinearCounts;
    let space = space(&m)?;
    let rng = RunRng::new(seed);
    let langs = fixed_languages(&m, &space, &m.probes.scramble, &rng.child("probes"))?;
    if langs.len() < 2 {
        return Err(Error::Refused(format!(
            "no perfectly structured probe exists for |M|={} with |O|={}; use |M| = |O| or 2|O|",
            m.game.message_length, m.game.num_object_types
        )));
    }
    let probes_dir = dir.join("probes");
    std::fs::create_dir_all(&probes_dir)?;
    let mut s = SeedSummary::new();
    let mut probes = Vec::new();
    for (name, lang) in langs {
        write_language(&lang, m.game.max_count, &probes_dir, &name)?;
        s.insert(
            format!("probe.{name}.rho"),
            crate::metrics::topographic_similarity(&lang, MetricPair::HAM_EDIT)?.rho(),
        );
        probes.push(Probe { name, language: lang });
    }
    let setup = NilSetup {
        game: m.game,
        agent: m.agent,
        kind: m.game_kind,
        data: GameData::full(space),
        probes,
    };
    let records = run_nil(&setup, &m.nil_config(), &rng)?;
    write_nil(dir, m.game.max_count, &records)?;
    let last = records.last().expect("at least one generation");
    for p in MetricPair::ALL {
        s.insert(format!("final.{}", p.name()), last.rho(p));
    }
    for (name, score) in &last.probes {
        s.insert(format!("probe.{name}.log_prob"), Some(score.log_prob));
        s.insert(format!("probe.{name}.aligned_log_prob"), Some(score.aligned_log_prob));
    }
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, nil_curves(seed, &records)))
}

fn reference_languages(m: &RunManifest, space: &[MeaningSet], rng: &RunRng) -> Result<Vec<(String, Language)>> {
    let g = &m.game;
    let mut out = Vec::new();
    let mut r = rng.stream("reference-languages");
    if g.vocab_size >= g.max_count + 1 + g.num_object_types {
        out.push(("compositional".into(), make_compositional(space, g.max_count, g.vocab_size, &mut r)?));
    }
    if g.vocab_size > g.max_count {
        out.push(("positional".into(), make_positional(space, g.max_count, g.vocab_size, &mut r)?));
    }
    out.push(("holistic".into(), make_holistic(space, g.vocab_size, g.message_length, &mut r)?));
    Ok(out)
}

fn toposim(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let space = space(m)?;
    let rng = RunRng::new(seed);
    let mut s = SeedSummary::new();
    for (name, lang) in reference_languages(m, &space, &rng)? {
        write_language(&lang, m.game.max_count, dir, &name)?;
        put_toposim(&mut s, &format!("{name}."), &lang)?;
    }
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, Vec::new()))
}

fn significance(m: &RunManifest, seed: u64, dir: &Path) -> Result<SeedResult> {
    let space = space(m)?;
    let rng = RunRng::new(seed);
    let mut s = SeedSummary::new();
    for (name, lang) in reference_languages(m, &space, &rng)? {
        write_language(&lang, m.game.max_count, dir, &name)?;
        let test = concept_sharing_test(&lang, 3, &mut rng.stream(&format!("{name}-negatives")))?;
        s.insert(format!("{name}.positive_pairs"), Some(test.positive_pairs as f64));
        for (n, c) in &test.by_ngram {
            s.insert(format!("{name}.bleu{n}.rho"), c.rho());
            s.insert(format!("{name}.bleu{n}.p"), c.p_value());
        }
    }
    write_json(&dir.join("metrics.json"), &s)?;
    Ok((s, Vec::new()))
}
