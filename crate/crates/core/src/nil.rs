//! Neural iterated learning: fresh agents each generation learn the previous
//! generation's language, play the game, and hand on their own language.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{encode_canonical, AgentConfig, GameKind, Listener, SpeakMode, Speaker};
use crate::error::{contract, Result};
use crate::kernel::Graph;
use crate::meanings::{EncodedMeaning, GameConfig, MeaningSet};
use crate::metrics::{
    aligned_language_log_prob, language_log_prob, toposim_all, Language, MetricPair,
};
use crate::rng::RunRng;
use crate::training::{train_pair, train_speaker, EpochStats, GameData, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NilConfig {
    pub generations: usize,
    /// Fixed number of supervised epochs in the speaker-learning phase.
    pub speaker_epochs: usize,
    /// Game-playing phase settings, shared by every generation.
    pub game: TrainConfig,
    /// Sample the handed-on messages instead of decoding greedily.
    pub sampled_transmission: bool,
}

impl Default for NilConfig {
    fn default() -> Self {
        Self {
            generations: 50,
            speaker_epochs: 30,
            game: TrainConfig::default(),
            sampled_transmission: false,
        }
    }
}

impl NilConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(self.generations > 0, "need at least one generation");
        contract!(self.speaker_epochs > 0, "speaker-learning epochs must be positive");
        self.game.validate()
    }
}

/// A fixed language whose probability is tracked across generations.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub language: Language,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub log_prob: f64,
    /// Log-probability after the best per-position renaming of symbols.
    pub aligned_log_prob: f64,
}

/// Everything needed to set up one chain besides the schedule.
#[derive(Debug, Clone)]
pub struct NilSetup {
    pub game: GameConfig,
    pub agent: AgentConfig,
    pub kind: GameKind,
    pub data: GameData,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    /// The language handed to the next generation.
    pub language: Language,
    pub toposim: Vec<(MetricPair, Option<f64>)>,
    /// Speaker-learning epochs; empty for generation 0.
    pub speaker_stats: Vec<EpochStats>,
    pub game_stats: Vec<EpochStats>,
    pub probes: Vec<(String, ProbeScore)>,
}

impl GenerationRecord {
    pub fn final_stats(&self) -> Option<&EpochStats> {
        self.game_stats.last()
    }

    pub fn rho(&self, pair: MetricPair) -> Option<f64> {
        self.toposim
            .iter()
            .find(|(p, _)| *p == pair)
            .and_then(|(_, r)| *r)
    }

    pub fn probe(&self, name: &str) -> Option<ProbeScore> {
        self.probes.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

/// The speaker's messages for `meanings`, greedy unless `sampled`.
pub fn transmit(
    speaker: &Speaker,
    meanings: &[MeaningSet],
    sampled: bool,
    rng: &RunRng,
) -> Result<Language> {
    let game = speaker.game();
    let inputs: Vec<EncodedMeaning> = meanings.iter().map(|m| encode_canonical(m, game)).collect();
    let messages = if sampled {
        let mut g = Graph::new();
        let p = speaker.params().bind_frozen(&mut g)?;
        let h = speaker.encode(&mut g, &p, &inputs)?;
        let mut stream = rng.stream("transmission");
        speaker.speak(&mut g, &p, h, SpeakMode::Sample, &mut stream)?.symbols
    } else {
        speaker.greedy_messages(&inputs)?
    };
    Language::from_pairs(meanings.iter().cloned().zip(messages))
}

pub fn score_probes(speaker: &Speaker, probes: &[Probe]) -> Result<Vec<(String, ProbeScore)>> {
    probes
        .iter()
        .map(|p| {
            Ok((
                p.name.clone(),
                ProbeScore {
                    log_prob: language_log_prob(speaker, &p.language)?,
                    aligned_log_prob: aligned_language_log_prob(speaker, &p.language)?.0,
                },
            ))
        })
        .collect()
}

/// One generation: fresh agents, speaker learning on `prev` (skipped when
/// `None`), game playing, then knowledge generation over the training
/// meanings.
pub fn run_generation(
    prev: Option<&Language>,
    setup: &NilSetup,
    config: &NilConfig,
    generation: usize,
    rng: &RunRng,
) -> Result<(Speaker, Listener, GenerationRecord)> {
    config.validate()?;
    let gen_rng = rng.child(&format!("generation-{generation}"));
    let mut init = gen_rng.stream("init");
    let mut speaker = Speaker::new(&setup.game, &setup.agent, &mut init);
    let mut listener = Listener::new(&setup.game, &setup.agent, setup.kind, &mut init);

    let speaker_stats = match prev {
        Some(lang) => {
            let pairs = setup
                .data
                .train
                .iter()
                .map(|m| {
                    lang.message_for(&m.sequence())
                        .map(|msg| (m.clone(), msg.to_vec()))
                        .ok_or_else(|| {
                            crate::Error::Contract(format!(
                                "previous language has no message for {m}"
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            train_speaker(
                &mut speaker,
                &pairs,
                config.speaker_epochs,
                &config.game,
                &gen_rng.child("speaker-learning"),
            )?
        }
        None => Vec::new(),
    };

    let game_stats = train_pair(
        &mut speaker,
        &mut listener,
        &setup.data,
        &config.game,
        &gen_rng.child("game-playing"),
    )?;

    let language = transmit(
        &speaker,
        &setup.data.train,
        config.sampled_transmission,
        &gen_rng,
    )?;
    let toposim = if language.len() >= 3 {
        toposim_all(&language)?
    } else {
        MetricPair::ALL.iter().map(|&p| (p, None)).collect()
    };
    let probes = score_probes(&speaker, &setup.probes)?;
    let record = GenerationRecord {
        generation,
        language,
        toposim,
        speaker_stats,
        game_stats,
        probes,
    };
    Ok((speaker, listener, record))
}

/// Chains `config.generations` generations, handing on only the language.
pub fn run_nil(setup: &NilSetup, config: &NilConfig, rng: &RunRng) -> Result<Vec<GenerationRecord>> {
    run_nil_with(setup, config, rng, |_| Ok(()))
}

/// [`run_nil`] with a callback after each generation, e.g. for progress
/// output or incremental persistence.
pub fn run_nil_with(
    setup: &NilSetup,
    config: &NilConfig,
    rng: &RunRng,
    mut on_generation: impl FnMut(&GenerationRecord) -> Result<()>,
) -> Result<Vec<GenerationRecord>> {
    config.validate()?;
    let mut records: Vec<GenerationRecord> = Vec::with_capacity(config.generations);
    for t in 0..config.generations {
        let prev = records.last().map(|r| &r.language);
        let (_, _, record) = run_generation(prev, setup, config, t, rng)?;
        on_generation(&record)?;
        records.push(record);
    }
    Ok(records)
}

/// `generation, <four topo-sim columns>, speaker_epochs, game_epochs,
/// train_acc, <probe columns>`.
pub fn write_generations_csv(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["generation".into()];
    header.extend(MetricPair::ALL.iter().map(|p| p.name().to_string()));
    header.extend(["speaker_epochs", "game_epochs", "train_acc"].map(String::from));
    if let Some(first) = records.first() {
        for (name, _) in &first.probes {
            header.push(format!("{name}.log_prob"));
            header.push(format!("{name}.aligned_log_prob"));
        }
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.generation.to_string()];
        row.extend(
            MetricPair::ALL
                .iter()
                .map(|&p| r.rho(p).map(|v| v.to_string()).unwrap_or_default()),
        );
        row.push(r.speaker_stats.len().to_string());
        row.push(r.game_stats.len().to_string());
        row.push(
            r.final_stats()
                .map(|s| s.train_acc.to_string())
                .unwrap_or_default(),
        );
        for (_, s) in &r.probes {
            row.push(s.log_prob.to_string());
            row.push(s.aligned_log_prob.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
