use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::agents::{encode_canonical, Speaker};
use crate::error::{Error, Result};
use crate::meanings::{EncodedMeaning, MeaningSet};
use crate::metrics::{median, Language};
use crate::training::EpochStats;

/// One named series of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub seed: u64,
    pub series: String,
    /// `(epoch or generation, value)`.
    pub points: Vec<(usize, f64)>,
}

/// `loss`, `train_acc` and, when present, `eval_acc` curves of one run.
pub fn curves_from_stats(seed: u64, prefix: &str, stats: &[EpochStats]) -> Vec<Curve> {
    let mut out = vec![
        Curve {
            seed,
            series: format!("{prefix}loss"),
            points: stats.iter().map(|s| (s.epoch, s.loss)).collect(),
        },
        Curve {
            seed,
            series: format!("{prefix}train_acc"),
            points: stats.iter().map(|s| (s.epoch, s.train_acc)).collect(),
        },
    ];
    if stats.iter().any(|s| s.eval_acc.is_some()) {
        out.push(Curve {
            seed,
            series: format!("{prefix}eval_acc"),
            points: stats
                .iter()
                .filter_map(|s| s.eval_acc.map(|v| (s.epoch, v)))
                .collect(),
        });
    }
    out
}

/// Long-format `seed,epoch,series,value` rows. Every seed must carry the same
/// series names and no curve may be empty.
pub fn emit_curves(path: &Path, curves: &[Curve]) -> Result<usize> {
    if curves.is_empty() {
        return Err(Error::Refused("no curves to emit".into()));
    }
    let mut by_seed: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    for c in curves {
        if c.points.is_empty() {
            return Err(Error::Refused(format!(
                "curve {} of seed {} has no points",
                c.series, c.seed
            )));
        }
        by_seed.entry(c.seed).or_default().insert(&c.series);
    }
    let mut sets = by_seed.values();
    let first = sets.next().expect("at least one seed");
    if let Some(other) = sets.find(|s| *s != first) {
        return Err(Error::Refused(format!(
            "inconsistent series across seeds: {first:?} vs {other:?}"
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "epoch", "series", "value"])?;
    let mut rows = 0;
    for c in curves {
        for (e, v) in &c.points {
            w.write_record([c.seed.to_string(), e.to_string(), c.series.clone(), v.to_string()])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Greedy message for every meaning, written as `<stem>.csv` plus a
/// `<stem>.grid.txt` table when there are two object types.
pub fn dump_language(
    speaker: &Speaker,
    meanings: &[MeaningSet],
    dir: &Path,
    stem: &str,
) -> Result<Language> {
    let game = speaker.game();
    let inputs: Vec<EncodedMeaning> = meanings.iter().map(|m| encode_canonical(m, game)).collect();
    let lang = Language::from_pairs(meanings.iter().cloned().zip(speaker.greedy_messages(&inputs)?))?;
    write_language(&lang, game.max_count, dir, stem)?;
    Ok(lang)
}

pub fn write_language(lang: &Language, max_count: usize, dir: &Path, stem: &str) -> Result<()> {
    lang.write_csv(&dir.join(format!("{stem}.csv")))?;
    if let Some(grid) = lang.grid(max_count)? {
        std::fs::write(dir.join(format!("{stem}.grid.txt")), grid)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Scalar results of one seed, keyed by metric name.
pub type SeedSummary = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAggregate {
    pub per_seed: Vec<Option<f64>>,
    /// Median of the defined per-seed values.
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub recipe: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricAggregate>,
}

impl Aggregate {
    pub fn new(recipe: &str, version: &str, seeds: &[u64], summaries: &[SeedSummary]) -> Self {
        let keys: BTreeSet<&String> = summaries.iter().flat_map(|s| s.keys()).collect();
        let metrics = keys
            .into_iter()
            .map(|k| {
                let per_seed: Vec<Option<f64>> =
                    summaries.iter().map(|s| s.get(k).copied().flatten()).collect();
                let defined: Vec<f64> = per_seed.iter().flatten().copied().collect();
                (
                    k.clone(),
                    MetricAggregate {
                        per_seed,
                        median: median(&defined),
                    },
                )
            })
            .collect();
        Self {
            recipe: recipe.to_string(),
            version: version.to_string(),
            seeds: seeds.to_vec(),
            metrics,
        }
    }

    pub fn median(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(|m| m.median)
    }
}
