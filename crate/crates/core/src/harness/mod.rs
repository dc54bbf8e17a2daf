//! Manifest-driven experiment runner.

mod manifest;
mod output;
mod recipes;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub use manifest::{LearningSpeedOptions, ProbeOptions, Recipe, RunManifest};
pub use output::{
    curves_from_stats, dump_language, emit_curves, write_json, write_language, Aggregate, Curve,
    MetricAggregate, SeedSummary,
};

use crate::error::{Error, Result};

/// Environment variable overriding the number of seeds trained concurrently.
pub const WORKERS_ENV: &str = "NUMGAME_WORKERS";

/// Worker count from `NUMGAME_WORKERS`, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Refused(format!(
                "{WORKERS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Artifacts of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub aggregate: Aggregate,
    pub warnings: Vec<String>,
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Refused(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write-test");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| Error::Refused(format!("{} is not writable: {e}", dir.display())))
}

/// Keeps the series that every seed filled with at least one point.
fn common_curves(curves: Vec<Curve>, seeds: &[u64]) -> (Vec<Curve>, Vec<String>) {
    let mut filled: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    for c in &curves {
        let e = filled.entry(c.series.as_str()).or_default();
        if !c.points.is_empty() {
            e.insert(c.seed);
        }
    }
    let keep: BTreeSet<String> = filled
        .iter()
        .filter(|(_, s)| s.len() == seeds.len())
        .map(|(k, _)| k.to_string())
        .collect();
    let dropped = filled
        .keys()
        .filter(|k| !keep.contains(**k))
        .map(|k| k.to_string())
        .collect();
    let curves = curves.into_iter().filter(|c| keep.contains(&c.series)).collect();
    (curves, dropped)
}

/// Runs every seed of `manifest` and writes per-seed artifacts, the manifest
/// copy, `aggregate.json` and `curves.csv` under the recipe directory.
pub fn run_recipe(manifest: &RunManifest) -> Result<RunOutcome> {
    run_recipe_with(manifest, worker_count()?)
}

pub fn run_recipe_with(manifest: &RunManifest, workers: usize) -> Result<RunOutcome> {
    let warnings = manifest.validate()?;
    let dir = manifest.recipe_dir();
    prepare_dir(&dir)?;
    write_json(&dir.join("manifest.json"), manifest)?;

    let seeds = &manifest.seeds;
    let results: Mutex<Vec<Option<Result<recipes::SeedResult>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, seeds.len()) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("queue lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&seed) = seeds.get(i) else { break };
                let seed_dir = dir.join(format!("seed-{seed}"));
                let r = std::fs::create_dir_all(&seed_dir)
                    .map_err(Error::from)
                    .and_then(|_| recipes::run_seed(manifest, seed, &seed_dir));
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });

    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for r in results.into_inner().expect("results lock") {
        let (s, c) = r.expect("every seed ran")?;
        summaries.push(s);
        curves.extend(c);
    }
    let aggregate = Aggregate::new(manifest.recipe.name(), &manifest.version, seeds, &summaries);
    write_json(&dir.join("aggregate.json"), &aggregate)?;
    let mut warnings = warnings;
    let (curves, dropped) = common_curves(curves, seeds);
    if !dropped.is_empty() {
        warnings.push(format!(
            "series undefined for some seed, left out of curves.csv: {}",
            dropped.join(", ")
        ));
    }
    if !curves.is_empty() {
        emit_curves(&dir.join("curves.csv"), &curves)?;
    }
    Ok(RunOutcome {
        dir,
        aggregate,
        warnings,
    })
}
