use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use numgame::harness::{run_recipe, Recipe, RunManifest};
use numgame::metrics::{concept_sharing_test, toposim_all, Language};
use numgame::rng::RunRng;
use numgame::{Error, Result};

#[derive(Parser)]
#[command(name = "numgame", version, about = "Set-based language games and compositionality metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a recipe described by a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the manifest's recipe.
        #[arg(long)]
        recipe: Option<String>,
        /// Overrides the manifest's seeds; repeatable.
        #[arg(long = "seed", num_args = 1..)]
        seeds: Vec<u64>,
        /// Overrides the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a language CSV (`meaning_sequence,message`).
    Score {
        #[arg(long)]
        language: PathBuf,
        /// Comma-separated: toposim, significance.
        #[arg(long, value_delimiter = ',', default_value = "toposim")]
        metrics: Vec<String>,
        /// Seed for sampling negative pairs in the significance test.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest n-gram for the significance test.
        #[arg(long, default_value_t = 3)]
        max_ngram: usize,
    },
}

fn run(config: PathBuf, recipe: Option<String>, seeds: Vec<u64>, out: Option<PathBuf>) -> Result<Value> {
    let mut manifest = RunManifest::read(&config)?;
    if let Some(r) = recipe {
        manifest.recipe = r.parse::<Recipe>()?;
    }
    if !seeds.is_empty() {
        manifest.seeds = seeds;
    }
    if let Some(out) = out {
        manifest.output_dir = out;
    }
    let outcome = run_recipe(&manifest)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    Ok(json!({
        "dir": outcome.dir,
        "warnings": outcome.warnings,
        "aggregate": outcome.aggregate,
    }))
}

fn score(language: PathBuf, metrics: Vec<String>, seed: u64, max_ngram: usize) -> Result<Value> {
    let lang = Language::read_csv(&language)
        .map_err(|e| Error::Refused(format!("cannot load {}: {e}", language.display())))?;
    let mut report = Map::new();
    report.insert("meanings".into(), json!(lang.len()));
    for m in &metrics {
        match m.trim().to_ascii_lowercase().as_str() {
            "toposim" => {
                let rows: Map<String, Value> = toposim_all(&lang)?
                    .into_iter()
                    .map(|(pair, rho)| (pair.name().to_string(), json!(rho)))
                    .collect();
                report.insert("toposim".into(), Value::Object(rows));
            }
            "significance" => {
                let mut rng = RunRng::new(seed).stream("negatives");
                let t = concept_sharing_test(&lang, max_ngram, &mut rng)?;
                let by_ngram: Vec<Value> = t
                    .by_ngram
                    .iter()
                    .map(|(n, c)| json!({"n": n, "rho": c.rho(), "p_value": c.p_value()}))
                    .collect();
                report.insert(
                    "significance".into(),
                    json!({
                        "positive_pairs": t.positive_pairs,
                        "negative_pairs": t.negative_pairs,
                        "by_ngram": by_ngram,
                    }),
                );
            }
            other => {
                return Err(Error::Refused(format!(
                    "unknown metric {other:?}; known metrics: toposim, significance"
                )))
            }
        }
    }
    Ok(Value::Object(report))
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string()),
    };
    let result = match cli.command {
        Command::Run {
            config,
            recipe,
            seeds,
            out,
        } => run(config, recipe, seeds, out),
        Command::Score {
            language,
            metrics,
            seed,
            max_ngram,
        } => score(language, metrics, seed, max_ngram),
    };
    match result {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
