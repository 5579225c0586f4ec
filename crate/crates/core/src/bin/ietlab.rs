//! `ietlab`: run scenarios and loop searches from the command line.
//!
//! Exit status: 0 when every hard gate passes, 1 when one fails, 2 for an
//! invalid scenario or arguments, 3 when a computation errors out.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ietlab::catalog;
use ietlab::iet::PermPair;
use ietlab::lab::{self, Loaded, Overrides, Run, Stage};
use ietlab::Error;

#[derive(Parser)]
#[command(name = "ietlab", version, about = "Renormalization experiments for interval exchanges and log-singular cocycles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the series tolerance of the correction.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Overrides the deepest renormalization level.
    #[arg(long = "level-cap", global = true)]
    level_cap: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search a Rauzy class for closed positive loops and write catalog.json.
    Mint {
        /// Catalog instance name, or bottom positions in top order such as 5,4,3,2,1.
        #[arg(long)]
        pair: String,
        /// Nodes expanded by the breadth-first search.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value_t = 8)]
        max_loops: usize,
    },
    /// Period data, self-similarity and kernel checks.
    Induct,
    /// Correction operator and growth profiles.
    Correct,
    /// Level diagnostics and exact renormalization checks.
    Diagnose,
    /// Rigidity towers, tightness, oscillation and histograms.
    Rigidity,
    /// The scenario pipeline over several catalog instances.
    Sweep,
    /// The full pipeline of a scenario; the bundled golden demo by default.
    Demo,
}

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_) | Error::Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Compute(other.to_string()),
        }
    }
}

fn load(cli: &Cli, required: bool) -> Result<Loaded, Failure> {
    let mut loaded = match &cli.scenario {
        Some(path) => Loaded::from_file(path)?,
        None if required => return Err(Failure::Usage("this subcommand needs --scenario <file>".into())),
        None => Loaded::demo(),
    };
    loaded.apply(&Overrides { seed: cli.seed, tol: cli.tol, level_cap: cli.level_cap });
    loaded.validate()?;
    Ok(loaded)
}

fn out_dir(cli: &Cli, name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("ietlab-{}", name.replace('/', "-"))))
}

fn report(run: &Run, dir: &Path) -> Result<bool, Failure> {
    for g in &run.summary.gates {
        eprintln!("{}", g.line());
    }
    run.write(dir)?;
    eprintln!("wrote {} (scenario hash {})", dir.display(), run.summary.hash);
    Ok(run.hard_failures().is_empty())
}

fn parse_pair(text: &str) -> Result<PermPair, Failure> {
    if let Ok(inst) = catalog::find(text) {
        return Ok(inst.pair());
    }
    let mono = text
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| Failure::Usage(format!("--pair {text:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PermPair::from_monodromy(&mono)?)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let stage = match cli.cmd {
        Cmd::Induct => Some(Stage::Induct),
        Cmd::Correct => Some(Stage::Correct),
        Cmd::Diagnose => Some(Stage::Diagnose),
        Cmd::Rigidity => Some(Stage::Rigidity),
        _ => None,
    };
    match &cli.cmd {
        Cmd::Mint { pair, budget, max_loops } => {
            let pair = parse_pair(pair)?;
            let found = lab::mint_instances(&pair, *budget, *max_loops);
            let dir = out_dir(cli, "mint");
            std::fs::create_dir_all(&dir).map_err(Error::from)?;
            let body = serde_json::to_vec_pretty(&found).map_err(Error::from)?;
            std::fs::write(dir.join("catalog.json"), body).map_err(Error::from)?;
            eprintln!("{} loops ({} hyperbolic), wrote {}", found.len(), found.iter().filter(|e| e.hyperbolic).count(), dir.display());
            Ok(true)
        }
        Cmd::Sweep => {
            let loaded = load(cli, true)?;
            let dir = out_dir(cli, &loaded.scenario.name);
            let results = lab::sweep(&loaded)?;
            let mut ok = true;
            let mut rows = Vec::new();
            for (name, r) in &results {
                match r {
                    Ok(run) => ok &= report(run, &dir.join(name))?,
                    Err(e) => {
                        eprintln!("FAIL {name}: {e}");
                        ok = false;
                    }
                }
                rows.push(lab::sweep_row(name, r));
            }
            std::fs::create_dir_all(&dir).map_err(Error::from)?;
            std::fs::write(dir.join("sweep.csv"), lab::sweep_table(&rows)?).map_err(Error::from)?;
            Ok(ok)
        }
        Cmd::Demo => {
            let loaded = load(cli, false)?;
            let run = lab::run(&loaded, None)?;
            report(&run, &out_dir(cli, &loaded.scenario.name))
        }
        _ => {
            let loaded = load(cli, true)?;
            let run = lab::run(&loaded, stage)?;
            report(&run, &out_dir(cli, &loaded.scenario.name))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
