//! `bba`: generate, slice, minimize, compare and check LTSs of the BBA*
//! consensus model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bba_core::check::{run_suite_with, SuiteOptions};
use bba_core::equiv::{equivalent, minimize, Relation};
use bba_core::explore::{deadlocks, generate, product, ExploreError, Limits};
use bba_core::lts::{
    hide, hide_all_but, normalize, read_aut, rename, stats, write_aut, write_dot, AutError,
    LabelMatcher, Lts, RenameRules, SliceError,
};
use bba_core::model::{build_network, Config, ConfigError, ModelError, Style};
use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "bba",
    version,
    about = "Model and verification toolkit for the BBA* agreement protocol"
)]
struct Cli {
    /// Worker threads for generation (default: one per core).
    #[arg(long, global = true, value_name = "K")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Number of nodes.
    #[arg(long)]
    nodes: Option<u8>,
    /// Number of honest nodes (default: all).
    #[arg(long)]
    honest: Option<u8>,
    /// Vote threshold (default: 3, capped by the node count).
    #[arg(long)]
    threshold: Option<u8>,
    #[arg(long, value_parser = parse_style)]
    style: Option<Style>,
    /// JSON configuration; explicit flags override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = Limits::default().max_states)]
    max_states: usize,
    #[arg(long, default_value_t = Limits::default().max_seconds)]
    max_seconds: u64,
}

fn parse_style(s: &str) -> Result<Style, ConfigError> {
    s.parse()
}

fn parse_relation(s: &str) -> Result<Relation, bba_core::equiv::EquivError> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Generate the LTS of a configuration.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print state, transition, label and deadlock counts.
    Stats { input: PathBuf },
    /// List deadlock states with shortest traces; exit 1 if there are any.
    Deadlocks { input: PathBuf },
    /// Hide labels matching any pattern, or all labels but those matching --keep.
    Hide {
        #[arg(long = "pattern", value_name = "RE", required_unless_present = "keep")]
        patterns: Vec<String>,
        #[arg(long, value_name = "RE", conflicts_with = "patterns")]
        keep: Vec<String>,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rename labels with ordered `RE=>TEMPLATE` rules.
    Rename {
        #[arg(long = "rule", value_name = "RE=>TEMPLATE", required = true)]
        rules: Vec<String>,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Quotient by strong or branching bisimulation.
    Minimize {
        #[arg(long, value_parser = parse_relation, default_value = "branching")]
        relation: Relation,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decide bisimilarity; exit 0 when equal, 1 when distinct.
    Compare {
        #[arg(long, value_parser = parse_relation, default_value = "branching")]
        relation: Relation,
        a: PathBuf,
        b: PathBuf,
        /// Also write the verdict as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Parallel composition synchronizing on the given gates.
    Product {
        #[arg(long, value_delimiter = ',', value_name = "GATE,...")]
        sync: Vec<String>,
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the property suite; exit 1 if a property fails.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
        /// Directory of frozen slice baselines.
        #[arg(long, value_name = "DIR", default_value = "baselines")]
        baselines: PathBuf,
        /// Write missing baselines.
        #[arg(long)]
        freeze: bool,
    },
    /// Render an LTS as a DOT digraph.
    ExportDot {
        #[arg(long)]
        deadlocks_red: bool,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Aut {
        path: PathBuf,
        #[source]
        source: AutError,
    },
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot start {0} workers: {1}")]
    Pool(usize, rayon::ThreadPoolBuildError),
}

/// Outcome of a command that completed: success or a negative verdict.
enum Verdict {
    Ok,
    Failed,
}

fn load(path: &Path) -> Result<Lts, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    read_aut(&bytes).map_err(|source| CliError::Aut {
        path: path.into(),
        source,
    })
}

fn save(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

impl ModelArgs {
    fn config(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                Config::from_json(&text)?
            }
            None => {
                let n = self.nodes.unwrap_or(Config::default().n);
                Config {
                    n,
                    h: n,
                    t: Config::default_threshold(n),
                    ..Config::default()
                }
            }
        };
        if let Some(n) = self.nodes {
            cfg.n = n;
        }
        if let Some(h) = self.honest {
            cfg.h = h;
        }
        if let Some(t) = self.threshold {
            cfg.t = t;
        }
        if let Some(style) = self.style {
            cfg.style = style;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn limits(&self) -> Limits {
        Limits {
            max_states: self.max_states,
            max_seconds: self.max_seconds,
        }
    }
}

fn run(command: Command) -> Result<Verdict, CliError> {
    match command {
        Command::Generate { model, output } => {
            let cfg = model.config()?;
            let l = generate(&build_network(&cfg)?, model.limits())?;
            save(&output, &write_aut(&l))?;
            println!(
                "{} states, {} transitions",
                l.states(),
                l.transitions().len()
            );
        }
        Command::Stats { input } => {
            let s = stats(&load(&input)?);
            println!("states: {}", s.states);
            println!("transitions: {}", s.transitions);
            println!("visible labels: {}", s.distinct_visible_labels);
            println!("tau transitions: {}", s.tau_transitions);
            println!("deadlock states: {}", s.deadlock_states);
        }
        Command::Deadlocks { input } => {
            let found = deadlocks(&load(&input)?);
            if found.is_empty() {
                println!("no deadlocks");
                return Ok(Verdict::Ok);
            }
            for (s, trace) in &found {
                println!("state {s}: {trace}");
            }
            return Ok(Verdict::Failed);
        }
        Command::Hide {
            patterns,
            keep,
            input,
            output,
        } => {
            let l = load(&input)?;
            let hidden = if keep.is_empty() {
                hide(&l, &LabelMatcher::new(&patterns)?)?
            } else {
                hide_all_but(&l, &LabelMatcher::new(&keep)?)?
            };
            save(&output, &write_aut(&normalize(&hidden)))?;
        }
        Command::Rename {
            rules,
            input,
            output,
        } => {
            let rules = rules
                .iter()
                .map(|r| RenameRules::parse_rule(r))
                .collect::<Result<Vec<_>, _>>()?;
            let renamed = rename(&load(&input)?, &RenameRules::new(&rules)?)?;
            save(&output, &write_aut(&normalize(&renamed)))?;
        }
        Command::Minimize {
            relation,
            input,
            output,
        } => {
            let l = load(&input)?;
            let (q, _) = minimize(&l, relation);
            info!(
                "{relation} quotient: {} -> {} states",
                l.states(),
                q.states()
            );
            save(&output, &write_aut(&q))?;
        }
        Command::Compare {
            relation,
            a,
            b,
            json,
        } => {
            let v = equivalent(&load(&a)?, &load(&b)?, relation);
            if let Some(path) = json {
                save(&path, serde_json::to_string_pretty(&v)?.as_bytes())?;
            }
            if v.equal {
                println!("equal ({relation})");
                return Ok(Verdict::Ok);
            }
            let trace = v.diagnostic_trace.unwrap_or_default();
            let round = v.round.map_or("?".into(), |r| r.to_string());
            println!(
                "distinct ({relation}): separated in round {round}, after [{}]",
                trace.join("; ")
            );
            return Ok(Verdict::Failed);
        }
        Command::Product { sync, a, b, output } => {
            let p = product(&load(&a)?, &load(&b)?, &sync);
            save(&output, &write_aut(&p))?;
            println!(
                "{} states, {} transitions",
                p.states(),
                p.transitions().len()
            );
        }
        Command::Check {
            model,
            json,
            baselines,
            freeze,
        } => {
            let cfg = model.config()?;
            let opts = SuiteOptions {
                limits: model.limits(),
                baselines: Some(baselines),
                freeze,
                ..Default::default()
            };
            let report = run_suite_with(&cfg, &opts);
            print!("{}", report.table());
            if let Some(path) = json {
                save(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            }
            if !report.passed() {
                return Ok(Verdict::Failed);
            }
        }
        Command::ExportDot {
            deadlocks_red,
            input,
            output,
        } => {
            save(&output, &write_dot(&load(&input)?, deadlocks_red))?;
        }
    }
    Ok(Verdict::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BBA_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {}", CliError::Pool(jobs, e));
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
