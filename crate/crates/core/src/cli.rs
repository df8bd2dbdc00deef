//! Command-line front end: `hp-prune <inspect|build|cluster|nn|prune|count>`.
//!
//! Machine-readable JSON goes to stdout, diagnostics to stderr. Exit codes:
//! 0 success, 1 usage, 2 data error, 3 evaluator failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use clap::{error::ErrorKind, Parser, Subcommand};
use serde_json::json;

use crate::cluster::{cluster, InitStrategy, DEFAULT_MAX_ITER};
use crate::cost::{self, percent};
use crate::driver::{self, DriverConfig, DEFAULT_LOSS_BUDGET};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, SubprocessEvaluator};
use crate::model::{load_model, ModelManifest};
use crate::pyramid::{build_index, build_layer, PyramidShape};
use crate::report::{read_report, write_report};
use crate::search::CandidateSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_EVALUATOR: i32 = 3;

pub const THREADS_ENV: &str = "HP_PRUNE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hp-prune",
    version,
    about = "Hybrid-pyramid filter pruning",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a model container and describe each layer's pyramid shape.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Build a layer's pyramids; prints the root-sorted index, or one
    /// pyramid's levels with --filter.
    Build {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        filter: Option<u32>,
    },
    /// Cluster a layer's filters and print the cluster set.
    Cluster {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        clusters: usize,
        /// Seeded-random initialisation (even-spaced otherwise).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Find the filter closest to --filter among the rest of its layer.
    Nn {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        filter: u32,
    },
    /// Prune every conv layer against an external evaluator.
    Prune {
        #[arg(long)]
        model: PathBuf,
        /// Shell command speaking the evaluator protocol.
        #[arg(long)]
        evaluator: String,
        /// Tolerated accuracy loss, in (0, 1).
        #[arg(long, default_value_t = DEFAULT_LOSS_BUDGET)]
        loss: f64,
        #[arg(long)]
        recluster_from_original: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Retraining epochs forwarded with each evaluation.
        #[arg(long, default_value_t = 1)]
        epochs: u32,
        /// Per-reply timeout in seconds; 0 waits forever.
        #[arg(long, default_value_t = 3600)]
        timeout: u64,
        /// Where to write the pruning report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count parameters and FLOPs before and after pruning.
    Count {
        #[arg(long)]
        model: PathBuf,
        /// Pruning report supplying retained filters.
        #[arg(long, conflicts_with = "rates")]
        report: Option<PathBuf>,
        /// Comma-separated pruning rates in percent, layer 1 first.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
}

/// Entry point for the binary; parses `std::env::args_os`.
pub fn main() -> i32 {
    main_from(std::env::args_os())
}

pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_evaluator() {
        EXIT_EVALUATOR
    } else if matches!(e, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV}={raw:?} is not a thread count"))?;
    if n > 0 {
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Runs one parsed command and returns what it prints on stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Inspect { model } => inspect(&ModelManifest::load(model)?, cli.pretty),
        Command::Build {
            model,
            layer,
            filter,
        } => build(model, *layer, *filter),
        Command::Cluster {
            model,
            layer,
            clusters,
            seed,
            max_iter,
        } => {
            let m = load_model(model)?;
            let spec = m.manifest.layer(*layer)?;
            let pyramids = build_layer(m.layer_filters(*layer)?, spec)?;
            let refs: Vec<_> = pyramids.iter().collect();
            let strategy = seed.map_or(InitStrategy::EvenSpaced, InitStrategy::SeededRandom);
            let set = cluster(&refs, *clusters, strategy, *max_iter)?;
            Ok(to_json(&set))
        }
        Command::Nn {
            model,
            layer,
            filter,
        } => {
            let m = load_model(model)?;
            let spec = m.manifest.layer(*layer)?;
            if *filter == 0 || *filter as usize > spec.num_filters {
                return Err(Error::UnknownFilter {
                    layer: *layer,
                    filter: *filter,
                });
            }
            let pyramids = build_layer(m.layer_filters(*layer)?, spec)?;
            let key = &pyramids[*filter as usize - 1];
            let others: Vec<_> = pyramids
                .iter()
                .filter(|p| p.filter_index != *filter)
                .collect();
            let result = CandidateSet::from_refs(others).find_closest(key)?;
            Ok(to_json(
                &json!({ "layer": layer, "filter": filter, "result": result }),
            ))
        }
        Command::Prune {
            model,
            evaluator,
            loss,
            recluster_from_original,
            seed,
            max_iter,
            epochs,
            timeout,
            out,
        } => {
            let config = DriverConfig {
                loss_budget: *loss,
                recluster_from_original: *recluster_from_original,
                seed: *seed,
                max_iter: *max_iter,
                epochs: *epochs,
            };
            if !(config.loss_budget > 0.0 && config.loss_budget < 1.0) {
                return Err(Error::Config(format!(
                    "--loss {} outside (0, 1)",
                    config.loss_budget
                )));
            }
            let m = load_model(model)?;
            let timeout = (*timeout > 0).then(|| Duration::from_secs(*timeout));
            let mut ev = SubprocessEvaluator::spawn(evaluator, model, timeout)?;
            let outcome = driver::run(&m, &mut ev, &config)?;
            ev.close()?;
            if let Some(path) = out {
                write_report(&outcome.report, path)?;
            }
            if cli.pretty {
                Ok(prune_text(&outcome))
            } else {
                Ok(to_json(
                    &json!({ "report": outcome.report, "layers": outcome.layers }),
                ))
            }
        }
        Command::Count {
            model,
            report,
            rates,
        } => {
            let manifest = ModelManifest::load(model)?;
            let retained = match (report, rates) {
                (Some(path), _) => {
                    let r = read_report(path)?;
                    r.validate_against(&manifest)?;
                    r.retained_counts(&manifest)
                }
                (None, Some(rates)) => {
                    let fractions: Vec<f64> = rates.iter().map(|r| r / 100.0).collect();
                    cost::retained_from_pruning_rates(&manifest, &fractions)?
                }
                (None, None) => manifest.layers.iter().map(|l| l.num_filters).collect(),
            };
            let costs = cost::count(&manifest, &retained)?;
            if cli.pretty {
                Ok(cost::report_text(&costs))
            } else {
                Ok(to_json(&costs))
            }
        }
    }
}

fn inspect(manifest: &ModelManifest, pretty: bool) -> Result<String> {
    let layers: Vec<_> = manifest
        .layers
        .iter()
        .map(|l| {
            let shape = PyramidShape::for_layer(l);
            let levels: Vec<String> = shape.levels().iter().map(ToString::to_string).collect();
            json!({
                "id": l.id,
                "k": l.k,
                "in_channels": l.in_channels,
                "num_filters": l.num_filters,
                "s": shape.s,
                "m": shape.m,
                "level_count": shape.level_count(),
                "levels": levels,
            })
        })
        .collect();
    if pretty {
        let mut out = format!("{}\n", manifest.name);
        let _ = writeln!(
            out,
            "{:>5} {:>3} {:>6} {:>8} {:>3} {:>3} {:>7}",
            "layer", "k", "C_in", "filters", "s", "m", "levels"
        );
        for l in &manifest.layers {
            let shape = PyramidShape::for_layer(l);
            let _ = writeln!(
                out,
                "{:>5} {:>3} {:>6} {:>8} {:>3} {:>3} {:>7}",
                l.id,
                l.k,
                l.in_channels,
                l.num_filters,
                shape.s,
                shape.m,
                shape.level_count()
            );
        }
        return Ok(out);
    }
    Ok(to_json(
        &json!({ "name": manifest.name, "layers": layers, "fc": manifest.fc }),
    ))
}

fn build(model: &PathBuf, layer: u32, filter: Option<u32>) -> Result<String> {
    let m = load_model(model)?;
    let spec = m.manifest.layer(layer)?;
    let pyramids = build_layer(m.layer_filters(layer)?, spec)?;
    match filter {
        Some(f) => {
            let p = pyramids
                .iter()
                .find(|p| p.filter_index == f)
                .ok_or(Error::UnknownFilter { layer, filter: f })?;
            Ok(to_json(&p.to_debug_json()))
        }
        None => {
            let index = build_index(&pyramids);
            Ok(to_json(&json!({
                "layer": layer,
                "sorted": index.sorted_ids(),
                "roots": index.roots_sorted(),
            })))
        }
    }
}

fn prune_text(outcome: &driver::PruneOutcome) -> String {
    let r = &outcome.report;
    let mut out = format!(
        "baseline accuracy {:.4}  final accuracy {:.4}  loss {:.4}\n",
        r.baseline_accuracy,
        r.accuracy,
        r.baseline_accuracy - r.accuracy
    );
    let _ = writeln!(
        out,
        "{:>5} {:>8} {:>8} {:>10} {:>6}",
        "layer", "filters", "kept", "pruned", "calls"
    );
    for t in &outcome.layers {
        let rate = 1.0 - t.retained as f64 / t.original as f64;
        let _ = writeln!(
            out,
            "{:>5} {:>8} {:>8} {:>10} {:>6}",
            t.layer,
            t.original,
            t.retained,
            percent(rate),
            t.evaluator_calls()
        );
    }
    out
}
