//! `mbp`: runs the path-selection experiments and exports their inputs.
//!
//! Every subcommand takes the same flags. A `--config` file supplies
//! defaults in `key = value` form (keys are the flag names); flags given on
//! the command line override it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbp_core::experiment::motivating::motivating_csv;
use mbp_core::experiment::report::LP_HEADER;
use mbp_core::experiment::{
    emit_report, load_scenario, run_comparison, run_motivating_example, run_threshold_sweep, ConfigError,
    ExperimentConfig, ExperimentError,
};
use mbp_core::minmlu::{compute_min_mlu_weights, scale_demands, MinMluError};
use mbp_core::traffic::traffic_matrix_to_csv;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "mbp", version, about = "Minimum Backlog Policy vs. min-MLU Weighted Random experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare MBP with Weighted Random at every load scale
    Run(Common),
    /// Thresholded MBP at every threshold against Weighted Random
    SweepThreshold(Common),
    /// The three-node motivating example, one run per seed
    Motivating(Common),
    /// Solve the min-MLU program and export the path weights
    Weights(Common),
    /// List the K shortest paths of every demand pair
    Paths(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Key-value configuration file; command-line flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Topology CSV, or `abilene` for the built-in network
    #[arg(long, value_name = "FILE|abilene")]
    topology: Option<String>,
    /// Traffic matrix CSV (src,dst,rate_mbps), or `builtin`
    #[arg(long, value_name = "FILE")]
    traffic: Option<String>,
    /// Content size distribution: pareto, bimodal or deterministic
    #[arg(long)]
    dist: Option<String>,
    /// Mean content size in bytes
    #[arg(long, value_name = "BYTES")]
    mean_size: Option<String>,
    /// Pareto shape parameter
    #[arg(long)]
    pareto_shape: Option<String>,
    /// Size of bimodal mice in bytes
    #[arg(long, value_name = "BYTES")]
    bimodal_small: Option<String>,
    /// Size of bimodal elephants in bytes
    #[arg(long, value_name = "BYTES")]
    bimodal_large: Option<String>,
    /// Candidate paths per pair
    #[arg(long)]
    k: Option<String>,
    /// Policies to compare: mbp, weighted_random, tmbp_<bytes>
    #[arg(long, value_name = "P,...")]
    policies: Option<String>,
    /// Traffic matrix scale factors
    #[arg(long, value_name = "F,...")]
    scale: Option<String>,
    /// Thresholds of the sweep in bytes (`inf` allowed)
    #[arg(long, value_name = "BYTES,...")]
    threshold: Option<String>,
    /// Scale factor of the threshold sweep
    #[arg(long)]
    sweep_scale: Option<String>,
    /// Arrival horizon in seconds
    #[arg(long, value_name = "SECONDS")]
    horizon: Option<String>,
    /// Flows arriving earlier are not measured (`auto`: 10% of the horizon)
    #[arg(long, value_name = "SECONDS")]
    warmup: Option<String>,
    /// Master seed; replication r uses seed + r
    #[arg(long)]
    seed: Option<String>,
    /// Replications per cell
    #[arg(long)]
    reps: Option<String>,
    /// Controller backlog view: exact or counter
    #[arg(long)]
    view: Option<String>,
    /// Also write per-flow records and decision logs of the first replication
    #[arg(long)]
    export_flows: bool,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot read config file {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file {path}: {source}")]
    ConfigFile { path: PathBuf, source: ConfigError },
    #[error("--{flag}: {source}")]
    Flag { flag: String, source: ConfigError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    MinMlu(#[from] MinMluError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Common {
    fn flags(&self) -> Vec<(&'static str, Option<&str>)> {
        vec![
            ("topology", self.topology.as_deref()),
            ("traffic", self.traffic.as_deref()),
            ("dist", self.dist.as_deref()),
            ("mean-size", self.mean_size.as_deref()),
            ("pareto-shape", self.pareto_shape.as_deref()),
            ("bimodal-small", self.bimodal_small.as_deref()),
            ("bimodal-large", self.bimodal_large.as_deref()),
            ("k", self.k.as_deref()),
            ("policies", self.policies.as_deref()),
            ("scale", self.scale.as_deref()),
            ("threshold", self.threshold.as_deref()),
            ("sweep-scale", self.sweep_scale.as_deref()),
            ("horizon", self.horizon.as_deref()),
            ("warmup", self.warmup.as_deref()),
            ("seed", self.seed.as_deref()),
            ("reps", self.reps.as_deref()),
            ("view", self.view.as_deref()),
            ("export-flows", self.export_flows.then_some("true")),
            ("out", self.out.as_deref()),
        ]
    }

    /// Defaults, then the config file, then the flags.
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
                path: path.clone(),
                source,
            })?;
            cfg.apply_text(&text).map_err(|source| CliError::ConfigFile {
                path: path.clone(),
                source,
            })?;
        }
        for (key, value) in self.flags() {
            if let Some(v) = value {
                cfg.set(key, v).map_err(|source| CliError::Flag {
                    flag: key.to_string(),
                    source,
                })?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

fn announce(files: &[PathBuf]) {
    for f in files {
        log::info!("wrote {}", f.display());
    }
}

fn cmd_run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let report = run_comparison(cfg)?;
    announce(&emit_report(&report, &cfg.out)?);
    println!("scale  lp_t      weighted_random_s  mbp_s          gain");
    for s in &report.scales {
        let wr = report.policy_mean(s.scale, "weighted_random");
        let mbp = report.policy_mean(s.scale, "mbp");
        let gain = report.gain(s.scale);
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        let note = if s.feasible { "" } else { "  (infeasible, skipped)" };
        println!(
            "{:<6} {:<9.4} {:<18} {:<14} {}{note}",
            s.scale,
            s.lp_t,
            show(wr),
            show(mbp),
            show(gain)
        );
    }
    println!("results in {}", cfg.out.display());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let report = run_threshold_sweep(cfg)?;
    announce(&emit_report(&report, &cfg.out)?);
    println!("scale {} (lp_t {:.4})", cfg.sweep_scale, report.scales[0].lp_t);
    println!("threshold_bytes  gain       allocation_frequency");
    for t in &report.thresholds {
        println!("{:<16} {:<10.4} {:.4}", t.threshold, t.gain, t.allocation_frequency);
    }
    println!("results in {}", cfg.out.display());
    Ok(())
}

fn cmd_motivating(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let reports = (0..cfg.reps)
        .map(|r| run_motivating_example(mbp_core::experiment::replication_seed(cfg.seed, r)))
        .collect::<Result<Vec<_>, _>>()?;
    let files = vec![
        write(&cfg.out, "motivating.csv", &motivating_csv(&reports))?,
        write(&cfg.out, "config.txt", &cfg.to_text())?,
    ];
    announce(&files);
    println!("seed  delivered  mbp_s     weighted_random_s  gain");
    for r in &reports {
        for c in &r.checkpoints {
            println!(
                "{:<5} {:<10} {:<9.4} {:<18.4} {:.4}",
                r.seed,
                c.delivered,
                c.mbp,
                c.weighted_random,
                c.gain()
            );
        }
    }
    println!("results in {}", cfg.out.display());
    Ok(())
}

fn cmd_weights(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let scenario = load_scenario(cfg)?;
    let topo = &scenario.topology;
    let mut files = vec![
        write(&cfg.out, "topology.csv", &topo.to_csv())?,
        write(&cfg.out, "traffic.csv", &traffic_matrix_to_csv(topo, &scenario.demands))?,
    ];
    let mut lp = format!("{LP_HEADER}\n");
    for &scale in &cfg.scales {
        let dm = scale_demands(&scenario.demands, scale)?;
        let r = compute_min_mlu_weights(topo, &dm, &scenario.pathsets)?;
        let _ = writeln!(lp, "{},{},{},{}", scale, r.lp_objective, r.mlu, r.feasible);
        files.push(write(&cfg.out, &format!("weights_scale{scale}.csv"), &r.weights.to_csv(topo))?);
        println!(
            "scale {scale}: min-MLU {:.6}{}",
            r.mlu,
            if r.feasible { "" } else { " (above 1: infeasible)" }
        );
    }
    files.push(write(&cfg.out, "lp.csv", &lp)?);
    announce(&files);
    println!("results in {}", cfg.out.display());
    Ok(())
}

fn cmd_paths(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let scenario = load_scenario(cfg)?;
    let topo = &scenario.topology;
    let mut csv = String::from("src,dst,path_index,weight,latency_s,nodes\n");
    for ((s, d), set) in &scenario.pathsets {
        println!("{} -> {}", topo.node_name(*s), topo.node_name(*d));
        for (k, p) in set.paths.iter().enumerate() {
            println!("  {k}: {} (weight {}, {} hops)", p.describe(topo), p.total_weight, p.hop_count());
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                topo.node_name(*s),
                topo.node_name(*d),
                k,
                p.total_weight,
                p.latency(topo),
                p.nodes.iter().map(|n| topo.node_name(*n)).collect::<Vec<_>>().join("-")
            );
        }
    }
    announce(&[write(&cfg.out, "paths.csv", &csv)?]);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&ExperimentConfig) -> Result<(), CliError>) = match &cli.command {
        Command::Run(c) => (c, cmd_run),
        Command::SweepThreshold(c) => (c, cmd_sweep),
        Command::Motivating(c) => (c, cmd_motivating),
        Command::Weights(c) => (c, cmd_weights),
        Command::Paths(c) => (c, cmd_paths),
    };
    match common.resolve().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let s_msg = s.to_string();
                if !msg.contains(&s_msg) {
                    msg.push_str(": ");
                    msg.push_str(&s_msg);
                }
                source = s.source();
            }
            eprintln!("mbp: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
