use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use perishable_core::config::ExperimentConfig;
use perishable_core::experiment::{optimality_gap, Experiment, HeuristicFile};
use perishable_core::io::atomic_write_string;
use perishable_core::sim::{write_kpi_csv, Evaluation, KpiRow, RolloutConfig};
use perishable_core::simopt::write_search_log;
use perishable_core::vi::Precision;
use perishable_core::{Error, Result};

#[derive(Parser)]
#[command(name = "perishable", version, about = "Value iteration and heuristic search for perishable inventory")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the MDP by value iteration and write the optimal policy.
    Solve {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Continue from the newest checkpoint in OUTPUT/checkpoints.
        #[arg(long)]
        resume: bool,
        #[arg(long, value_parser = parse_precision)]
        precision: Option<Precision>,
        #[arg(long)]
        max_batch_size: Option<usize>,
    },
    /// Fit the scenario's heuristic by simulation.
    Simopt {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Rollouts per candidate.
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Simulate a solved policy and/or a fitted heuristic and write kpi.csv.
    Evaluate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Policy CSV written by `solve`.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Heuristic JSON written by `simopt`.
        #[arg(long)]
        heuristic: Option<PathBuf>,
        /// Number of rollouts (default from the configuration, 10000 in presets).
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// List the bundled presets.
    Presets,
    /// Print the resolved configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset, e.g. a/m2/exp1 or c/m3/exp2.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the configuration's `output`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for evaluation and search.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        _ => Err(format!("expected f32 or f64, got {s:?}")),
    }
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => return Err(Error::Config("give --config or --preset".into())),
        };
        if let Some(dir) = &self.output {
            cfg.output = Some(dir.clone());
        }
        if let Some(seed) = self.seed {
            cfg.evaluation.base_seed = seed;
            cfg.simopt.base_seed = seed;
            cfg.simopt.ga.seed = seed;
        }
        Ok(cfg)
    }
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg
        .output
        .clone()
        .ok_or_else(|| Error::Config("no output directory; pass --output".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn label(cfg: &ExperimentConfig) -> String {
    if cfg.name.is_empty() {
        "custom".into()
    } else {
        cfg.name.clone()
    }
}

fn solve(cfg: ExperimentConfig, resume: bool, precision: Option<Precision>, batch: Option<usize>) -> Result<()> {
    let mut cfg = cfg;
    if let Some(p) = precision {
        cfg.vi.precision = p;
    }
    if let Some(b) = batch {
        cfg.vi.max_batch_size = b;
    }
    cfg.validate()?;
    let exp = Experiment::new(&cfg)?;
    let dir = output_dir(&cfg)?;
    let ckpt = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt).map_err(|e| io_error(&ckpt, e))?;
    let card = exp.cardinality();
    eprintln!("solving {} ({} states, {} actions)", label(&cfg), card.states, card.actions);
    let start = Instant::now();
    let result = exp.solve(&cfg.vi, Some(&ckpt), resume)?;
    let wall = start.elapsed().as_secs_f64();
    exp.write_policy(&dir.join("policy.csv"), &result.policy)?;
    let report = json!({
        "experiment": label(&cfg),
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "converged": result.converged(),
        "wall_seconds": wall,
        "states": card.states as u64,
        "precision": cfg.vi.precision,
        "threads": rayon::current_num_threads(),
    });
    let text = serde_json::to_string_pretty(&report).expect("plain JSON value");
    atomic_write_string(&dir.join("solve_report.json"), &(text + "\n"))?;
    println!(
        "{}: {} iterations ({:?}) in {wall:.2} s; policy written to {}",
        label(&cfg),
        result.iterations,
        result.stop_reason,
        dir.join("policy.csv").display()
    );
    Ok(())
}

fn simopt(cfg: ExperimentConfig, rollouts: Option<usize>) -> Result<()> {
    let mut cfg = cfg;
    if let Some(n) = rollouts {
        cfg.simopt.rollouts = n;
    }
    cfg.validate()?;
    let exp = Experiment::new(&cfg)?;
    let dir = output_dir(&cfg)?;
    let start = Instant::now();
    let result = exp.search(&cfg.simopt)?;
    let space = exp.heuristic_space();
    write_search_log(&dir.join("search_log.csv"), &space, &result.log)?;
    let file = exp.heuristic_file(&result, cfg.simopt.rollouts);
    file.save(&dir.join("heuristic.json"))?;
    println!(
        "{}: {} {:?} = {:?}, return {:.3} (sd {:.3}) after {} generation(s) in {:.1} s",
        label(&cfg),
        file.kind,
        file.names,
        file.values,
        file.return_mean,
        file.return_sd,
        result.generations,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn evaluate(cfg: ExperimentConfig, policy: Option<PathBuf>, heuristic: Option<PathBuf>, rollouts: Option<usize>) -> Result<()> {
    let mut cfg = cfg;
    if let Some(n) = rollouts {
        cfg.evaluation.n_rollouts = n;
    }
    cfg.validate()?;
    if policy.is_none() && heuristic.is_none() {
        return Err(Error::Config("give --policy and/or --heuristic".into()));
    }
    let exp = Experiment::new(&cfg)?;
    let dir = output_dir(&cfg)?;
    let rollouts: &RolloutConfig = &cfg.evaluation;
    let vi_eval: Option<Evaluation> = policy.as_deref().map(|p| exp.evaluate_policy_file(p, rollouts)).transpose()?;
    let h_eval: Option<Evaluation> = match heuristic.as_deref() {
        Some(path) => {
            let file = HeuristicFile::load(path)?;
            exp.check_heuristic_file(&file, path)?;
            Some(exp.evaluate_heuristic(&file.values, rollouts)?)
        }
        None => None,
    };
    let name = label(&cfg);
    let mut rows = Vec::new();
    if let Some(e) = &vi_eval {
        rows.push(KpiRow {
            policy: "vi",
            experiment: &name,
            evaluation: e,
            gap_pct: None,
        });
    }
    if let Some(e) = &h_eval {
        rows.push(KpiRow {
            policy: exp.heuristic_kind(),
            experiment: &name,
            evaluation: e,
            gap_pct: vi_eval.as_ref().map(|v| optimality_gap(v.ret.mean, e.ret.mean)),
        });
    }
    write_kpi_csv(&dir.join("kpi.csv"), &rows)?;
    for row in &rows {
        let e = row.evaluation;
        print!("{} {}: return {:.3} (sd {:.3})", row.experiment, row.policy, e.ret.mean, e.ret.sd);
        if let Some(g) = row.gap_pct {
            print!(", gap {g:.2}%");
        }
        println!();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Solve {
            exp,
            resume,
            precision,
            max_batch_size,
        } => solve(exp.load()?, resume, precision, max_batch_size),
        Command::Simopt { exp, rollouts } => simopt(exp.load()?, rollouts),
        Command::Evaluate {
            exp,
            policy,
            heuristic,
            rollouts,
        } => evaluate(exp.load()?, policy, heuristic, rollouts),
        Command::Presets => {
            let mut text = ExperimentConfig::preset_names().join("\n");
            text.push('\n');
            write_stdout(&text)
        }
        Command::ShowConfig { exp } => write_stdout(&exp.load()?.to_toml()?),
    }
}

/// Writes to stdout, treating a closed pipe (`perishable presets | head`) as success.
fn write_stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(source) if source.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
