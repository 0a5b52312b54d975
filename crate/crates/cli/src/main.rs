//! `aafilter`: train, evaluate and inspect associative autoencoder filter banks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aafilter_core::data::{load_scenario, DatasetKind, ScenarioSplit};
use aafilter_core::experiments::{self, render_filter_grid, run_sweep_with, write_pgm_grid, write_sweep_csv};
use aafilter_core::filterbank::{
    self, classify, distances, load_bank, save_bank, train_bank_detailed, FilterBank, TrainConfig,
};
use aafilter_core::nn::{gradcheck, AdamConfig};
use aafilter_core::Rng;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "aafilter", version, about = "Associative autoencoder filter banks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one autoencoder per class and write the bank to a .aaef file.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Hidden layer width.
        #[arg(long, default_value_t = filterbank::DEFAULT_HIDDEN, value_parser = positive_usize)]
        hidden: usize,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a dataset split with a trained bank and print the accuracy.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Evaluate on the training split instead of the test split.
        #[arg(long)]
        on_train: bool,
    },
    /// Accuracy as a function of hidden width 2^ell, written as CSV.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Smallest exponent.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u32).range(0..=12))]
        lmin: u32,
        /// Largest exponent.
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(0..=12))]
        lmax: u32,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render inputs and every autoencoder's reconstructions as a PGM grid.
    FilterGrid {
        #[command(flatten)]
        data: DataArgs,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Output PGM path.
        #[arg(long)]
        out: PathBuf,
        /// Pick a random test sample per class (seeded by --seed) instead of the first.
        #[arg(long)]
        random_pick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// L1 activity coefficient.
        #[arg(long, default_value_t = 0.0, value_parser = non_negative_f64)]
        alpha: f64,
        /// Input width (at most 16).
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=16))]
        n: u32,
        /// Hidden width (at most 16).
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
        hidden: u32,
        /// Batch size (at most 16).
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=16))]
        batch: u32,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset: mnist or fashion.
    #[arg(long, default_value = "mnist", value_parser = parse_dataset)]
    dataset: DatasetKind,
    /// Directory holding the IDX files (directly or in a `mnist`/`fashion` subdirectory).
    #[arg(long, env = "AAFILTER_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Train on the 10K test files and test on the 60K training files.
    #[arg(long)]
    swap: bool,
    /// Keep only the first N samples of each class in both splits.
    #[arg(long, value_parser = positive_usize)]
    per_class: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = filterbank::DEFAULT_EPOCHS, value_parser = positive_usize)]
    epochs: usize,
    #[arg(long, default_value_t = filterbank::DEFAULT_BATCH, value_parser = positive_usize)]
    batch: usize,
    /// L1 activity coefficient (used with --regularize).
    #[arg(long, default_value_t = filterbank::DEFAULT_L1, value_parser = non_negative_f64)]
    l1: f64,
    /// Apply the L1 activity penalty to the hidden layer.
    #[arg(long)]
    regularize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classes trained concurrently.
    #[arg(long, default_value_t = default_workers(), value_parser = positive_usize)]
    workers: usize,
}

impl TrainArgs {
    fn config(&self, hidden: usize) -> TrainConfig {
        TrainConfig {
            hidden,
            epochs: self.epochs,
            batch: self.batch,
            alpha: self.l1,
            regularize: self.regularize,
            seed: self.seed,
            adam: AdamConfig::default(),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite value >= 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    s.parse().map_err(|e: aafilter_core::Error| e.to_string())
}

type CmdResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn load(data: &DataArgs) -> Result<ScenarioSplit, aafilter_core::Error> {
    let mut split = load_scenario(data.dataset, &data.data_dir, data.swap)?;
    if let Some(n) = data.per_class {
        split.train = split.train.stratified_subset(n);
        split.test = split.test.stratified_subset(n);
    }
    Ok(split)
}

fn describe(split: &ScenarioSplit, data: &DataArgs) -> String {
    format!(
        "{} {}: train {} / test {} samples, {} classes, {} pixels",
        data.dataset,
        if split.swapped { "10K/60K" } else { "60K/10K" },
        split.train.len(),
        split.test.len(),
        split.train.classes(),
        split.train.input_dim()
    )
}

fn cmd_train(data: &DataArgs, train: &TrainArgs, hidden: usize, out: &Path) -> CmdResult {
    let cfg = train.config(hidden);
    let split = load(data)?;
    println!("{}", describe(&split, data));
    let started = Instant::now();
    let (bank, losses) = train_bank_detailed(&split.train, &cfg, train.workers)?;
    for (k, l) in losses.iter().enumerate() {
        println!(
            "class {k}: loss {:.6} -> {:.6} over {} epochs",
            l.first().copied().unwrap_or(f64::NAN),
            l.last().copied().unwrap_or(f64::NAN),
            l.len()
        );
    }
    save_bank(&bank, out)?;
    println!(
        "wrote {} ({} autoencoders, n={}, n*={}) in {:.1}s",
        out.display(),
        bank.classes(),
        bank.input_dim(),
        bank.hidden_dim(),
        started.elapsed().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn check_compatible(bank: &FilterBank, split: &ScenarioSplit) -> Result<(), String> {
    if bank.input_dim() != split.train.input_dim() {
        return Err(format!(
            "model expects {} pixels, dataset has {}",
            bank.input_dim(),
            split.train.input_dim()
        ));
    }
    if bank.classes() != split.train.classes() {
        return Err(format!(
            "model has {} classes, dataset has {}",
            bank.classes(),
            split.train.classes()
        ));
    }
    Ok(())
}

fn cmd_eval(data: &DataArgs, model: &Path, on_train: bool) -> CmdResult {
    let bank = load_bank(model)?;
    let split = load(data)?;
    check_compatible(&bank, &split)?;
    let set = if on_train { &split.train } else { &split.test };
    let d = distances(&bank, set.images())?;
    let acc = filterbank::accuracy(&classify(&d), set.labels())?;
    println!("accuracy={:.3}", acc);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(data: &DataArgs, train: &TrainArgs, lmin: u32, lmax: u32, out: &Path) -> CmdResult {
    let split = load(data)?;
    println!("{}", describe(&split, data));
    let ells: Vec<u32> = (lmin..=lmax).collect();
    let result = run_sweep_with(&split, &ells, &train.config(1), train.workers, |row| {
        match &row.outcome {
            Ok(acc) => println!(
                "ell={} n*={} accuracy={acc:.3} ({:.1}s)",
                row.ell, row.n_star, row.wall_seconds
            ),
            Err(e) => println!("ell={} n*={} failed: {e}", row.ell, row.n_star),
        }
    })?;
    write_sweep_csv(&result, out)?;
    println!("wrote {}", out.display());
    let failed = result.rows.iter().filter(|r| r.outcome.is_err()).count();
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_filter_grid(data: &DataArgs, model: &Path, out: &Path, random_pick: bool, seed: u64) -> CmdResult {
    let bank = load_bank(model)?;
    let split = load(data)?;
    check_compatible(&bank, &split)?;
    let mut rng = Rng::new(seed);
    let grid = render_filter_grid(&bank, &split.test, random_pick.then_some(&mut rng))?;
    write_pgm_grid(&grid, out)?;
    let (w, h) = experiments::pgm_dimensions(grid.classes, grid.tile_side);
    println!(
        "wrote {} ({}x{} tiles, {w}x{h} pixels)",
        out.display(),
        grid.grid_rows(),
        grid.classes
    );
    for c in 0..grid.classes {
        let own = grid.tile_error(c + 1, c);
        let others: f64 = (0..grid.classes)
            .filter(|&r| r != c)
            .map(|r| grid.tile_error(r + 1, c))
            .sum::<f64>()
            / (grid.classes - 1).max(1) as f64;
        println!("class {c}: own reconstruction error {own:.4}, other autoencoders {others:.4}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(seed: u64, alpha: f64, n: u32, hidden: u32, batch: u32) -> CmdResult {
    let report = gradcheck(n as usize, hidden as usize, batch as usize, alpha, seed)?;
    println!(
        "max_rel_error={:.3e} over {} parameters (worst: block {}, index {})",
        report.max_rel_error, report.checked, report.worst.0, report.worst.1
    );
    Ok(if report.max_rel_error <= GRADCHECK_TOLERANCE {
        ExitCode::SUCCESS
    } else {
        eprintln!("gradient check failed: tolerance is {GRADCHECK_TOLERANCE:e}");
        ExitCode::from(1)
    })
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train {
            data,
            train,
            hidden,
            out,
        } => cmd_train(&data, &train, hidden, &out),
        Command::Eval { data, model, on_train } => cmd_eval(&data, &model, on_train),
        Command::Sweep {
            data,
            train,
            lmin,
            lmax,
            out,
        } => cmd_sweep(&data, &train, lmin, lmax, &out),
        Command::FilterGrid {
            data,
            model,
            out,
            random_pick,
            seed,
        } => cmd_filter_grid(&data, &model, &out, random_pick, seed),
        Command::Gradcheck {
            seed,
            alpha,
            n,
            hidden,
            batch,
        } => cmd_gradcheck(seed, alpha, n, hidden, batch),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Sweep { lmin, lmax, .. } = &cli.command {
        if lmin > lmax {
            Cli::command()
                .error(
                    ErrorKind::ArgumentConflict,
                    format!("--lmin {lmin} is greater than --lmax {lmax}"),
                )
                .exit();
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let mut msg = e.to_string();
            let mut source = e.source();
            while let Some(s) = source {
                let next = s.to_string();
                if !msg.contains(&next) {
                    msg.push_str(": ");
                    msg.push_str(&next);
                }
                source = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
