use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fst24::artifacts::{write_comparison, write_lambda_csv, write_run};
use fst24::bench::{self, GEGLU_WIDTHS, WEIGHT_SHAPES};
use fst24::config::load_config;
use fst24::patterns::write_patterns;
use fst24::suite;
use fst24_core::optim::{DecayConfig, LambdaReport, DEFAULT_CANDIDATES, EXTENDED_CANDIDATES};
use fst24_core::trainer::{
    run_comparison_on, run_training, search_lambda_on, standard_variants, BatchStream, TrainConfig, Variant,
};
use fst24_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fst24", version, about = "Fully sparse 2:4 training of feed-forward layers")]
struct Cli {
    /// Training config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, or output file for `gen-patterns`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Grid {
    /// The five small decay factors.
    Default,
    /// The default grid plus stronger factors for small models.
    Extended,
}

impl Grid {
    fn candidates(self) -> &'static [f64] {
        match self {
            Grid::Default => &DEFAULT_CANDIDATES,
            Grid::Extended => &EXTENDED_CANDIDATES,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Train,
    /// Search the decay factor, then train every variant.
    Compare {
        /// Skip the search and use this decay factor.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value_t = Grid::Extended)]
        grid: Grid,
    },
    /// Decay-factor search over the warmup window.
    SearchLambda {
        #[arg(long, value_enum, default_value_t = Grid::Extended)]
        grid: Grid,
    },
    /// Dense versus compressed 2:4 products.
    BenchSpmm {
        #[arg(long, default_value_t = 256)]
        tokens: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Benchmark these `ROWSxCOLS` shapes instead of the defaults.
        #[arg(long, value_delimiter = ',', value_parser = parse_shape)]
        shapes: Option<Vec<(usize, usize)>>,
    },
    /// Row-order versus column-order GEGLU gating.
    BenchGeglu {
        #[arg(long, default_value_t = 2048)]
        tokens: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,
    },
    /// Exhaustive versus greedy transposable mask search.
    BenchMasksearch {
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_shape)]
        shapes: Option<Vec<(usize, usize)>>,
    },
    /// Write the transposable pattern table.
    GenPatterns,
    /// Run the property suite.
    Verify {
        /// Skip the toy-task training runs.
        #[arg(long)]
        quick: bool,
        /// Number of training seeds.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once('x')
        .ok_or_else(|| format!("expected ROWSxCOLS, found {s:?}"))?;
    let parse = |v: &str| v.parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn train_config(cli: &Cli) -> Result<TrainConfig> {
    if cli.precision == Precision::F32 {
        bail!("training runs in f64 only; --precision f32 applies to the bench commands");
    }
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_bench<R: Serialize>(out: Option<&Path>, name: &str, rows: &[R]) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
            let path = dir.join(name);
            let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
            bench::write_csv(file, rows)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => bench::write_csv(io::stdout().lock(), rows),
    }
}

fn search(cfg: &TrainConfig, candidates: &[f64], stream: &mut BatchStream) -> Result<(Option<f64>, LambdaReport)> {
    match search_lambda_on(cfg, candidates, stream) {
        Ok((l, r)) => Ok((Some(l), r)),
        Err(Error::NoFeasibleLambda(r)) => Ok((None, *r)),
        Err(e) => Err(e.into()),
    }
}

fn print_search(report: &LambdaReport) {
    for e in &report.entries {
        println!(
            "lambda {:<8e} mu {:.4} {}",
            e.lambda,
            e.mu,
            if e.feasible { "feasible" } else { "" }
        );
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Train => {
            let cfg = train_config(&cli)?;
            let dir = out_dir(&cli, "runs/train");
            let run = run_training(&cfg)?;
            write_run(&dir, &run)?;
            println!("eval loss {:.6}; wrote {}", run.eval.loss, dir.display());
        }
        Command::Compare { lambda, grid } => {
            let mut cfg = train_config(&cli)?;
            let dir = out_dir(&cli, "runs/compare");
            let mut stream = BatchStream::new(&cfg)?;
            let report = match lambda {
                Some(l) => {
                    cfg.decay = DecayConfig {
                        lambda: *l,
                        ..cfg.decay
                    };
                    None
                }
                None => {
                    let (chosen, report) = search(&cfg, grid.candidates(), &mut stream)?;
                    print_search(&report);
                    match chosen {
                        Some(l) => cfg.decay = DecayConfig { lambda: l, ..cfg.decay },
                        None => bail!("no candidate decay factor reached the feasible flip-ratio band"),
                    }
                    Some(report)
                }
            };
            cfg.validate()?;
            let variants = standard_variants(&cfg, &Variant::ALL);
            let comparison = run_comparison_on(&cfg, &variants, &mut stream)?;
            write_comparison(&dir, &comparison, report.as_ref())?;
            for r in &comparison.runs {
                println!("{:<28} eval loss {:.6}", r.variant.name(), r.artifacts.eval.loss);
            }
            println!("wrote {}", dir.display());
        }
        Command::SearchLambda { grid } => {
            let cfg = train_config(&cli)?;
            let dir = out_dir(&cli, "runs/search");
            let mut stream = BatchStream::new(&cfg)?;
            let (chosen, report) = search(&cfg, grid.candidates(), &mut stream)?;
            fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
            write_lambda_csv(&dir.join("lambda.csv"), &report)?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            let path = dir.join("report.json");
            fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
            print_search(&report);
            match chosen {
                Some(l) => println!("chosen lambda {l:e}"),
                None => {
                    eprintln!("no candidate decay factor reached the feasible flip-ratio band");
                    return Ok(ExitCode::FAILURE);
                }
            }
        }
        Command::BenchSpmm { tokens, reps, shapes } => {
            let shapes = shapes.as_deref().unwrap_or(&WEIGHT_SHAPES);
            let seed = cli.seed.unwrap_or(0);
            match cli.precision {
                Precision::F32 => write_bench(
                    cli.out.as_deref(),
                    "spmm.csv",
                    &bench::bench_spmm::<f32>(shapes, *tokens, *reps, seed)?,
                )?,
                Precision::F64 => write_bench(
                    cli.out.as_deref(),
                    "spmm.csv",
                    &bench::bench_spmm::<f64>(shapes, *tokens, *reps, seed)?,
                )?,
            }
        }
        Command::BenchGeglu { tokens, reps, widths } => {
            let widths = widths.as_deref().unwrap_or(&GEGLU_WIDTHS);
            let seed = cli.seed.unwrap_or(0);
            match cli.precision {
                Precision::F32 => write_bench(
                    cli.out.as_deref(),
                    "geglu.csv",
                    &bench::bench_geglu::<f32>(widths, *tokens, *reps, seed)?,
                )?,
                Precision::F64 => write_bench(
                    cli.out.as_deref(),
                    "geglu.csv",
                    &bench::bench_geglu::<f64>(widths, *tokens, *reps, seed)?,
                )?,
            }
        }
        Command::BenchMasksearch { reps, shapes } => {
            let shapes = shapes.as_deref().unwrap_or(&WEIGHT_SHAPES);
            let seed = cli.seed.unwrap_or(0);
            match cli.precision {
                Precision::F32 => write_bench(
                    cli.out.as_deref(),
                    "masksearch.csv",
                    &bench::bench_masksearch::<f32>(shapes, *reps, seed)?,
                )?,
                Precision::F64 => write_bench(
                    cli.out.as_deref(),
                    "masksearch.csv",
                    &bench::bench_masksearch::<f64>(shapes, *reps, seed)?,
                )?,
            }
        }
        Command::GenPatterns => {
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("patterns.txt"));
            write_patterns(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Verify { quick, seeds } => {
            let mut checks = suite::property_checks();
            if !quick {
                let base = train_config(&cli)?;
                let seeds: Vec<u64> = (0..*seeds).map(|s| base.seed + s).collect();
                checks.extend(suite::training_checks(&base, &seeds, &EXTENDED_CANDIDATES)?);
            }
            let mut out = io::stdout().lock();
            for c in &checks {
                writeln!(out, "{}", c.line())?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            writeln!(out, "{} checks, {failed} failed", checks.len())?;
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
