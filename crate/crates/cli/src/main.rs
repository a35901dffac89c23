//! `amglab`: batch runner for the two-grid and bootstrap AMG experiments.
//!
//! Exit status: 0 on success, 2 for an invalid config or command line
//! (the message names the field), 1 for any other failure, including a run
//! in which some cell errored (the rows are still written).

mod config;
mod output;
mod reproduce;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use amglab::interp::{ideal_interp, optimal_interp, InterpKind};
use amglab::linalg::eig::EigOptions;
use amglab::linalg::io::{write_matrix_market, MmSymmetry};
use amglab::linalg::SparseMatrix;
use amglab::problems::{assemble_fv, build_coefficient, full_coarsening, red_black_coarsening, Pattern, SIGN_CONVENTION};
use amglab::smoothers::Smoother;
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Coarsening, ConfigError, ExperimentConfig, Method, Overrides};
use output::{Meta, Sink};
use reproduce::TableId;
use runner::RateRow;

#[derive(Parser)]
#[command(name = "amglab", version, about = "Two-grid and bootstrap AMG experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Base seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Drop problem sizes N above this value (overrides `size_cap`).
    #[arg(long)]
    size_cap: Option<usize>,
    /// Worker threads; 1 runs sequentially (overrides `threads`).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            size_cap: self.size_cap,
            threads: self.threads,
            out_dir: self.out_dir.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every study of a config and write `rates.csv` plus per-cell files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a shipped preset and compare with the published values.
    Reproduce {
        #[arg(value_enum)]
        id: TableId,
        /// Use this config instead of the shipped preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write one matrix of one problem in Matrix Market format (the
    /// coefficient field as CSV).
    ExportMatrix {
        /// Take the problem, smoother and coarsening from the first entries
        /// of this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        pattern: Option<Pattern>,
        #[arg(long = "n")]
        n: Option<usize>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, value_enum, default_value = "a")]
        what: Export,
        #[command(flatten)]
        common: Common,
    },
    /// Spectra of `A` and `(A, M~)` for every problem of a config.
    Spectra {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Export {
    /// The system matrix.
    A,
    /// The symmetrized smoother `M~` (sparse sweeps only).
    Msymm,
    /// Ideal interpolation for the configured coarsening.
    Ideal,
    /// Optimal interpolation with `nc` from the coarsening.
    Optimal,
    /// Coefficient field as an N x N CSV grid.
    Field,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Run { config, common } => {
            let cfg = prepare(ExperimentConfig::load(&config)?, &common)?;
            let (rows, sink) = execute(&cfg)?;
            Ok(report_rows(&rows, &sink))
        }
        Command::Reproduce { id, config, common } => {
            let base = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => {
                    let mut c = id.config();
                    c.output.dir = PathBuf::from("out").join(id.to_string());
                    c
                }
            };
            let cfg = prepare(base, &common)?;
            let (rows, sink) = execute(&cfg)?;
            let cmp = reproduce::compare(id, &rows);
            let path = sink.write_rows("comparison.csv", &cmp)?;
            for c in &cmp {
                println!("{}", c.line());
            }
            let failed = cmp.iter().filter(|c| c.verdict == "fail").count();
            let checked = cmp.iter().filter(|c| c.verdict != "report").count();
            println!("{id}: {} of {checked} checks pass; report in {}", checked - failed, path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectra { config, common } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for s in &mut cfg.studies {
                s.methods = vec![Method::Spectra];
            }
            let cfg = prepare(cfg, &common)?;
            let (rows, sink) = execute(&cfg)?;
            Ok(report_rows(&rows, &sink))
        }
        Command::ExportMatrix {
            config,
            pattern,
            n,
            k,
            what,
            common,
        } => export_matrix(config, pattern, n, k, what, &common),
    }
}

fn prepare(mut cfg: ExperimentConfig, common: &Common) -> anyhow::Result<ExperimentConfig> {
    cfg.apply(&common.overrides());
    cfg.validate()?;
    if cfg.threads > 1 {
        amglab::exec::set_threads(cfg.threads)?;
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> anyhow::Result<(Vec<RateRow>, Sink)> {
    let sink = Sink::new(
        &cfg.output.dir,
        Meta {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        },
    )?;
    sink.write_text("config.toml", &cfg.to_toml())?;
    let rows = runner::run(cfg, &sink);
    sink.write_rows("rates.csv", &rows)?;
    Ok((rows, sink))
}

fn report_rows(rows: &[RateRow], sink: &Sink) -> ExitCode {
    let errors: Vec<&RateRow> = rows.iter().filter(|r| r.status.starts_with("error")).collect();
    println!("{} rows written to {}", rows.len(), sink.path("rates.csv").display());
    for r in &errors {
        eprintln!(
            "{} {} N={} k={} seed={} {}: {}",
            r.study, r.problem, r.n, r.k, r.seed, r.method, r.status
        );
    }
    if errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn export_matrix(
    config: Option<PathBuf>,
    pattern: Option<Pattern>,
    n: Option<usize>,
    k: Option<u32>,
    what: Export,
    common: &Common,
) -> anyhow::Result<ExitCode> {
    let cfg = match config {
        Some(p) => {
            let c = ExperimentConfig::load(&p)?;
            c.validate()?;
            Some(c)
        }
        None => None,
    };
    let missing = |field: &str| ConfigError {
        field: field.into(),
        message: "required without --config".into(),
    };
    let pattern = pattern
        .or_else(|| cfg.as_ref().map(|c| c.problem.patterns[0]))
        .ok_or_else(|| missing("pattern"))?;
    let n = n.or_else(|| cfg.as_ref().map(|c| c.problem.sizes[0])).ok_or_else(|| missing("n"))?;
    let k = k.or_else(|| cfg.as_ref().map(|c| c.problem.ks[0])).unwrap_or(1);
    let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let geometry = cfg.as_ref().map(|c| c.problem.geometry).unwrap_or_default();
    let study = cfg.as_ref().map(|c| c.studies[0].clone());
    let smoother_spec = study.as_ref().map(|s| s.smoother).unwrap_or_default();
    let coarsening = study.as_ref().map(|s| s.coarsening).unwrap_or_default();
    if n < 3 {
        return Err(ConfigError {
            field: "n".into(),
            message: format!("grid size {n} is below 3"),
        }
        .into());
    }

    let field = build_coefficient(pattern, n, k, seed, &geometry)?;
    let a = assemble_fv(&field)?;
    let split = match coarsening {
        Coarsening::Full => full_coarsening(&field.grid)?.0,
        Coarsening::RedBlack => red_black_coarsening(&field.grid)?,
    };
    let descriptor = format!("pattern={pattern} N={n} k={k} seed={seed}");
    let hash_source = format!("{descriptor} what={what:?} smoother={smoother_spec:?} coarsening={}", coarsening.name());
    let meta = Meta {
        config_hash: {
            use sha2::{Digest, Sha256};
            Sha256::digest(hash_source.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
        },
        seed,
    };
    let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let sink = Sink::new(&dir, meta)?;
    let stem = format!("{pattern}_n{n}_k{k}_s{seed}");

    if what == Export::Field {
        let path = sink.write_text(&format!("{stem}_field.csv"), &field.to_csv())?;
        println!("{}", path.display());
        return Ok(ExitCode::SUCCESS);
    }
    // as in `run`: the configured sweep is the pre-smoother, `M` its transpose
    let smoother = Smoother::from_spec(&smoother_spec, &a, Some(&field.grid), Some(&split))?.transpose();
    let (matrix, symmetry, provenance): (SparseMatrix, MmSymmetry, String) = match what {
        Export::A => (a.clone(), MmSymmetry::Symmetric, format!("system matrix; {SIGN_CONVENTION}")),
        Export::Msymm => {
            let m = smoother.symmetrized(amglab::ExecMode::auto())?.to_sparse();
            (m, MmSymmetry::Symmetric, format!("symmetrized smoother {:?}", smoother_spec.kind))
        }
        Export::Ideal => {
            let p = ideal_interp(&a, &split, amglab::ExecMode::auto())?;
            (SparseMatrix::from_dense(&p.p), MmSymmetry::General, interp_provenance(p.kind, &coarsening))
        }
        Export::Optimal => {
            let msymm = smoother.symmetrized(amglab::ExecMode::auto())?;
            let opts = EigOptions {
                seed,
                ..EigOptions::default()
            };
            let (p, _) = optimal_interp(&a, &msymm, split.nc(), &opts)?;
            (SparseMatrix::from_dense(&p.p), MmSymmetry::General, interp_provenance(p.kind, &coarsening))
        }
        Export::Field => unreachable!(),
    };
    let mut body = Vec::new();
    let comments = vec![descriptor, provenance];
    write_matrix_market(&mut body, &matrix, symmetry, &comments)?;
    let name = format!("{stem}_{}.mtx", format!("{what:?}").to_lowercase());
    // the banner must stay on the first line, so the metadata goes after it
    let text = String::from_utf8(body)?;
    let (banner, rest) = text.split_once('\n').context("empty Matrix Market output")?;
    let path = sink.path(&name);
    std::fs::write(&path, format!("{banner}\n{}{rest}", sink.meta.header("%")))?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn interp_provenance(kind: InterpKind, coarsening: &Coarsening) -> String {
    format!("interpolation {kind:?} with {} coarsening", coarsening.name())
}
