use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sharpcert::certificates::{classify_exact, classify_with_mode, CertificateReport, Thresholds, Verdict};
use sharpcert::ensemble::EnsembleSpec;
use sharpcert::io;
use sharpcert::pipeline::run_pipeline;
use sharpcert::recovery::{rate_experiment, solve_constrained, solve_lagrangian, sphere_noise, Mode, RateConfig, SolverOptions};
use sharpcert::Error;

const EXIT_INVALID: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_FALSIFIED: u8 = 4;

#[derive(Parser)]
#[command(name = "sharpcert", version, about = "Certify sharp, strong and unique solutions of group-sparse basis pursuit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ThresholdArgs {
    /// Collapse every threshold onto 1.
    #[arg(long, conflicts_with = "thresholds")]
    exact: bool,
    /// Comma-separated overrides, e.g. tau=0.99,rho_lo=0.95,rho_hi=1.05,gamma=0.99,zeta=0.95
    #[arg(long)]
    thresholds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute every certificate and write the JSON report.
    Certify {
        problem: PathBuf,
        #[command(flatten)]
        thr: ThresholdArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Like certify, but only print the verdict.
    Classify {
        problem: PathBuf,
        #[command(flatten)]
        thr: ThresholdArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one noisy recovery problem with noise of norm `delta`.
    Recover {
        problem: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        mu_ratio: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error-versus-noise experiment with fitted log-log slopes.
    Rates {
        problem: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        mu_ratio: f64,
        #[arg(long, default_value_t = 5)]
        draws: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify random Gaussian instances and tally the verdicts.
    Pipeline {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        groups: usize,
        #[arg(long)]
        group_size: usize,
        #[arg(long)]
        active: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        thresholds: Option<String>,
        /// Tally CSV (`verdict,count`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-trial CSV.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Solver(_) => EXIT_SOLVER,
        _ => EXIT_INVALID,
    }
}

fn emit(out: Option<&Path>, text: &str) -> sharpcert::Result<()> {
    match out {
        Some(path) => io::write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn certify(problem: &Path, thr: &ThresholdArgs) -> sharpcert::Result<CertificateReport> {
    let prob = io::load_problem(problem)?;
    if thr.exact {
        classify_exact(&prob)
    } else {
        let t = match &thr.thresholds {
            Some(s) => s.parse()?,
            None => Thresholds::default(),
        };
        classify_with_mode(&prob, &t, false)
    }
}

fn verdict_exit(v: Verdict) -> u8 {
    if v == Verdict::NotASolution {
        EXIT_FALSIFIED
    } else {
        0
    }
}

fn run(cli: Cli) -> sharpcert::Result<u8> {
    match cli.command {
        Command::Certify { problem, thr, out } => {
            let report = certify(&problem, &thr)?;
            let json = io::report_to_json(&report);
            if out.is_some() {
                println!("{}", report.verdict);
            }
            emit(out.as_deref(), &json)?;
            Ok(verdict_exit(report.verdict))
        }
        Command::Classify { problem, thr, out } => {
            let report = certify(&problem, &thr)?;
            println!("{}", report.verdict);
            if let Some(path) = out {
                io::write_text(&path, &io::report_to_json(&report))?;
            }
            Ok(verdict_exit(report.verdict))
        }
        Command::Recover {
            problem,
            mode,
            delta,
            mu_ratio,
            seed,
            out,
        } => {
            let (prob, file_seed) = io::load_problem_with_seed(&problem)?;
            let seed = seed.or(file_seed).unwrap_or(0);
            let y = &prob.y0 + sphere_noise(prob.m(), delta, seed);
            let opts = SolverOptions::default();
            let mut run = match mode {
                Mode::Lagrangian => {
                    let mut r = solve_lagrangian(&prob, &y, mu_ratio * delta, &opts)?;
                    r.delta = delta;
                    r
                }
                Mode::Constrained => solve_constrained(&prob, &y, delta, &opts)?,
            };
            run.noise_seed = Some(seed);
            if !run.converged {
                eprintln!("warning: solver stopped before reaching tolerance (residual {:e})", run.kkt_residual);
            }
            emit(out.as_deref(), &io::run_csv(&run)?)?;
            Ok(0)
        }
        Command::Rates {
            problem,
            deltas,
            mu_ratio,
            draws,
            seed,
            out,
        } => {
            let (prob, file_seed) = io::load_problem_with_seed(&problem)?;
            let cfg = RateConfig::new(deltas, mu_ratio, draws, seed.or(file_seed).unwrap_or(0));
            let fit = rate_experiment(&prob, &cfg)?;
            let csv = io::rates_csv(&fit)?;
            match out {
                Some(path) => {
                    io::write_text(&path, &csv)?;
                    println!("verdict {}", fit.verdict);
                    for f in &fit.fits {
                        println!("{} slope {}", f.mode.as_str(), io::format_number(f.slope));
                    }
                    if fit.failures > 0 {
                        println!("failed solves {}", fit.failures);
                    }
                }
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Pipeline {
            m,
            n,
            groups,
            group_size,
            active,
            trials,
            seed,
            thresholds,
            out,
            trials_out,
        } => {
            let spec = EnsembleSpec {
                m,
                n,
                groups,
                group_size,
                active,
                seed,
            };
            let thr = match thresholds {
                Some(s) => s.parse()?,
                None => Thresholds::default(),
            };
            let result = run_pipeline(&spec, trials, &thr)?;
            emit(out.as_deref(), &io::tally_csv(&result)?)?;
            if let Some(path) = trials_out {
                io::write_text(&path, &io::trials_csv(&result)?)?;
            }
            if result.failures > 0 {
                eprintln!("{} trials failed to classify", result.failures);
            }
            Ok(if result.falsified() { EXIT_FALSIFIED } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("SHARPCERT_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
