use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mhl_core::atomic::{decompose_with, DecompositionTarget, ThresholdUnit};
use mhl_core::bmo::{bmo_exact, bmo_seq_estimate, BmoSeqConfig};
use mhl_core::error::Error;
use mhl_core::filtration::{build_tree_with_tolerance, TreeDoc, TreeRef};
use mhl_core::fracint::fractional_integral;
use mhl_core::hardy::{h_norm, terminal_lorentz_norm, NormKind};
use mhl_core::harness::{run_experiment, ExperimentConfig, ExperimentName, MartingaleDoc};
use mhl_core::lorentz::LorentzIndex;
use mhl_core::process::{enumerate_stopping_times, Martingale, DEFAULT_ENUMERATION_CAP};
use mhl_core::scalar::{Mode, Rational, Scalar};

#[derive(Parser)]
#[command(name = "mhl", version, about = "Martingale Hardy-Lorentz computations on finite filtration trees")]
struct Cli {
    /// Arithmetic: rational (exact) or float.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Seed for randomized estimators and experiment batches.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance for mass and centering checks when loading documents.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    #[value(name = "star")]
    Star,
    #[value(name = "S")]
    Square,
    #[value(name = "s")]
    CondSquare,
    #[value(name = "Q")]
    Q,
    #[value(name = "D")]
    D,
    /// Lorentz norm of the terminal value.
    #[value(name = "Lpq")]
    Lpq,
    #[value(name = "bmo")]
    Bmo,
    #[value(name = "bmo-seq")]
    BmoSeq,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a norm of a martingale document.
    Norm {
        /// Martingale JSON; stdin when absent or "-".
        input: Option<PathBuf>,
        #[arg(long)]
        kind: Kind,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Second Lorentz index; "inf" is accepted.
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Print the bmo-seq estimate with its witness as JSON.
        #[arg(long)]
        witness: bool,
    },
    /// Canonical atomic decomposition.
    Decompose {
        input: Option<PathBuf>,
        #[arg(long, default_value = "s")]
        target: DecompositionTarget,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value = "one")]
        unit: ThresholdUnit,
        /// Print f minus the reconstruction instead of the decomposition.
        #[arg(long)]
        residual: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fractional integral I_alpha f.
    Fracint {
        input: Option<PathBuf>,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment from a JSON config.
    Experiment {
        #[arg(long)]
        name: ExperimentName,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for <name>.csv and <name>.json; CSV goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List stopping times of a tree (or of a martingale's tree), one per line.
    EnumerateStoppingTimes {
        input: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u128,
        /// Print only the number of stopping times.
        #[arg(long)]
        count: bool,
    },
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("reading stdin")?;
            Ok(s)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn load<S: Scalar>(path: Option<&Path>, tol: Option<f64>) -> Result<Martingale<S>> {
    let doc: MartingaleDoc = serde_json::from_str(&read_input(path)?).context("parsing martingale document")?;
    Ok(doc.load_with_tolerance::<S>(tol.unwrap_or_else(S::default_tolerance))?)
}

fn run_typed<S: Scalar>(cli: &Cli) -> Result<ExitCode> {
    let tol = cli.tolerance;
    match &cli.command {
        Command::Norm { input, kind, p, q, r, alpha, witness } => {
            let f = load::<S>(input.as_deref(), tol)?;
            let idx = || LorentzIndex::new(*p, *q);
            let value = match kind {
                Kind::Star => h_norm(&f, NormKind::Star, idx()?),
                Kind::Square => h_norm(&f, NormKind::Square, idx()?),
                Kind::CondSquare => h_norm(&f, NormKind::CondSquare, idx()?),
                Kind::Q => h_norm(&f, NormKind::Q, idx()?),
                Kind::D => h_norm(&f, NormKind::D, idx()?),
                Kind::Lpq => terminal_lorentz_norm(&f, idx()?),
                Kind::Bmo => bmo_exact(&f, *r, *alpha)?,
                Kind::BmoSeq => {
                    let config = BmoSeqConfig { seed: cli.seed.unwrap_or(0), ..BmoSeqConfig::default() };
                    let est = bmo_seq_estimate(&f, *r, *q, *alpha, &config)?;
                    if *witness {
                        emit(None, &serde_json::to_string_pretty(&est.to_doc())?)?;
                        return Ok(ExitCode::SUCCESS);
                    }
                    est.value
                }
            };
            if *witness && *kind != Kind::BmoSeq {
                bail!("--witness only applies to --kind bmo-seq");
            }
            emit(None, &value.to_string())?;
        }
        Command::Decompose { input, target, p, unit, residual, out } => {
            let f = load::<S>(input.as_deref(), tol)?;
            let dec = decompose_with(&f, *target, *p, S::from_i64(3), *unit)?;
            let text = if *residual {
                let rest = f.sub(&dec.reconstruct())?;
                serde_json::to_string_pretty(&MartingaleDoc::from_martingale(&rest))?
            } else {
                serde_json::to_string_pretty(&dec.to_doc())?
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Fracint { input, alpha, out } => {
            let f = load::<S>(input.as_deref(), tol)?;
            let image = fractional_integral(&f, *alpha)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&MartingaleDoc::from_martingale(&image))?)?;
        }
        Command::EnumerateStoppingTimes { input, cap, count } => {
            let value: serde_json::Value =
                serde_json::from_str(&read_input(input.as_deref())?).context("parsing tree document")?;
            let tree_doc: TreeDoc = match value.get("tree") {
                Some(t) if value.get("terminal").is_some() => serde_json::from_value(t.clone())?,
                _ => serde_json::from_value(value)?,
            };
            let tree: TreeRef<S> =
                Arc::new(build_tree_with_tolerance(&tree_doc, tol.unwrap_or_else(S::default_tolerance))?);
            let times = enumerate_stopping_times(&tree, *cap)?;
            let mut stdout = io::BufWriter::new(io::stdout().lock());
            if *count {
                writeln!(stdout, "{}", times.count())?;
            } else {
                for nu in times {
                    writeln!(stdout, "{}", serde_json::to_string(&nu.to_doc())?)?;
                }
            }
            stdout.flush()?;
        }
        Command::Experiment { .. } => unreachable!("experiments dispatch on the config mode"),
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment(cli: &Cli, name: ExperimentName, config: Option<&Path>, out: Option<&Path>) -> Result<ExitCode> {
    let mut config: ExperimentConfig = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| Error::ConfigError(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(seed) = cli.seed {
        config.bmo.seed = seed;
        if let Some(batch) = config.batch.as_mut() {
            batch.first_seed = seed;
        }
    }
    let report = run_experiment(name, &config)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join(format!("{name}.csv")), report.to_csv())?;
            fs::write(dir.join(format!("{name}.json")), report.summary_json())?;
        }
        None => emit(None, &report.to_csv())?,
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &report.hard_failures {
            eprintln!("hard failure: {failure}");
        }
        Ok(ExitCode::from(2))
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Command::Experiment { name, config, out } = &cli.command {
        return experiment(cli, *name, config.as_deref(), out.as_deref());
    }
    match cli.mode.unwrap_or(Mode::Rational) {
        Mode::Rational => run_typed::<Rational>(cli),
        Mode::Float => run_typed::<f64>(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
