//! `demol`: bond perception, featurization, prediction, training and
//! diagnostics for the dual-graph molecular model.
//!
//! Results go to stdout (or `--out`) as JSON; diagnostics go to stderr.
//! Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use demol_core::chem::{read_molecule, CovalentRadiiTable, Molecule};
use demol_core::encoding::Featurizer;
use demol_core::graph::{build_atom_graph, build_line_graph};
use demol_core::model::{LossDraw, Model, ModelConfig};
use demol_core::rng::Rng;
use demol_core::selftest::run_selftest;
use demol_core::train::{Checkpoint, Trainer};
use demol_core::Error;

use config::{load_config, RunConfig};

/// Relative error accepted by `gradcheck`.
const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Finite-difference step of `gradcheck`.
const GRADCHECK_STEP: f64 = 1e-4;
/// Coordinates above this relative error are re-differenced in wider precision.
const GRADCHECK_REFINE_ABOVE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "demol", version, about = "Dual-graph molecular representation learning", allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Bond threshold factor: atoms bond when d <= alpha (r_i + r_j).
    #[arg(long, global = true, default_value_t = demol_core::bonds::DEFAULT_ALPHA)]
    alpha: f64,
    /// Atom attention cutoff in Å (overrides the config file).
    #[arg(long, global = true)]
    cutoff: Option<f64>,
    /// Flat `key = value` file with model and training settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for parameter initialization and training draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the JSON result here instead of stdout (a directory for `featurize --dataset`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory of `.xyz` / `.json` molecule files.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Checkpoint to read parameters from, or for `train` the file to write.
    #[arg(long, global = true)]
    ckpt: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Perceived bonds as `[i, j, length]` triples.
    Bonds { input: Option<PathBuf> },
    /// Dense encoding bundle: biases, masks, hop counts and cosines.
    Featurize { input: Option<PathBuf> },
    /// Predicted property in eV.
    Predict { input: Option<PathBuf> },
    /// Train on `--dataset`, optionally continuing from `--resume`.
    Train {
        /// Checkpoint of an earlier run on the same dataset.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter gradient.
    Gradcheck { input: Option<PathBuf> },
    /// Every attention map of one forward pass.
    DumpAttention { input: Option<PathBuf> },
    /// Built-in invariant suite on embedded fixtures.
    Selftest,
}

/// Failure classified by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Self::Numeric(e.to_string())
        } else if matches!(e, Error::Config(_)) {
            Self::Usage(e.to_string())
        } else {
            Self::Data(e.to_string())
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("demol: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bonds { input } => single(cli, input, bonds),
        Command::Featurize { input } => {
            if let Some(dir) = &cli.dataset {
                if input.is_some() {
                    return Err(Failure::Usage("give either an input file or --dataset, not both".into()));
                }
                featurize_dataset(cli, dir)
            } else {
                single(cli, input, featurize)
            }
        }
        Command::Predict { input } => single(cli, input, predict),
        Command::Train { resume } => train(cli, resume.as_deref()),
        Command::Gradcheck { input } => single(cli, input, gradcheck),
        Command::DumpAttention { input } => single(cli, input, dump_attention),
        Command::Selftest => selftest(cli),
    }
}

/// Runs a one-molecule subcommand and emits its JSON.
fn single(cli: &Cli, input: &Option<PathBuf>, f: fn(&Cli, &Molecule) -> Outcome<Value>) -> Outcome {
    let path = input.as_deref().ok_or_else(|| Failure::Usage("missing input molecule file".into()))?;
    let m = load_molecule(path)?;
    let value = f(cli, &m)?;
    emit(cli.out.as_deref(), &value)
}

fn load_molecule(path: &Path) -> Outcome<Molecule> {
    read_molecule(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Outcome {
    let mut text = serde_json::to_string(value).map_err(|e| Failure::Numeric(format!("cannot encode output: {e}")))?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| Failure::Data(e.to_string()))
        }
    }
}

fn radii() -> Outcome<CovalentRadiiTable> {
    match std::env::var_os("DEMOL_RADII") {
        Some(path) => CovalentRadiiTable::load(&path)
            .map_err(|e| Failure::Data(format!("{} (from DEMOL_RADII): {e}", Path::new(&path).display()))),
        None => Ok(CovalentRadiiTable::default()),
    }
}

/// Settings from `--config` with flag overrides applied.
fn run_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut rc = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = cli.cutoff {
        rc.model.cutoff = c;
    }
    if let Some(s) = cli.seed {
        rc.train.seed = s;
    }
    rc.model.validate()?;
    rc.train.validate()?;
    Ok(rc)
}

fn featurizer(cli: &Cli, model: &ModelConfig) -> Outcome<Featurizer> {
    Ok(model.featurizer(radii()?, cli.alpha)?)
}

/// Parameters from `--ckpt` when given, otherwise a fresh initialization.
fn model(cli: &Cli) -> Outcome<(Model<f64>, Featurizer)> {
    let model = match &cli.ckpt {
        Some(path) => {
            if cli.config.is_some() {
                return Err(Failure::Usage("--config and --ckpt conflict: the checkpoint carries its own configuration".into()));
            }
            let ck = Checkpoint::load(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            let mut config = ck.model_config;
            if let Some(c) = cli.cutoff {
                config.cutoff = c;
            }
            Model::from_params(config, ck.params)?
        }
        None => {
            let rc = run_config(cli)?;
            Model::new(rc.model, rc.train.seed)?
        }
    };
    let fz = featurizer(cli, model.config())?;
    Ok((model, fz))
}

fn bonds(cli: &Cli, m: &Molecule) -> Outcome<Value> {
    let bonds = demol_core::bonds::predict_bonds(m, &radii()?, cli.alpha)?;
    let list: Vec<Value> = bonds.iter().map(|b| json!([b.i, b.j, b.length])).collect();
    Ok(json!({ "bonds": list }))
}

fn featurize(cli: &Cli, m: &Molecule) -> Outcome<Value> {
    let (model, fz) = model(cli)?;
    let ex = fz.example(m)?;
    let bundle = model.bundle(&ex, fz.settings.cutoff)?;
    if !bundle.is_finite() {
        return Err(Failure::Numeric("encoding bundle is not finite".into()));
    }
    let mut value = bundle.to_json();
    value["name"] = json!(m.name());
    value["bonds"] = json!(ex.bonds.keys());
    let g = build_atom_graph(m, &ex.bonds)?;
    value["adjacency_atom"] = json!(g.adjacency().to_rows());
    value["adjacency_bond"] = json!(build_line_graph(&g, &ex.bonds)?.adjacency().to_rows());
    Ok(value)
}

fn dataset_files(dir: &Path) -> Outcome<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("xyz" | "json")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Failure::Data(format!("{}: no .xyz or .json molecule files", dir.display())));
    }
    Ok(files)
}

/// One bundle file per molecule, named after the input file.
fn featurize_dataset(cli: &Cli, dir: &Path) -> Outcome {
    let out = cli.out.as_deref().ok_or_else(|| Failure::Usage("featurize --dataset needs --out DIR".into()))?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    let mut written = Vec::new();
    for path in dataset_files(dir)? {
        let m = load_molecule(&path)?;
        let value = featurize(cli, &m).map_err(|f| match f {
            Failure::Data(msg) => Failure::Data(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("molecule");
        let target = out.join(format!("{stem}.json"));
        emit(Some(&target), &value)?;
        written.push(target.display().to_string());
    }
    emit(None, &json!({ "written": written }))
}

fn predict(cli: &Cli, m: &Molecule) -> Outcome<Value> {
    let (model, fz) = model(cli)?;
    let ex = fz.example(m)?;
    let p = model.predict(&ex.features)?;
    if !p.is_finite() {
        return Err(Failure::Numeric("prediction is not finite".into()));
    }
    Ok(json!({ "prediction_ev": p }))
}

fn dump_attention(cli: &Cli, m: &Molecule) -> Outcome<Value> {
    let (model, fz) = model(cli)?;
    let ex = fz.example(m)?;
    let dump = model.dump_attention(&ex.features)?;
    serde_json::to_value(dump).map_err(|e| Failure::Numeric(e.to_string()))
}

fn gradcheck(cli: &Cli, m: &Molecule) -> Outcome<Value> {
    let (model, fz) = model(cli)?;
    let m = if m.target().is_none() && model.config().loss_weights[0] > 0.0 {
        eprintln!("demol: {} has no target; using 0 eV for the property loss", m.name());
        m.clone().with_target(Some(0.0))
    } else {
        m.clone()
    };
    let ex = fz.example(&m)?;
    let seed = cli.seed.unwrap_or(0);
    let draw: LossDraw = model.draw(&ex, &fz, &mut Rng::new(seed))?;
    let report = model.grad_check(&ex, &draw, GRADCHECK_STEP, GRADCHECK_REFINE_ABOVE)?;
    let passed = report.max_rel_error <= GRADCHECK_TOLERANCE;
    let mut value = serde_json::to_value(&report).map_err(|e| Failure::Numeric(e.to_string()))?;
    value["tolerance"] = json!(GRADCHECK_TOLERANCE);
    value["passed"] = json!(passed);
    if !passed {
        emit(cli.out.as_deref(), &value)?;
        return Err(Failure::Numeric(format!(
            "gradient check failed: max relative error {:.3e} > {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )));
    }
    Ok(value)
}

fn load_dataset(dir: &Path) -> Outcome<Vec<Molecule>> {
    dataset_files(dir)?.iter().map(|p| load_molecule(p)).collect()
}

fn train(cli: &Cli, resume: Option<&Path>) -> Outcome {
    let dir = cli.dataset.as_deref().ok_or_else(|| Failure::Usage("train needs --dataset DIR".into()))?;
    let molecules = load_dataset(dir)?;
    let mut trainer = match resume {
        Some(path) => {
            if cli.config.is_some() || cli.seed.is_some() || cli.cutoff.is_some() {
                return Err(Failure::Usage(
                    "--resume continues the checkpointed run; drop --config, --seed and --cutoff".into(),
                ));
            }
            let ck = Checkpoint::load(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            let fz = featurizer(cli, &ck.model_config)?;
            Trainer::<f64>::resume(ck, fz, &molecules)?
        }
        None => {
            let rc = run_config(cli)?;
            let fz = featurizer(cli, &rc.model)?;
            Trainer::<f64>::new(rc.model, rc.train, fz, &molecules)?
        }
    };
    let (steps, log_every) = (trainer.config().steps, trainer.config().log_every.max(1));
    trainer.run_until(steps, |log| {
        if log.step % log_every == 0 || log.step == steps {
            eprintln!("step {:>6}  loss {:.6}  grad_norm {:.4}", log.step, log.loss.total, log.grad_norm);
        }
    })?;
    if let Some(path) = &cli.ckpt {
        trainer
            .checkpoint()?
            .save(path)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    }
    let mae = trainer.evaluate()?;
    let history: Vec<_> = trainer.history().iter().filter(|l| l.step % log_every == 0 || l.step == steps).collect();
    emit(
        cli.out.as_deref(),
        &json!({
            "steps": trainer.steps_done(),
            "molecules": trainer.examples().len(),
            "train_mae_ev": mae,
            "history": history,
        }),
    )
}

fn selftest(cli: &Cli) -> Outcome {
    let results = run_selftest();
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in results.iter().filter(|r| !r.passed) {
        eprintln!("FAIL {}: {}", r.name, r.detail);
    }
    emit(cli.out.as_deref(), &json!({ "passed": failed == 0, "checks": results }))?;
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
