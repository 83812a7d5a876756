//! Batch front end: `solve`, `continue`, `certify`, `validate`.
//!
//! Every invocation writes into a fresh run directory
//! `<output.dir>/<command>-<timestamp>` holding `manifest.txt` and the
//! command's artifacts. Exit codes: 0 success, 2 divergence or domain exit,
//! 3 configuration or input error, 4 KAM condition not met, 5 validation
//! threshold not met.

mod config;

pub use config::{RawConfig, RunConfig};

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::certificate::{self, CertificateError, MeasureOptions};
use crate::fourier::{read_coefficients, write_coefficients};
use crate::geometry::TorusEmbedding;
use crate::newton::{self, History, NewtonError};
use crate::system::{flow_validate, ForcedRotors, HamiltonianSystem, SystemError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{0}")]
    Divergence(String),
    #[error("KAM condition not satisfied (lhs = {lhs:e})")]
    CertificateFail { lhs: f64 },
    #[error("certificate hypotheses fail: {0}")]
    Hypotheses(String),
    #[error("validation deviation {deviation:e} is not below threshold {threshold:e}")]
    ValidationFail { deviation: f64, threshold: f64 },
    #[error("validation could not complete: {0}")]
    ValidationAborted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 3,
            CliError::Divergence(_) => 2,
            CliError::CertificateFail { .. } | CliError::Hypotheses(_) => 4,
            CliError::ValidationFail { .. } | CliError::ValidationAborted(_) => 5,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn newton_err(e: NewtonError) -> CliError {
    match e {
        NewtonError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Divergence(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qpkam",
    version,
    about = "Invariant tori of quasi-periodically forced Hamiltonian systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file (flat key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Parent directory for the run directory (overrides output.dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel stages.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Newton iteration from the initial torus.
    Solve(CommonArgs),
    /// Warm-started solves along `continue.epsilons`.
    Continue(CommonArgs),
    /// Measure hypotheses and evaluate the KAM condition on `torus.input`.
    Certify(CommonArgs),
    /// Integrate the flow from `torus.input` and compare.
    Validate(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Continue(_) => "continue",
            Command::Certify(_) => "certify",
            Command::Validate(_) => "validate",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Solve(a)
            | Command::Continue(a)
            | Command::Certify(a)
            | Command::Validate(a) => a,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err((dir, e)) => {
            if let Some(dir) = dir {
                println!("{}", dir.display());
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the configuration of `command`.
pub fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::read(p)?,
        None => RawConfig::default(),
    };
    for s in &common.set {
        raw.apply_override(s)?;
    }
    if let Some(out) = &common.out {
        raw.set("output.dir", &out.to_string_lossy())?;
    }
    RunConfig::from_raw(raw)
}

type RunResult = Result<PathBuf, (Option<PathBuf>, CliError)>;

/// Runs one command. On failure the run directory, if it was created, is
/// returned alongside the error.
pub fn run(command: &Command) -> RunResult {
    let common = command.common();
    let cfg = load_config(common).map_err(|e| (None, e))?;
    if let Some(t) = common.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let dir = create_run_dir(&cfg.output_dir, command.name()).map_err(|e| (None, e))?;
    let mut run = Run {
        dir: dir.clone(),
        artifacts: Vec::new(),
        notes: Vec::new(),
    };
    let outcome = match command {
        Command::Solve(_) => cmd_solve(&cfg, &mut run),
        Command::Continue(_) => cmd_continue(&cfg, &mut run),
        Command::Certify(_) => cmd_certify(&cfg, &mut run),
        Command::Validate(_) => cmd_validate(&cfg, &mut run),
    };
    let status = match &outcome {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("exit {} ({e})", e.exit_code()),
    };
    let manifest = run.manifest(command.name(), &cfg, common, &status);
    let written = fs::write(dir.join("manifest.txt"), manifest).map_err(|e| io_err(&dir, e));
    match (outcome, written) {
        (Err(e), _) | (Ok(()), Err(e)) => Err((Some(dir), e)),
        (Ok(()), Ok(())) => Ok(dir),
    }
}

struct Run {
    dir: PathBuf,
    artifacts: Vec<String>,
    notes: Vec<String>,
}

impl Run {
    fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    fn write_torus(&mut self, rel: &str, k: &TorusEmbedding) -> Result<(), CliError> {
        let dir = self.dir.join(rel);
        write_torus(&dir, k)?;
        self.artifacts.push(format!("{rel}/"));
        Ok(())
    }

    fn manifest(
        &self,
        command: &str,
        cfg: &RunConfig,
        common: &CommonArgs,
        status: &str,
    ) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command\t{command}");
        let _ = writeln!(s, "version\t{}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "started\t{}", chrono::Local::now().to_rfc3339());
        let _ = writeln!(s, "threads\t{}", rayon::current_num_threads());
        if let Some(c) = &common.config {
            let _ = writeln!(s, "config_file\t{}", c.display());
        }
        for o in &common.set {
            let _ = writeln!(s, "override\t{o}");
        }
        let _ = writeln!(s, "status\t{status}");
        for n in &self.notes {
            let _ = writeln!(s, "note\t{n}");
        }
        for a in &self.artifacts {
            let _ = writeln!(s, "artifact\t{a}");
        }
        let _ = writeln!(s, "# effective configuration");
        for (k, v) in cfg.raw.effective() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Creates `<parent>/<command>-<timestamp>`, adding a numeric suffix if the
/// name is taken.
fn create_run_dir(parent: &Path, command: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let base = format!("{command}-{stamp}");
    for i in 0.. {
        let name = if i == 0 {
            base.clone()
        } else {
            format!("{base}-{i}")
        };
        let path = parent.join(name);
        match fs::create_dir(&path) {
            Ok(()) => return Ok(path),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&path, e)),
        }
    }
    unreachable!()
}

/// Writes `winding.txt` and one `K_<i>.coef` per component.
pub fn write_torus(dir: &Path, k: &TorusEmbedding) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let w = k.winding();
    let mut s = String::new();
    for i in 0..w.nrows() {
        let row: Vec<String> = w.row(i).iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    fs::write(dir.join("winding.txt"), s).map_err(|e| io_err(dir, e))?;
    for (i, c) in k.components().iter().enumerate() {
        let path = dir.join(format!("K_{i}.coef"));
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_coefficients(c, BufWriter::new(f)).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Reads a torus written by [`write_torus`].
pub fn read_torus(dir: &Path) -> Result<TorusEmbedding, CliError> {
    let wpath = dir.join("winding.txt");
    let text = fs::read_to_string(&wpath).map_err(|e| io_err(&wpath, e))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse::<f64>()).collect())
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(&wpath, e))?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
        return Err(io_err(&wpath, "ragged or empty winding matrix"));
    }
    let winding = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let comps = (0..rows.len())
        .map(|i| {
            let path = dir.join(format!("K_{i}.coef"));
            let f = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
            read_coefficients(BufReader::new(f)).map_err(|e| io_err(&path, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    TorusEmbedding::new(winding, comps).map_err(|e| io_err(dir, e))
}

fn initial_torus(cfg: &RunConfig) -> Result<TorusEmbedding, CliError> {
    match &cfg.init {
        Some(dir) => read_torus(dir),
        None => TorusEmbedding::rotator(cfg.freqs.dims(), &cfg.trunc, &cfg.rotator_actions()?)
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

fn input_torus(cfg: &RunConfig) -> Result<TorusEmbedding, CliError> {
    match &cfg.input {
        Some(dir) => read_torus(dir),
        None => initial_torus(cfg),
    }
}

fn check_layout(cfg: &RunConfig, sys: &ForcedRotors, k: &TorusEmbedding) -> Result<(), CliError> {
    if k.dims() != cfg.freqs.dims() || k.n() != sys.n() {
        return Err(CliError::Input(format!(
            "torus dimensions {:?} do not match the configured system",
            k.dims()
        )));
    }
    crate::fourier::check_shape(&cfg.shape, k.trunc()).map_err(|e| CliError::Config(e.to_string()))
}

fn history_of(e: &NewtonError) -> Option<&History> {
    match e {
        NewtonError::Divergence { history } => Some(history),
        _ => None,
    }
}

fn summary_line(h: &History) -> String {
    let order = h
        .fitted_order(3)
        .map_or("nan".into(), |p| format!("{p:.4}"));
    format!(
        "converged={} iterations={} final_e_sup={:e} fitted_order={order}",
        h.converged,
        h.steps.len(),
        h.final_error()
    )
}

fn cmd_solve(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sys = cfg.system(cfg.epsilon)?;
    let k0 = initial_torus(cfg)?;
    check_layout(cfg, &sys, &k0)?;
    match newton::run_iteration(&k0, &sys, &cfg.freqs, &cfg.newton) {
        Ok(out) => {
            run.write("history.tsv", &out.history.to_tsv())?;
            run.write_torus("torus", &out.torus)?;
            run.notes.push(summary_line(&out.history));
            if out.history.converged {
                Ok(())
            } else {
                Err(CliError::Divergence(format!(
                    "no convergence within {} iterations ({})",
                    cfg.newton.max_iters,
                    summary_line(&out.history)
                )))
            }
        }
        Err(e) => {
            if let Some(h) = history_of(&e) {
                run.write("history.tsv", &h.to_tsv())?;
            }
            Err(newton_err(e))
        }
    }
}

fn cmd_continue(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let mut k = initial_torus(cfg)?;
    let mut summary = String::from(
        "leg\tepsilon\tconverged\titerations\tfinal_e_sup\tfitted_order\tavg_torsion\n",
    );
    let mut result = Ok(());
    for (leg, &eps) in cfg.epsilons.iter().enumerate() {
        let sys = cfg.system(eps)?;
        check_layout(cfg, &sys, &k)?;
        let rel = format!("leg_{leg:03}");
        let out = newton::run_iteration(&k, &sys, &cfg.freqs, &cfg.newton);
        let history = match &out {
            Ok(o) => Some(&o.history),
            Err(e) => history_of(e),
        };
        if let Some(h) = history {
            run.write(&format!("{rel}/history.tsv"), &h.to_tsv())?;
            let avg = h
                .steps
                .last()
                .map(|s| {
                    s.diagnostics
                        .avg_torsion
                        .iter()
                        .map(|x| format!("{x:e}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .unwrap_or_default();
            let _ = writeln!(
                summary,
                "{leg}\t{eps:?}\t{}\t{}\t{:e}\t{}\t{avg}",
                h.converged,
                h.steps.len(),
                h.final_error(),
                h.fitted_order(3)
                    .map_or("nan".into(), |p| format!("{p:.4}"))
            );
        }
        match out {
            Ok(o) if o.history.converged => {
                run.write_torus(&format!("{rel}/torus"), &o.torus)?;
                k = o.torus;
            }
            Ok(o) => {
                let _ = writeln!(summary, "# stopped at leg {leg}: no convergence");
                result = Err(CliError::Divergence(format!(
                    "continuation stopped at epsilon = {eps}: {}",
                    summary_line(&o.history)
                )));
                break;
            }
            Err(e) => {
                let _ = writeln!(summary, "# stopped at leg {leg}: {e}");
                result = Err(newton_err(e));
                break;
            }
        }
    }
    run.write("summary.tsv", &summary)?;
    result
}

fn cmd_certify(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sys = cfg.system(cfg.epsilon)?;
    let k = input_torus(cfg)?;
    check_layout(cfg, &sys, &k)?;
    let opts = MeasureOptions {
        rho: cfg.certify_rho,
        a1: cfg.newton.a1,
        a2: cfg.newton.a2,
        box_radius: cfg.box_radius,
        inflation: cfg.inflation,
        lattice_budget: cfg.lattice_budget,
    };
    let report =
        certificate::certify(&k, &sys, &cfg.freqs, &cfg.shape, &opts).map_err(|e| match e {
            CertificateError::InvalidInput(m) => CliError::Config(m),
            CertificateError::System(
                SystemError::DomainExit { .. } | SystemError::NonFinite { .. },
            ) => CliError::Divergence(e.to_string()),
            other => CliError::Hypotheses(other.to_string()),
        })?;
    run.write("certificate.txt", &report.to_text())?;
    run.write("certificate.kv", &report.to_kv())?;
    run.notes
        .push(format!("lhs={:e} verdict={}", report.lhs, report.verdict));
    if report.verdict {
        Ok(())
    } else {
        Err(CliError::CertificateFail { lhs: report.lhs })
    }
}

fn cmd_validate(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sys = cfg.system(cfg.epsilon)?;
    let k = input_torus(cfg)?;
    check_layout(cfg, &sys, &k)?;
    let rep = flow_validate(
        &k,
        &sys,
        &cfg.freqs,
        cfg.t_final,
        cfg.samples,
        cfg.checkpoints,
        cfg.integrator_tol,
    )
    .map_err(|e| match e {
        SystemError::InvalidParameters(m) => CliError::Config(m),
        other => CliError::ValidationAborted(other.to_string()),
    })?;
    let mut s = String::from("sample\ttheta0\tphi0\tmax_deviation\n");
    for (i, smp) in rep.samples.iter().enumerate() {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            s,
            "{i}\t{}\t{}\t{:e}",
            fmt(&smp.theta0),
            fmt(&smp.phi0),
            smp.max_deviation
        );
    }
    let _ = writeln!(s, "# t_final\t{:?}", rep.t_final);
    let _ = writeln!(s, "# max_deviation\t{:e}", rep.max_deviation);
    run.write("validation.tsv", &s)?;
    run.notes
        .push(format!("max_deviation={:e}", rep.max_deviation));
    if rep.max_deviation < cfg.threshold {
        Ok(())
    } else {
        Err(CliError::ValidationFail {
            deviation: rep.max_deviation,
            threshold: cfg.threshold,
        })
    }
}
