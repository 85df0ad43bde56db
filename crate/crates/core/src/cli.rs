//! Command-line front end. Every command reads flags, writes plain-text
//! outputs under `--out`, and returns a process exit status: 0 success or
//! certified, 1 not certified, 2 malformed input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adversary::{perturbation_sweep, AdversarySpec, Attack};
use crate::bell::{
    all_I, all_K, bell_operator, classical_bound, reference_observables, seesaw_max,
    BellFunctional, SeesawOptions,
};
use crate::certify::{
    certify, certify_realization, CertificationReport, Check, DetectedBranch, DEFAULT_TOL,
};
use crate::config::{parse_gate_arg, read_adversary, write_atomic, GateFile, RunConfig};
use crate::error::{Error, Result};
use crate::extraction::{detect_branch, extract_all, extraction_checks, unitary_certificate};
use crate::network::{born_table, Condition, ProbabilityTable, Realization, Scheme};
use crate::pauli::{f_tensors, FTensorRecord};
use crate::primitives::Branch;
use crate::tensor::eigh;

#[derive(Parser, Debug)]
#[command(name = "gatecert", version, about = "Device-independent gate certification in star networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pauli coefficients of the rotated GHZ projectors of a gate.
    Decompose(Common),
    /// Born table of the reference (optionally attacked) realization.
    Simulate(Common),
    /// Classical, see-saw and reference values of every functional.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// Certify a table file, or a generated realization.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Operator-level extraction from a generated realization.
    Extract(Common),
    /// Certify an attacked realization and sweep perturbation strength.
    Adversary {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ε values for the V·exp(iεH) sweep.
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.05,0.1")]
        sweep: Vec<f64>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value = "almost-di")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Gate name, `random:<seed>`, or a JSON gate file.
    #[arg(long, default_value = "cnot")]
    pub gate: String,
    #[arg(long, default_value = "plus")]
    pub branch: Branch,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON adversary script.
    #[arg(long)]
    pub adversary: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl Common {
    pub fn config(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            scheme: self.scheme,
            n: self.n,
            gate: parse_gate_arg(&self.gate)?,
            branch: self.branch,
            tol: self.tol,
            seed: self.seed,
            adversary: self.adversary.as_deref().map(read_adversary).transpose()?,
            out: self.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of a command: exit status plus text for stdout.
pub struct Outcome {
    pub status: i32,
    pub stdout: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { status: 0, stdout }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

#[derive(Serialize)]
struct Decomposition {
    n: usize,
    gate: GateFile,
    tensors: Vec<FTensorRecord>,
}

pub fn cmd_decompose(cfg: &RunConfig) -> Result<Outcome> {
    let tensors = f_tensors(&cfg.unitary()?)?;
    let mut text = String::new();
    for f in &tensors {
        let terms = f.iter_nonzero(1e-12).count();
        writeln!(text, "l={} terms={terms} sum_sq={:.12}", f.l(), f.sum_of_squares()).ok();
    }
    let doc = Decomposition {
        n: cfg.n,
        gate: GateFile::from_spec(&cfg.gate),
        tensors: tensors.iter().map(|f| f.to_record()).collect(),
    };
    write_atomic(&out_path(cfg, "decomposition.json"), json(&doc)?.as_bytes())?;
    Ok(Outcome::ok(text))
}

fn realization(cfg: &RunConfig) -> Result<(Realization, ProbabilityTable)> {
    let real = cfg.reference()?;
    match &cfg.adversary {
        Some(adv) => adv.table(&real),
        None => {
            let t = born_table(&real)?;
            Ok((real, t))
        }
    }
}

#[derive(Serialize)]
struct Summary {
    scheme: Scheme,
    n: usize,
    entries: usize,
    settings: usize,
    normalization_deviation: f64,
    p_l: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    p_r: Vec<Vec<f64>>,
}

fn summarize(table: &ProbabilityTable) -> Result<Summary> {
    let spec = *table.spec();
    let p_l = (0..spec.n_l())
        .map(|l| table.probability(0, None, &Condition::l(l)))
        .collect::<Result<_>>()?;
    let mut p_r = Vec::new();
    if spec.is_di() {
        for i in 0..spec.n {
            let row = (0..4u8)
                .map(|k| {
                    let mut r = vec![None; spec.n];
                    r[i] = Some(k);
                    table.probability(0, None, &Condition::none().with_r(r))
                })
                .collect::<Result<_>>()?;
            p_r.push(row);
        }
    }
    Ok(Summary {
        scheme: spec.scheme,
        n: spec.n,
        entries: table.raw().iter().filter(|p| p.is_some()).count(),
        settings: spec.n_settings(),
        normalization_deviation: table.normalization_deviation(),
        p_l,
        p_r,
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let (_, table) = realization(cfg)?;
    let mut buf = Vec::new();
    table.write_jsonl(&mut buf)?;
    write_atomic(&out_path(cfg, "table.jsonl"), &buf)?;
    let summary = json(&summarize(&table)?)?;
    write_atomic(&out_path(cfg, "summary.json"), summary.as_bytes())?;
    Ok(Outcome::ok(summary))
}

#[derive(Serialize)]
struct BoundRow {
    label: String,
    classical: f64,
    seesaw: f64,
    seesaw_converged: bool,
    reference: f64,
}

fn reference_value(f: &BellFunctional) -> Result<f64> {
    let b = bell_operator(f, &reference_observables(f, Branch::Plus))?;
    Ok(*eigh(b.matrix()).0.last().expect("non-empty spectrum"))
}

pub fn cmd_bounds(cfg: &RunConfig, restarts: usize) -> Result<Outcome> {
    let opts = SeesawOptions {
        restarts,
        seed: cfg.seed,
        ..SeesawOptions::default()
    };
    let mut rows = Vec::new();
    let mut text = String::new();
    for f in all_I(cfg.n)?.iter().chain(&all_K(cfg.n)?) {
        let cb = classical_bound(f)?;
        let ss = seesaw_max(f, &opts)?;
        let row = BoundRow {
            label: f.label().to_string(),
            classical: cb.value,
            seesaw: ss.value,
            seesaw_converged: ss.converged,
            reference: reference_value(f)?,
        };
        writeln!(
            text,
            "{:<12} classical={:.12} seesaw={:.12} reference={:.12}",
            row.label, row.classical, row.seesaw, row.reference
        )
        .ok();
        rows.push(row);
    }
    write_atomic(&out_path(cfg, "bounds.json"), json(&rows)?.as_bytes())?;
    Ok(Outcome::ok(text))
}

fn report_text(rep: &CertificationReport) -> String {
    let mut text = format!(
        "verdict: {}\nbranch: {}\nmax residual: {:.3e}\n",
        rep.verdict, rep.branch_detected, rep.max_residual
    );
    if let Some(note) = &rep.operator_note {
        writeln!(text, "note: {note}").ok();
    }
    for c in rep.failing() {
        writeln!(text, "failing: {} (residual {:.3e})", c.id, c.residual).ok();
    }
    text
}

fn has_noise(adv: &Option<AdversarySpec>) -> bool {
    adv.as_ref()
        .is_some_and(|a| a.steps.iter().any(|s| matches!(s, Attack::WhiteNoise { .. })))
}

fn finish_report(cfg: &RunConfig, rep: &CertificationReport) -> Result<Outcome> {
    write_atomic(&out_path(cfg, "report.json"), json(rep)?.as_bytes())?;
    Ok(Outcome {
        status: rep.verdict.exit_code(),
        stdout: report_text(rep),
    })
}

pub fn cmd_certify(cfg: &RunConfig, table: Option<&Path>) -> Result<Outcome> {
    let u = cfg.unitary()?;
    let rep = match table {
        Some(path) => {
            let t = ProbabilityTable::read_jsonl(BufReader::new(File::open(path)?))?;
            certify(&t, &u, cfg.tol)?
        }
        None if has_noise(&cfg.adversary) => {
            let (_, t) = realization(cfg)?;
            certify(&t, &u, cfg.tol)?
        }
        None => {
            let (real, _) = realization(cfg)?;
            certify_realization(&real, &u, cfg.tol)?
        }
    };
    finish_report(cfg, &rep)
}

#[derive(Serialize)]
struct ExtractionDoc {
    branch: DetectedBranch,
    frame_unitarity_deviation: f64,
    unitary_d: f64,
    unitary_blocks_raw: f64,
    unitary_blocks_gauge: f64,
    rows: Vec<Check>,
    pass: bool,
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<Outcome> {
    let u = cfg.unitary()?;
    let (real, _) = realization(cfg)?;
    let frames = extract_all(&real, cfg.tol)?;
    let branch = detect_branch(&real)?;
    let b = match branch {
        DetectedBranch::Minus => Branch::Minus,
        _ => Branch::Plus,
    };
    let rows = extraction_checks(&real, &frames, &u, b, cfg.tol)?;
    let cert = unitary_certificate(&real, &frames, &u, b)?;
    let pass = rows.iter().all(|r| r.pass);
    let doc = ExtractionDoc {
        branch,
        frame_unitarity_deviation: frames.max_unitarity_deviation(),
        unitary_d: cert.d,
        unitary_blocks_raw: cert.blocks_raw,
        unitary_blocks_gauge: cert.blocks_gauge,
        rows,
        pass,
    };
    write_atomic(&out_path(cfg, "extraction.json"), json(&doc)?.as_bytes())?;
    let mut text = format!("branch: {branch}\n");
    for r in &doc.rows {
        writeln!(text, "{} {:.3e} {}", r.id, r.residual, if r.pass { "ok" } else { "FAIL" }).ok();
    }
    Ok(Outcome {
        status: if pass { 0 } else { 1 },
        stdout: text,
    })
}

pub fn cmd_adversary(cfg: &RunConfig, sweep: &[f64]) -> Result<Outcome> {
    let mut out = cmd_certify(cfg, None)?;
    if !sweep.is_empty() {
        let (real, _) = realization(cfg)?;
        let rows = perturbation_sweep(&real, &cfg.unitary()?, sweep, cfg.seed)?;
        let mut csv = String::from("epsilon,max_residual\n");
        for (e, r) in rows {
            writeln!(csv, "{e},{r:.17e}").ok();
        }
        write_atomic(&out_path(cfg, "sweep.csv"), csv.as_bytes())?;
        out.stdout.push_str(&csv);
    }
    Ok(out)
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Decompose(c) => cmd_decompose(&c.config()?),
        Command::Simulate(c) => cmd_simulate(&c.config()?),
        Command::Bounds { common, restarts } => cmd_bounds(&common.config()?, *restarts),
        Command::Certify { common, table } => cmd_certify(&common.config()?, table.as_deref()),
        Command::Extract(c) => cmd_extract(&c.config()?),
        Command::Adversary { common, sweep } => cmd_adversary(&common.config()?, sweep),
    }
}

/// Parse arguments, run, print, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.status
        }
        Err(Error::NotCertified(msg)) => {
            eprintln!("not certified: {msg}");
            1
        }
        Err(Error::MixedBranch) => {
            eprintln!("{}", Error::MixedBranch);
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> RunConfig {
        RunConfig {
            out: dir.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn simulate_summary_has_uniform_p_l() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.gate = parse_gate_arg("cz").unwrap();
        cmd_simulate(&c).unwrap();
        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["entries"], 288);
        for p in v["p_l"].as_array().unwrap() {
            assert!((p.as_f64().unwrap() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(run(["gatecert", "simulate", "--n", "7"]), 2);
        assert_eq!(run(["gatecert", "simulate", "--scheme", "bogus"]), 2);
        assert_eq!(run(["gatecert", "frobnicate"]), 2);
    }
}
