//! Command-line driver. Every command writes machine-readable artifacts
//! (JSON, plus CSV where the data is tabular) and a `manifest.json` listing
//! them with their SHA-256 so repeated runs can be compared.

use crate::bounds::{bound_ratios, verify_bound, BoundReport, BoundsError, EnvelopeSpec};
use crate::brstbv::{anomaly_candidate, is_zero_mod_d, run_suite, BrstError, LieData};
use crate::flow::{cutoff_differences, integrate_flow, CacTable, CutoffReport, FlowConfig, FlowError, CACHE_ENV};
use crate::kinematics::{MomentumConfig, Vec4};
use crate::specialfns::{run_lemma_suite, SpecialError};
use crate::trees::{TreeError, WeightedTree};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "rgflow", version, about = "Flow tables, tree bounds, BRST checks and lemma sweeps")]
pub struct Cli {
    /// JSON configuration (a flow configuration for the flow commands).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports, tables and the run manifest.
    #[arg(long, global = true, default_value = "rgflow-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 20240607)]
    pub seed: u64,
    /// Worker thread cap; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the flow hierarchy and write the correlation tables.
    IntegrateFlow(FlowArgs),
    /// Check tables against the tree envelopes.
    VerifyBounds(BoundsArgs),
    /// Weight and dimension of a tree read from JSON.
    EvalTree(TreeArgs),
    /// Symbolic BRST/BV checks for a gauge algebra.
    BrstCheck(BrstArgs),
    /// Randomised validation of the appendix estimates.
    LemmaSuite(LemmaArgs),
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// UV cutoff in units of μ; repeat to integrate several cutoffs and
    /// report the differences at Λ = 0.
    #[arg(long = "lambda0")]
    pub lambda0: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// `table.json` written by integrate-flow; integrates from `--config` if absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Log-polynomial degree; defaults to `l + 1` per stage.
    #[arg(long)]
    pub degree: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// Momenta as `x,y,z,t;x,y,z,t;...`. Without a special vertex the last
    /// momentum may be omitted and is then fixed by conservation.
    #[arg(long)]
    pub q: String,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
}

#[derive(Debug, Args)]
pub struct BrstArgs {
    #[arg(long, default_value = "su2")]
    pub algebra: String,
    #[arg(long)]
    pub anomaly: bool,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    /// Comma-separated lemma names, e.g. `A5,A10`.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Samples per split; lemma defaults otherwise.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Brst(#[from] BrstError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Checks ran but at least one failed.
pub const EXIT_TOLERANCE: i32 = 1;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Flow(_) => 10,
            CliError::Bounds(_) => 11,
            CliError::Tree(_) => 12,
            CliError::Brst(_) => 13,
            CliError::Special(_) => 14,
        }
    }
}

fn io<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub rgflow: &'static str,
    pub manifest_format: u32,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    /// SHA-256 of the canonical JSON of the command's effective inputs.
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub cache_dir: Option<String>,
    pub versions: Versions,
    pub artifacts: Vec<Artifact>,
    pub passed: bool,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects written files for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(io)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(io)?;
        self.text(name, &text)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(io)?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(io)?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// Registers every regular file under `sub` written by someone else.
    fn adopt_dir(&mut self, sub: &Path) -> Result<(), CliError> {
        let mut found: Vec<PathBuf> = std::fs::read_dir(sub)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        found.sort();
        self.files.extend(found);
        Ok(())
    }

    fn artifacts(&self) -> Result<Vec<Artifact>, CliError> {
        self.files
            .iter()
            .map(|p| Ok(Artifact { path: p.clone(), sha256: sha256_hex(&std::fs::read(p).map_err(io)?) }))
            .collect()
    }
}

/// What a command reports back to the driver.
struct Outcome {
    config_hash: String,
    passed: bool,
}

fn read_flow_config(path: Option<&Path>) -> Result<FlowConfig, CliError> {
    match path {
        None => Ok(FlowConfig::default()),
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Usage(format!("config file {} not found", p.display())));
            }
            let text = std::fs::read_to_string(p).map_err(io)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn hash_json<T: Serialize>(v: &T) -> String {
    sha256_hex(serde_json::to_string(v).expect("serialisable").as_bytes())
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "p")
}

fn cmd_integrate_flow(cli: &Cli, a: &FlowArgs, out: &mut Outputs) -> Result<Outcome, CliError> {
    let base = read_flow_config(cli.config.as_deref())?;
    let cutoffs = if a.lambda0.is_empty() { vec![base.lambda0] } else { a.lambda0.clone() };
    let configs: Vec<FlowConfig> = cutoffs.iter().map(|&l0| FlowConfig { lambda0: l0 * base.mu, ..base.clone() }).collect();
    for c in &configs {
        c.validate()?;
    }
    let mut tables = Vec::new();
    for c in &configs {
        let t = integrate_flow(c)?;
        let dir = if configs.len() == 1 { out.dir.clone() } else { out.dir.join(format!("lambda0_{}", fmt_num(c.lambda0))) };
        t.save(&dir)?;
        out.adopt_dir(&dir)?;
        println!("Λ₀ = {}: {} stages -> {}", c.lambda0, t.stages.len(), dir.join("table.json").display());
        tables.push(t);
    }
    if tables.len() > 1 {
        let mut reports: Vec<CutoffReport> = Vec::new();
        for s in &tables[0].stages {
            reports.push(cutoff_differences(&tables, s.l, s.n, 0)?);
        }
        #[derive(Serialize)]
        struct Row {
            l: u32,
            n: usize,
            lambda0_from: f64,
            lambda0_to: f64,
            max_abs_diff: f64,
        }
        let rows: Vec<Row> = reports
            .iter()
            .flat_map(|r| {
                r.steps.iter().map(move |s| Row {
                    l: r.l,
                    n: r.n,
                    lambda0_from: s.lambda0_from,
                    lambda0_to: s.lambda0_to,
                    max_abs_diff: s.max_abs_diff,
                })
            })
            .collect();
        for r in &rows {
            println!("({}, {}) Λ₀ {} -> {}: max |ΔL(Λ=0)| = {:.6e}", r.l, r.n, r.lambda0_from, r.lambda0_to, r.max_abs_diff);
        }
        out.json("convergence.json", &reports)?;
        out.csv("convergence.csv", &rows)?;
    }
    Ok(Outcome { config_hash: hash_json(&configs), passed: true })
}

fn cmd_verify_bounds(cli: &Cli, a: &BoundsArgs, out: &mut Outputs) -> Result<Outcome, CliError> {
    let table = match &a.table {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Usage(format!("table {} not found", p.display())));
            }
            CacTable::load(p)?
        }
        None => integrate_flow(&read_flow_config(cli.config.as_deref())?)?,
    };
    let mut reports: Vec<BoundReport> = Vec::new();
    #[derive(Serialize)]
    struct Row {
        l: u32,
        n: usize,
        probe: usize,
        lambda: f64,
        ratio: f64,
    }
    for s in &table.stages {
        let spec = EnvelopeSpec::scalar(s.n);
        let d = a.degree.unwrap_or(s.l + 1);
        let r = verify_bound(&table, s.l, s.n, &spec, d)?;
        println!(
            "({}, {}) d={} c={:.4e} max ratio {:.4e} violations {} {}",
            r.l,
            r.n,
            r.degree,
            r.c_fit,
            r.max_ratio,
            r.violations.len(),
            if r.passed { "PASS" } else { "FAIL" }
        );
        let ratios = bound_ratios(s, &table.meta.lambda, table.meta.config.mu, &spec, d)?;
        let rows: Vec<Row> = ratios
            .iter()
            .enumerate()
            .flat_map(|(p, row)| {
                row.iter().zip(&table.meta.lambda).map(move |(&ratio, &lambda)| Row { l: s.l, n: s.n, probe: p, lambda, ratio })
            })
            .collect();
        out.csv(&format!("bound_ratios_l{}_n{}.csv", s.l, s.n), &rows)?;
        reports.push(r);
    }
    out.json("bounds.json", &reports)?;
    let passed = reports.iter().all(|r| r.passed);
    Ok(Outcome { config_hash: hash_json(&(&table.meta.config_hash, a.degree)), passed })
}

fn parse_momenta(s: &str) -> Result<Vec<Vec4>, CliError> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let xs: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("momentum component {x:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            <[f64; 4]>::try_from(xs).map_err(|v| CliError::Usage(format!("momentum needs 4 components, got {}", v.len())))
        })
        .collect()
}

fn cmd_eval_tree(a: &TreeArgs, out: &mut Outputs) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(&a.file).map_err(|e| CliError::Usage(format!("{}: {e}", a.file.display())))?;
    let tree = WeightedTree::from_json(&text)?;
    let q = parse_momenta(&a.q)?;
    let n = tree.n_legs();
    let cfg = if tree.has_special() {
        MomentumConfig::free(q)
    } else if q.len() + 1 == n {
        MomentumConfig::conserved_from_independent(q)
    } else {
        MomentumConfig::conserved(q).map_err(TreeError::from)?
    };
    let weight = tree.weight(&cfg, a.mu, a.lambda)?;
    let dimension = tree.dimension();
    println!("dimension = {dimension}");
    println!("weight = {weight:.17e}");
    #[derive(Serialize)]
    struct Report<'a> {
        tree: &'a WeightedTree,
        momenta: &'a [Vec4],
        lambda: f64,
        mu: f64,
        dimension: f64,
        weight: f64,
    }
    let rep = Report { tree: &tree, momenta: &cfg.momenta, lambda: a.lambda, mu: a.mu, dimension, weight };
    out.json("tree_eval.json", &rep)?;
    Ok(Outcome { config_hash: hash_json(&(&tree, &cfg.momenta, a.lambda, a.mu)), passed: true })
}

fn cmd_brst_check(cli: &Cli, a: &BrstArgs, out: &mut Outputs) -> Result<Outcome, CliError> {
    let rep = run_suite(&a.algebra, a.anomaly, cli.seed)?;
    for c in &rep.checks {
        println!("{:<32} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    if a.anomaly {
        let lie = LieData::by_name(&a.algebra)?;
        let cand = anomaly_candidate(&lie);
        if is_zero_mod_d(&cand) {
            println!("anomaly = 0");
        } else {
            println!("anomaly ≠ 0 ({} terms)", cand.len());
        }
        out.text("anomaly.txt", &(cand.render().join("\n") + "\n"))?;
    }
    println!("{} checks in {:.2} s", rep.checks.len(), rep.seconds);
    out.json("brst.json", &rep)?;
    Ok(Outcome { config_hash: hash_json(&(&a.algebra, a.anomaly)), passed: rep.passed() })
}

fn cmd_lemma_suite(cli: &Cli, a: &LemmaArgs, out: &mut Outputs) -> Result<Outcome, CliError> {
    let names: Vec<String> = a.only.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    let rep = run_lemma_suite(&names, a.samples, cli.seed)?;
    #[derive(Serialize)]
    struct Row<'a> {
        lemma: &'a str,
        family: &'a str,
        constant: f64,
        max_validation_ratio: f64,
        violations: usize,
    }
    let mut rows = Vec::new();
    for l in &rep.lemmas {
        println!(
            "{:<4} {} train={} validate={} violations={} {:.2}s  {}",
            l.name,
            if l.passed { "PASS" } else { "FAIL" },
            l.train_samples,
            l.validation_samples,
            l.violations,
            l.seconds,
            l.title
        );
        for f in &l.families {
            rows.push(Row {
                lemma: &l.name,
                family: &f.label,
                constant: f.constant,
                max_validation_ratio: f.max_validation_ratio,
                violations: f.violations,
            });
        }
    }
    out.json("lemmas.json", &rep)?;
    out.csv("lemmas.csv", &rows)?;
    Ok(Outcome { config_hash: hash_json(&(&names, a.samples)), passed: rep.passed })
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(m) => {
            if m.passed {
                0
            } else {
                EXIT_TOLERANCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a command and writes its manifest.
pub fn execute(cli: &Cli) -> Result<RunManifest, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let t0 = Instant::now();
    let mut out = Outputs::new(&cli.out)?;
    let outcome = match &cli.command {
        Command::IntegrateFlow(a) => cmd_integrate_flow(cli, a, &mut out)?,
        Command::VerifyBounds(a) => cmd_verify_bounds(cli, a, &mut out)?,
        Command::EvalTree(a) => cmd_eval_tree(a, &mut out)?,
        Command::BrstCheck(a) => cmd_brst_check(cli, a, &mut out)?,
        Command::LemmaSuite(a) => cmd_lemma_suite(cli, a, &mut out)?,
    };
    let manifest = RunManifest {
        command: std::env::args().collect(),
        config_hash: outcome.config_hash,
        seed: cli.seed,
        threads: cli.threads,
        cache_dir: std::env::var(CACHE_ENV).ok(),
        versions: Versions { rgflow: env!("CARGO_PKG_VERSION"), manifest_format: 1 },
        artifacts: out.artifacts()?,
        passed: outcome.passed,
        started_unix: started,
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(io)?;
    std::fs::write(cli.out.join("manifest.json"), text).map_err(io)?;
    Ok(manifest)
}
