//! Scenario-driven front end for the `capalloc` engine.
//!
//! Exit codes: 0 success, 1 failed reproduction checks, 2 configuration or
//! output-directory errors, 3 numerical failures.

mod app;
pub mod config;
pub mod reproduce;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use capalloc::allocation::{AllocationReport, Method, Regime};
use capalloc::discrete::LEVEL_MATCH_TOL;
use capalloc::empirical::fmt_full;
use capalloc::estimators::{
    estimate_is, estimate_mc, estimate_mcmc, estimate_mcmc_pooled, run_chain, ISConfig, MCConfig, MCMCConfig,
    TraceRow,
};
use capalloc::models::{sample_portfolio, PortfolioSpec};
use capalloc::multiperiod::{renewal_table, renewal_text, single_period_rorac_table, CellEngine, CellEvaluator, RoracTable};
use capalloc::risk_measures::{check_axiom, Axiom, AxiomOutcome, Evidence, RiskMeasureId};
use capalloc::sweep::{default_band, sweep_rorac, SweepCurve};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use app::run_cli;
use config::{EngineConfig, Output, RegimeName, ScenarioConfig};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_DIGITS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("numerical failure: {0}")]
    Numerical(capalloc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Output(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<capalloc::Error> for CliError {
    fn from(e: capalloc::Error) -> Self {
        use capalloc::Error as E;
        match e {
            E::InvalidLevel(_)
            | E::InvalidWeights(_)
            | E::InvalidModel(_)
            | E::InfiniteMean(_)
            | E::InvalidConfig(_)
            | E::InvalidDistribution(_)
            | E::BandOutOfRange { .. }
            | E::TooManyAtoms { .. } => Self::Config(e.to_string()),
            other => Self::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Output(e.to_string())
    }
}

/// Options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub digits: usize,
}

/// Everything a scenario produced.
#[derive(Debug, Default)]
pub struct Executed {
    pub report: Option<AllocationReport>,
    pub trace: Vec<TraceRow>,
    pub tables: Option<Tables>,
    pub sweep: Vec<(RegimeName, SweepCurve)>,
    pub dir: PathBuf,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Tables {
    pub single: RoracTable,
    pub renewal: Vec<Vec<f64>>,
    pub renewal_stderr: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    name: &'a str,
    provenance: &'a str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
    version: &'static str,
    threads: usize,
    wall_time_seconds: f64,
    files: Vec<String>,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn alpha_of(measure: &RiskMeasureId) -> Result<f64, CliError> {
    measure
        .alpha()
        .ok_or_else(|| CliError::Config(format!("{} has no probability level", measure.label())))
}

/// Exact risk and allocations on the portfolio's discrete joint law.
fn exact_report(spec: &PortfolioSpec, measure: RiskMeasureId, uniform_points: usize) -> Result<AllocationReport, CliError> {
    let joint = spec.discrete_joint(uniform_points)?;
    let risk = measure.exact_total(&joint)?;
    let alloc = measure.allocate_exact(&joint)?;
    let n = joint.n_assets();
    let means: Vec<f64> = (0..n).map(|i| joint.marginal(i).mean()).collect();
    let report = AllocationReport::new(Method::Exact, risk, alloc, vec![0.0; n]);
    Ok(if risk.abs() > LEVEL_MATCH_TOL { report.with_returns(means)? } else { report })
}

fn var_only(measure: &RiskMeasureId, engine: &str) -> Result<f64, CliError> {
    match measure {
        RiskMeasureId::VaR { alpha } => Ok(*alpha),
        other => Err(CliError::Config(format!("the {engine} engine estimates VaR, not {}", other.label()))),
    }
}

/// Runs the configured engine (and tables, when present).
pub fn run_engine(cfg: &ScenarioConfig, seed: u64) -> Result<Executed, CliError> {
    let spec = cfg.portfolio.spec()?;
    let mut done = Executed::default();
    let engine = cfg.engine.as_ref().ok_or_else(|| CliError::Config("no [engine] section".into()))?;
    let report = match engine {
        EngineConfig::Exact { uniform_points } => exact_report(&spec, cfg.measure, *uniform_points)?,
        EngineConfig::Mc { m, b, form, hit_band } => match cfg.measure {
            RiskMeasureId::VaR { alpha } => {
                let mc = MCConfig { m: *m, b: b.unwrap_or_else(|| default_band(alpha, *m)), alpha, form: *form, hit_band: *hit_band };
                estimate_mc(&spec, &mc, seed)?
            }
            RiskMeasureId::EsTail { alpha } => {
                let batch = sample_portfolio(&spec, *m, seed)?;
                let (es, est) = Regime::Es { alpha }.evaluate(&batch)?;
                let report = AllocationReport::new(Method::Mc, es, est.allocations, est.stderr);
                match spec.expected_components() {
                    Some(r) => report.with_returns(r)?,
                    None => report,
                }
            }
            other => return Err(CliError::Config(format!("the mc engine supports var and es-tail, not {}", other.label()))),
        },
        EngineConfig::Is { m, b_is, shift, sigma_is, form, hit_band } => {
            let alpha = var_only(&cfg.measure, "is")?;
            let is = ISConfig {
                m: *m,
                b_is: *b_is,
                alpha,
                shift: shift.per_asset(spec.n_assets()),
                sigma_is: sigma_is.clone(),
                form: *form,
                hit_band: *hit_band,
            };
            estimate_is(&spec, &is, seed)?
        }
        EngineConfig::Mcmc { m, var_level, thin, rho_prop, burn_in, ratio_mode, chains, trace_steps } => {
            let alpha = var_only(&cfg.measure, "mcmc")?;
            let level = match var_level {
                Some(v) => *v,
                None => {
                    let m_var = 1_000_000;
                    estimate_mc(&spec, &MCConfig::new(m_var, default_band(alpha, m_var), alpha), seed)?.risk
                }
            };
            let mcmc = MCMCConfig {
                m: *m,
                thin: *thin,
                rho_prop: *rho_prop,
                var_level: level,
                burn_in: *burn_in,
                ratio_mode: *ratio_mode,
                trace_steps: *trace_steps,
            };
            if cfg.outputs.contains(&Output::Trace) {
                done.trace = run_chain(&spec, &mcmc, seed, 0)?.trace;
            }
            if *chains > 1 {
                estimate_mcmc_pooled(&spec, &mcmc, seed, *chains)?
            } else {
                estimate_mcmc(&spec, &mcmc, seed)?
            }
        }
    };
    done.report = Some(report);
    if let Some(t) = &cfg.tables {
        let alpha = alpha_of(&cfg.measure)?;
        let regime = Regime::Var { alpha, b: t.b.unwrap_or_else(|| default_band(alpha, t.m)), form: t.form };
        let mut ev = CellEvaluator::new(&spec.assets, CellEngine::Sampled { m: t.m, regime }, seed)?;
        let single = single_period_rorac_table(&mut ev)?;
        let (renewal, renewal_stderr) = renewal_table(&mut ev)?;
        done.tables = Some(Tables { single, renewal, renewal_stderr });
    }
    Ok(done)
}

/// Runs the configured sweep.
pub fn run_sweep(cfg: &ScenarioConfig, seed: u64) -> Result<Executed, CliError> {
    let s = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("no [sweep] section".into()))?;
    let spec = cfg.portfolio.spec()?;
    let alpha = alpha_of(&cfg.measure)?;
    let named = s.regimes(alpha);
    let regimes: Vec<Regime> = named.iter().map(|r| r.1).collect();
    let curves = sweep_rorac(&spec, &s.grid()?, &regimes, s.m, seed)?;
    Ok(Executed { sweep: named.into_iter().map(|r| r.0).zip(curves).collect(), ..Default::default() })
}

fn regime_file(r: RegimeName) -> &'static str {
    match r {
        RegimeName::Var => "sweep_var.csv",
        RegimeName::Es => "sweep_es.csv",
        RegimeName::Blend => "sweep_blend.csv",
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<String>) -> Result<(), CliError> {
    fs::write(dir.join(name), bytes).map_err(|e| CliError::Output(format!("{}: {e}", dir.join(name).display())))?;
    files.push(name.to_string());
    Ok(())
}

fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "accepted", "total", "asset_k1", "asset_k2"]).map_err(capalloc::Error::from)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            u8::from(r.accepted).to_string(),
            fmt_full(r.total),
            fmt_full(r.asset_k1),
            fmt_full(r.asset_k2),
        ])
        .map_err(capalloc::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

/// Renders and writes everything in `done` under `out/<name>/`, with a
/// manifest. Returns the text summary.
fn emit(
    cfg: &ScenarioConfig,
    config_text: &str,
    command: &str,
    seed: u64,
    opts: &RunOptions,
    started: Instant,
    done: &mut Executed,
) -> Result<(), CliError> {
    let dir = opts.out.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let mut text = format!("scenario {} (seed {seed})\n", cfg.name);
    if let Some(report) = &done.report {
        text.push_str(&format!("measure {}\n", cfg.measure.label()));
        text.push_str(&report.to_text(opts.digits));
        if cfg.outputs.contains(&Output::Report) {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            write_file(&dir, "report.csv", &buf, &mut files)?;
        }
    }
    if cfg.outputs.contains(&Output::Trace) && !done.trace.is_empty() {
        write_file(&dir, "trace.csv", &trace_csv(&done.trace)?, &mut files)?;
    }
    if let Some(t) = &done.tables {
        let mut buf = Vec::new();
        t.single.write_csv(&mut buf)?;
        write_file(&dir, "table_single_period.csv", &buf, &mut files)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["new", "first_other", "rorac", "rorac_stderr"]).map_err(capalloc::Error::from)?;
        for (i, row) in t.renewal.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                w.write_record([(i + 1).to_string(), (k + 1).to_string(), fmt_full(*v), fmt_full(t.renewal_stderr[i][k])])
                    .map_err(capalloc::Error::from)?;
            }
        }
        write_file(&dir, "table_renewal.csv", &w.into_inner().map_err(|e| CliError::Output(e.to_string()))?, &mut files)?;
        text.push_str("single-period RORAC\n");
        text.push_str(&t.single.to_text(opts.digits));
        text.push_str("two-period renewal RORAC\n");
        text.push_str(&renewal_text(&t.renewal, opts.digits));
    }
    for (name, curve) in &done.sweep {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        write_file(&dir, regime_file(*name), &buf, &mut files)?;
        let o = &curve.optimum;
        let fmt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.*}", opts.digits));
        text.push_str(&format!(
            "{name:?} sweep: optimum u = {:.*}, portfolio RORAC {:.*}, asset RORACs {} / {}\n",
            opts.digits,
            o.u,
            opts.digits,
            o.portfolio_rorac,
            fmt(o.asset_roracs[0]),
            fmt(o.asset_roracs[1]),
        ));
    }
    write_file(&dir, "summary.txt", text.as_bytes(), &mut files)?;
    let manifest = Manifest {
        name: &cfg.name,
        provenance: &cfg.provenance,
        command,
        config_sha256: sha256_hex(config_text),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    done.dir = dir;
    done.text = text;
    Ok(())
}

/// `alloc run`: engine and tables.
pub fn cmd_run(cfg: &ScenarioConfig, config_text: &str, opts: &RunOptions) -> Result<Executed, CliError> {
    let started = Instant::now();
    let seed = opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let mut done = run_engine(cfg, seed)?;
    emit(cfg, config_text, "run", seed, opts, started, &mut done)?;
    Ok(done)
}

/// `alloc sweep`: the configured two-asset sweep.
pub fn cmd_sweep(cfg: &ScenarioConfig, config_text: &str, opts: &RunOptions) -> Result<Executed, CliError> {
    let started = Instant::now();
    let seed = opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let mut done = run_sweep(cfg, seed)?;
    emit(cfg, config_text, "sweep", seed, opts, started, &mut done)?;
    Ok(done)
}

/// One axiom check on the scenario's joint law.
#[derive(Debug, Clone)]
pub struct AxiomRow {
    pub axiom: Axiom,
    pub outcome: AxiomOutcome,
}

/// `alloc axioms`: every axiom the portfolio's joint law can witness.
pub fn cmd_axioms(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(Vec<AxiomRow>, String), CliError> {
    let spec = cfg.portfolio.spec()?;
    let points = match cfg.engine {
        Some(EngineConfig::Exact { uniform_points }) => uniform_points,
        _ => 101,
    };
    let joint = spec.discrete_joint(points)?;
    let mut checks = vec![
        (Axiom::PositiveHomogeneous, Evidence::Scaled { dist: joint.clone(), h: 2.0 }),
        (Axiom::TranslationInvariant, Evidence::Translated { dist: joint.clone(), h: 1.0 }),
    ];
    if joint.n_assets() >= 2 {
        for a in [Axiom::Subadditive, Axiom::Monotonous, Axiom::LawInvariant, Axiom::AllocationMonotonous] {
            checks.push((a, Evidence::Pair(joint.clone())));
        }
    }
    let mut rows = Vec::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axiom", "passed", "description", "lhs", "rhs"]).map_err(capalloc::Error::from)?;
    let mut text = format!("axioms for {} on scenario {}\n", cfg.measure.label(), cfg.name);
    for (axiom, evidence) in checks {
        let outcome = check_axiom(cfg.measure, axiom, &evidence)?;
        match &outcome {
            AxiomOutcome::Pass => {
                text.push_str(&format!("{axiom:?}: pass\n"));
                w.write_record([format!("{axiom:?}"), "1".into(), String::new(), String::new(), String::new()])
            }
            AxiomOutcome::Counterexample(c) => {
                text.push_str(&format!("{axiom:?}: counterexample: {}\n", c.description));
                w.write_record([format!("{axiom:?}"), "0".into(), c.description.clone(), fmt_full(c.lhs), fmt_full(c.rhs)])
            }
        }
        .map_err(capalloc::Error::from)?;
        rows.push(AxiomRow { axiom, outcome });
    }
    let dir = opts.out.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    fs::write(dir.join("axioms.csv"), w.into_inner().map_err(|e| CliError::Output(e.to_string()))?)?;
    Ok((rows, text))
}
