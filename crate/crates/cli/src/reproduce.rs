//! `alloc reproduce`: runs every bundled scenario and compares the results
//! with the published reference values. A failing scenario never stops the
//! others.

use std::fs;
use std::path::Path;

use capalloc::allocation::AllocationReport;
use capalloc::estimators::{count_operations, equal_groups, group_summary, EstimatorKind};

use crate::config::ScenarioConfig;
use crate::{cmd_run, cmd_sweep, CliError, Executed, RunOptions};

/// Scenario files compiled into the binary.
pub const BUNDLED: [(&str, &str); 7] = [
    ("example1.toml", include_str!("../scenarios/example1.toml")),
    ("example2.toml", include_str!("../scenarios/example2.toml")),
    ("example3_sweep.toml", include_str!("../scenarios/example3_sweep.toml")),
    ("example4_tables.toml", include_str!("../scenarios/example4_tables.toml")),
    ("example5_mc.toml", include_str!("../scenarios/example5_mc.toml")),
    ("example5_is.toml", include_str!("../scenarios/example5_is.toml")),
    ("example5_mcmc.toml", include_str!("../scenarios/example5_mcmc.toml")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub pass: bool,
    pub what: String,
}

fn check(pass: bool, what: String) -> Check {
    Check { pass, what }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub file: String,
    pub name: Option<String>,
    /// Set when the scenario could not be loaded or run.
    pub error: Option<String>,
    pub checks: Vec<Check>,
}

impl ScenarioRow {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

fn rel(x: f64, reference: f64) -> f64 {
    ((x - reference) / reference).abs()
}

/// Group means within 2 sd of the reference and sds within a factor 2.
fn group_checks(label: &str, allocations: &[f64], reference: [(f64, f64); 3]) -> Vec<Check> {
    let size = allocations.len() / 3;
    let stats = group_summary(allocations, &equal_groups(3, size));
    let mut out = Vec::new();
    for (g, (s, (mean, sd))) in stats.iter().zip(reference).enumerate() {
        out.push(check(
            (s.mean - mean).abs() <= 2.0 * s.sd,
            format!("{label} group {} mean {:.4} (sd {:.4}) vs {mean}", g + 1, s.mean, s.sd),
        ));
        out.push(check(
            s.sd >= sd / 2.0 && s.sd <= 2.0 * sd,
            format!("{label} group {} sd {:.4} within factor 2 of {sd}", g + 1, s.sd),
        ));
    }
    out
}

/// Instrumented hot-loop count within a factor 2 of the analytic cost.
fn ops_check(kind: EstimatorKind, r: &AllocationReport) -> Check {
    let n = r.allocations.len() as u64;
    let counts = count_operations(kind, n, 0);
    let (key, analytic) = match counts.var {
        Some(v) => ("ops_per_realization", v),
        None => ("ops_per_step", counts.allocation),
    };
    let analytic = *analytic.numer() as f64 / *analytic.denom() as f64;
    let measured = r.diagnostics.get(key).copied().unwrap_or(f64::NAN);
    check(
        measured >= analytic / 2.0 && measured <= 2.0 * analytic,
        format!("{kind:?} instrumented {measured:.2} operations vs analytic {analytic}"),
    )
}

/// Reference checks for a bundled scenario name; empty for other names.
pub fn reference_checks(name: &str, done: &Executed) -> Vec<Check> {
    let report = done.report.as_ref();
    match (name, report) {
        ("example1", Some(r)) => vec![
            check(r.risk == 100.0, format!("VaR(X1+X2) = {}", r.risk)),
            check(r.allocations == [0.0, 100.0], format!("allocations {:?}", r.allocations)),
        ],
        ("example2", Some(r)) => vec![
            check(
                r.allocations[1] < 0.0 && 0.0 < r.allocations[0],
                format!("alloc(X2) = {} < 0 < alloc(3 X1) = {}", r.allocations[1], r.allocations[0]),
            ),
            check(r.full_allocation_gap() == 0.0, format!("full allocation gap {}", r.full_allocation_gap())),
        ],
        ("example5-mc", Some(r)) => {
            let mut c = vec![check(rel(r.risk, 6.33) <= 0.02, format!("MC VaR {:.3} vs 6.33", r.risk))];
            c.extend(group_checks("MC", &r.allocations, [(0.038, 0.018), (0.064, 0.021), (0.109, 0.019)]));
            c.push(ops_check(EstimatorKind::Mc, r));
            c
        }
        ("example5-is", Some(r)) => {
            let mut c = vec![check(rel(r.risk, 6.38) <= 0.02, format!("IS VaR {:.3} vs 6.38", r.risk))];
            c.extend(group_checks("IS", &r.allocations, [(0.042, 0.016), (0.065, 0.016), (0.108, 0.021)]));
            c.push(ops_check(EstimatorKind::Is, r));
            c
        }
        ("example5-mcmc", Some(r)) => {
            let mut c = group_checks("MCMC", &r.allocations, [(0.038, 0.027), (0.066, 0.029), (0.109, 0.026)]);
            let acc = r.diagnostics.get("acceptance").copied().unwrap_or(f64::NAN);
            c.push(check((acc - 0.57).abs() <= 0.1, format!("acceptance {acc:.3} vs 0.57")));
            c.push(ops_check(EstimatorKind::Mcmc, r));
            c
        }
        ("example3-sweep", _) => sweep_checks(done),
        ("example4-tables", _) => table_checks(done),
        _ => Vec::new(),
    }
}

fn sweep_checks(done: &Executed) -> Vec<Check> {
    let mut out = Vec::new();
    for (name, curve) in &done.sweep {
        let o = &curve.optimum;
        let (lo, hi) = match name {
            crate::config::RegimeName::Var => (0.2, 0.4),
            crate::config::RegimeName::Es => (0.6, 0.8),
            crate::config::RegimeName::Blend => {
                let gap = o.asset_gap().unwrap_or(0.0);
                out.push(check(gap > 0.20, format!("blend optimum u = {:.3}: asset gap {:.1}%", o.u, 100.0 * gap)));
                continue;
            }
        };
        out.push(check((lo..=hi).contains(&o.u), format!("{name:?} optimum u = {:.3} in [{lo}, {hi}]", o.u)));
        let gap = o.compatibility_gap();
        out.push(check(
            gap <= 0.10 && o.asset_roracs.iter().all(Option::is_some),
            format!("{name:?} asset RORACs within {:.2}% of the portfolio RORAC", 100.0 * gap),
        ));
    }
    out
}

#[allow(clippy::needless_range_loop)]
fn table_checks(done: &Executed) -> Vec<Check> {
    let Some(t) = &done.tables else {
        return vec![check(false, "no tables produced".into())];
    };
    let single_ref = [[0.030, 0.033], [0.071, 0.044]];
    let renewal_ref = [[0.031, 0.032], [0.064, 0.051]];
    let mut out = Vec::new();
    for new in 0..2 {
        for other in 0..2 {
            let c = t.single.cells[new][other];
            out.push(check(
                (c.rorac - single_ref[new][other]).abs() <= 2.0 * c.rorac_stderr,
                format!(
                    "single period [X{}][X{}] = {:.4} (se {:.4}) vs {}",
                    new + 1,
                    other + 1,
                    c.rorac,
                    c.rorac_stderr,
                    single_ref[new][other]
                ),
            ));
        }
    }
    for new in 0..2 {
        for first in 0..2 {
            let (v, se) = (t.renewal[new][first], t.renewal_stderr[new][first]);
            out.push(check(
                (v - renewal_ref[new][first]).abs() <= 2.0 * se,
                format!("renewal [X{}][X{}] = {v:.4} (se {se:.4}) vs {}", new + 1, first + 1, renewal_ref[new][first]),
            ));
        }
    }
    out
}

fn run_one(file: &str, text: &str, opts: &RunOptions) -> ScenarioRow {
    let mut row = ScenarioRow { file: file.to_string(), name: None, error: None, checks: Vec::new() };
    let result = ScenarioConfig::parse(text).and_then(|cfg| {
        row.name = Some(cfg.name.clone());
        let done = if cfg.sweep.is_some() { cmd_sweep(&cfg, text, opts)? } else { cmd_run(&cfg, text, opts)? };
        Ok(reference_checks(&cfg.name, &done))
    });
    match result {
        Ok(checks) => row.checks = checks,
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs the bundled scenarios, or every `*.toml` in `dir` when given.
pub fn reproduce(dir: Option<&Path>, opts: &RunOptions) -> Result<Vec<ScenarioRow>, CliError> {
    let sources: Vec<(String, String)> = match dir {
        None => BUNDLED.iter().map(|(f, t)| (f.to_string(), t.to_string())).collect(),
        Some(dir) => {
            let mut files: Vec<_> = fs::read_dir(dir)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            files.sort();
            files
                .into_iter()
                .map(|p| {
                    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    let text = fs::read_to_string(&p).unwrap_or_default();
                    (name, text)
                })
                .collect()
        }
    };
    Ok(sources.iter().map(|(f, t)| run_one(f, t, opts)).collect())
}

/// One line per check and one verdict line per scenario.
pub fn render(rows: &[ScenarioRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let label = r.name.as_deref().unwrap_or(&r.file);
        s.push_str(&format!("{} {label} ({})\n", if r.pass() { "PASS" } else { "FAIL" }, r.file));
        if let Some(e) = &r.error {
            s.push_str(&format!("  error {e}\n"));
        }
        for c in &r.checks {
            s.push_str(&format!("  {} {}\n", if c.pass { "ok  " } else { "MISS" }, c.what));
        }
    }
    let passed = rows.iter().filter(|r| r.pass()).count();
    s.push_str(&format!("{passed}/{} scenarios reproduce\n", rows.len()));
    s
}
