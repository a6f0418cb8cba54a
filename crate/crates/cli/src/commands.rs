//! Subcommand drivers. Each returns the process exit code.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use hymlab::bundle::{metric_from_log, reference_metric};
use hymlab::hym_system::{continuity_resume, continuity_run_from_with, continuity_run_with, cushioned_solve, split_solve};
use hymlab::io::{load_checkpoint, save_checkpoint, save_metric};
use hymlab::linalg::c;
use hymlab::mavol::{mavol_ascend, mavol_value, shrink_family, AscentTrace};
use hymlab::samples::{smooth_hermitian, smooth_scalar};
use hymlab::{BundleSpec, Checkpoint, ContinuityOutcome, MetricField, ScalarField, TerminalStatus};
use serde_json::{json, Value};

use crate::artifacts::Artifacts;
use crate::config::{DensityChoice, InitialKind, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Split,
    Extension,
    Shrink,
}

/// A loaded configuration together with the command-line overrides.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
}

impl Context {
    /// Applies `--out` and `--seed` and validates the result.
    pub fn new(mut cfg: RunConfig, out: Option<PathBuf>, seed: Option<u64>) -> CliResult<Self> {
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = out {
            cfg.output = o;
        }
        cfg.validate()?;
        Ok(Self { out: cfg.output.clone(), cfg, threads: rayon::current_num_threads() })
    }

    fn artifacts(&self) -> CliResult<Artifacts> {
        let a = Artifacts::create(&self.out, &self.cfg.hash()?)?;
        a.write_json("config.resolved.json", self.cfg.resolved_json())?;
        Ok(a)
    }

    fn summary(&self, command: &str, status: &str, body: Value) -> Value {
        let mut v = json!({
            "command": command,
            "status": status,
            "seed": self.cfg.seed,
            "threads": self.threads,
            "config": self.cfg.resolved_json(),
        });
        if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
            m.extend(b);
        }
        v
    }
}

fn initial_metric(cfg: &RunConfig, spec: &Arc<BundleSpec>) -> CliResult<MetricField> {
    let init = &cfg.experiment.initial;
    Ok(match init.kind {
        InitialKind::Cushioned => cushioned_solve(cfg.system.epsilon, spec, &cfg.system)?.0,
        InitialKind::Reference => reference_metric(spec)?,
        InitialKind::Random => {
            let u = smooth_hermitian(&spec.domain, spec.rank, cfg.seed, init.amplitude, init.modes, init.max_frequency);
            metric_from_log(spec, &u)?
        }
    })
}

fn to_core(e: CliError) -> hymlab::Error {
    match e {
        CliError::Core(e) => e,
        CliError::Io(e) => hymlab::Error::Io(e),
        other => hymlab::Error::Io(std::io::Error::other(other.to_string())),
    }
}

/// Streams trace records and checkpoints while the continuity run advances.
struct RunWriter<'a> {
    art: &'a Artifacts,
    meta: Value,
    every: usize,
    written: usize,
}

impl RunWriter<'_> {
    fn observe(&mut self, ck: &Checkpoint) -> CliResult<()> {
        for rec in &ck.trace.steps[self.written..] {
            self.art.append_jsonl("trace.jsonl", rec)?;
        }
        self.written = ck.trace.steps.len();
        let dir = if ck.trace.status.is_some() {
            Some(self.art.path("checkpoints/final"))
        } else if self.every > 0 && (self.written - 1) % self.every == 0 {
            Some(self.art.path(&format!("checkpoints/step_{:04}", self.written - 1)))
        } else {
            None
        };
        if let Some(dir) = dir {
            save_checkpoint(&dir, ck, self.meta.clone())?;
        }
        Ok(())
    }
}

fn finish_run(ctx: &Context, art: &Artifacts, command: &str, result: hymlab::Result<ContinuityOutcome>) -> CliResult<i32> {
    match result {
        Ok(out) => {
            save_metric(&art.path("final_metric"), &out.metric, art.stamp())?;
            let status = out.trace.status.unwrap_or(TerminalStatus::NewtonFail);
            let body = json!({
                "terminal_status": status,
                "final_dual_nakano_margin": out.trace.final_dual_nakano_margin,
                "min_dual_nakano_margin": out.trace.steps.iter().map(|s| s.dual_nakano_margin).fold(f64::INFINITY, f64::min),
                "last_t": out.trace.last_t(),
                "accepted_steps": out.trace.steps.len(),
                "alpha": out.trace.alpha,
                "alpha_raised": out.trace.alpha_raised,
                "escalations": out.trace.escalations,
                "failure": out.trace.failure,
                "final_system": out.cfg,
            });
            let label = serde_json::to_value(status)?;
            art.write_json("summary.json", ctx.summary(command, label.as_str().unwrap_or("UNKNOWN"), body))?;
            println!("{command}: {} at t = {}", label.as_str().unwrap_or("UNKNOWN"), out.trace.last_t());
            Ok(if status.is_success() { 0 } else { 1 })
        }
        Err(e) => {
            let mut body = json!({ "failure": e.to_string() });
            if let hymlab::Error::AlphaTooSmall { required_alpha, margin } = &e {
                body["required_alpha"] = json!(required_alpha);
                body["initial_margin"] = json!(margin);
            }
            art.write_json("summary.json", ctx.summary(command, "ERROR", body))?;
            Err(e.into())
        }
    }
}

pub fn cmd_solve(ctx: &Context) -> CliResult<i32> {
    let spec = ctx.cfg.spec()?;
    let art = ctx.artifacts()?;
    art.reset("trace.jsonl")?;
    let meta = json!({ "config_hash": art.config_hash, "version": hymlab::VERSION, "config": ctx.cfg.resolved_json() });
    let mut w = RunWriter { art: &art, meta, every: ctx.cfg.experiment.checkpoint_every, written: 0 };
    let mut hook = |ck: &Checkpoint| w.observe(ck).map_err(to_core);
    let result = match ctx.cfg.experiment.initial.kind {
        InitialKind::Cushioned => continuity_run_with(&spec, &ctx.cfg.system, &mut hook),
        _ => match initial_metric(&ctx.cfg, &spec) {
            Ok(h0) => continuity_run_from_with(&h0, &ctx.cfg.system, &mut hook),
            Err(CliError::Core(e)) => Err(e),
            Err(e) => return Err(e),
        },
    };
    finish_run(ctx, &art, "solve", result)
}

/// Continues from a checkpoint directory; the configuration comes from its metadata.
pub fn cmd_resume(checkpoint: &Path, out: Option<PathBuf>) -> CliResult<i32> {
    let (ck, meta) = load_checkpoint(checkpoint)?;
    let cfg: RunConfig = serde_json::from_value(meta["config"].clone())
        .map_err(|e| CliError::Config(format!("checkpoint metadata lacks a usable config: {e}")))?;
    let ctx = Context::new(cfg, out, None)?;
    if meta["config_hash"] != json!(ctx.cfg.hash()?) {
        return Err(CliError::Config("checkpoint config hash does not match its embedded config".into()));
    }
    let art = ctx.artifacts()?;
    art.reset("trace.jsonl")?;
    for rec in &ck.trace.steps {
        art.append_jsonl("trace.jsonl", rec)?;
    }
    let mut w = RunWriter { art: &art, meta, every: ctx.cfg.experiment.checkpoint_every, written: ck.trace.steps.len() };
    let result = continuity_resume(ck, &mut |c| w.observe(c).map_err(to_core));
    finish_run(&ctx, &art, "resume", result)
}

pub fn cmd_verify(ctx: &Context) -> CliResult<i32> {
    let art = ctx.artifacts()?;
    let start = Instant::now();
    let report = hymlab::run_verify(&ctx.cfg.verify_config())?;
    let elapsed = start.elapsed().as_secs_f64();
    for inv in &report.invariants {
        let tag = if inv.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} value={:.3e} tolerance={:.1e}", inv.name, inv.value, inv.tolerance);
    }
    for cv in &report.convergence {
        let tag = if cv.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} {} N={}: {:.3e} N={}: {:.3e} ratio={:.3} declared={:.3}",
            cv.name, cv.coarse_resolution, cv.coarse, cv.fine_resolution, cv.fine, cv.ratio, cv.declared_ratio
        );
    }
    art.write_json("verify.json", &report)?;
    let status = if report.passed { "PASS" } else { "FAIL" };
    let body = json!({ "passed": report.passed, "failures": report.failures(), "wall_time": elapsed });
    art.write_json("summary.json", ctx.summary("verify", status, body))?;
    Ok(if report.passed { 0 } else { 1 })
}

fn ascent_rows(trace: &AscentTrace) -> Vec<Vec<f64>> {
    let c0 = trace.steps.first().map_or(1.0, |s| s.condition_number);
    trace
        .steps
        .iter()
        .map(|s| {
            vec![
                s.iteration as f64,
                s.value,
                s.value / trace.upper_bound,
                s.margin,
                s.gradient_norm,
                s.condition_number,
                s.condition_number / c0,
                s.step,
            ]
        })
        .collect()
}

const ASCENT_HEADER: [&str; 8] =
    ["iteration", "value", "bound_ratio", "margin", "gradient_norm", "condition_number", "condition_growth", "step"];

fn ascend(ctx: &Context, art: &Artifacts, spec: &Arc<BundleSpec>, csv: &str) -> CliResult<Value> {
    let h = initial_metric(&ctx.cfg, spec)?;
    let initial = mavol_value(&h)?;
    let (h_final, trace) = mavol_ascend(&h, &ctx.cfg.experiment.ascent)?;
    let last = mavol_value(&h_final)?;
    art.write_csv(csv, &ASCENT_HEADER, ascent_rows(&trace))?;
    Ok(json!({ "initial": initial, "final": last, "ascent_status": trace.status, "trace": trace }))
}

pub fn cmd_mavol(ctx: &Context) -> CliResult<i32> {
    let spec = ctx.cfg.spec()?;
    let art = ctx.artifacts()?;
    let body = ascend(ctx, &art, &spec, "ascent.csv")?;
    art.write_json("mavol.json", &body)?;
    let ratio = body["final"]["value"].as_f64().unwrap_or(f64::NAN) / body["final"]["upper_bound"].as_f64().unwrap_or(f64::NAN);
    println!("mavol: final value / bound = {ratio:.6} ({})", body["ascent_status"]);
    let status = body["ascent_status"].as_str().unwrap_or("UNKNOWN").to_string();
    art.write_json("summary.json", ctx.summary("mavol", &status, json!({ "bound_ratio": ratio, "final": body["final"] })))?;
    Ok(0)
}

fn split_densities(ctx: &Context, spec: &Arc<BundleSpec>) -> CliResult<Vec<ScalarField>> {
    let d = &spec.domain;
    let b = &ctx.cfg.experiment.split;
    (0..spec.rank)
        .map(|j| {
            let seed = match b.densities {
                DensityChoice::Equal => ctx.cfg.seed,
                DensityChoice::Distinct => ctx.cfg.seed + j as u64,
            };
            let g = smooth_scalar(d, seed, b.amplitude, 3, 1).map(|v| c(v.re.exp(), 0.0));
            let scale = spec.degree as f64 / d.integrate_against_omega(&g)?;
            Ok(g.map(|v| c(v.re * scale, 0.0)))
        })
        .collect()
}

pub fn cmd_experiment(ctx: &Context, kind: ExperimentKind) -> CliResult<i32> {
    let spec = ctx.cfg.spec()?;
    let art = ctx.artifacts()?;
    let (name, status, body) = match kind {
        ExperimentKind::Split => {
            if !spec.is_split() {
                return Err(CliError::Config("split experiment needs bundle.model = SPLIT".into()));
            }
            let sol = split_solve(&spec, &split_densities(ctx, &spec)?)?;
            let rep = mavol_value(&sol.assembled)?;
            let ascent = ascend(ctx, &art, &spec, "split_ascent.csv")?;
            let ratio = rep.value / rep.upper_bound;
            let equal = ctx.cfg.experiment.split.densities == DensityChoice::Equal;
            let equality = equal && (ratio - 1.0).abs() <= 0.02;
            let flags: Vec<&str> = if equality { vec!["EQUALITY_CASE"] } else { vec![] };
            println!("split: value / bound = {ratio:.9}{}", if equality { " EQUALITY_CASE" } else { "" });
            let body = json!({ "checks": sol.checks, "solution": rep, "bound_ratio": ratio, "flags": flags, "ascent": ascent });
            ("split", if equality { "EQUALITY_CASE" } else { "STRICT" }.to_string(), body)
        }
        ExperimentKind::Extension => {
            if spec.is_split() {
                return Err(CliError::Config("extension experiment needs bundle.model = EXTENSION".into()));
            }
            let ascent = ascend(ctx, &art, &spec, "extension.csv")?;
            let steps = ascent["trace"]["steps"].as_array().cloned().unwrap_or_default();
            let values: Vec<f64> = steps.iter().filter_map(|s| s["value"].as_f64()).collect();
            let tail = values.len().saturating_sub(10);
            let plateau_change = values.last().zip(values.get(tail)).map_or(f64::NAN, |(a, b)| (a - b).abs() / a.abs());
            let conds: Vec<f64> = steps.iter().filter_map(|s| s["condition_number"].as_f64()).collect();
            let growth = conds.last().zip(conds.first()).map_or(f64::NAN, |(a, b)| a / b);
            println!("extension: plateau change {plateau_change:.3e}, condition growth {growth:.3}");
            let body = json!({ "plateau_relative_change": plateau_change, "condition_growth": growth, "ascent": ascent });
            ("extension", ascent["ascent_status"].as_str().unwrap_or("UNKNOWN").to_string(), body)
        }
        ExperimentKind::Shrink => {
            let series = shrink_family(&spec, &ctx.cfg.experiment.shrink.concentrations)?;
            let rows = series.iter().map(|p| vec![p.s, p.value, p.closed_form, p.margin, p.condition_number]);
            art.write_csv("shrink.csv", &["s", "value", "closed_form", "margin", "condition_number"], rows)?;
            let decreasing = series.windows(2).all(|w| w[1].value < w[0].value);
            for p in &series {
                println!("shrink: s = {} value = {:.9} closed form = {:.9}", p.s, p.value, p.closed_form);
            }
            let body = json!({ "series": series, "strictly_decreasing": decreasing });
            ("shrink", if decreasing { "STRICTLY_DECREASING" } else { "NOT_DECREASING" }.to_string(), body)
        }
    };
    art.write_json(&format!("{name}.json"), &body)?;
    art.write_json("summary.json", ctx.summary(&format!("experiment {name}"), &status, body))?;
    Ok(0)
}
