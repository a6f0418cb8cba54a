//! Continuity-method driver with positivity monitoring and checkpoints.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

use super::config::SystemConfig;
use super::newton::{a0_init, cushioned_solve, newton_solve};
use super::system::{Equation, SystemState};
use crate::bundle::{reference_metric, BundleSpec, MetricField};
use crate::curvature::{chern_curvature, PositivityKind};
use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalStatus {
    ReachedT1,
    StepUnderflow,
    PositivityLost,
    NewtonFail,
}

impl TerminalStatus {
    pub fn is_success(self) -> bool {
        self == TerminalStatus::ReachedT1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub ma_residual: f64,
    pub tf_residual: f64,
    /// Smallest normalized eigenvalue of `θ(t, h_t)`.
    pub theta_margin: f64,
    pub dual_nakano_margin: f64,
    pub det_ratio_min: f64,
    pub det_ratio_max: f64,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub wall_time: f64,
}

impl StepRecord {
    /// The record without timing, for reproducibility comparisons.
    pub fn timeless(&self) -> Self {
        Self { wall_time: 0.0, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub t: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub alpha: f64,
    pub alpha_raised: bool,
    pub steps: Vec<StepRecord>,
    pub escalations: Vec<Escalation>,
    pub status: Option<TerminalStatus>,
    pub failure: Option<String>,
    pub final_dual_nakano_margin: Option<f64>,
    /// Lower bound on every accepted `theta_margin`.
    pub margin_floor: f64,
}

impl SolverTrace {
    pub fn last_t(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t)
    }

    pub fn is_t_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].t > w[0].t)
    }
}

/// Everything needed to continue a run bit-identically.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub metric: MetricField,
    pub a0: ScalarField,
    pub cfg: SystemConfig,
    pub dt: f64,
    pub trace: SolverTrace,
}

#[derive(Clone, Debug)]
pub struct ContinuityOutcome {
    pub trace: SolverTrace,
    pub metric: MetricField,
    pub a0: Option<ScalarField>,
    /// Configuration in force at exit, after α raising and escalations.
    pub cfg: SystemConfig,
}

fn record(state: &SystemState, dt: f64, newton: usize, krylov: usize, start: Instant) -> Result<StepRecord> {
    let res = state.residual();
    let rho = state.det_ratio();
    let curv = chern_curvature(&state.h)?;
    Ok(StepRecord {
        t: state.equation.t(),
        dt,
        ma_residual: res.ma_norm(),
        tf_residual: res.tf_norm(),
        theta_margin: state.theta_margin(),
        dual_nakano_margin: curv.probe(PositivityKind::DualNakano).margin,
        det_ratio_min: rho.min_re(),
        det_ratio_max: rho.max_re(),
        newton_iterations: newton,
        krylov_iterations: krylov,
        epsilon: state.cfg.epsilon,
        lambda: state.cfg.lambda,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs the continuity method from the cushioned initializer.
pub fn continuity_run(spec: &Arc<BundleSpec>, cfg: &SystemConfig) -> Result<ContinuityOutcome> {
    continuity_run_with(spec, cfg, &mut |_| Ok(()))
}

pub fn continuity_run_with(
    spec: &Arc<BundleSpec>,
    cfg: &SystemConfig,
    hook: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<ContinuityOutcome> {
    cfg.validate()?;
    match cushioned_solve(cfg.epsilon, spec, cfg) {
        Ok((h0, _)) => continuity_run_from_with(&h0, cfg, hook),
        Err(e) => Ok(ContinuityOutcome {
            trace: SolverTrace {
                alpha: cfg.alpha,
                status: Some(TerminalStatus::NewtonFail),
                failure: Some(format!("cushioned initializer: {e}")),
                margin_floor: cfg.positivity_margin_floor,
                ..Default::default()
            },
            metric: reference_metric(spec)?,
            a0: None,
            cfg: cfg.clone(),
        }),
    }
}

pub fn continuity_run_from(h0: &MetricField, cfg: &SystemConfig) -> Result<ContinuityOutcome> {
    continuity_run_from_with(h0, cfg, &mut |_| Ok(()))
}

/// Runs the continuity method from a given initial metric `h₀`, which solves
/// the `t = 0` equation once `a₀` is built from it.
pub fn continuity_run_from_with(
    h0: &MetricField,
    cfg: &SystemConfig,
    hook: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<ContinuityOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let floor = cfg.positivity_margin_floor;
    let margin0 = chern_curvature(h0)?.probe(PositivityKind::DualNakano).margin;
    let mut cfg = cfg.clone();
    let mut trace = SolverTrace { alpha: cfg.alpha, margin_floor: floor, ..Default::default() };
    if margin0 + cfg.alpha < 2.0 * floor {
        let required = (2.0 * floor - margin0).max(0.0) + 1.0;
        if !cfg.auto_alpha {
            return Err(Error::AlphaTooSmall { margin: margin0 + cfg.alpha, required_alpha: required });
        }
        cfg.alpha = required;
        trace.alpha = required;
        trace.alpha_raised = true;
    }
    let a0 = a0_init(h0, &cfg)?;
    let state = SystemState::new(h0, &Equation::Full { t: 0.0, a0: a0.clone() }, &cfg)?;
    trace.steps.push(record(&state, 0.0, 0, 0, start)?);
    let ckpt = Checkpoint { metric: h0.clone(), a0, cfg, dt: 0.0, trace };
    hook(&ckpt)?;
    let dt = ckpt.cfg.schedule.initial_step;
    march(Checkpoint { dt, ..ckpt }, hook, start)
}

/// Continues a run from a checkpoint.
pub fn continuity_resume(ckpt: Checkpoint, hook: &mut dyn FnMut(&Checkpoint) -> Result<()>) -> Result<ContinuityOutcome> {
    if ckpt.trace.status.is_some() {
        return Ok(ContinuityOutcome { trace: ckpt.trace, metric: ckpt.metric, a0: Some(ckpt.a0), cfg: ckpt.cfg });
    }
    march(ckpt, hook, Instant::now())
}

fn march(ckpt: Checkpoint, hook: &mut dyn FnMut(&Checkpoint) -> Result<()>, start: Instant) -> Result<ContinuityOutcome> {
    let Checkpoint { metric: mut h, a0, mut cfg, mut dt, mut trace } = ckpt;
    let sched = cfg.schedule.clone();
    let mut t = trace.last_t();
    let mut last_reason = String::new();
    let finish = |trace: &mut SolverTrace, status: TerminalStatus, failure: Option<String>| {
        trace.status = Some(status);
        trace.failure = failure;
    };
    while t < 1.0 {
        if trace.steps.len() > sched.max_steps {
            finish(&mut trace, TerminalStatus::StepUnderflow, Some("step budget exhausted".into()));
            break;
        }
        if dt < sched.min_step {
            if trace.escalations.len() < cfg.max_escalations {
                cfg.epsilon *= 2.0;
                cfg.lambda *= 2.0;
                trace.escalations.push(Escalation { t, epsilon: cfg.epsilon, lambda: cfg.lambda, reason: last_reason.clone() });
                match newton_solve(&h, &Equation::Full { t, a0: a0.clone() }, &cfg) {
                    Ok((hn, _)) => {
                        h = hn;
                        dt = sched.initial_step;
                        continue;
                    }
                    Err(e) => {
                        finish(&mut trace, TerminalStatus::NewtonFail, Some(format!("re-solve at t = {t}: {e}")));
                        break;
                    }
                }
            }
            let status =
                if last_reason == "positivity" { TerminalStatus::PositivityLost } else { TerminalStatus::StepUnderflow };
            finish(&mut trace, status, Some(format!("step below {} at t = {t}: {last_reason}", sched.min_step)));
            break;
        }
        let t_try = if t + dt >= 1.0 - 1e-12 { 1.0 } else { t + dt };
        let eq = Equation::Full { t: t_try, a0: a0.clone() };
        let attempt = newton_solve(&h, &eq, &cfg).and_then(|(hn, rep)| {
            let state = SystemState::new(&hn, &eq, &cfg)?;
            Ok((hn, rep, state))
        });
        match attempt {
            Ok((hn, rep, state)) => {
                let rec = record(&state, t_try - t, rep.iterations, rep.total_krylov_iterations(), start)?;
                if rec.theta_margin < cfg.positivity_margin_floor {
                    last_reason = "positivity".into();
                    dt *= sched.shrink;
                    continue;
                }
                trace.steps.push(rec);
                h = hn;
                t = t_try;
                if rep.iterations <= sched.easy_iterations {
                    dt = (dt * sched.grow).min(sched.max_step);
                }
                let ck = Checkpoint { metric: h.clone(), a0: a0.clone(), cfg: cfg.clone(), dt, trace: trace.clone() };
                hook(&ck)?;
            }
            Err(e) => {
                last_reason = match &e {
                    Error::NewtonFailed { reason, .. } => reason.clone(),
                    Error::NotPositive { .. } | Error::NonPositiveDeterminant { .. } => "positivity".into(),
                    other => other.to_string(),
                };
                dt *= sched.shrink;
            }
        }
    }
    if t >= 1.0 {
        finish(&mut trace, TerminalStatus::ReachedT1, None);
        trace.final_dual_nakano_margin = trace.steps.last().map(|s| s.dual_nakano_margin);
    }
    let ck = Checkpoint { metric: h.clone(), a0: a0.clone(), cfg: cfg.clone(), dt, trace: trace.clone() };
    hook(&ck)?;
    Ok(ContinuityOutcome { trace, metric: h, a0: Some(a0), cfg })
}
