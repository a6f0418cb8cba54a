//! Damped Newton–Krylov on the packed frame unknown.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::config::SystemConfig;
use super::system::{Equation, SystemState};
use crate::bundle::{reference_metric, BundleSpec, MetricField};
use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField};
use crate::krylov::{gmres, GmresOptions};
use crate::linalg::{self, c};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Sup norm of the packed residual before each iteration and at exit.
    pub residual_history: Vec<f64>,
    pub krylov_iterations: Vec<usize>,
    pub dampings: Vec<f64>,
    pub converged: bool,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn total_krylov_iterations(&self) -> usize {
        self.krylov_iterations.iter().sum()
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

fn fail(reason: &str, history: &[f64]) -> Error {
    Error::NewtonFailed { reason: reason.to_string(), history: history.to_vec() }
}

fn project_trace_free(x: &mut [f64], r: usize) {
    x.par_chunks_mut(r * r).for_each(|chunk| {
        let m = linalg::unpack_herm(chunk, r);
        linalg::pack_herm(&linalg::trace_free(&m), chunk);
    });
}

/// Solves the coupled system at fixed `t` (or the cushioned equation) from `h_init`.
pub fn newton_solve(h_init: &MetricField, equation: &Equation, cfg: &SystemConfig) -> Result<(MetricField, NewtonReport)> {
    cfg.validate()?;
    let nc = &cfg.newton;
    let full = matches!(equation, Equation::Full { .. });
    let r = h_init.rank();
    let mut state = SystemState::new(h_init, equation, cfg)?;
    let mut report = NewtonReport::default();
    loop {
        let res = state.packed_residual();
        let res_sup = sup(&res);
        if !res_sup.is_finite() {
            return Err(fail("non_finite", &report.residual_history));
        }
        report.residual_history.push(res_sup);
        if res_sup <= nc.tolerance {
            report.converged = true;
            return Ok((state.h, report));
        }
        if report.iterations >= nc.max_iterations {
            return Err(fail("max_iterations", &report.residual_history));
        }
        let pc = state.preconditioner();
        let b: Vec<f64> = res.iter().map(|v| -v).collect();
        let opts = GmresOptions {
            restart: nc.krylov_restart,
            max_iterations: nc.krylov_max_iterations,
            rel_tol: res_sup.clamp(1e-12, nc.krylov_forcing),
            abs_tol: 1e-300,
        };
        let out = gmres(|x| state.apply_packed(x), |x| pc.apply(x), &b, opts);
        report.krylov_iterations.push(out.iterations);
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !out.converged && !(out.residual_norm < 0.5 * bnorm) {
            return Err(fail("krylov", &report.residual_history));
        }
        let mut dx = out.solution;
        if !full {
            project_trace_free(&mut dx, r);
        }
        let current = rms(&res);
        let mut step = 1.0;
        let mut positivity_only = true;
        let accepted = loop {
            if step < nc.min_damping {
                break None;
            }
            let trial = state
                .updated_metric(&dx, step)
                .and_then(|h| SystemState::new(&h, equation, cfg));
            match trial {
                Ok(next) => {
                    if full && next.theta_margin() < cfg.positivity_margin_floor {
                        // rejected for positivity
                    } else if rms(&next.packed_residual()) < (1.0 - 1e-4 * step) * current {
                        break Some(next);
                    } else {
                        positivity_only = false;
                    }
                }
                Err(Error::Underresolved { .. }) | Err(Error::NonFinite(_)) => positivity_only = false,
                Err(_) => {}
            }
            step *= 0.5;
        };
        match accepted {
            Some(next) => {
                state = next;
                report.dampings.push(step);
                report.iterations += 1;
            }
            None => {
                let reason = if positivity_only { "positivity" } else { "stagnation" };
                return Err(fail(reason, &report.residual_history));
            }
        }
    }
}

/// Rescales `h` pointwise so that `det h = det H₀`.
pub fn normalize_determinant(h: &MetricField) -> Result<MetricField> {
    let r = h.rank() as f64;
    let rho = h.det_ratio();
    let values = h
        .endo
        .values
        .iter()
        .zip(&rho.values)
        .map(|(g, q)| g * c(q.re.powf(1.0 / r), 0.0))
        .collect();
    let mut out = h.clone();
    out.endo = EndoField::new(h.rank(), values, h.endo.twist.clone());
    out.check_positive()?;
    Ok(out)
}

/// Cushioned Hermitian–Yang–Mills solve started from `h` after determinant normalization.
pub fn cushioned_solve_from(h: &MetricField, epsilon: f64, cfg: &SystemConfig) -> Result<(MetricField, NewtonReport)> {
    let cfg = SystemConfig { epsilon, mu: 0.0, ..cfg.clone() };
    newton_solve(&normalize_determinant(h)?, &Equation::Cushion, &cfg)
}

pub fn cushioned_solve(epsilon: f64, spec: &Arc<BundleSpec>, cfg: &SystemConfig) -> Result<(MetricField, NewtonReport)> {
    cushioned_solve_from(&reference_metric(spec)?, epsilon, cfg)
}

/// `a₀ = ω₀^{-n} det(θ(0, h₀))^{1/r} · (det h₀ / det H₀)^λ`, which makes `h₀` solve the `t = 0` equation.
pub fn a0_init(h0: &MetricField, cfg: &SystemConfig) -> Result<ScalarField> {
    let probe = Equation::Full { t: 0.0, a0: ScalarField::constant(h0.len(), 1.0) };
    let state = SystemState::new(h0, &probe, cfg)?;
    let density = state.ma_density();
    let rho = state.det_ratio();
    Ok(density.zip_map(&rho, |f, q| c(f.re * q.re.powf(-cfg.lambda), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::metric_from_log;
    use crate::samples::smooth_hermitian;

    fn perturbed(spec: BundleSpec, seed: u64, amp: f64) -> MetricField {
        let spec = Arc::new(spec);
        metric_from_log(&spec, &smooth_hermitian(&spec.domain, spec.rank, seed, amp, 3, 1)).unwrap()
    }

    #[test]
    fn a0_makes_initial_metric_a_solution() {
        let h0 = perturbed(BundleSpec::split_square(1, 16, 2, 1).unwrap(), 1, 0.2);
        let cfg = SystemConfig { lambda: 0.7, ..Default::default() };
        let a0 = a0_init(&h0, &cfg).unwrap();
        let st = SystemState::new(&h0, &Equation::Full { t: 0.0, a0 }, &cfg).unwrap();
        assert!(st.residual().ma_norm() < 1e-13);
    }

    #[test]
    fn newton_converges_quadratically_at_fixed_t() {
        let h0 = perturbed(BundleSpec::split_square(1, 16, 2, 1).unwrap(), 2, 0.2);
        let cfg = SystemConfig { alpha: 2.0, ..Default::default() };
        let a0 = a0_init(&h0, &cfg).unwrap();
        let (h, rep) = newton_solve(&h0, &Equation::Full { t: 0.3, a0: a0.clone() }, &cfg).unwrap();
        assert!(rep.converged, "{:?}", rep.residual_history);
        let st = SystemState::new(&h, &Equation::Full { t: 0.3, a0 }, &cfg).unwrap();
        assert!(st.residual().sup_norm() < 1e-9);
        let hist = &rep.residual_history;
        let k = hist.len();
        assert!(k >= 3 && hist[k - 1] < 1e-2 * hist[k - 2].powf(1.5).max(1e-12), "{hist:?}");
    }

    #[test]
    fn cushion_split_converges_to_trace_free_solution() {
        let h0 = perturbed(BundleSpec::split_square(1, 16, 2, 1).unwrap(), 3, 0.3);
        let (h, rep) = cushioned_solve_from(&h0, 0.5, &SystemConfig::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.residual_history);
        let rho = h.det_ratio();
        assert!(rho.values.iter().all(|q| (q.re - 1.0).abs() < 1e-9));
    }

    #[test]
    fn cushion_extension_converges() {
        let spec = Arc::new(BundleSpec::extension_square(1, 16, 1).unwrap());
        let (h, rep) = cushioned_solve(1.0, &spec, &SystemConfig::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.residual_history);
        let st = SystemState::new(&h, &Equation::Cushion, &SystemConfig { epsilon: 1.0, mu: 0.0, ..Default::default() }).unwrap();
        assert!(st.residual().tf_norm() < 1e-9);
    }

    #[test]
    fn cushion_extension_on_surface_converges() {
        let spec = Arc::new(BundleSpec::extension_square(2, 8, 1).unwrap());
        let (_, rep) = cushioned_solve(0.5, &spec, &SystemConfig::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.residual_history);
    }
}
