//! The Monge-Ampère volume functional: value, upper bound, eigenvalue identity,
//! discrete Euler-Lagrange gradient, preconditioned ascent and the shrinking-bump family.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{BundleSpec, MetricField};
use crate::curvature::{chern_curvature, connection_forms, raw_blocks_from_connection, PositivityKind};
use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField};
use crate::grid::Scheme;
use crate::hym_system::split_solve;
use crate::linalg::{self, c, cholesky, identity, inverse, lower_inverse, CMat, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MavolReport {
    pub value: f64,
    pub upper_bound: f64,
    pub eigenvalue_identity_defect: f64,
    pub el_residual_norm: f64,
    pub positivity_kind: PositivityKind,
    pub margin: f64,
    /// Largest condition number of `h̃ = H₀^{-1}h` over the grid.
    pub condition_number: f64,
}

impl MavolReport {
    pub fn is_positive(&self) -> bool {
        self.margin > 0.0
    }
}

/// Weight turning a grid sum into `∫ (2π)^{-n} · dV`.
fn point_weight(h: &MetricField) -> f64 {
    let d = h.domain();
    (2.0 * PI).powi(-(d.n as i32)) * d.standard_volume_density() * d.cell_weight()
}

struct Evaluation {
    raw: Vec<CMat>,
    connection: Vec<EndoField>,
    density: Vec<f64>,
}

fn evaluate(h: &MetricField) -> Result<Evaluation> {
    let connection = connection_forms(h, Scheme::Spectral)?;
    let raw = raw_blocks_from_connection(h, &connection, Scheme::Spectral);
    let r = h.rank() as f64;
    let density = raw
        .par_iter()
        .map(|m| {
            let d = linalg::det(m).re;
            d.signum() * d.abs().powf(1.0 / r)
        })
        .collect();
    Ok(Evaluation { raw, connection, density })
}

/// `∫ det((2π)^{-1} ᵀΘ)^{1/r}`; signed roots are kept where the determinant is negative.
pub fn mavol_functional(h: &MetricField) -> Result<f64> {
    let ev = evaluate(h)?;
    if ev.density.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Monge-Ampère density"));
    }
    Ok(point_weight(h) * ev.density.iter().sum::<f64>())
}

/// `r^{-n} c₁(E)ⁿ` in the `ω₀ⁿ`-without-`n!` convention, i.e. `dⁿ`.
pub fn upper_bound(spec: &BundleSpec) -> f64 {
    spec.chern_numbers().c1_top as f64 / (spec.rank as f64).powi(spec.domain.n as i32)
}

/// Max over points of `|Σ λ_j − n|`, with `λ_j` the eigenvalues of the curvature
/// matrix against `tr_E Θ ⊗ Id`.
pub fn eigenvalue_identity_defect(h: &MetricField) -> Result<f64> {
    let curv = chern_curvature(h)?;
    let (n, r) = (curv.n, curv.rank);
    curv.frame
        .par_iter()
        .map(|m| {
            let omega = CMat::from_fn(n, n, |j, k| linalg::block(m, r, j, k).trace());
            let s = cholesky(&linalg::hermitian_part(&omega))?;
            let si = lower_inverse(&s).kronecker(&identity(r));
            let (eig, _) = linalg::herm_eig(&linalg::hermitian_part(&(&si * m * si.adjoint())));
            Ok((eig.iter().sum::<f64>() - n as f64).abs())
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max))
}

pub fn condition_number(h: &MetricField) -> Result<f64> {
    let reference = h.reference_matrix();
    h.endo
        .values
        .par_iter()
        .zip(&reference.values)
        .map(|(g, g0)| {
            let l0i = lower_inverse(&cholesky(g0)?);
            let (eig, _) = linalg::herm_eig(&linalg::hermitian_part(&(&l0i * g * l0i.adjoint())));
            Ok(eig[eig.len() - 1] / eig[0])
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(1.0, f64::max))
}

pub fn mavol_value(h: &MetricField) -> Result<MavolReport> {
    let value = mavol_functional(h)?;
    let margin = chern_curvature(h)?.probe(PositivityKind::DualNakano).margin;
    let grad = el_residual(h)?;
    Ok(MavolReport {
        value,
        upper_bound: upper_bound(&h.spec),
        eigenvalue_identity_defect: eigenvalue_identity_defect(h)?,
        el_residual_norm: grad.max_abs(),
        positivity_kind: PositivityKind::DualNakano,
        margin,
        condition_number: condition_number(h)?,
    })
}

/// Gradient `Γ` of the functional along `h ↦ h·exp(su)`: an `h`-self-adjoint field with
/// `d/ds value = Σ_p tr(Γ_p u_p) · cell weight` (discrete adjoint of the curvature variation).
pub fn el_residual(h: &MetricField) -> Result<EndoField> {
    let d = h.domain();
    let (n, r) = (d.n, h.rank());
    let rf = r as f64;
    let ev = evaluate(h)?;
    let twist = h.spec.endo_twist().transpose_dual();
    let scale = (2.0 * PI).powi(-(n as i32)) * d.standard_volume_density();
    // W^{kj} = ∂ density / ∂Θ_jk
    let w_points: Vec<CMat> = ev
        .raw
        .par_iter()
        .map(|m| {
            let det = linalg::det(m);
            let re = det.re;
            if !(re > 0.0) {
                return Err(Error::NonPositiveDeterminant { point: 0, det: re });
            }
            Ok(inverse(m)? * (det * (scale / rf * re.powf(1.0 / rf - 1.0))))
        })
        .collect::<Result<_>>()?;
    let mut e_field = EndoField::zeros(h.len(), r, twist.clone());
    for j in 0..n {
        let mut v = EndoField::zeros(h.len(), r, twist.clone());
        for k in 0..n {
            let wkj = EndoField::new(r, w_points.iter().map(|m| linalg::block(m, r, k, j)).collect(), twist.clone());
            v = v.add(&d.dbar_all_with(&wkj, Scheme::Spectral)[k]);
        }
        let dv = &d.d_all_with(&v, Scheme::Spectral)[j];
        let a = &ev.connection[j];
        let values = (0..h.len())
            .into_par_iter()
            .map(|p| {
                &e_field.values[p] - &dv.values[p] + &v.values[p] * &a.values[p] - &a.values[p] * &v.values[p]
            })
            .collect();
        e_field = EndoField::new(r, values, twist.clone());
    }
    let values = e_field
        .values
        .par_iter()
        .zip(&h.endo.values)
        .map(|(e, g)| {
            let gi = inverse(g)?;
            Ok(linalg::hermitian_part(&(e * &gi)) * g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EndoField::new(r, values, h.spec.endo_twist()))
}

/// `Σ_p Re tr(Γ_p u_p)` times the cell weight.
pub fn el_pairing(h: &MetricField, grad: &EndoField, u: &EndoField) -> f64 {
    let w = h.domain().cell_weight();
    w * grad.values.iter().zip(&u.values).map(|(a, b)| (a * b).trace().re).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub margin_floor: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { max_iterations: 200, gradient_tolerance: 1e-9, initial_step: 1.0, min_step: 1e-10, margin_floor: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AscentStep {
    pub iteration: usize,
    pub value: f64,
    pub margin: f64,
    pub gradient_norm: f64,
    pub condition_number: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AscentStatus {
    Converged,
    StepUnderflow,
    MaxIterations,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AscentTrace {
    pub steps: Vec<AscentStep>,
    pub status: AscentStatus,
    pub upper_bound: f64,
}

/// Gradient in the `h`-orthonormal frame, `L^* Γ L^{-*}` (Hermitian, periodic).
fn frame_gradient(h: &MetricField, grad: &EndoField) -> Result<Vec<CMat>> {
    h.endo
        .values
        .par_iter()
        .zip(&grad.values)
        .map(|(g, gamma)| {
            let l = cholesky(g)?;
            Ok(linalg::hermitian_part(&(l.adjoint() * gamma * lower_inverse(&l).adjoint())))
        })
        .collect()
}

/// Divides each Fourier mode by `(1 + |ξ|²/κ_min)²`.
fn smooth(h: &MetricField, fields: &[CMat]) -> Vec<CMat> {
    let d = h.domain();
    let r = h.rank();
    let kmin = d.kappa_min();
    let den: Vec<f64> = (0..d.num_points())
        .map(|p| {
            let m = d.mode(p);
            let q: f64 = (0..d.n).map(|j| d.dz_symbol(&m, j).norm_sqr()).sum();
            (1.0 + q / kmin).powi(2)
        })
        .collect();
    let comps: Vec<Vec<C64>> = (0..r * r)
        .into_par_iter()
        .map(|e| {
            let vals: Vec<C64> = fields.iter().map(|m| m[(e / r, e % r)]).collect();
            let mut hat = d.fft_all(&vals, false);
            hat.iter_mut().zip(&den).for_each(|(v, q)| *v /= *q);
            d.fft_all(&hat, true)
        })
        .collect();
    (0..fields.len())
        .map(|p| linalg::hermitian_part(&CMat::from_fn(r, r, |i, j| comps[i * r + j][p])))
        .collect()
}

fn step_metric(h: &MetricField, dir: &[CMat], s: f64) -> Result<MetricField> {
    let values = h
        .endo
        .values
        .par_iter()
        .zip(dir)
        .map(|(g, u)| {
            let l = cholesky(g)?;
            Ok(linalg::hermitian_part(&(&l * linalg::exp_herm(&(u * c(s, 0.0))) * l.adjoint())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = h.clone();
    out.endo = EndoField::new(h.rank(), values, h.endo.twist.clone());
    out.check_positive()?;
    Ok(out)
}

/// Preconditioned gradient ascent with Armijo backtracking under a margin constraint.
pub fn mavol_ascend(h_init: &MetricField, cfg: &AscentConfig) -> Result<(MetricField, AscentTrace)> {
    let margin0 = chern_curvature(h_init)?.probe(PositivityKind::DualNakano).margin;
    if margin0 < cfg.margin_floor {
        return Err(Error::NotPositive { point: 0, eigenvalue: margin0 });
    }
    let mut h = h_init.clone();
    let mut value = mavol_functional(&h)?;
    let mut step = cfg.initial_step;
    let mut steps = Vec::new();
    let mut status = AscentStatus::MaxIterations;
    let w = h.domain().cell_weight();
    for it in 0..cfg.max_iterations {
        let grad = el_residual(&h)?;
        let gnorm = grad.max_abs();
        steps.push(AscentStep {
            iteration: it,
            value,
            margin: chern_curvature(&h)?.probe(PositivityKind::DualNakano).margin,
            gradient_norm: gnorm,
            condition_number: condition_number(&h)?,
            step,
        });
        if gnorm <= cfg.gradient_tolerance {
            status = AscentStatus::Converged;
            break;
        }
        let gf = frame_gradient(&h, &grad)?;
        let dir = smooth(&h, &gf);
        let slope = w * gf.iter().zip(&dir).map(|(a, b)| (a * b).trace().re).sum::<f64>();
        let mut accepted = None;
        let mut s = (step * 2.0).min(cfg.initial_step * 1e6);
        while s >= cfg.min_step {
            if let Ok(next) = step_metric(&h, &dir, s) {
                if let (Ok(v), Ok(curv)) = (mavol_functional(&next), chern_curvature(&next)) {
                    let margin = curv.probe(PositivityKind::DualNakano).margin;
                    if margin >= cfg.margin_floor && v >= value + 1e-4 * s * slope {
                        accepted = Some((next, v));
                        break;
                    }
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((next, v)) => {
                h = next;
                value = v;
                step = s;
            }
            None => {
                status = AscentStatus::StepUnderflow;
                break;
            }
        }
    }
    Ok((h, AscentTrace { steps, status, upper_bound: upper_bound(&h_init.spec) }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShrinkPoint {
    pub s: f64,
    pub value: f64,
    /// `(Π c₁(E_j))^{1/r} / I₀(s − 1)²` for the bump family used here.
    pub closed_form: f64,
    pub margin: f64,
    pub condition_number: f64,
}

/// Modified Bessel function `I₀` by its power series.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Density factors `f_j ∝ exp((s−1)(cos 2π(x−j/r) + cos 2π(y−j/r)))`, normalized to `c₁(E_j)`.
pub fn shrink_densities(spec: &Arc<BundleSpec>, s: f64) -> Result<Vec<ScalarField>> {
    let d = &spec.domain;
    let r = spec.rank;
    if r < 2 || d.n != 1 {
        return Err(Error::Unsupported("shrink family needs r ≥ 2 on a curve".into()));
    }
    if s < 1.0 {
        return Err(Error::Config("concentration must be at least 1".into()));
    }
    let a = s - 1.0;
    (0..r)
        .map(|j| {
            let shift = j as f64 / r as f64;
            let g = d.scalar_from_fn(|x| {
                (a * ((2.0 * PI * (x[0] - shift)).cos() + (2.0 * PI * (x[1] - shift)).cos())).exp()
            });
            let total = d.integrate_against_omega(&g)?;
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::Normalization("bump integral not positive".into()));
            }
            let scale = spec.degree as f64 / total;
            Ok(g.map(|v| c(v.re * scale, 0.0)))
        })
        .collect()
}

pub fn shrink_family(spec: &Arc<BundleSpec>, concentrations: &[f64]) -> Result<Vec<ShrinkPoint>> {
    concentrations
        .iter()
        .map(|&s| {
            let parts = shrink_densities(spec, s)?;
            let sol = split_solve(spec, &parts)?;
            let margin = chern_curvature(&sol.assembled)?.probe(PositivityKind::DualNakano).margin;
            Ok(ShrinkPoint {
                s,
                value: sol.checks.integral_f,
                closed_form: sol.checks.holder_bound / bessel_i0(s - 1.0).powi(2),
                margin,
                condition_number: condition_number(&sol.assembled)?,
            })
        })
        .collect()
}
