//! Residuals of the coupled determinant / trace-free system, their exact
//! discrete linearization, and the packed real operator used by Newton.

use rayon::prelude::*;

use crate::bundle::MetricField;
use crate::curvature::{connection_forms, raw_blocks_from_connection};
use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField};
use crate::grid::{Scheme, TorusDomain};
use crate::linalg::{self, c, cholesky, identity, inverse, kron_identity, lower_inverse, CMat, C64};

use super::config::{OmegaVariant, SystemConfig};

/// Which equation the residual describes.
#[derive(Clone, Debug)]
pub enum Equation {
    /// The full system at time `t` with right-hand side `(det H₀/det h)^λ a₀`.
    Full { t: f64, a0: ScalarField },
    /// The cushioned trace-free equation with `ω₀`; the determinant is held fixed.
    Cushion,
}

impl Equation {
    pub fn t(&self) -> f64 {
        match self {
            Equation::Full { t, .. } => *t,
            Equation::Cushion => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Residual {
    /// `ω₀^{-n} det(θ)^{1/r} − (det H₀/det h)^λ a₀` (zero for the cushioned equation).
    pub ma: ScalarField,
    /// Trace-free residual as an endomorphism in the trivializing frame.
    pub tf: EndoField,
    /// `h`-self-adjoint part of the trace-free residual in the `h`-orthonormal frame.
    pub tf_frame: Vec<CMat>,
}

impl Residual {
    pub fn ma_norm(&self) -> f64 {
        self.ma.max_abs()
    }

    pub fn tf_norm(&self) -> f64 {
        self.tf_frame.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.ma_norm().max(self.tf_norm())
    }
}

/// `ω₀^{-n} ω^{n−1} ∧ B` for `n x n` blocks of endomorphisms, `ω` given by its coefficients.
pub(crate) fn contract(omega: &CMat, blocks: &[Vec<CMat>], kappa: &CMat) -> CMat {
    match blocks.len() {
        1 => &blocks[0][0] / kappa[(0, 0)],
        _ => {
            let kdet = linalg::det(kappa);
            (&blocks[1][1] * omega[(0, 0)] + &blocks[0][0] * omega[(1, 1)]
                - &blocks[1][0] * omega[(0, 1)]
                - &blocks[0][1] * omega[(1, 0)])
                / (kdet * 2.0)
        }
    }
}

fn split_blocks(m: &CMat, n: usize, r: usize) -> Vec<Vec<CMat>> {
    (0..n).map(|j| (0..n).map(|k| linalg::block(m, r, j, k)).collect()).collect()
}

/// Everything needed at one grid point to evaluate and linearize the system.
#[derive(Clone, Debug)]
struct PointData {
    l: CMat,
    l_inv: CMat,
    g_inv: CMat,
    rt: CMat,
    rt_inv: CMat,
    det_c: C64,
    density: f64,
    rho: f64,
    a0: f64,
    l0: CMat,
    l0_inv: CMat,
    s: CMat,
    log_circ: CMat,
    theta_circ: Vec<Vec<CMat>>,
    omega: CMat,
    tf: CMat,
    tf_hat: CMat,
    ma: f64,
}

/// The system evaluated at one metric, ready for residual queries and
/// Jacobian-vector products.
pub struct SystemState {
    pub h: MetricField,
    pub equation: Equation,
    pub cfg: SystemConfig,
    connection: Vec<EndoField>,
    points: Vec<PointData>,
}

impl SystemState {
    pub fn new(h: &MetricField, equation: &Equation, cfg: &SystemConfig) -> Result<Self> {
        let d = h.domain().clone();
        let (n, r) = (d.n, h.rank());
        let rf = r as f64;
        let kappa = d.kappa.clone();
        let kdet = d.kappa_det();
        let reference = h.reference_matrix();
        let connection = connection_forms(h, Scheme::Spectral)?;
        let raw = raw_blocks_from_connection(h, &connection, Scheme::Spectral);
        let full = matches!(equation, Equation::Full { .. });
        let t = equation.t();
        let theta_offset = kron_identity(&kappa, r) * c((1.0 - t) * cfg.alpha, 0.0);
        let mu = if full { cfg.mu } else { 0.0 };
        let a0_field = match equation {
            Equation::Full { a0, .. } => {
                d.check_scalar(a0)?;
                Some(a0)
            }
            Equation::Cushion => None,
        };
        let points = (0..h.len())
            .into_par_iter()
            .map(|p| {
                let g = &h.endo.values[p];
                let l = cholesky(g).map_err(|_| Error::NotPositive { point: p, eigenvalue: linalg::min_eig(g) })?;
                let l_inv = lower_inverse(&l);
                let g_inv = l_inv.adjoint() * &l_inv;
                let blocks = split_blocks(&raw[p], n, r);
                let rt = &raw[p] + &theta_offset;
                let (rt_inv, det_c, density) = if full {
                    let det_c = linalg::det(&rt);
                    if !(det_c.re > 0.0) {
                        return Err(Error::NonPositiveDeterminant { point: p, det: det_c.re });
                    }
                    (inverse(&rt)?, det_c, det_c.re.powf(1.0 / rf) / kdet)
                } else {
                    (CMat::zeros(n * r, n * r), c(1.0, 0.0), 0.0)
                };
                let g0 = &reference.values[p];
                let rho = linalg::det(g0).re / linalg::det(g).re;
                if !(rho.is_finite() && rho > 0.0) {
                    return Err(Error::NonFinite("determinant ratio"));
                }
                let l0 = cholesky(g0)?;
                let l0_inv = lower_inverse(&l0);
                let s = linalg::hermitian_part(&(&l0_inv * g * l0_inv.adjoint()));
                let logs = linalg::log_herm(&s).map_err(|e| match e {
                    Error::NotPositive { eigenvalue, .. } => Error::NotPositive { point: p, eigenvalue },
                    other => other,
                })?;
                let log_circ = linalg::trace_free(&(l0_inv.adjoint() * logs * l0.adjoint()));
                let theta_circ: Vec<Vec<CMat>> =
                    blocks.iter().map(|row| row.iter().map(linalg::trace_free).collect()).collect();
                let omega = match (cfg.omega_variant, full) {
                    (OmegaVariant::Beta, true) => {
                        let tr = CMat::from_fn(n, n, |j, k| blocks[j][k].trace());
                        (tr + &kappa * c(rf * (1.0 - t) * cfg.alpha, 0.0)) / c(rf * cfg.alpha + 1.0, 0.0)
                    }
                    _ => kappa.clone(),
                };
                let tf = contract(&omega, &theta_circ, &kappa) + &log_circ * c(cfg.epsilon * rho.powf(mu), 0.0);
                let tf_hat = l.adjoint() * &tf * l_inv.adjoint();
                let a0 = a0_field.map_or(0.0, |f| f.values[p].re);
                let ma = if full { density - rho.powf(cfg.lambda) * a0 } else { 0.0 };
                Ok(PointData {
                    l,
                    l_inv,
                    g_inv,
                    rt,
                    rt_inv,
                    det_c,
                    density,
                    rho,
                    a0,
                    l0,
                    l0_inv,
                    s,
                    log_circ,
                    theta_circ,
                    omega,
                    tf,
                    tf_hat,
                    ma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h: h.clone(), equation: equation.clone(), cfg: cfg.clone(), connection, points })
    }

    pub fn domain(&self) -> &TorusDomain {
        self.h.domain()
    }

    pub fn rank(&self) -> usize {
        self.h.rank()
    }

    fn is_full(&self) -> bool {
        matches!(self.equation, Equation::Full { .. })
    }

    fn mu(&self) -> f64 {
        if self.is_full() {
            self.cfg.mu
        } else {
            0.0
        }
    }

    pub fn residual(&self) -> Residual {
        let r = self.rank();
        Residual {
            ma: ScalarField { values: self.points.iter().map(|q| c(q.ma, 0.0)).collect() },
            tf: EndoField::new(r, self.points.iter().map(|q| q.tf.clone()).collect(), self.h.spec.endo_twist()),
            tf_frame: self.points.iter().map(|q| linalg::hermitian_part(&q.tf_hat)).collect(),
        }
    }

    /// `ω₀^{-n} det(θ)^{1/r}` per point (zero for the cushioned equation).
    pub fn ma_density(&self) -> ScalarField {
        ScalarField { values: self.points.iter().map(|q| c(q.density, 0.0)).collect() }
    }

    pub fn det_ratio(&self) -> ScalarField {
        ScalarField { values: self.points.iter().map(|q| c(q.rho, 0.0)).collect() }
    }

    /// Raw-frame `log h̃°`.
    pub fn log_normalized(&self) -> EndoField {
        EndoField::new(self.rank(), self.points.iter().map(|q| q.log_circ.clone()).collect(), self.h.spec.endo_twist())
    }

    /// Packed residual: `Herm(L^* r_TF L^{-*}) + r_MA Id` per point.
    pub fn packed_residual(&self) -> Vec<f64> {
        let r = self.rank();
        let dim = r * r;
        let mut out = vec![0.0; self.points.len() * dim];
        out.par_chunks_mut(dim).zip(self.points.par_iter()).for_each(|(chunk, q)| {
            linalg::pack_herm(&(&q.tf_hat + identity(r) * c(q.ma, 0.0)), chunk);
        });
        out
    }

    /// Smallest eigenvalue of `θ(t, h)` in `ω₀ ⊗ h` units over the grid.
    pub fn theta_margin(&self) -> f64 {
        let d = self.domain();
        let r = self.rank();
        let p = cholesky(&d.kappa).expect("kappa positive");
        let norm = lower_inverse(&p).kronecker(&identity(r));
        (0..self.points.len())
            .into_par_iter()
            .map(|p| linalg::min_eig(&linalg::hermitian_part(&(&norm * self.frame_theta(p) * norm.adjoint()))))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// `θ(t, h)` at point `p` in an `h`-orthonormal frame (dual-Nakano arrangement).
    pub fn frame_theta(&self, p: usize) -> CMat {
        let q = &self.points[p];
        let n = self.domain().n;
        identity(n).kronecker(&q.l.adjoint()) * &q.rt * identity(n).kronecker(&q.l_inv.adjoint())
    }

    /// Exact derivative of the raw residual along `h ↦ h·exp(s u)` at `s = 0`.
    pub fn linearized_apply(&self, u: &EndoField) -> Result<(ScalarField, EndoField)> {
        let d = self.domain();
        d.check_endo(u)?;
        let (n, r) = (d.n, self.rank());
        let rf = r as f64;
        let kappa = &d.kappa;
        let cfg = &self.cfg;
        let full = self.is_full();
        let mu = self.mu();
        let gu = self.h.endo.mul(u);
        let dgu = d.d_all(&gu);
        let da: Vec<EndoField> = (0..n)
            .map(|j| {
                let values = (0..u.len())
                    .into_par_iter()
                    .map(|p| -(&u.values[p] * &self.connection[j].values[p]) + &self.points[p].g_inv * &dgu[j].values[p])
                    .collect();
                EndoField::new(r, values, self.connection[j].twist.clone())
            })
            .collect();
        let dbar: Vec<Vec<EndoField>> = da.iter().map(|x| d.dbar_all(x)).collect();
        let beta = full && cfg.omega_variant == OmegaVariant::Beta && n > 1;
        let out: Vec<(C64, CMat)> = (0..u.len())
            .into_par_iter()
            .map(|p| {
                let q = &self.points[p];
                let up = &u.values[p];
                let tru = up.trace();
                let dtheta: Vec<Vec<CMat>> =
                    (0..n).map(|j| (0..n).map(|k| -&dbar[j][k].values[p]).collect()).collect();
                let dma = if full {
                    let mut tr = c(0.0, 0.0);
                    for j in 0..n {
                        for k in 0..n {
                            tr += (linalg::block(&q.rt_inv, r, k, j) * &dtheta[j][k]).trace();
                        }
                    }
                    let df = q.density / rf * (q.det_c * tr).re / q.det_c.re;
                    c(df, 0.0) + tru * (cfg.lambda * q.rho.powf(cfg.lambda) * q.a0)
                } else {
                    c(0.0, 0.0)
                };
                let dcirc: Vec<Vec<CMat>> =
                    dtheta.iter().map(|row| row.iter().map(linalg::trace_free).collect()).collect();
                let mut dtf = contract(&q.omega, &dcirc, kappa);
                if beta {
                    let domega =
                        CMat::from_fn(n, n, |j, k| dtheta[j][k].trace()) / c(rf * cfg.alpha + 1.0, 0.0);
                    dtf += contract(&domega, &q.theta_circ, kappa);
                }
                let v = &q.l0_inv * &gu.values[p] * q.l0_inv.adjoint();
                let dl = linalg::dlog_herm(&q.s, &v).expect("positive S");
                let dlog = linalg::trace_free(&(q.l0_inv.adjoint() * dl * q.l0.adjoint()));
                let weight = cfg.epsilon * q.rho.powf(mu);
                dtf += (dlog - &q.log_circ * (tru * mu)) * c(weight, 0.0);
                (dma, dtf)
            })
            .collect();
        let (ma, tf): (Vec<C64>, Vec<CMat>) = out.into_iter().unzip();
        Ok((ScalarField { values: ma }, EndoField::new(r, tf, self.h.spec.endo_twist())))
    }

    /// `u = L^{-*} û L^*` for a packed Hermitian frame field `û`.
    pub fn unpack_direction(&self, x: &[f64]) -> EndoField {
        let r = self.rank();
        let dim = r * r;
        let values = self
            .points
            .par_iter()
            .enumerate()
            .map(|(p, q)| {
                let uh = linalg::unpack_herm(&x[p * dim..(p + 1) * dim], r);
                q.l_inv.adjoint() * uh * q.l.adjoint()
            })
            .collect();
        EndoField::new(r, values, self.h.spec.endo_twist())
    }

    /// Jacobian of the packed residual with respect to the packed frame unknown.
    pub fn apply_packed(&self, x: &[f64]) -> Vec<f64> {
        let r = self.rank();
        let dim = r * r;
        let u = self.unpack_direction(x);
        let (dma, dtf) = self.linearized_apply(&u).expect("consistent direction field");
        let full = self.is_full();
        let mut out = vec![0.0; x.len()];
        out.par_chunks_mut(dim).enumerate().for_each(|(p, chunk)| {
            let q = &self.points[p];
            let uh = linalg::unpack_herm(&x[p * dim..(p + 1) * dim], r);
            let mut psi = uh.lower_triangle();
            for i in 0..r {
                psi[(i, i)] *= 0.5;
            }
            let psi_star = psi.adjoint();
            let comm = &psi_star * &q.tf_hat - &q.tf_hat * &psi_star;
            let frame = q.l.adjoint() * &dtf.values[p] * q.l_inv.adjoint() + comm;
            let scalar = if full { dma.values[p] } else { uh.trace() / r as f64 };
            linalg::pack_herm(&(frame + identity(r) * scalar), chunk);
        });
        out
    }

    /// Metric `L exp(s û) L^*` for a packed frame step `û`.
    pub fn updated_metric(&self, x: &[f64], step: f64) -> Result<MetricField> {
        let r = self.rank();
        let dim = r * r;
        let values = self
            .points
            .par_iter()
            .enumerate()
            .map(|(p, q)| {
                let uh = linalg::unpack_herm(&x[p * dim..(p + 1) * dim], r) * c(step, 0.0);
                linalg::hermitian_part(&(&q.l * linalg::exp_herm(&uh) * q.l.adjoint()))
            })
            .collect();
        let mut h = self.h.clone();
        h.endo = EndoField::new(r, values, self.h.endo.twist.clone());
        h.check_positive()?;
        Ok(h)
    }

    /// Constant-coefficient Fourier preconditioner built from grid means.
    pub fn preconditioner(&self) -> Preconditioner {
        let d = self.domain().clone();
        let (n, r) = (d.n, self.rank());
        let rf = r as f64;
        let np = self.points.len() as f64;
        let full = self.is_full();
        let mut cjk = CMat::zeros(n, n);
        let mut m_lambda = 0.0;
        let mut m_mu = 0.0;
        for q in &self.points {
            if full {
                for j in 0..n {
                    for k in 0..n {
                        cjk[(j, k)] += linalg::block(&q.rt_inv, r, k, j).trace() * (q.density / rf / np);
                    }
                }
                m_lambda += q.rho.powf(self.cfg.lambda) * q.a0 / np;
            }
            m_mu += q.rho.powf(self.mu()) / np;
        }
        let kinv = inverse(&d.kappa).expect("kappa invertible");
        let guard = |v: f64| if v.abs() < 1e-12 { 1.0 } else { v };
        let (mut d_tr, mut d_tf) = (Vec::with_capacity(d.num_points()), Vec::with_capacity(d.num_points()));
        for p in 0..d.num_points() {
            let mode = d.mode(p);
            let s: Vec<C64> = (0..n).map(|j| d.dz_symbol(&mode, j)).collect();
            let mut a = c(0.0, 0.0);
            let mut b = c(0.0, 0.0);
            for j in 0..n {
                for k in 0..n {
                    let ss = s[j] * s[k].conj();
                    a += cjk[(j, k)] * ss;
                    b += kinv[(k, j)] * ss;
                }
            }
            d_tr.push(if full { guard(a.re + self.cfg.lambda * rf * m_lambda) } else { 1.0 });
            d_tf.push(guard(b.re / n as f64 + self.cfg.epsilon * m_mu));
        }
        Preconditioner { domain: d, rank: r, d_tr, d_tf }
    }
}

/// Per-mode scalar division of the trace and trace-free channels.
pub struct Preconditioner {
    domain: TorusDomain,
    rank: usize,
    d_tr: Vec<f64>,
    d_tf: Vec<f64>,
}

impl Preconditioner {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let dim = r * r;
        let np = self.domain.num_points();
        let mats: Vec<CMat> = (0..np).map(|p| linalg::unpack_herm(&x[p * dim..(p + 1) * dim], r)).collect();
        let tau: Vec<C64> = mats.iter().map(|m| m.trace() / r as f64).collect();
        let divide = |field: Vec<C64>, den: &[f64]| -> Vec<C64> {
            let mut f = self.domain.fft_all(&field, false);
            f.iter_mut().zip(den).for_each(|(v, d)| *v /= *d);
            self.domain.fft_all(&f, true)
        };
        let tau = divide(tau, &self.d_tr);
        let entries: Vec<Vec<C64>> = (0..r * r)
            .into_par_iter()
            .map(|e| {
                let (i, j) = (e / r, e % r);
                let field: Vec<C64> = mats
                    .iter()
                    .zip(0..)
                    .map(|(m, _)| m[(i, j)] - if i == j { m.trace() / r as f64 } else { c(0.0, 0.0) })
                    .collect();
                divide(field, &self.d_tf)
            })
            .collect();
        let mut out = vec![0.0; x.len()];
        out.par_chunks_mut(dim).enumerate().for_each(|(p, chunk)| {
            let m = CMat::from_fn(r, r, |i, j| entries[i * r + j][p] + if i == j { tau[p] } else { c(0.0, 0.0) });
            linalg::pack_herm(&m, chunk);
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{metric_from_log, BundleSpec};
    use crate::samples::{smooth_hermitian, smooth_scalar};
    use std::sync::Arc;

    fn setup(spec: BundleSpec, seed: u64, variant: OmegaVariant) -> (SystemState, SystemConfig) {
        let spec = Arc::new(spec);
        let d = &spec.domain;
        let h = metric_from_log(&spec, &smooth_hermitian(d, spec.rank, seed, 0.3, 3, 1)).unwrap();
        let a0 = smooth_scalar(d, seed + 1, 0.2, 3, 1).map(|z| c(z.re.exp(), 0.0));
        let cfg = SystemConfig { alpha: 2.0, epsilon: 0.7, lambda: 1.3, mu: 0.5, omega_variant: variant, ..Default::default() };
        let state = SystemState::new(&h, &Equation::Full { t: 0.4, a0 }, &cfg).unwrap();
        (state, cfg)
    }

    fn direction(state: &SystemState, seed: u64) -> Vec<f64> {
        let d = state.domain();
        let r = state.rank();
        let u = smooth_hermitian(d, r, seed, 1.0, 3, 2);
        let mut x = vec![0.0; d.num_points() * r * r];
        for (p, m) in u.values.iter().enumerate() {
            linalg::pack_herm(m, &mut x[p * r * r..(p + 1) * r * r]);
        }
        x
    }

    fn fd_error(state: &SystemState, cfg: &SystemConfig, x: &[f64], s: f64) -> f64 {
        let u = state.unpack_direction(x);
        let (lma, ltf) = state.linearized_apply(&u).unwrap();
        let eval = |step: f64| {
            let h = state.updated_metric(x, step).unwrap();
            SystemState::new(&h, &state.equation, cfg).unwrap().residual()
        };
        let (rp, rm) = (eval(s), eval(-s));
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for p in 0..u.len() {
            let fd = (rp.ma.values[p] - rm.ma.values[p]) / (2.0 * s);
            err = err.max((fd - lma.values[p]).norm());
            scale = scale.max(lma.values[p].norm());
            let fdm = (&rp.tf.values[p] - &rm.tf.values[p]) / c(2.0 * s, 0.0);
            err = err.max(linalg::max_abs(&(fdm - &ltf.values[p])));
            scale = scale.max(linalg::max_abs(&ltf.values[p]));
        }
        err / scale
    }

    #[test]
    fn linearization_matches_finite_differences_split() {
        let (state, cfg) = setup(BundleSpec::split_square(1, 16, 2, 1).unwrap(), 1, OmegaVariant::Fixed);
        let x = direction(&state, 9);
        let e1 = fd_error(&state, &cfg, &x, 1e-3);
        let e2 = fd_error(&state, &cfg, &x, 5e-4);
        assert!(e2 < 1e-6, "{e1} {e2}");
        assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "{e1} {e2}");
    }

    #[test]
    fn linearization_matches_finite_differences_extension() {
        let (state, cfg) = setup(BundleSpec::extension_square(1, 16, 1).unwrap(), 2, OmegaVariant::Fixed);
        let x = direction(&state, 5);
        let e = fd_error(&state, &cfg, &x, 1e-4);
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn linearization_matches_finite_differences_beta_surface() {
        let (state, cfg) = setup(BundleSpec::split_square(2, 8, 2, 1).unwrap(), 3, OmegaVariant::Beta);
        let x = direction(&state, 4);
        let e = fd_error(&state, &cfg, &x, 1e-4);
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn packed_jacobian_matches_finite_differences() {
        for spec in [BundleSpec::split_square(1, 16, 2, 1).unwrap(), BundleSpec::extension_square(1, 16, 1).unwrap()] {
            let (state, cfg) = setup(spec, 7, OmegaVariant::Fixed);
            let x = direction(&state, 8);
            let jx = state.apply_packed(&x);
            let s = 1e-4;
            let rp = SystemState::new(&state.updated_metric(&x, s).unwrap(), &state.equation, &cfg).unwrap().packed_residual();
            let rm = SystemState::new(&state.updated_metric(&x, -s).unwrap(), &state.equation, &cfg).unwrap().packed_residual();
            let scale = jx.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
            let err = jx
                .iter()
                .zip(rp.iter().zip(&rm))
                .map(|(j, (a, b))| (j - (a - b) / (2.0 * s)).abs())
                .fold(0.0, f64::max);
            assert!(err / scale < 1e-6, "{}", err / scale);
        }
    }

    #[test]
    fn linearization_is_linear() {
        let (state, _) = setup(BundleSpec::split_square(1, 16, 3, 1).unwrap(), 4, OmegaVariant::Fixed);
        let x1 = direction(&state, 1);
        let x2 = direction(&state, 2);
        let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let (a, b, ab) = (state.apply_packed(&x1), state.apply_packed(&x2), state.apply_packed(&sum));
        let err = a.iter().zip(&b).zip(&ab).map(|((a, b), ab)| (a + b - ab).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn trace_free_residual_properties() {
        let (state, _) = setup(BundleSpec::split_square(1, 16, 2, 1).unwrap(), 6, OmegaVariant::Fixed);
        let res = state.residual();
        assert!(res.tf.values.iter().all(|m| m.trace().norm() < 1e-10));
        let spec = Arc::new(BundleSpec::split_square(1, 16, 1, 1).unwrap());
        let h = metric_from_log(&spec, &smooth_hermitian(&spec.domain, 1, 3, 0.05, 3, 1)).unwrap();
        let a0 = ScalarField::constant(h.len(), 1.0);
        let st = SystemState::new(&h, &Equation::Full { t: 0.5, a0 }, &SystemConfig::default()).unwrap();
        assert_eq!(st.residual().tf_norm(), 0.0);
    }

    #[test]
    fn constant_scaling_direction_hits_only_friction() {
        // at h = H₀·c(z) the trace-free curvature vanishes; u = c Id moves only the μ term
        let spec = Arc::new(BundleSpec::split_square(1, 16, 2, 1).unwrap());
        let d = &spec.domain;
        let log = smooth_hermitian(d, 2, 5, 0.4, 3, 1);
        let h = metric_from_log(&spec, &log).unwrap();
        let cfg = SystemConfig { mu: 0.8, epsilon: 0.6, ..Default::default() };
        let a0 = ScalarField::constant(h.len(), 1.0);
        let st = SystemState::new(&h, &Equation::Full { t: 0.2, a0 }, &cfg).unwrap();
        let cval = 0.3;
        let u = EndoField::constant(h.len(), &(identity(2) * c(cval, 0.0)), spec.endo_twist());
        let (_, dtf) = st.linearized_apply(&u).unwrap();
        let logc = st.log_normalized();
        let rho = st.det_ratio();
        for p in 0..h.len() {
            let want = &logc.values[p] * c(-cfg.epsilon * rho.values[p].re.powf(cfg.mu) * cfg.mu * 2.0 * cval, 0.0);
            assert!(linalg::max_abs(&(&dtf.values[p] - want)) < 1e-10);
        }
    }
}
