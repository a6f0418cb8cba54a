//! Principal symbol of the linearized system and its closed-form inverse.
//!
//! Everything lives in an `h`-orthonormal frame at one point, with the
//! combined output `σ_MA(u)·Id + σ_TF(u)` matching the packed residual.

use serde::{Deserialize, Serialize};

use super::system::SystemState;
use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, inverse, CMat, C64};

#[derive(Clone, Debug)]
pub struct PrincipalSymbol {
    pub n: usize,
    pub rank: usize,
    pub xi: Vec<C64>,
    /// `θ` in the frame, `nr × nr`.
    pub theta: CMat,
    kappa_inv: CMat,
    kappa_det: f64,
    det_theta: f64,
    adjugate: CMat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymbolReport {
    pub point: usize,
    pub xi: Vec<[f64; 2]>,
    /// Operator norm of the inverse symbol, scaled by `|ξ|²`.
    pub inverse_norm: f64,
    pub composition_defect: f64,
    /// Hilbert–Schmidt tolerance `(r²+1)^{-1/2} n^{-1}` on the perturbation term.
    pub tolerance: f64,
    /// Hilbert–Schmidt norm of the perturbation term; it does not see second derivatives of `h`.
    pub sigma_g: f64,
}

pub fn perturbation_tolerance(n: usize, r: usize) -> f64 {
    1.0 / (((r * r + 1) as f64).sqrt() * n as f64)
}

impl PrincipalSymbol {
    /// Builds the symbol at a point from a frame `θ` and cotangent vector `ξ`.
    pub fn new(theta: &CMat, kappa: &CMat, rank: usize, xi: &[C64]) -> Result<Self> {
        let n = kappa.nrows();
        if xi.iter().all(|v| v.norm() == 0.0) {
            return Err(Error::SingularSymbol);
        }
        let theta = linalg::hermitian_part(theta);
        if linalg::min_eig(&theta) <= 0.0 {
            return Err(Error::SingularSymbol);
        }
        let det_theta = linalg::det(&theta).re;
        let adjugate = inverse(&theta)? * c(det_theta, 0.0);
        Ok(Self {
            n,
            rank,
            xi: xi.to_vec(),
            theta,
            kappa_inv: inverse(kappa)?,
            kappa_det: linalg::det(kappa).re,
            det_theta,
            adjugate,
        })
    }

    pub fn at_point(state: &SystemState, p: usize, xi: &[C64]) -> Result<Self> {
        let d = state.domain();
        Self::new(&state.frame_theta(p), &d.kappa, state.rank(), xi)
    }

    /// `|ξ|²` in the metric `ω₀`.
    pub fn xi_norm2(&self) -> f64 {
        let mut s = c(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                s += self.kappa_inv[(k, j)] * self.xi[j] * self.xi[k].conj();
            }
        }
        s.re
    }

    /// `Σ θ̃_{jkab} ξ_j ξ̄_k m_{ab}` with `θ̃` the adjugate arrangement.
    fn contract(&self, m: &CMat) -> C64 {
        let r = self.rank;
        let mut s = c(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                let w = self.xi[j] * self.xi[k].conj();
                for a in 0..r {
                    for b in 0..r {
                        s += self.adjugate[(k * r + b, j * r + a)] * w * m[(a, b)];
                    }
                }
            }
        }
        s
    }

    fn ma_scale(&self) -> f64 {
        let r = self.rank as f64;
        self.det_theta.powf(-1.0 + 1.0 / r) / (r * self.kappa_det)
    }

    pub fn apply_ma(&self, u: &CMat) -> C64 {
        -self.contract(u) * self.ma_scale()
    }

    pub fn apply_tf(&self, u: &CMat) -> CMat {
        linalg::trace_free(u) * c(-self.xi_norm2() / self.n as f64, 0.0)
    }

    /// Combined action `σ_MA(u)·Id + σ_TF(u)`.
    pub fn apply(&self, u: &CMat) -> CMat {
        identity(self.rank) * self.apply_ma(u) + self.apply_tf(u)
    }

    /// Closed-form inverse on a pair `(τ, v)` with `v` trace-free.
    pub fn inverse_pair(&self, tau: C64, v: &CMat) -> CMat {
        let r = self.rank;
        let q = self.xi_norm2();
        let nf = self.n as f64;
        let diag = self.contract(&identity(r));
        let a = (self.contract(v) * (nf / q) - tau / self.ma_scale()) / diag;
        identity(r) * a - v * c(nf / q, 0.0)
    }

    /// Inverse of [`Self::apply`].
    pub fn apply_inverse(&self, m: &CMat) -> CMat {
        let tau = m.trace() / self.rank as f64;
        self.inverse_pair(tau, &linalg::trace_free(m))
    }

    fn matrix_of(&self, f: impl Fn(&CMat) -> CMat) -> CMat {
        let r = self.rank;
        let mut out = CMat::zeros(r * r, r * r);
        for e in 0..r * r {
            let mut basis = CMat::zeros(r, r);
            basis[(e / r, e % r)] = c(1.0, 0.0);
            let img = f(&basis);
            for o in 0..r * r {
                out[(o, e)] = img[(o / r, o % r)];
            }
        }
        out
    }

    pub fn matrix(&self) -> CMat {
        self.matrix_of(|u| self.apply(u))
    }

    pub fn inverse_matrix(&self) -> CMat {
        self.matrix_of(|m| self.apply_inverse(m))
    }

    pub fn inverse_norm(&self) -> f64 {
        self.inverse_matrix().singular_values().max()
    }

    /// Max entry of `σ·σ⁻¹ − Id` and `σ⁻¹·σ − Id`.
    pub fn composition_defect(&self) -> f64 {
        let (m, mi) = (self.matrix(), self.inverse_matrix());
        let id = identity(self.rank * self.rank);
        linalg::max_abs(&(&m * &mi - &id)).max(linalg::max_abs(&(&mi * &m - &id)))
    }

    pub fn report(&self, point: usize) -> SymbolReport {
        SymbolReport {
            point,
            xi: self.xi.iter().map(|v| [v.re, v.im]).collect(),
            inverse_norm: self.inverse_norm() * self.xi_norm2(),
            composition_defect: self.composition_defect(),
            tolerance: perturbation_tolerance(self.n, self.rank),
            sigma_g: 0.0,
        }
    }
}

/// Cotangent vector of a Fourier mode: `ξ_j` with `∂_{z_j} e^{2πi⟨m,x⟩} = i ξ_j e^{2πi⟨m,x⟩}`.
pub fn mode_covector(state: &SystemState, mode: &[i64]) -> Vec<C64> {
    let d = state.domain();
    (0..d.n).map(|j| d.dz_symbol(mode, j) * c(0.0, -1.0)).collect()
}

/// Applies the packed Jacobian to `û cos(2π⟨m,x⟩)` and returns the frame output at `p`
/// together with the symbol prediction `−σ(ξ) û cos(2π⟨m,x_p⟩)`.
pub fn plane_wave_probe(state: &SystemState, mode: &[i64], uhat: &CMat, p: usize) -> Result<(CMat, CMat)> {
    let d = state.domain();
    let r = state.rank();
    let dim = r * r;
    let mut x = vec![0.0; d.num_points() * dim];
    let mut packed = vec![0.0; dim];
    linalg::pack_herm(uhat, &mut packed);
    for q in 0..d.num_points() {
        let phase: f64 = d.coords(q).iter().zip(mode).map(|(x, &m)| x * m as f64).sum();
        let w = (2.0 * std::f64::consts::PI * phase).cos();
        for (dst, src) in x[q * dim..(q + 1) * dim].iter_mut().zip(&packed) {
            *dst = w * src;
        }
    }
    let out = state.apply_packed(&x);
    let observed = linalg::unpack_herm(&out[p * dim..(p + 1) * dim], r);
    let sym = PrincipalSymbol::at_point(state, p, &mode_covector(state, mode))?;
    let phase: f64 = d.coords(p).iter().zip(mode).map(|(x, &m)| x * m as f64).sum();
    let w = (2.0 * std::f64::consts::PI * phase).cos();
    let predicted = sym.apply(uhat) * c(-w, 0.0);
    Ok((observed, predicted))
}

/// Relative deviation of the plane-wave response from the symbol prediction at `p`.
pub fn plane_wave_error(state: &SystemState, mode: &[i64], uhat: &CMat, p: usize) -> Result<f64> {
    let (obs, pred) = plane_wave_probe(state, mode, uhat, p)?;
    Ok(linalg::max_abs(&(obs - &pred)) / linalg::max_abs(&pred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{metric_from_log, BundleSpec};
    use crate::hym_system::{a0_init, Equation, SystemConfig};
    use crate::samples::smooth_hermitian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_positive(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
        let a = CMat::from_fn(dim, dim, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        &a * a.adjoint() + identity(dim) * c(0.3, 0.0)
    }

    #[test]
    fn closed_form_inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, r) in [(1, 1), (1, 2), (1, 3), (2, 2), (2, 3)] {
            let kappa = random_positive(&mut rng, n);
            for _ in 0..10 {
                let theta = random_positive(&mut rng, n * r);
                let xi: Vec<C64> = (0..n).map(|_| c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
                let sym = PrincipalSymbol::new(&theta, &kappa, r, &xi).unwrap();
                assert!(sym.composition_defect() < 1e-10, "{}", sym.composition_defect());
                assert!(sym.inverse_norm().is_finite());
            }
        }
    }

    #[test]
    fn symbol_rejects_degenerate_input() {
        let kappa = identity(1);
        assert!(PrincipalSymbol::new(&identity(2), &kappa, 2, &[c(0.0, 0.0)]).is_err());
        assert!(PrincipalSymbol::new(&(identity(2) * c(-1.0, 0.0)), &kappa, 2, &[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn tolerance_values() {
        assert!((perturbation_tolerance(1, 1) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((perturbation_tolerance(2, 2) - 0.5 / 5f64.sqrt()).abs() < 1e-15);
    }

    fn probe_error(spec: BundleSpec) -> f64 {
        let spec = Arc::new(spec);
        let d = spec.domain.clone();
        let h = metric_from_log(&spec, &smooth_hermitian(&d, spec.rank, 4, 0.2, 3, 1)).unwrap();
        let cfg = SystemConfig { alpha: 1.5, lambda: 0.8, mu: 0.4, ..Default::default() };
        let a0 = a0_init(&h, &cfg).unwrap();
        let state = SystemState::new(&h, &Equation::Full { t: 0.3, a0 }, &cfg).unwrap();
        let mut mode = vec![0; d.real_axes()];
        mode[0] = (d.resolution / 4) as i64;
        let uhat = CMat::from_fn(spec.rank, spec.rank, |i, j| c((i + 2 * j) as f64 * 0.3 + 0.5, if i == j { 0.0 } else { 0.2 }));
        let uhat = linalg::hermitian_part(&uhat);
        plane_wave_error(&state, &mode, &uhat, 0).unwrap()
    }

    #[test]
    fn plane_waves_follow_the_symbol() {
        let e: Vec<f64> = [32, 64, 128].iter().map(|&nn| probe_error(BundleSpec::split_square(1, nn, 2, 1).unwrap())).collect();
        assert!(e[1] / e[0] <= 0.6 && e[2] / e[1] <= 0.6, "{e:?}");
        let e: Vec<f64> = [32, 64].iter().map(|&nn| probe_error(BundleSpec::extension_square(1, nn, 1).unwrap())).collect();
        assert!(e[1] / e[0] <= 0.6, "{e:?}");
    }
}
