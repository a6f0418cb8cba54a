//! The discretized flat torus `C^n / (Z^n + Λ Z^n)` with complex derivative
//! operators and integration.
//!
//! Points sit on a uniform grid in real lattice coordinates `(x, y) ∈ [0,1)^{2n}`
//! mapped to `z = x + Λ y`. Real axis `a < n` is `x_a`, axis `n + a` is `y_a`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField, TwistPair};
use crate::linalg::{c, exp_nilpotent, inverse, log_unipotent, max_abs, min_eig, CMat, C64};

/// Which discrete derivative to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Spectral,
    FiniteDifference4,
}

/// `∂/∂z_j` or `∂/∂z̄_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComplexAxis {
    Dz(usize),
    Dzbar(usize),
}

/// Serializable description of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub n: usize,
    /// Λ as rows of `[re, im]` pairs.
    pub periods: Vec<Vec<[f64; 2]>>,
    pub resolution: usize,
    /// Degree of the determinant bundle fixing the normalization of ω₀.
    pub total_degree: u32,
}

#[derive(Clone)]
pub struct TorusDomain {
    pub n: usize,
    pub periods: CMat,
    pub resolution: usize,
    pub total_degree: u32,
    /// Constant coefficients of ω₀ = i Σ κ_{jk} dz_j ∧ dz̄_k.
    pub kappa: CMat,
    dz: Vec<Vec<C64>>,
    dzbar: Vec<Vec<C64>>,
    lebesgue_volume: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusDomain")
            .field("n", &self.n)
            .field("periods", &self.periods)
            .field("resolution", &self.resolution)
            .field("total_degree", &self.total_degree)
            .finish()
    }
}

impl TorusDomain {
    /// Builds the domain; ω₀ is normalized so that `∫ (2π)^{-n} det κ dV = total_degree^n`.
    pub fn new(n: usize, periods: CMat, resolution: usize, total_degree: u32) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidDomain(format!("complex dimension {n} not in 1..=2")));
        }
        if periods.nrows() != n || periods.ncols() != n {
            return Err(Error::InvalidDomain("period matrix must be n x n".into()));
        }
        if resolution < 8 || resolution % 2 != 0 {
            return Err(Error::InvalidDomain(format!("resolution {resolution} must be even and >= 8")));
        }
        if total_degree == 0 {
            return Err(Error::InvalidDomain("total degree must be positive".into()));
        }
        let sym_defect = (&periods - periods.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if sym_defect > 1e-12 {
            return Err(Error::InvalidDomain("period matrix must be symmetric".into()));
        }
        let im = periods.map(|z| c(z.im, 0.0));
        if min_eig(&im) <= 1e-12 {
            return Err(Error::InvalidDomain("Im Λ must be positive definite".into()));
        }
        let im_inv = inverse(&im)?;
        let kappa = im_inv * c(PI * total_degree as f64, 0.0);
        let lebesgue_volume = im.determinant().re;

        // ∂_z = M (∂_y − Λ̄ᵀ ∂_x), M = ((Λ − Λ̄)ᵀ)^{-1}
        let m = inverse(&(&periods - periods.map(|z| z.conj())).transpose())?;
        let mut dz = vec![vec![c(0.0, 0.0); 2 * n]; n];
        let mut dzbar = vec![vec![c(0.0, 0.0); 2 * n]; n];
        for j in 0..n {
            for b in 0..n {
                dz[j][n + b] = m[(j, b)];
                for a in 0..n {
                    dz[j][a] -= m[(j, b)] * periods[(a, b)].conj();
                }
            }
            for a in 0..2 * n {
                let delta = if a == j { 1.0 } else { 0.0 };
                dzbar[j][a] = if a < n { c(delta, 0.0) - dz[j][a] } else { -dz[j][a] };
            }
        }

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(resolution);
        let ifft = planner.plan_fft_inverse(resolution);
        Ok(Self { n, periods, resolution, total_degree, kappa, dz, dzbar, lebesgue_volume, fft, ifft })
    }

    /// Square lattice `Z^n + i Z^n`.
    pub fn square(n: usize, resolution: usize, total_degree: u32) -> Result<Self> {
        Self::new(n, CMat::identity(n, n) * c(0.0, 1.0), resolution, total_degree)
    }

    pub fn from_descriptor(d: &DomainDescriptor) -> Result<Self> {
        if d.periods.len() != d.n || d.periods.iter().any(|row| row.len() != d.n) {
            return Err(Error::InvalidDomain("period rows must be n x n".into()));
        }
        let periods = CMat::from_fn(d.n, d.n, |i, j| c(d.periods[i][j][0], d.periods[i][j][1]));
        Self::new(d.n, periods, d.resolution, d.total_degree)
    }

    pub fn descriptor(&self) -> DomainDescriptor {
        DomainDescriptor {
            n: self.n,
            periods: (0..self.n)
                .map(|i| (0..self.n).map(|j| [self.periods[(i, j)].re, self.periods[(i, j)].im]).collect())
                .collect(),
            resolution: self.resolution,
            total_degree: self.total_degree,
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.descriptor()).expect("descriptor serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    /// Same lattice at another resolution.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        Self::new(self.n, self.periods.clone(), resolution, self.total_degree)
    }

    /// Same lattice and resolution, normalized for another determinant degree.
    pub fn with_degree(&self, total_degree: u32) -> Result<Self> {
        Self::new(self.n, self.periods.clone(), self.resolution, total_degree)
    }

    pub fn real_axes(&self) -> usize {
        2 * self.n
    }

    pub fn num_points(&self) -> usize {
        self.resolution.pow(2 * self.n as u32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.resolution.pow(axis as u32)
    }

    pub fn axis_index(&self, p: usize, axis: usize) -> usize {
        (p / self.stride(axis)) % self.resolution
    }

    /// Lattice coordinates `(x, y)` of a grid point.
    pub fn coords(&self, p: usize) -> Vec<f64> {
        (0..self.real_axes())
            .map(|a| self.axis_index(p, a) as f64 / self.resolution as f64)
            .collect()
    }

    /// Complex coordinates `z = x + Λ y`.
    pub fn z(&self, p: usize) -> Vec<C64> {
        let xy = self.coords(p);
        (0..self.n)
            .map(|j| {
                let mut z = c(xy[j], 0.0);
                for b in 0..self.n {
                    z += self.periods[(j, b)] * xy[self.n + b];
                }
                z
            })
            .collect()
    }

    /// Signed Fourier mode numbers of the flat index `p`.
    pub fn mode(&self, p: usize) -> Vec<i64> {
        let n = self.resolution as i64;
        (0..self.real_axes())
            .map(|a| {
                let k = self.axis_index(p, a) as i64;
                if k > n / 2 {
                    k - n
                } else {
                    k
                }
            })
            .collect()
    }

    /// Fourier symbol of `∂/∂z_j` at the given mode (Nyquist modes map to zero).
    pub fn dz_symbol(&self, mode: &[i64], j: usize) -> C64 {
        let n = self.resolution as i64;
        let mut s = c(0.0, 0.0);
        for (a, &k) in mode.iter().enumerate() {
            if 2 * k.abs() == n {
                continue;
            }
            s += self.dz[j][a] * c(0.0, 2.0 * PI * k as f64);
        }
        s
    }

    /// Coefficients of `∂/∂z_j` in terms of real-axis derivatives.
    pub fn dz_coefficients(&self, j: usize) -> &[C64] {
        &self.dz[j]
    }

    pub fn dzbar_coefficients(&self, j: usize) -> &[C64] {
        &self.dzbar[j]
    }

    /// Lebesgue volume of the fundamental domain.
    pub fn lebesgue_volume(&self) -> f64 {
        self.lebesgue_volume
    }

    /// Density of `dV = Π i dz_j ∧ dz̄_j` against Lebesgue measure.
    pub fn standard_volume_density(&self) -> f64 {
        2f64.powi(self.n as i32)
    }

    /// `det κ`: density of ω₀ⁿ against `dV` (wedge powers taken without the `n!`).
    pub fn kappa_det(&self) -> f64 {
        self.kappa.determinant().re
    }

    /// Smallest eigenvalue of κ.
    pub fn kappa_min(&self) -> f64 {
        min_eig(&self.kappa)
    }

    /// Lebesgue weight of one grid cell.
    pub fn cell_weight(&self) -> f64 {
        self.lebesgue_volume / self.num_points() as f64
    }

    pub fn check_scalar(&self, f: &ScalarField) -> Result<()> {
        if f.len() != self.num_points() {
            return Err(Error::DomainMismatch { expected: self.num_points(), found: f.len() });
        }
        Ok(())
    }

    pub fn check_endo(&self, f: &EndoField) -> Result<()> {
        if f.len() != self.num_points() {
            return Err(Error::DomainMismatch { expected: self.num_points(), found: f.len() });
        }
        if f.twist.axes.len() != self.real_axes() {
            return Err(Error::InvalidDomain("twist rule does not match the real axes".into()));
        }
        Ok(())
    }

    pub fn scalar_from_fn(&self, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> ScalarField {
        ScalarField::from_real((0..self.num_points()).map(|p| f(&self.coords(p))))
    }

    // ---------------------------------------------------------------- scalar

    fn line_bases(&self, axis: usize) -> Vec<usize> {
        let n = self.resolution;
        let s = self.stride(axis);
        let total = self.num_points();
        (0..total / n)
            .map(|l| {
                let inner = l % s;
                let outer = l / s;
                outer * s * n + inner
            })
            .collect()
    }

    /// Applies a per-line transform along one axis.
    fn map_lines(&self, values: &[C64], axis: usize, f: impl Fn(&mut [C64]) + Sync + Send) -> Vec<C64> {
        let n = self.resolution;
        let s = self.stride(axis);
        let bases = self.line_bases(axis);
        let lines: Vec<Vec<C64>> = bases
            .par_iter()
            .map(|&b| {
                let mut line: Vec<C64> = (0..n).map(|i| values[b + i * s]).collect();
                f(&mut line);
                line
            })
            .collect();
        let mut out = vec![c(0.0, 0.0); values.len()];
        for (b, line) in bases.iter().zip(lines) {
            for (i, v) in line.into_iter().enumerate() {
                out[b + i * s] = v;
            }
        }
        out
    }

    fn spectral_line_derivative(&self, line: &mut [C64]) {
        let n = self.resolution;
        self.fft.process(line);
        for (k, v) in line.iter_mut().enumerate() {
            let m = if k < n / 2 {
                k as f64
            } else if k == n / 2 {
                0.0
            } else {
                k as f64 - n as f64
            };
            *v *= c(0.0, 2.0 * PI * m / n as f64);
        }
        self.ifft.process(line);
    }

    /// Derivative along real axis `axis` of a periodic scalar array.
    pub fn real_derivative(&self, values: &[C64], axis: usize, scheme: Scheme) -> Vec<C64> {
        match scheme {
            Scheme::Spectral => self.map_lines(values, axis, |l| self.spectral_line_derivative(l)),
            Scheme::FiniteDifference4 => {
                let n = self.resolution;
                let h = 1.0 / n as f64;
                self.map_lines(values, axis, |l| {
                    let src = l.to_vec();
                    for i in 0..n {
                        let at = |o: isize| src[((i as isize + o).rem_euclid(n as isize)) as usize];
                        l[i] = ((at(1) - at(-1)) * 8.0 - (at(2) - at(-2))) / (12.0 * h);
                    }
                })
            }
        }
    }

    /// Full multi-dimensional DFT (unnormalized forward, normalized inverse).
    pub fn fft_all(&self, values: &[C64], inverse: bool) -> Vec<C64> {
        let mut data = values.to_vec();
        let plan = if inverse { &self.ifft } else { &self.fft };
        for axis in 0..self.real_axes() {
            data = self.map_lines(&data, axis, |l| plan.process(l));
        }
        if inverse {
            let scale = 1.0 / self.num_points() as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
        data
    }

    fn combine(&self, grads: &[Vec<C64>], coeffs: &[C64]) -> Vec<C64> {
        let len = grads[0].len();
        (0..len)
            .into_par_iter()
            .map(|p| grads.iter().zip(coeffs).map(|(g, &w)| g[p] * w).sum())
            .collect()
    }

    /// Complex derivative of a scalar field.
    pub fn partial_scalar(&self, f: &ScalarField, axis: ComplexAxis, scheme: Scheme) -> Result<ScalarField> {
        self.check_scalar(f)?;
        let (j, coeffs) = match axis {
            ComplexAxis::Dz(j) => (j, &self.dz),
            ComplexAxis::Dzbar(j) => (j, &self.dzbar),
        };
        if j >= self.n {
            return Err(Error::AxisOutOfRange { axis: j, n: self.n });
        }
        let grads: Vec<Vec<C64>> = (0..self.real_axes())
            .map(|a| self.real_derivative(&f.values, a, scheme))
            .collect();
        Ok(ScalarField { values: self.combine(&grads, &coeffs[j]) })
    }

    /// `∫ f dLeb` over the fundamental domain (mean times volume).
    pub fn integrate(&self, density: &ScalarField) -> Result<f64> {
        self.check_scalar(density)?;
        let scale = density.max_abs().max(1.0);
        let max_im = density.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if max_im > 1e-9 * scale {
            return Err(Error::NonRealDensity(max_im));
        }
        let sum: f64 = density.values.iter().map(|z| z.re).sum();
        Ok(sum * self.cell_weight())
    }

    /// `∫ f · (2π)^{-n} ω₀ⁿ`; equals `total_degree^n` for `f ≡ 1`.
    pub fn integrate_against_omega(&self, density: &ScalarField) -> Result<f64> {
        let w = (2.0 * PI).powi(-(self.n as i32)) * self.kappa_det() * self.standard_volume_density();
        Ok(w * self.integrate(density)?)
    }

    /// Matrix `H_{jk} = ∂²u/∂z_j∂z̄_k` of `i∂∂̄u = i Σ H_{jk} dz_j ∧ dz̄_k` per point.
    pub fn i_del_delbar(&self, u: &ScalarField) -> Result<Vec<CMat>> {
        self.check_scalar(u)?;
        let first: Vec<ScalarField> = (0..self.n)
            .map(|j| self.partial_scalar(u, ComplexAxis::Dz(j), Scheme::Spectral))
            .collect::<Result<_>>()?;
        let mut second = vec![vec![ScalarField::zeros(0); self.n]; self.n];
        for j in 0..self.n {
            for k in 0..self.n {
                second[j][k] = self.partial_scalar(&first[j], ComplexAxis::Dzbar(k), Scheme::Spectral)?;
            }
        }
        Ok((0..self.num_points())
            .map(|p| CMat::from_fn(self.n, self.n, |j, k| second[j][k].values[p]))
            .collect())
    }

    // ----------------------------------------------------------- matrix data

    fn fd4_endo(&self, f: &EndoField, axis: usize) -> EndoField {
        let n = self.resolution;
        let h = 1.0 / n as f64;
        let s = self.stride(axis);
        let twist = f.twist.axes[axis].clone();
        let inv = twist.as_ref().map(|t| TwistPair {
            left: inverse(&t.left).expect("twist invertible"),
            right: inverse(&t.right).expect("twist invertible"),
        });
        let values = (0..f.len())
            .into_par_iter()
            .map(|p| {
                let i = (p / s) % n;
                let base = p - i * s;
                let at = |o: isize| -> CMat {
                    let k = i as isize + o;
                    let wrapped = k.rem_euclid(n as isize) as usize;
                    let v = &f.values[base + wrapped * s];
                    match (&twist, &inv) {
                        (Some(t), _) if k >= n as isize => &t.left * v * &t.right,
                        (_, Some(ti)) if k < 0 => &ti.left * v * &ti.right,
                        _ => v.clone(),
                    }
                };
                ((at(1) - at(-1)) * c(8.0, 0.0) - (at(2) - at(-2))) * c(1.0 / (12.0 * h), 0.0)
            })
            .collect();
        EndoField::new(f.rank, values, f.twist.clone())
    }

    fn spectral_endo(&self, f: &EndoField, axis: usize) -> EndoField {
        let r = f.rank;
        let comps: Vec<Vec<C64>> = (0..r * r)
            .into_par_iter()
            .map(|k| self.real_derivative(&f.component(k / r, k % r), axis, Scheme::Spectral))
            .collect();
        let values = (0..f.len())
            .map(|p| CMat::from_fn(r, r, |i, j| comps[i * r + j][p]))
            .collect();
        EndoField::new(r, values, f.twist.clone())
    }

    /// Real-axis derivative of a matrix field: spectral when untwisted, otherwise
    /// fourth-order differences with the twist applied across the wrap-around.
    /// Spectral when the twist is trivial or unipotent and commuting, fourth-order differences otherwise.
    pub fn real_derivative_endo(&self, f: &EndoField, axis: usize) -> EndoField {
        self.real_derivative_endo_with(f, axis, Scheme::Spectral)
    }

    pub fn real_derivative_endo_with(&self, f: &EndoField, axis: usize, scheme: Scheme) -> EndoField {
        match scheme {
            Scheme::Spectral if f.twist.is_trivial() => self.spectral_endo(f, axis),
            Scheme::Spectral => self.gauged_spectral_endo(f, axis).unwrap_or_else(|| self.fd4_endo(f, axis)),
            _ => self.fd4_endo(f, axis),
        }
    }

    /// Writes `f = e^{⟨x,p⟩} g e^{⟨x,q⟩}` with `e^{p_a}, e^{q_a}` the twist pair of axis `a`,
    /// so that `g` is periodic, and differentiates `g` spectrally.
    fn gauged_spectral_endo(&self, f: &EndoField, axis: usize) -> Option<EndoField> {
        let r = f.rank;
        let zero = CMat::zeros(r, r);
        let mut ps = Vec::with_capacity(self.real_axes());
        let mut qs = Vec::with_capacity(self.real_axes());
        for pair in &f.twist.axes {
            match pair {
                Some(t) => {
                    ps.push(log_unipotent(&t.left)?);
                    qs.push(log_unipotent(&t.right)?);
                }
                None => {
                    ps.push(zero.clone());
                    qs.push(zero.clone());
                }
            }
        }
        let commute = |ms: &[CMat]| {
            ms.iter().all(|a| ms.iter().all(|b| max_abs(&(a * b - b * a)) <= 1e-12 * (1.0 + max_abs(a) * max_abs(b))))
        };
        if !commute(&ps) || !commute(&qs) {
            return None;
        }
        let gauge = |p: usize, sign: f64| -> (CMat, CMat) {
            let x = self.coords(p);
            let mut lp = zero.clone();
            let mut lq = zero.clone();
            for a in 0..self.real_axes() {
                lp += &ps[a] * c(sign * x[a], 0.0);
                lq += &qs[a] * c(sign * x[a], 0.0);
            }
            (exp_nilpotent(&lp), exp_nilpotent(&lq))
        };
        let g_values = (0..f.len())
            .into_par_iter()
            .map(|p| {
                let (el, er) = gauge(p, -1.0);
                el * &f.values[p] * er
            })
            .collect();
        let dg = self.spectral_endo(&EndoField::new(r, g_values, crate::field::Twist::none(self.real_axes())), axis);
        let values = (0..f.len())
            .into_par_iter()
            .map(|p| {
                let (el, er) = gauge(p, 1.0);
                &ps[axis] * &f.values[p] + &f.values[p] * &qs[axis] + el * &dg.values[p] * er
            })
            .collect();
        Some(EndoField::new(r, values, f.twist.clone()))
    }

    fn combine_endo(&self, grads: &[EndoField], coeffs: &[C64]) -> EndoField {
        let first = &grads[0];
        let values = (0..first.len())
            .into_par_iter()
            .map(|p| {
                let mut acc = CMat::zeros(first.rank, first.rank);
                for (g, &w) in grads.iter().zip(coeffs) {
                    acc += &g.values[p] * w;
                }
                acc
            })
            .collect();
        EndoField::new(first.rank, values, first.twist.clone())
    }

    /// All `∂/∂z_j` and `∂/∂z̄_j` of a matrix field from one set of real derivatives.
    pub fn complex_gradients(&self, f: &EndoField) -> (Vec<EndoField>, Vec<EndoField>) {
        let grads: Vec<EndoField> = (0..self.real_axes()).map(|a| self.real_derivative_endo(f, a)).collect();
        let d = (0..self.n).map(|j| self.combine_endo(&grads, &self.dz[j])).collect();
        let db = (0..self.n).map(|j| self.combine_endo(&grads, &self.dzbar[j])).collect();
        (d, db)
    }

    /// Only the `∂/∂z̄_k` derivatives.
    pub fn dbar_all(&self, f: &EndoField) -> Vec<EndoField> {
        let grads: Vec<EndoField> = (0..self.real_axes()).map(|a| self.real_derivative_endo(f, a)).collect();
        (0..self.n).map(|j| self.combine_endo(&grads, &self.dzbar[j])).collect()
    }

    /// Only the `∂/∂z_j` derivatives.
    pub fn d_all(&self, f: &EndoField) -> Vec<EndoField> {
        let grads: Vec<EndoField> = (0..self.real_axes()).map(|a| self.real_derivative_endo(f, a)).collect();
        (0..self.n).map(|j| self.combine_endo(&grads, &self.dz[j])).collect()
    }

    pub fn dbar_all_with(&self, f: &EndoField, scheme: Scheme) -> Vec<EndoField> {
        let grads: Vec<EndoField> =
            (0..self.real_axes()).map(|a| self.real_derivative_endo_with(f, a, scheme)).collect();
        (0..self.n).map(|j| self.combine_endo(&grads, &self.dzbar[j])).collect()
    }

    pub fn d_all_with(&self, f: &EndoField, scheme: Scheme) -> Vec<EndoField> {
        let grads: Vec<EndoField> =
            (0..self.real_axes()).map(|a| self.real_derivative_endo_with(f, a, scheme)).collect();
        (0..self.n).map(|j| self.combine_endo(&grads, &self.dz[j])).collect()
    }

    /// Complex derivative of a matrix field respecting its twist.
    pub fn partial_endo(&self, f: &EndoField, axis: ComplexAxis) -> Result<EndoField> {
        self.check_endo(f)?;
        let (j, coeffs) = match axis {
            ComplexAxis::Dz(j) => (j, &self.dz),
            ComplexAxis::Dzbar(j) => (j, &self.dzbar),
        };
        if j >= self.n {
            return Err(Error::AxisOutOfRange { axis: j, n: self.n });
        }
        let grads: Vec<EndoField> = (0..self.real_axes()).map(|a| self.real_derivative_endo(f, a)).collect();
        Ok(self.combine_endo(&grads, &coeffs[j]))
    }
}
