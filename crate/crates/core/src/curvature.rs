//! Chern curvature of stored metrics, the matrix `θ(t, h)`, positivity probes
//! and the determinant root form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::MetricField;
use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField};
use crate::grid::Scheme;
use crate::linalg::{self, c, cholesky, identity, inverse, kron_identity, lower_inverse, CMat, C64};

/// Relative Hermitian-symmetrization defect above which the grid is deemed too coarse.
pub const DEFAULT_DEFECT_LIMIT: f64 = 1e-3;

const GRIFFITHS_RANDOM_STARTS: usize = 8;
const GRIFFITHS_TOL: f64 = 1e-12;
const GRIFFITHS_MAX_ITER: usize = 200;

/// Curvature components per grid point.
///
/// `frame[p]` is `nr x nr` with block `(j, k)` the endomorphism `Θ_{jk}` in an
/// `h`-orthonormal frame, so `c_{jkλμ} = block(j,k)[μ, λ]`. `raw[p]` holds the
/// same blocks in the trivializing frame.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub n: usize,
    pub rank: usize,
    pub frame: Vec<CMat>,
    pub raw: Vec<CMat>,
    pub kappa: CMat,
    /// Largest anti-Hermitian part removed, relative to the curvature scale.
    pub symmetrization_defect: f64,
}

impl CurvatureField {
    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    pub fn component(&self, p: usize, j: usize, k: usize, lambda: usize, mu: usize) -> C64 {
        self.frame[p][(j * self.rank + mu, k * self.rank + lambda)]
    }

    pub fn block(&self, p: usize, j: usize, k: usize) -> CMat {
        linalg::block(&self.frame[p], self.rank, j, k)
    }

    /// `n x n` matrix of `tr Θ_{jk}`, the coefficients of `Θ_{det E}`.
    pub fn trace_form(&self, p: usize) -> CMat {
        CMat::from_fn(self.n, self.n, |j, k| self.block(p, j, k).trace())
    }

    pub fn probe(&self, kind: PositivityKind) -> PositivityReport {
        positivity_probe(&self.frame, self.n, self.rank, &self.kappa, kind)
    }
}

/// `θ(t, h)` per grid point, indexed by `(j, λ), (k, μ)`.
#[derive(Clone, Debug)]
pub struct BigHermitianField {
    pub n: usize,
    pub rank: usize,
    pub t: f64,
    pub alpha: f64,
    pub kappa: CMat,
    pub values: Vec<CMat>,
}

impl BigHermitianField {
    pub fn from_curvature(curv: &CurvatureField, t: f64, alpha: f64) -> Self {
        let offset = kron_identity(&curv.kappa, curv.rank) * c((1.0 - t) * alpha, 0.0);
        Self {
            n: curv.n,
            rank: curv.rank,
            t,
            alpha,
            kappa: curv.kappa.clone(),
            values: curv.frame.par_iter().map(|m| m + &offset).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.values.iter().map(linalg::antihermitian_defect).fold(0.0, f64::max)
    }

    pub fn probe(&self, kind: PositivityKind) -> PositivityReport {
        positivity_probe(&self.values, self.n, self.rank, &self.kappa, kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityKind {
    Griffiths,
    Nakano,
    DualNakano,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub kind: PositivityKind,
    /// Minimum of the quadratic form on unit tensors for `ω₀ ⊗ h`.
    pub margin: f64,
    pub point: usize,
    /// Probe tensor `τ_{jλ}` (row-major `j`, then `λ`) as `[re, im]`.
    pub tensor: Vec<[f64; 2]>,
    /// Decomposable factors `ξ` and `v` for Griffiths probes.
    pub xi: Option<Vec<[f64; 2]>>,
    pub v: Option<Vec<[f64; 2]>>,
    pub converged: bool,
    pub normalization: String,
}

/// Connection matrices `h^{-1} ∂_j h` of the stored metric.
pub fn connection_forms(h: &MetricField, scheme: Scheme) -> Result<Vec<EndoField>> {
    let d = h.domain();
    let ginv = invert_field(&h.endo)?;
    Ok(d.d_all_with(&h.endo, scheme).iter().map(|dg| ginv.mul(dg)).collect())
}

pub(crate) fn invert_field(g: &EndoField) -> Result<EndoField> {
    let values = g.values.par_iter().map(inverse).collect::<Result<Vec<_>>>()?;
    Ok(EndoField::new(g.rank, values, g.twist.inverse()))
}

/// Raw-frame curvature blocks `Θ_{jk} = (κ_{jk}/r) Id − ∂̄_k(h^{-1} ∂_j h)`.
pub fn raw_curvature_blocks(h: &MetricField, scheme: Scheme) -> Result<Vec<CMat>> {
    let a = connection_forms(h, scheme)?;
    Ok(raw_blocks_from_connection(h, &a, scheme))
}

pub(crate) fn raw_blocks_from_connection(h: &MetricField, a: &[EndoField], scheme: Scheme) -> Vec<CMat> {
    let d = h.domain();
    let n = d.n;
    let r = h.rank();
    let da: Vec<Vec<EndoField>> = a.iter().map(|aj| d.dbar_all_with(aj, scheme)).collect();
    let w = h.weight_curvature();
    (0..h.len())
        .into_par_iter()
        .map(|p| {
            let mut m = CMat::zeros(n * r, n * r);
            for j in 0..n {
                for k in 0..n {
                    let b = identity(r) * w[(j, k)] - &da[j][k].values[p];
                    linalg::set_block(&mut m, r, j, k, &b);
                }
            }
            m
        })
        .collect()
}

/// Conjugation `L^* Θ L^{-*}` of every block, `G = L L^*`.
fn to_frame(raw: &CMat, g: &CMat, n: usize) -> Result<CMat> {
    let l = cholesky(g)?;
    let li = lower_inverse(&l);
    let left = identity(n).kronecker(&l.adjoint());
    let right = identity(n).kronecker(&li.adjoint());
    Ok(left * raw * right)
}

fn from_frame(frame: &CMat, g: &CMat, n: usize) -> Result<CMat> {
    let l = cholesky(g)?;
    let li = lower_inverse(&l);
    let left = identity(n).kronecker(&li.adjoint());
    let right = identity(n).kronecker(&l.adjoint());
    Ok(left * frame * right)
}

pub fn chern_curvature(h: &MetricField) -> Result<CurvatureField> {
    chern_curvature_with(h, Scheme::Spectral, DEFAULT_DEFECT_LIMIT)
}

/// Chern curvature with an explicit derivative scheme and a limit on the relative
/// symmetrization defect. Twisted metrics always use finite differences.
pub fn chern_curvature_with(h: &MetricField, scheme: Scheme, defect_limit: f64) -> Result<CurvatureField> {
    h.check_positive()?;
    let d = h.domain();
    let (n, r) = (d.n, h.rank());
    let raw = raw_curvature_blocks(h, scheme)?;
    let pairs = raw
        .par_iter()
        .zip(h.endo.values.par_iter())
        .map(|(raw, g)| {
            let m = to_frame(raw, g, n)?;
            let defect = linalg::antihermitian_defect(&m);
            let scale = linalg::max_abs(&m);
            let sym = linalg::hermitian_part(&m);
            let raw_sym = from_frame(&sym, g, n)?;
            Ok((sym, raw_sym, defect, scale))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = pairs.iter().map(|x| x.3).fold(1.0, f64::max);
    let defect = pairs.iter().map(|x| x.2).fold(0.0, f64::max) / scale;
    if !defect.is_finite() {
        return Err(Error::NonFinite("curvature"));
    }
    if defect > defect_limit {
        return Err(Error::Underresolved { defect, limit: defect_limit });
    }
    let (frame, raw): (Vec<CMat>, Vec<CMat>) = pairs.into_iter().map(|(a, b, _, _)| (a, b)).unzip();
    Ok(CurvatureField { n, rank: r, frame, raw, kappa: d.kappa.clone(), symmetrization_defect: defect })
}

/// `Θ° = Θ − (1/r) tr Θ ⊗ Id`.
pub fn trace_free_curvature(h: &MetricField) -> Result<CurvatureField> {
    let curv = chern_curvature(h)?;
    Ok(trace_free_part(&curv))
}

pub fn trace_free_part(curv: &CurvatureField) -> CurvatureField {
    let (n, r) = (curv.n, curv.rank);
    let strip = |m: &CMat| {
        let mut out = m.clone();
        for j in 0..n {
            for k in 0..n {
                linalg::set_block(&mut out, r, j, k, &linalg::trace_free(&linalg::block(m, r, j, k)));
            }
        }
        out
    };
    CurvatureField {
        n,
        rank: r,
        frame: curv.frame.par_iter().map(strip).collect(),
        raw: curv.raw.par_iter().map(strip).collect(),
        kappa: curv.kappa.clone(),
        symmetrization_defect: curv.symmetrization_defect,
    }
}

pub fn big_theta(h: &MetricField, t: f64, alpha: f64) -> Result<BigHermitianField> {
    if !(0.0..=1.0).contains(&t) || alpha < 0.0 {
        return Err(Error::Config(format!("big_theta needs t in [0,1] and alpha >= 0, got t={t}, alpha={alpha}")));
    }
    Ok(BigHermitianField::from_curvature(&chern_curvature(h)?, t, alpha))
}

/// `det(θ)^{1/r}` against `Π i dz_j ∧ dz̄_j`; negative determinants give a signed root
/// unless `demand_positive` is set.
pub fn det_root_form(theta: &BigHermitianField, demand_positive: bool) -> Result<ScalarField> {
    let r = theta.rank as f64;
    let values = theta
        .values
        .par_iter()
        .enumerate()
        .map(|(p, m)| {
            let d = linalg::det(m).re;
            if demand_positive && !(d > 0.0) {
                return Err(Error::NonPositiveDeterminant { point: p, det: d });
            }
            Ok(c(d.signum() * d.abs().powf(1.0 / r), 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarField { values })
}

/// Blockwise transpose: turns the dual-Nakano arrangement into the Nakano one.
pub fn block_transpose(m: &CMat, n: usize, r: usize) -> CMat {
    let mut out = m.clone();
    for j in 0..n {
        for k in 0..n {
            linalg::set_block(&mut out, r, j, k, &linalg::block(m, r, j, k).transpose());
        }
    }
    out
}

fn to_pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|p| c(p[0], p[1])).collect()
}

/// `S = P^{-1} ⊗ Id_r` with `κ = P P^*`; `S θ S^*` has unit `ω₀ ⊗ h` normalization.
fn normalizer(kappa: &CMat, r: usize) -> (CMat, CMat) {
    let p = cholesky(kappa).expect("kappa positive");
    let pi = lower_inverse(&p);
    (pi.kronecker(&identity(r)), pi)
}

fn min_eigpair(m: &CMat) -> (f64, Vec<C64>) {
    let (vals, vecs) = linalg::herm_eig(m);
    (vals[0], vecs.column(0).iter().copied().collect())
}

struct PointResult {
    margin: f64,
    tensor: Vec<C64>,
    xi: Option<Vec<C64>>,
    v: Option<Vec<C64>>,
    converged: bool,
}

fn griffiths_point(m: &CMat, n: usize, r: usize, seed: u64) -> (f64, Vec<C64>, Vec<C64>, bool) {
    let contract_v = |v: &[C64]| {
        CMat::from_fn(n, n, |j, k| {
            let b = linalg::block(m, r, j, k);
            let mut acc = c(0.0, 0.0);
            for a in 0..r {
                for bb in 0..r {
                    acc += v[a].conj() * b[(a, bb)] * v[bb];
                }
            }
            acc
        })
    };
    let contract_eta = |eta: &[C64]| {
        let mut acc = CMat::zeros(r, r);
        for j in 0..n {
            for k in 0..n {
                acc += linalg::block(m, r, j, k) * (eta[j].conj() * eta[k]);
            }
        }
        linalg::hermitian_part(&acc)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<C64>> = (0..r)
        .map(|a| (0..r).map(|b| c(if a == b { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    for _ in 0..GRIFFITHS_RANDOM_STARTS {
        let v: Vec<C64> = (0..r).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        starts.push(v.into_iter().map(|z| z / norm).collect());
    }
    let mut best = (f64::INFINITY, Vec::new(), Vec::new(), true);
    for start in starts {
        let mut v = start;
        let mut prev = f64::INFINITY;
        let mut eta = vec![c(0.0, 0.0); n];
        let mut value = f64::INFINITY;
        let mut converged = false;
        for _ in 0..GRIFFITHS_MAX_ITER {
            let (_, e) = min_eigpair(&linalg::hermitian_part(&contract_v(&v)));
            eta = e;
            let (val, w) = min_eigpair(&contract_eta(&eta));
            v = w;
            value = val;
            if (prev - value).abs() <= GRIFFITHS_TOL {
                converged = true;
                break;
            }
            prev = value;
        }
        if value < best.0 {
            best = (value, eta, v, converged);
        }
    }
    best
}

fn probe_point(m: &CMat, n: usize, r: usize, s: &CMat, p_inv: &CMat, kind: PositivityKind, seed: u64) -> PointResult {
    let normalized = linalg::hermitian_part(&(s * m * s.adjoint()));
    match kind {
        PositivityKind::DualNakano | PositivityKind::Nakano => {
            let target = if kind == PositivityKind::Nakano { block_transpose(&normalized, n, r) } else { normalized };
            let (margin, zeta) = min_eigpair(&target);
            let eta = s.adjoint() * nalgebra::DVector::from_vec(zeta);
            PointResult { margin, tensor: eta.iter().map(|z| z.conj()).collect(), xi: None, v: None, converged: true }
        }
        PositivityKind::Griffiths => {
            let (margin, zeta, v, converged) = griffiths_point(&normalized, n, r, seed);
            let eta = p_inv.adjoint() * nalgebra::DVector::from_vec(zeta);
            let xi: Vec<C64> = eta.iter().map(|z| z.conj()).collect();
            let tensor = xi.iter().flat_map(|x| v.iter().map(move |w| x * w)).collect();
            PointResult { margin, tensor, xi: Some(xi), v: Some(v), converged }
        }
    }
}

/// Minimum of the chosen positivity form over all grid points.
pub fn positivity_probe(mats: &[CMat], n: usize, r: usize, kappa: &CMat, kind: PositivityKind) -> PositivityReport {
    let (s, p_inv) = normalizer(kappa, r);
    let results: Vec<PointResult> = mats
        .par_iter()
        .enumerate()
        .map(|(p, m)| probe_point(m, n, r, &s, &p_inv, kind, p as u64))
        .collect();
    let converged = results.iter().all(|x| x.converged);
    let (point, best) = results
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.margin.total_cmp(&b.1.margin))
        .expect("non-empty field");
    PositivityReport {
        kind,
        margin: best.margin,
        point,
        tensor: to_pairs(&best.tensor),
        xi: best.xi.as_deref().map(to_pairs),
        v: best.v.as_deref().map(to_pairs),
        converged,
        normalization: "omega0 x h".into(),
    }
}

/// Re-evaluates the normalized form of `kind` at a tensor `τ_{jλ}`.
pub fn evaluate_form(m: &CMat, n: usize, r: usize, kappa: &CMat, kind: PositivityKind, tensor: &[[f64; 2]]) -> f64 {
    let tau = from_pairs(tensor);
    let mut value = c(0.0, 0.0);
    let mut norm = c(0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            let b = linalg::block(m, r, j, k);
            for lam in 0..r {
                norm += kappa[(j, k)] * tau[j * r + lam] * tau[k * r + lam].conj();
                for mu in 0..r {
                    // c_{jkλμ} = b[μ, λ]
                    let coef = match kind {
                        PositivityKind::DualNakano => b[(lam, mu)],
                        _ => b[(mu, lam)],
                    };
                    value += coef * tau[j * r + lam] * tau[k * r + mu].conj();
                }
            }
        }
    }
    value.re / norm.re
}

/// Raw curvature of the dual metric compared with `−ᵀΘ`, relative to the curvature scale.
pub fn duality_defect(h: &MetricField) -> Result<f64> {
    let d = h.domain();
    let (n, r) = (d.n, h.rank());
    let direct = raw_curvature_blocks(h, Scheme::Spectral)?;
    let dual = raw_curvature_blocks(&h.dual(), Scheme::Spectral)?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (a, b) in direct.iter().zip(&dual) {
        scale = scale.max(linalg::max_abs(a));
        let expected = -block_transpose(a, n, r);
        worst = worst.max(linalg::max_abs(&(b - expected)));
    }
    Ok(worst / scale)
}

/// Largest deviation of `tr Θ` from `ω₀`; zero for metrics with `det h = det H₀`.
pub fn determinant_curvature_defect(curv: &CurvatureField) -> f64 {
    (0..curv.len())
        .map(|p| linalg::max_abs(&(curv.trace_form(p) - &curv.kappa)))
        .fold(0.0, f64::max)
}
