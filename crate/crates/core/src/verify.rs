//! Invariant suite behind `hymlab verify`: each check reports its value, the
//! tolerance it was held to and a pass flag.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{metric_from_log, BundleSpec, MetricField};
use crate::curvature::{big_theta, block_transpose, chern_curvature_with, det_root_form, positivity_probe, raw_curvature_blocks, PositivityKind};
use crate::error::{Error, Result};
use crate::grid::Scheme;
use crate::hym_system::{a0_init, mode_covector, perturbation_tolerance, plane_wave_error, Equation, PrincipalSymbol, SystemConfig, SystemState};
use crate::linalg::{self, c, CMat};
use crate::mavol::{eigenvalue_identity_defect, mavol_value};
use crate::samples::{smooth_hermitian, smooth_scalar};

/// Deliberate corruption of one check, used to confirm the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fault {
    /// Compare the dual curvature against `+ᵀΘ` instead of `−ᵀΘ`.
    DualitySignFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub resolution: usize,
    /// Resolution of the coarse run in the convergence comparison.
    pub coarse_resolution: usize,
    pub samples: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { resolution: 32, coarse_resolution: 16, samples: 3, seed: 0, fault: None }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_resolution >= self.resolution {
            return Err(Error::Config("verify.coarse_resolution must be below verify.resolution".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("verify.samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl InvariantResult {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub name: String,
    pub coarse_resolution: usize,
    pub fine_resolution: usize,
    pub coarse: f64,
    pub fine: f64,
    /// `fine / coarse`.
    pub ratio: f64,
    /// Largest admissible ratio.
    pub declared_ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub resolution: usize,
    pub seed: u64,
    pub invariants: Vec<InvariantResult>,
    pub convergence: Vec<ConvergenceResult>,
    /// Tolerance for symbol perturbations, reported with the `σ_G = 0` of this discretization.
    pub symbol_tolerance: f64,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&str> {
        let a = self.invariants.iter().filter(|x| !x.passed).map(|x| x.name.as_str());
        a.chain(self.convergence.iter().filter(|x| !x.passed).map(|x| x.name.as_str())).collect()
    }
}

fn random_metric(spec: &Arc<BundleSpec>, seed: u64, amp: f64) -> Result<MetricField> {
    metric_from_log(spec, &smooth_hermitian(&spec.domain, spec.rank, seed, amp, 3, 1))
}

fn duality(h: &MetricField, fault: Option<Fault>) -> Result<f64> {
    let (n, r) = (h.domain().n, h.rank());
    let sign = if fault == Some(Fault::DualitySignFlip) { 1.0 } else { -1.0 };
    let direct = raw_curvature_blocks(h, Scheme::Spectral)?;
    let dual = raw_curvature_blocks(&h.dual(), Scheme::Spectral)?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (a, b) in direct.iter().zip(&dual) {
        scale = scale.max(linalg::max_abs(a));
        worst = worst.max(linalg::max_abs(&(b - block_transpose(a, n, r) * c(sign, 0.0))));
    }
    Ok(worst / scale)
}

fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize, shift: f64) -> CMat {
    let a = CMat::from_fn(dim, dim, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    linalg::hermitian_part(&a) + CMat::identity(dim, dim) * c(shift, 0.0)
}

/// `exp(iA)` for a random Hermitian `A`.
fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
    let (vals, vecs) = linalg::herm_eig(&random_hermitian(rng, dim, 0.0));
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(dim, vals.iter().map(|&v| c(0.0, v).exp())));
    &vecs * d * vecs.adjoint()
}

/// Largest `max(Nakano, dual Nakano) − Griffiths` over random matrices with `n = 2`, and the
/// spread of the three margins for `n = 1`.
fn hierarchy(rng: &mut ChaCha8Rng, samples: usize) -> (f64, f64) {
    let mut violation = f64::NEG_INFINITY;
    let mut spread: f64 = 0.0;
    for (n, r) in [(2usize, 2usize), (1, 2), (1, 3)] {
        let kappa = {
            let a = random_hermitian(rng, n, 0.0);
            &a * a.adjoint() + CMat::identity(n, n) * c(0.5, 0.0)
        };
        for _ in 0..samples * 3 {
            let m = random_hermitian(rng, n * r, 0.5);
            let probe = |kind| positivity_probe(std::slice::from_ref(&m), n, r, &kappa, kind).margin;
            let (g, na, dn) = (probe(PositivityKind::Griffiths), probe(PositivityKind::Nakano), probe(PositivityKind::DualNakano));
            if n == 1 {
                spread = spread.max((g - na).abs()).max((g - dn).abs());
            } else {
                violation = violation.max(na.max(dn) - g);
            }
        }
    }
    (violation, spread)
}

fn frame_invariance(h: &MetricField, rng: &mut ChaCha8Rng) -> Result<f64> {
    let theta = big_theta(h, 0.5, 1.0)?;
    let base = det_root_form(&theta, false)?;
    let (n, r) = (theta.n, theta.rank);
    let mut rotated = theta.clone();
    for m in rotated.values.iter_mut() {
        let u = random_unitary(rng, r);
        let mut big = CMat::zeros(n * r, n * r);
        for j in 0..n {
            big.view_mut((j * r, j * r), (r, r)).copy_from(&u);
        }
        *m = big.adjoint() * &*m * &big;
    }
    let moved = det_root_form(&rotated, false)?;
    let scale = base.values.iter().fold(1e-300_f64, |a, v| a.max(v.norm()));
    Ok(base.values.iter().zip(&moved.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale)
}

fn system_state(spec: &Arc<BundleSpec>, seed: u64) -> Result<(SystemState, SystemConfig)> {
    let d = &spec.domain;
    let h = random_metric(spec, seed, 0.3)?;
    let cfg = SystemConfig { alpha: 2.0, epsilon: 0.7, lambda: 1.3, mu: 0.5, ..Default::default() };
    let a0 = smooth_scalar(d, seed + 1, 0.2, 3, 1).map(|z| c(z.re.exp(), 0.0));
    let state = SystemState::new(&h, &Equation::Full { t: 0.4, a0 }, &cfg)?;
    Ok((state, cfg))
}

/// Relative sup deviation of the packed Jacobian from central differences.
fn linearization(state: &SystemState, cfg: &SystemConfig, seed: u64, s: f64) -> Result<f64> {
    let d = state.domain();
    let r = state.rank();
    let u = smooth_hermitian(d, r, seed, 1.0, 3, 2);
    let mut x = vec![0.0; d.num_points() * r * r];
    for (p, m) in u.values.iter().enumerate() {
        linalg::pack_herm(m, &mut x[p * r * r..(p + 1) * r * r]);
    }
    let jx = state.apply_packed(&x);
    let eval = |step: f64| -> Result<Vec<f64>> {
        Ok(SystemState::new(&state.updated_metric(&x, step)?, &state.equation, cfg)?.packed_residual())
    };
    let (rp, rm) = (eval(s)?, eval(-s)?);
    let scale = jx.iter().fold(1e-300_f64, |a, b| a.max(b.abs()));
    let err = jx.iter().zip(rp.iter().zip(&rm)).map(|(j, (a, b))| (j - (a - b) / (2.0 * s)).abs()).fold(0.0, f64::max);
    Ok(err / scale)
}

fn symbol_defect(state: &SystemState, rng: &mut ChaCha8Rng, samples: usize) -> Result<f64> {
    let d = state.domain();
    let mut worst: f64 = 0.0;
    for _ in 0..samples * 4 {
        let p = rng.gen_range(0..d.num_points());
        let half = (d.resolution / 2) as i64;
        let mode: Vec<i64> = (0..d.real_axes()).map(|_| rng.gen_range(-half + 1..half)).collect();
        if mode.iter().all(|&m| m == 0) {
            continue;
        }
        let sym = PrincipalSymbol::at_point(state, p, &mode_covector(state, &mode))?;
        worst = worst.max(sym.composition_defect());
    }
    Ok(worst)
}

fn plane_wave(resolution: usize, seed: u64) -> Result<f64> {
    let spec = Arc::new(BundleSpec::split_square(1, resolution, 2, 1)?);
    let h = random_metric(&spec, seed, 0.2)?;
    let cfg = SystemConfig { alpha: 1.5, lambda: 0.8, mu: 0.4, ..Default::default() };
    let a0 = a0_init(&h, &cfg)?;
    let state = SystemState::new(&h, &Equation::Full { t: 0.3, a0 }, &cfg)?;
    let mode = [(resolution / 4) as i64, 0];
    let uhat = linalg::hermitian_part(&CMat::from_fn(2, 2, |i, j| c((i + 2 * j) as f64 * 0.3 + 0.5, 0.2)));
    plane_wave_error(&state, &mode, &uhat, 0)
}

/// Sup distance between fourth-order difference and spectral curvature.
fn fd4_curvature(resolution: usize, seed: u64) -> Result<f64> {
    let spec = Arc::new(BundleSpec::split_square(1, resolution, 2, 1)?);
    let h = random_metric(&spec, seed, 0.15)?;
    let fd = chern_curvature_with(&h, Scheme::FiniteDifference4, f64::INFINITY)?;
    let sp = chern_curvature_with(&h, Scheme::Spectral, f64::INFINITY)?;
    Ok((0..fd.len()).map(|p| linalg::max_abs(&(fd.block(p, 0, 0) - sp.block(p, 0, 0)))).fold(0.0, f64::max))
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nn = cfg.resolution;
    let split = Arc::new(BundleSpec::split_square(1, nn, 2, 1)?);
    let ext = Arc::new(BundleSpec::extension_square(1, nn, 1)?);
    let seeds: Vec<u64> = (0..cfg.samples).map(|_| rng.gen_range(0..1u64 << 32)).collect();
    let mut inv = Vec::new();

    let mut dual_split: f64 = 0.0;
    let mut dual_ext: f64 = 0.0;
    let mut frame: f64 = 0.0;
    let mut eig: f64 = 0.0;
    let mut bound_excess = f64::NEG_INFINITY;
    for &s in &seeds {
        let hs = random_metric(&split, s, 0.15)?;
        let he = random_metric(&ext, s, 0.15)?;
        dual_split = dual_split.max(duality(&hs, cfg.fault)?);
        dual_ext = dual_ext.max(duality(&he, cfg.fault)?);
        frame = frame.max(frame_invariance(&hs, &mut rng)?).max(frame_invariance(&he, &mut rng)?);
        for h in [&hs, &he] {
            eig = eig.max(eigenvalue_identity_defect(h)?);
            let rep = mavol_value(h)?;
            bound_excess = bound_excess.max(rep.value - rep.upper_bound);
        }
    }
    inv.push(InvariantResult::at_most("duality_split", dual_split, 1e-9));
    inv.push(InvariantResult::at_most("duality_extension", dual_ext, 1e-9));
    let (violation, spread) = hierarchy(&mut rng, cfg.samples);
    inv.push(InvariantResult::at_most("hierarchy_griffiths_dominates", violation, 1e-9));
    inv.push(InvariantResult::at_most("hierarchy_curve_margins_coincide", spread, 1e-8));
    inv.push(InvariantResult::at_most("frame_invariance", frame, 1e-10));

    let mut lin: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for spec in [&split, &ext] {
        let (state, scfg) = system_state(spec, seeds[0])?;
        lin = lin.max(linearization(&state, &scfg, seeds[0] + 7, 1e-4)?);
        sym = sym.max(symbol_defect(&state, &mut rng, cfg.samples)?);
    }
    inv.push(InvariantResult::at_most("linearization_fd", lin, 1e-6));
    inv.push(InvariantResult::at_most("symbol_inverse_composition", sym, 1e-10));
    inv.push(InvariantResult::at_most("eigenvalue_identity", eig, 1e-8));
    inv.push(InvariantResult::at_most("mavol_upper_bound", bound_excess, 1e-9));

    let coarse = cfg.coarse_resolution;
    let mut conv = Vec::new();
    let mut push = |name: &str, a: f64, b: f64, declared: f64| {
        let ratio = b / a;
        conv.push(ConvergenceResult {
            name: name.into(),
            coarse_resolution: coarse,
            fine_resolution: nn,
            coarse: a,
            fine: b,
            ratio,
            declared_ratio: declared,
            passed: ratio <= declared,
        });
    };
    push("plane_wave_symbol", plane_wave(coarse, seeds[0])?, plane_wave(nn, seeds[0])?, 0.3);
    push("fd4_curvature", fd4_curvature(coarse, seeds[0])?, fd4_curvature(nn, seeds[0])?, 0.125);
    let passed = inv.iter().all(|x| x.passed) && conv.iter().all(|x| x.passed);
    Ok(VerifyReport {
        resolution: nn,
        seed: cfg.seed,
        invariants: inv,
        convergence: conv,
        symbol_tolerance: perturbation_tolerance(1, 2),
        passed,
    })
}
