//! Direct solution of the split equation on a curve: one linear potential
//! equation per line factor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::{BundleModel, BundleSpec, MetricField};
use crate::curvature::{big_theta, det_root_form};
use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField};
use crate::linalg::{c, CMat};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitChecks {
    /// `∫ f_j (2π)^{-1}ω₀ − c₁(E_j)` per factor.
    pub normalization_errors: Vec<f64>,
    /// `∫ (Π f_j)^{1/r} (2π)^{-1}ω₀`.
    pub integral_f: f64,
    /// `(Π c₁(E_j))^{1/r}`.
    pub holder_bound: f64,
    /// Sup over the grid of `|ω₀^{-1} det(Θ)^{1/r} − (Π f_j)^{1/r}|`.
    pub determinant_defect: f64,
}

#[derive(Clone, Debug)]
pub struct SplitSolution {
    /// Rank-one metrics `e^{-ψ_j}` on the line factors.
    pub factors: Vec<MetricField>,
    /// The block-diagonal metric on `E`.
    pub assembled: MetricField,
    pub checks: SplitChecks,
}

const NORMALIZATION_TOL: f64 = 1e-8;

/// Potentials `ψ` with `κ/r + ∂∂̄ψ = f κ` for each factor.
pub fn split_solve(spec: &Arc<BundleSpec>, f_parts: &[ScalarField]) -> Result<SplitSolution> {
    let d = &spec.domain;
    let r = spec.rank;
    if !spec.is_split() {
        return Err(Error::Unsupported("split_solve needs a split bundle".into()));
    }
    if d.n != 1 {
        return Err(Error::Unsupported("split_solve is implemented for complex dimension one".into()));
    }
    if f_parts.len() != r {
        return Err(Error::InvalidBundle(format!("expected {r} density factors, found {}", f_parts.len())));
    }
    let c1 = spec.degree as f64;
    let mut normalization_errors = Vec::with_capacity(r);
    for (j, f) in f_parts.iter().enumerate() {
        d.check_scalar(f)?;
        if f.min_re() <= 0.0 {
            return Err(Error::Normalization(format!("density factor {j} is not positive")));
        }
        let err = d.integrate_against_omega(f)? - c1;
        if err.abs() > NORMALIZATION_TOL * c1.max(1.0) {
            return Err(Error::Normalization(format!("factor {j}: integral differs from c1 by {err:e}")));
        }
        normalization_errors.push(err);
    }
    let kappa = d.kappa[(0, 0)].re;
    let line_spec = Arc::new(BundleSpec::new(1, spec.degree, BundleModel::Split, d.with_degree(spec.degree)?)?);
    let mut factors = Vec::with_capacity(r);
    let mut potentials = Vec::with_capacity(r);
    for f in f_parts {
        let rhs: Vec<_> = f.values.iter().map(|v| c(kappa * (v.re - 1.0 / r as f64), 0.0)).collect();
        let mut hat = d.fft_all(&rhs, false);
        for (p, v) in hat.iter_mut().enumerate() {
            let s = d.dz_symbol(&d.mode(p), 0);
            let q = s.norm_sqr();
            *v = if q > 0.0 { -*v / q } else { c(0.0, 0.0) };
        }
        let psi: Vec<f64> = d.fft_all(&hat, true).iter().map(|v| v.re).collect();
        let weights: Vec<CMat> = psi.iter().map(|p| CMat::from_element(1, 1, c((-p).exp(), 0.0))).collect();
        factors.push(MetricField::new(EndoField::new(1, weights, line_spec.endo_twist()), line_spec.clone())?);
        potentials.push(psi);
    }
    let values = (0..d.num_points())
        .map(|p| CMat::from_fn(r, r, |i, j| if i == j { c((-potentials[i][p]).exp(), 0.0) } else { c(0.0, 0.0) }))
        .collect();
    let assembled = MetricField::new(EndoField::new(r, values, spec.endo_twist()), spec.clone())?;
    let product = ScalarField::from_real(
        (0..d.num_points()).map(|p| f_parts.iter().map(|f| f.values[p].re).product::<f64>().powf(1.0 / r as f64)),
    );
    let root = det_root_form(&big_theta(&assembled, 1.0, 0.0)?, true)?;
    let determinant_defect = root
        .values
        .iter()
        .zip(&product.values)
        .map(|(a, b)| (a.re / kappa - b.re).abs())
        .fold(0.0, f64::max);
    let integral_f = d.integrate_against_omega(&product)?;
    let holder_bound = c1;
    if integral_f > holder_bound + NORMALIZATION_TOL * holder_bound {
        return Err(Error::Normalization(format!("Hölder bound violated: {integral_f} > {holder_bound}")));
    }
    Ok(SplitSolution {
        factors,
        assembled,
        checks: SplitChecks { normalization_errors, integral_f, holder_bound, determinant_defect },
    })
}
