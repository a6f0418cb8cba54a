//! Bundle models over the torus, metrics stored relative to the flat weighted
//! trivialization, and the pointwise endomorphism algebra.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField, Twist, TwistPair};
use crate::grid::TorusDomain;
use crate::linalg::{self, c, cholesky, identity, inverse, lower_inverse, CMat, C64};

/// One unipotent twist `A = exp(N)` along a real lattice axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionTwist {
    pub axis: usize,
    pub nilpotent: CMat,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BundleModel {
    /// Direct sum of `r` copies of `L_d`.
    Split,
    /// `L_d ⊗ F` with `F` flat unipotent, given by commuting twists.
    Extension(Vec<ExtensionTwist>),
}

#[derive(Clone, Debug)]
pub struct BundleSpec {
    pub rank: usize,
    pub degree: u32,
    pub model: BundleModel,
    pub domain: TorusDomain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChernNumbers {
    /// Top self-intersection of `c₁(E)` (wedge powers without `n!`).
    pub c1_top: i64,
    pub per_factor: Vec<i64>,
}

/// Serializable bundle block: model, rank, degree and twist generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleDescriptor {
    pub rank: usize,
    pub degree: u32,
    pub model: ModelKind,
    /// Nilpotent generators, required for `EXTENSION` and empty for `SPLIT`.
    pub twists: Vec<TwistDescriptor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Split,
    Extension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistDescriptor {
    pub axis: usize,
    /// Rows of `[re, im]` pairs.
    pub nilpotent: Vec<Vec<[f64; 2]>>,
}

impl BundleDescriptor {
    pub fn build(&self, domain: TorusDomain) -> Result<BundleSpec> {
        let model = match self.model {
            ModelKind::Split => {
                if !self.twists.is_empty() {
                    return Err(Error::InvalidBundle("split model takes no twists".into()));
                }
                BundleModel::Split
            }
            ModelKind::Extension => {
                let mut ts = Vec::with_capacity(self.twists.len());
                for t in &self.twists {
                    let r = self.rank;
                    if t.nilpotent.len() != r || t.nilpotent.iter().any(|row| row.len() != r) {
                        return Err(Error::InvalidBundle("twist matrix must be r x r".into()));
                    }
                    let m = CMat::from_fn(r, r, |i, j| c(t.nilpotent[i][j][0], t.nilpotent[i][j][1]));
                    ts.push(ExtensionTwist { axis: t.axis, nilpotent: m });
                }
                BundleModel::Extension(ts)
            }
        };
        BundleSpec::new(self.rank, self.degree, model, domain)
    }
}

fn exp_nilpotent(n: &CMat) -> CMat {
    let r = n.nrows();
    let mut acc = identity(r);
    let mut term = identity(r);
    for k in 1..=r {
        term = &term * n / c(k as f64, 0.0);
        acc += &term;
    }
    acc
}

impl BundleSpec {
    pub fn new(rank: usize, degree: u32, model: BundleModel, domain: TorusDomain) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidBundle("rank must be at least 1".into()));
        }
        if degree == 0 {
            return Err(Error::InvalidBundle("degree must be at least 1".into()));
        }
        if domain.total_degree != rank as u32 * degree {
            return Err(Error::InvalidBundle(format!(
                "domain normalized for degree {} but det E has degree {}",
                domain.total_degree,
                rank as u32 * degree
            )));
        }
        if let BundleModel::Extension(twists) = &model {
            if twists.is_empty() {
                return Err(Error::InvalidBundle("extension model needs at least one twist".into()));
            }
            for t in twists {
                if t.axis >= domain.real_axes() {
                    return Err(Error::InvalidBundle(format!("twist axis {} out of range", t.axis)));
                }
                if t.nilpotent.nrows() != rank || t.nilpotent.ncols() != rank {
                    return Err(Error::InvalidBundle("twist matrix must be r x r".into()));
                }
                if linalg::max_abs(&(&t.nilpotent * &t.nilpotent)) > 1e-12 {
                    return Err(Error::InvalidBundle("twist generator must square to zero".into()));
                }
            }
            for (i, a) in twists.iter().enumerate() {
                for b in &twists[i + 1..] {
                    if a.axis == b.axis {
                        return Err(Error::InvalidBundle("at most one twist per axis".into()));
                    }
                    let comm = &a.nilpotent * &b.nilpotent - &b.nilpotent * &a.nilpotent;
                    if linalg::max_abs(&comm) > 1e-12 {
                        return Err(Error::InvalidBundle("twist matrices must commute".into()));
                    }
                }
            }
        }
        Ok(Self { rank, degree, model, domain })
    }

    /// `L_d^{⊕r}` on the square lattice.
    pub fn split_square(n: usize, resolution: usize, rank: usize, degree: u32) -> Result<Self> {
        let domain = TorusDomain::square(n, resolution, rank as u32 * degree)?;
        Self::new(rank, degree, BundleModel::Split, domain)
    }

    /// Rank-2 non-split extension `L_d ⊗ F₂` twisted along real axis 0.
    pub fn extension_square(n: usize, resolution: usize, degree: u32) -> Result<Self> {
        let domain = TorusDomain::square(n, resolution, 2 * degree)?;
        let mut nil = CMat::zeros(2, 2);
        nil[(0, 1)] = c(1.0, 0.0);
        Self::new(2, degree, BundleModel::Extension(vec![ExtensionTwist { axis: 0, nilpotent: nil }]), domain)
    }

    pub fn descriptor(&self) -> BundleDescriptor {
        let twists = self
            .twists()
            .iter()
            .map(|t| TwistDescriptor {
                axis: t.axis,
                nilpotent: (0..self.rank)
                    .map(|i| (0..self.rank).map(|j| [t.nilpotent[(i, j)].re, t.nilpotent[(i, j)].im]).collect())
                    .collect(),
            })
            .collect();
        let model = if self.is_split() { ModelKind::Split } else { ModelKind::Extension };
        BundleDescriptor { rank: self.rank, degree: self.degree, model, twists }
    }

    /// Digest of the domain and bundle descriptors.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&(self.domain.descriptor(), self.descriptor())).expect("descriptor serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    pub fn is_split(&self) -> bool {
        matches!(self.model, BundleModel::Split)
    }

    pub fn twists(&self) -> &[ExtensionTwist] {
        match &self.model {
            BundleModel::Split => &[],
            BundleModel::Extension(t) => t,
        }
    }

    fn twist_with(&self, f: impl Fn(&CMat) -> TwistPair) -> Twist {
        let mut tw = Twist::none(self.domain.real_axes());
        for t in self.twists() {
            tw.axes[t.axis] = Some(f(&exp_nilpotent(&t.nilpotent)));
        }
        tw
    }

    /// Twist of the metric matrix: `G(x + e) = A^{-*} G A^{-1}`.
    pub fn form_twist(&self) -> Twist {
        self.twist_with(|a| {
            let ai = inverse(a).expect("unipotent");
            TwistPair { left: ai.adjoint(), right: ai }
        })
    }

    /// Twist of endomorphisms of `E`: `u(x + e) = A u A^{-1}`.
    pub fn endo_twist(&self) -> Twist {
        self.twist_with(|a| TwistPair { left: a.clone(), right: inverse(a).expect("unipotent") })
    }

    pub fn chern_numbers(&self) -> ChernNumbers {
        let n = self.domain.n as u32;
        let factor = (self.degree as i64).pow(n);
        let per_factor = match &self.model {
            BundleModel::Split => vec![factor; self.rank],
            BundleModel::Extension(_) => vec![factor; self.rank],
        };
        ChernNumbers { c1_top: ((self.rank as i64) * self.degree as i64).pow(n), per_factor }
    }

    /// A copy with every extension twist conjugated by a constant unitary.
    pub fn conjugated(&self, unitary: &CMat) -> Result<Self> {
        let model = match &self.model {
            BundleModel::Split => BundleModel::Split,
            BundleModel::Extension(ts) => BundleModel::Extension(
                ts.iter()
                    .map(|t| ExtensionTwist { axis: t.axis, nilpotent: unitary * &t.nilpotent * unitary.adjoint() })
                    .collect(),
            ),
        };
        Self::new(self.rank, self.degree, model, self.domain.clone())
    }
}

/// `exp(-Σ x_k N_k)` at a grid point.
fn reference_factor(spec: &BundleSpec, coords: &[f64]) -> CMat {
    let mut acc = identity(spec.rank);
    for t in spec.twists() {
        acc = acc * exp_nilpotent(&(&t.nilpotent * c(-coords[t.axis], 0.0)));
    }
    acc
}

/// A Hermitian metric stored as its matrix `G` against the flat trivialization
/// carrying the weight of the ample factor.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub endo: EndoField,
    pub spec: Arc<BundleSpec>,
    /// Metric on the dual bundle (the weight curvature enters with a minus sign).
    pub dual: bool,
}

impl MetricField {
    pub fn new(endo: EndoField, spec: Arc<BundleSpec>) -> Result<Self> {
        spec.domain.check_endo(&endo)?;
        let m = Self { endo, spec, dual: false };
        m.check_positive()?;
        Ok(m)
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.spec.domain
    }

    pub fn rank(&self) -> usize {
        self.spec.rank
    }

    pub fn len(&self) -> usize {
        self.endo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endo.is_empty()
    }

    /// Curvature coefficient of the weight on each factor: `κ/r`, negated on duals.
    pub fn weight_curvature(&self) -> CMat {
        let k = &self.spec.domain.kappa / c(self.spec.rank as f64, 0.0);
        if self.dual {
            -k
        } else {
            k
        }
    }

    pub fn check_positive(&self) -> Result<()> {
        let bad = self
            .endo
            .values
            .par_iter()
            .enumerate()
            .map(|(p, g)| (p, linalg::min_eig(g)))
            .filter(|&(_, e)| !(e > linalg::EIG_FLOOR))
            .min_by_key(|&(p, _)| p);
        match bad {
            Some((point, eigenvalue)) => Err(Error::NotPositive { point, eigenvalue }),
            None => Ok(()),
        }
    }

    /// Matrix of the reference metric `H₀` on the same trivialization.
    pub fn reference_matrix(&self) -> EndoField {
        let r = reference_metric_endo(&self.spec);
        if self.dual {
            dual_endo(&r)
        } else {
            r
        }
    }

    /// `det H₀ / det h` as a real field.
    pub fn det_ratio(&self) -> ScalarField {
        let reference = self.reference_matrix();
        ScalarField {
            values: self
                .endo
                .values
                .par_iter()
                .zip(reference.values.par_iter())
                .map(|(g, g0)| c(linalg::det(g0).re / linalg::det(g).re, 0.0))
                .collect(),
        }
    }

    /// The metric on `E*`: `G* = conj(G^{-1})`.
    pub fn dual(&self) -> Self {
        Self { endo: dual_endo(&self.endo), spec: self.spec.clone(), dual: !self.dual }
    }

    /// `h · exp(u)` for an `h`-Hermitian endomorphism field `u`.
    pub fn exp_update(&self, u: &EndoField, step: f64) -> Result<Self> {
        let values = self
            .endo
            .values
            .par_iter()
            .zip(u.values.par_iter())
            .map(|(g, u)| {
                let l = cholesky(g)?;
                let uh = l.adjoint() * u * lower_inverse(&l).adjoint();
                let e = linalg::exp_herm(&(linalg::hermitian_part(&uh) * c(step, 0.0)));
                Ok(linalg::hermitian_part(&(&l * e * l.adjoint())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { endo: EndoField::new(self.rank(), values, self.endo.twist.clone()), spec: self.spec.clone(), dual: self.dual })
    }
}

fn dual_endo(g: &EndoField) -> EndoField {
    g.map(g.twist.inverse().conjugate(), |m| {
        linalg::hermitian_part(&inverse(m).expect("positive metric")).map(|z| z.conj())
    })
}

fn reference_metric_endo(spec: &BundleSpec) -> EndoField {
    let d = &spec.domain;
    let values = (0..d.num_points())
        .into_par_iter()
        .map(|p| {
            let cf = reference_factor(spec, &d.coords(p));
            linalg::hermitian_part(&(cf.adjoint() * cf))
        })
        .collect();
    EndoField::new(spec.rank, values, spec.form_twist())
}

/// The reference metric `H₀`: identity for split bundles, `exp(-xN*) exp(-xN)` for extensions.
pub fn reference_metric(spec: &Arc<BundleSpec>) -> Result<MetricField> {
    MetricField::new(reference_metric_endo(spec), spec.clone())
}

/// The metric `H₀`-relative `exp(u)` for a periodic Hermitian field `u`:
/// `G = C^* exp(u) C` with `C = exp(-Σ x_k N_k)`, so the twist rule holds exactly.
pub fn metric_from_log(spec: &Arc<BundleSpec>, u: &EndoField) -> Result<MetricField> {
    let d = &spec.domain;
    d.check_endo(u)?;
    if !u.twist.is_trivial() {
        return Err(Error::InvalidBundle("log field must be periodic".into()));
    }
    let values = u
        .values
        .par_iter()
        .enumerate()
        .map(|(p, m)| {
            let cf = reference_factor(spec, &d.coords(p));
            linalg::hermitian_part(&(cf.adjoint() * linalg::exp_herm(&linalg::hermitian_part(m)) * cf))
        })
        .collect();
    MetricField::new(EndoField::new(spec.rank, values, spec.form_twist()), spec.clone())
}

/// `q̃ = G^{-1} Q` so that `q(v, w) = ⟨q̃ v, w⟩_h`.
pub fn form_to_endo(q: &[CMat], h: &MetricField) -> Result<EndoField> {
    if q.len() != h.len() {
        return Err(Error::DomainMismatch { expected: h.len(), found: q.len() });
    }
    h.check_positive()?;
    let values = h
        .endo
        .values
        .par_iter()
        .zip(q.par_iter())
        .map(|(g, q)| inverse(g).map(|gi| gi * q))
        .collect::<Result<Vec<_>>>()?;
    Ok(EndoField::new(h.rank(), values, h.spec.endo_twist()))
}

/// `u = τ Id + u°` with `τ = tr(u)/r`.
pub fn trace_free_split(u: &EndoField) -> (ScalarField, EndoField) {
    let r = u.rank as f64;
    let tau = ScalarField { values: u.values.par_iter().map(|m| m.trace() / r).collect() };
    let circ = u.map(u.twist.clone(), linalg::trace_free);
    (tau, circ)
}

/// `h̃ = G_ref^{-1} G`, the endomorphism of `h` relative to `H₀`.
pub fn relative_endo(h: &MetricField) -> Result<EndoField> {
    let reference = h.reference_matrix();
    let values = h
        .endo
        .values
        .par_iter()
        .zip(reference.values.par_iter())
        .map(|(g, g0)| inverse(g0).map(|gi| gi * g))
        .collect::<Result<Vec<_>>>()?;
    let twist = Twist {
        axes: h
            .endo
            .twist
            .axes
            .iter()
            .map(|t| t.as_ref().map(|t| TwistPair { left: inverse(&t.right).expect("twist"), right: t.right.clone() }))
            .collect(),
    };
    Ok(EndoField::new(h.rank(), values, twist))
}

/// `h̃° = h̃ · det(h̃)^{-1/r}`.
pub fn normalized_endo(h: &MetricField) -> Result<EndoField> {
    let rel = relative_endo(h)?;
    let r = h.rank() as f64;
    let values = rel
        .values
        .par_iter()
        .enumerate()
        .map(|(p, m)| {
            let d = linalg::det(m).re;
            if !(d > 0.0) {
                return Err(Error::NonPositiveDeterminant { point: p, det: d });
            }
            Ok(m * c(d.powf(-1.0 / r), 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EndoField::new(rel.rank, values, rel.twist))
}

/// Pointwise principal logarithm of a Hermitian positive field.
pub fn log_herm(u: &EndoField) -> Result<EndoField> {
    let values = u
        .values
        .par_iter()
        .enumerate()
        .map(|(p, m)| {
            linalg::log_herm(m).map_err(|e| match e {
                Error::NotPositive { eigenvalue, .. } => Error::NotPositive { point: p, eigenvalue },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EndoField::new(u.rank, values, u.twist.clone()))
}

pub fn dlog_herm(u: &EndoField, v: &EndoField) -> Result<EndoField> {
    let values = u
        .values
        .par_iter()
        .zip(v.values.par_iter())
        .map(|(a, b)| linalg::dlog_herm(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(EndoField::new(u.rank, values, u.twist.clone()))
}

/// Logarithm of an endomorphism that is self-adjoint for the Hermitian metric
/// `m` (`m·u` Hermitian), computed in an `m`-orthonormal frame.
pub fn log_selfadjoint(u: &CMat, m: &CMat) -> Result<CMat> {
    let l = cholesky(m)?;
    let li = lower_inverse(&l);
    let s = linalg::hermitian_part(&(l.adjoint() * u * li.adjoint()));
    Ok(li.adjoint() * linalg::log_herm(&s)? * l.adjoint())
}

/// Pointwise unit complex number helper for tests and probes.
pub fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}
