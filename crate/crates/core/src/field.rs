//! Grid-valued data: complex scalar fields and matrix fields with a lattice twist.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{identity, inverse, CMat, C64};

/// Complex value per grid point; always exactly periodic.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn constant(len: usize, v: f64) -> Self {
        Self { values: vec![C64::new(v, 0.0); len] }
    }

    pub fn from_real(values: impl IntoIterator<Item = f64>) -> Self {
        Self { values: values.into_iter().map(|v| C64::new(v, 0.0)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    pub fn max_re(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64 + Sync + Send) -> Self {
        Self { values: self.values.par_iter().map(|&z| f(z)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64 + Sync + Send) -> Self {
        Self {
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// `X(x + e_axis) = left * X(x) * right` across the wrap-around of one real axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistPair {
    pub left: CMat,
    pub right: CMat,
}

/// Per real-axis twist rules of a matrix field; `None` means periodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub axes: Vec<Option<TwistPair>>,
}

impl Twist {
    pub fn none(real_axes: usize) -> Self {
        Self { axes: vec![None; real_axes] }
    }

    pub fn is_trivial(&self) -> bool {
        self.axes.iter().all(Option::is_none)
    }

    fn map_pairs(&self, f: impl Fn(&TwistPair) -> TwistPair) -> Self {
        Self { axes: self.axes.iter().map(|a| a.as_ref().map(&f)).collect() }
    }

    /// Twist of `X^{-1}` given the twist of `X`.
    pub fn inverse(&self) -> Self {
        self.map_pairs(|p| TwistPair {
            left: inverse(&p.right).expect("twist matrix invertible"),
            right: inverse(&p.left).expect("twist matrix invertible"),
        })
    }

    /// Twist of `X * Y`; requires `right(X) * left(Y) = Id`.
    pub fn product(&self, other: &Self) -> Self {
        Self {
            axes: self
                .axes
                .iter()
                .zip(&other.axes)
                .map(|(a, b)| match (a, b) {
                    (None, None) => None,
                    (Some(a), Some(b)) => Some(TwistPair { left: a.left.clone(), right: b.right.clone() }),
                    (Some(a), None) => Some(TwistPair {
                        left: a.left.clone(),
                        right: identity(a.right.nrows()),
                    }),
                    (None, Some(b)) => Some(TwistPair {
                        left: identity(b.left.nrows()),
                        right: b.right.clone(),
                    }),
                })
                .collect(),
        }
    }

    /// Twist of the dual field for the bilinear pairing `sum tr(W X)`.
    pub fn transpose_dual(&self) -> Self {
        self.map_pairs(|p| TwistPair {
            left: inverse(&p.right).expect("twist matrix invertible"),
            right: inverse(&p.left).expect("twist matrix invertible"),
        })
    }

    /// Twist of the entrywise conjugate field.
    pub fn conjugate(&self) -> Self {
        self.map_pairs(|p| TwistPair { left: p.left.map(|z| z.conj()), right: p.right.map(|z| z.conj()) })
    }

    /// Twist of `X^*`.
    pub fn adjoint(&self) -> Self {
        self.map_pairs(|p| TwistPair { left: p.right.adjoint(), right: p.left.adjoint() })
    }
}

/// An `r x r` complex matrix per grid point with a twist rule.
#[derive(Clone, Debug, PartialEq)]
pub struct EndoField {
    pub rank: usize,
    pub values: Vec<CMat>,
    pub twist: Twist,
}

impl EndoField {
    pub fn new(rank: usize, values: Vec<CMat>, twist: Twist) -> Self {
        Self { rank, values, twist }
    }

    pub fn constant(len: usize, m: &CMat, twist: Twist) -> Self {
        Self { rank: m.nrows(), values: vec![m.clone(); len], twist }
    }

    pub fn identity(len: usize, rank: usize, real_axes: usize) -> Self {
        Self::constant(len, &identity(rank), Twist::none(real_axes))
    }

    pub fn zeros(len: usize, rank: usize, twist: Twist) -> Self {
        Self::constant(len, &CMat::zeros(rank, rank), twist)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, twist: Twist, f: impl Fn(&CMat) -> CMat + Sync + Send) -> Self {
        Self {
            rank: self.rank,
            values: self.values.par_iter().map(f).collect(),
            twist,
        }
    }

    pub fn zip_map(&self, other: &Self, twist: Twist, f: impl Fn(&CMat, &CMat) -> CMat + Sync + Send) -> Self {
        Self {
            rank: self.rank,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(a, b)| f(a, b))
                .collect(),
            twist,
        }
    }

    /// Pointwise product with composed twist.
    pub fn mul(&self, other: &Self) -> Self {
        let twist = self.twist.product(&other.twist);
        self.zip_map(other, twist, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, self.twist.clone(), |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, self.twist.clone(), |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(self.twist.clone(), |a| a * s)
    }

    pub fn component(&self, i: usize, j: usize) -> Vec<C64> {
        self.values.iter().map(|m| m[(i, j)]).collect()
    }

    pub fn trace(&self) -> ScalarField {
        ScalarField { values: self.values.par_iter().map(|m| m.trace()).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .map(crate::linalg::max_abs)
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}
