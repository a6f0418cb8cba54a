//! Small dense Hermitian-matrix helpers used pointwise over the grid.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Eigenvalues at or below this are treated as a loss of positivity.
pub const EIG_FLOOR: f64 = 1e-14;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(r: usize) -> CMat {
    CMat::identity(r, r)
}

/// `(m + m^*) / 2`
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry of the anti-Hermitian part.
pub fn antihermitian_defect(m: &CMat) -> f64 {
    let d = (m - m.adjoint()).scale(0.5);
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn min_eig(m: &CMat) -> f64 {
    herm_eig(m).0[0]
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, q) = herm_eig(m);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| c(f(l), 0.0)),
    ));
    &q * d * q.adjoint()
}

pub fn exp_herm(m: &CMat) -> CMat {
    herm_fn(m, f64::exp)
}

/// Principal logarithm of a Hermitian positive definite matrix.
pub fn log_herm(m: &CMat) -> Result<CMat> {
    let (vals, q) = herm_eig(m);
    if vals[0] <= EIG_FLOOR {
        return Err(Error::NotPositive { point: 0, eigenvalue: vals[0] });
    }
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| c(l.ln(), 0.0)),
    ));
    Ok(&q * d * q.adjoint())
}

/// Divided difference of `ln` with the derivative on the diagonal.
fn log_divided_difference(a: f64, b: f64) -> f64 {
    let rel = (a - b).abs() / a.max(b);
    if rel < 1e-6 {
        // series in x = (a - b) / (a + b) about the midpoint
        let x = (a - b) / (a + b);
        let x2 = x * x;
        2.0 / (a + b) * (1.0 + x2 / 3.0 + x2 * x2 / 5.0)
    } else {
        (a.ln() - b.ln()) / (a - b)
    }
}

/// Directional derivative of `log_herm` at `u` in the Hermitian direction `v`.
pub fn dlog_herm(u: &CMat, v: &CMat) -> Result<CMat> {
    let (vals, q) = herm_eig(u);
    if vals[0] <= EIG_FLOOR {
        return Err(Error::NotPositive { point: 0, eigenvalue: vals[0] });
    }
    let mut w = q.adjoint() * v * &q;
    for i in 0..vals.len() {
        for j in 0..vals.len() {
            w[(i, j)] *= log_divided_difference(vals[i], vals[j]);
        }
    }
    Ok(&q * w * q.adjoint())
}

/// Lower Cholesky factor `L` with `m = L L^*`.
pub fn cholesky(m: &CMat) -> Result<CMat> {
    match hermitian_part(m).cholesky() {
        Some(ch) => Ok(ch.l()),
        None => Err(Error::NotPositive { point: 0, eigenvalue: min_eig(m) }),
    }
}

pub fn det(m: &CMat) -> C64 {
    m.clone().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or(Error::NonFinite("matrix inverse"))
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &CMat) -> CMat {
    let n = l.nrows();
    l.solve_lower_triangular(&identity(n))
        .expect("triangular factor with zero diagonal")
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Number of reals describing an `r x r` Hermitian matrix.
pub fn herm_dim(r: usize) -> usize {
    r * r
}

/// Packs a Hermitian matrix as `[diag, (re, im) of the strict upper triangle]`.
pub fn pack_herm(m: &CMat, out: &mut [f64]) {
    let r = m.nrows();
    let mut k = 0;
    for i in 0..r {
        out[k] = m[(i, i)].re;
        k += 1;
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[k] = z.re;
            out[k + 1] = z.im;
            k += 2;
        }
    }
}

pub fn unpack_herm(data: &[f64], r: usize) -> CMat {
    let mut m = CMat::zeros(r, r);
    let mut k = 0;
    for i in 0..r {
        m[(i, i)] = c(data[k], 0.0);
        k += 1;
    }
    for i in 0..r {
        for j in (i + 1)..r {
            m[(i, j)] = c(data[k], data[k + 1]);
            m[(j, i)] = c(data[k], -data[k + 1]);
            k += 2;
        }
    }
    m
}

/// `m - (tr m / r) Id`
pub fn trace_free(m: &CMat) -> CMat {
    let r = m.nrows();
    let t = m.trace() / r as f64;
    m - identity(r) * t
}

/// Kronecker product `a ⊗ Id_r` laid out with `a`'s index outermost.
pub fn kron_identity(a: &CMat, r: usize) -> CMat {
    let n = a.nrows();
    let mut out = CMat::zeros(n * r, n * r);
    for j in 0..n {
        for k in 0..n {
            for l in 0..r {
                out[(j * r + l, k * r + l)] = a[(j, k)];
            }
        }
    }
    out
}

/// Block `(j, k)` (each `r x r`) of an `nr x nr` matrix.
pub fn block(m: &CMat, r: usize, j: usize, k: usize) -> CMat {
    m.view((j * r, k * r), (r, r)).into_owned()
}

pub fn set_block(m: &mut CMat, r: usize, j: usize, k: usize, b: &CMat) {
    m.view_mut((j * r, k * r), (r, r)).copy_from(b);
}


/// `exp(m)` for nilpotent `m` (finite series).
pub fn exp_nilpotent(m: &CMat) -> CMat {
    let r = m.nrows();
    let mut out = identity(r);
    let mut term = identity(r);
    for k in 1..=r {
        term = &term * m / c(k as f64, 0.0);
        out += &term;
    }
    out
}

/// `log(u)` for unipotent `u`, or `None` when `u − Id` is not nilpotent.
pub fn log_unipotent(u: &CMat) -> Option<CMat> {
    let r = u.nrows();
    let m = u - identity(r);
    let mut power = m.clone();
    let mut out = CMat::zeros(r, r);
    for k in 1..=r {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out += &power * c(sign / k as f64, 0.0);
        power = &power * &m;
    }
    (max_abs(&power) <= 1e-12 * (1.0 + max_abs(u))).then_some(out)
}
