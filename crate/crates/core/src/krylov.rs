//! Restarted GMRES with right preconditioning on real vectors.
//!
//! Dot products are accumulated sequentially so results do not depend on the
//! thread count.

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
    /// Stop when `‖b − A x‖ ≤ rel_tol · ‖b‖`.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, max_iterations: 600, rel_tol: 1e-10, abs_tol: 1e-300 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Solves `A x = b` with `A` applied through `op` and preconditioner `m ≈ A^{-1}`
/// applied on the right; the initial guess is zero.
pub fn gmres(
    op: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> GmresOutcome {
    let dim = b.len();
    let bnorm = norm(b);
    let target = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let mut x = vec![0.0; dim];
    if bnorm <= target {
        return GmresOutcome { solution: x, iterations: 0, residual_norm: bnorm, converged: true };
    }
    let mut total = 0;
    let mut r = b.to_vec();
    let mut beta = bnorm;
    while total < opts.max_iterations {
        let m = opts.restart.min(opts.max_iterations - total);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z = precond(&basis[k]);
            let mut w = op(&z);
            zs.push(z);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let h = dot(&w, v);
                    hess[i][k] += h;
                    axpy(&mut w, -h, v);
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() <= target || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        for (yi, z) in y.iter().zip(&zs) {
            axpy(&mut x, *yi, z);
        }
        let ax = op(&x);
        r = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        beta = norm(&r);
        if beta <= target {
            return GmresOutcome { solution: x, iterations: total, residual_norm: beta, converged: true };
        }
        if !beta.is_finite() {
            break;
        }
    }
    GmresOutcome { solution: x, iterations: total, residual_norm: beta, converged: beta <= target }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 4.0 } else { rng.gen_range(-0.3..0.3) }).collect())
            .collect();
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let apply = |x: &[f64]| -> Vec<f64> { a.iter().map(|row| dot(row, x)).collect() };
        let b = apply(&xs);
        let out = gmres(apply, |v| v.to_vec(), &b, GmresOptions { restart: 10, ..Default::default() });
        assert!(out.converged);
        let err = xs.iter().zip(&out.solution).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let diag: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let out = gmres(
            |x| x.iter().zip(&diag).map(|(x, d)| x * d).collect(),
            |x| x.iter().zip(&diag).map(|(x, d)| x / d).collect(),
            &b,
            GmresOptions::default(),
        );
        assert!(out.converged && out.iterations <= 2);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = gmres(|x| x.to_vec(), |x| x.to_vec(), &[0.0; 5], GmresOptions::default());
        assert!(out.converged && out.iterations == 0 && out.solution.iter().all(|&v| v == 0.0));
    }
}
