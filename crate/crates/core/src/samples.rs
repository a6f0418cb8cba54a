//! Deterministic smooth test fields.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::field::{EndoField, ScalarField, Twist};
use crate::grid::TorusDomain;
use crate::linalg::{c, hermitian_part, CMat};

/// Low-frequency random modes: `(wavevector, phase, weight)`.
fn modes(domain: &TorusDomain, rng: &mut ChaCha8Rng, count: usize, max_freq: i64) -> Vec<(Vec<i64>, f64)> {
    (0..count)
        .map(|_| {
            let k: Vec<i64> = (0..domain.real_axes()).map(|_| rng.gen_range(-max_freq..=max_freq)).collect();
            (k, rng.gen_range(0.0..1.0))
        })
        .collect()
}

fn wave(x: &[f64], k: &[i64], phase: f64) -> f64 {
    let arg: f64 = x.iter().zip(k).map(|(x, &k)| x * k as f64).sum::<f64>() + phase;
    (2.0 * PI * arg).cos()
}

/// Real periodic scalar field with amplitude at most `amplitude`.
pub fn smooth_scalar(domain: &TorusDomain, seed: u64, amplitude: f64, count: usize, max_freq: i64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = modes(domain, &mut rng, count, max_freq);
    let w: Vec<f64> = ms.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scale = amplitude / w.iter().map(|x: &f64| x.abs()).sum::<f64>().max(1e-300);
    domain.scalar_from_fn(|x| ms.iter().zip(&w).map(|((k, ph), w)| scale * w * wave(x, k, *ph)).sum())
}

/// Periodic Hermitian matrix field with operator norm at most `amplitude`.
pub fn smooth_hermitian(
    domain: &TorusDomain,
    rank: usize,
    seed: u64,
    amplitude: f64,
    count: usize,
    max_freq: i64,
) -> EndoField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = modes(domain, &mut rng, count, max_freq);
    let mats: Vec<CMat> = ms
        .iter()
        .map(|_| {
            let a = CMat::from_fn(rank, rank, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let h = hermitian_part(&a);
            let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
            h / c(norm, 0.0)
        })
        .collect();
    let scale = amplitude / count.max(1) as f64;
    let values = (0..domain.num_points())
        .into_par_iter()
        .map(|p| {
            let x = domain.coords(p);
            let mut acc = CMat::zeros(rank, rank);
            for ((k, ph), m) in ms.iter().zip(&mats) {
                acc += m * c(scale * wave(&x, k, *ph), 0.0);
            }
            acc
        })
        .collect();
    EndoField::new(rank, values, Twist::none(domain.real_axes()))
}
