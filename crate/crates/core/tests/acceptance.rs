//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL` line.

use std::sync::Arc;
use std::time::Instant;

use hymlab::bundle::{metric_from_log, reference_metric};
use hymlab::curvature::{big_theta, chern_curvature, det_root_form, duality_defect, positivity_probe};
use hymlab::field::Twist;
use hymlab::hym_system::{
    a0_init, continuity_run, continuity_run_from, cushioned_solve, cushioned_solve_from, mode_covector,
    perturbation_tolerance, plane_wave_error, split_solve, Equation, OmegaVariant, PrincipalSymbol, SystemState,
};
use hymlab::linalg::{self, c, CMat, C64};
use hymlab::mavol::{mavol_ascend, mavol_value, shrink_family, upper_bound};
use hymlab::samples::{smooth_hermitian, smooth_scalar};
use hymlab::{
    run_verify, AscentConfig, BundleSpec, EndoField, MetricField, PositivityKind, ScalarField, SystemConfig, TerminalStatus,
    TorusDomain, VerifyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(k: usize, ok: bool, detail: &str) {
    println!("criterion {k}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {k} failed: {detail}");
}

fn random_metric(spec: &Arc<BundleSpec>, seed: u64, amp: f64) -> MetricField {
    metric_from_log(spec, &smooth_hermitian(&spec.domain, spec.rank, seed, amp, 3, 1)).unwrap()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

// ---------------------------------------------------------------- criterion 1

/// Symbol of `∂_z ∂_z̄` on each Fourier mode (non-positive).
fn laplace_symbol(d: &TorusDomain) -> Vec<f64> {
    (0..d.num_points()).map(|p| -d.dz_symbol(&d.mode(p), 0).norm_sqr()).collect()
}

fn apply_symbol(d: &TorusDomain, sym: &[f64], f: &[f64]) -> Vec<f64> {
    let mut hat = d.fft_all(&f.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>(), false);
    for (h, s) in hat.iter_mut().zip(sym) {
        *h *= *s;
    }
    d.fft_all(&hat, true).iter().map(|v| v.re).collect()
}

/// Newton for `1 + ψ_{zz̄}/κ = a₀ e^{λψ}` with inner preconditioned CG.
fn scalar_oracle(d: &TorusDomain, a0: &[f64], lambda: f64) -> Vec<f64> {
    let kappa = d.kappa[(0, 0)].re;
    let lap = laplace_symbol(d);
    let residual = |psi: &[f64]| -> Vec<f64> {
        let l = apply_symbol(d, &lap, psi);
        (0..psi.len()).map(|p| 1.0 + l[p] / kappa - a0[p] * (lambda * psi[p]).exp()).collect()
    };
    let mut psi = vec![0.0; d.num_points()];
    for _ in 0..60 {
        let f = residual(&psi);
        if sup(&f) < 1e-14 {
            break;
        }
        let coef: Vec<f64> = (0..psi.len()).map(|p| lambda * a0[p] * (lambda * psi[p]).exp()).collect();
        let mean = coef.iter().sum::<f64>() / coef.len() as f64;
        let op = |v: &[f64]| -> Vec<f64> {
            let l = apply_symbol(d, &lap, v);
            (0..v.len()).map(|p| -l[p] / kappa + coef[p] * v[p]).collect()
        };
        let pre: Vec<f64> = lap.iter().map(|s| 1.0 / (-s / kappa + mean)).collect();
        // CG on (−L/κ + c) δ = F.
        let mut x = vec![0.0; psi.len()];
        let mut r = f.clone();
        let mut z = apply_symbol(d, &pre, &r);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..500 {
            let ap = op(&p);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if sup(&r) < 1e-16 * (1.0 + sup(&f)) {
                break;
            }
            z = apply_symbol(d, &pre, &r);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            for i in 0..p.len() {
                p[i] = z[i] + rz_new / rz * p[i];
            }
            rz = rz_new;
        }
        let norm0 = sup(&f);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = psi.iter().zip(&x).map(|(a, b)| a + step * b).collect();
            if sup(&residual(&trial)) < norm0 || step < 1e-3 {
                psi = trial;
                break;
            }
            step *= 0.5;
        }
    }
    psi
}

#[test]
fn criterion_01_scalar_oracle() {
    let spec = Arc::new(BundleSpec::split_square(1, 64, 1, 1).unwrap());
    let d = spec.domain.clone();
    let h0 = random_metric(&spec, 5, 0.3);
    let cfg = SystemConfig::default();
    let start = Instant::now();
    let out = continuity_run_from(&h0, &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let a0: Vec<f64> = out.a0.as_ref().unwrap().values.iter().map(|v| v.re).collect();
    let psi = scalar_oracle(&d, &a0, out.cfg.lambda);
    let kappa = d.kappa[(0, 0)].re;
    let oracle_curv: Vec<f64> = apply_symbol(&d, &laplace_symbol(&d), &psi).iter().map(|l| kappa + l).collect();
    let curv = chern_curvature(&out.metric).unwrap();
    let curv_err = (0..d.num_points()).map(|p| (curv.component(p, 0, 0, 0, 0).re - oracle_curv[p]).abs()).fold(0.0, f64::max);
    let psi_err = (0..d.num_points()).map(|p| (-out.metric.endo.values[p][(0, 0)].re.ln() - psi[p]).abs()).fold(0.0, f64::max);
    let status = out.trace.status;
    let ok = status == Some(TerminalStatus::ReachedT1) && curv_err <= 1e-8 && elapsed < 10.0;
    verdict(1, ok, &format!("status={status:?} curvature_err={curv_err:.2e} potential_err={psi_err:.2e} time={elapsed:.2}s"));
}

// ---------------------------------------------------------------- criterion 2

fn linearization_error(state: &SystemState, cfg: &SystemConfig, x: &[f64], s: f64) -> f64 {
    let u = state.unpack_direction(x);
    let (lma, ltf) = state.linearized_apply(&u).unwrap();
    let eval = |step: f64| SystemState::new(&state.updated_metric(x, step).unwrap(), &state.equation, cfg).unwrap().residual();
    let (rp, rm) = (eval(s), eval(-s));
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for p in 0..u.len() {
        let fd = (rp.ma.values[p] - rm.ma.values[p]) / (2.0 * s);
        err = err.max((fd - lma.values[p]).norm());
        scale = scale.max(lma.values[p].norm());
        let fdm = (&rp.tf.values[p] - &rm.tf.values[p]) / c(2.0 * s, 0.0);
        err = err.max(linalg::max_abs(&(fdm - &ltf.values[p])));
        scale = scale.max(linalg::max_abs(&ltf.values[p]));
    }
    err / scale
}

#[test]
fn criterion_02_linearization_fidelity() {
    let models: [(&str, BundleSpec, OmegaVariant); 3] = [
        ("split", BundleSpec::split_square(1, 16, 2, 1).unwrap(), OmegaVariant::Fixed),
        ("extension", BundleSpec::extension_square(1, 16, 1).unwrap(), OmegaVariant::Fixed),
        ("split-beta", BundleSpec::split_square(1, 16, 3, 1).unwrap(), OmegaVariant::Beta),
    ];
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for (_, spec, variant) in models {
        let spec = Arc::new(spec);
        let d = spec.domain.clone();
        let r = spec.rank;
        for seed in 0..10u64 {
            let h = random_metric(&spec, 100 + seed, 0.3);
            let a0 = smooth_scalar(&d, 200 + seed, 0.2, 3, 1).map(|z| c(z.re.exp(), 0.0));
            let cfg = SystemConfig { alpha: 2.0, epsilon: 0.7, lambda: 1.3, mu: 0.5, omega_variant: variant, ..Default::default() };
            let state = SystemState::new(&h, &Equation::Full { t: 0.4, a0 }, &cfg).unwrap();
            let u = smooth_hermitian(&d, r, 300 + seed, 1.0, 3, 2);
            let mut x = vec![0.0; d.num_points() * r * r];
            for (p, m) in u.values.iter().enumerate() {
                linalg::pack_herm(m, &mut x[p * r * r..(p + 1) * r * r]);
            }
            worst = worst.max(linearization_error(&state, &cfg, &x, 1e-4));
            let e1 = linearization_error(&state, &cfg, &x, 4e-3);
            let e2 = linearization_error(&state, &cfg, &x, 2e-3);
            ratios.push(e1 / e2);
        }
    }
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &r| (a.min(r), b.max(r)));
    let ok = worst <= 1e-6 && rmin >= 3.5 && rmax <= 4.5;
    verdict(2, ok, &format!("max_rel_err={worst:.2e} halving_ratio=[{rmin:.3}, {rmax:.3}] samples={}", ratios.len()));
}

// ---------------------------------------------------------------- criterion 3

fn probe_error(spec: BundleSpec) -> f64 {
    let spec = Arc::new(spec);
    let d = spec.domain.clone();
    let h = random_metric(&spec, 4, 0.2);
    let cfg = SystemConfig { alpha: 1.5, lambda: 0.8, mu: 0.4, ..Default::default() };
    let a0 = a0_init(&h, &cfg).unwrap();
    let state = SystemState::new(&h, &Equation::Full { t: 0.3, a0 }, &cfg).unwrap();
    let mut mode = vec![0; d.real_axes()];
    mode[0] = (d.resolution / 4) as i64;
    let uhat = linalg::hermitian_part(&CMat::from_fn(spec.rank, spec.rank, |i, j| {
        c((i + 2 * j) as f64 * 0.3 + 0.5, if i == j { 0.0 } else { 0.2 })
    }));
    plane_wave_error(&state, &mode, &uhat, 0).unwrap()
}

#[test]
fn criterion_03_symbol_fidelity() {
    let res = [32, 64, 128];
    let split: Vec<f64> = res.iter().map(|&n| probe_error(BundleSpec::split_square(1, n, 2, 1).unwrap())).collect();
    let ext: Vec<f64> = res.iter().map(|&n| probe_error(BundleSpec::extension_square(1, n, 1).unwrap())).collect();
    let ratios: Vec<f64> = [&split, &ext].iter().flat_map(|e| [e[1] / e[0], e[2] / e[1]]).collect();
    let worst_ratio = ratios.iter().cloned().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut composition: f64 = 0.0;
    for spec in [BundleSpec::split_square(1, 32, 2, 1).unwrap(), BundleSpec::extension_square(1, 32, 1).unwrap()] {
        let spec = Arc::new(spec);
        let h = random_metric(&spec, 8, 0.2);
        let cfg = SystemConfig::default();
        let a0 = a0_init(&h, &cfg).unwrap();
        let state = SystemState::new(&h, &Equation::Full { t: 0.5, a0 }, &cfg).unwrap();
        for _ in 0..40 {
            let p = rng.gen_range(0..spec.domain.num_points());
            let mode = [rng.gen_range(-15..16i64), rng.gen_range(-15..16i64)];
            if mode == [0, 0] {
                continue;
            }
            let sym = PrincipalSymbol::at_point(&state, p, &mode_covector(&state, &mode)).unwrap();
            let rep = sym.report(p);
            assert_eq!(rep.sigma_g, 0.0);
            assert!(rep.sigma_g < rep.tolerance);
            composition = composition.max(rep.composition_defect);
        }
    }
    for (n, r) in [(1, 1), (1, 3), (2, 2)] {
        for _ in 0..10 {
            let kappa = {
                let a = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                &a * a.adjoint() + CMat::identity(n, n) * c(0.3, 0.0)
            };
            let theta = {
                let a = CMat::from_fn(n * r, n * r, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                &a * a.adjoint() + CMat::identity(n * r, n * r) * c(0.3, 0.0)
            };
            let xi: Vec<C64> = (0..n).map(|_| c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
            composition = composition.max(PrincipalSymbol::new(&theta, &kappa, r, &xi).unwrap().composition_defect());
        }
    }
    let tol = perturbation_tolerance(1, 2);
    let ok = worst_ratio <= 0.6 && composition <= 1e-10;
    verdict(
        3,
        ok,
        &format!(
            "split_err={split:?} extension_err={ext:?} worst_ratio={worst_ratio:.3} composition={composition:.2e} tolerance(n=1,r=2)={tol:.4} sigma_G=0"
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_cushioned_initializer() {
    let cfg = SystemConfig::default();
    let mut worst_res: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, spec) in [
        ("split", BundleSpec::split_square(1, 64, 2, 1).unwrap()),
        ("extension", BundleSpec::extension_square(1, 64, 1).unwrap()),
    ] {
        let spec = Arc::new(spec);
        let starts = [reference_metric(&spec).unwrap(), random_metric(&spec, 12, 0.2)];
        for (i, start) in starts.iter().enumerate() {
            let (h, _) = if i == 0 {
                cushioned_solve(cfg.epsilon, &spec, &cfg).unwrap()
            } else {
                cushioned_solve_from(start, cfg.epsilon, &cfg).unwrap()
            };
            let res = SystemState::new(&h, &Equation::Cushion, &cfg).unwrap().residual().sup_norm();
            let det = h.det_ratio().values.iter().map(|v| (v.re - 1.0).abs()).fold(0.0, f64::max);
            worst_res = worst_res.max(res);
            worst_det = worst_det.max(det);
            lines.push(format!("{name}{}: res={res:.1e} det={det:.1e}", if i == 0 { "" } else { "/random" }));
        }
    }
    let ok = worst_res <= 1e-8 && worst_det <= 1e-10;
    verdict(4, ok, &format!("residual={worst_res:.2e} det_defect={worst_det:.2e} [{}]", lines.join("; ")));
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_duality_and_hierarchy() {
    let mut duality: f64 = 0.0;
    for spec in [BundleSpec::split_square(1, 32, 2, 1).unwrap(), BundleSpec::extension_square(1, 32, 1).unwrap(), BundleSpec::split_square(2, 16, 2, 1).unwrap()] {
        let spec = Arc::new(spec);
        for seed in 0..3 {
            duality = duality.max(duality_defect(&random_metric(&spec, seed, 0.3)).unwrap());
        }
    }
    let surface = Arc::new(BundleSpec::split_square(2, 8, 2, 1).unwrap());
    let mut slack = f64::INFINITY;
    for seed in 0..20 {
        let curv = chern_curvature(&random_metric(&surface, 40 + seed, 0.25)).unwrap();
        let g = curv.probe(PositivityKind::Griffiths).margin;
        let n = curv.probe(PositivityKind::Nakano).margin;
        let dn = curv.probe(PositivityKind::DualNakano).margin;
        slack = slack.min(g - n.max(dn));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let kappa = CMat::identity(2, 2) * c(2.0, 0.0);
    for _ in 0..20 {
        let a = CMat::from_fn(4, 4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = linalg::hermitian_part(&a);
        let probe = |kind| positivity_probe(std::slice::from_ref(&m), 2, 2, &kappa, kind).margin;
        slack = slack.min(probe(PositivityKind::Griffiths) - probe(PositivityKind::Nakano).max(probe(PositivityKind::DualNakano)));
    }
    let mut spread: f64 = 0.0;
    for (r, seed) in [(2, 0u64), (3, 1), (2, 2), (3, 3)] {
        let spec = Arc::new(BundleSpec::split_square(1, 16, r, 1).unwrap());
        let curv = chern_curvature(&random_metric(&spec, seed, 0.3)).unwrap();
        let g = curv.probe(PositivityKind::Griffiths).margin;
        let n = curv.probe(PositivityKind::Nakano).margin;
        let dn = curv.probe(PositivityKind::DualNakano).margin;
        spread = spread.max((g - n).abs()).max((g - dn).abs());
    }
    let ok = duality <= 1e-9 && slack >= -1e-9 && spread <= 1e-8;
    verdict(5, ok, &format!("duality={duality:.2e} min(griffiths-max(nakano,dual))={slack:.2e} curve_spread={spread:.2e}"));
}

// ---------------------------------------------------------------- criterion 6

fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
    let a = CMat::from_fn(dim, dim, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    a.qr().q()
}

/// Rank-one metric `e^{-ψ}` on `L_d` over the same lattice.
fn line_factor(spec: &BundleSpec, psi: &ScalarField) -> MetricField {
    let line = Arc::new(BundleSpec::new(1, spec.degree, hymlab::BundleModel::Split, spec.domain.with_degree(spec.degree).unwrap()).unwrap());
    let values = psi.values.iter().map(|v| CMat::from_element(1, 1, c((-v.re).exp(), 0.0))).collect();
    MetricField::new(EndoField::new(1, values, Twist::none(spec.domain.real_axes())), line).unwrap()
}

#[test]
fn criterion_06_frame_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut invariance: f64 = 0.0;
    for spec in [
        BundleSpec::split_square(1, 16, 3, 1).unwrap(),
        BundleSpec::extension_square(1, 16, 1).unwrap(),
        BundleSpec::split_square(2, 8, 2, 1).unwrap(),
    ] {
        let spec = Arc::new(spec);
        let theta = big_theta(&random_metric(&spec, 6, 0.2), 0.3, 1.5).unwrap();
        let base = det_root_form(&theta, false).unwrap();
        let (n, r) = (theta.n, theta.rank);
        let mut moved = theta.clone();
        for m in moved.values.iter_mut() {
            let u = random_unitary(&mut rng, r);
            let big = linalg::kron_identity(&CMat::identity(n, n), 1);
            let mut big = CMat::zeros(n * r, n * r) + big.map(|_| c(0.0, 0.0)).resize(n * r, n * r, c(0.0, 0.0));
            for j in 0..n {
                big.view_mut((j * r, j * r), (r, r)).copy_from(&u);
            }
            *m = big.adjoint() * &*m * &big;
        }
        let after = det_root_form(&moved, false).unwrap();
        let scale = base.max_abs().max(1.0);
        let dev = base.values.iter().zip(&after.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        invariance = invariance.max(dev);
    }
    let mut product: f64 = 0.0;
    for (n, res, r) in [(1usize, 32usize, 2usize), (1, 32, 3), (2, 8, 2)] {
        let spec = Arc::new(BundleSpec::split_square(n, res, r, 1).unwrap());
        let d = &spec.domain;
        let psis: Vec<ScalarField> = (0..r).map(|j| smooth_scalar(d, 50 + j as u64, 0.3, 3, 1)).collect();
        let diag = (0..d.num_points())
            .map(|p| CMat::from_fn(r, r, |i, j| if i == j { c((-psis[i].values[p].re).exp(), 0.0) } else { c(0.0, 0.0) }))
            .collect();
        let h = MetricField::new(EndoField::new(r, diag, spec.form_twist()), spec.clone()).unwrap();
        let whole = det_root_form(&big_theta(&h, 1.0, 0.0).unwrap(), false).unwrap();
        let factors: Vec<ScalarField> = psis
            .iter()
            .map(|psi| {
                let th = big_theta(&line_factor(&spec, psi), 1.0, 0.0).unwrap();
                ScalarField { values: th.values.iter().map(|m| linalg::det(m)).collect() }
            })
            .collect();
        for p in 0..d.num_points() {
            let prod: f64 = factors.iter().map(|f| f.values[p].re).product();
            let expected = prod.signum() * prod.abs().powf(1.0 / r as f64);
            product = product.max((whole.values[p].re - expected).abs() / expected.abs().max(1.0));
        }
    }
    let ok = invariance <= 1e-10 && product <= 1e-9;
    verdict(6, ok, &format!("unitary_invariance={invariance:.2e} block_product={product:.2e}"));
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_mavol_bound_and_equality() {
    let mut excess = f64::NEG_INFINITY;
    let mut eig: f64 = 0.0;
    let mut count = 0;
    let specs = [
        Arc::new(BundleSpec::split_square(1, 16, 2, 1).unwrap()),
        Arc::new(BundleSpec::extension_square(1, 16, 1).unwrap()),
        Arc::new(BundleSpec::split_square(1, 16, 3, 1).unwrap()),
        Arc::new(BundleSpec::split_square(2, 8, 2, 1).unwrap()),
    ];
    let mut seed = 0;
    while count < 20 {
        let spec = &specs[seed as usize % specs.len()];
        let h = random_metric(spec, 60 + seed, 0.15);
        seed += 1;
        let rep = mavol_value(&h).unwrap();
        if !rep.is_positive() {
            continue;
        }
        count += 1;
        excess = excess.max(rep.value - rep.upper_bound);
        eig = eig.max(rep.eigenvalue_identity_defect);
    }
    let spec = Arc::new(BundleSpec::split_square(1, 64, 2, 1).unwrap());
    let h = random_metric(&spec, 9, 0.25);
    let start = mavol_value(&h).unwrap().value;
    let (_, trace) = mavol_ascend(&h, &AscentConfig { max_iterations: 80, ..Default::default() }).unwrap();
    let last = trace.steps.last().unwrap().value;
    let bound = upper_bound(&spec);
    let ok = excess <= 1e-9 && eig <= 1e-8 && last >= 0.98 * bound;
    verdict(
        7,
        ok,
        &format!(
            "max(value-bound)={excess:.2e} eigen_identity={eig:.2e} ascent {start:.5}->{last:.5} of bound {bound} ({:?}, {} iterations)",
            trace.status,
            trace.steps.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_08_split_consistency() {
    let res = 32;
    let cfg = SystemConfig { alpha: 1.0, lambda: 0.7, ..Default::default() };
    let rank2 = Arc::new(BundleSpec::split_square(1, res, 2, 1).unwrap());
    let rank1 = Arc::new(BundleSpec::split_square(1, res, 1, 1).unwrap());
    let psis = [smooth_scalar(&rank2.domain, 71, 0.25, 3, 1), smooth_scalar(&rank2.domain, 72, 0.25, 3, 1)];
    let mut worst: f64 = 0.0;
    let mut statuses = Vec::new();
    for psi in &psis {
        let diag = (0..rank2.domain.num_points())
            .map(|p| CMat::identity(2, 2) * c((-psi.values[p].re).exp(), 0.0))
            .collect();
        let h2 = MetricField::new(EndoField::new(2, diag, rank2.form_twist()), rank2.clone()).unwrap();
        let line = psi.values.iter().map(|v| CMat::from_element(1, 1, c((-v.re).exp(), 0.0))).collect();
        let h1 = MetricField::new(EndoField::new(1, line, rank1.form_twist()), rank1.clone()).unwrap();
        let out2 = continuity_run_from(&h2, &cfg).unwrap();
        let cfg1 = SystemConfig { alpha: 2.0 * cfg.alpha, lambda: 2.0 * cfg.lambda, ..cfg.clone() };
        let out1 = continuity_run_from(&h1, &cfg1).unwrap();
        statuses.push((out2.trace.status, out1.trace.status));
        for p in 0..rank2.domain.num_points() {
            let g = &out2.metric.endo.values[p];
            let l = out1.metric.endo.values[p][(0, 0)].re;
            worst = worst.max((g[(0, 0)].re - l).abs()).max((g[(1, 1)].re - l).abs()).max(g[(0, 1)].norm());
        }
    }
    let reached = statuses.iter().all(|(a, b)| *a == Some(TerminalStatus::ReachedT1) && *b == Some(TerminalStatus::ReachedT1));

    let d = &rank2.domain;
    let normalize = |g: ScalarField| {
        let s = 1.0 / d.integrate_against_omega(&g).unwrap();
        g.map(|v| c(v.re * s, 0.0))
    };
    let f = normalize(smooth_scalar(d, 5, 0.3, 3, 1).map(|v| c(v.re.exp(), 0.0)));
    let eq = split_solve(&rank2, &[f.clone(), f.clone()]).unwrap().checks;
    let equality = (eq.integral_f - eq.holder_bound).abs().max(eq.determinant_defect);
    let bad = f.map(|v| c(v.re * 1.1, 0.0));
    let enforced = split_solve(&rank2, &[f.clone(), bad]).is_err();
    let g = normalize(smooth_scalar(d, 6, 0.3, 3, 1).map(|v| c(v.re.exp(), 0.0)));
    let strict = split_solve(&rank2, &[f, g]).unwrap().checks;
    let holder = strict.integral_f < strict.holder_bound;
    let ok = reached && worst <= 1e-8 && enforced && equality <= 1e-8 && holder;
    verdict(
        8,
        ok,
        &format!(
            "rank2_vs_rank1={worst:.2e} statuses={statuses:?} equality_defect={equality:.2e} normalization_enforced={enforced} holder_strict={:.6}<{}",
            strict.integral_f, strict.holder_bound
        ),
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_positivity_outcome() {
    let spec = Arc::new(BundleSpec::split_square(1, 64, 2, 2).unwrap());
    let cfg = SystemConfig::default();
    let start = Instant::now();
    let runs = [continuity_run(&spec, &cfg).unwrap(), continuity_run_from(&random_metric(&spec, 31, 0.2), &cfg).unwrap()];
    let elapsed = start.elapsed().as_secs_f64();
    let mut details = Vec::new();
    let mut ok = elapsed < 300.0;
    for out in &runs {
        let t = &out.trace;
        let min_margin = t.steps.iter().map(|s| s.dual_nakano_margin).fold(f64::INFINITY, f64::min);
        let complete = t.status.is_some() && t.is_t_monotone() && (t.status == Some(TerminalStatus::ReachedT1) || t.failure.is_some());
        ok &= complete && t.status == Some(TerminalStatus::ReachedT1) && min_margin > 0.0;
        details.push(format!("{:?} steps={} min_dual_nakano={min_margin:.4}", t.status, t.steps.len()));
    }
    let verify = run_verify(&VerifyConfig::default()).unwrap();
    ok &= verify.passed;
    verdict(9, ok, &format!("[{}] verify_passed={} time={elapsed:.1}s", details.join("; "), verify.passed));
}

// ---------------------------------------------------------------- criterion 10

/// `I₀` by its power series, independent of the library routine.
fn i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
        sum += term;
    }
    sum
}

#[test]
fn criterion_10_shrink_experiment() {
    let spec = Arc::new(BundleSpec::split_square(1, 64, 2, 1).unwrap());
    let series = shrink_family(&spec, &[1.0, 2.0, 4.0, 8.0]).unwrap();
    let values: Vec<f64> = series.iter().map(|p| p.value).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let halved = values[3] < 0.5 * values[0];
    // d / I₀(s−1)², tabulated ahead of time.
    let table = [1.0, 0.623_86, 0.041_978, 3.518e-5];
    let table_dev = values.iter().zip(&table).map(|(v, t)| (v - t).abs() / t).fold(0.0, f64::max);
    let formula_dev =
        series.iter().map(|p| (p.value - spec.degree as f64 / i0(p.s - 1.0).powi(2)).abs()).fold(0.0, f64::max);
    let ok = decreasing && halved && table_dev < 1e-4 && formula_dev < 1e-8;
    verdict(10, ok, &format!("values={values:?} table_rel_dev={table_dev:.1e} closed_form_dev={formula_dev:.1e}"));
}
