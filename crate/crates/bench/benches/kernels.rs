use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use hymlab::bundle::metric_from_log;
use hymlab::curvature::{big_theta, chern_curvature, det_root_form};
use hymlab::hym_system::{a0_init, Equation, SystemState};
use hymlab::mavol::{el_residual, mavol_value};
use hymlab::samples::smooth_hermitian;
use hymlab::{BundleSpec, MetricField, PositivityKind, SystemConfig};

fn metric(spec: BundleSpec) -> MetricField {
    let spec = Arc::new(spec);
    metric_from_log(&spec, &smooth_hermitian(&spec.domain, spec.rank, 1, 0.15, 3, 1)).unwrap()
}

fn curvature(c: &mut Criterion) {
    let split = metric(BundleSpec::split_square(1, 64, 2, 1).unwrap());
    let ext = metric(BundleSpec::extension_square(1, 64, 1).unwrap());
    c.bench_function("chern_curvature split r2 N64", |b| b.iter(|| chern_curvature(black_box(&split)).unwrap()));
    c.bench_function("chern_curvature extension N64", |b| b.iter(|| chern_curvature(black_box(&ext)).unwrap()));
    let theta = big_theta(&split, 0.5, 1.0).unwrap();
    c.bench_function("det_root_form N64", |b| b.iter(|| det_root_form(black_box(&theta), true).unwrap()));
    c.bench_function("dual_nakano_probe N64", |b| b.iter(|| theta.probe(black_box(PositivityKind::DualNakano))));
}

fn system(c: &mut Criterion) {
    let h = metric(BundleSpec::split_square(1, 64, 2, 1).unwrap());
    let cfg = SystemConfig::default();
    let a0 = a0_init(&h, &cfg).unwrap();
    let eq = Equation::Full { t: 0.5, a0 };
    c.bench_function("system_state residual N64", |b| b.iter(|| SystemState::new(black_box(&h), &eq, &cfg).unwrap().residual()));
    let state = SystemState::new(&h, &eq, &cfg).unwrap();
    let x: Vec<f64> = (0..state.domain().num_points() * 4).map(|i| ((i * 37) % 11) as f64 * 0.01).collect();
    c.bench_function("packed jacobian apply N64", |b| b.iter(|| state.apply_packed(black_box(&x))));
    let pre = state.preconditioner();
    c.bench_function("fourier preconditioner N64", |b| b.iter(|| pre.apply(black_box(&x))));
}

fn mavol(c: &mut Criterion) {
    let h = metric(BundleSpec::split_square(1, 64, 2, 1).unwrap());
    c.bench_function("mavol_value N64", |b| b.iter(|| mavol_value(black_box(&h)).unwrap()));
    c.bench_function("el_residual N64", |b| b.iter(|| el_residual(black_box(&h)).unwrap()));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = curvature, system, mavol
}
criterion_main!(kernels);
