use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cws_core::estimator::{estimate_gradients, EstimatorParams};
use cws_core::exec;
use cws_core::forward::{fourier_path, joint_intensities, sample_coincidences, CoincidenceData, MeasurementAxis, OpticalConfig};
use cws_core::reconstructor::{integrate_phase, ReconParams};
use cws_core::states::{make_gaussian_schell, GaussianSchellParams};
use cws_core::{ComplexField, LatticeSpec};

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn setup(len: usize) -> (ComplexField, OpticalConfig) {
    let spec = LatticeSpec::new(2, 2, len, 25e-6).unwrap();
    let state = make_gaussian_schell(GaussianSchellParams::new(1e6, 1e9).unwrap(), &spec).unwrap();
    let cfg = OpticalConfig::new(800e-9, 0.2, 25e-6, MeasurementAxis::Kx, vec![true, false]).unwrap();
    (state, cfg)
}

fn forward(c: &mut Criterion) {
    let (state, cfg) = setup(20);
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    for (name, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::new("fourier_path", name), |b| b.iter(|| fourier_path(&state, 0, &cfg).unwrap()));
        let camera = fourier_path(&state, 0, &cfg).unwrap();
        g.bench_function(BenchmarkId::new("joint_intensities", name), |b| {
            b.iter(|| joint_intensities(&camera, &cfg).unwrap())
        });
        let pmf = joint_intensities(&camera, &cfg).unwrap();
        g.bench_function(BenchmarkId::new("sample_coincidences", name), |b| {
            b.iter(|| sample_coincidences(&pmf, 1_000_000, 1).unwrap())
        });
    }
    exec::set_parallel(true);
    g.finish();
}

fn reconstruct(c: &mut Criterion) {
    let (state, cfg) = setup(16);
    let camera = fourier_path(&state, 0, &cfg).unwrap();
    let hists: Vec<_> = [MeasurementAxis::Kx, MeasurementAxis::Ky]
        .into_iter()
        .map(|axis| {
            let pmf = joint_intensities(&camera, &cfg.with_axis(axis)).unwrap();
            sample_coincidences(&pmf, 1_000_000, 3).unwrap()
        })
        .collect();
    let data: Vec<&dyn CoincidenceData> = hists.iter().map(|h| h as &dyn CoincidenceData).collect();
    let mut g = c.benchmark_group("reconstruct");
    g.sample_size(10);
    for (name, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::new("estimate_gradients", name), |b| {
            b.iter(|| estimate_gradients(&data, &EstimatorParams::default()).unwrap())
        });
        let est = estimate_gradients(&data, &EstimatorParams::default()).unwrap();
        let params = ReconParams { repeats: 8, seed: 2, ..ReconParams::default() };
        g.bench_function(BenchmarkId::new("integrate_phase", name), |b| {
            b.iter(|| integrate_phase(&est.gradient, &est.intensity, &params).unwrap())
        });
    }
    exec::set_parallel(true);
    g.finish();
}

criterion_group!(benches, forward, reconstruct);
criterion_main!(benches);
