use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use zeroinfl::copula::fit_tlnpn_with;
use zeroinfl::data::{select_dataset, synthetic_standin, QMP_STANDIN};
use zeroinfl::eval::{kfold_cv, EvalOptions, ModelKind};
use zeroinfl::par::ExecMode;
use zeroinfl::synth::{gen_setting_two, CorrelationSpec, SettingConfig};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn tlnpn_fit(c: &mut Criterion) {
    let source = synthetic_standin(&QMP_STANDIN, 2017);
    let targets: Vec<f64> = (0..12).map(|i| 0.05 + 0.06 * i as f64).collect();
    let data = select_dataset(&source, &targets, 12).unwrap().values;
    let mut g = c.benchmark_group("fit_tlnpn_135x12");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| fit_tlnpn_with(black_box(&data), mode).unwrap()));
    }
    g.finish();
}

fn cross_validation(c: &mut Criterion) {
    let cfg = SettingConfig { n: 400, ..SettingConfig::setting_two(1.0, (1.0f64 / 9.0).ln(), 0.0, CorrelationSpec::ar(0.7, 5)) };
    let (y, x) = gen_setting_two(&cfg, 1).unwrap();
    let models = [ModelKind::Tlnpn, ModelKind::Hnb, ModelKind::HnbCovariates];
    let mut g = c.benchmark_group("kfold_cv_400x5");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = EvalOptions { exec: mode, ..EvalOptions::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| kfold_cv(black_box(&y), Some(&x), 5, &models, 3, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, tlnpn_fit, cross_validation);
criterion_main!(benches);
