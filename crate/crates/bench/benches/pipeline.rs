use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use idtw::abstraction::Representation;
use idtw::gbr::InterpolationMethod;
use idtw::harness::{generate_synthetic, run_cv, Cohort, GridSpec, MatchConfig, SynthSpec};
use idtw::imatch::BandPolicy;
use idtw::kb::DurationDelegate;

fn config(spec: &GridSpec, rep: Representation, interpolation: InterpolationMethod) -> MatchConfig {
    MatchConfig {
        id: 0,
        group: 0,
        concepts: vec!["WBC".into(), "HGB".into()],
        representations: vec![rep; 2],
        interpolation,
        duration_delegate: DurationDelegate::Mtt,
        band: BandPolicy::SakoeChibaPercent(10.0),
        k: 5,
        timeline: spec.timeline.clone(),
        granularity: spec.granularity,
    }
}

fn pipeline(c: &mut Criterion) {
    let synth = generate_synthetic(&SynthSpec::separable(), 100, 1).unwrap();
    c.bench_function("prepare_cohort_100", |b| {
        b.iter(|| Cohort::prepare(black_box(&synth.dataset), &synth.kb, &synth.experiment).unwrap())
    });

    let cohort = Cohort::prepare(&synth.dataset, &synth.kb, &synth.experiment).unwrap();
    let spec = GridSpec::from_experiment(&synth.experiment, cohort.len());
    for (name, interp) in [("linear", InterpolationMethod::Linear), ("ibap", InterpolationMethod::Ibap)] {
        let cfg = config(&spec, Representation::StateAndGradient, interp);
        c.bench_function(&format!("event_table_sg_{name}"), |b| {
            b.iter(|| cohort.event_table(black_box(0), &cfg, None).unwrap())
        });
    }

    let mut group = c.benchmark_group("cv_10fold_100");
    group.sample_size(10);
    for rep in [Representation::State, Representation::Raw] {
        let cfg = config(&spec, rep, InterpolationMethod::Linear);
        group.bench_function(rep.to_string(), |b| b.iter(|| run_cv(&cohort, &cfg, 10, 0).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
