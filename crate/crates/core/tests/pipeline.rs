use idtw::abstraction::Representation;
use idtw::gbr::InterpolationMethod;
use idtw::harness::report::parse_results_csv;
use idtw::harness::runner::{AGGREGATE_FILE, CHECKPOINT_FILE, METRICS_FILE, RESULTS_FILE};
use idtw::harness::{
    generate_synthetic, run_cv, run_grid, write_reports, Cohort, Dataset, GridOptions, GridSpec, KSpec, MatchConfig,
    SynthSpec,
};
use idtw::imatch::BandPolicy;
use idtw::kb::{bundled, DurationDelegate};

fn config(reps: &[Representation], concepts: &[&str], k: usize, spec: &GridSpec) -> MatchConfig {
    MatchConfig {
        id: 0,
        group: 0,
        concepts: concepts.iter().map(|s| s.to_string()).collect(),
        representations: reps.to_vec(),
        interpolation: InterpolationMethod::Linear,
        duration_delegate: DurationDelegate::Mtt,
        band: BandPolicy::SakoeChibaPercent(10.0),
        k,
        timeline: spec.timeline.clone(),
        granularity: spec.granularity,
    }
}

#[test]
fn identical_entities_carry_no_signal() {
    let mut text = String::new();
    let mut labels = String::new();
    let mut events = String::new();
    for i in 0..20 {
        for (d, v) in [(0, 6.0), (2, 9.0), (5, 13.0), (7, 8.0)] {
            text.push_str(&format!("e{i:02},WBC,{},{v}\n", d * 1440));
        }
        labels.push_str(&format!("e{i:02},{}\n", if i % 2 == 0 { "x" } else { "y" }));
        events.push_str(&format!("e{i:02},ADMISSION,0\n"));
    }
    let mut ds = Dataset::parse_data("d", &text).unwrap();
    ds.add_labels("l", &labels).unwrap();
    ds.add_events("e", &events).unwrap();
    let mut exp = SynthSpec::separable().experiment();
    exp.concepts = vec!["WBC".into()];
    exp.max_concepts = 1;
    let cohort = Cohort::prepare(&ds, &bundled::oncology(), &exp).unwrap();
    let spec = GridSpec::from_experiment(&exp, cohort.len());
    for reps in [Representation::State, Representation::Raw] {
        let r = run_cv(&cohort, &config(&[reps], &["WBC"], 3, &spec), 10, 5).unwrap();
        assert_eq!(r.mean_auc, 0.5, "{reps}");
    }
}

#[test]
fn separable_cohort_is_classified_and_repeatable() {
    let synth = generate_synthetic(&SynthSpec::separable(), 60, 3).unwrap();
    let cohort = Cohort::prepare(&synth.dataset, &synth.kb, &synth.experiment).unwrap();
    assert!(cohort.excluded.is_empty(), "{:?}", cohort.excluded);
    let spec = GridSpec::from_experiment(&synth.experiment, cohort.len());
    let state = config(&[Representation::State; 2], &["WBC", "HGB"], 5, &spec);
    let a = run_cv(&cohort, &state, 10, 1).unwrap();
    assert!(a.mean_auc >= 0.9, "{}", a.mean_auc);
    assert_eq!(a, run_cv(&cohort, &state, 10, 1).unwrap());
    let raw = config(&[Representation::Raw; 2], &["WBC", "HGB"], 5, &spec);
    assert!(run_cv(&cohort, &raw, 10, 1).unwrap().mean_auc.is_finite());
    let too_many = config(&[Representation::State; 2], &["WBC", "HGB"], 61, &spec);
    assert!(run_cv(&cohort, &too_many, 10, 1).is_err());
}

fn small_grid() -> (Cohort, Vec<MatchConfig>) {
    let synth = generate_synthetic(&SynthSpec::separable().with_noise_scale(3.0), 40, 9).unwrap();
    let mut exp = synth.experiment.clone();
    exp.interpolations = vec![InterpolationMethod::NearestNeighbor];
    exp.bands = vec![BandPolicy::SakoeChibaPercent(10.0)];
    exp.k = KSpec::List(vec![1, 3]);
    let cohort = Cohort::prepare(&synth.dataset, &synth.kb, &exp).unwrap();
    let configs = GridSpec::from_experiment(&exp, cohort.len()).enumerate();
    (cohort, configs)
}

fn read_reports(dir: &std::path::Path) -> Vec<Vec<u8>> {
    [METRICS_FILE, RESULTS_FILE, AGGREGATE_FILE]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn grid_reports_are_identical_across_workers_and_resume() {
    let (cohort, configs) = small_grid();
    assert_eq!(configs.len(), 18 * 2 * 2);
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 4] {
        let dir = tmp.path().join(format!("w{workers}"));
        std::fs::create_dir_all(&dir).unwrap();
        let opts = GridOptions {
            seed: 17,
            workers,
            checkpoint: Some(dir.join(CHECKPOINT_FILE)),
            ..GridOptions::default()
        };
        let results = run_grid(&cohort, &configs, &opts).unwrap();
        write_reports(&dir, &cohort, &configs, &results).unwrap();
        outputs.push(read_reports(&dir));
    }
    assert_eq!(outputs[0], outputs[1]);

    // Drop the last half of the checkpoint and resume from what is left.
    let dir = tmp.path().join("w4");
    let ckpt = dir.join(CHECKPOINT_FILE);
    let text = std::fs::read_to_string(&ckpt).unwrap();
    let keep: Vec<&str> = text.lines().take(text.lines().count() / 2).collect();
    std::fs::write(&ckpt, format!("{}\n7,1,0.5", keep.join("\n"))).unwrap();
    let opts = GridOptions {
        seed: 17,
        workers: 2,
        checkpoint: Some(ckpt.clone()),
        resume: true,
        ..GridOptions::default()
    };
    let results = run_grid(&cohort, &configs, &opts).unwrap();
    write_reports(&dir, &cohort, &configs, &results).unwrap();
    assert_eq!(read_reports(&dir), outputs[0]);

    // A checkpoint for other inputs is refused.
    let other = GridOptions { seed: 18, ..opts };
    assert!(run_grid(&cohort, &configs, &other).is_err());

    let rows = parse_results_csv("results", &String::from_utf8(outputs[0][1].clone()).unwrap()).unwrap();
    assert_eq!(rows.len(), configs.len());
    let dups = rows.iter().filter(|r| r.duplicate_of.is_some()).count();
    assert_eq!(dups, 3 * 2);
}
