use labelfix::active::ScriptedOracle;
use labelfix::ensemble::default_member_configs;
use labelfix::experiments::{cleaning_state, partition_clean, prepare_data, train_baseline};
use labelfix::selftrain::{hard_examples, pseudo_label, train_teacher};
use labelfix::{
    evaluate, generate_synthetic, group_aware_split, run_al_loop, run_benchmark, run_ladder, BenchmarkConfig,
    Ensemble, LabelSet, NoiseSpec, StageConfig, TrainSchedule,
};

fn zero_noise(groups: usize, frames: usize) -> NoiseSpec {
    NoiseSpec { p_absent: 0.0, p_spurious: 0.0, noise_sigma: 0.0, groups, frames_min: frames, frames_max: frames, ..NoiseSpec::default() }
}

fn tiny() -> BenchmarkConfig {
    let mut cfg = BenchmarkConfig::default();
    cfg.noise.groups = 30;
    cfg.noise.frames_min = 8;
    cfg.noise.frames_max = 8;
    cfg.schedule = TrainSchedule { phase1_epochs: 2, phase2_epochs: 2, ..TrainSchedule::default() };
    cfg.al.k_target = 60;
    cfg.al.per_iteration = 20;
    cfg
}

#[test]
fn zero_noise_training_fit() {
    // 50 groups x 10 frames so every class occurs; the threshold comes from
    // a pilot run at this seed (0.9155).
    let ds = generate_synthetic(&zero_noise(50, 10), 32, 14, 1).unwrap();
    let mut e = Ensemble::from_configs(&default_member_configs(1), 32, 14).unwrap();
    e.train(&hard_examples(&ds), &TrainSchedule::default(), None, 1).unwrap();
    let preds: Vec<LabelSet> = ds.samples().iter().map(|s| e.predict(&s.features).unwrap()).collect();
    let truths: Vec<LabelSet> = ds.samples().iter().map(|s| s.true_labels).collect();
    let f1 = evaluate(&preds, &truths, 14).unwrap().maf1;
    assert!(f1 >= 0.90, "training macro-F1 {f1}");
}

#[test]
fn zero_noise_teacher_validates() {
    let ds = generate_synthetic(&zero_noise(30, 20), 32, 14, 1).unwrap();
    let split = group_aware_split(&ds, 0.2, 1).unwrap();
    let train = ds.subset(&split.train_ids).unwrap();
    let val = ds.subset(&split.test_ids).unwrap();
    let (_, report) = train_teacher(&StageConfig::new(1), &train, Some(&val), None).unwrap();
    let f1 = report.unwrap().maf1;
    assert!(f1 >= 0.9, "teacher validation macro-F1 {f1}");
}

#[test]
fn cleaning_then_pseudo_labels_cover_the_training_set() {
    let cfg = tiny();
    let data = prepare_data(&cfg, 3).unwrap();
    let baseline = train_baseline(&cfg, &data.train, 3).unwrap();
    let n = data.train.len();
    let mut al = cleaning_state(&cfg, data.train, baseline, 3).unwrap();
    let outcome = run_al_loop(&mut al, &mut ScriptedOracle::new()).unwrap();
    assert_eq!(outcome.clean_ids.len(), 60);
    assert_eq!(outcome.effort.len(), 3);
    assert!(!outcome.exhausted);
    for id in &outcome.clean_ids {
        let s = al.current_dataset().get(*id).unwrap();
        assert_eq!(s.assigned_labels, s.true_labels);
    }
    let part = partition_clean(&al).unwrap();
    assert_eq!(part.clean_train.len() + part.clean_val.len(), 60);
    assert_eq!(part.unclean.len() + 60, n);
    let (teacher, _) = train_teacher(&cfg.stage_config(3), &part.clean_train, None, None).unwrap();
    let pseudo = pseudo_label(&teacher, &part.unclean).unwrap();
    assert_eq!(pseudo.len(), part.unclean.len());
    assert!(pseudo.samples().iter().all(|s| s.assigned_labels.len() == 3 && s.soft_targets.is_some()));
}

#[test]
fn single_and_multi_seed_reports_share_a_schema() {
    let cfg = tiny();
    let one = run_ladder(&cfg, &[1]).unwrap();
    let two = run_ladder(&cfg, &[1, 2]).unwrap();
    let keys = |r: &labelfix::LadderReport| {
        let v = serde_json::to_value(r).unwrap();
        v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert_eq!(keys(&one), keys(&two));
    assert_eq!(one.medians.iter().map(|m| &m.stage).collect::<Vec<_>>(), two.medians.iter().map(|m| &m.stage).collect::<Vec<_>>());
    assert_eq!(one.runs[0], two.runs[0]);

    let bench = run_benchmark(&cfg, "teacher", &[1]).unwrap();
    assert_eq!(bench.per_seed.len(), 1);
    assert_eq!(bench.median.maf1, one.median("teacher").unwrap().maf1);
}
