//! The desk-scale benchmark ladder and the statistics checked against it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::active::{correction_stats, run_al_loop, ALConfig, ALState, CorrectionStats, ScriptedOracle};
use crate::data::{generate_synthetic, Dataset, NoiseSpec};
use crate::ensemble::{default_member_configs, Ensemble};
use crate::error::{Error, Result};
use crate::manifest::dataset_hash;
use crate::metrics::{compare_stages, EvaluationReport, StageComparison};
use crate::selftrain::{
    evaluate_ensemble, evaluate_ensemble_noisy, hard_examples, pseudo_label, train_student, train_teacher,
    unclean_ids, PseudoTargetMode, StageConfig,
};
use crate::sampling::WeightReduction;
use crate::split::{group_aware_split, DataSplit};
use crate::train::TrainSchedule;
use crate::util::{derive_seed, median};

pub const STAGES: [&str; 6] = ["noisy-baseline", "al-clean", "teacher", "student", "student-smooth", "student-wdl"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub noise: NoiseSpec,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub test_fraction: f64,
    pub schedule: TrainSchedule,
    pub al: ALConfig,
    pub smoothing_p: f64,
    pub finetune: TrainSchedule,
    pub weight_reduction: WeightReduction,
    pub pseudo_mode: PseudoTargetMode,
    pub warm_start: bool,
    /// Start the teacher from the ensemble left by the cleaning loop.
    pub teacher_warm_start: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            noise: NoiseSpec::default(),
            feature_dim: 32,
            num_classes: 14,
            test_fraction: 0.2,
            schedule: TrainSchedule::default(),
            al: ALConfig::default(),
            smoothing_p: 0.9,
            finetune: TrainSchedule::constant(3, 1e-2 / 4.0, 64),
            weight_reduction: WeightReduction::Mean,
            pseudo_mode: PseudoTargetMode::Soft,
            warm_start: true,
            teacher_warm_start: true,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.schedule.validate()?;
        self.finetune.validate()?;
        self.al.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must be in (0, 1)"));
        }
        if !(self.smoothing_p > 0.5 && self.smoothing_p <= 1.0) {
            return Err(Error::InvalidSmoothing(format!("p must be in (0.5, 1], got {}", self.smoothing_p)));
        }
        Ok(())
    }

    pub fn stage_config(&self, seed: u64) -> StageConfig {
        StageConfig {
            member_configs: default_member_configs(derive_seed(seed, 3)),
            schedule: self.schedule.clone(),
            finetune: self.finetune.clone(),
            weight_reduction: self.weight_reduction,
            pseudo_mode: self.pseudo_mode,
            warm_start: self.warm_start,
            ..StageConfig::new(derive_seed(seed, 4))
        }
    }
}

/// Everything one seed of the ladder produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRun {
    pub seed: u64,
    pub dataset_hash: String,
    /// Clean-test reports in [`STAGES`] order.
    pub stages: Vec<EvaluationReport>,
    /// The baseline scored against the noisy test labels.
    pub baseline_noisy: EvaluationReport,
    pub teacher_validation: Option<EvaluationReport>,
    pub effort: Vec<usize>,
    pub corrections: CorrectionStats,
}

impl LadderRun {
    pub fn stage(&self, name: &str) -> Option<&EvaluationReport> {
        self.stages.iter().find(|r| r.stage == name)
    }
}

/// Synthetic dataset with its group-aware split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub split: DataSplit,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare_data(cfg: &BenchmarkConfig, seed: u64) -> Result<PreparedData> {
    cfg.validate()?;
    let dataset = generate_synthetic(&cfg.noise, cfg.feature_dim, cfg.num_classes, seed)?;
    split_data(cfg, dataset, seed)
}

pub fn split_data(cfg: &BenchmarkConfig, dataset: Dataset, seed: u64) -> Result<PreparedData> {
    let split = group_aware_split(&dataset, cfg.test_fraction, derive_seed(seed, 1))?;
    let train = dataset.subset(&split.train_ids)?;
    let test = dataset.subset(&split.test_ids)?;
    Ok(PreparedData { dataset, split, train, test })
}

/// Ensemble trained directly on the noisy training labels.
pub fn train_baseline(cfg: &BenchmarkConfig, train: &Dataset, seed: u64) -> Result<Ensemble> {
    let sc = cfg.stage_config(seed);
    let mut e = Ensemble::from_configs(&sc.member_configs, train.feature_dim(), train.num_classes())?;
    e.train(&hard_examples(train), &cfg.schedule, None, derive_seed(seed, 2))?;
    Ok(e)
}

/// Cleaning-loop state seeded with the baseline.
pub fn cleaning_state(cfg: &BenchmarkConfig, train: Dataset, baseline: Ensemble, seed: u64) -> Result<ALState> {
    let sc = cfg.stage_config(seed);
    ALState::new(train, baseline, sc.member_configs, cfg.schedule.clone(), cfg.al.clone(), derive_seed(seed, 5))
}

/// Clean train/validation sets and the remaining unclean samples after cleaning.
pub struct CleanPartition {
    pub clean_train: Dataset,
    pub clean_val: Dataset,
    pub unclean: Dataset,
}

pub fn partition_clean(al: &ALState) -> Result<CleanPartition> {
    let (tr_ids, val_ids) = al.clean_split();
    let current = al.current_dataset();
    Ok(CleanPartition {
        clean_train: current.subset(&tr_ids)?,
        clean_val: current.subset(&val_ids)?,
        unclean: current.subset(&unclean_ids(current, al.clean().ids()))?,
    })
}

pub fn build_teacher(
    cfg: &BenchmarkConfig,
    part: &CleanPartition,
    al_ensemble: &Ensemble,
    seed: u64,
) -> Result<(Ensemble, Option<EvaluationReport>)> {
    train_teacher(
        &cfg.stage_config(seed),
        &part.clean_train,
        Some(&part.clean_val),
        cfg.teacher_warm_start.then_some(al_ensemble),
    )
}

/// Stage name of a student variant.
pub fn student_stage_name(smoothing: bool, wdl: bool) -> &'static str {
    match (smoothing, wdl) {
        (false, false) => "student",
        (true, false) => "student-smooth",
        (false, true) => "student-wdl",
        (true, true) => "student-smooth-wdl",
    }
}

pub fn build_student(
    cfg: &BenchmarkConfig,
    pseudo: &Dataset,
    clean_train: &Dataset,
    teacher: &Ensemble,
    smoothing: Option<f64>,
    wdl: bool,
    seed: u64,
) -> Result<Ensemble> {
    let sc = StageConfig { label_smoothing: smoothing, use_weighted_loader: wdl, ..cfg.stage_config(seed) };
    train_student(&sc, pseudo, clean_train, Some(teacher))
}

/// Runs every stage for one seed.
pub fn run_ladder_seed(cfg: &BenchmarkConfig, seed: u64) -> Result<LadderRun> {
    let data = prepare_data(cfg, seed)?;
    let hash = dataset_hash(&data.dataset);
    let test = &data.test;

    let baseline = train_baseline(cfg, &data.train, seed)?;
    let mut stages = vec![evaluate_ensemble(&baseline, test)?.with_stage(STAGES[0])];
    let baseline_noisy = evaluate_ensemble_noisy(&baseline, test)?.with_stage("noisy-baseline/noisy-labels");

    let mut al = cleaning_state(cfg, data.train, baseline, seed)?;
    let outcome = run_al_loop(&mut al, &mut ScriptedOracle::new())?;
    stages.push(evaluate_ensemble(al.ensemble(), test)?.with_stage(STAGES[1]));
    let corrections = correction_stats(al.records(), cfg.num_classes);

    let part = partition_clean(&al)?;
    let (teacher, teacher_validation) = build_teacher(cfg, &part, al.ensemble(), seed)?;
    stages.push(evaluate_ensemble(&teacher, test)?.with_stage(STAGES[2]));

    let pseudo = pseudo_label(&teacher, &part.unclean)?;
    for (smoothing, wdl) in [(None, false), (Some(cfg.smoothing_p), false), (None, true)] {
        let student = build_student(cfg, &pseudo, &part.clean_train, &teacher, smoothing, wdl, seed)?;
        stages.push(evaluate_ensemble(&student, test)?.with_stage(student_stage_name(smoothing.is_some(), wdl)));
    }
    for r in &mut stages {
        r.dataset_hash = hash.clone();
    }
    Ok(LadderRun {
        seed,
        dataset_hash: hash,
        stages,
        baseline_noisy,
        teacher_validation,
        effort: outcome.effort,
        corrections,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub stage: String,
    pub map: f64,
    pub mar: f64,
    pub maa: f64,
    pub maf1: f64,
}

fn median_row(stage: &str, reports: &[&EvaluationReport]) -> MedianRow {
    let m = |f: fn(&EvaluationReport) -> f64| median(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    MedianRow { stage: stage.to_string(), map: m(|r| r.map), mar: m(|r| r.mar), maa: m(|r| r.maa), maf1: m(|r| r.maf1) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<LadderRun>,
    pub medians: Vec<MedianRow>,
    pub baseline_noisy_median: MedianRow,
    pub effort_slopes: Vec<f64>,
    pub median_effort_slope: f64,
}

impl LadderReport {
    pub fn median(&self, stage: &str) -> Option<&MedianRow> {
        self.medians.iter().find(|r| r.stage == stage)
    }

    /// Stage table for one seed with deltas against the baseline.
    pub fn comparison(&self, seed_index: usize) -> Option<StageComparison> {
        self.runs.get(seed_index).map(|r| compare_stages(&r.stages))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seeds: {:?}", self.seeds);
        let _ = writeln!(out, "{:<32} {:>9} {:>9} {:>9} {:>9}", "median (clean test)", "mAP", "mAR", "mAA", "mAF1");
        for r in self.medians.iter().chain(std::iter::once(&self.baseline_noisy_median)) {
            let _ = writeln!(out, "{:<32} {:>9.5} {:>9.5} {:>9.5} {:>9.5}", r.stage, r.map, r.mar, r.maa, r.maf1);
        }
        for run in &self.runs {
            let _ = writeln!(out, "\nseed {} dataset {}", run.seed, run.dataset_hash);
            out.push_str(&compare_stages(&run.stages).to_table());
            let _ = writeln!(out, "effort: {:?}", run.effort);
        }
        let _ = writeln!(out, "\neffort slopes: {:?}  median {:.6}", self.effort_slopes, self.median_effort_slope);
        out
    }
}

pub fn run_ladder(cfg: &BenchmarkConfig, seeds: &[u64]) -> Result<LadderReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let runs = seeds.iter().map(|&s| run_ladder_seed(cfg, s)).collect::<Result<Vec<_>>>()?;
    let medians = STAGES
        .iter()
        .map(|&name| median_row(name, &runs.iter().map(|r| r.stage(name).expect("every stage is run")).collect::<Vec<_>>()))
        .collect();
    let baseline_noisy_median =
        median_row("noisy-baseline/noisy-labels", &runs.iter().map(|r| &r.baseline_noisy).collect::<Vec<_>>());
    let effort_slopes = runs
        .iter()
        .map(|r| {
            let trace: Vec<f64> = r.effort.iter().map(|&c| c as f64).collect();
            trend_test(&trace).map(|t| t.slope).unwrap_or(f64::NAN)
        })
        .collect::<Vec<_>>();
    let median_effort_slope = median(&effort_slopes);
    Ok(LadderReport { seeds: seeds.to_vec(), runs, medians, baseline_noisy_median, effort_slopes, median_effort_slope })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub name: String,
    pub per_seed: Vec<EvaluationReport>,
    pub median: MedianRow,
}

/// Runs the ladder and keeps the named stage.
pub fn run_benchmark(cfg: &BenchmarkConfig, name: &str, seeds: &[u64]) -> Result<BenchmarkReport> {
    if !STAGES.contains(&name) {
        return Err(Error::invalid(format!("unknown benchmark {name:?}; expected one of {STAGES:?}")));
    }
    let ladder = run_ladder(cfg, seeds)?;
    let per_seed: Vec<EvaluationReport> = ladder.runs.iter().map(|r| r.stage(name).cloned().expect("stage exists")).collect();
    let median = median_row(name, &per_seed.iter().collect::<Vec<_>>());
    Ok(BenchmarkReport { name: name.to_string(), per_seed, median })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub slope: f64,
    pub pass: bool,
}

/// Least-squares slope of the trace against its iteration index; passes
/// when negative.
pub fn trend_test(trace: &[f64]) -> Result<TrendResult> {
    if trace.len() < 3 {
        return Err(Error::invalid(format!("a trend needs at least 3 points, got {}", trace.len())));
    }
    let n = trace.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = trace.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in trace.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(TrendResult { slope, pass: slope < 0.0 })
}
