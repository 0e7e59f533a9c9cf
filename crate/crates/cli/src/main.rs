//! `labelfix`: run the cleaning and self-training pipeline stage by stage.

mod artifacts;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use labelfix::active::{AuditLog, CorrectionStats, IterationSummary, NoisyOracle, Oracle};
use labelfix::experiments::{
    build_student, build_teacher, cleaning_state, split_data, student_stage_name, train_baseline, CleanPartition,
};
use labelfix::metrics::report_table;
use labelfix::selftrain::{evaluate_ensemble, evaluate_ensemble_noisy, pseudo_label};
use labelfix::util::derive_seed;
use labelfix::{
    compare_stages, correction_stats, dataset_hash, evaluate, generate_synthetic, load_manifest, manifest_config_tag,
    run_al_loop, save_manifest_tagged, trend_test, ALState, DataSplit, Dataset, Ensemble, EvaluationReport, LabelSet, OracleKind,
    RunConfig, ScriptedOracle, ToolCatalog,
};
use labelfix_service::{RunningService, Service, Session};
use serde::{Deserialize, Serialize};

use artifacts::*;

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Scripted,
    Noisy,
    Serve,
}

#[derive(Parser)]
#[command(name = "labelfix", version, about = "Noisy multi-label cleaning and self-training pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    oracle: Option<OracleArg>,
    /// Fine-tune the student with the class-balanced loader.
    #[arg(long, global = true)]
    wdl: bool,
    /// Train the student on smoothed clean targets with positive mass `p`.
    #[arg(long = "label-smoothing", global = true, value_name = "P")]
    label_smoothing: Option<f64>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Rerun stages even when their recorded inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset, or import `manifest`.
    Datagen,
    /// Group-aware train/test split.
    Split,
    /// Train the ensemble on the noisy training labels.
    Baseline,
    /// Run the active-learning cleaning loop.
    Al {
        /// Seconds to keep serving after the session finishes (`--oracle serve`).
        #[arg(long, default_value_t = 2.0)]
        linger_secs: f64,
    },
    /// Train the teacher on the cleaned subset.
    Teacher,
    /// Pseudo-label the uncleaned samples with the teacher.
    Pseudo,
    /// Train a student on pseudo plus clean labels.
    Student,
    /// Evaluate every trained stage on the test split, or a predictions file.
    Eval {
        /// JSON lines of `{"sample_id": .., "labels": [..]}` covering the test split.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Report name for `--predictions`.
        #[arg(long, default_value = "predictions")]
        name: String,
    },
    /// Stage comparison, effort trace and per-class correction tables.
    Report,
    /// Serve the cleaning loop to human annotators over HTTP.
    Serve {
        #[arg(long, default_value_t = 2.0)]
        linger_secs: f64,
    },
    /// Print the effective configuration.
    Config,
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    run: RunDir,
    force: bool,
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v).map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(o) = cli.oracle {
        cfg.oracle = match o {
            OracleArg::Scripted => OracleKind::Scripted,
            OracleArg::Noisy => OracleKind::Noisy,
            OracleArg::Serve => OracleKind::Serve,
        };
    }
    if cli.wdl {
        cfg.wdl = true;
    }
    if let Some(p) = cli.label_smoothing {
        cfg.label_smoothing = Some(p);
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn meta(ctx: &Ctx, stage: &str) -> BTreeMap<String, String> {
    BTreeMap::from([("stage".to_string(), stage.to_string()), ("config_hash".to_string(), ctx.hash.clone())])
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn load_ensemble(ctx: &Ctx, rel: &str) -> CliResult<Ensemble> {
    let (e, m) = Ensemble::load_checkpoint(&ctx.run.require(rel)?)?;
    if m.get("config_hash") != Some(&ctx.hash) {
        log::warn!("{rel} was produced under a different configuration");
    }
    Ok(e)
}

struct Data {
    dataset: Dataset,
    train: Dataset,
    test: Dataset,
}

fn load_data(ctx: &Ctx) -> CliResult<Data> {
    let dataset = load_manifest(&ctx.run.require(DATASET)?)?;
    let split = ctx.run.read_json::<SplitArtifact>(SPLIT)?.split;
    Ok(Data { train: dataset.subset(&split.train_ids)?, test: dataset.subset(&split.test_ids)?, dataset })
}

#[derive(Serialize, Deserialize)]
struct DatasetSummary {
    config_hash: String,
    dataset_hash: String,
    samples: usize,
    groups: usize,
    class_counts: Vec<usize>,
    noisy_frames: usize,
    noisy_fraction: f64,
    /// `1 - (1 - p_absent)^3`, exact when `p_spurious = 0`.
    closed_form_noisy_fraction: f64,
}

fn cmd_datagen(ctx: &Ctx) -> CliResult<()> {
    let inputs: Vec<String> = Vec::new();
    ctx.run.run_stage("datagen", &ctx.hash, &inputs, &strings(&[DATASET, SUMMARY]), ctx.force, || {
        let b = &ctx.cfg.benchmark;
        let ds = match &ctx.cfg.manifest {
            Some(p) => load_manifest(p)?,
            None => generate_synthetic(&b.noise, b.feature_dim, b.num_classes, ctx.cfg.seed)?,
        };
        save_manifest_tagged(&ds, &ctx.run.path(DATASET), &ctx.hash)?;
        let noisy = ds.samples().iter().filter(|s| s.assigned_labels != s.true_labels).count();
        let summary = DatasetSummary {
            config_hash: ctx.hash.clone(),
            dataset_hash: dataset_hash(&ds),
            samples: ds.len(),
            groups: ds.groups().len(),
            class_counts: labelfix::data::class_distribution(&ds),
            noisy_frames: noisy,
            noisy_fraction: ds.noisy_fraction(),
            closed_form_noisy_fraction: 1.0 - (1.0 - b.noise.p_absent).powi(3),
        };
        ctx.run.write_json(SUMMARY, &summary)?;
        println!(
            "datagen: {} samples in {} groups, {} noisy frames ({:.4}; closed form without spurious tools {:.4})",
            summary.samples, summary.groups, noisy, summary.noisy_fraction, summary.closed_form_noisy_fraction
        );
        Ok(())
    })?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SplitArtifact {
    config_hash: String,
    #[serde(flatten)]
    split: DataSplit,
}

fn cmd_split(ctx: &Ctx) -> CliResult<()> {
    ctx.run.run_stage("split", &ctx.hash, &strings(&[DATASET]), &strings(&[SPLIT]), ctx.force, || {
        let ds = load_manifest(&ctx.run.require(DATASET)?)?;
        let prepared = split_data(&ctx.cfg.benchmark, ds, ctx.cfg.seed)?;
        ctx.run.write_json(SPLIT, &SplitArtifact { config_hash: ctx.hash.clone(), split: prepared.split })?;
        println!("split: {} train, {} test", prepared.train.len(), prepared.test.len());
        Ok(())
    })?;
    Ok(())
}

fn cmd_baseline(ctx: &Ctx) -> CliResult<()> {
    ctx.run.run_stage("baseline", &ctx.hash, &strings(&[DATASET, SPLIT]), &strings(&[BASELINE]), ctx.force, || {
        let data = load_data(ctx)?;
        let e = train_baseline(&ctx.cfg.benchmark, &data.train, ctx.cfg.seed)?;
        e.save_checkpoint(&ctx.run.path(BASELINE), &meta(ctx, "baseline"))?;
        println!("baseline: trained on {} noisy samples", data.train.len());
        Ok(())
    })?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct AlArtifact {
    config_hash: String,
    oracle: String,
    clean_ids: Vec<u64>,
    clean_train_ids: Vec<u64>,
    clean_val_ids: Vec<u64>,
    corrections: Vec<(u64, LabelSet)>,
    effort: Vec<usize>,
    summaries: Vec<IterationSummary>,
    exhausted: bool,
    stats: CorrectionStats,
}

fn class_names(t: usize) -> Vec<String> {
    let catalog = match ToolCatalog::default_tools() {
        c if c.len() == t => c,
        _ => ToolCatalog::generic(t).expect("class count was validated"),
    };
    (0..t).map(|i| catalog.name(i).unwrap_or_default().to_string()).collect()
}

fn serve_loop(ctx: &Ctx, state: ALState, linger: f64) -> CliResult<ALState> {
    let names = class_names(state.base_dataset().num_classes());
    let ttl = Duration::from_secs(ctx.cfg.lease_ttl_secs);
    let session = Session::new(ctx.hash[..12].to_string(), names, state, ttl);
    let service = Service::new(session).map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))?;
    let running = RunningService::start(service, &ctx.cfg.serve_addr)
        .map_err(|e| Failure::Config(format!("cannot bind {}: {e}", ctx.cfg.serve_addr)))?;
    println!("listening on {}", running.url());
    std::io::stdout().flush()?;
    running.wait_until_done(None);
    std::thread::sleep(Duration::from_secs_f64(linger.max(0.0)));
    Ok(running.stop()?)
}

fn cmd_al(ctx: &Ctx, linger: f64) -> CliResult<()> {
    let inputs = strings(&[DATASET, SPLIT, BASELINE]);
    let outputs = strings(&[AL_ENSEMBLE, AL_STATE, EFFORT, AUDIT]);
    let stage_hash = format!("{}:{}:{}", ctx.hash, ctx.cfg.oracle.as_str(), ctx.cfg.oracle_flip_rate);
    ctx.run.run_stage("al", &stage_hash, &inputs, &outputs, ctx.force, || {
        let data = load_data(ctx)?;
        let baseline = load_ensemble(ctx, BASELINE)?;
        let audit = ctx.run.path(AUDIT);
        if audit.exists() {
            fs::remove_file(&audit)?;
        }
        let seed = ctx.cfg.seed;
        let mut state =
            cleaning_state(&ctx.cfg.benchmark, data.train, baseline, seed)?.with_audit_log(AuditLog::new(&audit));
        let mut oracle: Box<dyn Oracle> = match ctx.cfg.oracle {
            OracleKind::Scripted => Box::new(ScriptedOracle::new()),
            OracleKind::Noisy => Box::new(NoisyOracle::new(
                ctx.cfg.oracle_flip_rate,
                ctx.cfg.benchmark.num_classes,
                derive_seed(seed, 6),
            )?),
            OracleKind::Serve => Box::new(ScriptedOracle::new()),
        };
        if ctx.cfg.oracle == OracleKind::Serve {
            state = serve_loop(ctx, state, linger)?;
        } else {
            run_al_loop(&mut state, oracle.as_mut())?;
        }
        let (tr, val) = state.clean_split();
        let summaries = state.summaries().to_vec();
        let effort: Vec<usize> = summaries.iter().map(|s| s.changed).collect();
        let artifact = AlArtifact {
            config_hash: ctx.hash.clone(),
            oracle: ctx.cfg.oracle.as_str().to_string(),
            clean_ids: state.clean().ids().to_vec(),
            clean_train_ids: tr,
            clean_val_ids: val,
            corrections: state.corrections().iter().map(|(k, v)| (*k, *v)).collect(),
            exhausted: state.clean().len() < state.config().k_target && state.eligible() == 0,
            stats: correction_stats(state.records(), ctx.cfg.benchmark.num_classes),
            effort,
            summaries,
        };
        if artifact.exhausted {
            log::warn!("the training set ran out before the clean-set target was reached");
        }
        state.ensemble().save_checkpoint(&ctx.run.path(AL_ENSEMBLE), &meta(ctx, "al"))?;
        ctx.run.write_json(AL_STATE, &artifact)?;
        let mut csv = format!("# config={}\niteration,selected,changed,clean_size\n", ctx.hash);
        for s in &artifact.summaries {
            let _ = writeln!(csv, "{},{},{},{}", s.iteration, s.selected, s.changed, s.clean_size);
        }
        fs::write(ctx.run.path(EFFORT), csv)?;
        println!(
            "al: {} iterations, {} clean samples, effort {:?}",
            artifact.summaries.len(),
            artifact.clean_ids.len(),
            artifact.effort
        );
        Ok(())
    })?;
    Ok(())
}

fn clean_partition(ctx: &Ctx, train: &Dataset) -> CliResult<CleanPartition> {
    let al: AlArtifact = ctx.run.read_json(AL_STATE)?;
    let corrections: BTreeMap<u64, LabelSet> = al.corrections.into_iter().collect();
    let current = train.with_corrections(&corrections)?;
    let clean: BTreeSet<u64> = al.clean_ids.iter().copied().collect();
    let unclean: Vec<u64> = current.sample_ids().filter(|id| !clean.contains(id)).collect();
    Ok(CleanPartition {
        clean_train: current.subset(&al.clean_train_ids)?,
        clean_val: current.subset(&al.clean_val_ids)?,
        unclean: current.subset(&unclean)?,
    })
}

fn cmd_teacher(ctx: &Ctx) -> CliResult<()> {
    let inputs = strings(&[DATASET, SPLIT, AL_STATE, AL_ENSEMBLE]);
    ctx.run.run_stage("teacher", &ctx.hash, &inputs, &strings(&[TEACHER, TEACHER_VAL]), ctx.force, || {
        let data = load_data(ctx)?;
        let part = clean_partition(ctx, &data.train)?;
        let al = load_ensemble(ctx, AL_ENSEMBLE)?;
        let (teacher, val) = build_teacher(&ctx.cfg.benchmark, &part, &al, ctx.cfg.seed)?;
        teacher.save_checkpoint(&ctx.run.path(TEACHER), &meta(ctx, "teacher"))?;
        ctx.run.write_json(TEACHER_VAL, &StageReport { config_hash: ctx.hash.clone(), report: val.clone() })?;
        match val {
            Some(r) => println!("teacher: validation mAF1 {:.5} on {} clean samples", r.maf1, r.num_samples),
            None => println!("teacher: trained (no validation samples)"),
        }
        Ok(())
    })?;
    Ok(())
}

fn cmd_pseudo(ctx: &Ctx) -> CliResult<()> {
    let inputs = strings(&[DATASET, SPLIT, AL_STATE, TEACHER]);
    ctx.run.run_stage("pseudo", &ctx.hash, &inputs, &strings(&[PSEUDO]), ctx.force, || {
        let data = load_data(ctx)?;
        let part = clean_partition(ctx, &data.train)?;
        let teacher = load_ensemble(ctx, TEACHER)?;
        let pseudo = pseudo_label(&teacher, &part.unclean)?;
        save_manifest_tagged(&pseudo, &ctx.run.path(PSEUDO), &ctx.hash)?;
        println!("pseudo: {} samples relabeled", pseudo.len());
        Ok(())
    })?;
    Ok(())
}

fn cmd_student(ctx: &Ctx) -> CliResult<()> {
    let name = student_stage_name(ctx.cfg.label_smoothing.is_some(), ctx.cfg.wdl);
    let ckpt = format!("{name}.ckpt");
    let inputs = strings(&[DATASET, SPLIT, AL_STATE, TEACHER, PSEUDO]);
    // Student variants share the config hash, so fold the flags into the record.
    let stage_hash = format!("{}:{:?}:{}", ctx.hash, ctx.cfg.label_smoothing, ctx.cfg.wdl);
    ctx.run.run_stage(name, &stage_hash, &inputs, std::slice::from_ref(&ckpt), ctx.force, || {
        let data = load_data(ctx)?;
        let part = clean_partition(ctx, &data.train)?;
        let teacher = load_ensemble(ctx, TEACHER)?;
        let pseudo = load_manifest(&ctx.run.require(PSEUDO)?)?;
        let student = build_student(
            &ctx.cfg.benchmark,
            &pseudo,
            &part.clean_train,
            &teacher,
            ctx.cfg.label_smoothing,
            ctx.cfg.wdl,
            ctx.cfg.seed,
        )?;
        student.save_checkpoint(&ctx.run.path(&ckpt), &meta(ctx, name))?;
        println!("{name}: trained on {} pseudo + {} clean samples", pseudo.len(), part.clean_train.len());
        Ok(())
    })?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StageReport<T> {
    config_hash: String,
    report: T,
}

/// Checkpoints evaluated by `eval`, in ladder order.
const EVAL_STAGES: [(&str, &str); 7] = [
    (BASELINE, "noisy-baseline"),
    (AL_ENSEMBLE, "al-clean"),
    (TEACHER, "teacher"),
    ("student.ckpt", "student"),
    ("student-smooth.ckpt", "student-smooth"),
    ("student-wdl.ckpt", "student-wdl"),
    ("student-smooth-wdl.ckpt", "student-smooth-wdl"),
];

const NOISY_LABEL_STAGE: &str = "noisy-baseline-noisy-labels";

#[derive(Deserialize)]
struct PredictionLine {
    sample_id: u64,
    labels: LabelSet,
}

fn cmd_eval(ctx: &Ctx, predictions: Option<&PathBuf>, name: &str) -> CliResult<()> {
    let data = load_data(ctx)?;
    let hash = dataset_hash(&data.dataset);
    let t = data.dataset.num_classes();
    if let Some(path) = predictions {
        let text = fs::read_to_string(path).map_err(|e| Failure::Missing(format!("{}: {e}", path.display())))?;
        let mut preds = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let p: PredictionLine = serde_json::from_str(line)
                .map_err(|e| Failure::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
            if !p.labels.fits(t) {
                return Err(Failure::Config(format!("{} line {}: label id >= {t}", path.display(), i + 1)));
            }
            preds.insert(p.sample_id, p.labels);
        }
        let (mut ps, mut ys) = (Vec::new(), Vec::new());
        for s in data.test.samples() {
            let p = preds.get(&s.sample_id).ok_or_else(|| {
                Failure::Config(format!("{} has no prediction for test sample {}", path.display(), s.sample_id))
            })?;
            ps.push(*p);
            ys.push(s.true_labels);
        }
        let report = evaluate(&ps, &ys, t)?.with_stage(name).with_dataset_hash(hash);
        ctx.run.write_json(&format!("{REPORTS}/{name}.json"), &StageReport { config_hash: ctx.hash.clone(), report: report.clone() })?;
        print!("{}", report_table(&report, Some(&class_names(t))));
        return Ok(());
    }

    let present: Vec<(&str, &str)> = EVAL_STAGES.iter().copied().filter(|(f, _)| ctx.run.exists(f)).collect();
    if present.is_empty() {
        return Err(Failure::Missing("no trained stage found; run `labelfix baseline` first".into()));
    }
    let mut inputs = strings(&[DATASET, SPLIT]);
    inputs.extend(present.iter().map(|(f, _)| f.to_string()));
    let mut outputs: Vec<String> = present.iter().map(|(_, s)| format!("{REPORTS}/{s}.json")).collect();
    if present.iter().any(|(f, _)| *f == BASELINE) {
        outputs.push(format!("{REPORTS}/{NOISY_LABEL_STAGE}.json"));
    }
    ctx.run.run_stage("eval", &ctx.hash, &inputs, &outputs, ctx.force, || {
        for (file, stage) in &present {
            let e = load_ensemble(ctx, file)?;
            let report = evaluate_ensemble(&e, &data.test)?.with_stage(*stage).with_dataset_hash(hash.clone());
            println!("eval: {stage:<20} mAF1 {:.5}", report.maf1);
            ctx.run.write_json(&format!("{REPORTS}/{stage}.json"), &StageReport { config_hash: ctx.hash.clone(), report })?;
            if *file == BASELINE {
                let noisy = evaluate_ensemble_noisy(&e, &data.test)?.with_stage(NOISY_LABEL_STAGE).with_dataset_hash(hash.clone());
                println!("eval: {NOISY_LABEL_STAGE:<20} mAF1 {:.5}", noisy.maf1);
                ctx.run.write_json(
                    &format!("{REPORTS}/{NOISY_LABEL_STAGE}.json"),
                    &StageReport { config_hash: ctx.hash.clone(), report: noisy },
                )?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn cmd_report(ctx: &Ctx) -> CliResult<()> {
    let dir = ctx.run.path(REPORTS);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    if files.is_empty() {
        return Err(Failure::Missing(format!("no reports in {}; run `labelfix eval` first", dir.display())));
    }
    files.sort();
    let mut reports: BTreeMap<String, EvaluationReport> = BTreeMap::new();
    let mut hashes = BTreeSet::new();
    for f in &files {
        let r: StageReport<EvaluationReport> = serde_json::from_str(&fs::read_to_string(f)?)
            .map_err(|e| Failure::Other(anyhow::anyhow!("{}: {e}", f.display())))?;
        hashes.insert(r.config_hash);
        reports.insert(r.report.stage.clone(), r.report);
    }
    let al: Option<AlArtifact> = if ctx.run.exists(AL_STATE) { Some(ctx.run.read_json(AL_STATE)?) } else { None };
    if let Some(a) = &al {
        hashes.insert(a.config_hash.clone());
    }
    for m in [DATASET, PSEUDO] {
        if ctx.run.exists(m) {
            hashes.extend(manifest_config_tag(&ctx.run.path(m))?);
        }
    }
    if hashes.len() > 1 {
        return Err(Failure::Config(format!("artifacts come from different configurations: {hashes:?}")));
    }

    let mut ordered: Vec<EvaluationReport> = EVAL_STAGES
        .iter()
        .filter_map(|(_, s)| reports.remove(*s))
        .collect();
    let noisy = reports.remove(NOISY_LABEL_STAGE);
    ordered.extend(reports.into_values());

    let mut text = String::new();
    let _ = writeln!(text, "config {}", hashes.iter().next().expect("at least one report"));
    let _ = writeln!(text, "dataset {}\n", ordered.first().map(|r| r.dataset_hash.as_str()).unwrap_or("-"));
    text.push_str(&compare_stages(&ordered).to_table());
    if let Some(n) = &noisy {
        let _ = writeln!(text, "\nnoisy-baseline against noisy test labels: mAP {:.5} mAR {:.5} mAA {:.5} mAF1 {:.5}", n.map, n.mar, n.maa, n.maf1);
    }
    if let Some(a) = &al {
        let _ = writeln!(text, "\neffort per iteration: {:?}", a.effort);
        let trace: Vec<f64> = a.effort.iter().map(|&c| c as f64).collect();
        match trend_test(&trace) {
            Ok(t) => {
                let _ = writeln!(text, "effort slope {:.4} ({})", t.slope, if t.pass { "declining" } else { "not declining" });
                ctx.run.write_json("trend.json", &StageReport { config_hash: ctx.hash.clone(), report: t })?;
            }
            Err(e) => {
                let _ = writeln!(text, "effort slope unavailable: {e}");
            }
        }
        let names = class_names(a.stats.per_class.len());
        let mut csv = format!("# config={}\nclass,name,corrected,reviewed,rate,share\n", ctx.hash);
        let _ = writeln!(text, "\n{:<4} {:<26} {:>9} {:>9} {:>8} {:>8}", "id", "tool", "corrected", "reviewed", "rate", "share");
        for c in &a.stats.per_class {
            let _ = writeln!(csv, "{},{},{},{},{},{}", c.class, names[c.class], c.corrected, c.reviewed, c.rate, c.share);
            let _ = writeln!(
                text,
                "{:<4} {:<26} {:>9} {:>9} {:>8.4} {:>8.4}",
                c.class, names[c.class], c.corrected, c.reviewed, c.rate, c.share
            );
        }
        fs::write(ctx.run.path("corrections.csv"), csv)?;
        let mut effort = format!("# config={}\niteration,reviewed,changed\n", ctx.hash);
        for it in &a.stats.per_iteration {
            let _ = writeln!(effort, "{},{},{}", it.iteration, it.reviewed, it.changed);
        }
        fs::write(ctx.run.path("effort.csv"), effort)?;
    }
    fs::write(ctx.run.path("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let ctx = Ctx { hash: cfg.config_hash(), run: RunDir::new(&cfg.out)?, cfg, force: cli.force };
    fs::write(ctx.run.path("run.cfg"), ctx.cfg.to_text())?;
    match &cli.command {
        Command::Datagen => cmd_datagen(&ctx),
        Command::Split => cmd_split(&ctx),
        Command::Baseline => cmd_baseline(&ctx),
        Command::Al { linger_secs } => cmd_al(&ctx, *linger_secs),
        Command::Teacher => cmd_teacher(&ctx),
        Command::Pseudo => cmd_pseudo(&ctx),
        Command::Student => cmd_student(&ctx),
        Command::Eval { predictions, name } => cmd_eval(&ctx, predictions.as_ref(), name),
        Command::Report => cmd_report(&ctx),
        Command::Serve { linger_secs } => {
            let mut served = ctx;
            served.cfg.oracle = OracleKind::Serve;
            cmd_al(&served, *linger_secs)
        }
        Command::Config => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("labelfix: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
