//! Scripted annotator: drains the queue, advances, repeats.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use labelfix::load_manifest;
use labelfix_service::{Client, Policy};

#[derive(Clone, Copy, ValueEnum)]
enum Answer {
    /// Submit the suggested labels.
    Accept,
    /// Confirm the current labels.
    Keep,
    /// Answer with the true labels from a manifest.
    Truth,
}

#[derive(Parser)]
#[command(about = "Headless annotator for the labelfix annotation service")]
struct Args {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, default_value = "scripted")]
    annotator: String,
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "accept")]
    answer: Answer,
    /// Manifest holding true labels, required by `--answer truth`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let policy = match args.answer {
        Answer::Accept => Policy::AcceptSuggestion,
        Answer::Keep => Policy::KeepCurrent,
        Answer::Truth => {
            let Some(path) = &args.manifest else {
                eprintln!("--answer truth needs --manifest");
                return ExitCode::from(2);
            };
            match load_manifest(path) {
                Ok(ds) => Policy::Truth(ds.samples().iter().map(|s| (s.sample_id, s.true_labels)).collect::<BTreeMap<_, _>>()),
                Err(e) => {
                    eprintln!("cannot read {}: {e}", path.display());
                    return ExitCode::from(3);
                }
            }
        }
    };
    let client = Client::new(&args.url);
    match client.run(&args.annotator, &policy, args.iterations).and_then(|_| client.progress()) {
        Ok(p) => {
            println!("{}", serde_json::to_string_pretty(&p).expect("progress serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
