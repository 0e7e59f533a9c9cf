//! Runs the benchmark ladder and prints the stage tables.
//!
//! `cargo run --release -p labelfix --example ladder -- 1 2 3 [key=value ...]`
//! where keys are top-level `BenchmarkConfig` fields given as JSON values.

use labelfix::{run_ladder, BenchmarkConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut seeds = Vec::new();
    let mut cfg = serde_json::to_value(BenchmarkConfig::default())?;
    for arg in std::env::args().skip(1) {
        match arg.split_once('=') {
            Some((path, value)) => {
                let mut slot = &mut cfg;
                for key in path.split('.') {
                    slot = slot.get_mut(key).ok_or_else(|| format!("unknown key {path}"))?;
                }
                *slot = serde_json::from_str(value)?;
            }
            None => seeds.push(arg.parse()?),
        }
    }
    if seeds.is_empty() {
        seeds = vec![1, 2, 3];
    }
    let cfg: BenchmarkConfig = serde_json::from_value(cfg)?;
    let started = std::time::Instant::now();
    let report = run_ladder(&cfg, &seeds)?;
    print!("{}", report.to_text());
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
