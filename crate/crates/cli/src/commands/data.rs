//! Snapshot ingestion, validation, synthetic generation, and full runs.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;
use veblen::ingest::{load_snapshot, write_snapshot_dir, EmbeddingsFormat, SnapshotSource};
use veblen::model::ValidationReport;
use veblen::pipeline::{RunConfig, SourceConfig, SourceOrigin};
use veblen::synth::{generate_market, SynthConfig};

use crate::context::{exit_for, parse_config_file, run_stages, CliError, Ctx};

const MAX_PRINTED_VIOLATIONS: usize = 20;

pub fn ingest(ctx: &Ctx, source: &Path, max_supply_filter: u64) -> Result<ExitCode, CliError> {
    let mut config = ctx.run_config();
    config.stages = vec!["ingest".to_string()];
    config.source = SourceConfig {
        origin: SourceOrigin::Directory,
        location: source.display().to_string(),
        max_supply_filter: Some(max_supply_filter),
    };
    Ok(exit_for(&run_stages(&config)?))
}

pub fn fetch(ctx: &Ctx, url: &str, max_supply_filter: u64) -> Result<ExitCode, CliError> {
    let mut config = ctx.run_config();
    config.stages = vec!["ingest".to_string()];
    config.source = SourceConfig {
        origin: SourceOrigin::Http,
        location: url.to_string(),
        max_supply_filter: Some(max_supply_filter),
    };
    Ok(exit_for(&run_stages(&config)?))
}

#[derive(Serialize)]
struct ValidationArtifact<'a> {
    valid: bool,
    rejected_lines: usize,
    report: &'a ValidationReport,
}

pub fn validate(ctx: &Ctx, source: &Path) -> Result<ExitCode, CliError> {
    // validation judges what is on disk, so no supply filter
    let src = SnapshotSource {
        max_supply_filter: None,
        ..SnapshotSource::directory(source.display().to_string())
    };
    let loaded = load_snapshot(&src)?;
    for table in &loaded.rejects {
        println!("rejected {} malformed lines from {:?}", table.lines.len(), table.kind);
    }
    let report = &loaded.validation;
    for violation in report.violations.iter().take(MAX_PRINTED_VIOLATIONS) {
        println!(
            "violation {:?} at {}: {}",
            violation.kind, violation.locator, violation.detail
        );
    }
    if report.violations.len() > MAX_PRINTED_VIOLATIONS {
        println!(
            "... and {} more violations",
            report.violations.len() - MAX_PRINTED_VIOLATIONS
        );
    }
    ctx.write_json(
        "validation.json",
        &ValidationArtifact {
            valid: report.is_valid(),
            rejected_lines: loaded.reject_count(),
            report,
        },
    )?;
    if report.is_valid() {
        println!(
            "snapshot valid: {} collections, {} holdings, {} trait records, {} transactions, {} embeddings",
            loaded.snapshot.collections.len(),
            loaded.snapshot.holdings.len(),
            loaded.snapshot.traits.len(),
            loaded.snapshot.transactions.len(),
            loaded.snapshot.embeddings.len(),
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!("snapshot INVALID: {} violations", report.violations.len());
        Ok(ExitCode::FAILURE)
    }
}

pub fn synth_generate(ctx: &Ctx, config_path: Option<&Path>) -> Result<ExitCode, CliError> {
    let mut config: SynthConfig = match config_path {
        Some(path) => parse_config_file(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = ctx.seed_override() {
        config.seed = seed;
    }
    let (snapshot, truth) = generate_market(&config)?;
    let out = ctx.out();
    fs::create_dir_all(&out).map_err(|e| format!("mkdir {}: {e}", out.display()))?;
    write_snapshot_dir(&snapshot, &out, EmbeddingsFormat::Jsonl)?;
    ctx.write_json("truth.json", &truth)?;
    println!(
        "generated {} collections, {} holdings, {} transactions, {} embeddings under {} (seed {})",
        snapshot.collections.len(),
        snapshot.holdings.len(),
        snapshot.transactions.len(),
        snapshot.embeddings.len(),
        out.display(),
        config.seed,
    );
    Ok(ExitCode::SUCCESS)
}

pub fn run(ctx: &Ctx, config_path: Option<&Path>, stages: &[String]) -> Result<ExitCode, CliError> {
    let text = match config_path {
        Some(path) => {
            fs::read_to_string(path).map_err(|e| format!("read {}: {e}", path.display()))?
        }
        None => String::new(),
    };
    let mut config = RunConfig::from_toml_with_overrides(&text, std::env::vars())?;
    if !stages.is_empty() {
        config.stages = stages.to_vec();
    }
    if let Some(seed) = ctx.seed_override() {
        config.seed = seed;
    }
    if let Some(out) = ctx.out_override() {
        config.out = out.display().to_string();
    }
    if config.stages.is_empty() {
        log::warn!("no stages requested; writing an empty manifest");
    }
    Ok(exit_for(&run_stages(&config)?))
}
