//! Shared command context: global flags, snapshot resolution through the
//! run manifest, and artifact writers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::de::DeserializeOwned;
use serde::Serialize;
use veblen::ingest::{load_snapshot, SnapshotSource};
use veblen::model::MarketSnapshot;
use veblen::pipeline::{run_pipeline, Manifest, RunConfig, StageStatus};

pub type CliError = Box<dyn std::error::Error>;

pub struct Ctx {
    seed: Option<u64>,
    out: Option<PathBuf>,
}

impl Ctx {
    pub fn new(seed: Option<u64>, out: Option<PathBuf>) -> Ctx {
        Ctx { seed, out }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Set only when --seed (or VEBLEN_SEED) was given, so config files
    /// keep their own seed otherwise.
    pub fn seed_override(&self) -> Option<u64> {
        self.seed
    }

    pub fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn out_override(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    /// RunConfig carrying the global flags, for pipeline-backed subcommands.
    pub fn run_config(&self) -> RunConfig {
        let mut config = RunConfig::default();
        config.out = self.out().display().to_string();
        config.seed = self.seed();
        config
    }

    pub fn manifest(&self) -> Result<Manifest, CliError> {
        let path = self.out().join("manifest.json");
        let text =
            fs::read_to_string(&path).map_err(|e| format!("read {}: {e}", path.display()))?;
        let manifest = serde_json::from_str(&text)
            .map_err(|e| format!("parse {}: {e}", path.display()))?;
        Ok(manifest)
    }

    /// An explicit --source wins; otherwise the last ingested snapshot
    /// under --out, located through the manifest.
    pub fn resolve_source(&self, source: Option<&Path>) -> Result<PathBuf, CliError> {
        if let Some(dir) = source {
            return Ok(dir.to_path_buf());
        }
        let out = self.out();
        if !out.join("manifest.json").is_file() {
            return Err(format!(
                "no --source given and {} does not exist; pass --source <snapshot dir> or run `veblen ingest` first",
                out.join("manifest.json").display()
            )
            .into());
        }
        let manifest = self.manifest()?;
        let artifact = manifest.artifact("collections.jsonl").ok_or_else(|| {
            format!(
                "the manifest under {} records no ingested snapshot; run `veblen ingest` first",
                out.display()
            )
        })?;
        let full = out.join(&artifact.path);
        Ok(full.parent().unwrap_or(Path::new(".")).to_path_buf())
    }

    /// Loads a snapshot for analysis. No supply filter here: an ingested
    /// snapshot was already filtered, and a raw --source should be
    /// analyzed as-is.
    pub fn load_market(&self, source: Option<&Path>) -> Result<MarketSnapshot, CliError> {
        let dir = self.resolve_source(source)?;
        let src = SnapshotSource {
            max_supply_filter: None,
            ..SnapshotSource::directory(dir.display().to_string())
        };
        let loaded = load_snapshot(&src)?;
        if loaded.reject_count() > 0 {
            log::warn!(
                "{} malformed lines skipped while loading {}",
                loaded.reject_count(),
                dir.display()
            );
        }
        if !loaded.validation.is_valid() {
            return Err(format!(
                "snapshot at {} fails validation with {} violations; see `veblen validate --source {}`",
                dir.display(),
                loaded.validation.violations.len(),
                dir.display()
            )
            .into());
        }
        Ok(loaded.snapshot)
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out().join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| format!("mkdir {}: {e}", parent.display()))?;
        }
        fs::write(&path, bytes).map_err(|e| format!("write {}: {e}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }
}

/// Builds a CSV table in memory; every command writes through
/// `Ctx::write_bytes` so output paths are reported uniformly.
pub fn csv_table<R>(header: &[&str], rows: R) -> Result<Vec<u8>, CliError>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.to_string())?)
}

/// Parses TOML (default) or JSON (by extension) into a config struct.
pub fn parse_config_file<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| format!("read {}: {e}", path.display()))?;
    let is_json = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
    let value = if is_json {
        serde_json::from_str(&text).map_err(|e| format!("parse {}: {e}", path.display()))?
    } else {
        toml::from_str(&text).map_err(|e| format!("parse {}: {e}", path.display()))?
    };
    Ok(value)
}

/// Runs the pipeline and prints one status line per recorded stage.
pub fn run_stages(config: &RunConfig) -> Result<Manifest, CliError> {
    let manifest = run_pipeline(config)?;
    for stage in &manifest.stages {
        match &stage.status {
            StageStatus::Ok => {
                println!("stage {}: ok ({} artifacts)", stage.stage, stage.artifacts.len());
            }
            StageStatus::Failed { error } => {
                println!("stage {}: FAILED: {error}", stage.stage);
            }
        }
    }
    println!("manifest: {}", Path::new(&config.out).join("manifest.json").display());
    Ok(manifest)
}

pub fn exit_for(manifest: &Manifest) -> ExitCode {
    if manifest.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Keeps slugs usable as file names.
pub fn sanitize(slug: &str) -> String {
    slug.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '-'
            }
        })
        .collect()
}
