//! Snapshot assembly from local files or a paginated HTTP endpoint.
//!
//! Five record kinds make up a snapshot: collections, holdings, traits,
//! transactions, embeddings. Holdings travel as CSV (they dominate the data
//! volume); everything else is JSONL. Malformed lines are skipped and
//! reported with locators rather than aborting the load.

mod files;
mod http;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::model::{validate_snapshot, MarketSnapshot, ValidationReport};

pub use files::{
    parse_collections, parse_embeddings, parse_holdings, parse_record_stream, parse_traits,
    parse_transactions, read_embeddings_binary, write_embeddings_binary, write_snapshot_dir,
    EmbeddingsFormat, ParseOutcome, ParsedTable, RejectedLine,
};
pub use http::{fetch_snapshot, fetch_snapshot_with, FetchOptions};

/// Collections with total_supply above this are dropped unless the caller
/// overrides the filter. Large enough for every ordinary collection, small
/// enough to exclude billion-token exchange contracts.
pub const DEFAULT_MAX_SUPPLY_FILTER: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FileKind {
    Collections,
    Holdings,
    Traits,
    Transactions,
    Embeddings,
}

impl FileKind {
    pub const ALL: [FileKind; 5] = [
        FileKind::Collections,
        FileKind::Holdings,
        FileKind::Traits,
        FileKind::Transactions,
        FileKind::Embeddings,
    ];

    /// Resource name used in paths and URLs.
    pub fn resource(self) -> &'static str {
        match self {
            FileKind::Collections => "collections",
            FileKind::Holdings => "holdings",
            FileKind::Traits => "traits",
            FileKind::Transactions => "transactions",
            FileKind::Embeddings => "embeddings",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            FileKind::Collections => "collections.jsonl",
            FileKind::Holdings => "holdings.csv",
            FileKind::Traits => "traits.jsonl",
            FileKind::Transactions => "transactions.jsonl",
            FileKind::Embeddings => "embeddings.jsonl",
        }
    }

    pub fn from_resource(name: &str) -> Option<FileKind> {
        FileKind::ALL.iter().copied().find(|k| k.resource() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Directory,
    Http,
}

/// Where a snapshot comes from and how aggressively to filter it.
#[derive(Debug, Clone)]
pub struct SnapshotSource {
    pub kind: SourceKind,
    /// Directory path or base URL, depending on `kind`.
    pub location: String,
    /// `None` means no supply filter at all.
    pub max_supply_filter: Option<u64>,
}

impl SnapshotSource {
    pub fn directory(path: impl Into<String>) -> SnapshotSource {
        SnapshotSource {
            kind: SourceKind::Directory,
            location: path.into(),
            max_supply_filter: Some(DEFAULT_MAX_SUPPLY_FILTER),
        }
    }

    pub fn http(base_url: impl Into<String>) -> SnapshotSource {
        SnapshotSource {
            kind: SourceKind::Http,
            location: base_url.into(),
            max_supply_filter: Some(DEFAULT_MAX_SUPPLY_FILTER),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing collections file in {0}")]
    MissingCollections(PathBuf),
    #[error("unknown record kind {0:?}")]
    UnknownKind(String),
    #[error("malformed embeddings binary: {0}")]
    MalformedBinary(String),
    #[error("request to {url} failed after {attempts} attempt(s): {detail}")]
    Http {
        url: String,
        attempts: u32,
        detail: String,
    },
    #[error("malformed page for {resource} at cursor {cursor:?}: {detail}")]
    MalformedPage {
        resource: &'static str,
        cursor: String,
        detail: String,
    },
    #[error("page cursor for {resource} did not advance: {prev:?} then {next:?}")]
    NonMonotoneCursor {
        resource: &'static str,
        prev: String,
        next: String,
    },
}

/// Rejected lines from one input table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRejects {
    pub kind: FileKind,
    pub lines: Vec<RejectedLine>,
}

/// A snapshot plus everything the loader had to say about it.
#[derive(Debug, Clone)]
pub struct LoadedSnapshot {
    pub snapshot: MarketSnapshot,
    /// Only kinds that actually rejected lines appear here.
    pub rejects: Vec<TableRejects>,
    pub validation: ValidationReport,
}

impl LoadedSnapshot {
    pub fn reject_count(&self) -> usize {
        self.rejects.iter().map(|t| t.lines.len()).sum()
    }
}

pub fn load_snapshot(source: &SnapshotSource) -> Result<LoadedSnapshot, IngestError> {
    match source.kind {
        SourceKind::Directory => {
            load_directory(Path::new(&source.location), source.max_supply_filter)
        }
        SourceKind::Http => fetch_snapshot_with(
            &source.location,
            FetchOptions {
                max_supply_filter: source.max_supply_filter,
                ..FetchOptions::default()
            },
        ),
    }
}

fn load_directory(dir: &Path, filter: Option<u64>) -> Result<LoadedSnapshot, IngestError> {
    let raw = files::read_directory(dir)?;
    Ok(assemble(raw, filter))
}

/// Untyped-by-kind record tables on their way into a snapshot.
#[derive(Debug, Default)]
pub(crate) struct RawTables {
    pub collections: ParseOutcome<crate::model::Collection>,
    pub holdings: ParseOutcome<crate::model::Holding>,
    pub traits: ParseOutcome<crate::model::TokenTraits>,
    pub transactions: ParseOutcome<crate::model::Transaction>,
    pub embeddings: ParseOutcome<crate::model::EmbeddingRecord>,
}

/// Applies the supply filter (dropping dependents of dropped collections),
/// derives the snapshot time, and runs validation.
pub(crate) fn assemble(raw: RawTables, max_supply_filter: Option<u64>) -> LoadedSnapshot {
    let dropped: HashSet<String> = match max_supply_filter {
        Some(cap) => raw
            .collections
            .records
            .iter()
            .filter(|c| c.total_supply > cap)
            .map(|c| c.slug.clone())
            .collect(),
        None => HashSet::new(),
    };

    let collections: Vec<_> = raw
        .collections
        .records
        .into_iter()
        .filter(|c| !dropped.contains(&c.slug))
        .collect();
    let holdings: Vec<_> = raw
        .holdings
        .records
        .into_iter()
        .filter(|h| !dropped.contains(&h.collection))
        .collect();
    let traits: Vec<_> = raw
        .traits
        .records
        .into_iter()
        .filter(|t| !dropped.contains(&t.collection))
        .collect();
    let transactions: Vec<_> = raw
        .transactions
        .records
        .into_iter()
        .filter(|t| !dropped.contains(&t.collection))
        .collect();
    let embeddings: Vec<_> = raw
        .embeddings
        .records
        .into_iter()
        .filter(|e| !dropped.contains(&e.collection))
        .collect();

    // No file carries an observation time, so derive one deterministically:
    // the latest transaction, else the latest collection birth, else epoch.
    let snapshot_time: DateTime<Utc> = transactions
        .iter()
        .map(|t| t.timestamp)
        .max()
        .or_else(|| collections.iter().map(|c| c.created_at).max())
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);

    let snapshot = MarketSnapshot {
        collections,
        holdings,
        traits,
        transactions,
        embeddings,
        snapshot_time,
    };
    let validation = validate_snapshot(&snapshot);

    let mut rejects = Vec::new();
    for (kind, lines) in [
        (FileKind::Collections, raw.collections.rejects),
        (FileKind::Holdings, raw.holdings.rejects),
        (FileKind::Traits, raw.traits.rejects),
        (FileKind::Transactions, raw.transactions.rejects),
        (FileKind::Embeddings, raw.embeddings.rejects),
    ] {
        if !lines.is_empty() {
            rejects.push(TableRejects { kind, lines });
        }
    }

    LoadedSnapshot {
        snapshot,
        rejects,
        validation,
    }
}
