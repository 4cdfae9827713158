mod common;

use std::collections::HashMap;
use std::time::Duration;

use tempfile::TempDir;

use common::FixtureServer;
use veblen::ingest::{
    fetch_snapshot, fetch_snapshot_with, load_snapshot, write_snapshot_dir, EmbeddingsFormat,
    FetchOptions, IngestError, SnapshotSource,
};
use veblen::model::MarketSnapshot;

fn serve_records(snapshot: &MarketSnapshot) -> HashMap<String, Vec<serde_json::Value>> {
    let to_values = |records: Vec<serde_json::Value>| records;
    HashMap::from([
        (
            "collections".to_string(),
            to_values(
                snapshot
                    .collections
                    .iter()
                    .map(|r| serde_json::to_value(r).unwrap())
                    .collect(),
            ),
        ),
        (
            "holdings".to_string(),
            snapshot
                .holdings
                .iter()
                .map(|r| serde_json::to_value(r).unwrap())
                .collect(),
        ),
        (
            "traits".to_string(),
            snapshot
                .traits
                .iter()
                .map(|r| serde_json::to_value(r).unwrap())
                .collect(),
        ),
        (
            "transactions".to_string(),
            snapshot
                .transactions
                .iter()
                .map(|r| serde_json::to_value(r).unwrap())
                .collect(),
        ),
        (
            "embeddings".to_string(),
            snapshot
                .embeddings
                .iter()
                .map(|r| serde_json::to_value(r).unwrap())
                .collect(),
        ),
    ])
}

fn fast_options(page_size: usize) -> FetchOptions {
    FetchOptions {
        page_size,
        max_retries: 5,
        initial_backoff: Duration::from_millis(10),
        max_backoff: Duration::from_millis(50),
        ..FetchOptions::default()
    }
}

#[test]
fn empty_server_yields_empty_snapshot() {
    let server = FixtureServer::empty();
    let loaded = fetch_snapshot(&server.base_url(), 100).unwrap();
    assert!(loaded.snapshot.collections.is_empty());
    assert!(loaded.snapshot.holdings.is_empty());
    assert!(loaded.validation.is_valid());
}

#[test]
fn fetched_snapshot_equals_directory_load() {
    let snapshot = common::sample_snapshot();
    let dir = TempDir::new().unwrap();
    write_snapshot_dir(&snapshot, dir.path(), EmbeddingsFormat::Jsonl).unwrap();
    let from_dir = load_snapshot(&SnapshotSource::directory(dir.path().to_str().unwrap())).unwrap();

    let server = FixtureServer::spawn(serve_records(&snapshot));
    // page_size 2 forces several pages per resource
    let fetched = fetch_snapshot_with(&server.base_url(), fast_options(2)).unwrap();

    assert_eq!(fetched.snapshot, from_dir.snapshot);
    assert!(fetched.validation.is_valid());
    // 6 holdings at 2 per page: 3 pages
    assert_eq!(server.request_count("holdings"), 3);
}

#[test]
fn transient_500s_are_retried_then_succeed() {
    let snapshot = common::sample_snapshot();
    let server = FixtureServer::spawn(serve_records(&snapshot));
    server.fail_next("collections", 3);

    let fetched = fetch_snapshot_with(&server.base_url(), fast_options(100)).unwrap();
    assert_eq!(fetched.snapshot.collections.len(), 3);
    // 3 failures + 1 success for the single collections page
    assert_eq!(server.request_count("collections"), 4);
}

#[test]
fn retries_are_capped() {
    let server = FixtureServer::empty();
    server.fail_next("collections", 100);
    let err = fetch_snapshot_with(
        &server.base_url(),
        FetchOptions {
            max_retries: 2,
            ..fast_options(100)
        },
    )
    .unwrap_err();
    match err {
        IngestError::Http { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("expected http error, got {other:?}"),
    }
    assert_eq!(server.request_count("collections"), 3);
}

#[test]
fn stuck_cursor_fails_instead_of_looping() {
    let snapshot = common::sample_snapshot();
    let server = FixtureServer::spawn(serve_records(&snapshot));
    server.state.lock().unwrap().stuck_cursor = true;

    let err = fetch_snapshot_with(&server.base_url(), fast_options(2)).unwrap_err();
    match err {
        IngestError::NonMonotoneCursor { resource, .. } => assert_eq!(resource, "collections"),
        other => panic!("expected cursor error, got {other:?}"),
    }
}

#[test]
fn malformed_page_reports_resource_and_cursor() {
    let server = FixtureServer::empty();
    server.state.lock().unwrap().garbage_page = true;
    let err = fetch_snapshot_with(&server.base_url(), fast_options(10)).unwrap_err();
    match err {
        IngestError::MalformedPage {
            resource, cursor, ..
        } => {
            assert_eq!(resource, "collections");
            assert_eq!(cursor, "0");
        }
        other => panic!("expected malformed page error, got {other:?}"),
    }
}
