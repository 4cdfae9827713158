//! Client for the paginated snapshot protocol:
//! `GET {base}/{kind}?cursor={c}&limit={page_size}` returning
//! `{"records":[...],"next_cursor":"..."|null}`.

use std::collections::HashSet;
use std::io::Read;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{assemble, FileKind, IngestError, LoadedSnapshot, RawTables, DEFAULT_MAX_SUPPLY_FILTER};

/// Response bodies larger than this abort the fetch; real pages are far
/// smaller and an unbounded read would let a bad server exhaust memory.
const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub page_size: usize,
    /// Retries per request on 5xx or transport failure, after the first try.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub max_supply_filter: Option<u64>,
}

impl Default for FetchOptions {
    fn default() -> FetchOptions {
        FetchOptions {
            page_size: 500,
            max_retries: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(10),
            max_supply_filter: Some(DEFAULT_MAX_SUPPLY_FILTER),
        }
    }
}

pub fn fetch_snapshot(base_url: &str, page_size: usize) -> Result<LoadedSnapshot, IngestError> {
    fetch_snapshot_with(
        base_url,
        FetchOptions {
            page_size,
            ..FetchOptions::default()
        },
    )
}

/// Fetches every page of every resource, then assembles exactly as a
/// directory load would. One request is in flight per resource at a time;
/// pages must advance their cursor or the fetch fails.
pub fn fetch_snapshot_with(
    base_url: &str,
    options: FetchOptions,
) -> Result<LoadedSnapshot, IngestError> {
    let base = base_url.trim_end_matches('/');
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(30))
        .build();

    let raw = RawTables {
        collections: fetch_resource(&agent, base, FileKind::Collections, &options)?,
        holdings: fetch_resource(&agent, base, FileKind::Holdings, &options)?,
        traits: fetch_resource(&agent, base, FileKind::Traits, &options)?,
        transactions: fetch_resource(&agent, base, FileKind::Transactions, &options)?,
        embeddings: fetch_resource(&agent, base, FileKind::Embeddings, &options)?,
    };
    Ok(assemble(raw, options.max_supply_filter))
}

#[derive(Deserialize)]
struct PageEnvelope {
    records: Vec<serde_json::Value>,
    next_cursor: Option<String>,
}

fn fetch_resource<T: DeserializeOwned>(
    agent: &ureq::Agent,
    base: &str,
    kind: FileKind,
    options: &FetchOptions,
) -> Result<super::ParseOutcome<T>, IngestError> {
    let resource = kind.resource();
    let mut records = Vec::new();
    let mut cursor = "0".to_string();
    let mut seen: HashSet<String> = HashSet::from([cursor.clone()]);

    loop {
        let url = format!(
            "{base}/{resource}?cursor={cursor}&limit={}",
            options.page_size
        );
        let body = get_with_retry(agent, &url, options)?;
        let page: PageEnvelope =
            serde_json::from_str(&body).map_err(|e| IngestError::MalformedPage {
                resource,
                cursor: cursor.clone(),
                detail: e.to_string(),
            })?;
        let empty_page = page.records.is_empty();
        for (i, value) in page.records.into_iter().enumerate() {
            let record: T =
                serde_json::from_value(value).map_err(|e| IngestError::MalformedPage {
                    resource,
                    cursor: cursor.clone(),
                    detail: format!("record {i}: {e}"),
                })?;
            records.push(record);
        }

        match page.next_cursor {
            None => break,
            Some(_) if empty_page => break,
            Some(next) => {
                if !seen.insert(next.clone()) {
                    return Err(IngestError::NonMonotoneCursor {
                        resource,
                        prev: cursor,
                        next,
                    });
                }
                if let (Ok(a), Ok(b)) = (cursor.parse::<u64>(), next.parse::<u64>()) {
                    if b <= a {
                        return Err(IngestError::NonMonotoneCursor {
                            resource,
                            prev: cursor,
                            next,
                        });
                    }
                }
                cursor = next;
            }
        }
    }

    Ok(super::ParseOutcome {
        records,
        rejects: Vec::new(),
    })
}

/// One GET with capped exponential backoff on 5xx and transport failures.
/// 4xx responses are not retried: the request itself is wrong.
fn get_with_retry(
    agent: &ureq::Agent,
    url: &str,
    options: &FetchOptions,
) -> Result<String, IngestError> {
    let mut backoff = options.initial_backoff;
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let failure = match agent.get(url).call() {
            Ok(response) => {
                let mut body = String::new();
                response
                    .into_reader()
                    .take(MAX_BODY_BYTES)
                    .read_to_string(&mut body)?;
                return Ok(body);
            }
            Err(ureq::Error::Status(code, _)) if code >= 500 => format!("http status {code}"),
            Err(ureq::Error::Status(code, _)) => {
                return Err(IngestError::Http {
                    url: url.to_string(),
                    attempts,
                    detail: format!("http status {code}"),
                });
            }
            Err(ureq::Error::Transport(t)) => t.to_string(),
        };
        if attempts > options.max_retries {
            return Err(IngestError::Http {
                url: url.to_string(),
                attempts,
                detail: failure,
            });
        }
        log::warn!("retrying {url} after failure ({failure}), attempt {attempts}");
        thread::sleep(backoff);
        backoff = (backoff * 2).min(options.max_backoff);
    }
}
