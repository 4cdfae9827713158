#![allow(dead_code)]

//! In-process HTTP fixture server speaking the paginated snapshot protocol,
//! with per-resource fault injection for retry and cursor tests.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use veblen::model::{
    Address, Category, Collection, EmbeddingRecord, Holding, MarketSnapshot, TokenTraits,
    Transaction, EMBEDDING_DIM,
};

/// Small but fully populated snapshot used by the ingest tests.
pub fn sample_snapshot() -> MarketSnapshot {
    let collections = vec![
        collection("coolcats", "1.5", "pfp", "2021-07-01T00:00:00Z", 9_999),
        collection("lazy-lions", "0.35", "pfp", "2021-08-05T00:00:00Z", 10_080),
        collection("art-blocks", "12", "art", "2020-11-27T00:00:00Z", 100_000),
    ];
    let holdings = vec![
        holding("0xA1", "coolcats", "42"),
        holding("0xA1", "lazy-lions", "7"),
        holding("0xB2", "coolcats", "43"),
        holding("0xB2", "art-blocks", "78000001"),
        holding("0xC3", "art-blocks", "78000002"),
        holding("0xC3", "coolcats", "44"),
    ];
    let traits = vec![
        token_traits("coolcats", "42", &[("hat", "beanie"), ("face", "happy")]),
        token_traits("coolcats", "43", &[("hat", "none"), ("face", "grumpy")]),
        token_traits("lazy-lions", "7", &[("mane", "gold")]),
    ];
    let transactions = vec![
        transaction("coolcats", "42", "2.5", "2022-01-15T09:30:00Z", "0xA1", "0xD4"),
        transaction("coolcats", "43", "1.9", "2022-02-20T17:45:00Z", "0xB2", "0xE5"),
        transaction("art-blocks", "78000001", "40", "2022-03-01T12:00:00Z", "0xB2", "0xF6"),
        transaction("lazy-lions", "7", "0.6", "2022-03-10T08:15:00Z", "0xA1", "0xD4"),
    ];
    let embeddings = vec![
        embedding("coolcats", "42", 0.1),
        embedding("coolcats", "43", -0.2),
        embedding("art-blocks", "78000001", 0.05),
    ];
    MarketSnapshot {
        collections,
        holdings,
        traits,
        transactions,
        embeddings,
        snapshot_time: "2022-03-10T08:15:00Z".parse().unwrap(),
    }
}

pub fn collection(
    slug: &str,
    floor: &str,
    category: &str,
    created: &str,
    total_supply: u64,
) -> Collection {
    Collection {
        slug: slug.to_string(),
        floor_price: floor.parse().unwrap(),
        category: Category::parse(category),
        created_at: created.parse().unwrap(),
        total_supply,
    }
}

pub fn holding(wallet: &str, collection: &str, token_id: &str) -> Holding {
    Holding {
        wallet: Address::new(wallet),
        collection: collection.to_string(),
        token_id: token_id.to_string(),
    }
}

pub fn token_traits(collection: &str, token_id: &str, pairs: &[(&str, &str)]) -> TokenTraits {
    TokenTraits {
        collection: collection.to_string(),
        token_id: token_id.to_string(),
        traits: pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    }
}

pub fn transaction(
    collection: &str,
    token_id: &str,
    price: &str,
    timestamp: &str,
    buyer: &str,
    seller: &str,
) -> Transaction {
    Transaction {
        collection: collection.to_string(),
        token_id: token_id.to_string(),
        price: price.parse().unwrap(),
        timestamp: timestamp.parse().unwrap(),
        buyer: Address::new(buyer),
        seller: Address::new(seller),
    }
}

pub fn embedding(collection: &str, token_id: &str, scale: f32) -> EmbeddingRecord {
    EmbeddingRecord {
        collection: collection.to_string(),
        token_id: token_id.to_string(),
        vector: (0..EMBEDDING_DIM)
            .map(|i| scale * (i as f32 * 0.37).sin())
            .collect(),
    }
}

#[derive(Default)]
pub struct ServerState {
    /// resource name -> full record list, served in pages.
    pub records: HashMap<String, Vec<serde_json::Value>>,
    /// resource name -> how many further requests should return 500.
    pub fail_next: HashMap<String, u32>,
    pub request_counts: HashMap<String, u32>,
    /// When set, next_cursor never advances past the current cursor.
    pub stuck_cursor: bool,
    /// When set, every page body is syntactically invalid JSON.
    pub garbage_page: bool,
}

pub struct FixtureServer {
    addr: SocketAddr,
    pub state: Arc<Mutex<ServerState>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn spawn(records: HashMap<String, Vec<serde_json::Value>>) -> FixtureServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind fixture server");
        let addr = listener.local_addr().unwrap();
        let state = Arc::new(Mutex::new(ServerState {
            records,
            ..ServerState::default()
        }));
        let shutdown = Arc::new(AtomicBool::new(false));
        let handle = {
            let state = Arc::clone(&state);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = stream {
                        handle_connection(stream, &state);
                    }
                }
            })
        };
        FixtureServer {
            addr,
            state,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn empty() -> FixtureServer {
        FixtureServer::spawn(HashMap::new())
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn fail_next(&self, resource: &str, times: u32) {
        self.state
            .lock()
            .unwrap()
            .fail_next
            .insert(resource.to_string(), times);
    }

    pub fn request_count(&self, resource: &str) -> u32 {
        *self
            .state
            .lock()
            .unwrap()
            .request_counts
            .get(resource)
            .unwrap_or(&0)
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop so the thread notices the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, state: &Mutex<ServerState>) {
    let Ok(peer) = stream.try_clone() else { return };
    let mut reader = BufReader::new(peer);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    loop {
        let mut header = String::new();
        match reader.read_line(&mut header) {
            Ok(0) => break,
            Ok(_) if header == "\r\n" || header == "\n" => break,
            Ok(_) => {}
            Err(_) => return,
        }
    }

    let target = request_line.split_whitespace().nth(1).unwrap_or("/");
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let resource = path.trim_start_matches('/').to_string();
    let mut cursor = 0usize;
    let mut limit = 100usize;
    for pair in query.split('&') {
        if let Some((key, value)) = pair.split_once('=') {
            match key {
                "cursor" => cursor = value.parse().unwrap_or(0),
                "limit" => limit = value.parse().unwrap_or(100),
                _ => {}
            }
        }
    }

    let mut st = state.lock().unwrap();
    *st.request_counts.entry(resource.clone()).or_insert(0) += 1;
    if let Some(remaining) = st.fail_next.get_mut(&resource) {
        if *remaining > 0 {
            *remaining -= 1;
            respond(&mut stream, 500, "");
            return;
        }
    }
    if st.garbage_page {
        respond(&mut stream, 200, "{this is not json");
        return;
    }

    let empty = Vec::new();
    let all = st.records.get(&resource).unwrap_or(&empty);
    let start = cursor.min(all.len());
    let end = (start + limit).min(all.len());
    let page = &all[start..end];
    let next_cursor = if st.stuck_cursor && end < all.len() {
        Some(cursor.to_string())
    } else if end < all.len() {
        Some(end.to_string())
    } else {
        None
    };
    let body = serde_json::json!({ "records": page, "next_cursor": next_cursor }).to_string();
    respond(&mut stream, 200, &body);
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        500 => "Internal Server Error",
        _ => "Error",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
