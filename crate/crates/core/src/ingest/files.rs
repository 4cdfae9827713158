//! File-level parsing and writing for the five snapshot tables.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{FileKind, IngestError, RawTables};
use crate::model::{
    Collection, EmbeddingRecord, Holding, MarketSnapshot, TokenTraits, Transaction, EMBEDDING_DIM,
};

/// One line the parser could not turn into a record. `line` is 1-based and
/// counts physical file lines, headers included, so locators match editors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: u64,
    pub reason: String,
}

/// Accepted records plus the lines that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RejectedLine>,
}

impl<T> Default for ParseOutcome<T> {
    fn default() -> Self {
        ParseOutcome {
            records: Vec::new(),
            rejects: Vec::new(),
        }
    }
}

/// A parsed table, tagged by kind.
#[derive(Debug)]
pub enum ParsedTable {
    Collections(ParseOutcome<Collection>),
    Holdings(ParseOutcome<Holding>),
    Traits(ParseOutcome<TokenTraits>),
    Transactions(ParseOutcome<Transaction>),
    Embeddings(ParseOutcome<EmbeddingRecord>),
}

impl ParsedTable {
    pub fn len(&self) -> usize {
        match self {
            ParsedTable::Collections(o) => o.records.len(),
            ParsedTable::Holdings(o) => o.records.len(),
            ParsedTable::Traits(o) => o.records.len(),
            ParsedTable::Transactions(o) => o.records.len(),
            ParsedTable::Embeddings(o) => o.records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rejects(&self) -> &[RejectedLine] {
        match self {
            ParsedTable::Collections(o) => &o.rejects,
            ParsedTable::Holdings(o) => &o.rejects,
            ParsedTable::Traits(o) => &o.rejects,
            ParsedTable::Transactions(o) => &o.rejects,
            ParsedTable::Embeddings(o) => &o.rejects,
        }
    }
}

/// Parses one table from a byte stream. Reads line by line; memory stays
/// proportional to the accepted records, never to the raw input buffering.
pub fn parse_record_stream<R: BufRead>(
    kind: FileKind,
    reader: R,
) -> Result<ParsedTable, IngestError> {
    Ok(match kind {
        FileKind::Collections => ParsedTable::Collections(parse_collections(reader)?),
        FileKind::Holdings => ParsedTable::Holdings(parse_holdings(reader)?),
        FileKind::Traits => ParsedTable::Traits(parse_traits(reader)?),
        FileKind::Transactions => ParsedTable::Transactions(parse_transactions(reader)?),
        FileKind::Embeddings => ParsedTable::Embeddings(parse_embeddings(reader)?),
    })
}

pub fn parse_collections<R: BufRead>(reader: R) -> Result<ParseOutcome<Collection>, IngestError> {
    parse_jsonl(reader)
}

pub fn parse_traits<R: BufRead>(reader: R) -> Result<ParseOutcome<TokenTraits>, IngestError> {
    parse_jsonl(reader)
}

pub fn parse_transactions<R: BufRead>(
    reader: R,
) -> Result<ParseOutcome<Transaction>, IngestError> {
    parse_jsonl(reader)
}

pub fn parse_embeddings<R: BufRead>(
    reader: R,
) -> Result<ParseOutcome<EmbeddingRecord>, IngestError> {
    parse_jsonl(reader)
}

fn parse_jsonl<T: DeserializeOwned, R: BufRead>(
    reader: R,
) -> Result<ParseOutcome<T>, IngestError> {
    let mut out = ParseOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            out.rejects.push(RejectedLine {
                line: line_no,
                reason: "empty line".to_string(),
            });
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(record) => out.records.push(record),
            Err(e) => out.rejects.push(RejectedLine {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Streams a holdings CSV (header `wallet,collection,token_id`), handing each
/// record to `sink` so callers that only aggregate never hold the table.
pub fn scan_holdings<R: Read>(
    reader: R,
    mut sink: impl FnMut(Holding),
) -> Result<Vec<RejectedLine>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let mut rejects = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                if record.len() != 3 {
                    rejects.push(RejectedLine {
                        line: record.position().map_or(0, |p| p.line()),
                        reason: format!("expected 3 fields, got {}", record.len()),
                    });
                    continue;
                }
                sink(Holding {
                    wallet: crate::model::Address::new(&record[0]),
                    collection: record[1].to_string(),
                    token_id: record[2].to_string(),
                });
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejects.push(RejectedLine {
                    line,
                    reason: e.to_string(),
                });
                if e.is_io_error() {
                    return Err(IngestError::Io(io::Error::other(e)));
                }
            }
        }
    }
    Ok(rejects)
}

pub fn parse_holdings<R: Read>(reader: R) -> Result<ParseOutcome<Holding>, IngestError> {
    let mut records = Vec::new();
    let rejects = scan_holdings(reader, |h| records.push(h))?;
    Ok(ParseOutcome { records, rejects })
}

/// Binary embeddings layout: a JSON header line `{"dim":384,"count":N}`,
/// then N JSONL index lines `{"collection":...,"token_id":...}` in record
/// order, then N*dim little-endian f32s with no padding.
pub fn write_embeddings_binary<W: Write>(
    mut w: W,
    records: &[EmbeddingRecord],
) -> Result<(), IngestError> {
    for r in records {
        if r.vector.len() != EMBEDDING_DIM {
            return Err(IngestError::MalformedBinary(format!(
                "record ({}, {}) has dimension {}, binary format requires {EMBEDDING_DIM}",
                r.collection,
                r.token_id,
                r.vector.len()
            )));
        }
    }
    writeln!(
        w,
        "{{\"dim\":{EMBEDDING_DIM},\"count\":{}}}",
        records.len()
    )?;
    for r in records {
        let index = serde_json::json!({"collection": r.collection, "token_id": r.token_id});
        writeln!(w, "{index}")?;
    }
    for r in records {
        for v in &r.vector {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_embeddings_binary<R: BufRead>(
    mut r: R,
) -> Result<ParseOutcome<EmbeddingRecord>, IngestError> {
    #[derive(serde::Deserialize)]
    struct Header {
        dim: usize,
        count: usize,
    }
    #[derive(serde::Deserialize)]
    struct IndexLine {
        collection: String,
        token_id: String,
    }

    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(IngestError::MalformedBinary("missing header line".into()));
    }
    let header: Header = serde_json::from_str(line.trim_end())
        .map_err(|e| IngestError::MalformedBinary(format!("bad header: {e}")))?;

    let mut index = Vec::with_capacity(header.count);
    for i in 0..header.count {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(IngestError::MalformedBinary(format!(
                "index truncated at entry {i} of {}",
                header.count
            )));
        }
        let entry: IndexLine = serde_json::from_str(line.trim_end())
            .map_err(|e| IngestError::MalformedBinary(format!("bad index entry {i}: {e}")))?;
        index.push(entry);
    }

    let mut records = Vec::with_capacity(header.count);
    let mut buf = vec![0u8; header.dim * 4];
    for (i, entry) in index.into_iter().enumerate() {
        r.read_exact(&mut buf).map_err(|_| {
            IngestError::MalformedBinary(format!("vector data truncated at record {i}"))
        })?;
        let vector: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(EmbeddingRecord {
            collection: entry.collection,
            token_id: entry.token_id,
            vector,
        });
    }
    Ok(ParseOutcome {
        records,
        rejects: Vec::new(),
    })
}

pub(super) fn read_directory(dir: &Path) -> Result<RawTables, IngestError> {
    let collections_path = dir.join(FileKind::Collections.file_name());
    if !collections_path.is_file() {
        return Err(IngestError::MissingCollections(dir.to_path_buf()));
    }

    let mut raw = RawTables {
        collections: parse_collections(open(&collections_path)?)?,
        ..RawTables::default()
    };

    let holdings_path = dir.join(FileKind::Holdings.file_name());
    if holdings_path.is_file() {
        raw.holdings = parse_holdings(open(&holdings_path)?)?;
    }
    let traits_path = dir.join(FileKind::Traits.file_name());
    if traits_path.is_file() {
        raw.traits = parse_traits(open(&traits_path)?)?;
    }
    let tx_path = dir.join(FileKind::Transactions.file_name());
    if tx_path.is_file() {
        raw.transactions = parse_transactions(open(&tx_path)?)?;
    }

    let jsonl_path = dir.join(FileKind::Embeddings.file_name());
    let binary_path = dir.join("embeddings.bin");
    if jsonl_path.is_file() {
        raw.embeddings = parse_embeddings(open(&jsonl_path)?)?;
    } else if binary_path.is_file() {
        raw.embeddings = read_embeddings_binary(open(&binary_path)?)?;
    }

    Ok(raw)
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    Ok(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingsFormat {
    Jsonl,
    Binary,
}

/// Writes a snapshot back out in the directory layout `load_snapshot` reads.
pub fn write_snapshot_dir(
    snapshot: &MarketSnapshot,
    dir: &Path,
    embeddings: EmbeddingsFormat,
) -> Result<(), IngestError> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(FileKind::Collections.file_name()), &snapshot.collections)?;

    let mut wtr = csv::Writer::from_path(dir.join(FileKind::Holdings.file_name()))
        .map_err(|e| IngestError::Io(io::Error::other(e)))?;
    wtr.write_record(["wallet", "collection", "token_id"])
        .map_err(|e| IngestError::Io(io::Error::other(e)))?;
    for h in &snapshot.holdings {
        wtr.write_record([h.wallet.as_str(), &h.collection, &h.token_id])
            .map_err(|e| IngestError::Io(io::Error::other(e)))?;
    }
    wtr.flush()?;

    write_jsonl(&dir.join(FileKind::Traits.file_name()), &snapshot.traits)?;
    write_jsonl(&dir.join(FileKind::Transactions.file_name()), &snapshot.transactions)?;

    match embeddings {
        EmbeddingsFormat::Jsonl => {
            write_jsonl(&dir.join(FileKind::Embeddings.file_name()), &snapshot.embeddings)?
        }
        EmbeddingsFormat::Binary => {
            let mut w = BufWriter::new(File::create(dir.join("embeddings.bin"))?);
            write_embeddings_binary(&mut w, &snapshot.embeddings)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| IngestError::Io(io::Error::other(e)))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
