//! Shared domain types for market snapshots, plus snapshot-level validation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::money::Eth;

/// Every embedding in a snapshot must have exactly this many components.
pub const EMBEDDING_DIM: usize = 384;

/// Hex wallet address, normalized to lowercase on construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Address(String);

impl Address {
    pub fn new(raw: &str) -> Address {
        Address(raw.trim().to_ascii_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Address, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Address::new(&s))
    }
}

/// Marketplace category. Strings outside the known set map to `Other` with
/// the raw string preserved, so a re-serialized snapshot is byte-faithful.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Category {
    Pfp,
    Art,
    Gaming,
    Collectibles,
    Photography,
    Uncategorized,
    Other(String),
}

impl Category {
    pub fn parse(raw: &str) -> Category {
        match raw {
            "pfp" => Category::Pfp,
            "art" => Category::Art,
            "gaming" => Category::Gaming,
            "collectibles" => Category::Collectibles,
            "photography" => Category::Photography,
            "uncategorized" => Category::Uncategorized,
            other => Category::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Category::Pfp => "pfp",
            Category::Art => "art",
            Category::Gaming => "gaming",
            Category::Collectibles => "collectibles",
            Category::Photography => "photography",
            Category::Uncategorized => "uncategorized",
            Category::Other(raw) => raw,
        }
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Category, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Category::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub slug: String,
    pub floor_price: Eth,
    pub category: Category,
    pub created_at: DateTime<Utc>,
    pub total_supply: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Holding {
    pub wallet: Address,
    pub collection: String,
    pub token_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTraits {
    pub collection: String,
    pub token_id: String,
    /// Ordered so serialization is deterministic.
    pub traits: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub collection: String,
    pub token_id: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub collection: String,
    pub token_id: String,
    pub price: Eth,
    pub timestamp: DateTime<Utc>,
    pub buyer: Address,
    pub seller: Address,
}

/// Immutable view of one market at one instant. Construction happens in
/// `ingest`; after that the snapshot is shared read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub collections: Vec<Collection>,
    pub holdings: Vec<Holding>,
    pub traits: Vec<TokenTraits>,
    pub transactions: Vec<Transaction>,
    pub embeddings: Vec<EmbeddingRecord>,
    pub snapshot_time: DateTime<Utc>,
}

impl MarketSnapshot {
    pub fn empty() -> MarketSnapshot {
        MarketSnapshot {
            collections: Vec::new(),
            holdings: Vec::new(),
            traits: Vec::new(),
            transactions: Vec::new(),
            embeddings: Vec::new(),
            snapshot_time: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    pub fn collection(&self, slug: &str) -> Option<&Collection> {
        self.collections.iter().find(|c| c.slug == slug)
    }
}

/// Where a violating record lives: which table, and its index there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordLocator {
    pub table: &'static str,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    DanglingReference,
    DuplicateKey,
    DimensionMismatch,
    NonFiniteValue,
    NegativePrice,
    ZeroSupply,
    EmptyField,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub locator: RecordLocator,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans every table for referential-integrity, uniqueness, dimension, and
/// range violations. Violations are data, not errors: the caller decides
/// whether to proceed.
pub fn validate_snapshot(snapshot: &MarketSnapshot) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |kind: ViolationKind, table: &'static str, index: usize, detail: String| {
        violations.push(Violation {
            kind,
            locator: RecordLocator { table, index },
            detail,
        });
    };

    let known: HashSet<&str> = snapshot.collections.iter().map(|c| c.slug.as_str()).collect();

    let mut seen_slugs: HashMap<&str, usize> = HashMap::new();
    for (i, c) in snapshot.collections.iter().enumerate() {
        if let Some(first) = seen_slugs.insert(&c.slug, i) {
            push(
                ViolationKind::DuplicateKey,
                "collections",
                i,
                format!("slug {:?} already defined at index {first}", c.slug),
            );
        }
        if c.floor_price.is_negative() {
            push(
                ViolationKind::NegativePrice,
                "collections",
                i,
                format!("floor_price {} < 0 for {:?}", c.floor_price, c.slug),
            );
        }
        if c.total_supply == 0 {
            push(
                ViolationKind::ZeroSupply,
                "collections",
                i,
                format!("total_supply 0 for {:?}", c.slug),
            );
        }
    }

    let mut seen_holdings: HashSet<(&Address, &str, &str)> = HashSet::new();
    for (i, h) in snapshot.holdings.iter().enumerate() {
        if !known.contains(h.collection.as_str()) {
            push(
                ViolationKind::DanglingReference,
                "holdings",
                i,
                format!("unknown collection {:?}", h.collection),
            );
        }
        if !seen_holdings.insert((&h.wallet, &h.collection, &h.token_id)) {
            push(
                ViolationKind::DuplicateKey,
                "holdings",
                i,
                format!("duplicate ({}, {}, {})", h.wallet, h.collection, h.token_id),
            );
        }
    }

    let mut seen_traits: HashSet<(&str, &str)> = HashSet::new();
    for (i, t) in snapshot.traits.iter().enumerate() {
        if !known.contains(t.collection.as_str()) {
            push(
                ViolationKind::DanglingReference,
                "traits",
                i,
                format!("unknown collection {:?}", t.collection),
            );
        }
        if !seen_traits.insert((&t.collection, &t.token_id)) {
            push(
                ViolationKind::DuplicateKey,
                "traits",
                i,
                format!("duplicate ({}, {})", t.collection, t.token_id),
            );
        }
        if t.traits.keys().any(|name| name.is_empty()) {
            push(
                ViolationKind::EmptyField,
                "traits",
                i,
                format!("empty trait name on ({}, {})", t.collection, t.token_id),
            );
        }
    }

    for (i, tx) in snapshot.transactions.iter().enumerate() {
        if !known.contains(tx.collection.as_str()) {
            push(
                ViolationKind::DanglingReference,
                "transactions",
                i,
                format!("unknown collection {:?}", tx.collection),
            );
        }
        if tx.price.is_negative() {
            push(
                ViolationKind::NegativePrice,
                "transactions",
                i,
                format!("price {} < 0", tx.price),
            );
        }
        if tx.buyer.is_empty() {
            push(ViolationKind::EmptyField, "transactions", i, "empty buyer".into());
        }
        if tx.seller.is_empty() {
            push(ViolationKind::EmptyField, "transactions", i, "empty seller".into());
        }
    }

    for (i, e) in snapshot.embeddings.iter().enumerate() {
        if !known.contains(e.collection.as_str()) {
            push(
                ViolationKind::DanglingReference,
                "embeddings",
                i,
                format!("unknown collection {:?}", e.collection),
            );
        }
        if e.vector.len() != EMBEDDING_DIM {
            push(
                ViolationKind::DimensionMismatch,
                "embeddings",
                i,
                format!("dimension {} != {EMBEDDING_DIM}", e.vector.len()),
            );
        }
        if e.vector.iter().any(|v| !v.is_finite()) {
            push(
                ViolationKind::NonFiniteValue,
                "embeddings",
                i,
                format!("non-finite component in ({}, {})", e.collection, e.token_id),
            );
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    fn collection(slug: &str) -> Collection {
        Collection {
            slug: slug.to_string(),
            floor_price: "1.5".parse().unwrap(),
            category: Category::Pfp,
            created_at: ts("2021-07-01T00:00:00Z"),
            total_supply: 10_000,
        }
    }

    #[test]
    fn empty_snapshot_is_valid() {
        assert!(validate_snapshot(&MarketSnapshot::empty()).is_valid());
    }

    #[test]
    fn dangling_holding_is_reported() {
        let mut snap = MarketSnapshot::empty();
        snap.collections.push(collection("coolcats"));
        snap.holdings.push(Holding {
            wallet: Address::new("0xAB"),
            collection: "ghost".to_string(),
            token_id: "1".to_string(),
        });
        let report = validate_snapshot(&snap);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::DanglingReference);
        assert_eq!(report.violations[0].locator.table, "holdings");
    }

    #[test]
    fn mixed_embedding_dimensions_yield_one_violation() {
        let mut snap = MarketSnapshot::empty();
        snap.collections.push(collection("coolcats"));
        snap.embeddings.push(EmbeddingRecord {
            collection: "coolcats".to_string(),
            token_id: "1".to_string(),
            vector: vec![0.0; EMBEDDING_DIM],
        });
        snap.embeddings.push(EmbeddingRecord {
            collection: "coolcats".to_string(),
            token_id: "2".to_string(),
            vector: vec![0.0; 100],
        });
        let report = validate_snapshot(&snap);
        let dims: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::DimensionMismatch)
            .collect();
        assert_eq!(dims.len(), 1);
        assert_eq!(dims[0].locator.index, 1);
    }

    #[test]
    fn range_and_uniqueness_checks_fire() {
        let mut snap = MarketSnapshot::empty();
        snap.collections.push(collection("a"));
        snap.collections.push(collection("a"));
        snap.collections.push(Collection {
            total_supply: 0,
            floor_price: "-1".parse().unwrap(),
            ..collection("b")
        });
        snap.transactions.push(Transaction {
            collection: "a".to_string(),
            token_id: "1".to_string(),
            price: "2".parse().unwrap(),
            timestamp: ts("2022-01-01T00:00:00Z"),
            buyer: Address::new(""),
            seller: Address::new("0xCD"),
        });
        let report = validate_snapshot(&snap);
        let kinds: Vec<_> = report.violations.iter().map(|v| v.kind.clone()).collect();
        assert!(kinds.contains(&ViolationKind::DuplicateKey));
        assert!(kinds.contains(&ViolationKind::ZeroSupply));
        assert!(kinds.contains(&ViolationKind::NegativePrice));
        assert!(kinds.contains(&ViolationKind::EmptyField));
    }

    #[test]
    fn validation_is_idempotent() {
        let mut snap = MarketSnapshot::empty();
        snap.collections.push(collection("coolcats"));
        snap.holdings.push(Holding {
            wallet: Address::new("0xAB"),
            collection: "ghost".to_string(),
            token_id: "1".to_string(),
        });
        let first = validate_snapshot(&snap);
        let second = validate_snapshot(&snap);
        assert_eq!(first, second);
    }

    #[test]
    fn category_round_trips_unknown_strings() {
        let cat = Category::parse("metaverse-land");
        assert_eq!(cat, Category::Other("metaverse-land".to_string()));
        let json = serde_json::to_string(&cat).unwrap();
        assert_eq!(json, "\"metaverse-land\"");
        let back: Category = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cat);
        assert_eq!(serde_json::to_string(&Category::Pfp).unwrap(), "\"pfp\"");
    }
}
