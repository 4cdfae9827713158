//! Wash-trade detection: a token whose sales circulate among a tiny set of
//! wallets inside a short window is treated as self-traded.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::model::Transaction;

pub const DEFAULT_WASH_MAX_WALLETS: usize = 2;
pub const DEFAULT_WASH_MIN_TRADES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WashFlag {
    pub collection: String,
    pub token_id: String,
    /// Start of the first qualifying window.
    pub window_start: DateTime<Utc>,
    pub trades: usize,
    pub distinct_wallets: usize,
}

/// Flags tokens with at least `min_trades` sales inside `window` whose
/// buyers and sellers together span at most `max_wallet_set` wallets.
/// Checking runs of exactly `min_trades` consecutive sales suffices: any
/// longer qualifying run contains one, and wallet sets only grow with the
/// run.
pub fn detect_wash_trades(
    transactions: &[Transaction],
    window: Duration,
    max_wallet_set: usize,
    min_trades: usize,
) -> Vec<WashFlag> {
    let mut by_token: BTreeMap<(&str, &str), Vec<&Transaction>> = BTreeMap::new();
    for tx in transactions {
        by_token
            .entry((tx.collection.as_str(), tx.token_id.as_str()))
            .or_default()
            .push(tx);
    }

    let run = min_trades.max(1);
    let mut flags = Vec::new();
    for ((collection, token_id), mut txs) in by_token {
        txs.sort_by_key(|tx| tx.timestamp);
        if txs.len() < run {
            continue;
        }
        for start in 0..=txs.len() - run {
            let slice = &txs[start..start + run];
            if slice[run - 1].timestamp - slice[0].timestamp > window {
                continue;
            }
            let wallets: BTreeSet<&str> = slice
                .iter()
                .flat_map(|tx| [tx.buyer.as_str(), tx.seller.as_str()])
                .collect();
            if wallets.len() <= max_wallet_set {
                flags.push(WashFlag {
                    collection: collection.to_string(),
                    token_id: token_id.to_string(),
                    window_start: slice[0].timestamp,
                    trades: run,
                    distinct_wallets: wallets.len(),
                });
                break;
            }
        }
    }
    flags
}
