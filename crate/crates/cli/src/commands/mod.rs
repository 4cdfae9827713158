//! One module per top-level subcommand family.

pub mod data;
pub mod features;
pub mod gcn;
pub mod graph;
pub mod sim;
pub mod stats;
