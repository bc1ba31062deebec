//! Proxy re-encryption key management.

pub mod audit;
pub mod client;
pub mod envelope;
pub mod group;
pub mod ledger;
pub mod netsim;
pub mod node;
pub mod pre;
pub mod storage;
pub mod sym;
pub mod util;
