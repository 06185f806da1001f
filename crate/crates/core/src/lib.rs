//! Impression-level bidding toolkit for sponsored search.
//!
//! Infers take-rates and virtual budgets from keyword bids, replays logged
//! GSP auctions under `alpha * tk * cvr * item_price` bids, and solves the
//! campaign-level GMV and style-comparison allocations on top of replay.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod model;
pub mod money;
pub mod optimize;
pub mod replay;
pub mod synth;

pub use error::{Error, Result};
pub use model::{AdId, AuctionCandidate, AuctionLog, AuctionRecord, Campaign, DayFilter, ReplaySummary};
pub use money::Money;
