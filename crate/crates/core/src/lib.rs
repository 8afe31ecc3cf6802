//! Event-time measurement of trading, price impact and price discovery
//! around news shocks in binary prediction markets.

pub mod diagnostics;
pub mod error;
pub mod eventstudy;
pub mod heterogeneity;
pub mod ingest;
pub mod pipeline;
pub mod placebo;
pub mod impact;
pub mod series;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
