//! Campaign tooling around `huntfuzz-core`: target generation, campaign
//! modes, the benchmark grid, and report aggregation.

pub mod bench;
pub mod campaign;
pub mod config;
pub mod gen;
pub mod report;

pub use campaign::{run_campaign, CampaignOutcome};
pub use config::{CampaignConfig, Mode};
pub use gen::{generate_targets, GeneratedTarget, GeneratorSpec, MotifCounts};
