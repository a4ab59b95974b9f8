//! Batch harness for measuring covert political bias in language models.
//!
//! Pipelines: the paired-prompt consistency benchmark, six LLM judges
//! with tagged-output parsing, the training-data pipeline with anchor
//! generation and auditing, a reward stream for external RL trainers, and
//! three out-of-distribution evaluations (even-handedness, exchange-rate
//! egalitarianism, and a Political Values projection). The numeric core
//! lives in `polcon-core`; this crate adds providers, persistence, and
//! the `polcon` CLI.

pub mod artifacts;
pub mod assets;
pub mod gateway;
pub mod cli;
pub mod config;
pub mod judges;
pub mod pcp;
pub mod ood;
pub mod pipeline;
pub mod report;
pub mod rewards;

pub use gateway::{ChatRequest, ChatResponse, Gateway, GatewayError, MockProvider, ProviderConfig};
