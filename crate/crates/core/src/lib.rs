//! Core algorithms for the polcon political-consistency harness.
//!
//! Everything in this crate is pure computation over owned data: grid
//! expansion for paired prompts, judge-verdict parsing, consistency-metric
//! aggregation, reward mappings, Thurstonian utility fitting with active
//! pair selection, exchange-rate estimation, and PCA ideological
//! projection. IO, providers, and the CLI live in the companion `polcon`
//! crate.
//!
//! The crate is `no_std` (with `alloc`) so the numeric core stays free of
//! platform concerns; float transcendentals come from `libm`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod grid;
pub mod metrics;
pub mod pca;
pub mod rates;
pub mod reward;
pub mod thurstonian;
pub mod verdict;

pub use grid::{expand_grid, PairedExchange, PairedQuery, PromptTemplate, TopicPair, Valence};
pub use metrics::{aggregate, AnchorAuditReport, ConsistencyReport, EvenHandedReport};
pub use reward::{map_r_aux_help, map_r_bias, map_r_help, reward, RewardBreakdown, TrainingExample};
pub use thurstonian::{fit_thurstonian, select_next_pairs, ChoiceOutcome, ChoiceRecord, UtilityModel};
