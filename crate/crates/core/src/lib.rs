//! Uplink scheduled-access simulator for a joint MU-MIMO-OFDMA WLAN.
//!
//! Each AP-station uplink connection is treated as an agent that receives a
//! resource-unit (RU) assignment every slot. Assignments come from classical
//! baselines, an exhaustive oracle, or a language-model backend prompted with
//! per-agent context. The physical layer is evaluated analytically: MMSE
//! receive weights, per-RU SINR and a piecewise-linear MCS rate envelope.
//!
//! Module map:
//!
//! * [`config`] / [`channel`]: WLAN parameters and seeded frequency-selective channels.
//! * [`phy`] / [`mcs`]: power split, MMSE weights, SINR, rates.
//! * [`observation`]: gains, impact factors, semantic analyses.
//! * [`allocation`]: assignment matrices, constraint checks, self-correction.
//! * [`policy`]: BCQ, random, greedy and oracle policies.
//! * [`prompt`]: per-agent prompt rendering from template files.
//! * [`gateway`] / [`intent`]: prompt dispatch and JSON intent parsing.
//! * [`episode`]: the slot loop and batch harness.
//! * [`metrics`]: assignment error, gain, CDF, group-size distributions.
//! * [`store`]: trace files, episode records and CSV tables on disk.

pub mod allocation;
pub mod channel;
pub mod config;
pub mod episode;
pub mod error;
pub mod gateway;
pub mod intent;
pub mod mcs;
pub mod metrics;
pub mod observation;
pub mod phy;
pub mod policy;
pub mod prompt;
pub mod store;

pub use allocation::{AssignmentMatrix, FeedbackStatus, GroupSizes};
pub use channel::{ChannelRealization, GainMatrix};
pub use config::WlanConfig;
pub use episode::{EpisodeRecord, SlotRecord};
pub use error::{Error, Result};
pub use mcs::McsTable;
pub use observation::{AgentObservation, ImpactMatrix, SemanticAnalysis};
pub use phy::{LinkMetrics, PowerAllocation};
pub use policy::PolicySpec;
