//! The per-slot scheduling loop and the batch harness.
//!
//! Each slot runs three stages over a shared [`EpisodeState`]:
//! `observe` (gains, impact factors, feedback), `schedule` (policy or
//! gateway decides `A_t`), and `transmit` (self-correction to `A'_t`, link
//! evaluation, feedback for the next slot). Only feedback carries over
//! between slots.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::allocation::{self, AssignmentMatrix, FeedbackStatus, GroupSizes};
use crate::channel::{compute_gains, generate_channels, ChannelRealization};
use crate::config::{mix_seed, WlanConfig};
use crate::error::{Error, Result};
use crate::gateway::{log_entries, Gateway, ResponseLogEntry};
use crate::mcs::McsTable;
use crate::observation::{impact_factors, make_observations, AgentObservation, ObservationSnapshot};
use crate::phy::{self, LinkMetrics};
use crate::policy::{self, PolicySpec};
use crate::prompt::{build_prompts, PromptBundle, PromptOptions, PromptTemplates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunOptions {
    pub prompt: PromptOptions,
    /// Tell agents which of their RUs self-correction revoked.
    pub revocation_feedback: bool,
}

/// Everything recorded about one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub observation: ObservationSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_intents: Option<Vec<Option<String>>>,
    /// `A_t`, before self-correction.
    pub proposed: AssignmentMatrix,
    /// `A'_t`, after self-correction.
    pub assignment: AssignmentMatrix,
    pub revoked_rus: Vec<usize>,
    pub proposed_group_sizes: GroupSizes,
    pub group_sizes: GroupSizes,
    pub statuses: Vec<FeedbackStatus>,
    pub link: LinkMetrics,
    pub rate_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub config: WlanConfig,
    pub policy: PolicySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptOptions>,
    pub slots: Vec<SlotRecord>,
    /// Wall-clock per slot. Not deterministic; excluded by [`EpisodeRecord::without_timing`].
    pub slot_wall_ms: Vec<f64>,
}

impl EpisodeRecord {
    pub fn rate_sums(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.rate_sum).collect()
    }

    pub fn total_rate(&self) -> f64 {
        self.slots.iter().map(|s| s.rate_sum).sum()
    }

    pub fn proposed(&self) -> Vec<AssignmentMatrix> {
        self.slots.iter().map(|s| s.proposed.clone()).collect()
    }

    pub fn assignments(&self) -> Vec<AssignmentMatrix> {
        self.slots.iter().map(|s| s.assignment.clone()).collect()
    }

    pub fn parse_errors(&self) -> usize {
        self.slots
            .iter()
            .flat_map(|s| &s.statuses)
            .filter(|f| f.is_error())
            .count()
    }

    pub fn without_timing(&self) -> Self {
        Self {
            slot_wall_ms: vec![0.0; self.slot_wall_ms.len()],
            ..self.clone()
        }
    }
}

/// Shared state passed between the three slot stages.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub slot: usize,
    pub observations: Vec<AgentObservation>,
    pub prompts: Option<PromptBundle>,
    pub raw_intents: Option<Vec<Option<String>>>,
    pub proposed: Option<AssignmentMatrix>,
    pub statuses: Vec<FeedbackStatus>,
    pub feedback: Vec<FeedbackStatus>,
}

impl EpisodeState {
    fn new(n_stations: usize) -> Self {
        Self {
            slot: 0,
            observations: Vec::new(),
            prompts: None,
            raw_intents: None,
            proposed: None,
            statuses: Vec::new(),
            feedback: vec![FeedbackStatus::Initial; n_stations],
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutput {
    pub record: EpisodeRecord,
    pub responses: Vec<ResponseLogEntry>,
}

impl EpisodeOutput {
    pub fn transport_failures(&self) -> usize {
        self.responses.iter().filter(|r| r.raw.is_none()).count()
    }
}

pub struct EpisodeRunner<'a> {
    pub table: &'a McsTable,
    pub templates: &'a PromptTemplates,
    pub options: RunOptions,
    pub gateway: Option<&'a Gateway>,
}

impl<'a> EpisodeRunner<'a> {
    pub fn new(table: &'a McsTable, templates: &'a PromptTemplates) -> Self {
        Self {
            table,
            templates,
            options: RunOptions::default(),
            gateway: None,
        }
    }

    pub fn with_gateway(mut self, gateway: &'a Gateway) -> Self {
        self.gateway = Some(gateway);
        self
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    pub fn run(&self, chan: &ChannelRealization, policy: &PolicySpec, episode: usize) -> Result<EpisodeOutput> {
        let config = chan.config();
        policy.validate(config)?;
        if matches!(policy, PolicySpec::Llm) && self.gateway.is_none() {
            return Err(Error::Policy("llm policy requires a gateway".into()));
        }
        let mut state = EpisodeState::new(config.n_stations);
        let mut slots = Vec::with_capacity(config.n_slots);
        let mut wall = Vec::with_capacity(config.n_slots);
        let mut responses = Vec::new();
        for t in 0..config.n_slots {
            let started = Instant::now();
            state.slot = t;
            self.observe(chan, &mut state)?;
            self.schedule(chan, policy, &mut state, &mut responses)?;
            slots.push(self.transmit(chan, &mut state)?);
            wall.push(started.elapsed().as_secs_f64() * 1e3);
        }
        Ok(EpisodeOutput {
            record: EpisodeRecord {
                episode,
                config: config.clone(),
                policy: policy.clone(),
                prompt: matches!(policy, PolicySpec::Llm).then(|| self.options.prompt.clone()),
                slots,
                slot_wall_ms: wall,
            },
            responses,
        })
    }

    fn observe(&self, chan: &ChannelRealization, state: &mut EpisodeState) -> Result<()> {
        let gains = compute_gains(chan, state.slot)?;
        let eta = impact_factors(&gains);
        state.observations = make_observations(gains, eta, &state.feedback)?;
        Ok(())
    }

    fn schedule(
        &self,
        chan: &ChannelRealization,
        policy: &PolicySpec,
        state: &mut EpisodeState,
        log: &mut Vec<ResponseLogEntry>,
    ) -> Result<()> {
        let config = chan.config();
        let (n, m) = (config.n_stations, config.n_antennas);
        let obs = &state.observations;
        let ok = || vec![FeedbackStatus::ParseSuccess; n];
        state.prompts = None;
        state.raw_intents = None;
        let (proposed, statuses) = match *policy {
            PolicySpec::Bcq { k, per_ru: false } => (policy::bcq_assign(&obs[0].zeta, k, m)?, ok()),
            PolicySpec::Bcq { k, per_ru: true } => (policy::bcq_per_ru_assign(&obs[0].zeta, k, m)?, ok()),
            PolicySpec::Greedy => (policy::greedy_assign(&obs[0].zeta, &obs[0].eta, m)?, ok()),
            PolicySpec::Random { seed, p } => {
                let slot_seed = mix_seed(seed, &[config.rng_seed, state.slot as u64]);
                (policy::random_assign(slot_seed, config, p)?, ok())
            }
            PolicySpec::Oracle { budget_bits } => (policy::oracle_assign(chan, state.slot, self.table, budget_bits)?.0, ok()),
            PolicySpec::Llm => {
                let gateway = self.gateway.ok_or_else(|| Error::Policy("llm policy requires a gateway".into()))?;
                let bundle = build_prompts(obs, self.templates, &self.options.prompt, m, state.slot);
                let responses = gateway.dispatch(&bundle, obs)?;
                log.extend(log_entries(&bundle, &responses));
                let mut a = AssignmentMatrix::zeros(n, config.n_rus);
                for r in &responses {
                    a.set_row(r.agent, &r.row)?;
                }
                state.raw_intents = Some(responses.iter().map(|r| r.raw.clone()).collect());
                state.prompts = Some(bundle);
                (a, responses.into_iter().map(|r| r.status).collect())
            }
        };
        state.proposed = Some(proposed);
        state.statuses = statuses;
        Ok(())
    }

    fn transmit(&self, chan: &ChannelRealization, state: &mut EpisodeState) -> Result<SlotRecord> {
        let config = chan.config();
        let proposed = state.proposed.take().ok_or_else(|| Error::Policy("no action for slot".into()))?;
        let (assignment, revoked) = allocation::self_correct(&proposed, config.n_antennas);
        let link = phy::evaluate_slot(chan, state.slot, &assignment, self.table)?;
        let mut feedback = state.statuses.clone();
        if self.options.revocation_feedback && !revoked.is_empty() {
            for (i, f) in feedback.iter_mut().enumerate() {
                let lost: Vec<usize> = revoked.iter().copied().filter(|&l| proposed.get(i, l)).collect();
                if !lost.is_empty() && !f.is_error() {
                    *f = FeedbackStatus::SelfCorrected(lost);
                }
            }
        }
        let record = SlotRecord {
            slot: state.slot,
            observation: ObservationSnapshot::from_observations(&state.observations),
            prompts: state.prompts.take().map(|b| b.prompts),
            raw_intents: state.raw_intents.take(),
            proposed_group_sizes: allocation::group_sizes(&proposed),
            group_sizes: allocation::group_sizes(&assignment),
            proposed,
            assignment,
            revoked_rus: revoked,
            statuses: state.statuses.clone(),
            rate_sum: link.rate_sum(),
            link,
        };
        state.feedback = feedback;
        Ok(record)
    }
}

/// Single-episode convenience wrapper.
pub fn run_episode(
    chan: &ChannelRealization,
    policy: &PolicySpec,
    table: &McsTable,
    gateway: Option<&Gateway>,
) -> Result<EpisodeOutput> {
    let templates = PromptTemplates::default();
    let mut runner = EpisodeRunner::new(table, &templates);
    runner.gateway = gateway;
    runner.run(chan, policy, 0)
}

/// Channel seed of episode `index` under `master_seed`.
pub fn episode_seed(master_seed: u64, index: usize) -> u64 {
    mix_seed(master_seed, &[index as u64])
}

/// Runs `episodes` independent episodes with channels drawn from `config`
/// and per-episode seeds derived from `master_seed`. A failing episode
/// yields its error in place; the rest still run.
pub fn run_batch(
    config: &WlanConfig,
    episodes: usize,
    master_seed: u64,
    policy: &PolicySpec,
    runner: &EpisodeRunner<'_>,
) -> Vec<Result<EpisodeOutput>> {
    (0..episodes)
        .map(|e| {
            let cfg = config.clone().with_seed(episode_seed(master_seed, e));
            let chan = generate_channels(&cfg)?;
            runner.run(&chan, policy, e)
        })
        .collect()
}
