//! Per-agent prompt rendering.
//!
//! Templates are plain text with `{name}` placeholders. Leading lines that
//! start with `#` are a header and are dropped. Placeholders:
//!
//! | name | value |
//! |------|-------|
//! | `agent_id` | 1-based agent number |
//! | `n_agents`, `n_rus`, `n_antennas` | N, R, M |
//! | `slot` | 1-based slot number |
//! | `strategy` | strategy statement |
//! | `analysis` | PT1: semantic flags; PT2: per-RU numeric arrays |
//! | `feedback` | clause for the previous parse status |
//! | `output_format` | required JSON answer format |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::FeedbackStatus;
use crate::error::{Error, Result};
use crate::observation::{semantic_analysis, AgentObservation, SemanticAnalysis};

const PLACEHOLDERS: &[&str] = &[
    "agent_id",
    "n_agents",
    "n_rus",
    "n_antennas",
    "slot",
    "strategy",
    "analysis",
    "feedback",
    "output_format",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    /// Semantic analyses of strength, compatibility and comparison.
    Pt1,
    /// Raw per-RU gain arrays.
    Pt2,
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pt1" => Ok(TemplateId::Pt1),
            "pt2" => Ok(TemplateId::Pt2),
            other => Err(Error::Template(format!("unknown template id {other:?}"))),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::Pt1 => "pt1",
            TemplateId::Pt2 => "pt2",
        })
    }
}

/// What the model is asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Reproduce best-channel-quality scheduling with `k` stations.
    Bcq { k: usize },
    /// Maximize the slot rate-sum using strength and compatibility.
    RateSum,
}

impl FromStr for Strategy {
    type Err = Error;

    /// `bcq:K` or `rate-sum`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "rate-sum" || lower == "ratesum" {
            return Ok(Strategy::RateSum);
        }
        lower
            .strip_prefix("bcq:")
            .and_then(|k| k.parse().ok())
            .map(|k| Strategy::Bcq { k })
            .ok_or_else(|| Error::Template(format!("unknown strategy {s:?}")))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Bcq { k } => write!(f, "bcq:{k}"),
            Strategy::RateSum => f.write_str("rate-sum"),
        }
    }
}

/// A parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    body: String,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self> {
        let body: String = text
            .lines()
            .skip_while(|l| l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        for name in placeholder_names(&body) {
            if !PLACEHOLDERS.contains(&name) {
                return Err(Error::Template(format!("unknown placeholder {{{name}}}")));
            }
        }
        Ok(Self { body })
    }

    /// Single-pass substitution; substituted values are not rescanned.
    pub fn render(&self, lookup: impl Fn(&str) -> Option<String>) -> String {
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_name(&after[..close]) => {
                    let name = &after[..close];
                    match lookup(name) {
                        Some(v) => out.push_str(&v),
                        None => out.push_str(&rest[open..open + close + 2]),
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn placeholder_names(body: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_name(&after[..close]) => {
                names.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub pt1: Template,
    pub pt2: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            pt1: Template::parse(include_str!("../templates/pt1.txt")).expect("bundled pt1"),
            pt2: Template::parse(include_str!("../templates/pt2.txt")).expect("bundled pt2"),
        }
    }
}

impl PromptTemplates {
    /// Loads `pt1.txt` and `pt2.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Ok(Self {
            pt1: Template::parse(&std::fs::read_to_string(dir.join("pt1.txt"))?)?,
            pt2: Template::parse(&std::fs::read_to_string(dir.join("pt2.txt"))?)?,
        })
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        match id {
            TemplateId::Pt1 => &self.pt1,
            TemplateId::Pt2 => &self.pt2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub template: TemplateId,
    pub strategy: Strategy,
    /// PT2 only: also embed the impact-factor arrays.
    pub include_impact: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            template: TemplateId::Pt1,
            strategy: Strategy::RateSum,
            include_impact: false,
        }
    }
}

/// The N prompts for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub slot: usize,
    pub template: TemplateId,
    pub strategy: Strategy,
    pub prompts: Vec<String>,
}

impl PromptBundle {
    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

pub fn render_feedback(status: &FeedbackStatus) -> String {
    match status {
        FeedbackStatus::Initial => "This is the first uplink slot, so there is no feedback yet.".to_string(),
        FeedbackStatus::ParseSuccess => "Your previous answer was parsed successfully.".to_string(),
        FeedbackStatus::ParseError(detail) => format!(
            "Your previous answer could not be parsed ({detail}). Reply with exactly one JSON object in the required format."
        ),
        FeedbackStatus::SelfCorrected(rus) => {
            let list: Vec<String> = rus.iter().map(|l| (l + 1).to_string()).collect();
            format!(
                "In the previous slot too many agents chose RU {}, so every assignment on {} was revoked.",
                list.join(", "),
                if rus.len() == 1 { "it" } else { "them" }
            )
        }
    }
}

fn strategy_statement(strategy: Strategy, n_rus: usize, n_antennas: usize) -> String {
    match strategy {
        Strategy::Bcq { k } => format!(
            "Follow the best channel quality (BCQ) strategy: the {k} agents with the strongest channels are assigned all {n_rus} RUs, and every other agent is assigned no RU."
        ),
        Strategy::RateSum => format!(
            "Maximize the uplink rate-sum of the slot. Prioritize the agent's channel strength and its spatial compatibility with the other agents, and compare these attributes with those of the other agents. No RU may be chosen by more than {n_antennas} agents in total."
        ),
    }
}

fn output_format(agent_id: usize, n_rus: usize) -> String {
    format!(
        "Answer with a single JSON object and nothing else, in this format:\n{{\"agent_id\": {agent_id}, \"assigned_rus\": [RU numbers between 1 and {n_rus}, or an empty list], \"reasoning\": \"one short sentence\"}}"
    )
}

fn semantic_lines(analysis: &SemanticAnalysis, agent: usize, strategy: Strategy) -> String {
    let id = agent + 1;
    let m = analysis.group_limit;
    let mut lines = vec![
        format!("- Agent_{id} {} one of the {m} strongest agents.", analysis.strength_flag(agent)),
        format!("- Agent_{id} {} one of the {m} most compatible agents.", analysis.compatibility_flag(agent)),
        format!(
            "- There are {} agents that are stronger and more compatible with others than Agent_{id}.",
            analysis.dominated_by[agent]
        ),
    ];
    if let Strategy::Bcq { k } = strategy {
        if k != m {
            lines.push(format!(
                "- Agent_{id} {} one of the {k} strongest agents.",
                if analysis.strongest_k(agent, k) { "is" } else { "is not" }
            ));
        }
    }
    lines.join("\n")
}

fn format_array(values: impl Iterator<Item = f64>) -> String {
    let items: Vec<String> = values.map(|v| format!("{v:.4e}")).collect();
    format!("[{}]", items.join(", "))
}

fn numeric_lines(obs: &AgentObservation, include_impact: bool) -> String {
    let (n, r) = (obs.zeta.n_stations(), obs.zeta.n_rus());
    let mut lines: Vec<String> = (0..r)
        .map(|l| format!("- Channel gains on RU_{}: {}", l + 1, format_array((0..n).map(|i| obs.zeta.get(i, l)))))
        .collect();
    if include_impact {
        lines.extend(
            (0..r).map(|l| format!("- Impact factors on RU_{}: {}", l + 1, format_array((0..n).map(|i| obs.eta.get(i, l))))),
        );
    }
    lines.join("\n")
}

/// Renders one prompt per observation for `slot` (0-based).
pub fn build_prompts(
    observations: &[AgentObservation],
    templates: &PromptTemplates,
    options: &PromptOptions,
    n_antennas: usize,
    slot: usize,
) -> PromptBundle {
    let analysis = observations
        .first()
        .map(|o| semantic_analysis(&o.zeta, &o.eta, n_antennas));
    let template = templates.get(options.template);
    let prompts = observations
        .iter()
        .map(|obs| {
            let (n, r) = (obs.zeta.n_stations(), obs.zeta.n_rus());
            let body = match (options.template, &analysis) {
                (TemplateId::Pt1, Some(a)) => semantic_lines(a, obs.agent, options.strategy),
                _ => numeric_lines(obs, options.include_impact),
            };
            template.render(|name| {
                Some(match name {
                    "agent_id" => (obs.agent + 1).to_string(),
                    "n_agents" => n.to_string(),
                    "n_rus" => r.to_string(),
                    "n_antennas" => n_antennas.to_string(),
                    "slot" => (slot + 1).to_string(),
                    "strategy" => strategy_statement(options.strategy, r, n_antennas),
                    "analysis" => body.clone(),
                    "feedback" => render_feedback(&obs.feedback),
                    "output_format" => output_format(obs.agent + 1, r),
                    _ => return None,
                })
            })
        })
        .collect();
    PromptBundle {
        slot,
        template: options.template,
        strategy: options.strategy,
        prompts,
    }
}
