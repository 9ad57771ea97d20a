//! Agent state: channel gains, impact factors, previous feedback, and the
//! semantic rankings injected into prompts.
//!
//! Impact factor of agent `i` on RU `l`:
//!
//! ```text
//! rel[k][l] = zeta[k][l] / zeta[i][l]                  (k != i)
//! eta[i][l] = R * sum_k rel[k][l] / sum_l' sum_k rel[k][l']
//! ```
//!
//! so every row of `eta` sums to R, and scaling all gains by a constant
//! leaves `eta` unchanged.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::allocation::FeedbackStatus;
use crate::channel::GainMatrix;
use crate::error::{Error, Result};

/// Floor applied to an agent's own gain before dividing by it.
pub const GAIN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactMatrix {
    n_stations: usize,
    n_rus: usize,
    eta: Vec<f64>,
    /// Unnormalized `sum_l sum_k rel[k][l]` per agent: how strong the others
    /// are relative to this agent, summed over RUs. Lower is more compatible.
    relative_interference: Vec<f64>,
}

impl ImpactMatrix {
    pub fn get(&self, station: usize, ru: usize) -> f64 {
        self.eta[station * self.n_rus + ru]
    }

    pub fn row(&self, station: usize) -> &[f64] {
        &self.eta[station * self.n_rus..(station + 1) * self.n_rus]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.eta.chunks(self.n_rus.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn n_rus(&self) -> usize {
        self.n_rus
    }

    pub fn relative_interference(&self) -> &[f64] {
        &self.relative_interference
    }
}

pub fn impact_factors(zeta: &GainMatrix) -> ImpactMatrix {
    let (n, r) = (zeta.n_stations(), zeta.n_rus());
    let mut eta = vec![1.0; n * r];
    let mut relative_interference = vec![0.0; n];
    if n < 2 {
        return ImpactMatrix {
            n_stations: n,
            n_rus: r,
            eta,
            relative_interference,
        };
    }
    let mut per_ru = vec![0.0; r];
    for i in 0..n {
        for (l, acc) in per_ru.iter_mut().enumerate() {
            let own = zeta.get(i, l).max(GAIN_FLOOR);
            *acc = (0..n).filter(|&k| k != i).map(|k| zeta.get(k, l) / own).sum();
        }
        let total: f64 = per_ru.iter().sum();
        relative_interference[i] = total;
        if total > 0.0 {
            for (l, v) in per_ru.iter().enumerate() {
                eta[i * r + l] = r as f64 * v / total;
            }
        }
    }
    ImpactMatrix {
        n_stations: n,
        n_rus: r,
        eta,
        relative_interference,
    }
}

/// One agent's state: shared gains and impact factors plus its own feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub agent: usize,
    pub zeta: Arc<GainMatrix>,
    pub eta: Arc<ImpactMatrix>,
    pub feedback: FeedbackStatus,
}

pub fn make_observations(
    gains: GainMatrix,
    eta: ImpactMatrix,
    prev_feedback: &[FeedbackStatus],
) -> Result<Vec<AgentObservation>> {
    let n = gains.n_stations();
    if eta.n_stations() != n || eta.n_rus() != gains.n_rus() {
        return Err(Error::Shape("gain and impact matrices differ in shape".into()));
    }
    if prev_feedback.len() != n {
        return Err(Error::Shape(format!("{} feedback entries for {n} agents", prev_feedback.len())));
    }
    let zeta = Arc::new(gains);
    let eta = Arc::new(eta);
    Ok(prev_feedback
        .iter()
        .enumerate()
        .map(|(agent, f)| AgentObservation {
            agent,
            zeta: Arc::clone(&zeta),
            eta: Arc::clone(&eta),
            feedback: f.clone(),
        })
        .collect())
}

/// Serializable per-slot view of the shared observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSnapshot {
    pub zeta: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub feedback: Vec<FeedbackStatus>,
}

impl ObservationSnapshot {
    pub fn from_observations(obs: &[AgentObservation]) -> Self {
        match obs.first() {
            None => Self {
                zeta: Vec::new(),
                eta: Vec::new(),
                feedback: Vec::new(),
            },
            Some(first) => Self {
                zeta: first.zeta.rows(),
                eta: first.eta.rows(),
                feedback: obs.iter().map(|o| o.feedback.clone()).collect(),
            },
        }
    }
}

/// Rank-based attributes for every agent in a slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticAnalysis {
    /// Among the M strongest by aggregate gain.
    pub strongest: Vec<bool>,
    /// Among the M lowest by relative interference.
    pub most_compatible: Vec<bool>,
    /// Count of agents both strictly stronger and strictly more compatible.
    pub dominated_by: Vec<usize>,
    /// 0-based position in the strength ordering.
    pub strength_rank: Vec<usize>,
    pub group_limit: usize,
}

impl SemanticAnalysis {
    pub fn strength_flag(&self, agent: usize) -> &'static str {
        if self.strongest[agent] {
            "is"
        } else {
            "is not"
        }
    }

    /// Whether `agent` ranks among the `k` strongest (same ordering as `strongest`).
    pub fn strongest_k(&self, agent: usize, k: usize) -> bool {
        self.strength_rank[agent] < k
    }

    pub fn compatibility_flag(&self, agent: usize) -> &'static str {
        if self.most_compatible[agent] {
            "is"
        } else {
            "is not"
        }
    }
}

/// Indices sorted by `key` (descending when `descending`), ties to lower index.
pub fn rank_by(key: &[f64], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = key[a].total_cmp(&key[b]);
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    idx
}

fn top_flags(order: &[usize], count: usize) -> Vec<bool> {
    let mut flags = vec![false; order.len()];
    for &i in order.iter().take(count) {
        flags[i] = true;
    }
    flags
}

pub fn semantic_analysis(zeta: &GainMatrix, eta: &ImpactMatrix, n_antennas: usize) -> SemanticAnalysis {
    let n = zeta.n_stations();
    let strength: Vec<f64> = (0..n).map(|i| zeta.total(i)).collect();
    let interference = eta.relative_interference();
    let strength_order = rank_by(&strength, true);
    let strongest = top_flags(&strength_order, n_antennas);
    let mut strength_rank = vec![0; n];
    for (pos, &i) in strength_order.iter().enumerate() {
        strength_rank[i] = pos;
    }
    let most_compatible = top_flags(&rank_by(interference, false), n_antennas);
    let dominated_by = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| strength[j] > strength[i] && interference[j] < interference[i])
                .count()
        })
        .collect();
    SemanticAnalysis {
        strongest,
        most_compatible,
        dominated_by,
        strength_rank,
        group_limit: n_antennas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gains(rows: &[&[f64]]) -> GainMatrix {
        GainMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uniform_gains_give_unit_eta() {
        let g = gains(&[&[2.0; 9], &[2.0; 9], &[2.0; 9]]);
        let eta = impact_factors(&g);
        for i in 0..3 {
            for l in 0..9 {
                assert!((eta.get(i, l) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_agent_hand_evaluation() {
        // agent 1 flat; agent 2 concentrated on RU 0
        let g = gains(&[&[1.0, 1.0], &[3.0, 1.0]]);
        let eta = impact_factors(&g);
        // agent 0: rel = [3, 1] -> eta = 2 * [3/4, 1/4]
        assert!((eta.get(0, 0) - 1.5).abs() < 1e-12);
        assert!((eta.get(0, 1) - 0.5).abs() < 1e-12);
        // agent 1: rel = [1/3, 1] -> eta = 2 * [1/4, 3/4]
        assert!((eta.get(1, 0) - 0.5).abs() < 1e-12);
        assert!((eta.get(1, 1) - 1.5).abs() < 1e-12);
        assert!(eta.get(0, 0) > eta.get(0, 1));
    }

    #[test]
    fn single_agent_is_all_ones() {
        let eta = impact_factors(&gains(&[&[0.3, 0.0, 5.0]]));
        assert_eq!(eta.row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_gains_do_not_blow_up() {
        let eta = impact_factors(&gains(&[&[0.0, 1.0], &[1.0, 0.0], &[0.0, 0.0]]));
        for i in 0..3 {
            assert!(eta.row(i).iter().all(|v| v.is_finite()));
            assert!((eta.row(i).iter().sum::<f64>() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn saturated_membership() {
        let g = gains(&[&[1.0, 2.0], &[3.0, 1.0], &[0.5, 0.5], &[2.0, 2.0]]);
        let eta = impact_factors(&g);
        let s = semantic_analysis(&g, &eta, 4);
        assert!(s.strongest.iter().all(|&b| b));
        assert!(s.most_compatible.iter().all(|&b| b));
        // agent 3 has the largest total gain, so nobody dominates it
        assert_eq!(s.dominated_by[3], 0);
    }

    #[test]
    fn weakest_agent_flags() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0 + i as f64; 9]).collect();
        let g = GainMatrix::from_rows(&rows).unwrap();
        let eta = impact_factors(&g);
        let s = semantic_analysis(&g, &eta, 4);
        assert_eq!(s.strength_flag(0), "is not");
        assert_eq!(s.compatibility_flag(0), "is not");
        assert_eq!(s.strength_flag(9), "is");
        assert_eq!(s.dominated_by[0], 9);
        assert_eq!(s.strongest.iter().filter(|&&b| b).count(), 4);
    }

    #[test]
    fn three_agent_sort_oracle() {
        let g = gains(&[&[1.0, 4.0], &[2.0, 2.0], &[5.0, 0.5]]);
        let eta = impact_factors(&g);
        let s = semantic_analysis(&g, &eta, 2);
        // independent brute force: pairwise comparison counts
        let tot: Vec<f64> = (0..3).map(|i| g.row(i).iter().sum()).collect();
        let inter = eta.relative_interference();
        for i in 0..3 {
            let stronger = (0..3).filter(|&j| tot[j] > tot[i] || (tot[j] == tot[i] && j < i)).count();
            assert_eq!(s.strongest[i], stronger < 2);
            let better = (0..3)
                .filter(|&j| inter[j] < inter[i] || (inter[j] == inter[i] && j < i))
                .count();
            assert_eq!(s.most_compatible[i], better < 2);
        }
    }

    #[test]
    fn observations_route_feedback() {
        let g = gains(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let eta = impact_factors(&g);
        let init = vec![FeedbackStatus::Initial; 4];
        let obs = make_observations(g.clone(), eta.clone(), &init).unwrap();
        assert_eq!(obs.len(), 4);
        assert!(obs.iter().all(|o| o.feedback == FeedbackStatus::Initial));
        let mut fb = vec![FeedbackStatus::ParseSuccess; 4];
        fb[2] = FeedbackStatus::ParseError("x".into());
        let obs = make_observations(g, eta, &fb).unwrap();
        let errs: Vec<usize> = obs.iter().filter(|o| o.feedback.is_error()).map(|o| o.agent).collect();
        assert_eq!(errs, vec![2]);
        assert!(Arc::ptr_eq(&obs[0].zeta, &obs[3].zeta));
    }
}
