//! Classical scheduling policies and the exhaustive oracle.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{self, AssignmentMatrix};
use crate::channel::{ChannelRealization, GainMatrix};
use crate::config::WlanConfig;
use crate::error::{Error, Result};
use crate::mcs::McsTable;
use crate::observation::{rank_by, ImpactMatrix};
use crate::phy;

/// Default cap on oracle enumeration: 2^20 candidate matrices.
pub const DEFAULT_ORACLE_BUDGET_BITS: usize = 20;

/// Which policy produces each slot's assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// The `k` strongest stations get every RU. With `per_ru`, the `k`
    /// strongest on each RU are chosen independently.
    Bcq { k: usize, per_ru: bool },
    /// Bernoulli(`p`) entries, then self-corrected. Reseeded per slot.
    Random { seed: u64, p: f64 },
    Greedy,
    Oracle { budget_bits: usize },
    /// Decisions come from the agent gateway.
    Llm,
}

impl PolicySpec {
    pub fn bcq(k: usize) -> Self {
        PolicySpec::Bcq { k, per_ru: false }
    }

    pub fn oracle() -> Self {
        PolicySpec::Oracle {
            budget_bits: DEFAULT_ORACLE_BUDGET_BITS,
        }
    }

    pub fn validate(&self, config: &WlanConfig) -> Result<()> {
        match *self {
            PolicySpec::Bcq { k, .. } => check_bcq_k(k, config.n_stations, config.n_antennas),
            PolicySpec::Random { p, .. } if !(0.0..=1.0).contains(&p) => {
                Err(Error::Policy(format!("random probability {p} outside [0, 1]")))
            }
            PolicySpec::Oracle { budget_bits } => {
                let bits = config.n_stations * config.n_rus;
                if bits > budget_bits {
                    Err(Error::OracleBudget {
                        bits,
                        budget: budget_bits,
                    })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Bcq { k, per_ru: false } => write!(f, "bcq:{k}"),
            PolicySpec::Bcq { k, per_ru: true } => write!(f, "bcq-ru:{k}"),
            PolicySpec::Random { seed, p } if *p == 0.5 => write!(f, "random:{seed}"),
            PolicySpec::Random { seed, p } => write!(f, "random:{seed}:{p}"),
            PolicySpec::Greedy => f.write_str("greedy"),
            PolicySpec::Oracle { .. } => f.write_str("oracle"),
            PolicySpec::Llm => f.write_str("llm"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    /// Accepts `bcq:K`, `bcq-ru:K`, `random[:SEED[:P]]`, `greedy`,
    /// `oracle[:BITS]`, `llm`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::Policy(format!("cannot parse policy {s:?}"));
        let num = |v: &str| v.parse::<u64>().map_err(|_| bad());
        let spec = match (head.as_str(), args.as_slice()) {
            ("bcq", [k]) => PolicySpec::Bcq {
                k: num(k)? as usize,
                per_ru: false,
            },
            ("bcq-ru", [k]) => PolicySpec::Bcq {
                k: num(k)? as usize,
                per_ru: true,
            },
            ("random", []) => PolicySpec::Random { seed: 0, p: 0.5 },
            ("random", [seed]) => PolicySpec::Random { seed: num(seed)?, p: 0.5 },
            ("random", [seed, p]) => PolicySpec::Random {
                seed: num(seed)?,
                p: p.parse().map_err(|_| bad())?,
            },
            ("greedy", []) => PolicySpec::Greedy,
            ("oracle", []) => PolicySpec::oracle(),
            ("oracle", [bits]) => PolicySpec::Oracle {
                budget_bits: num(bits)? as usize,
            },
            ("llm", []) => PolicySpec::Llm,
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

fn check_bcq_k(k: usize, n_stations: usize, n_antennas: usize) -> Result<()> {
    let limit = n_stations.min(n_antennas);
    if k < 1 || k > limit {
        Err(Error::Policy(format!("bcq k = {k} outside 1..={limit} (N = {n_stations}, M = {n_antennas})")))
    } else {
        Ok(())
    }
}

/// Assigns all RUs to the `k` stations with the largest aggregate gain.
pub fn bcq_assign(gains: &GainMatrix, k: usize, n_antennas: usize) -> Result<AssignmentMatrix> {
    let (n, r) = (gains.n_stations(), gains.n_rus());
    check_bcq_k(k, n, n_antennas)?;
    let totals: Vec<f64> = (0..n).map(|i| gains.total(i)).collect();
    let mut out = AssignmentMatrix::zeros(n, r);
    for &i in rank_by(&totals, true).iter().take(k) {
        out.set_row(i, &vec![true; r])?;
    }
    Ok(out)
}

/// Per-RU variant: on each RU, the `k` stations with the largest gain there.
pub fn bcq_per_ru_assign(gains: &GainMatrix, k: usize, n_antennas: usize) -> Result<AssignmentMatrix> {
    let (n, r) = (gains.n_stations(), gains.n_rus());
    check_bcq_k(k, n, n_antennas)?;
    let mut out = AssignmentMatrix::zeros(n, r);
    for l in 0..r {
        let column: Vec<f64> = (0..n).map(|i| gains.get(i, l)).collect();
        for &i in rank_by(&column, true).iter().take(k) {
            out.set(i, l, true);
        }
    }
    Ok(out)
}

/// Compatibility-aware greedy admission.
///
/// On each RU, agents are ranked by `zeta[i][l] / eta[i][l]`: their gain on
/// the RU discounted by how strong the other agents are there relative to
/// them. The top M are admitted, so the group-size limit holds by construction.
pub fn greedy_assign(gains: &GainMatrix, eta: &ImpactMatrix, n_antennas: usize) -> Result<AssignmentMatrix> {
    let (n, r) = (gains.n_stations(), gains.n_rus());
    if eta.n_stations() != n || eta.n_rus() != r {
        return Err(Error::Shape("gain and impact matrices differ in shape".into()));
    }
    let mut out = AssignmentMatrix::zeros(n, r);
    for l in 0..r {
        let score: Vec<f64> = (0..n)
            .map(|i| gains.get(i, l) / eta.get(i, l).max(f64::MIN_POSITIVE))
            .collect();
        for &i in rank_by(&score, true).iter().take(n_antennas) {
            out.set(i, l, true);
        }
    }
    Ok(out)
}

/// Bernoulli(`p`) assignment followed by self-correction.
pub fn random_assign(seed: u64, config: &WlanConfig, p: f64) -> Result<AssignmentMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Policy(format!("random probability {p} outside [0, 1]")));
    }
    let (n, r) = (config.n_stations, config.n_rus);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = AssignmentMatrix::zeros(n, r);
    for i in 0..n {
        for l in 0..r {
            raw.set(i, l, rng.random_bool(p));
        }
    }
    Ok(allocation::self_correct(&raw, config.n_antennas).0)
}

/// Matrix for candidate `index`: entry (i, l) is bit `bits - 1 - (i*R + l)`,
/// so numeric order of indices is lexicographic (row-major) order of matrices.
fn candidate(index: u64, n: usize, r: usize) -> AssignmentMatrix {
    let bits = n * r;
    let mut a = AssignmentMatrix::zeros(n, r);
    for i in 0..n {
        for l in 0..r {
            let pos = bits - 1 - (i * r + l);
            a.set(i, l, index >> pos & 1 == 1);
        }
    }
    a
}

fn candidate_feasible(index: u64, n: usize, r: usize, max_group: usize) -> bool {
    let bits = n * r;
    (0..r).all(|l| (0..n).filter(|i| index >> (bits - 1 - (i * r + l)) & 1 == 1).count() <= max_group)
}

/// Exhaustive maximizer of the slot rate-sum over every feasible assignment.
///
/// Ties go to the lexicographically smallest matrix. Refuses instances with
/// more than `budget_bits` assignment bits.
pub fn oracle_assign(
    chan: &ChannelRealization,
    slot: usize,
    table: &McsTable,
    budget_bits: usize,
) -> Result<(AssignmentMatrix, f64)> {
    chan.check_slot(slot)?;
    let (n, r, m) = (chan.n_stations(), chan.n_rus(), chan.n_antennas());
    let bits = n * r;
    if bits > budget_bits || bits >= 63 {
        return Err(Error::OracleBudget {
            bits,
            budget: budget_bits,
        });
    }
    let total = 1u64 << bits;
    const BLOCK: u64 = 1 << 10;
    let blocks = total.div_ceil(BLOCK);
    let better = |a: (f64, u64), b: (f64, u64)| {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let best = (0..blocks)
        .into_par_iter()
        .map(|blk| -> Result<(f64, u64)> {
            let mut best = (f64::NEG_INFINITY, u64::MAX);
            for idx in blk * BLOCK..((blk + 1) * BLOCK).min(total) {
                if !candidate_feasible(idx, n, r, m) {
                    continue;
                }
                let rate = phy::rate_sum(chan, slot, &candidate(idx, n, r), table)?;
                best = better(best, (rate, idx));
            }
            Ok(best)
        })
        .try_reduce(|| (f64::NEG_INFINITY, u64::MAX), |a, b| Ok(better(a, b)))?;
    Ok((candidate(best.1, n, r), best.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{compute_gains, generate_channels};
    use crate::observation::impact_factors;

    fn gains(rows: &[&[f64]]) -> GainMatrix {
        GainMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn bcq_selects_top_k_rows() {
        let chan = generate_channels(&WlanConfig::default().with_seed(42)).unwrap();
        let g = compute_gains(&chan, 0).unwrap();
        let a = bcq_assign(&g, 4, 4).unwrap();
        let full = (0..10).filter(|&i| a.row_count(i) == 9).count();
        let empty = (0..10).filter(|&i| a.row_count(i) == 0).count();
        assert_eq!((full, empty), (4, 6));
        assert!(allocation::validate(&a, 4).is_empty());
    }

    #[test]
    fn bcq_everyone_when_k_equals_n() {
        let g = gains(&[&[1.0, 2.0], &[0.5, 0.1], &[3.0, 3.0]]);
        assert_eq!(bcq_assign(&g, 3, 3).unwrap(), AssignmentMatrix::ones(3, 2));
    }

    #[test]
    fn bcq_known_top_two() {
        let g = gains(&[&[1.0, 1.0], &[5.0, 0.0], &[0.1, 0.2], &[2.0, 2.5]]);
        let a = bcq_assign(&g, 2, 4).unwrap();
        assert_eq!(a.digit_rows(), vec!["00", "11", "00", "11"]);
        assert!(bcq_assign(&g, 0, 4).is_err());
        assert!(bcq_assign(&g, 3, 2).is_err());
    }

    #[test]
    fn bcq_ties_go_to_lower_index() {
        let g = gains(&[&[1.0], &[1.0], &[1.0]]);
        assert_eq!(bcq_assign(&g, 1, 2).unwrap().digit_rows(), vec!["1", "0", "0"]);
    }

    #[test]
    fn greedy_admits_everyone_when_capacity_allows() {
        let g = gains(&[&[1.0, 2.0, 0.3], &[0.5, 0.1, 0.2]]);
        let a = greedy_assign(&g, &impact_factors(&g), 4).unwrap();
        assert_eq!(a, AssignmentMatrix::ones(2, 3));
    }

    #[test]
    fn greedy_dominant_agent_everywhere() {
        let mut rows = vec![vec![0.01; 9]; 6];
        rows[3] = vec![10.0; 9];
        for (i, row) in rows.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                if i != 3 {
                    *v *= 1.0 + ((i * 7 + l * 3) % 5) as f64;
                }
            }
        }
        let g = GainMatrix::from_rows(&rows).unwrap();
        let a = greedy_assign(&g, &impact_factors(&g), 2).unwrap();
        assert_eq!(a.row_count(3), 9);
        assert!(allocation::validate(&a, 2).is_empty());
    }

    #[test]
    fn random_is_seeded_and_feasible() {
        let cfg = WlanConfig::new(12, 2, 9, 1);
        let a = random_assign(9, &cfg, 0.5).unwrap();
        assert_eq!(a, random_assign(9, &cfg, 0.5).unwrap());
        assert!(allocation::validate(&a, 2).is_empty());
        assert_eq!(random_assign(9, &cfg, 0.0).unwrap(), AssignmentMatrix::zeros(12, 9));
    }

    #[test]
    fn candidate_order_is_lexicographic() {
        assert_eq!(candidate(0b100, 1, 3).digit_rows(), vec!["100"]);
        assert_eq!(candidate(0b0110, 2, 2).digit_rows(), vec!["01", "10"]);
    }

    #[test]
    fn oracle_single_bit() {
        let cfg = WlanConfig::new(1, 1, 1, 1);
        let chan = ChannelRealization::from_parts(cfg, vec![num_complex::Complex64::new(0.05, 0.0)], vec![[0.0; 2]]).unwrap();
        let (a, rate) = oracle_assign(&chan, 0, &McsTable::default(), 20).unwrap();
        assert_eq!(a, AssignmentMatrix::ones(1, 1));
        assert!(rate > 0.0);
        let chan = ChannelRealization::from_parts(chan.config().clone(), vec![num_complex::Complex64::new(0.0, 0.0)], vec![[0.0; 2]]).unwrap();
        let (a, rate) = oracle_assign(&chan, 0, &McsTable::default(), 20).unwrap();
        assert_eq!(a, AssignmentMatrix::zeros(1, 1));
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn oracle_matches_manual_sixteen_case_sweep() {
        let table = McsTable::default();
        for seed in 0..10 {
            let chan = generate_channels(&WlanConfig::new(2, 1, 2, 1).with_seed(seed)).unwrap();
            let (a, rate) = oracle_assign(&chan, 0, &table, 20).unwrap();
            let mut best: Option<(f64, Vec<String>)> = None;
            for bits in 0u32..16 {
                let rows = vec![
                    format!("{}{}", bits >> 3 & 1, bits >> 2 & 1),
                    format!("{}{}", bits >> 1 & 1, bits & 1),
                ];
                let cand = AssignmentMatrix::from_digit_rows(&rows).unwrap();
                if !allocation::validate(&cand, 1).is_empty() {
                    continue;
                }
                let v = phy::rate_sum(&chan, 0, &cand, &table).unwrap();
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, rows));
                }
            }
            let (bv, brows) = best.unwrap();
            assert_eq!(rate, bv);
            assert_eq!(a.digit_rows(), brows);
        }
    }

    #[test]
    fn oracle_refuses_over_budget() {
        let chan = generate_channels(&WlanConfig::new(3, 2, 9, 1)).unwrap();
        assert!(matches!(
            oracle_assign(&chan, 0, &McsTable::default(), 20),
            Err(Error::OracleBudget { bits: 27, budget: 20 })
        ));
    }

    #[test]
    fn policy_strings() {
        for s in ["bcq:4", "bcq-ru:2", "random:7", "random:7:0.25", "greedy", "oracle", "llm"] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        assert!("bcq".parse::<PolicySpec>().is_err());
        assert!("nope".parse::<PolicySpec>().is_err());
        let cfg = WlanConfig::new(10, 4, 9, 1);
        assert!(PolicySpec::bcq(5).validate(&cfg).is_err());
        assert!(PolicySpec::oracle().validate(&cfg).is_err());
    }
}
