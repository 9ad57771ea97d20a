//! Evaluation quantities: assignment error, paired throughput gain,
//! rate-sum CDF and MU-MIMO group-size distributions.

use serde::{Deserialize, Serialize};

use crate::allocation::AssignmentMatrix;
use crate::episode::EpisodeRecord;
use crate::error::{Error, Result};

/// Disagreement between inferred and reference assignments.
///
/// Labels follow the evaluation convention used for the BCQ comparison:
/// `fp` counts entries assigned in the reference but not inferred, `fn_`
/// the converse. The rate uses their sum, so the labeling does not affect it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// R * N * T.
    pub total: usize,
    pub error_rate: f64,
}

pub fn assignment_error(inferred: &[AssignmentMatrix], actual: &[AssignmentMatrix]) -> Result<ErrorReport> {
    if inferred.len() != actual.len() {
        return Err(Error::Shape(format!("{} inferred slots vs {} actual", inferred.len(), actual.len())));
    }
    if inferred.is_empty() {
        return Err(Error::Empty("assignment sequences"));
    }
    let (mut fp, mut fn_, mut total) = (0, 0, 0);
    for (inf, act) in inferred.iter().zip(actual) {
        inf.check_shape(act.n_stations(), act.n_rus())?;
        for (&a, &b) in act.as_slice().iter().zip(inf.as_slice()) {
            match (a, b) {
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        total += act.as_slice().len();
    }
    if total == 0 {
        return Err(Error::Empty("assignment matrices"));
    }
    Ok(ErrorReport {
        fp,
        fn_,
        total,
        error_rate: (fp + fn_) as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub gain_percent: f64,
    pub policy_total: f64,
    pub baseline_total: f64,
}

/// `100 * (sum policy - sum baseline) / sum baseline` over paired rate streams.
pub fn gain_from_rates(policy: &[f64], baseline: &[f64]) -> Result<GainReport> {
    if policy.len() != baseline.len() {
        return Err(Error::Shape(format!("{} policy slots vs {} baseline", policy.len(), baseline.len())));
    }
    let policy_total: f64 = policy.iter().sum();
    let baseline_total: f64 = baseline.iter().sum();
    if baseline_total <= 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(GainReport {
        gain_percent: 100.0 * (policy_total - baseline_total) / baseline_total,
        policy_total,
        baseline_total,
    })
}

/// Gain of `policy` over `baseline`. Records are paired by position and must
/// share channel seed and dimensions.
pub fn performance_gain(policy: &[EpisodeRecord], baseline: &[EpisodeRecord]) -> Result<GainReport> {
    if policy.len() != baseline.len() {
        return Err(Error::Shape(format!("{} policy episodes vs {} baseline", policy.len(), baseline.len())));
    }
    let mut p = Vec::new();
    let mut b = Vec::new();
    for (x, y) in policy.iter().zip(baseline) {
        let (cx, cy) = (&x.config, &y.config);
        let paired = cx.rng_seed == cy.rng_seed
            && cx.n_stations == cy.n_stations
            && cx.n_antennas == cy.n_antennas
            && cx.n_rus == cy.n_rus
            && x.slots.len() == y.slots.len();
        if !paired {
            return Err(Error::Shape(format!(
                "episode {} is not paired with baseline episode {} (different channels)",
                x.episode, y.episode
            )));
        }
        p.extend(x.rate_sums());
        b.extend(y.rate_sums());
    }
    gain_from_rates(&p, &b)
}

/// Empirical CDF of slot rate-sums as `(rate, fraction <= rate)`, one point
/// per distinct rate.
pub fn rate_cdf(records: &[EpisodeRecord]) -> Result<Vec<(f64, f64)>> {
    let rates: Vec<f64> = records.iter().flat_map(EpisodeRecord::rate_sums).collect();
    cdf_points(&rates)
}

pub fn cdf_points(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Empty("rate samples"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        let frac = if k + 1 == n { 1.0 } else { (k + 1) as f64 / n as f64 };
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

/// Per-RU histograms of group size over slots, before and after self-correction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizeDistribution {
    pub n_antennas: usize,
    /// `post[l][g]`: slots where RU `l` carried a group of size `g` after correction.
    pub post: Vec<Vec<usize>>,
    /// Same, for the proposed (uncorrected) assignments.
    pub pre: Vec<Vec<usize>>,
    /// Slots in which RU `l` violated the group-size limit before correction.
    pub violations: Vec<usize>,
    pub slots: usize,
}

impl GroupSizeDistribution {
    pub fn mean_post(&self, ru: usize) -> f64 {
        mean_size(&self.post[ru])
    }
}

fn mean_size(hist: &[usize]) -> f64 {
    let count: usize = hist.iter().sum();
    if count == 0 {
        return 0.0;
    }
    hist.iter().enumerate().map(|(g, &c)| g * c).sum::<usize>() as f64 / count as f64
}

pub fn group_size_distribution(records: &[EpisodeRecord]) -> Result<GroupSizeDistribution> {
    let first = records.first().ok_or(Error::Empty("episode records"))?;
    let (n, r, m) = (first.config.n_stations, first.config.n_rus, first.config.n_antennas);
    let mut dist = GroupSizeDistribution {
        n_antennas: m,
        post: vec![vec![0; n + 1]; r],
        pre: vec![vec![0; n + 1]; r],
        violations: vec![0; r],
        slots: 0,
    };
    for rec in records {
        if rec.config.n_stations != n || rec.config.n_rus != r || rec.config.n_antennas != m {
            return Err(Error::Shape("records mix network dimensions".into()));
        }
        for s in &rec.slots {
            for l in 0..r {
                let pre = s.proposed_group_sizes.0[l];
                dist.pre[l][pre] += 1;
                dist.post[l][s.group_sizes.0[l]] += 1;
                if pre > m {
                    dist.violations[l] += 1;
                }
            }
            dist.slots += 1;
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&str]) -> AssignmentMatrix {
        AssignmentMatrix::from_digit_rows(rows).unwrap()
    }

    fn complement(a: &AssignmentMatrix) -> AssignmentMatrix {
        let rows: Vec<Vec<bool>> = (0..a.n_stations()).map(|i| a.row(i).iter().map(|b| !b).collect()).collect();
        AssignmentMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn error_identity_and_complement() {
        let a = vec![m(&["1010", "0110"]), m(&["1111", "0000"])];
        assert_eq!(assignment_error(&a, &a).unwrap().error_rate, 0.0);
        let c: Vec<_> = a.iter().map(complement).collect();
        assert_eq!(assignment_error(&c, &a).unwrap().error_rate, 1.0);
    }

    #[test]
    fn error_labels() {
        let actual = vec![m(&["10"])];
        let inferred = vec![m(&["01"])];
        let e = assignment_error(&inferred, &actual).unwrap();
        assert_eq!((e.fp, e.fn_, e.total), (1, 1, 2));
        let e = assignment_error(&[m(&["00"])], &actual).unwrap();
        assert_eq!((e.fp, e.fn_), (1, 0));
    }

    #[test]
    fn error_forty_five_of_4500() {
        let actual: Vec<AssignmentMatrix> = (0..50).map(|_| AssignmentMatrix::zeros(10, 9)).collect();
        let mut inferred = actual.clone();
        for (k, a) in inferred.iter_mut().take(45).enumerate() {
            a.set(k % 10, k % 9, true);
        }
        let e = assignment_error(&inferred, &actual).unwrap();
        assert_eq!(e.total, 4500);
        assert_eq!(e.error_rate, 0.01);
    }

    #[test]
    fn error_shape_mismatch() {
        assert!(assignment_error(&[m(&["10"])], &[]).is_err());
        assert!(assignment_error(&[m(&["10"])], &[m(&["100"])]).is_err());
    }

    #[test]
    fn gain_arithmetic() {
        let g = gain_from_rates(&[60.0, 70.0], &[50.0, 50.0]).unwrap();
        assert_eq!(g.gain_percent, 30.0);
        assert_eq!(gain_from_rates(&[1.0, 2.0], &[1.0, 2.0]).unwrap().gain_percent, 0.0);
        assert!(matches!(gain_from_rates(&[1.0], &[0.0]), Err(Error::ZeroBaseline)));
    }

    #[test]
    fn cdf_steps() {
        assert_eq!(cdf_points(&[3.0]).unwrap(), vec![(3.0, 1.0)]);
        assert_eq!(cdf_points(&[2.0, 2.0, 2.0]).unwrap(), vec![(2.0, 1.0)]);
        let c = cdf_points(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
        assert!(cdf_points(&[]).is_err());
    }
}
