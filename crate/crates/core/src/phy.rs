//! Uplink link evaluation: power split, MMSE receive weights, per-RU SINR
//! and MCS-approximated rates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::allocation::AssignmentMatrix;
use crate::channel::ChannelRealization;
use crate::config::WlanConfig;
use crate::error::{Error, Result};
use crate::mcs::McsTable;

pub type CMatrix = DMatrix<Complex64>;

/// Transmit power of station `i` on RU `l`, row-major N x R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    n_stations: usize,
    n_rus: usize,
    p: Vec<f64>,
}

impl PowerAllocation {
    pub fn get(&self, station: usize, ru: usize) -> f64 {
        self.p[station * self.n_rus + ru]
    }

    pub fn row(&self, station: usize) -> &[f64] {
        &self.p[station * self.n_rus..(station + 1) * self.n_rus]
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }
}

/// Equal split of the budget over each station's assigned RUs.
pub fn allocate_power(assignment: &AssignmentMatrix, config: &WlanConfig) -> Result<PowerAllocation> {
    assignment.check_shape(config.n_stations, config.n_rus)?;
    let (n, r) = (assignment.n_stations(), assignment.n_rus());
    let mut p = vec![0.0; n * r];
    for i in 0..n {
        let k = assignment.row_count(i);
        if k == 0 {
            continue;
        }
        let share = config.total_power / k as f64;
        for l in 0..r {
            if assignment.get(i, l) {
                p[i * r + l] = share;
            }
        }
    }
    Ok(PowerAllocation { n_stations: n, n_rus: r, p })
}

fn check_inputs(channels: &CMatrix, noise_power: f64) -> Result<()> {
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(Error::NonFinite("noise power must be finite and > 0"));
    }
    if channels.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("effective channel"));
    }
    Ok(())
}

/// `H H^H + sigma^2 I` for the M x G effective channel matrix.
fn covariance(channels: &CMatrix, noise_power: f64) -> CMatrix {
    let m = channels.nrows();
    let mut a = channels * channels.adjoint();
    for k in 0..m {
        a[(k, k)] += Complex64::new(noise_power, 0.0);
    }
    a
}

/// MMSE weights: column g is `(H H^H + sigma^2 I)^{-1} h_g`.
///
/// The covariance is Hermitian positive definite for `sigma^2 > 0`, so a
/// Cholesky solve is used instead of an explicit inverse.
pub fn mmse_weights(channels: &CMatrix, noise_power: f64) -> Result<CMatrix> {
    check_inputs(channels, noise_power)?;
    if channels.ncols() == 0 {
        return Ok(CMatrix::zeros(channels.nrows(), 0));
    }
    let chol = covariance(channels, noise_power)
        .cholesky()
        .ok_or(Error::NonFinite("covariance not positive definite"))?;
    Ok(chol.solve(channels))
}

/// Post-MMSE SINR of every column (scheduled station) of `channels`.
///
/// Columns are effective channels, already scaled by the square root of the
/// transmit power. The interference-plus-noise term is expanded as
/// `sum_{j != g} |w^H h_j|^2 + sigma^2 ||w||^2`, which equals
/// `w^H (H_j H_j^H + sigma^2 I) w` without forming the difference matrix.
pub fn compute_sinr(channels: &CMatrix, noise_power: f64) -> Result<Vec<f64>> {
    let w = mmse_weights(channels, noise_power)?;
    let g_count = channels.ncols();
    // cross[(g, j)] = w_g^H h_j
    let cross = w.adjoint() * channels;
    Ok((0..g_count)
        .map(|g| {
            let signal = cross[(g, g)].norm_sqr();
            if signal == 0.0 {
                return 0.0;
            }
            let interference: f64 = (0..g_count).filter(|&j| j != g).map(|j| cross[(g, j)].norm_sqr()).sum();
            let noise = noise_power * w.column(g).norm_squared();
            signal / (interference + noise)
        })
        .collect())
}

/// Per-slot link results. Entries for unscheduled (station, RU) pairs are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub n_stations: usize,
    pub n_rus: usize,
    /// Linear SINR, row-major N x R.
    pub sinr: Vec<f64>,
    /// bits/s, row-major N x R.
    pub rate_per_ru: Vec<f64>,
    /// bits/s per station.
    pub rate_per_sta: Vec<f64>,
}

impl LinkMetrics {
    pub fn sinr_at(&self, station: usize, ru: usize) -> f64 {
        self.sinr[station * self.n_rus + ru]
    }

    pub fn rate_at(&self, station: usize, ru: usize) -> f64 {
        self.rate_per_ru[station * self.n_rus + ru]
    }

    pub fn rate_sum(&self) -> f64 {
        self.rate_per_sta.iter().sum()
    }
}

/// Stacks `sqrt(p) * h` for the given stations into an M x G matrix.
pub fn effective_channels(
    chan: &ChannelRealization,
    slot: usize,
    ru: usize,
    stations: &[usize],
    power: &PowerAllocation,
) -> CMatrix {
    let m = chan.n_antennas();
    CMatrix::from_fn(m, stations.len(), |row, col| {
        let i = stations[col];
        chan.h(slot, i, ru)[row] * power.get(i, ru).sqrt()
    })
}

/// Evaluates one UL-SA: power split, per-RU MMSE SINR, MCS rates, per-station sums.
pub fn evaluate_slot(
    chan: &ChannelRealization,
    slot: usize,
    assignment: &AssignmentMatrix,
    table: &McsTable,
) -> Result<LinkMetrics> {
    chan.check_slot(slot)?;
    let config = chan.config();
    let power = allocate_power(assignment, config)?;
    let (n, r) = (config.n_stations, config.n_rus);
    let mut sinr = vec![0.0; n * r];
    let mut rate_per_ru = vec![0.0; n * r];
    for l in 0..r {
        let group = assignment.occupants(l);
        if group.is_empty() {
            continue;
        }
        let h = effective_channels(chan, slot, l, &group, &power);
        for (&i, gamma) in group.iter().zip(compute_sinr(&h, config.noise_power)?) {
            sinr[i * r + l] = gamma;
            rate_per_ru[i * r + l] = config.ru_bandwidth_hz * table.rate(gamma);
        }
    }
    let rate_per_sta = rate_per_ru.chunks(r).map(|row| row.iter().sum()).collect();
    Ok(LinkMetrics {
        n_stations: n,
        n_rus: r,
        sinr,
        rate_per_ru,
        rate_per_sta,
    })
}

/// Rate-sum of one slot under `assignment`.
pub fn rate_sum(chan: &ChannelRealization, slot: usize, assignment: &AssignmentMatrix, table: &McsTable) -> Result<f64> {
    Ok(evaluate_slot(chan, slot, assignment, table)?.rate_sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, g: usize) -> CMatrix {
        CMatrix::from_fn(m, g, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
    }

    #[test]
    fn equal_split() {
        let cfg = WlanConfig::new(2, 1, 9, 1);
        let mut a = AssignmentMatrix::zeros(2, 9);
        for l in 0..9 {
            a.set(0, l, true);
        }
        let p = allocate_power(&a, &cfg).unwrap();
        assert!(p.row(0).iter().all(|&v| v == 1.0 / 9.0));
        assert!(p.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_sums_are_zero_or_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = WlanConfig::new(6, 2, 9, 1);
        cfg.total_power = 0.7;
        for _ in 0..500 {
            let rows: Vec<Vec<bool>> = (0..6).map(|_| (0..9).map(|_| rng.random::<bool>()).collect()).collect();
            let a = AssignmentMatrix::from_rows(&rows).unwrap();
            let p = allocate_power(&a, &cfg).unwrap();
            for i in 0..6 {
                let s: f64 = p.row(i).iter().sum();
                if a.row_count(i) == 0 {
                    assert_eq!(s, 0.0);
                } else {
                    assert!((s - 0.7).abs() <= 1e-15, "{s}");
                }
                for l in 0..9 {
                    assert_eq!(p.get(i, l) > 0.0, a.get(i, l));
                }
            }
        }
    }

    #[test]
    fn scalar_weight_closed_form() {
        let h = CMatrix::from_element(1, 1, c(2.0, 0.0));
        let w = mmse_weights(&h, 1.0).unwrap();
        assert!((w[(0, 0)] - c(0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_channel_zero_weight() {
        let h = CMatrix::zeros(3, 2);
        let w = mmse_weights(&h, 0.5).unwrap();
        assert!(w.iter().all(|z| z.norm() == 0.0));
        assert_eq!(compute_sinr(&h, 0.5).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn weight_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let h = random_matrix(&mut rng, 4, 3);
            let w = mmse_weights(&h, 0.3).unwrap();
            let a = covariance(&h, 0.3);
            let resid = (&a * &w - &h).norm();
            assert!(resid < 1e-10, "{resid}");
        }
    }

    #[test]
    fn single_user_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=8 {
            let h = random_matrix(&mut rng, m, 1);
            let gamma = compute_sinr(&h, 0.2).unwrap()[0];
            let expected = h.norm_squared() / 0.2;
            assert!((gamma - expected).abs() <= 1e-10 * expected);
        }
    }

    #[test]
    fn orthogonal_pair_has_no_cross_interference() {
        let a = 2.5f64;
        let s = (a / 2.0).sqrt();
        let h = CMatrix::from_column_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]);
        let g = compute_sinr(&h, 0.1).unwrap();
        for v in g {
            assert!((v - a / 0.1).abs() < 1e-10 * a / 0.1);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let h = CMatrix::from_element(1, 1, c(f64::NAN, 0.0));
        assert!(compute_sinr(&h, 1.0).is_err());
        assert!(compute_sinr(&CMatrix::zeros(1, 1), 0.0).is_err());
    }

    #[test]
    fn empty_assignment_zero_rate() {
        let chan = generate_channels(&WlanConfig::new(4, 2, 9, 1).with_seed(1)).unwrap();
        let lm = evaluate_slot(&chan, 0, &AssignmentMatrix::zeros(4, 9), &McsTable::default()).unwrap();
        assert_eq!(lm.rate_sum(), 0.0);
    }

    #[test]
    fn single_link_composition() {
        let h = Complex64::new(0.01, -0.02);
        let cfg = WlanConfig::new(1, 1, 1, 1);
        let chan = ChannelRealization::from_parts(cfg.clone(), vec![h], vec![[0.0, 0.0]]).unwrap();
        let table = McsTable::default();
        let lm = evaluate_slot(&chan, 0, &AssignmentMatrix::ones(1, 1), &table).unwrap();
        let snr = cfg.total_power * h.norm_sqr() / cfg.noise_power;
        let expected = cfg.ru_bandwidth_hz * table.rate(snr);
        assert!((lm.rate_per_sta[0] - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn shape_mismatch() {
        let chan = generate_channels(&WlanConfig::new(4, 2, 9, 1)).unwrap();
        assert!(evaluate_slot(&chan, 0, &AssignmentMatrix::zeros(3, 9), &McsTable::default()).is_err());
    }
}
