//! Seeded frequency-selective uplink channels.
//!
//! Stations are dropped uniformly in a disk around the AP (origin) and
//! re-dropped every slot. Each station-antenna link gets an independent
//! tapped-delay-line response with an exponential power-delay profile,
//! scaled by log-distance path loss and evaluated at every RU center.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::WlanConfig;
use crate::error::{Error, Result};

/// Channel vectors `h` for every (slot, station, RU), each of length M,
/// plus the station positions that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    config: WlanConfig,
    h: Vec<Complex64>,
    positions: Vec<[f64; 2]>,
}

impl ChannelRealization {
    /// Assembles a realization from raw buffers (`h` in t, i, l, m order;
    /// positions in t, i order).
    pub fn from_parts(config: WlanConfig, h: Vec<Complex64>, positions: Vec<[f64; 2]>) -> Result<Self> {
        config.validate()?;
        let (n, m, r, t) = (config.n_stations, config.n_antennas, config.n_rus, config.n_slots);
        if h.len() != t * n * r * m {
            return Err(Error::Shape(format!("expected {} channel entries, got {}", t * n * r * m, h.len())));
        }
        if positions.len() != t * n {
            return Err(Error::Shape(format!("expected {} positions, got {}", t * n, positions.len())));
        }
        if h.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("channel entry"));
        }
        Ok(Self { config, h, positions })
    }

    pub fn config(&self) -> &WlanConfig {
        &self.config
    }

    pub fn n_stations(&self) -> usize {
        self.config.n_stations
    }

    pub fn n_antennas(&self) -> usize {
        self.config.n_antennas
    }

    pub fn n_rus(&self) -> usize {
        self.config.n_rus
    }

    pub fn n_slots(&self) -> usize {
        self.config.n_slots
    }

    fn offset(&self, slot: usize, station: usize, ru: usize) -> usize {
        let c = &self.config;
        ((slot * c.n_stations + station) * c.n_rus + ru) * c.n_antennas
    }

    /// Channel vector of `station` on `ru` in `slot`.
    pub fn h(&self, slot: usize, station: usize, ru: usize) -> &[Complex64] {
        let o = self.offset(slot, station, ru);
        &self.h[o..o + self.config.n_antennas]
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.h
    }

    pub fn position(&self, slot: usize, station: usize) -> [f64; 2] {
        self.positions[slot * self.config.n_stations + station]
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.config.n_slots {
            Ok(())
        } else {
            Err(Error::SlotOutOfRange {
                slot,
                slots: self.config.n_slots,
            })
        }
    }
}

/// Frobenius norms zeta[i][l] = ||h_{i,l}|| for one slot, row-major N x R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    n_stations: usize,
    n_rus: usize,
    zeta: Vec<f64>,
}

impl GainMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::Shape("ragged gain rows".into()));
        }
        let zeta: Vec<f64> = rows.iter().flatten().copied().collect();
        if zeta.iter().any(|z| !z.is_finite() || *z < 0.0) {
            return Err(Error::NonFinite("gain entries must be finite and >= 0"));
        }
        Ok(Self { n_stations: n, n_rus: r, zeta })
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn n_rus(&self) -> usize {
        self.n_rus
    }

    pub fn get(&self, station: usize, ru: usize) -> f64 {
        self.zeta[station * self.n_rus + ru]
    }

    pub fn row(&self, station: usize) -> &[f64] {
        &self.zeta[station * self.n_rus..(station + 1) * self.n_rus]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.zeta.chunks(self.n_rus.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Aggregate gain over all RUs.
    pub fn total(&self, station: usize) -> f64 {
        self.row(station).iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            zeta: self.zeta.iter().map(|z| z * c).collect(),
            ..self.clone()
        }
    }
}

/// Per-slot, per-station channel draws for a fixed configuration.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    n_antennas: usize,
    /// Normalized tap powers (sum 1).
    tap_power: Vec<f64>,
    /// exp(-j 2 pi f_l tau_k), indexed [l][k].
    steering: Vec<Vec<Complex64>>,
    config: WlanConfig,
}

impl ChannelModel {
    pub fn new(config: &WlanConfig) -> Result<Self> {
        config.validate()?;
        let ch = &config.channel;
        let delays: Vec<f64> = (0..ch.n_taps).map(|k| k as f64 * ch.tap_spacing_s).collect();
        let raw: Vec<f64> = delays.iter().map(|tau| (-tau / ch.rms_delay_spread_s).exp()).collect();
        let total: f64 = raw.iter().sum();
        let tap_power = raw.iter().map(|p| p / total).collect();
        let center = (config.n_rus as f64 - 1.0) / 2.0;
        let steering = (0..config.n_rus)
            .map(|l| {
                let f = (l as f64 - center) * config.ru_bandwidth_hz;
                delays.iter().map(|tau| Complex64::from_polar(1.0, -2.0 * PI * f * tau)).collect()
            })
            .collect();
        Ok(Self {
            n_antennas: config.n_antennas,
            tap_power,
            steering,
            config: config.clone(),
        })
    }

    /// Uniform drop in the disk of radius `cell_radius_m`.
    pub fn draw_position<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let radius = self.config.cell_radius_m * rng.random::<f64>().sqrt();
        let angle = 2.0 * PI * rng.random::<f64>();
        [radius * angle.cos(), radius * angle.sin()]
    }

    /// Fills `out` (R x M, RU-major) with one station's response at `distance`.
    pub fn draw_response<R: Rng + ?Sized>(&self, rng: &mut R, distance: f64, out: &mut [Complex64]) {
        let m_ant = self.n_antennas;
        debug_assert_eq!(out.len(), self.steering.len() * m_ant);
        let amplitude = self.config.channel.path_gain(distance).sqrt();
        let mut taps = vec![Complex64::new(0.0, 0.0); self.tap_power.len()];
        for m in 0..m_ant {
            for (tap, p) in taps.iter_mut().zip(&self.tap_power) {
                let s = (p / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *tap = Complex64::new(re * s, im * s);
            }
            for (l, steer) in self.steering.iter().enumerate() {
                let v: Complex64 = taps.iter().zip(steer).map(|(g, e)| g * e).sum();
                out[l * m_ant + m] = v * amplitude;
            }
        }
    }
}

pub fn generate_channels(config: &WlanConfig) -> Result<ChannelRealization> {
    let model = ChannelModel::new(config)?;
    let (n, m, r, t) = (config.n_stations, config.n_antennas, config.n_rus, config.n_slots);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut h = vec![Complex64::new(0.0, 0.0); t * n * r * m];
    let mut positions = Vec::with_capacity(t * n);
    // one block per (slot, station), drawn in t, i order
    for block in h.chunks_mut(r * m) {
        let pos = model.draw_position(&mut rng);
        model.draw_response(&mut rng, pos[0].hypot(pos[1]), block);
        positions.push(pos);
    }
    ChannelRealization::from_parts(config.clone(), h, positions)
}

pub fn compute_gains(chan: &ChannelRealization, slot: usize) -> Result<GainMatrix> {
    chan.check_slot(slot)?;
    let (n, r) = (chan.n_stations(), chan.n_rus());
    let zeta = (0..n)
        .flat_map(|i| (0..r).map(move |l| (i, l)))
        .map(|(i, l)| frobenius(chan.h(slot, i, l)))
        .collect();
    Ok(GainMatrix {
        n_stations: n,
        n_rus: r,
        zeta,
    })
}

pub fn frobenius(h: &[Complex64]) -> f64 {
    h.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}
