//! WLAN and channel-model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandwidth of one 26-tone RU: 26 subcarriers at 78.125 kHz spacing.
pub const RU_26_TONE_HZ: f64 = 26.0 * 78.125e3;

/// Largest RU count on a 20 MHz channel (nine 26-tone RUs).
pub const MAX_RUS: usize = 9;

/// Distance at which the median single-antenna SNR is pinned by the default noise power.
pub const NOISE_REFERENCE_DISTANCE_M: f64 = 7.5;

/// Median SNR (dB) at [`NOISE_REFERENCE_DISTANCE_M`] under the default noise power.
pub const NOISE_REFERENCE_SNR_DB: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WlanConfig {
    pub n_stations: usize,
    pub n_antennas: usize,
    pub n_rus: usize,
    pub n_slots: usize,
    pub cell_radius_m: f64,
    /// Receiver noise power, linear.
    pub noise_power: f64,
    /// Per-station transmit power budget, linear.
    pub total_power: f64,
    pub ru_bandwidth_hz: f64,
    pub rng_seed: u64,
    pub channel: ChannelModelConfig,
}

/// Synthetic indoor channel: log-distance path loss times an exponential
/// power-delay profile evaluated at each RU's center frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModelConfig {
    pub path_loss_exponent: f64,
    /// Path loss is 0 dB at this distance; closer stations are clamped to it.
    pub reference_distance_m: f64,
    pub n_taps: usize,
    pub tap_spacing_s: f64,
    pub rms_delay_spread_s: f64,
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.5,
            reference_distance_m: 1.0,
            n_taps: 8,
            tap_spacing_s: 10e-9,
            rms_delay_spread_s: 30e-9,
        }
    }
}

impl ChannelModelConfig {
    /// Mean power gain at distance `d` metres.
    pub fn path_gain(&self, d: f64) -> f64 {
        let d = d.max(self.reference_distance_m);
        (d / self.reference_distance_m).powf(-self.path_loss_exponent)
    }
}

impl Default for WlanConfig {
    fn default() -> Self {
        let channel = ChannelModelConfig::default();
        let total_power = 1.0;
        Self {
            n_stations: 10,
            n_antennas: 4,
            n_rus: MAX_RUS,
            n_slots: 50,
            cell_radius_m: 15.0,
            noise_power: default_noise_power(total_power, &channel),
            total_power,
            ru_bandwidth_hz: RU_26_TONE_HZ,
            rng_seed: 0,
            channel,
        }
    }
}

/// Noise power giving a median single-antenna SNR of 20 dB at 7.5 m when the
/// whole power budget sits on one RU.
///
/// Small-scale power |h|^2 is exponential with unit mean, so its median is ln 2.
pub fn default_noise_power(total_power: f64, channel: &ChannelModelConfig) -> f64 {
    let median_rx = total_power * channel.path_gain(NOISE_REFERENCE_DISTANCE_M) * std::f64::consts::LN_2;
    median_rx / 10f64.powf(NOISE_REFERENCE_SNR_DB / 10.0)
}

impl WlanConfig {
    pub fn new(n_stations: usize, n_antennas: usize, n_rus: usize, n_slots: usize) -> Self {
        Self {
            n_stations,
            n_antennas,
            n_rus,
            n_slots,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stations < 1 {
            return Err(Error::config("n_stations", "must be at least 1"));
        }
        if self.n_antennas < 1 {
            return Err(Error::config("n_antennas", "must be at least 1"));
        }
        if self.n_rus < 1 || self.n_rus > MAX_RUS {
            return Err(Error::config("n_rus", format!("must be in 1..={MAX_RUS}, got {}", self.n_rus)));
        }
        if self.n_slots < 1 {
            return Err(Error::config("n_slots", "must be at least 1"));
        }
        positive("noise_power", self.noise_power)?;
        positive("total_power", self.total_power)?;
        positive("ru_bandwidth_hz", self.ru_bandwidth_hz)?;
        positive("cell_radius_m", self.cell_radius_m)?;
        let ch = &self.channel;
        if !(ch.path_loss_exponent.is_finite() && ch.path_loss_exponent >= 0.0) {
            return Err(Error::config("channel.path_loss_exponent", "must be finite and >= 0"));
        }
        positive("channel.reference_distance_m", ch.reference_distance_m)?;
        if ch.n_taps < 1 {
            return Err(Error::config("channel.n_taps", "must be at least 1"));
        }
        if !(ch.tap_spacing_s.is_finite() && ch.tap_spacing_s >= 0.0) {
            return Err(Error::config("channel.tap_spacing_s", "must be finite and >= 0"));
        }
        positive("channel.rms_delay_spread_s", ch.rms_delay_spread_s)?;
        Ok(())
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

/// SplitMix64-style mixing of a seed with a sequence of counters.
pub fn mix_seed(seed: u64, counters: &[u64]) -> u64 {
    counters.iter().fold(splitmix(seed), |acc, &c| splitmix(acc ^ splitmix(c.wrapping_add(0x9E37_79B9_7F4A_7C15))))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ru_bandwidth_is_26_tones() {
        assert_eq!(RU_26_TONE_HZ, 2.03125e6);
        assert_eq!(WlanConfig::default().ru_bandwidth_hz, 2.03125e6);
    }

    #[test]
    fn default_noise_pins_median_snr() {
        let cfg = WlanConfig::default();
        let median = cfg.total_power * cfg.channel.path_gain(7.5) * std::f64::consts::LN_2;
        let snr_db = 10.0 * (median / cfg.noise_power).log10();
        assert!((snr_db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn validation_names_field() {
        let cfg = WlanConfig {
            n_rus: 10,
            ..WlanConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "n_rus"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = WlanConfig {
            noise_power: 0.0,
            ..WlanConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "noise_power", .. })));
        let cfg = WlanConfig::new(0, 4, 9, 50);
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "n_stations", .. })));
    }

    #[test]
    fn seeds_mix_distinctly() {
        let mut seen = std::collections::HashSet::new();
        for e in 0..10_000u64 {
            assert!(seen.insert(mix_seed(42, &[e])));
        }
        assert_ne!(mix_seed(1, &[2, 3]), mix_seed(1, &[3, 2]));
    }

    #[test]
    fn toml_partial_override() {
        let cfg: WlanConfig = toml::from_str("n_stations = 20\n[channel]\nn_taps = 4\n").unwrap();
        assert_eq!(cfg.n_stations, 20);
        assert_eq!(cfg.channel.n_taps, 4);
        assert_eq!(cfg.n_rus, 9);
    }
}
