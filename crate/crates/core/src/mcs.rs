//! Piecewise-linear MCS rate approximation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../data/mcs_26tone.toml");

/// Operating points `(m_k, b_k)` bounding spectral efficiency by
/// `m_k * gamma + b_k`, with SINR cap `gamma_cap` and rate cap `max_rate`.
///
/// SINR is linear; rates are bits/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsTable {
    m: Vec<f64>,
    b: Vec<f64>,
    gamma_cap: f64,
    max_rate: f64,
}

impl Default for McsTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TABLE).expect("bundled MCS table is valid")
    }
}

impl McsTable {
    pub fn new(m: Vec<f64>, b: Vec<f64>, gamma_cap: f64, max_rate: f64) -> Result<Self> {
        let table = Self {
            m,
            b,
            gamma_cap,
            max_rate,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Self = toml::from_str(text).map_err(|e| Error::McsTable(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.m.is_empty() {
            return Err(Error::McsTable("at least one operating point required".into()));
        }
        if self.m.len() != self.b.len() {
            return Err(Error::McsTable(format!("{} gradients but {} intercepts", self.m.len(), self.b.len())));
        }
        if self.m.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::McsTable("non-finite coefficient".into()));
        }
        if self.m.iter().any(|&m| m < 0.0) {
            return Err(Error::McsTable("gradients must be >= 0".into()));
        }
        if !(self.gamma_cap.is_finite() && self.gamma_cap > 0.0) {
            return Err(Error::McsTable("gamma_cap must be finite and > 0".into()));
        }
        if !(self.max_rate.is_finite() && self.max_rate > 0.0) {
            return Err(Error::McsTable("max_rate must be finite and > 0".into()));
        }
        let at_cap = self.envelope(self.gamma_cap);
        if at_cap > self.max_rate * (1.0 + 1e-9) {
            return Err(Error::McsTable(format!(
                "envelope at gamma_cap ({at_cap}) exceeds max_rate ({})",
                self.max_rate
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn gradients(&self) -> &[f64] {
        &self.m
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.b
    }

    pub fn gamma_cap(&self) -> f64 {
        self.gamma_cap
    }

    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    fn envelope(&self, gamma: f64) -> f64 {
        self.m
            .iter()
            .zip(&self.b)
            .map(|(m, b)| m * gamma + b)
            .fold(f64::INFINITY, f64::min)
    }

    /// Spectral efficiency at linear SINR `gamma`.
    ///
    /// SINR is clamped to `[0, gamma_cap]`; the result is the lower envelope
    /// of the lines, floored at 0 and capped at `max_rate`.
    pub fn rate(&self, gamma: f64) -> f64 {
        let g = if gamma.is_nan() { 0.0 } else { gamma.clamp(0.0, self.gamma_cap) };
        self.envelope(g).min(self.max_rate).max(0.0)
    }
}

/// Free-function form of [`McsTable::rate`].
pub fn mcs_rate(gamma: f64, table: &McsTable) -> f64 {
    table.rate(gamma)
}
