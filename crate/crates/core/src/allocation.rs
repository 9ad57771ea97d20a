//! RU assignment matrices, the spatial group-size constraint, and the
//! self-correction step that enforces it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary assignment `nu[i][l]`: station `i` transmits on RU `l`.
///
/// Serialized as one string of `0`/`1` digits per station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AssignmentMatrix {
    n_stations: usize,
    n_rus: usize,
    nu: Vec<bool>,
}

impl AssignmentMatrix {
    pub fn zeros(n_stations: usize, n_rus: usize) -> Self {
        Self {
            n_stations,
            n_rus,
            nu: vec![false; n_stations * n_rus],
        }
    }

    pub fn ones(n_stations: usize, n_rus: usize) -> Self {
        Self {
            n_stations,
            n_rus,
            nu: vec![true; n_stations * n_rus],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n_rus = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_rus) {
            return Err(Error::Shape("ragged assignment rows".into()));
        }
        Ok(Self {
            n_stations: rows.len(),
            n_rus,
            nu: rows.iter().flatten().copied().collect(),
        })
    }

    /// Parses rows such as `"100010001"`.
    pub fn from_digit_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|row| {
                row.as_ref()
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::Shape(format!("invalid assignment digit {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&parsed)
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn n_rus(&self) -> usize {
        self.n_rus
    }

    pub fn get(&self, station: usize, ru: usize) -> bool {
        self.nu[station * self.n_rus + ru]
    }

    pub fn set(&mut self, station: usize, ru: usize, value: bool) {
        self.nu[station * self.n_rus + ru] = value;
    }

    pub fn row(&self, station: usize) -> &[bool] {
        &self.nu[station * self.n_rus..(station + 1) * self.n_rus]
    }

    pub fn set_row(&mut self, station: usize, row: &[bool]) -> Result<()> {
        if row.len() != self.n_rus {
            return Err(Error::Shape(format!("row of length {} for R = {}", row.len(), self.n_rus)));
        }
        self.nu[station * self.n_rus..(station + 1) * self.n_rus].copy_from_slice(row);
        Ok(())
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.nu
    }

    /// Number of RUs assigned to `station`.
    pub fn row_count(&self, station: usize) -> usize {
        self.row(station).iter().filter(|&&b| b).count()
    }

    /// Stations scheduled on `ru`, in index order.
    pub fn occupants(&self, ru: usize) -> Vec<usize> {
        (0..self.n_stations).filter(|&i| self.get(i, ru)).collect()
    }

    pub fn digit_rows(&self) -> Vec<String> {
        (0..self.n_stations)
            .map(|i| self.row(i).iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect()
    }

    pub fn count_ones(&self) -> usize {
        self.nu.iter().filter(|&&b| b).count()
    }

    pub fn check_shape(&self, n_stations: usize, n_rus: usize) -> Result<()> {
        if self.n_stations == n_stations && self.n_rus == n_rus {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "assignment is {}x{}, expected {n_stations}x{n_rus}",
                self.n_stations, self.n_rus
            )))
        }
    }
}

impl TryFrom<Vec<String>> for AssignmentMatrix {
    type Error = Error;

    fn try_from(rows: Vec<String>) -> Result<Self> {
        Self::from_digit_rows(&rows)
    }
}

impl From<AssignmentMatrix> for Vec<String> {
    fn from(a: AssignmentMatrix) -> Self {
        a.digit_rows()
    }
}

impl fmt::Display for AssignmentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.digit_rows().iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            f.write_str(row)?;
        }
        Ok(())
    }
}

/// Feedback an agent receives about its previous action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum FeedbackStatus {
    /// No previous slot.
    Initial,
    ParseSuccess,
    ParseError(String),
    /// The listed RUs (0-based) were revoked by self-correction. Only emitted
    /// when revocation feedback is enabled.
    SelfCorrected(Vec<usize>),
}

impl FeedbackStatus {
    pub fn is_error(&self) -> bool {
        matches!(self, FeedbackStatus::ParseError(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeedbackStatus::Initial => "initial",
            FeedbackStatus::ParseSuccess => "parse_success",
            FeedbackStatus::ParseError(_) => "parse_error",
            FeedbackStatus::SelfCorrected(_) => "self_corrected",
        }
    }
}

impl fmt::Display for FeedbackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackStatus::ParseError(detail) => write!(f, "parse_error: {detail}"),
            FeedbackStatus::SelfCorrected(rus) => write!(f, "self_corrected: {rus:?}"),
            other => f.write_str(other.label()),
        }
    }
}

/// MU-MIMO group size per RU, `g[l] = sum_i nu[i][l]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupSizes(pub Vec<usize>);

impl GroupSizes {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

pub fn group_sizes(assignment: &AssignmentMatrix) -> GroupSizes {
    GroupSizes(
        (0..assignment.n_rus())
            .map(|l| (0..assignment.n_stations()).filter(|&i| assignment.get(i, l)).count())
            .collect(),
    )
}

/// RUs whose group size exceeds `max_group` (the AP antenna count M).
pub fn validate(assignment: &AssignmentMatrix, max_group: usize) -> Vec<usize> {
    group_sizes(assignment)
        .0
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > max_group)
        .map(|(l, _)| l)
        .collect()
}

/// Revokes every assignment on each RU that violates the group-size limit.
///
/// Violating columns are zeroed entirely; all other columns are untouched.
/// Returns the corrected matrix and the revoked RU indices.
pub fn self_correct(assignment: &AssignmentMatrix, max_group: usize) -> (AssignmentMatrix, Vec<usize>) {
    let violating = validate(assignment, max_group);
    let mut out = assignment.clone();
    for &l in &violating {
        for i in 0..out.n_stations() {
            out.set(i, l, false);
        }
    }
    (out, violating)
}

/// Size of one agent's action space: sum over k of C(R, k).
pub fn action_space_size(n_rus: usize) -> u64 {
    (0..=n_rus as u64).map(|k| binomial(n_rus as u64, k)).sum()
}

/// Number of MU-MIMO user groups a single centralized scheduler chooses
/// from: sum over m = 1..M of C(N, m).
pub fn centralized_combinations(n_stations: usize, n_antennas: usize) -> Result<u64> {
    if n_antennas < 1 || n_antennas > n_stations {
        return Err(Error::config("n_antennas", format!("need 1 <= M <= N, got M = {n_antennas}, N = {n_stations}")));
    }
    Ok((1..=n_antennas as u64).map(|m| binomial(n_stations as u64, m)).sum())
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, j| acc * (n - j) / (j + 1))
}

/// All RU subsets for one agent, grouped by subset size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    n_rus: usize,
    by_size: Vec<Vec<Vec<bool>>>,
}

impl ActionSet {
    pub fn enumerate(n_rus: usize) -> Self {
        let mut by_size = vec![Vec::new(); n_rus + 1];
        for mask in 0u32..(1u32 << n_rus) {
            let row: Vec<bool> = (0..n_rus).map(|l| mask >> l & 1 == 1).collect();
            by_size[mask.count_ones() as usize].push(row);
        }
        Self { n_rus, by_size }
    }

    pub fn n_rus(&self) -> usize {
        self.n_rus
    }

    /// Subsets assigning exactly `k` RUs.
    pub fn of_size(&self, k: usize) -> &[Vec<bool>] {
        &self.by_size[k]
    }

    pub fn len(&self) -> usize {
        self.by_size.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<bool>> {
        self.by_size.iter().flatten()
    }
}
