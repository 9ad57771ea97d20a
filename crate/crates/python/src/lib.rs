//! Python bindings for the `ulsched` simulator.

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ulsched::allocation::{self, AssignmentMatrix, FeedbackStatus};
use ulsched::channel::{self, ChannelRealization, GainMatrix};
use ulsched::episode::EpisodeRunner;
use ulsched::gateway::{BackendConfig, Gateway, GatewayConfig};
use ulsched::observation::{impact_factors as eta_of, make_observations};
use ulsched::phy::{self, CMatrix};
use ulsched::prompt::{self, PromptOptions, PromptTemplates};
use ulsched::{intent, mcs, metrics, policy, store, Error, McsTable, PolicySpec};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Format(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn gains_of(rows: Vec<Vec<f64>>) -> PyResult<GainMatrix> {
    GainMatrix::from_rows(&rows).map_err(py_err)
}

fn matrix_of(rows: Vec<Vec<bool>>) -> PyResult<AssignmentMatrix> {
    AssignmentMatrix::from_rows(&rows).map_err(py_err)
}

fn rows_of(a: &AssignmentMatrix) -> Vec<Vec<bool>> {
    (0..a.n_stations()).map(|i| a.row(i).to_vec()).collect()
}

/// WLAN parameters.
#[pyclass(name = "WlanConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ulsched::WlanConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (n_stations, n_antennas, n_rus = 9, n_slots = 50, seed = 0))]
    fn new(n_stations: usize, n_antennas: usize, n_rus: usize, n_slots: usize, seed: u64) -> PyResult<Self> {
        let inner = ulsched::WlanConfig::new(n_stations, n_antennas, n_rus, n_slots).with_seed(seed);
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_stations(&self) -> usize {
        self.inner.n_stations
    }

    #[getter]
    fn n_antennas(&self) -> usize {
        self.inner.n_antennas
    }

    #[getter]
    fn n_rus(&self) -> usize {
        self.inner.n_rus
    }

    #[getter]
    fn n_slots(&self) -> usize {
        self.inner.n_slots
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.noise_power
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "WlanConfig(n_stations={}, n_antennas={}, n_rus={}, n_slots={}, seed={})",
            c.n_stations, c.n_antennas, c.n_rus, c.n_slots, c.rng_seed
        )
    }
}

/// A channel realization over all slots of one episode.
#[pyclass(name = "Channels")]
struct PyChannels {
    inner: ChannelRealization,
}

#[pymethods]
impl PyChannels {
    #[staticmethod]
    fn generate(config: &PyConfig) -> PyResult<Self> {
        Ok(Self {
            inner: channel::generate_channels(&config.inner).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: store::load_trace(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        store::save_trace(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig {
            inner: self.inner.config().clone(),
        }
    }

    fn h(&self, slot: usize, station: usize, ru: usize) -> PyResult<Vec<Complex64>> {
        self.inner.check_slot(slot).map_err(py_err)?;
        if station >= self.inner.n_stations() || ru >= self.inner.n_rus() {
            return Err(PyValueError::new_err("station or RU out of range"));
        }
        Ok(self.inner.h(slot, station, ru).to_vec())
    }

    /// Channel gains zeta[i][l] for `slot`.
    fn gains(&self, slot: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(channel::compute_gains(&self.inner, slot).map_err(py_err)?.rows())
    }

    /// Rate-sum (bit/s) of `assignment` in `slot`.
    fn rate_sum(&self, slot: usize, assignment: Vec<Vec<bool>>) -> PyResult<f64> {
        phy::rate_sum(&self.inner, slot, &matrix_of(assignment)?, &McsTable::default()).map_err(py_err)
    }
}

/// MMSE SINR for each column; `columns[g]` is the length-M vector of user g.
#[pyfunction]
fn compute_sinr(columns: Vec<Vec<Complex64>>, noise_power: f64) -> PyResult<Vec<f64>> {
    let g = columns.len();
    let m = columns.first().map_or(0, Vec::len);
    if g == 0 || columns.iter().any(|c| c.len() != m) {
        return Err(PyValueError::new_err("columns must be non-empty and of equal length"));
    }
    let h = CMatrix::from_fn(m, g, |r, c| columns[c][r]);
    phy::compute_sinr(&h, noise_power).map_err(py_err)
}

/// Spectral efficiency (bit/s/Hz) of the bundled MCS envelope.
#[pyfunction]
fn mcs_rate(gamma: f64) -> f64 {
    mcs::mcs_rate(gamma, &McsTable::default())
}

#[pyfunction]
fn impact_factors(gains: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(eta_of(&gains_of(gains)?).rows())
}

/// Returns the corrected matrix and the revoked RU indices.
#[pyfunction]
fn self_correct(assignment: Vec<Vec<bool>>, max_group: usize) -> PyResult<(Vec<Vec<bool>>, Vec<usize>)> {
    let (a, revoked) = allocation::self_correct(&matrix_of(assignment)?, max_group);
    Ok((rows_of(&a), revoked))
}

#[pyfunction]
fn bcq_assign(gains: Vec<Vec<f64>>, k: usize, n_antennas: usize) -> PyResult<Vec<Vec<bool>>> {
    Ok(rows_of(&policy::bcq_assign(&gains_of(gains)?, k, n_antennas).map_err(py_err)?))
}

#[pyfunction]
fn greedy_assign(gains: Vec<Vec<f64>>, n_antennas: usize) -> PyResult<Vec<Vec<bool>>> {
    let g = gains_of(gains)?;
    Ok(rows_of(&policy::greedy_assign(&g, &eta_of(&g), n_antennas).map_err(py_err)?))
}

#[pyfunction]
#[pyo3(signature = (channels, slot, budget_bits = policy::DEFAULT_ORACLE_BUDGET_BITS))]
fn oracle_assign(channels: &PyChannels, slot: usize, budget_bits: usize) -> PyResult<(Vec<Vec<bool>>, f64)> {
    let (a, rate) = policy::oracle_assign(&channels.inner, slot, &McsTable::default(), budget_bits).map_err(py_err)?;
    Ok((rows_of(&a), rate))
}

/// Returns `(row, status, detail)`; status is "parse_success" or "parse_error".
#[pyfunction]
fn parse_intent(raw: &str, agent: usize, n_rus: usize) -> (Vec<bool>, String, Option<String>) {
    let p = intent::parse_intent(raw, agent, n_rus);
    let detail = match &p.status {
        FeedbackStatus::ParseError(d) => Some(d.clone()),
        _ => None,
    };
    (p.row, p.status.label().to_string(), detail)
}

/// First-slot prompts for every agent of `slot`.
#[pyfunction]
#[pyo3(signature = (channels, slot, template = "pt1", strategy = "rate-sum", include_impact = false))]
fn build_prompts(
    channels: &PyChannels,
    slot: usize,
    template: &str,
    strategy: &str,
    include_impact: bool,
) -> PyResult<Vec<String>> {
    let gains = channel::compute_gains(&channels.inner, slot).map_err(py_err)?;
    let eta = eta_of(&gains);
    let n = gains.n_stations();
    let obs = make_observations(gains, eta, &vec![FeedbackStatus::Initial; n]).map_err(py_err)?;
    let options = PromptOptions {
        template: template.parse().map_err(py_err)?,
        strategy: strategy.parse().map_err(py_err)?,
        include_impact,
    };
    let bundle = prompt::build_prompts(&obs, &PromptTemplates::default(), &options, channels.inner.n_antennas(), slot);
    Ok(bundle.prompts)
}

/// Outcome of one episode.
#[pyclass(name = "EpisodeResult")]
struct PyEpisode {
    record: ulsched::EpisodeRecord,
}

#[pymethods]
impl PyEpisode {
    #[getter]
    fn rate_sums(&self) -> Vec<f64> {
        self.record.rate_sums()
    }

    #[getter]
    fn total_rate(&self) -> f64 {
        self.record.total_rate()
    }

    #[getter]
    fn parse_errors(&self) -> usize {
        self.record.parse_errors()
    }

    /// Post-correction assignments, one matrix per slot.
    #[getter]
    fn assignments(&self) -> Vec<Vec<Vec<bool>>> {
        self.record.assignments().iter().map(rows_of).collect()
    }

    #[getter]
    fn proposed(&self) -> Vec<Vec<Vec<bool>>> {
        self.record.proposed().iter().map(rows_of).collect()
    }

    #[getter]
    fn revoked_rus(&self) -> Vec<Vec<usize>> {
        self.record.slots.iter().map(|s| s.revoked_rus.clone()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.record).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Runs `policy` ("bcq:K", "greedy", "random[:SEED[:P]]", "oracle", "llm")
/// over `channels`. "llm" needs `mock` (a classical policy spec) or
/// `endpoint` plus `model`.
#[pyfunction]
#[pyo3(signature = (channels, policy, mock = None, endpoint = None, model = None, template = "pt1", strategy = "rate-sum"))]
fn run_episode(
    channels: &PyChannels,
    policy: &str,
    mock: Option<&str>,
    endpoint: Option<&str>,
    model: Option<&str>,
    template: &str,
    strategy: &str,
) -> PyResult<PyEpisode> {
    let spec: PolicySpec = policy.parse().map_err(py_err)?;
    let backend = match (mock, endpoint, model) {
        (Some(m), _, _) => Some(BackendConfig::Mock {
            policy: m.parse().map_err(py_err)?,
            n_antennas: channels.inner.n_antennas(),
        }),
        (None, Some(e), Some(m)) => Some(BackendConfig::http(e, m)),
        (None, Some(_), None) => return Err(PyValueError::new_err("endpoint requires model")),
        _ => None,
    };
    let gateway = backend
        .map(|b| Gateway::from_config(&GatewayConfig::new(b)))
        .transpose()
        .map_err(py_err)?;
    let table = McsTable::default();
    let templates = PromptTemplates::default();
    let mut runner = EpisodeRunner::new(&table, &templates);
    runner.options.prompt = PromptOptions {
        template: template.parse().map_err(py_err)?,
        strategy: strategy.parse().map_err(py_err)?,
        include_impact: false,
    };
    runner.gateway = gateway.as_ref();
    let out = runner.run(&channels.inner, &spec, 0).map_err(py_err)?;
    Ok(PyEpisode { record: out.record })
}

/// `(fp, fn, error_rate)` over per-slot matrices.
#[pyfunction]
fn assignment_error(inferred: Vec<Vec<Vec<bool>>>, actual: Vec<Vec<Vec<bool>>>) -> PyResult<(usize, usize, f64)> {
    let conv = |v: Vec<Vec<Vec<bool>>>| v.into_iter().map(matrix_of).collect::<PyResult<Vec<_>>>();
    let r = metrics::assignment_error(&conv(inferred)?, &conv(actual)?).map_err(py_err)?;
    Ok((r.fp, r.fn_, r.error_rate))
}

/// Gain in percent of `policy` over `baseline` (paired per-slot rate-sums).
#[pyfunction]
fn performance_gain(policy: Vec<f64>, baseline: Vec<f64>) -> PyResult<f64> {
    Ok(metrics::gain_from_rates(&policy, &baseline).map_err(py_err)?.gain_percent)
}

#[pyfunction]
fn rate_cdf(rates: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    metrics::cdf_points(&rates).map_err(py_err)
}

#[pymodule]
fn ulsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyChannels>()?;
    m.add_class::<PyEpisode>()?;
    m.add_function(wrap_pyfunction!(compute_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(mcs_rate, m)?)?;
    m.add_function(wrap_pyfunction!(impact_factors, m)?)?;
    m.add_function(wrap_pyfunction!(self_correct, m)?)?;
    m.add_function(wrap_pyfunction!(bcq_assign, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_assign, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_assign, m)?)?;
    m.add_function(wrap_pyfunction!(parse_intent, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompts, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(assignment_error, m)?)?;
    m.add_function(wrap_pyfunction!(performance_gain, m)?)?;
    m.add_function(wrap_pyfunction!(rate_cdf, m)?)?;
    Ok(())
}
