//! Python bindings: language models, interactive sessions, simulation
//! sweeps and log replay.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rtiac::actions::ActionEvent;
use rtiac::session::{replay as replay_log, SessionLog};
use rtiac::sim::{sweep, targets, write_csv, SweepSpec, UserModel, TRAINING_SIGMA2};
use rtiac::{Alphabet, CodeTree, EngineKind, LanguageModel, LayoutKind, NGramModel, SessionConfig};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Character n-gram model over lowercase Latin letters and space.
#[pyclass(frozen, module = "rtiac_py")]
pub struct Model {
    inner: Arc<NGramModel>,
}

impl Model {
    fn shared(&self) -> Arc<dyn LanguageModel> {
        self.inner.clone()
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    pub fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(NGramModel::load(path).map_err(err)?) })
    }

    /// Counts `text` line by line.
    #[staticmethod]
    #[pyo3(signature = (text, order = 2, alpha = 0.1))]
    pub fn train(text: &str, order: usize, alpha: f64) -> PyResult<Self> {
        let lines = text.lines().map(str::to_lowercase);
        let (m, _) = NGramModel::ingest(lines, Alphabet::lowercase_latin(), order, alpha).map_err(err)?;
        Ok(Self { inner: Arc::new(m) })
    }

    pub fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    pub fn alphabet(&self) -> String {
        self.inner.alphabet().symbols().iter().collect()
    }

    #[getter]
    pub fn terminator(&self) -> char {
        self.inner.alphabet().terminator()
    }

    /// Next-symbol probabilities after `context`, terminator first.
    pub fn distribution(&self, context: &str) -> PyResult<Vec<f64>> {
        let ctx = self.inner.alphabet().encode(context).map_err(err)?;
        Ok(self.inner.next_symbol_distribution(&ctx))
    }

    pub fn prefix_mass(&self, text: &str) -> PyResult<f64> {
        let s = self.inner.alphabet().encode(text).map_err(err)?;
        self.inner.prefix_mass(&s).map_err(err)
    }

    /// Code interval `(lo, hi)` of all strings beginning with `text`.
    pub fn interval(&self, text: &str) -> PyResult<(f64, f64)> {
        let s = self.inner.alphabet().encode(text).map_err(err)?;
        let iv = CodeTree::new(self.shared()).interval_of(&s).map_err(err)?;
        Ok((iv.lo, iv.hi))
    }
}

/// A session driven tick by tick from Python. Messages are returned as
/// JSON strings in the wire format.
#[pyclass(unsendable, module = "rtiac_py")]
pub struct Session {
    inner: rtiac::Session,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (model, engine = "rtiac", layout = "linear", config = None))]
    pub fn new(model: &Model, engine: &str, layout: &str, config: Option<&str>) -> PyResult<Self> {
        let mut cfg: SessionConfig = match config {
            Some(json) => serde_json::from_str(json).map_err(err)?,
            None => {
                let mut c = SessionConfig::default();
                c.adapter.sigma2_default = TRAINING_SIGMA2;
                c
            }
        };
        cfg.engine = engine.parse::<EngineKind>().map_err(err)?;
        cfg.layout = layout.parse::<LayoutKind>().map_err(err)?;
        let inner = rtiac::Session::new(model.shared(), cfg, None).map_err(err)?;
        Ok(Self { inner })
    }

    /// A cursor sample at the end of the coming tick.
    pub fn cursor(&mut self, x: f64, y: f64) -> PyResult<()> {
        let t = self.inner.now() + self.inner.dt();
        self.inner.push_event(ActionEvent::cursor(t, x, y)).map_err(err)
    }

    #[pyo3(signature = (action_id = 0))]
    pub fn press(&mut self, action_id: u32) -> PyResult<()> {
        let t = self.inner.now() + self.inner.dt();
        self.inner.push_event(ActionEvent::press(t, action_id)).map_err(err)
    }

    /// Advances one tick; returns the commit, undo and end messages.
    pub fn advance(&mut self) -> PyResult<Vec<String>> {
        Ok(self.inner.advance().map_err(err)?.iter().map(|m| m.to_json()).collect())
    }

    pub fn frame(&mut self) -> String {
        self.inner.frame_message().to_json()
    }

    #[getter]
    pub fn text(&self) -> String {
        self.inner.committed_text()
    }

    #[getter]
    pub fn tick(&self) -> u64 {
        self.inner.tick()
    }

    #[getter]
    pub fn closed(&self) -> bool {
        self.inner.is_closed()
    }

    /// First-generation masses after the last tick.
    #[getter]
    pub fn masses(&self) -> Vec<f64> {
        self.inner.last_summary().masses.clone()
    }
}

/// Simulated sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (model, engine = "iac", layout = "linear", noise = vec![0.0], seeds = 5, ticks = 5400, training = 0, rounds = 2))]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: &Model,
    engine: &str,
    layout: &str,
    noise: Vec<f64>,
    seeds: usize,
    ticks: u64,
    training: usize,
    rounds: usize,
) -> PyResult<String> {
    let lm = model.shared();
    let all = targets(lm.as_ref(), None, seeds + training, 25).map_err(err)?;
    let (test, train) = all.split_at(seeds);
    let mut base = SessionConfig::default();
    if train.is_empty() {
        base.adapter.sigma2_default = TRAINING_SIGMA2;
    }
    let spec = SweepSpec {
        engines: vec![engine.parse().map_err(err)?],
        layout: layout.parse().map_err(err)?,
        noise,
        seeds,
        max_ticks: ticks,
        user: UserModel::default(),
        rounds,
    };
    let recs = sweep(lm, &base, &spec, test, train).map_err(err)?;
    let mut out = Vec::new();
    write_csv(&recs, &mut out).map_err(err)?;
    String::from_utf8(out).map_err(err)
}

/// Replays a log; returns `(commits_match, max_mass_diff, final_text)`.
#[pyfunction]
#[pyo3(signature = (log, model = None))]
pub fn replay(log: &str, model: Option<&Model>) -> PyResult<(bool, f64, String)> {
    let log = SessionLog::open(log).map_err(err)?;
    let lm = match model {
        Some(m) => m.shared(),
        None => log.load_model().map_err(err)?,
    };
    let r = replay_log(&log, lm).map_err(err)?;
    Ok((r.commits_match(), r.max_mass_diff, r.final_text))
}

#[pymodule]
pub fn rtiac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
