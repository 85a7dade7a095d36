//! A running entry session: events in, belief (or view) advanced once per
//! tick, commits and frames out. The simulator, the server and replay all
//! drive the same [`Session`].

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::{
    continuous_adapter, discrete_adapter, timed_adapter, ActionEvent, ActionWindow, AdapterConfig, Payload,
    PointingModel, ScanIndicator, TimingModel, WindowUpdate, FEATURE_DIM,
};
use crate::baseline::{coverage, cursor_from_display, BaselineConfig, BaselineEngine, BaselineEvent, ViewState};
use crate::belief::{BeliefConfig, BeliefState, BeliefSummary, KernelParams, Selection};
use crate::coder::{CodeTree, Interval};
use crate::error::{Error, Result};
use crate::geom::Metric;
use crate::lang_model::{LanguageModel, NGramModel, Symbol};
use crate::layouts::{display_position, render, LayoutConfig, LayoutFrame, LayoutKind};
use crate::learner::ParametricEstimator;
use crate::wire::{CommitBody, EndBody, FrameBody, MessageKind, WireMessage};

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Rtiac,
    Iac,
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rtiac" => Ok(Self::Rtiac),
            "iac" => Ok(Self::Iac),
            _ => Err(Error::Config(format!("unknown engine {s:?}"))),
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rtiac => "rtiac",
            Self::Iac => "iac",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    /// Indicator speed, axis lengths per second.
    pub speed: f64,
    /// Timing model assumed for the user's presses.
    pub timing: TimingModel,
    /// How long each press's kernel stays applied, seconds.
    pub impulse: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { speed: 0.5, timing: TimingModel { bias: 0.0, jitter: 0.1 }, impulse: 0.5 }
    }
}

/// Presses with `action_id = i` select subset `i` of a fixed partition of
/// the displayed axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConfig {
    pub boundaries: Vec<f64>,
    pub confusion: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub engine: EngineKind,
    pub layout: LayoutKind,
    pub tick_rate: f64,
    /// Action window length `W`, seconds.
    pub horizon: f64,
    pub belief: BeliefConfig,
    pub adapter: AdapterConfig,
    pub render: LayoutConfig,
    pub baseline: BaselineConfig,
    pub scan: ScanConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteConfig>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            engine: EngineKind::Rtiac,
            layout: LayoutKind::Linear,
            tick_rate: 30.0,
            horizon: 0.5,
            belief: BeliefConfig::default(),
            adapter: AdapterConfig::default(),
            render: LayoutConfig::default(),
            baseline: BaselineConfig::default(),
            scan: ScanConfig::default(),
            discrete: None,
        }
    }
}

impl SessionConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.tick_rate) {
            return Err(Error::Config(format!("tick rate {} must be positive", self.tick_rate)));
        }
        if !pos(self.horizon) {
            return Err(Error::Config(format!("window length {} must be positive", self.horizon)));
        }
        if !pos(self.belief.dt_max) || !(self.belief.threshold > 0.5 && self.belief.threshold <= 1.0) {
            return Err(Error::Config("belief dt_max must be positive and threshold in (0.5, 1]".into()));
        }
        if self.layout == LayoutKind::Scan && !(pos(self.scan.speed) && self.scan.impulse >= 0.0) {
            return Err(Error::Config("scan speed must be positive and impulse nonnegative".into()));
        }
        if let Some(d) = &self.discrete {
            let k = d.boundaries.len().saturating_sub(1);
            discrete_adapter(0, &d.boundaries, &d.confusion)?;
            if k < 2 {
                return Err(Error::Config("a discrete partition needs at least two subsets".into()));
            }
        }
        Ok(())
    }
}

/// A commit or an undo, as recorded in logs and replays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub tick: u64,
    pub undo: bool,
    pub symbol: char,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSummary {
    pub tick: u64,
    pub t_ms: f64,
    /// First-generation masses (coverage of the view for the baseline).
    pub masses: Vec<f64>,
    pub knots: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub skipped_kernels: u64,
    pub floored_cells: u64,
    pub stale_events: u64,
    pub out_of_order_events: u64,
    pub presses: u64,
}

#[derive(Clone, Copy, Debug)]
struct Impulse {
    kernel: KernelParams,
    remaining: f64,
}

#[derive(Clone, Debug)]
struct Rtiac {
    tree: CodeTree,
    belief: BeliefState,
    frame: LayoutFrame,
    impulses: Vec<Impulse>,
    indicator: ScanIndicator,
}

#[derive(Clone, Debug)]
enum State {
    Rtiac(Box<Rtiac>),
    Iac(BaselineEngine),
}

pub struct Session {
    cfg: SessionConfig,
    estimator: Option<ParametricEstimator>,
    state: State,
    window: ActionWindow,
    tick: u64,
    seq: u64,
    log: Option<LogWriter>,
    history: Vec<CommitRecord>,
    end_reason: Option<String>,
    training: Option<String>,
    last_summary: TickSummary,
    diagnostics: Diagnostics,
}

impl Session {
    pub fn new(model: Arc<dyn LanguageModel>, cfg: SessionConfig, estimator: Option<ParametricEstimator>) -> Result<Self> {
        cfg.validate()?;
        if let Some(e) = &estimator {
            if e.dim() != FEATURE_DIM {
                return Err(Error::Config(format!("estimator takes {} features, sessions produce {FEATURE_DIM}", e.dim())));
            }
        }
        let tree = CodeTree::new(model);
        let state = match cfg.engine {
            EngineKind::Rtiac => {
                let belief = BeliefState::prior(&tree, &cfg.belief);
                let indicator = ScanIndicator::new(cfg.scan.speed);
                let frame = render(cfg.layout, &belief, &tree, &cfg.render, Some(indicator.phase));
                State::Rtiac(Box::new(Rtiac { tree, belief, frame, impulses: Vec::new(), indicator }))
            }
            EngineKind::Iac => State::Iac(BaselineEngine::new(tree, cfg.baseline)),
        };
        let mut s = Self {
            window: ActionWindow::new(cfg.horizon),
            cfg,
            estimator,
            state,
            tick: 0,
            seq: 0,
            log: None,
            history: Vec::new(),
            end_reason: None,
            training: None,
            last_summary: TickSummary { tick: 0, t_ms: 0.0, masses: Vec::new(), knots: Vec::new() },
            diagnostics: Diagnostics::default(),
        };
        s.last_summary = s.summarize();
        Ok(s)
    }

    /// Marks the session as copying `prompt`, for later training.
    pub fn set_training(&mut self, prompt: Option<String>) {
        self.training = prompt;
    }

    /// Starts logging; writes the header immediately.
    pub fn start_log(&mut self, mut writer: LogWriter, model: ModelRef) -> Result<()> {
        writer.write(&LogRecord::Header(LogHeader {
            version: LOG_VERSION,
            model_path: model.path,
            model_sha256: model.sha256,
            config: self.cfg.clone(),
            estimator: self.estimator.clone(),
            training: self.training.clone(),
        }))?;
        writer.flush()?;
        self.log = Some(writer);
        Ok(())
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn estimator(&self) -> Option<&ParametricEstimator> {
        self.estimator.as_ref()
    }

    pub fn training(&self) -> Option<&str> {
        self.training.as_deref()
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Session clock at the start of the next tick, seconds.
    pub fn now(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    pub fn tree(&self) -> &CodeTree {
        match &self.state {
            State::Rtiac(r) => &r.tree,
            State::Iac(e) => &e.tree,
        }
    }

    pub fn belief(&self) -> Option<&BeliefState> {
        match &self.state {
            State::Rtiac(r) => Some(&r.belief),
            State::Iac(_) => None,
        }
    }

    /// The frame on display, which also defines `r_t` for the next tick.
    pub fn current_frame(&self) -> Option<&LayoutFrame> {
        match &self.state {
            State::Rtiac(r) => Some(&r.frame),
            State::Iac(_) => None,
        }
    }

    pub fn view(&self) -> Option<ViewState> {
        match &self.state {
            State::Rtiac(_) => None,
            State::Iac(e) => Some(e.view),
        }
    }

    pub fn indicator(&self) -> Option<ScanIndicator> {
        match &self.state {
            State::Rtiac(r) if self.cfg.layout == LayoutKind::Scan => Some(r.indicator),
            _ => None,
        }
    }

    pub fn window(&self) -> &ActionWindow {
        &self.window
    }

    pub fn history(&self) -> &[CommitRecord] {
        &self.history
    }

    pub fn committed(&self) -> &[Symbol] {
        self.tree().committed()
    }

    pub fn committed_text(&self) -> String {
        self.tree().committed_text()
    }

    pub fn is_closed(&self) -> bool {
        self.end_reason.is_some()
    }

    pub fn end_reason(&self) -> Option<&str> {
        self.end_reason.as_deref()
    }

    pub fn last_summary(&self) -> &TickSummary {
        &self.last_summary
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn write_log(&mut self, rec: &LogRecord) -> Result<()> {
        match &mut self.log {
            Some(w) => w.write(rec),
            None => Ok(()),
        }
    }

    fn outgoing(&mut self, kind: MessageKind, body: impl Serialize) -> Result<WireMessage> {
        let seq = self.next_seq();
        let msg = WireMessage::new(kind, seq, self.now() * 1000.0, body);
        self.write_log(&LogRecord::Message(LoggedMessage::new(Direction::Out, &msg)))?;
        Ok(msg)
    }

    /// Feeds one event for the coming tick. Times after the end of the tick
    /// are clamped to it; times are rounded through milliseconds so a
    /// replayed log reproduces them bit for bit.
    pub fn push_event(&mut self, event: ActionEvent) -> Result<()> {
        if self.is_closed() {
            return Ok(());
        }
        let start = self.now();
        let end = (self.tick + 1) as f64 * self.dt();
        let t_ms = event.t.min(end) * 1000.0;
        let event = ActionEvent { t: t_ms / 1000.0, payload: event.payload };
        let seq = self.next_seq();
        let msg = WireMessage::new(MessageKind::Event, seq, t_ms, event.payload);
        self.write_log(&LogRecord::Message(LoggedMessage::new(Direction::In, &msg)))?;

        match self.window.update(event, end) {
            WindowUpdate::Inserted => {}
            WindowUpdate::Stale => self.diagnostics.stale_events += 1,
            WindowUpdate::OutOfOrder => self.diagnostics.out_of_order_events += 1,
        }
        let Payload::Press { action_id } = event.payload else {
            return Ok(());
        };
        self.diagnostics.presses += 1;
        let State::Rtiac(r) = &mut self.state else {
            return Ok(());
        };
        if let Some(d) = &self.cfg.discrete {
            let lik = match discrete_adapter(action_id as usize, &d.boundaries, &d.confusion) {
                Ok(l) => l,
                Err(e) => {
                    log::warn!("press ignored: {e}");
                    return Ok(());
                }
            };
            // the partition is over the displayed axis; pull it back to x
            let mut xb: Vec<f64> = lik.boundaries.iter().map(|&y| r.belief.inverse_y(y)).collect();
            xb[0] = 0.0;
            *xb.last_mut().expect("nonempty") = 1.0;
            if xb.windows(2).all(|w| w[1] > w[0]) {
                r.belief = r.belief.apply_likelihood(&xb, &lik.values, &self.cfg.belief)?;
            }
        } else if self.cfg.layout == LayoutKind::Scan {
            let pos = r.indicator.position_at((event.t - start).clamp(0.0, self.cfg.dt()));
            if let Some(kernel) = timed_adapter(pos, &r.indicator, &self.cfg.scan.timing) {
                r.impulses.push(Impulse { kernel, remaining: self.cfg.scan.impulse });
            }
        }
        Ok(())
    }

    /// Advances one tick. Returns the commit, undo and end messages it
    /// produced; frames are fetched separately with [`Session::frame_message`].
    pub fn advance(&mut self) -> Result<Vec<WireMessage>> {
        if self.is_closed() {
            return Ok(Vec::new());
        }
        let dt = self.dt();
        let end = (self.tick + 1) as f64 * dt;
        self.window.advance(end);
        let mut change: Option<(bool, Symbol)> = None;
        match &mut self.state {
            State::Rtiac(r) => {
                let mut kernels: Vec<(KernelParams, Metric, f64)> = Vec::new();
                if self.cfg.layout == LayoutKind::Scan && self.cfg.discrete.is_none() {
                    for imp in &mut r.impulses {
                        let d = imp.remaining.min(dt);
                        imp.remaining -= d;
                        kernels.push((imp.kernel, Metric::Circular, d));
                    }
                    r.impulses.retain(|i| i.remaining > 1e-12);
                } else if self.cfg.layout != LayoutKind::Scan {
                    let est = self.estimator.as_ref().map(|e| e as &dyn PointingModel);
                    if let Some(k) = continuous_adapter(&self.window, est, &self.cfg.adapter) {
                        kernels.push((k, Metric::Euclidean, dt));
                    }
                }
                for (kernel, metric, duration) in kernels {
                    if duration <= 0.0 {
                        continue;
                    }
                    let n = (duration / self.cfg.belief.dt_max - 1e-9).ceil().max(1.0);
                    let h = duration / n;
                    for _ in 0..n as usize {
                        let frame = &r.frame;
                        let (next, rep) =
                            r.belief.step(&kernel, |x| display_position(frame, x), metric, h, &self.cfg.belief)?;
                        self.diagnostics.floored_cells += rep.floored_cells as u64;
                        self.diagnostics.skipped_kernels += u64::from(rep.skipped);
                        r.belief = next;
                    }
                }
                r.belief = r.belief.restructure(&r.tree, &self.cfg.belief);
                if let Some(sel) = r.belief.commit_check(&r.tree, self.cfg.belief.threshold) {
                    let sym = match sel {
                        Selection::Undo => *r.tree.committed().last().ok_or(Error::NothingToUndo)?,
                        Selection::Symbol(s) => s,
                    };
                    r.belief = r.belief.apply_commit(&mut r.tree, sel, &self.cfg.belief)?;
                    r.impulses.clear();
                    change = Some((sel == Selection::Undo, sym));
                }
                r.indicator.advance(dt);
                r.frame = render(self.cfg.layout, &r.belief, &r.tree, &self.cfg.render, Some(r.indicator.phase));
                r.frame.tick = self.tick + 1;
            }
            State::Iac(e) => {
                let cursor = self.window.features().map_or((0.0, 0.0), |f| {
                    let p = f.last();
                    cursor_from_display(p.x, p.y)
                });
                change = match e.step(cursor, dt)? {
                    Some(BaselineEvent::Commit(s)) => Some((false, s)),
                    Some(BaselineEvent::Uncommit(s)) => Some((true, s)),
                    None => None,
                };
            }
        }
        self.tick += 1;

        let mut out = Vec::new();
        if let Some((undo, sym)) = change {
            let rec = CommitRecord {
                tick: self.tick,
                undo,
                symbol: self.tree().model().alphabet().char_of(sym),
                text: self.committed_text(),
            };
            let kind = if undo { MessageKind::Undo } else { MessageKind::Commit };
            out.push(self.outgoing(kind, CommitBody { tick: rec.tick, symbol: rec.symbol, text: rec.text.clone() })?);
            self.history.push(rec);
            if !undo && sym.is_terminator() {
                out.push(self.finish("terminated")?);
            }
        }
        self.last_summary = self.summarize();
        let summary = self.last_summary.clone();
        self.write_log(&LogRecord::Tick(summary))?;
        if let Some(w) = &mut self.log {
            w.flush()?;
        }
        Ok(out)
    }

    fn finish(&mut self, reason: &str) -> Result<WireMessage> {
        self.end_reason = Some(reason.to_string());
        let text = self.committed_text();
        self.outgoing(MessageKind::End, EndBody { text, reason: reason.to_string() })
    }

    /// Ends the session from outside (budget exhausted, server shutdown).
    pub fn close(&mut self, reason: &str) -> Result<Option<WireMessage>> {
        if self.is_closed() {
            return Ok(None);
        }
        let msg = self.finish(reason)?;
        if let Some(w) = &mut self.log {
            w.flush()?;
        }
        Ok(Some(msg))
    }

    /// The client asked to end the session.
    pub fn client_end(&mut self) -> Result<Option<WireMessage>> {
        if self.is_closed() {
            return Ok(None);
        }
        let seq = self.next_seq();
        let msg = WireMessage::new(MessageKind::End, seq, self.now() * 1000.0, serde_json::Value::Null);
        self.write_log(&LogRecord::Message(LoggedMessage::new(Direction::In, &msg)))?;
        self.close("client")
    }

    fn summarize(&self) -> TickSummary {
        let BeliefSummary { masses, knots } = match &self.state {
            State::Rtiac(r) => r.belief.summary(&r.tree),
            State::Iac(e) => {
                let mut s = BeliefSummary::default();
                if !e.tree.is_closed() {
                    for (_, iv) in e.tree.children_within(&[], Interval::UNIT) {
                        s.masses.push(coverage(&e.view, iv));
                        s.knots.push(e.view.to_display(iv.hi));
                    }
                }
                s
            }
        };
        TickSummary { tick: self.tick, t_ms: self.now() * 1000.0, masses, knots }
    }

    /// The current display.
    pub fn frame(&self) -> LayoutFrame {
        match &self.state {
            State::Rtiac(r) => r.frame.clone(),
            State::Iac(e) => e.frame(self.tick, self.cfg.render.depth.max(1) + 1, 1e-3),
        }
    }

    pub fn frame_message(&mut self) -> WireMessage {
        let body = FrameBody { tick: self.tick, text: self.committed_text(), frame: self.frame() };
        let seq = self.next_seq();
        WireMessage::new(MessageKind::Frame, seq, self.now() * 1000.0, body)
    }
}

/// Where the language model came from, for the log header.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub path: Option<String>,
    pub sha256: Option<String>,
}

impl ModelRef {
    pub fn of_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self { path: Some(path.display().to_string()), sha256: Some(file_sha256(path)?) })
    }
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub dir: Direction,
    pub kind: MessageKind,
    pub seq: u64,
    pub t_ms: f64,
    #[serde(default)]
    pub body: serde_json::Value,
}

impl LoggedMessage {
    pub fn new(dir: Direction, m: &WireMessage) -> Self {
        Self { dir, kind: m.kind, seq: m.seq, t_ms: m.t_ms, body: m.body.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub model_path: Option<String>,
    pub model_sha256: Option<String>,
    pub config: SessionConfig,
    pub estimator: Option<ParametricEstimator>,
    #[serde(default)]
    pub training: Option<String>,
}

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum LogRecord {
    Header(LogHeader),
    Message(LoggedMessage),
    Tick(TickSummary),
}

/// JSON-lines sink for [`LogRecord`]s.
pub struct LogWriter {
    out: Box<dyn Write + Send>,
}

impl LogWriter {
    pub fn new(out: impl Write + Send + 'static) -> Self {
        Self { out: Box::new(out) }
    }

    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(std::io::BufWriter::new(std::fs::File::create(path)?)))
    }

    /// A new log file named after `session` in `dir`.
    pub fn in_dir(dir: impl AsRef<Path>, session: &str) -> Result<(Self, PathBuf)> {
        std::fs::create_dir_all(dir.as_ref())?;
        let path = dir.as_ref().join(format!("session-{session}.jsonl"));
        Ok((Self::create(&path)?, path))
    }

    pub fn write(&mut self, rec: &LogRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// An in-memory log target that can be read back while still shared.
#[derive(Clone, Debug, Default)]
pub struct MemoryLog(Arc<Mutex<Vec<u8>>>);

impl MemoryLog {
    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().expect("log lock")).into_owned()
    }
}

impl Write for MemoryLog {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().expect("log lock").extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Parsed log plus whether its final line was cut short.
#[derive(Clone, Debug)]
pub struct SessionLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    pub truncated: bool,
}

impl SessionLog {
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines: Vec<String> = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                lines.push(line);
            }
        }
        let mut records = Vec::with_capacity(lines.len());
        let mut truncated = false;
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str::<LogRecord>(line) {
                Ok(r) => records.push(r),
                Err(e) if i == last && i > 0 => {
                    log::warn!("log ends with a partial record ({e}); replaying what precedes it");
                    truncated = true;
                }
                Err(e) => return Err(Error::Log(format!("line {}: {e}", i + 1))),
            }
        }
        let header = match records.first() {
            Some(LogRecord::Header(h)) => h.clone(),
            _ => return Err(Error::Log("first record is not a header".into())),
        };
        if header.version != LOG_VERSION {
            return Err(Error::Version { found: header.version, expected: LOG_VERSION });
        }
        Ok(Self { header, records: records.split_off(1), truncated })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?))
    }

    /// Loads the model named in the header after checking its checksum.
    pub fn load_model(&self) -> Result<Arc<dyn LanguageModel>> {
        let path = self.header.model_path.as_ref().ok_or_else(|| Error::Log("log names no model file".into()))?;
        if let Some(want) = &self.header.model_sha256 {
            let got = file_sha256(path)?;
            if &got != want {
                return Err(Error::Log(format!("model {path} has checksum {got}, log expects {want}")));
            }
        }
        Ok(Arc::new(NGramModel::load(path)?))
    }

    /// Commits and undos the live session reported.
    pub fn logged_commits(&self) -> Vec<CommitRecord> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Message(m) if m.dir == Direction::Out && matches!(m.kind, MessageKind::Commit | MessageKind::Undo) => {
                    let b: CommitBody = serde_json::from_value(m.body.clone()).ok()?;
                    Some(CommitRecord { tick: b.tick, undo: m.kind == MessageKind::Undo, symbol: b.symbol, text: b.text })
                }
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub ticks: u64,
    pub commits: Vec<CommitRecord>,
    pub logged_commits: Vec<CommitRecord>,
    /// Largest difference between logged and replayed first-generation masses.
    pub max_mass_diff: f64,
    pub truncated: bool,
    pub final_text: String,
    pub final_symbols: Vec<Symbol>,
}

impl ReplayReport {
    pub fn commits_match(&self) -> bool {
        self.commits == self.logged_commits
    }
}

/// Re-runs a logged session. `hook` sees the session after each tick's
/// events have been fed and before the tick is advanced.
pub fn replay_with(
    log: &SessionLog,
    model: Arc<dyn LanguageModel>,
    mut hook: impl FnMut(&Session),
) -> Result<ReplayReport> {
    let mut s = Session::new(model, log.header.config.clone(), log.header.estimator.clone())?;
    s.set_training(log.header.training.clone());
    let mut max_diff: f64 = 0.0;
    for rec in &log.records {
        match rec {
            LogRecord::Header(_) => return Err(Error::Log("second header".into())),
            LogRecord::Message(m) if m.dir == Direction::In => match m.kind {
                MessageKind::Event => {
                    let payload: Payload = serde_json::from_value(m.body.clone())
                        .map_err(|e| Error::Log(format!("event {}: {e}", m.seq)))?;
                    s.push_event(ActionEvent { t: m.t_ms / 1000.0, payload })?;
                }
                MessageKind::End => {
                    s.client_end()?;
                }
                _ => {}
            },
            LogRecord::Message(_) => {}
            LogRecord::Tick(t) => {
                hook(&s);
                s.advance()?;
                let got = s.last_summary();
                if got.tick != t.tick || got.masses.len() != t.masses.len() {
                    max_diff = f64::INFINITY;
                } else {
                    for (a, b) in got.masses.iter().zip(&t.masses) {
                        max_diff = max_diff.max((a - b).abs());
                    }
                }
            }
        }
    }
    Ok(ReplayReport {
        ticks: s.tick(),
        commits: s.history().to_vec(),
        logged_commits: log.logged_commits(),
        max_mass_diff: max_diff,
        truncated: log.truncated,
        final_text: s.committed_text(),
        final_symbols: s.committed().to_vec(),
    })
}

pub fn replay(log: &SessionLog, model: Arc<dyn LanguageModel>) -> Result<ReplayReport> {
    replay_with(log, model, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang_model::{Alphabet, MemorylessModel};

    fn model() -> Arc<dyn LanguageModel> {
        let a = Alphabet::new(['a', 'b'], '$').unwrap();
        Arc::new(MemorylessModel::new(a, vec![0.2, 0.5, 0.3]).unwrap())
    }

    fn drive(s: &mut Session, aim: f64, ticks: usize) -> Vec<WireMessage> {
        let mut out = Vec::new();
        for _ in 0..ticks {
            let t = s.now() + s.dt();
            s.push_event(ActionEvent::cursor(t, 1.0, aim)).unwrap();
            out.extend(s.advance().unwrap());
            if s.is_closed() {
                break;
            }
        }
        out
    }

    #[test]
    fn idle_session_is_unchanged() {
        let mut s = Session::new(model(), SessionConfig::default(), None).unwrap();
        let before = s.belief().unwrap().cells().to_vec();
        for _ in 0..10 {
            assert!(s.advance().unwrap().is_empty());
        }
        assert_eq!(s.belief().unwrap().cells(), &before[..]);
    }

    #[test]
    fn pointing_commits_the_pointed_symbol() {
        let mut s = Session::new(model(), SessionConfig::default(), None).unwrap();
        // 'a' occupies [0.2, 0.7) of the display at the start
        let msgs = drive(&mut s, 0.45, 300);
        assert!(msgs.iter().any(|m| m.kind == MessageKind::Commit));
        assert_eq!(s.history()[0].symbol, 'a');
    }

    #[test]
    fn baseline_commits_when_zooming() {
        let cfg = SessionConfig { engine: EngineKind::Iac, ..Default::default() };
        let mut s = Session::new(model(), cfg, None).unwrap();
        drive(&mut s, 0.45, 300);
        assert_eq!(s.history().first().map(|c| c.symbol), Some('a'));
    }

    #[test]
    fn log_replays_identically() {
        let mem = MemoryLog::default();
        let mut s = Session::new(model(), SessionConfig::default(), None).unwrap();
        s.start_log(LogWriter::new(mem.clone()), ModelRef::default()).unwrap();
        drive(&mut s, 0.3, 200);
        drive(&mut s, 0.9, 200);
        let log = SessionLog::read(mem.contents().as_bytes()).unwrap();
        let r = replay(&log, model()).unwrap();
        assert!(!r.commits.is_empty());
        assert!(r.commits_match());
        assert_eq!(r.max_mass_diff, 0.0);
        assert_eq!(r.ticks, s.tick());
    }

    #[test]
    fn truncated_log_replays_prefix() {
        let mem = MemoryLog::default();
        let mut s = Session::new(model(), SessionConfig::default(), None).unwrap();
        s.start_log(LogWriter::new(mem.clone()), ModelRef::default()).unwrap();
        drive(&mut s, 0.3, 40);
        let text = mem.contents();
        let cut = &text[..text.len() - 7];
        let log = SessionLog::read(cut.as_bytes()).unwrap();
        assert!(log.truncated);
        let r = replay(&log, model()).unwrap();
        assert!(r.ticks < s.tick());
        assert_eq!(r.max_mass_diff, 0.0);
    }

    #[test]
    fn scan_press_moves_mass_toward_indicator() {
        let cfg = SessionConfig { layout: LayoutKind::Scan, ..Default::default() };
        let mut s = Session::new(model(), cfg, None).unwrap();
        // indicator at 0.45 after 0.9 s at speed 0.5
        for _ in 0..27 {
            s.advance().unwrap();
        }
        let t = s.now() + 0.5 * s.dt();
        s.push_event(ActionEvent::press(t, 0)).unwrap();
        for _ in 0..15 {
            s.advance().unwrap();
        }
        let m = &s.last_summary().masses;
        assert!(m[1] > 0.7 && m[0] < 0.15 && m[2] < 0.2, "{m:?}");
    }

    #[test]
    fn discrete_press_is_bayes() {
        let cfg = SessionConfig {
            discrete: Some(DiscreteConfig {
                boundaries: vec![0.0, 0.5, 1.0],
                confusion: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            }),
            ..Default::default()
        };
        let mut s = Session::new(model(), cfg, None).unwrap();
        s.push_event(ActionEvent::press(0.01, 1)).unwrap();
        let b = s.belief().unwrap();
        assert!((b.mass_between(0.5, 1.0) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = SessionConfig { tick_rate: 0.0, ..Default::default() };
        assert!(Session::new(model(), cfg, None).is_err());
    }
}
