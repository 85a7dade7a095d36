//! Simulated users and comparative sweeps.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::ActionEvent;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::lang_model::{LanguageModel, Symbol};
use crate::layouts::{display_position, LayoutKind};
use crate::learner::pairs::{record_pairs, TARGET_DEPTH};
use crate::learner::parametric::{fit_parametric, ParametricEstimator, Symmetry};
use crate::session::{EngineKind, LogWriter, MemoryLog, ModelRef, Session, SessionConfig, SessionLog};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserModel {
    /// Cursor noise per sample, display units.
    pub sigma_u: f64,
    /// Reaction delay, seconds.
    pub delay: f64,
    /// Press timing jitter and bias, seconds.
    pub sigma_t: f64,
    pub mu_t: f64,
    /// Share of each target prefix's extent, at each end, the user keeps
    /// clear of when aiming at the text beyond it.
    pub margin: f64,
    /// Deeper prefixes narrower than this on screen are not aimed inside.
    pub min_height: f64,
}

impl Default for UserModel {
    fn default() -> Self {
        Self { sigma_u: 0.0, delay: 0.2, sigma_t: 0.1, mu_t: 0.0, margin: 0.25, min_height: 0.1 }
    }
}

/// Knows the target text and aims at it on whatever is displayed.
pub struct SimulatedUser {
    pub model: UserModel,
    target: Vec<Symbol>,
    rng: ChaCha8Rng,
    aims: VecDeque<Point>,
    press_at: Option<f64>,
    last_press: f64,
    seen_commits: usize,
}

impl SimulatedUser {
    pub fn new(model: UserModel, target: Vec<Symbol>, seed: u64) -> Self {
        Self {
            model,
            target,
            rng: ChaCha8Rng::seed_from_u64(seed),
            aims: VecDeque::new(),
            press_at: None,
            last_press: f64::NEG_INFINITY,
            seen_commits: 0,
        }
    }

    pub fn target(&self) -> &[Symbol] {
        &self.target
    }

    /// Where the user wants to point: the target's display position while
    /// the committed text is a prefix of it, the delete branch otherwise.
    pub fn aim(&self, s: &Session) -> Option<Point> {
        if s.is_closed() {
            return None;
        }
        let rest = s.committed().len() <= self.target.len() && self.target.starts_with(s.committed());
        let margin = self.model.margin.clamp(0.0, 0.5);
        let inside = |v: f64, lo: f64, hi: f64| v.clamp(lo + margin * (hi - lo), hi - margin * (hi - lo));
        if let (Some(b), Some(frame)) = (s.belief(), s.current_frame()) {
            let x = if rest {
                let r = &self.target[s.committed().len()..];
                let depth = r.len().min(TARGET_DEPTH);
                let deep = b.code_to_x(s.tree().interval_of(&r[..depth]).ok()?.mid());
                let mut y = b.transform_y(deep);
                for d in 1..=depth {
                    let iv = b.code_interval_to_x(s.tree().interval_of(&r[..d]).ok()?);
                    let (lo, hi) = (b.transform_y(iv.lo), b.transform_y(iv.hi));
                    if d > 1 && hi - lo < self.model.min_height {
                        break;
                    }
                    y = inside(y, lo, hi);
                }
                b.inverse_y(y)
            } else {
                b.undo_interval()?.mid()
            };
            return Some(display_position(frame, x));
        }
        let view = s.view()?;
        if !rest {
            return Some(Point::new(0.0, 0.5));
        }
        let r = &self.target[s.committed().len()..];
        // no margin here: clamping to the next symbol hides improbable
        // continuations that the zoom would otherwise reveal
        let z = s.tree().interval_of(&r[..r.len().min(TARGET_DEPTH)]).ok()?.mid();
        let v = view.to_display(z);
        if (0.0..=1.0).contains(&v) {
            Some(Point::new(1.0, v))
        } else {
            // off screen: scroll towards it without zooming
            Some(Point::new(0.5, v.clamp(0.0, 1.0)))
        }
    }

    /// Events for the coming tick.
    pub fn act(&mut self, s: &Session) -> Vec<ActionEvent> {
        if s.config().layout == LayoutKind::Scan && s.config().engine == EngineKind::Rtiac {
            return self.act_timed(s);
        }
        let delay_ticks = (self.model.delay / s.dt()).round() as usize;
        let Some(aim) = self.aim(s) else {
            return Vec::new();
        };
        self.aims.push_back(aim);
        if self.aims.len() <= delay_ticks {
            return Vec::new();
        }
        let p = self.aims.pop_front().expect("nonempty");
        let noise = Normal::new(0.0, self.model.sigma_u.max(0.0)).expect("finite sigma");
        let (dx, dy) = (noise.sample(&mut self.rng), noise.sample(&mut self.rng));
        vec![ActionEvent::cursor(s.now() + s.dt(), p.x + dx, p.y + dy)]
    }

    /// Waits for the previous press to play out, then presses when the
    /// indicator next passes the target, with Gaussian timing error.
    fn act_timed(&mut self, s: &Session) -> Vec<ActionEvent> {
        let (Some(ind), now, dt) = (s.indicator(), s.now(), s.dt()) else {
            return Vec::new();
        };
        if s.history().len() != self.seen_commits {
            self.seen_commits = s.history().len();
            self.press_at = None;
            self.last_press = now;
        }
        let settle = s.config().scan.impulse + self.model.delay;
        if self.press_at.is_none() && now - self.last_press >= settle {
            let Some(aim) = self.aim(s) else {
                return Vec::new();
            };
            let wait = (aim.x - ind.phase).rem_euclid(1.0) / ind.speed;
            let wait = if wait < self.model.delay { wait + 1.0 / ind.speed } else { wait };
            let jitter = Normal::new(self.model.mu_t, self.model.sigma_t.max(0.0)).expect("finite sigma");
            self.press_at = Some(now + wait + jitter.sample(&mut self.rng).max(-wait + 1e-6));
        }
        match self.press_at {
            Some(t) if t < now + dt => {
                self.press_at = None;
                self.last_press = t;
                vec![ActionEvent::press(t.max(now), 0)]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub engine: EngineKind,
    pub layout: LayoutKind,
    pub sigma_u: f64,
    pub seed: u64,
    pub target_len: usize,
    /// Correct symbols at the end, terminator excluded.
    pub chars: usize,
    pub ticks: u64,
    pub seconds: f64,
    pub chars_per_min: f64,
    /// Model information of the correct text per correct symbol.
    pub bits_per_char: f64,
    pub bits: f64,
    /// Commits that left the target path.
    pub errors: usize,
    pub undos: usize,
    pub presses: u64,
    pub complete: bool,
}

/// Column order of [`MetricsRecord`] in CSV output.
pub const CSV_COLUMNS: [&str; 15] = [
    "engine",
    "layout",
    "sigma_u",
    "seed",
    "target_len",
    "chars",
    "ticks",
    "seconds",
    "chars_per_min",
    "bits_per_char",
    "bits",
    "errors",
    "undos",
    "presses",
    "complete",
];

impl MetricsRecord {
    pub fn bits_per_press(&self) -> f64 {
        if self.presses == 0 {
            0.0
        } else {
            self.bits / self.presses as f64
        }
    }

    pub fn bits_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.bits / self.seconds
        } else {
            0.0
        }
    }
}

fn score(s: &Session, target: &[Symbol], user: &UserModel, seed: u64) -> MetricsRecord {
    let committed = s.committed();
    let correct = committed.iter().zip(target).take_while(|(a, b)| a == b).count();
    let good = &target[..correct];
    let chars = good.iter().filter(|c| !c.is_terminator()).count();
    let bits = s.tree().model().prefix_mass(good).map_or(0.0, |p| -p.log2());
    let mut errors = 0;
    let mut undos = 0;
    let mut text: Vec<Symbol> = Vec::new();
    let alphabet = s.tree().model().alphabet();
    for c in s.history() {
        if c.undo {
            undos += 1;
            text.pop();
        } else {
            text.push(alphabet.symbol(c.symbol).unwrap_or(Symbol::TERMINATOR));
            if !(text.len() <= target.len() && target.starts_with(&text)) {
                errors += 1;
            }
        }
    }
    let seconds = s.now();
    MetricsRecord {
        engine: s.config().engine,
        layout: s.config().layout,
        sigma_u: user.sigma_u,
        seed,
        target_len: target.iter().filter(|c| !c.is_terminator()).count(),
        chars,
        ticks: s.tick(),
        seconds,
        chars_per_min: if seconds > 0.0 { chars as f64 * 60.0 / seconds } else { 0.0 },
        bits_per_char: if chars > 0 { bits / chars as f64 } else { 0.0 },
        bits,
        errors,
        undos,
        presses: s.diagnostics().presses,
        complete: correct == target.len() && s.is_closed(),
    }
}

/// Runs one simulated session until the target is entered or `max_ticks`
/// pass. `target` should end with the terminator.
#[allow(clippy::too_many_arguments)]
pub fn run_session(
    model: Arc<dyn LanguageModel>,
    cfg: &SessionConfig,
    estimator: Option<&ParametricEstimator>,
    user: &UserModel,
    target: &[Symbol],
    seed: u64,
    max_ticks: u64,
    log: Option<LogWriter>,
) -> Result<(MetricsRecord, Session)> {
    let mut s = Session::new(model, cfg.clone(), estimator.cloned())?;
    if let Some(w) = log {
        s.set_training(Some(s.tree().model().alphabet().decode(target)));
        s.start_log(w, ModelRef::default())?;
    }
    let mut u = SimulatedUser::new(*user, target.to_vec(), seed);
    while !s.is_closed() && s.tick() < max_ticks {
        for e in u.act(&s) {
            s.push_event(e)?;
        }
        s.advance()?;
    }
    s.close("budget")?;
    Ok((score(&s, target, user, seed), s))
}

/// Text sampled from the model, `len` symbols and then the terminator.
pub fn sample_text(model: &dyn LanguageModel, len: usize, rng: &mut impl Rng) -> Vec<Symbol> {
    let mut out = Vec::with_capacity(len + 1);
    while out.len() < len {
        let mut p = model.next_symbol_distribution(&out);
        p[0] = 0.0;
        let Ok(d) = WeightedIndex::new(&p) else { break };
        out.push(Symbol(d.sample(rng) as u16));
    }
    out.push(Symbol::TERMINATOR);
    out
}

/// Word-aligned excerpts of about `len` characters from `text`.
pub fn phrases(text: &str, n: usize, len: usize, seed: u64) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if words.is_empty() {
        return out;
    }
    while out.len() < n {
        let mut i = rng.random_range(0..words.len());
        let mut p = String::new();
        while p.len() < len && i < words.len() {
            if !p.is_empty() {
                p.push(' ');
            }
            p.push_str(words[i]);
            i += 1;
        }
        out.push(p);
    }
    out
}

/// Targets for seeds `0..n`: corpus excerpts when `texts` is given,
/// otherwise samples from the model.
pub fn targets(model: &dyn LanguageModel, texts: Option<&[String]>, n: usize, len: usize) -> Result<Vec<Vec<Symbol>>> {
    (0..n)
        .map(|i| match texts {
            Some(t) if !t.is_empty() => {
                let mut s = model.alphabet().encode(&t[i % t.len()])?;
                s.push(Symbol::TERMINATOR);
                Ok(s)
            }
            _ => Ok(sample_text(model, len, &mut ChaCha8Rng::seed_from_u64(0x5eed ^ i as u64))),
        })
        .collect()
}

/// Kernel variance used by simulated training sessions before any
/// estimator exists. The adapter default is too wide for a linear layout
/// to ever reach the commit threshold.
pub const TRAINING_SIGMA2: f64 = 0.01;

/// Fits the pointing model on prompted training sessions, recovering pairs
/// by replaying their logs. The first round runs with the identity kernel;
/// each later round runs with the previous fit and refits on the pairs of
/// every round so far.
pub fn bootstrap_estimator(
    model: Arc<dyn LanguageModel>,
    cfg: &SessionConfig,
    user: &UserModel,
    targets: &[Vec<Symbol>],
    max_ticks: u64,
    rounds: usize,
) -> Result<ParametricEstimator> {
    let mut cfg = SessionConfig { engine: EngineKind::Rtiac, ..cfg.clone() };
    cfg.adapter.sigma2_default = TRAINING_SIGMA2;
    let mut est: Option<ParametricEstimator> = None;
    let mut pairs = Vec::new();
    for round in 0..rounds.max(1) {
        let fresh: Vec<_> = targets
            .par_iter()
            .enumerate()
            .map(|(i, t)| -> Result<Vec<_>> {
                let mem = MemoryLog::default();
                let seed = 1_000_000 * (round as u64 + 1) + i as u64;
                run_session(model.clone(), &cfg, est.as_ref(), user, t, seed, max_ticks, Some(LogWriter::new(mem.clone())))?;
                let log = SessionLog::read(mem.contents().as_bytes())?;
                record_pairs(&log, model.clone())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .map(|p| p.sample())
            .collect();
        pairs.extend(fresh);
        est = Some(fit_parametric(&pairs, Symmetry::None, 0.0)?);
    }
    Ok(est.expect("at least one round"))
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub engines: Vec<EngineKind>,
    pub layout: LayoutKind,
    pub noise: Vec<f64>,
    pub seeds: usize,
    pub max_ticks: u64,
    pub user: UserModel,
    /// Bootstrap rounds for the RTIAC estimator.
    pub rounds: usize,
}

/// Every engine × noise × seed combination, in that order. RTIAC runs use
/// an estimator bootstrapped at the same noise level when `bootstrap` is
/// nonzero (that many training sessions on separate targets).
pub fn sweep(
    model: Arc<dyn LanguageModel>,
    base: &SessionConfig,
    spec: &SweepSpec,
    targets: &[Vec<Symbol>],
    training: &[Vec<Symbol>],
) -> Result<Vec<MetricsRecord>> {
    if targets.len() < spec.seeds {
        return Err(Error::Config(format!("{} targets for {} seeds", targets.len(), spec.seeds)));
    }
    let estimators: Vec<Option<ParametricEstimator>> = spec
        .noise
        .iter()
        .map(|&sigma_u| {
            if training.is_empty() || !spec.engines.contains(&EngineKind::Rtiac) {
                return Ok(None);
            }
            let user = UserModel { sigma_u, ..spec.user };
            let cfg = SessionConfig { layout: spec.layout, ..base.clone() };
            bootstrap_estimator(model.clone(), &cfg, &user, training, spec.max_ticks, spec.rounds).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for &engine in &spec.engines {
        for (k, &sigma_u) in spec.noise.iter().enumerate() {
            for seed in 0..spec.seeds {
                jobs.push((engine, k, sigma_u, seed));
            }
        }
    }
    jobs.par_iter()
        .map(|&(engine, k, sigma_u, seed)| {
            let cfg = SessionConfig { engine, layout: spec.layout, ..base.clone() };
            let user = UserModel { sigma_u, ..spec.user };
            let est = if engine == EngineKind::Rtiac { estimators[k].as_ref() } else { None };
            run_session(model.clone(), &cfg, est, &user, &targets[seed], seed as u64, spec.max_ticks, None).map(|r| r.0)
        })
        .collect()
}

pub fn write_csv(records: &[MetricsRecord], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn median(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scan-speed search result: the tuned speed and the objective there and
/// at both ends of the range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanTuning {
    pub speed: f64,
    pub rate: f64,
    pub lo: (f64, f64),
    pub hi: (f64, f64),
}

/// Mean information rate (bits per second) of a timed user at `speed`.
pub fn scan_rate(
    model: Arc<dyn LanguageModel>,
    base: &SessionConfig,
    user: &UserModel,
    targets: &[Vec<Symbol>],
    speed: f64,
    max_ticks: u64,
) -> Result<Vec<MetricsRecord>> {
    let mut cfg = SessionConfig { engine: EngineKind::Rtiac, layout: LayoutKind::Scan, ..base.clone() };
    cfg.scan.speed = speed;
    cfg.scan.timing = crate::actions::TimingModel { bias: user.mu_t, jitter: user.sigma_t };
    targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| run_session(model.clone(), &cfg, None, user, t, i as u64, max_ticks, None).map(|r| r.0))
        .collect()
}

fn mean_rate(records: &[MetricsRecord]) -> f64 {
    let bits: f64 = records.iter().map(|r| r.bits).sum();
    let secs: f64 = records.iter().map(|r| r.seconds).sum();
    if secs > 0.0 {
        bits / secs
    } else {
        0.0
    }
}

/// Golden-section search for the indicator speed maximizing the
/// information rate over `[lo, hi]`.
pub fn tune_scan_speed(
    model: Arc<dyn LanguageModel>,
    base: &SessionConfig,
    user: &UserModel,
    targets: &[Vec<Symbol>],
    (lo, hi): (f64, f64),
    iterations: usize,
    max_ticks: u64,
) -> Result<ScanTuning> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config(format!("bad speed range [{lo}, {hi}]")));
    }
    let f = |v: f64| scan_rate(model.clone(), base, user, targets, v, max_ticks).map(|r| mean_rate(&r));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..iterations {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let (speed, rate) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(ScanTuning { speed, rate, lo: (lo, f(lo)?), hi: (hi, f(hi)?) })
}

/// Mean seconds per correct symbol for a noise-free user on the baseline.
pub fn baseline_pace(
    model: Arc<dyn LanguageModel>,
    base: &SessionConfig,
    targets: &[Vec<Symbol>],
    zoom_rate: f64,
    max_ticks: u64,
) -> Result<f64> {
    let mut cfg = SessionConfig { engine: EngineKind::Iac, ..base.clone() };
    cfg.baseline.zoom_rate = zoom_rate;
    cfg.baseline.scroll_rate = zoom_rate;
    let user = UserModel::default();
    let recs: Vec<MetricsRecord> = targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| run_session(model.clone(), &cfg, None, &user, t, i as u64, max_ticks, None).map(|r| r.0))
        .collect::<Result<_>>()?;
    let secs: f64 = recs.iter().map(|r| r.seconds).sum();
    let syms: usize = recs.iter().map(|r| r.chars + usize::from(r.complete)).sum();
    Ok(secs / syms.max(1) as f64)
}

/// Bisects the zoom rate so the noise-free pace is `seconds` per symbol.
pub fn tune_baseline(
    model: Arc<dyn LanguageModel>,
    base: &SessionConfig,
    targets: &[Vec<Symbol>],
    seconds: f64,
    max_ticks: u64,
) -> Result<f64> {
    let (mut lo, mut hi) = (0.1f64, 20.0f64);
    for _ in 0..30 {
        let mid = (lo * hi).sqrt();
        if baseline_pace(model.clone(), base, targets, mid, max_ticks)? > seconds {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}
