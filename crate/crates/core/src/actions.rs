//! User actions: the sliding window `I^W` and its conversion into update
//! kernels or likelihoods.

use std::collections::VecDeque;

use crossbeam_queue::ArrayQueue;
use serde::{Deserialize, Serialize};

use crate::belief::KernelParams;
use crate::error::{Error, Result};
use crate::geom::Point;

pub const FEATURE_DIM: usize = 6;
pub const EVENT_QUEUE_CAPACITY: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Cursor { x: f64, y: f64 },
    Press { action_id: u32 },
    Release { action_id: u32 },
}

/// A user action; `t` is in seconds on the session clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub t: f64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl ActionEvent {
    pub fn cursor(t: f64, x: f64, y: f64) -> Self {
        Self { t, payload: Payload::Cursor { x, y } }
    }

    pub fn press(t: f64, action_id: u32) -> Self {
        Self { t, payload: Payload::Press { action_id } }
    }
}

/// Window summary: mean cursor position, mean velocity, final position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Features(pub [f64; FEATURE_DIM]);

impl Features {
    pub fn mean(&self) -> Point {
        Point::new(self.0[0], self.0[1])
    }

    pub fn velocity(&self) -> Point {
        Point::new(self.0[2], self.0[3])
    }

    pub fn last(&self) -> Point {
        Point::new(self.0[4], self.0[5])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowUpdate {
    Inserted,
    /// Already older than the horizon.
    Stale,
    /// Arrived more than the tolerance behind the newest event.
    OutOfOrder,
}

#[derive(Clone, Debug)]
pub struct ActionWindow {
    horizon: f64,
    tolerance: f64,
    events: VecDeque<ActionEvent>,
    newest: f64,
    features: Option<Features>,
    dropped: u64,
}

impl ActionWindow {
    pub fn new(horizon: f64) -> Self {
        Self::with_tolerance(horizon, 0.05)
    }

    pub fn with_tolerance(horizon: f64, tolerance: f64) -> Self {
        Self {
            horizon,
            tolerance,
            events: VecDeque::new(),
            newest: f64::NEG_INFINITY,
            features: None,
            dropped: 0,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> impl Iterator<Item = &ActionEvent> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn features(&self) -> Option<Features> {
        self.features
    }

    pub fn last_press(&self) -> Option<(f64, u32)> {
        self.events.iter().rev().find_map(|e| match e.payload {
            Payload::Press { action_id } => Some((e.t, action_id)),
            _ => None,
        })
    }

    /// Evicts events at or before `now − W`, then inserts `event`.
    pub fn update(&mut self, event: ActionEvent, now: f64) -> WindowUpdate {
        self.evict(now);
        let result = if event.t <= now - self.horizon {
            WindowUpdate::Stale
        } else if event.t < self.newest - self.tolerance {
            log::warn!("dropping event at {:.3}s, {:.3}s behind the newest", event.t, self.newest - event.t);
            self.dropped += 1;
            WindowUpdate::OutOfOrder
        } else {
            let at = self.events.partition_point(|e| e.t <= event.t);
            self.events.insert(at, event);
            self.newest = self.newest.max(event.t);
            WindowUpdate::Inserted
        };
        self.refresh();
        result
    }

    /// Evicts without inserting; call once per tick.
    pub fn advance(&mut self, now: f64) {
        self.evict(now);
        self.refresh();
    }

    fn evict(&mut self, now: f64) {
        let cutoff = now - self.horizon;
        while self.events.front().is_some_and(|e| e.t <= cutoff) {
            self.events.pop_front();
        }
    }

    fn refresh(&mut self) {
        let cursors: Vec<(f64, Point)> = self
            .events
            .iter()
            .filter_map(|e| match e.payload {
                Payload::Cursor { x, y } => Some((e.t, Point::new(x, y))),
                _ => None,
            })
            .collect();
        self.features = cursor_features(&cursors);
    }
}

/// Features of a time-ordered cursor track; `None` when it is empty.
pub fn cursor_features(track: &[(f64, Point)]) -> Option<Features> {
    let (&(t0, first), &(t1, last)) = (track.first()?, track.last()?);
    let n = track.len() as f64;
    let sum = track.iter().fold(Point::default(), |acc, &(_, p)| acc + p);
    let mean = sum * (1.0 / n);
    let vel = if t1 > t0 { (last - first) * (1.0 / (t1 - t0)) } else { Point::default() };
    Some(Features([mean.x, mean.y, vel.x, vel.y, last.x, last.y]))
}

/// Maps window features to a pointing estimate: centre and variance.
pub trait PointingModel: Send + Sync {
    fn predict(&self, features: &Features) -> (Point, f64);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub sigma2_default: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self { sigma2_min: 1e-4, sigma2_max: 1.0, sigma2_default: 0.05 }
    }
}

/// Identity default: the kernel sits on the mean cursor position.
#[derive(Clone, Copy, Debug)]
pub struct DefaultPointing {
    pub sigma2: f64,
}

impl PointingModel for DefaultPointing {
    fn predict(&self, f: &Features) -> (Point, f64) {
        (f.mean(), self.sigma2)
    }
}

/// Kernel for continuous pointing. `None` when the window holds no cursor
/// samples.
pub fn continuous_adapter(
    window: &ActionWindow,
    estimator: Option<&dyn PointingModel>,
    cfg: &AdapterConfig,
) -> Option<KernelParams> {
    let f = window.features()?;
    let (center, var) = match estimator {
        Some(m) => m.predict(&f),
        None => DefaultPointing { sigma2: cfg.sigma2_default }.predict(&f),
    };
    let var = if var.is_nan() { cfg.sigma2_default } else { var.clamp(cfg.sigma2_min, cfg.sigma2_max) };
    Some(KernelParams::new(center, var))
}

/// A scan indicator sweeping the selection axis at `speed` per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanIndicator {
    pub phase: f64,
    pub speed: f64,
    pub running: bool,
}

impl ScanIndicator {
    pub fn new(speed: f64) -> Self {
        Self { phase: 0.0, speed, running: true }
    }

    pub fn position_at(&self, elapsed: f64) -> f64 {
        (self.phase + self.speed * elapsed).rem_euclid(1.0)
    }

    pub fn advance(&mut self, dt: f64) {
        if self.running {
            self.phase = self.position_at(dt);
        }
    }
}

/// How a user's press times deviate from the intended instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub bias: f64,
    pub jitter: f64,
}

/// Smallest standard deviation a timed kernel may have, in axis units.
pub const MIN_TIMED_SIGMA: f64 = 1e-3;

/// Kernel for a press while the indicator is at `position`. The user meant
/// the point the indicator crossed `bias` seconds earlier; the kernel's
/// `center.x` is that point on the scanned axis (pair it with
/// [`crate::geom::Metric::Circular`]).
pub fn timed_adapter(position: f64, indicator: &ScanIndicator, timing: &TimingModel) -> Option<KernelParams> {
    if !indicator.running || !(indicator.speed > 0.0) {
        log::warn!("press outside a running scan ignored");
        return None;
    }
    let center = (position - indicator.speed * timing.bias).rem_euclid(1.0);
    let sigma = (indicator.speed * timing.jitter).max(MIN_TIMED_SIGMA);
    Some(KernelParams::new(Point::new(center, 0.5), sigma * sigma))
}

/// Piecewise-constant likelihood over the selection axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Likelihood {
    pub boundaries: Vec<f64>,
    pub values: Vec<f64>,
}

/// Likelihood of `pressed` under a fixed partition of `[0, 1)` given by its
/// boundaries, with `confusion[i][j]` the probability of pressing `i` when
/// the intended input lies in subset `j`.
pub fn discrete_adapter(pressed: usize, boundaries: &[f64], confusion: &[Vec<f64>]) -> Result<Likelihood> {
    let k = boundaries.len().saturating_sub(1);
    if k == 0
        || boundaries[0] != 0.0
        || boundaries[k] != 1.0
        || boundaries.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::Config("partition must be increasing from 0 to 1".into()));
    }
    if confusion.len() != k || confusion.iter().any(|row| row.len() != k) {
        return Err(Error::Config(format!("confusion matrix must be {k}×{k}")));
    }
    for row in confusion {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 || row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Config("confusion rows must be probability vectors".into()));
        }
    }
    if pressed >= k {
        return Err(Error::Config(format!("action {pressed} outside {k} subsets")));
    }
    Ok(Likelihood { boundaries: boundaries.to_vec(), values: confusion[pressed].clone() })
}

/// Bounded hand-off from I/O threads to the tick loop. When full, the
/// oldest event is discarded.
pub struct EventQueue {
    inner: ArrayQueue<ActionEvent>,
    dropped: std::sync::atomic::AtomicU64,
}

impl EventQueue {
    pub fn new(capacity: usize) -> Self {
        Self { inner: ArrayQueue::new(capacity.max(1)), dropped: Default::default() }
    }

    pub fn push(&self, e: ActionEvent) {
        if self.inner.force_push(e).is_some() {
            let n = self.dropped.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            log::warn!("event queue full; dropped oldest ({n} so far)");
        }
    }

    pub fn drain(&self) -> Vec<ActionEvent> {
        std::iter::from_fn(|| self.inner.pop()).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(std::sync::atomic::Ordering::Relaxed)
    }
}

impl Default for EventQueue {
    fn default() -> Self {
        Self::new(EVENT_QUEUE_CAPACITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_event_features() {
        let mut w = ActionWindow::new(0.5);
        w.update(ActionEvent::cursor(1.0, 0.3, 0.7), 1.0);
        let f = w.features().unwrap();
        assert_eq!(f.0, [0.3, 0.7, 0.0, 0.0, 0.3, 0.7]);
    }

    #[test]
    fn old_events_leave_window_unchanged() {
        let mut w = ActionWindow::new(0.5);
        w.update(ActionEvent::cursor(1.0, 0.3, 0.7), 1.0);
        let before = w.features();
        assert_eq!(w.update(ActionEvent::cursor(0.4, 0.9, 0.9), 1.0), WindowUpdate::Stale);
        assert_eq!(w.features(), before);
    }

    #[test]
    fn velocity_is_finite_difference() {
        let mut w = ActionWindow::new(0.5);
        w.update(ActionEvent::cursor(1.0, 0.2, 0.5), 1.0);
        w.update(ActionEvent::cursor(1.1, 0.25, 0.4), 1.1);
        let v = w.features().unwrap().velocity();
        assert!((v.x - 0.5).abs() < 1e-12 && (v.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn late_events_are_dropped() {
        let mut w = ActionWindow::new(0.5);
        w.update(ActionEvent::cursor(1.0, 0.2, 0.5), 1.0);
        assert_eq!(w.update(ActionEvent::cursor(0.9, 0.2, 0.5), 1.0), WindowUpdate::OutOfOrder);
        assert_eq!(w.update(ActionEvent::cursor(0.97, 0.2, 0.5), 1.0), WindowUpdate::Inserted);
        assert_eq!(w.events().next().unwrap().t, 0.97);
        assert_eq!(w.dropped(), 1);
    }

    #[test]
    fn eviction_by_horizon() {
        let mut w = ActionWindow::new(0.5);
        w.update(ActionEvent::cursor(1.0, 0.2, 0.5), 1.0);
        w.advance(1.5);
        assert!(w.is_empty());
        assert!(w.features().is_none());
    }

    #[test]
    fn default_adapter_and_clamp() {
        let mut w = ActionWindow::new(0.5);
        w.update(ActionEvent::cursor(0.0, 0.4, 0.6), 0.0);
        let cfg = AdapterConfig::default();
        let k = continuous_adapter(&w, None, &cfg).unwrap();
        assert_eq!(k.center, Point::new(0.4, 0.6));
        assert_eq!(k.variance, 0.05);
        let tight = DefaultPointing { sigma2: 1e-9 };
        assert_eq!(continuous_adapter(&w, Some(&tight), &cfg).unwrap().variance, 1e-4);
    }

    #[test]
    fn timed_examples() {
        let ind = ScanIndicator::new(0.5);
        let k = timed_adapter(0.6, &ind, &TimingModel { bias: 0.2, jitter: 0.1 }).unwrap();
        assert!((k.center.x - 0.5).abs() < 1e-12);
        assert!((k.variance.sqrt() - 0.05).abs() < 1e-12);
        let k = timed_adapter(0.6, &ind, &TimingModel { bias: 0.0, jitter: 0.1 }).unwrap();
        assert!((k.center.x - 0.6).abs() < 1e-12);
        let stopped = ScanIndicator { running: false, ..ind };
        assert!(timed_adapter(0.6, &stopped, &TimingModel::default()).is_none());
    }

    #[test]
    fn discrete_validation() {
        let c = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let l = discrete_adapter(0, &[0.0, 0.5, 1.0], &c).unwrap();
        assert_eq!(l.values, vec![0.9, 0.1]);
        assert!(discrete_adapter(0, &[0.0, 0.7, 0.5, 1.0], &c).is_err());
        assert!(discrete_adapter(0, &[0.0, 0.5, 1.0], &[vec![0.5, 0.4], vec![0.2, 0.8]]).is_err());
    }

    #[test]
    fn queue_drops_oldest() {
        let q = EventQueue::new(2);
        for i in 0..3 {
            q.push(ActionEvent::press(i as f64, 0));
        }
        let got: Vec<f64> = q.drain().iter().map(|e| e.t).collect();
        assert_eq!(got, vec![1.0, 2.0]);
        assert_eq!(q.dropped(), 1);
    }
}
