//! Fixed-navigation zooming baseline.
//!
//! The view is an interval of extended code space relative to the committed
//! prefix (so it may reach outside `[0, 1)` when zoomed out). The cursor
//! `(cx, cy) ∈ [-1, 1]²` zooms in to the right of centre, out to the left,
//! and scrolls towards the point it indicates vertically.

use serde::{Deserialize, Serialize};

use crate::coder::{CodeTree, Interval};
use crate::error::Result;
use crate::layouts::{Cdf, Geometry, LayoutFrame, LayoutKind, Region};
use crate::lang_model::Symbol;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ViewState {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl ViewState {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Zoom level relative to the committed prefix's interval.
    pub fn zoom(&self) -> f64 {
        1.0 / self.width()
    }

    /// Code coordinate shown at display height `v ∈ [0, 1]`.
    pub fn at_display(&self, v: f64) -> f64 {
        self.lo + v * self.width()
    }

    pub fn to_display(&self, z: f64) -> f64 {
        (z - self.lo) / self.width()
    }

    fn from_center(c: f64, w: f64) -> Self {
        Self { lo: c - 0.5 * w, hi: c + 0.5 * w }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// `k`: the view width changes by `exp(-k·cx·dt)`.
    pub zoom_rate: f64,
    /// `s`: the centre moves by `s·cy·(width/2)·dt`.
    pub scroll_rate: f64,
    /// Share of the view a first-generation interval must cover to commit.
    pub commit_coverage: f64,
    /// Below this share of the view covered by `[0, 1)` the last commit is undone.
    pub uncommit_coverage: f64,
    pub max_width: f64,
}

/// Rates tuned so a noise-free simulated user enters about one symbol per
/// 1.5 s with the bundled order-2 model; see `sim::tune_baseline`.
pub const TUNED_ZOOM_RATE: f64 = 1.22;

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            zoom_rate: TUNED_ZOOM_RATE,
            scroll_rate: TUNED_ZOOM_RATE,
            commit_coverage: 0.99,
            uncommit_coverage: 0.5,
            max_width: 4.0,
        }
    }
}

/// Cursor position for a display point in the unit square.
pub fn cursor_from_display(x: f64, y: f64) -> (f64, f64) {
    ((2.0 * x - 1.0).clamp(-1.0, 1.0), (2.0 * y - 1.0).clamp(-1.0, 1.0))
}

pub fn dasher_step(view: ViewState, cursor: (f64, f64), cfg: &BaselineConfig, dt: f64) -> ViewState {
    let (cx, cy) = (cursor.0.clamp(-1.0, 1.0), cursor.1.clamp(-1.0, 1.0));
    let (c, w) = (view.center(), view.width());
    let p = c + cy * 0.5 * w;
    let mut f = (-cfg.zoom_rate * cx * dt).exp();
    if w * f > cfg.max_width {
        f = cfg.max_width / w;
    }
    let cz = p + (c - p) * f;
    let w2 = w * f;
    let c2 = cz + cfg.scroll_rate * cy * 0.5 * w2 * dt;
    ViewState::from_center(c2, w2)
}

pub fn coverage(view: &ViewState, iv: Interval) -> f64 {
    let lo = view.lo.max(iv.lo);
    let hi = view.hi.min(iv.hi);
    ((hi - lo) / view.width()).max(0.0)
}

/// The first-generation symbol covering at least `commit_coverage` of the view.
pub fn baseline_commit(view: &ViewState, tree: &CodeTree, cfg: &BaselineConfig) -> Option<Symbol> {
    if tree.is_closed() {
        return None;
    }
    tree.children_within(&[], Interval::UNIT)
        .into_iter()
        .find(|&(_, iv)| coverage(view, iv) >= cfg.commit_coverage)
        .map(|(s, _)| s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineEvent {
    Commit(Symbol),
    Uncommit(Symbol),
}

/// View plus code tree, advanced one tick at a time.
#[derive(Clone, Debug)]
pub struct BaselineEngine {
    pub view: ViewState,
    pub tree: CodeTree,
    pub cfg: BaselineConfig,
}

impl BaselineEngine {
    pub fn new(tree: CodeTree, cfg: BaselineConfig) -> Self {
        Self { view: ViewState::default(), tree, cfg }
    }

    /// Moves the view, then applies at most one commit or uncommit,
    /// remapping the view into the new coordinates.
    pub fn step(&mut self, cursor: (f64, f64), dt: f64) -> Result<Option<BaselineEvent>> {
        self.view = dasher_step(self.view, cursor, &self.cfg, dt);
        if let Some(sym) = baseline_commit(&self.view, &self.tree, &self.cfg) {
            let iv = self.tree.rescale_after_commit(sym)?;
            self.view = ViewState { lo: iv.to_inner(self.view.lo), hi: iv.to_inner(self.view.hi) };
            return Ok(Some(BaselineEvent::Commit(sym)));
        }
        if !self.tree.committed().is_empty() && coverage(&self.view, Interval::UNIT) < self.cfg.uncommit_coverage {
            let (sym, iv) = self.tree.uncommit()?;
            self.view = ViewState { lo: iv.to_outer(self.view.lo), hi: iv.to_outer(self.view.hi) };
            return Ok(Some(BaselineEvent::Uncommit(sym)));
        }
        Ok(None)
    }

    /// Right-anchored squares for every node at least `min_height` tall on
    /// screen, down to `max_depth` below the committed prefix.
    pub fn frame(&self, tick: u64, max_depth: usize, min_height: f64) -> LayoutFrame {
        let mut regions = Vec::new();
        if !self.tree.is_closed() {
            let mut path = Vec::new();
            self.collect(&mut path, Interval::UNIT, max_depth, min_height, &mut regions);
        }
        LayoutFrame::new(LayoutKind::Linear, tick, regions, Cdf::default())
    }

    fn collect(
        &self,
        path: &mut Vec<Symbol>,
        iv: Interval,
        max_depth: usize,
        min_height: f64,
        out: &mut Vec<Region>,
    ) {
        let alphabet = self.tree.model().alphabet();
        for (sym, child) in self.tree.children_within(path, iv) {
            let top = self.view.to_display(child.lo);
            let bottom = self.view.to_display(child.hi);
            let h = bottom - top;
            if bottom <= 0.0 || top >= 1.0 || h < min_height {
                continue;
            }
            path.push(sym);
            let w = h.min(1.0);
            out.push(Region {
                prefix: alphabet.decode(path),
                label: alphabet.char_of(sym).to_string(),
                probability: child.len(),
                depth: path.len(),
                geometry: Geometry::Rect { x: 1.0 - w, y: top, w, h },
                span: child,
                undo: false,
            });
            if path.len() < max_depth && !sym.is_terminator() {
                self.collect(path, child, max_depth, min_height, out);
            }
            path.pop();
        }
    }
}
