//! Rendering a belief as display geometry.
//!
//! Display space is the unit square with `y` pointing down. Every layout
//! orders inputs along a selection axis by their transformed coordinate
//! `y(x)`, so a region's extent along that axis equals its probability.

mod area;
mod circular;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

pub use area::{area_layout, prop_area_pair};
pub use circular::{circular_layout, circular_radius, CircularCoefficients};
pub use linear::{folded_layout, linear_layout, scroll_window};
pub use tree::{tree_layout, tree_layout_from_belief, TreeConfig, TreeNode};

use crate::belief::{BeliefState, NodeKey};
use crate::coder::{CodeTree, Interval};
use crate::geom::Point;

pub const UNDO_LABEL: &str = "←";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    #[default]
    Linear,
    Circular,
    Area,
    Tree,
    Folded,
    Scan,
}

impl std::str::FromStr for LayoutKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(Self::Linear),
            "circular" => Ok(Self::Circular),
            "area" => Ok(Self::Area),
            "tree" => Ok(Self::Tree),
            "folded" => Ok(Self::Folded),
            "scan" => Ok(Self::Scan),
            _ => Err(format!("unknown layout {s:?}")),
        }
    }
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Linear => "linear",
            Self::Circular => "circular",
            Self::Area => "area",
            Self::Tree => "tree",
            Self::Folded => "folded",
            Self::Scan => "scan",
        };
        f.write_str(s)
    }
}

/// Region shapes. Sectors live in the disc inscribed in the display, with
/// angles in radians clockwise from 12 o'clock and `r_inner` relative to
/// the disc radius (the outer radius is always the rim).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Rect { x: f64, y: f64, w: f64, h: f64 },
    Sector { angle0: f64, angle1: f64, r_inner: f64 },
    Node { x: f64, y: f64, radius: f64 },
}

pub const DISC_CENTER: Point = Point::new(0.5, 0.5);
pub const DISC_RADIUS: f64 = 0.5;

impl Geometry {
    /// Area in display units.
    pub fn area(&self) -> f64 {
        match *self {
            Geometry::Rect { w, h, .. } => w * h,
            Geometry::Sector { angle0, angle1, r_inner } => {
                0.5 * (angle1 - angle0) * DISC_RADIUS * DISC_RADIUS * (1.0 - r_inner * r_inner)
            }
            Geometry::Node { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn centroid(&self) -> Point {
        match *self {
            Geometry::Rect { x, y, w, h } => Point::new(x + 0.5 * w, y + 0.5 * h),
            Geometry::Sector { angle0, angle1, r_inner } => {
                disc_point(0.5 * (angle0 + angle1), 0.5 * (1.0 + r_inner))
            }
            Geometry::Node { x, y, .. } => Point::new(x, y),
        }
    }
}

/// Point of the inscribed disc at `angle` (clockwise from 12 o'clock) and
/// radius `rho` relative to the disc radius.
pub fn disc_point(angle: f64, rho: f64) -> Point {
    Point::new(
        DISC_CENTER.x + DISC_RADIUS * rho * angle.sin(),
        DISC_CENTER.y - DISC_RADIUS * rho * angle.cos(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Path from the committed prefix, terminator included when present.
    pub prefix: String,
    pub label: String,
    pub probability: f64,
    pub depth: usize,
    pub geometry: Geometry,
    /// Extent in belief coordinates.
    pub span: Interval,
    /// Delete-last-symbol branch.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undo: bool,
}

/// Piecewise-linear `y(x)` copied from a belief so frames can be queried
/// without holding on to it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cdf {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Cdf {
    pub fn of(belief: &BeliefState) -> Self {
        let cells = belief.cells();
        let mut xs = Vec::with_capacity(cells.len() + 1);
        let mut ys = Vec::with_capacity(cells.len() + 1);
        xs.push(0.0);
        ys.push(0.0);
        for c in cells {
            xs.push(c.hi);
            ys.push(belief.transform_y(c.hi));
        }
        Self { xs, ys }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.xs.len() < 2 {
            return x.clamp(0.0, 1.0);
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = self.xs.partition_point(|&k| k <= x).clamp(1, self.xs.len() - 1);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutFrame {
    pub kind: LayoutKind,
    pub tick: u64,
    pub regions: Vec<Region>,
    /// Scan indicator position along the selection axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<usize>,
    /// False when the tree force simulation hit its iteration cap.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub converged: bool,
    #[serde(skip)]
    pub cdf: Cdf,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl LayoutFrame {
    pub fn new(kind: LayoutKind, tick: u64, regions: Vec<Region>, cdf: Cdf) -> Self {
        Self { kind, tick, regions, indicator: None, window: None, columns: None, converged: true, cdf }
    }

    pub fn first_generation(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(|r| r.depth == 1)
    }

    /// Deepest region whose span contains `x`.
    pub fn deepest_at(&self, x: f64) -> Option<&Region> {
        self.regions
            .iter()
            .filter(|r| r.span.contains(x) || (x >= 1.0 && r.span.hi >= 1.0))
            .max_by_key(|r| r.depth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub depth: usize,
    pub columns: usize,
    pub window: f64,
    pub tree: TreeConfig,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { depth: 3, columns: 3, window: 1.0, tree: TreeConfig::default() }
    }
}

/// Nodes of a belief with probabilities, labels and transformed extents.
pub(crate) struct LaidNode {
    pub prefix: String,
    pub label: String,
    pub probability: f64,
    pub depth: usize,
    pub span: Interval,
    pub y: Interval,
    pub parent: Option<usize>,
    pub undo: bool,
}

/// Children of nodes heavier than this are emitted as regions.
pub const REGION_EXPAND_MASS: f64 = 0.01;

pub(crate) fn laid_nodes(belief: &BeliefState, tree: &CodeTree, depth: usize) -> Vec<LaidNode> {
    let alphabet = tree.model().alphabet();
    belief
        .nodes(tree, depth.max(1), REGION_EXPAND_MASS)
        .into_iter()
        .map(|n| {
            let (prefix, label, undo) = match &n.key {
                NodeKey::Undo => (String::new(), UNDO_LABEL.to_string(), true),
                NodeKey::Prefix(p) => {
                    (alphabet.decode(p), alphabet.char_of(*p.last().expect("nonempty")).to_string(), false)
                }
            };
            LaidNode {
                prefix,
                label,
                probability: n.mass,
                depth: n.depth,
                span: n.x,
                y: Interval::new(belief.transform_y(n.x.lo), belief.transform_y(n.x.hi)),
                parent: n.parent,
                undo,
            }
        })
        .collect()
}

pub(crate) fn region(n: &LaidNode, geometry: Geometry) -> Region {
    Region {
        prefix: n.prefix.clone(),
        label: n.label.clone(),
        probability: n.probability,
        depth: n.depth,
        geometry,
        span: n.span,
        undo: n.undo,
    }
}

/// Builds the frame for `kind`. `indicator` is only used by scan frames.
pub fn render(
    kind: LayoutKind,
    belief: &BeliefState,
    tree: &CodeTree,
    cfg: &LayoutConfig,
    indicator: Option<f64>,
) -> LayoutFrame {
    match kind {
        LayoutKind::Linear => linear_layout(belief, tree, cfg.depth),
        LayoutKind::Circular => circular_layout(belief, tree, cfg.depth),
        LayoutKind::Area => area_layout(belief, tree, cfg.depth),
        LayoutKind::Tree => tree_layout_from_belief(belief, tree, cfg.depth, &cfg.tree),
        LayoutKind::Folded => folded_layout(belief, tree, cfg.depth, cfg.columns),
        LayoutKind::Scan => {
            let mut f = scroll_window(belief, tree, cfg.depth, cfg.window, indicator.unwrap_or(0.0));
            f.kind = LayoutKind::Scan;
            f
        }
    }
}

/// The display point `r_t(x)` of belief coordinate `x`.
///
/// Linear frames put it on the right edge, which every rectangle touches,
/// and circular frames on the rim. Folded frames follow the serpentine.
/// Area frames place it inside the deepest region, interpolated by the
/// conditional CDF along the axis that region is split on. Tree frames use
/// the deepest visible node. Scan frames return the transformed coordinate
/// in `x` (to be compared with [`crate::geom::Metric::Circular`]).
pub fn display_position(frame: &LayoutFrame, x: f64) -> Point {
    let y = frame.cdf.eval(x);
    match frame.kind {
        LayoutKind::Linear => Point::new(1.0, y),
        LayoutKind::Circular => disc_point(std::f64::consts::TAU * y, 1.0),
        LayoutKind::Folded => linear::folded_point(y, frame.columns.unwrap_or(1)),
        LayoutKind::Scan => Point::new(y, 0.5),
        LayoutKind::Area => area::area_point(frame, x, y),
        LayoutKind::Tree => frame
            .deepest_at(x)
            .map(|r| r.geometry.centroid())
            .unwrap_or(Point::new(0.5, 0.5)),
    }
}
