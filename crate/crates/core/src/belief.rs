//! The evolving belief `p(x, t)` over the unit interval.
//!
//! The belief is a piecewise-constant density whose cells are aligned with
//! code-tree nodes: every first-generation node is a cell, and nodes holding
//! more than `expand_mass` are split into their children down to
//! `max_depth`. A uniform density reproduces the language-model prior,
//! since interval lengths already equal prior probabilities.
//!
//! Once something has been committed, the leftmost `undo_mass` of the
//! interval is a delete-last-symbol branch and the committed prefix's code
//! space occupies the rest: `x = u + (1 - u) · code`.

use serde::{Deserialize, Serialize};

use crate::coder::{CodeTree, Interval};
use crate::error::{Error, Result};
use crate::geom::{Metric, Point};
use crate::lang_model::Symbol;

pub const DENSITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefConfig {
    pub floor: f64,
    /// Nodes holding more than this mass are split into their children.
    pub expand_mass: f64,
    pub max_depth: usize,
    /// Longest Euler step, seconds.
    pub dt_max: f64,
    /// Mass given to the delete branch after a commit.
    pub undo_mass: f64,
    /// Subtree mass at which a first-generation branch is committed.
    pub threshold: f64,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self {
            floor: DENSITY_FLOOR,
            expand_mass: 0.05,
            max_depth: 4,
            dt_max: 1.0 / 30.0,
            undo_mass: 0.02,
            threshold: 0.99,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

impl Cell {
    #[inline]
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mass(&self) -> f64 {
        self.density * self.len()
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Parameters of the Gaussian update kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub center: Point,
    pub variance: f64,
}

impl KernelParams {
    pub fn new(center: Point, variance: f64) -> Self {
        Self { center, variance }
    }
}

/// A first-generation branch: either a symbol or the delete branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Undo,
    Symbol(Symbol),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeKey {
    Undo,
    Prefix(Vec<Symbol>),
}

impl NodeKey {
    pub fn depth(&self) -> usize {
        match self {
            NodeKey::Undo => 1,
            NodeKey::Prefix(p) => p.len(),
        }
    }

    pub fn first(&self) -> Option<Selection> {
        match self {
            NodeKey::Undo => Some(Selection::Undo),
            NodeKey::Prefix(p) => p.first().map(|&s| Selection::Symbol(s)),
        }
    }
}

/// A code-tree node as seen through the belief.
#[derive(Clone, Debug)]
pub struct Node {
    pub key: NodeKey,
    pub x: Interval,
    pub mass: f64,
    pub depth: usize,
    pub parent: Option<usize>,
    pub leaf: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Mass added by the Euler increment before flooring.
    pub mass_change: f64,
    pub floored_cells: usize,
    /// Set when the kernel produced non-finite values and the step was skipped.
    pub skipped: bool,
}

/// Compact per-tick record: first-generation masses in display order and
/// the cumulative mass at each first-generation boundary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub masses: Vec<f64>,
    pub knots: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    cells: Vec<Cell>,
    // cumulative mass at each cell's lower edge; one extra entry for the end
    cum: Vec<f64>,
    undo_width: f64,
    tick: u64,
}

impl BeliefState {
    fn build(cells: Vec<Cell>, undo_width: f64, tick: u64) -> Self {
        let mut cum = Vec::with_capacity(cells.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for c in &cells {
            acc += c.mass();
            cum.push(acc);
        }
        Self { cells, cum, undo_width, tick }
    }

    /// A belief from explicit cells. Cells must tile `[0, 1)` in order with
    /// positive densities; the result is normalized.
    pub fn from_cells(cells: Vec<Cell>) -> Result<Self> {
        let mut edge = 0.0;
        for c in &cells {
            if c.lo != edge || !(c.hi > c.lo) || !(c.density > 0.0 && c.density.is_finite()) {
                return Err(Error::Config(format!("cells must tile [0,1) with positive density: {c:?}")));
            }
            edge = c.hi;
        }
        if edge != 1.0 {
            return Err(Error::Config("cells must end at 1".into()));
        }
        let mut cells = cells;
        floor_and_normalize(&mut cells, 0.0);
        Ok(Self::build(cells, 0.0, 0))
    }

    pub fn uniform() -> Self {
        Self::build(vec![Cell { lo: 0.0, hi: 1.0, density: 1.0 }], 0.0, 0)
    }

    /// Uniform density (the language-model prior) over the current tree,
    /// with a delete branch whenever there is something to delete.
    pub fn prior(tree: &CodeTree, cfg: &BeliefConfig) -> Self {
        let undo_width = if tree.committed().is_empty() { 0.0 } else { cfg.undo_mass };
        let mut cells = Vec::new();
        if undo_width > 0.0 {
            cells.push(Cell { lo: 0.0, hi: undo_width, density: 1.0 });
        }
        cells.push(Cell { lo: undo_width, hi: 1.0, density: 1.0 });
        Self::build(cells, undo_width, 0).restructure(tree, cfg)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn undo_width(&self) -> f64 {
        self.undo_width
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(Cell::mass).sum()
    }

    /// Maps a code-space coordinate of the committed prefix into belief space.
    pub fn code_to_x(&self, code: f64) -> f64 {
        if code >= 1.0 {
            1.0
        } else {
            self.undo_width + (1.0 - self.undo_width) * code
        }
    }

    pub fn x_to_code(&self, x: f64) -> f64 {
        (x - self.undo_width) / (1.0 - self.undo_width)
    }

    pub fn code_interval_to_x(&self, iv: Interval) -> Interval {
        Interval { lo: self.code_to_x(iv.lo), hi: self.code_to_x(iv.hi) }
    }

    pub fn undo_interval(&self) -> Option<Interval> {
        (self.undo_width > 0.0).then(|| Interval::new(0.0, self.undo_width))
    }

    fn cell_index(&self, x: f64) -> usize {
        self.cells.partition_point(|c| c.lo <= x).saturating_sub(1)
    }

    /// `y(x) = ∫₀ˣ p(u) du`.
    pub fn transform_y(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = self.cell_index(x);
        let c = &self.cells[i];
        (self.cum[i] + (x - c.lo) * c.density).min(1.0)
    }

    /// Inverse of [`BeliefState::transform_y`].
    pub fn inverse_y(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        let i = self.cum[1..].partition_point(|&m| m <= y).min(self.cells.len() - 1);
        let c = &self.cells[i];
        (c.lo + (y - self.cum[i]) / c.density).clamp(c.lo, c.hi)
    }

    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        (self.transform_y(b) - self.transform_y(a)).max(0.0)
    }

    pub fn mass_of(&self, iv: Interval) -> f64 {
        self.mass_between(iv.lo, iv.hi)
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.cells[self.cell_index(x)].density
    }

    /// Code-tree nodes in preorder. A node is expanded when it is shallower
    /// than `max_depth`, holds more than `expand_mass`, and is not terminated.
    pub fn nodes(&self, tree: &CodeTree, max_depth: usize, expand_mass: f64) -> Vec<Node> {
        let mut out = Vec::new();
        if let Some(iv) = self.undo_interval() {
            out.push(Node {
                key: NodeKey::Undo,
                x: iv,
                mass: self.mass_of(iv),
                depth: 1,
                parent: None,
                leaf: true,
            });
        }
        if tree.is_closed() {
            return out;
        }
        self.expand(tree, &[], Interval::UNIT, None, max_depth, expand_mass, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn expand(
        &self,
        tree: &CodeTree,
        prefix: &[Symbol],
        code: Interval,
        parent: Option<usize>,
        max_depth: usize,
        expand_mass: f64,
        out: &mut Vec<Node>,
    ) {
        let mut path = prefix.to_vec();
        for (sym, civ) in tree.children_within(prefix, code) {
            let x = self.code_interval_to_x(civ);
            if x.hi <= x.lo {
                continue;
            }
            path.push(sym);
            let mass = self.mass_of(x);
            let depth = path.len();
            let expand = depth < max_depth && mass > expand_mass && !sym.is_terminator();
            let idx = out.len();
            out.push(Node { key: NodeKey::Prefix(path.clone()), x, mass, depth, parent, leaf: !expand });
            if expand {
                self.expand(tree, &path, civ, Some(idx), max_depth, expand_mass, out);
            }
            path.pop();
        }
    }

    /// Re-grids the belief onto the leaves of the adaptive node structure,
    /// preserving the mass of every leaf.
    pub fn restructure(&self, tree: &CodeTree, cfg: &BeliefConfig) -> Self {
        if tree.is_closed() {
            return self.clone();
        }
        let mut cells: Vec<Cell> = self
            .nodes(tree, cfg.max_depth, cfg.expand_mass)
            .into_iter()
            .filter(|n| n.leaf)
            .map(|n| Cell { lo: n.x.lo, hi: n.x.hi, density: n.mass / n.x.len() })
            .collect();
        floor_and_normalize(&mut cells, cfg.floor);
        Self::build(cells, self.undo_width, self.tick)
    }

    /// Right-hand side `K(x)/∫K − 1` of the update equation, evaluated at
    /// cell midpoints. `None` when the kernel is not finite.
    pub fn update_rhs(
        &self,
        kernel: &KernelParams,
        position: impl Fn(f64) -> Point,
        metric: Metric,
    ) -> Option<Vec<f64>> {
        if !(kernel.variance > 0.0) || kernel.variance.is_nan() || !kernel.center.is_finite() {
            return None;
        }
        let exps: Vec<f64> = self
            .cells
            .iter()
            .map(|c| -metric.dist2(position(c.mid()), kernel.center) / (2.0 * kernel.variance))
            .collect();
        if exps.iter().any(|e| e.is_nan()) {
            return None;
        }
        // K/∫K is invariant to a common factor; shifting by the max avoids underflow
        let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return None;
        }
        let k: Vec<f64> = exps.iter().map(|e| (e - top).exp()).collect();
        let len_total: f64 = self.cells.iter().map(Cell::len).sum();
        let weighted: f64 = self.cells.iter().zip(&k).map(|(c, k)| k * c.len()).sum();
        let z = weighted / len_total;
        if !(z > 0.0 && z.is_finite()) {
            return None;
        }
        Some(k.iter().map(|k| k / z - 1.0).collect())
    }

    /// One explicit Euler step of the update equation followed by flooring
    /// and renormalization.
    pub fn step(
        &self,
        kernel: &KernelParams,
        position: impl Fn(f64) -> Point,
        metric: Metric,
        dt: f64,
        cfg: &BeliefConfig,
    ) -> Result<(Self, StepReport)> {
        if !(dt > 0.0 && dt <= cfg.dt_max * (1.0 + 1e-12)) {
            return Err(Error::Config(format!("dt {dt} outside (0, {}]", cfg.dt_max)));
        }
        let mut report = StepReport::default();
        let Some(rhs) = self.update_rhs(kernel, position, metric) else {
            log::warn!("non-finite update kernel {kernel:?}; step skipped");
            report.skipped = true;
            let mut next = self.clone();
            next.tick += 1;
            return Ok((next, report));
        };
        if rhs.iter().all(|&r| r == 0.0) {
            let mut next = self.clone();
            next.tick += 1;
            return Ok((next, report));
        }
        let mut cells = self.cells.clone();
        for (c, r) in cells.iter_mut().zip(&rhs) {
            let inc = dt * r;
            report.mass_change += inc * c.len();
            c.density += inc;
        }
        report.floored_cells = floor_and_normalize(&mut cells, cfg.floor);
        Ok((Self::build(cells, self.undo_width, self.tick + 1), report))
    }

    /// First-generation branches in display order with their mass.
    pub fn first_generation(&self, tree: &CodeTree) -> Vec<(Selection, Interval, f64)> {
        let mut out = Vec::new();
        if let Some(iv) = self.undo_interval() {
            out.push((Selection::Undo, iv, self.mass_of(iv)));
        }
        if tree.is_closed() {
            return out;
        }
        for (sym, civ) in tree.children_within(&[], Interval::UNIT) {
            let x = self.code_interval_to_x(civ);
            out.push((Selection::Symbol(sym), x, self.mass_of(x)));
        }
        out
    }

    /// The branch whose mass reaches `threshold`, if any.
    pub fn commit_check(&self, tree: &CodeTree, threshold: f64) -> Option<Selection> {
        self.first_generation(tree)
            .into_iter()
            .find(|&(_, _, m)| m >= threshold)
            .map(|(s, _, _)| s)
    }

    /// Commits `sel`, updating `tree` in place and returning the belief in
    /// the new coordinates. A symbol commit conditions on its subtree and
    /// mixes in the delete branch; a delete restores the parent's prior.
    pub fn apply_commit(&self, tree: &mut CodeTree, sel: Selection, cfg: &BeliefConfig) -> Result<Self> {
        match sel {
            Selection::Undo => {
                if self.undo_width <= 0.0 {
                    return Err(Error::NothingToUndo);
                }
                tree.uncommit()?;
                let mut b = Self::prior(tree, cfg);
                b.tick = self.tick;
                Ok(b)
            }
            Selection::Symbol(sym) => {
                let code = tree.rescale_after_commit(sym)?;
                let x = self.code_interval_to_x(code);
                if sym.is_terminator() {
                    return Ok(self.clone());
                }
                let m = self.mass_of(x);
                let u = cfg.undo_mass;
                let mut cells = Vec::new();
                if u > 0.0 {
                    cells.push(Cell { lo: 0.0, hi: u, density: 1.0 });
                }
                // conditioned density in the child's code space, then squeezed into [u, 1)
                let scale = (1.0 - u) * x.len() / m / (1.0 - u);
                let map = |old: f64| {
                    let code = ((old - x.lo) / x.len()).clamp(0.0, 1.0);
                    if code >= 1.0 { 1.0 } else { u + (1.0 - u) * code }
                };
                for c in &self.cells {
                    if let Some(piece) = Interval::new(c.lo, c.hi).intersect(&x) {
                        let (lo, hi) = (map(piece.lo), map(piece.hi));
                        if hi > lo {
                            cells.push(Cell { lo, hi, density: c.density * scale });
                        }
                    }
                }
                if let Some(first) = cells.get_mut(usize::from(u > 0.0)) {
                    first.lo = u;
                }
                if let Some(last) = cells.last_mut() {
                    last.hi = 1.0;
                }
                floor_and_normalize(&mut cells, cfg.floor);
                Ok(Self::build(cells, u, self.tick).restructure(tree, cfg))
            }
        }
    }

    /// Multiplies the belief by a likelihood that is constant on each piece
    /// of a partition of `[0, 1)` given by its `boundaries`
    /// (`0 = b₀ < b₁ < … < b_K = 1`), then renormalizes.
    pub fn apply_likelihood(&self, boundaries: &[f64], likelihood: &[f64], cfg: &BeliefConfig) -> Result<Self> {
        if boundaries.len() != likelihood.len() + 1
            || boundaries.first() != Some(&0.0)
            || boundaries.last() != Some(&1.0)
            || boundaries.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::Config("partition must tile [0,1) in increasing order".into()));
        }
        if likelihood.iter().any(|&l| !(l >= 0.0 && l.is_finite())) || likelihood.iter().all(|&l| l == 0.0) {
            return Err(Error::Config("likelihood must be nonnegative and not all zero".into()));
        }
        let mut cells = Vec::with_capacity(self.cells.len() + boundaries.len());
        let mut k = 0;
        for c in &self.cells {
            let mut lo = c.lo;
            while lo < c.hi {
                while boundaries[k + 1] <= lo {
                    k += 1;
                }
                let hi = c.hi.min(boundaries[k + 1]);
                cells.push(Cell { lo, hi, density: c.density * likelihood[k] });
                lo = hi;
            }
        }
        floor_and_normalize(&mut cells, cfg.floor);
        Ok(Self::build(cells, self.undo_width, self.tick))
    }

    pub fn summary(&self, tree: &CodeTree) -> BeliefSummary {
        let gen = self.first_generation(tree);
        let knots = gen.iter().map(|(_, iv, _)| self.transform_y(iv.hi)).collect();
        BeliefSummary { masses: gen.into_iter().map(|(_, _, m)| m).collect(), knots }
    }
}

/// Clamps densities at `floor` and rescales the remaining cells so the
/// total mass is one. Returns how many cells sit at the floor.
pub fn floor_and_normalize(cells: &mut [Cell], floor: f64) -> usize {
    let mut pinned = vec![false; cells.len()];
    for (c, p) in cells.iter_mut().zip(pinned.iter_mut()) {
        if !(c.density > floor) {
            c.density = floor;
            *p = floor > 0.0;
        }
    }
    for _ in 0..64 {
        let (mut fixed, mut free) = (0.0, 0.0);
        for (c, &p) in cells.iter().zip(&pinned) {
            if p {
                fixed += c.mass();
            } else {
                free += c.mass();
            }
        }
        if !(free > 0.0) {
            break;
        }
        let scale = (1.0 - fixed) / free;
        let mut changed = false;
        for (c, p) in cells.iter_mut().zip(pinned.iter_mut()) {
            if !*p {
                c.density *= scale;
                if c.density < floor {
                    c.density = floor;
                    *p = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    pinned.iter().filter(|&&p| p).count()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lang_model::{Alphabet, MemorylessModel};

    fn tree() -> CodeTree {
        let a = Alphabet::new(['a', 'b'], '$').unwrap();
        CodeTree::new(Arc::new(MemorylessModel::new(a, vec![0.2, 0.5, 0.3]).unwrap()))
    }

    fn two_cells(d0: f64, d1: f64) -> BeliefState {
        BeliefState::from_cells(vec![
            Cell { lo: 0.0, hi: 0.5, density: d0 },
            Cell { lo: 0.5, hi: 1.0, density: d1 },
        ])
        .unwrap()
    }

    #[test]
    fn flat_kernel_is_a_fixed_point() {
        let b = two_cells(1.5, 0.5);
        let k = KernelParams::new(Point::new(0.3, 0.0), f64::INFINITY);
        let (next, rep) = b.step(&k, |x| Point::new(x, 0.0), Metric::Euclidean, 1.0 / 30.0, &BeliefConfig::default()).unwrap();
        assert_eq!(next.cells(), b.cells());
        assert_eq!(rep.mass_change, 0.0);
        let huge = KernelParams::new(Point::new(0.3, 0.0), 1e300);
        let (next, _) = b.step(&huge, |x| Point::new(x, 0.0), Metric::Euclidean, 1.0 / 30.0, &BeliefConfig::default()).unwrap();
        assert_eq!(next.cells(), b.cells());
    }

    #[test]
    fn two_cell_rhs_by_hand() {
        let b = two_cells(1.0, 1.0);
        let k = KernelParams::new(Point::new(0.25, 0.0), 0.0625);
        let rhs = b.update_rhs(&k, |x| Point::new(x, 0.0), Metric::Euclidean).unwrap();
        let e2 = (-2.0f64).exp();
        let z = 0.5 * (1.0 + e2);
        assert!((rhs[0] - (1.0 / z - 1.0)).abs() < 1e-15);
        assert!((rhs[1] - (e2 / z - 1.0)).abs() < 1e-15);
        assert!((rhs[0] - 0.7616).abs() < 1e-4);
        assert!((rhs[0] + rhs[1]).abs() < 1e-15);
    }

    #[test]
    fn dt_above_max_is_rejected() {
        let b = BeliefState::uniform();
        let k = KernelParams::new(Point::new(0.5, 0.5), 0.01);
        assert!(b.step(&k, |x| Point::new(x, 0.0), Metric::Euclidean, 0.1, &BeliefConfig::default()).is_err());
    }

    #[test]
    fn nan_kernel_is_skipped() {
        let b = two_cells(1.2, 0.8);
        let k = KernelParams::new(Point::new(f64::NAN, 0.0), 0.01);
        let (next, rep) = b.step(&k, |x| Point::new(x, 0.0), Metric::Euclidean, 0.01, &BeliefConfig::default()).unwrap();
        assert!(rep.skipped);
        assert_eq!(next.cells(), b.cells());
    }

    #[test]
    fn transform_examples() {
        let u = BeliefState::uniform();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert!((u.transform_y(x) - x).abs() < 1e-15);
        }
        let b = two_cells(1.5, 0.5);
        assert!((b.transform_y(0.25) - 0.375).abs() < 1e-15);
        assert!((b.transform_y(0.5) - 0.75).abs() < 1e-15);
        assert_eq!(b.transform_y(0.0), 0.0);
        assert_eq!(b.transform_y(1.0), 1.0);
        for i in 0..100 {
            let x = i as f64 / 100.0;
            assert!((b.inverse_y(b.transform_y(x)) - x).abs() < 1e-9);
        }
    }

    #[test]
    fn commit_check_examples() {
        let t = tree();
        let masses = [0.001, 0.995, 0.004];
        let cells = vec![
            Cell { lo: 0.0, hi: 0.2, density: masses[0] / 0.2 },
            Cell { lo: 0.2, hi: 0.7, density: masses[1] / 0.5 },
            Cell { lo: 0.7, hi: 1.0, density: masses[2] / 0.3 },
        ];
        let b = BeliefState::from_cells(cells).unwrap();
        assert_eq!(b.commit_check(&t, 0.99), Some(Selection::Symbol(Symbol(1))));
        assert_eq!(BeliefState::uniform().commit_check(&t, 0.99), None);
        let cells = vec![
            Cell { lo: 0.0, hi: 0.2, density: 0.006 / 0.2 },
            Cell { lo: 0.2, hi: 0.7, density: 0.989 / 0.5 },
            Cell { lo: 0.7, hi: 1.0, density: 0.005 / 0.3 },
        ];
        let b = BeliefState::from_cells(cells).unwrap();
        assert_eq!(b.commit_check(&t, 0.99), None);
    }

    #[test]
    fn commit_without_undo_is_conditioning() {
        let cfg = BeliefConfig { undo_mass: 0.0, ..BeliefConfig::default() };
        let mut t = tree();
        let b = BeliefState::from_cells(vec![
            Cell { lo: 0.0, hi: 0.2, density: 0.5 },
            Cell { lo: 0.2, hi: 0.3, density: 3.0 },
            Cell { lo: 0.3, hi: 0.7, density: 1.0 },
            Cell { lo: 0.7, hi: 1.0, density: 1.0 },
        ])
        .unwrap();
        let next = b.apply_commit(&mut t, Selection::Symbol(Symbol(1)), &cfg).unwrap();
        assert!((next.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(next.undo_width(), 0.0);
        // old "a·τ" = [0.2,0.3) held 0.3 of the 0.7 inside "a"; it is now [0,0.2)
        assert!((next.transform_y(0.2) - 0.3 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn commit_mixes_in_undo_branch() {
        let cfg = BeliefConfig::default();
        let mut t = tree();
        let b = BeliefState::prior(&t, &cfg);
        let next = b.apply_commit(&mut t, Selection::Symbol(Symbol(2)), &cfg).unwrap();
        let gen = next.first_generation(&t);
        assert_eq!(gen[0].0, Selection::Undo);
        assert!((gen[0].2 - 0.02).abs() < 1e-12);
        // the rest keeps the prior proportions: 0.98 · (0.2, 0.5, 0.3)
        for (g, p) in gen[1..].iter().zip([0.2, 0.5, 0.3]) {
            assert!((g.2 - 0.98 * p).abs() < 1e-12);
        }
    }

    #[test]
    fn delete_then_reenter_restores_tree() {
        let cfg = BeliefConfig::default();
        let mut t = tree();
        let b = BeliefState::prior(&t, &cfg);
        let b = b.apply_commit(&mut t, Selection::Symbol(Symbol(1)), &cfg).unwrap();
        let b1 = b.apply_commit(&mut t, Selection::Symbol(Symbol(2)), &cfg).unwrap();
        let snapshot = (t.committed().to_vec(), t.is_closed(), t.children(&[]).unwrap());
        let b2 = b1.apply_commit(&mut t, Selection::Undo, &cfg).unwrap();
        assert_eq!(t.committed(), &[Symbol(1)]);
        let _ = b2.apply_commit(&mut t, Selection::Symbol(Symbol(2)), &cfg).unwrap();
        assert_eq!((t.committed().to_vec(), t.is_closed(), t.children(&[]).unwrap()), snapshot);
    }

    #[test]
    fn undo_without_history_errors() {
        let cfg = BeliefConfig::default();
        let mut t = tree();
        let b = BeliefState::prior(&t, &cfg);
        assert!(matches!(b.apply_commit(&mut t, Selection::Undo, &cfg), Err(Error::NothingToUndo)));
    }

    #[test]
    fn restructure_expands_heavy_nodes() {
        let cfg = BeliefConfig::default();
        let t = tree();
        let b = BeliefState::prior(&t, &cfg);
        let depths: Vec<usize> = b.nodes(&t, cfg.max_depth, cfg.expand_mass).iter().map(|n| n.depth).collect();
        assert_eq!(*depths.iter().max().unwrap(), 4);
        for w in b.cells().windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        assert_eq!(b.cells().last().unwrap().hi, 1.0);
        assert!((b.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_update() {
        let b = BeliefState::uniform();
        let cfg = BeliefConfig::default();
        let post = b.apply_likelihood(&[0.0, 0.5, 1.0], &[0.9, 0.1], &cfg).unwrap();
        assert!((post.mass_between(0.0, 0.5) - 0.9).abs() < 1e-12);
        assert!(b.apply_likelihood(&[0.0, 0.6, 0.5, 1.0], &[1.0, 1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn floor_holds_after_strong_step() {
        let cfg = BeliefConfig::default();
        let t = tree();
        let mut b = BeliefState::prior(&t, &cfg);
        let k = KernelParams::new(Point::new(0.9, 0.0), 1e-4);
        for _ in 0..90 {
            b = b.step(&k, |x| Point::new(x, 0.0), Metric::Euclidean, cfg.dt_max, &cfg).unwrap().0;
            b = b.restructure(&t, &cfg);
            assert!(b.cells().iter().all(|c| c.density >= cfg.floor));
            assert!((b.total_mass() - 1.0).abs() < 1e-12);
        }
        assert!(b.mass_between(0.7, 1.0) > 0.99);
    }
}
