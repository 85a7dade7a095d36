use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{laid_nodes, Cdf, Geometry, LayoutFrame, LayoutKind, Region};
use crate::belief::BeliefState;
use crate::coder::{CodeTree, Interval};
use crate::geom::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Nodes below this probability are hidden.
    pub hide_below: f64,
    pub repulsion: f64,
    pub spring: f64,
    pub damping: f64,
    pub dt: f64,
    pub iterations: usize,
    /// Largest node speed at which the simulation counts as settled.
    pub tolerance: f64,
    /// Disc radius is `node_scale · sqrt(p)`.
    pub node_scale: f64,
    pub spacing: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            hide_below: 0.01,
            repulsion: 0.015,
            spring: 1.0,
            damping: 0.9,
            dt: 0.1,
            iterations: 400,
            tolerance: 1e-5,
            node_scale: 0.08,
            spacing: 0.2,
        }
    }
}

/// A node of the hierarchy to lay out. Index 0 must be the root.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub probability: f64,
    pub label: String,
    pub prefix: String,
    pub span: Interval,
    pub undo: bool,
}

impl TreeNode {
    pub fn new(parent: Option<usize>, probability: f64) -> Self {
        Self {
            parent,
            probability,
            label: String::new(),
            prefix: String::new(),
            span: Interval::UNIT,
            undo: false,
        }
    }
}

/// Force-directed layout: nodes repel with inverse-square forces scaled by
/// the product of their probabilities, edges are zero-length springs, and
/// the root is pinned at the centre. Overlapping discs are pushed apart
/// once the simulation settles.
pub fn tree_layout(nodes: &[TreeNode], iterations: usize, cfg: &TreeConfig) -> LayoutFrame {
    let n = nodes.len();
    let mut depth = vec![0usize; n];
    let mut visible = vec![false; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in nodes.iter().enumerate() {
        match node.parent {
            None => visible[i] = i == 0,
            Some(p) => {
                depth[i] = depth[p] + 1;
                visible[i] = visible[p] && node.probability >= cfg.hide_below;
                if visible[i] {
                    children[p].push(i);
                }
            }
        }
    }
    let ids: Vec<usize> = (0..n).filter(|&i| visible[i]).collect();
    let mut pos = vec![Point::new(0.5, 0.5); n];
    // fan children out, away from the grandparent
    for &i in &ids {
        let heading = nodes[i].parent.map(|p| direction(pos[p], pos[i]));
        let k = children[i].len();
        for (j, &c) in children[i].iter().enumerate() {
            let frac = (j as f64 + 0.5) / k as f64;
            let angle = match heading {
                None => 2.0 * PI * frac,
                Some(h) => h + PI * (frac - 0.5),
            };
            let r = cfg.spacing * 0.6f64.powi(depth[i] as i32);
            pos[c] = pos[i] + Point::new(angle.sin(), -angle.cos()) * r;
        }
    }
    let radius: Vec<f64> = nodes.iter().map(|x| cfg.node_scale * x.probability.max(0.0).sqrt()).collect();
    let mut vel = vec![Point::default(); n];
    let mut converged = false;
    for _ in 0..iterations.max(1) {
        let mut force = vec![Point::default(); n];
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                let d = pos[i] - pos[j];
                let r2 = d.dist2(Point::default()).max(1e-8);
                let f = d * (cfg.repulsion * nodes[i].probability * nodes[j].probability / (r2 * r2.sqrt()));
                force[i] = force[i] + f;
                force[j] = force[j] - f;
            }
            if let Some(p) = nodes[i].parent {
                let f = (pos[p] - pos[i]) * cfg.spring;
                force[i] = force[i] + f;
                force[p] = force[p] - f;
            }
        }
        let mut fastest: f64 = 0.0;
        for &i in &ids[1..] {
            vel[i] = (vel[i] + force[i] * cfg.dt) * cfg.damping;
            pos[i] = pos[i] + vel[i] * cfg.dt;
            fastest = fastest.max(vel[i].dist2(Point::default()).sqrt());
        }
        if fastest < cfg.tolerance {
            converged = true;
            break;
        }
    }
    separate(&ids, &mut pos, &radius);

    let regions = ids
        .iter()
        .map(|&i| Region {
            prefix: nodes[i].prefix.clone(),
            label: nodes[i].label.clone(),
            probability: nodes[i].probability,
            depth: depth[i],
            geometry: Geometry::Node { x: pos[i].x, y: pos[i].y, radius: radius[i] },
            span: nodes[i].span,
            undo: nodes[i].undo,
        })
        .collect();
    let mut f = LayoutFrame::new(LayoutKind::Tree, 0, regions, Cdf::default());
    f.converged = converged;
    if !converged {
        log::debug!("tree layout did not settle in {iterations} iterations");
    }
    f
}

fn direction(from: Point, to: Point) -> f64 {
    let d = to - from;
    d.x.atan2(-d.y)
}

/// Pushes overlapping discs apart and keeps them inside the display. Moves
/// are accumulated per pass so the result does not depend on node order.
fn separate(ids: &[usize], pos: &mut [Point], radius: &[f64]) {
    for _ in 0..200 {
        let mut shift = vec![Point::default(); pos.len()];
        let mut overlap = false;
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                let d = pos[j] - pos[i];
                let dist = d.dist2(Point::default()).sqrt();
                let gap = radius[i] + radius[j] - dist;
                if gap > 1e-12 {
                    overlap = true;
                    let u = if dist > 1e-12 { d * (1.0 / dist) } else { Point::new(1.0, 0.0) };
                    // the root never moves, so its partner takes the whole push
                    let (si, sj) = if i == ids[0] { (0.0, 1.0) } else { (0.5, 0.5) };
                    let push = gap * 1.01;
                    shift[i] = shift[i] - u * (push * si);
                    shift[j] = shift[j] + u * (push * sj);
                }
            }
        }
        for &i in &ids[1..] {
            let p = pos[i] + shift[i];
            pos[i] = Point::new(p.x.clamp(radius[i], 1.0 - radius[i]), p.y.clamp(radius[i], 1.0 - radius[i]));
        }
        if !overlap {
            break;
        }
    }
}

/// Tree layout of a belief's nodes down to `depth`, rooted at the
/// committed prefix.
pub fn tree_layout_from_belief(belief: &BeliefState, tree: &CodeTree, depth: usize, cfg: &TreeConfig) -> LayoutFrame {
    let mut nodes = vec![TreeNode::new(None, 1.0)];
    for n in laid_nodes(belief, tree, depth) {
        nodes.push(TreeNode {
            parent: Some(n.parent.map_or(0, |p| p + 1)),
            probability: n.probability,
            label: n.label,
            prefix: n.prefix,
            span: n.span,
            undo: n.undo,
        });
    }
    let mut f = tree_layout(&nodes, cfg.iterations, cfg);
    f.tick = belief.tick();
    f.cdf = Cdf::of(belief);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node_at(f: &LayoutFrame, i: usize) -> (f64, f64, f64) {
        match f.regions[i].geometry {
            Geometry::Node { x, y, radius } => (x, y, radius),
            _ => panic!(),
        }
    }

    #[test]
    fn root_is_centred() {
        let f = tree_layout(&[TreeNode::new(None, 1.0)], 10, &TreeConfig::default());
        let (x, y, _) = node_at(&f, 0);
        assert_eq!((x, y), (0.5, 0.5));
    }

    #[test]
    fn equal_children_are_mirror_images() {
        let nodes = [TreeNode::new(None, 1.0), TreeNode::new(Some(0), 0.5), TreeNode::new(Some(0), 0.5)];
        let f = tree_layout(&nodes, 2000, &TreeConfig::default());
        let (x1, y1, _) = node_at(&f, 1);
        let (x2, y2, _) = node_at(&f, 2);
        assert!((x1 - 0.5 + (x2 - 0.5)).abs() < 1e-6);
        assert!((y1 - y2).abs() < 1e-6);
        assert!(f.converged);
    }

    #[test]
    fn heavier_child_sits_further_from_sibling() {
        let cfg = TreeConfig::default();
        let dist = |p: f64| {
            let nodes = [TreeNode::new(None, 1.0), TreeNode::new(Some(0), p), TreeNode::new(Some(0), 0.2)];
            let f = tree_layout(&nodes, 2000, &cfg);
            let (x1, y1, _) = node_at(&f, 1);
            let (x2, y2, _) = node_at(&f, 2);
            ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt()
        };
        assert!(dist(0.4) > dist(0.2));
    }

    #[test]
    fn light_nodes_are_hidden() {
        let nodes = [
            TreeNode::new(None, 1.0),
            TreeNode::new(Some(0), 0.995),
            TreeNode::new(Some(0), 0.005),
            TreeNode::new(Some(2), 0.004),
        ];
        let f = tree_layout(&nodes, 100, &TreeConfig::default());
        assert_eq!(f.regions.len(), 2);
    }

    #[test]
    fn visible_discs_do_not_overlap() {
        let mut nodes = vec![TreeNode::new(None, 1.0)];
        for i in 0..12 {
            nodes.push(TreeNode::new(Some(0), 1.0 / 12.0));
            for _ in 0..3 {
                nodes.push(TreeNode::new(Some(1 + 4 * i), 1.0 / 36.0));
            }
        }
        let f = tree_layout(&nodes, 400, &TreeConfig::default());
        for a in 0..f.regions.len() {
            for b in a + 1..f.regions.len() {
                let (x1, y1, r1) = node_at(&f, a);
                let (x2, y2, r2) = node_at(&f, b);
                let d = ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
                assert!(d >= r1 + r2 - 1e-9, "{a} {b} {d} {}", r1 + r2);
            }
        }
    }
}
