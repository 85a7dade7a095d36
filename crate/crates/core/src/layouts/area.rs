use super::{laid_nodes, region, Cdf, Geometry, LayoutFrame, LayoutKind, Region};
use crate::belief::BeliefState;
use crate::coder::CodeTree;
use crate::geom::Point;

/// Children of a region at depth `d` are split along `y` when `d` is even
/// and along `x` when it is odd.
fn splits_vertically(depth: usize) -> bool {
    depth.is_multiple_of(2)
}

/// Slice-and-dice treemap of a single belief: first-generation inputs are
/// full-width rows, their children split each row into columns, and so on.
/// Every region's area equals its probability.
pub fn area_layout(belief: &BeliefState, tree: &CodeTree, depth: usize) -> LayoutFrame {
    let nodes = laid_nodes(belief, tree, depth);
    let mut rects: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(nodes.len());
    let mut regions = Vec::with_capacity(nodes.len());
    for n in &nodes {
        let (px, py, pw, ph, p_lo, p_len) = match n.parent {
            None => (0.0, 0.0, 1.0, 1.0, 0.0, 1.0),
            Some(i) => {
                let (x, y, w, h) = rects[i];
                (x, y, w, h, nodes[i].y.lo, nodes[i].y.len())
            }
        };
        let t0 = (n.y.lo - p_lo) / p_len;
        let t1 = (n.y.hi - p_lo) / p_len;
        let r = if splits_vertically(n.depth - 1) {
            (px, py + t0 * ph, pw, (t1 - t0) * ph)
        } else {
            (px + t0 * pw, py, (t1 - t0) * pw, ph)
        };
        rects.push(r);
        regions.push(region(n, Geometry::Rect { x: r.0, y: r.1, w: r.2, h: r.3 }));
    }
    LayoutFrame::new(LayoutKind::Area, belief.tick(), regions, Cdf::of(belief))
}

pub(crate) fn area_point(frame: &LayoutFrame, x: f64, y: f64) -> Point {
    let Some(r) = frame.deepest_at(x) else {
        return Point::new(0.5, y);
    };
    let Geometry::Rect { x: rx, y: ry, w, h } = r.geometry else {
        return r.geometry.centroid();
    };
    let (lo, hi) = (frame.cdf.eval(r.span.lo), frame.cdf.eval(r.span.hi));
    let t = if hi > lo { ((y - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    if splits_vertically(r.depth) {
        Point::new(rx + 0.5 * w, ry + t * h)
    } else {
        Point::new(rx + t * w, ry + 0.5 * h)
    }
}

/// Pair entry: two independent beliefs pick the row and the column, so the
/// pair `(i, j)` occupies `[X_i] × [Y_j]` with area `p_x(i)·p_y(j)`.
pub fn prop_area_pair(
    belief_x: &BeliefState,
    tree_x: &CodeTree,
    belief_y: &BeliefState,
    tree_y: &CodeTree,
) -> LayoutFrame {
    let xs = laid_nodes(belief_x, tree_x, 1);
    let ys = laid_nodes(belief_y, tree_y, 1);
    let mut regions: Vec<Region> = Vec::with_capacity(xs.len() * ys.len());
    for nx in &xs {
        for ny in &ys {
            let mut r = region(
                nx,
                Geometry::Rect { x: nx.y.lo, y: ny.y.lo, w: nx.y.len(), h: ny.y.len() },
            );
            r.prefix = format!("{}{}", nx.prefix, ny.prefix);
            r.label = format!("{}{}", nx.label, ny.label);
            r.probability = nx.probability * ny.probability;
            r.undo = nx.undo || ny.undo;
            regions.push(r);
        }
    }
    LayoutFrame::new(LayoutKind::Area, belief_x.tick(), regions, Cdf::of(belief_x))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::belief::BeliefConfig;
    use crate::lang_model::{Alphabet, MemorylessModel};

    fn tree(probs: Vec<f64>) -> CodeTree {
        let a = Alphabet::new(['a', 'b', 'c'][..probs.len() - 1].iter().copied(), '$').unwrap();
        CodeTree::new(Arc::new(MemorylessModel::new(a, probs).unwrap()))
    }

    #[test]
    fn pair_area_is_product() {
        let tx = tree(vec![0.5, 0.5]);
        let ty = tree(vec![0.6, 0.4]);
        let cfg = BeliefConfig::default();
        let f = prop_area_pair(&BeliefState::prior(&tx, &cfg), &tx, &BeliefState::prior(&ty, &cfg), &ty);
        let r = f.regions.iter().find(|r| r.prefix == "$a").unwrap();
        assert!((r.geometry.area() - 0.2).abs() < 1e-12);
        assert!((r.probability - 0.2).abs() < 1e-12);
    }

    #[test]
    fn uniform_two_by_two_is_quarters() {
        let t = tree(vec![0.5, 0.5]);
        let b = BeliefState::prior(&t, &BeliefConfig::default());
        let f = prop_area_pair(&b, &t, &b, &t);
        assert_eq!(f.regions.len(), 4);
        for r in &f.regions {
            let Geometry::Rect { w, h, .. } = r.geometry else { panic!() };
            assert!((w - 0.5).abs() < 1e-12 && (h - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn treemap_area_equals_probability() {
        let t = tree(vec![0.1, 0.2, 0.3, 0.4]);
        let b = BeliefState::prior(&t, &BeliefConfig::default());
        let f = area_layout(&b, &t, 3);
        assert!(f.regions.iter().any(|r| r.depth == 3));
        for r in &f.regions {
            assert!((r.geometry.area() - r.probability).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn area_point_lies_in_its_region() {
        let t = tree(vec![0.1, 0.2, 0.3, 0.4]);
        let b = BeliefState::prior(&t, &BeliefConfig::default());
        let f = area_layout(&b, &t, 2);
        for i in 0..200 {
            let x = (i as f64 + 0.5) / 200.0;
            let p = super::super::display_position(&f, x);
            let r = f.deepest_at(x).unwrap();
            let Geometry::Rect { x: rx, y: ry, w, h } = r.geometry else { panic!() };
            assert!(p.x >= rx - 1e-12 && p.x <= rx + w + 1e-12 && p.y >= ry - 1e-12 && p.y <= ry + h + 1e-12);
        }
    }
}
