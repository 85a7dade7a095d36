use super::{laid_nodes, region, Cdf, Geometry, LayoutFrame, LayoutKind, Region};
use crate::belief::BeliefState;
use crate::coder::CodeTree;
use crate::geom::Point;

/// Right-anchored squares: an input of probability `p` gets a `p × p`
/// rectangle whose vertical extent is its transformed interval.
pub fn linear_layout(belief: &BeliefState, tree: &CodeTree, depth: usize) -> LayoutFrame {
    let regions = laid_nodes(belief, tree, depth)
        .iter()
        .map(|n| {
            let p = n.y.len();
            region(n, Geometry::Rect { x: 1.0 - p, y: n.y.lo, w: p, h: p })
        })
        .collect();
    LayoutFrame::new(LayoutKind::Linear, belief.tick(), regions, Cdf::of(belief))
}

/// The linear layout cut into `columns` serpentine columns. A region that
/// crosses a fold yields one region per piece, each carrying the
/// probability shown in that piece.
pub fn folded_layout(belief: &BeliefState, tree: &CodeTree, depth: usize, columns: usize) -> LayoutFrame {
    let c = columns.max(1);
    let cf = c as f64;
    let mut regions = Vec::new();
    for n in laid_nodes(belief, tree, depth) {
        let p = n.y.len();
        let w = (p * cf).min(1.0 / cf);
        let first = ((n.y.lo * cf).floor() as usize).min(c - 1);
        for k in first..c {
            let v0 = (n.y.lo * cf - k as f64).max(0.0);
            let v1 = (n.y.hi * cf - k as f64).min(1.0);
            if v1 <= v0 {
                break;
            }
            let (top, bottom) = if k % 2 == 0 { (v0, v1) } else { (1.0 - v1, 1.0 - v0) };
            let mut r = region(&n, Geometry::Rect { x: (k + 1) as f64 / cf - w, y: top, w, h: bottom - top });
            r.probability = (v1 - v0) / cf;
            regions.push(r);
        }
    }
    let mut f = LayoutFrame::new(LayoutKind::Folded, belief.tick(), regions, Cdf::of(belief));
    f.columns = Some(c);
    f
}

pub(crate) fn folded_point(y: f64, columns: usize) -> Point {
    let c = columns.max(1);
    let cf = c as f64;
    let k = ((y * cf).floor() as usize).min(c - 1);
    let v = y * cf - k as f64;
    let v = if k.is_multiple_of(2) { v } else { 1.0 - v };
    Point::new((k + 1) as f64 / cf, v)
}

/// Window of width `window` along the selection axis, centred on the
/// indicator, which stays at the middle of the display while the content
/// scrolls past it. Regions are clipped to the window and split where the
/// axis wraps; pieces carry the probability they show.
pub fn scroll_window(
    belief: &BeliefState,
    tree: &CodeTree,
    depth: usize,
    window: f64,
    indicator: f64,
) -> LayoutFrame {
    let w = if window > 0.0 && window <= 1.0 { window } else { 1.0 };
    let start = indicator - 0.5 * w;
    let mut regions: Vec<Region> = Vec::new();
    for n in laid_nodes(belief, tree, depth) {
        let p = n.y.len();
        let width = (p / w).min(1.0);
        let a = (n.y.lo - start).rem_euclid(1.0);
        let pieces = if a + p > 1.0 { [(a, 1.0), (0.0, a + p - 1.0)] } else { [(a, a + p), (0.0, 0.0)] };
        for (lo, hi) in pieces {
            let hi = hi.min(w);
            if hi <= lo {
                continue;
            }
            let mut r = region(&n, Geometry::Rect { x: 1.0 - width, y: lo / w, w: width, h: (hi - lo) / w });
            r.probability = hi - lo;
            regions.push(r);
        }
    }
    let mut f = LayoutFrame::new(LayoutKind::Linear, belief.tick(), regions, Cdf::of(belief));
    f.indicator = Some(indicator.rem_euclid(1.0));
    f.window = Some(w);
    f
}
