use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{laid_nodes, region, Cdf, Geometry, LayoutFrame, LayoutKind};
use crate::belief::BeliefState;
use crate::coder::CodeTree;

/// `r(p) = c0 + sqrt(c1 + c2·p)`, the radial thickness of a sector of
/// probability `p`, chosen so that `r(0) = 0`, `r(1) = 1` and
/// `r'(0) = 2π`. Near zero the sector is then as deep as it is wide.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CircularCoefficients {
    /// With `u = sqrt(c1)`: `r(0) = 0` gives `c0 = -u`, the slope condition
    /// gives `c2 = 4πu`, and `r(1) = 1` then reduces to `1 + 2u = 4πu`.
    pub fn derive() -> Self {
        let u = 1.0 / (4.0 * PI - 2.0);
        Self { c0: -u, c1: u * u, c2: 4.0 * PI * u }
    }

    pub fn radius(&self, p: f64) -> f64 {
        self.c0 + (self.c1 + self.c2 * p).sqrt()
    }
}

pub fn circular_radius(p: f64) -> f64 {
    CircularCoefficients::derive().radius(p)
}

/// Sectors around the rim: angle `2πp`, thickness `r(p)` measured inwards
/// from the rim. Children nest inside their parent's angular range.
pub fn circular_layout(belief: &BeliefState, tree: &CodeTree, depth: usize) -> LayoutFrame {
    let coef = CircularCoefficients::derive();
    let regions = laid_nodes(belief, tree, depth)
        .iter()
        .map(|n| {
            let r = coef.radius(n.y.len()).clamp(0.0, 1.0);
            region(
                n,
                Geometry::Sector { angle0: 2.0 * PI * n.y.lo, angle1: 2.0 * PI * n.y.hi, r_inner: 1.0 - r },
            )
        })
        .collect();
    LayoutFrame::new(LayoutKind::Circular, belief.tick(), regions, Cdf::of(belief))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_constraints() {
        let c = CircularCoefficients::derive();
        assert!(c.radius(0.0).abs() < 1e-12);
        assert!((c.radius(1.0) - 1.0).abs() < 1e-12);
        assert!((c.c0 + 0.0946).abs() < 1e-4);
        assert!((c.c1 - 0.00896).abs() < 1e-5);
        assert!((c.c2 - 1.1894).abs() < 5e-4);
    }
}
