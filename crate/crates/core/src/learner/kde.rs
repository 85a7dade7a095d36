//! Product-Gaussian KDE of `(y, features)` with the `y`-marginal divided
//! out, so the conditional it yields is flat in `y` on average.

use crate::error::{Error, Result};

pub const GRID: usize = 256;
pub const MIN_SAMPLES: usize = 10;
/// Bandwidths are recomputed after this many new samples.
pub const REFRESH_EVERY: usize = 500;

#[derive(Clone, Debug, Default)]
pub struct DensityEstimator {
    ys: Vec<f64>,
    features: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    since_refresh: usize,
}

impl DensityEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: impl IntoIterator<Item = (f64, Vec<f64>)>) -> Result<Self> {
        let mut est = Self::new();
        for (y, f) in samples {
            est.push(y, f)?;
        }
        est.refresh()?;
        Ok(est)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Bandwidths, `y` first.
    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn push(&mut self, y: f64, features: Vec<f64>) -> Result<()> {
        if !self.features.is_empty() && features.len() != self.dim() {
            return Err(Error::Config(format!("feature length {} != {}", features.len(), self.dim())));
        }
        self.ys.push(y);
        self.features.push(features);
        self.since_refresh += 1;
        if self.bandwidths.is_empty() && self.len() >= MIN_SAMPLES || self.since_refresh >= REFRESH_EVERY {
            self.refresh()?;
        }
        Ok(())
    }

    /// Silverman's multivariate rule: `h_j = σ_j (4 / ((d + 2) n))^{1/(d+4)}`.
    pub fn refresh(&mut self) -> Result<()> {
        let n = self.len();
        if n < 2 {
            return Err(Error::NotEnoughSamples { needed: MIN_SAMPLES, have: n });
        }
        let d = self.dim() + 1;
        let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
        let mut h = Vec::with_capacity(d);
        for j in 0..d {
            let col = |i: usize| if j == 0 { self.ys[i] } else { self.features[i][j - 1] };
            let mean = (0..n).map(col).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (col(i) - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let hj = var.sqrt() * factor;
            if !(hj > 0.0 && hj.is_finite()) {
                return Err(Error::DegenerateBandwidth(j));
            }
            h.push(hj);
        }
        self.bandwidths = h;
        self.since_refresh = 0;
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if self.len() < MIN_SAMPLES || self.bandwidths.is_empty() {
            return Err(Error::NotEnoughSamples { needed: MIN_SAMPLES, have: self.len() });
        }
        Ok(())
    }

    /// KDE joint `p_s(y, f)` and marginal `p_s(y)` on the grid midpoints.
    /// The joint is scaled by an unknown positive constant.
    pub fn joint_and_marginal(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check()?;
        if features.len() != self.dim() {
            return Err(Error::Config(format!("query has {} features, expected {}", features.len(), self.dim())));
        }
        let h = &self.bandwidths;
        let logw: Vec<f64> = self
            .features
            .iter()
            .map(|fi| {
                -0.5 * fi
                    .iter()
                    .zip(features)
                    .zip(&h[1..])
                    .map(|((a, b), hj)| ((a - b) / hj).powi(2))
                    .sum::<f64>()
            })
            .collect();
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let mut joint = vec![0.0; GRID];
        let mut marginal = vec![0.0; GRID];
        for (g, (jg, mg)) in joint.iter_mut().zip(marginal.iter_mut()).enumerate() {
            let y = (g as f64 + 0.5) / GRID as f64;
            for (yi, wi) in self.ys.iter().zip(&w) {
                let k = (-0.5 * ((y - yi) / h[0]).powi(2)).exp();
                *jg += wi * k;
                *mg += k;
            }
        }
        Ok((joint, marginal))
    }

    /// Conditional density over `y` on [`GRID`] midpoints, integrating to one.
    pub fn conditional(&self, features: &[f64]) -> Result<Vec<f64>> {
        let (joint, marginal) = self.joint_and_marginal(features)?;
        reweight(&joint, &marginal)
    }
}

/// `p_s(y, f) / p_s(y)` renormalized over the grid.
pub fn reweight(joint: &[f64], marginal: &[f64]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = joint
        .iter()
        .zip(marginal)
        .map(|(j, m)| if *m > 0.0 { j / m } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum::<f64>() / out.len() as f64;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Config("conditional density vanishes on the grid".into()));
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// Convenience wrapper matching the single-call form.
pub fn kde_conditional(est: &DensityEstimator, features: &[f64]) -> Result<Vec<f64>> {
    est.conditional(features)
}
