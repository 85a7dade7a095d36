//! Linear pointing model for the update kernel: `r(f) = A f + b` and
//! `log σ²(f) = w₀ + w·f`, with optional symmetries imposed by data
//! augmentation and blended in with weight `λ`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::actions::{Features, PointingModel, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::geom::Point;

pub const ESTIMATOR_FILE_VERSION: u32 = 1;
pub const RANK_TOL: f64 = 1e-8;
/// `E[log X] = -γ` for `X ~ Exp(1)`.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Refit threshold on the change of `λ`.
pub const REBLEND_STEP: f64 = 0.05;

/// A supervised example: features of the action window and the display
/// point of the input that was eventually selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointingSample {
    pub features: Vec<f64>,
    pub target: Point,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    /// Top/bottom mirror `y ↦ 1 − y`.
    FlipVertical,
    /// Left/right mirror `x ↦ 1 − x`.
    FlipHorizontal,
    Both,
    /// Rotations about the display centre by multiples of `2π/n`.
    Rotational(u32),
}

/// An affine map of the display, applied to positions; velocities take
/// only its linear part.
#[derive(Clone, Copy, Debug)]
struct DisplayMap {
    m: [[f64; 2]; 2],
}

impl DisplayMap {
    fn point(&self, p: Point) -> Point {
        let d = p - Point::new(0.5, 0.5);
        Point::new(0.5, 0.5) + self.vector(d)
    }

    fn vector(&self, v: Point) -> Point {
        Point::new(self.m[0][0] * v.x + self.m[0][1] * v.y, self.m[1][0] * v.x + self.m[1][1] * v.y)
    }

    fn features(&self, f: &[f64]) -> Vec<f64> {
        let mean = self.point(Point::new(f[0], f[1]));
        let vel = self.vector(Point::new(f[2], f[3]));
        let last = self.point(Point::new(f[4], f[5]));
        vec![mean.x, mean.y, vel.x, vel.y, last.x, last.y]
    }
}

impl Symmetry {
    /// Group elements other than the identity.
    fn maps(self) -> Vec<DisplayMap> {
        let flip_v = DisplayMap { m: [[1.0, 0.0], [0.0, -1.0]] };
        let flip_h = DisplayMap { m: [[-1.0, 0.0], [0.0, 1.0]] };
        match self {
            Symmetry::None => vec![],
            Symmetry::FlipVertical => vec![flip_v],
            Symmetry::FlipHorizontal => vec![flip_h],
            Symmetry::Both => vec![flip_v, flip_h, DisplayMap { m: [[-1.0, 0.0], [0.0, -1.0]] }],
            Symmetry::Rotational(n) => (1..n.max(1))
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / n as f64;
                    DisplayMap { m: [[a.cos(), -a.sin()], [a.sin(), a.cos()]] }
                })
                .collect(),
        }
    }

    /// Applies every group element to a feature vector and target.
    pub fn orbit(self, features: &[f64], target: Point) -> Vec<(Vec<f64>, Point)> {
        self.maps().iter().map(|m| (m.features(features), m.point(target))).collect()
    }

    pub fn transform_features(self, features: &[f64]) -> Vec<Vec<f64>> {
        self.maps().iter().map(|m| m.features(features)).collect()
    }

    pub fn transform_point(self, p: Point) -> Vec<Point> {
        self.maps().iter().map(|m| m.point(p)).collect()
    }
}

/// Coefficients of one fit. `a` is 2×d row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: [f64; 2],
    pub sigma_weights: Vec<f64>,
}

impl Fit {
    fn blend(&self, other: &Fit, lambda: f64) -> Fit {
        let mix = |x: f64, y: f64| (1.0 - lambda) * x + lambda * y;
        Fit {
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| mix(x, y)).collect())
                .collect(),
            b: [mix(self.b[0], other.b[0]), mix(self.b[1], other.b[1])],
            sigma_weights: self.sigma_weights.iter().zip(&other.sigma_weights).map(|(&x, &y)| mix(x, y)).collect(),
        }
    }

    fn center(&self, f: &[f64]) -> Point {
        let dot = |row: &[f64]| row.iter().zip(f).map(|(a, x)| a * x).sum::<f64>();
        Point::new(dot(&self.a[0]) + self.b[0], dot(&self.a[1]) + self.b[1])
    }

    fn log_variance(&self, f: &[f64]) -> f64 {
        self.sigma_weights[0] + self.sigma_weights[1..].iter().zip(f).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub dim: usize,
    pub names: Vec<String>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            dim: FEATURE_DIM,
            names: ["mean_x", "mean_y", "vel_x", "vel_y", "last_x", "last_y"].map(String::from).to_vec(),
        }
    }
}

impl FeatureSpec {
    pub fn plain(dim: usize) -> Self {
        Self { dim, names: (0..dim).map(|i| format!("f{i}")).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub free: Fit,
    pub symmetric: Fit,
}

/// The estimator as used by the engine and as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricEstimator {
    pub version: u32,
    pub feature_spec: FeatureSpec,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: [f64; 2],
    pub sigma_weights: Vec<f64>,
    pub symmetry: Symmetry,
    pub lambda: f64,
    /// `λ` at which `A`, `b` and the weights were last blended.
    #[serde(default)]
    pub blended_at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fits: Option<Fits>,
}

impl ParametricEstimator {
    pub fn dim(&self) -> usize {
        self.feature_spec.dim
    }

    fn current(&self) -> Fit {
        Fit { a: self.a.clone(), b: self.b, sigma_weights: self.sigma_weights.clone() }
    }

    pub fn center(&self, f: &[f64]) -> Point {
        self.current().center(f)
    }

    pub fn variance(&self, f: &[f64]) -> f64 {
        self.current().log_variance(f).exp()
    }

    fn set(&mut self, fit: Fit) {
        self.a = fit.a;
        self.b = fit.b;
        self.sigma_weights = fit.sigma_weights;
    }

    /// Sets `λ`; the coefficients are re-blended only when `λ` has moved
    /// more than [`REBLEND_STEP`] since the last blend.
    pub fn set_lambda(&mut self, lambda: f64) -> bool {
        self.lambda = lambda.clamp(0.0, 1.0);
        if (self.lambda - self.blended_at).abs() <= REBLEND_STEP {
            return false;
        }
        if let Some(fits) = &self.fits {
            let fit = fits.free.blend(&fits.symmetric, self.lambda);
            self.set(fit);
        }
        self.blended_at = self.lambda;
        true
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let est: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if est.version != ESTIMATOR_FILE_VERSION {
            return Err(Error::Version { found: est.version, expected: ESTIMATOR_FILE_VERSION });
        }
        if est.a.len() != 2 || est.a.iter().any(|r| r.len() != est.dim()) || est.sigma_weights.len() != est.dim() + 1 {
            return Err(Error::Config("estimator coefficients do not match feature_spec".into()));
        }
        Ok(est)
    }
}

impl PointingModel for ParametricEstimator {
    fn predict(&self, f: &Features) -> (Point, f64) {
        (self.center(f.as_slice()), self.variance(f.as_slice()))
    }
}

/// Minimum-norm least squares; directions with singular values below
/// `RANK_TOL` of the largest are dropped, so collinear features stay finite.
fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let eps = svd.singular_values.max() * RANK_TOL;
    svd.solve(y, eps).expect("both factors were computed")
}

fn fit_once(samples: &[(Vec<f64>, Point)], dim: usize) -> Fit {
    let n = samples.len();
    let x = DMatrix::from_fn(n, dim + 1, |i, j| if j == 0 { 1.0 } else { samples[i].0[j - 1] });
    let y = DMatrix::from_fn(n, 2, |i, j| if j == 0 { samples[i].1.x } else { samples[i].1.y });
    let coef = least_squares(&x, &y);
    let resid = &y - &x * &coef;
    // ‖e‖²/2 ~ σ²·Exp(1) for isotropic Gaussian errors
    let z = DVector::from_fn(n, |i, _| {
        let e2 = resid[(i, 0)].powi(2) + resid[(i, 1)].powi(2);
        (0.5 * e2).max(1e-300).ln()
    });
    let z = DMatrix::from_column_slice(n, 1, z.as_slice());
    let w = least_squares(&x, &z);
    let mut sigma_weights: Vec<f64> = w.column(0).iter().copied().collect();
    sigma_weights[0] += EULER_GAMMA;
    Fit {
        a: (0..2).map(|r| (1..=dim).map(|j| coef[(j, r)]).collect()).collect(),
        b: [coef[(0, 0)], coef[(0, 1)]],
        sigma_weights,
    }
}

/// Fits the pointing model. With a symmetry, a second fit on the
/// symmetry-augmented data is blended in with weight `lambda`.
pub fn fit_parametric(samples: &[PointingSample], symmetry: Symmetry, lambda: f64) -> Result<ParametricEstimator> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    if samples.len() < dim + 1 || dim == 0 {
        return Err(Error::NotEnoughSamples { needed: dim.max(1) + 1, have: samples.len() });
    }
    if samples.iter().any(|s| s.features.len() != dim) {
        return Err(Error::Config("samples have differing feature lengths".into()));
    }
    if symmetry != Symmetry::None && dim != FEATURE_DIM {
        return Err(Error::Config(format!("symmetries need the {FEATURE_DIM} display features")));
    }
    let base: Vec<(Vec<f64>, Point)> = samples.iter().map(|s| (s.features.clone(), s.target)).collect();
    let free = fit_once(&base, dim);
    let spec = if dim == FEATURE_DIM { FeatureSpec::default() } else { FeatureSpec::plain(dim) };
    let lambda = lambda.clamp(0.0, 1.0);
    let mut est = ParametricEstimator {
        version: ESTIMATOR_FILE_VERSION,
        feature_spec: spec,
        a: free.a.clone(),
        b: free.b,
        sigma_weights: free.sigma_weights.clone(),
        symmetry,
        lambda,
        blended_at: lambda,
        fits: None,
    };
    if symmetry != Symmetry::None {
        let mut aug = base.clone();
        for (f, t) in &base {
            aug.extend(symmetry.orbit(f, *t));
        }
        let symmetric = fit_once(&aug, dim);
        est.set(free.blend(&symmetric, lambda));
        est.fits = Some(Fits { free, symmetric });
    }
    Ok(est)
}

/// `λ` as a function of the tick count; must not increase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { lambda: f64 },
    Linear { from: f64, to: f64, ticks: u64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Constant { lambda } => (0.0..=1.0).contains(&lambda),
            Schedule::Linear { from, to, ticks } => {
                (0.0..=1.0).contains(&from) && (0.0..=1.0).contains(&to) && to <= from && ticks > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid schedule {self:?}")))
        }
    }

    pub fn at(&self, tick: u64) -> f64 {
        match *self {
            Schedule::Constant { lambda } => lambda,
            Schedule::Linear { from, to, ticks } => {
                let s = (tick as f64 / ticks as f64).min(1.0);
                from + (to - from) * s
            }
        }
    }
}

/// Moves the estimator's `λ` to the schedule's value at `tick`.
pub fn anneal(est: &mut ParametricEstimator, schedule: &Schedule, tick: u64) -> bool {
    est.set_lambda(schedule.at(tick))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    use super::*;

    fn planted(n: usize, noise: f64, seed: u64) -> Vec<PointingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let g = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let f: Vec<f64> = (0..3).map(|_| u.sample(&mut rng)).collect();
                let t = Point::new(0.5 * f[0] - 0.2 * f[2] + 0.1, 0.8 * f[1] + 0.05);
                let e = Point::new(g.sample(&mut rng), g.sample(&mut rng)) * noise;
                PointingSample { features: f, target: t + e }
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let est = fit_parametric(&planted(50, 0.0, 1), Symmetry::None, 0.0).unwrap();
        let want = [[0.5, 0.0, -0.2], [0.0, 0.8, 0.0]];
        for (row, want) in est.a.iter().zip(want) {
            for (v, w) in row.iter().zip(want) {
                assert!((v - w).abs() < 1e-9);
            }
        }
        assert!((est.b[0] - 0.1).abs() < 1e-9 && (est.b[1] - 0.05).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_falls_back_to_ridge() {
        let s: Vec<PointingSample> = (0..20)
            .map(|i| {
                let v = i as f64 / 20.0;
                PointingSample { features: vec![v, 2.0 * v], target: Point::new(v, 0.5) }
            })
            .collect();
        let est = fit_parametric(&s, Symmetry::None, 0.0).unwrap();
        let p = est.center(&[0.3, 0.6]);
        assert!((p.x - 0.3).abs() < 1e-4);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit_parametric(&planted(3, 0.1, 1), Symmetry::None, 0.0),
            Err(Error::NotEnoughSamples { .. })
        ));
    }

    #[test]
    fn schedule_interpolates() {
        let s = Schedule::Linear { from: 1.0, to: 0.0, ticks: 10_000 };
        s.validate().unwrap();
        assert!((s.at(5_000) - 0.5).abs() < 1e-12);
        assert_eq!(s.at(20_000), 0.0);
        assert!(Schedule::Linear { from: 0.0, to: 1.0, ticks: 5 }.validate().is_err());
    }

    #[test]
    fn rotations_form_orbits() {
        let f = vec![0.7, 0.5, 1.0, 0.0, 0.7, 0.5];
        let orbit = Symmetry::Rotational(4).transform_features(&f);
        assert_eq!(orbit.len(), 3);
        assert!((orbit[1][0] - 0.3).abs() < 1e-12 && (orbit[1][1] - 0.5).abs() < 1e-12);
        assert!((orbit[1][2] + 1.0).abs() < 1e-12);
    }
}
