//! Seeded synthetic crowd scenes.
//!
//! All randomness comes from a splitmix64 stream consumed in a fixed order,
//! so a `(recipe, seed)` pair produces the same scene on every platform and
//! in any other implementation of the same procedure.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Point, Prediction, Scene};

/// splitmix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller; consumes two draws, keeps the cosine branch.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    Uniform,
    /// `cluster_count` uniformly placed centers with isotropic Gaussian spread.
    GaussianClusters {
        cluster_count: usize,
        spread: f64,
    },
    /// Density growing linearly from the left edge to the right edge.
    DensityGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecipe {
    pub kind: SceneKind,
    pub n_points: usize,
    pub width: f64,
    pub height: f64,
    pub seed: u64,
}

impl SceneRecipe {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::param("image_size", "width and height must be positive"));
        }
        if let SceneKind::GaussianClusters { cluster_count, spread } = self.kind {
            if cluster_count == 0 {
                return Err(Error::param("cluster_count", "must be at least 1"));
            }
            if !(spread > 0.0 && spread.is_finite()) {
                return Err(Error::param("spread", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Ground-truth scene for `recipe`, with id `scene-<seed>` and no predictions.
pub fn generate(recipe: &SceneRecipe) -> Result<Scene> {
    recipe.validate()?;
    let mut rng = SplitMix64::new(recipe.seed);
    let (w, h) = (recipe.width, recipe.height);
    let points = match recipe.kind {
        SceneKind::Uniform => (0..recipe.n_points)
            .map(|_| {
                let x = rng.next_f64() * w;
                Point::new(x, rng.next_f64() * h)
            })
            .collect(),
        SceneKind::DensityGradient => (0..recipe.n_points)
            .map(|_| {
                let x = rng.next_f64().sqrt() * w;
                Point::new(x, rng.next_f64() * h)
            })
            .collect(),
        SceneKind::GaussianClusters { cluster_count, spread } => {
            let centers: Vec<Point> = (0..cluster_count)
                .map(|_| {
                    let x = rng.next_f64() * w;
                    Point::new(x, rng.next_f64() * h)
                })
                .collect();
            (0..recipe.n_points)
                .map(|_| {
                    let c = ((rng.next_f64() * cluster_count as f64) as usize).min(cluster_count - 1);
                    loop {
                        let x = centers[c].x + spread * rng.next_gaussian();
                        let y = centers[c].y + spread * rng.next_gaussian();
                        if (0.0..w).contains(&x) && (0.0..h).contains(&y) {
                            break Point::new(x, y);
                        }
                    }
                })
                .collect()
        }
    };
    Ok(Scene::new(format!("scene-{}", recipe.seed), points))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    /// Standard deviation of the per-axis position noise (px).
    pub jitter_sigma: f64,
    /// Probability that a ground-truth point gets no prediction.
    pub drop_rate: f64,
    /// Probability that a kept point gets a second, independent prediction.
    pub dup_rate: f64,
    pub seed: u64,
}

impl Corruption {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::param("jitter_sigma", "must be non-negative"));
        }
        for (name, rate) in [("drop_rate", self.drop_rate), ("dup_rate", self.dup_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Predictions derived from the scene's ground truth.
///
/// Every ground-truth point consumes exactly the same draws whatever the
/// rates are, in this order: drop, jitter x/y, confidence, duplicate,
/// duplicate shift x/y, duplicate confidence. Two corruptions sharing a seed
/// therefore differ only where a rate decides differently.
///
/// Confidence falls with the jitter magnitude `m` as
/// `exp(-m^2 / (4 sigma^2)) * (1 - 0.1 u)`, and is exactly 1 without jitter.
/// A duplicate sits within a quarter sigma of its primary prediction and
/// scores `primary * (1 - 0.1 u)`.
pub fn corrupt(scene: &Scene, c: &Corruption) -> Result<Scene> {
    c.validate()?;
    let mut rng = SplitMix64::new(c.seed);
    let sigma = c.jitter_sigma;
    let mut predictions = Vec::with_capacity(scene.ground_truth.len());
    for &p in &scene.ground_truth {
        let drop = rng.next_f64() < c.drop_rate;
        let dx = sigma * rng.next_gaussian();
        let dy = sigma * rng.next_gaussian();
        let u = rng.next_f64();
        let confidence = if sigma > 0.0 {
            (-(dx * dx + dy * dy) / (4.0 * sigma * sigma)).exp() * (1.0 - 0.1 * u)
        } else {
            1.0
        };
        let primary = Prediction {
            point: p.translated(dx, dy),
            confidence,
        };
        let dup = rng.next_f64() < c.dup_rate;
        let sx = 0.25 * sigma * rng.next_gaussian();
        let sy = 0.25 * sigma * rng.next_gaussian();
        let duplicate = Prediction {
            point: primary.point.translated(sx, sy),
            confidence: confidence * (1.0 - 0.1 * rng.next_f64()),
        };
        if !drop {
            predictions.push(primary);
            if dup {
                predictions.push(duplicate);
            }
        }
    }
    Ok(scene.clone().with_predictions(predictions))
}
