//! Points, scenes and the kNN density scale used to normalize distances.

use crate::error::{Error, Result};

/// Default neighbor count for the density scale.
pub const DEFAULT_K: usize = 3;

/// Density scale assigned to a point that has no neighbors (single-point scene), in px.
pub const DEFAULT_FALLBACK_RADIUS: f64 = 32.0;

/// A head location in image coordinates (px).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.x * factor, self.y * factor)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self::new(x, y)
    }
}

/// A predicted head point with its confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub point: Point,
    pub confidence: f64,
}

impl Prediction {
    pub const fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self {
            point: Point::new(x, y),
            confidence,
        }
    }
}

/// One image: its annotated head points and, optionally, a model's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub ground_truth: Vec<Point>,
    pub predictions: Option<Vec<Prediction>>,
}

impl Scene {
    pub fn new(id: impl Into<String>, ground_truth: Vec<Point>) -> Self {
        Self {
            id: id.into(),
            ground_truth,
            predictions: None,
        }
    }

    pub fn with_predictions(mut self, predictions: Vec<Prediction>) -> Self {
        self.predictions = Some(predictions);
        self
    }

    /// Predictions, treating a scene without a prediction list as predicting nothing.
    pub fn predictions(&self) -> &[Prediction] {
        self.predictions.as_deref().unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidScene {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if let Some(i) = self.ground_truth.iter().position(|p| !p.is_finite()) {
            return Err(invalid(format!("ground-truth point {i} is not finite")));
        }
        for (i, p) in self.predictions().iter().enumerate() {
            if !p.point.is_finite() {
                return Err(invalid(format!("prediction {i} is not finite")));
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(invalid(format!(
                    "prediction {i} has confidence {} outside [0, 1]",
                    p.confidence
                )));
            }
        }
        Ok(())
    }

    /// Copy of the scene with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            id: self.id.clone(),
            ground_truth: self.ground_truth.iter().map(|p| p.scaled(factor)).collect(),
            predictions: self.predictions.as_ref().map(|preds| {
                preds
                    .iter()
                    .map(|p| Prediction {
                        point: p.point.scaled(factor),
                        confidence: p.confidence,
                    })
                    .collect()
            }),
        }
    }
}

/// Per ground-truth point local density scale: the mean distance to its `k`
/// nearest ground-truth neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityContext {
    pub k: usize,
    pub d_knn: Vec<f64>,
}

impl DensityContext {
    pub fn len(&self) -> usize {
        self.d_knn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_knn.is_empty()
    }
}

/// `sqrt(dx² + dy²)`; square root is correctly rounded, so results are
/// bit-identical across platforms (unlike `hypot`).
#[inline]
pub fn euclidean_distance(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt()
}

/// kNN density scale with the default fallback radius for lone points.
pub fn knn_density(ground_truth: &[Point], k: usize) -> Result<DensityContext> {
    knn_density_with_fallback(ground_truth, k, DEFAULT_FALLBACK_RADIUS)
}

/// Mean distance from each point to its `min(k, N - 1)` nearest other points.
///
/// The neighbor distances are summed in ascending order. A scene with a single
/// point gets `fallback_radius`. Duplicate annotations with `k = 1` yield a zero
/// scale, which no prediction can satisfy under the strict criterion.
pub fn knn_density_with_fallback(ground_truth: &[Point], k: usize, fallback_radius: f64) -> Result<DensityContext> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if !(fallback_radius > 0.0 && fallback_radius.is_finite()) {
        return Err(Error::param("fallback_radius", "must be positive and finite"));
    }
    let n = ground_truth.len();
    if n == 1 {
        return Ok(DensityContext {
            k,
            d_knn: vec![fallback_radius],
        });
    }
    let neighbors = k.min(n.saturating_sub(1));
    let mut scratch = Vec::with_capacity(n.saturating_sub(1));
    let d_knn = ground_truth
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            scratch.clear();
            scratch.extend(
                ground_truth
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &q)| euclidean_distance(p, q)),
            );
            if neighbors < scratch.len() {
                scratch.select_nth_unstable_by(neighbors - 1, f64::total_cmp);
            }
            let nearest = &mut scratch[..neighbors];
            nearest.sort_unstable_by(f64::total_cmp);
            nearest.iter().sum::<f64>() / neighbors as f64
        })
        .collect();
    Ok(DensityContext { k, d_knn })
}

/// Density-normalized hit test: `d(pred, gt) / d_knn(gt) < delta`.
pub fn match_criterion(pred: Point, gt_index: usize, ctx: &DensityContext, gt: &[Point], delta: f64) -> bool {
    normalized_distance(pred, gt_index, ctx, gt) < delta
}

#[inline]
pub(crate) fn normalized_distance(pred: Point, gt_index: usize, ctx: &DensityContext, gt: &[Point]) -> f64 {
    euclidean_distance(pred, gt[gt_index]) / ctx.d_knn[gt_index]
}
