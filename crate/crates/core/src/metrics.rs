//! Localization and counting metrics.
//!
//! The main metric is density-normalized average precision (nAP): predictions
//! are ranked by confidence and associated sequentially with ground truth,
//! where a prediction hits a ground-truth point when their distance divided by
//! the point's kNN density scale is below `delta`. Flags from all scenes are
//! pooled into one ranked list and AP is the area under the precision
//! envelope of the resulting PR curve.

use crate::error::{Error, Result};
use crate::geometry::{
    knn_density_with_fallback, normalized_distance, DensityContext, Scene, DEFAULT_FALLBACK_RADIUS, DEFAULT_K,
};

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_COUNT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_DELTA_SWEEP: [f64; 10] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

#[derive(Debug, Clone, PartialEq)]
pub struct NapConfig {
    /// Primary localization threshold.
    pub delta: f64,
    /// Neighbor count for the density scale.
    pub k: usize,
    /// Thresholds averaged into the overall nAP, ascending.
    pub delta_sweep: Vec<f64>,
    /// Density scale for scenes holding a single ground-truth point (px).
    pub fallback_radius: f64,
    /// Confidence above which a prediction is counted.
    pub count_threshold: f64,
}

impl Default for NapConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            k: DEFAULT_K,
            delta_sweep: DEFAULT_DELTA_SWEEP.to_vec(),
            fallback_radius: DEFAULT_FALLBACK_RADIUS,
            count_threshold: DEFAULT_COUNT_THRESHOLD,
        }
    }
}

impl NapConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |d: f64| d > 0.0 && d.is_finite();
        if !positive(self.delta) {
            return Err(Error::param("delta", "must be positive and finite"));
        }
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.delta_sweep.is_empty() || !self.delta_sweep.iter().all(|&d| positive(d)) {
            return Err(Error::param(
                "delta_sweep",
                "must be a non-empty list of positive values",
            ));
        }
        if self.delta_sweep.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::param("delta_sweep", "must be sorted ascending"));
        }
        Ok(())
    }
}

/// One ranked prediction after association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedFlag {
    pub confidence: f64,
    pub is_tp: bool,
    /// Position of the prediction in its scene's input list.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub ranked_flags: Vec<RankedFlag>,
    pub total_gt: usize,
    /// `(recall, precision)` after each ranked prediction.
    pub points: Vec<(f64, f64)>,
}

impl PrCurve {
    pub fn new(ranked_flags: Vec<RankedFlag>, total_gt: usize) -> Self {
        let mut tp = 0usize;
        let points = ranked_flags
            .iter()
            .enumerate()
            .map(|(rank, f)| {
                tp += usize::from(f.is_tp);
                (recall(tp, total_gt), tp as f64 / (rank + 1) as f64)
            })
            .collect();
        Self {
            ranked_flags,
            total_gt,
            points,
        }
    }

    pub fn average_precision(&self) -> f64 {
        average_precision(&self.ranked_flags, self.total_gt)
    }
}

fn recall(tp: usize, total_gt: usize) -> f64 {
    if total_gt == 0 {
        0.0
    } else {
        tp as f64 / total_gt as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCount {
    pub id: String,
    pub ground_truth: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NapReport {
    pub delta: f64,
    /// AP at the primary `delta`.
    pub ap: f64,
    /// AP for every threshold of the sweep, in sweep order.
    pub ap_per_delta: Vec<(f64, f64)>,
    /// Mean AP over the sweep.
    pub nap_mean: f64,
    pub per_scene_counts: Vec<SceneCount>,
}

/// Prediction indices ordered by descending confidence; ties keep input order.
fn confidence_order(scene: &Scene) -> Vec<usize> {
    let preds = scene.predictions();
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

/// Confidence-ranked association where each prediction consumes the nearest
/// (in normalized distance) ground-truth point that is still unmatched and
/// satisfies the density criterion.
pub fn sequential_associate(scene: &Scene, ctx: &DensityContext, delta: f64) -> Vec<RankedFlag> {
    let preds = scene.predictions();
    let gt = &scene.ground_truth;
    let mut matched = vec![false; gt.len()];
    confidence_order(scene)
        .into_iter()
        .map(|j| {
            let mut best: Option<(f64, usize)> = None;
            for i in (0..gt.len()).filter(|&i| !matched[i]) {
                let d = normalized_distance(preds[j].point, i, ctx, gt);
                if d < delta && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            if let Some((_, i)) = best {
                matched[i] = true;
            }
            RankedFlag {
                confidence: preds[j].confidence,
                is_tp: best.is_some(),
                index: j,
            }
        })
        .collect()
}

/// Baseline association by globally ascending normalized distance, ignoring
/// confidence. Flags are reported in confidence order.
pub fn greedy_associate(scene: &Scene, ctx: &DensityContext, delta: f64) -> Vec<RankedFlag> {
    let preds = scene.predictions();
    let gt = &scene.ground_truth;
    let mut pairs = Vec::new();
    for (j, p) in preds.iter().enumerate() {
        for i in 0..gt.len() {
            let d = normalized_distance(p.point, i, ctx, gt);
            if d < delta {
                pairs.push((d, j, i));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt.len()];
    let mut pred_tp = vec![false; preds.len()];
    for (_, j, i) in pairs {
        if !gt_used[i] && !pred_tp[j] {
            gt_used[i] = true;
            pred_tp[j] = true;
        }
    }
    confidence_order(scene)
        .into_iter()
        .map(|j| RankedFlag {
            confidence: preds[j].confidence,
            is_tp: pred_tp[j],
            index: j,
        })
        .collect()
}

/// Area under the precision envelope of the PR curve built from
/// confidence-ranked flags.
///
/// With no ground truth at all the result is 1 when there are no
/// predictions either and 0 otherwise.
pub fn average_precision(flags: &[RankedFlag], total_gt: usize) -> f64 {
    if total_gt == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (rank, f) in flags.iter().enumerate() {
        tp += usize::from(f.is_tp);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    // Envelope: best precision at this or any later (higher-recall) rank.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let area: f64 = flags
        .iter()
        .zip(&precision)
        .filter(|(f, _)| f.is_tp)
        .fold(0.0, |acc, (_, &p)| acc + p);
    area / total_gt as f64
}

/// Pools per-scene flags into one dataset-wide ranking: descending
/// confidence, ties by scene id then input index.
pub fn pool_flags<'a>(per_scene: impl IntoIterator<Item = (&'a str, Vec<RankedFlag>)>) -> Vec<RankedFlag> {
    let mut tagged: Vec<(&str, RankedFlag)> = per_scene
        .into_iter()
        .flat_map(|(id, flags)| flags.into_iter().map(move |f| (id, f)))
        .collect();
    tagged.sort_by(|(ida, a), (idb, b)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| ida.cmp(idb))
            .then(a.index.cmp(&b.index))
    });
    tagged.into_iter().map(|(_, f)| f).collect()
}

fn densities(scenes: &[Scene], cfg: &NapConfig) -> Result<Vec<DensityContext>> {
    scenes
        .iter()
        .map(|s| {
            s.validate()?;
            knn_density_with_fallback(&s.ground_truth, cfg.k, cfg.fallback_radius)
        })
        .collect()
}

/// Pooled PR curve over all scenes at one threshold.
pub fn pr_curve(scenes: &[Scene], cfg: &NapConfig, delta: f64) -> Result<PrCurve> {
    cfg.validate()?;
    let ctxs = densities(scenes, cfg)?;
    Ok(pooled_curve(scenes, &ctxs, delta))
}

fn pooled_curve(scenes: &[Scene], ctxs: &[DensityContext], delta: f64) -> PrCurve {
    let flags = pool_flags(
        scenes
            .iter()
            .zip(ctxs)
            .map(|(s, ctx)| (s.id.as_str(), sequential_associate(s, ctx, delta))),
    );
    let total_gt = scenes.iter().map(|s| s.ground_truth.len()).sum();
    PrCurve::new(flags, total_gt)
}

/// nAP at the primary threshold and over the sweep, plus per-scene counts.
pub fn nap_evaluate(scenes: &[Scene], cfg: &NapConfig) -> Result<NapReport> {
    cfg.validate()?;
    let ctxs = densities(scenes, cfg)?;
    let ap_at = |delta: f64| pooled_curve(scenes, &ctxs, delta).average_precision();
    let ap_per_delta: Vec<(f64, f64)> = cfg.delta_sweep.iter().map(|&d| (d, ap_at(d))).collect();
    let nap_mean = ap_per_delta.iter().map(|&(_, ap)| ap).sum::<f64>() / ap_per_delta.len() as f64;
    let per_scene_counts = scenes
        .iter()
        .map(|s| SceneCount {
            id: s.id.clone(),
            ground_truth: s.ground_truth.len(),
            predicted: count_scene(s, cfg.count_threshold),
        })
        .collect();
    Ok(NapReport {
        delta: cfg.delta,
        ap: ap_at(cfg.delta),
        ap_per_delta,
        nap_mean,
        per_scene_counts,
    })
}

/// Number of predictions whose confidence is strictly above `threshold`.
pub fn count_scene(scene: &Scene, threshold: f64) -> usize {
    scene.predictions().iter().filter(|p| p.confidence > threshold).count()
}

/// Counting errors `(MAE, MSE)`, where MSE is the root of the mean squared error.
pub fn mae_mse(estimates: &[usize], truths: &[usize]) -> Result<(f64, f64)> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truths.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput("count lists"));
    }
    let n = estimates.len() as f64;
    let (abs, sq) = estimates.iter().zip(truths).fold((0.0, 0.0), |(abs, sq), (&e, &t)| {
        let diff = e as f64 - t as f64;
        (abs + diff.abs(), sq + diff * diff)
    });
    Ok((abs / n, (sq / n).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Point-level precision/recall/F1 of the predictions above `conf_threshold`,
/// associated sequentially at `cfg.delta`. Empty ratios are 0.
pub fn localization_prf(scenes: &[Scene], cfg: &NapConfig, conf_threshold: f64) -> Result<LocalizationScore> {
    cfg.validate()?;
    let ctxs = densities(scenes, cfg)?;
    let (mut tp, mut predicted, mut total_gt) = (0usize, 0usize, 0usize);
    for (scene, ctx) in scenes.iter().zip(&ctxs) {
        let kept = scene
            .predictions()
            .iter()
            .copied()
            .filter(|p| p.confidence > conf_threshold)
            .collect();
        let filtered = Scene {
            id: scene.id.clone(),
            ground_truth: scene.ground_truth.clone(),
            predictions: Some(kept),
        };
        let flags = sequential_associate(&filtered, ctx, cfg.delta);
        tp += flags.iter().filter(|f| f.is_tp).count();
        predicted += flags.len();
        total_gt += scene.ground_truth.len();
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, total_gt);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(LocalizationScore { precision, recall, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{knn_density, Point, Prediction};

    #[test]
    fn zero_ap_is_positive_zero() {
        let ap = average_precision(&[], 5);
        assert!(ap == 0.0 && ap.is_sign_positive());
    }

    fn flags(tp: &[bool]) -> Vec<RankedFlag> {
        tp.iter()
            .enumerate()
            .map(|(i, &is_tp)| RankedFlag {
                confidence: 1.0 - i as f64 * 0.01,
                is_tp,
                index: i,
            })
            .collect()
    }

    fn scene(gt: &[(f64, f64)], preds: &[(f64, f64, f64)]) -> Scene {
        Scene::new("s", gt.iter().copied().map(Point::from).collect())
            .with_predictions(preds.iter().map(|&(x, y, c)| Prediction::new(x, y, c)).collect())
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&flags(&[true, true, true]), 3), 1.0);
        assert_eq!(average_precision(&flags(&[true, false]), 1), 1.0);
        assert_eq!(average_precision(&flags(&[false, true]), 1), 0.5);
        assert_eq!(average_precision(&[], 4), 0.0);
        assert_eq!(average_precision(&[], 0), 1.0);
        assert_eq!(average_precision(&flags(&[false]), 0), 0.0);
    }

    #[test]
    fn pr_curve_points() {
        let curve = PrCurve::new(flags(&[false, true, true]), 4);
        assert_eq!(curve.points, vec![(0.0, 0.0), (0.25, 0.5), (0.5, 2.0 / 3.0)]);
    }

    #[test]
    fn sequential_exact_hits() {
        let s = scene(&[(0., 0.), (100., 100.)], &[(0., 0., 0.9), (100., 100., 0.8)]);
        let ctx = knn_density(&s.ground_truth, 3).unwrap();
        let f = sequential_associate(&s, &ctx, 0.5);
        assert!(f.iter().all(|f| f.is_tp));
    }

    #[test]
    fn sequential_consumes_ground_truth_once() {
        let s = scene(&[(0., 0.)], &[(1., 0., 0.8), (0.5, 0., 0.9)]);
        let ctx = knn_density(&s.ground_truth, 3).unwrap();
        let f = sequential_associate(&s, &ctx, 0.5);
        assert_eq!(
            f.iter().map(|f| (f.index, f.is_tp)).collect::<Vec<_>>(),
            vec![(1, true), (0, false)]
        );
    }

    #[test]
    fn greedy_and_sequential_disagree() {
        // The low-confidence prediction is closer; greedy hands it the ground truth.
        let s = scene(&[(0., 0.)], &[(4., 0., 0.9), (1., 0., 0.2)]);
        let ctx = knn_density(&s.ground_truth, 3).unwrap();
        let seq = sequential_associate(&s, &ctx, 0.5);
        let greedy = greedy_associate(&s, &ctx, 0.5);
        assert_eq!(seq.iter().map(|f| f.is_tp).collect::<Vec<_>>(), vec![true, false]);
        assert_eq!(greedy.iter().map(|f| f.is_tp).collect::<Vec<_>>(), vec![false, true]);
    }

    #[test]
    fn greedy_equals_sequential_on_exact_hits() {
        let s = scene(
            &[(0., 0.), (50., 0.), (0., 50.)],
            &[(0., 0., 0.3), (50., 0., 0.9), (0., 50., 0.6)],
        );
        let ctx = knn_density(&s.ground_truth, 3).unwrap();
        assert_eq!(sequential_associate(&s, &ctx, 0.5), greedy_associate(&s, &ctx, 0.5));
        let empty = scene(&[(0., 0.)], &[]);
        assert!(greedy_associate(&empty, &ctx, 0.5).is_empty());
        assert!(sequential_associate(&empty, &ctx, 0.5).is_empty());
    }

    #[test]
    fn counting() {
        let s = scene(&[], &[(0., 0., 0.9), (0., 0., 0.6), (0., 0., 0.4)]);
        assert_eq!(count_scene(&s, 0.5), 2);
        assert_eq!(count_scene(&s, 0.95), 0);
        let boundary = scene(&[], &[(0., 0., 0.5)]);
        assert_eq!(count_scene(&boundary, DEFAULT_COUNT_THRESHOLD), 0);
    }

    #[test]
    fn counting_errors() {
        assert_eq!(mae_mse(&[4, 5], &[4, 5]).unwrap(), (0.0, 0.0));
        assert_eq!(mae_mse(&[3], &[7]).unwrap(), (4.0, 4.0));
        let (mae, mse) = mae_mse(&[1, 5], &[2, 9]).unwrap();
        assert_eq!(mae, 2.5);
        assert!((mse - 2.9154759474226504).abs() < 1e-12);
        assert!(mae_mse(&[], &[]).is_err());
        assert!(mae_mse(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn prf_examples() {
        let cfg = NapConfig::default();
        let perfect = scene(&[(0., 0.), (30., 0.)], &[(0., 0., 1.0), (30., 0., 1.0)]);
        let s = localization_prf(std::slice::from_ref(&perfect), &cfg, 0.5).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = localization_prf(&[perfect], &cfg, 1.0).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        let half = scene(&[(0., 0.), (30., 0.)], &[(0., 0., 1.0)]);
        let s = localization_prf(&[half], &cfg, 0.5).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nap_perfect_and_empty() {
        let gt = [(0., 0.), (20., 5.), (40., 40.)];
        let perfect: Vec<_> = gt.iter().map(|&(x, y)| (x, y, 1.0)).collect();
        let r = nap_evaluate(&[scene(&gt, &perfect)], &NapConfig::default()).unwrap();
        assert_eq!(r.ap, 1.0);
        assert_eq!(r.nap_mean, 1.0);
        assert!(r.ap_per_delta.iter().all(|&(_, ap)| ap == 1.0));
        let r = nap_evaluate(&[scene(&gt, &[])], &NapConfig::default()).unwrap();
        assert_eq!(r.nap_mean, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = NapConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.delta_sweep = vec![0.2, 0.1];
        assert!(cfg.validate().is_err());
        cfg.delta_sweep = vec![];
        assert!(cfg.validate().is_err());
        let cfg = NapConfig {
            delta: 0.0,
            ..NapConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
