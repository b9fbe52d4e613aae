//! Point proposals: reference layouts, offset decoding and the greedy
//! target-assignment baselines.
//!
//! Every cell of an `H x W` feature grid covers an `s x s` image patch and
//! carries `K` fixed reference points. Each reference point predicts an
//! offset, scaled by `gamma`, and a two-class (background, head) logit pair.
//! Proposal `j` belongs to cell `(row, col)` and slot `k` with
//! `j = (row * W + col) * K + k`.

use crate::assignment::MatchResult;
use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, Point, Prediction};

pub const DEFAULT_STRIDE: usize = 8;
pub const DEFAULT_POINTS_PER_CELL: usize = 4;
pub const DEFAULT_GAMMA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureGridSpec {
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub points_per_cell: usize,
}

impl FeatureGridSpec {
    pub fn new(height: usize, width: usize, stride: usize, points_per_cell: usize) -> Result<Self> {
        let spec = Self {
            height,
            width,
            stride,
            points_per_cell,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid covering a `width x height` px image, rounding partial cells up.
    pub fn for_image(width: f64, height: f64, stride: usize, points_per_cell: usize) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || stride == 0 {
            return Err(Error::param("image_size", "image and stride must be positive"));
        }
        let cells = |px: f64| (px / stride as f64).ceil() as usize;
        Self::new(cells(height), cells(width), stride, points_per_cell)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::param("grid", "height and width must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        if self.points_per_cell == 0 {
            return Err(Error::param("points_per_cell", "must be at least 1"));
        }
        Ok(())
    }

    pub fn num_proposals(&self) -> usize {
        self.height * self.width * self.points_per_cell
    }

    /// `(row, col)` of the cell owning proposal `j`.
    pub fn cell_of(&self, j: usize) -> (usize, usize) {
        let cell = j / self.points_per_cell;
        (cell / self.width, cell % self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    /// All reference points at the patch center.
    Center,
    /// A centered `sqrt(K) x sqrt(K)` sub-grid inside the patch.
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLayout {
    pub kind: LayoutKind,
    pub points: Vec<Point>,
}

pub fn make_layout(spec: &FeatureGridSpec, kind: LayoutKind) -> Result<ReferenceLayout> {
    spec.validate()?;
    let k = spec.points_per_cell;
    let side = (k as f64).sqrt().round() as usize;
    if kind == LayoutKind::Grid && side * side != k {
        return Err(Error::param(
            "points_per_cell",
            format!("grid layout needs a perfect square, got {k}"),
        ));
    }
    let s = spec.stride as f64;
    let mut points = Vec::with_capacity(spec.num_proposals());
    for row in 0..spec.height {
        for col in 0..spec.width {
            for slot in 0..k {
                let (fx, fy) = match kind {
                    LayoutKind::Center => (0.5, 0.5),
                    LayoutKind::Grid => {
                        let (a, b) = (slot % side, slot / side);
                        ((a as f64 + 0.5) / side as f64, (b as f64 + 0.5) / side as f64)
                    }
                };
                points.push(Point::new((col as f64 + fx) * s, (row as f64 + fy) * s));
            }
        }
    }
    Ok(ReferenceLayout { kind, points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    /// Offset scale in px per offset unit.
    pub gamma: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA }
    }
}

/// Trainable per-proposal state over a fixed reference layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalModel {
    pub spec: FeatureGridSpec,
    pub layout: ReferenceLayout,
    /// Unitless `(dx, dy)` offsets.
    pub offsets: Vec<[f64; 2]>,
    /// `(background, head)` pre-softmax scores.
    pub logits: Vec<[f64; 2]>,
}

impl ProposalModel {
    /// Model with zero offsets and zero logits (every confidence 0.5).
    pub fn new(spec: FeatureGridSpec, kind: LayoutKind) -> Result<Self> {
        let layout = make_layout(&spec, kind)?;
        let m = layout.points.len();
        Ok(Self {
            spec,
            layout,
            offsets: vec![[0.0; 2]; m],
            logits: vec![[0.0; 2]; m],
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.spec.num_proposals();
        if self.layout.points.len() != m || self.offsets.len() != m || self.logits.len() != m {
            return Err(Error::param(
                "model",
                "layout, offsets and logits must all hold H*W*K entries",
            ));
        }
        let finite = |v: &[f64; 2]| v.iter().all(|x| x.is_finite());
        if !self.offsets.iter().all(finite) || !self.logits.iter().all(finite) {
            return Err(Error::param("model", "offsets and logits must be finite"));
        }
        Ok(())
    }
}

/// Softmax probability of the head class.
#[inline]
pub fn head_probability(logits: [f64; 2]) -> f64 {
    let z = logits[1] - logits[0];
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Proposal coordinates `R_k + gamma * offset` and head confidences.
/// Points are not clipped to the image.
pub fn decode(model: &ProposalModel, params: &DecodeParams) -> Vec<Prediction> {
    model
        .layout
        .points
        .iter()
        .zip(&model.offsets)
        .zip(&model.logits)
        .map(|((r, d), &logits)| Prediction {
            point: Point::new(r.x + params.gamma * d[0], r.y + params.gamma * d[1]),
            confidence: head_probability(logits),
        })
        .collect()
}

/// Learning targets for a set of proposals, produced by any matching strategy.
///
/// `pairs` lists `(ground_truth, proposal)` supervision pairs. A proposal may
/// appear in several pairs for the many-to-one baselines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetAssignment {
    pub pairs: Vec<(usize, usize)>,
    /// Distinct proposals appearing in `pairs`, ascending.
    pub positives: Vec<usize>,
    /// All other proposals, ascending.
    pub negatives: Vec<usize>,
}

impl TargetAssignment {
    pub fn from_pairs(pairs: Vec<(usize, usize)>, num_proposals: usize) -> Self {
        let mut positive = vec![false; num_proposals];
        for &(_, j) in &pairs {
            positive[j] = true;
        }
        let (positives, negatives) = (0..num_proposals).partition(|&j| positive[j]);
        Self {
            pairs,
            positives,
            negatives,
        }
    }

    /// Ground-truth points that can be told apart by their proposals:
    /// `min(distinct positives, distinct supervised ground truth)`.
    pub fn distinct_matched_gt(&self) -> usize {
        self.positives.len().min(self.matched_gt())
    }

    fn matched_gt(&self) -> usize {
        let mut gts: Vec<usize> = self.pairs.iter().map(|&(i, _)| i).collect();
        gts.sort_unstable();
        gts.dedup();
        gts.len()
    }
}

impl From<&MatchResult> for TargetAssignment {
    fn from(m: &MatchResult) -> Self {
        Self {
            pairs: m.assignment.iter().copied().enumerate().collect(),
            positives: m.positives.clone(),
            negatives: m.negatives.clone(),
        }
    }
}

fn nearest(from: Point, candidates: impl Iterator<Item = Point>) -> Option<(usize, f64)> {
    candidates
        .map(|c| euclidean_distance(from, c))
        .enumerate()
        .fold(None, |best, (j, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((j, d)),
        })
}

/// Each ground-truth point takes its nearest proposal; proposals may be shared.
pub fn assign_nearest_proposal(gt: &[Point], proposals: &[Prediction]) -> Result<TargetAssignment> {
    if proposals.is_empty() && !gt.is_empty() {
        return Err(Error::InsufficientProposals {
            gt: gt.len(),
            proposals: 0,
        });
    }
    let pairs = gt
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| nearest(p, proposals.iter().map(|q| q.point)).map(|(j, _)| (i, j)))
        .collect();
    Ok(TargetAssignment::from_pairs(pairs, proposals.len()))
}

/// Each proposal takes its nearest ground-truth point when it lies within
/// `neg_threshold` px, otherwise it is negative.
pub fn assign_nearest_gt(gt: &[Point], proposals: &[Prediction], neg_threshold: f64) -> Result<TargetAssignment> {
    if neg_threshold.is_nan() || neg_threshold <= 0.0 {
        return Err(Error::param("neg_threshold", "must be positive"));
    }
    let pairs = proposals
        .iter()
        .enumerate()
        .filter_map(|(j, q)| match nearest(q.point, gt.iter().copied()) {
            Some((i, d)) if d <= neg_threshold => Some((i, j)),
            _ => None,
        })
        .collect();
    Ok(TargetAssignment::from_pairs(pairs, proposals.len()))
}

/// Negative threshold used by the nearest-ground-truth baseline: 1.5 strides.
pub fn default_neg_threshold(spec: &FeatureGridSpec) -> f64 {
    1.5 * spec.stride as f64
}
