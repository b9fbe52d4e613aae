//! Matching loss, its analytic gradients and a per-scene optimizer.
//!
//! For ground truth `p_i` matched to proposal `ξ(i)` the loss is
//!
//! ```text
//! L_cls = -(1/M) [ Σ_pos ln ĉ_j + λ1 Σ_neg ln(1 - ĉ_j) ]
//! L_loc =  (1/N) Σ_i ||p_i - p̂_ξ(i)||²
//! L     =  L_cls + λ2 L_loc
//! ```
//!
//! The assignment is held fixed when differentiating.

use crate::assignment::{one_to_one_assign, MatchConfig, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::geometry::{Point, Prediction, Scene};
use crate::metrics::{count_scene, DEFAULT_COUNT_THRESHOLD};
use crate::proposal::{
    assign_nearest_gt, assign_nearest_proposal, decode, default_neg_threshold, head_probability, DecodeParams,
    FeatureGridSpec, LayoutKind, ProposalModel, TargetAssignment,
};
use crate::synth::SplitMix64;

/// Log arguments are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    /// Weight of the negative-proposal classification term.
    pub lambda1: f64,
    /// Weight of the regression term.
    pub lambda2: f64,
    /// Distance weight of the matching cost.
    pub tau: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 2e-4,
            tau: DEFAULT_TAU,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig { tau: self.tau }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_loc: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub offsets: Vec<[f64; 2]>,
    pub logits: Vec<[f64; 2]>,
}

/// How ground-truth targets are assigned to proposals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Hungarian matching on the confidence-aware cost.
    OneToOne,
    /// Every proposal within `neg_threshold` px of a ground truth regresses to it.
    NearestGt { neg_threshold: f64 },
    /// Every ground truth takes its nearest proposal.
    NearestProposal,
}

impl Strategy {
    /// Nearest-ground-truth baseline with its default threshold for `spec`.
    pub fn nearest_gt_for(spec: &FeatureGridSpec) -> Self {
        Strategy::NearestGt {
            neg_threshold: default_neg_threshold(spec),
        }
    }
}

pub fn assign_targets(
    strategy: Strategy,
    gt: &[Point],
    proposals: &[Prediction],
    params: &LossParams,
) -> Result<TargetAssignment> {
    match strategy {
        Strategy::OneToOne => Ok(TargetAssignment::from(&one_to_one_assign(
            gt,
            proposals,
            &params.match_config(),
        )?)),
        Strategy::NearestGt { neg_threshold } => assign_nearest_gt(gt, proposals, neg_threshold),
        Strategy::NearestProposal => assign_nearest_proposal(gt, proposals),
    }
}

fn ln_clamped(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()
}

fn in_clamp_range(p: f64) -> bool {
    (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p)
}

fn check_targets(model: &ProposalModel, scene: &Scene, targets: &TargetAssignment) -> Result<()> {
    let (n, m) = (scene.ground_truth.len(), model.len());
    if targets.positives.len() + targets.negatives.len() != m {
        return Err(Error::param(
            "targets",
            "positives and negatives must partition the proposals",
        ));
    }
    if targets.pairs.iter().any(|&(i, j)| i >= n || j >= m) {
        return Err(Error::param("targets", "pair index out of range"));
    }
    Ok(())
}

/// Loss of `model` on `scene` under fixed `targets`.
///
/// Regression is averaged over the supervision pairs (the `N` matches for
/// one-to-one matching) and is 0 without pairs; a scene without ground truth
/// keeps only the negative classification term.
pub fn loss(
    scene: &Scene,
    model: &ProposalModel,
    decode_params: &DecodeParams,
    targets: &TargetAssignment,
    params: &LossParams,
) -> Result<LossBreakdown> {
    check_targets(model, scene, targets)?;
    let preds = decode(model, decode_params);
    let m = model.len() as f64;
    let pos: f64 = targets.positives.iter().map(|&j| ln_clamped(preds[j].confidence)).sum();
    let neg: f64 = targets
        .negatives
        .iter()
        .map(|&j| ln_clamped(background_probability(model.logits[j])))
        .sum();
    let l_cls = -(pos + params.lambda1 * neg) / m;
    let l_loc = if targets.pairs.is_empty() {
        0.0
    } else {
        let sq: f64 = targets
            .pairs
            .iter()
            .map(|&(i, j)| {
                let (gt, p) = (scene.ground_truth[i], preds[j].point);
                (gt.x - p.x).powi(2) + (gt.y - p.y).powi(2)
            })
            .sum();
        sq / targets.pairs.len() as f64
    };
    Ok(LossBreakdown {
        l_cls,
        l_loc,
        total: l_cls + params.lambda2 * l_loc,
    })
}

fn background_probability(logits: [f64; 2]) -> f64 {
    head_probability([logits[1], logits[0]])
}

/// Gradients of [`loss`] with respect to offsets and logits.
pub fn loss_gradients(
    scene: &Scene,
    model: &ProposalModel,
    decode_params: &DecodeParams,
    targets: &TargetAssignment,
    params: &LossParams,
) -> Result<Gradients> {
    check_targets(model, scene, targets)?;
    let preds = decode(model, decode_params);
    let m = model.len() as f64;
    let mut grads = Gradients {
        offsets: vec![[0.0; 2]; model.len()],
        logits: vec![[0.0; 2]; model.len()],
    };
    // d ln c / dz = 1 - c and d ln(1 - c) / dz = -c, with z = head - background.
    for &j in &targets.positives {
        let c = preds[j].confidence;
        if in_clamp_range(c) {
            let dz = -(1.0 - c) / m;
            grads.logits[j] = [-dz, dz];
        }
    }
    for &j in &targets.negatives {
        let c = preds[j].confidence;
        if in_clamp_range(background_probability(model.logits[j])) {
            let dz = params.lambda1 * c / m;
            grads.logits[j] = [-dz, dz];
        }
    }
    if !targets.pairs.is_empty() {
        let scale = params.lambda2 * 2.0 * decode_params.gamma / targets.pairs.len() as f64;
        for &(i, j) in &targets.pairs {
            let (gt, p) = (scene.ground_truth[i], preds[j].point);
            grads.offsets[j][0] += scale * (p.x - gt.x);
            grads.offsets[j][1] += scale * (p.y - gt.y);
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    GradientDescent {
        /// Halve the learning rate and retry whenever a step would raise the loss.
        backtrack: bool,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub layout: LayoutKind,
    pub decode: DecodeParams,
    /// Standard deviation of the initial offsets and logits.
    pub init_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            steps: 300,
            optimizer: Optimizer::adam(),
            seed: 0,
            layout: LayoutKind::Grid,
            decode: DecodeParams::default(),
            init_sigma: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if !(self.decode.gamma > 0.0 && self.decode.gamma.is_finite()) {
            return Err(Error::param("gamma", "must be positive"));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::param("init_sigma", "must be non-negative"));
        }
        Ok(())
    }
}

/// State of the model at one optimizer step, before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: LossBreakdown,
    /// Decoded proposals with confidence above 0.5.
    pub count: usize,
    /// Distinct proposals that received a target.
    pub positives: usize,
    /// Ground-truth points represented by distinct proposals.
    pub distinct_gt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ProposalModel,
    /// One record per step plus a final record for the trained model.
    pub history: Vec<StepRecord>,
    /// Targets assigned to the trained model.
    pub final_targets: TargetAssignment,
    pub learning_rate: f64,
}

impl FitResult {
    pub fn last(&self) -> &StepRecord {
        self.history.last().expect("history holds at least the final record")
    }
}

/// Model over `spec` with seeded Gaussian offsets and logits.
pub fn init_model(spec: FeatureGridSpec, cfg: &TrainConfig) -> Result<ProposalModel> {
    let mut model = ProposalModel::new(spec, cfg.layout)?;
    let mut rng = SplitMix64::new(cfg.seed);
    for (d, l) in model.offsets.iter_mut().zip(model.logits.iter_mut()) {
        for v in d.iter_mut().chain(l.iter_mut()) {
            *v = cfg.init_sigma * rng.next_gaussian();
        }
    }
    Ok(model)
}

struct Evaluation {
    targets: TargetAssignment,
    loss: LossBreakdown,
    record: StepRecord,
}

fn evaluate(
    scene: &Scene,
    model: &ProposalModel,
    cfg: &TrainConfig,
    params: &LossParams,
    strategy: Strategy,
    step: usize,
) -> Result<Evaluation> {
    let preds = decode(model, &cfg.decode);
    let targets = assign_targets(strategy, &scene.ground_truth, &preds, params)?;
    let loss = loss(scene, model, &cfg.decode, &targets, params)?;
    let decoded = Scene {
        id: scene.id.clone(),
        ground_truth: Vec::new(),
        predictions: Some(preds),
    };
    let record = StepRecord {
        step,
        loss,
        count: count_scene(&decoded, DEFAULT_COUNT_THRESHOLD),
        positives: targets.positives.len(),
        distinct_gt: targets.distinct_matched_gt(),
    };
    Ok(Evaluation { targets, loss, record })
}

fn apply(model: &mut ProposalModel, grads: &Gradients, lr: f64) {
    for (p, g) in model.offsets.iter_mut().zip(&grads.offsets) {
        p[0] -= lr * g[0];
        p[1] -= lr * g[1];
    }
    for (p, g) in model.logits.iter_mut().zip(&grads.logits) {
        p[0] -= lr * g[0];
        p[1] -= lr * g[1];
    }
}

/// Adam moments over the flattened `[offsets, logits]` parameters.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut ProposalModel, grads: &Gradients, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let params = model
            .offsets
            .iter_mut()
            .chain(model.logits.iter_mut())
            .flat_map(|p| p.iter_mut());
        let gs = grads.offsets.iter().chain(&grads.logits).flat_map(|g| g.iter());
        for (((p, &g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

const MAX_BACKTRACKS: usize = 40;

/// Trains a proposal model on one scene: decode, assign targets, compute the
/// loss and its gradients, update. Deterministic for a given configuration.
pub fn fit_scene(
    scene: &Scene,
    spec: FeatureGridSpec,
    cfg: &TrainConfig,
    params: &LossParams,
    strategy: Strategy,
) -> Result<FitResult> {
    cfg.validate()?;
    params.validate()?;
    scene.validate()?;
    let n = scene.ground_truth.len();
    if spec.num_proposals() <= n {
        return Err(Error::InsufficientProposals {
            gt: n,
            proposals: spec.num_proposals(),
        });
    }
    let mut model = init_model(spec, cfg)?;
    let mut adam = AdamState::new(4 * model.len());
    let mut lr = cfg.learning_rate;
    let mut history = Vec::with_capacity(cfg.steps + 1);
    let mut current = evaluate(scene, &model, cfg, params, strategy, 0)?;

    for step in 0..cfg.steps {
        let grads = loss_gradients(scene, &model, &cfg.decode, &current.targets, params)?;
        history.push(current.record.clone());
        match cfg.optimizer {
            Optimizer::Adam { beta1, beta2, eps } => {
                adam.step(&mut model, &grads, lr, beta1, beta2, eps);
                current = evaluate(scene, &model, cfg, params, strategy, step + 1)?;
            }
            Optimizer::GradientDescent { backtrack: false } => {
                apply(&mut model, &grads, lr);
                current = evaluate(scene, &model, cfg, params, strategy, step + 1)?;
            }
            Optimizer::GradientDescent { backtrack: true } => {
                let mut accepted = false;
                for _ in 0..MAX_BACKTRACKS {
                    let mut trial = model.clone();
                    apply(&mut trial, &grads, lr);
                    let next = evaluate(scene, &trial, cfg, params, strategy, step + 1)?;
                    if next.loss.total <= current.loss.total {
                        model = trial;
                        current = next;
                        accepted = true;
                        break;
                    }
                    lr *= 0.5;
                }
                if !accepted {
                    current.record.step = step + 1;
                }
            }
        }
    }
    history.push(current.record.clone());
    Ok(FitResult {
        model,
        history,
        final_targets: current.targets,
        learning_rate: lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposal::FeatureGridSpec;

    fn two_proposal_model() -> ProposalModel {
        // One cell, two slots at the patch center (4, 4).
        ProposalModel::new(FeatureGridSpec::new(1, 1, 8, 2).unwrap(), LayoutKind::Center).unwrap()
    }

    #[test]
    fn loss_worked_example() {
        let model = two_proposal_model();
        let scene = Scene::new("s", vec![Point::new(4.0, 6.0)]);
        let targets = TargetAssignment::from_pairs(vec![(0, 0)], 2);
        let l = loss(
            &scene,
            &model,
            &DecodeParams::default(),
            &targets,
            &LossParams::default(),
        )
        .unwrap();
        let expected_cls = -(0.5f64.ln() + 0.5 * 0.5f64.ln()) / 2.0;
        assert_eq!(l.l_loc, 4.0);
        assert!((l.l_cls - expected_cls).abs() < 1e-15);
        assert!((l.l_cls - 0.75 * 2f64.ln()).abs() < 1e-15);
        assert!((l.total - (expected_cls + 2e-4 * 4.0)).abs() < 1e-15);
        assert!((l.total - 0.52066).abs() < 1e-5);
    }

    #[test]
    fn loss_vanishes_at_perfect_fit() {
        let mut model = two_proposal_model();
        model.logits[0] = [-40.0, 40.0];
        model.logits[1] = [40.0, -40.0];
        let scene = Scene::new("s", vec![Point::new(4.0, 4.0)]);
        let targets = TargetAssignment::from_pairs(vec![(0, 0)], 2);
        let l = loss(
            &scene,
            &model,
            &DecodeParams::default(),
            &targets,
            &LossParams::default(),
        )
        .unwrap();
        assert!(l.total < 1e-11, "{l:?}");
    }

    #[test]
    fn localization_is_quadratic_in_distance() {
        let model = two_proposal_model();
        let targets = TargetAssignment::from_pairs(vec![(0, 0)], 2);
        let near = Scene::new("s", vec![Point::new(7.0, 8.0)]);
        let far = Scene::new("s", vec![Point::new(10.0, 12.0)]);
        let p = LossParams::default();
        let d = DecodeParams::default();
        let a = loss(&near, &model, &d, &targets, &p).unwrap().l_loc;
        let b = loss(&far, &model, &d, &targets, &p).unwrap().l_loc;
        assert_eq!(b, 4.0 * a);
    }

    #[test]
    fn empty_scene_keeps_negative_term() {
        let model = two_proposal_model();
        let targets = TargetAssignment::from_pairs(vec![], 2);
        let l = loss(
            &Scene::new("s", vec![]),
            &model,
            &DecodeParams::default(),
            &targets,
            &LossParams::default(),
        )
        .unwrap();
        assert_eq!(l.l_loc, 0.0);
        assert!((l.l_cls - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn structural_zero_gradients() {
        let mut model = two_proposal_model();
        model.offsets[1] = [0.3, -0.2];
        let scene = Scene::new("s", vec![Point::new(4.0, 4.0)]);
        let targets = TargetAssignment::from_pairs(vec![(0, 0)], 2);
        let g = loss_gradients(
            &scene,
            &model,
            &DecodeParams::default(),
            &targets,
            &LossParams::default(),
        )
        .unwrap();
        assert_eq!(g.offsets[0], [0.0, 0.0]);
        assert_eq!(g.offsets[1], [0.0, 0.0]);
    }

    #[test]
    fn rejects_malformed_targets() {
        let model = two_proposal_model();
        let scene = Scene::new("s", vec![Point::new(4.0, 4.0)]);
        let bad = TargetAssignment::from_pairs(vec![(0, 5)], 6);
        assert!(loss(&scene, &model, &DecodeParams::default(), &bad, &LossParams::default()).is_err());
    }

    #[test]
    fn fit_requires_more_proposals_than_points() {
        let spec = FeatureGridSpec::new(1, 1, 8, 1).unwrap();
        let scene = Scene::new("s", vec![Point::new(4.0, 4.0)]);
        let err = fit_scene(
            &scene,
            spec,
            &TrainConfig::default(),
            &LossParams::default(),
            Strategy::OneToOne,
        );
        assert!(matches!(err, Err(Error::InsufficientProposals { .. })));
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let p = LossParams {
            lambda1: -1.0,
            ..LossParams::default()
        };
        assert!(p.validate().is_err());
    }
}
