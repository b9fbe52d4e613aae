//! Subcommand implementations. Each writes its artifacts and a stable
//! `key=value` summary to `out`.

use std::io::Write;

use crowdpoint::metrics::{localization_prf, mae_mse, nap_evaluate, pr_curve, NapConfig};
use crowdpoint::proposal::{decode, DecodeParams, FeatureGridSpec, LayoutKind};
use crowdpoint::synth::{corrupt, generate, Corruption, SceneKind, SceneRecipe};
use crowdpoint::trainer::{fit_scene, FitResult, LossParams, Optimizer, Strategy, TrainConfig};
use crowdpoint::Scene;

use crate::args::{
    EvalArgs, GenArgs, KindArg, LayoutArg, MatchDemoArgs, OptimizerArg, RecipeArgs, StrategyArg, TrainArgs,
    TrainDemoArgs,
};
use crate::error::CliError;
use crate::format::{sig6, Cell, Csv};
use crate::{io, svg};

fn emit(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{key}={value}").map_err(|e| CliError::internal(format!("cannot write report: {e}")))
}

pub fn recipe(args: &RecipeArgs, seed: u64) -> SceneRecipe {
    let kind = match args.kind {
        KindArg::Uniform => SceneKind::Uniform,
        KindArg::Gradient => SceneKind::DensityGradient,
        KindArg::Clusters => SceneKind::GaussianClusters {
            cluster_count: args.clusters,
            spread: args.spread,
        },
    };
    SceneRecipe {
        kind,
        n_points: args.n,
        width: args.width,
        height: args.height,
        seed,
    }
}

pub fn gen(args: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corruption = Corruption {
        jitter_sigma: args.jitter,
        drop_rate: args.drop,
        dup_rate: args.dup,
        seed: args.pred_seed,
    };
    corruption.validate()?;
    let (mut gt_text, mut pred_text) = (String::new(), String::new());
    let (mut gt_total, mut pred_total) = (0, 0);
    for i in 0..args.scenes as u64 {
        let scene = generate(&recipe(&args.recipe, args.recipe.seed.wrapping_add(i)))?;
        gt_text.push_str(&io::ground_truth_line(&scene));
        gt_total += scene.ground_truth.len();
        if args.pred_out.is_some() {
            let c = Corruption {
                seed: args.pred_seed.wrapping_add(i),
                ..corruption
            };
            let predicted = corrupt(&scene, &c)?;
            pred_text.push_str(&io::prediction_line(&predicted.id, predicted.predictions()));
            pred_total += predicted.predictions().len();
        }
    }
    io::write(&args.out, &gt_text)?;
    emit(out, "scenes", args.scenes)?;
    emit(out, "ground_truth", gt_total)?;
    if let Some(path) = &args.pred_out {
        io::write(path, &pred_text)?;
        emit(out, "predictions", pred_total)?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = NapConfig {
        delta: args.delta,
        k: args.k,
        delta_sweep: args.delta_sweep.clone(),
        fallback_radius: args.fallback_radius,
        count_threshold: args.threshold,
    };
    cfg.validate()?;
    let gt = io::read_ground_truth(&args.gt)?;
    let predictions = io::read_predictions(&args.pred)?;
    let scenes = io::join(gt, predictions)?;
    if scenes.is_empty() {
        return Err(CliError::input(format!("{}: no scenes", args.gt.display())));
    }

    let report = nap_evaluate(&scenes, &cfg)?;
    let (predicted, truths): (Vec<usize>, Vec<usize>) = report
        .per_scene_counts
        .iter()
        .map(|c| (c.predicted, c.ground_truth))
        .unzip();
    let (mae, mse) = mae_mse(&predicted, &truths)?;
    let prf = localization_prf(&scenes, &cfg, cfg.count_threshold)?;

    emit(out, "scenes", scenes.len())?;
    emit(out, "ground_truth", truths.iter().sum::<usize>())?;
    emit(
        out,
        "predictions",
        scenes.iter().map(|s| s.predictions().len()).sum::<usize>(),
    )?;
    emit(out, "k", cfg.k)?;
    emit(out, "delta", sig6(report.delta))?;
    emit(out, "ap", sig6(report.ap))?;
    for &(delta, ap) in &report.ap_per_delta {
        emit(out, &format!("ap@{}", sig6(delta)), sig6(ap))?;
    }
    emit(out, "nap_mean", sig6(report.nap_mean))?;
    emit(out, "mae", sig6(mae))?;
    emit(out, "mse", sig6(mse))?;
    emit(out, "precision", sig6(prf.precision))?;
    emit(out, "recall", sig6(prf.recall))?;
    emit(out, "f1", sig6(prf.f1))?;

    if let Some(path) = &args.out_csv {
        let mut csv = Csv::new(&["delta", "ap"]);
        for &(delta, ap) in &report.ap_per_delta {
            csv.row(&[Cell::Num(delta), Cell::Num(ap)]);
        }
        io::write(path, &csv.finish())?;
    }
    if let Some(path) = &args.pr_csv {
        let mut csv = Csv::new(&["delta", "recall", "precision"]);
        for &delta in &cfg.delta_sweep {
            for &(recall, precision) in &pr_curve(&scenes, &cfg, delta)?.points {
                csv.row(&[Cell::Num(delta), Cell::Num(recall), Cell::Num(precision)]);
            }
        }
        io::write(path, &csv.finish())?;
    }
    if let Some(path) = &args.counts_csv {
        let mut csv = Csv::new(&["id", "ground_truth", "predicted"]);
        for c in &report.per_scene_counts {
            csv.row(&[Cell::Text(&c.id), Cell::Int(c.ground_truth), Cell::Int(c.predicted)]);
        }
        io::write(path, &csv.finish())?;
    }
    Ok(())
}

struct Training {
    spec: FeatureGridSpec,
    cfg: TrainConfig,
    params: LossParams,
    strategy: Strategy,
}

fn training(args: &TrainArgs, width: f64, height: f64) -> Result<Training, CliError> {
    let spec = FeatureGridSpec::for_image(width, height, args.stride, args.points_per_cell)?;
    let strategy = match args.strategy {
        StrategyArg::OneToOne => Strategy::OneToOne,
        StrategyArg::NearestProposal => Strategy::NearestProposal,
        StrategyArg::NearestGt => match args.neg_threshold {
            Some(neg_threshold) => Strategy::NearestGt { neg_threshold },
            None => Strategy::nearest_gt_for(&spec),
        },
    };
    let optimizer = match args.optimizer {
        OptimizerArg::Adam => Optimizer::adam(),
        OptimizerArg::Gd => Optimizer::GradientDescent { backtrack: false },
        OptimizerArg::GdBacktrack => Optimizer::GradientDescent { backtrack: true },
    };
    let cfg = TrainConfig {
        learning_rate: args.lr,
        steps: args.steps,
        optimizer,
        seed: args.init_seed,
        layout: match args.layout {
            LayoutArg::Grid => LayoutKind::Grid,
            LayoutArg::Center => LayoutKind::Center,
        },
        decode: DecodeParams { gamma: args.gamma },
        init_sigma: args.init_sigma,
    };
    let params = LossParams {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        tau: args.tau,
    };
    Ok(Training {
        spec,
        cfg,
        params,
        strategy,
    })
}

fn history_csv(fit: &FitResult) -> String {
    let mut csv = Csv::new(&["step", "total", "l_cls", "l_loc", "count", "positives", "distinct_gt"]);
    for r in &fit.history {
        csv.row(&[
            Cell::Int(r.step),
            Cell::Num(r.loss.total),
            Cell::Num(r.loss.l_cls),
            Cell::Num(r.loss.l_loc),
            Cell::Int(r.count),
            Cell::Int(r.positives),
            Cell::Int(r.distinct_gt),
        ]);
    }
    csv.finish()
}

fn strategy_name(s: StrategyArg) -> &'static str {
    match s {
        StrategyArg::OneToOne => "one2one",
        StrategyArg::NearestGt => "nearest-gt",
        StrategyArg::NearestProposal => "nearest-proposal",
    }
}

fn summarize(out: &mut dyn Write, scene: &Scene, args: &TrainArgs, fit: &FitResult) -> Result<(), CliError> {
    let last = fit.last();
    emit(out, "scene", &scene.id)?;
    emit(out, "strategy", strategy_name(args.strategy))?;
    emit(out, "ground_truth", scene.ground_truth.len())?;
    emit(out, "proposals", fit.model.len())?;
    emit(out, "steps", last.step)?;
    emit(out, "count", last.count)?;
    emit(out, "positives", last.positives)?;
    emit(out, "distinct_gt", last.distinct_gt)?;
    emit(out, "loss", sig6(last.loss.total))?;
    emit(out, "l_cls", sig6(last.loss.l_cls))?;
    emit(out, "l_loc", sig6(last.loss.l_loc))
}

pub fn match_demo(args: &MatchDemoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scene = generate(&recipe(&args.recipe, args.recipe.seed))?;
    let t = training(&args.train, args.recipe.width, args.recipe.height)?;
    let fit = fit_scene(&scene, t.spec, &t.cfg, &t.params, t.strategy)?;
    if let Some(path) = &args.out_csv {
        io::write(path, &history_csv(&fit))?;
    }
    summarize(out, &scene, &args.train, &fit)
}

pub fn train_demo(args: &TrainDemoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scene = match &args.gt {
        None => generate(&recipe(&args.recipe, args.recipe.seed))?,
        Some(path) => {
            let scenes = io::read_ground_truth(path)?;
            match &args.scene {
                None => scenes.into_iter().next(),
                Some(id) => scenes.into_iter().find(|s| &s.id == id),
            }
            .ok_or_else(|| CliError::input(format!("{}: requested scene not found", path.display())))?
        }
    };
    let (width, height) = (args.recipe.width, args.recipe.height);
    let t = training(&args.train, width, height)?;
    let fit = fit_scene(&scene, t.spec, &t.cfg, &t.params, t.strategy)?;
    let counted: Vec<_> = decode(&fit.model, &t.cfg.decode)
        .into_iter()
        .filter(|p| p.confidence > args.train.threshold)
        .collect();

    if let Some(path) = &args.history_csv {
        io::write(path, &history_csv(&fit))?;
    }
    if let Some(path) = &args.points_out {
        io::write(path, &io::prediction_line(&scene.id, &counted))?;
    }
    if let Some(path) = &args.svg {
        io::write(path, &svg::scatter(width, height, &scene.ground_truth, &counted))?;
    }
    summarize(out, &scene, &args.train, &fit)?;
    emit(out, "counted", counted.len())
}
