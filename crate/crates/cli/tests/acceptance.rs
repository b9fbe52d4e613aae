//! Acceptance run: one PASS/FAIL line per headline criterion.
//!
//! Run alone with `cargo test -p crowdpoint-cli --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use crowdpoint::assignment::{hungarian_match, CostMatrix};
use crowdpoint::geometry::{Point, Scene};
use crowdpoint::metrics::{count_scene, mae_mse, nap_evaluate, NapConfig};
use crowdpoint::proposal::{decode, DecodeParams, FeatureGridSpec, LayoutKind, ProposalModel};
use crowdpoint::synth::{corrupt, generate, Corruption, SceneKind, SceneRecipe, SplitMix64};
use crowdpoint::trainer::{assign_targets, fit_scene, loss, loss_gradients, LossParams, Strategy, TrainConfig};
use crowdpoint::{euclidean_distance, Prediction};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn crowdpoint(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_crowdpoint"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn report_value(report: &str, key: &str) -> Result<usize, String> {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no integer `{key}` in report"))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hungarian_optimality() -> Outcome {
    fn brute(costs: &[Vec<f64>], m: usize, row: usize, used: &mut [bool]) -> f64 {
        if row == costs.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                best = best.min(costs[row][j] + brute(costs, m, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    let start = Instant::now();
    let mut rng = SplitMix64::new(31337);
    let mut exact = 0;
    for _ in 0..1000 {
        let m = 1 + (rng.next_u64() % 9) as usize;
        let n = ((rng.next_u64() % (m as u64 + 1)) as usize).min(7);
        let costs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| (rng.next_u64() % 19) as f64 - 9.0).collect())
            .collect();
        let matrix = CostMatrix::new(n, m, costs.concat()).map_err(|e| e.to_string())?;
        let total = hungarian_match(&matrix).map_err(|e| e.to_string())?.total_cost;
        if total == brute(&costs, m, 0, &mut vec![false; m]) {
            exact += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        exact == 1000 && elapsed < Duration::from_secs(10),
        format!("{exact}/1000 exact totals in {elapsed:.2?}"),
    )
}

fn gradient_correctness() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = SplitMix64::new(4242);
    let (params, dp) = (LossParams::default(), DecodeParams::default());
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (h, w, k) = (
            1 + (rng.next_u64() % 3) as usize,
            1 + (rng.next_u64() % 3) as usize,
            [1, 4][(rng.next_u64() % 2) as usize],
        );
        let spec = FeatureGridSpec::new(h, w, 8, k).map_err(|e| e.to_string())?;
        let mut model = ProposalModel::new(spec, LayoutKind::Grid).map_err(|e| e.to_string())?;
        for (d, l) in model.offsets.iter_mut().zip(model.logits.iter_mut()) {
            *d = [0.05 * rng.next_gaussian(), 0.05 * rng.next_gaussian()];
            *l = [2.0 * rng.next_gaussian(), 2.0 * rng.next_gaussian()];
        }
        let n = (rng.next_u64() % spec.num_proposals() as u64) as usize;
        let gt = (0..n)
            .map(|_| Point::new(rng.next_f64() * (8 * w) as f64, rng.next_f64() * (8 * h) as f64))
            .collect();
        let scene = Scene::new("g", gt);
        let targets = assign_targets(Strategy::OneToOne, &scene.ground_truth, &decode(&model, &dp), &params)
            .map_err(|e| e.to_string())?;
        let grads = loss_gradients(&scene, &model, &dp, &targets, &params).map_err(|e| e.to_string())?;
        let f = |m: &ProposalModel| {
            loss(&scene, m, &dp, &targets, &params)
                .map(|l| l.total)
                .unwrap_or(f64::NAN)
        };
        for j in 0..model.len() {
            for c in 0..2 {
                for (is_offset, analytic) in [(true, grads.offsets[j][c]), (false, grads.logits[j][c])] {
                    let (mut plus, mut minus) = (model.clone(), model.clone());
                    if is_offset {
                        plus.offsets[j][c] += H;
                        minus.offsets[j][c] -= H;
                    } else {
                        plus.logits[j][c] += H;
                        minus.logits[j][c] -= H;
                    }
                    let numeric = (f(&plus) - f(&minus)) / (2.0 * H);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
    }
    check(
        worst < 1e-5,
        format!("100 scene/model pairs, worst relative error {worst:.2e}"),
    )
}

fn corrupted(seed: u64, n: usize, jitter: f64, drop: f64, dup: f64) -> Result<Scene, String> {
    let kind = match seed % 3 {
        0 => SceneKind::Uniform,
        1 => SceneKind::DensityGradient,
        _ => SceneKind::GaussianClusters {
            cluster_count: 3,
            spread: 12.0,
        },
    };
    let scene = generate(&SceneRecipe {
        kind,
        n_points: n,
        width: 160.0,
        height: 120.0,
        seed,
    })
    .map_err(|e| e.to_string())?;
    corrupt(
        &scene,
        &Corruption {
            jitter_sigma: jitter,
            drop_rate: drop,
            dup_rate: dup,
            seed: seed ^ 0x5EED,
        },
    )
    .map_err(|e| e.to_string())
}

fn metric_identities() -> Outcome {
    let cfg = NapConfig::default();
    let perfect: Vec<Scene> = (0..10)
        .map(|s| corrupted(s, 20 + s as usize, 0.0, 0.0, 0.0))
        .collect::<Result<_, _>>()?;
    let report = nap_evaluate(&perfect, &cfg).map_err(|e| e.to_string())?;
    let perfect_ap = report.ap == 1.0 && report.ap_per_delta.iter().all(|&(_, ap)| ap == 1.0);
    let counts: Vec<usize> = perfect.iter().map(|s| count_scene(s, cfg.count_threshold)).collect();
    let truths: Vec<usize> = perfect.iter().map(|s| s.ground_truth.len()).collect();
    let (mae, mse) = mae_mse(&counts, &truths).map_err(|e| e.to_string())?;
    let empty: Vec<Scene> = perfect.iter().map(|s| s.clone().with_predictions(vec![])).collect();
    let empty_ap = nap_evaluate(&empty, &cfg).map_err(|e| e.to_string())?.ap;
    check(
        perfect_ap && mae == 0.0 && mse == 0.0 && empty_ap == 0.0,
        format!("perfect nAP {} MAE {mae} MSE {mse}; empty nAP {empty_ap}", report.ap),
    )
}

fn scale_invariance() -> Outcome {
    let cfg = NapConfig::default();
    let mut identical = 0;
    for seed in 0..50 {
        let scene = corrupted(seed, 30, 3.0, 0.1, 0.1)?;
        let base = nap_evaluate(std::slice::from_ref(&scene), &cfg).map_err(|e| e.to_string())?;
        let scaled = nap_evaluate(&[scene.scaled(2.7)], &cfg).map_err(|e| e.to_string())?;
        let same = |a: &[(f64, f64)], b: &[(f64, f64)]| a.iter().zip(b).all(|(x, y)| x.1.to_bits() == y.1.to_bits());
        if base.ap.to_bits() == scaled.ap.to_bits() && same(&base.ap_per_delta, &scaled.ap_per_delta) {
            identical += 1;
        }
    }
    check(
        identical == 50,
        format!("{identical}/50 scenes bit-identical under x2.7"),
    )
}

fn strategy_counts() -> Outcome {
    let start = Instant::now();
    let (mut exact, mut near, mut over, mut under) = (0, 0, 0, 0);
    for seed in 0..20u64 {
        let seed = seed.to_string();
        let run = |strategy: &str| crowdpoint(&["train-demo", "--strategy", strategy, "--seed", &seed]);
        let one = run("one2one")?;
        match report_value(&one, "count")? {
            30 => exact += 1,
            29 | 31 => near += 1,
            _ => {}
        }
        if report_value(&run("nearest-gt")?, "count")? > 30 {
            over += 1;
        }
        if report_value(&run("nearest-proposal")?, "distinct_gt")? < 30 {
            under += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        exact >= 18 && exact + near == 20 && over >= 15 && under >= 15 && elapsed < Duration::from_secs(120),
        format!(
            "one2one count=30 on {exact}/20 (+-1 on {near}); nearest-gt >30 on {over}/20; \
             nearest-proposal <30 distinct on {under}/20; {elapsed:.1?}"
        ),
    )
}

fn single_point_convergence() -> Outcome {
    let spec = FeatureGridSpec::new(4, 4, 8, 1).map_err(|e| e.to_string())?;
    let scene = Scene::new("single", vec![Point::new(12.0, 12.0)]);
    let cfg = TrainConfig {
        steps: 500,
        seed: 17,
        layout: LayoutKind::Center,
        ..TrainConfig::default()
    };
    let fit = fit_scene(&scene, spec, &cfg, &LossParams::default(), Strategy::OneToOne).map_err(|e| e.to_string())?;
    let preds = decode(&fit.model, &cfg.decode);
    let &(_, j) = fit.final_targets.pairs.first().ok_or("no match")?;
    let p: Prediction = preds[j];
    let dist = euclidean_distance(p.point, scene.ground_truth[0]);
    check(
        dist < 0.5 && p.confidence > 0.9,
        format!("distance {dist:.2e} px, confidence {:.4} after 500 steps", p.confidence),
    )
}

fn sweep_monotone() -> Outcome {
    let cfg = NapConfig::default();
    let mut scenes: Vec<Vec<Scene>> = (0..20)
        .map(|s| corrupted(s, 40, 2.5, 0.1, 0.1).map(|s| vec![s]))
        .collect::<Result<_, _>>()?;
    let gt = crowdpoint_cli::io::read_ground_truth(&fixtures().join("gt.jsonl")).map_err(|e| e.to_string())?;
    let preds = crowdpoint_cli::io::read_predictions(&fixtures().join("pred.jsonl")).map_err(|e| e.to_string())?;
    scenes.push(crowdpoint_cli::io::join(gt, preds).map_err(|e| e.to_string())?);
    let mut monotone = 0;
    for set in &scenes {
        let report = nap_evaluate(set, &cfg).map_err(|e| e.to_string())?;
        if report.ap_per_delta.windows(2).all(|w| w[0].1 <= w[1].1) {
            monotone += 1;
        }
    }
    check(
        monotone == scenes.len(),
        format!(
            "{monotone}/{} corrupted fixtures non-decreasing over 0.05..0.50",
            scenes.len()
        ),
    )
}

fn duplicate_punishment() -> Outcome {
    let (gt, clean, dup) = (
        fixtures().join("gt.jsonl"),
        fixtures().join("pred.jsonl"),
        fixtures().join("pred_dup.jsonl"),
    );
    let ap = |pred: &Path| -> Result<f64, String> {
        let report = crowdpoint(&["eval", "--gt", gt.to_str().unwrap(), "--pred", pred.to_str().unwrap()])?;
        report
            .lines()
            .find_map(|l| l.strip_prefix("ap="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| "no ap in report".to_string())
    };
    let (a, b) = (ap(&clean)?, ap(&dup)?);
    check(b < a, format!("shipped fixture AP@0.5 {a} -> {b} with duplicates"))
}

fn golden_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let mut same = true;
    for round in ["a", "b"] {
        let (gt, pred, csv) = (
            path(&format!("gt-{round}")),
            path(&format!("pred-{round}")),
            path(&format!("ap-{round}")),
        );
        crowdpoint(&[
            "gen",
            "--kind",
            "clusters",
            "--n",
            "25",
            "--width",
            "160",
            "--height",
            "120",
            "--clusters",
            "3",
            "--spread",
            "10",
            "--seed",
            "100",
            "--scenes",
            "8",
            "--jitter",
            "2",
            "--drop",
            "0.1",
            "--pred-seed",
            "500",
            "--out",
            &gt,
            "--pred-out",
            &pred,
        ])?;
        let report = crowdpoint(&["eval", "--gt", &gt, "--pred", &pred, "--out-csv", &csv])?;
        let read = |p: &str| fs::read(p).unwrap_or_default();
        same &= read(&gt) == fs::read(fixtures().join("gt.jsonl")).map_err(|e| e.to_string())?
            && read(&pred) == fs::read(fixtures().join("pred.jsonl")).map_err(|e| e.to_string())?
            && read(&csv) == fs::read(fixtures().join("ap.csv")).map_err(|e| e.to_string())?
            && report.as_bytes() == fs::read(fixtures().join("eval_report.txt")).map_err(|e| e.to_string())?;
    }
    check(
        same,
        "gen and eval outputs byte-identical to the frozen fixtures on two runs".into(),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("hungarian optimality", hungarian_optimality),
        ("gradient correctness", gradient_correctness),
        ("metric identities", metric_identities),
        ("scale invariance", scale_invariance),
        ("matching strategy counts", strategy_counts),
        ("single-point convergence", single_point_convergence),
        ("delta-sweep shape", sweep_monotone),
        ("duplicate punishment", duplicate_punishment),
        ("golden determinism", golden_determinism),
    ];
    let mut failures = 0;
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
