//! Scene files.
//!
//! Ground truth is JSONL with one `{"id": "<string>", "points": [[x, y], ...]}`
//! object per line; predictions use `[x, y, confidence]` triples. Scenes are
//! joined by id: a prediction id missing from the ground truth is an error,
//! a ground-truth id without predictions predicts nothing.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crowdpoint::{Point, Prediction, Scene};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
struct Record {
    id: String,
    points: Vec<Vec<f64>>,
}

fn read_records(path: &Path, width: usize) -> Result<Vec<Record>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), lineno + 1);
        let record: Record = serde_json::from_str(line).map_err(|e| CliError::input(format!("{}: {e}", at())))?;
        if record.id.is_empty() {
            return Err(CliError::input(format!("{}: empty scene id", at())));
        }
        if !seen.insert(record.id.clone()) {
            return Err(CliError::input(format!("{}: duplicate scene id `{}`", at(), record.id)));
        }
        for (k, p) in record.points.iter().enumerate() {
            if p.len() != width {
                return Err(CliError::input(format!(
                    "{}: point {k} has {} values, expected {width}",
                    at(),
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(CliError::input(format!("{}: point {k} is not finite", at())));
            }
            if width == 3 && !(0.0..=1.0).contains(&p[2]) {
                return Err(CliError::input(format!(
                    "{}: point {k} confidence outside [0, 1]",
                    at()
                )));
            }
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<Scene>, CliError> {
    Ok(read_records(path, 2)?
        .into_iter()
        .map(|r| Scene::new(r.id, r.points.iter().map(|p| Point::new(p[0], p[1])).collect()))
        .collect())
}

pub fn read_predictions(path: &Path) -> Result<Vec<(String, Vec<Prediction>)>, CliError> {
    Ok(read_records(path, 3)?
        .into_iter()
        .map(|r| {
            (
                r.id,
                r.points.iter().map(|p| Prediction::new(p[0], p[1], p[2])).collect(),
            )
        })
        .collect())
}

/// Attaches predictions to ground-truth scenes by id, keeping ground-truth order.
pub fn join(mut scenes: Vec<Scene>, predictions: Vec<(String, Vec<Prediction>)>) -> Result<Vec<Scene>, CliError> {
    let index: HashMap<String, usize> = scenes.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
    for (id, preds) in predictions {
        let &i = index
            .get(&id)
            .ok_or_else(|| CliError::input(format!("prediction scene `{id}` has no ground truth")))?;
        scenes[i].predictions = Some(preds);
    }
    for s in &mut scenes {
        s.predictions.get_or_insert_with(Vec::new);
    }
    Ok(scenes)
}

fn number(v: f64) -> String {
    serde_json::to_string(&v).expect("finite numbers serialize")
}

fn line(id: &str, points: impl Iterator<Item = String>) -> String {
    let id = serde_json::to_string(id).expect("strings serialize");
    format!(
        "{{\"id\": {id}, \"points\": [{}]}}\n",
        points.collect::<Vec<_>>().join(", ")
    )
}

pub fn ground_truth_line(scene: &Scene) -> String {
    line(
        &scene.id,
        scene
            .ground_truth
            .iter()
            .map(|p| format!("[{}, {}]", number(p.x), number(p.y))),
    )
}

pub fn prediction_line(id: &str, predictions: &[Prediction]) -> String {
    line(
        id,
        predictions.iter().map(|p| {
            format!(
                "[{}, {}, {}]",
                number(p.point.x),
                number(p.point.y),
                number(p.confidence)
            )
        }),
    )
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}
