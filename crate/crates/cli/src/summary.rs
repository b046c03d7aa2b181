//! Long-format CSV over every evaluation and importance report in a
//! directory: one row per (report, group, name, metric).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crossgp_core::evaluate::{EvaluationReport, ImportanceReport};
use crossgp_core::featurize::GlycemicClass;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub source: String,
    pub model_kind: String,
    pub report: String,
    pub group: String,
    pub name: String,
    pub metric: String,
    /// Empty when the metric is undefined.
    pub value: Option<f64>,
}

/// Reads `*.json` in `dir` in name order, skipping anything that is not a
/// report. Returns the rows and the files they came from.
pub fn collect(dir: &Path) -> Result<(Vec<Row>, Vec<PathBuf>)> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();

    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) else {
            log::debug!("skipping {}: not JSON", path.display());
            continue;
        };
        let source = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let before = rows.len();
        match value.get("report").and_then(|r| r.as_str()) {
            Some("evaluation") => {
                let r: EvaluationReport =
                    serde_json::from_value(value).with_context(|| path.display().to_string())?;
                evaluation_rows(&source, &r, &mut rows);
            }
            Some("importance") => {
                let r: ImportanceReport =
                    serde_json::from_value(value).with_context(|| path.display().to_string())?;
                importance_rows(&source, &r, &mut rows);
            }
            _ => log::debug!("skipping {}: not a report", path.display()),
        }
        if rows.len() > before {
            sources.push(path);
        }
    }
    Ok((rows, sources))
}

fn evaluation_rows(source: &str, r: &EvaluationReport, out: &mut Vec<Row>) {
    let row = |group: &str, name: &str, metric: &str, value: Option<f64>| Row {
        source: source.to_string(),
        model_kind: r.model_kind.to_string(),
        report: "evaluation".into(),
        group: group.into(),
        name: name.into(),
        metric: metric.into(),
        value,
    };
    for class in GlycemicClass::ALL {
        let m = r.classes.get(class);
        out.push(row("class", class.name(), "precision", m.precision));
        out.push(row("class", class.name(), "f1", m.f1));
        out.push(row("class", class.name(), "recall", m.recall));
    }
    out.push(row("overall", "all", "accuracy", Some(r.overall.accuracy)));
    out.push(row(
        "overall",
        "all",
        "macro_precision",
        r.overall.macro_precision,
    ));
    out.push(row(
        "overall",
        "all",
        "n_examples",
        Some(r.n_examples as f64),
    ));
}

fn importance_rows(source: &str, r: &ImportanceReport, out: &mut Vec<Row>) {
    let method = serde_json::to_value(r.method)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    for s in &r.scores {
        out.push(Row {
            source: source.to_string(),
            model_kind: r.model_kind.to_string(),
            report: "importance".into(),
            group: method.clone(),
            name: s.feature.clone(),
            metric: "score".into(),
            value: Some(s.score),
        });
    }
}

pub fn write(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
