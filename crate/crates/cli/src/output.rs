//! Serialized forms of command results. Column orders here are the ones
//! documented in FORMATS.md and in `--help`.

use std::io::Write;

use bsgs::design::GroupStructure;
use bsgs::splicing::FitReport;
use bsgs::study::{GroupFrequency, ReplicateOutcome, ScalingPoint};
use serde::Serialize;

pub const SIMULATE_COLUMNS: [&str; 17] = [
    "replicate",
    "seed",
    "status",
    "tp",
    "fp",
    "tn",
    "fn",
    "tpr",
    "fpr",
    "mcc",
    "gse",
    "reee",
    "selected_size",
    "max_iterations",
    "selected",
    "error",
    "runtime_seconds",
];

pub const STABILITY_COLUMNS: [&str; 4] = ["group", "label", "count", "frequency"];

pub const SCALING_COLUMNS: [&str; 8] = [
    "component",
    "value",
    "n",
    "J",
    "K",
    "reps",
    "mean_selected",
    "median_runtime_seconds",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn labels(structure: &GroupStructure, ids: &[usize]) -> Vec<String> {
    ids.iter()
        .map(|&j| structure.label(j).to_string())
        .collect()
}

pub fn write_simulation_csv<W: Write>(
    out: W,
    rows: &[ReplicateOutcome],
    structure: &GroupStructure,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIMULATE_COLUMNS)?;
    for row in rows {
        let mut rec = vec![row.replicate.to_string(), row.seed.to_string()];
        match &row.result {
            Ok(m) => {
                let c = m.metrics.confusion;
                rec.extend([
                    "ok".to_string(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.tn.to_string(),
                    c.fn_.to_string(),
                    opt(m.metrics.tpr),
                    opt(m.metrics.fpr),
                    m.metrics.mcc.to_string(),
                    m.metrics.gse.to_string(),
                    opt(m.metrics.reee),
                    m.selected.len().to_string(),
                    m.max_iterations.to_string(),
                    labels(structure, &m.selected).join(";"),
                    String::new(),
                    m.runtime_seconds.to_string(),
                ]);
            }
            Err(e) => {
                rec.push("error".to_string());
                rec.extend(std::iter::repeat_n(String::new(), 12));
                rec.push(e.clone());
                rec.push(String::new());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stability_csv<W: Write>(out: W, rows: &[GroupFrequency]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STABILITY_COLUMNS)?;
    for f in rows {
        w.write_record([
            (f.group + 1).to_string(),
            f.label.clone(),
            f.count.to_string(),
            f.frequency.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scaling_csv<W: Write>(out: W, rows: &[ScalingPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCALING_COLUMNS)?;
    for p in rows {
        w.write_record([
            p.component.name().to_string(),
            p.value.to_string(),
            p.n.to_string(),
            p.num_groups.to_string(),
            p.group_size.to_string(),
            p.reps.to_string(),
            p.mean_selected.to_string(),
            p.median_runtime_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub support: Vec<String>,
    pub loss: f64,
    pub exchanged: Option<usize>,
}

#[derive(Serialize)]
pub struct Coefficient {
    pub column: String,
    pub group: String,
    pub value: f64,
}

/// JSON body of `fit`.
#[derive(Serialize)]
pub struct FitJson {
    pub version: &'static str,
    pub method: String,
    pub size: usize,
    pub support: Vec<String>,
    pub num_predictors: usize,
    pub coefficients: Vec<Coefficient>,
    pub intercept: f64,
    pub loss: f64,
    pub gic: Option<f64>,
    pub bic: Option<f64>,
    pub threshold: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<PathEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<bsgs::metrics::MetricsRecord>,
}

#[derive(Serialize)]
pub struct PathEntry {
    #[serde(rename = "T")]
    pub size: usize,
    pub loss: f64,
    pub gic: f64,
    pub bic: f64,
    pub num_predictors: usize,
    pub support: Vec<String>,
}

impl FitJson {
    pub fn new(
        method: &str,
        report: &FitReport,
        structure: &GroupStructure,
        column_names: &[String],
    ) -> Self {
        let mut coefficients = Vec::new();
        for &j in &report.support {
            for &c in structure.group(j) {
                coefficients.push(Coefficient {
                    column: column_names[c].clone(),
                    group: structure.label(j).to_string(),
                    value: report.beta_original[c],
                });
            }
        }
        Self {
            version: crate::VERSION,
            method: method.to_string(),
            size: report.size(),
            support: labels(structure, &report.support),
            num_predictors: report.num_predictors,
            coefficients,
            intercept: report.intercept,
            loss: report.loss,
            gic: report.gic,
            bic: report.bic,
            threshold: report.threshold,
            iterations: report.iterations,
            trace: report
                .trace
                .iter()
                .map(|t| TraceEntry {
                    iteration: t.iteration,
                    support: labels(structure, &t.active),
                    loss: t.loss,
                    exchanged: t.exchanged,
                })
                .collect(),
            path: Vec::new(),
            prediction_error: None,
            metrics: None,
        }
    }

    pub fn with_path(
        mut self,
        path: &[bsgs::selector::CriterionRecord],
        structure: &GroupStructure,
    ) -> Self {
        self.path = path
            .iter()
            .map(|r| PathEntry {
                size: r.size,
                loss: r.loss,
                gic: r.gic,
                bic: r.bic,
                num_predictors: r.num_predictors,
                support: labels(structure, &r.support),
            })
            .collect();
        self
    }
}

pub fn support_labels(structure: &GroupStructure, ids: &[usize]) -> Vec<String> {
    labels(structure, ids)
}
