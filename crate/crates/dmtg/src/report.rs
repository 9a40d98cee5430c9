//! CSV and JSON writers for command outputs.

use std::path::Path;

use anyhow::{Context, Result};
use dmtg_core::diffusion::TrainReport;
use dmtg_core::eval::{DiscriminatorKind, EmbeddedPoint, EvalReport, HistBin};
use serde::Serialize;

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

/// One CSV row per item, header taken from the field names.
pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(v: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// `epoch,l_ddim,l_sim,l_style,total`.
pub fn write_train_csv(report: &TrainReport, path: &Path) -> Result<()> {
    write_rows(&report.epochs, path)
}

pub const EVAL_BASE_COLUMNS: [&str; 9] =
    ["model", "protocol", "n_human", "n_model", "jsd", "emd", "mse", "rmse", "cos_sim"];

pub fn eval_csv_header() -> Vec<String> {
    let mut h: Vec<String> = EVAL_BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let prefixes = DiscriminatorKind::ALL.iter().map(|k| k.name()).chain(["mean"]);
    for p in prefixes {
        for m in ["accuracy", "precision", "recall", "f1"] {
            h.push(format!("{p}_{m}"));
        }
    }
    h.push("synthesized_timestamps".into());
    h
}

/// Flat row per report. Discriminators not run leave their cells empty, as
/// does an undefined cosine similarity.
pub fn eval_csv_row(r: &EvalReport) -> Vec<String> {
    let f = |v: f64| v.to_string();
    let mut row = vec![
        r.model.clone(),
        r.protocol.name().to_string(),
        r.n_human.to_string(),
        r.n_model.to_string(),
        f(r.jsd),
        f(r.emd),
        f(r.mse),
        f(r.rmse),
        r.cos_sim.map(f).unwrap_or_default(),
    ];
    for k in DiscriminatorKind::ALL {
        match r.discriminators.iter().find(|d| d.kind == k) {
            Some(d) => row.extend([d.metrics.accuracy, d.metrics.precision, d.metrics.recall, d.metrics.f1].map(f)),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
    }
    let m = &r.mean;
    row.extend([m.accuracy, m.precision, m.recall, m.f1].map(f));
    row.push(r.synthesized_timestamps.to_string());
    row
}

pub fn write_eval_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(eval_csv_header())?;
    for r in reports {
        w.write_record(eval_csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// `id,x,y,label`.
pub fn write_embedding(points: &[EmbeddedPoint], path: &Path) -> Result<()> {
    write_rows(points, path)
}

#[derive(Serialize)]
struct HistRow {
    bin_lo: f64,
    bin_hi: f64,
    count_up: usize,
    count_down: usize,
}

/// `bin_lo,bin_hi,count_up,count_down`.
pub fn write_histogram(bins: &[HistBin], path: &Path) -> Result<()> {
    let rows: Vec<HistRow> =
        bins.iter().map(|b| HistRow { bin_lo: b.lo, bin_hi: b.hi, count_up: b.up, count_down: b.down }).collect();
    write_rows(&rows, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmtg_core::eval::{BinaryMetrics, DiscriminatorScore, ProtocolKind};

    #[test]
    fn eval_row_matches_header() {
        let bm = BinaryMetrics { accuracy: 0.5, precision: 0.25, recall: 1.0, f1: 0.4 };
        let r = EvalReport {
            model: "m".into(),
            protocol: ProtocolKind::Unified,
            n_human: 3,
            n_model: 4,
            jsd: 0.1,
            emd: 0.2,
            mse: 0.3,
            rmse: 0.4,
            cos_sim: None,
            discriminators: vec![DiscriminatorScore { kind: DiscriminatorKind::Logistic, metrics: bm }],
            mean: bm,
            synthesized_timestamps: 7,
        };
        let h = eval_csv_header();
        let row = eval_csv_row(&r);
        assert_eq!(h.len(), row.len());
        let col = |name: &str| row[h.iter().position(|c| c == name).unwrap()].clone();
        assert_eq!(col("protocol"), "unified");
        assert_eq!(col("cos_sim"), "");
        assert_eq!(col("logistic_precision"), "0.25");
        assert_eq!(col("tree_accuracy"), "");
        assert_eq!(col("mean_f1"), "0.4");
        assert_eq!(col("synthesized_timestamps"), "7");
    }
}
