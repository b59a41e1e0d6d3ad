//! Detection report files, realisation averaging and the CSV tables behind
//! the delay table and segmentation plots.

use std::path::Path;

use crate::detector::HealthyStats;
use crate::error::{Error, Result};
use crate::experiment::{mean_defined, ComboResult};
use crate::hi::HiKind;
use crate::models::ModelKind;
use crate::nn::TrainHistory;
use crate::segmentation::{Pca2d, TriggerCategory, UnitSignature};

/// One unit's detection outcome in one realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub realisation: usize,
    pub model: ModelKind,
    pub hi: HiKind,
    pub unit: String,
    pub dataset: String,
    pub label: String,
    pub n_true: Option<i64>,
    pub n0: Option<i64>,
    pub d_u: Option<i64>,
    /// `None` when the unit has no ground truth.
    pub false_positive: Option<bool>,
    pub triggered_first: Vec<String>,
}

pub const REPORT_HEADER: [&str; 11] = [
    "realisation",
    "model",
    "hi",
    "unit",
    "dataset",
    "label",
    "n_true",
    "n0",
    "d_u",
    "false_positive",
    "triggered_first",
];

pub fn report_rows(realisation: usize, combo: &ComboResult) -> Vec<ReportRow> {
    combo
        .units
        .iter()
        .map(|u| ReportRow {
            realisation,
            model: combo.model,
            hi: combo.hi,
            unit: u.report.unit_id.clone(),
            dataset: u.report.dataset_id.clone(),
            label: u.label.clone(),
            n_true: u.report.fault_cycle,
            n0: u.report.alarm_cycle,
            d_u: u.report.delay,
            false_positive: u.has_truth.then(|| u.report.is_false_positive()),
            triggered_first: u
                .report
                .triggered_first
                .iter()
                .map(|&c| combo.channel_names[c].clone())
                .collect(),
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `-` for a missing value, as in the delay table.
pub fn dash(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_reports(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.realisation.to_string(),
            r.model.to_string(),
            r.hi.to_string(),
            r.unit.clone(),
            r.dataset.clone(),
            r.label.clone(),
            opt(r.n_true),
            opt(r.n0),
            opt(r.d_u),
            opt(r.false_positive.map(u8::from)),
            r.triggered_first.join(";"),
        ])?;
    }
    finish(w, path)
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx: Vec<usize> = REPORT_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |k: usize| record.get(idx[k]).unwrap_or("").trim();
        let bad = |k: usize| Error::NonNumericCell {
            row,
            column: REPORT_HEADER[k].to_string(),
            value: cell(k).to_string(),
        };
        let int = |k: usize| -> Result<Option<i64>> {
            match cell(k) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(k)),
            }
        };
        rows.push(ReportRow {
            realisation: cell(0).parse().map_err(|_| bad(0))?,
            model: cell(1).parse().map_err(|_| bad(1))?,
            hi: cell(2).parse().map_err(|_| bad(2))?,
            unit: cell(3).to_string(),
            dataset: cell(4).to_string(),
            label: cell(5).to_string(),
            n_true: int(6)?,
            n0: int(7)?,
            d_u: int(8)?,
            false_positive: match cell(9) {
                "" => None,
                "0" => Some(false),
                "1" => Some(true),
                _ => return Err(bad(9)),
            },
            triggered_first: cell(10)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(rows)
}

/// Per-(model, indicator) metrics: each realisation's value and their
/// average.
#[derive(Debug, Clone, PartialEq)]
pub struct ComboSummary {
    pub model: ModelKind,
    pub hi: HiKind,
    pub realisations: Vec<usize>,
    pub per_realisation_delay: Vec<Option<f64>>,
    pub per_realisation_fpr: Vec<Option<f64>>,
    pub mean_delay: Option<f64>,
    pub fpr: Option<f64>,
}

/// One unit's delay averaged over the realisations that detected it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDelay {
    pub model: ModelKind,
    pub hi: HiKind,
    pub unit: String,
    pub dataset: String,
    pub n_true: Option<i64>,
    pub mean_delay: Option<f64>,
    pub detected_in: usize,
    pub realisations: usize,
}

fn first_seen<T: PartialEq + Clone>(items: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn mean_i64(values: impl IntoIterator<Item = i64>) -> Option<f64> {
    mean_defined(values.into_iter().map(|v| Some(v as f64)))
}

pub fn summarize(rows: &[ReportRow]) -> (Vec<ComboSummary>, Vec<UnitDelay>) {
    let combos = first_seen(rows.iter().map(|r| (r.model, r.hi)));
    let mut summaries = Vec::new();
    let mut units = Vec::new();
    for (model, hi) in combos {
        let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.model == model && r.hi == hi).collect();
        let realisations = first_seen(mine.iter().map(|r| r.realisation));
        let mut delays = Vec::new();
        let mut fprs = Vec::new();
        for &real in &realisations {
            let these: Vec<&&ReportRow> = mine.iter().filter(|r| r.realisation == real).collect();
            delays.push(mean_i64(these.iter().filter_map(|r| r.d_u)));
            let flags: Vec<bool> = these.iter().filter_map(|r| r.false_positive).collect();
            fprs.push(if flags.is_empty() {
                None
            } else {
                Some(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
            });
        }
        for unit in first_seen(mine.iter().map(|r| r.unit.clone())) {
            let these: Vec<&&ReportRow> = mine.iter().filter(|r| r.unit == unit).collect();
            units.push(UnitDelay {
                model,
                hi,
                dataset: these[0].dataset.clone(),
                n_true: these[0].n_true,
                mean_delay: mean_i64(these.iter().filter_map(|r| r.d_u)),
                detected_in: these.iter().filter(|r| r.n0.is_some()).count(),
                realisations: these.len(),
                unit,
            });
        }
        summaries.push(ComboSummary {
            model,
            hi,
            mean_delay: mean_defined(delays.iter().copied()),
            fpr: mean_defined(fprs.iter().copied()),
            realisations,
            per_realisation_delay: delays,
            per_realisation_fpr: fprs,
        });
    }
    (summaries, units)
}

pub fn write_summary(path: &Path, summaries: &[ComboSummary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["model", "hi", "realisation", "mean_delay", "fpr"])?;
    for s in summaries {
        for (i, &r) in s.realisations.iter().enumerate() {
            w.write_record([
                s.model.to_string(),
                s.hi.to_string(),
                r.to_string(),
                dash(s.per_realisation_delay[i]),
                dash(s.per_realisation_fpr[i]),
            ])?;
        }
        w.write_record([
            s.model.to_string(),
            s.hi.to_string(),
            "mean".to_string(),
            dash(s.mean_delay),
            dash(s.fpr),
        ])?;
    }
    finish(w, path)
}

/// Wide delay table: one row per unit, one column per (model, indicator).
pub fn write_unit_table(path: &Path, units: &[UnitDelay]) -> Result<()> {
    let combos = first_seen(units.iter().map(|u| (u.model, u.hi)));
    let names = first_seen(units.iter().map(|u| u.unit.clone()));
    let mut w = writer(path)?;
    let mut header = vec!["unit".to_string(), "dataset".to_string(), "n_true".to_string()];
    header.extend(combos.iter().map(|(m, h)| format!("{m}_{h}")));
    w.write_record(&header)?;
    for name in names {
        let first = units.iter().find(|u| u.unit == name).expect("listed");
        let mut rec = vec![name.clone(), first.dataset.clone(), opt(first.n_true)];
        for &(m, h) in &combos {
            let cell = units
                .iter()
                .find(|u| u.unit == name && u.model == m && u.hi == h)
                .and_then(|u| u.mean_delay);
            rec.push(dash(cell));
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn write_training_log(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "best"])?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.to_string(),
            u8::from(e.epoch == history.best_epoch).to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_stats(path: &Path, channels: &[String], stats: &HealthyStats) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["channel", "mu", "sigma", "tau"])?;
    for (i, c) in channels.iter().enumerate() {
        w.write_record([
            c.clone(),
            stats.mu[i].to_string(),
            stats.sigma[i].to_string(),
            stats.tau[i].to_string(),
        ])?;
    }
    finish(w, path)
}

/// Cycle-averaged indicator of every unit, long by unit and cycle.
pub fn write_cycle_hi(path: &Path, combo: &ComboResult) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["unit".to_string(), "cycle".to_string()];
    header.extend(combo.channel_names.iter().cloned());
    w.write_record(&header)?;
    for u in &combo.units {
        for (pos, &cycle) in u.cycle_hi.cycles.iter().enumerate() {
            let mut rec = vec![u.report.unit_id.clone(), cycle.to_string()];
            rec.extend(u.cycle_hi.values.row(pos).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    finish(w, path)
}

pub fn write_signatures(path: &Path, channels: &[String], sigs: &[UnitSignature]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["unit".to_string(), "label".to_string(), "cycle".to_string()];
    header.extend(channels.iter().cloned());
    w.write_record(&header)?;
    for s in sigs {
        let mut rec = vec![s.unit_id.clone(), s.fault_label.clone(), s.cycle.to_string()];
        rec.extend(s.vector.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// 2-D coordinates with labels, and the two axes with their eigenvalues.
pub fn write_pca(coords: &Path, axes: &Path, channels: &[String], sigs: &[UnitSignature], pca: &Pca2d) -> Result<()> {
    let mut w = writer(coords)?;
    w.write_record(["unit", "label", "pc1", "pc2"])?;
    for (i, s) in sigs.iter().enumerate() {
        w.write_record([
            s.unit_id.clone(),
            s.fault_label.clone(),
            pca.coords[[i, 0]].to_string(),
            pca.coords[[i, 1]].to_string(),
        ])?;
    }
    finish(w, coords)?;

    let mut w = writer(axes)?;
    let mut header = vec!["axis".to_string(), "eigenvalue".to_string()];
    header.extend(channels.iter().cloned());
    w.write_record(&header)?;
    for a in 0..2 {
        let mut rec = vec![format!("pc{}", a + 1), pca.eigenvalues[a].to_string()];
        rec.extend(pca.components.row(a).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, axes)
}

/// Silhouette curves side by side, one column per series.
pub fn write_silhouette(path: &Path, series: &[(String, Vec<(usize, Option<f64>)>)]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend(series.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    let ks = first_seen(series.iter().flat_map(|(_, c)| c.iter().map(|&(k, _)| k)));
    for k in ks {
        let mut rec = vec![k.to_string()];
        for (_, curve) in series {
            rec.push(dash(curve.iter().find(|p| p.0 == k).and_then(|p| p.1)));
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// Long table of (unit, channel) → first checkpoint at which the channel
/// was above threshold.
pub fn write_timelines(
    path: &Path,
    channels: &[String],
    timelines: &[(String, String, Vec<TriggerCategory>)],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["unit", "label", "channel", "category"])?;
    for (unit, label, cats) in timelines {
        for (c, cat) in channels.iter().zip(cats) {
            w.write_record([unit.as_str(), label.as_str(), c.as_str(), cat.to_string().as_str()])?;
        }
    }
    finish(w, path)
}
