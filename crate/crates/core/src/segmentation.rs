//! Fault segmentation: per-unit signatures at a fixed distance after the
//! alarm, 2-D principal components, silhouette scores against known fault
//! labels, and triggered-sensor timelines.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::detector::{CycleHi, DetectionReport, HealthyStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the row maximum (output max is exactly 1).
    Max,
    /// Subtract the row mean and divide by the row deviation.
    ZScore,
    None,
}

pub fn normalize_row(row: ArrayView1<'_, f64>, how: Normalization) -> Array1<f64> {
    match how {
        Normalization::Max => {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            if max > 0.0 {
                row.mapv(|v| v / max)
            } else {
                row.to_owned()
            }
        }
        Normalization::ZScore => {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let sd = (row.mapv(|v| (v - mean).powi(2)).sum() / n).sqrt();
            if sd > 0.0 {
                row.mapv(|v| (v - mean) / sd)
            } else {
                row.mapv(|_| 0.0)
            }
        }
        Normalization::None => row.to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitSignature {
    pub unit_id: String,
    /// Ground-truth fault label; evaluation only.
    pub fault_label: String,
    pub cycle: i64,
    pub vector: Array1<f64>,
}

/// Normalized cycle-averaged indicator row at cycle `n₀ + k`.
pub fn snapshot(
    report: &DetectionReport,
    cycle_hi: &CycleHi,
    k: usize,
    fault_label: &str,
    normalization: Normalization,
) -> Result<UnitSignature> {
    let n0 = report
        .alarm_cycle
        .ok_or_else(|| Error::NoAlarm(report.unit_id.clone()))?;
    let cycle = n0 + k as i64;
    let pos = cycle_hi.position_of(cycle).ok_or_else(|| Error::CycleOutOfRange {
        unit: report.unit_id.clone(),
        cycle,
    })?;
    Ok(UnitSignature {
        unit_id: report.unit_id.clone(),
        fault_label: fault_label.to_string(),
        cycle,
        vector: normalize_row(cycle_hi.values.row(pos), normalization),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub mean: Array1<f64>,
    /// Unit-norm principal axes as rows, largest eigenvalue first.
    pub components: Array2<f64>,
    pub eigenvalues: [f64; 2],
    /// Projection of every centered point onto the two axes.
    pub coords: Array2<f64>,
}

/// Projects points onto the top two eigenvectors of their sample
/// covariance. Each axis is signed so its largest-magnitude entry is
/// positive.
pub fn pca_2d(points: ArrayView2<'_, f64>) -> Result<Pca2d> {
    let (n, d) = points.dim();
    if n < 3 {
        return Err(Error::InsufficientData(format!("PCA needs at least 3 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::InsufficientData(format!("PCA to 2-D needs at least 2 dimensions, got {d}")));
    }
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let centered = &points - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Array2::zeros((2, d));
    for (row, &idx) in order.iter().take(2).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let norm = v.norm();
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .expect("d ≥ 2");
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[row, j]] = sign * v[j] / norm;
        }
    }
    let coords = centered.dot(&components.t());
    Ok(Pca2d {
        mean,
        components,
        eigenvalues: [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]],
        coords,
    })
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient with Euclidean distances. Members of
/// singleton clusters score 0.
pub fn silhouette<L: PartialEq>(points: ArrayView2<'_, f64>, labels: &[L]) -> Result<f64> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), labels.len().to_string()));
    }
    let mut clusters: Vec<&L> = Vec::new();
    for l in labels {
        if !clusters.contains(&l) {
            clusters.push(l);
        }
    }
    if clusters.len() < 2 {
        return Err(Error::SingleCluster);
    }
    let cluster_of: Vec<usize> = labels
        .iter()
        .map(|l| clusters.iter().position(|c| *c == l).expect("listed"))
        .collect();
    let sizes: Vec<usize> = (0..clusters.len())
        .map(|c| cluster_of.iter().filter(|&&x| x == c).count())
        .collect();

    let mut total = 0.0;
    let mut sums = vec![0.0; clusters.len()];
    for i in 0..n {
        if sizes[cluster_of[i]] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[cluster_of[j]] += euclidean(points.row(i), points.row(j));
            }
        }
        let own = cluster_of[i];
        let intra = sums[own] / (sizes[own] - 1) as f64;
        let nearest = (0..clusters.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = intra.max(nearest);
        if denom > 0.0 {
            total += (nearest - intra) / denom;
        }
    }
    Ok(total / n as f64)
}

/// One unit's inputs to the segmentation analysis.
#[derive(Debug, Clone, Copy)]
pub struct UnitTrace<'a> {
    pub report: &'a DetectionReport,
    pub cycle_hi: &'a CycleHi,
    pub fault_label: &'a str,
}

/// Signatures at `n₀ + k` for every unit that alarmed and is still
/// observed at that cycle.
pub fn snapshots_at(units: &[UnitTrace<'_>], k: usize, normalization: Normalization) -> Vec<UnitSignature> {
    units
        .iter()
        .filter_map(|u| snapshot(u.report, u.cycle_hi, k, u.fault_label, normalization).ok())
        .collect()
}

pub fn signature_matrix(signatures: &[UnitSignature]) -> Array2<f64> {
    let d = signatures.first().map_or(0, |s| s.vector.len());
    let mut m = Array2::zeros((signatures.len(), d));
    for (i, s) in signatures.iter().enumerate() {
        m.row_mut(i).assign(&s.vector);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouettePoint {
    pub k: usize,
    pub score: f64,
    pub n_units: usize,
}

/// Silhouette of the signatures at `n₀ + k`, grouped by fault label, for
/// each requested `k`.
pub fn silhouette_curve(
    units: &[UnitTrace<'_>],
    ks: impl IntoIterator<Item = usize>,
    normalization: Normalization,
) -> Result<Vec<SilhouettePoint>> {
    ks.into_iter()
        .map(|k| {
            let sigs = snapshots_at(units, k, normalization);
            let labels: Vec<&str> = sigs.iter().map(|s| s.fault_label.as_str()).collect();
            let score = silhouette(signature_matrix(&sigs).view(), &labels)?;
            Ok(SilhouettePoint {
                k,
                score,
                n_units: sigs.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TriggerCategory {
    /// First checkpoint `c` at which the channel was above threshold at `n₀ + c`.
    At(usize),
    No,
}

impl fmt::Display for TriggerCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggerCategory::At(c) => write!(f, "{c}"),
            TriggerCategory::No => f.write_str("No"),
        }
    }
}

/// For each channel, the earliest checkpoint whose cycle `n₀ + c` has the
/// cycle-averaged indicator strictly above `τ`. Checkpoints past the end of
/// the unit cannot trigger.
pub fn trigger_timeline(
    report: &DetectionReport,
    stats: &HealthyStats,
    cycle_hi: &CycleHi,
    checkpoints: &[usize],
) -> Result<Vec<TriggerCategory>> {
    let n0 = report
        .alarm_cycle
        .ok_or_else(|| Error::NoAlarm(report.unit_id.clone()))?;
    if cycle_hi.n_channels() != stats.n_channels() {
        return Err(Error::shape(
            format!("{} channels", stats.n_channels()),
            cycle_hi.n_channels().to_string(),
        ));
    }
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let rows: Vec<(usize, Option<usize>)> = sorted
        .iter()
        .map(|&c| (c, cycle_hi.position_of(n0 + c as i64)))
        .collect();
    Ok((0..stats.n_channels())
        .map(|ch| {
            rows.iter()
                .find(|(_, pos)| pos.is_some_and(|p| cycle_hi.values[[p, ch]] > stats.tau[ch]))
                .map_or(TriggerCategory::No, |&(c, _)| TriggerCategory::At(c))
        })
        .collect())
}
