//! Healthy statistics, 3σ thresholds, per-cycle averaging and the
//! waiting-cycle alarm rule, plus fleet-level delay and false-positive
//! metrics.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::hi::HiSeries;

/// Per-channel mean, population deviation and threshold `μ + 3σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthyStats {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    pub tau: Array1<f64>,
    pub fitted_on: usize,
}

impl HealthyStats {
    pub fn n_channels(&self) -> usize {
        self.mu.len()
    }

    /// Same statistics with every threshold shifted by `delta`.
    pub fn with_tau_offset(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.tau.mapv_inplace(|t| t + delta);
        out
    }
}

/// Column means shifted by the first row, so a constant column averages
/// to exactly its value.
fn column_means(rows: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = rows.nrows() as f64;
    let first = rows.row(0);
    Array1::from_shape_fn(rows.ncols(), |j| {
        let s = first[j];
        s + rows.column(j).iter().map(|v| v - s).sum::<f64>() / n
    })
}

pub fn fit_stats(healthy: ArrayView2<'_, f64>) -> Result<HealthyStats> {
    let n = healthy.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "healthy statistics need at least 2 rows, got {n}"
        )));
    }
    let mu = column_means(healthy);
    let sigma = Array1::from_shape_fn(healthy.ncols(), |j| {
        let m = mu[j];
        (healthy.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt()
    });
    let tau = &mu + &(&sigma * 3.0);
    Ok(HealthyStats {
        mu,
        sigma,
        tau,
        fitted_on: n,
    })
}

/// Cycle-averaged indicator: one row per cycle, in cycle order.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleHi {
    pub cycles: Vec<i64>,
    pub values: Array2<f64>,
}

impl CycleHi {
    pub fn position_of(&self, cycle: i64) -> Option<usize> {
        self.cycles.binary_search(&cycle).ok()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }
}

pub fn cycle_average(hi: &HiSeries) -> CycleHi {
    cycle_average_rows(hi.values(), hi.cycle_of())
}

/// Means of `values` over runs of equal `cycle_of` entries.
pub fn cycle_average_rows(values: ArrayView2<'_, f64>, cycle_of: &[i64]) -> CycleHi {
    assert_eq!(values.nrows(), cycle_of.len(), "one cycle index per row");
    let mut cycles = Vec::new();
    let mut bounds = Vec::new();
    let mut start = 0;
    for i in 1..=cycle_of.len() {
        if i == cycle_of.len() || cycle_of[i] != cycle_of[start] {
            cycles.push(cycle_of[start]);
            bounds.push((start, i));
            start = i;
        }
    }
    let mut out = Array2::zeros((cycles.len(), values.ncols()));
    for (c, &(a, b)) in bounds.iter().enumerate() {
        out.row_mut(c).assign(&column_means(values.slice(ndarray::s![a..b, ..])));
    }
    CycleHi {
        cycles,
        values: out,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alarm {
    /// Cycle index n₀ at which the alarm is raised (last cycle of the window).
    pub cycle: i64,
    /// Row position of that cycle in the cycle-averaged matrix.
    pub position: usize,
    /// Channels whose run of exceedances completed the window at n₀.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub alarm: Option<Alarm>,
    /// For every cycle, the channels strictly above their threshold.
    pub exceedance: Vec<Vec<usize>>,
}

/// Raises the alarm at the first cycle where some single channel has
/// exceeded its threshold for `n_wait` consecutive cycles.
pub fn detect(cycle_hi: &CycleHi, stats: &HealthyStats, n_wait: usize) -> Result<Detection> {
    if n_wait == 0 {
        return Err(Error::ConfigInvalid("n_wait must be at least 1".into()));
    }
    let k = cycle_hi.n_channels();
    if k != stats.n_channels() {
        return Err(Error::shape(
            format!("{} channels", stats.n_channels()),
            k.to_string(),
        ));
    }
    let mut runs = vec![0usize; k];
    let mut alarm = None;
    let mut exceedance = Vec::with_capacity(cycle_hi.cycles.len());
    for (pos, row) in cycle_hi.values.outer_iter().enumerate() {
        let above: Vec<usize> = (0..k).filter(|&i| row[i] > stats.tau[i]).collect();
        for (i, run) in runs.iter_mut().enumerate() {
            *run = if row[i] > stats.tau[i] { *run + 1 } else { 0 };
        }
        if alarm.is_none() {
            let channels: Vec<usize> = (0..k).filter(|&i| runs[i] >= n_wait).collect();
            if !channels.is_empty() {
                alarm = Some(Alarm {
                    cycle: cycle_hi.cycles[pos],
                    position: pos,
                    channels,
                });
            }
        }
        exceedance.push(above);
    }
    Ok(Detection { alarm, exceedance })
}

/// `n₀ − n_true`: positive for late detection, negative for a false alarm.
pub fn detection_delay(n0: i64, n_true: i64) -> i64 {
    n0 - n_true
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub unit_id: String,
    pub dataset_id: String,
    /// Ground-truth fault onset; `None` for a unit known to stay healthy.
    pub fault_cycle: Option<i64>,
    pub alarm_cycle: Option<i64>,
    pub delay: Option<i64>,
    /// `(cycle, channels above threshold)` for every evaluated cycle.
    pub exceedance: Vec<(i64, Vec<usize>)>,
    pub triggered_first: Vec<usize>,
}

impl DetectionReport {
    pub fn new(
        unit_id: impl Into<String>,
        dataset_id: impl Into<String>,
        cycle_hi: &CycleHi,
        detection: Detection,
        fault_cycle: Option<i64>,
    ) -> Self {
        let alarm_cycle = detection.alarm.as_ref().map(|a| a.cycle);
        let delay = match (alarm_cycle, fault_cycle) {
            (Some(n0), Some(n_true)) => Some(detection_delay(n0, n_true)),
            _ => None,
        };
        Self {
            unit_id: unit_id.into(),
            dataset_id: dataset_id.into(),
            fault_cycle,
            alarm_cycle,
            delay,
            exceedance: cycle_hi.cycles.iter().copied().zip(detection.exceedance).collect(),
            triggered_first: detection.alarm.map(|a| a.channels).unwrap_or_default(),
        }
    }

    /// An alarm before the fault onset, or any alarm on a healthy unit.
    pub fn is_false_positive(&self) -> bool {
        match (self.fault_cycle, self.delay) {
            (Some(_), Some(d)) => d < 0,
            (None, _) => self.alarm_cycle.is_some(),
            (Some(_), None) => false,
        }
    }
}

/// Share of units whose alarm precedes the fault (or fires at all on a
/// healthy unit). Undetected units count in the denominator only.
pub fn false_positive_rate(reports: &[DetectionReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let fp = reports.iter().filter(|r| r.is_false_positive()).count();
    Ok(fp as f64 / reports.len() as f64)
}

/// Mean delay over units that raised an alarm and have a known fault cycle.
pub fn mean_delay(reports: &[DetectionReport]) -> Option<f64> {
    let delays: Vec<i64> = reports.iter().filter_map(|r| r.delay).collect();
    if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<i64>() as f64 / delays.len() as f64)
    }
}
