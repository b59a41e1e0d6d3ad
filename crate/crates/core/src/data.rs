//! Time-series containers, cycle segmentation and healthy/test splitting.

use std::ops::Range;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One unit's multivariate record: operating descriptors `w`, sensor
/// readings `x` and the cycle index of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSeries {
    unit_id: String,
    dataset_id: String,
    w: Array2<f64>,
    x: Array2<f64>,
    cycle_of: Vec<i64>,
    descriptor_names: Vec<String>,
    sensor_names: Vec<String>,
}

/// A contiguous run of rows sharing one cycle index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleView {
    pub cycle_index: i64,
    pub row_range: Range<usize>,
}

impl UnitSeries {
    pub fn new(
        unit_id: impl Into<String>,
        dataset_id: impl Into<String>,
        w: Array2<f64>,
        x: Array2<f64>,
        cycle_of: Vec<i64>,
        descriptor_names: Vec<String>,
        sensor_names: Vec<String>,
    ) -> Result<Self> {
        let unit_id = unit_id.into();
        let t = w.nrows();
        if t == 0 {
            return Err(Error::InvalidSeries(format!("unit {unit_id} has no rows")));
        }
        if x.nrows() != t || cycle_of.len() != t {
            return Err(Error::InvalidSeries(format!(
                "unit {unit_id}: w has {t} rows, x has {}, cycle_of has {}",
                x.nrows(),
                cycle_of.len()
            )));
        }
        if w.ncols() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidSeries(format!(
                "unit {unit_id}: need at least one descriptor and one sensor"
            )));
        }
        if descriptor_names.len() != w.ncols() || sensor_names.len() != x.ncols() {
            return Err(Error::InvalidSeries(format!(
                "unit {unit_id}: channel names do not match channel counts"
            )));
        }
        if cycle_of.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::InvalidSeries(format!(
                "unit {unit_id}: cycle indices must be non-decreasing"
            )));
        }
        Ok(Self {
            unit_id,
            dataset_id: dataset_id.into(),
            w,
            x,
            cycle_of,
            descriptor_names,
            sensor_names,
        })
    }

    pub fn unit_id(&self) -> &str {
        &self.unit_id
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn with_dataset_id(mut self, dataset_id: impl Into<String>) -> Self {
        self.dataset_id = dataset_id.into();
        self
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Full channel vector per row, sensors first then descriptors.
    pub fn z(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.x.view(), self.w.view()]).expect("row counts agree")
    }

    pub fn cycle_of(&self) -> &[i64] {
        &self.cycle_of
    }

    pub fn len(&self) -> usize {
        self.cycle_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycle_of.is_empty()
    }

    pub fn n_descriptors(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_sensors(&self) -> usize {
        self.x.ncols()
    }

    pub fn descriptor_names(&self) -> &[String] {
        &self.descriptor_names
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.sensor_names
    }

    /// Names in `w` then `x` order.
    pub fn channel_names(&self) -> Vec<String> {
        self.descriptor_names
            .iter()
            .chain(&self.sensor_names)
            .cloned()
            .collect()
    }

    /// Names matching the column order of [`UnitSeries::z`].
    pub fn z_channel_names(&self) -> Vec<String> {
        self.sensor_names
            .iter()
            .chain(&self.descriptor_names)
            .cloned()
            .collect()
    }

    pub fn n_cycles(&self) -> usize {
        cycles(self).len()
    }

    /// Keeps the listed rows (ascending) and drops everything else.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        debug_assert!(rows.windows(2).all(|p| p[0] < p[1]));
        Self::new(
            self.unit_id.clone(),
            self.dataset_id.clone(),
            self.w.select(Axis(0), rows),
            self.x.select(Axis(0), rows),
            rows.iter().map(|&r| self.cycle_of[r]).collect(),
            self.descriptor_names.clone(),
            self.sensor_names.clone(),
        )
    }

    /// Cycles at positions `from..` (zero-based position, not cycle index).
    pub fn cycles_from(&self, from: usize) -> Option<Self> {
        let views = cycles(self);
        let start = views.get(from)?.row_range.start;
        let rows: Vec<usize> = (start..self.len()).collect();
        self.select_rows(&rows).ok()
    }
}

/// Segments a series into its cycles in row order.
pub fn cycles(series: &UnitSeries) -> Vec<CycleView> {
    let mut out: Vec<CycleView> = Vec::new();
    for (row, &c) in series.cycle_of.iter().enumerate() {
        match out.last_mut() {
            Some(view) if view.cycle_index == c => view.row_range.end = row + 1,
            _ => out.push(CycleView {
                cycle_index: c,
                row_range: row..row + 1,
            }),
        }
    }
    out
}

/// Known fault history of a unit, used only for evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub unit_id: String,
    /// Fault family label (e.g. the faulty component).
    pub family: String,
    /// Cycle at which the fault starts; `None` for a unit that stays healthy.
    pub fault_cycle: Option<i64>,
    pub faulty_sensors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub healthy_cycles_per_unit: usize,
    pub validation_fraction: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            healthy_cycles_per_unit: 16,
            validation_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.healthy_cycles_per_unit == 0 {
            return Err(Error::ConfigInvalid(
                "healthy_cycles_per_unit must be at least 1".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowRef {
    pub unit: usize,
    pub row: usize,
}

/// Rows drawn from a fleet, addressed by unit position and row number.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleSet {
    pub rows: Vec<RowRef>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn gather(&self, width: usize, pick: impl Fn(RowRef) -> Vec<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), width));
        for (i, &r) in self.rows.iter().enumerate() {
            for (j, v) in pick(r).into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        out
    }

    pub fn gather_w(&self, fleet: &[UnitSeries]) -> Array2<f64> {
        let width = fleet.first().map_or(0, UnitSeries::n_descriptors);
        self.gather(width, |r| fleet[r.unit].w.row(r.row).to_vec())
    }

    pub fn gather_x(&self, fleet: &[UnitSeries]) -> Array2<f64> {
        let width = fleet.first().map_or(0, UnitSeries::n_sensors);
        self.gather(width, |r| fleet[r.unit].x.row(r.row).to_vec())
    }

    /// Rows in the [`UnitSeries::z`] layout.
    pub fn gather_z(&self, fleet: &[UnitSeries]) -> Array2<f64> {
        let width = fleet
            .first()
            .map_or(0, |u| u.n_sensors() + u.n_descriptors());
        self.gather(width, |r| {
            let u = &fleet[r.unit];
            u.x.row(r.row).iter().chain(u.w.row(r.row)).copied().collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: SampleSet,
    pub validation: SampleSet,
    pub test: SampleSet,
}

/// Healthy/test partition: the first `healthy_cycles_per_unit` cycles of
/// every unit form the healthy pool, of which a seeded uniform fraction is
/// held out for validation; all later cycles are test rows.
pub fn split(fleet: &[UnitSeries], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let mut healthy = Vec::new();
    let mut test = Vec::new();
    for (u, series) in fleet.iter().enumerate() {
        let views = cycles(series);
        if views.len() <= spec.healthy_cycles_per_unit {
            return Err(Error::UnitTooShort {
                unit: series.unit_id.clone(),
                cycles: views.len(),
                required: spec.healthy_cycles_per_unit,
            });
        }
        let boundary = views[spec.healthy_cycles_per_unit].row_range.start;
        healthy.extend((0..boundary).map(|row| RowRef { unit: u, row }));
        test.extend((boundary..series.len()).map(|row| RowRef { unit: u, row }));
    }

    let n = healthy.len();
    let n_val = ((spec.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = index::sample(&mut rng, n, n_val).into_vec();
    picked.sort_unstable();

    let mut is_val = vec![false; n];
    for &i in &picked {
        is_val[i] = true;
    }
    let (validation, train): (Vec<_>, Vec<_>) =
        healthy.into_iter().zip(is_val).partition(|&(_, v)| v);
    Ok(Split {
        train: SampleSet {
            rows: train.into_iter().map(|(r, _)| r).collect(),
        },
        validation: SampleSet {
            rows: validation.into_iter().map(|(r, _)| r).collect(),
        },
        test: SampleSet { rows: test },
    })
}
