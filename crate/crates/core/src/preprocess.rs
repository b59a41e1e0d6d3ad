//! Row selection (downsampling, cruise filtering) and standardization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{cycles, UnitSeries};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Keeps rows `0, factor, 2·factor, …` of every cycle.
pub fn downsample(series: &UnitSeries, factor: usize) -> Result<UnitSeries> {
    if factor == 0 {
        return Err(Error::ConfigInvalid("downsample factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(series.clone());
    }
    let rows: Vec<usize> = cycles(series)
        .into_iter()
        .flat_map(|c| c.row_range.step_by(factor))
        .collect();
    series.select_rows(&rows)
}

#[derive(Debug, Clone)]
pub struct CruiseFiltered {
    pub series: UnitSeries,
    /// Cycles left without any row above the threshold.
    pub dropped_cycles: Vec<i64>,
}

/// Keeps rows whose altitude, divided by the maximum altitude of their
/// cycle, is strictly above `threshold`.
pub fn cruise_filter(
    series: &UnitSeries,
    altitude_channel: usize,
    threshold: f64,
) -> Result<CruiseFiltered> {
    if altitude_channel >= series.n_descriptors() {
        return Err(Error::ConfigInvalid(format!(
            "altitude channel {altitude_channel} out of range for {} descriptors",
            series.n_descriptors()
        )));
    }
    let alt = series.w().column(altitude_channel).to_owned();
    let mut keep = Vec::with_capacity(series.len());
    let mut dropped_cycles = Vec::new();
    for view in cycles(series) {
        let max = view
            .row_range
            .clone()
            .map(|r| alt[r])
            .fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(Error::NonPositiveAltitude {
                unit: series.unit_id().to_string(),
                cycle: view.cycle_index,
                max_altitude: max,
            });
        }
        let before = keep.len();
        keep.extend(view.row_range.filter(|&r| alt[r] / max > threshold));
        if keep.len() == before {
            dropped_cycles.push(view.cycle_index);
        }
    }
    if keep.is_empty() {
        return Err(Error::InvalidSeries(format!(
            "unit {}: no rows survive the cruise filter",
            series.unit_id()
        )));
    }
    Ok(CruiseFiltered {
        series: series.select_rows(&keep)?,
        dropped_cycles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    DownsampleFirst,
    CruiseFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub downsample: usize,
    pub cruise_threshold: f64,
    pub altitude_channel: usize,
    pub order: StageOrder,
    pub epsilon: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            downsample: 10,
            cruise_threshold: 0.85,
            altitude_channel: 0,
            order: StageOrder::DownsampleFirst,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downsample == 0 {
            return Err(Error::ConfigInvalid("preprocess.downsample must be ≥ 1".into()));
        }
        if !(self.cruise_threshold >= 0.0 && self.cruise_threshold < 1.0) {
            return Err(Error::ConfigInvalid(
                "preprocess.cruise_threshold must lie in [0, 1)".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::ConfigInvalid("preprocess.epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Row selection stages for one unit in the configured order.
pub fn select_rows(series: &UnitSeries, cfg: &PreprocessConfig) -> Result<CruiseFiltered> {
    match cfg.order {
        StageOrder::DownsampleFirst => {
            let ds = downsample(series, cfg.downsample)?;
            cruise_filter(&ds, cfg.altitude_channel, cfg.cruise_threshold)
        }
        StageOrder::CruiseFirst => {
            let cf = cruise_filter(series, cfg.altitude_channel, cfg.cruise_threshold)?;
            Ok(CruiseFiltered {
                series: downsample(&cf.series, cfg.downsample)?,
                dropped_cycles: cf.dropped_cycles,
            })
        }
    }
}

/// Per-channel affine map to zero mean and unit (population) deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub epsilon: f64,
}

impl Standardizer {
    pub fn fit(rows: ArrayView2<'_, f64>) -> Result<Self> {
        Self::fit_with_epsilon(rows, DEFAULT_EPSILON)
    }

    pub fn fit_with_epsilon(rows: ArrayView2<'_, f64>, epsilon: f64) -> Result<Self> {
        if rows.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardizer needs at least 2 rows, got {}",
                rows.nrows()
            )));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty");
        let std = rows.std_axis(Axis(0), 0.0);
        Ok(Self { mean, std, epsilon })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.width() {
            return Err(Error::shape(
                format!("{} columns", self.width()),
                format!("{} columns", rows.ncols()),
            ));
        }
        let divisor = self.std.mapv(|s| s.max(self.epsilon));
        Ok((&rows - &self.mean) / &divisor)
    }
}

/// `fit_standardizer` under its operation name.
pub fn fit_standardizer(train_rows: ArrayView2<'_, f64>) -> Result<Standardizer> {
    Standardizer::fit(train_rows)
}

pub fn apply_standardizer(std: &Standardizer, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    std.apply(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(alt: &[f64], cycle_of: Vec<i64>) -> UnitSeries {
        let t = alt.len();
        let mut w = Array2::zeros((t, 2));
        w.column_mut(0).assign(&ndarray::Array1::from(alt.to_vec()));
        let x = Array2::from_shape_fn((t, 1), |(i, _)| i as f64);
        UnitSeries::new("u", "", w, x, cycle_of, vec!["alt".into(), "XM".into()], vec!["s".into()])
            .unwrap()
    }

    #[test]
    fn downsample_strides_within_cycles() {
        let u = series(&[1.0; 10], vec![0; 10]);
        let d = downsample(&u, 4).unwrap();
        assert_eq!(d.x().column(0).to_vec(), vec![0.0, 4.0, 8.0]);

        let cyc: Vec<i64> = (0..3).flat_map(|c| std::iter::repeat_n(c, 100)).collect();
        let u = series(&vec![1.0; 300], cyc);
        let d = downsample(&u, 10).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d.n_cycles(), 3);
        assert_eq!(d.x()[[10, 0]], 100.0);

        assert_eq!(downsample(&u, 1).unwrap(), u);
        assert!(downsample(&u, 0).is_err());
    }

    #[test]
    fn cruise_keeps_rows_above_threshold_of_cycle_max() {
        let u = series(&[0.0, 10000.0, 9000.0, 2000.0], vec![0; 4]);
        let f = cruise_filter(&u, 0, 0.85).unwrap();
        assert_eq!(f.series.x().column(0).to_vec(), vec![1.0, 2.0]);

        // Normalization is per cycle, not per unit.
        let u = series(&[100.0, 90.0, 10000.0, 8000.0], vec![0, 0, 1, 1]);
        let f = cruise_filter(&u, 0, 0.85).unwrap();
        assert_eq!(f.series.x().column(0).to_vec(), vec![0.0, 1.0, 2.0]);

        let u = series(&[500.0; 5], vec![0; 5]);
        assert_eq!(cruise_filter(&u, 0, 0.85).unwrap().series.len(), 5);
    }

    #[test]
    fn cruise_comparison_is_strict() {
        let u = series(&[85.0, 100.0], vec![0, 0]);
        assert_eq!(cruise_filter(&u, 0, 0.85).unwrap().series.len(), 1);
    }

    #[test]
    fn cruise_rejects_non_positive_max() {
        let u = series(&[0.0, -3.0], vec![7, 7]);
        assert!(matches!(
            cruise_filter(&u, 0, 0.85),
            Err(Error::NonPositiveAltitude { cycle: 7, .. })
        ));
    }

    #[test]
    fn standardizer_two_point_and_constant() {
        let s = Standardizer::fit(array![[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]].view()).unwrap();
        assert!((s.mean[0] - 2.0).abs() < 1e-15);
        assert_eq!(s.mean[1], 5.0);
        assert_eq!(s.std[1], 0.0);

        let s = Standardizer::fit(array![[1.0], [3.0]].view()).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (2.0, 1.0));
        assert_eq!(s.apply(array![[3.0]].view()).unwrap()[[0, 0]], 1.0);

        let c = Standardizer::fit(array![[5.0], [5.0], [5.0]].view()).unwrap();
        assert_eq!(c.apply(array![[5.0], [5.0]].view()).unwrap(), array![[0.0], [0.0]]);
    }

    #[test]
    fn standardizer_errors() {
        assert!(matches!(
            Standardizer::fit(array![[1.0, 2.0]].view()),
            Err(Error::InsufficientData(_))
        ));
        let s = Standardizer::fit(array![[1.0], [2.0]].view()).unwrap();
        assert!(matches!(
            s.apply(array![[1.0, 2.0]].view()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn standardizer_round_trip_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Array2::from_shape_fn((1000, 18), |(_, j)| {
            rng.random_range(-1.0..1.0) * (j as f64 + 1.0) * 30.0 + j as f64 * 100.0
        });
        let s = Standardizer::fit(m.view()).unwrap();
        let z = s.apply(m.view()).unwrap();
        let refit = Standardizer::fit(z.view()).unwrap();
        for j in 0..18 {
            assert!(refit.mean[j].abs() < 1e-10);
            assert!((refit.std[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stage_orders_both_run() {
        let cyc: Vec<i64> = (0..2).flat_map(|c| std::iter::repeat_n(c, 20)).collect();
        let alt: Vec<f64> = (0..40).map(|i| ((i % 20) as f64 + 1.0) * 100.0).collect();
        let u = series(&alt, cyc);
        let mut cfg = PreprocessConfig { downsample: 3, ..Default::default() };
        let a = select_rows(&u, &cfg).unwrap().series;
        cfg.order = StageOrder::CruiseFirst;
        let b = select_rows(&u, &cfg).unwrap().series;
        // Downsample-first keeps rows 18 of each cycle (alt 1900 / 2000);
        // cruise-first keeps 17..19 then takes every third row.
        assert_eq!(a.x().column(0).to_vec(), vec![18.0, 38.0]);
        assert_eq!(b.x().column(0).to_vec(), vec![17.0, 37.0]);
    }

    proptest! {
        #[test]
        fn cruise_output_is_ordered_subset(alts in proptest::collection::vec(1.0f64..1000.0, 1..60)) {
            let n = alts.len();
            let cyc: Vec<i64> = (0..n).map(|i| (i / 7) as i64).collect();
            let mut w = Array2::zeros((n, 1));
            w.column_mut(0).assign(&ndarray::Array1::from(alts.clone()));
            let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
            let u = UnitSeries::new("p", "", w, x, cyc, vec!["alt".into()], vec!["s".into()]).unwrap();
            let out = cruise_filter(&u, 0, 0.85).unwrap().series;
            let kept = out.x().column(0).to_vec();
            prop_assert!(kept.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(kept.len() <= n);
            prop_assert_eq!(out.n_cycles(), u.n_cycles());
        }

        #[test]
        fn standardized_values_are_finite(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 2..40)) {
            let train = Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i][j]);
            let s = Standardizer::fit(train.view()).unwrap();
            let held = train.mapv(|v| v * 1.5 - 7.0);
            prop_assert!(s.apply(held.view()).unwrap().iter().all(|v| v.is_finite()));
        }
    }
}
