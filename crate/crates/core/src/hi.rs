//! Health indicators built from residual matrices.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HiKind {
    /// Euclidean norm of the residual row.
    Aggregated,
    /// Absolute residual per channel.
    Sensorwise,
}

impl HiKind {
    pub fn name(self) -> &'static str {
        match self {
            HiKind::Aggregated => "aggregated",
            HiKind::Sensorwise => "sensorwise",
        }
    }
}

impl fmt::Display for HiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aggregated" | "a" => Ok(HiKind::Aggregated),
            "sensorwise" | "sensor-wise" | "s" => Ok(HiKind::Sensorwise),
            other => Err(Error::ConfigInvalid(format!("unknown health indicator `{other}`"))),
        }
    }
}

pub fn aggregated_hi(residuals: ArrayView2<'_, f64>) -> Array2<f64> {
    residuals
        .map_axis(Axis(1), |row| row.dot(&row).sqrt())
        .insert_axis(Axis(1))
}

pub fn sensorwise_hi(residuals: ArrayView2<'_, f64>) -> Array2<f64> {
    residuals.mapv(f64::abs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiSeries {
    values: Array2<f64>,
    kind: HiKind,
    source: ModelKind,
    channel_names: Vec<String>,
    cycle_of: Vec<i64>,
}

impl HiSeries {
    /// Builds the indicator of `kind` from a residual matrix whose columns
    /// are labelled by `residual_channels`.
    pub fn from_residuals(
        residuals: ArrayView2<'_, f64>,
        kind: HiKind,
        source: ModelKind,
        residual_channels: &[String],
        cycle_of: &[i64],
    ) -> Result<Self> {
        if residuals.ncols() == 0 || residuals.ncols() != residual_channels.len() {
            return Err(Error::shape(
                format!("{} residual channels", residual_channels.len()),
                residuals.ncols().to_string(),
            ));
        }
        if residuals.nrows() != cycle_of.len() {
            return Err(Error::shape(
                format!("{} rows", cycle_of.len()),
                residuals.nrows().to_string(),
            ));
        }
        let (values, channel_names) = match kind {
            HiKind::Aggregated => (aggregated_hi(residuals), vec!["aggregated".to_string()]),
            HiKind::Sensorwise => (sensorwise_hi(residuals), residual_channels.to_vec()),
        };
        Ok(Self {
            values,
            kind,
            source,
            channel_names,
            cycle_of: cycle_of.to_vec(),
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn kind(&self) -> HiKind {
        self.kind
    }

    pub fn source(&self) -> ModelKind {
        self.source
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn cycle_of(&self) -> &[i64] {
        &self.cycle_of
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }
}
