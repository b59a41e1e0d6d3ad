//! The two residual generators: an autoencoder over every channel and a
//! regression from operating descriptors to sensor readings.
//!
//! Both operate on standardized rows laid out as [`UnitSeries::z`]
//! (sensors first, then descriptors).
//!
//! [`UnitSeries::z`]: crate::data::UnitSeries::z

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{self, Dataset, DenseNet, TrainConfig, TrainHistory};
use crate::preprocess::Standardizer;
use crate::seeds::derive_seed;

pub const AE_HIDDEN: [usize; 3] = [128, 8, 128];
pub const OC_HIDDEN: [usize; 2] = [128, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Ae,
    Oc,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Oc => "oc",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(ModelKind::Ae),
            "oc" => Ok(ModelKind::Oc),
            other => Err(Error::ConfigInvalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Autoencoder reconstructing the full standardized channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub net: DenseNet,
    pub standardizer: Standardizer,
}

/// Regression from standardized descriptors to standardized sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OcModel {
    pub net: DenseNet,
    pub standardizer: Standardizer,
}

impl AeModel {
    pub fn new(net: DenseNet, standardizer: Standardizer) -> Result<Self> {
        if net.input_dim() != net.output_dim() || net.input_dim() != standardizer.width() {
            return Err(Error::shape(
                format!("autoencoder over {} channels", standardizer.width()),
                format!("{:?}", net.layer_dims()),
            ));
        }
        Ok(Self { net, standardizer })
    }

    /// Bottleneck activations: the output of the encoder half.
    pub fn embed(&self, z_rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let dims = self.net.layer_dims();
        let bottleneck = (1..dims.len() - 1)
            .min_by_key(|&i| dims[i])
            .unwrap_or(dims.len() - 1);
        self.net.forward_partial(z_rows, bottleneck)
    }
}

impl OcModel {
    pub fn new(net: DenseNet, standardizer: Standardizer) -> Result<Self> {
        if net.input_dim() + net.output_dim() != standardizer.width() {
            return Err(Error::shape(
                format!("{} descriptors + sensors", standardizer.width()),
                format!("{:?}", net.layer_dims()),
            ));
        }
        Ok(Self { net, standardizer })
    }

    pub fn n_sensors(&self) -> usize {
        self.net.output_dim()
    }

    pub fn n_descriptors(&self) -> usize {
        self.net.input_dim()
    }
}

fn init_seed(cfg: &TrainConfig) -> u64 {
    derive_seed(cfg.seed, 0x1417)
}

/// Trains the autoencoder with input = target = standardized z.
pub fn train_ae(
    healthy_train: ArrayView2<'_, f64>,
    healthy_val: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    standardizer: Standardizer,
) -> Result<(AeModel, TrainHistory)> {
    train_ae_with(healthy_train, healthy_val, cfg, standardizer, &AE_HIDDEN)
}

pub fn train_ae_with(
    healthy_train: ArrayView2<'_, f64>,
    healthy_val: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    standardizer: Standardizer,
    hidden: &[usize],
) -> Result<(AeModel, TrainHistory)> {
    let width = standardizer.width();
    let dims: Vec<usize> = std::iter::once(width)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(width))
        .collect();
    let net = DenseNet::init(&dims, init_seed(cfg))?;
    let (net, history) = nn::train(
        net,
        Dataset::new(healthy_train, healthy_train)?,
        Dataset::new(healthy_val, healthy_val)?,
        cfg,
    )?;
    Ok((AeModel::new(net, standardizer)?, history))
}

/// Trains the regression on the descriptor and sensor blocks of
/// standardized z rows.
pub fn train_oc(
    healthy_train: ArrayView2<'_, f64>,
    healthy_val: ArrayView2<'_, f64>,
    n_sensors: usize,
    cfg: &TrainConfig,
    standardizer: Standardizer,
) -> Result<(OcModel, TrainHistory)> {
    train_oc_with(healthy_train, healthy_val, n_sensors, cfg, standardizer, &OC_HIDDEN)
}

pub fn train_oc_with(
    healthy_train: ArrayView2<'_, f64>,
    healthy_val: ArrayView2<'_, f64>,
    n_sensors: usize,
    cfg: &TrainConfig,
    standardizer: Standardizer,
    hidden: &[usize],
) -> Result<(OcModel, TrainHistory)> {
    let width = standardizer.width();
    if n_sensors == 0 || n_sensors >= width {
        return Err(Error::shape(
            format!("between 1 and {} sensors", width - 1),
            n_sensors.to_string(),
        ));
    }
    let dims: Vec<usize> = std::iter::once(width - n_sensors)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(n_sensors))
        .collect();
    let net = DenseNet::init(&dims, init_seed(cfg))?;
    let split = |z: ArrayView2<'_, f64>| -> Result<(Array2<f64>, Array2<f64>)> {
        if z.ncols() != width {
            return Err(Error::shape(format!("{width} columns"), z.ncols().to_string()));
        }
        Ok((
            z.slice(s![.., n_sensors..]).to_owned(),
            z.slice(s![.., ..n_sensors]).to_owned(),
        ))
    };
    let (w_train, x_train) = split(healthy_train)?;
    let (w_val, x_val) = split(healthy_val)?;
    let (net, history) = nn::train(
        net,
        Dataset::new(w_train.view(), x_train.view())?,
        Dataset::new(w_val.view(), x_val.view())?,
        cfg,
    )?;
    Ok((OcModel::new(net, standardizer)?, history))
}

/// `z − D(E(z))` for every standardized row.
pub fn residual_ae(model: &AeModel, z_rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let recon = model.net.forward(z_rows)?;
    Ok(&z_rows - &recon)
}

/// `x − M(w)` for every standardized row pair.
pub fn residual_oc(
    model: &OcModel,
    w_rows: ArrayView2<'_, f64>,
    x_rows: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if w_rows.nrows() != x_rows.nrows() || x_rows.ncols() != model.n_sensors() {
        return Err(Error::shape(
            format!("{} rows × {} sensors", w_rows.nrows(), model.n_sensors()),
            format!("{:?}", x_rows.dim()),
        ));
    }
    let pred = model.net.forward(w_rows)?;
    Ok(&x_rows - &pred)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResidualModel {
    Ae(AeModel),
    Oc(OcModel),
}

impl ResidualModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ResidualModel::Ae(_) => ModelKind::Ae,
            ResidualModel::Oc(_) => ModelKind::Oc,
        }
    }

    pub fn net(&self) -> &DenseNet {
        match self {
            ResidualModel::Ae(m) => &m.net,
            ResidualModel::Oc(m) => &m.net,
        }
    }

    pub fn standardizer(&self) -> &Standardizer {
        match self {
            ResidualModel::Ae(m) => &m.standardizer,
            ResidualModel::Oc(m) => &m.standardizer,
        }
    }

    /// Residuals of standardized z rows; `n_sensors` columns for the
    /// regression, every channel for the autoencoder.
    pub fn residuals(&self, z_rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            ResidualModel::Ae(m) => residual_ae(m, z_rows),
            ResidualModel::Oc(m) => {
                let n_x = m.n_sensors();
                if z_rows.ncols() != m.standardizer.width() {
                    return Err(Error::shape(
                        format!("{} columns", m.standardizer.width()),
                        z_rows.ncols().to_string(),
                    ));
                }
                residual_oc(m, z_rows.slice(s![.., n_x..]), z_rows.slice(s![.., ..n_x]))
            }
        }
    }

    /// Channel labels of [`ResidualModel::residuals`] given the z labels.
    pub fn residual_channels(&self, z_names: &[String]) -> Vec<String> {
        match self {
            ResidualModel::Ae(_) => z_names.to_vec(),
            ResidualModel::Oc(m) => z_names[..m.n_sensors()].to_vec(),
        }
    }

    pub fn into_ae(self) -> Result<AeModel> {
        match self {
            ResidualModel::Ae(m) => Ok(m),
            ResidualModel::Oc(_) => Err(Error::KindMismatch { found: "oc", expected: "ae" }),
        }
    }

    pub fn into_oc(self) -> Result<OcModel> {
        match self {
            ResidualModel::Oc(m) => Ok(m),
            ResidualModel::Ae(_) => Err(Error::KindMismatch { found: "ae", expected: "oc" }),
        }
    }
}
