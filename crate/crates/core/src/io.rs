//! CSV ingestion and emission, ground-truth sidecars and text checkpoints.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruth, UnitSeries};
use crate::error::{Error, Result};
use crate::models::{AeModel, ModelKind, OcModel, ResidualModel};
use crate::nn::{Activation, Dense, DenseNet, TrainHistory};
use crate::preprocess::Standardizer;
use crate::synth::{DESCRIPTOR_NAMES, SENSOR_NAMES};

/// Header names bound to each column role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSchema {
    pub unit: String,
    pub cycle: String,
    pub descriptors: Vec<String>,
    pub sensors: Vec<String>,
}

impl Default for DataSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            cycle: "cycle".into(),
            descriptors: DESCRIPTOR_NAMES.iter().map(|s| s.to_string()).collect(),
            sensors: SENSOR_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl DataSchema {
    pub fn columns(&self) -> Vec<&str> {
        [self.unit.as_str(), self.cycle.as_str()]
            .into_iter()
            .chain(self.descriptors.iter().map(String::as_str))
            .chain(self.sensors.iter().map(String::as_str))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.descriptors.is_empty() || self.sensors.is_empty() {
            return Err(Error::ConfigInvalid(
                "schema needs at least one descriptor and one sensor column".into(),
            ));
        }
        let cols = self.columns();
        for (i, c) in cols.iter().enumerate() {
            if cols[..i].contains(c) {
                return Err(Error::ConfigInvalid(format!("schema binds column `{c}` twice")));
            }
        }
        Ok(())
    }
}

fn read_nonempty(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(text)
}

fn parse_f64(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse().map_err(|_| Error::NonNumericCell {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

fn parse_cycle(cell: &str, row: usize, column: &str) -> Result<i64> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(Error::NonNumericCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

/// Reads a fleet, grouping rows by unit (in order of first appearance) and
/// ordering each unit's rows by cycle, keeping file order within a cycle.
/// Row numbers in errors count data rows from 1.
pub fn load_csv(path: &Path, schema: &DataSchema) -> Result<Vec<UnitSeries>> {
    schema.validate()?;
    let text = read_nonempty(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let unit_col = index_of(&schema.unit)?;
    let cycle_col = index_of(&schema.cycle)?;
    let w_cols = schema.descriptors.iter().map(|c| index_of(c)).collect::<Result<Vec<_>>>()?;
    let x_cols = schema.sensors.iter().map(|c| index_of(c)).collect::<Result<Vec<_>>>()?;

    struct Rows {
        cycle: Vec<i64>,
        w: Vec<f64>,
        x: Vec<f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Rows> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let unit = cell(unit_col).trim().to_string();
        let cycle = parse_cycle(cell(cycle_col), row, &schema.cycle)?;
        let g = groups.entry(unit.clone()).or_insert_with(|| {
            order.push(unit);
            Rows { cycle: Vec::new(), w: Vec::new(), x: Vec::new() }
        });
        g.cycle.push(cycle);
        for (&c, name) in w_cols.iter().zip(&schema.descriptors) {
            g.w.push(parse_f64(cell(c), row, name)?);
        }
        for (&c, name) in x_cols.iter().zip(&schema.sensors) {
            g.x.push(parse_f64(cell(c), row, name)?);
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    let (n_w, n_x) = (schema.descriptors.len(), schema.sensors.len());
    order
        .into_iter()
        .map(|unit| {
            let g = groups.remove(&unit).expect("grouped");
            let mut idx: Vec<usize> = (0..g.cycle.len()).collect();
            idx.sort_by_key(|&i| g.cycle[i]);
            let w = Array2::from_shape_fn((idx.len(), n_w), |(r, j)| g.w[idx[r] * n_w + j]);
            let x = Array2::from_shape_fn((idx.len(), n_x), |(r, j)| g.x[idx[r] * n_x + j]);
            let cycle_of = idx.iter().map(|&i| g.cycle[i]).collect();
            UnitSeries::new(
                unit,
                "",
                w,
                x,
                cycle_of,
                schema.descriptors.clone(),
                schema.sensors.clone(),
            )
        })
        .collect()
}

/// Writes units in order with the schema's header. Floats use the shortest
/// decimal form that parses back to the same value.
pub fn save_csv(path: &Path, units: &[UnitSeries], schema: &DataSchema) -> Result<()> {
    schema.validate()?;
    let mut out = String::new();
    out.push_str(&schema.columns().join(","));
    out.push('\n');
    for u in units {
        if u.descriptor_names() != schema.descriptors.as_slice()
            || u.sensor_names() != schema.sensors.as_slice()
        {
            return Err(Error::shape(
                "channel names matching the schema",
                format!("unit {} with {:?}", u.unit_id(), u.channel_names()),
            ));
        }
        for t in 0..u.len() {
            write!(out, "{},{}", u.unit_id(), u.cycle_of()[t]).expect("string write");
            for v in u.w().row(t).iter().chain(u.x().row(t).iter()) {
                write!(out, ",{v}").expect("string write");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = read_nonempty(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (c_unit, c_family, c_fault, c_sensors) =
        (col("unit")?, col("family")?, col("fault_cycle")?, col("faulty_sensors")?);
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |c: usize| record.get(c).unwrap_or("").trim();
        let fault = cell(c_fault);
        out.push(GroundTruth {
            unit_id: cell(c_unit).to_string(),
            family: cell(c_family).to_string(),
            fault_cycle: if fault.is_empty() {
                None
            } else {
                Some(parse_cycle(fault, i + 1, "fault_cycle")?)
            },
            faulty_sensors: cell(c_sensors)
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    Ok(out)
}

pub fn save_ground_truth(path: &Path, truths: &[GroundTruth]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit", "family", "fault_cycle", "faulty_sensors"])?;
    for t in truths {
        let fault = t.fault_cycle.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            t.unit_id.as_str(),
            t.family.as_str(),
            fault.as_str(),
            t.faulty_sensors.join(";").as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &str = "resfault-checkpoint";

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

impl TrainingMeta {
    pub fn from_history(seed: u64, history: &TrainHistory) -> Self {
        let best = history.best();
        Self {
            seed,
            epochs_run: history.epochs.len(),
            best_epoch: history.best_epoch,
            train_loss: best.train_loss,
            val_loss: best.val_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ResidualModel,
    pub meta: TrainingMeta,
}

fn push_values<'a>(out: &mut String, key: &str, values: impl IntoIterator<Item = &'a f64>) {
    out.push_str(key);
    for v in values {
        write!(out, " {v:.16e}").expect("string write");
    }
    out.push('\n');
}

/// Text checkpoint; every float is written with 17 significant digits so
/// the round trip is exact.
pub fn save_checkpoint(path: &Path, model: &ResidualModel, meta: &TrainingMeta) -> Result<()> {
    let net = model.net();
    let std = model.standardizer();
    let mut out = String::new();
    let join = |v: Vec<String>| v.join(" ");
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "format_version {CHECKPOINT_VERSION}").unwrap();
    writeln!(out, "kind {}", model.kind()).unwrap();
    writeln!(out, "layer_dims {}", join(net.layer_dims().iter().map(|d| d.to_string()).collect())).unwrap();
    writeln!(out, "activations {}", join(net.activations().iter().map(|a| a.name().to_string()).collect())).unwrap();
    writeln!(out, "seed {}", meta.seed).unwrap();
    writeln!(out, "epochs_run {}", meta.epochs_run).unwrap();
    writeln!(out, "best_epoch {}", meta.best_epoch).unwrap();
    push_values(&mut out, "train_loss", [&meta.train_loss]);
    push_values(&mut out, "val_loss", [&meta.val_loss]);
    push_values(&mut out, "std_epsilon", [&std.epsilon]);
    push_values(&mut out, "std_mean", std.mean.iter());
    push_values(&mut out, "std_std", std.std.iter());
    for (i, layer) in net.layers().iter().enumerate() {
        for row in layer.weights.outer_iter() {
            push_values(&mut out, &format!("w{i}"), row.iter());
        }
        push_values(&mut out, &format!("b{i}"), layer.biases.iter());
    }
    out.push_str("end\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line, which must start with `key`; returns the remaining fields.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (no, line) = self
            .iter
            .next()
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing `{key}`")))?;
        let mut fields = line.split_whitespace();
        if fields.next() != Some(key) {
            return Err(Error::CorruptCheckpoint(format!(
                "line {}: expected `{key}`, found {line:?}",
                no + 1
            )));
        }
        Ok(fields.collect())
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        match self.expect(key)?.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| Error::CorruptCheckpoint(format!("`{key}` is not a valid value: {v}"))),
            _ => Err(Error::CorruptCheckpoint(format!("`{key}` takes one value"))),
        }
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let fields = self.expect(key)?;
        if fields.len() != n {
            return Err(Error::CorruptCheckpoint(format!(
                "`{key}` has {} values, expected {n}",
                fields.len()
            )));
        }
        fields
            .iter()
            .map(|f| {
                f.parse()
                    .map_err(|_| Error::CorruptCheckpoint(format!("`{key}`: bad number {f}")))
            })
            .collect()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = read_nonempty(path)?;
    parse_checkpoint(&text)
}

/// Loads a checkpoint and checks it holds the expected model kind.
pub fn load_checkpoint_as(path: &Path, expected: ModelKind) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.kind() != expected {
        return Err(Error::KindMismatch {
            found: ckpt.model.kind().name(),
            expected: expected.name(),
        });
    }
    Ok(ckpt)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines { iter: text.lines().enumerate() };
    lines.expect(CHECKPOINT_MAGIC)?;
    let version: u32 = lines.scalar("format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let kind: ModelKind = lines
        .scalar::<String>("kind")?
        .parse()
        .map_err(|_| Error::CorruptCheckpoint("unknown model kind".into()))?;
    let dims = lines
        .expect("layer_dims")?
        .iter()
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::CorruptCheckpoint("bad layer_dims".into()))?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::CorruptCheckpoint("layer_dims needs at least two positive sizes".into()));
    }
    let activations = lines
        .expect("activations")?
        .iter()
        .map(|a| Activation::from_name(a))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::CorruptCheckpoint("unknown activation".into()))?;
    if activations.len() != dims.len() - 1 {
        return Err(Error::CorruptCheckpoint("one activation per layer expected".into()));
    }
    let meta = TrainingMeta {
        seed: lines.scalar("seed")?,
        epochs_run: lines.scalar("epochs_run")?,
        best_epoch: lines.scalar("best_epoch")?,
        train_loss: lines.floats("train_loss", 1)?[0],
        val_loss: lines.floats("val_loss", 1)?[0],
    };
    let width = match kind {
        ModelKind::Ae => dims[0],
        ModelKind::Oc => dims[0] + dims[dims.len() - 1],
    };
    let epsilon = lines.floats("std_epsilon", 1)?[0];
    let standardizer = Standardizer {
        mean: Array1::from(lines.floats("std_mean", width)?),
        std: Array1::from(lines.floats("std_std", width)?),
        epsilon,
    };
    let mut layers = Vec::with_capacity(activations.len());
    for (i, &act) in activations.iter().enumerate() {
        let (fan_in, fan_out) = (dims[i], dims[i + 1]);
        let mut weights = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_out {
            weights.extend(lines.floats(&format!("w{i}"), fan_in)?);
        }
        let weights = Array2::from_shape_vec((fan_out, fan_in), weights).expect("sized");
        let biases = Array1::from(lines.floats(&format!("b{i}"), fan_out)?);
        layers.push(Dense::new(weights, biases, act));
    }
    lines.expect("end")?;
    let net = DenseNet::new(layers).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let model = match kind {
        ModelKind::Ae => ResidualModel::Ae(AeModel::new(net, standardizer)?),
        ModelKind::Oc => ResidualModel::Oc(OcModel::new(net, standardizer)?),
    };
    Ok(Checkpoint { model, meta })
}
