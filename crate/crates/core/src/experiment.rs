//! The end-to-end protocol: preprocess a fleet, split healthy rows, train
//! residual models, fit thresholds, detect per unit and score segmentation,
//! repeated over seeded realisations.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use crate::config::{RunConfig, StatsSource};
use crate::data::{split, GroundTruth, Split, SplitSpec, UnitSeries};
use crate::detector::{cycle_average, detect, fit_stats, mean_delay, CycleHi, DetectionReport, HealthyStats};
use crate::error::{Error, Result};
use crate::hi::{aggregated_hi, sensorwise_hi, HiKind, HiSeries};
use crate::models::{train_ae, train_oc, ModelKind, ResidualModel};
use crate::nn::{TrainConfig, TrainHistory};
use crate::preprocess::{select_rows, PreprocessConfig, Standardizer};
use crate::segmentation::{
    pca_2d, signature_matrix, silhouette, snapshots_at, trigger_timeline, Normalization, Pca2d,
    TriggerCategory, UnitSignature, UnitTrace,
};

pub const HI_KINDS: [HiKind; 2] = [HiKind::Aggregated, HiKind::Sensorwise];
pub const MODEL_KINDS: [ModelKind; 2] = [ModelKind::Ae, ModelKind::Oc];

/// Preprocessed units with optional ground truth, aligned by position.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub units: Vec<UnitSeries>,
    pub truths: Vec<Option<GroundTruth>>,
}

impl Fleet {
    /// Runs row selection on every unit and attaches ground truth by unit
    /// id. Units without a dataset id take their fault family as one.
    pub fn prepare(raw: &[UnitSeries], truths: &[GroundTruth], cfg: &PreprocessConfig) -> Result<Self> {
        cfg.validate()?;
        if raw.is_empty() {
            return Err(Error::EmptyFleet);
        }
        let units = raw
            .par_iter()
            .map(|u| select_rows(u, cfg).map(|f| f.series))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_truth(units, truths))
    }

    pub fn with_truth(units: Vec<UnitSeries>, truths: &[GroundTruth]) -> Self {
        let truths: Vec<Option<GroundTruth>> = units
            .iter()
            .map(|u| truths.iter().find(|t| t.unit_id == u.unit_id()).cloned())
            .collect();
        let units = units
            .into_iter()
            .zip(&truths)
            .map(|(u, t)| match t {
                Some(t) if u.dataset_id().is_empty() => u.with_dataset_id(t.family.clone()),
                _ => u,
            })
            .collect();
        Self { units, truths }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Units known to never develop a fault.
    pub fn is_healthy_only(&self, i: usize) -> bool {
        matches!(&self.truths[i], Some(t) if t.fault_cycle.is_none())
    }

    /// Positions of the units used for training.
    pub fn training_units(&self, include_healthy_only: bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| include_healthy_only || !self.is_healthy_only(i))
            .collect()
    }

    /// Fault family (or dataset id when there is no ground truth).
    pub fn label(&self, i: usize) -> String {
        match &self.truths[i] {
            Some(t) => t.family.clone(),
            None => self.units[i].dataset_id().to_string(),
        }
    }
}

/// Standardized healthy training and validation rows of one split.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub split: Split,
    pub standardizer: Standardizer,
    pub train_z: Array2<f64>,
    pub val_z: Array2<f64>,
    /// The same rows before standardization.
    pub train_raw: Array2<f64>,
    pub val_raw: Array2<f64>,
    pub n_sensors: usize,
}

/// Splits `units` and fits the standardizer on the training rows only.
pub fn training_data(units: &[UnitSeries], spec: &SplitSpec, epsilon: f64) -> Result<TrainingData> {
    let s = split(units, spec)?;
    let train_raw = s.train.gather_z(units);
    let val_raw = s.validation.gather_z(units);
    let standardizer = Standardizer::fit_with_epsilon(train_raw.view(), epsilon)?;
    let train_z = standardizer.apply(train_raw.view())?;
    let val_z = standardizer.apply(val_raw.view())?;
    Ok(TrainingData {
        split: s,
        standardizer,
        train_z,
        val_z,
        train_raw,
        val_raw,
        n_sensors: units[0].n_sensors(),
    })
}

pub fn train_model(
    kind: ModelKind,
    data: &TrainingData,
    cfg: &TrainConfig,
) -> Result<(ResidualModel, TrainHistory)> {
    let std = data.standardizer.clone();
    Ok(match kind {
        ModelKind::Ae => {
            let (m, h) = train_ae(data.train_z.view(), data.val_z.view(), cfg, std)?;
            (ResidualModel::Ae(m), h)
        }
        ModelKind::Oc => {
            let (m, h) = train_oc(data.train_z.view(), data.val_z.view(), data.n_sensors, cfg, std)?;
            (ResidualModel::Oc(m), h)
        }
    })
}

fn hi_values(residuals: &Array2<f64>, kind: HiKind) -> Array2<f64> {
    match kind {
        HiKind::Aggregated => aggregated_hi(residuals.view()),
        HiKind::Sensorwise => sensorwise_hi(residuals.view()),
    }
}

/// Threshold statistics of the indicator on healthy held-out rows, using
/// the model's own standardizer.
pub fn healthy_stats(
    model: &ResidualModel,
    data: &TrainingData,
    kind: HiKind,
    source: StatsSource,
) -> Result<HealthyStats> {
    let raw = match source {
        StatsSource::Validation => data.val_raw.clone(),
        StatsSource::TrainAndValidation => {
            concatenate(Axis(0), &[data.train_raw.view(), data.val_raw.view()]).expect("same width")
        }
    };
    let z = model.standardizer().apply(raw.view())?;
    fit_stats(hi_values(&model.residuals(z.view())?, kind).view())
}

/// Indicator over every row of `unit`.
pub fn unit_hi(model: &ResidualModel, unit: &UnitSeries, kind: HiKind) -> Result<HiSeries> {
    let z = model.standardizer().apply(unit.z().view())?;
    let r = model.residuals(z.view())?;
    HiSeries::from_residuals(
        r.view(),
        kind,
        model.kind(),
        &model.residual_channels(&unit.z_channel_names()),
        unit.cycle_of(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitResult {
    pub report: DetectionReport,
    pub cycle_hi: CycleHi,
    pub label: String,
    /// Whether ground truth was available for this unit.
    pub has_truth: bool,
}

/// Detection on the cycles after the healthy window.
pub fn evaluate_unit(
    model: &ResidualModel,
    stats: &HealthyStats,
    unit: &UnitSeries,
    truth: Option<&GroundTruth>,
    label: String,
    kind: HiKind,
    healthy_cycles: usize,
    n_wait: usize,
) -> Result<UnitResult> {
    let test = unit.cycles_from(healthy_cycles).ok_or_else(|| Error::UnitTooShort {
        unit: unit.unit_id().to_string(),
        cycles: unit.n_cycles(),
        required: healthy_cycles,
    })?;
    let cycle_hi = cycle_average(&unit_hi(model, &test, kind)?);
    let detection = detect(&cycle_hi, stats, n_wait)?;
    let report = DetectionReport::new(
        unit.unit_id(),
        unit.dataset_id(),
        &cycle_hi,
        detection,
        truth.and_then(|t| t.fault_cycle),
    );
    Ok(UnitResult {
        report,
        cycle_hi,
        label,
        has_truth: truth.is_some(),
    })
}

/// One (model, indicator) pairing evaluated over the fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct ComboResult {
    pub model: ModelKind,
    pub hi: HiKind,
    pub channel_names: Vec<String>,
    pub stats: HealthyStats,
    pub units: Vec<UnitResult>,
}

pub fn evaluate_fleet(
    model: &ResidualModel,
    data: &TrainingData,
    fleet: &Fleet,
    kind: HiKind,
    cfg: &RunConfig,
) -> Result<ComboResult> {
    let stats = healthy_stats(model, data, kind, cfg.detect.stats_source)?;
    let units = (0..fleet.len())
        .map(|i| {
            evaluate_unit(
                model,
                &stats,
                &fleet.units[i],
                fleet.truths[i].as_ref(),
                fleet.label(i),
                kind,
                cfg.split.healthy_cycles_per_unit,
                cfg.detect.n_wait,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let residual_names = model.residual_channels(&fleet.units[0].z_channel_names());
    let channel_names = match kind {
        HiKind::Aggregated => vec!["aggregated".to_string()],
        HiKind::Sensorwise => residual_names,
    };
    Ok(ComboResult {
        model: model.kind(),
        hi: kind,
        channel_names,
        stats,
        units,
    })
}

impl ComboResult {
    pub fn mean_delay(&self) -> Option<f64> {
        let reports: Vec<DetectionReport> = self.units.iter().map(|u| u.report.clone()).collect();
        mean_delay(&reports)
    }

    fn fpr_over(&self, keep: impl Fn(&UnitResult) -> bool) -> Option<f64> {
        let units: Vec<&UnitResult> = self.units.iter().filter(|u| u.has_truth && keep(u)).collect();
        if units.is_empty() {
            return None;
        }
        let fp = units.iter().filter(|u| u.report.is_false_positive()).count();
        Some(fp as f64 / units.len() as f64)
    }

    /// False-positive rate over every unit with ground truth.
    pub fn false_positive_rate(&self) -> Option<f64> {
        self.fpr_over(|_| true)
    }

    /// False-positive rate over units that never develop a fault.
    pub fn healthy_only_fpr(&self) -> Option<f64> {
        self.fpr_over(|u| u.report.fault_cycle.is_none())
    }

    /// Faulty units with ground truth, for segmentation.
    pub fn traces(&self) -> Vec<UnitTrace<'_>> {
        self.units
            .iter()
            .filter(|u| u.report.fault_cycle.is_some())
            .map(|u| UnitTrace {
                report: &u.report,
                cycle_hi: &u.cycle_hi,
                fault_label: &u.label,
            })
            .collect()
    }

    /// Silhouette of the faulty units' signatures at `n₀ + k`; `None` when
    /// fewer than two families are represented.
    pub fn silhouette_at(&self, k: usize, norm: Normalization) -> Result<Option<f64>> {
        let sigs = snapshots_at(&self.traces(), k, norm);
        let labels: Vec<&str> = sigs.iter().map(|s| s.fault_label.as_str()).collect();
        match silhouette(signature_matrix(&sigs).view(), &labels) {
            Ok(s) => Ok(Some(s)),
            Err(Error::SingleCluster) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn signatures(&self, k: usize, norm: Normalization) -> Vec<UnitSignature> {
        snapshots_at(&self.traces(), k, norm)
    }

    /// Signatures at `n₀ + k` and their 2-D projection.
    pub fn pca(&self, k: usize, norm: Normalization) -> Result<(Vec<UnitSignature>, Pca2d)> {
        let sigs = self.signatures(k, norm);
        let labels: Vec<&str> = sigs.iter().map(|s| s.fault_label.as_str()).collect();
        if labels.iter().all(|l| *l == labels.first().copied().unwrap_or("")) {
            return Err(Error::SingleCluster);
        }
        let pca = pca_2d(signature_matrix(&sigs).view())?;
        Ok((sigs, pca))
    }

    /// Trigger categories per alarmed faulty unit.
    pub fn timelines(&self, checkpoints: &[usize]) -> Result<Vec<(String, String, Vec<TriggerCategory>)>> {
        self.traces()
            .iter()
            .filter(|t| t.report.alarm_cycle.is_some())
            .map(|t| {
                let cats = trigger_timeline(t.report, &self.stats, t.cycle_hi, checkpoints)?;
                Ok((t.report.unit_id.clone(), t.fault_label.to_string(), cats))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: ResidualModel,
    pub history: TrainHistory,
    pub train_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Realisation {
    pub index: usize,
    pub split_seed: u64,
    pub models: Vec<ModelRun>,
    pub combos: Vec<ComboResult>,
}

impl Realisation {
    pub fn combo(&self, model: ModelKind, hi: HiKind) -> Option<&ComboResult> {
        self.combos.iter().find(|c| c.model == model && c.hi == hi)
    }
}

/// Training subset of the fleet for one realisation.
pub fn realisation_data(fleet: &Fleet, cfg: &RunConfig, index: usize) -> Result<TrainingData> {
    let train_units: Vec<UnitSeries> = fleet
        .training_units(cfg.experiment.train_on_healthy_units)
        .into_iter()
        .map(|i| fleet.units[i].clone())
        .collect();
    training_data(&train_units, &cfg.split_spec(index), cfg.preprocess.epsilon)
}

/// Re-split, retrain every model and evaluate every indicator.
pub fn run_realisation(fleet: &Fleet, cfg: &RunConfig, index: usize, kinds: &[ModelKind]) -> Result<Realisation> {
    let data = realisation_data(fleet, cfg, index)?;
    let train_cfg = cfg.train_config(index);
    let models = kinds
        .par_iter()
        .map(|&k| {
            let (model, history) = train_model(k, &data, &train_cfg)?;
            Ok(ModelRun {
                model,
                history,
                train_seed: train_cfg.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut combos = Vec::new();
    for run in &models {
        for hi in HI_KINDS {
            combos.push(evaluate_fleet(&run.model, &data, fleet, hi, cfg)?);
        }
    }
    Ok(Realisation {
        index,
        split_seed: cfg.split_seed(index),
        models,
        combos,
    })
}

/// Every realisation of the configured protocol, in index order.
pub fn run_experiment(fleet: &Fleet, cfg: &RunConfig, kinds: &[ModelKind]) -> Result<Vec<Realisation>> {
    cfg.validate()?;
    (0..cfg.experiment.realisations)
        .into_par_iter()
        .map(|r| run_realisation(fleet, cfg, r, kinds))
        .collect()
}

/// Mean of the defined values, `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Silhouette at each `k` averaged over the realisations where it is
/// defined.
pub fn mean_silhouette_curve(
    realisations: &[Realisation],
    model: ModelKind,
    hi: HiKind,
    ks: impl IntoIterator<Item = usize>,
    norm: Normalization,
) -> Result<Vec<(usize, Option<f64>)>> {
    ks.into_iter()
        .map(|k| {
            let per = realisations
                .iter()
                .filter_map(|r| r.combo(model, hi))
                .map(|c| c.silhouette_at(k, norm))
                .collect::<Result<Vec<_>>>()?;
            Ok((k, mean_defined(per)))
        })
        .collect()
}
