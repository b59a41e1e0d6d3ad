//! Synthetic fleet generator with ground-truth fault injection.
//!
//! Each cycle is a flight with climb, cruise and descent segments. Sensor
//! readings are a fixed smooth function of the four operating descriptors
//! plus Gaussian noise, expressed in a unit-scale latent space and then
//! mapped to physical ranges. Faults add a drift of magnitude
//! `scale · weight · (cycle − onset)^exponent` to the latent value of each
//! faulty sensor, so detectability is set directly in noise units.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruth, UnitSeries};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

pub const DESCRIPTOR_NAMES: [&str; 4] = ["alt", "XM", "TRA", "T2"];
pub const SENSOR_NAMES: [&str; 14] = [
    "T24", "T30", "T48", "T50", "P15", "P2", "P21", "P24", "Ps30", "P40", "P50", "Nf", "Nc", "Wf",
];

/// Physical (centre, half-range) of each sensor, in [`SENSOR_NAMES`] order.
const SENSOR_RANGES: [(f64, f64); 14] = [
    (615.0, 35.0),
    (1500.0, 100.0),
    (1900.0, 110.0),
    (1280.0, 70.0),
    (15.0, 5.0),
    (10.5, 3.5),
    (15.5, 5.0),
    (20.0, 5.0),
    (300.0, 100.0),
    (305.0, 100.0),
    (11.0, 4.0),
    (2150.0, 150.0),
    (8750.0, 250.0),
    (2.2, 0.7),
];

const CLIMB_FRACTION: f64 = 0.15;
const DESCENT_FRACTION: f64 = 0.15;
/// Climb ends and descent starts at this fraction of cruise altitude, below
/// the 0.85 cruise cut.
const TRANSITION_ALTITUDE: f64 = 0.8;
const HIDDEN_UNITS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSensor {
    pub name: String,
    /// Drift multiplier relative to the family's lead sensor.
    #[serde(default = "one")]
    pub weight: f64,
    /// Cycles between the fault onset and this sensor starting to drift.
    #[serde(default)]
    pub onset_lag: u32,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultFamily {
    pub name: String,
    pub sensors: Vec<FaultSensor>,
}

impl FaultFamily {
    fn new(name: &str, sensors: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            sensors: sensors
                .iter()
                .map(|&(n, w)| FaultSensor {
                    name: n.to_string(),
                    weight: w,
                    onset_lag: 0,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Units generated per fault family.
    pub n_units: usize,
    pub families: Vec<FaultFamily>,
    /// Additional units that never develop a fault.
    pub healthy_units: usize,
    pub cycles_per_unit: usize,
    pub rows_per_cycle: usize,
    /// Fault onset cycles are drawn uniformly from this inclusive range.
    pub fault_start_min: i64,
    pub fault_start_max: i64,
    pub drift_scale: f64,
    pub drift_exponent: f64,
    /// Per-unit severity multiplier drawn from `1 ± severity_jitter`.
    pub severity_jitter: f64,
    pub noise_std: f64,
    /// Faults must start after this many cycles.
    #[serde(skip)]
    pub healthy_cycles: usize,
    #[serde(skip)]
    pub seed: u64,
}

/// Drift scale that reaches `multiple · noise_std` after `cycles` cycles.
pub fn calibrated_drift_scale(noise_std: f64, multiple: f64, cycles: f64, exponent: f64) -> f64 {
    multiple * noise_std / cycles.powf(exponent)
}

impl Default for SynthConfig {
    fn default() -> Self {
        let noise_std = 0.05;
        Self {
            n_units: 10,
            families: vec![
                FaultFamily::new("fan", &[("P21", 1.0), ("P15", 0.6), ("Nf", 0.4)]),
                FaultFamily::new("hpc", &[("T30", 1.0), ("Ps30", 0.6), ("Nc", 0.4)]),
                FaultFamily::new("lpt", &[("T50", 1.0), ("P50", 0.6), ("T48", 0.4)]),
            ],
            healthy_units: 0,
            cycles_per_unit: 90,
            rows_per_cycle: 300,
            fault_start_min: 20,
            fault_start_max: 30,
            drift_scale: calibrated_drift_scale(noise_std, 6.0, 10.0, 2.0),
            drift_exponent: 2.0,
            severity_jitter: 0.2,
            noise_std,
            healthy_cycles: 16,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(format!("synth: {m}")));
        if self.families.is_empty() {
            return bad("at least one fault family is required".into());
        }
        if self.n_units == 0 {
            return bad("n_units must be at least 1".into());
        }
        if self.rows_per_cycle < 10 {
            return bad("rows_per_cycle must be at least 10".into());
        }
        if self.fault_start_min <= self.healthy_cycles as i64 {
            return bad(format!(
                "fault_start_min {} must exceed the {} healthy cycles",
                self.fault_start_min, self.healthy_cycles
            ));
        }
        if self.fault_start_max < self.fault_start_min
            || self.fault_start_max >= self.cycles_per_unit as i64
        {
            return bad("fault start range must be ordered and end before the last cycle".into());
        }
        if !(self.noise_std >= 0.0) || !(self.drift_scale >= 0.0) || !(self.drift_exponent > 0.0) {
            return bad("noise_std and drift_scale must be ≥ 0, drift_exponent > 0".into());
        }
        if !(0.0..1.0).contains(&self.severity_jitter) {
            return bad("severity_jitter must lie in [0, 1)".into());
        }
        let mut seen: Vec<Vec<&str>> = Vec::new();
        for fam in &self.families {
            if fam.sensors.is_empty() {
                return bad(format!("family {} has no faulty sensors", fam.name));
            }
            let mut set: Vec<&str> = fam.sensors.iter().map(|s| s.name.as_str()).collect();
            for name in &set {
                if !SENSOR_NAMES.contains(name) {
                    return bad(format!("family {}: unknown sensor {name}", fam.name));
                }
            }
            set.sort_unstable();
            if seen.contains(&set) {
                return bad(format!("family {} repeats another family's sensor set", fam.name));
            }
            seen.push(set);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightPhase {
    Climb,
    Cruise,
    Descent,
}

/// Fleet-wide map from operating descriptors to latent sensor values.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMap {
    input_weights: Array2<f64>,
    input_bias: Array1<f64>,
    output_weights: Array2<f64>,
    output_bias: Array1<f64>,
}

impl SensorMap {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = |sd: f64| Normal::new(0.0, sd).expect("positive deviation");
        let (a, b, c) = (n(0.6), n(0.3), n(1.0 / (HIDDEN_UNITS as f64).sqrt()));
        Self {
            input_weights: Array2::from_shape_simple_fn((HIDDEN_UNITS, 4), || a.sample(&mut rng)),
            input_bias: Array1::from_shape_simple_fn(HIDDEN_UNITS, || b.sample(&mut rng)),
            output_weights: Array2::from_shape_simple_fn((SENSOR_NAMES.len(), HIDDEN_UNITS), || {
                c.sample(&mut rng)
            }),
            output_bias: Array1::zeros(SENSOR_NAMES.len()),
        }
    }

    /// Latent (noise-free, unit-scale) sensor values for one descriptor row.
    pub fn latent(&self, w: &[f64]) -> Array1<f64> {
        let scaled = Array1::from(vec![
            (w[0] - 25_000.0) / 10_000.0,
            (w[1] - 0.6) / 0.15,
            (w[2] - 65.0) / 20.0,
            (w[3] - 470.0) / 30.0,
        ]);
        let h = (self.input_weights.dot(&scaled) + &self.input_bias).mapv(f64::tanh);
        self.output_weights.dot(&h) + &self.output_bias
    }

    /// Physical sensor readings for a latent vector.
    pub fn to_physical(latent: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(latent.len(), |j| {
            let (centre, half) = SENSOR_RANGES[j];
            centre + half * latent[j]
        })
    }

    /// Noise-free physical readings, i.e. `x` for a healthy noiseless unit.
    pub fn evaluate(&self, w: &[f64]) -> Array1<f64> {
        Self::to_physical(&self.latent(w))
    }
}

#[derive(Debug, Clone)]
pub struct SynthUnit {
    pub series: UnitSeries,
    pub truth: GroundTruth,
    pub phases: Vec<FlightPhase>,
}

struct FlightPlan {
    cruise_alt: f64,
    mach: f64,
    tra: f64,
    temp_offset: f64,
}

fn descriptor_row(
    plan: &FlightPlan,
    r: usize,
    rows: usize,
    rng: &mut ChaCha8Rng,
    gauss: &Normal<f64>,
) -> ([f64; 4], FlightPhase) {
    let n_climb = ((rows as f64) * CLIMB_FRACTION).round() as usize;
    let n_desc = ((rows as f64) * DESCENT_FRACTION).round() as usize;
    let n_cruise = rows - n_climb - n_desc;
    let h = plan.cruise_alt;
    let climb_mach = |p: f64| 0.25 + (0.9 * plan.mach - 0.25) * p;
    let (alt, mach, tra, phase) = if r < n_climb {
        let p = r as f64 / n_climb as f64;
        (TRANSITION_ALTITUDE * h * p, climb_mach(p), 88.0 - 4.0 * p, FlightPhase::Climb)
    } else if r < n_climb + n_cruise {
        let p = (r - n_climb) as f64 / n_cruise as f64;
        let wobble = 0.5 + 0.5 * (2.0 * std::f64::consts::TAU * p).sin();
        (
            h * (1.0 - 0.03 * wobble),
            plan.mach + 0.005 * gauss.sample(rng),
            plan.tra + gauss.sample(rng),
            FlightPhase::Cruise,
        )
    } else {
        let p = (rows - 1 - r) as f64 / n_desc as f64;
        (TRANSITION_ALTITUDE * h * p, climb_mach(p), 40.0 + 5.0 * p, FlightPhase::Descent)
    };
    let ambient = 518.67 - 0.003566 * alt.min(36_089.0) + plan.temp_offset;
    let t2 = ambient * (1.0 + 0.2 * mach * mach);
    ([alt, mach, tra, t2], phase)
}

fn unit_label(prefix: &str, no: usize) -> String {
    format!("{prefix}_{:02}", no + 1)
}

/// One unit of `family` (`None` for a unit that stays healthy).
pub fn gen_unit(
    cfg: &SynthConfig,
    family: Option<usize>,
    unit_no: usize,
    unit_seed: u64,
) -> Result<SynthUnit> {
    cfg.validate()?;
    let fam = match family {
        Some(f) => Some(cfg.families.get(f).ok_or_else(|| {
            Error::ConfigInvalid(format!("synth: family index {f} out of range"))
        })?),
        None => None,
    };
    let map = SensorMap::new(derive_seed(cfg.seed, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(unit_seed);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    let fault_cycle = fam.map(|_| rng.random_range(cfg.fault_start_min..=cfg.fault_start_max));
    let severity = 1.0 + cfg.severity_jitter * rng.random_range(-1.0..=1.0);
    let drifting: Vec<(usize, f64, u32)> = fam
        .map(|f| {
            f.sensors
                .iter()
                .map(|s| {
                    let j = SENSOR_NAMES.iter().position(|n| *n == s.name).expect("validated");
                    (j, s.weight, s.onset_lag)
                })
                .collect()
        })
        .unwrap_or_default();

    let rows = cfg.rows_per_cycle;
    let total = cfg.cycles_per_unit * rows;
    let mut w = Array2::zeros((total, 4));
    let mut x = Array2::zeros((total, SENSOR_NAMES.len()));
    let mut cycle_of = Vec::with_capacity(total);
    let mut phases = Vec::with_capacity(total);

    for c in 0..cfg.cycles_per_unit {
        let cycle = c as i64 + 1;
        let plan = FlightPlan {
            cruise_alt: rng.random_range(25_000.0..38_000.0),
            mach: rng.random_range(0.70..0.82),
            tra: rng.random_range(62.0..78.0),
            temp_offset: 5.0 * gauss.sample(&mut rng),
        };
        let drift: Vec<(usize, f64)> = drifting
            .iter()
            .map(|&(j, weight, lag)| {
                let since = fault_cycle.map_or(0, |n| cycle - n - lag as i64).max(0) as f64;
                (j, severity * cfg.drift_scale * weight * since.powf(cfg.drift_exponent))
            })
            .collect();
        for r in 0..rows {
            let t = c * rows + r;
            let (desc, phase) = descriptor_row(&plan, r, rows, &mut rng, &gauss);
            let mut latent = map.latent(&desc);
            if cfg.noise_std > 0.0 {
                latent.mapv_inplace(|v| v + cfg.noise_std * gauss.sample(&mut rng));
            }
            for &(j, d) in &drift {
                latent[j] += d;
            }
            w.row_mut(t).assign(&Array1::from(desc.to_vec()));
            x.row_mut(t).assign(&SensorMap::to_physical(&latent));
            cycle_of.push(cycle);
            phases.push(phase);
        }
    }

    let family_name = fam.map_or("healthy".to_string(), |f| f.name.clone());
    let unit_id = unit_label(&family_name, unit_no);
    let series = UnitSeries::new(
        unit_id.clone(),
        family_name.clone(),
        w,
        x,
        cycle_of,
        DESCRIPTOR_NAMES.iter().map(|s| s.to_string()).collect(),
        SENSOR_NAMES.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok(SynthUnit {
        series,
        truth: GroundTruth {
            unit_id,
            family: family_name,
            fault_cycle,
            faulty_sensors: fam
                .map(|f| f.sensors.iter().map(|s| s.name.clone()).collect())
                .unwrap_or_default(),
        },
        phases,
    })
}

/// `n_units` units per family followed by `healthy_units` fault-free units.
pub fn gen_fleet(cfg: &SynthConfig) -> Result<Vec<SynthUnit>> {
    cfg.validate()?;
    let mut jobs: Vec<(Option<usize>, usize)> = Vec::new();
    for f in 0..cfg.families.len() {
        jobs.extend((0..cfg.n_units).map(|u| (Some(f), u)));
    }
    jobs.extend((0..cfg.healthy_units).map(|u| (None, u)));
    jobs.iter()
        .enumerate()
        .map(|(i, &(fam, no))| gen_unit(cfg, fam, no, derive_seed(cfg.seed, 1_000 + i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::cruise_filter;

    fn small() -> SynthConfig {
        SynthConfig {
            n_units: 2,
            cycles_per_unit: 40,
            rows_per_cycle: 60,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn default_fleet_shape() {
        let cfg = SynthConfig { rows_per_cycle: 20, ..Default::default() };
        let fleet = gen_fleet(&cfg).unwrap();
        assert_eq!(fleet.len(), 30);
        for (i, u) in fleet.iter().enumerate() {
            assert_eq!(u.series.n_sensors(), 14);
            assert_eq!(u.series.n_descriptors(), 4);
            assert_eq!(u.series.n_cycles(), 90);
            let fam = &cfg.families[i / 10];
            assert_eq!(u.truth.family, fam.name);
            let expected: Vec<String> = fam.sensors.iter().map(|s| s.name.clone()).collect();
            assert_eq!(u.truth.faulty_sensors, expected);
            let n = u.truth.fault_cycle.unwrap();
            assert!((20..=30).contains(&n));
        }
    }

    #[test]
    fn same_seed_same_fleet() {
        let a = gen_fleet(&small()).unwrap();
        let b = gen_fleet(&small()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.series, y.series);
            assert_eq!(x.truth, y.truth);
        }
        let c = gen_fleet(&SynthConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a[0].series, c[0].series);
    }

    #[test]
    fn noiseless_healthy_unit_follows_the_map() {
        let cfg = SynthConfig { noise_std: 0.0, ..small() };
        let u = gen_unit(&cfg, None, 0, 77).unwrap();
        assert!(u.truth.fault_cycle.is_none());
        let map = SensorMap::new(derive_seed(cfg.seed, 0));
        for t in (0..u.series.len()).step_by(37) {
            let w = u.series.w().row(t).to_vec();
            assert_eq!(map.evaluate(&w), u.series.x().row(t));
        }
    }

    #[test]
    fn cruise_filter_recovers_cruise_segment() {
        let u = gen_unit(&small(), Some(0), 0, 3).unwrap();
        let kept = cruise_filter(&u.series, 0, 0.85).unwrap();
        let expected = u.phases.iter().filter(|&&p| p == FlightPhase::Cruise).count();
        assert_eq!(kept.series.len(), expected);
        assert!(kept.dropped_cycles.is_empty());
        // Row-level identity: every kept row is a cruise row.
        let cruise_rows: Vec<usize> =
            (0..u.series.len()).filter(|&r| u.phases[r] == FlightPhase::Cruise).collect();
        assert_eq!(u.series.select_rows(&cruise_rows).unwrap(), kept.series);
        assert!(expected as f64 >= 0.6 * u.series.len() as f64);
    }

    #[test]
    fn drift_is_zero_before_onset_and_non_decreasing_after() {
        let cfg = SynthConfig { noise_std: 0.0, ..small() };
        let u = gen_unit(&cfg, Some(1), 0, 11).unwrap();
        let n_true = u.truth.fault_cycle.unwrap();
        let map = SensorMap::new(derive_seed(cfg.seed, 0));
        let t30 = 1;
        let half = SENSOR_RANGES[t30].1;
        let mut last = 0.0;
        for t in (0..u.series.len()).step_by(cfg.rows_per_cycle) {
            let cycle = u.series.cycle_of()[t];
            let clean = map.evaluate(&u.series.w().row(t).to_vec());
            let drift = (u.series.x()[[t, t30]] - clean[t30]) / half;
            if cycle <= n_true {
                assert!(drift.abs() < 1e-9);
            } else {
                assert!(drift >= last - 1e-9);
                last = drift;
            }
        }
        assert!(last > 0.0);
        // P15 is not in the hpc family.
        let p15 = 4;
        let t = u.series.len() - 1;
        let clean = map.evaluate(&u.series.w().row(t).to_vec());
        assert!((u.series.x()[[t, p15]] - clean[p15]).abs() < 1e-9);
    }

    #[test]
    fn healthy_window_is_stationary() {
        let cfg = SynthConfig { rows_per_cycle: 600, ..small() };
        let u = gen_unit(&cfg, Some(2), 0, 21).unwrap();
        let map = SensorMap::new(derive_seed(cfg.seed, 0));
        let rows = cfg.rows_per_cycle;
        // Latent residual means over the first and second half of the
        // healthy window.
        let mean = |cycles: std::ops::Range<usize>| -> Vec<f64> {
            let mut acc = vec![0.0; 14];
            let mut n = 0.0;
            for t in cycles.start * rows..cycles.end * rows {
                let clean = map.latent(&u.series.w().row(t).to_vec());
                for j in 0..14 {
                    let (c, h) = SENSOR_RANGES[j];
                    acc[j] += (u.series.x()[[t, j]] - c) / h - clean[j];
                }
                n += 1.0;
            }
            acc.iter().map(|v| v / n).collect()
        };
        let (a, b) = (mean(0..8), mean(8..16));
        let tol = 0.1 * cfg.noise_std;
        for j in 0..14 {
            assert!((a[j] - b[j]).abs() < tol, "sensor {j}: {} {}", a[j], b[j]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { families: vec![], ..small() }.validate().is_err());
        assert!(SynthConfig { fault_start_min: 16, ..small() }.validate().is_err());
        let mut dup = small();
        dup.families[1] = dup.families[0].clone();
        dup.families[1].name = "copy".into();
        assert!(dup.validate().is_err());
        let mut unknown = small();
        unknown.families[0].sensors[0].name = "T99".into();
        assert!(unknown.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn calibration_reaches_target() {
        let s = calibrated_drift_scale(0.05, 6.0, 10.0, 2.0);
        assert!((s * 10f64.powi(2) - 0.3).abs() < 1e-15);
    }
}
