//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any gating criterion fails.
//!
//! Oracles here are written independently of the library: plain-loop
//! forward passes, brute-force window scans, all-pairs silhouettes and a
//! power-iteration eigen-solver.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use resfault::config::RunConfig;
use resfault::data::GroundTruth;
use resfault::detector::{cycle_average_rows, detect, fit_stats, CycleHi, HealthyStats};
use resfault::experiment::{mean_defined, mean_silhouette_curve, run_experiment, Fleet, MODEL_KINDS};
use resfault::hi::{aggregated_hi, sensorwise_hi, HiKind};
use resfault::io::{load_csv, load_ground_truth};
use resfault::models::ModelKind;
use resfault::nn::{backward, Activation, AdamConfig, AdamState, Dense, DenseNet};
use resfault::report::{report_rows, summarize};
use resfault::segmentation::{pca_2d, silhouette};
use resfault::synth::gen_fleet;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- 1

struct Layer {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    relu: bool,
}

/// Loss and every hidden pre-activation, with plain loops.
fn oracle_loss(layers: &[Layer], x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let mut pre_hidden = vec![Vec::new(); layers.len()];
    let mut total = 0.0;
    for (row, target) in x.iter().zip(y) {
        let mut a = row.clone();
        for (l, layer) in layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.b.len());
            for (wr, b) in layer.w.iter().zip(&layer.b) {
                let z: f64 = wr.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + b;
                if layer.relu {
                    pre_hidden[l].push(z);
                    next.push(z.max(0.0));
                } else {
                    next.push(z);
                }
            }
            a = next;
        }
        total += a.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
    }
    (total / x.len() as f64, pre_hidden)
}

/// Weight `(i, j)` of layer `l`, or its bias `i` when `j` is the fan-in.
fn param(layers: &mut [Layer], l: usize, i: usize, j: usize) -> &mut f64 {
    if j == layers[l].w[i].len() {
        &mut layers[l].b[i]
    } else {
        &mut layers[l].w[i][j]
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (h, kink) = (1e-5, 1e-4);
    let (mut checked, mut excluded, mut worst) = (0usize, 0usize, 0.0f64);
    let n_nets = 25;
    for _ in 0..n_nets {
        let n_layers = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..=n_layers).map(|_| rng.random_range(1..=8)).collect();
        let layers: Vec<Layer> = (0..n_layers)
            .map(|l| Layer {
                w: (0..dims[l + 1])
                    .map(|_| (0..dims[l]).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                b: (0..dims[l + 1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
                relu: l + 1 < n_layers,
            })
            .collect();
        let batch = rng.random_range(1..=6);
        let x: Vec<Vec<f64>> = (0..batch).map(|_| (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<Vec<f64>> =
            (0..batch).map(|_| (0..dims[n_layers]).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();

        let net = DenseNet::new(
            layers
                .iter()
                .map(|l| {
                    let w = Array2::from_shape_fn((l.b.len(), l.w[0].len()), |(i, j)| l.w[i][j]);
                    let act = if l.relu { Activation::Relu } else { Activation::Linear };
                    Dense::new(w, Array1::from(l.b.clone()), act)
                })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let xa = Array2::from_shape_fn((batch, dims[0]), |(i, j)| x[i][j]);
        let ya = Array2::from_shape_fn((batch, dims[n_layers]), |(i, j)| y[i][j]);
        let (loss, grads) = backward(&net, xa.view(), ya.view()).map_err(|e| e.to_string())?;

        let (oracle, pre) = oracle_loss(&layers, &x, &y);
        ensure!((loss - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "loss {loss} vs oracle {oracle}");
        // Parameters upstream of a near-kink pre-activation are excluded.
        let last_kink = (0..n_layers).filter(|&l| pre[l].iter().any(|z| z.abs() < kink)).max();

        let mut layers = layers;
        for l in 0..n_layers {
            let n_params = layers[l].b.len() * (layers[l].w[0].len() + 1);
            if last_kink.is_some_and(|k| l <= k) {
                excluded += n_params;
                continue;
            }
            for i in 0..layers[l].b.len() {
                for j in 0..=layers[l].w[i].len() {
                    let analytic = if j == layers[l].w[i].len() {
                        grads.layers[l].biases[i]
                    } else {
                        grads.layers[l].weights[[i, j]]
                    };
                    let original = *param(&mut layers, l, i, j);
                    *param(&mut layers, l, i, j) = original + h;
                    let up = oracle_loss(&layers, &x, &y).0;
                    *param(&mut layers, l, i, j) = original - h;
                    let down = oracle_loss(&layers, &x, &y).0;
                    *param(&mut layers, l, i, j) = original;
                    let numeric = (up - down) / (2.0 * h);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                    checked += 1;
                    ensure!(rel < 1e-5, "layer {l} ({i},{j}): analytic {analytic} numeric {numeric} rel {rel:e}");
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(checked > 200, "only {checked} parameters checked");
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!(
        "{n_nets} nets, {checked} parameters checked ({excluded} near a ReLU kink excluded), max rel err {worst:.1e}, {secs:.2} s"
    ))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(1, cfg);
    let mut p = [1.5f64];
    let g = [0.5f64, -0.25];

    // Hand-expanded bias-corrected updates.
    let m1 = 0.1 * 0.5;
    let v1 = 0.001 * 0.25;
    let p1 = 1.5 - 0.001 * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + 1e-8);
    let m2 = 0.9 * m1 + 0.1 * -0.25;
    let v2 = 0.999 * v1 + 0.001 * 0.0625;
    let c1 = 1.0 - 0.9f64 * 0.9;
    let c2 = 1.0 - 0.999f64 * 0.999;
    let p2 = p1 - 0.001 * (m2 / c1) / ((v2 / c2).sqrt() + 1e-8);

    state.step(p.iter_mut(), [g[0]].iter()).map_err(|e| e.to_string())?;
    ensure!((p[0] - p1).abs() <= 1e-12, "step 1: {} vs {p1}", p[0]);
    state.step(p.iter_mut(), [g[1]].iter()).map_err(|e| e.to_string())?;
    ensure!((p[0] - p2).abs() <= 1e-12, "step 2: {} vs {p2}", p[0]);
    ensure!((state.first_moment[0] - m2).abs() <= 1e-15 && (state.second_moment[0] - v2).abs() <= 1e-15, "moments");
    Ok(format!("θ₁ = {p1:.15}, θ₂ = {p2:.15}"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let s = fit_stats(array![[0.0], [2.0]].view()).map_err(|e| e.to_string())?;
    ensure!(s.mu[0] == 1.0 && s.sigma[0] == 1.0 && s.tau[0] == 4.0, "μ={} σ={} τ={}", s.mu[0], s.sigma[0], s.tau[0]);
    let constant = Array2::from_elem((50, 3), 0.7);
    let s = fit_stats(constant.view()).map_err(|e| e.to_string())?;
    ensure!(s.tau == s.mu, "constant input: τ {:?} μ {:?}", s.tau, s.mu);
    let hi = cycle_average_rows(constant.view(), &(0..50).map(|i| i / 5).collect::<Vec<i64>>());
    for n_wait in 1..=4 {
        let d = detect(&hi, &s, n_wait).map_err(|e| e.to_string())?;
        ensure!(d.alarm.is_none(), "alarm on a constant series with n_wait {n_wait}");
    }
    Ok("μ=1 σ=1 τ=4 on [0,2]; constant series never alarms".into())
}

// ---------------------------------------------------------------- 4

/// First cycle position at which some channel's last `n_wait` entries are
/// all set, and those channels.
fn brute_force_alarm(m: &[Vec<bool>], n_wait: usize) -> Option<(usize, Vec<usize>)> {
    let k = m.first().map_or(0, Vec::len);
    for end in 0..m.len() {
        if end + 1 < n_wait {
            continue;
        }
        let chans: Vec<usize> = (0..k).filter(|&c| (end + 1 - n_wait..=end).all(|t| m[t][c])).collect();
        if !chans.is_empty() {
            return Some((end, chans));
        }
    }
    None
}

fn criterion_4() -> Outcome {
    let mut cases = 0u64;
    let mut no_alarm = 0u64;
    for k in 1..=2usize {
        let stats = HealthyStats {
            mu: Array1::zeros(k),
            sigma: Array1::zeros(k),
            tau: Array1::from_elem(k, 1.0),
            fitted_on: 2,
        };
        for c in 1..=8usize {
            for bits in 0u32..(1 << (c * k)) {
                let m: Vec<Vec<bool>> =
                    (0..c).map(|t| (0..k).map(|ch| bits >> (t * k + ch) & 1 == 1).collect()).collect();
                let hi = CycleHi {
                    cycles: (0..c as i64).map(|t| 100 + t).collect(),
                    values: Array2::from_shape_fn((c, k), |(t, ch)| if m[t][ch] { 2.0 } else { 1.0 }),
                };
                for n_wait in 1..=4 {
                    let got = detect(&hi, &stats, n_wait).map_err(|e| e.to_string())?;
                    let want = brute_force_alarm(&m, n_wait);
                    let got_pair = got.alarm.as_ref().map(|a| (a.position, a.channels.clone()));
                    ensure!(got_pair == want, "K={k} C={c} bits={bits:b} n_wait={n_wait}: {got_pair:?} vs {want:?}");
                    if let Some(a) = &got.alarm {
                        ensure!(a.cycle == 100 + a.position as i64, "alarm cycle label");
                    } else {
                        no_alarm += 1;
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} (matrix, N_wait) cases agree, {no_alarm} without alarm"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (n, k) = (rng.random_range(1..40), rng.random_range(1..20));
        let r = Array2::from_shape_simple_fn((n, k), || rng.random_range(-10.0..10.0));
        let agg = aggregated_hi(r.view());
        let sw = sensorwise_hi(r.view());
        for i in 0..n {
            let lhs = agg[[i, 0]].powi(2);
            let rhs: f64 = sw.row(i).iter().map(|v| v * v).sum();
            worst = worst.max((lhs - rhs).abs() / rhs.max(1.0));
        }
    }
    ensure!(worst < 1e-10, "max deviation {worst:e}");
    let five = aggregated_hi(array![[3.0, 4.0]].view())[[0, 0]];
    ensure!(five == 5.0, "[3,4] → {five}");
    Ok(format!("max relative deviation {worst:.1e}; [3,4] → 5"))
}

// ---------------------------------------------------------------- 6

fn oracle_silhouette(p: &[Vec<f64>], labels: &[usize]) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let distinct: Vec<usize> = {
        let mut v = labels.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut s = 0.0;
    for i in 0..p.len() {
        let own: Vec<usize> = (0..p.len()).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(&p[i], &p[j])).sum::<f64>() / own.len() as f64;
        let b = distinct
            .iter()
            .filter(|&&l| l != labels[i])
            .map(|&l| {
                let others: Vec<usize> = (0..p.len()).filter(|&j| labels[j] == l).collect();
                others.iter().map(|&j| d(&p[i], &p[j])).sum::<f64>() / others.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            s += (b - a) / a.max(b);
        }
    }
    s / p.len() as f64
}

fn blobs(rng: &mut ChaCha8Rng, n: usize, centres: &[[f64; 2]]) -> (Array2<f64>, Vec<usize>) {
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Array2::zeros((n * centres.len(), 2));
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for i in 0..n {
            pts[[c * n + i, 0]] = centre[0] + g.sample(rng);
            pts[[c * n + i, 1]] = centre[1] + g.sample(rng);
            labels.push(c);
        }
    }
    (pts, labels)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut sets = 0;
    while sets < 200 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=6);
        let n_labels = rng.random_range(2..=4);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_labels)).collect();
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            continue;
        }
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let arr = Array2::from_shape_fn((n, d), |(i, j)| pts[i][j]);
        let got = silhouette(arr.view(), &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle_silhouette(&pts, &labels)).abs());
        sets += 1;
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    let (p, l) = blobs(&mut rng, 100, &[[0.0, 0.0], [20.0, 0.0]]);
    let separated = silhouette(p.view(), &l).map_err(|e| e.to_string())?;
    ensure!(separated > 0.9, "separated blobs {separated}");
    let (p, l) = blobs(&mut rng, 200, &[[0.0, 0.0], [0.0, 0.0]]);
    let overlapping = silhouette(p.view(), &l).map_err(|e| e.to_string())?;
    ensure!(overlapping.abs() <= 0.1, "overlapping blobs {overlapping}");
    Ok(format!(
        "{sets} random sets within {worst:.1e}; separated {separated:.3}, overlapping {overlapping:.3}"
    ))
}

// ---------------------------------------------------------------- 7

/// Top eigenvectors of a symmetric matrix by power iteration with
/// deflation.
fn power_eigen(mut a: Vec<Vec<f64>>, count: usize) -> Vec<(f64, Vec<f64>)> {
    let d = a.len();
    let mut out = Vec::new();
    for e in 0..count {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i + e) as f64 * 0.37).collect();
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| a[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter_mut().for_each(|x| *x /= norm);
            let delta: f64 = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).sum();
            v = w;
            lambda = norm;
            if delta < 1e-15 {
                break;
            }
        }
        let pivot = (0..d).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap();
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..d {
            for j in 0..d {
                a[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let (n, d) = (rng.random_range(10..60), rng.random_range(2..8));
        // Columns with well separated scales keep the top eigenvalues apart.
        let scales: Vec<f64> = (0..d).map(|j| 4.0 / (1.0 + j as f64).powf(1.5)).collect();
        let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-0.2..0.2)).collect()).collect();
        let raw: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|j| scales[j] * rng.random_range(-1.0..1.0)).collect()).collect();
        let pts: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| (0..d).map(|j| r[j] + (0..d).map(|k| mix[j][k] * r[k]).sum::<f64>() + trial as f64).collect())
            .collect();
        let mean: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| pts.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / (n as f64 - 1.0))
                    .collect()
            })
            .collect();
        let eig = power_eigen(cov, 2);
        let arr = Array2::from_shape_fn((n, d), |(i, j)| pts[i][j]);
        let pca = pca_2d(arr.view()).map_err(|e| e.to_string())?;
        for (axis, (lambda, v)) in eig.iter().enumerate() {
            ensure!((pca.eigenvalues[axis] - lambda).abs() < 1e-8 * lambda.max(1.0), "eigenvalue {axis}");
            for i in 0..n {
                let proj: f64 = (0..d).map(|j| (pts[i][j] - mean[j]) * v[j]).sum();
                worst = worst.max((pca.coords[[i, axis]] - proj).abs());
            }
        }
    }
    ensure!(worst < 1e-8, "max projection deviation {worst:e}");

    let dir = [0.3, -1.2, 0.5, 2.0];
    let line = Array2::from_shape_fn((30, 4), |(i, j)| 1.0 + j as f64 + (i as f64 - 14.5) * 0.37 * dir[j]);
    let pca = pca_2d(line.view()).map_err(|e| e.to_string())?;
    let pc2 = pca.coords.column(1).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure!(pc2 < 1e-10, "rank-1 PC2 magnitude {pc2:e}");
    Ok(format!("projections within {worst:.1e} of power iteration; rank-1 PC2 max {pc2:.1e}"))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.seed = 2024;
    cfg.synth.healthy_units = 10;
    cfg.validate().map_err(|e| e.to_string())?;
    let units = gen_fleet(&cfg.synth_config()).map_err(|e| e.to_string())?;
    let faulty = units.iter().filter(|u| u.truth.fault_cycle.is_some()).count();
    ensure!(faulty == 30 && units.len() == 40, "fleet of {} units, {faulty} faulty", units.len());
    let raw: Vec<_> = units.iter().map(|u| u.series.clone()).collect();
    let truths: Vec<GroundTruth> = units.iter().map(|u| u.truth.clone()).collect();
    let fleet = Fleet::prepare(&raw, &truths, &cfg.preprocess).map_err(|e| e.to_string())?;
    let runs = run_experiment(&fleet, &cfg, &MODEL_KINDS).map_err(|e| e.to_string())?;

    let rows: Vec<_> = runs.iter().flat_map(|r| r.combos.iter().flat_map(|c| report_rows(r.index, c))).collect();
    let (summary, _) = summarize(&rows);
    let delay = |m: ModelKind, h: HiKind| {
        summary.iter().find(|s| s.model == m && s.hi == h).and_then(|s| s.mean_delay).unwrap_or(f64::INFINITY)
    };
    let healthy_fpr = |m: ModelKind| {
        mean_defined(runs.iter().map(|r| r.combo(m, HiKind::Aggregated).and_then(|c| c.healthy_only_fpr())))
    };
    let sil = |m: ModelKind| -> Result<f64, String> {
        let k = cfg.segment.snapshot_k;
        let curve = mean_silhouette_curve(&runs, m, HiKind::Sensorwise, [k], cfg.segment.normalization)
            .map_err(|e| e.to_string())?;
        curve[0].1.ok_or_else(|| "silhouette undefined".to_string())
    };

    let (oc_sw, oc_agg) = (delay(ModelKind::Oc, HiKind::Sensorwise), delay(ModelKind::Oc, HiKind::Aggregated));
    let (ae_sw, ae_agg) = (delay(ModelKind::Ae, HiKind::Sensorwise), delay(ModelKind::Ae, HiKind::Aggregated));
    let (fpr_ae, fpr_oc) = (healthy_fpr(ModelKind::Ae), healthy_fpr(ModelKind::Oc));
    let (sil_oc, sil_ae) = (sil(ModelKind::Oc)?, sil(ModelKind::Ae)?);
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "delays AE agg {ae_agg:.2} / sw {ae_sw:.2}, OC agg {oc_agg:.2} / sw {oc_sw:.2}; \
         healthy-unit FPR AE {fpr_ae:?} OC {fpr_oc:?}; silhouette@10 OC {sil_oc:.3} AE {sil_ae:.3}; {secs:.0} s"
    );
    ensure!(oc_sw <= 15.0, "(a) OC sensor-wise mean delay {oc_sw} > 15; {detail}");
    ensure!(ae_sw <= ae_agg && oc_sw <= oc_agg, "(b) sensor-wise later than aggregated; {detail}");
    ensure!(fpr_ae == Some(0.0) && fpr_oc == Some(0.0), "(c) healthy-unit FPR; {detail}");
    ensure!(sil_oc > sil_ae && sil_oc > 0.5, "(d) silhouette; {detail}");
    ensure!(secs < 600.0, "runtime; {detail}");
    Ok(detail)
}

// ---------------------------------------------------------------- 9

fn run_cli(out: &Path, config: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_resfault"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(status.status.success(), "run failed: {}", String::from_utf8_lossy(&status.stderr));
    Ok(())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 99\n[synth]\nn_units = 4\nhealthy_units = 2\ncycles_per_unit = 60\n\
         [train]\nepochs = 15\n[experiment]\nrealisations = 2\n",
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli(&a, &config)?;
    run_cli(&b, &config)?;
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    let csvs = names.iter().filter(|n| n.ends_with(".csv")).count();
    ensure!(csvs >= 10, "only {csvs} CSV outputs");
    for n in &names {
        let x = std::fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n}: {e}"))?;
        ensure!(x == y, "{n} differs between runs");
    }
    Ok(format!("{} files ({csvs} CSV) bit-identical across two runs", names.len()))
}

// ---------------------------------------------------------------- 10

/// Optional real-data track, driven by `RESFAULT_REAL_DATA` pointing at a
/// directory with `fleet.csv` and `ground_truth.csv`.
fn criterion_10() -> Option<Outcome> {
    let dir = std::env::var_os("RESFAULT_REAL_DATA")?;
    let dir = Path::new(&dir);
    let run = || -> Outcome {
        let cfg = RunConfig::default();
        let raw = load_csv(&dir.join("fleet.csv"), &cfg.schema).map_err(|e| e.to_string())?;
        let truths = load_ground_truth(&dir.join("ground_truth.csv")).map_err(|e| e.to_string())?;
        let fleet = Fleet::prepare(&raw, &truths, &cfg.preprocess).map_err(|e| e.to_string())?;
        let runs = run_experiment(&fleet, &cfg, &MODEL_KINDS).map_err(|e| e.to_string())?;
        let rows: Vec<_> = runs.iter().flat_map(|r| r.combos.iter().flat_map(|c| report_rows(r.index, c))).collect();
        let (summary, _) = summarize(&rows);
        let d = |m, h| summary.iter().find(|s| s.model == m && s.hi == h).and_then(|s| s.mean_delay);
        let (ae_a, oc_a) = (d(ModelKind::Ae, HiKind::Aggregated), d(ModelKind::Oc, HiKind::Aggregated));
        let (ae_s, oc_s) = (d(ModelKind::Ae, HiKind::Sensorwise), d(ModelKind::Oc, HiKind::Sensorwise));
        let detail = format!("AE agg {ae_a:?} sw {ae_s:?}; OC agg {oc_a:?} sw {oc_s:?}");
        ensure!(oc_a < ae_a && ae_s <= ae_a && oc_s <= oc_a, "ordering not reproduced: {detail}");
        Ok(detail)
    };
    Some(run())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", criterion_1),
        ("Adam oracle", criterion_2),
        ("threshold math", criterion_3),
        ("waiting-cycle logic", criterion_4),
        ("HI identities", criterion_5),
        ("silhouette oracle", criterion_6),
        ("PCA oracle", criterion_7),
        ("synthetic end-to-end", criterion_8),
        ("determinism", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let no = i + 1;
        if only.is_some_and(|o| o != no) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match outcome {
            Ok(detail) => println!("criterion {no:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {no:>2} FAIL  {name}: {why}");
            }
        }
    }
    if only.is_none_or(|o| o == 10) {
        match criterion_10() {
            None => println!("criterion 10 SKIP  real-data track (not gating; set RESFAULT_REAL_DATA)"),
            Some(Ok(d)) => println!("criterion 10 PASS  real-data track (not gating): {d}"),
            Some(Err(d)) => println!("criterion 10 FAIL  real-data track (not gating): {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
