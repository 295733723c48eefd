//! Slow, independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ftirpad::evaluation::{samples_of, FeatureStore, SampleRecord};
use ftirpad::experiment::view_descriptor;
use ftirpad::features::{DescriptorKind, LbpConfig};
use ftirpad::rng;
use ftirpad::sim::{
    capture_gate, plan_dataset, render_views, DatasetConfig, DatasetManifest, GateConfig, ManifestEntry,
    ManifestHeader, View,
};
use rand::Rng;

/// Per-pixel LBP histogram written from first principles: weighted bilinear
/// sampling, explicit bit transitions, ties within 1e-9 count as "above".
pub fn brute_lbp_hist(center: &[u8], neighbor: &[u8], w: usize, h: usize, p: usize, r: f64) -> Vec<f64> {
    let margin = r.ceil() as usize;
    let sample = |x: f64, y: f64| -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (ax, ay) = (x - x0, y - y0);
        let px = |xi: f64, yi: f64| -> f64 {
            let xi = (xi as usize).min(w - 1);
            let yi = (yi as usize).min(h - 1);
            neighbor[yi * w + xi] as f64
        };
        (1.0 - ax) * (1.0 - ay) * px(x0, y0)
            + ax * (1.0 - ay) * px(x0 + 1.0, y0)
            + (1.0 - ax) * ay * px(x0, y0 + 1.0)
            + ax * ay * px(x0 + 1.0, y0 + 1.0)
    };
    let mut hist = vec![0.0; p + 2];
    let mut total = 0.0;
    for y in margin..h - margin {
        for x in margin..w - margin {
            let c = center[y * w + x] as f64;
            let mut bits = Vec::with_capacity(p);
            for k in 0..p {
                let a = 2.0 * std::f64::consts::PI * k as f64 / p as f64;
                let mut sx = x as f64 + r * a.cos();
                let mut sy = y as f64 - r * a.sin();
                if (sx - sx.round()).abs() < 1e-9 {
                    sx = sx.round();
                }
                if (sy - sy.round()).abs() < 1e-9 {
                    sy = sy.round();
                }
                bits.push(sample(sx, sy) >= c - 1e-9);
            }
            let transitions = (0..p).filter(|&k| bits[k] != bits[(k + 1) % p]).count();
            let ones = bits.iter().filter(|&&b| b).count();
            let bin = if transitions <= 2 { ones } else { p + 1 };
            hist[bin] += 1.0;
            total += 1.0;
        }
    }
    hist.iter().map(|v| v / total).collect()
}

/// Hinge sum over all candidate biases (every kink), minimized by scanning.
fn profile_bias(scores: &[f64], labels: &[i8], c: f64) -> (f64, f64) {
    let cost = |b: f64| -> f64 {
        scores
            .iter()
            .zip(labels)
            .map(|(s, &y)| (1.0 - y as f64 * (s + b)).max(0.0))
            .sum::<f64>()
            * c
    };
    let mut best = (0.0, cost(0.0));
    for (s, &y) in scores.iter().zip(labels) {
        let b = y as f64 - s;
        let v = cost(b);
        if v < best.1 {
            best = (b, v);
        }
    }
    best
}

fn profiled_objective(w: &[f64], rows: &[Vec<f64>], labels: &[i8], c: f64) -> (f64, f64) {
    let scores: Vec<f64> = rows.iter().map(|x| x.iter().zip(w).map(|(a, b)| a * b).sum()).collect();
    let (b, hinge) = profile_bias(&scores, labels, c);
    (0.5 * w.iter().map(|v| v * v).sum::<f64>() + hinge, b)
}

/// Projection of `v` onto `{0 <= a <= c, y'a = 0}`: `a = clip(v - mu y)`
/// with `mu` found by bisection, since `y'a` decreases monotonically in `mu`.
fn project_dual(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let balance = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let span = v.iter().fold(c, |m, x| m.max(x.abs())) + c;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Projected gradient ascent on the SVM dual with step `1/L`, `L` the trace of
/// `Q` (an upper bound on its largest eigenvalue). The primal objective of the
/// resulting `w` is then evaluated with the bias profiled by scanning.
pub fn projected_gradient_svm_objective(rows: &[Vec<f64>], labels: &[i8], c: f64, iters: usize) -> f64 {
    let n = rows.len();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, z)| x * z).sum() };
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * dot(&rows[i], &rows[j])).collect())
        .collect();
    let lipschitz: f64 = (0..n).map(|i| q[i][i]).sum();
    let mut alpha = vec![0.0; n];
    for _ in 0..iters {
        let step: Vec<f64> = (0..n)
            .map(|i| alpha[i] + (1.0 - dot(&q[i], &alpha)) / lipschitz)
            .collect();
        alpha = project_dual(&step, &y, c);
    }
    let d = rows[0].len();
    let mut w = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            w[k] += alpha[i] * y[i] * rows[i][k];
        }
    }
    profiled_objective(&w, rows, labels, c).0
}

/// 40 points in 2-D: two overlapping Gaussian clusters.
pub fn svm_oracle_set(seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut r = rng::stream(seed, "svm_oracle_set", &[]);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let y: i8 = if i < 20 { 1 } else { -1 };
        let (mx, my) = if y > 0 { (1.0, 0.5) } else { (-1.0, -0.5) };
        rows.push(vec![mx + rng::gaussian(&mut r), my + rng::gaussian(&mut r)]);
        labels.push(y);
    }
    (rows, labels)
}

/// TDR at the FDR target by trying every distinct score (and +inf) as a
/// threshold, keeping the smallest one whose live pass-through fraction is
/// within the target.
pub fn sweep_tdr(live: &[f64], spoof: &[f64], target: f64) -> (f64, f64) {
    let mut candidates: Vec<f64> = live.iter().chain(spoof).copied().collect();
    candidates.push(f64::INFINITY);
    let mut best: Option<f64> = None;
    for &t in &candidates {
        let false_detects = live.iter().filter(|&&s| s >= t).count() as f64 / live.len() as f64;
        if false_detects <= target && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    let t = best.expect("+inf always qualifies");
    let tdr = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
    (tdr, t)
}

/// Random score sets: live ~ N(0, 1), spoof ~ N(mu, sigma), rounded to a
/// coarse grid so ties occur.
pub fn random_score_set(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(seed, "score_set", &[]);
    let n_live = r.random_range(20..300);
    let n_spoof = r.random_range(20..300);
    let mu = r.random_range(0.0..4.0);
    let grid = [0.0, 0.01, 0.1, 0.5][r.random_range(0..4)];
    let round = |v: f64| if grid > 0.0 { (v / grid).round() * grid } else { v };
    let live = (0..n_live).map(|_| round(rng::gaussian(&mut r))).collect();
    let spoof = (0..n_spoof).map(|_| round(mu + 1.3 * rng::gaussian(&mut r))).collect();
    (live, spoof)
}

/// Manifest of a planned dataset without rendering or writing any image.
pub fn planned_manifest(cfg: &DatasetConfig, seed: u64) -> DatasetManifest {
    let plan = plan_dataset(cfg, seed).unwrap();
    let entries = plan
        .iter()
        .flat_map(|p| {
            [View::Ftir, View::Direct].map(|view| ManifestEntry {
                sample: p.id.clone(),
                path: format!("{}_{}.png", p.id, view.as_str()),
                view,
                label: p.label,
                material: p.material.as_ref().map(|m| m.name.clone()),
                subject: p.subject,
                finger: p.finger,
                instance: p.instance,
                impression: p.impression,
            })
        })
        .collect();
    DatasetManifest {
        header: ManifestHeader {
            format_version: 1,
            seed,
            prng_name: rng::PRNG_NAME.into(),
            config: cfg.clone(),
        },
        entries,
        root: Default::default(),
    }
}

/// Renders every planned presentation in memory, gates it and extracts
/// `kind` descriptors from both views, one sample at a time.
pub fn rendered_store(cfg: &DatasetConfig, seed: u64, kind: DescriptorKind) -> (DatasetManifest, FeatureStore) {
    let manifest = planned_manifest(cfg, seed);
    let plan = plan_dataset(cfg, seed).unwrap();
    let infos: BTreeMap<String, _> = samples_of(&manifest).into_iter().map(|s| (s.id.clone(), s)).collect();
    let lbp = LbpConfig::default();
    let mut samples = BTreeMap::new();
    for p in &plan {
        let views = render_views(&p.finger_spec, p.material.as_ref(), &p.pose, &cfg.render, p.noise_seed).unwrap();
        let accepted = capture_gate(&views.ftir, &GateConfig::default()).accepted();
        let mut features = BTreeMap::new();
        if accepted {
            for (view, img) in [(View::Ftir, &views.ftir), (View::Direct, &views.direct)] {
                features.insert(view, view_descriptor(img, view, kind, &lbp).unwrap().values);
            }
        }
        samples.insert(
            p.id.clone(),
            SampleRecord {
                info: infos[&p.id].clone(),
                accepted,
                features,
                extract_ms: BTreeMap::new(),
            },
        );
    }
    (manifest, FeatureStore { descriptor: kind, samples })
}
