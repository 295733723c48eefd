//! Acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use ftirpad::calibration::{estimate_perspective, estimate_resolution, Correspondences, KeystoneSpec, PerspectiveTransform};
use ftirpad::classifier::{primal_objective, train_svm, SolverParams};
use ftirpad::evaluation::{
    cross_material_splits, known_material_splits, run_protocol, tdr_at_fdr, CPolicy, EvalOptions, MethodSpec,
    Protocol, ScoreSet, SplitSpec,
};
use ftirpad::experiment::timing_probe;
use ftirpad::features::{
    clbp_from_view, fuse_features, lbp_from_view, lbp_hist, riu2_bin, transitions, DescriptorKind, LbpConfig,
    DIRECT_CLBP_DIMS, FTIR_CLBP_DIMS,
};
use ftirpad::optics::{critical_angle, validate_geometry, GeometrySpec};
use ftirpad::pipeline::hsv_pixel;
use ftirpad::rng;
use ftirpad::sim::{
    capture_gate, plan_dataset, render_views, DatasetConfig, FingerSpec, GateConfig, MaterialCount, MaterialSpec, Pose,
    RenderOptions, View,
};
use ftirpad::{ColorSpace, Image};
use rand::Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn geometry() -> Check {
    let theta = critical_angle(1.5, 1.0).map_err(|e| e.to_string())?;
    ensure((theta - 41.8).abs() <= 0.05, || format!("critical angle {theta}"))?;
    let ok = validate_geometry(&GeometrySpec::reference()).map_err(|e| e.to_string())?;
    ensure(ok.all_ok(), || "reference placement (10, 45) rejected".into())?;
    let swapped = GeometrySpec {
        theta_direct_deg: 45.0,
        theta_ftir_deg: 10.0,
        ..GeometrySpec::reference()
    };
    let bad = validate_geometry(&swapped).map_err(|e| e.to_string())?;
    ensure(!bad.direct_ok && !bad.ftir_ok, || "swapped placement accepted".into())?;
    Ok(format!("critical angle {theta:.4} deg; (10, 45) accepted; (45, 10) rejected"))
}

fn dimensions() -> Check {
    let finger = FingerSpec::live(9, 0, 0);
    let v = render_views(&finger, None, &Pose::CENTERED, &RenderOptions::default(), 9).map_err(|e| e.to_string())?;
    let cfg = LbpConfig::default();
    let lbp = lbp_from_view(&v.ftir, FTIR_CLBP_DIMS, &cfg).map_err(|e| e.to_string())?;
    let ftir = clbp_from_view(&v.ftir, FTIR_CLBP_DIMS, &cfg).map_err(|e| e.to_string())?;
    let direct = clbp_from_view(&v.direct, DIRECT_CLBP_DIMS, &cfg).map_err(|e| e.to_string())?;
    let fused = fuse_features(&ftir, &direct);
    let dims = (lbp.dim(), ftir.dim(), direct.dim(), fused.dim());
    ensure(dims == (54, 486, 486, 972), || format!("dims {dims:?}"))?;
    Ok(format!("LBP {}, CLBP {}, fused {}", dims.0, dims.1, dims.3))
}

fn lbp_oracle() -> Check {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut r = rng::stream(2024, "lbp_corpus", &[i]);
        let data: Vec<u8> = (0..64).map(|_| if r.random_bool(0.5) { 255 } else { 0 }).collect();
        let img = Image::new(8, 8, ColorSpace::Gray, data.clone()).map_err(|e| e.to_string())?;
        for (p, radius) in [(8usize, 1.0f64), (16, 2.0), (24, 3.0)] {
            let got = lbp_hist(&img, &img, p, radius).map_err(|e| e.to_string())?;
            let want = common::brute_lbp_hist(&data, &data, 8, 8, p, radius);
            ensure(got.len() == want.len(), || format!("image {i} P={p}: {} bins vs {}", got.len(), want.len()))?;
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max bin difference {worst:e}"))?;
    Ok(format!("50 images x 3 scales, max bin difference {worst:e}"))
}

fn riu2() -> Check {
    let mut uniform = 0;
    let mut bins = BTreeSet::new();
    for pattern in 0u64..256 {
        let bits: Vec<u64> = (0..8).map(|k| (pattern >> k) & 1).collect();
        let changes = (0..8).filter(|&k| bits[k] != bits[(k + 1) % 8]).count() as u32;
        ensure(changes == transitions(pattern, 8), || format!("transitions({pattern}) disagree"))?;
        if changes <= 2 {
            uniform += 1;
        }
        bins.insert(riu2_bin(pattern, 8));
    }
    ensure(uniform == 58 && bins.len() == 10, || format!("{uniform} uniform, {} bins", bins.len()))?;
    Ok(format!("{uniform} uniform patterns, {} riu2 bins", bins.len()))
}

fn lattice(cols: usize, rows: usize, step: f64, origin: (f64, f64)) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for j in 0..rows {
        for i in 0..cols {
            pts.push((origin.0 + i as f64 * step, origin.1 + j as f64 * step));
        }
    }
    pts
}

fn mapped(t: &PerspectiveTransform, pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pts.iter().map(|&(x, y)| t.map(x, y).expect("finite")).collect()
}

fn normalized(t: &PerspectiveTransform) -> Vec<f64> {
    let m = t.matrix();
    let n = m.norm();
    m.iter().map(|v| v / n).collect()
}

fn calibration() -> Check {
    let mut worst_exact = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng::stream(seed, "calib_exact", &[]);
        let p = [
            r.random_range(0.8..1.2),
            r.random_range(-0.1..0.1),
            r.random_range(-20.0..20.0),
            r.random_range(-0.1..0.1),
            r.random_range(0.8..1.2),
            r.random_range(-20.0..20.0),
            r.random_range(-5e-4..5e-4),
            r.random_range(-5e-4..5e-4),
        ];
        let t = PerspectiveTransform::new(p).map_err(|e| e.to_string())?;
        let src = lattice(8, 8, 90.0, (10.0, 10.0));
        let c = Correspondences::from_points(&src, &mapped(&t, &src)).map_err(|e| e.to_string())?;
        let est = estimate_perspective(&c).map_err(|e| e.to_string())?;
        let (a, b) = (normalized(&t), normalized(&est.transform));
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        worst_exact = worst_exact.max(diff);
    }
    ensure(worst_exact <= 1e-9, || format!("exact recovery relative error {worst_exact:e}"))?;

    let truth = PerspectiveTransform::new([1.05, 0.04, 12.0, -0.03, 0.97, -8.0, 2e-4, -1e-4]).map_err(|e| e.to_string())?;
    let src = lattice(8, 8, 80.0, (20.0, 20.0));
    let clean = mapped(&truth, &src);
    let mut worst_rms = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng::stream(seed, "calib_noise", &[]);
        let noisy: Vec<(f64, f64)> = clean
            .iter()
            .map(|&(x, y)| (x + 0.2 * rng::gaussian(&mut r), y + 0.2 * rng::gaussian(&mut r)))
            .collect();
        let c = Correspondences::from_points(&src, &noisy).map_err(|e| e.to_string())?;
        let est = estimate_perspective(&c).map_err(|e| e.to_string())?;
        worst_rms = worst_rms.max(est.residual.rms_px);
    }
    ensure(worst_rms <= 0.5, || format!("noisy RMS reprojection {worst_rms}"))?;

    // Uniform resolution: a pure scale of 1200 / 1000 at 1000 frontal ppi.
    let uniform = resolution_check(&KeystoneSpec {
        frontal_ppi: 1000.0,
        ppi_x_left: 1200.0,
        ppi_x_right: 1200.0,
        ppi_y_left: 1200.0,
        u_left: 100.0,
        u_right: 500.0,
        frontal_center: (300.0, 200.0),
        raw_center: (360.0, 240.0),
    })?;
    let keystone = KeystoneSpec {
        frontal_ppi: 1000.0,
        ppi_x_left: 1594.0,
        ppi_x_right: 2480.0,
        ppi_y_left: 2463.0,
        u_left: 100.0,
        u_right: 500.0,
        frontal_center: (300.0, 200.0),
        raw_center: (900.0, 700.0),
    };
    let (worst_cell, min_x, max_x) = resolution_check(&keystone)?;
    ensure((min_x / 1594.0 - 1.0).abs() <= 0.01 && (max_x / 2480.0 - 1.0).abs() <= 0.01, || {
        format!("x range {min_x:.1} to {max_x:.1} ppi")
    })?;
    Ok(format!(
        "exact err {worst_exact:.1e}; noisy RMS max {worst_rms:.3} px over 100 seeds; \
         uniform cell err {:.2e}; keystone cell err {worst_cell:.2e}, x range {min_x:.1}-{max_x:.1} ppi",
        uniform.0
    ))
}

/// Per-cell estimate against the local resolution of the spec's mapping at
/// each cell centre (central differences). Cells are centred on `u_left` and
/// `u_right`. Returns the worst relative error and the x range of the map.
fn resolution_check(spec: &KeystoneSpec) -> Result<(f64, f64, f64), String> {
    let t = spec.transform().map_err(|e| e.to_string())?;
    let step = 20.0;
    let cols = ((spec.u_right - spec.u_left) / step) as usize + 2;
    let ideal = lattice(cols, 11, step, (spec.u_left - step / 2.0, spec.frontal_center.1 - 5.0 * step));
    let raw = mapped(&t, &ideal);
    let square_mm = 25.4 * step / spec.frontal_ppi;
    let c = Correspondences::from_points(&raw, &ideal).map_err(|e| e.to_string())?;
    let map = estimate_resolution(&c, square_mm).map_err(|e| e.to_string())?;
    let d = 1e-3;
    let mut worst = 0.0f64;
    for row in 0..map.rows {
        for col in 0..map.cols {
            let (u, v) = (ideal[col].0 + step / 2.0, ideal[row * cols].1 + step / 2.0);
            let (xa, _) = t.map(u - d, v).unwrap();
            let (xb, _) = t.map(u + d, v).unwrap();
            let (_, ya) = t.map(u, v - d).unwrap();
            let (_, yb) = t.map(u, v + d).unwrap();
            let want = ((xb - xa) / (2.0 * d) * spec.frontal_ppi, (yb - ya) / (2.0 * d) * spec.frontal_ppi);
            let got = map.cell(row, col);
            worst = worst.max((got.0 / want.0 - 1.0).abs()).max((got.1 / want.1 - 1.0).abs());
        }
    }
    ensure(worst <= 0.01, || format!("cell resolution off by {:.3}%", 100.0 * worst))?;
    Ok((worst, map.min_ppi_x, map.max_ppi_x))
}

fn svm() -> Check {
    let params = SolverParams::default();
    let mut r = rng::stream(5, "separable", &[]);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        let y: i8 = if i % 2 == 0 { 1 } else { -1 };
        let c = 3.0 * y as f64;
        rows.push(vec![c + 0.5 * rng::gaussian(&mut r), c + 0.5 * rng::gaussian(&mut r)]);
        labels.push(y);
    }
    let m = train_svm(&rows, &labels, 10.0, 0, DescriptorKind::Lbp, &params).map_err(|e| e.to_string())?;
    let hinge: f64 = rows
        .iter()
        .zip(&labels)
        .map(|(x, &y)| (1.0 - y as f64 * m.score_values(x).unwrap()).max(0.0))
        .sum();
    ensure(hinge <= 1e-6, || format!("separable hinge loss {hinge:e}"))?;

    let flipped: Vec<i8> = labels.iter().map(|y| -y).collect();
    let f = train_svm(&rows, &flipped, 10.0, 0, DescriptorKind::Lbp, &params).map_err(|e| e.to_string())?;
    let negated = m.weights.iter().zip(&f.weights).all(|(a, b)| *a == -*b) && m.bias == -f.bias;
    ensure(negated, || "label flip did not negate the model exactly".into())?;

    let (rows, labels) = common::svm_oracle_set(3);
    let m = train_svm(&rows, &labels, 1.0, 0, DescriptorKind::Lbp, &params).map_err(|e| e.to_string())?;
    let ours = primal_objective(&m.weights, m.bias, &rows, &labels, 1.0);
    let oracle = common::projected_gradient_svm_objective(&rows, &labels, 1.0, 1_000_000);
    let rel = (ours - oracle).abs() / oracle;
    ensure(m.converged && rel <= 1e-4, || format!("objective {ours} vs oracle {oracle}, rel {rel:e}"))?;
    Ok(format!("separable hinge {hinge:.1e}; label flip exact; oracle rel gap {rel:.1e}"))
}

fn metric() -> Check {
    let transforms: [(&str, fn(f64) -> f64); 2] = [("x^3 + x", |x| x * x * x + x), ("3 exp(x/2) - 7", |x| 3.0 * (x / 2.0).exp() - 7.0)];
    for seed in 0..50u64 {
        let (live, spoof) = common::random_score_set(seed);
        let got = tdr_at_fdr(&ScoreSet::new(live.clone(), spoof.clone()), 0.01).map_err(|e| e.to_string())?;
        let (tdr, threshold) = common::sweep_tdr(&live, &spoof, 0.01);
        ensure(got.tdr == tdr && got.threshold == threshold, || {
            format!("set {seed}: ({}, {}) vs sweep ({tdr}, {threshold})", got.tdr, got.threshold)
        })?;
        for (name, f) in transforms {
            let t = ScoreSet::new(live.iter().map(|&v| f(v)).collect(), spoof.iter().map(|&v| f(v)).collect());
            let moved = tdr_at_fdr(&t, 0.01).map_err(|e| e.to_string())?;
            let threshold_ok = if got.threshold.is_finite() {
                moved.threshold == f(got.threshold)
            } else {
                moved.threshold == got.threshold
            };
            ensure(moved.tdr == got.tdr && threshold_ok, || format!("set {seed} not invariant under {name}"))?;
        }
    }
    Ok("50 sets match the sweep exactly; invariant under 2 increasing maps".into())
}

fn id_subject(id: &str) -> Option<u32> {
    id.strip_prefix("live/s").map(|rest| rest[..2].parse().unwrap())
}

fn id_material_slug(id: &str) -> Option<&str> {
    id.strip_prefix("spoof/").and_then(|rest| rest.split('/').next())
}

fn audit(split: &SplitSpec) -> Result<(), String> {
    let train: BTreeSet<&String> = split.train.iter().collect();
    ensure(split.test.iter().all(|id| !train.contains(id)), || format!("{}: sample overlap", split.name))?;
    let subjects = |ids: &[String]| -> BTreeSet<u32> { ids.iter().filter_map(|id| id_subject(id)).collect() };
    ensure(subjects(&split.train).is_disjoint(&subjects(&split.test)), || {
        format!("{}: subject overlap", split.name)
    })?;
    if let Some(m) = &split.held_out_material {
        let slug = MaterialSpec::preset(m).map(|s| s.slug()).unwrap_or_default();
        ensure(split.train.iter().all(|id| id_material_slug(id) != Some(slug.as_str())), || {
            format!("{}: held-out material in training", split.name)
        })?;
        ensure(split.test.iter().any(|id| id_material_slug(id) == Some(slug.as_str())), || {
            format!("{}: held-out material absent from test", split.name)
        })?;
    }
    Ok(())
}

fn protocol_integrity() -> Check {
    let mut count = 0;
    for cfg in [DatasetConfig::full(), DatasetConfig::desk()] {
        let m = common::planned_manifest(&cfg, 7);
        let total = m.entries.len() / 2;
        for seed in [7u64, 8] {
            let known = known_material_splits(&m, 5, seed).map_err(|e| e.to_string())?;
            let cross = cross_material_splits(&m, seed).map_err(|e| e.to_string())?;
            ensure(known.len() == 5 && cross.len() == 7, || format!("{} known, {} cross splits", known.len(), cross.len()))?;
            for s in known.iter().chain(&cross) {
                audit(s)?;
                ensure(s.train.len() + s.test.len() == total, || format!("{}: samples dropped", s.name))?;
                count += 1;
            }
        }
    }
    Ok(format!("{count} splits audited; 7 cross-material splits per manifest"))
}

fn circular_mean_hue(img: &Image) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for px in img.data().chunks(3) {
        let [h, _, v] = hsv_pixel(px[0], px[1], px[2]);
        if v > 100 {
            let a = h as f64 / 255.0 * std::f64::consts::TAU;
            s += a.sin();
            c += a.cos();
        }
    }
    (s.atan2(c) / std::f64::consts::TAU * 255.0).rem_euclid(255.0)
}

fn hue_gap(cfg: &DatasetConfig, seed: u64) -> Result<f64, String> {
    let plan = plan_dataset(cfg, seed).map_err(|e| e.to_string())?;
    let (mut live, mut spoof) = (Vec::new(), Vec::new());
    for p in &plan {
        let v = render_views(&p.finger_spec, p.material.as_ref(), &p.pose, &cfg.render, p.noise_seed)
            .map_err(|e| e.to_string())?;
        let h = circular_mean_hue(&v.direct);
        if p.material.is_some() { spoof.push(h) } else { live.push(h) }
    }
    let dist = |a: f64, b: f64| {
        let d = (a - b).abs();
        d.min(255.0 - d)
    };
    Ok(live
        .iter()
        .flat_map(|&l| spoof.iter().map(move |&s| dist(l, s)))
        .fold(f64::INFINITY, f64::min))
}

fn known_tdr(manifest: &ftirpad::sim::DatasetManifest, store: &ftirpad::evaluation::FeatureStore, method: &MethodSpec, seed: u64) -> Result<f64, String> {
    let report = run_protocol(manifest, store, method, Protocol::Known, seed, &EvalOptions::new()).map_err(|e| e.to_string())?;
    let (mean, _) = report.summary.ok_or("no folds reported")?;
    Ok(mean / 100.0)
}

fn separability() -> Check {
    let seed = 21;
    let mut cfg = DatasetConfig::desk();
    for m in &mut cfg.materials {
        let spec = &mut m.material;
        if spec.effective_hue_shift().abs() < 30.0 {
            let sign = if spec.hue_shift < 0.0 { -1.0 } else { 1.0 };
            spec.hue_shift = sign * 32.0 / (1.0 - spec.transparency);
        }
    }
    ensure(cfg.materials.iter().all(|m| m.material.effective_hue_shift().abs() >= 30.0), || {
        "hue shifts below 30".into()
    })?;
    let gap = hue_gap(&cfg, seed)?;
    ensure(gap > 0.0, || "live and spoof direct-view hues overlap".into())?;
    let (manifest, store) = common::rendered_store(&cfg, seed, DescriptorKind::Clbp);
    let fused = known_tdr(&manifest, &store, &MethodSpec::clbp_feature_fusion(), seed)?;
    ensure(fused >= 0.95, || format!("CLBP fusion known-material TDR {fused:.3} (hue gap {gap:.1})"))?;

    // Complementary cues: one material differs only in direct-view hue, the
    // other only in FTIR grain; the FTIR ridge colour ignores the object.
    let mut comp = DatasetConfig::desk();
    comp.render.ftir_color_coupling = 0.0;
    comp.materials = vec![
        MaterialCount {
            material: MaterialSpec::new("Hue Only", 40.0, 1.0, 0.0, 0.0, 1.0),
            spoofs: 3,
        },
        MaterialCount {
            material: MaterialSpec::new("Grain Only", 0.0, 1.0, 25.0, 0.0, 1.0),
            spoofs: 3,
        },
    ];
    let (manifest, store) = common::rendered_store(&comp, seed, DescriptorKind::Clbp);
    let single = |view: View| {
        let mut m = MethodSpec::single("single", view, DescriptorKind::Clbp);
        m.c_policy = CPolicy::default();
        known_tdr(&manifest, &store, &m, seed)
    };
    let (ftir, direct) = (single(View::Ftir)?, single(View::Direct)?);
    let both = known_tdr(&manifest, &store, &MethodSpec::clbp_feature_fusion(), seed)?;
    ensure(ftir < 1.0 && direct < 1.0, || {
        format!("a single view is fully informative (FTIR {ftir:.3}, direct {direct:.3})")
    })?;
    ensure(both > ftir.min(direct), || {
        format!("fusion {both:.3} not above worse view (FTIR {ftir:.3}, direct {direct:.3})")
    })?;
    Ok(format!(
        "hue gap {gap:.1}; CLBP fusion TDR {fused:.3}; complementary set: FTIR {ftir:.3}, direct {direct:.3}, fused {both:.3}"
    ))
}

fn performance() -> Check {
    let cfg = LbpConfig::default();
    let renders: Vec<_> = (0..20u32)
        .map(|i| {
            let f = FingerSpec::live(31, i, 0);
            render_views(&f, None, &Pose::CENTERED, &RenderOptions::default(), u64::from(i)).unwrap()
        })
        .collect();
    let (_, single) = timing_probe("clbp_ftir", &renders, |v| clbp_from_view(&v.ftir, FTIR_CLBP_DIMS, &cfg).unwrap());
    let (_, fused) = timing_probe("clbp_fused", &renders, |v| {
        let a = clbp_from_view(&v.ftir, FTIR_CLBP_DIMS, &cfg).unwrap();
        let b = clbp_from_view(&v.direct, DIRECT_CLBP_DIMS, &cfg).unwrap();
        fuse_features(&a, &b)
    });
    let detail = format!(
        "single-stream mean {:.1} ms (p95 {:.1}), fused mean {:.1} ms (p95 {:.1}); targets 243 / 486 ms, 2x allowed",
        single.mean_ms, single.p95_ms, fused.mean_ms, fused.p95_ms
    );
    ensure(single.mean_ms <= 2.0 * 243.0 && fused.mean_ms <= 2.0 * 486.0, || detail.clone())?;
    Ok(detail)
}

fn failure_to_capture() -> Check {
    let gate = GateConfig::default();
    let black = MaterialSpec::conductive_coated_ecoflex();
    let opts = RenderOptions::default();
    let (mut live_rejected, mut black_accepted) = (0, 0);
    for i in 0..100u32 {
        let mut r = rng::stream(77, "ftc_pose", &[u64::from(i)]);
        let pose = Pose::random(&mut r);
        let live = render_views(&FingerSpec::live(77, i, i % 10), None, &pose, &opts, u64::from(i)).unwrap();
        if !capture_gate(&live.ftir, &gate).accepted() {
            live_rejected += 1;
        }
        let donor = FingerSpec::spoof_donor(77, &black.name, i);
        let spoof = render_views(&donor, Some(&black), &pose, &opts, 1000 + u64::from(i)).unwrap();
        if capture_gate(&spoof.ftir, &gate).accepted() {
            black_accepted += 1;
        }
    }
    ensure(live_rejected == 0 && black_accepted == 0, || {
        format!("{live_rejected} live rejected, {black_accepted} albedo-0 spoofs accepted")
    })?;

    let mut cfg = DatasetConfig::desk();
    cfg.materials.push(MaterialCount {
        material: black.clone(),
        spoofs: 2,
    });
    let (manifest, store) = common::rendered_store(&cfg, 5, DescriptorKind::Clbp);
    let report = run_protocol(&manifest, &store, &MethodSpec::clbp_feature_fusion(), Protocol::Cross, 5, &EvalOptions::new())
        .map_err(|e| e.to_string())?;
    let row = report.rows.iter().find(|r| r.split == black.name).ok_or("no row for the albedo-0 material")?;
    ensure(row.n_spoof_test == 6 && row.gate_rejected_test == 6 && row.tdr_pct == Some(100.0), || {
        format!("albedo-0 row: {row:?}")
    })?;
    Ok(format!(
        "100/100 albedo-0 spoofs rejected, 0/100 live rejected; held-out albedo-0 split TDR {:.0}% with {} gate rejections",
        row.tdr_pct.unwrap(),
        row.gate_rejected_test
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("geometry", geometry),
        ("descriptor dimensions", dimensions),
        ("LBP oracle equivalence", lbp_oracle),
        ("riu2 enumeration", riu2),
        ("calibration", calibration),
        ("SVM", svm),
        ("metric oracle", metric),
        ("protocol integrity", protocol_integrity),
        ("end-to-end separability", separability),
        ("performance", performance),
        ("failure to capture", failure_to_capture),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
