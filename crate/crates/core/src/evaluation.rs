//! Known-material and cross-material protocols and the true detect rate at a
//! fixed false detect rate.
//!
//! Live samples are split by subject so no person appears on both sides.
//! Presentations rejected by the capture gate never reach the classifier and
//! count as detections: a rejected spoof is a true detect, a rejected live
//! finger a false detect.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{
    default_c_grid, fuse_scores, select_c, train_svm, ClassifierError, FusionMethod, LinearSvmModel, SolverParams,
};
use crate::features::DescriptorKind;
use crate::rng;
use crate::sim::{DatasetManifest, Label, View, REPORT_ORDER};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_FDR_TARGET: f64 = 0.01;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score set has no {0} samples")]
    ClassAbsent(&'static str),
    #[error("too few {what} to form splits: {detail}")]
    TooFew { what: &'static str, detail: String },
    #[error("manifest lacks materials required for cross-material testing: {0:?}")]
    MissingMaterial(Vec<String>),
    #[error("split {split} leaks: {detail}")]
    Leak { split: String, detail: String },
    #[error("sample {0} has no features for the requested view")]
    MissingFeatures(String),
    #[error("method {label}: {detail}")]
    BadMethod { label: String, detail: String },
    #[error("{split}: {source}")]
    Classifier {
        split: String,
        #[source]
        source: ClassifierError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Known,
    Cross,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Known => "known",
            Protocol::Cross => "cross",
        }
    }
}

/// Identity of one presentation (both views share it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub id: String,
    pub label: Label,
    pub subject: Option<u32>,
    pub material: Option<String>,
}

/// Presentations of a manifest in manifest order.
pub fn samples_of(manifest: &DatasetManifest) -> Vec<SampleInfo> {
    let mut seen = BTreeSet::new();
    manifest
        .entries
        .iter()
        .filter(|e| seen.insert(e.sample.clone()))
        .map(|e| SampleInfo {
            id: e.sample.clone(),
            label: e.label,
            subject: e.subject,
            material: e.material.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub protocol: Protocol,
    /// Sample ids, sorted.
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub held_out_material: Option<String>,
    pub fold_index: Option<usize>,
    pub test_subjects: Vec<u32>,
}

impl SplitSpec {
    /// Checks disjointness at the sample and live-subject level, and that a
    /// held-out material is absent from training.
    pub fn check(&self, samples: &[SampleInfo]) -> Result<(), EvalError> {
        let leak = |detail: String| EvalError::Leak {
            split: self.name.clone(),
            detail,
        };
        let by_id: BTreeMap<&str, &SampleInfo> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
        let train: BTreeSet<&str> = self.train.iter().map(String::as_str).collect();
        if let Some(id) = self.test.iter().find(|id| train.contains(id.as_str())) {
            return Err(leak(format!("sample {id} in train and test")));
        }
        let subjects = |ids: &[String]| -> BTreeSet<u32> {
            ids.iter().filter_map(|id| by_id.get(id.as_str()).and_then(|s| s.subject)).collect()
        };
        let (tr, te) = (subjects(&self.train), subjects(&self.test));
        if let Some(s) = tr.intersection(&te).next() {
            return Err(leak(format!("live subject {s} in train and test")));
        }
        if let Some(m) = &self.held_out_material {
            if let Some(id) = self
                .train
                .iter()
                .find(|id| by_id.get(id.as_str()).and_then(|s| s.material.as_ref()) == Some(m))
            {
                return Err(leak(format!("held-out material {m} present in training sample {id}")));
            }
        }
        Ok(())
    }
}

fn test_subject_count(n: usize, numerator: usize) -> usize {
    (n * numerator / 15).max(1)
}

fn live_subjects(samples: &[SampleInfo]) -> Result<Vec<u32>, EvalError> {
    let subjects: Vec<u32> = samples
        .iter()
        .filter_map(|s| s.subject)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < 2 {
        return Err(EvalError::TooFew {
            what: "live subjects",
            detail: format!("need at least 2, manifest has {}", subjects.len()),
        });
    }
    Ok(subjects)
}

fn assemble(
    name: String,
    protocol: Protocol,
    samples: &[SampleInfo],
    test_subjects: &BTreeSet<u32>,
    is_test_spoof: impl Fn(&SampleInfo) -> bool,
    held_out_material: Option<String>,
    fold_index: Option<usize>,
) -> SplitSpec {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in samples {
        let in_test = match s.label {
            Label::Live => s.subject.is_some_and(|x| test_subjects.contains(&x)),
            Label::Spoof => is_test_spoof(s),
        };
        if in_test {
            test.push(s.id.clone());
        } else {
            train.push(s.id.clone());
        }
    }
    train.sort();
    test.sort();
    SplitSpec {
        name,
        protocol,
        train,
        test,
        held_out_material,
        fold_index,
        test_subjects: test_subjects.iter().copied().collect(),
    }
}

/// Per fold: `floor(3n/15)` (at least one) live subjects for testing, taken
/// consecutively from a seeded subject permutation, and one fifth of each
/// material's spoof impressions (a seeded partition into `folds` chunks).
pub fn known_material_splits(manifest: &DatasetManifest, folds: usize, seed: u64) -> Result<Vec<SplitSpec>, EvalError> {
    let samples = samples_of(manifest);
    if folds < 2 {
        return Err(EvalError::TooFew {
            what: "folds",
            detail: format!("{folds} requested"),
        });
    }
    let mut subjects = live_subjects(&samples)?;
    let n = subjects.len();
    let t = test_subject_count(n, 3).min(n - 1);
    rng::shuffle(&mut subjects, &mut rng::stream(seed, "split", &[0]));
    let mut spoof_fold: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_material: BTreeMap<&str, Vec<&SampleInfo>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.label == Label::Spoof) {
        by_material.entry(s.material.as_deref().unwrap_or("")).or_default().push(s);
    }
    for (material, mut list) in by_material {
        if list.len() < folds {
            return Err(EvalError::TooFew {
                what: "spoof impressions",
                detail: format!("material {material} has {} for {folds} folds", list.len()),
            });
        }
        list.sort_by_key(|s| (rng::keyed_hash(seed, "split_spoof", &s.id), s.id.clone()));
        let m = list.len();
        for (rank, s) in list.iter().enumerate() {
            // rank lies in chunk f when f*m/folds <= rank < (f+1)*m/folds
            let f = (0..folds).find(|&f| rank < (f + 1) * m / folds).expect("rank < m");
            spoof_fold.insert(s.id.clone(), f);
        }
    }
    let splits = (0..folds)
        .map(|f| {
            let test_subjects: BTreeSet<u32> = (0..t).map(|k| subjects[(f * t + k) % n]).collect();
            assemble(
                format!("fold{f}"),
                Protocol::Known,
                &samples,
                &test_subjects,
                |s| spoof_fold.get(&s.id) == Some(&f),
                None,
                Some(f),
            )
        })
        .collect::<Vec<_>>();
    for s in &splits {
        s.check(&samples)?;
    }
    Ok(splits)
}

/// One split per material, in the standard report order followed by any other
/// materials in manifest order. Live test subjects (`floor(2n/15)`, at least
/// one) are re-drawn for every split.
pub fn cross_material_splits(manifest: &DatasetManifest, seed: u64) -> Result<Vec<SplitSpec>, EvalError> {
    let samples = samples_of(manifest);
    let present = manifest.materials();
    let missing: Vec<String> = REPORT_ORDER
        .iter()
        .filter(|m| !present.iter().any(|p| p == *m))
        .map(|m| m.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingMaterial(missing));
    }
    let mut order: Vec<String> = REPORT_ORDER.iter().map(|m| m.to_string()).collect();
    order.extend(present.into_iter().filter(|m| !REPORT_ORDER.contains(&m.as_str())));
    let subjects = live_subjects(&samples)?;
    let n = subjects.len();
    let t = test_subject_count(n, 2).min(n - 1);
    let splits = order
        .into_iter()
        .enumerate()
        .map(|(k, material)| {
            let mut perm = subjects.clone();
            rng::shuffle(&mut perm, &mut rng::stream(seed, "split", &[1, k as u64]));
            let test_subjects: BTreeSet<u32> = perm[..t].iter().copied().collect();
            assemble(
                material.clone(),
                Protocol::Cross,
                &samples,
                &test_subjects,
                |s| s.material.as_deref() == Some(material.as_str()),
                Some(material.clone()),
                None,
            )
        })
        .collect::<Vec<_>>();
    for s in &splits {
        s.check(&samples)?;
    }
    Ok(splits)
}

/// Classifier scores of one test set. Gate-rejected presentations carry no
/// score and are counted as detected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub live: Vec<f64>,
    pub spoof: Vec<f64>,
    pub rejected_live: usize,
    pub rejected_spoof: usize,
}

impl ScoreSet {
    pub fn new(live: Vec<f64>, spoof: Vec<f64>) -> Self {
        Self {
            live,
            spoof,
            ..Self::default()
        }
    }

    pub fn n_live(&self) -> usize {
        self.live.len() + self.rejected_live
    }

    pub fn n_spoof(&self) -> usize {
        self.spoof.len() + self.rejected_spoof
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub tdr: f64,
    /// Scores at or above the threshold are called spoof; may be `+inf`.
    pub threshold: f64,
    /// False detect rate actually reached at the threshold.
    pub fdr: f64,
}

fn count_at_or_above(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < t)
}

/// Smallest observed score (or `+inf`) whose live false-detect fraction is
/// within `fdr_target`, and the spoof detection rate there.
pub fn tdr_at_fdr(set: &ScoreSet, fdr_target: f64) -> Result<OperatingPoint, EvalError> {
    if set.n_live() == 0 {
        return Err(EvalError::ClassAbsent("live"));
    }
    if set.n_spoof() == 0 {
        return Err(EvalError::ClassAbsent("spoof"));
    }
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (live, spoof) = (sort(&set.live), sort(&set.spoof));
    let n_live = set.n_live() as f64;
    let fdr = |t: f64| (set.rejected_live + count_at_or_above(&live, t)) as f64 / n_live;
    let mut candidates: Vec<f64> = live.iter().chain(&spoof).copied().collect();
    candidates.push(f64::INFINITY);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // fdr is non-increasing in t, so the admissible candidates form a suffix
    let first = candidates.partition_point(|&t| fdr(t) > fdr_target);
    let threshold = candidates.get(first).copied().unwrap_or(f64::INFINITY);
    let detected = set.rejected_spoof + count_at_or_above(&spoof, threshold);
    Ok(OperatingPoint {
        tdr: detected as f64 / set.n_spoof() as f64,
        threshold,
        fdr: fdr(threshold),
    })
}

/// Rate at a fixed threshold (used when the threshold comes from elsewhere).
pub fn tdr_at_threshold(set: &ScoreSet, threshold: f64) -> Result<OperatingPoint, EvalError> {
    if set.n_live() == 0 {
        return Err(EvalError::ClassAbsent("live"));
    }
    if set.n_spoof() == 0 {
        return Err(EvalError::ClassAbsent("spoof"));
    }
    let live_hits = set.rejected_live + set.live.iter().filter(|&&s| s >= threshold).count();
    let spoof_hits = set.rejected_spoof + set.spoof.iter().filter(|&&s| s >= threshold).count();
    Ok(OperatingPoint {
        tdr: spoof_hits as f64 / set.n_spoof() as f64,
        threshold,
        fdr: live_hits as f64 / set.n_live() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fusion {
    /// One view, or several views concatenated into one feature vector.
    Feature,
    /// One model per view, standardized scores fused.
    Score { method: FusionMethod },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CPolicy {
    Fixed { c: f64 },
    Select { grid: Vec<f64>, folds: usize },
}

impl Default for CPolicy {
    fn default() -> Self {
        CPolicy::Select {
            grid: default_c_grid(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Operating point chosen on the test scores.
    #[default]
    Test,
    /// Operating point chosen on the training scores and applied to test.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub label: String,
    pub views: Vec<View>,
    pub descriptor: DescriptorKind,
    pub fusion: Fusion,
    #[serde(default)]
    pub c_policy: CPolicy,
}

impl MethodSpec {
    pub fn single(label: &str, view: View, descriptor: DescriptorKind) -> Self {
        Self {
            label: label.into(),
            views: vec![view],
            descriptor,
            fusion: Fusion::Feature,
            c_policy: CPolicy::default(),
        }
    }

    /// FTIR and direct color LBP concatenated.
    pub fn clbp_feature_fusion() -> Self {
        Self {
            label: "Fusion + CLBP".into(),
            views: vec![View::Ftir, View::Direct],
            descriptor: DescriptorKind::Clbp,
            fusion: Fusion::Feature,
            c_policy: CPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |detail: &str| EvalError::BadMethod {
            label: self.label.clone(),
            detail: detail.into(),
        };
        if self.views.is_empty() {
            return Err(bad("no views"));
        }
        if self.views.iter().collect::<BTreeSet<_>>().len() != self.views.len() {
            return Err(bad("view listed twice"));
        }
        if self.descriptor == DescriptorKind::Fused {
            return Err(bad("descriptor must be lbp or clbp; fusion is set separately"));
        }
        match &self.c_policy {
            CPolicy::Fixed { c } if !(*c > 0.0 && c.is_finite()) => Err(bad("C must be positive")),
            CPolicy::Select { grid, folds } if grid.is_empty() || *folds < 2 => {
                Err(bad("C selection needs a grid and at least 2 folds"))
            }
            _ => Ok(()),
        }
    }

    fn feature_kind(&self) -> DescriptorKind {
        if self.views.len() > 1 && self.fusion == Fusion::Feature {
            DescriptorKind::Fused
        } else {
            self.descriptor
        }
    }
}

/// Features of one presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub info: SampleInfo,
    /// Capture gate verdict on the FTIR view.
    pub accepted: bool,
    pub features: BTreeMap<View, Vec<f64>>,
    /// Extraction time per view, when measured.
    #[serde(default)]
    pub extract_ms: BTreeMap<View, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStore {
    pub descriptor: DescriptorKind,
    pub samples: BTreeMap<String, SampleRecord>,
}

impl FeatureStore {
    fn row(&self, id: &str, views: &[View]) -> Result<Vec<f64>, EvalError> {
        let rec = self.samples.get(id).ok_or_else(|| EvalError::MissingFeatures(id.into()))?;
        let mut row = Vec::new();
        for v in views {
            row.extend_from_slice(rec.features.get(v).ok_or_else(|| EvalError::MissingFeatures(id.into()))?);
        }
        Ok(row)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub fdr_target: f64,
    pub threshold_mode: ThresholdMode,
    /// Fill the per-sample time column (extraction plus scoring).
    pub timing: bool,
    pub solver: SolverParams,
}

impl EvalOptions {
    pub fn new() -> Self {
        Self {
            fdr_target: DEFAULT_FDR_TARGET,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub protocol: Protocol,
    pub split: String,
    /// `None` when the split has no test spoofs or no test live samples.
    pub tdr_pct: Option<f64>,
    pub fdr_target_pct: f64,
    pub threshold: Option<f64>,
    pub n_live_test: usize,
    pub n_spoof_test: usize,
    pub gate_rejected_test: usize,
    pub ms_per_sample: Option<f64>,
    pub c: Vec<f64>,
    pub converged: bool,
    /// Model files relative to the report directory, and the sha256 of each.
    pub model_files: Vec<String>,
    pub model_sha256: Vec<String>,
    /// sha256 of the split's JSON.
    pub split_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format_version: u32,
    pub protocol: Protocol,
    pub seed: u64,
    pub fdr_target_pct: f64,
    pub threshold_mode: ThresholdMode,
    pub method: MethodSpec,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: ReportHeader,
    pub rows: Vec<ReportRow>,
    /// Mean and sample standard deviation of the per-fold TDR, known protocol only.
    pub summary: Option<(f64, f64)>,
    pub splits: Vec<SplitSpec>,
    /// Trained models per row, written beside the report.
    #[serde(skip)]
    pub models: Vec<Vec<LinearSvmModel>>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Trained {
    models: Vec<LinearSvmModel>,
}

impl Trained {
    fn score(&self, method: &MethodSpec, store: &FeatureStore, id: &str) -> Result<f64, EvalError> {
        match method.fusion {
            Fusion::Feature => {
                let row = store.row(id, &method.views)?;
                self.models[0].score_values(&row).map_err(|source| EvalError::Classifier {
                    split: id.into(),
                    source,
                })
            }
            Fusion::Score { method: how } => {
                let mut parts = Vec::with_capacity(self.models.len());
                for (m, v) in self.models.iter().zip(&method.views) {
                    let row = store.row(id, std::slice::from_ref(v))?;
                    let s = m.score_values(&row).map_err(|source| EvalError::Classifier {
                        split: id.into(),
                        source,
                    })?;
                    parts.push(m.standardize(s));
                }
                fuse_scores(&parts, how).map_err(|source| EvalError::Classifier {
                    split: id.into(),
                    source,
                })
            }
        }
    }
}

fn train_method(
    method: &MethodSpec,
    store: &FeatureStore,
    ids: &[String],
    seed: u64,
    split_name: &str,
    opts: &EvalOptions,
) -> Result<Trained, EvalError> {
    let labels: Vec<i8> = ids
        .iter()
        .map(|id| match store.samples[id].info.label {
            Label::Spoof => 1,
            Label::Live => -1,
        })
        .collect();
    let streams: Vec<Vec<View>> = match method.fusion {
        Fusion::Feature => vec![method.views.clone()],
        Fusion::Score { .. } => method.views.iter().map(|v| vec![*v]).collect(),
    };
    let cls = |source| EvalError::Classifier {
        split: split_name.into(),
        source,
    };
    let mut models = Vec::with_capacity(streams.len());
    for views in streams {
        let rows = ids.iter().map(|id| store.row(id, &views)).collect::<Result<Vec<_>, _>>()?;
        let kind = if views.len() > 1 {
            DescriptorKind::Fused
        } else {
            method.descriptor
        };
        let c = match &method.c_policy {
            CPolicy::Fixed { c } => *c,
            CPolicy::Select { grid, folds } => {
                select_c(&rows, &labels, ids, grid, *folds, seed, kind, &opts.solver)
                    .map_err(cls)?
                    .best_c
            }
        };
        models.push(train_svm(&rows, &labels, c, seed, kind, &opts.solver).map_err(cls)?);
    }
    Ok(Trained { models })
}

/// Trains `method` on the accepted samples among `ids`: one model, or one per
/// view under score fusion.
pub fn train_on_samples(
    method: &MethodSpec,
    store: &FeatureStore,
    ids: &[String],
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<LinearSvmModel>, EvalError> {
    method.validate()?;
    let accepted: Vec<String> = ids
        .iter()
        .filter(|id| store.samples.get(*id).is_some_and(|r| r.accepted))
        .cloned()
        .collect();
    Ok(train_method(method, store, &accepted, seed, "all", opts)?.models)
}

fn score_set(
    trained: &Trained,
    method: &MethodSpec,
    store: &FeatureStore,
    ids: &[String],
) -> Result<(ScoreSet, f64), EvalError> {
    let mut set = ScoreSet::default();
    let mut ms = 0.0;
    for id in ids {
        let rec = store.samples.get(id).ok_or_else(|| EvalError::MissingFeatures(id.clone()))?;
        ms += method.views.iter().filter_map(|v| rec.extract_ms.get(v)).sum::<f64>();
        if !rec.accepted {
            match rec.info.label {
                Label::Live => set.rejected_live += 1,
                Label::Spoof => set.rejected_spoof += 1,
            }
            continue;
        }
        let start = Instant::now();
        let s = trained.score(method, store, id)?;
        ms += start.elapsed().as_secs_f64() * 1e3;
        match rec.info.label {
            Label::Live => set.live.push(s),
            Label::Spoof => set.spoof.push(s),
        }
    }
    Ok((set, ms))
}

fn evaluate_split(
    split: &SplitSpec,
    index: usize,
    method: &MethodSpec,
    store: &FeatureStore,
    seed: u64,
    opts: &EvalOptions,
) -> Result<(ReportRow, Vec<LinearSvmModel>), EvalError> {
    let train_ids: Vec<String> = split
        .train
        .iter()
        .filter(|id| store.samples.get(*id).is_some_and(|r| r.accepted))
        .cloned()
        .collect();
    let train_seed = rng::derive_seed(seed, "train", &[index as u64]);
    let trained = train_method(method, store, &train_ids, train_seed, &split.name, opts)?;
    let (set, ms) = score_set(&trained, method, store, &split.test)?;
    let point = if set.n_live() == 0 || set.n_spoof() == 0 {
        None
    } else {
        Some(match opts.threshold_mode {
            ThresholdMode::Test => tdr_at_fdr(&set, opts.fdr_target)?,
            ThresholdMode::Validation => {
                let (train_set, _) = score_set(&trained, method, store, &train_ids)?;
                let t = tdr_at_fdr(&train_set, opts.fdr_target)?.threshold;
                tdr_at_threshold(&set, t)?
            }
        })
    };
    let n_test = split.test.len();
    let row = ReportRow {
        method: method.label.clone(),
        protocol: split.protocol,
        split: split.name.clone(),
        tdr_pct: point.map(|p| 100.0 * p.tdr),
        fdr_target_pct: 100.0 * opts.fdr_target,
        threshold: point.map(|p| p.threshold),
        n_live_test: set.n_live(),
        n_spoof_test: set.n_spoof(),
        gate_rejected_test: set.rejected_live + set.rejected_spoof,
        ms_per_sample: (opts.timing && n_test > 0).then(|| ms / n_test as f64),
        c: trained.models.iter().map(|m| m.c).collect(),
        converged: trained.models.iter().all(|m| m.converged),
        model_files: (0..trained.models.len())
            .map(|k| format!("models/{}_{k}.json", slug(&split.name)))
            .collect(),
        model_sha256: trained.models.iter().map(|m| sha256_hex(m.to_json().as_bytes())).collect(),
        split_sha256: sha256_hex(serde_json::to_string(split).expect("split serializes").as_bytes()),
    };
    Ok((row, trained.models))
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Trains and scores `method` on every split of `protocol`.
pub fn run_protocol(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    method: &MethodSpec,
    protocol: Protocol,
    seed: u64,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    method.validate()?;
    if store.descriptor != method.descriptor {
        return Err(EvalError::BadMethod {
            label: method.label.clone(),
            detail: format!(
                "features are {:?} but the method expects {:?}",
                store.descriptor, method.descriptor
            ),
        });
    }
    let splits = match protocol {
        Protocol::Known => known_material_splits(manifest, 5, seed)?,
        Protocol::Cross => cross_material_splits(manifest, seed)?,
    };
    let indexed: Vec<(usize, &SplitSpec)> = splits.iter().enumerate().collect();
    let (rows, models): (Vec<_>, Vec<_>) =
        crate::par_map(&indexed, |&(i, s)| evaluate_split(s, i, method, store, seed, opts))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .unzip();
    let summary = (protocol == Protocol::Known)
        .then(|| rows.iter().filter_map(|r| r.tdr_pct).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
        .map(|v| mean_std(&v));
    let mut notes = vec![format!("feature kind: {:?}", method.feature_kind())];
    if protocol == Protocol::Cross {
        notes.push("live test subjects re-drawn for every held-out material".into());
    }
    notes.push("capture-gate rejections counted as detections".into());
    Ok(EvalReport {
        header: ReportHeader {
            format_version: REPORT_FORMAT_VERSION,
            protocol,
            seed,
            fdr_target_pct: 100.0 * opts.fdr_target,
            threshold_mode: opts.threshold_mode,
            method: method.clone(),
            notes,
        },
        rows,
        summary,
        splits,
        models,
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        None => "N/A".into(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
        Some(x) => format!("{x:.digits$}"),
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,protocol,split,TDR_pct,FDR_target_pct,threshold,n_live_test,n_spoof_test,ms_per_sample\n");
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                quote(&r.method),
                r.protocol.as_str(),
                quote(&r.split),
                fmt_opt(r.tdr_pct, 4),
                fmt_opt(Some(r.fdr_target_pct), 2),
                fmt_opt(r.threshold, 6),
                r.n_live_test,
                r.n_spoof_test,
                r.ms_per_sample.map_or("-".into(), |m| format!("{m:.3}")),
            );
        }
        if let Some((mean, std)) = self.summary {
            let p = self.header.protocol.as_str();
            let m = quote(&self.header.method.label);
            let f = self.header.fdr_target_pct;
            let _ = writeln!(out, "{m},{p},mean,{mean:.4},{f:.2},-,-,-,-");
            let _ = writeln!(out, "{m},{p},std,{std:.4},{f:.2},-,-,-,-");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let h = &self.header;
        let _ = writeln!(
            out,
            "{} | {} protocol | TDR @ FDR = {:.1}% | seed {}",
            h.method.label,
            h.protocol.as_str(),
            h.fdr_target_pct,
            h.seed
        );
        for n in &h.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        let _ = writeln!(
            out,
            "{:<26} {:>9} {:>12} {:>7} {:>8} {:>9}",
            "split", "TDR %", "threshold", "live", "spoof", "rejected"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<26} {:>9} {:>12} {:>7} {:>8} {:>9}",
                r.split,
                fmt_opt(r.tdr_pct, 2),
                fmt_opt(r.threshold, 4),
                r.n_live_test,
                r.n_spoof_test,
                r.gate_rejected_test
            );
        }
        if let Some((mean, std)) = self.summary {
            let _ = writeln!(out, "{:<26} {:>9}", "mean +- std", format!("{mean:.2} +- {std:.2}"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `report.csv`, `report.txt`, `report.json` and the model files
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, EvalError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| EvalError::Io { path, source }
        };
        let model_dir = dir.join("models");
        fs::create_dir_all(&model_dir).map_err(io(&model_dir))?;
        let mut written = Vec::new();
        for (row, models) in self.rows.iter().zip(&self.models) {
            for (file, m) in row.model_files.iter().zip(models) {
                let p = dir.join(file);
                fs::write(&p, m.to_json()).map_err(io(&p))?;
                written.push(p);
            }
        }
        for (name, body) in [
            ("report.csv", self.to_csv()),
            ("report.txt", self.to_text()),
            ("report.json", self.to_json()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io(&p))?;
            written.push(p);
        }
        Ok(written)
    }
}
