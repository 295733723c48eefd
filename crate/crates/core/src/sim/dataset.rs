use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{render_views, FingerSpec, MaterialSpec, Pose, RenderOptions, SimError};
use crate::image::write_png;
use crate::rng;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialCount {
    #[serde(flatten)]
    pub material: MaterialSpec,
    /// Spoof instances cast from this material.
    pub spoofs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub subjects: u32,
    pub fingers: u32,
    pub live_impressions: u32,
    pub materials: Vec<MaterialCount>,
    pub spoof_impressions: u32,
    pub render: RenderOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DatasetConfig {
    /// 15 subjects x 10 fingers x 5 impressions; 66 spoofs x 10 impressions.
    pub fn full() -> Self {
        Self {
            subjects: 15,
            fingers: 10,
            live_impressions: 5,
            materials: MaterialSpec::standard_set()
                .into_iter()
                .map(|(material, spoofs)| MaterialCount {
                    material,
                    spoofs: spoofs as u32,
                })
                .collect(),
            spoof_impressions: 10,
            render: RenderOptions::default(),
        }
    }

    /// 4 subjects x 2 fingers x 3 impressions; 7 materials x 2 spoofs x 3 impressions.
    pub fn desk() -> Self {
        Self {
            subjects: 4,
            fingers: 2,
            live_impressions: 3,
            materials: MaterialSpec::standard_set()
                .into_iter()
                .map(|(material, _)| MaterialCount { material, spoofs: 2 })
                .collect(),
            spoof_impressions: 3,
            render: RenderOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadConfig(m));
        if self.subjects == 0 || self.fingers == 0 || self.live_impressions == 0 {
            return bad("live subject, finger and impression counts must be at least 1".into());
        }
        if self.spoof_impressions == 0 || self.materials.iter().any(|m| m.spoofs == 0) {
            return bad("spoof instance and impression counts must be at least 1".into());
        }
        let mut names = BTreeSet::new();
        for m in &self.materials {
            m.material.validate().map_err(SimError::BadMaterial)?;
            if !names.insert(m.material.slug()) {
                return bad(format!("material {:?} listed twice", m.material.name));
            }
        }
        self.render.validate()
    }

    pub fn live_count(&self) -> usize {
        (self.subjects * self.fingers * self.live_impressions) as usize
    }

    pub fn spoof_count(&self) -> usize {
        self.materials.iter().map(|m| (m.spoofs * self.spoof_impressions) as usize).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Ftir,
    Direct,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Ftir => "ftir",
            View::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Live,
    Spoof,
}

/// One dual-view presentation to render.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSample {
    pub id: String,
    pub label: Label,
    pub material: Option<MaterialSpec>,
    pub subject: Option<u32>,
    pub finger: Option<u32>,
    pub instance: Option<u32>,
    pub impression: u32,
    pub finger_spec: FingerSpec,
    pub pose: Pose,
    pub noise_seed: u64,
}

/// Enumerates every presentation of the dataset without rendering.
pub fn plan_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Vec<PlannedSample>, SimError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.live_count() + cfg.spoof_count());
    for s in 0..cfg.subjects {
        for f in 0..cfg.fingers {
            let finger_spec = FingerSpec::live(seed, s, f);
            for i in 0..cfg.live_impressions {
                let path = [0, s as u64, f as u64, i as u64];
                out.push(PlannedSample {
                    id: format!("live/s{s:02}_f{f:02}_i{i:02}"),
                    label: Label::Live,
                    material: None,
                    subject: Some(s),
                    finger: Some(f),
                    instance: None,
                    impression: i,
                    finger_spec,
                    pose: Pose::random(&mut rng::stream(seed, "pose", &path)),
                    noise_seed: rng::derive_seed(seed, "noise", &path),
                });
            }
        }
    }
    for m in &cfg.materials {
        let slug = m.material.slug();
        let key = rng::keyed_hash(seed, "material", &m.material.name);
        for n in 0..m.spoofs {
            let finger_spec = FingerSpec::spoof_donor(seed, &m.material.name, n);
            for i in 0..cfg.spoof_impressions {
                let path = [1, key, n as u64, i as u64];
                out.push(PlannedSample {
                    id: format!("spoof/{slug}/n{n:02}_i{i:02}"),
                    label: Label::Spoof,
                    material: Some(m.material.clone()),
                    subject: None,
                    finger: None,
                    instance: Some(n),
                    impression: i,
                    finger_spec,
                    pose: Pose::random(&mut rng::stream(seed, "pose", &path)),
                    noise_seed: rng::derive_seed(seed, "noise", &path),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Presentation id shared by the two views.
    pub sample: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub view: View,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finger: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<u32>,
    pub impression: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub seed: u64,
    pub prng_name: String,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
    /// Directory the entry paths are relative to; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Entry of `view` for every presentation, in manifest order.
    pub fn view_entries(&self, view: View) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.view == view)
    }

    pub fn entry(&self, sample: &str, view: View) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.sample == sample && e.view == view)
    }

    /// Distinct live subject ids, ascending.
    pub fn subjects(&self) -> Vec<u32> {
        self.entries
            .iter()
            .filter_map(|e| e.subject)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Distinct material names in manifest order.
    pub fn materials(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for m in self.entries.iter().filter_map(|e| e.material.as_ref()) {
            if !seen.contains(m) {
                seen.push(m.clone());
            }
        }
        seen
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Renders every presentation into `out` and writes `manifest.json` last.
/// With `force`, previously generated image directories are replaced.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64, out: &Path, force: bool) -> Result<DatasetManifest, SimError> {
    let plan = plan_dataset(cfg, seed)?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        if !force {
            return Err(SimError::ManifestExists {
                path: manifest_path.display().to_string(),
            });
        }
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
        for sub in ["live", "spoof"] {
            let dir = out.join(sub);
            if dir.is_dir() {
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
        }
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let dirs: BTreeSet<PathBuf> = plan
        .iter()
        .filter_map(|p| out.join(&p.id).parent().map(Path::to_path_buf))
        .collect();
    for d in &dirs {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let rendered = crate::par_map(&plan, |p| -> Result<Vec<ManifestEntry>, SimError> {
        let views = render_views(&p.finger_spec, p.material.as_ref(), &p.pose, &cfg.render, p.noise_seed)?;
        let mut entries = Vec::with_capacity(2);
        for (view, img) in [(View::Ftir, &views.ftir), (View::Direct, &views.direct)] {
            let rel = format!("{}_{}.png", p.id, view.as_str());
            write_png(&out.join(&rel), img, None)?;
            entries.push(ManifestEntry {
                sample: p.id.clone(),
                path: rel,
                view,
                label: p.label,
                material: p.material.as_ref().map(|m| m.name.clone()),
                subject: p.subject,
                finger: p.finger,
                instance: p.instance,
                impression: p.impression,
            });
        }
        Ok(entries)
    });
    let mut entries = Vec::with_capacity(plan.len() * 2);
    for r in rendered {
        entries.extend(r?);
    }
    let manifest = DatasetManifest {
        header: ManifestHeader {
            format_version: MANIFEST_FORMAT_VERSION,
            seed,
            prng_name: rng::PRNG_NAME.to_string(),
            config: cfg.clone(),
        },
        entries,
        root: out.to_path_buf(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, SimError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| SimError::BadManifest {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if m.header.format_version != MANIFEST_FORMAT_VERSION {
        return Err(SimError::BadManifest {
            path: path.display().to_string(),
            detail: format!("unsupported format version {}", m.header.format_version),
        });
    }
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(m)
}
