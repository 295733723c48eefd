use serde::{Deserialize, Serialize};

use crate::image::{ColorSpace, Image};
use crate::pipeline::luma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Minimum mean gray level of the brightest decile.
    pub threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { threshold: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum GateDecision {
    Accept { top_decile_mean: f64 },
    Reject { top_decile_mean: f64, reason: String },
}

impl GateDecision {
    pub fn accepted(&self) -> bool {
        matches!(self, GateDecision::Accept { .. })
    }

    pub fn statistic(&self) -> f64 {
        match self {
            GateDecision::Accept { top_decile_mean } | GateDecision::Reject { top_decile_mean, .. } => {
                *top_decile_mean
            }
        }
    }
}

/// Mean gray level of the brightest `ceil(n / 10)` pixels. RGB input is
/// reduced to luma first; other layouts use their first channel.
pub fn top_decile_mean(img: &Image) -> f64 {
    let mut hist = [0u64; 256];
    match img.color_space() {
        ColorSpace::Rgb => {
            for p in img.data().chunks_exact(3) {
                hist[luma(p[0], p[1], p[2]) as usize] += 1;
            }
        }
        _ => {
            for p in img.data().chunks_exact(img.channels()) {
                hist[p[0] as usize] += 1;
            }
        }
    }
    let n = img.width() * img.height();
    let take = n.div_ceil(10) as u64;
    let mut left = take;
    let mut sum = 0u64;
    for (v, &count) in hist.iter().enumerate().rev() {
        let k = count.min(left);
        sum += k * v as u64;
        left -= k;
        if left == 0 {
            break;
        }
    }
    sum as f64 / take as f64
}

/// Rejects frames too dark to hold a usable ridge pattern.
pub fn capture_gate(ftir: &Image, cfg: &GateConfig) -> GateDecision {
    let stat = top_decile_mean(ftir);
    if stat < cfg.threshold {
        GateDecision::Reject {
            top_decile_mean: stat,
            reason: format!(
                "top-decile mean intensity {stat:.1} below threshold {:.1}",
                cfg.threshold
            ),
        }
    } else {
        GateDecision::Accept { top_decile_mean: stat }
    }
}
