use serde::{Deserialize, Serialize};

/// Optical and color properties of a spoof material.
///
/// Color is relative to the skin of the finger the spoof is cast from:
/// hue moves by `hue_shift` (on the 0..255 hue circle) and saturation scales
/// by `saturation_scale`, then the result is pulled back toward the skin by
/// `transparency`. `texture_noise_sigma` roughens FTIR ridges only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub name: String,
    pub hue_shift: f64,
    pub saturation_scale: f64,
    pub texture_noise_sigma: f64,
    pub transparency: f64,
    pub albedo: f64,
}

/// The seven presentation-attack materials, in the order the cross-material
/// report lists them.
pub const REPORT_ORDER: [&str; 7] = [
    "Crayola Model Magic",
    "Ecoflex",
    "Silver Coated Ecoflex",
    "Gelatin",
    "Liquid Latex Body Paint",
    "Monster Liquid Latex",
    "Wood Glue",
];

impl MaterialSpec {
    pub fn new(
        name: &str,
        hue_shift: f64,
        saturation_scale: f64,
        texture_noise_sigma: f64,
        transparency: f64,
        albedo: f64,
    ) -> Self {
        Self {
            name: name.to_string(),
            hue_shift,
            saturation_scale,
            texture_noise_sigma,
            transparency,
            albedo,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.hue_shift,
            self.saturation_scale,
            self.texture_noise_sigma,
            self.transparency,
            self.albedo,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(format!("material {:?} has non-finite parameters", self.name));
        }
        if self.name.trim().is_empty() {
            return Err("material name is empty".into());
        }
        if !(0.0..=1.0).contains(&self.transparency) || !(0.0..=1.0).contains(&self.albedo) {
            return Err(format!("material {:?}: transparency and albedo must lie in [0, 1]", self.name));
        }
        if self.saturation_scale < 0.0 || self.texture_noise_sigma < 0.0 {
            return Err(format!("material {:?}: negative saturation scale or noise", self.name));
        }
        Ok(())
    }

    /// Hue offset that survives the transparency blend.
    pub fn effective_hue_shift(&self) -> f64 {
        self.hue_shift * (1.0 - self.transparency)
    }

    /// File-system friendly name.
    pub fn slug(&self) -> String {
        let mut out = String::with_capacity(self.name.len());
        for c in self.name.chars() {
            if c.is_ascii_alphanumeric() {
                out.push(c.to_ascii_lowercase());
            } else if !out.ends_with('_') {
                out.push('_');
            }
        }
        out.trim_matches('_').to_string()
    }

    pub fn ecoflex() -> Self {
        Self::new("Ecoflex", 6.0, 0.45, 5.0, 0.75, 0.95)
    }

    pub fn wood_glue() -> Self {
        Self::new("Wood Glue", 28.0, 0.8, 8.0, 0.3, 0.9)
    }

    pub fn monster_liquid_latex() -> Self {
        Self::new("Monster Liquid Latex", 12.0, 1.35, 10.0, 0.1, 0.8)
    }

    pub fn liquid_latex_body_paint() -> Self {
        Self::new("Liquid Latex Body Paint", -24.0, 1.5, 7.0, 0.05, 0.85)
    }

    pub fn gelatin() -> Self {
        Self::new("Gelatin", 18.0, 0.7, 4.0, 0.5, 0.9)
    }

    pub fn silver_coated_ecoflex() -> Self {
        Self::new("Silver Coated Ecoflex", 0.0, 0.1, 12.0, 0.0, 0.6)
    }

    pub fn crayola_model_magic() -> Self {
        Self::new("Crayola Model Magic", 150.0, 1.4, 9.0, 0.0, 0.5)
    }

    /// Black conductive coating: absorbs the light that would reach the FTIR camera.
    pub fn conductive_coated_ecoflex() -> Self {
        Self::new("Conductive Coated Ecoflex", 0.0, 0.05, 5.0, 0.0, 0.0)
    }

    /// The seven standard materials with their spoof counts, in table order.
    pub fn standard_set() -> Vec<(MaterialSpec, usize)> {
        vec![
            (Self::ecoflex(), 10),
            (Self::wood_glue(), 10),
            (Self::monster_liquid_latex(), 10),
            (Self::liquid_latex_body_paint(), 10),
            (Self::gelatin(), 10),
            (Self::silver_coated_ecoflex(), 10),
            (Self::crayola_model_magic(), 6),
        ]
    }

    pub fn preset(name: &str) -> Option<Self> {
        let all = [
            Self::ecoflex(),
            Self::wood_glue(),
            Self::monster_liquid_latex(),
            Self::liquid_latex_body_paint(),
            Self::gelatin(),
            Self::silver_coated_ecoflex(),
            Self::crayola_model_magic(),
            Self::conductive_coated_ecoflex(),
        ];
        all.into_iter()
            .find(|m| m.name.eq_ignore_ascii_case(name) || m.slug() == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_cover_report_order() {
        for (m, _) in MaterialSpec::standard_set() {
            m.validate().unwrap();
            assert!(REPORT_ORDER.contains(&m.name.as_str()));
        }
        assert_eq!(MaterialSpec::standard_set().iter().map(|(_, n)| n).sum::<usize>(), 66);
        assert_eq!(MaterialSpec::conductive_coated_ecoflex().albedo, 0.0);
    }

    #[test]
    fn slug_and_lookup() {
        assert_eq!(MaterialSpec::liquid_latex_body_paint().slug(), "liquid_latex_body_paint");
        assert_eq!(MaterialSpec::preset("wood_glue").unwrap().name, "Wood Glue");
        assert_eq!(MaterialSpec::preset("gelatin").unwrap().name, "Gelatin");
        assert!(MaterialSpec::preset("clay").is_none());
    }

    #[test]
    fn rejects_out_of_range() {
        let mut m = MaterialSpec::gelatin();
        m.albedo = 1.5;
        assert!(m.validate().is_err());
    }
}
