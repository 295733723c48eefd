//! Browser bindings: camera placement, a rendered presentation run through the
//! capture gate and LBP extractor, and keystone frontalization.

use wasm_bindgen::prelude::*;

use ftirpad::calibration::{apply_perspective, estimate_perspective, estimate_resolution, synth_checkerboard, KeystoneSpec};
use ftirpad::features::{lbp_from_view, LbpConfig, FTIR_CLBP_DIMS};
use ftirpad::optics::{validate_geometry, GeometrySpec};
use ftirpad::sim::{capture_gate, render_views, FingerSpec, GateConfig, MaterialSpec, Pose, RenderOptions};
use ftirpad::Image;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Placement report as JSON.
#[wasm_bindgen]
pub fn geometry(n_glass: f64, n_air: f64, theta_direct_deg: f64, theta_ftir_deg: f64) -> Result<String, JsError> {
    let spec = GeometrySpec {
        n_glass,
        n_air,
        theta_direct_deg,
        theta_ftir_deg,
        ..GeometrySpec::reference()
    };
    let report = validate_geometry(&spec).map_err(js_err)?;
    Ok(format!(
        "{{\"critical_angle_deg\":{},\"direct_ok\":{},\"ftir_ok\":{}}}",
        report.critical_angle_deg, report.direct_ok, report.ftir_ok
    ))
}

/// Material names accepted by [`present`], comma separated.
#[wasm_bindgen]
pub fn materials() -> String {
    let mut names: Vec<String> = MaterialSpec::standard_set().into_iter().map(|(m, _)| m.name).collect();
    names.push(MaterialSpec::conductive_coated_ecoflex().name);
    names.join(",")
}

#[wasm_bindgen]
pub struct Presentation {
    ftir: Image,
    direct: Image,
    gate_statistic: f64,
    accepted: bool,
    lbp: Vec<f64>,
}

#[wasm_bindgen]
impl Presentation {
    #[wasm_bindgen(getter)]
    pub fn ftir_width(&self) -> usize {
        self.ftir.width()
    }

    #[wasm_bindgen(getter)]
    pub fn ftir_height(&self) -> usize {
        self.ftir.height()
    }

    #[wasm_bindgen(getter)]
    pub fn direct_width(&self) -> usize {
        self.direct.width()
    }

    #[wasm_bindgen(getter)]
    pub fn direct_height(&self) -> usize {
        self.direct.height()
    }

    pub fn ftir_rgba(&self) -> Vec<u8> {
        self.ftir.to_rgba()
    }

    pub fn direct_rgba(&self) -> Vec<u8> {
        self.direct.to_rgba()
    }

    #[wasm_bindgen(getter)]
    pub fn gate_statistic(&self) -> f64 {
        self.gate_statistic
    }

    #[wasm_bindgen(getter)]
    pub fn accepted(&self) -> bool {
        self.accepted
    }

    /// FTIR-view LBP histogram (empty when the gate rejects the presentation).
    pub fn lbp(&self) -> Vec<f64> {
        self.lbp.clone()
    }
}

/// Renders a live finger (empty `material`) or a spoof of the named material,
/// gates it and extracts the FTIR LBP histogram.
#[wasm_bindgen]
pub fn present(
    material: &str,
    seed: u32,
    subject: u32,
    pressure: f64,
    rotation_deg: f64,
) -> Result<Presentation, JsError> {
    let seed = u64::from(seed);
    let spec = if material.is_empty() {
        None
    } else {
        Some(MaterialSpec::preset(material).ok_or_else(|| JsError::new(&format!("unknown material {material}")))?)
    };
    let finger = match &spec {
        None => FingerSpec::live(seed, subject, 0),
        Some(m) => FingerSpec::spoof_donor(seed, &m.name, subject),
    };
    let pose = Pose {
        pressure,
        rotation_deg,
        ..Pose::CENTERED
    };
    let views = render_views(&finger, spec.as_ref(), &pose, &RenderOptions::default(), seed).map_err(js_err)?;
    let decision = capture_gate(&views.ftir, &GateConfig::default());
    let lbp = if decision.accepted() {
        lbp_from_view(&views.ftir, FTIR_CLBP_DIMS, &LbpConfig::default())
            .map_err(js_err)?
            .values
    } else {
        Vec::new()
    };
    Ok(Presentation {
        ftir: views.ftir,
        direct: views.direct,
        gate_statistic: decision.statistic(),
        accepted: decision.accepted(),
        lbp,
    })
}

#[wasm_bindgen]
pub struct Frontalization {
    raw: Image,
    frontal: Image,
    rms_px: f64,
    ppi_x_min: f64,
    ppi_x_max: f64,
}

#[wasm_bindgen]
impl Frontalization {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.raw.width()
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.raw.height()
    }

    pub fn raw_rgba(&self) -> Vec<u8> {
        self.raw.to_rgba()
    }

    pub fn frontal_rgba(&self) -> Vec<u8> {
        self.frontal.to_rgba()
    }

    #[wasm_bindgen(getter)]
    pub fn rms_px(&self) -> f64 {
        self.rms_px
    }

    #[wasm_bindgen(getter)]
    pub fn ppi_x_min(&self) -> f64 {
        self.ppi_x_min
    }

    #[wasm_bindgen(getter)]
    pub fn ppi_x_max(&self) -> f64 {
        self.ppi_x_max
    }
}

/// Renders a 6x8 board seen through a keystone whose raw x resolution runs
/// from `ppi_left` to `ppi_right`, then recovers and undoes the distortion.
#[wasm_bindgen]
pub fn frontalize(ppi_left: f64, ppi_right: f64) -> Result<Frontalization, JsError> {
    const SQ: usize = 30;
    const SQUARE_MM: f64 = 1.0;
    let (rows, cols) = (6, 8);
    let (w, h) = ((cols + 2) * SQ, (rows + 2) * SQ);
    let frontal_ppi = 25.4 * SQ as f64 / SQUARE_MM;
    let centre = (w as f64 / 2.0, h as f64 / 2.0);
    let scale = frontal_ppi / ppi_left.max(ppi_right);
    let spec = KeystoneSpec {
        frontal_ppi,
        ppi_x_left: ppi_left * scale,
        ppi_x_right: ppi_right * scale,
        ppi_y_left: ppi_left * scale,
        u_left: SQ as f64,
        u_right: (w - SQ) as f64,
        frontal_center: centre,
        raw_center: centre,
    };
    let t = spec.transform().map_err(js_err)?;
    let board = synth_checkerboard(rows, cols, SQ, &t).map_err(js_err)?;
    let pairs = board.correspondences().map_err(js_err)?;
    let est = estimate_perspective(&pairs).map_err(js_err)?;
    let frontal = apply_perspective(&est.transform, &board.image, w, h).map_err(js_err)?;
    let res = estimate_resolution(&pairs, SQUARE_MM).map_err(js_err)?;
    Ok(Frontalization {
        raw: board.image,
        frontal,
        rms_px: est.residual.rms_px,
        ppi_x_min: res.min_ppi_x / scale,
        ppi_x_max: res.max_ppi_x / scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presentations_gate_as_expected() {
        let live = present("", 4, 1, 1.0, 0.0).unwrap();
        assert!(live.accepted());
        assert_eq!(live.lbp().len(), 54);
        assert_eq!(live.ftir_rgba().len(), live.ftir_width() * live.ftir_height() * 4);
        let black = present("Conductive Coated Ecoflex", 4, 1, 1.0, 0.0).unwrap();
        assert!(!black.accepted());
        assert!(black.lbp().is_empty());
    }

    #[test]
    fn frontalization_reports_requested_range() {
        let f = frontalize(1594.0, 2480.0).unwrap();
        assert!(f.rms_px() < 1e-6);
        assert!(f.ppi_x_min() > 1594.0 * 0.95 && f.ppi_x_max() < 2480.0 * 1.05, "{} {}", f.ppi_x_min(), f.ppi_x_max());
    }

    #[test]
    fn geometry_json() {
        let s = geometry(1.5, 1.0, 10.0, 45.0).unwrap();
        assert!(s.contains("\"direct_ok\":true") && s.contains("\"ftir_ok\":true"));
    }
}
