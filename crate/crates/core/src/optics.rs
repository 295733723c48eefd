//! Reader geometry: critical angle and camera placement.
//!
//! The FTIR camera must look at the platen from beyond the critical angle so
//! that only ridge contact frustrates total internal reflection; the direct
//! camera must sit below it to see the finger surface.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    #[error("refractive indices must be positive (glass {n_glass}, air {n_air})")]
    NonPositiveIndex { n_glass: f64, n_air: f64 },
    #[error("no total internal reflection: outer index {n_air} exceeds glass index {n_glass}")]
    NoTotalInternalReflection { n_glass: f64, n_air: f64 },
    #[error("camera angle {name} = {value} deg outside {range}")]
    AngleOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// Critical angle in degrees for light leaving glass into the outer medium.
pub fn critical_angle(n_glass: f64, n_air: f64) -> Result<f64, OpticsError> {
    if !(n_glass > 0.0 && n_air > 0.0) {
        return Err(OpticsError::NonPositiveIndex { n_glass, n_air });
    }
    if n_air > n_glass {
        return Err(OpticsError::NoTotalInternalReflection { n_glass, n_air });
    }
    Ok((n_air / n_glass).asin().to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub n_glass: f64,
    pub n_air: f64,
    pub theta_direct_deg: f64,
    pub theta_ftir_deg: f64,
    pub camera_distance_mm: f64,
}

impl GeometrySpec {
    /// Glass prism in air, direct camera at 10 deg, FTIR camera at 45 deg, 23 mm away.
    pub fn reference() -> Self {
        Self {
            n_glass: 1.5,
            n_air: 1.0,
            theta_direct_deg: 10.0,
            theta_ftir_deg: 45.0,
            camera_distance_mm: 23.0,
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        critical_angle(self.n_glass, self.n_air)?;
        if !(0.0..90.0).contains(&self.theta_direct_deg) {
            return Err(OpticsError::AngleOutOfRange {
                name: "theta_direct_deg",
                value: self.theta_direct_deg,
                range: "[0, 90)",
            });
        }
        if !(self.theta_ftir_deg > 0.0 && self.theta_ftir_deg < 90.0) {
            return Err(OpticsError::AngleOutOfRange {
                name: "theta_ftir_deg",
                value: self.theta_ftir_deg,
                range: "(0, 90)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub critical_angle_deg: f64,
    /// Direct camera strictly below the critical angle.
    pub direct_ok: bool,
    /// FTIR camera strictly above the critical angle.
    pub ftir_ok: bool,
}

impl PlacementReport {
    pub fn all_ok(&self) -> bool {
        self.direct_ok && self.ftir_ok
    }
}

pub fn validate_geometry(spec: &GeometrySpec) -> Result<PlacementReport, OpticsError> {
    spec.validate()?;
    let theta_c = critical_angle(spec.n_glass, spec.n_air)?;
    Ok(PlacementReport {
        critical_angle_deg: theta_c,
        direct_ok: spec.theta_direct_deg < theta_c,
        ftir_ok: spec.theta_ftir_deg > theta_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn glass_air_critical_angle() {
        let theta = critical_angle(1.5, 1.0).unwrap();
        assert!((theta - 41.8).abs() <= 0.05, "{theta}");
    }

    #[test]
    fn trivial_angles() {
        assert!((critical_angle(1.33, 1.33).unwrap() - 90.0).abs() < 1e-12);
        assert!((critical_angle(2.0, 1.0).unwrap() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(matches!(
            critical_angle(1.0, 1.5),
            Err(OpticsError::NoTotalInternalReflection { .. })
        ));
        assert!(matches!(
            critical_angle(0.0, 1.0),
            Err(OpticsError::NonPositiveIndex { .. })
        ));
        assert!(matches!(
            critical_angle(1.5, -1.0),
            Err(OpticsError::NonPositiveIndex { .. })
        ));
    }

    #[test]
    fn reference_placement_is_valid() {
        let report = validate_geometry(&GeometrySpec::reference()).unwrap();
        assert!(report.direct_ok && report.ftir_ok);
    }

    #[test]
    fn swapped_angles_flag_both() {
        let spec = GeometrySpec {
            theta_direct_deg: 45.0,
            theta_ftir_deg: 10.0,
            ..GeometrySpec::reference()
        };
        let report = validate_geometry(&spec).unwrap();
        assert!(!report.direct_ok && !report.ftir_ok);
    }

    #[test]
    fn boundary_is_strict() {
        let theta_c = critical_angle(1.5, 1.0).unwrap();
        let spec = GeometrySpec {
            theta_direct_deg: theta_c,
            theta_ftir_deg: theta_c,
            ..GeometrySpec::reference()
        };
        let report = validate_geometry(&spec).unwrap();
        assert!(!report.direct_ok);
        assert!(!report.ftir_ok);
    }

    #[test]
    fn rejects_out_of_range_angles() {
        let spec = GeometrySpec {
            theta_ftir_deg: 90.0,
            ..GeometrySpec::reference()
        };
        assert!(validate_geometry(&spec).is_err());
    }

    proptest! {
        #[test]
        fn critical_angle_decreases_with_glass_index(n_air in 1.0f64..1.4, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let lo = n_air + a.min(b);
            let hi = n_air + a.max(b) + 1e-6;
            prop_assert!(critical_angle(hi, n_air).unwrap() < critical_angle(lo, n_air).unwrap());
        }
    }
}
