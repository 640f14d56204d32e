//! Optical channel transmissivities for fiber and free-space links.
//!
//! Fiber links attenuate exponentially with length. Free-space optical (FSO)
//! links combine three factors: capture of the turbulence-broadened beam by the
//! receiving aperture, receiver efficiency, and Beer-Lambert extinction whose
//! coefficient decays with altitude (6600 m scale height).
//!
//! FSO lengths are in meters; fiber lengths are in kilometers to match the
//! dB/km attenuation convention.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Scale height of the extinction coefficient, meters.
pub const EXTINCTION_SCALE_HEIGHT_M: f64 = 6600.0;

/// A channel transmissivity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Transmissivity(f64);

impl Transmissivity {
    pub const ONE: Transmissivity = Transmissivity(1.0);
    pub const ZERO: Transmissivity = Transmissivity(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Transmissivity(value))
        } else {
            Err(Error::domain(format!("transmissivity {value} outside [0, 1]")))
        }
    }

    /// Clamps rounding overshoot into `[0, 1]`. NaN maps to 0.
    pub(crate) fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Transmissivity(0.0)
        } else {
            Transmissivity(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Transmissivity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Transmissivity::new(v).map_err(de::Error::custom)
    }
}

impl fmt::Display for Transmissivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Converts a dB/km attenuation into the natural-exponent rate (1/km).
pub fn db_per_km_to_rate(db_per_km: f64) -> Result<f64> {
    if !(db_per_km >= 0.0) {
        return Err(Error::domain(format!("negative attenuation {db_per_km} dB/km")));
    }
    Ok(db_per_km * std::f64::consts::LN_10 / 10.0)
}

/// `exp(-attenuation * length)`, attenuation in 1/km and length in km.
pub fn fiber_transmissivity(attenuation: f64, length_km: f64) -> Result<Transmissivity> {
    if !(attenuation >= 0.0) {
        return Err(Error::domain(format!("negative attenuation {attenuation}")));
    }
    if !(length_km >= 0.0) {
        return Err(Error::domain(format!("negative fiber length {length_km}")));
    }
    Ok(Transmissivity::saturating((-attenuation * length_km).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberParams {
    /// Natural attenuation rate, 1/km.
    pub attenuation: f64,
}

impl FiberParams {
    pub fn from_db_per_km(db_per_km: f64) -> Result<Self> {
        Ok(FiberParams {
            attenuation: db_per_km_to_rate(db_per_km)?,
        })
    }

    pub fn transmissivity(&self, length_km: f64) -> Result<Transmissivity> {
        fiber_transmissivity(self.attenuation, length_km)
    }
}

/// Initial wavefront radius of curvature of the transmitted Gaussian beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curvature {
    Finite(f64),
    /// Collimated beam.
    Infinite,
}

impl Serialize for Curvature {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Curvature::Finite(r) => serializer.serialize_f64(*r),
            Curvature::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Curvature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CurvatureVisitor;

        impl Visitor<'_> for CurvatureVisitor {
            type Value = Curvature;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive radius in meters or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Curvature, E> {
                if v > 0.0 && v.is_finite() {
                    Ok(Curvature::Finite(v))
                } else {
                    Err(E::custom(format!("curvature radius must be positive, got {v}")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Curvature, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Curvature, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Curvature, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinite" | "infinity" => Ok(Curvature::Infinite),
                    other => Err(E::custom(format!("unrecognised curvature {other:?}"))),
                }
            }
        }

        deserializer.deserialize_any(CurvatureVisitor)
    }
}

/// Free-space optical link parameters. Serialized keys follow the usual
/// symbol names (`a_R`, `w0`, `lambda`, ...), all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsoParams {
    /// Receiver aperture radius, m.
    #[serde(rename = "a_R")]
    pub aperture_radius: f64,
    /// Initial beam spot size, m.
    #[serde(rename = "w0")]
    pub initial_waist: f64,
    /// Carrier wavelength, m.
    #[serde(rename = "lambda")]
    pub wavelength: f64,
    #[serde(rename = "R0")]
    pub initial_curvature: Curvature,
    /// Extinction coefficient at sea level, 1/m.
    #[serde(rename = "alpha0")]
    pub sea_level_extinction: f64,
    /// Turbulence inner scale, m.
    #[serde(rename = "l0")]
    pub inner_scale: f64,
    /// Refractive-index structure constant, m^(-2/3).
    #[serde(rename = "Cn2", default = "default_cn2")]
    pub refractive_structure: f64,
    #[serde(rename = "eta_eff")]
    pub receiver_efficiency: f64,
}

fn default_cn2() -> f64 {
    FsoParams::DEFAULT_CN2
}

impl Default for FsoParams {
    fn default() -> Self {
        FsoParams {
            aperture_radius: 5.0,
            initial_waist: 0.20,
            wavelength: 800e-9,
            initial_curvature: Curvature::Infinite,
            sea_level_extinction: 5e-6,
            inner_scale: 1e-3,
            refractive_structure: Self::DEFAULT_CN2,
            receiver_efficiency: 1.0,
        }
    }
}

impl FsoParams {
    /// Moderate turbulence.
    pub const DEFAULT_CN2: f64 = 1e-15;

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_R", self.aperture_radius),
            ("w0", self.initial_waist),
            ("lambda", self.wavelength),
            ("l0", self.inner_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("FSO parameter {name} must be positive, got {v}")));
            }
        }
        if let Curvature::Finite(r) = self.initial_curvature {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("FSO parameter R0 must be positive, got {r}")));
            }
        }
        if !(self.sea_level_extinction >= 0.0) {
            return Err(Error::Config("FSO parameter alpha0 must be non-negative".into()));
        }
        if !(self.refractive_structure >= 0.0) {
            return Err(Error::Config("FSO parameter Cn2 must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.receiver_efficiency) {
            return Err(Error::Config(format!(
                "FSO parameter eta_eff must lie in [0, 1], got {}",
                self.receiver_efficiency
            )));
        }
        Ok(())
    }

    pub fn wave_number(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn rayleigh_length(&self) -> f64 {
        PI * self.initial_waist * self.initial_waist / self.wavelength
    }

    /// Beer-Lambert extinction over `z` meters at altitude `h0` meters.
    pub fn atmospheric_transmissivity(&self, z: f64, h0: f64) -> Result<Transmissivity> {
        if !(z >= 0.0) || !(h0 >= 0.0) {
            return Err(Error::domain(format!("atmospheric path needs z >= 0 and h0 >= 0, got z={z}, h0={h0}")));
        }
        let alpha = self.sea_level_extinction * (-h0 / EXTINCTION_SCALE_HEIGHT_M).exp();
        Ok(Transmissivity::saturating((-alpha * z).exp()))
    }

    /// Diffraction-limited spot size after propagating `z` meters.
    pub fn diffracted_beam_waist(&self, z: f64) -> f64 {
        let focus = match self.initial_curvature {
            Curvature::Infinite => 1.0,
            Curvature::Finite(r0) => (1.0 - z / r0).powi(2),
        };
        let spread = z / self.rayleigh_length();
        self.initial_waist * (focus + spread * spread).sqrt()
    }

    /// Rytov variance of the log-amplitude fluctuations.
    pub fn rytov_variance(&self, z: f64) -> f64 {
        2.25 * self.refractive_structure * self.wave_number().powf(7.0 / 6.0) * z.powf(11.0 / 6.0)
    }

    /// Long-term (turbulence-broadened) beam waist at distance `z > 0`.
    pub fn long_term_waist(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::domain(format!("turbulent path length must be positive, got {z}")));
        }
        let k = self.wave_number();
        let w_z = self.diffracted_beam_waist(z);
        let lambda_param = 2.0 * z / (k * w_z * w_z);
        let m = 35.05 * z / (k * self.inner_scale * self.inner_scale);
        let q = 0.74 * self.rytov_variance(z) * m.powf(1.0 / 6.0);
        Ok(w_z * (1.0 + 4.0 / 3.0 * q * lambda_param).sqrt())
    }

    /// Fraction of a Gaussian beam of waist `w` captured by the aperture.
    pub fn aperture_capture(&self, w: f64) -> Transmissivity {
        let ratio = self.aperture_radius / w;
        Transmissivity::saturating(-(-2.0 * ratio * ratio).exp_m1())
    }

    pub fn turbulence_transmissivity(&self, z: f64) -> Result<Transmissivity> {
        Ok(self.aperture_capture(self.long_term_waist(z)?))
    }

    /// Total FSO transmissivity: turbulence capture × receiver efficiency ×
    /// atmospheric extinction.
    pub fn fso_transmissivity(&self, z: f64, h0: f64) -> Result<Transmissivity> {
        let lt = self.turbulence_transmissivity(z)?;
        let atm = self.atmospheric_transmissivity(z, h0)?;
        Ok(Transmissivity::saturating(lt.value() * self.receiver_efficiency * atm.value()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_params() -> FsoParams {
        FsoParams::default()
    }

    #[test]
    fn fiber_matches_exponential_construction() {
        let eta = fiber_transmissivity(1.0, -(0.7f64).ln()).unwrap();
        assert!((eta.value() - 0.7).abs() < 1e-12);
        assert_eq!(fiber_transmissivity(3.3, 0.0).unwrap().value(), 1.0);
    }

    #[test]
    fn fiber_db_oracle() {
        // 0.15 dB/km over 20 km is a 3 dB loss.
        let rate = db_per_km_to_rate(0.15).unwrap();
        assert!((rate - 0.0345388).abs() < 1e-7);
        let eta = fiber_transmissivity(rate, 20.0).unwrap().value();
        let oracle = 10f64.powf(-0.15 * 20.0 / 10.0);
        assert!((eta - oracle).abs() < 1e-12);
        assert!((eta - 0.50119).abs() < 1e-4);
    }

    #[test]
    fn db_conversion() {
        assert_eq!(db_per_km_to_rate(0.0).unwrap(), 0.0);
        assert!((db_per_km_to_rate(10.0).unwrap() - 10f64.ln()).abs() < 1e-15);
        assert!(db_per_km_to_rate(-1.0).is_err());
    }

    #[test]
    fn negative_inputs_rejected() {
        assert!(fiber_transmissivity(-0.1, 1.0).is_err());
        assert!(fiber_transmissivity(0.1, -1.0).is_err());
        assert!(table_params().atmospheric_transmissivity(-1.0, 0.0).is_err());
        assert!(table_params().turbulence_transmissivity(0.0).is_err());
        assert!(Transmissivity::new(1.01).is_err());
    }

    #[test]
    fn atmospheric_extinction() {
        let p = table_params();
        assert_eq!(p.atmospheric_transmissivity(0.0, 0.0).unwrap().value(), 1.0);
        let eta = p.atmospheric_transmissivity(1000.0, 0.0).unwrap().value();
        assert!((eta - (-0.005f64).exp()).abs() < 1e-15);
        assert!((eta - 0.99501).abs() < 1e-5);
        let high = p.atmospheric_transmissivity(1e6, 1e6).unwrap().value();
        assert!(high > 1.0 - 1e-12);
    }

    #[test]
    fn beam_waist() {
        let p = table_params();
        assert_eq!(p.diffracted_beam_waist(0.0), p.initial_waist);
        let z_r = p.rayleigh_length();
        assert!((z_r - 1.5708e5).abs() < 1.0);
        assert!((p.diffracted_beam_waist(z_r) - 0.2 * 2f64.sqrt()).abs() < 1e-12);
        // Independent evaluation at 500 km.
        let z = 500e3;
        let z_r_oracle = std::f64::consts::PI * 0.2 * 0.2 / 800e-9;
        let oracle = (0.04 * (1.0 + (z / z_r_oracle) * (z / z_r_oracle))).sqrt();
        assert!((p.diffracted_beam_waist(z) - oracle).abs() < 1e-12);
    }

    #[test]
    fn infinite_curvature_is_the_large_radius_limit() {
        let p = table_params();
        let finite = FsoParams {
            initial_curvature: Curvature::Finite(1e12),
            ..p
        };
        for z in [1.0, 1e3, 5e4, 5e5, 2e6] {
            let a = p.diffracted_beam_waist(z);
            let b = finite.diffracted_beam_waist(z);
            assert!(((a - b) / a).abs() < 1e-6, "z={z}");
        }
    }

    #[test]
    fn rytov_scaling() {
        let p = table_params();
        assert_eq!(p.rytov_variance(0.0), 0.0);
        let k = 2.0 * std::f64::consts::PI / 8e-7;
        let oracle = 2.25 * 1e-15 * k.powf(7.0 / 6.0) * 1000f64.powf(11.0 / 6.0);
        let s = p.rytov_variance(1000.0);
        assert!(((s - oracle) / oracle).abs() < 1e-12);
        let ratio = p.rytov_variance(2000.0) / s;
        assert!((ratio - 2f64.powf(11.0 / 6.0)).abs() < 1e-9);
    }

    #[test]
    fn turbulence_short_path_is_lossless() {
        let p = table_params();
        let eta = p.turbulence_transmissivity(100.0).unwrap().value();
        assert!(eta > 1.0 - 1e-12);
    }

    #[test]
    fn turbulence_step_by_step_oracle() {
        let p = table_params();
        let z: f64 = 500e3;
        let k = 2.0 * std::f64::consts::PI / 800e-9;
        let z_r = std::f64::consts::PI * 0.04 / 800e-9;
        let w_z = 0.2 * (1.0 + (z / z_r).powi(2)).sqrt();
        let sigma2 = 2.25 * 1e-15 * k.powf(7.0 / 6.0) * z.powf(11.0 / 6.0);
        let m = 35.05 * z / (k * 1e-6);
        let q = 0.74 * sigma2 * m.powf(1.0 / 6.0);
        let lam = 2.0 * z / (k * w_z * w_z);
        let w_lt = w_z * (1.0 + 4.0 / 3.0 * q * lam).sqrt();
        let oracle = 1.0 - (-2.0 * 25.0 / (w_lt * w_lt)).exp();
        let eta = p.turbulence_transmissivity(z).unwrap().value();
        assert!(((eta - oracle) / oracle).abs() < 1e-9, "{eta} vs {oracle}");
    }

    #[test]
    fn capture_decreases_with_waist() {
        let p = table_params();
        let mut last = 2.0;
        for i in 1..200 {
            let eta = p.aperture_capture(0.5 * i as f64).value();
            assert!(eta < last || eta == 1.0);
            last = eta;
        }
    }

    #[test]
    fn fso_product() {
        let p = table_params();
        let z = 50e3;
        let lt = p.turbulence_transmissivity(z).unwrap().value();
        let atm = (-5e-6 * z).exp();
        let eta = p.fso_transmissivity(z, 0.0).unwrap().value();
        assert!((eta - lt * atm).abs() < 1e-15);

        let blind = FsoParams {
            receiver_efficiency: 0.0,
            ..p
        };
        assert_eq!(blind.fso_transmissivity(z, 0.0).unwrap().value(), 0.0);

        let short = p.fso_transmissivity(10.0, 0.0).unwrap().value();
        let atm_short = p.atmospheric_transmissivity(10.0, 0.0).unwrap().value();
        assert!((short - atm_short).abs() < 1e-12);
    }

    #[test]
    fn fso_non_increasing_on_grid() {
        let p = table_params();
        for h0 in [0.0, 20e3, 50e3, 500e3] {
            let mut last = 1.0;
            for i in 1..=400 {
                let z = 2500.0 * i as f64;
                let eta = p.fso_transmissivity(z, h0).unwrap().value();
                assert!(eta <= last + 1e-15, "h0={h0} z={z}");
                last = eta;
            }
        }
    }

    #[test]
    fn params_serde_uses_symbol_names() {
        let json = r#"{"a_R":5,"w0":0.2,"lambda":8e-7,"R0":"inf","alpha0":5e-6,"l0":0.001,"eta_eff":1}"#;
        let p: FsoParams = serde_json::from_str(json).unwrap();
        assert_eq!(p, FsoParams::default());
        let back = serde_json::to_string(&p).unwrap();
        assert!(back.contains("\"R0\":\"inf\""));
        let finite: FsoParams = serde_json::from_str(&json.replace("\"inf\"", "1200.5")).unwrap();
        assert_eq!(finite.initial_curvature, Curvature::Finite(1200.5));
    }

    proptest! {
        #[test]
        fn outputs_are_transmissivities(
            a_r in 0.01f64..10.0,
            w0 in 0.01f64..1.0,
            lambda in 4e-7f64..2e-6,
            alpha0 in 0.0f64..1e-4,
            l0 in 1e-4f64..1e-2,
            cn2 in 0.0f64..1e-13,
            eff in 0.0f64..=1.0,
            z in 1.0f64..5e6,
            h0 in 0.0f64..1e6,
            len_km in 0.0f64..1e4,
            att in 0.0f64..1.0,
        ) {
            let p = FsoParams {
                aperture_radius: a_r,
                initial_waist: w0,
                wavelength: lambda,
                initial_curvature: Curvature::Infinite,
                sea_level_extinction: alpha0,
                inner_scale: l0,
                refractive_structure: cn2,
                receiver_efficiency: eff,
            };
            for eta in [
                p.fso_transmissivity(z, h0).unwrap(),
                p.turbulence_transmissivity(z).unwrap(),
                p.atmospheric_transmissivity(z, h0).unwrap(),
                fiber_transmissivity(att, len_km).unwrap(),
            ] {
                prop_assert!((0.0..=1.0).contains(&eta.value()));
            }
        }

        #[test]
        fn fiber_is_multiplicative(att in 0.0f64..2.0, l1 in 0.0f64..50.0, l2 in 0.0f64..50.0) {
            let whole = fiber_transmissivity(att, l1 + l2).unwrap().value();
            let parts = fiber_transmissivity(att, l1).unwrap().value() * fiber_transmissivity(att, l2).unwrap().value();
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300) + 1e-300);
            if att > 0.0 && l2 > 1e-6 {
                prop_assert!(whole < fiber_transmissivity(att, l1).unwrap().value());
            }
        }
    }
}
