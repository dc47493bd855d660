//! Physical parameters and unit conversions.
//!
//! Every frequency, linewidth, coupling and Kerr coefficient is stored as an
//! angular quantity in rad/s. Laboratory units (Hz, dBm) only appear at the
//! boundary, through [`hz`], [`to_hz`], [`dbm_to_watts`] and friends.

use std::f64::consts::TAU;

use crate::error::{invalid, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Converts a linear frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz(nu: f64) -> f64 {
    TAU * nu
}

/// Converts an angular frequency in rad/s to linear frequency in Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// `10^(dBm/10)` milliwatts, in watts.
pub fn dbm_to_watts(power_dbm: f64) -> f64 {
    10f64.powf(power_dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(power_w: f64) -> f64 {
    10.0 * (power_w * 1e3).log10()
}

/// Parameters of the three-mode system, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega_a: f64,
    /// Total cavity linewidth (FWHM).
    pub kappa_a: f64,
    /// Cavity decay through the drive port.
    pub kappa_1: f64,
    /// Cavity decay through the probe port.
    pub kappa_2: f64,
    /// Magnon frequency at zero drive power.
    pub omega_m_bare: f64,
    pub kappa_m: f64,
    pub omega_b: f64,
    pub kappa_b: f64,
    pub g_ma: f64,
    /// Bare magnomechanical dispersive coupling.
    pub g_mb: f64,
    /// Magnon self-Kerr coefficient, rad/s per excitation.
    pub k_m: f64,
    /// Magnon-phonon cross-Kerr coefficient, rad/s per excitation.
    pub k_cross: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_a", self.omega_a),
            ("kappa_a", self.kappa_a),
            ("kappa_1", self.kappa_1),
            ("kappa_2", self.kappa_2),
            ("omega_m_bare", self.omega_m_bare),
            ("kappa_m", self.kappa_m),
            ("omega_b", self.omega_b),
            ("kappa_b", self.kappa_b),
            ("g_ma", self.g_ma),
            ("g_mb", self.g_mb),
            ("k_m", self.k_m),
            ("k_cross", self.k_cross),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(invalid(name, format!("must be finite, got {value}")));
            }
        }
        for (name, value) in [
            ("kappa_a", self.kappa_a),
            ("kappa_m", self.kappa_m),
            ("kappa_b", self.kappa_b),
        ] {
            if value <= 0.0 {
                return Err(invalid(name, format!("must be positive, got {value}")));
            }
        }
        for (name, value) in [("kappa_1", self.kappa_1), ("kappa_2", self.kappa_2)] {
            if value < 0.0 {
                return Err(invalid(name, format!("must be non-negative, got {value}")));
            }
        }
        if self.kappa_1 + self.kappa_2 > self.kappa_a * (1.0 + 1e-12) {
            return Err(invalid(
                "kappa_1",
                "port decay rates kappa_1 + kappa_2 exceed the total linewidth kappa_a",
            ));
        }
        Ok(())
    }

    pub fn detunings(&self, drive: &DriveCondition) -> Detunings {
        Detunings {
            delta_a: self.omega_a - drive.omega_d,
            delta_m: self.omega_m_bare - drive.omega_d,
        }
    }

    pub fn with_omega_m_bare(mut self, omega_m_bare: f64) -> Self {
        self.omega_m_bare = omega_m_bare;
        self
    }
}

/// Reference parameter set for a YIG sphere in a 7.653 GHz cavity with an
/// 11.0308 MHz mechanical mode.
///
/// Only dressed magnon frequencies are known for this device, so
/// `omega_m_bare` is a placeholder equal to `omega_a`; set it with
/// [`crate::steady_state::calibrate_bare_frequency`].
pub fn default_params() -> SystemParams {
    SystemParams {
        omega_a: hz(7.653e9),
        kappa_a: hz(2.78e6),
        kappa_1: hz(0.22e6),
        kappa_2: hz(1.05e6),
        omega_m_bare: hz(7.653e9),
        kappa_m: hz(2.2e6),
        omega_b: hz(11.0308e6),
        kappa_b: hz(550.0),
        g_ma: hz(7.37e6),
        g_mb: hz(1.22e-3),
        k_m: hz(-6.5e-9),
        k_cross: hz(-5.4e-12),
    }
}

/// A coherent microwave drive loaded through port 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCondition {
    pub omega_d: f64,
    /// Source power.
    pub power_dbm: f64,
    /// Loss between source and cavity port. Calibrated values may be negative,
    /// which then stands for a net coupling gain relative to the nominal port.
    pub attenuation_db: f64,
}

impl DriveCondition {
    pub fn new(omega_d: f64, power_dbm: f64) -> Self {
        Self {
            omega_d,
            power_dbm,
            attenuation_db: 0.0,
        }
    }

    pub fn with_power(mut self, power_dbm: f64) -> Self {
        self.power_dbm = power_dbm;
        self
    }

    pub fn with_attenuation(mut self, attenuation_db: f64) -> Self {
        self.attenuation_db = attenuation_db;
        self
    }

    /// Power reaching the cavity port, in watts.
    pub fn effective_power_w(&self) -> f64 {
        dbm_to_watts(self.power_dbm - self.attenuation_db)
    }

    pub fn amplitude(&self) -> Result<f64> {
        drive_amplitude(self)
    }
}

/// `ε_d = sqrt(P_eff / (ħ ω_d))` in s^(-1/2).
pub fn drive_amplitude(drive: &DriveCondition) -> Result<f64> {
    if !(drive.omega_d > 0.0) || !drive.omega_d.is_finite() {
        return Err(invalid("omega_d", format!("must be positive, got {}", drive.omega_d)));
    }
    if !drive.power_dbm.is_finite() && drive.power_dbm != f64::NEG_INFINITY {
        return Err(invalid("power_dbm", format!("must be finite, got {}", drive.power_dbm)));
    }
    if !drive.attenuation_db.is_finite() {
        return Err(invalid(
            "attenuation_db",
            format!("must be finite, got {}", drive.attenuation_db),
        ));
    }
    Ok((drive.effective_power_w() / (HBAR * drive.omega_d)).sqrt())
}

/// Cavity and bare-magnon detunings from the drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings {
    /// `omega_a - omega_d`
    pub delta_a: f64,
    /// `omega_m_bare - omega_d`, before any Kerr shift.
    pub delta_m: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dbm_reference_points() {
        assert_relative_eq!(dbm_to_watts(0.0), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(29.7), 0.9333, max_relative = 1e-4);
        assert_relative_eq!(dbm_to_watts(4.7), 2.951e-3, max_relative = 1e-4);
    }

    #[test]
    fn drive_amplitude_at_full_power() {
        let drive = DriveCondition::new(hz(7.645e9), 29.7);
        let eps = drive_amplitude(&drive).unwrap();
        assert_relative_eq!(eps, 4.29223251892632e11, max_relative = 1e-12);
        assert_relative_eq!(eps, 4.29e11, max_relative = 1e-3);
    }

    #[test]
    fn zero_power_gives_zero_amplitude() {
        let drive = DriveCondition::new(hz(7.645e9), f64::NEG_INFINITY);
        assert_eq!(drive_amplitude(&drive).unwrap(), 0.0);
    }

    #[test]
    fn doubling_power_scales_amplitude_by_sqrt2() {
        let d = DriveCondition::new(hz(7.645e9), 10.0);
        let doubled = d.with_power(10.0 + watts_to_dbm(2e-3));
        let ratio = drive_amplitude(&doubled).unwrap() / drive_amplitude(&d).unwrap();
        assert_relative_eq!(ratio, 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_drive_frequency() {
        for omega_d in [0.0, -1.0, f64::NAN] {
            let err = drive_amplitude(&DriveCondition::new(omega_d, 0.0)).unwrap_err();
            assert!(matches!(err, crate::Error::InvalidParameter { name: "omega_d", .. }));
        }
    }

    #[test]
    fn default_params_values() {
        let p = default_params();
        assert_relative_eq!(to_hz(p.kappa_b), 550.0, max_relative = 1e-15);
        assert_relative_eq!(to_hz(p.k_cross), -5.4e-12, max_relative = 1e-15);
        assert_relative_eq!(to_hz(p.g_mb), 1.22e-3, max_relative = 1e-15);
        assert_relative_eq!(to_hz(p.k_m), -6.5e-9, max_relative = 1e-15);
        assert_relative_eq!(to_hz(p.g_ma), 7.37e6, max_relative = 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_linewidths() {
        let mut p = default_params();
        p.kappa_b = 0.0;
        assert!(p.validate().is_err());
        let mut p = default_params();
        p.kappa_2 = p.kappa_a;
        assert!(p.validate().is_err());
        let mut p = default_params();
        p.g_ma = f64::INFINITY;
        assert!(p.validate().is_err());
    }

    #[test]
    fn detunings_are_plain_differences() {
        let p = default_params().with_omega_m_bare(hz(7.658e9));
        let d = DriveCondition::new(hz(7.645e9), 0.0);
        let det = p.detunings(&d);
        assert_eq!(det.delta_a, p.omega_a - d.omega_d);
        assert_eq!(det.delta_m, p.omega_m_bare - d.omega_d);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(x in -50.0f64..50.0) {
            let back = watts_to_dbm(dbm_to_watts(x));
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }

        #[test]
        fn amplitude_monotone(p in -40.0f64..40.0, dp in 0.01f64..10.0, att in 0.0f64..20.0) {
            let base = DriveCondition::new(hz(7.645e9), p).with_attenuation(att);
            let e0 = drive_amplitude(&base).unwrap();
            prop_assert!(drive_amplitude(&base.with_power(p + dp)).unwrap() > e0);
            prop_assert!(drive_amplitude(&base.with_attenuation(att + dp)).unwrap() < e0);
        }

        #[test]
        fn hz_conversion_is_exact_tau_scaling(nu in -1e10f64..1e10) {
            prop_assert_eq!(hz(nu), nu * TAU);
            prop_assert_eq!(to_hz(nu), nu / TAU);
        }
    }
}
