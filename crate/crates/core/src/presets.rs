//! Calibrated red- and blue-detuned scenarios on top of [`default_params`].
//!
//! The bare magnon frequency and the drive-line attenuation are not known
//! independently, so the red scenario fits both to two observed dressed
//! magnon frequencies: 7.658 GHz at 4.7 dBm (lower branch) and 7.640 GHz at
//! 29.7 dBm (upper branch), with the drive at 7.645 GHz. The blue scenario
//! reuses that attenuation, drives at 7.660 GHz and places the dressed
//! magnon at 7.645 GHz at 23.7 dBm.

use crate::error::Result;
use crate::params::{default_params, hz, DriveCondition, SystemParams};
use crate::steady_state::{
    calibrate_bare_frequency, calibrate_two_point, BranchHint, Observation, SteadyOptions,
};

/// Parameters plus a drive at the scenario's reference power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub drive: DriveCondition,
    /// Swept power range, dBm.
    pub power_range: (f64, f64),
}

pub const RED_DRIVE_HZ: f64 = 7.645e9;
pub const BLUE_DRIVE_HZ: f64 = 7.660e9;

pub fn red_detuned() -> Result<Scenario> {
    let params = default_params();
    let drive = DriveCondition::new(hz(RED_DRIVE_HZ), 29.7);
    let low = Observation {
        power_dbm: 4.7,
        omega_m: hz(7.658e9),
        hint: Some(BranchHint::Lower),
    };
    let high = Observation {
        power_dbm: 29.7,
        omega_m: hz(7.640e9),
        hint: Some(BranchHint::Upper),
    };
    let (bare, att) = calibrate_two_point(&params, &drive, &low, &high, SteadyOptions::default())?;
    Ok(Scenario {
        params: params.with_omega_m_bare(bare),
        drive: drive.with_attenuation(att),
        power_range: (4.7, 29.7),
    })
}

pub fn blue_detuned() -> Result<Scenario> {
    let red = red_detuned()?;
    let drive = DriveCondition::new(hz(BLUE_DRIVE_HZ), 23.7)
        .with_attenuation(red.drive.attenuation_db);
    let bare = calibrate_bare_frequency(
        &red.params,
        &drive,
        hz(7.645e9),
        None,
        SteadyOptions::default(),
    )?;
    Ok(Scenario {
        params: red.params.with_omega_m_bare(bare),
        drive,
        power_range: (4.7, 23.7),
    })
}
