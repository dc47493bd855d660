//! Steady states, bistability and linear response of a driven
//! cavity-magnon-phonon system with magnon self-Kerr and magnon-phonon
//! cross-Kerr nonlinearities.
//!
//! All quantities are angular (rad/s) internally; see [`params`] for the
//! conversions from laboratory units.

pub mod dynamics;
pub mod error;
pub mod params;
pub mod presets;
pub mod response;
pub mod steady_state;
pub mod sweep;

pub use error::{Error, Result};
pub use params::{DriveCondition, SystemParams};
pub use steady_state::{SteadyBranch, SteadyOptions};
