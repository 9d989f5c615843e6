//! Physical constants and conversions between photon-normalized noise,
//! noise temperature and power spectral density.
//!
//! Constants are the exact SI (CODATA 2018) values.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Result};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

/// Ratio `k_B / e` in V/K (about 86.17 µV/K).
pub fn boltzmann_over_charge() -> f64 {
    BOLTZMANN / ELECTRON_CHARGE
}

/// Photon-normalized noise power spectral density, `N = P / (h f)`.
///
/// Any physical single-mode input satisfies `N >= 1/2`; excess-noise
/// quantities only need to be non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Quanta(f64);

impl Quanta {
    /// The vacuum level, half a quantum.
    pub const VACUUM: Quanta = Quanta(0.5);
    /// The standard quantum limit on total measured noise.
    pub const SQL: Quanta = Quanta(1.0);

    pub fn new(value: f64) -> Result<Self> {
        ensure_non_negative("quanta", value).map(Quanta)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A strictly positive frequency in hertz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Frequency(f64);

impl Frequency {
    pub fn new(hertz: f64) -> Result<Self> {
        ensure_positive("frequency", hertz).map(Frequency)
    }

    pub fn ghz(value: f64) -> Result<Self> {
        Self::new(value * 1e9)
    }

    pub fn hertz(self) -> f64 {
        self.0
    }

    /// Photon energy `h f` in joules.
    pub fn photon_energy(self) -> f64 {
        PLANCK * self.0
    }
}

impl TryFrom<f64> for Frequency {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Frequency::new(value)
    }
}

impl From<Frequency> for f64 {
    fn from(f: Frequency) -> f64 {
        f.0
    }
}

/// Converts a power spectral density in W/Hz to quanta at `f`.
pub fn quanta_from_psd(psd_w_per_hz: f64, f: Frequency) -> Result<Quanta> {
    ensure_non_negative("psd", psd_w_per_hz)?;
    Quanta::new(psd_w_per_hz / f.photon_energy())
}

/// Inverse of [`quanta_from_psd`], in W/Hz.
pub fn psd_from_quanta(n: Quanta, f: Frequency) -> f64 {
    n.0 * f.photon_energy()
}

/// Noise temperature `T_N = P / k_B` of `n` quanta at `f`, in kelvin.
pub fn noise_temperature(n: Quanta, f: Frequency) -> f64 {
    n.0 * f.photon_energy() / BOLTZMANN
}

/// Quanta carried by a classical noise temperature, `k_B T / (h f)`.
pub fn quanta_from_temperature(kelvin: f64, f: Frequency) -> Result<Quanta> {
    ensure_non_negative("temperature", kelvin)?;
    Quanta::new(BOLTZMANN * kelvin / f.photon_energy())
}

/// `10·log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `10^(db/10)`.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
