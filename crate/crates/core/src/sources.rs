//! Calibrated noise sources: a matched resistor at temperature `T`
//! (variable temperature stage) and a shot-noise tunnel junction biased at
//! voltage `V`, plus the junction's dc bias network.
//!
//! Both emit into a matched line; junction/line mismatch is ignored.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::quanta::{Frequency, Quanta, BOLTZMANN, ELECTRON_CHARGE};

const SERIES_CUTOFF: f64 = 1e-4;
const SATURATION_CUTOFF: f64 = 20.0;
const DERIVATIVE_SERIES_CUTOFF: f64 = 1e-2;

/// Hyperbolic cotangent with a Laurent expansion near zero and saturation
/// to `±1` for `|x| > 20`.
pub fn coth(x: f64) -> f64 {
    let ax = x.abs();
    if ax > SATURATION_CUTOFF {
        x.signum()
    } else if ax < SERIES_CUTOFF {
        1.0 / x + x / 3.0 - x * x * x / 45.0
    } else {
        1.0 / x.tanh()
    }
}

/// `u·coth(u/s)` for `s >= 0`, finite everywhere including `u = 0` (limit `s`)
/// and `s = 0` (limit `|u|`). Even in `u`.
pub(crate) fn xcoth(u: f64, s: f64) -> f64 {
    let u = u.abs();
    if s == 0.0 {
        return u;
    }
    let y = u / s;
    if y < SERIES_CUTOFF {
        let y2 = y * y;
        s * (1.0 + y2 / 3.0 - y2 * y2 / 45.0)
    } else if y > SATURATION_CUTOFF {
        u
    } else {
        u / y.tanh()
    }
}

/// `∂/∂u [u·coth(u/s)]`.
fn xcoth_du(u: f64, s: f64) -> f64 {
    if s == 0.0 {
        return if u == 0.0 { 0.0 } else { u.signum() };
    }
    let y = u / s;
    let ay = y.abs();
    if ay < DERIVATIVE_SERIES_CUTOFF {
        let y2 = y * y;
        y * (2.0 / 3.0 - 4.0 * y2 / 45.0 + 12.0 * y2 * y2 / 945.0)
    } else if ay > SATURATION_CUTOFF {
        y.signum()
    } else {
        let sh = y.sinh();
        1.0 / y.tanh() - y / (sh * sh)
    }
}

/// `∂/∂s [u·coth(u/s)]`.
fn xcoth_ds(u: f64, s: f64) -> f64 {
    if s == 0.0 {
        return if u == 0.0 { 1.0 } else { 0.0 };
    }
    let y = (u / s).abs();
    if y < DERIVATIVE_SERIES_CUTOFF {
        let y2 = y * y;
        1.0 - y2 / 3.0 + y2 * y2 / 15.0 - 2.0 * y2 * y2 * y2 / 189.0
    } else if y > SATURATION_CUTOFF {
        4.0 * y * y * (-2.0 * y).exp()
    } else {
        let sh = y.sinh();
        y * y / (sh * sh)
    }
}

/// Quantum Johnson noise of a matched resistor, `(1/2)·coth(h f / 2 k_B T)`.
///
/// Exactly one half at `T = 0`.
pub fn johnson_noise(temperature: f64, f: Frequency) -> Result<Quanta> {
    ensure_non_negative("temperature", temperature)?;
    if temperature == 0.0 {
        return Ok(Quanta::VACUUM);
    }
    let x = f.photon_energy() / (2.0 * BOLTZMANN * temperature);
    Quanta::new(0.5 * coth(x))
}

/// Shot noise emitted by a tunnel junction biased at `voltage` with
/// electrons at `electron_temperature`, in quanta at `f`.
///
/// Reduces to [`johnson_noise`] at zero bias and to `e|V|/(2 h f)` at large
/// bias. At `T_e = 0` the piecewise closed form `max(1/2, e|V|/2hf)` is used.
pub fn sntj_noise(voltage: f64, electron_temperature: f64, f: Frequency) -> Result<Quanta> {
    ensure_finite("voltage", voltage)?;
    ensure_non_negative("electron temperature", electron_temperature)?;
    Quanta::new(sntj_quanta(voltage, electron_temperature, f))
}

pub(crate) fn sntj_quanta(voltage: f64, electron_temperature: f64, f: Frequency) -> f64 {
    let hf = f.photon_energy();
    let a = ELECTRON_CHARGE * voltage / hf;
    if electron_temperature == 0.0 {
        return (0.5 * a.abs()).max(0.5);
    }
    let two_tau = 2.0 * BOLTZMANN * electron_temperature / hf;
    0.25 * (xcoth(a + 1.0, two_tau) + xcoth(a - 1.0, two_tau))
}

/// Partial derivatives of [`sntj_noise`] with respect to bias voltage (per
/// volt) and electron temperature (per kelvin).
pub fn sntj_noise_gradient(voltage: f64, electron_temperature: f64, f: Frequency) -> (f64, f64) {
    let hf = f.photon_energy();
    let a = ELECTRON_CHARGE * voltage / hf;
    let two_tau = 2.0 * BOLTZMANN * electron_temperature / hf;
    let d_dv = 0.25 * (ELECTRON_CHARGE / hf) * (xcoth_du(a + 1.0, two_tau) + xcoth_du(a - 1.0, two_tau));
    let d_dt = 0.5 * (BOLTZMANN / hf) * (xcoth_ds(a + 1.0, two_tau) + xcoth_ds(a - 1.0, two_tau));
    (d_dv, d_dt)
}

/// Regimes where the junction formula collapses to a simpler closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SntjLimit {
    /// `e|V|` negligible: Johnson noise of the electrons.
    ZeroBias,
    /// `h f` negligible: `(eV/2hf)·coth(eV/2k_BT_e)`.
    ZeroFrequency,
    /// `k_B T_e` negligible: `max(1/2, e|V|/2hf)`.
    ZeroTemperature,
}

impl SntjLimit {
    pub const ALL: [SntjLimit; 3] = [SntjLimit::ZeroBias, SntjLimit::ZeroFrequency, SntjLimit::ZeroTemperature];
}

/// Evaluates one of the three limit forms of the junction noise.
///
/// The neglected energy scale must not exceed 10% of the retained scale
/// (the smaller of the two for the zero-bias and zero-temperature forms, the
/// larger for the zero-frequency form), otherwise a precondition error is
/// returned.
pub fn sntj_limit(voltage: f64, electron_temperature: f64, f: Frequency, case: SntjLimit) -> Result<Quanta> {
    ensure_finite("voltage", voltage)?;
    ensure_non_negative("electron temperature", electron_temperature)?;
    let hf = f.photon_energy();
    let ev = ELECTRON_CHARGE * voltage.abs();
    let kt = BOLTZMANN * electron_temperature;
    let (neglected, retained) = match case {
        SntjLimit::ZeroBias => (ev, hf.min(kt)),
        SntjLimit::ZeroFrequency => (hf, ev.max(kt)),
        SntjLimit::ZeroTemperature => (kt, hf.min(ev)),
    };
    if neglected > 0.1 * retained {
        return Err(Error::Precondition(format!(
            "{case:?} limit needs the neglected scale ({neglected:.3e} J) below 10% of the retained scales ({retained:.3e} J)"
        )));
    }
    let value = match case {
        SntjLimit::ZeroBias => return johnson_noise(electron_temperature, f),
        SntjLimit::ZeroFrequency => 0.5 * xcoth(ev / hf, 2.0 * kt / hf),
        SntjLimit::ZeroTemperature => (0.5 * ev / hf).max(0.5),
    };
    Quanta::new(value)
}

/// Classical power spectral density requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsdRequest {
    /// `k_B T`, W/Hz, delivered to a matched load.
    JohnsonPower { temperature: f64 },
    /// `4 k_B T R`, V²/Hz, open-circuit.
    JohnsonVoltage { temperature: f64, resistance: f64 },
    /// `2 e |I|`, A²/Hz.
    ShotCurrent { current: f64 },
    /// `e |V| / 2`, W/Hz, delivered to a matched load.
    ShotPower { voltage: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdUnit {
    WattPerHertz,
    VoltSquaredPerHertz,
    AmpSquaredPerHertz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub value: f64,
    pub unit: PsdUnit,
}

pub fn psd(request: PsdRequest) -> Result<Psd> {
    let (value, unit) = match request {
        PsdRequest::JohnsonPower { temperature } => {
            ensure_non_negative("temperature", temperature)?;
            (BOLTZMANN * temperature, PsdUnit::WattPerHertz)
        }
        PsdRequest::JohnsonVoltage { temperature, resistance } => {
            ensure_non_negative("temperature", temperature)?;
            ensure_positive("resistance", resistance)?;
            (4.0 * BOLTZMANN * temperature * resistance, PsdUnit::VoltSquaredPerHertz)
        }
        PsdRequest::ShotCurrent { current } => {
            ensure_finite("current", current)?;
            (2.0 * ELECTRON_CHARGE * current.abs(), PsdUnit::AmpSquaredPerHertz)
        }
        PsdRequest::ShotPower { voltage } => {
            ensure_finite("voltage", voltage)?;
            (0.5 * ELECTRON_CHARGE * voltage.abs(), PsdUnit::WattPerHertz)
        }
    };
    Ok(Psd { value, unit })
}

/// How a bias voltage is quoted as an equivalent temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureConvention {
    /// `e|V| / k_B` (1 mV ↔ 11.6 K).
    #[default]
    EOverKb,
    /// `e|V| / 2k_B`, from equating `e|V|/2` with `k_B T` (1 mV ↔ 5.8 K).
    EOverTwoKb,
}

pub fn voltage_temperature_equivalent(voltage: f64, convention: TemperatureConvention) -> Result<f64> {
    ensure_finite("voltage", voltage)?;
    let t = ELECTRON_CHARGE * voltage.abs() / BOLTZMANN;
    Ok(match convention {
        TemperatureConvention::EOverKb => t,
        TemperatureConvention::EOverTwoKb => 0.5 * t,
    })
}

/// Matched resistor on a variable temperature stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JohnsonSource {
    pub temperature: f64,
    pub resistance: f64,
}

impl JohnsonSource {
    pub fn new(temperature: f64, resistance: f64) -> Result<Self> {
        ensure_non_negative("temperature", temperature)?;
        ensure_positive("resistance", resistance)?;
        Ok(Self { temperature, resistance })
    }

    pub fn noise(&self, f: Frequency) -> Result<Quanta> {
        johnson_noise(self.temperature, f)
    }

    pub fn voltage_psd(&self) -> Result<Psd> {
        psd(PsdRequest::JohnsonVoltage {
            temperature: self.temperature,
            resistance: self.resistance,
        })
    }
}

/// Shot-noise tunnel junction at a given bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SntjSource {
    pub bias_voltage: f64,
    pub electron_temperature: f64,
    pub dc_impedance: f64,
}

impl SntjSource {
    pub fn new(bias_voltage: f64, electron_temperature: f64, dc_impedance: f64) -> Result<Self> {
        ensure_finite("bias voltage", bias_voltage)?;
        ensure_non_negative("electron temperature", electron_temperature)?;
        ensure_positive("dc impedance", dc_impedance)?;
        Ok(Self {
            bias_voltage,
            electron_temperature,
            dc_impedance,
        })
    }

    pub fn noise(&self, f: Frequency) -> Result<Quanta> {
        sntj_noise(self.bias_voltage, self.electron_temperature, f)
    }

    pub fn with_bias(self, bias_voltage: f64) -> Self {
        Self { bias_voltage, ..self }
    }

    /// Classical current noise `2e|I|` with `I = V / Z`.
    pub fn current_psd(&self) -> Result<Psd> {
        psd(PsdRequest::ShotCurrent {
            current: self.bias_voltage / self.dc_impedance,
        })
    }
}

/// What a calibration sweep varies: the stage temperature of a resistor or
/// the bias of a tunnel junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceModel {
    /// Setpoints are temperatures in kelvin.
    Vts,
    /// Setpoints are bias voltages in volts, offset by `v_offset`.
    Sntj {
        electron_temperature: f64,
        #[serde(default)]
        v_offset: f64,
    },
}

impl SourceModel {
    pub fn sntj(electron_temperature: f64) -> Self {
        SourceModel::Sntj {
            electron_temperature,
            v_offset: 0.0,
        }
    }

    pub fn kind(&self) -> SourceKind {
        match self {
            SourceModel::Vts => SourceKind::Vts,
            SourceModel::Sntj { .. } => SourceKind::Sntj,
        }
    }

    /// Emitted quanta at `f` for one setpoint.
    pub fn emitted(&self, setpoint: f64, f: Frequency) -> Result<Quanta> {
        match *self {
            SourceModel::Vts => johnson_noise(setpoint, f),
            SourceModel::Sntj {
                electron_temperature,
                v_offset,
            } => sntj_noise(setpoint - v_offset, electron_temperature, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Sntj,
    Vts,
}

/// Resistive divider that biases the junction from a voltage generator,
/// with a voltage tap read through an amplifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasNetwork {
    pub series_resistance: f64,
    pub junction_impedance: f64,
    pub amplifier_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub junction_voltage: f64,
    pub division_ratio: f64,
}

impl Default for BiasNetwork {
    fn default() -> Self {
        Self {
            series_resistance: 100e3,
            junction_impedance: 50.0,
            amplifier_gain: 100.0,
        }
    }
}

impl BiasNetwork {
    pub fn new(series_resistance: f64, junction_impedance: f64, amplifier_gain: f64) -> Result<Self> {
        ensure_non_negative("series resistance", series_resistance)?;
        ensure_positive("junction impedance", junction_impedance)?;
        ensure_positive("tap amplifier gain", amplifier_gain)?;
        Ok(Self {
            series_resistance,
            junction_impedance,
            amplifier_gain,
        })
    }

    pub fn division_ratio(&self) -> f64 {
        self.series_resistance / self.junction_impedance + 1.0
    }

    pub fn solve(&self, awg_voltage: f64) -> Result<BiasPoint> {
        ensure_finite("generator voltage", awg_voltage)?;
        let z = self.junction_impedance;
        Ok(BiasPoint {
            junction_voltage: awg_voltage * z / (z + self.series_resistance),
            division_ratio: self.division_ratio(),
        })
    }

    /// Junction voltage recovered from the amplified tap reading.
    pub fn junction_voltage_from_tap(&self, reading: f64) -> f64 {
        reading / self.amplifier_gain
    }

    /// Junction impedance from a known injected current and the tap reading.
    pub fn impedance_from_tap(&self, current: f64, reading: f64) -> Result<f64> {
        ensure_finite("current", current)?;
        if current == 0.0 {
            return Err(Error::InvalidInput {
                name: "current",
                value: current,
                reason: "must be non-zero",
            });
        }
        Ok(self.junction_voltage_from_tap(reading) / current)
    }
}
