//! Parametric-amplifier models.
//!
//! Phase-insensitive amplifiers mix a signal and an idler input mode into the
//! signal output; phase-sensitive ones transform quadratures. Gain
//! compression is described by a sampled factor `λ(V)` relative to the
//! small-signal gain.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::quanta::{from_db, Frequency};
use crate::sources::{johnson_noise, sntj_quanta};

/// `G₁·N_in + (G₁−1)·N_inⁱ`.
pub fn pi_output_ideal(g1: f64, n_in: f64, n_in_i: f64) -> f64 {
    g1 * n_in + (g1 - 1.0) * n_in_i
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseInsensitiveParamp {
    /// Signal-to-signal gain `G₁`.
    pub gain_ss: f64,
    /// Idler-to-signal gain `G₁ⁱ`.
    pub gain_is: f64,
    pub excess_ss: f64,
    pub excess_is: f64,
    pub eta_s: f64,
    /// Idler-path efficiency; 0 means the idler input is filtered out.
    pub eta_i: f64,
    pub loss_temperature: f64,
}

impl PhaseInsensitiveParamp {
    pub fn ideal(g1: f64) -> Result<Self> {
        Self::new(g1, g1 - 1.0, 0.0, 0.0, 1.0, 1.0, 0.0)
    }

    pub fn new(
        gain_ss: f64,
        gain_is: f64,
        excess_ss: f64,
        excess_is: f64,
        eta_s: f64,
        eta_i: f64,
        loss_temperature: f64,
    ) -> Result<Self> {
        ensure_finite("signal gain", gain_ss)?;
        if gain_ss < 1.0 {
            return Err(Error::InvalidInput {
                name: "signal gain",
                value: gain_ss,
                reason: "must be at least 1",
            });
        }
        ensure_non_negative("idler gain", gain_is)?;
        ensure_non_negative("signal excess noise", excess_ss)?;
        ensure_non_negative("idler excess noise", excess_is)?;
        ensure_non_negative("loss temperature", loss_temperature)?;
        if !(eta_s > 0.0 && eta_s <= 1.0) {
            return Err(Error::InvalidInput {
                name: "signal efficiency",
                value: eta_s,
                reason: "must lie in (0, 1]",
            });
        }
        if !(0.0..=1.0).contains(&eta_i) {
            return Err(Error::InvalidInput {
                name: "idler efficiency",
                value: eta_i,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self {
            gain_ss,
            gain_is,
            excess_ss,
            excess_is,
            eta_s,
            eta_i,
            loss_temperature,
        })
    }

    /// Effective signal-to-signal gain `η_s·G₁`.
    pub fn effective_gain(&self) -> f64 {
        self.eta_s * self.gain_ss
    }

    /// Effective idler-to-signal gain `η_i·G₁ⁱ`.
    pub fn effective_idler_gain(&self) -> f64 {
        self.eta_i * self.gain_is
    }

    fn loss_noise(&self, f: Frequency) -> Result<f64> {
        Ok(johnson_noise(self.loss_temperature, f)?.value())
    }

    /// Effective signal-referred excess noise `Ñ₁,ex`. With a filtered idler
    /// (`η_i = 0`) the idler excess is referred through the raw idler gain.
    pub fn effective_excess(&self, f: Frequency) -> Result<f64> {
        let n_t = self.loss_noise(f)?;
        let g_s = self.effective_gain();
        let signal = ((1.0 - self.eta_s) * n_t + self.excess_ss) / self.eta_s;
        let idler = if self.eta_i == 0.0 {
            self.gain_is / g_s * self.excess_is
        } else {
            self.effective_idler_gain() / g_s * ((1.0 - self.eta_i) * n_t + self.excess_is) / self.eta_i
        };
        Ok(signal + idler)
    }

    /// Signal-frequency output for signal and idler inputs `n_in`, `n_in_i`.
    pub fn output(&self, n_in: f64, n_in_i: f64, f: Frequency) -> Result<f64> {
        ensure_non_negative("signal input", n_in)?;
        ensure_non_negative("idler input", n_in_i)?;
        let n_t = self.loss_noise(f)?;
        let signal = self.gain_ss * (self.eta_s * n_in + (1.0 - self.eta_s) * n_t + self.excess_ss);
        let idler = self.gain_is * (self.eta_i * n_in_i + (1.0 - self.eta_i) * n_t + self.excess_is);
        Ok(signal + idler)
    }
}

/// Non-ideal phase-insensitive output; see [`PhaseInsensitiveParamp::output`].
pub fn pi_output_nonideal(p: &PhaseInsensitiveParamp, n_in: f64, n_in_i: f64, f: Frequency) -> Result<f64> {
    p.output(n_in, n_in_i, f)
}

/// Range of excess noise recovered under the equal-gain assumption when
/// the true idler-to-signal gain ratio lies in `[lo, hi]`.
pub fn asymmetry_intercept_bounds(n_ex_tilde: f64, lo: f64, hi: f64) -> Result<[f64; 2]> {
    ensure_positive("lower gain ratio", lo)?;
    ensure_positive("upper gain ratio", hi)?;
    if lo > hi {
        return Err(Error::Precondition(format!("gain ratio range [{lo}, {hi}] is reversed")));
    }
    Ok([2.0 * n_ex_tilde / (1.0 + hi), 2.0 * n_ex_tilde / (1.0 + lo)])
}

/// `𝒢(α) = 4G·cos²α + sin²α/(4G)`.
pub fn ps_gain(g1: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    4.0 * g1 * c * c + s * s / (4.0 * g1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSensitiveParamp {
    pub gain: f64,
    pub pump_phase: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureVariances {
    pub amplified: f64,
    pub squeezed: f64,
}

impl PhaseSensitiveParamp {
    pub fn new(gain: f64, pump_phase: f64, eta_s: f64, eta_i: f64, excess: f64) -> Result<Self> {
        ensure_finite("gain", gain)?;
        if gain < 1.0 {
            return Err(Error::InvalidInput {
                name: "gain",
                value: gain,
                reason: "must be at least 1",
            });
        }
        ensure_finite("pump phase", pump_phase)?;
        for (name, eta) in [("signal efficiency", eta_s), ("idler efficiency", eta_i)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidInput {
                    name,
                    value: eta,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        ensure_non_negative("excess noise", excess)?;
        Ok(Self {
            gain,
            pump_phase,
            eta_s,
            eta_i,
            excess,
        })
    }

    pub fn ideal(gain: f64) -> Result<Self> {
        Self::new(gain, 0.0, 1.0, 1.0, 0.0)
    }

    fn sqrt_eta(&self) -> f64 {
        (self.eta_s * self.eta_i).sqrt()
    }

    /// Measurement angle relative to the amplified quadrature.
    pub fn alpha(&self, measurement_phase: f64) -> f64 {
        measurement_phase - self.pump_phase
    }

    /// Loss-degraded phase-sensitive gain `√(η_s η_i)·𝒢(α)`.
    pub fn effective_gain(&self, alpha: f64) -> f64 {
        self.sqrt_eta() * ps_gain(self.gain, alpha)
    }

    /// Input-referred excess `N₁,ex/√(η_s η_i)`.
    pub fn effective_excess(&self) -> f64 {
        self.excess / self.sqrt_eta()
    }

    pub fn quadrature_variances(&self, n_in: f64) -> QuadratureVariances {
        let k = self.sqrt_eta();
        QuadratureVariances {
            amplified: 4.0 * self.gain * k * n_in,
            squeezed: k / (4.0 * self.gain) * n_in,
        }
    }

    /// Input-referred system-added noise along `alpha` when followed by a
    /// phase-insensitive stage with input noise `n2_tilde`.
    pub fn system_noise(&self, alpha: f64, n2_tilde: f64) -> f64 {
        self.effective_excess() + n2_tilde / self.effective_gain(alpha)
    }
}

pub fn ps_quadrature_variances(p: &PhaseSensitiveParamp, n_in: f64) -> QuadratureVariances {
    p.quadrature_variances(n_in)
}

/// Output of the paramp followed by a phase-insensitive stage
/// `(g2_tilde, n2_tilde)`, measured along `alpha`.
pub fn ps_chain_output(p: &PhaseSensitiveParamp, alpha: f64, n_in: f64, g2_tilde: f64, n2_tilde: f64) -> f64 {
    let g = p.effective_gain(alpha);
    g2_tilde * g * (n_in + p.effective_excess() + n2_tilde / g)
}

/// Gain compression `λ(V)` sampled against bias voltage and interpolated
/// with a monotone cubic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CompressionSamples", try_from = "CompressionSamples")]
pub struct CompressionCurve {
    bias: Vec<f64>,
    lambda: Vec<f64>,
    slopes: Vec<f64>,
    /// Small-signal gain (linear), when the samples were given in dB.
    pub small_signal_gain: Option<f64>,
}

/// Serialized form of a [`CompressionCurve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSamples {
    pub bias_volt: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_signal_gain: Option<f64>,
}

impl From<CompressionCurve> for CompressionSamples {
    fn from(c: CompressionCurve) -> Self {
        Self {
            bias_volt: c.bias,
            lambda: c.lambda,
            small_signal_gain: c.small_signal_gain,
        }
    }
}

impl TryFrom<CompressionSamples> for CompressionCurve {
    type Error = Error;

    fn try_from(s: CompressionSamples) -> Result<Self> {
        let mut c = CompressionCurve::from_lambda(s.bias_volt, s.lambda)?;
        c.small_signal_gain = s.small_signal_gain;
        Ok(c)
    }
}

impl CompressionCurve {
    /// Builds from `λ` samples, rescaled so the sample nearest zero bias is 1.
    pub fn from_lambda(bias: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if bias.len() != lambda.len() {
            return Err(Error::Precondition("bias and lambda lengths differ".into()));
        }
        if bias.len() < 2 {
            return Err(Error::Precondition("compression curve needs at least 2 samples".into()));
        }
        for (&v, &l) in bias.iter().zip(&lambda) {
            ensure_finite("bias", v)?;
            ensure_positive("lambda", l)?;
        }
        if bias.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("compression bias samples must be strictly increasing".into()));
        }
        let reference = lambda[nearest_zero(&bias)];
        let lambda: Vec<f64> = lambda.iter().map(|l| l / reference).collect();
        let slopes = pchip_slopes(&bias, &lambda);
        Ok(Self {
            bias,
            lambda,
            slopes,
            small_signal_gain: None,
        })
    }

    /// Builds from measured gain in dB; the small-signal gain is the sample
    /// nearest zero bias.
    pub fn from_gain_db(bias: Vec<f64>, gain_db: Vec<f64>) -> Result<Self> {
        if bias.len() != gain_db.len() || bias.is_empty() {
            return Err(Error::Precondition("bias and gain lengths differ".into()));
        }
        let g0 = gain_db[nearest_zero(&bias)];
        let lambda = gain_db.iter().map(|g| from_db(g - g0)).collect();
        let mut curve = Self::from_lambda(bias, lambda)?;
        curve.small_signal_gain = Some(from_db(g0));
        Ok(curve)
    }

    /// A curve with `λ ≡ 1` over `[lo, hi]`.
    pub fn flat(lo: f64, hi: f64) -> Result<Self> {
        Self::from_lambda(vec![lo, hi], vec![1.0, 1.0])
    }

    /// Reads a two-column CSV with header `bias_volt` and either `gain_db`
    /// or `lambda`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let bias_col = col("bias_volt").ok_or_else(|| Error::schema("compression curve", "missing column bias_volt"))?;
        let (value_col, in_db) = match (col("gain_db"), col("lambda")) {
            (Some(c), None) => (c, true),
            (None, Some(c)) => (c, false),
            _ => {
                return Err(Error::schema(
                    "compression curve",
                    "expected exactly one of the columns gain_db or lambda",
                ))
            }
        };
        let mut bias = Vec::new();
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |c: usize| -> Result<f64> {
                let field = record.get(c).unwrap_or("");
                field.parse().map_err(|_| {
                    Error::schema("compression curve", format!("line {}: cannot parse {field:?} as a number", i + 2))
                })
            };
            bias.push(parse(bias_col)?);
            values.push(parse(value_col)?);
        }
        if in_db {
            Self::from_gain_db(bias, values)
        } else {
            Self::from_lambda(bias, values)
        }
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bias_volt", "lambda"])?;
        for (v, l) in self.bias.iter().zip(&self.lambda) {
            w.write_record([format!("{v:e}"), format!("{l:e}")])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<compression curve>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.bias[0], self.bias[self.bias.len() - 1])
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.bias, &self.lambda)
    }

    pub fn covers(&self, v: f64) -> bool {
        let (lo, hi) = self.range();
        v >= lo && v <= hi
    }

    /// Interpolated `λ(V)`; outside the sampled range this is an error.
    pub fn lambda(&self, v: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(v >= lo && v <= hi) {
            return Err(Error::Extrapolation { x: v, lo, hi });
        }
        let d = &self.slopes;
        let k = match self.bias.partition_point(|&b| b <= v) {
            0 => 0,
            i if i >= self.bias.len() => self.bias.len() - 2,
            i => i - 1,
        };
        let (x0, x1) = (self.bias[k], self.bias[k + 1]);
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (y0, y1) = (self.lambda[k], self.lambda[k + 1]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let value = h00 * y0 + h10 * h * d[k] + h01 * y1 + h11 * h * d[k + 1];
        if value <= 0.0 {
            return Err(Error::InvalidInput {
                name: "lambda",
                value,
                reason: "compression factor must be positive",
            });
        }
        Ok(value)
    }

    /// Smallest positive bias at which the gain has dropped by `db`.
    pub fn compression_bias(&self, db: f64) -> Option<f64> {
        let target = from_db(-db);
        let start = nearest_zero(&self.bias);
        for k in start..self.bias.len() - 1 {
            let (a, b) = (self.lambda[k], self.lambda[k + 1]);
            if a > target && b <= target {
                // bisection on the interpolant
                let (mut lo, mut hi) = (self.bias[k], self.bias[k + 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.lambda(mid).ok()? > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
        }
        None
    }

    /// Input noise (signal quanta) at the −1 dB bias for a junction at
    /// `electron_temperature`.
    pub fn input_1db_point(&self, f: Frequency, electron_temperature: f64) -> Option<f64> {
        self.compression_bias(1.0)
            .map(|v| sntj_quanta(v, electron_temperature, f))
    }
}

fn nearest_zero(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Fritsch–Carlson derivative estimates.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// A compressing paramp followed by a phase-insensitive stage, illuminated
/// on both signal and idler by a junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturatedChain {
    /// Small-signal system gain.
    pub g_sys: f64,
    /// Small-signal effective paramp gain `G̃₁`.
    pub g1_tilde: f64,
    pub n_ex_tilde: f64,
    pub n2_tilde: f64,
    pub idler_frequency: Option<Frequency>,
    pub compression: CompressionCurve,
}

impl SaturatedChain {
    /// `Ñ₂/G̃₁`, the second-stage term at small signal.
    pub fn n2_over_g1(&self) -> f64 {
        self.n2_tilde / self.g1_tilde
    }

    /// Small-signal system-added noise `1/2 + Ñ₁,ex + Ñ₂/G̃₁`.
    pub fn small_signal_n_sys(&self) -> f64 {
        0.5 + self.n_ex_tilde + self.n2_over_g1()
    }

    /// `N_out/λ(V)`.
    pub fn corrected_output(&self, v: f64, electron_temperature: f64, f: Frequency) -> Result<f64> {
        let lambda = self.compression.lambda(v)?;
        let fi = self.idler_frequency.unwrap_or(f);
        let n_in = sntj_quanta(v, electron_temperature, f);
        let n_in_i = sntj_quanta(v, electron_temperature, fi);
        Ok(self.g_sys * (n_in + n_in_i + self.n_ex_tilde + self.n2_over_g1() / lambda))
    }

    /// Raw output `N_out`.
    pub fn output(&self, v: f64, electron_temperature: f64, f: Frequency) -> Result<f64> {
        Ok(self.compression.lambda(v)? * self.corrected_output(v, electron_temperature, f)?)
    }
}

/// `N_out/λ(V)` of a saturated chain for a junction source.
pub fn saturated_chain_output(
    chain: &SaturatedChain,
    source: &crate::sources::SntjSource,
    f: Frequency,
) -> Result<f64> {
    chain.corrected_output(source.bias_voltage, source.electron_temperature, f)
}
