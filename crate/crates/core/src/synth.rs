//! Synthetic output-noise curves from a forward chain model, with optional
//! spectrum-analyzer acquisition noise.
//!
//! Acquisition noise is multiplicative Gaussian on power with relative
//! standard deviation `1/√n_eff`, where
//! `n_eff = averages·max(1, rbw·sweep_time/points)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainDescription;
use crate::error::{ensure_positive, Error, Result};
use crate::fitting::{ModelKind, NoiseCurve};
use crate::paramp::{ps_chain_output, CompressionCurve, PhaseInsensitiveParamp, PhaseSensitiveParamp};
use crate::quanta::{from_db, Frequency, BOLTZMANN, ELECTRON_CHARGE};
use crate::sources::{sntj_quanta, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSettings {
    pub rbw: f64,
    pub vbw: f64,
    pub points_per_sweep: u32,
    pub sweep_time: f64,
    pub trace_averages: u32,
    pub rng_seed: u64,
}

impl AcquisitionSettings {
    pub fn new(rbw: f64, vbw: f64, points_per_sweep: u32, sweep_time: f64, trace_averages: u32, rng_seed: u64) -> Result<Self> {
        let acq = Self {
            rbw,
            vbw,
            points_per_sweep,
            sweep_time,
            trace_averages,
            rng_seed,
        };
        acq.validate()?;
        Ok(acq)
    }

    /// Wideband spectrum settings: 8 MHz RBW, 15 kHz VBW, 501 points,
    /// 1500 averaged traces.
    pub fn wideband(rng_seed: u64) -> Self {
        Self {
            rbw: 8e6,
            vbw: 15e3,
            points_per_sweep: 501,
            sweep_time: 0.05,
            trace_averages: 1500,
            rng_seed,
        }
    }

    /// Settings whose effective number of averages is exactly `n_eff`.
    pub fn with_effective_averages(n_eff: u32, rng_seed: u64) -> Self {
        Self {
            rbw: 1.0,
            vbw: 1.0,
            points_per_sweep: 1,
            sweep_time: 1.0,
            trace_averages: n_eff,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rbw", self.rbw)?;
        ensure_positive("vbw", self.vbw)?;
        ensure_positive("sweep time", self.sweep_time)?;
        if self.points_per_sweep == 0 || self.trace_averages == 0 {
            return Err(Error::Precondition("points per sweep and trace averages must be positive".into()));
        }
        if self.vbw > self.rbw {
            return Err(Error::Precondition(format!("vbw {} exceeds rbw {}", self.vbw, self.rbw)));
        }
        Ok(())
    }

    pub fn effective_averages(&self) -> f64 {
        let per_point = self.rbw * self.sweep_time / self.points_per_sweep as f64;
        self.trace_averages as f64 * per_point.max(1.0)
    }

    pub fn relative_sigma(&self) -> f64 {
        1.0 / self.effective_averages().sqrt()
    }
}

/// Forward models that can be illuminated by a calibration source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainModel {
    /// `G(N_in + N_sys)`.
    Linear { g_sys: f64, n_sys: f64 },
    /// A stage list reduced at each frequency.
    Chain { chain: ChainDescription },
    /// `G(N_in + N_inⁱ + N_sys,ex)`.
    TwoInput {
        g_sys: f64,
        n_sys_ex: f64,
        #[serde(default)]
        idler_reference_hz: Option<f64>,
    },
    /// Phase-insensitive paramp followed by a stage `(g2_tilde, n2_tilde)`.
    Paramp {
        paramp: PhaseInsensitiveParamp,
        g2_tilde: f64,
        n2_tilde: f64,
        #[serde(default)]
        idler_reference_hz: Option<f64>,
    },
    /// Compressing paramp: `G_sys·λ(V)·(N_in + N_inⁱ + Ñ₁,ex) + G_sys·Ñ₂/G̃₁`.
    Saturated {
        g_sys: f64,
        g1_tilde: f64,
        n_ex_tilde: f64,
        n2_tilde: f64,
        compression: CompressionCurve,
    },
    /// Phase-sensitive paramp measured along `alpha`.
    PhaseSensitive {
        paramp: PhaseSensitiveParamp,
        alpha: f64,
        g2_tilde: f64,
        n2_tilde: f64,
    },
}

/// Parameters a fit of the generated data should recover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: ModelKind,
    pub frequency_hz: f64,
    pub g_sys: f64,
    /// Noise parameter in the fit model's convention.
    pub noise: f64,
    pub n_sys: f64,
}

fn idler(reference: Option<f64>, f: Frequency) -> Result<Frequency> {
    match reference {
        None => Ok(f),
        Some(r) => Frequency::new(r - f.hertz()),
    }
}

impl ChainModel {
    /// Noiseless output for one source setpoint at `f`.
    pub fn output(&self, source: &SourceModel, setpoint: f64, f: Frequency) -> Result<f64> {
        let n_at = |freq: Frequency| source.emitted(setpoint, freq).map(|q| q.value());
        match self {
            ChainModel::Linear { g_sys, n_sys } => Ok(g_sys * (n_at(f)? + n_sys)),
            ChainModel::Chain { chain } => Ok(chain.reduce(f)?.output(n_at(f)?)),
            ChainModel::TwoInput {
                g_sys,
                n_sys_ex,
                idler_reference_hz,
            } => Ok(g_sys * (n_at(f)? + n_at(idler(*idler_reference_hz, f)?)? + n_sys_ex)),
            ChainModel::Paramp {
                paramp,
                g2_tilde,
                n2_tilde,
                idler_reference_hz,
            } => {
                let out1 = paramp.output(n_at(f)?, n_at(idler(*idler_reference_hz, f)?)?, f)?;
                Ok(g2_tilde * (out1 + n2_tilde))
            }
            ChainModel::Saturated {
                g_sys,
                g1_tilde,
                n_ex_tilde,
                n2_tilde,
                compression,
            } => {
                let v = match source {
                    SourceModel::Sntj { v_offset, .. } => setpoint - v_offset,
                    SourceModel::Vts => {
                        return Err(Error::Precondition("saturated model needs a junction source".into()))
                    }
                };
                let lambda = compression.lambda(v)?;
                Ok(g_sys * (lambda * (2.0 * n_at(f)? + n_ex_tilde) + n2_tilde / g1_tilde))
            }
            ChainModel::PhaseSensitive {
                paramp,
                alpha,
                g2_tilde,
                n2_tilde,
            } => Ok(ps_chain_output(paramp, *alpha, n_at(f)?, *g2_tilde, *n2_tilde)),
        }
    }

    pub fn ground_truth(&self, f: Frequency) -> Result<GroundTruth> {
        let (model, g_sys, noise, n_sys) = match self {
            ChainModel::Linear { g_sys, n_sys } => (ModelKind::SingleInput, *g_sys, *n_sys, *n_sys),
            ChainModel::Chain { chain } => {
                let eff = chain.reduce(f)?;
                (ModelKind::SingleInput, eff.gain, eff.added_noise, eff.added_noise)
            }
            ChainModel::TwoInput { g_sys, n_sys_ex, .. } => (ModelKind::TwoInput, *g_sys, *n_sys_ex, 0.5 + n_sys_ex),
            ChainModel::Paramp {
                paramp, g2_tilde, n2_tilde, ..
            } => {
                let g1 = paramp.effective_gain();
                let ex = paramp.effective_excess(f)? + n2_tilde / g1;
                (ModelKind::TwoInput, g2_tilde * g1, ex, 0.5 + ex)
            }
            ChainModel::Saturated {
                g_sys,
                g1_tilde,
                n_ex_tilde,
                n2_tilde,
                ..
            } => (
                ModelKind::TwoInputSaturated,
                *g_sys,
                *n_ex_tilde,
                0.5 + n_ex_tilde + n2_tilde / g1_tilde,
            ),
            ChainModel::PhaseSensitive {
                paramp,
                alpha,
                g2_tilde,
                n2_tilde,
            } => {
                let n = paramp.system_noise(*alpha, *n2_tilde);
                (ModelKind::PsQuadrature, g2_tilde * paramp.effective_gain(*alpha), n, n)
            }
        };
        Ok(GroundTruth {
            model,
            frequency_hz: f.hertz(),
            g_sys,
            noise,
            n_sys,
        })
    }
}

/// Noiseless or noisy curve; bin `stream` selects an independent random
/// stream of the acquisition seed.
pub fn generate_curve_in_stream(
    model: &ChainModel,
    source: &SourceModel,
    setpoints: &[f64],
    f: Frequency,
    acq: Option<&AcquisitionSettings>,
    stream: u64,
) -> Result<NoiseCurve> {
    if setpoints.is_empty() {
        return Err(Error::Precondition("no setpoints".into()));
    }
    let mut outputs = setpoints
        .iter()
        .map(|&s| model.output(source, s, f))
        .collect::<Result<Vec<_>>>()?;
    if let Some(acq) = acq {
        acq.validate()?;
        let sigma = acq.relative_sigma();
        let mut rng = ChaCha8Rng::seed_from_u64(acq.rng_seed);
        rng.set_stream(stream);
        for y in &mut outputs {
            let z: f64 = StandardNormal.sample(&mut rng);
            *y *= 1.0 + sigma * z;
        }
    }
    NoiseCurve::new(f, source.kind(), setpoints.to_vec(), outputs)
}

pub fn generate_curve(
    model: &ChainModel,
    source: &SourceModel,
    setpoints: &[f64],
    f: Frequency,
    acq: Option<&AcquisitionSettings>,
) -> Result<NoiseCurve> {
    generate_curve_in_stream(model, source, setpoints, f, acq, 0)
}

/// One curve per frequency bin, bin `k` drawing from stream `k`.
pub fn generate_spectrum(
    model: &ChainModel,
    source: &SourceModel,
    setpoints: &[f64],
    frequencies: &[Frequency],
    acq: Option<&AcquisitionSettings>,
) -> Result<Vec<NoiseCurve>> {
    if frequencies.is_empty() {
        return Err(Error::Precondition("empty frequency grid".into()));
    }
    frequencies
        .par_iter()
        .enumerate()
        .map(|(k, &f)| generate_curve_in_stream(model, source, setpoints, f, acq, k as u64))
        .collect()
}

/// `n` evenly spaced values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Evenly spaced frequency grid in hertz.
pub fn frequency_grid(lo_hz: f64, hi_hz: f64, n: usize) -> Result<Vec<Frequency>> {
    linspace(lo_hz, hi_hz, n).into_iter().map(Frequency::new).collect()
}

/// Ten junction biases spanning `eV/(2k_B) = ±half_span_kelvin`.
pub fn default_sntj_biases(half_span_kelvin: f64) -> Vec<f64> {
    let v = 2.0 * BOLTZMANN * half_span_kelvin / ELECTRON_CHARGE;
    linspace(-v, v, 10)
}

/// Logistic gain compression against signal input quanta, normalized to 1
/// at zero bias and dropping by 1 dB at `n_1db` quanta. `width` sets the
/// sharpness (quanta). Sampled on `samples` biases over `[-v_max, v_max]`.
pub fn logistic_compression(
    n_1db: f64,
    width: f64,
    f: Frequency,
    electron_temperature: f64,
    v_max: f64,
    samples: usize,
) -> Result<CompressionCurve> {
    ensure_positive("1 dB point", n_1db)?;
    ensure_positive("compression width", width)?;
    ensure_positive("bias span", v_max)?;
    let n0 = sntj_quanta(0.0, electron_temperature, f);
    let r = from_db(-1.0);
    let denom = r * ((n_1db - n0) / width).exp() - 1.0;
    if !(n_1db > n0) || denom <= 0.0 {
        return Err(Error::Precondition(format!(
            "a 1 dB point at {n_1db} quanta is unreachable with width {width} above the zero-bias input {n0}"
        )));
    }
    // a = exp((n0 − N_c)/w)
    let a = (1.0 - r) / denom;
    let lambda = |n: f64| (1.0 + a) / (1.0 + a * ((n - n0) / width).exp());
    let bias = linspace(-v_max, v_max, samples.max(2));
    let values = bias.iter().map(|&v| lambda(sntj_quanta(v, electron_temperature, f))).collect();
    CompressionCurve::from_lambda(bias, values)
}
