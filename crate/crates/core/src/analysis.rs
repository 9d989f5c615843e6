//! Per-frequency pipelines over noise spectra: Y-factor fits, transmission
//! efficiency, reference-plane correction, noise rise and the
//! phase-sensitive predictive model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{efficiency_from_gains, move_reference_plane, EfficiencyEstimate, PlaneCorrection};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::fitting::{fit_two_step, FitModel, FitResult, ModelKind, NoiseCurve};
use crate::paramp::ps_gain;
use crate::quanta::Frequency;
use crate::sources::johnson_noise;

/// Minimum setpoints per bin for a spectral fit.
pub const MIN_BIN_SETPOINTS: usize = 4;

/// Fitted parameters of one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEstimate {
    pub g_sys: f64,
    pub noise: f64,
    pub n_sys: f64,
    pub g_sys_error: f64,
    pub noise_error: f64,
    pub t_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl From<&FitResult> for BinEstimate {
    fn from(r: &FitResult) -> Self {
        Self {
            g_sys: r.g_sys,
            noise: r.noise,
            n_sys: r.n_sys,
            g_sys_error: r.standard_errors.g_sys,
            noise_error: r.standard_errors.noise,
            t_e: r.t_e,
            warnings: r.warnings.clone(),
        }
    }
}

/// One bin: an estimate, or the reason the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBin {
    pub frequency_hz: f64,
    pub estimate: Option<BinEstimate>,
    pub error: Option<String>,
}

/// Fitted gain and noise across frequency bins, in frequency order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub model: ModelKind,
    pub bins: Vec<SpectralBin>,
}

impl SpectralResult {
    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.frequency_hz).collect()
    }

    pub fn g_sys(&self) -> Vec<Option<f64>> {
        self.bins.iter().map(|b| b.estimate.as_ref().map(|e| e.g_sys)).collect()
    }

    pub fn n_sys(&self) -> Vec<Option<f64>> {
        self.bins.iter().map(|b| b.estimate.as_ref().map(|e| e.n_sys)).collect()
    }

    pub fn failed_bins(&self) -> usize {
        self.bins.iter().filter(|b| b.estimate.is_none()).count()
    }

    pub const CSV_HEADER: [&'static str; 8] =
        ["frequency_hz", "g_sys", "noise", "n_sys", "g_sys_error", "noise_error", "t_e", "error"];

    /// Rows for [`Self::CSV_HEADER`]; failed bins leave numeric cells empty.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.bins
            .iter()
            .map(|b| {
                let mut row = vec![b.frequency_hz.to_string()];
                match &b.estimate {
                    Some(e) => row.extend([
                        e.g_sys.to_string(),
                        e.noise.to_string(),
                        e.n_sys.to_string(),
                        e.g_sys_error.to_string(),
                        e.noise_error.to_string(),
                        e.t_e.map(|t| t.to_string()).unwrap_or_default(),
                    ]),
                    None => row.extend(std::iter::repeat_n(String::new(), 6)),
                }
                row.push(b.error.clone().unwrap_or_default());
                row
            })
            .collect()
    }
}

fn bin_from(f: Frequency, fit: Result<FitResult>) -> SpectralBin {
    match fit {
        Ok(r) => SpectralBin {
            frequency_hz: f.hertz(),
            estimate: Some(BinEstimate::from(&r)),
            error: None,
        },
        Err(e) => SpectralBin {
            frequency_hz: f.hertz(),
            estimate: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `fit` on every bin in parallel. Failed bins are marked, not fatal.
pub fn fit_spectrum<F>(curves: &[NoiseCurve], model: ModelKind, fit: F) -> Result<SpectralResult>
where
    F: Fn(&NoiseCurve) -> Result<FitResult> + Sync,
{
    if curves.is_empty() {
        return Err(Error::Precondition("spectrum has no frequency bins".into()));
    }
    let bins = curves
        .par_iter()
        .map(|c| {
            let fit = if c.len() < MIN_BIN_SETPOINTS {
                Err(Error::Precondition(format!("{} setpoints, need {MIN_BIN_SETPOINTS}", c.len())))
            } else {
                fit(c)
            };
            bin_from(c.frequency, fit)
        })
        .collect();
    Ok(SpectralResult { model, bins })
}

/// Two-step fit of every bin with one model.
pub fn yfactor_spectrum(curves: &[NoiseCurve], model: &FitModel) -> Result<SpectralResult> {
    fit_spectrum(curves, model.kind, |c| fit_two_step(c, model))
}

fn check_grids(a: &SpectralResult, b: &SpectralResult) -> Result<()> {
    if a.bins.len() != b.bins.len() {
        return Err(Error::GridMismatch(format!("{} bins vs {} bins", a.bins.len(), b.bins.len())));
    }
    for (x, y) in a.bins.iter().zip(&b.bins) {
        if (x.frequency_hz - y.frequency_hz).abs() > 1e-9 * x.frequency_hz.abs().max(y.frequency_hz.abs()) {
            return Err(Error::GridMismatch(format!("{} Hz vs {} Hz", x.frequency_hz, y.frequency_hz)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBin {
    pub frequency_hz: f64,
    pub estimate: Option<EfficiencyEstimate>,
}

/// Per-bin `η = G_near/G_far`; bins where either fit failed are empty.
pub fn efficiency_spectrum(near: &SpectralResult, far: &SpectralResult) -> Result<Vec<EfficiencyBin>> {
    check_grids(near, far)?;
    near.bins
        .iter()
        .zip(&far.bins)
        .map(|(a, b)| {
            let estimate = match (&a.estimate, &b.estimate) {
                (Some(x), Some(y)) => Some(efficiency_from_gains(x.g_sys, y.g_sys)?),
                _ => None,
            };
            Ok(EfficiencyBin {
                frequency_hz: a.frequency_hz,
                estimate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedBin {
    pub frequency_hz: f64,
    pub eta: Option<f64>,
    /// Gain referred to the new plane, `G_sys/η`.
    pub g_sys: Option<f64>,
    pub correction: Option<PlaneCorrection>,
}

/// Moves a two-input spectrum's reference plane past a loss of efficiency
/// `η(ν)` held at `loss_temperature`.
pub fn corrected_spectrum(
    result: &SpectralResult,
    efficiency: &[EfficiencyBin],
    loss_temperature: f64,
) -> Result<Vec<CorrectedBin>> {
    if result.model != ModelKind::TwoInput {
        return Err(Error::Precondition(format!(
            "reference-plane correction needs a two_input spectrum, got {}",
            result.model.name()
        )));
    }
    ensure_non_negative("loss temperature", loss_temperature)?;
    if efficiency.len() != result.bins.len() {
        return Err(Error::GridMismatch(format!("{} efficiency bins vs {} bins", efficiency.len(), result.bins.len())));
    }
    result
        .bins
        .iter()
        .zip(efficiency)
        .map(|(b, e)| {
            if (b.frequency_hz - e.frequency_hz).abs() > 1e-9 * b.frequency_hz {
                return Err(Error::GridMismatch(format!("{} Hz vs {} Hz", b.frequency_hz, e.frequency_hz)));
            }
            let eta = e.estimate.map(|x| x.eta);
            let (g_sys, correction) = match (&b.estimate, eta) {
                (Some(est), Some(eta)) if eta <= 1.0 => {
                    let n_t = johnson_noise(loss_temperature, Frequency::new(b.frequency_hz)?)?.value();
                    (Some(est.g_sys / eta), Some(move_reference_plane(est.noise, eta, n_t)?))
                }
                _ => (None, None),
            };
            Ok(CorrectedBin {
                frequency_hz: b.frequency_hz,
                eta,
                g_sys,
                correction,
            })
        })
        .collect()
}

/// Inputs of the noise-rise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRiseInputs {
    pub g1: f64,
    pub n_in: f64,
    pub n2_tilde: f64,
}

impl NoiseRiseInputs {
    fn validate(&self) -> Result<()> {
        ensure_positive("first-stage gain", self.g1)?;
        ensure_positive("input noise", self.n_in)?;
        ensure_positive("second-stage noise", self.n2_tilde)?;
        Ok(())
    }
}

/// Rise of the output noise when the first amplifier is switched on:
/// `r = G₁(N_in + N₁)/(N_in + Ñ₂)`.
pub fn noise_rise(inputs: &NoiseRiseInputs, n1: f64) -> Result<f64> {
    inputs.validate()?;
    ensure_non_negative("first-stage noise", n1)?;
    Ok(inputs.g1 * (inputs.n_in + n1) / (inputs.n_in + inputs.n2_tilde))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRiseEstimate {
    pub n1: f64,
    /// The inversion gave `N₁ < 0`.
    pub unphysical: bool,
    /// The estimate is biased low: losses between stages and an
    /// under-estimated second stage both make the rise look smaller.
    pub biased_low: bool,
}

/// Inverse of [`noise_rise`]: `N₁ = (r/G₁)(N_in + Ñ₂) − N_in`.
pub fn n1_from_noise_rise(inputs: &NoiseRiseInputs, r: f64) -> Result<NoiseRiseEstimate> {
    inputs.validate()?;
    ensure_positive("noise rise", r)?;
    let n1 = r / inputs.g1 * (inputs.n_in + inputs.n2_tilde) - inputs.n_in;
    Ok(NoiseRiseEstimate {
        n1,
        unphysical: n1 < 0.0,
        biased_low: true,
    })
}

/// Model gain and noise along a set of measurement phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsPrediction {
    pub alpha: Vec<f64>,
    pub g_sys: Vec<f64>,
    pub n_sys: Vec<f64>,
}

/// Phase-sensitive chain built from a reference (pump-off) chain of gain
/// `G_H` and noise `N_H` and a paramp of maximal gain `M`:
/// `𝒢(α) = M cos²α + sin²α/M`, `G(α) = G_H·𝒢(α)`,
/// `N(α) = m + N_H/𝒢(α) − N_H/M`, so that `N(0) = m`.
pub fn ps_predictive_model(m_gain: f64, g_sys_hemt: f64, n_sys_hemt: f64, m_noise: f64, alpha: &[f64]) -> Result<PsPrediction> {
    ensure_positive("maximal paramp gain", m_gain)?;
    if m_gain <= 1.0 {
        return Err(Error::InvalidInput {
            name: "maximal paramp gain",
            value: m_gain,
            reason: "must exceed 1",
        });
    }
    ensure_positive("reference chain gain", g_sys_hemt)?;
    ensure_non_negative("reference chain noise", n_sys_hemt)?;
    ensure_non_negative("minimum noise", m_noise)?;
    let gain = |a: f64| m_gain * a.cos().powi(2) + a.sin().powi(2) / m_gain;
    Ok(PsPrediction {
        alpha: alpha.to_vec(),
        g_sys: alpha.iter().map(|&a| g_sys_hemt * gain(a)).collect(),
        n_sys: alpha
            .iter()
            .map(|&a| m_noise + n_sys_hemt / gain(a) - n_sys_hemt / m_gain)
            .collect(),
    })
}

/// `ps_predictive_model` gain in terms of the paramp's small-signal gain
/// `g`: `M = 4g` in the high-gain limit of [`ps_gain`].
pub fn ps_max_gain(g1: f64) -> f64 {
    ps_gain(g1, 0.0)
}

/// Single- and two-input readings of one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisinterpretationReport {
    pub single_input: FitResult,
    pub two_input: FitResult,
    /// Single-input slope over the reference gain; 2 for a paramp chain
    /// with equal signal and idler inputs, 1 for a single-input chain.
    pub slope_ratio: Option<f64>,
    pub reference_g_sys: Option<f64>,
}

impl MisinterpretationReport {
    /// Ratio of single-input to two-input system noise.
    pub fn n_sys_ratio(&self) -> f64 {
        self.single_input.n_sys / self.two_input.n_sys
    }
}

/// Fits `curve` with both models. `base` supplies fixed parameters and the
/// window; `reference_g_sys` is an independently known system gain.
pub fn model_misinterpretation_report(
    curve: &NoiseCurve,
    base: &FitModel,
    reference_g_sys: Option<f64>,
) -> Result<MisinterpretationReport> {
    if let Some(g) = reference_g_sys {
        ensure_positive("reference gain", g)?;
    }
    let with_kind = |kind| {
        let mut m = base.clone();
        m.kind = kind;
        m
    };
    let single_input = fit_two_step(curve, &with_kind(ModelKind::SingleInput))?;
    let two_input = fit_two_step(curve, &with_kind(ModelKind::TwoInput))?;
    Ok(MisinterpretationReport {
        slope_ratio: reference_g_sys.map(|g| single_input.g_sys / g),
        single_input,
        two_input,
        reference_g_sys,
    })
}
