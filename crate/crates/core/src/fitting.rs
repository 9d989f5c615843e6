//! Fits of output-noise curves: an asymptotic linear fit that seeds a
//! bounded nonlinear fit of the full source model.
//!
//! Residuals are relative, `(model − y)/|y|`, which matches the
//! multiplicative acquisition noise of averaged power measurements.

pub mod lsq;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::paramp::CompressionCurve;
use crate::quanta::{Frequency, BOLTZMANN, ELECTRON_CHARGE, PLANCK};
use crate::sources::{johnson_noise, sntj_noise_gradient, sntj_quanta, SourceKind};
use lsq::{least_squares, Bound, LsqOptions, Problem};

/// Minimum number of points in any fitted window.
pub const MIN_WINDOW_POINTS: usize = 6;

/// Output-noise samples against source setpoints at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurve {
    pub frequency: Frequency,
    pub source_kind: SourceKind,
    /// Bias voltages (V) for a junction, temperatures (K) for a resistor.
    pub setpoints: Vec<f64>,
    /// Output noise in quanta.
    pub outputs: Vec<f64>,
    /// Compression factor at each setpoint, for saturation-corrected fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

impl NoiseCurve {
    pub fn new(frequency: Frequency, source_kind: SourceKind, setpoints: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        if setpoints.len() != outputs.len() {
            return Err(Error::Precondition(format!(
                "{} setpoints but {} outputs",
                setpoints.len(),
                outputs.len()
            )));
        }
        if setpoints.is_empty() {
            return Err(Error::Precondition("noise curve has no samples".into()));
        }
        for (&s, &y) in setpoints.iter().zip(&outputs) {
            ensure_finite("setpoint", s)?;
            ensure_finite("output", y)?;
        }
        let increasing = setpoints.windows(2).all(|w| w[1] > w[0]);
        let decreasing = setpoints.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::Precondition("setpoints must be strictly monotone".into()));
        }
        if source_kind == SourceKind::Vts && setpoints.iter().any(|&t| t < 0.0) {
            return Err(Error::Precondition("resistor temperatures must be non-negative".into()));
        }
        Ok(Self {
            frequency,
            source_kind,
            setpoints,
            outputs,
            lambda: None,
        })
    }

    pub fn len(&self) -> usize {
        self.setpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.setpoints.is_empty()
    }

    /// Attaches `λ` sampled from `curve` at each setpoint.
    pub fn with_compression(mut self, curve: &CompressionCurve) -> Result<Self> {
        if self.source_kind != SourceKind::Sntj {
            return Err(Error::Precondition("compression correction needs a junction sweep".into()));
        }
        self.lambda = Some(self.setpoints.iter().map(|&v| curve.lambda(v)).collect::<Result<_>>()?);
        Ok(self)
    }

    /// Classical input quanta of a setpoint: `e|V−V₀|/(2hf)` or `k_B T/(hf)`.
    pub fn classical_input(&self, setpoint: f64, v_offs: f64) -> f64 {
        let hf = self.frequency.photon_energy();
        match self.source_kind {
            SourceKind::Sntj => ELECTRON_CHARGE * (setpoint - v_offs).abs() / (2.0 * hf),
            SourceKind::Vts => BOLTZMANN * setpoint / hf,
        }
    }

    /// Indices whose classical input is at most `half_width` quanta.
    pub fn window_indices(&self, half_width: Option<f64>, v_offs: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| half_width.is_none_or(|w| self.classical_input(self.setpoints[i], v_offs) <= w * (1.0 + 1e-12)))
            .collect()
    }

    fn subset(&self, idx: &[usize]) -> NoiseCurve {
        NoiseCurve {
            frequency: self.frequency,
            source_kind: self.source_kind,
            setpoints: idx.iter().map(|&i| self.setpoints[i]).collect(),
            outputs: idx.iter().map(|&i| self.outputs[i]).collect(),
            lambda: self.lambda.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One input mode: `G(N_in + N_sys)`.
    SingleInput,
    /// Signal and idler both illuminated: `G(N_in + N_inⁱ + N_sys,ex)`.
    TwoInput,
    /// Two-input model on `N_out/λ` with a fixed second-stage term.
    TwoInputSaturated,
    /// One quadrature of a phase-sensitive chain: `G(α)(N_in + N_sys(α))`.
    PsQuadrature,
}

impl ModelKind {
    pub fn modes(self) -> usize {
        match self {
            ModelKind::SingleInput | ModelKind::PsQuadrature => 1,
            ModelKind::TwoInput | ModelKind::TwoInputSaturated => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single_input" => Some(ModelKind::SingleInput),
            "two_input" => Some(ModelKind::TwoInput),
            "two_input_saturated" => Some(ModelKind::TwoInputSaturated),
            "ps_quadrature" => Some(ModelKind::PsQuadrature),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SingleInput => "single_input",
            ModelKind::TwoInput => "two_input",
            ModelKind::TwoInputSaturated => "two_input_saturated",
            ModelKind::PsQuadrature => "ps_quadrature",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    #[serde(default)]
    pub t_e: Option<f64>,
    #[serde(default)]
    pub n2_over_g1: Option<f64>,
    #[serde(default)]
    pub v_offs: Option<f64>,
}

/// Which amplifier leads the chain; sets the starting noise guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstAmplifier {
    Hemt,
    Jtwpa,
    Jpa,
}

impl FirstAmplifier {
    pub fn noise_guess(self) -> f64 {
        match self {
            FirstAmplifier::Hemt => 50.0,
            FirstAmplifier::Jtwpa => 2.0,
            FirstAmplifier::Jpa => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitModel {
    pub kind: ModelKind,
    #[serde(default)]
    pub fixed: FixedParams,
    /// Starting electron temperature when it is free (K).
    #[serde(default)]
    pub t_e_guess: Option<f64>,
    /// Asymptotic branches need `e|V−V₀| ≥ threshold·max(hf, k_B T_e)`.
    #[serde(default = "default_threshold")]
    pub asymptote_threshold: f64,
    /// Symmetric window half-width in classical input quanta.
    #[serde(default)]
    pub window: Option<f64>,
    /// Idler frequency is `idler_reference_hz − f`; unset means `f_i = f`.
    #[serde(default)]
    pub idler_reference_hz: Option<f64>,
    /// Lowest half-width of the noise bounds in the full fit (quanta).
    #[serde(default = "default_noise_floor")]
    pub noise_bound_floor: f64,
}

fn default_threshold() -> f64 {
    10.0
}

fn default_noise_floor() -> f64 {
    0.05
}

impl FitModel {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            fixed: FixedParams::default(),
            t_e_guess: None,
            asymptote_threshold: default_threshold(),
            window: None,
            idler_reference_hz: None,
            noise_bound_floor: default_noise_floor(),
        }
    }

    pub fn with_fixed_t_e(mut self, t_e: f64) -> Self {
        self.fixed.t_e = Some(t_e);
        self
    }

    pub fn with_t_e_guess(mut self, t_e: f64) -> Self {
        self.t_e_guess = Some(t_e);
        self
    }

    pub fn with_window(mut self, half_width: Option<f64>) -> Self {
        self.window = half_width;
        self
    }

    pub fn idler_frequency(&self, f: Frequency) -> Result<Frequency> {
        match self.idler_reference_hz {
            None => Ok(f),
            Some(r) => Frequency::new(r - f.hertz()),
        }
    }

    fn second_stage_term(&self) -> Result<f64> {
        match (self.kind, self.fixed.n2_over_g1) {
            (ModelKind::TwoInputSaturated, Some(c)) => Ok(c),
            (ModelKind::TwoInputSaturated, None) => Err(Error::Precondition(
                "saturated model needs the fixed second-stage term n2_over_g1".into(),
            )),
            _ => Ok(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStage {
    Asymptotes,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub g_sys: f64,
    pub noise: f64,
    pub v_offs: Option<f64>,
    pub t_e: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub half_width_quanta: Option<f64>,
    pub points: usize,
    pub setpoint_min: f64,
    pub setpoint_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub stage: FitStage,
    pub frequency_hz: f64,
    pub g_sys: f64,
    /// `N_sys` for one-input models, `N_sys,ex` (or `Ñ₁,ex`) for two-input.
    pub noise: f64,
    /// System-added noise implied by `noise` with a cold idler.
    pub n_sys: f64,
    pub v_offs: f64,
    pub t_e: Option<f64>,
    pub t_e_fixed: bool,
    pub standard_errors: StandardErrors,
    pub residuals: Vec<f64>,
    pub window: FitWindow,
    pub residual_autocorrelation: f64,
    pub active_bounds: Vec<String>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// System-added noise for a fitted noise parameter.
pub fn n_sys_from_noise(kind: ModelKind, noise: f64, second_stage: f64) -> f64 {
    match kind {
        ModelKind::SingleInput | ModelKind::PsQuadrature => noise,
        ModelKind::TwoInput => 0.5 + noise,
        ModelKind::TwoInputSaturated => 0.5 + noise + second_stage,
    }
}

/// Lag-1 autocorrelation of residuals in setpoint order.
pub fn lag1_autocorrelation(residuals: &[f64]) -> f64 {
    let n = residuals.len();
    if n < 2 {
        return 0.0;
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let den: f64 = residuals.iter().map(|r| (r - mean).powi(2)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = residuals.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / den
}

/// Forward model of a curve for the nonlinear fit. Parameters are
/// `[G, N]`, plus `T_e` when it is free.
#[derive(Debug, Clone)]
pub struct CurveModel<'a> {
    curve: &'a NoiseCurve,
    kind: ModelKind,
    modes: Vec<Frequency>,
    v_offs: f64,
    t_e_fixed: Option<f64>,
    second_stage: f64,
    /// Data divided by `λ` when present.
    data: Vec<f64>,
}

impl<'a> CurveModel<'a> {
    pub fn new(curve: &'a NoiseCurve, model: &FitModel, v_offs: f64) -> Result<Self> {
        let second_stage = model.second_stage_term()?;
        let f = curve.frequency;
        let modes = if model.kind.modes() == 2 {
            vec![f, model.idler_frequency(f)?]
        } else {
            vec![f]
        };
        let data = match (&curve.lambda, model.kind) {
            (Some(l), ModelKind::TwoInputSaturated) => curve.outputs.iter().zip(l).map(|(y, l)| y / l).collect(),
            (None, ModelKind::TwoInputSaturated) => {
                return Err(Error::Precondition("saturated model needs compression factors on the curve".into()))
            }
            _ => curve.outputs.clone(),
        };
        if data.iter().any(|&y| y <= 0.0) {
            return Err(Error::Precondition("outputs must be positive for relative residuals".into()));
        }
        let t_e_fixed = match curve.source_kind {
            SourceKind::Vts => Some(model.fixed.t_e.unwrap_or(0.0)),
            SourceKind::Sntj => model.fixed.t_e,
        };
        Ok(Self {
            curve,
            kind: model.kind,
            modes,
            v_offs,
            t_e_fixed,
            second_stage,
            data,
        })
    }

    pub fn n_params(&self) -> usize {
        if self.t_e_fixed.is_some() {
            2
        } else {
            3
        }
    }

    pub fn t_e_is_free(&self) -> bool {
        self.t_e_fixed.is_none()
    }

    /// Data the model is compared against (outputs, divided by `λ` for the
    /// saturated model).
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn t_e(&self, params: &[f64]) -> f64 {
        self.t_e_fixed.unwrap_or_else(|| params[2])
    }

    fn extra(&self, i: usize) -> f64 {
        match (&self.curve.lambda, self.kind) {
            (Some(l), ModelKind::TwoInputSaturated) => self.second_stage / l[i],
            _ => 0.0,
        }
    }

    /// Exact source input summed over modes, and its `T_e` derivative.
    fn input(&self, i: usize, t_e: f64) -> (f64, f64) {
        let s = self.curve.setpoints[i];
        let mut x = 0.0;
        let mut dx = 0.0;
        for &f in &self.modes {
            match self.curve.source_kind {
                SourceKind::Sntj => {
                    let v = s - self.v_offs;
                    x += sntj_quanta(v, t_e.max(0.0), f);
                    dx += sntj_noise_gradient(v, t_e.max(0.0), f).1;
                }
                SourceKind::Vts => {
                    x += johnson_noise(s, f).map(|q| q.value()).unwrap_or(f64::NAN);
                }
            }
        }
        (x, dx)
    }

    /// Model outputs (in data units) at `params`.
    pub fn evaluate(&self, params: &[f64]) -> Vec<f64> {
        let t_e = self.t_e(params);
        (0..self.curve.len())
            .map(|i| params[0] * (self.input(i, t_e).0 + params[1] + self.extra(i)))
            .collect()
    }

    /// Analytic `∂model/∂params`.
    pub fn evaluate_jacobian(&self, params: &[f64]) -> DMatrix<f64> {
        let t_e = self.t_e(params);
        let n = self.n_params();
        let mut jac = DMatrix::zeros(self.curve.len(), n);
        for i in 0..self.curve.len() {
            let (x, dx) = self.input(i, t_e);
            jac[(i, 0)] = x + params[1] + self.extra(i);
            jac[(i, 1)] = params[0];
            if n == 3 {
                jac[(i, 2)] = params[0] * dx;
            }
        }
        jac
    }
}

impl Problem for CurveModel<'_> {
    fn residuals(&self, params: &[f64]) -> Vec<f64> {
        self.evaluate(params)
            .iter()
            .zip(&self.data)
            .map(|(m, y)| (m - y) / y.abs())
            .collect()
    }

    fn jacobian(&self, params: &[f64]) -> Option<DMatrix<f64>> {
        let mut jac = self.evaluate_jacobian(params);
        for (i, y) in self.data.iter().enumerate() {
            jac.row_mut(i).unscale_mut(y.abs());
        }
        Some(jac)
    }
}

fn window_descriptor(curve: &NoiseCurve, half_width: Option<f64>) -> FitWindow {
    let (lo, hi) = curve
        .setpoints
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    FitWindow {
        half_width_quanta: half_width,
        points: curve.len(),
        setpoint_min: lo,
        setpoint_max: hi,
    }
}

fn windowed(curve: &NoiseCurve, half_width: Option<f64>, v_offs: f64) -> Result<NoiseCurve> {
    let idx = curve.window_indices(half_width, v_offs);
    if idx.len() < MIN_WINDOW_POINTS.min(curve.len().max(1)) || (half_width.is_some() && idx.len() < MIN_WINDOW_POINTS) {
        return Err(Error::WindowTooNarrow {
            half_width: half_width.unwrap_or(f64::INFINITY),
            points: idx.len(),
            required: MIN_WINDOW_POINTS,
        });
    }
    Ok(curve.subset(&idx))
}

/// Weighted linear least squares `y ≈ A·β` with weights `1/|y|`; returns
/// the coefficients, their covariance, and the relative residuals.
fn relative_linear_fit(a: &DMatrix<f64>, y: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>, Vec<f64>)> {
    let m = a.nrows();
    let n = a.ncols();
    let mut aw = a.clone();
    let mut yw = DVector::zeros(m);
    for i in 0..m {
        let w = 1.0 / y[i].abs();
        aw.row_mut(i).scale_mut(w);
        yw[i] = y[i] * w;
    }
    let condition = lsq::column_normalized_condition(&aw);
    if !condition.is_finite() || condition > 1e14 {
        return Err(Error::Singular { condition });
    }
    let svd = aw.clone().svd(true, true);
    let beta = svd
        .solve(&yw, 0.0)
        .map_err(|_| Error::Singular { condition })?;
    let resid = &aw * &beta - &yw;
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = resid.norm_squared() / dof;
    let jtj = aw.transpose() * &aw;
    let cov = jtj.try_inverse().ok_or(Error::Singular { condition })? * s2;
    Ok((beta, cov, resid.iter().copied().collect()))
}

fn mean_abs_branch_slope(v: &[f64], y: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mv = v.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = v.iter().map(|x| (x - mv).powi(2)).sum();
    let sxy: f64 = v.iter().zip(y).map(|(x, y)| (x - mv) * (y - my)).sum();
    Some((sxy / sxx).abs())
}

/// First step: straight-line fit of the asymptotic branches with the
/// classical source law. When the sweep never reaches the asymptotes and
/// the electron temperature is known, the seed instead comes from a linear
/// regression on the exact source input.
pub fn fit_asymptotes(curve: &NoiseCurve, model: &FitModel) -> Result<FitResult> {
    let v_guess = model.fixed.v_offs.unwrap_or(0.0);
    let curve = &windowed(curve, model.window, v_guess)?;
    let second_stage = model.second_stage_term()?;
    let probe = CurveModel::new(curve, model, v_guess)?;
    let y = probe.data().to_vec();
    let lambda = |i: usize| curve.lambda.as_ref().filter(|_| model.kind == ModelKind::TwoInputSaturated).map_or(1.0, |l| l[i]);
    let mut warnings = Vec::new();

    if curve.source_kind == SourceKind::Sntj {
        let hf = curve.frequency.photon_energy();
        let t_guess = model.fixed.t_e.or(model.t_e_guess).unwrap_or(0.0);
        let cut = model.asymptote_threshold * hf.max(BOLTZMANN * t_guess);
        let pos: Vec<usize> = (0..curve.len())
            .filter(|&i| curve.setpoints[i] - v_guess > 0.0 && ELECTRON_CHARGE * (curve.setpoints[i] - v_guess) >= cut)
            .collect();
        let neg: Vec<usize> = (0..curve.len())
            .filter(|&i| curve.setpoints[i] - v_guess < 0.0 && ELECTRON_CHARGE * (v_guess - curve.setpoints[i]) >= cut)
            .collect();
        if pos.len() >= 2 && neg.len() >= 2 {
            // classical slope per volt, summed over modes
            let s: f64 = probe.modes.iter().map(|f| ELECTRON_CHARGE / (2.0 * PLANCK * f.hertz())).sum();
            let idx: Vec<usize> = neg.iter().chain(&pos).copied().collect();
            let sign = |i: usize| if curve.setpoints[i] > v_guess { 1.0 } else { -1.0 };
            let v_fixed = model.fixed.v_offs.is_some();
            let cols = if v_fixed { 2 } else { 3 };
            let mut a = DMatrix::zeros(idx.len(), cols);
            let mut yy = Vec::with_capacity(idx.len());
            for (r, &i) in idx.iter().enumerate() {
                let sg = sign(i);
                let v = curve.setpoints[i];
                let extra = second_stage / lambda(i);
                if v_fixed {
                    a[(r, 0)] = s * (v - v_guess).abs() + extra;
                    a[(r, 1)] = 1.0;
                } else {
                    a[(r, 0)] = s * sg * v + extra;
                    a[(r, 1)] = -sg;
                    a[(r, 2)] = 1.0;
                }
                yy.push(y[i]);
            }
            let (beta, cov, resid) = relative_linear_fit(&a, &yy)?;
            let g = beta[0];
            let (b, q, var_b, var_q, cov_gq, cov_gb) = if v_fixed {
                (g * s * v_guess, beta[1], 0.0, cov[(1, 1)], cov[(0, 1)], 0.0)
            } else {
                (beta[1], beta[2], cov[(1, 1)], cov[(2, 2)], cov[(0, 2)], cov[(0, 1)])
            };
            if !(g > 0.0) {
                return Err(Error::Precondition(format!("asymptotic fit produced non-positive gain {g}")));
            }
            let noise = q / g;
            let v_offs = b / (g * s);
            let var_g = cov[(0, 0)];
            // delta method for ratios
            let se_noise = (var_q / (g * g) + q * q * var_g / g.powi(4) - 2.0 * q * cov_gq / g.powi(3)).max(0.0).sqrt();
            let se_v = (var_b / (g * s).powi(2) + b * b * var_g / (s * s * g.powi(4)) - 2.0 * b * cov_gb / (s * s * g.powi(3)))
                .max(0.0)
                .sqrt();

            let branch = |ids: &[usize]| {
                let v: Vec<f64> = ids.iter().map(|&i| curve.setpoints[i]).collect();
                let yv: Vec<f64> = ids.iter().map(|&i| y[i]).collect();
                mean_abs_branch_slope(&v, &yv)
            };
            if let (Some(sp), Some(sn)) = (branch(&pos), branch(&neg)) {
                let mean = 0.5 * (sp + sn);
                if (sp - sn).abs() > 0.2 * mean {
                    warnings.push(format!(
                        "asymptotic branch slopes differ by {:.1}% (positive {sp:.4e}, negative {sn:.4e}); the chain may be nonlinear",
                        100.0 * (sp - sn).abs() / mean
                    ));
                }
            }
            let mut sorted: Vec<(f64, f64)> = idx.iter().zip(&resid).map(|(&i, &r)| (curve.setpoints[i], r)).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let resid_sorted: Vec<f64> = sorted.iter().map(|p| p.1).collect();
            return Ok(FitResult {
                model: model.kind,
                stage: FitStage::Asymptotes,
                frequency_hz: curve.frequency.hertz(),
                g_sys: g,
                noise,
                n_sys: n_sys_from_noise(model.kind, noise, second_stage),
                v_offs: if v_fixed { v_guess } else { v_offs },
                t_e: model.fixed.t_e.or(model.t_e_guess),
                t_e_fixed: model.fixed.t_e.is_some(),
                standard_errors: StandardErrors {
                    g_sys: var_g.max(0.0).sqrt(),
                    noise: se_noise,
                    v_offs: (!v_fixed).then_some(se_v),
                    t_e: None,
                },
                residual_autocorrelation: lag1_autocorrelation(&resid_sorted),
                residuals: resid_sorted,
                window: window_descriptor(curve, model.window),
                active_bounds: Vec::new(),
                iterations: 0,
                warnings,
            });
        }
        if model.fixed.t_e.is_none() {
            return Err(Error::InsufficientAsymptoticPoints {
                positive: pos.len(),
                negative: neg.len(),
            });
        }
        warnings.push(format!(
            "sweep has no asymptotic branches ({} positive, {} negative points); seeded by regression on the exact source input",
            pos.len(),
            neg.len()
        ));
    }

    // regression on the exact input: y = G·(X + c/λ) + G·N
    let t_e = probe.t_e(&[0.0, 0.0, model.t_e_guess.unwrap_or(0.0)]);
    let mut a = DMatrix::zeros(curve.len(), 2);
    for i in 0..curve.len() {
        a[(i, 0)] = probe.input(i, t_e).0 + probe.extra(i);
        a[(i, 1)] = 1.0;
    }
    let (beta, cov, resid) = relative_linear_fit(&a, &y)?;
    let g = beta[0];
    if !(g > 0.0) {
        return Err(Error::Precondition(format!("linear fit produced non-positive gain {g}")));
    }
    let noise = beta[1] / g;
    let se_noise = (cov[(1, 1)] / (g * g) + beta[1].powi(2) * cov[(0, 0)] / g.powi(4) - 2.0 * beta[1] * cov[(0, 1)] / g.powi(3))
        .max(0.0)
        .sqrt();
    Ok(FitResult {
        model: model.kind,
        stage: FitStage::Asymptotes,
        frequency_hz: curve.frequency.hertz(),
        g_sys: g,
        noise,
        n_sys: n_sys_from_noise(model.kind, noise, second_stage),
        v_offs: v_guess,
        t_e: probe.t_e_fixed.filter(|_| curve.source_kind == SourceKind::Sntj),
        t_e_fixed: probe.t_e_fixed.is_some(),
        standard_errors: StandardErrors {
            g_sys: cov[(0, 0)].max(0.0).sqrt(),
            noise: se_noise,
            v_offs: None,
            t_e: None,
        },
        residual_autocorrelation: lag1_autocorrelation(&resid),
        residuals: resid,
        window: window_descriptor(curve, model.window),
        active_bounds: Vec::new(),
        iterations: 0,
        warnings,
    })
}

/// Second step: bounded nonlinear fit of the full source model with
/// `V_offs` fixed to the seed, gain and noise within ±50% of the seed.
pub fn fit_full(curve: &NoiseCurve, model: &FitModel, seed: &FitResult) -> Result<FitResult> {
    let v_offs = model.fixed.v_offs.unwrap_or(seed.v_offs);
    let curve = &windowed(curve, model.window, v_offs)?;
    let second_stage = model.second_stage_term()?;
    let problem = CurveModel::new(curve, model, v_offs)?;
    if curve.len() < problem.n_params() + 1 {
        return Err(Error::WindowTooNarrow {
            half_width: model.window.unwrap_or(f64::INFINITY),
            points: curve.len(),
            required: problem.n_params() + 1,
        });
    }

    let g0 = seed.g_sys;
    let n0 = seed.noise;
    let half = (0.5 * n0.abs()).max(model.noise_bound_floor);
    let mut p0 = vec![g0, n0];
    let mut bounds = vec![Bound::new(0.5 * g0, 1.5 * g0), Bound::new(n0 - half, n0 + half)];
    let mut scales = vec![g0.abs(), half];
    if problem.t_e_is_free() {
        let t0 = seed.t_e.or(model.t_e_guess).unwrap_or(0.05).max(1e-4);
        p0.push(t0);
        bounds.push(Bound::lower(0.0));
        scales.push(t0);
    }
    let opts = LsqOptions {
        scales: Some(scales),
        ..LsqOptions::default()
    };
    let report = least_squares(&problem, &p0, &bounds, &opts)?;

    let names = ["g_sys", "noise", "t_e"];
    let active: Vec<String> = report
        .active_bounds
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(j, _)| names[j].to_string())
        .collect();
    let mut warnings = seed.warnings.clone();
    if !active.is_empty() {
        warnings.push(format!("parameters at a bound: {}", active.join(", ")));
    }
    let insensitive: Vec<&str> = (0..report.params.len())
        .filter(|&j| report.insensitive[j] && !report.active_bounds[j])
        .map(|j| names[j])
        .collect();
    if !insensitive.is_empty() {
        warnings.push(format!("parameters not determined by the data: {}", insensitive.join(", ")));
    }
    let noise = report.params[1];
    let t_e_free = problem.t_e_is_free();
    let t_e = if t_e_free {
        Some(report.params[2])
    } else {
        problem.t_e_fixed.filter(|_| curve.source_kind == SourceKind::Sntj)
    };
    Ok(FitResult {
        model: model.kind,
        stage: FitStage::Full,
        frequency_hz: curve.frequency.hertz(),
        g_sys: report.params[0],
        noise,
        n_sys: n_sys_from_noise(model.kind, noise, second_stage),
        v_offs,
        t_e,
        t_e_fixed: !t_e_free,
        standard_errors: StandardErrors {
            g_sys: report.standard_errors[0],
            noise: report.standard_errors[1],
            v_offs: None,
            t_e: t_e_free.then(|| report.standard_errors[2]),
        },
        residual_autocorrelation: lag1_autocorrelation(&report.residuals),
        residuals: report.residuals,
        window: window_descriptor(curve, model.window),
        active_bounds: active,
        iterations: report.iterations,
        warnings,
    })
}

/// Asymptotic seed followed by the full fit.
pub fn fit_two_step(curve: &NoiseCurve, model: &FitModel) -> Result<FitResult> {
    let seed = fit_asymptotes(curve, model)?;
    fit_full(curve, model, &seed)
}

/// Two-input fit of `N_out/λ(V)` with the second-stage term
/// `Ñ₂/(G̃₁λ(V))` held fixed.
pub fn fit_saturation_corrected(
    curve: &NoiseCurve,
    compression: &CompressionCurve,
    n2_tilde: f64,
    g1_small_signal: f64,
    base: &FitModel,
) -> Result<FitResult> {
    crate::error::ensure_positive("small-signal gain", g1_small_signal)?;
    crate::error::ensure_non_negative("second-stage noise", n2_tilde)?;
    let curve = curve.clone().with_compression(compression)?;
    let mut model = base.clone();
    model.kind = ModelKind::TwoInputSaturated;
    model.fixed.n2_over_g1 = Some(n2_tilde / g1_small_signal);
    fit_two_step(&curve, &model)
}

/// One two-step fit per symmetric window half-width (ascending).
pub fn fit_window_sweep(curve: &NoiseCurve, model: &FitModel, widths: &[f64]) -> Result<Vec<FitResult>> {
    if widths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("window widths must be strictly ascending".into()));
    }
    let center = model.fixed.v_offs.unwrap_or(0.0);
    widths
        .iter()
        .map(|&w| {
            let points = curve.window_indices(Some(w), center).len();
            if points < MIN_WINDOW_POINTS {
                return Err(Error::WindowTooNarrow {
                    half_width: w,
                    points,
                    required: MIN_WINDOW_POINTS,
                });
            }
            fit_two_step(curve, &model.clone().with_window(Some(w)))
        })
        .collect()
}
