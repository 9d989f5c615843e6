//! Bounded damped Gauss-Newton (Levenberg-Marquardt) least squares.
//!
//! Bounds are enforced by reparameterization: two-sided bounds through a
//! sine map, one-sided through a square-root map. Steps are solved by SVD of
//! the augmented system so near-singular Jacobians degrade gracefully.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const FREE: Bound = Bound {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn lower(lo: f64) -> Self {
        Self { lo, hi: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn to_internal(self, p: f64) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => (2.0 * (p - self.lo) / (self.hi - self.lo) - 1.0).clamp(-1.0, 1.0).asin(),
            (true, false) => ((p - self.lo + 1.0).powi(2) - 1.0).max(0.0).sqrt(),
            (false, true) => ((self.hi - p + 1.0).powi(2) - 1.0).max(0.0).sqrt(),
            (false, false) => p,
        }
    }

    fn to_external(self, u: f64) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => self.lo + 0.5 * (self.hi - self.lo) * (1.0 + u.sin()),
            (true, false) => self.lo - 1.0 + (u * u + 1.0).sqrt(),
            (false, true) => self.hi + 1.0 - (u * u + 1.0).sqrt(),
            (false, false) => u,
        }
    }

    /// `dp/du`.
    fn derivative(self, u: f64) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.hi - self.lo) * u.cos(),
            (true, false) => u / (u * u + 1.0).sqrt(),
            (false, true) => -u / (u * u + 1.0).sqrt(),
            (false, false) => 1.0,
        }
    }

    fn is_active(self, p: f64) -> bool {
        let width = if self.lo.is_finite() && self.hi.is_finite() {
            self.hi - self.lo
        } else {
            p.abs().max(1.0)
        };
        (self.lo.is_finite() && p - self.lo <= 1e-6 * width) || (self.hi.is_finite() && self.hi - p <= 1e-6 * width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    /// Column-normalized Jacobian condition above which the fit is singular.
    pub max_condition: f64,
    /// Per-parameter magnitude used to scale finite-difference steps and the
    /// relative-step test; defaults to the initial values.
    pub scales: Option<Vec<f64>>,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-12,
            max_condition: 1e14,
            scales: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqReport {
    pub params: Vec<f64>,
    /// Row-major covariance `s²(JᵀJ)⁻¹` over the parameters that are neither
    /// at a bound nor insensitive; rows and columns of the others are zero.
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    /// Cost after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub active_bounds: Vec<bool>,
    /// Parameters whose Jacobian column vanishes at the solution.
    pub insensitive: Vec<bool>,
    pub condition: f64,
    pub converged: bool,
}

/// A residual function with an optional analytic Jacobian.
pub trait Problem {
    fn residuals(&self, params: &[f64]) -> Vec<f64>;

    /// Analytic Jacobian `∂r_i/∂p_j`, or `None` for finite differences.
    fn jacobian(&self, _params: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> Problem for F {
    fn residuals(&self, params: &[f64]) -> Vec<f64> {
        self(params)
    }
}

/// Central-difference Jacobian, falling back to one-sided differences at a
/// bound.
pub fn finite_difference_jacobian<P: Problem + ?Sized>(problem: &P, p: &[f64], bounds: &[Bound], scales: &[f64]) -> DMatrix<f64> {
    let r0 = problem.residuals(p);
    let m = r0.len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut x = p.to_vec();
    for j in 0..n {
        let h = 6e-6 * p[j].abs().max(scales[j]);
        let b = bounds.get(j).copied().unwrap_or(Bound::FREE);
        let up_ok = b.contains(p[j] + h);
        let down_ok = b.contains(p[j] - h);
        let (plus, minus, denom) = match (up_ok, down_ok) {
            (true, true) => (p[j] + h, p[j] - h, 2.0 * h),
            (true, false) => (p[j] + h, p[j], h),
            (false, true) => (p[j], p[j] - h, h),
            (false, false) => (p[j], p[j], 1.0),
        };
        x[j] = plus;
        let rp = if plus == p[j] { r0.clone() } else { problem.residuals(&x) };
        x[j] = minus;
        let rm = if minus == p[j] { r0.clone() } else { problem.residuals(&x) };
        x[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / denom;
        }
    }
    jac
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|x| x.is_finite())
}

/// Condition number of `J` after scaling each column to unit norm.
pub fn column_normalized_condition(jac: &DMatrix<f64>) -> f64 {
    let mut j = jac.clone();
    for mut col in j.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = j.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimizes `½Σr²` from `p0` subject to `bounds`.
pub fn least_squares<P: Problem + ?Sized>(problem: &P, p0: &[f64], bounds: &[Bound], opts: &LsqOptions) -> Result<LsqReport> {
    let n = p0.len();
    if bounds.len() != n {
        return Err(Error::Precondition(format!("{} bounds for {n} parameters", bounds.len())));
    }
    for (i, (&p, b)) in p0.iter().zip(bounds).enumerate() {
        if !p.is_finite() || !b.contains(p) || b.lo > b.hi {
            return Err(Error::Precondition(format!(
                "initial parameter {i} = {p} is not finite or outside [{}, {}]",
                b.lo, b.hi
            )));
        }
    }
    let scales: Vec<f64> = match &opts.scales {
        Some(s) if s.len() == n => s.iter().map(|x| x.abs().max(f64::MIN_POSITIVE)).collect(),
        _ => p0.iter().map(|x| x.abs().max(1e-8)).collect(),
    };

    let to_external = |u: &DVector<f64>| -> Vec<f64> { (0..n).map(|j| bounds[j].to_external(u[j])).collect() };
    let jacobian_at = |p: &[f64]| -> DMatrix<f64> {
        problem
            .jacobian(p)
            .unwrap_or_else(|| finite_difference_jacobian(problem, p, bounds, &scales))
    };

    let mut u = DVector::from_iterator(n, p0.iter().zip(bounds).map(|(&p, b)| b.to_internal(p)));
    let mut p = to_external(&u);
    let mut r = problem.residuals(&p);
    if !all_finite(&r) {
        return Err(Error::Precondition("residuals are not finite at the initial parameters".into()));
    }
    let m = r.len();
    if m < n {
        return Err(Error::Precondition(format!("{m} residuals cannot determine {n} parameters")));
    }
    let mut cost = half_sq(&r);
    let mut history = vec![cost];
    let mut lambda = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jp = jacobian_at(&p);
        let mut ju = jp.clone();
        for j in 0..n {
            let d = bounds[j].derivative(u[j]);
            ju.column_mut(j).scale_mut(d);
        }
        let rv = DVector::from_vec(r.clone());
        let diag: Vec<f64> = (0..n).map(|j| ju.column(j).norm_squared().max(1e-300)).collect();

        let mut accepted = false;
        let mut tiny_step = false;
        loop {
            let mut a = DMatrix::zeros(m + n, n);
            a.view_mut((0, 0), (m, n)).copy_from(&ju);
            if lambda > 0.0 {
                for j in 0..n {
                    a[(m + j, j)] = (lambda * diag[j]).sqrt();
                }
            }
            let mut b = DVector::zeros(m + n);
            b.rows_mut(0, m).copy_from(&(-&rv));
            let svd = a.svd(true, true);
            let tol = svd.singular_values.max() * 1e-15 * (m + n) as f64;
            let delta = match svd.solve(&b, tol) {
                Ok(d) => d,
                Err(_) => return Err(Error::Singular { condition: f64::INFINITY }),
            };
            let u_new = &u + &delta;
            let p_new = to_external(&u_new);
            let r_new = problem.residuals(&p_new);
            let cost_new = if all_finite(&r_new) { half_sq(&r_new) } else { f64::INFINITY };

            let rel_step = (0..n)
                .map(|j| (p_new[j] - p[j]).abs() / p[j].abs().max(scales[j]))
                .fold(0.0, f64::max);

            if cost_new <= cost {
                let rel_cost = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                u = u_new;
                p = p_new;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                lambda = if lambda < 1e-7 { 0.0 } else { lambda / 10.0 };
                accepted = true;
                if rel_step < opts.step_tolerance || rel_cost < opts.cost_tolerance {
                    converged = true;
                }
                break;
            }
            if rel_step < opts.step_tolerance {
                tiny_step = true;
                break;
            }
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            if lambda > 1e16 {
                tiny_step = true;
                break;
            }
        }
        if converged || (!accepted && tiny_step) {
            converged = true;
            break;
        }
    }

    // parameters at a bound or without influence are held fixed for the statistics
    let active: Vec<bool> = (0..n).map(|j| bounds[j].is_active(p[j])).collect();
    let jfull = jacobian_at(&p);
    let influence: Vec<f64> = (0..n).map(|j| jfull.column(j).norm() * scales[j]).collect();
    let max_influence = influence.iter().copied().fold(0.0, f64::max);
    let insensitive: Vec<bool> = influence.iter().map(|&x| !(x > 1e-10 * max_influence)).collect();
    let free: Vec<usize> = (0..n).filter(|&j| !active[j] && !insensitive[j]).collect();
    let jp = jfull.select_columns(&free);
    let condition = if free.is_empty() { 1.0 } else { column_normalized_condition(&jp) };
    let dof = m.saturating_sub(free.len()).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let free_cov = covariance_from_jacobian(&jp, s2);
    let mut covariance = vec![vec![0.0; n]; n];
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            covariance[i][j] = free_cov[a][b];
        }
    }
    let report = LsqReport {
        standard_errors: (0..n).map(|j| covariance[j][j].max(0.0).sqrt()).collect(),
        active_bounds: active,
        insensitive,
        params: p,
        covariance,
        residuals: r,
        cost,
        cost_history: history,
        iterations,
        condition,
        converged,
    };
    if !condition.is_finite() || condition > opts.max_condition {
        return Err(Error::Singular { condition });
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            last: Box::new(report),
        });
    }
    Ok(report)
}

fn covariance_from_jacobian(jac: &DMatrix<f64>, s2: f64) -> Vec<Vec<f64>> {
    let n = jac.ncols();
    // scale columns first so the pseudo-inverse threshold is meaningful
    let norms: Vec<f64> = (0..n).map(|j| jac.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    let mut js = jac.clone();
    for (j, &norm) in norms.iter().enumerate() {
        js.column_mut(j).unscale_mut(norm);
    }
    let jtj = js.transpose() * &js;
    let inv = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-300).ok())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    (0..n)
        .map(|i| (0..n).map(|j| s2 * inv[(i, j)] / (norms[i] * norms[j])).collect())
        .collect()
}
