//! Fitting of `A·sinc²(klx/z)·[1 + V·cos(kdx/z + φ₀)]` to sampled patterns and
//! the inner-product bookkeeping across interferometer ports.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::{self, Write as _};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::counts::CountRecord;
use crate::error::{Error, Result};
use crate::pattern::{wrap_phase, SlitGeometry};

pub const MIN_BINS: usize = 10;
/// Fits below this visibility report no phase.
pub const PHASE_VISIBILITY_FLOOR: f64 = 0.05;
/// Soft upper bound on the visibility during optimisation.
pub const VISIBILITY_CEILING: f64 = 1.2;
const GRADIENT_TOLERANCE: f64 = 1e-9;
const STEP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights `1/max(y, 1)`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Fit coincidences after removing the flat background.
    pub subtract_background: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            weighting: Weighting::Unweighted,
            max_iterations: 500,
            subtract_background: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainties {
    pub normalization: f64,
    pub visibility: f64,
    pub phase_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub normalization: f64,
    /// Non-negative, at most 1; see `visibility_clipped`.
    pub visibility: f64,
    /// Absent when the visibility is too small to fix a phase.
    pub phase_offset: Option<f64>,
    pub residual_norm: f64,
    pub uncertainties: FitUncertainties,
    pub converged: bool,
    pub iterations: usize,
    pub visibility_clipped: bool,
    /// Visibility at the optimum before clipping.
    pub raw_visibility: f64,
    /// Phase at the optimum, kept even when unidentifiable.
    pub raw_phase: f64,
    pub diagnostics: Option<String>,
}

impl FitResult {
    /// `V·sign` where the sign compares the fitted phase with `reference`.
    pub fn signed_visibility(&self, reference: f64) -> f64 {
        self.visibility * phase_sign(self.phase_offset, reference)
    }
}

/// `+1` if `phase` lies within a quarter turn of `reference`, else `−1`.
/// An absent phase counts as `+1`.
pub fn phase_sign(phase: Option<f64>, reference: f64) -> f64 {
    match phase {
        Some(p) if (p - reference).cos() < 0.0 => -1.0,
        _ => 1.0,
    }
}

struct Problem<'a> {
    env: Vec<f64>,
    theta: Vec<f64>,
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, p: &Vector3<f64>) -> Vec<f64> {
        (0..self.y.len())
            .map(|i| self.y[i] - p[0] * self.env[i] * (1.0 + p[1] * (self.theta[i] + p[2]).cos()))
            .collect()
    }

    fn cost(&self, p: &Vector3<f64>) -> f64 {
        self.residuals(p)
            .iter()
            .zip(&self.w)
            .map(|(r, w)| w * r * r)
            .sum()
    }

    /// `(JᵀWJ, JᵀWr)` with `J` the Jacobian of the model.
    fn normal_equations(&self, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        let r = self.residuals(p);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for i in 0..self.y.len() {
            let (s, c) = (self.theta[i] + p[2]).sin_cos();
            let e = self.env[i];
            let j = Vector3::new(e * (1.0 + p[1] * c), p[0] * e * c, -p[0] * e * p[1] * s);
            jtj += self.w[i] * j * j.transpose();
            jtr += self.w[i] * r[i] * j;
        }
        (jtj, jtr)
    }

    /// Heteroscedasticity-consistent covariance `B⁻¹·M·B⁻¹·n/(n−3)` with
    /// `B = JᵀWJ` and `M = Σ w²r²·j·jᵀ`. Bin variances differ widely across
    /// the envelope, so a single residual variance would misstate errors.
    fn covariance(&self, p: &Vector3<f64>) -> Option<Matrix3<f64>> {
        let r = self.residuals(p);
        let mut bread = Matrix3::zeros();
        let mut meat = Matrix3::zeros();
        for i in 0..self.y.len() {
            let (s, c) = (self.theta[i] + p[2]).sin_cos();
            let e = self.env[i];
            let j = Vector3::new(e * (1.0 + p[1] * c), p[0] * e * c, -p[0] * e * p[1] * s);
            let jj = j * j.transpose();
            bread += self.w[i] * jj;
            meat += (self.w[i] * r[i]).powi(2) * jj;
        }
        let n = self.y.len() as f64;
        let inv = bread.try_inverse()?;
        Some(inv * meat * inv * (n / (n - 3.0)))
    }
}

fn fold(mut p: Vector3<f64>) -> Vector3<f64> {
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] += PI;
    }
    p[1] = p[1].min(VISIBILITY_CEILING);
    p[2] = wrap_phase(p[2]);
    p
}

struct Run {
    p: Vector3<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(prob: &Problem, start: Vector3<f64>, max_iterations: usize) -> Run {
    let mut p = fold(start);
    let mut cost = prob.cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let (jtj, jtr) = prob.normal_equations(&p);
        if jtr.norm() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = fold(p + step);
            let trial_cost = prob.cost(&trial);
            if trial_cost <= cost {
                let small = step.norm() < STEP_TOLERANCE * (1.0 + p.norm());
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: we sit at a minimum to
            // within floating-point resolution.
            converged = true;
        }
        if converged {
            break;
        }
    }
    Run {
        p,
        cost,
        iterations,
        converged,
    }
}

/// Fits the pattern family to samples `(x_i, y_i)` with the geometry fixed.
pub fn fit_samples(
    positions: &[f64],
    values: &[f64],
    geom: &SlitGeometry,
    options: &FitOptions,
) -> Result<FitResult> {
    geom.validate()?;
    if positions.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: positions.len(),
            found: values.len(),
        });
    }
    if positions.len() < MIN_BINS {
        return Err(Error::Fit(format!(
            "need at least {MIN_BINS} bins, got {}",
            positions.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Fit("all samples are zero".into()));
    }
    let y: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let w = match options.weighting {
        Weighting::Unweighted => vec![1.0; y.len()],
        Weighting::Poisson => values.iter().map(|v| 1.0 / v.max(1.0)).collect(),
    };
    let prob = Problem {
        env: positions.iter().map(|&x| geom.envelope(x)).collect(),
        theta: positions.iter().map(|&x| geom.fringe_arg(x)).collect(),
        y: &y,
        w,
    };
    let see: f64 = prob.env.iter().zip(&prob.w).map(|(e, w)| w * e * e).sum();
    if see == 0.0 {
        return Err(Error::Fit("samples lie on envelope zeros only".into()));
    }
    let a0 = prob
        .env
        .iter()
        .zip(prob.y.iter())
        .zip(&prob.w)
        .map(|((e, y), w)| w * e * y)
        .sum::<f64>()
        / see;

    let best = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]
        .iter()
        .map(|&phi| levenberg_marquardt(&prob, Vector3::new(a0, 0.5, phi), options.max_iterations))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("four starts");

    let cov = prob.covariance(&best.p);
    let sd = |k: usize| cov.map(|c| c[(k, k)].max(0.0).sqrt()).unwrap_or(f64::NAN);

    let raw_v = best.p[1];
    let visibility = raw_v.min(1.0);
    let identifiable = visibility >= PHASE_VISIBILITY_FLOOR;
    let mut notes = Vec::new();
    if !best.converged {
        notes.push(format!("no convergence after {} iterations", best.iterations));
    }
    if cov.is_none() {
        notes.push("singular normal matrix; uncertainties unavailable".to_string());
    }
    if !identifiable {
        notes.push(format!("visibility below {PHASE_VISIBILITY_FLOOR}; phase unidentifiable"));
    }
    let residual_norm = (best.cost.max(0.0)).sqrt() * scale;
    Ok(FitResult {
        normalization: best.p[0] * scale,
        visibility,
        phase_offset: identifiable.then_some(best.p[2]),
        residual_norm,
        uncertainties: FitUncertainties {
            normalization: sd(0) * scale,
            visibility: sd(1),
            phase_offset: identifiable.then(|| sd(2)),
        },
        converged: best.converged,
        iterations: best.iterations,
        visibility_clipped: raw_v > 1.0,
        raw_visibility: raw_v,
        raw_phase: best.p[2],
        diagnostics: (!notes.is_empty()).then(|| notes.join("; ")),
    })
}

/// Fits the coincidences of a count record.
pub fn fit_pattern(record: &CountRecord, geom: &SlitGeometry, options: &FitOptions) -> Result<FitResult> {
    let y = if options.subtract_background {
        record.background_subtracted()
    } else {
        record.coincidences_f64()
    };
    fit_samples(&record.positions, &y, geom, options)
}

/// Visibility from envelope-corrected fringe extrema near the centre.
///
/// Samples where the envelope exceeds a fifth of its peak are divided by the
/// envelope; each local extremum is refined by the cosine through it and its
/// two neighbours, and the mean maximum and minimum give `(max−min)/(max+min)`.
pub fn visibility_extrema(positions: &[f64], values: &[f64], geom: &SlitGeometry) -> Result<f64> {
    geom.validate()?;
    if positions.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: positions.len(),
            found: values.len(),
        });
    }
    let central: Vec<(f64, f64)> = positions
        .iter()
        .zip(values)
        .filter(|(x, _)| geom.envelope(**x) > 0.2)
        .map(|(&x, &v)| (geom.fringe_arg(x), v / geom.envelope(x)))
        .collect();
    let span = central.last().map_or(0.0, |l| l.0) - central.first().map_or(0.0, |f| f.0);
    if central.len() < 3 || span < 2.0 * PI {
        return Err(Error::Fit("samples span less than one fringe period".into()));
    }
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    for w in central.windows(3) {
        let (a, b, c) = (w[0].1, w[1].1, w[2].1);
        let is_max = b >= a && b >= c;
        let is_min = b <= a && b <= c;
        if !(is_max || is_min) {
            continue;
        }
        let m = Matrix3::from_fn(|i, j| match j {
            0 => 1.0,
            1 => w[i].0.cos(),
            _ => w[i].0.sin(),
        });
        let Some(coef) = m.try_inverse().map(|inv| inv * Vector3::new(a, b, c)) else {
            continue;
        };
        let amp = coef[1].hypot(coef[2]);
        if is_max {
            maxima.push(coef[0] + amp);
        }
        if is_min {
            minima.push(coef[0] - amp);
        }
    }
    if maxima.is_empty() || minima.is_empty() {
        return Err(Error::Fit("no fringe extrema found".into()));
    }
    let imax = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let imin = minima.iter().sum::<f64>() / minima.len() as f64;
    if imax + imin <= 0.0 {
        return Err(Error::Fit("non-positive fringe intensities".into()));
    }
    Ok(((imax - imin) / (imax + imin)).clamp(0.0, 1.0))
}

/// Quantities measured at one interferometer output port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortMeasurement {
    pub probability: f64,
    pub probability_sigma: f64,
    pub visibility: f64,
    pub visibility_sigma: f64,
    pub phase: Option<f64>,
}

impl PortMeasurement {
    pub fn from_fit(fit: &FitResult, probability: f64, probability_sigma: f64) -> Self {
        PortMeasurement {
            probability,
            probability_sigma,
            visibility: fit.visibility,
            visibility_sigma: fit.uncertainties.visibility,
            phase: fit.phase_offset,
        }
    }

    /// Exact values without uncertainty.
    pub fn exact(probability: f64, visibility: f64, phase: f64) -> Self {
        PortMeasurement {
            probability,
            probability_sigma: 0.0,
            visibility,
            visibility_sigma: 0.0,
            phase: Some(phase),
        }
    }
}

/// Port-1 share estimated from coincidence totals, with its binomial error.
pub fn port_share(port1_total: f64, port2_total: f64) -> Result<(f64, f64)> {
    let total = port1_total + port2_total;
    if !(total > 0.0) || port1_total < 0.0 || port2_total < 0.0 {
        return Err(Error::Fit("port totals must be non-negative with a positive sum".into()));
    }
    let n1 = port1_total / total;
    Ok((n1, (n1 * (1.0 - n1) / total).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationInput {
    pub gamma1: f64,
    /// Phase that marks a positive inner product (the slit phase `φ`).
    pub reference_phase: f64,
    pub port1: Option<PortMeasurement>,
    pub port2: Option<PortMeasurement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub gamma1_degrees: f64,
    pub n1: Option<f64>,
    pub v1: Option<f64>,
    pub sign1: Option<f64>,
    pub n2: Option<f64>,
    pub v2: Option<f64>,
    pub sign2: Option<f64>,
    /// `N₁·sign₁·V₁ + N₂·sign₂·V₂` over the ports present.
    pub alpha: f64,
    pub uncertainty: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub rows: Vec<ConservationRow>,
}

pub fn conservation_table(inputs: &[ConservationInput]) -> ConservationReport {
    let rows = inputs
        .iter()
        .map(|inp| {
            let s1 = inp.port1.map(|m| phase_sign(m.phase, inp.reference_phase));
            let s2 = inp.port2.map(|m| phase_sign(m.phase, inp.reference_phase));
            let term = |m: Option<PortMeasurement>, s: Option<f64>| {
                m.zip(s).map_or(0.0, |(m, s)| m.probability * s * m.visibility)
            };
            let alpha = term(inp.port1, s1) + term(inp.port2, s2);
            let uncertainty = match (inp.port1, inp.port2) {
                (Some(p1), Some(p2)) => {
                    // Shares are anticorrelated: N₂ = 1 − N₁.
                    let d = s1.unwrap() * p1.visibility - s2.unwrap() * p2.visibility;
                    (d * d * p1.probability_sigma.powi(2)
                        + (p1.probability * p1.visibility_sigma).powi(2)
                        + (p2.probability * p2.visibility_sigma).powi(2))
                    .sqrt()
                }
                (Some(p), None) | (None, Some(p)) => ((p.visibility * p.probability_sigma).powi(2)
                    + (p.probability * p.visibility_sigma).powi(2))
                .sqrt(),
                (None, None) => f64::NAN,
            };
            ConservationRow {
                gamma1_degrees: inp.gamma1.to_degrees(),
                n1: inp.port1.map(|m| m.probability),
                v1: inp.port1.map(|m| m.visibility),
                sign1: s1,
                n2: inp.port2.map(|m| m.probability),
                v2: inp.port2.map(|m| m.visibility),
                sign2: s2,
                alpha,
                uncertainty,
                partial: inp.port1.is_none() || inp.port2.is_none(),
            }
        })
        .collect();
    ConservationReport { rows }
}

impl ConservationReport {
    pub fn alphas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.alpha).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let cell = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        writeln!(w, "gamma1_deg,n1,v1,sign1,n2,v2,sign2,alpha,uncertainty,partial")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.gamma1_degrees,
                cell(r.n1),
                cell(r.v1),
                cell(r.sign1),
                cell(r.n2),
                cell(r.v2),
                cell(r.sign2),
                r.alpha,
                r.uncertainty,
                r.partial
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ConservationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let sign = |v: Option<f64>| match v {
            Some(s) if s < 0.0 => "-".to_string(),
            Some(_) => "+".to_string(),
            None => "-".to_string(),
        };
        let mut out = String::new();
        writeln!(
            out,
            "{:>10} {:>8} {:>8} {:>5} {:>8} {:>8} {:>5} {:>8} {:>8}",
            "gamma1", "N1", "V1", "sign1", "N2", "V2", "sign2", "alpha", "sigma"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{:>10.2} {:>8} {:>8} {:>5} {:>8} {:>8} {:>5} {:>8.4} {:>8.4}{}",
                r.gamma1_degrees,
                cell(r.n1),
                cell(r.v1),
                sign(r.sign1),
                cell(r.n2),
                cell(r.v2),
                sign(r.sign2),
                r.alpha,
                r.uncertainty,
                if r.partial { "  partial" } else { "" }
            )?;
        }
        f.write_str(&out)
    }
}
