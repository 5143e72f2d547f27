//! Far-field double-slit detection probability built from the signal's
//! slit-basis coherence.
//!
//! With slit modes `ψ_j(x) ∝ sinc(klx/z)·e^{∓ikdx/2z}`, a slit density
//! matrix `ρ` gives `I(x) = A·sinc²(klx/z)·[1 + V·cos(kdx/z + φ₀)]` where
//! `V = 2|ρ₁₂|` and `φ₀ = −arg ρ₁₂`.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jones::{self, Ket, MachZehnderSettings};
use crate::pipeline::{
    self, PortProbabilities, SlitPhase, SourcePolarization,
};
use crate::state::{DensityMatrix, StateVector, SubsystemLabel};

const PHYSICAL_TOLERANCE: f64 = 1e-10;
/// Below this coherence magnitude the fringe phase carries no information.
const PHASE_FLOOR: f64 = 1e-14;

/// Reduces a phase to `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU - 1e-15 {
        0.0
    } else {
        r
    }
}

pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitGeometry {
    /// Slit half width `l`, meters.
    pub half_width: f64,
    /// Centre-to-centre separation `d`, meters.
    pub separation: f64,
    /// Wavenumber `k`, 1/m.
    pub wavenumber: f64,
    /// Slit-to-detector distance `z`, meters.
    pub distance: f64,
}

impl SlitGeometry {
    pub fn new(half_width: f64, separation: f64, wavenumber: f64, distance: f64) -> Result<Self> {
        let g = SlitGeometry {
            half_width,
            separation,
            wavenumber,
            distance,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_wavelength(half_width: f64, separation: f64, wavelength: f64, distance: f64) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(Error::invalid("wavelength", "must be positive"));
        }
        Self::new(half_width, separation, TAU / wavelength, distance)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("half_width", self.half_width),
            ("separation", self.separation),
            ("wavenumber", self.wavenumber),
            ("distance", self.distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.separation <= 2.0 * self.half_width {
            return Err(Error::invalid(
                "separation",
                format!(
                    "slits overlap: d = {} must exceed 2l = {}",
                    self.separation,
                    2.0 * self.half_width
                ),
            ));
        }
        Ok(())
    }

    /// Envelope argument `klx/z`.
    pub fn envelope_arg(&self, x: f64) -> f64 {
        self.wavenumber * self.half_width * x / self.distance
    }

    /// Fringe argument `kdx/z`.
    pub fn fringe_arg(&self, x: f64) -> f64 {
        self.wavenumber * self.separation * x / self.distance
    }

    pub fn envelope(&self, x: f64) -> f64 {
        sinc(self.envelope_arg(x)).powi(2)
    }

    pub fn fringe_period(&self) -> f64 {
        TAU * self.distance / (self.wavenumber * self.separation)
    }

    /// Position of the `n`-th envelope zero (`n ≠ 0`).
    pub fn envelope_zero(&self, n: i32) -> f64 {
        n as f64 * PI * self.distance / (self.wavenumber * self.half_width)
    }
}

/// `n` evenly spaced positions from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (min + max)],
        _ => (0..n)
            .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// ±4 mm in 201 steps.
pub fn default_grid() -> Vec<f64> {
    linspace(-4e-3, 4e-3, 201)
}

/// Analytic description `(A, V, φ₀)` of a two-slit pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub normalization: f64,
    pub visibility: f64,
    pub phase: f64,
}

impl PatternParams {
    pub fn new(normalization: f64, visibility: f64, phase: f64) -> Self {
        PatternParams {
            normalization,
            visibility,
            phase: wrap_phase(phase),
        }
    }

    /// Pattern with a signed fringe amplitude `1 + s·cos(kdx/z + φ)`.
    pub fn from_signed(normalization: f64, signed_visibility: f64, phi: f64) -> Self {
        if signed_visibility < 0.0 {
            Self::new(normalization, -signed_visibility, phi + PI)
        } else {
            Self::new(normalization, signed_visibility, phi)
        }
    }

    /// From the slit coherence of a (possibly unnormalised) density matrix
    /// with trace `normalization`.
    pub fn from_coherence(normalization: f64, rho12: C64) -> Self {
        let mag = rho12.norm();
        if normalization <= 0.0 {
            return Self::new(0.0, 0.0, 0.0);
        }
        let phase = if mag > PHASE_FLOOR { -rho12.arg() } else { 0.0 };
        Self::new(normalization, 2.0 * mag / normalization, phase)
    }

    pub fn evaluate(&self, geom: &SlitGeometry, x: f64) -> f64 {
        self.normalization
            * geom.envelope(x)
            * (1.0 + self.visibility * (geom.fringe_arg(x) + self.phase).cos())
    }

    /// Shape without the normalization.
    pub fn shape(&self, geom: &SlitGeometry, x: f64) -> f64 {
        geom.envelope(x) * (1.0 + self.visibility * (geom.fringe_arg(x) + self.phase).cos())
    }

    /// `V·cos φ₀`-style signed amplitude relative to a reference phase.
    pub fn signed_visibility(&self, reference_phase: f64) -> f64 {
        self.visibility * (self.phase - reference_phase).cos().signum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferencePattern {
    pub positions: Vec<f64>,
    pub intensities: Vec<f64>,
    pub params: PatternParams,
    pub geometry: SlitGeometry,
}

impl InterferencePattern {
    pub fn sample(params: PatternParams, geometry: SlitGeometry, positions: &[f64]) -> Self {
        let intensities = positions.iter().map(|&x| params.evaluate(&geometry, x)).collect();
        InterferencePattern {
            positions: positions.to_vec(),
            intensities,
            params,
            geometry,
        }
    }

    pub fn visibility(&self) -> f64 {
        self.params.visibility
    }

    /// Same pattern with the visibility and phase replaced.
    pub fn with_fringe(&self, visibility: f64, phase: f64) -> Self {
        let params = PatternParams::new(self.params.normalization, visibility, phase);
        Self::sample(params, self.geometry, &self.positions)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let params = PatternParams::new(
            self.params.normalization * factor,
            self.params.visibility,
            self.params.phase,
        );
        Self::sample(params, self.geometry, &self.positions)
    }

    /// `x_m,intensity` rows with a header, LF line endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x_m,intensity")?;
        for (x, i) in self.positions.iter().zip(&self.intensities) {
            writeln!(w, "{x},{i}")?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> PatternSidecar {
        PatternSidecar {
            normalization: self.params.normalization,
            visibility: self.params.visibility,
            phase_offset: self.params.phase,
            geometry: self.geometry,
        }
    }
}

/// JSON companion of a pattern CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSidecar {
    pub normalization: f64,
    pub visibility: f64,
    pub phase_offset: f64,
    pub geometry: SlitGeometry,
}

/// Pattern produced by a 2×2 slit density matrix.
pub fn pattern_from_coherence(
    rho: &DensityMatrix,
    geom: &SlitGeometry,
    grid: &[f64],
) -> Result<InterferencePattern> {
    if rho.matrix().nrows() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: rho.matrix().nrows(),
        });
    }
    geom.validate()?;
    rho.validate(PHYSICAL_TOLERANCE)?;
    let params = PatternParams::from_coherence(rho.trace().re, rho.element(0, 1));
    Ok(InterferencePattern::sample(params, *geom, grid))
}

/// Pattern of the signal with everything but the slit traced out.
pub fn pattern_from_state(
    state: &StateVector,
    geom: &SlitGeometry,
    grid: &[f64],
) -> Result<InterferencePattern> {
    let rho = crate::state::reduce(state, &[SubsystemLabel::Slit])?;
    pattern_from_coherence(&rho, geom, grid)
}

/// Port-conditioned patterns, each with unit normalization, plus the
/// unconditioned pattern from the full state evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPatterns {
    pub port1: Option<InterferencePattern>,
    pub port2: Option<InterferencePattern>,
    pub probabilities: PortProbabilities,
    pub unconditioned: InterferencePattern,
}

impl ConditionalPatterns {
    /// Largest pointwise `|N₁I₁ + N₂I₂ − I|`.
    pub fn sum_rule_residual(&self) -> f64 {
        let p = &self.probabilities;
        (0..self.unconditioned.positions.len())
            .map(|i| {
                let mut s = 0.0;
                if let Some(q) = &self.port1 {
                    s += p.n1 * q.intensities[i];
                }
                if let Some(q) = &self.port2 {
                    s += p.n2 * q.intensities[i];
                }
                (s - self.unconditioned.intensities[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn conditional_patterns(
    pol: &SourcePolarization,
    settings: &MachZehnderSettings,
    phi: SlitPhase,
    geom: &SlitGeometry,
    grid: &[f64],
) -> Result<ConditionalPatterns> {
    geom.validate()?;
    let probabilities = pipeline::port_probabilities(pol, settings);
    let inner = pipeline::port_inner_products(pol, settings);
    let make = |alpha: Option<f64>| {
        alpha.map(|a| {
            InterferencePattern::sample(PatternParams::from_signed(1.0, a, phi.radians()), *geom, grid)
        })
    };
    let marked = pipeline::marked_state(pol, phi, false)?;
    let unconditioned = pattern_from_state(&marked.state, geom, grid)?;
    Ok(ConditionalPatterns {
        port1: make(inner.port1),
        port2: make(inner.port2),
        probabilities,
        unconditioned,
    })
}

/// Orthonormal pair of idler-polarization kets used for erasure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorPair {
    pub first: Ket,
    pub second: Ket,
}

impl ProjectorPair {
    pub fn new(first: Ket, second: Ket) -> Result<Self> {
        let n1 = jones::ket_norm(&first);
        let n2 = jones::ket_norm(&second);
        if n1 == 0.0 || n2 == 0.0 {
            return Err(Error::ZeroVector);
        }
        let first = [first[0] / n1, first[1] / n1];
        let second = [second[0] / n2, second[1] / n2];
        if jones::ket_inner(&first, &second).norm() > 1e-10 {
            return Err(Error::invalid("projector_pair", "kets are not orthogonal"));
        }
        Ok(ProjectorPair { first, second })
    }

    /// `(|H⟩, |V⟩)`.
    pub fn horizontal_vertical() -> Self {
        ProjectorPair {
            first: jones::h(),
            second: jones::v(),
        }
    }

    /// `(|V⟩, |H⟩)`: fringes first at `φ = π`.
    pub fn vertical_horizontal() -> Self {
        ProjectorPair {
            first: jones::v(),
            second: jones::h(),
        }
    }

    /// Symmetric and antisymmetric combinations of the marker states.
    pub fn marker_symmetric(pol: &SourcePolarization) -> Result<Self> {
        let w = pol.wpm_states();
        Self::new(w.symmetric(), w.antisymmetric())
    }

    pub fn kets(&self) -> [Ket; 2] {
        [self.first, self.second]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPattern {
    pub weight: f64,
    /// Unit-normalization conditional pattern; absent for a null outcome.
    pub pattern: Option<InterferencePattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasurePatterns {
    pub outcomes: [WeightedPattern; 2],
    pub unconditioned: InterferencePattern,
}

impl ErasurePatterns {
    pub fn sum_rule_residual(&self) -> f64 {
        (0..self.unconditioned.positions.len())
            .map(|i| {
                let s: f64 = self
                    .outcomes
                    .iter()
                    .filter_map(|o| o.pattern.as_ref().map(|p| o.weight * p.intensities[i]))
                    .sum();
                (s - self.unconditioned.intensities[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Idler-polarization projections of an arbitrary marked (or port-conditioned) state.
pub fn erasure_patterns(
    state: &StateVector,
    geom: &SlitGeometry,
    grid: &[f64],
    pair: &ProjectorPair,
) -> Result<ErasurePatterns> {
    geom.validate()?;
    let unconditioned = pattern_from_state(state, geom, grid)?;
    let mut outcomes = Vec::with_capacity(2);
    for ket in pair.kets() {
        let out = match pipeline::erasure_projection(state, &ket) {
            Ok(e) => WeightedPattern {
                weight: e.weight,
                pattern: Some(InterferencePattern::sample(
                    PatternParams::from_coherence(1.0, e.coherence),
                    *geom,
                    grid,
                )),
            },
            Err(Error::ImpossibleOutcome { probability, .. }) => WeightedPattern {
                weight: probability,
                pattern: None,
            },
            Err(e) => return Err(e),
        };
        outcomes.push(out);
    }
    let [a, b]: [WeightedPattern; 2] = outcomes.try_into().expect("two outcomes");
    Ok(ErasurePatterns {
        outcomes: [a, b],
        unconditioned,
    })
}

/// Fringe/antifringe pair on the marked state (interferometer at identity).
pub fn fringe_antifringe(
    pol: &SourcePolarization,
    phi: SlitPhase,
    geom: &SlitGeometry,
    grid: &[f64],
    pair: &ProjectorPair,
) -> Result<ErasurePatterns> {
    let marked = pipeline::marked_state(pol, phi, false)?;
    erasure_patterns(&marked.state, geom, grid, pair)
}

/// Erasure of the marker leaving a given interferometer port.
pub fn fringe_antifringe_at_port(
    pol: &SourcePolarization,
    settings: &MachZehnderSettings,
    port: pipeline::Port,
    phi: SlitPhase,
    geom: &SlitGeometry,
    grid: &[f64],
    pair: &ProjectorPair,
) -> Result<ErasurePatterns> {
    let marked = pipeline::marked_state(pol, phi, false)?;
    let out = pipeline::pass_interferometer(&marked.state, settings)?;
    let conditioned = pipeline::condition_on_port(&out, port)?;
    erasure_patterns(&conditioned.state, geom, grid, pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn geom() -> SlitGeometry {
        SlitGeometry::from_wavelength(40e-6, 280e-6, 351.1e-9, 0.2).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn slit_rho(r11: f64, r12: C64) -> DensityMatrix {
        let m = DMatrix::from_row_slice(2, 2, &[c(r11, 0.), r12, r12.conj(), c(1.0 - r11, 0.)]);
        DensityMatrix::new(vec![SubsystemLabel::Slit], m).unwrap()
    }

    #[test]
    fn sinc_at_zero() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(PI)).abs() < 1e-16);
    }

    #[test]
    fn geometry_rejects_overlapping_slits() {
        assert!(SlitGeometry::new(200e-6, 280e-6, 1e7, 0.2).is_err());
        assert!(SlitGeometry::new(-1.0, 280e-6, 1e7, 0.2).is_err());
    }

    #[test]
    fn maximally_mixed_slit_gives_bare_envelope() {
        let g = geom();
        let grid = default_grid();
        let p = pattern_from_coherence(&slit_rho(0.5, c(0., 0.)), &g, &grid).unwrap();
        assert_eq!(p.params.visibility, 0.0);
        for (x, i) in p.positions.iter().zip(&p.intensities) {
            assert!((i - g.envelope(*x)).abs() < 1e-15);
        }
    }

    #[test]
    fn full_coherence_reproduces_two_slit_pattern() {
        let g = geom();
        let grid = default_grid();
        let p = pattern_from_coherence(&slit_rho(0.5, c(0.5, 0.)), &g, &grid).unwrap();
        assert!((p.params.visibility - 1.0).abs() < 1e-15);
        for (x, i) in p.positions.iter().zip(&p.intensities) {
            let expected = sinc(g.envelope_arg(*x)).powi(2) * (1.0 + g.fringe_arg(*x).cos());
            assert!((i - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn marked_state_pattern_visibility_is_alpha() {
        let pol = SourcePolarization::from_real(0.92, 0.38).unwrap();
        let m = pipeline::marked_state(&pol, SlitPhase::new(0.0), false).unwrap();
        let p = pattern_from_state(&m.state, &geom(), &default_grid()).unwrap();
        assert!((p.params.visibility - pipeline::alpha_inner(&pol)).abs() < 1e-14);
        assert!((p.params.visibility - 0.70).abs() < 0.01);
    }

    #[test]
    fn non_physical_rho_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.9, 0.), c(0.9, 0.), c(0.5, 0.)]);
        let rho = DensityMatrix::new(vec![SubsystemLabel::Slit], m).unwrap();
        assert!(matches!(
            pattern_from_coherence(&rho, &geom(), &default_grid()),
            Err(Error::NonPhysical(_))
        ));
    }

    #[test]
    fn fig2_conditional_examples() {
        let pol = SourcePolarization::maximally_entangled();
        let phi = SlitPhase::new(PI);
        let cp = conditional_patterns(&pol, &MachZehnderSettings::from_degrees(0.0, 0.0), phi, &geom(), &default_grid())
            .unwrap();
        assert!(cp.port1.as_ref().unwrap().visibility() < 1e-15);
        assert!(cp.port2.is_none());
        let cp = conditional_patterns(&pol, &MachZehnderSettings::from_degrees(45.0, 0.0), phi, &geom(), &default_grid())
            .unwrap();
        assert!((cp.port1.as_ref().unwrap().visibility() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn port2_at_equal_angles_keeps_alpha() {
        let pol = SourcePolarization::from_real(0.92, 0.38).unwrap();
        let cp = conditional_patterns(
            &pol,
            &MachZehnderSettings::from_degrees(20.0, 20.0),
            SlitPhase::new(PI),
            &geom(),
            &default_grid(),
        )
        .unwrap();
        let v2 = cp.port2.unwrap().visibility();
        assert!((v2 - pipeline::alpha_inner(&pol)).abs() < 1e-12);
    }

    #[test]
    fn fringe_antifringe_max_entangled_phi_pi() {
        let pol = SourcePolarization::maximally_entangled();
        let g = geom();
        let e = fringe_antifringe(&pol, SlitPhase::new(PI), &g, &default_grid(), &ProjectorPair::vertical_horizontal())
            .unwrap();
        let [fr, af] = &e.outcomes;
        assert!((fr.weight - 0.5).abs() < 1e-14 && (af.weight - 0.5).abs() < 1e-14);
        let (fp, ap) = (fr.pattern.as_ref().unwrap(), af.pattern.as_ref().unwrap());
        assert!((fp.visibility() - 1.0).abs() < 1e-12 && (ap.visibility() - 1.0).abs() < 1e-12);
        // V-projection gives a bright centre (fringe), H a dark one.
        assert!(fp.params.phase.abs() < 1e-12);
        assert!((ap.params.phase - PI).abs() < 1e-12);
        assert!(e.sum_rule_residual() < 1e-12);
    }

    #[test]
    fn fringe_antifringe_weights_follow_source() {
        let pol = SourcePolarization::from_real(0.92, 0.38).unwrap();
        let (a2, b2) = pol.weights();
        let e = fringe_antifringe(&pol, SlitPhase::new(PI), &geom(), &default_grid(), &ProjectorPair::horizontal_vertical())
            .unwrap();
        assert!((e.outcomes[0].weight - a2).abs() < 1e-14);
        assert!((e.outcomes[1].weight - b2).abs() < 1e-14);
        // 0.92²/0.9908 and 0.38²/0.9908
        assert!((e.outcomes[0].weight - 0.8543).abs() < 1e-3);
        assert!((e.outcomes[1].weight - 0.1457).abs() < 1e-3);
    }

    #[test]
    fn marker_basis_equals_hv_for_equal_weights() {
        let pol = SourcePolarization::maximally_entangled();
        let g = geom();
        let grid = default_grid();
        let a = fringe_antifringe(&pol, SlitPhase::new(PI), &g, &grid, &ProjectorPair::marker_symmetric(&pol).unwrap())
            .unwrap();
        let b = fringe_antifringe(&pol, SlitPhase::new(PI), &g, &grid, &ProjectorPair::horizontal_vertical()).unwrap();
        for k in 0..2 {
            let (pa, pb) = (a.outcomes[k].pattern.as_ref().unwrap(), b.outcomes[k].pattern.as_ref().unwrap());
            for (x, y) in pa.intensities.iter().zip(&pb.intensities) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_orthogonal_pair_rejected() {
        assert!(ProjectorPair::new(jones::h(), jones::plus()).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = InterferencePattern::sample(PatternParams::new(1.0, 0.5, 0.0), geom(), &[0.0, 1e-3]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x_m,intensity"));
        assert_eq!(lines.next(), Some("0,1.5"));
        assert!(!text.contains('\r'));
    }

    proptest! {
        #[test]
        fn sum_rule_holds(
            t in 0.0f64..1.0, g1 in 0.0..PI, g2 in 0.0..PI, phi in 0.0..TAU,
        ) {
            let (s, c) = (t * PI / 2.0).sin_cos();
            let pol = SourcePolarization::from_real(c, s).unwrap();
            let grid = linspace(-4e-3, 4e-3, 512);
            let cp = conditional_patterns(&pol, &MachZehnderSettings::new(g1, g2, 0.0), SlitPhase::new(phi), &geom(), &grid).unwrap();
            prop_assert!(cp.sum_rule_residual() < 1e-10);
        }

        #[test]
        fn envelope_zeros_independent_of_polarization(
            t in 0.0f64..1.0, g1 in 0.0..PI, n in 1i32..4,
        ) {
            let (s, c) = (t * PI / 2.0).sin_cos();
            let pol = SourcePolarization::from_real(c, s).unwrap();
            let g = geom();
            let x = g.envelope_zero(n);
            let cp = conditional_patterns(&pol, &MachZehnderSettings::new(g1, 0.3, 0.0), SlitPhase::new(1.0), &g, &[x, -x]).unwrap();
            for p in [cp.port1, cp.port2].into_iter().flatten() {
                prop_assert!(p.intensities.iter().all(|i| i.abs() < 1e-25));
            }
        }

        #[test]
        fn patterns_are_non_negative(v in 0.0f64..=1.0, ph in 0.0..TAU) {
            let p = InterferencePattern::sample(PatternParams::new(1.0, v, ph), geom(), &linspace(-4e-3, 4e-3, 301));
            prop_assert!(p.intensities.iter().all(|&i| i >= 0.0));
        }
    }
}
