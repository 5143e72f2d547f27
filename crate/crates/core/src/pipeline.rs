//! The eraser experiment assembled stage by stage: entangled source, slit
//! phase, birefringent double slit, circular projection of the signal, and
//! the which-path-marker interferometer on the idler.
//!
//! Every stage is available twice: as a full state evolution over
//! `(SLIT, SIG_POL, IDL_PORT, IDL_POL)` and as the closed-form port
//! probabilities and inner products. The two routes are checked against
//! each other in the tests.
//!
//! The slit modes are taken as orthogonal, so the normalisations of the
//! marked and port-conditioned states carry no overlap terms.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jones::{self, Ket, MachZehnderSettings, WavePlate};
use crate::state::{
    self, LocalOperator, Projection, StateVector, SubsystemLabel, DEFAULT_OUTCOME_THRESHOLD,
};

use SubsystemLabel::{IdlPol, IdlPort, SigPol, Slit};

/// Label order used for every pipeline state.
pub const CANONICAL_ORDER: [SubsystemLabel; 4] = [Slit, SigPol, IdlPort, IdlPol];

const SOURCE_NORM_TOLERANCE: f64 = 1e-12;

/// Source coefficients of `a|HH⟩ + b|VV⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePolarization {
    a: C64,
    b: C64,
}

impl SourcePolarization {
    /// Requires `|a|² + |b|² = 1` within 1e-12.
    pub fn new(a: C64, b: C64) -> Result<Self> {
        let n = a.norm_sqr() + b.norm_sqr();
        if (n - 1.0).abs() > SOURCE_NORM_TOLERANCE {
            return Err(Error::invalid(
                "source",
                format!("|a|² + |b|² = {n} is not 1"),
            ));
        }
        Ok(SourcePolarization { a, b })
    }

    /// Rescales `(a, b)` to unit norm, keeping their ratio.
    pub fn normalized(a: C64, b: C64) -> Result<Self> {
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(SourcePolarization { a: a / n, b: b / n })
    }

    pub fn from_real(a: f64, b: f64) -> Result<Self> {
        Self::normalized(C64::new(a, 0.0), C64::new(b, 0.0))
    }

    pub fn maximally_entangled() -> Self {
        SourcePolarization {
            a: C64::new(FRAC_1_SQRT_2, 0.0),
            b: C64::new(FRAC_1_SQRT_2, 0.0),
        }
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn b(&self) -> C64 {
        self.b
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.a.norm_sqr(), self.b.norm_sqr())
    }

    pub fn wpm_states(&self) -> WpmStates {
        WpmStates {
            alpha_plus: [self.a, self.b],
            alpha_minus: [self.a, -self.b],
        }
    }
}

/// The idler which-path-marker states `|α±⟩ = a|H⟩ ± b|V⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WpmStates {
    pub alpha_plus: Ket,
    pub alpha_minus: Ket,
}

impl WpmStates {
    pub fn overlap(&self) -> C64 {
        jones::ket_inner(&self.alpha_plus, &self.alpha_minus)
    }

    /// Symmetric combination `(|α₊⟩ + |α₋⟩)/√2`, unnormalised.
    pub fn symmetric(&self) -> Ket {
        [
            (self.alpha_plus[0] + self.alpha_minus[0]) * FRAC_1_SQRT_2,
            (self.alpha_plus[1] + self.alpha_minus[1]) * FRAC_1_SQRT_2,
        ]
    }

    /// Antisymmetric combination `(|α₊⟩ − |α₋⟩)/√2`, unnormalised.
    pub fn antisymmetric(&self) -> Ket {
        [
            (self.alpha_plus[0] - self.alpha_minus[0]) * FRAC_1_SQRT_2,
            (self.alpha_plus[1] - self.alpha_minus[1]) * FRAC_1_SQRT_2,
        ]
    }
}

/// Relative phase between the two slit paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitPhase(f64);

impl SlitPhase {
    pub fn new(phi: f64) -> Self {
        SlitPhase(phi.rem_euclid(TAU))
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    pub fn radians(&self) -> f64 {
        self.0
    }
}

/// Interferometer output port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    One,
    Two,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::One, Port::Two];

    pub fn number(self) -> u8 {
        match self {
            Port::One => 1,
            Port::Two => 2,
        }
    }

    pub fn ket(self) -> Ket {
        match self {
            Port::One => jones::h(),
            Port::Two => jones::v(),
        }
    }
}

/// Entangled source state with the slit superposition, idler on input port 1.
pub fn build_source(pol: &SourcePolarization, phi: SlitPhase) -> StateVector {
    let slit = [
        C64::new(FRAC_1_SQRT_2, 0.0),
        C64::from_polar(FRAC_1_SQRT_2, phi.radians()),
    ];
    let mut amps = nalgebra::DVector::zeros(16);
    // index = slit*8 + sig*4 + port*2 + idl
    for (s, cs) in slit.iter().enumerate() {
        amps[s * 8] = cs * pol.a; // |H⟩_s |1⟩ |H⟩_i
        amps[s * 8 + 4 + 1] = cs * pol.b; // |V⟩_s |1⟩ |V⟩_i
    }
    StateVector::new(CANONICAL_ORDER.to_vec(), amps).expect("16 amplitudes over four qubits")
}

/// Slit-conditioned quarter-wave plates on `(Slit, SigPol)`.
///
/// One slit carries a plate with its fast axis along H, the other along V;
/// `swap` exchanges them. Each plate's matrix is referenced to unit phase on
/// its H component, so any common retardation difference between the slits
/// is part of the slit phase `φ`.
pub fn slit_plate_operator(swap: bool) -> LocalOperator {
    let mut axes = [0.0, PI / 2.0];
    if swap {
        axes.swap(0, 1);
    }
    let mut m = DMatrix::zeros(4, 4);
    for (slit, axis) in axes.iter().enumerate() {
        let j = WavePlate::quarter(*axis).matrix();
        let reference = j[(0, 0)] / j[(0, 0)].norm();
        let j = j / reference;
        m.view_mut((2 * slit, 2 * slit), (2, 2))
            .copy_from(&jones::to_dmatrix(&j));
    }
    LocalOperator::new(vec![Slit, SigPol], m, true).expect("block-diagonal unitary")
}

pub fn apply_birefringent_slit(state: &StateVector, swap: bool) -> Result<StateVector> {
    state::apply(&slit_plate_operator(swap), state)
}

/// Projects the signal polarization onto `L`.
pub fn project_l(state: &StateVector) -> Result<Projection> {
    state::project(state, SigPol, &jones::left())
}

/// The marked state: slit path entangled with the idler polarization only.
pub fn marked_state(pol: &SourcePolarization, phi: SlitPhase, swap: bool) -> Result<Projection> {
    let s = build_source(pol, phi);
    let s = apply_birefringent_slit(&s, swap)?;
    project_l(&s)
}

pub fn pass_interferometer(state: &StateVector, settings: &MachZehnderSettings) -> Result<StateVector> {
    state::apply(&jones::mach_zehnder(settings), state)
}

/// Conditions on the idler leaving through `port`.
pub fn condition_on_port(state: &StateVector, port: Port) -> Result<Projection> {
    state::project(state, IdlPort, &port.ket())
}

/// Off-diagonal slit coherence `ρ₁₂` of the signal photon.
pub fn slit_coherence(state: &StateVector) -> Result<C64> {
    Ok(state::reduce(state, &[Slit])?.element(0, 1))
}

/// `⟨α₊|α₋⟩ = |a|² − |b|²`.
pub fn alpha_inner(pol: &SourcePolarization) -> f64 {
    let (a2, b2) = pol.weights();
    a2 - b2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortProbabilities {
    pub n1: f64,
    pub n2: f64,
}

impl PortProbabilities {
    pub fn get(&self, port: Port) -> f64 {
        match port {
            Port::One => self.n1,
            Port::Two => self.n2,
        }
    }
}

pub fn port_probabilities(pol: &SourcePolarization, s: &MachZehnderSettings) -> PortProbabilities {
    let (a2, b2) = pol.weights();
    let (c1, c2) = ((2.0 * s.gamma1).cos(), (2.0 * s.gamma2).cos());
    let (s1, s2) = ((2.0 * s.gamma1).sin(), (2.0 * s.gamma2).sin());
    PortProbabilities {
        n1: a2 * c1 * c1 + b2 * c2 * c2,
        n2: a2 * s1 * s1 + b2 * s2 * s2,
    }
}

/// `N₁·α⁽¹⁾` and `N₂·α⁽²⁾`, well defined even when a port is dark.
pub fn port_numerators(pol: &SourcePolarization, s: &MachZehnderSettings) -> (f64, f64) {
    let (a2, b2) = pol.weights();
    let (c1, c2) = ((2.0 * s.gamma1).cos(), (2.0 * s.gamma2).cos());
    let (s1, s2) = ((2.0 * s.gamma1).sin(), (2.0 * s.gamma2).sin());
    (a2 * c1 * c1 - b2 * c2 * c2, a2 * s1 * s1 - b2 * s2 * s2)
}

fn port1_inner(pol: &SourcePolarization, gamma1: f64, gamma2: f64) -> Option<f64> {
    let (a2, b2) = pol.weights();
    let x = a2 * (2.0 * gamma1).cos().powi(2);
    let y = b2 * (2.0 * gamma2).cos().powi(2);
    let n = x + y;
    (n >= DEFAULT_OUTCOME_THRESHOLD).then(|| (x - y) / n)
}

/// Inner products of the marker states conditioned on each port; `None`
/// when that port is never reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortInnerProducts {
    pub port1: Option<f64>,
    pub port2: Option<f64>,
}

impl PortInnerProducts {
    pub fn get(&self, port: Port) -> Option<f64> {
        match port {
            Port::One => self.port1,
            Port::Two => self.port2,
        }
    }
}

pub fn port_inner_products(pol: &SourcePolarization, s: &MachZehnderSettings) -> PortInnerProducts {
    PortInnerProducts {
        port1: port1_inner(pol, s.gamma1, s.gamma2),
        port2: port1_inner(pol, FRAC_PI_4 - s.gamma1, FRAC_PI_4 - s.gamma2),
    }
}

/// Like [`port_inner_products`] for a single port, failing on a dark port.
pub fn port_inner_product(pol: &SourcePolarization, s: &MachZehnderSettings, port: Port) -> Result<f64> {
    port_inner_products(pol, s)
        .get(port)
        .ok_or(Error::UndefinedInnerProduct {
            port: port.number(),
            probability: port_probabilities(pol, s).get(port),
        })
}

/// `N₁α⁽¹⁾ + N₂α⁽²⁾ − α`.
pub fn conservation_check(pol: &SourcePolarization, s: &MachZehnderSettings) -> f64 {
    let (w1, w2) = port_numerators(pol, s);
    w1 + w2 - alpha_inner(pol)
}

/// Setting of HWP1 that makes the port-1 marker states orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    /// Radians in `[0, π/4]`.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Probability of a conclusive (port-1) outcome.
    pub success_probability: f64,
    /// The marker states were already orthogonal.
    pub already_orthogonal: bool,
    /// Port 1 is dark at this setting, e.g. `b = 0` where the marker
    /// states coincide and there is nothing to discriminate.
    pub degenerate: bool,
}

/// Solves `cos²(2γ₁) = |b|² cos²(2γ₂) / |a|²` for `γ₁ ∈ [0, π/4]`.
pub fn discrimination_angles(pol: &SourcePolarization, gamma2: f64) -> Result<Discrimination> {
    let (a2, b2) = pol.weights();
    let c2 = (2.0 * gamma2).cos().powi(2);
    let rhs = b2 * c2;
    if rhs > a2 * (1.0 + 1e-12) || a2 == 0.0 {
        return Err(Error::Unsolvable(format!(
            "|b|²cos²(2γ₂) = {rhs:.6} exceeds |a|² = {a2:.6}"
        )));
    }
    let ratio = (rhs / a2).min(1.0);
    let gamma1 = 0.5 * ratio.sqrt().acos();
    let settings = MachZehnderSettings::new(gamma1, gamma2, 0.0);
    let n1 = port_probabilities(pol, &settings).n1;
    Ok(Discrimination {
        gamma1,
        gamma2: settings.gamma2,
        success_probability: n1,
        already_orthogonal: alpha_inner(pol).abs() < 1e-12,
        degenerate: n1 < DEFAULT_OUTCOME_THRESHOLD,
    })
}

/// Result of projecting the idler polarization of a marked state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Erasure {
    pub weight: f64,
    /// `ρ₁₂` of the conditional signal slit state.
    pub coherence: C64,
}

pub fn erasure_projection(state: &StateVector, ket: &Ket) -> Result<Erasure> {
    let p = state::project(state, IdlPol, ket)?;
    Ok(Erasure {
        weight: p.probability,
        coherence: slit_coherence(&p.state)?,
    })
}

/// Port statistics extracted from the full state evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolvedPorts {
    pub n1: f64,
    pub n2: f64,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    /// `ρ₁₂` of the signal with the idler traced out entirely.
    pub unconditioned_coherence: C64,
}

/// Runs the whole chain through the state engine and reads off the port
/// probabilities and the conditional inner products from slit coherences.
pub fn evolve_ports(
    pol: &SourcePolarization,
    settings: &MachZehnderSettings,
    phi: SlitPhase,
) -> Result<EvolvedPorts> {
    let marked = marked_state(pol, phi, false)?;
    let out = pass_interferometer(&marked.state, settings)?;
    let rotate = C64::from_polar(2.0, phi.radians());
    let mut n = [0.0; 2];
    let mut alpha = [None; 2];
    for (k, port) in Port::BOTH.into_iter().enumerate() {
        match condition_on_port(&out, port) {
            Ok(p) => {
                n[k] = p.probability;
                alpha[k] = Some((slit_coherence(&p.state)? * rotate).re);
            }
            Err(Error::ImpossibleOutcome { probability, .. }) => n[k] = probability,
            Err(e) => return Err(e),
        }
    }
    Ok(EvolvedPorts {
        n1: n[0],
        n2: n[1],
        alpha1: alpha[0],
        alpha2: alpha[1],
        unconditioned_coherence: slit_coherence(&out)?,
    })
}
