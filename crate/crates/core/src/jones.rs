//! Jones-calculus elements with a fixed basis convention.
//!
//! Kets are written in the `(H, V)` basis. Circular states follow
//! `L = (H + iV)/√2`, `R = (H − iV)/√2`. A retarder with fast axis at `θ`
//! and retardance `δ` is `R(θ)·diag(1, e^{iδ})·R(−θ)`, so a half-wave plate
//! is the real reflection `[[cos2θ, sin2θ], [sin2θ, −cos2θ]]`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{self, LocalOperator, Projection, StateVector, SubsystemLabel};

pub type Ket = [C64; 2];

const fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

const fn im(x: f64) -> C64 {
    C64::new(0.0, x)
}

/// Phase picked up on reflection at either polarizing beam splitter.
pub const PBS_REFLECTION_PHASE: C64 = im(-1.0);

pub fn h() -> Ket {
    [re(1.0), re(0.0)]
}

pub fn v() -> Ket {
    [re(0.0), re(1.0)]
}

pub fn plus() -> Ket {
    [re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2)]
}

pub fn minus() -> Ket {
    [re(FRAC_1_SQRT_2), re(-FRAC_1_SQRT_2)]
}

pub fn left() -> Ket {
    [re(FRAC_1_SQRT_2), im(FRAC_1_SQRT_2)]
}

pub fn right() -> Ket {
    [re(FRAC_1_SQRT_2), im(-FRAC_1_SQRT_2)]
}

pub fn ket_inner(a: &Ket, b: &Ket) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

pub fn ket_norm(a: &Ket) -> f64 {
    (a[0].norm_sqr() + a[1].norm_sqr()).sqrt()
}

pub fn apply_jones(m: &Matrix2<C64>, k: &Ket) -> Ket {
    [m[(0, 0)] * k[0] + m[(0, 1)] * k[1], m[(1, 0)] * k[0] + m[(1, 1)] * k[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlateKind {
    Half,
    Quarter,
}

impl PlateKind {
    pub fn retardance(self) -> f64 {
        match self {
            PlateKind::Half => PI,
            PlateKind::Quarter => FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePlate {
    pub kind: PlateKind,
    /// Fast-axis angle from horizontal, radians.
    pub fast_axis: f64,
}

impl WavePlate {
    pub fn half(fast_axis: f64) -> Self {
        WavePlate {
            kind: PlateKind::Half,
            fast_axis,
        }
    }

    pub fn quarter(fast_axis: f64) -> Self {
        WavePlate {
            kind: PlateKind::Quarter,
            fast_axis,
        }
    }

    pub fn matrix(&self) -> Matrix2<C64> {
        jones_matrix(self)
    }

    pub fn operator(&self, label: SubsystemLabel) -> LocalOperator {
        LocalOperator::new(vec![label], to_dmatrix(&self.matrix()), true)
            .expect("wave plates are unitary 2x2 matrices")
    }
}

fn rotation(theta: f64) -> Matrix2<C64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(re(c), re(-s), re(s), re(c))
}

/// Jones matrix of a retarder in the module's convention.
pub fn jones_matrix(plate: &WavePlate) -> Matrix2<C64> {
    let delta = plate.kind.retardance();
    let core = Matrix2::new(re(1.0), re(0.0), re(0.0), C64::from_polar(1.0, delta));
    let mut m = rotation(plate.fast_axis) * core * rotation(-plate.fast_axis);
    // Clean the exact zeros that trigonometry leaves as ~1e-17.
    for z in m.iter_mut() {
        if z.re.abs() < 1e-15 {
            z.re = 0.0;
        }
        if z.im.abs() < 1e-15 {
            z.im = 0.0;
        }
    }
    m
}

pub(crate) fn to_dmatrix(m: &Matrix2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Half-wave-plate angles and arm phase of the polarization-sensitive
/// Mach-Zehnder interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachZehnderSettings {
    pub gamma1: f64,
    pub gamma2: f64,
    pub path_phase: f64,
}

impl MachZehnderSettings {
    /// Angles are reduced to `[0, π)` and the arm phase to `[0, 2π)`; a
    /// half-wave plate is unchanged by a π rotation.
    pub fn new(gamma1: f64, gamma2: f64, path_phase: f64) -> Self {
        MachZehnderSettings {
            gamma1: gamma1.rem_euclid(PI),
            gamma2: gamma2.rem_euclid(PI),
            path_phase: path_phase.rem_euclid(TAU),
        }
    }

    pub fn from_degrees(gamma1: f64, gamma2: f64) -> Self {
        Self::new(gamma1.to_radians(), gamma2.to_radians(), 0.0)
    }

    /// Settings whose port 1 behaves like the original port 2.
    pub fn complementary(&self) -> Self {
        Self::new(
            PI / 4.0 - self.gamma1,
            PI / 4.0 - self.gamma2,
            self.path_phase,
        )
    }
}

/// Polarizing beam splitter on `(IdlPort, IdlPol)`: H keeps its port, V
/// changes port and picks up [`PBS_REFLECTION_PHASE`].
pub fn polarizing_beam_splitter() -> DMatrix<C64> {
    let r = PBS_REFLECTION_PHASE;
    let z = re(0.0);
    let o = re(1.0);
    // Index = port * 2 + pol.
    DMatrix::from_row_slice(
        4,
        4,
        &[
            o, z, z, z, //
            z, z, z, r, //
            z, z, o, z, //
            z, r, z, z,
        ],
    )
}

/// Which interferometer arms let light through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmMask {
    pub arm1: bool,
    pub arm2: bool,
}

impl ArmMask {
    pub const OPEN: ArmMask = ArmMask {
        arm1: true,
        arm2: true,
    };
}

fn interferometer_matrix(settings: &MachZehnderSettings, arms: ArmMask) -> DMatrix<C64> {
    let hwp1 = jones_matrix(&WavePlate::half(settings.gamma1))
        * C64::from_polar(1.0, settings.path_phase);
    let hwp2 = jones_matrix(&WavePlate::half(settings.gamma2));
    let mut middle = DMatrix::zeros(4, 4);
    if arms.arm1 {
        middle.view_mut((0, 0), (2, 2)).copy_from(&to_dmatrix(&hwp1));
    }
    if arms.arm2 {
        middle.view_mut((2, 2), (2, 2)).copy_from(&to_dmatrix(&hwp2));
    }
    let pbs = polarizing_beam_splitter();
    &pbs * middle * &pbs
}

/// Full interferometer `U_I` on `(IdlPort, IdlPol)`. Light enters on port
/// index 0 (port 1); arm 1 carries the transmitted H light, HWP(γ₁) and the
/// phase shifter, arm 2 the reflected V light and HWP(γ₂).
pub fn mach_zehnder(settings: &MachZehnderSettings) -> LocalOperator {
    LocalOperator::new(
        vec![SubsystemLabel::IdlPort, SubsystemLabel::IdlPol],
        interferometer_matrix(settings, ArmMask::OPEN),
        true,
    )
    .expect("composition of unitaries")
}

/// Interferometer with one or both arms blocked (no longer unitary).
pub fn mach_zehnder_blocked(settings: &MachZehnderSettings, arms: ArmMask) -> LocalOperator {
    LocalOperator::new(
        vec![SubsystemLabel::IdlPort, SubsystemLabel::IdlPol],
        interferometer_matrix(settings, arms),
        arms == ArmMask::OPEN,
    )
    .expect("4x4 operator on two qubit-sized subsystems")
}

/// Ideal linear/elliptical polarizer transmitting `ket`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarizer {
    ket: Ket,
}

pub fn polarizer(ket: Ket) -> Result<Polarizer> {
    let n = ket_norm(&ket);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(Polarizer {
        ket: [ket[0] / n, ket[1] / n],
    })
}

impl Polarizer {
    pub fn ket(&self) -> Ket {
        self.ket
    }

    /// Rank-one projector `|k⟩⟨k|`.
    pub fn matrix(&self) -> Matrix2<C64> {
        let k = self.ket;
        Matrix2::new(
            k[0] * k[0].conj(),
            k[0] * k[1].conj(),
            k[1] * k[0].conj(),
            k[1] * k[1].conj(),
        )
    }

    pub fn measure(&self, state: &StateVector, label: SubsystemLabel) -> Result<Projection> {
        state::project(state, label, &self.ket)
    }
}
