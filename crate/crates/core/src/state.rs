//! Dense state-vector machinery over a labelled tensor product of small
//! subsystems.
//!
//! Amplitudes are stored row-major over the declared label order: the last
//! label varies fastest. Every operation is a pure function returning a new
//! value.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NORM_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_OUTCOME_THRESHOLD: f64 = 1e-12;
const UNITARY_TOLERANCE: f64 = 1e-10;

/// The four two-level subsystems that make up the two-photon state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubsystemLabel {
    /// Which slit the signal photon went through.
    Slit,
    /// Signal-photon polarization.
    SigPol,
    /// Idler spatial mode: interferometer port 1 or 2.
    IdlPort,
    /// Idler polarization.
    IdlPol,
}

impl SubsystemLabel {
    pub const fn dim(self) -> usize {
        2
    }
}

/// Row-major strides for the given label order.
fn strides(labels: &[SubsystemLabel]) -> Vec<usize> {
    let mut out = vec![1; labels.len()];
    for k in (0..labels.len().saturating_sub(1)).rev() {
        out[k] = out[k + 1] * labels[k + 1].dim();
    }
    out
}

fn total_dim(labels: &[SubsystemLabel]) -> usize {
    labels.iter().map(|l| l.dim()).product()
}

fn check_unique(labels: &[SubsystemLabel]) -> Result<()> {
    let mut seen = HashSet::new();
    for &l in labels {
        if !seen.insert(l) {
            return Err(Error::DuplicateLabel(l));
        }
    }
    Ok(())
}

/// A pure state: complex amplitudes over an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    labels: Vec<SubsystemLabel>,
    amplitudes: DVector<C64>,
    norm_tolerance: f64,
}

impl StateVector {
    pub fn new(labels: Vec<SubsystemLabel>, amplitudes: DVector<C64>) -> Result<Self> {
        check_unique(&labels)?;
        let expected = total_dim(&labels);
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: amplitudes.len(),
            });
        }
        Ok(StateVector {
            labels,
            amplitudes,
            norm_tolerance: DEFAULT_NORM_TOLERANCE,
        })
    }

    /// Single-subsystem state from a ket.
    pub fn from_ket(label: SubsystemLabel, ket: &[C64]) -> Result<Self> {
        Self::new(vec![label], DVector::from_column_slice(ket))
    }

    /// Computational basis state `|indices⟩`.
    pub fn basis(labels: Vec<SubsystemLabel>, indices: &[usize]) -> Result<Self> {
        if indices.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: indices.len(),
            });
        }
        let st = strides(&labels);
        let mut flat = 0;
        for (k, (&i, l)) in indices.iter().zip(&labels).enumerate() {
            if i >= l.dim() {
                return Err(Error::DimensionMismatch {
                    expected: l.dim(),
                    found: i,
                });
            }
            flat += i * st[k];
        }
        let mut amps = DVector::zeros(total_dim(&labels));
        amps[flat] = C64::new(1.0, 0.0);
        Self::new(labels, amps)
    }

    pub fn with_norm_tolerance(mut self, tol: f64) -> Self {
        self.norm_tolerance = tol;
        self
    }

    pub fn labels(&self) -> &[SubsystemLabel] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm_tolerance(&self) -> f64 {
        self.norm_tolerance
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn position(&self, label: SubsystemLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(Error::MissingLabel(label))
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= self.norm_tolerance
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let mut out = self.clone();
        out.amplitudes.unscale_mut(n);
        Ok(out)
    }

    /// Amplitude at a multi-index given in the state's label order.
    pub fn amplitude(&self, indices: &[usize]) -> C64 {
        let st = strides(&self.labels);
        let flat: usize = indices.iter().zip(&st).map(|(i, s)| i * s).sum();
        self.amplitudes[flat]
    }

    /// `⟨self|other⟩`; both states must share the same label order.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Smallest distance `min_θ ‖self − e^{iθ} other‖` over global phases.
    pub fn phase_distance(&self, other: &StateVector) -> Result<f64> {
        let ov = self.inner(other)?.norm();
        let d2 = self.norm_squared() + other.norm_squared() - 2.0 * ov;
        Ok(d2.max(0.0).sqrt())
    }

    pub fn equals_up_to_phase(&self, other: &StateVector, tol: f64) -> bool {
        self.phase_distance(other).map(|d| d <= tol).unwrap_or(false)
    }

    /// Same state with its subsystems permuted into `order`.
    pub fn reorder(&self, order: &[SubsystemLabel]) -> Result<Self> {
        check_unique(order)?;
        if order.len() != self.labels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.labels.len(),
                found: order.len(),
            });
        }
        let src_pos = order
            .iter()
            .map(|&l| self.position(l))
            .collect::<Result<Vec<_>>>()?;
        let src_strides = strides(&self.labels);
        let dst_strides = strides(order);
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for flat in 0..n {
            let mut src = 0;
            for (k, &p) in src_pos.iter().enumerate() {
                let digit = (flat / dst_strides[k]) % order[k].dim();
                src += digit * src_strides[p];
            }
            out[flat] = self.amplitudes[src];
        }
        Ok(StateVector {
            labels: order.to_vec(),
            amplitudes: out,
            norm_tolerance: self.norm_tolerance,
        })
    }
}

/// Kronecker product of the given states in the order supplied.
pub fn tensor(states: &[StateVector]) -> Result<StateVector> {
    let mut labels = Vec::new();
    let mut amps = DVector::from_element(1, C64::new(1.0, 0.0));
    for s in states {
        labels.extend_from_slice(&s.labels);
        amps = amps.kronecker(&s.amplitudes);
    }
    if labels.is_empty() {
        return Err(Error::EmptyKeep);
    }
    StateVector::new(labels, amps)
}

/// Matrix acting on a subset of subsystems, indexed row-major over `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    targets: Vec<SubsystemLabel>,
    matrix: DMatrix<C64>,
    unitary: bool,
}

impl LocalOperator {
    pub fn new(targets: Vec<SubsystemLabel>, matrix: DMatrix<C64>, unitary: bool) -> Result<Self> {
        check_unique(&targets)?;
        let d = total_dim(&targets);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        let op = LocalOperator {
            targets,
            matrix,
            unitary,
        };
        if unitary {
            let dev = op.unitarity_deviation();
            if dev > UNITARY_TOLERANCE {
                return Err(Error::NotUnitary { deviation: dev });
            }
        }
        Ok(op)
    }

    pub fn identity(targets: Vec<SubsystemLabel>) -> Result<Self> {
        let d = total_dim(&targets);
        Self::new(targets, DMatrix::identity(d, d), true)
    }

    pub fn targets(&self) -> &[SubsystemLabel] {
        &self.targets
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    /// Max-entry deviation of `U†U` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.matrix.nrows();
        let prod = self.matrix.adjoint() * &self.matrix;
        (prod - DMatrix::<C64>::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        LocalOperator {
            targets: self.targets.clone(),
            matrix: self.matrix.adjoint(),
            unitary: self.unitary,
        }
    }
}

/// Applies `op` to the matching factors of `state`.
pub fn apply(op: &LocalOperator, state: &StateVector) -> Result<StateVector> {
    let pos = op
        .targets
        .iter()
        .map(|&l| state.position(l))
        .collect::<Result<Vec<_>>>()?;
    let st = strides(&state.labels);
    let op_st = strides(&op.targets);
    let d = op.matrix.nrows();
    let n = state.dim();

    // Offsets of each target basis index relative to a base index whose target digits are zero.
    let offsets: Vec<usize> = (0..d)
        .map(|t| {
            op.targets
                .iter()
                .enumerate()
                .map(|(k, l)| ((t / op_st[k]) % l.dim()) * st[pos[k]])
                .sum()
        })
        .collect();

    let mut out = DVector::zeros(n);
    let mut gathered = vec![C64::new(0.0, 0.0); d];
    for base in 0..n {
        if pos
            .iter()
            .any(|&p| !(base / st[p]).is_multiple_of(state.labels[p].dim()))
        {
            continue;
        }
        for (g, off) in gathered.iter_mut().zip(&offsets) {
            *g = state.amplitudes[base + off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (c, g) in gathered.iter().enumerate() {
                acc += op.matrix[(r, c)] * g;
            }
            out[base + off] = acc;
        }
    }
    Ok(StateVector {
        labels: state.labels.clone(),
        amplitudes: out,
        norm_tolerance: state.norm_tolerance,
    })
}

/// Outcome of a projective measurement on one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub probability: f64,
    pub state: StateVector,
}

/// Projects `label` onto `ket` with the default impossible-outcome threshold.
pub fn project(state: &StateVector, label: SubsystemLabel, ket: &[C64]) -> Result<Projection> {
    project_with_threshold(state, label, ket, DEFAULT_OUTCOME_THRESHOLD)
}

pub fn project_with_threshold(
    state: &StateVector,
    label: SubsystemLabel,
    ket: &[C64],
    threshold: f64,
) -> Result<Projection> {
    if ket.len() != label.dim() {
        return Err(Error::DimensionMismatch {
            expected: label.dim(),
            found: ket.len(),
        });
    }
    let k = DVector::from_column_slice(ket);
    let kn = k.norm();
    if kn == 0.0 {
        return Err(Error::ZeroVector);
    }
    let k = k.unscale(kn);
    let projector = &k * k.adjoint();
    let op = LocalOperator::new(vec![label], projector, false)?;
    let unnormalized = apply(&op, state)?;
    let probability = unnormalized.norm_squared() / state.norm_squared();
    if probability < threshold {
        return Err(Error::ImpossibleOutcome {
            probability,
            threshold,
        });
    }
    Ok(Projection {
        probability,
        state: unnormalized.normalize()?,
    })
}

/// Reduced density matrix on `keep`, indexed row-major in the order of `keep`.
pub fn reduce(state: &StateVector, keep: &[SubsystemLabel]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    check_unique(keep)?;
    let mut order = keep.to_vec();
    for &l in state.labels() {
        if !keep.contains(&l) {
            order.push(l);
        }
    }
    let psi = state.reorder(&order)?;
    let dk = total_dim(keep);
    let dr = psi.dim() / dk;
    // Columns index the kept subsystems, rows the traced ones.
    let m = DMatrix::from_fn(dk, dr, |i, j| psi.amplitudes[i * dr + j]);
    let rho = &m * m.adjoint();
    let tr = psi.norm_squared();
    Ok(DensityMatrix {
        labels: keep.to_vec(),
        matrix: rho.unscale(tr),
    })
}

/// Mixed state on an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    labels: Vec<SubsystemLabel>,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(labels: Vec<SubsystemLabel>, matrix: DMatrix<C64>) -> Result<Self> {
        check_unique(&labels)?;
        let d = total_dim(&labels);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows(),
            });
        }
        Ok(DensityMatrix { labels, matrix })
    }

    pub fn labels(&self) -> &[SubsystemLabel] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Checks Hermiticity, unit trace and positivity within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let h = self.hermiticity_deviation();
        if h > tol {
            return Err(Error::NonPhysical(format!("not Hermitian (deviation {h:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::NonPhysical(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(Error::NonPhysical(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SubsystemLabel::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ket(label: SubsystemLabel, a: C64, b: C64) -> StateVector {
        StateVector::from_ket(label, &[a, b]).unwrap()
    }

    fn pauli_x(label: SubsystemLabel) -> LocalOperator {
        let m = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        LocalOperator::new(vec![label], m, true).unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = tensor(&[ket(SigPol, c(1., 0.), c(0., 0.)), ket(IdlPol, c(1., 0.), c(0., 0.))])
            .unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert_eq!(*a, c(e, 0.));
        }
    }

    #[test]
    fn tensor_is_linear_in_first_factor() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s = tensor(&[ket(SigPol, c(r, 0.), c(r, 0.)), ket(IdlPort, c(1., 0.), c(0., 0.))])
            .unwrap();
        let expected = [r, 0.0, r, 0.0];
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a - c(e, 0.)).norm() < 1e-15);
        }
        assert!(s.is_normalized());
    }

    #[test]
    fn tensor_rejects_duplicate_labels() {
        let h = ket(SigPol, c(1., 0.), c(0., 0.));
        assert_eq!(tensor(&[h.clone(), h]), Err(Error::DuplicateLabel(SigPol)));
    }

    #[test]
    fn pauli_x_flips_h_to_v() {
        let h = ket(SigPol, c(1., 0.), c(0., 0.));
        let out = apply(&pauli_x(SigPol), &h).unwrap();
        assert_eq!(out.amplitudes()[1], c(1., 0.));
        assert_eq!(out.amplitudes()[0], c(0., 0.));
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = tensor(&[ket(Slit, c(0.6, 0.), c(0., 0.8)), ket(IdlPol, c(0., 1.), c(0., 0.))])
            .unwrap();
        let id = LocalOperator::identity(vec![IdlPol, Slit]).unwrap();
        assert_eq!(apply(&id, &s).unwrap(), s);
    }

    #[test]
    fn apply_rejects_unknown_target() {
        let h = ket(SigPol, c(1., 0.), c(0., 0.));
        assert_eq!(apply(&pauli_x(IdlPol), &h), Err(Error::MissingLabel(IdlPol)));
    }

    #[test]
    fn operator_dimension_checked() {
        let m = DMatrix::<C64>::identity(3, 3);
        assert!(matches!(
            LocalOperator::new(vec![SigPol], m, true),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_unitary_flag_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(
            LocalOperator::new(vec![SigPol], m, true),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn project_h_onto_h() {
        let h = ket(SigPol, c(1., 0.), c(0., 0.));
        let p = project(&h, SigPol, &[c(1., 0.), c(0., 0.)]).unwrap();
        assert!((p.probability - 1.0).abs() < 1e-15);
        assert!(p.state.equals_up_to_phase(&h, 1e-12));
    }

    #[test]
    fn project_diagonal_onto_v() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let d = ket(SigPol, c(r, 0.), c(r, 0.));
        let p = project(&d, SigPol, &[c(0., 0.), c(1., 0.)]).unwrap();
        assert!((p.probability - 0.5).abs() < 1e-15);
        assert!(p.state.equals_up_to_phase(&ket(SigPol, c(0., 0.), c(1., 0.)), 1e-12));
    }

    #[test]
    fn impossible_outcome_is_signalled() {
        let h = ket(SigPol, c(1., 0.), c(0., 0.));
        let err = project(&h, SigPol, &[c(0., 0.), c(1., 0.)]).unwrap_err();
        assert!(matches!(err, Error::ImpossibleOutcome { .. }));
        // A looser threshold still rejects an exact zero.
        assert!(project_with_threshold(&h, SigPol, &[c(0., 0.), c(1., 0.)], 0.0).is_err());
    }

    #[test]
    fn reduce_product_state() {
        let s = tensor(&[ket(SigPol, c(1., 0.), c(0., 0.)), ket(IdlPort, c(1., 0.), c(0., 0.))])
            .unwrap();
        let rho = reduce(&s, &[SigPol]).unwrap();
        assert!((rho.element(0, 0) - c(1., 0.)).norm() < 1e-15);
        assert!(rho.element(1, 1).norm() < 1e-15);
        assert!(rho.element(0, 1).norm() < 1e-15);
    }

    #[test]
    fn reduce_bell_pair_is_maximally_mixed() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let amps = DVector::from_column_slice(&[c(r, 0.), c(0., 0.), c(0., 0.), c(r, 0.)]);
        let s = StateVector::new(vec![SigPol, IdlPol], amps).unwrap();
        let rho = reduce(&s, &[IdlPol]).unwrap();
        assert!((rho.element(0, 0) - c(0.5, 0.)).norm() < 1e-15);
        assert!((rho.element(1, 1) - c(0.5, 0.)).norm() < 1e-15);
        assert!(rho.element(0, 1).norm() < 1e-15);
        rho.validate(1e-12).unwrap();
    }

    #[test]
    fn reduce_requires_nonempty_keep() {
        let h = ket(SigPol, c(1., 0.), c(0., 0.));
        assert_eq!(reduce(&h, &[]), Err(Error::EmptyKeep));
    }

    #[test]
    fn reorder_swaps_factors() {
        let s = tensor(&[ket(SigPol, c(1., 0.), c(0., 0.)), ket(IdlPol, c(0., 0.), c(1., 0.))])
            .unwrap();
        let t = s.reorder(&[IdlPol, SigPol]).unwrap();
        // |H⟩|V⟩ in (SigPol, IdlPol) is index 1; in (IdlPol, SigPol) it is index 2.
        assert_eq!(t.amplitudes()[2], c(1., 0.));
        assert_eq!(t.reorder(&[SigPol, IdlPol]).unwrap(), s);
    }

    #[test]
    fn non_physical_density_matrix_detected() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.2, 0.), c(0., 0.), c(0., 0.), c(-0.2, 0.)]);
        let rho = DensityMatrix::new(vec![Slit], m).unwrap();
        assert!(matches!(rho.validate(1e-12), Err(Error::NonPhysical(_))));
    }
}
