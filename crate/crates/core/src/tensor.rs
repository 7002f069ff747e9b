//! Dense state vectors over labelled qubit registers.
//!
//! A [`StateVector`] carries its register: an ordered list of qubits, each with
//! a label and the network node that holds it. Gates are addressed by label, so
//! callers never deal with bit positions. Basis indices are big-endian.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::NodeId;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Maximum deviation of `G†G` from the identity accepted for a gate.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Maximum deviation of a state norm from one accepted as normalized.
pub const NORM_TOL: f64 = 1e-12;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("unknown qubit label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate qubit label `{0}`")]
    DuplicateLabel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("malformed matrix data: {0}")]
    Malformed(String),
}

/// One qubit of a register.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Qubit {
    pub label: String,
    pub node: NodeId,
}

impl Qubit {
    pub fn new(label: impl Into<String>, node: NodeId) -> Self {
        Qubit { label: label.into(), node }
    }
}

/// A unitary acting on `arity` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    matrix: CMatrix,
    arity: usize,
}

impl Gate {
    /// Wraps `matrix`, rejecting non-square, non-power-of-two or non-unitary input.
    pub fn new(matrix: CMatrix) -> Result<Self, TensorError> {
        let arity = qubit_count(matrix.nrows())?;
        if matrix.ncols() != matrix.nrows() {
            return Err(TensorError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let dev = unitarity_deviation(&matrix);
        if dev > UNITARITY_TOL {
            return Err(TensorError::NotUnitary(dev));
        }
        Ok(Gate { matrix, arity })
    }

    /// Wraps a matrix known to be unitary by construction.
    ///
    /// Panics if the shape is not a power of two; unitarity is only
    /// debug-asserted.
    pub fn from_unitary(matrix: CMatrix) -> Self {
        let arity = qubit_count(matrix.nrows()).expect("gate dimension must be a power of two");
        debug_assert!(unitarity_deviation(&matrix) < 1e-9);
        Gate { matrix, arity }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dagger(&self) -> Gate {
        Gate { matrix: self.matrix.adjoint(), arity: self.arity }
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn kron(&self, other: &Gate) -> Gate {
        Gate { matrix: self.matrix.kronecker(&other.matrix), arity: self.arity + other.arity }
    }

    /// Matrix product `self · other` (apply `other` first).
    pub fn then_after(&self, other: &Gate) -> Gate {
        assert_eq!(self.arity, other.arity);
        Gate { matrix: &self.matrix * &other.matrix, arity: self.arity }
    }

    pub fn identity(arity: usize) -> Gate {
        Gate { matrix: CMatrix::identity(1 << arity, 1 << arity), arity }
    }
}

/// Number of qubits spanned by a dimension, if it is a power of two.
pub fn qubit_count(dim: usize) -> Result<usize, TensorError> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(TensorError::Malformed(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// `max |(M†M - 1)_ij|`.
pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let p = m.adjoint() * m;
    let n = m.nrows();
    let mut dev = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { ONE } else { ZERO };
            dev = dev.max((p[(r, c)] - target).norm());
        }
    }
    dev
}

/// Largest elementwise distance between `a` and `e^{iφ} b` for the best global phase φ.
pub fn phase_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let overlap: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
    a.iter().zip(b.iter()).map(|(x, y)| (x - phase * y).norm()).fold(0.0, f64::max)
}

/// Largest elementwise distance between two matrices.
pub fn max_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Builds a matrix from row-major data.
pub fn matrix_from_rows(rows: usize, cols: usize, data: &[C64]) -> CMatrix {
    CMatrix::from_row_slice(rows, cols, data)
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Kronecker product of a list of matrices, first factor most significant.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for f in factors {
        acc = acc.kronecker(f);
    }
    acc
}

/// Lifts `m`, acting on qubits `positions` (0-based, in `m`'s order), to an `n`-qubit operator.
pub fn embed_operator(m: &CMatrix, n: usize, positions: &[usize]) -> CMatrix {
    let a = positions.len();
    assert_eq!(m.nrows(), 1 << a, "operator arity does not match positions");
    let dim = 1usize << n;
    let shifts: Vec<usize> = positions.iter().map(|p| n - 1 - p).collect();
    let mask: usize = shifts.iter().map(|s| 1usize << s).sum();
    let scatter = |local: usize| -> usize {
        shifts.iter().enumerate().map(|(t, s)| ((local >> (a - 1 - t)) & 1) << s).sum()
    };
    let spread: Vec<usize> = (0..1usize << a).map(scatter).collect();
    let mut out = CMatrix::zeros(dim, dim);
    for rest in (0..dim).filter(|x| x & mask == 0) {
        for (lc, &sc) in spread.iter().enumerate() {
            for (lr, &sr) in spread.iter().enumerate() {
                out[(rest | sr, rest | sc)] = m[(lr, lc)];
            }
        }
    }
    out
}

/// A singular value decomposition `M = U diag(s) V†` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v_adj: CMatrix,
}

impl Svd {
    /// Number of singular values with `s_i / s_max > rel_tol`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        numerical_rank(&self.s, rel_tol)
    }

    pub fn reconstruct(&self) -> CMatrix {
        let k = self.s.len();
        let mut us = self.u.columns(0, k).into_owned();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v_adj.rows(0, k)
    }
}

/// Count of values above `rel_tol` relative to the largest one.
pub fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v / max > rel_tol).count()
}

/// Thin SVD of an arbitrary complex matrix, by one-sided Jacobi rotations.
///
/// For an `m × n` input the factors are `m × r`, `r` and `r × n` with
/// `r = min(m, n)`. Columns of `U` belonging to zero singular values are
/// completed to an orthonormal set.
pub fn svd(m: &CMatrix) -> Svd {
    if m.nrows() < m.ncols() {
        let t = svd(&m.adjoint());
        return Svd { u: t.v_adj.adjoint(), s: t.s, v_adj: t.u.adjoint() };
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = CMatrix::identity(cols, cols);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a.column(p).iter().map(|x| x.norm_sqr()).sum();
                let beta: f64 = a.column(q).iter().map(|x| x.norm_sqr()).sum();
                let gamma: C64 = a.column(p).iter().zip(a.column(q).iter()).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g <= 1e-15 * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let xp = mat[(r, p)];
                        let xq = mat[(r, q)] * phase;
                        mat[(r, p)] = xp * cs - xq * sn;
                        mat[(r, q)] = xp * sn + xq * cs;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let mut u = CMatrix::zeros(rows, cols);
    let mut s = Vec::with_capacity(cols);
    let mut filled = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        if norms[j] > smax * 1e-300 && norms[j] > 0.0 {
            let col = a.column(j).map(|x| x / norms[j]);
            u.set_column(k, &col);
            filled.push(k);
        }
    }
    complete_orthonormal(&mut u, &filled);
    let v_sorted = CMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]);
    Svd { u, s, v_adj: v_sorted.adjoint() }
}

/// Fills the columns of `u` not listed in `filled` with vectors orthonormal to the rest.
fn complete_orthonormal(u: &mut CMatrix, filled: &[usize]) {
    let rows = u.nrows();
    let mut basis: Vec<nalgebra::DVector<C64>> = filled.iter().map(|&k| u.column(k).into_owned()).collect();
    let mut candidate = 0;
    for k in 0..u.ncols() {
        if filled.contains(&k) {
            continue;
        }
        while candidate < rows {
            let mut e = nalgebra::DVector::from_element(rows, ZERO);
            e[candidate] = ONE;
            candidate += 1;
            for b in &basis {
                let proj: C64 = b.iter().zip(e.iter()).map(|(x, y)| x.conj() * y).sum();
                e -= b * proj;
            }
            let n = e.norm();
            if n > 1e-8 {
                e /= C64::new(n, 0.0);
                u.set_column(k, &e);
                basis.push(e);
                break;
            }
        }
    }
}

/// Pure state over a labelled register, amplitudes in big-endian order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    register: Vec<Qubit>,
    amps: Vec<C64>,
}

impl StateVector {
    /// |0…0⟩ on the given register.
    pub fn zero(register: Vec<Qubit>) -> Result<Self, TensorError> {
        check_unique(&register)?;
        let mut amps = vec![ZERO; 1 << register.len()];
        amps[0] = ONE;
        Ok(StateVector { register, amps })
    }

    /// A state from raw amplitudes; normalization is not enforced.
    pub fn from_amplitudes(register: Vec<Qubit>, amps: Vec<C64>) -> Result<Self, TensorError> {
        check_unique(&register)?;
        if amps.len() != 1 << register.len() {
            return Err(TensorError::DimensionMismatch {
                expected: 1 << register.len(),
                found: amps.len(),
            });
        }
        Ok(StateVector { register, amps })
    }

    /// Like [`StateVector::from_amplitudes`] but requires unit norm.
    pub fn normalized(register: Vec<Qubit>, amps: Vec<C64>) -> Result<Self, TensorError> {
        let s = Self::from_amplitudes(register, amps)?;
        let n = s.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(TensorError::NotNormalized(n));
        }
        Ok(s)
    }

    /// The empty register with amplitude 1.
    pub fn scalar() -> Self {
        StateVector { register: Vec::new(), amps: vec![ONE] }
    }

    pub fn register(&self) -> &[Qubit] {
        &self.register
    }

    pub fn labels(&self) -> Vec<&str> {
        self.register.iter().map(|q| q.label.as_str()).collect()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn num_qubits(&self) -> usize {
        self.register.len()
    }

    pub fn position(&self, label: &str) -> Result<usize, TensorError> {
        self.register
            .iter()
            .position(|q| q.label == label)
            .ok_or_else(|| TensorError::UnknownLabel(label.to_string()))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.register.iter().any(|q| q.label == label)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&mut self, factor: C64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    /// Rescales to unit norm; a zero state is left untouched.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(C64::new(1.0 / n, 0.0));
        }
    }

    /// `self ⊗ other`; labels must stay unique.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, TensorError> {
        let mut register = self.register.clone();
        register.extend(other.register.iter().cloned());
        check_unique(&register)?;
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(StateVector { register, amps })
    }

    /// Applies `gate` to the qubits named in `labels`, first label most significant.
    pub fn apply_gate(&mut self, gate: &Gate, labels: &[&str]) -> Result<(), TensorError> {
        if labels.len() != gate.arity() {
            return Err(TensorError::DimensionMismatch { expected: gate.arity(), found: labels.len() });
        }
        self.apply_matrix(gate.matrix(), labels)
    }

    /// Applies an arbitrary (possibly non-unitary) operator to the named qubits.
    pub fn apply_matrix(&mut self, m: &CMatrix, labels: &[&str]) -> Result<(), TensorError> {
        let k = labels.len();
        if m.nrows() != 1 << k || m.ncols() != 1 << k {
            return Err(TensorError::DimensionMismatch { expected: 1 << k, found: m.nrows() });
        }
        let n = self.register.len();
        let mut seen = HashSet::new();
        let mut masks = Vec::with_capacity(k);
        for l in labels {
            if !seen.insert(*l) {
                return Err(TensorError::DuplicateLabel(l.to_string()));
            }
            let p = self.position(l)?;
            masks.push(1usize << (n - 1 - p));
        }
        let dim = 1usize << k;
        let offsets: Vec<usize> = (0..dim)
            .map(|t| {
                (0..k).filter(|b| t & (1 << (k - 1 - b)) != 0).map(|b| masks[b]).sum()
            })
            .collect();
        let all: usize = masks.iter().sum();
        let mut buf = vec![ZERO; dim];
        for base in 0..self.amps.len() {
            if base & all != 0 {
                continue;
            }
            for (t, off) in offsets.iter().enumerate() {
                buf[t] = self.amps[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (cidx, b) in buf.iter().enumerate() {
                    acc += m[(r, cidx)] * b;
                }
                self.amps[base | off] = acc;
            }
        }
        Ok(())
    }

    /// The same state with its register permuted into `order`.
    pub fn reordered(&self, order: &[&str]) -> Result<StateVector, TensorError> {
        if order.len() != self.register.len() {
            return Err(TensorError::DimensionMismatch {
                expected: self.register.len(),
                found: order.len(),
            });
        }
        let positions = order.iter().map(|l| self.position(l)).collect::<Result<Vec<_>, _>>()?;
        let register: Vec<Qubit> = positions.iter().map(|&p| self.register[p].clone()).collect();
        check_unique(&register)?;
        let n = register.len();
        let mut amps = vec![ZERO; self.amps.len()];
        for (new_idx, amp) in amps.iter_mut().enumerate() {
            let mut old_idx = 0usize;
            for (new_pos, &old_pos) in positions.iter().enumerate() {
                if new_idx & (1 << (n - 1 - new_pos)) != 0 {
                    old_idx |= 1 << (n - 1 - old_pos);
                }
            }
            *amp = self.amps[old_idx];
        }
        Ok(StateVector { register, amps })
    }

    /// Amplitudes reshaped to a `2^|left| × 2^rest` matrix.
    ///
    /// Rows follow `left` in the given order; columns follow the remaining
    /// qubits in register order.
    pub fn bipartition_matrix(&self, left: &[&str]) -> Result<CMatrix, TensorError> {
        let mut order: Vec<&str> = left.to_vec();
        for q in &self.register {
            if !left.contains(&q.label.as_str()) {
                order.push(q.label.as_str());
            }
        }
        let r = self.reordered(&order)?;
        let rows = 1 << left.len();
        let cols = r.amps.len() / rows;
        Ok(CMatrix::from_row_slice(rows, cols, &r.amps))
    }

    /// Reduced density matrix on `keep` (in that order).
    pub fn partial_trace(&self, keep: &[&str]) -> Result<CMatrix, TensorError> {
        let m = self.bipartition_matrix(keep)?;
        Ok(&m * m.adjoint())
    }

    /// `⟨self|other⟩`; registers must carry the same labels in the same order.
    pub fn inner(&self, other: &StateVector) -> Result<C64, TensorError> {
        if self.labels() != other.labels() {
            return Err(TensorError::Malformed("registers differ".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨a|b⟩|² / (‖a‖²‖b‖²)`, after aligning `other` to this register order.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, TensorError> {
        let aligned = other.reordered(&self.labels())?;
        let ov = self.inner(&aligned)?;
        let d = self.norm_sqr() * aligned.norm_sqr();
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok(ov.norm_sqr() / d)
    }

    /// Projects qubit `label` onto `|outcome⟩` and removes it from the register.
    ///
    /// The result is unnormalized; its squared norm is the outcome probability
    /// times the squared norm of `self`.
    pub fn project_out(&self, label: &str, outcome: bool) -> Result<StateVector, TensorError> {
        let p = self.position(label)?;
        let n = self.register.len();
        let shift = n - 1 - p;
        let mut register = self.register.clone();
        register.remove(p);
        let mut amps = Vec::with_capacity(self.amps.len() / 2);
        for idx in 0..self.amps.len() / 2 {
            let high = (idx >> shift) << (shift + 1);
            let low = idx & ((1 << shift) - 1);
            let full = high | low | ((outcome as usize) << shift);
            amps.push(self.amps[full]);
        }
        Ok(StateVector { register, amps })
    }

    /// Contracts the two named qubits with the bra `⟨v|` (a 4-vector) and removes them.
    pub fn contract_pair(&self, a: &str, b: &str, bra: &[C64; 4]) -> Result<StateVector, TensorError> {
        let mut out: Option<StateVector> = None;
        for (t, coeff) in bra.iter().enumerate() {
            if coeff.norm() == 0.0 {
                continue;
            }
            let s = self.project_out(a, t & 2 != 0)?.project_out(b, t & 1 != 0)?;
            match out.as_mut() {
                None => {
                    let mut s = s;
                    s.scale(coeff.conj());
                    out = Some(s);
                }
                Some(acc) => {
                    for (x, y) in acc.amps.iter_mut().zip(s.amps.iter()) {
                        *x += coeff.conj() * y;
                    }
                }
            }
        }
        out.ok_or_else(|| TensorError::Malformed("zero bra".into()))
    }

    /// Appends a fresh qubit in `|0⟩`.
    pub fn push_zero(&mut self, qubit: Qubit) -> Result<(), TensorError> {
        if self.contains(&qubit.label) {
            return Err(TensorError::DuplicateLabel(qubit.label));
        }
        self.register.push(qubit);
        let mut amps = Vec::with_capacity(self.amps.len() * 2);
        for a in &self.amps {
            amps.push(*a);
            amps.push(ZERO);
        }
        self.amps = amps;
        Ok(())
    }

    /// Renames a qubit; the label must not clash.
    pub fn relabel(&mut self, from: &str, to: &str) -> Result<(), TensorError> {
        if from != to && self.contains(to) {
            return Err(TensorError::DuplicateLabel(to.to_string()));
        }
        let p = self.position(from)?;
        self.register[p].label = to.to_string();
        Ok(())
    }

    pub fn set_node(&mut self, label: &str, node: NodeId) -> Result<(), TensorError> {
        let p = self.position(label)?;
        self.register[p].node = node;
        Ok(())
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.register.len();
        let mut first = true;
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() < 1e-12 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let bits: String = (0..n).map(|b| if i & (1 << (n - 1 - b)) != 0 { '1' } else { '0' }).collect();
            write!(f, "({:.6}{:+.6}i)|{}⟩", a.re, a.im, bits)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

fn check_unique(register: &[Qubit]) -> Result<(), TensorError> {
    let mut seen = HashSet::new();
    for q in register {
        if !seen.insert(q.label.as_str()) {
            return Err(TensorError::DuplicateLabel(q.label.clone()));
        }
    }
    Ok(())
}

/// Matrix or state in the `{"dims", "re", "im"}` interchange format.
///
/// Matrices are row-major with `dims = [rows, cols]`; states use `dims = [len]`
/// and may list their register labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dims: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                re.push(m[(r, c)].re);
                im.push(m[(r, c)].im);
            }
        }
        MatrixJson { dims: vec![m.nrows(), m.ncols()], re, im, labels: None }
    }

    pub fn from_state(s: &StateVector) -> Self {
        MatrixJson {
            dims: vec![s.amps.len()],
            re: s.amps.iter().map(|a| a.re).collect(),
            im: s.amps.iter().map(|a| a.im).collect(),
            labels: Some(s.register.iter().map(|q| q.label.clone()).collect()),
        }
    }

    fn values(&self) -> Result<Vec<C64>, TensorError> {
        let expected: usize = self.dims.iter().product();
        if self.re.len() != expected || self.im.len() != expected {
            return Err(TensorError::Malformed(format!(
                "dims {:?} need {expected} entries, got re={} im={}",
                self.dims,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(self.re.iter().zip(&self.im).map(|(r, i)| C64::new(*r, *i)).collect())
    }

    pub fn to_matrix(&self) -> Result<CMatrix, TensorError> {
        if self.dims.len() != 2 {
            return Err(TensorError::Malformed(format!("matrix needs 2 dims, got {:?}", self.dims)));
        }
        let v = self.values()?;
        Ok(CMatrix::from_row_slice(self.dims[0], self.dims[1], &v))
    }

    pub fn to_gate(&self) -> Result<Gate, TensorError> {
        Gate::new(self.to_matrix()?)
    }

    /// Amplitude vector; `dims` must have one entry (or be `[len, 1]`).
    pub fn to_amplitudes(&self) -> Result<Vec<C64>, TensorError> {
        match self.dims.as_slice() {
            [_] | [_, 1] => self.values(),
            _ => Err(TensorError::Malformed(format!("state needs 1 dim, got {:?}", self.dims))),
        }
    }
}

/// Serde adapter storing a [`CMatrix`] in the [`MatrixJson`] format.
pub mod matrix_serde {
    use super::{CMatrix, MatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        MatrixJson::deserialize(d)?.to_matrix().map_err(serde::de::Error::custom)
    }
}

/// Common single- and two-qubit gates.
pub mod gates {
    use super::*;

    fn m2(a: C64, b: C64, c_: C64, d: C64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[a, b, c_, d])
    }

    pub fn id2() -> CMatrix {
        CMatrix::identity(2, 2)
    }

    pub fn x() -> CMatrix {
        m2(ZERO, ONE, ONE, ZERO)
    }

    pub fn y() -> CMatrix {
        m2(ZERO, -I, I, ZERO)
    }

    pub fn z() -> CMatrix {
        m2(ONE, ZERO, ZERO, -ONE)
    }

    pub fn h() -> CMatrix {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        m2(s, s, s, -s)
    }

    pub fn s() -> CMatrix {
        m2(ONE, ZERO, ZERO, I)
    }

    /// `exp(-i θ Z / 2)`.
    pub fn rz(theta: f64) -> CMatrix {
        m2(C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0))
    }

    /// `exp(-i θ Y / 2)`.
    pub fn ry(theta: f64) -> CMatrix {
        let (s, c_) = (theta / 2.0).sin_cos();
        m2(c(c_, 0.0), c(-s, 0.0), c(s, 0.0), c(c_, 0.0))
    }

    /// `exp(-i θ X / 2)`.
    pub fn rx(theta: f64) -> CMatrix {
        let (s, c_) = (theta / 2.0).sin_cos();
        m2(c(c_, 0.0), c(0.0, -s), c(0.0, -s), c(c_, 0.0))
    }

    pub fn diag2(a: C64, b: C64) -> CMatrix {
        m2(a, ZERO, ZERO, b)
    }

    /// CNOT with the first qubit as control.
    pub fn cnot() -> CMatrix {
        controlled(&id2(), &x())
    }

    pub fn swap() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = ONE;
        m[(1, 2)] = ONE;
        m[(2, 1)] = ONE;
        m[(3, 3)] = ONE;
        m
    }

    /// `|0⟩⟨0| ⊗ u0 + |1⟩⟨1| ⊗ u1`.
    pub fn controlled(u0: &CMatrix, u1: &CMatrix) -> CMatrix {
        let d = u0.nrows();
        let mut m = CMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(u0);
        m.view_mut((d, d), (d, d)).copy_from(u1);
        m
    }

    /// `Σ_ab |a⟩⟨a| ⊗ w[2a+b] ⊗ |b⟩⟨b|`: both outer qubits control the middle one.
    pub fn fully_controlled(w: &[CMatrix; 4]) -> CMatrix {
        let mut m = CMatrix::zeros(8, 8);
        for a in 0..2 {
            for b in 0..2 {
                let u = &w[2 * a + b];
                for r in 0..2 {
                    for cc in 0..2 {
                        m[(4 * a + 2 * r + b, 4 * a + 2 * cc + b)] = u[(r, cc)];
                    }
                }
            }
        }
        m
    }

    /// `exp(i(x XX + y YY + z ZZ))`.
    pub fn u_global(x: f64, y: f64, z: f64) -> CMatrix {
        // Diagonal in the magic basis with eigenphases (x-y+z, -x+y+z, x+y-z, -x-y-z).
        let basis = magic_basis();
        let phases = [x - y + z, -x + y + z, x + y - z, -x - y - z];
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            phases.iter().map(|p| C64::from_polar(1.0, *p)),
        ));
        &basis * d * basis.adjoint()
    }

    /// Columns are `Φ⁺, iΦ⁻, iΨ⁺, Ψ⁻`, in which XX, YY and ZZ are all diagonal.
    pub fn magic_basis() -> CMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = c(s, 0.0);
        let i = c(0.0, s);
        let o = ZERO;
        CMatrix::from_row_slice(4, 4, &[r, i, o, o, o, o, i, r, o, o, i, -r, r, -i, o, o])
    }

    /// `exp(i θ P⊗P)` for a Pauli `p`.
    pub fn pauli_pair_rotation(p: &CMatrix, theta: f64) -> CMatrix {
        let pp = p.kronecker(p);
        let (s, c_) = theta.sin_cos();
        CMatrix::identity(4, 4).map(|v| v * c_) + pp.map(|v| v * C64::new(0.0, s))
    }
}
