//! Schmidt-type decompositions and two-qubit gate synthesis.
//!
//! The canonical form of a two-qubit unitary is
//! `U = (u ⊗ u') · exp(i(x XX + y YY + z ZZ)) · (w ⊗ w')` with `(x, y, z)` in
//! the chamber
//!
//! ```text
//! 0 ≤ x < π/2,  0 ≤ y ≤ min(x, π/2 − x),  0 ≤ z ≤ y,  and x ≤ π/4 when z = 0.
//! ```
//!
//! It is computed in the magic basis, where local gates become real orthogonal
//! matrices and the nonlocal core is diagonal.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random;
use crate::tensor::gates::{self, magic_basis, u_global};
use crate::tensor::{
    max_distance, numerical_rank, svd, unitarity_deviation, CMatrix, MatrixJson, StateVector,
    TensorError, C64, UNITARITY_TOL, ZERO,
};

/// Relative threshold on singular values below which they count as zero.
pub const RANK_TOL: f64 = 1e-9;
/// Canonical parameters below this (radians) count as zero.
pub const KC_ZERO_TOL: f64 = 1e-9;
/// Negative `z` values smaller than this are treated as zero when folding.
const FOLD_SNAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Shape { expected: usize, rows: usize, cols: usize },
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("KC number {kc} exceeds the {n} available controlled factors")]
    TooManyNonlocal { kc: usize, n: usize },
    #[error("controlled-factor count must be 1, 2 or 3, got {0}")]
    InvalidCount(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn require_unitary(u: &CMatrix, dim: usize) -> Result<(), DecompError> {
    if u.nrows() != dim || u.ncols() != dim {
        return Err(DecompError::Shape { expected: dim, rows: u.nrows(), cols: u.ncols() });
    }
    let dev = unitarity_deviation(u);
    if dev > UNITARITY_TOL {
        return Err(DecompError::NotUnitary(dev));
    }
    Ok(())
}

/// Schmidt decomposition of a pure state across a bipartition.
#[derive(Debug, Clone)]
pub struct Schmidt {
    /// Schmidt coefficients, descending; squares sum to the squared norm.
    pub coefficients: Vec<f64>,
    /// Left vectors over the `left` qubits (in the order given).
    pub left: Vec<Vec<C64>>,
    /// Right vectors over the remaining qubits (in register order).
    pub right: Vec<Vec<C64>>,
}

impl Schmidt {
    /// Schmidt number with the relative threshold [`RANK_TOL`].
    pub fn rank(&self) -> usize {
        numerical_rank(&self.coefficients, RANK_TOL)
    }
}

pub fn schmidt_decompose(state: &StateVector, left: &[&str]) -> Result<Schmidt, DecompError> {
    let m = state.bipartition_matrix(left)?;
    let d = svd(&m);
    let k = d.s.len();
    let left_vecs = (0..k).map(|j| d.u.column(j).iter().cloned().collect()).collect();
    let right_vecs = (0..k).map(|j| d.v_adj.row(j).iter().map(|v| v.conj()).collect()).collect();
    Ok(Schmidt { coefficients: d.s, left: left_vecs, right: right_vecs })
}

/// Schmidt number of a state across `left | rest`.
pub fn schmidt_rank(state: &StateVector, left: &[&str]) -> Result<usize, DecompError> {
    Ok(schmidt_decompose(state, left)?.rank())
}

/// `M = Σ_i λ_i P_i ⊗ Q_i` with `tr(P_i†P_j)/d_A = δ_ij` and likewise for `Q`.
#[derive(Debug, Clone)]
pub struct OperatorSchmidt {
    pub lambdas: Vec<f64>,
    pub left: Vec<CMatrix>,
    pub right: Vec<CMatrix>,
}

impl OperatorSchmidt {
    /// Operator Schmidt number (`Op#`).
    pub fn rank(&self) -> usize {
        numerical_rank(&self.lambdas, RANK_TOL)
    }

    /// `Σ λ_i P_i ⊗ Q_i`, in `(left qubits, right qubits)` order.
    pub fn reconstruct(&self) -> CMatrix {
        let mut acc = self.left[0].kronecker(&self.right[0]).map(|_| ZERO);
        for ((l, p), q) in self.lambdas.iter().zip(&self.left).zip(&self.right) {
            acc += p.kronecker(q).map(|v| v * *l);
        }
        acc
    }
}

/// Permutes an `n`-qubit operator so that qubits `order[0], order[1], …` come first.
pub fn permute_operator(m: &CMatrix, n: usize, order: &[usize]) -> CMatrix {
    let dim = 1usize << n;
    let map = |idx: usize| -> usize {
        let mut old = 0;
        for (new_pos, &old_pos) in order.iter().enumerate() {
            if idx & (1 << (n - 1 - new_pos)) != 0 {
                old |= 1 << (n - 1 - old_pos);
            }
        }
        old
    };
    let perm: Vec<usize> = (0..dim).map(map).collect();
    CMatrix::from_fn(dim, dim, |r, c| m[(perm[r], perm[c])])
}

/// Operator Schmidt decomposition of an `n`-qubit operator across `left | rest`.
///
/// `left` lists 0-based qubit positions; the right factor acts on the other
/// qubits in ascending order.
pub fn operator_schmidt(m: &CMatrix, left: &[usize]) -> Result<OperatorSchmidt, DecompError> {
    let n = crate::tensor::qubit_count(m.nrows())?;
    if m.ncols() != m.nrows() {
        return Err(DecompError::Shape { expected: m.nrows(), rows: m.nrows(), cols: m.ncols() });
    }
    if left.iter().any(|&q| q >= n) || left.is_empty() || left.len() >= n {
        return Err(DecompError::Numerical(format!("invalid bipartition {left:?} of {n} qubits")));
    }
    let mut order = left.to_vec();
    order.extend((0..n).filter(|q| !left.contains(q)));
    let mp = permute_operator(m, n, &order);
    let da = 1usize << left.len();
    let db = 1usize << (n - left.len());
    // Realignment: R[(ia, ja), (ib, jb)] = M[(ia, ib), (ja, jb)].
    let r = CMatrix::from_fn(da * da, db * db, |row, col| {
        let (ia, ja) = (row / da, row % da);
        let (ib, jb) = (col / db, col % db);
        mp[(ia * db + ib, ja * db + jb)]
    });
    let d = svd(&r);
    let norm = ((da * db) as f64).sqrt();
    let mut lambdas = Vec::new();
    let mut lefts = Vec::new();
    let mut rights = Vec::new();
    for k in 0..d.s.len() {
        lambdas.push(d.s[k] / norm);
        let a = CMatrix::from_fn(da, da, |i, j| d.u[(i * da + j, k)] * (da as f64).sqrt());
        let b = CMatrix::from_fn(db, db, |i, j| d.v_adj[(k, i * db + j)] * (db as f64).sqrt());
        lefts.push(a);
        rights.push(b);
    }
    Ok(OperatorSchmidt { lambdas, left: lefts, right: rights })
}

/// `Op#` of a two-qubit operator across its two qubits.
pub fn op_number(m: &CMatrix) -> Result<usize, DecompError> {
    Ok(operator_schmidt(m, &[0])?.rank())
}

/// Splits `K ≈ a ⊗ b` for a 4×4 product of single-qubit unitaries.
///
/// Returns the factors and the residual `‖K − a⊗b‖_max`.
pub fn split_local(k: &CMatrix) -> Result<(CMatrix, CMatrix, f64), DecompError> {
    let os = operator_schmidt(k, &[0])?;
    // P has tr(P†P) = 2, so it is already unitary when K is a product of unitaries.
    let a = os.left[0].clone();
    let b = os.right[0].map(|v| v * os.lambdas[0]);
    let residual = max_distance(&a.kronecker(&b), k);
    Ok((a, b, residual))
}

/// Canonical two-qubit form `U = (u ⊗ u') U_global(x, y, z) (w ⊗ w')`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausCiracForm {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Number of nonzero parameters among `x, y, z`.
    pub kc: usize,
    pub u: CMatrix,
    pub u_prime: CMatrix,
    pub w: CMatrix,
    pub w_prime: CMatrix,
}

impl KrausCiracForm {
    /// `(u ⊗ u') U_global(x, y, z) (w ⊗ w')`; equals the input exactly, phase included.
    pub fn reconstruct(&self) -> CMatrix {
        self.u.kronecker(&self.u_prime) * u_global(self.x, self.y, self.z) * self.w.kronecker(&self.w_prime)
    }

    pub fn params(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_json(&self) -> KrausCiracJson {
        KrausCiracJson {
            x: self.x,
            y: self.y,
            z: self.z,
            kc: self.kc,
            u: MatrixJson::from_matrix(&self.u),
            u_prime: MatrixJson::from_matrix(&self.u_prime),
            w: MatrixJson::from_matrix(&self.w),
            w_prime: MatrixJson::from_matrix(&self.w_prime),
        }
    }
}

/// Serialized form `{x, y, z, kc, u, u', w, w'}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausCiracJson {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub kc: usize,
    pub u: MatrixJson,
    #[serde(rename = "u'")]
    pub u_prime: MatrixJson,
    pub w: MatrixJson,
    #[serde(rename = "w'")]
    pub w_prime: MatrixJson,
}

/// True when `(x, y, z)` lies in the chamber, with slack `tol`.
pub fn in_weyl_chamber(x: f64, y: f64, z: f64, tol: f64) -> bool {
    let base = x >= -tol
        && x < FRAC_PI_2 + tol
        && y >= -tol
        && y <= x.min(FRAC_PI_2 - x) + tol
        && z >= -tol
        && z <= y + tol;
    let z_zero = z.abs() <= KC_ZERO_TOL;
    base && (!z_zero || x <= FRAC_PI_4 + tol)
}

/// Number of parameters above [`KC_ZERO_TOL`].
pub fn kc_count(params: [f64; 3]) -> usize {
    params.iter().filter(|p| p.abs() > KC_ZERO_TOL).count()
}

/// Bookkeeping for `U = phase · (l0 ⊗ l1) · U_global(p) · (r0 ⊗ r1)` while folding `p`.
struct Folding {
    phase: C64,
    l: [CMatrix; 2],
    r: [CMatrix; 2],
    p: [f64; 3],
}

fn pauli(k: usize) -> CMatrix {
    match k {
        0 => gates::x(),
        1 => gates::y(),
        _ => gates::z(),
    }
}

impl Folding {
    /// `p[k] -= m π/2`, absorbing `exp(i m π/2 PP) = i^m (PP)^m` on the right.
    fn shift(&mut self, k: usize, m: i64) {
        if m == 0 {
            return;
        }
        self.p[k] -= m as f64 * FRAC_PI_2;
        self.phase *= C64::new(0.0, 1.0).powi(m.rem_euclid(4) as i32);
        if m.rem_euclid(2) == 1 {
            let p = pauli(k);
            self.r = [&p * &self.r[0], &p * &self.r[1]];
        }
    }

    /// Conjugation `U_global(p) = (V⊗W)† U_global(p') (V⊗W)` where `p'` is `p` remapped.
    fn conjugate(&mut self, v: &CMatrix, w: &CMatrix, new_p: [f64; 3]) {
        self.l = [&self.l[0] * v.adjoint(), &self.l[1] * w.adjoint()];
        self.r = [v * &self.r[0], w * &self.r[1]];
        self.p = new_p;
    }

    fn swap(&mut self, a: usize, b: usize) {
        let [p0, p1, p2] = self.p;
        let (v, new_p) = match (a.min(b), a.max(b)) {
            (0, 1) => (gates::s(), [p1, p0, p2]),
            (0, 2) => (gates::h(), [p2, p1, p0]),
            _ => (gates::rx(FRAC_PI_2), [p0, p2, p1]),
        };
        self.conjugate(&v, &v, new_p);
    }

    /// Negates the two parameters other than `keep`.
    fn flip(&mut self, keep: usize) {
        let [p0, p1, p2] = self.p;
        let (v, new_p) = match keep {
            2 => (gates::z(), [-p0, -p1, p2]),
            1 => (gates::y(), [-p0, p1, -p2]),
            _ => (gates::x(), [p0, -p1, -p2]),
        };
        self.conjugate(&v, &gates::id2(), new_p);
    }

    fn fold(&mut self) {
        for k in 0..3 {
            let m = (self.p[k] / FRAC_PI_2).floor() as i64;
            self.shift(k, m);
            if self.p[k] > FRAC_PI_4 {
                self.shift(k, 1);
            }
        }
        // Order by magnitude, descending.
        for _ in 0..3 {
            for k in 0..2 {
                if self.p[k].abs() < self.p[k + 1].abs() {
                    self.swap(k, k + 1);
                }
            }
        }
        match (self.p[0] < 0.0, self.p[1] < 0.0) {
            (true, true) => self.flip(2),
            (true, false) => self.flip(1),
            (false, true) => self.flip(0),
            (false, false) => {}
        }
        if self.p[2] < -FOLD_SNAP {
            // (a, b, c) with c < 0 is equivalent to (π/2 − a, b, −c).
            self.shift(0, 1);
            self.flip(1);
        } else if self.p[2] < 0.0 {
            self.p[2] = 0.0;
        }
    }
}

/// Diagonalizes a complex symmetric unitary `M = P diag(d) Pᵀ` with real orthogonal `P`, `det P = 1`.
fn diagonalize_symmetric_unitary(m: &CMatrix) -> Result<(Matrix4<f64>, [C64; 4]), DecompError> {
    let re = Matrix4::from_fn(|r, c| m[(r, c)].re);
    let im = Matrix4::from_fn(|r, c| m[(r, c)].im);
    let mut rng = random::seeded(0x6b61_6b);
    let mut best: Option<(f64, Matrix4<f64>)> = None;
    for attempt in 0..200 {
        let (a, b) = if attempt == 0 {
            (1.0, 0.0)
        } else {
            (random::uniform(&mut rng, -1.0, 1.0), random::uniform(&mut rng, -1.0, 1.0))
        };
        let combo = re * a + im * b;
        let combo = (combo + combo.transpose()) * 0.5;
        let p = SymmetricEigen::new(combo).eigenvectors;
        let pc = p.map(|v| C64::new(v, 0.0));
        let pc = CMatrix::from_fn(4, 4, |r, c| pc[(r, c)]);
        let d = pc.transpose() * m * &pc;
        let off = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .map(|(r, c)| d[(r, c)].norm())
            .fold(0.0, f64::max);
        if best.as_ref().map_or(true, |(e, _)| off < *e) {
            best = Some((off, p));
        }
        if off < 1e-13 {
            break;
        }
    }
    let (err, mut p) = best.expect("at least one attempt");
    if err > 1e-9 {
        return Err(DecompError::Numerical(format!("could not diagonalize (residual {err:.2e})")));
    }
    if p.determinant() < 0.0 {
        for r in 0..4 {
            p[(r, 0)] = -p[(r, 0)];
        }
    }
    let pc = CMatrix::from_fn(4, 4, |r, c| C64::new(p[(r, c)], 0.0));
    let d = pc.transpose() * m * &pc;
    Ok((p, [d[(0, 0)], d[(1, 1)], d[(2, 2)], d[(3, 3)]]))
}

/// Canonical decomposition of a two-qubit unitary.
pub fn kraus_cirac(u: &CMatrix) -> Result<KrausCiracForm, DecompError> {
    require_unitary(u, 4)?;
    let det = u.determinant();
    let phase4 = det.powf(0.25);
    let su = u.map(|v| v / phase4);
    let b = magic_basis();
    let ub = b.adjoint() * &su * &b;
    let m2 = ub.transpose() * &ub;
    let (p, d) = diagonalize_symmetric_unitary(&m2)?;
    let mut theta = [0.0; 4];
    for k in 0..3 {
        theta[k] = d[k].arg() / 2.0;
    }
    theta[3] = -(theta[0] + theta[1] + theta[2]);
    let pc = CMatrix::from_fn(4, 4, |r, c| C64::new(p[(r, c)], 0.0));
    let dinv = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        4,
        theta.iter().map(|t| C64::from_polar(1.0, -t)),
    ));
    let o1 = &ub * &pc * dinv;
    let k1 = &b * o1 * b.adjoint();
    let k2 = &b * pc.transpose() * b.adjoint();
    let (l0, l1, res1) = split_local(&k1)?;
    let (r0, r1, res2) = split_local(&k2)?;
    if res1.max(res2) > 1e-9 {
        return Err(DecompError::Numerical(format!("local factors not separable ({:.2e})", res1.max(res2))));
    }
    let mut f = Folding {
        phase: phase4,
        l: [l0, l1],
        r: [r0, r1],
        p: [(theta[0] + theta[2]) / 2.0, (theta[1] + theta[2]) / 2.0, (theta[0] + theta[1]) / 2.0],
    };
    f.fold();
    let [x, y, z] = f.p;
    let form = KrausCiracForm {
        x,
        y,
        z,
        kc: kc_count(f.p),
        u: f.l[0].map(|v| v * f.phase),
        u_prime: f.l[1].clone(),
        w: f.r[0].clone(),
        w_prime: f.r[1].clone(),
    };
    let err = max_distance(&form.reconstruct(), u);
    if err > 1e-9 {
        return Err(DecompError::Numerical(format!("reconstruction error {err:.2e}")));
    }
    Ok(form)
}

/// Number of nonzero canonical parameters of a two-qubit unitary.
pub fn kc_number(u: &CMatrix) -> Result<usize, DecompError> {
    Ok(kraus_cirac(u)?.kc)
}

/// `(A ⊗ B) · (|0⟩⟨0| ⊗ u0 + |1⟩⟨1| ⊗ u1) · (C ⊗ D)`: a two-qubit gate with `Op# ≤ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledFactor {
    pub left: [CMatrix; 2],
    pub u0: CMatrix,
    pub u1: CMatrix,
    pub right: [CMatrix; 2],
}

impl ControlledFactor {
    pub fn identity() -> Self {
        ControlledFactor {
            left: [gates::id2(), gates::id2()],
            u0: gates::id2(),
            u1: gates::id2(),
            right: [gates::id2(), gates::id2()],
        }
    }

    pub fn matrix(&self) -> CMatrix {
        self.left[0].kronecker(&self.left[1])
            * gates::controlled(&self.u0, &self.u1)
            * self.right[0].kronecker(&self.right[1])
    }

    /// True when the controlled part acts trivially (`u0 = u1 = 1`).
    pub fn is_local(&self) -> bool {
        let id = gates::id2();
        max_distance(&self.u0, &id) < 1e-15 && max_distance(&self.u1, &id) < 1e-15
    }

    /// `exp(i t P⊗P) = (R⊗R) C(e^{itZ}, e^{-itZ}) (R†⊗R†)` with `R Z R† = P`.
    fn pauli_rotation(k: usize, t: f64) -> Self {
        let r = match k {
            0 => gates::h(),
            1 => gates::s() * gates::h(),
            _ => gates::id2(),
        };
        let plus = gates::diag2(C64::from_polar(1.0, t), C64::from_polar(1.0, -t));
        let minus = gates::diag2(C64::from_polar(1.0, -t), C64::from_polar(1.0, t));
        ControlledFactor { left: [r.clone(), r.clone()], u0: plus, u1: minus, right: [r.adjoint(), r.adjoint()] }
    }
}

/// Factors `U = F_1 · F_2 ⋯ F_N` into `N ∈ {1,2,3}` gates of `Op# ≤ 2`.
///
/// Succeeds exactly when `KC#(U) ≤ N`; surplus factors are identities.
/// Canonical parameters below [`KC_ZERO_TOL`] are dropped.
pub fn controlled_sequence(u: &CMatrix, n: usize) -> Result<Vec<ControlledFactor>, DecompError> {
    if !(1..=3).contains(&n) {
        return Err(DecompError::InvalidCount(n));
    }
    let kc = kraus_cirac(u)?;
    if kc.kc > n {
        return Err(DecompError::TooManyNonlocal { kc: kc.kc, n });
    }
    let mut factors: Vec<ControlledFactor> = kc
        .params()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.abs() > KC_ZERO_TOL)
        .map(|(k, p)| ControlledFactor::pauli_rotation(k, *p))
        .collect();
    if factors.is_empty() {
        factors.push(ControlledFactor::identity());
    }
    let first = &mut factors[0];
    first.left = [&kc.u * &first.left[0], &kc.u_prime * &first.left[1]];
    let last = factors.last_mut().expect("non-empty");
    last.right = [&last.right[0] * &kc.w, &last.right[1] * &kc.w_prime];
    while factors.len() < n {
        factors.push(ControlledFactor::identity());
    }
    Ok(factors)
}

/// A two-qubit circuit `L3 · CX · L2 · CX · L1 · CX · L0`.
///
/// Every CNOT has qubit 0 as control; `layers[t] = [a, b]` applies `a ⊗ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeCnotCircuit {
    pub layers: [[CMatrix; 2]; 4],
}

impl ThreeCnotCircuit {
    pub fn unitary(&self) -> CMatrix {
        let cx = gates::cnot();
        let layer = |t: usize| self.layers[t][0].kronecker(&self.layers[t][1]);
        layer(3) * &cx * layer(2) * &cx * layer(1) * &cx * layer(0)
    }
}

/// Synthesizes any two-qubit unitary with three same-orientation CNOTs.
pub fn three_cnot_decompose(u: &CMatrix) -> Result<ThreeCnotCircuit, DecompError> {
    let kc = kraus_cirac(u)?;
    let (a, b, c) = (kc.x, kc.y, kc.z);
    let h = gates::h();
    let t1 = -2.0 * c - FRAC_PI_2;
    let t2 = 2.0 * a + FRAC_PI_2;
    let t3 = -2.0 * b - FRAC_PI_2;
    // Core: U_global ∝ (1⊗Rz(π/2)) CX₂₁ (Rz(t1)⊗Ry(t2)) CX₁₂ (1⊗Ry(t3)) CX₂₁ (Rz(−π/2)⊗1),
    // with each reversed CNOT written as (H⊗H) CX₁₂ (H⊗H).
    let mut layers = [
        [&h * gates::rz(-FRAC_PI_2) * &kc.w, &h * &kc.w_prime],
        [h.clone(), gates::ry(t3) * &h],
        [&h * gates::rz(t1), &h * gates::ry(t2)],
        [&kc.u * &h, &kc.u_prime * gates::rz(FRAC_PI_2) * &h],
    ];
    let circ = ThreeCnotCircuit { layers: layers.clone() };
    let v = circ.unitary();
    let overlap: C64 = v.iter().zip(u.iter()).map(|(p, q)| p.conj() * q).sum();
    if overlap.norm() < 1e-6 {
        return Err(DecompError::Numerical("three-CNOT synthesis lost the target".into()));
    }
    let phase = overlap / overlap.norm();
    layers[3][0] = layers[3][0].map(|v| v * phase);
    let circ = ThreeCnotCircuit { layers };
    let err = max_distance(&circ.unitary(), u);
    if err > 1e-8 {
        return Err(DecompError::Numerical(format!("three-CNOT reconstruction error {err:.2e}")));
    }
    Ok(circ)
}

/// `M` with a unit-modulus scalar removed so that `det M` has phase zero.
pub fn remove_det_phase(m: &CMatrix) -> CMatrix {
    let d = m.determinant();
    if d.norm() == 0.0 {
        return m.clone();
    }
    let ph = (d / d.norm()).powf(1.0 / m.nrows() as f64);
    m.map(|v| v / ph)
}

/// Scalar `c` minimizing `‖c·B − A‖_F`, with the relative residual.
pub fn best_scalar(a: &CMatrix, b: &CMatrix) -> (C64, f64) {
    let bb: f64 = b.iter().map(|v| v.norm_sqr()).sum();
    if bb == 0.0 {
        return (ZERO, 1.0);
    }
    let ab: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let c = ab / bb;
    let na: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let res: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - c * y).norm_sqr()).sum::<f64>().sqrt();
    (c, if na == 0.0 { res } else { res / na })
}
