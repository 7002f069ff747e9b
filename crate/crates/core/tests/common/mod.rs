//! Reference computations written directly from definitions, kept apart from the library code paths.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qnc::conversion::{ControlledGate, ConvertedCircuit};
use qnc::random::{haar_unitary, uniform, Rng};
use qnc::C64;

pub type M = DMatrix<C64>;

pub fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli(k: usize) -> M {
    let z = cx(0.0, 0.0);
    let o = cx(1.0, 0.0);
    let v = match k {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, cx(0.0, -1.0), cx(0.0, 1.0), z],
        _ => [o, z, z, -o],
    };
    M::from_row_slice(2, 2, &v)
}

pub fn kron(a: &M, b: &M) -> M {
    let (ra, ca, rb, cb) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    M::from_fn(ra * rb, ca * cb, |r, c| a[(r / rb, c / cb)] * b[(r % rb, c % cb)])
}

pub fn kron_list(ms: &[M]) -> M {
    ms.iter().skip(1).fold(ms[0].clone(), |acc, m| kron(&acc, m))
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &M) -> M {
    let norm: f64 = a.iter().map(|v| v.norm()).sum();
    let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let scaled = a.map(|v| v / 2f64.powi(s));
    let n = a.nrows();
    let mut term = M::identity(n, n);
    let mut acc = M::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / cx(k as f64, 0.0);
        acc += &term;
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}

/// `exp(i(x XX + y YY + z ZZ))` from the Hamiltonian.
pub fn u_global(x: f64, y: f64, z: f64) -> M {
    let h = kron(&pauli(1), &pauli(1)) * cx(x, 0.0) + kron(&pauli(2), &pauli(2)) * cx(y, 0.0) + kron(&pauli(3), &pauli(3)) * cx(z, 0.0);
    expm(&(h * cx(0.0, 1.0)))
}

pub fn hadamard() -> M {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    M::from_row_slice(2, 2, &[cx(s, 0.0), cx(s, 0.0), cx(s, 0.0), cx(-s, 0.0)])
}

/// `|0⟩⟨0| ⊗ 1 + |1⟩⟨1| ⊗ X` on two qubits, control first.
pub fn cnot() -> M {
    let mut m = M::zeros(4, 4);
    for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        m[(r, c)] = cx(1.0, 0.0);
    }
    m
}

/// Applies one controlled gate to a `k`-wire amplitude vector by walking the basis.
pub fn apply_controlled(state: &[C64], k: usize, g: &ControlledGate) -> Vec<C64> {
    let bit = |idx: usize, wire: usize| (idx >> (k - wire)) & 1;
    let mut out = vec![cx(0.0, 0.0); state.len()];
    for (idx, amp) in state.iter().enumerate() {
        let sel = if g.ctrl[0] == g.ctrl[1] { bit(idx, g.ctrl[0]) } else { 2 * bit(idx, g.ctrl[0]) + bit(idx, g.ctrl[1]) };
        let u = &g.u[sel];
        let t = bit(idx, g.tgt);
        let base = idx & !(1 << (k - g.tgt));
        for nt in 0..2 {
            out[base | (nt << (k - g.tgt))] += u[(nt, t)] * amp;
        }
    }
    out
}

/// The circuit's unitary, column 1 first, built column by column on basis vectors.
pub fn circuit_unitary(c: &ConvertedCircuit) -> M {
    let k = c.wires;
    let dim = 1 << k;
    let mut u = M::identity(dim, dim);
    for col in &c.columns {
        let pre = kron_list(&col.pre);
        let post = kron_list(&col.post);
        let mut seg = M::zeros(dim, dim);
        for j in 0..dim {
            let mut v = vec![cx(0.0, 0.0); dim];
            v[j] = cx(1.0, 0.0);
            for g in &col.gates {
                v = apply_controlled(&v, k, g);
            }
            for (i, a) in v.into_iter().enumerate() {
                seg[(i, j)] = a;
            }
        }
        u = post * seg * pre * u;
    }
    u
}

/// `min_θ ‖a − e^{iθ} b‖_max`, using the Frobenius-optimal phase.
pub fn phase_distance(a: &M, b: &M) -> f64 {
    let overlap: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let ph = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { cx(1.0, 0.0) };
    a.iter().zip(b.iter()).map(|(x, y)| (x - ph * y).norm()).fold(0.0, f64::max)
}

pub fn max_distance(a: &M, b: &M) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Rank from the eigenvalues of `A†A`, with a coarse relative threshold.
pub fn gram_rank(a: &M, rel: f64) -> usize {
    let g = a.adjoint() * a;
    let eig = nalgebra::SymmetricEigen::new(g);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    eig.eigenvalues.iter().filter(|&&v| v > rel * max).count()
}

/// Realignment of a two-qubit operator; its rank is `Op#`.
pub fn realign(m: &M) -> M {
    M::from_fn(4, 4, |row, col| {
        let (ia, ja) = (row / 2, row % 2);
        let (ib, jb) = (col / 2, col % 2);
        m[(ia * 2 + ib, ja * 2 + jb)]
    })
}

/// A point of the Weyl chamber `π/4 ≥ x ≥ y ≥ z ≥ 0`, away from the faces by `margin`.
pub fn weyl_point(rng: &mut Rng, margin: f64) -> (f64, f64, f64) {
    let q = std::f64::consts::FRAC_PI_4;
    loop {
        let x = uniform(rng, margin, q - margin);
        let y = uniform(rng, margin, q - margin);
        let z = uniform(rng, margin, q - margin);
        if x - y > margin && y - z > margin {
            return (x, y, z);
        }
    }
}

fn dress(rng: &mut Rng, core: M) -> M {
    let a = kron(&haar_unitary(rng, 2), &haar_unitary(rng, 2));
    let b = kron(&haar_unitary(rng, 2), &haar_unitary(rng, 2));
    let ph = C64::from_polar(1.0, uniform(rng, 0.0, 6.28));
    a * core * b * ph
}

/// Random unitary with a known number of nonzero canonical parameters.
pub fn unitary_of_class(rng: &mut Rng, kc: usize) -> M {
    let (x, y, z) = weyl_point(rng, 0.05);
    let core = match kc {
        0 => u_global(0.0, 0.0, 0.0),
        1 => u_global(x, 0.0, 0.0),
        2 => u_global(x, y, 0.0),
        _ => u_global(x, y, z),
    };
    dress(rng, core)
}
