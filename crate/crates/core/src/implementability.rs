//! Chain-form factors, ladder decisions and the four-qubit Schmidt-rank scan.
//!
//! A chain factor on `k` wires is
//! `V = Σ_{a_1..a_{k−1}} E_1^{(a_1)} ⊗ E_2^{(a_1,a_2)} ⊗ ⋯ ⊗ E_k^{(a_{k−1})}`,
//! the most general operator one column of a `(k,N)` cluster can apply.
//! A product of `N` such factors is what `N` columns can apply.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::{best_scalar, controlled_sequence, kraus_cirac, op_number, operator_schmidt, schmidt_rank, ControlledFactor, DecompError, KrausCiracForm};
use crate::network::NodeId;
use crate::tensor::{c, gates, kron_all, max_distance, unitarity_deviation, CMatrix, Qubit, StateVector, C64, ONE, UNITARITY_TOL, ZERO};

/// Relative residual accepted by proportionality checks.
pub const PROPORTIONALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ImplementabilityError {
    #[error("chain factor site {site} has {got} matrices, expected {expected}")]
    SiteArity { site: usize, expected: usize, got: usize },
    #[error("chain factor site {site} holds a non-2x2 matrix")]
    SiteShape { site: usize },
    #[error("chain factor declared unitary deviates by {0:.3e}")]
    NotUnitary(f64),
    #[error("factors have mixed wire counts {0} and {1}")]
    WireMismatch(usize, usize),
    #[error("empty factor list")]
    Empty,
    #[error("family index must be 1..=9, got {0}")]
    UnknownFamily(usize),
    #[error("family {family} takes {expected} parameters, got {got}")]
    ParameterCount { family: usize, expected: usize, got: usize },
    #[error("family {0} evaluates to the zero vector at these parameters")]
    ZeroState(usize),
    #[error("expected a four-qubit state, got {0} qubits")]
    NotFourQubits(usize),
    #[error("no controlled basis: {0}")]
    NoControlBasis(String),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// Per-wire matrices of one chain factor.
///
/// `sites[0]` and `sites[k−1]` hold `E^{(a)}` for `a = 0, 1`; interior sites hold
/// `E^{(a,a')}` at index `2a + a'`. A single wire holds one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFactor {
    pub sites: Vec<Vec<CMatrix>>,
    /// Whether the assembled matrix must be unitary.
    pub unitary: bool,
}

impl ChainFactor {
    pub fn new(sites: Vec<Vec<CMatrix>>, unitary: bool) -> Result<Self, ImplementabilityError> {
        let k = sites.len();
        if k == 0 {
            return Err(ImplementabilityError::Empty);
        }
        for (i, s) in sites.iter().enumerate() {
            let expected = match (k, i) {
                (1, _) => 1,
                (_, 0) => 2,
                (_, i) if i == k - 1 => 2,
                _ => 4,
            };
            if s.len() != expected {
                return Err(ImplementabilityError::SiteArity { site: i, expected, got: s.len() });
            }
            if s.iter().any(|m| m.shape() != (2, 2)) {
                return Err(ImplementabilityError::SiteShape { site: i });
            }
        }
        let f = ChainFactor { sites, unitary };
        if unitary {
            let dev = unitarity_deviation(&f.matrix());
            if dev > 1e3 * UNITARITY_TOL {
                return Err(ImplementabilityError::NotUnitary(dev));
            }
        }
        Ok(f)
    }

    pub fn wires(&self) -> usize {
        self.sites.len()
    }

    /// The identity on `k` wires.
    pub fn identity(k: usize) -> Self {
        let zero = CMatrix::zeros(2, 2);
        let sites = (0..k)
            .map(|i| match (k, i) {
                (1, _) => vec![gates::id2()],
                (_, 0) => vec![gates::id2(), zero.clone()],
                (_, i) if i == k - 1 => vec![gates::id2(), zero.clone()],
                _ => vec![gates::id2(), zero.clone(), zero.clone(), zero.clone()],
            })
            .collect();
        ChainFactor { sites, unitary: true }
    }

    /// Two-wire factor of a controlled gate with its local dressing.
    pub fn from_controlled(f: &ControlledFactor) -> Self {
        let p = projectors();
        let first = p.iter().map(|pa| &f.left[0] * pa * &f.right[0]).collect();
        let last = [&f.u0, &f.u1].iter().map(|u| &f.left[1] * *u * &f.right[1]).collect();
        ChainFactor { sites: vec![first, last], unitary: true }
    }

    /// Three-wire factor `(L_1⊗L_2⊗L_3) C_{1,3;2}(w) (R_1⊗R_2⊗R_3)`, with `w` indexed `2a + b`.
    pub fn fully_controlled(w: &[CMatrix; 4], left: &[CMatrix; 3], right: &[CMatrix; 3]) -> Self {
        let p = projectors();
        let outer = |i: usize| p.iter().map(|pa| &left[i] * pa * &right[i]).collect::<Vec<_>>();
        let mid = w.iter().map(|m| &left[1] * m * &right[1]).collect();
        ChainFactor { sites: vec![outer(0), mid, outer(2)], unitary: true }
    }

    /// The assembled `2^k × 2^k` matrix.
    pub fn matrix(&self) -> CMatrix {
        let k = self.sites.len();
        if k == 1 {
            return self.sites[0][0].clone();
        }
        let dim = 1usize << k;
        let mut acc = CMatrix::zeros(dim, dim);
        for bits in 0..1usize << (k - 1) {
            let a = |i: usize| (bits >> (k - 2 - i)) & 1;
            let mut ms: Vec<&CMatrix> = Vec::with_capacity(k);
            ms.push(&self.sites[0][a(0)]);
            for i in 1..k - 1 {
                ms.push(&self.sites[i][2 * a(i - 1) + a(i)]);
            }
            ms.push(&self.sites[k - 1][a(k - 2)]);
            acc += kron_all(ms);
        }
        acc
    }
}

fn projectors() -> [CMatrix; 2] {
    [gates::diag2(ONE, ZERO), gates::diag2(ZERO, ONE)]
}

/// `V_1 V_2 ⋯ V_N` as matrices.
pub fn chain_compose(factors: &[ChainFactor]) -> Result<CMatrix, ImplementabilityError> {
    let first = factors.first().ok_or(ImplementabilityError::Empty)?;
    let k = first.wires();
    let mut acc = CMatrix::identity(1 << k, 1 << k);
    for f in factors {
        if f.wires() != k {
            return Err(ImplementabilityError::WireMismatch(k, f.wires()));
        }
        acc *= f.matrix();
    }
    Ok(acc)
}

/// Outcome of [`decide_ladder`].
#[derive(Debug, Clone)]
pub struct LadderDecision {
    pub implementable: bool,
    pub kc: usize,
    pub n: usize,
    pub canonical: KrausCiracForm,
    /// `U = F_1 ⋯ F_N` when implementable; `F_N` runs in column 1.
    pub certificate: Option<Vec<ControlledFactor>>,
    /// `‖F_1 ⋯ F_N − U‖_max` of the certificate.
    pub residual: f64,
}

/// Decides deterministic implementability of a two-qubit `U` on a `(2,N)` ladder: yes iff `KC#(U) ≤ N`.
pub fn decide_ladder(u: &CMatrix, n: usize) -> Result<LadderDecision, ImplementabilityError> {
    let canonical = kraus_cirac(u)?;
    let kc = canonical.kc;
    if n == 0 || kc > n {
        let implementable = n > 0 && kc == 0;
        return Ok(LadderDecision { implementable, kc, n, canonical, certificate: None, residual: f64::NAN });
    }
    let mut factors = controlled_sequence(u, n.min(3))?;
    factors.resize(n, ControlledFactor::identity());
    let product = factors.iter().fold(CMatrix::identity(4, 4), |acc, f| acc * f.matrix());
    let residual = max_distance(&product, u);
    Ok(LadderDecision { implementable: true, kc, n, canonical, certificate: Some(factors), residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalityCheck {
    pub pass: bool,
    /// `c` with `chain ≈ c · U`.
    pub scalar: [f64; 2],
    pub relative_residual: f64,
}

/// Checks `V_1 ⋯ V_N ∝ U` for possibly non-unitary factors.
pub fn probabilistic_chain_verify(u: &CMatrix, factors: &[ChainFactor]) -> Result<ProportionalityCheck, ImplementabilityError> {
    let product = chain_compose(factors)?;
    if product.shape() != u.shape() {
        return Err(ImplementabilityError::WireMismatch(crate::tensor::qubit_count(u.nrows())?, factors[0].wires()));
    }
    let norm = product.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let (s, res) = best_scalar(&product, u);
    let pass = norm > 0.0 && s.norm() > 0.0 && res <= PROPORTIONALITY_TOL;
    Ok(ProportionalityCheck { pass, scalar: [s.re, s.im], relative_residual: if norm > 0.0 { res } else { 1.0 } })
}

/// Local unitaries exposing the controlled structure of a unitary.
///
/// `V = (⊗ left) · core · (⊗ right)`; `core` is block diagonal in the
/// computational basis of each boundary wire that was diagonalized.
#[derive(Debug, Clone)]
pub struct LocalCertificate {
    pub left: Vec<CMatrix>,
    pub right: Vec<CMatrix>,
    pub core: CMatrix,
    /// Largest off-block entry of `core`.
    pub off_block: f64,
    /// `‖(⊗left) core (⊗right) − V‖_max`.
    pub residual: f64,
}

impl LocalCertificate {
    /// For three wires, `core = Σ |ab⟩⟨ab|_{1,3} ⊗ w^{(ab)}` with `w` indexed `2a + b`.
    pub fn targets(&self) -> Vec<CMatrix> {
        let k = self.left.len();
        let mut out = Vec::new();
        match k {
            2 => {
                for a in 0..2 {
                    out.push(self.core.view((2 * a, 2 * a), (2, 2)).into_owned());
                }
            }
            3 => {
                for a in 0..2 {
                    for b in 0..2 {
                        out.push(CMatrix::from_fn(2, 2, |r, c| self.core[(4 * a + 2 * r + b, 4 * a + 2 * c + b)]));
                    }
                }
            }
            _ => {}
        }
        out
    }
}

/// 2×2 unitary whose columns are eigenvectors of a normal `m` with distinct eigenvalues.
fn normal_eigenbasis(m: &CMatrix) -> Option<CMatrix> {
    let (a, b, cc, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let half = (a + d) * 0.5;
    let disc = (half * half - (a * d - b * cc)).sqrt();
    if disc.norm() < 1e-9 * (half.norm() + 1.0) {
        return None;
    }
    let l = half + disc;
    let v = if b.norm() >= cc.norm() { [b, l - a] } else { [l - d, cc] };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if n == 0.0 {
        return None;
    }
    let (v0, v1) = (v[0] / n, v[1] / n);
    Some(CMatrix::from_row_slice(2, 2, &[v0, -v1.conj(), v1, v0.conj()]))
}

/// Local unitaries `a, a'` on wire `site` with `V = (a ⊗ 1) V' (a' ⊗ 1)` and `V'` block diagonal on that wire.
fn control_basis(v: &CMatrix, k: usize, site: usize) -> Result<(CMatrix, CMatrix), ImplementabilityError> {
    let os = operator_schmidt(v, &[site])?;
    match os.rank() {
        0 => Err(ImplementabilityError::NoControlBasis("zero operator".into())),
        1 => {
            let p = &os.left[0];
            let s = (p.iter().map(|x| x.norm_sqr()).sum::<f64>() / 2.0).sqrt();
            Ok((p.map(|x| x / s), gates::id2()))
        }
        2 => {
            let (p1, p2) = (&os.left[0], &os.left[1]);
            let mut best: Option<(f64, CMatrix)> = None;
            for t in [0.0, 0.37, -1.21, 2.9, 0.61] {
                let m = p1 + p2.map(|x| x * c(t, 0.3 * t));
                let det = m.determinant().norm();
                if best.as_ref().map_or(true, |(d, _)| det > *d) {
                    best = Some((det, m));
                }
            }
            let (det, m) = best.expect("non-empty");
            if det < 1e-12 {
                return Err(ImplementabilityError::NoControlBasis("singular span".into()));
            }
            let minv = m.clone().try_inverse().ok_or_else(|| ImplementabilityError::NoControlBasis("singular span".into()))?;
            let a = normal_eigenbasis(&(p2 * &minv)).ok_or_else(|| ImplementabilityError::NoControlBasis("degenerate span".into()))?;
            // a† M = D a' with D diagonal: normalize the rows.
            let r = a.adjoint() * &m;
            let mut a_prime = r.clone();
            for i in 0..2 {
                let n = (r[(i, 0)].norm_sqr() + r[(i, 1)].norm_sqr()).sqrt();
                for j in 0..2 {
                    a_prime[(i, j)] = r[(i, j)] / n;
                }
            }
            if unitarity_deviation(&a_prime) > 1e-8 {
                return Err(ImplementabilityError::NoControlBasis(format!("wire {site} is not controlled in any local basis (k={k})")));
            }
            Ok((a, a_prime))
        }
        r => Err(ImplementabilityError::NoControlBasis(format!("operator Schmidt rank {r} across wire {site}"))),
    }
}

/// Largest entry coupling different computational values of wire `site`.
fn off_block(m: &CMatrix, k: usize, site: usize) -> f64 {
    let bit = 1usize << (k - 1 - site);
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            if (r & bit) != (col & bit) {
                worst = worst.max(m[(r, col)].norm());
            }
        }
    }
    worst
}

/// Finds local unitaries that make a two- or three-wire unitary controlled on its boundary wires.
///
/// Two wires: `V ≅ Σ_a |a⟩⟨a| ⊗ w^{(a)}`. Three wires: `V ≅ Σ_{ab} |a⟩⟨a| ⊗ w^{(ab)} ⊗ |b⟩⟨b|`.
pub fn certify_local_basis(v: &CMatrix) -> Result<LocalCertificate, ImplementabilityError> {
    let k = crate::tensor::qubit_count(v.nrows())?;
    if !(2..=3).contains(&k) {
        return Err(ImplementabilityError::NoControlBasis(format!("{k} wires")));
    }
    let mut left = vec![gates::id2(); k];
    let mut right = vec![gates::id2(); k];
    let mut core = v.clone();
    let sites: &[usize] = if k == 2 { &[0] } else { &[0, 2] };
    for &site in sites {
        let (a, a_prime) = control_basis(&core, k, site)?;
        let mut l = vec![gates::id2(); k];
        let mut r = vec![gates::id2(); k];
        l[site] = a.adjoint();
        r[site] = a_prime.adjoint();
        core = kron_all(l.iter()) * core * kron_all(r.iter());
        left[site] = &left[site] * &a;
        right[site] = &a_prime * &right[site];
    }
    let off = sites.iter().map(|&s| off_block(&core, k, s)).fold(0.0, f64::max);
    let residual = max_distance(&(kron_all(left.iter()) * &core * kron_all(right.iter())), v);
    Ok(LocalCertificate { left, right, core, off_block: off, residual })
}

/// Schmidt ranks across `12|34`, `13|24` and `14|23`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchmidtTriple(pub [usize; 3]);

impl SchmidtTriple {
    /// The assignment a two-factor SWAP would need: 4 on `12|34`, 2 on the others.
    pub fn is_forbidden_ordered(&self) -> bool {
        self.0 == [4, 2, 2]
    }

    pub fn is_forbidden_unordered(&self) -> bool {
        let mut s = self.0;
        s.sort_unstable();
        s == [2, 2, 4]
    }

    pub fn key(&self) -> String {
        format!("{{{},{},{}}}", self.0[0], self.0[1], self.0[2])
    }
}

pub fn schmidt_triple(state: &StateVector) -> Result<SchmidtTriple, ImplementabilityError> {
    if state.num_qubits() != 4 {
        return Err(ImplementabilityError::NotFourQubits(state.num_qubits()));
    }
    let l: Vec<String> = state.labels().iter().map(|s| s.to_string()).collect();
    let r = |a: usize, b: usize| schmidt_rank(state, &[l[a].as_str(), l[b].as_str()]);
    Ok(SchmidtTriple([r(0, 1)?, r(0, 2)?, r(0, 3)?]))
}

/// Number of complex parameters of family `index`.
pub fn family_arity(index: usize) -> Result<usize, ImplementabilityError> {
    match index {
        1 => Ok(4),
        2 => Ok(3),
        3 | 4 => Ok(2),
        5 | 6 => Ok(1),
        7..=9 => Ok(0),
        _ => Err(ImplementabilityError::UnknownFamily(index)),
    }
}

/// Unnormalized amplitudes of family `index`, indexed by the big-endian basis number.
pub fn family_amplitudes(index: usize, params: &[C64]) -> Result<[C64; 16], ImplementabilityError> {
    let expected = family_arity(index)?;
    if params.len() != expected {
        return Err(ImplementabilityError::ParameterCount { family: index, expected, got: params.len() });
    }
    let p = |i: usize| params[i];
    let mut v = [ZERO; 16];
    let mut set = |bits: &str, amp: C64| v[usize::from_str_radix(bits, 2).expect("binary literal")] += amp;
    let i = c(0.0, 1.0);
    let half = c(0.5, 0.0);
    match index {
        1 => {
            let (a, b, cc, d) = (p(0), p(1), p(2), p(3));
            for (k, amp) in [("0000", a + d), ("1111", a + d), ("0011", a - d), ("1100", a - d), ("0101", b + cc), ("1010", b + cc), ("0110", b - cc), ("1001", b - cc)] {
                set(k, amp * half);
            }
        }
        2 => {
            let (a, b, cc) = (p(0), p(1), p(2));
            for (k, amp) in [("0000", (a + b) * half), ("1111", (a + b) * half), ("0011", (a - b) * half), ("1100", (a - b) * half), ("0101", cc), ("1010", cc), ("0110", ONE)] {
                set(k, amp);
            }
        }
        3 => {
            let (a, b) = (p(0), p(1));
            for (k, amp) in [("0000", a), ("1111", a), ("0101", b), ("1010", b), ("0110", ONE), ("0011", ONE)] {
                set(k, amp);
            }
        }
        4 => {
            let (a, b) = (p(0), p(1));
            let r = i * std::f64::consts::FRAC_1_SQRT_2;
            for (k, amp) in [
                ("0000", a),
                ("1111", a),
                ("0101", (a + b) * half),
                ("1010", (a + b) * half),
                ("0110", (a - b) * half),
                ("1001", (a - b) * half),
                ("0001", r),
                ("0010", r),
                ("0111", r),
                ("1011", r),
            ] {
                set(k, amp);
            }
        }
        5 => {
            let a = p(0);
            for (k, amp) in [("0000", a), ("0101", a), ("1010", a), ("1111", a), ("0001", i), ("0110", ONE), ("1011", -i)] {
                set(k, amp);
            }
        }
        6 => {
            let a = p(0);
            for (k, amp) in [("0000", a), ("1111", a), ("0011", ONE), ("0101", ONE), ("0110", ONE)] {
                set(k, amp);
            }
        }
        7 => ["0000", "0101", "1000", "1110"].iter().for_each(|k| set(k, ONE)),
        8 => ["0000", "1011", "1101", "1110"].iter().for_each(|k| set(k, ONE)),
        _ => ["0000", "0111"].iter().for_each(|k| set(k, ONE)),
    }
    Ok(v)
}

/// Normalized family state on qubits `q1..q4`.
pub fn family_state(index: usize, params: &[C64]) -> Result<StateVector, ImplementabilityError> {
    let v = family_amplitudes(index, params)?;
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return Err(ImplementabilityError::ZeroState(index));
    }
    let reg = (1..=4).map(|q| Qubit::new(format!("q{q}"), NodeId::named("local"))).collect();
    Ok(StateVector::from_amplitudes(reg, v.iter().map(|a| a / norm).collect())?)
}

/// Parameter grid for [`swap_impossibility_scan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanGrid {
    pub magnitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub families: Vec<usize>,
    /// Keep one record per grid point in the report.
    pub record_points: bool,
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid {
            magnitudes: vec![0.0, 0.3, 0.7, 1.2],
            phases: vec![0.0, PI / 4.0, PI / 2.0, PI],
            families: (1..=9).collect(),
            record_points: false,
        }
    }
}

impl ScanGrid {
    /// Distinct complex values `r e^{iφ}`; a zero magnitude contributes one value.
    pub fn values(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for &r in &self.magnitudes {
            if r == 0.0 {
                if !out.contains(&ZERO) {
                    out.push(ZERO);
                }
                continue;
            }
            for &ph in &self.phases {
                out.push(C64::from_polar(r, ph));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub family: usize,
    pub params: Vec<[f64; 2]>,
    pub triple: [usize; 3],
    pub forbidden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyScan {
    pub family: usize,
    pub points: u64,
    pub zero_states: u64,
    /// Ordered triple `{12|34, 13|24, 14|23}` → count.
    pub histogram: BTreeMap<String, u64>,
    pub forbidden_ordered: u64,
    pub forbidden_unordered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub grid: ScanGrid,
    pub families: Vec<FamilyScan>,
    pub total_points: u64,
    pub forbidden_ordered: u64,
    pub forbidden_unordered: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub points: Vec<ScanPoint>,
}

impl ScanReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("family,params,triple,forbidden\n");
        for p in &self.points {
            let params: Vec<String> = p.params.iter().map(|[re, im]| format!("{re:+.6}{im:+.6}i")).collect();
            s.push_str(&format!("{},{},{}:{}:{},{}\n", p.family, params.join(" "), p.triple[0], p.triple[1], p.triple[2], p.forbidden));
        }
        s
    }
}

/// Schmidt triples over a parameter grid of the nine four-qubit families.
///
/// Counts triples with the `{4,2,2}` assignment (rank 4 on `12|34`) and with
/// `{4,2,2}` in any order. Parameter tuples giving the zero vector are skipped.
pub fn swap_impossibility_scan(grid: &ScanGrid) -> Result<ScanReport, ImplementabilityError> {
    let values = grid.values();
    let mut families = Vec::new();
    let mut points = Vec::new();
    for &fam in &grid.families {
        let arity = family_arity(fam)?;
        let mut scan = FamilyScan { family: fam, points: 0, zero_states: 0, histogram: BTreeMap::new(), forbidden_ordered: 0, forbidden_unordered: 0 };
        if arity > 0 && values.is_empty() {
            families.push(scan);
            continue;
        }
        let total = values.len().pow(arity as u32);
        for idx in 0..total {
            let mut rest = idx;
            let params: Vec<C64> = (0..arity)
                .map(|_| {
                    let v = values[rest % values.len()];
                    rest /= values.len();
                    v
                })
                .collect();
            let state = match family_state(fam, &params) {
                Ok(s) => s,
                Err(ImplementabilityError::ZeroState(_)) => {
                    scan.zero_states += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let t = schmidt_triple(&state)?;
            scan.points += 1;
            *scan.histogram.entry(t.key()).or_default() += 1;
            scan.forbidden_ordered += t.is_forbidden_ordered() as u64;
            scan.forbidden_unordered += t.is_forbidden_unordered() as u64;
            if grid.record_points {
                points.push(ScanPoint { family: fam, params: params.iter().map(|p| [p.re, p.im]).collect(), triple: t.0, forbidden: t.is_forbidden_unordered() });
            }
        }
        families.push(scan);
    }
    Ok(ScanReport {
        grid: grid.clone(),
        total_points: families.iter().map(|f| f.points).sum(),
        forbidden_ordered: families.iter().map(|f| f.forbidden_ordered).sum(),
        forbidden_unordered: families.iter().map(|f| f.forbidden_unordered).sum(),
        families,
        points,
    })
}

/// Reads a 4×4 operator `P` as the four-qubit state `Σ_{ij} P_{ij} |j⟩_{12}|i⟩_{34}`.
pub fn operator_as_state(p: &CMatrix) -> Result<StateVector, ImplementabilityError> {
    let mut amps = vec![ZERO; 16];
    for i in 0..4 {
        for j in 0..4 {
            amps[4 * j + i] = p[(i, j)];
        }
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(ImplementabilityError::ZeroState(0));
    }
    let reg = (1..=4).map(|q| Qubit::new(format!("q{q}"), NodeId::named("local"))).collect();
    Ok(StateVector::from_amplitudes(reg, amps.into_iter().map(|a| a / norm).collect())?)
}

/// `(Op#(P), Op#(P⁻¹))` for an invertible two-qubit operator.
pub fn inverse_op_numbers(p: &CMatrix) -> Result<Option<(usize, usize)>, ImplementabilityError> {
    let Some(inv) = p.clone().try_inverse() else { return Ok(None) };
    Ok(Some((op_number(p)?, op_number(&inv)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{ginibre, haar_unitary, seeded};

    fn p0() -> CMatrix {
        projectors()[0].clone()
    }

    #[test]
    fn cnot_from_chain_sites() {
        let p = projectors();
        let f = ChainFactor::new(vec![vec![p[0].clone(), p[1].clone()], vec![gates::id2(), gates::x()]], true).unwrap();
        assert!(max_distance(&f.matrix(), &gates::cnot()) < 1e-15);
        let id = ChainFactor::identity(4);
        assert!(max_distance(&id.matrix(), &CMatrix::identity(16, 16)) < 1e-15);
    }

    #[test]
    fn site_arity_is_checked() {
        let r = ChainFactor::new(vec![vec![p0()], vec![p0(), p0()]], false);
        assert!(matches!(r, Err(ImplementabilityError::SiteArity { site: 0, expected: 2, got: 1 })));
        let r = ChainFactor::new(vec![vec![p0(), p0()], vec![p0(), p0()]], true);
        assert!(matches!(r, Err(ImplementabilityError::NotUnitary(_))));
    }

    #[test]
    fn fully_controlled_factor_matches_gate() {
        let mut rng = seeded(5);
        let w = [0, 1, 2, 3].map(|_| haar_unitary(&mut rng, 2));
        let id = [gates::id2(), gates::id2(), gates::id2()];
        let f = ChainFactor::fully_controlled(&w, &id, &id);
        // C_{1,3;2} in wire order (1,2,3) is fully_controlled in (a, target, b) order.
        assert!(max_distance(&f.matrix(), &gates::fully_controlled(&w)) < 1e-14);
    }

    #[test]
    fn swap_as_three_chain_factors() {
        let fs: Vec<ChainFactor> = controlled_sequence(&gates::swap(), 3).unwrap().iter().map(ChainFactor::from_controlled).collect();
        assert!(max_distance(&chain_compose(&fs).unwrap(), &gates::swap()) < 1e-12);
    }

    #[test]
    fn ladder_decisions() {
        assert!(!decide_ladder(&gates::swap(), 2).unwrap().implementable);
        let d = decide_ladder(&gates::cnot(), 1).unwrap();
        assert!(d.implementable && d.residual < 1e-12);
        let matchgate = gates::u_global(0.5, 0.2, 0.0);
        let d = decide_ladder(&matchgate, 2).unwrap();
        assert_eq!(d.kc, 2);
        assert!(d.implementable && d.certificate.unwrap().len() == 2);
    }

    #[test]
    fn proportional_chain_passes() {
        let fs: Vec<ChainFactor> = controlled_sequence(&gates::cnot(), 2).unwrap().iter().map(ChainFactor::from_controlled).collect();
        assert!(probabilistic_chain_verify(&gates::cnot(), &fs).unwrap().pass);
        let mut scaled = fs.clone();
        scaled[0].sites[0].iter_mut().for_each(|m| *m *= c(2.0, 0.0));
        scaled[1].sites[1].iter_mut().for_each(|m| *m *= c(0.5, 0.0));
        scaled.iter_mut().for_each(|f| f.unitary = false);
        let chk = probabilistic_chain_verify(&gates::cnot(), &scaled).unwrap();
        assert!(chk.pass);
        let zero = ChainFactor { sites: vec![vec![CMatrix::zeros(2, 2); 2]; 2], unitary: false };
        assert!(!probabilistic_chain_verify(&gates::cnot(), &[zero]).unwrap().pass);
    }

    #[test]
    fn random_two_factor_chains_never_give_swap() {
        let mut rng = seeded(17);
        for _ in 0..50 {
            let f = |rng: &mut crate::random::Rng| ChainFactor { sites: (0..2).map(|_| (0..2).map(|_| ginibre(rng, 2, 2)).collect()).collect(), unitary: false };
            let fs = [f(&mut rng), f(&mut rng)];
            assert!(!probabilistic_chain_verify(&gates::swap(), &fs).unwrap().pass);
        }
    }

    #[test]
    fn certifies_controlled_basis() {
        let mut rng = seeded(23);
        let a = haar_unitary(&mut rng, 2).kronecker(&haar_unitary(&mut rng, 2));
        let b = haar_unitary(&mut rng, 2).kronecker(&haar_unitary(&mut rng, 2));
        let v = &a * gates::controlled(&haar_unitary(&mut rng, 2), &haar_unitary(&mut rng, 2)) * &b;
        let cert = certify_local_basis(&v).unwrap();
        assert!(cert.off_block < 1e-10 && cert.residual < 1e-10, "{} {}", cert.off_block, cert.residual);
        let w = [0, 1, 2, 3].map(|_| haar_unitary(&mut rng, 2));
        let l = [0, 1, 2].map(|_| haar_unitary(&mut rng, 2));
        let r = [0, 1, 2].map(|_| haar_unitary(&mut rng, 2));
        let v = ChainFactor::fully_controlled(&w, &l, &r).matrix();
        let cert = certify_local_basis(&v).unwrap();
        assert!(cert.off_block < 1e-10 && cert.residual < 1e-10, "{} {}", cert.off_block, cert.residual);
        assert!(certify_local_basis(&gates::swap()).is_err());
    }

    #[test]
    fn family_triples() {
        let t = |f: usize| schmidt_triple(&family_state(f, &[]).unwrap()).unwrap().0;
        assert_eq!(t(7), [3, 3, 3]);
        assert_eq!(t(8), [3, 3, 3]);
        assert_eq!(t(9), [2, 2, 2]);
        let s = family_state(5, &[ZERO]).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((s.amplitudes()[1] - c(0.0, r)).norm() < 1e-15);
        assert!((s.amplitudes()[11] - c(0.0, -r)).norm() < 1e-15);
        let t1 = schmidt_triple(&family_state(1, &[ONE, c(0.5, 0.0), c(0.5, 0.0), ONE]).unwrap()).unwrap();
        assert_eq!(t1.0, [4, 2, 4]);
        assert!(matches!(family_state(6, &[]), Err(ImplementabilityError::ParameterCount { .. })));
        assert!(matches!(family_state(1, &[ZERO; 4]), Err(ImplementabilityError::ZeroState(1))));
    }

    #[test]
    fn phi6_scan_is_uniform() {
        let grid = ScanGrid { families: vec![6], ..ScanGrid::default() };
        let rep = swap_impossibility_scan(&grid).unwrap();
        assert_eq!(rep.total_points, 13);
        for k in rep.families[0].histogram.keys() {
            assert!(k == "{2,2,2}" || k == "{3,3,3}", "{k}");
        }
    }

    #[test]
    fn operator_state_ranks() {
        let st = operator_as_state(&gates::cnot()).unwrap();
        let t = schmidt_triple(&st).unwrap();
        // rank(P), Op#(P), Op#(SWAP·P)
        assert_eq!(t.0[0], 4);
        assert_eq!(t.0[1], op_number(&gates::cnot()).unwrap());
        assert_eq!(t.0[2], op_number(&(gates::swap() * gates::cnot())).unwrap());
    }
}
