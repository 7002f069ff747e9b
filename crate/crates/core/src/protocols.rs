//! Two-qubit gate protocols over the butterfly, grail and ladder networks, and their verification.
//!
//! Butterfly: the `(3,2)` embedding carries `U_global(x, y, z)` on rows 1 and 3
//! with a `|0⟩` ancilla on row 2. Column 1 runs `C_{1,3;2}(1, Z, Z, 1)` between
//! Hadamard layers, every row is teleported right, and column 2 runs
//! `C'_{1,3;2}(w)` followed by `u(x)` on row 2. Measuring row 2 and applying
//! `X ⊗ X` on rows 1 and 3 when the outcome is 1 finishes the gate.
//!
//! Grail: the inner `(2,3)` cluster runs a three-CNOT circuit, one CNOT per column;
//! the two outer edges only teleport.
//!
//! Ladder: a `(2,N)` cluster runs one controlled factor per column.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversion::{compile_onto, Column, ControlledGate, ConversionError, ConvertedCircuit};
use crate::decomp::{kraus_cirac, three_cnot_decompose, DecompError, KrausCiracForm};
use crate::implementability::{decide_ladder, ImplementabilityError};
use crate::locc::{execute, fully_controlled_gate, ExecOptions, LoccError, LoccProtocol, ProtocolBuilder};
use crate::network::{build_cluster, butterfly_network, grail_network, Network, NodeId};
use crate::random::{haar_state, seeded};
use crate::tensor::{c, gates, unitarity_deviation, CMatrix, Qubit, StateVector, C64, ONE, UNITARITY_TOL, ZERO};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("not implementable on a ladder of length {n}: KC# is {kc}")]
    Refused { kc: usize, n: usize },
    #[error("eigenvector index must be 0..=3, got {0}")]
    InvalidIndex(usize),
    #[error("ladder length must be at least 1")]
    EmptyLadder,
    #[error("target is not a 4x4 unitary")]
    NotUnitary,
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Locc(#[from] LoccError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error(transparent)]
    Implementability(#[from] ImplementabilityError),
}

/// A compiled protocol with the network it runs on and the unitary it should implement.
#[derive(Debug, Clone)]
pub struct Program {
    pub name: String,
    pub network: Network,
    pub protocol: LoccProtocol,
    /// Target on the protocol's inputs, in input order.
    pub target: CMatrix,
}

/// `u(x) = H · diag(e^{ix}, −i e^{−ix})`.
pub fn u_of_x(x: f64) -> CMatrix {
    gates::h() * gates::diag2(C64::from_polar(1.0, x), c(0.0, -1.0) * C64::from_polar(1.0, -x))
}

/// Targets of the second fully controlled gate, indexed `2a + b`.
pub fn second_gate_targets(y: f64, z: f64) -> [CMatrix; 4] {
    let mi = c(0.0, -1.0);
    let same = gates::diag2(C64::from_polar(1.0, z - y), mi * C64::from_polar(1.0, z + y));
    let diff = gates::diag2(C64::from_polar(1.0, -(z - y)), mi * C64::from_polar(1.0, -(z + y)));
    [same.clone(), diff.clone(), diff, same]
}

/// Targets `(1, Z, Z, 1)` of the first fully controlled gate.
pub fn first_gate_targets() -> [CMatrix; 4] {
    [gates::id2(), gates::z(), gates::z(), gates::id2()]
}

/// True when `C_{1,3;2}(w)` equals a product of `C_{1;2}` and `C_{3;2}` in either order.
///
/// `C_{1;2}(A) C_{3;2}(B)` has `w_{ab} = A_a B_b`, so `w_00† w_01 = w_10† w_11`;
/// the reverse order has `w_01 w_00† = w_11 w_10†`. Both conditions are also sufficient.
pub fn splits_into_two_controlled(w: &[CMatrix; 4], tol: f64) -> bool {
    let close = |a: &CMatrix, b: &CMatrix| crate::tensor::max_distance(a, b) <= tol;
    close(&(w[0].adjoint() * &w[1]), &(w[2].adjoint() * &w[3])) || close(&(&w[1] * w[0].adjoint()), &(&w[3] * w[2].adjoint()))
}

/// Appends the butterfly gadget for `U_global(x, y, z)` to `b`; the network must embed a `(3,2)` grid.
///
/// `top` and `bottom` are the data qubits at grid nodes `(1,1)` and `(3,1)`;
/// returns their labels at `(1,2)` and `(3,2)`.
pub fn butterfly_gadget(b: &mut ProtocolBuilder, top: &str, bottom: &str, (x, y, z): (f64, f64, f64)) -> Result<(String, String), LoccError> {
    let mid_node = b.grid(2, 1)?;
    let mid = b.ancilla(&mid_node, "anc");
    for q in [top, mid.as_str(), bottom] {
        b.local(&[q], gates::h())?;
    }
    fully_controlled_gate(b, 1, (1, 3, 2), [top, bottom, &mid], &first_gate_targets())?;
    for q in [top, mid.as_str(), bottom] {
        b.local(&[q], gates::h())?;
    }
    b.local(&[top], gates::x())?;
    b.local(&[bottom], gates::x())?;
    let mut moved = Vec::new();
    for (row, q) in [(1, top), (2, mid.as_str()), (3, bottom)] {
        let dest = b.grid(row, 2)?;
        moved.push(b.teleport_to(q, &dest)?);
    }
    let (t, m, bt) = (moved[0].clone(), moved[1].clone(), moved[2].clone());
    fully_controlled_gate(b, 2, (1, 3, 2), [&t, &bt, &m], &second_gate_targets(y, z))?;
    b.local(&[&m], u_of_x(x))?;
    let k = b.measure(&m)?;
    let from = b.node_of(&m)?;
    for q in [&t, &bt] {
        let to = b.node_of(q)?;
        b.send(&k, &from, &to);
        b.conditional_local(std::slice::from_ref(&k), q, gates::x())?;
    }
    Ok((t, bt))
}

/// Protocol for `U_global(x, y, z)` over the butterfly network.
pub fn butterfly_protocol(x: f64, y: f64, z: f64) -> Result<Program, ProtocolError> {
    butterfly_protocol_on(butterfly_network(), x, y, z)
}

/// Same as [`butterfly_protocol`] on any network embedding a `(3,2)` grid with inputs at rows 1 and 3.
pub fn butterfly_protocol_on(network: Network, x: f64, y: f64, z: f64) -> Result<Program, ProtocolError> {
    let protocol = {
        let mut b = ProtocolBuilder::new(&network);
        let (n11, n31) = (b.grid(1, 1)?, b.grid(3, 1)?);
        let top = b.input("I1", &n11);
        let bottom = b.input("I2", &n31);
        let (o1, o2) = butterfly_gadget(&mut b, &top, &bottom, (x, y, z))?;
        b.finish(vec![o1, o2])
    };
    Ok(Program { name: "butterfly".into(), network, protocol, target: gates::u_global(x, y, z) })
}

fn check_two_qubit(u: &CMatrix) -> Result<(), ProtocolError> {
    if u.shape() != (4, 4) || unitarity_deviation(u) > 1e3 * UNITARITY_TOL {
        return Err(ProtocolError::NotUnitary);
    }
    Ok(())
}

/// Protocol for an arbitrary two-qubit `U` over the butterfly network.
///
/// The canonical form supplies `(u ⊗ u') U_global (w ⊗ w')`; `w, w'` run at the
/// inputs and `u, u'` at the outputs. Local `U` (KC# 0) only teleports along
/// the two straight edges.
pub fn implement_full_two_qubit(u: &CMatrix) -> Result<Program, ProtocolError> {
    implement_full_two_qubit_on(butterfly_network(), u)
}

/// Same as [`implement_full_two_qubit`] on a network embedding a `(3,N)` grid, `N ≥ 2`.
///
/// Columns past the second only carry the outputs to column `N`.
pub fn implement_full_two_qubit_on(network: Network, u: &CMatrix) -> Result<Program, ProtocolError> {
    check_two_qubit(u)?;
    let kc = kraus_cirac(u)?;
    let protocol = {
        let mut b = ProtocolBuilder::new(&network);
        let (n11, n31) = (b.grid(1, 1)?, b.grid(3, 1)?);
        let top = b.input("I1", &n11);
        let bottom = b.input("I2", &n31);
        b.local(&[&top], kc.w.clone())?;
        b.local(&[&bottom], kc.w_prime.clone())?;
        let (mut o1, mut o2) = if kc.kc == 0 {
            let (n12, n32) = (b.grid(1, 2)?, b.grid(3, 2)?);
            (b.teleport_to(&top, &n12)?, b.teleport_to(&bottom, &n32)?)
        } else {
            butterfly_gadget(&mut b, &top, &bottom, (kc.x, kc.y, kc.z))?
        };
        for j in 3..=network.cols {
            let (a, z) = (b.grid(1, j)?, b.grid(3, j)?);
            o1 = b.teleport_to(&o1, &a)?;
            o2 = b.teleport_to(&o2, &z)?;
        }
        b.local(&[&o1], kc.u.clone())?;
        b.local(&[&o2], kc.u_prime.clone())?;
        b.finish(vec![o1, o2])
    };
    let name = match network.kind {
        crate::network::NetworkKind::Butterfly => "butterfly".to_string(),
        _ => format!("butterfly-on-{}", network_name(&network)),
    };
    Ok(Program { name, network, protocol, target: kc.reconstruct() })
}

/// Three-CNOT circuit as a `(2,3)` converted circuit, one `C_{1;2}(1, X)` per column.
pub fn three_cnot_circuit(u: &CMatrix) -> Result<ConvertedCircuit, ProtocolError> {
    let circ = three_cnot_decompose(u)?;
    let cx = || vec![ControlledGate::two(1, 2, gates::id2(), gates::x())];
    let id = || vec![gates::id2(), gates::id2()];
    let l = |t: usize| circ.layers[t].to_vec();
    Ok(ConvertedCircuit {
        wires: 2,
        columns: vec![
            Column { pre: l(0), gates: cx(), post: id() },
            Column { pre: l(1), gates: cx(), post: id() },
            Column { pre: l(2), gates: cx(), post: l(3) },
        ],
    })
}

/// Protocol for any two-qubit `U` over the grail network.
pub fn grail_protocol(u: &CMatrix) -> Result<Program, ProtocolError> {
    check_two_qubit(u)?;
    let circuit = three_cnot_circuit(u)?;
    let network = grail_network();
    let protocol = {
        let mut b = ProtocolBuilder::new(&network);
        let first = b.input("I1", &NodeId::named("i1"));
        let second = b.input("I2", &NodeId::named("i2"));
        let n1 = b.grid(1, 1)?;
        let first = b.teleport_to(&first, &n1)?;
        let out = compile_onto(&mut b, &circuit, vec![first, second])?;
        let last = b.teleport_to(&out[1], &NodeId::named("o2"))?;
        b.finish(vec![out[0].clone(), last])
    };
    Ok(Program { name: "grail".into(), network, protocol, target: u.clone() })
}

/// Ladder circuit: column `j` runs factor `F_{N+1−j}` of `U = F_1 ⋯ F_N`.
///
/// Refuses when `KC#(U) > N`. Local factors leave their column's vertical pair unused.
pub fn ladder_circuit(u: &CMatrix, n: usize) -> Result<ConvertedCircuit, ProtocolError> {
    check_two_qubit(u)?;
    if n == 0 {
        return Err(ProtocolError::EmptyLadder);
    }
    let decision = decide_ladder(u, n)?;
    let Some(factors) = decision.certificate else {
        return Err(ProtocolError::Refused { kc: decision.kc, n });
    };
    Ok(certificate_circuit(&factors))
}

/// Ladder circuit for a factor list `U = F_1 ⋯ F_N`.
pub fn certificate_circuit(factors: &[crate::decomp::ControlledFactor]) -> ConvertedCircuit {
    let columns = factors
        .iter()
        .rev()
        .map(|f| Column {
            pre: f.right.to_vec(),
            gates: if f.is_local() { vec![] } else { vec![ControlledGate::two(1, 2, f.u0.clone(), f.u1.clone())] },
            post: f.left.to_vec(),
        })
        .collect();
    ConvertedCircuit { wires: 2, columns }
}

/// Protocol for `U` over the `(2,N)` ladder.
pub fn ladder_protocol(u: &CMatrix, n: usize) -> Result<Program, ProtocolError> {
    let circuit = ladder_circuit(u, n)?;
    ladder_program(&circuit, u)
}

/// Compiles a ladder certificate `U = F_1 ⋯ F_N` onto the `(2,N)` cluster.
pub fn certificate_protocol(factors: &[crate::decomp::ControlledFactor], target: &CMatrix) -> Result<Program, ProtocolError> {
    ladder_program(&certificate_circuit(factors), target)
}

fn ladder_program(circuit: &ConvertedCircuit, target: &CMatrix) -> Result<Program, ProtocolError> {
    let n = circuit.columns.len();
    let network = build_cluster(2, n).map_err(ConversionError::from)?;
    let protocol = {
        let mut b = ProtocolBuilder::new(&network);
        let wires = vec![b.input("I1", &NodeId::grid(1, 1)), b.input("I2", &NodeId::grid(2, 1))];
        let out = compile_onto(&mut b, circuit, wires)?;
        b.finish(out)
    };
    Ok(Program { name: format!("ladder:{n}"), network, protocol, target: target.clone() })
}

/// `λ_j` and `Ψ^{(j)}` (on qubits 1, 3) for `j = 0..4`.
pub fn eigen_table(x: f64, y: f64, z: f64) -> [(C64, [C64; 4]); 4] {
    let s = FRAC_1_SQRT_2;
    let r = |v: f64| c(v * s, 0.0);
    [
        (C64::from_polar(1.0, x - y + z), [r(1.0), ZERO, ZERO, r(1.0)]),
        (C64::from_polar(1.0, -x + y + z), [r(1.0), ZERO, ZERO, r(-1.0)]),
        (C64::from_polar(1.0, x + y - z), [ZERO, r(1.0), r(1.0), ZERO]),
        (C64::from_polar(1.0, -x - y - z), [ZERO, r(1.0), r(-1.0), ZERO]),
    ]
}

/// One stage of the step trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: String,
    /// Amplitudes on qubits (1, 2, 3), big-endian; for step vii, the branch with outcome 0.
    pub state: Vec<[f64; 2]>,
    /// Largest amplitude distance to the closed form.
    pub distance: f64,
    pub matches: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub params: [f64; 3],
    pub j: usize,
    pub lambda: [f64; 2],
    pub steps: Vec<TraceStep>,
    /// Outcome probabilities of the row-2 measurement.
    pub probabilities: [f64; 2],
}

fn on_123(pair: &[C64; 4], mid: [C64; 2]) -> Vec<C64> {
    let mut v = vec![ZERO; 8];
    for a in 0..2 {
        for m in 0..2 {
            for b in 0..2 {
                v[4 * a + 2 * m + b] = pair[2 * a + b] * mid[m];
            }
        }
    }
    v
}

fn apply(m: &CMatrix, v: &[C64]) -> Vec<C64> {
    (m * nalgebra::DVector::from_column_slice(v)).iter().copied().collect()
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Runs the butterfly circuit on `Ψ^{(j)} ⊗ |0⟩` and compares every step with its closed form.
pub fn appendix_d_trace(x: f64, y: f64, z: f64, j: usize, tol: f64) -> Result<Trace, ProtocolError> {
    if j > 3 {
        return Err(ProtocolError::InvalidIndex(j));
    }
    let table = eigen_table(x, y, z);
    let (lam, psi) = table[j];
    let s = FRAC_1_SQRT_2;
    let (zero, one) = ([ONE, ZERO], [ZERO, ONE]);
    let (plus, minus) = ([c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]);
    let id = gates::id2();
    let on = |a: &CMatrix, m: &CMatrix, b: &CMatrix| crate::tensor::kron_all([a, m, b]);
    let pair_op = |a: &CMatrix, b: &CMatrix, p: &[C64; 4]| -> [C64; 4] {
        let v = apply(&a.kronecker(b), p);
        [v[0], v[1], v[2], v[3]]
    };
    let (h, xg, zg) = (gates::h(), gates::x(), gates::z());
    let hh = pair_op(&h, &h, &psi);
    let zhzh = pair_op(&(&zg * &h), &(&zg * &h), &psi);
    let sign = if j % 2 == 0 { ONE } else { -ONE };
    let v_phase = [C64::from_polar(1.0, -y + z), c(0.0, 1.0) * C64::from_polar(1.0, y + z), C64::from_polar(1.0, y - z), c(0.0, 1.0) * C64::from_polar(1.0, -y - z)][j];
    let mid = if j % 2 == 0 { zero } else { one };
    let scale = |v: Vec<C64>, f: C64| v.into_iter().map(|a| a * f).collect::<Vec<_>>();
    let add = |a: Vec<C64>, b: Vec<C64>| a.into_iter().zip(b).map(|(p, q)| p + q).collect::<Vec<_>>();

    let mut steps = Vec::new();
    let mut push = |name: &str, state: &[C64], closed: &[C64]| {
        let d = dist(state, closed);
        steps.push(TraceStep { step: name.into(), state: state.iter().map(|a| [a.re, a.im]).collect(), distance: d, matches: d <= tol });
    };

    let s1 = on_123(&psi, zero);
    push("i", &s1, &s1);
    let s2 = apply(&on(&h, &h, &h), &s1);
    push("ii", &s2, &on_123(&hh, plus));
    let s3 = apply(&gates::fully_controlled(&first_gate_targets()), &s2);
    let closed3 = add(scale(on_123(&hh, zero), c(s, 0.0)), scale(on_123(&zhzh, one), c(s, 0.0)));
    push("iii", &s3, &closed3);
    let s4 = apply(&on(&xg, &id, &xg), &apply(&on(&h, &h, &h), &s3));
    push("iv", &s4, &scale(on_123(&psi, mid), sign));
    let s5 = apply(&gates::fully_controlled(&second_gate_targets(y, z)), &s4);
    push("v", &s5, &scale(on_123(&psi, mid), v_phase));
    let s6 = apply(&on(&id, &u_of_x(x), &id), &s5);
    push("vi", &s6, &scale(on_123(&psi, if j % 2 == 0 { plus } else { minus }), lam));

    let mut probabilities = [0.0; 2];
    let mut worst = 0.0f64;
    let mut first_branch = Vec::new();
    for k in 0..2 {
        let mut branch: Vec<C64> = s6.iter().enumerate().map(|(idx, a)| if (idx >> 1) & 1 == k { *a } else { ZERO }).collect();
        let p: f64 = branch.iter().map(|a| a.norm_sqr()).sum();
        probabilities[k] = p;
        if k == 1 {
            branch = apply(&on(&xg, &id, &xg), &branch);
        }
        let branch = scale(branch, c(1.0 / p.sqrt(), 0.0));
        let closed = scale(on_123(&psi, if k == 0 { zero } else { one }), lam);
        worst = worst.max(dist(&branch, &closed)).max((p - 0.5).abs());
        if k == 0 {
            first_branch = branch;
        }
    }
    steps.push(TraceStep {
        step: "vii".into(),
        state: first_branch.iter().map(|a| [a.re, a.im]).collect(),
        distance: worst,
        matches: worst <= tol,
    });
    Ok(Trace { params: [x, y, z], j, lambda: [lam.re, lam.im], steps, probabilities })
}

/// Options for protocol verification.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub random_inputs: usize,
    /// Pass threshold: every branch fidelity must be at least `1 − tol`.
    pub tol: f64,
    pub basis_inputs: bool,
    pub exec: ExecOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 0, random_inputs: 20, tol: 1e-9, basis_inputs: true, exec: ExecOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    /// Transcript patterns over the protocol's outcome bits (`*` for either value).
    pub outcomes: Vec<String>,
    pub multiplicity: u64,
    pub probability: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputOutcome {
    pub input: String,
    pub branches: Vec<BranchOutcome>,
    pub total_probability: f64,
    pub min_fidelity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Implementable,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub protocol: String,
    pub network: String,
    pub consumed_edges: Vec<String>,
    pub outcome_bits: usize,
    pub inputs: Vec<InputOutcome>,
    pub min_fidelity: f64,
    pub max_probability_error: f64,
    pub verdict: Verdict,
}

/// Runs `program` on computational-basis and seeded random inputs and compares every branch with the target.
pub fn verify(program: &Program, opts: &VerifyOptions) -> Result<VerificationReport, ProtocolError> {
    let p = &program.protocol;
    let n = p.inputs.len();
    let mut rng = seeded(opts.seed);
    let mut cases: Vec<(String, Vec<C64>)> = Vec::new();
    if opts.basis_inputs {
        for idx in 0..1usize << n {
            let mut v = vec![ZERO; 1 << n];
            v[idx] = ONE;
            cases.push((format!("basis:{idx:0n$b}"), v));
        }
    }
    for r in 0..opts.random_inputs {
        cases.push((format!("random:{r}"), haar_state(&mut rng, n)));
    }
    let out_nodes = output_nodes(program)?;
    let mut inputs = Vec::with_capacity(cases.len());
    let (mut min_f, mut max_err) = (1.0f64, 0.0f64);
    for (name, amps) in cases {
        let reg = p.inputs.iter().map(|q| Qubit::new(q.label.clone(), q.node.clone())).collect();
        let input = StateVector::from_amplitudes(reg, amps.clone()).map_err(LoccError::from)?;
        let out_amps = apply(&program.target, &amps);
        let reg = p.outputs.iter().zip(&out_nodes).map(|(l, node)| Qubit::new(l.clone(), node.clone())).collect();
        let target = StateVector::from_amplitudes(reg, out_amps).map_err(LoccError::from)?;
        let res = execute(p, &program.network, &input, &opts.exec)?;
        let mut branches = Vec::with_capacity(res.branches.len());
        let mut case_min = 1.0f64;
        for br in &res.branches {
            let f = br.fidelity_with(&target).map_err(LoccError::from)?;
            case_min = case_min.min(f);
            branches.push(BranchOutcome { outcomes: br.transcripts.clone(), multiplicity: br.multiplicity, probability: br.probability, fidelity: f });
        }
        let total = res.total_probability();
        min_f = min_f.min(case_min);
        max_err = max_err.max((total - 1.0).abs());
        inputs.push(InputOutcome { input: name, branches, total_probability: total, min_fidelity: case_min });
    }
    let verdict = if min_f >= 1.0 - opts.tol && max_err <= 1e-10 { Verdict::Implementable } else { Verdict::Failed };
    Ok(VerificationReport {
        protocol: program.name.clone(),
        network: network_name(&program.network),
        consumed_edges: p.consumed_edges.iter().map(|e| e.to_string()).collect(),
        outcome_bits: p.variables().len(),
        inputs,
        min_fidelity: min_f,
        max_probability_error: max_err,
        verdict,
    })
}

fn network_name(net: &Network) -> String {
    use crate::network::NetworkKind::*;
    match net.kind {
        Butterfly => "butterfly".into(),
        Grail => "grail".into(),
        Cluster => format!("cluster:{},{}", net.rows, net.cols),
        Generalized => format!("generalized:{},{}", net.rows, net.cols),
    }
}

/// Node holding each output label at the end of the protocol.
fn output_nodes(program: &Program) -> Result<Vec<NodeId>, ProtocolError> {
    let net = &program.network;
    program
        .protocol
        .outputs
        .iter()
        .map(|l| {
            if let Some((_, node)) = net.resource_qubit(l) {
                return Ok(node.clone());
            }
            program
                .protocol
                .inputs
                .iter()
                .find(|q| &q.label == l)
                .map(|q| q.node.clone())
                .ok_or_else(|| ProtocolError::Locc(LoccError::Build(format!("cannot locate output `{l}`"))))
        })
        .collect()
}

/// Canonical form and Weyl parameters used by the butterfly route, for reports.
pub fn butterfly_parameters(u: &CMatrix) -> Result<KrausCiracForm, ProtocolError> {
    check_two_qubit(u)?;
    Ok(kraus_cirac(u)?)
}
