//! LOCC protocols: instructions, static validation and branch-exact execution.
//!
//! A protocol is a flat list of [`Instruction`]s, each bound to one network
//! node. Quantum operations may only touch qubits held at that node. Classical
//! bits exist only where they were measured or explicitly sent. Resource Bell
//! pairs are materialized lazily, when one of their halves is first touched.
//! This is exact because the resource state is a product over edges.
//!
//! Execution enumerates every measurement outcome. In the default mode,
//! branches are merged when their post-measurement states agree (fidelity
//! ≥ 1 − 1e-12) and no later instruction reads a bit on which they differ.
//! A merged branch keeps the list of transcripts it stands for. Exhaustive mode
//! never merges and streams one leaf per transcript.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{bell_pair, build_resource_state, EdgeId, Network, NetworkError, NetworkSpec, NodeId};
use crate::tensor::gates;
use crate::tensor::{
    matrix_serde, unitarity_deviation, CMatrix, MatrixJson, Qubit, StateVector, TensorError, C64, NORM_TOL,
    UNITARITY_TOL, ZERO,
};

/// Minimum fidelity at which two branch states are considered equal for merging.
pub const MERGE_FIDELITY: f64 = 1.0 - 1e-12;
/// Branches with smaller probability are dropped as impossible outcomes.
pub const ZERO_PROBABILITY: f64 = 1e-28;

#[derive(Debug, Error)]
pub enum LoccError {
    #[error("protocol is invalid: {}", .0.summary())]
    Invalid(ValidationReport),
    #[error("input state: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("cannot build protocol: {0}")]
    Build(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// One qubit, one outcome bit.
    Computational,
    /// Two qubits projected onto `(Z^{b0} X^{b1} ⊗ 1)|Φ⁺⟩`; outcome bits `[b0, b1]`.
    Bell,
}

/// Classical condition on outcome bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Predicate {
    /// True when an odd number of the bits are set.
    Parity { vars: Vec<String> },
    /// True when all bits are set.
    All { vars: Vec<String> },
}

impl Predicate {
    pub fn parity(vars: &[String]) -> Self {
        Predicate::Parity { vars: vars.to_vec() }
    }

    pub fn var(v: &str) -> Self {
        Predicate::Parity { vars: vec![v.to_string()] }
    }

    pub fn vars(&self) -> &[String] {
        match self {
            Predicate::Parity { vars } | Predicate::All { vars } => vars,
        }
    }

    fn eval(&self, value: impl Fn(&str) -> Option<bool>) -> Option<bool> {
        let vals = self.vars().iter().map(|v| value(v)).collect::<Option<Vec<bool>>>()?;
        Some(match self {
            Predicate::Parity { .. } => vals.iter().filter(|b| **b).count() % 2 == 1,
            Predicate::All { .. } => vals.iter().all(|b| *b),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instruction {
    AddAncilla {
        node: NodeId,
        label: String,
    },
    LocalUnitary {
        node: NodeId,
        qubits: Vec<String>,
        #[serde(with = "matrix_serde")]
        gate: CMatrix,
    },
    Measure {
        node: NodeId,
        basis: Basis,
        qubits: Vec<String>,
        vars: Vec<String>,
    },
    ClassicalSend {
        from: NodeId,
        to: NodeId,
        var: String,
    },
    /// Runs `then` (local unitaries or nested conditionals at the same node) when `predicate` holds.
    Conditional {
        node: NodeId,
        predicate: Predicate,
        then: Vec<Instruction>,
    },
    /// Traces a qubit out; executed as an unrecorded computational measurement.
    DiscardQubit {
        node: NodeId,
        label: String,
    },
}

impl Instruction {
    pub fn node(&self) -> &NodeId {
        match self {
            Instruction::AddAncilla { node, .. }
            | Instruction::LocalUnitary { node, .. }
            | Instruction::Measure { node, .. }
            | Instruction::Conditional { node, .. }
            | Instruction::DiscardQubit { node, .. } => node,
            Instruction::ClassicalSend { from, .. } => from,
        }
    }

    /// Qubit labels this instruction (including nested ones) touches.
    fn touched(&self, out: &mut Vec<String>) {
        match self {
            Instruction::AddAncilla { label, .. } | Instruction::DiscardQubit { label, .. } => out.push(label.clone()),
            Instruction::LocalUnitary { qubits, .. } | Instruction::Measure { qubits, .. } => {
                out.extend(qubits.iter().cloned())
            }
            Instruction::ClassicalSend { .. } => {}
            Instruction::Conditional { then, .. } => then.iter().for_each(|i| i.touched(out)),
        }
    }

    /// Outcome bits read by predicates (including nested ones).
    fn reads(&self, out: &mut BTreeSet<String>) {
        if let Instruction::Conditional { predicate, then, .. } = self {
            out.extend(predicate.vars().iter().cloned());
            then.iter().for_each(|i| i.reads(out));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputQubit {
    pub label: String,
    pub node: NodeId,
}

/// A protocol over some network; the network itself is supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoccProtocol {
    /// Input qubits in the order of the input state's register.
    pub inputs: Vec<InputQubit>,
    /// Labels holding the output, in order.
    pub outputs: Vec<String>,
    /// Edges whose Bell pairs the protocol declares it uses.
    pub consumed_edges: BTreeSet<EdgeId>,
    pub instructions: Vec<Instruction>,
}

impl LoccProtocol {
    /// Number of top-level measurements (each yields one or two outcome bits).
    pub fn measurement_count(&self) -> usize {
        self.instructions.iter().filter(|i| matches!(i, Instruction::Measure { .. })).count()
    }

    /// Outcome bits in order of definition.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        for ins in &self.instructions {
            if let Instruction::Measure { vars, .. } = ins {
                out.extend(vars.iter().cloned());
            }
        }
        out
    }
}

/// On-disk form of a protocol together with its network and an optional input state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub network: NetworkSpec,
    pub protocol: LoccProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<MatrixJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownNode,
    UnknownQubit,
    NonLocalOperation,
    QubitAlreadyMeasured,
    LabelClash,
    UnknownVariable,
    VariableNotAtNode,
    VariableRedefined,
    NotUnitary,
    ArityMismatch,
    NestedInstructionNotAllowed,
    ConsumedEdgesMismatch,
    InputPlacement,
    OutputPlacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Position of the offending instruction; nested indices follow the outer one.
    pub at: Vec<usize>,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Edges whose Bell pairs are actually touched.
    pub used_edges: BTreeSet<EdgeId>,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        if self.ok {
            return "ok".into();
        }
        self.violations
            .iter()
            .map(|v| format!("{:?} at {:?}: {}", v.kind, v.at, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

struct Checker<'a> {
    network: &'a Network,
    location: HashMap<String, NodeId>,
    dead: HashSet<String>,
    known: HashMap<String, BTreeSet<NodeId>>,
    used: BTreeSet<EdgeId>,
    violations: Vec<Violation>,
}

impl Checker<'_> {
    fn flag(&mut self, at: &[usize], kind: ViolationKind, message: String) {
        self.violations.push(Violation { at: at.to_vec(), kind, message });
    }

    fn check_node(&mut self, at: &[usize], node: &NodeId) -> bool {
        if !self.network.contains_node(node) {
            self.flag(at, ViolationKind::UnknownNode, format!("node `{node}` is not in the network"));
            return false;
        }
        true
    }

    fn check_qubit(&mut self, at: &[usize], node: &NodeId, label: &str) {
        if self.dead.contains(label) {
            self.flag(at, ViolationKind::QubitAlreadyMeasured, format!("qubit `{label}` was already measured"));
            return;
        }
        match self.location.get(label) {
            None => self.flag(at, ViolationKind::UnknownQubit, format!("qubit `{label}` does not exist")),
            Some(n) if n != node => {
                let n = n.clone();
                self.flag(at, ViolationKind::NonLocalOperation, format!("qubit `{label}` is at `{n}`, not `{node}`"))
            }
            Some(_) => {
                if let Some((edge, _)) = self.network.resource_qubit(label) {
                    self.used.insert(edge.id.clone());
                }
            }
        }
    }

    fn check_predicate(&mut self, at: &[usize], node: &NodeId, p: &Predicate) {
        for v in p.vars() {
            match self.known.get(v) {
                None => self.flag(at, ViolationKind::UnknownVariable, format!("bit `{v}` is never measured before use")),
                Some(nodes) if !nodes.contains(node) => {
                    self.flag(at, ViolationKind::VariableNotAtNode, format!("bit `{v}` is not known at `{node}`"))
                }
                _ => {}
            }
        }
    }

    fn check(&mut self, at: &[usize], ins: &Instruction, nested: bool) {
        match ins {
            Instruction::AddAncilla { node, label } => {
                if nested {
                    return self.nested_error(at);
                }
                if !self.check_node(at, node) {
                    return;
                }
                if self.location.contains_key(label) {
                    self.flag(at, ViolationKind::LabelClash, format!("label `{label}` already exists"));
                    return;
                }
                self.location.insert(label.clone(), node.clone());
            }
            Instruction::LocalUnitary { node, qubits, gate } => {
                if !self.check_node(at, node) {
                    return;
                }
                if gate.nrows() != 1 << qubits.len() || gate.ncols() != gate.nrows() {
                    self.flag(at, ViolationKind::ArityMismatch, format!("{} qubits, {}x{} gate", qubits.len(), gate.nrows(), gate.ncols()));
                } else {
                    let dev = unitarity_deviation(gate);
                    if dev > UNITARITY_TOL {
                        self.flag(at, ViolationKind::NotUnitary, format!("deviation {dev:.3e}"));
                    }
                }
                let distinct: HashSet<&String> = qubits.iter().collect();
                if distinct.len() != qubits.len() {
                    self.flag(at, ViolationKind::ArityMismatch, "repeated qubit".into());
                }
                for q in qubits {
                    self.check_qubit(at, node, q);
                }
            }
            Instruction::Measure { node, basis, qubits, vars } => {
                if nested {
                    return self.nested_error(at);
                }
                if !self.check_node(at, node) {
                    return;
                }
                let (nq, nv) = match basis {
                    Basis::Computational => (1, 1),
                    Basis::Bell => (2, 2),
                };
                if qubits.len() != nq || vars.len() != nv || (nq == 2 && qubits[0] == qubits[1]) {
                    self.flag(at, ViolationKind::ArityMismatch, format!("{basis:?} measurement needs {nq} qubits and {nv} bits"));
                    return;
                }
                for q in qubits {
                    self.check_qubit(at, node, q);
                }
                for q in qubits {
                    self.dead.insert(q.clone());
                }
                for v in vars {
                    if self.known.contains_key(v) {
                        self.flag(at, ViolationKind::VariableRedefined, format!("bit `{v}` assigned twice"));
                    }
                    self.known.insert(v.clone(), BTreeSet::from([node.clone()]));
                }
            }
            Instruction::ClassicalSend { from, to, var } => {
                if nested {
                    return self.nested_error(at);
                }
                if !self.check_node(at, from) || !self.check_node(at, to) {
                    return;
                }
                match self.known.get_mut(var) {
                    None => self.flag(at, ViolationKind::UnknownVariable, format!("bit `{var}` is never measured before use")),
                    Some(nodes) if !nodes.contains(from) => {
                        self.flag(at, ViolationKind::VariableNotAtNode, format!("bit `{var}` is not known at `{from}`"))
                    }
                    Some(nodes) => {
                        nodes.insert(to.clone());
                    }
                }
            }
            Instruction::Conditional { node, predicate, then } => {
                if !self.check_node(at, node) {
                    return;
                }
                self.check_predicate(at, node, predicate);
                for (t, sub) in then.iter().enumerate() {
                    let mut path = at.to_vec();
                    path.push(t);
                    if sub.node() != node {
                        self.flag(&path, ViolationKind::NonLocalOperation, format!("nested instruction at `{}` inside conditional at `{node}`", sub.node()));
                        continue;
                    }
                    self.check(&path, sub, true);
                }
            }
            Instruction::DiscardQubit { node, label } => {
                if nested {
                    return self.nested_error(at);
                }
                if !self.check_node(at, node) {
                    return;
                }
                self.check_qubit(at, node, label);
                self.dead.insert(label.clone());
            }
        }
    }

    fn nested_error(&mut self, at: &[usize]) {
        self.flag(at, ViolationKind::NestedInstructionNotAllowed, "only local unitaries and conditionals may be nested".into());
    }
}

/// Checks locality, resource usage and classical-information flow.
pub fn validate(protocol: &LoccProtocol, network: &Network) -> ValidationReport {
    let mut ck = Checker {
        network,
        location: HashMap::new(),
        dead: HashSet::new(),
        known: HashMap::new(),
        used: BTreeSet::new(),
        violations: Vec::new(),
    };
    for e in &network.edges {
        ck.location.insert(e.qubit_a.clone(), e.a.clone());
        ck.location.insert(e.qubit_b.clone(), e.b.clone());
    }
    for inp in &protocol.inputs {
        if !network.inputs.contains(&inp.node) {
            ck.flag(&[], ViolationKind::InputPlacement, format!("input `{}` at non-input node `{}`", inp.label, inp.node));
        }
        if ck.location.insert(inp.label.clone(), inp.node.clone()).is_some() {
            ck.flag(&[], ViolationKind::LabelClash, format!("input label `{}` clashes", inp.label));
        }
    }
    for (t, ins) in protocol.instructions.iter().enumerate() {
        ck.check(&[t], ins, false);
    }
    let end = protocol.instructions.len();
    for out in &protocol.outputs {
        if ck.dead.contains(out) || !ck.location.contains_key(out) {
            ck.flag(&[end], ViolationKind::OutputPlacement, format!("output `{out}` is not a live qubit"));
        } else if !network.outputs.contains(&ck.location[out]) {
            let n = ck.location[out].clone();
            ck.flag(&[end], ViolationKind::OutputPlacement, format!("output `{out}` is at non-output node `{n}`"));
        }
    }
    if ck.used != protocol.consumed_edges {
        let extra: Vec<_> = ck.used.difference(&protocol.consumed_edges).map(|e| e.to_string()).collect();
        let missing: Vec<_> = protocol.consumed_edges.difference(&ck.used).map(|e| e.to_string()).collect();
        ck.flag(&[end], ViolationKind::ConsumedEdgesMismatch, format!("undeclared {extra:?}, declared but unused {missing:?}"));
    }
    ValidationReport { ok: ck.violations.is_empty(), violations: ck.violations, used_edges: ck.used }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Merge indistinguishable branches after every instruction.
    Merged,
    /// Keep every transcript separate.
    Exhaustive,
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub mode: Mode,
    /// Build the whole resource state up front instead of lazily.
    pub eager_resource: bool,
    /// Qubit cap for eager resource construction.
    pub qubit_cap: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { mode: Mode::Merged, eager_resource: false, qubit_cap: crate::network::DEFAULT_QUBIT_CAP }
    }
}

impl ExecOptions {
    pub fn exhaustive() -> Self {
        ExecOptions { mode: Mode::Exhaustive, ..Self::default() }
    }
}

/// One branch: a set of transcripts sharing one unnormalized final state.
#[derive(Debug, Clone)]
pub struct Branch {
    /// Transcript patterns over [`BranchSet::vars`]: `0`, `1`, or `*` for either.
    pub transcripts: Vec<String>,
    /// Number of concrete transcripts represented.
    pub multiplicity: u64,
    /// Total probability of the represented transcripts.
    pub probability: f64,
    /// Final state with squared norm equal to `probability`.
    pub state: StateVector,
}

impl Branch {
    /// Fidelity of the normalized output with `target` (whose labels name output qubits).
    ///
    /// Qubits outside `target`'s register are traced out.
    pub fn fidelity_with(&self, target: &StateVector) -> Result<f64, TensorError> {
        let keep = target.labels();
        if self.state.num_qubits() == keep.len() {
            return self.state.fidelity(target);
        }
        let rho = self.state.partial_trace(&keep)?;
        let tr: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
        let t = target.amplitudes();
        let mut acc = ZERO;
        for r in 0..rho.nrows() {
            for c in 0..rho.ncols() {
                acc += t[r].conj() * rho[(r, c)] * t[c];
            }
        }
        Ok(acc.re / (tr * target.norm_sqr()))
    }
}

/// Per-measurement outcome statistics, conditional on the branch being measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStat {
    pub instruction: usize,
    pub node: NodeId,
    pub vars: Vec<String>,
    /// Smallest conditional probability of each outcome across branches.
    pub min: Vec<f64>,
    /// Largest conditional probability of each outcome across branches.
    pub max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BranchSet {
    pub vars: Vec<String>,
    pub branches: Vec<Branch>,
    pub stats: Vec<MeasurementStat>,
    /// Number of outcomes skipped because their probability was zero.
    pub dropped: usize,
}

impl BranchSet {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    pub fn transcript_count(&self) -> u64 {
        self.branches.iter().map(|b| b.multiplicity).sum()
    }

    /// Smallest branch fidelity with `target`.
    pub fn min_fidelity(&self, target: &StateVector) -> Result<f64, TensorError> {
        let mut m = 1.0f64;
        for b in &self.branches {
            m = m.min(b.fidelity_with(target)?);
        }
        Ok(m)
    }
}

#[derive(Clone)]
struct Run {
    state: StateVector,
    values: Vec<Option<bool>>,
    patterns: Vec<Vec<Option<bool>>>,
}

impl Run {
    fn assign(&mut self, idx: usize, v: bool) {
        self.values[idx] = Some(v);
        for p in &mut self.patterns {
            p[idx] = Some(v);
        }
    }
}

/// A leaf of exhaustive execution.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub transcript: String,
    pub probability: f64,
    pub state: StateVector,
}

struct Engine<'a> {
    protocol: &'a LoccProtocol,
    network: &'a Network,
    var_index: HashMap<String, usize>,
    live_after: Vec<BTreeSet<usize>>,
    stats: BTreeMap<usize, MeasurementStat>,
    dropped: usize,
}

fn bell_ket(bz: bool, bx: bool) -> [C64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = |x: f64| C64::new(x * s, 0.0);
    match (bz, bx) {
        (false, false) => [v(1.0), ZERO, ZERO, v(1.0)],
        (true, false) => [v(1.0), ZERO, ZERO, v(-1.0)],
        (false, true) => [ZERO, v(1.0), v(1.0), ZERO],
        (true, true) => [ZERO, v(1.0), v(-1.0), ZERO],
    }
}

fn pattern_string(p: &[Option<bool>]) -> String {
    p.iter().map(|v| match v { Some(true) => '1', Some(false) => '0', None => '*' }).collect()
}

/// Collapses pattern pairs that differ in exactly one concrete position.
fn simplify_patterns(patterns: &mut Vec<Vec<Option<bool>>>) {
    loop {
        let mut found = None;
        'outer: for i in 0..patterns.len() {
            for j in i + 1..patterns.len() {
                let diff: Vec<usize> = (0..patterns[i].len()).filter(|&k| patterns[i][k] != patterns[j][k]).collect();
                if diff.len() == 1 && patterns[i][diff[0]].is_some() && patterns[j][diff[0]].is_some() {
                    found = Some((i, j, diff[0]));
                    break 'outer;
                }
            }
        }
        match found {
            Some((i, j, k)) => {
                patterns[i][k] = None;
                patterns.remove(j);
            }
            None => return,
        }
    }
}

impl<'a> Engine<'a> {
    fn new(protocol: &'a LoccProtocol, network: &'a Network) -> Self {
        let vars = protocol.variables();
        let var_index: HashMap<String, usize> = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let n = protocol.instructions.len();
        let mut live_after = vec![BTreeSet::new(); n];
        let mut acc = BTreeSet::new();
        for t in (0..n).rev() {
            live_after[t] = acc.iter().filter_map(|v: &String| var_index.get(v).copied()).collect();
            protocol.instructions[t].reads(&mut acc);
        }
        Engine { protocol, network, var_index, live_after, stats: BTreeMap::new(), dropped: 0 }
    }

    /// Tensors in the Bell pairs of any resource qubits in `labels` not yet present.
    fn materialize(&self, run: &mut Run, labels: &[String]) -> Result<(), LoccError> {
        for l in labels {
            if run.state.contains(l) {
                continue;
            }
            if let Some((edge, _)) = self.network.resource_qubit(l) {
                if run.state.contains(&edge.qubit_a) || run.state.contains(&edge.qubit_b) {
                    return Err(LoccError::Build(format!("half of edge {} already consumed", edge.id)));
                }
                run.state = run.state.tensor(&bell_pair(edge))?;
            }
        }
        Ok(())
    }

    fn apply_local(&self, run: &mut Run, ins: &Instruction) -> Result<(), LoccError> {
        match ins {
            Instruction::LocalUnitary { qubits, gate, .. } => {
                let refs: Vec<&str> = qubits.iter().map(|s| s.as_str()).collect();
                run.state.apply_matrix(gate, &refs)?;
            }
            Instruction::Conditional { predicate, then, .. } => {
                let fire = predicate
                    .eval(|v| self.var_index.get(v).and_then(|&i| run.values[i]))
                    .ok_or_else(|| LoccError::Build("conditional reads an unresolved bit".into()))?;
                if fire {
                    for sub in then {
                        self.apply_local(run, sub)?;
                    }
                }
            }
            _ => return Err(LoccError::Build("non-local instruction in conditional".into())),
        }
        Ok(())
    }

    fn record(&mut self, t: usize, node: &NodeId, vars: &[String], probs: &[f64]) {
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return;
        }
        let cond: Vec<f64> = probs.iter().map(|p| p / total).collect();
        let entry = self.stats.entry(t).or_insert_with(|| MeasurementStat {
            instruction: t,
            node: node.clone(),
            vars: vars.to_vec(),
            min: vec![f64::INFINITY; cond.len()],
            max: vec![f64::NEG_INFINITY; cond.len()],
        });
        for (k, p) in cond.iter().enumerate() {
            entry.min[k] = entry.min[k].min(*p);
            entry.max[k] = entry.max[k].max(*p);
        }
    }

    fn step(&mut self, t: usize, mut run: Run) -> Result<Vec<Run>, LoccError> {
        let ins = &self.protocol.instructions[t];
        let mut touched = Vec::new();
        ins.touched(&mut touched);
        self.materialize(&mut run, &touched)?;
        match ins {
            Instruction::AddAncilla { node, label } => {
                run.state.push_zero(Qubit::new(label, node.clone()))?;
                Ok(vec![run])
            }
            Instruction::LocalUnitary { .. } | Instruction::Conditional { .. } => {
                self.apply_local(&mut run, ins)?;
                Ok(vec![run])
            }
            Instruction::ClassicalSend { .. } => Ok(vec![run]),
            Instruction::Measure { node, basis, qubits, vars } => {
                let mut children = Vec::new();
                let mut probs = Vec::new();
                let outcomes: Vec<Vec<bool>> = match basis {
                    Basis::Computational => vec![vec![false], vec![true]],
                    Basis::Bell => vec![vec![false, false], vec![false, true], vec![true, false], vec![true, true]],
                };
                for bits in outcomes {
                    let state = match basis {
                        Basis::Computational => run.state.project_out(&qubits[0], bits[0])?,
                        Basis::Bell => run.state.contract_pair(&qubits[0], &qubits[1], &bell_ket(bits[0], bits[1]))?,
                    };
                    let p = state.norm_sqr();
                    probs.push(p);
                    if p <= ZERO_PROBABILITY {
                        self.dropped += 1;
                        continue;
                    }
                    let mut child = Run { state, values: run.values.clone(), patterns: run.patterns.clone() };
                    for (v, b) in vars.iter().zip(&bits) {
                        child.assign(self.var_index[v], *b);
                    }
                    children.push(child);
                }
                self.record(t, node, vars, &probs);
                Ok(children)
            }
            Instruction::DiscardQubit { label, .. } => {
                let mut children = Vec::new();
                for b in [false, true] {
                    let state = run.state.project_out(label, b)?;
                    if state.norm_sqr() <= ZERO_PROBABILITY {
                        self.dropped += 1;
                        continue;
                    }
                    children.push(Run { state, values: run.values.clone(), patterns: run.patterns.clone() });
                }
                Ok(children)
            }
        }
    }

    fn merge(&self, t: usize, runs: Vec<Run>) -> Vec<Run> {
        let live = &self.live_after[t];
        let mut out: Vec<Run> = Vec::new();
        let mut by_key: HashMap<Vec<Option<bool>>, Vec<usize>> = HashMap::new();
        for run in runs {
            let key: Vec<Option<bool>> = live.iter().map(|&i| run.values[i]).collect();
            let candidates = by_key.entry(key).or_default();
            let mut merged = false;
            for &ci in candidates.iter() {
                let rep = &out[ci];
                let ov = match rep.state.inner(&run.state) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let (pa, pb) = (rep.state.norm_sqr(), run.state.norm_sqr());
                if ov.norm_sqr() / (pa * pb) >= MERGE_FIDELITY {
                    let rep = &mut out[ci];
                    rep.state.scale(C64::new(((pa + pb) / pa).sqrt(), 0.0));
                    for (k, v) in run.values.iter().enumerate() {
                        if rep.values[k] != *v {
                            rep.values[k] = None;
                        }
                    }
                    rep.patterns.extend(run.patterns.iter().cloned());
                    simplify_patterns(&mut rep.patterns);
                    merged = true;
                    break;
                }
            }
            if !merged {
                candidates.push(out.len());
                out.push(run);
            }
        }
        out
    }

    fn dfs(&mut self, t: usize, run: Run, sink: &mut dyn FnMut(Leaf)) -> Result<(), LoccError> {
        if t == self.protocol.instructions.len() {
            let p = run.state.norm_sqr();
            sink(Leaf { transcript: pattern_string(&run.patterns[0]), probability: p, state: run.state });
            return Ok(());
        }
        for child in self.step(t, run)? {
            self.dfs(t + 1, child, sink)?;
        }
        Ok(())
    }
}

fn prepare(
    protocol: &LoccProtocol,
    network: &Network,
    input: &StateVector,
    opts: &ExecOptions,
) -> Result<Run, LoccError> {
    let report = validate(protocol, network);
    if !report.ok {
        return Err(LoccError::Invalid(report));
    }
    let labels: Vec<&str> = protocol.inputs.iter().map(|q| q.label.as_str()).collect();
    if input.num_qubits() != labels.len() {
        return Err(LoccError::Input(format!("expected {} qubits, got {}", labels.len(), input.num_qubits())));
    }
    let mut state = input.reordered(&labels).map_err(|e| LoccError::Input(e.to_string()))?;
    if (state.norm() - 1.0).abs() > NORM_TOL {
        return Err(LoccError::Input(format!("input norm {} is not 1", state.norm())));
    }
    for q in &protocol.inputs {
        state.set_node(&q.label, q.node.clone())?;
    }
    if opts.eager_resource {
        state = state.tensor(&build_resource_state(network, opts.qubit_cap)?)?;
    }
    let nvars = protocol.variables().len();
    Ok(Run { state, values: vec![None; nvars], patterns: vec![vec![None; nvars]] })
}

/// Runs a protocol on `input` (labelled as the protocol's inputs), enumerating all outcomes.
pub fn execute(
    protocol: &LoccProtocol,
    network: &Network,
    input: &StateVector,
    opts: &ExecOptions,
) -> Result<BranchSet, LoccError> {
    let start = prepare(protocol, network, input, opts)?;
    let mut engine = Engine::new(protocol, network);
    let vars = protocol.variables();
    let branches: Vec<Run> = match opts.mode {
        Mode::Merged => {
            let mut runs = vec![start];
            for t in 0..protocol.instructions.len() {
                let mut next = Vec::with_capacity(runs.len());
                for r in runs {
                    next.extend(engine.step(t, r)?);
                }
                runs = if next.len() > 1 { engine.merge(t, next) } else { next };
            }
            runs
        }
        Mode::Exhaustive => {
            let mut leaves = Vec::new();
            let nvars = vars.len();
            engine.dfs(0, start, &mut |leaf| leaves.push(leaf))?;
            leaves
                .into_iter()
                .map(|l| {
                    let pat: Vec<Option<bool>> = l.transcript.chars().map(|c| match c { '1' => Some(true), '0' => Some(false), _ => None }).collect();
                    debug_assert_eq!(pat.len(), nvars);
                    Run { state: l.state, values: pat.clone(), patterns: vec![pat] }
                })
                .collect()
        }
    };
    let branches = branches
        .into_iter()
        .map(|r| {
            let multiplicity = r.patterns.iter().map(|p| 1u64 << p.iter().filter(|v| v.is_none()).count()).sum();
            Branch {
                transcripts: r.patterns.iter().map(|p| pattern_string(p)).collect(),
                multiplicity,
                probability: r.state.norm_sqr(),
                state: r.state,
            }
        })
        .collect();
    Ok(BranchSet { vars, branches, stats: engine.stats.into_values().collect(), dropped: engine.dropped })
}

/// Exhaustive execution that hands each leaf to `sink` instead of collecting them.
///
/// Returns the per-measurement statistics.
pub fn execute_streaming(
    protocol: &LoccProtocol,
    network: &Network,
    input: &StateVector,
    opts: &ExecOptions,
    sink: &mut dyn FnMut(Leaf),
) -> Result<Vec<MeasurementStat>, LoccError> {
    let start = prepare(protocol, network, input, opts)?;
    let mut engine = Engine::new(protocol, network);
    engine.dfs(0, start, sink)?;
    Ok(engine.stats.into_values().collect())
}

/// Incremental construction of protocols with fresh labels and bits.
pub struct ProtocolBuilder<'n> {
    network: &'n Network,
    instructions: Vec<Instruction>,
    inputs: Vec<InputQubit>,
    location: HashMap<String, NodeId>,
    consumed: BTreeSet<EdgeId>,
    counter: usize,
}

impl<'n> ProtocolBuilder<'n> {
    pub fn new(network: &'n Network) -> Self {
        let mut location = HashMap::new();
        for e in &network.edges {
            location.insert(e.qubit_a.clone(), e.a.clone());
            location.insert(e.qubit_b.clone(), e.b.clone());
        }
        ProtocolBuilder { network, instructions: Vec::new(), inputs: Vec::new(), location, consumed: BTreeSet::new(), counter: 0 }
    }

    pub fn network(&self) -> &'n Network {
        self.network
    }

    /// The grid node `(i, j)`; fails if the network has none there.
    pub fn grid(&self, i: usize, j: usize) -> Result<NodeId, LoccError> {
        self.network.grid_node(i, j).cloned().ok_or_else(|| LoccError::Build(format!("no grid node ({i},{j})")))
    }

    pub fn input(&mut self, label: &str, node: &NodeId) -> String {
        self.inputs.push(InputQubit { label: label.to_string(), node: node.clone() });
        self.location.insert(label.to_string(), node.clone());
        label.to_string()
    }

    fn fresh(&mut self, stem: &str) -> String {
        self.counter += 1;
        format!("{stem}{}", self.counter)
    }

    pub fn node_of(&self, label: &str) -> Result<NodeId, LoccError> {
        self.location.get(label).cloned().ok_or_else(|| LoccError::Build(format!("unknown qubit `{label}`")))
    }

    pub fn ancilla(&mut self, node: &NodeId, stem: &str) -> String {
        let label = self.fresh(stem);
        self.location.insert(label.clone(), node.clone());
        self.instructions.push(Instruction::AddAncilla { node: node.clone(), label: label.clone() });
        label
    }

    pub fn local(&mut self, qubits: &[&str], gate: CMatrix) -> Result<(), LoccError> {
        let node = self.common_node(qubits)?;
        self.instructions.push(Instruction::LocalUnitary {
            node,
            qubits: qubits.iter().map(|s| s.to_string()).collect(),
            gate,
        });
        Ok(())
    }

    fn common_node(&self, qubits: &[&str]) -> Result<NodeId, LoccError> {
        let node = self.node_of(qubits[0])?;
        for q in &qubits[1..] {
            if self.node_of(q)? != node {
                return Err(LoccError::Build(format!("qubits {qubits:?} are not co-located")));
            }
        }
        Ok(node)
    }

    /// Computational-basis measurement; returns the outcome bit.
    pub fn measure(&mut self, qubit: &str) -> Result<String, LoccError> {
        let node = self.node_of(qubit)?;
        let var = self.fresh("m");
        self.instructions.push(Instruction::Measure {
            node,
            basis: Basis::Computational,
            qubits: vec![qubit.to_string()],
            vars: vec![var.clone()],
        });
        Ok(var)
    }

    /// X-basis measurement (Hadamard, then computational).
    pub fn measure_x(&mut self, qubit: &str) -> Result<String, LoccError> {
        self.local(&[qubit], gates::h())?;
        self.measure(qubit)
    }

    /// Bell measurement; returns `(b_z, b_x)`.
    pub fn bell_measure(&mut self, a: &str, b: &str) -> Result<(String, String), LoccError> {
        let node = self.common_node(&[a, b])?;
        let (vz, vx) = (self.fresh("bz"), self.fresh("bx"));
        self.instructions.push(Instruction::Measure {
            node,
            basis: Basis::Bell,
            qubits: vec![a.to_string(), b.to_string()],
            vars: vec![vz.clone(), vx.clone()],
        });
        Ok((vz, vx))
    }

    pub fn send(&mut self, var: &str, from: &NodeId, to: &NodeId) {
        if from != to {
            self.instructions.push(Instruction::ClassicalSend { from: from.clone(), to: to.clone(), var: var.to_string() });
        }
    }

    /// Applies `gate` to `qubit` when the parity of `vars` is odd.
    pub fn conditional_local(&mut self, vars: &[String], qubit: &str, gate: CMatrix) -> Result<(), LoccError> {
        let node = self.node_of(qubit)?;
        self.instructions.push(Instruction::Conditional {
            node: node.clone(),
            predicate: Predicate::parity(vars),
            then: vec![Instruction::LocalUnitary { node, qubits: vec![qubit.to_string()], gate }],
        });
        Ok(())
    }

    pub fn push(&mut self, ins: Instruction) {
        self.instructions.push(ins);
    }

    /// Teleports `data` across `edge`; returns the label now holding the state.
    pub fn teleport(&mut self, data: &str, edge: &EdgeId) -> Result<String, LoccError> {
        let from = self.node_of(data)?;
        let e = self.network.edge(edge).ok_or_else(|| LoccError::Build(format!("unknown edge {edge}")))?;
        let send_half = e.qubit_at(&from).ok_or_else(|| LoccError::Build(format!("`{data}` is not at an end of {edge}")))?.to_string();
        let to = e.other_end(&from).expect("edge has two ends").clone();
        let recv = e.qubit_at(&to).expect("edge has two ends").to_string();
        if !self.consumed.insert(edge.clone()) {
            return Err(LoccError::Build(format!("edge {edge} used twice")));
        }
        let (vz, vx) = self.bell_measure(data, &send_half)?;
        self.send(&vz, &from, &to);
        self.send(&vx, &from, &to);
        self.conditional_local(&[vx], &recv, gates::x())?;
        self.conditional_local(&[vz], &recv, gates::z())?;
        Ok(recv)
    }

    /// Teleports `data` to an adjacent node.
    pub fn teleport_to(&mut self, data: &str, to: &NodeId) -> Result<String, LoccError> {
        let from = self.node_of(data)?;
        let e = self
            .network
            .edge_between(&from, to)
            .ok_or_else(|| LoccError::Build(format!("no edge between {from} and {to}")))?
            .id
            .clone();
        self.teleport(data, &e)
    }

    /// Teleports `data` hop by hop through `path` (excluding its current node).
    pub fn teleport_path(&mut self, data: &str, path: &[NodeId]) -> Result<String, LoccError> {
        let mut cur = data.to_string();
        for n in path {
            cur = self.teleport_to(&cur, n)?;
        }
        Ok(cur)
    }

    /// Marks an edge as consumed without teleporting (for pairs used by custom steps).
    pub fn declare_consumed(&mut self, edge: &EdgeId) {
        self.consumed.insert(edge.clone());
    }

    pub fn finish(self, outputs: Vec<String>) -> LoccProtocol {
        LoccProtocol { inputs: self.inputs, outputs, consumed_edges: self.consumed, instructions: self.instructions }
    }
}

/// Rows visited when walking column `col` from row `from` to row `to`.
///
/// A direct vertical edge is used when present; otherwise the walk steps one
/// row at a time.
pub fn column_path(b: &ProtocolBuilder, col: usize, from: usize, to: usize) -> Result<Vec<NodeId>, LoccError> {
    let start = b.grid(from, col)?;
    let end = b.grid(to, col)?;
    if from != to && b.network().edge_between(&start, &end).is_some() {
        return Ok(vec![end]);
    }
    let rows: Vec<usize> = if to > from { (from + 1..=to).collect() } else { (to..from).rev().collect() };
    rows.iter().map(|&r| b.grid(r, col)).collect()
}

/// Appends the fully-controlled gate `C_{l,m;n}` on column `col`.
///
/// `data = [Q_l, Q_m, Q_n]` are the qubits at rows `l`, `m`, `n`. `targets`
/// holds `u^{(ab)}` at index `2a + b` (four entries) or, when `l == m`,
/// `u^{(a)}` (two entries). Each control is copied into an ancilla by CNOT,
/// teleported to row `n`, used as control there, then measured in the X basis.
/// The outcome is sent back and undone with a conditional `Z`. This consumes
/// `|l − n| + |m − n|` vertical pairs.
pub fn fully_controlled_gate(
    b: &mut ProtocolBuilder,
    col: usize,
    (l, m, n): (usize, usize, usize),
    data: [&str; 3],
    targets: &[CMatrix],
) -> Result<(), LoccError> {
    let single = l == m;
    if single && targets.len() != 2 || !single && targets.len() != 4 {
        return Err(LoccError::Build(format!("{} target unitaries for controls ({l},{m})", targets.len())));
    }
    if !single && !((l < n && n < m) || (m < n && n < l)) {
        return Err(LoccError::Build(format!("target row {n} must lie strictly between {l} and {m}")));
    }
    if l == n || m == n {
        return Err(LoccError::Build("target row coincides with a control row".into()));
    }
    let controls: Vec<(usize, &str)> = if single { vec![(l, data[0])] } else { vec![(l, data[0]), (m, data[1])] };
    let mut arrived = Vec::new();
    for &(row, q) in &controls {
        let node = b.node_of(q)?;
        let anc = b.ancilla(&node, "c");
        b.local(&[q, &anc], gates::cnot())?;
        let path = column_path(b, col, row, n)?;
        arrived.push(b.teleport_path(&anc, &path)?);
    }
    if single {
        b.local(&[&arrived[0], data[2]], gates::controlled(&targets[0], &targets[1]))?;
    } else {
        let w = [targets[0].clone(), targets[1].clone(), targets[2].clone(), targets[3].clone()];
        b.local(&[&arrived[0], data[2], &arrived[1]], gates::fully_controlled(&w))?;
    }
    let target_node = b.node_of(data[2])?;
    for (&(_, q), copy) in controls.iter().zip(&arrived) {
        let v = b.measure_x(copy)?;
        let home = b.node_of(q)?;
        b.send(&v, &target_node, &home);
        b.conditional_local(&[v], q, gates::z())?;
    }
    Ok(())
}

/// Teleports the qubit at each row of `lp` to the next row of the loop.
///
/// `data[t]` is the label at `lp.rows[t]`; the returned labels are ordered the
/// same way and sit one step further round the loop.
pub fn rotate_loop(
    b: &mut ProtocolBuilder,
    lp: &crate::network::VerticalLoop,
    data: &[String],
) -> Result<Vec<String>, LoccError> {
    let mut out = Vec::with_capacity(data.len());
    for (t, q) in data.iter().enumerate() {
        out.push(b.teleport(q, &lp.edges[t])?);
    }
    Ok(out)
}

/// Stand-alone protocol teleporting one input qubit `Q` across `edge`, from its `a` end.
pub fn teleport_protocol(network: &Network, edge: &EdgeId) -> Result<LoccProtocol, LoccError> {
    let e = network.edge(edge).ok_or_else(|| LoccError::Build(format!("unknown edge {edge}")))?;
    let mut b = ProtocolBuilder::new(network);
    let q = b.input("Q", &e.a.clone());
    let out = b.teleport(&q, edge)?;
    Ok(b.finish(vec![out]))
}

/// Relabels a state's register, keeping amplitudes.
pub fn relabel(state: &StateVector, labels: &[String], nodes: &[NodeId]) -> Result<StateVector, TensorError> {
    let reg = labels.iter().zip(nodes).map(|(l, n)| Qubit::new(l.clone(), n.clone())).collect();
    StateVector::from_amplitudes(reg, state.amplitudes().to_vec())
}
