//! Converted circuits: column segments of controlled gates implementable with one column of Bell pairs.
//!
//! Wires are 1-based. A gate `(a, b; c)` is controlled by wires `a` and `b`
//! and targets wire `c`; `a == b` denotes the two-qubit gate `C_{a;c}`.
//! Target unitaries are indexed `u[2·v_a + v_b]` for three-qubit gates and
//! `u[v_a]` for two-qubit gates.
//!
//! A segment is legal when
//! * every inter-wire region is crossed by control lines of at most one wire, and
//! * no wire has a target between two of its control dots.
//!
//! Legal segments compile to LOCC over one column using `Σ (b − a)` vertical
//! pairs, summed over the control ranges `(a, b)`, which is at most `k − 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::locc::{LoccError, LoccProtocol, ProtocolBuilder};
use crate::network::{build_cluster, Network, NetworkError, NodeId};
use crate::random::{haar_unitary, Rng};
use crate::tensor::{embed_operator, gates, unitarity_deviation, CMatrix, MatrixJson, TensorError, C64, ONE};

/// Unitarity tolerance for target matrices and layers.
const GATE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConversionError {
    #[error("illegal segment: {}", describe(.0))]
    Illegal(Vec<SegmentViolation>),
    #[error("standard form is only known for 2 or 3 wires, got {0}")]
    UnsupportedWires(usize),
    #[error("malformed circuit: {0}")]
    Malformed(String),
    #[error(transparent)]
    Locc(#[from] LoccError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn describe(v: &[SegmentViolation]) -> String {
    v.iter().map(|x| format!("gate {}: {:?}", x.gate, x.rule)).collect::<Vec<_>>().join("; ")
}

/// A controlled gate `(ctrl[0], ctrl[1]; tgt)` with its target unitaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GateJson", into = "GateJson")]
pub struct ControlledGate {
    pub ctrl: [usize; 2],
    pub tgt: usize,
    pub u: Vec<CMatrix>,
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    ctrl: [usize; 2],
    tgt: usize,
    /// Target unitaries stacked with `dims = [count, 2, 2]`.
    u: MatrixJson,
}

impl From<ControlledGate> for GateJson {
    fn from(g: ControlledGate) -> Self {
        let mut re = Vec::new();
        let mut im = Vec::new();
        for m in &g.u {
            let j = MatrixJson::from_matrix(m);
            re.extend(j.re);
            im.extend(j.im);
        }
        GateJson { ctrl: g.ctrl, tgt: g.tgt, u: MatrixJson { dims: vec![g.u.len(), 2, 2], re, im, labels: None } }
    }
}

impl TryFrom<GateJson> for ControlledGate {
    type Error = String;

    fn try_from(j: GateJson) -> Result<Self, String> {
        let [n, r, c] = j.u.dims[..] else {
            return Err(format!("`u` needs dims [count, 2, 2], got {:?}", j.u.dims));
        };
        if r != 2 || c != 2 || j.u.re.len() != 4 * n || j.u.im.len() != 4 * n {
            return Err(format!("`u` needs dims [count, 2, 2] with matching data, got {:?}", j.u.dims));
        }
        let u = (0..n)
            .map(|t| {
                let vals: Vec<C64> = (0..4).map(|e| C64::new(j.u.re[4 * t + e], j.u.im[4 * t + e])).collect();
                CMatrix::from_row_slice(2, 2, &vals)
            })
            .collect();
        Ok(ControlledGate { ctrl: j.ctrl, tgt: j.tgt, u })
    }
}

impl ControlledGate {
    /// `C_{a;c}` applying `u0` or `u1` to wire `c`.
    pub fn two(a: usize, c: usize, u0: CMatrix, u1: CMatrix) -> Self {
        ControlledGate { ctrl: [a, a], tgt: c, u: vec![u0, u1] }
    }

    /// `C_{a,b;c}` applying `w[2·v_a + v_b]` to wire `c`.
    pub fn three(a: usize, b: usize, c: usize, w: [CMatrix; 4]) -> Self {
        ControlledGate { ctrl: [a, b], tgt: c, u: w.into() }
    }

    pub fn is_two_qubit(&self) -> bool {
        self.ctrl[0] == self.ctrl[1]
    }

    /// Distinct control wires.
    pub fn controls(&self) -> Vec<usize> {
        if self.is_two_qubit() {
            vec![self.ctrl[0]]
        } else {
            self.ctrl.to_vec()
        }
    }

    /// Local matrix on wires `(ctrl[0], tgt)` or `(ctrl[0], tgt, ctrl[1])`.
    pub fn local_matrix(&self) -> CMatrix {
        if self.is_two_qubit() {
            gates::controlled(&self.u[0], &self.u[1])
        } else {
            gates::fully_controlled(&[self.u[0].clone(), self.u[1].clone(), self.u[2].clone(), self.u[3].clone()])
        }
    }

    pub fn wires(&self) -> Vec<usize> {
        if self.is_two_qubit() {
            vec![self.ctrl[0], self.tgt]
        } else {
            vec![self.ctrl[0], self.tgt, self.ctrl[1]]
        }
    }

    /// The gate as a `2^k × 2^k` matrix.
    pub fn matrix_on(&self, k: usize) -> CMatrix {
        let pos: Vec<usize> = self.wires().iter().map(|w| w - 1).collect();
        embed_operator(&self.local_matrix(), k, &pos)
    }
}

/// One column: single-qubit layer, controlled-gate segment, single-qubit layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ColumnJson", into = "ColumnJson")]
pub struct Column {
    /// One unitary per wire, applied before the segment.
    pub pre: Vec<CMatrix>,
    pub gates: Vec<ControlledGate>,
    /// One unitary per wire, applied after the segment.
    pub post: Vec<CMatrix>,
}

#[derive(Serialize, Deserialize)]
struct ColumnJson {
    #[serde(default)]
    pre: Vec<MatrixJson>,
    gates: Vec<ControlledGate>,
    #[serde(default)]
    post: Vec<MatrixJson>,
}

impl From<Column> for ColumnJson {
    fn from(c: Column) -> Self {
        ColumnJson {
            pre: c.pre.iter().map(MatrixJson::from_matrix).collect(),
            gates: c.gates,
            post: c.post.iter().map(MatrixJson::from_matrix).collect(),
        }
    }
}

impl TryFrom<ColumnJson> for Column {
    type Error = String;

    fn try_from(j: ColumnJson) -> Result<Self, String> {
        let conv = |v: Vec<MatrixJson>| v.iter().map(|m| m.to_matrix().map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>();
        Ok(Column { pre: conv(j.pre)?, gates: j.gates, post: conv(j.post)? })
    }
}

impl Column {
    pub fn bare(k: usize, gates: Vec<ControlledGate>) -> Self {
        Column { pre: vec![gates::id2(); k], gates, post: vec![gates::id2(); k] }
    }
}

/// A converted circuit on `wires` qubits; column 1 acts first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertedCircuit {
    pub wires: usize,
    pub columns: Vec<Column>,
}

impl ConvertedCircuit {
    /// Identity-layered circuit with one segment per column.
    pub fn from_segments(k: usize, segments: Vec<Vec<ControlledGate>>) -> Self {
        ConvertedCircuit { wires: k, columns: segments.into_iter().map(|g| Column::bare(k, g)).collect() }
    }

    /// Checks shapes, unitarity and segment legality.
    pub fn check(&self) -> Result<(), ConversionError> {
        let k = self.wires;
        if k == 0 {
            return Err(ConversionError::Malformed("no wires".into()));
        }
        for (j, col) in self.columns.iter().enumerate() {
            for layer in [&col.pre, &col.post] {
                if !layer.is_empty() && layer.len() != k {
                    return Err(ConversionError::Malformed(format!("column {}: layer has {} entries for {k} wires", j + 1, layer.len())));
                }
                if layer.iter().any(|m| m.shape() != (2, 2) || unitarity_deviation(m) > GATE_TOL) {
                    return Err(ConversionError::Malformed(format!("column {}: layer entry is not a 2x2 unitary", j + 1)));
                }
            }
            let report = validate_segment(&col.gates, k);
            if !report.is_empty() {
                return Err(ConversionError::Illegal(report));
            }
        }
        Ok(())
    }

    /// The circuit's `2^k × 2^k` unitary.
    pub fn unitary(&self) -> CMatrix {
        let k = self.wires;
        let mut acc = CMatrix::identity(1 << k, 1 << k);
        for col in &self.columns {
            acc = layer_matrix(&col.pre, k) * acc;
            acc = segment_unitary(&col.gates, k) * acc;
            acc = layer_matrix(&col.post, k) * acc;
        }
        acc
    }

    /// True when every column holds exactly one gate of the standard shape.
    pub fn is_standard_form(&self) -> bool {
        self.columns.iter().all(|c| {
            c.gates.len() == 1
                && match self.wires {
                    2 => c.gates[0].ctrl == [1, 1] && c.gates[0].tgt == 2,
                    3 => c.gates[0].ctrl == [1, 3] && c.gates[0].tgt == 2,
                    _ => false,
                }
        })
    }

    /// Graphviz rendering: one node per gate, chained along each wire.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph circuit {\n  rankdir=LR;\n  node [shape=box, fontname=monospace];\n");
        let mut last: Vec<String> = (1..=self.wires).map(|w| format!("in{w}")).collect();
        for w in 1..=self.wires {
            let _ = writeln!(s, "  in{w} [label=\"q{w}\", shape=plaintext];");
        }
        for (j, col) in self.columns.iter().enumerate() {
            for (n, g) in col.gates.iter().enumerate() {
                let id = format!("g{}_{}", j + 1, n + 1);
                let label = format!("({},{};{})", g.ctrl[0], g.ctrl[1], g.tgt);
                let _ = writeln!(s, "  {id} [label=\"{label}\"];");
                let mut touched = g.wires();
                touched.sort_unstable();
                touched.dedup();
                for w in touched {
                    let style = if w == g.tgt { "solid" } else { "dashed" };
                    let _ = writeln!(s, "  {} -> {id} [label=\"q{w}\", style={style}];", last[w - 1]);
                    last[w - 1] = id.clone();
                }
            }
        }
        for w in 1..=self.wires {
            let _ = writeln!(s, "  out{w} [label=\"q{w}\", shape=plaintext];");
            let _ = writeln!(s, "  {} -> out{w};", last[w - 1]);
        }
        s.push_str("}\n");
        s
    }
}

fn layer_matrix(layer: &[CMatrix], k: usize) -> CMatrix {
    if layer.is_empty() {
        return CMatrix::identity(1 << k, 1 << k);
    }
    crate::tensor::kron_all(layer.iter())
}

/// Product of a segment's gates, first gate acting first.
pub fn segment_unitary(gates: &[ControlledGate], k: usize) -> CMatrix {
    gates.iter().fold(CMatrix::identity(1 << k, 1 << k), |acc, g| g.matrix_on(k) * acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Indices outside `1..=k`, a control equal to the target, or a three-qubit
    /// target not strictly between its controls.
    BadIndices,
    WrongTargetCount { expected: usize, got: usize },
    NotUnitary,
    /// The region between wires `region` and `region + 1` carries lines from several control wires.
    MixedRegion { region: usize, controls: Vec<usize> },
    /// A target on `wire` sits between two control dots on that wire.
    TargetBetweenControls { wire: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentViolation {
    /// 0-based index of the first gate at which the rule breaks.
    pub gate: usize,
    pub rule: Rule,
}

fn gate_shape_rule(g: &ControlledGate, k: usize) -> Option<Rule> {
    let [a, b] = g.ctrl;
    let c = g.tgt;
    let in_range = |w: usize| (1..=k).contains(&w);
    if !in_range(a) || !in_range(b) || !in_range(c) || a == c || b == c {
        return Some(Rule::BadIndices);
    }
    if a != b && !((a < c && c < b) || (b < c && c < a)) {
        return Some(Rule::BadIndices);
    }
    let expected = if a == b { 2 } else { 4 };
    if g.u.len() != expected {
        return Some(Rule::WrongTargetCount { expected, got: g.u.len() });
    }
    if g.u.iter().any(|m| m.shape() != (2, 2) || unitarity_deviation(m) > GATE_TOL) {
        return Some(Rule::NotUnitary);
    }
    None
}

/// Lists every legality violation of a segment on `k` wires (empty when legal).
pub fn validate_segment(gates: &[ControlledGate], k: usize) -> Vec<SegmentViolation> {
    let mut out = Vec::new();
    let mut region: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k.max(1)];
    let mut flagged_region = vec![false; k.max(1)];
    // Per wire: seen a dot, then a target after the dot.
    let mut dot = vec![false; k + 1];
    let mut boxed_after_dot = vec![false; k + 1];
    let mut flagged_wire = vec![false; k + 1];
    for (n, g) in gates.iter().enumerate() {
        if let Some(rule) = gate_shape_rule(g, k) {
            out.push(SegmentViolation { gate: n, rule });
            continue;
        }
        for ctl in g.controls() {
            let (lo, hi) = (ctl.min(g.tgt), ctl.max(g.tgt));
            for r in lo..hi {
                region[r].insert(ctl);
                if region[r].len() > 1 && !flagged_region[r] {
                    flagged_region[r] = true;
                    out.push(SegmentViolation { gate: n, rule: Rule::MixedRegion { region: r, controls: region[r].iter().copied().collect() } });
                }
            }
            if boxed_after_dot[ctl] && !flagged_wire[ctl] {
                flagged_wire[ctl] = true;
                out.push(SegmentViolation { gate: n, rule: Rule::TargetBetweenControls { wire: ctl } });
            }
            dot[ctl] = true;
        }
        if dot[g.tgt] {
            boxed_after_dot[g.tgt] = true;
        }
    }
    out
}

/// `C_i` and its range for one control wire `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSet {
    pub wire: usize,
    /// 0-based indices of the gates controlled by `wire`.
    pub gates: Vec<usize>,
    /// `(min(i, targets), max(i, targets))`.
    pub range: (usize, usize),
}

impl ControlSet {
    pub fn pairs(&self) -> usize {
        self.range.1 - self.range.0
    }
}

/// Nonempty control sets of a legal segment, keyed by wire.
pub fn control_sets_and_ranges(gates: &[ControlledGate], k: usize) -> Result<BTreeMap<usize, ControlSet>, ConversionError> {
    let v = validate_segment(gates, k);
    if !v.is_empty() {
        return Err(ConversionError::Illegal(v));
    }
    let mut sets: BTreeMap<usize, ControlSet> = BTreeMap::new();
    for (n, g) in gates.iter().enumerate() {
        for i in g.controls() {
            let e = sets.entry(i).or_insert(ControlSet { wire: i, gates: Vec::new(), range: (i, i) });
            e.gates.push(n);
            e.range = (e.range.0.min(g.tgt), e.range.1.max(g.tgt));
        }
    }
    Ok(sets)
}

/// Appends a legal segment on column `col` to `b`; `wires[i-1]` holds wire `i`'s qubit at `v_{i,col}`.
///
/// Each control wire is copied (CNOT into an ancilla) when first used; the copy is
/// teleported outward to both ends of its range, leaving a further copy at each
/// target row on the way. After the wire's last gate its copies are measured in
/// the X basis and a parity-conditioned `Z` restores the control. Returns the
/// number of vertical pairs consumed.
pub fn compile_segment(
    b: &mut ProtocolBuilder,
    col: usize,
    gates: &[ControlledGate],
    wires: &[String],
) -> Result<usize, ConversionError> {
    let k = wires.len();
    let sets = control_sets_and_ranges(gates, k)?;
    let last_use: HashMap<usize, usize> = sets.values().map(|s| (s.wire, *s.gates.last().expect("nonempty"))).collect();
    let mut copies: HashMap<usize, BTreeMap<usize, String>> = HashMap::new();
    let mut consumed = 0;
    for (n, g) in gates.iter().enumerate() {
        for i in g.controls() {
            if copies.contains_key(&i) {
                continue;
            }
            let set = &sets[&i];
            let targets: BTreeSet<usize> = set.gates.iter().map(|&t| gates[t].tgt).collect();
            let mut kept = BTreeMap::new();
            for end in [set.range.0, set.range.1] {
                if end == i {
                    continue;
                }
                fan_out(b, col, i, end, &wires[i - 1], &targets, &mut kept)?;
            }
            consumed += set.pairs();
            copies.insert(i, kept);
        }
        let copy = |w: usize| copies[&w][&g.tgt].clone();
        let target = wires[g.tgt - 1].clone();
        if g.is_two_qubit() {
            let ca = copy(g.ctrl[0]);
            b.local(&[&ca, &target], g.local_matrix())?;
        } else {
            let (ca, cb) = (copy(g.ctrl[0]), copy(g.ctrl[1]));
            b.local(&[&ca, &target, &cb], g.local_matrix())?;
        }
        for i in g.controls() {
            if last_use[&i] != n {
                continue;
            }
            let home = b.grid(i, col)?;
            let mut vars = Vec::new();
            for (row, c) in copies[&i].clone() {
                let v = b.measure_x(&c)?;
                b.send(&v, &b.grid(row, col)?, &home);
                vars.push(v);
            }
            b.conditional_local(&vars, &wires[i - 1], gates::z())?;
        }
    }
    Ok(consumed)
}

fn fan_out(
    b: &mut ProtocolBuilder,
    col: usize,
    from: usize,
    to: usize,
    source: &str,
    targets: &BTreeSet<usize>,
    kept: &mut BTreeMap<usize, String>,
) -> Result<(), ConversionError> {
    let step = |r: usize| if to > from { r + 1 } else { r - 1 };
    let mut holder = source.to_string();
    let mut row = from;
    loop {
        let node = b.grid(row, col)?;
        let anc = b.ancilla(&node, "c");
        b.local(&[&holder, &anc], gates::cnot())?;
        if row != from {
            kept.insert(row, holder);
        }
        let next = step(row);
        let mut moved = b.teleport_to(&anc, &b.grid(next, col)?)?;
        row = next;
        while row != to && !targets.contains(&row) {
            let next = step(row);
            moved = b.teleport_to(&moved, &b.grid(next, col)?)?;
            row = next;
        }
        if row == to {
            kept.insert(row, moved);
            return Ok(());
        }
        holder = moved;
    }
}

/// Compiles a converted circuit onto the `(k, N)` cluster.
///
/// Inputs `Q1..Qk` sit in column 1. Each column runs its layers and segment
/// locally and then teleports every wire one column right.
pub fn compile_circuit(circuit: &ConvertedCircuit) -> Result<(Network, LoccProtocol), ConversionError> {
    circuit.check()?;
    let k = circuit.wires;
    let net = build_cluster(k, circuit.columns.len().max(1))?;
    let protocol = {
        let mut b = ProtocolBuilder::new(&net);
        let wires: Vec<String> = (1..=k).map(|i| b.input(&format!("Q{i}"), &NodeId::grid(i, 1))).collect();
        let outputs = compile_onto(&mut b, circuit, wires)?;
        b.finish(outputs)
    };
    Ok((net, protocol))
}

/// Appends `circuit` to `b`, whose network must embed a `(k, N)` grid.
///
/// `wires[i-1]` is wire `i`'s qubit at grid node `(i, 1)`; returns the labels
/// holding the wires at column `N`.
pub fn compile_onto(b: &mut ProtocolBuilder, circuit: &ConvertedCircuit, mut wires: Vec<String>) -> Result<Vec<String>, ConversionError> {
    circuit.check()?;
    let n = circuit.columns.len();
    for (j, col) in circuit.columns.iter().enumerate() {
        let j = j + 1;
        for (w, m) in col.pre.iter().enumerate() {
            if !is_identity(m) {
                b.local(&[&wires[w]], m.clone())?;
            }
        }
        compile_segment(b, j, &col.gates, &wires)?;
        for (w, m) in col.post.iter().enumerate() {
            if !is_identity(m) {
                b.local(&[&wires[w]], m.clone())?;
            }
        }
        if j < n {
            for (i, w) in wires.iter_mut().enumerate() {
                let next = b.grid(i + 1, j + 1)?;
                *w = b.teleport_to(w, &next)?;
            }
        }
    }
    Ok(wires)
}

fn is_identity(m: &CMatrix) -> bool {
    crate::tensor::max_distance(m, &gates::id2()) == 0.0
}

/// Identity template of the standard form for `k ∈ {2, 3}` wires and `n` columns.
///
/// Each column holds `C_{1;2}` (for `k = 2`) or `C_{1,3;2}` (for `k = 3`).
pub fn standard_form(k: usize, n: usize) -> Result<ConvertedCircuit, ConversionError> {
    let id = gates::id2;
    let gate = match k {
        2 => ControlledGate::two(1, 2, id(), id()),
        3 => ControlledGate::three(1, 3, 2, [id(), id(), id(), id()]),
        _ => return Err(ConversionError::UnsupportedWires(k)),
    };
    Ok(ConvertedCircuit { wires: k, columns: (0..n).map(|_| Column::bare(k, vec![gate.clone()])).collect() })
}

/// Rewrites a legal circuit on 2 or 3 wires into its standard form with the same unitary.
pub fn simulate_by_standard_form(circuit: &ConvertedCircuit) -> Result<ConvertedCircuit, ConversionError> {
    circuit.check()?;
    let k = circuit.wires;
    if k != 2 && k != 3 {
        return Err(ConversionError::UnsupportedWires(k));
    }
    let mut columns = Vec::with_capacity(circuit.columns.len());
    for col in &circuit.columns {
        let r = if k == 2 { reduce_two(&col.gates) } else { reduce_three(&col.gates)? };
        let full = |layer: &Vec<CMatrix>| if layer.is_empty() { vec![gates::id2(); k] } else { layer.clone() };
        let (pre, post) = (full(&col.pre), full(&col.post));
        columns.push(Column {
            pre: (0..k).map(|w| &r.pre[w] * &pre[w]).collect(),
            gates: vec![r.gate],
            post: (0..k).map(|w| &post[w] * &r.post[w]).collect(),
        });
    }
    Ok(ConvertedCircuit { wires: k, columns })
}

/// `segment = post · gate · pre` with single-qubit layers `pre` and `post`.
struct Reduced {
    pre: Vec<CMatrix>,
    gate: ControlledGate,
    post: Vec<CMatrix>,
}

/// `D = Q diag(λ₀, λ₁) Q†` for a 2×2 unitary `D`.
fn eig_unitary2(d: &CMatrix) -> (CMatrix, [C64; 2]) {
    let off = d[(0, 1)].norm().max(d[(1, 0)].norm());
    if off < 1e-14 {
        return (gates::id2(), [d[(0, 0)], d[(1, 1)]]);
    }
    let tr = d[(0, 0)] + d[(1, 1)];
    let det = d[(0, 0)] * d[(1, 1)] - d[(0, 1)] * d[(1, 0)];
    let disc = (tr * tr - det * 4.0).sqrt();
    let l0 = (tr + disc) / 2.0;
    // Two candidate eigenvectors for λ₀; keep the better conditioned one.
    let v_a = [d[(0, 1)], l0 - d[(0, 0)]];
    let v_b = [l0 - d[(1, 1)], d[(1, 0)]];
    let na = (v_a[0].norm_sqr() + v_a[1].norm_sqr()).sqrt();
    let nb = (v_b[0].norm_sqr() + v_b[1].norm_sqr()).sqrt();
    let (v, nv) = if na >= nb { (v_a, na) } else { (v_b, nb) };
    let v = [v[0] / nv, v[1] / nv];
    let w = [-v[1].conj(), v[0].conj()];
    let q = CMatrix::from_row_slice(2, 2, &[v[0], w[0], v[1], w[1]]);
    let lam = q.adjoint() * d * &q;
    (q, [lam[(0, 0)], lam[(1, 1)]])
}

fn product(ms: impl Iterator<Item = CMatrix>) -> CMatrix {
    ms.fold(gates::id2(), |acc, m| m * acc)
}

fn reduce_two(gates_: &[ControlledGate]) -> Reduced {
    let id = gates::id2;
    let ctrl = gates_.first().map(|g| g.ctrl[0]).unwrap_or(1);
    let u0 = product(gates_.iter().map(|g| g.u[0].clone()));
    let u1 = product(gates_.iter().map(|g| g.u[1].clone()));
    if ctrl == 1 {
        return Reduced { pre: vec![id(), id()], gate: ControlledGate::two(1, 2, u0, u1), post: vec![id(), id()] };
    }
    // C_{2;1}(v0, v1) = (v0 Q ⊗ 1) · C_{1;2}(diag(1, λ₀), diag(1, λ₁)) · (Q† ⊗ 1).
    let (q, lam) = eig_unitary2(&(u0.adjoint() * &u1));
    Reduced {
        pre: vec![q.adjoint(), id()],
        gate: ControlledGate::two(1, 2, gates::diag2(ONE, lam[0]), gates::diag2(ONE, lam[1])),
        post: vec![&u0 * &q, id()],
    }
}

fn reduce_three(g: &[ControlledGate]) -> Result<Reduced, ConversionError> {
    let id = gates::id2;
    let idl = || vec![id(), id(), id()];
    // Target 2 with controls among {1, 3}: already fully controlled.
    if g.iter().all(|x| x.tgt == 2) {
        let mut w = [id(), id(), id(), id()];
        for x in g {
            for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let val = |wire: usize| if wire == 1 { a } else { b };
                let idx = if x.is_two_qubit() { val(x.ctrl[0]) } else { 2 * val(x.ctrl[0]) + val(x.ctrl[1]) };
                w[2 * a + b] = &x.u[idx] * &w[2 * a + b];
            }
        }
        return Ok(Reduced { pre: idl(), gate: ControlledGate::three(1, 3, 2, w), post: idl() });
    }
    let controls: BTreeSet<usize> = g.iter().flat_map(|x| x.controls()).collect();
    if controls.len() == 1 {
        return Ok(reduce_single_control(g, *controls.iter().next().expect("one control")));
    }
    reduce_mixed(g)
}

/// All gates controlled by one wire `c`: diagonalize both target products into a diagonal gate.
fn reduce_single_control(g: &[ControlledGate], c: usize) -> Reduced {
    let id = gates::id2;
    let others: Vec<usize> = (1..=3).filter(|&w| w != c).collect();
    let mut pre = vec![id(), id(), id()];
    let mut post = vec![id(), id(), id()];
    // lam[t][a][x]: phase on wire others[t] in eigenbasis state x when the control is a.
    let mut lam = [[[ONE; 2]; 2]; 2];
    for (t, &w) in others.iter().enumerate() {
        let on_w = || g.iter().filter(|x| x.tgt == w);
        let p0 = product(on_w().map(|x| x.u[0].clone()));
        let p1 = product(on_w().map(|x| x.u[1].clone()));
        let (q, l) = eig_unitary2(&(p0.adjoint() * &p1));
        pre[w - 1] = q.adjoint();
        post[w - 1] = &p0 * &q;
        lam[t][1] = l;
    }
    // Diagonal phase for wire values (v1, v2, v3).
    let phase = |v: [usize; 3]| -> C64 {
        let a = v[c - 1];
        lam[0][a][v[others[0] - 1]] * lam[1][a][v[others[1] - 1]]
    };
    let w: [CMatrix; 4] = std::array::from_fn(|ab| {
        let (a, b) = (ab >> 1, ab & 1);
        gates::diag2(phase([a, 0, b]), phase([a, 1, b]))
    });
    Reduced { pre, gate: ControlledGate::three(1, 3, 2, w), post }
}

/// Gates `(x;2)` around a contiguous block of `(2;y)` gates, with `{x, y} = {1, 3}`.
fn reduce_mixed(g: &[ControlledGate]) -> Result<Reduced, ConversionError> {
    let id = gates::id2;
    let from_two: Vec<usize> = (0..g.len()).filter(|&n| g[n].ctrl[0] == 2).collect();
    let (Some(&first), Some(&last)) = (from_two.first(), from_two.last()) else {
        return Err(ConversionError::Malformed("unclassified three-wire segment".into()));
    };
    let y = g[first].tgt;
    let x = 4 - y;
    let ok = g.iter().enumerate().all(|(n, e)| {
        if (first..=last).contains(&n) {
            e.ctrl == [2, 2] && e.tgt == y
        } else {
            e.ctrl == [x, x] && e.tgt == 2
        }
    });
    if !ok {
        return Err(ConversionError::Malformed("unclassified three-wire segment".into()));
    }
    let side = |r: std::ops::Range<usize>, a: usize| product(g[r].iter().map(|e| e.u[a].clone()));
    let p1 = [side(0..first, 0), side(0..first, 1)];
    let p2 = [side(last + 1..g.len(), 0), side(last + 1..g.len(), 1)];
    let m0 = side(first..last + 1, 0);
    let m1 = side(first..last + 1, 1);
    // C_{2;y}(m0, m1) = (m0 Q on y) · C_{y;2}(diag(1, λ_v)) · (Q† on y); y-locals commute past the (x;2) gates.
    let (q, lam) = eig_unitary2(&(m0.adjoint() * &m1));
    let w: [CMatrix; 4] = std::array::from_fn(|ab| {
        let (a, b) = (ab >> 1, ab & 1);
        let (vx, vy) = if x == 1 { (a, b) } else { (b, a) };
        &p2[vx] * gates::diag2(ONE, lam[vy]) * &p1[vx]
    });
    let mut pre = vec![id(), id(), id()];
    let mut post = vec![id(), id(), id()];
    pre[y - 1] = q.adjoint();
    post[y - 1] = &m0 * &q;
    Ok(Reduced { pre, gate: ControlledGate::three(1, 3, 2, w), post })
}

/// Random legal segment with up to `max_gates` gates and Haar-random targets.
///
/// Proposals that would break legality are redrawn, so every prefix is legal.
pub fn random_segment(rng: &mut Rng, k: usize, max_gates: usize) -> Vec<ControlledGate> {
    use rand::Rng as _;
    let mut seg: Vec<ControlledGate> = Vec::new();
    if k < 2 {
        return seg;
    }
    let count = rng.random_range(0..=max_gates);
    for _ in 0..count {
        for _attempt in 0..64 {
            let tgt = rng.random_range(1..=k);
            let three = k >= 3 && 1 < tgt && tgt < k && rng.random_bool(0.35);
            let gate = if three {
                let a = rng.random_range(1..tgt);
                let b = rng.random_range(tgt + 1..=k);
                let (a, b) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                ControlledGate::three(a, b, tgt, std::array::from_fn(|_| haar_unitary(rng, 2)))
            } else {
                let mut a = rng.random_range(1..k);
                if a >= tgt {
                    a += 1;
                }
                ControlledGate::two(a, tgt, haar_unitary(rng, 2), haar_unitary(rng, 2))
            };
            seg.push(gate);
            if validate_segment(&seg, k).is_empty() {
                break;
            }
            seg.pop();
        }
    }
    seg
}

/// Random legal circuit with Haar-random layers.
pub fn random_circuit(rng: &mut Rng, k: usize, n: usize, max_gates: usize) -> ConvertedCircuit {
    let columns = (0..n)
        .map(|_| Column {
            pre: (0..k).map(|_| haar_unitary(rng, 2)).collect(),
            gates: random_segment(rng, k, max_gates),
            post: (0..k).map(|_| haar_unitary(rng, 2)).collect(),
        })
        .collect();
    ConvertedCircuit { wires: k, columns }
}

/// The seven-gate, six-wire example segment with ranges (1,2), (2,5), (5,6).
pub fn example_segment(rng: &mut Rng) -> Vec<ControlledGate> {
    let mut two = |a, c| ControlledGate::two(a, c, haar_unitary(rng, 2), haar_unitary(rng, 2));
    let g1 = two(1, 2);
    let g2 = two(4, 2);
    let g3 = ControlledGate::three(1, 4, 2, std::array::from_fn(|_| haar_unitary(rng, 2)));
    let mut two = |a, c| ControlledGate::two(a, c, haar_unitary(rng, 2), haar_unitary(rng, 2));
    vec![g1, g2, g3, two(4, 5), two(4, 3), two(5, 6), two(4, 5)]
}

/// A segment with a target placed between two control dots on wire 2: `(2,2;1) (3,3;2) (2,2;1)`.
pub fn forbidden_example() -> Vec<ControlledGate> {
    let id = gates::id2;
    vec![
        ControlledGate::two(2, 1, id(), gates::x()),
        ControlledGate::two(3, 2, id(), gates::x()),
        ControlledGate::two(2, 1, id(), gates::z()),
    ]
}
