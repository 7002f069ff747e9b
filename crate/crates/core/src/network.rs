//! Network graphs whose edges are Bell pairs.
//!
//! A cluster network of size `(k, N)` has nodes `v_{i,j}` (row `i`, column `j`,
//! both 1-based), vertical edges `S:i,j` joining `v_{i,j}` and `v_{i+1,j}`, and
//! horizontal edges `K:i,j` joining `v_{i,j}` and `v_{i,j+1}`. Every edge holds
//! one `Φ⁺` pair whose two halves are named after the edge:
//! `S1[i,j]` / `S2[i+1,j]` and `K1[i,j]` / `K2[i,j+1]`.
//!
//! The butterfly and grail networks are built as named networks that embed a
//! `(3,2)` and a `(2,3)` cluster respectively; their nodes keep a grid
//! coordinate so protocols can be compiled once against grid positions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Qubit, StateVector, TensorError, C64};

/// Default limit on the number of qubits in an explicitly built resource state.
pub const DEFAULT_QUBIT_CAP: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid network size: {0}")]
    InvalidSize(String),
    #[error("invalid vertical edge {0:?}: {1}")]
    InvalidEdge([usize; 3], String),
    #[error("resource state needs {needed} qubits, cap is {cap}")]
    TooLarge { needed: usize, cap: usize },
    #[error("unknown network kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    /// Grid node `v_{i,j}`.
    pub fn grid(i: usize, j: usize) -> Self {
        NodeId(format!("v{i},{j}"))
    }

    pub fn named(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(String);

impl EdgeId {
    /// Vertical edge between rows `i` and `i+1` of column `j`.
    pub fn vertical(i: usize, j: usize) -> Self {
        EdgeId(format!("S:{i},{j}"))
    }

    /// Vertical edge between arbitrary rows `m < n` of column `j`.
    pub fn vertical_span(m: usize, n: usize, j: usize) -> Self {
        if n == m + 1 {
            Self::vertical(m, j)
        } else {
            EdgeId(format!("S:{m}-{n},{j}"))
        }
    }

    /// Horizontal edge between columns `j` and `j+1` of row `i`.
    pub fn horizontal(i: usize, j: usize) -> Self {
        EdgeId(format!("K:{i},{j}"))
    }

    /// Edge `E_n` of a named network.
    pub fn numbered(n: usize) -> Self {
        EdgeId(format!("E:{n}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An undirected edge carrying one Bell pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub a: NodeId,
    pub b: NodeId,
    /// Label of the pair half held at `a`.
    pub qubit_a: String,
    /// Label of the pair half held at `b`.
    pub qubit_b: String,
}

impl Edge {
    pub fn touches(&self, node: &NodeId) -> bool {
        &self.a == node || &self.b == node
    }

    /// The half of the pair held at `node`.
    pub fn qubit_at(&self, node: &NodeId) -> Option<&str> {
        if &self.a == node {
            Some(&self.qubit_a)
        } else if &self.b == node {
            Some(&self.qubit_b)
        } else {
            None
        }
    }

    pub fn other_end(&self, node: &NodeId) -> Option<&NodeId> {
        if &self.a == node {
            Some(&self.b)
        } else if &self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Cluster,
    Generalized,
    Butterfly,
    Grail,
}

/// A network: nodes, Bell-pair edges, ordered input and output nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: NetworkKind,
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    coords: BTreeMap<(usize, usize), NodeId>,
    /// Column-internal vertical edges, for generalized clusters: `(m, n, j)` with `m < n`.
    pub vertical_spans: Vec<(usize, usize, usize)>,
}

impl Network {
    pub fn edge(&self, id: &EdgeId) -> Option<&Edge> {
        self.edges.iter().find(|e| &e.id == id)
    }

    /// The node at grid position `(i, j)`, if the network embeds a cluster there.
    pub fn grid_node(&self, i: usize, j: usize) -> Option<&NodeId> {
        self.coords.get(&(i, j))
    }

    /// Grid coordinate of a node, if any.
    pub fn coords_of(&self, node: &NodeId) -> Option<(usize, usize)> {
        self.coords.iter().find(|(_, n)| *n == node).map(|(c, _)| *c)
    }

    /// The edge joining two nodes.
    pub fn edge_between(&self, a: &NodeId, b: &NodeId) -> Option<&Edge> {
        self.edges.iter().find(|e| (&e.a == a && &e.b == b) || (&e.a == b && &e.b == a))
    }

    /// The edge joining grid nodes `(i, j)` and `(i2, j2)`.
    pub fn grid_edge(&self, i: usize, j: usize, i2: usize, j2: usize) -> Option<&Edge> {
        let a = self.grid_node(i, j)?;
        let b = self.grid_node(i2, j2)?;
        self.edge_between(a, b)
    }

    pub fn contains_node(&self, node: &NodeId) -> bool {
        self.nodes.contains(node)
    }

    /// Edge and node holding a resource qubit.
    pub fn resource_qubit(&self, label: &str) -> Option<(&Edge, &NodeId)> {
        self.edges.iter().find_map(|e| {
            if e.qubit_a == label {
                Some((e, &e.a))
            } else if e.qubit_b == label {
                Some((e, &e.b))
            } else {
                None
            }
        })
    }

    pub fn num_resource_qubits(&self) -> usize {
        2 * self.edges.len()
    }

    /// Serializable description of this network.
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            kind: self.kind,
            k: Some(self.rows),
            n: Some(self.cols),
            vertical_edges: if self.kind == NetworkKind::Generalized {
                Some(self.vertical_spans.iter().map(|&(m, n, j)| [m, n, j]).collect())
            } else {
                None
            },
        }
    }
}

/// Network description in the interchange format
/// `{"kind", "k", "N", "vertical_edges": [[i, i', j], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical_edges: Option<Vec<[usize; 3]>>,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<Network, NetworkError> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| NetworkError::InvalidSize(format!("missing `{name}`")))
        };
        match self.kind {
            NetworkKind::Cluster => build_cluster(need(self.k, "k")?, need(self.n, "N")?),
            NetworkKind::Generalized => build_generalized_cluster(
                need(self.k, "k")?,
                need(self.n, "N")?,
                self.vertical_edges.as_deref().unwrap_or(&[]),
            ),
            NetworkKind::Butterfly => Ok(butterfly_network()),
            NetworkKind::Grail => Ok(grail_network()),
        }
    }
}

fn grid_nodes(k: usize, n: usize) -> (Vec<NodeId>, BTreeMap<(usize, usize), NodeId>) {
    let mut nodes = Vec::new();
    let mut coords = BTreeMap::new();
    for i in 1..=k {
        for j in 1..=n {
            let id = NodeId::grid(i, j);
            nodes.push(id.clone());
            coords.insert((i, j), id);
        }
    }
    (nodes, coords)
}

fn horizontal_edges(k: usize, n: usize) -> Vec<Edge> {
    let mut edges = Vec::new();
    for i in 1..=k {
        for j in 1..n {
            edges.push(Edge {
                id: EdgeId::horizontal(i, j),
                a: NodeId::grid(i, j),
                b: NodeId::grid(i, j + 1),
                qubit_a: format!("K1[{i},{j}]"),
                qubit_b: format!("K2[{i},{}]", j + 1),
            });
        }
    }
    edges
}

/// The `(k, N)` cluster network: `(k-1)N` vertical and `k(N-1)` horizontal edges.
pub fn build_cluster(k: usize, n: usize) -> Result<Network, NetworkError> {
    if k == 0 || n == 0 {
        return Err(NetworkError::InvalidSize(format!("k={k}, N={n}")));
    }
    let (nodes, coords) = grid_nodes(k, n);
    let mut edges = Vec::new();
    for i in 1..k {
        for j in 1..=n {
            edges.push(Edge {
                id: EdgeId::vertical(i, j),
                a: NodeId::grid(i, j),
                b: NodeId::grid(i + 1, j),
                qubit_a: format!("S1[{i},{j}]"),
                qubit_b: format!("S2[{},{j}]", i + 1),
            });
        }
    }
    edges.extend(horizontal_edges(k, n));
    Ok(Network {
        kind: NetworkKind::Cluster,
        rows: k,
        cols: n,
        inputs: (1..=k).map(|i| NodeId::grid(i, 1)).collect(),
        outputs: (1..=k).map(|i| NodeId::grid(i, n)).collect(),
        nodes,
        edges,
        coords,
        vertical_spans: (1..k).flat_map(|i| (1..=n).map(move |j| (i, i + 1, j))).collect(),
    })
}

/// A cluster whose vertical edges are arbitrary intra-column pairs `[i, i', j]`.
///
/// Horizontal edges are those of the plain cluster. Duplicate and self-loop
/// vertical edges are rejected.
pub fn build_generalized_cluster(
    k: usize,
    n: usize,
    vertical: &[[usize; 3]],
) -> Result<Network, NetworkError> {
    if k == 0 || n == 0 {
        return Err(NetworkError::InvalidSize(format!("k={k}, N={n}")));
    }
    let (nodes, coords) = grid_nodes(k, n);
    let mut seen = BTreeSet::new();
    let mut spans = Vec::new();
    for &[p, q, j] in vertical {
        let (m, l) = (p.min(q), p.max(q));
        if m == l {
            return Err(NetworkError::InvalidEdge([p, q, j], "self loop".into()));
        }
        if m == 0 || l > k || j == 0 || j > n {
            return Err(NetworkError::InvalidEdge([p, q, j], "out of range".into()));
        }
        if !seen.insert((m, l, j)) {
            return Err(NetworkError::InvalidEdge([p, q, j], "duplicate".into()));
        }
        spans.push((m, l, j));
    }
    spans.sort_by_key(|&(m, l, j)| (m, j, l));
    let mut edges: Vec<Edge> = spans
        .iter()
        .map(|&(m, l, j)| {
            let (qa, qb) = if l == m + 1 {
                (format!("S1[{m},{j}]"), format!("S2[{l},{j}]"))
            } else {
                (format!("S1[{m},{j};{l}]"), format!("S2[{l},{j};{m}]"))
            };
            Edge {
                id: EdgeId::vertical_span(m, l, j),
                a: NodeId::grid(m, j),
                b: NodeId::grid(l, j),
                qubit_a: qa,
                qubit_b: qb,
            }
        })
        .collect();
    edges.extend(horizontal_edges(k, n));
    Ok(Network {
        kind: NetworkKind::Generalized,
        rows: k,
        cols: n,
        inputs: (1..=k).map(|i| NodeId::grid(i, 1)).collect(),
        outputs: (1..=k).map(|i| NodeId::grid(i, n)).collect(),
        nodes,
        edges,
        coords,
        vertical_spans: spans,
    })
}

fn named_edge(n: usize, a: &str, b: &str) -> Edge {
    Edge {
        id: EdgeId::numbered(n),
        a: NodeId::named(a),
        b: NodeId::named(b),
        qubit_a: format!("E{n}@{a}"),
        qubit_b: format!("E{n}@{b}"),
    }
}

/// The butterfly network as a relabelled `(3,2)` cluster.
///
/// Node map: `i1, n1, i2, o1, n2, o2` are `v11, v21, v31, v12, v22, v32`.
/// Edge map: `E1, E5, E3` are the horizontal edges of rows 1, 2, 3;
/// `E2, E4` are the vertical edges of column 1 and `E6, E7` those of column 2.
pub fn butterfly_network() -> Network {
    let names = [("i1", 1, 1), ("n1", 2, 1), ("i2", 3, 1), ("o1", 1, 2), ("n2", 2, 2), ("o2", 3, 2)];
    let nodes: Vec<NodeId> = names.iter().map(|(s, _, _)| NodeId::named(*s)).collect();
    let coords = names.iter().map(|(s, i, j)| ((*i, *j), NodeId::named(*s))).collect();
    let edges = vec![
        named_edge(1, "i1", "o1"),
        named_edge(2, "i1", "n1"),
        named_edge(3, "i2", "o2"),
        named_edge(4, "n1", "i2"),
        named_edge(5, "n1", "n2"),
        named_edge(6, "o1", "n2"),
        named_edge(7, "n2", "o2"),
    ];
    Network {
        kind: NetworkKind::Butterfly,
        rows: 3,
        cols: 2,
        nodes,
        edges,
        inputs: vec![NodeId::named("i1"), NodeId::named("i2")],
        outputs: vec![NodeId::named("o1"), NodeId::named("o2")],
        coords,
        vertical_spans: vec![(1, 2, 1), (2, 3, 1), (1, 2, 2), (2, 3, 2)],
    }
}

/// Butterfly edge corresponding to each `(3,2)` cluster edge.
pub fn butterfly_edge_map() -> Vec<(EdgeId, EdgeId)> {
    vec![
        (EdgeId::horizontal(1, 1), EdgeId::numbered(1)),
        (EdgeId::horizontal(2, 1), EdgeId::numbered(5)),
        (EdgeId::horizontal(3, 1), EdgeId::numbered(3)),
        (EdgeId::vertical(1, 1), EdgeId::numbered(2)),
        (EdgeId::vertical(2, 1), EdgeId::numbered(4)),
        (EdgeId::vertical(1, 2), EdgeId::numbered(6)),
        (EdgeId::vertical(2, 2), EdgeId::numbered(7)),
    ]
}

/// The grail network: a `(2,3)` cluster plus two teleport-only edges.
///
/// Node map: `n1, n2, o1, i2, n3, n4` are `v11, v12, v13, v21, v22, v23`.
/// `E1` joins `i1`–`n1` and `E2` joins `n4`–`o2`; `E3..E6` are the horizontal
/// edges (row 1 then row 2) and `E7..E9` the vertical edges of columns 1..3.
pub fn grail_network() -> Network {
    let gridded = [("n1", 1, 1), ("n2", 1, 2), ("o1", 1, 3), ("i2", 2, 1), ("n3", 2, 2), ("n4", 2, 3)];
    let mut nodes: Vec<NodeId> = vec![NodeId::named("i1")];
    nodes.extend(gridded.iter().map(|(s, _, _)| NodeId::named(*s)));
    nodes.push(NodeId::named("o2"));
    let coords = gridded.iter().map(|(s, i, j)| ((*i, *j), NodeId::named(*s))).collect();
    let edges = vec![
        named_edge(1, "i1", "n1"),
        named_edge(2, "n4", "o2"),
        named_edge(3, "n1", "n2"),
        named_edge(4, "n2", "o1"),
        named_edge(5, "i2", "n3"),
        named_edge(6, "n3", "n4"),
        named_edge(7, "n1", "i2"),
        named_edge(8, "n2", "n3"),
        named_edge(9, "o1", "n4"),
    ];
    Network {
        kind: NetworkKind::Grail,
        rows: 2,
        cols: 3,
        nodes,
        edges,
        inputs: vec![NodeId::named("i1"), NodeId::named("i2")],
        outputs: vec![NodeId::named("o1"), NodeId::named("o2")],
        coords,
        vertical_spans: vec![(1, 2, 1), (1, 2, 2), (1, 2, 3)],
    }
}

/// `Φ⁺ = (|00⟩ + |11⟩)/√2` on the two halves of `edge`.
pub fn bell_pair(edge: &Edge) -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let register = vec![Qubit::new(&edge.qubit_a, edge.a.clone()), Qubit::new(&edge.qubit_b, edge.b.clone())];
    let amps = vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)];
    StateVector::from_amplitudes(register, amps).expect("two distinct labels")
}

/// Tensor product of one `Φ⁺` per edge, in the network's edge order.
pub fn build_resource_state(network: &Network, cap: usize) -> Result<StateVector, NetworkError> {
    let needed = network.num_resource_qubits();
    if needed > cap {
        return Err(NetworkError::TooLarge { needed, cap });
    }
    let mut state = StateVector::scalar();
    for e in &network.edges {
        state = state.tensor(&bell_pair(e))?;
    }
    Ok(state)
}

/// A cycle of vertical edges inside one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerticalLoop {
    pub column: usize,
    /// Rows in cyclic order; `rows[t]` and `rows[t+1 mod len]` share `edges[t]`.
    pub rows: Vec<usize>,
    pub edges: Vec<EdgeId>,
}

/// All simple cycles (length ≥ 3) of vertical edges, column by column.
///
/// Each cycle is reported once, starting at its smallest row and oriented so
/// that the second row is smaller than the last.
pub fn find_vertical_loops(network: &Network) -> Vec<VerticalLoop> {
    let mut out = Vec::new();
    for j in 1..=network.cols {
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(m, l, col) in &network.vertical_spans {
            if col == j {
                adj.entry(m).or_default().insert(l);
                adj.entry(l).or_default().insert(m);
            }
        }
        let rows: Vec<usize> = adj.keys().cloned().collect();
        for &start in &rows {
            let mut path = vec![start];
            cycles_from(start, &adj, &mut path, &mut |cycle: &[usize]| {
                if cycle.len() >= 3 && cycle[1] < cycle[cycle.len() - 1] {
                    let edges = (0..cycle.len())
                        .map(|t| {
                            let (a, b) = (cycle[t], cycle[(t + 1) % cycle.len()]);
                            EdgeId::vertical_span(a.min(b), a.max(b), j)
                        })
                        .collect();
                    out.push(VerticalLoop { column: j, rows: cycle.to_vec(), edges });
                }
            });
        }
    }
    out
}

fn cycles_from(
    start: usize,
    adj: &BTreeMap<usize, BTreeSet<usize>>,
    path: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    let last = *path.last().expect("non-empty path");
    for &next in &adj[&last] {
        if next == start && path.len() >= 3 {
            emit(path);
        } else if next > start && !path.contains(&next) {
            path.push(next);
            cycles_from(start, adj, path, emit);
            path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_edge_counts() {
        for k in 1..5 {
            for n in 1..5 {
                let net = build_cluster(k, n).unwrap();
                let v = net.edges.iter().filter(|e| e.id.as_str().starts_with('S')).count();
                let h = net.edges.iter().filter(|e| e.id.as_str().starts_with('K')).count();
                assert_eq!(v, (k - 1) * n);
                assert_eq!(h, k * (n - 1));
            }
        }
    }

    #[test]
    fn cluster_qubit_labels() {
        let net = build_cluster(3, 2).unwrap();
        let e = net.edge(&EdgeId::vertical(2, 1)).unwrap();
        assert_eq!(e.qubit_a, "S1[2,1]");
        assert_eq!(e.qubit_b, "S2[3,1]");
        let e = net.edge(&EdgeId::horizontal(1, 1)).unwrap();
        assert_eq!((e.qubit_a.as_str(), e.qubit_b.as_str()), ("K1[1,1]", "K2[1,2]"));
    }

    #[test]
    fn zero_size_rejected() {
        assert!(build_cluster(0, 2).is_err());
        assert!(build_cluster(2, 0).is_err());
    }

    #[test]
    fn resource_cap_enforced() {
        let net = build_cluster(3, 3).unwrap();
        assert_eq!(net.num_resource_qubits(), 24);
        assert!(matches!(build_resource_state(&net, 20), Err(NetworkError::TooLarge { .. })));
    }

    #[test]
    fn triangle_column_has_one_loop() {
        let net = build_generalized_cluster(3, 1, &[[1, 2, 1], [2, 3, 1], [1, 3, 1]]).unwrap();
        let loops = find_vertical_loops(&net);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].rows, vec![1, 2, 3]);
    }

    #[test]
    fn plain_cluster_has_no_loops() {
        assert!(find_vertical_loops(&build_cluster(4, 3).unwrap()).is_empty());
    }

    #[test]
    fn duplicate_vertical_edge_rejected() {
        assert!(build_generalized_cluster(3, 1, &[[1, 2, 1], [2, 1, 1]]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let net = build_generalized_cluster(4, 2, &[[1, 3, 1], [2, 4, 2]]).unwrap();
        let text = serde_json::to_string(&net.spec()).unwrap();
        assert_eq!(text, r#"{"kind":"generalized","k":4,"N":2,"vertical_edges":[[1,3,1],[2,4,2]]}"#);
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.build().unwrap(), net);
    }
}
