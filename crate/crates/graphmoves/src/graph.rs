//! Finite directed multigraphs with edge multiplicities in `N0 ∪ {∞}`,
//! their adjacency matrices and the derived `B = A - I` matrices.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intmat::IMat;

/// Edge multiplicity: a nonnegative count or infinity.
///
/// Arithmetic is total: `a + ∞ = ∞`, `∞ * k = ∞` for `k >= 1` and `∞ * 0 = 0`,
/// so collapse products `A(x,v) * A(v,y)` are always defined.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExtNat {
    Fin(u64),
    Inf,
}

impl ExtNat {
    pub const ZERO: ExtNat = ExtNat::Fin(0);
    pub const ONE: ExtNat = ExtNat::Fin(1);

    pub fn is_zero(self) -> bool {
        self == ExtNat::Fin(0)
    }

    pub fn is_inf(self) -> bool {
        self == ExtNat::Inf
    }

    pub fn add(self, other: ExtNat) -> ExtNat {
        match (self, other) {
            (ExtNat::Fin(a), ExtNat::Fin(b)) => {
                ExtNat::Fin(a.checked_add(b).expect("edge count overflow"))
            }
            _ => ExtNat::Inf,
        }
    }

    pub fn mul(self, other: ExtNat) -> ExtNat {
        match (self, other) {
            (ExtNat::Fin(a), ExtNat::Fin(b)) => {
                ExtNat::Fin(a.checked_mul(b).expect("edge count overflow"))
            }
            (ExtNat::Inf, ExtNat::Fin(0)) | (ExtNat::Fin(0), ExtNat::Inf) => ExtNat::Fin(0),
            _ => ExtNat::Inf,
        }
    }

    /// Saturating subtraction of a finite amount; `∞ - k = ∞`.
    pub fn sub_fin(self, k: u64) -> ExtNat {
        match self {
            ExtNat::Fin(a) => ExtNat::Fin(a.checked_sub(k).expect("edge count underflow")),
            ExtNat::Inf => ExtNat::Inf,
        }
    }
}

impl fmt::Display for ExtNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtNat::Fin(a) => write!(f, "{a}"),
            ExtNat::Inf => write!(f, "inf"),
        }
    }
}

impl fmt::Debug for ExtNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Entry of `B = A - I`: an integer or infinity.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtInt {
    Fin(i64),
    Inf,
}

impl ExtInt {
    pub fn as_fin(self) -> Option<i64> {
        match self {
            ExtInt::Fin(a) => Some(a),
            ExtInt::Inf => None,
        }
    }
}

impl fmt::Display for ExtInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtInt::Fin(a) => write!(f, "{a}"),
            ExtInt::Inf => write!(f, "inf"),
        }
    }
}

impl fmt::Debug for ExtInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Classification of a vertex by its emission behaviour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexClass {
    /// Finite, nonzero number of outgoing edges.
    Regular,
    /// No outgoing edges.
    Sink,
    /// Infinitely many outgoing edges.
    InfiniteEmitter,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph file is empty")]
    Empty,
    #[error("line 1: expected vertex count, got {0:?}")]
    BadHeader(String),
    #[error("graph must have at least one vertex")]
    ZeroVertices,
    #[error("row {row}: expected {expected} entries, got {got}")]
    RowLength { row: usize, expected: usize, got: usize },
    #[error("row {row}: malformed token {token:?}")]
    BadToken { row: usize, token: String },
    #[error("expected {expected} rows, got {got}")]
    RowCount { expected: usize, got: usize },
}

/// A finite directed multigraph, stored as its adjacency matrix.
///
/// `adj(u, v)` is the number of edges from `u` to `v`. Vertices are
/// `0..n` internally and printed 1-indexed.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    adj: Vec<ExtNat>,
}

impl Graph {
    pub fn new(n: usize, adj: Vec<ExtNat>) -> Graph {
        assert!(n >= 1, "graph must have at least one vertex");
        assert_eq!(adj.len(), n * n, "adjacency must be n*n");
        Graph { n, adj }
    }

    pub fn from_rows(rows: &[&[u64]]) -> Graph {
        let n = rows.len();
        let mut adj = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n);
            adj.extend(row.iter().map(|&x| ExtNat::Fin(x)));
        }
        Graph::new(n, adj)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn adj(&self, u: usize, v: usize) -> ExtNat {
        self.adj[u * self.n + v]
    }

    pub fn set_adj(&mut self, u: usize, v: usize, m: ExtNat) {
        self.adj[u * self.n + v] = m;
    }

    pub fn add_adj(&mut self, u: usize, v: usize, m: ExtNat) {
        let cur = self.adj(u, v);
        self.set_adj(u, v, cur.add(m));
    }

    /// Total number of edges leaving `u`.
    pub fn out_degree(&self, u: usize) -> ExtNat {
        (0..self.n).fold(ExtNat::ZERO, |acc, v| acc.add(self.adj(u, v)))
    }

    pub fn classify_vertex(&self, u: usize) -> VertexClass {
        match self.out_degree(u) {
            ExtNat::Fin(0) => VertexClass::Sink,
            ExtNat::Fin(_) => VertexClass::Regular,
            ExtNat::Inf => VertexClass::InfiniteEmitter,
        }
    }

    pub fn classify_vertices(&self) -> Vec<VertexClass> {
        (0..self.n).map(|u| self.classify_vertex(u)).collect()
    }

    pub fn is_regular(&self, u: usize) -> bool {
        self.classify_vertex(u) == VertexClass::Regular
    }

    pub fn is_singular(&self, u: usize) -> bool {
        !self.is_regular(u)
    }

    /// True if `u` has no incoming edges.
    pub fn is_source(&self, u: usize) -> bool {
        (0..self.n).all(|x| self.adj(x, u).is_zero())
    }

    /// Reflexive-transitive reachability: `out[u][v]` iff a directed path
    /// (length >= 0) runs from `u` to `v`.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.n;
        let mut reach = vec![vec![false; n]; n];
        for u in 0..n {
            reach[u][u] = true;
            for v in 0..n {
                if !self.adj(u, v).is_zero() {
                    reach[u][v] = true;
                }
            }
        }
        // Floyd-Warshall closure.
        for k in 0..n {
            for u in 0..n {
                if reach[u][k] {
                    for v in 0..n {
                        if reach[k][v] {
                            reach[u][v] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    /// Remove a set of vertices, renumbering the rest in order.
    /// Returns the new graph and the map old-index -> new-index.
    pub fn delete_vertices(&self, del: &[usize]) -> (Graph, Vec<Option<usize>>) {
        let keep: Vec<usize> = (0..self.n).filter(|v| !del.contains(v)).collect();
        assert!(!keep.is_empty(), "cannot delete all vertices");
        let mut map = vec![None; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        let m = keep.len();
        let mut adj = vec![ExtNat::ZERO; m * m];
        for (i, &u) in keep.iter().enumerate() {
            for (j, &v) in keep.iter().enumerate() {
                adj[i * m + j] = self.adj(u, v);
            }
        }
        (Graph::new(m, adj), map)
    }

    /// Relabel vertices: vertex `v` of the result is `perm[v]` of the input.
    pub fn relabel(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.n);
        let n = self.n;
        let mut adj = vec![ExtNat::ZERO; n * n];
        for u in 0..n {
            for v in 0..n {
                adj[u * n + v] = self.adj(perm[u], perm[v]);
            }
        }
        Graph::new(n, adj)
    }

    /// `B = A - I` over `Z ∪ {∞}`, the row-pruned integer matrix `B•`
    /// (singular rows removed) and the pruned row indices in ascending order.
    pub fn b_matrices(&self) -> (IntExtMat, IMat, Vec<usize>) {
        let n = self.n;
        let mut b = IntExtMat::zero(n, n);
        for u in 0..n {
            for v in 0..n {
                let a = self.adj(u, v);
                let e = match a {
                    ExtNat::Inf => ExtInt::Inf,
                    ExtNat::Fin(k) => {
                        let k = i64::try_from(k).expect("edge count too large");
                        ExtInt::Fin(if u == v { k - 1 } else { k })
                    }
                };
                b.set(u, v, e);
            }
        }
        let singular: Vec<usize> = (0..n).filter(|&u| self.is_singular(u)).collect();
        let regular: Vec<usize> = (0..n).filter(|&u| self.is_regular(u)).collect();
        let mut bullet = IMat::zero(regular.len(), n);
        for (i, &u) in regular.iter().enumerate() {
            for v in 0..n {
                let e = b.get(u, v).as_fin().expect("regular row must be finite");
                bullet.set_i64(i, v, e);
            }
        }
        (b, bullet, singular)
    }

    /// Render in the graph file format parsed by [`parse_graph`]; bit-exact
    /// round trip (no trailing whitespace, `\n` endings).
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.n.to_string());
        out.push('\n');
        for u in 0..self.n {
            for v in 0..self.n {
                if v > 0 {
                    out.push(' ');
                }
                out.push_str(&self.adj(u, v).to_string());
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph({}):", self.n)?;
        for u in 0..self.n {
            write!(f, " [")?;
            for v in 0..self.n {
                if v > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.adj(u, v))?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// Parse the graph file format: line 1 is `n`, then `n` rows of `n`
/// whitespace-separated naturals or the literal `inf`. Lines starting
/// with `#` are ignored.
pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or(GraphError::Empty)?;
    let n: usize = header
        .parse()
        .map_err(|_| GraphError::BadHeader(header.to_string()))?;
    if n == 0 {
        return Err(GraphError::ZeroVertices);
    }
    let mut adj = Vec::with_capacity(n * n);
    let mut rows = 0usize;
    for line in lines {
        rows += 1;
        if rows > n {
            return Err(GraphError::RowCount { expected: n, got: rows });
        }
        let mut got = 0usize;
        for tok in line.split_whitespace() {
            got += 1;
            if got > n {
                return Err(GraphError::RowLength { row: rows, expected: n, got });
            }
            let e = if tok == "inf" {
                ExtNat::Inf
            } else {
                ExtNat::Fin(tok.parse().map_err(|_| GraphError::BadToken {
                    row: rows,
                    token: tok.to_string(),
                })?)
            };
            adj.push(e);
        }
        if got != n {
            return Err(GraphError::RowLength { row: rows, expected: n, got });
        }
    }
    if rows != n {
        return Err(GraphError::RowCount { expected: n, got: rows });
    }
    Ok(Graph::new(n, adj))
}

/// Dense matrix over `Z ∪ {∞}`, used for the full `B` matrices.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntExtMat {
    rows: usize,
    cols: usize,
    data: Vec<ExtInt>,
}

impl IntExtMat {
    pub fn zero(rows: usize, cols: usize) -> IntExtMat {
        IntExtMat { rows, cols, data: vec![ExtInt::Fin(0); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> ExtInt {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: ExtInt) {
        self.data[r * self.cols + c] = v;
    }
}

impl fmt::Debug for IntExtMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            write!(f, "[")?;
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.get(r, c))?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig1_e() -> Graph {
        Graph::from_rows(&[&[1, 1, 2], &[0, 2, 1], &[0, 0, 1]])
    }

    #[test]
    fn extnat_arithmetic_total() {
        assert_eq!(ExtNat::Fin(2).add(ExtNat::Inf), ExtNat::Inf);
        assert_eq!(ExtNat::Inf.mul(ExtNat::Fin(3)), ExtNat::Inf);
        assert_eq!(ExtNat::Inf.mul(ExtNat::Fin(0)), ExtNat::Fin(0));
        assert_eq!(ExtNat::Fin(0).mul(ExtNat::Inf), ExtNat::Fin(0));
        assert!(ExtNat::Fin(u64::MAX) < ExtNat::Inf);
    }

    #[test]
    fn parse_fig1() {
        let g = parse_graph("3\n1 1 2\n0 2 1\n0 0 1").unwrap();
        assert_eq!(g, fig1_e());
    }

    #[test]
    fn parse_single_vertex() {
        let g = parse_graph("1\n0").unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.classify_vertices(), vec![VertexClass::Sink]);
        let reach = g.reachability();
        assert!(reach[0][0]);
    }

    #[test]
    fn parse_inf_roundtrip() {
        let text = "2\n0 inf\n0 0\n";
        let g = parse_graph(text).unwrap();
        assert_eq!(g.adj(0, 1), ExtNat::Inf);
        assert_eq!(
            g.classify_vertices(),
            vec![VertexClass::InfiniteEmitter, VertexClass::Sink]
        );
        assert_eq!(g.render(), text);
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(matches!(parse_graph(""), Err(GraphError::Empty)));
        assert!(matches!(parse_graph("x"), Err(GraphError::BadHeader(_))));
        assert!(matches!(parse_graph("0"), Err(GraphError::ZeroVertices)));
        assert!(matches!(
            parse_graph("2\n1 2\n3"),
            Err(GraphError::RowLength { .. })
        ));
        assert!(matches!(
            parse_graph("2\n1 2\n3 z"),
            Err(GraphError::BadToken { .. })
        ));
        assert!(matches!(
            parse_graph("3\n1 1 1\n1 1 1"),
            Err(GraphError::RowCount { .. })
        ));
    }

    #[test]
    fn comments_ignored() {
        let g = parse_graph("# a graph\n1\n# row\n2").unwrap();
        assert_eq!(g.adj(0, 0), ExtNat::Fin(2));
    }

    #[test]
    fn b_matrices_fig1() {
        let (b, bullet, sing) = fig1_e().b_matrices();
        assert!(sing.is_empty());
        assert_eq!(b.get(0, 0), ExtInt::Fin(0));
        assert_eq!(b.get(0, 2), ExtInt::Fin(2));
        assert_eq!(b.get(2, 2), ExtInt::Fin(0));
        assert_eq!(bullet.rows(), 3);
        assert_eq!(bullet.get_i64(1, 1), 1);
    }

    #[test]
    fn b_matrices_all_singular() {
        let g = parse_graph("2\n0 inf\n0 0").unwrap();
        let (b, bullet, sing) = g.b_matrices();
        assert_eq!(b.get(0, 1), ExtInt::Inf);
        assert_eq!(b.get(1, 1), ExtInt::Fin(-1));
        assert_eq!(bullet.rows(), 0);
        assert_eq!(bullet.cols(), 2);
        assert_eq!(sing, vec![0, 1]);
    }

    #[test]
    fn b_matrices_single_loop() {
        let g = parse_graph("1\n1").unwrap();
        let (b, bullet, sing) = g.b_matrices();
        assert_eq!(b.get(0, 0), ExtInt::Fin(0));
        assert_eq!(bullet.get_i64(0, 0), 0);
        assert!(sing.is_empty());
    }

    #[test]
    fn reachability_fig1_chain() {
        let reach = fig1_e().reachability();
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(reach[u][v], u <= v, "({u},{v})");
            }
        }
    }

    #[test]
    fn reachability_matches_boolean_power_oracle() {
        // Independent oracle: closure by repeated boolean matrix powers.
        let graphs = [
            fig1_e(),
            parse_graph("2\n0 inf\n0 0").unwrap(),
            Graph::from_rows(&[&[0, 1, 0, 0], &[0, 0, 2, 0], &[1, 0, 0, 0], &[0, 0, 0, 1]]),
        ];
        for g in graphs {
            let n = g.vertex_count();
            let step = |m: &Vec<Vec<bool>>| -> Vec<Vec<bool>> {
                let mut out = m.clone();
                for u in 0..n {
                    for k in 0..n {
                        if m[u][k] {
                            for v in 0..n {
                                if m[k][v] {
                                    out[u][v] = true;
                                }
                            }
                        }
                    }
                }
                out
            };
            let mut oracle = vec![vec![false; n]; n];
            for u in 0..n {
                oracle[u][u] = true;
                for v in 0..n {
                    if !g.adj(u, v).is_zero() {
                        oracle[u][v] = true;
                    }
                }
            }
            for _ in 0..n {
                oracle = step(&oracle);
            }
            assert_eq!(g.reachability(), oracle);
        }
    }

    #[test]
    fn render_parse_roundtrip() {
        let g = Graph::from_rows(&[&[0, 3], &[1, 0]]);
        assert_eq!(parse_graph(&g.render()).unwrap(), g);
    }
}
