//! Component structure of a graph: maximal strongly connected sets plus
//! singular singletons, transition states, the induced order, and the
//! eligibility checks for the eclosing move.

use serde::{Deserialize, Serialize};

use crate::graph::{ExtNat, Graph};

/// Kind of a component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    /// A strongly connected set in which some vertex has exactly one
    /// return path (the support is a lone cycle).
    Cyclic,
    /// A maximal strongly connected set with at least two return paths
    /// based at some vertex.
    NoncyclicScc,
    /// A singular vertex not based on any cycle.
    SingularSingleton,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub vertices: Vec<usize>,
    pub kind: ComponentKind,
}

/// The components of a graph, the transition states, and the reachability
/// order between components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPoset {
    pub components: Vec<Component>,
    pub transition_states: Vec<usize>,
    /// `geq[a][b]` iff component `a` reaches component `b`.
    pub geq: Vec<Vec<bool>>,
    /// For each vertex: `Some(c)` when it lies in component `c`.
    pub index_map: Vec<Option<usize>>,
}

impl ComponentPoset {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Strict reachability between distinct components.
    pub fn gt(&self, a: usize, b: usize) -> bool {
        a != b && self.geq[a][b]
    }

    /// Immediate successors of component `a` in the reachability order:
    /// `a > b` with nothing strictly between.
    pub fn immediate_successors(&self, a: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&b| self.gt(a, b))
            .filter(|&b| !(0..self.len()).any(|c| self.gt(a, c) && self.gt(c, b)))
            .collect()
    }
}

/// Tarjan's strongly connected components on the support digraph.
/// Components are returned with vertices ascending, in no particular
/// component order.
fn tarjan_scc(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.vertex_count();
    struct State {
        index: usize,
        stack: Vec<usize>,
        on_stack: Vec<bool>,
        idx: Vec<Option<usize>>,
        low: Vec<usize>,
        comps: Vec<Vec<usize>>,
    }
    let mut st = State {
        index: 0,
        stack: Vec::new(),
        on_stack: vec![false; n],
        idx: vec![None; n],
        low: vec![0; n],
        comps: Vec::new(),
    };
    // Iterative DFS to avoid recursion limits on long chains.
    fn connect(g: &Graph, root: usize, st: &mut State) {
        let n = g.vertex_count();
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        st.idx[root] = Some(st.index);
        st.low[root] = st.index;
        st.index += 1;
        st.stack.push(root);
        st.on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            let mut advanced = false;
            while *next < n {
                let w = *next;
                *next += 1;
                if g.adj(v, w).is_zero() {
                    continue;
                }
                if st.idx[w].is_none() {
                    st.idx[w] = Some(st.index);
                    st.low[w] = st.index;
                    st.index += 1;
                    st.stack.push(w);
                    st.on_stack[w] = true;
                    call.push((w, 0));
                    advanced = true;
                    break;
                } else if st.on_stack[w] {
                    st.low[v] = st.low[v].min(st.idx[w].unwrap());
                }
            }
            if advanced {
                continue;
            }
            call.pop();
            if let Some(&(p, _)) = call.last() {
                st.low[p] = st.low[p].min(st.low[v]);
            }
            if st.low[v] == st.idx[v].unwrap() {
                let mut comp = Vec::new();
                loop {
                    let w = st.stack.pop().expect("scc stack underflow");
                    st.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                st.comps.push(comp);
            }
        }
    }
    for v in 0..n {
        if st.idx[v].is_none() {
            connect(g, v, &mut st);
        }
    }
    st.comps
}

/// Is the strongly connected set `scc` a lone cycle (every vertex exactly
/// one return path)? Only called on genuine SCCs with a cycle.
fn scc_is_lone_cycle(g: &Graph, scc: &[usize]) -> bool {
    // A lone cycle means: within the component, every vertex emits exactly
    // one edge into the component, with multiplicity 1.
    for &v in scc {
        let mut within = ExtNat::ZERO;
        for &w in scc {
            within = within.add(g.adj(v, w));
        }
        if within != ExtNat::ONE {
            return false;
        }
    }
    true
}

/// Compute the component poset of a graph.
pub fn components(g: &Graph) -> ComponentPoset {
    let n = g.vertex_count();
    let reach = g.reachability();
    let sccs = tarjan_scc(g);
    let mut comps: Vec<Component> = Vec::new();
    for scc in sccs {
        let on_cycle = scc.len() > 1 || !g.adj(scc[0], scc[0]).is_zero();
        if on_cycle {
            let kind = if scc_is_lone_cycle(g, &scc) {
                ComponentKind::Cyclic
            } else {
                ComponentKind::NoncyclicScc
            };
            comps.push(Component { vertices: scc, kind });
        } else {
            let v = scc[0];
            if g.is_singular(v) {
                comps.push(Component {
                    vertices: vec![v],
                    kind: ComponentKind::SingularSingleton,
                });
            }
            // Regular vertices not on a cycle are transition states.
        }
    }
    // Deterministic component order by smallest vertex.
    comps.sort_by_key(|c| c.vertices[0]);
    let mut index_map = vec![None; n];
    for (ci, c) in comps.iter().enumerate() {
        for &v in &c.vertices {
            index_map[v] = Some(ci);
        }
    }
    let transition_states: Vec<usize> = (0..n).filter(|&v| index_map[v].is_none()).collect();
    let k = comps.len();
    let mut geq = vec![vec![false; k]; k];
    for a in 0..k {
        for b in 0..k {
            geq[a][b] = reach[comps[a].vertices[0]][comps[b].vertices[0]];
        }
    }
    ComponentPoset { components: comps, transition_states, geq, index_map }
}

/// Partial order on block indices `{0..N}` renumbered so that
/// `a ⪯ b` implies `a <= b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosetP {
    pub n: usize,
    /// `leq[a][b]` iff `a ⪯ b`.
    pub leq: Vec<Vec<bool>>,
}

impl PosetP {
    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.leq[a][b]
    }

    pub fn lt(&self, a: usize, b: usize) -> bool {
        a != b && self.leq[a][b]
    }

    /// `r_a = { b : b ≺ a }`.
    pub fn strictly_below(&self, a: usize) -> Vec<usize> {
        (0..self.n).filter(|&b| self.lt(b, a)).collect()
    }

    /// `s_a = { b : b ⪯ a }`.
    pub fn below(&self, a: usize) -> Vec<usize> {
        (0..self.n).filter(|&b| self.leq(b, a)).collect()
    }

    /// Immediate predecessors of `a`: `b ≺ a` with nothing strictly between.
    pub fn immediate_predecessors(&self, a: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&b| self.lt(b, a))
            .filter(|&b| !(0..self.n).any(|c| self.lt(b, c) && self.lt(c, a)))
            .collect()
    }

    pub fn minimal_elements(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&a| (0..self.n).all(|b| !self.lt(b, a)))
            .collect()
    }

    /// The transposed poset: `a ⪯ᵀ b` iff `n-1-b ⪯ n-1-a`.
    pub fn transpose(&self) -> PosetP {
        let n = self.n;
        let mut leq = vec![vec![false; n]; n];
        for a in 0..n {
            for b in 0..n {
                leq[a][b] = self.leq[n - 1 - b][n - 1 - a];
            }
        }
        PosetP { n, leq }
    }
}

/// Numbering of the components compatible with the block order: block `i`
/// comes before block `j` whenever component `i` reaches component `j`.
/// Topological order with smallest-original-vertex tie break.
pub fn block_numbering(poset: &ComponentPoset) -> Vec<usize> {
    let k = poset.len();
    let mut placed = vec![false; k];
    let mut order = Vec::with_capacity(k);
    while order.len() < k {
        // Available: all unplaced predecessors (components reaching it) placed.
        let next = (0..k)
            .filter(|&c| !placed[c])
            .filter(|&c| (0..k).all(|d| placed[d] || !poset.gt(d, c)))
            .min_by_key(|&c| poset.components[c].vertices[0])
            .expect("component reachability must be acyclic");
        placed[next] = true;
        order.push(next);
    }
    order
}

/// The order `⪯` on blocks induced by a numbering: `i ⪯ j` iff component
/// `order[i]` reaches component `order[j]`. Satisfies `i ⪯ j ⟹ i ≤ j`.
pub fn poset_p_from(poset: &ComponentPoset, order: &[usize]) -> PosetP {
    let k = order.len();
    let mut leq = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            leq[i][j] = poset.geq[order[i]][order[j]];
        }
    }
    for (i, row) in leq.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            debug_assert!(!v || i <= j, "numbering violates the order alignment");
        }
    }
    PosetP { n: k, leq }
}

/// Condition (K): no vertex has exactly one return path.
pub fn condition_k(g: &Graph) -> bool {
    let poset = components(g);
    poset
        .components
        .iter()
        .all(|c| c.kind != ComponentKind::Cyclic)
}

/// Number of distinct return paths based at `v`, capped at 2.
/// Matches the component classification: 0 when `v` is on no cycle,
/// 1 when `v`'s component is cyclic, 2 otherwise.
pub fn return_path_count_capped(g: &Graph, v: usize) -> u8 {
    let poset = components(g);
    match poset.index_map[v] {
        None => 0,
        Some(c) => match poset.components[c].kind {
            ComponentKind::SingularSingleton => 0,
            ComponentKind::Cyclic => 1,
            ComponentKind::NoncyclicScc => 2,
        },
    }
}

/// The smallest saturated hereditary set containing `set`: hereditary
/// closure (forward reachability) followed by saturation to a fixpoint.
pub fn saturated_hereditary_closure(g: &Graph, set: &[usize]) -> Vec<usize> {
    let n = g.vertex_count();
    let reach = g.reachability();
    let mut inside = vec![false; n];
    for &v in set {
        for w in 0..n {
            if reach[v][w] {
                inside[w] = true;
            }
        }
    }
    loop {
        let mut changed = false;
        for v in 0..n {
            if inside[v] || !g.is_regular(v) {
                continue;
            }
            let all_in = (0..n).all(|w| g.adj(v, w).is_zero() || inside[w]);
            if all_in {
                inside[v] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&v| inside[v]).collect()
}

/// One clause of an eligibility report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub description: String,
    pub holds: bool,
    /// Vertices witnessing a failure (1-indexed), empty on success.
    pub witnesses: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub eligible: bool,
    pub clauses: Vec<Clause>,
}

fn clause(description: &str, holds: bool, witnesses: Vec<usize>) -> Clause {
    Clause {
        description: description.to_string(),
        holds,
        witnesses: witnesses.into_iter().map(|v| v + 1).collect(),
    }
}

/// Eligibility of the eclosing move at `u`: `u` is regular, supports a loop
/// and no other return path, the loop has an exit, and every other vertex
/// receiving an edge from `u` is regular with at least two return paths.
pub fn move_p_eligible(g: &Graph, u: usize) -> EligibilityReport {
    let n = g.vertex_count();
    let mut clauses = Vec::new();
    clauses.push(clause("u is regular", g.is_regular(u), vec![u]));
    let has_loop = !g.adj(u, u).is_zero();
    clauses.push(clause("u supports a loop", has_loop, vec![u]));
    let rp = return_path_count_capped(g, u);
    clauses.push(clause(
        "u supports no return path other than the loop",
        has_loop && rp == 1 && g.adj(u, u) == ExtNat::ONE,
        vec![u],
    ));
    let exit = match g.out_degree(u) {
        ExtNat::Fin(k) => k >= 2,
        ExtNat::Inf => true,
    };
    clauses.push(clause("the loop based at u has an exit", exit, vec![u]));
    let mut bad = Vec::new();
    for w in 0..n {
        if w == u || g.adj(u, w).is_zero() {
            continue;
        }
        if !g.is_regular(w) || return_path_count_capped(g, w) < 2 {
            bad.push(w);
        }
    }
    clauses.push(clause(
        "every other target of u is regular with at least two return paths",
        bad.is_empty(),
        bad,
    ));
    EligibilityReport { eligible: clauses.iter().all(|c| c.holds), clauses }
}

/// The eight conditions under which the doubled eclosing witness applies.
pub fn assumption_hash_check(g: &Graph, u0: usize) -> EligibilityReport {
    let n = g.vertex_count();
    let poset = components(g);
    let mut clauses = Vec::new();

    // (1) infinite emitters emit infinitely to every target they hit, and
    //     there are no transition states.
    let mut impure = Vec::new();
    for v in 0..n {
        if g.classify_vertex(v) == crate::graph::VertexClass::InfiniteEmitter {
            for w in 0..n {
                if let ExtNat::Fin(k) = g.adj(v, w) {
                    if k > 0 {
                        impure.push(v);
                        break;
                    }
                }
            }
        }
    }
    let no_transition = poset.transition_states.is_empty();
    clauses.push(clause(
        "infinite emitters emit infinitely to every target",
        impure.is_empty(),
        impure,
    ));
    clauses.push(clause(
        "no transition states",
        no_transition,
        poset.transition_states.clone(),
    ));

    // (2) {u0} is a cyclic component.
    let u0_comp = poset.index_map[u0];
    let u0_cyclic = u0_comp.is_some_and(|c| {
        poset.components[c].kind == ComponentKind::Cyclic
            && poset.components[c].vertices == vec![u0]
    });
    clauses.push(clause("{u0} is a cyclic component", u0_cyclic, vec![u0]));

    // (3) u0 emits at least two edges.
    let emits_two = match g.out_degree(u0) {
        ExtNat::Fin(k) => k >= 2,
        ExtNat::Inf => true,
    };
    clauses.push(clause("u0 emits at least two edges", emits_two, vec![u0]));

    let targets: Vec<usize> = (0..n)
        .filter(|&w| w != u0 && !g.adj(u0, w).is_zero())
        .collect();

    // (4) u0 only emits edges to noncyclic strongly connected components.
    let mut bad4 = Vec::new();
    for &w in &targets {
        let ok = poset.index_map[w]
            .is_some_and(|c| poset.components[c].kind == ComponentKind::NoncyclicScc);
        if !ok {
            bad4.push(w);
        }
    }
    clauses.push(clause(
        "u0 only emits to noncyclic strongly connected components",
        bad4.is_empty(),
        bad4,
    ));

    // (5) u0 only emits to immediate successor components.
    let (mut bad5, mut bad6) = (Vec::new(), Vec::new());
    if let Some(uc) = u0_comp {
        let imm = poset.immediate_successors(uc);
        for &w in &targets {
            if let Some(c) = poset.index_map[w] {
                if !imm.contains(&c) {
                    bad5.push(w);
                }
            }
        }
        // (6) exactly one edge to each immediate successor component.
        for &c in &imm {
            let total = poset.components[c]
                .vertices
                .iter()
                .fold(ExtNat::ZERO, |acc, &w| acc.add(g.adj(u0, w)));
            if total != ExtNat::ONE {
                bad6.push(poset.components[c].vertices[0]);
            }
        }
    }
    clauses.push(clause(
        "u0 only emits to immediate successor components",
        bad5.is_empty(),
        bad5,
    ));
    clauses.push(clause(
        "u0 emits exactly one edge to each immediate successor component",
        bad6.is_empty(),
        bad6,
    ));

    // (7) each target u has exactly one loop and exactly one other outgoing
    //     edge, into its own component.
    let mut bad7 = Vec::new();
    for &w in &targets {
        let loop_ok = g.adj(w, w) == ExtNat::ONE;
        let comp = poset.index_map[w];
        let mut others = ExtNat::ZERO;
        let mut all_same_comp = true;
        for x in 0..n {
            if x == w {
                continue;
            }
            let m = g.adj(w, x);
            if !m.is_zero() {
                others = others.add(m);
                if poset.index_map[x] != comp {
                    all_same_comp = false;
                }
            }
        }
        if !(loop_ok && others == ExtNat::ONE && all_same_comp) {
            bad7.push(w);
        }
    }
    clauses.push(clause(
        "each target of u0 has exactly one loop and one other edge inside its component",
        bad7.is_empty(),
        bad7,
    ));

    // (8) each target u has incoming edges only from its own component
    //     (besides the edge from u0).
    let mut bad8 = Vec::new();
    for &w in &targets {
        let comp = poset.index_map[w];
        for x in 0..n {
            if x == u0 || poset.index_map[x] == comp {
                continue;
            }
            if !g.adj(x, w).is_zero() {
                bad8.push(w);
                break;
            }
        }
    }
    clauses.push(clause(
        "each target of u0 receives edges only from its component and u0",
        bad8.is_empty(),
        bad8,
    ));

    EligibilityReport { eligible: clauses.iter().all(|c| c.holds), clauses }
}
