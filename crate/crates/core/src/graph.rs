//! DAGs, undirected graphs and CPDAGs, plus the structural operations the
//! search and evaluation code relies on.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Directed acyclic graph stored as sorted parent lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(num_vars: usize) -> Self {
        Dag {
            parents: vec![Vec::new(); num_vars],
        }
    }

    /// Builds a DAG from per-variable parent lists. Rejects self-loops,
    /// out-of-range indices and cycles.
    pub fn from_parents(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let d = parents.len();
        for (i, pa) in parents.iter_mut().enumerate() {
            pa.sort_unstable();
            pa.dedup();
            for &p in pa.iter() {
                if p >= d {
                    return Err(Error::IndexOutOfRange {
                        index: p,
                        num_vars: d,
                    });
                }
                if p == i {
                    return Err(Error::InvalidArgument(format!("self-loop on {i}")));
                }
            }
        }
        let dag = Dag { parents };
        if dag.topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    /// Builds a DAG from `(from, to)` edges.
    pub fn from_edges(num_vars: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); num_vars];
        for &(from, to) in edges {
            if to >= num_vars {
                return Err(Error::IndexOutOfRange {
                    index: to,
                    num_vars,
                });
            }
            parents[to].push(from);
        }
        Dag::from_parents(parents)
    }

    pub fn num_vars(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.num_vars())
            .filter(|&c| self.parents[c].binary_search(&i).is_ok())
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].binary_search(&from).is_ok()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// All edges as `(from, to)`, sorted by `to` then `from`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(i, pa)| pa.iter().map(move |&p| (p, i)))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm, smallest available index first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let d = self.num_vars();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); d];
        for (i, pa) in self.parents.iter().enumerate() {
            for &p in pa {
                children[p].push(i);
            }
        }
        let mut ready: BTreeSet<usize> = (0..d).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == d).then_some(order)
    }

    pub fn skeleton(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::new(self.num_vars());
        for (p, c) in self.edges() {
            g.add_edge(p, c);
        }
        g
    }

    /// Unshielded colliders `a -> c <- b` as `(a, c, b)` with `a < b`.
    pub fn v_structures(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (c, pa) in self.parents.iter().enumerate() {
            for (x, &a) in pa.iter().enumerate() {
                for &b in &pa[x + 1..] {
                    if !self.adjacent(a, b) {
                        out.push((a, c, b));
                    }
                }
            }
        }
        out
    }

    /// Same skeleton and same v-structures.
    pub fn markov_equivalent(&self, other: &Dag) -> bool {
        self.num_vars() == other.num_vars()
            && self.skeleton() == other.skeleton()
            && self.v_structures() == other.v_structures()
    }
}

/// Simple undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UndirectedGraph {
    adjacency: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn new(num_vars: usize) -> Self {
        UndirectedGraph {
            adjacency: vec![BTreeSet::new(); num_vars],
        }
    }

    pub fn complete(num_vars: usize) -> Self {
        let mut g = UndirectedGraph::new(num_vars);
        for i in 0..num_vars {
            for j in i + 1..num_vars {
                g.add_edge(i, j);
            }
        }
        g
    }

    pub fn from_edges(num_vars: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = UndirectedGraph::new(num_vars);
        for &(a, b) in edges {
            for x in [a, b] {
                if x >= num_vars {
                    return Err(Error::IndexOutOfRange { index: x, num_vars });
                }
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on {a}")));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    pub fn num_vars(&self) -> usize {
        self.adjacency.len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adjacency[a].insert(b);
            self.adjacency[b].insert(a);
        }
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.adjacency[a].remove(&b);
        self.adjacency[b].remove(&a);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nb)| nb.range(a + 1..).map(move |&b| (a, b)))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn is_subgraph_of(&self, other: &UndirectedGraph) -> bool {
        self.num_vars() == other.num_vars()
            && self
                .adjacency
                .iter()
                .zip(&other.adjacency)
                .all(|(a, b)| a.is_subset(b))
    }
}

/// Edge mark of an ordered pair `(i, j)` in a [`Cpdag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    None,
    /// `i -> j`
    Forward,
    /// `j -> i`
    Backward,
    /// `i -- j`
    Undirected,
}

/// Partially directed graph over a dense mark matrix.
///
/// `tail[i * d + j]` is set when there is an edge between `i` and `j` that
/// does not point into `i`; a directed edge `i -> j` sets only `(i, j)`, an
/// undirected edge sets both entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cpdag {
    d: usize,
    tail: Vec<bool>,
}

impl Cpdag {
    pub fn new(num_vars: usize) -> Self {
        Cpdag {
            d: num_vars,
            tail: vec![false; num_vars * num_vars],
        }
    }

    /// Every edge of `dag` as a directed mark.
    pub fn from_dag(dag: &Dag) -> Self {
        let mut g = Cpdag::new(dag.num_vars());
        for (p, c) in dag.edges() {
            g.set_directed(p, c);
        }
        g
    }

    pub fn from_undirected(graph: &UndirectedGraph) -> Self {
        let mut g = Cpdag::new(graph.num_vars());
        for (a, b) in graph.edges() {
            g.set_undirected(a, b);
        }
        g
    }

    pub fn num_vars(&self) -> usize {
        self.d
    }

    #[inline]
    fn t(&self, i: usize, j: usize) -> bool {
        self.tail[i * self.d + j]
    }

    pub fn mark(&self, i: usize, j: usize) -> Mark {
        match (self.t(i, j), self.t(j, i)) {
            (false, false) => Mark::None,
            (true, false) => Mark::Forward,
            (false, true) => Mark::Backward,
            (true, true) => Mark::Undirected,
        }
    }

    pub fn set_mark(&mut self, i: usize, j: usize, mark: Mark) {
        let (a, b) = match mark {
            Mark::None => (false, false),
            Mark::Forward => (true, false),
            Mark::Backward => (false, true),
            Mark::Undirected => (true, true),
        };
        let d = self.d;
        self.tail[i * d + j] = a;
        self.tail[j * d + i] = b;
    }

    pub fn set_directed(&mut self, from: usize, to: usize) {
        self.set_mark(from, to, Mark::Forward);
    }

    pub fn set_undirected(&mut self, a: usize, b: usize) {
        self.set_mark(a, b, Mark::Undirected);
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        self.set_mark(a, b, Mark::None);
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.t(a, b) || self.t(b, a)
    }

    pub fn is_directed(&self, from: usize, to: usize) -> bool {
        self.t(from, to) && !self.t(to, from)
    }

    pub fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.t(a, b) && self.t(b, a)
    }

    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let d = self.d;
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_directed(i, j))
            .collect()
    }

    /// Undirected edges as `(a, b)` with `a < b`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let d = self.d;
        (0..d)
            .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_undirected(i, j))
            .collect()
    }

    pub fn skeleton(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::new(self.d);
        for i in 0..self.d {
            for j in i + 1..self.d {
                if self.adjacent(i, j) {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    pub fn num_edges(&self) -> usize {
        self.skeleton().num_edges()
    }

    /// Restriction to `vars`; variable `vars[k]` becomes local index `k`.
    pub fn induced(&self, vars: &[usize]) -> Cpdag {
        let mut g = Cpdag::new(vars.len());
        for (a, &va) in vars.iter().enumerate() {
            for (b, &vb) in vars.iter().enumerate() {
                g.tail[a * vars.len() + b] = self.t(va, vb);
            }
        }
        g
    }

    /// Orients undirected edges with Meek's rules R1-R4 until no rule applies.
    pub fn meek_closure(&mut self) {
        loop {
            let mut changed = false;
            for (a, b) in self.undirected_edges() {
                if self.meek_orients(a, b) {
                    self.set_directed(a, b);
                    changed = true;
                } else if self.meek_orients(b, a) {
                    self.set_directed(b, a);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Whether some Meek rule forces the undirected edge `i -- j` into `i -> j`.
    fn meek_orients(&self, i: usize, j: usize) -> bool {
        let d = self.d;
        // R1: k -> i -- j, k and j non-adjacent.
        if (0..d).any(|k| k != j && self.is_directed(k, i) && !self.adjacent(k, j)) {
            return true;
        }
        // R2: i -> k -> j.
        if (0..d).any(|k| self.is_directed(i, k) && self.is_directed(k, j)) {
            return true;
        }
        // R3: i -- k -> j and i -- l -> j with k, l non-adjacent.
        let spouses: Vec<usize> = (0..d)
            .filter(|&k| k != j && self.is_undirected(i, k) && self.is_directed(k, j))
            .collect();
        for (x, &k) in spouses.iter().enumerate() {
            if spouses[x + 1..].iter().any(|&l| !self.adjacent(k, l)) {
                return true;
            }
        }
        // R4: i -- k -> l -> j with i adjacent to l, k and j non-adjacent.
        for k in (0..d).filter(|&k| k != j && self.is_undirected(i, k) && !self.adjacent(k, j)) {
            if (0..d).any(|l| {
                l != i && self.is_directed(k, l) && self.is_directed(l, j) && self.adjacent(i, l)
            }) {
                return true;
            }
        }
        false
    }
}

/// Skeleton plus an edge between every pair of parents sharing a child.
pub fn moralize(dag: &Dag) -> UndirectedGraph {
    let mut g = dag.skeleton();
    for pa in dag.parent_sets() {
        for (x, &a) in pa.iter().enumerate() {
            for &b in &pa[x + 1..] {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// Variables within two hops of `i`, excluding `i`, in ascending order.
pub fn two_hop_neighbors(g: &UndirectedGraph, i: usize) -> Result<Vec<usize>> {
    if i >= g.num_vars() {
        return Err(Error::IndexOutOfRange {
            index: i,
            num_vars: g.num_vars(),
        });
    }
    let mut out: BTreeSet<usize> = BTreeSet::new();
    for &j in g.neighbors(i) {
        out.insert(j);
        out.extend(g.neighbors(j).iter().copied());
    }
    out.remove(&i);
    Ok(out.into_iter().collect())
}

/// CPDAG of the Markov equivalence class of `dag`: skeleton, v-structures
/// oriented, then Meek closure.
pub fn dag_to_cpdag(dag: &Dag) -> Cpdag {
    let mut g = Cpdag::from_undirected(&dag.skeleton());
    for (a, c, b) in dag.v_structures() {
        g.set_directed(a, c);
        g.set_directed(b, c);
    }
    g.meek_closure();
    g
}

/// Orients the undirected marks of `pdag` without creating a directed cycle
/// or a new v-structure (Dor and Tarsi's sink-elimination procedure).
///
/// `required` lists additional `(from, to)` orientations imposed before the
/// extension; they may refer to undirected or absent pairs. Candidate sinks
/// are tried lowest index first, so the output is deterministic.
pub fn consistent_extension(pdag: &Cpdag, required: &[(usize, usize)]) -> Result<Dag> {
    let d = pdag.num_vars();
    let mut work = pdag.clone();
    for &(from, to) in required {
        if from >= d || to >= d {
            return Err(Error::IndexOutOfRange {
                index: from.max(to),
                num_vars: d,
            });
        }
        if work.is_directed(to, from) {
            return Err(Error::NotExtendable);
        }
        work.set_directed(from, to);
    }

    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (from, to) in work.directed_edges() {
        parents[to].push(from);
    }
    let mut alive = vec![true; d];
    let mut remaining = d;
    while remaining > 0 {
        let sink = (0..d).find(|&x| alive[x] && is_eliminable(&work, &alive, x));
        let Some(x) = sink else {
            return Err(Error::NotExtendable);
        };
        for y in 0..d {
            if alive[y] && y != x && work.is_undirected(x, y) {
                parents[x].push(y);
            }
        }
        alive[x] = false;
        remaining -= 1;
    }
    Dag::from_parents(parents).map_err(|_| Error::NotExtendable)
}

fn is_eliminable(work: &Cpdag, alive: &[bool], x: usize) -> bool {
    let d = work.num_vars();
    let live = |k: usize| alive[k] && k != x;
    if (0..d).any(|y| live(y) && work.is_directed(x, y)) {
        return false;
    }
    let adj: Vec<usize> = (0..d).filter(|&y| live(y) && work.adjacent(x, y)).collect();
    adj.iter()
        .filter(|&&y| work.is_undirected(x, y))
        .all(|&y| adj.iter().all(|&z| z == y || work.adjacent(y, z)))
}

/// Breadth-first connected components, each sorted ascending.
pub fn connected_components(g: &UndirectedGraph) -> Vec<Vec<usize>> {
    let d = g.num_vars();
    let mut seen = vec![false; d];
    let mut out = Vec::new();
    for s in 0..d {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> Dag {
        Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn collider3() -> Dag {
        Dag::from_edges(3, &[(0, 1), (2, 1)]).unwrap()
    }

    #[test]
    fn rejects_cycles_and_self_loops() {
        assert!(matches!(
            Dag::from_edges(2, &[(0, 1), (1, 0)]),
            Err(Error::Cyclic)
        ));
        assert!(Dag::from_edges(2, &[(1, 1)]).is_err());
        assert!(matches!(
            Dag::from_edges(2, &[(0, 5)]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn moralize_chain_and_collider() {
        assert_eq!(moralize(&chain3()).edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(moralize(&collider3()).edges(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn moralize_figure_one_graph() {
        // X=0, Y=1, W=2, Z=3; X->W, W->Z, X->Y, X->Z, Z->Y
        let dag = Dag::from_edges(4, &[(0, 2), (2, 3), (0, 1), (0, 3), (3, 1)]).unwrap();
        let m = moralize(&dag);
        // complete on {X, W, Z} plus X-Y and Z-Y
        assert_eq!(m.edges(), vec![(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)]);
        assert_eq!(m, dag.skeleton());
    }

    #[test]
    fn two_hop_examples() {
        let path = UndirectedGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(two_hop_neighbors(&path, 0).unwrap(), vec![1, 2]);
        let star = UndirectedGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(two_hop_neighbors(&star, 1).unwrap(), vec![0, 2, 3, 4]);
        let empty = UndirectedGraph::new(3);
        assert!(two_hop_neighbors(&empty, 0).unwrap().is_empty());
        assert!(matches!(
            two_hop_neighbors(&empty, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn cpdag_of_chain_is_undirected() {
        let c = dag_to_cpdag(&chain3());
        assert_eq!(c.undirected_edges(), vec![(0, 1), (1, 2)]);
        assert!(c.directed_edges().is_empty());
    }

    #[test]
    fn cpdag_of_collider_keeps_arrows() {
        let c = dag_to_cpdag(&collider3());
        assert_eq!(c.directed_edges(), vec![(0, 1), (2, 1)]);
        assert!(c.undirected_edges().is_empty());
    }

    #[test]
    fn cpdag_propagates_out_of_collider() {
        let dag = Dag::from_edges(4, &[(0, 1), (2, 1), (1, 3)]).unwrap();
        let c = dag_to_cpdag(&dag);
        assert_eq!(c.directed_edges(), vec![(0, 1), (1, 3), (2, 1)]);
    }

    #[test]
    fn extension_of_undirected_chain_avoids_collider() {
        let c = dag_to_cpdag(&chain3());
        let ext = consistent_extension(&c, &[]).unwrap();
        assert!(ext.v_structures().is_empty());
        assert_eq!(ext.skeleton(), chain3().skeleton());
    }

    #[test]
    fn extension_keeps_directed_collider() {
        let c = dag_to_cpdag(&collider3());
        assert_eq!(consistent_extension(&c, &[]).unwrap(), collider3());
    }

    #[test]
    fn extension_of_triangle_is_acyclic() {
        let c = Cpdag::from_undirected(&UndirectedGraph::complete(3));
        let ext = consistent_extension(&c, &[]).unwrap();
        assert_eq!(ext.num_edges(), 3);
        assert!(ext.topological_order().is_some());
    }

    #[test]
    fn extension_detects_impossible_pattern() {
        // chordless undirected 4-cycle: every orientation adds a v-structure
        let mut c = Cpdag::new(4);
        c.set_undirected(0, 1);
        c.set_undirected(1, 2);
        c.set_undirected(2, 3);
        c.set_undirected(3, 0);
        assert!(matches!(
            consistent_extension(&c, &[]),
            Err(Error::NotExtendable)
        ));
        let mut e = Cpdag::new(2);
        e.set_directed(0, 1);
        assert!(matches!(
            consistent_extension(&e, &[(1, 0)]),
            Err(Error::NotExtendable)
        ));
    }

    #[test]
    fn required_orientation_is_honored() {
        let c = dag_to_cpdag(&chain3());
        let ext = consistent_extension(&c, &[(2, 1)]).unwrap();
        assert!(ext.has_edge(2, 1));
        assert!(ext.has_edge(1, 0));
    }

    #[test]
    fn induced_subgraph_relabels() {
        let c = dag_to_cpdag(&Dag::from_edges(4, &[(0, 1), (2, 1), (1, 3)]).unwrap());
        let sub = c.induced(&[1, 3]);
        assert_eq!(sub.mark(0, 1), Mark::Forward);
    }

    #[test]
    fn components() {
        let g = UndirectedGraph::from_edges(5, &[(0, 3), (1, 4)]).unwrap();
        assert_eq!(connected_components(&g), vec![vec![0, 3], vec![1, 4], vec![2]]);
    }
}
