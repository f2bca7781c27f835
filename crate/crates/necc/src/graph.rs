//! Acyclic directed multigraph model, its file format, unit-capacity
//! max-flow / edge-disjoint-path machinery, and the imaginary-source
//! augmentation that turns error locations into flow origins.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Structure(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown edge id {0}")]
    UnknownEdge(EdgeId),
    #[error("insufficient capacity: wanted {wanted} edge-disjoint paths, found {found}")]
    InsufficientCapacity { wanted: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
}

fn adjacency(node_count: usize, edges: &[Edge]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut out = vec![Vec::new(); node_count];
    let mut inc = vec![Vec::new(); node_count];
    // `edges` is ascending by id, so each list ends up ascending as well.
    for (pos, e) in edges.iter().enumerate() {
        out[e.tail].push(pos);
        inc[e.head].push(pos);
    }
    (out, inc)
}

fn topo_order(node_count: usize, edges: &[Edge]) -> Option<Vec<NodeId>> {
    let mut indeg = vec![0usize; node_count];
    for e in edges {
        indeg[e.head] += 1;
    }
    let mut heap: BinaryHeap<Reverse<NodeId>> = (0..node_count)
        .filter(|&v| indeg[v] == 0)
        .map(Reverse)
        .collect();
    let (out, _) = adjacency(node_count, edges);
    let mut order = Vec::with_capacity(node_count);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &pos in &out[v] {
            let h = edges[pos].head;
            indeg[h] -= 1;
            if indeg[h] == 0 {
                heap.push(Reverse(h));
            }
        }
    }
    (order.len() == node_count).then_some(order)
}

/// An acyclic directed multigraph with unit-capacity edges, one source and a
/// set of sinks. Ascending edge id is the fixed total order on the edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    names: Vec<String>,
    edges: Vec<Edge>, // ascending by id
    source: NodeId,
    sinks: Vec<NodeId>, // ascending
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl Network {
    fn build(
        names: Vec<String>,
        mut edges: Vec<Edge>,
        source: NodeId,
        mut sinks: Vec<NodeId>,
    ) -> Result<Self, ParseError> {
        edges.sort_by_key(|e| e.id);
        sinks.sort_unstable();
        sinks.dedup();
        if sinks.is_empty() {
            return Err(ParseError::Structure("no sink declared".into()));
        }
        if sinks.contains(&source) {
            return Err(ParseError::Structure(format!(
                "source {} is also a sink",
                names[source]
            )));
        }
        let (out, inc) = adjacency(names.len(), &edges);
        let n = Network {
            names,
            edges,
            source,
            sinks,
            out,
            inc,
        };
        if topo_order(n.names.len(), &n.edges).is_none() {
            return Err(ParseError::Structure("the graph contains a cycle".into()));
        }
        for &t in &n.sinks {
            if !n.reachable(n.source, t) {
                return Err(ParseError::Structure(format!(
                    "sink {} is not reachable from the source",
                    n.names[t]
                )));
            }
        }
        Ok(n)
    }

    fn reachable(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = vec![false; self.names.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for &pos in &self.out[v] {
                let h = self.edges[pos].head;
                if !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
        }
        false
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn node_name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|pos| &self.edges[pos])
    }

    /// Position of an edge in the fixed total order (ascending id).
    pub fn edge_position(&self, id: EdgeId) -> Option<usize> {
        self.edges.binary_search_by_key(&id, |e| e.id).ok()
    }

    pub fn max_edge_id(&self) -> EdgeId {
        self.edges.last().map_or(0, |e| e.id)
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn sinks(&self) -> &[NodeId] {
        &self.sinks
    }

    pub fn out_edges(&self, v: NodeId) -> impl Iterator<Item = &Edge> {
        self.out[v].iter().map(move |&pos| &self.edges[pos])
    }

    pub fn in_edges(&self, v: NodeId) -> impl Iterator<Item = &Edge> {
        self.inc[v].iter().map(move |&pos| &self.edges[pos])
    }

    /// Deterministic topological order: ties broken by ascending node id.
    pub fn topological_order(&self) -> Vec<NodeId> {
        topo_order(self.names.len(), &self.edges).expect("validated acyclic at construction")
    }

    /// Unit-capacity max-flow value, i.e. the size of a maximum family of
    /// edge-disjoint paths.
    pub fn min_cut(&self, from: NodeId, to: NodeId) -> usize {
        if from == to {
            return 0;
        }
        let mut fg = FlowGraph::new(self.names.len(), self.edges.clone());
        fg.max_flow(from, to, usize::MAX)
    }

    /// Smallest min-cut separating the source from any sink.
    pub fn min_min_cut(&self) -> usize {
        self.sinks
            .iter()
            .map(|&t| self.min_cut(self.source, t))
            .min()
            .expect("at least one sink")
    }

    /// Exactly `count` pairwise edge-disjoint paths avoiding `forbidden`,
    /// deterministic given the network.
    pub fn edge_disjoint_paths(
        &self,
        from: NodeId,
        to: NodeId,
        count: usize,
        forbidden: &BTreeSet<EdgeId>,
    ) -> Result<Vec<Vec<EdgeId>>, GraphError> {
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| !forbidden.contains(&e.id))
            .cloned()
            .collect();
        let mut fg = FlowGraph::new(self.names.len(), edges);
        let found = fg.max_flow(from, to, count);
        if found < count {
            return Err(GraphError::InsufficientCapacity {
                wanted: count,
                found,
            });
        }
        Ok(fg.used_paths(from, to, |_| false))
    }
}

/// Parses the line-oriented network file format.
pub fn parse_network(text: &str) -> Result<Network, ParseError> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut seen_ids: BTreeSet<EdgeId> = BTreeSet::new();
    let mut source: Option<NodeId> = None;
    let mut sinks: Vec<NodeId> = Vec::new();

    let err = |line: usize, msg: String| ParseError::Line { line, msg };
    let valid_name = |s: &str| {
        !s.is_empty()
            && s.chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let keyword = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match keyword {
            "node" => {
                let [name] = rest[..] else {
                    return Err(err(line, "expected: node <name>".into()));
                };
                if !valid_name(name) {
                    return Err(err(line, format!("invalid node name {name:?}")));
                }
                if index.contains_key(name) {
                    return Err(err(line, format!("duplicate node {name}")));
                }
                index.insert(name.to_string(), names.len());
                names.push(name.to_string());
            }
            "edge" => {
                let [id, tail, head] = rest[..] else {
                    return Err(err(line, "expected: edge <id> <tail> <head>".into()));
                };
                let id: EdgeId = id
                    .parse()
                    .map_err(|_| err(line, format!("invalid edge id {id:?}")))?;
                if !seen_ids.insert(id) {
                    return Err(err(line, format!("duplicate edge id {id}")));
                }
                let &tail = index
                    .get(tail)
                    .ok_or_else(|| err(line, format!("unknown node {tail}")))?;
                let &head = index
                    .get(head)
                    .ok_or_else(|| err(line, format!("unknown node {head}")))?;
                edges.push(Edge { id, tail, head });
            }
            "source" => {
                let [name] = rest[..] else {
                    return Err(err(line, "expected: source <name>".into()));
                };
                let &v = index
                    .get(name)
                    .ok_or_else(|| err(line, format!("unknown node {name}")))?;
                if source.replace(v).is_some() {
                    return Err(err(line, "more than one source declared".into()));
                }
            }
            "sink" => {
                let [name] = rest[..] else {
                    return Err(err(line, "expected: sink <name>".into()));
                };
                let &v = index
                    .get(name)
                    .ok_or_else(|| err(line, format!("unknown node {name}")))?;
                sinks.push(v);
            }
            other => {
                return Err(err(line, format!("unknown directive {other:?}")));
            }
        }
    }

    let source = source.ok_or_else(|| ParseError::Structure("no source declared".into()))?;
    Network::build(names, edges, source, sinks)
}

/// A hypothesized set of edges on which errors may occur.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ErrorPattern {
    edges: BTreeSet<EdgeId>,
}

impl ErrorPattern {
    pub fn new(
        edges: impl IntoIterator<Item = EdgeId>,
        network: &Network,
    ) -> Result<Self, GraphError> {
        let edges: BTreeSet<EdgeId> = edges.into_iter().collect();
        for &e in &edges {
            if network.edge(e).is_none() {
                return Err(GraphError::UnknownEdge(e));
            }
        }
        Ok(ErrorPattern { edges })
    }

    pub fn empty() -> Self {
        ErrorPattern {
            edges: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        self.edges.contains(&e)
    }

    pub fn iter(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges.iter().copied()
    }

    /// Index of an edge in the ascending order of the pattern, i.e. the
    /// error coordinate it occupies.
    pub fn index_of(&self, e: EdgeId) -> Option<usize> {
        self.edges.iter().position(|&x| x == e)
    }
}

impl fmt::Display for ErrorPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.edges.is_empty() {
            return write!(f, "-");
        }
        let ids: Vec<String> = self.edges.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", ids.join(","))
    }
}

/// One split pattern edge: the two halves, the imaginary mid-node, and the
/// imaginary edge feeding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEdge {
    pub in_half: EdgeId,
    pub mid: NodeId,
    pub out_half: EdgeId,
    pub imaginary: EdgeId,
}

/// The base network with an imaginary source, k source edges, and one split
/// mid-node per pattern edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedNetwork {
    base: Network,
    pattern: ErrorPattern,
    k: usize,
    names: Vec<String>,
    edges: Vec<Edge>, // ascending by id
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    imaginary_source: NodeId,
    source_edges: Vec<EdgeId>,
    splits: BTreeMap<EdgeId, SplitEdge>,
}

/// Adds the imaginary source with `k` source edges and splits every pattern
/// edge at an imaginary mid-node. New ids extend the base total order:
/// source edges first, then in-half / out-half / imaginary edge per pattern
/// edge in ascending original id.
pub fn augment(network: &Network, pattern: &ErrorPattern, k: usize) -> AugmentedNetwork {
    assert!(k >= 1, "at least one message symbol");
    let mut names = network.names.clone();
    let imaginary_source = names.len();
    names.push("s'".to_string());

    let mut next_id = network.max_edge_id() + 1;
    let mut edges: Vec<Edge> = network
        .edges
        .iter()
        .filter(|e| !pattern.contains(e.id))
        .cloned()
        .collect();
    let mut source_edges = Vec::with_capacity(k);
    for _ in 0..k {
        edges.push(Edge {
            id: next_id,
            tail: imaginary_source,
            head: network.source,
        });
        source_edges.push(next_id);
        next_id += 1;
    }
    let mut splits = BTreeMap::new();
    for orig in pattern.iter() {
        let e = network.edge(orig).expect("pattern validated");
        let mid = names.len();
        names.push(format!("{}'{}", network.names[e.tail], orig));
        let split = SplitEdge {
            in_half: next_id,
            mid,
            out_half: next_id + 1,
            imaginary: next_id + 2,
        };
        edges.push(Edge {
            id: split.in_half,
            tail: e.tail,
            head: mid,
        });
        edges.push(Edge {
            id: split.out_half,
            tail: mid,
            head: e.head,
        });
        edges.push(Edge {
            id: split.imaginary,
            tail: imaginary_source,
            head: mid,
        });
        next_id += 3;
        splits.insert(orig, split);
    }
    edges.sort_by_key(|e| e.id);
    let (out, inc) = adjacency(names.len(), &edges);
    AugmentedNetwork {
        base: network.clone(),
        pattern: pattern.clone(),
        k,
        names,
        edges,
        out,
        inc,
        imaginary_source,
        source_edges,
        splits,
    }
}

impl AugmentedNetwork {
    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn pattern(&self) -> &ErrorPattern {
        &self.pattern
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of global encoding vectors: message coordinates then one error
    /// coordinate per pattern edge.
    pub fn dim(&self) -> usize {
        self.k + self.pattern.len()
    }

    pub fn imaginary_source(&self) -> NodeId {
        self.imaginary_source
    }

    pub fn source_edges(&self) -> &[EdgeId] {
        &self.source_edges
    }

    pub fn splits(&self) -> &BTreeMap<EdgeId, SplitEdge> {
        &self.splits
    }

    pub fn split(&self, orig: EdgeId) -> Option<&SplitEdge> {
        self.splits.get(&orig)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|pos| &self.edges[pos])
    }

    pub fn node_name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn out_edges(&self, v: NodeId) -> impl Iterator<Item = &Edge> {
        self.out[v].iter().map(move |&pos| &self.edges[pos])
    }

    pub fn in_edges(&self, v: NodeId) -> impl Iterator<Item = &Edge> {
        self.inc[v].iter().map(move |&pos| &self.edges[pos])
    }

    /// The augmented edge carrying the symbol observed downstream of a base
    /// edge: its out-half when split, the edge itself otherwise.
    pub fn observed_edge(&self, base_edge: EdgeId) -> EdgeId {
        self.splits
            .get(&base_edge)
            .map_or(base_edge, |s| s.out_half)
    }

    /// The augmented edge whose local coefficients are chosen for a base
    /// edge: its in-half when split, the edge itself otherwise.
    pub fn choice_edge(&self, base_edge: EdgeId) -> EdgeId {
        self.splits.get(&base_edge).map_or(base_edge, |s| s.in_half)
    }

    pub fn is_imaginary_edge(&self, id: EdgeId) -> bool {
        self.splits.values().any(|s| s.imaginary == id)
    }

    /// Error coordinate of a pattern edge (offset past the k message
    /// coordinates is not applied here).
    pub fn error_index(&self, base_edge: EdgeId) -> Option<usize> {
        self.pattern.index_of(base_edge)
    }

    /// Rebuilds the base network by removing every added node and edge and
    /// re-merging split halves.
    pub fn strip(&self) -> Network {
        let mut names = self.names.clone();
        names.truncate(self.base.names.len());
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| {
                e.id <= self.base.max_edge_id()
            })
            .cloned()
            .collect();
        for (&orig, split) in &self.splits {
            let tail = self.edge(split.in_half).expect("half exists").tail;
            let head = self.edge(split.out_half).expect("half exists").head;
            edges.push(Edge {
                id: orig,
                tail,
                head,
            });
        }
        Network::build(names, edges, self.base.source, self.base.sinks.clone())
            .expect("stripping restores a valid network")
    }
}

/// Per (sink, pattern) edge-disjoint path system: the imaginary-edge paths
/// first, then the k message paths through the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowPlan {
    pub sink: NodeId,
    pub pattern: ErrorPattern,
    pub imaginary_paths: Vec<Vec<EdgeId>>,
    pub message_paths: Vec<Vec<EdgeId>>,
    predecessor: BTreeMap<EdgeId, EdgeId>,
}

impl FlowPlan {
    /// Number of disjoint paths through the imaginary edges.
    pub fn m(&self) -> usize {
        self.imaginary_paths.len()
    }

    pub fn paths(&self) -> impl Iterator<Item = &Vec<EdgeId>> {
        self.imaginary_paths.iter().chain(self.message_paths.iter())
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        self.paths().any(|p| p.contains(&e))
    }

    /// The edge before `e` on the unique plan path containing it.
    pub fn predecessor(&self, e: EdgeId) -> Option<EdgeId> {
        self.predecessor.get(&e).copied()
    }

    /// First edge of every path, imaginary paths first.
    pub fn initial_edges(&self) -> Vec<EdgeId> {
        self.paths().map(|p| p[0]).collect()
    }

    /// Last edge of every path, imaginary paths first.
    pub fn terminal_edges(&self) -> Vec<EdgeId> {
        self.paths().map(|p| *p.last().expect("non-empty path")).collect()
    }
}

/// Step 2 of the construction: as many disjoint paths through the imaginary
/// edges as possible, then k message paths through the source, disjoint from
/// the first family. Fails with `InsufficientCapacity` when the k message
/// paths do not exist for this (sink, pattern).
pub fn build_flow_plan(aug: &AugmentedNetwork, sink: NodeId) -> Result<FlowPlan, GraphError> {
    let s_prime = aug.imaginary_source;
    let source_set: BTreeSet<EdgeId> = aug.source_edges.iter().copied().collect();
    let imaginary_set: BTreeSet<EdgeId> = aug.splits.values().map(|s| s.imaginary).collect();

    let mut fg = FlowGraph::new(aug.names.len(), aug.edges.clone());

    // Step 2a: only imaginary edges leave s'.
    fg.set_blocked(|e| source_set.contains(&e.id));
    fg.max_flow(s_prime, sink, usize::MAX);

    // Step 2b on the residual graph: the imaginary edges are pinned (no
    // further use and no cancellation, so the first family keeps its full
    // value), while augmenting paths enter through the source edges and may
    // reroute the interior of the first family through residual arcs.
    fg.set_blocked(|e| imaginary_set.contains(&e.id));
    let found = fg.max_flow(s_prime, sink, aug.k);
    if found < aug.k {
        return Err(GraphError::InsufficientCapacity {
            wanted: aug.k,
            found,
        });
    }

    let paths = fg.used_paths(s_prime, sink, |id| imaginary_set.contains(&id));
    let (imaginary_paths, message_paths): (Vec<_>, Vec<_>) = paths
        .into_iter()
        .partition(|p: &Vec<EdgeId>| imaginary_set.contains(&p[0]));

    let mut predecessor = BTreeMap::new();
    for path in imaginary_paths.iter().chain(message_paths.iter()) {
        for pair in path.windows(2) {
            predecessor.insert(pair[1], pair[0]);
        }
    }
    Ok(FlowPlan {
        sink,
        pattern: aug.pattern.clone(),
        imaginary_paths,
        message_paths,
        predecessor,
    })
}

/// Unit-capacity max-flow by BFS augmentation (Edmonds-Karp). The BFS scans
/// forward arcs in ascending edge id, then reverse arcs in ascending edge
/// id, so path selection is deterministic.
struct FlowGraph {
    nodes: usize,
    arcs: Vec<Edge>, // ascending by id
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    used: Vec<bool>,
    blocked: Vec<bool>,
}

impl FlowGraph {
    fn new(nodes: usize, mut arcs: Vec<Edge>) -> Self {
        arcs.sort_by_key(|e| e.id);
        let (out, inc) = adjacency(nodes, &arcs);
        let used = vec![false; arcs.len()];
        let blocked = vec![false; arcs.len()];
        FlowGraph {
            nodes,
            arcs,
            out,
            inc,
            used,
            blocked,
        }
    }

    /// Replaces the blocked set: blocked arcs take part in no augmenting
    /// path, forward or backward, but keep any flow already on them.
    fn set_blocked(&mut self, pred: impl Fn(&Edge) -> bool) {
        for (i, arc) in self.arcs.iter().enumerate() {
            self.blocked[i] = pred(arc);
        }
    }

    fn max_flow(&mut self, s: NodeId, t: NodeId, limit: usize) -> usize {
        let mut value = 0;
        while value < limit && self.augment(s, t) {
            value += 1;
        }
        value
    }

    fn augment(&mut self, s: NodeId, t: NodeId) -> bool {
        #[derive(Clone, Copy)]
        enum Step {
            Forward(usize),
            Backward(usize),
        }
        let mut prev: Vec<Option<(NodeId, Step)>> = vec![None; self.nodes];
        let mut seen = vec![false; self.nodes];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        'bfs: while let Some(v) = queue.pop_front() {
            for &pos in &self.out[v] {
                let h = self.arcs[pos].head;
                if !self.used[pos] && !self.blocked[pos] && !seen[h] {
                    seen[h] = true;
                    prev[h] = Some((v, Step::Forward(pos)));
                    if h == t {
                        break 'bfs;
                    }
                    queue.push_back(h);
                }
            }
            for &pos in &self.inc[v] {
                let tail = self.arcs[pos].tail;
                if self.used[pos] && !self.blocked[pos] && !seen[tail] {
                    seen[tail] = true;
                    prev[tail] = Some((v, Step::Backward(pos)));
                    if tail == t {
                        break 'bfs;
                    }
                    queue.push_back(tail);
                }
            }
        }
        if !seen[t] {
            return false;
        }
        let mut v = t;
        while v != s {
            let (u, step) = prev[v].expect("path recorded");
            match step {
                Step::Forward(pos) => self.used[pos] = true,
                Step::Backward(pos) => self.used[pos] = false,
            }
            v = u;
        }
        true
    }

    /// Decomposes the current flow into edge-disjoint paths, each built by
    /// following the lowest-id unconsumed used arc. Paths whose first edge
    /// satisfies `first` are extracted before the rest; within each class
    /// the starts go in ascending edge id. On a DAG the flow is cycle-free,
    /// so every unit leaving `s` reaches `t`.
    fn used_paths(&self, s: NodeId, t: NodeId, first: impl Fn(EdgeId) -> bool) -> Vec<Vec<EdgeId>> {
        let mut starts: Vec<usize> = self.out[s]
            .iter()
            .copied()
            .filter(|&pos| self.used[pos])
            .collect();
        starts.sort_by_key(|&pos| (!first(self.arcs[pos].id), self.arcs[pos].id));
        let mut consumed = vec![false; self.arcs.len()];
        let mut paths = Vec::new();
        for start in starts {
            let mut path = Vec::new();
            let mut pos = start;
            loop {
                consumed[pos] = true;
                path.push(self.arcs[pos].id);
                let head = self.arcs[pos].head;
                if head == t {
                    break;
                }
                pos = *self.out[head]
                    .iter()
                    .find(|&&p| self.used[p] && !consumed[p])
                    .expect("flow conservation");
            }
            paths.push(path);
        }
        paths
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> String {
        std::fs::read_to_string(format!(
            "{}/../../fixtures/{}",
            env!("CARGO_MANIFEST_DIR"),
            name
        ))
        .unwrap()
    }

    fn diamond() -> Network {
        parse_network(&fixture("diamond.net")).unwrap()
    }

    fn fig1() -> Network {
        parse_network(&fixture("fig1.net")).unwrap()
    }

    #[test]
    fn parses_fig1() {
        let n = fig1();
        assert_eq!(n.edge_count(), 21);
        assert_eq!(n.sinks().len(), 2);
    }

    #[test]
    fn detects_cycle() {
        let text = format!("{}\nedge 99 t1 s\n", fixture("fig1.net"));
        let err = parse_network(&text).unwrap_err();
        assert_eq!(
            err,
            ParseError::Structure("the graph contains a cycle".into())
        );
    }

    #[test]
    fn rejects_missing_sink() {
        let text = "node s\nnode t\nedge 0 s t\nsource s\n";
        assert!(matches!(
            parse_network(text),
            Err(ParseError::Structure(_))
        ));
    }

    #[test]
    fn rejects_unknown_node_with_line() {
        let text = "node s\nedge 0 s mystery\n";
        assert_eq!(
            parse_network(text).unwrap_err(),
            ParseError::Line {
                line: 2,
                msg: "unknown node mystery".into()
            }
        );
    }

    #[test]
    fn rejects_duplicate_edge_id() {
        let text = "node s\nnode t\nedge 0 s t\nedge 0 s t\nsource s\nsink t\n";
        assert!(matches!(
            parse_network(text),
            Err(ParseError::Line { line: 4, .. })
        ));
    }

    #[test]
    fn rejects_unreachable_sink() {
        let text = "node s\nnode t\nnode u\nedge 0 s t\nsource s\nsink u\n";
        assert!(matches!(parse_network(text), Err(ParseError::Structure(_))));
    }

    #[test]
    fn topological_order_single_edge() {
        let n = parse_network("node s\nnode t\nedge 0 s t\nsource s\nsink t\n").unwrap();
        assert_eq!(n.topological_order(), vec![0, 1]);
    }

    #[test]
    fn topological_order_respects_edges() {
        for n in [diamond(), fig1()] {
            let order = n.topological_order();
            assert_eq!(order.len(), n.node_count());
            let pos: HashMap<NodeId, usize> =
                order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            for e in n.edges() {
                assert!(pos[&e.tail] < pos[&e.head]);
            }
        }
    }

    #[test]
    fn diamond_topo_endpoints() {
        let n = diamond();
        let order = n.topological_order();
        assert_eq!(order[0], n.source());
        assert_eq!(*order.last().unwrap(), n.sinks()[0]);
    }

    #[test]
    fn fig1_min_cuts_are_four() {
        let n = fig1();
        let s = n.source();
        for &t in n.sinks() {
            assert_eq!(n.min_cut(s, t), 4);
        }
    }

    #[test]
    fn diamond_min_cut() {
        let n = diamond();
        assert_eq!(n.min_cut(n.source(), n.sinks()[0]), 3);
    }

    #[test]
    fn min_cut_unreachable_is_zero() {
        let text = "node s\nnode t\nnode u\nedge 0 s t\nedge 1 s u\nsource s\nsink t\n";
        let n = parse_network(text).unwrap();
        let u = n.node_id("u").unwrap();
        let t = n.node_id("t").unwrap();
        assert_eq!(n.min_cut(u, t), 0);
    }

    #[test]
    fn disjoint_paths_diamond() {
        let n = diamond();
        let paths = n
            .edge_disjoint_paths(n.source(), n.sinks()[0], 3, &BTreeSet::new())
            .unwrap();
        assert_eq!(paths.len(), 3);
        let mut all: Vec<EdgeId> = paths.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn disjoint_paths_fig1_avoiding_forbidden() {
        // Forbid the edges of the path s -> 2 -> 6 -> 9 -> t2.
        let n = fig1();
        let forbidden = BTreeSet::from([1, 7, 13, 19]);
        let t2 = n.node_id("t2").unwrap();
        let paths = n
            .edge_disjoint_paths(n.source(), t2, 2, &forbidden)
            .unwrap();
        assert_eq!(paths.len(), 2);
        let used: BTreeSet<EdgeId> = paths.iter().flatten().copied().collect();
        assert_eq!(used.len(), paths.iter().map(Vec::len).sum::<usize>());
        assert!(used.is_disjoint(&forbidden));
    }

    #[test]
    fn disjoint_paths_over_capacity() {
        let n = diamond();
        let err = n
            .edge_disjoint_paths(n.source(), n.sinks()[0], 4, &BTreeSet::new())
            .unwrap_err();
        assert_eq!(
            err,
            GraphError::InsufficientCapacity {
                wanted: 4,
                found: 3
            }
        );
    }

    #[test]
    fn augment_fig1_example() {
        // F = {s->1, 1->5}: imaginary nodes split both edges.
        let n = fig1();
        let f = ErrorPattern::new([0, 5], &n).unwrap();
        let aug = augment(&n, &f, 2);
        assert_eq!(aug.source_edges().len(), 2);
        assert_eq!(aug.splits().len(), 2);
        assert_eq!(aug.edges().len(), 21 - 2 + 2 + 6);
        for split in aug.splits().values() {
            assert_eq!(aug.in_edges(split.mid).count(), 2);
            assert_eq!(aug.out_edges(split.mid).count(), 1);
        }
        // k + |F| edges leave s' in total.
        assert_eq!(aug.out_edges(aug.imaginary_source()).count(), 4);
    }

    #[test]
    fn augment_empty_pattern() {
        let n = diamond();
        let aug = augment(&n, &ErrorPattern::empty(), 2);
        assert_eq!(aug.splits().len(), 0);
        assert_eq!(aug.edges().len(), n.edge_count() + 2);
    }

    #[test]
    fn augment_single_edge_network() {
        let n = parse_network("node s\nnode t\nedge 0 s t\nsource s\nsink t\n").unwrap();
        let f = ErrorPattern::new([0], &n).unwrap();
        let aug = augment(&n, &f, 1);
        assert_eq!(aug.splits().len(), 1);
        assert_eq!(aug.source_edges().len(), 1);
        assert_eq!(aug.edges().len(), 4); // source edge + two halves + imaginary
    }

    #[test]
    fn augment_strip_round_trip() {
        let n = fig1();
        for pattern in [
            ErrorPattern::empty(),
            ErrorPattern::new([0, 5], &n).unwrap(),
            ErrorPattern::new([12, 20], &n).unwrap(),
        ] {
            let aug = augment(&n, &pattern, 2);
            assert_eq!(aug.strip(), n);
        }
    }

    #[test]
    fn flow_plan_fig1_example() {
        let n = fig1();
        let f = ErrorPattern::new([0, 5], &n).unwrap();
        let aug = augment(&n, &f, 2);
        let t1 = n.node_id("t1").unwrap();
        let t2 = n.node_id("t2").unwrap();
        let plan1 = build_flow_plan(&aug, t1).unwrap();
        let plan2 = build_flow_plan(&aug, t2).unwrap();
        assert_eq!(plan1.m(), 2);
        assert_eq!(plan2.m(), 1);
        assert_eq!(plan1.message_paths.len(), 2);
        assert_eq!(plan2.message_paths.len(), 2);
    }

    #[test]
    fn flow_plan_paths_are_disjoint_and_well_formed() {
        let n = fig1();
        let f = ErrorPattern::new([0, 5], &n).unwrap();
        let aug = augment(&n, &f, 2);
        for &t in n.sinks() {
            let plan = build_flow_plan(&aug, t).unwrap();
            let all: Vec<EdgeId> = plan.paths().flatten().copied().collect();
            let set: BTreeSet<EdgeId> = all.iter().copied().collect();
            assert_eq!(all.len(), set.len(), "no edge appears on two paths");
            for p in &plan.imaginary_paths {
                let count = p
                    .iter()
                    .filter(|&&e| aug.is_imaginary_edge(e))
                    .count();
                assert_eq!(count, 1, "exactly one imaginary edge per path");
            }
            for p in &plan.message_paths {
                assert!(aug.source_edges().contains(&p[0]));
            }
            // m equals an independent max-flow restricted to imaginary edges.
            assert!(plan.m() <= f.len());
        }
    }

    #[test]
    fn flow_plan_insufficient_capacity() {
        // Three-node bottleneck: no message path once the pattern uses v->t.
        let n = parse_network(&fixture("threenode.net")).unwrap();
        let f = ErrorPattern::new([0, 2], &n).unwrap();
        let aug = augment(&n, &f, 1);
        let t = n.node_id("t").unwrap();
        assert!(matches!(
            build_flow_plan(&aug, t),
            Err(GraphError::InsufficientCapacity { .. })
        ));
    }

    #[test]
    fn pattern_rejects_unknown_edge() {
        let n = diamond();
        assert_eq!(
            ErrorPattern::new([17], &n),
            Err(GraphError::UnknownEdge(17))
        );
    }
}
