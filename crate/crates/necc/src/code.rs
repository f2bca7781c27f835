//! Network-code construction: the greedy deterministic algorithm over all
//! error patterns, its refined per-sink variant, the fully randomized
//! variant, decodability verification, and the bound / field-size
//! calculators.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{is_independent, Elem, FieldError, FieldMatrix, FieldSpec, FieldVector};
use crate::graph::{
    augment, build_flow_plan, AugmentedNetwork, EdgeId, ErrorPattern, FlowPlan, GraphError,
    Network, NodeId,
};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("infeasible: k={k} plus 2*alpha (alpha={alpha}) exceeds the min-cut {n}")]
    Infeasible { k: usize, alpha: usize, n: usize },
    #[error("field of order {q} too small: coefficient candidates exhausted at edge {edge}")]
    FieldTooSmall { q: u64, edge: EdgeId },
    #[error("no flow plan for sink {sink} under pattern {pattern}: {source}")]
    PlanFailed {
        sink: NodeId,
        pattern: ErrorPattern,
        source: GraphError,
    },
    #[error("internal: basis lost independence at edge {edge}")]
    IndependenceLost { edge: EdgeId },
    #[error("bound undefined: n={n} is smaller than 2*alpha={alpha}")]
    BoundDomain { n: usize, alpha: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodeParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Structure(String),
}

/// A complete linear network code: one local coefficient map per real edge.
/// Edges leaving the source carry coefficients directly over the k message
/// coordinates; all other edges carry coefficients over the in-edges of
/// their tail. Absent coefficients are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkCode {
    field: FieldSpec,
    k: usize,
    network: Network,
    locals: BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>>,
    source_locals: BTreeMap<EdgeId, BTreeMap<usize, Elem>>,
}

impl NetworkCode {
    pub fn new(
        field: FieldSpec,
        k: usize,
        network: Network,
        locals: BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>>,
        source_locals: BTreeMap<EdgeId, BTreeMap<usize, Elem>>,
    ) -> Result<Self, CodeParseError> {
        let q = field.order();
        let mut clean_locals: BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>> = BTreeMap::new();
        for (edge, coeffs) in locals {
            let e = network
                .edge(edge)
                .ok_or_else(|| CodeParseError::Structure(format!("unknown edge {edge}")))?;
            if e.tail == network.source() {
                return Err(CodeParseError::Structure(format!(
                    "edge {edge} leaves the source; use message coefficients"
                )));
            }
            let in_ids: BTreeSet<EdgeId> = network.in_edges(e.tail).map(|p| p.id).collect();
            let mut clean = BTreeMap::new();
            for (pred, c) in coeffs {
                if !in_ids.contains(&pred) {
                    return Err(CodeParseError::Structure(format!(
                        "edge {pred} does not enter the tail of edge {edge}"
                    )));
                }
                if c >= q {
                    return Err(CodeParseError::Structure(format!(
                        "coefficient {c} out of range for field order {q}"
                    )));
                }
                if c != 0 {
                    clean.insert(pred, c);
                }
            }
            if !clean.is_empty() {
                clean_locals.insert(edge, clean);
            }
        }
        let mut clean_source: BTreeMap<EdgeId, BTreeMap<usize, Elem>> = BTreeMap::new();
        for (edge, coeffs) in source_locals {
            let e = network
                .edge(edge)
                .ok_or_else(|| CodeParseError::Structure(format!("unknown edge {edge}")))?;
            if e.tail != network.source() {
                return Err(CodeParseError::Structure(format!(
                    "edge {edge} does not leave the source"
                )));
            }
            let mut clean = BTreeMap::new();
            for (idx, c) in coeffs {
                if idx >= k {
                    return Err(CodeParseError::Structure(format!(
                        "message index {idx} out of range for k={k}"
                    )));
                }
                if c >= q {
                    return Err(CodeParseError::Structure(format!(
                        "coefficient {c} out of range for field order {q}"
                    )));
                }
                if c != 0 {
                    clean.insert(idx, c);
                }
            }
            if !clean.is_empty() {
                clean_source.insert(edge, clean);
            }
        }
        Ok(NetworkCode {
            field,
            k,
            network,
            locals: clean_locals,
            source_locals: clean_source,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn local_coeff(&self, edge: EdgeId, pred: EdgeId) -> Elem {
        self.locals
            .get(&edge)
            .and_then(|m| m.get(&pred))
            .copied()
            .unwrap_or(0)
    }

    pub fn source_coeff(&self, edge: EdgeId, idx: usize) -> Elem {
        self.source_locals
            .get(&edge)
            .and_then(|m| m.get(&idx))
            .copied()
            .unwrap_or(0)
    }

    /// Serializes to the line-oriented code format. Zero coefficients are
    /// omitted; the output round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!("netcode q={} k={}\n", self.field.order(), self.k);
        for e in self.network.edges() {
            if e.tail == self.network.source() {
                if let Some(coeffs) = self.source_locals.get(&e.id) {
                    let pairs: Vec<String> =
                        coeffs.iter().map(|(i, c)| format!("{i}:{c}")).collect();
                    out.push_str(&format!("source_local {} {}\n", e.id, pairs.join(" ")));
                }
            } else if let Some(coeffs) = self.locals.get(&e.id) {
                let pairs: Vec<String> = coeffs.iter().map(|(p, c)| format!("{p}:{c}")).collect();
                out.push_str(&format!("local {} {}\n", e.id, pairs.join(" ")));
            }
        }
        out
    }

    pub fn from_text(text: &str, network: &Network) -> Result<Self, CodeParseError> {
        let err = |line: usize, msg: String| CodeParseError::Line { line, msg };
        let mut header: Option<(u64, usize)> = None;
        let mut locals: BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>> = BTreeMap::new();
        let mut source_locals: BTreeMap<EdgeId, BTreeMap<usize, Elem>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let keyword = parts.next().unwrap();
            if header.is_none() {
                if keyword != "netcode" {
                    return Err(err(line, "expected header: netcode q=<q> k=<k>".into()));
                }
                let mut q = None;
                let mut k = None;
                for part in parts {
                    if let Some(v) = part.strip_prefix("q=") {
                        q = v.parse::<u64>().ok();
                    } else if let Some(v) = part.strip_prefix("k=") {
                        k = v.parse::<usize>().ok();
                    }
                }
                let (Some(q), Some(k)) = (q, k) else {
                    return Err(err(line, "expected header: netcode q=<q> k=<k>".into()));
                };
                header = Some((q, k));
                continue;
            }
            let parse_pairs = |line: usize| -> Result<(EdgeId, Vec<(usize, Elem)>), CodeParseError> {
                let mut parts = content.split_whitespace().skip(1);
                let edge: EdgeId = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line, "expected an edge id".into()))?;
                let mut pairs = Vec::new();
                for p in parts {
                    let Some((a, b)) = p.split_once(':') else {
                        return Err(err(line, format!("malformed pair {p:?}")));
                    };
                    let a = a
                        .parse::<usize>()
                        .map_err(|_| err(line, format!("malformed pair {p:?}")))?;
                    let b = b
                        .parse::<Elem>()
                        .map_err(|_| err(line, format!("malformed pair {p:?}")))?;
                    pairs.push((a, b));
                }
                Ok((edge, pairs))
            };
            match keyword {
                "local" => {
                    let (edge, pairs) = parse_pairs(line)?;
                    let entry = locals.entry(edge).or_default();
                    for (p, c) in pairs {
                        if entry.insert(p, c).is_some() {
                            return Err(err(line, format!("duplicate coefficient for edge {p}")));
                        }
                    }
                }
                "source_local" => {
                    let (edge, pairs) = parse_pairs(line)?;
                    let entry = source_locals.entry(edge).or_default();
                    for (i, c) in pairs {
                        if entry.insert(i, c).is_some() {
                            return Err(err(line, format!("duplicate coefficient for index {i}")));
                        }
                    }
                }
                other => return Err(err(line, format!("unknown directive {other:?}"))),
            }
        }
        let (q, k) = header.ok_or_else(|| CodeParseError::Structure("missing header".into()))?;
        let field = FieldSpec::new(q)
            .map_err(|e| CodeParseError::Structure(format!("bad field order: {e}")))?;
        NetworkCode::new(field, k, network.clone(), locals, source_locals)
    }
}

/// Global encoding vectors of every augmented edge under one error pattern:
/// k message coordinates followed by one error coordinate per pattern edge.
#[derive(Debug, Clone)]
pub struct GlobalTable {
    aug: AugmentedNetwork,
    vectors: BTreeMap<EdgeId, FieldVector>,
}

impl GlobalTable {
    pub fn pattern(&self) -> &ErrorPattern {
        self.aug.pattern()
    }

    pub fn augmented(&self) -> &AugmentedNetwork {
        &self.aug
    }

    pub fn dim(&self) -> usize {
        self.aug.dim()
    }

    pub fn vector(&self, aug_edge: EdgeId) -> Option<&FieldVector> {
        self.vectors.get(&aug_edge)
    }

    /// Vector of the symbol observed downstream of a base edge.
    pub fn observed(&self, base_edge: EdgeId) -> &FieldVector {
        &self.vectors[&self.aug.observed_edge(base_edge)]
    }
}

/// Computes the global encoding vectors of all augmented edges from the
/// code's local coefficients alone.
pub fn global_table(code: &NetworkCode, pattern: &ErrorPattern) -> GlobalTable {
    let aug = augment(&code.network, pattern, code.k);
    let field = code.field;
    let k = code.k;
    let dim = aug.dim();
    let mut vectors: BTreeMap<EdgeId, FieldVector> = BTreeMap::new();
    for (j, &se) in aug.source_edges().iter().enumerate() {
        vectors.insert(se, FieldVector::unit(dim, j));
    }
    for (j, (_, split)) in aug.splits().iter().enumerate() {
        vectors.insert(split.imaginary, FieldVector::unit(dim, k + j));
    }
    for v in code.network.topological_order() {
        let out_ids: Vec<EdgeId> = code.network.out_edges(v).map(|e| e.id).collect();
        for id in out_ids {
            let mut vec = FieldVector::zeros(dim);
            if v == code.network.source() {
                // The source encodes the message symbols; real in-edges of
                // the source, if any, are ignored.
                for j in 0..k {
                    let c = code.source_coeff(id, j);
                    if c != 0 {
                        vec.add_scaled_assign(&FieldVector::unit(dim, j), c, field);
                    }
                }
            } else {
                for pred in code.network.in_edges(v).map(|e| e.id).collect::<Vec<_>>() {
                    let c = code.local_coeff(id, pred);
                    if c != 0 {
                        let pv = vectors[&aug.observed_edge(pred)].clone();
                        vec.add_scaled_assign(&pv, c, field);
                    }
                }
            }
            if let Some(split) = aug.split(id) {
                let j = aug.error_index(id).expect("split edges are pattern edges");
                let mut out_vec = vec.clone();
                out_vec.set(k + j, field.add(out_vec.get(k + j), 1));
                vectors.insert(split.in_half, vec);
                vectors.insert(split.out_half, out_vec);
            } else {
                vectors.insert(id, vec);
            }
        }
    }
    GlobalTable { aug, vectors }
}

/// The sink's observation split into its message and error blocks: rows are
/// the base in-edges of the sink in ascending id.
pub fn observation_matrices(table: &GlobalTable, sink: NodeId) -> (FieldMatrix, FieldMatrix) {
    let aug = table.augmented();
    let base = aug.base();
    let k = aug.k();
    let f = aug.pattern().len();
    let in_ids: Vec<EdgeId> = base.in_edges(sink).map(|e| e.id).collect();
    let mut msg = FieldMatrix::zeros(in_ids.len(), k);
    let mut err = FieldMatrix::zeros(in_ids.len(), f);
    for (r, &id) in in_ids.iter().enumerate() {
        let v = table.observed(id);
        for c in 0..k {
            msg.set(r, c, v.get(c));
        }
        for c in 0..f {
            err.set(r, c, v.get(k + c));
        }
    }
    (msg, err)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Advances `idx` to the next k-combination of {0, .., n-1} in
/// lexicographic order; returns false when `idx` was the last one.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] != i + n - k {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Number of error patterns of the given size: C(|E|, size).
pub fn pattern_family_size(network: &Network, size: usize) -> u128 {
    binomial(network.edge_count(), size)
}

/// All subsets of the edge set with the given cardinality, in lexicographic
/// order of sorted edge-id tuples.
pub fn enumerate_patterns(network: &Network, size: usize) -> Vec<ErrorPattern> {
    let ids: Vec<EdgeId> = network.edges().iter().map(|e| e.id).collect();
    assert!(size <= ids.len(), "pattern size exceeds the edge count");
    let mut out = Vec::with_capacity(binomial(ids.len(), size) as usize);
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(
            ErrorPattern::new(idx.iter().map(|&i| ids[i]), network)
                .expect("ids come from the network"),
        );
        if !next_combination(&mut idx, ids.len()) {
            return out;
        }
    }
}

/// Singleton bound on the number of messages: q^(n - 2*alpha).
pub fn singleton_max_messages(n: usize, alpha: usize, q: u64) -> Result<BigUint, BuildError> {
    if n < 2 * alpha {
        return Err(BuildError::BoundDomain { n, alpha });
    }
    Ok(BigUint::from(q).pow((n - 2 * alpha) as u32))
}

/// Refined Singleton bound with per-sink min-cut and tolerance.
pub fn refined_singleton_max_messages(
    n_t: usize,
    alpha_t: usize,
    q: u64,
) -> Result<BigUint, BuildError> {
    singleton_max_messages(n_t, alpha_t, q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldSizeMode {
    Deterministic,
    Random { delta: f64 },
}

/// Smallest prime satisfying the relevant field-size condition:
/// strictly greater than |T| * C(|E|, 2*alpha) for the deterministic
/// construction, at least |E| * |T| * C(|E|, 2*alpha) / delta for the
/// randomized one.
pub fn required_field_order(network: &Network, alpha: usize, mode: FieldSizeMode) -> u64 {
    let patterns = binomial(network.edge_count(), 2 * alpha);
    let sinks = network.sinks().len() as u128;
    match mode {
        FieldSizeMode::Deterministic => {
            let threshold = sinks * patterns;
            crate::field::next_prime_at_least(threshold as u64 + 1)
        }
        FieldSizeMode::Random { delta } => {
            assert!(delta > 0.0 && delta <= 1.0, "delta must be in (0, 1]");
            let product = (network.edge_count() as u128 * sinks * patterns) as f64;
            let threshold = (product / delta).ceil() as u64;
            crate::field::next_prime_at_least(threshold)
        }
    }
}

/// Field-size threshold for the refined construction: |T| * |F| where F is
/// the union of the per-sink pattern families.
pub fn refined_required_field_order(network: &Network, k: usize) -> u64 {
    let sizes: BTreeSet<usize> = network
        .sinks()
        .iter()
        .map(|&t| network.min_cut(network.source(), t).saturating_sub(k))
        .collect();
    let family: u128 = sizes
        .iter()
        .map(|&s| binomial(network.edge_count(), s))
        .sum();
    let threshold = network.sinks().len() as u128 * family;
    crate::field::next_prime_at_least(threshold as u64 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Deterministic,
    Refined,
    Random,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Deterministic => "deterministic",
            Mode::Refined => "refined",
            Mode::Random => "random",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct ConstructionReport {
    pub mode: Mode,
    pub field_order: u64,
    pub k: usize,
    pub alpha: Option<usize>,
    pub per_sink_alpha: BTreeMap<NodeId, usize>,
    pub alpha_max: Option<usize>,
    pub pattern_count: usize,
    /// m_t^F per retained (sink, pattern), pattern-major.
    pub m_table: Vec<(NodeId, ErrorPattern, usize)>,
    pub excluded: Vec<(NodeId, ErrorPattern)>,
    pub success: bool,
    pub verification: Option<VerificationReport>,
}

impl ConstructionReport {
    pub fn m_for(&self, sink: NodeId, pattern: &ErrorPattern) -> Option<usize> {
        self.m_table
            .iter()
            .find(|(s, p, _)| *s == sink && p == pattern)
            .map(|&(_, _, m)| m)
    }
}

/// Per (sink, pattern) decodability audit.
#[derive(Debug, Clone)]
pub struct PairAudit {
    pub sink: NodeId,
    pub pattern: ErrorPattern,
    pub m: usize,
    pub basis_independent: bool,
    pub dim_msg: usize,
    pub dim_err: usize,
    pub dim_sum: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub audits: Vec<PairAudit>,
    /// (sink, pattern) pairs with no flow plan; failures except in per-sink
    /// mode, where they are exclusions.
    pub plan_failures: Vec<(NodeId, ErrorPattern)>,
    pub excluded: Vec<(NodeId, ErrorPattern)>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &PairAudit> {
        self.audits.iter().filter(|a| !a.pass)
    }
}

#[derive(Debug, Clone)]
pub enum ToleranceSpec {
    /// Every sink must handle every pattern of size 2*alpha.
    Alpha(usize),
    /// Per-sink tolerance; patterns a sink has no flow plan for are
    /// excluded rather than failed.
    PerSink(BTreeMap<NodeId, usize>),
    /// Failure tolerance with known locations: edges of each pattern emit
    /// zero and every sink must still recover the message.
    KnownLocations(Vec<ErrorPattern>),
}

/// Recomputes every retained basis and the observation-space dimensions
/// from the code's local coefficients and checks the decodability
/// identities: dim V2 = k, dim V3 = m, dim(V2+V3) = k + m.
pub fn verify_code(code: &NetworkCode, spec: &ToleranceSpec) -> VerificationReport {
    let network = &code.network;
    let mut audits = Vec::new();
    let mut plan_failures = Vec::new();
    let mut excluded = Vec::new();
    match spec {
        ToleranceSpec::Alpha(alpha) => {
            let size = (2 * alpha).min(network.edge_count());
            for pattern in enumerate_patterns(network, size) {
                let table = global_table(code, &pattern);
                for &sink in network.sinks() {
                    match build_flow_plan(table.augmented(), sink) {
                        Ok(plan) => audits.push(audit_pair(code, &table, &plan)),
                        Err(_) => plan_failures.push((sink, pattern.clone())),
                    }
                }
            }
        }
        ToleranceSpec::PerSink(alphas) => {
            for (&sink, &alpha) in alphas {
                let size = (2 * alpha).min(network.edge_count());
                for pattern in enumerate_patterns(network, size) {
                    let table = global_table(code, &pattern);
                    match build_flow_plan(table.augmented(), sink) {
                        Ok(plan) => audits.push(audit_pair(code, &table, &plan)),
                        Err(_) => excluded.push((sink, pattern.clone())),
                    }
                }
            }
        }
        ToleranceSpec::KnownLocations(patterns) => {
            for pattern in patterns {
                let vectors = zeroed_global_vectors(code, pattern);
                for &sink in network.sinks() {
                    let rows: Vec<FieldVector> = network
                        .in_edges(sink)
                        .map(|e| vectors[&e.id].clone())
                        .collect();
                    let rank = FieldMatrix::from_rows(&rows)
                        .expect("uniform length")
                        .rank(code.field);
                    audits.push(PairAudit {
                        sink,
                        pattern: pattern.clone(),
                        m: 0,
                        basis_independent: true,
                        dim_msg: rank,
                        dim_err: 0,
                        dim_sum: rank,
                        pass: rank == code.k,
                    });
                }
            }
        }
    }
    let plan_failures_fail = !matches!(spec, ToleranceSpec::PerSink(_));
    let passed = audits.iter().all(|a| a.pass)
        && (plan_failures.is_empty() || !plan_failures_fail);
    if plan_failures_fail {
        // nothing: plan failures stay failures
    }
    VerificationReport {
        audits,
        plan_failures,
        excluded,
        passed,
    }
}

fn audit_pair(code: &NetworkCode, table: &GlobalTable, plan: &FlowPlan) -> PairAudit {
    let k = code.k;
    let m = plan.m();
    let basis: Vec<FieldVector> = plan
        .terminal_edges()
        .iter()
        .map(|&e| table.vector(e).expect("vector computed").clone())
        .collect();
    let basis_independent = is_independent(&basis, code.field).expect("uniform length");
    let (msg, err) = observation_matrices(table, plan.sink);
    let dim_msg = msg.rank(code.field);
    let dim_err = err.rank(code.field);
    let dim_sum = msg.hstack(&err).rank(code.field);
    PairAudit {
        sink: plan.sink,
        pattern: plan.pattern.clone(),
        m,
        basis_independent,
        dim_msg,
        dim_err,
        dim_sum,
        pass: basis_independent && dim_msg == k && dim_err == m && dim_sum == k + m,
    }
}

/// Length-k global vectors of every base edge when the edges of `failed`
/// emit zero (the robust-network-coding failure semantics).
pub fn zeroed_global_vectors(
    code: &NetworkCode,
    failed: &ErrorPattern,
) -> BTreeMap<EdgeId, FieldVector> {
    let network = &code.network;
    let field = code.field;
    let k = code.k;
    let mut vectors: BTreeMap<EdgeId, FieldVector> = BTreeMap::new();
    for v in network.topological_order() {
        let out_ids: Vec<EdgeId> = network.out_edges(v).map(|e| e.id).collect();
        for id in out_ids {
            let mut vec = FieldVector::zeros(k);
            if !failed.contains(id) {
                if v == network.source() {
                    for j in 0..k {
                        let c = code.source_coeff(id, j);
                        if c != 0 {
                            vec.set(j, c);
                        }
                    }
                } else {
                    for pred in network.in_edges(v).map(|e| e.id).collect::<Vec<_>>() {
                        let c = code.local_coeff(id, pred);
                        if c != 0 {
                            let pv = vectors[&pred].clone();
                            vec.add_scaled_assign(&pv, c, field);
                        }
                    }
                }
            }
            vectors.insert(id, vec);
        }
    }
    vectors
}

// ---------------------------------------------------------------------------
// Greedy construction core
// ---------------------------------------------------------------------------

/// Coefficient slot of an edge: a message coordinate for edges leaving the
/// source, an in-edge of the tail otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum InKey {
    Msg(usize),
    Edge(EdgeId),
}

struct Tracker {
    sink: NodeId,
    plan: FlowPlan,
    frontier: Vec<EdgeId>,
    basis: Vec<FieldVector>,
    slot_of: HashMap<EdgeId, usize>,
}

struct PatternCtx {
    aug: AugmentedNetwork,
    table: BTreeMap<EdgeId, FieldVector>,
    trackers: Vec<Tracker>,
}

impl PatternCtx {
    fn new(aug: AugmentedNetwork, plans: Vec<FlowPlan>, k: usize) -> Self {
        let dim = aug.dim();
        let mut table: BTreeMap<EdgeId, FieldVector> = BTreeMap::new();
        for (j, &se) in aug.source_edges().iter().enumerate() {
            table.insert(se, FieldVector::unit(dim, j));
        }
        for (j, (_, split)) in aug.splits().iter().enumerate() {
            table.insert(split.imaginary, FieldVector::unit(dim, k + j));
        }
        let trackers = plans
            .into_iter()
            .map(|plan| {
                let frontier = plan.initial_edges();
                let basis: Vec<FieldVector> =
                    frontier.iter().map(|e| table[e].clone()).collect();
                let slot_of = frontier
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| (e, i))
                    .collect();
                Tracker {
                    sink: plan.sink,
                    plan,
                    frontier,
                    basis,
                    slot_of,
                }
            })
            .collect();
        PatternCtx {
            aug,
            table,
            trackers,
        }
    }

    /// Vector carried into a node by one coefficient slot under this
    /// pattern.
    fn key_vector(&self, key: InKey) -> &FieldVector {
        match key {
            InKey::Msg(j) => &self.table[&self.aug.source_edges()[j]],
            InKey::Edge(id) => &self.table[&self.aug.observed_edge(id)],
        }
    }
}

/// Steps through the real edges in topological order and fixes one local
/// coefficient map per edge so every tracked basis stays independent.
/// Candidates are scanned in lexicographic coefficient order; each tracker
/// contributes one linear functional whose nonvanishing certifies that the
/// tracker's basis survives the update.
fn run_greedy(
    network: &Network,
    k: usize,
    field: FieldSpec,
    ctxs: &mut [PatternCtx],
) -> Result<
    (
        BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>>,
        BTreeMap<EdgeId, BTreeMap<usize, Elem>>,
    ),
    BuildError,
> {
    let q = field.order();
    let mut locals: BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>> = BTreeMap::new();
    let mut source_locals: BTreeMap<EdgeId, BTreeMap<usize, Elem>> = BTreeMap::new();
    let source = network.source();

    for v in network.topological_order() {
        let in_keys: Vec<InKey> = if v == source {
            (0..k).map(InKey::Msg).collect()
        } else {
            network.in_edges(v).map(|e| InKey::Edge(e.id)).collect()
        };
        let out_ids: Vec<EdgeId> = network.out_edges(v).map(|e| e.id).collect();
        for edge in out_ids {
            // Collect the trackers whose plan runs through this edge's
            // choice point, with the plan predecessor of each.
            let mut constraining: Vec<(usize, usize, EdgeId)> = Vec::new();
            let mut support_keys: BTreeSet<InKey> = BTreeSet::new();
            for (ci, ctx) in ctxs.iter().enumerate() {
                let choice = ctx.aug.choice_edge(edge);
                for (ti, tracker) in ctx.trackers.iter().enumerate() {
                    if let Some(pred) = tracker.plan.predecessor(choice) {
                        constraining.push((ci, ti, pred));
                        support_keys.insert(pred_key(ctx, pred));
                    }
                }
            }
            let support: Vec<InKey> = in_keys
                .iter()
                .copied()
                .filter(|key| support_keys.contains(key))
                .collect();

            // One functional per constraining tracker, over the support.
            let mut functionals: Vec<Vec<Elem>> = Vec::with_capacity(constraining.len());
            for &(ci, ti, pred) in &constraining {
                let ctx = &ctxs[ci];
                let tracker = &ctx.trackers[ti];
                let slot = tracker.slot_of[&pred];
                let others: Vec<FieldVector> = tracker
                    .basis
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != slot)
                    .map(|(_, b)| b.clone())
                    .collect();
                let annihilated = if others.is_empty() {
                    FieldMatrix::zeros(1, ctx.aug.dim())
                } else {
                    FieldMatrix::from_rows(&others)?
                };
                let u = annihilated
                    .null_space(field)
                    .into_iter()
                    .find(|u| u.dot(&tracker.basis[slot], field) != 0)
                    .expect("basis vector is independent of the rest");
                let functional: Vec<Elem> = support
                    .iter()
                    .map(|&key| ctx.key_vector(key).dot(&u, field))
                    .collect();
                functionals.push(functional);
            }

            // Lexicographic candidate scan.
            let mut coeffs = vec![0 as Elem; support.len()];
            if !functionals.is_empty() {
                loop {
                    let good = functionals.iter().all(|f| {
                        let mut acc = 0;
                        for (c, &fc) in coeffs.iter().zip(f) {
                            acc = field.add(acc, field.mul(*c, fc));
                        }
                        acc != 0
                    });
                    if good {
                        break;
                    }
                    let mut i = support.len();
                    loop {
                        if i == 0 {
                            return Err(BuildError::FieldTooSmall { q, edge });
                        }
                        i -= 1;
                        coeffs[i] += 1;
                        if coeffs[i] < q {
                            break;
                        }
                        coeffs[i] = 0;
                    }
                }
            }

            for (i, &key) in support.iter().enumerate() {
                if coeffs[i] == 0 {
                    continue;
                }
                match key {
                    InKey::Msg(j) => {
                        source_locals.entry(edge).or_default().insert(j, coeffs[i]);
                    }
                    InKey::Edge(p) => {
                        locals.entry(edge).or_default().insert(p, coeffs[i]);
                    }
                }
            }

            // Propagate the chosen combination into every pattern's table
            // and advance the affected frontiers.
            for ctx in ctxs.iter_mut() {
                let dim = ctx.aug.dim();
                let mut vec = FieldVector::zeros(dim);
                for (i, &key) in support.iter().enumerate() {
                    if coeffs[i] != 0 {
                        let kv = ctx.key_vector(key).clone();
                        vec.add_scaled_assign(&kv, coeffs[i], field);
                    }
                }
                let aug_ids: Vec<EdgeId> = if let Some(split) = ctx.aug.split(edge) {
                    let j = ctx
                        .aug
                        .error_index(edge)
                        .expect("split edges are pattern edges");
                    let mut out_vec = vec.clone();
                    out_vec.set(k + j, field.add(out_vec.get(k + j), 1));
                    ctx.table.insert(split.in_half, vec);
                    ctx.table.insert(split.out_half, out_vec);
                    vec![split.in_half, split.out_half]
                } else {
                    ctx.table.insert(edge, vec);
                    vec![edge]
                };
                for tracker in &mut ctx.trackers {
                    for &aug_id in &aug_ids {
                        let Some(pred) = tracker.plan.predecessor(aug_id) else {
                            continue;
                        };
                        let slot = tracker
                            .slot_of
                            .remove(&pred)
                            .expect("frontier holds the plan predecessor");
                        tracker.frontier[slot] = aug_id;
                        tracker.basis[slot] = ctx.table[&aug_id].clone();
                        tracker.slot_of.insert(aug_id, slot);
                        if !is_independent(&tracker.basis, field)? {
                            return Err(BuildError::IndependenceLost { edge });
                        }
                    }
                }
            }
        }
    }
    Ok((locals, source_locals))
}

fn pred_key(ctx: &PatternCtx, pred: EdgeId) -> InKey {
    if let Some(j) = ctx.aug.source_edges().iter().position(|&e| e == pred) {
        return InKey::Msg(j);
    }
    for (&orig, split) in ctx.aug.splits() {
        if split.out_half == pred {
            return InKey::Edge(orig);
        }
    }
    InKey::Edge(pred)
}

fn finish_report(
    mode: Mode,
    field: FieldSpec,
    k: usize,
    alpha: Option<usize>,
    pattern_count: usize,
    ctxs: &[PatternCtx],
    excluded: Vec<(NodeId, ErrorPattern)>,
) -> (bool, ConstructionReport) {
    let mut m_table = Vec::new();
    let mut success = true;
    for ctx in ctxs {
        for tracker in &ctx.trackers {
            m_table.push((
                tracker.sink,
                ctx.aug.pattern().clone(),
                tracker.plan.m(),
            ));
            if !is_independent(&tracker.basis, field).expect("uniform length") {
                success = false;
            }
        }
    }
    let report = ConstructionReport {
        mode,
        field_order: field.order(),
        k,
        alpha,
        per_sink_alpha: BTreeMap::new(),
        alpha_max: None,
        pattern_count,
        m_table,
        excluded,
        success,
        verification: None,
    };
    (success, report)
}

/// The deterministic construction: one shared coefficient map chosen so the
/// bases of every (sink, pattern) pair with |pattern| = 2*alpha stay
/// linearly independent.
pub fn construct_deterministic(
    network: &Network,
    k: usize,
    alpha: usize,
    field: FieldSpec,
) -> Result<(NetworkCode, ConstructionReport), BuildError> {
    let n = network.min_min_cut();
    if k + 2 * alpha > n {
        return Err(BuildError::Infeasible { k, alpha, n });
    }
    let patterns = enumerate_patterns(network, 2 * alpha);
    let pattern_count = patterns.len();
    let mut ctxs = Vec::with_capacity(pattern_count);
    for pattern in patterns {
        let aug = augment(network, &pattern, k);
        let mut plans = Vec::new();
        for &sink in network.sinks() {
            let plan = build_flow_plan(&aug, sink).map_err(|source| BuildError::PlanFailed {
                sink,
                pattern: pattern.clone(),
                source,
            })?;
            plans.push(plan);
        }
        ctxs.push(PatternCtx::new(aug, plans, k));
    }
    let (locals, source_locals) = run_greedy(network, k, field, &mut ctxs)?;
    let code = NetworkCode::new(field, k, network.clone(), locals, source_locals)
        .expect("constructed coefficients are valid");
    let (_, mut report) = finish_report(
        Mode::Deterministic,
        field,
        k,
        Some(alpha),
        pattern_count,
        &ctxs,
        Vec::new(),
    );
    report.alpha_max = Some(alpha);
    Ok((code, report))
}

/// The refined construction: per-sink pattern families of size n_t - k;
/// (sink, pattern) pairs with no k disjoint message paths are excluded and
/// reported.
pub fn construct_refined(
    network: &Network,
    k: usize,
    field: FieldSpec,
) -> Result<(NetworkCode, ConstructionReport), BuildError> {
    let source = network.source();
    let cuts: BTreeMap<NodeId, usize> = network
        .sinks()
        .iter()
        .map(|&t| (t, network.min_cut(source, t)))
        .collect();
    let n_min = *cuts.values().min().expect("at least one sink");
    if k > n_min {
        return Err(BuildError::Infeasible {
            k,
            alpha: 0,
            n: n_min,
        });
    }
    let sizes: BTreeSet<usize> = cuts.values().map(|&n_t| n_t - k).collect();
    let mut patterns = Vec::new();
    for &size in &sizes {
        patterns.extend(enumerate_patterns(network, size));
    }
    let pattern_count = patterns.len();
    let mut excluded = Vec::new();
    let mut ctxs = Vec::with_capacity(pattern_count);
    for pattern in patterns {
        let aug = augment(network, &pattern, k);
        let mut plans = Vec::new();
        for &sink in network.sinks() {
            match build_flow_plan(&aug, sink) {
                Ok(plan) => plans.push(plan),
                Err(GraphError::InsufficientCapacity { .. }) => {
                    excluded.push((sink, pattern.clone()));
                }
                Err(source) => {
                    return Err(BuildError::PlanFailed {
                        sink,
                        pattern: pattern.clone(),
                        source,
                    })
                }
            }
        }
        ctxs.push(PatternCtx::new(aug, plans, k));
    }
    let (locals, source_locals) = run_greedy(network, k, field, &mut ctxs)?;
    let code = NetworkCode::new(field, k, network.clone(), locals, source_locals)
        .expect("constructed coefficients are valid");
    let (_, mut report) = finish_report(
        Mode::Refined,
        field,
        k,
        None,
        pattern_count,
        &ctxs,
        excluded,
    );
    report.per_sink_alpha = cuts.iter().map(|(&t, &n_t)| (t, (n_t - k) / 2)).collect();
    let n_max = *cuts.values().max().expect("at least one sink");
    report.alpha_max = Some((n_max - k) / 2);
    Ok((code, report))
}

/// The fully randomized construction: every local coefficient drawn
/// independently and uniformly with a seeded generator, then audited by
/// `verify_code`. Failure is a verdict in the report, not an error.
pub fn construct_random(
    network: &Network,
    k: usize,
    alpha: usize,
    field: FieldSpec,
    seed: u64,
) -> Result<(NetworkCode, ConstructionReport), BuildError> {
    let n = network.min_min_cut();
    if k + 2 * alpha > n {
        return Err(BuildError::Infeasible { k, alpha, n });
    }
    let q = field.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locals: BTreeMap<EdgeId, BTreeMap<EdgeId, Elem>> = BTreeMap::new();
    let mut source_locals: BTreeMap<EdgeId, BTreeMap<usize, Elem>> = BTreeMap::new();
    for e in network.edges() {
        if e.tail == network.source() {
            let coeffs: BTreeMap<usize, Elem> =
                (0..k).map(|j| (j, rng.gen_range(0..q))).collect();
            source_locals.insert(e.id, coeffs);
        } else {
            let preds: Vec<EdgeId> = network.in_edges(e.tail).map(|p| p.id).collect();
            let coeffs: BTreeMap<EdgeId, Elem> = preds
                .into_iter()
                .map(|p| (p, rng.gen_range(0..q)))
                .collect();
            locals.insert(e.id, coeffs);
        }
    }
    let code = NetworkCode::new(field, k, network.clone(), locals, source_locals)
        .expect("random coefficients are valid");
    let verification = verify_code(&code, &ToleranceSpec::Alpha(alpha));
    let m_table = verification
        .audits
        .iter()
        .map(|a| (a.sink, a.pattern.clone(), a.m))
        .collect();
    let success = verification.passed;
    let report = ConstructionReport {
        mode: Mode::Random,
        field_order: q,
        k,
        alpha: Some(alpha),
        per_sink_alpha: BTreeMap::new(),
        alpha_max: Some(alpha),
        pattern_count: binomial(network.edge_count(), 2 * alpha) as usize,
        m_table,
        excluded: Vec::new(),
        success,
        verification: Some(verification),
    };
    Ok((code, report))
}
