//! Transmission simulation with injected edge errors and the three
//! decoders: exhaustive search over (message, error) pairs, known-location
//! erasure decoding by subspace decomposition, and a pattern-search decoder
//! equivalent to the exhaustive one.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::code::{enumerate_patterns, global_table, observation_matrices, NetworkCode};
use crate::field::{solve, Elem, FieldMatrix, FieldVector, SolveOutcome};
use crate::graph::{EdgeId, ErrorPattern, Network, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("code defect at sink {sink}: message and error spaces overlap")]
    CodeDefect { sink: NodeId },
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
}

/// An error vector over F_q^|E|, indexed by the edge total order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorVector {
    entries: FieldVector,
}

impl ErrorVector {
    pub fn zero(network: &Network) -> Self {
        ErrorVector {
            entries: FieldVector::zeros(network.edge_count()),
        }
    }

    pub fn from_pairs(
        network: &Network,
        pairs: impl IntoIterator<Item = (EdgeId, Elem)>,
    ) -> Result<Self, DecodeError> {
        let mut entries = FieldVector::zeros(network.edge_count());
        for (edge, value) in pairs {
            let pos = network
                .edge_position(edge)
                .ok_or(DecodeError::UnknownEdge(edge))?;
            entries.set(pos, value);
        }
        Ok(ErrorVector { entries })
    }

    pub fn entries(&self) -> &FieldVector {
        &self.entries
    }

    pub fn get(&self, network: &Network, edge: EdgeId) -> Elem {
        network
            .edge_position(edge)
            .map(|pos| self.entries.get(pos))
            .unwrap_or(0)
    }

    /// Edge ids of the nonzero entries.
    pub fn support(&self, network: &Network) -> BTreeSet<EdgeId> {
        network
            .edges()
            .iter()
            .enumerate()
            .filter(|&(pos, _)| self.entries.get(pos) != 0)
            .map(|(_, e)| e.id)
            .collect()
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        (0..self.entries.len())
            .filter(|&pos| self.entries.get(pos) != 0)
            .count()
    }
}

/// The symbols a sink receives on its in-edges, in ascending edge id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub sink: NodeId,
    pub symbols: FieldVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Decoded(FieldVector),
    Ambiguous,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub verdict: Verdict,
    pub candidates_examined: usize,
}

/// Simulates one transmission: symbols propagate in topological order and
/// the injected error of each edge is added to the symbol it carries, so
/// downstream nodes keep computing as if there were no error.
pub fn transmit(
    code: &NetworkCode,
    message: &FieldVector,
    err: &ErrorVector,
) -> BTreeMap<NodeId, Observation> {
    let network = code.network();
    let field = code.field();
    assert_eq!(message.len(), code.k(), "message length must equal k");
    assert_eq!(
        err.entries.len(),
        network.edge_count(),
        "error vector length must equal the edge count"
    );
    let mut carried = vec![0 as Elem; network.edge_count()];
    for v in network.topological_order() {
        let out_ids: Vec<EdgeId> = network.out_edges(v).map(|e| e.id).collect();
        for id in out_ids {
            let mut y = 0;
            if v == network.source() {
                for j in 0..code.k() {
                    y = field.add(y, field.mul(code.source_coeff(id, j), message.get(j)));
                }
            } else {
                for pred in network.in_edges(v).map(|e| e.id).collect::<Vec<_>>() {
                    let p = network.edge_position(pred).expect("known edge");
                    y = field.add(y, field.mul(code.local_coeff(id, pred), carried[p]));
                }
            }
            let pos = network.edge_position(id).expect("known edge");
            carried[pos] = field.add(y, err.entries.get(pos));
        }
    }
    let mut out = BTreeMap::new();
    for &sink in network.sinks() {
        let symbols: Vec<Elem> = network
            .in_edges(sink)
            .map(|e| carried[network.edge_position(e.id).expect("known edge")])
            .collect();
        out.insert(
            sink,
            Observation {
                sink,
                symbols: FieldVector::new(symbols),
            },
        );
    }
    out
}

/// The sink's observation as a linear map: columns of `msg` are the clean
/// observations of the unit messages, columns of `err` the observations of
/// a unit error on each edge.
fn impulse_response(code: &NetworkCode, sink: NodeId) -> (FieldMatrix, FieldMatrix) {
    let network = code.network();
    let in_deg = network.in_edges(sink).count();
    let k = code.k();
    let e_count = network.edge_count();
    let mut msg = FieldMatrix::zeros(in_deg, k);
    for j in 0..k {
        let obs = transmit(code, &FieldVector::unit(k, j), &ErrorVector::zero(network));
        for r in 0..in_deg {
            msg.set(r, j, obs[&sink].symbols.get(r));
        }
    }
    let mut err = FieldMatrix::zeros(in_deg, e_count);
    for pos in 0..e_count {
        let id = network.edges()[pos].id;
        let ev = ErrorVector::from_pairs(network, [(id, 1)]).expect("known edge");
        let obs = transmit(code, &FieldVector::zeros(k), &ev);
        for r in 0..in_deg {
            err.set(r, pos, obs[&sink].symbols.get(r));
        }
    }
    (msg, err)
}

fn all_messages(k: usize, q: u64) -> Vec<FieldVector> {
    let mut out = Vec::new();
    let mut cur = vec![0 as Elem; k];
    loop {
        out.push(FieldVector::new(cur.clone()));
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < q {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// All error vectors of weight at most `alpha`, ordered by weight, then
/// support (lexicographic), then values (lexicographic).
fn all_errors(network: &Network, q: u64, alpha: usize) -> Vec<ErrorVector> {
    let e_count = network.edge_count();
    let mut out = vec![ErrorVector::zero(network)];
    for weight in 1..=alpha.min(e_count) {
        let mut support: Vec<usize> = (0..weight).collect();
        loop {
            let mut values = vec![1 as Elem; weight];
            loop {
                let mut ev = ErrorVector::zero(network);
                for (i, &pos) in support.iter().enumerate() {
                    ev.entries.set(pos, values[i]);
                }
                out.push(ev);
                let mut i = weight;
                let mut wrapped = true;
                while i > 0 {
                    i -= 1;
                    values[i] += 1;
                    if values[i] < q {
                        wrapped = false;
                        break;
                    }
                    values[i] = 1;
                }
                if wrapped {
                    break;
                }
            }
            if !crate::code::next_combination(&mut support, e_count) {
                break;
            }
        }
    }
    out
}

/// Exhaustive decoding: every (message, error of weight <=
/// alpha) pair is checked against the observation; the verdict reports the
/// unanimous message, a disagreement, or the absence of any match.
pub fn decode_exhaustive(
    code: &NetworkCode,
    sink: NodeId,
    obs: &Observation,
    alpha: usize,
) -> DecodeResult {
    assert_eq!(obs.sink, sink, "observation belongs to a different sink");
    let field = code.field();
    let (msg_map, err_map) = impulse_response(code, sink);
    let messages = all_messages(code.k(), field.order());
    let message_images: Vec<FieldVector> =
        messages.iter().map(|m| msg_map.mul_vec(m, field)).collect();
    let mut examined = 0;
    let mut matches: BTreeSet<Vec<Elem>> = BTreeSet::new();
    for err in all_errors(code.network(), field.order(), alpha) {
        let err_image = err_map.mul_vec(err.entries(), field);
        let residual = obs.symbols.sub(&err_image, field);
        for (m, image) in messages.iter().zip(&message_images) {
            examined += 1;
            if image == &residual {
                matches.insert((0..m.len()).map(|i| m.get(i)).collect());
            }
        }
    }
    finish(matches, examined)
}

fn finish(matches: BTreeSet<Vec<Elem>>, examined: usize) -> DecodeResult {
    let verdict = match matches.len() {
        0 => Verdict::NoCandidate,
        1 => Verdict::Decoded(FieldVector::new(
            matches.into_iter().next().expect("one match"),
        )),
        _ => Verdict::Ambiguous,
    };
    DecodeResult {
        verdict,
        candidates_examined: examined,
    }
}

/// Known-location (erasure) decoding: writes the observation as u + v with
/// u in the message image and v in the image of errors supported on `f`,
/// then recovers the message from u with one linear solve.
pub fn decode_erasure(
    code: &NetworkCode,
    sink: NodeId,
    obs: &Observation,
    f: &ErrorPattern,
) -> Result<DecodeResult, DecodeError> {
    assert_eq!(obs.sink, sink, "observation belongs to a different sink");
    let field = code.field();
    let k = code.k();
    let table = global_table(code, f);
    let (msg, err) = observation_matrices(&table, sink);
    let rank_msg = msg.rank(field);
    let rank_err = err.rank(field);
    let stacked = msg.hstack(&err);
    if rank_msg != k || stacked.rank(field) != rank_msg + rank_err {
        return Err(DecodeError::CodeDefect { sink });
    }
    let no_candidate = DecodeResult {
        verdict: Verdict::NoCandidate,
        candidates_examined: 1,
    };
    let solution = match solve(&stacked, &obs.symbols, field) {
        SolveOutcome::Inconsistent => return Ok(no_candidate),
        outcome => outcome.particular().expect("consistent system").clone(),
    };
    let message = FieldVector::new((0..k).map(|i| solution.get(i)).collect());
    let error = ErrorVector::from_pairs(
        code.network(),
        f.iter().enumerate().map(|(j, e)| (e, solution.get(k + j))),
    )?;
    // Re-encode rather than trust subspace membership alone.
    if transmit(code, &message, &error)[&sink] != *obs {
        return Ok(no_candidate);
    }
    Ok(DecodeResult {
        verdict: Verdict::Decoded(message),
        candidates_examined: 1,
    })
}

/// Decoding by erasure attempts over all patterns of size 2*alpha: each
/// consistent (message, error) pair with error weight <= alpha and support
/// inside the pattern is validated by re-encoding. Verdicts agree with
/// `decode_exhaustive` on every input.
pub fn decode_pattern_search(
    code: &NetworkCode,
    sink: NodeId,
    obs: &Observation,
    alpha: usize,
) -> DecodeResult {
    assert_eq!(obs.sink, sink, "observation belongs to a different sink");
    let network = code.network();
    let field = code.field();
    let q = field.order();
    let k = code.k();
    let size = (2 * alpha).min(network.edge_count());
    let mut matches: BTreeSet<Vec<Elem>> = BTreeSet::new();
    let mut examined = 0;
    for f in enumerate_patterns(network, size) {
        let table = global_table(code, &f);
        let (msg, err) = observation_matrices(&table, sink);
        let stacked = msg.hstack(&err);
        let particular = match solve(&stacked, &obs.symbols, field) {
            SolveOutcome::Inconsistent => continue,
            outcome => outcome.particular().expect("consistent system").clone(),
        };
        let null_basis = stacked.null_space(field);
        // Walk the whole affine solution set; its dimension is small.
        let mut lambda = vec![0 as Elem; null_basis.len()];
        loop {
            let mut x = particular.clone();
            for (i, basis) in null_basis.iter().enumerate() {
                if lambda[i] != 0 {
                    x.add_scaled_assign(basis, lambda[i], field);
                }
            }
            examined += 1;
            let message = FieldVector::new((0..k).map(|i| x.get(i)).collect());
            let error = ErrorVector::from_pairs(
                network,
                f.iter().enumerate().map(|(j, e)| (e, x.get(k + j))),
            )
            .expect("pattern edges are known");
            if error.weight() <= alpha && transmit(code, &message, &error)[&sink] == *obs {
                matches.insert((0..k).map(|i| message.get(i)).collect());
            }
            let mut i = lambda.len();
            let mut wrapped = true;
            while i > 0 {
                i -= 1;
                lambda[i] += 1;
                if lambda[i] < q {
                    wrapped = false;
                    break;
                }
                lambda[i] = 0;
            }
            if wrapped {
                break;
            }
        }
    }
    finish(matches, examined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{construct_deterministic, verify_code, ToleranceSpec};
    use crate::field::FieldSpec;
    use crate::graph::parse_network;

    fn fixture(name: &str) -> String {
        std::fs::read_to_string(format!(
            "{}/../../fixtures/{}",
            env!("CARGO_MANIFEST_DIR"),
            name
        ))
        .unwrap()
    }

    fn diamond_code() -> NetworkCode {
        let n = parse_network(&fixture("diamond.net")).unwrap();
        let field = FieldSpec::new(17).unwrap();
        construct_deterministic(&n, 1, 1, field).unwrap().0
    }

    fn msg(entries: &[Elem]) -> FieldVector {
        FieldVector::new(entries.to_vec())
    }

    #[test]
    fn transmit_clean_matches_global_vectors() {
        let code = diamond_code();
        let network = code.network().clone();
        let field = code.field();
        let table = global_table(&code, &ErrorPattern::empty());
        let message = msg(&[7]);
        let err = ErrorVector::zero(&network);
        let obs = transmit(&code, &message, &err);
        for &sink in network.sinks() {
            for (r, e) in network.in_edges(sink).enumerate() {
                let expected = table.observed(e.id).dot(&message, field);
                assert_eq!(obs[&sink].symbols.get(r), expected);
            }
        }
    }

    #[test]
    fn transmit_zero_everything_is_zero() {
        let code = diamond_code();
        let network = code.network().clone();
        let obs = transmit(&code, &msg(&[0]), &ErrorVector::zero(&network));
        for o in obs.values() {
            assert!(o.symbols.is_zero());
        }
    }

    #[test]
    fn transmit_error_stays_downstream() {
        // A single error on edge s->a (id 0) can only disturb the symbol
        // arriving over a->t (id 3).
        let code = diamond_code();
        let network = code.network().clone();
        let sink = network.sinks()[0];
        let message = msg(&[5]);
        let clean = transmit(&code, &message, &ErrorVector::zero(&network));
        let err = ErrorVector::from_pairs(&network, [(0, 2)]).unwrap();
        let noisy = transmit(&code, &message, &err);
        let in_ids: Vec<EdgeId> = network.in_edges(sink).map(|e| e.id).collect();
        for (r, &id) in in_ids.iter().enumerate() {
            if id == 3 {
                assert_ne!(noisy[&sink].symbols.get(r), clean[&sink].symbols.get(r));
            } else {
                assert_eq!(noisy[&sink].symbols.get(r), clean[&sink].symbols.get(r));
            }
        }
    }

    #[test]
    fn transmit_is_linear() {
        let code = diamond_code();
        let network = code.network().clone();
        let field = code.field();
        let sink = network.sinks()[0];
        let e1 = ErrorVector::from_pairs(&network, [(1, 3)]).unwrap();
        let e2 = ErrorVector::from_pairs(&network, [(4, 9)]).unwrap();
        let sum_err = ErrorVector {
            entries: e1.entries().add(e2.entries(), field),
        };
        let a = transmit(&code, &msg(&[4]), &e1);
        let b = transmit(&code, &msg(&[11]), &e2);
        let c = transmit(&code, &msg(&[field.add(4, 11)]), &sum_err);
        assert_eq!(
            c[&sink].symbols,
            a[&sink].symbols.add(&b[&sink].symbols, field)
        );
    }

    #[test]
    fn exhaustive_decodes_clean_observation() {
        let code = diamond_code();
        let sink = code.network().sinks()[0];
        let message = msg(&[13]);
        let obs = transmit(&code, &message, &ErrorVector::zero(code.network()));
        let result = decode_exhaustive(&code, sink, &obs[&sink], 1);
        assert_eq!(result.verdict, Verdict::Decoded(message));
    }

    #[test]
    fn exhaustive_corrects_single_errors() {
        let code = diamond_code();
        let network = code.network().clone();
        let sink = network.sinks()[0];
        let message = msg(&[9]);
        for e in network.edges() {
            let err = ErrorVector::from_pairs(&network, [(e.id, 6)]).unwrap();
            let obs = transmit(&code, &message, &err);
            let result = decode_exhaustive(&code, sink, &obs[&sink], 1);
            assert_eq!(
                result.verdict,
                Verdict::Decoded(message.clone()),
                "edge {}",
                e.id
            );
        }
    }

    #[test]
    fn exhaustive_alpha_zero_examines_whole_message_space() {
        let code = diamond_code();
        let sink = code.network().sinks()[0];
        let message = msg(&[3]);
        let obs = transmit(&code, &message, &ErrorVector::zero(code.network()));
        let result = decode_exhaustive(&code, sink, &obs[&sink], 0);
        assert_eq!(result.verdict, Verdict::Decoded(message));
        assert_eq!(result.candidates_examined, 17);
    }

    #[test]
    fn erasure_decodes_supported_errors() {
        let code = diamond_code();
        let network = code.network().clone();
        let sink = network.sinks()[0];
        let message = msg(&[14]);
        let f = ErrorPattern::new([0, 4], &network).unwrap();
        // Zero error.
        let obs = transmit(&code, &message, &ErrorVector::zero(&network));
        let result = decode_erasure(&code, sink, &obs[&sink], &f).unwrap();
        assert_eq!(result.verdict, Verdict::Decoded(message.clone()));
        // Weight-2 error on the pattern.
        let err = ErrorVector::from_pairs(&network, [(0, 3), (4, 12)]).unwrap();
        let obs = transmit(&code, &message, &err);
        let result = decode_erasure(&code, sink, &obs[&sink], &f).unwrap();
        assert_eq!(result.verdict, Verdict::Decoded(message));
    }

    #[test]
    fn erasure_error_outside_pattern_is_caught() {
        let code = diamond_code();
        let network = code.network().clone();
        let sink = network.sinks()[0];
        let message = msg(&[14]);
        let f = ErrorPattern::new([0, 4], &network).unwrap();
        for value in 1..17 {
            let err = ErrorVector::from_pairs(&network, [(2, value)]).unwrap();
            let obs = transmit(&code, &message, &err);
            let erasure = decode_erasure(&code, sink, &obs[&sink], &f).unwrap();
            match erasure.verdict {
                Verdict::NoCandidate => {}
                Verdict::Decoded(m) => {
                    // A silently wrong message must disagree with the
                    // exhaustive decoder, which sees the true support.
                    let full = decode_exhaustive(&code, sink, &obs[&sink], 1);
                    assert_ne!(full.verdict, Verdict::Decoded(m));
                }
                Verdict::Ambiguous => panic!("erasure decoding cannot be ambiguous"),
            }
        }
    }

    #[test]
    fn erasure_rejects_defective_code() {
        let n = parse_network(&fixture("threenode.net")).unwrap();
        let code = NetworkCode::from_text(&fixture("threenode_sum.code"), &n).unwrap();
        let sink = n.sinks()[0];
        let f = ErrorPattern::new([0, 1], &n).unwrap();
        let obs = transmit(&code, &msg(&[2]), &ErrorVector::zero(&n));
        assert_eq!(
            decode_erasure(&code, sink, &obs[&sink], &f),
            Err(DecodeError::CodeDefect { sink })
        );
    }

    #[test]
    fn pattern_search_matches_exhaustive_on_diamond() {
        let code = diamond_code();
        let network = code.network().clone();
        let sink = network.sinks()[0];
        let cases: Vec<(FieldVector, ErrorVector)> = vec![
            (msg(&[6]), ErrorVector::zero(&network)),
            (
                msg(&[6]),
                ErrorVector::from_pairs(&network, [(3, 5)]).unwrap(),
            ),
            (
                msg(&[0]),
                ErrorVector::from_pairs(&network, [(1, 1), (5, 16)]).unwrap(),
            ),
            (
                msg(&[12]),
                ErrorVector::from_pairs(&network, [(0, 2), (2, 2), (4, 2)]).unwrap(),
            ),
        ];
        for (message, err) in cases {
            let obs = transmit(&code, &message, &err);
            let a = decode_exhaustive(&code, sink, &obs[&sink], 1);
            let b = decode_pattern_search(&code, sink, &obs[&sink], 1);
            assert_eq!(a.verdict, b.verdict);
        }
    }

    #[test]
    fn pattern_search_matches_exhaustive_on_defective_code() {
        let n = parse_network(&fixture("threenode.net")).unwrap();
        let code = NetworkCode::from_text(&fixture("threenode_sum.code"), &n).unwrap();
        let sink = n.sinks()[0];
        for m in 0..5 {
            for (edge, value) in [(0, 0), (0, 3), (1, 2), (2, 4)] {
                let err = ErrorVector::from_pairs(&n, [(edge, value)]).unwrap();
                let obs = transmit(&code, &msg(&[m]), &err);
                let a = decode_exhaustive(&code, sink, &obs[&sink], 1);
                let b = decode_pattern_search(&code, sink, &obs[&sink], 1);
                assert_eq!(a.verdict, b.verdict, "m={m} edge={edge} value={value}");
            }
        }
    }

    #[test]
    fn correction_guarantee_on_verified_diamond() {
        // For a verified code, distinct messages stay distinguishable under
        // any two errors of weight <= alpha.
        let code = diamond_code();
        let network = code.network().clone();
        let field = code.field();
        assert!(verify_code(&code, &ToleranceSpec::Alpha(1)).passed);
        for &sink in network.sinks() {
            let (msg_map, err_map) = impulse_response(&code, sink);
            let errors = all_errors(&network, field.order(), 1);
            let images: Vec<FieldVector> = errors
                .iter()
                .map(|e| err_map.mul_vec(e.entries(), field))
                .collect();
            for d in 1..field.order() {
                let md = msg_map.mul_vec(&msg(&[d]), field);
                for a in &images {
                    for b in &images {
                        // phi(i, e1) != phi(j, e2) iff M*d != img(e2) - img(e1).
                        assert_ne!(md, b.sub(a, field));
                    }
                }
            }
        }
    }

    #[test]
    fn erasure_guarantee_on_verified_diamond() {
        // phi(i, e) != phi(j, 0) for i != j and w(e) <= 2*alpha.
        let code = diamond_code();
        let network = code.network().clone();
        let field = code.field();
        for &sink in network.sinks() {
            let (msg_map, err_map) = impulse_response(&code, sink);
            for d in 1..field.order() {
                let md = msg_map.mul_vec(&msg(&[d]), field);
                for e in all_errors(&network, field.order(), 2) {
                    // phi(i, e) != phi(j, 0) iff M*d + img(e) != 0.
                    let img = err_map.mul_vec(e.entries(), field);
                    assert!(!md.add(&img, field).is_zero());
                }
            }
        }
    }

    #[test]
    fn error_vector_support_and_weight() {
        let n = parse_network(&fixture("diamond.net")).unwrap();
        let ev = ErrorVector::from_pairs(&n, [(1, 4), (5, 2), (3, 0)]).unwrap();
        assert_eq!(ev.weight(), 2);
        assert_eq!(ev.support(&n), BTreeSet::from([1, 5]));
        assert_eq!(ev.get(&n, 1), 4);
        assert_eq!(ev.get(&n, 3), 0);
        assert!(matches!(
            ErrorVector::from_pairs(&n, [(9, 1)]),
            Err(DecodeError::UnknownEdge(9))
        ));
    }
}
