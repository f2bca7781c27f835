//! One test per acceptance criterion; each prints a single pass/fail line.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_bigint::BigUint;
use necc::cli::run_experiment;
use necc::code::{
    construct_deterministic, singleton_max_messages, verify_code, NetworkCode, ToleranceSpec,
};
use necc::decode::{decode_exhaustive, decode_pattern_search, transmit, ErrorVector, Verdict};
use necc::field::{Elem, FieldSpec, FieldVector};
use necc::graph::{augment, build_flow_plan, parse_network, ErrorPattern, Network};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../fixtures/{}",
        env!("CARGO_MANIFEST_DIR"),
        name
    ))
    .unwrap()
}

fn network(name: &str) -> Network {
    parse_network(&fixture(name)).unwrap()
}

fn report(criterion: usize, desc: &str, pass: bool) {
    println!(
        "criterion {criterion} ({desc}): {}",
        if pass { "pass" } else { "fail" }
    );
    assert!(pass, "criterion {criterion} failed");
}

fn diamond_code() -> &'static NetworkCode {
    static CODE: OnceLock<NetworkCode> = OnceLock::new();
    CODE.get_or_init(|| {
        let n = network("diamond.net");
        let field = FieldSpec::new(17).unwrap();
        construct_deterministic(&n, 1, 1, field).unwrap().0
    })
}

fn fig1_code() -> &'static NetworkCode {
    static CODE: OnceLock<NetworkCode> = OnceLock::new();
    CODE.get_or_init(|| {
        let n = network("fig1.net");
        let field = FieldSpec::new(421).unwrap();
        construct_deterministic(&n, 2, 1, field).unwrap().0
    })
}

/// All error vectors of weight at most 1 over the network's edges.
fn weight_le_1_errors(n: &Network, q: u64) -> Vec<ErrorVector> {
    let mut out = vec![ErrorVector::zero(n)];
    for e in n.edges() {
        for v in 1..q {
            out.push(ErrorVector::from_pairs(n, [(e.id, v)]).unwrap());
        }
    }
    out
}

fn all_messages(k: usize, q: u64) -> Vec<FieldVector> {
    let mut out = Vec::new();
    let mut cur = vec![0 as Elem; k];
    loop {
        out.push(FieldVector::new(cur.clone()));
        let mut i = k;
        let mut wrapped = true;
        while i > 0 {
            i -= 1;
            cur[i] += 1;
            if cur[i] < q {
                wrapped = false;
                break;
            }
            cur[i] = 0;
        }
        if wrapped {
            return out;
        }
    }
}

#[test]
fn criterion_1_example_flow_plan() {
    let n = network("fig1.net");
    let t1 = n.node_id("t1").unwrap();
    let t2 = n.node_id("t2").unwrap();
    let f = ErrorPattern::new([0, 5], &n).unwrap();
    let aug = augment(&n, &f, 2);
    let m1 = build_flow_plan(&aug, t1).unwrap().m();
    let m2 = build_flow_plan(&aug, t2).unwrap().m();
    let cuts_ok = n.min_cut(n.source(), t1) == 4 && n.min_cut(n.source(), t2) == 4;
    report(
        1,
        "flow plan on the two-sink example network",
        m1 == 2 && m2 == 1 && cuts_ok,
    );
}

#[test]
fn criterion_2_end_to_end_correction() {
    let code = diamond_code();
    let n = code.network();
    let mut failures = 0;
    for message in all_messages(1, 17) {
        for err in weight_le_1_errors(n, 17) {
            let obs = transmit(code, &message, &err);
            for &sink in n.sinks() {
                let result = decode_exhaustive(code, sink, &obs[&sink], 1);
                if result.verdict != Verdict::Decoded(message.clone()) {
                    failures += 1;
                }
            }
        }
    }
    report(2, "exhaustive correction of every weight-1 error", failures == 0);
}

#[test]
fn criterion_3_dimension_identities() {
    let mut pass = true;
    for (code, expected_audits) in [(diamond_code(), 15usize), (fig1_code(), 420usize)] {
        let r = verify_code(code, &ToleranceSpec::Alpha(1));
        pass &= r.passed && r.plan_failures.is_empty() && r.audits.len() == expected_audits;
        for a in &r.audits {
            pass &= a.dim_msg == code.k()
                && a.dim_err == a.m
                && a.dim_sum == code.k() + a.m
                && a.basis_independent;
        }
    }
    report(3, "dimension identities on every retained pair", pass);
}

#[test]
fn criterion_4_singleton_attainment() {
    let code = diamond_code();
    let messages = BigUint::from(17u64).pow(code.k() as u32);
    let bound = singleton_max_messages(3, 1, 17).unwrap();
    let corrects = verify_code(code, &ToleranceSpec::Alpha(1)).passed;
    report(
        4,
        "message count meets the Singleton bound with equality",
        messages == bound && corrects,
    );
}

#[test]
fn criterion_5_randomized_construction() {
    let n = network("diamond.net");
    let field = FieldSpec::new(181).unwrap();
    let r = run_experiment(&n, 1, 1, field, 0, 1000, 0.5).unwrap();
    report(
        5,
        "randomized construction failure rate within the bound",
        r.trials == 1000 && r.rate <= 0.5,
    );
}

#[test]
fn criterion_6_sum_code_separation() {
    let n = network("threenode.net");
    let code = NetworkCode::from_text(&fixture("threenode_sum.code"), &n).unwrap();
    let singles = vec![
        ErrorPattern::new([0], &n).unwrap(),
        ErrorPattern::new([1], &n).unwrap(),
    ];
    let erasure_ok = verify_code(&code, &ToleranceSpec::KnownLocations(singles)).passed;
    let correction_fails = !verify_code(&code, &ToleranceSpec::Alpha(1)).passed;
    report(
        6,
        "sum code tolerates known single failures but corrects no error",
        erasure_ok && correction_fails,
    );
}

#[test]
fn criterion_7_point_to_point_mds() {
    let n = network("p2p4.net");
    let field = FieldSpec::new(7).unwrap();
    let (code, r) = construct_deterministic(&n, 2, 1, field).unwrap();
    let sink = n.sinks()[0];
    let zero_err = ErrorVector::zero(&n);
    let codewords: Vec<Vec<Elem>> = all_messages(2, 7)
        .iter()
        .map(|m| {
            let obs = &transmit(&code, m, &zero_err)[&sink];
            (0..obs.symbols.len()).map(|i| obs.symbols.get(i)).collect()
        })
        .collect();
    let mut min_distance = usize::MAX;
    for (i, a) in codewords.iter().enumerate() {
        for b in codewords.iter().skip(i + 1) {
            let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
            min_distance = min_distance.min(d);
        }
    }
    report(
        7,
        "parallel-edge code is MDS with distance at least 3",
        r.success && codewords.len() == 49 && min_distance >= 3,
    );
}

#[test]
fn criterion_8_decoder_equivalence() {
    let code = diamond_code();
    let n = code.network();
    let sink = n.sinks()[0];
    let mut disagreements = 0;
    for message in all_messages(1, 17) {
        for err in weight_le_1_errors(n, 17) {
            let obs = &transmit(code, &message, &err)[&sink];
            let a = decode_exhaustive(code, sink, obs, 1);
            let b = decode_pattern_search(code, sink, obs, 1);
            if a.verdict != b.verdict {
                disagreements += 1;
            }
        }
    }
    report(8, "pattern-search decoder matches exhaustive search", disagreements == 0);
}

#[test]
fn criterion_9_full_two_sink_construction() {
    let code = fig1_code();
    let n = code.network();
    let r = verify_code(code, &ToleranceSpec::Alpha(1));
    let m_totals: BTreeMap<usize, usize> =
        n.sinks().iter().map(|&t| (t, 0)).collect();
    let mut audits_per_sink = m_totals;
    for a in &r.audits {
        *audits_per_sink.get_mut(&a.sink).unwrap() += 1;
    }
    let balanced = audits_per_sink.values().all(|&c| c == 210);
    report(
        9,
        "full construction over all 210 patterns and both sinks",
        r.passed && r.audits.len() == 420 && balanced,
    );
}
