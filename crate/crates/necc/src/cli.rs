//! Command-line surface: construct codes, verify them, simulate noisy
//! transmissions, run the randomized-construction experiment, and print
//! bound tables.
//!
//! Exit codes: 0 success, 1 usage, 2 parse, 3 infeasible, 4 construction or
//! verification failure, 5 decode mismatch.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::code::{
    construct_deterministic, construct_random, construct_refined, refined_required_field_order,
    required_field_order, singleton_max_messages, verify_code, BuildError, ConstructionReport,
    FieldSizeMode, NetworkCode, ToleranceSpec, VerificationReport,
};
use crate::decode::{
    decode_erasure, decode_exhaustive, decode_pattern_search, transmit, DecodeResult, ErrorVector,
    Verdict,
};
use crate::field::{Elem, FieldSpec, FieldVector};
use crate::graph::{parse_network, ErrorPattern, Network};

const EXIT_USAGE: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_INFEASIBLE: i32 = 3;
const EXIT_FAILED: i32 = 4;
const EXIT_MISMATCH: i32 = 5;

#[derive(Parser)]
#[command(
    name = "necc",
    version,
    about = "Linear network error-correcting codes: construct, verify, decode"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a code and write it in the code file format.
    Construct(ConstructArgs),
    /// Re-audit a serialized code against a tolerance specification.
    Verify(VerifyArgs),
    /// Transmit a message with injected errors and decode at every sink.
    Simulate(SimulateArgs),
    /// Monte Carlo over randomized constructions with consecutive seeds.
    Experiment(ExperimentArgs),
    /// Print min-cuts, Singleton bounds, and field-size thresholds.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Machine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Det,
    Refined,
    Random,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    k: usize,
    /// Number of correctable errors; required unless --mode refined.
    #[arg(long)]
    alpha: Option<usize>,
    /// Field order: a prime, or "auto" for the smallest prime meeting the
    /// mode's bound.
    #[arg(long, default_value = "auto")]
    q: String,
    /// Allow a --q below the mode's bound.
    #[arg(long)]
    unsafe_q: bool,
    /// Seed for --mode random.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Failure bound used when resolving --q auto in random mode.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Where to write the code; omitted, the code follows the report on
    /// stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    #[arg(long, value_name = "FILE")]
    code: PathBuf,
    /// Uniform tolerance: every sink, every pattern of size 2*alpha.
    #[arg(long, group = "tolerance")]
    alpha: Option<usize>,
    /// Per-sink tolerances, e.g. "t1=1,t2=0".
    #[arg(long, group = "tolerance")]
    per_sink: Option<String>,
    /// Known-location failure patterns, e.g. "0,5;12" ("-" for none).
    #[arg(long, group = "tolerance")]
    known_locations: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecoderArg {
    Exhaustive,
    Pattern,
    Erasure,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    #[arg(long, value_name = "FILE")]
    code: PathBuf,
    /// Message symbols, e.g. "5,3".
    #[arg(long)]
    message: String,
    /// Explicit error, e.g. "3:5,7:2" (empty for none).
    #[arg(long, group = "errspec")]
    error: Option<String>,
    /// Draw an error of this weight with --seed.
    #[arg(long, group = "errspec")]
    random_weight: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exhaustive")]
    decoder: DecoderArg,
    /// Tolerance handed to the exhaustive / pattern decoders.
    #[arg(long, default_value_t = 1)]
    alpha: usize,
    /// Erasure pattern for --decoder erasure, e.g. "0,4".
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    alpha: usize,
    #[arg(long, default_value = "auto")]
    q: String,
    #[arg(long)]
    unsafe_q: bool,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    #[arg(long)]
    alpha: usize,
    /// Evaluate message-count bounds at this field order.
    #[arg(long)]
    q: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

/// Outcome of a Monte Carlo run over randomized constructions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub trials: usize,
    pub failures: usize,
    pub rate: f64,
    pub delta: f64,
    pub q: u64,
    pub failed_seeds: Vec<u64>,
}

/// Runs `trials` randomized constructions with seeds `seed..seed+trials`
/// and counts verification failures.
pub fn run_experiment(
    network: &Network,
    k: usize,
    alpha: usize,
    field: FieldSpec,
    seed: u64,
    trials: usize,
    delta: f64,
) -> Result<ExperimentReport, BuildError> {
    let mut failed_seeds = Vec::new();
    for s in seed..seed + trials as u64 {
        let (_, report) = construct_random(network, k, alpha, field, s)?;
        if !report.success {
            failed_seeds.push(s);
        }
    }
    let failures = failed_seeds.len();
    Ok(ExperimentReport {
        trials,
        failures,
        rate: failures as f64 / trials as f64,
        delta,
        q: field.order(),
        failed_seeds,
    })
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn new(code: i32, msg: impl Into<String>) -> Self {
        Failure {
            code,
            msg: msg.into(),
        }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        let code = match e {
            BuildError::Infeasible { .. } | BuildError::BoundDomain { .. } => EXIT_INFEASIBLE,
            _ => EXIT_FAILED,
        };
        Failure::new(code, e.to_string())
    }
}

/// Parses the process arguments and runs the selected command, returning
/// the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.command {
        Command::Construct(args) => cmd_construct(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Bounds(args) => cmd_bounds(args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

struct Out {
    machine: bool,
}

impl Out {
    fn new(format: OutputFormat) -> Self {
        Out {
            machine: format == OutputFormat::Machine,
        }
    }

    fn kv(&self, key: &str, value: impl Display) {
        if self.machine {
            println!("{key}={value}");
        } else {
            println!("{key}: {value}");
        }
    }

    fn note(&self, text: impl Display) {
        if !self.machine {
            println!("{text}");
        }
    }
}

fn load_network(path: &PathBuf) -> Result<Network, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    parse_network(&text).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn load_code(path: &PathBuf, network: &Network) -> Result<NetworkCode, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    NetworkCode::from_text(&text, network)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

/// Resolves --q: "auto" takes the bound itself; an explicit prime below the
/// bound needs --unsafe-q.
fn resolve_q(q_arg: &str, bound: u64, unsafe_q: bool) -> Result<FieldSpec, Failure> {
    if q_arg == "auto" {
        return FieldSpec::new(bound).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()));
    }
    let q: u64 = q_arg
        .parse()
        .map_err(|_| Failure::new(EXIT_USAGE, format!("--q must be a prime or \"auto\", got {q_arg:?}")))?;
    if q < bound && !unsafe_q {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("--q {q} is below the required bound {bound}; pass --unsafe-q to explore it"),
        ));
    }
    FieldSpec::new(q).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn parse_pattern(text: &str, network: &Network) -> Result<ErrorPattern, Failure> {
    if text.trim() == "-" || text.trim().is_empty() {
        return Ok(ErrorPattern::empty());
    }
    let mut edges = Vec::new();
    for part in text.split(',') {
        let id = part
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, format!("bad edge id {part:?}")))?;
        edges.push(id);
    }
    ErrorPattern::new(edges, network).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn print_construction_report(out: &Out, network: &Network, report: &ConstructionReport) {
    out.kv("mode", report.mode);
    out.kv("q", report.field_order);
    out.kv("k", report.k);
    if let Some(alpha) = report.alpha {
        out.kv("alpha", alpha);
    }
    if let Some(alpha_max) = report.alpha_max {
        out.kv("alpha_max", alpha_max);
    }
    out.kv("n", network.min_min_cut());
    for &t in network.sinks() {
        out.kv(
            &format!("n.{}", network.node_name(t)),
            network.min_cut(network.source(), t),
        );
    }
    for (&t, &a) in &report.per_sink_alpha {
        out.kv(&format!("alpha.{}", network.node_name(t)), a);
    }
    out.kv("pattern_count", report.pattern_count);
    out.kv("excluded_count", report.excluded.len());
    for (i, (t, p)) in report.excluded.iter().enumerate() {
        out.kv(
            &format!("excluded.{i}"),
            format!("{}:{}", network.node_name(*t), p),
        );
    }
    for (t, p, m) in &report.m_table {
        out.kv(&format!("m.{}.{}", network.node_name(*t), p), m);
    }
    out.kv("success", report.success);
}

fn cmd_construct(args: ConstructArgs) -> Result<i32, Failure> {
    let network = load_network(&args.network)?;
    let out = Out::new(args.format);
    let need_alpha = || {
        args.alpha.ok_or_else(|| {
            Failure::new(EXIT_USAGE, "--alpha is required unless --mode refined")
        })
    };
    let (code, report) = match args.mode {
        ModeArg::Det => {
            let alpha = need_alpha()?;
            let bound = required_field_order(&network, alpha, FieldSizeMode::Deterministic);
            let field = resolve_q(&args.q, bound, args.unsafe_q)?;
            construct_deterministic(&network, args.k, alpha, field)?
        }
        ModeArg::Refined => {
            let bound = refined_required_field_order(&network, args.k);
            let field = resolve_q(&args.q, bound, args.unsafe_q)?;
            construct_refined(&network, args.k, field)?
        }
        ModeArg::Random => {
            let alpha = need_alpha()?;
            let bound = required_field_order(
                &network,
                alpha,
                FieldSizeMode::Random { delta: args.delta },
            );
            let field = resolve_q(&args.q, bound, args.unsafe_q)?;
            construct_random(&network, args.k, alpha, field, args.seed)?
        }
    };
    print_construction_report(&out, &network, &report);
    let text = code.to_text();
    match &args.output {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| Failure::new(EXIT_FAILED, format!("{}: {e}", path.display())))?;
            out.note(format!("code written to {}", path.display()));
        }
        None => {
            out.note("");
            print!("{text}");
        }
    }
    Ok(if report.success { 0 } else { EXIT_FAILED })
}

fn print_verification_report(out: &Out, network: &Network, report: &VerificationReport) {
    out.kv("audit_count", report.audits.len());
    for a in &report.audits {
        out.kv(
            &format!("audit.{}.{}", network.node_name(a.sink), a.pattern),
            format!(
                "{} m={} basis={} dim_msg={} dim_err={} dim_sum={}",
                if a.pass { "pass" } else { "fail" },
                a.m,
                if a.basis_independent { "ok" } else { "dependent" },
                a.dim_msg,
                a.dim_err,
                a.dim_sum
            ),
        );
    }
    for (i, (t, p)) in report.plan_failures.iter().enumerate() {
        out.kv(
            &format!("plan_failure.{i}"),
            format!("{}:{}", network.node_name(*t), p),
        );
    }
    for (i, (t, p)) in report.excluded.iter().enumerate() {
        out.kv(
            &format!("excluded.{i}"),
            format!("{}:{}", network.node_name(*t), p),
        );
    }
    out.kv("passed", report.passed);
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, Failure> {
    let network = load_network(&args.network)?;
    let code = load_code(&args.code, &network)?;
    let out = Out::new(args.format);
    let spec = if let Some(alpha) = args.alpha {
        ToleranceSpec::Alpha(alpha)
    } else if let Some(text) = &args.per_sink {
        let mut map = BTreeMap::new();
        for part in text.split(',') {
            let (name, a) = part.split_once('=').ok_or_else(|| {
                Failure::new(EXIT_USAGE, format!("bad per-sink entry {part:?}, want sink=alpha"))
            })?;
            let t = network
                .node_id(name.trim())
                .ok_or_else(|| Failure::new(EXIT_USAGE, format!("unknown sink {name:?}")))?;
            let a = a
                .trim()
                .parse()
                .map_err(|_| Failure::new(EXIT_USAGE, format!("bad alpha in {part:?}")))?;
            map.insert(t, a);
        }
        ToleranceSpec::PerSink(map)
    } else if let Some(text) = &args.known_locations {
        let mut patterns = Vec::new();
        for part in text.split(';') {
            patterns.push(parse_pattern(part, &network)?);
        }
        ToleranceSpec::KnownLocations(patterns)
    } else {
        return Err(Failure::new(
            EXIT_USAGE,
            "one of --alpha, --per-sink, --known-locations is required",
        ));
    };
    let report = verify_code(&code, &spec);
    print_verification_report(&out, &network, &report);
    Ok(if report.passed { 0 } else { EXIT_FAILED })
}

fn render_verdict(v: &Verdict) -> String {
    match v {
        Verdict::Decoded(m) => format!(
            "decoded {}",
            (0..m.len())
                .map(|i| m.get(i).to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
        Verdict::Ambiguous => "ambiguous".into(),
        Verdict::NoCandidate => "no-candidate".into(),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, Failure> {
    let network = load_network(&args.network)?;
    let code = load_code(&args.code, &network)?;
    let out = Out::new(args.format);
    let field = code.field();
    let q = field.order();

    let mut message = Vec::new();
    for part in args.message.split(',') {
        let v: Elem = part
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, format!("bad message symbol {part:?}")))?;
        if v >= q {
            return Err(Failure::new(
                EXIT_USAGE,
                format!("message symbol {v} out of range for field order {q}"),
            ));
        }
        message.push(v);
    }
    if message.len() != code.k() {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("message has {} symbols, code has k={}", message.len(), code.k()),
        ));
    }
    let message = FieldVector::new(message);

    let error = if let Some(w) = args.random_weight {
        if w > network.edge_count() {
            return Err(Failure::new(
                EXIT_USAGE,
                format!("--random-weight {w} exceeds the edge count"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let positions = rand::seq::index::sample(&mut rng, network.edge_count(), w);
        let pairs: Vec<(usize, Elem)> = positions
            .iter()
            .map(|pos| {
                (
                    network.edges()[pos].id,
                    rand::Rng::gen_range(&mut rng, 1..q),
                )
            })
            .collect();
        ErrorVector::from_pairs(&network, pairs)
            .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?
    } else {
        let spec = args.error.as_deref().unwrap_or("");
        let mut pairs = Vec::new();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (e, v) = part.split_once(':').ok_or_else(|| {
                Failure::new(EXIT_USAGE, format!("bad error entry {part:?}, want edge:value"))
            })?;
            let e = e
                .trim()
                .parse()
                .map_err(|_| Failure::new(EXIT_USAGE, format!("bad edge id {e:?}")))?;
            let v: Elem = v
                .trim()
                .parse()
                .map_err(|_| Failure::new(EXIT_USAGE, format!("bad error value {v:?}")))?;
            if v >= q {
                return Err(Failure::new(
                    EXIT_USAGE,
                    format!("error value {v} out of range for field order {q}"),
                ));
            }
            pairs.push((e, v));
        }
        ErrorVector::from_pairs(&network, pairs)
            .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?
    };

    out.kv(
        "message",
        (0..message.len())
            .map(|i| message.get(i).to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let support = error.support(&network);
    out.kv(
        "error",
        if support.is_empty() {
            "-".to_string()
        } else {
            support
                .iter()
                .map(|e| format!("{e}:{}", error.get(&network, *e)))
                .collect::<Vec<_>>()
                .join(",")
        },
    );

    let observations = transmit(&code, &message, &error);
    let mut all_match = true;
    for (&sink, obs) in &observations {
        let name = network.node_name(sink);
        out.kv(
            &format!("sink.{name}.observation"),
            (0..obs.symbols.len())
                .map(|i| obs.symbols.get(i).to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let result: DecodeResult = match args.decoder {
            DecoderArg::Exhaustive => decode_exhaustive(&code, sink, obs, args.alpha),
            DecoderArg::Pattern => decode_pattern_search(&code, sink, obs, args.alpha),
            DecoderArg::Erasure => {
                let text = args.pattern.as_deref().ok_or_else(|| {
                    Failure::new(EXIT_USAGE, "--decoder erasure requires --pattern")
                })?;
                let f = parse_pattern(text, &network)?;
                decode_erasure(&code, sink, obs, &f)
                    .map_err(|e| Failure::new(EXIT_FAILED, e.to_string()))?
            }
        };
        out.kv(&format!("sink.{name}.verdict"), render_verdict(&result.verdict));
        out.kv(
            &format!("sink.{name}.examined"),
            result.candidates_examined,
        );
        if result.verdict != Verdict::Decoded(message.clone()) {
            all_match = false;
        }
    }
    out.kv("match", all_match);
    Ok(if all_match { 0 } else { EXIT_MISMATCH })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<i32, Failure> {
    if args.trials < 1 {
        return Err(Failure::new(EXIT_USAGE, "--trials must be at least 1"));
    }
    if !(args.delta > 0.0 && args.delta <= 1.0) {
        return Err(Failure::new(EXIT_USAGE, "--delta must be in (0, 1]"));
    }
    let network = load_network(&args.network)?;
    let out = Out::new(args.format);
    let bound = required_field_order(
        &network,
        args.alpha,
        FieldSizeMode::Random { delta: args.delta },
    );
    let field = resolve_q(&args.q, bound, args.unsafe_q)?;
    let report = run_experiment(
        &network,
        args.k,
        args.alpha,
        field,
        args.seed,
        args.trials,
        args.delta,
    )?;
    out.kv("q", report.q);
    out.kv("delta", report.delta);
    out.kv("trials", report.trials);
    out.kv("failures", report.failures);
    out.kv("rate", report.rate);
    out.kv(
        "failed_seeds",
        if report.failed_seeds.is_empty() {
            "-".to_string()
        } else {
            report
                .failed_seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        },
    );
    let within = report.rate <= report.delta;
    out.kv("within_bound", within);
    Ok(if within { 0 } else { EXIT_FAILED })
}

fn cmd_bounds(args: BoundsArgs) -> Result<i32, Failure> {
    let network = load_network(&args.network)?;
    let out = Out::new(args.format);
    let alpha = args.alpha;
    let n = network.min_min_cut();
    out.kv("n", n);
    for &t in network.sinks() {
        out.kv(
            &format!("n.{}", network.node_name(t)),
            network.min_cut(network.source(), t),
        );
    }
    out.kv("alpha", alpha);
    if let Some(q) = args.q {
        match singleton_max_messages(n, alpha, q) {
            Ok(max) => out.kv("singleton_max", max),
            Err(e) => out.kv("singleton_max", format!("undefined ({e})")),
        }
        for &t in network.sinks() {
            let n_t = network.min_cut(network.source(), t);
            match singleton_max_messages(n_t, alpha, q) {
                Ok(max) => out.kv(&format!("refined_max.{}", network.node_name(t)), max),
                Err(e) => out.kv(
                    &format!("refined_max.{}", network.node_name(t)),
                    format!("undefined ({e})"),
                ),
            }
        }
    }
    let det_threshold = network.sinks().len() as u128
        * crate::code::pattern_family_size(&network, 2 * alpha);
    out.kv("det_threshold", det_threshold);
    out.kv(
        "det_q",
        required_field_order(&network, alpha, FieldSizeMode::Deterministic),
    );
    out.kv("delta", args.delta);
    out.kv(
        "random_q",
        required_field_order(&network, alpha, FieldSizeMode::Random { delta: args.delta }),
    );
    Ok(0)
}
