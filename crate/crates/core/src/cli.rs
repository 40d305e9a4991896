//! Command-line front end. Every verb produces a report document with the
//! keys `verb`, `inputs`, `outputs`, `caveats` and `wall_time_ms`; objects
//! are emitted with sorted keys so identical runs give identical bytes apart
//! from the wall time.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::family::{embed_shift, materialize, verify_embedding, FamilyError, FamilySpec};
use crate::famset::{FamsetError, FinSet, SeqSet};
use crate::plegma::{
    construct_preserving_map, enumerate_plm, interval_coding, is_plegma, map_report, path_bfs,
    shift_map, union_decode, union_encode, EnumConfig, MapTable, PlegmaError, PlegmaTuple,
    PreservingMapConfig,
};
use crate::specnorm::{
    basis_diagnostics, probe, singular_analysis, sm_converge, sm_estimate_batch, EstimateConfig,
    FSeqSpec, NormSpec, ProbeConfig, ProbeMode, SingularConfig, SpecnormError, DEFAULT_GRID,
};

/// Horizon used when parsing index sequences in the DSLs.
pub const DSL_HORIZON: u32 = 100_000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HORIZON: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

const KNOWN_ENV: [&str; 5] = [
    "PLEGMA_HORIZON",
    "PLEGMA_BUDGET",
    "PLEGMA_FORMAT",
    "PLEGMA_SEED",
    "PLEGMA_OUT",
];

#[derive(Debug, Parser)]
#[command(
    name = "plegma",
    version,
    about = "Regular families, plegma tuples and spreading-model estimates"
)]
pub struct Cli {
    /// Horizon cap (universe size, enumeration horizon or map horizon).
    #[arg(long, global = true, env = "PLEGMA_HORIZON", value_parser = clap::value_parser!(u32).range(1..))]
    pub horizon: Option<u32>,
    /// Budget cap (tuples, pairs, samples or listed items).
    #[arg(long, global = true, env = "PLEGMA_BUDGET", value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: Option<u64>,
    #[arg(long, global = true, env = "PLEGMA_FORMAT", value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, global = true, env = "PLEGMA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true, env = "PLEGMA_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Family(FamilyCmd),
    #[command(subcommand)]
    Plegma(PlegmaCmd),
    #[command(subcommand)]
    Sm(SmCmd),
}

#[derive(Debug, Subcommand)]
pub enum FamilyCmd {
    /// Symbolic order of a family.
    Order { family: String },
    /// Members inside `{1..horizon}` with the finite rank and regularity flags.
    Materialize { family: String },
    /// Regularity flags plus a seeded membership cross-check.
    Check { family: String },
    /// Embedding `L` with `L(R) ⊆ S` on `{1..horizon}`.
    Embed { r: String, s: String },
}

#[derive(Debug, Subcommand)]
pub enum PlegmaCmd {
    /// Whether the given sets form a plegma family.
    Check {
        #[arg(required = true)]
        sets: Vec<String>,
    },
    /// Enumerate `Plm_l(F↾L)`.
    Enum {
        family: String,
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value = "all")]
        seq: String,
        #[arg(long, default_value_t = 1)]
        first_min: u32,
    },
    /// Shortest plegma path from `s0` to `s` in `F↾↾L`.
    Path {
        family: String,
        s0: String,
        s: String,
        #[arg(long, default_value = "all")]
        seq: String,
        #[arg(long, default_value_t = 64)]
        max_len: u32,
    },
    /// Build a plegma-preserving map `G → F`.
    MapBuild {
        g: String,
        f: String,
        #[arg(long)]
        m: Option<String>,
        #[arg(long, default_value_t = 200_000)]
        max_keys: usize,
    },
    /// Classify the plegma pairs of a map table.
    MapReport(MapSource),
    /// Union codec: encode a tuple, or decode a union with `--decode`.
    Union(UnionArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct MapSourceChoice {
    /// JSON table as written by `map-build`.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Shift map n -> {n, n+N} on 1..domain-max.
    #[arg(long)]
    shift: Option<u32>,
    /// Coding map n -> {n+1, ..., 2n+1} into the given family.
    #[arg(long)]
    coding: Option<String>,
}

#[derive(Debug, Args)]
pub struct MapSource {
    #[command(flatten)]
    choice: MapSourceChoice,
    #[arg(long, default_value_t = 30)]
    domain_max: u32,
}

#[derive(Debug, Args)]
pub struct UnionArgs {
    /// Parts to encode.
    sets: Vec<String>,
    /// Union to decode.
    #[arg(long, requires_all = ["family", "l"], conflicts_with = "sets")]
    decode: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SmCommon {
    #[arg(long)]
    family: String,
    #[arg(long)]
    fseq: String,
    #[arg(long)]
    norm: String,
    #[arg(long, default_value = "all")]
    seq: String,
}

#[derive(Debug, Subcommand)]
pub enum SmCmd {
    /// Min, max and mean of `‖Σ a_i x_{s_i}‖` over plegma tuples.
    Estimate {
        #[command(flatten)]
        common: SmCommon,
        #[arg(long, allow_hyphen_values = true)]
        coeffs: String,
        /// Threshold index: tuples start at `L(l)` or later.
        #[arg(long, default_value_t = 1)]
        l: u32,
    },
    /// Estimates over increasing thresholds.
    Converge {
        #[command(flatten)]
        common: SmCommon,
        #[arg(long, allow_hyphen_values = true)]
        coeffs: String,
        #[arg(long, default_value = "1,2,4,8")]
        thresholds: String,
    },
    /// `trivial:EPS`, `separated:EPS`, `cauchy:EPS` or `cesaro:N`.
    Probe {
        #[command(flatten)]
        common: SmCommon,
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = 1)]
        l: u32,
    },
    /// Unconditional and basis constants estimated on a coefficient grid.
    Diagnose {
        #[command(flatten)]
        common: SmCommon,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1)]
        l: u32,
    },
    /// Estimate the constant part `x0` from Cesàro means.
    Singular {
        #[command(flatten)]
        common: SmCommon,
        #[arg(long, default_value = "4,16,64,256")]
        n_list: String,
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

/// Exit status and rendered report of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

fn famset_code(e: &FamsetError) -> i32 {
    match e {
        FamsetError::HorizonExceeded { .. } => EXIT_HORIZON,
        _ => EXIT_CONFIG,
    }
}

fn family_code(e: &FamilyError) -> i32 {
    match e {
        FamilyError::Set(e) => famset_code(e),
        FamilyError::NotFoundWithinHorizon { .. }
        | FamilyError::UniverseTooLarge { .. }
        | FamilyError::TooManyMembers { .. } => EXIT_HORIZON,
        FamilyError::VerificationFailed(_) => EXIT_VIOLATION,
        _ => EXIT_CONFIG,
    }
}

fn plegma_code(e: &PlegmaError) -> i32 {
    match e {
        PlegmaError::Family(e) => family_code(e),
        PlegmaError::NoPathWithinBounds(_) => EXIT_HORIZON,
        PlegmaError::TheoremViolation(_) => EXIT_VIOLATION,
        _ => EXIT_CONFIG,
    }
}

fn specnorm_code(e: &SpecnormError) -> i32 {
    match e {
        SpecnormError::Family(e) => family_code(e),
        SpecnormError::Plegma(e) => plegma_code(e),
        SpecnormError::NoTuplesFound | SpecnormError::NotStabilized { .. } => EXIT_HORIZON,
        _ => EXIT_CONFIG,
    }
}

macro_rules! failure_from {
    ($t:ty, $f:ident) => {
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure {
                    code: $f(&e),
                    message: e.to_string(),
                }
            }
        }
    };
}

failure_from!(FamsetError, famset_code);
failure_from!(FamilyError, family_code);
failure_from!(PlegmaError, plegma_code);
failure_from!(SpecnormError, specnorm_code);

/// Report under construction.
struct Report {
    verb: String,
    inputs: BTreeMap<String, Value>,
    outputs: Value,
    caveats: BTreeMap<String, bool>,
    /// Rows for CSV output.
    table: Option<(Vec<String>, Vec<Vec<String>>)>,
    /// Set when a checked contract failed; the report is still emitted.
    violation: Option<String>,
}

impl Report {
    fn new(verb: &str) -> Self {
        Report {
            verb: verb.to_string(),
            inputs: BTreeMap::new(),
            outputs: Value::Null,
            caveats: BTreeMap::new(),
            table: None,
            violation: None,
        }
    }

    fn input(&mut self, key: &str, v: impl Serialize) -> &mut Self {
        self.inputs.insert(key.to_string(), to_value(v));
        self
    }

    fn caveat(&mut self, key: &str, v: bool) -> &mut Self {
        self.caveats.insert(key.to_string(), v);
        self
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

fn parse_family(t: &str) -> Result<FamilySpec, Failure> {
    Ok(FamilySpec::parse(t, DSL_HORIZON)?)
}

fn parse_seq(t: &str) -> Result<SeqSet, Failure> {
    Ok(SeqSet::parse(t, DSL_HORIZON)?)
}

fn parse_set(t: &str) -> Result<FinSet, Failure> {
    Ok(t.parse::<FinSet>()?)
}

fn parse_list<T: std::str::FromStr>(t: &str, what: &str) -> Result<Vec<T>, Failure> {
    t.split(',')
        .map(|x| x.trim().parse::<T>())
        .collect::<Result<Vec<T>, _>>()
        .map_err(|_| Failure::config(format!("cannot parse {what} {t:?}")))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let unknown: Vec<String> = std::env::vars_os()
        .filter_map(|(k, _)| k.into_string().ok())
        .filter(|k| k.starts_with("PLEGMA_") && !KNOWN_ENV.contains(&k.as_str()))
        .collect();
    if !unknown.is_empty() {
        return Outcome {
            code: EXIT_CONFIG,
            stdout: String::new(),
            stderr: format!(
                "error: unknown environment variables: {}\n",
                unknown.join(", ")
            ),
        };
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    run_cli(&cli)
}

pub fn run_cli(cli: &Cli) -> Outcome {
    let start = Instant::now();
    let result = dispatch(cli);
    let elapsed = start.elapsed().as_secs_f64() * 1000.0;
    let (report, code, err) = match result {
        Ok(r) => {
            let code = if r.violation.is_some() {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            };
            let err = r
                .violation
                .as_ref()
                .map(|v| format!("error: theorem contract violated: {v}\n"))
                .unwrap_or_default();
            (r, code, err)
        }
        Err(f) => {
            return Outcome {
                code: f.code,
                stdout: String::new(),
                stderr: format!("error: {}\n", f.message),
            }
        }
    };
    let rendered = match render(cli, &report, elapsed) {
        Ok(s) => s,
        Err(f) => {
            return Outcome {
                code: f.code,
                stdout: String::new(),
                stderr: format!("error: {}\n", f.message),
            }
        }
    };
    if let Some(path) = &cli.out {
        if let Err(e) = std::fs::write(path, &rendered) {
            return Outcome {
                code: EXIT_CONFIG,
                stdout: String::new(),
                stderr: format!("error: cannot write {}: {e}\n", path.display()),
            };
        }
        return Outcome {
            code,
            stdout: String::new(),
            stderr: err,
        };
    }
    Outcome {
        code,
        stdout: rendered,
        stderr: err,
    }
}

fn render(cli: &Cli, r: &Report, elapsed_ms: f64) -> Result<String, Failure> {
    match cli.format {
        Format::Json => {
            let doc = json!({
                "verb": r.verb,
                "inputs": r.inputs,
                "outputs": r.outputs,
                "caveats": r.caveats,
                "wall_time_ms": elapsed_ms,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize to JSON");
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let (header, rows) = r.table.as_ref().ok_or_else(|| {
                Failure::config(format!("csv output is not available for {}", r.verb))
            })?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let write_err = |e: csv::Error| Failure::config(format!("csv output: {e}"));
            w.write_record(header).map_err(write_err)?;
            for row in rows {
                w.write_record(row).map_err(write_err)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Failure::config(format!("csv output: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv cells are UTF-8"))
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "verb: {}", r.verb);
            for (k, v) in &r.inputs {
                let _ = writeln!(s, "input.{k}: {}", compact(v));
            }
            match &r.outputs {
                Value::Object(map) => {
                    for (k, v) in map {
                        let _ = writeln!(s, "{k}: {}", compact(v));
                    }
                }
                v => {
                    let _ = writeln!(s, "output: {}", compact(v));
                }
            }
            for (k, v) in &r.caveats {
                let _ = writeln!(s, "caveat.{k}: {v}");
            }
            let _ = writeln!(s, "wall_time_ms: {elapsed_ms}");
            Ok(s)
        }
    }
}

fn compact(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

fn dispatch(cli: &Cli) -> Result<Report, Failure> {
    let mut r = match &cli.command {
        Command::Family(c) => family_cmd(cli, c)?,
        Command::Plegma(c) => plegma_cmd(cli, c)?,
        Command::Sm(c) => sm_cmd(cli, c)?,
    };
    r.input("seed", cli.seed);
    if let Some(h) = cli.horizon {
        r.input("horizon", h);
    }
    if let Some(b) = cli.budget {
        r.input("budget", b);
    }
    Ok(r)
}

fn family_cmd(cli: &Cli, c: &FamilyCmd) -> Result<Report, Failure> {
    match c {
        FamilyCmd::Order { family } => {
            let f = parse_family(family)?;
            let mut r = Report::new("family order");
            r.input("family", &f);
            r.outputs = json!({ "order": f.order()? });
            Ok(r)
        }
        FamilyCmd::Materialize { family } => {
            let f = parse_family(family)?;
            let n = cli.horizon.unwrap_or(10);
            let m = materialize(&f, n)?;
            let cap = cli.budget.unwrap_or(10_000) as usize;
            let listed: Vec<&FinSet> = m.members().iter().take(cap).collect();
            let mut r = Report::new("family materialize");
            r.input("family", &f).input("universe", n);
            r.outputs = json!({
                "count": m.len(),
                "members": listed,
                "rank_finite": m.rank_finite(),
                "regularity": m.regularity_report(),
            });
            r.caveat("members_truncated", m.len() > cap)
                .caveat("horizon_limited", true);
            Ok(r)
        }
        FamilyCmd::Check { family } => {
            let f = parse_family(family)?;
            let n = cli.horizon.unwrap_or(10);
            let m = materialize(&f, n)?;
            let samples = cli.budget.unwrap_or(1000);
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let mut mismatches = 0u64;
            let mut witness: Option<FinSet> = None;
            for _ in 0..samples {
                let size = rng.gen_range(0..=n.min(8) as usize);
                let mut elems: Vec<u32> = sample(&mut rng, n as usize, size)
                    .into_iter()
                    .map(|i| i as u32 + 1)
                    .collect();
                elems.sort_unstable();
                let s = FinSet::new(elems)?;
                if f.contains(&s)? != m.contains(&s) {
                    mismatches += 1;
                    witness.get_or_insert(s);
                }
            }
            let mut r = Report::new("family check");
            r.input("family", &f).input("universe", n);
            r.outputs = json!({
                "regularity": m.regularity_report(),
                "samples": samples,
                "membership_mismatches": mismatches,
                "mismatch_witness": witness,
            });
            r.caveat("horizon_limited", true);
            if mismatches > 0 {
                r.violation = Some("symbolic and materialized membership disagree".into());
            }
            Ok(r)
        }
        FamilyCmd::Embed { r: rs, s: ss } => {
            let (rf, sf) = (parse_family(rs)?, parse_family(ss)?);
            let len = cli.horizon.unwrap_or(20);
            let e = embed_shift(&rf, &sf, len)?;
            let checked = verify_embedding(&rf, &sf, &e.seq, len)?;
            let mut r = Report::new("family embed");
            r.input("r", &rf).input("s", &sf).input("len", len);
            r.outputs = json!({
                "l": e.seq.values(len)?,
                "order_r": rf.order()?,
                "order_s": sf.order()?,
                "verified_members": checked,
            });
            r.caveat("horizon_limited", true);
            Ok(r)
        }
    }
}

fn tuple_json(parts: &[Vec<u32>]) -> Value {
    to_value(parts)
}

fn tuple_text(parts: &[Vec<u32>]) -> String {
    parts
        .iter()
        .map(|p| {
            let inner: Vec<String> = p.iter().map(u32::to_string).collect();
            format!("{{{}}}", inner.join(" "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn table_json(t: &MapTable, cap: usize) -> Value {
    let entries: Vec<(&FinSet, &FinSet)> = t.entries().iter().take(cap).collect();
    json!({
        "domain": t.domain(),
        "codomain": t.codomain(),
        "entries": entries,
    })
}

fn read_table(path: &PathBuf) -> Result<MapTable, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    // Accept either a bare table or a `map-build` report.
    let t = v.pointer("/outputs/table").unwrap_or(&v);
    let field = |k: &str| {
        t.get(k)
            .and_then(Value::as_str)
            .ok_or_else(|| Failure::config(format!("table has no {k:?} string")))
    };
    let mut table = MapTable::new(
        parse_family(field("domain")?)?,
        parse_family(field("codomain")?)?,
    );
    let entries: Vec<(Vec<u32>, Vec<u32>)> =
        serde_json::from_value(t.get("entries").cloned().unwrap_or(Value::Null))
            .map_err(|e| Failure::config(format!("table entries: {e}")))?;
    for (k, v) in entries {
        table.insert(FinSet::new(k)?, FinSet::new(v)?)?;
    }
    Ok(table)
}

fn plegma_cmd(cli: &Cli, c: &PlegmaCmd) -> Result<Report, Failure> {
    match c {
        PlegmaCmd::Check { sets } => {
            let parts: Vec<FinSet> = sets
                .iter()
                .map(|s| parse_set(s))
                .collect::<Result<_, _>>()?;
            let mut r = Report::new("plegma check");
            r.input("sets", &parts);
            r.outputs = json!({ "plegma": is_plegma(&parts)? });
            Ok(r)
        }
        PlegmaCmd::Enum {
            family,
            l,
            seq,
            first_min,
        } => {
            let (f, ls) = (parse_family(family)?, parse_seq(seq)?);
            let cfg = EnumConfig {
                l: *l,
                first_min: *first_min,
                budget: cli.budget,
                horizon: cli.horizon.unwrap_or(12),
            };
            let mut tuples: Vec<Vec<Vec<u32>>> = Vec::new();
            let mut lengths_ok = true;
            let summary = enumerate_plm(&f, &ls, &cfg, |parts| {
                lengths_ok &= parts.windows(2).all(|w| w[0].len() <= w[1].len());
                tuples.push(parts.to_vec());
                ControlFlow::Continue(())
            })?;
            let mut r = Report::new("plegma enum");
            r.input("family", &f)
                .input("l", l)
                .input("seq", &ls)
                .input("first_min", first_min)
                .input("enum_horizon", cfg.horizon);
            r.table = Some((
                vec!["index".into(), "tuple".into()],
                tuples
                    .iter()
                    .enumerate()
                    .map(|(i, t)| vec![(i + 1).to_string(), tuple_text(t)])
                    .collect(),
            ));
            r.outputs = json!({
                "count": summary.yielded,
                "tuples": tuples.iter().map(|t| tuple_json(t)).collect::<Vec<_>>(),
                "lengths_nondecreasing": lengths_ok,
            });
            r.caveat("horizon_limited", summary.horizon_limited)
                .caveat("budget_exhausted", summary.budget_exhausted);
            Ok(r)
        }
        PlegmaCmd::Path {
            family,
            s0,
            s,
            seq,
            max_len,
        } => {
            let (f, ls) = (parse_family(family)?, parse_seq(seq)?);
            let (a, b) = (parse_set(s0)?, parse_set(s)?);
            let h = cli.horizon.unwrap_or(20);
            let path = path_bfs(&f, &ls, &a, &b, *max_len, h)?;
            let mut r = Report::new("plegma path");
            r.input("family", &f)
                .input("seq", &ls)
                .input("s0", &a)
                .input("s", &b)
                .input("max_len", max_len)
                .input("graph_horizon", h);
            r.outputs = json!({ "length": path.len() - 1, "path": path });
            r.caveat("horizon_limited", true);
            Ok(r)
        }
        PlegmaCmd::MapBuild { g, f, m, max_keys } => {
            let (gf, ff) = (parse_family(g)?, parse_family(f)?);
            let mseq = m.as_deref().map(parse_seq).transpose()?;
            let h = cli.horizon.unwrap_or(60);
            let cfg = PreservingMapConfig {
                m: mseq,
                max_keys: *max_keys,
            };
            let pm = construct_preserving_map(&gf, &ff, h, &cfg)?;
            let rep = map_report(&pm.table, None);
            let cap = cli.budget.map_or(usize::MAX, |b| b as usize);
            let mut r = Report::new("plegma map-build");
            r.input("g", &gf)
                .input("f", &ff)
                .input("m", &pm.m)
                .input("max_keys", max_keys)
                .input("map_horizon", h);
            r.outputs = json!({
                "order_domain": pm.order_domain,
                "order_codomain": pm.order_codomain,
                "l0": pm.l0.values(h.min(pm.l0.horizon()))?,
                "n": pm.n,
                "keys": pm.table.len(),
                "uncovered": pm.uncovered,
                "index_guarantee": pm.index_guarantee,
                "report": rep,
                "table": table_json(&pm.table, cap),
            });
            r.caveat("keys_truncated", pm.keys_truncated)
                .caveat("entries_truncated", pm.table.len() > cap)
                .caveat("horizon_limited", true);
            if pm.index_guarantee.failures > 0 {
                r.violation = Some("index guarantee failed".into());
            } else if rep.violating_pairs > 0 || rep.reversed_pairs > 0 {
                r.violation = Some("constructed map is not plegma preserving".into());
            }
            Ok(r)
        }
        PlegmaCmd::MapReport(src) => {
            let (table, source) = match (&src.choice.table, src.choice.shift, &src.choice.coding) {
                (Some(p), _, _) => (read_table(p)?, json!({ "table": p.display().to_string() })),
                (_, Some(n), _) => (
                    shift_map(n, src.domain_max)?,
                    json!({ "shift": n, "domain_max": src.domain_max }),
                ),
                (_, _, Some(g)) => {
                    let gf = parse_family(g)?;
                    (
                        interval_coding(gf.clone(), src.domain_max)?,
                        json!({ "coding": gf, "domain_max": src.domain_max }),
                    )
                }
                _ => return Err(Failure::config("a map source is required")),
            };
            let rep = map_report(&table, cli.budget);
            let mut r = Report::new("plegma map-report");
            r.inputs.insert("source".into(), source);
            r.input("domain", table.domain())
                .input("codomain", table.codomain());
            r.caveat("truncated", rep.truncated);
            r.outputs = to_value(rep);
            Ok(r)
        }
        PlegmaCmd::Union(u) => {
            let mut r = Report::new("plegma union");
            match &u.decode {
                Some(text) => {
                    let f = parse_family(u.family.as_deref().expect("required by clap"))?;
                    let l = u.l.expect("required by clap");
                    let set = parse_set(text)?;
                    let t = union_decode(&f, &set, l)?;
                    r.input("family", &f).input("union", &set).input("l", l);
                    r.outputs = json!({ "tuple": t.parts() });
                }
                None => {
                    if u.sets.is_empty() {
                        return Err(Failure::config("give the parts to encode or --decode"));
                    }
                    let parts: Vec<FinSet> = u
                        .sets
                        .iter()
                        .map(|s| parse_set(s))
                        .collect::<Result<_, _>>()?;
                    let t = PlegmaTuple::new(parts)?;
                    let (set, l) = union_encode(&t)?;
                    r.input("sets", t.parts());
                    r.outputs = json!({ "union": set, "l": l });
                }
            }
            Ok(r)
        }
    }
}

struct SmInputs {
    f: FamilySpec,
    q: FSeqSpec,
    n: NormSpec,
    l: SeqSet,
}

fn sm_inputs(c: &SmCommon, r: &mut Report) -> Result<SmInputs, Failure> {
    let inputs = SmInputs {
        f: parse_family(&c.family)?,
        q: FSeqSpec::parse(&c.fseq, DSL_HORIZON)?,
        n: NormSpec::parse(&c.norm, DSL_HORIZON)?,
        l: parse_seq(&c.seq)?,
    };
    r.input("family", &inputs.f)
        .input("fseq", &inputs.q)
        .input("norm", &inputs.n)
        .input("seq", &inputs.l);
    Ok(inputs)
}

fn sm_cmd(cli: &Cli, c: &SmCmd) -> Result<Report, Failure> {
    let horizon = cli.horizon.unwrap_or(20);
    let est_cfg = |threshold: u32| EstimateConfig {
        threshold,
        budget: cli.budget,
        horizon,
    };
    match c {
        SmCmd::Estimate { common, coeffs, l } => {
            let mut r = Report::new("sm estimate");
            let s = sm_inputs(common, &mut r)?;
            let a: Vec<f64> = parse_list(coeffs, "coefficients")?;
            r.input("coeffs", &a)
                .input("l", l)
                .input("enum_horizon", horizon);
            let rep = sm_estimate_batch(&s.f, &s.q, &s.n, &[a], &s.l, &est_cfg(*l))?
                .pop()
                .expect("one report");
            r.caveat("estimate_only", true)
                .caveat("horizon_limited", rep.horizon_limited)
                .caveat("budget_exhausted", rep.budget_exhausted);
            r.outputs = to_value(rep);
            Ok(r)
        }
        SmCmd::Converge {
            common,
            coeffs,
            thresholds,
        } => {
            let mut r = Report::new("sm converge");
            let s = sm_inputs(common, &mut r)?;
            let a: Vec<f64> = parse_list(coeffs, "coefficients")?;
            let ts: Vec<u32> = parse_list(thresholds, "thresholds")?;
            r.input("coeffs", &a)
                .input("thresholds", &ts)
                .input("enum_horizon", horizon);
            let reps = sm_converge(&s.f, &s.q, &s.n, &a, &s.l, &ts, &est_cfg(1))?;
            r.table = Some((
                ["threshold", "tuple_count", "min", "max", "mean", "spread"]
                    .map(String::from)
                    .to_vec(),
                reps.iter()
                    .map(|e| {
                        vec![
                            e.threshold.to_string(),
                            e.tuple_count.to_string(),
                            e.min.to_string(),
                            e.max.to_string(),
                            e.mean.to_string(),
                            e.spread.to_string(),
                        ]
                    })
                    .collect(),
            ));
            r.caveat("estimate_only", true)
                .caveat("horizon_limited", reps.iter().any(|e| e.horizon_limited))
                .caveat("budget_exhausted", reps.iter().any(|e| e.budget_exhausted));
            r.outputs = json!({ "reports": reps });
            Ok(r)
        }
        SmCmd::Probe { common, mode, l } => {
            let mut r = Report::new("sm probe");
            let s = sm_inputs(common, &mut r)?;
            let m = ProbeMode::parse(mode)?;
            r.input("mode", m.to_string())
                .input("l", l)
                .input("enum_horizon", horizon);
            let rep = probe(
                &s.f,
                &s.q,
                &s.n,
                &s.l,
                m,
                &ProbeConfig {
                    first_min: *l,
                    budget: cli.budget,
                    horizon,
                },
            )?;
            r.caveat("estimate_only", true);
            r.outputs = to_value(rep);
            Ok(r)
        }
        SmCmd::Diagnose { common, k, grid, l } => {
            let mut r = Report::new("sm diagnose");
            let s = sm_inputs(common, &mut r)?;
            let g: Vec<f64> = match grid {
                Some(t) => parse_list(t, "grid")?,
                None => DEFAULT_GRID.to_vec(),
            };
            r.input("k", k)
                .input("grid", &g)
                .input("l", l)
                .input("enum_horizon", horizon);
            let rep = basis_diagnostics(&s.f, &s.q, &s.n, &s.l, *k, &g, &est_cfg(*l))?;
            r.caveat("estimate_only", true);
            r.outputs = to_value(rep);
            Ok(r)
        }
        SmCmd::Singular {
            common,
            n_list,
            tolerance,
        } => {
            let mut r = Report::new("sm singular");
            let s = sm_inputs(common, &mut r)?;
            let ns: Vec<usize> = parse_list(n_list, "n list")?;
            let cfg = SingularConfig {
                n_list: ns.clone(),
                horizon: cli.horizon.unwrap_or(4096),
                tolerance: *tolerance,
                ..SingularConfig::default()
            };
            r.input("n_list", &ns)
                .input("tolerance", tolerance)
                .input("enum_horizon", cfg.horizon);
            let rep = singular_analysis(&s.f, &s.q, &s.n, &s.l, &cfg)?;
            r.caveat("estimate_only", true);
            r.outputs = to_value(rep);
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(args: &[&str]) -> Outcome {
        run(std::iter::once("plegma").chain(args.iter().copied()))
    }

    fn outputs(args: &[&str]) -> Value {
        let o = out(args);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let v: Value = serde_json::from_str(&o.stdout).unwrap();
        v["outputs"].clone()
    }

    #[test]
    fn family_order_verb() {
        assert_eq!(outputs(&["family", "order", "rxi(w^2)"])["order"], "w^2");
    }

    #[test]
    fn plegma_check_verb() {
        assert_eq!(
            outputs(&["plegma", "check", "{1,3}", "{2,4}"])["plegma"],
            true
        );
        assert_eq!(
            outputs(&["plegma", "check", "{1,3}", "{2,3}"])["plegma"],
            false
        );
    }

    #[test]
    fn sm_estimate_verb() {
        let o = outputs(&[
            "sm",
            "estimate",
            "--family",
            "cube(2)",
            "--fseq",
            "unitmax",
            "--norm",
            "lp(2)",
            "--coeffs",
            "1,1",
            "--l",
            "1",
            "--horizon",
            "10",
        ]);
        assert_eq!(o["min"].as_f64().unwrap(), 2f64.sqrt());
        assert_eq!(o["max"], o["min"]);
        assert_eq!(o["spread"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(out(&["family", "order", "cube("]).code, EXIT_CONFIG);
        assert_eq!(out(&["nonsense"]).code, EXIT_CONFIG);
        assert_eq!(
            out(&["--horizon", "0", "family", "order", "cube(1)"]).code,
            EXIT_CONFIG
        );
        assert_eq!(
            out(&["--horizon", "200", "family", "materialize", "cube(1)"]).code,
            EXIT_HORIZON
        );
        assert_eq!(
            out(&["--format", "csv", "family", "order", "cube(1)"]).code,
            EXIT_CONFIG
        );
        assert_eq!(out(&["--help"]).code, EXIT_OK);
    }

    #[test]
    fn csv_enum() {
        let o = out(&[
            "--format",
            "csv",
            "--horizon",
            "4",
            "plegma",
            "enum",
            "cube(1)",
            "--l",
            "2",
        ]);
        assert_eq!(o.code, 0);
        assert_eq!(o.stdout.lines().count(), 7);
        assert_eq!(o.stdout.lines().nth(1), Some("1,{1} {2}"));
    }

    #[test]
    fn union_roundtrip_verb() {
        let o = outputs(&["plegma", "union", "{1,3}", "{2,4}"]);
        assert_eq!(o["union"], json!([1, 2, 3, 4]));
        let o = outputs(&[
            "plegma",
            "union",
            "--decode",
            "{1,2,3,4}",
            "--family",
            "cube(2)",
            "--l",
            "2",
        ]);
        assert_eq!(o["tuple"], json!([[1, 3], [2, 4]]));
    }

    #[test]
    fn map_report_sources() {
        let o = outputs(&["plegma", "map-report", "--shift", "3", "--domain-max", "9"]);
        assert!(o["violating_pairs"].as_u64().unwrap() >= 1);
        let o = outputs(&[
            "plegma",
            "map-report",
            "--coding",
            "max(hat(fmin(1,0)))",
            "--domain-max",
            "10",
        ]);
        assert_eq!(o["violating_pairs"], o["pairs_examined"]);
    }

    #[test]
    fn text_format() {
        let o = out(&["--format", "text", "family", "order", "cube(3)"]);
        assert!(o.stdout.contains("order: 3\n"));
    }
}
