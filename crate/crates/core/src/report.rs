//! Command layer behind the `gausshor` binary: configuration merging, the five
//! subcommands, and the versioned CSV/JSON record format.
//!
//! Every table has the columns `label,value,annotation`. A document is a
//! sequence of named sections; sections flagged as distributions re-sum to one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::Ratio;
use serde::Deserialize;
use serde_json::{json, Map, Number, Value};

use crate::error::{Error, Result};
use crate::kernels::{closed_w_sq, eval_g, eval_truncated, eval_w, g_of};
use crate::numtheory::{factor_semiprime, gcd_conv, Semiprime};
use crate::shor_gauss::{
    analyze_peaks, branch_probs, check_register, factor_driver, min_qubits, peak_mass_bounds,
    post_qft_distribution, Branch, DriverOptions, DriverResult, TrialMode,
};
use crate::state::{purity_closed, Distribution};
use crate::superposition::{
    factor_mass_shared_closed, factor_mass_zero_closed, factor_multiple_mass, run_exact,
    sample_factor_driver, ExactRun, QubitRun, RunMode,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Semiprimes used by `sweep` when no `--n` list is given.
pub const DEFAULT_SWEEP: [u64; 7] = [15, 21, 33, 35, 55, 77, 91];

pub const EXIT_OK: i32 = 0;
pub const EXIT_DRIVER_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GaussTable,
    ShorGauss,
    Superposition,
    Purity,
    Sweep,
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gauss-table" => Command::GaussTable,
            "shor-gauss" => Command::ShorGauss,
            "superposition" => Command::Superposition,
            "purity" => Command::Purity,
            "sweep" => Command::Sweep,
            other => return Err(invalid(format!("unknown command '{other}'"))),
        })
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GaussTable => "gauss-table",
            Command::ShorGauss => "shor-gauss",
            Command::Superposition => "superposition",
            Command::Purity => "purity",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(invalid(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussKind {
    Standard,
    W,
    Truncated,
    G,
}

impl FromStr for GaussKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "standard" => GaussKind::Standard,
            "w" => GaussKind::W,
            "truncated" => GaussKind::Truncated,
            "g" => GaussKind::G,
            other => return Err(invalid(format!("unknown kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Pb,
    Purity,
    Conditional,
    Success,
}

impl FromStr for ReportKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pb" => ReportKind::Pb,
            "purity" => ReportKind::Purity,
            "conditional" => ReportKind::Conditional,
            "success" => ReportKind::Success,
            other => return Err(invalid(format!("unknown report '{other}'"))),
        })
    }
}

/// `n`, `unit`, `factor7` or `factor:7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSpec {
    N,
    Unit,
    Factor(u64),
}

impl FromStr for BranchSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" | "N" => Ok(BranchSpec::N),
            "unit" | "1" => Ok(BranchSpec::Unit),
            _ => s
                .strip_prefix("factor")
                .map(|rest| rest.trim_start_matches([':', '=']))
                .and_then(|f| f.parse().ok())
                .map(BranchSpec::Factor)
                .ok_or_else(|| invalid(format!("unknown branch '{s}'"))),
        }
    }
}

impl BranchSpec {
    fn resolve(self) -> Branch {
        match self {
            BranchSpec::N => Branch::CaseN,
            BranchSpec::Unit => Branch::CaseUnit,
            BranchSpec::Factor(f) => Branch::CaseFactor(f),
        }
    }
}

/// One integer, a comma-separated list, or a TOML array.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum NList {
    One(u64),
    Many(Vec<u64>),
    Text(String),
}

impl NList {
    pub fn values(&self) -> Result<Vec<u64>> {
        match self {
            NList::One(n) => Ok(vec![*n]),
            NList::Many(v) => Ok(v.clone()),
            NList::Text(t) => t
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u64>()
                        .map_err(|_| invalid(format!("bad n '{x}'")))
                })
                .collect(),
        }
    }
}

/// Unresolved settings from a config file or from flags; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct Settings {
    pub command: Option<String>,
    pub n: Option<NList>,
    pub q: Option<u32>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub branch: Option<String>,
    pub n0: Option<u64>,
    pub mode: Option<String>,
    pub kind: Option<String>,
    pub terms: Option<u64>,
    pub ell: Option<u64>,
    pub report: Option<String>,
    pub format: Option<String>,
    #[serde(alias = "output_path")]
    pub output: Option<PathBuf>,
    #[serde(alias = "allow-small-register")]
    pub allow_small_register: Option<bool>,
}

impl Settings {
    /// Parses `key = value` lines.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {}", e.message())))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fields set in `over` win.
    pub fn overridden_by(self, over: Settings) -> Settings {
        Settings {
            command: over.command.or(self.command),
            n: over.n.or(self.n),
            q: over.q.or(self.q),
            trials: over.trials.or(self.trials),
            seed: over.seed.or(self.seed),
            branch: over.branch.or(self.branch),
            n0: over.n0.or(self.n0),
            mode: over.mode.or(self.mode),
            kind: over.kind.or(self.kind),
            terms: over.terms.or(self.terms),
            ell: over.ell.or(self.ell),
            report: over.report.or(self.report),
            format: over.format.or(self.format),
            output: over.output.or(self.output),
            allow_small_register: over.allow_small_register.or(self.allow_small_register),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: Command,
    /// Every requested `n`; all commands except `sweep` use the first.
    pub ns: Vec<u64>,
    pub q: Option<u32>,
    pub trials: u64,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub allow_small_register: bool,
    pub branch: Option<BranchSpec>,
    pub n0: Option<u64>,
    pub mode: Option<String>,
    pub kind: Option<GaussKind>,
    pub terms: Option<u64>,
    pub ell: Option<u64>,
    pub report: Option<ReportKind>,
}

impl RunConfig {
    pub fn resolve(settings: Settings) -> Result<Self> {
        let command: Command = settings
            .command
            .as_deref()
            .ok_or_else(|| invalid("no command given".into()))?
            .parse()?;
        let ns = match settings.n {
            Some(list) => list.values()?,
            None if command == Command::Sweep => DEFAULT_SWEEP.to_vec(),
            None => return Err(invalid("--n is required".into())),
        };
        if ns.is_empty() {
            return Err(invalid("--n is empty".into()));
        }
        Ok(Self {
            command,
            ns,
            q: settings.q,
            trials: settings.trials.unwrap_or(0),
            seed: settings.seed.unwrap_or(0),
            output_path: settings.output,
            format: settings
                .format
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default(),
            allow_small_register: settings.allow_small_register.unwrap_or(false),
            branch: settings.branch.as_deref().map(str::parse).transpose()?,
            n0: settings.n0,
            mode: settings.mode,
            kind: settings.kind.as_deref().map(str::parse).transpose()?,
            terms: settings.terms,
            ell: settings.ell,
            report: settings.report.as_deref().map(str::parse).transpose()?,
        })
    }

    pub fn n(&self) -> u64 {
        self.ns[0]
    }

    /// Provenance line; the output path is left out so that runs into
    /// different directories stay byte-identical.
    fn provenance(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("command".to_string(), self.command.name().to_string()),
            (
                "n".to_string(),
                self.ns
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("seed".to_string(), self.seed.to_string()),
            ("trials".to_string(), self.trials.to_string()),
        ];
        let mut opt = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        opt("q", self.q.map(|q| q.to_string()));
        opt(
            "branch",
            self.branch.map(|b| format!("{b:?}").to_lowercase()),
        );
        opt("n0", self.n0.map(|x| x.to_string()));
        opt("mode", self.mode.clone());
        opt("kind", self.kind.map(|k| format!("{k:?}").to_lowercase()));
        opt("terms", self.terms.map(|x| x.to_string()));
        opt("ell", self.ell.map(|x| x.to_string()));
        opt(
            "report",
            self.report.map(|r| format!("{r:?}").to_lowercase()),
        );
        if self.allow_small_register {
            out.push(("allow_small_register".into(), "true".into()));
        }
        out
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionRecord {
    pub label: u64,
    pub value: f64,
    pub annotation: String,
}

impl DistributionRecord {
    pub fn new(label: u64, value: f64, annotation: impl Into<String>) -> Self {
        Self {
            label,
            value,
            annotation: annotation.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub distribution: bool,
    pub records: Vec<DistributionRecord>,
}

impl Section {
    pub fn table(name: impl Into<String>, records: Vec<DistributionRecord>) -> Self {
        Self {
            name: name.into(),
            distribution: false,
            records,
        }
    }

    pub fn distribution(name: impl Into<String>, records: Vec<DistributionRecord>) -> Self {
        Self {
            name: name.into(),
            distribution: true,
            records,
        }
    }

    pub fn total(&self) -> f64 {
        self.records.iter().map(|r| r.value).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub config: Vec<(String, String)>,
    pub sections: Vec<Section>,
    pub summary: String,
}

/// 17 significant digits.
pub fn format_value(x: f64) -> String {
    let text = format!("{x:.16e}");
    match text.split_once('e') {
        Some((mantissa, exp)) if !exp.starts_with('-') => format!("{mantissa}e+{exp}"),
        _ => text,
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Document {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema={SCHEMA_VERSION}\n");
        let cfg: Vec<String> = self
            .config
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "# config {}", cfg.join(" "));
        for s in &self.sections {
            let kind = if s.distribution {
                "distribution"
            } else {
                "table"
            };
            let _ = writeln!(out, "# section={} {kind}", s.name);
            out.push_str("label,value,annotation\n");
            for r in &s.records {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    r.label,
                    format_value(r.value),
                    csv_field(&r.annotation)
                );
            }
        }
        let _ = writeln!(out, "# summary {}", self.summary);
        out
    }

    pub fn to_json(&self) -> String {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let sections: Vec<Value> = self
            .sections
            .iter()
            .map(|s| {
                let records: Vec<Value> = s
                    .records
                    .iter()
                    .map(|r| {
                        json!({
                            "label": r.label,
                            "value": Value::Number(
                                Number::from_str(&format_value(r.value)).expect("finite value")
                            ),
                            "annotation": r.annotation,
                        })
                    })
                    .collect();
                json!({"name": s.name, "distribution": s.distribution, "records": records})
            })
            .collect();
        let doc = json!({
            "schema": SCHEMA_VERSION,
            "config": config,
            "sections": sections,
            "summary": self.summary,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
        text.push('\n');
        text
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Section name, distribution flag, and `(label, value text, annotation)` rows.
pub type ParsedSection = (String, bool, Vec<(u64, String, String)>);

/// Reads back the sections of a CSV document, values as emitted.
pub fn parse_csv(text: &str) -> Result<Vec<ParsedSection>> {
    let mut lines = text.lines();
    if lines.next() != Some("# schema=1") {
        return Err(invalid("missing schema header".into()));
    }
    let mut out: Vec<ParsedSection> = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("# section=") {
            let (name, kind) = rest.rsplit_once(' ').unwrap_or((rest, "table"));
            out.push((name.to_string(), kind == "distribution", Vec::new()));
        } else if line.starts_with('#') || line == "label,value,annotation" {
            continue;
        } else {
            let mut parts = line.splitn(3, ',');
            let label = parts.next().and_then(|l| l.parse().ok());
            let value = parts.next();
            let annotation = parts.next().unwrap_or("");
            let (Some(label), Some(value), Some(section)) = (label, value, out.last_mut()) else {
                return Err(invalid(format!("malformed row '{line}'")));
            };
            let annotation = annotation.trim_matches('"').replace("\"\"", "\"");
            section.2.push((label, value.to_string(), annotation));
        }
    }
    Ok(out)
}

/// Reads back the sections of a JSON document with numbers as emitted.
pub fn parse_json(text: &str) -> Result<Vec<ParsedSection>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
    if doc["schema"] != json!(SCHEMA_VERSION) {
        return Err(invalid("missing schema field".into()));
    }
    let sections = doc["sections"]
        .as_array()
        .ok_or_else(|| invalid("missing sections".into()))?;
    sections
        .iter()
        .map(|s| {
            let records = s["records"]
                .as_array()
                .ok_or_else(|| invalid("missing records".into()))?
                .iter()
                .map(|r| {
                    let label = r["label"]
                        .as_u64()
                        .ok_or_else(|| invalid("bad label".into()))?;
                    let value = match &r["value"] {
                        Value::Number(x) => x.to_string(),
                        _ => return Err(invalid("bad value".into())),
                    };
                    let annotation = r["annotation"].as_str().unwrap_or("").to_string();
                    Ok((label, value, annotation))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((
                s["name"].as_str().unwrap_or("").to_string(),
                s["distribution"].as_bool().unwrap_or(false),
                records,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub document: Document,
    pub exit_code: i32,
    /// Messages for the error stream.
    pub notices: Vec<String>,
}

/// Halves an even `n` until odd.
pub fn reduce_even(n: u64) -> Result<(u64, u32)> {
    if n == 0 {
        return Err(invalid("n must be positive".into()));
    }
    let halvings = n.trailing_zeros();
    Ok((n >> halvings, halvings))
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn class_annotation(ell: u64, n: u64) -> &'static str {
    let r = ell % n;
    match gcd_conv(r, n).expect("n is positive") {
        _ if r == 0 => "multiple-of-N",
        1 => "unit",
        _ => "factor-multiple",
    }
}

fn distribution_records(
    dist: &Distribution,
    mut note: impl FnMut(u64) -> String,
) -> Vec<DistributionRecord> {
    dist.iter()
        .map(|(l, p)| DistributionRecord::new(l, p, note(l)))
        .collect()
}

/// Runs one configured command. Invalid input surfaces as `Err`; an
/// exhausted driver is an `Ok` outcome with exit code 1.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let mut notices = Vec::new();
    let mut cfg = cfg.clone();
    for n in cfg.ns.iter_mut() {
        let (odd, halvings) = reduce_even(*n)?;
        if halvings > 0 {
            notices.push(format!(
                "notice: n={} is even; halved {halvings} time(s) to {odd}",
                *n
            ));
            *n = odd;
        }
    }
    let (sections, summary, exit_code) = match cfg.command {
        Command::GaussTable => cmd_gauss_table(&cfg)?,
        Command::ShorGauss => cmd_shor_gauss(&cfg)?,
        Command::Superposition => cmd_superposition(&cfg)?,
        Command::Purity => cmd_purity(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
    };
    Ok(Outcome {
        document: Document {
            config: cfg.provenance(),
            sections,
            summary,
        },
        exit_code,
        notices,
    })
}

type CommandOutput = (Vec<Section>, String, i32);

fn cmd_gauss_table(cfg: &RunConfig) -> Result<CommandOutput> {
    let n = cfg.n();
    let kind = cfg
        .kind
        .ok_or_else(|| invalid("gauss-table needs --kind".into()))?;
    g_of(1, n)?;
    let records: Vec<DistributionRecord> = match kind {
        GaussKind::Standard => (0..n)
            .map(|ell| {
                let g = gcd_conv(ell, n).expect("n is positive");
                DistributionRecord::new(ell, eval_g(ell, n).norm_sqr(), format!("gcd={g}"))
            })
            .collect(),
        GaussKind::G => (1..=n)
            .map(|ell| {
                let g = g_of(ell, n)?;
                let note = match class_annotation(ell, n) {
                    "unit" => String::new(),
                    c => c.to_string(),
                };
                Ok(DistributionRecord::new(ell, g as f64, note))
            })
            .collect::<Result<_>>()?,
        GaussKind::W => {
            let n0 = cfg
                .n0
                .ok_or_else(|| invalid("--kind w needs --n0".into()))?;
            let s = factor_semiprime(n).ok();
            (0..n)
                .map(|ell| {
                    let mut note = class_annotation(ell, n).to_string();
                    if let Some(s) = &s {
                        let _ = write!(note, " closed={}", closed_w_sq(n0, ell, s));
                    }
                    DistributionRecord::new(ell, eval_w(n0, ell, n).norm_sqr(), note)
                })
                .collect()
        }
        GaussKind::Truncated => {
            let terms = cfg
                .terms
                .ok_or_else(|| invalid("--kind truncated needs --terms".into()))?;
            let ells: Vec<u64> = match cfg.ell {
                Some(ell) => vec![ell],
                None => (1..=n).collect(),
            };
            ells.into_iter()
                .map(|ell| {
                    let a = eval_truncated(ell, n, terms)?;
                    let note = if n.is_multiple_of(ell) { "divisor" } else { "" };
                    Ok(DistributionRecord::new(ell, a.norm_sqr(), note))
                })
                .collect::<Result<_>>()?
        }
    };
    let name = format!("{kind:?}").to_lowercase();
    let summary = format!("n={n} kind={name} rows={}", records.len());
    let mut sections = vec![Section::table(name, records)];
    if kind == GaussKind::Truncated && cfg.ell.is_none() {
        sections.push(truncated_comparison(n, &sections[0].records));
    }
    Ok((sections, summary, EXIT_OK))
}

/// Signal on factors against the rest, for the truncated sum (proper
/// divisors only) and for `|G|²/N²` (all factor multiples).
fn truncated_comparison(n: u64, truncated: &[DistributionRecord]) -> Section {
    fn mean(xs: &[f64]) -> f64 {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    }
    let proper = |l: u64| l > 1 && l < n;
    let split = |pred: &dyn Fn(u64) -> bool, val: &dyn Fn(u64) -> f64| -> (f64, f64) {
        let (mut yes, mut no) = (Vec::new(), Vec::new());
        for l in (1..n).filter(|&l| proper(l)) {
            if pred(l) {
                yes.push(val(l))
            } else {
                no.push(val(l))
            }
        }
        (mean(&yes), mean(&no))
    };
    let a = |l: u64| truncated[(l - 1) as usize].value;
    let g = |l: u64| eval_g(l, n).norm_sqr() / (n * n) as f64;
    let (a_div, a_rest) = split(&|l| n.is_multiple_of(l), &a);
    let (g_mult, g_unit) = split(&|l| gcd_conv(l, n).is_ok_and(|d| d > 1), &g);
    let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else { 0.0 };
    Section::table(
        "comparison",
        vec![
            DistributionRecord::new(0, a_div, "truncated mean on proper divisors"),
            DistributionRecord::new(1, a_rest, "truncated mean on non-divisors"),
            DistributionRecord::new(2, ratio(a_div, a_rest), "truncated ratio"),
            DistributionRecord::new(3, g_mult, "gauss mean on factor multiples"),
            DistributionRecord::new(4, g_unit, "gauss mean on units"),
            DistributionRecord::new(5, ratio(g_mult, g_unit), "gauss ratio"),
        ],
    )
}

fn branch_name(b: Branch) -> String {
    match b {
        Branch::CaseN => "N".to_string(),
        Branch::CaseFactor(f) => format!("factor{f}"),
        Branch::CaseUnit => "unit".to_string(),
    }
}

fn driver_section(name: &str, r: &DriverResult) -> Section {
    let records = r
        .records
        .iter()
        .map(|t| {
            let a = t.a_outcome.map_or("-".to_string(), |a| a.to_string());
            DistributionRecord::new(
                t.trial,
                t.factor.unwrap_or(0) as f64,
                format!("b={} a={a}", t.b_outcome),
            )
        })
        .collect();
    Section::table(name, records)
}

fn driver_summary(r: &DriverResult) -> (String, i32) {
    match r.factor {
        Some(f) => (
            format!("factor={f} trials={} seed={}", r.trials, r.seed),
            EXIT_OK,
        ),
        None => (
            format!("factor=none trials={} seed={}", r.trials, r.seed),
            EXIT_DRIVER_FAILED,
        ),
    }
}

fn cmd_shor_gauss(cfg: &RunConfig) -> Result<CommandOutput> {
    let n = cfg.n();
    let s = factor_semiprime(n)?;
    let q = cfg.q.unwrap_or_else(|| min_qubits(n));
    check_register(n, q, cfg.allow_small_register)?;
    let mode = match cfg.mode.as_deref() {
        None | Some("qft") => TrialMode::Qft,
        Some("direct") => TrialMode::DirectRead,
        Some(other) => {
            return Err(invalid(format!(
                "shor-gauss mode must be qft or direct, got '{other}'"
            )))
        }
    };
    let mut sections = Vec::new();
    let branches = branch_probs(&s, q)
        .into_iter()
        .map(|o| {
            DistributionRecord::new(
                o.kind.label(n),
                ratio_f64(o.probability),
                format!("{} exact={}", branch_name(o.kind), o.probability),
            )
        })
        .collect();
    sections.push(Section::distribution("branch_probs", branches));
    let mut summary = vec![format!("n={n} q={q}")];

    if let Some(spec) = cfg.branch {
        let branch = spec.resolve();
        let dist = post_qft_distribution(&s, q, branch)?;
        let periods = match branch {
            Branch::CaseFactor(f) => vec![f],
            Branch::CaseUnit => vec![s.p(), s.q()],
            Branch::CaseN => vec![n],
        };
        let reports = periods
            .iter()
            .map(|&p| analyze_peaks(&dist, p, n, q))
            .collect::<Result<Vec<_>>>()?;
        let name = branch_name(branch);
        let records = distribution_records(&dist, |m| {
            let mut tags = Vec::new();
            for r in &reports {
                if let Some(j) = r.positions.iter().position(|&x| x == m) {
                    tags.push(format!("m_{} peak j={}", r.period, j + 1));
                }
            }
            tags.join("; ")
        });
        sections.push(Section::distribution(
            format!("post_qft branch={name}"),
            records,
        ));
        let bounds = peak_mass_bounds(&s);
        for r in &reports {
            let peaks = r
                .positions
                .iter()
                .enumerate()
                .map(|(j, &m)| {
                    DistributionRecord::new(
                        j as u64 + 1,
                        dist.probs()[m as usize],
                        format!("m={m}"),
                    )
                })
                .collect();
            sections.push(Section::table(format!("peaks period={}", r.period), peaks));
            let mut stats = vec![
                DistributionRecord::new(0, r.mass, "mass"),
                DistributionRecord::new(1, r.dc, "dc"),
                DistributionRecord::new(2, r.max_on_peak, "max_on_peak"),
                DistributionRecord::new(3, r.max_off_structure, "max_off_structure"),
            ];
            if r.height_ratio().is_finite() {
                stats.push(DistributionRecord::new(4, r.height_ratio(), "height_ratio"));
            }
            let bound = match branch {
                Branch::CaseFactor(f) if f == s.p() => Some(bounds.factor_p.total_factor_peaks),
                Branch::CaseFactor(_) => Some(bounds.factor_q.total_factor_peaks),
                Branch::CaseUnit if r.period == s.p() => Some(bounds.unit.per_p_peak),
                Branch::CaseUnit => Some(bounds.unit.per_q_peak),
                Branch::CaseN => None,
            };
            if let Some(b) = bound {
                let what = if branch == Branch::CaseUnit {
                    "per_peak"
                } else {
                    "total"
                };
                stats.push(DistributionRecord::new(
                    5,
                    ratio_f64(b),
                    format!("bound_{what}={b}"),
                ));
            }
            sections.push(Section::table(
                format!("peak_summary period={}", r.period),
                stats,
            ));
            summary.push(format!("peak_mass_{}={}", r.period, format_value(r.mass)));
        }
    }

    let mut exit_code = EXIT_OK;
    if cfg.trials > 0 {
        let opts = DriverOptions {
            qubits: Some(q),
            allow_small_register: cfg.allow_small_register,
            mode,
        };
        let r = factor_driver(n, cfg.trials, cfg.seed, opts)?;
        sections.push(driver_section("driver", &r));
        let (line, code) = driver_summary(&r);
        summary = vec![line];
        exit_code = code;
    }
    Ok((sections, summary.join(" "), exit_code))
}

/// `r` written with denominator `N²`.
fn over_n_squared(r: Ratio<u64>, n: u64) -> String {
    format!("{}/{}", r * (n * n), n * n)
}

fn purity_records(run: &ExactRun, s: &Semiprime) -> (Vec<DistributionRecord>, String) {
    let measured = run.state().purity_a();
    let closed = purity_closed(s);
    let n = s.n();
    let closed_text = over_n_squared(closed, n);
    let gauss: f64 = (0..n).map(|ell| eval_g(ell, n).norm_sqr()).sum::<f64>() / (n as f64).powi(3);
    let records = vec![
        DistributionRecord::new(0, measured, "measured"),
        DistributionRecord::new(1, ratio_f64(closed), format!("closed={closed_text}")),
        DistributionRecord::new(2, gauss, "gauss_sum"),
    ];
    let summary = format!("purity={} closed={closed_text}", format_value(measured));
    (records, summary)
}

fn cmd_superposition(cfg: &RunConfig) -> Result<CommandOutput> {
    let n = cfg.n();
    let s = factor_semiprime(n)?;
    let mode = match cfg.mode.as_deref() {
        None | Some("exact") => RunMode::Exact,
        Some("qubit") => RunMode::Qubit(cfg.q.unwrap_or_else(|| min_qubits(n))),
        Some(other) => {
            return Err(invalid(format!(
                "superposition mode must be exact or qubit, got '{other}'"
            )))
        }
    };
    let wants = |r: ReportKind| cfg.report.is_none_or(|x| x == r);
    let mut sections = Vec::new();
    let mut summary = Vec::new();
    match mode {
        RunMode::Exact => {
            let run = run_exact(n)?;
            if wants(ReportKind::Pb) {
                let pb = run.p_b_distribution();
                let recs = distribution_records(&pb, |m| class_annotation(m, n).to_string());
                sections.push(Section::distribution("p_b", recs));
                summary.push(format!("p_b0={}", format_value(pb.prob(0))));
            }
            if wants(ReportKind::Success) {
                let m = run.success_mass();
                sections.push(Section::table(
                    "success_mass",
                    vec![
                        DistributionRecord::new(0, m.p_b_zero, "zero"),
                        DistributionRecord::new(1, m.p_b_factor_multiple, "factor-multiple"),
                        DistributionRecord::new(2, m.p_b_coprime, "coprime"),
                        DistributionRecord::new(3, m.total_useful, "total_useful"),
                    ],
                ));
                summary.push(format!("useful={}", format_value(m.total_useful)));
            }
            if wants(ReportKind::Purity) {
                let (recs, line) = purity_records(&run, &s);
                sections.push(Section::table("purity", recs));
                summary.push(line);
            }
            if wants(ReportKind::Conditional) {
                let n0s: Vec<u64> = match cfg.n0 {
                    Some(x) => vec![x % n],
                    None if cfg.report.is_some() => {
                        return Err(invalid("--report conditional needs --n0".into()))
                    }
                    None => Vec::new(),
                };
                for n0 in n0s {
                    let dist = run.conditional_a(n0)?;
                    let recs = distribution_records(&dist, |l| class_annotation(l, n).to_string());
                    sections.push(Section::distribution(format!("conditional n0={n0}"), recs));
                    let mass = factor_multiple_mass(&dist, n);
                    let closed = match gcd_conv(n0, n)? {
                        g if g == n => Some(factor_mass_zero_closed(&s)),
                        1 => None,
                        f => Some(factor_mass_shared_closed(&s, f)?),
                    };
                    let note = closed.map_or("closed=0".to_string(), |c| format!("closed={c}"));
                    sections.push(Section::table(
                        format!("factor_mass n0={n0}"),
                        vec![DistributionRecord::new(n0, mass, note)],
                    ));
                    summary.push(format!("factor_mass={}", format_value(mass)));
                }
            }
        }
        RunMode::Qubit(q) => {
            if cfg.report == Some(ReportKind::Purity) || cfg.report == Some(ReportKind::Success) {
                return Err(invalid("qubit mode reports pb or conditional only".into()));
            }
            let run = QubitRun::new(n, q)?;
            if wants(ReportKind::Pb) {
                let peaks = run.peak_bins();
                let recs = distribution_records(run.p_b_prime(), |m| {
                    peaks
                        .iter()
                        .position(|&b| b == m)
                        .map_or(String::new(), |j| format!("peak j={j}"))
                });
                sections.push(Section::distribution(format!("p_b_prime q={q}"), recs));
                summary.push(format!("q={q} peak_mass={}", format_value(run.peak_mass())));
            }
            if wants(ReportKind::Conditional) {
                match cfg.n0 {
                    Some(n0) => {
                        let (j, dist) = run.conditional_after_peak(n0)?;
                        let recs =
                            distribution_records(&dist, |l| class_annotation(l, n).to_string());
                        sections.push(Section::distribution(
                            format!("conditional n0={n0} j={j}"),
                            recs,
                        ));
                        summary.push(format!(
                            "j={j} factor_mass={}",
                            format_value(factor_multiple_mass(&dist, n))
                        ));
                    }
                    None if cfg.report.is_some() => {
                        return Err(invalid("--report conditional needs --n0".into()))
                    }
                    None => {}
                }
            }
        }
    }
    let mut exit_code = EXIT_OK;
    if cfg.trials > 0 {
        let r = sample_factor_driver(n, mode, cfg.trials, cfg.seed)?;
        sections.push(driver_section("driver", &r));
        let (line, code) = driver_summary(&r);
        summary.push(line);
        exit_code = code;
    }
    Ok((sections, summary.join(" "), exit_code))
}

fn cmd_purity(cfg: &RunConfig) -> Result<CommandOutput> {
    let n = cfg.n();
    let s = factor_semiprime(n)?;
    let run = run_exact(n)?;
    let (recs, summary) = purity_records(&run, &s);
    Ok((vec![Section::table("purity", recs)], summary, EXIT_OK))
}

fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut sections = Vec::new();
    let mut exit_code = EXIT_OK;
    let mut failures = Vec::new();
    for &n in &cfg.ns {
        let s = factor_semiprime(n)?;
        let run = run_exact(n)?;
        let m = run.success_mass();
        let q = min_qubits(n);
        let mut recs = vec![
            DistributionRecord::new(
                0,
                run.state().purity_a(),
                format!("purity closed={}", over_n_squared(purity_closed(&s), n)),
            ),
            DistributionRecord::new(1, m.p_b_zero, "p_b0"),
            DistributionRecord::new(2, m.total_useful, "useful"),
            DistributionRecord::new(
                3,
                run.factor_mass_a(0)?,
                format!("factor_mass_n0=0 closed={}", factor_mass_zero_closed(&s)),
            ),
        ];
        for (i, o) in branch_probs(&s, q).into_iter().enumerate() {
            recs.push(DistributionRecord::new(
                4 + i as u64,
                ratio_f64(o.probability),
                format!(
                    "branch {} q={q} exact={}",
                    branch_name(o.kind),
                    o.probability
                ),
            ));
        }
        if cfg.trials > 0 {
            let shor = factor_driver(n, cfg.trials, cfg.seed, DriverOptions::default())?;
            let sup = sample_factor_driver(n, RunMode::Exact, cfg.trials, cfg.seed)?;
            for (label, name, r) in [(8, "shor_gauss", &shor), (9, "superposition", &sup)] {
                let note = format!(
                    "{name} factor={} trials={}",
                    r.factor.map_or("none".to_string(), |f| f.to_string()),
                    r.trials
                );
                recs.push(DistributionRecord::new(
                    label,
                    r.factor.unwrap_or(0) as f64,
                    note,
                ));
                if !r.succeeded() {
                    exit_code = EXIT_DRIVER_FAILED;
                    failures.push(format!("{name}:{n}"));
                }
            }
        }
        sections.push(Section::table(
            format!("n={n} factors={}*{}", s.p(), s.q()),
            recs,
        ));
    }
    let mut summary = format!("swept={}", cfg.ns.len());
    if !failures.is_empty() {
        let _ = write!(summary, " failed={}", failures.join(","));
    }
    Ok((sections, summary, exit_code))
}

/// Writes the rendered document to the configured path or returns it for
/// standard output.
pub fn emit(cfg: &RunConfig, outcome: &Outcome) -> std::io::Result<Option<String>> {
    let text = outcome.document.render(cfg.format);
    match &cfg.output_path {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[(&str, &str)], command: &str) -> RunConfig {
        let mut text = format!("command = \"{command}\"\n");
        for (k, v) in args {
            let _ = writeln!(text, "{k} = {v}");
        }
        RunConfig::resolve(Settings::from_toml_str(&text).unwrap()).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::from_toml_str("command = \"purity\"\nn = 91\nseed = 3\n").unwrap();
        let flags = Settings {
            n: Some(NList::One(35)),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(file.overridden_by(flags)).unwrap();
        assert_eq!(cfg.ns, vec![35]);
        assert_eq!(cfg.seed, 3);
        assert!(Settings::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn n_list_forms() {
        assert_eq!(
            NList::Text("15, 21,35".into()).values().unwrap(),
            vec![15, 21, 35]
        );
        let s = Settings::from_toml_str("n = [15, 21]").unwrap();
        assert_eq!(s.n.unwrap().values().unwrap(), vec![15, 21]);
    }

    #[test]
    fn branch_spec_parsing() {
        assert_eq!(
            "factor7".parse::<BranchSpec>().unwrap(),
            BranchSpec::Factor(7)
        );
        assert_eq!(
            "factor:13".parse::<BranchSpec>().unwrap(),
            BranchSpec::Factor(13)
        );
        assert_eq!("unit".parse::<BranchSpec>().unwrap(), BranchSpec::Unit);
        assert!("factorx".parse::<BranchSpec>().is_err());
    }

    #[test]
    fn gauss_table_g_35() {
        let out = execute(&config(&[("n", "35"), ("kind", "\"g\"")], "gauss-table")).unwrap();
        let recs = &out.document.sections[0].records;
        assert_eq!(recs.len(), 35);
        assert_eq!(recs[4].annotation, "factor-multiple");
        assert_eq!(recs[6].annotation, "factor-multiple");
        assert_eq!(recs[34].annotation, "multiple-of-N");
        assert_eq!(recs[0].annotation, "");
    }

    #[test]
    fn gauss_table_w_zeros() {
        let out = execute(&config(
            &[("n", "91"), ("kind", "\"w\""), ("n0", "4")],
            "gauss-table",
        ))
        .unwrap();
        for r in &out.document.sections[0].records {
            if r.label % 7 == 0 || r.label % 13 == 0 {
                assert!(r.value < 1e-12, "ell={}", r.label);
            }
        }
    }

    #[test]
    fn truncated_comparison_table() {
        let out = execute(&config(
            &[("n", "91"), ("kind", "\"truncated\""), ("terms", "5")],
            "gauss-table",
        ))
        .unwrap();
        let cmp = &out.document.sections[1];
        assert_eq!(cmp.name, "comparison");
        assert!((cmp.records[0].value - 1.0).abs() < 1e-12);
        assert!(cmp.records[1].value < 1.0);
        // factor multiples carry gcd/N, units 1/N
        assert!(cmp.records[5].value > 7.0);
    }

    #[test]
    fn truncated_rejects_zero() {
        let cfg = config(
            &[
                ("n", "91"),
                ("kind", "\"truncated\""),
                ("terms", "5"),
                ("ell", "0"),
            ],
            "gauss-table",
        );
        assert!(execute(&cfg).is_err());
    }

    #[test]
    fn shor_gauss_register_guard() {
        assert!(execute(&config(&[("n", "91"), ("q", "11")], "shor-gauss")).is_err());
        let cfg = config(
            &[
                ("n", "91"),
                ("q", "11"),
                ("branch", "\"factor7\""),
                ("allow_small_register", "true"),
            ],
            "shor-gauss",
        );
        let out = execute(&cfg).unwrap();
        let peaks = out
            .document
            .sections
            .iter()
            .find(|s| s.name == "peaks period=7")
            .unwrap();
        let ms: Vec<&str> = peaks
            .records
            .iter()
            .map(|r| r.annotation.as_str())
            .collect();
        assert_eq!(&ms[..3], &["m=293", "m=585", "m=878"]);
    }

    #[test]
    fn purity_summary() {
        let out = execute(&config(
            &[("n", "91"), ("report", "\"purity\"")],
            "superposition",
        ))
        .unwrap();
        assert!(
            out.document.summary.starts_with("purity=3.92464"),
            "{}",
            out.document.summary
        );
        assert!(
            out.document.summary.ends_with("closed=325/8281"),
            "{}",
            out.document.summary
        );
    }

    #[test]
    fn even_input_is_halved() {
        let out = execute(&config(&[("n", "182")], "purity")).unwrap();
        assert_eq!(out.notices.len(), 1);
        assert!(out.document.summary.ends_with("closed=325/8281"));
        assert!(execute(&config(&[("n", "64")], "purity")).is_err());
    }

    #[test]
    fn csv_and_json_agree() {
        let cfg = config(
            &[("n", "21"), ("trials", "20"), ("seed", "2")],
            "superposition",
        );
        let out = execute(&cfg).unwrap();
        let csv = parse_csv(&out.document.to_csv()).unwrap();
        let json = parse_json(&out.document.to_json()).unwrap();
        assert_eq!(csv, json);
        for (name, dist, recs) in &csv {
            if *dist {
                let total: f64 = recs.iter().map(|r| r.1.parse::<f64>().unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn csv_quotes_annotations_with_commas() {
        let doc = Document {
            config: vec![],
            sections: vec![Section::table(
                "t",
                vec![DistributionRecord::new(1, 0.5, "a,b")],
            )],
            summary: String::new(),
        };
        let parsed = parse_csv(&doc.to_csv()).unwrap();
        assert_eq!(parsed[0].2[0].2, "a,b");
    }
}
