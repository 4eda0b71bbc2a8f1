use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use combkit::consistency::{
    check_get, check_ket, classical_embed, classical_embed_family, is_classical, verify_extension,
    Bases, CombFamily, ConsistencyReport, DistributionFamily, JointDistribution, FAMILY_TOL,
};
use combkit::format::{fmt_g17, Table};
use combkit::scenarios::{self, ScenarioParams, UrnConfig, SCENARIOS};
use combkit::{projective_instrument, Basis, ChoiChannel, Comb, Instrument, TimeLabel, TimeSet};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Like `print!`, but a closed stdout pipe is not an error.
macro_rules! out {
    ($($a:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout().lock(), $($a)*);
    }};
}

macro_rules! outln {
    ($($a:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($a)*);
    }};
}

/// Build process tensors and check consistency of multi-time families.
#[derive(Parser)]
#[command(name = "combkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a named scenario and evaluate its expectations (no name lists them).
    Scenario(ScenarioArgs),
    /// Contract a comb with one map per time, or tabulate instrument outcomes.
    Contract(ContractArgs),
    /// Restrict a comb to a subset of its times.
    Restrict(RestrictArgs),
    /// Check restriction consistency of a comb family.
    CheckGet(FamilyArgs),
    /// Check marginal consistency of a distribution family.
    CheckKet(FamilyArgs),
    /// Check classicality of a comb family with respect to fixed bases.
    Classical(ClassicalArgs),
    /// Embed a distribution (or distribution family) as diagonal combs.
    Embed(EmbedArgs),
    /// Check that a comb on the ground set restricts to every family member.
    VerifyExtension(ExtensionArgs),
}

#[derive(Clone, Copy, ValueEnum, Default, PartialEq)]
enum Format {
    #[default]
    Table,
    Json,
}

#[derive(Args)]
struct Common {
    /// Tolerance (entrywise max norm).
    #[arg(long, default_value_t = FAMILY_TOL, value_parser = parse_tol)]
    tol: f64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ScenarioArgs {
    name: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    system_dim: Option<usize>,
    #[arg(long)]
    env_dim: Option<usize>,
    /// Reference basis: z, x, or a JSON basis file.
    #[arg(long)]
    basis: Option<String>,
    /// Urn configuration file.
    #[arg(long)]
    urn: Option<PathBuf>,
    /// Family to write out instead of the report.
    #[arg(long)]
    emit: Option<String>,
    /// Where to write the emitted family (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ContractArgs {
    #[arg(long)]
    comb: PathBuf,
    /// JSON array of Choi maps, one per time in increasing order.
    #[arg(long, conflicts_with_all = ["instruments", "basis"])]
    maps: Option<PathBuf>,
    /// JSON array of instruments, one per time in increasing order.
    #[arg(long, conflicts_with = "basis")]
    instruments: Option<PathBuf>,
    /// Projective measurements: z, x, a comma list per time, or a JSON file.
    #[arg(long)]
    basis: Option<String>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct RestrictArgs {
    #[arg(long)]
    comb: PathBuf,
    #[arg(long)]
    subset: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long)]
    family: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ClassicalArgs {
    #[arg(long)]
    family: PathBuf,
    /// z, x, a comma list per time (e.g. z,x,z), or a JSON file.
    #[arg(long)]
    basis: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EmbedArgs {
    /// A single joint distribution.
    #[arg(long, required_unless_present = "family", conflicts_with = "family")]
    dist: Option<PathBuf>,
    /// A distribution family.
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtensionArgs {
    #[arg(long)]
    comb: PathBuf,
    #[arg(long)]
    family: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err("tolerance must be a positive finite number".into())
    }
}

/// Failure with a message for stderr; always exit 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Failure(format!(
            "{}: schema error at `{}`: {}",
            path.display(),
            if at.is_empty() { "." } else { &at },
            e.inner()
        ))
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")
            .map_err(|e| Failure(format!("cannot write {}: {e}", p.display()))),
        None => {
            outln!("{text}");
            Ok(())
        }
    }
}

fn named_basis(name: &str) -> Option<Basis> {
    match name {
        "z" => Some(Basis::z()),
        "x" => Some(Basis::x()),
        _ => None,
    }
}

/// Resolves `--basis` for the given times: a single name applies to every
/// time, a comma list gives one basis per time, anything else is a file
/// holding a basis or a map from time label to basis.
fn parse_bases(spec: &str, times: &TimeSet) -> Result<Bases, Failure> {
    if let Some(b) = named_basis(spec) {
        return Ok(times.iter().map(|t| (t.clone(), b.clone())).collect());
    }
    if spec.contains(',') {
        let names: Vec<&str> = spec.split(',').map(str::trim).collect();
        if names.len() != times.len() {
            return Err(Failure(format!(
                "basis list `{spec}` has {} entries for {} times",
                names.len(),
                times.len()
            )));
        }
        return names
            .iter()
            .zip(times)
            .map(|(n, t)| {
                named_basis(n)
                    .map(|b| (t.clone(), b))
                    .ok_or_else(|| Failure(format!("unknown basis `{n}`")))
            })
            .collect();
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Failure(format!(
            "unknown basis `{spec}` (expected z, x, a comma list, or a file)"
        )));
    }
    let value: serde_json::Value = load(path)?;
    if value.get("vectors").is_some() {
        let b: Basis = load(path)?;
        Ok(times.iter().map(|t| (t.clone(), b.clone())).collect())
    } else {
        let m: BTreeMap<TimeLabel, Basis> = load(path)?;
        Ok(m)
    }
}

fn print_report(r: &ConsistencyReport, format: Format) -> Outcome {
    match format {
        Format::Table => out!("{}", r.to_table()),
        Format::Json => outln!("{}", serde_json::to_string_pretty(r)?),
    }
    Ok(r.pass)
}

fn run_scenario(a: &ScenarioArgs) -> Outcome {
    let Some(name) = &a.name else {
        for n in SCENARIOS {
            outln!("{n}");
        }
        return Ok(true);
    };
    let basis = match &a.basis {
        None => None,
        Some(spec) => Some(match named_basis(spec) {
            Some(b) => b,
            None => load::<Basis>(Path::new(spec))?,
        }),
    };
    let urn = match &a.urn {
        Some(p) => Some(load::<UrnConfig>(p)?),
        None => None,
    };
    let params = ScenarioParams {
        seed: a.seed,
        steps: a.steps,
        system_dim: a.system_dim,
        env_dim: a.env_dim,
        basis,
        urn,
    };
    let s = scenarios::build(name, &params)?;
    if let Some(family) = &a.emit {
        if let Some(f) = s.comb_family(family) {
            write_json(f, a.out.as_deref())?;
        } else if let Some(f) = s.distribution_family(family) {
            write_json(f, a.out.as_deref())?;
        } else {
            return Err(Failure(format!(
                "scenario {name} has no family `{family}` (available: {})",
                s.family_names().join(", ")
            )));
        }
        if a.out.is_none() {
            return Ok(s.passes());
        }
    }
    match a.format {
        Format::Table => out!("{}", s.to_table()),
        Format::Json => outln!("{}", serde_json::to_string_pretty(&s.report())?),
    }
    Ok(s.passes())
}

#[derive(Serialize)]
struct ContractRow {
    outcome: Vec<String>,
    probability: f64,
}

fn run_contract(a: &ContractArgs) -> Outcome {
    let comb: Comb = load(&a.comb)?;
    if let Some(p) = &a.maps {
        let maps: Vec<ChoiChannel> = load(p)?;
        let v = comb.contract(&maps)?;
        match a.format {
            Format::Table => outln!("{}", fmt_g17(v)),
            Format::Json => outln!("{}", serde_json::json!({ "value": v })),
        }
        return Ok(true);
    }
    let instruments: Vec<Instrument> = match (&a.instruments, &a.basis) {
        (Some(p), _) => load(p)?,
        (None, Some(spec)) => {
            let bases = parse_bases(spec, comb.times())?;
            comb.times()
                .iter()
                .map(|t| projective_instrument(&bases[t]))
                .collect::<Result<_, _>>()?
        }
        (None, None) => {
            return Err(Failure(
                "contract needs --maps, --instruments or --basis".into(),
            ))
        }
    };
    if instruments.len() != comb.times().len() {
        return Err(Failure(format!(
            "{} instruments for {} times",
            instruments.len(),
            comb.times().len()
        )));
    }
    let radix: Vec<usize> = instruments.iter().map(Instrument::len).collect();
    let total: usize = radix.iter().product();
    let mut rows = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut choice = vec![0; radix.len()];
        for k in (0..radix.len()).rev() {
            choice[k] = rem % radix[k];
            rem /= radix[k];
        }
        let maps: Vec<ChoiChannel> = choice
            .iter()
            .zip(&instruments)
            .map(|(&o, i)| i.channel(o).clone())
            .collect();
        rows.push(ContractRow {
            outcome: choice
                .iter()
                .zip(&instruments)
                .map(|(&o, i)| i.labels()[o].to_string())
                .collect(),
            probability: comb.contract(&maps)?,
        });
    }
    match a.format {
        Format::Table => {
            let mut header: Vec<String> = comb.times().iter().map(|t| t.to_string()).collect();
            header.push("probability".into());
            let mut t = Table::new(header);
            for r in &rows {
                let mut cells = r.outcome.clone();
                cells.push(fmt_g17(r.probability));
                t.push(cells);
            }
            out!("{}", t.render());
            let sum: f64 = rows.iter().map(|r| r.probability).sum();
            outln!("total {}", fmt_g17(sum));
        }
        Format::Json => outln!("{}", serde_json::to_string_pretty(&rows)?),
    }
    Ok(true)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Scenario(a) => run_scenario(&a),
        Command::Contract(a) => run_contract(&a),
        Command::Restrict(a) => {
            let comb: Comb = load(&a.comb)?;
            let subset = TimeSet::parse(&a.subset)?;
            write_json(&comb.restrict(&subset)?, a.out.as_deref())?;
            Ok(true)
        }
        Command::CheckGet(a) => {
            let f: CombFamily = load(&a.family)?;
            print_report(&check_get(&f, a.common.tol)?, a.common.format)
        }
        Command::CheckKet(a) => {
            let f: DistributionFamily = load(&a.family)?;
            print_report(&check_ket(&f, a.common.tol), a.common.format)
        }
        Command::Classical(a) => {
            let f: CombFamily = load(&a.family)?;
            let bases = parse_bases(&a.basis, f.ground())?;
            print_report(&is_classical(&f, &bases, a.common.tol)?, a.common.format)
        }
        Command::Embed(a) => {
            if let Some(p) = &a.dist {
                let d: JointDistribution = load(p)?;
                write_json(&classical_embed(&d)?, a.out.as_deref())?;
            } else if let Some(p) = &a.family {
                let f: DistributionFamily = load(p)?;
                write_json(&classical_embed_family(&f)?, a.out.as_deref())?;
            }
            Ok(true)
        }
        Command::VerifyExtension(a) => {
            let comb: Comb = load(&a.comb)?;
            let f: CombFamily = load(&a.family)?;
            print_report(&verify_extension(&comb, &f, a.common.tol)?, a.common.format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
