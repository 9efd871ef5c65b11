//! The `kochheat` command line: argument parsing, output documents, caching
//! and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use koch_heat::carpet::{self, Pattern};
use koch_heat::dimension::{self, DimEstimate};
use koch_heat::gbp::{self, Characteristic, OffspringLaw};
use koch_heat::generator::{self, ScaleSequence};
use koch_heat::heat::{self, FdOptions, HeatEntry, HeatMethod, HeatProfile, OmegaSchedule, SnowflakePlan, StepCtl};
use koch_heat::io::{curve_svg, Cache, CurveDoc, SCHEMA_VERSION};
use koch_heat::selfsim::{self, EnsembleSummary};
use koch_heat::stats::linear_fit;
use koch_heat::tubular::{self, TubularProfile};
use koch_heat::{simplicity_check, Domain, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CAP: i32 = 3;

/// Default cache directory, overridden by `KOCH_HEAT_CACHE`.
pub const DEFAULT_CACHE_DIR: &str = ".kochheat-cache";

#[derive(Parser, Debug)]
#[command(name = "kochheat", version, about = "Koch-type snowflakes: geometry, heat content, branching limits")]
pub struct Cli {
    /// Worker threads (default: all cores; 1 is the reproducibility baseline).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Disable the result cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a Koch curve or snowflake.
    Generate(GenerateArgs),
    /// Carpet pattern dimensions, graph domain and tube profile.
    Carpet(CarpetArgs),
    /// Inner tube profile of a snowflake.
    Tube(TubeArgs),
    /// Dimension estimates of scale sequences.
    Dims(DimsArgs),
    /// Heat content by finite differences or Monte Carlo.
    Heat(HeatArgs),
    /// Upper bounds and lower proxy on the heat content.
    Bounds(BoundsArgs),
    /// Branching-process ensembles.
    Gbp(GbpArgs),
    /// Statistically self-similar snowflake experiments.
    Selfsim(SelfsimArgs),
    /// Aggregate output documents into panel data.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SeqArgs {
    /// Explicit block types, e.g. `1,3,2,1`; a single value means a constant sequence.
    #[arg(long, value_delimiter = ',', conflicts_with = "rule")]
    pub seq: Option<Vec<u32>>,
    /// `example33`, `constant:A` or `uniform:A,B,...:SEED`.
    #[arg(long)]
    pub rule: Option<String>,
}

impl SeqArgs {
    fn sequence(&self) -> Result<ScaleSequence, CliError> {
        let s = match (&self.seq, &self.rule) {
            (Some(v), None) if v.len() == 1 => ScaleSequence::constant(v[0]),
            (Some(v), None) if !v.is_empty() => ScaleSequence::explicit(v.clone()),
            (None, Some(r)) => parse_rule(r)?,
            _ => return Err(CliError::Usage("give --seq or --rule".into())),
        };
        s.validate()?;
        Ok(s)
    }
}

fn parse_rule(r: &str) -> Result<ScaleSequence, CliError> {
    let parts: Vec<&str> = r.split(':').collect();
    match parts.as_slice() {
        ["example33"] => Ok(ScaleSequence::example_33()),
        ["constant", a] => Ok(ScaleSequence::constant(parse_num(a, "constant block")?)),
        ["uniform", alpha, seed] => Ok(ScaleSequence::uniform(
            parse_list(alpha, "alphabet")?,
            parse_num(seed, "seed")?,
        )),
        _ => Err(CliError::Usage(format!(
            "unknown rule `{r}` (expected example33, constant:A or uniform:A,B:SEED)"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad {what}: `{s}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',').map(|x| parse_num(x, what)).collect()
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub seq: SeqArgs,
    #[arg(long)]
    pub level: usize,
    /// Closed snowflake instead of one side.
    #[arg(long)]
    pub snowflake: bool,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CarpetArgs {
    /// Rows top to bottom, separated by `;`.
    #[arg(long, default_value = "0111;1000")]
    pub pattern: String,
    /// Construction level of the emitted domain.
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Tube profile over a log grid of eps.
    #[arg(long)]
    pub eps_from: Option<f64>,
    #[arg(long)]
    pub eps_to: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TubeArgs {
    #[command(flatten)]
    pub seq: SeqArgs,
    #[arg(long)]
    pub eps_from: f64,
    #[arg(long)]
    pub eps_to: f64,
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DimsArgs {
    #[command(flatten)]
    pub seq: SeqArgs,
    /// Horizon of the liminf/limsup estimate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Ergodic dimension of an i.i.d. law: alphabet and probabilities.
    #[arg(long, value_delimiter = ',')]
    pub alphabet: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    /// Also fit the iterated-log envelope of the i.i.d. path up to `--n`.
    #[arg(long)]
    pub lil: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct HeatArgs {
    #[command(flatten)]
    pub seq: SeqArgs,
    /// Fixed construction level; without it the level follows each time.
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long, default_value = "fd")]
    pub method: String,
    #[arg(long)]
    pub s_from: f64,
    #[arg(long)]
    pub s_to: f64,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Grid pitch for a fixed level (default: a quarter of the segment length).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub seq: SeqArgs,
    #[arg(long)]
    pub level: usize,
    #[arg(long)]
    pub s_from: f64,
    #[arg(long)]
    pub s_to: f64,
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    /// `sqrt-log`, `iterated-log:I` or `custom:C`.
    #[arg(long, default_value = "sqrt-log")]
    pub omega: String,
    #[arg(long, default_value_t = 0.5)]
    pub c1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    /// Also run finite differences for comparison.
    #[arg(long)]
    pub with_fd: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GbpArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub alphabet: Vec<u32>,
    /// Defaults to uniform.
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    /// Observation times.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    pub seeds: u64,
    /// `zero`, `indicator:LO,HI`.
    #[arg(long, default_value = "indicator:0,1")]
    pub phi: String,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Export the tree of `--seed` up to the largest time.
    #[arg(long)]
    pub tree_json: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SelfsimArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub alphabet: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0 / 512.0)]
    pub eps_min: f64,
    /// Seeds `0..N` for the tube experiment.
    #[arg(long, default_value_t = 32)]
    pub seeds: u64,
    /// The first `N` seeds also run the heat experiment (0 to skip).
    #[arg(long, default_value_t = 16)]
    pub heat_seeds: u64,
    #[arg(long, default_value_t = 12)]
    pub eps_count: usize,
    #[arg(long, default_value_t = 8)]
    pub s_count: usize,
    /// Directory for per-seed CSV files and the summary.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Export the polygon of `--seed` as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Output documents of `tube`, `heat`, `carpet` or `selfsim`.
    #[arg(long, num_args = 0..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also draw log-log panels.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {msg}", path.display())]
    Schema { path: PathBuf, msg: String },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Schema { .. } => EXIT_INVALID,
            CliError::Core(e) if e.is_resource_cap() => EXIT_CAP,
            CliError::Core(Error::Io(_)) => EXIT_FAILURE,
            CliError::Core(_) => EXIT_INVALID,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Versioned envelope of every JSON document the tool writes.
#[derive(Serialize, Deserialize, Debug)]
pub struct Doc {
    pub version: u32,
    pub kind: String,
    pub data: Value,
}

fn write_doc(path: &Path, kind: &str, data: impl Serialize) -> CliResult<()> {
    let doc = Doc {
        version: SCHEMA_VERSION,
        kind: kind.to_string(),
        data: serde_json::to_value(data)?,
    };
    write_file(path, serde_json::to_string_pretty(&doc)?)
}

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> CliResult<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(CliError::Usage(format!("bad grid [{lo}, {hi}] x {n}")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect())
}

fn law(alphabet: &[u32], probs: &Option<Vec<f64>>) -> CliResult<OffspringLaw> {
    Ok(match probs {
        Some(p) => OffspringLaw::blocks(alphabet, p)?,
        None => OffspringLaw::uniform_blocks(alphabet)?,
    })
}

/// Runs the tool on `argv` (program name first), printing to stdout/stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cache = if cli.no_cache {
        Cache::disabled()
    } else {
        Cache::from_env(DEFAULT_CACHE_DIR)
    };
    match dispatch(&cli.command, &cache) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command, cache: &Cache) -> CliResult<String> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Carpet(a) => carpet_cmd(a),
        Command::Tube(a) => tube(a, cache),
        Command::Dims(a) => dims(a),
        Command::Heat(a) => heat_cmd(a, cache),
        Command::Bounds(a) => bounds(a, cache),
        Command::Gbp(a) => gbp_cmd(a),
        Command::Selfsim(a) => selfsim_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn generate(a: &GenerateArgs) -> CliResult<String> {
    let seq = a.seq.sequence()?;
    let curve = if a.snowflake {
        generator::snowflake(&seq, a.level)?
    } else {
        generator::koch_curve(&seq, a.level)?
    };
    if let Some(p) = &a.svg {
        write_file(p, curve_svg(&curve))?;
    }
    if let Some(p) = &a.json {
        let doc = CurveDoc::new(serde_json::to_value(&seq)?, a.level, &curve);
        write_doc(p, "curve", doc)?;
    }
    let c = generator::counts(&seq, a.level)?;
    Ok(format!(
        "generate: level {} {}, {} segments of length {:.6e}, simple = {}",
        a.level,
        if a.snowflake { "snowflake" } else { "curve" },
        curve.segment_count(),
        c.eps,
        simplicity_check(&curve)
    ))
}

fn carpet_cmd(a: &CarpetArgs) -> CliResult<String> {
    let p: Pattern = a.pattern.parse()?;
    let (dh, dm) = carpet::carpet_dims(&p)?;
    let mut out = json!({ "pattern": p.to_string(), "hausdorff": dh, "minkowski": dm });
    if let Some(level) = a.level {
        let dom = carpet::carpet_domain(&p, level)?;
        if let Some(svg) = &a.svg {
            write_file(svg, curve_svg(&dom))?;
        }
        out["level"] = json!(level);
        out["segments"] = json!(dom.segment_count());
    }
    let mut fit = None;
    if let (Some(lo), Some(hi)) = (a.eps_from, a.eps_to) {
        let prof = carpet::carpet_tube_profile(&p, &log_grid(lo, hi, a.count)?)?;
        let est = dimension::profile_dim(&prof).ok();
        fit = est.as_ref().map(|e| e.point);
        out["tube"] = serde_json::to_value(&prof)?;
        out["profileDim"] = serde_json::to_value(&est)?;
    }
    if let Some(j) = &a.json {
        write_doc(j, "carpet", &out)?;
    }
    Ok(format!(
        "carpet {}: hausdorff {dh:.12}, minkowski {dm:.12}{}",
        p,
        fit.map(|d| format!(", tube dimension {d:.4}")).unwrap_or_default()
    ))
}

fn tube(a: &TubeArgs, cache: &Cache) -> CliResult<String> {
    let seq = a.seq.sequence()?;
    let eps = log_grid(a.eps_from, a.eps_to, a.count)?;
    let prof: TubularProfile = cache.get_or_compute("tubular", "tube_profile", &(&seq, &eps), || {
        tubular::tube_profile(&seq, &eps)
    })?;
    if let Some(p) = &a.csv {
        write_file(p, prof.to_csv()?)?;
    }
    if let Some(p) = &a.json {
        write_doc(p, "tube", &prof)?;
    }
    let dim = dimension::profile_dim(&prof).ok();
    Ok(format!(
        "tube: {} samples, area {:.6}{}, cache hits {}",
        prof.entries.len(),
        prof.area,
        dim.map(|d| format!(", dimension {:.4} [{:.4}, {:.4}]", d.point, d.lower, d.upper))
            .unwrap_or_default(),
        cache.hits()
    ))
}

fn dims(a: &DimsArgs) -> CliResult<String> {
    let mut out = serde_json::Map::new();
    if let (Some(alpha), Some(p)) = (&a.alphabet, &a.probs) {
        out.insert("ergodic".into(), json!(dimension::ergodic_dim(alpha, p)?));
        if a.lil {
            let n = a.n.ok_or_else(|| CliError::Usage("--lil needs --n".into()))?;
            let seq = ScaleSequence::iid(alpha.clone(), p.clone(), a.seed);
            let gamma = dimension::ergodic_dim(alpha, p)?;
            let fit = dimension::lil_fit(&dimension::lil_path(&seq, n, gamma)?)?;
            out.insert("lil".into(), serde_json::to_value(fit)?);
        }
    } else if a.alphabet.is_some() || a.probs.is_some() {
        return Err(CliError::Usage("--alphabet and --probs go together".into()));
    }
    if a.seq.seq.is_some() || a.seq.rule.is_some() {
        let seq = a.seq.sequence()?;
        let n = a.n.ok_or_else(|| CliError::Usage("give --n".into()))?;
        let est: DimEstimate = dimension::liminf_limsup_dim(&seq, n)?;
        out.insert("lower".into(), json!(est.lower));
        out.insert("upper".into(), json!(est.upper));
        out.insert("ratio".into(), json!(dimension::dim_ratio(&seq, n)?));
    }
    if out.is_empty() {
        return Err(CliError::Usage("give --seq/--rule with --n, or --alphabet with --probs".into()));
    }
    let v = Value::Object(out);
    Ok(if a.json {
        v.to_string()
    } else {
        let mut parts: Vec<String> = Vec::new();
        for (k, x) in v.as_object().unwrap() {
            match x.as_f64() {
                Some(f) => parts.push(format!("{k} {f:.6}")),
                None => parts.push(format!("{k} {x}")),
            }
        }
        format!("dims: {}", parts.join(", "))
    })
}

#[derive(Serialize)]
struct HeatKey<'a> {
    seq: &'a ScaleSequence,
    level: Option<usize>,
    method: &'a str,
    s: &'a [f64],
    h: Option<f64>,
    trials: u64,
    seed: u64,
}

fn heat_cmd(a: &HeatArgs, cache: &Cache) -> CliResult<String> {
    let seq = a.seq.sequence()?;
    let s = log_grid(a.s_from, a.s_to, a.count)?;
    let method = a.method.as_str();
    if !matches!(method, "fd" | "mc") {
        return Err(CliError::Usage(format!("unknown method `{method}` (fd or mc)")));
    }
    let key = HeatKey {
        seq: &seq,
        level: a.level,
        method,
        s: &s,
        h: a.h,
        trials: a.trials,
        seed: a.seed,
    };
    let prof: HeatProfile = cache.get_or_compute("heat", "profile", &key, || {
        match (method, a.level) {
            ("fd", None) => heat::snowflake_heat_fd(&seq, &s, &SnowflakePlan::default()),
            ("fd", Some(n)) => {
                let dom = Domain::new(generator::snowflake(&seq, n)?)?;
                let h = a.h.unwrap_or(generator::counts(&seq, n)?.eps / 4.0);
                heat::heat_fd_profile(&dom, &s, h, &FdOptions::default())
            }
            (_, level) => {
                let n = level.ok_or_else(|| Error::InvalidParameter("mc needs --level".into()))?;
                let dom = Domain::new(generator::snowflake(&seq, n)?)?;
                let entries = s
                    .iter()
                    .map(|&t| {
                        let r = heat::heat_mc(&dom, t, a.trials, &StepCtl::for_time(t), a.seed)?;
                        Ok(HeatEntry {
                            s: t,
                            e: r.e,
                            stderr: r.stderr,
                            method: HeatMethod::Mc,
                        })
                    })
                    .collect::<koch_heat::Result<Vec<_>>>()?;
                Ok(HeatProfile::new(dom.id.clone(), dom.area, entries))
            }
        }
    })?;
    let csv = prof.to_csv()?;
    match &a.csv {
        Some(p) => write_file(p, &csv)?,
        None if a.json.is_none() => print!("{csv}"),
        None => {}
    }
    if let Some(p) = &a.json {
        write_doc(p, "heat", &prof)?;
    }
    let slope = heat::log_slope(&prof).ok();
    Ok(format!(
        "heat ({method}): {} times{}, cache hits {}",
        prof.entries.len(),
        slope
            .map(|r| format!(", dimension {:.4}", r.dim_fit()))
            .unwrap_or_default(),
        cache.hits()
    ))
}

fn parse_omega(s: &str) -> CliResult<OmegaSchedule> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["sqrt-log"] => Ok(OmegaSchedule::SqrtLog),
        ["iterated-log", i] => Ok(OmegaSchedule::IteratedLog { i: parse_num(i, "log depth")? }),
        ["custom", c] => Ok(OmegaSchedule::Custom { c: parse_num(c, "omega factor")? }),
        _ => Err(CliError::Usage(format!("unknown omega schedule `{s}`"))),
    }
}

fn bounds(a: &BoundsArgs, cache: &Cache) -> CliResult<String> {
    let seq = a.seq.sequence()?;
    let omega = parse_omega(&a.omega)?;
    let s = log_grid(a.s_from, a.s_to, a.count)?;
    let dom = Domain::new(generator::snowflake(&seq, a.level)?)?;
    let seg = generator::counts(&seq, a.level)?.eps;
    // The tube must span sqrt(s)/4 .. 8 sqrt(s) for every s.
    let eps_lo = (a.s_from.sqrt() / 8.0).max(seg / 2.0).min(a.s_from.sqrt() / 4.0);
    let eps_hi = 10.0 * a.s_to.sqrt();
    let eps = log_grid(eps_lo, eps_hi, 48)?;
    let tube: TubularProfile = cache.get_or_compute(
        "tubular",
        "tube_profile_domain",
        &(&seq, a.level, &eps),
        || tubular::tube_profile_domain(&dom, None, &eps, 8.0),
    )?;
    let fd = if a.with_fd {
        let h = seg / 4.0;
        Some(heat::heat_fd(&dom, &s, h, &FdOptions::default())?.e)
    } else {
        None
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s", "vdb", "thm22", "lowerProxy", "fd"])?;
    let mut dominated = true;
    for (i, &t) in s.iter().enumerate() {
        let v = heat::vdb_upper(&tube, t)?;
        let u = heat::thm22_upper(&tube, t, omega, dom.area)?;
        let l = heat::lower_proxy(&tube, t, a.c1, a.c2)?;
        let f = fd.as_ref().map(|e| e[i]);
        if let Some(f) = f {
            dominated &= v >= f * 0.95 && u >= f * 0.95;
        }
        w.write_record([
            t.to_string(),
            v.to_string(),
            u.to_string(),
            l.to_string(),
            f.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    match &a.csv {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(format!(
        "bounds: {} times{}",
        s.len(),
        if fd.is_some() {
            format!(", upper bounds dominate fd: {dominated}")
        } else {
            String::new()
        }
    ))
}

fn parse_phi(s: &str) -> CliResult<Characteristic> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["zero"] => Ok(Characteristic::Zero),
        ["indicator", range] => {
            let v: Vec<f64> = parse_list(range, "indicator bounds")?;
            if v.len() != 2 {
                return Err(CliError::Usage("indicator needs LO,HI".into()));
            }
            Ok(Characteristic::indicator(v[0], v[1]))
        }
        _ => Err(CliError::Usage(format!("unknown characteristic `{s}`"))),
    }
}

fn gbp_cmd(a: &GbpArgs) -> CliResult<String> {
    let law = law(&a.alphabet, &a.probs)?;
    let phi = parse_phi(&a.phi)?;
    let gamma = gbp::malthusian(&law)?;
    if !gbp::lattice_check(&law) {
        eprintln!("warning: lattice law; growth limits oscillate");
    }
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let rows = gbp::ensemble(&law, &phi, &a.t, &seeds)?;
    let csv = gbp::ensemble_csv(&rows)?;
    match &a.csv {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &a.tree_json {
        let t_max = a.t.iter().copied().fold(0.0, f64::max);
        let tree = gbp::simulate_tree(&law, t_max, a.seed)?;
        write_doc(p, "gbp-tree", json!({ "law": law, "gamma": gamma, "tree": tree }))?;
    }
    let limit = gbp::nerman_limit(&law, &phi, gamma).ok();
    let last = rows.last().expect("at least one time");
    Ok(format!(
        "gbp: gamma {gamma:.10}, {} seeds, t = {}: mean M {:.4} +- {:.4}, mean ratio {:.4}{}",
        a.seeds,
        last.t,
        last.mean_m,
        last.stderr_m,
        last.mean_znorm,
        limit.map(|l| format!(" (limit {l:.5})")).unwrap_or_default()
    ))
}

fn selfsim_cmd(a: &SelfsimArgs) -> CliResult<String> {
    let law = law(&a.alphabet, &a.probs)?;
    if let Some(p) = &a.svg {
        let r = selfsim::sample_snowflake(&law, a.eps_min, a.seed)?;
        write_file(p, curve_svg(&r.polygon))?;
    }
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let rs = selfsim::sample_many(&law, a.eps_min, &seeds)?;
    let lo = 8.0 * a.eps_min * 1.05;
    let tube = if a.seeds > 0 {
        Some(selfsim::minkowski_limit_experiment(&rs, &log_grid(lo, 0.099, a.eps_count)?)?)
    } else {
        None
    };
    let hs = (a.heat_seeds.min(a.seeds)) as usize;
    let heat = if hs > 0 {
        let s: Vec<f64> = log_grid(lo, 0.049, a.s_count)?.iter().map(|x| x * x).collect();
        Some(selfsim::heat_limit_experiment(&rs[..hs], &s)?)
    } else {
        None
    };
    let summary = EnsembleSummary::new(tube.as_ref(), heat.as_ref())?;
    if let Some(dir) = &a.out_dir {
        for (name, rep) in [("tube", &tube), ("heat", &heat)] {
            if let Some(rep) = rep {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["seed", "x", "y", "yBar", "mT", "mHalf", "stabilization"])?;
                for r in &rep.rows {
                    for (x, y) in r.x.iter().zip(&r.y) {
                        w.write_record([
                            r.seed.to_string(),
                            x.to_string(),
                            y.to_string(),
                            r.y_bar.to_string(),
                            r.m_t.to_string(),
                            r.m_half.to_string(),
                            r.stabilization.to_string(),
                        ])?;
                    }
                }
                let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
                write_file(&dir.join(format!("selfsim-{name}.csv")), bytes)?;
            }
        }
        write_doc(&dir.join("selfsim-summary.json"), "selfsim", &summary)?;
    }
    let fmt = |x: Option<(f64, f64)>| {
        x.map(|(m, ci)| format!("{m:.4} +- {ci:.4}"))
            .unwrap_or_else(|| "-".into())
    };
    Ok(format!(
        "selfsim: gamma {:.6}, MHat {}, EHat {}, correlations {:?}",
        summary.gamma,
        fmt(summary.m_hat),
        fmt(summary.e_hat),
        summary.correlations
    ))
}

/// One log-log panel of a report.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Panel {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Least-squares slope of `ln y` against `ln x`.
    pub slope: f64,
}

fn panel(name: &str, xy: impl Iterator<Item = (f64, f64)>) -> Panel {
    let (x, y): (Vec<f64>, Vec<f64>) = xy.filter(|(x, y)| *x > 0.0 && *y > 0.0).unzip();
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let slope = if x.len() >= 2 { linear_fit(&lx, &ly).1 } else { f64::NAN };
    Panel {
        name: name.to_string(),
        x,
        y,
        slope,
    }
}

fn report(a: &ReportArgs) -> CliResult<String> {
    if a.inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one input".into()));
    }
    let mut panels = Vec::new();
    let mut summaries = Vec::new();
    for path in &a.inputs {
        let schema = |msg: String| CliError::Schema {
            path: path.clone(),
            msg,
        };
        let text = fs::read_to_string(path).map_err(|e| schema(e.to_string()))?;
        let doc: Doc = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
        if doc.version != SCHEMA_VERSION {
            return Err(schema(format!("schema version {} (expected {SCHEMA_VERSION})", doc.version)));
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match doc.kind.as_str() {
            "tube" => {
                let p: TubularProfile = serde_json::from_value(doc.data).map_err(|e| schema(e.to_string()))?;
                panels.push(panel(&format!("{stem}-mu"), p.entries.iter().map(|e| (e.eps, e.mu))));
            }
            "heat" => {
                let p: HeatProfile = serde_json::from_value(doc.data).map_err(|e| schema(e.to_string()))?;
                panels.push(panel(&format!("{stem}-E"), p.entries.iter().map(|e| (e.s, e.e))));
            }
            "carpet" => {
                let tube = doc
                    .data
                    .get("tube")
                    .cloned()
                    .ok_or_else(|| schema("carpet document has no tube profile".into()))?;
                let p: TubularProfile = serde_json::from_value(tube).map_err(|e| schema(e.to_string()))?;
                panels.push(panel(&format!("{stem}-mu"), p.entries.iter().map(|e| (e.eps, e.mu))));
            }
            "selfsim" => {
                let s: EnsembleSummary = serde_json::from_value(doc.data).map_err(|e| schema(e.to_string()))?;
                summaries.push(s);
            }
            k => return Err(schema(format!("unsupported document kind `{k}`"))),
        }
    }
    fs::create_dir_all(&a.out_dir)?;
    for p in &panels {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y"])?;
        for (x, y) in p.x.iter().zip(&p.y) {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        write_file(&a.out_dir.join(format!("{}.csv", p.name)), bytes)?;
        if a.svg && p.x.len() >= 2 {
            let pts = p
                .x
                .iter()
                .zip(&p.y)
                .map(|(x, y)| koch_heat::Point::new(x.ln(), y.ln()))
                .collect();
            let line = koch_heat::Polyline::open(pts);
            write_file(&a.out_dir.join(format!("{}.svg", p.name)), curve_svg(&line))?;
        }
    }
    write_doc(
        &a.out_dir.join("report.json"),
        "report",
        json!({ "panels": panels, "selfsim": summaries }),
    )?;
    let slopes: Vec<String> = panels
        .iter()
        .map(|p| format!("{} slope {:.4}", p.name, p.slope))
        .collect();
    Ok(format!(
        "report: {} panels, {} ensemble summaries; {}",
        panels.len(),
        summaries.len(),
        slopes.join(", ")
    ))
}
