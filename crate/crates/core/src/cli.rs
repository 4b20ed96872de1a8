//! Command-line front end.
//!
//! Every command writes one report, JSON by default. Reports carry a `meta`
//! block with the tool version, the R-matrix fingerprint, the tolerances in
//! force and the seed. CSV output puts the same block in leading `#` lines.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 usage or input error,
//! 3 dimension budget exceeded.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bilinears::{build_bilinears, locality_check, verify_gl_n, verify_ladder};
use crate::error::{Error, Result};
use crate::fockspace::{build_multimode, exclusion_statistics, verify_crs, FockOperators};
use crate::freegas::{
    diagonalize, format_f64, free_energy, hilbert_series, occupation_curve, partition_function,
    series_reciprocity_check, static_correlators, unequal_time_commutator, write_occupation_csv, ClosedForm,
    ModeSolution, Statistics,
};
use crate::linalg::{CMat, C64};
use crate::rmatrix::{builtin, negate, ybe_check, Builtin, RMatrix, RMatrixFile};
use crate::spinchain::{
    build_chain, build_local_ops, charge_conservation, crossing_relations, csr_max_abs_diff, local_algebra,
    predicted_spectrum, pt_reality, spectrum_crosscheck, thermal_crosscheck, verify_mpo_crs, SpinChainSpec,
    SPECTRUM_TOL,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "parastat", version, about = "R-matrices, paraparticle Fock spaces, free gases and spin chains")]
pub struct Cli {
    /// Worker threads for internal parallelism (results do not depend on it).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check involutivity and the braid relation.
    Ybe(YbeArgs),
    /// Degeneracies d_n of a single mode.
    Exclusion(ExclusionArgs),
    /// Hilbert series and the z_R(-x) z_{-R}(x) = 1 check.
    Series(SeriesArgs),
    /// Single-mode occupation curves against beta*epsilon.
    Thermo(ThermoArgs),
    /// Thermodynamics and correlators of a free gas.
    Freegas(FreegasArgs),
    /// Build the spin chain and cross-check it against the free-particle solution.
    Chain(ChainArgs),
    /// Run the property suites.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// ex1, ex2, ex3, ex4, fermion or boson.
    #[arg(long, value_name = "NAME", conflicts_with = "file")]
    builtin: Option<Builtin>,
    /// Internal dimension (defaults to 1 for fermion and boson).
    #[arg(long)]
    m: Option<usize>,
    /// R-matrix JSON file: {"m": m, "data": [re, im, ...]}.
    #[arg(long, value_name = "PATH")]
    file: Option<PathBuf>,
    /// Use -R instead of R.
    #[arg(long)]
    negate: bool,
    /// Skip the Yang-Baxter check when loading a file.
    #[arg(long)]
    no_validate: bool,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Tolerance for residual checks.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct YbeArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ExclusionArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 6)]
    nmax: usize,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 6)]
    order: usize,
}

#[derive(Args, Debug)]
struct ThermoArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    to: f64,
    #[arg(long, default_value_t = 81)]
    points: usize,
    /// Explicit grid, overriding --from/--to/--points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct FreegasArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    /// Nearest-neighbour couplings of a chain h (N-1 values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    j: Option<Vec<f64>>,
    /// Chemical potentials (N values); the diagonal of h is -mu.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu: Option<Vec<f64>>,
    /// JSON file with {"h": [[[re, im], ...], ...]}.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["j", "mu"])]
    h_file: Option<PathBuf>,
    /// Times at which to report <[n_a(t), n_b(0)]>.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    time: Vec<f64>,
}

#[derive(Args, Debug)]
struct ChainArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sites: Option<usize>,
    /// Bond couplings (N-1 values, default all 1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    j: Option<Vec<f64>>,
    /// Chemical potentials (N values, default all 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu: Option<Vec<f64>>,
    /// Draw J and mu uniformly from [-1, 1) using --seed.
    #[arg(long, conflicts_with_all = ["j", "mu"])]
    random: bool,
    /// JSON file with {"rmatrix": ..., "N": int, "J": [...], "mu": [...]}.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["builtin", "file", "sites", "j", "mu", "random"])]
    chain_file: Option<PathBuf>,
    /// Also compare thermal occupations at these inverse temperatures.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict to these suites (repeatable or comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    suite: Vec<Suite>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
enum Suite {
    #[value(name = "ybe")]
    Ybe,
    #[value(name = "exclusion")]
    Exclusion,
    #[value(name = "series")]
    Series,
    #[value(name = "crs")]
    Crs,
    #[value(name = "glN")]
    GlN,
    #[value(name = "locality")]
    Locality,
    #[value(name = "local")]
    Local,
    #[value(name = "thermo")]
    Thermo,
    #[value(name = "freegas")]
    Freegas,
    #[value(name = "chain")]
    Chain,
    #[value(name = "pt")]
    Pt,
}

impl Suite {
    const ALL: [Suite; 11] = [
        Suite::Ybe,
        Suite::Exclusion,
        Suite::Series,
        Suite::Crs,
        Suite::GlN,
        Suite::Locality,
        Suite::Local,
        Suite::Thermo,
        Suite::Freegas,
        Suite::Chain,
        Suite::Pt,
    ];

    fn name(self) -> &'static str {
        match self {
            Suite::Ybe => "ybe",
            Suite::Exclusion => "exclusion",
            Suite::Series => "series",
            Suite::Crs => "crs",
            Suite::GlN => "glN",
            Suite::Locality => "locality",
            Suite::Local => "local",
            Suite::Thermo => "thermo",
            Suite::Freegas => "freegas",
            Suite::Chain => "chain",
            Suite::Pt => "pt",
        }
    }
}

#[derive(Serialize, Debug, Clone)]
struct RInfo {
    source: String,
    m: usize,
    fingerprint: String,
}

#[derive(Serialize, Debug)]
struct Meta {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    rmatrix: Option<RInfo>,
    tolerances: BTreeMap<&'static str, f64>,
    seed: u64,
}

impl Meta {
    fn new(command: &'static str, rmatrix: Option<RInfo>, seed: u64) -> Self {
        Meta { tool: "parastat", version: VERSION, command, rmatrix, tolerances: BTreeMap::new(), seed }
    }

    fn tol(mut self, name: &'static str, value: f64) -> Self {
        self.tolerances.insert(name, value);
        self
    }

    fn csv_lines(&self) -> String {
        let mut s = format!("# tool={} version={} command={}\n", self.tool, self.version, self.command);
        if let Some(r) = &self.rmatrix {
            s += &format!("# rmatrix={} m={} fingerprint={}\n", r.source, r.m, r.fingerprint);
        }
        for (k, v) in &self.tolerances {
            s += &format!("# tol.{k}={}\n", format_f64(*v));
        }
        s += &format!("# seed={}\n", self.seed);
        s
    }
}

/// A finished command: the JSON body, an optional CSV rendering and whether
/// every check passed.
struct Outcome {
    meta: Meta,
    passed: bool,
    body: Value,
    csv: Option<Vec<u8>>,
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parse `args` (including the program name), run the command and return the
/// exit code. Reports go to `--out` or stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_USAGE;
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let (result, common) = match &cli.command {
        Command::Ybe(a) => (cmd_ybe(a), &a.common),
        Command::Exclusion(a) => (cmd_exclusion(a), &a.common),
        Command::Series(a) => (cmd_series(a), &a.common),
        Command::Thermo(a) => (cmd_thermo(a), &a.common),
        Command::Freegas(a) => (cmd_freegas(a), &a.common),
        Command::Chain(a) => (cmd_chain(a), &a.common),
        Command::Selftest(a) => (cmd_selftest(a), &a.common),
    };
    let default_format = if matches!(cli.command, Command::Thermo(_)) { Format::Csv } else { Format::Json };
    match result.and_then(|o| emit(o, common, default_format)) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Resource { .. } => EXIT_RESOURCE,
        Error::Constraint { .. } => EXIT_FAIL,
        _ => EXIT_USAGE,
    }
}

fn emit(outcome: Outcome, common: &Common, default_format: Format) -> Result<bool> {
    let format = common.format.unwrap_or(default_format);
    let bytes = match format {
        Format::Json => {
            let doc = json!({ "meta": outcome.meta, "passed": outcome.passed, "report": outcome.body });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let table = outcome
                .csv
                .ok_or_else(|| Error::Invalid(format!("{} has no CSV form; use --format json", outcome.meta.command)))?;
            let mut v = outcome.meta.csv_lines().into_bytes();
            v.extend(table);
            v
        }
    };
    match &common.out {
        Some(path) => fs::write(path, bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(outcome.passed)
}

fn load_file(path: &Path, validate: bool) -> Result<RMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    RMatrix::from_json_str(&text, validate)
}

fn load_builtin(kind: Builtin, m: Option<usize>) -> Result<RMatrix> {
    let m = match (kind, m) {
        (_, Some(m)) => m,
        (Builtin::Fermion | Builtin::Boson, None) => 1,
        (_, None) => return Err(Error::Invalid(format!("--m is required for {kind}"))),
    };
    builtin(kind, m, None)
}

impl Source {
    fn load(&self, validate: bool) -> Result<(RMatrix, RInfo)> {
        let (r, label) = match (&self.builtin, &self.file) {
            (Some(kind), None) => {
                let r = load_builtin(*kind, self.m)?;
                let label = format!("{kind}");
                (r, label)
            }
            (None, Some(path)) => (load_file(path, validate && !self.no_validate)?, path.display().to_string()),
            (None, None) => return Err(Error::Invalid("one of --builtin or --file is required".into())),
            (Some(_), Some(_)) => return Err(Error::Invalid("--builtin and --file are exclusive".into())),
        };
        Ok(finish_source(r, label, self.negate))
    }
}

fn finish_source(r: RMatrix, label: String, negated: bool) -> (RMatrix, RInfo) {
    let (r, source) = if negated { (negate(&r), format!("-{label}")) } else { (r, label) };
    let info = RInfo { source, m: r.m(), fingerprint: r.fingerprint() };
    (r, info)
}

fn csv_table<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn matrix_rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

const YBE_TOL: f64 = 1e-12;

fn cmd_ybe(a: &YbeArgs) -> Result<Outcome> {
    let (r, info) = a.source.load(false)?;
    let tol = a.common.tol.unwrap_or(YBE_TOL);
    let report = ybe_check(&r, tol);
    let csv = csv_table(
        &["involutive", "braid", "involution_residual", "braid_residual", "max_residual"],
        [vec![
            report.involutive.to_string(),
            report.braid.to_string(),
            format_f64(report.involution_residual),
            format_f64(report.braid_residual),
            format_f64(report.max_residual),
        ]],
    )?;
    Ok(Outcome {
        meta: Meta::new("ybe", Some(info), a.common.seed).tol("ybe", tol),
        passed: report.passed(),
        body: serde_json::to_value(&report)?,
        csv: Some(csv),
    })
}

fn cmd_exclusion(a: &ExclusionArgs) -> Result<Outcome> {
    let (r, info) = a.source.load(true)?;
    let d = exclusion_statistics(&r, a.nmax)?;
    let csv = csv_table(&["n", "d_n"], d.iter().enumerate().map(|(n, x)| vec![n.to_string(), x.to_string()]))?;
    Ok(Outcome {
        meta: Meta::new("exclusion", Some(info), a.common.seed),
        passed: true,
        body: json!({ "nmax": a.nmax, "degeneracies": d }),
        csv: Some(csv),
    })
}

fn cmd_series(a: &SeriesArgs) -> Result<Outcome> {
    let (r, info) = a.source.load(true)?;
    let hs = hilbert_series(&r, a.order)?;
    let rec = series_reciprocity_check(&r, a.order)?;
    let passed = rec.max_coeff_error == 0 && hs.closed_form_matches != Some(false);
    let closed = hs.closed_form.as_ref().map(|cf| cf.series(a.order));
    let csv = csv_table(
        &["n", "d_n", "closed_form", "d_n_negated", "reciprocity_residual"],
        (0..=a.order).map(|n| {
            vec![
                n.to_string(),
                hs.coefficients[n].to_string(),
                closed.as_ref().map(|c| c[n].to_string()).unwrap_or_default(),
                rec.negated_series[n].to_string(),
                rec.residuals[n].to_string(),
            ]
        }),
    )?;
    Ok(Outcome {
        meta: Meta::new("series", Some(info), a.common.seed),
        passed,
        body: json!({
            "order": a.order,
            "coefficients": hs.coefficients,
            "closed_form": hs.closed_form.as_ref().map(|c| c.to_string()),
            "closed_form_matches": hs.closed_form_matches,
            "reciprocity": rec,
        }),
        csv: Some(csv),
    })
}

fn thermo_grid(a: &ThermoArgs) -> Result<Vec<f64>> {
    if let Some(g) = &a.grid {
        return Ok(g.clone());
    }
    match a.points {
        0 => Err(Error::Invalid("--points must be positive".into())),
        1 => Ok(vec![a.from]),
        p => Ok((0..p)
            .map(|k| if k + 1 == p { a.to } else { a.from + (a.to - a.from) * k as f64 / (p - 1) as f64 })
            .collect()),
    }
}

fn cmd_thermo(a: &ThermoArgs) -> Result<Outcome> {
    let (r, info) = a.source.load(true)?;
    let stats = Statistics::from_rmatrix(&r)?;
    let rows = occupation_curve(&stats, &thermo_grid(a)?)?;
    let mut csv = Vec::new();
    write_occupation_csv(&rows, &mut csv)?;
    Ok(Outcome {
        meta: Meta::new("thermo", Some(info), a.common.seed),
        passed: true,
        body: json!({ "partition_function": stats.form.to_string(), "radius": stats.radius, "rows": rows }),
        csv: Some(csv),
    })
}

#[derive(Deserialize)]
struct HFile {
    h: Vec<Vec<[f64; 2]>>,
}

fn read_h(path: &Path) -> Result<CMat> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let file: HFile = serde_json::from_str(&text)?;
    let n = file.h.len();
    if file.h.iter().any(|row| row.len() != n) {
        return Err(Error::Shape("h must be square".into()));
    }
    Ok(CMat::from_fn(n, n, |i, j| C64::new(file.h[i][j][0], file.h[i][j][1])))
}

fn cmd_freegas(a: &FreegasArgs) -> Result<Outcome> {
    let (r, info) = a.source.load(true)?;
    let h = match &a.h_file {
        Some(path) => read_h(path)?,
        None => {
            let mu = a.mu.clone().ok_or_else(|| Error::Invalid("--mu (or --h-file) is required".into()))?;
            let spec = SpinChainSpec::new(mu.len(), a.j.clone().unwrap_or_default(), mu)?;
            spec.hopping_matrix()
        }
    };
    let stats = Statistics::from_rmatrix(&r)?;
    let sol: ModeSolution = diagonalize(&h)?;
    let z = partition_function(&stats, &sol, a.beta)?;
    let f = free_energy(&stats, &sol, a.beta)?;
    let corr = static_correlators(&stats, &sol, a.beta)?;
    let second: Vec<f64> =
        sol.epsilons.iter().map(|e| stats.moment((-a.beta * e).exp(), 2)).collect::<Result<_>>()?;
    let n = sol.modes();
    let mut commutators = Vec::with_capacity(a.time.len());
    for &t in &a.time {
        let mut rows = vec![vec![C64::new(0.0, 0.0); n]; n];
        for (ia, row) in rows.iter_mut().enumerate() {
            for (ib, v) in row.iter_mut().enumerate() {
                *v = unequal_time_commutator(&stats, &sol, a.beta, ia, ib, t)?;
            }
        }
        commutators.push(json!({ "t": t, "matrix": rows }));
    }
    let csv = csv_table(
        &["mode", "epsilon", "occupation", "second_moment"],
        (0..n).map(|k| {
            vec![k.to_string(), format_f64(sol.epsilons[k]), format_f64(corr.occupations[k]), format_f64(second[k])]
        }),
    )?;
    Ok(Outcome {
        meta: Meta::new("freegas", Some(info), a.common.seed).tol("degeneracy", crate::freegas::DEGENERACY_TOL),
        passed: true,
        body: json!({
            "beta": a.beta,
            "epsilons": sol.epsilons,
            "u": matrix_rows(&sol.u),
            "partition_function": z,
            "free_energy": f,
            "occupations": corr.occupations,
            "second_moments": second,
            "e_mode": matrix_rows(&corr.e_mode),
            "ee_mode": matrix_rows(&corr.ee_mode),
            "e_position": matrix_rows(&corr.e_position),
            "degenerate_pairs": corr.degenerate_pairs,
            "commutators": commutators,
        }),
        csv: Some(csv),
    })
}

/// `rmatrix` in a chain file: a path (relative to the chain file), a built-in,
/// or the R-matrix file format inline.
#[derive(Deserialize)]
#[serde(untagged)]
enum RSpec {
    Path(PathBuf),
    Builtin {
        builtin: Builtin,
        m: Option<usize>,
        #[serde(default)]
        negate: bool,
    },
    Inline(RMatrixFile),
}

#[derive(Deserialize)]
struct ChainFile {
    rmatrix: RSpec,
    #[serde(rename = "N")]
    sites: usize,
    #[serde(rename = "J")]
    j: Vec<f64>,
    mu: Vec<f64>,
}

fn chain_input(a: &ChainArgs) -> Result<(RMatrix, RInfo, SpinChainSpec)> {
    if let Some(path) = &a.chain_file {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let file: ChainFile = serde_json::from_str(&text)?;
        let validate = !a.source.no_validate;
        let (r, info) = match file.rmatrix {
            RSpec::Path(p) => {
                let p = path.parent().map(|d| d.join(&p)).unwrap_or(p);
                let label = p.display().to_string();
                finish_source(load_file(&p, validate)?, label, a.source.negate)
            }
            RSpec::Builtin { builtin: kind, m, negate } => {
                finish_source(load_builtin(kind, m)?, kind.to_string(), negate ^ a.source.negate)
            }
            RSpec::Inline(f) => {
                let r = RMatrix::from_json_str(&serde_json::to_string(&f)?, validate)?;
                finish_source(r, "inline".into(), a.source.negate)
            }
        };
        return Ok((r, info, SpinChainSpec::new(file.sites, file.j, file.mu)?));
    }
    let (r, info) = a.source.load(true)?;
    let sites = a.sites.ok_or_else(|| Error::Invalid("--sites (or --chain-file) is required".into()))?;
    let spec = if a.random {
        SpinChainSpec::random(sites, &mut ChaCha8Rng::seed_from_u64(a.common.seed))?
    } else {
        let j = a.j.clone().unwrap_or_else(|| vec![1.0; sites.saturating_sub(1)]);
        let mu = a.mu.clone().unwrap_or_else(|| vec![0.0; sites]);
        SpinChainSpec::new(sites, j, mu)?
    };
    Ok((r, info, spec))
}

const CHAIN_TOL: f64 = 1e-10;
const THERMAL_TOL: f64 = 1e-8;

fn cmd_chain(a: &ChainArgs) -> Result<Outcome> {
    let (r, info, spec) = chain_input(a)?;
    let tol = a.common.tol.unwrap_or(CHAIN_TOL);
    let ops = build_local_ops(&r)?;
    let chain = build_chain(&spec, &ops)?;
    let hamiltonian_gap = csr_max_abs_diff(&chain.h_spin, &chain.h_para);
    let mpo = verify_mpo_crs(&chain, &r)?;
    let charge = charge_conservation(&chain);
    let spectrum = spectrum_crosscheck(&chain, &ops)?;
    let imag_ok = spectrum.max_imag <= SPECTRUM_TOL * spectrum.spectral_radius.max(1.0);
    let mut thermal = Vec::with_capacity(a.beta.len());
    for &beta in &a.beta {
        thermal.push(thermal_crosscheck(&chain, &ops, beta)?);
    }
    let thermal_ok = thermal.iter().all(|t| t.max_error() <= THERMAL_TOL);
    let passed = hamiltonian_gap <= tol
        && mpo.max_residual() <= tol
        && charge.hamiltonian.max(charge.ladder) <= tol
        && spectrum.multiset_match
        && imag_ok
        && thermal_ok;
    let csv = csv_table(
        &["index", "predicted", "computed_re", "computed_im"],
        spectrum.predicted.iter().zip(&spectrum.computed).enumerate().map(|(k, (p, c))| {
            vec![k.to_string(), format_f64(*p), format_f64(c.re), format_f64(c.im)]
        }),
    )?;
    let meta = Meta::new("chain", Some(info), a.common.seed)
        .tol("operator", tol)
        .tol("spectrum", spectrum.tolerance)
        .tol("thermal", THERMAL_TOL);
    Ok(Outcome {
        meta,
        passed,
        body: json!({
            "spec": spec,
            "dim": chain.dim,
            "hamiltonian_gap": hamiltonian_gap,
            "mpo_crs": mpo,
            "charge": charge,
            "spectrum": spectrum,
            "imaginary_parts_ok": imag_ok,
            "thermal": thermal,
        }),
        csv: Some(csv),
    })
}

#[derive(Serialize, Debug, Clone)]
struct Check {
    suite: &'static str,
    name: String,
    value: f64,
    tolerance: f64,
    passed: bool,
}

struct Checks {
    suite: &'static str,
    tol: Option<f64>,
    list: Vec<Check>,
}

impl Checks {
    /// `value ≤ tolerance`, with the tolerance overridable from the command line.
    fn residual(&mut self, name: impl Into<String>, value: f64, default_tol: f64) {
        let tolerance = self.tol.unwrap_or(default_tol);
        self.push(name.into(), value, tolerance);
    }

    /// Exact comparison; not affected by `--tol`.
    fn exact(&mut self, name: impl Into<String>, ok: bool) {
        self.push(name.into(), if ok { 0.0 } else { 1.0 }, 0.0);
    }

    fn push(&mut self, name: String, value: f64, tolerance: f64) {
        let passed = value.is_finite() && value <= tolerance;
        self.list.push(Check { suite: self.suite, name, value, tolerance, passed });
    }
}

fn cmd_selftest(a: &SelftestArgs) -> Result<Outcome> {
    let mut suites = if a.suite.is_empty() { Suite::ALL.to_vec() } else { a.suite.clone() };
    suites.sort();
    suites.dedup();
    let mut checks = Vec::new();
    // Timings vary between runs, so they go to stderr only.
    let mut timings = BTreeMap::new();
    for s in &suites {
        let start = Instant::now();
        let mut c = Checks { suite: s.name(), tol: a.common.tol, list: Vec::new() };
        run_suite(*s, &mut c, a.common.seed)?;
        timings.insert(s.name(), start.elapsed().as_secs_f64());
        checks.extend(c.list);
    }
    let passed = checks.iter().all(|c| c.passed);
    for s in &suites {
        let mine: Vec<&Check> = checks.iter().filter(|c| c.suite == s.name()).collect();
        let worst = mine.iter().map(|c| c.value).fold(0.0, f64::max);
        let ok = mine.iter().all(|c| c.passed);
        eprintln!(
            "{:<10} {}  {} checks, worst {:e}, {:.2}s",
            s.name(),
            if ok { "pass" } else { "FAIL" },
            mine.len(),
            worst,
            timings[s.name()]
        );
    }
    let csv = csv_table(
        &["suite", "check", "value", "tolerance", "passed"],
        checks.iter().map(|c| {
            vec![
                c.suite.to_string(),
                c.name.clone(),
                format_f64(c.value),
                format_f64(c.tolerance),
                c.passed.to_string(),
            ]
        }),
    )?;
    let mut meta = Meta::new("selftest", None, a.common.seed);
    if let Some(t) = a.common.tol {
        meta = meta.tol("override", t);
    }
    Ok(Outcome {
        meta,
        passed,
        body: json!({ "suites": suites.iter().map(|s| s.name()).collect::<Vec<_>>(), "checks": checks }),
        csv: Some(csv),
    })
}

fn species(kind: Builtin, m: usize) -> Result<RMatrix> {
    builtin(kind, m, None)
}

fn label(kind: Builtin, m: usize) -> String {
    format!("{kind} m={m}")
}

fn run_suite(suite: Suite, c: &mut Checks, seed: u64) -> Result<()> {
    match suite {
        Suite::Ybe => {
            for kind in Builtin::ALL {
                let ms: &[usize] = if matches!(kind, Builtin::Fermion | Builtin::Boson) { &[1] } else { &[2, 3, 5] };
                for &m in ms {
                    let r = species(kind, m)?;
                    c.residual(label(kind, m), ybe_check(&r, 0.0).max_residual, 1e-12);
                    c.residual(format!("-{}", label(kind, m)), ybe_check(&negate(&r), 0.0).max_residual, 1e-12);
                }
            }
        }
        Suite::Exclusion => {
            for kind in Builtin::ALL {
                let ms: &[usize] = if matches!(kind, Builtin::Fermion | Builtin::Boson) { &[1] } else { &[2, 3, 4] };
                for &m in ms {
                    let r = species(kind, m)?;
                    let d = exclusion_statistics(&r, 4)?;
                    let cf = ClosedForm::for_rmatrix(&r).expect("built-ins have closed forms").series(4);
                    let ok = d.iter().zip(&cf).all(|(&x, &y)| x as i64 == y);
                    c.exact(format!("{} d_n", label(kind, m)), ok);
                }
            }
        }
        Suite::Series => {
            let r = negate(&species(Builtin::Ex4, 3)?);
            let rec = series_reciprocity_check(&r, 6)?;
            c.exact("-ex4 m=3 reciprocity", rec.max_coeff_error == 0);
            c.exact("-ex4 m=3 d_n", rec.series[..4] == [1, 3, 8, 21]);
            for kind in [Builtin::Ex1, Builtin::Ex3, Builtin::Ex4] {
                let rec = series_reciprocity_check(&species(kind, 2)?, 5)?;
                c.exact(format!("{} reciprocity", label(kind, 2)), rec.max_coeff_error == 0);
            }
        }
        Suite::Crs => {
            for (kind, m, modes) in [(Builtin::Fermion, 1, 3), (Builtin::Ex3, 2, 3), (Builtin::Ex4, 3, 2)] {
                let ops = FockOperators::new(build_multimode(&species(kind, m)?, modes, None)?);
                c.residual(format!("{} N={modes}", label(kind, m)), verify_crs(&ops).max_residual(), 1e-10);
            }
        }
        Suite::GlN => {
            for (kind, m, modes) in [(Builtin::Fermion, 1, 3), (Builtin::Ex3, 2, 3), (Builtin::Ex4, 3, 2)] {
                let ops = FockOperators::new(build_multimode(&species(kind, m)?, modes, None)?);
                let bil = build_bilinears(&ops);
                c.residual(format!("{} N={modes} gl_N", label(kind, m)), verify_gl_n(&bil).max_residual, 1e-10);
                c.residual(
                    format!("{} N={modes} ladder", label(kind, m)),
                    verify_ladder(&ops, &bil).max_residual(),
                    1e-10,
                );
            }
        }
        Suite::Locality => {
            let ops = FockOperators::new(build_multimode(&species(Builtin::Ex3, 2)?, 3, None)?);
            let bil = build_bilinears(&ops);
            let rep = locality_check(&bil, &[0], &[1, 2], 2, 4, seed)?;
            c.residual("ex3 m=2 N=3 {0} vs {1,2}", rep.max_residual, 1e-10);
        }
        Suite::Local => {
            for (kind, m) in [(Builtin::Fermion, 1), (Builtin::Ex1, 2), (Builtin::Ex2, 2), (Builtin::Ex3, 2), (Builtin::Ex4, 3)]
            {
                let ops = build_local_ops(&species(kind, m)?)?;
                c.residual(format!("{} local algebra", label(kind, m)), local_algebra(&ops).max_residual(), 1e-10);
                c.residual(format!("{} crossing", label(kind, m)), crossing_relations(&ops).max_residual(), 1e-10);
            }
        }
        Suite::Thermo => {
            for (kind, m, expected) in [(Builtin::Ex3, 5, 5.0 / 6.0), (Builtin::Ex4, 5, 1.0), (Builtin::Fermion, 1, 0.5)] {
                let stats = Statistics::from_rmatrix(&species(kind, m)?)?;
                let err = (stats.occupation(1.0)? - expected).abs() / expected;
                c.residual(format!("{} occupation at 0", label(kind, m)), err, 1e-12);
            }
        }
        Suite::Freegas => {
            // Z from the closed form against a sum over the predicted many-body levels.
            let spec = SpinChainSpec::random(3, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let sol = diagonalize(&spec.hopping_matrix())?;
            for (kind, m) in [(Builtin::Fermion, 1), (Builtin::Ex3, 2), (Builtin::Ex4, 3)] {
                let r = species(kind, m)?;
                let stats = Statistics::from_rmatrix(&r)?;
                let d = exclusion_statistics(&r, stats.form.degree().unwrap_or(0))?;
                for beta in [0.3, 1.0, 3.0] {
                    let z = partition_function(&stats, &sol, beta)?;
                    let direct: f64 = predicted_spectrum(&sol.epsilons, &d).iter().map(|e| (-beta * e).exp()).sum();
                    c.residual(format!("{} Z beta={beta}", label(kind, m)), (z - direct).abs() / direct, 1e-10);
                }
            }
        }
        Suite::Chain => {
            for (kind, m, sites) in [(Builtin::Fermion, 1, 6), (Builtin::Ex3, 2, 4), (Builtin::Ex4, 3, 3)] {
                let r = species(kind, m)?;
                let ops = build_local_ops(&r)?;
                let spec = SpinChainSpec::random(sites, &mut ChaCha8Rng::seed_from_u64(seed))?;
                let chain = build_chain(&spec, &ops)?;
                let tag = format!("{} N={sites}", label(kind, m));
                c.residual(format!("{tag} H_spin = H_para"), csr_max_abs_diff(&chain.h_spin, &chain.h_para), 1e-10);
                c.residual(format!("{tag} string CRs"), verify_mpo_crs(&chain, &r)?.max_residual(), 1e-10);
                let sp = spectrum_crosscheck(&chain, &ops)?;
                c.residual(format!("{tag} spectrum"), sp.max_eigenvalue_gap / sp.spectral_radius.max(1.0), SPECTRUM_TOL);
            }
        }
        Suite::Pt => {
            let ops = build_local_ops(&species(Builtin::Ex4, 3)?)?;
            let rep = pt_reality(&ops, 2, 5, seed)?;
            c.residual("ex4 m=3 N=2 max|Im|/radius", rep.max_relative_imag, 1e-8);
        }
    }
    Ok(())
}
