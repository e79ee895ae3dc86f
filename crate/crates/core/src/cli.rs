//! Command-line front end. Grids are written as CSV, single-run reports as
//! JSON; both carry a provenance header with the tool version and every
//! resolved parameter.

use std::env;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{invalid, Error, Result};
use crate::meanfield;
use crate::model::{self, DisorderSpec, Ensemble, ThermalSpec};
use crate::oracle::{self, Branch, EdOptions, HamiltonianSpec};
use crate::phase;
use crate::specialfn::{self, default_rule};

/// Environment variable naming the directory for relative `-o` paths.
pub const OUTPUT_DIR_ENV: &str = "DICKE_OUTPUT_DIR";
/// Per-qubit arrays are dropped from `solve` reports above this many qubits
/// unless `--angles` is given.
pub const ANGLE_LIMIT: usize = 1000;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "dicke", version, about = "Disordered Dicke model solvers")]
struct Cli {
    /// Worker threads for sweeps (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file; relative paths resolve against $DICKE_OUTPUT_DIR when set
    #[arg(short = 'o', long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean-field stationary points and ground state
    Solve {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.0)]
        kt: f64,
        /// Always include per-qubit angles and energies
        #[arg(long)]
        angles: bool,
    },
    /// Global bias shift making x = 0 stationary
    Balance {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.0)]
        kt: f64,
        /// Also write the shifted ensemble to this file
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Phase of an ensemble
    Classify {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.0)]
        kt: f64,
    },
    /// Critical (g/g0)^2 against sigma/Delta
    Boundary {
        #[arg(long, default_value_t = 3.0)]
        sigmamax: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// k_BT/Delta values (repeatable)
        #[arg(long = "kt", default_values_t = vec![0.0])]
        kts: Vec<f64>,
    },
    /// f1 and f2 against sigma/Delta
    Fig1 {
        #[arg(long, default_value_t = 10.0)]
        rmax: f64,
        #[arg(long, default_value_t = 500)]
        points: usize,
    },
    /// Disorder-averaged thermal criticality factor S(alpha, sigma/Delta)
    Fig2a {
        #[arg(long, default_value_t = 0.05)]
        alphamin: f64,
        #[arg(long, default_value_t = 20.0)]
        alphamax: f64,
        #[arg(long, default_value_t = 3.0)]
        sigmamax: f64,
        #[arg(long, default_value_t = 80)]
        points: usize,
    },
    /// Critical temperature over (g/g0)^2 and sigma/Delta
    Fig2b {
        #[arg(long, default_value_t = 0.0)]
        g2min: f64,
        #[arg(long, default_value_t = 4.0)]
        g2max: f64,
        #[arg(long, default_value_t = 3.0)]
        sigmamax: f64,
        #[arg(long, default_value_t = 80)]
        points: usize,
    },
    /// Exact diagonalization report for a small ensemble
    Oracle {
        #[command(flatten)]
        source: Source,
        /// Highest Fock level kept
        #[arg(long, default_value_t = 30)]
        cutoff: usize,
        /// Number of eigenvalues reported
        #[arg(short = 'k', default_value_t = 4)]
        k: usize,
        /// Symmetry-breaking field eta added as eta·Σσz
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
    },
    /// Draw a Gaussian-disorder ensemble
    Sample {
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 1.0)]
        mean_delta: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_delta: f64,
        #[arg(long, default_value_t = 0.0)]
        mean_epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_epsilon: f64,
        #[arg(long)]
        mean_g: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_g: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Ensemble file
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Uniform ensemble, e.g. N=100,omega=1,delta=1,g=0.1[,epsilon=0]
    #[arg(long)]
    uniform: Option<UniformSpec>,
}

#[derive(Debug, Clone, PartialEq)]
struct UniformSpec {
    n: usize,
    omega: f64,
    delta: f64,
    epsilon: f64,
    g: f64,
}

impl FromStr for UniformSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut n = None;
        let (mut omega, mut delta, mut epsilon, mut g) = (None, None, 0.0, None);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
            let num = || value.trim().parse::<f64>().map_err(|e| format!("{key}: {e}"));
            match key.trim() {
                "N" | "n" => n = Some(value.trim().parse::<usize>().map_err(|e| format!("N: {e}"))?),
                "omega" => omega = Some(num()?),
                "delta" => delta = Some(num()?),
                "epsilon" => epsilon = num()?,
                "g" => g = Some(num()?),
                other => return Err(format!("unknown key '{other}'")),
            }
        }
        Ok(UniformSpec {
            n: n.ok_or("missing N")?,
            omega: omega.ok_or("missing omega")?,
            delta: delta.ok_or("missing delta")?,
            epsilon,
            g: g.ok_or("missing g")?,
        })
    }
}

impl Source {
    fn load(&self) -> Result<(Ensemble, Value)> {
        match (&self.ensemble, &self.uniform) {
            (Some(path), _) => Ok((model::load_ensemble(path)?, json!({ "ensemble": path.display().to_string() }))),
            (None, Some(u)) => Ok((
                model::uniform_ensemble(u.n, u.omega, u.delta, u.epsilon, u.g)?,
                json!({ "uniform": { "N": u.n, "omega": u.omega, "delta": u.delta, "epsilon": u.epsilon, "g": u.g } }),
            )),
            (None, None) => Err(invalid("no ensemble given")),
        }
    }
}

/// Usage problems detected after parsing; reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

enum Failure {
    Usage(Usage),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u)
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code: 0 on success, 2 on usage errors, 1 on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(Usage(msg))) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Usage("--threads must be >= 1".into()).into());
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::ResourceLimit(format!("thread pool: {e}")))?;
    let output = pool.install(|| dispatch(cli))?;
    let text = output.render(cli.format)?;
    write_output(cli.output.as_deref(), &text)?;
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        Some(p) => fs::write(resolve_output(p), text)?,
    }
    Ok(())
}

fn resolve_output(p: &Path) -> PathBuf {
    match env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if p.is_relative() && !dir.is_empty() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Text(&'static str),
    Bool(bool),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Text(s) => s.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Missing => Value::Null,
        }
    }
}

struct Provenance {
    command: &'static str,
    parameters: Value,
    seed: Option<u64>,
}

impl Provenance {
    fn to_json(&self) -> Value {
        json!({
            "tool": "dicke",
            "version": VERSION,
            "command": self.command,
            "parameters": self.parameters,
            "seed": self.seed,
        })
    }
}

enum Output {
    Table {
        provenance: Provenance,
        columns: Vec<&'static str>,
        rows: Vec<Vec<Cell>>,
    },
    Report {
        provenance: Provenance,
        body: Map<String, Value>,
        /// Report commands that also have a one-row table form.
        table: Option<(Vec<&'static str>, Vec<Cell>)>,
    },
}

impl Output {
    fn render(self, format: Option<Format>) -> std::result::Result<String, Failure> {
        match self {
            Output::Table { provenance, columns, rows } => match format.unwrap_or(Format::Csv) {
                Format::Csv => Ok(render_csv(&provenance, &columns, &rows)?),
                Format::Json => {
                    let rows: Vec<Value> = rows
                        .iter()
                        .map(|r| {
                            Value::Object(columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect())
                        })
                        .collect();
                    Ok(pretty(&json!({ "provenance": provenance.to_json(), "rows": rows })))
                }
            },
            Output::Report { provenance, mut body, table } => match (format.unwrap_or(Format::Json), table) {
                (Format::Json, _) => {
                    body.insert("provenance".into(), provenance.to_json());
                    Ok(pretty(&Value::Object(body)))
                }
                (Format::Csv, Some((columns, row))) => Ok(render_csv(&provenance, &columns, &[row])?),
                (Format::Csv, None) => Err(Usage(format!(
                    "'{}' writes a JSON report; --format csv is not supported",
                    provenance.command
                ))
                .into()),
            },
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn render_csv(provenance: &Provenance, columns: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut head = String::new();
    let _ = writeln!(head, "# dicke {VERSION}");
    let _ = writeln!(head, "# command: {}", provenance.command);
    let _ = writeln!(head, "# parameters: {}", provenance.parameters);
    match provenance.seed {
        Some(s) => {
            let _ = writeln!(head, "# seed: {s}");
        }
        None => head.push_str("# seed: none\n"),
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(io::Error::other(e));
    w.write_record(columns).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::csv)).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(io::Error::other(e.to_string())))?;
    head.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(head)
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| if i == points - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

fn check_axis(name: &str, lo: f64, hi: f64, points: usize) -> std::result::Result<(), Usage> {
    if points < 2 {
        return Err(Usage(format!("--points must be >= 2 for a sweep, got {points}")));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Usage(format!("{name} range needs finite min < max, got [{lo}, {hi}]")));
    }
    Ok(())
}

fn thermal(kt: f64) -> std::result::Result<ThermalSpec, Usage> {
    ThermalSpec::new(kt).map_err(|e| Usage(e.to_string()))
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("report bodies are objects"),
    }
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut a, b) {
        a.extend(b);
    }
    a
}

fn dispatch(cli: &Cli) -> std::result::Result<Output, Failure> {
    match &cli.command {
        Command::Solve { source, kt, angles } => {
            let t = thermal(*kt)?;
            let (e, params) = source.load()?;
            let solution = meanfield::solve(&e, &t)?;
            let n = e.len();
            let ground = &solution.ground;
            let mut ground_json = json!({ "x": ground.x, "p": ground.p, "energy": ground.energy });
            if *angles || n <= ANGLE_LIMIT {
                let expectations: Vec<Value> = meanfield::qubit_expectations(ground, &t)
                    .iter()
                    .map(|(sx, sz)| json!({ "sigma_x": sx, "sigma_z": sz }))
                    .collect();
                ground_json = merge(
                    ground_json,
                    json!({
                        "thetas": ground.thetas,
                        "theta_primes": ground.theta_primes,
                        "omegas": ground.omegas,
                        "expectations": expectations,
                    }),
                );
            }
            Ok(Output::Report {
                provenance: Provenance {
                    command: "solve",
                    parameters: merge(params, json!({ "kt": kt, "angles": angles })),
                    seed: None,
                },
                body: object(json!({
                    "n": n,
                    "x0": solution.x0,
                    "bracket": solution.bracket,
                    "grid_points": solution.grid_points,
                    "stationary_points": solution.stationary_points,
                    "ground": ground_json,
                })),
                table: None,
            })
        }
        Command::Balance { source, kt, write } => {
            let t = thermal(*kt)?;
            let (e, params) = source.load()?;
            let (shift, balanced) = meanfield::balance_bias_at(&e, &t)?;
            if let Some(path) = write {
                model::save_ensemble(&balanced, resolve_output(path))?;
            }
            Ok(Output::Report {
                provenance: Provenance {
                    command: "balance",
                    parameters: merge(
                        params,
                        json!({ "kt": kt, "write": write.as_ref().map(|p| p.display().to_string()) }),
                    ),
                    seed: None,
                },
                body: object(json!({
                    "shift": shift,
                    "balance_residual": meanfield::balance_function(&balanced, &t, 0.0),
                    "total_coupling": balanced.total_coupling(),
                    "residual_at_origin": meanfield::residual(&balanced, &t, 0.0),
                })),
                table: None,
            })
        }
        Command::Classify { source, kt } => {
            let t = thermal(*kt)?;
            let (e, params) = source.load()?;
            let p = phase::classify(&e, &t)?;
            let columns = vec![
                "lambda",
                "g_over_g0_sq",
                "sigma_over_delta",
                "kt_over_delta",
                "criticality",
                "classification",
                "order_parameter",
                "bias_shift",
                "consistent",
            ];
            let row = vec![
                p.lambda.into(),
                p.g_over_g0_sq.into(),
                p.sigma_over_delta.into(),
                p.kt_over_delta.into(),
                p.criticality.into(),
                Cell::Text(p.classification.as_str()),
                p.order_parameter.into(),
                p.bias_shift.into(),
                Cell::Bool(p.consistent),
            ];
            Ok(Output::Report {
                provenance: Provenance {
                    command: "classify",
                    parameters: merge(params, json!({ "kt": kt })),
                    seed: None,
                },
                body: object(serde_json::to_value(p).expect("phase point serializes")),
                table: Some((columns, row)),
            })
        }
        Command::Boundary { sigmamax, points, kts } => {
            check_axis("sigma/delta", 0.0, *sigmamax, *points)?;
            for kt in kts {
                thermal(*kt)?;
            }
            let rule = default_rule();
            let sigmas = linspace(0.0, *sigmamax, *points);
            let cells: Vec<(f64, f64)> = kts.iter().flat_map(|&kt| sigmas.iter().map(move |&s| (kt, s))).collect();
            let rows = cells
                .par_iter()
                .map(|&(kt, s)| vec![s.into(), kt.into(), phase::critical_coupling_sq(s, kt, &rule).into()])
                .collect();
            Ok(Output::Table {
                provenance: Provenance {
                    command: "boundary",
                    parameters: json!({ "sigmamax": sigmamax, "points": points, "kt": kts }),
                    seed: None,
                },
                columns: vec!["sigma_over_delta", "kt_over_delta", "g_over_g0_sq"],
                rows,
            })
        }
        Command::Fig1 { rmax, points } => {
            check_axis("r", 0.0, *rmax, *points)?;
            let rows = linspace(0.0, *rmax, *points)
                .par_iter()
                .map(|&r| vec![r.into(), specialfn::f1(r).into(), specialfn::f2(r).into()])
                .collect();
            Ok(Output::Table {
                provenance: Provenance {
                    command: "fig1",
                    parameters: json!({ "rmax": rmax, "points": points }),
                    seed: None,
                },
                columns: vec!["sigma_over_delta", "f1", "f2"],
                rows,
            })
        }
        Command::Fig2a { alphamin, alphamax, sigmamax, points } => {
            if !(*alphamin > 0.0) {
                return Err(Usage(format!("--alphamin must be > 0, got {alphamin}")).into());
            }
            check_axis("alpha", *alphamin, *alphamax, *points)?;
            check_axis("sigma/delta", 0.0, *sigmamax, *points)?;
            let alphas = linspace(*alphamin, *alphamax, *points);
            let sigmas = linspace(0.0, *sigmamax, *points);
            let grid = phase::fig2a_grid(&alphas, &sigmas, &default_rule())?;
            let rows = alphas
                .iter()
                .zip(&grid)
                .flat_map(|(&a, row)| sigmas.iter().zip(row).map(move |(&s, &v)| vec![a.into(), s.into(), v.into()]))
                .collect();
            Ok(Output::Table {
                provenance: Provenance {
                    command: "fig2a",
                    parameters: json!({ "alphamin": alphamin, "alphamax": alphamax, "sigmamax": sigmamax, "points": points }),
                    seed: None,
                },
                columns: vec!["alpha", "sigma_over_delta", "s"],
                rows,
            })
        }
        Command::Fig2b { g2min, g2max, sigmamax, points } => {
            if *g2min < 0.0 {
                return Err(Usage(format!("--g2min must be >= 0, got {g2min}")).into());
            }
            check_axis("(g/g0)^2", *g2min, *g2max, *points)?;
            check_axis("sigma/delta", 0.0, *sigmamax, *points)?;
            let g2s = linspace(*g2min, *g2max, *points);
            let sigmas = linspace(0.0, *sigmamax, *points);
            let grid = phase::critical_temperature_grid(&g2s, &sigmas, &default_rule());
            let rows = g2s
                .iter()
                .zip(&grid)
                .flat_map(|(&g2, row)| {
                    sigmas
                        .iter()
                        .zip(row)
                        .map(move |(&s, &tc)| vec![g2.into(), s.into(), tc.into()])
                })
                .collect();
            Ok(Output::Table {
                provenance: Provenance {
                    command: "fig2b",
                    parameters: json!({ "g2min": g2min, "g2max": g2max, "sigmamax": sigmamax, "points": points }),
                    seed: None,
                },
                columns: vec!["g_over_g0_sq", "sigma_over_delta", "kt_c_over_delta"],
                rows,
            })
        }
        Command::Oracle { source, cutoff, k, eta } => {
            let (e, params) = source.load()?;
            let spec = HamiltonianSpec::new(e, *cutoff)?;
            let ed = oracle::lowest_eigenpairs_with(
                &spec,
                *k,
                EdOptions {
                    symmetry_breaking: *eta,
                    check_convergence: true,
                },
            )?;
            let h = oracle::build_hamiltonian(&spec);
            let branches: Map<String, Value> = Branch::ALL
                .iter()
                .map(|&b| {
                    let entry = match oracle::build_ansatz(&spec, b) {
                        Ok(a) => json!({
                            "energy": oracle::ansatz_energy(&h, &a),
                            "ground_overlap": oracle::overlap(&a, ed.ground_state()),
                            "x": if b == Branch::Right { a.x_right } else { a.x_left },
                        }),
                        Err(err) => json!({ "error": err.to_string() }),
                    };
                    (b.as_str().to_string(), entry)
                })
                .collect();
            let mut body = object(serde_json::to_value(&ed).expect("ed result serializes"));
            body.insert("dimension".into(), json!(spec.dimension()));
            body.insert("parity_commutator".into(), json!(oracle::parity_commutator_norm(&spec, &h)));
            body.insert("ansatz".into(), Value::Object(branches));
            Ok(Output::Report {
                provenance: Provenance {
                    command: "oracle",
                    parameters: merge(params, json!({ "cutoff": cutoff, "k": k, "eta": eta })),
                    seed: None,
                },
                body,
                table: None,
            })
        }
        Command::Sample {
            n,
            omega,
            mean_delta,
            sigma_delta,
            mean_epsilon,
            sigma_epsilon,
            mean_g,
            sigma_g,
            seed,
        } => {
            let spec = DisorderSpec {
                mean_delta: *mean_delta,
                sigma_delta: *sigma_delta,
                mean_epsilon: *mean_epsilon,
                sigma_epsilon: *sigma_epsilon,
                mean_g: *mean_g,
                sigma_g: *sigma_g,
                seed: *seed,
            };
            let e = model::sample_ensemble(&spec, *n, *omega)?;
            let doc: Value = serde_json::from_str(&model::ensemble_to_json(&e)).expect("ensemble json parses");
            let mut params = serde_json::to_value(spec).expect("spec serializes");
            params = merge(params, json!({ "n": n, "omega": omega }));
            Ok(Output::Report {
                provenance: Provenance {
                    command: "sample",
                    parameters: params,
                    seed: Some(*seed),
                },
                body: object(doc),
                table: None,
            })
        }
    }
}
