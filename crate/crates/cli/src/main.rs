use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crossover_core::covmodels::{markov_case, CovSpec, Kernel, ProportionalScenario};
use crossover_core::designs::{classify, make_oa, Design};
use crossover_core::efficiency::{
    default_r_grid, default_rho_grid, fmt_sig, relative_difference, sweep, upper_bound_u, write_aggregate_csv,
    write_sweep_csv, CaseSpec, SweepSpec,
};
use crossover_core::fixtures;
use crossover_core::infomat::{info_markov, info_proportional, Method, Representation};
use crossover_core::matlib::{from_rows, is_completely_symmetric, to_rows};
use crossover_core::search::{enumerate_binary, rank_by_trace, sample_binary, RankOptions, DEFAULT_CAP};
use crossover_core::{parse_scenario, Error, Scenario, Tolerance};

const THREADS_ENV: &str = "CROSSOVER_OPTIM_THREADS";

#[derive(Parser)]
#[command(name = "crossover-optim", version, about = "Evaluate and search crossover designs for multivariate trials")]
struct Cli {
    /// Relative comparison tolerance (eq_tol).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Information trace, bound and class flags for one design.
    Eval {
        #[arg(long)]
        design: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate several designs under one scenario.
    Compare {
        #[arg(long, required = true)]
        design: Vec<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate trace, bound and RD over (r, rho) grids.
    Sweep {
        #[arg(long)]
        design: Vec<PathBuf>,
        /// Built-in design set: p3, p4 or gene.
        #[arg(long)]
        fixtures: Option<String>,
        /// Shorthand for --fixtures gene.
        #[arg(long)]
        gene: bool,
        /// Markov case 1-7 or a proportional kernel family (Mat05, Mat15, MatInf); repeatable.
        #[arg(long)]
        case: Vec<String>,
        #[arg(long)]
        r_grid: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        rho_grid: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        sigma11: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma22: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank binary designs with p = t by trace.
    Search {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Evaluate this many sampled designs instead of enumerating.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Do not inject d1, d2 and the OA into sampled runs.
        #[arg(long)]
        no_fixtures: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the built-in designs as text files.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one set: p3, p4 or gene.
        #[arg(long)]
        fixtures: Option<String>,
    },
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Markov case 1-7 or proportional kernel family, instead of --scenario.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma11: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma22: f64,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Numerical(String),
    Capacity(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Capacity(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) | CliError::Capacity(m) => m,
        }
    }
}

fn core_err(context: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| {
        let msg = format!("{context}: {e}");
        match e {
            Error::NotPositiveDefinite { .. } => CliError::Numerical(msg),
            Error::CapacityExceeded { .. } => CliError::Capacity(msg),
            _ => CliError::Input(msg),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_design(path: &Path) -> CliResult<Design> {
    Design::parse(&read_file(path)?).map_err(core_err(&path.display().to_string()))
}

fn scenario_from_case(case: &str, r: f64, rho: f64, s11: f64, s22: f64) -> Result<Scenario, Error> {
    match CaseSpec::parse(case)? {
        CaseSpec::Markov(c) => Ok(Scenario::Markov(markov_case(c, r, s11, s22, rho)?)),
        CaseSpec::Proportional(f) => {
            let off = rho * (s11 * s22).sqrt();
            let gamma = from_rows(&[&[s11, off], &[off, s22]]);
            Ok(Scenario::Proportional(ProportionalScenario::new(gamma, CovSpec::Kernel(Kernel::new(f, r)?))?))
        }
    }
}

fn load_scenario(a: &ScenarioArgs) -> CliResult<Scenario> {
    match (&a.scenario, &a.case) {
        (Some(path), None) => parse_scenario(&read_file(path)?).map_err(core_err(&path.display().to_string())),
        (None, Some(case)) => {
            let r = a.r.ok_or_else(|| CliError::Input("--case needs --r".into()))?;
            let rho = a.rho.ok_or_else(|| CliError::Input("--case needs --rho".into()))?;
            scenario_from_case(case, r, rho, a.sigma11, a.sigma22).map_err(core_err("scenario"))
        }
        (Some(_), Some(_)) => Err(CliError::Input("give either --scenario or --case, not both".into())),
        (None, None) => Err(CliError::Input("a scenario is required (--scenario PATH or --case N --r R --rho RHO)".into())),
    }
}

/// "a:b:step" or a comma-separated list.
fn parse_grid(spec: &str, what: &str) -> CliResult<Vec<f64>> {
    let bad = |m: String| CliError::Input(format!("--{what}-grid {spec:?}: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad("need a <= b and step > 0".into()));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return Err(bad("too many grid points".into()));
            }
            (0..count).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect()
        }
        [single] => single.split(',').map(num).collect::<CliResult<Vec<f64>>>()?,
        _ => return Err(bad("expected a:b:step or a comma-separated list".into())),
    };
    Ok(grid)
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| CliError::Input(format!("stdout: {e}")))
        }
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn evaluate(d: &Design, s: &Scenario, tol: Tolerance, label: &str) -> CliResult<Value> {
    let err = core_err(label);
    let flags = classify(d);
    let mut v = json!({
        "design": label,
        "t": d.t(), "n": d.n(), "p": d.p(),
        "structure": s.structure(),
        "classification": flags,
    });
    match s {
        Scenario::Proportional(ps) => {
            let c = info_proportional(d, ps, Method::Closed, tol).map_err(&err)?;
            v["scenario"] = json!(ps.describe());
            v["trace"] = num(c.trace());
            v["complete_symmetric"] = json!(is_completely_symmetric(&c.matrix, tol));
            v["info_matrix"] = json!(to_rows(&c.matrix));
            let t = d.t();
            if d.p() == t && t >= 2 && d.n().is_multiple_of(t * (t - 1)) {
                if let Ok(oa) = make_oa(t, d.n() / (t * (t - 1))) {
                    let r = info_proportional(&oa, ps, Method::Closed, tol).map_err(&err)?;
                    v["efficiency_vs_oa"] = num(c.trace() / r.trace());
                }
            }
        }
        Scenario::Markov(ms) => {
            let c = info_markov(d, ms, Method::Closed, Representation::Z43, tol).map_err(&err)?;
            v["scenario"] = json!(ms.describe());
            v["trace"] = num(c.trace());
            v["complete_symmetric"] = json!(is_completely_symmetric(&c.matrix, tol));
            v["info_matrix"] = json!(to_rows(&c.matrix));
            if d.p() == d.t() && d.t() >= 3 {
                v["upper_bound"] = num(upper_bound_u(ms, d.t(), d.n(), d.p()).map_err(&err)?);
                if flags.binary {
                    v["rd"] = num(relative_difference(d, ms, tol).map_err(&err)?);
                }
            }
        }
    }
    Ok(v)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn agg_path(out: &Path) -> PathBuf {
    let s = out.to_string_lossy();
    let stem = s.strip_suffix(".csv").unwrap_or(&s);
    PathBuf::from(format!("{stem}_agg.csv"))
}

fn run(cli: Cli) -> CliResult<()> {
    let tol = match cli.tol {
        Some(x) => Tolerance::default().with_eq(x).map_err(core_err("--tol"))?,
        None => Tolerance::default(),
    };
    match cli.command {
        Command::Eval { design, scenario, out } => {
            let d = load_design(&design)?;
            let s = load_scenario(&scenario)?;
            let v = evaluate(&d, &s, tol, &design.display().to_string())?;
            write_output(out.as_deref(), &pretty(&v))
        }
        Command::Compare { design, scenario, out } => {
            let s = load_scenario(&scenario)?;
            let mut rows = Vec::new();
            for path in &design {
                let d = load_design(path)?;
                let mut v = evaluate(&d, &s, tol, &path.display().to_string())?;
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("info_matrix");
                }
                rows.push(v);
            }
            let best = rows
                .iter()
                .filter_map(|r| r["trace"].as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            for r in rows.iter_mut() {
                if let Some(tr) = r["trace"].as_f64() {
                    r["relative_to_best"] = num(tr / best);
                }
            }
            write_output(out.as_deref(), &pretty(&json!({ "designs": rows })))
        }
        Command::Sweep { design, fixtures: set, gene, case, r_grid, rho_grid, sigma11, sigma22, out } => {
            let set = if gene { Some("gene".to_string()) } else { set };
            let mut designs: Vec<(String, Design)> = Vec::new();
            if let Some(name) = &set {
                let fx = fixtures::fixture_set(name)
                    .ok_or_else(|| CliError::Input(format!("unknown fixture set {name:?} (p3, p4, gene)")))?;
                designs.extend(fx.into_iter().map(|(n, d)| (n.to_string(), d)));
            }
            for path in &design {
                let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
                designs.push((name, load_design(path)?));
            }
            if designs.is_empty() {
                return Err(CliError::Input("sweep needs at least one --design or --fixtures".into()));
            }
            let cases: Vec<CaseSpec> = if case.is_empty() {
                let range = if set.as_deref() == Some("gene") { 5..=7 } else { 1..=7 };
                range.map(CaseSpec::Markov).collect()
            } else {
                case.iter().map(|c| CaseSpec::parse(c)).collect::<Result<_, _>>().map_err(core_err("--case"))?
            };
            let r_grid = match r_grid {
                Some(g) => parse_grid(&g, "r")?,
                None => default_r_grid(),
            };
            let rho_grid = match rho_grid {
                Some(g) => parse_grid(&g, "rho")?,
                None => default_rho_grid(),
            };
            let spec = SweepSpec { designs, cases, r_grid, rho_grid, sigma11, sigma22, tol };
            let res = sweep(&spec).map_err(core_err("sweep"))?;
            let mut main = Vec::new();
            write_sweep_csv(&res, &mut main).expect("in-memory write");
            let main = String::from_utf8(main).expect("utf8");
            match out {
                Some(p) => {
                    write_output(Some(&p), &main)?;
                    let mut agg = Vec::new();
                    write_aggregate_csv(&res, &mut agg).expect("in-memory write");
                    write_output(Some(&agg_path(&p)), &String::from_utf8(agg).expect("utf8"))?;
                    let worst = res.aggregates.iter().map(|a| a.max_rd).fold(f64::NEG_INFINITY, f64::max);
                    eprintln!("{} rows; max rd {}", res.rows.len(), fmt_sig(worst));
                    Ok(())
                }
                None => write_output(None, &main),
            }
        }
        Command::Search { t, n, scenario, sample, seed, cap, top, no_fixtures, out } => {
            let s = load_scenario(&scenario)?;
            let reference = if t >= 2 && n % (t * (t - 1)) == 0 { make_oa(t, n / (t * (t - 1))).ok() } else { None };
            let opts = RankOptions { top, reference, tol, ..RankOptions::default() };
            let (mode, report) = match sample {
                Some(count) => {
                    let it = sample_binary(t, n, count, seed, !no_fixtures).map_err(core_err("sample"))?;
                    ("sample", rank_by_trace(it, &s, &opts).map_err(core_err("search"))?)
                }
                None => {
                    let it = enumerate_binary(t, n, cap).map_err(core_err("enumerate"))?;
                    ("exhaustive", rank_by_trace(it, &s, &opts).map_err(core_err("search"))?)
                }
            };
            let best: Vec<Value> = report
                .best
                .iter()
                .map(|b| json!({ "design": b.design.to_text(), "trace": b.trace, "index": b.index }))
                .collect();
            let v = json!({
                "mode": mode,
                "t": t, "n": n, "p": t,
                "structure": s.structure(),
                "seed": seed,
                "evaluated": report.evaluated,
                "best": best,
                "oa_rank": report.oa_rank,
                "reference_trace": report.reference_trace,
                "ties": report.ties,
                "upper_bound": report.upper_bound,
                "exceeding_bound": report.exceeding_bound,
            });
            write_output(out.as_deref(), &pretty(&v))
        }
        Command::Fixtures { out, fixtures: set } => {
            let names: Vec<&str> = match set.as_deref() {
                Some(n) => vec![n],
                None => vec!["p3", "p4", "gene"],
            };
            fs::create_dir_all(&out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
            for name in names {
                let fx = fixtures::fixture_set(name)
                    .ok_or_else(|| CliError::Input(format!("unknown fixture set {name:?} (p3, p4, gene)")))?;
                for (label, d) in fx {
                    let path = out.join(format!("{label}_{name}.txt"));
                    let text = format!("# {label} ({name})\n{}", d.to_text());
                    write_output(Some(&path), &text)?;
                    println!("{}", path.display());
                }
            }
            Ok(())
        }
    }
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
