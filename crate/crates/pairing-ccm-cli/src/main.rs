//! Command-line driver producing plot-ready data files: exact reference
//! tables, warm-started N₀ sweeps with RPA diagnostics, multistart branch
//! scans, and RPA spectra for previously saved solutions.
//!
//! Exit codes: 0 success, 2 numerical non-convergence, 3 invalid
//! configuration. Every numeric field is emitted with 17 significant
//! digits, so JSON solution files reload to bitwise-identical amplitudes.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pairing_ccm::functional::{Gauge, Scheme, SchemeConfig};
use pairing_ccm::oracle;
use pairing_ccm::quasispin::ModelParams;
use pairing_ccm::rpa::{self, ModeClass, RpaTolerances};
use pairing_ccm::solver::{multistart_scan, newton_solve, SolutionPoint, SolverSettings};

mod format;
use format::{fmt_f64, to_json_17};

const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pairing-ccm",
    about = "Coupled-cluster solvers for the single-shell pairing model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact ground-state energies for every even particle number.
    Exact(ExactArgs),
    /// Warm-started sweep of a scheme across an N₀ grid with RPA columns.
    Sweep(SweepArgs),
    /// Multistart enumeration of stationary points at a single N₀.
    Branches(BranchesArgs),
    /// RPA frequencies for each point of a saved solution file.
    Rpa(RpaArgs),
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Pair degeneracy Ω.
    #[arg(long)]
    omega: Option<u32>,
    /// Pairing strength G.
    #[arg(long)]
    g: Option<f64>,
    /// CCM variant: particle-eccm | qp-eccm | qp-nccm | max-overlap.
    #[arg(long)]
    scheme: Option<String>,
    /// SUB(M) truncation order.
    #[arg(long)]
    order: Option<u32>,
    /// Gauge condition: scaling-fix | delta-symmetric | none | auto.
    #[arg(long)]
    gauge: Option<String>,
    /// Seed for multistart sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of multistart launches.
    #[arg(long)]
    multistart: Option<usize>,
    /// Residual ∞-norm target.
    #[arg(long)]
    tol: Option<f64>,
    /// Output format: csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    n0_min: Option<f64>,
    #[arg(long)]
    n0_max: Option<f64>,
    #[arg(long)]
    n0_steps: Option<usize>,
}

#[derive(Args)]
struct BranchesArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Target mean particle number.
    #[arg(long)]
    n0: Option<f64>,
}

#[derive(Args)]
struct RpaArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// JSON solution file produced by `sweep` or `branches`.
    #[arg(long)]
    solutions: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutputFormat {
    Csv,
    Json,
}

/// Fully merged and validated run configuration.
#[derive(Debug, Clone)]
struct RunConfig {
    model: ModelParams,
    scheme: SchemeConfig,
    solver: SolverSettings,
    output_path: Option<PathBuf>,
    format: OutputFormat,
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// key=value file, one entry per line; '#' starts a comment. Keys mirror
/// the long flags with '-' or '_' accepted interchangeably.
fn load_config_file(path: &PathBuf) -> Result<HashMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return cfg_err(format!("config line {}: expected key=value", lineno + 1));
        };
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

struct Merged {
    file: HashMap<String, String>,
}

impl Merged {
    fn get<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError(format!("config key {key}: {e}"))),
            None => Ok(None),
        }
    }
}

fn parse_scheme(name: &str) -> Result<Scheme, ConfigError> {
    match name {
        "particle-eccm" => Ok(Scheme::ParticleEccm),
        "qp-eccm" => Ok(Scheme::QpEccm),
        "qp-nccm" => Ok(Scheme::QpNccm),
        // SUB(1) values are frozen per N₀ from the mean-field solve.
        "max-overlap" => Ok(Scheme::MaxOverlap { s1: 0.0, s1t: 0.0 }),
        other => cfg_err(format!("unknown scheme '{other}'")),
    }
}

fn parse_gauge(name: &str, scheme: &Scheme, order: u32) -> Result<Gauge, ConfigError> {
    match name {
        "scaling-fix" => Ok(Gauge::ScalingFix),
        "delta-symmetric" => Ok(Gauge::DeltaSymmetric),
        "none" => Ok(Gauge::None),
        "auto" => Ok(SchemeConfig::with_default_gauge(*scheme, order).gauge),
        other => cfg_err(format!("unknown gauge '{other}'")),
    }
}

fn build_run_config(common: &CommonOpts) -> Result<RunConfig, ConfigError> {
    let file = match &common.config {
        Some(path) => load_config_file(path)?,
        None => HashMap::new(),
    };
    let m = Merged { file };

    let omega = m.get(common.omega, "omega")?.unwrap_or(10);
    let g = m.get(common.g, "g")?.unwrap_or(1.0);
    let scheme_name = m
        .get(common.scheme.clone(), "scheme")?
        .unwrap_or_else(|| "particle-eccm".into());
    let scheme = parse_scheme(&scheme_name)?;
    let order = m.get(common.order, "order")?.unwrap_or(match scheme {
        Scheme::ParticleEccm => 1,
        _ => 2,
    });
    let gauge_name = m
        .get(common.gauge.clone(), "gauge")?
        .unwrap_or_else(|| "auto".into());
    let gauge = parse_gauge(&gauge_name, &scheme, order)?;

    let model = ModelParams::new(omega, g, 0.0).map_err(|e| ConfigError(e.to_string()))?;
    let scheme_cfg = SchemeConfig::new(scheme, order, gauge);
    scheme_cfg
        .validate(&model)
        .map_err(|e| ConfigError(e.to_string()))?;

    let mut solver = SolverSettings {
        tol: 1e-10,
        ..Default::default()
    };
    if let Some(t) = m.get(common.tol, "tol")? {
        solver.tol = t;
    }
    if let Some(s) = m.get(common.seed, "seed")? {
        solver.seed = s;
    }
    if let Some(k) = m.get(common.multistart, "multistart")? {
        solver.multistart_count = k;
    }
    solver.validate().map_err(|e| ConfigError(e.to_string()))?;

    let format = match m
        .get(common.format.clone(), "format")?
        .unwrap_or_else(|| "csv".into())
        .as_str()
    {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return cfg_err(format!("unknown format '{other}'")),
    };
    let output_path = match &common.output {
        Some(p) => Some(p.clone()),
        None => m.get(None::<String>, "output")?.map(PathBuf::from),
    };

    Ok(RunConfig {
        model,
        scheme: scheme_cfg,
        solver,
        output_path,
        format,
    })
}

fn write_output(cfg: &RunConfig, data: &str) -> Result<(), ConfigError> {
    match &cfg.output_path {
        Some(path) => std::fs::write(path, data)
            .map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display()))),
        None => {
            std::io::stdout()
                .write_all(data.as_bytes())
                .map_err(|e| ConfigError(format!("stdout: {e}")))
        }
    }
}

/// Serialized run header + solution points; the schema shared by `sweep`
/// and `branches` outputs and consumed by `rpa`.
#[derive(Serialize, Deserialize)]
struct SolutionFile {
    config: FileConfig,
    points: Vec<FilePoint>,
}

#[derive(Serialize, Deserialize)]
struct FileConfig {
    omega: u32,
    g: f64,
    scheme: SchemeConfig,
}

#[derive(Serialize, Deserialize)]
struct FilePoint {
    n0: f64,
    point: SolutionPoint,
    #[serde(default)]
    zero_modes: Option<usize>,
    #[serde(default)]
    unstable: Option<bool>,
}

/// DeltaSymmetric SUB(1) closed forms used for seeding and for freezing
/// max-overlap references.
fn sub1_mean_field(omega: u32, g: f64, n0: f64) -> (f64, f64, f64) {
    let om = omega as f64;
    let s = (n0 / (2.0 * om - n0).max(f64::MIN_POSITIVE)).sqrt();
    let st = (n0 * (2.0 * om - n0)).max(0.0).sqrt() / (2.0 * om);
    let lam = -g * (om - 1.0) * (1.0 - n0 / om) / 2.0;
    (s, st, lam)
}

/// Per-N₀ scheme config: max-overlap freezes the SUB(1) pair at the
/// mean-field values for that N₀.
fn scheme_at(cfg: &RunConfig, n0: f64) -> SchemeConfig {
    match cfg.scheme.scheme {
        Scheme::MaxOverlap { .. } => {
            let (s1, s1t, _) = sub1_mean_field(cfg.model.omega, cfg.model.g, n0);
            SchemeConfig::new(Scheme::MaxOverlap { s1, s1t }, cfg.scheme.order, cfg.scheme.gauge)
        }
        _ => cfg.scheme,
    }
}

fn seed_vector(cfg: &RunConfig, scheme: &SchemeConfig, n0: f64) -> Vec<f64> {
    let q = (n0 / (2.0 * cfg.model.omega as f64)).sqrt();
    let (_, _, lam) = sub1_mean_field(cfg.model.omega, cfg.model.g, n0);
    let mut x = vec![0.0; scheme.n_unknowns()];
    if !matches!(scheme.scheme, Scheme::MaxOverlap { .. }) {
        x[0] = q;
        x[scheme.s_block_len()] = q;
    }
    *x.last_mut().unwrap() = lam;
    x
}

fn cmd_exact(args: &ExactArgs) -> Result<u8, ConfigError> {
    let cfg = build_run_config(&args.common)?;
    let omega = cfg.model.omega;
    let spectrum = oracle::exact_spectrum(&cfg.model);
    let mut out = String::new();
    match cfg.format {
        OutputFormat::Csv => {
            out.push_str("n,e_exact\n");
            for m in 0..=omega as usize {
                out.push_str(&format!(
                    "{},{}\n",
                    2 * m,
                    fmt_f64(spectrum.energies_by_pairnumber[m])
                ));
            }
        }
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = (0..=omega as usize)
                .map(|m| {
                    serde_json::json!({
                        "n": 2 * m,
                        "e_exact": spectrum.energies_by_pairnumber[m],
                    })
                })
                .collect();
            let doc = serde_json::json!({
                "config": { "omega": omega, "g": cfg.model.g },
                "rows": rows,
            });
            out = to_json_17(&doc)?;
            out.push('\n');
        }
    }
    write_output(&cfg, &out)?;
    Ok(0)
}

struct SweepRow {
    n0: f64,
    point: SolutionPoint,
    zero_modes: Option<usize>,
    unstable: Option<bool>,
}

fn rpa_columns(model: &ModelParams, pt: &SolutionPoint) -> (Option<usize>, Option<bool>) {
    let Ok(h) = rpa::build_hessian(model, pt) else {
        return (None, None);
    };
    let Ok(kin) = rpa::build_kinetic_form(model, pt) else {
        return (None, None);
    };
    match rpa::solve_rpa(&h, &kin, RpaTolerances::default()) {
        Ok(spec) => (Some(spec.zero_modes), Some(spec.unstable)),
        Err(_) => (None, None),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, ConfigError> {
    let cfg = build_run_config(&args.common)?;
    let m = Merged {
        file: match &args.common.config {
            Some(p) => load_config_file(p)?,
            None => HashMap::new(),
        },
    };
    let n0_min = m.get(args.n0_min, "n0_min")?.unwrap_or(1.0);
    let n0_max = m.get(args.n0_max, "n0_max")?.unwrap_or(2.0 * cfg.model.omega as f64 - 1.0);
    let n0_steps = m.get(args.n0_steps, "n0_steps")?.unwrap_or(19);
    if n0_steps == 0 {
        return cfg_err("empty N0 grid (n0-steps = 0)");
    }
    if !(n0_min <= n0_max) {
        return cfg_err("need n0-min <= n0-max");
    }
    let grid: Vec<f64> = if n0_steps == 1 {
        vec![n0_min]
    } else {
        (0..n0_steps)
            .map(|i| n0_min + (n0_max - n0_min) * i as f64 / (n0_steps - 1) as f64)
            .collect()
    };

    // Warm-started pass along the grid; failed points fall back to a
    // multistart scan afterwards (in parallel, results kept in grid order).
    let mut rows: Vec<Option<SolutionPoint>> = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &n0 in &grid {
        let scheme = scheme_at(&cfg, n0);
        let model = cfg.model.with_n0(n0);
        let x0 = match &warm {
            Some(x) if x.len() == scheme.n_unknowns() => x.clone(),
            _ => seed_vector(&cfg, &scheme, n0),
        };
        let pt = newton_solve(&model, &scheme, &x0, &cfg.solver).ok();
        let pt = match pt {
            Some(p) if p.converged => {
                // deep-polish: the RPA zero modes split like sqrt(residual)
                let p = pairing_ccm::solver::polish(&model, &scheme, &p, 1e-13);
                warm = Some(p.amps.x.clone());
                Some(p)
            }
            other => {
                warm = None;
                other
            }
        };
        rows.push(pt);
    }
    let retry: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.as_ref().map_or(true, |p| !p.converged))
        .map(|(i, _)| i)
        .collect();
    let retried: Vec<(usize, Option<SolutionPoint>)> = retry
        .par_iter()
        .map(|&i| {
            let n0 = grid[i];
            let scheme = scheme_at(&cfg, n0);
            let best = multistart_scan(&cfg.model, &scheme, n0, &cfg.solver, &[])
                .ok()
                .and_then(|pts| {
                    pts.into_iter().min_by(|a, b| {
                        a.obs.energy.partial_cmp(&b.obs.energy).unwrap_or(std::cmp::Ordering::Equal)
                    })
                });
            (i, best)
        })
        .collect();
    for (i, best) in retried {
        if let Some(b) = best {
            rows[i] = Some(b);
        }
    }

    let mut out_rows = Vec::new();
    let mut any_converged = false;
    for (&n0, row) in grid.iter().zip(rows.into_iter()) {
        let Some(point) = row else { continue };
        any_converged |= point.converged;
        let model = cfg.model.with_n0(n0);
        let (zero_modes, unstable) = if point.converged {
            rpa_columns(&model, &point)
        } else {
            (None, None)
        };
        out_rows.push(SweepRow {
            n0,
            point,
            zero_modes,
            unstable,
        });
    }
    if !any_converged {
        eprintln!("sweep: no grid point converged");
        return Ok(EXIT_NUMERICAL);
    }

    let mut out = String::new();
    match cfg.format {
        OutputFormat::Csv => {
            out.push_str(
                "n0,lambda,energy,n_mean,n2_mean,dn2,e_exact_interp,delta_e,converged,zero_modes,unstable\n",
            );
            for r in &out_rows {
                let e_exact = oracle::exact_energy_continuous(&cfg.model, r.n0);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    fmt_f64(r.n0),
                    fmt_f64(r.point.amps.lambda()),
                    fmt_f64(r.point.obs.energy),
                    fmt_f64(r.point.obs.n_mean),
                    fmt_f64(r.point.obs.n2_mean),
                    fmt_f64(r.point.obs.dn2),
                    fmt_f64(e_exact),
                    fmt_f64(r.point.obs.energy - e_exact),
                    r.point.converged,
                    r.zero_modes.map_or(String::new(), |z| z.to_string()),
                    r.unstable.map_or(String::new(), |u| u.to_string()),
                ));
            }
        }
        OutputFormat::Json => {
            let doc = SolutionFile {
                config: FileConfig {
                    omega: cfg.model.omega,
                    g: cfg.model.g,
                    scheme: cfg.scheme,
                },
                points: out_rows
                    .into_iter()
                    .map(|r| FilePoint {
                        n0: r.n0,
                        point: r.point,
                        zero_modes: r.zero_modes,
                        unstable: r.unstable,
                    })
                    .collect(),
            };
            out = to_json_17(&serde_json::to_value(&doc).map_err(json_err)?)?;
            out.push('\n');
        }
    }
    write_output(&cfg, &out)?;
    Ok(0)
}

fn json_err(e: serde_json::Error) -> ConfigError {
    ConfigError(format!("serialization: {e}"))
}

fn cmd_branches(args: &BranchesArgs) -> Result<u8, ConfigError> {
    let cfg = build_run_config(&args.common)?;
    let m = Merged {
        file: match &args.common.config {
            Some(p) => load_config_file(p)?,
            None => HashMap::new(),
        },
    };
    let n0 = m.get(args.n0, "n0")?.unwrap_or(cfg.model.omega as f64);
    if cfg.solver.multistart_count == 0 {
        return cfg_err("multistart count must be >= 1");
    }
    let scheme = scheme_at(&cfg, n0);
    let mut points = multistart_scan(&cfg.model, &scheme, n0, &cfg.solver, &[])
        .map_err(|e| ConfigError(e.to_string()))?;
    if points.is_empty() {
        eprintln!("branches: no start converged at n0 = {n0}");
        return Ok(EXIT_NUMERICAL);
    }
    points.sort_by(|a, b| {
        a.obs
            .energy
            .partial_cmp(&b.obs.energy)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut out = String::new();
    match cfg.format {
        OutputFormat::Csv => {
            out.push_str("energy,n_mean,n2_mean,dn2,delta,delta_dag,lambda,residual_norm\n");
            for p in &points {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    fmt_f64(p.obs.energy),
                    fmt_f64(p.obs.n_mean),
                    fmt_f64(p.obs.n2_mean),
                    fmt_f64(p.obs.dn2),
                    fmt_f64(p.obs.delta_expect),
                    fmt_f64(p.obs.delta_dag_expect),
                    fmt_f64(p.amps.lambda()),
                    fmt_f64(p.residual_norm),
                ));
            }
        }
        OutputFormat::Json => {
            let doc = SolutionFile {
                config: FileConfig {
                    omega: cfg.model.omega,
                    g: cfg.model.g,
                    scheme,
                },
                points: points
                    .into_iter()
                    .map(|point| FilePoint {
                        n0,
                        point,
                        zero_modes: None,
                        unstable: None,
                    })
                    .collect(),
            };
            out = to_json_17(&serde_json::to_value(&doc).map_err(json_err)?)?;
            out.push('\n');
        }
    }
    write_output(&cfg, &out)?;
    Ok(0)
}

fn mode_class_name(c: ModeClass) -> &'static str {
    match c {
        ModeClass::Zero => "zero",
        ModeClass::Real => "real",
        ModeClass::Complex => "complex",
    }
}

fn cmd_rpa(args: &RpaArgs) -> Result<u8, ConfigError> {
    let cfg = build_run_config(&args.common)?;
    let text = std::fs::read_to_string(&args.solutions)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", args.solutions.display())))?;
    let file: SolutionFile =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("solution file: {e}")))?;
    let model = ModelParams::new(file.config.omega, file.config.g, 0.0)
        .map_err(|e| ConfigError(e.to_string()))?;

    let mut rows = Vec::new();
    for fp in &file.points {
        if !fp.point.converged {
            eprintln!("rpa: unconverged input point at n0 = {}", fp.n0);
            return Ok(EXIT_NUMERICAL);
        }
        let m = model.with_n0(fp.n0);
        let h = rpa::build_hessian(&m, &fp.point).map_err(|e| ConfigError(e.to_string()))?;
        let kin =
            rpa::build_kinetic_form(&m, &fp.point).map_err(|e| ConfigError(e.to_string()))?;
        let spec = rpa::solve_rpa(&h, &kin, RpaTolerances::default())
            .map_err(|e| ConfigError(e.to_string()))?;
        for (w, class) in spec.frequencies.iter().zip(&spec.classes) {
            rows.push((fp.n0, w.re, w.im, mode_class_name(*class)));
        }
    }

    let mut out = String::new();
    match cfg.format {
        OutputFormat::Csv => {
            out.push_str("n0,re_omega,im_omega,class\n");
            for (n0, re, im, class) in &rows {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_f64(*n0),
                    fmt_f64(*re),
                    fmt_f64(*im),
                    class
                ));
            }
        }
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(n0, re, im, class)| {
                    serde_json::json!({
                        "n0": n0, "re_omega": re, "im_omega": im, "class": class,
                    })
                })
                .collect();
            let doc = serde_json::json!({
                "config": { "omega": file.config.omega, "g": file.config.g },
                "modes": rows,
            });
            out = to_json_17(&doc)?;
            out.push('\n');
        }
    }
    write_output(&cfg, &out)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are not configuration errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match &cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Branches(a) => cmd_branches(a),
        Command::Rpa(a) => cmd_rpa(a),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
