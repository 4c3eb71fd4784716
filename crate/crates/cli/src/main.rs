//! `geodesic-census`: validate profiles, trace geodesics, export rotation
//! curves, run closed-geodesic censuses and Farey counts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use geocensus::census::{self, CensusOptions, ScanOptions};
use geocensus::geodesic::{self, Embedding, GeodesicState};
use geocensus::profile::{self, Profile, Surface, SurfaceKind};
use geocensus::{clairaut, farey, Error};
use serde::Serialize;

use config::{parse_endpoint, EndpointValue, ProfileConfig, RunConfig};

const THREADS_VAR: &str = "GEODESIC_CENSUS_THREADS";

#[derive(Parser)]
#[command(name = "geodesic-census", version, about = "Closed geodesics on surfaces of revolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the boundary, positivity and periodicity conditions of a profile
    Validate(Flags),
    /// Integrate one geodesic and write its trajectory as CSV
    Trace(Flags),
    /// Write b, T, R and L over a grid in U as CSV
    Rotation(Flags),
    /// Count closed geodesics up to a length and write the census as JSON
    Census(Flags),
    /// Count rationals with bounded denominator
    Farey(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Sphere,
    Torus,
}

#[derive(clap::Args, Default)]
struct Flags {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// warp function h(s)
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    lmax: Option<f64>,
    #[arg(long)]
    qmax: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rtol: Option<f64>,
    /// validation tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// launch coordinate s = a
    #[arg(long)]
    a: Option<f64>,
    #[arg(long = "tmax")]
    t_max: Option<f64>,
    /// launch direction: horizontal (along θ) or meridian (along s)
    #[arg(long)]
    launch: Option<String>,
    /// append embedded x,y,z columns
    #[arg(long)]
    embed: bool,
    /// Farey order
    #[arg(long)]
    n: Option<u64>,
    /// interval "LO,HI"; endpoints may be fractions such as 1/3
    #[arg(long)]
    interval: Option<String>,
    /// also write the census N table as CSV
    #[arg(long = "n-table")]
    n_table: Option<PathBuf>,
}

/// Failures split by exit status.
enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

type Outcome = Result<ExitCode, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn compute(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Compute(e.into())
}

fn merge(flags: &Flags) -> anyhow::Result<RunConfig> {
    let mut c = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if flags.profile.is_some() || flags.kind.is_some() {
        let base = c.profile.take();
        let formula = flags
            .profile
            .clone()
            .or_else(|| base.as_ref().map(|p| p.formula.clone()))
            .ok_or_else(|| anyhow!("--kind given without a profile formula"))?;
        let kind = match flags.kind {
            Some(KindArg::Sphere) => SurfaceKind::Sphere,
            Some(KindArg::Torus) => SurfaceKind::Torus,
            None => base.map_or(SurfaceKind::Sphere, |p| p.kind),
        };
        c.profile = Some(ProfileConfig { kind, formula });
    }
    macro_rules! take {
        ($($field:ident),*) => { $( if flags.$field.is_some() { c.$field = flags.$field.clone(); } )* };
    }
    take!(lmax, qmax, grid, out, rtol, tol, a, t_max, launch, n);
    if flags.embed {
        c.embed = Some(true);
    }
    if let Some(path) = &flags.n_table {
        c.n_table_out = Some(path.clone());
    }
    if let Some(text) = &flags.interval {
        let (lo, hi) = text.split_once(',').ok_or_else(|| anyhow!("--interval expects LO,HI"))?;
        parse_endpoint(lo)?;
        parse_endpoint(hi)?;
        c.interval = Some([EndpointValue::Text(lo.into()), EndpointValue::Text(hi.into())]);
    }
    Ok(c)
}

fn load_profile(c: &RunConfig) -> Result<Profile, Failure> {
    let given = c.profile.as_ref().ok_or_else(|| usage(anyhow!("no profile given (use --profile or a config file)")))?;
    Profile::parse(given.kind, &given.formula).map_err(|e| usage(anyhow!("profile {:?}: {e}", given.formula)))
}

fn surface(c: &RunConfig, profile: Profile) -> Surface {
    match c.critical_grid {
        Some(n) => Surface::with_grid(profile, n, profile::DEFAULT_CRITICAL_TOL),
        None => Surface::new(profile),
    }
}

/// Profile checked against its conditions; violations end the run.
fn valid_surface(c: &RunConfig) -> Result<Surface, Failure> {
    let p = load_profile(c)?;
    let diagnostics = profile::validate_profile(&p, c.tol.unwrap_or(1e-9));
    if let Some(first) = diagnostics.first() {
        for d in &diagnostics {
            eprintln!("invalid profile: {d}");
        }
        return Err(compute(anyhow!("profile fails validation: {first}")));
    }
    Ok(surface(c, p))
}

fn writer(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut w = writer(path).map_err(compute)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(compute)?;
    writeln!(w).and_then(|_| w.flush()).map_err(compute)
}

fn cmd_validate(c: &RunConfig) -> Outcome {
    #[derive(Serialize)]
    struct Report<'a> {
        profile: &'a ProfileConfig,
        valid: bool,
        diagnostics: Vec<profile::Diagnostic>,
    }
    let p = load_profile(c)?;
    let diagnostics = profile::validate_profile(&p, c.tol.unwrap_or(1e-9));
    let valid = diagnostics.is_empty();
    let report = Report { profile: c.profile.as_ref().expect("profile loaded"), valid, diagnostics };
    write_json(c.out.as_deref(), &report)?;
    Ok(if valid { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_trace(c: &RunConfig) -> Outcome {
    let s = valid_surface(c)?;
    let p = s.profile();
    let rtol = c.rtol.unwrap_or(1e-9);
    let t_max = c.t_max.unwrap_or(2.0 * PI);
    let x0 = match c.launch.as_deref().unwrap_or("horizontal") {
        "horizontal" => {
            let a = c.a.ok_or_else(|| usage(anyhow!("trace needs --a")))?;
            GeodesicState::horizontal(p, a, 0.0)
        }
        "meridian" => GeodesicState::new(c.a.unwrap_or(PI / 2.0), 0.0, 1.0, 0.0),
        other => return Err(usage(anyhow!("unknown launch {other:?}; expected horizontal or meridian"))),
    };
    let embedding = c.embed.unwrap_or(false).then(|| Embedding::new(p));
    let (traj, failure) = match geodesic::integrate_geodesic(p, x0, t_max, rtol) {
        Ok(t) => (t, None),
        Err(Error::PoleEscape { t, partial }) => (*partial, Some(anyhow!("pole reached at t = {t}; trajectory is partial"))),
        Err(e) => return Err(compute(e)),
    };
    let mut w = writer(c.out.as_deref()).map_err(compute)?;
    traj.write_csv(&mut w, embedding.as_ref()).and_then(|_| w.flush()).map_err(compute)?;
    eprintln!(
        "clairaut constant {:e}, clairaut drift {:e}, speed drift {:e}, samples {}",
        traj.clairaut,
        traj.clairaut_drift,
        traj.speed_drift,
        traj.samples.len()
    );
    match failure {
        Some(e) => Err(compute(e)),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_rotation(c: &RunConfig) -> Outcome {
    let s = valid_surface(c)?;
    let grid = c.grid.unwrap_or(200);
    let u = clairaut::compute_u(&s, grid.max(256));
    let mut opts = ScanOptions { grid_n: grid, ..Default::default() };
    if let Some(t) = c.quad_tol {
        opts.quad_tol = t;
    }
    if let Some(t) = c.tol_flat {
        opts.tol_flat = t;
    }
    let scan = census::scan_rotation_curve(&s, &u, &opts);
    if u.is_empty() {
        eprintln!("note: U is empty; the table has no rows");
    }
    for d in &scan.diagnostics {
        eprintln!("warning: {d}");
    }
    for seg in &scan.segments {
        for (lo, hi) in &seg.plateaus {
            eprintln!("note: R is constant on [{lo}, {hi}]");
        }
    }
    let mut w = writer(c.out.as_deref()).map_err(compute)?;
    scan.write_csv(&mut w).and_then(|_| w.flush()).map_err(compute)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_census(c: &RunConfig) -> Outcome {
    let s = valid_surface(c)?;
    let d = CensusOptions::default();
    let opts = CensusOptions {
        lmax: c.lmax.unwrap_or(d.lmax),
        q_max: c.qmax,
        grid_n: c.grid.unwrap_or(d.grid_n),
        quad_tol: c.quad_tol.unwrap_or(d.quad_tol),
        solver_tol: c.solver_tol.unwrap_or(d.solver_tol),
        tol_flat: c.tol_flat.unwrap_or(d.tol_flat),
        flat_fraction: c.flat_fraction.unwrap_or(d.flat_fraction),
        dedup_tol: c.dedup_tol.unwrap_or(d.dedup_tol),
        ..d
    };
    if !(opts.lmax > 0.0) {
        return Err(usage(anyhow!("--lmax must be positive")));
    }
    let result = census::build_census(&s, &opts).map_err(compute)?;
    write_json(c.out.as_deref(), &result)?;
    if let Some(path) = &c.n_table_out {
        let mut w = writer(Some(path)).map_err(compute)?;
        result.write_n_table_csv(&mut w).and_then(|_| w.flush()).map_err(compute)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_farey(c: &RunConfig) -> Outcome {
    #[derive(Serialize)]
    struct IntervalReport {
        interval: [String; 2],
        n: u64,
        count: u64,
        constants: farey::LemmaConstants,
    }
    let n = c.n.ok_or_else(|| usage(anyhow!("farey needs --n")))?;
    if n == 0 {
        return Err(usage(anyhow!("--n must be at least 1")));
    }
    match c.interval().map_err(usage)? {
        None => write_json(c.out.as_deref(), &farey::farey_cardinality(n).map_err(compute)?)?,
        Some(iv) => {
            let report = IntervalReport {
                interval: [iv.lo.to_string(), iv.hi.to_string()],
                n,
                count: farey::count_rationals_in_interval(&iv, n).map_err(compute)?,
                constants: farey::lemma_constants(&iv).map_err(compute)?,
            };
            write_json(c.out.as_deref(), &report)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value.trim().parse().with_context(|| format!("{THREADS_VAR}={value:?} is not a count"))?;
    if n == 0 {
        return Err(anyhow!("{THREADS_VAR} must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    configure_threads().map_err(usage)?;
    let (flags, cmd): (&Flags, fn(&RunConfig) -> Outcome) = match &cli.command {
        Command::Validate(f) => (f, cmd_validate),
        Command::Trace(f) => (f, cmd_trace),
        Command::Rotation(f) => (f, cmd_rotation),
        Command::Census(f) => (f, cmd_census),
        Command::Farey(f) => (f, cmd_farey),
    };
    let config = merge(flags).map_err(usage)?;
    cmd(&config)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
