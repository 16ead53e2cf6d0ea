//! Command-line driver for the GIFS attractor and measure engine.
//!
//! Subcommands:
//!
//! * `validate`            parse and check a system spec
//! * `distance`            Hausdorff or Monge-Kantorovich distance of two files
//! * `attractor-classical` the m-tuple recursion, residual-certified
//! * `attractor-evmap`     the evaluation-map outer loop with an Ostrowski ledger
//! * `measure`             joint set-and-measure iteration
//! * `chaos`               random orbit of the induced system plus diagnostics
//!
//! Exit codes: 0 certified success, 1 invalid input, 2 budget-exceeded
//! partial result.

mod manifest;
mod render;
mod spec;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gifs_core::{
    approximate_attractor, classical_gifs_iterate, ergodic_average, evaluation_map, gifs_step,
    hausdorff, hutchinson_measure, joint_iterate, mk_distance, mk_distance_1d, random_orbit,
    Budgets, DiscreteMeasure, Error as CoreError, Observable, OrbitConfig, OuterOptions,
    PointSet, Schedule,
};
use manifest::RunManifest;
use render::{render_pointset, RenderBounds};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "gifs", version, about = "Attractors and Hutchinson measures of generalized IFS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    /// Cap on materialized point counts.
    #[arg(long, default_value_t = Budgets::default().max_points)]
    budget_points: usize,
    /// Cap on induced map counts.
    #[arg(long, default_value_t = Budgets::default().max_maps)]
    budget_maps: usize,
    /// Cap on raw product-support sizes in measure pushforwards.
    #[arg(long, default_value_t = Budgets::default().max_product_atoms)]
    budget_product: usize,
}

impl BudgetArgs {
    fn to_budgets(&self) -> Budgets {
        Budgets {
            max_points: self.budget_points,
            max_maps: self.budget_maps,
            max_product_atoms: self.budget_product,
            ..Budgets::default()
        }
    }
}

#[derive(Args, Clone)]
struct RenderArgs {
    /// Also write a PGM raster, e.g. `--render 512x512`.
    #[arg(long)]
    render: Option<String>,
    /// Explicit raster bounds `xmin,xmax,ymin,ymax` (default: padded bbox).
    #[arg(long)]
    render_bounds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a system spec and report all violations.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Distance between two CSV files (point sets or measures).
    Distance {
        /// Hausdorff distance between two point-set files.
        #[arg(long, conflicts_with = "mk")]
        hausdorff: bool,
        /// Monge-Kantorovich distance between two measure files.
        #[arg(long)]
        mk: bool,
        a: PathBuf,
        b: PathBuf,
    },
    /// Classical m-tuple recursion, certified by the final residual.
    AttractorClassical {
        #[arg(long)]
        spec: PathBuf,
        /// Number of recursion steps.
        #[arg(long = "K", default_value_t = 12)]
        k: usize,
        /// Grid resolution target; iterates are pruned accordingly.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        budgets: BudgetArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Evaluation-map outer loop with a certified Ostrowski ledger.
    AttractorEvmap {
        #[arg(long)]
        spec: PathBuf,
        /// Number of outer steps.
        #[arg(long = "K", default_value_t = 12)]
        k: usize,
        /// Subsampling schedule: `1/k` or `geometric:<r>`.
        #[arg(long, default_value = "1/k")]
        beta_schedule: String,
        /// Inner-solve schedule: `1/k` or `geometric:<r>`.
        #[arg(long, default_value = "1/k")]
        sigma_schedule: String,
        /// Stop early once the certified bound reaches this value.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        budgets: BudgetArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Joint attractor-and-measure iteration (needs `probs` in the spec).
    Measure {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "K", default_value_t = 12)]
        k: usize,
        #[arg(long, default_value = "1/k")]
        beta_schedule: String,
        #[arg(long, default_value = "1/k")]
        sigma_schedule: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        budgets: BudgetArgs,
    },
    /// Random orbit of the induced system, with diagnostics.
    Chaos {
        #[arg(long)]
        spec: PathBuf,
        /// RNG seed for the orbit.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        length: usize,
        #[arg(long, default_value_t = 100)]
        burn_in: usize,
        /// Measure file for nu (default: a point mass at the default seed).
        #[arg(long)]
        nu: Option<PathBuf>,
        /// Bin width for the exported empirical measure.
        #[arg(long, default_value_t = 1e-3)]
        bin_width: f64,
        /// Observable for the ergodic average.
        #[arg(long, default_value = "identity")]
        observable: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        budgets: BudgetArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CoreError>() {
        Some(CoreError::BudgetExceeded { .. }) | Some(CoreError::SupportTooLarge { .. }) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Validate { spec } => run_validate(&spec),
        Command::Distance { hausdorff, mk, a, b } => run_distance(hausdorff, mk, &a, &b),
        Command::AttractorClassical {
            spec,
            k,
            tol,
            out_dir,
            budgets,
            render,
        } => run_classical(&spec, k, tol, &out_dir, &budgets, &render),
        Command::AttractorEvmap {
            spec,
            k,
            beta_schedule,
            sigma_schedule,
            tol,
            out_dir,
            budgets,
            render,
        } => run_evmap(
            &spec,
            k,
            &beta_schedule,
            &sigma_schedule,
            tol,
            &out_dir,
            &budgets,
            &render,
        ),
        Command::Measure {
            spec,
            k,
            beta_schedule,
            sigma_schedule,
            tol,
            out_dir,
            budgets,
        } => run_measure(&spec, k, &beta_schedule, &sigma_schedule, tol, &out_dir, &budgets),
        Command::Chaos {
            spec,
            seed,
            length,
            burn_in,
            nu,
            bin_width,
            observable,
            out_dir,
            budgets,
            render,
        } => run_chaos(
            &spec, seed, length, burn_in, nu.as_deref(), bin_width, &observable, &out_dir,
            &budgets, &render,
        ),
    }
}

fn read_spec(path: &Path) -> Result<(String, spec::SystemSpec)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    let parsed = spec::parse_spec(&text)?;
    Ok((text, parsed))
}

fn parse_schedule(text: &str) -> Result<Schedule> {
    if text == "1/k" {
        return Ok(Schedule::Harmonic);
    }
    if let Some(r) = text.strip_prefix("geometric:") {
        let ratio: f64 = r.parse().context("geometric ratio")?;
        if !(0.0 < ratio && ratio < 1.0) {
            bail!("geometric ratio must lie in (0, 1), got {ratio}");
        }
        return Ok(Schedule::Geometric { ratio });
    }
    bail!("unknown schedule `{text}`; use `1/k` or `geometric:<r>`");
}

fn parse_render_size(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once('x')
        .with_context(|| format!("render size `{text}` must look like 512x512"))?;
    Ok((w.parse()?, h.parse()?))
}

fn parse_render_bounds(text: &str) -> Result<RenderBounds> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("render bounds must be xmin,xmax,ymin,ymax")?;
    if parts.len() != 4 {
        bail!("render bounds must have four numbers");
    }
    Ok(RenderBounds {
        xmin: parts[0],
        xmax: parts[1],
        ymin: parts[2],
        ymax: parts[3],
    })
}

fn maybe_render(
    args: &RenderArgs,
    set: &PointSet,
    manifest: &mut RunManifest,
    out_dir: &Path,
) -> Result<()> {
    if let Some(size) = &args.render {
        let (w, h) = parse_render_size(size)?;
        let bounds = match &args.render_bounds {
            Some(b) => parse_render_bounds(b)?,
            None => RenderBounds::padded(set),
        };
        let pgm = render_pointset(set, w, h, &bounds)?;
        manifest.write_output(out_dir, "attractor.pgm", &pgm)?;
    }
    Ok(())
}

fn run_validate(path: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    match spec::parse_spec(&text) {
        Ok(parsed) => {
            let system = parsed.to_system()?;
            println!(
                "ok: {} maps, order {}, dim {}, lip_fs {:?}",
                system.n(),
                system.order(),
                system.dim(),
                system.lip_fs()
            );
            Ok(0)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(1)
        }
    }
}

fn run_distance(use_hausdorff: bool, use_mk: bool, a: &Path, b: &Path) -> Result<u8> {
    if use_hausdorff == use_mk {
        bail!("choose exactly one of --hausdorff or --mk");
    }
    let read = |p: &Path| {
        std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
    };
    let value = if use_hausdorff {
        let sa = PointSet::from_csv(&read(a)?)?;
        let sb = PointSet::from_csv(&read(b)?)?;
        hausdorff(&sa, &sb)?
    } else {
        let ma = DiscreteMeasure::from_csv(&read(a)?)?;
        let mb = DiscreteMeasure::from_csv(&read(b)?)?;
        if ma.dim() == 1 {
            mk_distance_1d(&ma, &mb)?
        } else {
            mk_distance(&ma, &mb)?
        }
    };
    println!("{value:?}");
    Ok(0)
}

fn finish(
    mut manifest: RunManifest,
    out_dir: &Path,
    started: Instant,
    budget_flag: Option<String>,
) -> Result<u8> {
    if let Some(flag) = budget_flag {
        manifest.annotations.push(flag);
        manifest.status = "budget-exceeded".into();
    }
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.verify_outputs(out_dir)?;
    manifest.save(out_dir)?;
    println!("status: {}", manifest.status);
    for (name, bound) in &manifest.final_bounds {
        println!("certified {name} bound: {bound:?}");
    }
    Ok(if manifest.status == "budget-exceeded" {
        2
    } else {
        0
    })
}

#[allow(clippy::too_many_arguments)]
fn run_classical(
    spec_path: &Path,
    k: usize,
    tol: f64,
    out_dir: &Path,
    budget_args: &BudgetArgs,
    render_args: &RenderArgs,
) -> Result<u8> {
    let started = Instant::now();
    let (text, parsed) = read_spec(spec_path)?;
    let system = parsed.to_system()?;
    let budgets = budget_args.to_budgets();
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(std::env::args().collect(), &text);
    manifest.tolerances.insert("tol".into(), tol);
    manifest.schedules.insert("K".into(), k.to_string());

    let dim = system.dim() as f64;
    let delta = tol * (1.0 - system.lip_fs()) / dim.sqrt();
    let seed = system.default_seed()?;
    let seeds = vec![seed; system.order()];
    let result = classical_gifs_iterate(&system, &seeds, k, delta, &budgets);
    let (set, budget_flag) = match result {
        Ok(set) => (set, None),
        Err(e @ CoreError::BudgetExceeded { .. }) => return Err(e.into()),
        Err(e) => return Err(e.into()),
    };

    // residual certificate: h(F(A), A) / (1 - lip), with the residual step
    // pruned sixteen times finer than the iterates
    let delta_r = delta / 16.0;
    let image = gifs_step(&system, &set, delta_r, &budgets)?;
    let rho = hausdorff(&image, &set)? + delta_r * dim.sqrt() / 2.0;
    let bound = rho / (1.0 - system.lip_fs());
    manifest.alpha = Some(system.lip_fs());
    manifest.final_bounds.insert("attractor".into(), bound);

    manifest.write_output(out_dir, "attractor.csv", set.to_csv().as_bytes())?;
    maybe_render(render_args, &set, &mut manifest, out_dir)?;
    finish(manifest, out_dir, started, budget_flag)
}

#[allow(clippy::too_many_arguments)]
fn run_evmap(
    spec_path: &Path,
    k: usize,
    beta: &str,
    sigma: &str,
    tol: Option<f64>,
    out_dir: &Path,
    budget_args: &BudgetArgs,
    render_args: &RenderArgs,
) -> Result<u8> {
    let started = Instant::now();
    let (text, parsed) = read_spec(spec_path)?;
    let system = parsed.to_system()?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(std::env::args().collect(), &text);
    manifest.schedules.insert("K".into(), k.to_string());
    manifest.schedules.insert("beta".into(), beta.to_string());
    manifest.schedules.insert("sigma".into(), sigma.to_string());
    if let Some(t) = tol {
        manifest.tolerances.insert("tol".into(), t);
    }

    let opts = OuterOptions {
        beta: parse_schedule(beta)?,
        sigma: parse_schedule(sigma)?,
        steps: k,
        target: tol,
        adaptive: true,
        budgets: budget_args.to_budgets(),
    };
    let b0 = system.default_seed()?;
    let (set, report) = approximate_attractor(&system, &b0, &opts)?;

    manifest.alpha = Some(report.ledger.alpha());
    manifest.d01 = Some(report.ledger.d01());
    manifest
        .final_bounds
        .insert("attractor".into(), report.final_bound());
    manifest
        .annotations
        .extend(report.ledger.annotations().iter().cloned());
    manifest.write_output(out_dir, "attractor.csv", set.to_csv().as_bytes())?;
    manifest.write_output(out_dir, "ledger.csv", report.ledger.to_csv().as_bytes())?;
    maybe_render(render_args, &set, &mut manifest, out_dir)?;
    finish(manifest, out_dir, started, report.budget_exceeded)
}

#[allow(clippy::too_many_arguments)]
fn run_measure(
    spec_path: &Path,
    k: usize,
    beta: &str,
    sigma: &str,
    tol: Option<f64>,
    out_dir: &Path,
    budget_args: &BudgetArgs,
) -> Result<u8> {
    let started = Instant::now();
    let (text, parsed) = read_spec(spec_path)?;
    let gifsp = parsed.to_gifsp()?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(std::env::args().collect(), &text);
    manifest.schedules.insert("K".into(), k.to_string());
    manifest.schedules.insert("beta".into(), beta.to_string());
    manifest.schedules.insert("sigma".into(), sigma.to_string());
    if let Some(t) = tol {
        manifest.tolerances.insert("tol".into(), t);
    }

    let opts = OuterOptions {
        beta: parse_schedule(beta)?,
        sigma: parse_schedule(sigma)?,
        steps: k,
        target: tol,
        adaptive: true,
        budgets: budget_args.to_budgets(),
    };
    let b0 = gifsp.system().default_seed()?;
    let nu0 = DiscreteMeasure::dirac(b0.point(0))?;
    let result = joint_iterate(&gifsp, &b0, &nu0, &opts)?;

    manifest.alpha = Some(result.report.ledger.alpha());
    manifest.d01 = Some(result.report.ledger.d01());
    manifest
        .final_bounds
        .insert("joint".into(), result.report.final_bound());
    manifest
        .annotations
        .extend(result.report.ledger.annotations().iter().cloned());
    manifest.write_output(out_dir, "attractor.csv", result.attractor.to_csv().as_bytes())?;
    manifest.write_output(out_dir, "measure.csv", result.measure.to_csv().as_bytes())?;
    manifest.write_output(out_dir, "ledger.csv", result.report.ledger.to_csv().as_bytes())?;
    finish(manifest, out_dir, started, result.report.budget_exceeded)
}

#[allow(clippy::too_many_arguments)]
fn run_chaos(
    spec_path: &Path,
    seed: u64,
    length: usize,
    burn_in: usize,
    nu_path: Option<&Path>,
    bin_width: f64,
    observable: &str,
    out_dir: &Path,
    budget_args: &BudgetArgs,
    render_args: &RenderArgs,
) -> Result<u8> {
    let started = Instant::now();
    let (text, parsed) = read_spec(spec_path)?;
    let gifsp = parsed.to_gifsp()?;
    let budgets = budget_args.to_budgets();
    let observable = Observable::parse(observable)?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(std::env::args().collect(), &text);
    manifest.rng_seed = Some(seed);
    manifest.schedules.insert("length".into(), length.to_string());
    manifest.schedules.insert("burn_in".into(), burn_in.to_string());

    let seed_set = gifsp.system().default_seed()?;
    let seed_point = gifs_core::Point::new(seed_set.point(0).to_vec())?;
    let nu = match nu_path {
        Some(p) => DiscreteMeasure::from_csv(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => DiscreteMeasure::dirac(seed_point.coords())?,
    };

    let cfg = OrbitConfig {
        seed_point,
        rng_seed: seed,
        burn_in,
        length,
    };
    let orbit = random_orbit(&gifsp, &nu, &cfg)?;

    // orbit CSV keeps visiting order (same format as point-set CSV)
    let mut orbit_csv = String::new();
    for p in &orbit {
        for (i, c) in p.coords().iter().enumerate() {
            if i > 0 {
                orbit_csv.push(',');
            }
            let _ = write!(orbit_csv, "{c:?}");
        }
        orbit_csv.push('\n');
    }
    manifest.write_output(out_dir, "orbit.csv", orbit_csv.as_bytes())?;

    let empirical = gifs_core::chaos::empirical_measure(&orbit, bin_width)?;
    manifest.write_output(out_dir, "empirical.csv", empirical.to_csv().as_bytes())?;

    // diagnostics against the certified solvers (experimental, not bounds)
    let diag_tol = 1e-3;
    let orbit_set = PointSet::from_rows(
        &orbit.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>(),
    )?;
    let (att, _) = evaluation_map(gifsp.system(), &nu.support_points(), diag_tol, &budgets)?;
    let h = hausdorff(&orbit_set, &att)?;
    let (mu, _) = hutchinson_measure(&gifsp, &nu, &nu, diag_tol, &budgets)?;
    let dmk = gifs_core::mk_upper(&empirical, &mu)?;
    let avg = ergodic_average(&orbit, &observable)?;
    manifest
        .diagnostics
        .insert("orbit_vs_induced_attractor_hausdorff".into(), h);
    manifest
        .diagnostics
        .insert("empirical_vs_hutchinson_mk".into(), dmk);
    manifest.diagnostics.insert("ergodic_average".into(), avg);
    println!("orbit vs induced attractor (hausdorff): {h:?}");
    println!("empirical vs hutchinson (mk): {dmk:?}");
    println!("ergodic average: {avg:?}");

    maybe_render(render_args, &orbit_set, &mut manifest, out_dir)?;
    manifest.status = "experimental".into();
    finish(manifest, out_dir, started, None)
}
