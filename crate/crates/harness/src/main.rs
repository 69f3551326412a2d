use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use imex_peer::problems::{advection_reaction, burgers, problem_by_name, SplitProblem, PROBLEM_NAMES};
use imex_peer::stability::{
    imaginary_axis_extent_with, real_axis_extent_with, scan_region_with, GridSpec, ScanConfig, StabilityContext,
};
use imex_peer::tableau::{builtin_tableau, check_zero_stability, load_tableau, parse_tableau, save_tableau, PeerTableau, BUILTIN_METHODS};
use imex_peer_harness::reference::{compute_reference, Reference, REFERENCE_TOL};
use imex_peer_harness::study::run_sigma_study;
use imex_peer_harness::verify::{verify_method, VerifyOptions};
use imex_peer_harness::wp::{default_tolerances, run_work_precision, TauRule};

#[derive(Parser)]
#[command(name = "imex-peer", version, about = "IMEX-Peer method verification and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a method's invariants and compare with published values.
    Verify {
        /// Built-in method name or tableau file.
        method: String,
        /// Also scan the stability regions (slow).
        #[arg(long)]
        regions: bool,
    },
    /// Stability region areas and axis extents as CSV.
    Stability {
        method: String,
        /// Wedge angles in degrees.
        #[arg(long, value_delimiter = ',', default_values_t = vec![90.0, 0.0])]
        alpha: Vec<f64>,
        /// Cell size of the first scan pass.
        #[arg(long, default_value_t = 1.0 / 200.0)]
        grid: f64,
        /// Step ratio σ of the stability matrix.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Write boundary polylines to `<PREFIX>_<alpha>.csv`.
        #[arg(long)]
        boundary: Option<PathBuf>,
    },
    /// Prescribed σ-pattern convergence study as CSV.
    Converge {
        method: String,
        problem: String,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        dt_list: Vec<f64>,
        /// Reference file for problems without an exact solution.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Adaptive work-precision sweep as CSV.
    Wp {
        method: String,
        problem: String,
        #[arg(long, value_delimiter = ',')]
        tols: Option<Vec<f64>>,
        /// Fixed initial step; defaults to the problem's rule.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Compute and store a reference solution.
    Reference {
        problem: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = REFERENCE_TOL)]
        tol: f64,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Read, validate or print tableau files.
    Tableau {
        #[command(subcommand)]
        action: TableauAction,
    },
}

#[derive(Subcommand)]
enum TableauAction {
    /// Validate a tableau file and summarize it.
    Load { file: PathBuf },
    /// Print a tableau (file or built-in name) in file format.
    Show { source: String },
}

fn resolve_method(arg: &str) -> Result<PeerTableau> {
    if BUILTIN_METHODS.contains(&arg) {
        return Ok(builtin_tableau(arg)?);
    }
    let path = Path::new(arg);
    if path.exists() {
        let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(load_tableau(&src)?);
    }
    bail!("'{arg}' is neither a built-in method ({}) nor a file", BUILTIN_METHODS.join(", "))
}

/// Benchmark problem; `resolution` is `1/Δx` for Burgers and the node count
/// for advection-reaction.
fn make_problem(name: &str, resolution: Option<usize>) -> Result<Arc<dyn SplitProblem>> {
    match (name, resolution) {
        (_, None) => problem_by_name(name).map_err(|e| anyhow::anyhow!("{e} (known: {})", PROBLEM_NAMES.join(", "))),
        ("burgers", Some(n)) => Ok(Arc::new(burgers(1.0 / n as f64)?)),
        ("advection-reaction", Some(m)) => Ok(Arc::new(advection_reaction(m)?)),
        (_, Some(_)) => bail!("--resolution applies to burgers and advection-reaction only"),
    }
}

fn load_reference(path: Option<&PathBuf>, problem: &Arc<dyn SplitProblem>) -> Result<Reference> {
    let r = match path {
        Some(p) => Reference::from_csv(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => {
            eprintln!("computing reference for {} at tol {REFERENCE_TOL:e}", problem.name());
            compute_reference(problem.clone(), REFERENCE_TOL)?
        }
    };
    if r.problem != problem.name() || r.y.len() != problem.dim() {
        bail!("reference is for '{}' with {} components", r.problem, r.y.len());
    }
    Ok(r)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify { method, regions } => {
            let data = match builtin_tableau(&method) {
                Ok(t) => t.to_data(),
                Err(_) => parse_tableau(&fs::read_to_string(&method).with_context(|| format!("reading {method}"))?)?,
            };
            let opts = VerifyOptions {
                regions: regions.then(ScanConfig::default),
                ..VerifyOptions::default()
            };
            let report = verify_method(&data, &opts);
            print!("{}", report.render());
            Ok(report.passed())
        }
        Command::Stability {
            method,
            alpha,
            grid,
            sigma,
            boundary,
        } => {
            let t = resolve_method(&method)?;
            let g = GridSpec::default();
            let config = ScanConfig {
                grid: GridSpec::with_resolution(g.x_min, g.x_max, g.y_min, g.y_max, grid),
                sigma,
                ..ScanConfig::default()
            };
            let ctx = StabilityContext::new(&t, sigma)?;
            println!("method,sigma,alpha,area,x_max,y_max,rho_damp");
            for a in alpha {
                let scan = scan_region_with(&ctx, a, &config);
                let x = real_axis_extent_with(&ctx, a, &config.rays);
                let y = imaginary_axis_extent_with(&ctx, a, &config.rays, scan.mask.grid.y_max.max(config.grid.y_max));
                println!("{},{sigma},{a},{:.6e},{x:.6e},{y:.6e},{:.6e}", t.name(), scan.area, ctx.damping_radius());
                if let Some(prefix) = &boundary {
                    let path = PathBuf::from(format!("{}_{a}.csv", prefix.display()));
                    fs::write(&path, scan.mask.boundary_csv()).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            Ok(true)
        }
        Command::Converge {
            method,
            problem,
            sigma,
            dt_list,
            reference,
            resolution,
        } => {
            let t = resolve_method(&method)?;
            let p = make_problem(&problem, resolution)?;
            let r = if p.exact(p.t_span().1).is_some() { None } else { Some(load_reference(reference.as_ref(), &p)?) };
            let report = run_sigma_study(&t, p.as_ref(), sigma, &dt_list, r.as_ref())?;
            print!("{}", report.to_csv());
            println!("# slope={:.4} fitted_points={}", report.slope, report.points_fitted);
            Ok(true)
        }
        Command::Wp {
            method,
            problem,
            tols,
            tau,
            reference,
            repeats,
            resolution,
        } => {
            let t = resolve_method(&method)?;
            let p = make_problem(&problem, resolution)?;
            let r = load_reference(reference.as_ref(), &p)?;
            let tols = tols.unwrap_or_else(|| default_tolerances(&problem));
            let rule = tau.map(TauRule::Fixed).unwrap_or_else(|| TauRule::for_problem(&problem));
            let wp = run_work_precision(&t, p.as_ref(), &tols, rule, &r, repeats);
            print!("{}", wp.to_csv());
            for (loose, tight) in wp.non_monotone(1.0) {
                eprintln!("note: error does not decrease from tol {loose:e} to {tight:e}");
            }
            Ok(wp.all_completed())
        }
        Command::Reference {
            problem,
            out,
            tol,
            resolution,
        } => {
            let p = make_problem(&problem, resolution)?;
            let r = compute_reference(p, tol)?;
            fs::write(&out, r.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} (sha256 {})", out.display(), r.hash());
            Ok(true)
        }
        Command::Tableau { action } => match action {
            TableauAction::Load { file } => {
                let src = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
                let t = load_tableau(&src)?;
                let zs = check_zero_stability(&t);
                println!("name,stages,gamma,c_min,c_max,preconsistency,zero_stable");
                println!(
                    "{},{},{},{},{},{:.3e},{}",
                    t.name(),
                    t.stages(),
                    t.gamma(),
                    t.c_min(),
                    t.c_max(),
                    t.preconsistency_residual(),
                    zs.zero_stable
                );
                Ok(zs.zero_stable)
            }
            TableauAction::Show { source } => {
                print!("{}", save_tableau(&resolve_method(&source)?));
                Ok(true)
            }
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
