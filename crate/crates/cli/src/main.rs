//! Command-line driver: grid generation, case runs, free-stream estimates,
//! boundary-layer profiles and convergence plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mzres::case::{estimate_case, extract_profile, format_profile, read_solution, run_case, CaseConfig, SUMMARY_FILE};
use mzres::estimator::MachineEpsilon;
use mzres::figures::report_figures;
use mzres::grid::write_grid;
use mzres::gridgen::{generate_flatplate_grid, generate_joukowsky_ogrid, FlatPlateGridSpec, JoukowskyGridSpec};

/// Exit code for bad input (unreadable or invalid files, bad flags).
const INPUT_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "mzres", version, about = "2D compressible flow solver with machine-zero residual estimates")]
struct Cli {
    /// Log level when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid file.
    Gridgen {
        #[command(subcommand)]
        kind: GridKind,
    },
    /// Run a case file: estimate R_c, solve, write history, summary and solution.
    Run(RunArgs),
    /// Free-stream estimate R_c for a case, without solving.
    Estimate {
        case: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Boundary-layer profile along the vertical grid line nearest to `x`.
    Profile {
        solution: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        x: f64,
        /// Output CSV; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Residual and dw plots (SVG) from a history CSV.
    Plot {
        history: PathBuf,
        /// Output directory; defaults to the directory of the CSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GridKind {
    /// O-grid around a Joukowsky airfoil.
    Joukowsky {
        #[arg(long, default_value_t = JoukowskyGridSpec::default().n_circumferential)]
        n_circumferential: usize,
        #[arg(long, default_value_t = JoukowskyGridSpec::default().n_radial)]
        n_radial: usize,
        #[arg(long, default_value_t = JoukowskyGridSpec::default().thickness)]
        thickness: f64,
        #[arg(long, default_value_t = JoukowskyGridSpec::default().camber, allow_hyphen_values = true)]
        camber: f64,
        #[arg(long, default_value_t = JoukowskyGridSpec::default().outer_radius)]
        outer_radius: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rectangular grid over a flat plate.
    FlatPlate {
        #[arg(long, default_value_t = FlatPlateGridSpec::default().nx)]
        nx: usize,
        #[arg(long, default_value_t = FlatPlateGridSpec::default().ny)]
        ny: usize,
        #[arg(long, default_value_t = FlatPlateGridSpec::default().plate_start, allow_hyphen_values = true)]
        plate_start: f64,
        #[arg(long, default_value_t = FlatPlateGridSpec::default().x_min, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, default_value_t = FlatPlateGridSpec::default().x_max, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, default_value_t = FlatPlateGridSpec::default().height)]
        height: f64,
        #[arg(long, default_value_t = FlatPlateGridSpec::default().stretching)]
        stretching: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    case: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Start from a solution file instead of the free stream.
    #[arg(long)]
    restart: Option<PathBuf>,
    /// Perturbation size of the estimates.
    #[arg(long)]
    eps: Option<f64>,
    /// Stop when every dw(i) falls below this value.
    #[arg(long)]
    dw_tolerance: Option<f64>,
    /// Sets both `--eps` and `--dw-tolerance`.
    #[arg(long, conflicts_with_all = ["eps", "dw_tolerance"])]
    eps_stop: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_case(path: &Path) -> Result<CaseConfig> {
    CaseConfig::from_file(path).with_context(|| format!("loading case {}", path.display()))
}

fn gridgen(kind: GridKind) -> Result<()> {
    let (grid, output) = match kind {
        GridKind::Joukowsky { n_circumferential, n_radial, thickness, camber, outer_radius, output } => {
            let spec = JoukowskyGridSpec { n_circumferential, n_radial, thickness, camber, outer_radius };
            (generate_joukowsky_ogrid(&spec)?, output)
        }
        GridKind::FlatPlate { nx, ny, plate_start, x_min, x_max, height, stretching, output } => {
            let spec = FlatPlateGridSpec { nx, ny, plate_start, x_min, x_max, height, stretching };
            (generate_flatplate_grid(&spec)?, output)
        }
    };
    write_grid(&grid, &output)?;
    println!(
        "wrote {} ({} nodes, {} edges, {} boundary faces)",
        output.display(),
        grid.num_nodes(),
        grid.edges.len(),
        grid.boundary_faces.len()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<u8> {
    let mut cfg = load_case(&args.case)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if args.restart.is_some() {
        cfg.restart = args.restart;
    }
    if let Some(x) = args.eps_stop {
        cfg.estimator.eps = MachineEpsilon::new(x)?;
        cfg.solver.termination.dw_tolerance = x;
    }
    if let Some(x) = args.eps {
        cfg.estimator.eps = MachineEpsilon::new(x)?;
    }
    if let Some(x) = args.dw_tolerance {
        cfg.solver.termination.dw_tolerance = x;
    }
    if let Some(n) = args.max_iterations {
        cfg.solver.max_iterations = n;
    }
    if let Some(s) = args.seed {
        cfg.estimator.seed = s;
    }
    let run = run_case(&cfg)?;
    let s = &run.summary;
    println!("{}: {:?} after {} iterations ({:.1} s)", s.name, s.termination, s.iterations, s.wall_time);
    println!("{:>4} {:>12} {:>12} {:>12} {:>10}", "eq", "Res", "R_c", "R_m", "ratio");
    for (i, name) in ["p'", "u", "v", "T"].iter().enumerate() {
        println!(
            "{name:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.3e}",
            s.final_residual[i], s.estimates.rc[i], s.estimates.rm[i], s.ratios[i]
        );
    }
    if let Some(e) = &s.error {
        eprintln!("solver aborted: {e}");
    }
    println!("summary: {}", run.output_dir.join(SUMMARY_FILE).display());
    Ok(u8::try_from(s.exit_code).unwrap_or(1))
}

fn estimate(case: &Path, eps: Option<f64>, seed: Option<u64>, json: bool) -> Result<()> {
    let mut cfg = load_case(case)?;
    if let Some(x) = eps {
        cfg.estimator.eps = MachineEpsilon::new(x)?;
    }
    if let Some(s) = seed {
        cfg.estimator.seed = s;
    }
    let report = estimate_case(&cfg)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{}: R_c at eps = {:e}, seed {}", cfg.name, report.eps, report.seed);
        for (name, v) in ["p'", "u", "v", "T"].iter().zip(report.rc) {
            println!("{name:>4} {v:.4e}");
        }
    }
    Ok(())
}

fn profile(solution: &Path, x: f64, output: Option<PathBuf>) -> Result<()> {
    let sol = read_solution(solution)?;
    let text = format_profile(&extract_profile(&sol, x)?);
    match output {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn plot(history: &Path, output: Option<PathBuf>) -> Result<()> {
    let dir = output.unwrap_or_else(|| history.parent().map(Path::to_path_buf).unwrap_or_default());
    let (r, d) = report_figures(history, &dir)?;
    println!("wrote {} and {}", r.display(), d.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    let result = match cli.command {
        Command::Gridgen { kind } => gridgen(kind).map(|()| 0),
        Command::Run(args) => run(args),
        Command::Estimate { case, eps, seed, json } => estimate(&case, eps, seed, json).map(|()| 0),
        Command::Profile { solution, x, output } => profile(&solution, x, output).map(|()| 0),
        Command::Plot { history, output } => plot(&history, output).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
