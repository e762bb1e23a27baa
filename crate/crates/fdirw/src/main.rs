//! Command-line front end: geometry generation, preconditioning, runs,
//! precision comparison, scaling benchmark, and plot emission.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fdirw::coarse_mesh::{coarsen_with_factor, DEFAULT_COARSE_FACTOR};
use fdirw::driver::{
    bench_scaling, compare_precision, run_baseline, run_integrated_with, SolverKind,
};
use fdirw::error::Error;
use fdirw::fd_solver::StencilTables;
use fdirw::geometry::{generate_particle, partition_shell, GridSpec, ParticleSpec};
use fdirw::io;
use fdirw::outputs;
use fdirw::physics::{apply_far_field, PhysParams};
use fdirw::plot::{ChartSpec, Scale, Series};
use fdirw::precision::PrecisionMode;
use fdirw::transfer::{precondition, SourceMode};

#[derive(Parser)]
#[command(
    name = "fdirw",
    version,
    about = "Transfer-matrix superposition solver for strongly inhomogeneous diffusion-absorption problems",
    long_version = concat!(
        env!("CARGO_PKG_VERSION"),
        "\nformats: FDIRW-GEOM v1, FDIRW-MAT v1, FDIRW-FIELD v1, FDIRW-CMAP v1"
    )
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct WorkerArgs {
    /// Worker threads (0 = one per core). Results are bit-identical for
    /// any setting.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a porous-particle geometry file.
    GenGeometry {
        /// Cubic grid edge in voxels.
        #[arg(long)]
        size: u32,
        /// Particle radius in voxel units.
        #[arg(long)]
        rp: f64,
        /// Number of spherical pores.
        #[arg(long, default_value_t = 0)]
        pores: u32,
        /// Pore radius range in voxel units, as `min:max`.
        #[arg(long, default_value = "2:4", value_parser = parse_range)]
        pore_radius: (f64, f64),
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Voxel edge length in meters.
        #[arg(long, default_value_t = 1.0e-8)]
        dh: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the transfer matrix for one macro step.
    Precondition {
        #[arg(long)]
        geometry: PathBuf,
        /// Physics configuration (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Storage precision: full | fp32 | mixed | fp16.
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        precision: PrecisionMode,
        /// Representative-node block width in voxels.
        #[arg(long, default_value_t = DEFAULT_COARSE_FACTOR)]
        coarse_factor: u32,
        /// Unit-source layout: group | single.
        #[arg(long, default_value = "group", value_parser = parse_source)]
        source: SourceMode,
        #[arg(long)]
        out: PathBuf,
        /// Also dump the coarse map next to the matrix (audit only).
        #[arg(long)]
        dump_coarse_map: bool,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Run one solver and write a run directory.
    Run {
        #[arg(long)]
        geometry: PathBuf,
        /// Transfer matrix (required for the superposition solver).
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// fd | fdirw
        #[arg(long, default_value = "fdirw", value_parser = parse_solver)]
        solver: SolverKind,
        /// Arithmetic mode for the superposition step.
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        precision: PrecisionMode,
        /// Simulated end time in seconds.
        #[arg(long)]
        t_end: f64,
        /// Kinetics sampling stride in macro steps.
        #[arg(long, default_value_t = 1)]
        stride: u64,
        /// Dump the field every this many macro steps (0 = final only).
        #[arg(long, default_value_t = 0)]
        dump_stride: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Run all four precision modes on identical inputs and compare.
    Compare {
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1)]
        stride: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Scaling study across particle sizes.
    Bench {
        /// Comma-separated particle radii in voxel units.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<f64>,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: PrecisionMode,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Macro steps to average the per-step timings over.
        #[arg(long, default_value_t = 50)]
        steps: u64,
        /// Macro intervals to average the explicit-solver timing over.
        #[arg(long, default_value_t = 3)]
        fd_intervals: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Re-plot a CSV (kinetics or error series) as an SVG line chart.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Log-scale the y axis.
        #[arg(long)]
        logy: bool,
        /// Column to use for x (name from the CSV header).
        #[arg(long, default_value = "t")]
        x_col: String,
        /// Columns to plot (default: every non-x column).
        #[arg(long, value_delimiter = ',')]
        y_cols: Vec<String>,
    },
}

fn parse_mode(s: &str) -> Result<PrecisionMode, String> {
    PrecisionMode::from_tag(s).ok_or_else(|| format!("unknown precision `{s}` (full|fp32|mixed|fp16)"))
}

fn parse_source(s: &str) -> Result<SourceMode, String> {
    SourceMode::from_tag(s).ok_or_else(|| format!("unknown source mode `{s}` (group|single)"))
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    match s {
        "fd" => Ok(SolverKind::Fd),
        "fdirw" => Ok(SolverKind::Fdirw),
        _ => Err(format!("unknown solver `{s}` (fd|fdirw)")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected `min:max`, got `{s}`"))?;
    let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    Ok((lo, hi))
}

fn install_pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot build worker pool: {e}")))
}

/// Loads geometry and config together, applying the far-field volume and
/// reporting the mass-consistency gap.
fn load_domain(
    geometry: &PathBuf,
    config: &PathBuf,
) -> Result<(fdirw::geometry::PhaseGrid, StencilTables, PhysParams), Error> {
    let mut grid = io::read_geometry(geometry)?;
    let params = PhysParams::from_config_file(config)?;
    apply_far_field(&mut grid, &params);
    let tables = StencilTables::new(&grid);
    let gap = params.mass_consistency_gap(tables.n_solid(), tables.n_near());
    if gap > 0.05 {
        eprintln!(
            "warning: configured total_mass_0 deviates {:.1}% from the mass implied by the \
             initial concentrations and this geometry",
            gap * 100.0
        );
    }
    Ok((grid, tables, params))
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenGeometry { size, rp, pores, pore_radius, seed, dh, out } => {
            let spec = GridSpec::new(size, size, size, dh)?;
            let part = ParticleSpec {
                r_p: rp,
                n_pores: pores,
                pore_radius_range: pore_radius,
                rng_seed: seed,
            };
            let (mut grid, stats) = generate_particle(spec, part)?;
            partition_shell(&mut grid)?;
            io::write_geometry(&out, &grid)?;
            println!(
                "wrote {} ({}^3 voxels)\nN_S {}\nN_L {}\nporosity {:.4}\nsealed-cavity voxels {}\ngeometry hash {}",
                out.display(),
                size,
                grid.n_solid(),
                grid.n_near(),
                stats.porosity(grid.n_solid()),
                stats.sealed_voxels,
                grid.hash(),
            );
            Ok(())
        }

        Command::Precondition {
            geometry,
            config,
            precision,
            coarse_factor,
            source,
            out,
            dump_coarse_map,
            workers,
        } => {
            let pool = install_pool(workers.workers)?;
            pool.install(|| {
                let (grid, tables, params) = load_domain(&geometry, &config)?;
                let cmap = coarsen_with_factor(&grid, &tables, coarse_factor)?;
                let matrix = precondition(&grid, &tables, &cmap, &params, precision, source)?;
                io::write_matrix(&out, &matrix)?;
                if dump_coarse_map {
                    io::write_coarse_map(&out.with_extension("cmap"), &cmap, &tables)?;
                }
                println!(
                    "wrote {}\nN {}\nN_L {}\nsubsteps {}\nrow-sum residual {:e}\nentry range [{:e}, {:e}]",
                    out.display(),
                    matrix.n,
                    tables.n_near(),
                    matrix.n_pre,
                    matrix.construction_residual,
                    matrix.min_entry(),
                    matrix.max_entry(),
                );
                let (hist_p, hist_bc) = fdirw::transfer::element_histogram(&matrix);
                println!("entry magnitudes per decade [1e-12, 1), zeros apart:");
                println!("  P    zeros {} decades {:?}", hist_p.zeros, hist_p.decades);
                println!("  P_BC zeros {} decades {:?}", hist_bc.zeros, hist_bc.decades);
                if source == SourceMode::Group && !(matrix.construction_residual <= 1.0e-9) {
                    return Err(Error::Invalid(format!(
                        "row-sum identity violated: residual {:e} exceeds 1e-9",
                        matrix.construction_residual
                    )));
                }
                Ok(())
            })
        }

        Command::Run {
            geometry,
            matrix,
            config,
            solver,
            precision,
            t_end,
            stride,
            dump_stride,
            out,
            workers,
        } => {
            let pool = install_pool(workers.workers)?;
            pool.install(|| {
                let (grid, tables, params) = load_domain(&geometry, &config)?;
                let fields_dir = out.join("fields");
                std::fs::create_dir_all(&fields_dir)
                    .map_err(|e| Error::io(format!("creating {}", fields_dir.display()), e))?;
                let (state, record, report) = match solver {
                    SolverKind::Fd => run_baseline(&grid, &tables, &params, t_end, stride)?,
                    SolverKind::Fdirw => {
                        let matrix_path = matrix.as_ref().ok_or_else(|| {
                            Error::Invalid("--matrix is required for the fdirw solver".into())
                        })?;
                        let m = io::read_matrix(matrix_path)?;
                        let cmap = coarsen_with_factor(&grid, &tables, m.coarse_factor)?;
                        let mut dump_err = Ok(());
                        let outcome = run_integrated_with(
                            &grid,
                            &tables,
                            &cmap,
                            &m,
                            &params,
                            precision,
                            t_end,
                            stride,
                            &mut |state| {
                                if dump_stride > 0 {
                                    let step = (state.t / params.dt_macro).round() as u64;
                                    if step % dump_stride == 0 {
                                        let path = fields_dir.join(format!("step_{step:06}.field"));
                                        if let Err(e) = io::write_field(&path, state, &grid) {
                                            dump_err = Err(e);
                                        }
                                    }
                                }
                                Ok(())
                            },
                        )?;
                        dump_err?;
                        outcome
                    }
                };
                io::write_field(&fields_dir.join("final.field"), &state, &grid)?;
                outputs::write_run_outputs(&out, &record, &report)?;
                println!(
                    "wrote {}\nsolver {} precision {}\nsamples {}\nmax conservation residual {:e}",
                    out.display(),
                    report.solver.tag(),
                    report.mode.tag(),
                    record.samples.len(),
                    report.max_conservation_residual,
                );
                if report.boundary_feedback >= 0.5 {
                    eprintln!(
                        "warning: far-field feedback gain {:.2}; the reservoir is small for \
                         this macro step and the loop approaches its stability limit",
                        report.boundary_feedback
                    );
                }
                if !(report.max_conservation_residual <= 1.0e-10) {
                    return Err(Error::Invalid(format!(
                        "conservation violated: residual {:e} exceeds 1e-10",
                        report.max_conservation_residual
                    )));
                }
                Ok(())
            })
        }

        Command::Compare { geometry, matrix, config, t_end, stride, out, workers } => {
            let pool = install_pool(workers.workers)?;
            pool.install(|| {
                let (grid, tables, params) = load_domain(&geometry, &config)?;
                let m = io::read_matrix(&matrix)?;
                let cmap = coarsen_with_factor(&grid, &tables, m.coarse_factor)?;
                let outcomes = compare_precision(&grid, &tables, &cmap, &m, &params, t_end, stride)?;
                outputs::write_compare_outputs(&out, &outcomes)?;
                for o in &outcomes {
                    if let Some(re) = o.report.max_rel_error() {
                        println!("{}: max RE {:e}", o.mode.tag(), re);
                    }
                    if !(o.report.max_conservation_residual <= 1.0e-10) {
                        return Err(Error::Invalid(format!(
                            "conservation violated in {}: residual {:e}",
                            o.mode.tag(),
                            o.report.max_conservation_residual
                        )));
                    }
                }
                println!("wrote {}", out.display());
                Ok(())
            })
        }

        Command::Bench { sizes, mode, seed, steps, fd_intervals, out, workers } => {
            let pool = install_pool(workers.workers)?;
            pool.install(|| {
                let table = bench_scaling(&sizes, mode, seed, steps, fd_intervals)?;
                outputs::write_bench_outputs(&out, &table)?;
                println!("wrote {}", out.display());
                for r in &table.rows {
                    println!(
                        "r_p {:>5}: N {:>5} N_L {:>8} step {:.3e} s, explicit interval {:.3e} s, flops {}",
                        r.r_p, r.n_groups, r.n_liquid, r.step_s, r.fd_interval_s, r.flops_per_step
                    );
                }
                println!("log-log slope vs N_L: {:.3}", table.slope);
                Ok(())
            })
        }

        Command::Plot { csv, out, logy, x_col, y_cols } => {
            let text = std::fs::read_to_string(&csv)
                .map_err(|e| Error::io(format!("reading {}", csv.display()), e))?;
            let mut lines = text.lines();
            let header: Vec<&str> = lines
                .next()
                .ok_or_else(|| Error::Invalid("empty CSV".into()))?
                .split(',')
                .collect();
            let x_idx = header
                .iter()
                .position(|&h| h == x_col)
                .ok_or_else(|| Error::Invalid(format!("no column `{x_col}` in {header:?}")))?;
            let selected: Vec<usize> = if y_cols.is_empty() {
                (0..header.len()).filter(|&i| i != x_idx).collect()
            } else {
                y_cols
                    .iter()
                    .map(|c| {
                        header
                            .iter()
                            .position(|h| h == c)
                            .ok_or_else(|| Error::Invalid(format!("no column `{c}` in {header:?}")))
                    })
                    .collect::<Result<_, _>>()?
            };
            let mut series: Vec<Series> =
                selected.iter().map(|&i| Series::new(header[i], Vec::new())).collect();
            for line in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let cells: Vec<f64> = line
                    .split(',')
                    .map(|c| c.parse().unwrap_or(f64::NAN))
                    .collect();
                for (s, &i) in series.iter_mut().zip(&selected) {
                    s.points.push((cells[x_idx], cells[i]));
                }
            }
            let spec = ChartSpec {
                title: csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                x_label: x_col,
                y_label: "value".into(),
                x_scale: Scale::Linear,
                y_scale: if logy { Scale::Log } else { Scale::Linear },
            };
            fdirw::plot::write_svg(&out, &spec, &series)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
