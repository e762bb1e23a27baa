//! Integrated macro-time loop, kinetics recording, precision comparison,
//! and scaling analysis.
//!
//! One macro step of the integrated solver: map the fine liquid field to
//! the coarse mesh, apply the transfer matrix under the selected
//! precision mode, broadcast the result back, advance solid diffusion and
//! interface exchange explicitly, then close global conservation through
//! the far-field concentration. Only the liquid three-step runs under
//! reduced precision; everything else stays in binary64.

use std::time::Instant;

use crate::coarse_mesh::{map_fine_to_coarse, remap_coarse_to_fine, CoarseMap};
use crate::error::{Error, Result};
use crate::fd_solver::{
    advance_solid_interface, fd_run_baseline, FineState, KineticsRecord, KineticsSample,
    StencilTables, StepEvents,
};
use crate::geometry::{generate_particle, partition_near_far, GridSpec, ParticleSpec, PhaseGrid};
use crate::physics::{self, PhysParams};
use crate::precision::PrecisionMode;
use crate::transfer::{precondition, superpose, SourceMode, TransferMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Fd,
    Fdirw,
}

impl SolverKind {
    pub fn tag(self) -> &'static str {
        match self {
            SolverKind::Fd => "fd",
            SolverKind::Fdirw => "fdirw",
        }
    }
}

/// Accumulated wall time per phase, in seconds. Timing never feeds back
/// into the computation.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub precondition: f64,
    pub mapping: f64,
    pub superpose: f64,
    pub remap: f64,
    pub solid: f64,
    pub far_field: f64,
}

impl PhaseTimings {
    /// Per-macro-step cost of the liquid three-step solve.
    pub fn liquid_step_total(&self) -> f64 {
        self.mapping + self.superpose + self.remap
    }
}

/// Per-sample deviation of the normalized solid concentration from the
/// full-precision reference.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSample {
    pub t: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Everything a run reports besides the kinetics themselves.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub solver: SolverKind,
    pub mode: PrecisionMode,
    pub n_macro_steps: u64,
    pub n_groups: usize,
    pub n_liquid: usize,
    pub n_solid: usize,
    pub timings: PhaseTimings,
    /// Multiplication count of one macro step of the three-step solve.
    pub flops_per_step: u64,
    pub events: StepEvents,
    pub max_conservation_residual: f64,
    /// Largest per-step mass imbalance absorbed by the far-field update
    /// (physical boundary flux plus numerical residue), relative.
    pub max_precorrection_residual: f64,
    /// Gain of the far-field feedback loop, `sum_I N_I P_BC_I / N_far`.
    /// The macro loop oscillates when this reaches one.
    pub boundary_feedback: f64,
    /// Filled by precision comparisons: deviation series vs the
    /// full-precision run.
    pub error_series: Option<Vec<ErrorSample>>,
}

impl RunReport {
    pub fn total_flops(&self) -> u64 {
        self.flops_per_step * self.n_macro_steps
    }

    pub fn max_rel_error(&self) -> Option<f64> {
        self.error_series
            .as_ref()
            .map(|s| s.iter().map(|e| e.rel_error).fold(0.0, f64::max))
    }

    pub fn max_abs_error(&self) -> Option<f64> {
        self.error_series
            .as_ref()
            .map(|s| s.iter().map(|e| e.abs_error).fold(0.0, f64::max))
    }
}

/// Multiplication count of the three-step solve: `N` products per row plus
/// the boundary product, plus one multiply per liquid node in each of the
/// mapping and remapping passes.
pub fn flop_count(n: u64, n_l: u64) -> u64 {
    n * (n + 1) + 2 * n_l
}

/// The integrated solver over `t_end` of simulated time.
///
/// The far field is initialized from the conservation constraint before
/// the first step, so every recorded sample (including t = 0) satisfies
/// it. Kinetics are sampled every `stride` macro steps plus the final one.
pub fn run_integrated(
    grid: &PhaseGrid,
    tables: &StencilTables,
    cmap: &CoarseMap,
    matrix: &TransferMatrix,
    params: &PhysParams,
    mode: PrecisionMode,
    t_end: f64,
    stride: u64,
) -> Result<(FineState, KineticsRecord, RunReport)> {
    run_integrated_with(grid, tables, cmap, matrix, params, mode, t_end, stride, &mut |_| Ok(()))
}

/// [`run_integrated`] with an observer invoked at every recorded sample
/// (field dumps and the like).
#[allow(clippy::too_many_arguments)]
pub fn run_integrated_with(
    grid: &PhaseGrid,
    tables: &StencilTables,
    cmap: &CoarseMap,
    matrix: &TransferMatrix,
    params: &PhysParams,
    mode: PrecisionMode,
    t_end: f64,
    stride: u64,
    observer: &mut dyn FnMut(&FineState) -> Result<()>,
) -> Result<(FineState, KineticsRecord, RunReport)> {
    matrix.check_compatible(grid, params, cmap)?;
    if matrix.n_pre != params.substeps_per_macro()? {
        return Err(Error::Invalid(format!(
            "matrix was preconditioned over {} substeps but the configuration implies {}",
            matrix.n_pre,
            params.substeps_per_macro()?
        )));
    }
    let n_far = grid.n_far_equiv;
    if !(n_far > 0.0) {
        return Err(Error::Geometry("far-field reservoir volume not set on this grid".into()));
    }
    if t_end < 0.0 {
        return Err(Error::Invalid(format!("t_end = {t_end} is negative")));
    }

    let n_macro = (t_end / params.dt_macro).round() as u64;
    let stride = stride.max(1);
    let mut state = FineState::init(grid, params);
    let mut record = KineticsRecord::new(tables, params);
    let boundary_feedback = (0..matrix.n)
        .map(|i| cmap.group_size(i) as f64 * matrix.p_bc[i])
        .sum::<f64>()
        / n_far;
    let mut report = RunReport {
        solver: SolverKind::Fdirw,
        mode,
        n_macro_steps: n_macro,
        n_groups: matrix.n,
        n_liquid: tables.n_near(),
        n_solid: tables.n_solid(),
        timings: PhaseTimings::default(),
        flops_per_step: flop_count(matrix.n as u64, tables.n_near() as u64),
        events: StepEvents::default(),
        max_conservation_residual: 0.0,
        max_precorrection_residual: 0.0,
        boundary_feedback,
        error_series: None,
    };
    if n_macro == 0 {
        return Ok((state, record, report));
    }

    let sample_now = |state: &FineState, sum_near: f64, sum_solid: f64, record: &mut KineticsRecord| {
        record.samples.push(KineticsSample {
            t: state.t,
            q_solid: sum_solid,
            q_liquid_near: sum_near,
            c_far: state.c_far,
            q_total: sum_solid + sum_near + state.c_far * n_far,
        });
    };

    let sum_n = state.sum_near(tables);
    let sum_s = state.sum_solid(tables);
    state.c_far = physics::far_field_update(params.total_mass_0, sum_n, sum_s, n_far);
    if state.c_far < 0.0 {
        report.events.negative_far_field += 1;
    }
    sample_now(&state, sum_n, sum_s, &mut record);
    observer(&state)?;

    for step in 1..=n_macro {
        let t = Instant::now();
        let coarse = map_fine_to_coarse(&state.c, cmap, mode);
        report.timings.mapping += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let coarse_next = superpose(matrix, &coarse, state.c_far, mode)?;
        report.timings.superpose += t.elapsed().as_secs_f64();
        for &v in &coarse_next {
            if !v.is_finite() {
                report.events.non_finite += 1;
            }
        }

        let t = Instant::now();
        remap_coarse_to_fine(&coarse_next, cmap, &mut state.c);
        report.timings.remap += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let events = advance_solid_interface(&mut state, tables, params, params.dt_macro)?;
        report.events.merge(events);
        report.timings.solid += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let sum_n = state.sum_near(tables);
        let sum_s = state.sum_solid(tables);
        let pre = ((sum_n + sum_s + state.c_far * n_far) - params.total_mass_0) / params.total_mass_0;
        report.max_precorrection_residual = report.max_precorrection_residual.max(pre.abs());
        state.c_far = physics::far_field_update(params.total_mass_0, sum_n, sum_s, n_far);
        if state.c_far < 0.0 {
            report.events.negative_far_field += 1;
        }
        report.timings.far_field += t.elapsed().as_secs_f64();

        state.t = step as f64 * params.dt_macro;
        if step % stride == 0 || step == n_macro {
            sample_now(&state, sum_n, sum_s, &mut record);
            observer(&state)?;
        }
    }
    report.max_conservation_residual = record.max_conservation_residual();
    Ok((state, record, report))
}

/// The explicit reference solver wrapped into the same reporting shape.
/// Kinetics are sampled every `stride` macro intervals.
pub fn run_baseline(
    grid: &PhaseGrid,
    tables: &StencilTables,
    params: &PhysParams,
    t_end: f64,
    stride: u64,
) -> Result<(FineState, KineticsRecord, RunReport)> {
    let n_pre = params.substeps_per_macro()?;
    let state = FineState::init(grid, params);
    let started = Instant::now();
    let (state, record, events) =
        fd_run_baseline(state, grid, tables, params, t_end, stride.max(1) * n_pre)?;
    let elapsed = started.elapsed().as_secs_f64();
    let report = RunReport {
        solver: SolverKind::Fd,
        mode: PrecisionMode::Full,
        n_macro_steps: ((t_end / params.dt_macro).round()) as u64,
        n_groups: 0,
        n_liquid: tables.n_near(),
        n_solid: tables.n_solid(),
        timings: PhaseTimings { solid: elapsed, ..PhaseTimings::default() },
        flops_per_step: 0,
        events,
        max_conservation_residual: record.max_conservation_residual(),
        max_precorrection_residual: 0.0,
        boundary_feedback: 0.0,
        error_series: None,
    };
    Ok((state, record, report))
}

/// One mode's outcome within a precision comparison.
#[derive(Debug, Clone)]
pub struct PrecisionOutcome {
    pub mode: PrecisionMode,
    pub record: KineticsRecord,
    pub report: RunReport,
}

/// Runs all four precision modes on identical inputs and fills each
/// reduced mode's report with the deviation series of the normalized
/// solid concentration from the full-precision run.
pub fn compare_precision(
    grid: &PhaseGrid,
    tables: &StencilTables,
    cmap: &CoarseMap,
    matrix: &TransferMatrix,
    params: &PhysParams,
    t_end: f64,
    stride: u64,
) -> Result<Vec<PrecisionOutcome>> {
    let mut outcomes = Vec::with_capacity(4);
    for mode in PrecisionMode::ALL {
        let (_, record, report) =
            run_integrated(grid, tables, cmap, matrix, params, mode, t_end, stride)?;
        outcomes.push(PrecisionOutcome { mode, record, report });
    }
    let reference = outcomes[0].record.normalized_solid();
    let times: Vec<f64> = outcomes[0].record.samples.iter().map(|s| s.t).collect();
    for outcome in outcomes.iter_mut().skip(1) {
        let series = outcome.record.normalized_solid();
        let errors: Vec<ErrorSample> = series
            .iter()
            .zip(&reference)
            .zip(&times)
            .map(|((&m, &r), &t)| {
                let ae = (r - m).abs();
                ErrorSample { t, abs_error: ae, rel_error: if r != 0.0 { ae / r } else { 0.0 } }
            })
            .collect();
        outcome.report.error_series = Some(errors);
    }
    // The reference compared against itself has an identically zero series.
    let zero: Vec<ErrorSample> =
        times.iter().map(|&t| ErrorSample { t, abs_error: 0.0, rel_error: 0.0 }).collect();
    outcomes[0].report.error_series = Some(zero);
    Ok(outcomes)
}

/// Non-divergence statistic: mean relative error over the final quarter of
/// the series, compared against the whole-run maximum.
pub fn final_quarter_mean(series: &[ErrorSample]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let start = series.len() - (series.len() / 4).max(1);
    let tail = &series[start..];
    tail.iter().map(|e| e.rel_error).sum::<f64>() / tail.len() as f64
}

/// Desk-scale parameter set derived from the reference table for a given
/// domain: same spacings, softened absorption so the macro-step exchange
/// stays resolved, and a reservoir large enough for the explicit
/// far-field closure to stay stable.
///
/// The closure recomputes the reservoir concentration from conservation
/// once per macro step, which feeds back into the next superposition
/// through the boundary column. That feedback loop has gain of order
/// `N_L / N_far`, so the reservoir must hold several times the near-field
/// volume (the reference table has a ratio of several hundred).
pub fn desk_params(n_solid: usize, n_near: usize) -> PhysParams {
    let mut p = physics::reference_params();
    p.d_s = 1.0e-19;
    p.c_s_eq = 0.01;
    p.k = 5.0e-4;
    let capacity = 2.0 * p.c_s_eq * n_solid as f64;
    let supply_based = (capacity - p.c_s_0 * n_solid as f64) / p.c_l_0 - n_near as f64;
    let n_far = supply_based.max(8.0 * n_near as f64);
    p.v_far = n_far * p.dh.powi(3);
    p.total_mass_0 = p.c_l_0 * (n_near as f64 + p.n_far_equiv()) + p.c_s_0 * n_solid as f64;
    p
}

/// Canonical desk-scale porous particle for a given radius: the grid edge
/// is four radii and the pore count scales with the particle volume.
pub fn desk_particle(r_p: f64, seed: u64) -> (GridSpec, ParticleSpec) {
    let nx = (4.0 * r_p).round() as u32;
    let n_pores = (70.0 * (r_p / 12.0).powi(3)).round() as u32;
    (
        GridSpec::new(nx, nx, nx, 1.0e-8).expect("desk grid spec"),
        ParticleSpec { r_p, n_pores, pore_radius_range: (2.0, 4.0), rng_seed: seed },
    )
}

/// Fully prepared desk-scale domain: geometry, tables, coarse map, params.
pub fn desk_domain(r_p: f64, seed: u64) -> Result<(PhaseGrid, StencilTables, CoarseMap, PhysParams)> {
    let (spec, part) = desk_particle(r_p, seed);
    let (mut grid, _) = generate_particle(spec, part)?;
    crate::geometry::partition_shell(&mut grid)?;
    let tables = StencilTables::new(&grid);
    let params = desk_params(tables.n_solid(), tables.n_near());
    partition_near_far(&mut grid, params.n_far_equiv())?;
    let tables = StencilTables::new(&grid);
    let cmap = crate::coarse_mesh::coarsen(&grid, &tables)?;
    Ok((grid, tables, cmap, params))
}

/// One row of the scaling study.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub r_p: f64,
    pub nx: u32,
    pub n_groups: usize,
    pub n_liquid: usize,
    pub n_solid: usize,
    pub precondition_s: f64,
    /// Mean per-macro-step wall time of the three-step liquid solve.
    pub step_s: f64,
    pub mapping_s: f64,
    pub superpose_s: f64,
    pub remap_s: f64,
    /// Mean wall time of one macro interval of the explicit liquid solver.
    pub fd_interval_s: f64,
    pub flops_per_step: u64,
}

#[derive(Debug, Clone)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Log-log slope of per-step time against liquid node count.
    pub slope: f64,
    pub mode: PrecisionMode,
}

fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Times the per-macro-step phases of the integrated solver across
/// particle sizes and fits the complexity exponent against the liquid
/// node count. Preconditioning is timed separately and excluded from the
/// fit; the explicit liquid solver is timed over the same macro interval
/// for the speedup comparison.
pub fn bench_scaling(
    sizes: &[f64],
    mode: PrecisionMode,
    seed: u64,
    n_macro_steps: u64,
    n_fd_intervals: u64,
) -> Result<ScalingTable> {
    if sizes.len() < 3 {
        return Err(Error::Invalid(format!(
            "scaling study needs at least 3 particle sizes, got {}",
            sizes.len()
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &r_p in sizes {
        let (grid, tables, cmap, params) = desk_domain(r_p, seed)?;

        let t = Instant::now();
        let matrix = precondition(&grid, &tables, &cmap, &params, mode, SourceMode::Group)?;
        let precondition_s = t.elapsed().as_secs_f64();

        let t_end = n_macro_steps as f64 * params.dt_macro;
        let (_, _, report) =
            run_integrated(&grid, &tables, &cmap, &matrix, &params, mode, t_end, n_macro_steps)?;
        let steps = report.n_macro_steps.max(1) as f64;

        // Explicit liquid stepping over whole macro intervals, timed on
        // the same initial state.
        let n_pre = params.substeps_per_macro()?;
        let mut state = FineState::init(&grid, &params);
        let mut scratch = Vec::new();
        let t = Instant::now();
        for _ in 0..n_fd_intervals * n_pre {
            crate::fd_solver::fd_step_liquid(&mut state, &tables, &params, params.dt_fd, &mut scratch)?;
        }
        let fd_interval_s = t.elapsed().as_secs_f64() / n_fd_intervals.max(1) as f64;

        rows.push(ScalingRow {
            r_p,
            nx: grid.spec.nx,
            n_groups: matrix.n,
            n_liquid: tables.n_near(),
            n_solid: tables.n_solid(),
            precondition_s,
            step_s: report.timings.liquid_step_total() / steps,
            mapping_s: report.timings.mapping / steps,
            superpose_s: report.timings.superpose / steps,
            remap_s: report.timings.remap / steps,
            fd_interval_s,
            flops_per_step: report.flops_per_step,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n_liquid as f64, r.step_s)).collect();
    let slope = fit_loglog_slope(&points);
    Ok(ScalingTable { rows, slope, mode })
}
