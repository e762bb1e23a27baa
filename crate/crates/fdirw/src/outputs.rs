//! Run-directory emission: kinetics CSV, deterministic report, timing
//! file, and SVG plots.
//!
//! Everything that must be byte-identical across repeated runs and worker
//! counts goes into `kinetics.csv` and `report.txt`; wall-clock numbers
//! are segregated into `timings.txt`.

use std::fmt::Write as _;
use std::path::Path;

use crate::driver::{final_quarter_mean, PrecisionOutcome, RunReport, ScalingTable};
use crate::error::{Error, Result};
use crate::fd_solver::KineticsRecord;
use crate::io::{write_kinetics_csv, KINETICS_COLUMNS};
use crate::plot::{write_svg, ChartSpec, Scale, Series};

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::io(format!("creating directory {}", path.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Deterministic run summary (no wall-clock content).
pub fn report_text(record: &KineticsRecord, report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "solver {}", report.solver.tag());
    let _ = writeln!(s, "precision {}", report.mode.tag());
    let _ = writeln!(s, "macro-steps {}", report.n_macro_steps);
    let _ = writeln!(s, "groups {}", report.n_groups);
    let _ = writeln!(s, "liquid-voxels {}", report.n_liquid);
    let _ = writeln!(s, "solid-voxels {}", report.n_solid);
    let _ = writeln!(s, "flops-per-step {}", report.flops_per_step);
    let _ = writeln!(s, "flops-total {}", report.total_flops());
    let _ = writeln!(s, "solid-capacity {}", record.q_solid_capacity);
    let _ = writeln!(s, "liquid-initial {}", record.q_liquid_initial);
    let _ = writeln!(s, "total-mass {}", record.total_mass_0);
    let _ = writeln!(s, "samples {}", record.samples.len());
    let _ = writeln!(s, "max-conservation-residual {:e}", report.max_conservation_residual);
    let _ = writeln!(s, "max-precorrection-residual {:e}", report.max_precorrection_residual);
    let _ = writeln!(s, "boundary-feedback {:e}", report.boundary_feedback);
    let _ = writeln!(s, "clamped-transfers {}", report.events.clamped_transfers);
    let _ = writeln!(s, "non-finite-values {}", report.events.non_finite);
    let _ = writeln!(s, "negative-far-field {}", report.events.negative_far_field);
    if let (Some(ae), Some(re)) = (report.max_abs_error(), report.max_rel_error()) {
        let _ = writeln!(s, "max-abs-error {ae:e}");
        let _ = writeln!(s, "max-rel-error {re:e}");
    }
    let _ = writeln!(s, "kinetics-columns {KINETICS_COLUMNS}");
    let _ = writeln!(
        s,
        "kinetics-columns-doc t = simulated seconds; Q_S = total solid concentration; \
         Q_L_near = total near-field liquid concentration; c_far = far-field concentration; \
         Q_total = Q_S + Q_L_near + c_far * N_far"
    );
    s
}

fn timings_text(report: &RunReport) -> String {
    let t = &report.timings;
    let mut s = String::new();
    let _ = writeln!(s, "precondition-s {}", t.precondition);
    let _ = writeln!(s, "mapping-s {}", t.mapping);
    let _ = writeln!(s, "superpose-s {}", t.superpose);
    let _ = writeln!(s, "remap-s {}", t.remap);
    let _ = writeln!(s, "solid-s {}", t.solid);
    let _ = writeln!(s, "far-field-s {}", t.far_field);
    let _ = writeln!(s, "liquid-step-per-macro-s {}", if report.n_macro_steps > 0 {
        t.liquid_step_total() / report.n_macro_steps as f64
    } else {
        0.0
    });
    s
}

fn kinetics_plot(record: &KineticsRecord) -> (ChartSpec, Vec<Series>) {
    let spec = ChartSpec {
        title: "Absorption kinetics".into(),
        x_label: "t [s]".into(),
        y_label: "normalized concentration".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Linear,
    };
    let qs: Vec<(f64, f64)> = record
        .samples
        .iter()
        .map(|s| (s.t, s.q_solid / record.q_solid_capacity))
        .collect();
    let ql: Vec<(f64, f64)> = record
        .samples
        .iter()
        .map(|s| (s.t, s.q_liquid_near / record.q_liquid_initial))
        .collect();
    (spec, vec![Series::new("Q_S / Q_S_e", qs), Series::new("Q_L / Q_L_0", ql)])
}

/// Writes one run's directory: `kinetics.csv`, `report.txt`,
/// `timings.txt`, `plots/kinetics.svg`.
pub fn write_run_outputs(dir: &Path, record: &KineticsRecord, report: &RunReport) -> Result<()> {
    create_dir(dir)?;
    create_dir(&dir.join("plots"))?;
    write_kinetics_csv(&dir.join("kinetics.csv"), record)?;
    write_text(&dir.join("report.txt"), &report_text(record, report))?;
    write_text(&dir.join("timings.txt"), &timings_text(report))?;
    let (spec, series) = kinetics_plot(record);
    write_svg(&dir.join("plots").join("kinetics.svg"), &spec, &series)?;
    Ok(())
}

/// Error series CSV for the precision comparison: one row per sample,
/// absolute and relative deviation per reduced mode.
pub fn error_csv(outcomes: &[PrecisionOutcome]) -> String {
    let mut header = String::from("t");
    for outcome in outcomes.iter().skip(1) {
        let tag = outcome.mode.tag();
        let _ = write!(header, ",AE_{tag},RE_{tag}");
    }
    let mut s = header;
    s.push('\n');
    let n = outcomes[0].record.samples.len();
    for i in 0..n {
        let t = outcomes[0].record.samples[i].t;
        let mut row = format!("{t}");
        for outcome in outcomes.iter().skip(1) {
            let e = &outcome.report.error_series.as_ref().expect("error series")[i];
            let _ = write!(row, ",{},{}", e.abs_error, e.rel_error);
        }
        s.push_str(&row);
        s.push('\n');
    }
    s
}

/// Writes the four-mode comparison: one subdirectory per mode plus the
/// combined error CSV and plots.
pub fn write_compare_outputs(dir: &Path, outcomes: &[PrecisionOutcome]) -> Result<()> {
    create_dir(dir)?;
    create_dir(&dir.join("plots"))?;
    for outcome in outcomes {
        write_run_outputs(&dir.join(outcome.mode.tag()), &outcome.record, &outcome.report)?;
    }
    write_text(&dir.join("re.csv"), &error_csv(outcomes))?;

    let re_spec = ChartSpec {
        title: "Relative error of normalized solid concentration vs full precision".into(),
        x_label: "t [s]".into(),
        y_label: "RE".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Log,
    };
    let re_series: Vec<Series> = outcomes
        .iter()
        .skip(1)
        .map(|o| {
            let pts = o
                .report
                .error_series
                .as_ref()
                .expect("error series")
                .iter()
                .map(|e| (e.t, e.rel_error))
                .collect();
            Series::new(o.mode.tag(), pts)
        })
        .collect();
    write_svg(&dir.join("plots").join("re.svg"), &re_spec, &re_series)?;

    let kin_spec = ChartSpec {
        title: "Normalized solid uptake per precision mode".into(),
        x_label: "t [s]".into(),
        y_label: "mean solid concentration / equilibrium".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Linear,
    };
    let kin_series: Vec<Series> = outcomes
        .iter()
        .map(|o| {
            let xs: Vec<f64> = o.record.samples.iter().map(|s| s.t).collect();
            let pts = xs.into_iter().zip(o.record.normalized_solid()).collect();
            Series::new(o.mode.tag(), pts)
        })
        .collect();
    write_svg(&dir.join("plots").join("kinetics.svg"), &kin_spec, &kin_series)?;

    // Summary of the comparison, deterministic.
    let mut summary = String::new();
    for o in outcomes.iter().skip(1) {
        let series = o.report.error_series.as_ref().expect("error series");
        let _ = writeln!(
            summary,
            "{} max-ae {:e} max-re {:e} final-quarter-mean-re {:e}",
            o.mode.tag(),
            o.report.max_abs_error().unwrap_or(0.0),
            o.report.max_rel_error().unwrap_or(0.0),
            final_quarter_mean(series),
        );
    }
    write_text(&dir.join("summary.txt"), &summary)?;
    Ok(())
}

/// Scaling table CSV: geometry sizes, timings and the flop model.
pub fn scaling_csv(table: &ScalingTable) -> String {
    let mut s = String::from(
        "r_p,nx,N,N_L,N_S,precondition_s,step_s,mapping_s,superpose_s,remap_s,fd_interval_s,flops_per_step\n",
    );
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.r_p,
            r.nx,
            r.n_groups,
            r.n_liquid,
            r.n_solid,
            r.precondition_s,
            r.step_s,
            r.mapping_s,
            r.superpose_s,
            r.remap_s,
            r.fd_interval_s,
            r.flops_per_step
        );
    }
    s
}

/// Writes the scaling study: `scaling.csv`, `report.txt`,
/// `plots/scaling.svg`.
pub fn write_bench_outputs(dir: &Path, table: &ScalingTable) -> Result<()> {
    create_dir(dir)?;
    create_dir(&dir.join("plots"))?;
    write_text(&dir.join("scaling.csv"), &scaling_csv(table))?;

    let mut report = String::new();
    let _ = writeln!(report, "precision {}", table.mode.tag());
    let _ = writeln!(report, "sizes {}", table.rows.len());
    let _ = writeln!(report, "loglog-slope-step-vs-liquid-nodes {:.4}", table.slope);
    for r in &table.rows {
        let _ = writeln!(
            report,
            "r_p {} N {} N_L {} flops {} step_s {:e} fd_interval_s {:e} speedup {:.1}",
            r.r_p,
            r.n_groups,
            r.n_liquid,
            r.flops_per_step,
            r.step_s,
            r.fd_interval_s,
            r.fd_interval_s / r.step_s.max(1.0e-12)
        );
    }
    write_text(&dir.join("report.txt"), &report)?;

    let spec = ChartSpec {
        title: format!("Per-step time vs liquid nodes (slope {:.2})", table.slope),
        x_label: "N_L".into(),
        y_label: "seconds per macro step".into(),
        x_scale: Scale::Log,
        y_scale: Scale::Log,
    };
    let measured: Vec<(f64, f64)> =
        table.rows.iter().map(|r| (r.n_liquid as f64, r.step_s)).collect();
    let fd: Vec<(f64, f64)> =
        table.rows.iter().map(|r| (r.n_liquid as f64, r.fd_interval_s)).collect();
    write_svg(
        &dir.join("plots").join("scaling.svg"),
        &spec,
        &[Series::new("superposition solver", measured), Series::new("explicit solver", fd)],
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd_solver::{KineticsSample, StepEvents};
    use crate::driver::{PhaseTimings, SolverKind};
    use crate::precision::PrecisionMode;

    fn tiny_record() -> KineticsRecord {
        KineticsRecord {
            samples: vec![
                KineticsSample { t: 0.0, q_solid: 0.0, q_liquid_near: 2.0, c_far: 1.0, q_total: 3.0 },
                KineticsSample { t: 1.0, q_solid: 1.0, q_liquid_near: 1.0, c_far: 1.0, q_total: 3.0 },
            ],
            q_solid_capacity: 2.0,
            q_liquid_initial: 2.0,
            total_mass_0: 3.0,
            n_solid: 2,
            c_s_eq: 1.0,
        }
    }

    fn tiny_report() -> RunReport {
        RunReport {
            solver: SolverKind::Fdirw,
            mode: PrecisionMode::Full,
            n_macro_steps: 1,
            n_groups: 3,
            n_liquid: 10,
            n_solid: 2,
            timings: PhaseTimings::default(),
            flops_per_step: 32,
            events: StepEvents::default(),
            max_conservation_residual: 0.0,
            max_precorrection_residual: 0.0,
            boundary_feedback: 0.1,
            error_series: None,
        }
    }

    #[test]
    fn run_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        write_run_outputs(&out, &tiny_record(), &tiny_report()).unwrap();
        assert!(out.join("kinetics.csv").exists());
        assert!(out.join("report.txt").exists());
        assert!(out.join("timings.txt").exists());
        assert!(out.join("plots/kinetics.svg").exists());
        let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report.contains("flops-per-step 32"));
        assert!(report.contains("kinetics-columns t,Q_S"));
    }

    #[test]
    fn report_text_is_deterministic() {
        let a = report_text(&tiny_record(), &tiny_report());
        let b = report_text(&tiny_record(), &tiny_report());
        assert_eq!(a, b);
        assert!(!a.contains("-s ")); // no wall-clock lines
    }
}
