use fdirw::coarse_mesh::coarsen;
use fdirw::driver::*;
use fdirw::fd_solver::StencilTables;
use fdirw::geometry::*;
use fdirw::physics::apply_far_field;
use fdirw::precision::PrecisionMode;
use fdirw::transfer::{precondition, SourceMode};

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let (k, cseq, ds, dtm, nsteps): (f64, f64, f64, f64, f64) = (
        a[1].parse().unwrap(), a[2].parse().unwrap(), a[3].parse().unwrap(),
        a[4].parse().unwrap(), a[5].parse().unwrap(),
    );
    let spec = GridSpec::new(48, 48, 48, 1.0e-8).unwrap();
    let part = ParticleSpec { r_p: 12.0, n_pores: 70, pore_radius_range: (2.0, 4.0), rng_seed: 7 };
    let (mut grid, _) = generate_particle(spec, part).unwrap();
    partition_shell(&mut grid).unwrap();
    let tables = StencilTables::new(&grid);
    let mut params = desk_params(tables.n_solid(), tables.n_near());
    params.k = k;
    params.c_s_eq = cseq;
    params.d_s = ds;
    params.dt_macro = dtm;
    params.total_mass_0 = params.c_l_0 * (tables.n_near() as f64 + params.n_far_equiv())
        + params.c_s_0 * tables.n_solid() as f64;
    apply_far_field(&mut grid, &params);
    let cmap = coarsen(&grid, &tables).unwrap();
    let m = precondition(&grid, &tables, &cmap, &params, PrecisionMode::Full, SourceMode::Group).unwrap();
    let t_end = nsteps * dtm;

    let (_, ka, ra) = run_integrated(&grid, &tables, &cmap, &m, &params, PrecisionMode::Full, t_end, 1).unwrap();
    let (_, kb, _) = run_baseline(&grid, &tables, &params, t_end, 1).unwrap();
    let cap = ka.q_solid_capacity;
    let gap = ka.samples.iter().zip(&kb.samples)
        .map(|(x, y)| (x.q_solid - y.q_solid).abs() / cap)
        .fold(0.0f64, f64::max);
    let fill = ka.samples.last().unwrap().q_solid / cap;

    let outcomes = compare_precision(&grid, &tables, &cmap, &m, &params, t_end, 1).unwrap();
    let full_liq: Vec<f64> = outcomes[0].record.samples.iter().map(|s| s.q_liquid_near).collect();
    print!("k={k:e} cseq={cseq} ds={ds:e} dtm={dtm:e} n={nsteps}: gap={gap:.4} fill={fill:.2} clampsF={}", ra.events.clamped_transfers);
    for o in outcomes.iter().skip(1) {
        let re = o.report.max_rel_error().unwrap();
        let liq_err = o.record.samples.iter().zip(&full_liq)
            .map(|(s, &f)| ((s.q_liquid_near - f) / f).abs())
            .fold(0.0f64, f64::max);
        let series = o.report.error_series.as_ref().unwrap();
        let last_re = series.last().unwrap().rel_error;
        print!(" | {}: RE={re:.2e} REend={last_re:.2e} dQl={liq_err:.2e}", o.mode.tag());
    }
    println!();
}
