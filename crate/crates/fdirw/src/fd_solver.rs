//! Explicit finite-difference time stepping.
//!
//! Three kernels: pure liquid diffusion over the near-field shell (the
//! baseline fast solver and the preconditioning engine), solid diffusion
//! with interface exchange, and the combined substep loop used as the
//! reference solver.
//!
//! All kernels are Jacobi-style: every flux is evaluated on the pre-step
//! field and applied afterwards, with a fixed per-voxel face order, so the
//! results are bit-identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Phase, PhaseGrid};
use crate::physics::{
    self, interface_stability_limit, stability_limit, PhysParams, PhaseKind,
};
use crate::util::{det_sum_indexed, PAR_THRESHOLD};

/// Packed neighbor reference: two kind bits plus a 30-bit payload.
const KIND_SHIFT: u32 = 30;
const KIND_CELL: u32 = 0; // payload = linear voxel index into the field
const KIND_FAR: u32 = 1; // far-field ghost (Dirichlet value c_far)
const KIND_NONE: u32 = 2; // no-flux face
const KIND_NEAR_SLOT: u32 = 3; // payload = position in the near-voxel list

#[inline]
fn pack(kind: u32, payload: u32) -> u32 {
    (kind << KIND_SHIFT) | payload
}

#[inline]
fn kind(code: u32) -> u32 {
    code >> KIND_SHIFT
}

#[inline]
fn payload(code: u32) -> u32 {
    code & ((1 << KIND_SHIFT) - 1)
}

/// Precomputed voxel lists and face tables for one geometry.
pub struct StencilTables {
    /// Linear indices of near-field liquid voxels, ascending.
    pub near: Vec<u32>,
    /// Linear indices of solid voxels, ascending.
    pub solid: Vec<u32>,
    /// Six packed face codes per near voxel: liquid cell, far ghost, or
    /// no-flux (solid) in -x +x -y +y -z +z order.
    near_faces: Vec<[u32; 6]>,
    /// Six packed face codes per solid voxel: solid cell, near slot
    /// (interface), or no-flux.
    solid_faces: Vec<[u32; 6]>,
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
}

impl StencilTables {
    pub fn new(grid: &PhaseGrid) -> StencilTables {
        let spec = grid.spec;
        let mut near = Vec::new();
        let mut solid = Vec::new();
        let mut near_slot = vec![u32::MAX; spec.len()];
        for (idx, &l) in grid.labels.iter().enumerate() {
            match l {
                Phase::LiquidNear => {
                    near_slot[idx] = near.len() as u32;
                    near.push(idx as u32);
                }
                Phase::Solid => solid.push(idx as u32),
                Phase::Far => {}
            }
        }

        let face_code = |x: i64, y: i64, z: i64, for_solid: bool| -> u32 {
            if x < 0 || y < 0 || z < 0 || x >= spec.nx as i64 || y >= spec.ny as i64 || z >= spec.nz as i64 {
                // Outside the grid lies the reservoir: a far ghost for the
                // liquid, a no-flux wall for the solid.
                return if for_solid { pack(KIND_NONE, 0) } else { pack(KIND_FAR, 0) };
            }
            let idx = spec.index(x as u32, y as u32, z as u32);
            match (grid.labels[idx], for_solid) {
                (Phase::LiquidNear, false) => pack(KIND_CELL, idx as u32),
                (Phase::Far, false) => pack(KIND_FAR, 0),
                (Phase::Solid, false) => pack(KIND_NONE, 0),
                (Phase::Solid, true) => pack(KIND_CELL, idx as u32),
                (Phase::LiquidNear, true) => pack(KIND_NEAR_SLOT, near_slot[idx]),
                (Phase::Far, true) => pack(KIND_NONE, 0),
            }
        };

        let faces_of = |vi: u32, for_solid: bool| -> [u32; 6] {
            let (x, y, z) = spec.coords(vi as usize);
            let (x, y, z) = (x as i64, y as i64, z as i64);
            [
                face_code(x - 1, y, z, for_solid),
                face_code(x + 1, y, z, for_solid),
                face_code(x, y - 1, z, for_solid),
                face_code(x, y + 1, z, for_solid),
                face_code(x, y, z - 1, for_solid),
                face_code(x, y, z + 1, for_solid),
            ]
        };

        let near_faces = near.iter().map(|&vi| faces_of(vi, false)).collect();
        let solid_faces = solid.iter().map(|&vi| faces_of(vi, true)).collect();
        StencilTables { near, solid, near_faces, solid_faces, nx: spec.nx, ny: spec.ny, nz: spec.nz }
    }

    pub fn n_near(&self) -> usize {
        self.near.len()
    }

    pub fn n_solid(&self) -> usize {
        self.solid.len()
    }
}

/// Concentration state: the full-grid field (far-field entries unused)
/// plus the scalar reservoir concentration.
#[derive(Debug, Clone)]
pub struct FineState {
    pub c: Vec<f64>,
    pub c_far: f64,
    pub t: f64,
}

impl FineState {
    /// Initial state: liquid at `c_L_0`, solid at `c_S_0`, reservoir at
    /// `c_L_0`.
    pub fn init(grid: &PhaseGrid, params: &PhysParams) -> FineState {
        let c = grid
            .labels
            .iter()
            .map(|&l| match l {
                Phase::Solid => params.c_s_0,
                Phase::LiquidNear => params.c_l_0,
                Phase::Far => 0.0,
            })
            .collect();
        FineState { c, c_far: params.c_l_0, t: 0.0 }
    }

    pub fn sum_near(&self, tables: &StencilTables) -> f64 {
        det_sum_indexed(&self.c, &tables.near)
    }

    pub fn sum_solid(&self, tables: &StencilTables) -> f64 {
        det_sum_indexed(&self.c, &tables.solid)
    }
}

/// One Jacobi step of liquid diffusion with no-flux solid walls and the
/// far-field ghost value on reservoir faces. `out` receives the updated
/// value per near voxel (aligned with `tables.near`); the field itself is
/// untouched.
pub fn liquid_step_into(
    c: &[f64],
    c_far: f64,
    tables: &StencilTables,
    lambda: f64,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), tables.near.len());
    let body = |slot: usize, out_v: &mut f64| {
        let c0 = c[tables.near[slot] as usize];
        let mut s = 0.0;
        for &code in &tables.near_faces[slot] {
            match kind(code) {
                KIND_CELL => s += c[payload(code) as usize] - c0,
                KIND_FAR => s += c_far - c0,
                _ => {}
            }
        }
        *out_v = c0 + lambda * s;
    };
    if tables.near.len() < PAR_THRESHOLD {
        for (slot, out_v) in out.iter_mut().enumerate() {
            body(slot, out_v);
        }
    } else {
        out.par_iter_mut().enumerate().for_each(|(slot, out_v)| body(slot, out_v));
    }
}

fn scatter_near(c: &mut [f64], tables: &StencilTables, values: &[f64]) {
    // Plain copy; negligible next to the stencil work.
    for (slot, &vi) in tables.near.iter().enumerate() {
        c[vi as usize] = values[slot];
    }
}

/// Explicit liquid-diffusion step over `dt`. Rejects steps above the
/// stability limit. The far-field scalar is not modified.
pub fn fd_step_liquid(
    state: &mut FineState,
    tables: &StencilTables,
    params: &PhysParams,
    dt: f64,
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let limit = stability_limit(params, PhaseKind::Liquid);
    if dt > limit {
        return Err(Error::Stability { phase: "liquid", dt, limit });
    }
    let lambda = params.eff_diffusivity(PhaseKind::Liquid) * dt / (params.dh * params.dh);
    scratch.resize(tables.near.len(), 0.0);
    liquid_step_into(&state.c, state.c_far, tables, lambda, scratch);
    scatter_near(&mut state.c, tables, scratch);
    Ok(())
}

/// Per-face interface transfer over `dt`, evaluated on pre-step values:
/// harmonic-mean chemical-potential flux plus the absorption reaction.
/// Positive values move mass from the liquid voxel into the solid voxel.
#[inline]
fn interface_transfer(c_l: f64, c_s: f64, params: &PhysParams, dt: f64) -> f64 {
    let coeff = physics::interface_diffusivity(params) * dt / (params.dh * params.dh);
    let mu_l = physics::chem_potential(c_l, PhaseKind::Liquid, params);
    let mu_s = physics::chem_potential(c_s, PhaseKind::Solid, params);
    let (r_s, _) = physics::reaction_rate(c_l, c_s, params);
    coeff * (mu_l - mu_s) + r_s * dt
}

/// Event counters accumulated by the interface step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepEvents {
    /// Liquid voxels whose outgoing transfer was scaled down to the mass
    /// they actually held.
    pub clamped_transfers: u64,
    /// Non-finite values observed after a superposition step.
    pub non_finite: u64,
    /// Negative far-field concentrations (model breakdown).
    pub negative_far_field: u64,
}

impl StepEvents {
    pub fn merge(&mut self, other: StepEvents) {
        self.clamped_transfers += other.clamped_transfers;
        self.non_finite += other.non_finite;
        self.negative_far_field += other.negative_far_field;
    }
}

/// One step of solid diffusion plus interface exchange over `dt`.
///
/// Three sub-updates, all evaluated on the pre-step field and applied in
/// a fixed order: solid-solid diffusion, chemical-potential interface
/// flux, and the absorption reaction. Interface transfers are applied as
/// identical per-face quantities on both sides, so mass leaves the liquid
/// exactly where it enters the solid. When a liquid voxel's combined
/// outgoing transfer exceeds its content, all its face transfers are
/// scaled so the voxel lands at zero; each such clamp is counted.
pub fn fd_step_solid_interface(
    state: &mut FineState,
    tables: &StencilTables,
    params: &PhysParams,
    dt: f64,
) -> Result<StepEvents> {
    let solid_limit = stability_limit(params, PhaseKind::Solid);
    let iface_limit = interface_stability_limit(params);
    let limit = solid_limit.min(iface_limit);
    if dt > limit {
        let phase = if solid_limit < iface_limit { "solid" } else { "interface" };
        return Err(Error::Stability { phase, dt, limit });
    }

    let lambda_s = params.eff_diffusivity(PhaseKind::Solid) * dt / (params.dh * params.dh);
    let c = &state.c;

    // Pass 1: per-liquid-voxel clamp factors. The liquid face table keeps
    // solid neighbors as no-flux, so interface pairs are enumerated from
    // the solid side; per-liquid totals accumulate in solid-list order.
    let n_near = tables.near.len();
    let n_solid = tables.solid.len();
    let mut out_total = vec![0.0f64; n_near];
    // Sequential accumulation keeps a fixed order per liquid voxel (solid
    // list order); the loop is cheap relative to the face math.
    for (s_slot, &si) in tables.solid.iter().enumerate() {
        let c_s = c[si as usize];
        for &code in &tables.solid_faces[s_slot] {
            if kind(code) == KIND_NEAR_SLOT {
                let l_slot = payload(code) as usize;
                let c_l = c[tables.near[l_slot] as usize];
                out_total[l_slot] += interface_transfer(c_l, c_s, params, dt);
            }
        }
    }
    let mut events = StepEvents::default();
    let scale: Vec<f64> = (0..n_near)
        .map(|slot| {
            let c_l = c[tables.near[slot] as usize];
            let out = out_total[slot];
            if out > 0.0 && out > c_l {
                events.clamped_transfers += 1;
                c_l / out
            } else {
                1.0
            }
        })
        .collect();

    // Pass 2: new solid values (diffusion plus scaled interface gains).
    let new_solid: Vec<f64> = {
        let body = |s_slot: usize| -> f64 {
            let c_s = c[tables.solid[s_slot] as usize];
            let mut diff = 0.0;
            let mut gain = 0.0;
            for &code in &tables.solid_faces[s_slot] {
                match kind(code) {
                    KIND_CELL => diff += c[payload(code) as usize] - c_s,
                    KIND_NEAR_SLOT => {
                        let l_slot = payload(code) as usize;
                        let c_l = c[tables.near[l_slot] as usize];
                        gain += scale[l_slot] * interface_transfer(c_l, c_s, params, dt);
                    }
                    _ => {}
                }
            }
            c_s + (lambda_s * diff + gain)
        };
        if n_solid < PAR_THRESHOLD {
            (0..n_solid).map(body).collect()
        } else {
            (0..n_solid).into_par_iter().map(body).collect()
        }
    };

    // Pass 3: new liquid values (scaled interface losses). Face transfers
    // are recomputed with the identical expression, so each per-face
    // quantity matches the solid side bit for bit. Losses accumulate in
    // solid-list order per liquid voxel, mirroring pass 1.
    let mut loss = vec![0.0f64; n_near];
    for (s_slot, &si) in tables.solid.iter().enumerate() {
        let c_s = c[si as usize];
        for &code in &tables.solid_faces[s_slot] {
            if kind(code) == KIND_NEAR_SLOT {
                let l_slot = payload(code) as usize;
                let c_l = c[tables.near[l_slot] as usize];
                loss[l_slot] += scale[l_slot] * interface_transfer(c_l, c_s, params, dt);
            }
        }
    }

    for (s_slot, &si) in tables.solid.iter().enumerate() {
        state.c[si as usize] = new_solid[s_slot];
    }
    for (l_slot, &vi) in tables.near.iter().enumerate() {
        state.c[vi as usize] -= loss[l_slot];
    }
    Ok(events)
}

/// Advances solid diffusion and interface exchange over a full macro
/// interval, substepping at half the stability limit.
pub fn advance_solid_interface(
    state: &mut FineState,
    tables: &StencilTables,
    params: &PhysParams,
    dt_total: f64,
) -> Result<StepEvents> {
    let limit = stability_limit(params, PhaseKind::Solid).min(interface_stability_limit(params));
    let n_sub = if limit.is_infinite() { 1 } else { (dt_total / (0.5 * limit)).ceil().max(1.0) as u64 };
    let dt = dt_total / n_sub as f64;
    let mut events = StepEvents::default();
    for _ in 0..n_sub {
        events.merge(fd_step_solid_interface(state, tables, params, dt)?);
    }
    Ok(events)
}

/// Number of substeps the interface advance will take for one macro step.
pub fn solid_substeps(params: &PhysParams) -> u64 {
    let limit = stability_limit(params, PhaseKind::Solid).min(interface_stability_limit(params));
    if limit.is_infinite() {
        1
    } else {
        (params.dt_macro / (0.5 * limit)).ceil().max(1.0) as u64
    }
}

/// One kinetics sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticsSample {
    pub t: f64,
    pub q_solid: f64,
    pub q_liquid_near: f64,
    pub c_far: f64,
    pub q_total: f64,
}

/// Kinetics time series plus the normalization constants.
#[derive(Debug, Clone)]
pub struct KineticsRecord {
    pub samples: Vec<KineticsSample>,
    /// Solid capacity `c_S_eq * N_S`.
    pub q_solid_capacity: f64,
    /// Initial near-field liquid mass `c_L_0 * N_L`.
    pub q_liquid_initial: f64,
    pub total_mass_0: f64,
    pub n_solid: usize,
    pub c_s_eq: f64,
}

impl KineticsRecord {
    pub fn new(tables: &StencilTables, params: &PhysParams) -> KineticsRecord {
        KineticsRecord {
            samples: Vec::new(),
            q_solid_capacity: params.c_s_eq * tables.n_solid() as f64,
            q_liquid_initial: params.c_l_0 * tables.n_near() as f64,
            total_mass_0: params.total_mass_0,
            n_solid: tables.n_solid(),
            c_s_eq: params.c_s_eq,
        }
    }

    /// Solid-average concentration normalized by the equilibrium value.
    pub fn normalized_solid(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.q_solid / (self.n_solid as f64 * self.c_s_eq)).collect()
    }

    pub fn max_conservation_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| ((s.q_total - self.total_mass_0) / self.total_mass_0).abs())
            .fold(0.0, f64::max)
    }
}

fn record_sample(
    record: &mut KineticsRecord,
    state: &FineState,
    tables: &StencilTables,
    sum_near: f64,
    sum_solid: f64,
    n_far_equiv: f64,
) {
    let _ = tables;
    record.samples.push(KineticsSample {
        t: state.t,
        q_solid: sum_solid,
        q_liquid_near: sum_near,
        c_far: state.c_far,
        q_total: sum_solid + sum_near + state.c_far * n_far_equiv,
    });
}

/// Reference solver: explicit substeps for everything.
///
/// Each substep applies liquid diffusion, the solid/interface step, and
/// the far-field conservation update, in that order. Kinetics are
/// recorded every `sample_stride` substeps (and at the final step). The
/// far field is initialized from the conservation constraint before the
/// first substep so every recorded sample satisfies it.
pub fn fd_run_baseline(
    mut state: FineState,
    grid: &PhaseGrid,
    tables: &StencilTables,
    params: &PhysParams,
    t_end: f64,
    sample_stride: u64,
) -> Result<(FineState, KineticsRecord, StepEvents)> {
    if t_end < state.t {
        return Err(Error::Invalid(format!("t_end = {t_end} is before the state time {}", state.t)));
    }
    let n_far = grid.n_far_equiv;
    if !(n_far > 0.0) {
        return Err(Error::Geometry("far-field reservoir volume not set on this grid".into()));
    }
    let t0 = state.t;
    let n_steps = ((t_end - t0) / params.dt_fd).round() as u64;
    let mut record = KineticsRecord::new(tables, params);
    let mut events = StepEvents::default();
    if n_steps == 0 {
        return Ok((state, record, events));
    }
    let stride = sample_stride.max(1);

    let mut scratch = Vec::new();
    let sum_n = state.sum_near(tables);
    let sum_s = state.sum_solid(tables);
    state.c_far = physics::far_field_update(params.total_mass_0, sum_n, sum_s, n_far);
    if state.c_far < 0.0 {
        events.negative_far_field += 1;
    }
    record_sample(&mut record, &state, tables, sum_n, sum_s, n_far);

    for step in 1..=n_steps {
        fd_step_liquid(&mut state, tables, params, params.dt_fd, &mut scratch)?;
        events.merge(fd_step_solid_interface(&mut state, tables, params, params.dt_fd)?);
        let sum_n = state.sum_near(tables);
        let sum_s = state.sum_solid(tables);
        state.c_far = physics::far_field_update(params.total_mass_0, sum_n, sum_s, n_far);
        if state.c_far < 0.0 {
            events.negative_far_field += 1;
        }
        state.t = t0 + step as f64 * params.dt_fd;
        if step % stride == 0 || step == n_steps {
            record_sample(&mut record, &state, tables, sum_n, sum_s, n_far);
        }
    }
    Ok((state, record, events))
}
