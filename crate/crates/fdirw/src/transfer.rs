//! Transfer-matrix preconditioning and superposition.
//!
//! Column `J` of the matrix is the coarse image of one macro step of
//! liquid diffusion applied to a unit concentration on group `J`'s voxels
//! (far field held at zero); the boundary column is the response to a
//! unit far-field value with a zero initial field. Columns are exact
//! images of coarse basis vectors under remap-evolve-map, so applying the
//! matrix to any group-wise-constant field reproduces the fine evolution
//! up to rounding, and each row plus its boundary entry sums to one
//! (a uniform field with a matching boundary value is stationary).

use rayon::prelude::*;

use crate::coarse_mesh::{map_fine_to_coarse, CoarseMap};
use crate::error::{Error, Result};
use crate::fd_solver::StencilTables;
use crate::geometry::PhaseGrid;
use crate::physics::{stability_limit, PhysParams, PhaseKind};
use crate::precision::{dot_with_boundary, PrecisionMode};

/// How a column's unit source is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    /// Unit concentration on every voxel of the group (the default; makes
    /// superposition exact for group-wise-constant fields).
    Group,
    /// Unit concentration on the group's first voxel only, kept as a
    /// sensitivity variant.
    Single,
}

impl SourceMode {
    pub fn tag(self) -> &'static str {
        match self {
            SourceMode::Group => "group",
            SourceMode::Single => "single",
        }
    }

    pub fn from_tag(tag: &str) -> Option<SourceMode> {
        match tag {
            "group" => Some(SourceMode::Group),
            "single" => Some(SourceMode::Single),
            _ => None,
        }
    }
}

/// Dense transfer matrix plus boundary column.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub n: usize,
    /// Row-major proportions, widened to binary64 from the storage format.
    pub p: Vec<f64>,
    pub p_bc: Vec<f64>,
    /// Macro step the matrix realizes [s].
    pub dt_encoded: f64,
    /// Number of explicit substeps each column was evolved for.
    pub n_pre: u64,
    /// Storage format the entries are rounded into.
    pub precision: PrecisionMode,
    pub coarse_factor: u32,
    pub source: SourceMode,
    pub geometry_hash: String,
    /// Row-sum identity residual of the full-precision construction,
    /// before storage rounding.
    pub construction_residual: f64,
}

impl TransferMatrix {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    /// `max_I |sum_J P_IJ + P_BC_I - 1|` over the stored entries.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let s: f64 = self.row(i).iter().sum::<f64>() + self.p_bc[i];
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.p.iter().chain(self.p_bc.iter()).cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.p.iter().chain(self.p_bc.iter()).cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fails unless the matrix was preconditioned for this grid and step.
    pub fn check_compatible(&self, grid: &PhaseGrid, params: &PhysParams, cmap: &CoarseMap) -> Result<()> {
        let actual = grid.hash();
        if self.geometry_hash != actual {
            return Err(Error::GeometryHashMismatch {
                expected: self.geometry_hash.clone(),
                actual,
            });
        }
        if self.dt_encoded != params.dt_macro {
            return Err(Error::DtMismatch { encoded: self.dt_encoded, requested: params.dt_macro });
        }
        if self.coarse_factor != cmap.factor || self.n != cmap.n_groups() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{} at coarse factor {} but the coarse map has {} groups at factor {}",
                self.n,
                self.n,
                self.coarse_factor,
                cmap.n_groups(),
                cmap.factor
            )));
        }
        Ok(())
    }
}

/// Evolves one unit-source column over `n_pre` substeps and maps it to
/// the coarse mesh.
fn evolve_column(
    source: &[u32],
    c_far: f64,
    tables: &StencilTables,
    cmap: &CoarseMap,
    lambda: f64,
    n_pre: u64,
) -> Vec<f64> {
    let n_cells = (tables.nx * tables.ny * tables.nz) as usize;
    let mut field = vec![0.0f64; n_cells];
    for &vi in source {
        field[vi as usize] = 1.0;
    }
    let mut scratch = vec![0.0f64; tables.near.len()];
    for _ in 0..n_pre {
        crate::fd_solver::liquid_step_into(&field, c_far, tables, lambda, &mut scratch);
        for (slot, &vi) in tables.near.iter().enumerate() {
            field[vi as usize] = scratch[slot];
        }
    }
    map_fine_to_coarse(&field, cmap, PrecisionMode::Full)
}

/// Builds the transfer matrix for one macro step by per-group point-source
/// evolution. Columns are computed in full precision (in parallel; each
/// column is an independent run) and rounded into the requested storage
/// format afterwards.
pub fn precondition(
    grid: &PhaseGrid,
    tables: &StencilTables,
    cmap: &CoarseMap,
    params: &PhysParams,
    storage: PrecisionMode,
    source: SourceMode,
) -> Result<TransferMatrix> {
    let limit = stability_limit(params, PhaseKind::Liquid);
    if params.dt_fd > limit {
        return Err(Error::Stability { phase: "liquid", dt: params.dt_fd, limit });
    }
    let n_pre = params.substeps_per_macro()?;
    let lambda = params.eff_diffusivity(PhaseKind::Liquid) * params.dt_fd / (params.dh * params.dh);
    let n = cmap.n_groups();

    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let members = &cmap.group_members[j];
            let source_voxels: &[u32] = match source {
                SourceMode::Group => members,
                SourceMode::Single => &members[..1],
            };
            evolve_column(source_voxels, 0.0, tables, cmap, lambda, n_pre)
        })
        .collect();
    let bc_column = evolve_column(&[], 1.0, tables, cmap, lambda, n_pre);

    // Full-precision row-sum identity, checked before storage rounding.
    let mut construction_residual = 0.0f64;
    if source == SourceMode::Group {
        for i in 0..n {
            let mut s = 0.0;
            for col in &columns {
                s += col[i];
            }
            s += bc_column[i];
            construction_residual = construction_residual.max((s - 1.0).abs());
        }
    } else {
        construction_residual = f64::NAN; // identity only holds for group sources
    }

    let mut p = vec![0.0f64; n * n];
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            p[i * n + j] = storage.round_storage(col[i]);
        }
    }
    let p_bc: Vec<f64> = bc_column.iter().map(|&v| storage.round_storage(v)).collect();

    Ok(TransferMatrix {
        n,
        p,
        p_bc,
        dt_encoded: params.dt_macro,
        n_pre,
        precision: storage,
        coarse_factor: cmap.factor,
        source,
        geometry_hash: grid.hash(),
        construction_residual,
    })
}

/// One superposition step: `C' = P C + P_BC c_far` under the arithmetic
/// contract of `mode`. Rows are independent; each row accumulates
/// sequentially in ascending column order, so the result is bit-identical
/// for any worker count.
pub fn superpose(
    matrix: &TransferMatrix,
    coarse: &[f64],
    c_far: f64,
    mode: PrecisionMode,
) -> Result<Vec<f64>> {
    if coarse.len() != matrix.n {
        return Err(Error::Dimension(format!(
            "coarse field has {} entries but the matrix is {}x{}",
            coarse.len(),
            matrix.n,
            matrix.n
        )));
    }
    let dot = |i: usize| dot_with_boundary(matrix.row(i), coarse, matrix.p_bc[i], c_far, mode);
    let out = if matrix.n < 512 {
        (0..matrix.n).map(dot).collect()
    } else {
        (0..matrix.n).into_par_iter().map(dot).collect()
    };
    Ok(out)
}

/// Log10-magnitude histogram of matrix entries: twelve decade bins
/// covering [1e-12, 1), with values at or above one clamped into the top
/// decade, nonzero values below 1e-12 clamped into the bottom one, and
/// zeros counted separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementHistogram {
    pub zeros: u64,
    /// `decades[k]` counts magnitudes in `[10^(k-12), 10^(k-11))`.
    pub decades: [u64; 12],
}

impl ElementHistogram {
    pub fn of(values: &[f64]) -> ElementHistogram {
        let mut zeros = 0u64;
        let mut decades = [0u64; 12];
        for &v in values {
            let m = v.abs();
            if m == 0.0 {
                zeros += 1;
                continue;
            }
            let d = m.log10().floor() as i32;
            let bin = (d + 12).clamp(0, 11) as usize;
            decades[bin] += 1;
        }
        ElementHistogram { zeros, decades }
    }

    pub fn occupied_decades(&self) -> usize {
        self.decades.iter().filter(|&&c| c > 0).count()
    }

    pub fn total(&self) -> u64 {
        self.zeros + self.decades.iter().sum::<u64>()
    }
}

/// Histograms for the proportion matrix and its boundary column.
pub fn element_histogram(matrix: &TransferMatrix) -> (ElementHistogram, ElementHistogram) {
    (ElementHistogram::of(&matrix.p), ElementHistogram::of(&matrix.p_bc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse_mesh::{coarsen, coarsen_with_factor, remap_coarse_to_fine};
    use crate::fd_solver::liquid_step_into;
    use crate::geometry::{generate_particle, partition_shell, GridSpec, ParticleSpec, Phase, PhaseGrid};
    use crate::physics::reference_params;

    /// 4^3 liquid cube sealed in solid inside one coarse block.
    fn sealed_single_group() -> (PhaseGrid, StencilTables, CoarseMap) {
        let spec = GridSpec::new(8, 8, 8, 1.0e-8).unwrap();
        let mut labels = vec![Phase::Far; spec.len()];
        for z in 0..6 {
            for y in 0..6 {
                for x in 0..6 {
                    let inside = (1..5).contains(&x) && (1..5).contains(&y) && (1..5).contains(&z);
                    labels[spec.index(x, y, z)] = if inside { Phase::LiquidNear } else { Phase::Solid };
                }
            }
        }
        let grid = PhaseGrid::from_labels(spec, labels, [2.5; 3], 0.0, 0).unwrap();
        let tables = StencilTables::new(&grid);
        let cmap = coarsen(&grid, &tables).unwrap();
        assert_eq!(cmap.n_groups(), 1);
        (grid, tables, cmap)
    }

    fn shell_setup() -> (PhaseGrid, StencilTables, CoarseMap, crate::physics::PhysParams) {
        let spec = GridSpec::new(20, 20, 20, 1.0e-8).unwrap();
        let part = ParticleSpec { r_p: 4.0, n_pores: 4, pore_radius_range: (1.0, 2.0), rng_seed: 3 };
        let (mut grid, _) = generate_particle(spec, part).unwrap();
        partition_shell(&mut grid).unwrap();
        let tables = StencilTables::new(&grid);
        let cmap = coarsen(&grid, &tables).unwrap();
        let mut p = reference_params();
        // Shorter macro step keeps the unit tests quick; the physics is
        // unchanged.
        p.dt_macro = 5.0e-5;
        (grid, tables, cmap, p)
    }

    #[test]
    fn sealed_domain_is_the_identity() {
        let (grid, tables, cmap) = sealed_single_group();
        let p = reference_params();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();
        assert_eq!(m.n, 1);
        assert_eq!(m.p, vec![1.0]);
        assert_eq!(m.p_bc, vec![0.0]);
        assert_eq!(m.construction_residual, 0.0);
    }

    #[test]
    fn row_sums_with_boundary_are_one() {
        let (grid, tables, cmap, p) = shell_setup();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();
        assert!(m.construction_residual <= 1.0e-9, "residual {:e}", m.construction_residual);
        assert!(m.row_sum_residual() <= 1.0e-9);
        assert!(m.min_entry() >= -1.0e-12);
        assert!(m.max_entry() <= 1.0 + 1.0e-12);
    }

    #[test]
    fn superpose_identity_matrix_is_identity() {
        let n = 4;
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        let m = TransferMatrix {
            n,
            p,
            p_bc: vec![0.0; n],
            dt_encoded: 1.0,
            n_pre: 1,
            precision: PrecisionMode::Full,
            coarse_factor: 5,
            source: SourceMode::Group,
            geometry_hash: String::new(),
            construction_residual: 0.0,
        };
        let c = vec![0.1, 0.2, 0.3, 0.4];
        for mode in PrecisionMode::ALL {
            let out = superpose(&m, &c, 0.7, mode).unwrap();
            for (a, b) in out.iter().zip(&c) {
                assert!((a - b).abs() < 1.0e-3, "{a} vs {b} in {mode:?}");
            }
        }
        let full = superpose(&m, &c, 0.7, PrecisionMode::Full).unwrap();
        assert_eq!(full, c);
        assert!(superpose(&m, &c[..2], 0.0, PrecisionMode::Full).is_err());
    }

    #[test]
    fn uniform_state_is_stationary_under_superposition() {
        let (grid, tables, cmap, p) = shell_setup();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();
        let kappa = 0.734;
        let c = vec![kappa; m.n];
        let out = superpose(&m, &c, kappa, PrecisionMode::Full).unwrap();
        for &v in &out {
            assert!((v - kappa).abs() <= 1.0e-9 * kappa, "drift {:e}", v - kappa);
        }
    }

    #[test]
    fn superposition_matches_mapped_fine_evolution() {
        use rand::{Rng, SeedableRng};
        let (grid, tables, cmap, p) = shell_setup();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let lambda = p.eff_diffusivity(PhaseKind::Liquid) * p.dt_fd / (p.dh * p.dh);
        for _ in 0..3 {
            let coarse0: Vec<f64> = (0..m.n).map(|_| rng.gen_range(0.5..1.5)).collect();
            let c_far: f64 = rng.gen_range(0.5..1.5);
            // Fine route: remap, evolve by explicit substeps, map back.
            let mut field = vec![0.0; grid.spec.len()];
            remap_coarse_to_fine(&coarse0, &cmap, &mut field);
            let mut scratch = vec![0.0; tables.near.len()];
            for _ in 0..m.n_pre {
                liquid_step_into(&field, c_far, &tables, lambda, &mut scratch);
                for (slot, &vi) in tables.near.iter().enumerate() {
                    field[vi as usize] = scratch[slot];
                }
            }
            let mapped = crate::coarse_mesh::map_fine_to_coarse(&field, &cmap, PrecisionMode::Full);
            // Coarse route: one superposition step.
            let sup = superpose(&m, &coarse0, c_far, PrecisionMode::Full).unwrap();
            for (a, b) in sup.iter().zip(&mapped) {
                assert!(((a - b) / b).abs() <= 1.0e-9, "superpose {a} vs fine {b}");
            }
        }
    }

    #[test]
    fn mirror_symmetric_geometry_commutes_with_reflection() {
        // Hand-built sphere centered at 24.5 on a 50-voxel grid: the
        // x-reflection x -> 49 - x maps the domain onto itself and
        // permutes the 5-wide blocks.
        let spec = GridSpec::new(50, 50, 50, 1.0e-8).unwrap();
        let center = [24.5, 24.5, 24.5];
        let r_p = 8.0;
        let shell = r_p + 5.0;
        let mut labels = vec![Phase::Far; spec.len()];
        for z in 0..50u32 {
            for y in 0..50u32 {
                for x in 0..50u32 {
                    let d2 = (x as f64 - center[0]).powi(2)
                        + (y as f64 - center[1]).powi(2)
                        + (z as f64 - center[2]).powi(2);
                    let idx = spec.index(x, y, z);
                    if d2 <= r_p * r_p {
                        labels[idx] = Phase::Solid;
                    } else if d2 <= shell * shell {
                        labels[idx] = Phase::LiquidNear;
                    }
                }
            }
        }
        // Two mirror-image pores.
        for (px, py, pz) in [(19.5f64, 24.5f64, 24.5f64), (29.5, 24.5, 24.5)] {
            for z in 0..50u32 {
                for y in 0..50u32 {
                    for x in 0..50u32 {
                        let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2) + (z as f64 - pz).powi(2);
                        let idx = spec.index(x, y, z);
                        if d2 <= 9.0 && labels[idx] == Phase::Solid {
                            labels[idx] = Phase::LiquidNear;
                        }
                    }
                }
            }
        }
        let grid = PhaseGrid::from_labels(spec, labels, center, r_p, 0).unwrap();
        let tables = StencilTables::new(&grid);
        let cmap = coarsen(&grid, &tables).unwrap();
        let mut p = reference_params();
        p.dt_macro = 2.5e-5; // 50 substeps; symmetry holds for any count
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();

        // Group permutation induced by the reflection.
        let reflect_voxel = |vi: u32| -> u32 {
            let (x, y, z) = spec.coords(vi as usize);
            spec.index(49 - x, y, z) as u32
        };
        let mut perm = vec![usize::MAX; m.n];
        for (g, members) in cmap.group_members.iter().enumerate() {
            let image = reflect_voxel(members[0]);
            let slot = tables.near.binary_search(&image).expect("reflected voxel is liquid");
            perm[g] = cmap.group_of[slot] as usize;
        }
        for (g, &pg) in perm.iter().enumerate() {
            assert_ne!(pg, usize::MAX);
            assert_eq!(cmap.group_size(g), cmap.group_size(pg));
        }
        for i in 0..m.n {
            for j in 0..m.n {
                let a = m.p[i * m.n + j];
                let b = m.p[perm[i] * m.n + perm[j]];
                assert!((a - b).abs() <= 1.0e-12, "P[{i}][{j}] = {a} vs reflected {b}");
            }
        }
    }

    #[test]
    fn histogram_of_identity() {
        let n = 4;
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        let h = ElementHistogram::of(&p);
        assert_eq!(h.zeros, 12);
        assert_eq!(h.decades[11], 4);
        assert_eq!(h.total(), 16);
    }

    #[test]
    fn histogram_single_decade() {
        let vals = vec![3.0e-3, 1.0e-3, 9.9e-3];
        let h = ElementHistogram::of(&vals);
        assert_eq!(h.decades[9], 3);
        assert_eq!(h.occupied_decades(), 1);
    }

    #[test]
    fn matrix_spans_many_decades_on_a_shell() {
        let (grid, tables, cmap, p) = shell_setup();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();
        let (hp, _) = element_histogram(&m);
        assert!(hp.occupied_decades() >= 4, "only {} decades", hp.occupied_decades());
    }

    #[test]
    fn compatibility_checks_fire() {
        let (grid, tables, cmap, p) = shell_setup();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Group).unwrap();
        m.check_compatible(&grid, &p, &cmap).unwrap();

        let mut other_params = p;
        other_params.dt_macro = 2.0 * p.dt_macro;
        assert!(matches!(
            m.check_compatible(&grid, &other_params, &cmap),
            Err(Error::DtMismatch { .. })
        ));

        let mut other_grid = grid.clone();
        other_grid.labels[0] = Phase::Solid;
        assert!(matches!(
            m.check_compatible(&other_grid, &p, &cmap),
            Err(Error::GeometryHashMismatch { .. })
        ));

        let cmap2 = coarsen_with_factor(&grid, &tables, 4).unwrap();
        assert!(m.check_compatible(&grid, &p, &cmap2).is_err());
    }

    #[test]
    fn single_source_variant_builds() {
        let (grid, tables, cmap, p) = shell_setup();
        let m = precondition(&grid, &tables, &cmap, &p, PrecisionMode::Full, SourceMode::Single).unwrap();
        assert!(m.construction_residual.is_nan());
        assert_eq!(m.n, cmap.n_groups());
        // Single-voxel sources still produce nonnegative proportions.
        assert!(m.min_entry() >= -1.0e-12);
    }

    #[test]
    fn storage_rounding_is_applied() {
        let (grid, tables, cmap, p) = shell_setup();
        let m16 = precondition(&grid, &tables, &cmap, &p, PrecisionMode::B16, SourceMode::Group).unwrap();
        for &v in m16.p.iter().chain(m16.p_bc.iter()) {
            assert_eq!(crate::precision::round_b16(v), v);
        }
        // The construction residual reflects the full-precision build even
        // when storage is narrow.
        assert!(m16.construction_residual <= 1.0e-9);
        assert!(m16.row_sum_residual() > 1.0e-6);
    }
}
