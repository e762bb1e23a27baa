//! Voxelized computational domain: porous particle, near-field liquid
//! shell, far-field reservoir accounting.
//!
//! The particle is a digitized sphere carved by overlapping spherical
//! pores. Liquid pockets with no face-connected path to the domain
//! exterior are relabeled solid, so every liquid voxel that survives can
//! exchange mass with the reservoir. The near-field shell is the liquid
//! within `r_p + 5` voxel radii of the particle center (boundary
//! inclusive); all remaining liquid belongs to the well-mixed far field.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::Fnv1a;

/// Per-voxel phase label. The discriminants are the on-disk byte values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Phase {
    Solid = 0,
    LiquidNear = 1,
    Far = 2,
}

impl Phase {
    pub fn from_byte(b: u8) -> Option<Phase> {
        match b {
            0 => Some(Phase::Solid),
            1 => Some(Phase::LiquidNear),
            2 => Some(Phase::Far),
            _ => None,
        }
    }
}

/// Uniform cubic voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    /// Voxel edge length [m].
    pub dh: f64,
    /// Spatial dimension; fixed at 3.
    pub d: u32,
}

impl GridSpec {
    pub const MIN_EDGE: u32 = 8;

    pub fn new(nx: u32, ny: u32, nz: u32, dh: f64) -> Result<GridSpec> {
        if nx < Self::MIN_EDGE || ny < Self::MIN_EDGE || nz < Self::MIN_EDGE {
            return Err(Error::Geometry(format!(
                "grid {nx}x{ny}x{nz} is below the minimum edge of {} voxels",
                Self::MIN_EDGE
            )));
        }
        if !(dh > 0.0) {
            return Err(Error::Geometry(format!("voxel edge dh = {dh} must be positive")));
        }
        Ok(GridSpec { nx, ny, nz, dh, d: 3 })
    }

    /// Constructor without the minimum-edge check, for small synthetic
    /// domains in tests and oracles.
    pub fn new_unchecked(nx: u32, ny: u32, nz: u32, dh: f64) -> GridSpec {
        GridSpec { nx, ny, nz, dh, d: 3 }
    }

    pub fn len(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nz as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxel volume, `dh^d`.
    pub fn voxel_volume(&self) -> f64 {
        self.dh.powi(self.d as i32)
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, z: u32) -> usize {
        (x + self.nx * (y + self.ny * z)) as usize
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (u32, u32, u32) {
        let i = idx as u32;
        (i % self.nx, (i / self.nx) % self.ny, i / (self.nx * self.ny))
    }
}

/// Porous-particle generation parameters. Radii are in voxel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSpec {
    pub r_p: f64,
    pub n_pores: u32,
    pub pore_radius_range: (f64, f64),
    pub rng_seed: u64,
}

impl ParticleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r_p < 4.0 {
            return Err(Error::Geometry(format!(
                "particle radius {} is below the minimum of 4 voxels",
                self.r_p
            )));
        }
        let (lo, hi) = self.pore_radius_range;
        if self.n_pores > 0 && !(lo > 0.0 && hi >= lo) {
            return Err(Error::Geometry(format!("invalid pore radius range [{lo}, {hi}]")));
        }
        if hi >= self.r_p {
            return Err(Error::Geometry(format!(
                "pore radius bound {hi} must be below the particle radius {}",
                self.r_p
            )));
        }
        Ok(())
    }
}

/// Labeled voxel grid plus reservoir accounting.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub spec: GridSpec,
    pub labels: Vec<Phase>,
    /// Particle center in voxel coordinates.
    pub center: [f64; 3],
    /// Particle radius in voxel units (zero for hand-built domains).
    pub r_p: f64,
    pub seed: u64,
    /// Far-field reservoir volume in voxel-volume units; zero until the
    /// physical far-field volume is applied.
    pub n_far_equiv: f64,
}

impl PhaseGrid {
    /// Wraps an explicit label array (used by tests and file loading).
    pub fn from_labels(
        spec: GridSpec,
        labels: Vec<Phase>,
        center: [f64; 3],
        r_p: f64,
        seed: u64,
    ) -> Result<PhaseGrid> {
        if labels.len() != spec.len() {
            return Err(Error::Geometry(format!(
                "label array has {} entries for a {} voxel grid",
                labels.len(),
                spec.len()
            )));
        }
        Ok(PhaseGrid { spec, labels, center, r_p, seed, n_far_equiv: 0.0 })
    }

    pub fn n_solid(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Phase::Solid).count()
    }

    pub fn n_near(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Phase::LiquidNear).count()
    }

    /// Squared Euclidean distance from a voxel center to the particle
    /// center, in voxel units.
    #[inline]
    pub fn dist2(&self, x: u32, y: u32, z: u32) -> f64 {
        let dx = x as f64 - self.center[0];
        let dy = y as f64 - self.center[1];
        let dz = z as f64 - self.center[2];
        dx * dx + dy * dy + dz * dz
    }

    /// Fingerprint tying derived artifacts (transfer matrices) to this
    /// exact domain.
    pub fn hash(&self) -> String {
        let mut h = Fnv1a::new();
        h.write_u64(self.spec.nx as u64);
        h.write_u64(self.spec.ny as u64);
        h.write_u64(self.spec.nz as u64);
        h.write_f64(self.spec.dh);
        h.write_f64(self.r_p);
        h.write_u64(self.seed);
        h.write(&self.labels.iter().map(|&l| l as u8).collect::<Vec<u8>>());
        format!("{:016x}", h.finish())
    }
}

/// Side facts from particle generation, reported by the CLI.
#[derive(Debug, Clone, Copy)]
pub struct GenStats {
    /// Voxel count of the solid sphere before pores are carved.
    pub sphere_voxels: usize,
    /// Liquid voxels relabeled solid because they were sealed off.
    pub sealed_voxels: usize,
}

impl GenStats {
    /// Fraction of the original sphere carved away by (connected) pores.
    pub fn porosity(&self, n_solid: usize) -> f64 {
        1.0 - n_solid as f64 / self.sphere_voxels as f64
    }
}

/// Builds a porous spherical particle centered in the grid.
///
/// The solid is the digitized sphere of radius `r_p` minus the union of
/// `n_pores` spheres with centers uniform in the particle ball and radii
/// uniform in the configured range. Liquid cavities without a
/// face-connected path to the domain exterior are relabeled solid. The
/// result is a pure function of the two specs: the same seed yields a
/// bit-identical label array.
pub fn generate_particle(spec: GridSpec, part: ParticleSpec) -> Result<(PhaseGrid, GenStats)> {
    part.validate()?;
    let center =
        [(spec.nx / 2) as f64, (spec.ny / 2) as f64, (spec.nz / 2) as f64];
    let required = part.r_p + 5.0;
    let margin = [
        center[0],
        spec.nx as f64 - 1.0 - center[0],
        center[1],
        spec.ny as f64 - 1.0 - center[1],
        center[2],
        spec.nz as f64 - 1.0 - center[2],
    ];
    let available = margin.iter().cloned().fold(f64::INFINITY, f64::min);
    if available < required {
        return Err(Error::Geometry(format!(
            "particle of radius {} needs {} voxels of clearance from every face but the grid provides only {}",
            part.r_p, required, available
        )));
    }

    // Pore centers are drawn uniformly in the particle ball by rejection
    // from the bounding cube; radii uniformly in range. Draw order is
    // fixed, so the layout is reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(part.rng_seed);
    let mut pores: Vec<([f64; 3], f64)> = Vec::with_capacity(part.n_pores as usize);
    while pores.len() < part.n_pores as usize {
        let px = rng.gen_range(-part.r_p..=part.r_p);
        let py = rng.gen_range(-part.r_p..=part.r_p);
        let pz = rng.gen_range(-part.r_p..=part.r_p);
        if px * px + py * py + pz * pz > part.r_p * part.r_p {
            continue;
        }
        let (lo, hi) = part.pore_radius_range;
        let r = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        pores.push(([center[0] + px, center[1] + py, center[2] + pz], r));
    }

    let mut labels = vec![Phase::Far; spec.len()];
    let r_p2 = part.r_p * part.r_p;
    let mut sphere_voxels = 0usize;
    for z in 0..spec.nz {
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                let dx = x as f64 - center[0];
                let dy = y as f64 - center[1];
                let dz = z as f64 - center[2];
                if dx * dx + dy * dy + dz * dz > r_p2 {
                    continue;
                }
                sphere_voxels += 1;
                let idx = spec.index(x, y, z);
                let in_pore = pores.iter().any(|&(pc, pr)| {
                    let qx = x as f64 - pc[0];
                    let qy = y as f64 - pc[1];
                    let qz = z as f64 - pc[2];
                    qx * qx + qy * qy + qz * qz <= pr * pr
                });
                if !in_pore {
                    labels[idx] = Phase::Solid;
                }
            }
        }
    }

    let mut grid = PhaseGrid { spec, labels, center, r_p: part.r_p, seed: part.rng_seed, n_far_equiv: 0.0 };
    let sealed_voxels = seal_disconnected_liquid(&mut grid);
    Ok((grid, GenStats { sphere_voxels, sealed_voxels }))
}

/// Relabels liquid voxels that cannot reach the domain boundary through
/// face-adjacent liquid as solid. Returns the number of relabeled voxels.
fn seal_disconnected_liquid(grid: &mut PhaseGrid) -> usize {
    let spec = grid.spec;
    let mut reachable = vec![false; spec.len()];
    let mut queue = VecDeque::new();
    let push = |x: u32, y: u32, z: u32, reachable: &mut Vec<bool>, queue: &mut VecDeque<usize>, labels: &[Phase]| {
        let idx = spec.index(x, y, z);
        if labels[idx] != Phase::Solid && !reachable[idx] {
            reachable[idx] = true;
            queue.push_back(idx);
        }
    };
    for z in 0..spec.nz {
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                if x == 0 || y == 0 || z == 0 || x == spec.nx - 1 || y == spec.ny - 1 || z == spec.nz - 1 {
                    push(x, y, z, &mut reachable, &mut queue, &grid.labels);
                }
            }
        }
    }
    while let Some(idx) = queue.pop_front() {
        let (x, y, z) = spec.coords(idx);
        let mut visit = |nx: u32, ny: u32, nz: u32| {
            let j = spec.index(nx, ny, nz);
            if grid.labels[j] != Phase::Solid && !reachable[j] {
                reachable[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(x - 1, y, z);
        }
        if x + 1 < spec.nx {
            visit(x + 1, y, z);
        }
        if y > 0 {
            visit(x, y - 1, z);
        }
        if y + 1 < spec.ny {
            visit(x, y + 1, z);
        }
        if z > 0 {
            visit(x, y, z - 1);
        }
        if z + 1 < spec.nz {
            visit(x, y, z + 1);
        }
    }
    let mut sealed = 0;
    for (idx, label) in grid.labels.iter_mut().enumerate() {
        if *label != Phase::Solid && !reachable[idx] {
            *label = Phase::Solid;
            sealed += 1;
        }
    }
    sealed
}

/// Splits the liquid into near-field shell and far field by center
/// distance. A liquid voxel at distance exactly `r_p + 5` (voxel units)
/// is near-field; solids are untouched.
pub fn partition_shell(grid: &mut PhaseGrid) -> Result<()> {
    let r_shell = grid.r_p + 5.0;
    let r_shell2 = r_shell * r_shell;
    let spec = grid.spec;
    let mut n_near = 0usize;
    for z in 0..spec.nz {
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                let idx = spec.index(x, y, z);
                if grid.labels[idx] == Phase::Solid {
                    continue;
                }
                if grid.dist2(x, y, z) <= r_shell2 {
                    grid.labels[idx] = Phase::LiquidNear;
                    n_near += 1;
                } else {
                    grid.labels[idx] = Phase::Far;
                }
            }
        }
    }
    if n_near == 0 {
        return Err(Error::Geometry(
            "no near-field liquid voxels: the shell contains no liquid".into(),
        ));
    }
    Ok(())
}

/// Shell partition plus reservoir sizing from the physical far-field
/// volume (already converted to voxel-volume units).
pub fn partition_near_far(grid: &mut PhaseGrid, n_far_equiv: f64) -> Result<()> {
    if !(n_far_equiv > 0.0) {
        return Err(Error::Geometry(format!(
            "far-field reservoir volume must be positive, got {n_far_equiv} voxel volumes"
        )));
    }
    partition_shell(grid)?;
    grid.n_far_equiv = n_far_equiv;
    Ok(())
}
