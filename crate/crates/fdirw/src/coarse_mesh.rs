//! Representative-node coarse mesh over the near-field liquid.
//!
//! Near-field voxels are grouped by axis-aligned blocks (5 voxels per axis
//! by default) anchored at the grid origin. Mapping takes the group mean;
//! remapping broadcasts the group value back. Both directions conserve
//! mass up to the rounding of the mean.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd_solver::StencilTables;
use crate::geometry::PhaseGrid;
use crate::precision::{b32_mean, PrecisionMode};
use crate::util::PAR_THRESHOLD;

pub const DEFAULT_COARSE_FACTOR: u32 = 5;

/// Partition of near-field voxels into representative-node groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseMap {
    /// Group index per near voxel (aligned with `StencilTables::near`).
    pub group_of: Vec<u32>,
    /// Member voxels per group as linear grid indices, in ascending order.
    pub group_members: Vec<Vec<u32>>,
    /// Coarsening factor the blocks were built with.
    pub factor: u32,
}

impl CoarseMap {
    pub fn n_groups(&self) -> usize {
        self.group_members.len()
    }

    pub fn n_fine(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.group_members[group].len()
    }

    /// Fine-to-coarse ratio `N_L / N`.
    pub fn reduction_ratio(&self) -> f64 {
        self.n_fine() as f64 / self.n_groups() as f64
    }
}

/// Groups near-field voxels by axis-aligned blocks of `factor` voxels per
/// side anchored at the grid origin. Empty blocks produce no group; group
/// order follows the block linear index, members follow the fine voxel
/// order. Deterministic by construction.
pub fn coarsen_with_factor(
    grid: &PhaseGrid,
    tables: &StencilTables,
    factor: u32,
) -> Result<CoarseMap> {
    if factor == 0 {
        return Err(Error::Invalid("coarsening factor must be at least 1".into()));
    }
    if tables.near.is_empty() {
        return Err(Error::Geometry("cannot coarsen a domain with no near-field liquid".into()));
    }
    let spec = grid.spec;
    let blocks_x = spec.nx.div_ceil(factor);
    let blocks_y = spec.ny.div_ceil(factor);
    let blocks_z = spec.nz.div_ceil(factor);
    let block_of = |vi: u32| -> usize {
        let (x, y, z) = spec.coords(vi as usize);
        let (bx, by, bz) = (x / factor, y / factor, z / factor);
        (bx + blocks_x * (by + blocks_y * bz)) as usize
    };

    // Occupied blocks become groups, numbered in block-index order.
    let n_blocks = (blocks_x * blocks_y * blocks_z) as usize;
    let mut group_index_of_block = vec![u32::MAX; n_blocks];
    for &vi in &tables.near {
        group_index_of_block[block_of(vi)] = 0;
    }
    let mut next = 0u32;
    for slot in group_index_of_block.iter_mut() {
        if *slot != u32::MAX {
            *slot = next;
            next += 1;
        }
    }

    let mut group_of = Vec::with_capacity(tables.near.len());
    let mut group_members: Vec<Vec<u32>> = vec![Vec::new(); next as usize];
    for &vi in &tables.near {
        let g = group_index_of_block[block_of(vi)];
        group_of.push(g);
        group_members[g as usize].push(vi);
    }
    Ok(CoarseMap { group_of, group_members, factor })
}

pub fn coarsen(grid: &PhaseGrid, tables: &StencilTables) -> Result<CoarseMap> {
    coarsen_with_factor(grid, tables, DEFAULT_COARSE_FACTOR)
}

fn pairwise_gather(field: &[f64], members: &[u32]) -> f64 {
    if members.len() <= 16 {
        let mut acc = 0.0;
        for &vi in members {
            acc += field[vi as usize];
        }
        acc
    } else {
        let mid = members.len() / 2;
        pairwise_gather(field, &members[..mid]) + pairwise_gather(field, &members[mid..])
    }
}

/// Fine-to-coarse mapping: each group value is the arithmetic mean of its
/// members (equal voxel volumes cancel out of the volume-weighted form).
///
/// The full-precision path sums pairwise in binary64; every reduced mode
/// runs the addition-dominant reduction under the binary32 contract.
pub fn map_fine_to_coarse(c: &[f64], cmap: &CoarseMap, mode: PrecisionMode) -> Vec<f64> {
    let reduce = |members: &Vec<u32>| -> f64 {
        match mode {
            PrecisionMode::Full => pairwise_gather(c, members) / members.len() as f64,
            _ => {
                let gathered: Vec<f64> = members.iter().map(|&vi| c[vi as usize]).collect();
                b32_mean(&gathered)
            }
        }
    };
    if cmap.n_fine() < PAR_THRESHOLD {
        cmap.group_members.iter().map(reduce).collect()
    } else {
        cmap.group_members.par_iter().map(reduce).collect()
    }
}

/// Coarse-to-fine remapping: every member voxel receives its group value
/// (widened to binary64); non-member entries are untouched.
pub fn remap_coarse_to_fine(coarse: &[f64], cmap: &CoarseMap, c: &mut [f64]) {
    debug_assert_eq!(coarse.len(), cmap.n_groups());
    for (group, members) in cmap.group_members.iter().enumerate() {
        let v = coarse[group];
        for &vi in members {
            c[vi as usize] = v;
        }
    }
}
