//! On-disk formats.
//!
//! Every format is a short text header (one `key value...` pair per line,
//! closed by `end`) followed by a little-endian binary payload. Floats in
//! headers use Rust's shortest round-trip formatting, so text round-trips
//! are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::coarse_mesh::CoarseMap;
use crate::error::{Error, Result};
use crate::fd_solver::{FineState, KineticsRecord, StencilTables};
use crate::geometry::{GridSpec, Phase, PhaseGrid};
use crate::precision::{b16_bits_to_f64, f64_to_b16_bits, PrecisionMode};
use crate::transfer::{SourceMode, TransferMatrix};

pub const GEOM_MAGIC: &str = "FDIRW-GEOM v1";
pub const MAT_MAGIC: &str = "FDIRW-MAT v1";
pub const FIELD_MAGIC: &str = "FDIRW-FIELD v1";
pub const CMAP_MAGIC: &str = "FDIRW-CMAP v1";

fn bad(format: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::FileFormat { format, path: path.to_path_buf(), reason: reason.into() }
}

/// Reads header lines up to and including the `end` marker; returns the
/// lines and the byte offset where the payload starts.
fn split_header<'a>(
    format: &'static str,
    path: &Path,
    data: &'a [u8],
    magic: &str,
) -> Result<(Vec<&'a str>, usize)> {
    let mut lines = Vec::new();
    let mut pos = 0usize;
    loop {
        let rest = &data[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(format, path, "missing `end` marker"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| bad(format, path, "non-UTF-8 header"))?;
        pos += nl + 1;
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    if lines.first().copied() != Some(magic) {
        return Err(bad(format, path, format!("expected magic `{magic}`")));
    }
    Ok((lines, pos))
}

fn header_field<'a>(
    format: &'static str,
    path: &Path,
    lines: &[&'a str],
    key: &str,
) -> Result<&'a str> {
    lines
        .iter()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .ok_or_else(|| bad(format, path, format!("missing header field `{key}`")))
}

fn parse<T: std::str::FromStr>(
    format: &'static str,
    path: &Path,
    what: &str,
    s: &str,
) -> Result<T> {
    s.parse().map_err(|_| bad(format, path, format!("cannot parse {what} from `{s}`")))
}

// ---------------------------------------------------------------------
// Geometry

pub fn write_geometry(path: &Path, grid: &PhaseGrid) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(f);
    let spec = grid.spec;
    let header = format!(
        "{GEOM_MAGIC}\ndims {} {} {}\ndh {}\nrp {}\nseed {}\ncenter {} {} {}\ncounts {} {}\nend\n",
        spec.nx,
        spec.ny,
        spec.nz,
        spec.dh,
        grid.r_p,
        grid.seed,
        grid.center[0],
        grid.center[1],
        grid.center[2],
        grid.n_solid(),
        grid.n_near(),
    );
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&grid.labels.iter().map(|&l| l as u8).collect::<Vec<u8>>()))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_geometry(path: &Path) -> Result<PhaseGrid> {
    const F: &str = "geometry";
    let data = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (lines, payload) = split_header(F, path, &data, GEOM_MAGIC)?;
    let dims: Vec<u32> = header_field(F, path, &lines, "dims")?
        .split_whitespace()
        .map(|s| parse(F, path, "dimension", s))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(bad(F, path, "dims must have three entries"));
    }
    let dh: f64 = parse(F, path, "dh", header_field(F, path, &lines, "dh")?)?;
    let rp: f64 = parse(F, path, "rp", header_field(F, path, &lines, "rp")?)?;
    let seed: u64 = parse(F, path, "seed", header_field(F, path, &lines, "seed")?)?;
    let center: Vec<f64> = header_field(F, path, &lines, "center")?
        .split_whitespace()
        .map(|s| parse(F, path, "center coordinate", s))
        .collect::<Result<_>>()?;
    if center.len() != 3 {
        return Err(bad(F, path, "center must have three entries"));
    }
    let counts: Vec<usize> = header_field(F, path, &lines, "counts")?
        .split_whitespace()
        .map(|s| parse(F, path, "count", s))
        .collect::<Result<_>>()?;

    let spec = GridSpec::new_unchecked(dims[0], dims[1], dims[2], dh);
    let bytes = &data[payload..];
    if bytes.len() != spec.len() {
        return Err(bad(F, path, format!("payload has {} bytes for {} voxels", bytes.len(), spec.len())));
    }
    let labels: Vec<Phase> = bytes
        .iter()
        .map(|&b| Phase::from_byte(b).ok_or_else(|| bad(F, path, format!("invalid label byte {b}"))))
        .collect::<Result<_>>()?;
    let grid = PhaseGrid::from_labels(spec, labels, [center[0], center[1], center[2]], rp, seed)?;
    if counts.len() == 2 && (grid.n_solid() != counts[0] || grid.n_near() != counts[1]) {
        return Err(bad(
            F,
            path,
            format!(
                "header counts {}:{} disagree with payload {}:{}",
                counts[0],
                counts[1],
                grid.n_solid(),
                grid.n_near()
            ),
        ));
    }
    Ok(grid)
}

// ---------------------------------------------------------------------
// Transfer matrix

fn write_entries(w: &mut impl Write, values: &[f64], precision: PrecisionMode) -> std::io::Result<()> {
    match precision {
        PrecisionMode::Full => {
            for &v in values {
                w.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        PrecisionMode::B32 => {
            for &v in values {
                w.write_all(&(v as f32).to_bits().to_le_bytes())?;
            }
        }
        PrecisionMode::Mixed | PrecisionMode::B16 => {
            for &v in values {
                w.write_all(&f64_to_b16_bits(v).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_entries(r: &mut impl Read, count: usize, precision: PrecisionMode) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    match precision {
        PrecisionMode::Full => {
            let mut buf = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut buf)?;
                out.push(f64::from_bits(u64::from_le_bytes(buf)));
            }
        }
        PrecisionMode::B32 => {
            let mut buf = [0u8; 4];
            for _ in 0..count {
                r.read_exact(&mut buf)?;
                out.push(f32::from_bits(u32::from_le_bytes(buf)) as f64);
            }
        }
        PrecisionMode::Mixed | PrecisionMode::B16 => {
            let mut buf = [0u8; 2];
            for _ in 0..count {
                r.read_exact(&mut buf)?;
                out.push(b16_bits_to_f64(u16::from_le_bytes(buf)));
            }
        }
    }
    Ok(out)
}

pub fn write_matrix(path: &Path, m: &TransferMatrix) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(f);
    let header = format!(
        "{MAT_MAGIC}\nn {}\ndt {}\nn-pre {}\nprecision {}\ncoarse-factor {}\nsource {}\ngeometry {}\nconstruction-residual {}\nend\n",
        m.n,
        m.dt_encoded,
        m.n_pre,
        m.precision.tag(),
        m.coarse_factor,
        m.source.tag(),
        m.geometry_hash,
        m.construction_residual,
    );
    (|| -> std::io::Result<()> {
        w.write_all(header.as_bytes())?;
        write_entries(&mut w, &m.p, m.precision)?;
        write_entries(&mut w, &m.p_bc, m.precision)?;
        w.flush()
    })()
    .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<TransferMatrix> {
    const F: &str = "matrix";
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut r = BufReader::new(f);
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (lines, payload) = split_header(F, path, &data, MAT_MAGIC)?;
    let n: usize = parse(F, path, "n", header_field(F, path, &lines, "n")?)?;
    let dt: f64 = parse(F, path, "dt", header_field(F, path, &lines, "dt")?)?;
    let n_pre: u64 = parse(F, path, "n-pre", header_field(F, path, &lines, "n-pre")?)?;
    let precision = PrecisionMode::from_tag(header_field(F, path, &lines, "precision")?)
        .ok_or_else(|| bad(F, path, "unknown precision tag"))?;
    let factor: u32 = parse(F, path, "coarse-factor", header_field(F, path, &lines, "coarse-factor")?)?;
    let source = SourceMode::from_tag(header_field(F, path, &lines, "source")?)
        .ok_or_else(|| bad(F, path, "unknown source tag"))?;
    let hash = header_field(F, path, &lines, "geometry")?.to_string();
    let residual: f64 =
        parse(F, path, "construction-residual", header_field(F, path, &lines, "construction-residual")?)?;

    let width = precision.storage_width();
    let expected = (n * n + n) * width;
    let body = &data[payload..];
    if body.len() != expected {
        return Err(bad(F, path, format!("payload has {} bytes, expected {expected}", body.len())));
    }
    let mut cursor = std::io::Cursor::new(body);
    let p = read_entries(&mut cursor, n * n, precision)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let p_bc = read_entries(&mut cursor, n, precision)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(TransferMatrix {
        n,
        p,
        p_bc,
        dt_encoded: dt,
        n_pre,
        precision,
        coarse_factor: factor,
        source,
        geometry_hash: hash,
        construction_residual: residual,
    })
}

// ---------------------------------------------------------------------
// Field dump

/// Writes the non-far voxel values in x-fastest order plus the trailing
/// far-field scalar.
pub fn write_field(path: &Path, state: &FineState, grid: &PhaseGrid) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(f);
    let spec = grid.spec;
    let count = grid.labels.iter().filter(|&&l| l != Phase::Far).count();
    let header = format!(
        "{FIELD_MAGIC}\nt {}\ndims {} {} {}\ncount {}\nend\n",
        state.t, spec.nx, spec.ny, spec.nz, count
    );
    (|| -> std::io::Result<()> {
        w.write_all(header.as_bytes())?;
        for (idx, &l) in grid.labels.iter().enumerate() {
            if l != Phase::Far {
                w.write_all(&state.c[idx].to_bits().to_le_bytes())?;
            }
        }
        w.write_all(&state.c_far.to_bits().to_le_bytes())?;
        w.flush()
    })()
    .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

/// Reads a field dump back onto its geometry.
pub fn read_field(path: &Path, grid: &PhaseGrid) -> Result<FineState> {
    const F: &str = "field";
    let data = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (lines, payload) = split_header(F, path, &data, FIELD_MAGIC)?;
    let t: f64 = parse(F, path, "t", header_field(F, path, &lines, "t")?)?;
    let count: usize = parse(F, path, "count", header_field(F, path, &lines, "count")?)?;
    let expected = grid.labels.iter().filter(|&&l| l != Phase::Far).count();
    if count != expected {
        return Err(bad(F, path, format!("field has {count} voxels, geometry has {expected}")));
    }
    let body = &data[payload..];
    if body.len() != (count + 1) * 8 {
        return Err(bad(F, path, "payload size mismatch"));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|ch| f64::from_bits(u64::from_le_bytes(ch.try_into().unwrap())));
    let mut c = vec![0.0; grid.spec.len()];
    for (idx, &l) in grid.labels.iter().enumerate() {
        if l != Phase::Far {
            c[idx] = values.next().unwrap();
        }
    }
    let c_far = values.next().unwrap();
    Ok(FineState { c, c_far, t })
}

// ---------------------------------------------------------------------
// Coarse-map dump (audit only; always recomputable from geometry)

pub fn write_coarse_map(path: &Path, cmap: &CoarseMap, tables: &StencilTables) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(f);
    let header = format!(
        "{CMAP_MAGIC}\nn-groups {}\nn-fine {}\nfactor {}\nend\n",
        cmap.n_groups(),
        cmap.n_fine(),
        cmap.factor
    );
    (|| -> std::io::Result<()> {
        w.write_all(header.as_bytes())?;
        debug_assert_eq!(cmap.n_fine(), tables.near.len());
        for &g in &cmap.group_of {
            w.write_all(&g.to_le_bytes())?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

// ---------------------------------------------------------------------
// Kinetics CSV

pub const KINETICS_COLUMNS: &str = "t,Q_S,Q_L_near,c_far,Q_total";

pub fn kinetics_csv(record: &KineticsRecord) -> String {
    let mut s = String::with_capacity(64 * (record.samples.len() + 1));
    s.push_str(KINETICS_COLUMNS);
    s.push('\n');
    for sample in &record.samples {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            sample.t, sample.q_solid, sample.q_liquid_near, sample.c_far, sample.q_total
        ));
    }
    s
}

pub fn write_kinetics_csv(path: &Path, record: &KineticsRecord) -> Result<()> {
    std::fs::write(path, kinetics_csv(record))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
