//! File formats: the map-field binary, flow checkpoints, and CSV reports with
//! schema and config stamps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::approx::MapField;
use crate::error::{Error, Result};
use crate::grid::{Field, SlabGrid};
use crate::solver::FlowState;

const MAP_MAGIC: &[u8; 4] = b"AHHM";
const CHECKPOINT_MAGIC: &[u8; 4] = b"AHCK";
const VERSION: u32 = 1;

/// FNV-1a hash, used to stamp reports with the config they came from.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_i64(w: &mut impl Write, v: i64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_i64(r: &mut impl Read) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_map_body(w: &mut impl Write, u: &MapField) -> Result<()> {
    let grid = &u.grid;
    let m = grid.dim_boundary();
    let n = u.n_target();
    w.write_all(MAP_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, m as u32)?;
    put_u32(w, n as u32)?;
    for a in 0..m {
        put_u32(w, grid.n_axis()[a] as u32)?;
    }
    put_u32(w, grid.num_levels() as u32)?;
    for &l in grid.lattice() {
        put_f64(w, l)?;
    }
    for &l in &u.target_lattice {
        put_f64(w, l)?;
    }
    for &r in grid.levels() {
        put_f64(w, r)?;
    }
    for row in &u.homotopy {
        for &v in row {
            put_i64(w, v)?;
        }
    }
    for c in 0..n {
        for &v in &u.tangential[c].data {
            put_f64(w, v)?;
        }
    }
    for &v in &u.rho.data {
        put_f64(w, v)?;
    }
    Ok(())
}

fn read_map_body(r: &mut impl Read) -> Result<MapField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAP_MAGIC {
        return Err(Error::Format(format!(
            "bad map-field magic {magic:?}, expected {MAP_MAGIC:?}"
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported map-field version {version}")));
    }
    let m = get_u32(r)? as usize;
    let n = get_u32(r)? as usize;
    if m == 0 || n == 0 || m > 16 || n > 16 {
        return Err(Error::Format(format!("implausible dimensions m={m}, n={n}")));
    }
    let mut n_axis = vec![0usize; m];
    for a in 0..m {
        n_axis[a] = get_u32(r)? as usize;
    }
    let num_levels = get_u32(r)? as usize;
    let mut lattice = vec![0.0; m];
    for l in lattice.iter_mut() {
        *l = get_f64(r)?;
    }
    let mut target_lattice = vec![0.0; n];
    for l in target_lattice.iter_mut() {
        *l = get_f64(r)?;
    }
    let mut levels = vec![0.0; num_levels];
    for l in levels.iter_mut() {
        *l = get_f64(r)?;
    }
    let grid = Arc::new(SlabGrid::from_stored_levels(lattice, n_axis, levels)?);
    let mut homotopy = vec![vec![0i64; m]; n];
    for row in homotopy.iter_mut() {
        for v in row.iter_mut() {
            *v = get_i64(r)?;
        }
    }
    let nodes = grid.node_count();
    let mut read_field = |grid: &Arc<SlabGrid>| -> Result<Field> {
        let mut f = Field::zeros(grid.clone());
        for v in f.data.iter_mut() {
            *v = get_f64(r)?;
        }
        let _ = nodes;
        Ok(f)
    };
    let mut tangential = Vec::with_capacity(n);
    for _ in 0..n {
        tangential.push(read_field(&grid)?);
    }
    let rho = read_field(&grid)?;
    Ok(MapField {
        grid,
        tangential,
        rho,
        homotopy,
        target_lattice,
    })
}

pub fn write_map_field(path: &Path, u: &MapField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_map_body(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn read_map_field(path: &Path) -> Result<MapField> {
    let mut r = BufReader::new(File::open(path)?);
    read_map_body(&mut r)
}

/// Checkpoint header carried on top of the map-field body.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub u: MapField,
    pub step: u64,
    pub dt: f64,
    pub tension_sup: f64,
    pub converged: bool,
}

pub fn write_checkpoint(path: &Path, state: &FlowState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(&mut w, VERSION)?;
    put_u64(&mut w, state.step)?;
    put_f64(&mut w, state.dt)?;
    put_f64(&mut w, state.tension_sup)?;
    put_u32(&mut w, state.converged as u32)?;
    write_map_body(&mut w, &state.u)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
        )));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let step = get_u64(&mut r)?;
    let dt = get_f64(&mut r)?;
    let tension_sup = get_f64(&mut r)?;
    let converged = get_u32(&mut r)? != 0;
    let u = read_map_body(&mut r)?;
    Ok(Checkpoint {
        u,
        step,
        dt,
        tension_sup,
        converged,
    })
}

/// CSV report writer: a schema/config comment line, then a mandatory header
/// row, then rows with '.' decimals.
pub struct CsvWriter {
    w: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, schema: &str, config_hash: u64, header: &[&str]) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# schema={schema} config={config_hash:016x}")?;
        writeln!(w, "{}", header.join(","))?;
        Ok(CsvWriter {
            w,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.columns);
        let cells: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        writeln!(self.w, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn row_strings(&mut self, values: &[String]) -> Result<()> {
        debug_assert_eq!(values.len(), self.columns);
        writeln!(self.w, "{}", values.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::MapField;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn map_field_roundtrip() {
        let grid = Arc::new(
            SlabGrid::from_levels(vec![TAU, 3.0], vec![6, 4], 0.05, 0.3, 7).unwrap(),
        );
        let mut u = MapField::identity(grid.clone());
        u.homotopy = vec![vec![2, 0], vec![-1, 1]];
        for (i, d) in u.tangential[0].data.iter_mut().enumerate() {
            *d += (i as f64 * 0.1).sin();
        }
        let dir = std::env::temp_dir().join("ahhm_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("u.ahhm");
        write_map_field(&path, &u).unwrap();
        let back = read_map_field(&path).unwrap();
        assert_eq!(back.homotopy, u.homotopy);
        assert_eq!(back.target_lattice, u.target_lattice);
        assert_eq!(back.grid.levels(), u.grid.levels());
        assert_eq!(back.tangential[0].data, u.tangential[0].data);
        assert_eq!(back.tangential[1].data, u.tangential[1].data);
        assert_eq!(back.rho.data, u.rho.data);
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = std::env::temp_dir().join("ahhm_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.ahhm");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        assert!(matches!(read_map_field(&path), Err(Error::Format(_))));
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
