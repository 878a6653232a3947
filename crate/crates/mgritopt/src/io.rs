//! Report, table and trajectory file formats.
//!
//! Trajectory checkpoints are little-endian binary:
//!
//! | field      | type        |
//! |------------|-------------|
//! | magic      | `MGRTRAJ1`  |
//! | kind       | u32         |
//! | d          | u32         |
//! | n          | u64         |
//! | steps      | u64         |
//! | stride     | u64         |
//! | seed       | u64         |
//! | lambda     | f64         |
//! | count      | u64         |
//! | unknowns   | u64         |
//!
//! followed by `count · unknowns` checkpoint values and the `unknowns` values
//! of the final iterate.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use mgritopt_core::analysis::FigureTable;
use mgritopt_core::problems::{ProblemDescriptor, ProblemKind};
use mgritopt_core::Trajectory;
use serde::Serialize;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MGRTRAJ1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] mgritopt_core::Error),
    #[error("not a trajectory checkpoint")]
    BadMagic,
    #[error("unknown problem kind code {0}")]
    BadKind(u32),
}

/// A stored sequential trajectory together with what is needed to rebuild
/// its problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub problem: ProblemDescriptor,
    pub steps: usize,
    pub trajectory: Trajectory,
}

fn kind_code(kind: ProblemKind) -> u32 {
    match kind {
        ProblemKind::Mp1 => 0,
        ProblemKind::Mp2OneD => 1,
        ProblemKind::Mp2TwoD => 2,
    }
}

fn kind_from_code(code: u32) -> Result<ProblemKind, FormatError> {
    match code {
        0 => Ok(ProblemKind::Mp1),
        1 => Ok(ProblemKind::Mp2OneD),
        2 => Ok(ProblemKind::Mp2TwoD),
        other => Err(FormatError::BadKind(other)),
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, checkpoint: &Checkpoint) -> Result<(), FormatError> {
    let p = &checkpoint.problem;
    let t = &checkpoint.trajectory;
    let count = t.checkpoints().len() / t.dim();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&kind_code(p.kind).to_le_bytes())?;
    w.write_all(&(p.d as u32).to_le_bytes())?;
    for v in [
        p.n as u64,
        checkpoint.steps as u64,
        t.stride() as u64,
        p.seed,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&p.lambda.to_le_bytes())?;
    w.write_all(&(count as u64).to_le_bytes())?;
    w.write_all(&(t.dim() as u64).to_le_bytes())?;
    for x in t.checkpoints().iter().chain(t.final_point()) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, FormatError> {
    let mut magic = [0; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let kind = kind_from_code(read_u32(&mut r)?)?;
    let d = read_u32(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let steps = read_u64(&mut r)? as usize;
    let stride = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let lambda = read_f64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let unknowns = read_u64(&mut r)? as usize;
    let mut values = vec![0.0; count * unknowns];
    for v in values.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    let mut last = vec![0.0; unknowns];
    for v in last.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    let trajectory = Trajectory::from_parts(unknowns, steps + 1, stride, values, last)?;
    Ok(Checkpoint {
        problem: ProblemDescriptor {
            kind,
            n,
            d,
            lambda,
            seed,
        },
        steps,
        trajectory,
    })
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), FormatError> {
    write_checkpoint(BufWriter::new(File::create(path)?), checkpoint)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, FormatError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Pretty JSON in field-declaration order, with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_figure_csv<W: Write>(w: W, table: &FigureTable) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&table.headers)?;
    for row in &table.rows {
        out.write_record(row.iter().map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `iteration, u[0], …, u[N−1]` rows for every `stride`-th point of a
/// flattened trajectory, plus the last point.
pub fn write_trajectory_csv<W: Write>(
    w: W,
    trajectory: &[f64],
    n: usize,
    stride: usize,
) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string()];
    header.extend((0..n).map(|q| format!("u{q}")));
    out.write_record(&header)?;
    let points = trajectory.len() / n;
    let stride = stride.max(1);
    for i in (0..points).filter(|i| i % stride == 0 || i + 1 == points) {
        let mut row = vec![i.to_string()];
        row.extend(trajectory[i * n..(i + 1) * n].iter().map(|x| x.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a header and string rows as CSV.
pub fn write_rows<W: Write>(
    w: W,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}
