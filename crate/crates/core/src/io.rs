//! File formats: field snapshots, ball masks, boundary and estimate tables.
//!
//! Binary field layout (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `LQGF` |
//! | 4     | version `u32` (1) |
//! | 8     | `n` `u64` |
//! | 8     | spacing `f64` |
//! | 8     | seed `u64` |
//! | 1     | normalization tag (0 raw, 1 pinned circle average) |
//! | 8     | pinned radius `f64` (0 when raw) |
//! | 8     | calibration `f64` |
//! | 8·n²  | values, row-major `f64` |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fractal::DimensionEstimate;
use crate::gff::{FieldError, FieldGrid, Normalization};
use crate::metric::{DistanceField, MetricBall};

pub const FIELD_MAGIC: [u8; 4] = *b"LQGF";
pub const FIELD_VERSION: u32 = 1;
/// Largest lattice written as JSON.
pub const MAX_JSON_N: usize = 256;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("unknown normalization tag {0}")]
    BadTag(u8),
    #[error("lattice {0} too large for JSON (max {MAX_JSON_N})")]
    TooLargeForJson(usize),
    #[error("header claims n = {0}, which is not a valid lattice")]
    BadSize(u64),
    #[error("malformed run-length mask: {0}")]
    BadMask(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub fn write_field<W: Write>(f: &FieldGrid, mut out: W) -> Result<(), IoError> {
    let (tag, radius) = match f.normalization() {
        Normalization::RawZeroBoundary => (0u8, 0.0),
        Normalization::PinnedCircleAverage { radius } => (1u8, radius),
    };
    out.write_all(&FIELD_MAGIC)?;
    out.write_all(&FIELD_VERSION.to_le_bytes())?;
    out.write_all(&(f.n() as u64).to_le_bytes())?;
    out.write_all(&f.spacing().to_le_bytes())?;
    out.write_all(&f.seed().to_le_bytes())?;
    out.write_all(&[tag])?;
    out.write_all(&radius.to_le_bytes())?;
    out.write_all(&f.calibration().to_le_bytes())?;
    for v in f.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

/// Read a binary snapshot. The loaded field is marked as not derived.
pub fn read_field<R: Read>(mut input: R) -> Result<FieldGrid, IoError> {
    let magic = read_array::<4, _>(&mut input)?;
    if magic != FIELD_MAGIC {
        return Err(IoError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != FIELD_VERSION {
        return Err(IoError::BadVersion(version));
    }
    let n64 = u64::from_le_bytes(read_array(&mut input)?);
    if n64 == 0 || n64 > 1 << 16 {
        return Err(IoError::BadSize(n64));
    }
    let n = n64 as usize;
    let _spacing = f64::from_le_bytes(read_array(&mut input)?);
    let seed = u64::from_le_bytes(read_array(&mut input)?);
    let [tag] = read_array::<1, _>(&mut input)?;
    let radius = f64::from_le_bytes(read_array(&mut input)?);
    let normalization = match tag {
        0 => Normalization::RawZeroBoundary,
        1 => Normalization::PinnedCircleAverage { radius },
        t => return Err(IoError::BadTag(t)),
    };
    let calibration = f64::from_le_bytes(read_array(&mut input)?);
    let mut bytes = vec![0u8; 8 * n * n];
    input.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(FieldGrid::from_parts(n, values, seed, calibration, normalization, false)?)
}

pub fn save_field(f: &FieldGrid, path: &Path) -> Result<(), IoError> {
    write_field(f, BufWriter::new(File::create(path)?))
}

pub fn load_field(path: &Path) -> Result<FieldGrid, IoError> {
    read_field(BufReader::new(File::open(path)?))
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    n: usize,
    spacing: f64,
    seed: u64,
    calibration: f64,
    normalization: Normalization,
    derived: bool,
    values: Vec<f64>,
}

/// Compact (whitespace-free) JSON for small lattices.
pub fn field_to_json(f: &FieldGrid) -> Result<String, IoError> {
    if f.n() > MAX_JSON_N {
        return Err(IoError::TooLargeForJson(f.n()));
    }
    Ok(serde_json::to_string(&FieldJson {
        n: f.n(),
        spacing: f.spacing(),
        seed: f.seed(),
        calibration: f.calibration(),
        normalization: f.normalization(),
        derived: f.is_derived(),
        values: f.values().to_vec(),
    })?)
}

pub fn field_from_json(s: &str) -> Result<FieldGrid, IoError> {
    let j: FieldJson = serde_json::from_str(s)?;
    Ok(FieldGrid::from_parts(j.n, j.values, j.seed, j.calibration, j.normalization, j.derived)?)
}

/// Binary PBM (`P4`) of a ball mask; the top image row is the highest `y`.
pub fn write_mask_pbm<W: Write>(ball: &MetricBall, mut out: W) -> Result<(), IoError> {
    let n = ball.n;
    write!(out, "P4\n{n} {n}\n")?;
    let row_bytes = n.div_ceil(8);
    for row in (0..n).rev() {
        let mut packed = vec![0u8; row_bytes];
        for col in 0..n {
            if ball.mask[row * n + col] {
                packed[col / 8] |= 0x80 >> (col % 8);
            }
        }
        out.write_all(&packed)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs of in-ball cells in row-major order, as `[start, length]` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub n: usize,
    pub runs: Vec<[usize; 2]>,
}

impl RleMask {
    pub fn encode(n: usize, mask: &[bool]) -> Self {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < mask.len() {
            if mask[i] {
                let start = i;
                while i < mask.len() && mask[i] {
                    i += 1;
                }
                runs.push([start, i - start]);
            } else {
                i += 1;
            }
        }
        RleMask { n, runs }
    }

    pub fn decode(&self) -> Result<Vec<bool>, IoError> {
        let len = self.n * self.n;
        let mut mask = vec![false; len];
        let mut last_end = 0;
        for &[start, run] in &self.runs {
            if start < last_end || run == 0 || start + run > len {
                return Err(IoError::BadMask(format!("run [{start}, {run}]")));
            }
            mask[start..start + run].iter_mut().for_each(|m| *m = true);
            last_end = start + run;
        }
        Ok(mask)
    }
}

/// Boundary cells as `col_x,col_y,dist` (column index, row index, distance).
pub fn write_boundary_csv<W: Write>(ball: &MetricBall, d: &DistanceField, mut out: W) -> Result<(), IoError> {
    writeln!(out, "col_x,col_y,dist")?;
    for &c in &ball.boundary {
        writeln!(out, "{},{},{}", c % ball.n, c / ball.n, d.at(c))?;
    }
    out.flush()?;
    Ok(())
}

pub const ESTIMATE_LABEL: &str = "box-counting estimate of dim_H";

pub fn write_estimate_csv<W: Write>(est: &DimensionEstimate, mut out: W) -> Result<(), IoError> {
    writeln!(out, "scale,count,log_scale,log_count")?;
    for [s, c, ls, lc] in est.rows() {
        writeln!(out, "{s},{c},{ls},{lc}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub label: String,
    pub slope: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub slope_drop_coarsest: Option<f64>,
    pub slope_drop_finest: Option<f64>,
}

impl EstimateSummary {
    pub fn of(est: &DimensionEstimate) -> Self {
        let lo = est.scales.last().copied().unwrap_or(f64::NAN);
        let hi = est.scales.first().copied().unwrap_or(f64::NAN);
        EstimateSummary {
            label: ESTIMATE_LABEL.to_string(),
            slope: est.slope,
            stderr: est.slope_stderr,
            r_squared: est.r_squared,
            window: (lo, hi),
            slope_drop_coarsest: est.slope_drop_coarsest,
            slope_drop_finest: est.slope_drop_finest,
        }
    }
}

/// Whitespace-separated two-column curve.
pub fn write_plot_data<W: Write>(xy: &[(f64, f64)], mut out: W) -> Result<(), IoError> {
    for (x, y) in xy {
        writeln!(out, "{x} {y}")?;
    }
    out.flush()?;
    Ok(())
}
