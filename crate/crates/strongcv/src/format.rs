//! Flat little-endian binary files for coefficient tables and trained
//! control variates.
//!
//! Table (`SCVTBL01`):
//!
//! ```text
//! magic      8 bytes  "SCVTBL01"
//! kind       u8       0 = global, 1 = piecewise
//! degree     u32
//! dim        u32
//! payoff     u8       1 if f is a basis function
//! radius     f64      piecewise half-width (0 for global)
//! cells      u32      piecewise cells per axis (0 for global)
//! bounded    u8       1 if a truncation bound follows
//! bound      f64
//! J          u32
//! K          u32
//! size       u32      basis length
//! values     f64 × J·K·size, (j, k)-major
//! ```
//!
//! Control variate (`SCVMDL01`): magic, approach `u8` (0 integral,
//! 1 series), `J u32`, `T f64`, `seed u64`, `N u64`, `stream_base u64`,
//! followed by a complete table record.

use std::io::{self, Read, Write};

use strongcv_core::control_variates::{Approach, ControlVariateModel, TrainingMeta};
use strongcv_core::{BasisSpec, CoefficientTable, TimeGrid};

pub const TABLE_MAGIC: &[u8; 8] = b"SCVTBL01";
pub const MODEL_MAGIC: &[u8; 8] = b"SCVMDL01";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}")]
    Magic { expected: &'static str },
    #[error("invalid file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] strongcv_core::Error),
}

fn u8_out<W: Write>(w: &mut W, v: u8) -> io::Result<()> {
    w.write_all(&[v])
}

fn u32_out<W: Write>(w: &mut W, v: usize) -> Result<(), FormatError> {
    let v = u32::try_from(v).map_err(|_| FormatError::Invalid(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn u64_out<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn f64_out<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn bytes_in<R: Read, const N: usize>(r: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn u8_in<R: Read>(r: &mut R) -> io::Result<u8> {
    Ok(bytes_in::<R, 1>(r)?[0])
}

fn u32_in<R: Read>(r: &mut R) -> io::Result<usize> {
    Ok(u32::from_le_bytes(bytes_in(r)?) as usize)
}

fn u64_in<R: Read>(r: &mut R) -> io::Result<u64> {
    Ok(u64::from_le_bytes(bytes_in(r)?))
}

fn f64_in<R: Read>(r: &mut R) -> io::Result<f64> {
    Ok(f64::from_le_bytes(bytes_in(r)?))
}

fn flag_in<R: Read>(r: &mut R, what: &str) -> Result<bool, FormatError> {
    match u8_in(r)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(FormatError::Invalid(format!("{what} flag must be 0 or 1, got {v}"))),
    }
}

pub fn write_table<W: Write>(w: &mut W, table: &CoefficientTable) -> Result<(), FormatError> {
    w.write_all(TABLE_MAGIC)?;
    match *table.spec() {
        BasisSpec::Global {
            degree,
            dim,
            include_payoff,
        } => {
            u8_out(w, 0)?;
            u32_out(w, degree)?;
            u32_out(w, dim)?;
            u8_out(w, include_payoff as u8)?;
            f64_out(w, 0.0)?;
            u32_out(w, 0)?;
        }
        BasisSpec::Piecewise {
            degree,
            dim,
            radius,
            cells_per_axis,
        } => {
            u8_out(w, 1)?;
            u32_out(w, degree)?;
            u32_out(w, dim)?;
            u8_out(w, 0)?;
            f64_out(w, radius)?;
            u32_out(w, cells_per_axis)?;
        }
    }
    u8_out(w, table.bound().is_some() as u8)?;
    f64_out(w, table.bound().unwrap_or(0.0))?;
    u32_out(w, table.steps())?;
    u32_out(w, table.outputs())?;
    u32_out(w, table.spec().size())?;
    for v in table.raw() {
        f64_out(w, *v)?;
    }
    Ok(())
}

pub fn read_table<R: Read>(r: &mut R) -> Result<CoefficientTable, FormatError> {
    if &bytes_in::<R, 8>(r)? != TABLE_MAGIC {
        return Err(FormatError::Magic { expected: "SCVTBL01" });
    }
    let kind = u8_in(r)?;
    let degree = u32_in(r)?;
    let dim = u32_in(r)?;
    let include_payoff = flag_in(r, "payoff")?;
    let radius = f64_in(r)?;
    let cells = u32_in(r)?;
    let spec = match kind {
        0 => BasisSpec::Global {
            degree,
            dim,
            include_payoff,
        },
        1 => BasisSpec::piecewise(degree, dim, radius, cells)?,
        k => return Err(FormatError::Invalid(format!("unknown basis kind {k}"))),
    };
    let bounded = flag_in(r, "bound")?;
    let bound = f64_in(r)?;
    let steps = u32_in(r)?;
    let outputs = u32_in(r)?;
    let size = u32_in(r)?;
    if size != spec.size() {
        return Err(FormatError::Invalid(format!(
            "basis size {size} does not match the stored basis ({})",
            spec.size()
        )));
    }
    let count = steps
        .checked_mul(outputs)
        .and_then(|v| v.checked_mul(size))
        .ok_or_else(|| FormatError::Invalid("table dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        values.push(f64_in(r)?);
    }
    Ok(CoefficientTable::new(spec, steps, outputs, bounded.then_some(bound), values)?)
}

pub fn write_model<W: Write>(w: &mut W, cv: &ControlVariateModel) -> Result<(), FormatError> {
    w.write_all(MODEL_MAGIC)?;
    u8_out(
        w,
        match cv.approach() {
            Approach::Integral => 0,
            Approach::Series => 1,
        },
    )?;
    u32_out(w, cv.grid().steps())?;
    f64_out(w, cv.grid().horizon())?;
    let meta = cv.meta();
    u64_out(w, meta.seed)?;
    u64_out(w, meta.paths)?;
    u64_out(w, meta.stream_base)?;
    write_table(w, cv.table())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<ControlVariateModel, FormatError> {
    if &bytes_in::<R, 8>(r)? != MODEL_MAGIC {
        return Err(FormatError::Magic { expected: "SCVMDL01" });
    }
    let approach = match u8_in(r)? {
        0 => Approach::Integral,
        1 => Approach::Series,
        a => return Err(FormatError::Invalid(format!("unknown approach {a}"))),
    };
    let steps = u32_in(r)?;
    let horizon = f64_in(r)?;
    let seed = u64_in(r)?;
    let paths = u64_in(r)?;
    let stream_base = u64_in(r)?;
    let table = read_table(r)?;
    let grid = TimeGrid::new(steps, horizon)?;
    Ok(ControlVariateModel::new(
        approach,
        table,
        grid,
        TrainingMeta {
            paths,
            seed,
            stream_base,
        },
    )?)
}
