//! Matrix file formats shared across the crate.
//!
//! Binary (`.blrn`): magic `BLRN`, `u32` version (1), `u32` rows, `u32` cols,
//! `u8` scalar kind (0 = complex f64), then the payload row-major with
//! interleaved re/im. Everything little-endian.
//!
//! CSV: one line per matrix row, entries written as `re+imj` / `re-imj`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

pub const MAGIC: &[u8; 4] = b"BLRN";
pub const VERSION: u32 = 1;
pub const KIND_COMPLEX_F64: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// `.csv` selects CSV, anything else the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn write_matrix_binary<W: Write>(mut w: W, m: &CMatrix) -> Result<()> {
    let rows = u32::try_from(m.nrows())
        .map_err(|_| Error::InvalidDimension("too many rows for BLRN".into()))?;
    let cols = u32::try_from(m.ncols())
        .map_err(|_| Error::InvalidDimension("too many columns for BLRN".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    w.write_all(&[KIND_COMPLEX_F64])?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Parse(format!("truncated header while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_matrix_binary<R: Read>(mut r: R) -> Result<CMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Parse("file too short for BLRN magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!("bad magic {magic:?}, expected \"BLRN\"")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported BLRN version {version}")));
    }
    let rows = read_u32(&mut r, "rows")? as usize;
    let cols = read_u32(&mut r, "cols")? as usize;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)
        .map_err(|_| Error::Parse("truncated header while reading scalar kind".into()))?;
    if kind[0] != KIND_COMPLEX_F64 {
        return Err(Error::Parse(format!("unsupported scalar kind {}", kind[0])));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Parse(format!("empty matrix {rows}x{cols}")));
    }
    let mut m = CMatrix::zeros(rows, cols);
    let mut buf = [0u8; 16];
    for row in 0..rows {
        for col in 0..cols {
            r.read_exact(&mut buf).map_err(|_| {
                Error::Parse(format!(
                    "payload truncated at row {row}, col {col} (header says {rows}x{cols})"
                ))
            })?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Parse(format!("non-finite entry at row {row}, col {col}")));
            }
            m[(row, col)] = Complex64::new(re, im);
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Parse(format!(
            "trailing bytes after {rows}x{cols} payload"
        )));
    }
    Ok(m)
}

/// Format as `re+imj` with shortest round-trip float text.
pub fn format_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{}-{}j", z.re, -z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

/// Parse `re+imj`, `re-imj`, a bare real, or a bare `imj`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    let Some(body) = s.strip_suffix('j').or_else(|| s.strip_suffix('i')) else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    // The split sign is the last +/- that is not leading and not an exponent sign.
    let split = (1..bytes.len()).rev().find(|&p| {
        (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E')
    });
    match split {
        Some(p) => {
            let re = body[..p].parse::<f64>().ok()?;
            let im = body[p..].trim_start_matches('+');
            let im = if im.is_empty() || im == "-" {
                format!("{im}1")
            } else {
                im.to_string()
            };
            Some(Complex64::new(re, im.parse::<f64>().ok()?))
        }
        None => {
            let im = if body.is_empty() { "1" } else { body };
            Some(Complex64::new(0.0, im.parse::<f64>().ok()?))
        }
    }
}

pub fn write_matrix_csv<W: Write>(mut w: W, m: &CMatrix) -> Result<()> {
    for r in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|c| format_complex(m[(r, c)])).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV matrix. Blank lines and lines starting with `#` are skipped.
pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<CMatrix> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row_idx = rows.len();
        let mut row = Vec::new();
        for (col, field) in t.split(',').enumerate() {
            let z = parse_complex(field).ok_or_else(|| {
                Error::Parse(format!("bad entry {field:?} at row {row_idx}, col {col}"))
            })?;
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Parse(format!(
                    "non-finite entry at row {row_idx}, col {col}"
                )));
            }
            row.push(z);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "row {row_idx} has {} entries, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Parse("empty CSV matrix".into()));
    }
    let ncols = rows[0].len();
    Ok(CMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub fn save_matrix(path: &Path, m: &CMatrix, format: MatrixFormat) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Binary => write_matrix_binary(w, m),
        MatrixFormat::Csv => write_matrix_csv(w, m),
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<CMatrix> {
    let r = BufReader::new(File::open(path)?);
    match format {
        MatrixFormat::Binary => read_matrix_binary(r),
        MatrixFormat::Csv => read_matrix_csv(r),
    }
}
