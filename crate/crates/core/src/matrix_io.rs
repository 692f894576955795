//! Matrix persistence.
//!
//! Two formats are shared by every module:
//!
//! * CSV: first line `rows,cols`, then one line per row, values separated by
//!   commas and printed with 17 significant digits.
//! * Binary: a 16-byte header holding `rows` and `cols` as little-endian `u64`,
//!   followed by `rows * cols` little-endian `f64` values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Formats a real with 17 significant digits, independent of locale.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "{},{}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_real(m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))??;
    let (rows, cols) = parse_header(&header)?;
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse(format!("bad number `{tok}`")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!("row has {} entries, expected {cols}", data.len() - before)));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!("expected {rows} rows, found {}", data.len() / cols.max(1))));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut it = line.trim().split(',');
    let mut next = || -> Result<usize> {
        it.next().and_then(|t| t.trim().parse().ok()).ok_or_else(|| Error::Parse(format!("bad header `{line}`")))
    };
    Ok((next()?, next()?))
}

pub fn write_bin<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_bin<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut u = [0u8; 8];
    r.read_exact(&mut u)?;
    let rows = u64::from_le_bytes(u) as usize;
    r.read_exact(&mut u)?;
    let cols = u64::from_le_bytes(u) as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| Error::Parse("matrix header overflows".into()))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u)?;
        data.push(f64::from_le_bytes(u));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn save_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_csv(File::open(path)?)
}

pub fn save_bin(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bin(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_bin(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_bin(BufReader::new(File::open(path)?))
}

/// Loads either format, choosing by extension (`.csv` or anything else as binary).
pub fn load_any(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let p = path.as_ref();
    match p.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => load_csv(p),
        _ => load_bin(p),
    }
}

pub fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2,3\n"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_csv(&buf[..]).unwrap(), m);
    }

    #[test]
    fn binary_header() {
        let m = DMatrix::from_row_slice(1, 2, &[1.5, -2.0]);
        let mut buf = Vec::new();
        write_bin(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 16);
        assert_eq!(&buf[0..8], &1u64.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(read_csv("2,2\n1,2\n3\n".as_bytes()).is_err());
        assert!(read_csv("2,2\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trips_are_lossless(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let v = crate::rng::gaussian_vec(&mut crate::rng::stream(seed), rows * cols);
            let m = DMatrix::from_row_slice(rows, cols, &v) * 1e3;
            let mut a = Vec::new();
            write_csv(&mut a, &m).unwrap();
            prop_assert_eq!(read_csv(&a[..]).unwrap(), m.clone());
            let mut b = Vec::new();
            write_bin(&mut b, &m).unwrap();
            prop_assert_eq!(read_bin(&b[..]).unwrap(), m);
        }
    }
}
