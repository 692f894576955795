//! 8-bit binary PGM (P5) images. Values in `[0, 1]` map linearly to gray
//! `round(255 v)`; values outside are clamped and NaN is written as 0.

use std::io::{Read, Write};

use crate::error::{dim_err, Error, Result};

pub fn to_gray(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

pub fn from_gray(g: u8) -> f64 {
    g as f64 / 255.0
}

/// Writes row-major `values` of a `width × height` image.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return dim_err(format!("{} values for a {width}x{height} image", values.len()));
    }
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = values.iter().map(|&v| to_gray(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a P5 image as `(width, height, values in [0, 1])`.
pub fn read_pgm<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
            if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            }
            pos += 1;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::Parse("only 8-bit P5 images are supported".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM size `{s}`")));
    let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = buf.get(pos..pos + width * height).ok_or_else(|| Error::Parse("truncated PGM data".into()))?;
    Ok((width, height, data.iter().map(|&g| from_gray(g)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_scaling() {
        let v = vec![0.0, 1.0, 0.5, f64::NAN, 2.0, -1.0];
        let mut buf = Vec::new();
        write_pgm(&mut buf, 3, 2, &v).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        let (w, h, back) = read_pgm(&buf[..]).unwrap();
        assert_eq!((w, h), (3, 2));
        let gray: Vec<u8> = back.iter().map(|&x| (x * 255.0).round() as u8).collect();
        assert_eq!(gray, vec![0, 255, 128, 0, 255, 0]);
        assert!(write_pgm(&mut Vec::new(), 2, 2, &v).is_err());
    }
}
