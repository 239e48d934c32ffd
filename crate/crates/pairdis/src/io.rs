//! On-disk formats: PDT1 tensor containers, small CSV tables, binary PGM.
//!
//! PDT1 layout: magic bytes `PDT1\n`, a one-line JSON header
//! `{"dtype":"f64","shape":[...]}`, then raw little-endian f64 values in
//! row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"PDT1\n";

#[derive(Deserialize)]
struct Header {
    dtype: String,
    shape: Vec<usize>,
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    writeln!(w, "{{\"dtype\":\"f64\",\"shape\":[{}]}}", dims.join(","))?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: Header = serde_json::from_str(header_line.trim())
        .map_err(|e| Error::Format(format!("{}: bad header: {}", path.display(), e)))?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!(
            "{}: unsupported dtype {}",
            path.display(),
            header.dtype
        )));
    }
    let n: usize = header.shape.iter().product();
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    let data: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(header.shape, data)
}

/// CSV with header "i,j,y", 0-based indices.
pub fn write_pairs_csv(path: &Path, pairs: &[(usize, usize, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,y")?;
    for (i, j, y) in pairs {
        writeln!(w, "{},{},{}", i, j, fmt_f64(*y))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        if ln == 0 {
            if line.trim() != "i,j,y" {
                return Err(Error::Format(format!(
                    "{}: expected header i,j,y",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let (a, b, c) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::Format(format!(
                    "{}: short row {}",
                    path.display(),
                    ln
                )))
            }
        };
        let i: usize = a
            .parse()
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
        let j: usize = b
            .parse()
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
        let y: f64 = c
            .parse()
            .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?;
        out.push((i, j, y));
    }
    Ok(out)
}

/// CSV with header "index,kind,value".
pub fn write_factors_csv(path: &Path, kind: &str, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,kind,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{},{}", i, kind, fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_factors_csv(path: &Path) -> Result<(String, Vec<f64>)> {
    let r = BufReader::new(File::open(path)?);
    let mut kind = String::new();
    let mut values = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        if ln == 0 {
            if line.trim() != "index,kind,value" {
                return Err(Error::Format(format!(
                    "{}: expected header index,kind,value",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("{}: bad row {}", path.display(), ln)));
        }
        kind = parts[1].trim().to_string();
        values.push(
            parts[2]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))?,
        );
    }
    Ok((kind, values))
}

/// Binary PGM (P5), 8-bit grayscale, values expected in [0,1].
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!(
            "pgm {}x{} needs {} pixels, got {}",
            width,
            height,
            width * height,
            pixels.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", width, height)?;
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Shortest round-trippable decimal for an f64.
pub fn fmt_f64(v: f64) -> String {
    let mut s = format!("{}", v);
    if s.parse::<f64>() != Ok(v) {
        s = format!("{:?}", v);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pdt");
        let t = Tensor::matrix(2, 3, vec![1.0, -2.5, 3e-7, 0.0, f64::MIN_POSITIVE, 9.9]).unwrap();
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pdt");
        std::fs::write(&p, b"NOPE\n{}").unwrap();
        assert!(read_tensor(&p).is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.csv");
        let pairs = vec![(0, 3, 1.0), (2, 7, 0.25)];
        write_pairs_csv(&p, &pairs).unwrap();
        assert_eq!(read_pairs_csv(&p).unwrap(), pairs);
    }
}
