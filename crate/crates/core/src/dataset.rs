//! Point datasets and their on-disk formats.
//!
//! * CSV: one point per row, `d` comma-separated columns, no header.
//! * Binary: little-endian `u64` row count `m`, `u64` column count `d`,
//!   then `m * d` little-endian `f64` values in row-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// An ordered list of points in `R^d`. Order matters: chunking is positional.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    dim: usize,
    points: Vec<Vec<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(dim: usize, points: Vec<Vec<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dataset dimension must be positive"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("dataset point"));
            }
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<T>> {
        self.points
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|x| x.as_f64().to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        let mut dim = None;
        for (idx, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(col, field)| {
                    field
                        .trim()
                        .parse::<f64>()
                        .map(T::of)
                        .map_err(|e| Error::parse(format!("line {lineno}, column {}", col + 1), e.to_string()))
                })
                .collect::<Result<Vec<T>>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::parse(
                        format!("line {lineno}"),
                        format!("expected {d} columns, found {}", row.len()),
                    ))
                }
                _ => {}
            }
            points.push(row);
        }
        let dim = dim.ok_or_else(|| Error::parse("csv", "no data rows"))?;
        Self::new(dim, points)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.points.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for p in &self.points {
            for x in p {
                w.write_all(&x.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = |name: &str, r: &mut R| -> Result<usize> {
            r.read_exact(&mut word)
                .map_err(|e| Error::parse(format!("binary header ({name})"), e.to_string()))?;
            usize::try_from(u64::from_le_bytes(word))
                .map_err(|e| Error::parse(format!("binary header ({name})"), e.to_string()))
        };
        let m = header("m", &mut r)?;
        let d = header("d", &mut r)?;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() != m * d * 8 {
            return Err(Error::parse(
                "binary body",
                format!("expected {} bytes for {m}x{d} values, found {}", m * d * 8, buf.len()),
            ));
        }
        let values: Vec<T> = buf
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        let points = values.chunks(d.max(1)).take(m).map(<[T]>::to_vec).collect();
        Self::new(d, points)
    }

    /// Reads CSV, or the binary format when the extension is `.bin` or `.f64`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        if is_binary_path(path) {
            Self::read_binary(BufReader::new(file))
        } else {
            Self::read_csv(file)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        if is_binary_path(path) {
            self.write_binary(&mut w)?;
        } else {
            self.write_csv(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_binary_path(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "f64"))
}
