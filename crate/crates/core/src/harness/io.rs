//! Binary matrix files and PGM images.
//!
//! Matrix format: one JSON header line
//! `{"dims":[rows,cols],"dtype":"f64","layout":"row-major","endianness":"little"}`
//! terminated by `\n`, then `rows * cols` little-endian IEEE-754 doubles.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ObjectField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dims: [usize; 2],
    dtype: String,
    layout: String,
    endianness: String,
}

/// Row-major matrix as read from or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_mat(m: MatRef<'_, f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn write_matrix(path: &Path, m: &MatrixData) -> Result<()> {
    if m.data.len() != m.rows * m.cols {
        return Err(Error::mismatch("matrix data", m.rows * m.cols, m.data.len()));
    }
    let header = Header {
        dims: [m.rows, m.cols],
        dtype: "f64".into(),
        layout: "row-major".into(),
        endianness: "little".into(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<MatrixData> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(format_error(path, "missing header line"));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| format_error(path, format!("bad header: {e}")))?;
    if header.dtype != "f64" || header.layout != "row-major" || header.endianness != "little" {
        return Err(format_error(path, format!("unsupported encoding {header:?}")));
    }
    let [rows, cols] = header.dims;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| format_error(path, "dims overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(format_error(
            path,
            format!("expected {} data bytes, found {}", count * 8, bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(MatrixData { rows, cols, data })
}

/// Field values as an `n_y x n_x` matrix, grid rows first.
pub fn field_matrix(field: &ObjectField) -> MatrixData {
    MatrixData {
        rows: field.grid().n_y(),
        cols: field.grid().n_x(),
        data: field.rho().to_vec(),
    }
}

/// 8-bit grayscale bytes, min-max normalized; a constant field maps to mid gray.
pub fn to_gray(values: &[f64], clamp_negative: bool) -> Vec<u8> {
    let vals: Vec<f64> = values
        .iter()
        .map(|&v| if clamp_negative { v.max(0.0) } else { v })
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; vals.len()];
    }
    vals.iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Binary PGM (P5). Image row `i` is matrix row `i`.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::mismatch("pgm pixels", width * height, pixels.len()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_error(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(format_error(path, "not an 8-bit P5 image"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_error(path, "bad PGM size"));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let pixels = bytes.get(pos..).unwrap_or_default().to_vec();
    if pixels.len() != w * h {
        return Err(format_error(path, "PGM pixel count mismatch"));
    }
    Ok((w, h, pixels))
}

/// Writes `path` as a PGM and the raw field next to it with a `.bin` extension.
/// Returns the path of the raw file.
pub fn export_image(field: &ObjectField, path: &Path, clamp_negative: bool) -> Result<PathBuf> {
    let m = field_matrix(field);
    write_pgm(path, m.cols, m.rows, &to_gray(&m.data, clamp_negative))?;
    let raw = path.with_extension("bin");
    write_matrix(&raw, &m)?;
    Ok(raw)
}

/// Renders a stored `n_y x n_x` matrix to PGM.
pub fn export_matrix_image(input: &Path, output: &Path, clamp_negative: bool) -> Result<()> {
    let m = read_matrix(input)?;
    write_pgm(output, m.cols, m.rows, &to_gray(&m.data, clamp_negative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObjectGrid;

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = MatrixData {
            rows: 2,
            cols: 3,
            data: vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, -2.5, std::f64::consts::PI],
        };
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.rows, 2);
        assert!(back.data.iter().zip(&m.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        let text = std::fs::read(&path).unwrap();
        let newline = text.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(
            std::str::from_utf8(&text[..newline]).unwrap(),
            r#"{"dims":[2,3],"dtype":"f64","layout":"row-major","endianness":"little"}"#
        );
        assert_eq!(text.len() - newline - 1, 48);
    }

    #[test]
    fn truncated_matrix_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_matrix(&path, &MatrixData::column(&[1.0, 2.0])).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_matrix(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn gray_mapping() {
        assert_eq!(to_gray(&[0.0, 1.0, 1.0, 0.0], false), vec![0, 255, 255, 0]);
        assert_eq!(to_gray(&[3.0; 5], false), vec![128; 5]);
        assert_eq!(to_gray(&[-1.0, 0.0, 2.0], true), vec![0, 0, 255]);
    }

    #[test]
    fn export_writes_pgm_and_raw() {
        let dir = tempfile::tempdir().unwrap();
        let grid = ObjectGrid::new(2, 2, 1.0, 1.0, 0.0).unwrap();
        let field = ObjectField::new(grid, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let path = dir.path().join("f.pgm");
        let raw = export_image(&field, &path, false).unwrap();
        let (w, h, px) = read_pgm(&path).unwrap();
        assert_eq!((w, h, px), (2, 2, vec![0, 255, 255, 0]));
        assert_eq!(read_matrix(&raw).unwrap().data, field.rho());
    }
}
