//! Matrix persistence and grayscale image ingestion.
//!
//! Two matrix formats are supported:
//!
//! * **binary**: the 4 magic bytes `RPCA`, a little-endian `u32` version (1),
//!   `u64` rows, `u64` cols, then `rows * cols` little-endian `f64` values in
//!   row-major order. The header is 24 bytes.
//! * **csv**: one line per row, `,` delimiter, `.` decimal separator, no
//!   header row. Values are written with the shortest representation that
//!   parses back to the same `f64`.
//!
//! Images are read from binary PGM (`P5`) files only. A stack of images is
//! vectorized column-major: pixel `(row, col)` of an `h x w` image lands at
//! index `col * h + row` of its column.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"RPCA";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// Picks a format from a file extension: `.csv` is CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "binary" | "bin" => Ok(MatrixFormat::Binary),
            other => Err(format!("unknown matrix format '{other}'")),
        }
    }
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MatrixFormat::Binary => decode_binary(&bytes),
        MatrixFormat::Csv => decode_csv(&bytes),
    }
}

pub fn save_matrix(m: &DenseMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        MatrixFormat::Binary => encode_binary(m),
        MatrixFormat::Csv => encode_csv(m).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_binary(m: &DenseMatrix) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader {
            offset: bytes.len() as u64,
            reason: format!("need {HEADER_LEN} header bytes, file has {}", bytes.len()),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::MalformedHeader {
            offset: 0,
            reason: "bad magic, expected \"RPCA\"".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::MalformedHeader {
            offset: 8,
            reason: format!("dimensions must be positive, got {rows}x{cols}"),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::MalformedHeader {
            offset: 8,
            reason: "rows * cols overflows".into(),
        })?;
    let found = (payload.len() / 8) as u64;
    if !payload.len().is_multiple_of(8) || found != expected {
        return Err(Error::PayloadMismatch { expected, found });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut m = DenseMatrix::zeros(rows, cols);
    for (idx, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                location: format!("byte {}", HEADER_LEN + 8 * idx),
            });
        }
        m[(idx / cols, idx % cols)] = v;
    }
    Ok(m)
}

pub fn encode_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            // `Display` for f64 is shortest-round-trip.
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn decode_csv(bytes: &[u8]) -> Result<DenseMatrix> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedHeader {
        offset: e.valid_up_to() as u64,
        reason: "invalid utf-8".into(),
    })?;
    let mut values = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0usize;
        for (colno, field) in line.split(',').enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: colno + 1,
                reason: format!("cannot parse '{field}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("line {}, column {}", lineno + 1, colno + 1),
                });
            }
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    column: n,
                    reason: format!("row has {n} fields, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::MalformedHeader {
        offset: 0,
        reason: "empty file".into(),
    })?;
    Ok(DenseMatrix::from_row_slice(rows, cols, &values))
}

/// An 8-bit-range grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Column-major vectorization.
    pub fn to_column(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.height * self.width);
        for c in 0..self.width {
            for r in 0..self.height {
                v.push(self.get(r, c));
            }
        }
        v
    }

    /// Inverse of [`GrayImage::to_column`].
    pub fn from_column(column: &[f64], height: usize, width: usize) -> Result<Self> {
        if column.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} cannot form a {height}x{width} image",
                column.len()
            )));
        }
        let mut pixels = vec![0.0; height * width];
        for c in 0..width {
            for r in 0..height {
                pixels[r * width + c] = column[c * height + r];
            }
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }
}

fn pgm_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::NotPgm {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a binary PGM. 16-bit images are rescaled to `[0, 255]`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(pgm_err(path, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(pgm_err(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(path, format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| pgm_err(path, format!("number out of range at byte {start}")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(pgm_err(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_err(path, format!("invalid maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(pgm_err(path, "missing separator after maxval")),
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bpp;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(pgm_err(
            path,
            format!("raster has {} bytes, expected {need}", raster.len()),
        ));
    }
    let pixels = if bpp == 1 {
        raster[..need].iter().map(|&b| b as f64).collect()
    } else {
        raster[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * 255.0 / maxval as f64)
            .collect()
    };
    Ok(GrayImage {
        height,
        width,
        pixels,
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Writes an 8-bit P5 image. Pixel values are rounded and clamped to `[0, 255]`.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let raster: Vec<u8> = img
        .pixels
        .iter()
        .map(|&p| p.round().clamp(0.0, 255.0) as u8)
        .collect();
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)
        .and_then(|_| w.write_all(&raster))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads PGM files and stacks their column-major vectorizations as columns.
///
/// Returns the `(height * width) x count` matrix together with the shared
/// image dimensions `(height, width)`.
pub fn stack_images<P: AsRef<Path>>(paths: &[P]) -> Result<(DenseMatrix, (usize, usize))> {
    let images = paths
        .iter()
        .map(|p| read_pgm(p).map(|img| (p.as_ref().to_path_buf(), img)))
        .collect::<Result<Vec<(PathBuf, GrayImage)>>>()?;
    let (h, w) = stack_dims(&images)?;
    let mut m = DenseMatrix::zeros(h * w, images.len());
    for (j, (_, img)) in images.iter().enumerate() {
        for (i, v) in img.to_column().into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok((m, (h, w)))
}

fn stack_dims(images: &[(PathBuf, GrayImage)]) -> Result<(usize, usize)> {
    let (_, first) = images
        .first()
        .ok_or_else(|| Error::Empty("no images to stack".into()))?;
    let (h, w) = (first.height, first.width);
    for (path, img) in images {
        if img.height != h || img.width != w {
            return Err(Error::ImageSizeMismatch {
                path: path.clone(),
                expected_h: h,
                expected_w: w,
                found_h: img.height,
                found_w: img.width,
            });
        }
    }
    Ok((h, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp_pgm(dir: &Path, name: &str, h: usize, w: usize, px: &[u8]) -> PathBuf {
        let p = dir.join(name);
        let mut bytes = format!("P5\n# test image\n{w} {h}\n255\n").into_bytes();
        bytes.extend_from_slice(px);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn csv_two_by_two() {
        let m = decode_csv(b"1,2\n3,4").unwrap();
        assert_eq!(m, DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn empty_csv_is_malformed_header() {
        let err = decode_csv(b"").unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }), "{err}");
        assert!(err.to_string().contains("malformed header"));
    }

    #[test]
    fn empty_binary_is_malformed_header() {
        let err = decode_binary(b"").unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }));
    }

    #[test]
    fn csv_reports_position_of_bad_field() {
        match decode_csv(b"1,2\n3,x\n").unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            decode_csv(b"1,2\n3\n").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
        assert!(matches!(
            decode_csv(b"1,NaN\n").unwrap_err(),
            Error::NonFinite { .. }
        ));
    }

    #[test]
    fn identity_binary_layout() {
        let bytes = encode_binary(&DenseMatrix::identity(2, 2));
        assert_eq!(bytes.len(), 24 + 32);
        assert_eq!(&bytes[..4], b"RPCA");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn binary_three_by_two_round_trip() {
        let m = DenseMatrix::from_row_slice(3, 2, &[1.5, -2.0, 0.1, 1e-300, 7.0, -0.0]);
        let back = decode_binary(&encode_binary(&m)).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // row-major payload: second value is m[(0, 1)]
        let bytes = encode_binary(&m);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), -2.0);
    }

    #[test]
    fn binary_payload_mismatch_and_nonfinite() {
        let mut bytes = encode_binary(&DenseMatrix::identity(2, 2));
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            decode_binary(&bytes).unwrap_err(),
            Error::PayloadMismatch {
                expected: 4,
                found: 3
            }
        ));
        let mut m = DenseMatrix::identity(2, 2);
        m[(1, 0)] = f64::INFINITY;
        match decode_binary(&encode_binary(&m)).unwrap_err() {
            Error::NonFinite { location } => assert_eq!(location, "byte 40"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_round_trip_of_point_one_is_exact() {
        let m = DenseMatrix::from_row_slice(1, 3, &[0.1, 1.0 / 3.0, -2.5e-17]);
        let back = decode_csv(encode_csv(&m).as_bytes()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn save_and_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = DenseMatrix::from_fn(4, 3, |i, j| (i as f64) - 0.3 * j as f64);
        for fmt in [MatrixFormat::Csv, MatrixFormat::Binary] {
            let p = dir.path().join(format!("m.{}", fmt.extension()));
            save_matrix(&m, &p, fmt).unwrap();
            assert_eq!(load_matrix(&p, MatrixFormat::from_path(&p)).unwrap(), m);
        }
        assert!(matches!(
            load_matrix(dir.path().join("missing.bin"), MatrixFormat::Binary),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn single_image_vectorizes_column_major() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp_pgm(dir.path(), "a.pgm", 2, 2, &[1, 2, 3, 4]);
        let (m, dims) = stack_images(&[p]).unwrap();
        assert_eq!(dims, (2, 2));
        assert_eq!(m.shape(), (4, 1));
        assert_eq!(
            m.column(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 3.0, 2.0, 4.0]
        );
    }

    #[test]
    fn mismatched_images_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_tmp_pgm(dir.path(), "a.pgm", 2, 2, &[1, 2, 3, 4]);
        let b = write_tmp_pgm(dir.path(), "b.pgm", 1, 2, &[1, 2]);
        assert!(matches!(
            stack_images(&[a, b]).unwrap_err(),
            Error::ImageSizeMismatch { .. }
        ));
        let c = dir.path().join("c.pgm");
        fs::write(&c, b"P2\n2 2\n255\n1 2 3 4\n").unwrap();
        assert!(matches!(
            stack_images(&[c]).unwrap_err(),
            Error::NotPgm { .. }
        ));
        assert!(matches!(
            stack_images::<PathBuf>(&[]).unwrap_err(),
            Error::Empty(_)
        ));
    }

    #[test]
    fn pgm_write_read_and_column_inverse() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage {
            height: 2,
            width: 3,
            pixels: vec![0.0, 10.4, 300.0, -5.0, 128.0, 255.0],
        };
        let p = dir.path().join("out.pgm");
        write_pgm(&img, &p).unwrap();
        let back = read_pgm(&p).unwrap();
        assert_eq!(back.pixels, vec![0.0, 10.0, 255.0, 0.0, 128.0, 255.0]);
        let col = img.to_column();
        assert_eq!(GrayImage::from_column(&col, 2, 3).unwrap(), img);
    }
}
