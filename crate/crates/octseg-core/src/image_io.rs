//! Scan loading, result serialization and overlay rendering.
//!
//! Grayscale input arrives as PGM (both the ASCII `P2` and binary `P5`
//! flavors, 8- or 16-bit) or as 8/16-bit grayscale PNG. Samples are
//! normalized to `[0, 1]` by the format's declared maximum, so a round trip
//! through [`save_pgm`] reproduces the original samples bit for bit.
//! Results leave as a boundary CSV, a JSON document, or a color overlay
//! PNG. Every writer goes through a temp-file-and-rename so readers never
//! observe a half-written file.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Boundary, BoundaryLabel};

/// One grayscale B-scan. Row 0 is the top of the image (vitreous side);
/// intensities lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BScan {
    pub rows: usize,
    pub cols: usize,
    pub source_id: String,
    data: Vec<f64>,
}

impl BScan {
    /// Wraps a row-major intensity buffer, rejecting empty dimensions,
    /// size mismatches and samples outside `[0, 1]`.
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != rows * cols {
            return Err(Error::PixelCountMismatch {
                rows,
                cols,
                got: data.len(),
            });
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::IntensityOutOfRange {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            source_id: source_id.into(),
            data,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The full pipeline leans on fixed pixel constants; images below this
    /// size cannot carry the structures those constants assume.
    pub fn ensure_min_size(&self, min_rows: usize, min_cols: usize) -> Result<()> {
        if self.rows < min_rows || self.cols < min_cols {
            return Err(Error::ImageTooSmall {
                rows: self.rows,
                cols: self.cols,
                min_rows,
                min_cols,
            });
        }
        Ok(())
    }
}

/// Loads a PGM or grayscale PNG file and normalizes it to `[0, 1]`.
pub fn load_grayscale(path: &Path) -> Result<BScan> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let source_id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());

    if bytes.starts_with(b"\x89PNG") {
        load_png(&bytes, path, source_id)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes, path, source_id)
    } else {
        Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: "expected a PGM (P2/P5) or PNG file".to_string(),
        })
    }
}

fn load_png(bytes: &[u8], path: &Path, source_id: String) -> Result<BScan> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(
        |e| Error::MalformedImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    )?;
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            if w == 0 || h == 0 {
                return Err(Error::EmptyImage);
            }
            let data = g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            BScan::new(h, w, data, source_id)
        }
        image::DynamicImage::ImageLuma16(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            if w == 0 || h == 0 {
                return Err(Error::EmptyImage);
            }
            let data = g
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect();
            BScan::new(h, w, data, source_id)
        }
        other => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: format!(
                "PNG must be 8- or 16-bit grayscale without alpha, got {:?}",
                other.color()
            ),
        }),
    }
}

struct PgmReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Next whitespace-separated header token; `#` comments run to end of
    /// line.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }
}

fn parse_pgm(bytes: &[u8], path: &Path, source_id: String) -> Result<BScan> {
    let malformed = |reason: &str| Error::MalformedImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut reader = PgmReader::new(bytes);

    let magic = reader.token().ok_or_else(|| malformed("missing magic"))?;
    let binary = magic == b"P5";

    let mut header_num = |name: &str| -> Result<u64> {
        let tok = reader
            .token()
            .ok_or_else(|| malformed(&format!("missing {name}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| malformed(&format!("{name} is not a non-negative integer")))
    };

    let width = header_num("width")? as usize;
    let height = header_num("height")? as usize;
    let maxval = header_num("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(&format!("maxval {maxval} is outside 1..=65535")));
    }

    let count = width * height;
    let mut samples = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let data_start = reader.pos + 1;
        let wide = maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(data_start..data_start + needed)
            .ok_or_else(|| malformed("raster is shorter than the header promises"))?;
        if wide {
            for pair in raster.chunks_exact(2) {
                samples.push(u16::from_be_bytes([pair[0], pair[1]]) as u64);
            }
        } else {
            samples.extend(raster.iter().map(|&b| b as u64));
        }
    } else {
        for _ in 0..count {
            let tok = reader
                .token()
                .ok_or_else(|| malformed("raster has fewer samples than the header promises"))?;
            let v = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| malformed("raster sample is not a non-negative integer"))?;
            samples.push(v);
        }
    }

    let mut data = Vec::with_capacity(count);
    for &s in &samples {
        if s > maxval {
            return Err(malformed(&format!("sample {s} exceeds maxval {maxval}")));
        }
        data.push(s as f64 / maxval as f64);
    }
    BScan::new(height, width, data, source_id)
}

/// Writes the scan as a binary (`P5`) PGM, de-normalizing each intensity by
/// `max_value`. Loading the written file reproduces the de-normalized
/// samples exactly.
pub fn save_pgm(scan: &BScan, path: &Path, max_value: u16) -> Result<()> {
    if max_value == 0 {
        return Err(Error::Config("PGM max value must be positive".to_string()));
    }
    let mut out = Vec::with_capacity(scan.rows * scan.cols * 2 + 32);
    out.extend_from_slice(format!("P5\n{} {}\n{}\n", scan.cols, scan.rows, max_value).as_bytes());
    let max = max_value as f64;
    for &v in scan.data() {
        let s = (v * max).round().clamp(0.0, max) as u16;
        if max_value > 255 {
            out.extend_from_slice(&s.to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    atomic_write(path, &out)
}

fn boundary_triple_cols(ilm: &Boundary, rnfl: &Boundary, rpe: &Boundary) -> Result<usize> {
    let cols = ilm.cols();
    if cols == 0 {
        return Err(Error::EmptyBoundary);
    }
    for other in [rnfl.cols(), rpe.cols()] {
        if other != cols {
            return Err(Error::ColumnCountMismatch {
                left: cols,
                right: other,
            });
        }
    }
    Ok(cols)
}

/// Writes the three boundaries as CSV with the header
/// `column,ilm_row,rnfl_row,rpe_row`.
pub fn write_boundaries_csv(
    path: &Path,
    ilm: &Boundary,
    rnfl: &Boundary,
    rpe: &Boundary,
) -> Result<()> {
    let cols = boundary_triple_cols(ilm, rnfl, rpe)?;
    let mut out = String::with_capacity(cols * 16 + 32);
    out.push_str("column,ilm_row,rnfl_row,rpe_row\n");
    for c in 0..cols {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c, ilm.row[c], rnfl.row[c], rpe.row[c]
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Reads a boundary CSV produced by [`write_boundaries_csv`] (ground-truth
/// tables from the phantom generator use the same layout).
pub fn read_boundaries_csv(path: &Path) -> Result<(Boundary, Boundary, Boundary)> {
    let malformed = |reason: String| Error::MalformedTable {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed("empty file".into()))?;
    if header.trim() != "column,ilm_row,rnfl_row,rpe_row" {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let (mut ilm, mut rnfl, mut rpe) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(format!("line {} has {} fields", i + 2, fields.len())));
        }
        let parse = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| malformed(format!("line {}: {:?} is not a row index", i + 2, s)))
        };
        let col = parse(fields[0])?;
        if col != ilm.len() {
            return Err(malformed(format!(
                "line {}: expected column {}, got {}",
                i + 2,
                ilm.len(),
                col
            )));
        }
        ilm.push(parse(fields[1])?);
        rnfl.push(parse(fields[2])?);
        rpe.push(parse(fields[3])?);
    }
    if ilm.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    Ok((
        Boundary::new(BoundaryLabel::Ilm, ilm, 0.0),
        Boundary::new(BoundaryLabel::Rnfl, rnfl, 0.0),
        Boundary::new(BoundaryLabel::Rpe, rpe, 0.0),
    ))
}

/// Serializes any result document as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Renders the scan as a grayscale background with the three boundaries as
/// 1-px polylines: ILM red, RNFL green, RPE blue, drawn in that order so
/// later boundaries win overlapping pixels.
pub fn write_overlay(
    path: &Path,
    scan: &BScan,
    ilm: &Boundary,
    rnfl: &Boundary,
    rpe: &Boundary,
) -> Result<()> {
    let cols = boundary_triple_cols(ilm, rnfl, rpe)?;
    if cols != scan.cols {
        return Err(Error::ColumnCountMismatch {
            left: scan.cols,
            right: cols,
        });
    }
    for b in [ilm, rnfl, rpe] {
        for (c, &r) in b.row.iter().enumerate() {
            if r >= scan.rows {
                return Err(Error::BoundaryOutOfBounds {
                    col: c,
                    row: r,
                    rows: scan.rows,
                });
            }
        }
    }

    let mut img = image::RgbImage::new(scan.cols as u32, scan.rows as u32);
    for r in 0..scan.rows {
        for c in 0..scan.cols {
            let g = (scan.at(r, c) * 255.0).round().clamp(0.0, 255.0) as u8;
            img.put_pixel(c as u32, r as u32, image::Rgb([g, g, g]));
        }
    }
    for (b, color) in [
        (ilm, image::Rgb([255u8, 0, 0])),
        (rnfl, image::Rgb([0, 255, 0])),
        (rpe, image::Rgb([0, 0, 255])),
    ] {
        for c in 0..cols {
            let r = b.row[c];
            // Bridge row jumps at this column so the polyline stays connected.
            if c > 0 {
                let prev = b.row[c - 1];
                let (lo, hi) = (prev.min(r), prev.max(r));
                for rr in lo..=hi {
                    img.put_pixel(c as u32, rr as u32, color);
                }
            }
            img.put_pixel(c as u32, r as u32, color);
        }
    }

    let mut bytes = Vec::new();
    img.write_to(
        &mut std::io::Cursor::new(&mut bytes),
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    atomic_write(path, &bytes)
}

/// Writes through a temp file in the destination directory and renames it
/// into place, so concurrent readers never see partial content.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
