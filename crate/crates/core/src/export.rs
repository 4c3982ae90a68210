//! Heatmap export: PGM (binary 16-bit or ASCII), CSV, and a JSON sidecar
//! carrying the grid pose and normalization constants.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::raster::RiskGrid;

pub const PGM_MAXVAL: u16 = 65535;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PgmFormat {
    /// Binary, two bytes per pixel, big-endian.
    #[default]
    P5,
    /// Plain text.
    P2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub grid: GridSpec,
    pub rows: usize,
    pub cols: usize,
    /// Raw value mapped to pixel 0.
    pub min: f64,
    /// Raw value mapped to `maxval`.
    pub max: f64,
    pub maxval: u16,
    pub row_order: String,
}

impl HeatmapMeta {
    pub fn of(grid: &RiskGrid) -> Self {
        let (min, max) = grid.min_max();
        Self {
            grid: grid.grid,
            rows: grid.rows(),
            cols: grid.cols(),
            min,
            max,
            maxval: PGM_MAXVAL,
            row_order: "row-major, row 0 at local +y edge, column 0 at local -x edge".into(),
        }
    }

    /// Recovers an approximate raw value from a pixel.
    pub fn denormalize(&self, pixel: u16) -> f64 {
        self.min + (self.max - self.min) * f64::from(pixel) / f64::from(self.maxval)
    }
}

/// Min-max normalized pixels; a flat grid maps to zeros.
pub fn normalize(grid: &RiskGrid) -> Vec<u16> {
    let (min, max) = grid.min_max();
    let span = max - min;
    grid.values
        .iter()
        .map(|v| {
            if span > 0.0 {
                ((v - min) / span * f64::from(PGM_MAXVAL)).round() as u16
            } else {
                0
            }
        })
        .collect()
}

pub fn encode_pgm(grid: &RiskGrid, format: PgmFormat) -> Vec<u8> {
    let pixels = normalize(grid);
    let (rows, cols) = (grid.rows(), grid.cols());
    match format {
        PgmFormat::P5 => {
            let mut out = format!("P5\n{cols} {rows}\n{PGM_MAXVAL}\n").into_bytes();
            out.reserve(pixels.len() * 2);
            for p in pixels {
                out.extend_from_slice(&p.to_be_bytes());
            }
            out
        }
        PgmFormat::P2 => {
            let mut s = format!("P2\n{cols} {rows}\n{PGM_MAXVAL}\n");
            for row in pixels.chunks(cols.max(1)) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
            s.into_bytes()
        }
    }
}

/// Parses a PGM written by [`encode_pgm`] into `(cols, rows, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let bad = |m: &str| Error::Parse(format!("pgm: {m}"));
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
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("header number"));
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != usize::from(PGM_MAXVAL) {
        return Err(bad("unsupported maxval"));
    }
    let pixels = match fields[0].as_str() {
        "P5" => {
            let data = &bytes[pos + 1..];
            if data.len() != rows * cols * 2 {
                return Err(bad("pixel data length"));
            }
            data.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        }
        "P2" => std::str::from_utf8(&bytes[pos..])
            .map_err(|_| bad("body"))?
            .split_ascii_whitespace()
            .map(|t| t.parse::<u16>().map_err(|_| bad("pixel")))
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("magic")),
    };
    if pixels.len() != rows * cols {
        return Err(bad("pixel count"));
    }
    Ok((cols, rows, pixels))
}

/// One line per grid row, raw values in shortest round-trip form.
pub fn encode_csv(grid: &RiskGrid) -> String {
    let mut s = String::with_capacity(grid.values.len() * 12);
    for r in 0..grid.rows() {
        for (i, v) in grid.row(r).iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn decode_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("csv: {e}"))))
                .collect()
        })
        .collect()
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.pgm`, `<stem>.csv` (when requested) and `<stem>.json`.
/// Returns the written paths.
pub fn write_heatmap(grid: &RiskGrid, dir: &Path, stem: &str, format: PgmFormat, csv: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let pgm = dir.join(format!("{stem}.pgm"));
    write_atomic(&pgm, &encode_pgm(grid, format))?;
    written.push(pgm);
    if csv {
        let path = dir.join(format!("{stem}.csv"));
        write_atomic(&path, encode_csv(grid).as_bytes())?;
        written.push(path);
    }
    let meta = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&HeatmapMeta::of(grid)).expect("meta serializes");
    write_atomic(&meta, text.as_bytes())?;
    written.push(meta);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn sample() -> RiskGrid {
        RiskGrid::from_fn(GridSpec::new(Point2::new(1.0, 2.0), 2.0, 0.5, 0.0), |p| p.x * 0.3 + p.y)
    }

    #[test]
    fn pgm_round_trip_both_formats() {
        let g = sample();
        for f in [PgmFormat::P5, PgmFormat::P2] {
            let (cols, rows, px) = decode_pgm(&encode_pgm(&g, f)).unwrap();
            assert_eq!((cols, rows), (8, 8));
            assert_eq!(px, normalize(&g));
        }
        let px = normalize(&g);
        assert_eq!(px.iter().max(), Some(&PGM_MAXVAL));
        assert_eq!(px.iter().min(), Some(&0));
    }

    #[test]
    fn csv_is_lossless() {
        let g = sample();
        let rows = decode_csv(&encode_csv(&g)).unwrap();
        let flat: Vec<f64> = rows.concat();
        assert_eq!(flat, g.values);
    }

    #[test]
    fn sidecar_denormalizes_extremes() {
        let g = sample();
        let meta = HeatmapMeta::of(&g);
        let (lo, hi) = g.min_max();
        assert_eq!(meta.denormalize(0), lo);
        assert!((meta.denormalize(PGM_MAXVAL) - hi).abs() < 1e-12);
    }
}
