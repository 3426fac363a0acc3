//! Raster file formats.
//!
//! Occupancy grids travel as portable graymaps (P2 or P5; pixel < 128 means
//! occupied) with a plain-text `key=value` sidecar carrying the geometry that
//! PGM cannot express. The sidecar lives next to the raster with the `.hdr`
//! extension. Scalar rasters (SDF, potential) export as little-endian f64
//! with the same sidecar scheme.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{GridError, GridGeometry, OccupancyGrid};

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("hdr")
}

fn parse_err(path: &Path, message: impl Into<String>) -> GridError {
    GridError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Parse a `key=value` sidecar into (resolution, origin_x, origin_y, extras).
fn load_sidecar(path: &Path) -> Result<Vec<(String, String)>, GridError> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, format!("expected key=value, got {line:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn sidecar_f64(pairs: &[(String, String)], key: &str, path: &Path) -> Result<f64, GridError> {
    let raw = pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| parse_err(path, format!("missing key {key:?}")))?;
    raw.parse::<f64>()
        .map_err(|e| parse_err(path, format!("bad {key}: {e}")))
}

fn sidecar_usize(pairs: &[(String, String)], key: &str, path: &Path) -> Result<usize, GridError> {
    let raw = pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| parse_err(path, format!("missing key {key:?}")))?;
    raw.parse::<usize>()
        .map_err(|e| parse_err(path, format!("bad {key}: {e}")))
}

/// PGM tokens, skipping `#` comments.
struct PgmTokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PgmTokens<'a> {
    fn next(&mut self) -> Option<&'a [u8]> {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos >= self.data.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.data[start..self.pos])
    }

    fn next_usize(&mut self, path: &Path) -> Result<usize, GridError> {
        let tok = self.next().ok_or_else(|| parse_err(path, "truncated header"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, "bad integer in header"))
    }
}

pub fn load_occupancy_pgm(path: &Path) -> Result<OccupancyGrid, GridError> {
    let bytes = fs::read(path)?;
    let mut toks = PgmTokens { data: &bytes, pos: 0 };
    let magic = toks.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(parse_err(path, "expected P2 or P5 magic")),
    };
    let width = toks.next_usize(path)?;
    let height = toks.next_usize(path)?;
    let maxval = toks.next_usize(path)?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    let n = width * height;
    let pixels: Vec<u8> = if binary {
        // Exactly one whitespace byte separates the header from raster data.
        let start = toks.pos + 1;
        if bytes.len() < start + n {
            return Err(parse_err(path, "truncated P5 raster"));
        }
        bytes[start..start + n].to_vec()
    } else {
        let mut px = Vec::with_capacity(n);
        for _ in 0..n {
            px.push(toks.next_usize(path)? as u8);
        }
        px
    };

    let sidecar = sidecar_path(path);
    let pairs = load_sidecar(&sidecar)?;
    let resolution = sidecar_f64(&pairs, "resolution", &sidecar)?;
    let origin_x = sidecar_f64(&pairs, "origin_x", &sidecar)?;
    let origin_y = sidecar_f64(&pairs, "origin_y", &sidecar)?;
    let geometry = GridGeometry::new(width, height, resolution, origin_x, origin_y)?;

    let cells = pixels.iter().map(|&p| (p < 128) as u8).collect();
    OccupancyGrid::new(geometry, cells)
}

pub fn save_occupancy_pgm(grid: &OccupancyGrid, path: &Path) -> Result<(), GridError> {
    let g = grid.geometry;
    let mut out = Vec::with_capacity(g.len() + 32);
    write!(out, "P5\n{} {}\n255\n", g.width, g.height)?;
    out.extend(grid.cells().iter().map(|&c| if c == 1 { 0u8 } else { 255u8 }));
    fs::write(path, out)?;

    let sidecar = format!(
        "resolution={}\norigin_x={}\norigin_y={}\n",
        g.resolution, g.origin_x, g.origin_y
    );
    fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

/// Flat little-endian f64 raster with a sidecar describing its layout.
pub fn write_scalar_raster(
    path: &Path,
    geometry: &GridGeometry,
    heading_bins: Option<usize>,
    values: &[f64],
    kind: &str,
) -> Result<(), GridError> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;

    let mut sidecar = format!(
        "kind={kind}\ndtype=f64le\nwidth={}\nheight={}\nresolution={}\norigin_x={}\norigin_y={}\n",
        geometry.width, geometry.height, geometry.resolution, geometry.origin_x, geometry.origin_y
    );
    if let Some(bins) = heading_bins {
        sidecar.push_str(&format!("heading_bins={bins}\n"));
    }
    fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

/// Scalar raster plus its layout, as written by [`write_scalar_raster`].
pub struct ScalarRaster {
    pub geometry: GridGeometry,
    pub heading_bins: Option<usize>,
    pub kind: String,
    pub values: Vec<f64>,
}

pub fn read_scalar_raster(path: &Path) -> Result<ScalarRaster, GridError> {
    let sidecar = sidecar_path(path);
    let pairs = load_sidecar(&sidecar)?;
    let width = sidecar_usize(&pairs, "width", &sidecar)?;
    let height = sidecar_usize(&pairs, "height", &sidecar)?;
    let resolution = sidecar_f64(&pairs, "resolution", &sidecar)?;
    let origin_x = sidecar_f64(&pairs, "origin_x", &sidecar)?;
    let origin_y = sidecar_f64(&pairs, "origin_y", &sidecar)?;
    let heading_bins = pairs
        .iter()
        .find(|(k, _)| k == "heading_bins")
        .map(|_| sidecar_usize(&pairs, "heading_bins", &sidecar))
        .transpose()?;
    let kind = pairs
        .iter()
        .find(|(k, _)| k == "kind")
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| "scalar".into());
    let geometry = GridGeometry::new(width, height, resolution, origin_x, origin_y)?;

    let bytes = fs::read(path)?;
    let expected = geometry.len() * heading_bins.unwrap_or(1);
    if bytes.len() != expected * 8 {
        return Err(parse_err(
            path,
            format!("raster holds {} bytes, expected {}", bytes.len(), expected * 8),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ScalarRaster {
        geometry,
        heading_bins,
        kind,
        values,
    })
}
