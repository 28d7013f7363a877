//! Image and labeling file formats.
//!
//! * Image CSV: one line per pixel row, comma-separated decimal
//!   intensities, no header.
//! * PNG: single-channel grayscale; 8- and 16-bit are read, 16-bit is
//!   written.
//! * Labeling: a CSV of integer labels (`-1` for unassigned edge pixels)
//!   plus a JSON sidecar with the role map and the edge pixels.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GrayImage, PartitionLabeling, Pixel, Role, UNASSIGNED};
use crate::error::{parse_err, Error, Result};
use crate::util::fmt_f64;

fn parse_grid<T>(
    text: &str,
    mut cell: impl FnMut(&str) -> std::result::Result<T, String>,
) -> Result<(usize, usize, Vec<T>)> {
    let mut rows = 0usize;
    let mut width = None;
    let mut out = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    // tolerate trailing blank lines only
    let last = lines
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |i| i + 1);
    for (r, line) in lines[..last].iter().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            return Err(parse_err(r + 1, 1, "empty row"));
        }
        let mut count = 0usize;
        for (c, field) in line.split(',').enumerate() {
            let v = cell(field.trim()).map_err(|m| parse_err(r + 1, c + 1, m))?;
            out.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_err(
                    r + 1,
                    count.min(w) + 1,
                    format!("ragged row: {count} cells, expected {w}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err(1, 1, "no rows"))?;
    Ok((width, rows, out))
}

/// Parses the image CSV format.
pub fn parse_image_csv(text: &str) -> Result<GrayImage> {
    let (w, h, data) = parse_grid(text, |s| {
        let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite intensity {s:?}"))
        }
    })?;
    GrayImage::new(w, h, data)
}

/// Writes the image CSV format. Values round-trip bit-exactly.
pub fn write_image_csv(image: &GrayImage) -> String {
    let mut s = String::with_capacity(image.len() * 8);
    for row in image.data().chunks(image.width()) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

/// Decodes a single-channel PNG (8- or 16-bit) into intensities.
pub fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Png(format!(
            "expected single-channel grayscale, got {:?}",
            info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        match info.bit_depth {
            png::BitDepth::Sixteen => data.extend(
                row[..2 * w]
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64),
            ),
            png::BitDepth::Eight => data.extend(row[..w].iter().map(|&b| b as f64)),
            d => return Err(Error::Png(format!("unsupported bit depth {d:?}"))),
        }
    }
    GrayImage::new(w, h, data)
}

/// Encodes a 16-bit grayscale PNG. Every intensity must be an integer in
/// `[0, 65535]`.
pub fn encode_png(image: &GrayImage) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(image.len() * 2);
    for (i, &v) in image.data().iter().enumerate() {
        if !(0.0..=65535.0).contains(&v) || v.fract() != 0.0 {
            let p = image.pixel(i);
            return Err(Error::Png(format!(
                "intensity {v} at ({}, {}) is not an integer in [0, 65535]",
                p.x, p.y
            )));
        }
        raw.extend_from_slice(&(v as u16).to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&raw)
            .map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads an image; the format is chosen by extension (`.png` or CSV).
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    if is_png(path) {
        decode_png(&std::fs::read(path)?)
    } else {
        parse_image_csv(&std::fs::read_to_string(path)?)
    }
}

/// Saves an image; the format is chosen by extension (`.png` or CSV).
pub fn save_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        std::fs::write(path, encode_png(image)?)?;
    } else {
        std::fs::write(path, write_image_csv(image))?;
    }
    Ok(())
}

/// JSON sidecar of a labeling CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingSidecar {
    pub roles: BTreeMap<u32, Role>,
    #[serde(default)]
    pub edge_pixels: Vec<Pixel>,
}

pub fn write_labeling_csv(labeling: &PartitionLabeling) -> (String, LabelingSidecar) {
    let mut s = String::new();
    for row in labeling.labels().chunks(labeling.width()) {
        let cells: Vec<String> = row
            .iter()
            .map(|&l| {
                if l == UNASSIGNED {
                    "-1".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    let w = labeling.width();
    let edge_pixels = labeling
        .edge_mask()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e)
        .map(|(i, _)| Pixel::new(i % w, i / w))
        .collect();
    (
        s,
        LabelingSidecar {
            roles: labeling.roles().clone(),
            edge_pixels,
        },
    )
}

/// Parses a labeling from its CSV and JSON sidecar text.
pub fn parse_labeling(csv: &str, sidecar_json: &str) -> Result<PartitionLabeling> {
    let (w, h, labels) = parse_grid(csv, |s| {
        let v: i64 = s.parse().map_err(|_| format!("not an integer label: {s:?}"))?;
        match v {
            -1 => Ok(UNASSIGNED),
            0..=0xFFFF_FFFE => Ok(v as u32),
            _ => Err(format!("label out of range: {v}")),
        }
    })?;
    let sidecar: LabelingSidecar = serde_json::from_str(sidecar_json)?;
    let mut edge = vec![false; w * h];
    for p in &sidecar.edge_pixels {
        if p.x >= w || p.y >= h {
            return Err(Error::InvalidArgument(format!(
                "edge pixel ({}, {}) outside {w}x{h}",
                p.x, p.y
            )));
        }
        edge[p.y * w + p.x] = true;
    }
    PartitionLabeling::new(w, h, labels, edge, sidecar.roles)
}

/// Sidecar path for a labeling CSV: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_labeling(labeling: &PartitionLabeling, csv_path: impl AsRef<Path>) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let (csv, sidecar) = write_labeling_csv(labeling);
    std::fs::write(csv_path, csv)?;
    std::fs::write(
        sidecar_path(csv_path),
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    Ok(())
}

pub fn load_labeling(csv_path: impl AsRef<Path>) -> Result<PartitionLabeling> {
    let csv_path = csv_path.as_ref();
    let csv = std::fs::read_to_string(csv_path)?;
    let json = std::fs::read_to_string(sidecar_path(csv_path))?;
    parse_labeling(&csv, &json)
}
