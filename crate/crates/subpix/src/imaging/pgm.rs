//! Binary PGM (P5) reading and writing.
//!
//! Intensities are normalized by maxval on load. Samples wider than 8 bits
//! are big-endian, per the Netpbm convention. Writing always emits 8-bit
//! data, so a save/load round trip reproduces 8-bit images exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(img))?;
    Ok(())
}

pub(crate) fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| err("missing magic"))?;
    if magic != b"P5" {
        return Err(err(&format!(
            "bad magic {:?}, expected P5",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_number(bytes, &mut pos, "width")?;
    let height = parse_number(bytes, &mut pos, "height")?;
    let maxval = parse_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(&format!("maxval {maxval} outside [1, 65535]")));
    }
    // Exactly one whitespace byte separates the header from raster data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(err("missing whitespace before raster"));
    }
    pos += 1;

    let count = width * height;
    let wide = maxval > 255;
    let needed = count * if wide { 2 } else { 1 };
    let raster = &bytes[pos..];
    if raster.len() < needed {
        return Err(err(&format!(
            "raster truncated: need {needed} bytes, found {}",
            raster.len()
        )));
    }
    let maxval = maxval as f64;
    let data: Vec<f64> = if wide {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval)
            .collect()
    } else {
        raster[..needed].iter().map(|&b| b as f64 / maxval).collect()
    };
    if data.iter().any(|&v| v > 1.0) {
        return Err(err("sample exceeds maxval"));
    }
    Image::new(width, height, data)
}

pub(crate) fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v * 255.0).round() as u8));
    out
}

fn err(msg: &str) -> Error {
    Error::Parse(format!("pgm: {msg}"))
}

/// Returns the next whitespace-delimited token, skipping `#` comment lines.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(&bytes[start..*pos])
}

fn parse_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos).ok_or_else(|| err(&format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(&format!("invalid {what}")))
}
