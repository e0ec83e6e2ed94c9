use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

/// Reads a binary PGM (P5) or PPM (P6) file. Color input is converted with
/// `Y = round(0.299 R + 0.587 G + 0.114 B)`.
pub fn read_pnm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, &path.display().to_string())
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Header<'a> {
    fn line(&self) -> usize {
        1 + self.bytes[..self.pos].iter().filter(|&&b| b == b'\n').count()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.name, self.line(), msg)
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| self.err("non-ASCII header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse::<usize>()
            .map_err(|_| self.err(format!("invalid {what} '{tok}'")))
    }
}

pub fn decode_pnm(bytes: &[u8], name: &str) -> Result<GrayImage> {
    let mut h = Header {
        bytes,
        pos: 0,
        name,
    };
    let magic = h.token()?;
    let channels = match magic {
        "P5" => 1,
        "P6" => 3,
        other => return Err(h.err(format!("unsupported magic '{other}', expected P5 or P6"))),
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(h.err(format!("maxval {maxval} not supported, only 255")));
    }
    if width == 0 || height == 0 {
        return Err(h.err("zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
        return Err(h.err("missing raster separator"));
    }
    let raster = &bytes[h.pos + 1..];
    let needed = width * height * channels;
    if raster.len() < needed {
        return Err(h.err(format!(
            "raster truncated: {} bytes, expected {needed}",
            raster.len()
        )));
    }
    let data = if channels == 1 {
        raster[..needed].to_vec()
    } else {
        raster[..needed]
            .chunks_exact(3)
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect()
    };
    GrayImage::new(width, height, data)
}

#[inline]
fn luminance(r: u8, g: u8, b: u8) -> u8 {
    // Integer form of round(0.299 R + 0.587 G + 0.114 B), exact for 8-bit input.
    let y = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((y + 500) / 1000) as u8
}
