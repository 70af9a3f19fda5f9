//! Binary PGM (P5) and PPM (P6) raster I/O, 8-bit only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::{to_gray, GrayFrame, RgbFrame};

pub fn encode_pgm(g: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    out.extend_from_slice(g.data());
    out
}

pub fn write_pgm(path: impl AsRef<Path>, g: &GrayFrame) -> Result<()> {
    std::fs::write(path, encode_pgm(g))?;
    Ok(())
}

/// Decodes a P5 or P6 raster; colour images are converted to luma.
pub fn decode(bytes: &[u8]) -> Result<GrayFrame> {
    let mut cursor = Header { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Raster(format!("unsupported magic {other:?}"))),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if maxval != 255 {
        return Err(Error::Raster(format!("only 8-bit rasters supported, maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the pixels.
    let start = cursor.pos + 1;
    let len = width * height * channels;
    let pixels = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::Raster(format!("truncated raster: need {len} pixel bytes")))?;
    if channels == 1 {
        GrayFrame::new(width, height, pixels.to_vec())
    } else {
        to_gray(&RgbFrame { width, height, data: pixels.to_vec() })
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Raster(m) => Error::Raster(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<String> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::Raster("truncated header".into())),
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::Raster(format!("bad header number {t:?}")))
    }
}
