//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::io::Write;
use std::path::Path;

use vjamp_core::GrayImage;

#[derive(Debug, thiserror::Error)]
pub enum NetpbmError {
    #[error("unsupported magic number {0:?} (expected P5 or P6)")]
    Magic(String),
    #[error("header field `{field}` is missing or not a number")]
    Header { field: &'static str },
    #[error("header field `maxval` is {0}, only 255 is supported")]
    Maxval(u64),
    #[error("header field `{field}` is zero")]
    ZeroDim { field: &'static str },
    #[error("payload truncated: {got} of {expected} bytes")]
    Truncated { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.buf.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.buf.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> &'a [u8] {
        self.skip_space();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        &self.buf[start..self.pos]
    }

    fn number(&mut self, field: &'static str) -> Result<u64, NetpbmError> {
        std::str::from_utf8(self.token())
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(NetpbmError::Header { field })
    }
}

/// Rec.601 integer luminance.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = (299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000;
    y.min(255) as u8
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage, NetpbmError> {
    let mut h = Header { buf: bytes, pos: 0 };
    let magic = h.token();
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(NetpbmError::Magic(String::from_utf8_lossy(other).into_owned())),
    };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 {
        return Err(NetpbmError::ZeroDim { field: "width" });
    }
    if height == 0 {
        return Err(NetpbmError::ZeroDim { field: "height" });
    }
    if maxval != 255 {
        return Err(NetpbmError::Maxval(maxval));
    }
    // exactly one whitespace byte separates the header from the payload
    let start = h.pos + 1;
    let expected = width * height * channels;
    let payload = bytes.get(start..).unwrap_or(&[]);
    if payload.len() < expected {
        return Err(NetpbmError::Truncated {
            got: payload.len(),
            expected,
        });
    }
    let data = if channels == 1 {
        payload[..expected].to_vec()
    } else {
        payload[..expected].chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect()
    };
    Ok(GrayImage::new(width, height, data).expect("dimensions checked"))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, NetpbmError> {
    decode(&std::fs::read(path)?)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

/// P6 from interleaved RGB bytes.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), NetpbmError> {
    std::fs::File::create(path)?.write_all(&encode_pgm(img))?;
    Ok(())
}
