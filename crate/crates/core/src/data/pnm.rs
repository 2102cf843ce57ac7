//! Binary PPM (P6) and PGM (P5) with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    /// P5, one channel.
    Gray,
    /// P6, interleaved RGB.
    Rgb,
}

impl PnmKind {
    pub fn channels(self) -> usize {
        match self {
            PnmKind::Gray => 1,
            PnmKind::Rgb => 3,
        }
    }

    fn magic(self) -> &'static str {
        match self {
            PnmKind::Gray => "P5",
            PnmKind::Rgb => "P6",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub kind: PnmKind,
    pub width: usize,
    pub height: usize,
    /// Row-major samples, channels interleaved.
    pub pixels: Vec<u8>,
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format_err(start, format!("{what} is out of range")))
    }
}

impl Pnm {
    pub fn new(kind: PnmKind, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * kind.channels() {
            return Err(Error::Dimension(format!(
                "{} bytes for a {width}x{height} {} image",
                pixels.len(),
                kind.magic()
            )));
        }
        Ok(Pnm { kind, width, height, pixels })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let kind = match bytes.get(..2) {
            Some(b"P5") => PnmKind::Gray,
            Some(b"P6") => PnmKind::Rgb,
            Some([b'P', d]) if d.is_ascii_digit() => {
                return Err(Error::UnsupportedFormat(format!(
                    "P{} files are not supported, only binary P5/P6",
                    *d as char
                )))
            }
            _ => return Err(format_err(0, "missing P5/P6 magic")),
        };
        let mut h = Header { bytes, pos: 2 };
        if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
            return Err(format_err(2, "expected whitespace after magic"));
        }
        let width = h.number("width")?;
        let height = h.number("height")?;
        let max_at = h.pos;
        let maxval = h.number("maxval")?;
        if maxval != 255 {
            return Err(Error::UnsupportedFormat(format!(
                "maxval {maxval} at byte {max_at}, only 255 is supported"
            )));
        }
        if width == 0 || height == 0 {
            return Err(format_err(max_at, format!("empty image {width}x{height}")));
        }
        if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(format_err(h.pos, "expected one whitespace byte before the payload"));
        }
        let start = h.pos + 1;
        let len = width * height * kind.channels();
        let available = bytes.len() - start;
        if available < len {
            return Err(format_err(
                bytes.len(),
                format!("truncated payload: {available} of {len} bytes"),
            ));
        }
        if available > len {
            return Err(format_err(start + len, format!("{} trailing bytes", available - len)));
        }
        Ok(Pnm {
            kind,
            width,
            height,
            pixels: bytes[start..].to_vec(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("{}\n{} {}\n255\n", self.kind.magic(), self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}
