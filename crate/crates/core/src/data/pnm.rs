//! Binary portable pixmap (P6) and graymap (P5) codecs, 8-bit only.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 3 for P6, 1 for P5.
    pub channels: usize,
    /// Interleaved samples, row-major.
    pub data: Vec<u8>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
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
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                detail: format!("{what} out of range"),
            })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Pnm> {
    let mut h = Header { bytes, pos: 0 };
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(h.err("expected magic P6 or P5")),
    };
    h.pos = 2;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Parse {
            offset: maxval_at,
            detail: format!("unsupported maxval {maxval}, only 255 is accepted"),
        });
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(h.err("expected a single whitespace byte before pixel data")),
    }
    let need = width * height * channels;
    let data = &bytes[h.pos..];
    if data.len() < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            detail: format!("pixel data truncated: need {need} bytes, found {}", data.len()),
        });
    }
    Ok(Pnm {
        width,
        height,
        channels,
        data: data[..need].to_vec(),
    })
}

pub fn encode(img: &Pnm) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_comments() {
        let img = decode(b"P5\n# a comment\n2 2\n255\n\x00\xff\xff\x00").unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(decode(&encode(&img)).unwrap(), img);
    }

    #[test]
    fn rejects_bad_input_with_offsets() {
        match decode(b"P6 1 1 65535\n\x00\x00\x00\x00\x00\x00") {
            Err(Error::Parse { offset, detail }) => {
                assert_eq!(offset, 6);
                assert!(detail.contains("maxval"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode(b"P3 1 1 255\n"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode(b"P6 2 2 255\n\x00"), Err(Error::Parse { .. })));
        assert!(matches!(decode(b"P6 x"), Err(Error::Parse { offset: 3, .. })));
    }
}
