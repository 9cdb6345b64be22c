//! Modified UTF-8 as used by DEX string data.
//!
//! Differs from standard UTF-8 in two ways: U+0000 is encoded as the two-byte
//! sequence `C0 80`, and supplementary characters are written as a pair of
//! three-byte encoded surrogates instead of a single four-byte sequence.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutf8Error {
    pub offset: usize,
}

impl fmt::Display for Mutf8Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid MUTF-8 sequence at byte {}", self.offset)
    }
}

impl std::error::Error for Mutf8Error {}

/// Decodes `bytes` (without the trailing NUL) into a `String`.
pub fn decode(bytes: &[u8]) -> Result<String, Mutf8Error> {
    let mut units: Vec<u16> = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b0 = bytes[i];
        let err = Mutf8Error { offset: i };
        if b0 & 0x80 == 0 {
            if b0 == 0 {
                return Err(err);
            }
            units.push(b0 as u16);
            i += 1;
        } else if b0 & 0xe0 == 0xc0 {
            let b1 = *bytes.get(i + 1).ok_or(err.clone())?;
            if b1 & 0xc0 != 0x80 {
                return Err(err);
            }
            units.push(((b0 as u16 & 0x1f) << 6) | (b1 as u16 & 0x3f));
            i += 2;
        } else if b0 & 0xf0 == 0xe0 {
            let b1 = *bytes.get(i + 1).ok_or(err.clone())?;
            let b2 = *bytes.get(i + 2).ok_or(err.clone())?;
            if b1 & 0xc0 != 0x80 || b2 & 0xc0 != 0x80 {
                return Err(err);
            }
            units.push(((b0 as u16 & 0x0f) << 12) | ((b1 as u16 & 0x3f) << 6) | (b2 as u16 & 0x3f));
            i += 3;
        } else {
            return Err(err);
        }
    }
    String::from_utf16(&units).map_err(|_| Mutf8Error { offset: bytes.len() })
}

/// Encodes `s` as MUTF-8 and returns the bytes together with the UTF-16 length
/// that DEX stores in front of each string.
pub fn encode(s: &str) -> (Vec<u8>, usize) {
    let mut out = Vec::with_capacity(s.len());
    let mut utf16_len = 0;
    for unit in s.encode_utf16() {
        utf16_len += 1;
        match unit {
            0x0001..=0x007f => out.push(unit as u8),
            0x0000 | 0x0080..=0x07ff => {
                out.push(0xc0 | (unit >> 6) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
            _ => {
                out.push(0xe0 | (unit >> 12) as u8);
                out.push(0x80 | ((unit >> 6) & 0x3f) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
        }
    }
    (out, utf16_len)
}
