//! Offset-prefixed hex dumps, used for golden test vectors.
//!
//! ```text
//! # comment
//! 0000: 60 00 00 00 00 68 2b 40 fc 00 00 00 00 00 00 00
//! 0010: ...
//! ```

use std::fmt::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HexdumpError {
    #[error("line {line}: missing offset prefix")]
    MissingOffset { line: usize },
    #[error("line {line}: offset {found:#x}, expected {expected:#x}")]
    OffsetGap {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: bad hex byte {token:?}")]
    BadByte { line: usize, token: String },
}

pub fn format(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (i, chunk) in bytes.chunks(16).enumerate() {
        let _ = write!(out, "{:04x}:", i * 16);
        for b in chunk {
            let _ = write!(out, " {b:02x}");
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<u8>, HexdumpError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (off, rest) = body
            .split_once(':')
            .ok_or(HexdumpError::MissingOffset { line })?;
        let found = usize::from_str_radix(off.trim(), 16)
            .map_err(|_| HexdumpError::MissingOffset { line })?;
        if found != out.len() {
            return Err(HexdumpError::OffsetGap {
                line,
                found,
                expected: out.len(),
            });
        }
        for tok in rest.split_whitespace() {
            let b = u8::from_str_radix(tok, 16).map_err(|_| HexdumpError::BadByte {
                line,
                token: tok.to_string(),
            })?;
            out.push(b);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_then_parse() {
        let bytes: Vec<u8> = (0..=40).collect();
        let text = format(&bytes);
        assert!(text.starts_with("0000: 00 01"));
        assert!(text.contains("\n0020: 20 21"));
        assert_eq!(parse(&text).unwrap(), bytes);
    }

    #[test]
    fn offset_gap_is_rejected() {
        assert_eq!(
            parse("0000: 01 02\n0004: 03"),
            Err(HexdumpError::OffsetGap {
                line: 2,
                found: 4,
                expected: 2
            })
        );
    }
}
