//! Binary PGM (P5) and PPM (P6) readers and writers.
//!
//! Grayscale slices travel as P5 with maxval 255 (fat-windowed) or 65535
//! (raw stored values, big-endian), label masks and overlays as P6 with
//! maxval 255. Round-trips are bit-exact.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}: malformed header: {1}")]
    MalformedHeader(String, String),
    #[error("{0}: unsupported maxval {1} (expected {2})")]
    UnsupportedMaxval(String, u32, u32),
    #[error("{0}: truncated payload: expected {1} bytes, found {2}")]
    Truncated(String, usize, usize),
    #[error("{0}: zero dimension")]
    ZeroDimension(String),
}

fn io_err(path: &Path, source: io::Error) -> PnmError {
    PnmError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    payload_start: usize,
}

/// Parses a binary PNM header (`P5`/`P6`) with whitespace and `#` comments.
fn parse_header(path: &Path, data: &[u8], magic: &[u8; 2]) -> Result<Header, PnmError> {
    let name = path.display().to_string();
    if data.len() < 2 || &data[..2] != magic {
        return Err(PnmError::MalformedHeader(
            name,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comment lines
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(PnmError::MalformedHeader(name, "missing numeric field".into()));
        }
        let text = std::str::from_utf8(&data[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| PnmError::MalformedHeader(name.clone(), format!("bad number {text}")))?;
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(PnmError::MalformedHeader(name, "missing payload separator".into()));
    }
    pos += 1;
    if fields[0] == 0 || fields[1] == 0 {
        return Err(PnmError::ZeroDimension(name));
    }
    Ok(Header {
        width: fields[0] as usize,
        height: fields[1] as usize,
        maxval: fields[2],
        payload_start: pos,
    })
}

/// Reads an 8-bit P5 image; the maxval must be exactly 255.
pub fn read_pgm8(path: &Path) -> Result<(usize, usize, Vec<u8>), PnmError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = parse_header(path, &data, b"P5")?;
    if header.maxval != 255 {
        return Err(PnmError::UnsupportedMaxval(
            path.display().to_string(),
            header.maxval,
            255,
        ));
    }
    let expected = header.width * header.height;
    let payload = &data[header.payload_start..];
    if payload.len() < expected {
        return Err(PnmError::Truncated(
            path.display().to_string(),
            expected,
            payload.len(),
        ));
    }
    Ok((header.width, header.height, payload[..expected].to_vec()))
}

/// Reads a 16-bit P5 image (big-endian samples); the maxval must be 65535.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>), PnmError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = parse_header(path, &data, b"P5")?;
    if header.maxval != 65535 {
        return Err(PnmError::UnsupportedMaxval(
            path.display().to_string(),
            header.maxval,
            65535,
        ));
    }
    let expected = header.width * header.height * 2;
    let payload = &data[header.payload_start..];
    if payload.len() < expected {
        return Err(PnmError::Truncated(
            path.display().to_string(),
            expected,
            payload.len(),
        ));
    }
    let values = payload[..expected]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((header.width, header.height, values))
}

/// Reads an 8-bit P6 image as interleaved RGB triples.
pub fn read_ppm8(path: &Path) -> Result<(usize, usize, Vec<u8>), PnmError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = parse_header(path, &data, b"P6")?;
    if header.maxval != 255 {
        return Err(PnmError::UnsupportedMaxval(
            path.display().to_string(),
            header.maxval,
            255,
        ));
    }
    let expected = header.width * header.height * 3;
    let payload = &data[header.payload_start..];
    if payload.len() < expected {
        return Err(PnmError::Truncated(
            path.display().to_string(),
            expected,
            payload.len(),
        ));
    }
    Ok((header.width, header.height, payload[..expected].to_vec()))
}

pub fn encode_pgm8(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height, "pixel count mismatch");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

pub fn encode_pgm16(width: usize, height: usize, values: &[u16]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "pixel count mismatch");
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(values.len() * 2);
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn encode_ppm8(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3, "pixel count mismatch");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn write_pgm8(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<(), PnmError> {
    write_atomic(path, &encode_pgm8(width, height, gray))
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<(), PnmError> {
    write_atomic(path, &encode_pgm16(width, height, values))
}

pub fn write_ppm8(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<(), PnmError> {
    write_atomic(path, &encode_ppm8(width, height, rgb))
}

/// Writes via a sibling `.partial` file plus rename so readers never observe
/// a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PnmError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
