//! Grayscale Portable Float Map (`Pf`) encoding for depth maps.
//!
//! Written files are always little-endian (negative scale) with rows stored
//! bottom-to-top, as the format prescribes. Both endiannesses are accepted on
//! read.

use thiserror::Error;

use crate::grid::DepthMap;

/// Failure to decode one of the binary payload formats (PFM, FLO).
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("corrupt {format} header: {detail}")]
    CorruptHeader {
        format: &'static str,
        detail: String,
    },
    #[error("truncated {format} payload: expected {expected} bytes, found {found}")]
    Truncated {
        format: &'static str,
        expected: usize,
        found: usize,
    },
}

fn corrupt(detail: impl Into<String>) -> CodecError {
    CodecError::CorruptHeader {
        format: "PFM",
        detail: detail.into(),
    }
}

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + 4 * w * h);
    out.extend_from_slice(header.as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&depth[(x, y)].to_le_bytes());
        }
    }
    out
}

/// Splits off the next whitespace-delimited header token.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, CodecError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(corrupt("unexpected end of header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| corrupt("non-ASCII header"))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap, CodecError> {
    let mut pos = 0;
    match next_token(bytes, &mut pos)? {
        "Pf" => {}
        "PF" => return Err(corrupt("color PFM ('PF') is not a depth map")),
        other => return Err(corrupt(format!("bad magic '{other}'"))),
    }
    let w: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| corrupt("bad width"))?;
    let h: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| corrupt("bad height"))?;
    let scale: f64 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| corrupt("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(corrupt("scale must be nonzero"));
    }
    if w == 0 || h == 0 {
        return Err(corrupt(format!("empty image {w}x{h}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(corrupt("missing separator after scale"));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = 4 * w * h;
    if payload.len() < expected {
        return Err(CodecError::Truncated {
            format: "PFM",
            expected,
            found: payload.len(),
        });
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; w * h];
    for (i, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let value = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row_from_bottom, x) = (i / w, i % w);
        data[(h - 1 - row_from_bottom) * w + x] = value;
    }
    Ok(DepthMap::from_vec(w, h, data).expect("sized above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn header_is_little_endian_grayscale() {
        let d = Grid::from_fn(3, 2, |x, y| (x + 10 * y) as f32);
        let bytes = encode_pfm(&d);
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // First stored row is the bottom image row: values 10, 11, 12.
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, 10.0);
        assert_eq!(decode_pfm(&bytes).unwrap(), d);
    }

    #[test]
    fn big_endian_accepted() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        let d = decode_pfm(&bytes).unwrap();
        assert_eq!(d.as_slice(), &[1.5, 2.5]);
    }

    #[test]
    fn non_finite_values_survive_bit_exact() {
        let d = Grid::from_vec(2, 2, vec![f32::NAN, f32::INFINITY, 1.0, -0.0]).unwrap();
        let back = decode_pfm(&encode_pfm(&d)).unwrap();
        let bits = |g: &DepthMap| g.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&d));
    }

    #[test]
    fn corrupt_inputs() {
        assert!(matches!(
            decode_pfm(b"P6\n1 1\n255\n"),
            Err(CodecError::CorruptHeader { format: "PFM", .. })
        ));
        assert!(matches!(
            decode_pfm(b"PF\n1 1\n-1.0\n"),
            Err(CodecError::CorruptHeader { .. })
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0"),
            Err(CodecError::Truncated { .. })
        ));
        assert!(matches!(
            decode_pfm(b"Pf\nx 2\n-1.0\n"),
            Err(CodecError::CorruptHeader { .. })
        ));
    }
}
