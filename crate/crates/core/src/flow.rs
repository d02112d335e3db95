//! Dense optical flow fields and the Middlebury `.flo` codec.

use crate::grid::{BinaryMask, Grid};
use crate::pfm::CodecError;

/// Middlebury magic: the float 202021.25 stored little-endian, i.e. "PIEH".
pub const FLO_MAGIC: &[u8; 4] = b"PIEH";

/// Components with magnitude above this are "unknown flow" in `.flo` files.
const UNKNOWN_FLOW_THRESH: f32 = 1e9;
const UNKNOWN_FLOW: f32 = 1e10;

/// Per-pixel displacement `(u, v)` in pixels plus a validity flag. Invalid
/// pixels always hold `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    vectors: Grid<[f32; 2]>,
    valid: BinaryMask,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            vectors: Grid::filled(width, height, [0.0; 2]),
            valid: Grid::filled(width, height, true),
        }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        FlowField {
            vectors: Grid::filled(width, height, [0.0; 2]),
            valid: Grid::filled(width, height, false),
        }
    }

    /// Builds a field from a per-pixel function; `None` marks invalid pixels.
    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Option<[f32; 2]> + Sync + Send,
    {
        let g = Grid::from_fn(width, height, f);
        Self::from_options(&g)
    }

    fn from_options(g: &Grid<Option<[f32; 2]>>) -> Self {
        FlowField {
            vectors: g.map(|o| o.unwrap_or([0.0; 2])),
            valid: g.map(|o| o.is_some()),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.vectors.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.vectors.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.vectors.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<[f32; 2]> {
        self.valid[(x, y)].then(|| self.vectors[(x, y)])
    }

    pub fn set(&mut self, x: usize, y: usize, value: Option<[f32; 2]>) {
        self.valid[(x, y)] = value.is_some();
        self.vectors[(x, y)] = value.unwrap_or([0.0; 2]);
    }

    pub fn valid_mask(&self) -> &BinaryMask {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count_true()
    }

    pub fn to_flo(&self) -> Vec<u8> {
        let (w, h) = self.dims();
        let mut out = Vec::with_capacity(12 + 8 * w * h);
        out.extend_from_slice(FLO_MAGIC);
        out.extend_from_slice(&(w as i32).to_le_bytes());
        out.extend_from_slice(&(h as i32).to_le_bytes());
        for (vec, &ok) in self.vectors.iter().zip(self.valid.iter()) {
            let [u, v] = if ok { *vec } else { [UNKNOWN_FLOW; 2] };
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_flo(bytes: &[u8]) -> Result<Self, CodecError> {
        let corrupt = |detail: String| CodecError::CorruptHeader {
            format: "FLO",
            detail,
        };
        if bytes.len() < 12 {
            return Err(corrupt(format!("file is only {} bytes", bytes.len())));
        }
        if &bytes[..4] != FLO_MAGIC {
            return Err(corrupt(format!("bad magic {:?}", &bytes[..4])));
        }
        let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if w <= 0 || h <= 0 {
            return Err(corrupt(format!("invalid size {w}x{h}")));
        }
        let (w, h) = (w as usize, h as usize);
        let expected = 8 * w * h;
        let payload = &bytes[12..];
        if payload.len() < expected {
            return Err(CodecError::Truncated {
                format: "FLO",
                expected,
                found: payload.len(),
            });
        }
        let cells: Vec<Option<[f32; 2]>> = payload[..expected]
            .chunks_exact(8)
            .map(|c| {
                let u = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let v = f32::from_le_bytes(c[4..8].try_into().unwrap());
                let known = u.is_finite()
                    && v.is_finite()
                    && u.abs() <= UNKNOWN_FLOW_THRESH
                    && v.abs() <= UNKNOWN_FLOW_THRESH;
                known.then_some([u, v])
            })
            .collect();
        Ok(Self::from_options(
            &Grid::from_vec(w, h, cells).expect("sized above"),
        ))
    }
}
