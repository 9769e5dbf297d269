//! Portable grid file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EXCT"
//! 4       2     version (u16 LE) = 1
//! 6       2     dtype code (u16 LE), 1 = f64
//! 8       4     height (u32 LE)
//! 12      4     width (u32 LE)
//! 16      8     reserved, zero
//! 24      8*h*w values, row-major f64 LE
//! ```

use std::fs;
use std::path::Path;

use super::grid::Grid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EXCT";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u16 = 1;
pub const HEADER_LEN: usize = 24;

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<Grid> {
    let bad = |reason: String| Error::format(path, reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dtype = u16_at(6);
    if dtype != DTYPE_F64 {
        return Err(bad(format!("unsupported dtype code {dtype}")));
    }
    let (h, w) = (u32_at(8) as usize, u32_at(12) as usize);
    if h == 0 || w == 0 {
        return Err(bad(format!("zero dimension {h}x{w}")));
    }
    if bytes[16..24].iter().any(|&b| b != 0) {
        return Err(bad("reserved header bytes are not zero".into()));
    }
    let payload = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| bad(format!("dimension overflow {h}x{w}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != payload {
        return Err(bad(format!("expected {payload} payload bytes, found {}", body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Grid::new(h, w, values).map_err(|e| bad(e.to_string()))
}

pub fn write_grid_file(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(grid)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_grid_file(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_grid(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foundation::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(3, 0);
        for (h, w) in [(64, 64), (1, 1), (3, 17)] {
            let g = Grid::from_fn(h, w, |_, _| rng.standard_normal() * 1e3);
            let p = dir.path().join(format!("{h}x{w}.grid"));
            write_grid_file(&g, &p).unwrap();
            let back = read_grid_file(&p).unwrap();
            assert_eq!(g.dims(), back.dims());
            for (a, b) in g.values().iter().zip(back.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_grid(&Grid::filled(2, 3, 1.0));
        assert_eq!(bytes.len(), 24 + 48);
        assert_eq!(&bytes[..4], b"EXCT");
        assert_eq!(&bytes[4..8], &[1, 0, 1, 0]);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 3, 0, 0, 0]);
    }

    #[test]
    fn corruption_is_rejected() {
        let p = Path::new("mem");
        let good = encode_grid(&Grid::filled(2, 2, 0.5));

        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(decode_grid(&magic, p), Err(Error::Format { .. })));

        assert!(matches!(decode_grid(&good[..30], p), Err(Error::Format { .. })));
        assert!(matches!(decode_grid(&good[..10], p), Err(Error::Format { .. })));

        let mut huge = good.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_grid(&huge, p), Err(Error::Format { .. })));

        let mut nan = good.clone();
        nan[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_grid(&nan, p), Err(Error::Format { .. })));
    }
}
