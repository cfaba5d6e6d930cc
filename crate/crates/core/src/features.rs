//! Binary feature files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   b"SSB1"
//! flags   u8   bit0 = grid coordinates present, bit1 = chromatic descriptor present
//! n       u32  row count
//! d       u32  embedding dimension
//! rows    n x { [f32; 2] coords if bit0, [f32; 3] chromatic if bit1, [f32; d] embedding }
//! ```
//!
//! Slide-vector files use the same layout with `n = 1` and no optional
//! blocks.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSB1";
pub const FLAG_COORDS: u8 = 0b01;
pub const FLAG_CHROMATIC: u8 = 0b10;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

/// One tile: grid position, optional mean-colour descriptor, embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeature {
    pub coords: [f64; 2],
    pub chromatic: Option<[f64; 3]>,
    pub embedding: Vec<f64>,
}

impl PatchFeature {
    /// Chromatic descriptor, falling back to the first three embedding
    /// dimensions (zero-padded) when the file carried none.
    pub fn chromatic_or_fallback(&self) -> [f64; 3] {
        self.chromatic.unwrap_or_else(|| {
            let mut c = [0.0; 3];
            for (dst, src) in c.iter_mut().zip(&self.embedding) {
                *dst = *src;
            }
            c
        })
    }
}

/// Decoded contents of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub dim: usize,
    pub has_coords: bool,
    pub has_chromatic: bool,
    pub patches: Vec<PatchFeature>,
}

impl FeatureBlock {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::format("feature file", "unexpected end of data"))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f64::from(f32::from_le_bytes(self.take()?)))
    }
}

/// Decodes a feature file from memory.
///
/// The buffer must contain exactly the declared rows; trailing bytes are
/// rejected. Non-finite values are rejected.
pub fn decode(buf: &[u8]) -> Result<FeatureBlock> {
    if buf.len() < HEADER_LEN {
        return Err(Error::format("feature file", "truncated header"));
    }
    if &buf[..4] != MAGIC {
        return Err(Error::format("feature file", "bad magic"));
    }
    let flags = buf[4];
    if flags & !(FLAG_COORDS | FLAG_CHROMATIC) != 0 {
        return Err(Error::format("feature file", format!("unknown flag bits {flags:#04x}")));
    }
    let n = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
    let has_coords = flags & FLAG_COORDS != 0;
    let has_chromatic = flags & FLAG_CHROMATIC != 0;

    let row_floats = d
        .checked_add(if has_coords { 2 } else { 0 })
        .and_then(|x| x.checked_add(if has_chromatic { 3 } else { 0 }))
        .ok_or_else(|| Error::format("feature file", "row size overflow"))?;
    let body = n
        .checked_mul(row_floats)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::format("feature file", "body size overflow"))?;
    let expected = HEADER_LEN + body;
    if buf.len() != expected {
        return Err(Error::format(
            "feature file",
            format!("expected {expected} bytes for {n} rows of dim {d}, found {}", buf.len()),
        ));
    }

    let mut r = Reader {
        buf,
        pos: HEADER_LEN,
    };
    let mut patches = Vec::with_capacity(n);
    for row in 0..n {
        let coords = if has_coords {
            [r.f32()?, r.f32()?]
        } else {
            [0.0, 0.0]
        };
        let chromatic = if has_chromatic {
            Some([r.f32()?, r.f32()?, r.f32()?])
        } else {
            None
        };
        let embedding = (0..d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let finite = coords.iter().all(|v| v.is_finite())
            && chromatic.iter().flatten().all(|v| v.is_finite())
            && embedding.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::format(
                "feature file",
                format!("non-finite value in row {row}"),
            ));
        }
        patches.push(PatchFeature {
            coords,
            chromatic,
            embedding,
        });
    }
    Ok(FeatureBlock {
        dim: d,
        has_coords,
        has_chromatic,
        patches,
    })
}

/// Encodes rows into the feature file layout. Values are stored as `f32`.
pub fn encode(block: &FeatureBlock) -> Result<Vec<u8>> {
    let n = u32::try_from(block.patches.len())
        .map_err(|_| Error::format("feature file", "too many rows"))?;
    let d = u32::try_from(block.dim).map_err(|_| Error::format("feature file", "dim too large"))?;
    let mut flags = 0u8;
    if block.has_coords {
        flags |= FLAG_COORDS;
    }
    if block.has_chromatic {
        flags |= FLAG_CHROMATIC;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + block.patches.len() * (block.dim + 5) * 4);
    out.extend_from_slice(MAGIC);
    out.push(flags);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for p in &block.patches {
        if p.embedding.len() != block.dim {
            return Err(Error::LengthMismatch {
                left: block.dim,
                right: p.embedding.len(),
            });
        }
        if block.has_coords {
            p.coords.iter().for_each(|&v| put(v));
        }
        if block.has_chromatic {
            let c = p
                .chromatic
                .ok_or_else(|| Error::format("feature file", "row lacks chromatic descriptor"))?;
            c.iter().for_each(|&v| put(v));
        }
        p.embedding.iter().for_each(|&v| put(v));
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<FeatureBlock> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf).map_err(|e| match e {
        Error::Format { what, msg } => Error::Format {
            what,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn write(path: &Path, block: &FeatureBlock) -> Result<()> {
    let bytes = encode(block)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a slide-vector file: one row, no optional blocks.
pub fn read_slide_vector(path: &Path) -> Result<Vec<f64>> {
    let block = read(path)?;
    decode_slide_vector_block(block)
}

pub fn decode_slide_vector(buf: &[u8]) -> Result<Vec<f64>> {
    decode_slide_vector_block(decode(buf)?)
}

fn decode_slide_vector_block(block: FeatureBlock) -> Result<Vec<f64>> {
    if block.len() != 1 || block.has_coords || block.has_chromatic {
        return Err(Error::format(
            "slide-vector file",
            "expected exactly one row without coordinates or chromatic descriptor",
        ));
    }
    Ok(block.patches.into_iter().next().unwrap().embedding)
}

pub fn write_slide_vector(path: &Path, vector: &[f64]) -> Result<()> {
    write(
        path,
        &FeatureBlock {
            dim: vector.len(),
            has_coords: false,
            has_chromatic: false,
            patches: vec![PatchFeature {
                coords: [0.0, 0.0],
                chromatic: None,
                embedding: vector.to_vec(),
            }],
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(flags: (bool, bool)) -> FeatureBlock {
        FeatureBlock {
            dim: 3,
            has_coords: flags.0,
            has_chromatic: flags.1,
            patches: (0..4)
                .map(|i| PatchFeature {
                    coords: if flags.0 { [i as f64, 2.0] } else { [0.0, 0.0] },
                    chromatic: flags.1.then_some([0.5, 0.25, i as f64]),
                    embedding: vec![i as f64, -1.5, 0.125],
                })
                .collect(),
        }
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = encode(&sample((true, false))).unwrap();
        assert_eq!(&bytes[..4], b"SSB1");
        assert_eq!(bytes[4], 0x01);
        assert_eq!(&bytes[5..9], &4u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &3u32.to_le_bytes());
        // first row: x, y, then embedding
        assert_eq!(&bytes[13..17], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[17..21], &2.0f32.to_le_bytes());
        assert_eq!(&bytes[21..25], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[25..29], &(-1.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 13 + 4 * 5 * 4);
    }

    #[test]
    fn all_flag_combinations_round_trip() {
        for flags in [(false, false), (true, false), (false, true), (true, true)] {
            let block = sample(flags);
            assert_eq!(decode(&encode(&block).unwrap()).unwrap(), block);
        }
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_bytes() {
        let mut bytes = encode(&sample((true, true))).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(decode(&bytes).is_err());
        assert!(decode(b"SSB").is_err());
    }

    #[test]
    fn rejects_unknown_flags_and_huge_counts() {
        let mut bytes = encode(&sample((false, false))).unwrap();
        bytes[4] = 0x04;
        assert!(decode(&bytes).is_err());
        let mut header = b"SSB1\x00".to_vec();
        header.extend_from_slice(&u32::MAX.to_le_bytes());
        header.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&header).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut block = sample((false, false));
        block.patches[1].embedding[0] = f64::NAN;
        let bytes = encode(&block).unwrap();
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn slide_vector_requires_single_plain_row() {
        let v = vec![1.0, 2.0, 3.0];
        let block = FeatureBlock {
            dim: 3,
            has_coords: false,
            has_chromatic: false,
            patches: vec![PatchFeature {
                coords: [0.0; 2],
                chromatic: None,
                embedding: v.clone(),
            }],
        };
        assert_eq!(decode_slide_vector(&encode(&block).unwrap()).unwrap(), v);
        assert!(decode_slide_vector(&encode(&sample((false, false))).unwrap()).is_err());
    }

    #[test]
    fn chromatic_fallback_uses_leading_embedding_dims() {
        let p = PatchFeature {
            coords: [0.0; 2],
            chromatic: None,
            embedding: vec![4.0, 5.0],
        };
        assert_eq!(p.chromatic_or_fallback(), [4.0, 5.0, 0.0]);
    }
}
