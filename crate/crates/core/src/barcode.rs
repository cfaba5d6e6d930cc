//! MinMax barcodes, Bunch-of-Barcodes slide index and median-of-minimum
//! Hamming search.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::cohort::DiagnosisLabel;
use crate::error::{Error, Result};
use crate::results::{top_n, Neighbor, RetrievalResult};

pub const INDEX_MAGIC: &[u8; 4] = b"BOB1";

/// Bit-packed binary code. Bit `i` lives in word `i / 64` at position
/// `i % 64`; bits past `len` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Barcode {
    len: usize,
    words: Vec<u64>,
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl Barcode {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; words_for(bits.len())];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self {
            len: bits.len(),
            words,
        }
    }

    /// Wraps packed words; fails if any bit past `len` is set or the word
    /// count is wrong.
    pub fn from_words(len: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::format("barcode", "word count does not match bit length"));
        }
        if len % 64 != 0 {
            if let Some(last) = words.last() {
                if last >> (len % 64) != 0 {
                    return Err(Error::format("barcode", "bits set past barcode length"));
                }
            }
        }
        Ok(Self { len, words })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Flips every bit.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if self.len % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
        Self {
            len: self.len,
            words,
        }
    }
}

/// MinMax binarization: bit `i` is set iff `v[i + 1] > v[i]`. Ties give 0.
pub fn minmax_binarize(v: &[f64]) -> Result<Barcode> {
    if v.len() < 2 {
        return Err(Error::TooShort(v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("embedding"));
    }
    let len = v.len() - 1;
    let mut words = vec![0u64; words_for(len)];
    for (i, pair) in v.windows(2).enumerate() {
        if pair[1] > pair[0] {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    Ok(Barcode { len, words })
}

/// Number of differing bits.
pub fn hamming(a: &Barcode, b: &Barcode) -> Result<u32> {
    if a.len != b.len {
        return Err(Error::LengthMismatch {
            left: a.len,
            right: b.len,
        });
    }
    Ok(hamming_words(&a.words, &b.words))
}

#[inline]
fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// The barcodes of one slide's mosaic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bob {
    pub slide_id: String,
    pub barcodes: Vec<Barcode>,
}

impl Bob {
    pub fn new(slide_id: impl Into<String>, barcodes: Vec<Barcode>) -> Result<Self> {
        let first = barcodes.first().ok_or(Error::EmptyBob)?.len;
        if let Some(b) = barcodes.iter().find(|b| b.len != first) {
            return Err(Error::LengthMismatch {
                left: first,
                right: b.len,
            });
        }
        Ok(Self {
            slide_id: slide_id.into(),
            barcodes,
        })
    }

    /// Binarizes the given embeddings.
    pub fn from_embeddings<'a>(
        slide_id: impl Into<String>,
        embeddings: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        let barcodes = embeddings
            .into_iter()
            .map(minmax_binarize)
            .collect::<Result<Vec<_>>>()?;
        Self::new(slide_id, barcodes)
    }

    pub fn bit_len(&self) -> usize {
        self.barcodes.first().map_or(0, Barcode::len)
    }
}

fn median_in_place(values: &mut [u32]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        f64::from(values[n / 2])
    } else {
        (f64::from(values[n / 2 - 1]) + f64::from(values[n / 2])) / 2.0
    }
}

/// Median over the query's barcodes of the minimum Hamming distance to any
/// candidate barcode. Not symmetric in its arguments.
pub fn slide_distance(query: &Bob, candidate: &Bob) -> Result<f64> {
    if query.barcodes.is_empty() || candidate.barcodes.is_empty() {
        return Err(Error::EmptyBob);
    }
    if query.bit_len() != candidate.bit_len() {
        return Err(Error::LengthMismatch {
            left: query.bit_len(),
            right: candidate.bit_len(),
        });
    }
    let mut mins: Vec<u32> = query
        .barcodes
        .iter()
        .map(|q| {
            candidate
                .barcodes
                .iter()
                .map(|c| hamming_words(&q.words, &c.words))
                .min()
                .expect("candidate non-empty")
        })
        .collect();
    Ok(median_in_place(&mut mins))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub patient_id: String,
    pub label: DiagnosisLabel,
    pub bob: Bob,
}

impl IndexEntry {
    pub fn slide_id(&self) -> &str {
        &self.bob.slide_id
    }
}

/// Immutable slide index partitioned by organ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarcodeIndex {
    bit_len: usize,
    entries: Vec<IndexEntry>,
    by_organ: BTreeMap<String, Vec<usize>>,
}

/// Query side of a search.
#[derive(Debug, Clone, Copy)]
pub struct BobQuery<'a> {
    pub patient_id: &'a str,
    pub organ: &'a str,
    pub bob: &'a Bob,
}

impl BarcodeIndex {
    pub fn build(entries: Vec<IndexEntry>) -> Result<Self> {
        let bit_len = entries.first().map_or(0, |e| e.bob.bit_len());
        let mut seen = HashSet::new();
        let mut by_organ: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.bob.barcodes.is_empty() {
                return Err(Error::EmptyBob);
            }
            if e.bob.bit_len() != bit_len {
                return Err(Error::LengthMismatch {
                    left: bit_len,
                    right: e.bob.bit_len(),
                });
            }
            if !seen.insert(e.slide_id()) {
                return Err(Error::format(
                    "barcode index",
                    format!("duplicate slide_id {:?}", e.slide_id()),
                ));
            }
            by_organ.entry(e.label.organ.clone()).or_default().push(i);
        }
        Ok(Self {
            bit_len,
            entries,
            by_organ,
        })
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, slide_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.slide_id() == slide_id)
    }

    pub fn organ_partition(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_organ
    }

    /// Top-`n` same-organ slides from other patients. With `normalize`,
    /// distances are divided by the barcode length.
    pub fn search(
        &self,
        query: BobQuery<'_>,
        n: usize,
        model: &str,
        normalize: bool,
    ) -> Result<RetrievalResult> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let empty = Vec::new();
        let pool = self.by_organ.get(query.organ).unwrap_or(&empty);
        let scale = if normalize && self.bit_len > 0 {
            self.bit_len as f64
        } else {
            1.0
        };
        let scored = pool
            .iter()
            .map(|&i| &self.entries[i])
            .filter(|e| e.patient_id != query.patient_id)
            .map(|e| Ok((slide_distance(query.bob, &e.bob)? / scale, e.slide_id().to_owned())))
            .collect::<Result<Vec<_>>>()?;
        let (top, shortfall) = top_n(scored, n);
        Ok(RetrievalResult {
            query_slide_id: query.bob.slide_id.clone(),
            model: model.to_owned(),
            neighbors: top
                .into_iter()
                .map(|(distance, slide_id)| Neighbor { slide_id, distance })
                .collect(),
            shortfall,
        })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        put_u32(&mut out, self.bit_len)?;
        put_u32(&mut out, self.entries.len())?;
        for e in &self.entries {
            for s in [
                e.slide_id(),
                &e.patient_id,
                &e.label.organ,
                &e.label.diagnosis,
            ] {
                put_u32(&mut out, s.len())?;
                out.extend_from_slice(s.as_bytes());
            }
            put_u32(&mut out, e.bob.barcodes.len())?;
            for b in &e.bob.barcodes {
                for w in &b.words {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader { buf, pos: 0 };
        if r.bytes(4)? != INDEX_MAGIC {
            return Err(Error::format("barcode index", "bad magic"));
        }
        let bit_len = r.u32()? as usize;
        let count = r.u32()? as usize;
        let words = words_for(bit_len);
        let mut entries = Vec::with_capacity(count.min(buf.len() / 20));
        for _ in 0..count {
            let slide_id = r.string()?;
            let patient_id = r.string()?;
            let organ = r.string()?;
            let diagnosis = r.string()?;
            let n_codes = r.u32()? as usize;
            if n_codes == 0 {
                return Err(Error::EmptyBob);
            }
            let need = n_codes
                .checked_mul(words)
                .and_then(|x| x.checked_mul(8))
                .ok_or_else(|| Error::format("barcode index", "size overflow"))?;
            if r.remaining() < need {
                return Err(Error::format("barcode index", "unexpected end of data"));
            }
            let mut barcodes = Vec::with_capacity(n_codes);
            for _ in 0..n_codes {
                let ws = (0..words).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
                barcodes.push(Barcode::from_words(bit_len, ws)?);
            }
            entries.push(IndexEntry {
                patient_id,
                label: DiagnosisLabel::new(organ, diagnosis),
                bob: Bob { slide_id, barcodes },
            });
        }
        if r.remaining() != 0 {
            return Err(Error::format("barcode index", "trailing bytes"));
        }
        Self::build(entries)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf)
    }
}

/// Searches `index` with default settings: raw Hamming units.
pub fn bob_search(query: BobQuery<'_>, index: &BarcodeIndex, n: usize) -> Result<RetrievalResult> {
    index.search(query, n, "bob", false)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format("barcode index", "value exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format("barcode index", "unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.bytes(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::format("barcode index", "invalid UTF-8"))
    }
}
