//! Frame-embedding sequences, the feature store, and the SGAF file format.
//!
//! Every vector is L2-normalized once when a sequence is built, so cosine
//! similarity downstream is a plain dot product. Dot products accumulate
//! strictly left to right, which keeps them symmetric and reproducible.
//!
//! SGAF layout (little-endian):
//!
//! ```text
//! "SGAF" | version: u32 = 1 | record*
//! record = id_len: u16 | id: utf-8 | basis_fps: f32 | dim: u32 | frames: u32 | frames*dim f32
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SGAF_MAGIC: &[u8; 4] = b"SGAF";
pub const SGAF_VERSION: u32 = 1;

/// Norm deviation below which a vector is treated as already normalized and
/// stored untouched. Re-ingesting a written store is therefore bit-exact.
const UNIT_NORM_TOL: f64 = 1e-6;

/// Ordered L2-normalized frame embeddings of one video on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    basis_fps: f32,
    dim: usize,
    data: Vec<f32>,
    low_quality: Vec<usize>,
}

impl FeatureSequence {
    /// Builds a sequence from row-major `data` (`frames × dim`), normalizing
    /// every row. Zero or non-finite rows are rejected.
    pub fn new(
        video_id: impl Into<String>,
        basis_fps: f32,
        dim: usize,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        if !(basis_fps.is_finite() && basis_fps > 0.0) {
            return Err(Error::invalid(format!(
                "basis_fps must be positive, got {basis_fps} for `{video_id}`"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid(format!("zero dimension for `{video_id}`")));
        }
        if data.len() % dim != 0 {
            return Err(Error::LengthMismatch {
                expected: (data.len() / dim + 1) * dim,
                found: data.len(),
                context: format!("frame data of `{video_id}` is not a multiple of dim"),
            });
        }
        for (frame, row) in data.chunks_exact_mut(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { video_id, frame });
            }
            if !normalize_in_place(row) {
                return Err(Error::ZeroVector { video_id, frame });
            }
        }
        Ok(Self {
            video_id,
            basis_fps,
            dim,
            data,
            low_quality: Vec::new(),
        })
    }

    pub fn from_rows(
        video_id: impl Into<String>,
        basis_fps: f32,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let video_id = video_id.into();
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (frame, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                    context: format!("video `{video_id}` frame {frame}"),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(video_id, basis_fps, dim, data)
    }

    /// Marks frames as low quality (heavy noise, blur). Teacher labeling
    /// never selects them.
    pub fn with_low_quality(mut self, mut frames: Vec<usize>) -> Self {
        frames.sort_unstable();
        frames.dedup();
        frames.retain(|&f| f < self.len());
        self.low_quality = frames;
        self
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn basis_fps(&self) -> f32 {
        self.basis_fps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Seconds of basis frame `i` on the uniform grid `i / basis_fps`.
    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.basis_fps as f64
    }

    /// Duration covered by the sequence in seconds.
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.basis_fps as f64
    }

    pub fn low_quality(&self) -> &[usize] {
        &self.low_quality
    }

    pub fn is_low_quality(&self, i: usize) -> bool {
        self.low_quality.binary_search(&i).is_ok()
    }

    pub fn renamed(mut self, video_id: impl Into<String>) -> Self {
        self.video_id = video_id.into();
        self
    }
}

/// Returns false for a zero vector.
fn normalize_in_place(row: &mut [f32]) -> bool {
    let norm = row
        .iter()
        .fold(0.0f64, |acc, &v| acc + (v as f64) * (v as f64))
        .sqrt();
    if norm == 0.0 {
        return false;
    }
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        for v in row.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    true
}

/// Left-to-right `f32` dot product. Callers guarantee equal lengths.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Cosine similarity of two arbitrary nonzero vectors.
pub fn cosine_sim(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
            context: "cosine_sim".into(),
        });
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::invalid("cosine_sim of a zero vector"));
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())) as f32)
}

/// All sequences of one corpus, keyed (and iterated) by video id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    sequences: BTreeMap<String, FeatureSequence>,
    total_frames: usize,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sequences(seqs: impl IntoIterator<Item = FeatureSequence>) -> Result<Self> {
        let mut store = Self::new();
        for s in seqs {
            store.insert(s)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, seq: FeatureSequence) -> Result<()> {
        if let Some(dim) = self.dim() {
            if seq.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: seq.dim(),
                    context: format!("video `{}`", seq.video_id()),
                });
            }
        }
        if self.sequences.contains_key(seq.video_id()) {
            return Err(Error::DuplicateVideo(seq.video_id().to_string()));
        }
        self.total_frames += seq.len();
        self.sequences.insert(seq.video_id().to_string(), seq);
        Ok(())
    }

    pub fn get(&self, video_id: &str) -> Option<&FeatureSequence> {
        self.sequences.get(video_id)
    }

    pub fn require(&self, video_id: &str) -> Result<&FeatureSequence> {
        self.get(video_id)
            .ok_or_else(|| Error::UnknownVideo(video_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureSequence> + '_ {
        self.sequences.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.sequences.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn dim(&self) -> Option<usize> {
        self.sequences.values().next().map(FeatureSequence::dim)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SGAF_MAGIC)?;
        w.write_all(&SGAF_VERSION.to_le_bytes())?;
        for seq in self.iter() {
            let id = seq.video_id().as_bytes();
            let id_len = u16::try_from(id.len())
                .map_err(|_| Error::invalid(format!("video id too long: {}", seq.video_id())))?;
            w.write_all(&id_len.to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&seq.basis_fps().to_le_bytes())?;
            w.write_all(&(seq.dim() as u32).to_le_bytes())?;
            w.write_all(&(seq.len() as u32).to_le_bytes())?;
            for v in seq.as_flat() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact_or(&mut r, &mut magic, "header")?;
        if &magic != SGAF_MAGIC {
            return Err(Error::format("SGAF", "bad magic"));
        }
        let version = read_u32(&mut r, "version")?;
        if version != SGAF_VERSION {
            return Err(Error::format("SGAF", format!("unsupported version {version}")));
        }
        let mut store = Self::new();
        loop {
            let mut len_buf = [0u8; 2];
            match r.read(&mut len_buf[..1])? {
                0 => break,
                _ => read_exact_or(&mut r, &mut len_buf[1..], "record header")?,
            }
            let id_len = u16::from_le_bytes(len_buf) as usize;
            let mut id = vec![0u8; id_len];
            read_exact_or(&mut r, &mut id, "video id")?;
            let video_id = String::from_utf8(id)
                .map_err(|_| Error::format("SGAF", "video id is not utf-8"))?;
            let fps = f32::from_le_bytes(read_array(&mut r, "basis_fps")?);
            let dim = read_u32(&mut r, "dim")? as usize;
            let frames = read_u32(&mut r, "frame count")? as usize;
            if dim == 0 {
                return Err(Error::format("SGAF", format!("zero dim for `{video_id}`")));
            }
            if frames == 0 {
                return Err(Error::format("SGAF", format!("`{video_id}` has no frames")));
            }
            if let Some(expected) = store.dim() {
                if expected != dim {
                    return Err(Error::DimMismatch {
                        expected,
                        found: dim,
                        context: format!("video `{video_id}`"),
                    });
                }
            }
            let mut bytes = vec![0u8; dim * 4];
            let mut data = Vec::with_capacity(frames * dim);
            for frame in 0..frames {
                read_exact_or(&mut r, &mut bytes, "frame data")?;
                let row = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
                let start = data.len();
                data.extend(row);
                if data[start..].iter().all(|&v| v == 0.0) {
                    return Err(Error::ZeroVector { video_id, frame });
                }
            }
            store.insert(FeatureSequence::new(video_id, fps, dim, data)?)?;
        }
        Ok(store)
    }
}

/// Reads and normalizes an SGAF file.
pub fn ingest(path: impl AsRef<Path>) -> Result<FeatureStore> {
    FeatureStore::read_from(BufReader::new(File::open(path)?))
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::format("SGAF", format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact_or(r, &mut buf, what)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r, what)?))
}
