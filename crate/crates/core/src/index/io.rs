use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{BinReader, BinWriter};
use crate::error::Result;

use super::{FlatIndex, FrameRef, Hit, IndexRows, IvfIndex, VectorIndex};

pub const SGIX_MAGIC: &[u8; 4] = b"SGIX";
pub const SGIX_VERSION: u32 = 1;

const KIND_FLAT: u32 = 0;
const KIND_IVF: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyIndex {
    Flat(FlatIndex),
    Ivf(IvfIndex),
}

impl AnyIndex {
    pub fn rows(&self) -> &IndexRows {
        match self {
            AnyIndex::Flat(i) => i.rows(),
            AnyIndex::Ivf(i) => i.rows(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyIndex::Flat(_) => "flat",
            AnyIndex::Ivf(_) => "ivf",
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BinWriter::new(w);
        let rows = self.rows();
        w.bytes(SGIX_MAGIC)?;
        w.u32(SGIX_VERSION)?;
        w.u32(match self {
            AnyIndex::Flat(_) => KIND_FLAT,
            AnyIndex::Ivf(_) => KIND_IVF,
        })?;
        w.len(rows.dim, "dim")?;
        w.len(rows.len(), "row count")?;
        for r in &rows.refs {
            w.str16(&r.video_id)?;
            w.len(r.frame_index, "frame index")?;
            w.f64(r.timestamp)?;
        }
        w.f32s(&rows.vectors)?;
        if let AnyIndex::Ivf(ivf) = self {
            w.len(ivf.k_c(), "centroid count")?;
            w.f32s(ivf.centroids())?;
            for list in ivf.lists() {
                w.len(list.len(), "posting list")?;
                for &r in list {
                    w.u32(r)?;
                }
            }
        }
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r, "SGIX");
        r.magic(SGIX_MAGIC)?;
        r.version(SGIX_VERSION)?;
        let kind = r.u32("kind")?;
        let dim = r.u32("dim")? as usize;
        let n = r.u32("row count")? as usize;
        let mut refs = Vec::with_capacity(n);
        for _ in 0..n {
            refs.push(FrameRef {
                video_id: r.str16("video id")?,
                frame_index: r.u32("frame index")? as usize,
                timestamp: r.f64("timestamp")?,
            });
        }
        let vectors = r.f32s(n * dim, "vectors")?;
        let rows = IndexRows { dim, vectors, refs };
        let out = match kind {
            KIND_FLAT => AnyIndex::Flat(FlatIndex::from_rows(rows)),
            KIND_IVF => {
                let k_c = r.u32("centroid count")? as usize;
                let centroids = r.f32s(k_c * dim, "centroids")?;
                let mut lists = Vec::with_capacity(k_c);
                for _ in 0..k_c {
                    let len = r.u32("posting list length")? as usize;
                    let mut list = Vec::with_capacity(len);
                    for _ in 0..len {
                        list.push(r.u32("posting list")?);
                    }
                    lists.push(list);
                }
                AnyIndex::Ivf(IvfIndex::from_parts(rows, centroids, lists)?)
            }
            k => return Err(r.err(format!("unknown index kind {k}"))),
        };
        r.end()?;
        Ok(out)
    }
}

impl VectorIndex for AnyIndex {
    fn dim(&self) -> usize {
        self.rows().dim
    }

    fn len(&self) -> usize {
        self.rows().len()
    }

    fn search(&self, q: &[f32], top_n: usize) -> Result<Vec<Hit>> {
        match self {
            AnyIndex::Flat(i) => i.search(q, top_n),
            AnyIndex::Ivf(i) => i.search(q, top_n),
        }
    }
}

pub fn save_index(index: &AnyIndex, path: impl AsRef<Path>) -> Result<()> {
    index.write_to(BufWriter::new(File::create(path)?))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<AnyIndex> {
    AnyIndex::read_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSequence, FeatureStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store() -> FeatureStore {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        FeatureStore::from_sequences((0..3).map(|v| {
            let data = (0..10 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
            FeatureSequence::new(format!("vid{v}"), 4.0, 6, data).unwrap()
        }))
        .unwrap()
    }

    #[test]
    fn round_trips_both_kinds() {
        let s = store();
        for idx in [
            AnyIndex::Flat(FlatIndex::build(&s, None).unwrap()),
            AnyIndex::Ivf(IvfIndex::build(&s, None, 4, 10, 1).unwrap()),
        ] {
            let mut buf = Vec::new();
            idx.write_to(&mut buf).unwrap();
            assert_eq!(&buf[..4], b"SGIX");
            let back = AnyIndex::read_from(buf.as_slice()).unwrap();
            assert_eq!(back, idx);
            assert!(AnyIndex::read_from(&buf[..buf.len() - 3]).is_err());
            let mut extra = buf.clone();
            extra.push(0);
            assert!(AnyIndex::read_from(extra.as_slice()).is_err());
        }
    }
}
