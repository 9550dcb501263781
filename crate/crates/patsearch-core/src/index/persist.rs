//! Binary index file format.
//!
//! Layout, all integers little-endian: magic "PVIX", u16 version, u32
//! dimension, u64 entry count, flags byte (bit 0 = has IVF), entries as
//! (u32 id length, UTF-8 id, dimension f32s), an optional IVF block (u32
//! nlist, nlist x dimension centroid f32s, one u32 list assignment per
//! entry), and a closing CRC32 of every preceding byte.

use std::collections::HashMap;
use std::path::Path;

use super::{Entry, IndexError, IvfState, VectorIndex};

const MAGIC: &[u8; 4] = b"PVIX";
const FORMAT_VERSION: u16 = 1;
const FLAG_HAS_IVF: u8 = 0b0000_0001;

pub(crate) fn save(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(index.dimension() as u32).to_le_bytes());
    buf.extend_from_slice(&(index.len() as u64).to_le_bytes());
    buf.push(if index.ivf().is_some() { FLAG_HAS_IVF } else { 0 });
    for entry in index.entries() {
        buf.extend_from_slice(&(entry.doc_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(entry.doc_id.as_bytes());
        for &v in &entry.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(ivf) = index.ivf() {
        buf.extend_from_slice(&(ivf.nlist() as u32).to_le_bytes());
        for centroid in ivf.centroids() {
            for &v in centroid {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &assignment in ivf.assignments() {
            buf.extend_from_slice(&assignment.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

pub(crate) fn load(path: &Path) -> Result<VectorIndex, IndexError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 {
        return Err(corrupt("file too short"));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(crc_bytes.try_into().expect("four byte suffix"));
    if crc32fast::hash(body) != stored_crc {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { buf: body, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(corrupt(&format!("unsupported format version {version}")));
    }
    let dimension = r.u32()? as usize;
    if dimension == 0 {
        return Err(corrupt("zero dimension"));
    }
    let count = r.u64()? as usize;
    if count.checked_mul(dimension * 4 + 4).is_none_or(|min| min > body.len()) {
        return Err(corrupt("entry count exceeds file size"));
    }
    let flags = r.u8()?;
    if flags & !FLAG_HAS_IVF != 0 {
        return Err(corrupt("unknown flag bits"));
    }

    let mut entries = Vec::with_capacity(count);
    let mut positions = HashMap::with_capacity(count);
    for _ in 0..count {
        let id_len = r.u32()? as usize;
        let id_bytes = r.take(id_len)?;
        let doc_id = std::str::from_utf8(id_bytes)
            .map_err(|_| corrupt("doc id is not UTF-8"))?
            .to_string();
        let mut vector = Vec::with_capacity(dimension);
        for _ in 0..dimension {
            vector.push(r.f32()?);
        }
        if positions.insert(doc_id.clone(), entries.len()).is_some() {
            return Err(corrupt(&format!("duplicate doc id {doc_id}")));
        }
        entries.push(Entry { doc_id, vector });
    }

    let ivf = if flags & FLAG_HAS_IVF != 0 {
        let nlist = r.u32()? as usize;
        if nlist == 0 || nlist > count {
            return Err(corrupt("nlist out of range"));
        }
        let mut centroids = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let mut centroid = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                centroid.push(r.f32()?);
            }
            centroids.push(centroid);
        }
        let mut assignments = Vec::with_capacity(count);
        for _ in 0..count {
            let a = r.u32()?;
            if a as usize >= nlist {
                return Err(corrupt("assignment out of range"));
            }
            assignments.push(a);
        }
        Some(IvfState::from_parts(nlist, centroids, assignments))
    } else {
        None
    };

    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(VectorIndex::from_parts(dimension, entries, positions, ivf))
}

fn corrupt(message: &str) -> IndexError {
    IndexError::CorruptFile(message.to_string())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("unexpected end of file"));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, IndexError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("len 2")))
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("len 4")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("len 8")))
    }

    fn f32(&mut self) -> Result<f32, IndexError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("len 4")))
    }
}
