//! Little-endian binary format for [`KnowledgeBase`].
//!
//! ```text
//! magic    "MORADB01"
//! u32      version
//! u32      d
//! u64      m
//! u32      class count, then per class: u32 byte length + UTF-8 bytes
//! m times  d x f32 embedding, u32 label id
//! u8       index flag (0 = none, 1 = IVF)
//!   if 1:  u32 nlist, u32 nprobe, u64 seed, nlist x d f32 centroids,
//!          nlist times (u32 length + length x u32 record ids)
//! u32      CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{IvfIndex, KnowledgeBase, StoreError, UNIT_TOLERANCE};
use crate::signal::ClassCatalog;

pub const DB_MAGIC: &[u8; 8] = b"MORADB01";
pub const DB_VERSION: u32 = 1;

pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(magic: &[u8; 8]) -> Self {
        Self { buf: magic.to_vec() }
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

/// Cursor over a checksummed payload. Running off the end means the payload
/// lied about its own lengths.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

#[derive(Debug)]
pub(crate) enum Framing {
    BadMagic,
    Checksum,
    Version(u32),
}

impl<'a> Reader<'a> {
    /// Checks magic, version and trailing CRC; positions the cursor after the
    /// version field.
    pub(crate) fn open(bytes: &'a [u8], magic: &[u8; 8], version: u32) -> Result<Self, Framing> {
        if bytes.len() < 8 || &bytes[..8] != magic {
            return Err(Framing::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(Framing::Checksum);
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err(Framing::Checksum);
        }
        let found = u32::from_le_bytes(payload[8..12].try_into().expect("4 bytes"));
        if found != version {
            return Err(Framing::Version(found));
        }
        Ok(Self { bytes: payload, pos: 12 })
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    pub(crate) fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn str(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn encode_database(kb: &KnowledgeBase) -> Vec<u8> {
    let mut w = Writer::new(DB_MAGIC);
    w.u32(DB_VERSION);
    w.u32(kb.dim() as u32);
    w.u64(kb.len() as u64);
    w.u32(kb.catalog().len() as u32);
    for name in kb.catalog().names() {
        w.str(name);
    }
    for id in 0..kb.len() {
        for &v in kb.key(id) {
            w.f32(v);
        }
        w.u32(kb.labels()[id]);
    }
    match kb.index() {
        None => w.u8(0),
        Some(ix) => {
            w.u8(1);
            w.u32(ix.nlist as u32);
            w.u32(ix.nprobe as u32);
            w.u64(ix.seed);
            for &v in &ix.centroids {
                w.f32(v);
            }
            for list in &ix.lists {
                w.u32(list.len() as u32);
                for &id in list {
                    w.u32(id);
                }
            }
        }
    }
    w.finish()
}

pub fn persist_database(kb: &KnowledgeBase, path: &Path) -> Result<(), StoreError> {
    fs::write(path, encode_database(kb))?;
    Ok(())
}

fn corrupt(msg: &str) -> StoreError {
    StoreError::Corrupt(msg.to_string())
}

pub fn decode_database(bytes: &[u8]) -> Result<KnowledgeBase, StoreError> {
    let mut r = Reader::open(bytes, DB_MAGIC, DB_VERSION).map_err(|f| match f {
        Framing::BadMagic => StoreError::BadMagic,
        Framing::Checksum => StoreError::ChecksumMismatch,
        Framing::Version(v) => StoreError::VersionUnsupported(v),
    })?;
    let short = || corrupt("unexpected end of payload");
    let dim = r.u32().ok_or_else(short)? as usize;
    let m = r.u64().ok_or_else(short)? as usize;
    if dim == 0 || m == 0 {
        return Err(corrupt("empty database"));
    }
    let classes = r.u32().ok_or_else(short)? as usize;
    let names = (0..classes).map(|_| r.str().ok_or_else(short)).collect::<Result<Vec<_>, _>>()?;
    let catalog = ClassCatalog::new(names).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    if r.remaining() < m.saturating_mul(dim * 4 + 4) {
        return Err(short());
    }
    let mut keys = Vec::with_capacity(m * dim);
    let mut labels = Vec::with_capacity(m);
    for id in 0..m {
        let start = keys.len();
        for _ in 0..dim {
            keys.push(r.f32().ok_or_else(short)?);
        }
        let norm = keys[start..].iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(StoreError::NotUnitNorm(id));
        }
        let label = r.u32().ok_or_else(short)?;
        if label as usize >= catalog.len() {
            return Err(StoreError::LabelOutOfRange { label: label as usize, classes: catalog.len() });
        }
        labels.push(label);
    }
    let index = match r.u8().ok_or_else(short)? {
        0 => None,
        1 => {
            let nlist = r.u32().ok_or_else(short)? as usize;
            let nprobe = r.u32().ok_or_else(short)? as usize;
            let seed = r.u64().ok_or_else(short)?;
            if nlist == 0 || nlist > m || nprobe == 0 || nprobe > nlist {
                return Err(corrupt("bad index parameters"));
            }
            let centroids = (0..nlist * dim).map(|_| r.f32().ok_or_else(short)).collect::<Result<Vec<_>, _>>()?;
            let mut seen = vec![false; m];
            let mut lists = Vec::with_capacity(nlist);
            for _ in 0..nlist {
                let len = r.u32().ok_or_else(short)? as usize;
                let mut list = Vec::with_capacity(len.min(m));
                for _ in 0..len {
                    let id = r.u32().ok_or_else(short)?;
                    match seen.get_mut(id as usize) {
                        Some(s) if !*s => *s = true,
                        _ => return Err(corrupt("posting lists do not partition the records")),
                    }
                    list.push(id);
                }
                lists.push(list);
            }
            if seen.iter().any(|s| !s) {
                return Err(corrupt("posting lists do not partition the records"));
            }
            Some(IvfIndex { nlist, nprobe, seed, centroids, lists })
        }
        _ => return Err(corrupt("unknown index flag")),
    };
    if r.remaining() != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(KnowledgeBase::from_raw_parts(dim, keys, labels, catalog, index))
}

pub fn load_database(path: &Path) -> Result<KnowledgeBase, StoreError> {
    decode_database(&fs::read(path)?)
}
