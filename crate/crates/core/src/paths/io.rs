//! Binary persistence for the mined path index.
//!
//! Layout, all little-endian:
//!   magic "SPPI" | version u32 | K u32 | record count u64
//!   record: head u32 | tail u32 | hop u8 | hop × relation u32 | confidence f64

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{PairPaths, PathIndex, RelationPath};
use crate::error::{KgcError, Result};
use crate::kg::{EntityId, RelationId};

const MAGIC: &[u8; 4] = b"SPPI";
const VERSION: u32 = 1;

pub fn write_path_index(index: &PathIndex, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| KgcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| KgcError::io(path, e);

    let mut pairs: Vec<(&(EntityId, EntityId), &PairPaths)> = index.map.iter().collect();
    pairs.sort_by_key(|(k, _)| **k);
    let n_records: u64 = pairs
        .iter()
        .map(|(_, p)| (p.two_hop.len() + p.three_hop.len()) as u64)
        .sum();

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(index.k as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&n_records.to_le_bytes()).map_err(io_err)?;
    for (&(h, t), paths) in pairs {
        for p in paths.two_hop.iter().chain(&paths.three_hop) {
            w.write_all(&h.0.to_le_bytes()).map_err(io_err)?;
            w.write_all(&t.0.to_le_bytes()).map_err(io_err)?;
            w.write_all(&[p.hops() as u8]).map_err(io_err)?;
            for r in &p.relations {
                w.write_all(&r.0.to_le_bytes()).map_err(io_err)?;
            }
            w.write_all(&p.confidence.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(KgcError::Integrity(format!(
                "path index truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn read_path_index(path: &Path) -> Result<PathIndex> {
    let buf = fs::read(path).map_err(|e| KgcError::io(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(KgcError::Integrity("bad path index magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(KgcError::Integrity(format!(
            "path index version {version}, expected {VERSION}"
        )));
    }
    let k = c.u32()? as usize;
    let n_records = c.u64()?;

    let mut map: HashMap<(EntityId, EntityId), PairPaths> = HashMap::new();
    for _ in 0..n_records {
        let h = EntityId(c.u32()?);
        let t = EntityId(c.u32()?);
        let hops = c.u8()?;
        if hops != 2 && hops != 3 {
            return Err(KgcError::Integrity(format!("bad hop count {hops}")));
        }
        let mut relations = Vec::with_capacity(hops as usize);
        for _ in 0..hops {
            relations.push(RelationId(c.u32()?));
        }
        let confidence = c.f64()?;
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(KgcError::Integrity(format!(
                "confidence {confidence} outside (0, 1]"
            )));
        }
        let entry = map.entry((h, t)).or_default();
        let list = if hops == 2 {
            &mut entry.two_hop
        } else {
            &mut entry.three_hop
        };
        list.push(RelationPath {
            relations,
            confidence,
        });
    }
    if c.pos != buf.len() {
        return Err(KgcError::Integrity(format!(
            "{} trailing bytes after last record",
            buf.len() - c.pos
        )));
    }
    Ok(PathIndex { k, map })
}
