//! `.upm` map files.
//!
//! ```text
//! magic       4 bytes  "UPMP"
//! version     u32      UPM_VERSION
//! header_len  u32
//! header      JSON {version, geometry, taxonomy, strategy, k}
//! chunks      tag (4 bytes) + u64 payload length + payload, in this order:
//!   CNTS  u32 per cell                      measurement counts
//!   ACCU  f64 per cell and class            accumulators
//!   VOTE  u64 n, then per entry: u64 cell, u32 m, m x (u32 id, u32 count)
//!   LMRK  u32 next_id, u64 n, then per landmark: u32 id, u8 class, f64 x y z, u64 points
//!   END   empty
//! ```
//!
//! All integers and floats are little-endian. Cached labels are rebuilt on load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::landmarks::{Landmark, LandmarkRegistry};
use super::{AggregationStrategy, MapError, PanopticGridMap};
use crate::geometry::{GridGeometry, Point3, Taxonomy};

pub const UPM_MAGIC: [u8; 4] = *b"UPMP";
pub const UPM_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    geometry: GridGeometry,
    taxonomy: Taxonomy,
    strategy: AggregationStrategy,
    k: usize,
}

fn corrupt<E: std::fmt::Display>(e: E) -> MapError {
    MapError::CorruptFile(e.to_string())
}

fn chunk<W: Write>(w: &mut W, tag: &[u8; 4], payload: &[u8]) -> std::io::Result<()> {
    w.write_all(tag)?;
    w.write_u64::<LittleEndian>(payload.len() as u64)?;
    w.write_all(payload)
}

pub fn write_map<W: Write>(w: &mut W, map: &PanopticGridMap) -> std::io::Result<()> {
    let header = Header {
        version: UPM_VERSION,
        geometry: *map.geometry(),
        taxonomy: map.taxonomy().clone(),
        strategy: map.strategy(),
        k: map.classes(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(&UPM_MAGIC)?;
    w.write_u32::<LittleEndian>(UPM_VERSION)?;
    w.write_u32::<LittleEndian>(json.len() as u32)?;
    w.write_all(&json)?;

    let (accum, counts, votes) = map.raw_parts();
    let mut buf = Vec::with_capacity(counts.len() * 4);
    counts.iter().for_each(|c| buf.write_u32::<LittleEndian>(*c).unwrap());
    chunk(w, b"CNTS", &buf)?;

    buf.clear();
    accum.iter().for_each(|a| buf.write_f64::<LittleEndian>(*a).unwrap());
    chunk(w, b"ACCU", &buf)?;

    buf.clear();
    buf.write_u64::<LittleEndian>(votes.len() as u64)?;
    for (cell, v) in votes {
        buf.write_u64::<LittleEndian>(*cell as u64)?;
        buf.write_u32::<LittleEndian>(v.len() as u32)?;
        for (id, n) in v {
            buf.write_u32::<LittleEndian>(*id)?;
            buf.write_u32::<LittleEndian>(*n)?;
        }
    }
    chunk(w, b"VOTE", &buf)?;

    buf.clear();
    let reg = map.landmarks();
    buf.write_u32::<LittleEndian>(reg.next_id())?;
    buf.write_u64::<LittleEndian>(reg.len() as u64)?;
    for lm in reg.iter() {
        buf.write_u32::<LittleEndian>(lm.id)?;
        buf.write_u8(lm.class)?;
        buf.write_f64::<LittleEndian>(lm.center.x)?;
        buf.write_f64::<LittleEndian>(lm.center.y)?;
        buf.write_f64::<LittleEndian>(lm.center.z)?;
        buf.write_u64::<LittleEndian>(lm.point_count)?;
    }
    chunk(w, b"LMRK", &buf)?;
    chunk(w, b"END ", &[])
}

fn read_chunk<R: Read>(r: &mut R, want: &[u8; 4]) -> Result<Vec<u8>, MapError> {
    let mut tag = [0u8; 4];
    r.read_exact(&mut tag).map_err(corrupt)?;
    if &tag != want {
        return Err(MapError::CorruptFile(format!(
            "expected chunk {:?}, found {:?}",
            String::from_utf8_lossy(want),
            String::from_utf8_lossy(&tag)
        )));
    }
    let len = r.read_u64::<LittleEndian>().map_err(corrupt)?;
    if len > 1 << 36 {
        return Err(MapError::CorruptFile("chunk too large".into()));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(corrupt)?;
    Ok(payload)
}

pub fn read_map<R: Read>(r: &mut R) -> Result<PanopticGridMap, MapError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if magic != UPM_MAGIC {
        return Err(MapError::CorruptFile("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != UPM_VERSION {
        return Err(MapError::VersionMismatch {
            found: version,
            expected: UPM_VERSION,
        });
    }
    let hlen = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json).map_err(corrupt)?;
    let header: Header = serde_json::from_slice(&json).map_err(corrupt)?;
    if header.version != version {
        return Err(MapError::CorruptFile("header version disagrees with preamble".into()));
    }
    header.geometry.validate().map_err(corrupt)?;
    if header.k != header.taxonomy.len() {
        return Err(MapError::CorruptFile("class count disagrees with taxonomy".into()));
    }
    let cells = header.geometry.cell_count();
    let k = header.k;

    let payload = read_chunk(r, b"CNTS")?;
    if payload.len() != cells * 4 {
        return Err(MapError::CorruptFile("count chunk has the wrong size".into()));
    }
    let mut p = payload.as_slice();
    let counts: Vec<u32> = (0..cells)
        .map(|_| p.read_u32::<LittleEndian>())
        .collect::<Result<_, _>>()
        .map_err(corrupt)?;

    let payload = read_chunk(r, b"ACCU")?;
    if payload.len() != cells * k * 8 {
        return Err(MapError::CorruptFile("accumulator chunk has the wrong size".into()));
    }
    let mut p = payload.as_slice();
    let accum: Vec<f64> = (0..cells * k)
        .map(|_| p.read_f64::<LittleEndian>())
        .collect::<Result<_, _>>()
        .map_err(corrupt)?;

    let payload = read_chunk(r, b"VOTE")?;
    let mut p = payload.as_slice();
    let n = p.read_u64::<LittleEndian>().map_err(corrupt)?;
    let mut votes = BTreeMap::new();
    for _ in 0..n {
        let cell = p.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
        if cell >= cells {
            return Err(MapError::CorruptFile(format!("vote for cell {cell} outside the grid")));
        }
        let m = p.read_u32::<LittleEndian>().map_err(corrupt)?;
        let mut v = Vec::with_capacity(m.min(1024) as usize);
        for _ in 0..m {
            let id = p.read_u32::<LittleEndian>().map_err(corrupt)?;
            let c = p.read_u32::<LittleEndian>().map_err(corrupt)?;
            v.push((id, c));
        }
        votes.insert(cell, v);
    }
    if !p.is_empty() {
        return Err(MapError::CorruptFile("trailing bytes in vote chunk".into()));
    }

    let payload = read_chunk(r, b"LMRK")?;
    let mut p = payload.as_slice();
    let next_id = p.read_u32::<LittleEndian>().map_err(corrupt)?;
    let n = p.read_u64::<LittleEndian>().map_err(corrupt)?;
    let mut landmarks = LandmarkRegistry::new();
    for _ in 0..n {
        let id = p.read_u32::<LittleEndian>().map_err(corrupt)?;
        let class = p.read_u8().map_err(corrupt)?;
        let x = p.read_f64::<LittleEndian>().map_err(corrupt)?;
        let y = p.read_f64::<LittleEndian>().map_err(corrupt)?;
        let z = p.read_f64::<LittleEndian>().map_err(corrupt)?;
        let point_count = p.read_u64::<LittleEndian>().map_err(corrupt)?;
        landmarks.insert(Landmark {
            id,
            class,
            center: Point3::new(x, y, z),
            point_count,
        });
    }
    if !p.is_empty() {
        return Err(MapError::CorruptFile("trailing bytes in landmark chunk".into()));
    }
    landmarks.set_next_id(next_id);
    read_chunk(r, b"END ")?;

    Ok(PanopticGridMap::from_raw_parts(
        header.geometry,
        header.taxonomy,
        header.strategy,
        accum,
        counts,
        votes,
        landmarks,
    ))
}

pub fn save_map(path: &Path, map: &PanopticGridMap) -> Result<(), MapError> {
    let io = |e| MapError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_map(&mut w, map).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_map(path: &Path) -> Result<PanopticGridMap, MapError> {
    let file = File::open(path).map_err(|e| MapError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_map(&mut BufReader::new(file))
}
