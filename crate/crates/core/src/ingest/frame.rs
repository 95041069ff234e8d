//! Evidential frame files (`.evf`).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    4 bytes  "EVFR"
//! version  u32      1
//! width    u32
//! height   u32
//! k        u32      number of classes
//! pixels   width*height records, row-major, each:
//!          f32 x k  evidence alpha
//!          f32      epistemic uncertainty u
//!          u32      instance id l (0 = none)
//! ```
//!
//! Pixels carrying no perception (outside every class) have all-zero evidence, `u = 1`, `l = 0`.
//! A JSON sidecar with the same stem stores the timestamp and the calibration file reference.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::IngestError;

pub const EVF_MAGIC: [u8; 4] = *b"EVFR";
pub const EVF_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionFrame {
    pub timestamp: f64,
    width: u32,
    height: u32,
    k: usize,
    alpha: Vec<f32>,
    uncertainty: Vec<f32>,
    instance: Vec<u32>,
}

/// Borrowed view of one pixel's perception vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelPerception<'a> {
    pub alpha: &'a [f32],
    pub uncertainty: f32,
    pub instance: u32,
}

impl PixelPerception<'_> {
    pub fn has_evidence(&self) -> bool {
        self.alpha.iter().any(|a| *a > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub timestamp: f64,
    pub calibration: String,
}

impl PerceptionFrame {
    /// A frame with no perception anywhere.
    pub fn empty(timestamp: f64, width: u32, height: u32, k: usize) -> Self {
        let n = width as usize * height as usize;
        Self {
            timestamp,
            width,
            height,
            k,
            alpha: vec![0.0; n * k],
            uncertainty: vec![1.0; n],
            instance: vec![0; n],
        }
    }

    /// Assembles a frame from row-major rows of already-filled pixel data.
    pub(crate) fn from_parts(
        timestamp: f64,
        width: u32,
        height: u32,
        k: usize,
        alpha: Vec<f32>,
        uncertainty: Vec<f32>,
        instance: Vec<u32>,
    ) -> Self {
        let n = width as usize * height as usize;
        assert_eq!(alpha.len(), n * k);
        assert_eq!(uncertainty.len(), n);
        assert_eq!(instance.len(), n);
        Self {
            timestamp,
            width,
            height,
            k,
            alpha,
            uncertainty,
            instance,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of classes K.
    pub fn classes(&self) -> usize {
        self.k
    }

    /// Serialized per-pixel vector length, K + 2.
    pub fn vector_len(&self) -> usize {
        self.k + 2
    }

    fn offset(&self, u: u32, v: u32) -> usize {
        assert!(u < self.width && v < self.height, "pixel ({u}, {v}) out of range");
        v as usize * self.width as usize + u as usize
    }

    pub fn pixel(&self, u: u32, v: u32) -> PixelPerception<'_> {
        let i = self.offset(u, v);
        PixelPerception {
            alpha: &self.alpha[i * self.k..(i + 1) * self.k],
            uncertainty: self.uncertainty[i],
            instance: self.instance[i],
        }
    }

    pub fn set_pixel(&mut self, u: u32, v: u32, alpha: &[f32], uncertainty: f32, instance: u32) {
        assert_eq!(alpha.len(), self.k);
        let i = self.offset(u, v);
        self.alpha[i * self.k..(i + 1) * self.k].copy_from_slice(alpha);
        self.uncertainty[i] = uncertainty;
        self.instance[i] = instance;
    }

    pub fn write_evf<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&EVF_MAGIC)?;
        w.write_u32::<LittleEndian>(EVF_VERSION)?;
        w.write_u32::<LittleEndian>(self.width)?;
        w.write_u32::<LittleEndian>(self.height)?;
        w.write_u32::<LittleEndian>(self.k as u32)?;
        for i in 0..self.instance.len() {
            for a in &self.alpha[i * self.k..(i + 1) * self.k] {
                w.write_f32::<LittleEndian>(*a)?;
            }
            w.write_f32::<LittleEndian>(self.uncertainty[i])?;
            w.write_u32::<LittleEndian>(self.instance[i])?;
        }
        Ok(())
    }

    /// Reads the binary body; the timestamp comes from the sidecar and is left at zero here.
    pub fn read_evf<R: Read>(r: &mut R) -> Result<Self, IngestError> {
        let corrupt = |e: std::io::Error| IngestError::CorruptFrame(e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(corrupt)?;
        if magic != EVF_MAGIC {
            return Err(IngestError::CorruptFrame("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(corrupt)?;
        if version != EVF_VERSION {
            return Err(IngestError::VersionMismatch {
                found: version,
                expected: EVF_VERSION,
            });
        }
        let width = r.read_u32::<LittleEndian>().map_err(corrupt)?;
        let height = r.read_u32::<LittleEndian>().map_err(corrupt)?;
        let k = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        if k == 0 || k > 254 {
            return Err(IngestError::CorruptFrame(format!("bad class count {k}")));
        }
        let mut frame = Self::empty(0.0, width, height, k);
        for i in 0..frame.instance.len() {
            for a in &mut frame.alpha[i * k..(i + 1) * k] {
                *a = r.read_f32::<LittleEndian>().map_err(corrupt)?;
            }
            frame.uncertainty[i] = r.read_f32::<LittleEndian>().map_err(corrupt)?;
            frame.instance[i] = r.read_u32::<LittleEndian>().map_err(corrupt)?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(corrupt)? != 0 {
            return Err(IngestError::CorruptFrame("trailing bytes".into()));
        }
        Ok(frame)
    }

    /// Writes `<path>` (binary) and `<path>.json` (sidecar with the stem's extension replaced).
    pub fn save(&self, path: &Path, calibration: &str) -> Result<(), IngestError> {
        let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_evf(&mut w).map_err(|e| IngestError::io(path, e))?;
        w.flush().map_err(|e| IngestError::io(path, e))?;
        let side = FrameSidecar {
            timestamp: self.timestamp,
            calibration: calibration.to_string(),
        };
        let side_path = sidecar_path(path);
        fs::write(
            &side_path,
            serde_json::to_string_pretty(&side).expect("sidecar serializes"),
        )
        .map_err(|e| IngestError::io(&side_path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, FrameSidecar), IngestError> {
        let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
        let mut frame = Self::read_evf(&mut BufReader::new(file))?;
        let side_path = sidecar_path(path);
        let text = fs::read_to_string(&side_path).map_err(|e| IngestError::io(&side_path, e))?;
        let side: FrameSidecar =
            serde_json::from_str(&text).map_err(|e| IngestError::CorruptFrame(e.to_string()))?;
        frame.timestamp = side.timestamp;
        Ok((frame, side))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
