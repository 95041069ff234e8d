//! PLY point lists: `x y z` vertices, ASCII or binary little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::IngestError;
use crate::geometry::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

pub fn write_ply<W: Write>(w: &mut W, points: &[Point3], enc: PlyEncoding) -> std::io::Result<()> {
    let format = match enc {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )?;
    for p in points {
        match enc {
            PlyEncoding::Ascii => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
            PlyEncoding::BinaryLittleEndian => {
                w.write_f64::<LittleEndian>(p.x)?;
                w.write_f64::<LittleEndian>(p.y)?;
                w.write_f64::<LittleEndian>(p.z)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Scalar {
    F32,
    F64,
}

pub fn read_ply<R: BufRead>(r: &mut R) -> Result<Vec<Point3>, IngestError> {
    let bad = |m: &str| IngestError::CorruptScan(m.to_string());
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<(), IngestError> {
        line.clear();
        if r.read_line(line).map_err(|e| bad(&e.to_string()))? == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(())
    };
    next_line(r, &mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut encoding = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    loop {
        next_line(r, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => {
                encoding = Some(PlyEncoding::BinaryLittleEndian)
            }
            ["format", other, _] => return Err(bad(&format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?)
            }
            ["element", ..] => return Err(bad("only vertex elements are supported")),
            ["property", ty, name] => {
                let scalar = match *ty {
                    "float" | "float32" => Scalar::F32,
                    "double" | "float64" => Scalar::F64,
                    _ => return Err(bad(&format!("unsupported property type {ty}"))),
                };
                props.push((name.to_string(), scalar));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(bad(&format!("unexpected header line {:?}", line.trim()))),
        }
    }
    let encoding = encoding.ok_or_else(|| bad("missing format"))?;
    let count = count.ok_or_else(|| bad("missing vertex element"))?;
    let slot = |name: &str| props.iter().position(|(n, _)| n == name);
    let (ix, iy, iz) = match (slot("x"), slot("y"), slot("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(bad("vertex needs x, y and z")),
    };
    let mut points = Vec::with_capacity(count);
    let mut values = vec![0.0f64; props.len()];
    for _ in 0..count {
        match encoding {
            PlyEncoding::Ascii => {
                next_line(r, &mut line)?;
                let mut it = line.split_whitespace();
                for v in values.iter_mut() {
                    *v = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("bad vertex line"))?;
                }
            }
            PlyEncoding::BinaryLittleEndian => {
                for (v, (_, ty)) in values.iter_mut().zip(&props) {
                    *v = match ty {
                        Scalar::F32 => r.read_f32::<LittleEndian>().map(f64::from),
                        Scalar::F64 => r.read_f64::<LittleEndian>(),
                    }
                    .map_err(|_| bad("truncated binary body"))?;
                }
            }
        }
        points.push(Point3::new(values[ix], values[iy], values[iz]));
    }
    if encoding == PlyEncoding::BinaryLittleEndian {
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| bad(&e.to_string()))? != 0 {
            return Err(bad("trailing bytes"));
        }
    }
    Ok(points)
}

pub fn save_scan(path: &Path, points: &[Point3], enc: PlyEncoding) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(&mut w, points, enc).map_err(|e| IngestError::io(path, e))?;
    w.flush().map_err(|e| IngestError::io(path, e))
}

pub fn load_scan(path: &Path) -> Result<Vec<Point3>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_ply(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_header_is_stable() {
        let mut out = Vec::new();
        write_ply(&mut out, &[Point3::new(1.0, -2.5, 0.125)], PlyEncoding::Ascii).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 -2.5 0.125\n"
        );
    }

    #[test]
    fn reads_float_properties_with_extra_columns() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n1 2 3 0.5\n4 5 6 0.1\n";
        let pts = read_ply(&mut text.as_bytes()).unwrap();
        assert_eq!(pts, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_ply(&mut "plx\n".as_bytes()).is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n";
        assert!(read_ply(&mut short.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_lossless(pts in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -10.0..10.0f64), 0..50),
                                 binary in any::<bool>()) {
            let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            let enc = if binary { PlyEncoding::BinaryLittleEndian } else { PlyEncoding::Ascii };
            let mut out = Vec::new();
            write_ply(&mut out, &pts, enc).unwrap();
            prop_assert_eq!(read_ply(&mut out.as_slice()).unwrap(), pts);
        }
    }
}
