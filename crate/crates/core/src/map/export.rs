//! Plain-text exports for plotting.

use std::io::Write;

use super::PanopticGridMap;
use crate::geometry::UNKNOWN;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterKind {
    /// Class id per cell, `-1` for unknown.
    Class,
    /// Total uncertainty per cell, empty for unknown.
    Uncertainty,
    /// Instance id per cell, `0` for none.
    Instance,
}

/// One CSV line per grid row (row 0 first), one value per column.
pub fn write_raster_csv<W: Write>(w: &mut W, map: &PanopticGridMap, kind: RasterKind) -> std::io::Result<()> {
    let g = map.geometry();
    let mut line = String::new();
    for row in 0..g.height {
        line.clear();
        for col in 0..g.width {
            let i = row * g.width + col;
            if col > 0 {
                line.push(',');
            }
            match kind {
                RasterKind::Class => {
                    let c = map.label(i);
                    if c == UNKNOWN {
                        line.push_str("-1");
                    } else {
                        line.push_str(&c.to_string());
                    }
                }
                RasterKind::Uncertainty => {
                    if map.is_known(i) {
                        line.push_str(&format!("{:.4}", map.utilde(i)));
                    }
                }
                RasterKind::Instance => line.push_str(&map.instance(i).to_string()),
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// `id,class,x,y,z,points` per landmark in id order.
pub fn write_landmarks_csv<W: Write>(w: &mut W, map: &PanopticGridMap) -> std::io::Result<()> {
    writeln!(w, "id,class,x,y,z,points")?;
    for lm in map.landmarks().iter() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            lm.id, lm.class, lm.center.x, lm.center.y, lm.center.z, lm.point_count
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridGeometry, Pose2D, Taxonomy};
    use crate::map::AggregationStrategy;

    #[test]
    fn class_raster_layout() {
        let g = GridGeometry::new(1.0, Pose2D::default(), 3, 2).unwrap();
        let mut m = PanopticGridMap::new(g, Taxonomy::default(), AggregationStrategy::Evidential);
        m.set_cell_label(1, 2, 5);
        m.set_cell_label(5, 0, 0);
        let mut out = Vec::new();
        write_raster_csv(&mut out, &m, RasterKind::Class).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "-1,2,-1\n-1,-1,0\n");
        let mut out = Vec::new();
        write_raster_csv(&mut out, &m, RasterKind::Instance).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0,5,0\n0,0,0\n");
        let mut out = Vec::new();
        write_raster_csv(&mut out, &m, RasterKind::Uncertainty).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), ",0.0000,\n,,0.0000\n");
    }
}
