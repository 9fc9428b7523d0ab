//! File formats and the on-disk frame-bundle layout.
//!
//! A frame bundle is a directory holding:
//!
//! ```text
//! frame/
//!   intrinsics.txt     fx fy cx cy width height
//!   pose.txt           three lines: R row then the t component (3x4)
//!   depth.pgdm         raw depth (or depth.png, 16-bit millimeters)
//!   sensor_depth.pgdm  optional sensor depth
//!   planes.csv         id,nx,ny,nz,d,anchor_id,confidence,is_layout
//!   masks/<id>.png     8-bit binary instance masks, one per plane id
//!   segmentation.png   optional 16-bit label image, 65535 = non-planar
//! ```
//!
//! Depth has two interchangeable encodings: a raw little-endian f32 file
//! with a 16-byte header (magic `PGDM`, u32 width, u32 height, u32
//! reserved), bit-exact on round trip, and a 16-bit PNG in millimeters
//! (0 = invalid) good to 0.001 m below 65.535 m.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::anchors::AnchorSet;
use crate::benchmark::FrameAnnotation;
use crate::error::{PlanarError, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, Mat3, Pose, Vec3};
use crate::metrics::{EvalReport, RecallCurve};
use crate::plane::{InstanceMask, Plane};
use crate::segmentation::{SegmentationMap, NON_PLANAR};

const DEPTH_MAGIC: &[u8; 4] = b"PGDM";
/// Largest depth representable in the millimeter PNG encoding.
pub const PNG_DEPTH_MAX: f64 = 65.535;

// ---------------------------------------------------------------------------
// depth maps

pub fn write_depth_raw(depth: &DepthMap, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + depth.values().len() * 4);
    buf.extend_from_slice(DEPTH_MAGIC);
    buf.extend_from_slice(&(depth.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(depth.height() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &z in depth.values() {
        buf.extend_from_slice(&(z as f32).to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_depth_raw(path: &Path) -> Result<DepthMap> {
    let data = fs::read(path)?;
    if data.len() < 16 {
        return Err(PlanarError::Format {
            offset: data.len() as u64,
            message: "file shorter than the 16-byte header".into(),
        });
    }
    if &data[0..4] != DEPTH_MAGIC {
        return Err(PlanarError::Format { offset: 0, message: "bad magic, expected PGDM".into() });
    }
    let width = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| PlanarError::Format {
            offset: 4,
            message: format!("dimension overflow: {width}x{height}"),
        })?;
    if data.len() != 16 + expected {
        return Err(PlanarError::Format {
            offset: data.len() as u64,
            message: format!("expected {} payload bytes, found {}", expected, data.len() - 16),
        });
    }
    let values = data[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DepthMap::new(width, height, values)
}

/// Writes depth as a 16-bit grayscale PNG in millimeters, 0 = invalid.
pub fn write_depth_png(depth: &DepthMap, path: &Path) -> Result<()> {
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        depth.width() as u32,
        depth.height() as u32,
    );
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            let z = depth.get(col, row);
            if z > PNG_DEPTH_MAX {
                return Err(PlanarError::Domain(format!(
                    "depth {z} m at ({col},{row}) exceeds the {PNG_DEPTH_MAX} m PNG ceiling"
                )));
            }
            let mm = (z * 1000.0).round() as u16;
            img.put_pixel(col as u32, row as u32, image::Luma([mm]));
        }
    }
    img.save(path)?;
    Ok(())
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    let values = img.pixels().map(|p| p.0[0] as f64 / 1000.0).collect();
    DepthMap::new(w as usize, h as usize, values)
}

/// Reads whichever depth encoding is present, preferring the raw file.
pub fn read_depth_auto(dir: &Path, stem: &str) -> Result<DepthMap> {
    let raw = dir.join(format!("{stem}.pgdm"));
    if raw.exists() {
        return read_depth_raw(&raw);
    }
    let png = dir.join(format!("{stem}.png"));
    if png.exists() {
        return read_depth_png(&png);
    }
    Err(PlanarError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("neither {stem}.pgdm nor {stem}.png in {}", dir.display()),
    )))
}

// ---------------------------------------------------------------------------
// anchors

pub fn write_anchors(set: &AnchorSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{}\n", set.len()));
    for a in set.anchors() {
        out.push_str(&format!("{:.8e} {:.8e} {:.8e}\n", a.x, a.y, a.z));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_anchors(path: &Path) -> Result<AnchorSet> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(PlanarError::Parse {
        line: 1,
        message: "empty anchor file".into(),
    })?;
    let k: usize = first.trim().parse().map_err(|_| PlanarError::Parse {
        line: 1,
        message: format!("expected anchor count, got '{first}'"),
    })?;
    let mut anchors = Vec::with_capacity(k);
    for (idx, line) in lines.take(k) {
        let parts: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| PlanarError::Parse {
                line: idx + 1,
                message: format!("expected three floats, got '{line}'"),
            })?;
        if parts.len() != 3 {
            return Err(PlanarError::Parse {
                line: idx + 1,
                message: format!("expected three components, got {}", parts.len()),
            });
        }
        let v = Vec3::new(parts[0], parts[1], parts[2]);
        let norm = v.norm();
        if norm < 1e-9 {
            return Err(PlanarError::Parse {
                line: idx + 1,
                message: "zero-length anchor".into(),
            });
        }
        anchors.push(v / norm);
    }
    if anchors.len() != k {
        return Err(PlanarError::Parse {
            line: anchors.len() + 1,
            message: format!("declared {k} anchors, found {}", anchors.len()),
        });
    }
    AnchorSet::new(anchors)
}

// ---------------------------------------------------------------------------
// plane tables

/// One row of the plane table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRecord {
    pub id: usize,
    pub plane: Plane,
    pub anchor_id: Option<usize>,
    pub confidence: f64,
    pub is_layout: bool,
}

pub fn write_plane_table(records: &[PlaneRecord], path: &Path) -> Result<()> {
    let mut out = String::from("id,nx,ny,nz,d,anchor_id,confidence,is_layout\n");
    for r in records {
        let n = r.plane.normal();
        let anchor = r.anchor_id.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{},{},{}\n",
            r.id,
            n.x,
            n.y,
            n.z,
            r.plane.offset(),
            anchor,
            r.confidence,
            u8::from(r.is_layout)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_plane_table(path: &Path) -> Result<Vec<PlaneRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "id,nx,ny,nz,d,anchor_id,confidence,is_layout" {
                return Err(PlanarError::Parse {
                    line: 1,
                    message: format!("unexpected header '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(PlanarError::Parse {
                line: idx + 1,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| PlanarError::Parse {
                line: idx + 1,
                message: format!("bad {what} '{s}'"),
            })
        };
        let id: usize = fields[0].trim().parse().map_err(|_| PlanarError::Parse {
            line: idx + 1,
            message: format!("bad id '{}'", fields[0]),
        })?;
        let normal = Vec3::new(
            parse_f(fields[1], "nx")?,
            parse_f(fields[2], "ny")?,
            parse_f(fields[3], "nz")?,
        );
        let norm = normal.norm();
        if (norm - 1.0).abs() > 1e-6 {
            eprintln!(
                "warning: plane {id} normal has norm {norm:.9}, renormalizing"
            );
        }
        let d = parse_f(fields[4], "d")?;
        let plane = Plane::new(normal, d).map_err(|e| PlanarError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let anchor_id = if fields[5].trim().is_empty() {
            None
        } else {
            Some(fields[5].trim().parse().map_err(|_| PlanarError::Parse {
                line: idx + 1,
                message: format!("bad anchor_id '{}'", fields[5]),
            })?)
        };
        let confidence = parse_f(fields[6], "confidence")?;
        let is_layout = match fields[7].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(PlanarError::Parse {
                    line: idx + 1,
                    message: format!("is_layout must be 0 or 1, got '{other}'"),
                })
            }
        };
        records.push(PlaneRecord { id, plane, anchor_id, confidence, is_layout });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// masks and segmentations

pub fn write_mask(mask: &InstanceMask, path: &Path) -> Result<()> {
    let mut img =
        image::GrayImage::new(mask.width() as u32, mask.height() as u32);
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            let v = if mask.contains(col, row) { 255 } else { 0 };
            img.put_pixel(col as u32, row as u32, image::Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<InstanceMask> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let membership = img.pixels().map(|p| p.0[0] >= 128).collect();
    InstanceMask::new(w as usize, h as usize, membership, 1.0)
}

pub fn write_segmentation(seg: &SegmentationMap, path: &Path) -> Result<()> {
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        seg.width() as u32,
        seg.height() as u32,
    );
    for row in 0..seg.height() {
        for col in 0..seg.width() {
            img.put_pixel(col as u32, row as u32, image::Luma([seg.label(col, row)]));
        }
    }
    img.save(path)?;
    Ok(())
}

pub fn read_segmentation(path: &Path) -> Result<SegmentationMap> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    SegmentationMap::new(w as usize, h as usize, img.pixels().map(|p| p.0[0]).collect())
}

// ---------------------------------------------------------------------------
// intrinsics and poses

pub fn write_intrinsics(k: &CameraIntrinsics, path: &Path) -> Result<()> {
    fs::write(
        path,
        format!(
            "{:.9e} {:.9e} {:.9e} {:.9e} {} {}\n",
            k.fx, k.fy, k.cx, k.cy, k.width, k.height
        ),
    )?;
    Ok(())
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path)?;
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(PlanarError::Parse {
            line: 1,
            message: format!("expected 6 fields (fx fy cx cy width height), got {}", parts.len()),
        });
    }
    let f = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| PlanarError::Parse {
            line: 1,
            message: format!("bad number '{s}'"),
        })
    };
    let dim = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| PlanarError::Parse {
            line: 1,
            message: format!("bad dimension '{s}'"),
        })
    };
    CameraIntrinsics::new(
        f(parts[0])?,
        f(parts[1])?,
        f(parts[2])?,
        f(parts[3])?,
        dim(parts[4])?,
        dim(parts[5])?,
    )
}

/// Pose stored as three rows of `r r r t`, camera-to-world.
pub fn write_pose(pose: &Pose, path: &Path) -> Result<()> {
    let r = pose.rotation();
    let t = pose.translation();
    let mut out = String::new();
    for row in 0..3 {
        out.push_str(&format!(
            "{:.12e} {:.12e} {:.12e} {:.12e}\n",
            r[(row, 0)],
            r[(row, 1)],
            r[(row, 2)],
            t[row]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pose(path: &Path) -> Result<Pose> {
    let text = fs::read_to_string(path)?;
    let mut rotation = Mat3::zeros();
    let mut translation = Vec3::zeros();
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != 3 {
        return Err(PlanarError::Parse {
            line: lines.len(),
            message: format!("expected 3 pose rows, got {}", lines.len()),
        });
    }
    for (row, line) in lines.iter().enumerate() {
        let parts: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| PlanarError::Parse {
                line: row + 1,
                message: format!("bad pose row '{line}'"),
            })?;
        if parts.len() != 4 {
            return Err(PlanarError::Parse {
                line: row + 1,
                message: format!("expected 4 values per pose row, got {}", parts.len()),
            });
        }
        for col in 0..3 {
            rotation[(row, col)] = parts[col];
        }
        translation[row] = parts[3];
    }
    Pose::new(rotation, translation).map_err(|e| PlanarError::Parse {
        line: 1,
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// frame bundles

/// An in-memory frame bundle as read from disk.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub depth: DepthMap,
    pub sensor_depth: Option<DepthMap>,
    pub planes: Vec<PlaneRecord>,
    pub masks: Vec<InstanceMask>,
    pub segmentation: Option<SegmentationMap>,
}

impl FrameBundle {
    /// Mask dimensions and ids must line up with the plane table.
    pub fn validate(&self) -> Result<()> {
        let w = self.intrinsics.width;
        let h = self.intrinsics.height;
        if self.depth.width() != w || self.depth.height() != h {
            return Err(PlanarError::Shape(format!(
                "depth is {}x{}, intrinsics expect {w}x{h}",
                self.depth.width(),
                self.depth.height()
            )));
        }
        if self.planes.len() != self.masks.len() {
            return Err(PlanarError::Shape(format!(
                "{} plane rows vs {} masks",
                self.planes.len(),
                self.masks.len()
            )));
        }
        for (i, m) in self.masks.iter().enumerate() {
            if m.width() != w || m.height() != h {
                return Err(PlanarError::Shape(format!("mask {i} dimensions differ")));
            }
        }
        if let Some(seg) = &self.segmentation {
            if seg.width() != w || seg.height() != h {
                return Err(PlanarError::Shape("segmentation dimensions differ".into()));
            }
        }
        Ok(())
    }

    pub fn to_annotation(&self) -> Result<FrameAnnotation> {
        self.validate()?;
        let ann = FrameAnnotation {
            planes: self.planes.iter().map(|r| r.plane).collect(),
            visible_masks: self
                .masks
                .iter()
                .zip(&self.planes)
                .map(|(m, r)| m.clone().with_confidence(r.confidence))
                .collect::<Result<_>>()?,
            complete_masks: None,
            is_layout: self.planes.iter().map(|r| r.is_layout).collect(),
            gt_depth: self.depth.clone(),
            pose: self.pose.clone(),
            intrinsics: self.intrinsics,
        };
        ann.validate()?;
        Ok(ann)
    }
}

fn mask_path(dir: &Path, id: usize) -> PathBuf {
    dir.join("masks").join(format!("{id:03}.png"))
}

pub fn read_frame_bundle(dir: &Path) -> Result<FrameBundle> {
    let intrinsics = read_intrinsics(&dir.join("intrinsics.txt"))?;
    let pose = read_pose(&dir.join("pose.txt"))?;
    let depth = read_depth_auto(dir, "depth")?;
    let sensor_path_raw = dir.join("sensor_depth.pgdm");
    let sensor_path_png = dir.join("sensor_depth.png");
    let sensor_depth = if sensor_path_raw.exists() || sensor_path_png.exists() {
        Some(read_depth_auto(dir, "sensor_depth")?)
    } else {
        None
    };
    let planes_path = dir.join("planes.csv");
    let planes = if planes_path.exists() {
        read_plane_table(&planes_path)?
    } else {
        Vec::new()
    };
    let mut masks = Vec::with_capacity(planes.len());
    for r in &planes {
        masks.push(read_mask(&mask_path(dir, r.id))?);
    }
    let seg_path = dir.join("segmentation.png");
    let segmentation = if seg_path.exists() {
        Some(read_segmentation(&seg_path)?)
    } else {
        None
    };
    let bundle = FrameBundle {
        intrinsics,
        pose,
        depth,
        sensor_depth,
        planes,
        masks,
        segmentation,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_frame_bundle(bundle: &FrameBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir.join("masks"))?;
    write_intrinsics(&bundle.intrinsics, &dir.join("intrinsics.txt"))?;
    write_pose(&bundle.pose, &dir.join("pose.txt"))?;
    write_depth_raw(&bundle.depth, &dir.join("depth.pgdm"))?;
    if let Some(sensor) = &bundle.sensor_depth {
        write_depth_raw(sensor, &dir.join("sensor_depth.pgdm"))?;
    }
    write_plane_table(&bundle.planes, &dir.join("planes.csv"))?;
    for (r, m) in bundle.planes.iter().zip(&bundle.masks) {
        write_mask(m, &mask_path(dir, r.id))?;
    }
    if let Some(seg) = &bundle.segmentation {
        write_segmentation(seg, &dir.join("segmentation.png"))?;
    }
    Ok(())
}

/// Writes an annotation as a frame bundle; labels come from the visible
/// masks, complete masks (when present) land in `complete_masks/`.
pub fn write_annotation(annotation: &FrameAnnotation, dir: &Path) -> Result<()> {
    annotation.validate()?;
    let records: Vec<PlaneRecord> = annotation
        .planes
        .iter()
        .enumerate()
        .map(|(i, p)| PlaneRecord {
            id: i,
            plane: *p,
            anchor_id: None,
            confidence: annotation.visible_masks[i].confidence(),
            is_layout: annotation.is_layout[i],
        })
        .collect();
    let segmentation = SegmentationMap::from_masks(
        &annotation.visible_masks,
        annotation.gt_depth.width(),
        annotation.gt_depth.height(),
    )?;
    let bundle = FrameBundle {
        intrinsics: annotation.intrinsics,
        pose: annotation.pose.clone(),
        depth: annotation.gt_depth.clone(),
        sensor_depth: None,
        planes: records,
        masks: annotation.visible_masks.clone(),
        segmentation: Some(segmentation),
    };
    write_frame_bundle(&bundle, dir)?;
    if let Some(complete) = &annotation.complete_masks {
        fs::create_dir_all(dir.join("complete_masks"))?;
        for (i, m) in complete.iter().enumerate() {
            write_mask(m, &dir.join("complete_masks").join(format!("{i:03}.png")))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reports

pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| PlanarError::Domain(format!("report serialization failed: {e}")))?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    serde_json::from_str(&text)
        .map_err(|e| PlanarError::Parse { line: 0, message: format!("bad report JSON: {e}") })
}

/// Two-column CSV (threshold, recall) for plotting.
pub fn write_recall_csv(curve: &RecallCurve, path: &Path) -> Result<()> {
    let mut out = String::from("threshold,recall\n");
    for (t, r) in curve.thresholds.iter().zip(&curve.recall) {
        out.push_str(&format!("{t:.2},{r:.6}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Derives a segmentation for evaluation: the stored label image when
/// present, otherwise labels from the instance masks.
pub fn bundle_segmentation(bundle: &FrameBundle) -> Result<SegmentationMap> {
    if let Some(seg) = &bundle.segmentation {
        return Ok(seg.clone());
    }
    if bundle.masks.is_empty() {
        return Ok(SegmentationMap::new(
            bundle.intrinsics.width,
            bundle.intrinsics.height,
            vec![NON_PLANAR; bundle.intrinsics.width * bundle.intrinsics.height],
        )?);
    }
    SegmentationMap::from_masks(&bundle.masks, bundle.intrinsics.width, bundle.intrinsics.height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn raw_depth_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.pgdm");
        let depth = DepthMap::new(3, 2, vec![0.0, 1.25, 2.5, 0.0, 65.0, 0.125]).unwrap();
        write_depth_raw(&depth, &path).unwrap();
        let back = read_depth_raw(&path).unwrap();
        assert_eq!(back, depth); // f32-exact values chosen above
    }

    #[test]
    fn raw_depth_rejects_bad_magic_and_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.pgdm");
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_depth_raw(&path), Err(PlanarError::Format { .. })));
        let mut buf = Vec::new();
        buf.extend_from_slice(b"PGDM");
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&1.0f32.to_le_bytes()); // 1 of 4 pixels
        fs::write(&path, buf).unwrap();
        assert!(matches!(read_depth_raw(&path), Err(PlanarError::Format { .. })));
    }

    #[test]
    fn png_depth_millimeter_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = DepthMap::new(2, 1, vec![1.234, 0.0]).unwrap();
        write_depth_png(&depth, &path).unwrap();
        let back = read_depth_png(&path).unwrap();
        assert!((back.get(0, 0) - 1.234).abs() < 1e-9);
        assert_eq!(back.get(1, 0), 0.0);
    }

    #[test]
    fn png_depth_range_error() {
        let dir = tempdir().unwrap();
        let depth = DepthMap::new(1, 1, vec![70.0]).unwrap();
        assert!(write_depth_png(&depth, &dir.path().join("d.png")).is_err());
    }

    #[test]
    fn anchors_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("anchors.txt");
        let set = AnchorSet::new(vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ])
        .unwrap();
        write_anchors(&set, &path).unwrap();
        let back = read_anchors(&path).unwrap();
        for (a, b) in set.anchors().iter().zip(back.anchors()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn plane_table_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("planes.csv");
        let records = vec![
            PlaneRecord {
                id: 0,
                plane: Plane::new(Vec3::new(0.0, 0.0, 1.0), 2.0).unwrap(),
                anchor_id: Some(3),
                confidence: 0.75,
                is_layout: true,
            },
            PlaneRecord {
                id: 1,
                plane: Plane::new(Vec3::new(0.6, 0.0, 0.8), 1.25).unwrap(),
                anchor_id: None,
                confidence: 1.0,
                is_layout: false,
            },
        ];
        write_plane_table(&records, &path).unwrap();
        let back = read_plane_table(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert!((a.plane.normal() - b.plane.normal()).norm() < 1e-8);
            assert!((a.plane.offset() - b.plane.offset()).abs() < 1e-8);
            assert_eq!(a.anchor_id, b.anchor_id);
            assert_eq!(a.is_layout, b.is_layout);
        }
    }

    #[test]
    fn plane_table_accepts_slightly_off_normal() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("planes.csv");
        fs::write(
            &path,
            "id,nx,ny,nz,d,anchor_id,confidence,is_layout\n0,0,0,1.0000001,2.0,,1.0,0\n",
        )
        .unwrap();
        let back = read_plane_table(&path).unwrap();
        assert!((back[0].plane.normal().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_table_rejects_bad_layout_flag() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("planes.csv");
        fs::write(
            &path,
            "id,nx,ny,nz,d,anchor_id,confidence,is_layout\n0,0,0,1,2.0,,1.0,2\n",
        )
        .unwrap();
        assert!(matches!(read_plane_table(&path), Err(PlanarError::Parse { .. })));
    }

    #[test]
    fn segmentation_round_trip_with_non_planar() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("seg.png");
        let seg = SegmentationMap::new(2, 2, vec![0, 1, NON_PLANAR, 2]).unwrap();
        write_segmentation(&seg, &path).unwrap();
        assert_eq!(read_segmentation(&path).unwrap(), seg);
    }

    #[test]
    fn pose_and_intrinsics_round_trip() {
        let dir = tempdir().unwrap();
        let angle: f64 = 0.3;
        let r = Mat3::new(
            angle.cos(), -angle.sin(), 0.0,
            angle.sin(), angle.cos(), 0.0,
            0.0, 0.0, 1.0,
        );
        let pose = Pose::new(r, Vec3::new(0.1, -0.2, 0.3)).unwrap();
        write_pose(&pose, &dir.path().join("pose.txt")).unwrap();
        let back = read_pose(&dir.path().join("pose.txt")).unwrap();
        assert!((back.rotation() - pose.rotation()).abs().max() < 1e-10);
        assert!((back.translation() - pose.translation()).norm() < 1e-10);

        let k = CameraIntrinsics::new(500.0, 510.0, 320.0, 240.0, 640, 480).unwrap();
        write_intrinsics(&k, &dir.path().join("intrinsics.txt")).unwrap();
        let kb = read_intrinsics(&dir.path().join("intrinsics.txt")).unwrap();
        assert_eq!(k, kb);
    }

    #[test]
    fn frame_bundle_round_trip() {
        let dir = tempdir().unwrap();
        let k = CameraIntrinsics::new(20.0, 20.0, 7.5, 5.5, 16, 12).unwrap();
        let plane = Plane::new(Vec3::new(0.0, 0.0, 1.0), 2.0).unwrap();
        let mut mask = InstanceMask::empty(16, 12);
        for row in 0..6 {
            for col in 0..16 {
                mask.set(col, row, true);
            }
        }
        let bundle = FrameBundle {
            intrinsics: k,
            pose: Pose::identity(),
            depth: DepthMap::filled(16, 12, 2.0).unwrap(),
            sensor_depth: None,
            planes: vec![PlaneRecord {
                id: 0,
                plane,
                anchor_id: None,
                confidence: 1.0,
                is_layout: false,
            }],
            masks: vec![mask.clone()],
            segmentation: None,
        };
        write_frame_bundle(&bundle, dir.path()).unwrap();
        let back = read_frame_bundle(dir.path()).unwrap();
        assert_eq!(back.planes.len(), 1);
        assert_eq!(back.masks[0], mask);
        assert_eq!(back.depth, bundle.depth);
    }
}
