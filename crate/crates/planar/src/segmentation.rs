//! Target assignment, bounding-box mask alignment, and per-pixel
//! segmentation assembly from overlapping instance masks.

use crate::error::{PlanarError, Result};
use crate::plane::InstanceMask;

/// Reserved label for pixels belonging to no plane.
pub const NON_PLANAR: u16 = u16::MAX;

/// Per-pixel plane labels; `NON_PLANAR` marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<u16>,
}

impl SegmentationMap {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(PlanarError::Shape(format!(
                "expected {} labels for {}x{}, got {}",
                width * height,
                width,
                height,
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn label(&self, col: usize, row: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Labels derived from disjoint binary masks; unclaimed pixels are
    /// `NON_PLANAR`.
    pub fn from_masks(masks: &[InstanceMask], width: usize, height: usize) -> Result<Self> {
        let mut labels = vec![NON_PLANAR; width * height];
        for (i, mask) in masks.iter().enumerate() {
            if mask.width() != width || mask.height() != height {
                return Err(PlanarError::Shape(format!("mask {i} dimensions differ")));
            }
            if i >= NON_PLANAR as usize {
                return Err(PlanarError::Domain(format!(
                    "too many masks to label ({} max)",
                    NON_PLANAR
                )));
            }
            for (j, &member) in mask.membership().iter().enumerate() {
                if member && labels[j] == NON_PLANAR {
                    labels[j] = i as u16;
                }
            }
        }
        Self::new(width, height, labels)
    }
}

/// Per-pixel membership probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(PlanarError::Shape(format!(
                "expected {} values for {}x{}, got {}",
                width * height,
                width,
                height,
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(PlanarError::Domain(format!(
                    "probability at index {i} is {v}, must lie in [0,1]"
                )));
            }
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Pixel-aligned rectangle, inclusive of `x..x+width` and `y..y+height`
/// exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Maps each prediction to the ground-truth mask with the largest pixel
/// intersection. Zero overlap with every ground truth leaves the prediction
/// unassigned; ties break to the lowest ground-truth index.
pub fn assign_targets(
    pred_masks: &[InstanceMask],
    gt_masks: &[InstanceMask],
) -> Result<Vec<Option<usize>>> {
    for (i, p) in pred_masks.iter().enumerate() {
        for (j, g) in gt_masks.iter().enumerate() {
            if p.width() != g.width() || p.height() != g.height() {
                return Err(PlanarError::Shape(format!(
                    "prediction {i} and ground truth {j} dimensions differ"
                )));
            }
        }
    }
    Ok(pred_masks
        .iter()
        .map(|pred| {
            let mut best: Option<(usize, usize)> = None; // (gt index, overlap)
            for (j, gt) in gt_masks.iter().enumerate() {
                let overlap = pred.intersection_area(gt);
                if overlap > 0 && best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((j, overlap));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect())
}

/// Resamples a soft mask into the bounding-box region of an output canvas
/// with bilinear interpolation; pixels outside the box are zero.
pub fn align_mask(
    mask: &SoftMask,
    bbox: PixelRect,
    out_width: usize,
    out_height: usize,
) -> Result<SoftMask> {
    if bbox.width == 0 || bbox.height == 0 {
        return Err(PlanarError::Domain(format!(
            "bounding box must have positive area, got {}x{}",
            bbox.width, bbox.height
        )));
    }
    if bbox.x + bbox.width > out_width || bbox.y + bbox.height > out_height {
        return Err(PlanarError::Domain(format!(
            "bounding box {:?} exceeds the {}x{} canvas",
            bbox, out_width, out_height
        )));
    }
    let mut out = vec![0.0; out_width * out_height];
    for oy in 0..bbox.height {
        for ox in 0..bbox.width {
            // map the output pixel into source coordinates; a box the size of
            // the source is an identity placement
            let sx = if bbox.width == 1 {
                0.0
            } else {
                ox as f64 * (mask.width() - 1) as f64 / (bbox.width - 1) as f64
            };
            let sy = if bbox.height == 1 {
                0.0
            } else {
                oy as f64 * (mask.height() - 1) as f64 / (bbox.height - 1) as f64
            };
            let x0 = (sx.floor() as usize).min(mask.width() - 1);
            let y0 = (sy.floor() as usize).min(mask.height() - 1);
            let x1 = (x0 + 1).min(mask.width() - 1);
            let y1 = (y0 + 1).min(mask.height() - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let v = mask.value(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + mask.value(x1, y0) * fx * (1.0 - fy)
                + mask.value(x0, y1) * (1.0 - fx) * fy
                + mask.value(x1, y1) * fx * fy;
            out[(bbox.y + oy) * out_width + (bbox.x + ox)] = v.clamp(0.0, 1.0);
        }
    }
    SoftMask::new(out_width, out_height, out)
}

/// Per-pixel argmax over soft masks, labeled `NON_PLANAR` when the best
/// probability falls below the threshold. Argmax ties break to the lowest
/// mask index.
pub fn assemble_segmentation(
    soft_masks: &[SoftMask],
    threshold: f64,
) -> Result<SegmentationMap> {
    let Some(first) = soft_masks.first() else {
        return Err(PlanarError::Shape("at least one soft mask is required".into()));
    };
    let w = first.width();
    let h = first.height();
    for (i, m) in soft_masks.iter().enumerate() {
        if m.width() != w || m.height() != h {
            return Err(PlanarError::Shape(format!("soft mask {i} dimensions differ")));
        }
    }
    let mut labels = vec![NON_PLANAR; w * h];
    for j in 0..w * h {
        let mut best_i = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (i, m) in soft_masks.iter().enumerate() {
            let p = m.values()[j];
            if p > best_p {
                best_p = p;
                best_i = i;
            }
        }
        if best_p >= threshold {
            labels[j] = best_i as u16;
        }
    }
    SegmentationMap::new(w, h, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(bits: &[u8], w: usize, h: usize) -> InstanceMask {
        InstanceMask::new(w, h, bits.iter().map(|&b| b != 0).collect(), 1.0).unwrap()
    }

    #[test]
    fn assign_exact_match() {
        let gt = vec![
            mask_from(&[1, 0, 0, 0], 2, 2),
            mask_from(&[0, 1, 0, 0], 2, 2),
            mask_from(&[0, 0, 1, 1], 2, 2),
        ];
        let pred = vec![mask_from(&[0, 0, 1, 1], 2, 2)];
        assert_eq!(assign_targets(&pred, &gt).unwrap(), vec![Some(2)]);
    }

    #[test]
    fn assign_disjoint_is_unassigned() {
        let gt = vec![mask_from(&[1, 0, 0, 0], 2, 2)];
        let pred = vec![mask_from(&[0, 0, 0, 1], 2, 2)];
        assert_eq!(assign_targets(&pred, &gt).unwrap(), vec![None]);
    }

    #[test]
    fn assign_largest_overlap_wins() {
        // 8x8 frame: gt0 covers 30 pixels of the pred, gt1 covers 31
        let mut gt0 = InstanceMask::empty(8, 8);
        let mut gt1 = InstanceMask::empty(8, 8);
        let mut pred = InstanceMask::full(8, 8);
        let mut placed0 = 0;
        let mut placed1 = 0;
        for row in 0..8 {
            for col in 0..4 {
                if placed0 < 30 {
                    gt0.set(col, row, true);
                    placed0 += 1;
                }
            }
            for col in 4..8 {
                if placed1 < 31 {
                    gt1.set(col, row, true);
                    placed1 += 1;
                }
            }
        }
        pred.set(0, 0, true);
        let assignment = assign_targets(&[pred.clone()], &[gt0.clone(), gt1.clone()]).unwrap();
        assert_eq!(assignment, vec![Some(1)]);
        // brute-force oracle
        let o0 = pred.intersection_area(&gt0);
        let o1 = pred.intersection_area(&gt1);
        assert!(o1 > o0);
    }

    #[test]
    fn assign_tie_breaks_to_lowest_index() {
        let gt = vec![
            mask_from(&[1, 0, 0, 0], 2, 2),
            mask_from(&[0, 1, 0, 0], 2, 2),
        ];
        let pred = vec![mask_from(&[1, 1, 0, 0], 2, 2)];
        assert_eq!(assign_targets(&pred, &gt).unwrap(), vec![Some(0)]);
    }

    #[test]
    fn align_identity() {
        let mask = SoftMask::new(3, 2, vec![0.1, 0.5, 0.9, 0.2, 0.4, 0.6]).unwrap();
        let out = align_mask(
            &mask,
            PixelRect { x: 0, y: 0, width: 3, height: 2 },
            3,
            2,
        )
        .unwrap();
        assert_eq!(out.values(), mask.values());
    }

    #[test]
    fn align_constant_into_quarter_frame() {
        let mask = SoftMask::new(4, 4, vec![1.0; 16]).unwrap();
        let bbox = PixelRect { x: 4, y: 4, width: 4, height: 4 };
        let out = align_mask(&mask, bbox, 8, 8).unwrap();
        for row in 0..8 {
            for col in 0..8 {
                let inside = (4..8).contains(&col) && (4..8).contains(&row);
                assert_eq!(out.value(col, row), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn align_checkerboard_upsample_matches_bilinear_grid() {
        let mask = SoftMask::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = align_mask(
            &mask,
            PixelRect { x: 0, y: 0, width: 4, height: 4 },
            4,
            4,
        )
        .unwrap();
        // source coordinates step by 1/3 across the unit cell
        for oy in 0..4 {
            for ox in 0..4 {
                let sx = ox as f64 / 3.0;
                let sy = oy as f64 / 3.0;
                let expect = 1.0 * (1.0 - sx) * (1.0 - sy)
                    + 0.0 * sx * (1.0 - sy)
                    + 0.0 * (1.0 - sx) * sy
                    + 1.0 * sx * sy;
                assert!((out.value(ox, oy) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn align_rejects_degenerate_bbox() {
        let mask = SoftMask::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(align_mask(&mask, PixelRect { x: 0, y: 0, width: 0, height: 2 }, 4, 4).is_err());
    }

    #[test]
    fn assemble_single_full_mask() {
        let m = SoftMask::new(2, 2, vec![1.0; 4]).unwrap();
        let seg = assemble_segmentation(&[m], 0.5).unwrap();
        assert!(seg.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn assemble_below_threshold_is_non_planar() {
        let m = SoftMask::new(2, 2, vec![0.4; 4]).unwrap();
        let seg = assemble_segmentation(&[m], 0.5).unwrap();
        assert!(seg.labels().iter().all(|&l| l == NON_PLANAR));
    }

    #[test]
    fn assemble_overlap_argmax_matches_pixel_scan() {
        let a = SoftMask::new(2, 1, vec![0.6, 0.6]).unwrap();
        let b = SoftMask::new(2, 1, vec![0.7, 0.3]).unwrap();
        let seg = assemble_segmentation(&[a.clone(), b.clone()], 0.5).unwrap();
        for j in 0..2 {
            let expect = if b.values()[j] > a.values()[j] && b.values()[j] >= 0.5 {
                1
            } else if a.values()[j] >= 0.5 {
                0
            } else {
                NON_PLANAR
            };
            assert_eq!(seg.labels()[j], expect);
        }
    }

    #[test]
    fn assemble_argmax_tie_breaks_to_lowest() {
        let a = SoftMask::new(1, 1, vec![0.8]).unwrap();
        let b = SoftMask::new(1, 1, vec![0.8]).unwrap();
        let seg = assemble_segmentation(&[a, b], 0.5).unwrap();
        assert_eq!(seg.labels()[0], 0);
    }

    #[test]
    fn assemble_invariant_under_zero_mask_append() {
        let a = SoftMask::new(2, 2, vec![0.9, 0.2, 0.6, 0.5]).unwrap();
        let zero = SoftMask::new(2, 2, vec![0.0; 4]).unwrap();
        let without = assemble_segmentation(&[a.clone()], 0.5).unwrap();
        let with = assemble_segmentation(&[a, zero], 0.5).unwrap();
        assert_eq!(without, with);
    }

    #[test]
    fn assemble_relabel_equivariance() {
        let a = SoftMask::new(2, 2, vec![0.9, 0.2, 0.6, 0.1]).unwrap();
        let b = SoftMask::new(2, 2, vec![0.1, 0.8, 0.2, 0.7]).unwrap();
        let fwd = assemble_segmentation(&[a.clone(), b.clone()], 0.5).unwrap();
        let rev = assemble_segmentation(&[b, a], 0.5).unwrap();
        for j in 0..4 {
            let mapped = match fwd.labels()[j] {
                0 => 1,
                1 => 0,
                other => other,
            };
            assert_eq!(rev.labels()[j], mapped);
        }
    }
}
