//! Evaluation measures for piecewise planar reconstruction: plane recall
//! curves, AP at depth-error thresholds, VOI/RI/SC clustering metrics, depth
//! metrics, and plane-parameter accuracy.

use serde::{Deserialize, Serialize};

use crate::benchmark::FrameAnnotation;
use crate::error::{PlanarError, Result};
use crate::geometry::{unproject, CameraIntrinsics, DepthMap, PixelCoord};
use crate::plane::{fit_plane_svd, param_difference, plane_depth, InstanceMask, Plane};
use crate::segmentation::SegmentationMap;

/// Depth-error thresholds of the recall curve: 0 to 1 m in 0.05 m steps.
pub const RECALL_STEP: f64 = 0.05;
pub const RECALL_STEPS: usize = 21;
/// Mask IOU threshold for detection matching.
pub const DEFAULT_IOU_MIN: f64 = 0.5;
/// Depth-error thresholds for AP.
pub const AP_DEPTH_THRESHOLDS: [f64; 3] = [0.4, 0.6, 0.9];

/// One ranked plane detection.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub plane: Plane,
    pub mask: InstanceMask,
    pub confidence: f64,
}

/// Recall as a function of the depth-error threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
}

/// The full per-frame (or aggregated) evaluation report. Field order is
/// fixed for diff-based regression testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_curve: RecallCurve,
    pub ap_04: f64,
    pub ap_06: f64,
    pub ap_09: f64,
    pub voi: f64,
    pub ri: f64,
    pub sc: f64,
    pub rel: f64,
    pub log10: f64,
    pub rmse: f64,
    pub param_mean: f64,
    pub param_weighted: f64,
}

/// One-to-one matching from predictions to ground-truth planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// For each prediction, the matched ground-truth index.
    pub pred_to_gt: Vec<Option<usize>>,
    /// For each ground truth, the matched prediction index.
    pub gt_to_pred: Vec<Option<usize>>,
}

/// Greedy one-to-one matching in descending IOU order among pairs at or
/// above the IOU threshold.
pub fn match_planes(
    preds: &[DetectionResult],
    gts: &FrameAnnotation,
    iou_min: f64,
) -> Matching {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (pi, pred) in preds.iter().enumerate() {
        for (gi, gt_mask) in gts.visible_masks.iter().enumerate() {
            let iou = pred.mask.iou(gt_mask);
            if iou >= iou_min {
                pairs.push((pi, gi, iou));
            }
        }
    }
    // descending IOU; ties resolved by (pred, gt) index for determinism
    pairs.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut pred_to_gt = vec![None; preds.len()];
    let mut gt_to_pred = vec![None; gts.visible_masks.len()];
    for (pi, gi, _) in pairs {
        if pred_to_gt[pi].is_none() && gt_to_pred[gi].is_none() {
            pred_to_gt[pi] = Some(gi);
            gt_to_pred[gi] = Some(pi);
        }
    }
    Matching { pred_to_gt, gt_to_pred }
}

/// Mean |pred depth − gt depth| over the mask-intersection pixels where both
/// plane depths are defined; `None` when no pixel qualifies.
fn mean_depth_error(
    pred: &DetectionResult,
    gt_plane: &Plane,
    gt_mask: &InstanceMask,
    intrinsics: &CameraIntrinsics,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..gt_mask.height() {
        for col in 0..gt_mask.width() {
            if !gt_mask.contains(col, row) || !pred.mask.contains(col, row) {
                continue;
            }
            let pixel = PixelCoord::new(col as f64, row as f64);
            let (Some(zp), Some(zg)) = (
                plane_depth(&pred.plane, pixel, intrinsics),
                plane_depth(gt_plane, pixel, intrinsics),
            ) else {
                continue;
            };
            sum += (zp - zg).abs();
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Plane recall at IOU ≥ 0.5 over a sweep of depth-error thresholds.
pub fn recall_curve(preds: &[DetectionResult], gts: &FrameAnnotation) -> Result<RecallCurve> {
    if gts.planes.is_empty() {
        return Err(PlanarError::UndefinedRecall);
    }
    let matching = match_planes(preds, gts, DEFAULT_IOU_MIN);
    let errors: Vec<Option<f64>> = gts
        .planes
        .iter()
        .enumerate()
        .map(|(gi, gt_plane)| {
            matching.gt_to_pred[gi].and_then(|pi| {
                mean_depth_error(&preds[pi], gt_plane, &gts.visible_masks[gi], &gts.intrinsics)
            })
        })
        .collect();
    let thresholds: Vec<f64> = (0..RECALL_STEPS).map(|i| i as f64 * RECALL_STEP).collect();
    let recall = thresholds
        .iter()
        .map(|&tau| {
            let recalled = errors.iter().filter(|e| e.is_some_and(|err| err <= tau)).count();
            recalled as f64 / gts.planes.len() as f64
        })
        .collect();
    Ok(RecallCurve { thresholds, recall })
}

/// Average precision with all-point interpolation. A detection is a true
/// positive when it claims an unclaimed ground truth at IOU ≥ `iou_min` with
/// mean depth error ≤ `depth_max`.
pub fn average_precision(
    preds: &[DetectionResult],
    gts: &FrameAnnotation,
    iou_min: f64,
    depth_max: f64,
) -> f64 {
    if gts.planes.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut claimed = vec![false; gts.planes.len()];
    let mut tp_flags = Vec::with_capacity(preds.len());
    for &pi in &order {
        let pred = &preds[pi];
        // best-IOU unclaimed gt that also passes the depth test
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt_mask) in gts.visible_masks.iter().enumerate() {
            if claimed[gi] {
                continue;
            }
            let iou = pred.mask.iou(gt_mask);
            if iou < iou_min {
                continue;
            }
            let ok = mean_depth_error(pred, &gts.planes[gi], gt_mask, &gts.intrinsics)
                .is_some_and(|err| err <= depth_max);
            if ok && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                claimed[gi] = true;
                tp_flags.push(true);
            }
            None => tp_flags.push(false),
        }
    }

    // precision-recall points, then the interpolated area
    let total_gt = gts.planes.len() as f64;
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(tp_flags.len()); // (recall, precision)
    for (rank, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / total_gt, tp as f64 / (rank + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(r, _)) in points.iter().enumerate() {
        if r > prev_recall {
            let envelope = points[i..]
                .iter()
                .map(|&(_, p)| p)
                .fold(0.0f64, f64::max);
            ap += (r - prev_recall) * envelope;
            prev_recall = r;
        }
    }
    ap
}

/// Variation of information, Rand index, and segmentation covering between
/// two segmentations. `NON_PLANAR` participates as one ordinary segment.
pub fn clustering_metrics(
    pred: &SegmentationMap,
    gt: &SegmentationMap,
) -> Result<(f64, f64, f64)> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(PlanarError::Shape(format!(
            "pred is {}x{}, gt is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let n = pred.labels().len();
    if n == 0 {
        return Err(PlanarError::EmptySupport("empty segmentation".into()));
    }
    let nf = n as f64;

    // joint label histogram
    let mut joint: std::collections::HashMap<(u16, u16), usize> = std::collections::HashMap::new();
    let mut pred_hist: std::collections::HashMap<u16, usize> = std::collections::HashMap::new();
    let mut gt_hist: std::collections::HashMap<u16, usize> = std::collections::HashMap::new();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        *joint.entry((p, g)).or_default() += 1;
        *pred_hist.entry(p).or_default() += 1;
        *gt_hist.entry(g).or_default() += 1;
    }

    let entropy = |hist: &std::collections::HashMap<u16, usize>| {
        hist.values()
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum::<f64>()
    };
    let h_pred = entropy(&pred_hist);
    let h_gt = entropy(&gt_hist);
    let mutual: f64 = joint
        .iter()
        .map(|(&(p, g), &c)| {
            let pj = c as f64 / nf;
            let pp = pred_hist[&p] as f64 / nf;
            let pg = gt_hist[&g] as f64 / nf;
            pj * (pj / (pp * pg)).ln()
        })
        .sum();
    let voi = (h_pred + h_gt - 2.0 * mutual).max(0.0);

    // Rand index from pair counts
    let choose2 = |c: usize| (c * c.saturating_sub(1) / 2) as f64;
    let total_pairs = choose2(n);
    let ri = if total_pairs == 0.0 {
        1.0
    } else {
        let same_same: f64 = joint.values().map(|&c| choose2(c)).sum();
        let same_pred: f64 = pred_hist.values().map(|&c| choose2(c)).sum();
        let same_gt: f64 = gt_hist.values().map(|&c| choose2(c)).sum();
        let diff_diff = total_pairs - same_pred - same_gt + same_same;
        (same_same + diff_diff) / total_pairs
    };

    // segmentation covering: area-weighted best IOU per ground-truth region
    let mut sc = 0.0;
    for (&g, &g_area) in &gt_hist {
        let mut best_iou = 0.0f64;
        for (&p, &p_area) in &pred_hist {
            let inter = joint.get(&(p, g)).copied().unwrap_or(0);
            if inter == 0 {
                continue;
            }
            let union = g_area + p_area - inter;
            best_iou = best_iou.max(inter as f64 / union as f64);
        }
        sc += g_area as f64 * best_iou;
    }
    sc /= nf;

    Ok((voi, ri, sc))
}

/// Standard depthmap metrics over jointly valid pixels: mean relative error,
/// mean |log10 p − log10 g|, and RMSE.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<(f64, f64, f64)> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(PlanarError::Shape(format!(
            "pred is {}x{}, gt is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut rel = 0.0;
    let mut log10 = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if p <= 0.0 || g <= 0.0 {
            continue;
        }
        rel += (p - g).abs() / g;
        log10 += (p.log10() - g.log10()).abs();
        sq += (p - g) * (p - g);
        count += 1;
    }
    if count == 0 {
        return Err(PlanarError::EmptySupport(
            "no pixel is valid in both depth maps".into(),
        ));
    }
    let nf = count as f64;
    Ok((rel / nf, log10 / nf, (sq / nf).sqrt()))
}

/// Plane-parameter accuracy report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterAccuracy {
    pub mean: f64,
    pub area_weighted_mean: f64,
    pub evaluated_segments: usize,
    pub skipped_segments: usize,
}

/// Per ground-truth segment: unprojects the predicted depth inside the
/// segment, fits a plane by SVD, and measures the parameter difference
/// against the ground-truth plane. Segments with fewer than 3 valid pixels
/// (or a degenerate fit) are skipped and counted.
pub fn parameter_accuracy(
    pred_depth: &DepthMap,
    gt: &FrameAnnotation,
) -> Result<ParameterAccuracy> {
    let intrinsics = &gt.intrinsics;
    if pred_depth.width() != intrinsics.width || pred_depth.height() != intrinsics.height {
        return Err(PlanarError::Shape(format!(
            "pred depth is {}x{} but the frame is {}x{}",
            pred_depth.width(),
            pred_depth.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    let mut diffs: Vec<(f64, f64)> = Vec::new(); // (difference, segment area)
    let mut skipped = 0usize;
    for (gt_plane, gt_mask) in gt.planes.iter().zip(&gt.visible_masks) {
        let mut points = Vec::new();
        for row in 0..gt_mask.height() {
            for col in 0..gt_mask.width() {
                if !gt_mask.contains(col, row) {
                    continue;
                }
                let Some(z) = pred_depth.depth_at(col, row) else { continue };
                points.push(unproject(PixelCoord::new(col as f64, row as f64), z, intrinsics)?);
            }
        }
        if points.len() < 3 {
            skipped += 1;
            continue;
        }
        match fit_plane_svd(&points) {
            Ok(fit) => diffs.push((
                param_difference(&fit.plane, gt_plane),
                gt_mask.area() as f64,
            )),
            Err(PlanarError::DegenerateGeometry(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if diffs.is_empty() {
        return Err(PlanarError::EmptySupport(
            "every ground-truth segment was skipped".into(),
        ));
    }
    let mean = diffs.iter().map(|(d, _)| d).sum::<f64>() / diffs.len() as f64;
    let total_area: f64 = diffs.iter().map(|(_, a)| a).sum();
    let weighted = diffs.iter().map(|(d, a)| d * a).sum::<f64>() / total_area;
    Ok(ParameterAccuracy {
        mean,
        area_weighted_mean: weighted,
        evaluated_segments: diffs.len(),
        skipped_segments: skipped,
    })
}

/// Assembles the full evaluation report for one frame.
pub fn evaluate(
    preds: &[DetectionResult],
    pred_depth: &DepthMap,
    pred_segmentation: &SegmentationMap,
    gt: &FrameAnnotation,
) -> Result<EvalReport> {
    let curve = recall_curve(preds, gt)?;
    let gt_segmentation = SegmentationMap::from_masks(
        &gt.visible_masks,
        gt.gt_depth.width(),
        gt.gt_depth.height(),
    )?;
    let (voi, ri, sc) = clustering_metrics(pred_segmentation, &gt_segmentation)?;
    let (rel, log10, rmse) = depth_metrics(pred_depth, &gt.gt_depth)?;
    let params = parameter_accuracy(pred_depth, gt)?;
    Ok(EvalReport {
        recall_curve: curve,
        ap_04: average_precision(preds, gt, DEFAULT_IOU_MIN, AP_DEPTH_THRESHOLDS[0]),
        ap_06: average_precision(preds, gt, DEFAULT_IOU_MIN, AP_DEPTH_THRESHOLDS[1]),
        ap_09: average_precision(preds, gt, DEFAULT_IOU_MIN, AP_DEPTH_THRESHOLDS[2]),
        voi,
        ri,
        sc,
        rel,
        log10,
        rmse,
        param_mean: params.mean,
        param_weighted: params.area_weighted_mean,
    })
}
