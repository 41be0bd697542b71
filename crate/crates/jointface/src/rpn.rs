//! Face region proposal stage: anchors over the shared feature map,
//! box-delta encoding, proposal decoding with NMS, and anchor-level
//! training targets.

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::tensor::Tensor;

/// Reference rectangle tied to one feature-map cell.
#[derive(Clone, Debug)]
pub struct Anchor {
    pub bbox: BBox,
    pub cell: (usize, usize),
    pub scale_index: usize,
    pub aspect_index: usize,
}

/// Scored candidate face rectangle, clipped to the image.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub bbox: BBox,
    pub score: f64,
    /// Index of the anchor the proposal decoded from (tie-break key).
    pub anchor_index: usize,
}

/// Center-offset / log-size box regression targets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

/// Keeps decoded widths finite when a raw head output explodes early in
/// training; exp(8) is ~3000x the anchor size, far beyond any toy image.
const LOG_SIZE_CLAMP: f64 = 8.0;

/// Anchors in deterministic order: feature cells row-major, then scale,
/// then aspect ratio. Cell centers sit at `(col + 0.5, row + 0.5) * stride`.
pub fn generate_anchors(
    rows: usize,
    cols: usize,
    stride: f64,
    scales: &[f64],
    ratios: &[f64],
) -> Result<Vec<Anchor>> {
    if scales.is_empty() || ratios.is_empty() {
        return Err(Error::EmptyConfig);
    }
    assert!(stride >= 1.0, "feature stride must be >= 1 pixel");
    let mut anchors = Vec::with_capacity(rows * cols * scales.len() * ratios.len());
    for r in 0..rows {
        for c in 0..cols {
            let cx = (c as f64 + 0.5) * stride;
            let cy = (r as f64 + 0.5) * stride;
            for (si, &scale) in scales.iter().enumerate() {
                for (ai, &ratio) in ratios.iter().enumerate() {
                    // ratio = h/w at constant area scale².
                    let w = scale / ratio.sqrt();
                    let h = scale * ratio.sqrt();
                    anchors.push(Anchor {
                        bbox: BBox {
                            x1: cx - 0.5 * w,
                            y1: cy - 0.5 * h,
                            x2: cx + 0.5 * w,
                            y2: cy + 0.5 * h,
                        },
                        cell: (r, c),
                        scale_index: si,
                        aspect_index: ai,
                    });
                }
            }
        }
    }
    Ok(anchors)
}

/// Regression target of `gt` relative to `anchor` in center form:
/// `tx = (gx-ax)/aw`, `ty = (gy-ay)/ah`, `tw = ln(gw/aw)`, `th = ln(gh/ah)`.
pub fn encode_delta(gt: &BBox, anchor: &BBox) -> Result<BoxDelta> {
    for b in [gt, anchor] {
        if !b.is_valid() {
            return Err(Error::DegenerateBox {
                x1: b.x1,
                y1: b.y1,
                x2: b.x2,
                y2: b.y2,
            });
        }
    }
    let (gx, gy) = gt.center();
    let (ax, ay) = anchor.center();
    Ok(BoxDelta {
        tx: (gx - ax) / anchor.width(),
        ty: (gy - ay) / anchor.height(),
        tw: (gt.width() / anchor.width()).ln(),
        th: (gt.height() / anchor.height()).ln(),
    })
}

/// Exact inverse of [`encode_delta`].
pub fn decode_delta(delta: &BoxDelta, anchor: &BBox) -> Result<BBox> {
    if !anchor.is_valid() {
        return Err(Error::DegenerateBox {
            x1: anchor.x1,
            y1: anchor.y1,
            x2: anchor.x2,
            y2: anchor.y2,
        });
    }
    let (ax, ay) = anchor.center();
    let cx = ax + delta.tx * anchor.width();
    let cy = ay + delta.ty * anchor.height();
    let w = anchor.width() * delta.tw.clamp(-LOG_SIZE_CLAMP, LOG_SIZE_CLAMP).exp();
    let h = anchor.height() * delta.th.clamp(-LOG_SIZE_CLAMP, LOG_SIZE_CLAMP).exp();
    Ok(BBox {
        x1: cx - 0.5 * w,
        y1: cy - 0.5 * h,
        x2: cx + 0.5 * w,
        y2: cy + 0.5 * h,
    })
}

/// Greedy non-maximum suppression. Candidates are visited in descending
/// score order (ties by input index); a candidate is suppressed when its
/// IoU with an already-kept box exceeds `iou_thresh`. Returns kept input
/// indices in visit order.
pub fn nms(candidates: &[(f64, BBox)], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b].0
            .partial_cmp(&candidates[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = keep
            .iter()
            .any(|&k| iou_unchecked(&candidates[k].1, &candidates[i].1) > iou_thresh);
        if !suppressed {
            keep.push(i);
        }
    }
    keep
}

/// Decodes per-anchor scores and deltas into ranked face proposals.
///
/// `score_map` is `[1, 2k, h, w]` and `delta_map` `[1, 4k, h, w]` where
/// `k` anchors live on each cell, matching [`generate_anchors`] order.
/// Proposals are decoded, clipped to the image, optionally filtered by
/// NMS, and truncated to `top_k` by descending score (ties by anchor
/// index).
pub fn propose(
    score_map: &Tensor,
    delta_map: &Tensor,
    anchors: &[Anchor],
    image_size: (f64, f64),
    top_k: usize,
    nms_iou: Option<f64>,
    min_size: f64,
) -> Result<Vec<Proposal>> {
    let ss = score_map.shape();
    let ds = delta_map.shape();
    if ss.len() != 4 || ds.len() != 4 || ss[0] != 1 || ds[0] != 1 {
        return Err(Error::ShapeMismatch {
            op: "propose",
            expected: vec![1, 0, 0, 0],
            got: ss,
        });
    }
    let (h, w) = (ss[2], ss[3]);
    if ds[2] != h || ds[3] != w || ss[1] % 2 != 0 || ds[1] % 4 != 0 {
        return Err(Error::ShapeMismatch {
            op: "propose",
            expected: ss,
            got: ds,
        });
    }
    let k = ss[1] / 2;
    if ds[1] / 4 != k || anchors.len() != h * w * k {
        return Err(Error::ShapeMismatch {
            op: "propose",
            expected: vec![h * w * k],
            got: vec![anchors.len()],
        });
    }

    let sd = score_map.data();
    let dd = delta_map.data();
    let at = |d: &[f64], ch: usize, r: usize, c: usize| d[(ch * h + r) * w + c];

    let mut cands: Vec<(f64, BBox)> = Vec::with_capacity(anchors.len());
    let mut cand_anchor: Vec<usize> = Vec::with_capacity(anchors.len());
    for (ai, anchor) in anchors.iter().enumerate() {
        let (r, c) = anchor.cell;
        let a = ai % k;
        let s0 = at(&sd, 2 * a, r, c);
        let s1 = at(&sd, 2 * a + 1, r, c);
        // softmax over {background, face}
        let m = s0.max(s1);
        let e0 = (s0 - m).exp();
        let e1 = (s1 - m).exp();
        let score = e1 / (e0 + e1);
        let delta = BoxDelta {
            tx: at(&dd, 4 * a, r, c),
            ty: at(&dd, 4 * a + 1, r, c),
            tw: at(&dd, 4 * a + 2, r, c),
            th: at(&dd, 4 * a + 3, r, c),
        };
        let decoded = decode_delta(&delta, &anchor.bbox)?.clip(image_size.0, image_size.1);
        if decoded.width() < min_size || decoded.height() < min_size {
            continue;
        }
        cands.push((score, decoded));
        cand_anchor.push(ai);
    }

    let kept: Vec<usize> = match nms_iou {
        Some(t) => nms(&cands, t),
        None => {
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.sort_by(|&a, &b| {
                cands[b].0
                    .partial_cmp(&cands[a].0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order
        }
    };

    Ok(kept
        .into_iter()
        .take(top_k)
        .map(|i| Proposal {
            bbox: cands[i].1,
            score: cands[i].0,
            anchor_index: cand_anchor[i],
        })
        .collect())
}

/// Training class of one anchor.
#[derive(Clone, Debug, PartialEq)]
pub enum AnchorAssignment {
    Face { gt: usize, delta: BoxDelta },
    Background,
    Ignore,
}

/// Two-threshold anchor labeling: face above `pos_iou`, background below
/// `neg_iou`, ignore in between. Each ground-truth box additionally claims
/// its best-overlapping anchor so no face goes unsupervised.
pub fn assign_anchor_targets(
    anchors: &[Anchor],
    gt_boxes: &[BBox],
    pos_iou: f64,
    neg_iou: f64,
) -> Vec<AnchorAssignment> {
    assert!(
        (0.0..=1.0).contains(&neg_iou) && neg_iou <= pos_iou && pos_iou <= 1.0,
        "need 0 <= neg_iou <= pos_iou <= 1"
    );
    if gt_boxes.is_empty() {
        return vec![AnchorAssignment::Background; anchors.len()];
    }

    let mut overlaps = vec![0.0; anchors.len() * gt_boxes.len()];
    for (ai, anchor) in anchors.iter().enumerate() {
        for (gi, gt) in gt_boxes.iter().enumerate() {
            overlaps[ai * gt_boxes.len() + gi] = iou_unchecked(&anchor.bbox, gt);
        }
    }

    let mut out = Vec::with_capacity(anchors.len());
    for ai in 0..anchors.len() {
        let row = &overlaps[ai * gt_boxes.len()..(ai + 1) * gt_boxes.len()];
        let (best_gt, best) = row
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (gi, &v)| if v > acc.1 { (gi, v) } else { acc });
        let assignment = if best >= pos_iou {
            AnchorAssignment::Face {
                gt: best_gt,
                delta: encode_delta(&gt_boxes[best_gt], &anchors[ai].bbox)
                    .expect("anchors and gt boxes are valid"),
            }
        } else if best < neg_iou {
            AnchorAssignment::Background
        } else {
            AnchorAssignment::Ignore
        };
        out.push(assignment);
    }

    // Best-anchor-per-gt override: every box the anchor grid overlaps gets
    // at least one positive anchor. Boxes claim anchors in descending IoU
    // order, best-covered boxes first, skipping anchors already claimed by
    // another box so that overlapping ground truths do not starve each other.
    let mut gt_order: Vec<usize> = (0..gt_boxes.len()).collect();
    let best_of = |gi: usize| {
        (0..anchors.len())
            .map(|ai| overlaps[ai * gt_boxes.len() + gi])
            .fold(-1.0, f64::max)
    };
    gt_order.sort_by(|&a, &b| {
        best_of(b)
            .partial_cmp(&best_of(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut claimed = vec![false; anchors.len()];
    for gi in gt_order {
        let mut ranked: Vec<usize> = (0..anchors.len())
            .filter(|&ai| overlaps[ai * gt_boxes.len() + gi] > 0.0)
            .collect();
        ranked.sort_by(|&a, &b| {
            overlaps[b * gt_boxes.len() + gi]
                .partial_cmp(&overlaps[a * gt_boxes.len() + gi])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        if let Some(&ai) = ranked.iter().find(|&&ai| !claimed[ai]) {
            claimed[ai] = true;
            out[ai] = AnchorAssignment::Face {
                gt: gi,
                delta: encode_delta(&gt_boxes[gi], &anchors[ai].bbox)
                    .expect("anchors and gt boxes are valid"),
            };
        }
    }
    out
}
