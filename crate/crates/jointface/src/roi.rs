//! RoI pooling: adaptive max pooling of variable-size feature patches to
//! a fixed output grid, with exact argmax-based backward routing.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tensor::{from_op, Tensor};

/// Fixed output extent of the pooled grid.
#[derive(Clone, Copy, Debug)]
pub struct RoiGrid {
    pub output_h: usize,
    pub output_w: usize,
}

impl RoiGrid {
    pub fn new(output_h: usize, output_w: usize) -> RoiGrid {
        assert!(output_h >= 1 && output_w >= 1);
        RoiGrid { output_h, output_w }
    }
}

/// Pools each RoI's feature patch to `output_h x output_w` by max over
/// sub-windows. Bin `(i, j)` of a patch spanning `hs x ws` cells covers
/// rows `[floor(i*hs/H), ceil((i+1)*hs/H))` and columns likewise, so every
/// bin is non-empty. Ties pick the first cell in row-major order.
///
/// `feature` is `[1, C, Hf, Wf]`; RoIs are in image coordinates and are
/// mapped to feature cells by `spatial_scale` (reciprocal of the
/// accumulated backbone stride), rounded outward with floor/ceil and
/// clamped to span at least one cell.
///
/// Returns the `[N, C, H, W]` output plus the argmax mask of flat feature
/// indices (one per output element), which drives the backward pass.
pub fn roi_pool(
    feature: &Tensor,
    rois: &[BBox],
    grid: &RoiGrid,
    spatial_scale: f64,
) -> Result<(Tensor, Rc<Vec<usize>>)> {
    let fs = feature.shape();
    if fs.len() != 4 || fs[0] != 1 {
        return Err(Error::ShapeMismatch {
            op: "roi_pool",
            expected: vec![1, 0, 0, 0],
            got: fs,
        });
    }
    assert!(spatial_scale > 0.0);
    let (ch, fh, fw) = (fs[1], fs[2], fs[3]);
    let (oh, ow) = (grid.output_h, grid.output_w);

    let mut out = vec![0.0; rois.len() * ch * oh * ow];
    let mut mask = vec![0usize; out.len()];
    {
        let fd = feature.data();
        for (ri, roi) in rois.iter().enumerate() {
            let x1s = roi.x1 * spatial_scale;
            let y1s = roi.y1 * spatial_scale;
            let x2s = roi.x2 * spatial_scale;
            let y2s = roi.y2 * spatial_scale;
            if x1s >= fw as f64 || y1s >= fh as f64 || x2s <= 0.0 || y2s <= 0.0 {
                return Err(Error::EmptyRoI { index: ri });
            }
            // Quantize outward, then clamp so the patch spans >= 1x1 cells.
            let cx1 = (x1s.floor() as i64).clamp(0, fw as i64 - 1) as usize;
            let cy1 = (y1s.floor() as i64).clamp(0, fh as i64 - 1) as usize;
            let cx2 = (x2s.ceil() as i64).clamp(cx1 as i64 + 1, fw as i64) as usize;
            let cy2 = (y2s.ceil() as i64).clamp(cy1 as i64 + 1, fh as i64) as usize;
            let (hs, ws) = (cy2 - cy1, cx2 - cx1);

            for c in 0..ch {
                let fbase = (c * fh) * fw;
                for i in 0..oh {
                    let r0 = cy1 + i * hs / oh;
                    let r1 = cy1 + ((i + 1) * hs + oh - 1) / oh; // ceil
                    for j in 0..ow {
                        let c0 = cx1 + j * ws / ow;
                        let c1 = cx1 + ((j + 1) * ws + ow - 1) / ow;
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for r in r0..r1 {
                            for cc in c0..c1 {
                                let idx = fbase + r * fw + cc;
                                if fd[idx] > best {
                                    best = fd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let oidx = ((ri * ch + c) * oh + i) * ow + j;
                        out[oidx] = best;
                        mask[oidx] = best_idx;
                    }
                }
            }
        }
    }

    let mask = Rc::new(mask);
    let fc = feature.clone();
    let bmask = Rc::clone(&mask);
    let flen = feature.len();
    let t = from_op(
        "roi_pool",
        &[feature],
        out,
        vec![rois.len(), ch, oh, ow],
        move |go| {
            let dx = scatter_backward(go, &bmask, flen).expect("mask matches forward");
            fc.accum_grad(&dx);
        },
    )?;
    Ok((t, mask))
}

/// Scatter-adds output gradients back to the argmax feature positions.
/// Cells selected by several RoIs accumulate additively.
pub fn scatter_backward(grad_out: &[f64], mask: &[usize], feature_len: usize) -> Result<Vec<f64>> {
    if grad_out.len() != mask.len() {
        return Err(Error::MaskShapeMismatch {
            mask: mask.len(),
            grad: grad_out.len(),
        });
    }
    let mut dx = vec![0.0; feature_len];
    for (g, &i) in grad_out.iter().zip(mask.iter()) {
        dx[i] += g;
    }
    Ok(dx)
}
