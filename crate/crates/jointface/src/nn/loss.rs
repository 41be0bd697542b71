//! The three task losses: attribute mean-square error, face-score softmax
//! cross-entropy, and smooth-L1 bounding-box regression.

use crate::error::{Error, Result};
use crate::tensor::{from_op, Tensor};

fn check_2d(op: &'static str, pred: &Tensor, target_len: usize) -> Result<(usize, usize)> {
    let s = pred.shape();
    if s.len() != 2 || s[0] * s[1] != target_len {
        return Err(Error::ShapeMismatch {
            op,
            expected: s,
            got: vec![target_len],
        });
    }
    Ok((s[0], s[1]))
}

fn check_mask(op: &'static str, mask: Option<&[bool]>, rows: usize) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != rows {
            return Err(Error::ShapeMismatch {
                op,
                expected: vec![rows],
                got: vec![m.len()],
            });
        }
    }
    Ok(())
}

/// Mean squared error over a label matrix. With `row_mask = None` the mean
/// runs over all `n*m` entries, which is how all-zero background rows
/// enter the attribute loss. With a mask, only masked rows are counted and
/// the denominator is `max(1, count) * m`.
pub fn mse_loss(pred: &Tensor, target: &[f64], row_mask: Option<&[bool]>) -> Result<Tensor> {
    let (n, m) = check_2d("mse_loss", pred, target.len())?;
    check_mask("mse_loss", row_mask, n)?;
    let counted: Vec<bool> = match row_mask {
        Some(mask) => mask.to_vec(),
        None => vec![true; n],
    };
    let rows = counted.iter().filter(|&&c| c).count();
    let denom = (rows.max(1) * m) as f64;

    let mut total = 0.0;
    let mut diffs = vec![0.0; n * m];
    {
        let pd = pred.data();
        for i in 0..n {
            if !counted[i] {
                continue;
            }
            for j in 0..m {
                let d = pd[i * m + j] - target[i * m + j];
                diffs[i * m + j] = d;
                total += d * d;
            }
        }
    }
    let pc = pred.clone();
    from_op("mse_loss", &[pred], vec![total / denom], vec![1], move |go| {
        let g = go[0];
        let dp: Vec<f64> = diffs.iter().map(|d| g * 2.0 * d / denom).collect();
        pc.accum_grad(&dp);
    })
}

/// Softmax cross-entropy over class logits, numerically stabilized by
/// max subtraction. Labels index the logit columns.
pub fn softmax_ce_loss(
    logits: &Tensor,
    labels: &[usize],
    row_mask: Option<&[bool]>,
) -> Result<Tensor> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "softmax_ce_loss",
            expected: s,
            got: vec![labels.len()],
        });
    }
    let (n, classes) = (s[0], s[1]);
    check_mask("softmax_ce_loss", row_mask, n)?;
    for &label in labels {
        if label >= classes {
            return Err(Error::InvalidLabel { label, classes });
        }
    }
    let counted: Vec<bool> = match row_mask {
        Some(mask) => mask.to_vec(),
        None => vec![true; n],
    };
    let denom = counted.iter().filter(|&&c| c).count().max(1) as f64;

    let mut total = 0.0;
    let mut probs = vec![0.0; n * classes];
    {
        let ld = logits.data();
        for i in 0..n {
            if !counted[i] {
                continue;
            }
            let row = &ld[i * classes..(i + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..classes {
                let e = (row[j] - max).exp();
                probs[i * classes + j] = e;
                z += e;
            }
            for j in 0..classes {
                probs[i * classes + j] /= z;
            }
            total += z.ln() + max - row[labels[i]];
        }
    }
    let labels = labels.to_vec();
    let lc = logits.clone();
    from_op(
        "softmax_ce_loss",
        &[logits],
        vec![total / denom],
        vec![1],
        move |go| {
            let g = go[0];
            let mut dl = vec![0.0; n * classes];
            for i in 0..n {
                if !counted[i] {
                    continue;
                }
                for j in 0..classes {
                    let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                    dl[i * classes + j] = g * (probs[i * classes + j] - onehot) / denom;
                }
            }
            lc.accum_grad(&dl);
        },
    )
}

fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Smooth-L1 regression loss, summed over masked rows and divided by
/// `max(1, masked-row count)`. Unmasked (background) rows contribute
/// nothing.
pub fn smooth_l1_loss(pred: &Tensor, target: &[f64], row_mask: &[bool]) -> Result<Tensor> {
    let (n, m) = check_2d("smooth_l1_loss", pred, target.len())?;
    check_mask("smooth_l1_loss", Some(row_mask), n)?;
    let denom = row_mask.iter().filter(|&&c| c).count().max(1) as f64;

    let mut total = 0.0;
    let mut diffs = vec![0.0; n * m];
    {
        let pd = pred.data();
        for i in 0..n {
            if !row_mask[i] {
                continue;
            }
            for j in 0..m {
                let d = pd[i * m + j] - target[i * m + j];
                diffs[i * m + j] = d;
                total += smooth_l1(d);
            }
        }
    }
    let mask = row_mask.to_vec();
    let pc = pred.clone();
    from_op(
        "smooth_l1_loss",
        &[pred],
        vec![total / denom],
        vec![1],
        move |go| {
            let g = go[0];
            let mut dp = vec![0.0; n * m];
            for i in 0..n {
                if !mask[i] {
                    continue;
                }
                for j in 0..m {
                    dp[i * m + j] = g * smooth_l1_grad(diffs[i * m + j]) / denom;
                }
            }
            pc.accum_grad(&dp);
        },
    )
}

/// Row-wise softmax on plain data (inference-side scoring; not recorded).
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    assert!(classes > 0 && logits.len() % classes == 0);
    let mut out = vec![0.0; logits.len()];
    for (orow, row) in out.chunks_mut(classes).zip(logits.chunks(classes)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            z += *o;
        }
        for o in orow.iter_mut() {
            *o /= z;
        }
    }
    out
}
