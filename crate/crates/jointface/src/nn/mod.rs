//! Neural building blocks: convolution, max pooling, fully connected
//! layers, dropout, the three task losses, and the SGD optimizer.

pub mod dropout;
pub mod init;
pub mod loss;
pub mod sgd;

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{from_op, Tensor};
use crate::SeedRng;

pub use dropout::{dropout, Mode};
pub use loss::{mse_loss, smooth_l1_loss, softmax_ce_loss, softmax_rows};
pub use sgd::{SgdConfig, SgdState};

/// 2-D convolution layer, NCHW layout, kernel `[out_ch, in_ch, kh, kw]`.
#[derive(Clone)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayer {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut SeedRng,
    ) -> ConvLayer {
        let fan_in = in_ch * kernel * kernel;
        ConvLayer {
            kernel: init::kaiming(&[out_ch, in_ch, kernel, kernel], fan_in, rng),
            bias: Tensor::zeros(&[out_ch]).with_grad(),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.kernel, &self.bias, self.stride, self.padding)
    }

    /// Output spatial extent: `floor((in + 2 pad - k) / stride) + 1`.
    pub fn out_extent(&self, extent: usize) -> usize {
        let k = self.kernel.dim(2);
        (extent + 2 * self.padding - k) / self.stride + 1
    }
}

/// Fully connected layer, weight `[in_dim, out_dim]`.
#[derive(Clone)]
pub struct FcLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl FcLayer {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut SeedRng) -> FcLayer {
        FcLayer {
            weight: init::kaiming(&[in_dim, out_dim], in_dim, rng),
            bias: Tensor::zeros(&[out_dim]).with_grad(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add_row_bias(&self.bias)
    }
}

/// Direct convolution. `x: [n, in_ch, h, w]`, `kernel: [out_ch, in_ch, kh, kw]`.
pub fn conv2d(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let xs = x.shape();
    let ks = kernel.shape();
    if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            expected: ks,
            got: xs,
        });
    }
    let (n, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (co, _, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
    if bias.len() != co {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            expected: vec![co],
            got: bias.shape(),
        });
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            expected: ks,
            got: xs,
        });
    }
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;

    let mut out = vec![0.0; n * co * oh * ow];
    {
        let xd = x.data();
        let kd = kernel.data();
        let bd = bias.data();
        for b in 0..n {
            for o in 0..co {
                let bias_v = bd[o];
                let obase = ((b * co + o) * oh) * ow;
                for v in &mut out[obase..obase + oh * ow] {
                    *v = bias_v;
                }
                for c in 0..ci {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = kd[((o * ci + c) * kh + ky) * kw + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            accumulate_conv(
                                &xd, &mut out, b, c, o, ky, kx, wv, ci, co, h, w, oh, ow, stride,
                                padding,
                            );
                        }
                    }
                }
            }
        }
    }

    let (xc, kc, bc) = (x.clone(), kernel.clone(), bias.clone());
    from_op(
        "conv2d",
        &[x, kernel, bias],
        out,
        vec![n, co, oh, ow],
        move |go| {
            let mut dx = vec![0.0; n * ci * h * w];
            let mut dk = vec![0.0; co * ci * kh * kw];
            let mut db = vec![0.0; co];
            {
                let xd = xc.data();
                let kd = kc.data();
                for b in 0..n {
                    for o in 0..co {
                        let gbase = ((b * co + o) * oh) * ow;
                        for g in &go[gbase..gbase + oh * ow] {
                            db[o] += g;
                        }
                        for c in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let kidx = ((o * ci + c) * kh + ky) * kw + kx;
                                    let wv = kd[kidx];
                                    let (oy0, oy1) = valid_range(ky, kh, h, oh, stride, padding);
                                    let (ox0, ox1) = valid_range(kx, kw, w, ow, stride, padding);
                                    let mut dk_acc = 0.0;
                                    for oy in oy0..oy1 {
                                        let iy = oy * stride + ky - padding;
                                        let grow = &go[gbase + oy * ow..gbase + (oy + 1) * ow];
                                        let xbase = ((b * ci + c) * h + iy) * w;
                                        let dxbase = xbase;
                                        for ox in ox0..ox1 {
                                            let ix = ox * stride + kx - padding;
                                            let g = grow[ox];
                                            dk_acc += g * xd[xbase + ix];
                                            dx[dxbase + ix] += g * wv;
                                        }
                                    }
                                    dk[kidx] += dk_acc;
                                }
                            }
                        }
                    }
                }
            }
            xc.accum_grad(&dx);
            kc.accum_grad(&dk);
            bc.accum_grad(&db);
        },
    )
}

/// Output positions whose input index stays inside `[0, extent)`.
fn valid_range(
    k: usize,
    _ksz: usize,
    extent: usize,
    out_extent: usize,
    stride: usize,
    padding: usize,
) -> (usize, usize) {
    // need 0 <= o*stride + k - padding < extent
    let lo = if k >= padding {
        0
    } else {
        (padding - k + stride - 1) / stride
    };
    let hi_excl = if extent + padding > k {
        ((extent + padding - k - 1) / stride + 1).min(out_extent)
    } else {
        0
    };
    (lo.min(hi_excl), hi_excl)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_conv(
    xd: &[f64],
    out: &mut [f64],
    b: usize,
    c: usize,
    o: usize,
    ky: usize,
    kx: usize,
    wv: f64,
    ci: usize,
    co: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
) {
    let (oy0, oy1) = valid_range(ky, 0, h, oh, stride, padding);
    let (ox0, ox1) = valid_range(kx, 0, w, ow, stride, padding);
    for oy in oy0..oy1 {
        let iy = oy * stride + ky - padding;
        let xrow = &xd[((b * ci + c) * h + iy) * w..((b * ci + c) * h + iy + 1) * w];
        let obase = ((b * co + o) * oh + oy) * ow;
        let orow = &mut out[obase..obase + ow];
        for ox in ox0..ox1 {
            let ix = ox * stride + kx - padding;
            orow[ox] += wv * xrow[ix];
        }
    }
}

/// Square max pooling. Returns the pooled tensor and the argmax mask
/// (flat input indices, one per output element). Gradient routes only to
/// the recorded argmax positions; ties break to the first index in
/// row-major scan order.
pub fn maxpool2d(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Rc<Vec<usize>>)> {
    let xs = x.shape();
    if xs.len() != 4 || window == 0 || stride == 0 || window > xs[2] || window > xs[3] {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d",
            expected: vec![window, window],
            got: xs,
        });
    }
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;

    let mut out = vec![0.0; n * c * oh * ow];
    let mut mask = vec![0usize; n * c * oh * ow];
    {
        let xd = x.data();
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for ky in 0..window {
                            let iy = oy * stride + ky;
                            for kx in 0..window {
                                let ix = ox * stride + kx;
                                let idx = base + iy * w + ix;
                                if xd[idx] > best {
                                    best = xd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let oidx = ((b * c + ch) * oh + oy) * ow + ox;
                        out[oidx] = best;
                        mask[oidx] = best_idx;
                    }
                }
            }
        }
    }

    let mask = Rc::new(mask);
    let xc = x.clone();
    let bmask = Rc::clone(&mask);
    let in_len = x.len();
    let t = from_op(
        "maxpool2d",
        &[x],
        out,
        vec![n, c, oh, ow],
        move |go| {
            let mut dx = vec![0.0; in_len];
            for (g, &i) in go.iter().zip(bmask.iter()) {
                dx[i] += g;
            }
            xc.accum_grad(&dx);
        },
    )?;
    Ok((t, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;
    use rand::SeedableRng;

    fn rng(seed: u64) -> SeedRng {
        SeedRng::seed_from_u64(seed)
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::from_vec((1..=9).map(|v| v as f64).collect(), &[1, 1, 3, 3]).unwrap();
        let k = Tensor::from_vec(vec![1.0], &[1, 1, 1, 1]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &k, &b, 1, 0).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn conv_ones_hand_oracle() {
        // 4x4 ones, 2x2 ones kernel, stride 2: each output cell sums a
        // disjoint 2x2 block -> all 4.0.
        let x = Tensor::full(&[1, 1, 4, 4], 1.0);
        let k = Tensor::full(&[1, 1, 2, 2], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &k, &b, 2, 0).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 2, 2]);
        assert_eq!(y.to_vec(), vec![4.0; 4]);
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 2, 2]);
        let b = Tensor::zeros(&[1]);
        assert!(matches!(
            conv2d(&x, &k, &b, 1, 0),
            Err(Error::ShapeMismatch { op: "conv2d", .. })
        ));
    }

    #[test]
    fn conv_output_extent_formula() {
        let mut r = rng(3);
        for &(h, k, s, p) in &[(7usize, 3usize, 1usize, 1usize), (8, 3, 2, 0), (5, 5, 1, 2)] {
            let layer = ConvLayer::new(1, 1, k, s, p, &mut r);
            let x = Tensor::randn(&[1, 1, h, h], 1.0, &mut r);
            let y = layer.forward(&x).unwrap();
            let expect = (h + 2 * p - k) / s + 1;
            assert_eq!(y.shape(), vec![1, 1, expect, expect]);
            assert_eq!(layer.out_extent(h), expect);
        }
    }

    #[test]
    fn conv_gradcheck_all_inputs() {
        for seed in 0..10u64 {
            let mut r = rng(40 + seed);
            let x = Tensor::randn(&[1, 2, 6, 6], 1.0, &mut r);
            let k = Tensor::randn(&[3, 2, 3, 3], 0.5, &mut r);
            let b = Tensor::randn(&[3], 0.5, &mut r);
            let rep =
                gradcheck(|t| conv2d(t, &k, &b, 1, 1)?.mul(&conv2d(t, &k, &b, 1, 1)?)?.sum(), &x, 1e-5, 1e-4)
                    .unwrap();
            assert!(rep.passes(1e-4), "x grad seed {seed}: {}", rep.max_rel_err);
            let rep =
                gradcheck(|t| conv2d(&x, t, &b, 2, 1)?.mul(&conv2d(&x, t, &b, 2, 1)?)?.sum(), &k, 1e-5, 1e-4)
                    .unwrap();
            assert!(rep.passes(1e-4), "k grad seed {seed}: {}", rep.max_rel_err);
            let rep = gradcheck(|t| conv2d(&x, &k, t, 1, 0)?.sum(), &b, 1e-5, 1e-4).unwrap();
            assert!(rep.passes(1e-4), "b grad seed {seed}: {}", rep.max_rel_err);
        }
    }

    #[test]
    fn maxpool_picks_max_and_mask() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let (y, mask) = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.to_vec(), vec![4.0]);
        assert_eq!(mask[0], 3); // row 1, col 1
    }

    #[test]
    fn maxpool_tie_breaks_to_first() {
        let x = Tensor::full(&[1, 1, 2, 2], 7.0);
        let (y, mask) = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.to_vec(), vec![7.0]);
        assert_eq!(mask[0], 0);
    }

    #[test]
    fn maxpool_window_one_is_identity() {
        let mut r = rng(9);
        let x = Tensor::randn(&[1, 2, 3, 3], 1.0, &mut r);
        let (y, _) = maxpool2d(&x, 1, 1).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = Tensor::from_vec(vec![1.0, 5.0, 2.0, 3.0], &[1, 1, 2, 2])
            .unwrap()
            .with_grad();
        let (y, _) = maxpool2d(&x, 2, 2).unwrap();
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_gradcheck_with_separated_values() {
        for seed in 0..10u64 {
            let mut r = rng(70 + seed);
            // Values on a jittered grid keep pool-window gaps far above eps.
            let mut vals: Vec<f64> = (0..36).map(|i| i as f64 * 0.05).collect();
            use rand::seq::SliceRandom;
            vals.shuffle(&mut r);
            let x = Tensor::from_vec(vals, &[1, 1, 6, 6]).unwrap();
            let rep = gradcheck(
                |t| {
                    let (p, _) = maxpool2d(t, 2, 2)?;
                    p.mul(&p)?.sum()
                },
                &x,
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(rep.passes(1e-4), "seed {seed}: {}", rep.max_rel_err);
        }
    }

    #[test]
    fn fc_layer_gradcheck() {
        let mut r = rng(12);
        let fc = FcLayer::new(5, 3, &mut r);
        let x = Tensor::randn(&[2, 5], 1.0, &mut r);
        for (name, p) in [("w", &fc.weight), ("b", &fc.bias)] {
            let rep = gradcheck::gradcheck_param(
                || {
                    let y = fc.forward(&x)?;
                    y.mul(&y)?.sum()
                },
                p,
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(rep.passes(1e-4), "{name}: {}", rep.max_rel_err);
        }
    }

    #[test]
    fn composite_conv_relu_pool_fc_mse_gradcheck() {
        // The tensor-core composite example: conv -> relu -> pool -> fc -> MSE
        // on a 1x1x8x8 input.
        let mut r = rng(21);
        let conv = ConvLayer::new(1, 2, 3, 1, 1, &mut r);
        let fc = FcLayer::new(2 * 4 * 4, 3, &mut r);
        let target = vec![1.0, -1.0, 1.0];
        let x = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut r);
        let rep = gradcheck(
            |t| {
                let h = conv.forward(t)?.relu()?;
                let (p, _) = maxpool2d(&h, 2, 2)?;
                let flat = p.reshape(&[1, 2 * 4 * 4])?;
                let y = fc.forward(&flat)?.reshape(&[1, 3])?;
                loss::mse_loss(&y, &target, None)
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(rep.passes(1e-4), "composite: {}", rep.max_rel_err);
    }
}
