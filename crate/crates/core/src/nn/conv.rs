use super::gemm;
use crate::tensor::Tensor;

/// Square-kernel convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeom { kernel, stride, pad }
    }

    /// Output extent of a forward convolution over an input of extent `len`.
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output extent of the transposed convolution over an input of extent `len`.
    pub fn transposed_out_len(&self, len: usize) -> usize {
        (len - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfold one `[c, h, w]` image into a `[c*k*k, oh*ow]` column matrix.
pub fn im2col(img: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, cols: &mut [f64]) {
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let k = g.kernel;
    let npos = oh * ow;
    debug_assert_eq!(cols.len(), c * k * k * npos);
    for ch in 0..c {
        let plane = &img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * npos..(row + 1) * npos];
                let (x0, x1) = valid_span(kx, ow, w, g);
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize || x0 >= x1 {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    line[..x0].fill(0.0);
                    line[x1..].fill(0.0);
                    let ix0 = x0 * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        line[x0..x1].copy_from_slice(&src[ix0..ix0 + x1 - x0]);
                    } else {
                        for (j, v) in line[x0..x1].iter_mut().enumerate() {
                            *v = src[ix0 + j * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `[x0, x1)` whose input column for kernel offset `kx` is inside the image.
fn valid_span(kx: usize, ow: usize, w: usize, g: ConvGeom) -> (usize, usize) {
    // ix = ox * stride + kx - pad must satisfy 0 <= ix < w.
    let x0 = if kx >= g.pad { 0 } else { (g.pad - kx).div_ceil(g.stride) };
    let lim = w + g.pad;
    let x1 = if kx >= lim { 0 } else { ((lim - kx - 1) / g.stride + 1).min(ow) };
    (x0.min(x1), x1)
}

/// Scatter-add a column matrix back onto a `[c, h, w]` image (adjoint of [`im2col`]).
pub fn col2im(cols: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, img: &mut [f64]) {
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let k = g.kernel;
    let npos = oh * ow;
    for ch in 0..c {
        let plane = &mut img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * npos..(row + 1) * npos];
                let (x0, x1) = valid_span(kx, ow, w, g);
                if x0 >= x1 {
                    continue;
                }
                let ix0 = x0 * g.stride + kx - g.pad;
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let line = &src[oy * ow + x0..oy * ow + x1];
                    if g.stride == 1 {
                        for (d, v) in dst[ix0..ix0 + line.len()].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (j, v) in line.iter().enumerate() {
                            dst[ix0 + j * g.stride] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x: [n, cin, h, w]` with `weight: [cout, cin, k, k]`.
pub fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, g: ConvGeom) -> Tensor {
    let (n, cin, h, w) = x.dims4();
    let (cout, wcin, k, _) = weight.dims4();
    assert_eq!(cin, wcin, "conv2d: input has {} channels, weight expects {}", cin, wcin);
    assert_eq!(k, g.kernel);
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let npos = oh * ow;
    let depth = cin * k * k;
    let mut out = Tensor::zeros(&[n, cout, oh, ow]);
    let mut cols = vec![0.0; depth * npos];
    for i in 0..n {
        im2col(x.outer(i), cin, h, w, g, &mut cols);
        let dst = out.outer_mut(i);
        for (co, b) in bias.data().iter().enumerate() {
            dst[co * npos..(co + 1) * npos].iter_mut().for_each(|v| *v = *b);
        }
        gemm(false, false, cout, npos, depth, 1.0, weight.data(), &cols, 1.0, dst);
    }
    out
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    g: ConvGeom,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (n, cin, h, w) = x.dims4();
    let (cout, _, k, _) = weight.dims4();
    let (_, _, oh, ow) = grad_out.dims4();
    let npos = oh * ow;
    let depth = cin * k * k;
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[cout]);
    let mut gx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut cols = vec![0.0; depth * npos];
    let mut gcols = vec![0.0; depth * npos];
    for i in 0..n {
        let go = grad_out.outer(i);
        im2col(x.outer(i), cin, h, w, g, &mut cols);
        gemm(false, true, cout, depth, npos, 1.0, go, &cols, 1.0, gw.data_mut());
        for (co, b) in gb.data_mut().iter_mut().enumerate() {
            *b += go[co * npos..(co + 1) * npos].iter().sum::<f64>();
        }
        if let Some(gx) = gx.as_mut() {
            gemm(true, false, depth, npos, cout, 1.0, weight.data(), go, 0.0, &mut gcols);
            col2im(&gcols, cin, h, w, g, gx.outer_mut(i));
        }
    }
    (gx, gw, gb)
}

/// Transposed convolution of `x: [n, cin, h, w]` with `weight: [cin, cout, k, k]`.
pub fn conv_transpose2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, g: ConvGeom) -> Tensor {
    let (n, cin, h, w) = x.dims4();
    let (wcin, cout, k, _) = weight.dims4();
    assert_eq!(cin, wcin, "conv_transpose2d: input has {} channels, weight expects {}", cin, wcin);
    let (oh, ow) = (g.transposed_out_len(h), g.transposed_out_len(w));
    debug_assert_eq!(g.out_len(oh), h);
    let npos = h * w;
    let depth = cout * k * k;
    let mut out = Tensor::zeros(&[n, cout, oh, ow]);
    let mut cols = vec![0.0; depth * npos];
    for i in 0..n {
        gemm(true, false, depth, npos, cin, 1.0, weight.data(), x.outer(i), 0.0, &mut cols);
        let dst = out.outer_mut(i);
        for (co, b) in bias.data().iter().enumerate() {
            dst[co * oh * ow..(co + 1) * oh * ow].iter_mut().for_each(|v| *v = *b);
        }
        col2im(&cols, cout, oh, ow, g, dst);
    }
    out
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn conv_transpose2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    g: ConvGeom,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (n, cin, h, w) = x.dims4();
    let (_, cout, k, _) = weight.dims4();
    let (_, _, oh, ow) = grad_out.dims4();
    let npos = h * w;
    let depth = cout * k * k;
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[cout]);
    let mut gx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut gcols = vec![0.0; depth * npos];
    for i in 0..n {
        let go = grad_out.outer(i);
        for (co, b) in gb.data_mut().iter_mut().enumerate() {
            *b += go[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
        }
        im2col(go, cout, oh, ow, g, &mut gcols);
        gemm(false, true, cin, depth, npos, 1.0, x.outer(i), &gcols, 1.0, gw.data_mut());
        if let Some(gx) = gx.as_mut() {
            gemm(false, false, cin, npos, depth, 1.0, weight.data(), &gcols, 0.0, gx.outer_mut(i));
        }
    }
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(x: &Tensor, wt: &Tensor, b: &Tensor, g: ConvGeom) -> Tensor {
        let (n, cin, h, w) = x.dims4();
        let (cout, _, k, _) = wt.dims4();
        let (oh, ow) = (g.out_len(h), g.out_len(w));
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        for i in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[co];
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += x.data()[((i * cin + ci) * h + iy as usize) * w + ix as usize]
                                        * wt.data()[((co * cin + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        out.data_mut()[((i * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn seq(shape: &[usize], scale: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i as f64) * scale).sin()).collect()).unwrap()
    }

    #[test]
    fn conv_matches_direct_loops() {
        for g in [ConvGeom::new(3, 1, 1), ConvGeom::new(3, 2, 1), ConvGeom::new(5, 1, 0)] {
            let x = seq(&[2, 3, 9, 8], 0.31);
            let wt = seq(&[4, 3, g.kernel, g.kernel], 0.77);
            let b = seq(&[4], 1.3);
            let got = conv2d_forward(&x, &wt, &b, g);
            let want = direct_conv(&x, &wt, &b, g);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_t(y)> with zero bias and shared weights.
        let g = ConvGeom::new(3, 2, 1);
        let x = seq(&[1, 2, 13, 13], 0.41);
        let wt = seq(&[3, 2, 3, 3], 0.53);
        let y = seq(&[1, 3, 7, 7], 0.29);
        let cx = conv2d_forward(&x, &wt, &Tensor::zeros(&[3]), g);
        let ty = conv_transpose2d_forward(&y, &wt, &Tensor::zeros(&[2]), g);
        assert_eq!(ty.shape(), &[1, 2, 13, 13]);
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
