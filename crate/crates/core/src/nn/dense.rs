use super::gemm;
use crate::tensor::Tensor;

/// `y = x W^T + b` with `x: [rows, in]`, `W: [out, in]`, `b: [out]`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (rows, fan_in) = x.dims2();
    let (fan_out, w_in) = weight.dims2();
    assert_eq!(fan_in, w_in, "dense: input width {} vs weight {}", fan_in, w_in);
    let mut y = Tensor::zeros(&[rows, fan_out]);
    {
        let out = y.data_mut();
        for r in 0..rows {
            out[r * fan_out..(r + 1) * fan_out].copy_from_slice(bias.data());
        }
    }
    gemm(false, true, rows, fan_out, fan_in, 1.0, x.data(), weight.data(), 1.0, y.data_mut());
    y
}

/// Returns `(grad_x, grad_w, grad_b)`; `grad_x` is skipped when not needed.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_y: &Tensor,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (rows, fan_in) = x.dims2();
    let (fan_out, _) = weight.dims2();
    let mut gw = Tensor::zeros(&[fan_out, fan_in]);
    gemm(true, false, fan_out, fan_in, rows, 1.0, grad_y.data(), x.data(), 0.0, gw.data_mut());
    let mut gb = Tensor::zeros(&[fan_out]);
    {
        let gbd = gb.data_mut();
        for r in 0..rows {
            for (o, g) in gbd.iter_mut().zip(&grad_y.data()[r * fan_out..(r + 1) * fan_out]) {
                *o += g;
            }
        }
    }
    let gx = need_input_grad.then(|| {
        let mut gx = Tensor::zeros(&[rows, fan_in]);
        gemm(false, false, rows, fan_in, fan_out, 1.0, grad_y.data(), weight.data(), 0.0, gx.data_mut());
        gx
    });
    (gx, gw, gb)
}
