//! Layer primitives with hand-written backward passes.
//!
//! Every primitive is a pure function of its inputs: forward returns the
//! output, backward takes the forward inputs plus the upstream gradient and
//! returns gradients for inputs and parameters. Networks in [`crate::models`]
//! compose these and keep whatever activations they need for backward.

mod activation;
mod conv;
mod dense;
mod gemm;

pub use activation::{relu_backward_inplace, relu_inplace, sigmoid, sigmoid_inplace};
pub use conv::{
    col2im, conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward,
    im2col, ConvGeom,
};
pub use dense::{dense_backward, dense_forward};
pub(crate) use gemm::gemm;

use crate::tensor::Tensor;

/// Concatenate two NCHW tensors along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, ca, h, w) = a.dims4();
    let (nb, cb, hb, wb) = b.dims4();
    assert_eq!((n, h, w), (nb, hb, wb), "concat needs matching batch and spatial dims");
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, ca + cb, h, w]);
    for i in 0..n {
        let dst = out.outer_mut(i);
        dst[..ca * plane].copy_from_slice(a.outer(i));
        dst[ca * plane..].copy_from_slice(b.outer(i));
    }
    out
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels(t: &Tensor, first: usize) -> (Tensor, Tensor) {
    let (n, c, h, w) = t.dims4();
    let plane = h * w;
    let mut a = Tensor::zeros(&[n, first, h, w]);
    let mut b = Tensor::zeros(&[n, c - first, h, w]);
    for i in 0..n {
        let src = t.outer(i);
        a.outer_mut(i).copy_from_slice(&src[..first * plane]);
        b.outer_mut(i).copy_from_slice(&src[first * plane..]);
    }
    (a, b)
}
