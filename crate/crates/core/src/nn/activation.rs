pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_inplace(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| *v = sigmoid(*v));
}

pub fn relu_inplace(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// Zero the gradient wherever the post-activation output was not positive.
pub fn relu_backward_inplace(grad: &mut [f64], activated: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
