use super::{compensated_sum, Element, Tensor};
use crate::error::{dim_err, Error, Result};

fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(dim_err!("axis {axis} out of range for {shape:?}"));
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax<T: Element>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = axis_layout(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| src[at(k)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for k in 0..len {
                let e = (src[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[at(k)] /= total;
            }
        }
    }
    Ok(Tensor::from_raw(x.shape().to_vec(), out))
}

/// Given the softmax output `y` and upstream `dy`: `dx = y * (dy - sum(dy * y))`.
pub fn softmax_backward<T: Element>(y: &Tensor<T>, dy: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if y.shape() != dy.shape() {
        return Err(dim_err!("shape mismatch {:?} vs {:?}", y.shape(), dy.shape()));
    }
    let (outer, len, inner) = axis_layout(y.shape(), axis)?;
    let (yd, gd) = (y.data(), dy.data());
    let mut out = vec![T::zero(); yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| yd[at(k)] * gd[at(k)]).sum();
            for k in 0..len {
                out[at(k)] = yd[at(k)] * (gd[at(k)] - dot);
            }
        }
    }
    Ok(Tensor::from_raw(y.shape().to_vec(), out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and update running statistics.
    Train,
    /// Normalize with the running statistics.
    Eval,
}

#[derive(Debug, Clone)]
pub struct BatchNormOutput<T: Element> {
    pub output: Tensor<T>,
    /// Normalized input before the affine transform.
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Updated `(running_mean, running_var)`, present in training mode.
    pub running: Option<(Tensor<T>, Tensor<T>)>,
}

/// Per-channel batch normalization over `N, H, W` of an NCHW tensor.
///
/// Training mode normalizes with the biased batch variance and blends the
/// unbiased variance into the running estimate with weight `momentum`.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<BatchNormOutput<T>> {
    let (n, c, h, w) = x.dims4()?;
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", running_mean),
        ("running_var", running_var),
    ] {
        if t.shape() != [c] {
            return Err(dim_err!("{name} shape {:?} != [{c}]", t.shape()));
        }
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!("batchnorm eps must be > 0, got {eps}")));
    }
    let plane = h * w;
    let count = n * plane;
    if mode == Mode::Train && count == 1 {
        return Err(Error::Numeric(
            "degenerate batch statistics: N*H*W == 1 in training mode".into(),
        ));
    }
    let src = x.data();
    let channel_values = |ch: usize| {
        (0..n).flat_map(move |ni| src[(ni * c + ch) * plane..][..plane].iter().copied())
    };

    let mut mean = vec![T::zero(); c];
    let mut inv_std = vec![T::zero(); c];
    let mut running = None;
    match mode {
        Mode::Train => {
            let mut rm = running_mean.clone();
            let mut rv = running_var.clone();
            for ch in 0..c {
                let mu = compensated_sum(channel_values(ch).map(|v| v.as_f64())) / count as f64;
                let var = compensated_sum(channel_values(ch).map(|v| {
                    let d = v.as_f64() - mu;
                    d * d
                })) / count as f64;
                mean[ch] = T::of(mu);
                inv_std[ch] = T::of(1.0 / (var + eps).sqrt());
                let unbiased = var * count as f64 / (count - 1) as f64;
                let m = rm.data()[ch].as_f64();
                let v = rv.data()[ch].as_f64();
                rm.data_mut()[ch] = T::of((1.0 - momentum) * m + momentum * mu);
                rv.data_mut()[ch] = T::of((1.0 - momentum) * v + momentum * unbiased);
            }
            running = Some((rm, rv));
        }
        Mode::Eval => {
            for ch in 0..c {
                mean[ch] = running_mean.data()[ch];
                inv_std[ch] = T::of(1.0 / (running_var.data()[ch].as_f64() + eps).sqrt());
            }
        }
    }

    let mut xhat = vec![T::zero(); src.len()];
    let mut out = vec![T::zero(); src.len()];
    for ni in 0..n {
        for ch in 0..c {
            let base = (ni * c + ch) * plane;
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for i in base..base + plane {
                let z = (src[i] - mean[ch]) * inv_std[ch];
                xhat[i] = z;
                out[i] = g * z + b;
            }
        }
    }
    Ok(BatchNormOutput {
        output: Tensor::from_raw(x.shape().to_vec(), out),
        xhat: Tensor::from_raw(x.shape().to_vec(), xhat),
        inv_std,
        running,
    })
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T: Element> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Adjoint of [`batchnorm2d`]. In training mode the batch statistics are
/// differentiated through; in eval mode they are constants.
pub fn batchnorm2d_backward<T: Element>(
    xhat: &Tensor<T>,
    inv_std: &[T],
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
    mode: Mode,
) -> Result<BatchNormGrads<T>> {
    let (n, c, h, w) = xhat.dims4()?;
    if grad_out.shape() != xhat.shape() {
        return Err(dim_err!(
            "upstream gradient {:?} != {:?}",
            grad_out.shape(),
            xhat.shape()
        ));
    }
    let plane = h * w;
    let count = T::of((n * plane) as f64);
    let (xh, dy) = (xhat.data(), grad_out.data());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ni in 0..n {
        for ch in 0..c {
            let base = (ni * c + ch) * plane;
            for i in base..base + plane {
                dgamma[ch] += dy[i] * xh[i];
                dbeta[ch] += dy[i];
            }
        }
    }
    let mut dx = vec![T::zero(); xh.len()];
    for ni in 0..n {
        for ch in 0..c {
            let base = (ni * c + ch) * plane;
            let k = gamma.data()[ch] * inv_std[ch];
            match mode {
                Mode::Train => {
                    let (sum_dy, sum_dy_xhat) = (dbeta[ch], dgamma[ch]);
                    for i in base..base + plane {
                        dx[i] = k * (dy[i] - sum_dy / count - xh[i] * sum_dy_xhat / count);
                    }
                }
                Mode::Eval => {
                    for i in base..base + plane {
                        dx[i] = k * dy[i];
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_raw(xhat.shape().to_vec(), dx),
        gamma: Tensor::from_raw(vec![c], dgamma),
        beta: Tensor::from_raw(vec![c], dbeta),
    })
}
