use super::{Element, Tensor};
use crate::error::{dim_err, Result};

struct MatDims {
    batch: usize,
    m: usize,
    k: usize,
    p: usize,
    /// `b` has no batch axes and is shared by every batch entry.
    shared_b: bool,
    out_shape: Vec<usize>,
}

fn mat_dims(a: &[usize], b: &[usize]) -> Result<MatDims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(dim_err!("matmul needs rank >= 2 operands, got {a:?} x {b:?}"));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, p) = (b[b.len() - 2], b[b.len() - 1]);
    if k != kb {
        return Err(dim_err!("inner extents differ: {a:?} x {b:?}"));
    }
    let a_lead = &a[..a.len() - 2];
    let b_lead = &b[..b.len() - 2];
    let shared_b = b_lead.is_empty();
    if !shared_b && a_lead != b_lead {
        return Err(dim_err!("batch extents differ: {a:?} x {b:?}"));
    }
    let mut out_shape = a_lead.to_vec();
    out_shape.extend([m, p]);
    Ok(MatDims {
        batch: a_lead.iter().product(),
        m,
        k,
        p,
        shared_b,
        out_shape,
    })
}

/// `out[i, j] += sum_t a[i, t] * b[t, j]`, row-major, i-t-j loop order.
#[inline]
fn gemm_acc<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let out_row = &mut out[i * p..][..p];
        for t in 0..k {
            let av = a[i * k + t];
            for (o, &bv) in out_row.iter_mut().zip(&b[t * p..][..p]) {
                *o += av * bv;
            }
        }
    }
}

/// Batched matrix product `[.., M, K] x [.., K, P] -> [.., M, P]`.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let d = mat_dims(a.shape(), b.shape())?;
    let mut out = vec![T::zero(); d.batch * d.m * d.p];
    for bi in 0..d.batch {
        let a_mat = &a.data()[bi * d.m * d.k..][..d.m * d.k];
        let b_off = if d.shared_b { 0 } else { bi * d.k * d.p };
        let b_mat = &b.data()[b_off..][..d.k * d.p];
        gemm_acc(a_mat, b_mat, &mut out[bi * d.m * d.p..][..d.m * d.p], d.m, d.k, d.p);
    }
    Ok(Tensor::from_raw(d.out_shape, out))
}

/// Gradients of [`matmul`]: `dA = dC Bᵀ`, `dB = Aᵀ dC` (summed over the batch
/// when `b` is shared).
pub fn matmul_backward<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = mat_dims(a.shape(), b.shape())?;
    if grad_out.shape() != d.out_shape.as_slice() {
        return Err(dim_err!(
            "upstream gradient {:?} does not match {:?}",
            grad_out.shape(),
            d.out_shape
        ));
    }
    let (m, k, p) = (d.m, d.k, d.p);
    let mut ga = vec![T::zero(); a.numel()];
    let mut gb = vec![T::zero(); b.numel()];
    for bi in 0..d.batch {
        let a_mat = &a.data()[bi * m * k..][..m * k];
        let b_off = if d.shared_b { 0 } else { bi * k * p };
        let b_mat = &b.data()[b_off..][..k * p];
        let g = &grad_out.data()[bi * m * p..][..m * p];
        let ga_mat = &mut ga[bi * m * k..][..m * k];
        for i in 0..m {
            let g_row = &g[i * p..][..p];
            for t in 0..k {
                let b_row = &b_mat[t * p..][..p];
                ga_mat[i * k + t] += g_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum::<T>();
            }
        }
        let gb_mat = &mut gb[b_off..][..k * p];
        for i in 0..m {
            let g_row = &g[i * p..][..p];
            for t in 0..k {
                let av = a_mat[i * k + t];
                for (o, &gv) in gb_mat[t * p..][..p].iter_mut().zip(g_row) {
                    *o += av * gv;
                }
            }
        }
    }
    Ok((
        Tensor::from_raw(a.shape().to_vec(), ga),
        Tensor::from_raw(b.shape().to_vec(), gb),
    ))
}
