use super::{Element, Tensor};
use crate::error::{dim_err, Result};

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis + 1..].iter().product(),
    )
}

/// Joins tensors along `axis`; all other extents must agree.
pub fn concat<T: Element>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| dim_err!("concat of zero tensors"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(dim_err!("axis {axis} out of range for rank {rank}"));
    }
    let mut total = 0;
    for p in parts {
        let same_rank = p.rank() == rank;
        let others_match = same_rank
            && (0..rank).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
        if !others_match {
            return Err(dim_err!(
                "concat along {axis}: {:?} incompatible with {:?}",
                p.shape(),
                first.shape()
            ));
        }
        total += p.shape()[axis];
    }
    let (outer, inner) = outer_inner(first.shape(), axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * chunk..][..chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_raw(shape, data))
}

/// Copies `len` entries starting at `start` along `axis`.
pub fn slice_axis<T: Element>(
    x: &Tensor<T>,
    axis: usize,
    start: usize,
    len: usize,
) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(dim_err!("axis {axis} out of range for rank {}", x.rank()));
    }
    let extent = x.shape()[axis];
    if len == 0 || start + len > extent {
        return Err(dim_err!(
            "slice [{start}, {}) outside axis extent {extent}",
            start + len
        ));
    }
    let (outer, inner) = outer_inner(x.shape(), axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        data.extend_from_slice(&x.data()[(o * extent + start) * inner..][..len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_raw(shape, data))
}

/// Splits along `axis` into consecutive pieces of the given sizes.
pub fn split<T: Element>(x: &Tensor<T>, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    if axis >= x.rank() {
        return Err(dim_err!("axis {axis} out of range for rank {}", x.rank()));
    }
    if sizes.iter().sum::<usize>() != x.shape()[axis] {
        return Err(dim_err!(
            "split sizes {sizes:?} do not sum to extent {}",
            x.shape()[axis]
        ));
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&len| {
            let part = slice_axis(x, axis, start, len);
            start += len;
            part
        })
        .collect()
}

fn pad4(shape: &[usize]) -> [usize; 4] {
    let mut s = [1; 4];
    s[4 - shape.len()..].copy_from_slice(shape);
    s
}

/// Reorders axes: output axis `i` is input axis `perm[i]`.
pub fn permute<T: Element>(x: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let rank = x.rank();
    let mut seen = [false; 4];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(dim_err!("{perm:?} is not a permutation of rank {rank}"));
    }
    let in_shape = x.shape();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * in_shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    // Pad to rank 4 so one loop nest serves all ranks.
    let os = pad4(&out_shape);
    let mut st = [0usize; 4];
    st[4 - rank..].copy_from_slice(&strides);
    let src = x.data();
    let mut data = Vec::with_capacity(src.len());
    for a in 0..os[0] {
        for b in 0..os[1] {
            for c in 0..os[2] {
                let base = a * st[0] + b * st[1] + c * st[2];
                for d in 0..os[3] {
                    data.push(src[base + d * st[3]]);
                }
            }
        }
    }
    Ok(Tensor::from_raw(out_shape, data))
}

/// Swaps the last two axes.
pub fn transpose_last2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let rank = x.rank();
    if rank < 2 {
        return Err(dim_err!("transpose needs rank >= 2, got {:?}", x.shape()));
    }
    let mut perm: Vec<usize> = (0..rank).collect();
    perm.swap(rank - 2, rank - 1);
    permute(x, &perm)
}

/// Depth-to-space: `[N, C*s*s, h, w] -> [N, C, h*s, w*s]`, where input
/// channel `c*s*s + dy*s + dx` lands at output `(c, y*s + dy, x*s + dx)`.
pub fn pixel_shuffle<T: Element>(x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let (n, cs, h, w) = x.dims4()?;
    if s == 0 || cs % (s * s) != 0 {
        return Err(dim_err!("channels {cs} not divisible by {s}^2"));
    }
    let c = cs / (s * s);
    let (oh, ow) = (h * s, w * s);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..s {
                for dx in 0..s {
                    let in_plane = &src[((ni * cs) + ci * s * s + dy * s + dx) * h * w..][..h * w];
                    let out_plane = &mut out[(ni * c + ci) * oh * ow..][..oh * ow];
                    for y in 0..h {
                        for xx in 0..w {
                            out_plane[(y * s + dy) * ow + xx * s + dx] = in_plane[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(vec![n, c, oh, ow], out))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Element>(x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let (n, c, oh, ow) = x.dims4()?;
    if s == 0 || oh % s != 0 || ow % s != 0 {
        return Err(dim_err!("spatial extents {oh}x{ow} not divisible by {s}"));
    }
    let (h, w) = (oh / s, ow / s);
    let cs = c * s * s;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for ni in 0..n {
        for ci in 0..c {
            let in_plane = &src[(ni * c + ci) * oh * ow..][..oh * ow];
            for dy in 0..s {
                for dx in 0..s {
                    let out_plane =
                        &mut out[((ni * cs) + ci * s * s + dy * s + dx) * h * w..][..h * w];
                    for y in 0..h {
                        for xx in 0..w {
                            out_plane[y * w + xx] = in_plane[(y * s + dy) * ow + xx * s + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(vec![n, cs, h, w], out))
}
