//! Bilinear sampling with border clamping.
//!
//! Normalized coordinates place `-1` and `+1` on the outer edges of the
//! corner pixels, so pixel `i` of an extent-`S` axis has its center at
//! `(2i + 1) / S - 1`. Points outside the pixel-center hull are clamped to
//! the border pixel.

use super::{Element, Tensor};
use crate::error::{dim_err, Result};

/// Maps a normalized coordinate to continuous pixel-center units.
#[inline]
pub fn source_coord<T: Element>(g: T, extent: usize) -> T {
    ((g + T::one()) * T::of(extent as f64) - T::one()) * T::of(0.5)
}

/// One axis of a bilinear tap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AxisTap<T> {
    pub lo: usize,
    pub hi: usize,
    /// Weight of `hi`; `lo` gets `1 - frac`.
    pub frac: T,
    pub clamped: bool,
}

#[inline]
pub(crate) fn axis_tap<T: Element>(coord: T, extent: usize) -> AxisTap<T> {
    let max = T::of((extent - 1) as f64);
    let clamped = coord < T::zero() || coord > max;
    let c = coord.max(T::zero()).min(max);
    if extent == 1 {
        return AxisTap {
            lo: 0,
            hi: 0,
            frac: T::zero(),
            clamped,
        };
    }
    let lo = (c.floor().as_f64() as usize).min(extent - 2);
    AxisTap {
        lo,
        hi: lo + 1,
        frac: c - T::of(lo as f64),
        clamped,
    }
}

fn check_grid<T: Element>(
    x: &Tensor<T>,
    grid: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    let (gn, oh, ow, two) = grid.dims4()?;
    if two != 2 {
        return Err(dim_err!(
            "grid last extent must be 2 (x, y), got {:?}",
            grid.shape()
        ));
    }
    if gn != n {
        return Err(dim_err!("grid batch {gn} != input batch {n}"));
    }
    Ok((n, c, h, w, oh, ow))
}

/// Per-point `(x tap, y tap)` for every grid point, in grid order.
pub(crate) fn sample_taps<T: Element>(grid: &Tensor<T>, h: usize, w: usize) -> Vec<(AxisTap<T>, AxisTap<T>)> {
    grid.data()
        .chunks_exact(2)
        .map(|p| {
            (
                axis_tap(source_coord(p[0], w), w),
                axis_tap(source_coord(p[1], h), h),
            )
        })
        .collect()
}

/// Cell indices and clamp flags of every tap, used to detect when a
/// perturbation moves a sample point across a non-differentiable seam.
pub fn bilinear_sample_cells<T: Element>(
    grid: &Tensor<T>,
    h: usize,
    w: usize,
) -> impl Iterator<Item = (usize, usize, bool, bool)> {
    sample_taps(grid, h, w)
        .into_iter()
        .map(|(tx, ty)| (tx.lo, ty.lo, tx.clamped, ty.clamped))
}

/// Samples `x: [N, C, H, W]` at `grid: [N, H', W', 2]` (last axis `(x, y)`).
pub fn bilinear_sample<T: Element>(x: &Tensor<T>, grid: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w, oh, ow) = check_grid(x, grid)?;
    let taps = sample_taps(grid, h, w);
    let src = x.data();
    let plane = h * w;
    let out_plane = oh * ow;
    let mut out = vec![T::zero(); n * c * out_plane];
    for ni in 0..n {
        let taps = &taps[ni * out_plane..][..out_plane];
        for ci in 0..c {
            let sp = &src[(ni * c + ci) * plane..][..plane];
            let op = &mut out[(ni * c + ci) * out_plane..][..out_plane];
            for (o, (tx, ty)) in op.iter_mut().zip(taps) {
                let (fx, fy) = (tx.frac, ty.frac);
                let top = (T::one() - fx) * sp[ty.lo * w + tx.lo] + fx * sp[ty.lo * w + tx.hi];
                let bot = (T::one() - fx) * sp[ty.hi * w + tx.lo] + fx * sp[ty.hi * w + tx.hi];
                *o = (T::one() - fy) * top + fy * bot;
            }
        }
    }
    Ok(Tensor::from_raw(vec![n, c, oh, ow], out))
}

#[derive(Debug, Clone)]
pub struct SampleGrads<T: Element> {
    pub input: Option<Tensor<T>>,
    pub grid: Option<Tensor<T>>,
}

/// Adjoint of [`bilinear_sample`] with respect to the sampled values and the
/// grid coordinates. The coordinate gradient is zero on clamped axes.
pub fn bilinear_sample_backward<T: Element>(
    x: &Tensor<T>,
    grid: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
    need_grid: bool,
) -> Result<SampleGrads<T>> {
    let (n, c, h, w, oh, ow) = check_grid(x, grid)?;
    if grad_out.shape() != [n, c, oh, ow] {
        return Err(dim_err!(
            "upstream gradient {:?} != {:?}",
            grad_out.shape(),
            [n, c, oh, ow]
        ));
    }
    let taps = sample_taps(grid, h, w);
    let src = x.data();
    let gy = grad_out.data();
    let plane = h * w;
    let out_plane = oh * ow;
    let mut gin = need_input.then(|| vec![T::zero(); src.len()]);
    let mut ggrid = need_grid.then(|| vec![T::zero(); grid.numel()]);
    let half_w = T::of(w as f64 * 0.5);
    let half_h = T::of(h as f64 * 0.5);
    for ni in 0..n {
        let taps = &taps[ni * out_plane..][..out_plane];
        for ci in 0..c {
            let sp = &src[(ni * c + ci) * plane..][..plane];
            let gp = &gy[(ni * c + ci) * out_plane..][..out_plane];
            for (k, ((tx, ty), &g)) in taps.iter().zip(gp).enumerate() {
                let (fx, fy) = (tx.frac, ty.frac);
                let i00 = ty.lo * w + tx.lo;
                let i01 = ty.lo * w + tx.hi;
                let i10 = ty.hi * w + tx.lo;
                let i11 = ty.hi * w + tx.hi;
                if let Some(gin) = gin.as_mut() {
                    let gp = &mut gin[(ni * c + ci) * plane..][..plane];
                    gp[i00] += (T::one() - fy) * (T::one() - fx) * g;
                    gp[i01] += (T::one() - fy) * fx * g;
                    gp[i10] += fy * (T::one() - fx) * g;
                    gp[i11] += fy * fx * g;
                }
                if let Some(gg) = ggrid.as_mut() {
                    let gidx = (ni * out_plane + k) * 2;
                    if !tx.clamped {
                        let d = (T::one() - fy) * (sp[i01] - sp[i00]) + fy * (sp[i11] - sp[i10]);
                        gg[gidx] += g * d * half_w;
                    }
                    if !ty.clamped {
                        let d = (T::one() - fx) * (sp[i10] - sp[i00]) + fx * (sp[i11] - sp[i01]);
                        gg[gidx + 1] += g * d * half_h;
                    }
                }
            }
        }
    }
    Ok(SampleGrads {
        input: gin.map(|d| Tensor::from_raw(x.shape().to_vec(), d)),
        grid: ggrid.map(|d| Tensor::from_raw(grid.shape().to_vec(), d)),
    })
}

/// Bilinear resize with the same pixel-center convention and border clamp
/// as [`bilinear_sample`].
pub fn resize_bilinear<T: Element>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(dim_err!("output extents must be >= 1, got {out_h}x{out_w}"));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(x.clone());
    }
    let axis = |out: usize, inp: usize| -> Vec<AxisTap<T>> {
        (0..out)
            .map(|i| {
                let g = T::of((2 * i + 1) as f64 / out as f64 - 1.0);
                axis_tap(source_coord(g, inp), inp)
            })
            .collect()
    };
    let xs = axis(out_w, w);
    let ys = axis(out_h, h);
    let src = x.data();
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in src.chunks_exact(h * w) {
        for ty in &ys {
            let fy = ty.frac;
            for tx in &xs {
                let fx = tx.frac;
                let top = (T::one() - fx) * plane[ty.lo * w + tx.lo] + fx * plane[ty.lo * w + tx.hi];
                let bot = (T::one() - fx) * plane[ty.hi * w + tx.lo] + fx * plane[ty.hi * w + tx.hi];
                out.push((T::one() - fy) * top + fy * bot);
            }
        }
    }
    Ok(Tensor::from_raw(vec![n, c, out_h, out_w], out))
}
