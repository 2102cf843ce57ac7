use super::{Element, Tensor};
use crate::error::{config_err, dim_err, Result};

/// Hyperparameters of a 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    /// Symmetric zero padding on every spatial side.
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl ConvSpec {
    pub fn new(stride: usize, padding: usize, dilation: usize, groups: usize) -> Self {
        ConvSpec {
            stride,
            padding,
            dilation,
            groups,
        }
    }

    /// Size-preserving 3x3 depthwise convolution with the given dilation.
    pub fn depthwise3x3(channels: usize, dilation: usize) -> Self {
        ConvSpec::new(1, dilation, dilation, channels)
    }

    pub fn output_extent(&self, input: usize, kernel: usize) -> Result<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        if span > padded {
            return Err(dim_err!(
                "kernel span {span} exceeds padded input extent {padded}"
            ));
        }
        Ok((padded - span) / self.stride + 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    cin_g: usize,
    cout_g: usize,
}

fn geometry<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Geometry> {
    if spec.stride == 0 || spec.dilation == 0 || spec.groups == 0 {
        return Err(config_err!(
            "stride, dilation and groups must be positive: {spec:?}"
        ));
    }
    let (n, cin, h, w) = input.dims4()?;
    let (cout, wcin, kh, kw) = weight.dims4()?;
    if cin % spec.groups != 0 || cout % spec.groups != 0 {
        return Err(config_err!(
            "groups {} must divide in_channels {cin} and out_channels {cout}",
            spec.groups
        ));
    }
    let cin_g = cin / spec.groups;
    if wcin != cin_g {
        return Err(dim_err!(
            "weight expects {wcin} input channels per group, input provides {cin_g}"
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(dim_err!("bias shape {:?} != [{cout}]", b.shape()));
        }
    }
    let oh = spec.output_extent(h, kh)?;
    let ow = spec.output_extent(w, kw)?;
    Ok(Geometry {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
        cin_g,
        cout_g: cout / spec.groups,
    })
}

/// Range of output columns `ox` for which `ox * stride + offset` lands in `[0, len)`.
#[inline]
fn valid_range(len: usize, out_len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset < 0 { (-offset + s - 1) / s } else { 0 };
    let last = len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last / s + 1).min(out_len as isize);
    if lo >= hi {
        return (0, 0);
    }
    (lo as usize, hi as usize)
}

/// Grouped, dilated, strided 2-D cross-correlation (no kernel flip).
///
/// `input` is `[N, Cin, H, W]`, `weight` is `[Cout, Cin / groups, kh, kw]`.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let g = geometry(input, weight, bias, &spec)?;
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    let mut out = vec![T::zero(); g.n * g.cout * plane_out];
    let x = input.data();
    let wt = weight.data();
    let pad = spec.padding as isize;

    for n in 0..g.n {
        for oc in 0..g.cout {
            let grp = oc / g.cout_g;
            let out_plane = &mut out[(n * g.cout + oc) * plane_out..][..plane_out];
            if let Some(b) = bias {
                out_plane.fill(b.data()[oc]);
            }
            for icg in 0..g.cin_g {
                let ic = grp * g.cin_g + icg;
                let in_plane = &x[(n * g.cin + ic) * plane_in..][..plane_in];
                for ki in 0..g.kh {
                    let row_off = (ki * spec.dilation) as isize - pad;
                    let (oy_lo, oy_hi) = valid_range(g.h, g.oh, spec.stride, row_off);
                    for kj in 0..g.kw {
                        let wv = wt[((oc * g.cin_g + icg) * g.kh + ki) * g.kw + kj];
                        let col_off = (kj * spec.dilation) as isize - pad;
                        let (ox_lo, ox_hi) = valid_range(g.w, g.ow, spec.stride, col_off);
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * spec.stride) as isize + row_off;
                            let in_row = &in_plane[iy as usize * g.w..][..g.w];
                            let out_row = &mut out_plane[oy * g.ow..][..g.ow];
                            if spec.stride == 1 && ox_lo < ox_hi {
                                let start = (ox_lo as isize + col_off) as usize;
                                let len = ox_hi - ox_lo;
                                for (o, &i) in out_row[ox_lo..ox_hi]
                                    .iter_mut()
                                    .zip(&in_row[start..start + len])
                                {
                                    *o += wv * i;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = ((ox * spec.stride) as isize + col_off) as usize;
                                    out_row[ox] += wv * in_row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(vec![g.n, g.cout, g.oh, g.ow], out))
}

/// Which gradients [`conv2d_backward`] should produce.
#[derive(Debug, Clone, Copy)]
pub struct ConvGradRequest {
    pub input: bool,
    pub weight: bool,
    pub bias: bool,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Element> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Adjoint of [`conv2d`] given the upstream gradient `grad_out`.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: ConvSpec,
    request: ConvGradRequest,
) -> Result<ConvGrads<T>> {
    let g = geometry(input, weight, None, &spec)?;
    if grad_out.shape() != [g.n, g.cout, g.oh, g.ow] {
        return Err(dim_err!(
            "upstream gradient {:?} does not match conv output {:?}",
            grad_out.shape(),
            [g.n, g.cout, g.oh, g.ow]
        ));
    }
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    let x = input.data();
    let wt = weight.data();
    let gy = grad_out.data();
    let pad = spec.padding as isize;

    let mut gin = request.input.then(|| vec![T::zero(); x.len()]);
    let mut gw = request.weight.then(|| vec![T::zero(); wt.len()]);

    if gin.is_some() || gw.is_some() {
        for n in 0..g.n {
            for oc in 0..g.cout {
                let grp = oc / g.cout_g;
                let gout_plane = &gy[(n * g.cout + oc) * plane_out..][..plane_out];
                for icg in 0..g.cin_g {
                    let ic = grp * g.cin_g + icg;
                    let in_base = (n * g.cin + ic) * plane_in;
                    for ki in 0..g.kh {
                        let row_off = (ki * spec.dilation) as isize - pad;
                        let (oy_lo, oy_hi) = valid_range(g.h, g.oh, spec.stride, row_off);
                        for kj in 0..g.kw {
                            let widx = ((oc * g.cin_g + icg) * g.kh + ki) * g.kw + kj;
                            let wv = wt[widx];
                            let col_off = (kj * spec.dilation) as isize - pad;
                            let (ox_lo, ox_hi) = valid_range(g.w, g.ow, spec.stride, col_off);
                            let mut acc = T::zero();
                            for oy in oy_lo..oy_hi {
                                let iy = (oy * spec.stride) as isize + row_off;
                                let row_base = in_base + iy as usize * g.w;
                                let gout_row = &gout_plane[oy * g.ow..][..g.ow];
                                if let Some(gin) = gin.as_mut() {
                                    let gin_row = &mut gin[row_base..][..g.w];
                                    for ox in ox_lo..ox_hi {
                                        let ix = ((ox * spec.stride) as isize + col_off) as usize;
                                        gin_row[ix] += wv * gout_row[ox];
                                    }
                                }
                                if gw.is_some() {
                                    let in_row = &x[row_base..][..g.w];
                                    for ox in ox_lo..ox_hi {
                                        let ix = ((ox * spec.stride) as isize + col_off) as usize;
                                        acc += gout_row[ox] * in_row[ix];
                                    }
                                }
                            }
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    let gb = request.bias.then(|| {
        let mut gb = vec![T::zero(); g.cout];
        for n in 0..g.n {
            for (oc, b) in gb.iter_mut().enumerate() {
                *b += gy[(n * g.cout + oc) * plane_out..][..plane_out]
                    .iter()
                    .copied()
                    .sum::<T>();
            }
        }
        Tensor::from_raw(vec![g.cout], gb)
    });

    Ok(ConvGrads {
        input: gin.map(|d| Tensor::from_raw(input.shape().to_vec(), d)),
        weight: gw.map(|d| Tensor::from_raw(weight.shape().to_vec(), d)),
        bias: gb,
    })
}
