//! Differentiable tensor operations.
//!
//! Shape validation happens in the layer builders, which report configuration
//! errors with layer names; the ops themselves treat mismatched shapes as
//! internal bugs (debug assertions).

use super::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

pub fn add<F: Scalar>(a: &Var<F>, b: &Var<F>) -> Var<F> {
    let v = a.value().zip_map(b.value(), |x, y| x + y);
    Var::from_op(
        v,
        vec![a.clone(), b.clone()],
        Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]),
    )
}

pub fn sub<F: Scalar>(a: &Var<F>, b: &Var<F>) -> Var<F> {
    let v = a.value().zip_map(b.value(), |x, y| x - y);
    Var::from_op(
        v,
        vec![a.clone(), b.clone()],
        Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|x| -x))]),
    )
}

pub fn mul<F: Scalar>(a: &Var<F>, b: &Var<F>) -> Var<F> {
    let v = a.value().zip_map(b.value(), |x, y| x * y);
    Var::from_op(
        v,
        vec![a.clone(), b.clone()],
        Box::new(|g, ps| {
            vec![
                Some(g.zip_map(ps[1].value(), |g, b| g * b)),
                Some(g.zip_map(ps[0].value(), |g, a| g * a)),
            ]
        }),
    )
}

pub fn neg<F: Scalar>(a: &Var<F>) -> Var<F> {
    let v = a.value().map(|x| -x);
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(|g, _| vec![Some(g.map(|x| -x))]),
    )
}

pub fn square<F: Scalar>(a: &Var<F>) -> Var<F> {
    let v = a.value().map(|x| x * x);
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(|g, ps| {
            let two = F::from_f64(2.0);
            vec![Some(g.zip_map(ps[0].value(), move |g, x| two * x * g))]
        }),
    )
}

pub fn scale<F: Scalar>(a: &Var<F>, c: F) -> Var<F> {
    let v = a.value().map(|x| x * c);
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(move |g, _| vec![Some(g.map(|x| x * c))]),
    )
}

pub fn add_scalar<F: Scalar>(a: &Var<F>, c: F) -> Var<F> {
    let v = a.value().map(|x| x + c);
    Var::from_op(v, vec![a.clone()], Box::new(|g, _| vec![Some(g.clone())]))
}

pub fn sigmoid<F: Scalar>(a: &Var<F>) -> Var<F> {
    let out = a.value().map(sigmoid_scalar);
    let captured = out.clone();
    Var::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g, _| vec![Some(g.zip_map(&captured, |g, y| g * y * (F::one() - y)))]),
    )
}

#[inline]
fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    // Evaluate on the side that avoids overflow in exp.
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn tanh<F: Scalar>(a: &Var<F>) -> Var<F> {
    let out = a.value().map(|x| x.tanh());
    let captured = out.clone();
    Var::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g, _| vec![Some(g.zip_map(&captured, |g, y| g * (F::one() - y * y)))]),
    )
}

pub fn relu<F: Scalar>(a: &Var<F>) -> Var<F> {
    let v = a.value().map(|x| if x > F::zero() { x } else { F::zero() });
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(|g, ps| {
            vec![Some(g.zip_map(ps[0].value(), |g, x| {
                if x > F::zero() {
                    g
                } else {
                    F::zero()
                }
            }))]
        }),
    )
}

pub fn silu<F: Scalar>(a: &Var<F>) -> Var<F> {
    let v = a.value().map(|x| x * sigmoid_scalar(x));
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(|g, ps| {
            vec![Some(g.zip_map(ps[0].value(), |g, x| {
                let s = sigmoid_scalar(x);
                g * s * (F::one() + x * (F::one() - s))
            }))]
        }),
    )
}

/// `ln(max(x, floor))`; the gradient is zero wherever the clamp is active.
pub fn ln_clamped<F: Scalar>(a: &Var<F>, floor: F) -> Var<F> {
    let v = a.value().map(|x| x.max(floor).ln());
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(move |g, ps| {
            vec![Some(g.zip_map(ps[0].value(), move |g, x| {
                if x > floor {
                    g / x
                } else {
                    F::zero()
                }
            }))]
        }),
    )
}

/// Clamp to `[lo, hi]` with pass-through gradient strictly inside the range.
pub fn clamp<F: Scalar>(a: &Var<F>, lo: F, hi: F) -> Var<F> {
    let v = a.value().map(|x| x.max(lo).min(hi));
    Var::from_op(
        v,
        vec![a.clone()],
        Box::new(move |g, ps| {
            vec![Some(g.zip_map(ps[0].value(), move |g, x| {
                if x > lo && x < hi {
                    g
                } else {
                    F::zero()
                }
            }))]
        }),
    )
}

// ---------------------------------------------------------------------------
// broadcast additions
// ---------------------------------------------------------------------------

/// `[B, N] + [N]` row-broadcast bias.
pub fn add_rows<F: Scalar>(a: &Var<F>, bias: &Var<F>) -> Var<F> {
    let (b, n) = (a.shape()[0], a.shape()[1]);
    debug_assert_eq!(bias.shape(), &[n]);
    let mut out = a.value().clone();
    {
        let bd = bias.value().data();
        let od = out.data_mut();
        for row in 0..b {
            for (j, bv) in bd.iter().enumerate() {
                od[row * n + j] += *bv;
            }
        }
    }
    Var::from_op(
        out,
        vec![a.clone(), bias.clone()],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut dbias = vec![F::zero(); n];
            for row in 0..b {
                for (j, acc) in dbias.iter_mut().enumerate() {
                    *acc += gd[row * n + j];
                }
            }
            vec![Some(g.clone()), Some(Tensor::from_vec(dbias))]
        }),
    )
}

/// `[B, C, L] + [C]` channel-broadcast bias.
pub fn add_channels<F: Scalar>(a: &Var<F>, bias: &Var<F>) -> Var<F> {
    let (b, c, l) = dims3(a.shape());
    debug_assert_eq!(bias.shape(), &[c]);
    let mut out = a.value().clone();
    {
        let bd = bias.value().data();
        let od = out.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * l;
                let bv = bd[ci];
                for x in &mut od[base..base + l] {
                    *x += bv;
                }
            }
        }
    }
    Var::from_op(
        out,
        vec![a.clone(), bias.clone()],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut dbias = vec![F::zero(); c];
            for bi in 0..b {
                for (ci, acc) in dbias.iter_mut().enumerate() {
                    let base = (bi * c + ci) * l;
                    *acc += gd[base..base + l].iter().copied().sum();
                }
            }
            vec![Some(g.clone()), Some(Tensor::from_vec(dbias))]
        }),
    )
}

/// `[B, C, L] + [B, C]` per-sample per-channel bias broadcast along length.
pub fn add_bias_bc<F: Scalar>(a: &Var<F>, bias: &Var<F>) -> Var<F> {
    let (b, c, l) = dims3(a.shape());
    debug_assert_eq!(bias.shape(), &[b, c]);
    let mut out = a.value().clone();
    {
        let bd = bias.value().data();
        let od = out.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * l;
                let bv = bd[bi * c + ci];
                for x in &mut od[base..base + l] {
                    *x += bv;
                }
            }
        }
    }
    Var::from_op(
        out,
        vec![a.clone(), bias.clone()],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut dbias = vec![F::zero(); b * c];
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * l;
                    dbias[bi * c + ci] = gd[base..base + l].iter().copied().sum();
                }
            }
            vec![
                Some(g.clone()),
                Some(Tensor::new(vec![b, c], dbias).expect("shape consistent")),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// Dense layer product: `x [B, I] * w [O, I]^T -> [B, O]`.
pub fn matmul_nt<F: Scalar>(x: &Var<F>, w: &Var<F>) -> Var<F> {
    let (b, i) = (x.shape()[0], x.shape()[1]);
    let (o, wi) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(i, wi, "matmul_nt inner dims");
    let mut out = vec![F::zero(); b * o];
    {
        let xd = x.value().data();
        let wd = w.value().data();
        for bi in 0..b {
            let xrow = &xd[bi * i..(bi + 1) * i];
            for oi in 0..o {
                let wrow = &wd[oi * i..(oi + 1) * i];
                let mut acc = F::zero();
                for (xv, wv) in xrow.iter().zip(wrow.iter()) {
                    acc = acc + *xv * *wv;
                }
                out[bi * o + oi] = acc;
            }
        }
    }
    Var::from_op(
        Tensor::new(vec![b, o], out).expect("shape consistent"),
        vec![x.clone(), w.clone()],
        Box::new(move |g, ps| {
            let gd = g.data();
            let xd = ps[0].value().data();
            let wd = ps[1].value().data();
            let mut dx = vec![F::zero(); b * i];
            let mut dw = vec![F::zero(); o * i];
            for bi in 0..b {
                let grow = &gd[bi * o..(bi + 1) * o];
                let xrow = &xd[bi * i..(bi + 1) * i];
                let dxrow = &mut dx[bi * i..(bi + 1) * i];
                for oi in 0..o {
                    let gv = grow[oi];
                    if gv == F::zero() {
                        continue;
                    }
                    let wrow = &wd[oi * i..(oi + 1) * i];
                    for (d, wv) in dxrow.iter_mut().zip(wrow.iter()) {
                        *d += gv * *wv;
                    }
                    let dwrow = &mut dw[oi * i..(oi + 1) * i];
                    for (d, xv) in dwrow.iter_mut().zip(xrow.iter()) {
                        *d += gv * *xv;
                    }
                }
            }
            vec![
                Some(Tensor::new(vec![b, i], dx).expect("shape consistent")),
                Some(Tensor::new(vec![o, i], dw).expect("shape consistent")),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------
// convolution & resampling
// ---------------------------------------------------------------------------

fn dims3(shape: &[usize]) -> (usize, usize, usize) {
    debug_assert_eq!(shape.len(), 3, "expected rank-3 tensor, got {shape:?}");
    (shape[0], shape[1], shape[2])
}

pub fn conv1d_out_len(l: usize, k: usize, stride: usize, pad: usize) -> usize {
    (l + 2 * pad - k) / stride + 1
}

/// 1-D convolution: `x [B, Cin, L] * w [Cout, Cin, K] -> [B, Cout, Lout]`.
/// Bias is applied separately via [`add_channels`].
pub fn conv1d<F: Scalar>(x: &Var<F>, w: &Var<F>, stride: usize, pad: usize) -> Var<F> {
    let (b, cin, l) = dims3(x.shape());
    let (cout, wcin, k) = dims3(w.shape());
    debug_assert_eq!(cin, wcin, "conv1d channel mismatch");
    let lout = conv1d_out_len(l, k, stride, pad);

    let out = conv1d_forward(x.value().data(), w.value().data(), b, cin, l, cout, k, stride, pad, lout);
    Var::from_op(
        Tensor::new(vec![b, cout, lout], out).expect("shape consistent"),
        vec![x.clone(), w.clone()],
        Box::new(move |g, ps| {
            let (dx, dw) = conv1d_backward(
                g.data(),
                ps[0].value().data(),
                ps[1].value().data(),
                b,
                cin,
                l,
                cout,
                k,
                stride,
                pad,
                lout,
            );
            vec![
                Some(Tensor::new(vec![b, cin, l], dx).expect("shape consistent")),
                Some(Tensor::new(vec![cout, cin, k], dw).expect("shape consistent")),
            ]
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward<F: Scalar>(
    xd: &[F],
    wd: &[F],
    b: usize,
    cin: usize,
    l: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    lout: usize,
) -> Vec<F> {
    let mut out = vec![F::zero(); b * cout * lout];
    for bi in 0..b {
        for co in 0..cout {
            let orow = &mut out[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
            for ci in 0..cin {
                let xrow = &xd[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                let wrow = &wd[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                for (q, &wv) in wrow.iter().enumerate() {
                    if wv == F::zero() {
                        continue;
                    }
                    // valid output positions j with 0 <= j*stride + q - pad < l
                    let (j_lo, j_hi) = conv_j_range(l, stride, pad, q, lout);
                    if stride == 1 {
                        for j in j_lo..j_hi {
                            orow[j] += wv * xrow[j + q - pad];
                        }
                    } else {
                        for j in j_lo..j_hi {
                            orow[j] += wv * xrow[j * stride + q - pad];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output index range `[j_lo, j_hi)` touching valid input positions for
/// kernel offset `q`.
fn conv_j_range(l: usize, stride: usize, pad: usize, q: usize, lout: usize) -> (usize, usize) {
    // need 0 <= j*stride + q - pad  and  j*stride + q - pad < l
    let j_lo = if q >= pad { 0 } else { (pad - q).div_ceil(stride) };
    let max_in = l + pad;
    let j_hi = if q >= max_in {
        0
    } else {
        ((max_in - q - 1) / stride + 1).min(lout)
    };
    (j_lo.min(j_hi), j_hi)
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward<F: Scalar>(
    gd: &[F],
    xd: &[F],
    wd: &[F],
    b: usize,
    cin: usize,
    l: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    lout: usize,
) -> (Vec<F>, Vec<F>) {
    let mut dx = vec![F::zero(); b * cin * l];
    let mut dw = vec![F::zero(); cout * cin * k];
    for bi in 0..b {
        for co in 0..cout {
            let grow = &gd[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
            for ci in 0..cin {
                let xrow = &xd[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                let dxrow = &mut dx[(bi * cin + ci) * l..(bi * cin + ci + 1) * l];
                let wbase = (co * cin + ci) * k;
                for q in 0..k {
                    let (j_lo, j_hi) = conv_j_range(l, stride, pad, q, lout);
                    let wv = wd[wbase + q];
                    let mut wacc = F::zero();
                    for j in j_lo..j_hi {
                        let xi = j * stride + q - pad;
                        let gv = grow[j];
                        dxrow[xi] += wv * gv;
                        wacc = wacc + gv * xrow[xi];
                    }
                    dw[wbase + q] += wacc;
                }
            }
        }
    }
    (dx, dw)
}

/// Nearest-neighbour upsampling along the length axis by an integer factor.
pub fn upsample_nearest<F: Scalar>(x: &Var<F>, factor: usize) -> Var<F> {
    let (b, c, l) = dims3(x.shape());
    let lout = l * factor;
    let mut out = vec![F::zero(); b * c * lout];
    {
        let xd = x.value().data();
        for bc in 0..b * c {
            let xrow = &xd[bc * l..(bc + 1) * l];
            let orow = &mut out[bc * lout..(bc + 1) * lout];
            for (i, &v) in xrow.iter().enumerate() {
                for r in 0..factor {
                    orow[i * factor + r] = v;
                }
            }
        }
    }
    Var::from_op(
        Tensor::new(vec![b, c, lout], out).expect("shape consistent"),
        vec![x.clone()],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut dx = vec![F::zero(); b * c * l];
            for bc in 0..b * c {
                let grow = &gd[bc * lout..(bc + 1) * lout];
                let dxrow = &mut dx[bc * l..(bc + 1) * l];
                for (i, d) in dxrow.iter_mut().enumerate() {
                    let mut acc = F::zero();
                    for r in 0..factor {
                        acc += grow[i * factor + r];
                    }
                    *d = acc;
                }
            }
            vec![Some(Tensor::new(vec![b, c, l], dx).expect("shape consistent"))]
        }),
    )
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

/// Group normalization over `[B, C, L]` with per-channel affine parameters.
pub fn group_norm<F: Scalar>(x: &Var<F>, gamma: &Var<F>, beta: &Var<F>, groups: usize, eps: f64) -> Var<F> {
    let (b, c, l) = dims3(x.shape());
    debug_assert!(c % groups == 0, "channels {c} not divisible by groups {groups}");
    debug_assert_eq!(gamma.shape(), &[c]);
    debug_assert_eq!(beta.shape(), &[c]);
    let cg = c / groups;
    let m = cg * l;

    let xd = x.value().data();
    let gd = gamma.value().data();
    let bd = beta.value().data();
    let mut out = vec![F::zero(); b * c * l];
    // (mu, inv_std) per (batch, group), captured for the backward pass
    let mut stats = vec![(F::zero(), F::zero()); b * groups];
    for bi in 0..b {
        for gi in 0..groups {
            let start = (bi * c + gi * cg) * l;
            let slice = &xd[start..start + m];
            let mut sum = 0.0f64;
            for v in slice {
                sum += v.into_f64();
            }
            let mu = sum / m as f64;
            let mut varsum = 0.0f64;
            for v in slice {
                let d = v.into_f64() - mu;
                varsum += d * d;
            }
            let inv_std = 1.0 / (varsum / m as f64 + eps).sqrt();
            stats[bi * groups + gi] = (F::from_f64(mu), F::from_f64(inv_std));
            let (mu_f, is_f) = stats[bi * groups + gi];
            for ci_local in 0..cg {
                let ch = gi * cg + ci_local;
                let (ga, be) = (gd[ch], bd[ch]);
                let row = &xd[(bi * c + ch) * l..(bi * c + ch + 1) * l];
                let orow = &mut out[(bi * c + ch) * l..(bi * c + ch + 1) * l];
                for (o, &v) in orow.iter_mut().zip(row.iter()) {
                    *o = ga * ((v - mu_f) * is_f) + be;
                }
            }
        }
    }

    Var::from_op(
        Tensor::new(vec![b, c, l], out).expect("shape consistent"),
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g, ps| {
            let gd_out = g.data();
            let xd = ps[0].value().data();
            let gad = ps[1].value().data();
            let mut dx = vec![F::zero(); b * c * l];
            let mut dgamma = vec![F::zero(); c];
            let mut dbeta = vec![F::zero(); c];
            let m_f = F::from_f64(m as f64);
            for bi in 0..b {
                for gi in 0..groups {
                    let (mu, inv_std) = stats[bi * groups + gi];
                    // h = g * gamma; need mean(h) and mean(h * xhat) over the group
                    let mut m1 = F::zero();
                    let mut m2 = F::zero();
                    for ci_local in 0..cg {
                        let ch = gi * cg + ci_local;
                        let base = (bi * c + ch) * l;
                        let ga = gad[ch];
                        for li in 0..l {
                            let go = gd_out[base + li];
                            let xhat = (xd[base + li] - mu) * inv_std;
                            let h = go * ga;
                            m1 += h;
                            m2 += h * xhat;
                            dgamma[ch] += go * xhat;
                            dbeta[ch] += go;
                        }
                    }
                    m1 /= m_f;
                    m2 /= m_f;
                    for ci_local in 0..cg {
                        let ch = gi * cg + ci_local;
                        let base = (bi * c + ch) * l;
                        let ga = gad[ch];
                        for li in 0..l {
                            let go = gd_out[base + li];
                            let xhat = (xd[base + li] - mu) * inv_std;
                            dx[base + li] = inv_std * (go * ga - m1 - xhat * m2);
                        }
                    }
                }
            }
            vec![
                Some(Tensor::new(vec![b, c, l], dx).expect("shape consistent")),
                Some(Tensor::from_vec(dgamma)),
                Some(Tensor::from_vec(dbeta)),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, inner)
}

/// Concatenate along an existing axis.
pub fn concat<F: Scalar>(parts: &[Var<F>], axis: usize) -> Var<F> {
    debug_assert!(!parts.is_empty());
    let first_shape = parts[0].shape().to_vec();
    let (outer, inner) = axis_blocks(&first_shape, axis);
    let axis_lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let total_axis: usize = axis_lens.iter().sum();

    let mut out_shape = first_shape.clone();
    out_shape[axis] = total_axis;
    let mut out = vec![F::zero(); outer * total_axis * inner];
    let mut offset = 0usize;
    for (p, &alen) in parts.iter().zip(axis_lens.iter()) {
        debug_assert_eq!(&p.shape()[..axis], &first_shape[..axis]);
        debug_assert_eq!(&p.shape()[axis + 1..], &first_shape[axis + 1..]);
        let pd = p.value().data();
        for o in 0..outer {
            let src = &pd[o * alen * inner..(o + 1) * alen * inner];
            let dst_start = (o * total_axis + offset) * inner;
            out[dst_start..dst_start + alen * inner].copy_from_slice(src);
        }
        offset += alen;
    }

    Var::from_op(
        Tensor::new(out_shape, out).expect("shape consistent"),
        parts.to_vec(),
        Box::new(move |g, ps| {
            let gd = g.data();
            let mut grads = Vec::with_capacity(ps.len());
            let mut offset = 0usize;
            for (p, &alen) in ps.iter().zip(axis_lens.iter()) {
                let mut dp = vec![F::zero(); outer * alen * inner];
                for o in 0..outer {
                    let src_start = (o * total_axis + offset) * inner;
                    dp[o * alen * inner..(o + 1) * alen * inner]
                        .copy_from_slice(&gd[src_start..src_start + alen * inner]);
                }
                grads.push(Some(
                    Tensor::new(p.shape().to_vec(), dp).expect("shape consistent"),
                ));
                offset += alen;
            }
            grads
        }),
    )
}

/// Contiguous slice `start..start+len` along an axis.
pub fn narrow<F: Scalar>(x: &Var<F>, axis: usize, start: usize, len: usize) -> Var<F> {
    let shape = x.shape().to_vec();
    let (outer, inner) = axis_blocks(&shape, axis);
    let alen = shape[axis];
    debug_assert!(start + len <= alen);
    let mut out_shape = shape.clone();
    out_shape[axis] = len;
    let xd = x.value().data();
    let mut out = vec![F::zero(); outer * len * inner];
    for o in 0..outer {
        let src_start = (o * alen + start) * inner;
        out[o * len * inner..(o + 1) * len * inner]
            .copy_from_slice(&xd[src_start..src_start + len * inner]);
    }
    Var::from_op(
        Tensor::new(out_shape, out).expect("shape consistent"),
        vec![x.clone()],
        Box::new(move |g, ps| {
            let gd = g.data();
            let mut dx = vec![F::zero(); ps[0].value().len()];
            for o in 0..outer {
                let dst_start = (o * alen + start) * inner;
                dx[dst_start..dst_start + len * inner]
                    .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(
                Tensor::new(ps[0].shape().to_vec(), dx).expect("shape consistent"),
            )]
        }),
    )
}

pub fn reshape<F: Scalar>(x: &Var<F>, shape: Vec<usize>) -> Var<F> {
    let v = x
        .value()
        .clone()
        .reshaped(shape)
        .expect("reshape element count mismatch");
    Var::from_op(
        v,
        vec![x.clone()],
        Box::new(|g, ps| {
            vec![Some(
                g.clone()
                    .reshaped(ps[0].shape().to_vec())
                    .expect("reshape element count mismatch"),
            )]
        }),
    )
}

/// Swap the two trailing axes of a rank-3 tensor: `[B, A, C] -> [B, C, A]`.
pub fn transpose_12<F: Scalar>(x: &Var<F>) -> Var<F> {
    let (b, a, c) = dims3(x.shape());
    let xd = x.value().data();
    let mut out = vec![F::zero(); b * a * c];
    for bi in 0..b {
        for ai in 0..a {
            for ci in 0..c {
                out[(bi * c + ci) * a + ai] = xd[(bi * a + ai) * c + ci];
            }
        }
    }
    Var::from_op(
        Tensor::new(vec![b, c, a], out).expect("shape consistent"),
        vec![x.clone()],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut dx = vec![F::zero(); b * a * c];
            for bi in 0..b {
                for ci in 0..c {
                    for ai in 0..a {
                        dx[(bi * a + ai) * c + ci] = gd[(bi * c + ci) * a + ai];
                    }
                }
            }
            vec![Some(Tensor::new(vec![b, a, c], dx).expect("shape consistent"))]
        }),
    )
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

pub fn sum<F: Scalar>(x: &Var<F>) -> Var<F> {
    let v = Tensor::scalar(x.value().sum());
    Var::from_op(
        v,
        vec![x.clone()],
        Box::new(|g, ps| vec![Some(Tensor::full(ps[0].shape(), g.item()))]),
    )
}

pub fn mean<F: Scalar>(x: &Var<F>) -> Var<F> {
    let n = x.value().len().max(1);
    let v = Tensor::scalar(x.value().mean());
    Var::from_op(
        v,
        vec![x.clone()],
        Box::new(move |g, ps| {
            let scale = g.item() / F::from_f64(n as f64);
            vec![Some(Tensor::full(ps[0].shape(), scale))]
        }),
    )
}

/// Mean squared error between two same-shaped vars.
pub fn mse<F: Scalar>(a: &Var<F>, b: &Var<F>) -> Var<F> {
    mean(&square(&sub(a, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::backward;

    fn leafv(data: Vec<f64>) -> Var<f64> {
        Var::leaf(Tensor::from_vec(data))
    }

    #[test]
    fn sigmoid_at_zero() {
        let x = Var::constant(Tensor::from_vec(vec![0.0f64]));
        assert_eq!(sigmoid(&x).value().data(), &[0.5]);
    }

    #[test]
    fn conv1d_scaling_case() {
        // kernel [1], single channel, weight 2, input [1,1,1] -> [2,2,2]
        let x = Var::constant(Tensor::new(vec![1, 1, 3], vec![1.0f64, 1.0, 1.0]).unwrap());
        let w = Var::constant(Tensor::new(vec![1, 1, 1], vec![2.0f64]).unwrap());
        let y = conv1d(&x, &w, 1, 0);
        assert_eq!(y.value().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn conv1d_padding_and_stride_shapes() {
        let x = Var::constant(Tensor::new(vec![1, 2, 8], vec![0.5f64; 16]).unwrap());
        let w = Var::constant(Tensor::new(vec![3, 2, 3], vec![0.1f64; 18]).unwrap());
        assert_eq!(conv1d(&x, &w, 1, 1).shape(), &[1, 3, 8]);
        assert_eq!(conv1d(&x, &w, 2, 1).shape(), &[1, 3, 4]);
    }

    #[test]
    fn concat_narrow_roundtrip() {
        let a = Var::constant(Tensor::new(vec![2, 1, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap());
        let b = Var::constant(Tensor::new(vec![2, 2, 2], vec![5.0f64, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap());
        let cat = concat(&[a.clone(), b.clone()], 1);
        assert_eq!(cat.shape(), &[2, 3, 2]);
        let back = narrow(&cat, 1, 0, 1);
        assert_eq!(back.value(), a.value());
        let back_b = narrow(&cat, 1, 1, 2);
        assert_eq!(back_b.value(), b.value());
    }

    #[test]
    fn transpose_12_matches_manual() {
        let x = Var::constant(Tensor::new(vec![1, 2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let t = transpose_12(&x);
        assert_eq!(t.shape(), &[1, 3, 2]);
        assert_eq!(t.value().data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let w = leafv(vec![1.0, 2.0, 3.0, 4.0]);
        let loss = mean(&w);
        let grads = backward(&loss).unwrap();
        assert_eq!(grads.get(w.id()).unwrap().data(), &[0.25; 4]);
    }
}
