//! Numeric kernels behind the graph ops.
//!
//! Every kernel is deterministic: parallel variants split work over disjoint
//! output regions and each output element is accumulated in a fixed order,
//! so threaded and single-threaded execution produce identical bits.

use crate::element::Element;
use rayon::prelude::*;

/// Minimum number of output elements before a kernel bothers with threads.
const PAR_THRESHOLD: usize = 16 * 1024;

#[inline(always)]
pub fn axpy<T: Element>(dst: &mut [T], a: T, src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = s.mul_add(a, *d);
    }
}

/// Dot product with a fixed 8-lane accumulation order.
#[inline]
pub fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let ao = &a[i * 8..i * 8 + 8];
        let bo = &b[i * 8..i * 8 + 8];
        for l in 0..8 {
            acc[l] = ao[l].mul_add(bo[l], acc[l]);
        }
    }
    let mut tail = T::ZERO;
    for i in chunks * 8..a.len() {
        tail = a[i].mul_add(b[i], tail);
    }
    let mut total = tail;
    for l in 0..8 {
        total += acc[l];
    }
    total
}

pub struct ConvGeometry {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }
    pub fn out_positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Unfold `input` (C_in x H x W) into a (C_in*k*k) x (H_out*W_out) patch
/// matrix, zero-filling the padded border.
pub fn im2col<T: Element>(input: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let n = g.out_positions();
    debug_assert_eq!(cols.len(), g.patch_len() * n);
    for ci in 0..g.c_in {
        let plane = &input[ci * g.h_in * g.w_in..(ci + 1) * g.h_in * g.w_in];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = &mut cols[((ci * g.kernel + ky) * g.kernel + kx) * n..][..n];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let seg = &mut row[oy * g.w_out..][..g.w_out];
                    if iy < 0 || iy >= g.h_in as isize {
                        seg.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w_in..][..g.w_in];
                    if g.stride == 1 {
                        // ix = ox + kx - p, valid for ox in [lo, hi)
                        let off = kx as isize - g.padding as isize;
                        let lo = (-off).max(0) as usize;
                        let hi = ((g.w_in as isize - off).max(0) as usize).min(g.w_out);
                        seg[..lo.min(g.w_out)].fill(T::ZERO);
                        if lo < hi {
                            seg[lo..hi]
                                .copy_from_slice(&src[(lo as isize + off) as usize..][..hi - lo]);
                        }
                        seg[hi.max(lo)..].fill(T::ZERO);
                    } else {
                        for (ox, s) in seg.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            *s = if ix >= 0 && ix < g.w_in as isize {
                                src[ix as usize]
                            } else {
                                T::ZERO
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Fold a patch-matrix gradient back onto the input layout, accumulating
/// where patches overlap.
pub fn col2im_add<T: Element>(cols: &[T], g: &ConvGeometry, d_input: &mut [T]) {
    let n = g.out_positions();
    for ci in 0..g.c_in {
        let plane = &mut d_input[ci * g.h_in * g.w_in..(ci + 1) * g.h_in * g.w_in];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = &cols[((ci * g.kernel + ky) * g.kernel + kx) * n..][..n];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h_in as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w_in..][..g.w_in];
                    let seg = &row[oy * g.w_out..][..g.w_out];
                    if g.stride == 1 {
                        let off = kx as isize - g.padding as isize;
                        let lo = (-off).max(0) as usize;
                        let hi = ((g.w_in as isize - off).max(0) as usize).min(g.w_out);
                        if lo < hi {
                            let dst_seg = &mut dst[(lo as isize + off) as usize..][..hi - lo];
                            for (d, s) in dst_seg.iter_mut().zip(&seg[lo..hi]) {
                                *d += *s;
                            }
                        }
                    } else {
                        for (ox, s) in seg.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if ix >= 0 && ix < g.w_in as isize {
                                dst[ix as usize] += *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Element>(
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    g: &ConvGeometry,
    parallel: bool,
    out: &mut [T],
) {
    let n = g.out_positions();
    let k_len = g.patch_len();
    let mut cols = vec![T::ZERO; k_len * n];
    im2col(input, g, &mut cols);

    for (co, row) in out.chunks_mut(n).enumerate() {
        row.fill(bias.map_or(T::ZERO, |b| b[co]));
    }
    gemm_nn(weight, &cols, g.c_out, k_len, n, out, parallel);
}

pub struct ConvGrads<'a, T> {
    pub d_input: Option<&'a mut [T]>,
    pub d_weight: Option<&'a mut [T]>,
    pub d_bias: Option<&'a mut [T]>,
}

pub fn conv2d_backward<T: Element>(
    input: &[T],
    weight: &[T],
    upstream: &[T],
    g: &ConvGeometry,
    parallel: bool,
    grads: ConvGrads<'_, T>,
) {
    let n = g.out_positions();
    let k_len = g.patch_len();

    if let Some(d_bias) = grads.d_bias {
        for co in 0..g.c_out {
            let mut s = T::ZERO;
            for &v in &upstream[co * n..(co + 1) * n] {
                s += v;
            }
            d_bias[co] += s;
        }
    }

    if let Some(d_weight) = grads.d_weight {
        let mut cols = vec![T::ZERO; k_len * n];
        im2col(input, g, &mut cols);
        if parallel && g.c_out * n * k_len >= PAR_THRESHOLD {
            d_weight
                .par_chunks_mut(4 * k_len)
                .enumerate()
                .for_each(|(blk, dw_rows)| {
                    let rows = dw_rows.len() / k_len;
                    gemm_nt_add(&upstream[blk * 4 * n..(blk * 4 + rows) * n], &cols, rows, k_len, n, dw_rows);
                });
        } else {
            gemm_nt_add(upstream, &cols, g.c_out, k_len, n, d_weight);
        }
    }

    if let Some(d_input) = grads.d_input {
        // d_cols = W^T (k_len x c_out) * upstream (c_out x n)
        let mut w_t = vec![T::ZERO; k_len * g.c_out];
        for co in 0..g.c_out {
            for kk in 0..k_len {
                w_t[kk * g.c_out + co] = weight[co * k_len + kk];
            }
        }
        let mut d_cols = vec![T::ZERO; k_len * n];
        gemm_nn(&w_t, upstream, k_len, g.c_out, n, &mut d_cols, parallel);
        col2im_add(&d_cols, g, d_input);
    }
}

pub fn upsample_forward<T: Element>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    out: &mut [T],
) {
    let (ho, wo) = (h * f, w * f);
    for ci in 0..c {
        let src = &input[ci * h * w..(ci + 1) * h * w];
        let dst = &mut out[ci * ho * wo..(ci + 1) * ho * wo];
        for oy in 0..ho {
            let src_row = &src[(oy / f) * w..][..w];
            let dst_row = &mut dst[oy * wo..][..wo];
            for (ox, d) in dst_row.iter_mut().enumerate() {
                *d = src_row[ox / f];
            }
        }
    }
}

pub fn upsample_backward<T: Element>(
    upstream: &[T],
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    d_input: &mut [T],
) {
    let (ho, wo) = (h * f, w * f);
    for ci in 0..c {
        let g = &upstream[ci * ho * wo..(ci + 1) * ho * wo];
        let di = &mut d_input[ci * h * w..(ci + 1) * h * w];
        for oy in 0..ho {
            let g_row = &g[oy * wo..][..wo];
            let d_row = &mut di[(oy / f) * w..][..w];
            for (ox, v) in g_row.iter().enumerate() {
                d_row[ox / f] += *v;
            }
        }
    }
}

/// Column width of the register-tiled microkernel.
const CB: usize = 32;

/// 4 x CB microkernel: accumulators live in registers across the whole
/// k-loop, so each step costs one B load plus four broadcast FMAs.
#[inline]
fn microkernel_4xcb<T: Element>(
    a: &[T],
    b: &[T],
    k: usize,
    n: usize,
    i0: usize,
    j0: usize,
    c: &mut [T],
) {
    let a0 = &a[i0 * k..(i0 + 1) * k];
    let a1 = &a[(i0 + 1) * k..(i0 + 2) * k];
    let a2 = &a[(i0 + 2) * k..(i0 + 3) * k];
    let a3 = &a[(i0 + 3) * k..(i0 + 4) * k];
    let mut acc0 = [T::ZERO; CB];
    let mut acc1 = [T::ZERO; CB];
    let mut acc2 = [T::ZERO; CB];
    let mut acc3 = [T::ZERO; CB];
    for p in 0..k {
        let bv: &[T; CB] = b[p * n + j0..p * n + j0 + CB].try_into().unwrap();
        let (w0, w1, w2, w3) = (a0[p], a1[p], a2[p], a3[p]);
        for c_i in 0..CB {
            let s = bv[c_i];
            acc0[c_i] = s.mul_add(w0, acc0[c_i]);
            acc1[c_i] = s.mul_add(w1, acc1[c_i]);
            acc2[c_i] = s.mul_add(w2, acc2[c_i]);
            acc3[c_i] = s.mul_add(w3, acc3[c_i]);
        }
    }
    for (r, acc_r) in [acc0, acc1, acc2, acc3].iter().enumerate() {
        let dst = &mut c[(i0 + r) * n + j0..(i0 + r) * n + j0 + CB];
        for (d, &v) in dst.iter_mut().zip(acc_r.iter()) {
            *d += v;
        }
    }
}

/// Plain fallback for ragged edges; per-element accumulation order matches
/// the microkernel (ascending p).
fn gemm_edge<T: Element>(
    a: &[T],
    b: &[T],
    k: usize,
    n: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    c: &mut [T],
) {
    for i in rows {
        for j in cols.clone() {
            let mut s = T::ZERO;
            for p in 0..k {
                s = a[i * k + p].mul_add(b[p * n + j], s);
            }
            c[i * n + j] += s;
        }
    }
}

/// C (m x n) += A (m x k) * B (k x n).
///
/// Register-tiled 4xCB blocks; per-element accumulation order is ascending
/// in `p` regardless of blocking or threading, so results are bit-identical
/// across configurations.
pub fn gemm_nn<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T], parallel: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if parallel && m >= 8 && m * k * n >= PAR_THRESHOLD {
        let half_rows = (m / 2 + 3) / 4 * 4;
        let (top, bottom) = c.split_at_mut(half_rows.min(m) * n);
        rayon::join(
            || run_gemm_part(a, b, k, n, 0, top),
            || run_gemm_part(a, b, k, n, half_rows.min(m), bottom),
        );
    } else {
        run_gemm_part(a, b, k, n, 0, c);
    }
}

fn run_gemm_part<T: Element>(a: &[T], b: &[T], k: usize, n: usize, row_off: usize, c_rows: &mut [T]) {
    if c_rows.is_empty() {
        return;
    }
    // Shift A so row indexing is local to this slab.
    let a_local = &a[row_off * k..];
    gemm_rows_local(a_local, b, k, n, c_rows);
}

fn gemm_rows_local<T: Element>(a: &[T], b: &[T], k: usize, n: usize, c_rows: &mut [T]) {
    let m_here = c_rows.len() / n;
    let full_rows = m_here / 4 * 4;
    let full_cols = n / CB * CB;
    for j0 in (0..full_cols).step_by(CB) {
        for r0 in (0..full_rows).step_by(4) {
            microkernel_4xcb(a, b, k, n, r0, j0, c_rows);
        }
    }
    if full_cols < n {
        gemm_edge(a, b, k, n, 0..m_here, full_cols..n, c_rows);
    }
    if full_rows < m_here {
        gemm_edge(a, b, k, n, full_rows..m_here, 0..full_cols, c_rows);
    }
}

/// Four simultaneous dot products against a shared right-hand row, so the
/// shared row is streamed once. 16-lane fixed accumulation order.
#[inline]
fn dot4<T: Element>(g0: &[T], g1: &[T], g2: &[T], g3: &[T], b: &[T]) -> [T; 4] {
    const L: usize = 16;
    let len = b.len();
    let chunks = len / L;
    let mut a0 = [T::ZERO; L];
    let mut a1 = [T::ZERO; L];
    let mut a2 = [T::ZERO; L];
    let mut a3 = [T::ZERO; L];
    for i in 0..chunks {
        let o = i * L;
        let bv: &[T; L] = b[o..o + L].try_into().unwrap();
        let v0: &[T; L] = g0[o..o + L].try_into().unwrap();
        let v1: &[T; L] = g1[o..o + L].try_into().unwrap();
        let v2: &[T; L] = g2[o..o + L].try_into().unwrap();
        let v3: &[T; L] = g3[o..o + L].try_into().unwrap();
        for l in 0..L {
            let s = bv[l];
            a0[l] = s.mul_add(v0[l], a0[l]);
            a1[l] = s.mul_add(v1[l], a1[l]);
            a2[l] = s.mul_add(v2[l], a2[l]);
            a3[l] = s.mul_add(v3[l], a3[l]);
        }
    }
    let mut out = [T::ZERO; 4];
    for i in chunks * L..len {
        let s = b[i];
        out[0] = s.mul_add(g0[i], out[0]);
        out[1] = s.mul_add(g1[i], out[1]);
        out[2] = s.mul_add(g2[i], out[2]);
        out[3] = s.mul_add(g3[i], out[3]);
    }
    for l in 0..L {
        out[0] += a0[l];
        out[1] += a1[l];
        out[2] += a2[l];
        out[3] += a3[l];
    }
    out
}

/// dA (m x k) += dC (m x n) * B^T, i.e. dA[i,p] = dot(dC row i, B row p).
pub fn gemm_nt_add<T: Element>(dc: &[T], b: &[T], m: usize, k: usize, n: usize, da: &mut [T]) {
    let mut i = 0;
    while i + 4 <= m {
        let g0 = &dc[i * n..(i + 1) * n];
        let g1 = &dc[(i + 1) * n..(i + 2) * n];
        let g2 = &dc[(i + 2) * n..(i + 3) * n];
        let g3 = &dc[(i + 3) * n..(i + 4) * n];
        for p in 0..k {
            let br = &b[p * n..(p + 1) * n];
            let d = dot4(g0, g1, g2, g3, br);
            da[i * k + p] += d[0];
            da[(i + 1) * k + p] += d[1];
            da[(i + 2) * k + p] += d[2];
            da[(i + 3) * k + p] += d[3];
        }
        i += 4;
    }
    while i < m {
        let g_row = &dc[i * n..(i + 1) * n];
        let da_row = &mut da[i * k..(i + 1) * k];
        for (p, d) in da_row.iter_mut().enumerate() {
            *d += dot(g_row, &b[p * n..(p + 1) * n]);
        }
        i += 1;
    }
}

/// dB (k x n) += A^T * dC, accumulated row-by-row in fixed i order.
pub fn gemm_tn_add<T: Element>(a: &[T], dc: &[T], m: usize, k: usize, n: usize, db: &mut [T]) {
    for i in 0..m {
        let g_row = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(&mut db[p * n..(p + 1) * n], a[i * k + p], g_row);
        }
    }
}

pub fn softmax_rows_forward<T: Element>(input: &[T], rows: usize, cols: usize, out: &mut [T]) {
    for r in 0..rows {
        let x = &input[r * cols..(r + 1) * cols];
        let y = &mut out[r * cols..(r + 1) * cols];
        let mut m = x[0];
        for &v in x.iter() {
            m = m.maximum(v);
        }
        let mut s = T::ZERO;
        for (yi, &xi) in y.iter_mut().zip(x.iter()) {
            let e = (xi - m).exp();
            *yi = e;
            s += e;
        }
        let inv = T::ONE / s;
        for yi in y.iter_mut() {
            *yi *= inv;
        }
    }
}

pub fn softmax_rows_backward<T: Element>(
    output: &[T],
    upstream: &[T],
    rows: usize,
    cols: usize,
    d_input: &mut [T],
) {
    for r in 0..rows {
        let y = &output[r * cols..(r + 1) * cols];
        let g = &upstream[r * cols..(r + 1) * cols];
        let d = &mut d_input[r * cols..(r + 1) * cols];
        let inner = dot(g, y);
        for ((di, &yi), &gi) in d.iter_mut().zip(y.iter()).zip(g.iter()) {
            *di += yi * (gi - inner);
        }
    }
}

/// Per-group (mean, inverse std) saved for the backward pass.
pub fn group_norm_forward<T: Element>(
    input: &[T],
    gamma: &[T],
    beta: &[T],
    channels: usize,
    spatial: usize,
    groups: usize,
    eps: f64,
    out: &mut [T],
) -> Vec<(T, T)> {
    let cpg = channels / groups;
    let group_len = cpg * spatial;
    let mut saved = Vec::with_capacity(groups);
    for gi in 0..groups {
        let x = &input[gi * group_len..(gi + 1) * group_len];
        let mut mean = T::ZERO;
        for &v in x {
            mean += v;
        }
        mean = mean * T::from_f64(1.0 / group_len as f64);
        let mut var = T::ZERO;
        for &v in x {
            let d = v - mean;
            var = d.mul_add(d, var);
        }
        var = var * T::from_f64(1.0 / group_len as f64);
        let istd = T::ONE / (var + T::from_f64(eps)).sqrt();
        saved.push((mean, istd));
        let y = &mut out[gi * group_len..(gi + 1) * group_len];
        for c_local in 0..cpg {
            let c = gi * cpg + c_local;
            let (g_c, b_c) = (gamma[c], beta[c]);
            let xs = &x[c_local * spatial..(c_local + 1) * spatial];
            let ys = &mut y[c_local * spatial..(c_local + 1) * spatial];
            for (yv, &xv) in ys.iter_mut().zip(xs.iter()) {
                *yv = ((xv - mean) * istd).mul_add(g_c, b_c);
            }
        }
    }
    saved
}

pub struct GroupNormGrads<'a, T> {
    pub d_input: Option<&'a mut [T]>,
    pub d_gamma: Option<&'a mut [T]>,
    pub d_beta: Option<&'a mut [T]>,
}

#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward<T: Element>(
    input: &[T],
    gamma: &[T],
    saved: &[(T, T)],
    upstream: &[T],
    channels: usize,
    spatial: usize,
    groups: usize,
    grads: GroupNormGrads<'_, T>,
) {
    let cpg = channels / groups;
    let group_len = cpg * spatial;
    let GroupNormGrads { d_input, d_gamma, d_beta } = grads;
    let mut d_input = d_input;
    let mut d_gamma = d_gamma;
    let mut d_beta = d_beta;
    for gi in 0..groups {
        let (mean, istd) = saved[gi];
        let x = &input[gi * group_len..(gi + 1) * group_len];
        let g = &upstream[gi * group_len..(gi + 1) * group_len];

        if let Some(dg) = d_gamma.as_deref_mut() {
            for c_local in 0..cpg {
                let c = gi * cpg + c_local;
                let xs = &x[c_local * spatial..(c_local + 1) * spatial];
                let gs = &g[c_local * spatial..(c_local + 1) * spatial];
                let mut s = T::ZERO;
                for (&xv, &gv) in xs.iter().zip(gs.iter()) {
                    s = ((xv - mean) * istd).mul_add(gv, s);
                }
                dg[c] += s;
            }
        }
        if let Some(db) = d_beta.as_deref_mut() {
            for c_local in 0..cpg {
                let c = gi * cpg + c_local;
                let gs = &g[c_local * spatial..(c_local + 1) * spatial];
                let mut s = T::ZERO;
                for &gv in gs {
                    s += gv;
                }
                db[c] += s;
            }
        }
        if let Some(di) = d_input.as_deref_mut() {
            // dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            let mut sum_dxhat = T::ZERO;
            let mut sum_dxhat_xhat = T::ZERO;
            for c_local in 0..cpg {
                let c = gi * cpg + c_local;
                let gam = gamma[c];
                let xs = &x[c_local * spatial..(c_local + 1) * spatial];
                let gs = &g[c_local * spatial..(c_local + 1) * spatial];
                for (&xv, &gv) in xs.iter().zip(gs.iter()) {
                    let dxhat = gv * gam;
                    let xhat = (xv - mean) * istd;
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat = dxhat.mul_add(xhat, sum_dxhat_xhat);
                }
            }
            let inv_n = T::from_f64(1.0 / group_len as f64);
            let mean_dxhat = sum_dxhat * inv_n;
            let mean_dxhat_xhat = sum_dxhat_xhat * inv_n;
            let di_g = &mut di[gi * group_len..(gi + 1) * group_len];
            for c_local in 0..cpg {
                let c = gi * cpg + c_local;
                let gam = gamma[c];
                let xs = &x[c_local * spatial..(c_local + 1) * spatial];
                let gs = &g[c_local * spatial..(c_local + 1) * spatial];
                let ds = &mut di_g[c_local * spatial..(c_local + 1) * spatial];
                for ((dv, &xv), &gv) in ds.iter_mut().zip(xs.iter()).zip(gs.iter()) {
                    let dxhat = gv * gam;
                    let xhat = (xv - mean) * istd;
                    *dv += istd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
        }
    }
}
