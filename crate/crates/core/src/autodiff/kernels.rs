//! Raw compute kernels behind the tape operations.
//!
//! All kernels are written as row passes over contiguous slices so the
//! compiler can vectorize them; summation order is fixed, which keeps
//! forward values and gradients bitwise reproducible.

use super::tensor::Scalar;

/// dst[x] += k0*src[x-1] + k1*src[x] + k2*src[x+1], with zero padding
/// outside [0, w).
#[inline]
fn row3_accum<S: Scalar>(dst: &mut [S], src: &[S], k0: S, k1: S, k2: S) {
    let w = dst.len();
    debug_assert_eq!(src.len(), w);
    if w == 1 {
        dst[0] = dst[0] + k1 * src[0];
        return;
    }
    dst[0] = dst[0] + k1 * src[0] + k2 * src[1];
    for x in 1..w - 1 {
        dst[x] = dst[x] + k0 * src[x - 1] + k1 * src[x] + k2 * src[x + 1];
    }
    dst[w - 1] = dst[w - 1] + k0 * src[w - 2] + k1 * src[w - 1];
}

/// Accumulates a 3x3 same-size correlation of one channel into `dst`:
/// dst[y,x] += sum_{dy,dx} k[dy*3+dx] * src[y+dy-1, x+dx-1] (zero padded).
fn conv3x3_ch_accum<S: Scalar>(src: &[S], h: usize, w: usize, k: &[S], dst: &mut [S]) {
    debug_assert_eq!(k.len(), 9);
    for y in 0..h {
        let dst_row = &mut dst[y * w..(y + 1) * w];
        if y > 0 {
            row3_accum(dst_row, &src[(y - 1) * w..y * w], k[0], k[1], k[2]);
        }
        row3_accum(dst_row, &src[y * w..(y + 1) * w], k[3], k[4], k[5]);
        if y + 1 < h {
            row3_accum(dst_row, &src[(y + 1) * w..(y + 2) * w], k[6], k[7], k[8]);
        }
    }
}

/// Forward 3x3 convolution, stride 1, zero padding 1.
/// input [c_in, h, w], kernel [c_out, c_in, 3, 3], bias [c_out], out [c_out, h, w].
pub fn conv3x3_forward<S: Scalar>(
    input: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kernel: &[S],
    c_out: usize,
    bias: &[S],
    out: &mut [S],
) {
    let hw = h * w;
    for co in 0..c_out {
        let out_ch = &mut out[co * hw..(co + 1) * hw];
        out_ch.fill(bias[co]);
        for ci in 0..c_in {
            let src = &input[ci * hw..(ci + 1) * hw];
            let k = &kernel[(co * c_in + ci) * 9..(co * c_in + ci) * 9 + 9];
            conv3x3_ch_accum(src, h, w, k, out_ch);
        }
    }
}

/// Accumulates the input adjoint of `conv3x3_forward`.
pub fn conv3x3_backward_input<S: Scalar>(
    grad_out: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kernel: &[S],
    c_out: usize,
    grad_input: &mut [S],
) {
    let hw = h * w;
    for ci in 0..c_in {
        let gin_ch = &mut grad_input[ci * hw..(ci + 1) * hw];
        for co in 0..c_out {
            let gout_ch = &grad_out[co * hw..(co + 1) * hw];
            let k = &kernel[(co * c_in + ci) * 9..(co * c_in + ci) * 9 + 9];
            // The adjoint of a correlation is a correlation with the
            // 180-degree-rotated kernel.
            let flipped = [k[8], k[7], k[6], k[5], k[4], k[3], k[2], k[1], k[0]];
            conv3x3_ch_accum(gout_ch, h, w, &flipped, gin_ch);
        }
    }
}

/// Accumulates the kernel adjoint of `conv3x3_forward`.
pub fn conv3x3_backward_kernel<S: Scalar>(
    grad_out: &[S],
    input: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    grad_kernel: &mut [S],
) {
    let hw = h * w;
    for co in 0..c_out {
        let gout_ch = &grad_out[co * hw..(co + 1) * hw];
        for ci in 0..c_in {
            let src = &input[ci * hw..(ci + 1) * hw];
            let gk = &mut grad_kernel[(co * c_in + ci) * 9..(co * c_in + ci) * 9 + 9];
            for dy in 0..3usize {
                let (y0, y1) = tap_range(dy, h);
                for dx in 0..3usize {
                    let (x0, x1) = tap_range(dx, w);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = S::zero();
                    for y in y0..y1 {
                        let g_row = &gout_ch[y * w + x0..y * w + x1];
                        let iy = y + dy - 1;
                        let s_row = &src[iy * w + x0 + dx - 1..iy * w + x1 + dx - 1];
                        acc = acc
                            + g_row
                                .iter()
                                .zip(s_row)
                                .map(|(&g, &s)| g * s)
                                .fold(S::zero(), |a, b| a + b);
                    }
                    gk[dy * 3 + dx] = gk[dy * 3 + dx] + acc;
                }
            }
        }
    }
}

/// Output positions at which tap offset `d` (0..3) reads inside [0, n).
#[inline]
fn tap_range(d: usize, n: usize) -> (usize, usize) {
    let lo = if d == 0 { 1 } else { 0 };
    let hi = if d == 2 { n.saturating_sub(1) } else { n };
    (lo, hi.max(lo))
}

/// Accumulates the bias adjoint of `conv3x3_forward`.
pub fn conv3x3_backward_bias<S: Scalar>(
    grad_out: &[S],
    c_out: usize,
    hw: usize,
    grad_bias: &mut [S],
) {
    for co in 0..c_out {
        let sum = grad_out[co * hw..(co + 1) * hw]
            .iter()
            .fold(S::zero(), |a, &b| a + b);
        grad_bias[co] = grad_bias[co] + sum;
    }
}

/// 2x2 max pooling with stride 2. Records, per output element, the flat
/// input index that won; ties go to the first element in row-major scan
/// order of the window.
pub fn maxpool2_forward<S: Scalar>(
    input: &[S],
    c: usize,
    h: usize,
    w: usize,
    out: &mut [S],
    argmax: &mut Vec<u32>,
) {
    let (oh, ow) = (h / 2, w / 2);
    argmax.clear();
    argmax.reserve(c * oh * ow);
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (2 * oy) * w + 2 * ox;
                let cand = [base, base + 1, base + w, base + w + 1];
                let mut best = cand[0];
                for &i in &cand[1..] {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                dst[oy * ow + ox] = src[best];
                argmax.push((ch * h * w + best) as u32);
            }
        }
    }
}

/// Routes the pooled adjoint back to the recorded argmax positions.
pub fn maxpool2_backward<S: Scalar>(grad_out: &[S], argmax: &[u32], grad_input: &mut [S]) {
    for (&g, &idx) in grad_out.iter().zip(argmax) {
        let i = idx as usize;
        grad_input[i] = grad_input[i] + g;
    }
}

pub fn relu_forward<S: Scalar>(input: &[S], out: &mut [S]) {
    for (o, &v) in out.iter_mut().zip(input) {
        *o = if v > S::zero() { v } else { S::zero() };
    }
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward<S: Scalar>(grad_out: &[S], input: &[S], grad_input: &mut [S]) {
    for ((g, &go), &v) in grad_input.iter_mut().zip(grad_out).zip(input) {
        if v > S::zero() {
            *g = *g + go;
        }
    }
}

/// out = weight[m,n] . input[n] + bias[m]
pub fn linear_forward<S: Scalar>(
    input: &[S],
    weight: &[S],
    bias: &[S],
    m: usize,
    n: usize,
    out: &mut [S],
) {
    for r in 0..m {
        let row = &weight[r * n..(r + 1) * n];
        let dot = row
            .iter()
            .zip(input)
            .map(|(&a, &b)| a * b)
            .fold(S::zero(), |a, b| a + b);
        out[r] = dot + bias[r];
    }
}

pub fn linear_backward<S: Scalar>(
    grad_out: &[S],
    input: &[S],
    weight: &[S],
    m: usize,
    n: usize,
    grad_input: Option<&mut [S]>,
    grad_weight: Option<&mut [S]>,
    grad_bias: Option<&mut [S]>,
) {
    if let Some(gin) = grad_input {
        for r in 0..m {
            let g = grad_out[r];
            let row = &weight[r * n..(r + 1) * n];
            for (gi, &wv) in gin.iter_mut().zip(row) {
                *gi = *gi + g * wv;
            }
        }
    }
    if let Some(gw) = grad_weight {
        for r in 0..m {
            let g = grad_out[r];
            let grow = &mut gw[r * n..(r + 1) * n];
            for (gv, &xv) in grow.iter_mut().zip(input) {
                *gv = *gv + g * xv;
            }
        }
    }
    if let Some(gb) = grad_bias {
        for (b, &g) in gb.iter_mut().zip(grad_out) {
            *b = *b + g;
        }
    }
}

/// Stable softmax cross-entropy. Returns (loss, probabilities).
/// loss = logsumexp(logits) - logits[target], computed with max subtraction.
pub fn softmax_crossentropy_forward<S: Scalar>(logits: &[S], target: usize) -> (S, Vec<S>) {
    let max = logits
        .iter()
        .fold(S::neg_infinity(), |a, &b| if b > a { b } else { a });
    let mut probs: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = probs.iter().fold(S::zero(), |a, &b| a + b);
    let loss = sum.ln() + max - logits[target];
    for p in probs.iter_mut() {
        *p = *p / sum;
    }
    (loss, probs)
}

/// grad_logits += upstream * (softmax(logits) - onehot(target))
pub fn softmax_crossentropy_backward<S: Scalar>(
    upstream: S,
    probs: &[S],
    target: usize,
    grad_logits: &mut [S],
) {
    for (g, &p) in grad_logits.iter_mut().zip(probs) {
        *g = *g + upstream * p;
    }
    grad_logits[target] = grad_logits[target] - upstream;
}
