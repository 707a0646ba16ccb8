//! Batched numeric kernels behind the tape ops.
//!
//! Each hot kernel comes in a sequential (`*_seq`) and, with the `parallel`
//! feature, a rayon (`*_par`) variant; the unsuffixed function dispatches on
//! the feature. Parallelism is only ever over disjoint output chunks while
//! every inner accumulation keeps the same ascending index order, so both
//! variants produce bitwise-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// out[m,n] = a[m,k] @ b[k,n]
pub fn matmul_seq(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (i, row) in out.chunks_mut(n).enumerate() {
        matmul_row(a, b, row, i, k, n);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_par(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| matmul_row(a, b, row, i, k, n));
}

#[inline]
fn matmul_row(a: &[f64], b: &[f64], row: &mut [f64], i: usize, k: usize, n: usize) {
    row.fill(0.0);
    for p in 0..k {
        let av = a[i * k + p];
        let brow = &b[p * n..(p + 1) * n];
        for (r, bv) in row.iter_mut().zip(brow) {
            *r += av * bv;
        }
    }
}

pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    matmul_par(a, b, out, m, k, n);
    #[cfg(not(feature = "parallel"))]
    matmul_seq(a, b, out, m, k, n);
}

/// out[m,n] = a[p,m]^T @ b[p,n] — accumulation over p ascending.
pub fn matmul_tn_seq(a: &[f64], b: &[f64], out: &mut [f64], p: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), p * m);
    debug_assert_eq!(b.len(), p * n);
    debug_assert_eq!(out.len(), m * n);
    for (i, row) in out.chunks_mut(n).enumerate() {
        matmul_tn_row(a, b, row, i, p, m, n);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_tn_par(a: &[f64], b: &[f64], out: &mut [f64], p: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), p * m);
    debug_assert_eq!(b.len(), p * n);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| matmul_tn_row(a, b, row, i, p, m, n));
}

#[inline]
fn matmul_tn_row(a: &[f64], b: &[f64], row: &mut [f64], i: usize, p: usize, _m: usize, n: usize) {
    row.fill(0.0);
    let m = a.len() / p;
    for q in 0..p {
        let av = a[q * m + i];
        let brow = &b[q * n..(q + 1) * n];
        for (r, bv) in row.iter_mut().zip(brow) {
            *r += av * bv;
        }
    }
}

pub fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], p: usize, m: usize, n: usize) {
    #[cfg(feature = "parallel")]
    matmul_tn_par(a, b, out, p, m, n);
    #[cfg(not(feature = "parallel"))]
    matmul_tn_seq(a, b, out, p, m, n);
}

/// out[m,p] = a[m,n] @ b[p,n]^T
pub fn matmul_nt_seq(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), p * n);
    debug_assert_eq!(out.len(), m * p);
    for (i, row) in out.chunks_mut(p).enumerate() {
        matmul_nt_row(a, b, row, i, n, p);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_nt_par(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), p * n);
    debug_assert_eq!(out.len(), m * p);
    out.par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| matmul_nt_row(a, b, row, i, n, p));
}

#[inline]
fn matmul_nt_row(a: &[f64], b: &[f64], row: &mut [f64], i: usize, n: usize, p: usize) {
    let arow = &a[i * n..(i + 1) * n];
    for (j, r) in row.iter_mut().enumerate() {
        let brow = &b[j * n..(j + 1) * n];
        let mut acc = 0.0;
        for (av, bv) in arow.iter().zip(brow) {
            acc += av * bv;
        }
        *r = acc;
    }
    let _ = p;
}

pub fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    #[cfg(feature = "parallel")]
    matmul_nt_par(a, b, out, m, n, p);
    #[cfg(not(feature = "parallel"))]
    matmul_nt_seq(a, b, out, m, n, p);
}

/// Spatial dims of one conv operand. Kernel sizes must be odd; padding
/// `k/2` keeps the spatial size unchanged (stride 1).
#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    fn in_sample(&self) -> usize {
        self.height * self.width * self.in_channels
    }
    fn out_sample(&self) -> usize {
        self.height * self.width * self.out_channels
    }
}

/// out[b,y,x,co] = bias[co] + sum_{ky,kx,ci} in[b, y+ky-kh/2, x+kx-kw/2, ci] * k[ky,kx,ci,co]
pub fn conv2d_forward_seq(input: &[f64], kernel: &[f64], bias: &[f64], d: ConvDims, out: &mut [f64]) {
    for (b, sample) in out.chunks_mut(d.out_sample()).enumerate() {
        conv2d_forward_sample(&input[b * d.in_sample()..(b + 1) * d.in_sample()], kernel, bias, d, sample);
    }
}

#[cfg(feature = "parallel")]
pub fn conv2d_forward_par(input: &[f64], kernel: &[f64], bias: &[f64], d: ConvDims, out: &mut [f64]) {
    out.par_chunks_mut(d.out_sample())
        .enumerate()
        .for_each(|(b, sample)| {
            conv2d_forward_sample(&input[b * d.in_sample()..(b + 1) * d.in_sample()], kernel, bias, d, sample);
        });
}

fn conv2d_forward_sample(input: &[f64], kernel: &[f64], bias: &[f64], d: ConvDims, out: &mut [f64]) {
    let (h, w, ci, co) = (d.height, d.width, d.in_channels, d.out_channels);
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    for y in 0..h {
        for x in 0..w {
            let cell = &mut out[(y * w + x) * co..(y * w + x + 1) * co];
            cell.copy_from_slice(bias);
            for ky in 0..d.kh {
                let sy = y + ky;
                if sy < ph || sy - ph >= h {
                    continue;
                }
                let iy = sy - ph;
                for kx in 0..d.kw {
                    let sx = x + kx;
                    if sx < pw || sx - pw >= w {
                        continue;
                    }
                    let ix = sx - pw;
                    let in_cell = &input[(iy * w + ix) * ci..(iy * w + ix + 1) * ci];
                    let k_base = (ky * d.kw + kx) * ci * co;
                    for (c, iv) in in_cell.iter().enumerate() {
                        let krow = &kernel[k_base + c * co..k_base + (c + 1) * co];
                        for (o, kv) in cell.iter_mut().zip(krow) {
                            *o += iv * kv;
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(input: &[f64], kernel: &[f64], bias: &[f64], d: ConvDims, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    conv2d_forward_par(input, kernel, bias, d, out);
    #[cfg(not(feature = "parallel"))]
    conv2d_forward_seq(input, kernel, bias, d, out);
}

/// Gradient wrt the conv input: full correlation of d_out with the flipped kernel.
pub fn conv2d_backward_input_seq(d_out: &[f64], kernel: &[f64], d: ConvDims, d_in: &mut [f64]) {
    for (b, sample) in d_in.chunks_mut(d.in_sample()).enumerate() {
        conv2d_backward_input_sample(&d_out[b * d.out_sample()..(b + 1) * d.out_sample()], kernel, d, sample);
    }
}

#[cfg(feature = "parallel")]
pub fn conv2d_backward_input_par(d_out: &[f64], kernel: &[f64], d: ConvDims, d_in: &mut [f64]) {
    d_in.par_chunks_mut(d.in_sample())
        .enumerate()
        .for_each(|(b, sample)| {
            conv2d_backward_input_sample(&d_out[b * d.out_sample()..(b + 1) * d.out_sample()], kernel, d, sample);
        });
}

fn conv2d_backward_input_sample(d_out: &[f64], kernel: &[f64], d: ConvDims, d_in: &mut [f64]) {
    let (h, w, ci, co) = (d.height, d.width, d.in_channels, d.out_channels);
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    d_in.fill(0.0);
    for iy in 0..h {
        for ix in 0..w {
            let cell = &mut d_in[(iy * w + ix) * ci..(iy * w + ix + 1) * ci];
            for ky in 0..d.kh {
                // forward: out y reads input iy = y + ky - ph  =>  y = iy + ph - ky
                let sy = iy + ph;
                if sy < ky || sy - ky >= h {
                    continue;
                }
                let y = sy - ky;
                for kx in 0..d.kw {
                    let sx = ix + pw;
                    if sx < kx || sx - kx >= w {
                        continue;
                    }
                    let x = sx - kx;
                    let g_cell = &d_out[(y * w + x) * co..(y * w + x + 1) * co];
                    let k_base = (ky * d.kw + kx) * ci * co;
                    for (c, dv) in cell.iter_mut().enumerate() {
                        let krow = &kernel[k_base + c * co..k_base + (c + 1) * co];
                        let mut acc = 0.0;
                        for (gv, kv) in g_cell.iter().zip(krow) {
                            acc += gv * kv;
                        }
                        *dv += acc;
                    }
                }
            }
        }
    }
}

pub fn conv2d_backward_input(d_out: &[f64], kernel: &[f64], d: ConvDims, d_in: &mut [f64]) {
    #[cfg(feature = "parallel")]
    conv2d_backward_input_par(d_out, kernel, d, d_in);
    #[cfg(not(feature = "parallel"))]
    conv2d_backward_input_seq(d_out, kernel, d, d_in);
}

/// Gradient wrt the kernel; accumulation over (batch, y, x) ascending for
/// every kernel entry regardless of parallelism.
pub fn conv2d_backward_kernel_seq(input: &[f64], d_out: &[f64], d: ConvDims, d_k: &mut [f64]) {
    let ci_co = d.in_channels * d.out_channels;
    for (tap, block) in d_k.chunks_mut(ci_co).enumerate() {
        conv2d_backward_kernel_tap(input, d_out, d, tap, block);
    }
}

#[cfg(feature = "parallel")]
pub fn conv2d_backward_kernel_par(input: &[f64], d_out: &[f64], d: ConvDims, d_k: &mut [f64]) {
    let ci_co = d.in_channels * d.out_channels;
    d_k.par_chunks_mut(ci_co)
        .enumerate()
        .for_each(|(tap, block)| conv2d_backward_kernel_tap(input, d_out, d, tap, block));
}

fn conv2d_backward_kernel_tap(input: &[f64], d_out: &[f64], d: ConvDims, tap: usize, block: &mut [f64]) {
    let (h, w, ci, co) = (d.height, d.width, d.in_channels, d.out_channels);
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    let (ky, kx) = (tap / d.kw, tap % d.kw);
    block.fill(0.0);
    for b in 0..d.batch {
        let in_s = &input[b * d.in_sample()..(b + 1) * d.in_sample()];
        let out_s = &d_out[b * d.out_sample()..(b + 1) * d.out_sample()];
        for y in 0..h {
            let sy = y + ky;
            if sy < ph || sy - ph >= h {
                continue;
            }
            let iy = sy - ph;
            for x in 0..w {
                let sx = x + kx;
                if sx < pw || sx - pw >= w {
                    continue;
                }
                let ix = sx - pw;
                let in_cell = &in_s[(iy * w + ix) * ci..(iy * w + ix + 1) * ci];
                let g_cell = &out_s[(y * w + x) * co..(y * w + x + 1) * co];
                for (c, iv) in in_cell.iter().enumerate() {
                    let row = &mut block[c * co..(c + 1) * co];
                    for (dv, gv) in row.iter_mut().zip(g_cell) {
                        *dv += iv * gv;
                    }
                }
            }
        }
    }
}

pub fn conv2d_backward_kernel(input: &[f64], d_out: &[f64], d: ConvDims, d_k: &mut [f64]) {
    #[cfg(feature = "parallel")]
    conv2d_backward_kernel_par(input, d_out, d, d_k);
    #[cfg(not(feature = "parallel"))]
    conv2d_backward_kernel_seq(input, d_out, d, d_k);
}

/// Gradient wrt the conv bias: plain sum over (batch, y, x) in row-major order.
pub fn conv2d_backward_bias(d_out: &[f64], d: ConvDims, d_b: &mut [f64]) {
    d_b.fill(0.0);
    for cell in d_out.chunks(d.out_channels) {
        for (acc, v) in d_b.iter_mut().zip(cell) {
            *acc += v;
        }
    }
}
