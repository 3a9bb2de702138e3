//! Raw 1-D convolution kernels on flat `[batch, channel, length]` buffers.
//!
//! Strided signals are first split into `stride` contiguous phases so that
//! every inner loop runs over unit-stride slices. Each output row (or
//! weight row) is computed by one task with a fixed summation order, so
//! results are bit-identical regardless of the rayon pool size.

use rayon::prelude::*;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Rows of length `len` rearranged as `[row][phase][m]` with
/// `phase = j % s`, `m = j / s`, zero-filled up to `len.div_ceil(s)`.
fn split_phases<T: Scalar>(x: &[T], len: usize, s: usize) -> (Vec<T>, usize) {
    let plen = len.div_ceil(s);
    if s == 1 {
        return (x.to_vec(), plen);
    }
    let rows = x.len() / len;
    let mut out = vec![T::zero(); rows * s * plen];
    for (row, src) in x.chunks_exact(len).enumerate() {
        let dst = &mut out[row * s * plen..][..s * plen];
        for (j, &v) in src.iter().enumerate() {
            dst[(j % s) * plen + j / s] = v;
        }
    }
    (out, plen)
}

/// Phase and phase-index shift of tap `k`: `j = l*s + k - p = (l + q)*s + r`.
#[inline]
fn tap_shift(k: usize, p: usize, s: usize) -> (usize, isize) {
    let off = k as isize - p as isize;
    (off.rem_euclid(s as isize) as usize, off.div_euclid(s as isize))
}

/// `l` range for which `0 <= l + q < plen` and `l < n`.
#[inline]
fn shifted_range(q: isize, plen: usize, n: usize) -> Option<(usize, usize)> {
    let lo = (-q).max(0) as usize;
    let hi = (plen as isize - q).min(n as isize);
    (hi > lo as isize).then_some((lo, hi as usize))
}

#[inline]
fn axpy<T: Scalar>(out: &mut [T], a: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

/// Dot product with eight interleaved accumulators, reduced in a fixed order.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] = acc[j] + x[j] * y[j];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ta.iter().zip(tb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Cross-correlation: `y[b,o,l] = sum_{i,k} w[o,i,k] * x[b,i,l*s+k-p]`.
/// Weight layout `[c_out, c_in, kernel]`.
pub(crate) fn conv1d<T: Scalar>(x: &[T], w: &[T], g: ConvGeom) -> Vec<T> {
    let s = g.stride;
    let (ph, plen) = split_phases(x, g.len_in, s);
    let mut y = vec![T::zero(); g.batch * g.c_out * g.len_out];
    y.par_chunks_mut(g.len_out).enumerate().for_each(|(row, out)| {
        let b = row / g.c_out;
        let o = row % g.c_out;
        for i in 0..g.c_in {
            let xr = &ph[(b * g.c_in + i) * s * plen..][..s * plen];
            let wr = &w[(o * g.c_in + i) * g.kernel..][..g.kernel];
            for (k, &wv) in wr.iter().enumerate() {
                let (r, q) = tap_shift(k, g.padding, s);
                if let Some((lo, hi)) = shifted_range(q, plen, g.len_out) {
                    let src = &xr[r * plen..][(lo as isize + q) as usize..];
                    axpy(&mut out[lo..hi], wv, src);
                }
            }
        }
    });
    y
}

/// Transposed convolution: `y[b,o,i*s+k-p] += x[b,c,i] * w[c,o,k]`.
/// Weight layout `[c_in, c_out, kernel]`; `len_out` is taken from `g`.
pub(crate) fn conv_transpose1d<T: Scalar>(x: &[T], w: &[T], g: ConvGeom) -> Vec<T> {
    let s = g.stride;
    let plen = g.len_out.div_ceil(s);
    let mut y = vec![T::zero(); g.batch * g.c_out * g.len_out];
    y.par_chunks_mut(g.len_out).enumerate().for_each(|(row, out)| {
        let b = row / g.c_out;
        let o = row % g.c_out;
        // accumulate per output phase: y[(i+q)*s + r] += w * x[i]
        let mut acc = vec![T::zero(); s * plen];
        for c in 0..g.c_in {
            let xr = &x[(b * g.c_in + c) * g.len_in..][..g.len_in];
            let wr = &w[(c * g.c_out + o) * g.kernel..][..g.kernel];
            for (k, &wv) in wr.iter().enumerate() {
                let (r, q) = tap_shift(k, g.padding, s);
                // i in [0, len_in) with 0 <= i + q < plen
                let lo = (-q).max(0) as usize;
                let hi = (plen as isize - q).min(g.len_in as isize);
                if hi <= lo as isize {
                    continue;
                }
                let dst = &mut acc[r * plen..][(lo as isize + q) as usize..];
                axpy(dst, wv, &xr[lo..hi as usize]);
            }
        }
        for (j, v) in out.iter_mut().enumerate() {
            *v = acc[(j % s) * plen + j / s];
        }
    });
    y
}

/// Gradient of [`conv1d`] with respect to its weight.
pub(crate) fn conv1d_weight_grad<T: Scalar>(x: &[T], dy: &[T], g: ConvGeom) -> Vec<T> {
    let s = g.stride;
    let (ph, plen) = split_phases(x, g.len_in, s);
    let mut dw = vec![T::zero(); g.c_out * g.c_in * g.kernel];
    dw.par_chunks_mut(g.kernel).enumerate().for_each(|(row, out)| {
        let o = row / g.c_in;
        let i = row % g.c_in;
        for (k, acc) in out.iter_mut().enumerate() {
            let (r, q) = tap_shift(k, g.padding, s);
            let mut sum = T::zero();
            if let Some((lo, hi)) = shifted_range(q, plen, g.len_out) {
                for b in 0..g.batch {
                    let xr = &ph[((b * g.c_in + i) * s + r) * plen..][..plen];
                    let dr = &dy[(b * g.c_out + o) * g.len_out..][..g.len_out];
                    sum = sum + dot(&dr[lo..hi], &xr[(lo as isize + q) as usize..][..hi - lo]);
                }
            }
            *acc = sum;
        }
    });
    dw
}

/// Gradient of [`conv_transpose1d`] with respect to its weight.
pub(crate) fn conv_transpose1d_weight_grad<T: Scalar>(x: &[T], dy: &[T], g: ConvGeom) -> Vec<T> {
    let s = g.stride;
    let (ph, plen) = split_phases(dy, g.len_out, s);
    let mut dw = vec![T::zero(); g.c_in * g.c_out * g.kernel];
    dw.par_chunks_mut(g.kernel).enumerate().for_each(|(row, out)| {
        let c = row / g.c_out;
        let o = row % g.c_out;
        for (k, acc) in out.iter_mut().enumerate() {
            let (r, q) = tap_shift(k, g.padding, s);
            let mut sum = T::zero();
            if let Some((lo, hi)) = shifted_range(q, plen, g.len_in) {
                for b in 0..g.batch {
                    let xr = &x[(b * g.c_in + c) * g.len_in..][..g.len_in];
                    let dr = &ph[((b * g.c_out + o) * s + r) * plen..][..plen];
                    sum = sum + dot(&xr[lo..hi], &dr[(lo as isize + q) as usize..][..hi - lo]);
                }
            }
            *acc = sum;
        }
    });
    dw
}

/// Input gradient of [`conv1d`]: a transposed convolution of `dy` with the
/// same weight, producing exactly `len_in` samples.
pub(crate) fn conv1d_input_grad<T: Scalar>(w: &[T], dy: &[T], g: ConvGeom) -> Vec<T> {
    conv_transpose1d(
        dy,
        w,
        ConvGeom {
            batch: g.batch,
            c_in: g.c_out,
            c_out: g.c_in,
            len_in: g.len_out,
            len_out: g.len_in,
            kernel: g.kernel,
            stride: g.stride,
            padding: g.padding,
        },
    )
}

/// Input gradient of [`conv_transpose1d`]: a plain convolution of `dy`.
pub(crate) fn conv_transpose1d_input_grad<T: Scalar>(w: &[T], dy: &[T], g: ConvGeom) -> Vec<T> {
    conv1d(
        dy,
        w,
        ConvGeom {
            batch: g.batch,
            c_in: g.c_out,
            c_out: g.c_in,
            len_in: g.len_out,
            len_out: g.len_in,
            kernel: g.kernel,
            stride: g.stride,
            padding: g.padding,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tap(g: &ConvGeom, l: usize, k: usize) -> Option<usize> {
        let j = (l * g.stride + k) as isize - g.padding as isize;
        (j >= 0 && (j as usize) < g.len_in).then_some(j as usize)
    }

    fn naive_conv(x: &[f64], w: &[f64], g: ConvGeom) -> Vec<f64> {
        let mut y = vec![0.0; g.batch * g.c_out * g.len_out];
        for b in 0..g.batch {
            for o in 0..g.c_out {
                for l in 0..g.len_out {
                    let mut s = 0.0;
                    for i in 0..g.c_in {
                        for k in 0..g.kernel {
                            if let Some(j) = tap(&g, l, k) {
                                s += w[(o * g.c_in + i) * g.kernel + k] * x[(b * g.c_in + i) * g.len_in + j];
                            }
                        }
                    }
                    y[(b * g.c_out + o) * g.len_out + l] = s;
                }
            }
        }
        y
    }

    fn naive_weight_grad(x: &[f64], dy: &[f64], g: ConvGeom) -> Vec<f64> {
        let mut dw = vec![0.0; g.c_out * g.c_in * g.kernel];
        for b in 0..g.batch {
            for o in 0..g.c_out {
                for i in 0..g.c_in {
                    for k in 0..g.kernel {
                        for l in 0..g.len_out {
                            if let Some(j) = tap(&g, l, k) {
                                dw[(o * g.c_in + i) * g.kernel + k] +=
                                    dy[(b * g.c_out + o) * g.len_out + l] * x[(b * g.c_in + i) * g.len_in + j];
                            }
                        }
                    }
                }
            }
        }
        dw
    }

    /// Scatter form of the transposed convolution, straight from its definition.
    fn naive_conv_t(x: &[f64], w: &[f64], g: ConvGeom) -> Vec<f64> {
        let mut y = vec![0.0; g.batch * g.c_out * g.len_out];
        for b in 0..g.batch {
            for c in 0..g.c_in {
                for o in 0..g.c_out {
                    for i in 0..g.len_in {
                        for k in 0..g.kernel {
                            let j = (i * g.stride + k) as isize - g.padding as isize;
                            if j >= 0 && (j as usize) < g.len_out {
                                y[(b * g.c_out + o) * g.len_out + j as usize] +=
                                    x[(b * g.c_in + c) * g.len_in + i] * w[(c * g.c_out + o) * g.kernel + k];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn data(n: usize, m: usize) -> Vec<f64> {
        (0..n).map(|v| ((v * m % 13) as f64) * 0.25 - 1.5).collect()
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    fn geoms() -> Vec<ConvGeom> {
        let mut v = Vec::new();
        for (len_in, kernel, stride, padding) in [(11usize, 5usize, 2usize, 2usize), (17, 25, 4, 12), (9, 3, 1, 1), (30, 25, 2, 12), (5, 7, 3, 0)] {
            let len_out = (len_in + 2 * padding).saturating_sub(kernel) / stride + 1;
            v.push(ConvGeom {
                batch: 2,
                c_in: 3,
                c_out: 2,
                len_in,
                len_out,
                kernel,
                stride,
                padding,
            });
        }
        v
    }

    #[test]
    fn conv_matches_naive() {
        for g in geoms() {
            let x = data(g.batch * g.c_in * g.len_in, 7);
            let w = data(g.c_out * g.c_in * g.kernel, 5);
            close(&conv1d(&x, &w, g), &naive_conv(&x, &w, g));
            let dy = data(g.batch * g.c_out * g.len_out, 3);
            close(&conv1d_weight_grad(&x, &dy, g), &naive_weight_grad(&x, &dy, g));
        }
    }

    #[test]
    fn conv_transpose_matches_naive() {
        for g in geoms() {
            // transposed geometry: c_in -> c_out maps len_out -> len_in
            let t = ConvGeom {
                c_in: g.c_out,
                c_out: g.c_in,
                len_in: g.len_out,
                len_out: g.len_in,
                ..g
            };
            let x = data(t.batch * t.c_in * t.len_in, 11);
            let w = data(t.c_in * t.c_out * t.kernel, 5);
            close(&conv_transpose1d(&x, &w, t), &naive_conv_t(&x, &w, t));
            let dy = data(t.batch * t.c_out * t.len_out, 3);
            // weight gradient of the transposed conv is the plain conv weight
            // gradient with input and output roles swapped
            let expect = naive_weight_grad(&dy, &x, g);
            close(&conv_transpose1d_weight_grad(&x, &dy, t), &expect);
        }
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..19).map(|v| v as f64).collect();
        let b = vec![1.0; 19];
        assert_eq!(dot(&a, &b), 171.0);
        assert_eq!(dot::<f64>(&[], &[]), 0.0);
    }
}
