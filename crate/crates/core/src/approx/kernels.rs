//! Dense linear algebra behind the linear and convolution nodes.
//!
//! Convolutions are lowered to one matrix product over the whole batch: the input is
//! unrolled into a `[cin·k·k, B·ho·wo]` column matrix so small spatial sizes still
//! give the GEMM long rows.

use super::tape::ConvGeom;

/// `C = A·B + beta·C` on row-major storage with explicit strides for `A` and `B`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (usize, usize), b: &[f64], b_strides: (usize, usize), beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, a_strides) < a.len());
        assert!(last(k, n, b_strides) < b.len());
    }
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y[B, out] = x[B, in] · wᵀ + b`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64], batch: usize, fin: usize, fout: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * fout];
    for row in out.chunks_mut(fout) {
        row.copy_from_slice(b);
    }
    gemm(batch, fin, fout, x, (fin, 1), w, (1, fin), 1.0, &mut out);
    out
}

/// Gradient with respect to the input: `g · w`.
pub fn linear_grad_input(g: &[f64], w: &[f64], batch: usize, fin: usize, fout: usize) -> Vec<f64> {
    let mut gx = vec![0.0; batch * fin];
    gemm(batch, fout, fin, g, (fout, 1), w, (fin, 1), 0.0, &mut gx);
    gx
}

/// Gradient with respect to the weight: `gᵀ · x`.
pub fn linear_grad_weight(g: &[f64], x: &[f64], batch: usize, fin: usize, fout: usize) -> Vec<f64> {
    let mut gw = vec![0.0; fout * fin];
    gemm(fout, batch, fin, g, (1, fout), x, (fin, 1), 0.0, &mut gw);
    gw
}

fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    // f(row of column matrix, sample, output pixel, channel, input pixel)
    let k = g.kernel;
    let hw_in = g.h * g.w;
    let hw_out = g.ho * g.wo;
    for ci in 0..g.cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix as usize >= g.w {
                            continue;
                        }
                        let pin = iy as usize * g.w + ix as usize;
                        for n in 0..g.batch {
                            f(row, n, oy * g.wo + ox, ci, n * g.cin * hw_in + ci * hw_in + pin);
                        }
                    }
                }
            }
        }
    }
    let _ = hw_out;
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let hw_out = g.ho * g.wo;
    let ncols = g.batch * hw_out;
    let mut cols = vec![0.0; g.cin * g.kernel * g.kernel * ncols];
    for_each_tap(g, |row, n, pout, _, src| cols[row * ncols + n * hw_out + pout] = x[src]);
    cols
}

/// Output `[B, cout, ho, wo]`.
pub fn conv_forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let kk = g.cin * g.kernel * g.kernel;
    let hw_out = g.ho * g.wo;
    let ncols = g.batch * hw_out;
    let cols = im2col(x, g);
    let mut tmp = vec![0.0; g.cout * ncols];
    gemm(g.cout, kk, ncols, w, (kk, 1), &cols, (ncols, 1), 0.0, &mut tmp);
    let mut out = vec![0.0; g.batch * g.cout * hw_out];
    for co in 0..g.cout {
        for n in 0..g.batch {
            let src = &tmp[co * ncols + n * hw_out..co * ncols + (n + 1) * hw_out];
            let dst = &mut out[(n * g.cout + co) * hw_out..(n * g.cout + co + 1) * hw_out];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = s + b[co]);
        }
    }
    out
}

/// Gradients for the input and the weight; each is computed only when requested.
pub fn conv_backward(
    gout: &[f64],
    x: &[f64],
    w: &[f64],
    g: &ConvGeom,
    want_x: bool,
    want_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let kk = g.cin * g.kernel * g.kernel;
    let hw_out = g.ho * g.wo;
    let ncols = g.batch * hw_out;
    // Regroup the output gradient as [cout, B·ho·wo].
    let mut gt = vec![0.0; g.cout * ncols];
    for n in 0..g.batch {
        for co in 0..g.cout {
            let src = &gout[(n * g.cout + co) * hw_out..(n * g.cout + co + 1) * hw_out];
            gt[co * ncols + n * hw_out..co * ncols + (n + 1) * hw_out].copy_from_slice(src);
        }
    }
    let gw = want_w.then(|| {
        let cols = im2col(x, g);
        let mut gw = vec![0.0; g.cout * kk];
        gemm(g.cout, ncols, kk, &gt, (ncols, 1), &cols, (1, ncols), 0.0, &mut gw);
        gw
    });
    let gx = want_x.then(|| {
        let mut gcols = vec![0.0; kk * ncols];
        gemm(kk, g.cout, ncols, w, (1, kk), &gt, (ncols, 1), 0.0, &mut gcols);
        let mut gx = vec![0.0; x.len()];
        for_each_tap(g, |row, n, pout, _, dst| gx[dst] += gcols[row * ncols + n * hw_out + pout]);
        gx
    });
    (gx, gw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop convolution, the reference for the lowered version.
    fn naive_conv(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
        let k = g.kernel;
        let mut out = vec![0.0; g.batch * g.cout * g.ho * g.wo];
        for n in 0..g.batch {
            for co in 0..g.cout {
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        let mut s = b[co];
                        for ci in 0..g.cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= g.h || ix as usize >= g.w {
                                        continue;
                                    }
                                    s += w[((co * g.cin + ci) * k + ky) * k + kx]
                                        * x[((n * g.cin + ci) * g.h + iy as usize) * g.w + ix as usize];
                                }
                            }
                        }
                        out[((n * g.cout + co) * g.ho + oy) * g.wo + ox] = s;
                    }
                }
            }
        }
        out
    }

    fn geom(batch: usize, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, h: usize, w: usize) -> ConvGeom {
        ConvGeom {
            batch,
            cin,
            cout,
            kernel: k,
            stride,
            pad,
            h,
            w,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        }
    }

    #[test]
    fn lowered_conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for g in [geom(3, 2, 4, 3, 1, 1, 7, 5), geom(2, 3, 2, 4, 4, 0, 16, 16), geom(1, 1, 1, 3, 2, 1, 6, 6), geom(2, 2, 3, 2, 3, 2, 5, 7)] {
            let x: Vec<f64> = (0..g.batch * g.cin * g.h * g.w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..g.cout * g.cin * g.kernel * g.kernel).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..g.cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = conv_forward(&x, &w, &b, &g);
            let slow = naive_conv(&x, &w, &b, &g);
            for (a, s) in fast.iter().zip(&slow) {
                assert!((a - s).abs() < 1e-12, "{g:?}");
            }
        }
    }

    #[test]
    fn linear_matches_dot_products() {
        let x = [1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        let w = [0.1, 0.2, 0.3, -0.4, 0.5, 0.6];
        let y = linear_forward(&x, &w, &[1.0, -1.0], 2, 3, 2);
        assert!((y[0] - (1.0 + 0.1 + 0.4 + 0.9)).abs() < 1e-15);
        assert!((y[3] - (-1.0 + 0.4 + 0.25)).abs() < 1e-15);
    }
}
