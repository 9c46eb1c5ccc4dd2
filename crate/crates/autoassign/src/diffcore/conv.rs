//! 2-D cross-correlation forward and backward kernels over flat storage.
//! Input is [C, H, W], kernel is [F, C, k, k], output is [F, H', W'].

use super::data::ArrayData;

pub(crate) fn out_dim(size: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    (size + 2 * padding).checked_sub(k).map(|d| d / stride + 1)
}

pub(crate) fn conv2d_forward(
    input: &ArrayData,
    kernel: &ArrayData,
    stride: usize,
    padding: usize,
) -> ArrayData {
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (f_out, k) = (kernel.shape[0], kernel.shape[2]);
    let oh = out_dim(h, k, stride, padding).unwrap();
    let ow = out_dim(w, k, stride, padding).unwrap();

    let mut out = vec![0.0f64; f_out * oh * ow];
    for f in 0..f_out {
        for c in 0..c_in {
            let kbase = (f * c_in + c) * k * k;
            let ibase = c * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = ibase + iy as usize * w;
                        let krow = kbase + ky * k;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += input.values[irow + ix as usize] * kernel.values[krow + kx];
                        }
                    }
                    out[(f * oh + oy) * ow + ox] += acc;
                }
            }
        }
    }
    ArrayData {
        shape: vec![f_out, oh, ow],
        values: out,
    }
}

pub(crate) fn conv2d_backward_input(
    grad_input: &mut [f64],
    kernel: &ArrayData,
    grad_out: &[f64],
    out_shape: &[usize],
    in_shape: &[usize],
    stride: usize,
    padding: usize,
) {
    let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (f_out, k) = (kernel.shape[0], kernel.shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);

    for f in 0..f_out {
        for c in 0..c_in {
            let kbase = (f * c_in + c) * k * k;
            let ibase = c * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = grad_out[(f * oh + oy) * ow + ox];
                    if go == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = ibase + iy as usize * w;
                        let krow = kbase + ky * k;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            grad_input[irow + ix as usize] += go * kernel.values[krow + kx];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_backward_kernel(
    grad_kernel: &mut [f64],
    input: &ArrayData,
    grad_out: &[f64],
    out_shape: &[usize],
    kernel_shape: &[usize],
    stride: usize,
    padding: usize,
) {
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (f_out, k) = (kernel_shape[0], kernel_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);

    for f in 0..f_out {
        for c in 0..c_in {
            let kbase = (f * c_in + c) * k * k;
            let ibase = c * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = grad_out[(f * oh + oy) * ow + ox];
                    if go == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = ibase + iy as usize * w;
                        let krow = kbase + ky * k;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            grad_kernel[krow + kx] += go * input.values[irow + ix as usize];
                        }
                    }
                }
            }
        }
    }
}
