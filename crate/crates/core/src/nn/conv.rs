//! 2-D convolution with none/zero/reflective padding.

use super::layer::Padding;
use super::tensor::Tensor;

/// Geometry of one convolution application.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_y: usize,
    pub pad_x: usize,
    pub padding: Padding,
}

impl ConvGeom {
    pub fn padded_h(&self) -> usize {
        self.h + 2 * self.pad_y
    }

    pub fn padded_w(&self) -> usize {
        self.w + 2 * self.pad_x
    }

    pub fn out_h(&self) -> usize {
        (self.padded_h() - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.padded_w() - self.kw) / self.stride + 1
    }
}

/// Source index for padded coordinate `p`, or `None` for a zero sample.
#[inline]
fn source_index(p: usize, pad: usize, n: usize, padding: Padding) -> Option<usize> {
    let i = p as isize - pad as isize;
    let n = n as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match padding {
        Padding::Reflective => {
            if n == 1 {
                return Some(0);
            }
            // Mirror without repeating the edge sample; fold until inside.
            let period = 2 * (n - 1);
            let mut r = i.rem_euclid(period);
            if r >= n {
                r = period - r;
            }
            Some(r as usize)
        }
        Padding::Zero | Padding::None => None,
    }
}

fn pad(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ph, pw) = (g.padded_h(), g.padded_w());
    if g.pad_x == 0 && g.pad_y == 0 {
        return input.to_vec();
    }
    let mut out = vec![0.0; g.n * g.in_ch * ph * pw];
    let cols: Vec<Option<usize>> = (0..pw).map(|x| source_index(x, g.pad_x, g.w, g.padding)).collect();
    for plane in 0..g.n * g.in_ch {
        let src = &input[plane * g.h * g.w..(plane + 1) * g.h * g.w];
        let dst = &mut out[plane * ph * pw..(plane + 1) * ph * pw];
        for y in 0..ph {
            if let Some(sy) = source_index(y, g.pad_y, g.h, g.padding) {
                for (x, c) in cols.iter().enumerate() {
                    if let Some(sx) = c {
                        dst[y * pw + x] = src[sy * g.w + sx];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: folds padded gradients back onto the source grid.
fn unpad(grad_padded: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ph, pw) = (g.padded_h(), g.padded_w());
    if g.pad_x == 0 && g.pad_y == 0 {
        return grad_padded.to_vec();
    }
    let mut out = vec![0.0; g.n * g.in_ch * g.h * g.w];
    let cols: Vec<Option<usize>> = (0..pw).map(|x| source_index(x, g.pad_x, g.w, g.padding)).collect();
    for plane in 0..g.n * g.in_ch {
        let src = &grad_padded[plane * ph * pw..(plane + 1) * ph * pw];
        let dst = &mut out[plane * g.h * g.w..(plane + 1) * g.h * g.w];
        for y in 0..ph {
            if let Some(sy) = source_index(y, g.pad_y, g.h, g.padding) {
                for (x, c) in cols.iter().enumerate() {
                    if let Some(sx) = c {
                        dst[sy * g.w + sx] += src[y * pw + x];
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn forward(input: &Tensor, weight: &Tensor, bias: &Tensor, g: &ConvGeom) -> Tensor {
    let padded = pad(input.data(), g);
    let (ph, pw) = (g.padded_h(), g.padded_w());
    let (oh, ow) = (g.out_h(), g.out_w());
    let w = weight.data();
    let mut out = vec![0.0; g.n * g.out_ch * oh * ow];
    for n in 0..g.n {
        for oc in 0..g.out_ch {
            let plane = &mut out[(n * g.out_ch + oc) * oh * ow..(n * g.out_ch + oc + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = bias.data()[oc]);
            for ic in 0..g.in_ch {
                let src = &padded[(n * g.in_ch + ic) * ph * pw..(n * g.in_ch + ic + 1) * ph * pw];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let wv = w[((oc * g.in_ch + ic) * g.kh + ky) * g.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let row = &src[(oy * g.stride + ky) * pw..];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            if g.stride == 1 {
                                for (d, s) in dst.iter_mut().zip(&row[kx..kx + ow]) {
                                    *d += wv * s;
                                }
                            } else {
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    *d += wv * row[ox * g.stride + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.out_ch, oh, ow], out).expect("conv output shape")
}

/// Returns `(grad_input, grad_weight, grad_bias)`; parameter gradients are
/// skipped when `params` is false.
pub(crate) fn backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    g: &ConvGeom,
    params: bool,
) -> (Tensor, Option<(Tensor, Tensor)>) {
    let padded = pad(input.data(), g);
    let (ph, pw) = (g.padded_h(), g.padded_w());
    let (oh, ow) = (g.out_h(), g.out_w());
    let w = weight.data();
    let go = grad_out.data();
    let mut grad_padded = vec![0.0; padded.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; g.out_ch];
    for n in 0..g.n {
        for oc in 0..g.out_ch {
            let gplane = &go[(n * g.out_ch + oc) * oh * ow..(n * g.out_ch + oc + 1) * oh * ow];
            if params {
                gb[oc] += gplane.iter().sum::<f64>();
            }
            for ic in 0..g.in_ch {
                let base = (n * g.in_ch + ic) * ph * pw;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let widx = ((oc * g.in_ch + ic) * g.kh + ky) * g.kw + kx;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let off = base + (oy * g.stride + ky) * pw;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            if g.stride == 1 {
                                let src = &padded[off + kx..off + kx + ow];
                                if params {
                                    acc += grow.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                                }
                                let dst = &mut grad_padded[off + kx..off + kx + ow];
                                for (d, gv) in dst.iter_mut().zip(grow) {
                                    *d += wv * gv;
                                }
                            } else {
                                for (ox, gv) in grow.iter().enumerate() {
                                    let idx = off + ox * g.stride + kx;
                                    if params {
                                        acc += gv * padded[idx];
                                    }
                                    grad_padded[idx] += wv * gv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    let grad_in = Tensor::new(input.shape().to_vec(), unpad(&grad_padded, g)).expect("grad input shape");
    let grads = params.then(|| {
        (Tensor::new(weight.shape().to_vec(), gw).expect("grad weight shape"), Tensor::new(vec![g.out_ch], gb).expect("grad bias shape"))
    });
    (grad_in, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflective_indices_mirror_without_edge_repeat() {
        let idx: Vec<usize> = (0..9).map(|p| source_index(p, 3, 4, Padding::Reflective).unwrap()).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1]);
        assert_eq!(source_index(0, 1, 3, Padding::Zero), None);
        assert_eq!(source_index(5, 4, 1, Padding::Reflective), Some(0));
    }

    #[test]
    fn pad_and_unpad_are_adjoint() {
        let g =
            ConvGeom { n: 1, in_ch: 2, out_ch: 1, h: 3, w: 4, kh: 5, kw: 5, stride: 1, pad_y: 2, pad_x: 2, padding: Padding::Reflective };
        let x: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..2 * 7 * 8).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = pad(&x, &g).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(unpad(&y, &g)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
