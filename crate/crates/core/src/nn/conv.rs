//! 2-D cross-correlation via im2col + GEMM.

use rand::Rng;

use super::init::kaiming_uniform;
use super::{Layer, Mode, Parameter};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output length along one spatial axis, or `None` when the kernel does not fit.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new(
        input: &[usize],
        weight: &[usize],
        bias: Option<&[usize]>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [n, c, h, w] = *input else {
            return Err(Error::shape(
                "conv2d",
                format!("input must be [N,C,H,W], got {input:?}"),
            ));
        };
        let [o, wc, kh, kw] = *weight else {
            return Err(Error::shape(
                "conv2d",
                format!("weight must be [O,C,kh,kw], got {weight:?}"),
            ));
        };
        if wc != c {
            return Err(Error::shape(
                "conv2d",
                format!("channel axis: input has C={c}, weight expects C={wc}"),
            ));
        }
        if let Some(b) = bias {
            if b != [o] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias axis: expected [{o}], got {b:?}"),
                ));
            }
        }
        let ho = conv_out_dim(h, kh, stride, padding).ok_or_else(|| {
            Error::shape(
                "conv2d",
                format!("H axis: H={h}, kh={kh}, stride={stride}, padding={padding} gives no output"),
            )
        })?;
        let wo = conv_out_dim(w, kw, stride, padding).ok_or_else(|| {
            Error::shape(
                "conv2d",
                format!("W axis: W={w}, kw={kw}, stride={stride}, padding={padding} gives no output"),
            )
        })?;
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            ho,
            wo,
            stride,
            padding,
        })
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn out_shape(&self) -> [usize; 4] {
        [self.n, self.o, self.ho, self.wo]
    }

    /// Input coordinate for output position `o` and kernel offset `k` along one axis.
    #[inline]
    fn src(&self, out: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// `[K, N*P]` column matrix, `K = C*kh*kw`, column `n*P + p`.
fn im2col<T: Scalar>(g: &Geometry, input: &[T]) -> Vec<T> {
    let (k_len, p_len) = (g.k(), g.p());
    let np = g.n * p_len;
    let mut cols = vec![T::zero(); k_len * np];
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let plane = &input[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.ho {
                        let Some(iy) = g.src(oy, i, g.h) else { continue };
                        let base = n * p_len + oy * g.wo;
                        for ox in 0..g.wo {
                            if let Some(ix) = g.src(ox, j, g.w) {
                                dst[base + ox] = plane[iy * g.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(g: &Geometry, cols: &[T]) -> Vec<T> {
    let (p_len, np) = (g.p(), g.n * g.p());
    let mut out = vec![T::zero(); g.n * g.c * g.h * g.w];
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let plane = &mut out[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.ho {
                        let Some(iy) = g.src(oy, i, g.h) else { continue };
                        let base = n * p_len + oy * g.wo;
                        for ox in 0..g.wo {
                            if let Some(ix) = g.src(ox, j, g.w) {
                                plane[iy * g.w + ix] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn forward_cols<T: Scalar>(g: &Geometry, cols: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let (k_len, p_len, np) = (g.k(), g.p(), g.n * g.p());
    let mut mat = vec![T::zero(); g.o * np];
    T::gemm(
        g.o,
        k_len,
        np,
        T::one(),
        weight,
        (k_len as isize, 1),
        cols,
        (np as isize, 1),
        T::zero(),
        &mut mat,
        (np as isize, 1),
    );
    let mut out = vec![T::zero(); g.n * g.o * p_len];
    for o in 0..g.o {
        let b = bias[o];
        for n in 0..g.n {
            let src = &mat[o * np + n * p_len..][..p_len];
            let dst = &mut out[(n * g.o + o) * p_len..][..p_len];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    out
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar> {
    pub grad_input: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

/// Returns `(grad_input, grad_weight, grad_bias)` given the cached column matrix.
fn backward_cols<T: Scalar>(
    g: &Geometry,
    cols: &[T],
    weight: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (k_len, p_len, np) = (g.k(), g.p(), g.n * g.p());
    // Regroup grad_out [N,O,P] into [O, N*P].
    let mut gmat = vec![T::zero(); g.o * np];
    let mut grad_bias = vec![T::zero(); g.o];
    for o in 0..g.o {
        for n in 0..g.n {
            let src = &grad_out[(n * g.o + o) * p_len..][..p_len];
            gmat[o * np + n * p_len..][..p_len].copy_from_slice(src);
            grad_bias[o] += src.iter().copied().sum::<T>();
        }
    }
    let mut grad_weight = vec![T::zero(); g.o * k_len];
    T::gemm(
        g.o,
        np,
        k_len,
        T::one(),
        &gmat,
        (np as isize, 1),
        cols,
        (1, np as isize),
        T::zero(),
        &mut grad_weight,
        (k_len as isize, 1),
    );
    let mut grad_cols = vec![T::zero(); k_len * np];
    T::gemm(
        k_len,
        g.o,
        np,
        T::one(),
        weight,
        (1, k_len as isize),
        &gmat,
        (np as isize, 1),
        T::zero(),
        &mut grad_cols,
        (np as isize, 1),
    );
    (col2im(g, &grad_cols), grad_weight, grad_bias)
}

/// Cross-correlation of `input [N,C,H,W]` with `weight [O,C,kh,kw]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(
        input.shape(),
        weight.shape(),
        Some(bias.shape()),
        stride,
        padding,
    )?;
    let cols = im2col(&g, input.data());
    Tensor::new(
        g.out_shape().to_vec(),
        forward_cols(&g, &cols, weight.data(), bias.data()),
    )
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(input.shape(), weight.shape(), None, stride, padding)?;
    grad_out.expect_shape("conv2d_backward", &g.out_shape())?;
    let cols = im2col(&g, input.data());
    let (gi, gw, gb) = backward_cols(&g, &cols, weight.data(), grad_out.data());
    Ok(ConvGrads {
        grad_input: Tensor::new(input.shape().to_vec(), gi)?,
        grad_weight: Tensor::new(weight.shape().to_vec(), gw)?,
        grad_bias: Tensor::new(vec![g.o], gb)?,
    })
}

/// Convolution layer holding its own parameters and forward cache.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Scalar = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Geometry, Vec<T>)>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = kaiming_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, rng);
        Self::from_parts(
            Parameter::new(format!("{name}.weight"), weight),
            Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            stride,
            padding,
        )
    }

    pub fn from_parts(
        weight: Parameter<T>,
        bias: Parameter<T>,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            weight,
            bias,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        Conv2d::from_parts(self.weight.cast(), self.bias.cast(), self.stride, self.padding)
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let g = Geometry::new(
            input.shape(),
            self.weight.value.shape(),
            Some(self.bias.value.shape()),
            self.stride,
            self.padding,
        )?;
        let cols = im2col(&g, input.data());
        let out = forward_cols(&g, &cols, self.weight.value.data(), self.bias.value.data());
        self.cache = Some((g, cols));
        Tensor::new(g.out_shape().to_vec(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (g, cols) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward called before forward".into()))?;
        grad_out.expect_shape("conv2d_backward", &g.out_shape())?;
        let (gi, gw, gb) = backward_cols(g, cols, self.weight.value.data(), grad_out.data());
        for (a, b) in self.weight.grad.data_mut().iter_mut().zip(gw) {
            *a += b;
        }
        for (a, b) in self.bias.grad.data_mut().iter_mut().zip(gb) {
            *a += b;
        }
        Tensor::new(vec![g.n, g.c, g.h, g.w], gi)
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop cross-correlation.
    fn naive_conv(
        input: &Tensor<f64>,
        weight: &Tensor<f64>,
        bias: &Tensor<f64>,
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let [n, c, h, w] = input.shape().try_into().unwrap();
        let [o, _, kh, kw] = weight.shape().try_into().unwrap();
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let x = input.data();
        let wt = weight.data();
        let mut out = vec![0.0; n * o * ho * wo];
        for b in 0..n {
            for oc in 0..o {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bias.data()[oc];
                        for ic in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy = (oy * stride + i) as isize - pad as isize;
                                    let ix = (ox * stride + j) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += x[((b * c + ic) * h + iy as usize) * w + ix as usize]
                                        * wt[((oc * c + ic) * kh + i) * kw + j];
                                }
                            }
                        }
                        out[((b * o + oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn ones_kernel_sums_window() {
        let x = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::<f32>::zeros(&[1]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::randn(&[2, 1, 4, 5], 1.0, &mut rng);
        let w = Tensor::<f32>::full(&[1, 1, 1, 1], 1.0);
        let b = Tensor::<f32>::zeros(&[1]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5u64 {
            let _ = seed;
            let x = Tensor::<f64>::randn(&[2, 2, 5, 5], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[3, 2, 3, 3], 1.0, &mut rng);
            let b = Tensor::<f64>::randn(&[3], 1.0, &mut rng);
            let y = conv2d_forward(&x, &w, &b, 2, 1).unwrap();
            assert_eq!(y.shape(), &[2, 3, 3, 3]);
            let oracle = naive_conv(&x, &w, &b, 2, 1);
            for (a, b) in y.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::randn(&[1, 2, 4, 4], 1.0, &mut rng);
        let w = Tensor::<f64>::randn(&[2, 2, 3, 3], 1.0, &mut rng);
        let g = conv2d_backward(&Tensor::zeros(&[1, 2, 4, 4]), &x, &w, 1, 1).unwrap();
        assert!(g.grad_input.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_weight.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_product_rule() {
        let x = Tensor::<f64>::new(vec![1, 1, 1, 1], vec![1.5]).unwrap();
        let w = Tensor::<f64>::new(vec![1, 1, 1, 1], vec![-2.0]).unwrap();
        let g = Tensor::<f64>::new(vec![1, 1, 1, 1], vec![0.5]).unwrap();
        let grads = conv2d_backward(&g, &x, &w, 1, 0).unwrap();
        assert_eq!(grads.grad_input.data(), &[-1.0]);
        assert_eq!(grads.grad_weight.data(), &[0.75]);
        assert_eq!(grads.grad_bias.data(), &[0.5]);
    }

    #[test]
    fn shape_errors_name_axis() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
        let w = Tensor::<f32>::zeros(&[2, 2, 3, 3]);
        let b = Tensor::<f32>::zeros(&[2]);
        let err = conv2d_forward(&x, &w, &b, 1, 0).unwrap_err().to_string();
        assert!(err.contains("channel"), "{err}");
        let x = Tensor::<f32>::zeros(&[1, 2, 2, 8]);
        let err = conv2d_forward(&x, &w, &b, 1, 0).unwrap_err().to_string();
        assert!(err.contains("H axis"), "{err}");
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::<f32>::new("c", 1, 1, 3, 1, 1, &mut rng);
        let err = conv.backward(&Tensor::zeros(&[1, 1, 3, 3])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }
}
