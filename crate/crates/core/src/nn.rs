//! Minimal CPU kernels for small convolutional networks: same-padding
//! convolution via im2col + GEMM, ReLU, 2x2 average pooling and dense
//! layers, each with an explicit backward pass.
//!
//! Tensors are single-sample, channel-major (`C x H x W`) slices.

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + std::ops::AddAssign + 'static {
    /// `c = a * b + beta * c` on row-major matrices; `a` is `m x k`
    /// (stored `k x m` when `a_t`), `b` is `k x n` (stored `n x k` when `b_t`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, beta: Self, c: &mut [Self]);

    fn from_f64(v: f64) -> Self;
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $f:ident) => {
        impl Real for $t {
            fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand sizes");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(m, k, a_t);
                let (rsb, csb) = strides(k, n, b_t);
                // SAFETY: the asserts above bound every index the strided
                // access touches: a is m*k, b is k*n, c is m*n, row-major.
                unsafe {
                    matrixmultiply::$f(
                        m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }

            fn from_f64(v: f64) -> Self {
                v as $t
            }
        }
    };
}

impl_real!(f32, sgemm);
impl_real!(f64, dgemm);

/// He-normal initialization, `std = sqrt(2 / fan_in)`.
pub fn he_normal<T: Real, R: Rng>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
        .collect()
}

/// Square-kernel convolution, stride 1, zero "same" padding.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    /// `cout x (cin * k * k)`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new_he<R: Rng>(rng: &mut R, cin: usize, cout: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernel sizes only");
        let fan_in = cin * kernel * kernel;
        Self {
            cin,
            cout,
            kernel,
            weight: he_normal(rng, cout * fan_in, fan_in),
            bias: vec![T::zero(); cout],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    /// Unrolls `x` (`cin x h x w`) into `(cin k k) x (h w)` columns.
    pub fn im2col(&self, x: &[T], h: usize, w: usize, col: &mut Vec<T>) {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let hw = h * w;
        col.clear();
        col.resize(self.col_rows() * hw, T::zero());
        for c in 0..self.cin {
            let plane = &x[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * hw..(row + 1) * hw];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                        let out_row = &mut dst[y * w..(y + 1) * w];
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                        for xo in x_lo..x_hi {
                            out_row[xo] = src_row[(xo as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, col: &[T], h: usize, w: usize, dx: &mut [T]) {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let hw = h * w;
        for c in 0..self.cin {
            let plane = &mut dx[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * hw..(row + 1) * hw];
                    let ddy = ky as isize - pad;
                    let ddx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + ddy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        let in_row = &src[y * w..(y + 1) * w];
                        let x_lo = (-ddx).max(0) as usize;
                        let x_hi = (w as isize - ddx).min(w as isize).max(0) as usize;
                        for xo in x_lo..x_hi {
                            dst_row[(xo as isize + ddx) as usize] += in_row[xo];
                        }
                    }
                }
            }
        }
    }

    /// Returns the output (`cout x h x w`); `col` keeps the unrolled input
    /// for the backward pass.
    pub fn forward(&self, x: &[T], h: usize, w: usize, col: &mut Vec<T>) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cin * h * w);
        self.im2col(x, h, w, col);
        let hw = h * w;
        let mut y = vec![T::zero(); self.cout * hw];
        for (o, row) in y.chunks_exact_mut(hw).enumerate() {
            row.fill(self.bias[o]);
        }
        T::gemm(self.cout, self.col_rows(), hw, &self.weight, false, col, false, T::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients (when given) and returns the input
    /// gradient when `need_dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        dy: &[T],
        col: &[T],
        h: usize,
        w: usize,
        grads: Option<(&mut [T], &mut [T])>,
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let hw = h * w;
        let rows = self.col_rows();
        if let Some((dw, db)) = grads {
            T::gemm(self.cout, hw, rows, dy, false, col, true, T::one(), dw);
            for (o, row) in dy.chunks_exact(hw).enumerate() {
                let mut s = T::zero();
                for &v in row {
                    s += v;
                }
                db[o] += s;
            }
        }
        if !need_dx {
            return None;
        }
        let mut dcol = vec![T::zero(); rows * hw];
        T::gemm(rows, self.cout, hw, &self.weight, true, dy, false, T::zero(), &mut dcol);
        let mut dx = vec![T::zero(); self.cin * hw];
        self.col2im_add(&dcol, h, w, &mut dx);
        Some(dx)
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` by `output > 0` of a ReLU.
pub fn relu_backward_inplace<T: Real>(output: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 average pooling, stride 2; odd trailing rows/columns are dropped.
pub fn avg_pool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, usize, usize) {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); c * ho * wo];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for y in 0..ho {
            let r0 = &src[2 * y * w..2 * y * w + w];
            let r1 = &src[(2 * y + 1) * w..(2 * y + 1) * w + w];
            for xo in 0..wo {
                dst[y * wo + xo] = (r0[2 * xo] + r0[2 * xo + 1] + r1[2 * xo] + r1[2 * xo + 1]) * quarter;
            }
        }
    }
    (out, ho, wo)
}

pub fn avg_pool2_backward<T: Real>(dy: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let src = &dy[ch * ho * wo..(ch + 1) * ho * wo];
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for y in 0..ho {
            for xo in 0..wo {
                let g = src[y * wo + xo] * quarter;
                dst[2 * y * w + 2 * xo] = g;
                dst[2 * y * w + 2 * xo + 1] = g;
                dst[(2 * y + 1) * w + 2 * xo] = g;
                dst[(2 * y + 1) * w + 2 * xo + 1] = g;
            }
        }
    }
    dx
}

/// Eight-lane dot product; the fixed lane order keeps results reproducible.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = acc.iter().fold(T::zero(), |s, &v| s + v);
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`.
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn new_he<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weight: he_normal(rng, fan_in * fan_out, fan_in),
            bias: vec![T::zero(); fan_out],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.weight.chunks_exact(self.fan_in).zip(&self.bias).map(|(row, &b)| b + dot(row, x)).collect()
    }

    pub fn backward(&self, dy: &[T], x: &[T], dw: &mut [T], db: &mut [T], need_dx: bool) -> Option<Vec<T>> {
        for (row, &g) in dw.chunks_exact_mut(self.fan_in).zip(dy) {
            axpy(g, x, row);
        }
        for (b, &g) in db.iter_mut().zip(dy) {
            *b += g;
        }
        need_dx.then(|| {
            let mut dx = vec![T::zero(); self.fan_in];
            for (row, &g) in self.weight.chunks_exact(self.fan_in).zip(dy) {
                axpy(g, row, &mut dx);
            }
            dx
        })
    }
}
