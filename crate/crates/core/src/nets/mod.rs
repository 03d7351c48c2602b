//! Small dense neural-network stack with reverse-mode gradients.
//!
//! Everything is generic over [`Float`]: training runs in `f32`, gradient
//! checks run the same code in `f64`. Networks ([`Mlp`], [`GaussianPolicy`],
//! [`CeNet`]) only hold parameter handles; values and gradients live in a
//! [`ParamStore`]. Rollout inference and [`Graph`] evaluation call the same
//! kernels, so a freshly collected batch re-evaluates bit-identically.

mod adam;
mod cenet;
mod graph;
mod mlp;
mod params;
mod policy;

pub use adam::{Adam, AdamConfig};
pub use cenet::{CeNet, CeNetLoss, CeNetNodes, CeNetOutput, CeNetSpec, LatentMode};
pub use graph::{Graph, NodeId};
pub use mlp::{Mlp, MlpSpec};
pub use params::{Param, ParamId, ParamStore};
pub use policy::{GaussianPolicy, PolicySpec, LOG_STD_MAX, LOG_STD_MIN};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetError {
    ShapeMismatch { op: &'static str, expected: (usize, usize), found: (usize, usize) },
    /// `backward` was called a second time on the same forward pass.
    GraphConsumed,
    /// The loss node is not a 1×1 scalar.
    NonScalarLoss,
    UnknownParam(alloc::string::String),
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::ShapeMismatch { op, expected, found } => {
                write!(f, "{op}: expected shape {expected:?}, found {found:?}")
            }
            NetError::GraphConsumed => f.write_str("backward called twice on one forward pass"),
            NetError::NonScalarLoss => f.write_str("loss must be a 1x1 tensor"),
            NetError::UnknownParam(name) => write!(f, "unknown parameter {name:?}"),
        }
    }
}

impl core::error::Error for NetError {}

/// Scalar type of the network stack.
pub trait Float:
    num_traits::Float + num_traits::FromPrimitive + Default + fmt::Debug + Send + Sync + 'static
{
    /// `c = alpha · a · b + beta · c` with arbitrary strides.
    ///
    /// # Safety
    /// Same contract as [`matrixmultiply::sgemm`].
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Float for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Float for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix; a batch of row vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: F) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self, NetError> {
        if data.len() != rows * cols {
            return Err(NetError::ShapeMismatch { op: "tensor", expected: (rows, cols), found: (data.len(), 1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| f(*x)).collect() }
    }

    pub fn cast<G: Float>(&self) -> Tensor<G> {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| G::lit(x.as_f64())).collect() }
    }

    /// The scalar of a 1×1 tensor.
    pub fn scalar(&self) -> F {
        self.data[0]
    }
}

pub(crate) mod kernels {
    //! Numeric kernels shared by graph evaluation and direct inference.
    use super::{Float, Tensor};

    /// `y = x Wᵀ + b` with `W` stored out×in.
    pub fn affine<F: Float>(x: &Tensor<F>, w: &[F], b: &[F], out: usize) -> Tensor<F> {
        let (n, k) = x.shape();
        debug_assert_eq!(w.len(), out * k);
        let mut y = Tensor::zeros(n, out);
        if n > 0 && out > 0 && k > 0 {
            // SAFETY: x is n×k row-major, Wᵀ is read as k×out through strides
            // (1, k), y is n×out row-major; all lengths checked above.
            unsafe {
                F::gemm(
                    n,
                    k,
                    out,
                    F::one(),
                    x.data.as_ptr(),
                    k as isize,
                    1,
                    w.as_ptr(),
                    1,
                    k as isize,
                    F::zero(),
                    y.data.as_mut_ptr(),
                    out as isize,
                    1,
                );
            }
        }
        for r in 0..n {
            for (v, bias) in y.row_mut(r).iter_mut().zip(b) {
                *v = *v + *bias;
            }
        }
        y
    }

    pub fn elu<F: Float>(x: F) -> F {
        if x > F::zero() {
            x
        } else {
            x.exp_m1()
        }
    }

    pub fn half_ln_2pi<F: Float>() -> F {
        F::lit(0.918_938_533_204_672_8)
    }

    /// Row-wise diagonal-Gaussian log-density.
    pub fn gaussian_logp<F: Float>(mean: &Tensor<F>, log_std: &[F], actions: &Tensor<F>) -> Tensor<F> {
        let mut out = Tensor::zeros(mean.rows, 1);
        let c = half_ln_2pi::<F>();
        let half = F::lit(0.5);
        for r in 0..mean.rows {
            let mut acc = F::zero();
            for ((m, a), s) in mean.row(r).iter().zip(actions.row(r)).zip(log_std) {
                let z = (*a - *m) / s.exp();
                acc = acc - half * z * z - *s - c;
            }
            out.data[r] = acc;
        }
        out
    }

    /// Row-wise `KL(N(μ, σ²) ‖ N(0, I))`.
    pub fn kl_std_normal<F: Float>(mu: &Tensor<F>, log_sigma: &Tensor<F>) -> Tensor<F> {
        let mut out = Tensor::zeros(mu.rows, 1);
        let half = F::lit(0.5);
        let two = F::lit(2.0);
        for r in 0..mu.rows {
            let mut acc = F::zero();
            for (m, s) in mu.row(r).iter().zip(log_sigma.row(r)) {
                acc = acc + ((two * *s).exp() + *m * *m - F::one() - two * *s);
            }
            out.data[r] = half * acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_naive_product() {
        let x = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let w = [0.1, 0.2, 0.3, -0.4, 0.5, -0.6];
        let b = [1.0, -1.0];
        let y = kernels::affine(&x, &w, &b, 2);
        for r in 0..2 {
            for o in 0..2 {
                let naive: f64 = (0..3).map(|i| x.row(r)[i] * w[o * 3 + i]).sum::<f64>() + b[o];
                assert!((y.row(r)[o] - naive).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn affine_rows_do_not_depend_on_batch() {
        let k = 31;
        let out = 256;
        let w: Vec<f32> = (0..out * k).map(|i| ((i * 7919 % 1000) as f32 - 500.0) * 1e-3).collect();
        let b: Vec<f32> = (0..out).map(|i| i as f32 * 1e-3).collect();
        let big: Vec<f32> = (0..97 * k).map(|i| ((i * 104_729 % 997) as f32 - 498.0) * 1e-2).collect();
        let x = Tensor::from_vec(97, k, big).unwrap();
        let y = kernels::affine(&x, &w, &b, out);
        for r in [0, 13, 96] {
            let single = Tensor::from_vec(1, k, x.row(r).to_vec()).unwrap();
            assert_eq!(kernels::affine(&single, &w, &b, out).data, y.row(r));
        }
    }
}
