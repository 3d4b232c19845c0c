use crate::rng::RngStream;
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// An Itô SDE `dX = μ(X)dt + σ(X)dW` with terminal functional `f`.
///
/// Matrices are passed as row-major slices:
///
/// * `diffusion`: `d × m`, entry `(k, i)` is `σ_{k,i}`;
/// * `drift_jacobian`: `d × d`, entry `(k, l)` is `∂μ_k/∂x_l`;
/// * `diffusion_row_jacobians`: `d` consecutive `m × d` blocks, block `k`
///   holding the Jacobian of the row `σ_k = (σ_{k,1}, …, σ_{k,m})`, i.e.
///   entry `(i, l)` is `∂σ_{k,i}/∂x_l`.
///
/// Coefficients must be globally Lipschitz. Integrability conditions on `f`
/// (and differentiability for the integral approach) are the model author's
/// responsibility.
pub trait SdeModel: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn initial_state(&self) -> &[f64];
    fn horizon(&self) -> f64;

    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]);
    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]);

    fn payoff(&self, x: &[f64]) -> f64;
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]);

    fn has_exact_sampler(&self) -> bool {
        false
    }

    /// Exact `X_T` as a function of the terminal Brownian value `W_T`, for
    /// models whose solution admits that form.
    fn exact_terminal(&self, _w_terminal: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::Unsupported("model has no exact terminal sampler".into()))
    }

    /// Draws `X_T` of the exact solution by sampling `W_T = √T·Z` with
    /// `m` normals from `rng`.
    fn sample_exact_terminal(&self, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        let scale = libm::sqrt(self.horizon());
        let w: Vec<f64> = (0..self.noise_dim()).map(|_| scale * rng.normal()).collect();
        self.exact_terminal(&w, out)
    }
}

impl<M: SdeModel + ?Sized> SdeModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn initial_state(&self) -> &[f64] {
        (**self).initial_state()
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (**self).drift(x, out)
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (**self).diffusion(x, out)
    }
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        (**self).drift_jacobian(x, out)
    }
    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]) {
        (**self).diffusion_row_jacobians(x, out)
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        (**self).payoff(x)
    }
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).payoff_gradient(x, out)
    }
    fn has_exact_sampler(&self) -> bool {
        (**self).has_exact_sampler()
    }
    fn exact_terminal(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).exact_terminal(w, out)
    }
    fn sample_exact_terminal(&self, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        (**self).sample_exact_terminal(rng, out)
    }
}

/// Replaces the analytic Jacobians and payoff gradient of a model with
/// central finite differences.
///
/// Handy while authoring a model; too slow and too inaccurate for
/// benchmark runs.
#[derive(Clone, Debug)]
pub struct FiniteDifference<M> {
    pub inner: M,
    pub step: f64,
}

impl<M: SdeModel> FiniteDifference<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, step: 1e-6 }
    }
}

impl<M: SdeModel> SdeModel for FiniteDifference<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn initial_state(&self) -> &[f64] {
        self.inner.initial_state()
    }
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.inner.drift(x, out)
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.inner.diffusion(x, out)
    }

    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut xp = x.to_vec();
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        for l in 0..d {
            xp[l] = x[l] + self.step;
            self.inner.drift(&xp, &mut plus);
            xp[l] = x[l] - self.step;
            self.inner.drift(&xp, &mut minus);
            xp[l] = x[l];
            for k in 0..d {
                out[k * d + l] = (plus[k] - minus[k]) / (2.0 * self.step);
            }
        }
    }

    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]) {
        let (d, m) = (self.dim(), self.noise_dim());
        let mut xp = x.to_vec();
        let mut plus = vec![0.0; d * m];
        let mut minus = vec![0.0; d * m];
        for l in 0..d {
            xp[l] = x[l] + self.step;
            self.inner.diffusion(&xp, &mut plus);
            xp[l] = x[l] - self.step;
            self.inner.diffusion(&xp, &mut minus);
            xp[l] = x[l];
            for k in 0..d {
                for i in 0..m {
                    out[k * m * d + i * d + l] =
                        (plus[k * m + i] - minus[k * m + i]) / (2.0 * self.step);
                }
            }
        }
    }

    fn payoff(&self, x: &[f64]) -> f64 {
        self.inner.payoff(x)
    }

    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut xp = x.to_vec();
        for l in 0..x.len() {
            xp[l] = x[l] + self.step;
            let plus = self.inner.payoff(&xp);
            xp[l] = x[l] - self.step;
            let minus = self.inner.payoff(&xp);
            xp[l] = x[l];
            out[l] = (plus - minus) / (2.0 * self.step);
        }
    }

    fn has_exact_sampler(&self) -> bool {
        self.inner.has_exact_sampler()
    }
    fn exact_terminal(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.exact_terminal(w, out)
    }
    fn sample_exact_terminal(&self, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        self.inner.sample_exact_terminal(rng, out)
    }
}
