//! Registered benchmark models and a few simple models for testing and
//! model authoring.

use crate::rng::RngStream;
use crate::sim::SdeModel;
use crate::Result;
use alloc::boxed::Box;
use alloc::vec::Vec;
use libm::{atan, cos, cosh, sin, tanh};

#[inline]
fn sech(x: f64) -> f64 {
    1.0 / cosh(x)
}

/// `dX = −½·tanh(X)·sech²(X) dt + sech(X) dW`, `X_0 = 0`, with
/// `f(x) = sech(x) + 15·arctan(x)`. The exact solution is `X_t = arsinh(W_t)`.
#[derive(Clone, Debug)]
pub struct Sech1d {
    x0: [f64; 1],
    horizon: f64,
}

impl Sech1d {
    /// `E f(X_1)` of the exact solution, to six decimals.
    pub const REFERENCE: f64 = 0.789640;

    pub fn new() -> Self {
        Self::with_horizon(1.0)
    }

    pub fn with_horizon(horizon: f64) -> Self {
        Self { x0: [0.0], horizon }
    }
}

impl Default for Sech1d {
    fn default() -> Self {
        Self::new()
    }
}

impl SdeModel for Sech1d {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let s = sech(x[0]);
        out[0] = -0.5 * tanh(x[0]) * s * s;
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = sech(x[0]);
    }
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let s = sech(x[0]);
        let s2 = s * s;
        let t = tanh(x[0]);
        out[0] = -0.5 * s2 * (s2 - 2.0 * t * t);
    }
    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -sech(x[0]) * tanh(x[0]);
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        sech(x[0]) + 15.0 * atan(x[0])
    }
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -sech(x[0]) * tanh(x[0]) + 15.0 / (1.0 + x[0] * x[0]);
    }
    fn has_exact_sampler(&self) -> bool {
        true
    }
    fn exact_terminal(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = libm::asinh(w[0]);
        Ok(())
    }
}

/// Five-dimensional model with `m = 5`:
///
/// ```text
/// dX^i = −sin(X^i)cos³(X^i) dt + cos²(X^i) dW^i,                     i = 1..4
/// dX^5 = Σ_{i≤4} [−½ sin(X^i)cos²(X^i) dt + cos(X^i) dW^i] + dW^5
/// ```
///
/// started at zero, with `f(x) = cos(Σ x_i) − 20·Σ_{i≤4} sin(x_i)`. The exact
/// solution is `X^i = arctan(W^i)`, `X^5 = Σ_{i≤4} arsinh(W^i) + W^5`.
#[derive(Clone, Debug)]
pub struct Arctan5d {
    x0: [f64; 5],
    horizon: f64,
}

impl Arctan5d {
    pub const REFERENCE: f64 = 0.002069;

    pub fn new() -> Self {
        Self::with_horizon(1.0)
    }

    pub fn with_horizon(horizon: f64) -> Self {
        Self { x0: [0.0; 5], horizon }
    }
}

impl Default for Arctan5d {
    fn default() -> Self {
        Self::new()
    }
}

impl SdeModel for Arctan5d {
    fn dim(&self) -> usize {
        5
    }
    fn noise_dim(&self) -> usize {
        5
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let mut last = 0.0;
        for i in 0..4 {
            let (s, c) = (sin(x[i]), cos(x[i]));
            out[i] = -s * c * c * c;
            last -= 0.5 * s * c * c;
        }
        out[4] = last;
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[..25].fill(0.0);
        for i in 0..4 {
            let c = cos(x[i]);
            out[i * 5 + i] = c * c;
            out[4 * 5 + i] = c;
        }
        out[24] = 1.0;
    }
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        out[..25].fill(0.0);
        for i in 0..4 {
            let (s, c) = (sin(x[i]), cos(x[i]));
            out[i * 5 + i] = -c * c * (c * c - 3.0 * s * s);
            out[4 * 5 + i] = -0.5 * c * (c * c - 2.0 * s * s);
        }
    }
    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]) {
        // block k is m × d = 5 × 5 at offset 25k
        out[..125].fill(0.0);
        for i in 0..4 {
            let (s, c) = (sin(x[i]), cos(x[i]));
            out[i * 25 + i * 5 + i] = -2.0 * s * c;
            out[4 * 25 + i * 5 + i] = -s;
        }
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        let total: f64 = x.iter().sum();
        cos(total) - 20.0 * x[..4].iter().map(|&xi| sin(xi)).sum::<f64>()
    }
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = -sin(x.iter().sum());
        for i in 0..4 {
            out[i] = s - 20.0 * cos(x[i]);
        }
        out[4] = s;
    }
    fn has_exact_sampler(&self) -> bool {
        true
    }
    fn exact_terminal(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        let mut last = 0.0;
        for i in 0..4 {
            out[i] = atan(w[i]);
            last += libm::asinh(w[i]);
        }
        out[4] = last + w[4];
        Ok(())
    }
}

/// Constant coefficients `μ ≡ c`, `σ ≡ S` and linear payoff `f(x) = w·x`.
#[derive(Clone, Debug)]
pub struct ConstantCoefficients {
    pub x0: Vec<f64>,
    pub drift: Vec<f64>,
    /// Row-major `d × m`.
    pub diffusion: Vec<f64>,
    pub weights: Vec<f64>,
    pub horizon: f64,
}

impl SdeModel for ConstantCoefficients {
    fn dim(&self) -> usize {
        self.x0.len()
    }
    fn noise_dim(&self) -> usize {
        self.diffusion.len() / self.x0.len()
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn drift(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.drift);
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.diffusion);
    }
    fn drift_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion_row_jacobians(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
    fn payoff_gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.weights);
    }
}

/// Scalar linear SDE `dX = aX dt + bX dW` with a caller-chosen payoff.
#[derive(Clone, Debug)]
pub struct ScalarLinear {
    pub a: f64,
    pub b: f64,
    pub x0: [f64; 1],
    pub horizon: f64,
    pub payoff: fn(f64) -> f64,
    pub payoff_derivative: fn(f64) -> f64,
}

impl SdeModel for ScalarLinear {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.a * x[0];
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.b * x[0];
    }
    fn drift_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.a;
    }
    fn diffusion_row_jacobians(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.b;
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        (self.payoff)(x[0])
    }
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (self.payoff_derivative)(x[0]);
    }
}

/// A random smooth model used by oracle tests:
///
/// ```text
/// μ_k(x)   = b_k + Σ_l a_{kl} sin(x_l)
/// σ_{ki}(x) = c_{ki} + Σ_l e_{kil} cos(x_l)
/// f(x)     = Σ_k (w_k sin(x_k) + u_k x_k)
/// ```
#[derive(Clone, Debug)]
pub struct TrigModel {
    d: usize,
    m: usize,
    x0: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
    c: Vec<f64>,
    e: Vec<f64>,
    w: Vec<f64>,
    u: Vec<f64>,
    horizon: f64,
}

impl TrigModel {
    pub fn random(d: usize, m: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, 0);
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| scale * (2.0 * rng.uniform() - 1.0)).collect()
        };
        let x0 = draw(d, 0.5);
        let b = draw(d, 0.5);
        let a = draw(d * d, 0.5);
        let mut c = draw(d * m, 0.3);
        for k in 0..d.min(m) {
            c[k * m + k] += 1.0;
        }
        let e = draw(d * m * d, 0.2);
        let w = draw(d, 1.0);
        let u = draw(d, 1.0);
        Self {
            d,
            m,
            x0,
            b,
            a,
            c,
            e,
            w,
            u,
            horizon: 1.0,
        }
    }
}

impl SdeModel for TrigModel {
    fn dim(&self) -> usize {
        self.d
    }
    fn noise_dim(&self) -> usize {
        self.m
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for k in 0..d {
            out[k] = self.b[k] + (0..d).map(|l| self.a[k * d + l] * sin(x[l])).sum::<f64>();
        }
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        for k in 0..d {
            for i in 0..m {
                out[k * m + i] = self.c[k * m + i]
                    + (0..d).map(|l| self.e[(k * m + i) * d + l] * cos(x[l])).sum::<f64>();
            }
        }
    }
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for k in 0..d {
            for l in 0..d {
                out[k * d + l] = self.a[k * d + l] * cos(x[l]);
            }
        }
    }
    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        for k in 0..d {
            for i in 0..m {
                for l in 0..d {
                    out[k * m * d + i * d + l] = -self.e[(k * m + i) * d + l] * sin(x[l]);
                }
            }
        }
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        (0..self.d).map(|k| self.w[k] * sin(x[k]) + self.u[k] * x[k]).sum()
    }
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.d {
            out[k] = self.w[k] * cos(x[k]) + self.u[k];
        }
    }
}

/// Keys of the models available by name.
pub const REGISTRY_KEYS: [&str; 2] = ["sech1d", "arctan5d"];

/// A registered model together with its known reference value `E f(X_T)`.
pub struct Registered {
    pub key: &'static str,
    pub model: Box<dyn SdeModel>,
    pub reference: Option<f64>,
}

pub fn lookup(key: &str) -> Option<Registered> {
    match key {
        "sech1d" => Some(Registered {
            key: "sech1d",
            model: Box::new(Sech1d::new()),
            reference: Some(Sech1d::REFERENCE),
        }),
        "arctan5d" => Some(Registered {
            key: "arctan5d",
            model: Box::new(Arctan5d::new()),
            reference: Some(Arctan5d::REFERENCE),
        }),
        _ => None,
    }
}
