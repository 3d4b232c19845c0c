use super::{SdeModel, TimeGrid};
use crate::error::check_len;
use crate::rng::RngStream;
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// One simulated Euler trajectory.
///
/// Steps are numbered `j = 1..=J`: increment `j` is `Δ_jW = W_{t_j} − W_{t_{j−1}}`
/// and moves state `j − 1` to state `j`. Propagator `A_j` is the Jacobian of
/// that step with respect to the state; sensitivity `ζ_j` is
/// `∇f(X_T)·A_J⋯A_{j+1}`, so `ζ_J = ∇f(X_T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    dim: usize,
    noise_dim: usize,
    steps: usize,
    increments: Vec<f64>,
    states: Vec<f64>,
    propagators: Option<Vec<f64>>,
    sensitivities: Option<Vec<f64>>,
}

impl PathBundle {
    pub fn empty(dim: usize, noise_dim: usize) -> Self {
        Self {
            dim,
            noise_dim,
            steps: 0,
            increments: Vec::new(),
            states: Vec::new(),
            propagators: None,
            sensitivities: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `X_{Δ,t_j}` for `j = 0..=J`.
    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.steps)
    }

    /// `Δ_jW` for `j = 1..=J`.
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[(j - 1) * self.noise_dim..j * self.noise_dim]
    }

    /// `A_j` (row-major `d × d`) for `j = 1..=J`.
    pub fn propagator(&self, j: usize) -> Option<&[f64]> {
        let dd = self.dim * self.dim;
        self.propagators
            .as_ref()
            .map(|p| &p[(j - 1) * dd..j * dd])
    }

    /// `ζ_j` for `j = 1..=J`.
    pub fn sensitivity(&self, j: usize) -> Option<&[f64]> {
        self.sensitivities
            .as_ref()
            .map(|s| &s[(j - 1) * self.dim..j * self.dim])
    }

    pub fn has_tangents(&self) -> bool {
        self.propagators.is_some()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

/// Reusable Euler simulator with scratch buffers for one model and grid.
pub struct PathSimulator<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    jac_drift: Vec<f64>,
    jac_diffusion: Vec<f64>,
    row: Vec<f64>,
}

impl<'a, M: SdeModel + ?Sized> PathSimulator<'a, M> {
    pub fn new(model: &'a M, grid: TimeGrid) -> Self {
        let (d, m) = (model.dim(), model.noise_dim());
        Self {
            model,
            grid,
            drift: vec![0.0; d],
            diffusion: vec![0.0; d * m],
            jac_drift: vec![0.0; d * d],
            jac_diffusion: vec![0.0; d * m * d],
            row: vec![0.0; d],
        }
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn simulate(&mut self, rng: &mut RngStream, with_tangents: bool) -> PathBundle {
        let mut bundle = PathBundle::empty(self.model.dim(), self.model.noise_dim());
        self.simulate_into(rng, with_tangents, &mut bundle);
        bundle
    }

    /// Simulates into `bundle`, reusing its allocations.
    pub fn simulate_into(&mut self, rng: &mut RngStream, with_tangents: bool, bundle: &mut PathBundle) {
        let (d, m, steps) = (self.model.dim(), self.model.noise_dim(), self.grid.steps());
        let delta = self.grid.delta();
        let sqrt_delta = libm::sqrt(delta);
        bundle.dim = d;
        bundle.noise_dim = m;
        bundle.steps = steps;
        bundle.increments.resize(steps * m, 0.0);
        bundle.states.resize((steps + 1) * d, 0.0);
        bundle.states[..d].copy_from_slice(self.model.initial_state());
        if with_tangents {
            bundle.propagators.get_or_insert_with(Vec::new).resize(steps * d * d, 0.0);
            bundle.sensitivities.get_or_insert_with(Vec::new).resize(steps * d, 0.0);
        } else {
            bundle.propagators = None;
            bundle.sensitivities = None;
        }

        for j in 1..=steps {
            let dw = &mut bundle.increments[(j - 1) * m..j * m];
            for w in dw.iter_mut() {
                *w = sqrt_delta * rng.normal();
            }
            let (prev, next) = bundle.states.split_at_mut(j * d);
            let x = &prev[(j - 1) * d..];
            let out = &mut next[..d];
            if let Some(props) = bundle.propagators.as_mut() {
                let a = &mut props[(j - 1) * d * d..j * d * d];
                fill_propagator(
                    self.model,
                    x,
                    delta,
                    dw,
                    &mut self.jac_drift,
                    &mut self.jac_diffusion,
                    a,
                );
            }
            step_into(self.model, x, delta, dw, &mut self.drift, &mut self.diffusion, out);
        }

        if with_tangents {
            let terminal = &bundle.states[steps * d..];
            let props = bundle.propagators.as_ref().expect("propagators allocated");
            let sens = bundle.sensitivities.as_mut().expect("sensitivities allocated");
            backward_into(self.model, terminal, props, d, steps, &mut self.row, sens);
        }
    }
}

#[inline]
pub(crate) fn step_into<M: SdeModel + ?Sized>(
    model: &M,
    x: &[f64],
    delta: f64,
    dw: &[f64],
    drift: &mut [f64],
    diffusion: &mut [f64],
    out: &mut [f64],
) {
    let m = dw.len();
    model.drift(x, drift);
    model.diffusion(x, diffusion);
    for k in 0..x.len() {
        let mut noise = 0.0;
        for i in 0..m {
            noise += diffusion[k * m + i] * dw[i];
        }
        out[k] = x[k] + drift[k] * delta + noise;
    }
}

#[inline]
fn fill_propagator<M: SdeModel + ?Sized>(
    model: &M,
    x: &[f64],
    delta: f64,
    dw: &[f64],
    jac_drift: &mut [f64],
    jac_diffusion: &mut [f64],
    a: &mut [f64],
) {
    let (d, m) = (x.len(), dw.len());
    model.drift_jacobian(x, jac_drift);
    model.diffusion_row_jacobians(x, jac_diffusion);
    for k in 0..d {
        let block = &jac_diffusion[k * m * d..(k + 1) * m * d];
        for l in 0..d {
            let mut s = 0.0;
            for i in 0..m {
                s += dw[i] * block[i * d + l];
            }
            let identity = if k == l { 1.0 } else { 0.0 };
            a[k * d + l] = identity + jac_drift[k * d + l] * delta + s;
        }
    }
}

fn backward_into<M: SdeModel + ?Sized>(
    model: &M,
    terminal: &[f64],
    propagators: &[f64],
    d: usize,
    steps: usize,
    row: &mut [f64],
    out: &mut [f64],
) {
    let last = &mut out[(steps - 1) * d..steps * d];
    model.payoff_gradient(terminal, last);
    for j in (1..steps).rev() {
        // ζ_j = ζ_{j+1} · A_{j+1}
        let a = &propagators[j * d * d..(j + 1) * d * d];
        let (head, tail) = out.split_at_mut(j * d);
        let next = &tail[..d];
        for l in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += next[k] * a[k * d + l];
            }
            row[l] = s;
        }
        head[(j - 1) * d..].copy_from_slice(row);
    }
}

/// `Φ_Δ(x, Δw) = x + μ(x)Δ + σ(x)Δw`.
pub fn euler_step<M: SdeModel + ?Sized>(model: &M, x: &[f64], delta: f64, dw: &[f64]) -> Result<Vec<f64>> {
    let (d, m) = (model.dim(), model.noise_dim());
    check_len("state", d, x.len())?;
    check_len("Brownian increment", m, dw.len())?;
    if !(delta > 0.0) {
        return Err(Error::Precondition("step size must be positive".into()));
    }
    let mut out = vec![0.0; d];
    step_into(model, x, delta, dw, &mut vec![0.0; d], &mut vec![0.0; d * m], &mut out);
    Ok(out)
}

/// `A = I_d + J_μ(x)Δ + S` where row `k` of `S` is `Δwᵀ·J_{σ_k}(x)`.
pub fn propagator_matrix<M: SdeModel + ?Sized>(
    model: &M,
    x: &[f64],
    delta: f64,
    dw: &[f64],
) -> Result<Vec<f64>> {
    let (d, m) = (model.dim(), model.noise_dim());
    check_len("state", d, x.len())?;
    check_len("Brownian increment", m, dw.len())?;
    if !(delta > 0.0) {
        return Err(Error::Precondition("step size must be positive".into()));
    }
    let mut a = vec![0.0; d * d];
    fill_propagator(model, x, delta, dw, &mut vec![0.0; d * d], &mut vec![0.0; d * m * d], &mut a);
    Ok(a)
}

pub fn simulate_path<M: SdeModel + ?Sized>(
    model: &M,
    grid: TimeGrid,
    rng: &mut RngStream,
    with_tangents: bool,
) -> PathBundle {
    PathSimulator::new(model, grid).simulate(rng, with_tangents)
}

/// Backward sensitivities `ζ_j = ∇f(X_T)·A_J⋯A_{j+1}` flattened as `J × d`,
/// computed with vector-matrix products only.
pub fn backward_sensitivities<M: SdeModel + ?Sized>(model: &M, bundle: &PathBundle) -> Result<Vec<f64>> {
    let props = bundle
        .propagators
        .as_ref()
        .ok_or_else(|| Error::Precondition("path was simulated without tangents".into()))?;
    check_len("state", model.dim(), bundle.dim)?;
    let (d, steps) = (bundle.dim, bundle.steps);
    let mut out = vec![0.0; steps * d];
    backward_into(model, bundle.terminal(), props, d, steps, &mut vec![0.0; d], &mut out);
    Ok(out)
}

pub fn sample_exact_terminal<M: SdeModel + ?Sized>(model: &M, rng: &mut RngStream) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.dim()];
    model.sample_exact_terminal(rng, &mut out)?;
    Ok(out)
}
