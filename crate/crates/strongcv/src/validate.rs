//! Invariant checks run by `strongcv validate`.

use std::io::{self, Write};

use strongcv_core::control_variates::{train_integral, TrainingOptions};
use strongcv_core::estimators::cv_components;
use strongcv_core::hermite::{gauss_hermite, hermite};
use strongcv_core::sim::{check_derivatives, euler_step, simulate_path, FD_TOLERANCE};
use strongcv_core::{BasisSpec, Executor, PathStreams, RngStream, SdeModel, TimeGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Analytic Jacobians and payoff gradient against central differences.
pub fn check_fd_derivatives<M: SdeModel + ?Sized>(model: &M, seed: u64) -> CheckResult {
    let mut rng = RngStream::new(seed, 0);
    let r = check_derivatives(model, &mut rng, 100);
    CheckResult::new(
        "fd-derivatives",
        r.passes(FD_TOLERANCE),
        format!(
            "drift_jacobian={:.3e} diffusion_jacobians={:.3e} payoff_gradient={:.3e} tol={:.0e}",
            r.drift_jacobian, r.diffusion_jacobians, r.payoff_gradient, FD_TOLERANCE
        ),
    )
}

/// Stored sensitivities against the chain identity `ζ_{j−1} = ζ_j·A_j` and
/// against finite differences of `f(X_T)` with respect to `X_j` along the
/// same Brownian path.
pub fn check_chain_identity<M: SdeModel + ?Sized>(model: &M, seed: u64) -> CheckResult {
    let d = model.dim();
    let steps = 8;
    let grid = match TimeGrid::new(steps, model.horizon()) {
        Ok(g) => g,
        Err(e) => return CheckResult::new("chain-identity", false, e.to_string()),
    };
    let h = 1e-6;
    let mut chain_err: f64 = 0.0;
    let mut fd_err: f64 = 0.0;
    for trial in 0..5u64 {
        let path = simulate_path(model, grid, &mut RngStream::new(seed, 1 + trial), true);
        for j in 2..=steps {
            let next = path.sensitivity(j).expect("tangents");
            let a = path.propagator(j).expect("tangents");
            let prev = path.sensitivity(j - 1).expect("tangents");
            for l in 0..d {
                let v: f64 = (0..d).map(|k| next[k] * a[k * d + l]).sum();
                chain_err = chain_err.max((v - prev[l]).abs() / v.abs().max(1.0));
            }
        }
        let replay = |j: usize, x: &[f64]| -> f64 {
            let mut state = x.to_vec();
            for k in j + 1..=steps {
                state = euler_step(model, &state, grid.delta(), path.increment(k)).expect("dimensions");
            }
            model.payoff(&state)
        };
        for j in 1..=steps {
            let zeta = path.sensitivity(j).expect("tangents");
            for l in 0..d {
                let mut xp = path.state(j).to_vec();
                let mut xm = xp.clone();
                xp[l] += h;
                xm[l] -= h;
                let fd = (replay(j, &xp) - replay(j, &xm)) / (2.0 * h);
                fd_err = fd_err.max((fd - zeta[l]).abs() / zeta[l].abs().max(1.0));
            }
        }
    }
    let passed = chain_err <= 1e-10 && fd_err <= 1e-5;
    CheckResult::new(
        "chain-identity",
        passed,
        format!("chain_error={chain_err:.3e} fd_error={fd_err:.3e}"),
    )
}

/// Closed forms for `k ≤ 3` and orthonormality under Gauss–Hermite
/// quadrature for `j, k ≤ 5`.
pub fn check_hermite() -> CheckResult {
    let mut closed: f64 = 0.0;
    for i in 0..=40 {
        let x = -4.0 + 0.2 * i as f64;
        let exact = [
            1.0,
            x,
            (x * x - 1.0) / 2f64.sqrt(),
            (x * x * x - 3.0 * x) / 6f64.sqrt(),
        ];
        for (k, e) in exact.iter().enumerate() {
            closed = closed.max((hermite(k, x).unwrap_or(f64::NAN) - e).abs());
        }
    }
    let (nodes, weights) = gauss_hermite(40);
    let mut ortho: f64 = 0.0;
    for j in 0..=5 {
        for k in 0..=5 {
            let v: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * hermite(j, *x).unwrap_or(f64::NAN) * hermite(k, *x).unwrap_or(f64::NAN))
                .sum();
            ortho = ortho.max((v - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }
    CheckResult::new(
        "hermite",
        closed <= 1e-12 && ortho <= 1e-10,
        format!("closed_form_error={closed:.3e} orthonormality_error={ortho:.3e}"),
    )
}

/// Trains a small integral control variate and checks that its mean over
/// fresh paths is within four standard errors of zero.
pub fn check_cv_zero_mean<M: SdeModel + ?Sized, E: Executor>(model: &M, seed: u64, exec: &E) -> CheckResult {
    let run = || -> strongcv_core::Result<(f64, f64)> {
        let grid = TimeGrid::new(8, model.horizon())?;
        let spec = BasisSpec::global_with_payoff(2, model.dim());
        let cv = train_integral(model, grid, &TrainingOptions::new(4_000, spec, seed), exec)?;
        let parts = cv_components(model, &cv, 20_000, PathStreams::testing(seed), exec)?;
        Ok((parts.control.mean(), parts.control.stderr()))
    };
    match run() {
        Ok((mean, se)) => CheckResult::new(
            "cv-zero-mean",
            mean.abs() <= 4.0 * se,
            format!("mean={mean:.4e} stderr={se:.4e}"),
        ),
        Err(e) => CheckResult::new("cv-zero-mean", false, e.to_string()),
    }
}

/// Runs every check, writing one line per check to `out`.
pub fn validate_model<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    seed: u64,
    exec: &E,
    out: &mut dyn Write,
) -> io::Result<Vec<CheckResult>> {
    let results = vec![
        check_fd_derivatives(model, seed),
        check_chain_identity(model, seed),
        check_hermite(),
        check_cv_zero_mean(model, seed, exec),
    ];
    for r in &results {
        writeln!(out, "{}", r.line())?;
    }
    Ok(results)
}
