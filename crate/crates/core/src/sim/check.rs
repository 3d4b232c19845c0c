use super::SdeModel;
use crate::rng::RngStream;
use alloc::vec;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-5;

/// Largest scaled discrepancy `|analytic − fd| / max(1, |analytic|)` found
/// for each user-supplied derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeCheck {
    pub drift_jacobian: f64,
    pub diffusion_jacobians: f64,
    pub payoff_gradient: f64,
}

impl DerivativeCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.drift_jacobian <= tolerance
            && self.diffusion_jacobians <= tolerance
            && self.payoff_gradient <= tolerance
    }
}

fn scaled(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1.0)
}

/// Compares analytic derivatives with central differences at `trials`
/// random points `x0 + N(0, I)`.
pub fn check_derivatives<M: SdeModel + ?Sized>(model: &M, rng: &mut RngStream, trials: usize) -> DerivativeCheck {
    let (d, m) = (model.dim(), model.noise_dim());
    let h = FD_STEP;
    let mut x = vec![0.0; d];
    let mut xp = vec![0.0; d];
    let (mut plus, mut minus) = (vec![0.0; d * m], vec![0.0; d * m]);
    let mut jmu = vec![0.0; d * d];
    let mut jsig = vec![0.0; d * m * d];
    let mut grad = vec![0.0; d];
    let mut report = DerivativeCheck {
        drift_jacobian: 0.0,
        diffusion_jacobians: 0.0,
        payoff_gradient: 0.0,
    };
    for _ in 0..trials {
        for (xi, x0) in x.iter_mut().zip(model.initial_state()) {
            *xi = x0 + rng.normal();
        }
        model.drift_jacobian(&x, &mut jmu);
        model.diffusion_row_jacobians(&x, &mut jsig);
        model.payoff_gradient(&x, &mut grad);
        for l in 0..d {
            xp.copy_from_slice(&x);
            xp[l] = x[l] + h;
            model.drift(&xp, &mut plus[..d]);
            xp[l] = x[l] - h;
            model.drift(&xp, &mut minus[..d]);
            for k in 0..d {
                let fd = (plus[k] - minus[k]) / (2.0 * h);
                report.drift_jacobian = report.drift_jacobian.max(scaled(jmu[k * d + l], fd));
            }

            xp[l] = x[l] + h;
            model.diffusion(&xp, &mut plus);
            xp[l] = x[l] - h;
            model.diffusion(&xp, &mut minus);
            for k in 0..d {
                for i in 0..m {
                    let fd = (plus[k * m + i] - minus[k * m + i]) / (2.0 * h);
                    let analytic = jsig[k * m * d + i * d + l];
                    report.diffusion_jacobians = report.diffusion_jacobians.max(scaled(analytic, fd));
                }
            }

            xp[l] = x[l] + h;
            let fp = model.payoff(&xp);
            xp[l] = x[l] - h;
            let fm = model.payoff(&xp);
            report.payoff_gradient = report.payoff_gradient.max(scaled(grad[l], (fp - fm) / (2.0 * h)));
        }
    }
    report
}
