use strongcv_core::control_variates::{
    chaos_validate, evaluate_cv, train_integral, train_series, CvEvaluator, TrainingOptions,
};
use strongcv_core::estimators::{cv_components, SampleStats};
use strongcv_core::models::{ScalarLinear, Sech1d};
use strongcv_core::sim::{euler_step, PathSimulator};
use strongcv_core::{Approach, BasisSpec, Error, PathStreams, RngStream, SdeModel, Sequential, TimeGrid};

/// The same dynamics started from an arbitrary state.
struct Restarted<'a, M: SdeModel> {
    inner: &'a M,
    x0: Vec<f64>,
}

impl<M: SdeModel> SdeModel for Restarted<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
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
        self.inner.drift_jacobian(x, out)
    }
    fn diffusion_row_jacobians(&self, x: &[f64], out: &mut [f64]) {
        self.inner.diffusion_row_jacobians(x, out)
    }
    fn payoff(&self, x: &[f64]) -> f64 {
        self.inner.payoff(x)
    }
    fn payoff_gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.payoff_gradient(x, out)
    }
}

/// Brute-force `E[ζ_j | X_{j−1} = x]` from restarted paths covering steps `j..=J`.
fn conditional_sensitivity(model: &Sech1d, x: f64, j: usize, steps: usize, paths: u64) -> SampleStats {
    let restarted = Restarted { inner: model, x0: vec![x] };
    let delta = model.horizon() / steps as f64;
    let remaining = steps - j + 1;
    let grid = TimeGrid::new(remaining, delta * remaining as f64).unwrap();
    let mut sim = PathSimulator::new(&restarted, grid);
    let mut stats = SampleStats::new();
    for n in 0..paths {
        let path = sim.simulate(&mut RngStream::new(1234, (1 << 40) + n), true);
        stats.push(path.sensitivity(1).unwrap()[0]);
    }
    stats
}

/// Spread of a fitted value across independent trainings.
fn fitted_spread(values: &[f64]) -> (f64, f64) {
    let s = SampleStats::from_slice(values);
    (s.mean(), s.stderr())
}

#[test]
fn integral_fit_matches_conditional_expectation_oracle() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(16, 1.0).unwrap();
    // local cubic on [-0.4, 0.4]; a global cubic cannot resolve the peak of
    // the conditional expectation at the origin
    let spec = BasisSpec::piecewise(3, 1, 2.0, 5).unwrap();
    let fits: Vec<f64> = (0..8)
        .map(|seed| {
            let opts = TrainingOptions::new(10_000, spec, 100 + seed).with_truncation(100.0);
            let cv = train_integral(&model, grid, &opts, &Sequential).unwrap();
            cv.table().predict(8, 0, &[0.0], || model.payoff(&[0.0])).unwrap()
        })
        .collect();
    let (fit, fit_se) = fitted_spread(&fits);
    let oracle = conditional_sensitivity(&model, 0.0, 8, 16, 1_000_000);
    let combined = (fit_se * fit_se + oracle.stderr() * oracle.stderr()).sqrt();
    assert!(
        (fit - oracle.mean()).abs() <= 3.0 * combined,
        "fit {fit} ± {fit_se}, oracle {} ± {}",
        oracle.mean(),
        oracle.stderr()
    );
}

#[test]
fn series_fit_matches_one_step_oracle() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let spec = BasisSpec::piecewise(3, 1, 2.0, 5).unwrap();
    let x = 0.3;
    let fits: Vec<f64> = (0..8)
        .map(|seed| {
            let opts = TrainingOptions::new(10_000, spec, 200 + seed).with_truncation(100.0);
            let cv = train_series(&model, grid, &opts, &Sequential).unwrap();
            cv.table().predict(4, 0, &[x], || model.payoff(&[x])).unwrap()
        })
        .collect();
    let (fit, fit_se) = fitted_spread(&fits);
    let delta = grid.delta();
    let mut oracle = SampleStats::new();
    let mut rng = RngStream::new(77, 1 << 40);
    for _ in 0..1_000_000 {
        let z = rng.normal();
        let next = euler_step(&model, &[x], delta, &[delta.sqrt() * z]).unwrap();
        oracle.push(model.payoff(&next) * z);
    }
    let combined = (fit_se * fit_se + oracle.stderr() * oracle.stderr()).sqrt();
    assert!(
        (fit - oracle.mean()).abs() <= 3.0 * combined,
        "fit {fit} ± {fit_se}, oracle {} ± {}",
        oracle.mean(),
        oracle.stderr()
    );
}

#[test]
fn series_fit_of_constant_payoff_is_noise() {
    let c = 2.0;
    let model = ScalarLinear {
        a: 0.1,
        b: 0.5,
        x0: [1.0],
        horizon: 1.0,
        payoff: |_| 2.0,
        payoff_derivative: |_| 0.0,
    };
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let spec = BasisSpec::global(2, 1);
    let n = 20_000u64;
    let cv = train_series(&model, grid, &TrainingOptions::new(n, spec, 5), &Sequential).unwrap();
    let bound = 3.0 * (spec.size() as f64 * c * c / n as f64).sqrt();
    let mut sim = PathSimulator::new(&model, grid);
    for j in 1..=4 {
        let mut sq = SampleStats::new();
        for p in 0..2000 {
            let path = sim.simulate(&mut RngStream::new(6, (1 << 32) + p), false);
            let v = cv.table().predict(j, 0, path.state(j - 1), || c).unwrap();
            sq.push(v * v);
        }
        assert!(sq.mean().sqrt() <= bound, "j={j}: {} > {bound}", sq.mean().sqrt());
    }
}

#[test]
fn partial_sums_have_zero_mean() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let opts = TrainingOptions::new(10_000, BasisSpec::global_with_payoff(3, 1), 8);
    for cv in [
        train_integral(&model, grid, &opts, &Sequential).unwrap(),
        train_series(&model, grid, &opts, &Sequential).unwrap(),
    ] {
        let mut eval = CvEvaluator::new(&cv, &model).unwrap();
        let mut sim = PathSimulator::new(&model, grid);
        let mut partial = vec![SampleStats::new(); 16];
        let mut terms = vec![0.0; 16];
        let streams = PathStreams::testing(8);
        for n in 0..100_000 {
            let path = sim.simulate(&mut streams.path(n), false);
            eval.terms(&path, &mut terms).unwrap();
            let mut acc = 0.0;
            for (s, t) in partial.iter_mut().zip(&terms) {
                acc += t;
                s.push(acc);
            }
        }
        for (j, s) in partial.iter().enumerate() {
            assert!(
                s.mean().abs() <= 3.0 * s.stderr(),
                "{:?} j={}: {} ± {}",
                cv.approach(),
                j + 1,
                s.mean(),
                s.stderr()
            );
        }
    }
}

#[test]
fn integral_variance_reduction_at_sixteen_steps() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let opts = TrainingOptions::new(10_000, BasisSpec::global_with_payoff(3, 1), 9);
    let cv = train_integral(&model, grid, &opts, &Sequential).unwrap();
    let parts = cv_components(&model, &cv, 50_000, PathStreams::testing(9), &Sequential).unwrap();
    assert!(parts.variance_ratio() <= 0.2, "ratio {}", parts.variance_ratio());
}

#[test]
fn evaluate_cv_matches_evaluator_terms() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(8, 1.0).unwrap();
    let opts = TrainingOptions::new(2_000, BasisSpec::global_with_payoff(3, 1), 10);
    let cv = train_integral(&model, grid, &opts, &Sequential).unwrap();
    let path = PathSimulator::new(&model, grid).simulate(&mut PathStreams::testing(10).path(0), false);
    let mut terms = vec![0.0; 8];
    CvEvaluator::new(&cv, &model).unwrap().terms(&path, &mut terms).unwrap();
    let direct = evaluate_cv(&cv, &model, &path).unwrap();
    assert_eq!(direct, terms.iter().sum::<f64>());
    // σ recomputed on the testing path: term_j = g̃_j(X_{j−1})·σ(X_{j−1})·Δ_jW
    for j in 1..=8 {
        let x = path.state(j - 1);
        let g = cv.table().predict(j, 0, x, || model.payoff(x)).unwrap();
        let mut s = [0.0];
        model.diffusion(x, &mut s);
        assert!((terms[j - 1] - g * s[0] * path.increment(j)[0]).abs() < 1e-14);
    }
}

#[test]
fn chaos_variance_decreases_with_order() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let report = chaos_validate(&model, grid, BasisSpec::global_with_payoff(3, 1), 2, 100_000, 12, &Sequential).unwrap();
    let v = &report.variances;
    let se = &report.variance_stderr;
    assert_eq!(v.len(), 3);
    assert!(v[1] + 3.0 * se[1] < v[0] - 3.0 * se[0] || v[1] < 0.5 * v[0], "{v:?} {se:?}");
    assert!(v[2] <= v[1] + 3.0 * se[1], "{v:?} {se:?}");
}

#[test]
fn chaos_of_constant_payoff_is_flat() {
    let model = ScalarLinear {
        a: 0.1,
        b: 0.5,
        x0: [1.0],
        horizon: 1.0,
        payoff: |_| 2.0,
        payoff_derivative: |_| 0.0,
    };
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let report = chaos_validate(&model, grid, BasisSpec::global(2, 1), 2, 20_000, 13, &Sequential).unwrap();
    assert_eq!(report.variances[0], 0.0);
    // residual variance comes only from fitting noise: O(q·J·c²/N)
    let floor = 3.0 * 3.0 * 4.0 * 4.0 * 2.0 / 20_000.0;
    assert!(report.variances.iter().all(|v| *v <= floor), "{:?}", report.variances);
}

#[test]
fn chaos_rejects_long_grids() {
    let grid = TimeGrid::new(8, 1.0).unwrap();
    let err = chaos_validate(&Sech1d::new(), grid, BasisSpec::global(1, 1), 1, 100, 1, &Sequential);
    assert!(matches!(err, Err(Error::Unsupported(_))));
}

#[test]
fn approach_tag_and_output_count() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let opts = TrainingOptions::new(500, BasisSpec::global_with_payoff(2, 1), 14);
    let a = train_integral(&model, grid, &opts, &Sequential).unwrap();
    let b = train_series(&model, grid, &opts, &Sequential).unwrap();
    assert_eq!(a.approach(), Approach::Integral);
    assert_eq!(b.approach(), Approach::Series);
    assert_eq!(a.table().outputs(), model.dim());
    assert_eq!(b.table().outputs(), model.noise_dim());
    assert_eq!(a.meta().paths, 500);
    assert_eq!(a.meta().seed, 14);
}

#[test]
fn piecewise_training_truncates() {
    let model = Sech1d::new();
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let spec = BasisSpec::piecewise(1, 1, 2.0, 4).unwrap();
    let opts = TrainingOptions::new(5_000, spec, 15).with_truncation(0.5);
    let cv = train_integral(&model, grid, &opts, &Sequential).unwrap();
    for j in 1..=4 {
        for x in [-1.9, -0.5, 0.0, 0.7, 1.99] {
            assert!(cv.table().predict(j, 0, &[x], || 0.0).unwrap().abs() <= 0.5);
        }
        assert_eq!(cv.table().predict(j, 0, &[2.5], || 0.0).unwrap(), 0.0);
    }
    let series = train_series(&model, grid, &opts, &Sequential).unwrap();
    assert_eq!(series.table().bound(), Some(0.5 * grid.delta().sqrt()));
}
