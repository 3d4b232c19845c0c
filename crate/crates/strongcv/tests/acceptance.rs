//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line and
//! then asserts. Tests hold a shared lock so wall-clock measurements do not
//! overlap.

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use strongcv::study::{rmse_study, RunSettings};
use strongcv::ThreadPool;
use strongcv_core::control_variates::{train_integral, train_series, TrainingOptions};
use strongcv_core::estimators::{
    cv_components, fit_line, paired_weak_error, smc_estimate, EstimatorKind, SampleStats,
};
use strongcv_core::hermite::{gauss_hermite, hermite};
use strongcv_core::models::{Arctan5d, Sech1d, TrigModel};
use strongcv_core::planner::{
    mlmc_recipe, plan_integral, plan_paper_1d, plan_paper_5d, plan_series, Plan, PlanInputs,
};
use strongcv_core::regression::{evaluate_basis, fit};
use strongcv_core::sim::{backward_sensitivities, propagator_matrix, simulate_path, PathSimulator};
use strongcv_core::{BasisSpec, PathStreams, RngStream, SdeModel, Sequential, TimeGrid};

static LOCK: Mutex<()> = Mutex::new(());

fn exclusive() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: &str, passed: bool, detail: String) {
    println!("{} {id} {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "{id} failed: {detail}");
}

fn pool() -> ThreadPool {
    ThreadPool::new(None).unwrap()
}

#[test]
fn ac01_reference_values() {
    let _guard = exclusive();
    let exec = pool();
    let start = Instant::now();
    let model = Sech1d::new();
    let grid = TimeGrid::new(64, model.horizon()).unwrap();
    let r1 = smc_estimate(&model, grid, 1_000_000, PathStreams::testing(2024), &exec).unwrap();
    let t1 = start.elapsed().as_secs_f64();
    let z1 = (r1.estimate - Sech1d::REFERENCE).abs() / r1.stderr();

    let start = Instant::now();
    let model = Arctan5d::new();
    let grid = TimeGrid::new(32, model.horizon()).unwrap();
    let r5 = smc_estimate(&model, grid, 1_000_000, PathStreams::testing(2025), &exec).unwrap();
    let t5 = start.elapsed().as_secs_f64();
    let z5 = (r5.estimate - Arctan5d::REFERENCE).abs() / r5.stderr();

    verdict(
        "AC1",
        z1 <= 3.0 && z5 <= 3.0 && t1 < 60.0 && t5 < 300.0,
        format!(
            "sech1d {:.5}±{:.5} ({z1:.2} se, {t1:.1}s); arctan5d {:.5}±{:.5} ({z5:.2} se, {t5:.1}s)",
            r1.estimate,
            r1.stderr(),
            r5.estimate,
            r5.stderr()
        ),
    );
}

#[test]
fn ac02_bias_order() {
    let _guard = exclusive();
    let exec = pool();
    let model = Sech1d::new();
    let steps = [4usize, 8, 16, 32];
    let mut log_delta = Vec::new();
    let mut log_bias = Vec::new();
    let mut detail = String::new();
    for (i, &j) in steps.iter().enumerate() {
        let grid = TimeGrid::new(j, model.horizon()).unwrap();
        let streams = PathStreams::testing(31).offset((i as u64) << 24);
        let s = paired_weak_error(&model, grid, 10_000_000, streams, &exec).unwrap();
        detail += &format!("J={j}: {:.3e}±{:.1e} ", s.mean(), s.stderr());
        log_delta.push(grid.delta().ln());
        log_bias.push(s.mean().abs().ln());
    }
    let (slope, _) = fit_line(&log_delta, &log_bias).unwrap();
    verdict("AC2", (0.7..=1.3).contains(&slope), format!("slope {slope:.3}; {}", detail.trim_end()));
}

fn corrected_variance(model: &Sech1d, steps: usize, train: u64, test: u64, seed: u64) -> (f64, f64) {
    let grid = TimeGrid::new(steps, model.horizon()).unwrap();
    let opts = TrainingOptions::new(train, BasisSpec::global_with_payoff(3, 1), seed);
    let cv = train_integral(model, grid, &opts, &pool()).unwrap();
    let c = cv_components(model, &cv, test, PathStreams::testing(seed), &pool()).unwrap();
    (c.corrected.variance(), c.payoff.variance())
}

#[test]
fn ac03_variance_order() {
    let _guard = exclusive();
    let start = Instant::now();
    let model = Sech1d::new();
    let vars: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&j| corrected_variance(&model, j, 100_000, 100_000, 40 + j as u64).0)
        .collect();
    let ratios = [vars[0] / vars[1], vars[1] / vars[2]];
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "AC3",
        ratios.iter().all(|r| (1.4..=3.0).contains(r)) && secs < 300.0,
        format!(
            "Var[f-CV] {:.4} {:.4} {:.4}; ratios {:.3} {:.3}; {secs:.1}s",
            vars[0], vars[1], vars[2], ratios[0], ratios[1]
        ),
    );
}

#[test]
fn ac04_variance_reduction() {
    let _guard = exclusive();
    let model = Sech1d::new();
    let recipe = plan_paper_1d(2f64.powi(-4), EstimatorKind::Integral).unwrap();
    let (corrected, raw) = corrected_variance(&model, recipe.steps, recipe.n_train, recipe.n_test, 4);
    let ratio = corrected / raw;
    verdict(
        "AC4",
        ratio <= 0.2,
        format!("J={} N={} N0={}: Var[f-CV]={corrected:.4} Var[f]={raw:.3} ratio {ratio:.4}", recipe.steps, recipe.n_train, recipe.n_test),
    );
}

#[test]
fn ac05_control_variate_is_unbiased() {
    let _guard = exclusive();
    let exec = pool();
    let model = Sech1d::new();
    let eps = 2f64.powi(-4);
    let mut passed = true;
    let mut detail = String::new();
    for kind in [EstimatorKind::Integral, EstimatorKind::Series] {
        let recipe = plan_paper_1d(eps, kind).unwrap();
        let grid = TimeGrid::new(recipe.steps, model.horizon()).unwrap();
        let mut failures = 0;
        for seed in 0..5u64 {
            let opts = TrainingOptions::new(recipe.n_train, BasisSpec::global_with_payoff(3, 1), 500 + seed);
            let cv = if kind == EstimatorKind::Integral {
                train_integral(&model, grid, &opts, &exec).unwrap()
            } else {
                train_series(&model, grid, &opts, &exec).unwrap()
            };
            let c = cv_components(&model, &cv, 100_000, PathStreams::testing(600 + seed), &exec).unwrap();
            if c.control.mean().abs() > 3.0 * c.control.stderr() {
                failures += 1;
            }
        }
        detail += &format!("{}: {failures}/5 outside 3 se; ", kind.name());
        passed &= failures <= 1;
    }
    verdict("AC5", passed, detail.trim_end_matches("; ").to_string());
}

#[test]
fn ac06_complexity_slopes() {
    let _guard = exclusive();
    let start = Instant::now();
    let model = Sech1d::new();
    let eps: Vec<f64> = (2..=5).map(|i| 2f64.powi(-i)).collect();
    let windows = [
        (EstimatorKind::Integral, -2.3, -1.6),
        (EstimatorKind::Series, -2.9, -2.0),
        (EstimatorKind::Smc, -3.4, -2.7),
        (EstimatorKind::Mlmc, -2.4, -1.7),
    ];
    let mut slopes = Vec::new();
    let mut passed = true;
    let mut detail = String::new();
    for (kind, lo, hi) in windows {
        let settings = |e: f64| -> strongcv_core::Result<RunSettings> {
            let recipe = plan_paper_1d(e, kind).ok();
            Ok(RunSettings {
                kind,
                epsilon: Some(e),
                steps: recipe.as_ref().map_or(0, |p| p.steps),
                n_train: recipe.as_ref().map_or(0, |p| p.n_train),
                n_test: recipe.as_ref().map_or(0, |p| p.n_test),
                spec: BasisSpec::global_with_payoff(3, 1),
                truncation: None,
                mlmc: (kind == EstimatorKind::Mlmc).then(|| mlmc_recipe(e, 1)),
            })
        };
        let table = rmse_study(&model, &eps, 20, Sech1d::REFERENCE, settings, 66, &Sequential).unwrap();
        let slope = table.slope().unwrap();
        passed &= (lo..=hi).contains(&slope);
        detail += &format!("{} {slope:.3} in [{lo}, {hi}]; ", kind.name());
        slopes.push(slope);
    }
    let ordered = slopes[0] > slopes[1] && slopes[1] > slopes[2];
    let secs = start.elapsed().as_secs_f64();
    detail += &format!("ordering integral > series > smc: {ordered}; {secs:.0}s");
    verdict("AC6", passed && ordered && secs < 1800.0, detail);
}

/// The model restarted from `x0` with its own horizon.
struct Restarted<'a> {
    inner: &'a Sech1d,
    x0: [f64; 1],
    horizon: f64,
}

impl SdeModel for Restarted<'_> {
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

#[test]
fn ac07_cross_approach_identity() {
    let _guard = exclusive();
    let model = Sech1d::new();
    let steps = 16;
    let j = steps / 2;
    let x = 0.0;
    let delta = model.horizon() / steps as f64;
    let remaining = steps - j + 1;
    let restarted = Restarted { inner: &model, x0: [x], horizon: delta * remaining as f64 };
    let grid = TimeGrid::new(remaining, restarted.horizon).unwrap();
    let mut sigma = [0.0];
    model.diffusion(&[x], &mut sigma);

    let mut sim = PathSimulator::new(&restarted, grid);
    let mut integral = SampleStats::new();
    let mut series = SampleStats::new();
    for n in 0..1_000_000u64 {
        let path = sim.simulate(&mut RngStream::new(71, n), true);
        integral.push(delta.sqrt() * path.sensitivity(1).unwrap()[0] * sigma[0]);
        let path = sim.simulate(&mut RngStream::new(72, n), false);
        series.push(model.payoff(path.terminal()) * path.increment(1)[0] / delta.sqrt());
    }
    let combined = (integral.stderr().powi(2) + series.stderr().powi(2)).sqrt();
    let gap = (integral.mean() - series.mean()).abs();
    verdict(
        "AC7",
        gap <= 3.0 * combined,
        format!(
            "sqrt(dt)*g*sigma {:.5}±{:.5}, a {:.5}±{:.5}, gap {:.2} combined se",
            integral.mean(),
            integral.stderr(),
            series.mean(),
            series.stderr(),
            gap / combined
        ),
    );
}

type Mat2 = [[f64; 2]; 2];

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            c[i][k] = a[i][0] * b[0][k] + a[i][1] * b[1][k];
        }
    }
    c
}

fn inverse(a: &Mat2) -> Mat2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

#[test]
fn ac08_tangent_oracle() {
    let _guard = exclusive();
    let mut worst: f64 = 0.0;
    for instance in 0..100u64 {
        let model = TrigModel::random(2, 1 + (instance % 3) as usize, instance);
        let grid = TimeGrid::new(4, model.horizon()).unwrap();
        let path = simulate_path(&model, grid, &mut RngStream::new(instance, 9), true);
        let zeta = backward_sensitivities(&model, &path).unwrap();

        // forward tangent δX_j = A_j ⋯ A_1 from freshly computed propagators
        let mut tangents: Vec<Mat2> = vec![[[1.0, 0.0], [0.0, 1.0]]];
        for j in 1..=4 {
            let a = propagator_matrix(&model, path.state(j - 1), grid.delta(), path.increment(j)).unwrap();
            let a = [[a[0], a[1]], [a[2], a[3]]];
            tangents.push(mul(&a, tangents.last().unwrap()));
        }
        let mut grad = [0.0; 2];
        model.payoff_gradient(path.terminal(), &mut grad);
        let to_end = [
            [grad[0] * tangents[4][0][0] + grad[1] * tangents[4][1][0], grad[0] * tangents[4][0][1] + grad[1] * tangents[4][1][1]],
        ];
        for j in 1..=4 {
            let inv = inverse(&tangents[j]);
            for l in 0..2 {
                let expected = to_end[0][0] * inv[0][l] + to_end[0][1] * inv[1][l];
                let got = zeta[(j - 1) * 2 + l];
                let err = (got - expected).abs() / expected.abs().max(1e-8);
                worst = worst.max(err);
            }
        }
    }
    verdict("AC8", worst <= 1e-10, format!("max relative error {worst:.2e} over 100 instances"));
}

fn no_payoff(_: &[f64]) -> f64 {
    0.0
}

#[test]
fn ac09_regression_exactness() {
    let _guard = exclusive();
    let mut rng = RngStream::new(9, 0);
    let mut worst: f64 = 0.0;
    for (spec, n) in [
        (BasisSpec::global(3, 1), 500usize),
        (BasisSpec::global(2, 3), 800),
        (BasisSpec::piecewise(2, 2, 2.0, 3).unwrap(), 3000),
    ] {
        let d = spec.dim();
        let coef: Vec<f64> = (0..spec.size()).map(|_| rng.normal()).collect();
        let inputs: Vec<f64> = (0..n * d).map(|_| 1.2 * rng.normal()).collect();
        let predict = |alpha: &[f64], x: &[f64]| -> f64 {
            evaluate_basis(&spec, x, || 0.0).iter().zip(alpha).map(|(p, a)| p * a).sum()
        };
        let targets: Vec<f64> = inputs.chunks(d).map(|x| predict(&coef, x)).collect();
        let (alpha, _) = fit(&spec, &no_payoff, &inputs, &targets).unwrap();
        let sse: f64 = inputs.chunks(d).zip(&targets).map(|(x, y)| (y - predict(&alpha, x)).powi(2)).sum();
        let norm: f64 = targets.iter().map(|y| y * y).sum();
        worst = worst.max(sse / norm);
    }

    // perturbing targets inside one cell leaves every other cell's coefficients untouched
    let spec = BasisSpec::piecewise(2, 1, 2.0, 4).unwrap();
    let inputs: Vec<f64> = (0..2000).map(|_| 1.5 * rng.normal()).collect();
    let targets: Vec<f64> = inputs.iter().map(|x| x.sin()).collect();
    let (base, _) = fit(&spec, &no_payoff, &inputs, &targets).unwrap();
    let cell = 1;
    let moved: Vec<f64> = inputs
        .iter()
        .zip(&targets)
        .map(|(x, y)| if spec.locate(&[*x]) == Some(cell) { y + 5.0 * x } else { *y })
        .collect();
    let (shifted, _) = fit(&spec, &no_payoff, &inputs, &moved).unwrap();
    let local = spec.local_size();
    let untouched = base
        .iter()
        .zip(&shifted)
        .enumerate()
        .filter(|(i, _)| i / local != cell)
        .all(|(_, (a, b))| a.to_bits() == b.to_bits());
    let changed = base[cell * local..(cell + 1) * local] != shifted[cell * local..(cell + 1) * local];

    verdict(
        "AC9",
        worst <= 1e-16 && untouched && changed,
        format!("worst SSE/|y|^2 {worst:.2e}; other cells bitwise equal: {untouched}"),
    );
}

// (i, J, integral (N, N0), series (N, N0), smc N0) for ε = 2^{-i}, evaluated by hand.
const TABLE_1D: [(i32, usize, (u64, u64), (u64, u64), u64); 5] = [
    (2, 4, (768, 3072), (1536, 5888), 4096),
    (3, 8, (1536, 5888), (4608, 17664), 16384),
    (4, 16, (3072, 12288), (13312, 53248), 65536),
    (5, 32, (6400, 25600), (39936, 159744), 262144),
    (6, 64, (13312, 53248), (120064, 480000), 1048576),
];

const TABLE_5D: [(i32, usize, (u64, u64), (u64, u64), u64); 5] = [
    (2, 4, (201, 11210), (260, 14420), 4096),
    (3, 8, (473, 26442), (936, 52236), 16384),
    (4, 16, (1114, 62372), (3380, 189240), 65536),
    (5, 32, (2628, 147128), (12244, 685568), 262144),
    (6, 64, (6198, 347056), (44352, 2483668), 1048576),
];

type Recipe = fn(f64, EstimatorKind) -> strongcv_core::Result<Plan>;

/// Fits `log N = a − e·log ε` over two precisions far apart.
fn fitted_exponent(plan: fn(&PlanInputs) -> strongcv_core::Result<Plan>, d: usize, kind: EstimatorKind) -> f64 {
    let n = |eps: f64| {
        let inputs = PlanInputs { log_correction: false, multiplier: 1e3, ..PlanInputs::new(eps, d, d, 3, kind) };
        plan(&inputs).unwrap().n_train as f64
    };
    let (e1, e2) = (1e-2, 1e-6);
    (n(e2) / n(e1)).ln() / (e1 / e2).ln()
}

#[test]
fn ac10_planner_golden_values() {
    let _guard = exclusive();
    let mut mismatches = Vec::new();
    let recipes: [(&str, &[_; 5], Recipe); 2] = [("1d", &TABLE_1D, plan_paper_1d), ("5d", &TABLE_5D, plan_paper_5d)];
    for (name, table, recipe) in recipes {
        for &(i, j, int, ser, smc) in table.iter() {
            let eps = 2f64.powi(-i);
            let got = [
                recipe(eps, EstimatorKind::Integral).map(|p| (p.steps, p.n_train, p.n_test)),
                recipe(eps, EstimatorKind::Series).map(|p| (p.steps, p.n_train, p.n_test)),
                recipe(eps, EstimatorKind::Smc).map(|p| (p.steps, 0, p.n_test)),
            ];
            let want = [(j, int.0, int.1), (j, ser.0, ser.1), (j, 0, smc)];
            for (g, w) in got.iter().zip(want) {
                if g.as_ref().ok() != Some(&w) {
                    mismatches.push(format!("{name} 2^-{i}: {g:?} != {w:?}"));
                }
            }
        }
    }
    let round4 = |x: f64| (x * 1e4).round() / 1e4;
    let exponents = [
        round4(fitted_exponent(plan_integral, 1, EstimatorKind::Integral)),
        round4(fitted_exponent(plan_series, 1, EstimatorKind::Series)),
        round4(fitted_exponent(plan_integral, 5, EstimatorKind::Integral)),
        round4(fitted_exponent(plan_series, 5, EstimatorKind::Series)),
    ];
    let expected = [1.0588, 1.5882, 1.2381, 1.8571];
    verdict(
        "AC10",
        mismatches.is_empty() && exponents == expected,
        format!("table mismatches {mismatches:?}; exponents {exponents:?}"),
    );
}

#[test]
fn ac11_hermite() {
    let _guard = exclusive();
    let closed = |k: usize, x: f64| match k {
        0 => 1.0,
        1 => x,
        2 => (x * x - 1.0) / 2f64.sqrt(),
        _ => (x * x * x - 3.0 * x) / 6f64.sqrt(),
    };
    let mut closed_err: f64 = 0.0;
    for k in 0..=3 {
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            closed_err = closed_err.max((hermite(k, x).unwrap() - closed(k, x)).abs());
        }
    }
    let (nodes, weights) = gauss_hermite(12);
    let mut ortho_err: f64 = 0.0;
    for j in 0..=5 {
        for k in 0..=5 {
            let inner: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * hermite(j, *x).unwrap() * hermite(k, *x).unwrap())
                .sum();
            ortho_err = ortho_err.max((inner - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }
    verdict(
        "AC11",
        closed_err <= 1e-12 && ortho_err <= 1e-10,
        format!("closed forms {closed_err:.1e}; orthonormality {ortho_err:.1e}"),
    );
}
