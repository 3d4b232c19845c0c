//! Training and evaluation of the integral- and series-approach control
//! variates.
//!
//! Both are martingale transforms `Σ_j c_j(X_{j−1})·ξ_j` with
//! `E[ξ_j | F_{j−1}] = 0`, so they stay unbiased whatever the quality of the
//! fitted coefficients, provided the testing paths are independent of the
//! training paths.

use crate::estimators::SampleStats;
use crate::exec::{BlockTask, Executor};
use crate::hermite::hermite_unchecked;
use crate::regression::{BasisEvaluator, BasisSpec, CoefficientTable, NormalEquations};
use crate::rng::PathStreams;
use crate::sim::{PathBundle, PathSimulator, SdeModel, TimeGrid};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Approach {
    /// Regresses pathwise sensitivities `ζ_j = ∇f(X_T)·A_J⋯A_{j+1}`; the
    /// control variate is `Σ_j Σ_k g̃_{j,k}(X_{j−1})·(σ(X_{j−1})Δ_jW)_k`.
    Integral,
    /// Regresses `f(X_T)·Δ_jW/√Δ`; the control variate is
    /// `Σ_j Σ_i ã_{j,i}(X_{j−1})·Δ_jW^i/√Δ`.
    Series,
}

impl Approach {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Integral => "integral",
            Self::Series => "series",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainingMeta {
    pub paths: u64,
    pub seed: u64,
    /// First training stream id; path `n` used stream `stream_base + n`.
    pub stream_base: u64,
}

/// A trained control variate.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlVariateModel {
    approach: Approach,
    table: CoefficientTable,
    grid: TimeGrid,
    meta: TrainingMeta,
}

impl ControlVariateModel {
    pub fn new(approach: Approach, table: CoefficientTable, grid: TimeGrid, meta: TrainingMeta) -> Result<Self> {
        if table.steps() != grid.steps() {
            return Err(Error::Precondition(format!(
                "coefficient table has {} steps but the grid has {}",
                table.steps(),
                grid.steps()
            )));
        }
        Ok(Self {
            approach,
            table,
            grid,
            meta,
        })
    }

    /// A control variate that is identically zero.
    pub fn zero(approach: Approach, spec: BasisSpec, grid: TimeGrid, outputs: usize) -> Self {
        Self {
            approach,
            table: CoefficientTable::zeros(spec, grid.steps(), outputs),
            grid,
            meta: TrainingMeta {
                paths: 0,
                seed: 0,
                stream_base: 0,
            },
        }
    }

    pub fn approach(&self) -> Approach {
        self.approach
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn meta(&self) -> TrainingMeta {
        self.meta
    }

    fn check_model<M: SdeModel + ?Sized>(&self, model: &M) -> Result<()> {
        let expected = match self.approach {
            Approach::Integral => model.dim(),
            Approach::Series => model.noise_dim(),
        };
        if self.table.outputs() != expected || self.table.spec().dim() != model.dim() {
            return Err(Error::Precondition(format!(
                "{} control variate with {} outputs on a {}-dimensional basis does not fit a model with d={}, m={}",
                self.approach.name(),
                self.table.outputs(),
                self.table.spec().dim(),
                model.dim(),
                model.noise_dim()
            )));
        }
        Ok(())
    }
}

/// Per-path evaluator with reusable scratch.
pub struct CvEvaluator<'a, M: SdeModel + ?Sized> {
    cv: &'a ControlVariateModel,
    model: &'a M,
    basis: BasisEvaluator,
    diffusion: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a, M: SdeModel + ?Sized> CvEvaluator<'a, M> {
    pub fn new(cv: &'a ControlVariateModel, model: &'a M) -> Result<Self> {
        cv.check_model(model)?;
        Ok(Self {
            cv,
            model,
            basis: BasisEvaluator::new(*cv.table.spec()),
            diffusion: vec![0.0; model.dim() * model.noise_dim()],
            weights: vec![0.0; cv.table.outputs()],
        })
    }

    /// Writes the per-step terms `c_j(X_{j−1})·ξ_j` into `terms[j − 1]`.
    pub fn terms(&mut self, bundle: &PathBundle, terms: &mut [f64]) -> Result<()> {
        let steps = self.cv.grid.steps();
        if bundle.steps() != steps {
            return Err(Error::Precondition(format!(
                "path has {} steps but the control variate was trained on {}",
                bundle.steps(),
                steps
            )));
        }
        if bundle.dim() != self.model.dim() || bundle.noise_dim() != self.model.noise_dim() {
            return Err(Error::Dimension {
                what: "path",
                expected: self.model.dim(),
                got: bundle.dim(),
            });
        }
        let (d, m) = (self.model.dim(), self.model.noise_dim());
        let inv_sqrt_delta = 1.0 / libm::sqrt(self.cv.grid.delta());
        let model = self.model;
        for j in 1..=steps {
            let x = bundle.state(j - 1);
            let dw = bundle.increment(j);
            let Some((cell, psi)) = self.basis.evaluate(x, || model.payoff(x)) else {
                terms[j - 1] = 0.0;
                continue;
            };
            match self.cv.approach {
                Approach::Integral => {
                    model.diffusion(x, &mut self.diffusion);
                    for k in 0..d {
                        let row = &self.diffusion[k * m..(k + 1) * m];
                        self.weights[k] = row.iter().zip(dw).map(|(s, w)| s * w).sum();
                    }
                }
                Approach::Series => {
                    for i in 0..m {
                        self.weights[i] = dw[i] * inv_sqrt_delta;
                    }
                }
            }
            let mut term = 0.0;
            for (k, w) in self.weights.iter().enumerate() {
                term += self.cv.table.predict_local(j, k, cell, psi) * w;
            }
            terms[j - 1] = term;
        }
        Ok(())
    }

    pub fn evaluate(&mut self, bundle: &PathBundle) -> Result<f64> {
        let mut terms = vec![0.0; bundle.steps()];
        self.terms(bundle, &mut terms)?;
        Ok(terms.iter().sum())
    }
}

/// Control variate value on one testing path. Tangent data is not needed.
/// The path must be independent of the training paths.
pub fn evaluate_cv<M: SdeModel + ?Sized>(cv: &ControlVariateModel, model: &M, bundle: &PathBundle) -> Result<f64> {
    CvEvaluator::new(cv, model)?.evaluate(bundle)
}

struct TrainTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    spec: BasisSpec,
    streams: PathStreams,
    targets: TargetKind,
}

#[derive(Clone, Copy)]
enum TargetKind {
    Sensitivity,
    Chaos { orders: usize },
}

impl TargetKind {
    fn outputs(&self, d: usize, m: usize) -> usize {
        match *self {
            Self::Sensitivity => d,
            Self::Chaos { orders } => m * orders,
        }
    }
}

impl<M: SdeModel + ?Sized> BlockTask for TrainTask<'_, M> {
    type Output = Vec<NormalEquations>;

    fn run_block(&self, paths: Range<u64>) -> Self::Output {
        let (d, m) = (self.model.dim(), self.model.noise_dim());
        let steps = self.grid.steps();
        let outputs = self.targets.outputs(d, m);
        let inv_sqrt_delta = 1.0 / libm::sqrt(self.grid.delta());
        let mut eqs: Vec<NormalEquations> = (0..steps).map(|_| NormalEquations::new(&self.spec, outputs)).collect();
        let mut sim = PathSimulator::new(self.model, self.grid);
        let mut basis = BasisEvaluator::new(self.spec);
        let mut bundle = PathBundle::empty(d, m);
        let mut targets = vec![0.0; outputs];
        let with_tangents = matches!(self.targets, TargetKind::Sensitivity);
        for n in paths {
            let mut rng = self.streams.path(n);
            sim.simulate_into(&mut rng, with_tangents, &mut bundle);
            let fx = self.model.payoff(bundle.terminal());
            for j in 1..=steps {
                match self.targets {
                    TargetKind::Sensitivity => {
                        targets.copy_from_slice(bundle.sensitivity(j).expect("tangents simulated"));
                    }
                    TargetKind::Chaos { orders } => {
                        for (i, w) in bundle.increment(j).iter().enumerate() {
                            let xi = w * inv_sqrt_delta;
                            for r in 0..orders {
                                targets[i * orders + r] = fx * hermite_unchecked(r + 1, xi);
                            }
                        }
                    }
                }
                let x = bundle.state(j - 1);
                let model = self.model;
                if let Some((cell, psi)) = basis.evaluate(x, || model.payoff(x)) {
                    eqs[j - 1].add(cell, psi, &targets);
                }
            }
        }
        eqs
    }

    fn merge(&self, acc: &mut Self::Output, next: Self::Output) {
        for (a, b) in acc.iter_mut().zip(next) {
            a.merge(b);
        }
    }
}

/// Options shared by both training routines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingOptions {
    pub paths: u64,
    pub spec: BasisSpec,
    pub streams: PathStreams,
    /// Bound `A` of the truncation operator. The integral approach clips at
    /// `A`, the series approach at `A√Δ`. Required for piecewise bases.
    pub truncation: Option<f64>,
}

impl TrainingOptions {
    pub fn new(paths: u64, spec: BasisSpec, seed: u64) -> Self {
        Self {
            paths,
            spec,
            streams: PathStreams::training(seed),
            truncation: None,
        }
    }

    pub fn with_truncation(mut self, bound: f64) -> Self {
        self.truncation = Some(bound);
        self
    }
}

fn validate_training<M: SdeModel + ?Sized>(model: &M, opts: &TrainingOptions) -> Result<()> {
    if opts.spec.dim() != model.dim() {
        return Err(Error::Precondition(format!(
            "basis dimension {} does not match model dimension {}",
            opts.spec.dim(),
            model.dim()
        )));
    }
    if opts.paths <= opts.spec.size() as u64 {
        return Err(Error::Precondition(format!(
            "{} training paths do not exceed the basis size {}",
            opts.paths,
            opts.spec.size()
        )));
    }
    if opts.streams.base.checked_add(opts.paths).map_or(true, |end| end > crate::rng::TESTING_STREAM_BASE) {
        return Err(Error::Precondition("training streams must stay below the testing stream range".into()));
    }
    if let Some(a) = opts.truncation {
        if !(a > 0.0) {
            return Err(Error::Precondition(format!("truncation bound must be positive, got {a}")));
        }
    } else if matches!(opts.spec, BasisSpec::Piecewise { .. }) {
        return Err(Error::Precondition("piecewise bases require a truncation bound".into()));
    }
    Ok(())
}

fn accumulate<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    opts: &TrainingOptions,
    targets: TargetKind,
    exec: &E,
) -> Result<Vec<NormalEquations>> {
    let task = TrainTask {
        model,
        grid,
        spec: opts.spec,
        streams: opts.streams,
        targets,
    };
    exec.run(&task, 0..opts.paths)
        .ok_or_else(|| Error::Precondition("no training paths".into()))
}

fn assemble(eqs: &[NormalEquations], spec: &BasisSpec) -> Result<Vec<f64>> {
    let mut all = Vec::with_capacity(eqs.len() * eqs.first().map_or(0, |e| e.outputs()) * spec.size());
    for e in eqs {
        let (coef, _) = e.solve(spec)?;
        all.extend_from_slice(&coef);
    }
    Ok(all)
}

/// Fits `g̃_{j,k}` by regressing the `k`-th entry of `ζ_j` on `ψ(X_{j−1})`
/// over `opts.paths` training paths simulated with tangents.
pub fn train_integral<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    opts: &TrainingOptions,
    exec: &E,
) -> Result<ControlVariateModel> {
    validate_training(model, opts)?;
    let eqs = accumulate(model, grid, opts, TargetKind::Sensitivity, exec)?;
    let coefficients = assemble(&eqs, &opts.spec)?;
    let table = CoefficientTable::new(opts.spec, grid.steps(), model.dim(), opts.truncation, coefficients)?;
    ControlVariateModel::new(
        Approach::Integral,
        table,
        grid,
        TrainingMeta {
            paths: opts.paths,
            seed: opts.streams.seed,
            stream_base: opts.streams.base,
        },
    )
}

/// Fits `ã_{j,i}` by regressing `f(X_T)·Δ_jW^i/√Δ` on `ψ(X_{j−1})`; no
/// tangent process is simulated.
pub fn train_series<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    opts: &TrainingOptions,
    exec: &E,
) -> Result<ControlVariateModel> {
    validate_training(model, opts)?;
    let eqs = accumulate(model, grid, opts, TargetKind::Chaos { orders: 1 }, exec)?;
    let coefficients = assemble(&eqs, &opts.spec)?;
    let bound = opts.truncation.map(|a| a * libm::sqrt(grid.delta()));
    let table = CoefficientTable::new(opts.spec, grid.steps(), model.noise_dim(), bound, coefficients)?;
    ControlVariateModel::new(
        Approach::Series,
        table,
        grid,
        TrainingMeta {
            paths: opts.paths,
            seed: opts.streams.seed,
            stream_base: opts.streams.base,
        },
    )
}

/// Highest chaos order supported by [`chaos_validate`].
pub const MAX_CHAOS_ORDER: usize = 2;
/// Longest grid accepted by [`chaos_validate`].
pub const MAX_CHAOS_STEPS: usize = 4;

/// Variance of `f(X_T)` minus the chaos expansion truncated at each order.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosReport {
    /// `variances[r]` is the sample variance of `f − Σ_{1≤k≤r} terms`.
    pub variances: Vec<f64>,
    /// Standard errors of the variance estimates.
    pub variance_stderr: Vec<f64>,
    pub testing_paths: u64,
}

struct ChaosTestTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    table: &'a CoefficientTable,
    orders: usize,
    streams: PathStreams,
}

impl<M: SdeModel + ?Sized> BlockTask for ChaosTestTask<'_, M> {
    /// Residuals `f − CV_r` for `r = 0..=orders`, path-major.
    type Output = Vec<f64>;

    fn run_block(&self, paths: Range<u64>) -> Vec<f64> {
        let steps = self.grid.steps();
        let inv_sqrt_delta = 1.0 / libm::sqrt(self.grid.delta());
        let mut sim = PathSimulator::new(self.model, self.grid);
        let mut basis = BasisEvaluator::new(*self.table.spec());
        let mut bundle = PathBundle::empty(1, 1);
        let mut out = Vec::with_capacity((paths.end - paths.start) as usize * (self.orders + 1));
        let mut partial = vec![0.0; self.orders + 1];
        for n in paths {
            let mut rng = self.streams.path(n);
            sim.simulate_into(&mut rng, false, &mut bundle);
            partial.fill(0.0);
            for j in 1..=steps {
                let x = bundle.state(j - 1);
                let xi = bundle.increment(j)[0] * inv_sqrt_delta;
                let model = self.model;
                if let Some((cell, psi)) = basis.evaluate(x, || model.payoff(x)) {
                    let mut cumulative = 0.0;
                    for r in 1..=self.orders {
                        cumulative += self.table.predict_local(j, r - 1, cell, psi) * hermite_unchecked(r, xi);
                        partial[r] += cumulative;
                    }
                }
            }
            let fx = self.model.payoff(bundle.terminal());
            out.extend(partial.iter().map(|cv| fx - cv));
        }
        out
    }

    fn merge(&self, acc: &mut Vec<f64>, next: Vec<f64>) {
        acc.extend(next);
    }
}

/// Validation utility for scalar models on short grids: fits the chaos
/// coefficients `a_{j,k}` for `1 ≤ k ≤ max_order` on `paths` training
/// paths and reports the residual variance at every truncation order on
/// `paths` independent testing paths.
pub fn chaos_validate<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    spec: BasisSpec,
    max_order: usize,
    paths: u64,
    seed: u64,
    exec: &E,
) -> Result<ChaosReport> {
    if model.dim() != 1 || model.noise_dim() != 1 {
        return Err(Error::Unsupported("chaos validation is limited to d = m = 1".into()));
    }
    if grid.steps() > MAX_CHAOS_STEPS {
        return Err(Error::Unsupported(format!(
            "chaos validation is limited to J <= {MAX_CHAOS_STEPS}, got {}",
            grid.steps()
        )));
    }
    if max_order > MAX_CHAOS_ORDER {
        return Err(Error::Unsupported(format!("chaos order {max_order} exceeds {MAX_CHAOS_ORDER}")));
    }
    let table = if max_order == 0 {
        CoefficientTable::zeros(spec, grid.steps(), 0)
    } else {
        let opts = TrainingOptions::new(paths, spec, seed);
        validate_training(model, &opts)?;
        let eqs = accumulate(model, grid, &opts, TargetKind::Chaos { orders: max_order }, exec)?;
        let coefficients = assemble(&eqs, &spec)?;
        CoefficientTable::new(spec, grid.steps(), max_order, None, coefficients)?
    };
    if paths < 2 {
        return Err(Error::Precondition("need at least two testing paths".into()));
    }
    let task = ChaosTestTask {
        model,
        grid,
        table: &table,
        orders: max_order,
        streams: PathStreams::testing(seed),
    };
    let residuals = exec.run(&task, 0..paths).unwrap_or_default();
    let width = max_order + 1;
    let mut variances = Vec::with_capacity(width);
    let mut variance_stderr = Vec::with_capacity(width);
    for r in 0..width {
        let mut stats = SampleStats::new();
        for v in residuals.iter().skip(r).step_by(width) {
            stats.push(*v);
        }
        let mean = stats.mean();
        let n = stats.count() as f64;
        let m4 = residuals
            .iter()
            .skip(r)
            .step_by(width)
            .map(|v| {
                let c = v - mean;
                c * c * c * c
            })
            .sum::<f64>()
            / n;
        let var = stats.variance();
        variances.push(var);
        variance_stderr.push(libm::sqrt((m4 - var * var).max(0.0) / n));
    }
    Ok(ChaosReport {
        variances,
        variance_stderr,
        testing_paths: paths,
    })
}
