//! Testing-phase estimators: plain Monte Carlo, control-variate corrected
//! Monte Carlo and a multilevel baseline.

use crate::control_variates::{ControlVariateModel, CvEvaluator};
use crate::exec::{BlockTask, Executor};
use crate::rng::PathStreams;
use crate::sim::path::step_into;
use crate::sim::{PathBundle, PathSimulator, SdeModel, TimeGrid};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

/// Streaming mean and variance (Welford), mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl SampleStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut s = Self::new();
        for v in values {
            s.push(*v);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &SampleStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        libm::sqrt(self.variance() / self.count as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Smc,
    Mlmc,
    Integral,
    Series,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Smc => "smc",
            Self::Mlmc => "mlmc",
            Self::Integral => "integral",
            Self::Series => "series",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smc" => Some(Self::Smc),
            "mlmc" => Some(Self::Mlmc),
            "integral" => Some(Self::Integral),
            "series" => Some(Self::Series),
            _ => None,
        }
    }
}

impl From<crate::Approach> for EstimatorKind {
    fn from(a: crate::Approach) -> Self {
        match a {
            crate::Approach::Integral => Self::Integral,
            crate::Approach::Series => Self::Series,
        }
    }
}

/// Outcome of one estimator run.
///
/// For multilevel runs `sample_variance` is the estimator variance scaled by
/// `n_paths`, so `stderr()` is the estimator's standard error in all cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorReport {
    pub kind: EstimatorKind,
    pub estimate: f64,
    pub sample_variance: f64,
    pub n_paths: u64,
    /// Seconds; left at zero by the core crate, which has no clock.
    pub wall_time: f64,
    pub steps: usize,
    pub n_train: u64,
    pub epsilon: Option<f64>,
}

impl EstimatorReport {
    fn from_stats(kind: EstimatorKind, stats: &SampleStats, steps: usize, n_train: u64) -> Self {
        Self {
            kind,
            estimate: stats.mean(),
            sample_variance: stats.variance(),
            n_paths: stats.count(),
            wall_time: 0.0,
            steps,
            n_train,
            epsilon: None,
        }
    }

    pub fn stderr(&self) -> f64 {
        libm::sqrt(self.sample_variance / self.n_paths as f64)
    }
}

struct PayoffTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    streams: PathStreams,
}

impl<M: SdeModel + ?Sized> BlockTask for PayoffTask<'_, M> {
    type Output = SampleStats;

    fn run_block(&self, paths: Range<u64>) -> SampleStats {
        let mut sim = PathSimulator::new(self.model, self.grid);
        let mut bundle = PathBundle::empty(self.model.dim(), self.model.noise_dim());
        let mut stats = SampleStats::new();
        for n in paths {
            let mut rng = self.streams.path(n);
            sim.simulate_into(&mut rng, false, &mut bundle);
            stats.push(self.model.payoff(bundle.terminal()));
        }
        stats
    }

    fn merge(&self, acc: &mut SampleStats, next: SampleStats) {
        acc.merge(&next);
    }
}

fn require_paths(n0: u64) -> Result<()> {
    if n0 < 2 {
        return Err(Error::Precondition(format!("need at least two testing paths, got {n0}")));
    }
    Ok(())
}

/// Mean and sample variance of `f(X_{Δ,T})` over `n0` independent Euler
/// paths; path `n` reads `streams.path(n)`.
pub fn smc_estimate<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    n0: u64,
    streams: PathStreams,
    exec: &E,
) -> Result<EstimatorReport> {
    require_paths(n0)?;
    let stats = exec
        .run(&PayoffTask { model, grid, streams }, 0..n0)
        .unwrap_or_default();
    Ok(EstimatorReport::from_stats(EstimatorKind::Smc, &stats, grid.steps(), 0))
}

/// Statistics of the payoff, the control variate and their difference,
/// gathered on the same testing paths.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CvComponents {
    pub payoff: SampleStats,
    pub control: SampleStats,
    pub corrected: SampleStats,
}

impl CvComponents {
    /// `Var[f − CV] / Var[f]`.
    pub fn variance_ratio(&self) -> f64 {
        self.corrected.variance() / self.payoff.variance()
    }
}

struct CvTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    cv: &'a ControlVariateModel,
    streams: PathStreams,
}

impl<M: SdeModel + ?Sized> BlockTask for CvTask<'_, M> {
    type Output = Result<CvComponents>;

    fn run_block(&self, paths: Range<u64>) -> Self::Output {
        let grid = self.cv.grid();
        let mut sim = PathSimulator::new(self.model, grid);
        let mut eval = CvEvaluator::new(self.cv, self.model)?;
        let mut bundle = PathBundle::empty(self.model.dim(), self.model.noise_dim());
        let mut terms = vec![0.0; grid.steps()];
        let mut out = CvComponents::default();
        for n in paths {
            let mut rng = self.streams.path(n);
            sim.simulate_into(&mut rng, false, &mut bundle);
            eval.terms(&bundle, &mut terms)?;
            let control: f64 = terms.iter().sum();
            let fx = self.model.payoff(bundle.terminal());
            out.payoff.push(fx);
            out.control.push(control);
            out.corrected.push(fx - control);
        }
        Ok(out)
    }

    fn merge(&self, acc: &mut Self::Output, next: Self::Output) {
        match (acc.as_mut(), next) {
            (Ok(a), Ok(b)) => {
                a.payoff.merge(&b.payoff);
                a.control.merge(&b.control);
                a.corrected.merge(&b.corrected);
            }
            (Ok(_), Err(e)) => *acc = Err(e),
            (Err(_), _) => {}
        }
    }
}

fn check_disjoint(cv: &ControlVariateModel, n0: u64, streams: PathStreams) -> Result<()> {
    let meta = cv.meta();
    if meta.paths == 0 || meta.seed != streams.seed {
        return Ok(());
    }
    let train = meta.stream_base..meta.stream_base.saturating_add(meta.paths);
    let test = streams.base..streams.base.saturating_add(n0);
    if train.start < test.end && test.start < train.end {
        return Err(Error::Precondition(
            "testing streams overlap the control variate's training streams".into(),
        ));
    }
    Ok(())
}

/// Payoff, control and corrected statistics on `n0` testing paths.
pub fn cv_components<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    cv: &ControlVariateModel,
    n0: u64,
    streams: PathStreams,
    exec: &E,
) -> Result<CvComponents> {
    require_paths(n0)?;
    check_disjoint(cv, n0, streams)?;
    CvEvaluator::new(cv, model)?;
    exec.run(&CvTask { model, cv, streams }, 0..n0)
        .unwrap_or(Ok(CvComponents::default()))
}

/// Mean of `f(X_{Δ,T}) − CV` over `n0` fresh paths on the control variate's
/// grid.
pub fn cv_estimate<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    cv: &ControlVariateModel,
    n0: u64,
    streams: PathStreams,
    exec: &E,
) -> Result<EstimatorReport> {
    if grid != cv.grid() {
        return Err(Error::Precondition(format!(
            "control variate was trained on J={} T={} but the estimator grid is J={} T={}",
            cv.grid().steps(),
            cv.grid().horizon(),
            grid.steps(),
            grid.horizon()
        )));
    }
    let parts = cv_components(model, cv, n0, streams, exec)?;
    Ok(EstimatorReport::from_stats(
        cv.approach().into(),
        &parts.corrected,
        grid.steps(),
        cv.meta().paths,
    ))
}

struct PairedTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    streams: PathStreams,
}

impl<M: SdeModel + ?Sized> BlockTask for PairedTask<'_, M> {
    type Output = Result<SampleStats>;

    fn run_block(&self, paths: Range<u64>) -> Self::Output {
        let (d, m) = (self.model.dim(), self.model.noise_dim());
        let mut sim = PathSimulator::new(self.model, self.grid);
        let mut bundle = PathBundle::empty(d, m);
        let mut w = vec![0.0; m];
        let mut exact = vec![0.0; d];
        let mut stats = SampleStats::new();
        for n in paths {
            let mut rng = self.streams.path(n);
            sim.simulate_into(&mut rng, false, &mut bundle);
            w.fill(0.0);
            for j in 1..=self.grid.steps() {
                for (acc, dw) in w.iter_mut().zip(bundle.increment(j)) {
                    *acc += dw;
                }
            }
            self.model.exact_terminal(&w, &mut exact)?;
            stats.push(self.model.payoff(&exact) - self.model.payoff(bundle.terminal()));
        }
        Ok(stats)
    }

    fn merge(&self, acc: &mut Self::Output, next: Self::Output) {
        match (acc.as_mut(), next) {
            (Ok(a), Ok(b)) => a.merge(&b),
            (Ok(_), Err(e)) => *acc = Err(e),
            (Err(_), _) => {}
        }
    }
}

/// Statistics of `f(X_T) − f(X_{Δ,T})` where the exact terminal state is
/// driven by the same Brownian path as the Euler scheme. The mean estimates
/// the weak discretisation error with the Monte Carlo noise largely
/// cancelled.
pub fn paired_weak_error<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    grid: TimeGrid,
    paths: u64,
    streams: PathStreams,
    exec: &E,
) -> Result<SampleStats> {
    if !model.has_exact_sampler() {
        return Err(Error::Unsupported("model has no exact terminal sampler".into()));
    }
    require_paths(paths)?;
    exec.run(&PairedTask { model, grid, streams }, 0..paths)
        .unwrap_or(Ok(SampleStats::new()))
}

struct ExactTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    streams: PathStreams,
}

impl<M: SdeModel + ?Sized> BlockTask for ExactTask<'_, M> {
    type Output = Result<SampleStats>;

    fn run_block(&self, paths: Range<u64>) -> Self::Output {
        let mut x = vec![0.0; self.model.dim()];
        let mut stats = SampleStats::new();
        for n in paths {
            let mut rng = self.streams.path(n);
            self.model.sample_exact_terminal(&mut rng, &mut x)?;
            stats.push(self.model.payoff(&x));
        }
        Ok(stats)
    }

    fn merge(&self, acc: &mut Self::Output, next: Self::Output) {
        match (acc.as_mut(), next) {
            (Ok(a), Ok(b)) => a.merge(&b),
            (Ok(_), Err(e)) => *acc = Err(e),
            (Err(_), _) => {}
        }
    }
}

/// Plain Monte Carlo over exactly sampled terminal states.
pub fn exact_estimate<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    paths: u64,
    streams: PathStreams,
    exec: &E,
) -> Result<SampleStats> {
    if !model.has_exact_sampler() {
        return Err(Error::Unsupported("model has no exact terminal sampler".into()));
    }
    require_paths(paths)?;
    exec.run(&ExactTask { model, streams }, 0..paths)
        .unwrap_or(Ok(SampleStats::new()))
}

/// Streams for MLMC level `l` are `streams.offset(l << MLMC_LEVEL_SHIFT)`.
pub const MLMC_LEVEL_SHIFT: u32 = 24;
pub const MLMC_MAX_LEVELS: usize = 10;

struct LevelTask<'a, M: SdeModel + ?Sized> {
    model: &'a M,
    refinement: usize,
    level: usize,
    horizon: f64,
    streams: PathStreams,
}

impl<M: SdeModel + ?Sized> BlockTask for LevelTask<'_, M> {
    type Output = SampleStats;

    fn run_block(&self, paths: Range<u64>) -> SampleStats {
        let (d, m) = (self.model.dim(), self.model.noise_dim());
        let r = self.refinement;
        let fine_steps = r.pow(self.level as u32);
        let h = self.horizon / fine_steps as f64;
        let sqrt_h = libm::sqrt(h);
        let mut drift = vec![0.0; d];
        let mut diffusion = vec![0.0; d * m];
        let mut fine = vec![0.0; d];
        let mut coarse = vec![0.0; d];
        let mut next = vec![0.0; d];
        let mut dw = vec![0.0; m];
        let mut dw_coarse = vec![0.0; m];
        let mut stats = SampleStats::new();
        for n in paths {
            let mut rng = self.streams.path(n);
            fine.copy_from_slice(self.model.initial_state());
            coarse.copy_from_slice(self.model.initial_state());
            dw_coarse.fill(0.0);
            for step in 1..=fine_steps {
                for (w, wc) in dw.iter_mut().zip(dw_coarse.iter_mut()) {
                    *w = sqrt_h * rng.normal();
                    *wc += *w;
                }
                step_into(self.model, &fine, h, &dw, &mut drift, &mut diffusion, &mut next);
                fine.copy_from_slice(&next);
                if self.level > 0 && step % r == 0 {
                    step_into(self.model, &coarse, h * r as f64, &dw_coarse, &mut drift, &mut diffusion, &mut next);
                    coarse.copy_from_slice(&next);
                    dw_coarse.fill(0.0);
                }
            }
            let y = if self.level == 0 {
                self.model.payoff(&fine)
            } else {
                self.model.payoff(&fine) - self.model.payoff(&coarse)
            };
            stats.push(y);
        }
        stats
    }

    fn merge(&self, acc: &mut SampleStats, next: SampleStats) {
        acc.merge(&next);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmcOptions {
    pub epsilon: f64,
    pub refinement: usize,
    /// Samples taken when a level is first added.
    pub initial_paths: u64,
    pub max_levels: usize,
}

impl MlmcOptions {
    pub fn new(epsilon: f64, refinement: usize, initial_paths: u64) -> Self {
        Self {
            epsilon,
            refinement,
            initial_paths,
            max_levels: MLMC_MAX_LEVELS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmcReport {
    /// Statistics of `P_0` and of `P_l − P_{l−1}` for `l ≥ 1`.
    pub levels: Vec<SampleStats>,
    pub refinement: usize,
    pub converged: bool,
}

impl MlmcReport {
    pub fn estimate(&self) -> f64 {
        self.levels.iter().map(|s| s.mean()).sum()
    }

    pub fn estimator_variance(&self) -> f64 {
        self.levels.iter().map(|s| s.variance() / s.count() as f64).sum()
    }

    pub fn total_paths(&self) -> u64 {
        self.levels.iter().map(|s| s.count()).sum()
    }

    /// Fine time steps simulated, summed over levels.
    pub fn cost(&self) -> u64 {
        self.levels
            .iter()
            .enumerate()
            .map(|(l, s)| s.count() * self.refinement.pow(l as u32) as u64)
            .sum()
    }

    pub fn report(&self, epsilon: Option<f64>) -> EstimatorReport {
        let n = self.total_paths();
        EstimatorReport {
            kind: EstimatorKind::Mlmc,
            estimate: self.estimate(),
            sample_variance: self.estimator_variance() * n as f64,
            n_paths: n,
            wall_time: 0.0,
            steps: self.refinement.pow(self.levels.len().saturating_sub(1) as u32),
            n_train: 0,
            epsilon,
        }
    }
}

fn level_samples<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    refinement: usize,
    level: usize,
    paths: Range<u64>,
    streams: PathStreams,
    exec: &E,
) -> SampleStats {
    let task = LevelTask {
        model,
        refinement,
        level,
        horizon: model.horizon(),
        streams: streams.offset((level as u64) << MLMC_LEVEL_SHIFT),
    };
    exec.run(&task, paths).unwrap_or_default()
}

fn check_refinement(refinement: usize) -> Result<()> {
    if refinement < 2 {
        return Err(Error::Precondition(format!("refinement factor must be at least 2, got {refinement}")));
    }
    Ok(())
}

/// Multilevel estimator with a fixed number of levels `0..=paths.len()−1`
/// and prescribed samples per level.
pub fn mlmc_fixed<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    refinement: usize,
    paths: &[u64],
    streams: PathStreams,
    exec: &E,
) -> Result<MlmcReport> {
    check_refinement(refinement)?;
    if paths.is_empty() || paths.iter().any(|&n| n < 2) {
        return Err(Error::Precondition("every level needs at least two paths".into()));
    }
    let levels = paths
        .iter()
        .enumerate()
        .map(|(l, &n)| level_samples(model, refinement, l, 0..n, streams, exec))
        .collect();
    Ok(MlmcReport {
        levels,
        refinement,
        converged: true,
    })
}

/// Adaptive multilevel estimator targeting mean-squared error `ε²`:
/// levels are added until the bias test passes and per-level sample sizes
/// follow the variance-optimal allocation
/// `N_l = ⌈2ε⁻²·√(V_l h_l)·Σ_k √(V_k / h_k)⌉`.
pub fn mlmc_estimate<M: SdeModel + ?Sized, E: Executor>(
    model: &M,
    opts: &MlmcOptions,
    streams: PathStreams,
    exec: &E,
) -> Result<MlmcReport> {
    check_refinement(opts.refinement)?;
    if !(opts.epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {}", opts.epsilon)));
    }
    if opts.initial_paths < 2 {
        return Err(Error::Precondition("initial level paths must be at least two".into()));
    }
    let r = opts.refinement;
    let eps2 = opts.epsilon * opts.epsilon;
    let h = |l: usize| model.horizon() / r.pow(l as u32) as f64;
    let mut levels: Vec<SampleStats> = Vec::new();
    let mut converged = false;
    loop {
        let l = levels.len();
        levels.push(level_samples(model, r, l, 0..opts.initial_paths, streams, exec));

        let total: f64 = levels
            .iter()
            .enumerate()
            .map(|(k, s)| libm::sqrt(s.variance() / h(k)))
            .sum();
        for (k, stats) in levels.iter_mut().enumerate() {
            let target = libm::ceil(2.0 / eps2 * libm::sqrt(stats.variance() * h(k)) * total) as u64;
            if target > stats.count() {
                let extra = level_samples(model, r, k, stats.count()..target, streams, exec);
                stats.merge(&extra);
            }
        }

        let depth = levels.len() - 1;
        if depth >= 2 {
            let bias = libm::fmax(
                libm::fabs(levels[depth - 1].mean()) / r as f64,
                libm::fabs(levels[depth].mean()),
            );
            if bias < (r as f64 - 1.0) * opts.epsilon / core::f64::consts::SQRT_2 {
                converged = true;
                break;
            }
        }
        if levels.len() >= opts.max_levels {
            break;
        }
    }
    Ok(MlmcReport {
        levels,
        refinement: r,
        converged,
    })
}

/// `sqrt(mean (e − reference)²)`.
pub fn rmse(estimates: &[f64], reference: f64) -> f64 {
    if estimates.is_empty() {
        return f64::NAN;
    }
    let sum: f64 = estimates.iter().map(|e| (e - reference) * (e - reference)).sum();
    libm::sqrt(sum / estimates.len() as f64)
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition("a line fit needs at least two matching points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numerical("degenerate abscissae in line fit".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `log(time)` against `log(rmse)`.
pub fn complexity_slope(rmse: &[f64], time: &[f64]) -> Result<f64> {
    if rmse.iter().chain(time).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Numerical("complexity slope needs positive finite RMSE and time".into()));
    }
    let lx: Vec<f64> = rmse.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = time.iter().map(|v| libm::log(*v)).collect();
    fit_line(&lx, &ly).map(|(s, _)| s)
}
