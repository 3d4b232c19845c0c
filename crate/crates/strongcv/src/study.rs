//! Timed estimator runs, repeated-run RMSE studies and their CSV form.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use strongcv_core::control_variates::{train_integral, train_series, TrainingOptions};
use strongcv_core::estimators::{
    complexity_slope, cv_estimate, mlmc_estimate, rmse, smc_estimate, EstimatorKind, EstimatorReport, MlmcOptions,
};
use strongcv_core::rng::derive_seed;
use strongcv_core::{BasisSpec, Error, Executor, PathStreams, Result, SdeModel, TimeGrid};

pub const CSV_HEADER: [&str; 13] = [
    "approach",
    "epsilon",
    "J",
    "N",
    "N0",
    "Q",
    "R",
    "p",
    "estimate_mean",
    "rmse",
    "var_mean",
    "time_seconds_mean",
    "repetitions",
];

/// Everything needed for one run of one estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub kind: EstimatorKind,
    pub epsilon: Option<f64>,
    pub steps: usize,
    pub n_train: u64,
    pub n_test: u64,
    pub spec: BasisSpec,
    pub truncation: Option<f64>,
    /// Used when `kind` is MLMC.
    pub mlmc: Option<MlmcOptions>,
}

impl RunSettings {
    pub fn cells(&self) -> Option<usize> {
        match self.spec {
            BasisSpec::Piecewise { cells_per_axis, .. } => Some(cells_per_axis),
            BasisSpec::Global { .. } => None,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match self.spec {
            BasisSpec::Piecewise { radius, .. } => Some(radius),
            BasisSpec::Global { .. } => None,
        }
    }

    fn uses_basis(&self) -> bool {
        matches!(self.kind, EstimatorKind::Integral | EstimatorKind::Series)
    }
}

/// Trains (for the control-variate approaches) and estimates once; the
/// wall time covers both phases. Training streams and testing streams are
/// both derived from `seed` and never overlap.
pub fn run_once<M, E>(model: &M, settings: &RunSettings, seed: u64, exec: &E) -> Result<EstimatorReport>
where
    M: SdeModel + ?Sized,
    E: Executor,
{
    let start = Instant::now();
    let testing = PathStreams::testing(seed);
    let mut report = match settings.kind {
        EstimatorKind::Mlmc => {
            let opts = settings
                .mlmc
                .ok_or_else(|| Error::Precondition("MLMC run without MLMC options".into()))?;
            mlmc_estimate(model, &opts, testing, exec)?.report(Some(opts.epsilon))
        }
        EstimatorKind::Smc => {
            let grid = TimeGrid::new(settings.steps, model.horizon())?;
            smc_estimate(model, grid, settings.n_test, testing, exec)?
        }
        kind => {
            let grid = TimeGrid::new(settings.steps, model.horizon())?;
            let mut opts = TrainingOptions::new(settings.n_train, settings.spec, seed);
            opts.truncation = settings.truncation;
            let cv = if kind == EstimatorKind::Integral {
                train_integral(model, grid, &opts, exec)?
            } else {
                train_series(model, grid, &opts, exec)?
            };
            cv_estimate(model, grid, &cv, settings.n_test, testing, exec)?
        }
    };
    report.wall_time = start.elapsed().as_secs_f64();
    report.epsilon = settings.epsilon;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub settings: RunSettings,
    pub estimate_mean: f64,
    /// `None` when no reference value is known.
    pub rmse: Option<f64>,
    pub var_mean: f64,
    pub time_mean: f64,
    pub repetitions: usize,
    /// For MLMC the mean finest level and total path count.
    pub steps_mean: usize,
    pub n_test_mean: u64,
}

impl StudyRow {
    pub fn from_reports(settings: RunSettings, reports: &[EstimatorReport], reference: Option<f64>) -> Self {
        let n = reports.len().max(1) as f64;
        let estimates: Vec<f64> = reports.iter().map(|r| r.estimate).collect();
        Self {
            settings,
            estimate_mean: estimates.iter().sum::<f64>() / n,
            rmse: reference.map(|r| rmse(&estimates, r)),
            var_mean: reports.iter().map(|r| r.sample_variance).sum::<f64>() / n,
            time_mean: reports.iter().map(|r| r.wall_time).sum::<f64>() / n,
            repetitions: reports.len(),
            steps_mean: (reports.iter().map(|r| r.steps as f64).sum::<f64>() / n).round() as usize,
            n_test_mean: (reports.iter().map(|r| r.n_paths as f64).sum::<f64>() / n).round() as u64,
        }
    }

    fn record(&self, omit_timing: bool) -> Vec<String> {
        let s = &self.settings;
        let opt = |v: Option<String>| v.unwrap_or_default();
        let (steps, n_test) = if s.kind == EstimatorKind::Mlmc {
            (self.steps_mean, self.n_test_mean)
        } else {
            (s.steps, s.n_test)
        };
        vec![
            s.kind.name().to_string(),
            opt(s.epsilon.map(|e| e.to_string())),
            steps.to_string(),
            s.n_train.to_string(),
            n_test.to_string(),
            opt(s.cells().map(|q| q.to_string())),
            opt(s.radius().map(|r| r.to_string())),
            if s.uses_basis() { s.spec.degree().to_string() } else { String::new() },
            self.estimate_mean.to_string(),
            opt(self.rmse.map(|r| r.to_string())),
            self.var_mean.to_string(),
            if omit_timing { String::new() } else { self.time_mean.to_string() },
            self.repetitions.to_string(),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StudyTable {
    /// Sorted by ε, largest first.
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn new(mut rows: Vec<StudyRow>) -> Self {
        rows.sort_by(|a, b| {
            let (x, y) = (a.settings.epsilon.unwrap_or(0.0), b.settings.epsilon.unwrap_or(0.0));
            y.total_cmp(&x)
        });
        Self { rows }
    }

    /// Slope of log(mean time) against log(RMSE) over all rows.
    pub fn slope(&self) -> Result<f64> {
        let rmse: Option<Vec<f64>> = self.rows.iter().map(|r| r.rmse).collect();
        let rmse = rmse.ok_or_else(|| Error::Precondition("slope needs RMSE values".into()))?;
        let time: Vec<f64> = self.rows.iter().map(|r| r.time_mean).collect();
        complexity_slope(&rmse, &time)
    }

    fn footer(&self, omit_timing: bool) -> Option<String> {
        let kind = self.rows.first()?.settings.kind.name();
        if omit_timing {
            return Some(format!("#slope,{kind},"));
        }
        let value = self.slope().map(|s| s.to_string()).unwrap_or_default();
        Some(format!("#slope,{kind},{value}"))
    }

    /// Rows followed by the `#slope,` footer.
    pub fn write_csv<W: Write>(&self, out: W, header: bool, omit_timing: bool) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            w.write_record(CSV_HEADER)?;
        }
        for row in &self.rows {
            w.write_record(row.record(omit_timing))?;
        }
        w.flush()?;
        let mut out = w.into_inner().map_err(|e| e.into_error())?;
        if let Some(f) = self.footer(omit_timing) {
            writeln!(out, "{f}")?;
        }
        out.flush()
    }

    /// Appends to `path`, writing the header only if the file is new or
    /// empty.
    pub fn append_to(&self, path: &Path, omit_timing: bool) -> io::Result<()> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let header = file.metadata()?.len() == 0;
        self.write_csv(io::BufWriter::new(file), header, omit_timing)
    }
}

/// Writes a single-row table without a footer.
pub fn write_rows<W: Write>(rows: &[StudyRow], out: W, header: bool, omit_timing: bool) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.write_record(row.record(omit_timing))?;
    }
    w.flush()
}

/// Appends rows to `path` with the header written once.
pub fn append_rows(rows: &[StudyRow], path: &Path, omit_timing: bool) -> io::Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let header = file.metadata()?.len() == 0;
    write_rows(rows, io::BufWriter::new(file), header, omit_timing)
}

/// Seed of repetition `rep` at the `level`-th precision of a study.
pub fn repetition_seed(master: u64, level: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(master, level as u64), rep as u64)
}

/// Runs `repetitions` independent train+test pipelines per precision and
/// records the RMSE against `reference`. Repetitions run one after another
/// so that the wall times are not distorted by contention.
pub fn rmse_study<M, E, P>(
    model: &M,
    epsilons: &[f64],
    repetitions: usize,
    reference: f64,
    plan: P,
    master_seed: u64,
    exec: &E,
) -> Result<StudyTable>
where
    M: SdeModel + ?Sized,
    E: Executor,
    P: Fn(f64) -> Result<RunSettings>,
{
    if repetitions < 2 {
        return Err(Error::Precondition(format!("a study needs at least two repetitions, got {repetitions}")));
    }
    if !reference.is_finite() {
        return Err(Error::Precondition("reference value must be finite".into()));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for (level, &eps) in epsilons.iter().enumerate() {
        let settings = plan(eps)?;
        let reports = (0..repetitions)
            .map(|rep| run_once(model, &settings, repetition_seed(master_seed, level, rep), exec))
            .collect::<Result<Vec<_>>>()?;
        rows.push(StudyRow::from_reports(settings, &reports, Some(reference)));
    }
    Ok(StudyTable::new(rows))
}
