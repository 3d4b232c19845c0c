use super::basis::{BasisEvaluator, BasisSpec};
use crate::error::check_len;
use crate::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

/// Condition number above which a ridge term `1e-8·tr(B)/q` is added.
pub const CONDITION_LIMIT: f64 = 1e12;
const RIDGE_SCALE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
struct CellSystem {
    count: u64,
    /// Upper triangle of `Σ ψψᵀ`, row-major `q × q`.
    gram: Vec<f64>,
    /// `Σ ψ·target`, one length-`q` block per output.
    rhs: Vec<f64>,
}

/// Accumulated normal equations `B α = b` for `K` regressions sharing one
/// design, stored cell by cell (a single cell for global bases).
#[derive(Clone, Debug, PartialEq)]
pub struct NormalEquations {
    local: usize,
    outputs: usize,
    cells: BTreeMap<usize, CellSystem>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellDiagnostic {
    pub cell: usize,
    pub count: u64,
    /// Ratio of extreme singular values of `B` before regularisation.
    pub condition: f64,
    pub ridge: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitDiagnostics {
    /// Occupied cells only, in increasing cell order.
    pub cells: Vec<CellDiagnostic>,
    pub samples: u64,
}

impl FitDiagnostics {
    pub fn ridge_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.ridge).count()
    }

    pub fn max_condition(&self) -> f64 {
        self.cells.iter().map(|c| c.condition).fold(0.0, f64::max)
    }
}

impl NormalEquations {
    pub fn new(spec: &BasisSpec, outputs: usize) -> Self {
        Self {
            local: spec.local_size(),
            outputs,
            cells: BTreeMap::new(),
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn samples(&self) -> u64 {
        self.cells.values().map(|c| c.count).sum()
    }

    /// Adds one observation: local basis block `psi` in `cell` with one
    /// target per output.
    #[inline]
    pub fn add(&mut self, cell: usize, psi: &[f64], targets: &[f64]) {
        let q = self.local;
        let k = self.outputs;
        let sys = self.cells.entry(cell).or_insert_with(|| CellSystem {
            count: 0,
            gram: vec![0.0; q * q],
            rhs: vec![0.0; q * k],
        });
        sys.count += 1;
        for a in 0..q {
            let pa = psi[a];
            let row = &mut sys.gram[a * q..(a + 1) * q];
            for b in a..q {
                row[b] += pa * psi[b];
            }
        }
        for (o, &t) in targets.iter().enumerate() {
            let block = &mut sys.rhs[o * q..(o + 1) * q];
            for a in 0..q {
                block[a] += psi[a] * t;
            }
        }
    }

    /// Folds another accumulator into this one; `other` must come after
    /// `self` in block order.
    pub fn merge(&mut self, other: NormalEquations) {
        for (cell, sys) in other.cells {
            match self.cells.get_mut(&cell) {
                Some(mine) => {
                    mine.count += sys.count;
                    for (a, b) in mine.gram.iter_mut().zip(&sys.gram) {
                        *a += b;
                    }
                    for (a, b) in mine.rhs.iter_mut().zip(&sys.rhs) {
                        *a += b;
                    }
                }
                None => {
                    self.cells.insert(cell, sys);
                }
            }
        }
    }

    /// Solves every occupied cell. Returns the dense coefficients, one
    /// block of `spec.size()` per output, and per-cell diagnostics. Empty
    /// cells keep zero coefficients.
    pub fn solve(&self, spec: &BasisSpec) -> Result<(Vec<f64>, FitDiagnostics)> {
        let q = self.local;
        let size = spec.size();
        let mut coefficients = vec![0.0; size * self.outputs];
        let mut diagnostics = FitDiagnostics {
            cells: Vec::with_capacity(self.cells.len()),
            samples: self.samples(),
        };
        for (&cell, sys) in &self.cells {
            if sys.gram.iter().chain(&sys.rhs).any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite normal equations in cell {cell}")));
            }
            let n = sys.count as f64;
            let mut b = DMatrix::<f64>::zeros(q, q);
            for a in 0..q {
                for c in a..q {
                    let v = sys.gram[a * q + c] / n;
                    b[(a, c)] = v;
                    b[(c, a)] = v;
                }
            }
            let rhs = DMatrix::<f64>::from_fn(q, self.outputs, |a, o| sys.rhs[o * q + a] / n);
            let (solution, condition, ridge) = solve_symmetric(b, &rhs)?;
            for o in 0..self.outputs {
                let dst = &mut coefficients[o * size + cell * q..o * size + (cell + 1) * q];
                for a in 0..q {
                    dst[a] = solution[(a, o)];
                }
            }
            diagnostics.cells.push(CellDiagnostic {
                cell,
                count: sys.count,
                condition,
                ridge,
            });
        }
        Ok((coefficients, diagnostics))
    }
}

fn condition_of(singular: &nalgebra::DVector<f64>) -> f64 {
    let max = singular.max();
    let min = singular.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves `B X = R` through an SVD, adding a ridge term when `B` is
/// ill-conditioned.
fn solve_symmetric(mut b: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool)> {
    let q = b.nrows();
    let svd = b.clone().svd(true, true);
    let condition = condition_of(&svd.singular_values);
    let (svd, ridge) = if condition > CONDITION_LIMIT {
        let trace = b.trace();
        let lambda = if trace > 0.0 {
            RIDGE_SCALE * trace / q as f64
        } else {
            RIDGE_SCALE
        };
        for a in 0..q {
            b[(a, a)] += lambda;
        }
        (b.svd(true, true), true)
    } else {
        (svd, false)
    };
    let tol = f64::EPSILON * q as f64 * svd.singular_values.max();
    let x = svd
        .solve(rhs, tol)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    Ok((x, condition, ridge))
}

/// Least squares `argmin_α Σ_n (target_n − α·ψ(input_n))²`.
///
/// `inputs` is row-major `N × d`. Returns the dense coefficient vector of
/// length `spec.size()` and diagnostics. For global bases `N` must exceed
/// the basis size; piecewise fits report per-cell sample counts instead.
pub fn fit(
    spec: &BasisSpec,
    payoff: &dyn Fn(&[f64]) -> f64,
    inputs: &[f64],
    targets: &[f64],
) -> Result<(Vec<f64>, FitDiagnostics)> {
    let d = spec.dim();
    let n = targets.len();
    if n == 0 {
        return Err(Error::Precondition("regression needs at least one sample".into()));
    }
    check_len("regression inputs", n * d, inputs.len())?;
    if let BasisSpec::Global { .. } = spec {
        if n <= spec.size() {
            return Err(Error::Precondition(format!(
                "{n} samples do not exceed the basis size {}",
                spec.size()
            )));
        }
    }
    if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite regression input or target".into()));
    }
    let mut eqs = NormalEquations::new(spec, 1);
    let mut eval = BasisEvaluator::new(*spec);
    for (x, &t) in inputs.chunks_exact(d).zip(targets) {
        if let Some((cell, psi)) = eval.evaluate(x, || payoff(x)) {
            eqs.add(cell, psi, &[t]);
        }
    }
    eqs.solve(spec)
}
