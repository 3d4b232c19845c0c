use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Description of a regression basis on `ℝ^d`.
///
/// Monomials `∏ x_k^{l_k}` with `Σ l_k ≤ p` are listed in graded
/// lexicographic order: by total degree, then by descending exponent of
/// `x_1`, then of `x_2`, and so on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisSpec {
    /// Global monomials, optionally followed by the payoff `f` itself.
    Global {
        degree: usize,
        dim: usize,
        include_payoff: bool,
    },
    /// Local monomials on each cube of an equidistant `Q^d` partition of
    /// `[−R, R]^d`, centred at the cell midpoint and scaled by the cell
    /// half-width. Identically zero outside `[−R, R]^d`.
    Piecewise {
        degree: usize,
        dim: usize,
        radius: f64,
        cells_per_axis: usize,
    },
}

impl BasisSpec {
    /// Monomials of degree `≤ p` plus `f`.
    pub fn global_with_payoff(degree: usize, dim: usize) -> Self {
        Self::Global {
            degree,
            dim,
            include_payoff: true,
        }
    }

    pub fn global(degree: usize, dim: usize) -> Self {
        Self::Global {
            degree,
            dim,
            include_payoff: false,
        }
    }

    pub fn piecewise(degree: usize, dim: usize, radius: f64, cells_per_axis: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Precondition(format!("partition radius must be positive, got {radius}")));
        }
        if cells_per_axis == 0 {
            return Err(Error::Precondition("partition needs at least one cell per axis".into()));
        }
        let cells = (cells_per_axis as u128).checked_pow(dim as u32);
        if cells.map_or(true, |c| c > u32::MAX as u128) {
            return Err(Error::Precondition(format!(
                "partition with {cells_per_axis}^{dim} cells is too large"
            )));
        }
        Ok(Self::Piecewise {
            degree,
            dim,
            radius,
            cells_per_axis,
        })
    }

    pub fn degree(&self) -> usize {
        match *self {
            Self::Global { degree, .. } | Self::Piecewise { degree, .. } => degree,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::Global { dim, .. } | Self::Piecewise { dim, .. } => dim,
        }
    }

    pub fn includes_payoff(&self) -> bool {
        matches!(self, Self::Global { include_payoff: true, .. })
    }

    /// `C(p + d, d)`.
    pub fn monomial_count(&self) -> usize {
        binomial(self.degree() + self.dim(), self.dim())
    }

    /// Number of basis functions supported on one cell.
    pub fn local_size(&self) -> usize {
        self.monomial_count() + usize::from(self.includes_payoff())
    }

    pub fn cell_count(&self) -> usize {
        match *self {
            Self::Global { .. } => 1,
            Self::Piecewise {
                dim, cells_per_axis, ..
            } => cells_per_axis.pow(dim as u32),
        }
    }

    /// Total number of basis functions.
    pub fn size(&self) -> usize {
        self.cell_count() * self.local_size()
    }

    /// Cell containing `x` (axis 0 varies fastest), or `None` outside the
    /// partitioned cube.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        match *self {
            Self::Global { .. } => Some(0),
            Self::Piecewise {
                radius,
                cells_per_axis,
                ..
            } => {
                let width = 2.0 * radius / cells_per_axis as f64;
                let mut index = 0usize;
                let mut stride = 1usize;
                for &xi in x {
                    if !(xi >= -radius && xi <= radius) {
                        return None;
                    }
                    let c = libm::floor((xi + radius) / width) as usize;
                    index += c.min(cells_per_axis - 1) * stride;
                    stride *= cells_per_axis;
                }
                Some(index)
            }
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Exponent vectors in graded lexicographic order, flattened `q × d`.
pub fn monomial_exponents(degree: usize, dim: usize) -> Vec<u32> {
    fn fill(rest: usize, pos: usize, current: &mut Vec<u32>, out: &mut Vec<u32>) {
        if pos + 1 == current.len() {
            current[pos] = rest as u32;
            out.extend_from_slice(current);
            return;
        }
        for e in (0..=rest).rev() {
            current[pos] = e as u32;
            fill(rest - e, pos + 1, current, out);
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    let mut current = vec![0u32; dim];
    for total in 0..=degree {
        fill(total, 0, &mut current, &mut out);
    }
    out
}

/// Evaluates the local basis block for a state, with reusable scratch.
#[derive(Clone, Debug)]
pub struct BasisEvaluator {
    spec: BasisSpec,
    exponents: Vec<u32>,
    powers: Vec<f64>,
    shifted: Vec<f64>,
    local: Vec<f64>,
}

impl BasisEvaluator {
    pub fn new(spec: BasisSpec) -> Self {
        let d = spec.dim();
        Self {
            spec,
            exponents: monomial_exponents(spec.degree(), d),
            powers: vec![0.0; d * (spec.degree() + 1)],
            shifted: vec![0.0; d],
            local: vec![0.0; spec.local_size()],
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Returns the cell index and the non-zero block `ψ` restricted to that
    /// cell, or `None` when every basis function vanishes at `x`.
    /// `payoff` is only called for bases that include `f`.
    pub fn evaluate(&mut self, x: &[f64], payoff: impl FnOnce() -> f64) -> Option<(usize, &[f64])> {
        let cell = self.spec.locate(x)?;
        let d = self.spec.dim();
        let p = self.spec.degree();
        match self.spec {
            BasisSpec::Global { .. } => self.shifted.copy_from_slice(x),
            BasisSpec::Piecewise {
                radius,
                cells_per_axis,
                ..
            } => {
                let half = radius / cells_per_axis as f64;
                let mut rest = cell;
                for k in 0..d {
                    let c = rest % cells_per_axis;
                    rest /= cells_per_axis;
                    let centre = -radius + (2 * c + 1) as f64 * half;
                    self.shifted[k] = (x[k] - centre) / half;
                }
            }
        }
        for k in 0..d {
            let row = &mut self.powers[k * (p + 1)..(k + 1) * (p + 1)];
            row[0] = 1.0;
            for e in 1..=p {
                row[e] = row[e - 1] * self.shifted[k];
            }
        }
        let q = self.spec.monomial_count();
        for l in 0..q {
            let exps = &self.exponents[l * d..(l + 1) * d];
            let mut v = 1.0;
            for (k, &e) in exps.iter().enumerate() {
                v *= self.powers[k * (p + 1) + e as usize];
            }
            self.local[l] = v;
        }
        if self.spec.includes_payoff() {
            self.local[q] = payoff();
        }
        Some((cell, &self.local))
    }
}

/// Dense evaluation of the full basis vector at `x`.
pub fn evaluate_basis(spec: &BasisSpec, x: &[f64], payoff: impl FnOnce() -> f64) -> Vec<f64> {
    let mut full = vec![0.0; spec.size()];
    let local = spec.local_size();
    let mut eval = BasisEvaluator::new(*spec);
    if let Some((cell, block)) = eval.evaluate(x, payoff) {
        full[cell * local..(cell + 1) * local].copy_from_slice(block);
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        assert_eq!(monomial_exponents(2, 1), vec![0, 1, 2]);
        assert_eq!(
            monomial_exponents(2, 2),
            vec![0, 0, 1, 0, 0, 1, 2, 0, 1, 1, 0, 2]
        );
        assert_eq!(monomial_exponents(3, 5).len() / 5, 56);
    }

    #[test]
    fn sizes() {
        assert_eq!(BasisSpec::global_with_payoff(3, 1).size(), 5);
        assert_eq!(BasisSpec::global_with_payoff(3, 5).size(), 57);
        let pw = BasisSpec::piecewise(2, 2, 1.0, 3).unwrap();
        assert_eq!(pw.local_size(), 6);
        assert_eq!(pw.cell_count(), 9);
        assert_eq!(pw.size(), 54);
        assert!(BasisSpec::piecewise(1, 1, 0.0, 2).is_err());
        assert!(BasisSpec::piecewise(1, 1, 1.0, 0).is_err());
    }

    #[test]
    fn constant_basis() {
        assert_eq!(evaluate_basis(&BasisSpec::global(0, 1), &[0.3], || unreachable!()), vec![1.0]);
    }

    #[test]
    fn payoff_appended() {
        let f = |x: f64| 1.0 / libm::cosh(x) + 15.0 * libm::atan(x);
        let v = evaluate_basis(&BasisSpec::global_with_payoff(2, 1), &[0.0], || f(0.0));
        assert_eq!(v, vec![1.0, 0.0, 0.0, 1.0]);
        let v = evaluate_basis(&BasisSpec::global_with_payoff(2, 1), &[2.0], || 7.5);
        assert_eq!(v, vec![1.0, 2.0, 4.0, 7.5]);
    }

    #[test]
    fn piecewise_outside_is_zero() {
        let spec = BasisSpec::piecewise(1, 1, 1.0, 2).unwrap();
        assert_eq!(evaluate_basis(&spec, &[1.5], || 0.0), vec![0.0; 4]);
        assert_eq!(evaluate_basis(&spec, &[-1.0001], || 0.0), vec![0.0; 4]);
    }

    #[test]
    fn piecewise_local_monomials() {
        let spec = BasisSpec::piecewise(1, 1, 1.0, 2).unwrap();
        // cell 1 = [0, 1], centre 0.5, half-width 0.5
        assert_eq!(evaluate_basis(&spec, &[0.75], || 0.0), vec![0.0, 0.0, 1.0, 0.5]);
        assert_eq!(evaluate_basis(&spec, &[-1.0], || 0.0), vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!(spec.locate(&[1.0]), Some(1));
        let spec2 = BasisSpec::piecewise(0, 2, 1.0, 2).unwrap();
        assert_eq!(spec2.locate(&[0.5, -0.5]), Some(1));
        assert_eq!(spec2.locate(&[-0.5, 0.5]), Some(2));
    }
}
