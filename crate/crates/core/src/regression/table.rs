use super::basis::{BasisEvaluator, BasisSpec};
use crate::error::check_len;
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;

/// `T_A v`: `v` if `|v| ≤ A`, else `A·sgn(v)`.
#[inline]
pub fn truncate(v: f64, bound: f64) -> f64 {
    if v.abs() <= bound {
        v
    } else {
        bound.copysign(v)
    }
}

/// Fitted coefficients `α_{j,k}` for steps `j = 1..=J` and outputs
/// `k = 0..K`, stored `(j, k)`-major with `spec.size()` entries each.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTable {
    spec: BasisSpec,
    steps: usize,
    outputs: usize,
    bound: Option<f64>,
    coefficients: Vec<f64>,
}

impl CoefficientTable {
    pub fn new(
        spec: BasisSpec,
        steps: usize,
        outputs: usize,
        bound: Option<f64>,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        check_len("coefficient table", steps * outputs * spec.size(), coefficients.len())?;
        if let Some(b) = bound {
            if !(b > 0.0) {
                return Err(Error::Precondition(format!("truncation bound must be positive, got {b}")));
            }
        }
        Ok(Self {
            spec,
            steps,
            outputs,
            bound,
            coefficients,
        })
    }

    pub fn zeros(spec: BasisSpec, steps: usize, outputs: usize) -> Self {
        Self {
            spec,
            steps,
            outputs,
            bound: None,
            coefficients: alloc::vec![0.0; steps * outputs * spec.size()],
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn raw(&self) -> &[f64] {
        &self.coefficients
    }

    fn offset(&self, j: usize, k: usize) -> usize {
        ((j - 1) * self.outputs + k) * self.spec.size()
    }

    /// `α_{j,k}` for `j = 1..=J`, `k = 0..K`.
    pub fn coefficients(&self, j: usize, k: usize) -> Result<&[f64]> {
        self.check_index(j, k)?;
        let start = self.offset(j, k);
        Ok(&self.coefficients[start..start + self.spec.size()])
    }

    fn check_index(&self, j: usize, k: usize) -> Result<()> {
        if j == 0 || j > self.steps || k >= self.outputs {
            return Err(Error::Precondition(format!(
                "coefficient index ({j}, {k}) outside 1..={} × 0..{}",
                self.steps, self.outputs
            )));
        }
        Ok(())
    }

    /// Truncated prediction `T_A(α_{j,k}·ψ(x))`.
    pub fn predict(&self, j: usize, k: usize, x: &[f64], payoff: impl FnOnce() -> f64) -> Result<f64> {
        self.check_index(j, k)?;
        check_len("state", self.spec.dim(), x.len())?;
        let mut eval = BasisEvaluator::new(self.spec);
        Ok(match eval.evaluate(x, payoff) {
            Some((cell, psi)) => self.predict_local(j, k, cell, psi),
            None => 0.0,
        })
    }

    /// Prediction from an already evaluated local basis block; indices are
    /// not checked.
    #[inline]
    pub fn predict_local(&self, j: usize, k: usize, cell: usize, psi: &[f64]) -> f64 {
        let q = psi.len();
        let start = self.offset(j, k) + cell * q;
        let alpha = &self.coefficients[start..start + q];
        let raw: f64 = alpha.iter().zip(psi).map(|(a, p)| a * p).sum();
        match self.bound {
            Some(b) => truncate(raw, b),
            None => raw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate(0.5, 1.0), 0.5);
        assert_eq!(truncate(-2.0, 1.0), -1.0);
        assert_eq!(truncate(1.0, 1.0), 1.0);
        assert_eq!(truncate(3.7, 1.0), 1.0);
        assert_eq!(truncate(-0.4, 1.0), -0.4);
    }

    #[test]
    fn predict_examples() {
        let spec = BasisSpec::global(0, 1);
        let zero = CoefficientTable::zeros(spec, 2, 1);
        assert_eq!(zero.predict(1, 0, &[4.0], || 0.0).unwrap(), 0.0);

        let t = CoefficientTable::new(spec, 1, 1, Some(1.0), vec![3.7]).unwrap();
        assert_eq!(t.predict(1, 0, &[0.0], || 0.0).unwrap(), 1.0);
        let t = CoefficientTable::new(spec, 1, 1, Some(1.0), vec![-0.4]).unwrap();
        assert_eq!(t.predict(1, 0, &[0.0], || 0.0).unwrap(), -0.4);

        assert!(t.predict(0, 0, &[0.0], || 0.0).is_err());
        assert!(t.predict(2, 0, &[0.0], || 0.0).is_err());
        assert!(t.predict(1, 1, &[0.0], || 0.0).is_err());
        assert!(CoefficientTable::new(spec, 1, 1, None, vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn truncated_prediction_is_bounded(
            alpha in prop::collection::vec(-100.0f64..100.0, 4),
            x in -5.0f64..5.0,
            bound in 0.01f64..10.0,
        ) {
            let spec = BasisSpec::global(3, 1);
            let t = CoefficientTable::new(spec, 1, 1, Some(bound), alpha).unwrap();
            let v = t.predict(1, 0, &[x], || 0.0).unwrap();
            prop_assert!(v.abs() <= bound);
        }

        #[test]
        fn truncate_is_idempotent_and_bounded(v in -1e6f64..1e6, bound in 1e-3f64..1e3) {
            let t = truncate(v, bound);
            prop_assert!(t.abs() <= bound);
            prop_assert_eq!(truncate(t, bound), t);
        }
    }
}
