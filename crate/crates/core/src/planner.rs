//! Experiment parameters `(J, N, N0, Q, R)` from a target precision `ε`.
//!
//! Every quantity has the form `[K / ε^e]^{1/D}` where the exponents of the
//! constants `B_ν, d, m, c_{p,d}, (p+1)!` and of `1/ε` are affine in `ν`
//! and `D = dν + 2(p+1)(d + 2ν)`. Exponents are stored as `(a, b)` meaning
//! `a + bν`, which makes the limit `ν → ∞` exact.

use crate::estimators::{EstimatorKind, MlmcOptions};
use crate::regression::basis::binomial;
use crate::{Error, Result};
use alloc::format;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine(f64, f64);

impl Affine {
    fn eval(self, nu: f64) -> f64 {
        self.0 + self.1 * nu
    }
}

/// Ratio of two affine functions of `ν`, taking the limit for `ν = ∞`.
fn ratio(num: Affine, den: Affine, nu: f64) -> f64 {
    if nu.is_infinite() {
        num.1 / den.1
    } else {
        num.eval(nu) / den.eval(nu)
    }
}

/// Exponents of `B_ν, d, m, c_{p,d}, (p+1)!` and `1/ε` inside one bracket.
#[derive(Clone, Copy, Debug)]
struct Bracket {
    b: Affine,
    d: Affine,
    m: Affine,
    c: Affine,
    fact: Affine,
    eps: Affine,
}

#[derive(Clone, Copy)]
struct Dims {
    d: f64,
    m: f64,
    q: f64,
    c: f64,
    fact: f64,
}

impl Dims {
    fn new(d: usize, m: usize, p: usize) -> Self {
        let fact = (1..=p + 1).fold(1.0, |acc, k| acc * k as f64);
        Self {
            d: d as f64,
            m: m as f64,
            q: (p + 1) as f64,
            c: binomial(p + d, d) as f64,
            fact,
        }
    }

    fn denominator(&self) -> Affine {
        Affine(2.0 * self.q * self.d, self.d + 4.0 * self.q)
    }
}

fn evaluate(bracket: &Bracket, dims: &Dims, inputs: &PlanInputs) -> f64 {
    let nu = inputs.nu;
    let den = dims.denominator();
    let constants = [
        (bracket.b, libm::log(inputs.b_nu)),
        (bracket.d, libm::log(dims.d)),
        (bracket.m, libm::log(dims.m)),
        (bracket.c, libm::log(dims.c)),
        (bracket.fact, libm::log(dims.fact)),
        (bracket.eps, -libm::log(inputs.epsilon)),
    ];
    let log_value: f64 = constants
        .iter()
        .filter(|(_, log)| *log != 0.0)
        .map(|(e, log)| ratio(*e, den, nu) * log)
        .sum();
    libm::exp(log_value)
}

fn integral_brackets(dims: &Dims) -> [Bracket; 4] {
    let Dims { d, q, .. } = *dims;
    let q_bracket = Bracket {
        b: Affine(4.0 * q, 0.0),
        d: Affine(4.0 * q, 2.0 + 4.0 * q),
        m: Affine(2.0 * q, 1.0),
        c: Affine(-4.0 * q, -2.0),
        fact: Affine(0.0, -4.0),
        eps: Affine(4.0 * q, 2.0),
    };
    let n_bracket = Bracket {
        b: Affine(2.0 * d * q, 0.0),
        d: Affine(4.0 * d * q, 2.0 * d + 2.0 * q * (d + 2.0)),
        m: Affine(2.0 * q * d, d + 2.0 * q),
        c: Affine(-2.0 * d * q, -d),
        fact: Affine(0.0, -2.0 * d),
        eps: Affine(4.0 * q * d, 2.0 * d + 4.0 * q),
    };
    let n0_bracket = Bracket {
        c: Affine(0.0, 4.0 * q),
        ..n_bracket
    };
    let r_bracket = Bracket {
        b: Affine(d + 4.0 * q, 0.0),
        d: Affine(-2.0 * q * (d - 2.0), 0.0),
        m: Affine(2.0 * q, 0.0),
        c: Affine(-4.0 * q, 0.0),
        fact: Affine(2.0 * d, 0.0),
        eps: Affine(4.0 * q, 0.0),
    };
    [q_bracket, n_bracket, n0_bracket, r_bracket]
}

fn series_brackets(dims: &Dims) -> [Bracket; 4] {
    let Dims { d, q, .. } = *dims;
    let q_bracket = Bracket {
        b: Affine(4.0 * q, 0.0),
        d: Affine(0.0, 4.0 * q),
        m: Affine(2.0 * q, 1.0),
        c: Affine(-4.0 * q, -2.0),
        fact: Affine(0.0, -4.0),
        eps: Affine(2.0 * q, 3.0),
    };
    let n_bracket = Bracket {
        b: Affine(2.0 * d * q, 0.0),
        d: Affine(0.0, 2.0 * d * q),
        m: Affine(2.0 * q * d, d + 2.0 * q),
        c: Affine(-2.0 * d * q, -d),
        fact: Affine(0.0, -2.0 * d),
        eps: Affine(4.0 * d * q, 3.0 * d + 6.0 * q),
    };
    let n0_bracket = Bracket {
        c: Affine(0.0, 4.0 * q),
        ..n_bracket
    };
    let r_bracket = Bracket {
        b: Affine(d + 4.0 * q, 0.0),
        d: Affine(-2.0 * d * q, 0.0),
        m: Affine(2.0 * q, 0.0),
        c: Affine(-4.0 * q, 0.0),
        fact: Affine(2.0 * d, 0.0),
        eps: Affine(2.0 * q - d, 0.0),
    };
    [q_bracket, n_bracket, n0_bracket, r_bracket]
}

/// Power `γ` of `1/ε` in the training-path count `N`.
pub fn training_exponent(approach: EstimatorKind, d: usize, p: usize, nu: f64) -> Result<f64> {
    let dims = Dims::new(d, 1, p);
    let n = match approach {
        EstimatorKind::Integral => integral_brackets(&dims)[1],
        EstimatorKind::Series => series_brackets(&dims)[1],
        other => return Err(Error::Plan(format!("no training phase for {}", other.name()))),
    };
    Ok(ratio(n.eps, dims.denominator(), nu))
}

/// Power `γ` in the predicted cost `ε^{−γ}`.
pub fn complexity_exponent(approach: EstimatorKind, d: usize, p: usize, nu: f64) -> Result<f64> {
    let dims = Dims::new(d, 1, p);
    let (d, q) = (dims.d, dims.q);
    let num = match approach {
        EstimatorKind::Integral => Affine(10.0 * q * d, 5.0 * d + 8.0 * q),
        EstimatorKind::Series => Affine(8.0 * q * d, 7.0 * d + 10.0 * q),
        EstimatorKind::Smc => return Ok(3.0),
        EstimatorKind::Mlmc => return Ok(2.0),
    };
    Ok(ratio(num, dims.denominator(), nu))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanInputs {
    pub epsilon: f64,
    pub d: usize,
    pub m: usize,
    pub p: usize,
    /// Tail exponent `ν`; `f64::INFINITY` selects the limiting exponents.
    pub nu: f64,
    pub b_nu: f64,
    pub approach: EstimatorKind,
    /// Absolute constant applied to `N` and `N0`.
    pub multiplier: f64,
    /// Apply the `√log` factor of the integral approach.
    pub log_correction: bool,
}

impl PlanInputs {
    pub fn new(epsilon: f64, d: usize, m: usize, p: usize, approach: EstimatorKind) -> Self {
        Self {
            epsilon,
            d,
            m,
            p,
            nu: f64::INFINITY,
            b_nu: 1.0,
            approach,
            multiplier: 1.0,
            log_correction: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Plan(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.d == 0 || self.m == 0 {
            return Err(Error::Plan("d and m must be positive".into()));
        }
        if !(self.nu > 0.0) {
            return Err(Error::Plan(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.b_nu > 0.0 && self.b_nu.is_finite()) {
            return Err(Error::Plan(format!("B_nu must be positive, got {}", self.b_nu)));
        }
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(Error::Plan(format!("multiplier must be positive, got {}", self.multiplier)));
        }
        let two_q = 2.0 * (self.p + 1) as f64;
        let d = self.d as f64;
        if matches!(self.approach, EstimatorKind::Integral | EstimatorKind::Series) && two_q <= d {
            return Err(Error::Plan(format!(
                "constraint 2(p+1) > d violated: 2(p+1) = {two_q}, d = {}",
                self.d
            )));
        }
        match self.approach {
            EstimatorKind::Integral => {
                let bound = 2.0 * d * (self.p + 1) as f64 / (two_q - d);
                if self.nu <= bound {
                    return Err(Error::Plan(format!(
                        "constraint nu > 2d(p+1)/(2(p+1)-d) violated: nu = {}, bound = {bound}",
                        self.nu
                    )));
                }
            }
            EstimatorKind::Series => {
                let bound = two_q / (two_q - d);
                if self.nu <= bound {
                    return Err(Error::Plan(format!(
                        "constraint nu > 2(p+1)/(2(p+1)-d) violated: nu = {}, bound = {bound}",
                        self.nu
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A concrete experiment configuration. `n_train` is zero for methods
/// without a training phase; `cells`/`radius` are set only by the
/// theorem-based planners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plan {
    pub approach: EstimatorKind,
    pub epsilon: f64,
    pub steps: usize,
    pub n_train: u64,
    pub n_test: u64,
    pub degree: usize,
    pub cells: Option<usize>,
    pub radius: Option<f64>,
    pub cost_exponent: f64,
}

/// `J = ⌈1/ε⌉`.
pub fn time_steps(epsilon: f64) -> usize {
    libm::ceil(1.0 / epsilon) as usize
}

fn to_count(value: f64, what: &str) -> Result<u64> {
    let v = libm::ceil(value);
    if !v.is_finite() || v < 1.0 || v > 1e18 {
        return Err(Error::Plan(format!("{what} = {value} is out of range")));
    }
    Ok(v as u64)
}

fn plan_from_brackets(inputs: &PlanInputs, brackets: [Bracket; 4], log_factor: bool) -> Result<Plan> {
    let dims = Dims::new(inputs.d, inputs.m, inputs.p);
    let [qb, nb, n0b, rb] = brackets;
    let scale = if log_factor {
        let e = ratio(nb.eps, dims.denominator(), inputs.nu);
        libm::sqrt(e * -libm::log(inputs.epsilon))
    } else {
        1.0
    };
    let q = to_count(evaluate(&qb, &dims, inputs), "Q")?;
    let n = to_count(inputs.multiplier * scale * evaluate(&nb, &dims, inputs), "N")?;
    let n0 = to_count(inputs.multiplier * scale * evaluate(&n0b, &dims, inputs), "N0")?;
    Ok(Plan {
        approach: inputs.approach,
        epsilon: inputs.epsilon,
        steps: time_steps(inputs.epsilon),
        n_train: n,
        n_test: n0,
        degree: inputs.p,
        cells: Some(q as usize),
        radius: Some(evaluate(&rb, &dims, inputs)),
        cost_exponent: complexity_exponent(inputs.approach, inputs.d, inputs.p, inputs.nu)?,
    })
}

pub fn plan_integral(inputs: &PlanInputs) -> Result<Plan> {
    if inputs.approach != EstimatorKind::Integral {
        return Err(Error::Plan("plan_integral needs the integral approach".into()));
    }
    inputs.validate()?;
    let dims = Dims::new(inputs.d, inputs.m, inputs.p);
    plan_from_brackets(inputs, integral_brackets(&dims), inputs.log_correction)
}

/// As [`plan_integral`]; the series solution carries no log factor.
pub fn plan_series(inputs: &PlanInputs) -> Result<Plan> {
    if inputs.approach != EstimatorKind::Series {
        return Err(Error::Plan("plan_series needs the series approach".into()));
    }
    inputs.validate()?;
    let dims = Dims::new(inputs.d, inputs.m, inputs.p);
    plan_from_brackets(inputs, series_brackets(&dims), false)
}

fn smc_paths(epsilon: f64) -> Result<u64> {
    to_count(256.0 / (epsilon * epsilon), "N0")
}

fn smc_plan(epsilon: f64) -> Result<Plan> {
    Ok(Plan {
        approach: EstimatorKind::Smc,
        epsilon,
        steps: time_steps(epsilon),
        n_train: 0,
        n_test: smc_paths(epsilon)?,
        degree: 0,
        cells: None,
        radius: None,
        cost_exponent: 3.0,
    })
}

/// Dispatches on `inputs.approach`; SMC uses `N0 = ⌈multiplier·ε⁻²⌉`.
pub fn plan(inputs: &PlanInputs) -> Result<Plan> {
    match inputs.approach {
        EstimatorKind::Integral => plan_integral(inputs),
        EstimatorKind::Series => plan_series(inputs),
        EstimatorKind::Smc => {
            inputs.validate()?;
            let mut out = smc_plan(inputs.epsilon)?;
            out.n_test = to_count(inputs.multiplier / (inputs.epsilon * inputs.epsilon), "N0")?.max(2);
            Ok(out)
        }
        EstimatorKind::Mlmc => Err(Error::Plan("MLMC chooses its own levels and path counts".into())),
    }
}

fn check_recipe_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Plan(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

fn recipe(
    epsilon: f64,
    approach: EstimatorKind,
    factor: f64,
    n_coef: f64,
    n0_coef: f64,
    exponent: f64,
    d: usize,
) -> Result<Plan> {
    let scaled = libm::pow(epsilon, -exponent);
    Ok(Plan {
        approach,
        epsilon,
        steps: time_steps(epsilon),
        n_train: (factor as u64) * to_count(n_coef * scaled, "N")?,
        n_test: (factor as u64) * to_count(n0_coef * scaled, "N0")?,
        degree: 3,
        cells: None,
        radius: None,
        cost_exponent: complexity_exponent(approach, d, 3, f64::INFINITY)?,
    })
}

/// Fixed recipe for the scalar benchmark with a cubic global basis.
pub fn plan_paper_1d(epsilon: f64, approach: EstimatorKind) -> Result<Plan> {
    check_recipe_epsilon(epsilon)?;
    match approach {
        EstimatorKind::Integral => recipe(epsilon, approach, 256.0, 0.6342, 2.5367, 1.0588, 1),
        EstimatorKind::Series => recipe(epsilon, approach, 256.0, 0.6342, 2.5367, 1.5882, 1),
        EstimatorKind::Smc => smc_plan(epsilon),
        EstimatorKind::Mlmc => Err(Error::Plan("use mlmc_recipe for MLMC".into())),
    }
}

/// Fixed recipe for the five-dimensional benchmark with a cubic global basis.
pub fn plan_paper_5d(epsilon: f64, approach: EstimatorKind) -> Result<Plan> {
    check_recipe_epsilon(epsilon)?;
    match approach {
        EstimatorKind::Integral => recipe(epsilon, approach, 1.0, 35.9733, 2014.5030, 1.2381, 5),
        EstimatorKind::Series => recipe(epsilon, approach, 4.0, 4.9044, 274.6480, 1.8571, 5),
        EstimatorKind::Smc => smc_plan(epsilon),
        EstimatorKind::Mlmc => Err(Error::Plan("use mlmc_recipe for MLMC".into())),
    }
}

/// MLMC settings of the benchmarks: refinement 4 and `10³` (scalar) or
/// `10⁴` (otherwise) initial paths per level.
pub fn mlmc_recipe(epsilon: f64, dim: usize) -> MlmcOptions {
    MlmcOptions::new(epsilon, 4, if dim == 1 { 1_000 } else { 10_000 })
}
