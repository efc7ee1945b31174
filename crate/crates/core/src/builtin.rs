//! The two reference models, registered as `"example1"` and `"example2"`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    CoefficientField, Functional, Functionals, LyapunovSpec, ModelSpec, RateMatrix, RegimeField,
};
use crate::particle::{InitLaw, PositionLaw, RegimeLaw};

pub const NAMES: [&str; 2] = ["example1", "example2"];

/// Bound on the entries of the second model's generator.
pub const EXAMPLE2_RATE_BOUND: f64 = 17.0 / 6.0;

/// Which generator a builtin model runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Switching {
    /// The model's own generator.
    #[default]
    Default,
    /// No switching; regimes stay where they start.
    Frozen,
    /// Constant `[[-1, 1], [1, -1]]`.
    Symmetric,
}

impl fmt::Display for Switching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Switching::Default => "default",
            Switching::Frozen => "none",
            Switching::Symmetric => "symmetric",
        })
    }
}

impl FromStr for Switching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Switching::Default),
            "none" | "frozen" => Ok(Switching::Frozen),
            "symmetric" => Ok(Switching::Symmetric),
            other => Err(Error::InvalidArgument(format!(
                "unknown switching `{other}` (expected default, none or symmetric)"
            ))),
        }
    }
}

/// Mean, `|x|^2` and `|x|` on the line.
fn scalar_functionals() -> Result<std::sync::Arc<Functionals>> {
    Functionals::new(
        1,
        vec![
            Functional::mean(1),
            Functional::second_moment(),
            Functional::abs_moment(),
        ],
    )
}

fn symmetric_rates() -> Result<RateMatrix> {
    RateMatrix::constant_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]])
}

/// `dX = b(X, μ, α)dt + σ(X, μ, α)dW` on `R` with
/// `b(x,μ,1) = −x³ − 2∫(x+βy)μ(dy)`, `σ(x,μ,1) = ∫(x+βy)μ(dy)`,
/// `b(x,μ,2) = −2x`, `σ(x,μ,2) = x` and constant `Q = [[-1,1],[2,-2]]`.
pub fn example1(beta: f64, switching: Switching) -> Result<ModelSpec> {
    if !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "beta must be finite, got {beta}"
        )));
    }
    let coefficients = CoefficientField::new(
        1,
        1,
        move |_, x, stats, i, out| {
            let x = x[0];
            out[0] = match i {
                0 => -x * x * x - 2.0 * (x + beta * stats.scalar(0)),
                _ => -2.0 * x,
            };
        },
        move |_, x, stats, i, out| {
            out[0] = match i {
                0 => x[0] + beta * stats.scalar(0),
                _ => x[0],
            };
        },
    )?;
    let rates = match switching {
        Switching::Default => RateMatrix::constant_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]])?,
        Switching::Frozen => RateMatrix::frozen(2)?,
        Switching::Symmetric => symmetric_rates()?,
    };
    ModelSpec::new("example1", coefficients, rates, scalar_functionals()?)
}

/// `V = φ = |x|^2`, `Ṽ = |·|^2`, `λ1 = −2`, `λ2 = 2β²`, `γ = θ = 2 − 2β²`.
pub fn example1_lyapunov(beta: f64) -> LyapunovSpec {
    let square = || {
        RegimeField::of_position(|x| x[0] * x[0])
            .with_gradient(|x, _, g| g[0] = 2.0 * x[0])
            .with_hessian(|_, _, h| h[0] = 2.0)
    };
    let rate = 2.0 - 2.0 * beta * beta;
    let mut lyap = LyapunovSpec::new(square(), square(), -2.0, 2.0 * beta * beta)
        .with_coupled(square())
        .with_gamma(rate)
        .with_theta(rate);
    lyap.k_hat = Some(4.0);
    lyap
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Second model: `b(x,μ,1) = −x³ − x`, `σ(x,μ,1) = ∫yμ(dy)`,
/// `b(x,μ,2) = −x/2`, `σ(x,μ,2) = x + 2∫yμ(dy)` and
/// `Q(x) = [[−1/3 − cos(x)/4, 1/3 + cos(x)/4], [7/3 + sin(x)/2, −7/3 − sin(x)/2]]`.
pub fn example2(switching: Switching) -> Result<ModelSpec> {
    let coefficients = CoefficientField::new(
        1,
        1,
        |_, x, _, i, out| {
            let x = x[0];
            out[0] = match i {
                0 => -x * x * x - x,
                _ => -0.5 * x,
            };
        },
        |_, x, stats, i, out| {
            let m = stats.scalar(0);
            out[0] = match i {
                0 => m,
                _ => x[0] + 2.0 * m,
            };
        },
    )?;
    let rates = match switching {
        Switching::Default => RateMatrix::state_dependent(2, EXAMPLE2_RATE_BOUND, |x, q| {
            let up = 1.0 / 3.0 + 0.25 * x[0].cos();
            let down = 7.0 / 3.0 + 0.5 * x[0].sin();
            q.copy_from_slice(&[-up, up, down, -down]);
        })?,
        Switching::Frozen => RateMatrix::frozen(2)?,
        Switching::Symmetric => symmetric_rates()?,
    };
    ModelSpec::new("example2", coefficients, rates, scalar_functionals()?)
}

/// `V(x,1) = |x|`, `V(x,2) = 2|x|`, `φ = V̂ = |·|`, `λ1 = −5/12`, `λ2 = 0`,
/// `γ = 1`, `θ = 1/2`. The kink uses `sign(0) = 0` and a zero Hessian.
pub fn example2_lyapunov() -> LyapunovSpec {
    let scale = |i: usize| if i == 0 { 1.0 } else { 2.0 };
    let v = RegimeField::new(move |x, i| scale(i) * x[0].abs())
        .with_gradient(move |x, i, g| g[0] = scale(i) * sign(x[0]))
        .with_hessian(|_, _, h| h[0] = 0.0);
    let abs = || {
        RegimeField::of_position(|x| x[0].abs())
            .with_gradient(|x, _, g| g[0] = sign(x[0]))
            .with_hessian(|_, _, h| h[0] = 0.0)
    };
    let mut lyap = LyapunovSpec::new(v, abs(), -5.0 / 12.0, 0.0)
        .with_coupled(abs())
        .with_gamma(1.0)
        .with_theta(0.5);
    lyap.k_hat = Some(2.0);
    lyap
}

/// Model by registered name. `beta` is ignored by `example2`.
pub fn model(name: &str, beta: f64, switching: Switching) -> Result<ModelSpec> {
    match name {
        "example1" => example1(beta, switching),
        "example2" => example2(switching),
        other => Err(unknown(other)),
    }
}

pub fn lyapunov(name: &str, beta: f64) -> Result<LyapunovSpec> {
    match name {
        "example1" => Ok(example1_lyapunov(beta)),
        "example2" => Ok(example2_lyapunov()),
        other => Err(unknown(other)),
    }
}

/// `X0 ~ Unif[-1, 1]`, `α0` uniform over both regimes.
pub fn default_init(name: &str) -> Result<InitLaw> {
    if !NAMES.contains(&name) {
        return Err(unknown(name));
    }
    InitLaw::new(
        PositionLaw::UniformBox {
            lo: vec![-1.0],
            hi: vec![1.0],
        },
        RegimeLaw::Uniform(2),
    )
}

fn unknown(name: &str) -> Error {
    Error::InvalidArgument(format!(
        "unknown model `{name}` (builtins: {})",
        NAMES.join(", ")
    ))
}
