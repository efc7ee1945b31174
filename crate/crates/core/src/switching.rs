//! Regime transition samplers and couplings of two regime chains.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{Generator, RateMatrix};

/// Largest admissible `dt * M_q * (m-1)` in first-order mode.
pub const FIRST_ORDER_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchMode {
    /// Categorical step with `P(i -> j) = q_ij(x) dt`.
    FirstOrder,
    /// Poisson proposals at the dominating rate `m M_q`, accepted through `h`.
    #[default]
    Thinning,
}

impl fmt::Display for SwitchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwitchMode::FirstOrder => "first-order",
            SwitchMode::Thinning => "thinning",
        })
    }
}

impl FromStr for SwitchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-order" => Ok(SwitchMode::FirstOrder),
            "thinning" => Ok(SwitchMode::Thinning),
            other => Err(Error::InvalidArgument(format!(
                "unknown switch mode {other:?} (expected first-order or thinning)"
            ))),
        }
    }
}

/// Rejects first-order steps that could produce negative probabilities.
pub fn check_mode(rates: &RateMatrix, dt: f64, mode: SwitchMode) -> Result<()> {
    check_mode_for(rates.bound(), rates.m(), dt, mode)
}

pub(crate) fn check_mode_for(bound: f64, states: usize, dt: f64, mode: SwitchMode) -> Result<()> {
    if mode == SwitchMode::FirstOrder {
        let load = dt * bound * (states.saturating_sub(1)) as f64;
        if load > FIRST_ORDER_LIMIT {
            return Err(Error::StepTooLarge(load));
        }
    }
    Ok(())
}

/// Jump displacement `h(x, i, z)` for an already evaluated generator.
///
/// The intervals `Δ_ij` of length `q_ij` (`j != i`) are laid end to end in
/// lexicographic `(i, j)` order starting at 0.
pub fn h_on_generator(q: &Generator, i: usize, z: f64) -> i64 {
    let m = q.size();
    let mut start = 0.0;
    for row in 0..i {
        start += q.exit_rate(row);
    }
    if z < start {
        return 0;
    }
    let mut end = start;
    for j in (0..m).filter(|&j| j != i) {
        end += q.rate(i, j);
        if z < end {
            return j as i64 - i as i64;
        }
    }
    0
}

/// `h(x, i, z)`: the regime displacement selected by the mark `z >= 0`.
pub fn h_function(rates: &RateMatrix, x: &[f64], i: usize, z: f64) -> i64 {
    h_on_generator(&rates.evaluate(x), i, z)
}

/// One regime step on a generator frozen over `[t, t+dt)`.
///
/// `bound` is the entry bound used for the thinning envelope `size * bound`.
pub fn step_on_generator<R: Rng + ?Sized>(
    q: &Generator,
    bound: f64,
    i: usize,
    dt: f64,
    mode: SwitchMode,
    rng: &mut R,
) -> Result<usize> {
    if dt <= 0.0 {
        return Ok(i);
    }
    match mode {
        SwitchMode::FirstOrder => {
            let stay = 1.0 - q.exit_rate(i) * dt;
            if stay < 0.0 || q.row(i).iter().enumerate().any(|(j, &r)| j != i && r < 0.0) {
                return Err(Error::StepTooLarge(q.exit_rate(i) * dt));
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, &r) in q.row(i).iter().enumerate() {
                if j == i {
                    continue;
                }
                acc += r * dt;
                if u < acc {
                    return Ok(j);
                }
            }
            Ok(i)
        }
        SwitchMode::Thinning => {
            let envelope = q.size() as f64 * bound;
            let mean = envelope * dt;
            if mean <= 0.0 {
                return Ok(i);
            }
            let epochs = Poisson::new(mean)
                .map_err(|e| Error::InvalidArgument(format!("poisson rate {mean}: {e}")))?
                .sample(rng) as u64;
            let mut state = i as i64;
            for _ in 0..epochs {
                let z = rng.random::<f64>() * envelope;
                state += h_on_generator(q, state as usize, z);
            }
            Ok(state as usize)
        }
    }
}

/// Samples the regime at `t + dt` given `α_t = i` and `X_t = x`.
pub fn step_regime<R: Rng + ?Sized>(
    rates: &RateMatrix,
    x: &[f64],
    i: usize,
    dt: f64,
    mode: SwitchMode,
    rng: &mut R,
) -> Result<usize> {
    rates.regimes().check(i)?;
    check_mode(rates, dt, mode)?;
    let q = rates.evaluate(x);
    step_on_generator(&q, rates.bound(), i, dt, mode, rng)
}

/// Generator of a pair of chains on `M x M`; state `(k, l)` has index `k*m + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledGenerator {
    m: usize,
    q: Generator,
}

impl CoupledGenerator {
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn index(&self, k: usize, l: usize) -> usize {
        k * self.m + l
    }

    #[inline]
    pub fn pair(&self, s: usize) -> (usize, usize) {
        (s / self.m, s % self.m)
    }

    pub fn rate(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        self.q
            .rate(self.index(from.0, from.1), self.index(to.0, to.1))
    }

    pub fn generator(&self) -> &Generator {
        &self.q
    }
}

/// Splits rates `a`, `b` into `(joint, a − joint, b − joint)` with
/// `joint = a ∧ b` rounded down to a multiple of the ulp of `a ∨ b`. Every
/// piece is then exact and `joint + solo` reproduces `a` and `b` bit for bit.
fn split(a: f64, b: f64) -> (f64, f64, f64) {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi <= 0.0 || lo <= 0.0 {
        return (0.0, a, b);
    }
    let ulp = hi.next_up() - hi;
    let joint = (lo / ulp).floor() * ulp;
    (joint, a - joint, b - joint)
}

/// Basic coupling of `Q(x1)` and `Q(x2)`.
///
/// With `q̂` the rates with zeroed diagonal, from `(k, l)`:
/// `(j, l)` at `(q̂_kj − q̂_lj)⁺`, `(k, j)` at `(q̂_lj − q̂_kj)⁺` and `(j, j)` at
/// `q̂_kj ∧ q̂_lj` (to within an ulp, so that the marginals are exact).
/// Coinciding targets accumulate.
pub fn basic_coupling(q1: &Generator, q2: &Generator) -> Result<CoupledGenerator> {
    let m = q1.size();
    if q2.size() != m {
        return Err(Error::Dimension(format!(
            "coupling {m}- and {}-state generators",
            q2.size()
        )));
    }
    for (label, q) in [("first", q1), ("second", q2)] {
        if let Some(v) = q.q_violations(None).first() {
            return Err(Error::QProperty(format!("{label} generator: {v}")));
        }
    }
    let off = |q: &Generator, a: usize, b: usize| if a == b { 0.0 } else { q.rate(a, b) };
    let mut out = Generator::zeros(m * m);
    let data = out.as_mut_slice();
    let size = m * m;
    for k in 0..m {
        for l in 0..m {
            let s = k * m + l;
            for j in 0..m {
                let a = off(q1, k, j);
                let b = off(q2, l, j);
                let (joint, solo1, solo2) = split(a, b);
                data[s * size + j * m + l] += solo1;
                data[s * size + k * m + j] += solo2;
                data[s * size + j * m + j] += joint;
            }
            // self-targets carry no rate; the diagonal is minus the exit rate
            data[s * size + s] = 0.0;
            let exit: f64 = data[s * size..(s + 1) * size].iter().sum();
            data[s * size + s] = -exit;
        }
    }
    Ok(CoupledGenerator { m, q: out })
}

/// Basic coupling evaluated at a pair of positions.
#[derive(Debug, Clone)]
pub struct CoupledRateMatrix {
    first: RateMatrix,
    second: RateMatrix,
}

impl CoupledRateMatrix {
    pub fn new(first: RateMatrix, second: RateMatrix) -> Result<Self> {
        if first.m() != second.m() {
            return Err(Error::Dimension(
                "coupled rate matrices differ in regime count".into(),
            ));
        }
        Ok(Self { first, second })
    }

    pub fn symmetric(rates: RateMatrix) -> Self {
        Self {
            first: rates.clone(),
            second: rates,
        }
    }

    pub fn evaluate(&self, x1: &[f64], x2: &[f64]) -> Result<CoupledGenerator> {
        basic_coupling(&self.first.evaluate(x1), &self.second.evaluate(x2))
    }

    /// Entry bound `M̃` of the product generator.
    pub fn bound(&self) -> f64 {
        self.first.bound() + self.second.bound()
    }

    pub fn states(&self) -> usize {
        self.first.m() * self.first.m()
    }
}

/// Steps a coupled pair under an evaluated product generator.
pub fn step_coupled<R: Rng + ?Sized>(
    q: &CoupledGenerator,
    bound: f64,
    state: (usize, usize),
    dt: f64,
    mode: SwitchMode,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let s = step_on_generator(&q.q, bound, q.index(state.0, state.1), dt, mode, rng)?;
    Ok(q.pair(s))
}

/// Independent-until-meeting coupling of two chains with a constant generator.
///
/// Equal regimes make one shared move; distinct regimes move independently.
pub fn meet_and_merge_step<R: Rng + ?Sized>(
    rates: &RateMatrix,
    i: usize,
    j: usize,
    dt: f64,
    mode: SwitchMode,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if !rates.is_constant() {
        return Err(Error::StateDependentRates);
    }
    rates.regimes().check(i)?;
    rates.regimes().check(j)?;
    check_mode(rates, dt, mode)?;
    let q = rates.evaluate(&[]);
    meet_and_merge_on(&q, rates.bound(), i, j, dt, mode, rng)
}

pub(crate) fn meet_and_merge_on<R: Rng + ?Sized>(
    q: &Generator,
    bound: f64,
    i: usize,
    j: usize,
    dt: f64,
    mode: SwitchMode,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if i == j {
        let next = step_on_generator(q, bound, i, dt, mode, rng)?;
        return Ok((next, next));
    }
    let a = step_on_generator(q, bound, i, dt, mode, rng)?;
    let b = step_on_generator(q, bound, j, dt, mode, rng)?;
    Ok((a, b))
}

/// Spectral gap of a constant generator: minus the largest real part among
/// the nonzero eigenvalues.
pub fn spectral_gap(q: &Generator) -> f64 {
    let m = q.size();
    if m < 2 {
        return 0.0;
    }
    let mat = DMatrix::from_row_slice(m, m, q.as_slice());
    let mut re: Vec<f64> = mat.complex_eigenvalues().iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    // re[0] is the zero eigenvalue of a conservative generator
    -re[1]
}
