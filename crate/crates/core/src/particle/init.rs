use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A particle: position and regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub x: Vec<f64>,
    pub regime: usize,
}

/// Draws the `k`-th initial particle from its own stream.
pub trait InitSampler: Sync {
    fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> ParticleState;
}

impl<F> InitSampler for F
where
    F: Fn(usize, &mut ChaCha8Rng) -> ParticleState + Sync,
{
    fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> ParticleState {
        self(k, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PositionLaw {
    Point(Vec<f64>),
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, sd: f64 },
}

impl PositionLaw {
    pub fn dim(&self) -> usize {
        match self {
            PositionLaw::Point(x) => x.len(),
            PositionLaw::UniformBox { lo, .. } => lo.len(),
            PositionLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// `E|X|^2` under this law.
    pub fn second_moment(&self) -> f64 {
        match self {
            PositionLaw::Point(x) => x.iter().map(|v| v * v).sum(),
            PositionLaw::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| (a * a + a * b + b * b) / 3.0)
                .sum(),
            PositionLaw::Gaussian { mean, sd } => mean.iter().map(|m| m * m + sd * sd).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegimeLaw {
    Fixed(usize),
    /// Uniform over the first `m` regimes.
    Uniform(usize),
    Weights(Vec<f64>),
}

/// Product initial law of position and regime.
#[derive(Debug, Clone, PartialEq)]
pub struct InitLaw {
    pub position: PositionLaw,
    pub regime: RegimeLaw,
}

impl InitLaw {
    pub fn new(position: PositionLaw, regime: RegimeLaw) -> Result<Self> {
        match &position {
            PositionLaw::UniformBox { lo, hi }
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a > b) =>
            {
                return Err(Error::InvalidArgument(
                    "uniform box needs lo <= hi componentwise".into(),
                ));
            }
            PositionLaw::Gaussian { sd, .. } if !(*sd >= 0.0) => {
                return Err(Error::InvalidArgument("gaussian sd must be >= 0".into()));
            }
            _ => {}
        }
        match &regime {
            RegimeLaw::Uniform(0) => {
                return Err(Error::InvalidArgument(
                    "uniform regime law over 0 regimes".into(),
                ))
            }
            RegimeLaw::Weights(w)
                if w.is_empty()
                    || w.iter().any(|v| !(*v >= 0.0))
                    || w.iter().sum::<f64>() <= 0.0 =>
            {
                return Err(Error::InvalidArgument(
                    "regime weights must be nonnegative with positive sum".into(),
                ));
            }
            _ => {}
        }
        Ok(Self { position, regime })
    }

    pub fn point(x: &[f64], regime: usize) -> Self {
        Self {
            position: PositionLaw::Point(x.to_vec()),
            regime: RegimeLaw::Fixed(regime),
        }
    }

    /// Largest regime index this law can produce.
    pub fn max_regime(&self) -> usize {
        match &self.regime {
            RegimeLaw::Fixed(i) => *i,
            RegimeLaw::Uniform(m) => m - 1,
            RegimeLaw::Weights(w) => w.len() - 1,
        }
    }
}

impl InitSampler for InitLaw {
    fn sample(&self, _k: usize, rng: &mut ChaCha8Rng) -> ParticleState {
        let x = match &self.position {
            PositionLaw::Point(x) => x.clone(),
            PositionLaw::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
            PositionLaw::Gaussian { mean, sd } => mean
                .iter()
                .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        let regime = match &self.regime {
            RegimeLaw::Fixed(i) => *i,
            RegimeLaw::Uniform(m) => rng.random_range(0..*m),
            RegimeLaw::Weights(w) => {
                let total: f64 = w.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = w.len() - 1;
                for (j, wj) in w.iter().enumerate() {
                    acc += wj;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                pick
            }
        };
        ParticleState { x, regime }
    }
}
