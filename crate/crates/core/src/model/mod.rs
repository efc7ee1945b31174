//! Model definitions: coefficients, switching generator, law functionals and
//! Lyapunov data.

mod lyapunov_spec;
mod rates;
mod stats;

use std::fmt;
use std::sync::Arc;

pub use lyapunov_spec::{fd_step, LyapunovSpec, RegimeField};
pub use rates::{
    validate_q_property, Generator, ProbeCheck, QViolation, RateMatrix, RegimeSet,
    ValidationReport, ROW_SUM_TOL,
};
pub(crate) use stats::{chunked_sum, CHUNK};
pub use stats::{Functional, Functionals, MeasureStats};

use crate::error::{Error, Result};

/// `(t, x, stats, regime, out)`; writes `d` (drift) or `d*n` (diffusion, row-major) values.
pub type CoefficientFn = dyn Fn(f64, &[f64], &MeasureStats, usize, &mut [f64]) + Send + Sync;

/// Drift `b(t,x,μ,i)` and diffusion `σ(t,x,μ,i)`.
#[derive(Clone)]
pub struct CoefficientField {
    d: usize,
    n: usize,
    drift: Arc<CoefficientFn>,
    diffusion: Arc<CoefficientFn>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientField(d={}, n={})", self.d, self.n)
    }
}

impl CoefficientField {
    pub fn new<B, S>(d: usize, n: usize, drift: B, diffusion: S) -> Result<Self>
    where
        B: Fn(f64, &[f64], &MeasureStats, usize, &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &MeasureStats, usize, &mut [f64]) + Send + Sync + 'static,
    {
        if d == 0 || n == 0 {
            return Err(Error::Dimension(
                "state and noise dimensions must be >= 1".into(),
            ));
        }
        Ok(Self {
            d,
            n,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
        })
    }

    /// State dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Brownian dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], stats: &MeasureStats, i: usize, out: &mut [f64]) {
        (self.drift)(t, x, stats, i, out)
    }

    #[inline]
    pub fn diffusion_into(
        &self,
        t: f64,
        x: &[f64],
        stats: &MeasureStats,
        i: usize,
        out: &mut [f64],
    ) {
        (self.diffusion)(t, x, stats, i, out)
    }
}

/// A complete switching McKean–Vlasov model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    name: String,
    coefficients: CoefficientField,
    rates: RateMatrix,
    functionals: Arc<Functionals>,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        coefficients: CoefficientField,
        rates: RateMatrix,
        functionals: Arc<Functionals>,
    ) -> Result<Self> {
        if functionals.dim() != coefficients.d() {
            return Err(Error::Dimension(format!(
                "functionals act on R^{} but the state is R^{}",
                functionals.dim(),
                coefficients.d()
            )));
        }
        Ok(Self {
            name: name.into(),
            coefficients,
            rates,
            functionals,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coefficients
    }

    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }

    pub fn functionals(&self) -> &Arc<Functionals> {
        &self.functionals
    }

    pub fn regimes(&self) -> RegimeSet {
        self.rates.regimes()
    }

    pub fn d(&self) -> usize {
        self.coefficients.d()
    }

    pub fn n(&self) -> usize {
        self.coefficients.n()
    }

    /// Same coefficients with a different switching generator.
    pub fn with_rates(&self, rates: RateMatrix) -> Self {
        Self {
            rates,
            ..self.clone()
        }
    }
}

/// Evaluates `(b, σ)` at one point. `σ` is returned row-major, `d x n`.
pub fn evaluate_drift_diffusion(
    spec: &ModelSpec,
    t: f64,
    x: &[f64],
    stats: &MeasureStats,
    i: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut b = vec![0.0; spec.d()];
    let mut s = vec![0.0; spec.d() * spec.n()];
    evaluate_into(spec, t, x, stats, i, &mut b, &mut s)?;
    Ok((b, s))
}

pub(crate) fn evaluate_into(
    spec: &ModelSpec,
    t: f64,
    x: &[f64],
    stats: &MeasureStats,
    i: usize,
    b: &mut [f64],
    s: &mut [f64],
) -> Result<()> {
    spec.regimes().check(i)?;
    if x.len() != spec.d() {
        return Err(Error::Dimension(format!(
            "position has dimension {}, model expects {}",
            x.len(),
            spec.d()
        )));
    }
    if !Arc::ptr_eq(stats.declaration(), spec.functionals())
        && stats.values().len() != spec.functionals().width()
    {
        return Err(Error::Dimension(
            "stats do not match the model's declared functionals".into(),
        ));
    }
    spec.coefficients.drift_into(t, x, stats, i, b);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "drift",
            t,
            x: x.to_vec(),
            regime: i,
        });
    }
    spec.coefficients.diffusion_into(t, x, stats, i, s);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "diffusion",
            t,
            x: x.to_vec(),
            regime: i,
        });
    }
    Ok(())
}
