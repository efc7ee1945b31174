use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Row-sum tolerance of the q-property.
pub const ROW_SUM_TOL: f64 = 1e-12;

type RateFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// The finite regime set `{0, .., m-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeSet {
    m: usize,
}

impl RegimeSet {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("regime count must be >= 1".into()));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, regime: usize) -> bool {
        regime < self.m
    }

    pub fn check(&self, regime: usize) -> Result<()> {
        if self.contains(regime) {
            Ok(())
        } else {
            Err(Error::RegimeOutOfRange { regime, m: self.m })
        }
    }
}

/// A dense generator matrix evaluated at one point, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    m: usize,
    data: Vec<f64>,
}

impl Generator {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(
                "generator rows must form a square matrix".into(),
            ));
        }
        Ok(Self {
            m,
            data: rows.concat(),
        })
    }

    pub fn from_flat(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {m}x{m} generator, got {}",
                m * m,
                data.len()
            )));
        }
        Ok(Self { m, data })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; m * m],
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Total jump rate out of `i`, i.e. `sum_{j != i} q_ij`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q)
            .sum()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, q| acc.max(q.abs()))
    }

    /// All q-property violations of this matrix.
    pub fn q_violations(&self, bound: Option<f64>) -> Vec<QViolation> {
        let m = self.m;
        let mut out = Vec::new();
        for i in 0..m {
            let mut sum = 0.0;
            for j in 0..m {
                let q = self.rate(i, j);
                if !q.is_finite() {
                    out.push(QViolation::NonFinite { i, j });
                    continue;
                }
                sum += q;
                if j != i && q < 0.0 {
                    out.push(QViolation::NegativeOffDiagonal { i, j, value: q });
                }
                if let Some(b) = bound {
                    if q.abs() > b {
                        out.push(QViolation::ExceedsBound {
                            i,
                            j,
                            value: q,
                            bound: b,
                        });
                    }
                }
            }
            if sum.is_finite() && sum.abs() > ROW_SUM_TOL {
                out.push(QViolation::RowSum { i, sum });
            }
        }
        out
    }
}

/// One failed clause of the q-property.
#[derive(Debug, Clone, PartialEq)]
pub enum QViolation {
    NegativeOffDiagonal {
        i: usize,
        j: usize,
        value: f64,
    },
    RowSum {
        i: usize,
        sum: f64,
    },
    ExceedsBound {
        i: usize,
        j: usize,
        value: f64,
        bound: f64,
    },
    NonFinite {
        i: usize,
        j: usize,
    },
}

impl fmt::Display for QViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            QViolation::NegativeOffDiagonal { i, j, value } => {
                write!(f, "q[{}][{}] = {value} < 0", i + 1, j + 1)
            }
            QViolation::RowSum { i, sum } => write!(f, "row {} sums to {sum}", i + 1),
            QViolation::ExceedsBound { i, j, value, bound } => {
                write!(
                    f,
                    "|q[{}][{}]| = {} exceeds M_q = {bound}",
                    i + 1,
                    j + 1,
                    value.abs()
                )
            }
            QViolation::NonFinite { i, j } => write!(f, "q[{}][{}] is not finite", i + 1, j + 1),
        }
    }
}

#[derive(Clone)]
enum RateKind {
    Constant(Generator),
    StateDependent(Arc<RateFn>),
}

/// Position-dependent switching generator `x -> Q(x)` with entry bound `M_q`.
#[derive(Clone)]
pub struct RateMatrix {
    regimes: RegimeSet,
    bound: f64,
    kind: RateKind,
}

impl fmt::Debug for RateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateMatrix")
            .field("m", &self.regimes.len())
            .field("bound", &self.bound)
            .field("constant", &self.is_constant())
            .finish()
    }
}

impl RateMatrix {
    /// A constant generator. The bound is the largest entry magnitude.
    pub fn constant(q: Generator) -> Self {
        Self {
            regimes: RegimeSet { m: q.size() },
            bound: q.max_magnitude(),
            kind: RateKind::Constant(q),
        }
    }

    pub fn constant_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::constant(Generator::from_rows(rows)?))
    }

    /// `m` regimes that never switch.
    pub fn frozen(m: usize) -> Result<Self> {
        RegimeSet::new(m)?;
        Ok(Self::constant(Generator::zeros(m)))
    }

    /// A state-dependent generator. `eval` fills a row-major `m x m` buffer.
    pub fn state_dependent<F>(m: usize, bound: f64, eval: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rate bound {bound} must be finite and >= 0"
            )));
        }
        Ok(Self {
            regimes: RegimeSet::new(m)?,
            bound,
            kind: RateKind::StateDependent(Arc::new(eval)),
        })
    }

    pub fn regimes(&self) -> RegimeSet {
        self.regimes
    }

    pub fn m(&self) -> usize {
        self.regimes.len()
    }

    /// `M_q`, the uniform bound on `|q_ij(x)|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, RateKind::Constant(_))
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut Generator) {
        match &self.kind {
            RateKind::Constant(q) => out.data.copy_from_slice(&q.data),
            RateKind::StateDependent(f) => f(x, &mut out.data),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Generator {
        let mut out = Generator::zeros(self.m());
        self.evaluate_into(x, &mut out);
        out
    }
}

/// Per-probe outcome of [`validate_q_property`].
#[derive(Debug, Clone)]
pub struct ProbeCheck {
    pub point: Vec<f64>,
    pub max_magnitude: f64,
    pub violations: Vec<QViolation>,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub probes: Vec<ProbeCheck>,
    pub max_magnitude: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.violations.is_empty())
    }

    pub fn failures(&self) -> impl Iterator<Item = &ProbeCheck> {
        self.probes.iter().filter(|p| !p.violations.is_empty())
    }
}

/// Checks the q-property (nonnegative off-diagonals, zero row sums, entry
/// bound) of `rates` at every probe point.
pub fn validate_q_property(
    rates: &RateMatrix,
    probe_points: &[Vec<f64>],
) -> Result<ValidationReport> {
    if probe_points.is_empty() {
        return Err(Error::InvalidArgument(
            "validate_q_property needs at least one probe".into(),
        ));
    }
    let mut q = Generator::zeros(rates.m());
    let mut max_magnitude: f64 = 0.0;
    let probes = probe_points
        .iter()
        .map(|x| {
            rates.evaluate_into(x, &mut q);
            let mag = q.max_magnitude();
            if mag.is_finite() {
                max_magnitude = max_magnitude.max(mag);
            }
            ProbeCheck {
                point: x.clone(),
                max_magnitude: mag,
                violations: q.q_violations(Some(rates.bound())),
            }
        })
        .collect();
    Ok(ValidationReport {
        probes,
        max_magnitude,
    })
}
