//! Empirical measures and the transport distances between them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;

use crate::assignment;
use crate::error::{Error, Result};
use crate::model::{Functionals, MeasureStats, RegimeField};
use crate::particle::truncate_in_place;
use crate::rng::{Domain, StreamKey};

/// Default largest sample size handed to the exact assignment solver.
pub const DEFAULT_MAX_EXACT: usize = 512;

const WEIGHT_TOL: f64 = 1e-12;

/// Weighted atoms on `R^d`, optionally labelled with regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    d: usize,
    atoms: Vec<f64>,
    regimes: Option<Vec<usize>>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalMeasure {
    /// Equal-weight measure from a flat `N*d` array.
    pub fn new(d: usize, atoms: Vec<f64>) -> Result<Self> {
        if d == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(d) {
            return Err(Error::Dimension(format!(
                "{} coordinates do not form a nonempty set of points in R^{d}",
                atoms.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(
                "measure atoms must be finite".into(),
            ));
        }
        Ok(Self {
            d,
            atoms,
            regimes: None,
            weights: None,
        })
    }

    /// One-dimensional equal-weight measure.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        Self::new(1, points.to_vec())
    }

    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::new(x.len(), x.to_vec())
    }

    pub fn with_regimes(mut self, regimes: Vec<usize>) -> Result<Self> {
        if regimes.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} regime labels for {} atoms",
                regimes.len(),
                self.len()
            )));
        }
        self.regimes = Some(regimes);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} atoms",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, not 1"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    #[inline]
    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.d..(k + 1) * self.d]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn regime(&self, k: usize) -> Option<usize> {
        self.regimes.as_ref().map(|r| r[k])
    }

    pub fn regimes(&self) -> Option<&[usize]> {
        self.regimes.as_deref()
    }

    pub fn weight(&self, k: usize) -> f64 {
        match &self.weights {
            Some(w) => w[k],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    /// Integrals of the declared functionals against this measure.
    pub fn stats(&self, functionals: &Arc<Functionals>) -> MeasureStats {
        match &self.weights {
            None => functionals.evaluate(&self.atoms),
            Some(w) => functionals.evaluate_weighted(&self.atoms, w),
        }
    }

    /// `∫ f dμ` for a scalar function of `(x, regime)`.
    pub fn integrate(&self, f: impl Fn(&[f64], usize) -> f64) -> f64 {
        (0..self.len())
            .map(|k| self.weight(k) * f(self.atom(k), self.regime(k).unwrap_or(0)))
            .sum()
    }

    fn select(&self, idx: &[usize]) -> Self {
        let mut atoms = Vec::with_capacity(idx.len() * self.d);
        for &k in idx {
            atoms.extend_from_slice(self.atom(k));
        }
        Self {
            d: self.d,
            atoms,
            regimes: self
                .regimes
                .as_ref()
                .map(|r| idx.iter().map(|&k| r[k]).collect()),
            weights: None,
        }
    }
}

pub type CostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Ground cost `ρ` of a transport problem.
#[derive(Clone)]
pub enum GroundCost {
    /// `|x−y|^p`, reported as `(inf ∫ |x−y|^p dπ)^{1/p}`; `p ∈ {1, 2}`.
    Euclidean(u8),
    /// `|φ_N(x) − φ_N(y)|^2`, reported as a square root (`W_{2,N}`).
    Truncated(f64),
    /// `Ṽ(x − y)`, reported without a root (`W_Ṽ`).
    Lyapunov(CostFn),
    /// `√(1_{i≠j} + V̂(x − y))` on `R^d × M` (`W_d`).
    Product(CostFn),
}

impl fmt::Debug for GroundCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundCost::Euclidean(p) => write!(f, "Euclidean({p})"),
            GroundCost::Truncated(n) => write!(f, "Truncated({n})"),
            GroundCost::Lyapunov(_) => f.write_str("Lyapunov"),
            GroundCost::Product(_) => f.write_str("Product"),
        }
    }
}

impl GroundCost {
    pub fn lyapunov(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        GroundCost::Lyapunov(Arc::new(f))
    }

    pub fn product(vhat: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        GroundCost::Product(Arc::new(vhat))
    }

    pub fn lyapunov_field(field: &RegimeField) -> Self {
        let field = field.clone();
        GroundCost::Lyapunov(Arc::new(move |z| field.value(z, 0)))
    }

    pub fn product_field(field: &RegimeField) -> Self {
        let field = field.clone();
        GroundCost::Product(Arc::new(move |z| field.value(z, 0)))
    }

    fn validate(&self) -> Result<()> {
        match *self {
            GroundCost::Euclidean(p) if p != 1 && p != 2 => Err(Error::InvalidArgument(format!(
                "Euclidean cost order must be 1 or 2, got {p}"
            ))),
            GroundCost::Truncated(r) if !(r > 0.0) => Err(Error::InvalidArgument(format!(
                "truncation radius must be positive, got {r}"
            ))),
            _ => Ok(()),
        }
    }

    /// Pointwise cost between `(x, i)` and `(y, j)`.
    pub fn eval(&self, x: &[f64], i: usize, y: &[f64], j: usize) -> f64 {
        match self {
            GroundCost::Euclidean(p) => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if *p == 2 {
                    sq
                } else {
                    sq.sqrt()
                }
            }
            GroundCost::Truncated(r) => {
                let mut tx = x.to_vec();
                let mut ty = y.to_vec();
                truncate_in_place(&mut tx, *r);
                truncate_in_place(&mut ty, *r);
                tx.iter().zip(&ty).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            GroundCost::Lyapunov(f) => {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                f(&z)
            }
            GroundCost::Product(f) => {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                let jump = if i != j { 1.0 } else { 0.0 };
                (jump + f(&z)).sqrt()
            }
        }
    }

    /// Maps the optimal mean cost to the reported distance.
    pub fn finish(&self, mean_cost: f64) -> f64 {
        match self {
            GroundCost::Euclidean(2) | GroundCost::Truncated(_) => mean_cost.max(0.0).sqrt(),
            _ => mean_cost,
        }
    }

    fn needs_regimes(&self) -> bool {
        matches!(self, GroundCost::Product(_))
    }
}

/// Solver options for [`ot_cost`].
#[derive(Debug, Clone, Copy)]
pub struct OtOptions {
    pub max_exact: usize,
    /// Subsample inputs that differ in size or exceed `max_exact`.
    pub subsample: bool,
    pub seed: u64,
}

impl Default for OtOptions {
    fn default() -> Self {
        Self {
            max_exact: DEFAULT_MAX_EXACT,
            subsample: false,
            seed: 0,
        }
    }
}

impl OtOptions {
    pub fn subsampled(seed: u64) -> Self {
        Self {
            subsample: true,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OtResult {
    pub value: f64,
    /// `assignment[k]` is the `nu` atom matched with `mu` atom `k` (indices of
    /// the subsample when `subsampled` is set).
    pub assignment: Vec<usize>,
    pub subsampled: bool,
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.d() != nu.d() {
        return Err(Error::Dimension(format!(
            "measures live in R^{} and R^{}",
            mu.d(),
            nu.d()
        )));
    }
    Ok(())
}

/// Exact `W_p` in one dimension via the quantile coupling.
pub fn wasserstein_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: u8) -> Result<f64> {
    check_pair(mu, nu)?;
    if mu.d() != 1 {
        return Err(Error::Dimension(format!(
            "wasserstein_1d needs d = 1, got {}",
            mu.d()
        )));
    }
    GroundCost::Euclidean(p).validate()?;
    let pow = |z: f64| if p == 1 { z.abs() } else { z * z };
    let sorted = |m: &EmpiricalMeasure| {
        let mut v: Vec<(f64, f64)> = (0..m.len()).map(|k| (m.atom(k)[0], m.weight(k))).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let a = sorted(mu);
    let b = sorted(nu);
    let total = if mu.is_uniform() && nu.is_uniform() && a.len() == b.len() {
        a.iter().zip(&b).map(|(x, y)| pow(x.0 - y.0)).sum::<f64>() / a.len() as f64
    } else {
        // walk both quantile functions, transporting the smaller remaining mass
        let (mut i, mut j) = (0, 0);
        let (mut wa, mut wb) = (a[0].1, b[0].1);
        let mut total = 0.0;
        while i < a.len() && j < b.len() {
            let take = wa.min(wb);
            total += take * pow(a[i].0 - b[j].0);
            wa -= take;
            wb -= take;
            if wa <= WEIGHT_TOL {
                i += 1;
                if i < a.len() {
                    wa = a[i].1;
                }
            }
            if wb <= WEIGHT_TOL {
                j += 1;
                if j < b.len() {
                    wb = b[j].1;
                }
            }
        }
        total
    };
    Ok(GroundCost::Euclidean(p).finish(total))
}

/// Row-major `n x n` cost matrix.
pub fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &GroundCost) -> Vec<f64> {
    let n = mu.len();
    let m = nu.len();
    let mut out = vec![0.0; n * m];
    out.par_chunks_mut(m).enumerate().for_each(|(r, row)| {
        let x = mu.atom(r);
        let i = mu.regime(r).unwrap_or(0);
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = cost.eval(x, i, nu.atom(c), nu.regime(c).unwrap_or(0));
        }
    });
    out
}

/// Optimal transport cost between two equal-weight samples.
pub fn ot_cost(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cost: &GroundCost,
    opts: &OtOptions,
) -> Result<OtResult> {
    check_pair(mu, nu)?;
    cost.validate()?;
    if !(mu.is_uniform() && nu.is_uniform()) {
        return Err(Error::InvalidArgument(
            "the assignment solver needs equal-weight samples".into(),
        ));
    }
    if cost.needs_regimes() && (mu.regimes().is_none() || nu.regimes().is_none()) {
        return Err(Error::InvalidArgument(
            "product cost needs regime-labelled measures".into(),
        ));
    }
    let need_sub = mu.len() != nu.len() || mu.len() > opts.max_exact;
    let (a, b, subsampled) = if need_sub && opts.subsample {
        let n = opts.max_exact.min(mu.len()).min(nu.len());
        let key = StreamKey::new(opts.seed, Domain::Subsample);
        let ia = index::sample(&mut key.rng(0, 0), mu.len(), n).into_vec();
        let ib = index::sample(&mut key.rng(1, 0), nu.len(), n).into_vec();
        (mu.select(&ia), nu.select(&ib), true)
    } else if mu.len() != nu.len() {
        return Err(Error::SizeMismatch(mu.len(), nu.len()));
    } else {
        (mu.clone(), nu.clone(), false)
    };
    let n = a.len();
    let costs = cost_matrix(&a, &b, cost);
    let (assignment, total) = assignment::solve(&costs, n);
    Ok(OtResult {
        value: cost.finish(total / n as f64),
        assignment,
        subsampled,
    })
}

/// `W_{2,N}`: `W_2` after projecting every atom onto the ball of radius `radius`.
pub fn w_truncated(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    radius: f64,
    opts: &OtOptions,
) -> Result<f64> {
    Ok(ot_cost(mu, nu, &GroundCost::Truncated(radius), opts)?.value)
}

/// Regular grid of bins on a box in `R^d`, `d <= 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    pub lo: Vec<f64>,
    pub width: Vec<f64>,
    pub counts: Vec<usize>,
}

impl BinSpec {
    pub fn uniform(lo: &[f64], hi: &[f64], width: f64) -> Result<Self> {
        if lo.len() != hi.len() || !(width > 0.0) {
            return Err(Error::InvalidArgument(
                "bin box needs matching bounds and width > 0".into(),
            ));
        }
        let counts = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| (((h - l) / width) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        Ok(Self {
            lo: lo.to_vec(),
            width: vec![width; lo.len()],
            counts,
        })
    }

    pub fn hi(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.width)
            .zip(&self.counts)
            .map(|((l, w), &c)| l + w * c as f64)
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().product()
    }

    fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (a, &xa) in x.iter().enumerate().take(self.lo.len()) {
            let c = ((xa - self.lo[a]) / self.width[a]).floor();
            if !(c >= 0.0 && (c as usize) < self.counts[a]) {
                return None;
            }
            idx = idx * self.counts[a] + c as usize;
        }
        Some(idx)
    }

    fn cell(&self, mut idx: usize) -> Vec<usize> {
        let d = self.lo.len();
        let mut out = vec![0; d];
        for a in (0..d).rev() {
            out[a] = idx % self.counts[a];
            idx /= self.counts[a];
        }
        out
    }

    fn center(&self, cell: &[usize]) -> Vec<f64> {
        cell.iter()
            .enumerate()
            .map(|(a, &c)| self.lo[a] + (c as f64 + 0.5) * self.width[a])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvReport {
    pub value: f64,
    pub bins: usize,
    pub occupied: usize,
    /// Largest weight oscillation over an occupied bin.
    pub eps_bin: f64,
}

/// Weight `(x, i) ↦ √(1 + V̂(x))` for regime-labelled measures: the
/// product-space distance from `(x, i)` to the origin in another regime.
pub fn product_weight(vhat: impl Fn(&[f64]) -> f64) -> impl Fn(&[f64], usize) -> f64 {
    move |x, _| (1.0 + vhat(x)).sqrt()
}

/// Binned estimator `Σ_B w(c_B) |μ(B) − ν(B)|` of the weighted total variation.
///
/// Regime-labelled measures are binned on `R^d × M`.
pub fn weighted_tv_binned(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    weight: impl Fn(&[f64], usize) -> f64,
    bins: &BinSpec,
) -> Result<TvReport> {
    check_pair(mu, nu)?;
    let d = mu.d();
    if d > 3 || bins.lo.len() != d || bins.width.len() != d || bins.counts.len() != d {
        return Err(Error::Dimension(format!(
            "binning supports d <= 3 with a matching grid, got d = {d}"
        )));
    }
    let mut mass: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (m, sign) in [(mu, 1.0), (nu, -1.0)] {
        for k in 0..m.len() {
            let x = m.atom(k);
            let b = bins.locate(x).ok_or_else(|| Error::OutsideBins {
                atom: x.to_vec(),
                lo: bins.lo.clone(),
                hi: bins.hi(),
            })?;
            *mass.entry((m.regime(k).unwrap_or(0), b)).or_insert(0.0) += sign * m.weight(k);
        }
    }
    let mut value = 0.0;
    let mut eps_bin: f64 = 0.0;
    for (&(regime, b), &diff) in &mass {
        let cell = bins.cell(b);
        let c = bins.center(&cell);
        value += weight(&c, regime) * diff.abs();
        // oscillation over the 3^d lattice of corners, edge midpoints and center
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for code in 0..3usize.pow(d as u32) {
            let mut p = c.clone();
            let mut rest = code;
            for (a, pa) in p.iter_mut().enumerate() {
                *pa += (rest % 3) as f64 * 0.5 * bins.width[a] - 0.5 * bins.width[a];
                rest /= 3;
            }
            let w = weight(&p, regime);
            lo = lo.min(w);
            hi = hi.max(w);
        }
        eps_bin = eps_bin.max(hi - lo);
    }
    Ok(TvReport {
        value,
        bins: bins.total(),
        occupied: mass.len(),
        eps_bin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(z: &[f64]) -> f64 {
        z.iter().map(|v| v * v).sum()
    }

    #[test]
    fn w1d_examples() {
        let a = EmpiricalMeasure::from_points(&[0.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::from_points(&[1.0, 3.0]).unwrap();
        assert_eq!(wasserstein_1d(&a, &b, 1).unwrap(), 1.0);
        let d0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let da = EmpiricalMeasure::dirac(&[-3.5]).unwrap();
        assert_eq!(wasserstein_1d(&d0, &da, 2).unwrap(), 3.5);
        assert_eq!(wasserstein_1d(&a, &a, 2).unwrap(), 0.0);
    }

    #[test]
    fn w1d_weighted_quantiles() {
        // μ = ½δ0 + ½δ1, ν = δ0.5 → W1 = 0.5
        let mu = EmpiricalMeasure::from_points(&[0.0, 1.0]).unwrap();
        let nu = EmpiricalMeasure::from_points(&[0.5]).unwrap();
        assert!((wasserstein_1d(&mu, &nu, 1).unwrap() - 0.5).abs() < 1e-15);
        let w = EmpiricalMeasure::from_points(&[0.0, 1.0])
            .unwrap()
            .with_weights(vec![0.25, 0.75])
            .unwrap();
        // 0.25 mass moves from 0 to 1
        assert!((wasserstein_1d(&w, &mu, 1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn w1d_rejects_higher_dimensions() {
        let a = EmpiricalMeasure::new(2, vec![0.0, 0.0]).unwrap();
        let b = EmpiricalMeasure::from_points(&[0.0]).unwrap();
        assert!(wasserstein_1d(&a, &b, 1).is_err());
        assert!(wasserstein_1d(&a, &a, 1).is_err());
    }

    #[test]
    fn product_cost_single_atoms() {
        let mu = EmpiricalMeasure::dirac(&[0.0])
            .unwrap()
            .with_regimes(vec![0])
            .unwrap();
        let nu = EmpiricalMeasure::dirac(&[0.0])
            .unwrap()
            .with_regimes(vec![1])
            .unwrap();
        let r = ot_cost(&mu, &nu, &GroundCost::product(sq), &OtOptions::default()).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn lyapunov_cost_identity() {
        let mu = EmpiricalMeasure::from_points(&[0.0, 1.0]).unwrap();
        let r = ot_cost(&mu, &mu, &GroundCost::lyapunov(sq), &OtOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.assignment, vec![0, 1]);
    }

    #[test]
    fn size_mismatch_needs_subsampling() {
        let a = EmpiricalMeasure::from_points(&[0.0, 1.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::from_points(&[0.0, 1.0]).unwrap();
        let cost = GroundCost::Euclidean(1);
        assert!(matches!(
            ot_cost(&a, &b, &cost, &OtOptions::default()),
            Err(Error::SizeMismatch(3, 2))
        ));
        let r = ot_cost(&a, &b, &cost, &OtOptions::subsampled(1)).unwrap();
        assert!(r.subsampled);
        assert_eq!(r.assignment.len(), 2);
    }

    #[test]
    fn truncated_examples() {
        let d0 = EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap();
        let dx = EmpiricalMeasure::dirac(&[6.0, 8.0]).unwrap();
        let opts = OtOptions::default();
        assert!((w_truncated(&d0, &dx, 1.0, &opts).unwrap() - 1.0).abs() < 1e-15);
        let a = EmpiricalMeasure::from_points(&[0.1, -0.3, 0.5]).unwrap();
        let b = EmpiricalMeasure::from_points(&[0.2, 0.4, -0.9]).unwrap();
        let plain = ot_cost(&a, &b, &GroundCost::Euclidean(2), &opts)
            .unwrap()
            .value;
        assert!((w_truncated(&a, &b, 1.0, &opts).unwrap() - plain).abs() < 1e-15);
    }

    #[test]
    fn binned_tv_examples() {
        let bins = BinSpec::uniform(&[0.0], &[2.0], 1.0).unwrap();
        let mu = EmpiricalMeasure::dirac(&[0.5]).unwrap();
        let nu = EmpiricalMeasure::dirac(&[1.5]).unwrap();
        let w = |x: &[f64], _: usize| sq(x);
        let r = weighted_tv_binned(&mu, &nu, w, &bins).unwrap();
        assert!((r.value - 2.5).abs() < 1e-15);
        assert_eq!(r.bins, 2);
        assert_eq!(r.occupied, 2);
        // |x|^2 on [1,2] oscillates by 3
        assert!((r.eps_bin - 3.0).abs() < 1e-12);
        assert_eq!(weighted_tv_binned(&mu, &mu, w, &bins).unwrap().value, 0.0);
    }

    #[test]
    fn binned_tv_out_of_range() {
        let bins = BinSpec::uniform(&[0.0], &[2.0], 1.0).unwrap();
        let mu = EmpiricalMeasure::dirac(&[2.5]).unwrap();
        let err = weighted_tv_binned(&mu, &mu, |_, _| 1.0, &bins).unwrap_err();
        assert!(matches!(err, Error::OutsideBins { .. }));
    }

    #[test]
    fn binned_tv_product_space_separates_regimes() {
        let bins = BinSpec::uniform(&[-1.0], &[1.0], 0.5).unwrap();
        let mu = EmpiricalMeasure::dirac(&[0.1])
            .unwrap()
            .with_regimes(vec![0])
            .unwrap();
        let nu = EmpiricalMeasure::dirac(&[0.1])
            .unwrap()
            .with_regimes(vec![1])
            .unwrap();
        let r = weighted_tv_binned(&mu, &nu, product_weight(sq), &bins).unwrap();
        let c = 0.25f64;
        assert!((r.value - 2.0 * (1.0 + c * c).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let m = EmpiricalMeasure::from_points(&[0.0, 1.0]).unwrap();
        assert!(m.clone().with_weights(vec![0.5, 0.6]).is_err());
        assert!(m.with_weights(vec![0.5, 0.5]).is_ok());
    }
}
