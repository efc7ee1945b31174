//! Generators applied to Lyapunov functions, and sampled audits of the drift,
//! contraction and moment conditions.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measures::{ot_cost, EmpiricalMeasure, GroundCost, OtOptions};
use crate::model::{evaluate_into, Generator, LyapunovSpec, MeasureStats, ModelSpec, RegimeField};
use crate::particle::TimeSeries;

/// Drift tolerance with analytic derivatives.
pub const TOL_ANALYTIC: f64 = 1e-9;
/// Relative drift tolerance with finite-difference derivatives.
pub const TOL_FD_RELATIVE: f64 = 1e-6;

fn tolerance(finite_differences: bool, value: f64) -> f64 {
    if finite_differences {
        TOL_FD_RELATIVE * (1.0 + value.abs())
    } else {
        TOL_ANALYTIC
    }
}

/// `LV` split into its three parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorTerms {
    /// `b · ∇V`
    pub drift: f64,
    /// `½ tr(σσᵀ ∇²V)`
    pub diffusion: f64,
    /// `Σ_{j≠i} q_ij (V(x,j) − V(x,i))`
    pub switching: f64,
}

impl GeneratorTerms {
    pub fn total(&self) -> f64 {
        self.drift + self.diffusion + self.switching
    }
}

fn non_finite(what: &'static str, t: f64, x: &[f64], i: usize) -> Error {
    Error::NonFinite {
        what,
        t,
        x: x.to_vec(),
        regime: i,
    }
}

/// `½ tr(A H)` for row-major `A = σσᵀ` built from a `d x n` matrix.
fn half_trace(sigma: &[f64], hess: &[f64], d: usize, n: usize) -> f64 {
    let mut acc = 0.0;
    for a in 0..d {
        for b in 0..d {
            let h = hess[b * d + a];
            if h == 0.0 {
                continue;
            }
            let mut aab = 0.0;
            for c in 0..n {
                aab += sigma[a * n + c] * sigma[b * n + c];
            }
            acc += aab * h;
        }
    }
    0.5 * acc
}

/// `LV(x, i)` with each term reported separately.
pub fn generator_terms(
    spec: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    x: &[f64],
    stats: &MeasureStats,
    i: usize,
) -> Result<GeneratorTerms> {
    let (d, n) = (spec.d(), spec.n());
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * n];
    evaluate_into(spec, t, x, stats, i, &mut b, &mut s)?;
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    lyap.v.gradient(x, i, &mut grad);
    lyap.v.hessian(x, i, &mut hess);
    let drift: f64 = b.iter().zip(&grad).map(|(u, v)| u * v).sum();
    if !drift.is_finite() {
        return Err(non_finite("generator drift term", t, x, i));
    }
    let diffusion = half_trace(&s, &hess, d, n);
    if !diffusion.is_finite() {
        return Err(non_finite("generator diffusion term", t, x, i));
    }
    let q: Generator = spec.rates().evaluate(x);
    let vi = lyap.v.value(x, i);
    let switching: f64 = (0..q.size())
        .filter(|&j| j != i)
        .map(|j| q.rate(i, j) * (lyap.v.value(x, j) - vi))
        .sum();
    if !switching.is_finite() {
        return Err(non_finite("generator switching term", t, x, i));
    }
    Ok(GeneratorTerms {
        drift,
        diffusion,
        switching,
    })
}

/// `LV(x, i) = ½ tr(σσᵀ∇²V) + b·∇V + Σ_{j≠i} q_ij(x)(V(x,j) − V(x,i))`.
pub fn apply_generator(
    spec: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    x: &[f64],
    stats: &MeasureStats,
    i: usize,
) -> Result<f64> {
    Ok(generator_terms(spec, lyap, t, x, stats, i)?.total())
}

/// Coupled generator `L̃⁽ⁱ⁾Ṽ(x − y)` of a synchronous pair in regime `i`:
/// `(b(x,μ,i) − b(y,ν,i))·∇Ṽ(x−y) + ½ tr(∇²Ṽ(x−y) A)` with
/// `A = (σ(x,μ,i) − σ(y,ν,i))(σ(x,μ,i) − σ(y,ν,i))ᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn apply_coupled_generator(
    spec: &ModelSpec,
    lyap: &LyapunovSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
    stats_mu: &MeasureStats,
    stats_nu: &MeasureStats,
    i: usize,
) -> Result<f64> {
    let coupled = lyap.coupled()?;
    coupled_value(spec, coupled, t, x, y, stats_mu, stats_nu, i)
}

#[allow(clippy::too_many_arguments)]
fn coupled_value(
    spec: &ModelSpec,
    coupled: &RegimeField,
    t: f64,
    x: &[f64],
    y: &[f64],
    stats_mu: &MeasureStats,
    stats_nu: &MeasureStats,
    i: usize,
) -> Result<f64> {
    let (d, n) = (spec.d(), spec.n());
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let (mut sx, mut sy) = (vec![0.0; d * n], vec![0.0; d * n]);
    evaluate_into(spec, t, x, stats_mu, i, &mut bx, &mut sx)?;
    evaluate_into(spec, t, y, stats_nu, i, &mut by, &mut sy)?;
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    coupled.gradient(&z, 0, &mut grad);
    coupled.hessian(&z, 0, &mut hess);
    let drift: f64 = (0..d).map(|a| (bx[a] - by[a]) * grad[a]).sum();
    if !drift.is_finite() {
        return Err(non_finite("coupled generator drift term", t, x, i));
    }
    let ds: Vec<f64> = sx.iter().zip(&sy).map(|(a, b)| a - b).collect();
    let diffusion = half_trace(&ds, &hess, d, n);
    if !diffusion.is_finite() {
        return Err(non_finite("coupled generator diffusion term", t, x, i));
    }
    Ok(drift + diffusion)
}

/// Where a check failed (or came closest to failing).
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub regime: usize,
    /// Index of the measure (H2) or coupling (contraction) used.
    pub measure: usize,
}

/// Which form of the contraction condition held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionForm {
    Pointwise,
    Integral,
    Neither,
}

impl fmt::Display for ContractionForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractionForm::Pointwise => "pointwise",
            ContractionForm::Integral => "integral",
            ContractionForm::Neither => "neither",
        })
    }
}

/// Outcome of a sampled hypothesis audit.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub check: String,
    pub description: String,
    pub evaluations: usize,
    /// Largest margin; the check passes when every margin is within tolerance.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Probe attaining the worst margin.
    pub worst: Option<Probe>,
    pub phi_below_v: Option<bool>,
    pub coercive: Option<bool>,
    /// `(radius, min V)` over probe shells.
    pub shell_minima: Vec<(f64, f64)>,
    pub pointwise_worst: Option<f64>,
    pub pointwise_pass: Option<bool>,
    pub form: Option<ContractionForm>,
}

impl DriftReport {
    /// Drift margin plus every side condition that was audited.
    pub fn all_ok(&self) -> bool {
        self.pass && self.phi_below_v.unwrap_or(true) && self.coercive.unwrap_or(true)
    }

    pub fn to_text(&self) -> String {
        let status = if self.all_ok() { "PASS" } else { "FAIL" };
        let mut s = format!("[{status}] {}: {}\n", self.check, self.description);
        s += &format!("  evaluations: {}\n", self.evaluations);
        s += &format!(
            "  worst margin: {:.6e} (tolerance {:.1e})\n",
            self.worst_margin, self.tolerance
        );
        if let Some(p) = &self.worst {
            match &p.y {
                Some(y) => {
                    s += &format!(
                        "  at x={:?}, y={:?}, regime {}, coupling #{}\n",
                        p.x,
                        y,
                        p.regime + 1,
                        p.measure
                    )
                }
                None => {
                    s += &format!(
                        "  at x={:?}, regime {}, measure #{}\n",
                        p.x,
                        p.regime + 1,
                        p.measure
                    )
                }
            }
        }
        if let Some(ok) = self.phi_below_v {
            s += &format!("  phi <= V at probes: {ok}\n");
        }
        if let Some(ok) = self.coercive {
            s += &format!(
                "  shell minima increasing over {} radii: {ok}\n",
                self.shell_minima.len()
            );
        }
        if let (Some(w), Some(ok)) = (self.pointwise_worst, self.pointwise_pass) {
            s += &format!("  pointwise worst margin: {w:.6e} (pass: {ok})\n");
        }
        if let Some(form) = self.form {
            s += &format!("  form: {form}\n");
        }
        s
    }

    pub fn csv_header() -> &'static str {
        "check,pass,worst_margin,tolerance,evaluations,phi_below_v,coercive,pointwise_pass,form"
    }

    pub fn csv_row(&self) -> String {
        let opt = |b: Option<bool>| b.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{:.16e},{:.1e},{},{},{},{},{}",
            self.check,
            self.all_ok(),
            self.worst_margin,
            self.tolerance,
            self.evaluations,
            opt(self.phi_below_v),
            opt(self.coercive),
            opt(self.pointwise_pass),
            self.form.map_or(String::new(), |f| f.to_string())
        )
    }
}

/// Samples `(LV)(x,μ,i) ≤ λ1 V(x,i) + λ2 μ(φ)` over probes × regimes × measures.
///
/// Also audits `φ ≤ V` and monotone growth of the minima of `V` over the
/// probe shells `{|x| = r}`.
pub fn check_drift_h2(
    spec: &ModelSpec,
    lyap: &LyapunovSpec,
    probes: &[Vec<f64>],
    measures: &[EmpiricalMeasure],
) -> Result<DriftReport> {
    if probes.is_empty() || measures.is_empty() {
        return Err(Error::InvalidArgument(
            "H2 check needs probes and measures".into(),
        ));
    }
    let m = spec.regimes().len();
    let fd = !lyap.v.has_analytic_derivatives();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_tol = tolerance(fd, 0.0);
    let mut worst_probe = None;
    let mut pass = true;
    let mut evaluations = 0;
    for (mi, mu) in measures.iter().enumerate() {
        let stats = mu.stats(spec.functionals());
        let mu_phi = mu.integrate(|x, _| lyap.phi.value(x, 0));
        for x in probes {
            for i in 0..m {
                let lv = apply_generator(spec, lyap, 0.0, x, &stats, i)?;
                let margin = lv - lyap.lambda1 * lyap.v.value(x, i) - lyap.lambda2 * mu_phi;
                let tol = tolerance(fd, lv);
                evaluations += 1;
                if margin > tol {
                    pass = false;
                }
                if margin > worst {
                    worst = margin;
                    worst_tol = tol;
                    worst_probe = Some(Probe {
                        x: x.clone(),
                        y: None,
                        regime: i,
                        measure: mi,
                    });
                }
            }
        }
    }
    let phi_ok = probes
        .iter()
        .all(|x| (0..m).all(|i| lyap.phi.value(x, 0) <= lyap.v.value(x, i)));
    let shell_minima = shell_minima(probes, |x| {
        (0..m)
            .map(|i| lyap.v.value(x, i))
            .fold(f64::INFINITY, f64::min)
    });
    let coercive = shell_minima.windows(2).all(|w| w[1].1 >= w[0].1)
        && shell_minima.len() >= 2
        && shell_minima.last().map(|l| l.1) > shell_minima.first().map(|f| f.1);
    Ok(DriftReport {
        check: "H2".into(),
        description: format!(
            "LV <= {} V + {} mu(phi) over {} probes x {m} regimes x {} measures",
            lyap.lambda1,
            lyap.lambda2,
            probes.len(),
            measures.len()
        ),
        evaluations,
        worst_margin: worst,
        tolerance: worst_tol,
        pass,
        worst: worst_probe,
        phi_below_v: Some(phi_ok),
        coercive: Some(coercive),
        shell_minima,
        pointwise_worst: None,
        pointwise_pass: None,
        form: None,
    })
}

fn shell_minima(probes: &[Vec<f64>], v: impl Fn(&[f64]) -> f64) -> Vec<(f64, f64)> {
    let mut shells: Vec<(f64, f64)> = Vec::new();
    let mut by_radius: Vec<(f64, f64)> = probes
        .iter()
        .map(|x| (x.iter().map(|a| a * a).sum::<f64>().sqrt(), v(x)))
        .collect();
    by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (r, val) in by_radius {
        match shells.last_mut() {
            Some(last) if (r - last.0).abs() <= 1e-12 * r.max(1.0) => last.1 = last.1.min(val),
            _ => shells.push((r, val)),
        }
    }
    shells
}

/// A discrete coupling: `xs` atom `k` paired with `ys` atom `k`.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub xs: EmpiricalMeasure,
    pub ys: EmpiricalMeasure,
}

impl PairedSample {
    pub fn new(xs: EmpiricalMeasure, ys: EmpiricalMeasure) -> Result<Self> {
        if xs.len() != ys.len() || xs.d() != ys.d() {
            return Err(Error::Dimension(
                "paired samples need equal sizes and dimensions".into(),
            ));
        }
        Ok(Self { xs, ys })
    }
}

/// `count` independently sampled Gaussian clouds of `size` pairs in `R^d`.
/// Coupling `c` pairs `N(c/2, (1 + c/4)²)` draws with `N(−c/2, 1)` draws.
pub fn gaussian_couplings(
    d: usize,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PairedSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|c| {
            let shift = 0.5 * c as f64;
            let scale = 1.0 + 0.25 * c as f64;
            let mut normal = || rng.sample::<f64, _>(StandardNormal);
            let xs: Vec<f64> = (0..size * d).map(|_| shift + scale * normal()).collect();
            let ys: Vec<f64> = (0..size * d).map(|_| -shift + normal()).collect();
            PairedSample::new(EmpiricalMeasure::new(d, xs)?, EmpiricalMeasure::new(d, ys)?)
        })
        .collect()
}

/// Rate and optional `W_Ṽ` allowance of a contraction check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionTarget {
    /// `γ` (or `θ`, or `γ₁` in the two-constant form).
    pub rate: f64,
    /// `γ₂` of `L̃Ṽ ≤ −γ₁Ṽ + γ₂ W_Ṽ(μ, ν)`.
    pub gamma2: Option<f64>,
}

impl ContractionTarget {
    pub fn rate(rate: f64) -> Self {
        Self { rate, gamma2: None }
    }
}

/// Compares the π-average of `L̃⁽ⁱ⁾Ṽ(x−y)` with `−rate` times the π-average of
/// `Ṽ(x−y)` for each supplied coupling and regime, and runs the pointwise form
/// as a stricter diagnostic.
pub fn check_contraction(
    spec: &ModelSpec,
    lyap: &LyapunovSpec,
    couplings: &[PairedSample],
    regimes: &[usize],
    target: ContractionTarget,
) -> Result<DriftReport> {
    if couplings.is_empty() || regimes.is_empty() {
        return Err(Error::InvalidArgument(
            "contraction check needs couplings and regimes".into(),
        ));
    }
    let coupled = lyap.coupled()?;
    let fd = !coupled.has_analytic_derivatives();
    let mut integral_worst = f64::NEG_INFINITY;
    let mut integral_tol = tolerance(fd, 0.0);
    let mut integral_pass = true;
    let mut point_worst = f64::NEG_INFINITY;
    let mut point_pass = true;
    let mut worst_probe = None;
    let mut evaluations = 0;
    for (ci, pair) in couplings.iter().enumerate() {
        let stats_mu = pair.xs.stats(spec.functionals());
        let stats_nu = pair.ys.stats(spec.functionals());
        let allowance = match target.gamma2 {
            Some(g2) => {
                let w = ot_cost(
                    &pair.xs,
                    &pair.ys,
                    &GroundCost::lyapunov_field(coupled),
                    &OtOptions::subsampled(ci as u64),
                )?;
                g2 * w.value
            }
            None => 0.0,
        };
        for &i in regimes {
            spec.regimes().check(i)?;
            let (mut sum_l, mut sum_v, mut sum_abs) = (0.0, 0.0, 0.0);
            let mut local_worst = (f64::NEG_INFINITY, 0usize);
            for k in 0..pair.xs.len() {
                let (x, y) = (pair.xs.atom(k), pair.ys.atom(k));
                let w = pair.xs.weight(k);
                let l = coupled_value(spec, coupled, 0.0, x, y, &stats_mu, &stats_nu, i)?;
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                let v = coupled.value(&z, 0);
                sum_l += w * l;
                sum_v += w * v;
                sum_abs += w * l.abs();
                evaluations += 1;
                let margin = l + target.rate * v - allowance;
                if margin > tolerance(fd, l) {
                    point_pass = false;
                }
                if margin > local_worst.0 {
                    local_worst = (margin, k);
                }
            }
            point_worst = point_worst.max(local_worst.0);
            let margin = sum_l + target.rate * sum_v - allowance;
            let tol = tolerance(fd, sum_abs);
            if margin > tol {
                integral_pass = false;
            }
            if margin > integral_worst {
                integral_worst = margin;
                integral_tol = tol;
                let k = local_worst.1;
                worst_probe = Some(Probe {
                    x: pair.xs.atom(k).to_vec(),
                    y: Some(pair.ys.atom(k).to_vec()),
                    regime: i,
                    measure: ci,
                });
            }
        }
    }
    let form = if point_pass {
        ContractionForm::Pointwise
    } else if integral_pass {
        ContractionForm::Integral
    } else {
        ContractionForm::Neither
    };
    let regime_list: Vec<String> = regimes.iter().map(|i| (i + 1).to_string()).collect();
    Ok(DriftReport {
        check: "contraction".into(),
        description: format!(
            "int L~V~ dpi <= -{} int V~ dpi{} over {} couplings, regimes {{{}}}",
            target.rate,
            target
                .gamma2
                .map_or(String::new(), |g| format!(" + {g} W_V~")),
            couplings.len(),
            regime_list.join(",")
        ),
        evaluations,
        worst_margin: integral_worst,
        tolerance: integral_tol,
        pass: integral_pass,
        worst: worst_probe,
        phi_below_v: None,
        coercive: None,
        shell_minima: Vec::new(),
        pointwise_worst: Some(point_worst),
        pointwise_pass: Some(point_pass),
        form: Some(form),
    })
}

/// Per-time comparison of recorded `E V` with `e^{(λ1+λ2)t} E V(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBoundReport {
    pub pass: bool,
    /// `max_t EV(t) / bound(t) − 1`.
    pub worst_relative_margin: f64,
    /// `(t, EV(t), e^{(λ1+λ2)t} EV(0))`.
    pub rows: Vec<(f64, f64, f64)>,
    pub delta: f64,
}

/// Checks `EV(t) ≤ e^{(λ1+λ2)t} EV(0) (1 + δ)` at every recorded time.
pub fn moment_bound_check(
    series: &TimeSeries,
    lyap: &LyapunovSpec,
    delta: f64,
) -> Result<MomentBoundReport> {
    let ev = series.ev()?;
    let ev0 = ev.first().ok_or(Error::MissingColumn("EV"))?.1;
    let t0 = ev[0].0;
    let rate = lyap.moment_rate();
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    let rows: Vec<(f64, f64, f64)> = ev
        .iter()
        .map(|&(t, v, _)| {
            let bound = (rate * (t - t0)).exp() * ev0;
            let rel = if bound > 0.0 {
                v / bound - 1.0
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(rel);
            if v > bound * (1.0 + delta) {
                pass = false;
            }
            (t, v, bound)
        })
        .collect();
    Ok(MomentBoundReport {
        pass,
        worst_relative_margin: worst,
        rows,
        delta,
    })
}

/// Empirical `K` in `V̂(x−y) ≤ K max{V̂(x), V̂(y)}` over sampled pairs.
pub fn estimate_k_hat(vhat: &RegimeField, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    pairs
        .iter()
        .filter_map(|(x, y)| {
            let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let denom = vhat.value(x, 0).max(vhat.value(y, 0));
            (denom > 0.0).then(|| vhat.value(&z, 0) / denom)
        })
        .fold(0.0, f64::max)
}

/// Structural requirements on a Lyapunov spec sampled at `probes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovAudit {
    pub v_nonnegative: bool,
    pub phi_below_v: bool,
    pub coupled_vanishes_at_zero: Option<bool>,
    pub k_hat_ok: Option<bool>,
}

impl LyapunovAudit {
    pub fn passed(&self) -> bool {
        self.v_nonnegative
            && self.phi_below_v
            && self.coupled_vanishes_at_zero.unwrap_or(true)
            && self.k_hat_ok.unwrap_or(true)
    }
}

/// Checks `V ≥ 0`, `φ ≤ min_i V(·, i)`, `Ṽ(0) = 0` and, when `K` is set,
/// `V̂(x−y) ≤ K max{V̂(x), V̂(y)}` over all probe pairs.
pub fn audit_lyapunov(lyap: &LyapunovSpec, m: usize, probes: &[Vec<f64>]) -> LyapunovAudit {
    let v_nonnegative = probes
        .iter()
        .all(|x| (0..m).all(|i| lyap.v.value(x, i) >= 0.0));
    let phi_below_v = probes
        .iter()
        .all(|x| (0..m).all(|i| lyap.phi.value(x, 0) <= lyap.v.value(x, i)));
    let coupled_vanishes_at_zero = lyap.coupled.as_ref().map(|c| {
        let d = probes.first().map_or(1, Vec::len);
        c.value(&vec![0.0; d], 0) == 0.0
    });
    let k_hat_ok = match (&lyap.coupled, lyap.k_hat) {
        (Some(c), Some(k)) => {
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = probes
                .iter()
                .flat_map(|x| probes.iter().map(move |y| (x.clone(), y.clone())))
                .collect();
            Some(estimate_k_hat(c, &pairs) <= k * (1.0 + 1e-12))
        }
        _ => None,
    };
    LyapunovAudit {
        v_nonnegative,
        phi_below_v,
        coupled_vanishes_at_zero,
        k_hat_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{example1, example1_lyapunov, example2, example2_lyapunov, Switching};
    use crate::particle::Record;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| vec![lo + (hi - lo) * k as f64 / (n - 1) as f64])
            .collect()
    }

    fn measures() -> Vec<EmpiricalMeasure> {
        let unif: Vec<f64> = (0..201).map(|k| -1.0 + 0.01 * k as f64).collect();
        vec![
            EmpiricalMeasure::dirac(&[0.0]).unwrap(),
            EmpiricalMeasure::from_points(&unif).unwrap(),
        ]
    }

    fn gaussian_pairs(seed: u64, n: usize, shift: f64) -> PairedSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) + shift)
            .collect();
        let ys: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) - shift)
            .collect();
        PairedSample::new(
            EmpiricalMeasure::from_points(&xs).unwrap(),
            EmpiricalMeasure::from_points(&ys).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn h2_holds_for_both_examples() {
        let probes = grid(-10.0, 10.0, 1001);
        let r1 = check_drift_h2(
            &example1(0.5, Switching::Default).unwrap(),
            &example1_lyapunov(0.5),
            &probes,
            &measures(),
        )
        .unwrap();
        assert!(r1.all_ok(), "{}", r1.to_text());
        let r2 = check_drift_h2(
            &example2(Switching::Default).unwrap(),
            &example2_lyapunov(),
            &probes,
            &measures(),
        )
        .unwrap();
        assert!(r2.all_ok(), "{}", r2.to_text());
        assert_eq!(r2.evaluations, 1001 * 2 * 2);
    }

    #[test]
    fn h2_too_strong_rate_is_located() {
        let mut lyap = example1_lyapunov(0.5);
        lyap.lambda1 = -4.0;
        let probes = grid(-10.0, 10.0, 1001);
        let r = check_drift_h2(
            &example1(0.5, Switching::Default).unwrap(),
            &lyap,
            &probes,
            &measures(),
        )
        .unwrap();
        assert!(!r.pass);
        // Regime 2 gives LV + 4V = x^2, largest at the grid ends against δ_0.
        assert_eq!(r.worst_margin, 100.0);
        let p = r.worst.unwrap();
        assert_eq!((p.x, p.regime, p.measure), (vec![-10.0], 1, 0));
    }

    #[test]
    fn h2_margin_linear_in_lambda1() {
        let spec = example2(Switching::Default).unwrap();
        let base = example2_lyapunov();
        let mut shifted = example2_lyapunov();
        let eps = 0.125;
        shifted.lambda1 += eps;
        let stats = measures()[1].stats(spec.functionals());
        for x in grid(-3.0, 3.0, 61) {
            for i in 0..2 {
                let lv = apply_generator(&spec, &base, 0.0, &x, &stats, i).unwrap();
                let v = base.v.value(&x, i);
                let m0 = lv - base.lambda1 * v;
                let m1 = lv - shifted.lambda1 * v;
                assert!((m0 - m1 - eps * v).abs() <= 1e-12 * (1.0 + v));
            }
        }
    }

    #[test]
    fn regime_free_v_has_zero_switching_term() {
        let spec = example1(0.3, Switching::Default).unwrap();
        let lyap = example1_lyapunov(0.3);
        let stats = measures()[1].stats(spec.functionals());
        for x in grid(-5.0, 5.0, 41) {
            for i in 0..2 {
                assert_eq!(
                    generator_terms(&spec, &lyap, 0.0, &x, &stats, i)
                        .unwrap()
                        .switching,
                    0.0
                );
            }
        }
    }

    #[test]
    fn finite_differences_match_analytic() {
        let spec = example1(0.5, Switching::Default).unwrap();
        let lyap = example1_lyapunov(0.5);
        let fd = lyap.finite_difference_only();
        let stats = measures()[1].stats(spec.functionals());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0)];
            let i = rng.random_range(0..2);
            let a = apply_generator(&spec, &lyap, 0.0, &x, &stats, i).unwrap();
            let b = apply_generator(&spec, &fd, 0.0, &x, &stats, i).unwrap();
            assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn coupled_generator_swap_symmetry() {
        let spec = example1(0.5, Switching::Frozen).unwrap();
        let lyap = example1_lyapunov(0.5);
        let pair = gaussian_pairs(1, 50, 0.3);
        let smu = pair.xs.stats(spec.functionals());
        let snu = pair.ys.stats(spec.functionals());
        for k in 0..50 {
            let (x, y) = (pair.xs.atom(k), pair.ys.atom(k));
            for i in 0..2 {
                let a = apply_coupled_generator(&spec, &lyap, 0.0, x, y, &smu, &snu, i).unwrap();
                let b = apply_coupled_generator(&spec, &lyap, 0.0, y, x, &snu, &smu, i).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn contraction_example1_integral_form() {
        let spec = example1(0.5, Switching::Frozen).unwrap();
        let lyap = example1_lyapunov(0.5);
        let couplings: Vec<_> = (0..5)
            .map(|s| gaussian_pairs(s, 400, 0.5 * s as f64))
            .collect();
        let r = check_contraction(
            &spec,
            &lyap,
            &couplings,
            &[0, 1],
            ContractionTarget::rate(lyap.gamma.unwrap()),
        )
        .unwrap();
        assert!(r.pass, "{}", r.to_text());
        assert_ne!(r.form, Some(ContractionForm::Neither));
    }

    #[test]
    fn contraction_example2_pointwise() {
        let spec = example2(Switching::Default).unwrap();
        let lyap = example2_lyapunov();
        let couplings: Vec<_> = (0..5)
            .map(|s| gaussian_pairs(10 + s, 400, 0.3 * s as f64))
            .collect();
        let theta = check_contraction(
            &spec,
            &lyap,
            &couplings,
            &[0, 1],
            ContractionTarget::rate(0.5),
        )
        .unwrap();
        assert_eq!(
            theta.form,
            Some(ContractionForm::Pointwise),
            "{}",
            theta.to_text()
        );
        let gamma = check_contraction(&spec, &lyap, &couplings, &[0], ContractionTarget::rate(1.0))
            .unwrap();
        assert_eq!(gamma.form, Some(ContractionForm::Pointwise));
    }

    #[test]
    fn contraction_rate_too_high_fails() {
        let spec = example1(0.5, Switching::Frozen).unwrap();
        let lyap = example1_lyapunov(0.5);
        let couplings = vec![gaussian_pairs(7, 200, 0.0)];
        let r = check_contraction(
            &spec,
            &lyap,
            &couplings,
            &[1],
            ContractionTarget::rate(10.0),
        )
        .unwrap();
        assert!(!r.pass);
        assert_eq!(r.form, Some(ContractionForm::Neither));
        assert_eq!(r.worst.unwrap().regime, 1);
    }

    #[test]
    fn contraction_allowance_loosens() {
        let spec = example1(0.5, Switching::Frozen).unwrap();
        let lyap = example1_lyapunov(0.5);
        let couplings = vec![gaussian_pairs(9, 100, 1.0)];
        let strict =
            check_contraction(&spec, &lyap, &couplings, &[1], ContractionTarget::rate(3.5))
                .unwrap();
        let loose = check_contraction(
            &spec,
            &lyap,
            &couplings,
            &[1],
            ContractionTarget {
                rate: 3.5,
                gamma2: Some(1.0),
            },
        )
        .unwrap();
        assert!(loose.worst_margin < strict.worst_margin);
    }

    fn series(ev: &[f64]) -> TimeSeries {
        TimeSeries {
            m: 1,
            moment_names: vec![],
            records: ev
                .iter()
                .enumerate()
                .map(|(k, &v)| Record {
                    t: k as f64,
                    occupancy: vec![1.0],
                    moments: vec![],
                    moment_se: vec![],
                    ev: v,
                    ev_se: 0.0,
                    ephi: v,
                    ephi_se: 0.0,
                    snapshot: None,
                })
                .collect(),
            first_exit: None,
        }
    }

    #[test]
    fn moment_bound_cases() {
        let mut lyap = example1_lyapunov(0.0);
        lyap.lambda1 = 0.0;
        lyap.lambda2 = 0.0;
        let flat = moment_bound_check(&series(&[2.0, 2.0, 2.0]), &lyap, 0.0).unwrap();
        assert!(flat.pass);
        assert_eq!(flat.worst_relative_margin, 0.0);

        let lyap = example1_lyapunov(0.5);
        let growing = moment_bound_check(&series(&[1.0, 1.5, 2.0]), &lyap, 0.15).unwrap();
        assert!(!growing.pass);

        let mut missing = series(&[1.0]);
        missing.records[0].ev = f64::NAN;
        assert!(moment_bound_check(&missing, &lyap, 0.15).is_err());
    }

    #[test]
    fn lyapunov_audits() {
        let probes = grid(-4.0, 4.0, 33);
        assert!(audit_lyapunov(&example1_lyapunov(0.5), 2, &probes).passed());
        assert!(audit_lyapunov(&example2_lyapunov(), 2, &probes).passed());
        let mut bad = example2_lyapunov();
        bad.k_hat = Some(1.5);
        assert_eq!(audit_lyapunov(&bad, 2, &probes).k_hat_ok, Some(false));
    }

    #[test]
    fn report_text_and_csv() {
        let probes = grid(-1.0, 1.0, 5);
        let r = check_drift_h2(
            &example2(Switching::Default).unwrap(),
            &example2_lyapunov(),
            &probes,
            &measures(),
        )
        .unwrap();
        assert!(r.to_text().starts_with("[PASS] H2"));
        assert_eq!(
            r.csv_row().split(',').count(),
            DriftReport::csv_header().split(',').count()
        );
    }
}
