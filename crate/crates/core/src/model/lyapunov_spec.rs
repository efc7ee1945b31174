use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ValueFn = dyn Fn(&[f64], usize) -> f64 + Send + Sync;
type DerivFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;

/// Finite-difference step used when no analytic derivative is supplied.
pub fn fd_step(x: &[f64]) -> f64 {
    1e-5 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// A scalar function of `(x, regime)` with optional analytic derivatives.
///
/// Missing derivatives fall back to central differences with step [`fd_step`].
/// Functions that ignore the regime (`Ṽ`, `V̂`, `φ`) are evaluated with regime 0.
#[derive(Clone)]
pub struct RegimeField {
    value: Arc<ValueFn>,
    gradient: Option<Arc<DerivFn>>,
    hessian: Option<Arc<DerivFn>>,
}

impl fmt::Debug for RegimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegimeField")
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl RegimeField {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    /// Regime-independent function of `x`.
    pub fn of_position<F>(value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(move |x, _| value(x))
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// Hessian callback writing a row-major `d x d` matrix.
    pub fn with_hessian<H>(mut self, h: H) -> Self
    where
        H: Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(h));
        self
    }

    /// The same function with analytic derivatives removed.
    pub fn finite_difference_only(&self) -> Self {
        Self {
            value: Arc::clone(&self.value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.gradient.is_some() && self.hessian.is_some()
    }

    #[inline]
    pub fn value(&self, x: &[f64], i: usize) -> f64 {
        (self.value)(x, i)
    }

    pub fn gradient(&self, x: &[f64], i: usize, out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            return g(x, i, out);
        }
        let h = fd_step(x);
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let up = self.value(&probe, i);
            probe[k] = x[k] - h;
            let down = self.value(&probe, i);
            probe[k] = x[k];
            out[k] = (up - down) / (2.0 * h);
        }
    }

    pub fn hessian(&self, x: &[f64], i: usize, out: &mut [f64]) {
        if let Some(hf) = &self.hessian {
            return hf(x, i, out);
        }
        let d = x.len();
        let h = fd_step(x);
        let f0 = self.value(x, i);
        let mut p = x.to_vec();
        for a in 0..d {
            p[a] = x[a] + h;
            let up = self.value(&p, i);
            p[a] = x[a] - h;
            let down = self.value(&p, i);
            p[a] = x[a];
            out[a * d + a] = (up - 2.0 * f0 + down) / (h * h);
            for b in a + 1..d {
                let mut corner = |sa: f64, sb: f64| {
                    p[a] = x[a] + sa * h;
                    p[b] = x[b] + sb * h;
                    let v = self.value(&p, i);
                    p[a] = x[a];
                    p[b] = x[b];
                    v
                };
                let mixed = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * h * h);
                out[a * d + b] = mixed;
                out[b * d + a] = mixed;
            }
        }
    }
}

/// Lyapunov data: `V(x,i)`, `φ`, the coupled function `Ṽ`/`V̂` and the rate
/// constants the hypotheses are checked against.
#[derive(Clone, Debug)]
pub struct LyapunovSpec {
    pub v: RegimeField,
    pub phi: RegimeField,
    /// `Ṽ` (no switching) or `V̂` (with switching), a function of `x - y`.
    pub coupled: Option<RegimeField>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Contraction rate without switching.
    pub gamma: Option<f64>,
    /// Per-regime contraction rate with switching.
    pub theta: Option<f64>,
    /// Constant in `V̂(x−y) ≤ K max{V̂(x), V̂(y)}`, when known.
    pub k_hat: Option<f64>,
}

impl LyapunovSpec {
    pub fn new(v: RegimeField, phi: RegimeField, lambda1: f64, lambda2: f64) -> Self {
        Self {
            v,
            phi,
            coupled: None,
            lambda1,
            lambda2,
            gamma: None,
            theta: None,
            k_hat: None,
        }
    }

    pub fn with_coupled(mut self, coupled: RegimeField) -> Self {
        self.coupled = Some(coupled);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    /// `λ1 + λ2`, the exponent of the moment bound.
    pub fn moment_rate(&self) -> f64 {
        self.lambda1 + self.lambda2
    }

    pub fn coupled(&self) -> Result<&RegimeField> {
        self.coupled
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("Lyapunov spec has no coupled function".into()))
    }

    /// Derivatives replaced by finite differences everywhere.
    pub fn finite_difference_only(&self) -> Self {
        Self {
            v: self.v.finite_difference_only(),
            phi: self.phi.clone(),
            coupled: self
                .coupled
                .as_ref()
                .map(RegimeField::finite_difference_only),
            ..self.clone()
        }
    }

    pub fn uses_finite_differences(&self) -> bool {
        !self.v.has_analytic_derivatives()
            || self
                .coupled
                .as_ref()
                .is_some_and(|c| !c.has_analytic_derivatives())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn quartic() -> RegimeField {
        // V(x, i) = (i+1) * (|x|^4 / 4 + x_0 x_1)
        RegimeField::new(|x, i| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (i as f64 + 1.0) * (r2 * r2 / 4.0 + x[0] * x[1])
        })
        .with_gradient(|x, i, g| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let c = i as f64 + 1.0;
            g[0] = c * (r2 * x[0] + x[1]);
            g[1] = c * (r2 * x[1] + x[0]);
        })
        .with_hessian(|x, i, h| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let c = i as f64 + 1.0;
            h[0] = c * (r2 + 2.0 * x[0] * x[0]);
            h[3] = c * (r2 + 2.0 * x[1] * x[1]);
            h[1] = c * (2.0 * x[0] * x[1] + 1.0);
            h[2] = h[1];
        })
    }

    #[test]
    fn finite_differences_match_analytic() {
        let f = quartic();
        let fd = f.finite_difference_only();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let i = rng.random_range(0..2);
            let (mut ga, mut gf, mut ha, mut hf) = ([0.0; 2], [0.0; 2], [0.0; 4], [0.0; 4]);
            f.gradient(&x, i, &mut ga);
            fd.gradient(&x, i, &mut gf);
            f.hessian(&x, i, &mut ha);
            fd.hessian(&x, i, &mut hf);
            let gnorm = ga.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
            let hnorm = ha.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
            for k in 0..2 {
                assert!((ga[k] - gf[k]).abs() / gnorm < 1e-5, "grad {x:?}");
            }
            for k in 0..4 {
                assert!(
                    (ha[k] - hf[k]).abs() / hnorm < 1e-5,
                    "hess {x:?}: {ha:?} vs {hf:?}"
                );
            }
        }
    }

    #[test]
    fn fd_step_scales_with_norm() {
        assert_eq!(fd_step(&[0.0]), 1e-5);
        assert!((fd_step(&[3.0, 4.0]) - 6e-5).abs() < 1e-18);
    }
}
