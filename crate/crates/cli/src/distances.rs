//! `mvx distances`: metrics between two saved ensembles.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use mvx_core::measures::{
    ot_cost, product_weight, w_truncated, wasserstein_1d, weighted_tv_binned, BinSpec,
    EmpiricalMeasure, GroundCost, OtOptions,
};
use mvx_core::particle::read_ensemble_csv;

#[derive(Debug, Clone)]
pub struct DistanceOptions {
    /// `abs` (`V̂ = |·|`) or `square` (`V̂ = |·|²`).
    pub vhat: String,
    pub truncation: Option<f64>,
    pub bin_width: Option<f64>,
    pub seed: u64,
}

fn vhat(name: &str) -> Result<fn(&[f64]) -> f64> {
    fn abs(z: &[f64]) -> f64 {
        z.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    fn square(z: &[f64]) -> f64 {
        z.iter().map(|v| v * v).sum()
    }
    match name {
        "abs" => Ok(abs),
        "square" => Ok(square),
        other => anyhow::bail!("--vhat: expected abs or square, got `{other}`"),
    }
}

pub fn load_ensemble(path: &Path) -> Result<EmpiricalMeasure> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_ensemble_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `key=value` lines of every applicable distance.
pub fn distances(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    opts: &DistanceOptions,
) -> Result<String> {
    let f = vhat(&opts.vhat)?;
    let ot = OtOptions::subsampled(opts.seed);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "atoms_a={}\natoms_b={}\ndim={}",
        mu.len(),
        nu.len(),
        mu.d()
    );
    for p in [1u8, 2] {
        let w = if mu.d() == 1 {
            wasserstein_1d(mu, nu, p)?
        } else {
            ot_cost(mu, nu, &GroundCost::Euclidean(p), &ot)?.value
        };
        let _ = writeln!(s, "w{p}={w:.16e}");
    }
    let _ = writeln!(
        s,
        "w_vhat={:.16e}",
        ot_cost(mu, nu, &GroundCost::lyapunov(f), &ot)?.value
    );
    if mu.regimes().is_some() && nu.regimes().is_some() {
        let _ = writeln!(
            s,
            "w_d={:.16e}",
            ot_cost(mu, nu, &GroundCost::product(f), &ot)?.value
        );
    }
    if let Some(r) = opts.truncation {
        let _ = writeln!(s, "w2_truncated={:.16e}", w_truncated(mu, nu, r, &ot)?);
    }
    if let Some(width) = opts.bin_width {
        let d = mu.d();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for m in [mu, nu] {
            for k in 0..m.len() {
                for (a, &x) in m.atom(k).iter().enumerate() {
                    lo[a] = lo[a].min(x);
                    hi[a] = hi[a].max(x);
                }
            }
        }
        let hi: Vec<f64> = hi.iter().map(|h| h + width).collect();
        let tv = weighted_tv_binned(
            mu,
            nu,
            product_weight(f),
            &BinSpec::uniform(&lo, &hi, width)?,
        )?;
        let _ = writeln!(
            s,
            "weighted_tv={:.16e}\ntv_bins={}\ntv_eps_bin={:.16e}",
            tv.value, tv.bins, tv.eps_bin
        );
    }
    Ok(s)
}
