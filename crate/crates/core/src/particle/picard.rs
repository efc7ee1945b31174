use super::{InitSampler, ParticleEnsemble, SimConfig, Stepper};
use crate::error::Result;
use crate::measures::{ot_cost, wasserstein_1d, EmpiricalMeasure, GroundCost, OtOptions};
use crate::model::{MeasureStats, ModelSpec};

/// Successive law-flow distances of the Picard scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    /// `distances[r]` is `sup_t W2(μ^r_t, μ^{r+1}_t)` over the recording grid.
    pub distances: Vec<f64>,
    /// Per recording time, for each round.
    pub per_time: Vec<Vec<f64>>,
    pub record_times: Vec<f64>,
}

struct LawFlow {
    /// Coefficient statistics at every step index.
    stats: Vec<MeasureStats>,
    /// Ensemble at every recording time.
    snapshots: Vec<EmpiricalMeasure>,
}

fn w2(a: &EmpiricalMeasure, b: &EmpiricalMeasure, seed: u64) -> Result<f64> {
    if a.d() == 1 {
        wasserstein_1d(a, b, 2)
    } else {
        Ok(ot_cost(
            a,
            b,
            &GroundCost::Euclidean(2),
            &OtOptions::subsampled(seed),
        )?
        .value)
    }
}

/// Picard iteration on law flows.
///
/// Round 0 freezes the law at the initial empirical law. Round `r` runs the
/// particle system with coefficients reading round `r-1`'s statistics at each
/// step, which makes it a linear switching SDE. All rounds reuse the same
/// random streams. Returns `rounds` distances between successive flows.
pub fn picard_law_iteration(
    spec: &ModelSpec,
    init: &dyn InitSampler,
    cfg: &SimConfig,
    rounds: usize,
) -> Result<PicardResult> {
    if rounds == 0 {
        return Err(crate::error::Error::InvalidArgument(
            "picard iteration needs rounds >= 1".into(),
        ));
    }
    cfg.validate(spec)?;
    let steps = cfg.steps()? as usize;
    let record_steps = cfg.record_steps()?;
    let initial = ParticleEnsemble::sample(spec, init, cfg.particles, cfg.seed)?;
    let stepper = Stepper::new(spec, cfg.seed, cfg.dt, cfg.switch_mode, cfg.truncation);

    let frozen = stepper.coefficient_stats(initial.positions());
    let mut previous = LawFlow {
        stats: vec![frozen; steps + 1],
        snapshots: vec![initial.measure(); record_steps.len()],
    };
    let mut distances = Vec::with_capacity(rounds);
    let mut per_time = vec![Vec::with_capacity(rounds); record_steps.len()];
    for _ in 0..rounds {
        let mut ens = initial.clone();
        let mut stats = Vec::with_capacity(steps + 1);
        let mut snapshots = Vec::with_capacity(record_steps.len());
        let mut next_record = record_steps.iter().peekable();
        for s in 0..=steps {
            ens.t = s as f64 * cfg.dt;
            stats.push(stepper.coefficient_stats(ens.positions()));
            if next_record.peek() == Some(&&(s as u64)) {
                next_record.next();
                snapshots.push(ens.measure());
            }
            if s == steps {
                break;
            }
            stepper.advance(&mut ens, &previous.stats[s], None)?;
        }
        let mut sup: f64 = 0.0;
        for (k, (a, b)) in previous.snapshots.iter().zip(&snapshots).enumerate() {
            let w = w2(a, b, cfg.seed)?;
            per_time[k].push(w);
            sup = sup.max(w);
        }
        distances.push(sup);
        previous = LawFlow { stats, snapshots };
    }
    Ok(PicardResult {
        distances,
        per_time,
        record_times: record_steps.iter().map(|&s| s as f64 * cfg.dt).collect(),
    })
}
