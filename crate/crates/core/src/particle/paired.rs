use rayon::prelude::*;

use super::{
    apply_increment, observe, InitSampler, PairRecord, PairedTimeSeries, ParticleEnsemble,
    SimConfig, Stepper, TimeSeries,
};
use crate::error::{Error, Result};
use crate::model::{
    chunked_sum, evaluate_into, Generator, LyapunovSpec, ModelSpec, RegimeField, CHUNK,
};
use crate::rng::Domain;
use crate::switching::{basic_coupling, check_mode_for, meet_and_merge_on, step_coupled};

/// How the two regime chains of a pair are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimeCoupling {
    /// Meet-and-merge for constant generators, basic coupling otherwise.
    #[default]
    Auto,
    /// Independent until equal, then identical (constant generators only).
    MeetAndMerge,
    /// Basic coupling of `Q(X)` and `Q(Y)`.
    Basic,
}

fn default_coupled() -> RegimeField {
    RegimeField::of_position(|z| z.iter().map(|v| v * v).sum())
}

/// Evolves two ensembles driven by the same Brownian increments, pairing
/// particle `k` of each.
///
/// Both ensembles are sampled from the same initial streams, so equal initial
/// laws give identical pairs. Each ensemble's coefficients read its own law.
pub fn synchronous_pair_simulate(
    spec: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    init1: &dyn InitSampler,
    init2: &dyn InitSampler,
    cfg: &SimConfig,
    coupling: RegimeCoupling,
) -> Result<PairedTimeSeries> {
    cfg.validate(spec)?;
    let rates = spec.rates();
    let coupling = match coupling {
        RegimeCoupling::Auto if rates.is_constant() => RegimeCoupling::MeetAndMerge,
        RegimeCoupling::Auto => RegimeCoupling::Basic,
        RegimeCoupling::MeetAndMerge if !rates.is_constant() => {
            return Err(Error::StateDependentRates)
        }
        other => other,
    };
    if coupling == RegimeCoupling::Basic {
        let m = rates.m();
        check_mode_for(2.0 * rates.bound(), m * m, cfg.dt, cfg.switch_mode)?;
    }
    let steps = cfg.steps()?;
    let record_steps = cfg.record_steps()?;
    let mut xs = ParticleEnsemble::sample_in(spec, init1, cfg.particles, cfg.seed, Domain::Init)?;
    let mut ys = ParticleEnsemble::sample_in(spec, init2, cfg.particles, cfg.seed, Domain::Init)?;
    let stepper = Stepper::new(spec, cfg.seed, cfg.dt, cfg.switch_mode, cfg.truncation);
    let coupled = lyap
        .and_then(|l| l.coupled.clone())
        .unwrap_or_else(default_coupled);

    let (mut rx, mut ry, mut pairs) = (Vec::new(), Vec::new(), Vec::new());
    let mut next_record = record_steps.iter().peekable();
    for s in 0..=steps {
        let t = s as f64 * cfg.dt;
        xs.t = t;
        ys.t = t;
        if next_record.peek() == Some(&&s) {
            next_record.next();
            rx.push(observe(&xs, spec, lyap, t, cfg.snapshots));
            ry.push(observe(&ys, spec, lyap, t, cfg.snapshots));
            pairs.push(pair_record(&xs, &ys, &coupled, t));
        }
        if s == steps {
            break;
        }
        advance_pair(&stepper, &mut xs, &mut ys, coupling)?;
    }
    let series = |records| TimeSeries {
        m: spec.regimes().len(),
        moment_names: spec.functionals().component_names(),
        records,
        first_exit: None,
    };
    Ok(PairedTimeSeries {
        first: series(rx),
        second: series(ry),
        pairs,
    })
}

fn pair_record(
    xs: &ParticleEnsemble,
    ys: &ParticleEnsemble,
    coupled: &RegimeField,
    t: f64,
) -> PairRecord {
    let n = xs.len();
    let sums = chunked_sum(n, 5, |k, acc| {
        let z: Vec<f64> = xs
            .position(k)
            .iter()
            .zip(ys.position(k))
            .map(|(a, b)| a - b)
            .collect();
        let v = coupled.value(&z, 0);
        let differ = xs.regimes()[k] != ys.regimes()[k];
        let c = (if differ { 1.0 } else { 0.0 } + v).sqrt();
        acc[0] += v;
        acc[1] += v * v;
        acc[2] += if differ { 0.0 } else { 1.0 };
        acc[3] += c;
        acc[4] += c * c;
    });
    let nf = n as f64;
    let se = |s: f64, s2: f64| {
        let mean = s / nf;
        if n > 1 {
            ((s2 / nf - mean * mean).max(0.0) / (nf - 1.0)).sqrt()
        } else {
            0.0
        }
    };
    PairRecord {
        t,
        vtilde: sums[0] / nf,
        vtilde_se: se(sums[0], sums[1]),
        agreement: sums[2] / nf,
        cost: sums[3] / nf,
        cost_se: se(sums[3], sums[4]),
    }
}

fn advance_pair(
    stepper: &Stepper<'_>,
    xs: &mut ParticleEnsemble,
    ys: &mut ParticleEnsemble,
    coupling: RegimeCoupling,
) -> Result<()> {
    let spec = stepper.spec;
    let rates = spec.rates();
    let (d, n, m) = (spec.d(), spec.n(), rates.m());
    let (t, step, dt) = (xs.t, xs.step, stepper.dt);
    let sqdt = dt.sqrt();
    let stats_x = stepper.coefficient_stats(&xs.positions);
    let stats_y = stepper.coefficient_stats(&ys.positions);
    let eval_x = stepper.coefficient_positions(&xs.positions).into_owned();
    let eval_y = stepper.coefficient_positions(&ys.positions).into_owned();
    let q_const = rates.is_constant().then(|| rates.evaluate(&[]));
    let results: Vec<Result<()>> = xs
        .positions
        .par_chunks_mut(CHUNK * d)
        .zip(xs.regimes.par_chunks_mut(CHUNK))
        .zip(ys.positions.par_chunks_mut(CHUNK * d))
        .zip(ys.regimes.par_chunks_mut(CHUNK))
        .enumerate()
        .map(|(c, (((px, rx), py), ry))| {
            let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
            let (mut sx, mut sy) = (vec![0.0; d * n], vec![0.0; d * n]);
            let mut xi = vec![0.0; n];
            let (mut q1, mut q2) = (Generator::zeros(m), Generator::zeros(m));
            for local in 0..rx.len() {
                let k = c * CHUNK + local;
                let x = &mut px[local * d..(local + 1) * d];
                let y = &mut py[local * d..(local + 1) * d];
                let (i, j) = (rx[local], ry[local]);
                evaluate_into(
                    spec,
                    t,
                    &eval_x[k * d..(k + 1) * d],
                    &stats_x,
                    i,
                    &mut bx,
                    &mut sx,
                )?;
                evaluate_into(
                    spec,
                    t,
                    &eval_y[k * d..(k + 1) * d],
                    &stats_y,
                    j,
                    &mut by,
                    &mut sy,
                )?;
                Stepper::normals(n, &mut stepper.brownian.rng(k as u64, step), &mut xi);
                let mut rng = stepper.regime.rng(k as u64, step);
                let (ni, nj) = match (coupling, &q_const) {
                    (RegimeCoupling::MeetAndMerge, Some(q)) => {
                        meet_and_merge_on(q, rates.bound(), i, j, dt, stepper.mode, &mut rng)?
                    }
                    _ => {
                        rates.evaluate_into(x, &mut q1);
                        rates.evaluate_into(y, &mut q2);
                        let product = basic_coupling(&q1, &q2)?;
                        step_coupled(
                            &product,
                            2.0 * rates.bound(),
                            (i, j),
                            dt,
                            stepper.mode,
                            &mut rng,
                        )?
                    }
                };
                apply_increment(x, &bx, &sx, &xi, dt, sqdt);
                apply_increment(y, &by, &sy, &xi, dt, sqdt);
                if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp {
                        particle: k,
                        t: t + dt,
                    });
                }
                rx[local] = ni;
                ry[local] = nj;
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<()>>()?;
    for e in [xs, ys] {
        e.t = t + dt;
        e.step = step + 1;
    }
    Ok(())
}
