//! Mean-field particle approximation: Euler–Maruyama stepping of the
//! interacting system with per-step empirical law functionals.

mod init;
mod paired;
mod picard;
mod series;

use std::borrow::Cow;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use init::{InitLaw, InitSampler, ParticleState, PositionLaw, RegimeLaw};
pub use paired::{synchronous_pair_simulate, RegimeCoupling};
pub use picard::{picard_law_iteration, PicardResult};
pub use series::{
    fmt_f64, read_ensemble_csv, write_ensemble_csv, PairRecord, PairedTimeSeries, Record,
    TimeSeries,
};

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::model::{
    chunked_sum, evaluate_into, Generator, LyapunovSpec, MeasureStats, ModelSpec, CHUNK,
};
use crate::rng::{Domain, StreamKey};
use crate::switching::{check_mode, step_on_generator, SwitchMode};

/// Projection `φ_N(x) = N x / (N ∨ |x|)` onto the closed ball of radius `N`.
pub fn truncate(x: &[f64], radius: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    truncate_in_place(&mut out, radius);
    out
}

/// In-place [`truncate`]. Points inside the ball are left bit-for-bit intact.
pub fn truncate_in_place(x: &mut [f64], radius: f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    // slack absorbs rounding so that a second application is a no-op
    if norm > radius * (1.0 + 4.0 * f64::EPSILON) {
        for v in x.iter_mut() {
            *v = *v * radius / norm;
        }
    }
}

/// `N` particles at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub t: f64,
    /// Steps taken so far; addresses the per-step random streams.
    pub step: u64,
    pub seed: u64,
    d: usize,
    positions: Vec<f64>,
    regimes: Vec<usize>,
}

impl ParticleEnsemble {
    pub fn new(d: usize, seed: u64, particles: Vec<ParticleState>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument(
                "an ensemble needs at least one particle".into(),
            ));
        }
        let mut positions = Vec::with_capacity(particles.len() * d);
        let mut regimes = Vec::with_capacity(particles.len());
        for p in particles {
            if p.x.len() != d {
                return Err(Error::Dimension(format!(
                    "particle in R^{} for a model in R^{d}",
                    p.x.len()
                )));
            }
            if p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "initial positions must be finite".into(),
                ));
            }
            positions.extend_from_slice(&p.x);
            regimes.push(p.regime);
        }
        Ok(Self {
            t: 0.0,
            step: 0,
            seed,
            d,
            positions,
            regimes,
        })
    }

    /// Draws `n` particles; particle `k` uses stream `k` of the init domain.
    pub fn sample(spec: &ModelSpec, init: &dyn InitSampler, n: usize, seed: u64) -> Result<Self> {
        Self::sample_in(spec, init, n, seed, Domain::Init)
    }

    pub(crate) fn sample_in(
        spec: &ModelSpec,
        init: &dyn InitSampler,
        n: usize,
        seed: u64,
        domain: Domain,
    ) -> Result<Self> {
        let key = StreamKey::new(seed, domain);
        let particles: Vec<ParticleState> = (0..n)
            .into_par_iter()
            .map(|k| init.sample(k, &mut key.rng(k as u64, 0)))
            .collect();
        for p in &particles {
            spec.regimes().check(p.regime)?;
        }
        Self::new(spec.d(), seed, particles)
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.d..(k + 1) * self.d]
    }

    pub fn particle(&self, k: usize) -> ParticleState {
        ParticleState {
            x: self.position(k).to_vec(),
            regime: self.regimes[k],
        }
    }

    /// Empirical law on `R^d × M`.
    pub fn measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.d, self.positions.clone())
            .and_then(|m| m.with_regimes(self.regimes.clone()))
            .expect("ensemble positions are finite and nonempty")
    }

    fn max_norm(&self) -> f64 {
        self.positions
            .chunks(self.d)
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub particles: usize,
    pub seed: u64,
    pub switch_mode: SwitchMode,
    /// Truncation radius `N` of the localised coefficients.
    pub truncation: Option<f64>,
    /// Output times; each must lie on the step grid inside `[0, horizon]`.
    pub record_times: Vec<f64>,
    /// Keep a copy of the ensemble at every recording time.
    pub snapshots: bool,
}

impl SimConfig {
    /// Records at `0` and `horizon` only; see [`SimConfig::with_record_every`].
    pub fn new(dt: f64, horizon: f64, particles: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            particles,
            seed,
            switch_mode: SwitchMode::default(),
            truncation: None,
            record_times: vec![0.0, horizon],
            snapshots: false,
        }
    }

    /// Records on the grid `0, every, 2 every, ..` up to the horizon.
    pub fn with_record_every(mut self, every: f64) -> Self {
        let count = (self.horizon / every + 1e-9).floor() as usize;
        self.record_times = (0..=count).map(|k| k as f64 * every).collect();
        if let Some(&last) = self.record_times.last() {
            if (last - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
                self.record_times.push(self.horizon);
            }
        }
        self
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_mode(mut self, mode: SwitchMode) -> Self {
        self.switch_mode = mode;
        self
    }

    pub fn with_truncation(mut self, radius: f64) -> Self {
        self.truncation = Some(radius);
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }

    fn grid_index(&self, t: f64) -> Result<u64> {
        let k = (t / self.dt).round();
        if !(k >= 0.0) || (k * self.dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "time {t} is not on the step grid of dt = {}",
                self.dt
            )));
        }
        Ok(k as u64)
    }

    /// Number of Euler steps to the horizon.
    pub fn steps(&self) -> Result<u64> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        self.grid_index(self.horizon)
    }

    /// Step indices of the recording times, sorted and deduplicated.
    pub fn record_steps(&self) -> Result<Vec<u64>> {
        let total = self.steps()?;
        let mut out = Vec::with_capacity(self.record_times.len());
        for &t in &self.record_times {
            let k = self.grid_index(t)?;
            if k > total {
                return Err(Error::InvalidArgument(format!(
                    "record time {t} beyond horizon {}",
                    self.horizon
                )));
            }
            out.push(k);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.steps()?;
        self.record_steps()?;
        if self.particles == 0 {
            return Err(Error::InvalidArgument("particle count must be >= 1".into()));
        }
        if let Some(r) = self.truncation {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "truncation radius must be positive, got {r}"
                )));
            }
        }
        check_mode(spec.rates(), self.dt, self.switch_mode)
    }
}

/// Shared machinery of one Euler–Maruyama step.
pub(crate) struct Stepper<'a> {
    pub spec: &'a ModelSpec,
    pub dt: f64,
    pub mode: SwitchMode,
    pub truncation: Option<f64>,
    pub brownian: StreamKey,
    pub regime: StreamKey,
}

impl<'a> Stepper<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        seed: u64,
        dt: f64,
        mode: SwitchMode,
        truncation: Option<f64>,
    ) -> Self {
        Self {
            spec,
            dt,
            mode,
            truncation,
            brownian: StreamKey::new(seed, Domain::Brownian),
            regime: StreamKey::new(seed, Domain::Regime),
        }
    }

    /// Positions seen by the coefficients: `φ_N(x)` when truncating.
    pub fn coefficient_positions<'p>(&self, positions: &'p [f64]) -> Cow<'p, [f64]> {
        match self.truncation {
            None => Cow::Borrowed(positions),
            Some(r) => {
                let mut out = positions.to_vec();
                for x in out.chunks_mut(self.spec.d()) {
                    truncate_in_place(x, r);
                }
                Cow::Owned(out)
            }
        }
    }

    /// Law functionals of the (pushed-forward) ensemble.
    pub fn coefficient_stats(&self, positions: &[f64]) -> MeasureStats {
        self.spec
            .functionals()
            .evaluate(&self.coefficient_positions(positions))
    }

    pub fn normals<R: Rng>(n: usize, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut().take(n) {
            *v = rng.sample(StandardNormal);
        }
    }

    /// Advances every particle by `dt` against fixed law statistics.
    ///
    /// `noise`, when given, replaces the Gaussian draws (`N*n` values).
    pub fn advance(
        &self,
        ens: &mut ParticleEnsemble,
        stats: &MeasureStats,
        noise: Option<&[f64]>,
    ) -> Result<()> {
        let spec = self.spec;
        let (d, n) = (spec.d(), spec.n());
        let t = ens.t;
        let step = ens.step;
        let dt = self.dt;
        let sqdt = dt.sqrt();
        let rates = spec.rates();
        let eval_pos = self.coefficient_positions(&ens.positions).into_owned();
        let truncating = self.truncation.is_some();
        let results: Vec<Result<()>> = ens
            .positions
            .par_chunks_mut(CHUNK * d)
            .zip(ens.regimes.par_chunks_mut(CHUNK))
            .enumerate()
            .map(|(c, (pos, reg))| {
                let mut b = vec![0.0; d];
                let mut s = vec![0.0; d * n];
                let mut xi = vec![0.0; n];
                let mut q = Generator::zeros(rates.m());
                for (local, i) in reg.iter_mut().enumerate() {
                    let k = c * CHUNK + local;
                    let x = &mut pos[local * d..(local + 1) * d];
                    let xe = if truncating {
                        &eval_pos[k * d..(k + 1) * d]
                    } else {
                        &*x
                    };
                    evaluate_into(spec, t, xe, stats, *i, &mut b, &mut s).map_err(|e| match e {
                        Error::NonFinite { .. } => Error::BlowUp { particle: k, t },
                        other => other,
                    })?;
                    match noise {
                        Some(z) => xi.copy_from_slice(&z[k * n..(k + 1) * n]),
                        None => Self::normals(n, &mut self.brownian.rng(k as u64, step), &mut xi),
                    }
                    rates.evaluate_into(x, &mut q);
                    let next = step_on_generator(
                        &q,
                        rates.bound(),
                        *i,
                        dt,
                        self.mode,
                        &mut self.regime.rng(k as u64, step),
                    )?;
                    apply_increment(x, &b, &s, &xi, dt, sqdt);
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::BlowUp {
                            particle: k,
                            t: t + dt,
                        });
                    }
                    *i = next;
                }
                Ok(())
            })
            .collect();
        results.into_iter().collect::<Result<()>>()?;
        ens.t = t + dt;
        ens.step = step + 1;
        Ok(())
    }
}

#[inline]
pub(crate) fn apply_increment(x: &mut [f64], b: &[f64], s: &[f64], xi: &[f64], dt: f64, sqdt: f64) {
    let n = xi.len();
    for (a, xa) in x.iter_mut().enumerate() {
        let mut noise = 0.0;
        for c in 0..n {
            noise += s[a * n + c] * xi[c];
        }
        *xa += b[a] * dt + noise * sqdt;
    }
}

/// One explicit Euler–Maruyama step of the particle system.
///
/// Law functionals are computed once from the pre-step ensemble; regimes step
/// with the pre-step positions.
pub fn euler_step(
    ens: &mut ParticleEnsemble,
    spec: &ModelSpec,
    dt: f64,
    mode: SwitchMode,
) -> Result<()> {
    check_mode(spec.rates(), dt, mode)?;
    let stepper = Stepper::new(spec, ens.seed, dt, mode, None);
    let stats = stepper.coefficient_stats(&ens.positions);
    stepper.advance(ens, &stats, None)
}

/// [`euler_step`] with prescribed standard-normal increments (`N*n` values).
pub fn euler_step_with_increments(
    ens: &mut ParticleEnsemble,
    spec: &ModelSpec,
    dt: f64,
    mode: SwitchMode,
    increments: &[f64],
) -> Result<()> {
    if increments.len() != ens.len() * spec.n() {
        return Err(Error::Dimension(format!(
            "{} increments for {} particles with {} noise dimensions",
            increments.len(),
            ens.len(),
            spec.n()
        )));
    }
    check_mode(spec.rates(), dt, mode)?;
    let stepper = Stepper::new(spec, ens.seed, dt, mode, None);
    let stats = stepper.coefficient_stats(&ens.positions);
    stepper.advance(ens, &stats, Some(increments))
}

/// Ensemble summary used for every recording.
pub(crate) fn observe(
    ens: &ParticleEnsemble,
    spec: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    t: f64,
    snapshot: bool,
) -> Record {
    let n = ens.len();
    let m = spec.regimes().len();
    let d = ens.d;
    let (stats, moment_se) = spec.functionals().evaluate_with_errors(&ens.positions);
    let counts = chunked_sum(n, m, |k, acc| acc[ens.regimes[k]] += 1.0);
    let nf = n as f64;
    let (mut ev, mut ev_se, mut ephi, mut ephi_se) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if let Some(l) = lyap {
        let sums = chunked_sum(n, 4, |k, acc| {
            let x = &ens.positions[k * d..(k + 1) * d];
            let v = l.v.value(x, ens.regimes[k]);
            let p = l.phi.value(x, 0);
            acc[0] += v;
            acc[1] += v * v;
            acc[2] += p;
            acc[3] += p * p;
        });
        let se = |s: f64, s2: f64| {
            let mean = s / nf;
            if n > 1 {
                ((s2 / nf - mean * mean).max(0.0) / (nf - 1.0)).sqrt()
            } else {
                0.0
            }
        };
        ev = sums[0] / nf;
        ev_se = se(sums[0], sums[1]);
        ephi = sums[2] / nf;
        ephi_se = se(sums[2], sums[3]);
    }
    Record {
        t,
        occupancy: counts.iter().map(|c| c / nf).collect(),
        moments: stats.values().to_vec(),
        moment_se,
        ev,
        ev_se,
        ephi,
        ephi_se,
        snapshot: snapshot.then(|| ens.measure()),
    }
}

/// Runs the particle system to the horizon and records summaries.
pub fn simulate(
    spec: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    init: &dyn InitSampler,
    cfg: &SimConfig,
) -> Result<TimeSeries> {
    Ok(simulate_ensemble(spec, lyap, init, cfg)?.0)
}

/// [`simulate`], also returning the terminal ensemble.
pub fn simulate_ensemble(
    spec: &ModelSpec,
    lyap: Option<&LyapunovSpec>,
    init: &dyn InitSampler,
    cfg: &SimConfig,
) -> Result<(TimeSeries, ParticleEnsemble)> {
    cfg.validate(spec)?;
    let steps = cfg.steps()?;
    let record_steps = cfg.record_steps()?;
    let mut ens = ParticleEnsemble::sample(spec, init, cfg.particles, cfg.seed)?;
    let stepper = Stepper::new(spec, cfg.seed, cfg.dt, cfg.switch_mode, cfg.truncation);
    let mut records = Vec::with_capacity(record_steps.len());
    let mut next_record = record_steps.iter().peekable();
    let mut first_exit = None;
    for s in 0..=steps {
        let t = s as f64 * cfg.dt;
        ens.t = t;
        if let Some(r) = cfg.truncation {
            if first_exit.is_none() && ens.max_norm() > r {
                first_exit = Some(t);
            }
        }
        if next_record.peek() == Some(&&s) {
            next_record.next();
            records.push(observe(&ens, spec, lyap, t, cfg.snapshots));
        }
        if s == steps {
            break;
        }
        let stats = stepper.coefficient_stats(&ens.positions);
        stepper.advance(&mut ens, &stats, None)?;
    }
    Ok((
        TimeSeries {
            m: spec.regimes().len(),
            moment_names: spec.functionals().component_names(),
            records,
            first_exit,
        },
        ens,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientField, Functional, Functionals, RateMatrix};

    fn zero_model(m: usize) -> ModelSpec {
        let coeffs =
            CoefficientField::new(1, 1, |_, _, _, _, b| b[0] = 0.0, |_, _, _, _, s| s[0] = 0.0)
                .unwrap();
        let f = Functionals::new(1, vec![Functional::mean(1)]).unwrap();
        ModelSpec::new("zero", coeffs, RateMatrix::frozen(m).unwrap(), f).unwrap()
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(&[3.0], 2.0), vec![2.0]);
        assert_eq!(truncate(&[-1.0], 2.0), vec![-1.0]);
        assert_eq!(truncate(&[3.0, 4.0], 1.0), vec![0.6, 0.8]);
    }

    #[test]
    fn zero_dynamics_only_advance_time() {
        let spec = zero_model(1);
        let init = InitLaw::new(
            PositionLaw::UniformBox {
                lo: vec![-1.0],
                hi: vec![1.0],
            },
            RegimeLaw::Fixed(0),
        )
        .unwrap();
        let mut ens = ParticleEnsemble::sample(&spec, &init, 50, 3).unwrap();
        let before = ens.clone();
        euler_step(&mut ens, &spec, 0.1, SwitchMode::Thinning).unwrap();
        assert_eq!(ens.positions(), before.positions());
        assert_eq!(ens.regimes(), before.regimes());
        assert!((ens.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn config_grid_checks() {
        let cfg = SimConfig::new(0.01, 1.0, 10, 0).with_record_every(0.25);
        assert_eq!(cfg.record_steps().unwrap(), vec![0, 25, 50, 75, 100]);
        let bad = SimConfig::new(0.01, 1.0, 10, 0).with_record_times(vec![0.123]);
        assert!(bad.record_steps().is_err());
        assert!(SimConfig::new(0.0, 1.0, 10, 0).steps().is_err());
        assert!(SimConfig::new(0.01, 1.0, 10, 0)
            .with_record_times(vec![2.0])
            .record_steps()
            .is_err());
    }

    #[test]
    fn blow_up_names_the_particle() {
        let coeffs = CoefficientField::new(
            1,
            1,
            |_, x, _, _, b| b[0] = if x[0] > 0.5 { f64::MAX } else { 0.0 },
            |_, _, _, _, s| s[0] = 0.0,
        )
        .unwrap();
        let f = Functionals::new(1, vec![]).unwrap();
        let spec = ModelSpec::new("boom", coeffs, RateMatrix::frozen(1).unwrap(), f).unwrap();
        let particles = vec![
            ParticleState {
                x: vec![0.0],
                regime: 0,
            },
            ParticleState {
                x: vec![1.0],
                regime: 0,
            },
        ];
        let mut ens = ParticleEnsemble::new(1, 0, particles).unwrap();
        // f64::MAX * dt stays finite; twice that does not
        let err = euler_step(&mut ens, &spec, 2.0, SwitchMode::Thinning).unwrap_err();
        assert!(matches!(err, Error::BlowUp { particle: 1, .. }), "{err}");
    }

    #[test]
    fn exit_time_is_flagged() {
        let coeffs =
            CoefficientField::new(1, 1, |_, _, _, _, b| b[0] = 1.0, |_, _, _, _, s| s[0] = 0.0)
                .unwrap();
        let f = Functionals::new(1, vec![]).unwrap();
        let spec = ModelSpec::new("drift", coeffs, RateMatrix::frozen(1).unwrap(), f).unwrap();
        let cfg = SimConfig::new(0.25, 2.0, 3, 0).with_truncation(1.0);
        let series = simulate(&spec, None, &InitLaw::point(&[0.0], 0), &cfg).unwrap();
        assert_eq!(series.first_exit, Some(1.25));
    }
}
