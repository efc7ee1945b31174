//! Experiment orchestration and artifact writing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mvx_core::builtin::{self, Switching};
use mvx_core::fit::{fit_log_rate, RateFit};
use mvx_core::lyapunov::{
    audit_lyapunov, check_contraction, check_drift_h2, gaussian_couplings, moment_bound_check,
    ContractionTarget, DriftReport,
};
use mvx_core::measures::{ot_cost, EmpiricalMeasure, GroundCost, OtOptions};
use mvx_core::model::{validate_q_property, LyapunovSpec, ModelSpec};
use mvx_core::particle::{
    fmt_f64, picard_law_iteration, simulate_ensemble, synchronous_pair_simulate,
    write_ensemble_csv, RegimeCoupling, SimConfig,
};
use mvx_core::switching::spectral_gap;

use crate::config::{ExperimentConfig, Kind};

/// One embedded assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Everything an experiment produced, before anything touches the disk.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    /// `key=value` results for the metadata file.
    pub results: Vec<(String, String)>,
    /// Output files as `(name, contents)`.
    pub files: Vec<(String, String)>,
    /// Human-readable summary.
    pub report: String,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn result(&mut self, key: &str, value: impl ToString) {
        self.results.push((key.into(), value.to_string()));
    }

    fn check(&mut self, check: Check) {
        let _ = writeln!(
            self.report,
            "[{}] {}: {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
        self.checks.push(check);
    }

    fn fit(&mut self, prefix: &str, fit: &RateFit) {
        self.result(&format!("{prefix}slope"), fmt_f64(fit.slope));
        self.result(&format!("{prefix}slope_se"), fmt_f64(fit.slope_se));
        self.result(&format!("{prefix}slope_ci_low"), fmt_f64(fit.ci.0));
        self.result(&format!("{prefix}slope_ci_high"), fmt_f64(fit.ci.1));
        self.result(&format!("{prefix}fit_points"), fit.used);
        self.result(&format!("{prefix}fit_discarded"), fit.discarded);
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.0 == name)
            .map(|f| f.1.as_str())
    }
}

fn sim_config(cfg: &ExperimentConfig) -> Result<SimConfig> {
    let mut sim = SimConfig::new(cfg.sim.dt, cfg.horizon(), cfg.sim.particles, cfg.sim.seed)
        .with_record_every(cfg.sim.record_every)
        .with_mode(cfg.switch_mode()?);
    if let Some(r) = cfg.sim.truncation.filter(|&r| r > 0.0) {
        sim = sim.with_truncation(r);
    }
    Ok(sim)
}

fn model(cfg: &ExperimentConfig) -> Result<(ModelSpec, LyapunovSpec)> {
    let spec = builtin::model(&cfg.model.name, cfg.model.beta, cfg.switching()?)?;
    let lyap = builtin::lyapunov(&cfg.model.name, cfg.model.beta)?;
    Ok((spec, lyap))
}

fn window(cfg: &ExperimentConfig) -> Option<(f64, f64)> {
    cfg.experiment.fit_window.map(|[a, b]| (a, b))
}

fn ensemble_csv(measure: &EmpiricalMeasure) -> String {
    let mut buf = Vec::new();
    write_ensemble_csv(measure, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv is ascii")
}

/// Runs the configured experiment on a pool with `sim.threads` workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sim.threads)
        .build()
        .context("building the thread pool")?;
    pool.install(|| execute(cfg))
}

/// Runs the configured experiment on the current thread pool.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = match cfg.experiment.kind {
        Kind::MomentDecay => moment_decay(cfg)?,
        Kind::Contraction => contraction(cfg)?,
        Kind::ContractionSwitching => contraction_switching(cfg)?,
        Kind::Picard => picard(cfg)?,
        Kind::Verify => verify(cfg)?,
        Kind::Invariant => invariant(cfg)?,
    };
    let verdict = if out.pass() { "PASS" } else { "FAIL" };
    let _ = writeln!(
        out.report,
        "{} {}: {verdict}",
        cfg.experiment.kind, cfg.model.name
    );
    Ok(out)
}

fn moment_decay(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (spec, lyap) = model(cfg)?;
    let (init, _) = cfg.init_laws()?;
    let (series, ens) = simulate_ensemble(&spec, Some(&lyap), &init, &sim_config(cfg)?)?;
    let mut out = Outcome::default();
    out.files
        .push(("moment-decay.csv".into(), series.to_csv_string()));
    out.files
        .push(("ensemble.csv".into(), ensemble_csv(&ens.measure())));

    let rate = lyap.moment_rate();
    let delta = cfg.experiment.delta_stat;
    out.result("rate_bound", fmt_f64(rate));

    let ephi = series.ephi()?;
    let phi0 = ephi[0].1;
    let mut worst = f64::NEG_INFINITY;
    let mut phi_ok = true;
    for &(t, v, _) in &ephi {
        let bound = (rate * t).exp() * phi0;
        worst = worst.max(v / bound - 1.0);
        phi_ok &= v <= bound * (1.0 + delta);
    }
    out.result("phi_worst_relative_margin", fmt_f64(worst));
    out.check(Check::new(
        "phi_bound",
        phi_ok,
        format!("E phi(X_t) <= exp({rate:.6} t) E phi(X_0) (1+{delta}) at every recorded t; worst ratio - 1 = {worst:.4}"),
    ));

    let ev = moment_bound_check(&series, &lyap, delta)?;
    out.result(
        "ev_worst_relative_margin",
        fmt_f64(ev.worst_relative_margin),
    );
    out.check(Check::new(
        "moment_bound",
        ev.pass,
        format!(
            "E V(X_t, a_t) <= exp({rate:.6} t) E V(X_0, a_0) (1+{delta}); worst ratio - 1 = {:.4}",
            ev.worst_relative_margin
        ),
    ));

    let fit = fit_log_rate(&ephi, window(cfg))?;
    out.fit("", &fit);
    let tol = cfg.experiment.slope_tol.unwrap_or(0.15);
    out.check(Check::new(
        "slope",
        fit.slope <= rate + tol,
        format!(
            "fitted slope {:.4} <= {:.4} (bound {rate:.4} + {tol})",
            fit.slope,
            rate + tol
        ),
    ));
    Ok(out)
}

fn contraction(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (spec, lyap) = model(cfg)?;
    let (a, b) = cfg.init_laws()?;
    let paired = synchronous_pair_simulate(
        &spec,
        Some(&lyap),
        &a,
        &b,
        &sim_config(cfg)?,
        RegimeCoupling::Auto,
    )?;
    let mut out = Outcome::default();
    out.files
        .push(("contraction.csv".into(), paired.to_csv_string()));
    let gamma = lyap
        .gamma
        .ok_or_else(|| anyhow::anyhow!("model {} has no contraction rate", cfg.model.name))?;
    let rows: Vec<_> = paired
        .pairs
        .iter()
        .map(|r| (r.t, r.vtilde, r.vtilde_se))
        .collect();
    let fit = fit_log_rate(&rows, window(cfg))?;
    out.result("gamma", fmt_f64(gamma));
    out.fit("", &fit);
    let tol = cfg.experiment.slope_tol.unwrap_or(0.15);
    out.check(Check::new(
        "slope",
        fit.slope <= -gamma + tol,
        format!(
            "fitted slope of log E V~(X_t - Y_t) {:.4} <= {:.4} (-gamma + {tol})",
            fit.slope,
            -gamma + tol
        ),
    ));
    Ok(out)
}

fn contraction_switching(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (spec, lyap) = model(cfg)?;
    if !spec.rates().is_constant() {
        bail!("contraction-switching needs a constant generator (model.switching = \"symmetric\" or \"default\" on example1)");
    }
    let (a, b) = cfg.init_laws()?;
    let paired = synchronous_pair_simulate(
        &spec,
        Some(&lyap),
        &a,
        &b,
        &sim_config(cfg)?,
        RegimeCoupling::Auto,
    )?;
    let mut out = Outcome::default();
    out.files
        .push(("contraction-switching.csv".into(), paired.to_csv_string()));

    let theta = lyap.theta.ok_or_else(|| {
        anyhow::anyhow!(
            "model {} has no per-regime contraction rate",
            cfg.model.name
        )
    })?;
    let gap = spectral_gap(&spec.rates().evaluate(&[0.0]));
    let theta_tilde = 0.25 * theta.min(gap);
    out.result("theta", fmt_f64(theta));
    out.result("theta_c", fmt_f64(gap));
    out.result("theta_tilde", fmt_f64(theta_tilde));

    let rows: Vec<_> = paired
        .pairs
        .iter()
        .map(|r| (r.t, r.cost, r.cost_se))
        .collect();
    let fit = fit_log_rate(&rows, window(cfg))?;
    out.fit("", &fit);
    out.check(Check::new(
        "decay",
        fit.slope < 0.0 && fit.ci_excludes_zero(),
        format!(
            "slope {:.4}, 95% CI [{:.4}, {:.4}] excludes 0",
            fit.slope, fit.ci.0, fit.ci.1
        ),
    ));
    let tol = cfg.experiment.slope_tol.unwrap_or(0.1);
    out.check(Check::new(
        "slope",
        fit.slope <= -theta_tilde + tol,
        format!(
            "slope {:.4} <= {:.4} (-theta~ + {tol})",
            fit.slope,
            -theta_tilde + tol
        ),
    ));
    let last = paired.pairs.last().expect("a horizon record exists");
    out.result("final_agreement", fmt_f64(last.agreement));
    out.check(Check::new(
        "agreement",
        last.agreement >= cfg.experiment.agreement_min,
        format!(
            "regime agreement {:.4} at t = {} >= {}",
            last.agreement, last.t, cfg.experiment.agreement_min
        ),
    ));
    Ok(out)
}

fn picard(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (spec, _) = model(cfg)?;
    let (init, _) = cfg.init_laws()?;
    let result = picard_law_iteration(&spec, &init, &sim_config(cfg)?, cfg.experiment.rounds)?;
    let mut out = Outcome::default();
    let mut csv = String::from("round,w2\n");
    for (r, d) in result.distances.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", r + 1, fmt_f64(*d));
    }
    out.files.push(("picard.csv".into(), csv));
    let mut per_time = String::from("t");
    for r in 1..=result.distances.len() {
        let _ = write!(per_time, ",round_{r}");
    }
    per_time.push('\n');
    for (t, row) in result.record_times.iter().zip(&result.per_time) {
        per_time += &fmt_f64(*t);
        for d in row {
            per_time.push(',');
            per_time += &fmt_f64(*d);
        }
        per_time.push('\n');
    }
    out.files.push(("picard-per-time.csv".into(), per_time));
    let list: Vec<String> = result
        .distances
        .iter()
        .map(|d| format!("{d:.6e}"))
        .collect();
    out.result("distances", list.join(" "));
    out.check(Check::new(
        "decreasing",
        result.distances.windows(2).all(|w| w[1] < w[0]),
        format!(
            "successive sup_t W2 distances strictly decrease: {}",
            list.join(" > ")
        ),
    ));
    Ok(out)
}

/// `n` evenly spaced probes on `[-radius, radius]`.
pub fn probe_grid(radius: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| vec![-radius + 2.0 * radius * k as f64 / (n - 1) as f64])
        .collect()
}

fn grid_measure(lo: f64, hi: f64, n: usize) -> Result<EmpiricalMeasure> {
    let pts: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64)
        .collect();
    Ok(EmpiricalMeasure::from_points(&pts)?)
}

fn report_check(out: &mut Outcome, rows: &mut Vec<String>, name: &str, mut r: DriftReport) {
    r.check = name.into();
    out.report += &r.to_text();
    rows.push(r.csv_row());
    out.result(&format!("{name}_worst_margin"), fmt_f64(r.worst_margin));
    if let Some(form) = r.form {
        out.result(&format!("{name}_form"), form);
    }
    out.checks
        .push(Check::new(name, r.all_ok(), r.description.clone()));
}

/// Hypothesis audits of a builtin model.
pub fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let name = cfg.model.name.as_str();
    let beta = cfg.model.beta;
    let lyap = builtin::lyapunov(name, beta)?;
    let spec = builtin::model(name, beta, Switching::Default)?;
    let frozen = builtin::model(name, beta, Switching::Frozen)?;
    let probes = probe_grid(cfg.experiment.probe_radius, cfg.experiment.probes);
    let m = spec.regimes().len();
    let mut out = Outcome::default();

    let q = validate_q_property(spec.rates(), &probes)?;
    out.check(Check::new(
        "q-property",
        q.passed(),
        format!(
            "{} probes, max |q_ij| = {:.6} <= bound {:.6}",
            probes.len(),
            q.max_magnitude,
            spec.rates().bound()
        ),
    ));
    let audit = audit_lyapunov(&lyap, m, &probes);
    out.check(Check::new(
        "lyapunov-spec",
        audit.passed(),
        format!(
            "V >= 0: {}, phi <= V: {}, V~(0) = 0: {:?}, K_hat holds: {:?}",
            audit.v_nonnegative, audit.phi_below_v, audit.coupled_vanishes_at_zero, audit.k_hat_ok
        ),
    ));

    let measures = vec![
        EmpiricalMeasure::dirac(&[0.0])?,
        EmpiricalMeasure::dirac(&[3.0])?,
        grid_measure(-1.0, 1.0, 200)?,
        grid_measure(0.0, 2.0, 200)?,
    ];
    let h2 = check_drift_h2(&spec, &lyap, &probes, &measures)?;
    let mut rows = Vec::new();
    report_check(&mut out, &mut rows, "H2", h2);

    let couplings = gaussian_couplings(1, 6, 500, cfg.sim.seed)?;
    if let Some(gamma) = lyap.gamma {
        // without switching the chain stays in regime 1
        let h5 = check_contraction(
            &frozen,
            &lyap,
            &couplings,
            &[0],
            ContractionTarget::rate(gamma),
        )?;
        report_check(&mut out, &mut rows, "H5", h5);
    }
    if let Some(theta) = lyap.theta {
        let all: Vec<usize> = (0..m).collect();
        let h6 = check_contraction(
            &spec,
            &lyap,
            &couplings,
            &all,
            ContractionTarget::rate(theta),
        )?;
        report_check(&mut out, &mut rows, "H6", h6);
    }
    let mut csv = format!("{}\n", DriftReport::csv_header());
    for r in rows {
        csv += &r;
        csv.push('\n');
    }
    out.files.push(("verify.csv".into(), csv));
    out.files.push(("verify.txt".into(), out.report.clone()));
    Ok(out)
}

fn invariant(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (spec, lyap) = model(cfg)?;
    let (a, b) = cfg.init_laws()?;
    let horizon = cfg.horizon();
    let every = cfg.sim.record_every.max(horizon / 10.0);
    let sim = sim_config(cfg)?.with_record_every(every).with_snapshots();
    let (sa, ea) = simulate_ensemble(&spec, Some(&lyap), &a, &sim)?;
    let (sb, eb) = simulate_ensemble(&spec, Some(&lyap), &b, &sim)?;
    let cost = GroundCost::product_field(lyap.coupled()?);
    let terminal = ea.measure();
    let mut out = Outcome::default();
    let mut csv = String::from("t,w_d,w_d_first_to_terminal\n");
    let mut rows = Vec::new();
    for (k, (ra, rb)) in sa.records.iter().zip(&sb.records).enumerate() {
        let (ma, mb) = (ra.snapshot.as_ref(), rb.snapshot.as_ref());
        let (ma, mb) = ma.zip(mb).context("snapshots missing")?;
        let opts = OtOptions::subsampled(cfg.sim.seed.wrapping_add(k as u64));
        let between = ot_cost(ma, mb, &cost, &opts)?.value;
        let to_terminal = ot_cost(ma, &terminal, &cost, &opts)?.value;
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_f64(ra.t),
            fmt_f64(between),
            fmt_f64(to_terminal)
        );
        rows.push((ra.t, between));
    }
    out.files.push(("invariant.csv".into(), csv));
    out.files
        .push(("ensemble_a.csv".into(), ensemble_csv(&terminal)));
    out.files
        .push(("ensemble_b.csv".into(), ensemble_csv(&eb.measure())));
    out.result("record_every", fmt_f64(every));
    let (first, last) = (rows[0].1, rows[rows.len() - 1].1);
    out.result("w_d_initial", fmt_f64(first));
    out.result("w_d_final", fmt_f64(last));
    out.check(Check::new(
        "contracts",
        last < first,
        format!("W_d between the two flows: {first:.4} at t = 0, {last:.4} at t = {horizon}"),
    ));
    Ok(out)
}

/// Writes the experiment files, `metadata.txt` and `config.toml` into
/// `output.dir`; returns the directory.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    out: &Outcome,
    elapsed_seconds: f64,
) -> Result<PathBuf> {
    let dir = Path::new(&cfg.output.dir);
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in &out.files {
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).context("writing config.toml")?;
    std::fs::write(
        dir.join("metadata.txt"),
        metadata(cfg, out, elapsed_seconds),
    )
    .context("writing metadata.txt")?;
    Ok(dir.to_path_buf())
}

/// `key=value` run metadata.
pub fn metadata(cfg: &ExperimentConfig, out: &Outcome, elapsed_seconds: f64) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("mvx_version", &env!("CARGO_PKG_VERSION"));
    kv("kind", &cfg.experiment.kind);
    kv("model", &cfg.model.name);
    kv("beta", &cfg.model.beta);
    kv(
        "switching",
        &cfg.model.switching.as_deref().unwrap_or("default"),
    );
    kv("seed", &cfg.sim.seed);
    kv("particles", &cfg.sim.particles);
    kv("dt", &cfg.sim.dt);
    kv("horizon", &cfg.horizon());
    kv("switch_mode", &cfg.sim.switch_mode);
    kv(
        "truncation",
        &cfg.sim
            .truncation
            .map_or("none".to_string(), |r| r.to_string()),
    );
    kv("threads", &cfg.sim.threads);
    kv("config", &"config.toml");
    let files: Vec<&str> = out.files.iter().map(|f| f.0.as_str()).collect();
    kv("files", &files.join(" "));
    for (k, v) in &out.results {
        kv(k, v);
    }
    for c in &out.checks {
        kv(
            &format!("check_{}", c.name),
            &if c.pass { "pass" } else { "fail" },
        );
    }
    kv("pass", &out.pass());
    kv("elapsed_seconds", &format!("{elapsed_seconds:.3}"));
    s
}
