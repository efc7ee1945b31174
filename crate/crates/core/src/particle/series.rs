use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Ensemble summary at one recording time.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    /// Fraction of particles in each regime.
    pub occupancy: Vec<f64>,
    /// Declared functional values, one per scalar component.
    pub moments: Vec<f64>,
    pub moment_se: Vec<f64>,
    /// `E V(X, α)`; `NaN` without a Lyapunov spec.
    pub ev: f64,
    pub ev_se: f64,
    /// `E φ(X)`; `NaN` without a Lyapunov spec.
    pub ephi: f64,
    pub ephi_se: f64,
    pub snapshot: Option<EmpiricalMeasure>,
}

/// Recorded output of [`simulate`](crate::particle::simulate).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub m: usize,
    pub moment_names: Vec<String>,
    pub records: Vec<Record>,
    /// First step time at which a particle left the truncation ball.
    pub first_exit: Option<f64>,
}

impl TimeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// `(t, E V, standard error)` per record.
    pub fn ev(&self) -> Result<Vec<(f64, f64, f64)>> {
        if self.records.iter().any(|r| r.ev.is_nan()) {
            return Err(Error::MissingColumn("EV"));
        }
        Ok(self.records.iter().map(|r| (r.t, r.ev, r.ev_se)).collect())
    }

    /// `(t, E φ, standard error)` per record.
    pub fn ephi(&self) -> Result<Vec<(f64, f64, f64)>> {
        if self.records.iter().any(|r| r.ephi.is_nan()) {
            return Err(Error::MissingColumn("Ephi"));
        }
        Ok(self
            .records
            .iter()
            .map(|r| (r.t, r.ephi, r.ephi_se))
            .collect())
    }

    /// `(t, value, standard error)` of a named moment component.
    pub fn moment(&self, name: &str) -> Option<Vec<(f64, f64, f64)>> {
        let c = self.moment_names.iter().position(|n| n == name)?;
        Some(
            self.records
                .iter()
                .map(|r| (r.t, r.moments[c], r.moment_se[c]))
                .collect(),
        )
    }

    pub fn record_at(&self, t: f64) -> Option<&Record> {
        self.records
            .iter()
            .find(|r| (r.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.m).map(|i| format!("regime_occupancy_{i}")));
        cols.extend(self.moment_names.iter().map(|n| format!("moment_{n}")));
        cols.push("EV".into());
        cols.push("Ephi".into());
        cols
    }

    pub(crate) fn row(&self, k: usize) -> Vec<String> {
        let r = &self.records[k];
        let mut row = vec![fmt_f64(r.t)];
        row.extend(r.occupancy.iter().map(|&v| fmt_f64(v)));
        row.extend(r.moments.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(r.ev));
        row.push(fmt_f64(r.ephi));
        row
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header().join(","))?;
        for k in 0..self.records.len() {
            writeln!(w, "{}", self.row(k).join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Coupling statistics of a synchronously driven pair at one recording time.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub t: f64,
    /// `E Ṽ(X − Y)`.
    pub vtilde: f64,
    pub vtilde_se: f64,
    /// Fraction of pairs with equal regimes.
    pub agreement: f64,
    /// `E √(1_{α≠α̃} + V̂(X − Y))`, an upper bound for `W_d`.
    pub cost: f64,
    pub cost_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTimeSeries {
    pub first: TimeSeries,
    pub second: TimeSeries,
    pub pairs: Vec<PairRecord>,
}

impl PairedTimeSeries {
    pub fn header(&self) -> Vec<String> {
        let mut cols = self.first.header();
        cols.extend(["pair_vtilde", "pair_agreement", "pair_cost"].map(String::from));
        cols
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header().join(","))?;
        for (k, p) in self.pairs.iter().enumerate() {
            let mut row = self.first.row(k);
            row.push(fmt_f64(p.vtilde));
            row.push(fmt_f64(p.agreement));
            row.push(fmt_f64(p.cost));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Writes an ensemble as `x_1..x_d,regime` rows (regimes 1-based).
pub fn write_ensemble_csv<W: Write>(measure: &EmpiricalMeasure, mut w: W) -> io::Result<()> {
    let d = measure.d();
    let mut cols: Vec<String> = (1..=d).map(|a| format!("x_{a}")).collect();
    cols.push("regime".into());
    writeln!(w, "{}", cols.join(","))?;
    for k in 0..measure.len() {
        let mut row: Vec<String> = measure.atom(k).iter().map(|&v| fmt_f64(v)).collect();
        row.push((measure.regime(k).unwrap_or(0) + 1).to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads the format written by [`write_ensemble_csv`].
pub fn read_ensemble_csv(text: &str) -> Result<EmpiricalMeasure> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.iter().filter(|c| c.starts_with("x_")).count();
    let has_regime = cols.last() == Some(&"regime");
    if d == 0 || cols.len() != d + has_regime as usize {
        return Err(Error::InvalidArgument(format!(
            "unrecognised ensemble header {header:?}"
        )));
    }
    let mut atoms = Vec::new();
    let mut regimes = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected {} fields",
                ln + 2,
                cols.len()
            )));
        }
        for f in &fields[..d] {
            atoms.push(
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 2)))?,
            );
        }
        if has_regime {
            let r: usize = fields[d]
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 2)))?;
            if r == 0 {
                return Err(Error::InvalidArgument(format!(
                    "line {}: regimes are 1-based",
                    ln + 2
                )));
            }
            regimes.push(r - 1);
        }
    }
    let m = EmpiricalMeasure::new(d, atoms)?;
    if has_regime {
        m.with_regimes(regimes)
    } else {
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        let v = std::f64::consts::PI;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn ensemble_csv_round_trip() {
        let m = EmpiricalMeasure::new(2, vec![0.1, -2.0, 3.5, 1e-300])
            .unwrap()
            .with_regimes(vec![0, 1])
            .unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&m, &mut buf).unwrap();
        let back = read_ensemble_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
