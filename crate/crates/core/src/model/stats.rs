use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Particles per reduction chunk. Partial sums are combined in chunk order,
/// which makes every reduction independent of the thread count.
pub(crate) const CHUNK: usize = 256;

/// Sums `width` accumulators over `n` items in fixed-size chunks.
pub(crate) fn chunked_sum<F>(n: usize, width: usize, add: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                add(k, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

type FunctionalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A named vector-valued test function `f: R^d -> R^p` whose integral against
/// the current law is exposed to the coefficients.
#[derive(Clone)]
pub struct Functional {
    name: String,
    dim: usize,
    f: Arc<FunctionalFn>,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Functional({}, dim={})", self.name, self.dim)
    }
}

impl Functional {
    pub fn new<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            f: Arc::new(f),
        }
    }

    /// `x` itself; its integral is the mean vector.
    pub fn mean(d: usize) -> Self {
        Self::new("mean", d, |x, out| out.copy_from_slice(x))
    }

    /// `|x|^2`.
    pub fn second_moment() -> Self {
        Self::new("second_moment", 1, |x, out| {
            out[0] = x.iter().map(|v| v * v).sum()
        })
    }

    /// `|x|`.
    pub fn abs_moment() -> Self {
        Self::new("abs_moment", 1, |x, out| {
            out[0] = x.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// The fixed list of functionals a model may read the law through.
#[derive(Debug)]
pub struct Functionals {
    d: usize,
    items: Vec<Functional>,
    offsets: Vec<usize>,
    width: usize,
}

impl Functionals {
    pub fn new(d: usize, items: Vec<Functional>) -> Result<Arc<Self>> {
        let mut offsets = Vec::with_capacity(items.len());
        let mut width = 0;
        for (k, item) in items.iter().enumerate() {
            if item.dim == 0 {
                return Err(Error::Dimension(format!(
                    "functional {} has dimension 0",
                    item.name
                )));
            }
            if items[..k].iter().any(|o| o.name == item.name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate functional name {}",
                    item.name
                )));
            }
            offsets.push(width);
            width += item.dim;
        }
        Ok(Arc::new(Self {
            d,
            items,
            offsets,
            width,
        }))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn items(&self) -> &[Functional] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of scalar components across all functionals.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Column names, one per scalar component.
    pub fn component_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width);
        for item in &self.items {
            if item.dim == 1 {
                names.push(item.name.clone());
            } else {
                names.extend((1..=item.dim).map(|c| format!("{}_{c}", item.name)));
            }
        }
        names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|f| f.name == name)
    }

    fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        for (item, &off) in self.items.iter().zip(&self.offsets) {
            item.eval(x, &mut out[off..off + item.dim]);
        }
    }

    /// Equal-weight integrals over the flat point array `points` (`N*d`).
    pub fn evaluate(self: &Arc<Self>, points: &[f64]) -> MeasureStats {
        self.evaluate_with_errors(points).0
    }

    /// Integrals together with the Monte Carlo standard error of each component.
    pub fn evaluate_with_errors(self: &Arc<Self>, points: &[f64]) -> (MeasureStats, Vec<f64>) {
        let d = self.d.max(1);
        let n = points.len() / d;
        let w = self.width;
        let sums = chunked_sum(n, 2 * w, |k, acc| {
            let mut buf = [0.0; 16];
            let mut heap;
            let vals: &mut [f64] = if w <= 16 {
                &mut buf[..w]
            } else {
                heap = vec![0.0; w];
                &mut heap
            };
            self.eval_all(&points[k * d..(k + 1) * d], vals);
            for (c, v) in vals.iter().enumerate() {
                acc[c] += v;
                acc[w + c] += v * v;
            }
        });
        let nf = n as f64;
        let mut values = vec![0.0; w];
        let mut se = vec![0.0; w];
        for c in 0..w {
            let mean = sums[c] / nf;
            values[c] = mean;
            let var = (sums[w + c] / nf - mean * mean).max(0.0);
            se[c] = if n > 1 {
                (var * nf / (nf - 1.0) / nf).sqrt()
            } else {
                0.0
            };
        }
        (
            MeasureStats {
                decl: Arc::clone(self),
                values,
            },
            se,
        )
    }

    /// Integrals against explicit weights summing to one.
    pub fn evaluate_weighted(self: &Arc<Self>, points: &[f64], weights: &[f64]) -> MeasureStats {
        let d = self.d.max(1);
        let mut values = vec![0.0; self.width];
        let mut vals = vec![0.0; self.width];
        for (k, &wk) in weights.iter().enumerate() {
            self.eval_all(&points[k * d..(k + 1) * d], &mut vals);
            for (acc, v) in values.iter_mut().zip(&vals) {
                *acc += wk * v;
            }
        }
        MeasureStats {
            decl: Arc::clone(self),
            values,
        }
    }

    /// Stats with explicitly provided values (e.g. a recorded law flow).
    pub fn with_values(self: &Arc<Self>, values: Vec<f64>) -> Result<MeasureStats> {
        if values.len() != self.width {
            return Err(Error::Dimension(format!(
                "expected {} functional values, got {}",
                self.width,
                values.len()
            )));
        }
        Ok(MeasureStats {
            decl: Arc::clone(self),
            values,
        })
    }
}

/// Current values `∫ f_k dμ` of the declared functionals.
#[derive(Debug, Clone)]
pub struct MeasureStats {
    decl: Arc<Functionals>,
    values: Vec<f64>,
}

impl MeasureStats {
    pub fn declaration(&self) -> &Arc<Functionals> {
        &self.decl
    }

    /// Value of the `k`-th declared functional.
    #[inline]
    pub fn value(&self, k: usize) -> &[f64] {
        let off = self.decl.offsets[k];
        &self.values[off..off + self.decl.items[k].dim]
    }

    /// First component of the `k`-th functional.
    #[inline]
    pub fn scalar(&self, k: usize) -> f64 {
        self.values[self.decl.offsets[k]]
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.decl.index_of(name).map(|k| self.value(k))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_second_moment() {
        let decl =
            Functionals::new(1, vec![Functional::mean(1), Functional::second_moment()]).unwrap();
        let (stats, se) = decl.evaluate_with_errors(&[1.0, 2.0, 3.0]);
        assert_eq!(stats.scalar(0), 2.0);
        assert!((stats.scalar(1) - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(stats.get("mean"), Some(&[2.0][..]));
        // sample sd of {1,2,3} is 1, so se = 1/sqrt(3)
        assert!((se[0] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn vector_components_are_named() {
        let decl =
            Functionals::new(2, vec![Functional::mean(2), Functional::abs_moment()]).unwrap();
        assert_eq!(
            decl.component_names(),
            vec!["mean_1", "mean_2", "abs_moment"]
        );
        let stats = decl.evaluate(&[3.0, 4.0, -3.0, -4.0]);
        assert_eq!(stats.value(0), &[0.0, 0.0]);
        assert_eq!(stats.scalar(1), 5.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(Functionals::new(1, vec![Functional::mean(1), Functional::mean(1)]).is_err());
    }

    #[test]
    fn reduction_independent_of_pool_size() {
        let decl = Functionals::new(1, vec![Functional::second_moment()]).unwrap();
        let pts: Vec<f64> = (0..10_007)
            .map(|k| ((k as f64) * 0.37).sin() * 1e3)
            .collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| decl.evaluate(&pts).values()[0])
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }
}
