//! Coordinate charts: named coordinates with a box-shaped sampling domain.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart needs at least one coordinate")]
    Empty,
    #[error("chart has {labels} labels but {intervals} intervals")]
    LengthMismatch { labels: usize, intervals: usize },
    #[error("duplicate coordinate label `{0}`")]
    DuplicateLabel(String),
    #[error("interval for `{label}` is empty or not finite: [{lo}, {hi}]")]
    BadInterval { label: String, lo: f64, hi: f64 },
}

/// An n-dimensional chart: coordinate labels plus one closed interval per
/// coordinate from which sample points are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    labels: Vec<String>,
    bounds: Vec<(f64, f64)>,
}

impl Chart {
    pub fn new<S: Into<String>>(labels: Vec<S>, bounds: Vec<(f64, f64)>) -> Result<Self, ChartError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(ChartError::Empty);
        }
        if labels.len() != bounds.len() {
            return Err(ChartError::LengthMismatch {
                labels: labels.len(),
                intervals: bounds.len(),
            });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(ChartError::DuplicateLabel(l.clone()));
            }
        }
        for (l, &(lo, hi)) in labels.iter().zip(&bounds) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ChartError::BadInterval {
                    label: l.clone(),
                    lo,
                    hi,
                });
            }
        }
        Ok(Chart { labels, bounds })
    }

    /// Chart with labels `x1..xn` and every interval `[lo, hi]`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self::prefixed("x", n, lo, hi)
    }

    /// Chart with labels `<prefix>1..<prefix>n` and every interval `[lo, hi]`.
    pub fn prefixed(prefix: &str, n: usize, lo: f64, hi: f64) -> Self {
        let labels: Vec<String> = (1..=n).map(|i| format!("{prefix}{i}")).collect();
        Chart::new(labels, vec![(lo, hi); n]).expect("valid cube chart")
    }

    /// The unit interval `[0, 1]` with coordinate `t`.
    pub fn interval() -> Self {
        Chart::new(vec!["t"], vec![(0.0, 1.0)]).expect("valid interval chart")
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Point lies inside the box, inflated by `slack` on each side.
    pub fn contains(&self, point: &[f64], slack: f64) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo - slack && x <= hi + slack)
    }

    /// `n` points uniform in the box; deterministic for a fixed seed.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SampleRng::new(seed);
        (0..n)
            .map(|_| {
                self.bounds
                    .iter()
                    .map(|&(lo, hi)| rng.uniform(lo, hi))
                    .collect()
            })
            .collect()
    }
}

/// Seeded generator for sample points and random model coefficients.
///
/// Floats are built directly from the top 53 bits of the ChaCha8 stream, so
/// streams are reproducible bit-for-bit independently of any distribution
/// code shipped with the RNG crate.
pub struct SampleRng(ChaCha8Rng);

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        SampleRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform in `[-amp, amp)`.
    pub fn symmetric(&mut self, amp: f64) -> f64 {
        self.uniform(-amp, amp)
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.0.next_u64() % n as u64) as usize
    }

    /// Independent child stream; lets callers fan seeds out deterministically.
    pub fn fork(&mut self) -> SampleRng {
        SampleRng(ChaCha8Rng::seed_from_u64(self.0.next_u64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_in_box() {
        let chart = Chart::cube(2, 0.0, 1.0);
        let a = chart.sample_points(100, 7);
        let b = chart.sample_points(100, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        for p in &a {
            assert!(chart.contains(p, 0.0), "point {p:?} escaped the box");
        }
        let c = chart.sample_points(100, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn one_point_inside_box() {
        let chart = Chart::new(vec!["a", "b"], vec![(-2.0, -1.0), (3.0, 5.0)]).unwrap();
        let pts = chart.sample_points(1, 0);
        assert_eq!(pts.len(), 1);
        assert!(chart.contains(&pts[0], 0.0));
    }

    #[test]
    fn rejects_bad_charts() {
        assert_eq!(
            Chart::new(Vec::<String>::new(), vec![]).unwrap_err(),
            ChartError::Empty
        );
        assert!(matches!(
            Chart::new(vec!["x", "x"], vec![(0.0, 1.0), (0.0, 1.0)]).unwrap_err(),
            ChartError::DuplicateLabel(_)
        ));
        assert!(matches!(
            Chart::new(vec!["x"], vec![(1.0, 0.0)]).unwrap_err(),
            ChartError::BadInterval { .. }
        ));
    }
}
