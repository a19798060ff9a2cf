//! Composite Simpson rule on a uniform grid over `[0, L]`.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Simpson {
    length: f64,
    intervals: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Simpson {
    /// `intervals` must be a positive multiple of 4 so that both halves of the
    /// span are themselves even Simpson grids.
    pub fn new(length: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 || intervals % 4 != 0 {
            return Err(invalid(
                "quadrature_points",
                format!("{intervals} is not a positive multiple of 4"),
            ));
        }
        let h = length / intervals as f64;
        let nodes = (0..=intervals).map(|k| k as f64 * h).collect();
        let weights = simpson_weights(intervals, h);
        Ok(Self {
            length,
            intervals,
            nodes,
            weights,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.intervals as f64
    }

    /// Node index range `[first, last]` and weights for the sub-span starting
    /// at node `first` and ending at node `last` (inclusive). The number of
    /// intervals `last - first` must be even.
    pub fn sub_weights(&self, first: usize, last: usize) -> Vec<f64> {
        debug_assert!(last > first && (last - first) % 2 == 0 && last <= self.intervals);
        simpson_weights(last - first, self.spacing())
    }

    /// ∫₀ᴸ f dx using precomputed samples `f(nodes[k])`.
    pub fn integrate_samples(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.weights.len());
        samples.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }
}

fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    for (k, wk) in w.iter_mut().enumerate() {
        *wk = if k == 0 || k == intervals {
            h / 3.0
        } else if k % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    w
}
