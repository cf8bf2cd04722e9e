use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Symmetric, uniformly spaced M-PAM alphabet scaled to a target average energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constellation {
    order: usize,
    points: Vec<f64>,
    average_energy: f64,
}

impl Constellation {
    /// `scale * {±1, ±3, …, ±(M-1)}` with `scale² (M² - 1) / 3 = average_energy`.
    pub fn pam(order: usize, average_energy: f64) -> Result<Self> {
        if !matches!(order, 2 | 4 | 8 | 16) {
            return Err(Error::InvalidArgument(format!(
                "PAM order must be one of 2, 4, 8, 16, got {order}"
            )));
        }
        if !(average_energy > 0.0 && average_energy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "average energy must be positive, got {average_energy}"
            )));
        }
        let m = order as f64;
        let scale = (3.0 * average_energy / (m * m - 1.0)).sqrt();
        let points = (0..order)
            .map(|i| (2.0 * i as f64 - (m - 1.0)) * scale)
            .collect();
        Ok(Self { order, points, average_energy })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Points in increasing order.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn average_energy(&self) -> f64 {
        self.average_energy
    }

    /// Distance between neighbouring points.
    pub fn spacing(&self) -> f64 {
        self.points[1] - self.points[0]
    }

    pub fn max_amplitude(&self) -> f64 {
        self.points[self.order - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        self.points.contains(&x)
    }

    /// Index of the nearest point; exact midpoints go to the smaller amplitude.
    pub fn nearest_index(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_dist = (x - self.points[0]).abs();
        for (i, &p) in self.points.iter().enumerate().skip(1) {
            let d = (x - p).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub fn nearest(&self, x: f64) -> f64 {
        self.points[self.nearest_index(x)]
    }

    /// Uniform i.i.d. draw of `len` symbols.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<f64> {
        (0..len)
            .map(|_| self.points[rng.random_range(0..self.order)])
            .collect()
    }
}
