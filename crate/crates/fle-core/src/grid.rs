//! Uniform cylinder lattices, tail-augmented grid functions, and the radial
//! mesh for the unit ball.

use crate::error::{FleError, Result};
use crate::fit::Pchip;
use serde::Serialize;

/// Uniform lattice t_i = -T + i h, i = 0..=2T/h.
///
/// Invariants: T, h > 0; 2T/h is an even integer (the interior quadrature
/// pairs cells); at least 64 nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderGrid {
    pub t_half: f64,
    pub h: f64,
    n_nodes: usize,
}

impl CylinderGrid {
    pub fn new(t_half: f64, h: f64) -> Result<Self> {
        if !(t_half > 0.0 && h > 0.0) {
            return Err(FleError::InvalidGrid {
                reason: format!("need T, h > 0, got T = {t_half}, h = {h}"),
            });
        }
        let ratio = 2.0 * t_half / h;
        let j = ratio.round();
        if (ratio - j).abs() > 1e-9 * ratio.max(1.0) {
            return Err(FleError::InvalidGrid {
                reason: format!("2T/h = {ratio} is not an integer"),
            });
        }
        let j = j as usize;
        if j % 2 != 0 {
            return Err(FleError::InvalidGrid {
                reason: format!("2T/h = {j} must be even"),
            });
        }
        if j + 1 < 64 {
            return Err(FleError::InvalidGrid {
                reason: format!("grid has {} nodes, need at least 64", j + 1),
            });
        }
        Ok(CylinderGrid {
            t_half,
            h,
            n_nodes: j + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.t_half + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |i| self.node(i))
    }

    /// Number of lattice steps across the window: 2T/h.
    pub fn steps(&self) -> usize {
        self.n_nodes - 1
    }
}

/// One-sided exponential tail: at distance u beyond the window edge the
/// function is  limit + amplitude * exp(-rate * u).
///
/// `rate > 0` decays toward `limit`; a negative rate describes controlled
/// growth (used when applying the operator to pure exponentials). The
/// amplitude is anchored at the window edge, so continuity with the lattice
/// values means amplitude = edge value - limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailModel {
    pub limit: f64,
    pub rate: f64,
    pub amplitude: f64,
}

impl TailModel {
    pub fn constant(limit: f64) -> Self {
        TailModel {
            limit,
            rate: 1.0,
            amplitude: 0.0,
        }
    }

    /// Value at distance u >= 0 beyond the edge.
    pub fn eval(&self, u: f64) -> f64 {
        self.limit + self.amplitude * (-self.rate * u).exp()
    }
}

/// Lattice samples plus tail models on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: CylinderGrid,
    pub values: Vec<f64>,
    pub left: TailModel,
    pub right: TailModel,
}

impl GridFunction {
    pub fn new(
        grid: CylinderGrid,
        values: Vec<f64>,
        left: TailModel,
        right: TailModel,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FleError::InvalidGrid {
                reason: format!(
                    "value count {} does not match grid size {}",
                    values.len(),
                    grid.len()
                ),
            });
        }
        Ok(GridFunction {
            grid,
            values,
            left,
            right,
        })
    }

    /// Sample a closure on the lattice; tails must be supplied by the caller.
    pub fn sample<F: Fn(f64) -> f64>(
        grid: CylinderGrid,
        f: F,
        left: TailModel,
        right: TailModel,
    ) -> Self {
        let values = grid.nodes().map(f).collect();
        GridFunction {
            grid,
            values,
            left,
            right,
        }
    }

    pub fn constant(grid: CylinderGrid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
            left: TailModel::constant(c),
            right: TailModel::constant(c),
        }
    }

    /// The pure exponential e^{alpha t} with exact tails on both sides.
    pub fn exponential(grid: CylinderGrid, alpha: f64) -> Self {
        let t = grid.t_half;
        let values = grid.nodes().map(|x| (alpha * x).exp()).collect();
        GridFunction {
            grid,
            values,
            left: TailModel {
                limit: 0.0,
                rate: alpha,
                amplitude: (-alpha * t).exp(),
            },
            right: TailModel {
                limit: 0.0,
                rate: -alpha,
                amplitude: (alpha * t).exp(),
            },
        }
    }

    /// Lattice value of t_i +/- j h, reaching into the tail models when the
    /// shifted index leaves the window.
    pub fn value_shifted(&self, i: usize, offset: isize) -> f64 {
        let k = i as isize + offset;
        let last = (self.grid.len() - 1) as isize;
        if k < 0 {
            self.left.eval((-k) as f64 * self.grid.h)
        } else if k > last {
            self.right.eval((k - last) as f64 * self.grid.h)
        } else {
            self.values[k as usize]
        }
    }

    /// Pointwise evaluation: tail models outside the window, monotone cubic
    /// interpolation of the lattice inside (built per call; use
    /// `interpolant()` for repeated evaluation).
    pub fn eval(&self, t: f64) -> f64 {
        let edge = self.grid.t_half;
        if t < -edge {
            self.left.eval(-(t + edge))
        } else if t > edge {
            self.right.eval(t - edge)
        } else {
            self.interpolant().eval(t)
        }
    }

    pub fn interpolant(&self) -> Pchip {
        Pchip::new(self.grid.nodes().collect(), self.values.clone())
            .expect("lattice is strictly increasing")
    }

    /// Maximum absolute lattice value.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Re-anchor tail amplitudes to the current edge values, keeping limits
    /// and rates.
    pub fn reanchor_tails(&mut self) {
        self.left.amplitude = self.values[0] - self.left.limit;
        self.right.amplitude = self.values[self.grid.len() - 1] - self.right.limit;
    }
}

/// Strictly increasing radial mesh on (0, 1] with last node exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BallGrid {
    pub nodes: Vec<f64>,
}

impl BallGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 8 {
            return Err(FleError::InvalidGrid {
                reason: "ball mesh needs at least 8 nodes".into(),
            });
        }
        if nodes[0] <= 0.0 {
            return Err(FleError::InvalidGrid {
                reason: "ball mesh nodes must be positive".into(),
            });
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FleError::InvalidGrid {
                reason: "ball mesh nodes must be strictly increasing".into(),
            });
        }
        let last = *nodes.last().expect("nonempty");
        if (last - 1.0).abs() > 1e-14 {
            return Err(FleError::InvalidGrid {
                reason: format!("ball mesh must end at r = 1, got {last}"),
            });
        }
        let mut nodes = nodes;
        *nodes.last_mut().expect("nonempty") = 1.0;
        Ok(BallGrid { nodes })
    }

    /// Composite mesh: a logarithmic section from r_min up to 1/2 resolving
    /// core scales many decades down, then a section graded toward the
    /// boundary like (1 - r) ~ (gap)^grading. Total node count ~ n.
    pub fn composite(n: usize, grading: f64, r_min: f64) -> Result<Self> {
        if n < 16 {
            return Err(FleError::InvalidGrid {
                reason: "composite ball mesh needs n >= 16".into(),
            });
        }
        if !(r_min > 0.0 && r_min < 0.25) {
            return Err(FleError::InvalidGrid {
                reason: format!("need 0 < r_min < 1/4, got {r_min}"),
            });
        }
        let n_log = n / 2;
        let n_out = n - n_log;
        let mut nodes = Vec::with_capacity(n);
        let lo = r_min.ln();
        let hi = 0.5f64.ln();
        for i in 0..n_log {
            let f = i as f64 / (n_log - 1) as f64;
            nodes.push((lo + f * (hi - lo)).exp());
        }
        // graded section on (1/2, 1]
        for j in 1..=n_out {
            let xi = j as f64 / n_out as f64;
            let r = 1.0 - 0.5 * (1.0 - xi).powf(grading);
            nodes.push(r);
        }
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        BallGrid::new(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_construction_and_validation() {
        let g = CylinderGrid::new(20.0, 0.05).unwrap();
        assert_eq!(g.len(), 801);
        assert_relative_eq!(g.node(0), -20.0);
        assert_relative_eq!(g.node(800), 20.0);
        assert!(CylinderGrid::new(20.0, 0.0).is_err());
        assert!(CylinderGrid::new(20.0, 0.07).is_err()); // non-integer ratio
        assert!(CylinderGrid::new(1.0, 0.05).is_err()); // too few nodes (41)
        assert!(CylinderGrid::new(2.025, 0.05).is_err()); // odd step count
    }

    #[test]
    fn exponential_tails_are_exact() {
        let g = CylinderGrid::new(5.0, 0.1).unwrap();
        let alpha = 0.37;
        let f = GridFunction::exponential(g, alpha);
        for t in [-8.0, -5.5, -1.3, 0.0, 2.2, 5.0, 7.5] {
            assert_relative_eq!(f.eval(t), (alpha * t).exp(), max_relative = 1e-9);
        }
        // out-of-window lattice reads match the closed form
        assert_relative_eq!(
            f.value_shifted(0, -10),
            (alpha * (-6.0)).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            f.value_shifted(100, 13),
            (alpha * 6.3).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn shifted_reads_inside_window() {
        let g = CylinderGrid::new(5.0, 0.1).unwrap();
        let f = GridFunction::sample(
            g,
            |t| t * t,
            TailModel::constant(25.0),
            TailModel::constant(25.0),
        );
        assert_relative_eq!(f.value_shifted(50, 3), (0.3f64) * 0.3, epsilon = 1e-12);
        assert_relative_eq!(f.value_shifted(50, -7), 0.49, epsilon = 1e-12);
    }

    #[test]
    fn composite_ball_mesh_shape() {
        let g = BallGrid::composite(400, 2.0, 1e-8).unwrap();
        assert!(g.len() >= 380);
        assert_eq!(*g.nodes.last().unwrap(), 1.0);
        assert!(g.nodes[0] <= 1.1e-8);
        // resolves six decades: some node within a factor 2 of 1e-6
        assert!(g
            .nodes
            .iter()
            .any(|r| *r > 0.5e-6 && *r < 2e-6));
        // boundary layer present
        let second_last = g.nodes[g.len() - 2];
        assert!(1.0 - second_last < 0.01);
    }
}
