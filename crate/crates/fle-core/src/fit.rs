//! Interpolation and tail-fitting helpers: monotone cubic interpolation,
//! linear least squares, and damped-cosine fits on uniform lattices via
//! linear prediction.

use crate::error::{FleError, Result};
use nalgebra::{DMatrix, DVector};

/// Monotone piecewise-cubic interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(FleError::InvalidGrid {
                reason: "interpolation needs matching arrays of length >= 2".into(),
            });
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FleError::InvalidGrid {
                reason: "interpolation abscissae must be strictly increasing".into(),
            });
        }
        let n = x.len();
        let mut h = vec![0.0; n - 1];
        let mut delta = vec![0.0; n - 1];
        for k in 0..n - 1 {
            h[k] = x[k + 1] - x[k];
            delta[k] = (y[k + 1] - y[k]) / h[k];
        }
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] <= 0.0 {
                    d[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Pchip { x, y, d })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.d[0] * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.d[n - 1] * (t - self.x[n - 1]);
        }
        let k = match self
            .x
            .binary_search_by(|v| v.partial_cmp(&t).expect("no NaN abscissae"))
        {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let u = (t - self.x[k]) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.y[k] + h * h10 * self.d[k] + h01 * self.y[k + 1] + h * h11 * self.d[k + 1]
    }
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // three-point one-sided estimate, clamped to preserve monotonicity
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Ordinary least squares y ~ a + b x; returns (intercept, slope).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(FleError::OutOfRange {
            reason: "linear fit needs matching arrays of length >= 2".into(),
        });
    }
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(FleError::SingularSystem {
            reason: "degenerate abscissae in linear fit".into(),
        });
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    Ok((intercept, slope))
}

/// Result of fitting  v(t) = limit + amplitude e^{rate (t - t0)} cos(freq (t - t0) + phase)
/// on a uniform lattice starting at t0. `freq = 0` marks a pure exponential.
#[derive(Debug, Clone, Copy)]
pub struct TailFit {
    pub limit: f64,
    pub rate: f64,
    pub freq: f64,
    pub amplitude: f64,
}

/// Two-term linear prediction on first differences. Differencing removes the
/// unknown limit; the prediction roots give the complex exponent, and a final
/// linear solve recovers the limit and amplitude. The limit is genuinely
/// fitted, not assumed.
pub fn fit_damped_cosine(values: &[f64], h: f64) -> Result<TailFit> {
    let n = values.len();
    if n < 8 {
        return Err(FleError::OutOfRange {
            reason: "damped-cosine fit needs at least 8 samples".into(),
        });
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    // least squares for d[i+2] = b1 d[i+1] + b2 d[i]
    let m = d.len() - 2;
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        let (a, b, y) = (d[i + 1], d[i], d[i + 2]);
        s11 += a * a;
        s12 += a * b;
        s22 += b * b;
        r1 += a * y;
        r2 += b * y;
    }
    let det = s11 * s22 - s12 * s12;
    let scale = s11 * s22;
    if scale < 1e-280 {
        // the differences are (numerically) zero: a constant sequence
        return Ok(TailFit {
            limit: values[n - 1],
            rate: 0.0,
            freq: 0.0,
            amplitude: 0.0,
        });
    }
    // a single geometric mode makes the lagged columns proportional; fall
    // back to one-term prediction instead of dividing by a roundoff det
    let (b1, b2) = if det.abs() < 1e-10 * scale {
        (r1 / s11, 0.0)
    } else {
        ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det)
    };
    let disc = b1 * b1 + 4.0 * b2;
    let (rate, freq) = if disc >= 0.0 {
        let z1 = 0.5 * (b1 + disc.sqrt());
        let z2 = 0.5 * (b1 - disc.sqrt());
        let z = if z1.abs() >= z2.abs() { z1 } else { z2 };
        if z <= 0.0 {
            return Err(FleError::RootFindFailure {
                reason: "linear prediction produced a non-positive dominant root".into(),
            });
        }
        (z.ln() / h, 0.0)
    } else {
        let re = 0.5 * b1;
        let im = 0.5 * (-disc).sqrt();
        let modulus = (re * re + im * im).sqrt();
        (modulus.ln() / h, im.atan2(re).abs() / h)
    };
    // linear solve for limit and the quadrature amplitudes; the sine column
    // vanishes identically when freq = 0, so it is dropped there
    let cols = if freq == 0.0 { 2 } else { 3 };
    let mut a = DMatrix::zeros(n, cols);
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        let t = i as f64 * h;
        let e = (rate * t).exp();
        a[(i, 0)] = 1.0;
        a[(i, 1)] = e * (freq * t).cos();
        if cols == 3 {
            a[(i, 2)] = -e * (freq * t).sin();
        }
        rhs[i] = values[i];
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * rhs;
    let sol = ata.lu().solve(&atb).ok_or_else(|| FleError::SingularSystem {
        reason: "normal equations singular in damped-cosine fit".into(),
    })?;
    let amplitude = if cols == 3 {
        (sol[1] * sol[1] + sol[2] * sol[2]).sqrt()
    } else {
        sol[1].abs()
    };
    Ok(TailFit {
        limit: sol[0],
        rate,
        freq,
        amplitude,
    })
}

/// Fit ln|y| ~ ln c - rate * t; returns (c, rate). All y must be nonzero.
pub fn fit_exp_decay(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if y.iter().any(|v| *v == 0.0) {
        return Err(FleError::OutOfRange {
            reason: "exponential decay fit needs nonzero samples".into(),
        });
    }
    let logs: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let (intercept, slope) = linear_fit(t, &logs)?;
    Ok((intercept.exp(), -slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pchip_reproduces_monotone_data() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v).exp()).collect();
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for i in 0..19 {
            let t = x[i] + 0.17;
            let want = (-t).exp();
            assert_relative_eq!(p.eval(t), want, max_relative = 2e-3);
            // monotone between nodes
            assert!(p.eval(t) <= y[i] && p.eval(t) >= y[i + 1]);
        }
    }

    #[test]
    fn pchip_hits_nodes_exactly() {
        let x = vec![0.0, 1.0, 1.5, 3.0];
        let y = vec![2.0, -1.0, 0.5, 0.4];
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(p.eval(*xi), *yi);
        }
    }

    #[test]
    fn damped_cosine_recovery() {
        let h = 0.05;
        let (limit, rate, freq, amp) = (0.931, 0.5, 1.4707, 0.02);
        let vals: Vec<f64> = (0..200)
            .map(|i| {
                let t = i as f64 * h;
                limit + amp * (rate * t).exp() * (freq * t + 0.3).cos()
            })
            .collect();
        let fit = fit_damped_cosine(&vals, h).unwrap();
        assert_relative_eq!(fit.limit, limit, max_relative = 1e-8);
        assert_relative_eq!(fit.rate, rate, max_relative = 1e-8);
        assert_relative_eq!(fit.freq, freq, max_relative = 1e-8);
    }

    #[test]
    fn pure_exponential_recovery() {
        let h = 0.05;
        let vals: Vec<f64> = (0..100)
            .map(|i| 1.5 - 0.3 * (-0.5 * i as f64 * h).exp())
            .collect();
        let fit = fit_damped_cosine(&vals, h).unwrap();
        assert_eq!(fit.freq, 0.0);
        assert_relative_eq!(fit.limit, 1.5, max_relative = 1e-9);
        assert_relative_eq!(fit.rate, -0.5, max_relative = 1e-9);
        assert_relative_eq!(fit.amplitude, 0.3, max_relative = 1e-8);
    }

    #[test]
    fn exp_decay_fit() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|v| 2.0 * (-1.3 * v).exp()).collect();
        let (c, rate) = fit_exp_decay(&t, &y).unwrap();
        assert_relative_eq!(c, 2.0, max_relative = 1e-10);
        assert_relative_eq!(rate, 1.3, max_relative = 1e-10);
    }
}
