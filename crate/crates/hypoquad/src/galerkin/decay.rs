//! Directional norms ‖L_{X0} e^{-tA} u0‖ and log–log power-law fits.

use faer::c64;
use serde::Serialize;

use super::hermite::HermiteBasis;
use super::operator::{linear_observable, quantize, HermiteOperator};
use super::propagate::{propagate, Trajectory};
use super::sparse;
use crate::error::{Error, Result};
use crate::symplectic::{PhaseVector, QuadraticSymbol};

pub const R2_MIN: f64 = 0.98;

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub low_confidence: bool,
    /// Slopes refitted on the lower and upper halves (in log t) of the window.
    pub half_window_slopes: (f64, f64),
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Least-squares fit of log(value) against log(t) for t in the window.
pub fn decay_exponent(samples: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let inside: Vec<(f64, f64)> = samples.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    if inside.len() < 5 {
        return Err(Error::Precondition(format!("{} samples in the fit window, need at least 5", inside.len())));
    }
    if let Some(&(t, v)) = inside.iter().find(|&&(t, v)| !(v > 0.0) || !(t > 0.0)) {
        return Err(Error::Domain(format!("nonpositive sample {v} at t = {t}")));
    }
    let x: Vec<f64> = inside.iter().map(|s| s.0.ln()).collect();
    let y: Vec<f64> = inside.iter().map(|s| s.1.ln()).collect();
    let (slope, intercept, r2) = least_squares(&x, &y);
    let mid = 0.5 * (window.0.ln() + window.1.ln());
    let half = |lower: bool| -> f64 {
        let idx: Vec<usize> = (0..x.len()).filter(|&i| (x[i] <= mid) == lower).collect();
        if idx.len() < 3 {
            return f64::NAN;
        }
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        least_squares(&xs, &ys).0
    };
    Ok(DecayFit {
        slope,
        intercept,
        r2,
        window,
        samples: inside.len(),
        low_confidence: r2 < R2_MIN,
        half_window_slopes: (half(true), half(false)),
    })
}

/// Linear regression of log(value) on t; the slope estimates −ω0 for large t.
pub fn exponential_rate(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 3 || samples.iter().any(|s| !(s.1 > 0.0)) {
        return Err(Error::Domain("exponential fit needs ≥ 3 positive samples".into()));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let (slope, _, r2) = least_squares(&x, &y);
    Ok((slope, r2))
}

/// ‖L u(t)‖/‖u0‖ along a trajectory.
pub fn observable_norms(obs: &HermiteOperator, traj: &Trajectory, u0_norm: f64) -> Vec<(f64, f64)> {
    traj.times.iter().zip(&traj.states).map(|(&t, u)| (t, sparse::norm(&obs.apply(u)) / u0_norm)).collect()
}

pub fn directional_norms(q: &QuadraticSymbol, x0: &PhaseVector, u0: &[c64], times: &[f64], nmax: usize) -> Result<Vec<(f64, f64)>> {
    let op = quantize(q, nmax)?;
    let obs = linear_observable(x0, nmax)?;
    let traj = propagate(&op, u0, times)?;
    Ok(observable_norms(&obs, &traj, sparse::norm(u0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct IteratedSample {
    pub t: f64,
    pub norm: f64,
    /// Fraction of the result's norm carried by the top two Hermite levels.
    pub boundary_fraction: f64,
    pub unreliable: bool,
}

/// ‖L_{X1}⋯L_{Xm} e^{-tA} u0‖/‖u0‖; L_{Xm} acts first.
pub fn iterated_directional_norms(
    q: &QuadraticSymbol,
    dirs: &[PhaseVector],
    u0: &[c64],
    times: &[f64],
    nmax: usize,
) -> Result<Vec<IteratedSample>> {
    if dirs.is_empty() {
        return Err(Error::Precondition("empty observable list".into()));
    }
    let op = quantize(q, nmax)?;
    let obs: Vec<HermiteOperator> = dirs.iter().map(|d| linear_observable(d, nmax)).collect::<Result<_>>()?;
    let traj = propagate(&op, u0, times)?;
    let basis = HermiteBasis::new(q.n, nmax);
    let edge = basis.boundary(2);
    let n0 = sparse::norm(u0);
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            let mut w = u.clone();
            for o in obs.iter().rev() {
                w = o.apply(&w);
            }
            let total = sparse::norm(&w);
            let edge_mass = edge.iter().map(|&i| w[i].norm_sqr()).sum::<f64>().sqrt();
            let frac = if total > 0.0 { edge_mass / total } else { 0.0 };
            IteratedSample { t, norm: total / n0, boundary_fraction: frac, unreliable: frac > 0.1 }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplier::log_grid;

    #[test]
    fn exact_power_laws() {
        let g = log_grid(1e-3, 1.0, 30);
        let s: Vec<(f64, f64)> = g.iter().map(|&t| (t, t.powf(-0.5))).collect();
        let f = decay_exponent(&s, (1e-3, 1.0)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let s: Vec<(f64, f64)> = g.iter().map(|&t| (t, 3.0 * t.powf(-1.5))).collect();
        let f = decay_exponent(&s, (1e-3, 1.0)).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.half_window_slopes.0 + 1.5).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let s = vec![(0.1, 1.0), (0.2, -1.0), (0.3, 1.0), (0.4, 1.0), (0.5, 1.0)];
        assert!(matches!(decay_exponent(&s, (0.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(decay_exponent(&s[..3], (0.0, 1.0)), Err(Error::Precondition(_))));
    }
}
