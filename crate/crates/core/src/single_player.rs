//! The auxiliary single-player exit problem: exit when `X <= alpha(theta)`.
//!
//! `alpha(theta)` maximises `a_theta(x) = (theta - d(x)) / phi(x)`; the value
//! of the problem is `u(x; theta) = a_theta(alpha) phi(x) + d(x)` above the
//! threshold and `theta` below it.

use rayon::prelude::*;

use crate::diffusion::NoiseGrid;
use crate::error::{invalid, Error, Result};
use crate::numerics::{bisect_first_true, golden_section_max};
use crate::payoffs::ProfitFamily;
use crate::primitives::Primitives;
use crate::stats::Estimate;

pub const DEFAULT_ALPHA_TOL: f64 = 1e-8;
pub const DEFAULT_TABLE_POINTS: usize = 201;
const SCAN_POINTS: usize = 400;

#[inline]
pub fn a_theta(x: f64, theta: f64, prims: &Primitives) -> f64 {
    (theta - prims.d(x)) / prims.phi(x)
}

/// The level where the duopoly flow reaches `r theta`, or `+inf` when it never does.
pub fn c_critical(theta: f64, prims: &Primitives) -> f64 {
    let level = prims.r() * theta;
    if level > prims.profit.sup_duopoly() {
        return f64::INFINITY;
    }
    let lo = prims.model.domain_lo;
    let flow = |x: f64| prims.flow_d(x);
    let hi = match prims.profit.family {
        ProfitFamily::CappedPower { x_cap, .. } => x_cap,
        ProfitFamily::Custom { .. } if prims.model.domain_hi.is_finite() => prims.model.domain_hi,
        ProfitFamily::Custom { .. } => {
            let mut hi = (lo + 1.0).max(1.0);
            while flow(hi) < level {
                hi *= 2.0;
                if !hi.is_finite() {
                    return f64::INFINITY;
                }
            }
            hi
        }
    };
    if flow(hi) < level {
        return f64::INFINITY;
    }
    bisect_first_true(|x| flow(x) >= level, lo, hi)
}

/// Maximiser of `a_theta` and the number of local maxima seen on the bracketing scan.
fn maximise_a_theta(theta: f64, prims: &Primitives, tol: f64) -> Result<(f64, usize)> {
    let c = c_critical(theta, prims);
    let (lo, hi) = (prims.model.domain_lo, prims.model.domain_hi);
    let upper = if c.is_finite() {
        c
    } else if hi.is_finite() {
        hi - 1e-12 * (hi - lo)
    } else {
        1e8
    };
    let grid: Vec<f64> = if lo <= 0.0 {
        let (l0, l1) = ((upper * 1e-12).ln(), upper.ln());
        (0..SCAN_POINTS)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (SCAN_POINTS - 1) as f64).exp())
            .collect()
    } else {
        crate::numerics::linspace(lo + 1e-12 * (upper - lo), upper, SCAN_POINTS)
    };
    let vals: Vec<f64> = grid.iter().map(|&x| a_theta(x, theta, prims)).collect();
    let k = vals
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > vals[best] { i } else { best });
    if k == 0 || !vals[k].is_finite() {
        return Err(Error::BracketNotFound { theta });
    }
    let peaks = (1..SCAN_POINTS)
        .filter(|&i| vals[i] > vals[i - 1] && (i + 1 == SCAN_POINTS || vals[i] >= vals[i + 1]))
        .count();
    let right = grid[(k + 1).min(SCAN_POINTS - 1)];
    let x = golden_section_max(|x| a_theta(x, theta, prims), grid[k - 1], right, tol);
    Ok((x, peaks))
}

/// The single-player exit threshold, to absolute tolerance `tol` in x.
pub fn alpha(theta: f64, prims: &Primitives, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "tolerance must be positive"));
    }
    maximise_a_theta(theta, prims, tol).map(|(x, _)| x)
}

/// `alpha` tabulated on a uniform type grid, with piecewise-linear
/// interpolation and an exact inverse of the interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub thetas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub crits: Vec<f64>,
    /// Grid types whose bracketing scan showed more than one local maximum.
    pub multimodal: Vec<f64>,
}

impl ThresholdTable {
    pub fn build(prims: &Primitives, theta_lo: f64, theta_hi: f64, n_points: usize, tol: f64) -> Result<Self> {
        if !(theta_hi > theta_lo) || n_points < 2 {
            return Err(invalid("thetas", "need theta_lo < theta_hi and at least two points"));
        }
        let thetas = crate::numerics::linspace(theta_lo, theta_hi, n_points);
        let mut alphas = Vec::with_capacity(n_points);
        let mut crits = Vec::with_capacity(n_points);
        let mut multimodal = Vec::new();
        for &t in &thetas {
            let (a, peaks) = maximise_a_theta(t, prims, tol)?;
            let c = c_critical(t, prims);
            if a > c + tol {
                return Err(Error::RegimeViolated(format!("alpha({t}) = {a} exceeds c = {c}")));
            }
            if alphas.last().is_some_and(|&prev| a <= prev) {
                return Err(Error::NonMonotoneThreshold { theta: t });
            }
            if peaks > 1 {
                multimodal.push(t);
            }
            alphas.push(a);
            crits.push(c);
        }
        Ok(Self {
            thetas,
            alphas,
            crits,
            multimodal,
        })
    }

    pub fn theta_lo(&self) -> f64 {
        self.thetas[0]
    }

    pub fn theta_hi(&self) -> f64 {
        *self.thetas.last().unwrap()
    }

    /// Interpolated `alpha(theta)`; linear extrapolation off the grid.
    pub fn alpha_at(&self, theta: f64) -> f64 {
        let k = segment(&self.thetas, theta);
        lerp(&self.thetas, &self.alphas, k, theta)
    }

    /// Inverse of [`ThresholdTable::alpha_at`]; linear extrapolation outside
    /// `[alpha(theta_L), alpha(theta_U)]`.
    #[inline]
    pub fn alpha_inv(&self, x: f64) -> f64 {
        let k = segment(&self.alphas, x);
        lerp(&self.alphas, &self.thetas, k, x)
    }
}

/// Index `k` of the segment `[xs[k], xs[k+1]]` used for `v`, clamped to the end segments.
#[inline]
fn segment(xs: &[f64], v: f64) -> usize {
    xs.partition_point(|&p| p <= v).saturating_sub(1).min(xs.len() - 2)
}

#[inline]
fn lerp(xs: &[f64], ys: &[f64], k: usize, v: f64) -> f64 {
    let w = (v - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

/// Value of the single-player problem under the tabulated threshold.
pub fn u_value(x: f64, theta: f64, prims: &Primitives, table: &ThresholdTable) -> f64 {
    let a = table.alpha_at(theta);
    if x <= a {
        theta
    } else {
        a_theta(a, theta, prims) * prims.phi(x) + prims.d(x)
    }
}

/// Monte-Carlo value of "exit at the first grid time with `X <= b`" for
/// each barrier `b`, all on the same paths. Play beyond the noise horizon is
/// dropped, which requires `e^{-rT} (sup D / r + theta) <= tail_tol`.
pub fn threshold_policy_values(
    prims: &Primitives,
    x0: f64,
    theta: f64,
    barriers: &[f64],
    noise: &NoiseGrid,
    n_paths: usize,
    tail_tol: f64,
) -> Result<Vec<Estimate>> {
    let r = prims.r();
    let horizon = noise.horizon();
    let bound = (-r * horizon).exp() * (prims.profit.sup_duopoly() / r + theta.abs());
    if bound > tail_tol {
        return Err(Error::HorizonTooShort {
            horizon,
            bound,
            tolerance: tail_tol,
        });
    }
    if !prims.model.contains(x0) {
        return Err(Error::OutsideDomain {
            x0,
            lo: prims.model.domain_lo,
            hi: prims.model.domain_hi,
        });
    }
    let dt = noise.step;
    let stepper = prims.model.stepper(dt);
    let decay = (-r * dt).exp();
    let rows: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut normals = noise.normals(p);
            let mut out = vec![f64::NAN; barriers.len()];
            let mut open = barriers.len();
            let mut x = x0;
            let mut disc = 1.0;
            let mut integral = 0.0;
            let mut f_prev = prims.flow_d(x);
            for i in 0..=noise.n_steps {
                for (o, &b) in out.iter_mut().zip(barriers) {
                    if o.is_nan() && x <= b {
                        *o = integral + theta * disc;
                        open -= 1;
                    }
                }
                if open == 0 || i == noise.n_steps {
                    break;
                }
                x = stepper.advance(x, normals.next_normal(), i)?;
                let next_disc = disc * decay;
                let f = prims.flow_d(x);
                integral += 0.5 * dt * (disc * f_prev + next_disc * f);
                disc = next_disc;
                f_prev = f;
            }
            for o in out.iter_mut().filter(|o| o.is_nan()) {
                *o = integral;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..barriers.len())
        .map(|k| Estimate::from_samples(&rows.iter().map(|row| row[k]).collect::<Vec<_>>()))
        .collect())
}
