//! Two limiting regimes of the game.
//!
//! With the state frozen at a level where every type wants out, beliefs move
//! deterministically and each type exits at a fixed time. With a degenerate
//! prior the equilibrium collapses to a randomised exit with hazard
//! `lambda(x, theta)`.

use rand::Rng;
use rayon::prelude::*;

use crate::diffusion::{simulate_path, SamplePath};
use crate::equilibrium::{BeliefSettings, Equilibrium, TypeDistribution};
use crate::error::{invalid, Error, Result};
use crate::primitives::Primitives;
use crate::stats::ks_distance;

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicSchedule {
    pub x_fixed: f64,
    pub thetas: Vec<f64>,
    /// Exit time of each type, nonincreasing in the type.
    pub exit_times: Vec<f64>,
}

/// Exit times of the game with the state frozen at `x_fixed`, from RK4 on
/// `dA/dt = (r Y(A) - D(x)) / (m(x) - Y(A))` started at `A = 0`. The crossing
/// of `A(theta)` is located by linear interpolation inside the step.
pub fn deterministic_schedule(
    eq: &Equilibrium,
    x_fixed: f64,
    thetas: &[f64],
    dt: f64,
) -> Result<DeterministicSchedule> {
    let r = eq.prims.r();
    let lo = eq.dist.theta_lo();
    let ratio = eq.prims.flow_d(x_fixed) / r;
    if !(ratio < lo) {
        return Err(Error::NoExitIncentive { ratio, theta_lo: lo });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "step must be positive"));
    }
    let targets = thetas.iter().map(|&t| eq.dist.big_a(t)).collect::<Result<Vec<f64>>>()?;
    let rate = |a: f64| eq.l(x_fixed, eq.dist.big_y(a));
    let mut order: Vec<usize> = (0..thetas.len()).collect();
    order.sort_by(|&i, &j| targets[i].total_cmp(&targets[j]));
    let mut exit_times = vec![f64::NAN; thetas.len()];
    let (mut t, mut a) = (0.0, 0.0);
    let mut pending = order.into_iter().peekable();
    while let Some(&k) = pending.peek() {
        if targets[k] <= a {
            // Only reachable at t = 0 for the top type; later crossings are
            // caught inside the step below.
            exit_times[k] = t;
            pending.next();
            continue;
        }
        let k1 = rate(a);
        let k2 = rate(a + 0.5 * dt * k1);
        let k3 = rate(a + 0.5 * dt * k2);
        let k4 = rate(a + dt * k3);
        let next = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        while let Some(&k) = pending.peek() {
            if targets[k] > next {
                break;
            }
            exit_times[k] = t + dt * (targets[k] - a) / (next - a);
            pending.next();
        }
        a = next;
        t += dt;
    }
    Ok(DeterministicSchedule {
        x_fixed,
        thetas: thetas.to_vec(),
        exit_times,
    })
}

/// Randomised exit with hazard `lambda(x, theta)`, the degenerate-prior limit.
#[derive(Debug, Clone, Copy)]
pub struct RandomizedExit<'a> {
    pub eq: &'a Equilibrium,
    pub theta: f64,
}

impl RandomizedExit<'_> {
    #[inline]
    pub fn rate(&self, x: f64) -> f64 {
        self.eq.lambda(x, self.theta)
    }

    /// Accumulated hazard on the path grid, starting from 0.
    pub fn cumulative_hazard(&self, path: &SamplePath) -> Vec<f64> {
        let dt = path.step();
        let mut acc = Vec::with_capacity(path.len());
        acc.push(0.0);
        for i in 1..path.len() {
            acc.push(acc[i - 1] + self.rate(path.states[i - 1]) * dt);
        }
        acc
    }

    /// Start of the first step over which survival `e^{-hazard}` drops below `u`.
    pub fn exit_time(&self, path: &SamplePath, u: f64) -> f64 {
        let threshold = -u.ln();
        self.cumulative_hazard(path)
            .windows(2)
            .position(|w| w[1] > threshold)
            .map_or(f64::INFINITY, |i| path.times[i])
    }
}

pub fn mixed_strategy_exit(eq: &Equilibrium, path: &SamplePath, theta: f64, uniform_draw: f64) -> Result<f64> {
    if !(uniform_draw > 0.0 && uniform_draw < 1.0) {
        return Err(invalid("uniform_draw", "must lie in (0, 1)"));
    }
    Ok(RandomizedExit { eq, theta }.exit_time(path, uniform_draw))
}

/// Settings of the shrinking-support comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateLimitConfig {
    pub theta: f64,
    pub half_widths: Vec<f64>,
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub belief: BeliefSettings,
}

/// KS distance, for each half-width `h`, between the exit time of a player
/// whose type is drawn from `U[theta - h, theta + h]` in the full game and
/// the randomised exit of the limit. Both use the same X paths and the same
/// uniform draw `u`: the full-game type is `F^{-1}(u)`, the limit player
/// exits once survival falls below `u`.
pub fn degenerate_limit_ks(prims: &Primitives, cfg: &DegenerateLimitConfig) -> Result<Vec<f64>> {
    let eqs = cfg
        .half_widths
        .iter()
        .map(|&h| Equilibrium::build(prims.clone(), TypeDistribution::uniform(cfg.theta - h, cfg.theta + h)?))
        .collect::<Result<Vec<_>>>()?;
    let limit_eq = eqs
        .first()
        .ok_or_else(|| invalid("half_widths", "need at least one half-width"))?;
    let limit = RandomizedExit {
        eq: limit_eq,
        theta: cfg.theta,
    };
    let noise = crate::diffusion::NoiseGrid::covering(cfg.seed, cfg.dt, cfg.horizon)?;
    let rows: Vec<(f64, Vec<f64>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = simulate_path(&prims.model, cfg.x0, noise.horizon(), &noise, p)?;
            let u: f64 = noise.aux_rng(p).gen_range(f64::EPSILON..1.0);
            let mixed = limit.exit_time(&path, u);
            let full = eqs
                .iter()
                .map(|e| {
                    let belief = e.integrate_belief(&path, 0.0, &cfg.belief)?;
                    let theta = e.dist.inverse_cdf(u);
                    Ok(e.exit_time(theta, &belief, &path).0)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((mixed, full))
        })
        .collect::<Result<_>>()?;
    let mixed: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok((0..eqs.len())
        .map(|k| {
            let full: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
            ks_distance(&full, &mixed)
        })
        .collect())
}
