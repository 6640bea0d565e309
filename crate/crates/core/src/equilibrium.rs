//! The symmetric equilibrium: type prior, exit intensity, belief process,
//! exit times and simulated play.
//!
//! Beliefs are carried by `A_t = -ln F(Y_t)`, where `Y_t` is the highest
//! opponent type still possibly in the game. `A` grows at the equilibrium
//! hazard `lambda(X_t, Y_t)`, which is switched on only in the action region
//! `X_t <= alpha(Y_t)`. The jump in `lambda` across that boundary is smoothed
//! over a band of width `eps` below the boundary in `y`, and the belief is
//! integrated along a decreasing ladder of `eps`.

use serde::Serialize;

use crate::diffusion::{simulate_path, NoiseGrid, SamplePath};
use crate::error::{invalid, Error, Result};
use crate::primitives::Primitives;
use crate::single_player::{ThresholdTable, DEFAULT_ALPHA_TOL, DEFAULT_TABLE_POINTS};

#[derive(Debug, Clone, PartialEq)]
pub enum TypeFamily {
    Uniform,
    /// Strictly increasing CDF values at strictly increasing types, linearly interpolated.
    Tabulated {
        ys: Vec<f64>,
        cdf: Vec<f64>,
    },
}

/// Prior of the private exit value on `[theta_lo, theta_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    theta_lo: f64,
    theta_hi: f64,
    pub family: TypeFamily,
}

impl TypeDistribution {
    pub fn uniform(theta_lo: f64, theta_hi: f64) -> Result<Self> {
        if !(theta_hi > theta_lo) || !theta_lo.is_finite() || !theta_hi.is_finite() {
            return Err(invalid("theta", "need finite theta_lo < theta_hi"));
        }
        Ok(Self {
            theta_lo,
            theta_hi,
            family: TypeFamily::Uniform,
        })
    }

    pub fn tabulated(ys: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if ys.len() < 2 || ys.len() != cdf.len() {
            return Err(invalid("cdf", "need matching type and CDF columns of length >= 2"));
        }
        if !ys.windows(2).all(|w| w[1] > w[0]) || !cdf.windows(2).all(|w| w[1] > w[0]) {
            return Err(invalid("cdf", "types and CDF values must be strictly increasing"));
        }
        if cdf[0] != 0.0 || *cdf.last().unwrap() != 1.0 {
            return Err(invalid("cdf", "CDF must run from 0 to 1"));
        }
        Ok(Self {
            theta_lo: ys[0],
            theta_hi: *ys.last().unwrap(),
            family: TypeFamily::Tabulated { ys, cdf },
        })
    }

    pub fn theta_lo(&self) -> f64 {
        self.theta_lo
    }

    pub fn theta_hi(&self) -> f64 {
        self.theta_hi
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let y = y.clamp(self.theta_lo, self.theta_hi);
        match &self.family {
            TypeFamily::Uniform => (y - self.theta_lo) / (self.theta_hi - self.theta_lo),
            TypeFamily::Tabulated { ys, cdf } => interp(ys, cdf, y),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.family {
            TypeFamily::Uniform => self.theta_lo + (self.theta_hi - self.theta_lo) * u,
            TypeFamily::Tabulated { ys, cdf } => interp(cdf, ys, u),
        }
    }

    /// `A(y) = -ln F(y)` for `y` in `(theta_lo, theta_hi]`.
    pub fn big_a(&self, y: f64) -> Result<f64> {
        if !(y > self.theta_lo && y <= self.theta_hi) {
            return Err(Error::TypeOutOfSupport {
                y,
                lo: self.theta_lo,
                hi: self.theta_hi,
            });
        }
        Ok(self.big_a_extended(y))
    }

    /// [`TypeDistribution::big_a`] with `+inf` at and below `theta_lo`.
    pub fn big_a_extended(&self, y: f64) -> f64 {
        if y <= self.theta_lo {
            return f64::INFINITY;
        }
        match &self.family {
            TypeFamily::Uniform => -((y.min(self.theta_hi) - self.theta_lo) / (self.theta_hi - self.theta_lo)).ln(),
            TypeFamily::Tabulated { .. } => -self.cdf(y).ln(),
        }
    }

    /// `Y(a) = F^{-1}(e^{-a})`; `theta_hi` for `a <= 0`.
    #[inline]
    pub fn big_y(&self, a: f64) -> f64 {
        let u = (-a.max(0.0)).exp();
        match &self.family {
            TypeFamily::Uniform => self.theta_lo + (self.theta_hi - self.theta_lo) * u,
            TypeFamily::Tabulated { .. } => self.inverse_cdf(u),
        }
    }
}

fn interp(xs: &[f64], ys: &[f64], v: f64) -> f64 {
    let k = xs.partition_point(|&p| p <= v).saturating_sub(1).min(xs.len() - 2);
    let w = (v - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

pub const DEFAULT_EPS_LADDER: [f64; 5] = [0.08, 0.04, 0.02, 0.01, 0.005];
pub const DEFAULT_CONV_TOL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefSettings {
    /// Strictly decreasing smoothing widths; the last one is used for play.
    pub eps_ladder: Vec<f64>,
    /// Bound on `sup_t |A^eps - A^{eps_prev}|` between the last two rungs.
    pub conv_tol: f64,
}

impl Default for BeliefSettings {
    fn default() -> Self {
        Self {
            eps_ladder: DEFAULT_EPS_LADDER.to_vec(),
            conv_tol: DEFAULT_CONV_TOL,
        }
    }
}

impl BeliefSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.eps_ladder.is_empty()
            && self.eps_ladder.iter().all(|e| *e > 0.0 && e.is_finite())
            && self.eps_ladder.windows(2).all(|w| w[1] < w[0]);
        if ok {
            Ok(())
        } else {
            Err(Error::BadLadder)
        }
    }

    pub fn finest(&self) -> f64 {
        *self.eps_ladder.last().expect("validated ladder is non-empty")
    }
}

/// The generating process `A_t` on the grid of an X path.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPath {
    pub times: Vec<f64>,
    pub a_values: Vec<f64>,
    pub epsilon_used: f64,
    pub converged: bool,
}

/// Equilibrium objects for one model and prior.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub prims: Primitives,
    pub dist: TypeDistribution,
    pub table: ThresholdTable,
    lambda_max: f64,
}

impl Equilibrium {
    pub fn new(prims: Primitives, dist: TypeDistribution, table: ThresholdTable) -> Result<Self> {
        let m_min = prims.resolvents.m_min();
        let hi = dist.theta_hi();
        if !(m_min > hi) {
            return Err(Error::RegimeViolated(format!("m_min = {m_min} <= theta_U = {hi}")));
        }
        let span = (table.theta_lo() - dist.theta_lo()).abs() + (table.theta_hi() - hi).abs();
        if span > 1e-12 * hi.abs().max(1.0) {
            return Err(invalid("table", "threshold table must span the type support"));
        }
        let lambda_max = prims.r() * hi / (m_min - hi);
        Ok(Self {
            prims,
            dist,
            table,
            lambda_max,
        })
    }

    /// Tabulate thresholds on the default grid and assemble.
    pub fn build(prims: Primitives, dist: TypeDistribution) -> Result<Self> {
        let table = ThresholdTable::build(
            &prims,
            dist.theta_lo(),
            dist.theta_hi(),
            DEFAULT_TABLE_POINTS,
            DEFAULT_ALPHA_TOL,
        )?;
        Self::new(prims, dist, table)
    }

    /// The worked example with a uniform prior on `[0.5, 1.5]`.
    pub fn example() -> Self {
        Self::build(Primitives::example(), TypeDistribution::uniform(0.5, 1.5).unwrap())
            .expect("example equilibrium builds")
    }

    /// `r theta_U / (m_min - theta_U)`, an upper bound on the hazard.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    #[inline]
    pub fn alpha(&self, theta: f64) -> f64 {
        self.table.alpha_at(theta)
    }

    /// Unswitched hazard `(r y - D(x)) / (m(x) - y)`.
    #[inline]
    pub fn l(&self, x: f64, y: f64) -> f64 {
        (self.prims.r() * y - self.prims.flow_d(x)) / (self.prims.m(x) - y)
    }

    /// The equilibrium hazard, zero outside the action region.
    pub fn lambda(&self, x: f64, y: f64) -> f64 {
        if x <= self.alpha(y) {
            self.l(x, y)
        } else {
            0.0
        }
    }

    /// Continuous hazard equal to `lambda` for `y >= alpha^{-1}(x)` and ramped
    /// linearly to zero over `y` in `[alpha^{-1}(x) - eps, alpha^{-1}(x)]`.
    #[inline]
    pub fn lambda_eps(&self, x: f64, y: f64, eps: f64) -> f64 {
        let yb = self.table.alpha_inv(x);
        if y >= yb {
            return self.l(x, y);
        }
        let ramp = (y - yb + eps) / eps;
        if ramp <= 0.0 {
            0.0
        } else {
            // The boundary type can lie above the support; the hazard there is
            // capped at the top type so the bound lambda_max still holds.
            self.l(x, yb.min(self.dist.theta_hi())).max(0.0) * ramp
        }
    }

    /// One explicit Euler step of the belief ODE.
    #[inline]
    pub fn belief_step(&self, x: f64, a: f64, eps: f64, dt: f64) -> f64 {
        a + self.lambda_eps(x, self.dist.big_y(a), eps) * dt
    }

    /// Integrate `dA = lambda^eps(X, Y(A)) dt` along `path` from `a0` for each
    /// rung of the ladder; the finest rung is returned.
    pub fn integrate_belief(&self, path: &SamplePath, a0: f64, settings: &BeliefSettings) -> Result<BeliefPath> {
        settings.validate()?;
        if !(a0 >= 0.0) {
            return Err(invalid("a0", "initial belief must be non-negative"));
        }
        let dt = path.step();
        let slack = 2.0 * self.lambda_max * dt;
        let mut prev: Option<Vec<f64>> = None;
        let mut gap = 0.0;
        for &eps in &settings.eps_ladder {
            let mut a = Vec::with_capacity(path.len());
            a.push(a0);
            for i in 1..path.len() {
                let next = self.belief_step(path.states[i - 1], a[i - 1], eps, dt);
                a.push(next);
            }
            if let Some(p) = &prev {
                gap = 0.0;
                for (i, (new, old)) in a.iter().zip(p).enumerate() {
                    if *new > old + slack {
                        return Err(Error::LadderMonotonicity {
                            step: i,
                            gap: new - old,
                        });
                    }
                    gap = f64::max(gap, (new - old).abs());
                }
            }
            prev = Some(a);
        }
        Ok(BeliefPath {
            times: path.times.clone(),
            a_values: prev.unwrap(),
            epsilon_used: settings.finest(),
            converged: gap < settings.conv_tol,
        })
    }

    /// Exit times of type `theta` in the two equivalent forms, in time units.
    ///
    /// `tau_a` is the start of the first step during which `A` rises above
    /// `A(theta)`; `tau_rect` is the first grid time with `A >= A(theta)` and
    /// `X <= alpha(theta)`. Either is `+inf` if not reached on the grid.
    pub fn exit_time(&self, theta: f64, belief: &BeliefPath, path: &SamplePath) -> (f64, f64) {
        let target = self.dist.big_a_extended(theta);
        let tau_a = belief
            .a_values
            .windows(2)
            .position(|w| w[1] > target)
            .map_or(f64::INFINITY, |i| path.times[i]);
        (tau_a, self.rect_exit_time(theta, belief, path))
    }

    /// First grid time in the rectangle `{X <= alpha(theta), A >= A(theta)}`.
    pub fn rect_exit_time(&self, theta: f64, belief: &BeliefPath, path: &SamplePath) -> f64 {
        rect_exit_index(
            self.alpha(theta),
            self.dist.big_a_extended(theta),
            &path.states,
            &belief.a_values,
        )
        .map_or(f64::INFINITY, |i| path.times[i])
    }

    /// Play one game on row `path_index` of `noise`. Both players use the
    /// rectangular exit rule against the shared belief started at `A = 0`.
    pub fn simulate_game(
        &self,
        x0: f64,
        theta1: f64,
        theta2: f64,
        noise: &NoiseGrid,
        path_index: u64,
        settings: &BeliefSettings,
    ) -> Result<GameRun> {
        for t in [theta1, theta2] {
            if !(t >= self.dist.theta_lo() && t <= self.dist.theta_hi()) {
                return Err(Error::TypeOutOfSupport {
                    y: t,
                    lo: self.dist.theta_lo(),
                    hi: self.dist.theta_hi(),
                });
            }
        }
        let path = simulate_path(&self.prims.model, x0, noise.horizon(), noise, path_index)?;
        let belief = self.integrate_belief(&path, 0.0, settings)?;
        let idx = |theta: f64| {
            rect_exit_index(
                self.alpha(theta),
                self.dist.big_a_extended(theta),
                &path.states,
                &belief.a_values,
            )
        };
        let (k1, k2) = (idx(theta1), idx(theta2));
        let stop = match (k1, k2) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => path.len() - 1,
        };
        let r = self.prims.r();
        let dt = path.step();
        let flow: f64 = (0..stop)
            .map(|j| {
                let (t0, t1) = (path.times[j], path.times[j + 1]);
                0.5 * dt
                    * ((-r * t0).exp() * self.prims.flow_d(path.states[j])
                        + (-r * t1).exp() * self.prims.flow_d(path.states[j + 1]))
            })
            .sum();
        let disc = (-r * path.times[stop]).exp();
        let leave = |theta: f64| flow + disc * theta;
        let stay = flow + disc * self.prims.m(path.states[stop]);
        let time = |k: Option<usize>| k.map_or(f64::INFINITY, |i| path.times[i]);
        let (payoff_1, payoff_2, first_exiter) = match (k1, k2) {
            (Some(a), Some(b)) if a == b => (leave(theta1), leave(theta2), FirstExiter::Both),
            (Some(a), Some(b)) if a < b => (leave(theta1), stay, FirstExiter::One),
            (Some(_), None) => (leave(theta1), stay, FirstExiter::One),
            (None, None) => (flow, flow, FirstExiter::Neither),
            _ => (stay, leave(theta2), FirstExiter::Two),
        };
        Ok(GameRun {
            outcome: GameOutcome {
                exit_time_1: time(k1),
                exit_time_2: time(k2),
                payoff_1,
                payoff_2,
                first_exiter,
            },
            path,
            belief,
        })
    }
}

/// First index with `states[i] <= x_bar` and `a[i] >= a_bar`.
#[inline]
pub(crate) fn rect_exit_index(x_bar: f64, a_bar: f64, states: &[f64], a: &[f64]) -> Option<usize> {
    states.iter().zip(a).position(|(&x, &ai)| x <= x_bar && ai >= a_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstExiter {
    One,
    Two,
    Both,
    Neither,
}

/// Realised play; payoffs are discounted to time 0 and truncated at the
/// horizon when nobody exits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GameOutcome {
    pub exit_time_1: f64,
    pub exit_time_2: f64,
    pub payoff_1: f64,
    pub payoff_2: f64,
    pub first_exiter: FirstExiter,
}

#[derive(Debug, Clone)]
pub struct GameRun {
    pub outcome: GameOutcome,
    pub path: SamplePath,
    pub belief: BeliefPath,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linspace;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn eq() -> &'static Equilibrium {
        static E: OnceLock<Equilibrium> = OnceLock::new();
        E.get_or_init(Equilibrium::example)
    }

    fn uniform() -> TypeDistribution {
        TypeDistribution::uniform(0.5, 1.5).unwrap()
    }

    #[test]
    fn uniform_reparametrisation_values() {
        let d = uniform();
        assert_eq!(d.big_a(1.5).unwrap(), 0.0);
        assert_eq!(d.big_y(0.0), 1.5);
        assert!((d.big_a(1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(d.big_a_extended(0.5), f64::INFINITY);
        assert!(matches!(d.big_a(0.5), Err(Error::TypeOutOfSupport { .. })));
    }

    #[test]
    fn reparametrisation_round_trips() {
        let d = uniform();
        for y in linspace(0.51, 1.5, 100) {
            assert!((d.big_y(d.big_a(y).unwrap()) - y).abs() < 1e-12);
        }
        for u in linspace(0.0, 1.0, 101) {
            assert!((d.cdf(d.inverse_cdf(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_matches_uniform() {
        let ys = linspace(0.5, 1.5, 11);
        let cdf = linspace(0.0, 1.0, 11);
        let t = TypeDistribution::tabulated(ys, cdf).unwrap();
        let u = uniform();
        for a in linspace(0.0, 4.0, 50) {
            assert!((t.big_y(a) - u.big_y(a)).abs() < 1e-12);
        }
        assert!(TypeDistribution::tabulated(vec![0.5, 1.0], vec![0.0, 0.9]).is_err());
    }

    #[test]
    fn hazard_vanishes_outside_action_region() {
        let e = eq();
        for y in [0.6, 1.0, 1.4] {
            assert_eq!(e.lambda(e.alpha(y) * 1.01, y), 0.0);
            assert!(e.lambda(e.alpha(y) * 0.99, y) > 0.0);
        }
    }

    #[test]
    fn hazard_within_bounds() {
        let e = eq();
        assert!((e.lambda_max() - 3.0).abs() < 1e-12);
        for x in linspace(1e-4, 3.0, 200) {
            for y in linspace(0.5, 1.5, 50) {
                let v = e.lambda(x, y);
                assert!((0.0..=e.lambda_max()).contains(&v), "lambda({x},{y}) = {v}");
                let w = e.lambda_eps(x, y, 0.08);
                assert!(w >= v && w <= e.lambda_max());
            }
        }
    }

    #[test]
    fn hazard_slope_in_type() {
        let e = eq();
        let m_min = e.prims.resolvents.m_min();
        let cap = e.prims.r() * m_min / (m_min - 1.5).powi(2);
        let h = 1e-6;
        for x in linspace(1e-3, e.alpha(0.5), 40) {
            for y in linspace(0.5, 1.5 - h, 40) {
                let slope = (e.lambda(x, y + h) - e.lambda(x, y)) / h;
                assert!(slope > 0.0 && slope <= cap * (1.0 + 1e-6), "x={x}, y={y}: {slope}");
            }
        }
    }

    #[test]
    fn hazard_decreasing_in_state_and_belief() {
        let e = eq();
        let xs = linspace(1e-3, 2.0, 120);
        let as_ = linspace(0.0, 4.0, 120);
        for &a in &as_ {
            let y = e.dist.big_y(a);
            assert!(xs.windows(2).all(|w| e.lambda(w[1], y) <= e.lambda(w[0], y)));
        }
        for &x in &xs {
            assert!(as_
                .windows(2)
                .all(|w| e.lambda(x, e.dist.big_y(w[1])) <= e.lambda(x, e.dist.big_y(w[0]))));
        }
    }

    #[test]
    fn hazard_jumps_only_at_threshold() {
        let e = eq();
        for y in [0.6, 1.0, 1.4] {
            let xs = linspace(1e-3, 3.0, 30_001);
            let h = xs[1] - xs[0];
            let a = e.alpha(y);
            for w in xs.windows(2) {
                let jump = (e.lambda(w[1], y) - e.lambda(w[0], y)).abs();
                if jump > 1e-2 {
                    assert!(w[0] <= a + h && w[1] >= a - h, "jump {jump} at {}", w[0]);
                }
            }
        }
    }

    #[test]
    fn hazard_balances_flow_and_premium() {
        let e = eq();
        for theta in linspace(0.5, 1.5, 21) {
            for x in linspace(1e-3, e.alpha(theta), 50) {
                let res = e.prims.flow_d(x) - e.prims.r() * theta + e.lambda(x, theta) * (e.prims.m(x) - theta);
                assert!(res.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_hazard_branches() {
        let e = eq();
        let x = e.alpha(1.0);
        let yb = e.table.alpha_inv(x);
        assert_eq!(e.lambda_eps(x, yb + 0.1, 0.01), e.l(x, yb + 0.1));
        assert_eq!(e.lambda_eps(x, yb - 0.01, 0.01), 0.0);
        assert!(e.lambda_eps(x, yb - 0.005, 0.01) > 0.0);
    }

    #[test]
    fn smoothed_hazard_shrinks_with_eps() {
        let e = eq();
        for x in linspace(0.05, 2.0, 50) {
            for y in linspace(0.5, 1.5, 50) {
                for eps in [0.08, 0.04, 0.02] {
                    assert!(e.lambda_eps(x, y, eps / 2.0) <= e.lambda_eps(x, y, eps));
                }
            }
        }
    }

    fn path(seed: u64, x0: f64) -> SamplePath {
        let noise = NoiseGrid::covering(seed, 1e-3, 3.0).unwrap();
        simulate_path(&eq().prims.model, x0, noise.horizon(), &noise, 0).unwrap()
    }

    #[test]
    fn belief_frozen_far_above_threshold() {
        let e = eq();
        let n = 1000;
        let p = SamplePath {
            times: (0..n).map(|i| i as f64 * 1e-3).collect(),
            states: vec![5.0; n],
        };
        let b = e.integrate_belief(&p, 0.4, &BeliefSettings::default()).unwrap();
        assert!(b.a_values.iter().all(|&a| a == 0.4));
        assert!(b.converged);
    }

    #[test]
    fn belief_monotone_and_bounded_increments() {
        let e = eq();
        let p = path(3, 1.0);
        let b = e.integrate_belief(&p, 0.0, &BeliefSettings::default()).unwrap();
        let cap = e.lambda_max() * p.step() * (1.0 + 1e-12);
        assert!(b.a_values.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= cap));
        assert_eq!(b.a_values[0], 0.0);
        assert!(b.a_values.iter().all(|&a| {
            let y = e.dist.big_y(a);
            y > 0.5 && y <= 1.5
        }));
    }

    #[test]
    fn ladder_validation() {
        let e = eq();
        let p = path(3, 1.0);
        for ladder in [vec![], vec![0.01, 0.02], vec![0.01, -0.01]] {
            let s = BeliefSettings {
                eps_ladder: ladder,
                conv_tol: 0.1,
            };
            assert_eq!(e.integrate_belief(&p, 0.0, &s).unwrap_err(), Error::BadLadder);
        }
    }

    #[test]
    fn top_type_exits_at_once_inside_action_region() {
        let e = eq();
        let p = path(5, 0.9 * e.alpha(1.5));
        let b = e.integrate_belief(&p, 0.0, &BeliefSettings::default()).unwrap();
        assert_eq!(e.exit_time(1.5, &b, &p), (0.0, 0.0));
    }

    #[test]
    fn top_type_waits_for_threshold_hit() {
        let e = eq();
        let p = path(9, 2.72);
        let b = e.integrate_belief(&p, 0.0, &BeliefSettings::default()).unwrap();
        let hit = p.states.iter().position(|&x| x <= e.alpha(1.5)).map(|i| p.times[i]);
        assert_eq!(Some(e.exit_time(1.5, &b, &p).1), hit.or(Some(f64::INFINITY)));
    }

    #[test]
    fn exit_time_decreasing_in_type() {
        let e = eq();
        for seed in 0..20 {
            let p = path(seed, 2.72);
            let b = e.integrate_belief(&p, 0.0, &BeliefSettings::default()).unwrap();
            let taus: Vec<f64> = linspace(0.55, 1.5, 20)
                .iter()
                .map(|&t| e.rect_exit_time(t, &b, &p))
                .collect();
            assert!(taus.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn symmetric_types_exit_together() {
        let e = eq();
        let noise = NoiseGrid::covering(11, 1e-3, 5.0).unwrap();
        for idx in 0..5 {
            let run = e
                .simulate_game(2.72, 1.2, 1.2, &noise, idx, &BeliefSettings::default())
                .unwrap();
            let o = run.outcome;
            assert_eq!(o.exit_time_1, o.exit_time_2);
            if o.exit_time_1.is_finite() {
                assert_eq!(o.first_exiter, FirstExiter::Both);
            }
        }
    }

    #[test]
    fn higher_type_leaves_first() {
        let e = eq();
        let noise = NoiseGrid::covering(12, 1e-3, 5.0).unwrap();
        for idx in 0..20 {
            let run = e
                .simulate_game(2.72, 1.4, 1.0, &noise, idx, &BeliefSettings::default())
                .unwrap();
            let reached = run.belief.a_values.iter().any(|&a| a >= e.dist.big_a(1.4).unwrap());
            if run.outcome.exit_time_1.is_finite() {
                assert!(reached);
                assert_eq!(run.outcome.first_exiter, FirstExiter::One);
                assert!(run.outcome.payoff_2 > run.outcome.payoff_1 - 1e-12);
            }
        }
    }

    #[test]
    fn top_types_inside_action_region_collect_exit_values() {
        let e = eq();
        let noise = NoiseGrid::covering(13, 1e-3, 2.0).unwrap();
        let x0 = 0.5 * e.alpha(1.5);
        let run = e
            .simulate_game(x0, 1.5, 1.5, &noise, 0, &BeliefSettings::default())
            .unwrap();
        assert_eq!(run.outcome.payoff_1 + run.outcome.payoff_2, 3.0);
    }

    #[test]
    fn rejects_small_monopoly_premium() {
        let prims = Primitives::capped_power_gbm(-0.5, 1.0, 1.0, 0.5, 1000.0, 1.4).unwrap();
        assert!(matches!(
            Equilibrium::build(prims, uniform()),
            Err(Error::RegimeViolated(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn smoothed_hazard_continuous_in_type(x in 0.05f64..2.0, y in 0.5f64..1.49) {
            let e = eq();
            let eps = 0.01;
            let h = 1e-7;
            let jump = (e.lambda_eps(x, y + h, eps) - e.lambda_eps(x, y, eps)).abs();
            prop_assert!(jump < 1e-3);
        }

        #[test]
        fn hazard_nonnegative(x in 1e-4f64..50.0, y in 0.5f64..1.5) {
            prop_assert!(eq().lambda(x, y) >= 0.0);
            prop_assert!(eq().lambda_eps(x, y, 0.005) >= 0.0);
        }

        #[test]
        fn belief_lipschitz_in_start(seed in 0u64..1000, a in 0.0f64..2.0, da in 0.0f64..0.5) {
            let e = eq();
            let p = path(seed, 1.5);
            let s = BeliefSettings { eps_ladder: vec![0.01], conv_tol: 1.0 };
            let lo = e.integrate_belief(&p, a, &s).unwrap();
            let hi = e.integrate_belief(&p, a + da, &s).unwrap();
            let slack = 2.0 * e.lambda_max() * p.step();
            for (l, h) in lo.a_values.iter().zip(&hi.a_values) {
                prop_assert!((h - l).abs() <= da + slack);
            }
        }
    }
}
