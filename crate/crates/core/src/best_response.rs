//! Best-response checks: Monte-Carlo payoffs of stopping rules against the
//! equilibrium opponent, deviation audits and stopping-region recovery.
//!
//! Two estimators are provided. The integrated one averages the opponent out
//! analytically through the belief: surviving mass `e^{-A}` weights the
//! duopoly flow, belief increments pay the monopoly value, and stopping pays
//! `theta` on the surviving mass. The sampled one draws the opponent's type
//! and plays the game out. Both run on a per-path ledger of prefix sums, so a
//! path is simulated once for any number of rules and types.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::NoiseGrid;
use crate::equilibrium::{rect_exit_index, BeliefSettings, Equilibrium};
use crate::error::{invalid, Error, Result};
use crate::stats::{pooled_stderr, Estimate};

/// A stopping rule evaluated on grid data of `(X, A)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    Immediate,
    Never,
    /// First grid time with `X <= x_thresh` and `A >= a_thresh`.
    Rect {
        x_thresh: f64,
        a_thresh: f64,
    },
    /// First grid time with `X <= alpha(theta)`, ignoring beliefs.
    SinglePlayer {
        theta: f64,
    },
    /// The base rule's stopping time plus `delay`, rounded to the grid.
    TimeShift {
        base: Box<StoppingRule>,
        delay: f64,
    },
}

impl fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppingRule::Immediate => write!(f, "immediate"),
            StoppingRule::Never => write!(f, "never"),
            StoppingRule::Rect { x_thresh, a_thresh } => write!(f, "rect(x<={x_thresh:.6},a>={a_thresh:.6})"),
            StoppingRule::SinglePlayer { theta } => write!(f, "single_player({theta})"),
            StoppingRule::TimeShift { base, delay } => write!(f, "shift({base},{delay})"),
        }
    }
}

impl StoppingRule {
    pub fn shifted(self, delay: f64) -> Self {
        StoppingRule::TimeShift {
            base: Box::new(self),
            delay,
        }
    }

    /// Stopping index on the ledger's grid, `None` if not before truncation.
    fn stop_index(&self, led: &PathLedger, eq: &Equilibrium, dt: f64) -> Option<usize> {
        let last = led.last();
        match self {
            StoppingRule::Immediate => Some(0),
            StoppingRule::Never => None,
            StoppingRule::Rect { x_thresh, a_thresh } => led.rect_index(*x_thresh, *a_thresh),
            StoppingRule::SinglePlayer { theta } => led.hit_index(eq.alpha(*theta)),
            StoppingRule::TimeShift { base, delay } => {
                let k = base.stop_index(led, eq, dt)? + (delay / dt).round() as usize;
                (k <= last).then_some(k)
            }
        }
    }
}

/// The equilibrium rule of type `theta`: the rectangle `{X <= alpha(theta), A >= A(theta)}`.
pub fn equilibrium_rule(eq: &Equilibrium, theta: f64) -> StoppingRule {
    StoppingRule::Rect {
        x_thresh: eq.alpha(theta),
        a_thresh: eq.dist.big_a_extended(theta),
    }
}

/// The standard 24-rule deviation family around the equilibrium rule of `theta`.
pub fn default_deviations(eq: &Equilibrium, theta: f64) -> Vec<StoppingRule> {
    let alpha = eq.alpha(theta);
    let big_a = eq.dist.big_a_extended(theta);
    let rect = |xs: f64, as_: f64| StoppingRule::Rect {
        x_thresh: xs * alpha,
        a_thresh: as_ * big_a,
    };
    let mut rules = Vec::with_capacity(24);
    for xs in [0.8, 0.9, 1.1, 1.2] {
        for as_ in [0.8, 1.0, 1.2] {
            rules.push(rect(xs, as_));
        }
    }
    rules.push(StoppingRule::Immediate);
    rules.push(StoppingRule::Never);
    for d in [0.05, 0.2] {
        rules.push(equilibrium_rule(eq, theta).shifted(d));
    }
    rules.push(rect(1.0, 0.8));
    rules.push(rect(1.0, 1.2));
    rules.push(StoppingRule::SinglePlayer { theta });
    for d in [0.01, 0.1, 0.5] {
        rules.push(equilibrium_rule(eq, theta).shifted(d));
    }
    for d in [0.05, 0.2] {
        rules.push(StoppingRule::SinglePlayer { theta }.shifted(d));
    }
    rules
}

/// Simulation settings shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub noise: NoiseGrid,
    pub n_paths: usize,
    pub belief: BeliefSettings,
    /// Per-path truncation: stop once the discounted surviving payoff bound drops below this.
    pub tail_tol: f64,
}

pub const DEFAULT_TAIL_TOL: f64 = 1e-3;

impl McConfig {
    /// Grid of step `dt` long enough for the truncation bound to fall below
    /// [`DEFAULT_TAIL_TOL`] even without belief growth.
    pub fn for_equilibrium(eq: &Equilibrium, seed: u64, dt: f64, n_paths: usize) -> Result<Self> {
        let c = payoff_cap(eq);
        let horizon = (c / DEFAULT_TAIL_TOL).ln() / eq.prims.r() + dt;
        Ok(Self {
            noise: NoiseGrid::covering(seed, dt, horizon)?,
            n_paths,
            belief: BeliefSettings::default(),
            tail_tol: DEFAULT_TAIL_TOL,
        })
    }
}

/// Bound on any continuation payoff in undiscounted terms.
fn payoff_cap(eq: &Equilibrium) -> f64 {
    eq.prims.payoff_bound() + eq.dist.theta_hi()
}

/// One simulated path with its belief and the prefix sums of the integrated payoff.
struct PathLedger {
    states: Vec<f64>,
    a: Vec<f64>,
    runmin: Vec<f64>,
    /// `sum_{j<k} e^{-A_j} * trapezoid of e^{-rt} D over step j`.
    duo: Vec<f64>,
    /// `sum_{j<k} trapezoid of e^{-rt} D over step j`.
    flow: Vec<f64>,
    /// `sum_{1<=j<k} (e^{-A_{j-1}} - e^{-A_j}) e^{-r t_j} m(X_j)`, one entry longer than the path.
    jump: Vec<f64>,
}

impl PathLedger {
    fn new() -> Self {
        Self {
            states: Vec::new(),
            a: Vec::new(),
            runmin: Vec::new(),
            duo: Vec::new(),
            flow: Vec::new(),
            jump: Vec::new(),
        }
    }

    fn last(&self) -> usize {
        self.states.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn fill(
        &mut self,
        eq: &Equilibrium,
        x0: f64,
        a0: f64,
        noise: &NoiseGrid,
        p: u64,
        eps: f64,
        disc: &[f64],
        cap: f64,
        tol: f64,
    ) -> Result<()> {
        let prims = &eq.prims;
        let dt = noise.step;
        let stepper = prims.model.stepper(dt);
        let mut normals = noise.normals(p);
        for v in [
            &mut self.states,
            &mut self.a,
            &mut self.runmin,
            &mut self.duo,
            &mut self.flow,
            &mut self.jump,
        ] {
            v.clear();
        }
        let (mut x, mut a) = (x0, a0);
        let mut d_prev = prims.flow_d(x);
        self.states.push(x);
        self.a.push(a);
        self.runmin.push(x);
        self.duo.push(0.0);
        self.flow.push(0.0);
        self.jump.extend([0.0, 0.0]);
        let mut i = 0;
        while i < noise.n_steps && cap * disc[i] * (-a).exp() >= tol {
            let a_next = eq.belief_step(x, a, eps, dt);
            let x_next = stepper.advance(x, normals.next_normal(), i)?;
            let d_next = prims.flow_d(x_next);
            let trap = 0.5 * dt * (disc[i] * d_prev + disc[i + 1] * d_next);
            let surv = (-a).exp();
            let surv_next = (-a_next).exp();
            self.duo.push(self.duo[i] + surv * trap);
            self.flow.push(self.flow[i] + trap);
            let dj = if surv_next < surv {
                (surv - surv_next) * disc[i + 1] * prims.m(x_next)
            } else {
                0.0
            };
            self.jump.push(self.jump[i + 1] + dj);
            self.runmin.push(self.runmin[i].min(x_next));
            self.states.push(x_next);
            self.a.push(a_next);
            x = x_next;
            a = a_next;
            d_prev = d_next;
            i += 1;
        }
        Ok(())
    }

    /// First index with `X <= level`.
    fn hit_index(&self, level: f64) -> Option<usize> {
        let k = self.runmin.partition_point(|&m| m > level);
        (k < self.states.len()).then_some(k)
    }

    fn rect_index(&self, x_bar: f64, a_bar: f64) -> Option<usize> {
        let from_a = self.a.partition_point(|&a| a < a_bar);
        let start = from_a.max(self.hit_index(x_bar)?);
        rect_exit_index(
            x_bar,
            a_bar,
            &self.states[start.min(self.states.len())..],
            &self.a[start.min(self.a.len())..],
        )
        .map(|k| k + start)
    }

    fn integrated(&self, k: Option<usize>, theta: f64, disc: &[f64]) -> f64 {
        match k {
            Some(0) => theta * (-self.a[0]).exp(),
            Some(k) => self.duo[k] + self.jump[k] + theta * disc[k] * (-self.a[k - 1]).exp(),
            None => {
                let n = self.last();
                self.duo[n] + self.jump[n + 1]
            }
        }
    }

    fn sampled(&self, k: Option<usize>, opponent: Option<usize>, theta: f64, eq: &Equilibrium, disc: &[f64]) -> f64 {
        match (k, opponent) {
            (Some(k), Some(j)) if k <= j => self.flow[k] + theta * disc[k],
            (Some(k), None) => self.flow[k] + theta * disc[k],
            (_, Some(j)) => self.flow[j] + disc[j] * eq.prims.m(self.states[j]),
            (None, None) => self.flow[self.last()],
        }
    }
}

/// Rules evaluated for one type.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBank {
    pub theta: f64,
    pub rules: Vec<StoppingRule>,
}

/// Per-path payoffs of one rule; `sampled` is empty unless requested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSamples {
    pub integrated: Vec<f64>,
    pub sampled: Vec<f64>,
}

/// Simulate `cfg.n_paths` paths from `(x0, a0)` and evaluate every rule of
/// every bank on each. The result is indexed `[bank][rule]`. The sampled
/// estimator is only defined from `a0 = 0`.
pub fn evaluate_rules(
    eq: &Equilibrium,
    x0: f64,
    a0: f64,
    banks: &[RuleBank],
    cfg: &McConfig,
    with_sampled: bool,
) -> Result<Vec<Vec<RuleSamples>>> {
    cfg.belief.validate()?;
    if !eq.prims.model.contains(x0) {
        return Err(Error::OutsideDomain {
            x0,
            lo: eq.prims.model.domain_lo,
            hi: eq.prims.model.domain_hi,
        });
    }
    if !(a0 >= 0.0) {
        return Err(invalid("a0", "initial belief must be non-negative"));
    }
    if with_sampled && a0 != 0.0 {
        return Err(invalid("a0", "the sampled estimator starts from the prior"));
    }
    if banks.iter().all(|b| b.rules.is_empty()) {
        return Err(Error::EmptyRuleSet);
    }
    let noise = &cfg.noise;
    let r = eq.prims.r();
    let cap = payoff_cap(eq);
    let horizon = noise.horizon();
    let bound = cap * (-r * horizon).exp();
    if bound > cfg.tail_tol {
        return Err(Error::HorizonTooShort {
            horizon,
            bound,
            tolerance: cfg.tail_tol,
        });
    }
    let dt = noise.step;
    let disc: Vec<f64> = (0..=noise.n_steps).map(|i| (-r * i as f64 * dt).exp()).collect();
    let eps = cfg.belief.finest();
    let width: usize = banks.iter().map(|b| b.rules.len()).sum::<usize>() * if with_sampled { 2 } else { 1 };

    let rows: Vec<Vec<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map_init(PathLedger::new, |led, p| {
            led.fill(eq, x0, a0, noise, p, eps, &disc, cap, cfg.tail_tol)?;
            let opponent = if with_sampled {
                let u: f64 = noise.aux_rng(p).gen();
                let t2 = eq.dist.inverse_cdf(u);
                led.rect_index(eq.alpha(t2), eq.dist.big_a_extended(t2))
            } else {
                None
            };
            let mut row = Vec::with_capacity(width);
            for bank in banks {
                for rule in &bank.rules {
                    let k = rule.stop_index(led, eq, dt);
                    row.push(led.integrated(k, bank.theta, &disc));
                    if with_sampled {
                        row.push(led.sampled(k, opponent, bank.theta, eq, &disc));
                    }
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut col = 0;
    let mut out = Vec::with_capacity(banks.len());
    for bank in banks {
        let mut per_rule = Vec::with_capacity(bank.rules.len());
        for _ in &bank.rules {
            let mut s = RuleSamples {
                integrated: rows.iter().map(|row| row[col]).collect(),
                sampled: Vec::new(),
            };
            col += 1;
            if with_sampled {
                s.sampled = rows.iter().map(|row| row[col]).collect();
                col += 1;
            }
            per_rule.push(s);
        }
        out.push(per_rule);
    }
    Ok(out)
}

/// Integrated-form payoff of `rule` for type `theta` from `(x0, a0)`.
pub fn payoff_integrated(
    eq: &Equilibrium,
    x0: f64,
    a0: f64,
    rule: &StoppingRule,
    theta: f64,
    cfg: &McConfig,
) -> Result<Estimate> {
    let bank = [RuleBank {
        theta,
        rules: vec![rule.clone()],
    }];
    let s = evaluate_rules(eq, x0, a0, &bank, cfg, false)?;
    Ok(Estimate::from_samples(&s[0][0].integrated))
}

/// Payoff of `rule` against an opponent whose type is drawn from the prior.
pub fn payoff_sampled(eq: &Equilibrium, x0: f64, rule: &StoppingRule, theta: f64, cfg: &McConfig) -> Result<Estimate> {
    let bank = [RuleBank {
        theta,
        rules: vec![rule.clone()],
    }];
    let s = evaluate_rules(eq, x0, 0.0, &bank, cfg, true)?;
    Ok(Estimate::from_samples(&s[0][0].sampled))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationResult {
    pub rule: String,
    pub estimate: Estimate,
    /// Mean of the deviation minus mean of the equilibrium rule.
    pub gain: f64,
    pub pooled_stderr: f64,
    /// Standard error of the per-path difference; informational.
    pub paired_stderr: f64,
    pub wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub theta: f64,
    pub x0: f64,
    pub n_paths: usize,
    pub significance: f64,
    pub equilibrium_rule: String,
    pub equilibrium_value: Estimate,
    pub deviation_values: Vec<DeviationResult>,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audit several types on one set of paths. A deviation wins when its mean
/// exceeds the equilibrium mean by more than `significance` pooled standard errors.
pub fn audit_many(
    eq: &Equilibrium,
    x0: f64,
    thetas: &[f64],
    deviations: impl Fn(f64) -> Vec<StoppingRule>,
    cfg: &McConfig,
    significance: f64,
) -> Result<Vec<AuditReport>> {
    let banks: Vec<RuleBank> = thetas
        .iter()
        .map(|&theta| {
            let mut rules = vec![equilibrium_rule(eq, theta)];
            rules.extend(deviations(theta));
            RuleBank { theta, rules }
        })
        .collect();
    if banks.iter().any(|b| b.rules.len() < 2) {
        return Err(Error::EmptyRuleSet);
    }
    let samples = evaluate_rules(eq, x0, 0.0, &banks, cfg, false)?;
    Ok(banks
        .iter()
        .zip(&samples)
        .map(|(bank, s)| {
            let base = &s[0].integrated;
            let eq_est = Estimate::from_samples(base);
            let deviation_values: Vec<DeviationResult> = bank.rules[1..]
                .iter()
                .zip(&s[1..])
                .map(|(rule, rs)| {
                    let est = Estimate::from_samples(&rs.integrated);
                    let diffs: Vec<f64> = rs.integrated.iter().zip(base).map(|(d, e)| d - e).collect();
                    let gain = est.mean - eq_est.mean;
                    let pooled = pooled_stderr(&eq_est, &est);
                    DeviationResult {
                        rule: rule.to_string(),
                        estimate: est,
                        gain,
                        pooled_stderr: pooled,
                        paired_stderr: Estimate::from_samples(&diffs).stderr,
                        wins: gain > significance * pooled,
                    }
                })
                .collect();
            AuditReport {
                theta: bank.theta,
                x0,
                n_paths: cfg.n_paths,
                significance,
                equilibrium_rule: bank.rules[0].to_string(),
                equilibrium_value: eq_est,
                violations: deviation_values
                    .iter()
                    .filter(|d| d.wins)
                    .map(|d| d.rule.clone())
                    .collect(),
                deviation_values,
            }
        })
        .collect())
}

/// Single-type audit against an explicit deviation set.
pub fn audit_best_response(
    eq: &Equilibrium,
    x0: f64,
    theta: f64,
    deviations: &[StoppingRule],
    cfg: &McConfig,
    significance: f64,
) -> Result<AuditReport> {
    if deviations.is_empty() {
        return Err(Error::EmptyRuleSet);
    }
    Ok(audit_many(eq, x0, &[theta], |_| deviations.to_vec(), cfg, significance)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Region {
    Stop,
    Continue,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Stop => "STOP",
            Region::Continue => "CONTINUE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCell {
    pub x: f64,
    pub a: f64,
    pub label: Region,
    /// Best rule's estimate of the gain over stopping now, `v - theta e^{-a}`.
    pub v_tilde: Estimate,
    pub best_rule: String,
}

/// Classification grid, `cells[i][j]` at `(x_grid[i], a_grid[j])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionMap {
    pub theta: f64,
    pub x_grid: Vec<f64>,
    pub a_grid: Vec<f64>,
    pub cells: Vec<Vec<RegionCell>>,
}

impl RegionMap {
    /// The label predicted by the rectangular stopping region `{x <= x_bar, a >= a_bar}`.
    pub fn expected(&self, i: usize, j: usize, x_bar: f64, a_bar: f64) -> Region {
        if self.x_grid[i] <= x_bar && self.a_grid[j] >= a_bar {
            Region::Stop
        } else {
            Region::Continue
        }
    }

    /// Cells whose label differs from the rectangle, as `(i, j, boundary_adjacent)`.
    /// A cell is boundary-adjacent when a grid neighbour has the other predicted label.
    pub fn disagreements(&self, x_bar: f64, a_bar: f64) -> Vec<(usize, usize, bool)> {
        let (nx, na) = (self.x_grid.len(), self.a_grid.len());
        let mut out = Vec::new();
        for i in 0..nx {
            for j in 0..na {
                let e = self.expected(i, j, x_bar, a_bar);
                if self.cells[i][j].label == e {
                    continue;
                }
                let adjacent = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|(di, dj)| {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    ni >= 0
                        && nj >= 0
                        && (ni as usize) < nx
                        && (nj as usize) < na
                        && self.expected(ni as usize, nj as usize, x_bar, a_bar) != e
                });
                out.push((i, j, adjacent));
            }
        }
        out
    }
}

/// Estimate the gain from continuing at each `(x, a)` as the best rule in
/// the default family (plus the equilibrium rule) and label the cell
/// CONTINUE when some rule's gain exceeds `significance` standard errors.
pub fn classify_region(
    eq: &Equilibrium,
    theta: f64,
    x_grid: &[f64],
    a_grid: &[f64],
    cfg: &McConfig,
    significance: f64,
) -> Result<RegionMap> {
    let mut rules = vec![equilibrium_rule(eq, theta)];
    rules.extend(default_deviations(eq, theta));
    let bank = [RuleBank { theta, rules }];
    let mut cells = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let mut row = Vec::with_capacity(a_grid.len());
        for &a in a_grid {
            let s = evaluate_rules(eq, x, a, &bank, cfg, false)?;
            let stop_value = theta * (-a).exp();
            let mut best: Option<(Estimate, &StoppingRule)> = None;
            let mut label = Region::Stop;
            for (rule, rs) in bank[0].rules.iter().zip(&s[0]) {
                let est = Estimate::from_samples(&rs.integrated).shifted(-stop_value);
                if est.mean > significance * est.stderr {
                    label = Region::Continue;
                }
                if best.is_none_or(|(b, _)| est.mean > b.mean) {
                    best = Some((est, rule));
                }
            }
            let (v_tilde, rule) = best.expect("rule bank is non-empty");
            row.push(RegionCell {
                x,
                a,
                label,
                v_tilde,
                best_rule: rule.to_string(),
            });
        }
        cells.push(row);
    }
    Ok(RegionMap {
        theta,
        x_grid: x_grid.to_vec(),
        a_grid: a_grid.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn eq() -> &'static Equilibrium {
        static E: OnceLock<Equilibrium> = OnceLock::new();
        E.get_or_init(Equilibrium::example)
    }

    fn cfg(seed: u64, n: usize) -> McConfig {
        McConfig::for_equilibrium(eq(), seed, 1e-3, n).unwrap()
    }

    #[test]
    fn deviation_family_has_24_distinct_rules() {
        let rules = default_deviations(eq(), 1.0);
        assert_eq!(rules.len(), 24);
        let labels: std::collections::BTreeSet<String> = rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(labels.len(), 24);
        assert!(!rules.contains(&equilibrium_rule(eq(), 1.0)));
    }

    #[test]
    fn immediate_pays_exit_value() {
        let c = cfg(1, 200);
        for theta in [0.6, 1.0, 1.4] {
            let i = payoff_integrated(eq(), 2.72, 0.0, &StoppingRule::Immediate, theta, &c).unwrap();
            let s = payoff_sampled(eq(), 2.72, &StoppingRule::Immediate, theta, &c).unwrap();
            assert_eq!((i.mean, i.stderr), (theta, 0.0));
            assert_eq!((s.mean, s.stderr), (theta, 0.0));
        }
        let shifted = payoff_integrated(eq(), 2.72, 0.7, &StoppingRule::Immediate, 1.0, &c).unwrap();
        assert!((shifted.mean - (-0.7f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn never_is_finite_and_bounded() {
        let c = cfg(2, 2000);
        let v = payoff_integrated(eq(), 2.72, 0.0, &StoppingRule::Never, 1.0, &c).unwrap();
        assert!(v.mean.is_finite() && v.mean > 0.0 && v.mean <= eq().prims.resolvents.m_sup());
        let s = payoff_sampled(eq(), 2.72, &StoppingRule::Never, 1.0, &c).unwrap();
        assert!((v.mean - s.mean).abs() < 3.0 * pooled_stderr(&v, &s));
    }

    #[test]
    fn equilibrium_rule_ties_with_itself() {
        let e = eq();
        let rep = audit_best_response(e, 2.72, 1.0, &[equilibrium_rule(e, 1.0)], &cfg(3, 500), 3.0).unwrap();
        let d = &rep.deviation_values[0];
        assert_eq!(d.gain, 0.0);
        assert_eq!(d.paired_stderr, 0.0);
        assert!(rep.passed());
    }

    #[test]
    fn top_type_immediate_ties_inside_action_region() {
        let e = eq();
        let x0 = 0.8 * e.alpha(1.5);
        let rep = audit_best_response(e, x0, 1.5, &[StoppingRule::Immediate], &cfg(4, 300), 3.0).unwrap();
        assert_eq!(rep.deviation_values[0].gain, 0.0);
        assert_eq!(rep.equilibrium_value.mean, 1.5);
    }

    #[test]
    fn empty_deviation_set_rejected() {
        let e = eq();
        assert_eq!(
            audit_best_response(e, 2.72, 1.0, &[], &cfg(5, 10), 3.0).unwrap_err(),
            Error::EmptyRuleSet
        );
    }

    #[test]
    fn short_horizon_rejected() {
        let mut c = cfg(6, 10);
        c.noise = NoiseGrid::covering(6, 1e-3, 3.0).unwrap();
        assert!(matches!(
            payoff_integrated(eq(), 2.72, 0.0, &StoppingRule::Never, 1.0, &c),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn top_type_single_player_rule_bounded_by_monopoly_free_value() {
        let e = eq();
        let table = &e.table;
        let c = cfg(7, 4000);
        let x0 = 2.72;
        let s = payoff_sampled(e, x0, &StoppingRule::SinglePlayer { theta: 1.5 }, 1.5, &c).unwrap();
        let u = crate::single_player::u_value(x0, 1.5, &e.prims, table);
        assert!(s.mean <= u + 3.0 * s.stderr, "{s:?} vs {u}");
    }

    #[test]
    fn delayed_equilibrium_rule_does_not_win() {
        let e = eq();
        let c = cfg(8, 4000);
        for theta in [0.6, 1.0] {
            let base = equilibrium_rule(e, theta);
            let a = payoff_sampled(e, 2.72, &base, theta, &c).unwrap();
            let b = payoff_sampled(e, 2.72, &base.clone().shifted(0.1), theta, &c).unwrap();
            assert!(b.mean - a.mean <= 3.0 * pooled_stderr(&a, &b));
        }
    }

    #[test]
    fn raw_and_shifted_values_agree() {
        let e = eq();
        let c = cfg(9, 300);
        let a = 0.4;
        let raw = payoff_integrated(e, 0.5, a, &StoppingRule::Never, 1.0, &c).unwrap();
        let shifted = raw.shifted(-(-a).exp());
        assert!((shifted.mean + (-a).exp() - raw.mean).abs() < 1e-12);
    }

    #[test]
    fn multi_type_audit_shares_paths() {
        let e = eq();
        let c = cfg(10, 300);
        let many = audit_many(e, 2.72, &[0.6, 1.0], |t| default_deviations(e, t), &c, 3.0).unwrap();
        let single = audit_best_response(e, 2.72, 1.0, &default_deviations(e, 1.0), &c, 3.0).unwrap();
        assert_eq!(many[1], single);
    }

    #[test]
    fn rule_labels() {
        let r = StoppingRule::Rect {
            x_thresh: 0.5,
            a_thresh: 0.25,
        }
        .shifted(0.1);
        assert_eq!(r.to_string(), "shift(rect(x<=0.500000,a>=0.250000),0.1)");
    }

    #[test]
    fn obvious_cells_classified() {
        let e = eq();
        let theta = 1.0;
        let alpha = e.alpha(theta);
        let big_a = e.dist.big_a(theta).unwrap();
        let map = classify_region(
            e,
            theta,
            &[0.5 * alpha, 2.0 * alpha],
            &[1.5 * big_a],
            &cfg(11, 400),
            3.0,
        )
        .unwrap();
        assert_eq!(map.cells[0][0].label, Region::Stop);
        assert_eq!(map.cells[1][0].label, Region::Continue);
        assert!(map.cells[0][0].v_tilde.mean >= -3.0 * map.cells[0][0].v_tilde.stderr);
    }
}
