//! Profit flows, their discounted resolvents, and the standing assumptions.
//!
//! The example family is the capped power flow `D(x) = min(x, x_M)^beta`,
//! `M = D + M0`, driven by a geometric Brownian motion. Its resolvent
//! `d(x) = E_x int_0^inf e^{-rs} D(X_s) ds` is available in closed form; any
//! other flow can be handled through [`resolvent_mc`].

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{gbm_exponents, DiffusionModel, NoiseGrid, ScalarFn};
use crate::equilibrium::TypeDistribution;
use crate::error::{invalid, Error, Result};
use crate::stats::Estimate;

#[derive(Clone)]
pub enum ProfitFamily {
    /// `D(x) = x^beta` below `x_cap`, `x_cap^beta` above; `M = D + m0`.
    CappedPower { beta: f64, x_cap: f64, m0: f64 },
    Custom {
        duopoly: ScalarFn,
        monopoly: ScalarFn,
        sup_duopoly: f64,
        sup_monopoly: f64,
    },
}

#[derive(Clone)]
pub struct ProfitSpec {
    pub family: ProfitFamily,
    /// Discount rate per unit time.
    pub r: f64,
}

impl fmt::Debug for ProfitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            ProfitFamily::CappedPower { beta, x_cap, m0 } => {
                write!(f, "CappedPower(beta={beta}, x_cap={x_cap}, m0={m0}, r={})", self.r)
            }
            ProfitFamily::Custom { .. } => write!(f, "CustomProfit(r={})", self.r),
        }
    }
}

impl ProfitSpec {
    pub fn capped_power(beta: f64, x_cap: f64, m0: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("r", "discount rate must be positive"));
        }
        if !(x_cap > 0.0) {
            return Err(invalid("x_cap", "cap must be positive"));
        }
        if !(m0 > 0.0) {
            return Err(invalid("m0", "monopoly premium must be positive so that M > D"));
        }
        Ok(Self {
            family: ProfitFamily::CappedPower { beta, x_cap, m0 },
            r,
        })
    }

    #[inline]
    pub fn duopoly(&self, x: f64) -> f64 {
        match &self.family {
            ProfitFamily::CappedPower { beta, x_cap, .. } => example_flow_d(x, *beta, *x_cap),
            ProfitFamily::Custom { duopoly, .. } => duopoly(x),
        }
    }

    #[inline]
    pub fn monopoly(&self, x: f64) -> f64 {
        match &self.family {
            ProfitFamily::CappedPower { beta, x_cap, m0 } => example_flow_d(x, *beta, *x_cap) + m0,
            ProfitFamily::Custom { monopoly, .. } => monopoly(x),
        }
    }

    pub fn sup_duopoly(&self) -> f64 {
        match &self.family {
            ProfitFamily::CappedPower { beta, x_cap, .. } => x_cap.powf(*beta),
            ProfitFamily::Custom { sup_duopoly, .. } => *sup_duopoly,
        }
    }

    pub fn sup_monopoly(&self) -> f64 {
        match &self.family {
            ProfitFamily::CappedPower { beta, x_cap, m0 } => x_cap.powf(*beta) + m0,
            ProfitFamily::Custom { sup_monopoly, .. } => *sup_monopoly,
        }
    }
}

/// Capped power flow `min(x, x_cap)^beta`.
#[inline]
pub fn example_flow_d(x: f64, beta: f64, x_cap: f64) -> f64 {
    if x <= x_cap {
        x.powf(beta)
    } else {
        x_cap.powf(beta)
    }
}

/// Closed-form resolvents of the capped power family under GBM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CappedPowerResolvent {
    pub beta: f64,
    pub x_cap: f64,
    pub m0: f64,
    pub r: f64,
    /// `beta mu + b^2 beta (beta - 1) / 2`, the growth rate of `E[X_t^beta]`.
    pub delta: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CappedPowerResolvent {
    pub fn new(model: &DiffusionModel, spec: &ProfitSpec) -> Result<Self> {
        let (mu, vol) = model
            .gbm_coefficients()
            .ok_or_else(|| Error::RegimeViolated("closed form requires GBM dynamics".into()))?;
        let ProfitFamily::CappedPower { beta, x_cap, m0 } = spec.family else {
            return Err(Error::RegimeViolated(
                "closed form requires the capped power profit family".into(),
            ));
        };
        let r = spec.r;
        let (gp, gm) = gbm_exponents(mu, vol, r)?;
        let delta = beta * mu + vol * vol * beta * (beta - 1.0) / 2.0;
        let checks = [
            (beta > 0.0 && beta < 1.0, format!("beta = {beta} not in (0, 1)")),
            (r > delta, format!("r = {r} <= delta = {delta}")),
            (beta - 1.0 > gm, format!("beta - 1 = {} <= gamma_- = {gm}", beta - 1.0)),
            (gm > -1.0, format!("gamma_- = {gm} <= -1")),
            (
                beta * vol * vol * gm.abs() < 2.0 * r,
                format!("beta b^2 |gamma_-| = {} >= 2r", beta * vol * vol * gm.abs()),
            ),
        ];
        if let Some((_, why)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::RegimeViolated(why.clone()));
        }
        let (c1, c2) = pasting_coefficients(beta, x_cap, r, delta, gp, gm);
        Ok(Self {
            beta,
            x_cap,
            m0,
            r,
            delta,
            gamma_plus: gp,
            gamma_minus: gm,
            c1,
            c2,
        })
    }

    #[inline]
    pub fn d(&self, x: f64) -> f64 {
        if x <= self.x_cap {
            x.powf(self.beta) / (self.r - self.delta) + self.c1 * x.powf(self.gamma_plus)
        } else {
            self.x_cap.powf(self.beta) / self.r + self.c2 * x.powf(self.gamma_minus)
        }
    }

    pub fn d_prime(&self, x: f64) -> f64 {
        if x <= self.x_cap {
            self.beta * x.powf(self.beta - 1.0) / (self.r - self.delta)
                + self.c1 * self.gamma_plus * x.powf(self.gamma_plus - 1.0)
        } else {
            self.c2 * self.gamma_minus * x.powf(self.gamma_minus - 1.0)
        }
    }

    /// Derivative of `d` from the right at `x` (the upper branch evaluated at `x`).
    pub fn d_upper_branch(&self, x: f64) -> (f64, f64) {
        (
            self.x_cap.powf(self.beta) / self.r + self.c2 * x.powf(self.gamma_minus),
            self.c2 * self.gamma_minus * x.powf(self.gamma_minus - 1.0),
        )
    }

    #[inline]
    pub fn m(&self, x: f64) -> f64 {
        self.d(x) + self.m0 / self.r
    }
}

/// `c1, c2` from continuity and smooth fit of `d` at the cap.
fn pasting_coefficients(beta: f64, xm: f64, r: f64, delta: f64, gp: f64, gm: f64) -> (f64, f64) {
    let phi = xm.powf(gm);
    let dphi = gm * xm.powf(gm - 1.0);
    let psi = xm.powf(gp);
    let dpsi = gp * xm.powf(gp - 1.0);
    let xi = phi * dpsi - psi * dphi;
    let jump = xm.powf(beta) * (1.0 / r - 1.0 / (r - delta));
    let slope = beta * xm.powf(beta - 1.0) / (r - delta);
    let c1 = (-dphi * jump - phi * slope) / xi;
    let c2 = (-dpsi * jump - psi * slope) / xi;
    (c1, c2)
}

/// Simplified form of `c1` obtained by substituting the power fundamental
/// solutions: `(gamma_- delta - beta r) / ((gamma_+ - gamma_-) r (r - delta)) x_M^{beta - gamma_+}`.
pub fn c1_simplified(beta: f64, x_cap: f64, r: f64, delta: f64, gp: f64, gm: f64) -> f64 {
    (gm * delta - beta * r) / ((gp - gm) * r * (r - delta)) * x_cap.powf(beta - gp)
}

/// Convenience wrapper evaluating the closed-form duopoly resolvent.
pub fn resolvent_closed_form_d(x: f64, model: &DiffusionModel, spec: &ProfitSpec) -> Result<f64> {
    Ok(CappedPowerResolvent::new(model, spec)?.d(x))
}

/// The pair `(d, m)` with the floor `m_min` used by the equilibrium bounds.
#[derive(Clone)]
pub enum ResolventPair {
    ClosedForm(CappedPowerResolvent),
    Custom {
        d: ScalarFn,
        m: ScalarFn,
        m_min: f64,
        m_sup: f64,
    },
}

impl fmt::Debug for ResolventPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResolventPair::ClosedForm(c) => write!(f, "ClosedForm({c:?})"),
            ResolventPair::Custom { m_min, .. } => write!(f, "Custom(m_min={m_min})"),
        }
    }
}

impl ResolventPair {
    #[inline]
    pub fn d(&self, x: f64) -> f64 {
        match self {
            ResolventPair::ClosedForm(c) => c.d(x),
            ResolventPair::Custom { d, .. } => d(x),
        }
    }

    #[inline]
    pub fn m(&self, x: f64) -> f64 {
        match self {
            ResolventPair::ClosedForm(c) => c.m(x),
            ResolventPair::Custom { m, .. } => m(x),
        }
    }

    /// Lower bound on `m`. For the example family `d >= 0`, so `M0 / r` is used.
    pub fn m_min(&self) -> f64 {
        match self {
            ResolventPair::ClosedForm(c) => c.m0 / c.r,
            ResolventPair::Custom { m_min, .. } => *m_min,
        }
    }

    /// Upper bound on `m`.
    pub fn m_sup(&self) -> f64 {
        match self {
            ResolventPair::ClosedForm(c) => (c.x_cap.powf(c.beta) + c.m0) / c.r,
            ResolventPair::Custom { m_sup, .. } => *m_sup,
        }
    }
}

/// Default truncation tolerance for [`resolvent_mc`]: `1e-4 sup|flow| / r`.
pub fn default_tail_tolerance(flow_sup: f64, r: f64) -> f64 {
    1e-4 * flow_sup / r
}

/// Monte-Carlo resolvent `E_x int_0^T e^{-rt} flow(X_t) dt` on the noise grid,
/// trapezoidal in time. The horizon `T = noise.horizon()` must satisfy
/// `flow_sup e^{-rT} / r <= tail_tol`.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_mc<F>(
    model: &DiffusionModel,
    flow: F,
    flow_sup: f64,
    r: f64,
    x: f64,
    noise: &NoiseGrid,
    n_paths: usize,
    tail_tol: f64,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    Ok(resolvent_mc_many(model, flow, flow_sup, r, &[x], noise, n_paths, tail_tol)?[0])
}

/// [`resolvent_mc`] for several starting points sharing the same increments.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_mc_many<F>(
    model: &DiffusionModel,
    flow: F,
    flow_sup: f64,
    r: f64,
    xs: &[f64],
    noise: &NoiseGrid,
    n_paths: usize,
    tail_tol: f64,
) -> Result<Vec<Estimate>>
where
    F: Fn(f64) -> f64 + Sync,
{
    let horizon = noise.horizon();
    let bound = flow_sup.abs() * (-r * horizon).exp() / r;
    if bound > tail_tol {
        return Err(Error::HorizonTooShort {
            horizon,
            bound,
            tolerance: tail_tol,
        });
    }
    for &x in xs {
        if !model.contains(x) {
            return Err(Error::OutsideDomain {
                x0: x,
                lo: model.domain_lo,
                hi: model.domain_hi,
            });
        }
    }
    let dt = noise.step;
    let half_weights: Vec<f64> = (0..=noise.n_steps)
        .map(|i| {
            let w = (-r * i as f64 * dt).exp() * dt;
            if i == 0 || i == noise.n_steps {
                0.5 * w
            } else {
                w
            }
        })
        .collect();
    let stepper = model.stepper(dt);
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut normals = noise.normals(p);
            let mut states = xs.to_vec();
            let mut acc: Vec<f64> = states.iter().map(|&s| half_weights[0] * flow(s)).collect();
            for (i, w) in half_weights.iter().enumerate().skip(1) {
                let z = normals.next_normal();
                for (s, a) in states.iter_mut().zip(acc.iter_mut()) {
                    *s = stepper.advance(*s, z, i - 1)?;
                    *a += w * flow(*s);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok((0..xs.len())
        .map(|k| {
            let samples: Vec<f64> = per_path.iter().map(|v| v[k]).collect();
            Estimate::from_samples(&samples)
        })
        .collect())
}

/// One checked inequality `lhs > rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct AssumptionReport {
    pub clauses: Vec<Clause>,
}

impl AssumptionReport {
    fn require(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.clauses.push(Clause {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs > rhs,
        });
    }

    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.holds)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

/// Check the standing assumptions; every clause is reported with its numbers.
pub fn validate_assumptions(
    model: &DiffusionModel,
    spec: &ProfitSpec,
    resolvents: &ResolventPair,
    dist: &TypeDistribution,
) -> AssumptionReport {
    let mut rep = AssumptionReport::default();
    let r = spec.r;
    let theta_hi = dist.theta_hi();
    rep.require("r > 0", r, 0.0);
    rep.require("theta_U > theta_L", theta_hi, dist.theta_lo());
    if let Some((mu, vol)) = model.gbm_coefficients() {
        rep.require("b > 0", vol, 0.0);
        if let ProfitFamily::CappedPower { beta, x_cap, m0 } = spec.family {
            rep.require("beta > 0", beta, 0.0);
            rep.require("1 > beta", 1.0, beta);
            rep.require("M0 > r theta_U", m0, r * theta_hi);
            rep.require("x_M^beta > r theta_U", x_cap.powf(beta), r * theta_hi);
            let delta = beta * mu + vol * vol * beta * (beta - 1.0) / 2.0;
            match gbm_exponents(mu, vol, r) {
                Ok((_, gm)) => {
                    rep.require("beta - 1 > gamma_-", beta - 1.0, gm);
                    rep.require("gamma_- > -1", gm, -1.0);
                    rep.require("2r > beta b^2 |gamma_-|", 2.0 * r, beta * vol * vol * gm.abs());
                }
                Err(_) => rep.require("gamma_- defined", f64::NAN, 0.0),
            }
            rep.require("r > delta", r, delta);
        }
    }
    rep.require("m_min > theta_U", resolvents.m_min(), theta_hi);
    rep
}
