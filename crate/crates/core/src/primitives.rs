//! The model bundle shared by every solver: dynamics, profit flows, their
//! resolvents and the decreasing fundamental solution `phi`.

use std::fmt;

use crate::diffusion::{DiffusionModel, ScalarFn};
use crate::error::Result;
use crate::payoffs::{CappedPowerResolvent, ProfitSpec, ResolventPair};

/// The decreasing solution of `(L_X - r) f = 0`.
#[derive(Clone)]
pub enum DecreasingSolution {
    /// `x^gamma` with `gamma < 0`, the GBM case.
    Power(f64),
    Custom(ScalarFn),
}

impl DecreasingSolution {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DecreasingSolution::Power(g) => x.powf(*g),
            DecreasingSolution::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for DecreasingSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecreasingSolution::Power(g) => write!(f, "Power({g})"),
            DecreasingSolution::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Primitives {
    pub model: DiffusionModel,
    pub profit: ProfitSpec,
    pub resolvents: ResolventPair,
    pub phi: DecreasingSolution,
}

impl Primitives {
    /// GBM dynamics with the capped power profit family and closed-form resolvents.
    pub fn capped_power_gbm(mu: f64, vol: f64, r: f64, beta: f64, x_cap: f64, m0: f64) -> Result<Self> {
        let model = DiffusionModel::gbm(mu, vol)?;
        let profit = ProfitSpec::capped_power(beta, x_cap, m0, r)?;
        let closed = CappedPowerResolvent::new(&model, &profit)?;
        Ok(Self {
            phi: DecreasingSolution::Power(closed.gamma_minus),
            resolvents: ResolventPair::ClosedForm(closed),
            model,
            profit,
        })
    }

    /// The worked example: `mu = -0.5, b = 1, r = 1, beta = 0.5, x_M = 1000, M0 = 2`.
    pub fn example() -> Self {
        Self::capped_power_gbm(-0.5, 1.0, 1.0, 0.5, 1000.0, 2.0).expect("example parameters are valid")
    }

    /// Bring-your-own model; `phi` must be the decreasing fundamental solution.
    pub fn custom(
        model: DiffusionModel,
        profit: ProfitSpec,
        resolvents: ResolventPair,
        phi: DecreasingSolution,
    ) -> Self {
        Self {
            model,
            profit,
            resolvents,
            phi,
        }
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.profit.r
    }

    #[inline]
    pub fn flow_d(&self, x: f64) -> f64 {
        self.profit.duopoly(x)
    }

    #[inline]
    pub fn d(&self, x: f64) -> f64 {
        self.resolvents.d(x)
    }

    #[inline]
    pub fn m(&self, x: f64) -> f64 {
        self.resolvents.m(x)
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        self.phi.eval(x)
    }

    /// Upper bound on the discounted value of any play from any state:
    /// `sup D / r + sup m`, used for horizon truncation.
    pub fn payoff_bound(&self) -> f64 {
        self.profit.sup_duopoly() / self.r() + self.resolvents.m_sup()
    }
}
