//! The one-dimensional state diffusion `dX = mu(X) dt + b(X) dW`.
//!
//! Geometric Brownian motion is sampled with its exact log-normal transition,
//! general coefficients use Euler-Maruyama. Gaussian increments come from a
//! [`NoiseGrid`], a seeded family of per-path streams, so that comparisons
//! that only vary the model or the initial state reuse identical noise.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// A real function shared across threads.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DiffusionKind {
    /// `dX = mu X dt + b X dW` on `(0, inf)`.
    Gbm { mu: f64, vol: f64 },
    /// Arbitrary Lipschitz coefficients on `(domain_lo, domain_hi)`.
    General { drift: ScalarFn, vol: ScalarFn },
}

#[derive(Clone)]
pub struct DiffusionModel {
    pub kind: DiffusionKind,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DiffusionKind::Gbm { mu, vol } => write!(f, "Gbm(mu={mu}, b={vol})"),
            DiffusionKind::General { .. } => write!(f, "GeneralSde(domain=({}, {}))", self.domain_lo, self.domain_hi),
        }
    }
}

impl DiffusionModel {
    pub fn gbm(mu: f64, vol: f64) -> Result<Self> {
        if !(vol > 0.0) || !vol.is_finite() {
            return Err(invalid("vol", format!("volatility must be positive, got {vol}")));
        }
        if !mu.is_finite() {
            return Err(invalid("mu", "drift must be finite"));
        }
        Ok(Self {
            kind: DiffusionKind::Gbm { mu, vol },
            domain_lo: 0.0,
            domain_hi: f64::INFINITY,
        })
    }

    pub fn general(drift: ScalarFn, vol: ScalarFn, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        if !(domain_lo < domain_hi) {
            return Err(invalid("domain", "empty state interval"));
        }
        Ok(Self {
            kind: DiffusionKind::General { drift, vol },
            domain_lo,
            domain_hi,
        })
    }

    pub fn drift(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Gbm { mu, .. } => mu * x,
            DiffusionKind::General { drift, .. } => drift(x),
        }
    }

    pub fn vol(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Gbm { vol, .. } => vol * x,
            DiffusionKind::General { vol, .. } => vol(x),
        }
    }

    /// `(mu, b)` for a geometric Brownian motion.
    pub fn gbm_coefficients(&self) -> Option<(f64, f64)> {
        match self.kind {
            DiffusionKind::Gbm { mu, vol } => Some((mu, vol)),
            DiffusionKind::General { .. } => None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.domain_lo && x < self.domain_hi
    }

    pub fn stepper(&self, dt: f64) -> Stepper<'_> {
        match self.kind {
            DiffusionKind::Gbm { mu, vol } => Stepper::Exact {
                drift: (mu - 0.5 * vol * vol) * dt,
                diffusion: vol * dt.sqrt(),
            },
            DiffusionKind::General { .. } => Stepper::Euler {
                model: self,
                dt,
                sqrt_dt: dt.sqrt(),
            },
        }
    }
}

/// One-step transition of a [`DiffusionModel`] on a fixed step size.
pub enum Stepper<'a> {
    Exact {
        drift: f64,
        diffusion: f64,
    },
    Euler {
        model: &'a DiffusionModel,
        dt: f64,
        sqrt_dt: f64,
    },
}

impl Stepper<'_> {
    /// Advance from `x` with standard normal draw `z`; `step` is only used to
    /// report where an Euler step left the domain.
    #[inline]
    pub fn advance(&self, x: f64, z: f64, step: usize) -> Result<f64> {
        match self {
            Stepper::Exact { drift, diffusion } => Ok(x * (drift + diffusion * z).exp()),
            Stepper::Euler { model, dt, sqrt_dt } => {
                let next = x + model.drift(x) * dt + model.vol(x) * sqrt_dt * z;
                if model.contains(next) {
                    Ok(next)
                } else {
                    Err(Error::DomainExit {
                        step,
                        state: next,
                        lo: model.domain_lo,
                        hi: model.domain_hi,
                    })
                }
            }
        }
    }
}

/// Seeded source of standard normal increments, one independent stream per
/// path index. Rows are generated on demand, so the full paths x steps matrix
/// is never materialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseGrid {
    pub seed: u64,
    pub step: f64,
    pub n_steps: usize,
}

impl NoiseGrid {
    pub fn new(seed: u64, step: f64, n_steps: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(invalid("step", format!("time step must be positive, got {step}")));
        }
        Ok(Self { seed, step, n_steps })
    }

    /// Grid with as many steps as needed to cover `horizon`.
    pub fn covering(seed: u64, step: f64, horizon: f64) -> Result<Self> {
        let n = (horizon / step - 1e-9).ceil().max(0.0) as usize;
        Self::new(seed, step, n)
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.n_steps as f64
    }

    /// Generator of the Gaussian increments of row `path_index`.
    pub fn normals(&self, path_index: u64) -> NormalStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index);
        NormalStream { rng }
    }

    /// The full increment row of `path_index`.
    pub fn increments(&self, path_index: u64) -> Vec<f64> {
        let mut s = self.normals(path_index);
        (0..self.n_steps).map(|_| s.next_normal()).collect()
    }

    /// An auxiliary generator for per-path draws that are not Brownian
    /// increments (opponent types, randomisation devices). Independent of
    /// [`NoiseGrid::normals`] for the same index.
    pub fn aux_rng(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(path_index);
        rng
    }
}

pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// A trajectory of X on a uniform grid starting at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Grid spacing; zero for a single-point path.
    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// Simulate row `path_index` of `noise` from `x0` over `horizon`.
pub fn simulate_path(
    model: &DiffusionModel,
    x0: f64,
    horizon: f64,
    noise: &NoiseGrid,
    path_index: u64,
) -> Result<SamplePath> {
    if !model.contains(x0) {
        return Err(Error::OutsideDomain {
            x0,
            lo: model.domain_lo,
            hi: model.domain_hi,
        });
    }
    if (horizon - noise.horizon()).abs() > 1e-9 * horizon.abs().max(1.0) {
        return Err(Error::HorizonMismatch {
            horizon,
            step: noise.step,
            n_steps: noise.n_steps,
        });
    }
    let stepper = model.stepper(noise.step);
    let mut normals = noise.normals(path_index);
    let mut times = Vec::with_capacity(noise.n_steps + 1);
    let mut states = Vec::with_capacity(noise.n_steps + 1);
    let mut x = x0;
    times.push(0.0);
    states.push(x);
    for i in 0..noise.n_steps {
        x = stepper.advance(x, normals.next_normal(), i)?;
        times.push((i + 1) as f64 * noise.step);
        states.push(x);
    }
    Ok(SamplePath { times, states })
}

/// Roots of `b^2 g (g - 1) / 2 + mu g - r = 0`, returned as `(gamma_plus, gamma_minus)`.
pub fn gbm_exponents(mu: f64, vol: f64, r: f64) -> Result<(f64, f64)> {
    if !(vol > 0.0) {
        return Err(invalid("vol", "volatility must be positive"));
    }
    if !(r > 0.0) {
        return Err(invalid("r", "discount rate must be positive"));
    }
    let b2 = vol * vol;
    let k = 0.5 - mu / b2;
    let root = (k * k + 2.0 * r / b2).sqrt();
    Ok((k + root, k - root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_gbm() -> DiffusionModel {
        DiffusionModel::gbm(-0.5, 1.0).unwrap()
    }

    #[test]
    fn zero_noise_gives_deterministic_exponential() {
        // mu - b^2/2 = -1, so X_t = 2.72 e^{-t}.
        let model = example_gbm();
        let stepper = model.stepper(1e-3);
        let mut x = 2.72;
        for i in 0..1000 {
            x = stepper.advance(x, 0.0, i).unwrap();
        }
        assert!((x - 2.72 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn example_exponents() {
        let (gp, gm) = gbm_exponents(-0.5, 1.0, 1.0).unwrap();
        assert!((gm + 0.732).abs() < 1e-3);
        assert!((gp - 2.732).abs() < 1e-3);
    }

    #[test]
    fn exponents_satisfy_vieta_and_residual() {
        for &(mu, b, r) in &[(-0.5, 1.0, 1.0), (0.1, 0.3, 0.05), (-2.0, 2.5, 0.7)] {
            let (gp, gm) = gbm_exponents(mu, b, r).unwrap();
            assert!((gp * gm + 2.0 * r / (b * b)).abs() < 1e-12);
            assert!((gp + gm - (1.0 - 2.0 * mu / (b * b))).abs() < 1e-12);
            for g in [gp, gm] {
                let res = 0.5 * b * b * g * (g - 1.0) + mu * g - r;
                assert!(res.abs() < 1e-12, "residual {res}");
            }
        }
    }

    #[test]
    fn negative_drift_orders_exponents() {
        let (gp, gm) = gbm_exponents(-0.2, 0.4, 0.1).unwrap();
        assert!(gp > 1.0 && gm < 0.0);
    }

    #[test]
    fn rejects_bad_start_and_bad_horizon() {
        let model = example_gbm();
        let noise = NoiseGrid::new(1, 0.01, 10).unwrap();
        assert!(matches!(
            simulate_path(&model, -1.0, 0.1, &noise, 0),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            simulate_path(&model, 1.0, 0.2, &noise, 0),
            Err(Error::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn euler_exit_is_reported_with_step() {
        let drift: ScalarFn = Arc::new(|_| -50.0);
        let vol: ScalarFn = Arc::new(|_| 0.1);
        let model = DiffusionModel::general(drift, vol, 0.0, 10.0).unwrap();
        let noise = NoiseGrid::new(3, 0.01, 100).unwrap();
        match simulate_path(&model, 1.0, 1.0, &noise, 0) {
            Err(Error::DomainExit { step, .. }) => assert!(step < 100),
            other => panic!("expected domain exit, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_path_bitwise() {
        let model = example_gbm();
        let noise = NoiseGrid::new(42, 1e-3, 500).unwrap();
        let a = simulate_path(&model, 2.72, 0.5, &noise, 7).unwrap();
        let b = simulate_path(&model, 2.72, 0.5, &noise, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&model, 2.72, 0.5, &noise, 8).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn gbm_paths_stay_positive() {
        let model = example_gbm();
        let noise = NoiseGrid::new(11, 1e-3, 2000).unwrap();
        for p in 0..20 {
            let path = simulate_path(&model, 2.72, 2.0, &noise, p).unwrap();
            assert!(path.states.iter().all(|&x| x > 0.0));
            assert_eq!(path.times.len(), path.states.len());
            assert!(path.times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn first_moment_within_three_stderr() {
        // E[X_1] = 2.72 e^{mu} with mu = -0.5.
        let model = example_gbm();
        let noise = NoiseGrid::new(5, 0.1, 10).unwrap();
        let n = 100_000;
        let finals: Vec<f64> = (0..n)
            .map(|p| {
                *simulate_path(&model, 2.72, 1.0, &noise, p)
                    .unwrap()
                    .states
                    .last()
                    .unwrap()
            })
            .collect();
        let est = crate::stats::Estimate::from_samples(&finals);
        let exact = 2.72 * (-0.5f64).exp();
        assert!((est.mean - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
    }

    #[test]
    fn second_moment_within_three_stderr() {
        // E[X_T^2] = x^2 exp((2 mu + b^2) T).
        let model = DiffusionModel::gbm(-0.3, 0.4).unwrap();
        let noise = NoiseGrid::new(9, 0.05, 20).unwrap();
        let sq: Vec<f64> = (0..50_000)
            .map(|p| simulate_path(&model, 1.5, 1.0, &noise, p).unwrap().states[20].powi(2))
            .collect();
        let est = crate::stats::Estimate::from_samples(&sq);
        let exact = 2.25 * ((2.0 * -0.3 + 0.16) * 1.0f64).exp();
        assert!((est.mean - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
    }
}
