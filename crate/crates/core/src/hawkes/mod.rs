//! Multivariate Hawkes processes with an exponential impulse response:
//! exact simulation, Gibbs fitting with latent parents, and the influence
//! and efficiency summaries derived from the attributed event counts.

mod gibbs;
mod metrics;

pub use gibbs::{fit_gibbs, fit_many, Diagnostics, EventAttribution, GammaPrior, GibbsConfig, HawkesFit, ParentAttribution, ParentProb, PhashFit};
pub use metrics::{
    ks_two_sample, kolmogorov_sf, per_phash_influence, rank_by_troll_influence, significance_matrix, AttributionCounts,
    InfluenceReport, KsResult, SIGNIFICANCE_LEVEL,
};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TAU_HOURS: f64 = 1.0;
pub const DEFAULT_DELTA_MAX_HOURS: f64 = 24.0;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("unstable model: spectral radius of W is {radius}")]
    Stability { radius: f64 },
    #[error("invalid hawkes config: {0}")]
    Config(String),
    #[error("numerical failure: {message}; model: {model}")]
    Numerical { message: String, model: String },
    #[error("statistics error: {0}")]
    Stat(String),
}

/// Exponential impulse response `exp(-dt/tau)/tau`, truncated to `(0, delta_max)`
/// and renormalised so that it integrates to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpKernel {
    pub tau: f64,
    pub delta_max: f64,
}

impl Default for ExpKernel {
    fn default() -> Self {
        ExpKernel {
            tau: DEFAULT_TAU_HOURS,
            delta_max: DEFAULT_DELTA_MAX_HOURS,
        }
    }
}

impl ExpKernel {
    pub fn new(tau: f64, delta_max: f64) -> Result<Self, HawkesError> {
        if !(tau > 0.0 && tau.is_finite() && delta_max > 0.0) {
            return Err(HawkesError::Config(format!(
                "kernel needs tau > 0 and delta_max > 0 (got {tau}, {delta_max})"
            )));
        }
        Ok(ExpKernel { tau, delta_max })
    }

    fn mass(&self) -> f64 {
        -(-self.delta_max / self.tau).exp_m1()
    }

    pub fn density(&self, dt: f64) -> f64 {
        if dt <= 0.0 || dt >= self.delta_max {
            0.0
        } else {
            (-dt / self.tau).exp() / (self.tau * self.mass())
        }
    }

    /// Kernel mass on `(0, x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= self.delta_max {
            1.0
        } else {
            -(-x / self.tau).exp_m1() / self.mass()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let dt = -self.tau * (-u * self.mass()).ln_1p();
        dt.min(self.delta_max * (1.0 - f64::EPSILON))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    /// Background rate per process (events/hour).
    pub lambda0: Vec<f64>,
    /// `w[s][d]`: expected children on `d` per event on `s`.
    pub w: Vec<Vec<f64>>,
    pub kernel: ExpKernel,
}

pub fn spectral_radius(w: &[Vec<f64>]) -> f64 {
    let k = w.len();
    if k == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(k, k, |i, j| w[i][j]);
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl HawkesModel {
    pub fn new(lambda0: Vec<f64>, w: Vec<Vec<f64>>, kernel: ExpKernel) -> Result<Self, HawkesError> {
        let m = HawkesModel { lambda0, w, kernel };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.lambda0.len()
    }

    pub fn validate(&self) -> Result<(), HawkesError> {
        let k = self.k();
        if self.w.len() != k || self.w.iter().any(|r| r.len() != k) {
            return Err(HawkesError::Config(format!("W must be {k}x{k}")));
        }
        let bad = |x: &f64| !(x.is_finite() && *x >= 0.0);
        if self.lambda0.iter().any(bad) || self.w.iter().flatten().any(bad) {
            return Err(HawkesError::Config("rates and weights must be finite and non-negative".into()));
        }
        ExpKernel::new(self.kernel.tau, self.kernel.delta_max)?;
        let radius = spectral_radius(&self.w);
        if radius >= 1.0 {
            return Err(HawkesError::Stability { radius });
        }
        Ok(())
    }
}

/// Simulated sequences with the generating parent of every event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub times: Vec<Vec<f64>>,
    /// `parents[d][i]` is `(process, index)` of the parent of `times[d][i]`,
    /// `None` for immigrants.
    pub parents: Vec<Vec<Option<(usize, usize)>>>,
}

impl Simulation {
    pub fn event_counts(&self) -> Vec<usize> {
        self.times.iter().map(Vec::len).collect()
    }

    /// True attribution counts: `(c[s][d], b[d])`.
    pub fn true_counts(&self) -> AttributionCounts {
        let k = self.times.len();
        let mut counts = AttributionCounts::zeros(k);
        for (d, ps) in self.parents.iter().enumerate() {
            counts.n[d] = ps.len() as f64;
            for p in ps {
                match p {
                    Some((s, _)) => counts.c[*s][d] += 1.0,
                    None => counts.b[d] += 1.0,
                }
            }
        }
        counts
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    p as usize
}

/// Exact simulation on `[0, horizon)` by the branching construction.
/// Offspring that land at or after the horizon are discarded with their
/// descendants.
pub fn simulate(model: &HawkesModel, horizon: f64, seed: u64) -> Result<Simulation, HawkesError> {
    model.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(HawkesError::Config(format!("horizon must be positive, got {horizon}")));
    }
    let k = model.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (time, process, parent event id)
    let mut events: Vec<(f64, usize, Option<usize>)> = Vec::new();
    for d in 0..k {
        for _ in 0..poisson(model.lambda0[d] * horizon, &mut rng) {
            events.push((rng.random::<f64>() * horizon, d, None));
        }
    }
    let mut next = 0;
    while next < events.len() {
        let (t, s, _) = events[next];
        for d in 0..k {
            for _ in 0..poisson(model.w[s][d], &mut rng) {
                let child = t + model.kernel.sample(&mut rng);
                if child < horizon {
                    events.push((child, d, Some(next)));
                }
            }
        }
        next += 1;
    }

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].0.total_cmp(&events[b].0).then(a.cmp(&b)));
    let mut position = vec![(0, 0); events.len()];
    let mut times = vec![Vec::new(); k];
    for &id in &order {
        let d = events[id].1;
        position[id] = (d, times[d].len());
        times[d].push(events[id].0);
    }
    let mut parents = vec![Vec::new(); k];
    for &id in &order {
        parents[events[id].1].push(events[id].2.map(|p| position[p]));
    }
    Ok(Simulation { times, parents })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(lambda0: Vec<f64>, w: Vec<Vec<f64>>) -> HawkesModel {
        HawkesModel::new(lambda0, w, ExpKernel::default()).unwrap()
    }

    #[test]
    fn kernel_is_normalised() {
        let k = ExpKernel::new(1.0, 3.0).unwrap();
        let steps = 200_000;
        let h = 3.0 / steps as f64;
        let integral: f64 = (0..steps).map(|i| k.density((i as f64 + 0.5) * h) * h).sum();
        assert!((integral - 1.0).abs() < 1e-6);
        assert!((k.cdf(1.5) - (0..steps / 2).map(|i| k.density((i as f64 + 0.5) * h) * h).sum::<f64>()).abs() < 1e-6);
        assert_eq!(k.density(3.0), 0.0);
        assert_eq!(k.density(0.0), 0.0);
    }

    #[test]
    fn kernel_samples_match_cdf() {
        let k = ExpKernel::new(2.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 50_000;
        let below = (0..n).filter(|_| k.sample(&mut rng) < 1.0).count() as f64 / n as f64;
        assert!((below - k.cdf(1.0)).abs() < 0.01);
    }

    #[test]
    fn spectral_radius_check() {
        assert!((spectral_radius(&[vec![0.0, 0.5], vec![0.5, 0.0]]) - 0.5).abs() < 1e-12);
        let err = HawkesModel::new(vec![1.0, 1.0], vec![vec![0.6, 0.6], vec![0.6, 0.6]], ExpKernel::default());
        assert!(matches!(err, Err(HawkesError::Stability { .. })));
        assert!(HawkesModel::new(vec![-1.0], vec![vec![0.0]], ExpKernel::default()).is_err());
        assert!(ExpKernel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_background_gives_no_events() {
        let m = model(vec![0.0, 0.0], vec![vec![0.5, 0.1], vec![0.1, 0.5]]);
        let s = simulate(&m, 1000.0, 1).unwrap();
        assert_eq!(s.event_counts(), vec![0, 0]);
    }

    #[test]
    fn pure_poisson_counts() {
        let m = model(vec![2.0, 0.5], vec![vec![0.0; 2]; 2]);
        let horizon = 100.0;
        for seed in 0..100 {
            let s = simulate(&m, horizon, seed).unwrap();
            for (d, n) in s.event_counts().into_iter().enumerate() {
                let mean = m.lambda0[d] * horizon;
                assert!((n as f64 - mean).abs() <= 4.0 * mean.sqrt(), "seed {seed} process {d}: {n}");
            }
            assert!(s.parents.iter().flatten().all(Option::is_none));
        }
    }

    #[test]
    fn branching_ratio_on_child_process() {
        let m = model(vec![1.0, 0.0], vec![vec![0.0, 0.5], vec![0.0, 0.0]]);
        let (mut n0, mut n1) = (0usize, 0usize);
        for seed in 0..20 {
            let s = simulate(&m, 5000.0, seed).unwrap();
            n0 += s.times[0].len();
            n1 += s.times[1].len();
        }
        let ratio = n1 as f64 / n0 as f64;
        assert!((ratio - 0.5).abs() < 0.025, "ratio {ratio}");
    }

    #[test]
    fn parents_precede_children_within_window() {
        let m = model(vec![0.3, 0.2, 0.1], vec![vec![0.2, 0.1, 0.1], vec![0.1, 0.3, 0.1], vec![0.1, 0.1, 0.2]]);
        let s = simulate(&m, 2000.0, 5).unwrap();
        for d in 0..3 {
            assert!(s.times[d].windows(2).all(|w| w[0] <= w[1]));
            for (i, p) in s.parents[d].iter().enumerate() {
                if let Some((ps, pi)) = p {
                    let lag = s.times[d][i] - s.times[*ps][*pi];
                    assert!(lag > 0.0 && lag < m.kernel.delta_max);
                }
            }
        }
        let c = s.true_counts();
        for d in 0..3 {
            let total = c.b[d] + (0..3).map(|s| c.c[s][d]).sum::<f64>();
            assert_eq!(total, c.n[d]);
        }
        assert_eq!(simulate(&m, 2000.0, 5).unwrap(), s);
    }
}
