//! Gibbs sampler over latent parents with conjugate Gamma updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{AttributionCounts, ExpKernel, HawkesError};
use crate::phash::PHash64;

/// Gamma prior in shape/rate form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub kernel: ExpKernel,
    pub lambda0_prior: GammaPrior,
    pub w_prior: GammaPrior,
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    /// Keep per-event parent probabilities and sampled frequencies.
    pub record_attribution: bool,
    /// Keep every post-burn-in draw of `lambda0` and `W`.
    pub keep_samples: bool,
    /// Log-likelihood is stored every `trace_every` sweeps.
    pub trace_every: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            kernel: ExpKernel::default(),
            lambda0_prior: GammaPrior { shape: 1.0, rate: 1.0 },
            w_prior: GammaPrior { shape: 1.0, rate: 5.0 },
            burn_in: 500,
            samples: 1500,
            seed: 0,
            record_attribution: false,
            keep_samples: false,
            trace_every: 10,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<(), HawkesError> {
        ExpKernel::new(self.kernel.tau, self.kernel.delta_max)?;
        for (name, p) in [("lambda0", self.lambda0_prior), ("W", self.w_prior)] {
            if !(p.shape > 0.0 && p.rate > 0.0 && p.shape.is_finite() && p.rate.is_finite()) {
                return Err(HawkesError::Config(format!("{name} prior needs positive shape and rate")));
            }
        }
        if self.samples == 0 {
            return Err(HawkesError::Config("need at least one kept sweep".into()));
        }
        if self.trace_every == 0 {
            return Err(HawkesError::Config("trace_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentProb {
    pub process: usize,
    pub index: usize,
    /// Posterior probability averaged over kept sweeps.
    pub prob: f64,
    /// Fraction of kept sweeps in which this parent was drawn.
    pub sampled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventAttribution {
    pub process: usize,
    pub index: usize,
    pub time: f64,
    pub background: f64,
    pub sampled_background: f64,
    pub parents: Vec<ParentProb>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentAttribution {
    /// Events in time order.
    pub events: Vec<EventAttribution>,
}

impl ParentAttribution {
    pub fn get(&self, process: usize, index: usize) -> Option<&EventAttribution> {
        self.events.iter().find(|e| e.process == process && e.index == index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    pub trace_every: usize,
    pub log_likelihood: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesFit {
    pub counts: AttributionCounts,
    pub lambda0_mean: Vec<f64>,
    pub w_mean: Vec<Vec<f64>>,
    pub lambda0_samples: Vec<Vec<f64>>,
    pub w_samples: Vec<Vec<Vec<f64>>>,
    pub attribution: Option<ParentAttribution>,
    pub diagnostics: Diagnostics,
}

struct Prepared {
    process: Vec<usize>,
    index: Vec<usize>,
    time: Vec<f64>,
    /// candidates of event `i` are `cand[start[i]..start[i+1]]`
    start: Vec<usize>,
    cand: Vec<usize>,
    g: Vec<f64>,
    /// per source process: Σ_j F(min(T - t_j, Δmax))
    exposure: Vec<f64>,
}

fn prepare(times: &[Vec<f64>], horizon: f64, kernel: &ExpKernel) -> Result<Prepared, HawkesError> {
    let k = times.len();
    let mut flat: Vec<(f64, usize, usize)> = Vec::new();
    for (d, ts) in times.iter().enumerate() {
        for (i, &t) in ts.iter().enumerate() {
            if !(t >= 0.0 && t < horizon) {
                return Err(HawkesError::Config(format!("event time {t} outside [0, {horizon})")));
            }
            flat.push((t, d, i));
        }
    }
    flat.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n = flat.len();
    let mut p = Prepared {
        process: flat.iter().map(|e| e.1).collect(),
        index: flat.iter().map(|e| e.2).collect(),
        time: flat.iter().map(|e| e.0).collect(),
        start: Vec::with_capacity(n + 1),
        cand: Vec::new(),
        g: Vec::new(),
        exposure: vec![0.0; k],
    };
    let mut lo = 0;
    for i in 0..n {
        let t = p.time[i];
        while t - p.time[lo] >= kernel.delta_max {
            lo += 1;
        }
        p.start.push(p.cand.len());
        for j in lo..i {
            if p.time[j] < t {
                p.cand.push(j);
                p.g.push(kernel.density(t - p.time[j]));
            }
        }
        p.exposure[p.process[i]] += kernel.cdf(horizon - t);
    }
    p.start.push(p.cand.len());
    Ok(p)
}

fn dump(lambda0: &[f64], w: &[f64], k: usize) -> String {
    let rows: Vec<&[f64]> = w.chunks(k).collect();
    format!("lambda0={lambda0:?} W={rows:?}")
}

fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters").sample(rng)
}

/// Fit one multivariate model to event times (hours in `[0, horizon)`) by
/// alternating parent draws and conjugate rate updates. `C` and `B` are
/// averages over kept sweeps of the conditional parent probabilities.
pub fn fit_gibbs(times: &[Vec<f64>], horizon: f64, config: &GibbsConfig) -> Result<HawkesFit, HawkesError> {
    config.validate()?;
    let k = times.len();
    if k == 0 || times.iter().all(Vec::is_empty) {
        return Err(HawkesError::Config("need at least one event".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(HawkesError::Config(format!("horizon must be positive, got {horizon}")));
    }
    let p = prepare(times, horizon, &config.kernel)?;
    let n = p.time.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (a0, b0) = (config.lambda0_prior.shape, config.lambda0_prior.rate);
    let (aw, bw) = (config.w_prior.shape, config.w_prior.rate);

    let mut lambda0: Vec<f64> = times.iter().map(|ts| (a0 + ts.len() as f64) / (b0 + horizon)).collect();
    let mut w = vec![aw / bw; k * k];

    let mut acc_b = vec![0.0; k];
    let mut acc_c = vec![0.0; k * k];
    let mut acc_lambda0 = vec![0.0; k];
    let mut acc_w = vec![0.0; k * k];
    let record = config.record_attribution;
    // per event: [background, candidates...] accumulators
    let mut acc_prob: Vec<f64> = if record { vec![0.0; n + p.cand.len()] } else { Vec::new() };
    let mut acc_hits: Vec<u32> = if record { vec![0; n + p.cand.len()] } else { Vec::new() };
    let mut lambda0_samples = Vec::new();
    let mut w_samples = Vec::new();
    let mut trace = Vec::new();

    let max_cands = (0..n).map(|i| p.start[i + 1] - p.start[i]).max().unwrap_or(0);
    let mut weights = vec![0.0; max_cands + 1];
    let mut n_bg = vec![0usize; k];
    let mut n_sd = vec![0usize; k * k];
    let sweeps = config.burn_in + config.samples;

    for sweep in 0..sweeps {
        let keep = sweep >= config.burn_in;
        n_bg.iter_mut().for_each(|x| *x = 0);
        n_sd.iter_mut().for_each(|x| *x = 0);
        let mut ll = 0.0;

        for i in 0..n {
            let d = p.process[i];
            let (lo, hi) = (p.start[i], p.start[i + 1]);
            let m = hi - lo;
            weights[0] = lambda0[d];
            let mut total = weights[0];
            for c in 0..m {
                let wt = w[p.process[p.cand[lo + c]] * k + d] * p.g[lo + c];
                weights[c + 1] = wt;
                total += wt;
            }
            if !(total.is_finite() && total > 0.0) {
                return Err(HawkesError::Numerical {
                    message: format!("intensity {total} at event {i} (t={})", p.time[i]),
                    model: dump(&lambda0, &w, k),
                });
            }
            ll += total.ln();
            let mut u = rng.random::<f64>() * total;
            let mut choice = m;
            for (c, wt) in weights[..=m].iter().enumerate() {
                if u < *wt {
                    choice = c;
                    break;
                }
                u -= wt;
            }
            // guard against rounding leaving u past the last bucket
            if choice == m && weights[m] == 0.0 {
                choice = (0..=m).rev().find(|&c| weights[c] > 0.0).unwrap_or(0);
            }
            if choice == 0 {
                n_bg[d] += 1;
            } else {
                n_sd[p.process[p.cand[lo + choice - 1]] * k + d] += 1;
            }
            if keep {
                acc_b[d] += weights[0] / total;
                for c in 0..m {
                    acc_c[p.process[p.cand[lo + c]] * k + d] += weights[c + 1] / total;
                }
                if record {
                    let base = i + lo;
                    for c in 0..=m {
                        acc_prob[base + c] += weights[c] / total;
                    }
                    acc_hits[base + choice] += 1;
                }
            }
        }

        let mut compensator = lambda0.iter().sum::<f64>() * horizon;
        for s in 0..k {
            compensator += p.exposure[s] * w[s * k..(s + 1) * k].iter().sum::<f64>();
        }
        ll -= compensator;
        if !ll.is_finite() {
            return Err(HawkesError::Numerical {
                message: format!("log-likelihood {ll} at sweep {sweep}"),
                model: dump(&lambda0, &w, k),
            });
        }
        if sweep % config.trace_every == 0 {
            trace.push(ll);
        }

        for d in 0..k {
            lambda0[d] = gamma(a0 + n_bg[d] as f64, b0 + horizon, &mut rng);
        }
        for s in 0..k {
            for d in 0..k {
                w[s * k + d] = gamma(aw + n_sd[s * k + d] as f64, bw + p.exposure[s], &mut rng);
            }
        }
        if keep {
            for (a, x) in acc_lambda0.iter_mut().zip(&lambda0) {
                *a += x;
            }
            for (a, x) in acc_w.iter_mut().zip(&w) {
                *a += x;
            }
            if config.keep_samples {
                lambda0_samples.push(lambda0.clone());
                w_samples.push(w.chunks(k).map(<[f64]>::to_vec).collect());
            }
        }
    }

    let kept = config.samples as f64;
    let mut counts = AttributionCounts::zeros(k);
    for d in 0..k {
        counts.n[d] = times[d].len() as f64;
        counts.b[d] = acc_b[d] / kept;
        for s in 0..k {
            counts.c[s][d] = acc_c[s * k + d] / kept;
        }
    }
    let attribution = record.then(|| ParentAttribution {
        events: (0..n)
            .map(|i| {
                let (lo, hi) = (p.start[i], p.start[i + 1]);
                let base = i + lo;
                EventAttribution {
                    process: p.process[i],
                    index: p.index[i],
                    time: p.time[i],
                    background: acc_prob[base] / kept,
                    sampled_background: acc_hits[base] as f64 / kept,
                    parents: (0..hi - lo)
                        .map(|c| {
                            let j = p.cand[lo + c];
                            ParentProb {
                                process: p.process[j],
                                index: p.index[j],
                                prob: acc_prob[base + c + 1] / kept,
                                sampled: acc_hits[base + c + 1] as f64 / kept,
                            }
                        })
                        .collect(),
                }
            })
            .collect(),
    });

    Ok(HawkesFit {
        counts,
        lambda0_mean: acc_lambda0.iter().map(|x| x / kept).collect(),
        w_mean: acc_w.chunks(k).map(|r| r.iter().map(|x| x / kept).collect()).collect(),
        lambda0_samples,
        w_samples,
        attribution,
        diagnostics: Diagnostics {
            burn_in: config.burn_in,
            samples: config.samples,
            seed: config.seed,
            trace_every: config.trace_every,
            log_likelihood: trace,
        },
    })
}

/// One per-pHash fit record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhashFit {
    pub phash: PHash64,
    pub n: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl PhashFit {
    pub fn counts(&self) -> AttributionCounts {
        AttributionCounts {
            n: self.n.clone(),
            c: self.c.clone(),
            b: self.b.clone(),
        }
    }
}

/// Fit every series independently on a pool of `workers` threads; the seed
/// of each fit is `config.seed ^ phash`. Output order follows the input.
pub fn fit_many(
    series: &[(PHash64, Vec<Vec<f64>>)],
    horizon: f64,
    config: &GibbsConfig,
    workers: usize,
) -> Result<Vec<PhashFit>, HawkesError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HawkesError::Config(e.to_string()))?;
    pool.install(|| {
        series
            .par_iter()
            .map(|(h, times)| {
                let cfg = GibbsConfig {
                    seed: config.seed ^ h.0,
                    ..config.clone()
                };
                let fit = fit_gibbs(times, horizon, &cfg).map_err(|e| match e {
                    HawkesError::Numerical { message, model } => HawkesError::Numerical {
                        message: format!("pHash {h}: {message}"),
                        model,
                    },
                    other => other,
                })?;
                Ok(PhashFit {
                    phash: *h,
                    n: fit.counts.n,
                    c: fit.counts.c,
                    b: fit.counts.b,
                    lambda0: fit.lambda0_mean,
                    w: fit.w_mean,
                    diagnostics: fit.diagnostics,
                })
            })
            .collect()
    })
}
