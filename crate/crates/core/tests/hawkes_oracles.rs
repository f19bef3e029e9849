//! Gibbs sampler checks against exact enumeration of the parent posterior
//! and against simulator ground truth.

use imgspread::hawkes::{fit_gibbs, simulate, ExpKernel, GibbsConfig, HawkesModel};
use statrs::function::gamma::ln_gamma;

const PRIOR_L: (f64, f64) = (1.0, 1.0);
const PRIOR_W: (f64, f64) = (1.0, 5.0);

/// Marginal posterior over each event's parent, by summing the
/// Gamma-integrated joint over every parent assignment.
/// Events are `(time, process)` sorted by time; returns `probs[i][0]` for
/// background and `probs[i][1 + j]` for parent `j`.
fn exact_parent_marginals(events: &[(f64, usize)], k: usize, horizon: f64, tau: f64, dmax: f64) -> Vec<Vec<f64>> {
    let n = events.len();
    let norm = 1.0 - (-dmax / tau).exp();
    let dens = |dt: f64| if dt > 0.0 && dt < dmax { (-dt / tau).exp() / (tau * norm) } else { 0.0 };
    let cdf = |x: f64| (1.0 - (-x.min(dmax) / tau).exp()) / norm;
    let mut exposure = vec![0.0; k];
    for &(t, s) in events {
        exposure[s] += cdf(horizon - t);
    }
    let log_int = |(a, b): (f64, f64), count: usize, e: f64| {
        a * b.ln() - ln_gamma(a) + ln_gamma(a + count as f64) - (a + count as f64) * (b + e).ln()
    };

    let options: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut o = vec![usize::MAX];
            o.extend((0..i).filter(|&j| dens(events[i].0 - events[j].0) > 0.0));
            o
        })
        .collect();
    let mut marg = vec![vec![0.0; n + 1]; n];
    let mut weights = Vec::new();
    let mut assign = vec![0usize; n];
    loop {
        let mut log_w = 0.0;
        let mut bg = vec![0usize; k];
        let mut sd = vec![vec![0usize; k]; k];
        for i in 0..n {
            let p = options[i][assign[i]];
            let d = events[i].1;
            if p == usize::MAX {
                bg[d] += 1;
            } else {
                sd[events[p].1][d] += 1;
                log_w += dens(events[i].0 - events[p].0).ln();
            }
        }
        for d in 0..k {
            log_w += log_int(PRIOR_L, bg[d], horizon);
            for s in 0..k {
                log_w += log_int(PRIOR_W, sd[s][d], exposure[s]);
            }
        }
        weights.push((log_w, assign.clone()));
        // odometer over assignments
        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            assign[pos] += 1;
            if assign[pos] < options[pos].len() {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }
    let max = weights.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = weights.iter().map(|w| (w.0 - max).exp()).sum();
    for (lw, a) in &weights {
        let p = (lw - max).exp() / z;
        for i in 0..n {
            let parent = options[i][a[i]];
            let slot = if parent == usize::MAX { 0 } else { parent + 1 };
            marg[i][slot] += p;
        }
    }
    marg
}

fn to_series(events: &[(f64, usize)], k: usize) -> Vec<Vec<f64>> {
    let mut s = vec![Vec::new(); k];
    for &(t, d) in events {
        s[d].push(t);
    }
    s
}

/// Worst per-event total-variation distance between the sampler (raw draw
/// frequencies and averaged probabilities) and the exact marginals.
fn check_sequence(events: &[(f64, usize)], k: usize, horizon: f64, dmax: f64, sweeps: usize) -> (f64, f64) {
    let cfg = GibbsConfig {
        kernel: ExpKernel::new(1.0, dmax).unwrap(),
        burn_in: 1000,
        samples: sweeps,
        seed: 11,
        record_attribution: true,
        ..GibbsConfig::default()
    };
    let series = to_series(events, k);
    let fit = fit_gibbs(&series, horizon, &cfg).unwrap();
    let att = fit.attribution.unwrap();
    let exact = exact_parent_marginals(events, k, horizon, 1.0, dmax);
    // map (process, index) -> global event position
    let mut pos = vec![Vec::new(); k];
    for (g, &(_, d)) in events.iter().enumerate() {
        pos[d].push(g);
    }
    let (mut tv_raw, mut tv_rb) = (0.0f64, 0.0f64);
    for e in &att.events {
        let g = pos[e.process][e.index];
        let mut raw = vec![0.0; events.len() + 1];
        let mut rb = vec![0.0; events.len() + 1];
        raw[0] = e.sampled_background;
        rb[0] = e.background;
        for p in &e.parents {
            raw[pos[p.process][p.index] + 1] = p.sampled;
            rb[pos[p.process][p.index] + 1] = p.prob;
        }
        let tv = |x: &[f64]| 0.5 * x.iter().zip(&exact[g]).map(|(a, b)| (a - b).abs()).sum::<f64>();
        tv_raw = tv_raw.max(tv(&raw));
        tv_rb = tv_rb.max(tv(&rb));
    }
    for d in 0..k {
        let total = fit.counts.b[d] + (0..k).map(|s| fit.counts.c[s][d]).sum::<f64>();
        assert!((total - fit.counts.n[d]).abs() < 1e-6);
    }
    (tv_raw, tv_rb)
}

#[test]
fn two_event_toy_matches_enumeration() {
    let events = [(0.0, 0), (0.01, 1)];
    let (raw, rb) = check_sequence(&events, 2, 5.0, 1.0, 20_000);
    assert!(raw <= 0.02, "raw TV {raw}");
    assert!(rb <= 0.02, "averaged TV {rb}");
}

#[test]
fn two_event_influence_is_parent_probability() {
    let cfg = GibbsConfig {
        kernel: ExpKernel::new(1.0, 1.0).unwrap(),
        samples: 5000,
        record_attribution: true,
        ..GibbsConfig::default()
    };
    let fit = fit_gibbs(&[vec![0.0], vec![0.01]], 5.0, &cfg).unwrap();
    let p = fit.attribution.unwrap().get(1, 0).unwrap().parents[0].prob;
    let inf = fit.counts.influence()[0][1].unwrap();
    assert!((inf - 100.0 * p).abs() < 1e-9);
}

#[test]
fn six_events_three_processes_match_enumeration() {
    let events = [(0.2, 0), (0.5, 1), (0.9, 0), (1.4, 2), (1.5, 1), (2.8, 2)];
    let (raw, rb) = check_sequence(&events, 3, 6.0, 2.0, 20_000);
    assert!(raw <= 0.02, "raw TV {raw}");
    assert!(rb <= 0.02, "averaged TV {rb}");
}

#[test]
fn recovers_simulated_attribution() {
    let model = HawkesModel::new(
        vec![0.5, 0.3, 0.2],
        vec![vec![0.2, 0.1, 0.15], vec![0.1, 0.3, 0.1], vec![0.15, 0.1, 0.2]],
        ExpKernel::default(),
    )
    .unwrap();
    let horizon = 2000.0;
    let sim = simulate(&model, horizon, 3).unwrap();
    let truth = sim.true_counts();
    let cfg = GibbsConfig {
        burn_in: 100,
        samples: 300,
        seed: 3,
        ..GibbsConfig::default()
    };
    let fit = fit_gibbs(&sim.times, horizon, &cfg).unwrap();
    for s in 0..3 {
        for d in 0..3 {
            let est = fit.counts.c[s][d] / fit.counts.n[d];
            let want = truth.c[s][d] / truth.n[d];
            assert!((est - want).abs() <= 0.05, "{s}->{d}: {est} vs {want}");
        }
    }
}
