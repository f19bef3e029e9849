//! Influence/efficiency summaries, the two-sample KS test and rankings.

use serde::{Deserialize, Serialize};

use super::{HawkesError, PhashFit};
use crate::phash::PHash64;

/// Entries of the influence matrix are flagged when the KS p-value is below this.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

/// Expected attributed events: `c[s][d]` from source `s` to destination `d`,
/// `b[d]` from the background, `n[d]` observed events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionCounts {
    pub n: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl AttributionCounts {
    pub fn zeros(k: usize) -> Self {
        AttributionCounts {
            n: vec![0.0; k],
            c: vec![vec![0.0; k]; k],
            b: vec![0.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.n.len()
    }

    pub fn add(&mut self, other: &AttributionCounts) -> Result<(), HawkesError> {
        if other.k() != self.k() {
            return Err(HawkesError::Config(format!(
                "cannot add counts over {} processes to {}",
                other.k(),
                self.k()
            )));
        }
        for d in 0..self.k() {
            self.n[d] += other.n[d];
            self.b[d] += other.b[d];
            for s in 0..self.k() {
                self.c[s][d] += other.c[s][d];
            }
        }
        Ok(())
    }

    /// Sum of numerators and denominators over per-pHash counts.
    pub fn aggregate<'a, I>(k: usize, parts: I) -> Result<Self, HawkesError>
    where
        I: IntoIterator<Item = &'a AttributionCounts>,
    {
        let mut total = AttributionCounts::zeros(k);
        for p in parts {
            total.add(p)?;
        }
        Ok(total)
    }

    /// `100 * c[s][d] / n[d]`; `None` when `d` has no events.
    pub fn influence(&self) -> Vec<Vec<Option<f64>>> {
        let k = self.k();
        (0..k)
            .map(|s| {
                (0..k)
                    .map(|d| (self.n[d] > 0.0).then(|| 100.0 * self.c[s][d] / self.n[d]))
                    .collect()
            })
            .collect()
    }

    pub fn background_share(&self) -> Vec<Option<f64>> {
        (0..self.k())
            .map(|d| (self.n[d] > 0.0).then(|| 100.0 * self.b[d] / self.n[d]))
            .collect()
    }

    /// `100 * c[s][d] / n[s]`; the whole row is `None` when `s` has no events.
    pub fn efficiency(&self) -> Vec<Vec<Option<f64>>> {
        let k = self.k();
        (0..k)
            .map(|s| {
                (0..k)
                    .map(|d| (self.n[s] > 0.0).then(|| 100.0 * self.c[s][d] / self.n[s]))
                    .collect()
            })
            .collect()
    }

    pub fn external_efficiency(&self) -> Vec<Option<f64>> {
        let k = self.k();
        (0..k)
            .map(|s| {
                (self.n[s] > 0.0).then(|| {
                    let out: f64 = (0..k).filter(|&d| d != s).map(|d| self.c[s][d]).sum();
                    100.0 * out / self.n[s]
                })
            })
            .collect()
    }

    /// Share of events outside `source` that are attributed to `source`, as a
    /// fraction; zero when no other process has events.
    pub fn external_influence(&self, source: usize) -> f64 {
        let k = self.k();
        let num: f64 = (0..k).filter(|&d| d != source).map(|d| self.c[source][d]).sum();
        let den: f64 = (0..k).filter(|&d| d != source).map(|d| self.n[d]).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub communities: Vec<String>,
    pub events: Vec<f64>,
    /// `[source][destination]` percentages.
    pub influence: Vec<Vec<Option<f64>>>,
    pub background: Vec<Option<f64>>,
    pub efficiency: Vec<Vec<Option<f64>>>,
    pub external_efficiency: Vec<Option<f64>>,
}

fn cell(v: Option<f64>, star: bool) -> String {
    match v {
        Some(x) => format!("{x:.1}{}", if star { "*" } else { "" }),
        None => String::new(),
    }
}

impl InfluenceReport {
    pub fn from_counts(communities: &[String], counts: &AttributionCounts) -> Result<Self, HawkesError> {
        if communities.len() != counts.k() {
            return Err(HawkesError::Config(format!(
                "{} community names for {} processes",
                communities.len(),
                counts.k()
            )));
        }
        Ok(InfluenceReport {
            communities: communities.to_vec(),
            events: counts.n.clone(),
            influence: counts.influence(),
            background: counts.background_share(),
            efficiency: counts.efficiency(),
            external_efficiency: counts.external_efficiency(),
        })
    }

    fn header(&self, extra: Option<&str>) -> String {
        let mut h = String::from("source\\destination");
        for c in &self.communities {
            h.push(',');
            h.push_str(c);
        }
        if let Some(e) = extra {
            h.push(',');
            h.push_str(e);
        }
        h.push('\n');
        h
    }

    /// Rows are sources plus a final `Background` row; null entries are empty
    /// and significant entries carry a `*`.
    pub fn influence_csv(&self, significance: Option<&[Vec<Option<KsResult>>]>) -> String {
        let mut out = self.header(None);
        for (s, row) in self.influence.iter().enumerate() {
            out.push_str(&self.communities[s]);
            for (d, v) in row.iter().enumerate() {
                let star = significance
                    .and_then(|m| m[s][d].as_ref())
                    .is_some_and(KsResult::significant);
                out.push(',');
                out.push_str(&cell(*v, star));
            }
            out.push('\n');
        }
        out.push_str("Background");
        for v in &self.background {
            out.push(',');
            out.push_str(&cell(*v, false));
        }
        out.push('\n');
        out
    }

    pub fn efficiency_csv(&self) -> String {
        let mut out = self.header(Some("External"));
        for (s, row) in self.efficiency.iter().enumerate() {
            out.push_str(&self.communities[s]);
            for v in row {
                out.push(',');
                out.push_str(&cell(*v, false));
            }
            out.push(',');
            out.push_str(&cell(self.external_efficiency[s], false));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE_LEVEL
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let p = if x < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * pi2 / (8.0 * x * x)).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum::<f64>()
    };
    p.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at
/// effective size `na*nb/(na+nb)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, HawkesError> {
    if a.is_empty() || b.is_empty() {
        return Err(HawkesError::Stat("both samples must be non-empty".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(HawkesError::Stat("samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    })
}

/// Per-pHash influence values `100*c[s][d]/n[d]` (pHashes with `n[d] > 0`).
fn influence_values(parts: &[AttributionCounts], s: usize, d: usize) -> Vec<f64> {
    parts
        .iter()
        .filter(|p| p.n[d] > 0.0)
        .map(|p| 100.0 * p.c[s][d] / p.n[d])
        .collect()
}

/// KS comparison of per-pHash influence distributions of two subsets for
/// every `(source, destination)` pair; `None` where either side has no data.
pub fn significance_matrix(a: &[AttributionCounts], b: &[AttributionCounts], k: usize) -> Vec<Vec<Option<KsResult>>> {
    (0..k)
        .map(|s| {
            (0..k)
                .map(|d| ks_two_sample(&influence_values(a, s, d), &influence_values(b, s, d)).ok())
                .collect()
        })
        .collect()
}

/// External influence of `source` for each fit.
pub fn per_phash_influence(fits: &[PhashFit], source: usize) -> Vec<(PHash64, f64)> {
    fits.iter()
        .map(|f| (f.phash, f.counts().external_influence(source)))
        .collect()
}

/// pHashes by descending external influence of `source`; ties by hex.
pub fn rank_by_troll_influence(fits: &[PhashFit], source: usize) -> Vec<(PHash64, f64)> {
    let mut v = per_phash_influence(fits, source);
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}
