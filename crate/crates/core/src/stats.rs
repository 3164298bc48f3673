//! Empirical distributions of scalar returns: EDF, two-sample sup distance,
//! histogram density and the DKW radius.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{DistLqrError, Result};

/// Minimum samples for the Freedman–Diaconis rule.
pub const MIN_FD_SAMPLES: usize = 100;
pub const MIN_BIN_WIDTH: f64 = 1e-12;

/// Where a sample set came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub master_seed: Option<u64>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    pub provenance: Provenance,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if samples.is_empty() {
            return Err(DistLqrError::TooFewSamples { required: 1, actual: 0 });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(DistLqrError::NonFinite("return samples"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, provenance })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, Provenance::default())
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of samples `<= z`.
    pub fn edf(&self, z: f64) -> f64 {
        self.samples.partition_point(|&s| s <= z) as f64 / self.samples.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Unbiased sample variance (0 for a single sample).
    pub fn variance(&self) -> f64 {
        let m = self.samples.len();
        if m < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.samples.len() as f64).sqrt()
    }

    /// Linear-interpolation quantile, `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let m = self.samples.len();
        let pos = q.clamp(0.0, 1.0) * (m - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        self.samples[lo] + (pos - lo as f64) * (self.samples[hi] - self.samples[lo])
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// `(z, edf(z))` at each distinct sample value.
    pub fn edf_points(&self) -> Vec<(f64, f64)> {
        let m = self.samples.len() as f64;
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.samples.len() {
            let z = self.samples[i];
            while i < self.samples.len() && self.samples[i] == z {
                i += 1;
            }
            out.push((z, i as f64 / m));
        }
        out
    }

    pub fn write_edf_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "z,edf")?;
        for (z, f) in self.edf_points() {
            writeln!(w, "{z},{f}")?;
        }
        Ok(())
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_z |F₁(z) − F₂(z)|`.
///
/// Both EDFs are step functions that only jump at sample points, so walking
/// the merged sorted samples visits every candidate supremum exactly.
pub fn ks_distance(d1: &EmpiricalDistribution, d2: &EmpiricalDistribution) -> f64 {
    let (a, b) = (&d1.samples, &d2.samples);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let z = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= z {
            i += 1;
        }
        while j < b.len() && b[j] <= z {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BinRule {
    FreedmanDiaconis,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramDensity {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub f_max: f64,
}

impl HistogramDensity {
    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_left,bin_right,density")?;
        for (k, d) in self.densities.iter().enumerate() {
            writeln!(w, "{},{},{}", self.bin_edges[k], self.bin_edges[k + 1], d)?;
        }
        Ok(())
    }

    /// Number of strict interior local maxima of the density, counting a
    /// plateau once.
    pub fn local_maxima(&self) -> usize {
        let d = &self.densities;
        let mut count = 0;
        let mut k = 0;
        while k < d.len() {
            let mut end = k;
            while end + 1 < d.len() && d[end + 1] == d[k] {
                end += 1;
            }
            let left_lower = k == 0 || d[k - 1] < d[k];
            let right_lower = end + 1 == d.len() || d[end + 1] < d[k];
            if left_lower && right_lower && d[k] > 0.0 {
                count += 1;
            }
            k = end + 1;
        }
        count
    }
}

/// Normalised histogram; `f_max` is the largest bin density.
pub fn histogram_density(dist: &EmpiricalDistribution, rule: BinRule) -> Result<HistogramDensity> {
    let m = dist.len();
    let (lo, hi) = (dist.min(), dist.max());
    let range = hi - lo;
    let bins = match rule {
        BinRule::FreedmanDiaconis => {
            if m < MIN_FD_SAMPLES {
                return Err(DistLqrError::TooFewSamples {
                    required: MIN_FD_SAMPLES,
                    actual: m,
                });
            }
            let iqr = dist.quantile(0.75) - dist.quantile(0.25);
            let h = 2.0 * iqr * (m as f64).powf(-1.0 / 3.0);
            if h > 0.0 && range > 0.0 {
                ((range / h).ceil() as usize).clamp(1, m)
            } else {
                1
            }
        }
        BinRule::Fixed(k) => k.max(1),
    };
    let width = (range / bins as f64).max(MIN_BIN_WIDTH);
    let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &s in dist.samples() {
        let k = (((s - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let densities: Vec<f64> = counts.iter().map(|&c| c as f64 / (m as f64 * width)).collect();
    let f_max = densities.iter().cloned().fold(0.0, f64::max);
    Ok(HistogramDensity {
        bin_edges: edges,
        densities,
        f_max,
    })
}

/// One-sided DKW radius `√(ln(1/δ)/(2M))`.
pub fn dkw_epsilon(m: usize, delta: f64) -> f64 {
    ((1.0 / delta).ln() / (2.0 * m as f64)).sqrt()
}
