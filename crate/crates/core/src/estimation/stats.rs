//! Resampling, conditional-independence tests and summary statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::design::DesignFormula;
use super::fit::{fit_linear, response_vector};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;

pub const BOOTSTRAP_MIN_B: usize = 100;
/// Share of failed resamples tolerated before the bootstrap is rejected.
pub const BOOTSTRAP_MAX_FAILURE: f64 = 0.05;

/// Seeded RNG for replicate `k` of a derived stream.
pub fn derived_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Nonparametric bootstrap standard error. Resample `k` draws its rows from
/// stream `k` of `seed`, so the result does not depend on thread count.
pub fn bootstrap_se<F>(estimator: F, data: &Dataset, b: usize, seed: u64) -> Result<f64>
where
    F: Fn(&Dataset) -> Result<f64> + Sync + Send,
{
    if b < BOOTSTRAP_MIN_B {
        return Err(Error::InvalidQuery(format!("bootstrap needs b >= {BOOTSTRAP_MIN_B}, got {b}")));
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::InsufficientData("bootstrap on an empty dataset".into()));
    }
    let results = par::map_indices(b, |k| {
        let mut rng = derived_rng(seed, k as u64);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        estimator(&data.select_rows(&rows))
    });
    let mut ok = Vec::with_capacity(b);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) if v.is_finite() => ok.push(v),
            Ok(_) => failed += 1,
            Err(e) => {
                log::debug!("bootstrap resample failed: {e}");
                failed += 1;
            }
        }
    }
    if failed as f64 > BOOTSTRAP_MAX_FAILURE * b as f64 {
        return Err(Error::BootstrapUnstable { failed, total: b });
    }
    Ok(sd(&ok))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Type-7 sample quantile (linear interpolation between order statistics).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Tukey whiskers: most extreme values within 1.5 IQR of the box.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

pub fn summarize(x: &[f64]) -> Summary {
    let mut s: Vec<f64> = x.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let whisker_lo = s.iter().copied().find(|v| *v >= q1 - 1.5 * iqr).unwrap_or(q1);
    let whisker_hi = s.iter().rev().copied().find(|v| *v <= q3 + 1.5 * iqr).unwrap_or(q3);
    Summary {
        n: s.len(),
        mean: mean(&s),
        sd: sd(&s),
        min: s[0],
        q1,
        median: quantile(&s, 0.5),
        q3,
        max: s[s.len() - 1],
        whisker_lo,
        whisker_hi,
    }
}

/// Main effects, squares and pairwise products of `vars`, with intercept.
pub fn poly2(vars: &[&str]) -> DesignFormula {
    let mut terms = vec!["1".to_string()];
    terms.extend(vars.iter().map(|v| v.to_string()));
    for (i, a) in vars.iter().enumerate() {
        terms.push(format!("{a}^2"));
        for b in &vars[i + 1..] {
            terms.push(format!("{a}:{b}"));
        }
    }
    terms.join(" + ").parse().expect("generated formula")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiTest {
    pub partial_r: f64,
    pub z: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Fisher-z test of `x ⊥ y | given` on `rows`. Both variables are first
/// residualized on a degree-2 polynomial basis of the conditioning set.
pub fn partial_corr_test(data: &Dataset, x: &str, y: &str, given: &[&str], rows: &[usize]) -> Result<CiTest> {
    let basis = poly2(given);
    let n = rows.len();
    let resid = |v: &str| -> Result<Vec<f64>> {
        let fit = fit_linear(data, &basis, v, rows, None)?;
        let pred = fit.predict(data, rows, &[])?;
        let obs = response_vector(data, v, rows)?;
        Ok(obs.iter().zip(&pred).map(|(o, p)| o - p).collect())
    };
    let (ex, ey) = (resid(x)?, resid(y)?);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let r = dot(&ex, &ey) / (dot(&ex, &ex) * dot(&ey, &ey)).sqrt();
    let k = basis.n_terms() - 1;
    if n <= k + 3 {
        return Err(Error::InsufficientData(format!("{n} rows for a test with {k} conditioning terms")));
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let z = r.atanh() * ((n - k - 3) as f64).sqrt();
    let p_value = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    Ok(CiTest {
        partial_r: r,
        z,
        p_value,
        n,
    })
}
