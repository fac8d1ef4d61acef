//! Distances between samples and target laws, and the report rows used by
//! the validation catalog.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{check_param, Error, Result};

/// One checked statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub n: usize,
    pub pass: bool,
    pub seed: u64,
    /// Free-form diagnostics: Monte Carlo error, clamp counts, ε used.
    pub diagnostics: Vec<(String, f64)>,
}

impl TestReport {
    /// A report passing when `statistic < threshold`.
    pub fn below(name: impl Into<String>, statistic: f64, threshold: f64, n: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            n,
            pass: statistic < threshold,
            seed,
            diagnostics: Vec::new(),
        }
    }

    /// A report passing when `statistic > threshold`.
    pub fn above(name: impl Into<String>, statistic: f64, threshold: f64, n: usize, seed: u64) -> Self {
        Self {
            pass: statistic > threshold,
            ..Self::below(name, statistic, threshold, n, seed)
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.push((key.to_string(), value));
        self
    }

    pub fn csv_header() -> &'static str {
        "name,statistic,threshold,n,pass,seed"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.name, self.statistic, self.threshold, self.n, self.pass, self.seed
        )
    }

    /// One human-readable line.
    pub fn line(&self) -> String {
        format!(
            "[{}] {}: statistic {} vs threshold {} (N = {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            num(self.statistic),
            num(self.threshold),
            self.n
        )
    }
}

fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.5}")
    }
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("samples contain NaN".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// sup |F_n − F|.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// sup |F_a − F_b| over the pooled sample.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic 5% critical value of the two-sample KS statistic.
pub fn ks_two_sample_band(m: usize, n: usize) -> f64 {
    1.36 * ((m + n) as f64 / (m as f64 * n as f64)).sqrt()
}

/// Per-λ comparison of Laplace transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceComparison {
    pub lambdas: Vec<f64>,
    pub empirical: Vec<f64>,
    pub target: Vec<f64>,
    /// Monte Carlo standard error of each empirical transform.
    pub sigma: Vec<f64>,
}

impl LaplaceComparison {
    pub fn sup_error(&self) -> f64 {
        self.empirical
            .iter()
            .zip(&self.target)
            .map(|(e, t)| (e - t).abs())
            .fold(0.0, f64::max)
    }
}

pub fn laplace_distance<F: Fn(f64) -> f64>(samples: &[f64], target: F, lambdas: &[f64]) -> Result<LaplaceComparison> {
    check_param(!samples.is_empty(), || "no samples".into())?;
    check_param(lambdas.iter().all(|&l| l > 0.0), || "lambda grid must be positive".into())?;
    let n = samples.len() as f64;
    let mut out = LaplaceComparison {
        lambdas: lambdas.to_vec(),
        empirical: Vec::new(),
        target: Vec::new(),
        sigma: Vec::new(),
    };
    for &l in lambdas {
        let (m, sd) = mean_sd(samples.iter().map(|&x| (-l * x).exp()));
        out.empirical.push(m);
        out.target.push(target(l));
        out.sigma.push(sd / n.sqrt());
    }
    Ok(out)
}

/// Sample mean and standard deviation.
pub fn mean_sd<I: IntoIterator<Item = f64>>(xs: I) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    check_param(a.len() == b.len() && a.len() > 2, || "need paired samples of length > 2".into())?;
    let (ma, sa) = mean_sd(a.iter().copied());
    let (mb, sb) = mean_sd(b.iter().copied());
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::Domain("constant sample".into()));
    }
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    Ok(cov / (sa * sb))
}

/// Two-sample χ² homogeneity test on integer counts. Categories are the
/// observed values, with sparse tails pooled until every expected cell
/// count is at least 5. Returns (statistic, degrees of freedom, p-value).
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<(f64, usize, f64)> {
    check_param(!a.is_empty() && !b.is_empty(), || "need two nonempty samples".into())?;
    let max = *a.iter().chain(b).max().expect("nonempty") as usize;
    let mut ca = vec![0f64; max + 1];
    let mut cb = vec![0f64; max + 1];
    for &x in a {
        ca[x as usize] += 1.0;
    }
    for &x in b {
        cb[x as usize] += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let min_expected = |sa: f64, sb: f64| (sa + sb) * na.min(nb) / (na + nb);
    // pool adjacent values from the left into cells with enough mass
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in 0..=max {
        sa += ca[k];
        sb += cb[k];
        if min_expected(sa, sb) >= 5.0 {
            cells.push((sa, sb));
            sa = 0.0;
            sb = 0.0;
        }
    }
    if sa + sb > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += sa;
                last.1 += sb;
            }
            None => cells.push((sa, sb)),
        }
    }
    if cells.len() < 2 {
        return Ok((0.0, 0, 1.0));
    }
    let mut stat = 0.0;
    for &(oa, ob) in &cells {
        let tot = oa + ob;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let df = cells.len() - 1;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Evaluation(e.to_string()))?;
    Ok((stat, df, 1.0 - chi.cdf(stat)))
}

/// K_n / n^α for an (α,θ) Chinese restaurant process with n customers.
/// Only the table count is tracked: a new table opens with probability
/// (θ + Kα)/(m + θ) when the (m+1)-th customer arrives.
pub fn crp_diversity_oracle<R: Rng + ?Sized>(alpha: f64, theta: f64, n: u64, rng: &mut R) -> Result<f64> {
    check_param((0.0..1.0).contains(&alpha), || format!("alpha must lie in [0,1), got {alpha}"))?;
    check_param(theta > -alpha, || format!("theta must exceed -alpha, got {theta}"))?;
    check_param(n >= 1, || "need at least one customer".into())?;
    let mut k = 1u64;
    for m in 1..n {
        let p = (theta + k as f64 * alpha) / (m as f64 + theta);
        if rng.random::<f64>() < p {
            k += 1;
        }
    }
    Ok(k as f64 / (n as f64).powf(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randcore::{exponential, gamma_rate, RngStream};

    #[test]
    fn ks_basics() {
        assert!((ks_one_sample(&[0.5], |x| x).unwrap() - 0.5).abs() < 1e-15);
        assert!(ks_one_sample(&[], |x| x).is_err());
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]).unwrap(), 1.0);
        let mut r = RngStream::new(101, 0);
        let u: Vec<f64> = (0..2000).map(|_| r.random::<f64>()).collect();
        assert!(ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).unwrap() < 1.63 / (2000f64).sqrt());
        let shifted = ks_one_sample(&u, |x| (x - 0.2).clamp(0.0, 1.0)).unwrap();
        assert!((shifted - 0.2).abs() < 0.04);
        let v: Vec<f64> = (0..2000).map(|_| r.random::<f64>()).collect();
        assert!(ks_two_sample(&u, &v).unwrap() < 1.63 / 1.36 * ks_two_sample_band(2000, 2000));
    }

    #[test]
    fn laplace_checks() {
        let mut r = RngStream::new(102, 0);
        let e: Vec<f64> = (0..20000).map(|_| exponential(1.0, &mut r).unwrap()).collect();
        let c = laplace_distance(&e, |l| 1.0 / (1.0 + l), &[1.0]).unwrap();
        assert!(c.sup_error() < 4.0 * c.sigma[0]);
        let z = laplace_distance(&[0.0, 0.0], |_| 1.0, &[1.0, 2.0]).unwrap();
        assert_eq!(z.sup_error(), 0.0);
        let g: Vec<f64> = (0..20000).map(|_| gamma_rate(0.5, 0.5, &mut r).unwrap()).collect();
        let c = laplace_distance(&g, |l| (1.0 + 2.0 * l).powf(-0.5), &[0.5, 1.0, 2.0]).unwrap();
        for i in 0..3 {
            assert!((c.empirical[i] - c.target[i]).abs() < 4.0 * c.sigma[i]);
        }
    }

    #[test]
    fn chi_square_same_and_different() {
        let mut r = RngStream::new(103, 0);
        let draw = |m: f64, r: &mut RngStream| (0..3000).map(|_| crate::randcore::poisson(m, r).unwrap()).collect::<Vec<u64>>();
        let a = draw(5.0, &mut r);
        let b = draw(5.0, &mut r);
        let c = draw(5.6, &mut r);
        assert!(chi_square_two_sample(&a, &b).unwrap().2 > 1e-3);
        assert!(chi_square_two_sample(&a, &c).unwrap().2 < 1e-3);
    }

    #[test]
    fn correlation_of_independent_draws() {
        let mut r = RngStream::new(104, 0);
        let a: Vec<f64> = (0..5000).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..5000).map(|_| r.random::<f64>()).collect();
        assert!(correlation(&a, &b).unwrap().abs() < 4.0 / (5000f64).sqrt());
        assert!((correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crp_growth() {
        let mut r = RngStream::new(105, 0);
        // α = 0: K_n grows like θ log n
        let k: f64 = (0..1000).map(|_| crp_diversity_oracle(0.0, 1.0, 1000, &mut r).unwrap()).sum::<f64>() / 1000.0;
        let want: f64 = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).sum();
        // sd of K_n is below sqrt(H_n)
        assert!((k - want).abs() < 4.0 * (want / 1000.0).sqrt(), "{k} vs {want}");
        let m4: f64 = (0..400).map(|_| crp_diversity_oracle(0.5, 0.5, 10_000, &mut r).unwrap()).sum::<f64>() / 400.0;
        let m5: f64 = (0..400).map(|_| crp_diversity_oracle(0.5, 0.5, 100_000, &mut r).unwrap()).sum::<f64>() / 400.0;
        assert!((m4 / m5 - 1.0).abs() < 0.05);
    }

    #[test]
    fn report_rows() {
        let r = TestReport::below("x", 0.01, 0.05, 10, 3).with("sigma", 0.001);
        assert!(r.pass);
        assert!(r.line().starts_with("[PASS]"));
        assert_eq!(r.csv_row(), "x,0.01,0.05,10,true,3");
        assert!(!TestReport::above("y", 0.1, 0.2, 1, 0).pass);
    }
}
