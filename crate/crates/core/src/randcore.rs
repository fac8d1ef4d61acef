//! Seeded random streams, the elementary samplers every other module is
//! built from, and the modified Bessel function of the first kind.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::error::{check_param, Error, Result};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids give non-overlapping sequences. Child streams
/// for replicates and components are obtained with [`RngStream::derive`],
/// which depends only on the identifiers and never on how much of the
/// parent has been consumed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream keyed by `tag`, e.g. a replicate index.
    pub fn derive(&self, tag: u64) -> Self {
        let s = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5851_f42d_4c95_7f2d)));
        let seed = splitmix64(s ^ splitmix64(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1)));
        let stream = splitmix64(seed.rotate_left(17) ^ tag);
        Self::new(seed, stream)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Accuracy controls for the Bessel series and asymptotic expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecialFnAccuracy {
    pub tolerance: f64,
    pub max_terms: usize,
}

impl Default for SpecialFnAccuracy {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_terms: 200,
        }
    }
}

impl SpecialFnAccuracy {
    pub fn new(tolerance: f64, max_terms: usize) -> Result<Self> {
        check_param(tolerance > 0.0, || format!("tolerance must be positive, got {tolerance}"))?;
        check_param(max_terms > 0, || "max_terms must be positive".into())?;
        Ok(Self {
            tolerance,
            max_terms,
        })
    }
}

/// Elementary laws. Rates are inverse scales throughout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasicDist {
    Gamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Exponential { rate: f64 },
    Poisson { mean: f64 },
    ZeroTruncatedPoisson { mean: f64 },
    Uniform01,
}

impl BasicDist {
    /// Draw once. Integer-valued laws are returned as `f64`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            BasicDist::Gamma { shape, rate } => gamma_rate(shape, rate, rng),
            BasicDist::Beta { a, b } => beta(a, b, rng),
            BasicDist::Exponential { rate } => exponential(rate, rng),
            BasicDist::Poisson { mean } => poisson(mean, rng).map(|k| k as f64),
            BasicDist::ZeroTruncatedPoisson { mean } => zt_poisson(mean, rng).map(|k| k as f64),
            BasicDist::Uniform01 => Ok(rng.random::<f64>()),
        }
    }
}

/// Gamma(shape, rate) with density proportional to x^{shape-1} e^{-rate x}.
pub fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_param(shape > 0.0 && shape.is_finite(), || format!("gamma shape must be positive, got {shape}"))?;
    check_param(rate > 0.0 && rate.is_finite(), || format!("gamma rate must be positive, got {rate}"))?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(g.sample(rng))
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_param(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(), || {
        format!("beta parameters must be positive, got ({a}, {b})")
    })?;
    let d = Beta::new(a, b).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(d.sample(rng))
}

pub fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    check_param(rate > 0.0 && rate.is_finite(), || format!("exponential rate must be positive, got {rate}"))?;
    Ok(std_exp(rng) / rate)
}

/// Standard exponential by inversion; never returns infinity.
#[inline]
pub(crate) fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open01(rng).ln()
}

/// Uniform on (0, 1], safe for logarithms and negative powers.
#[inline]
pub(crate) fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    check_param(mean >= 0.0 && mean.is_finite(), || format!("poisson mean must be non-negative, got {mean}"))?;
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Poisson conditioned to be at least one.
pub fn zt_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    check_param(mean > 0.0 && mean.is_finite(), || {
        format!("zero-truncated poisson mean must be positive, got {mean}")
    })?;
    if mean >= 1.0 {
        // acceptance probability 1 - e^{-mean} >= 0.63
        loop {
            let k = poisson(mean, rng)?;
            if k >= 1 {
                return Ok(k);
            }
        }
    }
    // inversion on the conditional pmf
    let norm = -(-mean).exp_m1();
    let u = rng.random::<f64>() * norm;
    let mut p = mean * (-mean).exp();
    let mut cum = p;
    let mut k = 1u64;
    while cum < u && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cum += p;
    }
    Ok(k)
}

/// Noncentral chi-square through its Poisson mixture of Gamma laws.
pub fn sample_ncx2<R: Rng + ?Sized>(df: f64, noncentrality: f64, rng: &mut R) -> Result<f64> {
    check_param(df > 0.0 && df.is_finite(), || format!("df must be positive, got {df}"))?;
    check_param(noncentrality >= 0.0 && noncentrality.is_finite(), || {
        format!("noncentrality must be non-negative, got {noncentrality}")
    })?;
    let n = poisson(noncentrality / 2.0, rng)?;
    gamma_rate(df / 2.0 + n as f64, 0.5, rng)
}

/// Positive stable variable with Laplace transform exp(-λ^a), 0 < a < 1,
/// by Kanter's representation.
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> Result<f64> {
    check_param(a > 0.0 && a < 1.0, || format!("stable index must lie in (0,1), got {a}"))?;
    let u = PI * open01(rng);
    let e = std_exp(rng);
    let s = (a * u).sin() / u.sin().powf(1.0 / a) * ((1.0 - a) * u).sin().powf((1.0 - a) / a)
        / e.powf((1.0 - a) / a);
    Ok(s)
}

/// 1/Γ(z), entire, with exact zeros at the non-positive integers.
pub fn recip_gamma(z: f64) -> f64 {
    if z <= 0.0 && z == z.floor() {
        return 0.0;
    }
    if z < 0.5 {
        // reflection: 1/Γ(z) = Γ(1-z) sin(πz) / π
        gamma(1.0 - z) * (PI * z).sin() / PI
    } else {
        1.0 / gamma(z)
    }
}

const BESSEL_CUTOVER: f64 = 30.0;
const BESSEL_ASYMPTOTIC_MAX_ORDER: f64 = 5.0;

/// Modified Bessel function of the first kind, I_order(x), for any real
/// order and x ≥ 0.
///
/// The ascending series is used below x = 30 (and for |order| > 5); above
/// it the large-argument expansion, whose error for negative non-integer
/// orders is of relative size e^{-2x}.
pub fn bessel_i(order: f64, x: f64, acc: SpecialFnAccuracy) -> Result<f64> {
    let scaled = bessel_i_scaled(order, x, acc)?;
    if x > 700.0 {
        return Err(Error::Range(format!(
            "I_{order}({x}) overflows double precision; use bessel_i_scaled"
        )));
    }
    let v = scaled * x.exp();
    if !v.is_finite() {
        return Err(Error::Range(format!("I_{order}({x}) is not finite")));
    }
    Ok(v)
}

/// e^{-x} I_order(x).
pub fn bessel_i_scaled(order: f64, x: f64, acc: SpecialFnAccuracy) -> Result<f64> {
    check_param(x >= 0.0 && x.is_finite(), || format!("bessel argument must be finite and >= 0, got {x}"))?;
    check_param(order.is_finite(), || "bessel order must be finite".into())?;
    // I_{-n} = I_n for integers n
    let nu = if order < 0.0 && order == order.floor() { -order } else { order };
    if x == 0.0 {
        return if nu == 0.0 {
            Ok(1.0)
        } else if nu > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Range(format!("I_{order}(0) is infinite")))
        };
    }
    if x >= BESSEL_CUTOVER && nu.abs() <= BESSEL_ASYMPTOTIC_MAX_ORDER {
        bessel_asymptotic_scaled(nu, x, acc)
    } else {
        bessel_series_scaled(nu, x, acc)
    }
}

pub(crate) fn bessel_series_scaled(nu: f64, x: f64, acc: SpecialFnAccuracy) -> Result<f64> {
    let half = 0.5 * x;
    let q = half * half;
    let rg = recip_gamma(nu + 1.0);
    // leading term (x/2)^nu / Γ(nu+1), carried with the e^{-x} factor
    let mut term = (nu * half.ln() - x).exp() * rg;
    if !term.is_finite() {
        return Err(Error::Range(format!("I_{nu}({x}) leading series term overflows")));
    }
    let mut sum = term;
    // the series needs roughly x/2 terms before it starts to converge
    let limit = acc.max_terms.max((2.0 * x) as usize + 20);
    for k in 0..limit {
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (kf + 1.0 + nu));
        sum += term;
        if kf + 1.0 > half && term.abs() <= acc.tolerance * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Range(format!(
        "I_{nu}({x}) series did not converge in {limit} terms"
    )))
}

pub(crate) fn bessel_asymptotic_scaled(nu: f64, x: f64, acc: SpecialFnAccuracy) -> Result<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..=acc.max_terms {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() > prev {
            // divergent tail of the asymptotic series
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() <= acc.tolerance * sum.abs() {
            break;
        }
    }
    Ok(sum / (2.0 * PI * x).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc() -> SpecialFnAccuracy {
        SpecialFnAccuracy::default()
    }

    fn half_integer_closed_form(order: f64, x: f64) -> f64 {
        let c = (2.0 / (PI * x)).sqrt();
        match order {
            o if o == 0.5 => c * x.sinh(),
            o if o == -0.5 => c * x.cosh(),
            o if o == 1.5 => c * (x.cosh() - x.sinh() / x),
            o if o == -1.5 => c * (x.sinh() - x.cosh() / x),
            o if o == 2.5 => c * ((1.0 + 3.0 / (x * x)) * x.sinh() - 3.0 * x.cosh() / x),
            _ => unreachable!(),
        }
    }

    #[test]
    fn bessel_known_values() {
        assert_eq!(bessel_i(0.0, 0.0, acc()).unwrap(), 1.0);
        assert!((bessel_i(0.5, 2.0, acc()).unwrap() - 2.046236863089055).abs() < 1e-12);
        assert!((bessel_i(1.5, 2.0, acc()).unwrap() - 1.09947318863311).abs() < 1e-12);
        // I_0(1) and I_1(1)
        assert!((bessel_i(0.0, 1.0, acc()).unwrap() - 1.2660658777520082).abs() < 1e-13);
        assert!((bessel_i(1.0, 1.0, acc()).unwrap() - 0.5651591039924851).abs() < 1e-13);
        assert!((bessel_i(-1.0, 1.0, acc()).unwrap() - 0.5651591039924851).abs() < 1e-13);
    }

    #[test]
    fn bessel_half_integer_orders_match_closed_forms() {
        for &order in &[0.5, -0.5, 1.5, -1.5, 2.5] {
            for &x in &[0.1, 0.5, 1.0, 2.0, 5.0, 12.0, 29.0, 31.0, 45.0, 80.0] {
                let got = bessel_i(order, x, acc()).unwrap();
                let want = half_integer_closed_form(order, x);
                assert!(((got - want) / want).abs() < 1e-10, "I_{order}({x}) = {got}, want {want}");
            }
        }
    }

    #[test]
    fn bessel_recurrence() {
        for &v in &[0.5, 1.5, -1.5, 0.3, -1.3] {
            for &x in &[0.5, 1.0, 2.0, 5.0] {
                let lhs = bessel_i(v - 1.0, x, acc()).unwrap() - bessel_i(v + 1.0, x, acc()).unwrap();
                let rhs = 2.0 * v / x * bessel_i(v, x, acc()).unwrap();
                assert!(((lhs - rhs) / rhs).abs() < 1e-9, "v={v} x={x}");
            }
        }
    }

    #[test]
    fn bessel_seam_is_continuous() {
        for &v in &[-1.5, -1.25, -0.7, 0.0, 0.4, 1.5, 2.2, 4.9] {
            let s = bessel_series_scaled(v, 30.0, acc()).unwrap();
            let a = bessel_asymptotic_scaled(v, 30.0, acc()).unwrap();
            assert!(((s - a) / s).abs() < 1e-11, "order {v}: {s} vs {a}");
        }
    }

    #[test]
    fn bessel_errors() {
        assert!(matches!(bessel_i(0.5, 800.0, acc()), Err(Error::Range(_))));
        assert!(bessel_i_scaled(0.5, 800.0, acc()).is_ok());
        assert!(matches!(bessel_i(-0.5, 0.0, acc()), Err(Error::Range(_))));
        assert!(matches!(bessel_i(0.5, -1.0, acc()), Err(Error::Parameter(_))));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(7, 3);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(7, 3);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(7, 4);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut parent = RngStream::new(7, 3);
        let d1 = parent.derive(5).next_u64();
        parent.next_u64();
        let d2 = parent.derive(5).next_u64();
        assert_eq!(d1, d2);
        assert_ne!(parent.derive(5).next_u64(), parent.derive(6).next_u64());
    }

    #[test]
    fn parameter_errors() {
        let mut r = RngStream::new(1, 0);
        assert!(gamma_rate(0.0, 1.0, &mut r).is_err());
        assert!(gamma_rate(1.0, -1.0, &mut r).is_err());
        assert!(beta(1.0, 0.0, &mut r).is_err());
        assert!(exponential(0.0, &mut r).is_err());
        assert!(poisson(-1.0, &mut r).is_err());
        assert_eq!(poisson(0.0, &mut r).unwrap(), 0);
        assert!(zt_poisson(0.0, &mut r).is_err());
        assert!(sample_ncx2(0.0, 1.0, &mut r).is_err());
    }

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn exponential_mean() {
        let mut r = RngStream::new(11, 0);
        let v: Vec<f64> = (0..100_000).map(|_| exponential(2.0, &mut r).unwrap()).collect();
        let (m, se) = mean_sd(&v);
        assert!((m - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn zt_poisson_mass_at_one_and_mean() {
        let mut r = RngStream::new(12, 0);
        let n = 100_000;
        for &mean in &[0.3, 1.0, 4.0] {
            let v: Vec<f64> = (0..n).map(|_| zt_poisson(mean, &mut r).unwrap() as f64).collect();
            let (m, se) = mean_sd(&v);
            let want = mean / (1.0 - (-mean).exp());
            assert!((m - want).abs() < 4.0 * se, "mean {mean}: {m} vs {want}");
            if mean == 1.0 {
                let p1 = v.iter().filter(|&&k| k == 1.0).count() as f64 / n as f64;
                let se1 = (0.58198 * 0.41802 / n as f64).sqrt();
                assert!((p1 - 0.581_976_706_869_326_4).abs() < 4.0 * se1);
            }
            assert!(v.iter().all(|&k| k >= 1.0));
        }
    }

    #[test]
    fn ncx2_moments_and_laplace() {
        let mut r = RngStream::new(13, 0);
        let n = 100_000;
        for &(df, nc) in &[(3.0, 0.0), (1.0, 4.0), (0.5, 2.0)] {
            let v: Vec<f64> = (0..n).map(|_| sample_ncx2(df, nc, &mut r).unwrap()).collect();
            let (m, se) = mean_sd(&v);
            assert!((m - (df + nc)).abs() < 4.0 * se, "df {df} nc {nc}: mean {m}");
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
            let want_var = 2.0 * df + 4.0 * nc;
            let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
            let se_var = ((m4 - var * var) / n as f64).sqrt();
            assert!((var - want_var).abs() < 4.0 * se_var, "variance {var} vs {want_var}");
        }
        // E exp(-X) for df=0.5, nc=2 equals 3^{-1/4} e^{-2/3}
        let lt = (0..n).map(|_| (-sample_ncx2(0.5, 2.0, &mut r).unwrap()).exp()).sum::<f64>() / n as f64;
        assert!((lt - 0.390_113).abs() < 0.02, "{lt}");
    }

    #[test]
    fn gamma_shape_one_is_exponential() {
        let mut r = RngStream::new(14, 0);
        let n = 20_000;
        let mut g: Vec<f64> = (0..n).map(|_| gamma_rate(1.0, 3.0, &mut r).unwrap()).collect();
        g.sort_by(f64::total_cmp);
        let d = g
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-3.0 * x).exp();
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (n as f64).sqrt());
    }

    #[test]
    fn small_gamma_shapes_have_correct_mean() {
        let mut r = RngStream::new(15, 0);
        for &shape in &[0.05, 0.3, 0.5] {
            let v: Vec<f64> = (0..100_000).map(|_| gamma_rate(shape, 2.0, &mut r).unwrap()).collect();
            let (m, se) = mean_sd(&v);
            assert!((m - shape / 2.0).abs() < 4.0 * se);
            assert!(v.iter().all(|&x| x > 0.0 || shape < 0.1));
        }
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let mut r = RngStream::new(16, 0);
        let a = 2.0 / 3.0;
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|_| positive_stable(a, &mut r).unwrap()).collect();
        for &q in &[0.2, 1.0, 3.0] {
            let lt = v.iter().map(|&s| (-q * s).exp()).sum::<f64>() / n as f64;
            let want = (-q.powf(a)).exp();
            assert!((lt - want).abs() < 0.005, "q={q}: {lt} vs {want}");
        }
    }

    #[test]
    fn basic_dist_dispatch() {
        let mut r = RngStream::new(17, 0);
        assert!(BasicDist::Uniform01.sample(&mut r).unwrap() < 1.0);
        assert!(BasicDist::ZeroTruncatedPoisson { mean: 0.1 }.sample(&mut r).unwrap() >= 1.0);
        assert!(BasicDist::Beta { a: -1.0, b: 1.0 }.sample(&mut r).is_err());
    }
}
