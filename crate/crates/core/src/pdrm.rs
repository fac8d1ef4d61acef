//! Poisson–Dirichlet masses by residual allocation, Pitman–Yor random
//! measures, and two structural decompositions of them.

use rand::Rng;

use crate::error::{check_alpha, check_param, Result};
use crate::measures::{Atom, AtomicMeasure, DEFAULT_MASS_FLOOR};
use crate::randcore::beta;

/// Outer stick count used when a caller does not choose one.
pub const DEFAULT_TRUNCATION: usize = 200;
/// Stick count for the inner PD(α,0) fragments.
pub const DEFAULT_INNER_TRUNCATION: usize = 100;

/// The first `truncation` sticks of a GEM(α,θ) sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct GemSample {
    pub masses: Vec<f64>,
    /// Mass not yet allocated, Π_{j ≤ truncation}(1 − W_j).
    pub remainder: f64,
    pub truncation: usize,
}

fn check_pd(alpha: f64, theta: f64) -> Result<()> {
    check_alpha(alpha)?;
    check_param(theta >= 0.0 && theta.is_finite(), || {
        format!("theta must be finite and >= 0, got {theta}")
    })
}

/// P_i = W_i Π_{j<i}(1 − W_j) with W_i ~ Beta(1−α, θ+iα), i = 1..trunc.
pub fn gem_sample<R: Rng + ?Sized>(alpha: f64, theta: f64, trunc: usize, rng: &mut R) -> Result<GemSample> {
    check_pd(alpha, theta)?;
    check_param(trunc >= 1, || "truncation must be at least 1".into())?;
    let mut masses = Vec::with_capacity(trunc);
    let mut rest = 1.0f64;
    for i in 1..=trunc {
        let w = beta(1.0 - alpha, theta + i as f64 * alpha, rng)?;
        let p = w * rest;
        rest -= p;
        if p > 0.0 {
            masses.push(p);
        }
    }
    Ok(GemSample {
        masses,
        remainder: rest.max(0.0),
        truncation: trunc,
    })
}

/// A PDRM(α,θ) draw together with the stick mass left unallocated.
#[derive(Clone, Debug, PartialEq)]
pub struct PdrmSample {
    pub measure: AtomicMeasure,
    pub remainder: f64,
}

/// Σ_i P_i δ(U_i) over the first `trunc` sticks, U_i i.i.d. uniform.
/// The remainder is not placed anywhere.
pub fn pdrm_sample<R: Rng + ?Sized>(alpha: f64, theta: f64, trunc: usize, rng: &mut R) -> Result<AtomicMeasure> {
    Ok(pdrm_sample_detailed(alpha, theta, trunc, rng)?.measure)
}

pub fn pdrm_sample_detailed<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    trunc: usize,
    rng: &mut R,
) -> Result<PdrmSample> {
    let g = gem_sample(alpha, theta, trunc, rng)?;
    let atoms = g
        .masses
        .iter()
        .map(|&mass| Atom {
            mass,
            location: rng.random::<f64>(),
        })
        .collect();
    Ok(PdrmSample {
        measure: AtomicMeasure::from_atoms_unchecked(atoms, DEFAULT_MASS_FLOOR),
        remainder: g.remainder,
    })
}

/// Components of the identity PDRM(α,θ) ≐ B·Π′ + (1−B)·Π with
/// B ~ Beta(θ,1), Π′ ~ PDRM(α,θ) and Π ~ PDRM(α,0) independent.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub b: f64,
    pub pi_theta: AtomicMeasure,
    pub pi_zero: AtomicMeasure,
}

impl Decomposition {
    pub fn recompose(&self) -> AtomicMeasure {
        self.pi_theta.scale(self.b).add(&self.pi_zero.scale(1.0 - self.b))
    }
}

pub fn pdrm_decompose<R: Rng + ?Sized>(alpha: f64, theta: f64, trunc: usize, rng: &mut R) -> Result<Decomposition> {
    check_pd(alpha, theta)?;
    check_param(theta > 0.0, || "the decomposition needs theta > 0".into())?;
    let b = beta(theta, 1.0, rng)?;
    let pi_theta = pdrm_sample(alpha, theta, trunc, rng)?;
    let pi_zero = pdrm_sample(alpha, 0.0, trunc, rng)?;
    Ok(Decomposition { b, pi_theta, pi_zero })
}

/// Output of an (α,0)-fragmentation of PDRM(0,θ).
#[derive(Clone, Debug)]
pub struct Fragmentation {
    pub coarse: AtomicMeasure,
    pub fine: AtomicMeasure,
    /// `(fine location, coarse location)` for every fine atom.
    pub parent: Vec<(f64, f64)>,
    /// Per coarse atom, `(coarse location, unallocated inner mass)`.
    pub inner_remainders: Vec<(f64, f64)>,
    pub outer_remainder: f64,
}

/// Split each atom A′_i of a PDRM(0,θ) into A′_i·B_ij with (B_ij)_j ~ PD(α,0)
/// at fresh uniform locations. The fine measure is PDRM(α,θ).
pub fn fragmentation_sample<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    trunc_outer: usize,
    trunc_inner: usize,
    rng: &mut R,
) -> Result<Fragmentation> {
    check_alpha(alpha)?;
    check_param(theta > 0.0 && theta.is_finite(), || format!("theta must be positive, got {theta}"))?;
    check_param(trunc_outer >= 1 && trunc_inner >= 1, || "truncations must be at least 1".into())?;
    // PD(0,θ) sticks: W_i ~ Beta(1, θ)
    let mut rest = 1.0f64;
    let mut coarse = Vec::with_capacity(trunc_outer);
    for _ in 0..trunc_outer {
        let w = beta(1.0, theta, rng)?;
        let p = w * rest;
        rest -= p;
        if p > 0.0 {
            coarse.push(Atom {
                mass: p,
                location: rng.random::<f64>(),
            });
        }
    }
    let mut fine = Vec::new();
    let mut parent = Vec::new();
    let mut inner_remainders = Vec::with_capacity(coarse.len());
    for a in &coarse {
        let g = gem_sample(alpha, 0.0, trunc_inner, rng)?;
        for &b in &g.masses {
            let location = rng.random::<f64>();
            fine.push(Atom {
                mass: a.mass * b,
                location,
            });
            parent.push((location, a.location));
        }
        inner_remainders.push((a.location, a.mass * g.remainder));
    }
    Ok(Fragmentation {
        coarse: AtomicMeasure::from_atoms_unchecked(coarse, 0.0),
        fine: AtomicMeasure::from_atoms_unchecked(fine, 0.0),
        parent,
        inner_remainders,
        outer_remainder: rest.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randcore::RngStream;
    use proptest::prelude::*;
    use statrs::distribution::{Beta as BetaDist, ContinuousCDF};
    use std::collections::HashMap;

    fn ks_vs(mut v: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn first_stick_mean_and_law() {
        let mut r = RngStream::new(21, 0);
        let n = 20_000;
        let firsts: Vec<f64> = (0..n).map(|_| gem_sample(0.5, 0.5, 5, &mut r).unwrap().masses[0]).collect();
        let mean = firsts.iter().sum::<f64>() / n as f64;
        // Beta(0.5, 1) has mean 1/3 and variance 4/45
        assert!((mean - 1.0 / 3.0).abs() < 4.0 * (4.0 / 45.0 / n as f64).sqrt());
        let b = BetaDist::new(0.5, 1.0).unwrap();
        assert!(ks_vs(firsts, |x| b.cdf(x)) < 0.015);
    }

    #[test]
    fn remainder_mean_is_product_of_beta_means() {
        // Π_{j≤50} (0.5+0.5j)/(1+0.5j) = 2/52
        let mut r = RngStream::new(22, 0);
        let n = 20_000;
        let rems: Vec<f64> = (0..n).map(|_| gem_sample(0.5, 0.5, 50, &mut r).unwrap().remainder).collect();
        let m = rems.iter().sum::<f64>() / n as f64;
        let sd = (rems.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64).sqrt();
        assert!((m - 2.0 / 52.0).abs() < 4.0 * sd / (n as f64).sqrt(), "{m}");
    }

    #[test]
    fn errors() {
        let mut r = RngStream::new(23, 0);
        assert!(gem_sample(0.5, 0.5, 0, &mut r).is_err());
        assert!(gem_sample(0.5, -0.2, 10, &mut r).is_err());
        assert!(gem_sample(1.0, 0.5, 10, &mut r).is_err());
        assert!(pdrm_decompose(0.5, 0.0, 10, &mut r).is_err());
        assert!(fragmentation_sample(0.5, 0.0, 10, 10, &mut r).is_err());
    }

    #[test]
    fn decomposition_recomposes() {
        let mut r = RngStream::new(24, 0);
        let d = pdrm_decompose(0.5, 0.5, 200, &mut r).unwrap();
        let total = d.pi_theta.total_mass() * d.b + d.pi_zero.total_mass() * (1.0 - d.b);
        assert!((d.recompose().total_mass() - total).abs() < 1e-12);
        let degenerate = Decomposition {
            b: 0.0,
            pi_theta: d.pi_theta.clone(),
            pi_zero: d.pi_zero.clone(),
        };
        assert_eq!(degenerate.recompose(), d.pi_zero);
    }

    #[test]
    fn decomposition_pick_has_structural_law() {
        let mut r = RngStream::new(25, 0);
        let n = 5000;
        let picks: Vec<f64> = (0..n)
            .map(|_| {
                let m = pdrm_decompose(0.5, 0.5, 400, &mut r).unwrap().recompose();
                let m = m.normalize().unwrap();
                m.size_biased_pick(&mut r).unwrap().mass
            })
            .collect();
        let b = BetaDist::new(0.5, 1.0).unwrap();
        assert!(ks_vs(picks, |x| b.cdf(x)) < 0.04);
    }

    #[test]
    fn fragmentation_laws_and_bookkeeping() {
        let mut r = RngStream::new(26, 0);
        let n = 3000;
        let mut fine_picks = Vec::with_capacity(n);
        let mut coarse_picks = Vec::with_capacity(n);
        for _ in 0..n {
            let f = fragmentation_sample(0.5, 0.5, 200, 100, &mut r).unwrap();
            // parent sums reconstruct coarse masses up to inner remainders
            let mut sums: HashMap<u64, f64> = HashMap::new();
            for &(fl, cl) in &f.parent {
                *sums.entry(cl.to_bits()).or_default() += f.fine.mass_at(fl);
            }
            for &(cl, rem) in &f.inner_remainders {
                let s = sums.get(&cl.to_bits()).copied().unwrap_or(0.0);
                assert!((s + rem - f.coarse.mass_at(cl)).abs() < 1e-12);
            }
            fine_picks.push(f.fine.normalize().unwrap().size_biased_pick(&mut r).unwrap().mass);
            coarse_picks.push(f.coarse.normalize().unwrap().size_biased_pick(&mut r).unwrap().mass);
        }
        let bf = BetaDist::new(0.5, 1.0).unwrap();
        let bc = BetaDist::new(1.0, 0.5).unwrap();
        assert!(ks_vs(fine_picks, |x| bf.cdf(x)) < 0.05);
        assert!(ks_vs(coarse_picks, |x| bc.cdf(x)) < 0.05);
    }

    #[test]
    fn atom_counts_scale_like_h_to_minus_alpha() {
        for &(alpha, theta) in &[(0.5, 0.5), (0.5, 0.0)] {
            let mut r = RngStream::new(27, 0);
            let hs = [1e-5, 1e-4, 1e-3, 1e-2];
            let mut counts = [0.0f64; 4];
            for _ in 0..200 {
                let m = pdrm_sample(alpha, theta, 20_000, &mut r).unwrap();
                for (c, &h) in counts.iter_mut().zip(&hs) {
                    *c += m.count_above(h) as f64;
                }
            }
            // least-squares slope of log count against log h
            let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
            let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
            let mx = xs.iter().sum::<f64>() / 4.0;
            let my = ys.iter().sum::<f64>() / 4.0;
            let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
                / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
            assert!((slope + alpha).abs() < 0.1, "theta {theta}: slope {slope}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gem_masses_telescope(alpha in 0.05f64..0.95, theta in 0.0f64..5.0, trunc in 1usize..300, seed in 0u64..1000) {
            let mut r = RngStream::new(seed, 1);
            let g = gem_sample(alpha, theta, trunc, &mut r).unwrap();
            let s: f64 = g.masses.iter().sum();
            prop_assert!((s + g.remainder - 1.0).abs() < 1e-12);
            prop_assert!(g.masses.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
}
