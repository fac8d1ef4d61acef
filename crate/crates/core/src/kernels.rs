//! Transition kernels K_y^{α,θ} of SSSP(α,θ) and their building blocks.
//!
//! For an atom b δ(x) the law Q_{b,x,r}, r = 1/(2y), is: the zero measure
//! with probability e^{−br}; otherwise an atom of mass L_{b,r} that keeps
//! type x with probability p_{b,r}(L) (and gets a fresh uniform type
//! otherwise), plus an independent G·PDRM(α,α) with G ~ Gamma(α, r).
//!
//! L_{b,r} is sampled as Gamma(K − α, r) with K zero-truncated
//! Poisson(br), which reproduces its Laplace transform term by term.

use rand::Rng;
use statrs::function::gamma::gamma;

use crate::error::{check_alpha, check_param, Result};
use crate::measures::{Atom, AtomicMeasure, MeasurePath, PathMeta, DEFAULT_MASS_FLOOR};
use crate::pdrm::{gem_sample, DEFAULT_TRUNCATION};
use crate::randcore::{bessel_i_scaled, gamma_rate, zt_poisson, SpecialFnAccuracy};

/// Which denominator to use in p_{b,r}(c).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PVariant {
    /// I_{−1−α}(x) + α (x/2)^{−1−α}/Γ(1−α). The power term cancels the
    /// singular leading term of I_{−1−α}, so p stays in [0,1].
    #[default]
    HalfArgument,
    /// I_{−1−α}(x) + α x^{−1−α}/Γ(1−α). Leaves an uncancelled singularity
    /// as x → 0 and gives values outside [0,1]; kept for comparison.
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub alpha: f64,
    pub theta: f64,
    /// Number of GEM sticks kept for every PDRM draw.
    pub truncation: usize,
}

impl KernelParams {
    pub fn new(alpha: f64, theta: f64, truncation: usize) -> Result<Self> {
        check_alpha(alpha)?;
        check_param(theta >= 0.0 && theta.is_finite(), || format!("theta must be non-negative, got {theta}"))?;
        check_param(truncation >= 1, || "truncation must be at least 1".into())?;
        Ok(Self {
            alpha,
            theta,
            truncation,
        })
    }
}

/// Counters accumulated by a [`KernelSampler`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KernelDiagnostics {
    pub p_evaluations: u64,
    /// Evaluations of p that fell outside [0,1] by more than rounding.
    pub p_clamps: u64,
    /// Total mass of PDRM tails beyond the truncation, summed over draws.
    /// This mass is not placed on any atom.
    pub dropped_mass: f64,
}

/// A kernel draw with the mass the truncated PDRM parts left out.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDraw {
    pub measure: AtomicMeasure,
    pub dropped_mass: f64,
}

impl KernelDraw {
    /// Mass of the untruncated draw.
    pub fn full_mass(&self) -> f64 {
        self.measure.total_mass() + self.dropped_mass
    }
}

/// L_{b,r}: K ~ ZTPoisson(br), then Gamma(K − α, r).
pub fn sample_l<R: Rng + ?Sized>(alpha: f64, b: f64, r: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    check_param(b > 0.0 && r > 0.0, || format!("need b, r > 0, got b = {b}, r = {r}"))?;
    let k = zt_poisson(b * r, rng)?;
    gamma_rate(k as f64 - alpha, r, rng)
}

/// E e^{−qL_{b,r}} = s^{−α} (e^{brs} − 1)/(e^{br} − 1) with s = r/(r+q).
pub fn l_laplace(alpha: f64, b: f64, r: f64, q: f64) -> f64 {
    let s = r / (r + q);
    s.powf(-alpha) * ((b * r * s).exp_m1()) / (b * r).exp_m1()
}

/// p_{b,r}(c) unclamped, with x = 2r√(bc).
pub fn p_prob_raw(alpha: f64, b: f64, r: f64, c: f64, variant: PVariant, acc: SpecialFnAccuracy) -> Result<f64> {
    check_alpha(alpha)?;
    check_param(b > 0.0 && r > 0.0 && c > 0.0, || format!("need b, r, c > 0, got {b}, {r}, {c}"))?;
    let x = 2.0 * r * (b * c).sqrt();
    let nu = 1.0 + alpha;
    let num = bessel_i_scaled(nu, x, acc)?;
    let half = 0.5 * x;
    let den = match variant {
        PVariant::HalfArgument if x <= 30.0 => {
            // Series of I_{−ν} after dropping its k = 0 term, which the
            // power term cancels exactly; computed in e^{−x}-scaled form.
            let mut sum = 0.0;
            let ln_half = half.ln();
            for k in 1..acc.max_terms {
                let kf = k as f64;
                let lt = (2.0 * kf - nu) * ln_half - ln_factorial(k) - statrs::function::gamma::ln_gamma(kf - alpha) - x;
                let t = lt.exp();
                sum += t;
                if t < acc.tolerance * sum && kf > half {
                    break;
                }
            }
            sum
        }
        PVariant::HalfArgument => {
            bessel_i_scaled(-nu, x, acc)? + alpha * half.powf(-nu) / gamma(1.0 - alpha) * (-x).exp()
        }
        PVariant::AsPrinted => bessel_i_scaled(-nu, x, acc)? + alpha * x.powf(-nu) / gamma(1.0 - alpha) * (-x).exp(),
    };
    Ok(num / den)
}

fn ln_factorial(k: usize) -> f64 {
    statrs::function::gamma::ln_gamma(k as f64 + 1.0)
}

/// p_{b,r}(c) clamped to [0,1]; the flag reports a clamp beyond rounding.
pub fn p_prob(alpha: f64, b: f64, r: f64, c: f64, variant: PVariant, acc: SpecialFnAccuracy) -> Result<(f64, bool)> {
    let p = p_prob_raw(alpha, b, r, c, variant, acc)?;
    let clamped = !(-1e-12..=1.0 + 1e-12).contains(&p) || p.is_nan();
    Ok((if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) }, clamped))
}

/// Stateful sampler for the kernels, carrying diagnostics.
#[derive(Clone, Debug)]
pub struct KernelSampler {
    pub params: KernelParams,
    pub variant: PVariant,
    pub accuracy: SpecialFnAccuracy,
    pub diagnostics: KernelDiagnostics,
}

impl KernelSampler {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        Ok(Self::with_params(KernelParams::new(alpha, theta, DEFAULT_TRUNCATION)?))
    }

    pub fn with_params(params: KernelParams) -> Self {
        Self {
            params,
            variant: PVariant::default(),
            accuracy: SpecialFnAccuracy::default(),
            diagnostics: KernelDiagnostics::default(),
        }
    }

    pub fn p_prob(&mut self, b: f64, r: f64, c: f64) -> Result<f64> {
        let (p, clamped) = p_prob(self.params.alpha, b, r, c, self.variant, self.accuracy)?;
        self.diagnostics.p_evaluations += 1;
        self.diagnostics.p_clamps += clamped as u64;
        Ok(p)
    }

    /// Atoms of scale·PDRM(α, θ'), recording the dropped tail.
    fn push_scaled_pdrm<R: Rng + ?Sized>(&mut self, theta: f64, scale: f64, out: &mut Vec<Atom>, rng: &mut R) -> Result<f64> {
        let g = gem_sample(self.params.alpha, theta, self.params.truncation, rng)?;
        for &w in &g.masses {
            out.push(Atom {
                mass: scale * w,
                location: rng.random::<f64>(),
            });
        }
        let dropped = scale * g.remainder;
        self.diagnostics.dropped_mass += dropped;
        Ok(dropped)
    }

    fn q_atoms<R: Rng + ?Sized>(&mut self, b: f64, x: f64, r: f64, out: &mut Vec<Atom>, rng: &mut R) -> Result<f64> {
        let alpha = self.params.alpha;
        if rng.random::<f64>() < (-b * r).exp() {
            return Ok(0.0);
        }
        let c = sample_l(alpha, b, r, rng)?;
        let p = self.p_prob(b, r, c)?;
        let location = if rng.random::<f64>() < p { x } else { rng.random::<f64>() };
        out.push(Atom { mass: c, location });
        let g = gamma_rate(alpha, r, rng)?;
        self.push_scaled_pdrm(alpha, g, out, rng)
    }

    /// Q_{b,x,r}.
    pub fn sample_q<R: Rng + ?Sized>(&mut self, b: f64, x: f64, r: f64, rng: &mut R) -> Result<KernelDraw> {
        check_param(b > 0.0 && r > 0.0, || format!("need b, r > 0, got b = {b}, r = {r}"))?;
        check_param((0.0..=1.0).contains(&x), || format!("type must lie in [0,1], got {x}"))?;
        let mut atoms = Vec::new();
        let dropped = self.q_atoms(b, x, r, &mut atoms, rng)?;
        Ok(KernelDraw {
            measure: AtomicMeasure::from_atoms_unchecked(atoms, DEFAULT_MASS_FLOOR),
            dropped_mass: dropped,
        })
    }

    /// K_y^{α,θ}(π, ·) with the dropped PDRM mass reported.
    pub fn sample_k_detailed<R: Rng + ?Sized>(&mut self, y: f64, pi: &AtomicMeasure, rng: &mut R) -> Result<KernelDraw> {
        check_param(y > 0.0 && y.is_finite(), || format!("level increment must be positive, got {y}"))?;
        let r = 0.5 / y;
        let mut atoms = Vec::new();
        let mut dropped = 0.0;
        if self.params.theta > 0.0 {
            let g = gamma_rate(self.params.theta, r, rng)?;
            dropped += self.push_scaled_pdrm(self.params.theta, g, &mut atoms, rng)?;
        }
        for a in pi.atoms() {
            dropped += self.q_atoms(a.mass, a.location, r, &mut atoms, rng)?;
        }
        Ok(KernelDraw {
            measure: AtomicMeasure::from_atoms_unchecked(atoms, DEFAULT_MASS_FLOOR),
            dropped_mass: dropped,
        })
    }

    pub fn sample_k<R: Rng + ?Sized>(&mut self, y: f64, pi: &AtomicMeasure, rng: &mut R) -> Result<AtomicMeasure> {
        Ok(self.sample_k_detailed(y, pi, rng)?.measure)
    }

    /// The Markov chain (π^{y_j}) with π^{y_0} = π, stepping by K over each
    /// grid increment.
    pub fn kernel_chain<R: Rng + ?Sized>(&mut self, pi: &AtomicMeasure, levels: &[f64], rng: &mut R) -> Result<MeasurePath> {
        check_param(levels.first() == Some(&0.0), || "level grid must start at 0".into())?;
        let mut states = vec![pi.clone()];
        for w in levels.windows(2) {
            check_param(w[0] < w[1], || "level grid must be strictly increasing".into())?;
            let next = self.sample_k(w[1] - w[0], states.last().expect("nonempty"), rng)?;
            states.push(next);
        }
        MeasurePath::new(
            levels.to_vec(),
            states,
            PathMeta {
                alpha: self.params.alpha,
                theta: self.params.theta,
                eps: None,
                seed: None,
            },
        )
    }
}
