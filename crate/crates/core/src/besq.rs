//! Squared Bessel machinery: exact transitions, absorbed BESQ(−2α)
//! spindles, bridges by space-time change, and samplers for the excursion
//! measure of BESQ(−2α).
//!
//! Spindle paths are generated exactly at offsets declared when the
//! spindle is created, and may later be extended forward. The path of a
//! BESQ(−2α) started at b and conditioned on its absorption time ζ, and an
//! excursion conditioned on its lifetime, are both drawn as BESQ(4+2α)
//! bridges to 0. That identification is checked against an Euler oracle
//! and against the amplitude tail in the tests.

use rand::Rng;
use statrs::function::gamma::gamma;

use crate::error::{check_alpha, check_param, Error, Result};
use crate::randcore::{bessel_i_scaled, gamma_rate, poisson, SpecialFnAccuracy};

/// Exact BESQ(δ) transition over time `dt` from `x`, δ ≥ 0.
///
/// δ = 0 is the absorbed limit: the Poisson index may be 0, giving 0.
pub fn besq_transition<R: Rng + ?Sized>(delta: f64, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "besq_transition needs dimension >= 0, got {delta}; use besq_neg_spindle"
        )));
    }
    check_param(x >= 0.0 && x.is_finite(), || format!("start must be finite and >= 0, got {x}"))?;
    check_param(dt > 0.0 && dt.is_finite(), || format!("time step must be positive, got {dt}"))?;
    let mean = x / (2.0 * dt);
    if mean > 1e15 {
        return Err(Error::Range(format!("poisson index mean {mean} too large; time step too small")));
    }
    let n = poisson(mean, rng)? as f64;
    let shape = 0.5 * delta + n;
    if shape == 0.0 {
        return Ok(0.0);
    }
    gamma_rate(shape, 1.0 / (2.0 * dt), rng)
}

/// Probability that a BESQ(δ) bridge from `x` to `y` over time `dt` stays
/// away from 0, for 0 < δ < 2; zero is polar for δ ≥ 2.
pub fn besq_bridge_avoids_zero(delta: f64, x: f64, y: f64, dt: f64) -> Result<f64> {
    check_param(delta > 0.0, || format!("dimension must be positive, got {delta}"))?;
    check_param(dt > 0.0, || format!("time step must be positive, got {dt}"))?;
    if delta >= 2.0 {
        return Ok(1.0);
    }
    if x <= 0.0 || y <= 0.0 {
        return Ok(0.0);
    }
    // BESQ(δ) killed at 0 is the h-transform of BESQ(4−δ); the ratio of
    // the two transition densities is I_{1−δ/2}(z)/I_{δ/2−1}(z).
    let z = (x * y).sqrt() / dt;
    let acc = SpecialFnAccuracy::default();
    let num = bessel_i_scaled(1.0 - 0.5 * delta, z, acc)?;
    let den = bessel_i_scaled(0.5 * delta - 1.0, z, acc)?;
    Ok((num / den).clamp(0.0, 1.0))
}

/// Forward state of a BESQ(δ) bridge to 0 written as
/// Z(t) = v(1−t/v)² Y(τ), τ = (t/v)/(1−t/v), Y ~ BESQ_{start/v}(δ).
#[derive(Clone, Copy, Debug, PartialEq)]
struct BridgeState {
    delta: f64,
    length: f64,
    /// Offset of the bridge origin within the spindle.
    origin: f64,
    tau: f64,
    y: f64,
}

impl BridgeState {
    fn new(delta: f64, start: f64, length: f64, origin: f64) -> Self {
        Self {
            delta,
            length,
            origin,
            tau: 0.0,
            y: start / length,
        }
    }

    /// Value at bridge time `t` ∈ (0, length), which must exceed every
    /// time already visited.
    fn advance<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<f64> {
        let s = t / self.length;
        let tau = s / (1.0 - s);
        let dtau = tau - self.tau;
        if dtau > 0.0 {
            self.y = besq_transition(self.delta, self.y, dtau, rng)?;
            self.tau = tau;
        }
        let w = 1.0 - s;
        Ok(self.length * w * w * self.y)
    }
}

/// A nonnegative excursion path with lifetime ζ, known exactly on a
/// skeleton of offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Spindle {
    lifetime: f64,
    birth_mass: f64,
    skeleton: Vec<(f64, f64)>,
    state: Option<BridgeState>,
}

impl Spindle {
    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    /// Value at offset 0: b for an initial spindle, 0 for an excursion.
    pub fn birth_mass(&self) -> f64 {
        self.birth_mass
    }

    pub fn skeleton(&self) -> &[(f64, f64)] {
        &self.skeleton
    }

    pub fn last_offset(&self) -> f64 {
        self.skeleton.last().map(|p| p.0).unwrap_or(0.0)
    }

    /// Largest skeleton value (the birth mass counts).
    pub fn skeleton_max(&self) -> f64 {
        self.skeleton.iter().map(|p| p.1).fold(self.birth_mass, f64::max)
    }

    /// Value at `offset`. Defined at 0, at and after the lifetime, and at
    /// skeleton offsets (matched to a relative tolerance of 1e-9).
    pub fn value_at(&self, offset: f64) -> Option<f64> {
        if offset == 0.0 {
            return Some(self.birth_mass);
        }
        if offset >= self.lifetime {
            return Some(0.0);
        }
        if offset < 0.0 {
            return None;
        }
        let i = self.skeleton.partition_point(|p| p.0 < offset);
        let tol = 1e-9 * offset.abs().max(self.lifetime).max(1e-300);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.skeleton.get(j))
            .find(|p| (p.0 - offset).abs() <= tol)
            .map(|p| p.1)
    }

    /// Generate the path at further offsets beyond the current skeleton.
    /// Offsets at or past the lifetime are ignored (the value there is 0).
    pub fn extend<R: Rng + ?Sized>(&mut self, offsets: &[f64], rng: &mut R) -> Result<()> {
        let mut prev = self.last_offset();
        for &o in offsets {
            if o >= self.lifetime {
                continue;
            }
            if !(o > prev) {
                return Err(Error::Evaluation(format!(
                    "spindle offsets must increase beyond {prev}, got {o}"
                )));
            }
            let state = self
                .state
                .as_mut()
                .ok_or_else(|| Error::Evaluation("spindle has no forward state".into()))?;
            let t = o - state.origin;
            if t <= 0.0 {
                return Err(Error::Evaluation(format!(
                    "offset {o} precedes the forward-sampled segment"
                )));
            }
            let v = state.advance(t, rng)?;
            self.skeleton.push((o, v.max(f64::MIN_POSITIVE)));
            prev = o;
        }
        Ok(())
    }

    /// The spindle s ↦ c·f(s/c).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lifetime: c * self.lifetime,
            birth_mass: c * self.birth_mass,
            skeleton: self.skeleton.iter().map(|&(o, v)| (c * o, c * v)).collect(),
            state: self.state.map(|s| BridgeState {
                delta: s.delta,
                length: c * s.length,
                origin: c * s.origin,
                tau: s.tau,
                y: s.y,
            }),
        }
    }

    fn bridge<R: Rng + ?Sized>(
        delta: f64,
        start: f64,
        lifetime: f64,
        offsets: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let mut s = Self {
            lifetime,
            birth_mass: start,
            skeleton: Vec::new(),
            state: Some(BridgeState::new(delta, start, lifetime, 0.0)),
        };
        s.extend(offsets, rng)?;
        Ok(s)
    }
}

fn check_offsets(offsets: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &o in offsets {
        if !(o > prev) || !o.is_finite() {
            return Err(Error::Domain(format!(
                "offsets must be finite, positive and strictly increasing; got {o} after {prev}"
            )));
        }
        prev = o;
    }
    Ok(())
}

/// BESQ_b(−2α) run to absorption. 1/ζ ~ Gamma(1+α, b/2); given ζ the path
/// is a BESQ(4+2α) bridge from b to 0.
pub fn besq_neg_spindle<R: Rng + ?Sized>(alpha: f64, b: f64, offsets: &[f64], rng: &mut R) -> Result<Spindle> {
    check_alpha(alpha)?;
    check_param(b > 0.0 && b.is_finite(), || format!("initial mass must be positive, got {b}"))?;
    check_offsets(offsets)?;
    let zeta = 1.0 / gamma_rate(1.0 + alpha, 0.5 * b, rng)?;
    Spindle::bridge(4.0 + 2.0 * alpha, b, zeta, offsets, rng)
}

/// Values of a BESQ(δ) bridge from `start` to 0 over [0, v] at `offsets`.
pub fn besq_bridge<R: Rng + ?Sized>(
    delta: f64,
    start: f64,
    v: f64,
    offsets: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_param(delta > 0.0, || format!("bridge dimension must be positive, got {delta}"))?;
    check_param(start >= 0.0, || format!("bridge start must be >= 0, got {start}"))?;
    check_param(v > 0.0, || format!("bridge length must be positive, got {v}"))?;
    let mut state = BridgeState::new(delta, start, v, 0.0);
    let mut prev = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(offsets.len());
    for &t in offsets {
        if !(0.0..=v).contains(&t) {
            return Err(Error::Domain(format!("bridge offset {t} outside [0, {v}]")));
        }
        if t < prev {
            return Err(Error::Domain("bridge offsets must be non-decreasing".into()));
        }
        prev = t;
        out.push(if t == 0.0 {
            start
        } else if t == v {
            0.0
        } else {
            state.advance(t, rng)?
        });
    }
    Ok(out)
}

/// An excursion of lifetime exactly `v`: a BESQ(4+2α) bridge 0 → 0.
pub fn excursion_by_lifetime<R: Rng + ?Sized>(alpha: f64, v: f64, offsets: &[f64], rng: &mut R) -> Result<Spindle> {
    check_alpha(alpha)?;
    check_param(v > 0.0 && v.is_finite(), || format!("lifetime must be positive, got {v}"))?;
    check_offsets(offsets)?;
    Spindle::bridge(4.0 + 2.0 * alpha, 0.0, v, offsets, rng)
}

/// An excursion conditioned on amplitude above `m`: BESQ_0(4+2α) until it
/// reaches m, then an independent BESQ_m(−2α) until absorption.
///
/// The first phase is generated with exact transitions on a grid of step
/// `1e-4·m` merged with the requested offsets; the hitting time is the
/// first grid time at or above `m`, and the knot (hit time, m) is stored in
/// the skeleton.
pub fn excursion_by_amplitude<R: Rng + ?Sized>(alpha: f64, m: f64, offsets: &[f64], rng: &mut R) -> Result<Spindle> {
    check_alpha(alpha)?;
    check_param(m > 0.0 && m.is_finite(), || format!("amplitude level must be positive, got {m}"))?;
    check_offsets(offsets)?;
    let delta_up = 4.0 + 2.0 * alpha;
    let step = 1e-4 * m;
    let mut skeleton = Vec::new();
    let (mut t, mut x) = (0.0f64, 0.0f64);
    let mut next = offsets.iter().copied().peekable();
    let hit_time = loop {
        let grid_t = t + step;
        let target = match next.peek() {
            Some(&o) if o <= grid_t => {
                next.next();
                o
            }
            _ => grid_t,
        };
        x = besq_transition(delta_up, x, target - t, rng)?;
        t = target;
        if x >= m {
            break t;
        }
        if target != grid_t || offsets.contains(&target) {
            skeleton.push((t, x));
        }
    };
    skeleton.push((hit_time, m));
    let zeta2 = 1.0 / gamma_rate(1.0 + alpha, 0.5 * m, rng)?;
    let mut s = Spindle {
        lifetime: hit_time + zeta2,
        birth_mass: 0.0,
        skeleton,
        state: Some(BridgeState::new(delta_up, m, zeta2, hit_time)),
    };
    let rest: Vec<f64> = next.filter(|&o| o > hit_time).collect();
    s.extend(&rest, rng)?;
    Ok(s)
}

/// Closed forms attached to the BESQ(−2α) excursion measure ν.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuTails {
    pub alpha: f64,
}

impl NuTails {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha })
    }

    /// C in Λ(dz) = C z^{−2−α} dz.
    pub fn lambda_const(&self) -> f64 {
        let a = self.alpha;
        a * (1.0 + a) / (2f64.powf(a) * gamma(1.0 - a) * gamma(1.0 + a))
    }

    /// ν{ζ > y}.
    pub fn zeta_tail(&self, y: f64) -> f64 {
        self.lambda_const() / (1.0 + self.alpha) * y.powf(-1.0 - self.alpha)
    }

    /// ν{A > m}.
    pub fn amplitude_tail(&self, m: f64) -> f64 {
        let a = self.alpha;
        2.0 * a * (1.0 + a) / gamma(1.0 - a) * m.powf(-1.0 - a)
    }

    pub fn lambda_density(&self, z: f64) -> f64 {
        self.lambda_const() * z.powf(-2.0 - self.alpha)
    }

    /// Rate of spindles with lifetime above ε, Λ(ε, ∞).
    pub fn jump_rate(&self, eps: f64) -> f64 {
        self.zeta_tail(eps)
    }

    /// ∫_ε^∞ z Λ(dz), the compensating drift of the ε-truncated scaffolding.
    pub fn compensator(&self, eps: f64) -> f64 {
        self.lambda_const() * eps.powf(-self.alpha) / self.alpha
    }
}

/// Euler–Maruyama for dZ = δ dt + 2√(Z⁺) dB with full truncation, stopped
/// at the first non-positive value when δ ≤ 0. Returns values at `offsets`
/// (0 after absorption) and the absorption time if it occurred.
pub fn euler_besq<R: Rng + ?Sized>(
    delta: f64,
    start: f64,
    step: f64,
    offsets: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, Option<f64>)> {
    check_param(step > 0.0, || format!("Euler step must be positive, got {step}"))?;
    check_offsets(offsets)?;
    let normal = rand_distr::StandardNormal;
    let sq = step.sqrt();
    let mut out = Vec::with_capacity(offsets.len());
    let (mut t, mut z) = (0.0f64, start);
    let mut absorbed = None;
    for &o in offsets {
        while t + 0.5 * step < o && absorbed.is_none() {
            let g: f64 = rng.sample(normal);
            z += delta * step + 2.0 * z.max(0.0).sqrt() * sq * g;
            t += step;
            if delta <= 0.0 && z <= 0.0 {
                z = 0.0;
                absorbed = Some(t);
            }
        }
        out.push(z.max(0.0));
    }
    Ok((out, absorbed))
}

/// BESQ_b(−2α) by the Euler scheme, for offsets that were not planned in
/// advance. The lifetime is the first non-positive step, capped at
/// `horizon`.
pub fn besq_neg_spindle_euler<R: Rng + ?Sized>(
    alpha: f64,
    b: f64,
    step: f64,
    offsets: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    check_alpha(alpha)?;
    let mut grid: Vec<f64> = offsets.to_vec();
    grid.push(horizon.max(offsets.last().copied().unwrap_or(0.0) + step));
    let (vals, absorbed) = euler_besq(-2.0 * alpha, b, step, &grid, rng)?;
    Ok((vals[..offsets.len()].to_vec(), absorbed.unwrap_or(horizon)))
}
