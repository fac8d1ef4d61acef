//! Stable(1+α) scaffolding built from an ε-truncated Poisson random measure
//! of spindles, clades, the decomposition into excursions above the running
//! infimum, and the scaling operator.
//!
//! Jumps of size at least ε arrive at rate λ_ε = Λ(ε,∞) and are compensated
//! by the drift −c_ε, c_ε = ∫_ε^∞ zΛ(dz). Every jump carries a spindle
//! (an excursion with that lifetime) and a uniform type, and each spindle is
//! generated exactly at the level-grid offsets it straddles.
//!
//! Because the scaffolding has no downward jumps it returns to any level it
//! has jumped over continuously. When a caller only needs the superskewer
//! below some level, excursions above that level may be *elided*: the path
//! is moved back down to the level at once and the time spent above it is
//! drawn from the first-passage law of the untruncated process. Elided
//! stretches contain no points, and are recorded in the path.

use rand::Rng;
use statrs::function::gamma::gamma;
use std::fmt::Write as _;

use crate::besq::{besq_neg_spindle, excursion_by_lifetime, NuTails, Spindle};
use crate::error::{check_alpha, check_param, Error, Result};
use crate::measures::{Atom, AtomicMeasure, DEFAULT_MASS_FLOOR};
use crate::randcore::{open01, positive_stable, std_exp};

/// Default truncation floor for spindle lifetimes.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Rates of the ε-truncated jump measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub alpha: f64,
    pub eps: f64,
    /// λ_ε, jumps per unit time.
    pub rate: f64,
    /// c_ε > 0; the scaffolding drifts at −c_ε.
    pub compensator: f64,
    size_exponent: f64,
}

impl Truncation {
    pub fn new(alpha: f64, eps: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_param(eps > 0.0 && eps.is_finite(), || format!("eps must be positive, got {eps}"))?;
        let nu = NuTails::new(alpha)?;
        Ok(Self {
            alpha,
            eps,
            rate: nu.jump_rate(eps),
            compensator: nu.compensator(eps),
            size_exponent: -1.0 / (1.0 + alpha),
        })
    }

    pub fn drift(&self) -> f64 {
        -self.compensator
    }

    #[inline]
    fn waiting_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        std_exp(rng) / self.rate
    }

    /// Pareto jump size ε U^{−1/(1+α)}.
    #[inline]
    fn jump_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.eps * open01(rng).powf(self.size_exponent)
    }

    /// Time for the untruncated scaffolding to descend by `h`: the
    /// first-passage subordinator at `h`, equal in law to
    /// h^{1+α} 2^α Γ(1+α) S with S positive (1/(1+α))-stable.
    fn return_time<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> Result<f64> {
        let a = self.alpha;
        let kappa = 2f64.powf(a) * gamma(1.0 + a);
        Ok(h.powf(1.0 + a) * kappa * positive_stable(1.0 / (1.0 + a), rng)?)
    }

    /// Laplace exponent of the truncated scaffolding,
    /// log E e^{−qX(1)} = ψ_α(q) − ∫_0^ε (e^{−qz} − 1 + qz) Λ(dz).
    pub fn laplace_exponent(&self, q: f64) -> f64 {
        laplace_exponent(self.alpha, q) - small_jump_correction(self.alpha, self.eps, q)
    }

    /// Right inverse of [`Truncation::laplace_exponent`]; for this
    /// spectrally positive path E e^{−q T^{−y}} = e^{−y Φ_ε(q)} exactly.
    pub fn first_passage_exponent(&self, q: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while self.laplace_exponent(hi) < q {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.laplace_exponent(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl Truncation {
    /// First time the truncated scaffolding started at 0 goes below
    /// `level` < 0, or `None` if that happens after `horizon`. Only jump
    /// sizes are drawn; no spindles are generated.
    pub fn first_passage_time<R: Rng + ?Sized>(&self, level: f64, horizon: f64, rng: &mut R) -> Result<Option<f64>> {
        check_param(level < 0.0, || format!("passage level must be negative, got {level}"))?;
        let c = self.compensator;
        let (mut t, mut x) = (0.0f64, 0.0f64);
        loop {
            let e = self.waiting_time(rng);
            if x - c * e < level {
                let tp = t + (x - level) / c;
                return Ok((tp <= horizon).then_some(tp));
            }
            t += e;
            if t > horizon {
                return Ok(None);
            }
            x += self.jump_size(rng) - c * e;
        }
    }
}

/// For a clade of Q_{b,x}, the first spindle in time order alive at level
/// `y`: whether it is the initial spindle, and its mass at `y`. `None`
/// when the clade dies before reaching `y`. Stops as soon as that spindle
/// is found.
pub fn leftmost_spindle_at<R: Rng + ?Sized>(
    alpha: f64,
    b: f64,
    eps: f64,
    y: f64,
    rng: &mut R,
) -> Result<Option<(bool, f64)>> {
    let tr = Truncation::new(alpha, eps)?;
    check_param(y > 0.0, || format!("level must be positive, got {y}"))?;
    let f = besq_neg_spindle(alpha, b, &[y], rng)?;
    if f.lifetime() > y {
        return Ok(f.value_at(y).map(|v| (true, v)));
    }
    let c = tr.compensator;
    let mut x = f.lifetime();
    loop {
        let e = tr.waiting_time(rng);
        if x - c * e < 0.0 {
            return Ok(None);
        }
        x -= c * e;
        let z = tr.jump_size(rng);
        if x + z > y {
            let g = excursion_by_lifetime(alpha, z, &[y - x], rng)?;
            return Ok(g.value_at(y - x).map(|v| (false, v)));
        }
        x += z;
    }
}

/// ψ_α(q) = 2^{−α} Γ(1+α)^{−1} q^{1+α}.
pub fn laplace_exponent(alpha: f64, q: f64) -> f64 {
    q.powf(1.0 + alpha) / (2f64.powf(alpha) * gamma(1.0 + alpha))
}

/// φ_α(q) = (2^α Γ(1+α) q)^{1/(1+α)}, the inverse of ψ_α.
pub fn first_passage_exponent(alpha: f64, q: f64) -> f64 {
    (2f64.powf(alpha) * gamma(1.0 + alpha) * q).powf(1.0 / (1.0 + alpha))
}

/// ∫_0^ε (e^{−qz} − 1 + qz) C z^{−2−α} dz by its power series in qε.
pub fn small_jump_correction(alpha: f64, eps: f64, q: f64) -> f64 {
    let c = NuTails { alpha }.lambda_const();
    // e^{−qz} − 1 + qz = Σ_{k≥2} (−q)^k z^k / k!
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 2..60 {
        fact *= k as f64;
        let kf = k as f64;
        let term = (-q).powi(k) * eps.powf(kf - 1.0 - alpha) / (fact * (kf - 1.0 - alpha));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    c * sum
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// A stretch above a level cap replaced by a linear descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Elision {
    pub time: f64,
    pub duration: f64,
    pub from: f64,
    pub to: f64,
}

/// Piecewise linear path with upward jumps: slope `drift` between events,
/// plus elided stretches.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaffoldingPath {
    pub start: f64,
    pub jumps: Vec<Jump>,
    pub drift: f64,
    pub horizon: f64,
    pub elisions: Vec<Elision>,
}

enum Event {
    Jump(Jump),
    Elide(Elision),
}

impl ScaffoldingPath {
    fn events(&self) -> Vec<(f64, Event)> {
        let mut ev: Vec<(f64, Event)> = self
            .jumps
            .iter()
            .map(|j| (j.time, Event::Jump(*j)))
            .chain(self.elisions.iter().map(|e| (e.time, Event::Elide(*e))))
            .collect();
        // an elision starts right after the jump that triggered it
        ev.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| match (&a.1, &b.1) {
                (Event::Jump(_), Event::Elide(_)) => std::cmp::Ordering::Less,
                (Event::Elide(_), Event::Jump(_)) => std::cmp::Ordering::Greater,
                _ => std::cmp::Ordering::Equal,
            })
        });
        ev
    }

    /// X(t), right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        let (mut x, mut now) = (self.start, 0.0);
        for (time, e) in self.events() {
            if time > t {
                break;
            }
            x += self.drift * (time - now);
            now = time;
            match e {
                Event::Jump(j) => x += j.size,
                Event::Elide(el) => {
                    if t < el.time + el.duration {
                        return el.from + (el.to - el.from) * (t - el.time) / el.duration;
                    }
                    x = el.to;
                    now = el.time + el.duration;
                }
            }
        }
        x + self.drift * (t - now)
    }

    /// inf{t : X(t) < level}, or `None` if not reached by the horizon.
    /// Passage happens on a linear stretch, never at a jump.
    pub fn first_passage(&self, level: f64) -> Option<f64> {
        let (mut x, mut now) = (self.start, 0.0);
        if x < level {
            return Some(0.0);
        }
        let descend = |x: f64, now: f64, until: f64, slope: f64| -> Option<f64> {
            if slope >= 0.0 {
                return None;
            }
            // tolerate rounding when the passage ends the recorded path
            let tp = now + (level - x) / slope;
            (tp <= until + 1e-12 * until.abs().max(1.0)).then_some(tp)
        };
        for (time, e) in self.events() {
            let until = time.min(self.horizon);
            if let Some(t) = descend(x, now, until, self.drift) {
                return Some(t);
            }
            if time > self.horizon {
                return None;
            }
            x += self.drift * (time - now);
            now = time;
            match e {
                Event::Jump(j) => x += j.size,
                Event::Elide(el) => {
                    if el.to < level {
                        let slope = (el.to - el.from) / el.duration;
                        return descend(x, now, el.time + el.duration, slope);
                    }
                    x = el.to;
                    now = el.time + el.duration;
                }
            }
        }
        descend(x, now, self.horizon, self.drift).map(|t| t.min(self.horizon))
    }

    /// sup of the path over [0, horizon] (jump tops included).
    pub fn running_max(&self) -> f64 {
        let (mut x, mut now, mut m) = (self.start, 0.0, self.start);
        for (time, e) in self.events() {
            x += self.drift * (time - now);
            now = time;
            match e {
                Event::Jump(j) => {
                    x += j.size;
                    m = m.max(x);
                }
                Event::Elide(el) => {
                    x = el.to;
                    now = el.time + el.duration;
                }
            }
        }
        m
    }
}

/// One point (t, f, x) of a marked Poisson random measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub time: f64,
    pub spindle: Spindle,
    pub mark: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarkedPointMeasure {
    pub points: Vec<Point>,
}

impl MarkedPointMeasure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total time span: the last point time.
    pub fn last_time(&self) -> f64 {
        self.points.last().map(|p| p.time).unwrap_or(0.0)
    }

    /// Rows `time,jump,type,lifetime`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,jump,type,lifetime\n");
        for p in &self.points {
            let z = p.spindle.lifetime();
            let _ = writeln!(s, "{},{},{},{}", p.time, z, p.mark, z);
        }
        s
    }
}

/// The scaffolding determined by a point measure: jumps equal to spindle
/// lifetimes, drift −c_ε. A point at time 0 is an initial spindle and is
/// exempt from the ε floor.
pub fn xi(points: &MarkedPointMeasure, alpha: f64, eps: f64, start: f64, horizon: f64) -> Result<ScaffoldingPath> {
    let tr = Truncation::new(alpha, eps)?;
    let mut jumps = Vec::with_capacity(points.len());
    let mut prev = f64::NEG_INFINITY;
    for p in &points.points {
        let z = p.spindle.lifetime();
        if p.time > 0.0 && z < eps {
            return Err(Error::Consistency(format!(
                "spindle lifetime {z} at time {} is below the truncation floor {eps}",
                p.time
            )));
        }
        if !(p.time > prev) {
            return Err(Error::Consistency("point times must increase strictly".into()));
        }
        prev = p.time;
        jumps.push(Jump { time: p.time, size: z });
    }
    Ok(ScaffoldingPath {
        start,
        jumps,
        drift: tr.drift(),
        horizon,
        elisions: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    Horizon(f64),
    /// First time the path goes strictly below the level.
    Below(f64),
    BelowOrHorizon { level: f64, horizon: f64 },
}

impl StopRule {
    fn level(&self) -> Option<f64> {
        match *self {
            StopRule::Below(l) | StopRule::BelowOrHorizon { level: l, .. } => Some(l),
            StopRule::Horizon(_) => None,
        }
    }

    fn horizon(&self) -> f64 {
        match *self {
            StopRule::Horizon(h) | StopRule::BelowOrHorizon { horizon: h, .. } => h,
            StopRule::Below(_) => f64::INFINITY,
        }
    }
}

/// Offsets (level − birth) of the grid levels strictly inside the spindle.
#[inline]
fn straddled_offsets(grid: &[f64], birth: f64, lifetime: f64, out: &mut Vec<f64>) {
    out.clear();
    let top = birth + lifetime;
    let i0 = grid.partition_point(|&y| y <= birth);
    for &y in &grid[i0..] {
        if y >= top {
            break;
        }
        let o = y - birth;
        if o > 0.0 && o < lifetime && out.last().is_none_or(|&l| o > l) {
            out.push(o);
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|y| !y.is_finite()) {
        return Err(Error::Parameter("level grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Result of running the truncated scaffolding from a given state.
#[derive(Clone, Debug)]
pub(crate) struct Run {
    pub points: MarkedPointMeasure,
    pub births: Vec<f64>,
    pub path: ScaffoldingPath,
    pub end_time: f64,
    pub passed: bool,
    pub max_level: f64,
}

/// Core loop: jumps and drift from (`t0`, `x0`), stopping by `stop`,
/// eliding excursions above `cap`. Points already in `run` are kept.
fn simulate<R: Rng + ?Sized>(
    tr: &Truncation,
    run: &mut Run,
    stop: StopRule,
    cap: Option<f64>,
    grid: &[f64],
    rng: &mut R,
) -> Result<()> {
    let level = stop.level();
    let horizon = stop.horizon();
    let c = tr.compensator;
    let (mut t, mut x) = (run.end_time, run.path.eval_end(run.end_time));
    let mut offs = Vec::new();
    loop {
        let e = tr.waiting_time(rng);
        if let Some(l) = level {
            if x - c * e < l {
                let tp = t + (x - l) / c;
                if tp <= horizon {
                    run.end_time = tp;
                    run.passed = true;
                    run.path.horizon = tp;
                    return Ok(());
                }
            }
        }
        if t + e > horizon {
            run.end_time = horizon;
            run.path.horizon = horizon;
            return Ok(());
        }
        t += e;
        x -= c * e;
        let z = tr.jump_size(rng);
        straddled_offsets(grid, x, z, &mut offs);
        let spindle = excursion_by_lifetime(tr.alpha, z, &offs, rng)?;
        let mark = rng.random::<f64>();
        run.points.points.push(Point { time: t, spindle, mark });
        run.births.push(x);
        run.path.jumps.push(Jump { time: t, size: z });
        x += z;
        run.max_level = run.max_level.max(x);
        if let Some(cap) = cap {
            if x > cap {
                let d = tr.return_time(x - cap, rng)?;
                run.path.elisions.push(Elision {
                    time: t,
                    duration: d,
                    from: x,
                    to: cap,
                });
                t += d;
                x = cap;
                if t > horizon {
                    run.end_time = horizon;
                    run.path.horizon = horizon;
                    return Ok(());
                }
            }
        }
    }
}

impl ScaffoldingPath {
    /// Value at the end of the recorded events (used to resume a run).
    fn eval_end(&self, t: f64) -> f64 {
        if self.jumps.is_empty() && self.elisions.is_empty() {
            return self.start + self.drift * t;
        }
        self.eval(t)
    }
}

/// Points and scaffolding of the ε-truncated PRM started at 0.
/// Spindles are generated at the offsets of `grid` (levels of the path).
pub fn sample_prm<R: Rng + ?Sized>(
    alpha: f64,
    eps: f64,
    stop: StopRule,
    grid: &[f64],
    rng: &mut R,
) -> Result<(MarkedPointMeasure, ScaffoldingPath)> {
    let tr = Truncation::new(alpha, eps)?;
    check_grid(grid)?;
    if stop.horizon().is_infinite() && stop.level().is_none() {
        return Err(Error::Parameter("stop rule never stops".into()));
    }
    let mut run = Run::empty(tr.drift(), 0.0);
    simulate(&tr, &mut run, stop, None, grid, rng)?;
    Ok((run.points, run.path))
}

impl Run {
    fn empty(drift: f64, start: f64) -> Self {
        Self {
            points: MarkedPointMeasure::default(),
            births: Vec::new(),
            path: ScaffoldingPath {
                start,
                jumps: Vec::new(),
                drift,
                horizon: 0.0,
                elisions: Vec::new(),
            },
            end_time: 0.0,
            passed: false,
            max_level: start,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CladeOrigin {
    /// A clade of Q_{b,x}: an initial BESQ_b(−2α) spindle of type x.
    Initial { b: f64, x: f64 },
    /// An excursion of the scaffolding above its running infimum, entered
    /// at the given depth below the start.
    Reflected { depth: f64 },
}

/// A clade: its points in clade time, the levels at which their spindles
/// are born, and its scaffolding (started at 0, ended on returning to 0).
#[derive(Clone, Debug)]
pub struct Clade {
    pub points: MarkedPointMeasure,
    births: Vec<f64>,
    pub scaffolding: ScaffoldingPath,
    pub origin: CladeOrigin,
    /// ζ⁺, the highest level reached. When `elided` is set this is a lower
    /// bound that is exact up to the elision cap.
    pub lifetime: f64,
    /// Duration until the scaffolding returns to 0.
    pub len: f64,
    /// Some excursion above a cap was elided.
    pub elided: bool,
}

impl Clade {
    /// Level X(t−) at which point `i` is born.
    pub fn birth_level(&self, i: usize) -> f64 {
        self.births[i]
    }

    pub fn births(&self) -> &[f64] {
        &self.births
    }

    /// The first point (in time) whose spindle is alive at level `y`,
    /// with the mass it contributes there.
    pub fn leftmost_at(&self, y: f64) -> Result<Option<(usize, f64)>> {
        for (i, p) in self.points.points.iter().enumerate() {
            let b = self.births[i];
            if b <= y && y < b + p.spindle.lifetime() && !(b == y && p.spindle.birth_mass() == 0.0) {
                let v = self.value(i, y)?;
                return Ok(Some((i, v)));
            }
        }
        Ok(None)
    }

    fn value(&self, i: usize, y: f64) -> Result<f64> {
        let p = &self.points.points[i];
        p.spindle.value_at(y - self.births[i]).ok_or_else(|| {
            Error::Evaluation(format!(
                "level {y} was not declared when spindle {i} (born at {}) was generated",
                self.births[i]
            ))
        })
    }

    /// Σ f_t(y − X(t−)) δ(x_t) over the clade's points.
    pub fn superskewer(&self, y: f64) -> Result<AtomicMeasure> {
        let mut atoms = Vec::new();
        for (i, p) in self.points.points.iter().enumerate() {
            let b = self.births[i];
            if b <= y && y < b + p.spindle.lifetime() {
                let v = self.value(i, y)?;
                if v > 0.0 {
                    atoms.push(Atom {
                        mass: v,
                        location: p.mark,
                    });
                }
            }
        }
        Ok(AtomicMeasure::from_atoms_unchecked(atoms, DEFAULT_MASS_FLOOR))
    }

    /// Superskewer atoms at each of the (increasing) `levels`, appended to
    /// `out[j]`; returns the total mass per level.
    pub fn superskewer_atoms(&self, levels: &[f64], out: &mut [Vec<Atom>]) -> Result<Vec<f64>> {
        let mut totals = vec![0.0; levels.len()];
        for (i, p) in self.points.points.iter().enumerate() {
            let b = self.births[i];
            let top = b + p.spindle.lifetime();
            let j0 = levels.partition_point(|&y| y < b);
            for (j, &y) in levels.iter().enumerate().skip(j0) {
                if y >= top {
                    break;
                }
                let v = self.value(i, y)?;
                if v > 0.0 {
                    out[j].push(Atom {
                        mass: v,
                        location: p.mark,
                    });
                    totals[j] += v;
                }
            }
        }
        Ok(totals)
    }

    /// Total superskewer mass at each level.
    pub fn mass_profile(&self, levels: &[f64]) -> Result<Vec<f64>> {
        let mut sink: Vec<Vec<Atom>> = vec![Vec::new(); levels.len()];
        self.superskewer_atoms(levels, &mut sink)
    }
}

/// Sample a clade of Q_{b,x}: an initial BESQ_b(−2α) spindle f of type x
/// at time 0, followed by the truncated PRM with scaffolding started at
/// ζ(f) and stopped on passing below 0. Spindles are generated at the
/// levels of `grid`; with `cap` set, excursions above it are elided.
pub fn sample_clade<R: Rng + ?Sized>(
    alpha: f64,
    b: f64,
    x: f64,
    eps: f64,
    grid: &[f64],
    cap: Option<f64>,
    rng: &mut R,
) -> Result<Clade> {
    let tr = Truncation::new(alpha, eps)?;
    check_grid(grid)?;
    check_param((0.0..=1.0).contains(&x), || format!("type must lie in [0,1], got {x}"))?;
    let offsets: Vec<f64> = grid.iter().copied().filter(|&y| y > 0.0).collect();
    let f = besq_neg_spindle(alpha, b, &offsets, rng)?;
    let z = f.lifetime();
    grow_from_initial(&tr, f, x, CladeOrigin::Initial { b, x }, grid, cap, z, rng)
}

#[allow(clippy::too_many_arguments)]
fn grow_from_initial<R: Rng + ?Sized>(
    tr: &Truncation,
    f: Spindle,
    mark: f64,
    origin: CladeOrigin,
    grid: &[f64],
    cap: Option<f64>,
    z: f64,
    rng: &mut R,
) -> Result<Clade> {
    let mut run = Run::empty(tr.drift(), 0.0);
    run.points.points.push(Point { time: 0.0, spindle: f, mark });
    run.births.push(0.0);
    run.path.jumps.push(Jump { time: 0.0, size: z });
    run.max_level = z;
    let mut elided = false;
    let cap = cap.map(|c| c.max(0.0));
    if let Some(c) = cap {
        if z > c {
            let d = tr.return_time(z - c, rng)?;
            run.path.elisions.push(Elision {
                time: 0.0,
                duration: d,
                from: z,
                to: c,
            });
            run.end_time = d;
            elided = true;
        }
    }
    simulate(tr, &mut run, StopRule::Below(0.0), cap, grid, rng)?;
    elided |= !run.path.elisions.is_empty();
    Ok(Clade {
        points: run.points,
        births: run.births,
        len: run.end_time,
        lifetime: run.max_level,
        scaffolding: run.path,
        origin,
        elided,
    })
}

/// The clade c ⊛ V: point times ×c^{1+α}, spindles s ↦ c f(s/c).
pub fn scale_clade(c: f64, clade: &Clade, alpha: f64) -> Result<Clade> {
    check_param(c > 0.0 && c.is_finite(), || format!("scale must be positive, got {c}"))?;
    check_alpha(alpha)?;
    if c == 1.0 {
        return Ok(clade.clone());
    }
    let tc = c.powf(1.0 + alpha);
    let points = MarkedPointMeasure {
        points: clade
            .points
            .points
            .iter()
            .map(|p| Point {
                time: tc * p.time,
                spindle: p.spindle.scaled(c),
                mark: p.mark,
            })
            .collect(),
    };
    let s = &clade.scaffolding;
    let scaffolding = ScaffoldingPath {
        start: c * s.start,
        jumps: s.jumps.iter().map(|j| Jump { time: tc * j.time, size: c * j.size }).collect(),
        drift: s.drift * c / tc,
        horizon: tc * s.horizon,
        elisions: s
            .elisions
            .iter()
            .map(|e| Elision {
                time: tc * e.time,
                duration: tc * e.duration,
                from: c * e.from,
                to: c * e.to,
            })
            .collect(),
    };
    let origin = match clade.origin {
        CladeOrigin::Initial { b, x } => CladeOrigin::Initial { b: c * b, x },
        CladeOrigin::Reflected { depth } => CladeOrigin::Reflected { depth: c * depth },
    };
    Ok(Clade {
        points,
        births: clade.births.iter().map(|b| c * b).collect(),
        scaffolding,
        origin,
        lifetime: c * clade.lifetime,
        len: tc * clade.len,
        elided: clade.elided,
    })
}

/// Split a path started at 0 into its excursions above the running
/// infimum. Each excursion becomes a clade at depth −(infimum at its start)
/// in its own coordinates (time and level measured from its start). The
/// final excursion, if still open at the horizon, is omitted.
pub fn reflected_clades(points: &MarkedPointMeasure, path: &ScaffoldingPath) -> Result<Vec<(f64, Clade)>> {
    if path.start != 0.0 {
        return Err(Error::Parameter("reflected decomposition needs a path started at 0".into()));
    }
    if !path.elisions.is_empty() {
        return Err(Error::Parameter("reflected decomposition needs a path without elisions".into()));
    }
    if points.len() != path.jumps.len() {
        return Err(Error::Consistency("points and path jumps differ in number".into()));
    }
    let c = -path.drift;
    let mut out = Vec::new();
    let (mut x, mut inf, mut now) = (0.0f64, 0.0f64, 0.0f64);
    // (start index, start time, base level, running max)
    let mut open: Option<(usize, f64, f64, f64)> = None;
    let close = |open: (usize, f64, f64, f64), end_idx: usize, end_time: f64, out: &mut Vec<(f64, Clade)>| {
        let (i0, t0, base, max) = open;
        let pts: Vec<Point> = points.points[i0..end_idx]
            .iter()
            .map(|p| Point {
                time: p.time - t0,
                spindle: p.spindle.clone(),
                mark: p.mark,
            })
            .collect();
        let mut births = Vec::with_capacity(pts.len());
        // recompute births from the path to stay consistent with the caller's grid
        let mut xx = base;
        let mut tt = t0;
        for p in &points.points[i0..end_idx] {
            xx += path.drift * (p.time - tt);
            tt = p.time;
            births.push(xx - base);
            xx += p.spindle.lifetime();
        }
        let jumps = pts.iter().map(|p| Jump { time: p.time, size: p.spindle.lifetime() }).collect();
        out.push((
            -base,
            Clade {
                points: MarkedPointMeasure { points: pts },
                births,
                scaffolding: ScaffoldingPath {
                    start: 0.0,
                    jumps,
                    drift: path.drift,
                    horizon: end_time - t0,
                    elisions: Vec::new(),
                },
                origin: CladeOrigin::Reflected { depth: -base },
                lifetime: max - base,
                len: end_time - t0,
                elided: false,
            },
        ));
    };
    for (i, j) in path.jumps.iter().enumerate() {
        let dt = j.time - now;
        if let Some(o) = open {
            if x - c * dt <= o.2 {
                let end = now + (x - o.2) / c;
                close(o, i, end, &mut out);
                open = None;
                x = o.2;
                inf = o.2;
                let rest = dt - (end - now);
                x -= c * rest;
                inf = inf.min(x);
            } else {
                x -= c * dt;
            }
        } else {
            x -= c * dt;
            inf = x;
        }
        now = j.time;
        if open.is_none() {
            open = Some((i, now, inf, inf));
        }
        x += j.size;
        if let Some(o) = open.as_mut() {
            o.3 = o.3.max(x);
        }
    }
    if let Some(o) = open {
        let dt = path.horizon - now;
        if x - c * dt <= o.2 {
            close(o, path.jumps.len(), now + (x - o.2) / c, &mut out);
        }
    }
    Ok(out)
}

/// Controls for [`run_reflected`].
#[derive(Clone, Debug)]
pub struct ReflectedOptions {
    /// Run until the scaffolding first passes below −depth.
    pub depth: f64,
    /// Levels at which superskewers will be read. A clade entering at depth
    /// z gets spindles generated at internal levels y − z for y > z.
    pub levels: Vec<f64>,
    /// Elide excursions of a clade at depth z above internal level
    /// (top level − z).
    pub cap_at_top_level: bool,
    /// Close a clade early once its height reaches `.0` and it has lasted
    /// `.1`; the rest of its excursion is elided.
    pub finish_when: Option<(f64, f64)>,
    /// Each clade is retained independently with this probability.
    pub keep_probability: f64,
}

impl ReflectedOptions {
    pub fn new(depth: f64, levels: Vec<f64>) -> Self {
        Self {
            depth,
            levels,
            cap_at_top_level: true,
            finish_when: None,
            keep_probability: 1.0,
        }
    }
}

/// Aggregate information on a reflected run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectedSummary {
    /// First passage time below −depth (elided stretches included).
    pub passage_time: f64,
    pub clades: usize,
    pub kept: usize,
}

struct OpenClade {
    depth: f64,
    base: f64,
    t0: f64,
    keep: bool,
    grid: Vec<f64>,
    cap: Option<f64>,
    run: Run,
    elided: bool,
}

impl OpenClade {
    fn into_clade(self, end_time: f64) -> (f64, Clade) {
        let mut run = self.run;
        run.path.horizon = end_time - self.t0;
        (
            self.depth,
            Clade {
                points: run.points,
                births: run.births,
                scaffolding: run.path,
                origin: CladeOrigin::Reflected { depth: self.depth },
                lifetime: run.max_level,
                len: end_time - self.t0,
                elided: self.elided,
            },
        )
    }
}

/// Stream the excursions above the running infimum of the truncated PRM
/// started at 0, calling `on_clade(depth, clade)` for every retained clade
/// as soon as it closes. Internal levels of a clade are measured from its
/// base; the entry level associated with depth z is z itself.
pub fn run_reflected<R: Rng + ?Sized, F: FnMut(f64, Clade) -> Result<()>>(
    alpha: f64,
    eps: f64,
    opts: &ReflectedOptions,
    rng: &mut R,
    mut on_clade: F,
) -> Result<ReflectedSummary> {
    let tr = Truncation::new(alpha, eps)?;
    check_grid(&opts.levels)?;
    check_param(opts.depth > 0.0, || format!("depth must be positive, got {}", opts.depth))?;
    check_param((0.0..=1.0).contains(&opts.keep_probability), || "keep probability must lie in [0,1]".into())?;
    let c = tr.compensator;
    let top = opts.levels.last().copied();
    let (mut t, mut x, mut inf) = (0.0f64, 0.0f64, 0.0f64);
    let mut open: Option<OpenClade> = None;
    let mut summary = ReflectedSummary {
        passage_time: 0.0,
        clades: 0,
        kept: 0,
    };
    let mut offs = Vec::new();
    loop {
        let mut e = tr.waiting_time(rng);
        if let Some(oc) = open.as_ref() {
            if x - c * e <= inf {
                let end = t + (x - inf) / c;
                let oc = open.take().expect("open clade");
                if oc.keep {
                    let (d, clade) = oc.into_clade(end);
                    on_clade(d, clade)?;
                }
                e -= end - t;
                t = end;
                x = inf;
            } else {
                let _ = oc;
            }
        }
        if open.is_none() {
            // drifting along the infimum
            if x - c * e < -opts.depth {
                summary.passage_time = t + (x + opts.depth) / c;
                return Ok(summary);
            }
            t += e;
            x -= c * e;
            inf = x;
            let depth = -inf;
            summary.clades += 1;
            let keep = opts.keep_probability >= 1.0 || rng.random::<f64>() < opts.keep_probability;
            if keep {
                summary.kept += 1;
            }
            let grid: Vec<f64> = if keep {
                opts.levels.iter().filter(|&&y| y > depth).map(|&y| y - depth).collect()
            } else {
                Vec::new()
            };
            let cap = match (opts.cap_at_top_level, top) {
                (true, Some(tp)) => Some((tp - depth).max(0.0)),
                _ => None,
            };
            open = Some(OpenClade {
                depth,
                base: inf,
                t0: t,
                keep,
                grid,
                cap,
                run: Run::empty(tr.drift(), 0.0),
                elided: false,
            });
        } else {
            t += e;
            x -= c * e;
        }
        let oc = open.as_mut().expect("open clade");
        let z = tr.jump_size(rng);
        let birth = x - oc.base;
        straddled_offsets(&oc.grid, birth, z, &mut offs);
        let spindle = excursion_by_lifetime(alpha, z, &offs, rng)?;
        let mark = rng.random::<f64>();
        let rel = t - oc.t0;
        oc.run.points.points.push(Point { time: rel, spindle, mark });
        oc.run.births.push(birth);
        oc.run.path.jumps.push(Jump { time: rel, size: z });
        x += z;
        let h = x - oc.base;
        oc.run.max_level = oc.run.max_level.max(h);
        let finish = match opts.finish_when {
            Some((hd, td)) => oc.run.max_level >= hd && rel >= td,
            None => false,
        } || !oc.keep;
        if finish {
            let d = tr.return_time(h, rng)?;
            oc.run.path.elisions.push(Elision {
                time: rel,
                duration: d,
                from: h,
                to: 0.0,
            });
            oc.elided = true;
            t += d;
            x = oc.base;
            let oc = open.take().expect("open clade");
            if oc.keep {
                let (dd, clade) = oc.into_clade(t);
                on_clade(dd, clade)?;
            }
            continue;
        }
        if let Some(cap) = oc.cap {
            if h > cap {
                let d = tr.return_time(h - cap, rng)?;
                oc.run.path.elisions.push(Elision {
                    time: rel,
                    duration: d,
                    from: h,
                    to: cap,
                });
                oc.elided = true;
                t += d;
                x = oc.base + cap;
            }
        }
    }
}

/// Rejection sampler for a reflected clade conditioned to exceed level y:
/// start with a jump to `a0` carried by an excursion of lifetime `a0`, run
/// the truncated PRM until the scaffolding passes below 0, and accept if
/// the clade rose above `y`. Returns the clade and the number of attempts.
pub fn sample_reflected_clade_conditioned<R: Rng + ?Sized>(
    alpha: f64,
    y: f64,
    eps: f64,
    a0: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<(Clade, u64)> {
    let tr = Truncation::new(alpha, eps)?;
    check_grid(grid)?;
    check_param(a0 > 0.0 && a0 < y, || format!("need 0 < a0 < y, got a0 = {a0}, y = {y}"))?;
    let cap = grid.last().copied().unwrap_or(y).max(y);
    let mut offs = Vec::new();
    let mut attempts = 0u64;
    loop {
        attempts += 1;
        straddled_offsets(grid, 0.0, a0, &mut offs);
        let f = excursion_by_lifetime(alpha, a0, &offs, rng)?;
        let mark = rng.random::<f64>();
        let clade = grow_from_initial(&tr, f, mark, CladeOrigin::Reflected { depth: 0.0 }, grid, Some(cap), a0, rng)?;
        if clade.lifetime > y {
            return Ok((clade, attempts));
        }
    }
}

/// Evaluate `statistic` at ε, ε/2, ..., ε/2^{k−1}.
pub fn eps_halving<F: FnMut(f64) -> Result<f64>>(eps: f64, k: usize, mut statistic: F) -> Result<Vec<(f64, f64)>> {
    (0..k)
        .map(|i| {
            let e = eps / 2f64.powi(i as i32);
            statistic(e).map(|v| (e, v))
        })
        .collect()
}
