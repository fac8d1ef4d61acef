//! De-Poissonization of SSSP paths into FV(α,θ), the Shiga projection and
//! the Gamma identity driving the immigration entrance law.

use rand::Rng;

use crate::error::{check_param, Error, Result};
use crate::measures::{Atom, AtomicMeasure, MeasurePath, DEFAULT_MASS_FLOOR};
use crate::randcore::{beta, exponential};
use crate::sssp::{sssp_path, SsspPath};

/// Mass below this fraction of the initial mass ends de-Poissonization.
pub const EXTINCTION_FRACTION: f64 = 1e-6;

/// The clock u(y) = ∫_0^y ‖π^z‖^{−1} dz on a level grid and its inverse ρ.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChange {
    pub y_grid: Vec<f64>,
    /// u(y_j) for each grid level.
    pub u_grid: Vec<f64>,
}

impl TimeChange {
    /// Integrates 1/m for m linear between grid masses, which is the limit
    /// of the trapezoid rule under unbounded local refinement.
    pub fn from_masses(levels: &[f64], masses: &[f64]) -> Result<Self> {
        check_param(levels.len() == masses.len() && !levels.is_empty(), || {
            "levels and masses must be nonempty and of equal length".into()
        })?;
        if !(masses[0] > 0.0) {
            return Err(Error::Domain("the time change needs positive initial mass".into()));
        }
        let mut u = vec![0.0];
        for j in 1..levels.len() {
            let (a, b) = (masses[j - 1], masses[j]);
            check_param(b > 0.0, || format!("mass vanishes at level {}", levels[j]))?;
            let dy = levels[j] - levels[j - 1];
            let rel = (b - a) / a;
            let piece = if rel.abs() < 1e-8 {
                dy / a * (1.0 - 0.5 * rel)
            } else {
                dy * (b / a).ln() / (b - a)
            };
            u.push(u[j - 1] + piece);
        }
        Ok(Self {
            y_grid: levels.to_vec(),
            u_grid: u,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.u_grid.last().expect("nonempty")
    }

    /// ρ(u) by linear interpolation of the inverse; `None` beyond the
    /// covered horizon.
    pub fn rho(&self, u: f64) -> Option<f64> {
        if u < 0.0 || u > self.horizon() {
            return None;
        }
        let k = self.u_grid.partition_point(|&v| v < u);
        if k == 0 {
            return Some(self.y_grid[0]);
        }
        let (u0, u1) = (self.u_grid[k - 1], self.u_grid[k]);
        let (y0, y1) = (self.y_grid[k - 1], self.y_grid[k]);
        Some(y0 + (y1 - y0) * (u - u0) / (u1 - u0))
    }

    fn nearest_level(&self, y: f64) -> usize {
        let k = self.y_grid.partition_point(|&v| v < y);
        if k == 0 {
            0
        } else if k == self.y_grid.len() || y - self.y_grid[k - 1] <= self.y_grid[k] - y {
            k - 1
        } else {
            k
        }
    }
}

/// An FV path on a u-grid, possibly cut short.
#[derive(Clone, Debug, PartialEq)]
pub struct FvPath {
    pub path: MeasurePath,
    pub time_change: TimeChange,
    /// The whole requested u-grid was reached.
    pub complete: bool,
}

/// Normalize the states of `path` read at levels ρ(u) for u in `u_grid`.
/// The path is cut at the first level where its mass falls below
/// [`EXTINCTION_FRACTION`] of the initial mass; u-levels beyond the
/// resulting horizon are omitted and flagged.
pub fn depoissonize(path: &MeasurePath, u_grid: &[f64]) -> Result<FvPath> {
    let masses = path.mass_trace();
    if !(masses[0] > 0.0) {
        return Err(Error::Domain("cannot de-Poissonize a path with zero initial mass".into()));
    }
    check_param(u_grid.first() == Some(&0.0) && u_grid.windows(2).all(|w| w[0] < w[1]), || {
        "u-grid must start at 0 and increase strictly".into()
    })?;
    let floor = EXTINCTION_FRACTION * masses[0];
    let usable = masses.iter().position(|&m| m < floor).unwrap_or(masses.len());
    let tc = TimeChange::from_masses(&path.levels()[..usable], &masses[..usable])?;
    let mut states = Vec::new();
    let mut us = Vec::new();
    for &u in u_grid {
        let Some(y) = tc.rho(u) else { break };
        let j = tc.nearest_level(y);
        states.push(path.states()[j].normalize()?);
        us.push(u);
    }
    let complete = us.len() == u_grid.len();
    Ok(FvPath {
        path: MeasurePath::new(us, states, path.meta)?,
        time_change: tc,
        complete,
    })
}

/// FV(α,θ) started from the unit-mass `pi`: simulate SSSP on a level grid
/// of spacing `dy`, extending it by the Markov property until ρ covers the
/// u-grid or the mass dies out. The truncation `eps` applies relative to
/// the total mass at the start of each extension.
pub fn fv_path<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    pi: &AtomicMeasure,
    u_grid: &[f64],
    dy: f64,
    eps: f64,
    rng: &mut R,
) -> Result<FvPath> {
    check_param((pi.total_mass() - 1.0).abs() < 1e-9, || {
        format!("initial state must have unit mass, got {}", pi.total_mass())
    })?;
    check_param(dy > 0.0, || format!("level spacing must be positive, got {dy}"))?;
    let u_max = *u_grid.last().ok_or_else(|| Error::Parameter("empty u-grid".into()))?;
    let mut levels = vec![0.0];
    let mut states = vec![pi.clone()];
    let mut clock = 0.0;
    loop {
        let last = states.last().expect("nonempty").clone();
        let m = last.total_mass();
        if m < EXTINCTION_FRACTION || clock >= u_max {
            break;
        }
        // enough levels for the remaining clock if the mass stayed put
        let span = ((u_max - clock) * m).max(dy) * 1.2;
        let steps = (span / dy).ceil() as usize;
        let seg: Vec<f64> = (0..=steps).map(|i| i as f64 * dy).collect();
        // Run the segment from the unit-mass state on levels divided by m
        // and scale back: equal in law by self-similarity, and it keeps
        // the truncation relative to the current mass.
        let unit_seg: Vec<f64> = seg.iter().map(|s| s / m).collect();
        let p = sssp_path(alpha, theta, &last.scale(1.0 / m), &unit_seg, eps, rng)?.path;
        let base = *levels.last().expect("nonempty");
        let bits = TimeChange::from_masses(&unit_seg, p.mass_trace()).map(|t| t.horizon());
        for (j, &s) in seg.iter().enumerate().skip(1) {
            levels.push(base + s);
            states.push(p.states()[j].scale(m));
        }
        match bits {
            Ok(h) => clock += h,
            Err(_) => break,
        }
    }
    let full = MeasurePath::new(levels, states, crate::measures::PathMeta {
        alpha,
        theta,
        eps: Some(eps),
        seed: None,
    })?;
    depoissonize(&full, u_grid)
}

/// Replace each clade's superskewer by one atom at its representative
/// type carrying the clade's total mass. Total mass is preserved at every
/// level and the result is an SSSP(0,θ) path coupled to the input.
pub fn shiga_project(p: &SsspPath) -> Result<MeasurePath> {
    let n = p.path.levels().len();
    if p.clades.is_empty() && p.path.mass_trace().iter().any(|&m| m > 0.0) {
        return Err(Error::Domain("path carries no clade bookkeeping".into()));
    }
    let mut per_level: Vec<Vec<Atom>> = vec![Vec::new(); n];
    for c in &p.clades {
        check_param(c.masses.len() == n, || "clade trace does not match the grid".into())?;
        for (j, &m) in c.masses.iter().enumerate() {
            if m > 0.0 {
                per_level[j].push(Atom {
                    mass: m,
                    location: c.representative,
                });
            }
        }
    }
    let states = per_level
        .into_iter()
        .map(|a| AtomicMeasure::from_atoms_unchecked(a, DEFAULT_MASS_FLOOR))
        .collect();
    MeasurePath::new(p.path.levels().to_vec(), states, p.path.meta)
}

/// Largest total-variation distance between consecutive states.
pub fn max_tv_jump(path: &MeasurePath) -> f64 {
    path.states()
        .windows(2)
        .map(|w| w[0].tv_distance(&w[1]))
        .fold(0.0, f64::max)
}

/// J_n = E_n Π_{i≤n} B_i with E_n ~ Exponential(ρ), B_i ~ Beta(θ,1),
/// until the running product drops below `tail`.
pub fn gamma_identity_sequence<R: Rng + ?Sized>(theta: f64, rho: f64, tail: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_param(theta > 0.0 && rho > 0.0, || format!("need theta, rho > 0, got {theta}, {rho}"))?;
    check_param(tail > 0.0 && tail < 1.0, || "tail must lie in (0,1)".into())?;
    let mut prod = 1.0;
    let mut out = Vec::new();
    while prod > tail {
        prod *= beta(theta, 1.0, rng)?;
        out.push(exponential(rho, rng)? * prod);
    }
    Ok(out)
}
