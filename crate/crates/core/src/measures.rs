//! Finite purely atomic measures on the type space [0,1].

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::fmt::Write as _;

use crate::error::{check_param, Error, Result};

/// Relative mass below which atoms are discarded on construction.
pub const DEFAULT_MASS_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub location: f64,
}

/// A finite measure Σ mᵢ δ(xᵢ) on [0,1].
///
/// Atoms are kept sorted by location. Two atoms are the same atom only if
/// their locations are bitwise equal; atoms supplied with equal locations
/// are merged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn zero() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Build from `(mass, location)` pairs with the default relative floor.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::with_floor(atoms, DEFAULT_MASS_FLOOR)
    }

    pub fn with_floor(atoms: impl IntoIterator<Item = (f64, f64)>, floor: f64) -> Result<Self> {
        check_param(floor >= 0.0, || format!("mass floor must be non-negative, got {floor}"))?;
        let mut v: Vec<Atom> = Vec::new();
        for (mass, location) in atoms {
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(Error::Domain(format!("atom mass must be finite and >= 0, got {mass}")));
            }
            if !(0.0..=1.0).contains(&location) {
                return Err(Error::Domain(format!("atom location must lie in [0,1], got {location}")));
            }
            if mass > 0.0 {
                v.push(Atom { mass, location });
            }
        }
        Ok(Self::from_atoms_unchecked(v, floor))
    }

    /// Trusted constructor for atoms produced inside the crate.
    pub(crate) fn from_atoms_unchecked(mut v: Vec<Atom>, floor: f64) -> Self {
        v.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut merged: Vec<Atom> = Vec::with_capacity(v.len());
        for a in v {
            match merged.last_mut() {
                Some(last) if last.location == a.location => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        let total: f64 = merged.iter().map(|a| a.mass).sum();
        let cut = floor * total;
        merged.retain(|a| a.mass > cut && a.mass > 0.0);
        Self { atoms: merged }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Mass of the atom at exactly `location`, or 0.
    pub fn mass_at(&self, location: f64) -> f64 {
        self.atoms
            .binary_search_by(|a| a.location.total_cmp(&location))
            .map(|i| self.atoms[i].mass)
            .unwrap_or(0.0)
    }

    /// The probability measure π/‖π‖.
    pub fn normalize(&self) -> Result<Self> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(Error::Domain("cannot normalize the zero measure".into()));
        }
        Ok(self.scale(1.0 / m))
    }

    pub fn scale(&self, c: f64) -> Self {
        if c <= 0.0 {
            return Self::zero();
        }
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    mass: a.mass * c,
                    location: a.location,
                })
                .collect(),
        }
    }

    /// The sum of two measures; atoms at equal locations add.
    pub fn add(&self, other: &Self) -> Self {
        let mut v = self.atoms.clone();
        v.extend_from_slice(&other.atoms);
        Self::from_atoms_unchecked(v, DEFAULT_MASS_FLOOR)
    }

    /// The `k` largest masses in decreasing order, padded with zeros.
    pub fn ranked_masses(&self, k: usize) -> Vec<f64> {
        let mut m: Vec<f64> = self.atoms.iter().map(|a| a.mass).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        m.resize(k, 0.0);
        m
    }

    pub fn max_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).fold(0.0, f64::max)
    }

    pub fn count_above(&self, h: f64) -> usize {
        self.atoms.iter().filter(|a| a.mass > h).count()
    }

    /// An atom chosen with probability proportional to its mass.
    pub fn size_biased_pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Atom> {
        let total = self.total_mass();
        if total <= 0.0 {
            return Err(Error::Domain("size-biased pick from the zero measure".into()));
        }
        let u = rng.random::<f64>() * total;
        let mut cum = 0.0;
        for a in &self.atoms {
            cum += a.mass;
            if u < cum {
                return Ok(*a);
            }
        }
        Ok(*self.atoms.last().expect("non-empty"))
    }

    /// Γ(1−α) h^α #{atoms of mass > h}.
    pub fn alpha_diversity(&self, alpha: f64, h: f64) -> Result<f64> {
        check_param(alpha > 0.0 && alpha < 1.0, || format!("alpha must lie in (0,1), got {alpha}"))?;
        check_param(h > 0.0, || format!("h must be positive, got {h}"))?;
        Ok(gamma(1.0 - alpha) * h.powf(alpha) * self.count_above(h) as f64)
    }

    /// Σₓ |π{x} − π′{x}| over the union of atom locations.
    ///
    /// This is the sup over Borel B of |π(B)−π′(B)| + |π(Bᶜ)−π′(Bᶜ)|, so
    /// two unit atoms at different locations are at distance 2.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        let (a, b) = (&self.atoms, &other.atoms);
        let (mut i, mut j) = (0, 0);
        let mut d = 0.0;
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].location < b[j].location) {
                d += a[i].mass;
                i += 1;
            } else if i == a.len() || b[j].location < a[i].location {
                d += b[j].mass;
                j += 1;
            } else {
                d += (a[i].mass - b[j].mass).abs();
                i += 1;
                j += 1;
            }
        }
        d
    }

    /// CSV with header `mass,location`; floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mass,location\n");
        for a in &self.atoms {
            let _ = writeln!(s, "{},{}", a.mass, a.location);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("mass")) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.ok_or_else(|| Error::Format(format!("line {}: expected two fields", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            };
            let mass = parse(parts.next())?;
            let location = parse(parts.next())?;
            atoms.push((mass, location));
        }
        Self::with_floor(atoms, 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("atoms serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let atoms: Vec<Atom> = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::with_floor(atoms.into_iter().map(|a| (a.mass, a.location)), 0.0)
    }
}

/// Parameters recorded alongside a simulated path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub alpha: f64,
    pub theta: f64,
    /// Spindle truncation of a pathwise simulation; `None` for kernel chains.
    pub eps: Option<f64>,
    pub seed: Option<u64>,
}

/// A measure-valued path observed on an increasing grid of levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurePath {
    levels: Vec<f64>,
    states: Vec<AtomicMeasure>,
    mass_trace: Vec<f64>,
    pub meta: PathMeta,
}

impl MeasurePath {
    pub fn new(levels: Vec<f64>, states: Vec<AtomicMeasure>, meta: PathMeta) -> Result<Self> {
        check_param(levels.len() == states.len(), || {
            format!("{} levels but {} states", levels.len(), states.len())
        })?;
        check_param(levels.first() == Some(&0.0), || "level grid must start at 0".into())?;
        check_param(levels.windows(2).all(|w| w[0] < w[1]), || {
            "level grid must be strictly increasing".into()
        })?;
        let mass_trace = states.iter().map(AtomicMeasure::total_mass).collect();
        Ok(Self {
            levels,
            states,
            mass_trace,
            meta,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn states(&self) -> &[AtomicMeasure] {
        &self.states
    }

    pub fn mass_trace(&self) -> &[f64] {
        &self.mass_trace
    }

    pub fn state_at(&self, level: f64) -> Option<&AtomicMeasure> {
        self.levels.iter().position(|&y| y == level).map(|j| &self.states[j])
    }

    /// Level-wise sum with a path on the same grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_param(self.levels == other.levels, || "paths live on different grids".into())?;
        let states = self.states.iter().zip(&other.states).map(|(a, b)| a.add(b)).collect();
        Self::new(self.levels.clone(), states, self.meta)
    }

    /// Rows `level,mass,location`, one per atom.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,mass,location\n");
        for (y, st) in self.levels.iter().zip(&self.states) {
            for a in st.atoms() {
                let _ = writeln!(s, "{y},{},{}", a.mass, a.location);
            }
        }
        s
    }

    /// Rows `level,total_mass,atoms`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("level,total_mass,atoms\n");
        for ((y, m), st) in self.levels.iter().zip(&self.mass_trace).zip(&self.states) {
            let _ = writeln!(s, "{y},{m},{}", st.len());
        }
        s
    }
}
