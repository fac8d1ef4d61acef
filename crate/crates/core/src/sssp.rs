//! Pathwise SSSP(α,θ): superskewers of independent clades, one per initial
//! atom, plus immigration built from excursions of the reflected
//! scaffolding attached at their depths.

use rand::Rng;

use crate::besq::besq_neg_spindle;
use crate::error::{check_alpha, check_param, Result};
use crate::measures::{Atom, AtomicMeasure, PathMeta, DEFAULT_MASS_FLOOR};
use crate::scaffolding::{run_reflected, sample_clade, Clade, CladeOrigin, ReflectedOptions};

pub use crate::measures::MeasurePath;

/// Total superskewer mass of one clade across the path's levels.
#[derive(Clone, Debug, PartialEq)]
pub struct CladeTrace {
    pub origin: CladeOrigin,
    /// Uniform type standing for the whole clade; the initial type for
    /// clades of initial atoms.
    pub representative: f64,
    pub masses: Vec<f64>,
}

/// A measure path together with its decomposition into clades.
#[derive(Clone, Debug, PartialEq)]
pub struct SsspPath {
    pub path: MeasurePath,
    pub clades: Vec<CladeTrace>,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    check_param(levels.first() == Some(&0.0), || "level grid must start at 0".into())?;
    check_param(levels.windows(2).all(|w| w[0] < w[1]), || "level grid must be strictly increasing".into())?;
    Ok(())
}

fn meta(alpha: f64, theta: f64, eps: f64) -> PathMeta {
    PathMeta {
        alpha,
        theta,
        eps: Some(eps),
        seed: None,
    }
}

/// Superskewers of `clade` at internal levels `levels[j0..] − shift`,
/// appended to `out[j0..]`.
fn collect(clade: &Clade, levels: &[f64], shift: f64, out: &mut [Vec<Atom>]) -> Result<Vec<f64>> {
    let j0 = levels.partition_point(|&y| y <= shift);
    let internal: Vec<f64> = levels[j0..].iter().map(|&y| y - shift).collect();
    let part = clade.superskewer_atoms(&internal, &mut out[j0..])?;
    let mut masses = vec![0.0; levels.len()];
    masses[j0..].copy_from_slice(&part);
    Ok(masses)
}

fn assemble(levels: &[f64], first: AtomicMeasure, atoms: Vec<Vec<Atom>>, meta: PathMeta) -> Result<MeasurePath> {
    let mut states = Vec::with_capacity(levels.len());
    states.push(first);
    for a in atoms.into_iter().skip(1) {
        states.push(AtomicMeasure::from_atoms_unchecked(a, DEFAULT_MASS_FLOOR));
    }
    MeasurePath::new(levels.to_vec(), states, meta)
}

/// SSSP_π(α,0): an independent Q_{b,x} clade for every atom b δ(x) of π.
pub fn sssp_pathwise_a0<R: Rng + ?Sized>(
    alpha: f64,
    pi: &AtomicMeasure,
    levels: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<SsspPath> {
    check_alpha(alpha)?;
    check_levels(levels)?;
    let grid = &levels[1..];
    let cap = grid.last().copied();
    let mut atoms: Vec<Vec<Atom>> = vec![Vec::new(); levels.len()];
    let mut clades = Vec::with_capacity(pi.len());
    if cap.is_some() {
        for a in pi.atoms() {
            let clade = sample_clade(alpha, a.mass, a.location, eps, grid, cap, rng)?;
            let mut masses = vec![a.mass];
            masses.extend(clade.superskewer_atoms(grid, &mut atoms[1..])?);
            clades.push(CladeTrace {
                origin: clade.origin,
                representative: a.location,
                masses,
            });
        }
    }
    Ok(SsspPath {
        path: assemble(levels, pi.clone(), atoms, meta(alpha, 0.0, eps))?,
        clades,
    })
}

/// SSSP_0(α,θ) by immigration. θ = mα + θ′ with θ′ ∈ (0, α]: m reflected
/// PRMs keep all their clades and one more keeps each clade with
/// probability θ′/α. Each PRM runs until its scaffolding passes below
/// −(top level); a clade entering at depth z contributes its superskewer
/// at internal level y − z to level y.
pub fn sssp_immigration<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    levels: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<SsspPath> {
    check_alpha(alpha)?;
    check_param(theta > 0.0 && theta.is_finite(), || format!("theta must be positive, got {theta}"))?;
    check_levels(levels)?;
    let mut atoms: Vec<Vec<Atom>> = vec![Vec::new(); levels.len()];
    let mut clades = Vec::new();
    let y_max = *levels.last().expect("nonempty grid");
    if y_max > 0.0 {
        let m = ((theta / alpha).ceil() as usize).max(1) - 1;
        let rest = theta - m as f64 * alpha;
        for copy in 0..=m {
            let mut opts = ReflectedOptions::new(y_max, levels.to_vec());
            if copy == m {
                opts.keep_probability = (rest / alpha).min(1.0);
            }
            run_reflected(alpha, eps, &opts, rng, |depth, clade| {
                let masses = collect(&clade, levels, depth, &mut atoms)?;
                if masses.iter().any(|&v| v > 0.0) {
                    clades.push(CladeTrace {
                        origin: clade.origin,
                        representative: clade.points.points[0].mark,
                        masses,
                    });
                }
                Ok(())
            })?;
        }
    }
    Ok(SsspPath {
        path: assemble(levels, AtomicMeasure::zero(), atoms, meta(alpha, theta, eps))?,
        clades,
    })
}

/// SSSP_π(α,θ): clades of π plus independent immigration.
pub fn sssp_path<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    pi: &AtomicMeasure,
    levels: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<SsspPath> {
    check_param(theta >= 0.0, || format!("theta must be non-negative, got {theta}"))?;
    let mut out = sssp_pathwise_a0(alpha, pi, levels, eps, rng)?;
    if theta > 0.0 {
        let imm = sssp_immigration(alpha, theta, levels, eps, rng)?;
        out.path = out.path.add(&imm.path)?;
        out.path.meta.theta = theta;
        out.clades.extend(imm.clades);
    }
    Ok(out)
}

/// SSSP_{bδ(x)}(α,0) built as a BESQ_b(−2α) spindle of type x, an
/// independent SSSP_0(α,α) up to the spindle's death level ζ, and
/// SSSP_λ(α,0) afterwards from the immigrants' state λ at ζ.
pub fn emigration_immigration_path<R: Rng + ?Sized>(
    alpha: f64,
    b: f64,
    x: f64,
    levels: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<MeasurePath> {
    check_levels(levels)?;
    check_param((0.0..=1.0).contains(&x), || format!("type must lie in [0,1], got {x}"))?;
    let f = besq_neg_spindle(alpha, b, &levels[1..], rng)?;
    let zeta = f.lifetime();
    let split = levels.partition_point(|&y| y < zeta);
    let mut before: Vec<f64> = levels[..split].to_vec();
    before.push(zeta);
    let imm = sssp_immigration(alpha, alpha, &before, eps, rng)?;
    let lambda = imm.path.states().last().expect("state at zeta").clone();
    let mut after = vec![0.0];
    after.extend(levels[split..].iter().map(|&y| y - zeta).filter(|&s| s > 0.0));
    let tail = sssp_pathwise_a0(alpha, &lambda, &after, eps, rng)?;
    let mut states = Vec::with_capacity(levels.len());
    for (j, &y) in levels.iter().enumerate() {
        if j < split {
            let mut atoms = imm.path.states()[j].atoms().to_vec();
            if let Some(v) = f.value_at(y) {
                if v > 0.0 {
                    atoms.push(Atom { mass: v, location: x });
                }
            }
            states.push(AtomicMeasure::from_atoms_unchecked(atoms, DEFAULT_MASS_FLOOR));
        } else if y == zeta {
            states.push(lambda.clone());
        } else {
            let s = y - zeta;
            let k = after.iter().position(|&a| a == s).expect("shifted level");
            states.push(tail.path.states()[k].clone());
        }
    }
    MeasurePath::new(levels.to_vec(), states, meta(alpha, 0.0, eps))
}
