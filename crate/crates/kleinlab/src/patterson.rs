//! Numerical Patterson–Sullivan theory: growth-rate fits for the critical
//! exponent, atomic approximations of the conformal density, and the fitted
//! normalization constants used by the limit formulas.

use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

use crate::groups::GroupSpec;
use crate::hyperbolic::{ball_direction, busemann, BallPoint, BoundaryPoint, HPoint, MoebiusMap};
use crate::orbits::{enumerate_ball, enumerate_horoball, OrbitConfig, OrbitError};
use crate::pointsets::direction_chart;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PattersonError {
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("counts must be positive and nondecreasing in t with t increasing")]
    NonMonotone,
    #[error("Poincaré exponent s = {s} must exceed the critical exponent estimate {delta}")]
    Subcritical { s: f64, delta: f64 },
    #[error("reference set has zero measure")]
    ZeroMeasure,
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

pub type Result<T> = std::result::Result<T, PattersonError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub delta_hat: f64,
    pub slope_stderr: f64,
    /// `C` in `N_t ≈ C e^{δ t}`.
    pub counting_constant_hat: f64,
    /// Filled in by [`fit_theta`]; `NaN` until then.
    pub theta_hat: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

/// Least-squares fit of `log N_t = log C + δ t`.
pub fn fit_delta(counts: &[(f64, f64)]) -> Result<FitReport> {
    if counts.len() < 4 {
        return Err(PattersonError::TooFewSamples(counts.len()));
    }
    for w in counts.windows(2) {
        if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
            return Err(PattersonError::NonMonotone);
        }
    }
    if counts.iter().any(|c| !(c.1 > 0.0)) {
        return Err(PattersonError::NonMonotone);
    }
    let k = counts.len() as f64;
    let mt = counts.iter().map(|c| c.0).sum::<f64>() / k;
    let my = counts.iter().map(|c| c.1.ln()).sum::<f64>() / k;
    let sxx: f64 = counts.iter().map(|c| (c.0 - mt).powi(2)).sum();
    let sxy: f64 = counts.iter().map(|c| (c.0 - mt) * (c.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let rss: f64 = counts
        .iter()
        .map(|c| (c.1.ln() - intercept - slope * c.0).powi(2))
        .sum();
    let stderr = if counts.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(FitReport {
        delta_hat: slope,
        slope_stderr: stderr,
        counting_constant_hat: intercept.exp(),
        theta_hat: f64::NAN,
        window: [counts[0].0, counts[counts.len() - 1].0],
        samples: counts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Observer {
    /// Directions seen from `i`.
    Interior,
    /// Real parts seen from the cusp at `∞`, reduced modulo the cusp lattice.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Unit ball vector (interior) or point of `R^{n-1}` (boundary).
    pub position: Vec<f64>,
    pub weight: f64,
}

impl Atom {
    /// Boundary point of `∂H^n` carrying the atom.
    pub fn boundary_point(&self, observer: Observer) -> BoundaryPoint {
        match observer {
            Observer::Interior => BallPoint::from_coords(&self.position).to_boundary(),
            Observer::Boundary => BoundaryPoint::finite(&self.position),
        }
    }

    /// Chart coordinates: circle coordinate or `E(x)` vector for interior
    /// atoms, the position itself for boundary atoms.
    pub fn chart(&self, observer: Observer) -> Vec<f64> {
        match observer {
            Observer::Interior => direction_chart(&BallPoint::from_coords(&self.position)),
            Observer::Boundary => self.position.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    pub n: usize,
    pub observer: Observer,
    pub atoms: Vec<Atom>,
    pub s_parameter: f64,
    pub total_mass: f64,
    pub base_orbit_t: f64,
}

impl AtomicMeasure {
    pub fn from_atoms(n: usize, observer: Observer, atoms: Vec<Atom>, s: f64, t: f64) -> Self {
        let total_mass = atoms.iter().map(|a| a.weight).sum();
        Self {
            n,
            observer,
            atoms,
            s_parameter: s,
            total_mass,
            base_orbit_t: t,
        }
    }

    /// Same atoms with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: a.position.clone(),
                weight: a.weight * c,
            })
            .collect();
        Self::from_atoms(self.n, self.observer, atoms, self.s_parameter, self.base_orbit_t)
    }
}

/// Patterson's construction at a fixed exponent `s > δ̂`, truncated at `t_truncate`.
///
/// Interior observer: atoms at the directions of `γw` seen from `i`, with
/// weights `e^{-s d(i, γw)}`. Boundary observer: atoms at `Re(γw)` modulo the
/// cusp lattice with weights `Im(γw)^s`, over heights `>= e^{-t_truncate}`.
/// Weights are normalized to total mass one.
pub fn patterson_atoms(
    spec: &GroupSpec,
    w: &HPoint,
    s: f64,
    delta_hat: f64,
    t_truncate: f64,
    observer: Observer,
    cfg: &OrbitConfig,
) -> Result<AtomicMeasure> {
    patterson_atoms_windowed(spec, w, s, delta_hat, 0.0, t_truncate, observer, cfg)
}

/// As [`patterson_atoms`], keeping only orbit points with displacement
/// (distance from `i`, or `-log Im`) at least `t_floor`. Dropping the first
/// few shells removes the handful of heavy atoms that dominate the truncated
/// sum when `s` is close to the critical exponent.
#[allow(clippy::too_many_arguments)]
pub fn patterson_atoms_windowed(
    spec: &GroupSpec,
    w: &HPoint,
    s: f64,
    delta_hat: f64,
    t_floor: f64,
    t_truncate: f64,
    observer: Observer,
    cfg: &OrbitConfig,
) -> Result<AtomicMeasure> {
    if !(s > delta_hat) {
        return Err(PattersonError::Subcritical { s, delta: delta_hat });
    }
    let n = spec.dimension;
    let i = HPoint::base(n);
    let atoms: Vec<Atom> = match observer {
        Observer::Interior => {
            let slice = enumerate_ball(spec, w, &i, t_truncate, t_floor.max(0.0), cfg)?;
            slice
                .points
                .par_iter()
                .filter_map(|p| {
                    let dir = ball_direction(&i, &p.point).ok()?;
                    Some(Atom {
                        position: dir.coords(),
                        weight: (-s * p.displacement).exp(),
                    })
                })
                .collect()
        }
        Observer::Boundary => {
            let slice = enumerate_horoball(spec, w, t_truncate, f64::INFINITY, cfg)?;
            slice
                .points
                .iter()
                .filter(|p| p.displacement >= t_floor)
                .map(|p| Atom {
                    position: p.point.x().to_vec(),
                    weight: p.point.y().powf(s),
                })
                .collect()
        }
    };
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    let atoms = atoms
        .into_iter()
        .map(|a| Atom {
            position: a.position,
            weight: a.weight / total,
        })
        .collect();
    Ok(AtomicMeasure::from_atoms(n, observer, atoms, s, t_truncate))
}

/// Sets on which the measure can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum SetDescription {
    Full,
    Empty,
    /// Arc `[start, end)` of the circle of circumference 1 (wrapping when
    /// `end < start`); interior observer, `n = 2`.
    Arc { start: f64, end: f64 },
    /// Geodesic cap on the sphere of directions about a unit vector.
    Cap { center: Vec<f64>, radius: f64 },
    /// Box `[lo, hi]` in boundary coordinates.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

const EDGE_TOL: f64 = 1e-12;

/// Weight multiplier for an atom: 1 inside, 1/2 on the boundary, 0 outside.
fn membership(set: &SetDescription, atom: &Atom, observer: Observer) -> f64 {
    let grade = |signed: f64| {
        if signed > EDGE_TOL {
            1.0
        } else if signed < -EDGE_TOL {
            0.0
        } else {
            0.5
        }
    };
    match set {
        SetDescription::Full => 1.0,
        SetDescription::Empty => 0.0,
        SetDescription::Arc { start, end } => {
            if observer != Observer::Interior {
                return 0.0;
            }
            let x = atom.chart(observer)[0];
            let len = (end - start).rem_euclid(1.0);
            if len == 0.0 {
                return 0.0;
            }
            let rel = (x - start).rem_euclid(1.0);
            // signed distance to the arc's boundary, positive inside
            let d_start = rel.min(1.0 - rel);
            let d_end = (rel - len).abs().min(1.0 - (rel - len).abs());
            if rel < len {
                grade(d_start.min(d_end))
            } else {
                grade(-d_start.min(d_end))
            }
        }
        SetDescription::Cap { center, radius } => {
            let cn: f64 = center.iter().map(|c| c * c).sum::<f64>().sqrt();
            let dot: f64 = center.iter().zip(&atom.position).map(|(a, b)| a * b).sum::<f64>() / cn;
            grade(radius - dot.clamp(-1.0, 1.0).acos())
        }
        SetDescription::Box { lo, hi } => {
            let pos = atom.chart(observer);
            let mut worst = f64::INFINITY;
            for ((p, a), b) in pos.iter().zip(lo).zip(hi) {
                worst = worst.min(p - a).min(b - p);
            }
            grade(worst)
        }
    }
}

/// `ν(F)`, with atoms on `∂F` counted at half weight.
pub fn nu_eval(m: &AtomicMeasure, set: &SetDescription) -> f64 {
    m.atoms
        .iter()
        .map(|a| a.weight * membership(set, a, m.observer))
        .sum()
}

/// `ϑ̂ = C / ν(F_ref)` for the counting constant of a report fitted on `F_ref`.
pub fn fit_theta(report: &FitReport, m: &AtomicMeasure, reference: &SetDescription) -> Result<f64> {
    let mass = nu_eval(m, reference);
    if !(mass > 0.0) {
        return Err(PattersonError::ZeroMeasure);
    }
    Ok(report.counting_constant_hat / mass)
}

/// `Σ weight · λ'(atom)`.
pub fn integrate_density(m: &AtomicMeasure, density: impl Fn(&Atom) -> f64) -> f64 {
    m.atoms.iter().map(|a| a.weight * density(a)).sum()
}

/// Relative defect of the conformal transformation rule for `γ` on `F`:
/// `|ν(γ^{-1}F) - ∫_F e^{δ β_ξ(i, γ i)} dν(ξ)| / ν(F)` for an interior measure.
pub fn conformality_defect(m: &AtomicMeasure, gamma: &MoebiusMap, set: &SetDescription, delta: f64) -> f64 {
    let n = m.n;
    let i = HPoint::base(n);
    let gi = gamma.apply_point(&i);
    let lhs: f64 = m
        .atoms
        .iter()
        .map(|a| {
            let moved = gamma.apply_boundary(&a.boundary_point(m.observer));
            let image = Atom {
                position: moved.to_ball(n).coords(),
                weight: a.weight,
            };
            a.weight * membership(set, &image, m.observer)
        })
        .sum();
    let rhs: f64 = m
        .atoms
        .iter()
        .map(|a| {
            let xi = a.boundary_point(m.observer);
            a.weight * membership(set, a, m.observer) * (delta * busemann(&xi, &i, &gi)).exp()
        })
        .sum();
    let base = nu_eval(m, set);
    (lhs - rhs).abs() / base
}

/// Total-variation distance between the pushforward to the circle (interior,
/// `n = 2`) and the uniform measure, using `bins` equal arcs.
pub fn circle_uniformity(m: &AtomicMeasure, bins: usize) -> f64 {
    let mut hist = vec![0.0; bins];
    for a in &m.atoms {
        let x = a.chart(m.observer)[0];
        let k = ((x * bins as f64) as usize).min(bins - 1);
        hist[k] += a.weight;
    }
    let total = m.total_mass;
    0.5 * hist.iter().map(|h| (h / total - 1.0 / bins as f64).abs()).sum::<f64>()
}

/// Measure dump: one row per atom with position columns and weight.
pub fn write_measure_csv<W: Write>(m: &AtomicMeasure, out: &mut W) -> io::Result<()> {
    writeln!(out, "# observer: {:?}", m.observer)?;
    writeln!(out, "# s: {}", m.s_parameter)?;
    writeln!(out, "# t_truncate: {}", m.base_orbit_t)?;
    writeln!(out, "# total_mass: {}", m.total_mass)?;
    let d = m.atoms.first().map_or(0, |a| a.position.len());
    let cols: Vec<String> = (1..=d).map(|k| format!("p{k}")).collect();
    writeln!(out, "{},weight", cols.join(","))?;
    for a in &m.atoms {
        let p: Vec<String> = a.position.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{},{:.17e}", p.join(","), a.weight)?;
    }
    Ok(())
}
