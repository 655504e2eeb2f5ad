//! Apollonian circle packings.
//!
//! Two generation routes are provided. [`generate_apollonian`] runs the
//! Descartes recursion, carrying each circle as `(k, k·c)` so that both the
//! curvature and the curvature-weighted center obey the same linear
//! reflection rule. [`orbit_circles`] instead composes the inversions in the
//! circles dual to the root quadruple and maps root circles by the resulting
//! Möbius transformations. The two are independent numerically and are
//! compared by [`compare_circle_sets`].

use std::collections::{HashMap, HashSet};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::groups::{dual_inversions, AntiMoebius, PlaneCircle};
use crate::hyperbolic::HPoint;
use crate::patterson::{fit_delta, FitReport, PattersonError};
use crate::pointsets::{boundary_set_from, BoundarySet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PackingError {
    #[error("root quadruple violates the Descartes relation (defect {0:.3e})")]
    Descartes(f64),
    #[error("root circles {0} and {1} are not tangent (defect {2:.3e})")]
    Tangency(usize, usize, f64),
    #[error("curvature must be nonzero")]
    ZeroCurvature,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Fit(#[from] PattersonError),
}

pub type Result<T> = std::result::Result<T, PackingError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    /// Signed; negative for the enclosing circle.
    pub curvature: f64,
    pub generation: u32,
}

impl Circle {
    pub fn new(center: [f64; 2], curvature: f64, generation: u32) -> Result<Self> {
        if curvature == 0.0 || !curvature.is_finite() {
            return Err(PackingError::ZeroCurvature);
        }
        Ok(Self {
            center,
            curvature,
            generation,
        })
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.curvature.abs()
    }

    /// Top of the hemisphere over the circle, a point of `H^3`.
    pub fn apex(&self) -> HPoint {
        HPoint::new(&self.center, self.radius()).expect("positive radius")
    }

    fn plane(&self) -> PlaneCircle {
        PlaneCircle {
            center: Complex64::new(self.center[0], self.center[1]),
            curvature: self.curvature,
        }
    }
}

/// Distance defect from tangency: `| |c1 - c2| - (r1 + r2) |`, or with
/// `|r1 - r2|` when one of the circles encloses the other.
pub fn tangency_defect(a: &Circle, b: &Circle) -> f64 {
    let d = ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt();
    let target = if a.curvature < 0.0 || b.curvature < 0.0 {
        (a.radius() - b.radius()).abs()
    } else {
        a.radius() + b.radius()
    };
    (d - target).abs()
}

/// `|2 Σ k_i^2 - (Σ k_i)^2| / Σ k_i^2`.
pub fn descartes_defect(k: [f64; 4]) -> f64 {
    let s: f64 = k.iter().sum();
    let q: f64 = k.iter().map(|v| v * v).sum();
    (2.0 * q - s * s).abs() / q
}

fn complex_descartes_defect(z: [Complex64; 4]) -> f64 {
    let s: Complex64 = z.iter().sum();
    let q: Complex64 = z.iter().map(|v| v * v).sum();
    let scale: f64 = z.iter().map(|v| v.norm_sqr()).sum();
    (2.0 * q - s * s).norm() / scale.max(1e-300)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    pub root: [Circle; 4],
    pub curvature_bound: f64,
    pub circles: Vec<Circle>,
    /// Largest relative Descartes defect over generated quadruples.
    pub max_descartes_defect: f64,
    /// Largest relative defect of the complex (center) relation.
    pub max_center_defect: f64,
    /// Largest distance defect between a child and its three parents.
    pub max_tangency_defect: f64,
    pub quadruples: usize,
}

#[derive(Clone, Copy)]
struct Quad {
    k: [f64; 4],
    kc: [Complex64; 4],
    /// Slot replaced to create this quadruple (`4` for the root).
    last: usize,
    generation: u32,
}

impl Quad {
    fn circle(&self, j: usize) -> Circle {
        let c = self.kc[j] / self.k[j];
        Circle {
            center: [c.re, c.im],
            curvature: self.k[j],
            generation: self.generation,
        }
    }

    fn reflect(&self, j: usize) -> Quad {
        let mut q = *self;
        let ks: f64 = (0..4).filter(|&i| i != j).map(|i| self.k[i]).sum();
        let zs: Complex64 = (0..4).filter(|&i| i != j).map(|i| self.kc[i]).sum();
        q.k[j] = 2.0 * ks - self.k[j];
        q.kc[j] = 2.0 * zs - self.kc[j];
        q.last = j;
        q.generation = self.generation + 1;
        q
    }
}

/// Check that four circles are mutually tangent and satisfy the Descartes
/// relation to `1e-9`.
pub fn validate_root(root: &[Circle; 4]) -> Result<()> {
    let defect = descartes_defect(root.map(|c| c.curvature));
    if defect > 1e-9 {
        return Err(PackingError::Descartes(defect));
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let d = tangency_defect(&root[i], &root[j]);
            if d > 1e-9 * root[i].radius().max(root[j].radius()) {
                return Err(PackingError::Tangency(i, j, d));
            }
        }
    }
    Ok(())
}

/// The root quadruple `(-1, 2, 2, 3)` inside the unit circle.
pub fn standard_root() -> [Circle; 4] {
    crate::groups::apollonian_root().map(|c| Circle {
        center: [c.center.re, c.center.im],
        curvature: c.curvature,
        generation: 0,
    })
}

/// Breadth-first Descartes generation of every circle with curvature at most
/// `curvature_bound`. Each circle appears once.
pub fn generate_apollonian(root: &[Circle; 4], curvature_bound: f64) -> Result<Packing> {
    validate_root(root)?;
    let start = Quad {
        k: root.map(|c| c.curvature),
        kc: root.map(|c| Complex64::new(c.center[0], c.center[1]) * c.curvature),
        last: 4,
        generation: 0,
    };
    let mut circles: Vec<Circle> = (0..4)
        .map(|j| start.circle(j))
        .filter(|c| c.curvature <= curvature_bound)
        .collect();
    let mut max_d = descartes_defect(start.k);
    let mut max_c = complex_descartes_defect(start.kc);
    let mut max_t: f64 = 0.0;
    let mut quadruples = 1;
    let mut frontier = vec![start];
    while !frontier.is_empty() {
        let children: Vec<(Quad, f64, f64, f64)> = frontier
            .par_iter()
            .flat_map_iter(|q| {
                (0..4).filter(move |&j| j != q.last).filter_map(move |j| {
                    let child = q.reflect(j);
                    if child.k[j] > curvature_bound {
                        return None;
                    }
                    let new = child.circle(j);
                    let tang = (0..4)
                        .filter(|&i| i != j)
                        .map(|i| tangency_defect(&new, &child.circle(i)))
                        .fold(0.0, f64::max);
                    Some((child, descartes_defect(child.k), complex_descartes_defect(child.kc), tang))
                })
            })
            .collect();
        frontier = Vec::with_capacity(children.len());
        for (q, d, c, t) in children {
            max_d = max_d.max(d);
            max_c = max_c.max(c);
            max_t = max_t.max(t);
            circles.push(q.circle(q.last));
            frontier.push(q);
        }
        quadruples += frontier.len();
    }
    Ok(Packing {
        root: *root,
        curvature_bound,
        circles,
        max_descartes_defect: max_d,
        max_center_defect: max_c,
        max_tangency_defect: max_t,
        quadruples,
    })
}

fn circle_key(c: &Circle, tol: f64) -> (i64, i64, i64) {
    (
        (c.center[0] / tol).round() as i64,
        (c.center[1] / tol).round() as i64,
        (c.radius() / tol).round() as i64,
    )
}

/// Independent recount: reflect every slot of every quadruple and keep the
/// distinct circles, identified on a grid of spacing `tol`.
pub fn generate_apollonian_dedup(root: &[Circle; 4], curvature_bound: f64, tol: f64) -> Result<Vec<Circle>> {
    validate_root(root)?;
    let start = Quad {
        k: root.map(|c| c.curvature),
        kc: root.map(|c| Complex64::new(c.center[0], c.center[1]) * c.curvature),
        last: 4,
        generation: 0,
    };
    let mut seen: HashSet<(i64, i64, i64)> = HashSet::new();
    let mut out = Vec::new();
    for j in 0..4 {
        let c = start.circle(j);
        if c.curvature <= curvature_bound && seen.insert(circle_key(&c, tol)) {
            out.push(c);
        }
    }
    let mut frontier = vec![start];
    while let Some(q) = frontier.pop() {
        for j in 0..4 {
            let child = q.reflect(j);
            if child.k[j] > curvature_bound {
                continue;
            }
            let c = child.circle(j);
            if seen.insert(circle_key(&c, tol)) {
                out.push(c);
                frontier.push(child);
            }
        }
    }
    Ok(out)
}

/// Circles obtained by applying products of the dual-circle inversions to the
/// root circles, keeping those with curvature at most `curvature_bound`.
/// Words are extended on the right, one inversion at a time, and a branch is
/// abandoned once the circle it creates exceeds the bound.
pub fn orbit_circles(root: &[Circle; 4], curvature_bound: f64) -> Result<Vec<Circle>> {
    validate_root(root)?;
    let planes = root.map(|c| c.plane());
    let inv = dual_inversions(&planes);
    let mut out: Vec<Circle> = root.iter().copied().filter(|c| c.curvature <= curvature_bound).collect();
    let mut frontier: Vec<(AntiMoebius, usize, u32)> = vec![(AntiMoebius::identity(), 4, 0)];
    while !frontier.is_empty() {
        let next: Vec<(AntiMoebius, usize, u32, Circle)> = frontier
            .par_iter()
            .flat_map_iter(|&(w, last, g)| {
                let planes = &planes;
                let inv = &inv;
                (0..4).filter(move |&j| j != last).filter_map(move |j| {
                    let w2 = w.compose(&inv[j]);
                    let img = w2.apply_circle(&planes[j])?;
                    (img.curvature <= curvature_bound).then(|| {
                        let c = Circle {
                            center: [img.center.re, img.center.im],
                            curvature: img.curvature,
                            generation: g + 1,
                        };
                        (w2, j, g + 1, c)
                    })
                })
            })
            .collect();
        frontier = next.iter().map(|&(w, j, g, _)| (w, j, g)).collect();
        out.extend(next.into_iter().map(|x| x.3));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSetDiff {
    pub matched: usize,
    pub only_first: Vec<Circle>,
    pub only_second: Vec<Circle>,
}

impl CircleSetDiff {
    pub fn is_equal(&self) -> bool {
        self.only_first.is_empty() && self.only_second.is_empty()
    }
}

/// Match two circle lists by center and radius within `tol`, restricted to
/// radii in `[r_min, r_max)`. Circles within `tol` of the window edges on one
/// side may match partners just outside on the other.
pub fn compare_circle_sets(a: &[Circle], b: &[Circle], r_min: f64, r_max: f64, tol: f64) -> CircleSetDiff {
    let inside = |c: &Circle, slack: f64| c.radius() >= r_min - slack && c.radius() < r_max + slack;
    let cell = |c: &Circle| ((c.center[0] / tol).floor() as i64, (c.center[1] / tol).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, c) in b.iter().enumerate() {
        if inside(c, tol) {
            grid.entry(cell(c)).or_default().push(k);
        }
    }
    let mut used = vec![false; b.len()];
    let mut only_first = Vec::new();
    let mut matched = 0;
    for c in a.iter().filter(|c| inside(c, 0.0)) {
        let (i, j) = cell(c);
        let mut found = None;
        'search: for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(list) = grid.get(&(i + di, j + dj)) {
                    for &k in list {
                        let d = &b[k];
                        if !used[k]
                            && (d.center[0] - c.center[0]).abs() <= tol
                            && (d.center[1] - c.center[1]).abs() <= tol
                            && (d.radius() - c.radius()).abs() <= tol
                        {
                            found = Some(k);
                            break 'search;
                        }
                    }
                }
            }
        }
        match found {
            Some(k) => {
                used[k] = true;
                matched += 1;
            }
            None => only_first.push(*c),
        }
    }
    let only_second = b
        .iter()
        .enumerate()
        .filter(|(k, c)| !used[*k] && inside(c, 0.0))
        .map(|(_, c)| *c)
        .collect();
    CircleSetDiff {
        matched,
        only_first,
        only_second,
    }
}

/// Circles with `e^{-t} <= r < e^{s-t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingSlice {
    pub t: f64,
    pub s: f64,
    pub circles: Vec<Circle>,
}

impl PackingSlice {
    /// Centers as a boundary point set of `H^3` with no cusp lattice.
    pub fn to_boundary_set(&self) -> BoundarySet {
        let pts = self.circles.iter().map(|c| c.center.to_vec()).collect();
        boundary_set_from(3, self.t, self.s, &[], pts)
    }
}

pub fn packing_centers(circles: &[Circle], t: f64, s: f64) -> PackingSlice {
    let lo = (-t).exp();
    let hi = (s - t).exp();
    PackingSlice {
        t,
        s,
        circles: circles
            .iter()
            .filter(|c| c.radius() >= lo && c.radius() < hi)
            .copied()
            .collect(),
    }
}

/// Fit `#{r(S) >= ε} ≈ C ε^{-δ}` over `samples` log-spaced values of `ε` in
/// `[eps_min, eps_max]`, as a regression of `log N` on `t = -log ε`.
pub fn packing_count_fit(circles: &[Circle], eps_min: f64, eps_max: f64, samples: usize) -> Result<FitReport> {
    if samples < 4 {
        return Err(PackingError::Fit(PattersonError::TooFewSamples(samples)));
    }
    if !(eps_min > 0.0 && eps_min < eps_max) {
        return Err(PackingError::Param("need 0 < eps_min < eps_max".into()));
    }
    let mut radii: Vec<f64> = circles.iter().map(|c| c.radius()).collect();
    radii.sort_by(|a, b| b.total_cmp(a));
    let (t_lo, t_hi) = (-eps_max.ln(), -eps_min.ln());
    let counts: Vec<(f64, f64)> = (0..samples)
        .map(|k| {
            let t = t_lo + (t_hi - t_lo) * k as f64 / (samples - 1) as f64;
            let eps = (-t).exp() * (1.0 - 1e-12);
            (t, radii.partition_point(|&r| r >= eps) as f64)
        })
        .collect();
    Ok(fit_delta(&counts)?)
}

/// Packing CSV: `#` metadata rows, then `cx,cy,curvature,generation`.
pub fn write_packing_csv<W: Write>(out: &mut W, circles: &[Circle], meta: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    writeln!(out, "cx,cy,curvature,generation")?;
    for c in circles {
        writeln!(out, "{},{},{},{}", c.center[0], c.center[1], c.curvature, c.generation)?;
    }
    Ok(())
}
