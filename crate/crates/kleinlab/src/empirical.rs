//! Empirical statistics of projected point sets.
//!
//! Distances are measured in chart units: the circle of directions has
//! circumference 1, sphere directions use the geodesic angle divided by `2π`,
//! and boundary points use the flat metric of the cusp torus.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::orbits::LatticeReducer;
use crate::pointsets::{
    chart_direction, make_test_set, BoundarySet, DirectionSet, PointSetError, TestSet, TestSetKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmpiricalError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("gap statistics are defined for n = 2 only")]
    Dimension,
    #[error("moment generating function diverges: sum of positive parts {sum} exceeds {threshold}")]
    Divergent { sum: f64, threshold: f64 },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    TestSet(#[from] PointSetError),
}

pub type Result<T> = std::result::Result<T, EmpiricalError>;

/// Seeded counter-based generator for stream `stream`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSample {
    pub t: f64,
    /// Gaps between consecutive circle coordinates times `e^t`.
    pub scaled_gaps: Vec<f64>,
    pub n: usize,
}

impl GapSample {
    /// `F_t(L) = #{j : s_j >= L} / N`.
    pub fn survival(&self, l: f64) -> f64 {
        self.scaled_gaps.iter().filter(|&&s| s >= l).count() as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    Gaps,
    GapDensity,
    NearestNeighbor,
    PairCorrelation,
    Counting,
    Moment,
    Mgf,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Gaps => "gaps",
            CurveKind::GapDensity => "gapdensity",
            CurveKind::NearestNeighbor => "nn",
            CurveKind::PairCorrelation => "pair",
            CurveKind::Counting => "count",
            CurveKind::Moment => "moment",
            CurveKind::Mgf => "mgf",
        }
    }
}

/// A curve of estimates with standard errors (zero when not applicable).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledDistribution {
    pub kind: CurveKind,
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub scale_factor_applied: bool,
    pub sample_count: usize,
    pub t: f64,
    pub s: f64,
}

/// Curve CSV: `#` metadata rows, then `abscissa,value,stderr`.
pub fn write_curve_csv<W: Write>(
    curve: &ScaledDistribution,
    meta: &[(String, String)],
    out: &mut W,
) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    writeln!(out, "# kind: {}", curve.kind.name())?;
    writeln!(out, "abscissa,value,stderr")?;
    for ((x, v), e) in curve.abscissae.iter().zip(&curve.values).zip(&curve.stderr) {
        writeln!(out, "{x:.10},{v:.12e},{e:.6e}")?;
    }
    Ok(())
}

/// Gaps of points on the circle of circumference 1, scaled by `e^t`.
pub fn gap_statistics_coords(coords: &[f64], t: f64) -> Result<GapSample> {
    if coords.len() < 2 {
        return Err(EmpiricalError::TooFewPoints {
            need: 2,
            got: coords.len(),
        });
    }
    let mut x: Vec<f64> = coords.iter().map(|c| c.rem_euclid(1.0)).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let scale = t.exp();
    let mut gaps: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]) * scale).collect();
    gaps.push((x[0] + 1.0 - x[n - 1]) * scale);
    Ok(GapSample {
        t,
        scaled_gaps: gaps,
        n,
    })
}

pub fn gap_statistics(set: &DirectionSet) -> Result<GapSample> {
    if set.n() != 2 {
        return Err(EmpiricalError::Dimension);
    }
    gap_statistics_coords(&set.circle_coordinates(), set.t)
}

/// `F_t(L)` on a grid.
pub fn gap_curve(sample: &GapSample, grid: &[f64], s: f64) -> ScaledDistribution {
    let mut sorted = sample.scaled_gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let values = grid
        .iter()
        .map(|&l| (sorted.len() - sorted.partition_point(|&g| g < l)) as f64 / n)
        .collect();
    ScaledDistribution {
        kind: CurveKind::Gaps,
        abscissae: grid.to_vec(),
        values,
        stderr: vec![0.0; grid.len()],
        scale_factor_applied: false,
        sample_count: sample.n,
        t: sample.t,
        s,
    }
}

/// Metric space in which a point set lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// One coordinate, periodic with the given period.
    Circle { period: f64 },
    /// Unit vectors; distance is the geodesic angle over `2π`.
    Sphere,
    /// Flat torus `R^{n-1} / L` (rank may be below `n-1`).
    Torus { lattice: Vec<Vec<f64>> },
    Euclidean,
}

/// Points with a metric, the common input of the empirical statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub geometry: Geometry,
    pub coords: Vec<Vec<f64>>,
    pub t: f64,
    pub s: f64,
}

impl From<&DirectionSet> for PointCloud {
    fn from(set: &DirectionSet) -> Self {
        if set.n() == 2 {
            PointCloud {
                geometry: Geometry::Circle { period: 1.0 },
                coords: set.circle_coordinates().into_iter().map(|c| vec![c]).collect(),
                t: set.t,
                s: set.s,
            }
        } else {
            PointCloud {
                geometry: Geometry::Sphere,
                coords: set.points.iter().map(|p| p.direction.coords()).collect(),
                t: set.t,
                s: set.s,
            }
        }
    }
}

impl From<&BoundarySet> for PointCloud {
    fn from(set: &BoundarySet) -> Self {
        let geometry = match (set.n, set.lattice.len()) {
            (2, 1) => Geometry::Circle {
                period: set.lattice[0][0].abs(),
            },
            (_, 0) => Geometry::Euclidean,
            _ => Geometry::Torus {
                lattice: set.lattice.clone(),
            },
        };
        PointCloud {
            geometry,
            coords: set.points.clone(),
            t: set.t,
            s: set.s,
        }
    }
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    fn distance_fn(&self) -> Box<dyn Fn(&[f64], &[f64]) -> f64 + Sync + '_> {
        match &self.geometry {
            Geometry::Circle { period } => {
                let p = *period;
                Box::new(move |a, b| {
                    let d = (a[0] - b[0]).rem_euclid(p);
                    d.min(p - d)
                })
            }
            Geometry::Sphere => Box::new(|a, b| {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                dot.clamp(-1.0, 1.0).acos() / std::f64::consts::TAU
            }),
            Geometry::Euclidean => Box::new(|a, b| {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }),
            Geometry::Torus { lattice } => {
                let r = LatticeReducer::new(lattice);
                Box::new(move |a, b| torus_distance(&r, lattice, a, b))
            }
        }
    }

    /// Scaled nearest-neighbour distance `e^t · min_j d(x_i, x_j)` per point.
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        let scale = self.t.exp();
        let n = self.len();
        if n < 2 {
            return vec![f64::INFINITY; n];
        }
        if let Geometry::Circle { period } = self.geometry {
            let mut idx: Vec<(f64, usize)> = self
                .coords
                .iter()
                .enumerate()
                .map(|(i, c)| (c[0].rem_euclid(period), i))
                .collect();
            idx.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut out = vec![0.0; n];
            for k in 0..n {
                let prev = if k == 0 {
                    idx[0].0 + period - idx[n - 1].0
                } else {
                    idx[k].0 - idx[k - 1].0
                };
                let next = if k == n - 1 {
                    idx[0].0 + period - idx[n - 1].0
                } else {
                    idx[k + 1].0 - idx[k].0
                };
                out[idx[k].1] = prev.min(next) * scale;
            }
            return out;
        }
        let dist = self.distance_fn();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = f64::INFINITY;
                for j in 0..n {
                    if j != i {
                        best = best.min(dist(&self.coords[i], &self.coords[j]));
                    }
                }
                best * scale
            })
            .collect()
    }

    /// Scaled distances `e^t d(x_i, x_j)` of unordered pairs with scaled
    /// distance below `max`.
    pub fn close_pairs(&self, max: f64) -> Vec<f64> {
        let scale = self.t.exp();
        let cutoff = max / scale;
        let n = self.len();
        if let Geometry::Circle { period } = self.geometry {
            let mut x: Vec<f64> = self.coords.iter().map(|c| c[0].rem_euclid(period)).collect();
            x.sort_by(f64::total_cmp);
            let mut out = Vec::new();
            for i in 0..n {
                // walk forward cyclically while within the cutoff
                for step in 1..n {
                    let j = (i + step) % n;
                    let mut d = x[j] - x[i];
                    if j <= i {
                        d += period;
                    }
                    if d >= cutoff || d >= period / 2.0 {
                        break;
                    }
                    out.push(d * scale);
                }
            }
            return out;
        }
        let dist = self.distance_fn();
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let dist = &dist;
                ((i + 1)..n).filter_map(move |j| {
                    let d = dist(&self.coords[i], &self.coords[j]);
                    (d < cutoff).then_some(d * scale)
                })
            })
            .collect()
    }
}

fn torus_distance(r: &LatticeReducer, lattice: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let coeff = r.coefficients(&diff);
    let l = lattice.len();
    let mut best = f64::INFINITY;
    for combo in 0..3usize.pow(l as u32) {
        let mut c = combo;
        let mut v = diff.clone();
        for (j, basis) in lattice.iter().enumerate() {
            let k = coeff[j].round() + ((c % 3) as f64 - 1.0);
            c /= 3;
            for (x, bv) in v.iter_mut().zip(basis) {
                *x -= k * bv;
            }
        }
        best = best.min(v.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    best
}

/// `J_t(L)`: fraction of points whose open ball of radius `L e^{-t}` holds
/// no other point.
pub fn nearest_neighbor_cdf(cloud: &PointCloud, grid: &[f64]) -> Result<ScaledDistribution> {
    if cloud.len() < 2 {
        return Err(EmpiricalError::TooFewPoints {
            need: 2,
            got: cloud.len(),
        });
    }
    let mut nn = cloud.nearest_neighbor_distances();
    nn.sort_by(f64::total_cmp);
    let n = nn.len() as f64;
    let values = grid
        .iter()
        .map(|&l| (nn.len() - nn.partition_point(|&d| d < l)) as f64 / n)
        .collect();
    Ok(ScaledDistribution {
        kind: CurveKind::NearestNeighbor,
        abscissae: grid.to_vec(),
        values,
        stderr: vec![0.0; grid.len()],
        scale_factor_applied: false,
        sample_count: cloud.len(),
        t: cloud.t,
        s: cloud.s,
    })
}

/// `R_2(ξ, t) = (c_0 / e^{δ t}) #{(i, j) : i ≠ j, d(x_i, x_j) < ξ e^{-t}}`.
pub fn pair_correlation(cloud: &PointCloud, grid: &[f64], c0: f64, delta: f64) -> ScaledDistribution {
    let max = grid.iter().cloned().fold(0.0, f64::max);
    let mut pairs = cloud.close_pairs(max);
    pairs.sort_by(f64::total_cmp);
    let norm = c0 / (delta * cloud.t).exp();
    let values = grid
        .iter()
        .map(|&xi| 2.0 * pairs.partition_point(|&d| d < xi) as f64 * norm)
        .collect();
    ScaledDistribution {
        kind: CurveKind::PairCorrelation,
        abscissae: grid.to_vec(),
        values,
        stderr: vec![0.0; grid.len()],
        scale_factor_applied: false,
        sample_count: cloud.len(),
        t: cloud.t,
        s: cloud.s,
    }
}

/// Smooth-window pair correlation `(c_0 / e^{δ t}) Σ_{i ≠ j} f(e^t d(x_i, x_j))`
/// for a weight `f` supported in `[0, support)`.
pub fn pair_correlation_weighted(
    cloud: &PointCloud,
    f: impl Fn(f64) -> f64,
    support: f64,
    c0: f64,
    delta: f64,
) -> f64 {
    let pairs = cloud.close_pairs(support);
    2.0 * pairs.iter().map(|&d| f(d)).sum::<f64>() * c0 / (delta * cloud.t).exp()
}

/// Density of the base point `x` of the test sets.
#[derive(Debug, Clone, PartialEq)]
pub enum Lambda {
    /// Uniform on the box `[lo, hi)`; for the boundary observer with a full
    /// rank lattice use [`Lambda::Cell`] instead.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Lebesgue probability on the lattice cell, with the non-lattice
    /// directions uniform on `[lo, hi)`.
    Cell {
        lattice: Vec<Vec<f64>>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Density given on a regular grid over `[lo, hi]` and interpolated
    /// multilinearly; values are listed with the last axis fastest.
    Grid {
        lo: Vec<f64>,
        hi: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    },
}

impl Lambda {
    fn dimension(&self) -> usize {
        match self {
            Lambda::Uniform { lo, .. } | Lambda::Grid { lo, .. } => lo.len(),
            Lambda::Cell { lattice, lo, .. } => lattice.first().map_or(lo.len(), |b| b.len()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Lambda::Uniform { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(EmpiricalError::Param("uniform λ needs lo < hi".into()));
                }
            }
            Lambda::Cell { lattice, lo, hi } => {
                let d = self.dimension();
                if lattice.len() + lo.len() != d || lo.len() != hi.len() {
                    return Err(EmpiricalError::Param("cell λ dimensions disagree".into()));
                }
            }
            Lambda::Grid { lo, hi, shape, values } => {
                if lo.len() != hi.len() || lo.len() != shape.len() || shape.iter().any(|&s| s < 2) {
                    return Err(EmpiricalError::Param("grid λ needs at least two nodes per axis".into()));
                }
                if values.len() != shape.iter().product::<usize>() || values.iter().any(|v| !(*v >= 0.0)) {
                    return Err(EmpiricalError::Param("grid λ values must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Density value of a grid λ (unnormalized) at `x`.
    pub fn grid_value(lo: &[f64], hi: &[f64], shape: &[usize], values: &[f64], x: &[f64]) -> f64 {
        let d = lo.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let u = ((x[k] - lo[k]) / (hi[k] - lo[k]) * (shape[k] - 1) as f64).clamp(0.0, (shape[k] - 1) as f64);
            let b = (u.floor() as usize).min(shape[k] - 2);
            base[k] = b;
            frac[k] = u - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * shape[k] + base[k] + bit;
            }
            acc += w * values[flat];
        }
        acc
    }

    /// One draw from λ.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Lambda::Uniform { lo, hi } => lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect(),
            Lambda::Cell { lattice, lo, hi } => {
                let d = self.dimension();
                let mut x = vec![0.0; d];
                for b in lattice {
                    let u: f64 = rng.gen();
                    for (xi, bi) in x.iter_mut().zip(b) {
                        *xi += u * bi;
                    }
                }
                // the remaining directions are the trailing coordinates
                let off = d - lo.len();
                for (k, (a, b)) in lo.iter().zip(hi).enumerate() {
                    x[off + k] += a + (b - a) * rng.gen::<f64>();
                }
                x
            }
            Lambda::Grid { lo, hi, shape, values } => {
                let max = values.iter().cloned().fold(0.0, f64::max);
                loop {
                    let x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
                    if rng.gen::<f64>() * max <= Self::grid_value(lo, hi, shape, values, &x) {
                        return x;
                    }
                }
            }
        }
    }
}

/// Which point set the test sets are laid on.
#[derive(Debug, Clone)]
pub enum CountingTarget<'a> {
    /// Boxes `N^{-1/δ} A_j - x` on a boundary set.
    Boundary(&'a BoundarySet),
    /// Disks of normalized measure `σ_j / N^{(n-1)/δ}` about the direction
    /// with chart coordinate `x`.
    Interior(&'a DirectionSet),
}

/// Test set shapes: boxes `A_j = [lo, hi)` for the boundary observer,
/// disk parameters `σ_j` for the interior observer.
#[derive(Debug, Clone, PartialEq)]
pub enum TestShape {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Disk { sigma: f64 },
}

/// Counts `N_j(x)` for a sequence of base points drawn from λ.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingSamples {
    /// `counts[k][j]` is the count in test set `j` for sample `k`.
    pub counts: Vec<Vec<u32>>,
    /// `e^{(n-1-δ̂) t}`.
    pub scale: f64,
    pub seed: u64,
    pub t: f64,
    pub s: f64,
}

/// Sorted 1-periodic coordinates for fast interval counts.
struct SortedCircle {
    period: f64,
    x: Vec<f64>,
}

impl SortedCircle {
    fn new(coords: impl Iterator<Item = f64>, period: f64) -> Self {
        let mut x: Vec<f64> = coords.map(|c| c.rem_euclid(period)).collect();
        x.sort_by(f64::total_cmp);
        Self { period, x }
    }

    /// Points in `[a, b)` modulo the period, `b - a < period`.
    fn count(&self, a: f64, b: f64) -> usize {
        let len = b - a;
        let a = a.rem_euclid(self.period);
        let b = a + len;
        let upto = |v: f64| self.x.partition_point(|&p| p < v);
        if b <= self.period {
            upto(b) - upto(a)
        } else {
            (self.x.len() - upto(a)) + upto(b - self.period)
        }
    }

    /// Points in the closed interval `[a, b]` modulo the period.
    fn count_closed(&self, a: f64, b: f64) -> usize {
        let len = b - a;
        let a = a.rem_euclid(self.period);
        let b = a + len;
        let below = |v: f64| self.x.partition_point(|&p| p < v);
        let upto = |v: f64| self.x.partition_point(|&p| p <= v);
        if b < self.period {
            upto(b) - below(a)
        } else {
            (self.x.len() - below(a)) + upto(b - self.period)
        }
    }
}

const BLOCK: usize = 1024;

/// Draws `n_samples` base points from λ (stream `block index` of `seed`) and
/// records the counts in every scaled test set.
pub fn sample_counts(
    target: &CountingTarget,
    shapes: &[TestShape],
    lambda: &Lambda,
    n_samples: usize,
    seed: u64,
    delta_hat: f64,
) -> Result<CountingSamples> {
    lambda.validate()?;
    if shapes.is_empty() {
        return Err(EmpiricalError::Param("need at least one test set".into()));
    }
    let (n, t, s, count) = match target {
        CountingTarget::Boundary(b) => (b.n, b.t, b.s, b.len()),
        CountingTarget::Interior(d) => (d.n(), d.t, d.s, d.len()),
    };
    let big_n = count.max(1);
    let nn = big_n as f64;
    // fast path for the circle
    let circle = match target {
        CountingTarget::Boundary(b) if b.n == 2 && b.lattice.len() == 1 => {
            Some(SortedCircle::new(b.points.iter().map(|p| p[0]), b.lattice[0][0].abs()))
        }
        CountingTarget::Interior(d) if d.n() == 2 => Some(SortedCircle::new(d.circle_coordinates().into_iter(), 1.0)),
        _ => None,
    };
    // validate shapes once and precompute the scaled sizes
    for shape in shapes {
        let kind = shape_kind(target, shape, &vec![0.0; n - 1])?;
        make_test_set(&kind, big_n, delta_hat)?;
    }
    let blocks = n_samples.div_ceil(BLOCK);
    let per_block: Vec<Result<Vec<Vec<u32>>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_stream(seed, b as u64);
            let len = BLOCK.min(n_samples - b * BLOCK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let x = lambda.sample(&mut rng);
                let mut row = Vec::with_capacity(shapes.len());
                for shape in shapes {
                    let c = match (&circle, shape, target) {
                        (Some(circ), TestShape::Box { lo, hi }, CountingTarget::Boundary(_)) => {
                            let f = nn.powf(-1.0 / delta_hat);
                            circ.count(lo[0] * f - x[0], hi[0] * f - x[0])
                        }
                        (Some(circ), TestShape::Disk { sigma }, CountingTarget::Interior(_)) => {
                            let omega = sigma / nn.powf(1.0 / delta_hat);
                            circ.count_closed(x[0] - omega / 2.0, x[0] + omega / 2.0)
                        }
                        _ => {
                            let kind = shape_kind(target, shape, &x)?;
                            let test = make_test_set(&kind, big_n, delta_hat)?;
                            count_generic(target, &test)
                        }
                    };
                    row.push(c as u32);
                }
                out.push(row);
            }
            Ok(out)
        })
        .collect();
    let mut counts = Vec::with_capacity(n_samples);
    for b in per_block {
        counts.extend(b?);
    }
    Ok(CountingSamples {
        counts,
        scale: ((n as f64 - 1.0 - delta_hat) * t).exp(),
        seed,
        t,
        s,
    })
}

fn shape_kind(target: &CountingTarget, shape: &TestShape, x: &[f64]) -> Result<TestSetKind> {
    match (target, shape) {
        (CountingTarget::Boundary(b), TestShape::Box { lo, hi }) => Ok(TestSetKind::Box {
            lo: lo.clone(),
            hi: hi.clone(),
            x: x.to_vec(),
            lattice: b.lattice.clone(),
        }),
        (CountingTarget::Interior(d), TestShape::Disk { sigma }) => Ok(TestSetKind::Disk {
            sigma: *sigma,
            center: chart_direction(d.n(), x),
        }),
        _ => Err(EmpiricalError::Param(
            "boxes go with boundary sets and disks with direction sets".into(),
        )),
    }
}

fn count_generic(target: &CountingTarget, test: &TestSet) -> usize {
    use crate::pointsets::count_hits;
    match target {
        CountingTarget::Boundary(b) => count_hits(*b, test),
        CountingTarget::Interior(d) => count_hits(*d, test),
    }
}

fn mean_and_se(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let m = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (m, (var / n as f64).sqrt())
}

impl CountingSamples {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `e^{(n-1-δ̂)t} λ(N_j = r_j ∀ j)` with its binomial standard error.
    pub fn probability(&self, r: &[u32]) -> (f64, f64) {
        let n = self.len();
        let hits = self.counts.iter().filter(|c| c.as_slice() == r).count();
        let p = hits as f64 / n as f64;
        (self.scale * p, self.scale * (p * (1.0 - p) / n as f64).sqrt())
    }

    /// `e^{(n-1-δ̂)t} ∫ Π N_j^{β_j} dλ`.
    pub fn moment(&self, beta: &[f64]) -> Result<(f64, f64)> {
        if beta.iter().any(|b| !(*b > 0.0)) {
            return Err(EmpiricalError::Param("moment exponents must be positive".into()));
        }
        let (m, se) = mean_and_se(
            self.counts
                .iter()
                .map(|c| c.iter().zip(beta).map(|(&k, b)| (k as f64).powf(*b)).product()),
            self.len(),
        );
        Ok((self.scale * m, self.scale * se))
    }

    /// `e^{(n-1-δ̂)t} ∫ e^{τ·N} 1(N_j ≠ 0 ∀ j) dλ`, rejected when the positive
    /// parts of `τ` add up to more than `threshold`.
    pub fn mgf(&self, tau: &[f64], threshold: f64) -> Result<(f64, f64)> {
        let sum: f64 = tau.iter().map(|t| t.max(0.0)).sum();
        if sum > threshold {
            return Err(EmpiricalError::Divergent { sum, threshold });
        }
        let (m, se) = mean_and_se(
            self.counts.iter().map(|c| {
                if c.iter().all(|&k| k > 0) {
                    c.iter().zip(tau).map(|(&k, t)| t * k as f64).sum::<f64>().exp()
                } else {
                    0.0
                }
            }),
            self.len(),
        );
        Ok((self.scale * m, self.scale * se))
    }

    /// Distinct count vectors observed, in lexicographic order.
    pub fn observed(&self) -> Vec<Vec<u32>> {
        let mut v = self.counts.clone();
        v.sort();
        v.dedup();
        v
    }
}

/// Output of [`counting_distribution`]: the curve over the requested count
/// vectors plus any warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingReport {
    pub curve: ScaledDistribution,
    pub r: Vec<Vec<u32>>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

/// Monte Carlo estimates of `E_s(r, A)` for each requested count vector.
#[allow(clippy::too_many_arguments)]
pub fn counting_distribution(
    target: &CountingTarget,
    shapes: &[TestShape],
    lambda: &Lambda,
    r: &[Vec<u32>],
    n_samples: usize,
    seed: u64,
    delta_hat: f64,
) -> Result<CountingReport> {
    let samples = sample_counts(target, shapes, lambda, n_samples, seed, delta_hat)?;
    let mut warnings = Vec::new();
    if r.iter().any(|v| v.contains(&0)) {
        warnings.push("counts with r_j = 0 requested; no limiting statement is available for them".into());
    }
    let est: Vec<(f64, f64)> = r.iter().map(|v| samples.probability(v)).collect();
    Ok(CountingReport {
        curve: ScaledDistribution {
            kind: CurveKind::Counting,
            abscissae: (0..r.len()).map(|k| k as f64).collect(),
            values: est.iter().map(|e| e.0).collect(),
            stderr: est.iter().map(|e| e.1).collect(),
            scale_factor_applied: true,
            sample_count: n_samples,
            t: samples.t,
            s: samples.s,
        },
        r: r.to_vec(),
        warnings,
        seed,
    })
}

/// Limit-side moment `Σ_r Π r_j^{β_j} E(r)` from a table of `(r, E(r))`,
/// with the largest included term reported as a crude tail indicator.
pub fn moment_from_distribution(table: &[(Vec<u32>, f64)], beta: &[f64]) -> (f64, f64) {
    let mut total = 0.0;
    let mut last = 0.0;
    for (r, e) in table {
        let w: f64 = r.iter().zip(beta).map(|(&k, b)| (k as f64).powf(*b)).product();
        total += w * e;
        last = w * e;
    }
    (total, last.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointsets::boundary_set_from;

    fn circle_cloud(x: &[f64], t: f64) -> PointCloud {
        PointCloud {
            geometry: Geometry::Circle { period: 1.0 },
            coords: x.iter().map(|v| vec![*v]).collect(),
            t,
            s: 0.0,
        }
    }

    #[test]
    fn gaps_of_three_points() {
        let g = gap_statistics_coords(&[0.0, 0.25, 0.5], 0.0).unwrap();
        let mut s = g.scaled_gaps.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(s, vec![0.25, 0.25, 0.5]);
        assert!((g.survival(0.3) - 1.0 / 3.0).abs() < 1e-15);
        assert!(gap_statistics_coords(&[0.2], 0.0).is_err());
    }

    #[test]
    fn equally_spaced_gaps() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let t = 2.0f64;
        let g = gap_statistics_coords(&x, t).unwrap();
        let h = t.exp() / n as f64;
        assert!(g.scaled_gaps.iter().all(|s| (s - h).abs() < 1e-12));
        let c = gap_curve(&g, &[h * 0.999, h * 1.001], 0.0);
        assert_eq!(c.values, vec![1.0, 0.0]);
        let total: f64 = g.scaled_gaps.iter().sum::<f64>() * (-t).exp();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nearest_neighbor_two_points() {
        let c = circle_cloud(&[0.1, 0.6], 0.0);
        let j = nearest_neighbor_cdf(&c, &[0.4, 0.6]).unwrap();
        assert_eq!(j.values, vec![1.0, 0.0]);
        let e = PointCloud {
            geometry: Geometry::Euclidean,
            coords: vec![vec![0.0, 0.0], vec![0.3, 0.4]],
            t: 0.0,
            s: 0.0,
        };
        assert_eq!(nearest_neighbor_cdf(&e, &[0.4, 0.6]).unwrap().values, vec![1.0, 0.0]);
    }

    #[test]
    fn grid_nearest_neighbor_steps() {
        let h = 0.05;
        let x: Vec<f64> = (0..20).map(|k| k as f64 * h).collect();
        let t = 1.0f64;
        let c = circle_cloud(&x, t);
        let step = h * t.exp();
        let j = nearest_neighbor_cdf(&c, &[step * 0.99, step * 1.01]).unwrap();
        assert_eq!(j.values, vec![1.0, 0.0]);
    }

    #[test]
    fn pair_correlation_jump() {
        let c = circle_cloud(&[0.1, 0.4], 0.0);
        let r = pair_correlation(&c, &[0.29, 0.31], 0.5, 1.0);
        assert_eq!(r.values, vec![0.0, 1.0]);
        let w = pair_correlation_weighted(&c, |d| if d < 0.31 { 1.0 } else { 0.0 }, 0.31, 0.5, 1.0);
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_correlation_poisson_expectation() {
        // uniform i.i.d. points: E #ordered pairs within ξ/N is (N-1) * 2ξ/N * N ≈ 2ξ N
        let n = 4000;
        let mut rng = rng_stream(11, 0);
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let t = (n as f64).ln();
        let c = circle_cloud(&x, t);
        let c0 = 1.0;
        let r = pair_correlation(&c, &[0.5, 1.0, 2.0], c0, 1.0);
        for (xi, v) in [0.5, 1.0, 2.0].iter().zip(&r.values) {
            let expected = 2.0 * xi * (n as f64 - 1.0) / n as f64;
            let sd = (expected / n as f64).sqrt() * 2.0;
            assert!((v - expected).abs() < 4.0 * sd, "ξ={xi}: {v} vs {expected}");
        }
        let brute: usize = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && c.distance_fn()(&c.coords[i], &c.coords[j]) < 1.0 / t.exp()).count())
            .sum();
        assert!((r.values[1] - brute as f64 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn torus_nearest_neighbor_matches_brute_force() {
        let lat = vec![vec![1.0, 0.0], vec![0.4, 1.0]];
        let mut rng = rng_stream(5, 0);
        let pts: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0]).collect();
        let set = boundary_set_from(3, 0.0, 1.0, &lat, pts);
        let cloud = PointCloud::from(&set);
        let nn = cloud.nearest_neighbor_distances();
        for i in 0..set.len() {
            let mut best = f64::INFINITY;
            for j in 0..set.len() {
                if i == j {
                    continue;
                }
                for a in -2..=2 {
                    for b in -2..=2 {
                        let dx = set.points[i][0] - set.points[j][0] - a as f64 - 0.4 * b as f64;
                        let dy = set.points[i][1] - set.points[j][1] - b as f64;
                        best = best.min((dx * dx + dy * dy).sqrt());
                    }
                }
            }
            assert!((nn[i] - best).abs() < 1e-12);
        }
    }

    fn uniform_boundary(n: usize, t: f64, seed: u64) -> BoundarySet {
        let mut rng = rng_stream(seed, 0);
        boundary_set_from(2, t, f64::INFINITY, &[vec![1.0]], (0..n).map(|_| vec![rng.gen::<f64>()]).collect())
    }

    #[test]
    fn counting_identities() {
        let set = uniform_boundary(500, 6.0, 1);
        let target = CountingTarget::Boundary(&set);
        let shapes = [TestShape::Box { lo: vec![0.0], hi: vec![2.0] }];
        let lambda = Lambda::Cell { lattice: vec![vec![1.0]], lo: vec![], hi: vec![] };
        let samples = sample_counts(&target, &shapes, &lambda, 5000, 9, 1.0).unwrap();
        // Σ r E(r) equals the first moment on the same samples
        let table: Vec<(Vec<u32>, f64)> = samples.observed().into_iter().map(|r| {
            let p = samples.probability(&r).0;
            (r, p)
        }).collect();
        let (m1, _) = samples.moment(&[1.0]).unwrap();
        let (sum, _) = moment_from_distribution(&table, &[1.0]);
        assert!((m1 - sum).abs() < 1e-12 * m1.max(1.0));
        // τ = 0 gives the probability of a nonempty box
        let (g0, _) = samples.mgf(&[0.0], 1.0).unwrap();
        let nonempty = samples.counts.iter().filter(|c| c[0] > 0).count() as f64 / samples.len() as f64;
        assert!((g0 - samples.scale * nonempty).abs() < 1e-12);
        assert!(matches!(samples.mgf(&[2.0], 1.0), Err(EmpiricalError::Divergent { .. })));
        // box of volume 2/N: mean count 2
        assert!((m1 - 2.0).abs() < 0.1);
        // fast path agrees with direct membership
        let direct: Vec<u32> = {
            let mut rng = rng_stream(9, 0);
            (0..200)
                .map(|_| {
                    let x = lambda.sample(&mut rng);
                    let kind = shape_kind(&target, &shapes[0], &x).unwrap();
                    let test = make_test_set(&kind, set.len(), 1.0).unwrap();
                    count_generic(&target, &test) as u32
                })
                .collect()
        };
        let fast: Vec<u32> = samples.counts[..200].iter().map(|c| c[0]).collect();
        assert_eq!(direct, fast);
    }

    #[test]
    fn counting_degenerate_cases() {
        let set = uniform_boundary(3, 0.0, 2);
        let target = CountingTarget::Boundary(&set);
        let lambda = Lambda::Cell { lattice: vec![vec![1.0]], lo: vec![], hi: vec![] };
        let tiny = [TestShape::Box { lo: vec![0.0], hi: vec![1e-9] }];
        let rep = counting_distribution(&target, &tiny, &lambda, &[vec![1]], 2000, 1, 1.0).unwrap();
        assert!(rep.curve.values[0] < 1e-3);
        let rep0 = counting_distribution(&target, &tiny, &lambda, &[vec![0]], 100, 1, 1.0).unwrap();
        assert_eq!(rep0.warnings.len(), 1);
        let one = boundary_set_from(2, 0.0, 1.0, &[vec![1.0]], vec![vec![0.3]]);
        let whole = [TestShape::Box { lo: vec![0.0], hi: vec![0.999_999] }];
        let rep = counting_distribution(&CountingTarget::Boundary(&one), &whole, &lambda, &[vec![1]], 1000, 3, 1.0).unwrap();
        assert!(rep.curve.values[0] > 0.99);
    }

    #[test]
    fn stderr_scales_as_inverse_root_of_samples() {
        let set = uniform_boundary(400, 6.0, 4);
        let target = CountingTarget::Boundary(&set);
        let shapes = [TestShape::Box { lo: vec![0.0], hi: vec![1.0] }];
        let lambda = Lambda::Cell { lattice: vec![vec![1.0]], lo: vec![], hi: vec![] };
        let a = sample_counts(&target, &shapes, &lambda, 10_000, 1, 1.0).unwrap();
        let b = sample_counts(&target, &shapes, &lambda, 20_000, 2, 1.0).unwrap();
        let ratio = b.probability(&[1]).1 / a.probability(&[1]).1;
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 0.2 / 2f64.sqrt());
    }

    #[test]
    fn sampling_is_deterministic() {
        let set = uniform_boundary(100, 4.0, 4);
        let target = CountingTarget::Boundary(&set);
        let shapes = [TestShape::Box { lo: vec![0.0], hi: vec![1.0] }];
        let lambda = Lambda::Uniform { lo: vec![0.0], hi: vec![1.0] };
        let a = sample_counts(&target, &shapes, &lambda, 3000, 77, 1.0).unwrap();
        let b = sample_counts(&target, &shapes, &lambda, 3000, 77, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_density_sampling() {
        // density proportional to x on [0, 1]
        let lambda = Lambda::Grid { lo: vec![0.0], hi: vec![1.0], shape: vec![2], values: vec![0.0, 1.0] };
        let mut rng = rng_stream(3, 0);
        let n = 20000;
        let mean: f64 = (0..n).map(|_| lambda.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01);
    }
}
