//! Projections of orbit slices to the observer's sphere of directions or to the
//! boundary cell, and the shrinking test sets used for counting statistics.

use std::f64::consts::PI;
use std::io::{self, Write};

use thiserror::Error;

use crate::hyperbolic::{ball_direction, direction_function, BallPoint, HPoint};
use crate::orbits::{LatticeReducer, OrbitMode, OrbitSlice};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointSetError {
    #[error("slice has the wrong mode for this projection")]
    Mode,
    #[error("test set is not proper: {0}")]
    Improper(String),
    #[error("invalid test-set parameter: {0}")]
    Param(String),
}

pub type Result<T> = std::result::Result<T, PointSetError>;

/// A projected orbit point on the sphere of directions at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    /// Point at hyperbolic distance 1 from `z` in the given direction.
    pub point: HPoint,
    /// Unit direction in the ball model centred at `z`.
    pub direction: BallPoint,
}

impl SpherePoint {
    /// Chart coordinates: circle coordinate in `[0, 1)` for `n = 2`, the
    /// `E(x)` chart vector otherwise.
    pub fn chart(&self) -> Vec<f64> {
        direction_chart(&self.direction)
    }
}

/// Chart of a unit direction. For `n = 2` this is `atan2(v, u) / 2π` reduced
/// to `[0, 1)`; for `n >= 3` it is the `x` with `E(x) ∞` in direction `dir`,
/// namely `x = -½ acos(v) û`.
pub fn direction_chart(dir: &BallPoint) -> Vec<f64> {
    if dir.n == 2 {
        return vec![crate::hyperbolic::circle_coordinate(dir)];
    }
    let m = dir.n - 1;
    let un: f64 = dir.u[..m].iter().map(|c| c * c).sum::<f64>().sqrt();
    let half = 0.5 * dir.v.clamp(-1.0, 1.0).acos();
    if un < 1e-300 {
        return vec![0.0; m];
    }
    dir.u[..m].iter().map(|c| -half * c / un).collect()
}

/// Inverse of [`direction_chart`].
pub fn chart_direction(n: usize, x: &[f64]) -> BallPoint {
    if n == 2 {
        let psi = 2.0 * PI * x[0];
        let mut u = [0.0; crate::clifford::MAX_DIM];
        u[0] = psi.cos();
        return BallPoint { n, u, v: psi.sin() };
    }
    let r: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut u = [0.0; crate::clifford::MAX_DIM];
    if r > 0.0 {
        let s = (2.0 * r).sin();
        for (k, c) in x.iter().enumerate() {
            u[k] = -s * c / r;
        }
    }
    BallPoint { n, u, v: (2.0 * r).cos() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub z: HPoint,
    pub t: f64,
    pub s: f64,
    pub points: Vec<SpherePoint>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n(&self) -> usize {
        self.z.n()
    }

    /// Circle coordinates in `[0, 1)` (only meaningful for `n = 2`).
    pub fn circle_coordinates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.chart()[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub n: usize,
    pub t: f64,
    pub s: f64,
    /// Basis of the cusp lattice (possibly empty).
    pub lattice: Vec<Vec<f64>>,
    /// Points of `R^{n-1}` reduced into the lattice cell.
    pub points: Vec<Vec<f64>>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Volume of the fundamental cell of the lattice directions.
    pub fn cell_volume(&self) -> f64 {
        lattice_covolume(&self.lattice)
    }
}

/// `sqrt(det Gram)` of the lattice basis, 1 for rank zero.
pub fn lattice_covolume(basis: &[Vec<f64>]) -> f64 {
    let l = basis.len();
    let mut g = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in 0..l {
            g[i][j] = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
        }
    }
    // Cholesky-free determinant by elimination
    let mut det = 1.0;
    for c in 0..l {
        let p = (c..l)
            .max_by(|&a, &b| g[a][c].abs().total_cmp(&g[b][c].abs()))
            .unwrap();
        if p != c {
            g.swap(p, c);
            det = -det;
        }
        let piv = g[c][c];
        det *= piv;
        for r in c + 1..l {
            let f = g[r][c] / piv;
            for k in c..l {
                g[r][k] -= f * g[c][k];
            }
        }
    }
    det.abs().sqrt()
}

/// Directions `φ_z(γw)` of every point of a ball slice about `z`.
pub fn project_directions(slice: &OrbitSlice, z: &HPoint) -> Result<DirectionSet> {
    let (t, s) = match slice.mode {
        OrbitMode::Ball { z: c, t, s } if c == *z => (t, s),
        _ => return Err(PointSetError::Mode),
    };
    use rayon::prelude::*;
    let points = slice
        .points
        .par_iter()
        .filter_map(|p| {
            let direction = ball_direction(z, &p.point).ok()?;
            let point = direction_function(z, &p.point).ok()?;
            Some(SpherePoint { point, direction })
        })
        .collect();
    Ok(DirectionSet { z: *z, t, s, points })
}

/// Real parts of a horoball slice, reduced modulo the cusp lattice.
pub fn project_boundary(slice: &OrbitSlice, lattice: &[Vec<f64>]) -> Result<BoundarySet> {
    let (t, s) = match slice.mode {
        OrbitMode::Horoball { t, s } => (t, s),
        _ => return Err(PointSetError::Mode),
    };
    let n = slice.w.n();
    let points = reduce_all(slice.points.iter().map(|p| p.point.x().to_vec()), lattice);
    Ok(BoundarySet {
        n,
        t,
        s,
        lattice: lattice.to_vec(),
        points,
    })
}

/// Builds a boundary set from raw coordinates.
pub fn boundary_set_from(n: usize, t: f64, s: f64, lattice: &[Vec<f64>], points: Vec<Vec<f64>>) -> BoundarySet {
    BoundarySet {
        n,
        t,
        s,
        lattice: lattice.to_vec(),
        points: reduce_all(points.into_iter(), lattice),
    }
}

fn reduce_all(points: impl Iterator<Item = Vec<f64>>, lattice: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if lattice.is_empty() {
        return points.collect();
    }
    let r = LatticeReducer::new(lattice);
    points.map(|x| r.reduce(&x).0).collect()
}

/// Normalized measure of a geodesic cap of angular radius `rho` on `S^m`.
pub fn cap_measure(m: usize, rho: f64) -> f64 {
    let rho = rho.clamp(0.0, PI);
    let (s, c) = rho.sin_cos();
    match m {
        1 => rho / PI,
        2 => (1.0 - c) / 2.0,
        3 => (rho - s * c) / PI,
        4 => (2.0 / 3.0 - c + c * c * c / 3.0) * 0.75,
        _ => {
            // Simpson quadrature of sin^{m-1}
            let f = |r: f64| -> f64 {
                let k = 2000;
                let h = r / k as f64;
                let mut acc = 0.0;
                for j in 0..=k {
                    let w = if j == 0 || j == k { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * (j as f64 * h).sin().powi(m as i32 - 1);
                }
                acc * h / 3.0
            };
            f(rho) / f(PI)
        }
    }
}

/// Angular radius of a cap of normalized measure `omega` on `S^m`.
pub fn cap_radius(m: usize, omega: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cap_measure(m, mid) < omega {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestSetKind {
    /// Geodesic disk on the sphere about the unit direction `center`, of
    /// normalized measure `sigma / N^{(n-1)/δ}`.
    Disk { sigma: f64, center: BallPoint },
    /// `N^{-1/δ} A - x` modulo the lattice, for the box `A = [lo, hi)`.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        x: Vec<f64>,
        lattice: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestSet {
    Disk {
        center: BallPoint,
        /// Normalized solid angle.
        omega: f64,
        /// Geodesic angular radius.
        radius: f64,
        cos_radius: f64,
    },
    Box {
        /// Scaled box `N^{-1/δ} A` before the shift.
        lo: Vec<f64>,
        hi: Vec<f64>,
        x: Vec<f64>,
        reducer: Option<LatticeReducer>,
        lattice: Vec<Vec<f64>>,
    },
}

/// Scaled test set for a point set of `count` points and exponent `delta`.
pub fn make_test_set(kind: &TestSetKind, count: usize, delta: f64) -> Result<TestSet> {
    if count == 0 {
        return Err(PointSetError::Param("N must be at least 1".into()));
    }
    if !(delta > 0.0) {
        return Err(PointSetError::Param(format!("delta must be positive, got {delta}")));
    }
    let nn = count as f64;
    match kind {
        TestSetKind::Disk { sigma, center } => {
            if !(*sigma > 0.0) {
                return Err(PointSetError::Param(format!("sigma must be positive, got {sigma}")));
            }
            let m = center.n - 1;
            let omega = sigma / nn.powf(m as f64 / delta);
            if omega >= 1.0 {
                return Err(PointSetError::Improper(format!("disk measure {omega} covers the sphere")));
            }
            let radius = cap_radius(m, omega);
            let norm = center.norm();
            Ok(TestSet::Disk {
                center: center.scaled(1.0 / norm),
                omega,
                radius,
                cos_radius: radius.cos(),
            })
        }
        TestSetKind::Box { lo, hi, x, lattice } => {
            let d = lo.len();
            if hi.len() != d || x.len() != d || lattice.iter().any(|b| b.len() != d) {
                return Err(PointSetError::Param("box dimensions disagree".into()));
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(PointSetError::Param("box needs lo < hi".into()));
            }
            let scale = nn.powf(-1.0 / delta);
            let lo: Vec<f64> = lo.iter().map(|v| v * scale).collect();
            let hi: Vec<f64> = hi.iter().map(|v| v * scale).collect();
            let reducer = if lattice.is_empty() {
                None
            } else {
                let r = LatticeReducer::new(lattice);
                // each corner difference must stay inside one cell
                for j in 0..d {
                    let mut e = vec![0.0; d];
                    e[j] = hi[j] - lo[j];
                    let c = r.coefficients(&e);
                    if c.iter().any(|v| v.abs() >= 1.0) {
                        return Err(PointSetError::Improper("box wraps around the torus".into()));
                    }
                }
                let mut diag = vec![0.0; d];
                for j in 0..d {
                    diag[j] = hi[j] - lo[j];
                }
                if r.coefficients(&diag).iter().map(|v| v.abs()).sum::<f64>() >= lattice.len() as f64 {
                    return Err(PointSetError::Improper("box wraps around the torus".into()));
                }
                Some(r)
            };
            Ok(TestSet::Box {
                lo,
                hi,
                x: x.clone(),
                reducer,
                lattice: lattice.clone(),
            })
        }
    }
}

impl TestSet {
    /// Membership of a unit direction (geodesic angle to the centre).
    pub fn contains_direction(&self, dir: &BallPoint) -> bool {
        match self {
            TestSet::Disk { center, cos_radius, .. } => {
                let dot: f64 = center.coords().iter().zip(dir.coords()).map(|(a, b)| a * b).sum::<f64>()
                    / dir.norm();
                dot >= *cos_radius
            }
            TestSet::Box { .. } => false,
        }
    }

    /// Membership of a boundary point, modulo the lattice.
    pub fn contains_boundary(&self, p: &[f64]) -> bool {
        let TestSet::Box { lo, hi, x, reducer, lattice } = self else {
            return false;
        };
        let inside = |q: &[f64]| q.iter().zip(lo).zip(hi).all(|((v, a), b)| *v >= *a && *v < *b);
        let q: Vec<f64> = p.iter().zip(x).map(|(a, b)| a + b).collect();
        let Some(r) = reducer else {
            return inside(&q);
        };
        // reduce relative to the box centre, then try neighbouring translates
        let centre: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let rel: Vec<f64> = q.iter().zip(&centre).map(|(a, b)| a - b).collect();
        let coeff = r.coefficients(&rel);
        let base: Vec<f64> = coeff.iter().map(|c| c.round()).collect();
        let l = lattice.len();
        for combo in 0..3usize.pow(l as u32) {
            let mut c = combo;
            let mut cand = q.clone();
            for (j, b) in lattice.iter().enumerate() {
                let k = base[j] + ((c % 3) as f64 - 1.0);
                c /= 3;
                for (v, bv) in cand.iter_mut().zip(b) {
                    *v -= k * bv;
                }
            }
            if inside(&cand) {
                return true;
            }
        }
        false
    }

    /// Lebesgue volume of the box, or normalized solid angle of the disk.
    pub fn measure(&self) -> f64 {
        match self {
            TestSet::Disk { omega, .. } => *omega,
            TestSet::Box { lo, hi, .. } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
        }
    }
}

/// Anything that can be counted against a [`TestSet`].
pub trait HitTarget {
    fn count_hits(&self, set: &TestSet) -> usize;
}

impl HitTarget for DirectionSet {
    fn count_hits(&self, set: &TestSet) -> usize {
        self.points.iter().filter(|p| set.contains_direction(&p.direction)).count()
    }
}

impl HitTarget for BoundarySet {
    fn count_hits(&self, set: &TestSet) -> usize {
        self.points.iter().filter(|p| set.contains_boundary(p)).count()
    }
}

pub fn count_hits<S: HitTarget>(set: &S, test: &TestSet) -> usize {
    set.count_hits(test)
}

fn write_meta<W: Write>(out: &mut W, meta: &[(String, String)]) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

/// Point-set CSV for directions: chart coordinates after `#` metadata rows.
pub fn write_directions_csv<W: Write>(set: &DirectionSet, meta: &[(String, String)], out: &mut W) -> io::Result<()> {
    write_meta(out, meta)?;
    writeln!(out, "# t: {}", set.t)?;
    writeln!(out, "# s: {}", set.s)?;
    if set.n() == 2 {
        writeln!(out, "# chart: circle of circumference 1")?;
        writeln!(out, "x")?;
    } else {
        writeln!(out, "# chart: E(x) vector")?;
        let cols: Vec<String> = (1..set.n()).map(|k| format!("x{k}")).collect();
        writeln!(out, "{}", cols.join(","))?;
    }
    for p in &set.points {
        let c: Vec<String> = p.chart().iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", c.join(","))?;
    }
    Ok(())
}

/// Point-set CSV for boundary points reduced into the lattice cell.
pub fn write_boundary_csv<W: Write>(set: &BoundarySet, meta: &[(String, String)], out: &mut W) -> io::Result<()> {
    write_meta(out, meta)?;
    writeln!(out, "# t: {}", set.t)?;
    writeln!(out, "# s: {}", set.s)?;
    writeln!(out, "# lattice: {:?}", set.lattice)?;
    let cols: Vec<String> = (1..set.n).map(|k| format!("x{k}")).collect();
    writeln!(out, "{}", cols.join(","))?;
    for p in &set.points {
        let c: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", c.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::psl2z;
    use crate::hyperbolic::{hyp_distance, MoebiusMap, BoundaryPoint};
    use crate::orbits::{enumerate_ball, enumerate_horoball, OrbitConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bset(points: &[f64]) -> BoundarySet {
        boundary_set_from(2, 0.0, 1.0, &[vec![1.0]], points.iter().map(|v| vec![*v]).collect())
    }

    #[test]
    fn vertical_point_projects_to_distance_one() {
        let z = HPoint::base(2);
        let p = HPoint::new(&[0.0], 3f64.exp()).unwrap();
        let q = direction_function(&z, &p).unwrap();
        assert!(q.x()[0].abs() < 1e-12);
        assert!((q.y() - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn modular_directions_lie_on_unit_sphere() {
        let g = psl2z();
        let w = HPoint::new(&[0.0], 2.0).unwrap();
        let z = HPoint::base(2);
        let slice = enumerate_ball(&g, &w, &z, 6.0, 0.0, &OrbitConfig::default()).unwrap();
        let dirs = project_directions(&slice, &z).unwrap();
        assert_eq!(dirs.len(), slice.len());
        for p in &dirs.points {
            assert!((hyp_distance(&p.point, &z) - 1.0).abs() < 1e-9);
        }
        let other = HPoint::new(&[0.0], 3.0).unwrap();
        assert_eq!(project_directions(&slice, &other), Err(PointSetError::Mode));
    }

    #[test]
    fn boundary_reduction() {
        let s = bset(&[0.3, 1.3, -0.7]);
        for p in &s.points {
            assert!((p[0] - 0.3).abs() < 1e-12);
        }
        let raw = boundary_set_from(2, 0.0, 1.0, &[], vec![vec![1.3]]);
        assert_eq!(raw.points[0], vec![1.3]);
        let g = psl2z();
        let w = HPoint::new(&[0.0], 2.0).unwrap();
        let slice = enumerate_horoball(&g, &w, 5.0, f64::INFINITY, &OrbitConfig::default()).unwrap();
        let b = project_boundary(&slice, &[vec![1.0]]).unwrap();
        assert_eq!(b.len(), slice.len());
        assert!(b.points.iter().all(|p| (0.0..1.0).contains(&p[0])));
    }

    #[test]
    fn box_counts() {
        let s = bset(&[0.1, 0.2, 0.7]);
        let kind = TestSetKind::Box {
            lo: vec![0.0],
            hi: vec![0.5],
            x: vec![0.0],
            lattice: vec![vec![1.0]],
        };
        let t = make_test_set(&kind, 1, 1.0).unwrap();
        assert_eq!(count_hits(&s, &t), 2);
        assert_eq!(count_hits(&bset(&[]), &t), 0);
        // shifting wraps around the circle
        let kind2 = TestSetKind::Box {
            lo: vec![0.0],
            hi: vec![0.5],
            x: vec![0.4],
            lattice: vec![vec![1.0]],
        };
        let t2 = make_test_set(&kind2, 1, 1.0).unwrap();
        // p + 0.4 lands in [0, 0.5) mod 1 only for p = 0.7
        assert_eq!(count_hits(&s, &t2), 1);
        let wide = TestSetKind::Box {
            lo: vec![0.0],
            hi: vec![1.5],
            x: vec![0.0],
            lattice: vec![vec![1.0]],
        };
        assert!(matches!(make_test_set(&wide, 1, 1.0), Err(PointSetError::Improper(_))));
    }

    #[test]
    fn disk_arc_fraction_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let z = HPoint::base(2);
        let set = DirectionSet {
            z,
            t: 0.0,
            s: 0.0,
            points: pts
                .iter()
                .map(|&x| SpherePoint {
                    point: z,
                    direction: chart_direction(2, &[x]),
                })
                .collect(),
        };
        for _ in 0..20 {
            let c: f64 = rng.gen();
            let t = make_test_set(
                &TestSetKind::Disk {
                    sigma: 1.0,
                    center: chart_direction(2, &[c]),
                },
                100,
                1.0,
            )
            .unwrap();
            assert!((t.measure() - 0.01).abs() < 1e-15);
            // arc of total length 1/100 on the unit-circumference circle
            let brute = pts
                .iter()
                .filter(|&&x| {
                    let d = (x - c).rem_euclid(1.0);
                    d.min(1.0 - d) <= 0.005
                })
                .count();
            assert_eq!(count_hits(&set, &t), brute);
        }
    }

    #[test]
    fn cap_measure_matches_quadrature() {
        for m in 1..=4 {
            for &rho in &[0.1, 0.7, 2.0] {
                let k = 20000;
                let h = rho / k as f64;
                let full_h = PI / k as f64;
                let simpson = |hh: f64| -> f64 {
                    let mut acc = 0.0;
                    for j in 0..=k {
                        let w = if j == 0 || j == k { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
                        acc += w * (j as f64 * hh).sin().powi(m as i32 - 1);
                    }
                    acc * hh / 3.0
                };
                let expected = simpson(h) / simpson(full_h);
                assert!((cap_measure(m, rho) - expected).abs() < 1e-9 * expected.max(1.0));
            }
            let r = cap_radius(m, 0.01);
            assert!((cap_measure(m, r) - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn chart_round_trip_and_agrees_with_rotation() {
        for &x in &[[0.3, -0.2], [0.0, 1.1], [-0.9, 0.4]] {
            let dir = chart_direction(3, &x);
            let back = direction_chart(&dir);
            assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
            let e = MoebiusMap::chart(&x).unwrap();
            let img = e.apply_boundary(&BoundaryPoint::Infinity).to_ball(3);
            for (a, b) in img.coords().iter().zip(dir.coords()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn box_volume_scaling_and_translation_invariance() {
        let kind = TestSetKind::Box {
            lo: vec![0.0, 0.0],
            hi: vec![0.5, 0.25],
            x: vec![0.0, 0.0],
            lattice: vec![vec![1.0, 0.0], vec![0.3, 1.0]],
        };
        let t = make_test_set(&kind, 64, 2.0).unwrap();
        assert!((t.measure() - 0.125 / 64.0f64.powf(2.0 / 2.0)).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 3.0]).collect();
        let c = [0.37, -0.61];
        let lat = vec![vec![1.0, 0.0], vec![0.3, 1.0]];
        let base = boundary_set_from(3, 0.0, 1.0, &lat, pts.clone());
        let shifted = boundary_set_from(
            3,
            0.0,
            1.0,
            &lat,
            pts.iter().map(|p| vec![p[0] + c[0], p[1] + c[1]]).collect(),
        );
        let kind_shift = TestSetKind::Box {
            lo: vec![0.0, 0.0],
            hi: vec![0.5, 0.25],
            x: vec![-c[0], -c[1]],
            lattice: lat.clone(),
        };
        let ts = make_test_set(&kind_shift, 4, 2.0).unwrap();
        let t0 = make_test_set(
            &TestSetKind::Box {
                lo: vec![0.0, 0.0],
                hi: vec![0.5, 0.25],
                x: vec![0.0, 0.0],
                lattice: lat,
            },
            4,
            2.0,
        )
        .unwrap();
        assert_eq!(count_hits(&base, &t0), count_hits(&shifted, &ts));
    }
}
