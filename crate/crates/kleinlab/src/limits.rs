//! Limiting distributions for the projected orbit statistics: gaps, their
//! density, nearest neighbours and pair correlation.
//!
//! All curves share one engine. For a reference orbit point, translate to the
//! frame where it sits at `i` and the observer lies far away in the direction
//! of `∞`; a second orbit point `p` is a hit at depth `u >= 0` when
//! `a_u k p` lies in the window region `{Im >= 1, Re ∈ window}`. Depths of the
//! reference point below the sphere of radius `t` are distributed with
//! density `δ e^{-δ u}`, so each curve is an average over the rotation `k`
//! (uniform, or driven by the conformal density) of a one-dimensional
//! integral in `u`, truncated at `u_max`.
//!
//! With distances measured on the circle of circumference 1, a scaled
//! separation `L` corresponds to the window `|Re| < π L`.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::empirical::{CurveKind, ScaledDistribution};
use crate::groups::GroupSpec;
use crate::hyperbolic::{ball_direction, polar_decomposition, BallPoint, HPoint, MoebiusMap};
use crate::orbits::{enumerate_ball, OrbitConfig, OrbitError};
use crate::patterson::{AtomicMeasure, Observer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("u_max = {u_max} exceeds l_cutoff - margin = {limit}")]
    Truncation { u_max: f64, limit: f64 },
    #[error("gap formulas are implemented for n = 2 only")]
    Dimension,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

pub type Result<T> = std::result::Result<T, LimitError>;

/// Regions of `H^n` whose orbit counts define the limit distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// `{Re z ∈ ϑ^{-1/δ} A, 1 <= Im z < e^s}` for the box `A = [lo, hi)`.
    Z {
        s: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
        theta: f64,
        delta: f64,
    },
    /// `{Re z ∈ ϑ^{-1/δ} A, e^a <= Im z <= e^b}`.
    Zab {
        a: f64,
        b: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
        theta: f64,
        delta: f64,
    },
    /// Cuspidal cone `{Re z ∈ ϑ^{-1/δ} B_σ, 1 <= Im z <= e^s}` with `B_σ` the
    /// centred ball of volume `σ`.
    Z0 { s: f64, sigma: f64, theta: f64, delta: f64 },
    /// Cone `{z ≠ i : φ_i(z) ∈ B, a < d(i, z) <= b}` for the spherical cap `B`.
    Cone {
        a: f64,
        b: f64,
        center: BallPoint,
        radius: f64,
    },
}

/// Radius of the ball of volume `sigma` in `R^m`.
pub fn ball_radius(m: usize, sigma: f64) -> f64 {
    let unit = match m {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => {
            // π^{m/2} / Γ(m/2 + 1) by the recursion V_m = 2π/m V_{m-2}
            let mut v = if m % 2 == 0 { 1.0 } else { 2.0 };
            let mut k = if m % 2 == 0 { 2 } else { 3 };
            while k <= m {
                v *= 2.0 * PI / k as f64;
                k += 2;
            }
            v
        }
    };
    (sigma / unit).powf(1.0 / m as f64)
}

fn in_scaled_box(x: &[f64], lo: &[f64], hi: &[f64], theta: f64, delta: f64) -> bool {
    let f = theta.powf(-1.0 / delta);
    x.iter().zip(lo).zip(hi).all(|((v, a), b)| *v >= a * f && *v < b * f)
}

pub fn region_contains(region: &Region, z: &HPoint) -> bool {
    match region {
        Region::Z { s, lo, hi, theta, delta } => {
            z.y() >= 1.0 && (s.is_infinite() || z.y() < s.exp()) && in_scaled_box(z.x(), lo, hi, *theta, *delta)
        }
        Region::Zab { a, b, lo, hi, theta, delta } => {
            z.y() >= a.exp() && (b.is_infinite() || z.y() <= b.exp()) && in_scaled_box(z.x(), lo, hi, *theta, *delta)
        }
        Region::Z0 { s, sigma, theta, delta } => {
            let r = ball_radius(z.n() - 1, *sigma) * theta.powf(-1.0 / delta);
            let norm = z.x().iter().map(|v| v * v).sum::<f64>().sqrt();
            norm <= r && z.y() >= 1.0 && (s.is_infinite() || z.y() <= s.exp())
        }
        Region::Cone { a, b, center, radius } => {
            let i = HPoint::base(z.n());
            let d = crate::hyperbolic::hyp_distance(&i, z);
            let Ok(dir) = ball_direction(&i, z) else {
                return false;
            };
            let dot: f64 = dir.coords().iter().zip(center.coords()).map(|(p, q)| p * q).sum::<f64>() / center.norm();
            d > *a && d <= *b && dot.clamp(-1.0, 1.0).acos() <= *radius
        }
    }
}

/// Polar data of `g_w^{-1} γ w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaDatum {
    pub map: MoebiusMap,
    /// `d(w, γ w)`.
    pub l: f64,
    /// Rotation angle with `g_w^{-1} γ w = k(θ)(e^l i)` (`n = 2`; zero otherwise).
    pub theta_rot: f64,
    /// Unit direction of `g_w^{-1} γ w` seen from `i`.
    pub direction: BallPoint,
    pub word: Vec<u16>,
}

impl GammaDatum {
    pub fn from_point(map: MoebiusMap, q: &HPoint, word: Vec<u16>) -> Option<Self> {
        let i = HPoint::base(q.n());
        let direction = ball_direction(&i, q).ok()?;
        let l = crate::hyperbolic::hyp_distance(&i, q);
        let theta_rot = if q.n() == 2 { polar_decomposition(q).1 } else { 0.0 };
        Some(Self {
            map,
            l,
            theta_rot,
            direction,
            word,
        })
    }
}

/// All `γ` with `0 < d(w, γ w) <= l_cutoff`, one per orbit point, in polar form.
pub fn gamma_data(spec: &GroupSpec, w: &HPoint, l_cutoff: f64, cfg: &OrbitConfig) -> Result<Vec<GammaDatum>> {
    let slice = enumerate_ball(spec, w, w, l_cutoff, 0.0, cfg)?;
    let gw_inv = MoebiusMap::to_point(w).inverse();
    Ok(slice
        .points
        .par_iter()
        .filter_map(|p| {
            let q = gw_inv.apply_point(&p.point);
            GammaDatum::from_point(p.map, &q, p.word.clone())
        })
        .filter(|g| g.l > 1e-9)
        .collect())
}

/// Membership of `(r, θ)` in `E(γ)`, by applying `a_{-r} k(θ + θ(γ))` to
/// `e^{l} i` and testing the region `Z(∞, [0, L))`. Any real `r` is accepted.
pub fn e_gamma_contains(g: &GammaDatum, r: f64, theta: f64, l: f64, theta_hat: f64, delta_hat: f64) -> bool {
    let p = HPoint::vertical(2, g.l.exp()).expect("positive height");
    let m = MoebiusMap::dilation(2, -r) * MoebiusMap::rotation(theta + g.theta_rot);
    let region = Region::Z {
        s: f64::INFINITY,
        lo: vec![0.0],
        hi: vec![l],
        theta: theta_hat,
        delta: delta_hat,
    };
    region_contains(&region, &m.apply_point(&p))
}

/// Closed form of [`e_gamma_contains`]:
/// `e^{-r} / (cosh l - sinh l cos 2φ) >= 1` and
/// `0 <= e^{-r} sinh l sin 2φ / (cosh l - sinh l cos 2φ) < ϑ^{-1/δ} L`
/// with `φ = θ + θ(γ)`. The second return value is the distance of the
/// defining quantities to the nearest boundary of the region.
pub fn e_gamma_closed_form(g: &GammaDatum, r: f64, theta: f64, l: f64, theta_hat: f64, delta_hat: f64) -> (bool, f64) {
    let phi2 = 2.0 * (theta + g.theta_rot);
    let den = g.l.cosh() - g.l.sinh() * phi2.cos();
    let im = (-r).exp() / den;
    let re = (-r).exp() * g.l.sinh() * phi2.sin() / den;
    let w = theta_hat.powf(-1.0 / delta_hat) * l;
    let inside = im >= 1.0 && re >= 0.0 && re < w;
    let margin = (im - 1.0).abs().min(re.abs()).min((re - w).abs());
    (inside, margin)
}

/// Quadrature in the rotation variable.
#[derive(Debug, Clone, PartialEq)]
pub enum RotationNodes {
    /// `n = 2`: angles `θ_k ∈ [0, π)` with weights summing to one.
    Angles(Vec<(f64, f64)>),
    /// Any `n`: observer directions (unit vectors) with weights.
    Directions(Vec<(BallPoint, f64)>),
}

impl RotationNodes {
    /// Uniform midpoint rule with `k` nodes on `[0, π)` (Haar measure on `K`).
    pub fn lattice(k: usize) -> Self {
        RotationNodes::Angles((0..k).map(|j| ((j as f64 + 0.5) * PI / k as f64, 1.0 / k as f64)).collect())
    }

    /// Rotations driven by an interior atomic measure: the atom `ξ` gives the
    /// rotation `k(θ)` with `k(θ) g_w^{-1} ξ = ∞`.
    pub fn from_measure(m: &AtomicMeasure, w: &HPoint) -> Result<Self> {
        if m.observer != Observer::Interior {
            return Err(LimitError::Param("rotation nodes need an interior measure".into()));
        }
        let gw_inv = MoebiusMap::to_point(w).inverse();
        let total = m.total_mass;
        if m.n == 2 {
            let nodes = m
                .atoms
                .iter()
                .map(|a| {
                    let xi = gw_inv.apply_boundary(&a.boundary_point(m.observer));
                    let theta = match xi.coords() {
                        Some(x) => 1f64.atan2(-x[0]),
                        None => 0.0,
                    };
                    (theta.rem_euclid(PI), a.weight / total)
                })
                .collect();
            Ok(RotationNodes::Angles(nodes))
        } else {
            let nodes = m
                .atoms
                .iter()
                .map(|a| {
                    let xi = gw_inv.apply_boundary(&a.boundary_point(m.observer));
                    (xi.to_ball(m.n), a.weight / total)
                })
                .collect();
            Ok(RotationNodes::Directions(nodes))
        }
    }

    /// Uniformly random observer directions on `S^{n-1}`.
    pub fn random_directions(n: usize, k: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = crate::empirical::rng_stream(seed, 0);
        let nodes = (0..k)
            .map(|_| {
                let mut v: Vec<f64> = (0..n)
                    .map(|_| {
                        // Box-Muller
                        let u1: f64 = rng.gen::<f64>().max(1e-300);
                        let u2: f64 = rng.gen();
                        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
                    })
                    .collect();
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                v.iter_mut().for_each(|c| *c /= norm);
                (BallPoint::from_coords(&v), 1.0 / k as f64)
            })
            .collect();
        RotationNodes::Directions(nodes)
    }

    fn len(&self) -> usize {
        match self {
            RotationNodes::Angles(v) => v.len(),
            RotationNodes::Directions(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitConfig {
    pub delta: f64,
    pub l_cutoff: f64,
    pub margin: f64,
    /// Upper end of the depth integral; defaults to `l_cutoff - margin`.
    pub u_max: Option<f64>,
    /// Window half-width per unit of scaled distance (π on the circle of
    /// circumference 1, 1/2 when distances are angles in radians).
    pub window_scale: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            l_cutoff: 10.0,
            margin: 2.0,
            u_max: None,
            window_scale: PI,
        }
    }
}

impl LimitConfig {
    pub fn depth(&self) -> Result<f64> {
        let limit = self.l_cutoff - self.margin;
        let u = self.u_max.unwrap_or(limit);
        if u > limit + 1e-12 {
            return Err(LimitError::Truncation { u_max: u, limit });
        }
        if !(u > 0.0) {
            return Err(LimitError::Param(format!("u_max must be positive, got {u}")));
        }
        Ok(u)
    }

    /// Fitted prefactor normalizing the depth density on `[0, u_max]`.
    pub fn prefactor(&self) -> Result<f64> {
        Ok(1.0 / (1.0 - (-self.delta * self.depth()?).exp()))
    }
}

/// A limit curve with its unnormalized counterpart and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCurve {
    /// Fitted (normalized) values.
    pub curve: ScaledDistribution,
    pub raw: Vec<f64>,
    pub prefactor: f64,
    /// Share of the integrand mass in the last 10% of the depth range.
    pub tail_fraction: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Window {
    /// `0 <= Re < W`
    OneSided,
    /// `|Re| < W`
    Symmetric,
}

/// Per-node outcome of the depth integral.
#[derive(Default, Clone, Copy)]
struct NodeResult {
    /// `∫ δ e^{-δu} du` over depths with no hit.
    uncovered: f64,
    /// Same, restricted to the last 10% of the range.
    uncovered_tail: f64,
    /// `Σ δ e^{-δ b}` over exposed right ends `b` of the hit set.
    exposed: f64,
    /// `Σ_γ ∫_{hit} δ e^{-δu} du` (with multiplicity).
    hit_mass: f64,
}

struct Engine<'a> {
    data: &'a [GammaDatum],
    delta: f64,
    u_max: f64,
}

impl Engine<'_> {
    fn mass(&self, a: f64, b: f64) -> f64 {
        (-self.delta * a).exp() - (-self.delta * b).exp()
    }

    /// Hit interval `[lo, hi)` in `u` for height `im` and horizontal offset
    /// `re` (already signed or absolute per window), plus whether the right
    /// end comes from the window rather than the truncation.
    fn interval(&self, im: f64, re: f64, w: f64) -> Option<(f64, f64, bool)> {
        if re < 0.0 || im <= 0.0 {
            return None;
        }
        let lo = (-im.ln()).max(0.0);
        let (hi, exposed) = if re == 0.0 {
            (self.u_max, false)
        } else {
            let h = (w / re).ln();
            if h < self.u_max {
                (h, true)
            } else {
                (self.u_max, false)
            }
        };
        (lo < hi).then_some((lo, hi, exposed))
    }

    fn reduce(&self, mut iv: Vec<(f64, f64, bool)>) -> NodeResult {
        let total = self.mass(0.0, self.u_max);
        let tail_start = 0.9 * self.u_max;
        let tail_total = self.mass(tail_start, self.u_max);
        let hit_mass: f64 = iv.iter().map(|&(a, b, _)| self.mass(a, b)).sum();
        iv.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut covered = 0.0;
        let mut covered_tail = 0.0;
        let mut exposed = 0.0;
        let mut k = 0;
        while k < iv.len() {
            let (a, mut b, mut ex) = iv[k];
            k += 1;
            while k < iv.len() && iv[k].0 <= b {
                if iv[k].1 > b {
                    b = iv[k].1;
                    ex = iv[k].2;
                }
                k += 1;
            }
            covered += self.mass(a, b);
            covered_tail += self.mass(a.max(tail_start), b.max(tail_start));
            if ex && b < self.u_max {
                exposed += self.delta * (-self.delta * b).exp();
            }
        }
        NodeResult {
            uncovered: total - covered,
            uncovered_tail: tail_total - covered_tail,
            exposed,
            hit_mass,
        }
    }

    /// Polar-angle windows `α ∈ [0, 2π)` outside which `γ` cannot hit.
    fn alpha_windows(sinh_l: f64, w: f64, window: Window) -> Vec<(f64, f64)> {
        let a = if w >= sinh_l { PI / 2.0 } else { (w / sinh_l).asin() };
        match window {
            Window::OneSided => {
                if w >= sinh_l {
                    vec![(0.0, PI)]
                } else {
                    vec![(0.0, a), (PI - a, PI)]
                }
            }
            Window::Symmetric => {
                if w >= sinh_l {
                    vec![(0.0, 2.0 * PI)]
                } else {
                    vec![(0.0, a), (PI - a, PI + a), (2.0 * PI - a, 2.0 * PI)]
                }
            }
        }
    }

    /// `n = 2`: bucket the γ list by rotation node, then integrate per node.
    fn run_angles(&self, nodes: &[(f64, f64)], w: f64, window: Window) -> Vec<NodeResult> {
        let k = nodes.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| nodes[a].0.total_cmp(&nodes[b].0));
        let sorted: Vec<f64> = order.iter().map(|&j| nodes[j].0.rem_euclid(PI)).collect();
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); k];
        let pad = 1e-9;
        for (gi, g) in self.data.iter().enumerate() {
            for (a0, a1) in Self::alpha_windows(g.l.sinh(), w, window) {
                // θ = α/2 - θ(γ) modulo π
                let t0 = a0 / 2.0 - g.theta_rot - pad;
                let t1 = a1 / 2.0 - g.theta_rot + pad;
                if t1 - t0 >= PI {
                    for b in buckets.iter_mut() {
                        b.push(gi as u32);
                    }
                    continue;
                }
                let s0 = t0.rem_euclid(PI);
                let s1 = s0 + (t1 - t0);
                let mut push_range = |lo: f64, hi: f64| {
                    let i0 = sorted.partition_point(|&x| x < lo);
                    let i1 = sorted.partition_point(|&x| x <= hi);
                    for idx in i0..i1 {
                        buckets[idx].push(gi as u32);
                    }
                };
                if s1 <= PI {
                    push_range(s0, s1);
                } else {
                    push_range(s0, PI);
                    push_range(0.0, s1 - PI);
                }
            }
        }
        let per_sorted: Vec<NodeResult> = buckets
            .par_iter_mut()
            .enumerate()
            .map(|(idx, cand)| {
                cand.sort_unstable();
                cand.dedup();
                let theta = sorted[idx];
                let iv: Vec<(f64, f64, bool)> = cand
                    .iter()
                    .filter_map(|&gi| {
                        let g = &self.data[gi as usize];
                        let alpha = 2.0 * (theta + g.theta_rot);
                        let (sa, ca) = alpha.sin_cos();
                        let im = 1.0 / (g.l.cosh() - g.l.sinh() * ca);
                        let re = g.l.sinh() * sa * im;
                        let re = match window {
                            Window::OneSided => re,
                            Window::Symmetric => re.abs(),
                        };
                        self.interval(im, re, w)
                    })
                    .collect();
                self.reduce(iv)
            })
            .collect();
        let mut out = vec![NodeResult::default(); k];
        for (idx, &j) in order.iter().enumerate() {
            out[j] = per_sorted[idx];
        }
        out
    }

    /// Any `n`: every γ is tested against every observer direction.
    fn run_directions(&self, nodes: &[(BallPoint, f64)], w: f64) -> Vec<NodeResult> {
        nodes
            .par_iter()
            .map(|(eta, _)| {
                let en = eta.norm();
                let iv: Vec<(f64, f64, bool)> = self
                    .data
                    .iter()
                    .filter_map(|g| {
                        let ca = (g.direction.coords().iter().zip(eta.coords()).map(|(a, b)| a * b).sum::<f64>()
                            / en)
                            .clamp(-1.0, 1.0);
                        let sa = (1.0 - ca * ca).sqrt();
                        if g.l.sinh() * sa >= w {
                            return None;
                        }
                        let im = 1.0 / (g.l.cosh() - g.l.sinh() * ca);
                        let re = g.l.sinh() * sa * im;
                        self.interval(im, re, w)
                    })
                    .collect();
                self.reduce(iv)
            })
            .collect()
    }

    fn run(&self, nodes: &RotationNodes, w: f64, window: Window) -> Vec<(NodeResult, f64)> {
        match nodes {
            RotationNodes::Angles(v) => {
                let total: f64 = v.iter().map(|x| x.1).sum();
                self.run_angles(v, w, window)
                    .into_iter()
                    .zip(v.iter().map(|x| x.1 / total))
                    .collect()
            }
            RotationNodes::Directions(v) => {
                if window == Window::OneSided {
                    // one-sided windows need an orientation; only n = 2 has one
                    return Vec::new();
                }
                let total: f64 = v.iter().map(|x| x.1).sum();
                self.run_directions(v, w)
                    .into_iter()
                    .zip(v.iter().map(|x| x.1 / total))
                    .collect()
            }
        }
    }
}

fn empty_curve(kind: CurveKind, grid: &[f64]) -> ScaledDistribution {
    ScaledDistribution {
        kind,
        abscissae: grid.to_vec(),
        values: vec![0.0; grid.len()],
        stderr: vec![0.0; grid.len()],
        scale_factor_applied: false,
        sample_count: 0,
        t: f64::INFINITY,
        s: f64::INFINITY,
    }
}

fn survival_curve(
    data: &[GammaDatum],
    nodes: &RotationNodes,
    grid: &[f64],
    cfg: &LimitConfig,
    kind: CurveKind,
    window: Window,
) -> Result<LimitCurve> {
    if nodes.len() == 0 {
        return Err(LimitError::Param("no rotation nodes".into()));
    }
    if window == Window::OneSided && matches!(nodes, RotationNodes::Directions(_)) {
        return Err(LimitError::Dimension);
    }
    let u_max = cfg.depth()?;
    let pref = cfg.prefactor()?;
    let engine = Engine {
        data,
        delta: cfg.delta,
        u_max,
    };
    let mut curve = empty_curve(kind, grid);
    curve.sample_count = data.len();
    let mut raw = Vec::with_capacity(grid.len());
    let mut tail = Vec::with_capacity(grid.len());
    for (j, &l) in grid.iter().enumerate() {
        let w = cfg.window_scale * l.max(0.0);
        let res = engine.run(nodes, w, window);
        let unc: f64 = res.iter().map(|(r, wt)| r.uncovered * wt).sum();
        let unc_tail: f64 = res.iter().map(|(r, wt)| r.uncovered_tail * wt).sum();
        raw.push(unc);
        tail.push(if unc > 0.0 { unc_tail / unc } else { 0.0 });
        curve.values[j] = pref * unc;
    }
    let mut warnings = Vec::new();
    if data.is_empty() {
        warnings.push("empty γ list: the product is identically one and the curve is the truncated depth integral".into());
    }
    if tail.iter().any(|&f| f > 0.05) {
        warnings.push("more than 5% of the integrand lies in the last 10% of the depth range".into());
    }
    Ok(LimitCurve {
        curve,
        raw,
        prefactor: pref,
        tail_fraction: tail,
        warnings,
    })
}

/// Limiting gap survival function `F(L)` (`n = 2`).
pub fn gap_limit_cdf(data: &[GammaDatum], nodes: &RotationNodes, grid: &[f64], cfg: &LimitConfig) -> Result<LimitCurve> {
    survival_curve(data, nodes, grid, cfg, CurveKind::Gaps, Window::OneSided)
}

/// Limiting nearest-neighbour function `J(L)`.
pub fn nearest_neighbor_limit(
    data: &[GammaDatum],
    nodes: &RotationNodes,
    grid: &[f64],
    cfg: &LimitConfig,
) -> Result<LimitCurve> {
    survival_curve(data, nodes, grid, cfg, CurveKind::NearestNeighbor, Window::Symmetric)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityValue {
    pub l: f64,
    /// Exposed-endpoint formula for `-F'(L)`.
    pub formula: f64,
    /// `-(F(L + h) - F(L - h)) / 2h`.
    pub finite_difference: f64,
    pub h: f64,
}

/// Limiting gap density `P(L) = -F'(L)`, by the exposed-endpoint formula and
/// by a centred finite difference of [`gap_limit_cdf`].
pub fn gap_limit_density(
    data: &[GammaDatum],
    nodes: &RotationNodes,
    l: f64,
    h: f64,
    cfg: &LimitConfig,
) -> Result<DensityValue> {
    if !(l > 0.0) || !(h > 0.0) || h >= l {
        return Err(LimitError::Param("need 0 < h < L".into()));
    }
    if matches!(nodes, RotationNodes::Directions(_)) {
        return Err(LimitError::Dimension);
    }
    let u_max = cfg.depth()?;
    let pref = cfg.prefactor()?;
    let engine = Engine {
        data,
        delta: cfg.delta,
        u_max,
    };
    let res = engine.run(nodes, cfg.window_scale * l, Window::OneSided);
    let exposed: f64 = res.iter().map(|(r, wt)| r.exposed * wt).sum();
    let formula = pref * exposed / l;
    let f = gap_limit_cdf(data, nodes, &[l - h, l + h], cfg)?;
    let fd = -(f.curve.values[1] - f.curve.values[0]) / (2.0 * h);
    Ok(DensityValue {
        l,
        formula,
        finite_difference: fd,
        h,
    })
}

/// Density curve on a grid (formula values, finite differences in `stderr`
/// are not meaningful and left at zero).
pub fn gap_density_curve(
    data: &[GammaDatum],
    nodes: &RotationNodes,
    grid: &[f64],
    h: f64,
    cfg: &LimitConfig,
) -> Result<(ScaledDistribution, Vec<DensityValue>)> {
    let vals: Vec<DensityValue> = grid
        .iter()
        .map(|&l| gap_limit_density(data, nodes, l, h, cfg))
        .collect::<Result<_>>()?;
    let mut curve = empty_curve(CurveKind::GapDensity, grid);
    curve.values = vals.iter().map(|v| v.formula).collect();
    curve.sample_count = data.len();
    Ok((curve, vals))
}

/// Limiting pair correlation: mean number of other points within scaled
/// distance `ξ`. `calibration = Some((ξ_0, R_0))` rescales the curve to pass
/// through `R_0` at `ξ_0`; the unscaled values are kept in `raw`.
pub fn pair_correlation_limit(
    data: &[GammaDatum],
    nodes: &RotationNodes,
    grid: &[f64],
    cfg: &LimitConfig,
    calibration: Option<(f64, f64)>,
) -> Result<LimitCurve> {
    let u_max = cfg.depth()?;
    let pref = cfg.prefactor()?;
    let engine = Engine {
        data,
        delta: cfg.delta,
        u_max,
    };
    let eval = |xi: f64| -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        engine
            .run(nodes, cfg.window_scale * xi, Window::Symmetric)
            .iter()
            .map(|(r, wt)| r.hit_mass * wt)
            .sum::<f64>()
            * pref
    };
    let raw: Vec<f64> = grid.iter().map(|&x| eval(x)).collect();
    let c = match calibration {
        Some((xi0, r0)) => {
            let base = eval(xi0);
            if !(base > 0.0) {
                return Err(LimitError::Param("calibration point has zero limit value".into()));
            }
            r0 / base
        }
        None => 1.0,
    };
    let mut curve = empty_curve(CurveKind::PairCorrelation, grid);
    curve.values = raw.iter().map(|v| v * c).collect();
    curve.sample_count = data.len();
    Ok(LimitCurve {
        curve,
        raw,
        prefactor: pref * c,
        tail_fraction: vec![0.0; grid.len()],
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::psl2z;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn datum(l: f64, theta: f64) -> GammaDatum {
        let q = MoebiusMap::rotation(theta).apply_point(&HPoint::vertical(2, l.exp()).unwrap());
        GammaDatum::from_point(MoebiusMap::identity(2), &q, vec![]).unwrap()
    }

    #[test]
    fn region_examples() {
        let z = Region::Z { s: f64::INFINITY, lo: vec![0.0], hi: vec![1.0], theta: 1.0, delta: 1.0 };
        assert!(region_contains(&z, &HPoint::new(&[0.5], 2.0).unwrap()));
        assert!(!region_contains(&z, &HPoint::new(&[0.5], 0.9).unwrap()));
        let z0 = Region::Z0 { s: 1.0, sigma: 0.6, theta: 1.0, delta: 1.0 };
        assert!(region_contains(&z0, &HPoint::new(&[0.29], 2.0).unwrap()));
        assert!(region_contains(&z0, &HPoint::new(&[-0.3], 1.0f64.exp()).unwrap()));
        assert!(!region_contains(&z0, &HPoint::new(&[0.31], 2.0).unwrap()));
        assert!(!region_contains(&z0, &HPoint::new(&[0.0], 2.8).unwrap()));
        let zab = Region::Zab { a: -1.0, b: 0.0, lo: vec![0.0], hi: vec![1.0], theta: 4.0, delta: 2.0 };
        assert!(region_contains(&zab, &HPoint::new(&[0.4], 0.5).unwrap()));
        assert!(!region_contains(&zab, &HPoint::new(&[0.6], 0.5).unwrap()));
        let cone = Region::Cone {
            a: 0.0,
            b: 2.0,
            center: BallPoint::from_coords(&[0.0, 1.0]),
            radius: 0.1,
        };
        assert!(region_contains(&cone, &HPoint::new(&[0.0], 3.0).unwrap()));
        assert!(!region_contains(&cone, &HPoint::new(&[0.0], 10.0).unwrap()));
        assert!(!region_contains(&cone, &HPoint::new(&[1.0], 3.0).unwrap()));
        assert!((ball_radius(3, 4.0 * PI / 3.0) - 1.0).abs() < 1e-12);
        assert!((ball_radius(5, 8.0 * PI * PI / 15.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn e_gamma_examples() {
        let g = datum(2.0, 0.0);
        assert!(e_gamma_contains(&g, 0.0, 0.0, 1.0, 1.0, 1.0));
        assert!(!e_gamma_contains(&g, 0.0, PI / 4.0, 1.0, 1.0, 1.0));
        let q = MoebiusMap::rotation(PI / 4.0).apply_point(&HPoint::vertical(2, 2f64.exp()).unwrap());
        assert!((q.y() - 1.0 / 2f64.cosh()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for _ in 0..10_000 {
            let g = datum(rng.gen::<f64>() * 6.0, rng.gen::<f64>() * PI);
            let r = rng.gen::<f64>() * 8.0 - 4.0;
            let th = rng.gen::<f64>() * PI;
            let l = rng.gen::<f64>() * 3.0;
            let (closed, margin) = e_gamma_closed_form(&g, r, th, l, 1.3, 0.9);
            if margin > 1e-9 {
                assert_eq!(closed, e_gamma_contains(&g, r, th, l, 1.3, 0.9));
                checked += 1;
            }
        }
        assert!(checked > 9_900);
    }

    #[test]
    fn polar_reconstruction() {
        let g = psl2z();
        let w = HPoint::new(&[0.0], 2.0).unwrap();
        let data = gamma_data(&g, &w, 5.0, &OrbitConfig::default()).unwrap();
        let gw_inv = MoebiusMap::to_point(&w).inverse();
        for d in &data {
            let q = gw_inv.apply_point(&d.map.apply_point(&w));
            let rec = MoebiusMap::rotation(d.theta_rot).apply_point(&HPoint::vertical(2, d.l.exp()).unwrap());
            assert!(crate::hyperbolic::hyp_distance(&q, &rec) < 1e-9);
        }
    }

    #[test]
    fn empty_data_gives_one() {
        let cfg = LimitConfig::default();
        let nodes = RotationNodes::lattice(16);
        let f = gap_limit_cdf(&[], &nodes, &[0.5, 1.0], &cfg).unwrap();
        assert!(f.curve.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((f.raw[0] - (1.0 - (-8.0f64).exp())).abs() < 1e-12);
        assert_eq!(f.warnings.len(), 1);
        let bad = LimitConfig { u_max: Some(9.0), ..LimitConfig::default() };
        assert!(matches!(gap_limit_cdf(&[], &nodes, &[1.0], &bad), Err(LimitError::Truncation { .. })));
    }

    #[test]
    fn monotone_curves_and_weight_invariance() {
        let g = psl2z();
        let w = HPoint::new(&[0.0], 2.0).unwrap();
        let cfg = LimitConfig { l_cutoff: 7.0, ..LimitConfig::default() };
        let data = gamma_data(&g, &w, cfg.l_cutoff, &OrbitConfig::default()).unwrap();
        let nodes = RotationNodes::lattice(400);
        let grid: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let f = gap_limit_cdf(&data, &nodes, &grid, &cfg).unwrap();
        let j = nearest_neighbor_limit(&data, &nodes, &grid, &cfg).unwrap();
        let r = pair_correlation_limit(&data, &nodes, &grid, &cfg, None).unwrap();
        assert!((f.curve.values[0] - 1.0).abs() < 1e-12);
        assert!((j.curve.values[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.curve.values[0], 0.0);
        for k in 1..grid.len() {
            assert!(f.curve.values[k] <= f.curve.values[k - 1] + 1e-12);
            assert!(j.curve.values[k] <= j.curve.values[k - 1] + 1e-12);
            assert!(r.curve.values[k] >= r.curve.values[k - 1] - 1e-12);
            assert!(j.curve.values[k] <= f.curve.values[k] + 1e-12);
        }
        let scaled = RotationNodes::Angles(match &nodes {
            RotationNodes::Angles(v) => v.iter().map(|(t, w)| (*t, w * 3.7)).collect(),
            _ => unreachable!(),
        });
        let f2 = gap_limit_cdf(&data, &scaled, &grid, &cfg).unwrap();
        for (a, b) in f.curve.values.iter().zip(&f2.curve.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn direction_engine_matches_angle_engine() {
        // symmetric windows in n = 2 through both code paths
        let g = psl2z();
        let w = HPoint::new(&[0.0], 2.0).unwrap();
        let cfg = LimitConfig { l_cutoff: 6.0, ..LimitConfig::default() };
        let data = gamma_data(&g, &w, cfg.l_cutoff, &OrbitConfig::default()).unwrap();
        let angles = RotationNodes::lattice(200);
        // k(θ) sends the direction with ball angle -2θ from north to north
        let dirs = RotationNodes::Directions(match &angles {
            RotationNodes::Angles(v) => v
                .iter()
                .map(|(t, wt)| (BallPoint::from_coords(&[-(2.0 * t).sin(), (2.0 * t).cos()]), *wt))
                .collect(),
            _ => unreachable!(),
        });
        let grid = [0.3, 0.8, 1.5];
        let a = nearest_neighbor_limit(&data, &angles, &grid, &cfg).unwrap();
        let b = nearest_neighbor_limit(&data, &dirs, &grid, &cfg).unwrap();
        for (x, y) in a.curve.values.iter().zip(&b.curve.values) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        let ra = pair_correlation_limit(&data, &angles, &grid, &cfg, None).unwrap();
        let rb = pair_correlation_limit(&data, &dirs, &grid, &cfg, None).unwrap();
        for (x, y) in ra.curve.values.iter().zip(&rb.curve.values) {
            assert!((x - y).abs() < 1e-9 * x.max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn density_matches_finite_difference_on_toy_data() {
        let data: Vec<GammaDatum> = (0..40)
            .map(|k| datum(1.0 + 0.1 * k as f64, 0.37 * k as f64 % PI))
            .collect();
        let cfg = LimitConfig { l_cutoff: 8.0, ..LimitConfig::default() };
        let nodes = RotationNodes::lattice(2000);
        let mut compared = 0;
        for l in [0.3, 0.7, 1.2] {
            let d = gap_limit_density(&data, &nodes, l, 1e-3, &cfg).unwrap();
            assert!(d.formula >= 0.0);
            if d.finite_difference.abs() > 0.05 {
                assert!((d.formula / d.finite_difference - 1.0).abs() < 0.05, "{d:?}");
                compared += 1;
            }
        }
        assert!(compared >= 2);
    }
}
