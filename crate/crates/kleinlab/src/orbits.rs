//! Orbit enumeration inside hyperbolic balls and horoballs.
//!
//! The search walks the Cayley graph breadth first, multiplying group elements
//! on the right by generators, and keeps one representative per orbit point.
//! A branch is abandoned once its orbit point leaves the target region
//! enlarged by the slack `B = max_g d(g w, w)` (times a configurable factor).
//! Points are identified when their hyperbolic distance is below the dedup
//! tolerance; lookups go through a hash grid in `(log y, x / y)`.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::clifford::MAX_DIM;
use crate::groups::{detect_stabilizer, GroupSpec, StabilizerWord};
use crate::hyperbolic::{hyp_distance, HPoint, MoebiusMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error("invalid window: {0}")]
    Window(String),
    #[error("brute-force enumeration needs {needed} words, over the budget of {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("orbit cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, OrbitError>;

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitConfig {
    /// Multiplier on the generator displacement `B` used for pruning.
    pub slack: f64,
    /// Maximum number of distinct points visited before giving up.
    pub budget: usize,
    /// Hyperbolic distance under which two orbit points are identified.
    pub dedup_tol: f64,
    /// Word depth for detecting the stabilizer of `w`.
    pub stabilizer_depth: usize,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            slack: 1.0,
            budget: 10_000_000,
            dedup_tol: 1e-7,
            stabilizer_depth: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrbitMode {
    /// Points with `s < d(γw, z) < t`.
    Ball { z: HPoint, t: f64, s: f64 },
    /// Points with `e^{-t} <= Im(γw) < e^{s-t}`, reduced modulo the cusp lattice.
    Horoball { t: f64, s: f64 },
    /// All points reachable by words of bounded length.
    Words { depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitPoint {
    /// `γw` (reduced into the lattice cell in horoball mode).
    pub point: HPoint,
    /// Indices into [`GroupSpec::closed_generators`].
    pub word: Vec<u16>,
    pub word_length: usize,
    /// `d(γw, z)` in ball mode, `-log Im(γw)` in horoball mode, `d(γw, w)` for words.
    pub displacement: f64,
    /// `γ = n_+(translation) · replay(word)`.
    pub map: MoebiusMap,
    /// Left translation from the lattice reduction (zero vector otherwise).
    pub translation: Vec<f64>,
}

impl OrbitPoint {
    /// Orbit point before reduction modulo the cusp lattice.
    pub fn unreduced(&self) -> HPoint {
        let x: Vec<f64> = self
            .point
            .x()
            .iter()
            .zip(&self.translation)
            .map(|(a, b)| a - b)
            .collect();
        HPoint::new(&x, self.point.y()).expect("height stays positive")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSlice {
    pub mode: OrbitMode,
    pub w: HPoint,
    pub points: Vec<OrbitPoint>,
    pub dedup_tolerance: f64,
    /// False when the point budget ran out before the search finished.
    pub complete: bool,
    /// Number of distinct points visited, including pruning margin.
    pub visited: usize,
}

impl OrbitSlice {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points with displacement in `(s, t)` (ball) or heights in
    /// `[e^{-t}, e^{s-t})` (horoball), for a sub-window of the slice.
    pub fn count_within(&self, t: f64, s: f64) -> usize {
        match self.mode {
            OrbitMode::Ball { .. } => self
                .points
                .iter()
                .filter(|p| p.displacement > s && p.displacement < t)
                .count(),
            OrbitMode::Horoball { .. } => self
                .points
                .iter()
                .filter(|p| in_height_window(p.point.y(), t, s))
                .count(),
            OrbitMode::Words { .. } => self.points.len(),
        }
    }

    /// Checks the invariants: word replay, displacement, window and
    /// separation. Returns a description of the first violation.
    pub fn validate(&self, spec: &GroupSpec) -> std::result::Result<(), String> {
        let gens = spec.closed_generators();
        for (k, p) in self.points.iter().enumerate() {
            let replay = p
                .word
                .iter()
                .fold(MoebiusMap::identity(spec.dimension), |acc, &g| acc * gens[g as usize].map);
            let full = MoebiusMap::translation(&p.translation) * replay;
            let scale = 1.0 + full.max_entry();
            if full.projective_distance(&p.map) > 1e-9 * scale * scale {
                return Err(format!("point {k}: word does not replay to the map"));
            }
            let image = p.map.apply_point(&self.w);
            if hyp_distance(&image, &p.point) > 1e-7 {
                return Err(format!("point {k}: map does not send w to the point"));
            }
            let expected = match self.mode {
                OrbitMode::Ball { z, .. } => hyp_distance(&p.point, &z),
                OrbitMode::Horoball { .. } => -p.point.y().ln(),
                OrbitMode::Words { .. } => hyp_distance(&p.point, &self.w),
            };
            if (expected - p.displacement).abs() > 1e-9 {
                return Err(format!("point {k}: displacement mismatch"));
            }
            let inside = match self.mode {
                OrbitMode::Ball { t, s, .. } => p.displacement > s && p.displacement < t,
                OrbitMode::Horoball { t, s } => in_height_window(p.point.y(), t, s),
                OrbitMode::Words { .. } => true,
            };
            if !inside {
                return Err(format!("point {k}: outside the slice window"));
            }
        }
        let mut index = PointIndex::new();
        for p in &self.points {
            if index.find(&p.point, self.dedup_tolerance).is_some() {
                return Err("two points closer than the dedup tolerance".into());
            }
            index.insert(p.point);
        }
        Ok(())
    }
}

fn in_height_window(y: f64, t: f64, s: f64) -> bool {
    let ly = y.ln();
    ly >= -t && (s.is_infinite() || ly < s - t)
}

/// Hash grid over `H^n` for near-duplicate lookups in the hyperbolic metric.
pub(crate) struct PointIndex {
    cell: f64,
    buckets: HashMap<[i64; MAX_DIM + 1], Vec<usize>>,
    points: Vec<HPoint>,
}

impl PointIndex {
    pub(crate) fn new() -> Self {
        Self {
            cell: 1e-3,
            buckets: HashMap::new(),
            points: Vec::new(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.points.len()
    }

    fn key(&self, p: &HPoint, k: i64) -> [i64; MAX_DIM + 1] {
        let yq = (k as f64 * self.cell).exp();
        let mut key = [0i64; MAX_DIM + 1];
        key[0] = k;
        for (j, x) in p.x().iter().enumerate() {
            key[j + 1] = (x / (self.cell * yq)).floor() as i64;
        }
        key
    }

    pub(crate) fn find(&self, p: &HPoint, tol: f64) -> Option<usize> {
        let k0 = (p.y().ln() / self.cell).floor() as i64;
        let m = p.n() - 1;
        for k in k0 - 1..=k0 + 1 {
            let base = self.key(p, k);
            for combo in 0..3usize.pow(m as u32) {
                let mut key = base;
                let mut c = combo;
                for j in 0..m {
                    key[j + 1] += (c % 3) as i64 - 1;
                    c /= 3;
                }
                if let Some(bucket) = self.buckets.get(&key) {
                    for &idx in bucket {
                        if hyp_distance(&self.points[idx], p) < tol {
                            return Some(idx);
                        }
                    }
                }
            }
        }
        None
    }

    pub(crate) fn insert(&mut self, p: HPoint) -> usize {
        let k0 = (p.y().ln() / self.cell).floor() as i64;
        let key = self.key(&p, k0);
        let idx = self.points.len();
        self.points.push(p);
        self.buckets.entry(key).or_default().push(idx);
        idx
    }
}

/// Reduction of boundary coordinates modulo a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeReducer {
    basis: Vec<Vec<f64>>,
    gram_inv: Vec<Vec<f64>>,
}

impl LatticeReducer {
    pub fn new(basis: &[Vec<f64>]) -> Self {
        let l = basis.len();
        let mut gram = vec![vec![0.0; l]; l];
        for i in 0..l {
            for j in 0..l {
                gram[i][j] = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
            }
        }
        Self {
            basis: basis.to_vec(),
            gram_inv: invert(&gram),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Lattice coordinates of the projection of `x` on the lattice span.
    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let dots: Vec<f64> = self
            .basis
            .iter()
            .map(|b| b.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect();
        self.gram_inv
            .iter()
            .map(|row| row.iter().zip(&dots).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Returns `(x - m, m)` with `m ∈ L` chosen so the lattice coordinates of
    /// `x - m` lie in `[0, 1)`.
    pub fn reduce(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let coeffs = self.coefficients(x);
        let mut shift = vec![0.0; x.len()];
        for (c, b) in coeffs.iter().zip(&self.basis) {
            let mut f = c.floor();
            if c - f > 1.0 - 1e-10 {
                f += 1.0;
            }
            for (s, bv) in shift.iter_mut().zip(b) {
                *s += f * bv;
            }
        }
        let reduced = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
        (reduced, shift)
    }
}

fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// `max_g d(g w, w)` over the closed generators.
pub fn generator_slack(spec: &GroupSpec, w: &HPoint) -> f64 {
    spec.closed_generators()
        .iter()
        .map(|g| hyp_distance(&g.map.apply_point(w), w))
        .fold(0.0, f64::max)
}

struct Node {
    map: MoebiusMap,
    word: Vec<u16>,
    translation: Vec<f64>,
}

struct Candidate {
    node: Node,
    point: HPoint,
}

/// Shared breadth-first engine. `keep` decides whether a point is explored,
/// `emit` returns its displacement when it belongs to the output.
fn search(
    spec: &GroupSpec,
    w: &HPoint,
    cfg: &OrbitConfig,
    reducer: Option<&LatticeReducer>,
    max_depth: Option<usize>,
    keep: &(dyn Fn(&HPoint) -> bool + Sync),
    emit: &(dyn Fn(&HPoint) -> Option<f64> + Sync),
) -> (Vec<OrbitPoint>, bool, usize) {
    let gens = spec.closed_generators();
    let stab = detect_stabilizer(spec, w, cfg.stabilizer_depth).stabilizer_words;
    let n = spec.dimension;
    let reduce = |map: MoebiusMap, p: HPoint, translation: &[f64]| -> (MoebiusMap, HPoint, Vec<f64>) {
        match reducer {
            Some(r) if r.rank() > 0 => {
                let (x, shift) = r.reduce(p.x());
                if shift.iter().all(|v| *v == 0.0) {
                    return (map, p, translation.to_vec());
                }
                let neg: Vec<f64> = shift.iter().map(|v| -v).collect();
                let m = MoebiusMap::translation(&neg) * map;
                let t: Vec<f64> = translation.iter().zip(&neg).map(|(a, b)| a + b).collect();
                (m, HPoint::new(&x, p.y()).expect("height stays positive"), t)
            }
            _ => (map, p, translation.to_vec()),
        }
    };

    let mut index = PointIndex::new();
    let mut out = Vec::new();
    let (root_map, root_point, root_tr) = reduce(MoebiusMap::identity(n), *w, &vec![0.0; n - 1]);
    index.insert(root_point);
    let root = Node {
        map: root_map,
        word: vec![],
        translation: root_tr,
    };
    if let Some(d) = emit(&root_point) {
        out.push(to_orbit_point(&root, root_point, d));
    }
    let mut level = vec![root];
    let mut depth = 0usize;
    let mut complete = true;
    while !level.is_empty() {
        if max_depth.is_some_and(|m| depth >= m) {
            break;
        }
        depth += 1;
        let children: Vec<Vec<Candidate>> = level
            .par_iter()
            .map(|node| {
                let mut local = Vec::with_capacity(stab.len() * gens.len());
                for h in &stab {
                    let base = node.map * h.map;
                    for (k, g) in gens.iter().enumerate() {
                        let map = base * g.map;
                        let p = map.apply_point(w);
                        let (map, p, translation) = reduce(map, p, &node.translation);
                        if !keep(&p) {
                            continue;
                        }
                        let mut word = Vec::with_capacity(node.word.len() + h.word.len() + 1);
                        word.extend_from_slice(&node.word);
                        word.extend_from_slice(&h.word);
                        word.push(k as u16);
                        local.push(Candidate {
                            node: Node {
                                map,
                                word,
                                translation,
                            },
                            point: p,
                        });
                    }
                }
                local
            })
            .collect();
        let mut next = Vec::new();
        for c in children.into_iter().flatten() {
            if index.find(&c.point, cfg.dedup_tol).is_some() {
                continue;
            }
            index.insert(c.point);
            if let Some(d) = emit(&c.point) {
                out.push(to_orbit_point(&c.node, c.point, d));
            }
            next.push(c.node);
            if index.len() > cfg.budget {
                complete = false;
                break;
            }
        }
        if !complete {
            break;
        }
        level = next;
    }
    (out, complete, index.len())
}

fn to_orbit_point(node: &Node, point: HPoint, displacement: f64) -> OrbitPoint {
    OrbitPoint {
        point,
        word: node.word.clone(),
        word_length: node.word.len(),
        displacement,
        map: node.map,
        translation: node.translation.clone(),
    }
}

/// Orbit points `γw` with `s < d(γw, z) < t`, one per point.
pub fn enumerate_ball(
    spec: &GroupSpec,
    w: &HPoint,
    z: &HPoint,
    t: f64,
    s: f64,
    cfg: &OrbitConfig,
) -> Result<OrbitSlice> {
    if !(s >= 0.0 && s < t) {
        return Err(OrbitError::Window(format!("need 0 <= s < t, got s = {s}, t = {t}")));
    }
    let margin = t + cfg.slack * generator_slack(spec, w);
    let z0 = *z;
    let keep = move |p: &HPoint| hyp_distance(p, &z0) <= margin;
    let emit = move |p: &HPoint| {
        let d = hyp_distance(p, &z0);
        (d > s && d < t).then_some(d)
    };
    let (points, complete, visited) = search(spec, w, cfg, None, None, &keep, &emit);
    Ok(OrbitSlice {
        mode: OrbitMode::Ball { z: *z, t, s },
        w: *w,
        points,
        dedup_tolerance: cfg.dedup_tol,
        complete,
        visited,
    })
}

/// Orbit points with `e^{-t} <= Im(γw) < e^{s-t}`, one per class modulo the
/// cusp lattice, with real parts reduced into the lattice cell.
pub fn enumerate_horoball(
    spec: &GroupSpec,
    w: &HPoint,
    t: f64,
    s: f64,
    cfg: &OrbitConfig,
) -> Result<OrbitSlice> {
    if !(s > 0.0) {
        return Err(OrbitError::Window(format!("need s > 0, got {s}")));
    }
    let lattice = spec.cusp_lattice.clone().unwrap_or_default();
    let reducer = LatticeReducer::new(&lattice);
    let floor = -t - cfg.slack * generator_slack(spec, w);
    let keep = move |p: &HPoint| p.y().ln() >= floor;
    let emit = move |p: &HPoint| in_height_window(p.y(), t, s).then(|| -p.y().ln());
    let (points, complete, visited) = search(spec, w, cfg, Some(&reducer), None, &keep, &emit);
    Ok(OrbitSlice {
        mode: OrbitMode::Horoball { t, s },
        w: *w,
        points,
        dedup_tolerance: cfg.dedup_tol,
        complete,
        visited,
    })
}

/// Every distinct point `γw` for words of length at most `depth`, by plain
/// enumeration of all freely reduced words. Used as ground truth for the
/// pruned search. Words containing a generator next to its inverse are
/// skipped: they add no points, and composing the cancelling pair in floating
/// point perturbs deep points enough to defeat deduplication.
pub fn brute_force_words(
    spec: &GroupSpec,
    w: &HPoint,
    depth: usize,
    budget: usize,
) -> Result<Vec<OrbitPoint>> {
    let gens = spec.closed_generators();
    let b = gens.len();
    let inverse: Vec<Option<usize>> = gens
        .iter()
        .map(|g| gens.iter().position(|h| (g.map * h.map).is_identity(1e-9)))
        .collect();
    let needed: usize = (0..=depth).map(|k| b.saturating_pow(k as u32)).fold(0usize, |a, x| a.saturating_add(x));
    if needed > budget {
        return Err(OrbitError::Budget { needed, budget });
    }
    let mut index = PointIndex::new();
    let mut out = Vec::new();
    let n = spec.dimension;
    let mut level: Vec<(MoebiusMap, Vec<u16>)> = vec![(MoebiusMap::identity(n), vec![])];
    for k in 0..=depth {
        for (map, word) in &level {
            let p = map.apply_point(w);
            if index.find(&p, 1e-7).is_none() {
                index.insert(p);
                out.push(OrbitPoint {
                    point: p,
                    word: word.clone(),
                    word_length: word.len(),
                    displacement: hyp_distance(&p, w),
                    map: *map,
                    translation: vec![0.0; n - 1],
                });
            }
        }
        if k == depth {
            break;
        }
        level = level
            .par_iter()
            .flat_map_iter(|(map, word)| {
                let last = word.last().map(|&k| k as usize);
                let inverse = &inverse;
                gens.iter()
                    .enumerate()
                    .filter(move |(j, _)| last.is_none_or(|k| inverse[k] != Some(*j)))
                    .map(move |(j, g)| {
                        let mut v = word.clone();
                        v.push(j as u16);
                        (*map * g.map, v)
                    })
            })
            .collect();
    }
    Ok(out)
}

/// Counts `N_t = #{s < d < t}` of a ball slice for several radii `t` not
/// exceeding the slice radius.
pub fn counts_by_radius(slice: &OrbitSlice, ts: &[f64]) -> Vec<(f64, usize)> {
    let s = match slice.mode {
        OrbitMode::Ball { s, .. } => s,
        _ => 0.0,
    };
    let mut d: Vec<f64> = slice.points.iter().map(|p| p.displacement).collect();
    d.sort_by(f64::total_cmp);
    ts.iter()
        .map(|&t| {
            let hi = d.partition_point(|&v| v < t);
            let lo = d.partition_point(|&v| v <= s);
            (t, hi.saturating_sub(lo))
        })
        .collect()
}

fn mode_fields(mode: &OrbitMode) -> (&'static str, f64, f64) {
    match *mode {
        OrbitMode::Ball { t, s, .. } => ("ball", t, s),
        OrbitMode::Horoball { t, s } => ("horoball", t, s),
        OrbitMode::Words { depth } => ("words", depth as f64, 0.0),
    }
}

/// CSV dump: `mode,t,s,re_1..re_{n-1},im,displacement,word_length`.
pub fn write_csv<W: Write>(slice: &OrbitSlice, out: &mut W) -> io::Result<()> {
    let (mode, t, s) = mode_fields(&slice.mode);
    let m = slice.w.n() - 1;
    let re: Vec<String> = (1..=m).map(|k| format!("re{k}")).collect();
    writeln!(out, "mode,t,s,{},im,displacement,word_length", re.join(","))?;
    for p in &slice.points {
        let xs: Vec<String> = p.point.x().iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(
            out,
            "{mode},{t},{s},{},{:.17e},{:.17e},{}",
            xs.join(","),
            p.point.y(),
            p.displacement,
            p.word_length
        )?;
    }
    Ok(())
}

const MAGIC: &[u8; 8] = b"KLORBIT1";

/// Header of the binary orbit cache.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub n: usize,
    pub mode: String,
    pub t: f64,
    pub s: f64,
    pub count: usize,
}

/// Binary cache: magic, header `{n, mode, t, s, count}`, then the
/// coordinates `(x_1, ..., x_{n-1}, y)` of every point as little-endian `f64`.
pub fn write_binary<W: Write>(slice: &OrbitSlice, out: &mut W) -> io::Result<()> {
    let (mode, t, s) = mode_fields(&slice.mode);
    out.write_all(MAGIC)?;
    out.write_all(&(slice.w.n() as u32).to_le_bytes())?;
    let mode_code: u32 = match mode {
        "ball" => 0,
        "horoball" => 1,
        _ => 2,
    };
    out.write_all(&mode_code.to_le_bytes())?;
    out.write_all(&t.to_le_bytes())?;
    out.write_all(&s.to_le_bytes())?;
    out.write_all(&(slice.points.len() as u64).to_le_bytes())?;
    for p in &slice.points {
        for v in p.point.x() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&p.point.y().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(input: &mut R) -> Result<(CacheHeader, Vec<HPoint>)> {
    let err = |e: io::Error| OrbitError::Cache(e.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(err)?;
    if &magic != MAGIC {
        return Err(OrbitError::Cache("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b4).map_err(err)?;
    let n = u32::from_le_bytes(b4) as usize;
    if !(2..=crate::hyperbolic::MAX_N).contains(&n) {
        return Err(OrbitError::Cache(format!("bad dimension {n}")));
    }
    input.read_exact(&mut b4).map_err(err)?;
    let mode = match u32::from_le_bytes(b4) {
        0 => "ball",
        1 => "horoball",
        _ => "words",
    }
    .to_string();
    input.read_exact(&mut b8).map_err(err)?;
    let t = f64::from_le_bytes(b8);
    input.read_exact(&mut b8).map_err(err)?;
    let s = f64::from_le_bytes(b8);
    input.read_exact(&mut b8).map_err(err)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut c = vec![0.0; n];
        for v in c.iter_mut() {
            input.read_exact(&mut b8).map_err(err)?;
            *v = f64::from_le_bytes(b8);
        }
        points.push(HPoint::new(&c[..n - 1], c[n - 1]).map_err(|e| OrbitError::Cache(e.to_string()))?);
    }
    Ok((CacheHeader { n, mode, t, s, count }, points))
}

/// Stabilizer elements of `w` used by the search (identity first).
pub fn stabilizer_elements(spec: &GroupSpec, w: &HPoint, cfg: &OrbitConfig) -> Vec<StabilizerWord> {
    detect_stabilizer(spec, w, cfg.stabilizer_depth).stabilizer_words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{psl2z, schottky, default_schottky_pairs};

    fn hp(x: f64, y: f64) -> HPoint {
        HPoint::new(&[x], y).unwrap()
    }

    #[test]
    fn tiny_ball_around_base_point_is_empty() {
        let g = psl2z();
        let i = HPoint::base(2);
        let slice = enumerate_ball(&g, &i, &i, 0.5, 0.0, &OrbitConfig::default()).unwrap();
        assert!(slice.is_empty());
        assert!(slice.complete);
    }

    #[test]
    fn rejects_bad_windows() {
        let g = psl2z();
        let i = HPoint::base(2);
        assert!(enumerate_ball(&g, &i, &i, 1.0, 2.0, &OrbitConfig::default()).is_err());
        assert!(enumerate_horoball(&g, &i, 1.0, 0.0, &OrbitConfig::default()).is_err());
    }

    #[test]
    fn brute_force_depth_zero_and_one() {
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let d0 = brute_force_words(&g, &w, 0, 100).unwrap();
        assert_eq!(d0.len(), 1);
        assert_eq!(d0[0].point, w);
        let d1 = brute_force_words(&g, &w, 1, 100).unwrap();
        let mut pts: Vec<(f64, f64)> = d1.iter().map(|p| (p.point.x()[0], p.point.y())).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [(-1.0, 2.0), (0.0, 0.5), (0.0, 2.0), (1.0, 2.0)];
        assert_eq!(pts.len(), 4);
        for (p, e) in pts.iter().zip(expected) {
            assert!((p.0 - e.0).abs() < 1e-12 && (p.1 - e.1).abs() < 1e-12);
        }
        // S S and the empty word give the same point
        let d2 = brute_force_words(&g, &w, 2, 100).unwrap();
        assert_eq!(d2.iter().filter(|p| hyp_distance(&p.point, &w) < 1e-9).count(), 1);
        assert!(brute_force_words(&g, &w, 20, 1000).is_err());
    }

    #[test]
    fn horoball_top_class() {
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let slice = enumerate_horoball(&g, &w, 0.0, f64::INFINITY, &OrbitConfig::default()).unwrap();
        assert_eq!(slice.len(), 1);
        assert!(hyp_distance(&slice.points[0].point, &w) < 1e-12);
    }

    #[test]
    fn horoball_reduction_matches_word_oracle() {
        // heights >= e^{-t}, reduced mod 1, against brute-force words
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let t = 2.0;
        let slice = enumerate_horoball(&g, &w, t, f64::INFINITY, &OrbitConfig::default()).unwrap();
        slice.validate(&g).unwrap();
        let brute = brute_force_words(&g, &w, 10, 1_000_000).unwrap();
        let mut index = PointIndex::new();
        let red = LatticeReducer::new(&[vec![1.0]]);
        for p in brute {
            if p.point.y() < (-t).exp() {
                continue;
            }
            let (x, _) = red.reduce(p.point.x());
            let q = hp(x[0], p.point.y());
            if index.find(&q, 1e-7).is_none() {
                index.insert(q);
            }
        }
        assert_eq!(index.len(), slice.len());
        for p in &slice.points {
            assert!(index.find(&p.point, 1e-7).is_some());
        }
    }

    #[test]
    fn ball_slice_invariants_and_monotonicity() {
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let z = HPoint::base(2);
        let cfg = OrbitConfig::default();
        let small = enumerate_ball(&g, &w, &z, 3.0, 0.0, &cfg).unwrap();
        let big = enumerate_ball(&g, &w, &z, 4.0, 0.0, &cfg).unwrap();
        small.validate(&g).unwrap();
        big.validate(&g).unwrap();
        let mut index = PointIndex::new();
        for p in &big.points {
            index.insert(p.point);
        }
        for p in &small.points {
            assert!(index.find(&p.point, 1e-7).is_some());
        }
        assert_eq!(counts_by_radius(&big, &[3.0])[0].1, small.len());
    }

    #[test]
    fn schottky_ball_matches_brute_force() {
        let g = schottky(&default_schottky_pairs()).unwrap();
        let w = HPoint::base(2);
        let t = 4.0;
        let slice = enumerate_ball(&g, &w, &w, t, 0.0, &OrbitConfig::default()).unwrap();
        let brute = brute_force_words(&g, &w, 6, 10_000_000).unwrap();
        let inside: Vec<_> = brute
            .iter()
            .filter(|p| p.displacement > 0.0 && p.displacement < t)
            .collect();
        assert_eq!(inside.len(), slice.len());
    }

    #[test]
    fn budget_marks_partial() {
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let cfg = OrbitConfig {
            budget: 50,
            ..OrbitConfig::default()
        };
        let slice = enumerate_ball(&g, &w, &HPoint::base(2), 8.0, 0.0, &cfg).unwrap();
        assert!(!slice.complete);
    }

    #[test]
    fn lattice_reduction() {
        let r = LatticeReducer::new(&[vec![1.0, 0.0], vec![0.5, 1.0]]);
        let (x, m) = r.reduce(&[2.3, -0.7]);
        let c = r.coefficients(&x);
        assert!(c.iter().all(|v| (0.0..1.0).contains(v)));
        assert!((x[0] + m[0] - 2.3).abs() < 1e-12 && (x[1] + m[1] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn binary_cache_round_trip() {
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let slice = enumerate_ball(&g, &w, &HPoint::base(2), 3.0, 0.0, &OrbitConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_binary(&slice, &mut buf).unwrap();
        let (h, pts) = read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(h.count, slice.len());
        assert_eq!(h.mode, "ball");
        for (a, b) in pts.iter().zip(&slice.points) {
            assert_eq!(*a, b.point);
        }
        let mut csv = Vec::new();
        write_csv(&slice, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), slice.len() + 1);
        assert!(text.starts_with("mode,t,s,re1,im,displacement,word_length"));
    }

    /// Orbit of 2i under PSL(2,Z) by enumerating integer matrices directly.
    fn integer_matrix_orbit(t: f64) -> usize {
        let z = HPoint::base(2);
        let w = hp(0.0, 2.0);
        let mut index = PointIndex::new();
        let bound = (t.exp() * 2.0).sqrt().ceil() as i64 + 2;
        for a in -bound..=bound {
            for c in -bound..=bound {
                for b in -2 * bound..=2 * bound {
                    for d in -2 * bound..=2 * bound {
                        if a * d - b * c != 1 {
                            continue;
                        }
                        let m = MoebiusMap::real(a as f64, b as f64, c as f64, d as f64).unwrap();
                        let p = m.apply_point(&w);
                        let dist = hyp_distance(&p, &z);
                        if dist > 0.0 && dist < t && index.find(&p, 1e-7).is_none() {
                            index.insert(p);
                        }
                    }
                }
            }
        }
        index.len()
    }

    #[test]
    fn modular_ball_matches_integer_matrices() {
        let g = psl2z();
        let w = hp(0.0, 2.0);
        let z = HPoint::base(2);
        let t = 6.0;
        let slice = enumerate_ball(&g, &w, &z, t, 0.0, &OrbitConfig::default()).unwrap();
        slice.validate(&g).unwrap();
        assert_eq!(slice.len(), integer_matrix_orbit(t));
    }
}
