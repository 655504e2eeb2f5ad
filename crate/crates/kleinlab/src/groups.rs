//! Discrete groups: built-in families, a TOML group-spec format, and detection
//! of point stabilizers and of the translation lattice of the cusp at `∞`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::CliffordNumber;
use crate::hyperbolic::{BoundaryPoint, HPoint, HyperbolicError, MoebiusMap};

/// Distance in half-space coordinates below which a point counts as fixed.
pub const FIX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("cannot read group spec: {0}")]
    Io(String),
    #[error("cannot parse group spec: {0}")]
    Parse(String),
    #[error("generator {index} ({label}): {source}")]
    Generator {
        index: usize,
        label: String,
        source: HyperbolicError,
    },
    #[error("Schottky disks {0} and {1} are not disjoint")]
    Overlap(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown builtin group '{0}'")]
    UnknownBuiltin(String),
}

pub type Result<T> = std::result::Result<T, GroupError>;

/// A disk `{|z - center| < radius}` in `R^2`, used for Schottky pairings of
/// `H^2` (centers on the real axis) and for Apollonian data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: f64,
    pub radius: f64,
}

/// A Schottky pairing: the generator maps the exterior of `from` onto the
/// interior of `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPair {
    pub from: Disk,
    pub to: Disk,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    LatticePsl2z,
    Hecke { q: u32 },
    Schottky { pairs: Vec<DiskPair> },
    Apollonian,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub label: String,
    pub map: MoebiusMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub dimension: usize,
    pub generators: Vec<Generator>,
    /// Whether `generators` already lists every inverse.
    pub inverses_included: bool,
    pub family: Family,
    pub claimed_delta: Option<f64>,
    pub stabilizer_w: Option<HPoint>,
    /// Basis of the translation lattice `L` of the stabilizer of `∞`.
    pub cusp_lattice: Option<Vec<Vec<f64>>>,
}

impl GroupSpec {
    /// Generators together with their inverses, with duplicates (as
    /// projective maps) removed. Words index into this list.
    pub fn closed_generators(&self) -> Vec<Generator> {
        let mut out: Vec<Generator> = Vec::with_capacity(2 * self.generators.len());
        let mut push = |g: Generator| {
            if !out.iter().any(|h| h.map.projective_distance(&g.map) < 1e-12) {
                out.push(g);
            }
        };
        for g in &self.generators {
            push(g.clone());
            push(Generator {
                label: format!("{}^-1", g.label),
                map: g.map.inverse(),
            });
        }
        out
    }

    /// Product of closed generators along `word` (leftmost letter first).
    pub fn replay(&self, word: &[u16]) -> MoebiusMap {
        let gens = self.closed_generators();
        word.iter()
            .fold(MoebiusMap::identity(self.dimension), |acc, &k| acc * gens[k as usize].map)
    }

    pub fn lattice_rank(&self) -> usize {
        self.cusp_lattice.as_ref().map_or(0, |l| l.len())
    }

    /// Generators as they would appear in a spec file.
    pub fn to_toml(&self) -> String {
        let file = SpecFile {
            dimension: self.dimension,
            claimed_delta: self.claimed_delta,
            stabilizer_w: self.stabilizer_w.map(|w| {
                let mut v = w.x().to_vec();
                v.push(w.y());
                v
            }),
            cusp_lattice: self.cusp_lattice.clone(),
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorFile {
                    label: Some(g.label.clone()),
                    matrix: [
                        [g.map.a().coeffs().to_vec(), g.map.b().coeffs().to_vec()],
                        [g.map.c().coeffs().to_vec(), g.map.d().coeffs().to_vec()],
                    ],
                })
                .collect(),
        };
        toml::to_string(&file).expect("group spec serializes")
    }
}

fn gen(label: &str, map: MoebiusMap) -> Generator {
    Generator {
        label: label.to_string(),
        map,
    }
}

/// `PSL(2, Z)` generated by `S = [[0, -1], [1, 0]]` and `T = [[1, 1], [0, 1]]`.
pub fn psl2z() -> GroupSpec {
    GroupSpec {
        dimension: 2,
        generators: vec![
            gen("S", MoebiusMap::real(0.0, -1.0, 1.0, 0.0).unwrap()),
            gen("T", MoebiusMap::real(1.0, 1.0, 0.0, 1.0).unwrap()),
        ],
        inverses_included: false,
        family: Family::LatticePsl2z,
        claimed_delta: Some(1.0),
        stabilizer_w: None,
        cusp_lattice: Some(vec![vec![1.0]]),
    }
}

/// Hecke triangle group `⟨S, T_λ⟩` with `λ = 2 cos(π/q)`, `q >= 3`.
pub fn hecke(q: u32) -> Result<GroupSpec> {
    if q < 3 {
        return Err(GroupError::InvalidParam(format!("Hecke group needs q >= 3, got {q}")));
    }
    let lambda = 2.0 * (PI / q as f64).cos();
    Ok(GroupSpec {
        dimension: 2,
        generators: vec![
            gen("S", MoebiusMap::real(0.0, -1.0, 1.0, 0.0).unwrap()),
            gen("T", MoebiusMap::real(1.0, lambda, 0.0, 1.0).unwrap()),
        ],
        inverses_included: false,
        family: Family::Hecke { q },
        claimed_delta: Some(1.0),
        stabilizer_w: None,
        cusp_lattice: Some(vec![vec![lambda]]),
    })
}

/// Map sending the exterior of `from` onto the interior of `to`:
/// `z ↦ c2 - r1 r2 / (z - c1)`.
pub fn schottky_generator(pair: &DiskPair) -> MoebiusMap {
    let (c1, r1) = (pair.from.center, pair.from.radius);
    let (c2, r2) = (pair.to.center, pair.to.radius);
    MoebiusMap::real(c2, -c1 * c2 - r1 * r2, 1.0, -c1).expect("Schottky generator has positive determinant")
}

/// Classical Schottky group of `H^2` from disk pairings on the real axis.
/// All disks must be pairwise disjoint.
pub fn schottky(pairs: &[DiskPair]) -> Result<GroupSpec> {
    if pairs.is_empty() {
        return Err(GroupError::InvalidParam("Schottky group needs at least one pair".into()));
    }
    let disks: Vec<Disk> = pairs.iter().flat_map(|p| [p.from, p.to]).collect();
    for (k, d) in disks.iter().enumerate() {
        if !(d.radius > 0.0) {
            return Err(GroupError::InvalidParam(format!("disk {k} has radius {}", d.radius)));
        }
    }
    for i in 0..disks.len() {
        for j in i + 1..disks.len() {
            if (disks[i].center - disks[j].center).abs() <= disks[i].radius + disks[j].radius {
                return Err(GroupError::Overlap(i, j));
            }
        }
    }
    Ok(GroupSpec {
        dimension: 2,
        generators: pairs
            .iter()
            .enumerate()
            .map(|(k, p)| gen(&format!("g{}", k + 1), schottky_generator(p)))
            .collect(),
        inverses_included: false,
        family: Family::Schottky {
            pairs: pairs.to_vec(),
        },
        claimed_delta: None,
        stabilizer_w: None,
        cusp_lattice: None,
    })
}

/// The two-generator Schottky group used as the default non-lattice example:
/// disks of radius 0.4 at ±1 and of radius 0.8 at ±3.
pub fn default_schottky_pairs() -> Vec<DiskPair> {
    vec![
        DiskPair {
            from: Disk { center: -1.0, radius: 0.4 },
            to: Disk { center: 1.0, radius: 0.4 },
        },
        DiskPair {
            from: Disk { center: -3.0, radius: 0.8 },
            to: Disk { center: 3.0, radius: 0.8 },
        },
    ]
}

/// A circle in the plane with signed curvature (negative when it encloses the
/// rest of the packing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCircle {
    pub center: Complex64,
    pub curvature: f64,
}

impl PlaneCircle {
    pub fn radius(&self) -> f64 {
        1.0 / self.curvature.abs()
    }
}

/// An orientation-reversing Möbius map `z ↦ M(conj z)` when `conj` is set,
/// or the Möbius map `z ↦ M z` otherwise, with `M` in `GL(2, C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntiMoebius {
    pub m: [Complex64; 4],
    pub conj: bool,
}

impl AntiMoebius {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            m: [one, zero, zero, one],
            conj: false,
        }
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let o = if self.conj {
            other.m.map(|z| z.conj())
        } else {
            other.m
        };
        let a = self.m;
        let mut m = [
            a[0] * o[0] + a[1] * o[2],
            a[0] * o[1] + a[1] * o[3],
            a[2] * o[0] + a[3] * o[2],
            a[2] * o[1] + a[3] * o[3],
        ];
        // keep entries of moderate size
        let s = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            for z in m.iter_mut() {
                *z /= s;
            }
        }
        Self {
            m,
            conj: self.conj ^ other.conj,
        }
    }

    /// Image of a finite point; `None` at the pole.
    pub fn apply(&self, z: Complex64) -> Option<Complex64> {
        let z = if self.conj { z.conj() } else { z };
        let den = self.m[2] * z + self.m[3];
        if den.norm() < 1e-300 {
            return None;
        }
        Some((self.m[0] * z + self.m[1]) / den)
    }

    /// Image circle of a circle, from the images of three of its points.
    /// The result always carries positive curvature. `None` when the image is
    /// a line.
    pub fn apply_circle(&self, c: &PlaneCircle) -> Option<PlaneCircle> {
        let r = c.radius();
        let mut pts = [Complex64::new(0.0, 0.0); 3];
        for (k, p) in pts.iter_mut().enumerate() {
            let ang = 2.0 * PI * k as f64 / 3.0 + 0.1;
            *p = self.apply(c.center + Complex64::from_polar(r, ang))?;
        }
        let (center, radius) = circumcircle(pts[0], pts[1], pts[2])?;
        Some(PlaneCircle {
            center,
            curvature: 1.0 / radius,
        })
    }

    /// The inversion in the generalized circle through three points.
    pub fn inversion_through(p1: Complex64, p2: Complex64, p3: Complex64) -> Self {
        // h(z) = (p3 α z + p1) / (α z + 1) maps 0, 1, ∞ to p1, p2, p3, and the
        // inversion is h ∘ conj ∘ h^{-1} = H conj(H^{-1}) conj.
        let alpha = (p2 - p1) / (p3 - p2);
        let h = [p3 * alpha, p1, alpha, Complex64::new(1.0, 0.0)];
        let det = h[0] * h[3] - h[1] * h[2];
        let hinv = [h[3] / det, -h[1] / det, -h[2] / det, h[0] / det];
        let conj_hinv = hinv.map(|z| z.conj());
        let m = [
            h[0] * conj_hinv[0] + h[1] * conj_hinv[2],
            h[0] * conj_hinv[1] + h[1] * conj_hinv[3],
            h[2] * conj_hinv[0] + h[3] * conj_hinv[2],
            h[2] * conj_hinv[1] + h[3] * conj_hinv[3],
        ];
        Self { m, conj: true }
    }

    /// Lift of an orientation-preserving element to a Vahlen map of `H^3`.
    pub fn to_moebius(&self) -> Option<MoebiusMap> {
        if self.conj {
            return None;
        }
        let det = self.m[0] * self.m[3] - self.m[1] * self.m[2];
        let s = det.sqrt();
        let e = |z: Complex64| {
            let w = z / s;
            CliffordNumber::vector(1, &[w.re, w.im])
        };
        MoebiusMap::new(3, e(self.m[0]), e(self.m[1]), e(self.m[2]), e(self.m[3])).ok()
    }
}

/// Center and radius of the circle through three points; `None` if collinear.
pub fn circumcircle(a: Complex64, b: Complex64, c: Complex64) -> Option<(Complex64, f64)> {
    let (bx, by) = ((b - a).re, (b - a).im);
    let (cx, cy) = ((c - a).re, (c - a).im);
    let d = 2.0 * (bx * cy - by * cx);
    let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
    if d.abs() <= 1e-14 * scale {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Some((a + Complex64::new(ux, uy), (ux * ux + uy * uy).sqrt()))
}

/// Root quadruple of the Apollonian packing with curvatures `(-1, 2, 2, 3)`.
pub fn apollonian_root() -> [PlaneCircle; 4] {
    [
        PlaneCircle {
            center: Complex64::new(0.0, 0.0),
            curvature: -1.0,
        },
        PlaneCircle {
            center: Complex64::new(0.5, 0.0),
            curvature: 2.0,
        },
        PlaneCircle {
            center: Complex64::new(-0.5, 0.0),
            curvature: 2.0,
        },
        PlaneCircle {
            center: Complex64::new(0.0, 2.0 / 3.0),
            curvature: 3.0,
        },
    ]
}

/// Tangency point of two tangent circles.
pub fn tangency_point(c1: &PlaneCircle, c2: &PlaneCircle) -> Complex64 {
    let dir = c2.center - c1.center;
    let dist = dir.norm();
    if dist < 1e-15 {
        return c1.center;
    }
    let side = if c2.curvature < 0.0 { -1.0 } else { 1.0 };
    c1.center + dir / dist * (side * c1.radius())
}

/// The four inversions in the circles dual to a Descartes quadruple; the `j`th
/// passes through the three tangency points not involving circle `j`, fixes the
/// other three circles and swaps circle `j` with its Descartes partner.
pub fn dual_inversions(root: &[PlaneCircle; 4]) -> [AntiMoebius; 4] {
    std::array::from_fn(|j| {
        let others: Vec<usize> = (0..4).filter(|&k| k != j).collect();
        let p1 = tangency_point(&root[others[0]], &root[others[1]]);
        let p2 = tangency_point(&root[others[0]], &root[others[2]]);
        let p3 = tangency_point(&root[others[1]], &root[others[2]]);
        AntiMoebius::inversion_through(p1, p2, p3)
    })
}

/// Orientation-preserving Apollonian group acting on `H^3`, generated by the
/// products of pairs of dual inversions.
pub fn apollonian() -> GroupSpec {
    let inv = dual_inversions(&apollonian_root());
    let mut generators = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            let m = inv[i].compose(&inv[j]).to_moebius().expect("even word is a Vahlen map");
            generators.push(gen(&format!("s{}s{}", i + 1, j + 1), m));
        }
    }
    GroupSpec {
        dimension: 3,
        generators,
        inverses_included: false,
        family: Family::Apollonian,
        claimed_delta: Some(1.3057),
        stabilizer_w: None,
        cusp_lattice: None,
    }
}

/// Builtin groups by name: `psl2z`, `hecke:<q>`, `schottky`, `apollonian`.
pub fn builtin_group(name: &str) -> Result<GroupSpec> {
    let lower = name.to_ascii_lowercase();
    match lower.as_str() {
        "psl2z" => Ok(psl2z()),
        "schottky" => schottky(&default_schottky_pairs()),
        "apollonian" => Ok(apollonian()),
        other => {
            if let Some(q) = other.strip_prefix("hecke:") {
                let q = q
                    .parse()
                    .map_err(|_| GroupError::InvalidParam(format!("bad Hecke index '{q}'")))?;
                hecke(q)
            } else {
                Err(GroupError::UnknownBuiltin(name.to_string()))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    /// `[[a, b], [c, d]]`, each entry the coefficient list of a Clifford number.
    matrix: [[Vec<f64>; 2]; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claimed_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stabilizer_w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cusp_lattice: Option<Vec<Vec<f64>>>,
    generators: Vec<GeneratorFile>,
}

/// A parsed group spec with any warnings raised while normalizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedGroup {
    pub spec: GroupSpec,
    pub warnings: Vec<String>,
}

/// Parses the TOML group-spec format.
pub fn parse_group_spec(text: &str) -> Result<LoadedGroup> {
    let file: SpecFile = toml::from_str(text).map_err(|e| GroupError::Parse(e.to_string()))?;
    let n = file.dimension;
    if !(2..=crate::hyperbolic::MAX_N).contains(&n) {
        return Err(GroupError::InvalidParam(format!("unsupported dimension {n}")));
    }
    if file.generators.is_empty() {
        return Err(GroupError::InvalidParam("no generators".into()));
    }
    let mut warnings = Vec::new();
    let mut generators = Vec::new();
    for (index, g) in file.generators.iter().enumerate() {
        let label = g.label.clone().unwrap_or_else(|| format!("g{}", index + 1));
        let wrap = |source: HyperbolicError| GroupError::Generator {
            index,
            label: label.clone(),
            source,
        };
        let entry = |v: &Vec<f64>| CliffordNumber::from_coeffs(n - 2, v).map_err(|e| wrap(e.into()));
        let (a, b) = (entry(&g.matrix[0][0])?, entry(&g.matrix[0][1])?);
        let (c, d) = (entry(&g.matrix[1][0])?, entry(&g.matrix[1][1])?);
        let (map, delta) = MoebiusMap::new_normalized(n, a, b, c, d).map_err(wrap)?;
        if (delta - 1.0).abs() > 1e-12 {
            warnings.push(format!(
                "generator {label}: pseudo-determinant {delta} normalized by 1/sqrt({delta})"
            ));
        }
        generators.push(Generator { label, map });
    }
    let stabilizer_w = match &file.stabilizer_w {
        None => None,
        Some(v) => {
            if v.len() != n {
                return Err(GroupError::InvalidParam(format!(
                    "stabilizer_w needs {n} coordinates, got {}",
                    v.len()
                )));
            }
            Some(
                HPoint::new(&v[..n - 1], v[n - 1])
                    .map_err(|e| GroupError::InvalidParam(format!("stabilizer_w: {e}")))?,
            )
        }
    };
    if let Some(lat) = &file.cusp_lattice {
        if lat.len() > n - 1 || lat.iter().any(|v| v.len() != n - 1) {
            return Err(GroupError::InvalidParam(
                "cusp_lattice must hold at most n-1 vectors of length n-1".into(),
            ));
        }
        if lattice_rank(lat) != lat.len() {
            return Err(GroupError::InvalidParam(
                "cusp_lattice vectors are linearly dependent".into(),
            ));
        }
    }
    Ok(LoadedGroup {
        spec: GroupSpec {
            dimension: n,
            generators,
            inverses_included: false,
            family: Family::Custom,
            claimed_delta: file.claimed_delta,
            stabilizer_w,
            cusp_lattice: file.cusp_lattice,
        },
        warnings,
    })
}

pub fn load_group_spec(path: impl AsRef<Path>) -> Result<LoadedGroup> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| GroupError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_group_spec(&text)
}

/// Rank of a family of vectors by Gram-Schmidt with a relative tolerance.
pub fn lattice_rank(vectors: &[Vec<f64>]) -> usize {
    independent_subset(vectors).len()
}

fn independent_subset(vectors: &[Vec<f64>]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for (k, v) in vectors.iter().enumerate() {
        let mut r = v.clone();
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in r.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 * scale.max(1e-300) && scale > 0.0 {
            basis.push(r.iter().map(|x| x / norm).collect());
            chosen.push(k);
        }
    }
    chosen
}

/// Number of elements of a point stabilizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilizerOrder {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerWord {
    pub word: Vec<u16>,
    pub map: MoebiusMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerInfo {
    pub w: HPoint,
    /// Distinct elements fixing `w`, identity first.
    pub stabilizer_words: Vec<StabilizerWord>,
    pub order: StabilizerOrder,
    /// Independent translation vectors found among parabolic elements fixing `∞`.
    pub cusp_lattice: Vec<Vec<f64>>,
    pub rank: usize,
}

impl StabilizerInfo {
    /// Nontrivial stabilizer elements.
    pub fn nontrivial(&self) -> &[StabilizerWord] {
        &self.stabilizer_words[1..]
    }
}

/// Hash key identifying a projective map up to sign, on a 1e-7 grid.
pub(crate) fn element_key(m: &MoebiusMap) -> Vec<i64> {
    let mut coeffs: Vec<f64> = [m.a(), m.b(), m.c(), m.d()]
        .iter()
        .flat_map(|e| e.coeffs().to_vec())
        .collect();
    if let Some(first) = coeffs.iter().find(|c| c.abs() > 1e-6) {
        if *first < 0.0 {
            for c in coeffs.iter_mut() {
                *c = -*c;
            }
        }
    }
    coeffs.iter().map(|c| (c * 1e7).round() as i64).collect()
}

/// Distinct group elements of word length at most `depth` with shortest words.
pub fn enumerate_elements(spec: &GroupSpec, depth: usize) -> Vec<StabilizerWord> {
    let gens = spec.closed_generators();
    let id = MoebiusMap::identity(spec.dimension);
    let mut seen: HashMap<Vec<i64>, ()> = HashMap::new();
    seen.insert(element_key(&id), ());
    let mut all = vec![StabilizerWord {
        word: vec![],
        map: id,
    }];
    let mut frontier = vec![0usize];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &idx in &frontier {
            for (k, g) in gens.iter().enumerate() {
                let map = all[idx].map * g.map;
                let key = element_key(&map);
                if seen.insert(key, ()).is_none() {
                    let mut word = all[idx].word.clone();
                    word.push(k as u16);
                    all.push(StabilizerWord { word, map });
                    next.push(all.len() - 1);
                }
            }
        }
        frontier = next;
    }
    all
}

/// Depth-bounded search for the stabilizer of `w` and for parabolic
/// translations fixing `∞`.
pub fn detect_stabilizer(spec: &GroupSpec, w: &HPoint, word_depth: usize) -> StabilizerInfo {
    let elements = enumerate_elements(spec, word_depth.max(1));
    let mut stab: Vec<StabilizerWord> = Vec::new();
    let mut translations: Vec<Vec<f64>> = Vec::new();
    for e in &elements {
        let p = e.map.apply_point(w);
        if p.euclid_dist_sq(w).sqrt() <= FIX_TOL * (1.0 + w.y()) {
            stab.push(e.clone());
        }
        if e.map.is_identity(1e-9) {
            continue;
        }
        let m = &e.map;
        if m.c().norm() < 1e-9 && m.apply_boundary(&BoundaryPoint::Infinity).is_infinite() {
            // z ↦ (a z + b) d^{-1} is a translation when a = d = ±1
            let one = CliffordNumber::one(spec.dimension - 2);
            let sign = if m.a().max_diff(&one) < 1e-9 {
                1.0
            } else if m.a().max_diff(&-one) < 1e-9 {
                -1.0
            } else {
                continue;
            };
            if m.d().max_diff(&one.scale(sign)) > 1e-9 {
                continue;
            }
            let t = m.b().scale(sign).vector_part();
            translations.push(t[..spec.dimension - 1].to_vec());
        }
    }
    translations.sort_by(|a, b| {
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        na.total_cmp(&nb)
    });
    let basis: Vec<Vec<f64>> = independent_subset(&translations)
        .into_iter()
        .map(|k| translations[k].clone())
        .collect();
    StabilizerInfo {
        w: *w,
        order: StabilizerOrder::Finite(stab.len()),
        stabilizer_words: stab,
        rank: basis.len(),
        cusp_lattice: basis,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i2() -> HPoint {
        HPoint::base(2)
    }

    #[test]
    fn psl2z_builtin() {
        let g = psl2z();
        assert_eq!(g.generators.len(), 2);
        assert_eq!(g.dimension, 2);
        assert_eq!(g.claimed_delta, Some(1.0));
        // S is an involution in PSL, so only T gains a new inverse
        assert_eq!(g.closed_generators().len(), 3);
    }

    #[test]
    fn schottky_ping_pong() {
        let pairs = [
            DiskPair {
                from: Disk { center: -1.0, radius: 0.1 },
                to: Disk { center: 1.0, radius: 0.1 },
            },
            DiskPair {
                from: Disk { center: -3.0, radius: 0.1 },
                to: Disk { center: 3.0, radius: 0.1 },
            },
        ];
        let g = schottky(&pairs).unwrap();
        assert_eq!(g.generators.len(), 2);
        for (p, gen) in pairs.iter().zip(&g.generators) {
            for k in 0..200 {
                let x = -10.0 + 0.1 * k as f64 + 0.013;
                if (x - p.from.center).abs() <= p.from.radius {
                    continue;
                }
                let y = gen.map.apply_boundary(&BoundaryPoint::finite(&[x]));
                let y = y.coords().unwrap()[0];
                assert!((y - p.to.center).abs() < p.to.radius, "{x} -> {y}");
            }
        }
    }

    #[test]
    fn schottky_overlap_is_rejected() {
        let pairs = [DiskPair {
            from: Disk { center: -0.5, radius: 0.6 },
            to: Disk { center: 0.5, radius: 0.6 },
        }];
        assert_eq!(schottky(&pairs), Err(GroupError::Overlap(0, 1)));
    }

    /// Reduced words map a point outside every disk into the target disk of
    /// the leftmost letter.
    #[test]
    fn schottky_words_respect_ping_pong() {
        let g = schottky(&default_schottky_pairs()).unwrap();
        let gens = g.closed_generators();
        let pairs = default_schottky_pairs();
        // target disk of each closed generator: g_k maps into `to`, its inverse into `from`
        let target: Vec<Disk> = pairs.iter().flat_map(|p| [p.to, p.from]).collect();
        let inverse_of = |k: usize| k ^ 1;
        let mut words: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..6 {
            let mut next = Vec::new();
            for w in &words {
                for k in 0..gens.len() {
                    if let Some(&last) = w.last() {
                        if inverse_of(last) == k {
                            continue;
                        }
                    }
                    let mut v = w.clone();
                    v.push(k);
                    next.push(v);
                }
            }
            for w in &next {
                let map = w.iter().fold(MoebiusMap::identity(2), |acc, &k| acc * gens[k].map);
                let y = map.apply_boundary(&BoundaryPoint::finite(&[10.0]));
                let y = y.coords().unwrap()[0];
                let d = target[w[0]];
                assert!((y - d.center).abs() < d.radius, "word {w:?}");
            }
            words = next;
        }
    }

    #[test]
    fn apollonian_builtin() {
        let g = apollonian();
        assert_eq!(g.dimension, 3);
        let delta = g.claimed_delta.unwrap();
        assert!((1.25..=1.36).contains(&delta));
        for gen in &g.generators {
            assert!((gen.map.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_inversions_fix_the_other_circles() {
        let root = apollonian_root();
        let inv = dual_inversions(&root);
        for j in 0..4 {
            for k in 0..4 {
                let img = inv[j].apply_circle(&root[k]).unwrap();
                if k == j {
                    // swapped with the Descartes partner, curvature 2(sum of others) - k_j
                    let others: f64 = (0..4).filter(|&m| m != j).map(|m| root[m].curvature).sum();
                    let partner = 2.0 * others - root[j].curvature;
                    assert!((img.radius() - 1.0 / partner.abs()).abs() < 1e-9);
                } else {
                    assert!((img.radius() - root[k].radius()).abs() < 1e-9);
                    assert!((img.center - root[k].center).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn builtin_names() {
        assert!(builtin_group("psl2z").is_ok());
        assert!(builtin_group("hecke:5").is_ok());
        assert!(builtin_group("schottky").is_ok());
        assert!(builtin_group("apollonian").is_ok());
        assert!(matches!(builtin_group("nope"), Err(GroupError::UnknownBuiltin(_))));
        assert!(hecke(2).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let text = r#"
            dimension = 2
            claimed_delta = 1.0
            cusp_lattice = [[1.0]]

            [[generators]]
            label = "S"
            matrix = [[[0.0], [-1.0]], [[1.0], [0.0]]]

            [[generators]]
            label = "T"
            matrix = [[[1.0], [1.0]], [[0.0], [1.0]]]
        "#;
        let loaded = parse_group_spec(text).unwrap();
        assert!(loaded.warnings.is_empty());
        let builtin = psl2z();
        assert_eq!(loaded.spec.generators, builtin.generators);
        assert_eq!(loaded.spec.cusp_lattice, builtin.cusp_lattice);
        let again = parse_group_spec(&builtin.to_toml()).unwrap();
        assert_eq!(again.spec.generators, builtin.generators);
    }

    #[test]
    fn spec_file_normalizes_determinant() {
        let text = r#"
            dimension = 2
            [[generators]]
            matrix = [[[2.0], [0.0]], [[0.0], [1.0]]]
        "#;
        let loaded = parse_group_spec(text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        let [a, _, _, d] = loaded.spec.generators[0].map.real_entries();
        assert!((a - 2.0 / 2f64.sqrt()).abs() < 1e-15 && (d - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spec_file_rejects_bad_entries() {
        // quaternion entries where c* a is not a Clifford vector
        let text = r#"
            dimension = 4
            [[generators]]
            label = "bad"
            matrix = [[[0.5, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0]], [[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]]
        "#;
        match parse_group_spec(text) {
            Err(GroupError::Generator { label, source, .. }) => {
                assert_eq!(label, "bad");
                assert!(matches!(source, HyperbolicError::Vahlen { ref entry, .. } if entry == "c* a"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let unknown = "dimension = 2\ncolour = 3\n[[generators]]\nmatrix = [[[1.0],[0.0]],[[0.0],[1.0]]]\n";
        assert!(matches!(parse_group_spec(unknown), Err(GroupError::Parse(_))));
    }

    #[test]
    fn stabilizers_of_psl2z() {
        let g = psl2z();
        let info = detect_stabilizer(&g, &i2(), 4);
        assert_eq!(info.order, StabilizerOrder::Finite(2));
        assert_eq!(info.nontrivial()[0].word, vec![0]);
        let info2 = detect_stabilizer(&g, &HPoint::new(&[0.0], 2.0).unwrap(), 6);
        assert_eq!(info2.order, StabilizerOrder::Finite(1));
        assert_eq!(info2.rank, 1);
        assert!((info2.cusp_lattice[0][0].abs() - 1.0).abs() < 1e-12);
        assert_eq!(detect_stabilizer(&g, &i2(), 4), info);
    }

    #[test]
    fn schottky_has_no_cusp() {
        let g = builtin_group("schottky").unwrap();
        let info = detect_stabilizer(&g, &i2(), 3);
        assert_eq!(info.rank, 0);
        assert_eq!(info.order, StabilizerOrder::Finite(1));
    }

    #[test]
    fn generators_move_i_into_half_plane() {
        for name in ["psl2z", "hecke:7", "schottky", "apollonian"] {
            let g = builtin_group(name).unwrap();
            let base = HPoint::base(g.dimension);
            for gen in g.closed_generators() {
                assert!(gen.map.apply_point(&base).y() > 0.0);
                let m = gen.map;
                assert!(crate::hyperbolic::vahlen_determinant(m.a(), m.b(), m.c(), m.d()).is_ok());
            }
        }
    }
}
