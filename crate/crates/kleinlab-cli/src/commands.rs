use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use kleinlab::empirical::{
    counting_distribution, gap_curve, gap_statistics, moment_from_distribution, nearest_neighbor_cdf,
    pair_correlation, sample_counts, write_curve_csv, CountingTarget, CurveKind, Lambda, PointCloud,
    ScaledDistribution, TestShape,
};
use kleinlab::groups::{builtin_group, load_group_spec, GroupSpec};
use kleinlab::hyperbolic::HPoint;
use kleinlab::limits::{
    gamma_data, gap_density_curve, gap_limit_cdf, nearest_neighbor_limit, pair_correlation_limit, LimitConfig,
    LimitCurve, RotationNodes,
};
use kleinlab::orbits::{counts_by_radius, enumerate_ball, enumerate_horoball, write_binary, write_csv, OrbitConfig, OrbitSlice};
use kleinlab::packing::{generate_apollonian, packing_centers, packing_count_fit, standard_root, write_packing_csv};
use kleinlab::patterson::{
    circle_uniformity, fit_delta, fit_theta, patterson_atoms, write_measure_csv, Observer, SetDescription,
};
use kleinlab::pointsets::{project_boundary, project_directions, write_boundary_csv, write_directions_csv, BoundarySet, DirectionSet};

use crate::config::{LambdaConfig, RunConfig, ShapeConfig};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn domain<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Domain {
        kind,
        message: e.to_string(),
    }
}

/// Output of one subcommand: artifact paths plus a JSON summary.
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

pub struct Context {
    pub cfg: RunConfig,
    pub spec: GroupSpec,
    pub w: HPoint,
    pub z: HPoint,
    pub orbit_cfg: OrbitConfig,
    delta: Option<f64>,
    theta: Option<f64>,
}

fn point(v: &[f64]) -> Result<HPoint> {
    let (x, y) = v.split_at(v.len() - 1);
    HPoint::new(x, y[0]).map_err(domain("hyperbolic"))
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate().map_err(CliError::Usage)?;
        let spec = if Path::new(&cfg.group).exists() {
            let loaded = load_group_spec(&cfg.group).map_err(domain("groups"))?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            loaded.spec
        } else {
            builtin_group(&cfg.group).map_err(domain("groups"))?
        };
        if cfg.w.len() != spec.dimension {
            return Err(CliError::Usage(format!(
                "group acts on H^{} but w has {} coordinates",
                spec.dimension,
                cfg.w.len()
            )));
        }
        let w = point(&cfg.w)?;
        let z = point(&cfg.z)?;
        Ok(Self {
            delta: cfg.delta.or(spec.claimed_delta),
            cfg,
            spec,
            w,
            z,
            orbit_cfg: OrbitConfig::default(),
            theta: None,
        })
    }

    /// `δ̂`: the configured value, the group's claimed value, or a fit of the
    /// ball counts over the fit window.
    pub fn delta_hat(&mut self) -> Result<f64> {
        if let Some(d) = self.delta {
            return Ok(d);
        }
        let d = self.fit_delta_report()?.delta_hat;
        self.delta = Some(d);
        Ok(d)
    }

    fn fit_grid(&self) -> Vec<f64> {
        let [a, b] = self.cfg.fit_window;
        let k = self.cfg.fit_samples;
        (0..k).map(|j| a + (b - a) * j as f64 / (k - 1) as f64).collect()
    }

    fn fit_delta_report(&self) -> Result<kleinlab::patterson::FitReport> {
        let ts = self.fit_grid();
        let t_hi = self.cfg.fit_window[1];
        let slice = if self.cfg.mode == "horoball" {
            enumerate_horoball(&self.spec, &self.w, t_hi, t_hi + self.w.y().ln().abs() + 1.0, &self.orbit_cfg)
        } else {
            enumerate_ball(&self.spec, &self.w, &self.z, t_hi, 0.0, &self.orbit_cfg)
        }
        .map_err(domain("orbits"))?;
        let counts: Vec<(f64, f64)> = counts_by_radius(&slice, &ts).into_iter().map(|(t, c)| (t, c as f64)).collect();
        let mut report = fit_delta(&counts).map_err(domain("patterson"))?;
        report.window = self.cfg.fit_window;
        Ok(report)
    }

    fn meta(&self, extra: &[(&str, String)]) -> Vec<(String, String)> {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x}"));
        let mut m = vec![
            ("command".to_string(), self.cfg.command.clone()),
            ("group".to_string(), self.cfg.group.clone()),
            ("seed".to_string(), self.cfg.seed.to_string()),
            ("delta_hat".to_string(), fmt(self.delta)),
            ("theta_hat".to_string(), fmt(self.theta)),
            (
                "truncations".to_string(),
                format!(
                    "l_cutoff={} margin={} r_max={} t_truncate={}",
                    self.cfg.l_cutoff,
                    self.cfg.margin,
                    fmt(self.cfg.r_max),
                    self.cfg.t_truncate
                ),
            ),
            ("git_revision".to_string(), git_revision()),
        ];
        m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        m
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        std::fs::create_dir_all(&self.cfg.output_dir).map_err(io_err)?;
        let p = self.path(name);
        let f = File::create(&p).map_err(io_err)?;
        Ok((p, BufWriter::new(f)))
    }

    fn slice(&self) -> Result<OrbitSlice> {
        let c = &self.cfg;
        let s = if self.cfg.mode == "horoball" {
            enumerate_horoball(&self.spec, &self.w, c.t, if c.s > 0.0 { c.s } else { c.t }, &self.orbit_cfg)
        } else {
            enumerate_ball(&self.spec, &self.w, &self.z, c.t, c.s, &self.orbit_cfg)
        }
        .map_err(domain("orbits"))?;
        if !s.complete {
            eprintln!("warning: orbit budget exhausted, slice incomplete");
        }
        Ok(s)
    }

    fn directions(&self) -> Result<DirectionSet> {
        project_directions(&self.slice()?, &self.z).map_err(domain("pointsets"))
    }

    fn boundary(&self) -> Result<BoundarySet> {
        let lattice = self.spec.cusp_lattice.clone().unwrap_or_default();
        project_boundary(&self.slice()?, &lattice).map_err(domain("pointsets"))
    }

    fn cloud(&self) -> Result<PointCloud> {
        Ok(if self.cfg.mode == "horoball" {
            PointCloud::from(&self.boundary()?)
        } else {
            PointCloud::from(&self.directions()?)
        })
    }

    fn write_curve(&self, name: &str, curve: &ScaledDistribution, extra: &[(&str, String)]) -> Result<PathBuf> {
        let (p, mut f) = self.create(name)?;
        write_curve_csv(curve, &self.meta(extra), &mut f).map_err(io_err)?;
        f.flush().map_err(io_err)?;
        Ok(p)
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Domain {
        kind: "io",
        message: e.to_string(),
    }
}

pub fn git_revision() -> String {
    if let Some(rev) = option_env!("KLEINLAB_GIT_REVISION") {
        return rev.to_string();
    }
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn curve_json(c: &ScaledDistribution) -> Value {
    json!({ "kind": c.kind.name(), "abscissae": c.abscissae, "values": c.values })
}

pub fn orbit(ctx: &Context, binary: bool) -> Result<Outcome> {
    let slice = ctx.slice()?;
    let (p, mut f) = ctx.create("orbit.csv")?;
    for (k, v) in ctx.meta(&[]) {
        writeln!(f, "# {k}: {v}").map_err(io_err)?;
    }
    write_csv(&slice, &mut f).map_err(io_err)?;
    f.flush().map_err(io_err)?;
    let mut artifacts = vec![p];
    if binary {
        let (p, mut f) = ctx.create("orbit.bin")?;
        write_binary(&slice, &mut f).map_err(io_err)?;
        f.flush().map_err(io_err)?;
        artifacts.push(p);
    }
    Ok(Outcome {
        artifacts,
        summary: json!({ "points": slice.len(), "complete": slice.complete, "visited": slice.visited }),
    })
}

pub fn project(ctx: &Context) -> Result<Outcome> {
    let meta = ctx.meta(&[]);
    if ctx.cfg.mode == "horoball" {
        let b = ctx.boundary()?;
        let (p, mut f) = ctx.create("boundary.csv")?;
        write_boundary_csv(&b, &meta, &mut f).map_err(io_err)?;
        f.flush().map_err(io_err)?;
        Ok(Outcome {
            artifacts: vec![p],
            summary: json!({ "points": b.points.len() }),
        })
    } else {
        let d = ctx.directions()?;
        let (p, mut f) = ctx.create("directions.csv")?;
        write_directions_csv(&d, &meta, &mut f).map_err(io_err)?;
        f.flush().map_err(io_err)?;
        Ok(Outcome {
            artifacts: vec![p],
            summary: json!({ "points": d.len() }),
        })
    }
}

fn shapes(ctx: &Context) -> Vec<TestShape> {
    ctx.cfg
        .shapes
        .iter()
        .map(|s| match s {
            ShapeConfig::Box { lo, hi } => TestShape::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            ShapeConfig::Disk { sigma } => TestShape::Disk { sigma: *sigma },
        })
        .collect()
}

fn lambda(ctx: &Context) -> Lambda {
    let m = ctx.spec.dimension - 1;
    match &ctx.cfg.lambda {
        LambdaConfig::Uniform { lo, hi } => Lambda::Uniform {
            lo: lo.clone(),
            hi: hi.clone(),
        },
        LambdaConfig::Cell if ctx.cfg.mode == "horoball" => {
            let lattice = ctx.spec.cusp_lattice.clone().unwrap_or_default();
            let free = m - lattice.len();
            Lambda::Cell {
                lattice,
                lo: vec![0.0; free],
                hi: vec![1.0; free],
            }
        }
        LambdaConfig::Cell => {
            // the interior chart of the circle is [0, 1); in higher
            // dimensions the chart ball has radius π/2
            if m == 1 {
                Lambda::Uniform { lo: vec![0.0], hi: vec![1.0] }
            } else {
                let r = std::f64::consts::FRAC_PI_2;
                Lambda::Uniform {
                    lo: vec![-r; m],
                    hi: vec![r; m],
                }
            }
        }
    }
}

fn with_targets<T>(ctx: &Context, f: impl FnOnce(&CountingTarget) -> Result<T>) -> Result<T> {
    if ctx.cfg.mode == "horoball" {
        let b = ctx.boundary()?;
        f(&CountingTarget::Boundary(&b))
    } else {
        let d = ctx.directions()?;
        f(&CountingTarget::Interior(&d))
    }
}

pub fn stats(ctx: &mut Context, which: &str) -> Result<Outcome> {
    let grid = ctx.cfg.grid.clone();
    match which {
        "gaps" => {
            let d = ctx.directions()?;
            let g = gap_statistics(&d).map_err(domain("empirical"))?;
            let c = gap_curve(&g, &grid, ctx.cfg.s);
            let p = ctx.write_curve("gaps.csv", &c, &[("points", d.len().to_string())])?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: curve_json(&c),
            })
        }
        "nn" => {
            let c = nearest_neighbor_cdf(&ctx.cloud()?, &grid).map_err(domain("empirical"))?;
            let p = ctx.write_curve("nn.csv", &c, &[])?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: curve_json(&c),
            })
        }
        "pair" => {
            let delta = ctx.delta_hat()?;
            let c = pair_correlation(&ctx.cloud()?, &grid, 1.0, delta);
            let p = ctx.write_curve("pair.csv", &c, &[])?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: curve_json(&c),
            })
        }
        "count" => {
            let delta = ctx.delta_hat()?;
            let (sh, la) = (shapes(ctx), lambda(ctx));
            let (samples, seed) = (ctx.cfg.samples, ctx.cfg.seed);
            let report = with_targets(ctx, |target| {
                let r = if ctx.cfg.counts.is_empty() {
                    sample_counts(target, &sh, &la, samples, seed, delta)
                        .map_err(domain("empirical"))?
                        .observed()
                } else {
                    ctx.cfg.counts.clone()
                };
                counting_distribution(target, &sh, &la, &r, samples, seed, delta).map_err(domain("empirical"))
            })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let labels = report
                .r
                .iter()
                .enumerate()
                .map(|(k, r)| format!("{k}={r:?}"))
                .collect::<Vec<_>>()
                .join(" ");
            let p = ctx.write_curve("count.csv", &report.curve, &[("count_vectors", labels)])?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: json!({ "r": report.r, "probabilities": report.curve.values, "stderr": report.curve.stderr }),
            })
        }
        "moments" => {
            let delta = ctx.delta_hat()?;
            let (sh, la) = (shapes(ctx), lambda(ctx));
            if ctx.cfg.beta.len() != sh.len() {
                return Err(CliError::Usage("beta needs one exponent per test set".into()));
            }
            let (samples, seed) = (ctx.cfg.samples, ctx.cfg.seed);
            let cs = with_targets(ctx, |target| {
                sample_counts(target, &sh, &la, samples, seed, delta).map_err(domain("empirical"))
            })?;
            let (m, se) = cs.moment(&ctx.cfg.beta).map_err(domain("empirical"))?;
            let table: Vec<(Vec<u32>, f64)> = cs
                .observed()
                .into_iter()
                .map(|r| {
                    let p = cs.probability(&r).0;
                    (r, p)
                })
                .collect();
            let (from_dist, _) = moment_from_distribution(&table, &ctx.cfg.beta);
            let curve = ScaledDistribution {
                kind: CurveKind::Moment,
                abscissae: vec![0.0],
                values: vec![m],
                stderr: vec![se],
                scale_factor_applied: true,
                sample_count: samples,
                t: cs.t,
                s: cs.s,
            };
            let p = ctx.write_curve("moments.csv", &curve, &[("beta", format!("{:?}", ctx.cfg.beta))])?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: json!({ "moment": m, "stderr": se, "from_distribution": from_dist }),
            })
        }
        other => Err(CliError::Usage(format!("unknown statistic '{other}'"))),
    }
}

pub fn fit(ctx: &mut Context, which: &str) -> Result<Outcome> {
    let report = ctx.fit_delta_report()?;
    match which {
        "delta" => {
            let (p, mut f) = ctx.create("fit_delta.json")?;
            serde_json::to_writer_pretty(&mut f, &report).map_err(domain("io"))?;
            f.flush().map_err(io_err)?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: serde_json::to_value(&report).map_err(domain("io"))?,
            })
        }
        "theta" => {
            let delta = report.delta_hat;
            let s = ctx.cfg.patterson_s.unwrap_or(delta + 0.05);
            let observer = if ctx.cfg.mode == "horoball" {
                Observer::Boundary
            } else {
                Observer::Interior
            };
            let m = patterson_atoms(&ctx.spec, &ctx.w, s, delta, ctx.cfg.t_truncate, observer, &ctx.orbit_cfg)
                .map_err(domain("patterson"))?;
            let theta = fit_theta(&report, &m, &SetDescription::Full).map_err(domain("patterson"))?;
            ctx.theta = Some(theta);
            let mut r = report.clone();
            r.theta_hat = theta;
            let (p, mut f) = ctx.create("fit_theta.json")?;
            serde_json::to_writer_pretty(&mut f, &r).map_err(domain("io"))?;
            f.flush().map_err(io_err)?;
            Ok(Outcome {
                artifacts: vec![p],
                summary: serde_json::to_value(&r).map_err(domain("io"))?,
            })
        }
        other => Err(CliError::Usage(format!("unknown fit target '{other}'"))),
    }
}

pub fn nu(ctx: &mut Context) -> Result<Outcome> {
    let delta = ctx.delta_hat()?;
    let s = ctx.cfg.patterson_s.unwrap_or(delta + 0.05);
    let observer = if ctx.cfg.mode == "horoball" {
        Observer::Boundary
    } else {
        Observer::Interior
    };
    let m = patterson_atoms(&ctx.spec, &ctx.w, s, delta, ctx.cfg.t_truncate, observer, &ctx.orbit_cfg)
        .map_err(domain("patterson"))?;
    let (p, mut f) = ctx.create("measure.csv")?;
    for (k, v) in ctx.meta(&[]) {
        writeln!(f, "# {k}: {v}").map_err(io_err)?;
    }
    write_measure_csv(&m, &mut f).map_err(io_err)?;
    f.flush().map_err(io_err)?;
    let tv = (m.n == 2 && observer == Observer::Interior).then(|| circle_uniformity(&m, 16));
    Ok(Outcome {
        artifacts: vec![p],
        summary: json!({ "atoms": m.atoms.len(), "s": s, "total_mass": m.total_mass, "tv_distance_16_bins": tv }),
    })
}

fn limit_summary(c: &LimitCurve) -> Value {
    json!({ "kind": c.curve.kind.name(), "abscissae": c.curve.abscissae, "values": c.curve.values,
            "raw": c.raw, "prefactor": c.prefactor, "warnings": c.warnings })
}

pub fn limit(ctx: &mut Context, which: &str) -> Result<Outcome> {
    let delta = ctx.delta_hat()?;
    let n = ctx.spec.dimension;
    let lc = LimitConfig {
        delta,
        l_cutoff: ctx.cfg.l_cutoff,
        margin: ctx.cfg.margin,
        u_max: ctx.cfg.r_max,
        ..LimitConfig::default()
    };
    lc.depth().map_err(domain("limits"))?;
    let data = gamma_data(&ctx.spec, &ctx.w, ctx.cfg.l_cutoff, &ctx.orbit_cfg).map_err(domain("limits"))?;
    let nodes = if n == 2 {
        RotationNodes::lattice(ctx.cfg.nodes)
    } else {
        RotationNodes::random_directions(n, ctx.cfg.nodes, ctx.cfg.seed)
    };
    let grid = ctx.cfg.grid.clone();
    let extra = [("gamma_count", data.len().to_string())];
    let (name, curve, summary) = match which {
        "gaps" => {
            let c = gap_limit_cdf(&data, &nodes, &grid, &lc).map_err(domain("limits"))?;
            ("limit_gaps.csv", c.curve.clone(), limit_summary(&c))
        }
        "nn" => {
            let c = nearest_neighbor_limit(&data, &nodes, &grid, &lc).map_err(domain("limits"))?;
            ("limit_nn.csv", c.curve.clone(), limit_summary(&c))
        }
        "pair" => {
            let cal = ctx.cfg.calibrate.map(|[a, b]| (a, b));
            let c = pair_correlation_limit(&data, &nodes, &grid, &lc, cal).map_err(domain("limits"))?;
            ("limit_pair.csv", c.curve.clone(), limit_summary(&c))
        }
        "gapdensity" => {
            let positive: Vec<f64> = grid.iter().copied().filter(|&l| l > 2e-3).collect();
            let (mut c, vals) = gap_density_curve(&data, &nodes, &positive, 1e-3, &lc).map_err(domain("limits"))?;
            // the stderr column carries |formula - finite difference|
            c.stderr = vals.iter().map(|v| (v.formula - v.finite_difference).abs()).collect();
            let s = json!({ "kind": "gap_density", "abscissae": c.abscissae, "values": c.values,
                            "finite_difference": vals.iter().map(|v| v.finite_difference).collect::<Vec<_>>() });
            ("limit_gapdensity.csv", c, s)
        }
        other => return Err(CliError::Usage(format!("unknown limit curve '{other}'"))),
    };
    let p = ctx.write_curve(name, &curve, &extra)?;
    Ok(Outcome {
        artifacts: vec![p],
        summary,
    })
}

pub fn packing(ctx: &mut Context, which: &str) -> Result<Outcome> {
    let p = generate_apollonian(&standard_root(), ctx.cfg.curvature_bound).map_err(domain("packing"))?;
    match which {
        "gen" => {
            let meta = ctx.meta(&[("curvature_bound", ctx.cfg.curvature_bound.to_string())]);
            let (path, mut f) = ctx.create("packing.csv")?;
            write_packing_csv(&mut f, &p.circles, &meta).map_err(io_err)?;
            f.flush().map_err(io_err)?;
            Ok(Outcome {
                artifacts: vec![path],
                summary: json!({ "circles": p.circles.len(), "max_descartes_defect": p.max_descartes_defect,
                                 "max_tangency_defect": p.max_tangency_defect }),
            })
        }
        "stats" => {
            let [lo, hi] = ctx.cfg.eps_window;
            let fit = packing_count_fit(&p.circles, lo, hi, ctx.cfg.fit_samples).map_err(domain("packing"))?;
            ctx.delta = Some(fit.delta_hat);
            let slice = packing_centers(&p.circles, ctx.cfg.t, f64::INFINITY);
            let bs = slice.to_boundary_set();
            let mut artifacts = Vec::new();
            let (path, mut f) = ctx.create("packing_fit.json")?;
            serde_json::to_writer_pretty(&mut f, &fit).map_err(domain("io"))?;
            f.flush().map_err(io_err)?;
            artifacts.push(path);
            if bs.points.len() >= 2 {
                let c = nearest_neighbor_cdf(&PointCloud::from(&bs), &ctx.cfg.grid).map_err(domain("empirical"))?;
                artifacts.push(ctx.write_curve("packing_nn.csv", &c, &[("centers", bs.points.len().to_string())])?);
            }
            Ok(Outcome {
                artifacts,
                summary: json!({ "delta_hat": fit.delta_hat, "slope_stderr": fit.slope_stderr,
                                 "circles": p.circles.len(), "slice_centers": bs.points.len() }),
            })
        }
        other => Err(CliError::Usage(format!("unknown packing action '{other}'"))),
    }
}

/// Reads `abscissa,value[,...]` rows, skipping `#` lines and the header.
pub fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let mut it = line.split(',');
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            continue;
        };
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(x), Ok(y)) => out.push((x, y)),
            _ if out.is_empty() => continue,
            _ => {
                return Err(CliError::Domain {
                    kind: "compare",
                    message: format!("{}: malformed row '{line}'", path.display()),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Domain {
            kind: "compare",
            message: format!("{}: no data rows", path.display()),
        });
    }
    Ok(out)
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let k = curve.partition_point(|p| p.0 < x - 1e-12);
    if k < curve.len() && (curve[k].0 - x).abs() <= 1e-12 {
        return Some(curve[k].1);
    }
    if k == 0 || k == curve.len() {
        return None;
    }
    let (a, b) = (curve[k - 1], curve[k]);
    Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

pub fn compare(ctx: &Context, first: &Path, second: &Path) -> Result<Outcome> {
    let a = read_curve(first)?;
    let mut b = read_curve(second)?;
    b.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut rows = Vec::new();
    for &(x, y) in &a {
        let Some(z) = interpolate(&b, x) else {
            continue;
        };
        rows.push((x, y, z, y - z));
    }
    if rows.is_empty() {
        return Err(CliError::Domain {
            kind: "compare",
            message: "the curves share no abscissae".into(),
        });
    }
    let sup = rows.iter().map(|r| r.3.abs()).fold(0.0, f64::max);
    let (p, mut f) = ctx.create("compare.csv")?;
    writeln!(f, "# first: {}", first.display()).map_err(io_err)?;
    writeln!(f, "# second: {}", second.display()).map_err(io_err)?;
    writeln!(f, "# sup_norm: {sup:e}").map_err(io_err)?;
    writeln!(f, "abscissa,first,second,delta").map_err(io_err)?;
    for (x, y, z, d) in &rows {
        writeln!(f, "{x},{y:e},{z:e},{d:e}").map_err(io_err)?;
    }
    f.flush().map_err(io_err)?;
    Ok(Outcome {
        artifacts: vec![p],
        summary: json!({ "sup_norm": sup, "points": rows.len(),
                         "deltas": rows.iter().map(|r| [r.0, r.3]).collect::<Vec<_>>() }),
    })
}
