//! `recurnet`: compute and check potential-theoretic objects on recurrent networks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use recurnet_core::green::{self, Boundary};
use recurnet_core::hmeasure::{self, DetColumn, InfinityOptions, MeasureOnSet};
use recurnet_core::hprocess::{self, HSim, Mode, ReturnKernel};
use recurnet_core::minimax::{self, EscapeOptions, GameOptions};
use recurnet_core::potential::{self, Potential, ValidationOptions};
use recurnet_core::verify::{self, VerifyConfig};
use recurnet_core::{rng, ust, Error, Network, NetworkSpec, Region, VertexId};

#[derive(Parser, Debug)]
#[command(name = "recurnet", version, about = "Potential theory on recurrent weighted networks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Global {
    /// Network spec file, or a builtin: z, half-line, z2, z3, tree<b>, phi<d>-<radius>.
    #[arg(long, global = true, default_value = "z2")]
    net: String,
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Convergence tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Comma-separated radii; meaning depends on the subcommand.
    #[arg(long, global = true)]
    radii: Option<String>,
    /// Output directory. Without it the main table goes to stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Boundary treatment for Green solves.
    #[arg(long, global = true, value_enum)]
    boundary: Option<BoundaryArg>,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BoundaryArg {
    Free,
    Absorbing,
    Wired,
    Midpoint,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Boundary {
        match b {
            BoundaryArg::Free => Boundary::Free,
            BoundaryArg::Absorbing => Boundary::Absorbing,
            BoundaryArg::Wired => Boundary::Wired,
            BoundaryArg::Midpoint => Boundary::Midpoint,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Route {
    Direct,
    Det,
    Limit,
    Mc,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum GameRoute {
    /// `V(R, r)` over the radii `r, R_1, R_2, ...`.
    Value,
    /// Escaping potential built level by level up to the radius cap.
    Escaping,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Print the canonical network spec; with --radii, ball and sphere sizes.
    Net,
    /// Green densities on B(∘, r0) killed at the root, stabilized over the outer radii.
    Green,
    /// Potential from a ball exhaustion with the given radii.
    Potential,
    /// Harmonic measure of a finite set, from infinity or from a vertex.
    Hmeasure {
        /// Comma-separated vertex labels, e.g. "(0,0),(1,0)".
        #[arg(long)]
        set: String,
        #[arg(long, value_enum, default_value = "det")]
        route: Route,
        /// Start vertex; harmonic measure from infinity when absent.
        #[arg(long)]
        from: Option<String>,
        /// Monte Carlo paths for the mc route.
        #[arg(long, default_value_t = 20_000)]
        paths: u64,
    },
    /// Simulate h-process paths observed on B(∘, r0), with returns solved on B(∘, r1).
    Hsim {
        #[arg(long, default_value_t = 100)]
        paths: u64,
    },
    /// Wilson spanning trees of B(∘, r0); with --ends, merge profiles for R in the other radii.
    Ust {
        #[arg(long, default_value_t = 10)]
        paths: u64,
        #[arg(long)]
        ends: bool,
    },
    /// Sphere games `V(R, r)` and escaping potentials.
    Minimax {
        #[arg(long, value_enum, default_value = "value")]
        route: GameRoute,
        /// Number of levels for the escaping route.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Run the identity suite.
    Verify {
        /// Comma-separated check ids.
        #[arg(long)]
        only: Option<String>,
        /// Multiplier on Monte Carlo sample counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Inject a corrupted potential into the Lipschitz check.
        #[arg(long)]
        corrupt_potential: bool,
    },
}

/// Files produced by one run, written together at the end.
struct Artifacts {
    files: Vec<(String, String)>,
    entries: Vec<Value>,
    /// Printed when no output directory is given.
    stdout: Option<String>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { files: Vec::new(), entries: Vec::new(), stdout: None }
    }

    fn add(&mut self, name: &str, contents: String, module: &str, operation: &str, certificate: Option<&str>) {
        if self.stdout.is_none() {
            self.stdout = Some(contents.clone());
        }
        self.entries.push(json!({
            "file": name,
            "module": module,
            "operation": operation,
            "certificate": certificate,
        }));
        self.files.push((name.to_string(), contents));
    }

    fn write(self, out: Option<&Path>, manifest: Value) -> Result<(), Error> {
        match out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                for (name, contents) in &self.files {
                    fs::write(dir.join(name), contents)?;
                }
                let mut m = manifest;
                m["outputs"] = Value::Array(self.entries);
                fs::write(dir.join("manifest.json"), to_json(&m))?;
            }
            None => {
                if let Some(s) = self.stdout {
                    print!("{s}");
                }
            }
        }
        Ok(())
    }
}

/// Pretty JSON with sorted keys.
fn to_json<T: Serialize>(v: &T) -> String {
    let v = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable");
    s.push('\n');
    s
}

/// 17 significant digits.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn builtin(name: &str) -> Option<NetworkSpec> {
    match name {
        "z" => Some(NetworkSpec::integer_line()),
        "half-line" => Some(NetworkSpec::half_line()),
        "z2" => Some(NetworkSpec::lattice(2)),
        "z3" => Some(NetworkSpec::lattice(3)),
        _ => {
            if let Some(b) = name.strip_prefix("tree") {
                return b.parse().ok().filter(|&b| b >= 1).map(NetworkSpec::regular_tree);
            }
            let (d, r) = name.strip_prefix("phi")?.split_once('-')?;
            Some(NetworkSpec::phi_product(d.parse().ok()?, r.parse().ok()?))
        }
    }
}

fn load_network(arg: &str) -> Result<Network, Error> {
    let path = Path::new(arg);
    let spec = if path.exists() {
        let text = fs::read_to_string(path)?;
        NetworkSpec::from_json_str(&text)?
    } else {
        builtin(arg).ok_or_else(|| Error::spec("--net", format!("no spec file or builtin network named `{arg}`")))?
    };
    Network::build(spec)
}

fn parse_radii(s: Option<&str>, default: &[usize]) -> Result<Vec<usize>, Error> {
    let Some(s) = s else { return Ok(default.to_vec()) };
    let radii = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| Error::spec("--radii", format!("`{x}` is not a radius"))))
        .collect::<Result<Vec<_>, _>>()?;
    if radii.is_empty() {
        return Err(Error::spec("--radii", "empty list"));
    }
    Ok(radii)
}

/// Split on commas outside parentheses.
fn parse_labels(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn vertex(net: &Network, label: &str, field: &str) -> Result<VertexId, Error> {
    net.vertex(label).map_err(|_| Error::spec(field, format!("unknown vertex `{label}`")))
}

fn default_boundary(net: &Network) -> Boundary {
    if net.dimension() == Some(2) && !net.is_tree() && net.phi(net.root()).is_none() {
        Boundary::Midpoint
    } else {
        Boundary::Free
    }
}

fn default_exhaustion(net: &Network) -> Vec<usize> {
    match net.dimension() {
        Some(1) => vec![20, 40, 80, 160],
        Some(2) => vec![10, 100, 200, 400],
        _ => vec![8, 16, 32, 64],
    }
}

struct Ctx {
    g: Global,
    net: Network,
    boundary: Boundary,
}

impl Ctx {
    fn tol(&self, default: f64) -> Result<f64, Error> {
        match self.g.tol {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::spec("--tol", "tolerance must be positive")),
            Some(t) => Ok(t),
            None => Ok(default),
        }
    }

    fn radii(&self, default: &[usize]) -> Result<Vec<usize>, Error> {
        parse_radii(self.g.radii.as_deref(), default)
    }

    fn label(&self, v: VertexId) -> String {
        self.net.label(v)
    }

    fn exhaustion_potential(&self, radii: &[usize], tol: f64) -> Result<potential::ExhaustionRun, Error> {
        if radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::spec("--radii", "radii must be strictly increasing"));
        }
        potential::potential_from_exhaustion(&self.net, &potential::ball_exhaustion(&self.net, radii), tol)
    }

    fn measure_csv(&self, m: &MeasureOnSet) -> Result<String, Error> {
        csv_table(
            &["vertex", "weight"],
            m.support.iter().zip(&m.weights).map(|(&v, &w)| vec![self.label(v), num(w)]),
        )
    }
}

fn run_net(ctx: &Ctx, art: &mut Artifacts) -> Result<(), Error> {
    art.add("net.json", ctx.net.spec().to_json_string() + "\n", "network-core", "describe", None);
    if ctx.g.radii.is_some() {
        let radii = ctx.radii(&[])?;
        let rows = radii.iter().map(|&r| {
            let ball = Region::ball(&ctx.net, r);
            vec![r.to_string(), ball.len().to_string(), ball.sphere(r).len().to_string(), ball.boundary_vertices().len().to_string()]
        });
        let t = csv_table(&["radius", "ball", "sphere", "boundary"], rows)?;
        art.add("balls.csv", t, "network-core", "ball_region", None);
    }
    Ok(())
}

fn run_green(ctx: &Ctx, art: &mut Artifacts) -> Result<(), Error> {
    let radii = ctx.radii(&[2, 16, 32, 64])?;
    let tol = ctx.tol(1e-8)?;
    let root = ctx.net.root();
    let t = green::stabilized_green_o(&ctx.net, root, &radii, tol, ctx.boundary)?;
    let rows = t.rows().vertices().to_vec();
    let mut header = vec!["x".to_string()];
    header.extend(rows.iter().map(|&v| ctx.label(v)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let body = rows.iter().map(|&x| {
        let mut r = vec![ctx.label(x)];
        r.extend(rows.iter().map(|&y| num(t.get(x, y).unwrap_or(0.0))));
        r
    });
    art.add("green.csv", csv_table(&header_refs, body)?, "linsolve-green", "stabilized_green_o", Some("green.json"));
    let cert = json!({
        "certificate": t.certificate(),
        "kill": t.kill().iter().map(|&v| ctx.label(v)).collect::<Vec<_>>(),
        "boundary": t.boundary(),
        "max_asymmetry": t.max_asymmetry(),
    });
    art.add("green.json", to_json(&cert), "linsolve-green", "stabilized_green_o", None);
    Ok(())
}

fn run_potential(ctx: &Ctx, art: &mut Artifacts) -> Result<(), Error> {
    let radii = ctx.radii(&default_exhaustion(&ctx.net))?;
    let tol = ctx.tol(1e-6)?;
    let run = ctx.exhaustion_potential(&radii, tol)?;
    let h = &run.potential;
    let d0 = h.certified_region().clone();
    let rows = d0.vertices().iter().map(|&v| Ok(vec![ctx.label(v), num(h.at(v)?)])).collect::<Result<Vec<_>, Error>>()?;
    art.add("potential.csv", csv_table(&["vertex", "value"], rows)?, "potentials", "potential_from_exhaustion", Some("potential.json"));
    let check = Region::ball(&ctx.net, radii[0].saturating_sub(1));
    let report = potential::validate_potential(&ctx.net, h, &check, &ValidationOptions { all_edges: true, ..Default::default() });
    let cert = json!({
        "radii": radii,
        "tol": tol,
        "certificate": h.certificate(),
        "converged": run.converged,
        "increments": run.increments,
        "validation": report,
    });
    art.add("potential.json", to_json(&cert), "potentials", "validate_potential", None);
    Ok(())
}

fn run_hmeasure(ctx: &Ctx, art: &mut Artifacts, set: &str, route: Route, from: Option<&str>, paths: u64) -> Result<(), Error> {
    let net = &ctx.net;
    let a = parse_labels(set).iter().map(|l| vertex(net, l, "--set")).collect::<Result<Vec<_>, _>>()?;
    if a.is_empty() {
        return Err(Error::spec("--set", "empty set"));
    }
    let tol = ctx.tol(1e-7)?;
    let mut extra = BTreeMap::<String, Value>::new();
    let measure = match (from, route) {
        (Some(v), Route::Direct) => {
            let v = vertex(net, v, "--from")?;
            let r = *ctx.radii(&[64])?.last().unwrap();
            let region = Region::ball(net, r);
            extra.insert("region_radius".into(), json!(r));
            hmeasure::harmonic_measure_exact(net, &a, v, &region, ctx.boundary)?
        }
        (Some(v), Route::Det) => {
            let v = vertex(net, v, "--from")?;
            let r = *ctx.radii(&[64])?.last().unwrap();
            let region = Arc::new(Region::ball(net, r));
            let root = net.root();
            let mut cols: Vec<VertexId> = a.iter().copied().filter(|&x| x != root).collect();
            if v != root {
                cols.push(v);
            }
            let t = green::green_columns(&region, &[root], &cols, ctx.boundary)?;
            extra.insert("table_radius".into(), json!(r));
            hmeasure::harmonic_measure_det(&t, DetColumn::Vertex(v), &a)?
        }
        (Some(_), _) => return Err(Error::spec("--route", "only the direct and det routes start from a vertex")),
        (None, Route::Direct) => return Err(Error::spec("--from", "the direct route needs a start vertex")),
        (None, Route::Det) => {
            let radii = ctx.radii(&default_exhaustion(net))?;
            let run = ctx.exhaustion_potential(&radii, tol)?;
            let r = *radii.last().unwrap();
            extra.insert("potential".into(), json!(run.potential.certificate()));
            extra.insert("table_radius".into(), json!(r));
            hmeasure::harmonic_measure_infinity_det(net, &run.potential, &a, r, ctx.boundary)?
        }
        (None, Route::Limit) => {
            let radii = ctx.radii(&[8, 16, 32, 64])?;
            let opts = InfinityOptions {
                region_radius: 256.max(4 * radii.last().unwrap()),
                boundary: ctx.boundary,
                ..Default::default()
            };
            let (m, cert) = hmeasure::harmonic_measure_infinity(net, &a, &radii, tol, &opts)?;
            extra.insert("convergence".into(), json!(cert));
            m
        }
        (None, Route::Mc) => {
            let radii = ctx.radii(&default_exhaustion(net))?;
            let run = ctx.exhaustion_potential(&radii, tol)?;
            let h = &run.potential;
            let d = Arc::new(Region::from_vertices(net, a.clone())?);
            let landing = Arc::new(hprocess::neighborhood(net, d.vertices(), 2)?);
            let kernel_radius = 256.min(*radii.last().unwrap()).max(2 * landing.radius().unwrap_or(4));
            let kernel = Arc::new(ReturnKernel::build(net, h, landing, kernel_radius, ctx.boundary)?);
            let sim = HSim::new(net, h, Mode::Return(kernel.clone()))?;
            let c = sim.simulate_fold(
                ctx.g.seed,
                paths,
                || hprocess::LastExitCounter::new(d.clone(), net.root(), 1e-3),
                |c, p| c.push(p),
                |a, b| a.merge(b),
            );
            let rep = c.report();
            extra.insert("seed".into(), json!(ctx.g.seed));
            extra.insert("n_paths".into(), json!(paths));
            extra.insert("return_eps".into(), json!(kernel.eps));
            extra.insert("last_exit".into(), json!({
                "counts": rep.counts,
                "n_used": rep.n_used,
                "excluded": rep.excluded,
                "max_bias": rep.max_bias,
                "total_bias": rep.total_bias,
            }));
            rep.measure
        }
    };
    art.add("hmeasure.csv", ctx.measure_csv(&measure)?, "harmonic-measure", &format!("{route:?}").to_lowercase(), Some("hmeasure.json"));
    let mut report = serde_json::Map::new();
    report.insert("route".into(), json!(route));
    report.insert("set".into(), json!(measure.support.iter().map(|&v| ctx.label(v)).collect::<Vec<_>>()));
    report.insert("from".into(), json!(from));
    report.insert("provenance".into(), json!(measure.provenance));
    report.insert("escape_mass".into(), json!(measure.escape_mass));
    report.insert("condition".into(), json!(measure.condition));
    report.insert("total".into(), json!(measure.total()));
    for (k, v) in extra {
        report.insert(k, v);
    }
    art.add("hmeasure.json", to_json(&report), "harmonic-measure", "certificate", None);
    Ok(())
}

/// Potential, observation region and return kernel shared by the path commands.
fn path_setup(ctx: &Ctx, observe: usize, kernel_radius: usize) -> Result<(Potential, Arc<ReturnKernel>, Arc<Region>), Error> {
    let run = ctx.exhaustion_potential(&default_exhaustion(&ctx.net), ctx.tol(1e-7)?)?;
    let h = run.potential;
    let d = Arc::new(Region::ball(&ctx.net, observe));
    let landing = Arc::new(hprocess::neighborhood(&ctx.net, d.vertices(), 2)?);
    let kernel = Arc::new(ReturnKernel::build(&ctx.net, &h, landing, kernel_radius, ctx.boundary)?);
    Ok((h, kernel, d))
}

fn run_hsim(ctx: &Ctx, art: &mut Artifacts, paths: u64) -> Result<(), Error> {
    let radii = ctx.radii(&[2, 128])?;
    let (observe, kernel_radius) = match radii[..] {
        [a, b, ..] => (a, b),
        [a] => (a, 128.max(4 * a)),
        [] => unreachable!(),
    };
    let (h, kernel, d) = path_setup(ctx, observe, kernel_radius)?;
    let sim = HSim::new(&ctx.net, &h, Mode::Return(kernel.clone()))?;
    let sampled = sim.simulate_many(ctx.g.seed, paths);
    let mut text = String::new();
    for p in &sampled {
        let labels: Vec<String> = p.vertices.iter().map(|&v| ctx.label(v)).collect();
        text.push_str(&labels.join(" "));
        text.push('\n');
    }
    art.add("paths.txt", text, "hprocess-sim", "simulate", Some("hsim.json"));
    let rep = hprocess::last_exit_distribution(&sampled, &d, ctx.net.root(), 1.0);
    let per_path: Vec<Value> = sampled
        .iter()
        .map(|p| json!({"index": p.index, "len": p.len(), "stop": p.stop, "bias": p.bias, "jumps": p.jumps.len()}))
        .collect();
    let report = json!({
        "seed": ctx.g.seed,
        "n_paths": paths,
        "observed_radius": observe,
        "kernel_radius": kernel.radius,
        "boundary": kernel.boundary,
        "eps": kernel.eps,
        "potential": h.certificate(),
        "max_bias": sampled.iter().map(|p| p.bias).fold(0.0, f64::max),
        "last_exit": rep.measure.support.iter().zip(&rep.measure.weights)
            .map(|(&v, &w)| (ctx.label(v), w)).collect::<BTreeMap<_, _>>(),
        "paths": per_path,
    });
    art.add("hsim.json", to_json(&report), "hprocess-sim", "report", None);
    Ok(())
}

fn run_ust(ctx: &Ctx, art: &mut Artifacts, n: u64, ends: bool) -> Result<(), Error> {
    let radii = ctx.radii(if ends { &[1, 2, 4, 8] } else { &[4] })?;
    let region = Region::ball(&ctx.net, radii[0]);
    let order = ust::bfs_order(&region);
    let mut rows = Vec::new();
    for i in 0..n {
        let t = ust::wilson_ust_ordered(&ctx.net, &region, &order, rng::derive_seed(ctx.g.seed, i))?;
        t.validate(&ctx.net)?;
        for (v, p) in t.vertices.iter().zip(&t.parent) {
            rows.push(vec![i.to_string(), ctx.label(*v), p.map(|p| ctx.label(p)).unwrap_or_default()]);
        }
    }
    art.add("trees.csv", csv_table(&["sample", "vertex", "parent"], rows)?, "ust-wilson", "wilson_ust", None);
    if ends {
        if radii.len() < 2 {
            return Err(Error::spec("--radii", "end profiles need r followed by at least one R"));
        }
        let r = radii[0];
        let mut series = BTreeMap::new();
        let mut rows = Vec::new();
        for &big_r in &radii[1..] {
            let (h, kernel, _) = path_setup(ctx, big_r, 128.max(32 * big_r))?;
            let sim = HSim::new(&ctx.net, &h, Mode::Return(kernel))?;
            let lerw = Region::ball(&ctx.net, 4 * big_r);
            let p = ust::end_profile(&ctx.net, [&sim, &sim], &lerw, r, big_r, n.max(100), rng::derive_seed(ctx.g.seed, big_r as u64), 0.05)?;
            rows.push(vec![big_r.to_string(), num(p.frequency), num(p.stderr)]);
            series.insert(big_r.to_string(), json!({"frequency": p.frequency, "stderr": p.stderr, "excluded": p.excluded, "samples": p.counts.len(), "seed": p.seed}));
        }
        art.add("ends.csv", csv_table(&["R", "frequency", "stderr"], rows)?, "ust-wilson", "end_profile", Some("ends.json"));
        art.add("ends.json", to_json(&json!({"r": r, "series": series})), "ust-wilson", "end_profile", None);
    }
    Ok(())
}

fn run_minimax(ctx: &Ctx, art: &mut Artifacts, route: GameRoute, levels: usize) -> Result<(), Error> {
    let net = &ctx.net;
    match route {
        GameRoute::Value => {
            let radii = ctx.radii(&[1, 2, 4, 8, 16])?;
            if radii.len() < 2 {
                return Err(Error::spec("--radii", "need r followed by at least one R"));
            }
            let tol = ctx.tol(1e-6)?;
            let opts = GameOptions { table_radius: None, boundary: ctx.boundary };
            let lim = minimax::v_limit(net, radii[0], &radii[1..], tol, &opts)?;
            let rows = lim.radii.iter().zip(&lim.values).zip(&lim.gaps).map(|((&r, &v), &g)| vec![r.to_string(), num(v), num(g)]);
            art.add("minimax.csv", csv_table(&["R", "value", "gap"], rows)?, "minimax-game", "v_limit", Some("minimax.json"));
            let big_r = *radii.last().unwrap();
            let ball = Arc::new(Region::ball(net, 2 * big_r));
            let t = green::green_columns(&ball, &[net.root()], &ball.sphere(radii[0]), ctx.boundary)?;
            let p = minimax::payoff_matrix(&t, radii[0], big_r)?;
            let s = minimax::solve_zero_sum(&p.matrix)?;
            let strat = |vs: &[VertexId], w: &[f64]| vs.iter().zip(w).map(|(&v, &x)| (ctx.label(v), x)).collect::<BTreeMap<_, _>>();
            let report = json!({
                "limit": lim,
                "last_game": {
                    "R": big_r,
                    "r": radii[0],
                    "value": s.value,
                    "duality_gap": s.duality_gap,
                    "status": s.status,
                    "zeta": strat(&p.outer, &s.row_strategy),
                    "eta": strat(&p.inner, &s.col_strategy),
                },
            });
            art.add("minimax.json", to_json(&report), "minimax-game", "solve_zero_sum", None);
        }
        GameRoute::Escaping => {
            let cap = *ctx.radii(&[63])?.last().unwrap();
            let opts = EscapeOptions { boundary: ctx.boundary, ..Default::default() };
            let e = minimax::build_escaping_potential(net, &potential::doubling_schedule(levels), cap, &opts)?;
            let rows = e.profile.iter().enumerate().map(|(rho, &v)| vec![rho.to_string(), num(v)]);
            art.add("profile.csv", csv_table(&["radius", "min_value"], rows)?, "minimax-game", "build_escaping_potential", Some("escaping.json"));
            let report = json!({
                "levels": e.levels,
                "requested_levels": e.requested_levels,
                "achieved_levels": e.achieved_levels(),
                "complete": e.complete,
                "outer_radius": e.outer_radius,
                "profile_nondecreasing": e.profile_nondecreasing(),
                "potential": e.potential.certificate(),
            });
            art.add("escaping.json", to_json(&report), "minimax-game", "build_escaping_potential", None);
        }
    }
    Ok(())
}

fn run_verify(ctx: &Ctx, art: &mut Artifacts, only: Option<&str>, scale: f64, corrupt: bool) -> Result<bool, Error> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::spec("--scale", "must be positive"));
    }
    let cfg = VerifyConfig {
        seed: ctx.g.seed,
        only: only.map(|s| s.split(',').map(|x| x.trim().to_string()).collect()),
        scale,
        corrupt_potential: corrupt,
    };
    let report = verify::verify_all(&cfg)?;
    let lines: Vec<String> = report.checks.iter().map(|c| c.line()).collect();
    for l in &lines {
        eprintln!("{l}");
    }
    let rows = report.checks.iter().flat_map(|c| {
        c.metrics.iter().map(|(k, v)| vec![c.id.clone(), c.passed.to_string(), k.clone(), num(*v)]).collect::<Vec<_>>()
    });
    art.add("verify.csv", csv_table(&["check", "passed", "metric", "value"], rows)?, "cli-report", "verify_all", Some("verify.json"));
    art.add("verify.json", to_json(&report), "cli-report", "verify_all", None);
    Ok(report.passed)
}

fn dispatch(cli: &Cli) -> Result<bool, Error> {
    let net = load_network(&cli.global.net)?;
    let boundary = cli.global.boundary.map(Boundary::from).unwrap_or_else(|| default_boundary(&net));
    let ctx = Ctx { g: cli.global.clone(), net, boundary };
    ctx.tol(1.0)?;
    let mut art = Artifacts::new();
    let mut passed = true;
    match &cli.command {
        Command::Net => run_net(&ctx, &mut art)?,
        Command::Green => run_green(&ctx, &mut art)?,
        Command::Potential => run_potential(&ctx, &mut art)?,
        Command::Hmeasure { set, route, from, paths } => run_hmeasure(&ctx, &mut art, set, *route, from.as_deref(), *paths)?,
        Command::Hsim { paths } => run_hsim(&ctx, &mut art, *paths)?,
        Command::Ust { paths, ends } => run_ust(&ctx, &mut art, *paths, *ends)?,
        Command::Minimax { route, levels } => run_minimax(&ctx, &mut art, *route, *levels)?,
        Command::Verify { only, scale, corrupt_potential } => {
            passed = run_verify(&ctx, &mut art, only.as_deref(), *scale, *corrupt_potential)?
        }
    }
    let manifest = json!({
        "tool": "recurnet",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": ctx.g.seed,
        "global": ctx.g,
        "invocation": cli.command,
        "boundary": ctx.boundary,
        "network": ctx.net.spec().to_value(),
    });
    art.write(cli.global.out.as_deref(), manifest)?;
    Ok(passed)
}

fn main() -> ExitCode {
    recurnet_core::configure_threads();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let report = json!({"kind": e.kind(), "message": e.to_string(), "field": e.field()});
            eprintln!("{}", serde_json::to_string(&report).expect("serializable"));
            ExitCode::from(2)
        }
    }
}
