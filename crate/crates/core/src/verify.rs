//! The cross-module identity suite behind the `verify` subcommand.
//!
//! Each check builds its own inputs from a master seed and reports named
//! residuals; a check that errors is reported as failed, never aborted.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{self, Boundary};
use crate::hmeasure::{self, DetColumn, InfinityOptions};
use crate::hprocess::{self, HSim, Mode, ReturnKernel, ReversalCounter, VisitCounter};
use crate::minimax::{self, EscapeOptions};
use crate::network::{Network, NetworkSpec, Region, VertexId};
use crate::potential::{self, Potential, ValidationOptions};
use crate::rng;
use crate::stats::{self, Moments};
use crate::ust;

/// Check identifiers in suite order.
pub const CHECKS: [&str; 14] = [
    "z-potential",
    "green-symmetry",
    "lipschitz",
    "det-vs-direct",
    "hmeasure-infinity",
    "non-uniqueness",
    "green-identity",
    "last-exit",
    "path-reversal",
    "martin-tracking",
    "minimax",
    "escaping-potential",
    "wilson",
    "phi-product",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Run only these checks.
    pub only: Option<Vec<String>>,
    /// Multiplier on every Monte Carlo sample count.
    pub scale: f64,
    /// Replace the Z² potential used by the Lipschitz check by a corrupted copy.
    pub corrupt_potential: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 2024, only: None, scale: 1.0, corrupt_potential: false }
    }
}

impl VerifyConfig {
    fn samples(&self, n: u64) -> u64 {
        ((n as f64 * self.scale).round() as u64).max(100)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        let metrics: Vec<String> = self.metrics.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        let mut s = format!(
            "{} {:<2} {:<19} {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            CHECKS.iter().position(|c| *c == self.id).map_or(0, |i| i + 1),
            self.id,
            metrics.join(" "),
            self.seconds
        );
        if !self.notes.is_empty() {
            s.push_str(" | ");
            s.push_str(&self.notes.join("; "));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub scale: f64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

struct Outcome {
    passed: bool,
    metrics: BTreeMap<String, f64>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, metrics: BTreeMap::new(), notes: Vec::new() }
    }

    fn metric(&mut self, name: &str, value: f64) -> f64 {
        self.metrics.insert(name.to_string(), value);
        value
    }

    /// Record a condition; a false one fails the check with the given note.
    fn require(&mut self, ok: bool, note: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.notes.push(note.into());
        }
    }
}

/// Shared inputs, built on first use.
#[derive(Default)]
struct Context {
    z: OnceLock<Network>,
    z2: OnceLock<Network>,
    h_z2: OnceLock<std::result::Result<Potential, String>>,
}

impl Context {
    fn z(&self) -> &Network {
        self.z.get_or_init(|| Network::build(NetworkSpec::integer_line()).expect("integer line"))
    }

    fn z2(&self) -> &Network {
        self.z2.get_or_init(|| Network::build(NetworkSpec::lattice(2)).expect("square lattice"))
    }

    /// Exhaustion potential of Z² over balls up to radius 400.
    fn h_z2(&self) -> Result<&Potential> {
        self.h_z2
            .get_or_init(|| {
                let net = self.z2();
                let ex = potential::ball_exhaustion(net, &[10, 100, 200, 400]);
                potential::potential_from_exhaustion(net, &ex, 1e-7).map(|r| r.potential).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Solver(e.clone()))
    }
}

/// `|k|/2` on a ball of Z.
fn z_half_abs(net: &Network, radius: usize) -> Result<Potential> {
    let region = Arc::new(Region::ball(net, radius));
    Potential::from_fn(net, region, |v| net.coords(v)[0].abs() as f64 / 2.0)
}

fn vertices(net: &Network, labels: &[&str]) -> Result<Vec<VertexId>> {
    labels.iter().map(|l| net.vertex(l)).collect()
}

pub fn run_check(id: &str, cfg: &VerifyConfig) -> Result<CheckResult> {
    run_with(id, cfg, &Context::default())
}

fn run_with(id: &str, cfg: &VerifyConfig, ctx: &Context) -> Result<CheckResult> {
    let f: fn(&VerifyConfig, &Context, &mut Outcome) -> Result<()> = match id {
        "z-potential" => z_potential,
        "green-symmetry" => green_symmetry,
        "lipschitz" => lipschitz,
        "det-vs-direct" => det_vs_direct,
        "hmeasure-infinity" => hmeasure_infinity,
        "non-uniqueness" => non_uniqueness,
        "green-identity" => green_identity,
        "last-exit" => last_exit,
        "path-reversal" => path_reversal,
        "martin-tracking" => martin_tracking,
        "minimax" => minimax_check,
        "escaping-potential" => escaping_potential,
        "wilson" => wilson,
        "phi-product" => phi_product,
        other => return Err(Error::spec("only", format!("unknown check '{other}'"))),
    };
    let t = Instant::now();
    let mut out = Outcome::new();
    if let Err(e) = f(cfg, ctx, &mut out) {
        out.passed = false;
        out.notes.push(format!("error: {e}"));
    }
    Ok(CheckResult {
        id: id.to_string(),
        passed: out.passed,
        metrics: out.metrics,
        notes: out.notes,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Run the selected checks in suite order.
pub fn verify_all(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let ids: Vec<&str> = match &cfg.only {
        None => CHECKS.to_vec(),
        Some(list) => {
            for id in list {
                if !CHECKS.contains(&id.as_str()) {
                    return Err(Error::spec("only", format!("unknown check '{id}'")));
                }
            }
            CHECKS.iter().copied().filter(|c| list.iter().any(|l| l == c)).collect()
        }
    };
    let ctx = Context::default();
    let checks = ids.iter().map(|id| run_with(id, cfg, &ctx)).collect::<Result<Vec<_>>>()?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { seed: cfg.seed, scale: cfg.scale, checks, passed })
}

fn z_potential(_: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z();
    let run = potential::potential_from_exhaustion(net, &potential::ball_exhaustion(net, &[25, 50, 100]), 1e-9)?;
    let mut err = 0.0f64;
    for k in -20i32..=20 {
        let v = net.vertex(&k.to_string())?;
        err = err.max((run.potential.at(v)? - k.abs() as f64 / 2.0).abs());
    }
    let err = out.metric("max_err", err);
    out.require(err <= 1e-9, "h(k) differs from |k|/2");
    Ok(())
}

fn green_symmetry(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z2();
    let root = net.root();
    let bx = Arc::new(Region::grow(net, 30, |v| net.coords(v).iter().all(|c| c.abs() <= 15))?);
    let table = green::killed_green_table(&bx, &[root], Boundary::Free)?;
    let mut rng = rng::path_rng(rng::derive_seed(cfg.seed, 2), 0);
    let lap = |col: &[f64], i: usize| -> f64 {
        bx.adj(i).iter().filter(|a| a.local != crate::network::OUTSIDE).map(|a| a.c * (col[a.local as usize] - col[i])).sum()
    };
    let (mut at_y, mut at_root, mut elsewhere) = (0.0f64, 0.0f64, 0.0f64);
    let o = bx.local(root).unwrap();
    for _ in 0..20 {
        let y = loop {
            let y = bx.vertex(rng.random_range(0..bx.len()));
            if y != root {
                break y;
            }
        };
        let col = table.column(y).unwrap();
        let iy = bx.local(y).unwrap();
        at_y = at_y.max((lap(col, iy) + 1.0).abs());
        at_root = at_root.max((lap(col, o) - 1.0).abs());
        for i in 0..bx.len() {
            if i != iy && i != o {
                elsewhere = elsewhere.max(lap(col, i).abs());
            }
        }
    }
    let asym = table.max_asymmetry();
    out.metric("lap_y_err", at_y);
    out.metric("lap_root_err", at_root);
    out.metric("lap_other", elsewhere);
    out.metric("asymmetry", asym);
    out.require(at_y <= 1e-8 && at_root <= 1e-8 && elsewhere <= 1e-8, "dipole Laplacian off");
    out.require(asym <= 1e-10, "Green table not symmetric");
    Ok(())
}

fn lipschitz(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z2();
    let mut h = ctx.h_z2()?.clone();
    if cfg.corrupt_potential {
        let v = net.vertex("(3,0)")?;
        h = h.corrupted(v, h.at(v)? + 1.0);
        out.notes.push("corrupted potential injected at (3,0)".into());
    }
    let ball = Region::ball(net, 10);
    let opts = ValidationOptions {
        random_pairs: 500,
        seed: cfg.seed,
        all_edges: true,
        resistance_radius: Some(200),
        resistance_boundary: Boundary::Wired,
        ..ValidationOptions::default()
    };
    let rep = potential::validate_potential(net, &h, &ball, &opts);
    let slack = rep.lipschitz_slack.unwrap_or(f64::NEG_INFINITY);
    out.metric("lipschitz_slack", slack);
    out.metric("edge_slack", rep.edge_gradient_slack);
    out.metric("pairs", rep.pairs_tested as f64);
    out.require(slack >= -1e-8 && rep.edge_gradient_slack >= -1e-8, format!("Lipschitz bound violated at {:?}", rep.worst_pair));
    Ok(())
}

/// Random connected network on `n` labelled vertices, rooted at `v0`.
fn random_network(rng: &mut impl Rng, n: usize) -> Result<Network> {
    let mut edges: Vec<(String, String, f64)> = Vec::new();
    for i in 1..n {
        let p = rng.random_range(0..i);
        edges.push((format!("v{p}"), format!("v{i}"), rng.random_range(0.2..3.0)));
    }
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|e| e.0 == format!("v{a}") && e.1 == format!("v{b}")) {
            edges.push((format!("v{a}"), format!("v{b}"), rng.random_range(0.2..3.0)));
        }
    }
    let e: Vec<(&str, &str, f64)> = edges.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), *c)).collect();
    Network::build(NetworkSpec::explicit(&e))
}

fn det_vs_direct(cfg: &VerifyConfig, _: &Context, out: &mut Outcome) -> Result<()> {
    let mut rng = rng::path_rng(rng::derive_seed(cfg.seed, 4), 0);
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let n = rng.random_range(4..=30);
        let net = random_network(&mut rng, n)?;
        let region = Arc::new(Region::ball(&net, n));
        let root = net.root();
        let k = rng.random_range(1..=4.min(n - 2));
        let mut a = vec![root];
        while a.len() <= k {
            let v = region.vertex(rng.random_range(0..n));
            if !a.contains(&v) {
                a.push(v);
            }
        }
        let v = loop {
            let v = region.vertex(rng.random_range(0..n));
            if !a.contains(&v) {
                break v;
            }
        };
        let direct = hmeasure::harmonic_measure_exact(&net, &a, v, &region, Boundary::Free)?;
        let table = green::killed_green_table(&region, &[root], Boundary::Free)?;
        let det = hmeasure::harmonic_measure_det(&table, DetColumn::Vertex(v), &a)?;
        for (x, y) in direct.weights.iter().zip(&det.weights) {
            worst = worst.max((x - y).abs());
        }
    }
    let worst = out.metric("max_diff", worst);
    out.require(worst <= 1e-9, "Cramer formula disagrees with the direct solve");
    Ok(())
}

fn hmeasure_infinity(_: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z2();
    let z = net.vertex("(1,0)")?;
    let a = [net.root(), z];
    let opts = InfinityOptions { boundary: Boundary::Midpoint, ..InfinityOptions::default() };
    let (lim, cert) = hmeasure::harmonic_measure_infinity(net, &a, &[8, 16, 32, 64], 1e-3, &opts)?;
    let det = hmeasure::harmonic_measure_infinity_det(net, ctx.h_z2()?, &a, 256, Boundary::Midpoint)?;
    let wl = lim.get(z).unwrap();
    let wd = det.get(z).unwrap();
    out.metric("limit", wl);
    out.metric("det", wd);
    let diff = out.metric("route_diff", (wl - wd).abs());
    out.metric("last_within_tv", *cert.within_tv.last().unwrap());
    out.require((wl - 0.5).abs() <= 1e-3, "limit route away from 1/2");
    out.require(cert.within_tv_decreasing(), "TV certificate not decreasing");
    out.require(diff <= 1e-6, "routes disagree");
    Ok(())
}

fn non_uniqueness(_: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z();
    let a = [net.root(), net.vertex("1")?];
    let (_, cert) = hmeasure::harmonic_measure_infinity(net, &a, &[8, 16, 32, 64], 1e-3, &InfinityOptions::default())?;
    let gap = cert.within_tv.iter().copied().fold(f64::INFINITY, f64::min);
    out.metric("min_within_tv", gap);
    out.require(gap >= 0.5 && !cert.converged, "limit route did not certify non-convergence");
    let ns = [100, 1000, 10000];
    let h1 = potential::potential_from_exhaustion(net, &potential::asymmetric_line_exhaustion(net, 1.0, &ns)?, 1e-3)?;
    let h3 = potential::potential_from_exhaustion(net, &potential::asymmetric_line_exhaustion(net, 3.0, &ns)?, 1e-3)?;
    let k = net.vertex("10")?;
    let d = out.metric("shape_gap_at_10", (h1.potential.at(k)? - h3.potential.at(k)?).abs());
    out.require(d >= 0.1, "exhaustion shapes agree");
    Ok(())
}

const PROBES: [&str; 5] = ["(1,0)", "(1,1)", "(2,0)", "(0,-2)", "(-2,1)"];

fn green_identity(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z2();
    let h = ctx.h_z2()?;
    let landing = Arc::new(Region::ball(net, 4));
    let kernel = Arc::new(ReturnKernel::build(net, h, landing, 256, Boundary::Midpoint)?);
    let sim = HSim::new(net, h, Mode::Return(kernel.clone()))?;
    let probes = vertices(net, &PROBES)?;
    let n = cfg.samples(1_000_000);
    let counter = sim.simulate_fold(
        rng::derive_seed(cfg.seed, 7),
        n,
        || VisitCounter::new(&probes),
        |c, p| c.push(p),
        |a, b| a.merge(b),
    );
    let rep = counter.report(net, h)?;
    let max_z = rep.probes.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    let max_rel = rep.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max);
    out.metric("paths", n as f64);
    out.metric("max_abs_z", max_z);
    out.metric("max_rel_err", max_rel);
    out.metric("return_eps", kernel.eps);
    out.require(max_z <= 3.0 && max_rel < 0.02, "visit counts off h(v)c_v");
    Ok(())
}

fn last_exit(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z2();
    let h = ctx.h_z2()?;
    let d = Arc::new(Region::ball(net, 2));
    let landing = Arc::new(hprocess::neighborhood(net, d.vertices(), 2)?);
    let kernel = Arc::new(ReturnKernel::build(net, h, landing, 512, Boundary::Midpoint)?);
    let sim = HSim::new(net, h, Mode::Return(kernel.clone()))?;
    let n = cfg.samples(100_000);
    let budget = 1e-4;
    let counter = sim.simulate_fold(
        rng::derive_seed(cfg.seed, 8),
        n,
        || hprocess::LastExitCounter::new(d.clone(), net.root(), budget),
        |c, p| c.push(p),
        |a, b| a.merge(b),
    );
    let rep = counter.report();
    let det = hmeasure::harmonic_measure_infinity_det(net, h, d.vertices(), 256, Boundary::Midpoint)?;
    let tv = out.metric("tv", rep.measure.tv(&det)?);
    out.metric("max_bias", rep.max_bias);
    out.metric("mean_bias", rep.total_bias / rep.n_used.max(1) as f64);
    out.metric("excluded", rep.excluded as f64);
    out.metric("return_eps", kernel.eps);
    out.require(tv <= 0.01, "last-exit law far from the determinant route");
    out.require(rep.max_bias <= budget, "bias above budget");
    Ok(())
}

fn reversal_on(net: &Network, h: &Potential, radius: usize, boundary: Boundary, n: u64, seed: u64) -> Result<hprocess::ReversalReport> {
    let k = 3;
    let d = Arc::new(Region::ball(net, 2));
    let landing = Arc::new(hprocess::neighborhood(net, d.vertices(), k + 1)?);
    let kernel = Arc::new(ReturnKernel::build(net, h, landing, radius, boundary)?);
    let sim = HSim::new(net, h, Mode::Return(kernel))?;
    let root = net.root();
    let c = sim.simulate_fold(seed, n, || ReversalCounter::new(d.clone(), root, k), |c, p| c.push(p), |a, b| a.merge(b));
    Ok(c.report(net))
}

fn path_reversal(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let n = cfg.samples(100_000);
    let z = ctx.z();
    let hz = z_half_abs(z, 200)?;
    let rz = reversal_on(z, &hz, 64, Boundary::Free, n, rng::derive_seed(cfg.seed, 9))?;
    let r2 = reversal_on(ctx.z2(), ctx.h_z2()?, 256, Boundary::Midpoint, n, rng::derive_seed(cfg.seed, 10))?;
    out.metric("p_z", rz.fit.p_value);
    out.metric("p_z2", r2.fit.p_value);
    out.metric("excluded", (rz.excluded + r2.excluded) as f64);
    out.require(rz.fit.p_value > 0.01, "Z segments do not fit the walk");
    out.require(r2.fit.p_value > 0.01, "Z² segments do not fit the walk");
    Ok(())
}

fn martin_tracking(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let net = ctx.z2();
    let h = ctx.h_z2()?;
    let probes = vertices(net, &PROBES[..3])?;
    let ball = Arc::new(Region::ball(net, 400));
    let gtab = green::green_columns(&ball, &[net.root()], &probes, Boundary::Midpoint)?;
    let sim = HSim::new(net, h, Mode::Level(0.9))?;
    let n = cfg.samples(1000);
    let paths = sim.simulate_many(rng::derive_seed(cfg.seed, 11), n);
    let mut settled = 0u64;
    let mut means = vec![Moments::default(); probes.len()];
    for p in &paths {
        let tracks = hprocess::martin_track(p, &probes, &gtab)?;
        if tracks.iter().all(|t| t.tail_dispersion < 0.05) {
            settled += 1;
        }
        for (m, t) in means.iter_mut().zip(&tracks) {
            m.push(t.last);
        }
    }
    let frac = out.metric("settled_fraction", settled as f64 / n as f64);
    out.require(frac >= 0.9, "too few paths settled");
    let mut worst = 0.0f64;
    for (m, &x) in means.iter().zip(&probes) {
        worst = worst.max((m.mean - h.at(x)?).abs() / m.stderr());
    }
    let worst = out.metric("max_abs_z", worst);
    out.require(worst <= 3.0, "path-averaged limits off h");

    let z = ctx.z();
    let hz = z_half_abs(z, 200)?;
    let zball = Arc::new(Region::ball(z, 200));
    let one = z.vertex("1")?;
    let ztab = green::green_columns(&zball, &[z.root()], &[one], Boundary::Free)?;
    let zsim = HSim::new(z, &hz, Mode::Level(30.0))?;
    let nz = cfg.samples(10_000);
    let mut right = 0u64;
    for p in zsim.simulate_many(rng::derive_seed(cfg.seed, 12), nz) {
        let t = &hprocess::martin_track(&p, &[one], &ztab)?[0];
        if (t.last - 1.0).abs() < 1e-9 {
            right += 1;
        } else if t.last.abs() > 1e-9 {
            out.require(false, "Z limit is neither component");
        }
    }
    let f = right as f64 / nz as f64;
    let zf = out.metric("z_right_z", (f - 0.5) / (0.25 / nz as f64).sqrt());
    out.metric("z_right_fraction", f);
    out.require(zf.abs() <= 3.0, "Z components not balanced");
    Ok(())
}

fn minimax_check(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let _ = cfg;
    let mut worst_gap = 0.0f64;
    let mut worst_fp = 0.0f64;
    let mut sandwich = f64::INFINITY;
    let mut solve = |m: &minimax::Matrix| -> Result<f64> {
        let s = minimax::solve_zero_sum(m)?;
        let fp = minimax::fictitious_play(m, 5e-5, 10_000_000);
        worst_gap = worst_gap.max(s.duality_gap / (1.0 + s.value.abs()));
        worst_fp = worst_fp.max((fp.value - s.value).abs());
        Ok(s.value)
    };
    let z = ctx.z();
    let zt = green::green_columns(&Arc::new(Region::ball(z, 20)), &[z.root()], &[z.vertex("1")?, z.vertex("-1")?], Boundary::Free)?;
    for big_r in 2..=10 {
        let v = solve(&minimax::payoff_matrix(&zt, 1, big_r)?.matrix)?;
        sandwich = sandwich.min(v - 0.5);
    }
    let net = ctx.z2();
    let h = ctx.h_z2()?;
    let ball = Arc::new(Region::ball(net, 128));
    for r in [1usize, 2] {
        let cols = ball.sphere(r);
        let t = green::green_columns(&ball, &[net.root()], &cols, Boundary::Midpoint)?;
        let hmin = cols.iter().map(|&v| h.at(v)).collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
        for big_r in [4usize, 8, 12] {
            let v = solve(&minimax::payoff_matrix(&t, r, big_r)?.matrix)?;
            sandwich = sandwich.min(v - hmin);
        }
    }
    out.metric("max_rel_gap", worst_gap);
    out.metric("max_fp_diff", worst_fp);
    out.metric("min_sandwich_slack", sandwich);
    out.require(worst_gap <= 1e-8, "duality gap too large");
    out.require(worst_fp <= 1e-4, "fictitious play disagrees with the simplex");
    out.require(sandwich >= -1e-6, "V(R,r) below min h on the inner sphere");
    Ok(())
}

fn escaping_potential(_: &VerifyConfig, _: &Context, out: &mut Outcome) -> Result<()> {
    let schedule = potential::doubling_schedule(3);
    let cases: [(&str, NetworkSpec, usize, Boundary); 3] = [
        ("z", NetworkSpec::integer_line(), 63, Boundary::Free),
        ("z2", NetworkSpec::lattice(2), 63, Boundary::Midpoint),
        ("tree2", NetworkSpec::regular_tree(2), 6, Boundary::Free),
    ];
    for (name, spec, cap, boundary) in cases {
        let net = Network::build(spec)?;
        let e = minimax::build_escaping_potential(&net, &schedule, cap, &EscapeOptions { boundary, ..Default::default() })?;
        let opts = ValidationOptions { all_edges: false, random_pairs: 0, ..ValidationOptions::default() };
        let rep = potential::validate_potential(&net, &e.potential, e.potential.region(), &opts);
        let residual = rep.harmonic_residual.max(rep.root_residual);
        out.metric(&format!("{name}_residual"), residual);
        out.metric(&format!("{name}_levels"), e.achieved_levels() as f64);
        out.require(residual <= 1e-6 && rep.min_value >= -1e-12, format!("{name}: not a potential"));
        out.require(e.profile_nondecreasing(), format!("{name}: profile decreases"));
        out.require(e.complete, format!("{name}: reached {} of 3 levels within radius {cap}", e.achieved_levels()));
        for l in &e.levels {
            out.require(
                e.profile[l.radius] >= l.n as f64 * (1.0 - minimax::LEVEL_RTOL),
                format!("{name}: profile below {} at radius {}", l.n, l.radius),
            );
        }
    }
    Ok(())
}

fn wilson_case(net: &Network, n: u64, seed: u64) -> Result<f64> {
    let region = Region::ball(net, net.vertex_count().unwrap());
    let exact = ust::tree_prob_enumerate(net)?;
    let samples = ust::wilson_samples(net, &region, &ust::bfs_order(&region), seed, n);
    let mut counts = vec![0u64; exact.trees.len()];
    for s in samples {
        let k = exact.trees.iter().position(|t| t.0 == s).ok_or_else(|| Error::Solver("sampled tree not enumerated".into()))?;
        counts[k] += 1;
    }
    let probs: Vec<f64> = exact.trees.iter().map(|t| t.1).collect();
    Ok(stats::chi_square(&counts, &probs).p_value)
}

fn wilson(cfg: &VerifyConfig, _: &Context, out: &mut Outcome) -> Result<()> {
    let n = cfg.samples(100_000);
    let tri = Network::build(NetworkSpec::explicit(&[("1", "2", 1.0), ("1", "3", 2.0), ("2", "3", 3.0)]))?;
    let grid = Network::build(NetworkSpec::explicit(&[("a", "b", 1.0), ("b", "d", 1.0), ("d", "c", 1.0), ("c", "a", 1.0)]))?;
    let pt = out.metric("p_triangle", wilson_case(&tri, n, rng::derive_seed(cfg.seed, 13))?);
    let pg = out.metric("p_grid", wilson_case(&grid, n, rng::derive_seed(cfg.seed, 14))?);
    out.require(pt > 0.01, "triangle frequencies off");
    out.require(pg > 0.01, "grid frequencies off");
    Ok(())
}

fn phi_product(cfg: &VerifyConfig, ctx: &Context, out: &mut Outcome) -> Result<()> {
    let rho = 7;
    let net = Network::build(NetworkSpec::phi_product(5, rho))?;
    let d = 5.0;
    let region = Arc::new(Region::ball(&net, rho));
    let root = net.root();
    let phi = |v: VertexId| net.phi(v).ok_or_else(|| Error::Undefined(net.label(v)));
    let mut kernel_dev = 0.0f64;
    for &x in region.vertices() {
        if x == root {
            continue;
        }
        let cx = net.csum(x);
        for (y, c) in net.neighbors(x) {
            kernel_dev = kernel_dev.max((c / cx - phi(y)? / (2.0 * d * phi(x)?)).abs());
        }
    }
    out.metric("kernel_dev", kernel_dev);
    out.require(kernel_dev <= 1e-12, "kernel identity fails");

    let lattice = Network::build(NetworkSpec::lattice(5))?;
    let lball = Arc::new(Region::ball(&lattice, rho));
    let big_h = potential::exhaustion_step(&lattice, &lball)?;
    let e1 = net.neighbors(root)[0].0;
    let g00 = 1.0 / (2.0 * d * (1.0 - phi(e1)?));
    let closed = Potential::from_fn(&net, region.clone(), |v| {
        let p = net.phi(v).unwrap_or(1.0);
        g00 * (1.0 - p) / p
    })?;
    let mut dev = 0.0f64;
    for &v in Region::ball(&net, 3).vertices() {
        let lv = lattice.vertex_of(&net.coords(v)).ok_or_else(|| Error::Undefined(net.label(v)))?;
        let from_exhaustion = big_h[lball.local(lv).unwrap()] / phi(v)?;
        dev = dev.max((closed.at(v)? - from_exhaustion).abs());
    }
    out.metric("closed_form_dev", dev);
    out.require(dev <= 1e-6, "closed-form potential disagrees with the exhaustion");

    let n = cfg.samples(4000);
    let sim = HSim::new(&net, &closed, Mode::Exit(region.clone()))?;
    let mut phi_freq = Vec::new();
    for big_r in [2usize, 4, 6] {
        let p = ust::end_profile(&net, [&sim, &sim], &region, 1, big_r, n, rng::derive_seed(cfg.seed, 15), 1e-3)?;
        out.metric(&format!("phi_R{big_r}"), p.frequency);
        phi_freq.push((p.frequency, p.stderr));
    }
    let z2 = ctx.z2();
    let h = ctx.h_z2()?;
    let mut z2_freq = Vec::new();
    for big_r in [2usize, 4, 8] {
        let landing = Arc::new(hprocess::neighborhood(z2, Region::ball(z2, big_r).vertices(), 2)?);
        let kernel = Arc::new(ReturnKernel::build(z2, h, landing, 128.max(32 * big_r), Boundary::Midpoint)?);
        let sim2 = HSim::new(z2, h, Mode::Return(kernel))?;
        let lr = Region::ball(z2, 4 * big_r);
        let p = ust::end_profile(z2, [&sim2, &sim2], &lr, 1, big_r, n, rng::derive_seed(cfg.seed, 16), 0.05)?;
        out.metric(&format!("z2_R{big_r}"), p.frequency);
        z2_freq.push((p.frequency, p.stderr));
    }
    let phi_min = phi_freq.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    out.require(phi_min >= 0.5, "φ-product merge frequency drops");
    let (first, last) = (z2_freq[0], z2_freq[2]);
    out.require(
        first.0 - last.0 > 3.0 * first.1.hypot(last.1),
        "Z² merge frequency does not decay",
    );
    let phi_last = phi_freq[2];
    out.require(phi_last.0 - last.0 > 3.0 * phi_last.1.hypot(last.1), "no separation between φ-product and Z²");
    Ok(())
}
