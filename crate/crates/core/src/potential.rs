//! Potentials: construction from exhaustions, validation, root transfer and the
//! explicit construction on trees.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{self, Boundary, DirichletProblem, ResistanceOracle};
use crate::network::{Network, Region, VertexId, OUTSIDE};
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PotentialCertificate {
    /// Radius of the ball on which the values are certified, when it is a ball.
    pub radius: Option<usize>,
    /// Max `|Δh(v)|` over interior vertices `v ≠ root` of the value region.
    pub harmonic_residual: f64,
    /// `|Δh(root) − 1|`.
    pub root_residual: f64,
    /// Max-norm changes between successive approximations, if any.
    pub increments: Vec<f64>,
    pub tol: Option<f64>,
    pub converged: bool,
}

/// A nonnegative function with `h(root) = 0`, `Δh(root) = 1`, harmonic elsewhere
/// on the interior of its value region.
#[derive(Clone, Debug)]
pub struct Potential {
    root: VertexId,
    region: Arc<Region>,
    values: Vec<f64>,
    certified: Arc<Region>,
    certificate: PotentialCertificate,
}

impl Potential {
    /// Wrap values on a region; residuals are measured on the region's interior.
    pub fn from_values(root: VertexId, region: Arc<Region>, values: Vec<f64>) -> Result<Potential> {
        if values.len() != region.len() {
            return Err(Error::Invalid("value vector does not match the region".into()));
        }
        let root_local = region
            .local(root)
            .ok_or_else(|| Error::Invalid("potential region must contain its root".into()))?;
        if region.is_boundary(root_local) {
            return Err(Error::RegionTooSmall("the root must be an interior vertex of the region".into()));
        }
        let (harmonic_residual, root_residual) = residuals(&region, &values, root_local);
        let certificate = PotentialCertificate {
            radius: region.radius(),
            harmonic_residual,
            root_residual,
            increments: Vec::new(),
            tol: None,
            converged: true,
        };
        Ok(Potential { root, certified: region.clone(), region, values, certificate })
    }

    /// Tabulate a closure on a region.
    pub fn from_fn(net: &Network, region: Arc<Region>, f: impl Fn(VertexId) -> f64) -> Result<Potential> {
        let _ = net;
        let values = region.vertices().iter().map(|&v| f(v)).collect();
        Self::from_values(region.center(), region, values)
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn region(&self) -> &Arc<Region> {
        &self.region
    }

    /// The region on which the values are a certified limit.
    pub fn certified_region(&self) -> &Arc<Region> {
        &self.certified
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn certificate(&self) -> &PotentialCertificate {
        &self.certificate
    }

    #[inline]
    pub fn get(&self, v: VertexId) -> Option<f64> {
        self.region.local(v).map(|i| self.values[i])
    }

    pub fn at(&self, v: VertexId) -> Result<f64> {
        self.get(v).ok_or_else(|| Error::Undefined(format!("{v}")))
    }

    /// Convex combination `Σ α_i h_i` of potentials on the same region and root.
    pub fn mix(parts: &[(f64, &Potential)]) -> Result<Potential> {
        let (_, first) = parts.first().ok_or_else(|| Error::Invalid("empty mixture".into()))?;
        let total: f64 = parts.iter().map(|(a, _)| a).sum();
        if parts.iter().any(|(a, _)| *a < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid("mixture weights must be a probability vector".into()));
        }
        let mut values = vec![0.0; first.values.len()];
        for (a, p) in parts {
            if p.root != first.root || p.region.vertices() != first.region.vertices() {
                return Err(Error::Invalid("mixed potentials must share root and region".into()));
            }
            for (v, x) in values.iter_mut().zip(&p.values) {
                *v += a * x;
            }
        }
        Potential::from_values(first.root, first.region.clone(), values)
    }

    /// Copy with one value overwritten, bypassing all checks. Used for fault injection.
    pub fn corrupted(&self, v: VertexId, value: f64) -> Potential {
        let mut p = self.clone();
        if let Some(i) = p.region.local(v) {
            p.values[i] = value;
        }
        p
    }

    /// Restrict to a subregion (which must contain the root in its interior).
    pub fn restrict(&self, sub: Arc<Region>) -> Result<Potential> {
        let values = sub.vertices().iter().map(|&v| self.at(v)).collect::<Result<Vec<_>>>()?;
        let mut p = Potential::from_values(self.root, sub, values)?;
        p.certificate.increments = self.certificate.increments.clone();
        p.certificate.tol = self.certificate.tol;
        p.certificate.converged = self.certificate.converged;
        Ok(p)
    }
}

fn residuals(region: &Region, values: &[f64], root_local: usize) -> (f64, f64) {
    let mut harm = 0.0f64;
    let mut root = 0.0;
    for i in 0..region.len() {
        let Some(l) = region.laplacian(values, i) else { continue };
        if i == root_local {
            root = (l - 1.0).abs();
        } else {
            harm = harm.max(l.abs());
        }
    }
    (harm, root)
}

/// Output of an exhaustion run.
#[derive(Clone, Debug)]
pub struct ExhaustionRun {
    /// The last computed `h_n`, on the last `D_n`, with convergence measured on `D_0`.
    pub potential: Potential,
    /// Each `h_n` restricted to `D_0`.
    pub sequence: Vec<Vec<f64>>,
    pub increments: Vec<f64>,
    pub converged: bool,
}

/// `h_D(x) = g_D(∘,∘) − g_D(x,∘)` with the walk killed on leaving `D`.
pub fn exhaustion_step(net: &Network, d: &Arc<Region>) -> Result<Vec<f64>> {
    let root = net.root();
    if !d.contains(root) {
        return Err(Error::Invalid("exhaustion sets must contain the root".into()));
    }
    let prob = DirichletProblem::new(d, Boundary::Absorbing).source(root, -1.0);
    let g = green::dirichlet_solve(net, &prob)?;
    let g0 = g[d.local(root).unwrap()];
    Ok(g.iter().map(|x| g0 - x).collect())
}

/// Potentials `h_n` along a nested exhaustion, stopping once successive
/// functions differ by at most `tol` on the first set.
pub fn potential_from_exhaustion(net: &Network, exhaustion: &[Region], tol: f64) -> Result<ExhaustionRun> {
    let first = exhaustion.first().ok_or_else(|| Error::Invalid("empty exhaustion".into()))?;
    for w in exhaustion.windows(2) {
        if !w[0].vertices().iter().all(|&v| w[1].contains(v)) {
            return Err(Error::Invalid("exhaustion must be nested".into()));
        }
    }
    let d0 = Arc::new(first.clone());
    let mut sequence: Vec<Vec<f64>> = Vec::new();
    let mut increments = Vec::new();
    let mut last: Option<(Arc<Region>, Vec<f64>)> = None;
    for d in exhaustion {
        let d = Arc::new(d.clone());
        let h = exhaustion_step(net, &d)?;
        let restricted: Vec<f64> = d0.vertices().iter().map(|&v| h[d.local(v).unwrap()]).collect();
        if let Some(prev) = sequence.last() {
            let inc = prev.iter().zip(&restricted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            increments.push(inc);
        }
        sequence.push(restricted);
        last = Some((d, h));
        if increments.last().is_some_and(|&i| i <= tol) {
            break;
        }
    }
    let (d, h) = last.unwrap();
    let converged = increments.last().is_some_and(|&i| i <= tol);
    let mut potential = Potential::from_values(net.root(), d, h)?;
    potential.certified = d0.clone();
    potential.certificate.radius = d0.radius();
    potential.certificate.increments = increments.clone();
    potential.certificate.tol = Some(tol);
    potential.certificate.converged = converged;
    Ok(ExhaustionRun { potential, sequence, increments, converged })
}

/// Balls `B(∘, r)` for the given radii.
pub fn ball_exhaustion(net: &Network, radii: &[usize]) -> Vec<Region> {
    radii.iter().map(|&r| Region::ball(net, r)).collect()
}

/// On the integer line: `D_n = [−⌈λ n⌉, n]`.
pub fn asymmetric_line_exhaustion(net: &Network, lambda: f64, ns: &[usize]) -> Result<Vec<Region>> {
    if net.dimension() != Some(1) || net.is_tree() {
        return Err(Error::Invalid("asymmetric exhaustion needs the integer line".into()));
    }
    ns.iter()
        .map(|&n| {
            let left = (lambda * n as f64).ceil() as i64;
            let vs = (-left..=n as i64)
                .map(|k| net.vertex(&k.to_string()))
                .collect::<Result<Vec<_>>>()?;
            Region::from_vertices(net, vs)
        })
        .collect()
}

/// `D_n = {v ∈ B(∘, n) : h(v) ≤ n}` (root component) for a target potential `h`.
pub fn level_set_exhaustion(net: &Network, h: &Potential, ns: &[usize]) -> Result<Vec<Region>> {
    ns.iter()
        .map(|&n| Region::grow(net, n, |v| h.get(v).is_some_and(|x| x <= n as f64)))
        .collect()
}

/// Least-squares fit of `α max(k,0) + (1−α) max(−k,0)` to a function on the line.
///
/// Returns `(α, max residual)`.
pub fn fit_line_mixture(net: &Network, h: &Potential) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pts = Vec::new();
    for (i, &v) in h.region().vertices().iter().enumerate() {
        let k = net.coords(v)[0] as f64;
        let y = h.values()[i] - k.min(0.0).abs();
        // h = |k|_- + α k  ⇒  y = α k
        num += y * k;
        den += k * k;
        pts.push((k, h.values()[i]));
    }
    let alpha = if den > 0.0 { num / den } else { 0.5 };
    let res = pts
        .iter()
        .map(|&(k, y)| (y - alpha * k.max(0.0) - (1.0 - alpha) * (-k).max(0.0)).abs())
        .fold(0.0, f64::max);
    (alpha, res)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Threshold for the harmonicity and root residuals.
    pub tol: f64,
    /// Slack allowed in the gradient and resistance bounds.
    pub lipschitz_tol: f64,
    pub random_pairs: usize,
    pub seed: u64,
    /// Check the resistance bound on every edge of the region as well.
    pub all_edges: bool,
    /// Radius of the ball on which effective resistances are computed.
    pub resistance_radius: Option<usize>,
    pub resistance_boundary: Boundary,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            tol: 1e-6,
            lipschitz_tol: 1e-8,
            random_pairs: 0,
            seed: 0,
            all_edges: true,
            resistance_radius: None,
            resistance_boundary: Boundary::Free,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub root_value: f64,
    pub min_value: f64,
    pub harmonic_residual: f64,
    pub root_residual: f64,
    /// `min (r_xy − |h(x) − h(y)|)` over edges of the region.
    pub edge_gradient_slack: f64,
    pub worst_edge: Option<(String, String)>,
    /// `min (R_eff(x↔y) − |h(x) − h(y)|)` over tested pairs.
    pub lipschitz_slack: Option<f64>,
    pub worst_pair: Option<(String, String)>,
    pub pairs_tested: usize,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Check the defining properties of a potential on `region`, and its Lipschitz
/// bounds. Never fails; problems are listed in the report.
pub fn validate_potential(net: &Network, h: &Potential, region: &Region, opts: &ValidationOptions) -> ValidationReport {
    let mut failures = Vec::new();
    let root = h.root();
    let root_value = h.get(root).unwrap_or(f64::NAN);
    let mut min_value = f64::INFINITY;
    let mut harm = 0.0f64;
    let mut root_res = f64::NAN;
    let mut edge_slack = f64::INFINITY;
    let mut worst_edge = None;
    let mut undefined = 0usize;
    for i in 0..region.len() {
        let v = region.vertex(i);
        let Some(hv) = h.get(v) else {
            undefined += 1;
            continue;
        };
        min_value = min_value.min(hv);
        let mut lap = 0.0;
        let mut complete = true;
        for a in region.adj(i) {
            match h.get(a.id) {
                Some(hx) => {
                    lap += a.c * (hx - hv);
                    if a.local != OUTSIDE && v < a.id {
                        let s = 1.0 / a.c - (hx - hv).abs();
                        if s < edge_slack {
                            edge_slack = s;
                            worst_edge = Some((net.label(v), net.label(a.id)));
                        }
                    }
                }
                None => complete = false,
            }
        }
        if !complete {
            continue;
        }
        if v == root {
            root_res = (lap - 1.0).abs();
        } else {
            harm = harm.max(lap.abs());
        }
    }
    if undefined > 0 {
        failures.push(format!("h undefined at {undefined} vertices of the region"));
    }
    if root_value != 0.0 {
        failures.push(format!("h(root) = {root_value}"));
    }
    if min_value < -1e-12 {
        failures.push(format!("negative value {min_value}"));
    }
    if root_res.is_nan() {
        failures.push("root is not an interior vertex of the checked region".into());
    } else if root_res > opts.tol {
        failures.push(format!("Δh(root) residual {root_res:.3e}"));
    }
    if harm > opts.tol {
        failures.push(format!("harmonicity residual {harm:.3e}"));
    }
    if edge_slack < -opts.lipschitz_tol {
        failures.push(format!("edge gradient exceeds resistance by {:.3e}", -edge_slack));
    }

    let (lipschitz_slack, worst_pair, pairs_tested) = match lipschitz_pairs(net, h, region, opts) {
        Ok(x) => x,
        Err(e) => {
            failures.push(format!("resistance computation failed: {e}"));
            (None, None, 0)
        }
    };
    if let Some(s) = lipschitz_slack {
        if s < -opts.lipschitz_tol {
            failures.push(format!("|h(x)−h(y)| exceeds R_eff by {:.3e}", -s));
        }
    }
    ValidationReport {
        root_value,
        min_value,
        harmonic_residual: harm,
        root_residual: if root_res.is_nan() { f64::INFINITY } else { root_res },
        edge_gradient_slack: edge_slack,
        worst_edge,
        lipschitz_slack,
        worst_pair,
        pairs_tested,
        passed: failures.is_empty(),
        failures,
    }
}

type PairOutcome = (Option<f64>, Option<(String, String)>, usize);

fn lipschitz_pairs(net: &Network, h: &Potential, region: &Region, opts: &ValidationOptions) -> Result<PairOutcome> {
    let mut pairs: Vec<(VertexId, VertexId)> = Vec::new();
    let defined: Vec<VertexId> = region.vertices().iter().copied().filter(|&v| h.get(v).is_some()).collect();
    if opts.all_edges {
        for i in 0..region.len() {
            let v = region.vertex(i);
            for a in region.adj(i) {
                if a.local != OUTSIDE && v < a.id && h.get(v).is_some() && h.get(a.id).is_some() {
                    pairs.push((v, a.id));
                }
            }
        }
    }
    if opts.random_pairs > 0 && defined.len() >= 2 {
        let mut r = rng::path_rng(opts.seed, 0);
        for _ in 0..opts.random_pairs {
            let x = *defined.choose(&mut r).unwrap();
            let mut y = *defined.choose(&mut r).unwrap();
            while y == x {
                y = *defined.choose(&mut r).unwrap();
            }
            pairs.push((x, y));
        }
    }
    if pairs.is_empty() {
        return Ok((None, None, 0));
    }
    let mut cols: Vec<VertexId> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    cols.sort();
    cols.dedup();
    let reach = cols.iter().map(|&v| net.dist(v)).max().unwrap_or(0);
    let radius = match opts.resistance_radius {
        Some(r) => r,
        None if net.is_finite() => usize::MAX / 2,
        None => (4 * reach).max(reach + 20),
    };
    let big = Arc::new(Region::ball(net, radius));
    let oracle = ResistanceOracle::new(&big, &cols, opts.resistance_boundary)?;
    let mut slack = f64::INFINITY;
    let mut worst = None;
    for &(x, y) in &pairs {
        let r = oracle.resistance(x, y).ok_or_else(|| Error::RegionTooSmall("pair outside resistance region".into()))?;
        let s = r - (h.at(x)? - h.at(y)?).abs();
        if s < slack {
            slack = s;
            worst = Some((net.label(x), net.label(y)));
        }
    }
    Ok((Some(slack), worst, pairs.len()))
}

/// `h̃ = h + g_õ(·, ∘) − h(õ)`, the potential for the new root `õ`, on
/// `B(õ, radii[0])`. The Green column is stabilized over `radii[1..]`.
pub fn root_transfer(
    net: &Network,
    h: &Potential,
    new_root: VertexId,
    radii: &[usize],
    tol: f64,
    boundary: Boundary,
) -> Result<Potential> {
    if new_root == h.root() {
        return Ok(h.clone());
    }
    let h_new = h.at(new_root)?;
    let g = green::dipole(net, new_root, h.root(), radii, tol, boundary)?;
    let values = g
        .region
        .vertices()
        .iter()
        .zip(&g.values)
        .map(|(&v, gv)| Ok(h.at(v)? + gv - h_new))
        .collect::<Result<Vec<f64>>>()?;
    let mut p = Potential::from_values(new_root, g.region.clone(), values)?;
    p.certificate.increments = g.certificate.increments.clone();
    p.certificate.tol = Some(tol);
    p.certificate.converged = g.certificate.converged;
    Ok(p)
}

/// One level of the explicit tree construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeLevel {
    pub n: usize,
    pub level: f64,
    pub radius: usize,
    /// `g_R(∘,∘)`, the value of `ψ_n` on the sphere of radius `R`.
    pub green_at_root: f64,
    /// Weight of `ψ_n` in the sum.
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct TreeConstruction {
    pub potential: Potential,
    pub levels: Vec<TreeLevel>,
    /// `min_{∂B(∘,ρ)} h` for `ρ = 0..=radius`.
    pub profile: Vec<f64>,
    /// `min_{∂B(∘,R_n)} ψ_n` for each level.
    pub psi_minima: Vec<f64>,
}

/// `M_n = n 2^n`.
pub fn doubling_schedule(levels: usize) -> Vec<f64> {
    (1..=levels).map(|n| n as f64 * 2f64.powi(n as i32)).collect()
}

/// Weights `2^{-n}` for `n < N` and `2^{-(N-1)}` for the last level, so they sum to one.
pub fn level_weights(levels: usize) -> Vec<f64> {
    (1..=levels)
        .map(|n| if n < levels { 0.5f64.powi(n as i32) } else { 0.5f64.powi(levels as i32 - 1) })
        .collect()
}

struct TreeNav<'a> {
    net: &'a Network,
}

impl TreeNav<'_> {
    fn parent(&self, v: VertexId) -> Option<VertexId> {
        let d = self.net.dist(v);
        (d > 0).then(|| self.net.neighbors(v).into_iter().find(|&(u, _)| self.net.dist(u) + 1 == d).unwrap().0)
    }

    fn first_child(&self, v: VertexId) -> (VertexId, f64) {
        let d = self.net.dist(v);
        self.net.neighbors(v).into_iter().find(|&(u, _)| self.net.dist(u) == d + 1).unwrap()
    }
}

/// `ψ` for one level: killed Green potential inside the ball, extended along
/// first-child rays with constant current and by projection elsewhere.
struct TreePsi {
    radius: usize,
    ball: Arc<Region>,
    inner: Vec<f64>,
}

impl TreePsi {
    fn build(net: &Network, radius: usize) -> Result<TreePsi> {
        let ball = Arc::new(Region::ball(net, radius));
        let mut prob = DirichletProblem::new(&ball, Boundary::Free).source(net.root(), -1.0);
        for v in ball.sphere(radius) {
            prob = prob.absorb(v, 0.0);
        }
        let g = green::dirichlet_solve(net, &prob)?;
        let g0 = g[0];
        let inner = g.iter().map(|x| g0 - x).collect();
        Ok(TreePsi { radius, ball, inner })
    }

    fn green_at_root(&self) -> f64 {
        self.inner[self.ball.local(self.ball.sphere(self.radius)[0]).unwrap()]
    }

    fn eval(&self, nav: &TreeNav<'_>, w: VertexId) -> f64 {
        if let Some(i) = self.ball.local(w) {
            return self.inner[i];
        }
        let mut chain = vec![w];
        let mut x = w;
        while nav.net.dist(x) > self.radius {
            x = nav.parent(x).unwrap();
            chain.push(x);
        }
        chain.reverse();
        let v = chain[0];
        let pv = nav.parent(v).unwrap();
        let psi_v = self.inner[self.ball.local(v).unwrap()];
        let psi_p = self.inner[self.ball.local(pv).unwrap()];
        let current = (psi_v - psi_p) * nav.net.conductance(pv, v);
        let mut value = psi_v;
        for pair in chain.windows(2) {
            let (child, c) = nav.first_child(pair[0]);
            if child != pair[1] {
                break;
            }
            value += current / c;
        }
        value
    }
}

/// Explicit potential tending to infinity on a tree: `Σ w_n ψ_n` with
/// `ψ_n ≥ M_n` outside `B(∘, R_n)`, tabulated on `B(∘, radius)`.
pub fn tree_potential_to_infinity(
    net: &Network,
    schedule: &[f64],
    radius_cap: usize,
    radius: usize,
) -> Result<TreeConstruction> {
    if !net.is_tree() {
        return Err(Error::Invalid("the explicit construction needs a tree generator".into()));
    }
    if schedule.is_empty() {
        return Err(Error::Invalid("empty level schedule".into()));
    }
    let nav = TreeNav { net };
    let weights = level_weights(schedule.len());
    let mut psis = Vec::new();
    let mut levels = Vec::new();
    let mut r = 1usize;
    for (k, &m) in schedule.iter().enumerate() {
        let psi = loop {
            if r > radius_cap {
                return Err(Error::NotConverged(format!(
                    "g_R(∘,∘) < {m} for every R ≤ {radius_cap} (level {})",
                    k + 1
                )));
            }
            let psi = TreePsi::build(net, r)?;
            if psi.green_at_root() >= m {
                break psi;
            }
            r += 1;
        };
        levels.push(TreeLevel {
            n: k + 1,
            level: m,
            radius: r,
            green_at_root: psi.green_at_root(),
            weight: weights[k],
        });
        psis.push(psi);
    }
    let region = Arc::new(Region::ball(net, radius));
    let values: Vec<f64> = region
        .vertices()
        .iter()
        .map(|&v| psis.iter().zip(&weights).map(|(p, w)| w * p.eval(&nav, v)).sum())
        .collect();
    let mut profile = vec![f64::INFINITY; radius + 1];
    for (i, &x) in values.iter().enumerate() {
        let d = region.dist(i);
        profile[d] = profile[d].min(x);
    }
    let psi_minima = psis
        .iter()
        .map(|p| {
            let sphere = Region::ball(net, p.radius).sphere(p.radius);
            sphere.iter().map(|&v| p.eval(&nav, v)).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let potential = Potential::from_values(net.root(), region, values)?;
    Ok(TreeConstruction { potential, levels, profile, psi_minima })
}

/// `P_{v_1}(γ | exit D before hitting ∘)` for a walk path `γ = (v_1, …, v_k)` that
/// stays in `D ∖ {∘}`.
pub fn exit_conditioned_path_probability(net: &Network, d: &Region, path: &[VertexId]) -> Result<f64> {
    let root = net.root();
    let prob = DirichletProblem::new(d, Boundary::Absorbing).absorb(root, 1.0);
    let hit = green::dirichlet_solve(net, &prob)?;
    let escape = |v: VertexId| -> Result<f64> {
        d.local(v).map(|i| 1.0 - hit[i]).ok_or_else(|| Error::Invalid("path leaves D".into()))
    };
    let mut p = 1.0;
    for w in path.windows(2) {
        p *= net.conductance(w[0], w[1]) / net.csum(w[0]);
    }
    Ok(p * escape(*path.last().unwrap())? / escape(path[0])?)
}

/// `P^h(γ)` for the h-process started at `γ_1`.
pub fn h_path_probability(net: &Network, h: &Potential, path: &[VertexId]) -> Result<f64> {
    let mut p = 1.0;
    for w in path.windows(2) {
        p *= net.conductance(w[0], w[1]) / net.csum(w[0]);
    }
    Ok(p * h.at(*path.last().unwrap())? / h.at(path[0])?)
}
