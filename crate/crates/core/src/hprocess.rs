//! The h-transformed walk: exact kernels, seeded simulation, and the statistics
//! built on simulated paths (Green identity, last exits, reversal, Martin
//! kernel tracking, intersections, mixtures).

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{self, Boundary, ColumnRhs, DirichletProblem, GreenTable, Operator};
use crate::hmeasure::{MeasureOnSet, Provenance};
use crate::network::{Network, Region, VertexId};
use crate::potential::Potential;
use crate::rng::{self, PathRng};
use crate::stats::{self, FitTest};
pub use crate::stats::Moments;

/// Largest tolerated `|Σμ_h − 1|`.
pub const MU_TOL: f64 = 1e-6;

/// `μ_h(v) = c_{∘v} h(v)` over the neighbors of the root.
pub fn mu_h(net: &Network, h: &Potential) -> Result<Vec<(VertexId, f64)>> {
    let root = h.root();
    let mut out = Vec::new();
    for (v, c) in net.neighbors(root) {
        out.push((v, c * h.at(v)?));
    }
    let total: f64 = out.iter().map(|x| x.1).sum();
    if (total - 1.0).abs() > MU_TOL || out.iter().any(|x| x.1 < 0.0) {
        return Err(Error::InvalidPotential(format!("μ_h has total mass {total}")));
    }
    Ok(out)
}

/// `p^h(x, y) = c_{xy} h(y) / (c_x h(x))` over the neighbors of `x`.
pub fn step_kernel(net: &Network, h: &Potential, x: VertexId) -> Result<Vec<(VertexId, f64)>> {
    let hx = h.at(x)?;
    if hx <= 0.0 {
        return Err(Error::Invalid(format!("{} is not in the support of h", net.label(x))));
    }
    let cx = net.csum(x);
    net.neighbors(x)
        .into_iter()
        .map(|(y, c)| Ok((y, c * h.at(y)? / (cx * hx))))
        .collect()
}

/// Cumulative h-transform weights for every interior vertex of the potential's region.
#[derive(Clone, Debug)]
///
/// Where `h` is strictly superharmonic the missing mass `1 − Σ_y p^h(x, y)` is a
/// killing probability.
pub struct KernelTable {
    region: Arc<Region>,
    h: Vec<f64>,
    start: Vec<u32>,
    cum: Vec<f64>,
    /// Total used to scale the uniform draw: `c_x h(x)` where killing is possible, else the row sum.
    scale: Vec<f64>,
}

/// Relative deficit below which a row is treated as exactly harmonic.
const KILL_TOL: f64 = 1e-9;

impl KernelTable {
    pub fn new(h: &Potential) -> KernelTable {
        let region = h.region().clone();
        let values = h.values().to_vec();
        let mut start = Vec::with_capacity(region.len() + 1);
        let mut cum = Vec::new();
        let mut scale = Vec::with_capacity(region.len());
        start.push(0u32);
        for i in 0..region.len() {
            let mut s = 0.0;
            if !region.is_boundary(i) {
                for a in region.adj(i) {
                    s += a.c * values[a.local as usize].max(0.0);
                    cum.push(s);
                }
            }
            let norm = region.csum(i) * values[i];
            scale.push(if s < norm * (1.0 - KILL_TOL) { norm } else { s });
            start.push(cum.len() as u32);
        }
        KernelTable { region, h: values, start, cum, scale }
    }

    pub fn region(&self) -> &Arc<Region> {
        &self.region
    }

    #[inline]
    fn h_local(&self, i: usize) -> f64 {
        self.h[i]
    }

    #[inline]
    fn can_step(&self, i: usize) -> bool {
        self.start[i + 1] > self.start[i] && self.h[i] > 0.0
    }

    /// Draw a step from local vertex `i`: local index of the target and
    /// `ln p^h`, or `None` if the walk is killed.
    #[inline]
    fn step(&self, i: usize, u: f64) -> Option<(usize, f64)> {
        let cum = &self.cum[self.start[i] as usize..self.start[i + 1] as usize];
        let target = u * self.scale[i];
        let k = match cum.iter().position(|&c| target < c) {
            Some(k) => k,
            None if self.scale[i] > cum[cum.len() - 1] => return None,
            None => rng::sample_cumulative(cum, u),
        };
        let a = self.region.adj(i)[k];
        let j = a.local as usize;
        let p = a.c * self.h[j] / (self.region.csum(i) * self.h[i]);
        Some((j, p.ln()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    LevelReached,
    RegionEdge,
    Budget,
    /// The walk left the landing set for good, or was killed where `h` is strictly superharmonic.
    Escaped,
}

/// One simulated path.
///
/// Consecutive vertices are adjacent except across the transitions listed in
/// `jumps`, where an excursion outside the landing set was collapsed into a
/// single return transition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HPath {
    pub seed: u64,
    pub index: u64,
    pub vertices: Vec<VertexId>,
    /// `ln μ_h(Y_0)`.
    pub start_log_prob: f64,
    /// Log-probability of each transition.
    pub log_probs: Vec<f64>,
    /// Indices `t` such that the transition `t → t+1` is a collapsed excursion.
    pub jumps: Vec<u32>,
    pub stop: StopReason,
    /// Certified bound on the probability that the untruncated path differs on the observed region.
    pub bias: f64,
}

impl HPath {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn log_probability(&self) -> f64 {
        self.start_log_prob + self.log_probs.iter().sum::<f64>()
    }

    pub fn last(&self) -> VertexId {
        *self.vertices.last().unwrap()
    }

    /// Last index whose vertex lies in `d`.
    pub fn last_visit(&self, d: &Region) -> Option<usize> {
        self.vertices.iter().rposition(|&v| d.contains(v))
    }

    pub fn is_jump(&self, t: usize) -> bool {
        self.jumps.binary_search(&(t as u32)).is_ok()
    }
}

/// Level rule certifying the last exit from an observation region.
///
/// Once `h(Y_n) ≥ m_stop = Σ_{w ∈ ∂D} h(w) / eps`, the probability of ever
/// returning to `D` is at most `eps`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StopRule {
    pub m_stop: f64,
    pub eps: f64,
    pub budget: usize,
    boundary_sum: f64,
}

impl StopRule {
    pub fn for_region(h: &Potential, observed: &Region, eps: f64, budget: usize) -> Result<StopRule> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Invalid("eps must lie in (0, 1)".into()));
        }
        let boundary_sum: f64 =
            observed.boundary_vertices().iter().map(|&w| h.at(w)).sum::<Result<f64>>()?;
        let max_h = observed.vertices().iter().map(|&v| h.at(v)).collect::<Result<Vec<_>>>()?;
        let max_h = max_h.into_iter().fold(0.0, f64::max);
        let m_stop = boundary_sum / eps;
        if m_stop <= max_h {
            return Err(Error::Invalid("stop level does not exceed h on the observed region".into()));
        }
        Ok(StopRule { m_stop, eps, budget, boundary_sum })
    }

    /// `Σ_{∂D} h / h(y)`: bound on the return probability from `y`.
    pub fn return_bound(&self, hy: f64) -> f64 {
        (self.boundary_sum / hy).min(1.0)
    }
}

/// The exact law of the next visit to a landing set `Λ` for the h-process
/// started outside it.
///
/// From `u ∉ Λ` the h-process returns to `Λ` at `w` with probability
/// `ω_u^Λ(w) h(w) / h(u)` and never returns with the remaining probability.
/// Harmonic measures are solved on a ball of radius `radius` with the given
/// boundary treatment; `eps` is the largest total variation between the laws
/// for radius `radius` and `radius / 2`. On lattices of dimension two and more
/// [`Boundary::Midpoint`] converges much faster than [`Boundary::Free`]; on
/// the line the free ball is exact.
#[derive(Clone, Debug)]
pub struct ReturnKernel {
    landing: Arc<Region>,
    entries: HashMap<VertexId, ReturnEntry>,
    pub radius: usize,
    pub boundary: Boundary,
    pub eps: f64,
}

#[derive(Clone, Debug)]
struct ReturnEntry {
    targets: Vec<VertexId>,
    cum: Vec<f64>,
    probs: Vec<f64>,
}

impl ReturnEntry {
    fn p_return(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }
}

impl ReturnKernel {
    pub fn build(
        net: &Network,
        h: &Potential,
        landing: Arc<Region>,
        radius: usize,
        boundary: Boundary,
    ) -> Result<ReturnKernel> {
        let root = h.root();
        if !landing.contains(root) || net.neighbors(root).iter().any(|(v, _)| !landing.contains(*v)) {
            return Err(Error::Invalid("the landing set must contain the root and its neighbors".into()));
        }
        let reach = landing.vertices().iter().map(|&v| net.dist(v)).max().unwrap_or(0);
        if radius / 2 <= reach + 1 {
            return Err(Error::RegionTooSmall("return kernel radius too small for the landing set".into()));
        }
        let fine = Self::laws(net, h, &landing, radius, boundary)?;
        let coarse = Self::laws(net, h, &landing, radius / 2, boundary)?;
        let mut eps = 0.0f64;
        for (u, e) in &fine {
            let c = &coarse[u];
            let mut tv = (e.p_return() - c.p_return()).abs();
            for (a, b) in e.probs.iter().zip(&c.probs) {
                tv += (a - b).abs();
            }
            eps = eps.max(0.5 * tv);
        }
        Ok(ReturnKernel { landing, entries: fine, radius, boundary, eps })
    }

    fn laws(
        net: &Network,
        h: &Potential,
        landing: &Region,
        radius: usize,
        boundary: Boundary,
    ) -> Result<HashMap<VertexId, ReturnEntry>> {
        let _ = net;
        let ball = Region::ball(net, radius);
        let fixed: Vec<usize> = landing.vertices().iter().map(|&v| ball.local(v).unwrap()).collect();
        let targets = landing.boundary_vertices();
        let outer = landing.outer_boundary();
        let rows: Vec<usize> = outer
            .iter()
            .map(|&u| ball.local(u).ok_or_else(|| Error::RegionTooSmall("ball misses the landing set's boundary".into())))
            .collect::<Result<_>>()?;
        let rhs: Vec<ColumnRhs> = targets
            .iter()
            .map(|&w| ColumnRhs { fixed: vec![(ball.local(w).unwrap(), 1.0)], source: Vec::new() })
            .collect();
        let solve = |b: Boundary| -> Result<Vec<Vec<f64>>> {
            Ok(Operator::new(&ball, &fixed, b)?.solve(&ball, &rhs, Some(&rows)))
        };
        let cols: Vec<Vec<f64>> = match boundary {
            Boundary::Midpoint => {
                let free = solve(Boundary::Free)?;
                let wired = solve(Boundary::Wired)?;
                free.iter()
                    .zip(&wired)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                    .collect()
            }
            b => solve(b)?,
        };
        let hw: Vec<f64> = targets.iter().map(|&w| h.at(w)).collect::<Result<_>>()?;
        let mut out = HashMap::new();
        for (r, &u) in outer.iter().enumerate() {
            let hu = h.at(u)?;
            if hu <= 0.0 {
                continue;
            }
            let probs: Vec<f64> = cols.iter().zip(&hw).map(|(c, &hw)| (c[r] * hw / hu).max(0.0)).collect();
            let total: f64 = probs.iter().sum();
            let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
            let probs: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            let mut s = 0.0;
            let cum = probs.iter().map(|p| {
                s += p;
                s
            });
            out.insert(u, ReturnEntry { targets: targets.clone(), cum: cum.collect(), probs });
        }
        Ok(out)
    }

    pub fn landing(&self) -> &Arc<Region> {
        &self.landing
    }

    /// `P^h_u(return to Λ)`.
    pub fn return_probability(&self, u: VertexId) -> Option<f64> {
        self.entries.get(&u).map(ReturnEntry::p_return)
    }

    /// `P^h_u(first return to Λ at w)`.
    pub fn return_law(&self, u: VertexId) -> Option<Vec<(VertexId, f64)>> {
        self.entries.get(&u).map(|e| e.targets.iter().copied().zip(e.probs.iter().copied()).collect())
    }
}

#[derive(Clone, Debug)]
pub enum Mode {
    /// Run until the path leaves the region.
    Exit(Arc<Region>),
    /// Run until `h(Y_n) ≥ level`.
    Level(f64),
    /// Run until `h(Y_n) ≥ m_stop`, with the return bound as path bias.
    Stop(StopRule),
    /// Simulate the visits to a landing set exactly, collapsing excursions.
    Return(Arc<ReturnKernel>),
}

/// Seeded h-process simulator.
pub struct HSim<'a> {
    net: &'a Network,
    h: &'a Potential,
    table: KernelTable,
    start: Vec<(VertexId, f64)>,
    start_cum: Vec<f64>,
    mode: Mode,
    budget: usize,
}

impl<'a> HSim<'a> {
    pub fn new(net: &'a Network, h: &'a Potential, mode: Mode) -> Result<HSim<'a>> {
        let start = mu_h(net, h)?;
        let mut s = 0.0;
        let start_cum = start
            .iter()
            .map(|x| {
                s += x.1;
                s
            })
            .collect();
        let budget = match &mode {
            Mode::Stop(rule) => rule.budget,
            _ => 10_000_000,
        };
        if let Mode::Return(k) = &mode {
            for &v in k.landing.vertices().iter().chain(k.landing.outer_boundary().iter()) {
                if !h.region().local(v).is_some_and(|i| !h.region().is_boundary(i) || !k.landing.contains(v)) {
                    return Err(Error::RegionTooSmall("the potential does not cover the landing set".into()));
                }
            }
        }
        Ok(HSim { net, h, table: KernelTable::new(h), start, start_cum, mode, budget })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn potential(&self) -> &Potential {
        self.h
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    /// Path `index` under master seed `master`.
    pub fn simulate(&self, master: u64, index: u64) -> HPath {
        let mut rng = rng::path_rng(master, index);
        self.run(&mut rng, master, index)
    }

    fn run(&self, rng: &mut PathRng, master: u64, index: u64) -> HPath {
        let region = &self.table.region;
        let k = rng::sample_cumulative(&self.start_cum, rng::uniform(rng));
        let (y0, w0) = self.start[k];
        let mut cur = region.local(y0).unwrap();
        let mut vertices = vec![y0];
        let mut log_probs = Vec::new();
        let mut jumps = Vec::new();
        let mut excursions = 0usize;
        let stop = loop {
            let v = region.vertex(cur);
            let hv = self.table.h_local(cur);
            match &self.mode {
                Mode::Exit(d) if !d.contains(v) => break StopReason::RegionEdge,
                Mode::Level(m) if hv >= *m => break StopReason::LevelReached,
                Mode::Stop(rule) if hv >= rule.m_stop => break StopReason::LevelReached,
                Mode::Return(ker) if !ker.landing.contains(v) => {
                    excursions += 1;
                    let e = &ker.entries[&v];
                    let u = rng::uniform(rng);
                    match e.cum.iter().position(|&c| u < c) {
                        Some(t) => {
                            if log_probs.len() >= self.budget {
                                break StopReason::Budget;
                            }
                            let w = e.targets[t];
                            jumps.push(log_probs.len() as u32);
                            log_probs.push(e.probs[t].ln());
                            vertices.push(w);
                            cur = region.local(w).unwrap();
                            continue;
                        }
                        None => break StopReason::Escaped,
                    }
                }
                _ => {}
            }
            if log_probs.len() >= self.budget {
                break StopReason::Budget;
            }
            if !self.table.can_step(cur) {
                break StopReason::RegionEdge;
            }
            let Some((next, lp)) = self.table.step(cur, rng::uniform(rng)) else {
                break StopReason::Escaped;
            };
            cur = next;
            vertices.push(region.vertex(cur));
            log_probs.push(lp);
        };
        let bias = match (&self.mode, stop) {
            (Mode::Return(ker), StopReason::Escaped) => (ker.eps * excursions as f64).min(1.0),
            (_, StopReason::Escaped) => 0.0,
            (Mode::Stop(rule), StopReason::LevelReached) => rule.return_bound(self.table.h_local(cur)),
            _ => 1.0,
        };
        HPath { seed: master, index, vertices, start_log_prob: w0.ln(), log_probs, jumps, stop, bias }
    }

    /// Paths `0..n`, in index order.
    pub fn simulate_many(&self, master: u64, n: u64) -> Vec<HPath> {
        (0..n).into_par_iter().map(|i| self.simulate(master, i)).collect()
    }

    /// Fold paths `0..n` into accumulators without storing them. Chunks are
    /// merged in index order, so the result does not depend on scheduling.
    pub fn simulate_fold<A, I, F, M>(&self, master: u64, n: u64, init: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, &HPath) + Sync,
        M: Fn(&mut A, A),
    {
        const CHUNK: u64 = 2048;
        let chunks = n.div_ceil(CHUNK);
        let parts: Vec<A> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    fold(&mut acc, &self.simulate(master, i));
                }
                acc
            })
            .collect();
        let mut total = init();
        for p in parts {
            merge(&mut total, p);
        }
        total
    }
}

/// One path under a [`StopRule`] certified for `observed`.
pub fn simulate(net: &Network, h: &Potential, rule: &StopRule, seed: u64) -> Result<HPath> {
    Ok(HSim::new(net, h, Mode::Stop(rule.clone()))?.simulate(seed, 0))
}

/// The `k`-neighborhood of a vertex set, as a region measured from the root.
pub fn neighborhood(net: &Network, base: &[VertexId], k: usize) -> Result<Region> {
    let mut set: std::collections::BTreeSet<VertexId> = base.iter().copied().collect();
    let mut frontier: Vec<VertexId> = set.iter().copied().collect();
    for _ in 0..k {
        let mut next = Vec::new();
        for v in frontier {
            for (u, _) in net.neighbors(v) {
                if set.insert(u) {
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    Region::from_vertices(net, set)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProbeCheck {
    pub vertex: String,
    pub expected: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub rel_err: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GreenCheckReport {
    pub seed: Option<u64>,
    pub n_paths: u64,
    pub probes: Vec<ProbeCheck>,
    pub flagged: usize,
}

/// Visit counts per path at a fixed set of probes.
#[derive(Clone, Debug)]
pub struct VisitCounter {
    probes: Vec<VertexId>,
    moments: Vec<Moments>,
    seed: Option<u64>,
}

impl VisitCounter {
    pub fn new(probes: &[VertexId]) -> Self {
        VisitCounter { probes: probes.to_vec(), moments: vec![Moments::default(); probes.len()], seed: None }
    }

    pub fn push(&mut self, path: &HPath) {
        self.seed.get_or_insert(path.seed);
        let mut counts = vec![0u32; self.probes.len()];
        for v in &path.vertices {
            if let Some(k) = self.probes.iter().position(|p| p == v) {
                counts[k] += 1;
            }
        }
        for (m, c) in self.moments.iter_mut().zip(counts) {
            m.push(c as f64);
        }
    }

    pub fn merge(&mut self, other: VisitCounter) {
        if self.seed.is_none() {
            self.seed = other.seed;
        }
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
    }

    /// Compare mean visits against `h(v) c_v`.
    pub fn report(&self, net: &Network, h: &Potential) -> Result<GreenCheckReport> {
        let mut probes = Vec::new();
        for (&v, m) in self.probes.iter().zip(&self.moments) {
            let expected = h.at(v)? * net.csum(v);
            let stderr = m.stderr();
            let z = if stderr > 0.0 { (m.mean - expected) / stderr } else if (m.mean - expected).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
            let rel_err = if expected > 0.0 { (m.mean - expected).abs() / expected } else { m.mean.abs() };
            probes.push(ProbeCheck { vertex: net.label(v), expected, mean: m.mean, stderr, z, rel_err, flagged: z.abs() > 3.0 });
        }
        let flagged = probes.iter().filter(|p| p.flagged).count();
        let n_paths = self.moments.first().map_or(0, |m| m.n);
        Ok(GreenCheckReport { seed: self.seed, n_paths, probes, flagged })
    }
}

/// Mean visit counts at the probes against `G^h(μ_h, v) = h(v) c_v`.
///
/// Probes must lie in the region where the paths record every visit.
pub fn empirical_green_check(net: &Network, h: &Potential, paths: &[HPath], probes: &[VertexId]) -> Result<GreenCheckReport> {
    let mut c = VisitCounter::new(probes);
    for p in paths {
        c.push(p);
    }
    c.report(net, h)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LastExitReport {
    pub measure: MeasureOnSet,
    pub counts: Vec<u64>,
    pub n_used: u64,
    /// Paths whose bias exceeded the budget, or that never visited `D` when `D` misses the root.
    pub excluded: u64,
    /// Largest bias among used paths.
    pub max_bias: f64,
    /// Sum of the biases of used paths: a bound on the expected number of misrecorded paths.
    pub total_bias: f64,
    pub seed: Option<u64>,
}

/// Empirical law of `Y_{L_D}`, with the process started at `Y_0 = ∘`: when
/// `D` contains the root, a path that never visits `D` after time 0 counts
/// as a last exit at the root.
#[derive(Clone, Debug)]
pub struct LastExitCounter {
    d: Arc<Region>,
    support: Vec<VertexId>,
    bias_budget: f64,
    counts: Vec<u64>,
    excluded: u64,
    max_bias: f64,
    total_bias: f64,
    seed: Option<u64>,
    root: Option<VertexId>,
}

impl LastExitCounter {
    pub fn new(d: Arc<Region>, root: VertexId, bias_budget: f64) -> Self {
        let root = d.contains(root).then_some(root);
        let mut support = d.vertices().to_vec();
        support.sort();
        let n = support.len();
        LastExitCounter { d, support, bias_budget, counts: vec![0; n], excluded: 0, max_bias: 0.0, total_bias: 0.0, seed: None, root }
    }

    pub fn push(&mut self, path: &HPath) {
        self.seed.get_or_insert(path.seed);
        let root = self.root;
        let last = path.last_visit(&self.d).map(|t| path.vertices[t]).or(root);
        match last {
            Some(v) if path.bias <= self.bias_budget => {
                let k = self.support.binary_search(&v).unwrap();
                self.counts[k] += 1;
                self.max_bias = self.max_bias.max(path.bias);
                self.total_bias += path.bias;
            }
            _ => self.excluded += 1,
        }
    }

    pub fn merge(&mut self, o: LastExitCounter) {
        if self.seed.is_none() {
            self.seed = o.seed;
        }
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
        self.excluded += o.excluded;
        self.max_bias = self.max_bias.max(o.max_bias);
        self.total_bias += o.total_bias;
    }

    pub fn report(&self) -> LastExitReport {
        let n: u64 = self.counts.iter().sum();
        let weights = self.counts.iter().map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 }).collect();
        LastExitReport {
            measure: MeasureOnSet {
                support: self.support.clone(),
                weights,
                provenance: Provenance::LastExitMc,
                escape_mass: 0.0,
                condition: None,
            },
            counts: self.counts.clone(),
            n_used: n,
            excluded: self.excluded,
            max_bias: self.max_bias,
            total_bias: self.total_bias,
            seed: self.seed,
        }
    }
}

pub fn last_exit_distribution(paths: &[HPath], d: &Arc<Region>, root: VertexId, bias_budget: f64) -> LastExitReport {
    let mut c = LastExitCounter::new(d.clone(), root, bias_budget);
    for p in paths {
        c.push(p);
    }
    c.report()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReversalReport {
    pub fit: FitTest,
    pub n_used: u64,
    pub excluded: u64,
    pub groups: usize,
    /// Observed segments that the walk cannot produce.
    pub impossible: u64,
    pub seed: Option<u64>,
}

/// Reversed exit segments `(Y_L, Y_{L−1}, …)`, `k` steps long or ending at the root.
#[derive(Clone, Debug)]
pub struct ReversalCounter {
    d: Arc<Region>,
    root: VertexId,
    k: usize,
    groups: BTreeMap<VertexId, BTreeMap<Vec<VertexId>, u64>>,
    excluded: u64,
    seed: Option<u64>,
}

impl ReversalCounter {
    pub fn new(d: Arc<Region>, root: VertexId, k: usize) -> Self {
        ReversalCounter { d, root, k, groups: BTreeMap::new(), excluded: 0, seed: None }
    }

    pub fn push(&mut self, path: &HPath) {
        self.seed.get_or_insert(path.seed);
        let Some(l) = path.last_visit(&self.d) else {
            self.excluded += 1;
            return;
        };
        let mut seg = Vec::with_capacity(self.k + 1);
        let mut t = l;
        seg.push(path.vertices[t]);
        while seg.len() <= self.k {
            if t == 0 {
                seg.push(self.root);
                break;
            }
            if path.is_jump(t - 1) {
                self.excluded += 1;
                return;
            }
            t -= 1;
            seg.push(path.vertices[t]);
        }
        *self.groups.entry(seg[0]).or_default().entry(seg).or_default() += 1;
    }

    pub fn merge(&mut self, o: ReversalCounter) {
        if self.seed.is_none() {
            self.seed = o.seed;
        }
        self.excluded += o.excluded;
        for (z, g) in o.groups {
            let mine = self.groups.entry(z).or_default();
            for (s, c) in g {
                *mine.entry(s).or_default() += c;
            }
        }
    }

    /// G-test of the segment frequencies against the network walk started at
    /// each `Y_L` and stopped at the root.
    pub fn report(&self, net: &Network) -> ReversalReport {
        let mut tests = Vec::new();
        let mut impossible = 0;
        let mut n_used = 0;
        for (&z, observed) in &self.groups {
            let exact = walk_segments(net, z, self.root, self.k);
            let mut counts = Vec::with_capacity(exact.len());
            let mut probs = Vec::with_capacity(exact.len());
            for (seg, p) in &exact {
                counts.push(observed.get(seg).copied().unwrap_or(0));
                probs.push(*p);
            }
            let total: u64 = observed.values().sum();
            n_used += total;
            impossible += total - counts.iter().sum::<u64>();
            tests.push((counts, probs));
        }
        let mut fit = stats::g_test_grouped(&tests);
        if impossible > 0 {
            fit.p_value = 0.0;
        }
        ReversalReport { fit, n_used, excluded: self.excluded, groups: tests.len(), impossible, seed: self.seed }
    }
}

/// Every network-walk path of `k` steps from `z`, stopped early at `root`, with its probability.
pub fn walk_segments(net: &Network, z: VertexId, root: VertexId, k: usize) -> Vec<(Vec<VertexId>, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![z], 1.0)];
    while let Some((seg, p)) = stack.pop() {
        let last = *seg.last().unwrap();
        if seg.len() > k || (seg.len() > 1 && last == root) {
            out.push((seg, p));
            continue;
        }
        let cx = net.csum(last);
        for (y, c) in net.neighbors(last) {
            let mut s = seg.clone();
            s.push(y);
            stack.push((s, p * c / cx));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn reversal_check(net: &Network, paths: &[HPath], d: &Arc<Region>, k: usize) -> ReversalReport {
    let mut c = ReversalCounter::new(d.clone(), net.root(), k);
    for p in paths {
        c.push(p);
    }
    c.report(net)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProbeTrack {
    pub probe: VertexId,
    pub values: Vec<f64>,
    /// Max minus min over the final quarter of the path.
    pub tail_dispersion: f64,
    pub tail_mean: f64,
    pub last: f64,
}

/// `g_∘(x, Y_n)` along a path for each probe `x`.
pub fn martin_track(path: &HPath, probes: &[VertexId], gtab: &GreenTable) -> Result<Vec<ProbeTrack>> {
    let n = path.vertices.len();
    let tail = (3 * n) / 4;
    probes
        .iter()
        .map(|&x| {
            let values: Vec<f64> = path
                .vertices
                .iter()
                .map(|&y| gtab.get(x, y).ok_or_else(|| Error::RegionTooSmall("path leaves the Green table".into())))
                .collect::<Result<_>>()?;
            let t = &values[tail.min(n - 1)..];
            let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let tail_mean = t.iter().sum::<f64>() / t.len() as f64;
            Ok(ProbeTrack { probe: x, last: *values.last().unwrap(), values, tail_dispersion: hi - lo, tail_mean })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Intersections {
    pub count: u64,
    pub pairs: Vec<(usize, usize)>,
}

/// All `(m, n)` with `Y_m = Z_n`.
pub fn intersection_count(a: &HPath, b: &HPath) -> Intersections {
    let mut at: HashMap<VertexId, Vec<usize>> = HashMap::new();
    for (n, &v) in b.vertices.iter().enumerate() {
        at.entry(v).or_default().push(n);
    }
    let mut pairs = Vec::new();
    for (m, v) in a.vertices.iter().enumerate() {
        if let Some(ns) = at.get(v) {
            pairs.extend(ns.iter().map(|&n| (m, n)));
        }
    }
    Intersections { count: pairs.len() as u64, pairs }
}

/// `P_∘(h(X_j) ≥ m | τ_v < τ_∘⁺)` computed exactly on a free region.
pub fn conditional_tail(net: &Network, h: &Potential, v: VertexId, m: f64, j: usize, region: &Region) -> Result<f64> {
    let root = h.root();
    if j == 0 || j >= net.dist(v) {
        return Err(Error::Invalid("need 0 < j < d(root, v)".into()));
    }
    let prob = DirichletProblem::new(region, Boundary::Free).absorb(root, 0.0).absorb(v, 1.0);
    let q = green::dirichlet_solve(net, &prob)?;
    let qv = |x: VertexId| region.local(x).map(|i| q[i]).ok_or_else(|| Error::RegionTooSmall("walk leaves the region".into()));
    let mut dist: HashMap<VertexId, f64> = HashMap::new();
    let c0 = net.csum(root);
    let nbrs = net.neighbors(root);
    let z: f64 = nbrs.iter().map(|&(y, c)| Ok(c / c0 * qv(y)?)).sum::<Result<f64>>()?;
    for &(y, c) in &nbrs {
        *dist.entry(y).or_default() += c / c0 * qv(y)? / z;
    }
    for _ in 1..j {
        let mut next: HashMap<VertexId, f64> = HashMap::new();
        for (&x, &p) in &dist {
            let qx = qv(x)?;
            let cx = net.csum(x);
            for (y, c) in net.neighbors(x) {
                let w = c / cx * qv(y)? / qx;
                if w > 0.0 {
                    *next.entry(y).or_default() += p * w;
                }
            }
        }
        dist = next;
    }
    let mut tail = 0.0;
    for (&x, &p) in &dist {
        if h.at(x)? >= m {
            tail += p;
        }
    }
    Ok(tail)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MixtureRow {
    pub vertex: String,
    pub h: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MixtureReport {
    pub seed: u64,
    pub n_paths: u64,
    pub excluded: u64,
    pub return_eps: f64,
    pub rows: Vec<MixtureRow>,
    pub flagged: usize,
}

/// Monte Carlo estimate of `E_{μ_h} g_∘(x, Y_{L_D})` for every `x ∈ D`.
///
/// Paths are simulated exactly on the 2-neighborhood of `D` with a return
/// kernel of radius `radius`; `g_∘` comes from the ball of the same radius.
pub fn mixture_check(
    net: &Network,
    h: &Potential,
    d: &Arc<Region>,
    n_paths: u64,
    seed: u64,
    radius: usize,
    boundary: Boundary,
) -> Result<MixtureReport> {
    let root = h.root();
    if net.neighbors(root).iter().any(|&(v, _)| h.at(v).map(|x| x > 0.0).unwrap_or(true) && !d.contains(v)) {
        return Err(Error::Invalid("D must contain the support of μ_h".into()));
    }
    let landing = Arc::new(neighborhood(net, d.vertices(), 2)?);
    let kernel = Arc::new(ReturnKernel::build(net, h, landing, radius, boundary)?);
    let sim = HSim::new(net, h, Mode::Return(kernel.clone()))?;
    let ball = Arc::new(Region::ball(net, radius));
    let cols: Vec<VertexId> = d.vertices().iter().copied().filter(|&v| v != root).collect();
    let gtab = green::green_columns_on(&ball, &[root], &cols, d.clone(), boundary)?;
    let xs = d.vertices().to_vec();
    let (moments, excluded) = sim.simulate_fold(
        seed,
        n_paths,
        || (vec![Moments::default(); xs.len()], 0u64),
        |acc, p| match p.last_visit(d) {
            Some(t) if p.stop == StopReason::Escaped => {
                let y = p.vertices[t];
                for (m, &x) in acc.0.iter_mut().zip(&xs) {
                    m.push(gtab.get(x, y).unwrap_or(0.0));
                }
            }
            _ => acc.1 += 1,
        },
        |a, b| {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                x.merge(y);
            }
            a.1 += b.1;
        },
    );
    let mut rows = Vec::new();
    for (&x, m) in xs.iter().zip(&moments) {
        let hx = h.at(x)?;
        let se = m.stderr();
        let flagged = (m.mean - hx).abs() > 3.0 * se && (m.mean - hx).abs() > 1e-12;
        rows.push(MixtureRow { vertex: net.label(x), h: hx, estimate: m.mean, stderr: se, flagged });
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    Ok(MixtureReport { seed, n_paths, excluded, return_eps: kernel.eps, rows, flagged })
}
