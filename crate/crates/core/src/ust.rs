//! Loop-erased random walk, Wilson's algorithm, the exact spanning-tree law of
//! small networks, and two-branch end statistics.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmeasure::Lu;
use crate::hprocess::HSim;
use crate::network::{Network, Region, VertexId, OUTSIDE};
use crate::rng::{self, PathRng};
use crate::stats::Moments;

/// The network walk on a region with edges leaving the region removed.
#[derive(Clone, Debug)]
pub struct RegionWalk<'a> {
    region: &'a Region,
    start: Vec<u32>,
    to: Vec<u32>,
    cum: Vec<f64>,
}

impl<'a> RegionWalk<'a> {
    pub fn new(region: &'a Region) -> Self {
        let mut start = vec![0u32];
        let mut to = Vec::new();
        let mut cum = Vec::new();
        for i in 0..region.len() {
            let mut s = 0.0;
            for a in region.adj(i) {
                if a.local != OUTSIDE && a.c > 0.0 {
                    s += a.c;
                    to.push(a.local);
                    cum.push(s);
                }
            }
            start.push(to.len() as u32);
        }
        RegionWalk { region, start, to, cum }
    }

    pub fn region(&self) -> &Region {
        self.region
    }

    #[inline]
    fn step(&self, i: usize, rng: &mut impl Rng) -> usize {
        let (a, b) = (self.start[i] as usize, self.start[i + 1] as usize);
        let k = rng::sample_cumulative(&self.cum[a..b], rng::uniform(rng));
        self.to[a + k] as usize
    }

    /// Walk from `start` until `is_target`, returning the chronological loop
    /// erasure; the raw walk is appended to `walk` when given.
    pub fn loop_erased(
        &self,
        start: usize,
        is_target: impl Fn(usize) -> bool,
        rng: &mut impl Rng,
        mut walk: Option<&mut Vec<usize>>,
    ) -> Vec<usize> {
        let mut path = vec![start];
        let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut cur = start;
        if let Some(w) = walk.as_deref_mut() {
            w.push(start);
        }
        while !is_target(cur) {
            cur = self.step(cur, rng);
            if let Some(w) = walk.as_deref_mut() {
                w.push(cur);
            }
            if let Some(&p) = pos.get(&cur) {
                for v in path.drain(p + 1..) {
                    pos.remove(&v);
                }
            } else {
                pos.insert(cur, path.len());
                path.push(cur);
            }
        }
        path
    }
}

/// Loop-erased walk on the region from `start` to the first hit of `targets`.
pub fn lerw(net: &Network, region: &Region, start: VertexId, targets: &[VertexId], seed: u64) -> Result<Vec<VertexId>> {
    let _ = net;
    let local = |v: VertexId| region.local(v).ok_or_else(|| Error::Invalid(format!("{v} is outside the region")));
    let s = local(start)?;
    let mut is_t = vec![false; region.len()];
    for &t in targets {
        is_t[local(t)?] = true;
    }
    if !reachable(region, s, &is_t) {
        return Err(Error::Invalid("targets are not reachable from the start".into()));
    }
    let walk = RegionWalk::new(region);
    let mut rng = rng::path_rng(seed, 0);
    Ok(walk.loop_erased(s, |i| is_t[i], &mut rng, None).into_iter().map(|i| region.vertex(i)).collect())
}

fn reachable(region: &Region, s: usize, target: &[bool]) -> bool {
    let mut seen = vec![false; region.len()];
    let mut q = VecDeque::from([s]);
    seen[s] = true;
    while let Some(i) = q.pop_front() {
        if target[i] {
            return true;
        }
        for a in region.adj(i) {
            if a.local != OUTSIDE && a.c > 0.0 && !seen[a.local as usize] {
                seen[a.local as usize] = true;
                q.push_back(a.local as usize);
            }
        }
    }
    false
}

/// A spanning tree of a region, rooted at the region's center.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpanningTree {
    pub seed: u64,
    pub root: VertexId,
    pub vertices: Vec<VertexId>,
    pub parent: Vec<Option<VertexId>>,
}

impl SpanningTree {
    /// Undirected edges `(min, max)` in sorted order.
    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        let mut e: Vec<(VertexId, VertexId)> = self
            .vertices
            .iter()
            .zip(&self.parent)
            .filter_map(|(&v, p)| p.map(|p| (v.min(p), v.max(p))))
            .collect();
        e.sort();
        e
    }

    /// Check that the parent map is a spanning tree made of network edges.
    pub fn validate(&self, net: &Network) -> Result<()> {
        let index: HashMap<VertexId, usize> = self.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        for (i, (&v, p)) in self.vertices.iter().zip(&self.parent).enumerate() {
            match p {
                None if v == self.root => {}
                None => return Err(Error::Invalid(format!("{} has no parent", net.label(v)))),
                Some(_) if v == self.root => return Err(Error::Invalid("the root has a parent".into())),
                Some(p) => {
                    if !index.contains_key(p) {
                        return Err(Error::Invalid("parent outside the region".into()));
                    }
                    if net.conductance(v, *p) <= 0.0 {
                        return Err(Error::Invalid(format!("{}–{} is not an edge", net.label(v), net.label(*p))));
                    }
                }
            }
            let mut cur = i;
            for _ in 0..=self.vertices.len() {
                match self.parent[cur] {
                    Some(p) => cur = index[&p],
                    None => break,
                }
            }
            if self.vertices[cur] != self.root {
                return Err(Error::Invalid("parent map has a cycle".into()));
            }
        }
        Ok(())
    }
}

/// Region vertices in breadth-first order from the center.
pub fn bfs_order(region: &Region) -> Vec<VertexId> {
    let c = region.local(region.center()).unwrap();
    let mut seen = vec![false; region.len()];
    seen[c] = true;
    let mut order = Vec::with_capacity(region.len());
    let mut q = VecDeque::from([c]);
    while let Some(i) = q.pop_front() {
        order.push(region.vertex(i));
        for a in region.adj(i) {
            if a.local != OUTSIDE && a.c > 0.0 && !seen[a.local as usize] {
                seen[a.local as usize] = true;
                q.push_back(a.local as usize);
            }
        }
    }
    order
}

/// Wilson's algorithm rooted at the region's center, starts in breadth-first order.
pub fn wilson_ust(net: &Network, region: &Region, seed: u64) -> Result<SpanningTree> {
    let order = bfs_order(region);
    if order.len() != region.len() {
        return Err(Error::Invalid("region is not connected".into()));
    }
    wilson_ust_ordered(net, region, &order, seed)
}

/// Wilson's algorithm with an explicit order of start vertices.
pub fn wilson_ust_ordered(net: &Network, region: &Region, order: &[VertexId], seed: u64) -> Result<SpanningTree> {
    let walk = RegionWalk::new(region);
    let mut rng = rng::path_rng(seed, 0);
    wilson_with(net, &walk, order, &mut rng, seed)
}

fn wilson_with(net: &Network, walk: &RegionWalk<'_>, order: &[VertexId], rng: &mut PathRng, seed: u64) -> Result<SpanningTree> {
    let _ = net;
    let region = walk.region;
    let n = region.len();
    let root = region.center();
    let mut in_tree = vec![false; n];
    let mut next = vec![u32::MAX; n];
    in_tree[region.local(root).unwrap()] = true;
    for &v in order {
        let s = region.local(v).ok_or_else(|| Error::Invalid("order has a vertex outside the region".into()))?;
        let mut u = s;
        while !in_tree[u] {
            let w = walk.step(u, rng);
            next[u] = w as u32;
            u = w;
        }
        let mut u = s;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u] as usize;
        }
    }
    if in_tree.iter().any(|&b| !b) {
        return Err(Error::Invalid("order does not cover the region".into()));
    }
    let parent = (0..n)
        .map(|i| (region.vertex(i) != root).then(|| region.vertex(next[i] as usize)))
        .collect();
    Ok(SpanningTree { seed, root, vertices: region.vertices().to_vec(), parent })
}

/// Independent trees for samples `0..n` under `seed`.
pub fn wilson_samples(net: &Network, region: &Region, order: &[VertexId], seed: u64, n: u64) -> Vec<Vec<(VertexId, VertexId)>> {
    let walk = RegionWalk::new(region);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::path_rng(seed, i);
            wilson_with(net, &walk, order, &mut rng, seed).expect("valid order").edges()
        })
        .collect()
}

/// Largest network handled by [`tree_prob_enumerate`].
pub const ENUMERATION_CAP: usize = 12;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TreeDistribution {
    /// Each spanning tree as sorted `(min, max)` edges, with its probability.
    pub trees: Vec<(Vec<(VertexId, VertexId)>, f64)>,
    /// `Σ_T Π_{e ∈ T} c_e` by enumeration.
    pub total_weight: f64,
    /// The same sum from the matrix-tree theorem.
    pub matrix_tree_weight: f64,
}

impl TreeDistribution {
    pub fn probability(&self, edges: &[(VertexId, VertexId)]) -> f64 {
        self.trees.iter().find(|t| t.0 == edges).map_or(0.0, |t| t.1)
    }
}

/// The exact law `P(T) ∝ Π_{e ∈ T} c_e` over spanning trees of a small finite network.
pub fn tree_prob_enumerate(net: &Network) -> Result<TreeDistribution> {
    let n = net.vertex_count().ok_or_else(|| Error::TooLarge("network is infinite".into()))?;
    if n > ENUMERATION_CAP {
        return Err(Error::TooLarge(format!("{n} vertices; enumeration is capped at {ENUMERATION_CAP}")));
    }
    let region = Region::ball(net, n);
    let mut edges = Vec::new();
    for i in 0..n {
        for a in region.adj(i) {
            let j = a.local as usize;
            if a.local != OUTSIDE && i < j && a.c > 0.0 {
                edges.push((i, j, a.c));
            }
        }
    }
    let mut trees = Vec::new();
    let mut chosen = Vec::with_capacity(n.saturating_sub(1));
    let parent: Vec<usize> = (0..n).collect();
    enumerate(&edges, 0, n, parent, &mut chosen, &mut trees);
    let total_weight: f64 = trees.iter().map(|t: &(Vec<usize>, f64)| t.1).sum();
    let matrix_tree_weight = matrix_tree(&region, n);
    let trees = trees
        .into_iter()
        .map(|(es, w)| {
            let mut t: Vec<(VertexId, VertexId)> =
                es.iter().map(|&k| (region.vertex(edges[k].0), region.vertex(edges[k].1))).collect();
            t.sort();
            (t, w / total_weight)
        })
        .collect();
    Ok(TreeDistribution { trees, total_weight, matrix_tree_weight })
}

fn find(p: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while p[r] != r {
        r = p[r];
    }
    p[x] = r;
    r
}

fn enumerate(
    edges: &[(usize, usize, f64)],
    k: usize,
    n: usize,
    parent: Vec<usize>,
    chosen: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, f64)>,
) {
    if chosen.len() + 1 == n || n <= 1 {
        let w = chosen.iter().map(|&e| edges[e].2).product();
        out.push((chosen.clone(), w));
        return;
    }
    if k == edges.len() || edges.len() - k < n - 1 - chosen.len() {
        return;
    }
    let (a, b, _) = edges[k];
    let mut p = parent.clone();
    let (ra, rb) = (find(&mut p, a), find(&mut p, b));
    if ra != rb {
        p[ra] = rb;
        chosen.push(k);
        enumerate(edges, k + 1, n, p, chosen, out);
        chosen.pop();
    }
    enumerate(edges, k + 1, n, parent, chosen, out);
}

fn matrix_tree(region: &Region, n: usize) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let m = n - 1;
    let mut lap = vec![0.0; m * m];
    for i in 1..n {
        for a in region.adj(i) {
            if a.local == OUTSIDE {
                continue;
            }
            let j = a.local as usize;
            lap[(i - 1) * m + (i - 1)] += a.c;
            if j > 0 {
                lap[(i - 1) * m + (j - 1)] -= a.c;
            }
        }
    }
    Lu::new(m, &lap).det()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EdgeCrossing {
    pub from: String,
    pub to: String,
    pub walk_mean: f64,
    pub erased_mean: f64,
    /// Standard error of the per-sample difference.
    pub stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CrossingReport {
    pub seed: u64,
    pub n_samples: u64,
    pub edges: Vec<EdgeCrossing>,
    pub max_abs_z: f64,
}

/// Mean net crossings of every edge by the stopped walk and by its loop erasure.
pub fn crossing_check(
    net: &Network,
    region: &Region,
    start: VertexId,
    targets: &[VertexId],
    n_samples: u64,
    seed: u64,
) -> Result<CrossingReport> {
    let s = region.local(start).ok_or_else(|| Error::Invalid("start outside the region".into()))?;
    let mut is_t = vec![false; region.len()];
    for &t in targets {
        is_t[region.local(t).ok_or_else(|| Error::Invalid("target outside the region".into()))?] = true;
    }
    let mut edge_ids: Vec<(usize, usize)> = Vec::new();
    for i in 0..region.len() {
        for a in region.adj(i) {
            if a.local != OUTSIDE && i < a.local as usize && a.c > 0.0 {
                edge_ids.push((i, a.local as usize));
            }
        }
    }
    let key: HashMap<(usize, usize), usize> = edge_ids.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let walk = RegionWalk::new(region);
    let net_cross = |seq: &[usize], out: &mut [f64]| {
        for w in seq.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a < b {
                out[key[&(a, b)]] += 1.0;
            } else {
                out[key[&(b, a)]] -= 1.0;
            }
        }
    };
    let m = edge_ids.len();
    let init = || (vec![Moments::default(); m], vec![Moments::default(); m], vec![Moments::default(); m]);
    let parts: Vec<_> = (0..n_samples.div_ceil(4096))
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * 4096..((c + 1) * 4096).min(n_samples) {
                let mut rng = rng::path_rng(seed, i);
                let mut raw = Vec::new();
                let erased = walk.loop_erased(s, |j| is_t[j], &mut rng, Some(&mut raw));
                let mut a = vec![0.0; m];
                let mut b = vec![0.0; m];
                net_cross(&raw, &mut a);
                net_cross(&erased, &mut b);
                for k in 0..m {
                    acc.0[k].push(a[k]);
                    acc.1[k].push(b[k]);
                    acc.2[k].push(a[k] - b[k]);
                }
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        for k in 0..m {
            total.0[k].merge(&p.0[k]);
            total.1[k].merge(&p.1[k]);
            total.2[k].merge(&p.2[k]);
        }
    }
    let mut edges = Vec::with_capacity(m);
    let mut max_abs_z = 0.0f64;
    for (k, &(a, b)) in edge_ids.iter().enumerate() {
        let se = total.2[k].stderr();
        let z = if se > 0.0 { total.2[k].mean / se } else if total.2[k].mean == 0.0 { 0.0 } else { f64::INFINITY };
        max_abs_z = max_abs_z.max(z.abs());
        edges.push(EdgeCrossing {
            from: net.label(region.vertex(a)),
            to: net.label(region.vertex(b)),
            walk_mean: total.0[k].mean,
            erased_mean: total.1[k].mean,
            stderr: se,
            z,
        });
    }
    Ok(CrossingReport { seed, n_samples, edges, max_abs_z })
}

/// Two-branch statistic: how often the second Wilson branch joins the first
/// inside `B(∘, r)`, with both branches started from last exits of `B(∘, R)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EndProfile {
    pub r: usize,
    #[serde(rename = "R")]
    pub big_r: usize,
    pub seed: u64,
    /// Per used sample: 1 when the merge point lies in `B(∘, r)`, else 0.
    pub counts: Vec<u8>,
    /// Distance of the merge point from the root, per used sample.
    pub merge_dist: Vec<u32>,
    pub excluded: u64,
    pub frequency: f64,
    pub stderr: f64,
}

/// Run the two-branch Wilson construction `n_samples` times.
///
/// Branch starts are last exits of `B(∘, R)` by the two simulators' paths
/// (paths whose bias exceeds `bias_budget` are excluded). Branch one is a
/// loop-erased walk on `lerw_region` from the first start to the root; branch
/// two runs from the second start until it hits branch one.
#[allow(clippy::too_many_arguments)]
pub fn end_profile(
    net: &Network,
    sims: [&HSim<'_>; 2],
    lerw_region: &Region,
    r: usize,
    big_r: usize,
    n_samples: u64,
    seed: u64,
    bias_budget: f64,
) -> Result<EndProfile> {
    if r > big_r {
        return Err(Error::Invalid("need r ≤ R".into()));
    }
    let ball = Region::ball(net, big_r);
    let root = net.root();
    let root_local = lerw_region.local(root).ok_or_else(|| Error::Invalid("the LERW region must contain the root".into()))?;
    if !ball.vertices().iter().all(|&v| lerw_region.contains(v)) {
        return Err(Error::RegionTooSmall("the LERW region must contain B(∘, R)".into()));
    }
    let walk = RegionWalk::new(lerw_region);
    let seeds = [rng::derive_seed(seed, 0), rng::derive_seed(seed, 1), rng::derive_seed(seed, 2)];
    let results: Vec<Option<u32>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut starts = [0usize; 2];
            for k in 0..2 {
                let p = sims[k].simulate(seeds[k], i);
                let t = p.last_visit(&ball)?;
                if p.bias > bias_budget {
                    return None;
                }
                starts[k] = lerw_region.local(p.vertices[t])?;
            }
            let mut rng = rng::path_rng(seeds[2], i);
            let b1 = walk.loop_erased(starts[0], |j| j == root_local, &mut rng, None);
            let mut on = vec![false; lerw_region.len()];
            for &j in &b1 {
                on[j] = true;
            }
            let b2 = walk.loop_erased(starts[1], |j| on[j], &mut rng, None);
            Some(lerw_region.dist(*b2.last().unwrap()) as u32)
        })
        .collect();
    let merge_dist: Vec<u32> = results.iter().flatten().copied().collect();
    let excluded = results.len() as u64 - merge_dist.len() as u64;
    let counts: Vec<u8> = merge_dist.iter().map(|&d| u8::from(d as usize <= r)).collect();
    let mut m = Moments::default();
    for &c in &counts {
        m.push(c as f64);
    }
    Ok(EndProfile { r, big_r, seed, counts, merge_dist, excluded, frequency: m.mean, stderr: m.stderr() })
}
