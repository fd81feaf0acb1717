//! Harmonic measures: direct solves, the determinant (Cramer) formulas, and
//! limits from infinity along spheres.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{self, Boundary, ColumnRhs, GreenTable, Operator};
use crate::network::{Network, Region, VertexId};
use crate::potential::{self, Potential};
use crate::stats::tv_distance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DirectSolve,
    Determinant,
    Limit,
    LastExitMc,
}

/// A probability measure on a finite set.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeasureOnSet {
    /// Support, in increasing id order.
    pub support: Vec<VertexId>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
    /// Mass lost to the region's exterior (direct solves with an absorbing exterior).
    pub escape_mass: f64,
    /// `‖M‖₁ ‖M⁻¹‖₁` for determinant-route measures.
    pub condition: Option<f64>,
}

impl MeasureOnSet {
    pub fn get(&self, z: VertexId) -> Option<f64> {
        self.support.iter().position(|&v| v == z).map(|i| self.weights[i])
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn tv(&self, other: &MeasureOnSet) -> Result<f64> {
        if self.support != other.support {
            return Err(Error::Invalid("measures have different supports".into()));
        }
        Ok(tv_distance(&self.weights, &other.weights))
    }
}

fn sorted_set(a: &[VertexId]) -> Result<Vec<VertexId>> {
    let mut s = a.to_vec();
    s.sort();
    s.dedup();
    if s.is_empty() {
        return Err(Error::Invalid("empty target set".into()));
    }
    Ok(s)
}

/// Largest escape mass tolerated by [`harmonic_measure_exact`] with an absorbing exterior.
pub const ESCAPE_LIMIT: f64 = 1e-10;

/// `ω_v^A(z) = P_v(X_{τ_A} = z)` by one solve per `z ∈ A` on `region`.
///
/// With [`Boundary::Free`] the walk is reflected at the region's edge and no mass
/// escapes; with [`Boundary::Absorbing`] the escape mass is reported and must
/// stay below [`ESCAPE_LIMIT`].
pub fn harmonic_measure_exact(
    net: &Network,
    a: &[VertexId],
    v: VertexId,
    region: &Region,
    boundary: Boundary,
) -> Result<MeasureOnSet> {
    let cols = harmonic_measure_columns(net, a, region, boundary)?;
    let support = sorted_set(a)?;
    let i = region
        .local(v)
        .ok_or_else(|| Error::RegionTooSmall(format!("start {} outside the region", net.label(v))))?;
    let weights: Vec<f64> = cols.iter().map(|c| c[i]).collect();
    let escape_mass = (1.0 - weights.iter().sum::<f64>()).max(0.0);
    if boundary == Boundary::Absorbing && escape_mass > ESCAPE_LIMIT {
        return Err(Error::RegionTooSmall(format!("escape mass {escape_mass:.3e} exceeds {ESCAPE_LIMIT:e}")));
    }
    Ok(MeasureOnSet { support, weights, provenance: Provenance::DirectSolve, escape_mass, condition: None })
}

/// Columns `ω_·^A(z)` over the region, one per `z ∈ A` in increasing id order.
pub fn harmonic_measure_columns(
    net: &Network,
    a: &[VertexId],
    region: &Region,
    boundary: Boundary,
) -> Result<Vec<Vec<f64>>> {
    let _ = net;
    let support = sorted_set(a)?;
    let fixed: Vec<usize> = support
        .iter()
        .map(|&z| region.local(z).ok_or_else(|| Error::RegionTooSmall("A is not inside the region".into())))
        .collect::<Result<_>>()?;
    let rhs: Vec<ColumnRhs> = fixed
        .iter()
        .map(|&i| ColumnRhs { fixed: vec![(i, 1.0)], source: Vec::new() })
        .collect();
    match boundary {
        Boundary::Midpoint => {
            let f = Operator::new(region, &fixed, Boundary::Free)?.solve(region, &rhs, None);
            let w = Operator::new(region, &fixed, Boundary::Wired)?.solve(region, &rhs, None);
            Ok(f.into_iter()
                .zip(w)
                .map(|(x, y)| x.iter().zip(&y).map(|(p, q)| 0.5 * (p + q)).collect())
                .collect())
        }
        b => Ok(Operator::new(region, &fixed, b)?.solve(region, &rhs, None)),
    }
}

/// Dense LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    /// Factor a row-major `n × n` matrix.
    pub fn new(n: usize, a: &[f64]) -> Lu {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs())).unwrap();
            if lu[p * n + k] == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(p * n + j, k * n + j);
                }
                perm.swap(p, k);
                sign = -sign;
            }
            let piv = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / piv;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Lu { n, lu, perm, sign, singular }
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.n).fold(self.sign, |d, i| d * self.lu[i * self.n + i])
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`, with `A` the factored matrix given again as `a`.
    pub fn condition(&self, a: &[f64]) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        let n = self.n;
        let norm1 = |m: &dyn Fn(usize, usize) -> f64| {
            (0..n).map(|j| (0..n).map(|i| m(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
        };
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for (i, x) in self.solve(&e).into_iter().enumerate() {
                inv[i * n + j] = x;
            }
        }
        norm1(&|i, j| a[i * n + j]) * norm1(&|i, j| inv[i * n + j])
    }
}

/// The column that replaces `M`'s `z`-column in the Cramer formula.
#[derive(Clone, Copy, Debug)]
pub enum DetColumn<'a> {
    /// `(g_∘(x, v))_x`: harmonic measure from a vertex.
    Vertex(VertexId),
    /// `(h(x))_x`: harmonic measure from infinity.
    Potential(&'a Potential),
}

/// `ω(z) = det(M^{b,z}) / det(M)` for `z ∈ A ∖ {∘}` with `M = (g_∘(x,y))`, and
/// `ω(∘) = 1 − Σ ω(z)`. The table must be killed at `∘` only and cover `A`.
pub fn harmonic_measure_det(gtab: &GreenTable, column: DetColumn<'_>, a: &[VertexId]) -> Result<MeasureOnSet> {
    let root = match gtab.kill() {
        [o] => *o,
        _ => return Err(Error::Invalid("the table must be killed at a single root".into())),
    };
    let support = sorted_set(a)?;
    if !support.contains(&root) || support.len() < 2 {
        return Err(Error::Invalid("A must contain the root and one more vertex".into()));
    }
    let rest: Vec<VertexId> = support.iter().copied().filter(|&x| x != root).collect();
    let k = rest.len();
    let g = |x: VertexId, y: VertexId| {
        gtab.get(x, y).ok_or_else(|| Error::RegionTooSmall("Green table does not cover A".into()))
    };
    let mut m = vec![0.0; k * k];
    for (i, &x) in rest.iter().enumerate() {
        for (j, &y) in rest.iter().enumerate() {
            m[i * k + j] = g(x, y)?;
        }
    }
    let b: Vec<f64> = rest
        .iter()
        .map(|&x| match column {
            DetColumn::Vertex(v) => g(x, v),
            DetColumn::Potential(h) => h.at(x),
        })
        .collect::<Result<_>>()?;
    let lu = Lu::new(k, &m);
    let det = lu.det();
    let scale: f64 = (0..k).map(|j| (0..k).map(|i| m[i * k + j].powi(2)).sum::<f64>().sqrt()).product();
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::Singular(format!("det(M) = {det:.3e} against scale {scale:.3e}")));
    }
    let condition = lu.condition(&m);
    let mut omega = Vec::with_capacity(k);
    for z in 0..k {
        let mut mz = m.clone();
        for i in 0..k {
            mz[i * k + z] = b[i];
        }
        omega.push(Lu::new(k, &mz).det() / det);
    }
    let mut weights = Vec::with_capacity(support.len());
    let mut it = omega.iter();
    let others: f64 = omega.iter().sum();
    for &x in &support {
        weights.push(if x == root { 1.0 - others } else { *it.next().unwrap() });
    }
    Ok(MeasureOnSet { support, weights, provenance: Provenance::Determinant, escape_mass: 0.0, condition: Some(condition) })
}

/// Determinant route to `ω_∞^A` from a potential `h`. When the root of `h` is
/// not in `A`, the root is moved to the smallest vertex of `A` first.
///
/// Green densities come from a ball of radius `table_radius` around the
/// (possibly moved) root with the given boundary treatment.
pub fn harmonic_measure_infinity_det(
    net: &Network,
    h: &Potential,
    a: &[VertexId],
    table_radius: usize,
    boundary: Boundary,
) -> Result<MeasureOnSet> {
    let support = sorted_set(a)?;
    let (root, hh) = if support.contains(&h.root()) {
        (h.root(), h.clone())
    } else {
        let new_root = support[0];
        let reach = support.iter().map(|&v| net.dist(v)).max().unwrap() + net.dist(new_root) + 1;
        let shifted = potential::root_transfer(net, h, new_root, &[reach, table_radius], f64::INFINITY, boundary)?;
        (new_root, shifted)
    };
    let region = Arc::new(Region::ball_around(net, root, table_radius));
    let cols: Vec<VertexId> = support.iter().copied().filter(|&x| x != root).collect();
    let table = green::green_columns(&region, &[root], &cols, boundary)?;
    harmonic_measure_det(&table, DetColumn::Potential(&hh), &support)
}

/// Convergence record of harmonic measures along spheres.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConvergenceCertificate {
    pub radii: Vec<usize>,
    /// Max pairwise total variation between starts on the same sphere.
    pub within_tv: Vec<f64>,
    /// Total variation between sphere averages of consecutive radii.
    pub across_tv: Vec<f64>,
    /// Max total variation of hitting laws of `∂B(r_n)` from starts on `∂B(r_{n+1})`.
    pub contraction: Vec<f64>,
    pub region_radius: usize,
    pub tol: f64,
    pub converged: bool,
}

impl ConvergenceCertificate {
    pub fn within_tv_decreasing(&self) -> bool {
        self.within_tv.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfinityOptions {
    pub region_radius: usize,
    pub boundary: Boundary,
    pub contraction: bool,
}

impl Default for InfinityOptions {
    fn default() -> Self {
        InfinityOptions { region_radius: 256, boundary: Boundary::Free, contraction: true }
    }
}

/// `ω_∞^A` probed on the spheres `∂B(∘, r)` for `r` in `radii`, all solved on
/// one ball of radius `opts.region_radius`. Returns the average over the last
/// sphere; the certificate says whether the within-sphere spread reached `tol`.
pub fn harmonic_measure_infinity(
    net: &Network,
    a: &[VertexId],
    radii: &[usize],
    tol: f64,
    opts: &InfinityOptions,
) -> Result<(MeasureOnSet, ConvergenceCertificate)> {
    let support = sorted_set(a)?;
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("radii must be strictly increasing".into()));
    }
    let reach = support.iter().map(|&v| net.dist(v)).max().unwrap();
    if radii[0] <= reach || *radii.last().unwrap() >= opts.region_radius {
        return Err(Error::Invalid("probe spheres must lie outside A and inside the region".into()));
    }
    let region = Region::ball(net, opts.region_radius);
    let cols = harmonic_measure_columns(net, &support, &region, opts.boundary)?;
    let mut within = Vec::new();
    let mut across = Vec::new();
    let mut averages: Vec<Vec<f64>> = Vec::new();
    for &r in radii {
        let sphere: Vec<usize> = region.sphere(r).iter().map(|&v| region.local(v).unwrap()).collect();
        let laws: Vec<Vec<f64>> = sphere.iter().map(|&i| cols.iter().map(|c| c[i]).collect()).collect();
        within.push(max_pairwise_tv(&laws));
        let mut avg = vec![0.0; support.len()];
        for l in &laws {
            for (s, x) in avg.iter_mut().zip(l) {
                *s += x / laws.len() as f64;
            }
        }
        if let Some(prev) = averages.last() {
            across.push(tv_distance(prev, &avg));
        }
        averages.push(avg);
    }
    let contraction = if opts.contraction { contraction_ratios(net, &region, radii, opts.boundary)? } else { Vec::new() };
    let converged = within.last().is_some_and(|&w| w <= tol);
    let cert = ConvergenceCertificate {
        radii: radii.to_vec(),
        within_tv: within,
        across_tv: across,
        contraction,
        region_radius: opts.region_radius,
        tol,
        converged,
    };
    let measure = MeasureOnSet {
        support,
        weights: averages.pop().unwrap(),
        provenance: Provenance::Limit,
        escape_mass: 0.0,
        condition: None,
    };
    Ok((measure, cert))
}

fn max_pairwise_tv(laws: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..laws.len() {
        for j in i + 1..laws.len() {
            worst = worst.max(tv_distance(&laws[i], &laws[j]));
        }
    }
    worst
}

fn contraction_ratios(net: &Network, region: &Region, radii: &[usize], boundary: Boundary) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for w in radii.windows(2) {
        let (inner, outer) = (w[0], w[1]);
        let ball: Vec<VertexId> = (0..region.len()).filter(|&i| region.dist(i) <= inner).map(|i| region.vertex(i)).collect();
        let sphere = region.sphere(inner);
        let fixed: Vec<usize> = ball.iter().map(|&v| region.local(v).unwrap()).collect();
        let op = Operator::new(region, &fixed, if boundary == Boundary::Midpoint { Boundary::Free } else { boundary })?;
        let rhs: Vec<ColumnRhs> = sphere
            .iter()
            .map(|&z| ColumnRhs { fixed: vec![(region.local(z).unwrap(), 1.0)], source: Vec::new() })
            .collect();
        let starts: Vec<usize> = region.sphere(outer).iter().map(|&v| region.local(v).unwrap()).collect();
        let cols = op.solve(region, &rhs, Some(&starts));
        let laws: Vec<Vec<f64>> = (0..starts.len()).map(|s| cols.iter().map(|c| c[s]).collect()).collect();
        out.push(max_pairwise_tv(&laws));
        let _ = net;
    }
    Ok(out)
}
