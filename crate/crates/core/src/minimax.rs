//! The zero-sum game between two spheres with Green payoffs, its exact LP
//! solution, and the potential built from optimal dipole mixtures.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{self, Boundary, GreenTable};
use crate::network::{Network, Region, VertexId};
use crate::potential::{self, Potential};

/// Dense row-major matrix.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 || data.len() != rows * cols || data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("matrix must be nonempty, finite and rectangular".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Invalid("ragged matrix".into()));
        }
        Matrix::new(rows.len(), c, rows.concat())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Payoff `g_∘(w, v)` for `w ∈ ∂B(∘, R)` (rows, maximizer) and `v ∈ ∂B(∘, r)` (columns, minimizer).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Payoff {
    pub r: usize,
    #[serde(rename = "R")]
    pub big_r: usize,
    pub outer: Vec<VertexId>,
    pub inner: Vec<VertexId>,
    pub matrix: Matrix,
}

/// Spheres are taken from the table's row region, which must be a ball around the root.
pub fn payoff_matrix(gtab: &GreenTable, r: usize, big_r: usize) -> Result<Payoff> {
    if r >= big_r {
        return Err(Error::Invalid("need r < R".into()));
    }
    let rows = gtab.rows();
    let outer = rows.sphere(big_r);
    let inner = rows.sphere(r);
    if outer.is_empty() || inner.is_empty() {
        return Err(Error::RegionTooSmall(format!("sphere of radius {} is empty", if outer.is_empty() { big_r } else { r })));
    }
    let mut data = Vec::with_capacity(outer.len() * inner.len());
    for &w in &outer {
        for &v in &inner {
            data.push(gtab.get(w, v).ok_or_else(|| Error::RegionTooSmall("Green table misses a sphere".into()))?);
        }
    }
    let matrix = Matrix::new(outer.len(), inner.len(), data)?;
    Ok(Payoff { r, big_r, outer, inner, matrix })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    IterationLimit,
}

/// Solution of a matrix game where the row player maximizes.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    /// Row strategy (`ζ_R` for sphere games).
    pub row_strategy: Vec<f64>,
    /// Column strategy (`η_r` for sphere games).
    pub col_strategy: Vec<f64>,
    /// `min_j (ζᵀA)_j`, guaranteed to the row player.
    pub lower: f64,
    /// `max_i (Aη)_i`, conceded by the column player.
    pub upper: f64,
    pub duality_gap: f64,
    pub status: LpStatus,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-12;

/// Exact solution by the simplex method with Bland's rule on the shifted game
/// `max Σy : (A + s) y ≤ 1, y ≥ 0`; the row strategy comes from the dual.
pub fn solve_zero_sum(a: &Matrix) -> Result<GameSolution> {
    let (m, n) = (a.rows, a.cols);
    let min = a.data.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;
    let w = n + m + 1;
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        for j in 0..n {
            t[i * w + j] = a.at(i, j) + shift;
        }
        t[i * w + n + i] = 1.0;
        t[i * w + n + m] = 1.0;
    }
    let mut obj = vec![0.0; n + m + 1];
    obj[..n].fill(1.0);
    let mut basis: Vec<usize> = (n..n + m).collect();
    let max_pivots = 50 * (n + m).pow(2).max(100);
    let mut pivots = 0;
    let status = loop {
        let Some(e) = (0..n + m).find(|&j| obj[j] > PIVOT_TOL) else { break LpStatus::Optimal };
        if pivots >= max_pivots {
            break LpStatus::IterationLimit;
        }
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let p = t[i * w + e];
            if p > PIVOT_TOL {
                let ratio = t[i * w + n + m] / p;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[i] < basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
        }
        let Some((l, _)) = leave else {
            return Err(Error::Solver("unbounded game LP".into()));
        };
        let p = t[l * w + e];
        for x in &mut t[l * w..(l + 1) * w] {
            *x /= p;
        }
        let pivot_row: Vec<f64> = t[l * w..(l + 1) * w].to_vec();
        for i in 0..m {
            if i != l {
                let f = t[i * w + e];
                if f != 0.0 {
                    for (x, y) in t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                        *x -= f * y;
                    }
                }
            }
        }
        let f = obj[e];
        for (x, y) in obj.iter_mut().zip(&pivot_row) {
            *x -= f * y;
        }
        basis[l] = e;
        pivots += 1;
    };
    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i * w + n + m].max(0.0);
        }
    }
    let x: Vec<f64> = (0..m).map(|i| (-obj[n + i]).max(0.0)).collect();
    let sy: f64 = y.iter().sum();
    let sx: f64 = x.iter().sum();
    if !(sy > 0.0 && sx > 0.0) {
        return Err(Error::Solver("degenerate game LP".into()));
    }
    let col_strategy: Vec<f64> = y.iter().map(|v| v / sy).collect();
    let row_strategy: Vec<f64> = x.iter().map(|v| v / sx).collect();
    let (lower, upper) = guarantees(a, &row_strategy, &col_strategy);
    Ok(GameSolution {
        value: 0.5 * (lower + upper),
        row_strategy,
        col_strategy,
        lower,
        upper,
        duality_gap: upper - lower,
        status,
        pivots,
    })
}

fn guarantees(a: &Matrix, zeta: &[f64], eta: &[f64]) -> (f64, f64) {
    let lower = (0..a.cols)
        .map(|j| (0..a.rows).map(|i| zeta[i] * a.at(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let upper = (0..a.rows)
        .map(|i| (0..a.cols).map(|j| a.at(i, j) * eta[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    (lower, upper)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FictitiousPlay {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

/// Brown–Robinson fictitious play with simultaneous best responses, until the
/// bracket `[lower, upper]` is narrower than `2 tol` or `max_iter` is reached.
pub fn fictitious_play(a: &Matrix, tol: f64, max_iter: usize) -> FictitiousPlay {
    let (m, n) = (a.rows, a.cols);
    let mut row_pay = vec![0.0; m];
    let mut col_pay = vec![0.0; n];
    let (mut i, mut j) = (0usize, 0usize);
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_upper = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        for (k, p) in row_pay.iter_mut().enumerate() {
            *p += a.at(k, j);
        }
        for (k, p) in col_pay.iter_mut().enumerate() {
            *p += a.at(i, k);
        }
        let (ni, hi) = argmax(&row_pay);
        let (nj, lo) = argmin(&col_pay);
        best_upper = best_upper.min(hi / it as f64);
        best_lower = best_lower.max(lo / it as f64);
        i = ni;
        j = nj;
        if best_upper - best_lower <= 2.0 * tol {
            break;
        }
    }
    FictitiousPlay { value: 0.5 * (best_lower + best_upper), lower: best_lower, upper: best_upper, iterations: it }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &x)| if x > b.1 { (k, x) } else { b })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::INFINITY), |b, (k, &x)| if x < b.1 { (k, x) } else { b })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameOptions {
    /// Radius of the ball on which Green densities are solved; defaults to twice the largest sphere.
    pub table_radius: Option<usize>,
    pub boundary: Boundary,
}

impl Default for GameOptions {
    fn default() -> Self {
        GameOptions { table_radius: None, boundary: Boundary::Free }
    }
}

/// Green columns at the inner sphere on a ball around the root.
fn inner_table(net: &Network, r: usize, big_r: usize, opts: &GameOptions) -> Result<GreenTable> {
    let n = opts.table_radius.unwrap_or(2 * big_r).max(big_r);
    let ball = Arc::new(Region::ball(net, n));
    let cols = ball.sphere(r);
    green::green_columns(&ball, &[net.root()], &cols, opts.boundary)
}

/// Sequence `V(R, r)` over increasing `R`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VLimit {
    pub r: usize,
    pub radii: Vec<usize>,
    pub values: Vec<f64>,
    pub gaps: Vec<f64>,
    pub increments: Vec<f64>,
    /// Indices `k` with `V(R_{k+1}, r) > V(R_k, r) + tol`.
    pub increases: Vec<usize>,
    pub final_increment: f64,
    pub value: f64,
    pub tol: f64,
    pub converged: bool,
}

pub fn v_limit(net: &Network, r: usize, radii: &[usize], tol: f64, opts: &GameOptions) -> Result<VLimit> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] <= r {
        return Err(Error::Invalid("R list must be increasing and exceed r".into()));
    }
    let table = inner_table(net, r, *radii.last().unwrap(), opts)?;
    let sols: Vec<GameSolution> = radii
        .par_iter()
        .map(|&big_r| solve_zero_sum(&payoff_matrix(&table, r, big_r)?.matrix))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = sols.iter().map(|s| s.value).collect();
    let gaps = sols.iter().map(|s| s.duality_gap).collect();
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let increases = increments.iter().enumerate().filter(|(_, &d)| d > tol).map(|(k, _)| k).collect();
    let final_increment = increments.last().map_or(f64::INFINITY, |d| d.abs());
    Ok(VLimit {
        r,
        radii: radii.to_vec(),
        value: *values.last().unwrap(),
        values,
        gaps,
        increments,
        increases,
        final_increment,
        tol,
        converged: final_increment <= tol,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapeOptions {
    /// Radius `R'` of the common outer sphere; defaults to `radius_cap + 1`.
    pub outer_radius: Option<usize>,
    /// Ball for the Green solves; defaults to `R'` on trees and the line, `2R'` otherwise.
    pub table_radius: Option<usize>,
    pub boundary: Boundary,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        EscapeOptions { outer_radius: None, table_radius: None, boundary: Boundary::Free }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EscapeLevel {
    pub n: usize,
    pub level: f64,
    /// Smallest inner radius found with `V(R', r) ≥ level`.
    pub radius: usize,
    pub value: f64,
    pub duality_gap: f64,
    pub weight: f64,
    /// `min_{∂B(∘, r)} ψ_n`.
    pub psi_min: f64,
}

#[derive(Clone, Debug)]
pub struct EscapingPotential {
    pub potential: Potential,
    pub outer_radius: usize,
    pub levels: Vec<EscapeLevel>,
    /// `V(R', r)` for every inner radius tried.
    pub values: BTreeMap<usize, f64>,
    /// `min_{∂B(∘, ρ)} h` for `ρ = 0..R'`.
    pub profile: Vec<f64>,
    pub requested_levels: usize,
    pub complete: bool,
}

impl EscapingPotential {
    pub fn achieved_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn profile_nondecreasing(&self) -> bool {
        self.profile.windows(2).all(|w| w[1] >= w[0] - 1e-12)
    }
}

/// Relative slack when comparing a game value with a level.
pub const LEVEL_RTOL: f64 = 1e-9;

/// `h = Σ w_n ψ_n` with `ψ_n = g_∘(·, ζ)` for an optimal outer strategy `ζ` of
/// the game `(R', r_n)`, where `r_n` is the smallest radius with `V(R', r_n) ≥ M_n`.
///
/// Weights are `2^{-n}` with the last one doubled so they sum to one. If some
/// level cannot be reached with `r ≤ radius_cap` the construction stops there
/// and returns the levels achieved (`complete == false`); with no level at all
/// the result is `ψ` for `r = radius_cap`.
pub fn build_escaping_potential(
    net: &Network,
    schedule: &[f64],
    radius_cap: usize,
    opts: &EscapeOptions,
) -> Result<EscapingPotential> {
    if schedule.is_empty() || radius_cap == 0 {
        return Err(Error::Invalid("need a nonempty schedule and a positive radius cap".into()));
    }
    let outer_radius = opts.outer_radius.unwrap_or(radius_cap + 1);
    if outer_radius <= radius_cap {
        return Err(Error::Invalid("the outer radius must exceed the radius cap".into()));
    }
    let low_dim = net.is_tree() || net.dimension() == Some(1);
    let n = opts.table_radius.unwrap_or(if low_dim { outer_radius } else { 2 * outer_radius }).max(outer_radius);
    let ball = Arc::new(Region::ball(net, n));
    let outer = ball.sphere(outer_radius);
    let table = green::green_columns(&ball, &[net.root()], &outer, opts.boundary)?;
    let mut values: BTreeMap<usize, f64> = BTreeMap::new();
    let mut sols: BTreeMap<usize, GameSolution> = BTreeMap::new();
    let mut solve = |r: usize| -> Result<f64> {
        if let Some(&v) = values.get(&r) {
            return Ok(v);
        }
        let s = solve_zero_sum(&payoff_matrix(&table, r, outer_radius)?.matrix)?;
        values.insert(r, s.value);
        let v = s.value;
        sols.insert(r, s);
        Ok(v)
    };
    let mut radii = Vec::new();
    let mut lo = 0usize;
    for &level in schedule {
        let m = level * (1.0 - LEVEL_RTOL);
        let mut r = (lo + 1).max(1);
        let mut fail = lo;
        let mut hit = None;
        loop {
            if solve(r)? >= m {
                hit = Some(r);
                break;
            }
            fail = r;
            if r == radius_cap {
                break;
            }
            r = (2 * r).min(radius_cap);
        }
        let Some(mut hi) = hit else { break };
        while hi - fail > 1 {
            let mid = (hi + fail) / 2;
            if solve(mid)? >= m {
                hi = mid;
            } else {
                fail = mid;
            }
        }
        radii.push(hi);
        lo = hi;
    }
    let complete = radii.len() == schedule.len();
    let fallback = radii.is_empty();
    if fallback {
        solve(radius_cap)?;
        radii.push(radius_cap);
    }
    let weights = potential::level_weights(radii.len());
    let region = Arc::new(Region::ball(net, outer_radius));
    let mut h = vec![0.0; region.len()];
    let mut levels = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let sol = &sols[&r];
        let psi: Vec<f64> = region
            .vertices()
            .iter()
            .map(|&x| outer.iter().zip(&sol.row_strategy).map(|(&w, z)| z * table.get(x, w).unwrap_or(0.0)).sum())
            .collect();
        for (a, p) in h.iter_mut().zip(&psi) {
            *a += weights[k] * p;
        }
        let psi_min = region
            .sphere(r)
            .iter()
            .map(|&v| psi[region.local(v).unwrap()])
            .fold(f64::INFINITY, f64::min);
        if !fallback {
            levels.push(EscapeLevel {
                n: k + 1,
                level: schedule[k],
                radius: r,
                value: sol.value,
                duality_gap: sol.duality_gap,
                weight: weights[k],
                psi_min,
            });
        }
    }
    let mut profile = vec![f64::INFINITY; outer_radius];
    for (i, &x) in h.iter().enumerate() {
        let d = region.dist(i);
        if d < outer_radius {
            profile[d] = profile[d].min(x);
        }
    }
    let potential = Potential::from_values(net.root(), region, h)?;
    Ok(EscapingPotential {
        potential,
        outer_radius,
        levels,
        values,
        profile,
        requested_levels: schedule.len(),
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;

    #[test]
    fn trivial_games() {
        let s = solve_zero_sum(&Matrix::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-15);
        let s = solve_zero_sum(&Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()).unwrap();
        assert!(s.value.abs() < 1e-12 && s.duality_gap < 1e-12);
        for p in s.row_strategy.iter().chain(&s.col_strategy) {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rock_paper_scissors() {
        let a = Matrix::from_rows(&[vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0], vec![-1.0, 1.0, 0.0]]).unwrap();
        let s = solve_zero_sum(&a).unwrap();
        assert!(s.value.abs() < 1e-12);
        let fp = fictitious_play(&a, 1e-4, 10_000_000);
        assert!((fp.value - s.value).abs() < 1e-4);
    }

    #[test]
    fn dominated_rows() {
        let a = Matrix::from_rows(&[vec![3.0, 1.0], vec![2.0, 0.5], vec![4.0, 0.0]]).unwrap();
        let s = solve_zero_sum(&a).unwrap();
        // saddle point at (0, 1)
        assert!(s.duality_gap < 1e-12);
        assert!((s.value - 1.0).abs() < 1e-12, "{}", s.value);
        assert!((s.row_strategy[0] - 1.0).abs() < 1e-12 && (s.col_strategy[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_game_is_identity() {
        let net = Network::build(NetworkSpec::integer_line()).unwrap();
        let t = inner_table(&net, 1, 3, &GameOptions::default()).unwrap();
        let p = payoff_matrix(&t, 1, 3).unwrap();
        let s = solve_zero_sum(&p.matrix).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
        let mut flat = p.matrix.data.clone();
        flat.sort_by(f64::total_cmp);
        for (a, b) in flat.iter().zip([0.0, 0.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn escaping_potential_on_z() {
        let net = Network::build(NetworkSpec::integer_line()).unwrap();
        let e = build_escaping_potential(&net, &potential::doubling_schedule(3), 63, &EscapeOptions::default()).unwrap();
        assert!(e.complete);
        let radii: Vec<usize> = e.levels.iter().map(|l| l.radius).collect();
        assert_eq!(radii, vec![4, 16, 48]);
        assert!(e.profile_nondecreasing());
        for l in &e.levels {
            assert!(e.profile[l.radius] >= l.n as f64 * (1.0 - 1e-9));
        }
        assert!(e.potential.certificate().harmonic_residual < 1e-9);
    }

    #[test]
    fn escaping_potential_on_tree() {
        let net = Network::build(NetworkSpec::regular_tree(2)).unwrap();
        let e = build_escaping_potential(&net, &potential::doubling_schedule(3), 6, &EscapeOptions::default()).unwrap();
        assert!(e.complete);
        let radii: Vec<usize> = e.levels.iter().map(|l| l.radius).collect();
        assert_eq!(radii, vec![3, 5, 6]);
        assert!(e.profile_nondecreasing());
        for l in &e.levels {
            assert!(e.profile[l.radius] >= l.n as f64 * (1.0 - 1e-9), "{:?}", e.profile);
            assert!(l.duality_gap <= 1e-8 * (1.0 + l.value));
        }
    }
}
