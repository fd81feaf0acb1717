//! Dirichlet solves on finite regions, killed Green densities, dipoles and
//! effective resistance.
//!
//! All systems are the weighted graph Laplacian restricted to the unknown
//! vertices of a region. What happens across the region's outer edge is set by
//! [`Boundary`].

use std::collections::HashMap;
use std::cell::Cell;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, Region, VertexId, OUTSIDE};

/// Treatment of edges that leave the region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Edges leaving the region are removed: the walk reflects off the region's edge.
    Free,
    /// Vertices outside the region are absorbing with value 0.
    Absorbing,
    /// All vertices outside the region are glued into one extra, non-absorbing vertex.
    Wired,
    /// Average of the free and wired solutions.
    Midpoint,
}

thread_local! {
    static DIRECT_LIMIT: Cell<usize> = const { Cell::new(4_000_000) };
}

/// Largest number of unknowns handled by sparse Cholesky on this thread; larger
/// systems use preconditioned conjugate gradients.
pub fn direct_limit() -> usize {
    DIRECT_LIMIT.with(|c| c.get())
}

pub fn set_direct_limit(n: usize) {
    DIRECT_LIMIT.with(|c| c.set(n));
}

/// Relative residual target of the iterative solver.
pub const CG_TOL: f64 = 1e-12;

/// Prescribed values on an absorbing set and a prescribed Laplacian elsewhere.
#[derive(Clone, Debug)]
pub struct DirichletProblem<'a> {
    pub region: &'a Region,
    pub boundary: Boundary,
    absorbing: Vec<(usize, f64)>,
    source: Vec<(usize, f64)>,
}

impl<'a> DirichletProblem<'a> {
    pub fn new(region: &'a Region, boundary: Boundary) -> Self {
        DirichletProblem { region, boundary, absorbing: Vec::new(), source: Vec::new() }
    }

    /// Fix `f(v) = value`. Vertices outside the region are ignored.
    pub fn absorb(mut self, v: VertexId, value: f64) -> Self {
        if let Some(i) = self.region.local(v) {
            self.absorbing.push((i, value));
        }
        self
    }

    /// Require `Δf(v) = value` at a non-absorbing vertex.
    pub fn source(mut self, v: VertexId, value: f64) -> Self {
        if let Some(i) = self.region.local(v) {
            self.source.push((i, value));
        }
        self
    }
}

/// Values on the region that solve the problem.
pub fn dirichlet_solve(net: &Network, prob: &DirichletProblem<'_>) -> Result<Vec<f64>> {
    let _ = net;
    let fixed: Vec<usize> = prob.absorbing.iter().map(|&(i, _)| i).collect();
    let rhs = ColumnRhs { fixed: prob.absorbing.clone(), source: prob.source.clone() };
    let mut out = solve_with_boundary(prob.region, &fixed, prob.boundary, &[rhs], None)?;
    Ok(out.pop().unwrap())
}

/// One right-hand side: fixed values on the absorbing set and `Δf` elsewhere.
#[derive(Clone, Debug, Default)]
pub struct ColumnRhs {
    pub fixed: Vec<(usize, f64)>,
    pub source: Vec<(usize, f64)>,
}

fn solve_with_boundary(
    region: &Region,
    fixed: &[usize],
    boundary: Boundary,
    rhs: &[ColumnRhs],
    rows: Option<&[usize]>,
) -> Result<Vec<Vec<f64>>> {
    match boundary {
        Boundary::Midpoint => {
            let a = Operator::new(region, fixed, Boundary::Free)?.solve(region, rhs, rows);
            let b = Operator::new(region, fixed, Boundary::Wired)?.solve(region, rhs, rows);
            Ok(a
                .into_iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(&y).map(|(p, q)| 0.5 * (p + q)).collect())
                .collect())
        }
        _ => Ok(Operator::new(region, fixed, boundary)?.solve(region, rhs, rows)),
    }
}

enum Factor {
    Direct(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Iterative(Csr),
}

struct Csr {
    start: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<f64>,
}

impl Csr {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.diag.len() {
            let mut s = 0.0;
            for k in self.start[i]..self.start[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    fn pcg(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return x;
        }
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..(20 * n).max(1000) {
            self.apply(&p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= CG_TOL * bnorm {
                break;
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

/// The Dirichlet Laplacian of a region with a given absorbing set, factorized once.
pub struct Operator {
    unknown_of: Vec<u32>,
    n_unknown: usize,
    wired: Option<usize>,
    exterior_c: Vec<f64>,
    factor: Factor,
}

impl Operator {
    pub fn new(region: &Region, fixed: &[usize], boundary: Boundary) -> Result<Operator> {
        let n = region.len();
        let mut unknown_of = vec![0u32; n];
        for &i in fixed {
            unknown_of[i] = OUTSIDE;
        }
        let mut k = 0usize;
        for u in unknown_of.iter_mut() {
            if *u != OUTSIDE {
                *u = k as u32;
                k += 1;
            }
        }
        let exterior_c: Vec<f64> = (0..n)
            .map(|i| region.adj(i).iter().filter(|a| a.local == OUTSIDE).map(|a| a.c).sum())
            .collect();
        let wired = match boundary {
            Boundary::Wired if exterior_c.iter().any(|&c| c > 0.0) => {
                k += 1;
                Some(k - 1)
            }
            _ => None,
        };
        let n_unknown = k;
        if n_unknown == 0 {
            return Ok(Operator {
                unknown_of,
                n_unknown,
                wired,
                exterior_c,
                factor: Factor::Iterative(Csr { start: vec![0], col: vec![], val: vec![], diag: vec![] }),
            });
        }
        check_nonsingular(region, &unknown_of, boundary, &exterior_c, wired.is_some())?;

        // Lower-triangular entries, one row at a time.
        let mut trip: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(n_unknown * 4);
        let mut wired_diag = 0.0;
        for i in 0..n {
            let ui = unknown_of[i];
            if ui == OUTSIDE {
                continue;
            }
            let ui = ui as usize;
            let mut diag = 0.0;
            for a in region.adj(i) {
                if a.local == OUTSIDE {
                    match boundary {
                        Boundary::Free => {}
                        _ => diag += a.c,
                    }
                    continue;
                }
                diag += a.c;
                let uj = unknown_of[a.local as usize];
                if uj != OUTSIDE && (uj as usize) < ui {
                    trip.push(Triplet::new(ui, uj as usize, -a.c));
                }
            }
            trip.push(Triplet::new(ui, ui, diag));
            if let Some(w) = wired {
                if exterior_c[i] > 0.0 {
                    trip.push(Triplet::new(w, ui, -exterior_c[i]));
                    wired_diag += exterior_c[i];
                }
            }
        }
        if let Some(w) = wired {
            trip.push(Triplet::new(w, w, wired_diag));
        }
        let factor = if n_unknown <= direct_limit() {
            let m = SparseColMat::<usize, f64>::try_new_from_triplets(n_unknown, n_unknown, &trip)
                .map_err(|e| Error::Solver(format!("{e:?}")))?;
            let llt = m.sp_cholesky(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
            Factor::Direct(llt)
        } else {
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_unknown];
            for t in &trip {
                rows[t.row].push((t.col, t.val));
                if t.row != t.col {
                    rows[t.col].push((t.row, t.val));
                }
            }
            let mut csr = Csr { start: vec![0], col: vec![], val: vec![], diag: vec![0.0; n_unknown] };
            for (i, r) in rows.into_iter().enumerate() {
                for (j, v) in r {
                    if i == j {
                        csr.diag[i] = v;
                    }
                    csr.col.push(j);
                    csr.val.push(v);
                }
                csr.start.push(csr.col.len());
            }
            Factor::Iterative(csr)
        };
        Ok(Operator { unknown_of, n_unknown, wired, exterior_c, factor })
    }

    /// Solve for every right-hand side. When `rows` is given only those local
    /// entries are returned, in that order.
    pub fn solve(&self, region: &Region, rhs: &[ColumnRhs], rows: Option<&[usize]>) -> Vec<Vec<f64>> {
        let n = region.len();
        let batch = (20_000_000 / self.n_unknown.max(1)).clamp(1, 256);
        let mut out = Vec::with_capacity(rhs.len());
        for chunk in rhs.chunks(batch) {
            let mut fixed_vals: Vec<HashMap<usize, f64>> = Vec::with_capacity(chunk.len());
            let mut b = Mat::<f64>::zeros(self.n_unknown, chunk.len());
            for (k, col) in chunk.iter().enumerate() {
                let fv: HashMap<usize, f64> = col.fixed.iter().copied().collect();
                for &(i, s) in &col.source {
                    let u = self.unknown_of[i];
                    if u != OUTSIDE {
                        b[(u as usize, k)] -= s;
                    }
                }
                for (&i, &val) in &fv {
                    if val == 0.0 {
                        continue;
                    }
                    for a in region.adj(i) {
                        if a.local == OUTSIDE {
                            continue;
                        }
                        let u = self.unknown_of[a.local as usize];
                        if u != OUTSIDE {
                            b[(u as usize, k)] += a.c * val;
                        }
                    }
                }
                fixed_vals.push(fv);
            }
            match &self.factor {
                Factor::Direct(llt) => llt.solve_in_place(b.as_mut()),
                Factor::Iterative(csr) => {
                    for k in 0..chunk.len() {
                        let col: Vec<f64> = (0..self.n_unknown).map(|i| b[(i, k)]).collect();
                        let x = csr.pcg(&col);
                        for (i, v) in x.into_iter().enumerate() {
                            b[(i, k)] = v;
                        }
                    }
                }
            }
            for (k, fv) in fixed_vals.iter().enumerate() {
                let value = |i: usize| -> f64 {
                    let u = self.unknown_of[i];
                    if u == OUTSIDE {
                        fv.get(&i).copied().unwrap_or(0.0)
                    } else {
                        b[(u as usize, k)]
                    }
                };
                let v: Vec<f64> = match rows {
                    Some(r) => r.iter().map(|&i| value(i)).collect(),
                    None => (0..n).map(value).collect(),
                };
                out.push(v);
            }
        }
        out
    }

    /// Value of the glued exterior vertex is not exposed; this reports whether one exists.
    pub fn is_wired(&self) -> bool {
        self.wired.is_some()
    }

    pub fn unknowns(&self) -> usize {
        self.n_unknown
    }

    #[allow(dead_code)]
    fn exterior_conductance(&self, i: usize) -> f64 {
        self.exterior_c[i]
    }
}

fn check_nonsingular(
    region: &Region,
    unknown_of: &[u32],
    boundary: Boundary,
    exterior_c: &[f64],
    wired: bool,
) -> Result<()> {
    // Every unknown component must touch an absorbing vertex (or the absorbing exterior).
    let n = region.len();
    let mut anchored = vec![false; n];
    let mut stack = Vec::new();
    for i in 0..n {
        if unknown_of[i] == OUTSIDE {
            continue;
        }
        let touches = region.adj(i).iter().any(|a| {
            (a.local != OUTSIDE && unknown_of[a.local as usize] == OUTSIDE)
                || (a.local == OUTSIDE && boundary == Boundary::Absorbing)
        });
        if touches {
            anchored[i] = true;
            stack.push(i);
        }
    }
    let mut wired_reached = false;
    loop {
        while let Some(i) = stack.pop() {
            if wired && exterior_c[i] > 0.0 {
                wired_reached = true;
            }
            for a in region.adj(i) {
                if a.local == OUTSIDE {
                    continue;
                }
                let j = a.local as usize;
                if unknown_of[j] != OUTSIDE && !anchored[j] {
                    anchored[j] = true;
                    stack.push(j);
                }
            }
        }
        if wired && wired_reached {
            // The glued vertex connects every boundary vertex.
            for i in 0..n {
                if unknown_of[i] != OUTSIDE && exterior_c[i] > 0.0 && !anchored[i] {
                    anchored[i] = true;
                    stack.push(i);
                }
            }
            if stack.is_empty() {
                break;
            }
            continue;
        }
        break;
    }
    if let Some(i) = (0..n).find(|&i| unknown_of[i] != OUTSIDE && !anchored[i]) {
        return Err(Error::Singular(format!(
            "component of local vertex {i} is not connected to the absorbing set"
        )));
    }
    Ok(())
}

/// Convergence record of a limit over growing regions.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StabilizationCertificate {
    pub boundary: Boundary,
    pub inner_radius: usize,
    pub outer_radii: Vec<usize>,
    /// Max-norm change between consecutive outer radii.
    pub increments: Vec<f64>,
    pub achieved_radius: usize,
    pub final_increment: f64,
    pub tol: f64,
    pub converged: bool,
}

/// Green densities `g(x, y)` for `x` in a row region and `y` in a column set.
///
/// Stored column-major; lookups fall back to symmetry when only `g(y, x)` is stored.
#[derive(Clone, Debug)]
pub struct GreenTable {
    rows: Arc<Region>,
    kill: Vec<VertexId>,
    boundary: Boundary,
    cols: Vec<VertexId>,
    col_index: HashMap<VertexId, usize>,
    data: Vec<f64>,
    col_csum: Vec<f64>,
    certificate: Option<StabilizationCertificate>,
}

/// Regions above this size only support per-column tables.
pub const FULL_TABLE_CAP: usize = 5000;

impl GreenTable {
    pub fn rows(&self) -> &Region {
        &self.rows
    }

    pub fn rows_arc(&self) -> Arc<Region> {
        self.rows.clone()
    }

    pub fn kill(&self) -> &[VertexId] {
        &self.kill
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn cols(&self) -> &[VertexId] {
        &self.cols
    }

    pub fn certificate(&self) -> Option<&StabilizationCertificate> {
        self.certificate.as_ref()
    }

    pub fn is_converged(&self) -> bool {
        self.certificate.as_ref().is_none_or(|c| c.converged)
    }

    /// `c_y` of a column vertex.
    pub fn csum(&self, y: VertexId) -> Option<f64> {
        self.col_index.get(&y).map(|&j| self.col_csum[j])
    }

    /// Column `g(·, y)` over the row region.
    pub fn column(&self, y: VertexId) -> Option<&[f64]> {
        let n = self.rows.len();
        self.col_index.get(&y).map(|&j| &self.data[j * n..(j + 1) * n])
    }

    pub fn get(&self, x: VertexId, y: VertexId) -> Option<f64> {
        let killed = |v: VertexId| self.kill.contains(&v);
        if let (Some(&j), Some(i)) = (self.col_index.get(&y), self.rows.local(x)) {
            return Some(self.data[j * self.rows.len() + i]);
        }
        if let (Some(&j), Some(i)) = (self.col_index.get(&x), self.rows.local(y)) {
            return Some(self.data[j * self.rows.len() + i]);
        }
        if (killed(x) && (self.rows.contains(y) || self.col_index.contains_key(&y)))
            || (killed(y) && (self.rows.contains(x) || self.col_index.contains_key(&x)))
        {
            return Some(0.0);
        }
        None
    }

    /// Largest `|g(x,y) − g(y,x)|` over stored pairs where both orders are stored.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, &y) in self.cols.iter().enumerate() {
            let Some(iy) = self.rows.local(y) else { continue };
            for (k, &x) in self.cols.iter().enumerate().skip(j + 1) {
                let Some(ix) = self.rows.local(x) else { continue };
                let a = self.data[j * self.rows.len() + ix];
                let b = self.data[k * self.rows.len() + iy];
                worst = worst.max((a - b).abs() / (1.0 + a.abs()));
            }
        }
        worst
    }

    fn with_certificate(mut self, c: StabilizationCertificate) -> Self {
        self.certificate = Some(c);
        self
    }
}

/// Green density columns `g(·, y)` for `y ∈ cols`, solved on `solve_region`
/// killed at `kill`, reported on `rows` (a subset of `solve_region`).
pub fn green_columns_on(
    solve_region: &Region,
    kill: &[VertexId],
    cols: &[VertexId],
    rows: Arc<Region>,
    boundary: Boundary,
) -> Result<GreenTable> {
    if kill.is_empty() && matches!(boundary, Boundary::Free | Boundary::Wired | Boundary::Midpoint) {
        return Err(Error::Singular("a kill set is required unless the exterior is absorbing".into()));
    }
    let fixed: Vec<usize> = kill.iter().filter_map(|&v| solve_region.local(v)).collect();
    let cols: Vec<VertexId> = cols.iter().copied().filter(|v| !kill.contains(v)).collect();
    let rhs: Vec<ColumnRhs> = cols
        .iter()
        .map(|&y| {
            let i = solve_region
                .local(y)
                .ok_or_else(|| Error::RegionTooSmall(format!("column vertex {y} outside the solve region")))?;
            Ok(ColumnRhs { fixed: Vec::new(), source: vec![(i, -1.0)] })
        })
        .collect::<Result<_>>()?;
    let row_idx: Vec<usize> = rows
        .vertices()
        .iter()
        .map(|&v| {
            solve_region
                .local(v)
                .ok_or_else(|| Error::RegionTooSmall(format!("row vertex {v} outside the solve region")))
        })
        .collect::<Result<_>>()?;
    let solved = solve_with_boundary(solve_region, &fixed, boundary, &rhs, Some(&row_idx))?;
    let col_csum = cols.iter().map(|&y| solve_region.csum(solve_region.local(y).unwrap())).collect();
    let mut data = Vec::with_capacity(cols.len() * rows.len());
    for c in solved {
        data.extend(c);
    }
    Ok(GreenTable {
        rows,
        kill: kill.to_vec(),
        boundary,
        col_index: cols.iter().enumerate().map(|(j, &v)| (v, j)).collect(),
        cols,
        data,
        col_csum,
        certificate: None,
    })
}

/// Columns `g(·, y)` over the whole region.
pub fn green_columns(
    region: &Arc<Region>,
    kill: &[VertexId],
    cols: &[VertexId],
    boundary: Boundary,
) -> Result<GreenTable> {
    green_columns_on(region, kill, cols, region.clone(), boundary)
}

/// Full table over `(region ∖ kill)²`.
pub fn killed_green_table(region: &Arc<Region>, kill: &[VertexId], boundary: Boundary) -> Result<GreenTable> {
    if region.len() > FULL_TABLE_CAP {
        return Err(Error::TooLarge(format!(
            "full Green tables are capped at {FULL_TABLE_CAP} vertices; use green_columns"
        )));
    }
    let cols: Vec<VertexId> = region.vertices().iter().copied().filter(|v| !kill.contains(v)).collect();
    green_columns(region, kill, &cols, boundary)
}

/// Green table on `B(o, radii[0])` killed at `o`, refined over the outer radii
/// `radii[1..]` until consecutive tables differ by at most `tol`.
///
/// A table that never reaches `tol` is still returned, with `converged == false`
/// in its certificate.
pub fn stabilized_green_o(
    net: &Network,
    o: VertexId,
    radii: &[usize],
    tol: f64,
    boundary: Boundary,
) -> Result<GreenTable> {
    check_radii(radii)?;
    let inner = Arc::new(Region::ball_around(net, o, radii[0]));
    let cols: Vec<VertexId> = inner.vertices().to_vec();
    stabilize(net, o, &radii[1..], tol, boundary, inner, &cols, radii[0])
}

fn check_radii(radii: &[usize]) -> Result<()> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("radii must be strictly increasing with at least 2 entries".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stabilize(
    net: &Network,
    o: VertexId,
    outer: &[usize],
    tol: f64,
    boundary: Boundary,
    rows: Arc<Region>,
    cols: &[VertexId],
    inner_radius: usize,
) -> Result<GreenTable> {
    let mut prev: Option<GreenTable> = None;
    let mut increments = Vec::new();
    let mut used = Vec::new();
    for &r in outer {
        let region = Region::ball_around(net, o, r);
        let t = green_columns_on(&region, &[o], cols, rows.clone(), boundary)?;
        used.push(r);
        if let Some(p) = &prev {
            let inc = p.data.iter().zip(&t.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            increments.push(inc);
            if inc <= tol {
                prev = Some(t);
                break;
            }
        }
        prev = Some(t);
    }
    let final_increment = increments.last().copied().unwrap_or(f64::INFINITY);
    let cert = StabilizationCertificate {
        boundary,
        inner_radius,
        achieved_radius: *used.last().unwrap(),
        outer_radii: used,
        final_increment,
        converged: final_increment <= tol,
        increments,
        tol,
    };
    Ok(prev.unwrap().with_certificate(cert))
}

/// Values of a function on a region, with the convergence record of its construction.
#[derive(Clone, Debug)]
pub struct CertifiedFunction {
    pub region: Arc<Region>,
    pub values: Vec<f64>,
    pub certificate: StabilizationCertificate,
}

impl CertifiedFunction {
    pub fn get(&self, v: VertexId) -> Option<f64> {
        self.region.local(v).map(|i| self.values[i])
    }
}

/// The dipole `g_o(·, y)` on `B(o, radii[0])`, stabilized over `radii[1..]`.
pub fn dipole(
    net: &Network,
    o: VertexId,
    y: VertexId,
    radii: &[usize],
    tol: f64,
    boundary: Boundary,
) -> Result<CertifiedFunction> {
    if y == o {
        return Err(Error::Invalid("dipole needs y ≠ o".into()));
    }
    check_radii(radii)?;
    let rows = Arc::new(Region::ball_around(net, o, radii[0]));
    let t = stabilize(net, o, &radii[1..], tol, boundary, rows.clone(), &[y], radii[0])?;
    Ok(CertifiedFunction {
        values: t.column(y).unwrap().to_vec(),
        certificate: t.certificate.clone().unwrap(),
        region: rows,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CertifiedValue {
    pub value: f64,
    pub certificate: StabilizationCertificate,
}

/// `R_eff(x ↔ y) = g_x(y, y)`, computed on balls around `x` of the given radii.
pub fn effective_resistance(
    net: &Network,
    x: VertexId,
    y: VertexId,
    radii: &[usize],
    tol: f64,
    boundary: Boundary,
) -> Result<CertifiedValue> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("radii must be strictly increasing".into()));
    }
    if x == y {
        let certificate = StabilizationCertificate {
            boundary,
            inner_radius: 0,
            outer_radii: vec![],
            increments: vec![],
            achieved_radius: 0,
            final_increment: 0.0,
            tol,
            converged: true,
        };
        return Ok(CertifiedValue { value: 0.0, certificate });
    }
    let mut values: Vec<f64> = Vec::new();
    let mut used = Vec::new();
    let mut increments = Vec::new();
    for &r in radii {
        let region = Arc::new(Region::ball_around(net, x, r));
        if !region.contains(y) {
            continue;
        }
        let t = green_columns(&region, &[x], &[y], boundary)?;
        let v = t.get(y, y).unwrap();
        if let Some(&p) = values.last() {
            let inc = (v - p).abs();
            increments.push(inc);
            values.push(v);
            used.push(r);
            if inc <= tol {
                break;
            }
        } else {
            values.push(v);
            used.push(r);
        }
    }
    let value = *values.last().ok_or_else(|| Error::RegionTooSmall("no radius reaches y".into()))?;
    let final_increment = if net.is_finite() && used.len() == 1 {
        0.0
    } else {
        increments.last().copied().unwrap_or(f64::INFINITY)
    };
    Ok(CertifiedValue {
        value,
        certificate: StabilizationCertificate {
            boundary,
            inner_radius: 0,
            achieved_radius: *used.last().unwrap(),
            outer_radii: used,
            increments,
            final_increment,
            tol,
            converged: final_increment <= tol,
        },
    })
}

/// All-pairs effective resistances among a vertex set, from one grounded table.
///
/// Uses `R(a, b) = g(a,a) + g(b,b) − 2 g(a,b)` with `g` killed at the root of
/// the region. With the free boundary the values are the resistances of the
/// finite region, which dominate those of the whole network.
pub struct ResistanceOracle {
    table: GreenTable,
    ground: VertexId,
}

impl ResistanceOracle {
    pub fn new(region: &Arc<Region>, vertices: &[VertexId], boundary: Boundary) -> Result<Self> {
        let ground = region.center();
        let table = green_columns_on(region, &[ground], vertices, region.clone(), boundary)?;
        Ok(ResistanceOracle { table, ground })
    }

    pub fn resistance(&self, a: VertexId, b: VertexId) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        let g = |x: VertexId, y: VertexId| -> Option<f64> {
            if x == self.ground || y == self.ground {
                Some(0.0)
            } else {
                self.table.get(x, y)
            }
        };
        Some(g(a, a)? + g(b, b)? - 2.0 * g(a, b)?)
    }
}
