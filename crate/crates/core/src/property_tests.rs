use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::green::{self, Boundary, DirichletProblem, ResistanceOracle};
use crate::hmeasure::{self, DetColumn};
use crate::hprocess::{self, HSim, Mode};
use crate::minimax::{self, Matrix};
use crate::network::{laplacian_apply, Network, NetworkSpec, Region, VertexId};
use crate::potential::{self, Potential, ValidationOptions};
use crate::{stats, ust};

fn z() -> &'static Network {
    static NET: OnceLock<Network> = OnceLock::new();
    NET.get_or_init(|| Network::build(NetworkSpec::integer_line()).unwrap())
}

fn z2() -> &'static Network {
    static NET: OnceLock<Network> = OnceLock::new();
    NET.get_or_init(|| Network::build(NetworkSpec::lattice(2)).unwrap())
}

fn h_z2() -> &'static Potential {
    static H: OnceLock<Potential> = OnceLock::new();
    H.get_or_init(|| {
        let net = z2();
        let ex = potential::ball_exhaustion(net, &[10, 100, 200, 400]);
        potential::potential_from_exhaustion(net, &ex, 1e-7).unwrap().potential
    })
}

fn v2(x: i32, y: i32) -> VertexId {
    z2().vertex(&format!("({x},{y})")).unwrap()
}

fn zk(k: i64) -> VertexId {
    z().vertex(&k.to_string()).unwrap()
}

/// Connected network on `n` vertices: a random spanning tree plus extra edges.
fn random_network(n: usize, parents: &[usize], extra: &[(usize, usize)], cs: &[f64]) -> Network {
    let mut edges: Vec<(String, String, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut k = 0;
    for i in 1..n {
        let p = parents[i - 1] % i;
        seen.insert((p, i));
        edges.push((format!("v{p}"), format!("v{i}"), cs[k % cs.len()]));
        k += 1;
    }
    for &(a, b) in extra {
        let (a, b) = (a % n, b % n);
        let key = (a.min(b), a.max(b));
        if a != b && seen.insert(key) {
            edges.push((format!("v{}", key.0), format!("v{}", key.1), cs[k % cs.len()]));
            k += 1;
        }
    }
    let refs: Vec<(&str, &str, f64)> = edges.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), *c)).collect();
    Network::build(NetworkSpec::explicit(&refs).with_root("v0")).unwrap()
}

fn arb_network() -> impl Strategy<Value = Network> {
    (3usize..=12)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(0usize..64, n - 1),
                prop::collection::vec((0usize..64, 0usize..64), 0..8),
                prop::collection::vec(0.2f64..5.0, 1..24),
            )
        })
        .prop_map(|(n, p, e, c)| random_network(n, &p, &e, &c))
}

fn whole(net: &Network) -> Arc<Region> {
    Arc::new(Region::ball(net, net.vertex_count().unwrap()))
}

fn lattice_family() -> Vec<Network> {
    vec![
        Network::build(NetworkSpec::integer_line()).unwrap(),
        Network::build(NetworkSpec::half_line()).unwrap(),
        Network::build(NetworkSpec::lattice(2)).unwrap(),
        Network::build(NetworkSpec::lattice(3)).unwrap(),
        Network::build(NetworkSpec::regular_tree(2)).unwrap(),
        Network::build(NetworkSpec::phi_product(3, 5)).unwrap(),
    ]
}

fn hash_value(seed: u64, v: VertexId) -> f64 {
    let x = crate::rng::derive_seed(seed, v.0 as u64);
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conductances_are_symmetric(which in 0usize..6, r in 0usize..5, pick in 0usize..1000) {
        let nets = lattice_family();
        let net = &nets[which];
        let ball = Region::ball(net, r);
        let x = ball.vertex(pick % ball.len());
        for (y, c) in net.neighbors(x) {
            let back = net.neighbors(y).into_iter().find(|&(w, _)| w == x).map(|(_, c)| c);
            prop_assert_eq!(back, Some(c));
            prop_assert_eq!(net.conductance(y, x), c);
        }
    }

    #[test]
    fn explicit_conductances_are_symmetric(net in arb_network()) {
        for &x in whole(&net).vertices() {
            for (y, c) in net.neighbors(x) {
                prop_assert_eq!(net.conductance(y, x), c);
            }
        }
    }

    #[test]
    fn laplacian_is_linear(which in 0usize..6, r in 1usize..5, s1 in any::<u64>(), s2 in any::<u64>(),
                           a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let nets = lattice_family();
        let net = &nets[which];
        let ball = Region::ball(net, r);
        let f = |v: VertexId| Some(hash_value(s1, v));
        let g = |v: VertexId| Some(hash_value(s2, v));
        for v in ball.interior_vertices() {
            let lhs = laplacian_apply(net, |x| Some(a * f(x)? + b * g(x)?), v).unwrap();
            let rhs = a * laplacian_apply(net, f, v).unwrap() + b * laplacian_apply(net, g, v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + net.csum(v) * 6.0));
        }
    }

    #[test]
    fn balls_are_nested(which in 0usize..6, r in 0usize..6) {
        let nets = lattice_family();
        let net = &nets[which];
        let small = Region::ball(net, r);
        let big = Region::ball(net, r + 1);
        prop_assert!(small.vertices().iter().all(|&v| big.contains(v)));
        let inner: std::collections::HashSet<VertexId> = small.interior_vertices().into_iter().collect();
        prop_assert!(big.boundary_vertices().iter().all(|v| !inner.contains(v)));
    }

    #[test]
    fn dipole_laplacian(net in arb_network(), pick in 1usize..64) {
        let n = net.vertex_count().unwrap();
        let o = net.root();
        let y = whole(&net).vertex(1 + pick % (n - 1));
        let d = green::dipole(&net, o, y, &[n, n + 1], 1e-12, Boundary::Free).unwrap();
        for &v in d.region.vertices() {
            let lap = laplacian_apply(&net, |x| d.get(x), v).unwrap();
            let target = if v == o { 1.0 } else if v == y { -1.0 } else { 0.0 };
            prop_assert!((lap - target).abs() <= 1e-8, "Δ at {} is {lap}", net.label(v));
        }
    }

    #[test]
    fn killed_table_is_symmetric(net in arb_network(), kill_pick in 0usize..64) {
        let region = whole(&net);
        let k = region.vertex(kill_pick % region.len());
        for b in [Boundary::Free, Boundary::Absorbing] {
            let t = green::killed_green_table(&region, &[k], b).unwrap();
            prop_assert!(t.max_asymmetry() <= 1e-9);
        }
    }

    #[test]
    fn resistance_is_a_metric(net in arb_network()) {
        let region = whole(&net);
        let vs = region.vertices().to_vec();
        let oracle = ResistanceOracle::new(&region, &vs, Boundary::Free).unwrap();
        let r = |a, b| oracle.resistance(a, b).unwrap();
        for &a in &vs {
            for &b in &vs {
                prop_assert!((r(a, b) - r(b, a)).abs() <= 1e-8);
                prop_assert!(a == b || r(a, b) > 0.0);
                for &c in &vs {
                    prop_assert!(r(a, c) <= r(a, b) + r(b, c) + 1e-8);
                }
            }
        }
    }

    #[test]
    fn determinant_matches_direct_solve(net in arb_network(), picks in prop::collection::vec(0usize..64, 1..5),
                                        start in 0usize..64) {
        let region = whole(&net);
        let root = net.root();
        let mut a: Vec<VertexId> = picks.iter().map(|&i| region.vertex(i % region.len())).collect();
        a.push(root);
        a.sort();
        a.dedup();
        prop_assume!(a.len() >= 2);
        let v = region.vertex(start % region.len());
        let direct = hmeasure::harmonic_measure_exact(&net, &a, v, &region, Boundary::Free).unwrap();
        let cols: Vec<VertexId> = region.vertices().iter().copied().filter(|&x| x != root).collect();
        let t = green::green_columns(&region, &[root], &cols, Boundary::Free).unwrap();
        prop_assume!(v != root);
        let det = hmeasure::harmonic_measure_det(&t, DetColumn::Vertex(v), &a).unwrap();
        for (x, y) in det.weights.iter().zip(&direct.weights) {
            prop_assert!((x - y).abs() <= 1e-9, "det {x} direct {y}");
        }
    }

    #[test]
    fn harmonic_measure_ignores_order(net in arb_network(), picks in prop::collection::vec(0usize..64, 2..6),
                                      start in 0usize..64, shuffle in any::<u64>()) {
        let region = whole(&net);
        let root = net.root();
        let mut a: Vec<VertexId> = picks.iter().map(|&i| region.vertex(i % region.len())).collect();
        a.push(root);
        a.sort();
        a.dedup();
        prop_assume!(a.len() >= 2);
        let mut b = a.clone();
        b.sort_by_key(|v| crate::rng::derive_seed(shuffle, v.0 as u64));
        b.reverse();
        let v = region.vertex(start % region.len());
        let x = hmeasure::harmonic_measure_exact(&net, &a, v, &region, Boundary::Free).unwrap();
        let y = hmeasure::harmonic_measure_exact(&net, &b, v, &region, Boundary::Free).unwrap();
        prop_assert_eq!(x, y);
        if v != root {
            let cols: Vec<VertexId> = region.vertices().iter().copied().filter(|&x| x != root).collect();
            let t = green::green_columns(&region, &[root], &cols, Boundary::Free).unwrap();
            let x = hmeasure::harmonic_measure_det(&t, DetColumn::Vertex(v), &a).unwrap();
            let y = hmeasure::harmonic_measure_det(&t, DetColumn::Vertex(v), &b).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn killed_table_grows_with_the_region(r1 in 3usize..14, dr in 1usize..10) {
        let net = z2();
        let o = net.root();
        let rows = Arc::new(Region::ball(net, 3));
        let cols: Vec<VertexId> = rows.vertices().iter().copied().filter(|&v| v != o).collect();
        let small = Region::ball(net, r1);
        let big = Region::ball(net, r1 + dr);
        let a = green::green_columns_on(&small, &[o], &cols, rows.clone(), Boundary::Absorbing).unwrap();
        let b = green::green_columns_on(&big, &[o], &cols, rows.clone(), Boundary::Absorbing).unwrap();
        for &x in rows.vertices() {
            for &y in &cols {
                prop_assert!(b.get(x, y).unwrap() >= a.get(x, y).unwrap() - 1e-10);
            }
        }
    }

    #[test]
    fn mixtures_of_potentials_validate(alpha in 0.0f64..=1.0, lambda in 1.5f64..4.0) {
        let net = z();
        let region = Arc::new(Region::ball(net, 20));
        let sym = potential::potential_from_exhaustion(net, &potential::ball_exhaustion(net, &[20, 40, 80]), 1e-9)
            .unwrap()
            .potential
            .restrict(region.clone())
            .unwrap();
        let ns = [20usize, 40, 80, 160];
        let asym = potential::potential_from_exhaustion(net, &potential::asymmetric_line_exhaustion(net, lambda, &ns).unwrap(), 1e-9)
            .unwrap()
            .potential
            .restrict(region.clone())
            .unwrap();
        let mixed = Potential::mix(&[(alpha, &sym), (1.0 - alpha, &asym)]).unwrap();
        let check = Region::ball(net, 19);
        let opts = ValidationOptions { all_edges: false, ..ValidationOptions::default() };
        let rs = potential::validate_potential(net, &sym, &check, &opts);
        let ra = potential::validate_potential(net, &asym, &check, &opts);
        let rm = potential::validate_potential(net, &mixed, &check, &opts);
        prop_assert!(rs.passed && ra.passed && rm.passed, "{:?}", rm.failures);
        prop_assert!(rm.harmonic_residual <= rs.harmonic_residual.max(ra.harmonic_residual) + 1e-12);
        prop_assert!(rm.root_residual <= rs.root_residual.max(ra.root_residual) + 1e-12);
    }

    #[test]
    fn asymmetric_exhaustions_give_line_mixtures(lambda in 1.0f64..6.0) {
        let net = z();
        let ns = [20usize, 40, 80, 160];
        let ex = potential::asymmetric_line_exhaustion(net, lambda, &ns).unwrap();
        let run = potential::potential_from_exhaustion(net, &ex, 1e-12).unwrap();
        let (alpha, res) = potential::fit_line_mixture(net, &run.potential);
        prop_assert!((0.0..=1.0).contains(&alpha));
        prop_assert!(res <= 1e-6, "residual {res}");
    }

    #[test]
    fn lp_duality_on_random_games(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let data: Vec<f64> = (0..rows * cols)
            .map(|k| hash_value(seed, VertexId(k as u32)) * 3.0)
            .collect();
        let a = Matrix::new(rows, cols, data).unwrap();
        let s = minimax::solve_zero_sum(&a).unwrap();
        prop_assert_eq!(s.status, minimax::LpStatus::Optimal);
        prop_assert!(s.duality_gap <= 1e-8 * (1.0 + s.value.abs()));
        for p in [&s.row_strategy, &s.col_strategy] {
            prop_assert!(p.iter().all(|&x| x >= -1e-10));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
        let fp = minimax::fictitious_play(&a, 1e-3, 200_000);
        prop_assert!(fp.lower <= s.value + 1e-9 && s.value <= fp.upper + 1e-9);
        prop_assert!((fp.value - s.value).abs() <= 1e-2);
    }
}

#[test]
fn weak_convergence_on_the_line() {
    let net = z();
    let alpha = 2.0 / 3.0;
    let limit = |k: i64| if k >= 0 { alpha * k as f64 } else { (1.0 - alpha) * (-k) as f64 };
    let region = Arc::new(Region::ball(net, 10));
    let h = Potential::from_fn(net, region, |v| limit(net.coords(v)[0] as i64)).unwrap();
    let paths: Vec<Vec<i64>> = vec![vec![1, 2, 3], vec![2, 1, 2, 3, 4], vec![-1, -2, -1, -2], vec![3, 2, 1]];
    let mut errors = Vec::new();
    for n in [10usize, 1_000, 1_000_000] {
        let d = &potential::asymmetric_line_exhaustion(net, 2.0, &[n]).unwrap()[0];
        let mut err = 0.0f64;
        for p in &paths {
            let path: Vec<VertexId> = p.iter().map(|&k| zk(k)).collect();
            let exact = potential::exit_conditioned_path_probability(net, d, &path).unwrap();
            err = err.max((exact - potential::h_path_probability(net, &h, &path).unwrap()).abs());
        }
        errors.push(err);
    }
    assert!(errors[2] <= 1e-6, "{errors:?}");

    let ns = [10usize, 100, 1000, 100_000, 1_000_000];
    let ex = potential::asymmetric_line_exhaustion(net, 2.0, &ns).unwrap();
    let run = potential::potential_from_exhaustion(net, &ex, 0.0).unwrap();
    let d0 = &ex[0];
    let last = run.sequence.last().unwrap();
    let dev = d0
        .vertices()
        .iter()
        .zip(last)
        .map(|(&v, x)| (x - limit(net.coords(v)[0] as i64)).abs())
        .fold(0.0, f64::max);
    assert!(dev <= 1e-5, "{dev}");
}

#[test]
fn weak_convergence_on_the_plane() {
    let net = z2();
    let exact: HashMap<VertexId, f64> =
        [(v2(1, 0), 0.25), (v2(1, 1), 1.0 / PI), (v2(2, 0), 1.0 - 2.0 / PI), (v2(0, 1), 0.25)].into();
    let h = |v: VertexId| exact[&v];
    let paths = [vec![v2(1, 0), v2(2, 0)], vec![v2(1, 0), v2(1, 1)], vec![v2(1, 0), v2(1, 1), v2(0, 1)], vec![
        v2(1, 0),
        v2(2, 0),
        v2(1, 0),
        v2(1, 1),
    ]];
    let mut errors = Vec::new();
    for n in [8usize, 32, 128, 400] {
        let d = Region::ball(net, n);
        let mut err = 0.0f64;
        for p in &paths {
            let cond = potential::exit_conditioned_path_probability(net, &d, p).unwrap();
            let mut walk = 1.0;
            for w in p.windows(2) {
                walk *= net.conductance(w[0], w[1]) / net.csum(w[0]);
            }
            let target = walk * h(*p.last().unwrap()) / h(p[0]);
            err = err.max((cond - target).abs());
        }
        errors.push(err);
    }
    eprintln!("plane weak convergence {errors:?}");
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
    assert!(*errors.last().unwrap() <= 1e-6, "{errors:?}");
}

#[test]
fn dipole_mixtures_converge_to_the_potential() {
    let net = z2();
    let o = net.root();
    let c0 = net.csum(o);
    let exact: HashMap<VertexId, f64> = [(v2(1, 0), 0.25), (v2(1, 1), 1.0 / PI), (v2(2, 0), 1.0 - 2.0 / PI)].into();
    let paths = [vec![o, v2(1, 0)], vec![o, v2(1, 0), v2(1, 1)], vec![o, v2(1, 0), v2(2, 0)]];
    let mut errors = Vec::new();
    for r in [4usize, 8, 16, 32] {
        let big = 8 * r;
        let ball = Arc::new(Region::ball(net, big));
        let game_table = green::green_columns(
            &Arc::new(Region::ball(net, 4 * r)),
            &[o],
            &Region::ball(net, 4 * r).sphere(r),
            Boundary::Midpoint,
        )
        .unwrap();
        let eta = if r <= 8 {
            let payoff = minimax::payoff_matrix(&game_table, r, 2 * r).unwrap();
            let sol = minimax::solve_zero_sum(&payoff.matrix).unwrap();
            payoff.inner.iter().copied().zip(sol.col_strategy).collect::<Vec<_>>()
        } else {
            let s = ball.sphere(r);
            let w = 1.0 / s.len() as f64;
            s.into_iter().map(|v| (v, w)).collect()
        };
        let mut psi = Vec::new();
        for b in [Boundary::Free, Boundary::Wired] {
            let mut prob = DirichletProblem::new(&ball, b).absorb(o, 0.0);
            for &(v, w) in &eta {
                prob = prob.source(v, -w);
            }
            psi.push(green::dirichlet_solve(net, &prob).unwrap());
        }
        let psi_at = |v: VertexId| {
            let i = ball.local(v).unwrap();
            0.5 * (psi[0][i] + psi[1][i])
        };
        let mut err = 0.0f64;
        for p in &paths {
            let mut walk = 1.0;
            for w in p.windows(2) {
                walk *= net.conductance(w[0], w[1]) / net.csum(w[0]);
            }
            let end = *p.last().unwrap();
            err = err.max(walk * c0 * (psi_at(end) - exact[&end]).abs());
        }
        errors.push(err);
    }
    eprintln!("dipole mixture convergence {errors:?}");
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
    assert!(*errors.last().unwrap() <= 1e-6, "{errors:?}");
}

#[test]
fn kernels_are_normalized() {
    let net = z2();
    let region = Arc::new(Region::ball(net, 30));
    let values = potential::exhaustion_step(net, &region).unwrap();
    let h = Potential::from_values(net.root(), region.clone(), values).unwrap();
    let mut worst = 0.0f64;
    for x in Region::ball(net, 29).vertices() {
        if *x == net.root() {
            continue;
        }
        let k = hprocess::step_kernel(net, &h, *x).unwrap();
        worst = worst.max((k.iter().map(|p| p.1).sum::<f64>() - 1.0).abs());
    }
    assert!(worst <= 1e-12, "{worst}");

    let tree = Network::build(NetworkSpec::regular_tree(2)).unwrap();
    let t = potential::tree_potential_to_infinity(&tree, &potential::doubling_schedule(2), 8, 8).unwrap();
    let inner = Region::ball(&tree, t.potential.region().radius().unwrap() - 1);
    for &x in inner.vertices() {
        if x == tree.root() || t.potential.at(x).unwrap() <= 0.0 {
            continue;
        }
        let k = hprocess::step_kernel(&tree, &t.potential, x).unwrap();
        assert!((k.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn conditional_tail_is_bounded() {
    let net = z2();
    let h = h_z2();
    let region = Region::ball(net, 40);
    let mut checked = 0;
    for (x, y) in [(3, 0), (2, 2), (4, 1), (0, 5), (3, 3)] {
        let v = v2(x, y);
        let hv = h.at(v).unwrap();
        for j in 1..net.dist(v) {
            for m in [hv * 0.5, hv, hv * 1.5, hv * 3.0] {
                let tail = hprocess::conditional_tail(net, h, v, m, j, &region).unwrap();
                assert!(tail <= hv / m + 1e-9, "v={x},{y} j={j} M={m}: {tail} > {}", hv / m);
                checked += 1;
            }
        }
    }
    assert!(checked > 40);
}

fn phi_net() -> Network {
    Network::build(NetworkSpec::phi_product(3, 6)).unwrap()
}

#[test]
fn phi_kernel_identity() {
    for (d, rho) in [(3usize, 6usize), (4, 4), (5, 3)] {
        let net = Network::build(NetworkSpec::phi_product(d, rho)).unwrap();
        let region = Region::ball(&net, rho);
        let mut dev = 0.0f64;
        for &x in region.vertices() {
            if x == net.root() {
                continue;
            }
            let cx = net.csum(x);
            for (y, c) in net.neighbors(x) {
                let want = net.phi(y).unwrap() / (2.0 * d as f64 * net.phi(x).unwrap());
                dev = dev.max((c / cx - want).abs());
            }
        }
        assert!(dev <= 1e-12, "d={d}: {dev}");
    }
}

#[test]
fn phi_h_process_avoids_the_root() {
    let net = phi_net();
    let d = 3.0;
    let rho = net.truncation_radius().unwrap();
    let region = Arc::new(Region::ball(&net, rho));
    let root = net.root();
    let phi = |v: VertexId| net.phi(v).unwrap_or(0.0);
    let e1 = net.neighbors(root)[0].0;
    let g00 = 1.0 / (2.0 * d * (1.0 - phi(e1)));
    let h = Potential::from_fn(&net, region.clone(), |v| {
        let p = net.phi(v).unwrap_or(1.0);
        g00 * (1.0 - p) / p
    })
    .unwrap();
    let sim = HSim::new(&net, &h, Mode::Exit(region)).unwrap();
    let sources: Vec<VertexId> = Region::ball(&net, 2).vertices().iter().copied().filter(|&v| v != root).collect();
    let counts = sim.simulate_fold(
        17,
        20_000,
        BTreeMap::<(VertexId, VertexId), u64>::new,
        |acc, p| {
            for w in p.vertices.windows(2) {
                if sources.contains(&w[0]) {
                    *acc.entry((w[0], w[1])).or_default() += 1;
                }
            }
        },
        |a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
        },
    );
    let mut groups = Vec::new();
    let mut total = 0;
    for &x in &sources {
        let nbrs = net.neighbors(x);
        let probs: Vec<f64> = nbrs.iter().map(|&(y, _)| (1.0 - phi(y)) / (2.0 * d * (1.0 - phi(x)))).collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let observed: Vec<u64> = nbrs.iter().map(|&(y, _)| counts.get(&(x, y)).copied().unwrap_or(0)).collect();
        for (o, (y, _)) in observed.iter().zip(&nbrs) {
            if *y == root {
                assert_eq!(*o, 0);
            }
        }
        total += observed.iter().sum::<u64>();
        groups.push((observed, probs));
    }
    assert!(total > 20_000, "{total}");
    let fit = stats::g_test_grouped(&groups);
    assert!(fit.p_value > 0.001, "{fit:?}");
}

/// Pearson homogeneity test of two count vectors over the same categories.
fn homogeneity_p_value(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    let mut k = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        k += 1;
        for (obs, tot) in [(x as f64, na), (y as f64, nb)] {
            let e = tot * col / n;
            stat += (obs - e).powi(2) / e;
        }
    }
    1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn wilson_ignores_the_start_order() {
    let net = Network::build(NetworkSpec::explicit(&[("1", "2", 1.0), ("1", "3", 2.0), ("2", "3", 3.0)])).unwrap();
    let region = Region::ball(&net, 3);
    let bfs = ust::bfs_order(&region);
    let mut rev = bfs.clone();
    rev.reverse();
    let exact = ust::tree_prob_enumerate(&net).unwrap();
    let tally = |order: &[VertexId], seed: u64| {
        let mut counts = vec![0u64; exact.trees.len()];
        for t in ust::wilson_samples(&net, &region, order, seed, 100_000) {
            let i = exact.trees.iter().position(|e| e.0 == t).expect("sampled a spanning tree");
            counts[i] += 1;
        }
        counts
    };
    let a = tally(&bfs, 1);
    let b = tally(&rev, 2);
    let p = homogeneity_p_value(&a, &b);
    assert!(p > 0.01, "{a:?} vs {b:?}: p = {p}");
}

#[test]
fn sampled_trees_are_valid() {
    let net = z2();
    let region = Region::ball(net, 6);
    for seed in 0..20 {
        ust::wilson_ust(net, &region, seed).unwrap().validate(net).unwrap();
    }
    let rng = random_network(10, &[0, 1, 1, 2, 3, 0, 5, 6, 2], &[(3, 7), (1, 9), (4, 8)], &[1.0, 2.5, 0.3]);
    let region = whole(&rng);
    for seed in 0..20 {
        ust::wilson_ust(&rng, &region, seed).unwrap().validate(&rng).unwrap();
    }
}

#[test]
fn loop_erasure_preserves_net_crossings() {
    let grid = Region::ball(z2(), 3);
    let report = ust::crossing_check(z2(), &grid, v2(0, 0), &grid.boundary_vertices(), 20_000, 5).unwrap();
    assert!(report.max_abs_z <= 3.0 + 0.5, "{}", report.max_abs_z);
    let net = random_network(8, &[0, 0, 1, 2, 2, 4, 5], &[(3, 6), (1, 7), (0, 5)], &[1.0, 0.5, 3.0, 2.0]);
    let region = whole(&net);
    let t = region.vertex(region.len() - 1);
    let report = ust::crossing_check(&net, &region, net.root(), &[t], 20_000, 6).unwrap();
    assert!(report.max_abs_z <= 3.5, "{}", report.max_abs_z);
}

#[test]
fn mixture_of_green_columns_is_a_dipole_mixture() {
    let net = z2();
    let o = net.root();
    let (r, big_r) = (1usize, 3usize);
    let ball = Arc::new(Region::ball(net, 8));
    let mut cols = ball.sphere(r);
    cols.extend(ball.sphere(big_r));
    let t = green::green_columns(&ball, &[o], &cols, Boundary::Midpoint).unwrap();
    let payoff = minimax::payoff_matrix(&t, r, big_r).unwrap();
    let sol = minimax::solve_zero_sum(&payoff.matrix).unwrap();
    let values: Vec<f64> = ball
        .vertices()
        .iter()
        .map(|&x| payoff.outer.iter().zip(&sol.row_strategy).map(|(&w, z)| z * t.get(x, w).unwrap()).sum())
        .collect();
    let outer: std::collections::HashSet<VertexId> = payoff.outer.iter().copied().collect();
    for i in 0..ball.len() {
        let Some(lap) = ball.laplacian(&values, i) else { continue };
        let v = ball.vertex(i);
        if v == o {
            assert!((lap - 1.0).abs() <= 1e-8);
        } else if !outer.contains(&v) {
            assert!(lap.abs() <= 1e-8, "{}: {lap}", net.label(v));
        }
    }
}

#[test]
fn conductance_scaling_rescales_the_game() {
    let line = |c: f64| {
        let labels: Vec<String> = (-8..=8).map(|k: i32| k.to_string()).collect();
        let edges: Vec<(&str, &str, f64)> = labels.windows(2).map(|w| (w[0].as_str(), w[1].as_str(), c)).collect();
        Network::build(NetworkSpec::explicit(&edges).with_root("0")).unwrap()
    };
    let game = |net: &Network| {
        let ball = Arc::new(Region::ball(net, 8));
        let cols = ball.sphere(2);
        let t = green::green_columns(&ball, &[net.root()], &cols, Boundary::Free).unwrap();
        let p = minimax::payoff_matrix(&t, 2, 5).unwrap();
        let s = minimax::solve_zero_sum(&p.matrix).unwrap();
        (p, s)
    };
    let (p1, s1) = game(&line(1.0));
    for lambda in [0.5, 3.0, 7.25] {
        let (p, s) = game(&line(lambda));
        for (a, b) in p.matrix.data.iter().zip(&p1.matrix.data) {
            assert!((a - b / lambda).abs() <= 1e-12 * (1.0 + b));
        }
        assert!((s.value - s1.value / lambda).abs() <= 1e-12);
        for (a, b) in s.col_strategy.iter().zip(&s1.col_strategy) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in s.row_strategy.iter().zip(&s1.row_strategy) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
