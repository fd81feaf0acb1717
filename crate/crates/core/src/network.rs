//! Rooted weighted networks, generators, the network Laplacian and finite regions.
//!
//! A [`Network`] is a neighbor oracle over a possibly infinite graph. Vertex ids
//! are assigned in breadth-first discovery order from the root, so the ball of
//! radius `r` around the root always occupies the id prefix `0..|B_r|` and ids
//! never change as larger regions are requested.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type Coords = SmallVec<[i32; 6]>;
pub type Neighbors = SmallVec<[(VertexId, f64); 8]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SidePolicy {
    /// All of Z^d.
    Full,
    /// Z^{d-1} x N: the last coordinate is non-negative.
    Half,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEntry {
    pub u: String,
    pub v: String,
    pub c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Lattice { d: usize, side: SidePolicy },
    HalfLine,
    IntegerLine,
    /// Rooted tree in which every vertex has `branching` children.
    RegularTree { branching: usize },
    PhiProductLattice { d: usize, truncation_radius: usize },
    ExplicitEdgeList { vertices: Vec<String>, edges: Vec<EdgeEntry> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConductanceRule {
    Unit,
    /// Explicit conductances: inline edge weights for edge lists, overrides otherwise.
    Table { edges: Vec<(String, String, f64)> },
    PhiProduct,
    /// `c_xy = ratio^-min(d(x), d(y))`, distances measured from the root.
    LevelDecay { ratio: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub generator: Generator,
    pub conductance: ConductanceRule,
    pub root: String,
}

fn origin_label(d: usize) -> String {
    if d == 1 {
        "0".to_string()
    } else {
        format!("({})", vec!["0"; d].join(","))
    }
}

fn get_usize(params: &Value, key: &str) -> Result<usize> {
    let field = format!("params.{key}");
    params
        .get(key)
        .ok_or_else(|| Error::spec(&field, "missing"))?
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::spec(&field, "expected a non-negative integer"))
}

fn label_value(v: &Value, field: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Error::spec(field, "expected a vertex label (string or integer)")),
    }
}

impl NetworkSpec {
    pub fn lattice(d: usize) -> Self {
        Self::with_default_conductance(Generator::Lattice { d, side: SidePolicy::Full })
    }

    pub fn integer_line() -> Self {
        Self::with_default_conductance(Generator::IntegerLine)
    }

    pub fn half_line() -> Self {
        Self::with_default_conductance(Generator::HalfLine)
    }

    pub fn regular_tree(branching: usize) -> Self {
        Self::with_default_conductance(Generator::RegularTree { branching })
    }

    pub fn phi_product(d: usize, truncation_radius: usize) -> Self {
        Self::with_default_conductance(Generator::PhiProductLattice { d, truncation_radius })
    }

    /// Finite network from `(u, v, conductance)` triples; the root is the first vertex mentioned.
    pub fn explicit(edges: &[(&str, &str, f64)]) -> Self {
        let edges: Vec<EdgeEntry> = edges
            .iter()
            .map(|&(u, v, c)| EdgeEntry { u: u.to_string(), v: v.to_string(), c: Some(c) })
            .collect();
        let root = edges.first().map(|e| e.u.clone()).unwrap_or_default();
        NetworkSpec {
            generator: Generator::ExplicitEdgeList { vertices: Vec::new(), edges },
            conductance: ConductanceRule::Table { edges: Vec::new() },
            root,
        }
    }

    fn with_default_conductance(generator: Generator) -> Self {
        let conductance = Self::default_conductance(&generator);
        let root = Self::default_root(&generator);
        NetworkSpec { generator, conductance, root }
    }

    fn default_conductance(generator: &Generator) -> ConductanceRule {
        match generator {
            Generator::PhiProductLattice { .. } => ConductanceRule::PhiProduct,
            Generator::RegularTree { branching } => {
                ConductanceRule::LevelDecay { ratio: 2.0 * *branching as f64 }
            }
            Generator::ExplicitEdgeList { edges, .. } if edges.iter().any(|e| e.c.is_some()) => {
                ConductanceRule::Table { edges: Vec::new() }
            }
            _ => ConductanceRule::Unit,
        }
    }

    fn default_root(generator: &Generator) -> String {
        match generator {
            Generator::Lattice { d, .. } | Generator::PhiProductLattice { d, .. } => origin_label(*d),
            Generator::HalfLine | Generator::IntegerLine => "0".to_string(),
            Generator::RegularTree { .. } => "r".to_string(),
            Generator::ExplicitEdgeList { vertices, edges } => vertices
                .first()
                .cloned()
                .or_else(|| edges.first().map(|e| e.u.clone()))
                .unwrap_or_default(),
        }
    }

    pub fn with_root(mut self, root: impl Into<String>) -> Self {
        self.root = root.into();
        self
    }

    pub fn with_conductance(mut self, rule: ConductanceRule) -> Self {
        self.conductance = rule;
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::spec("$", e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::spec("$", "expected a JSON object"))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "generator" | "params" | "conductance" | "root") {
                return Err(Error::spec(key, "unknown field"));
            }
        }
        let gname = obj
            .get("generator")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::spec("generator", "missing or not a string"))?;
        let empty = json!({});
        let params = obj.get("params").unwrap_or(&empty);
        if !params.is_object() {
            return Err(Error::spec("params", "expected an object"));
        }
        let generator = match gname {
            "lattice" => {
                let d = get_usize(params, "d")?;
                let side = match params.get("side").map(|s| s.as_str()) {
                    None | Some(Some("full")) => SidePolicy::Full,
                    Some(Some("half")) => SidePolicy::Half,
                    _ => return Err(Error::spec("params.side", "expected \"full\" or \"half\"")),
                };
                Generator::Lattice { d, side }
            }
            "half-line" => Generator::HalfLine,
            "integer-line" => Generator::IntegerLine,
            "regular-tree" => Generator::RegularTree { branching: get_usize(params, "branching")? },
            "phi-product-lattice" => Generator::PhiProductLattice {
                d: get_usize(params, "d")?,
                truncation_radius: get_usize(params, "truncation_radius")?,
            },
            "explicit-edge-list" => {
                let vertices = match params.get("vertices") {
                    None => Vec::new(),
                    Some(Value::Array(a)) => a
                        .iter()
                        .enumerate()
                        .map(|(i, x)| label_value(x, &format!("params.vertices[{i}]")))
                        .collect::<Result<_>>()?,
                    Some(_) => return Err(Error::spec("params.vertices", "expected an array")),
                };
                let arr = params
                    .get("edges")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::spec("params.edges", "missing or not an array"))?;
                let mut edges = Vec::with_capacity(arr.len());
                for (i, e) in arr.iter().enumerate() {
                    let field = format!("params.edges[{i}]");
                    let t = e.as_array().filter(|t| t.len() == 2 || t.len() == 3).ok_or_else(|| {
                        Error::spec(&field, "expected [u, v] or [u, v, conductance]")
                    })?;
                    let c = match t.get(2) {
                        None => None,
                        Some(x) => Some(
                            x.as_f64().ok_or_else(|| Error::spec(&field, "conductance must be a number"))?,
                        ),
                    };
                    edges.push(EdgeEntry {
                        u: label_value(&t[0], &field)?,
                        v: label_value(&t[1], &field)?,
                        c,
                    });
                }
                Generator::ExplicitEdgeList { vertices, edges }
            }
            other => return Err(Error::spec("generator", format!("unknown generator `{other}`"))),
        };
        let conductance = match obj.get("conductance") {
            None => Self::default_conductance(&generator),
            Some(Value::String(s)) => Self::parse_rule(s, None)?,
            Some(Value::Object(m)) => {
                let rule = m
                    .get("rule")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::spec("conductance.rule", "missing or not a string"))?;
                Self::parse_rule(rule, Some(m))?
            }
            Some(_) => return Err(Error::spec("conductance", "expected a string or an object")),
        };
        let root = match obj.get("root") {
            None => Self::default_root(&generator),
            Some(r) => label_value(r, "root")?,
        };
        let spec = NetworkSpec { generator, conductance, root };
        spec.validate()?;
        Ok(spec)
    }

    fn parse_rule(rule: &str, m: Option<&serde_json::Map<String, Value>>) -> Result<ConductanceRule> {
        Ok(match rule {
            "unit" => ConductanceRule::Unit,
            "phi-product" => ConductanceRule::PhiProduct,
            "level-decay" => {
                let ratio = m
                    .and_then(|m| m.get("ratio"))
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::spec("conductance.ratio", "missing or not a number"))?;
                ConductanceRule::LevelDecay { ratio }
            }
            "table" => {
                let mut edges = Vec::new();
                if let Some(arr) = m.and_then(|m| m.get("edges")) {
                    let arr = arr
                        .as_array()
                        .ok_or_else(|| Error::spec("conductance.edges", "expected an array"))?;
                    for (i, e) in arr.iter().enumerate() {
                        let field = format!("conductance.edges[{i}]");
                        let t = e
                            .as_array()
                            .filter(|t| t.len() == 3)
                            .ok_or_else(|| Error::spec(&field, "expected [u, v, conductance]"))?;
                        let c = t[2].as_f64().ok_or_else(|| Error::spec(&field, "conductance must be a number"))?;
                        edges.push((label_value(&t[0], &field)?, label_value(&t[1], &field)?, c));
                    }
                }
                ConductanceRule::Table { edges }
            }
            other => return Err(Error::spec("conductance.rule", format!("unknown rule `{other}`"))),
        })
    }

    /// Check the type invariants that do not require building the graph.
    pub fn validate(&self) -> Result<()> {
        match &self.generator {
            Generator::Lattice { d, .. } if !(1..=5).contains(d) => {
                return Err(Error::spec("params.d", "lattice dimension must be in 1..=5"))
            }
            Generator::PhiProductLattice { d, truncation_radius } => {
                if !(1..=5).contains(d) {
                    return Err(Error::spec("params.d", "lattice dimension must be in 1..=5"));
                }
                if *truncation_radius < 1 {
                    return Err(Error::spec("params.truncation_radius", "must be at least 1"));
                }
                if self.conductance != ConductanceRule::PhiProduct {
                    return Err(Error::spec("conductance", "phi-product-lattice requires the phi-product rule"));
                }
            }
            Generator::RegularTree { branching } if *branching < 2 => {
                return Err(Error::spec("params.branching", "branching must be at least 2"))
            }
            Generator::ExplicitEdgeList { edges, .. } => {
                if edges.is_empty() {
                    return Err(Error::spec("params.edges", "edge list is empty"));
                }
                for (i, e) in edges.iter().enumerate() {
                    let field = format!("params.edges[{i}]");
                    if e.u == e.v {
                        return Err(Error::spec(&field, "self-loops are not allowed"));
                    }
                    match (e.c, &self.conductance) {
                        (Some(c), _) if !(c > 0.0 && c.is_finite()) => {
                            return Err(Error::spec(&field, "conductance must be positive and finite"))
                        }
                        (None, ConductanceRule::Table { .. }) => {
                            return Err(Error::spec(&field, "table rule needs an inline conductance"))
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
        match &self.conductance {
            ConductanceRule::PhiProduct if !matches!(self.generator, Generator::PhiProductLattice { .. }) => {
                return Err(Error::spec("conductance", "phi-product rule requires phi-product-lattice"))
            }
            ConductanceRule::LevelDecay { ratio } if !(*ratio > 0.0 && ratio.is_finite()) => {
                return Err(Error::spec("conductance.ratio", "must be positive and finite"))
            }
            ConductanceRule::Table { edges } => {
                for (i, (_, _, c)) in edges.iter().enumerate() {
                    if !(*c > 0.0 && c.is_finite()) {
                        return Err(Error::spec(format!("conductance.edges[{i}]"), "conductance must be positive"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical JSON form: every field explicit, keys sorted.
    pub fn to_value(&self) -> Value {
        let (gname, params) = match &self.generator {
            Generator::Lattice { d, side } => (
                "lattice",
                json!({"d": d, "side": match side { SidePolicy::Full => "full", SidePolicy::Half => "half" }}),
            ),
            Generator::HalfLine => ("half-line", json!({})),
            Generator::IntegerLine => ("integer-line", json!({})),
            Generator::RegularTree { branching } => ("regular-tree", json!({ "branching": branching })),
            Generator::PhiProductLattice { d, truncation_radius } => {
                ("phi-product-lattice", json!({"d": d, "truncation_radius": truncation_radius}))
            }
            Generator::ExplicitEdgeList { vertices, edges } => {
                let edges: Vec<Value> = edges
                    .iter()
                    .map(|e| match e.c {
                        Some(c) => json!([e.u, e.v, c]),
                        None => json!([e.u, e.v]),
                    })
                    .collect();
                ("explicit-edge-list", json!({"vertices": vertices, "edges": edges}))
            }
        };
        let conductance = match &self.conductance {
            ConductanceRule::Unit => json!({"rule": "unit"}),
            ConductanceRule::PhiProduct => json!({"rule": "phi-product"}),
            ConductanceRule::LevelDecay { ratio } => json!({"rule": "level-decay", "ratio": ratio}),
            ConductanceRule::Table { edges } => {
                let edges: Vec<Value> = edges.iter().map(|(u, v, c)| json!([u, v, c])).collect();
                json!({"rule": "table", "edges": edges})
            }
        };
        json!({"generator": gname, "params": params, "conductance": conductance, "root": self.root})
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("spec serializes")
    }
}

enum Topology {
    Lattice { d: usize, half: bool },
    HalfLine,
    Tree { b: usize },
    Ball { d: usize, rho: i32 },
    Explicit { names: Vec<String>, index: HashMap<String, usize>, adj: Vec<Vec<(usize, f64)>> },
}

impl Topology {
    fn neighbors(&self, l: &Coords, out: &mut SmallVec<[(Coords, f64); 8]>) {
        out.clear();
        match self {
            Topology::Lattice { d, half } => {
                for k in 0..*d {
                    for s in [1, -1] {
                        let mut m = l.clone();
                        m[k] += s;
                        if *half && k == d - 1 && m[k] < 0 {
                            continue;
                        }
                        out.push((m, f64::NAN));
                    }
                }
            }
            Topology::Ball { d, rho } => {
                let norm: i32 = l.iter().map(|x| x.abs()).sum();
                for k in 0..*d {
                    for s in [1, -1] {
                        let nk = l[k] + s;
                        if norm - l[k].abs() + nk.abs() > *rho {
                            continue;
                        }
                        let mut m = l.clone();
                        m[k] = nk;
                        out.push((m, f64::NAN));
                    }
                }
            }
            Topology::HalfLine => {
                out.push((smallvec::smallvec![l[0] + 1], f64::NAN));
                if l[0] > 0 {
                    out.push((smallvec::smallvec![l[0] - 1], f64::NAN));
                }
            }
            Topology::Tree { b } => {
                if !l.is_empty() {
                    let mut p = l.clone();
                    p.pop();
                    out.push((p, f64::NAN));
                }
                for c in 0..*b {
                    let mut m = l.clone();
                    m.push(c as i32);
                    out.push((m, f64::NAN));
                }
            }
            Topology::Explicit { adj, .. } => {
                for &(j, c) in &adj[l[0] as usize] {
                    out.push((smallvec::smallvec![j as i32], c));
                }
            }
        }
    }

    fn parse(&self, s: &str) -> Option<Coords> {
        let s = s.trim();
        match self {
            Topology::Lattice { d, .. } | Topology::Ball { d, .. } => {
                let inner = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')).unwrap_or(s);
                let c: Coords = inner
                    .split(',')
                    .map(|t| t.trim().parse::<i32>().ok())
                    .collect::<Option<_>>()?;
                (c.len() == *d).then_some(c)
            }
            Topology::HalfLine => s.parse::<i32>().ok().filter(|&n| n >= 0).map(|n| smallvec::smallvec![n]),
            Topology::Tree { b } => {
                let mut parts = s.split('.');
                if parts.next()? != "r" {
                    return None;
                }
                parts
                    .map(|t| t.parse::<i32>().ok().filter(|&c| c >= 0 && (c as usize) < *b))
                    .collect()
            }
            Topology::Explicit { index, .. } => index.get(s).map(|&i| smallvec::smallvec![i as i32]),
        }
    }

    fn format(&self, c: &Coords) -> String {
        match self {
            Topology::Lattice { d: 1, .. } | Topology::Ball { d: 1, .. } | Topology::HalfLine => c[0].to_string(),
            Topology::Lattice { .. } | Topology::Ball { .. } => {
                let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                format!("({})", parts.join(","))
            }
            Topology::Tree { .. } => {
                let mut s = String::from("r");
                for x in c {
                    s.push('.');
                    s.push_str(&x.to_string());
                }
                s
            }
            Topology::Explicit { names, .. } => names[c[0] as usize].clone(),
        }
    }

    /// Lower bound on graph distance between two labels, exact for lattices and trees.
    fn distance_hint(&self, a: &Coords, b: &Coords) -> Option<usize> {
        match self {
            Topology::Lattice { .. } | Topology::Ball { .. } | Topology::HalfLine => {
                Some(a.iter().zip(b.iter()).map(|(x, y)| (x - y).unsigned_abs() as usize).sum())
            }
            Topology::Tree { .. } => {
                let common = a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count();
                Some(a.len() + b.len() - 2 * common)
            }
            Topology::Explicit { .. } => None,
        }
    }

    fn is_finite(&self) -> bool {
        matches!(self, Topology::Ball { .. } | Topology::Explicit { .. })
    }
}

enum Conductance {
    Unit,
    Inline,
    Overrides(HashMap<(Coords, Coords), f64>),
    LevelDecay(f64),
    Phi(Vec<f64>),
}

#[derive(Default)]
struct Layers {
    labels: Vec<Coords>,
    index: HashMap<Coords, u32>,
    dist: Vec<u32>,
    /// `layer_end[k]` = number of vertices at distance <= k.
    layer_end: Vec<usize>,
    complete: bool,
}

pub struct Network {
    spec: NetworkSpec,
    topo: Topology,
    cond: Conductance,
    layers: RwLock<Layers>,
    truncation_radius: Option<usize>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network").field("spec", &self.spec).finish()
    }
}

impl Network {
    pub fn build(spec: NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let topo = match &spec.generator {
            Generator::Lattice { d, side } => Topology::Lattice { d: *d, half: *side == SidePolicy::Half },
            Generator::IntegerLine => Topology::Lattice { d: 1, half: false },
            Generator::HalfLine => Topology::HalfLine,
            Generator::RegularTree { branching } => Topology::Tree { b: *branching },
            Generator::PhiProductLattice { d, truncation_radius } => {
                Topology::Ball { d: *d, rho: *truncation_radius as i32 }
            }
            Generator::ExplicitEdgeList { vertices, edges } => {
                let mut names: Vec<String> = Vec::new();
                let mut index: HashMap<String, usize> = HashMap::new();
                let mut intern = |s: &String, names: &mut Vec<String>| -> usize {
                    *index.entry(s.clone()).or_insert_with(|| {
                        names.push(s.clone());
                        names.len() - 1
                    })
                };
                for v in vertices {
                    intern(v, &mut names);
                }
                let pairs: Vec<(usize, usize, f64)> = edges
                    .iter()
                    .map(|e| {
                        let c = match spec.conductance {
                            ConductanceRule::Table { .. } => e.c.unwrap_or(1.0),
                            _ => 1.0,
                        };
                        (intern(&e.u, &mut names), intern(&e.v, &mut names), c)
                    })
                    .collect();
                let mut adj = vec![Vec::new(); names.len()];
                let mut seen = std::collections::HashSet::new();
                for (i, &(a, b, c)) in pairs.iter().enumerate() {
                    if !seen.insert((a.min(b), a.max(b))) {
                        return Err(Error::spec(format!("params.edges[{i}]"), "duplicate edge"));
                    }
                    adj[a].push((b, c));
                    adj[b].push((a, c));
                }
                let index = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
                Topology::Explicit { names, index, adj }
            }
        };
        let root = topo
            .parse(&spec.root)
            .ok_or_else(|| Error::spec("root", format!("`{}` is not a vertex of this network", spec.root)))?;
        if let Topology::Ball { .. } = topo {
            if root.iter().any(|&x| x != 0) {
                return Err(Error::spec("root", "phi-product lattices are rooted at the origin"));
            }
        }
        let cond = match &spec.conductance {
            ConductanceRule::Unit => Conductance::Unit,
            ConductanceRule::LevelDecay { ratio } => Conductance::LevelDecay(*ratio),
            ConductanceRule::PhiProduct => Conductance::Unit,
            ConductanceRule::Table { edges } => {
                if let Topology::Explicit { .. } = topo {
                    Conductance::Inline
                } else {
                    let mut map = HashMap::new();
                    for (i, (u, v, c)) in edges.iter().enumerate() {
                        let field = format!("conductance.edges[{i}]");
                        let a = topo.parse(u).ok_or_else(|| Error::spec(&field, format!("unknown vertex `{u}`")))?;
                        let b = topo.parse(v).ok_or_else(|| Error::spec(&field, format!("unknown vertex `{v}`")))?;
                        if topo.distance_hint(&a, &b) != Some(1) {
                            return Err(Error::spec(&field, "not an edge of the network"));
                        }
                        map.insert((a.clone(), b.clone()), *c);
                        map.insert((b, a), *c);
                    }
                    Conductance::Overrides(map)
                }
            }
        };
        let truncation_radius = match spec.generator {
            Generator::PhiProductLattice { truncation_radius, .. } => Some(truncation_radius),
            _ => None,
        };
        let mut layers = Layers::default();
        layers.index.insert(root.clone(), 0);
        layers.labels.push(root);
        layers.dist.push(0);
        layers.layer_end.push(1);
        let mut net = Network { spec, topo, cond, layers: RwLock::new(layers), truncation_radius };
        if net.topo.is_finite() {
            net.ensure(usize::MAX);
            if let Topology::Explicit { names, .. } = &net.topo {
                if net.layers.read().unwrap().labels.len() != names.len() {
                    return Err(Error::spec("params.edges", "edge list does not describe a connected graph"));
                }
            }
        }
        if let Generator::PhiProductLattice { d, truncation_radius } = net.spec.generator {
            let phi = phi_oracle(d, truncation_radius)?;
            let layers = net.layers.read().unwrap();
            let values: Vec<f64> = layers
                .labels
                .iter()
                .map(|l| {
                    let t = phi.topo.format(l);
                    phi.values[&t]
                })
                .collect();
            drop(layers);
            net.cond = Conductance::Phi(values);
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    #[inline]
    pub fn root(&self) -> VertexId {
        VertexId(0)
    }

    pub fn is_finite(&self) -> bool {
        self.topo.is_finite()
    }

    pub fn is_tree(&self) -> bool {
        matches!(self.topo, Topology::Tree { .. } | Topology::HalfLine)
            || matches!(self.topo, Topology::Lattice { d: 1, half: true })
    }

    /// Number of vertices, for finite networks.
    pub fn vertex_count(&self) -> Option<usize> {
        self.is_finite().then(|| self.layers.read().unwrap().labels.len())
    }

    pub fn truncation_radius(&self) -> Option<usize> {
        self.truncation_radius
    }

    /// The phi-oracle value of a vertex of a phi-product lattice.
    pub fn phi(&self, v: VertexId) -> Option<f64> {
        match &self.cond {
            Conductance::Phi(p) => p.get(v.index()).copied(),
            _ => None,
        }
    }

    /// Lattice dimension, when the network is a lattice.
    pub fn dimension(&self) -> Option<usize> {
        match self.topo {
            Topology::Lattice { d, .. } | Topology::Ball { d, .. } => Some(d),
            Topology::HalfLine => Some(1),
            _ => None,
        }
    }

    fn ensure(&self, r: usize) {
        {
            let l = self.layers.read().unwrap();
            if l.complete || l.layer_end.len() > r {
                return;
            }
        }
        let mut l = self.layers.write().unwrap();
        let mut buf = SmallVec::new();
        while !l.complete && l.layer_end.len() <= r {
            let k = l.layer_end.len();
            let start = if k >= 2 { l.layer_end[k - 2] } else { 0 };
            let end = l.layer_end[k - 1];
            for i in start..end {
                let label = l.labels[i].clone();
                self.topo.neighbors(&label, &mut buf);
                for (nb, _) in buf.drain(..) {
                    if !l.index.contains_key(&nb) {
                        let id = l.labels.len() as u32;
                        l.index.insert(nb.clone(), id);
                        l.labels.push(nb);
                        l.dist.push(k as u32);
                    }
                }
            }
            let n = l.labels.len();
            if n == end {
                l.complete = true;
            } else {
                l.layer_end.push(n);
            }
        }
    }

    /// Graph distance from the root.
    pub fn dist(&self, v: VertexId) -> usize {
        self.layers.read().unwrap().dist[v.index()] as usize
    }

    /// Number of vertices within distance `r` of the root.
    pub fn ball_size(&self, r: usize) -> usize {
        self.ensure(r);
        let l = self.layers.read().unwrap();
        if r < l.layer_end.len() {
            l.layer_end[r]
        } else {
            l.labels.len()
        }
    }

    pub fn label(&self, v: VertexId) -> String {
        let l = self.layers.read().unwrap();
        self.topo.format(&l.labels[v.index()])
    }

    pub fn coords(&self, v: VertexId) -> Coords {
        self.layers.read().unwrap().labels[v.index()].clone()
    }

    pub fn vertex(&self, label: &str) -> Result<VertexId> {
        let c = self.topo.parse(label).ok_or_else(|| Error::UnknownVertex(label.to_string()))?;
        self.vertex_of(&c).ok_or_else(|| Error::UnknownVertex(label.to_string()))
    }

    /// Look up a vertex by its coordinates, growing the id table if needed.
    pub fn vertex_of(&self, c: &Coords) -> Option<VertexId> {
        if let Some(&id) = self.layers.read().unwrap().index.get(c) {
            return Some(VertexId(id));
        }
        let root = self.layers.read().unwrap().labels[0].clone();
        let d = self.topo.distance_hint(&root, c)?;
        self.ensure(d);
        self.layers.read().unwrap().index.get(c).map(|&i| VertexId(i))
    }

    /// Neighbors of `v` with conductances, in generator order.
    pub fn neighbors(&self, v: VertexId) -> Neighbors {
        let dv = self.dist(v);
        self.ensure(dv + 1);
        let l = self.layers.read().unwrap();
        let mut buf = SmallVec::new();
        self.topo.neighbors(&l.labels[v.index()], &mut buf);
        let mut out = Neighbors::new();
        for (nb, inline) in buf.into_iter() {
            let u = l.index[&nb];
            let c = match &self.cond {
                Conductance::Unit => 1.0,
                Conductance::Inline => inline,
                Conductance::Overrides(map) => {
                    map.get(&(l.labels[v.index()].clone(), nb)).copied().unwrap_or(1.0)
                }
                Conductance::LevelDecay(ratio) => {
                    let m = l.dist[v.index()].min(l.dist[u as usize]);
                    ratio.powi(-(m as i32))
                }
                Conductance::Phi(p) => p[v.index()] * p[u as usize],
            };
            out.push((VertexId(u), c));
        }
        out
    }

    /// `c_v`, the sum of conductances at `v`.
    pub fn csum(&self, v: VertexId) -> f64 {
        self.neighbors(v).iter().map(|&(_, c)| c).sum()
    }

    pub fn conductance(&self, x: VertexId, y: VertexId) -> f64 {
        self.neighbors(x).iter().find(|&&(u, _)| u == y).map(|&(_, c)| c).unwrap_or(0.0)
    }
}

struct PhiValues {
    topo: Topology,
    values: HashMap<String, f64>,
}

/// Hitting probability of the origin for simple random walk on Z^d, computed on
/// the ball of radius `rho` with the exterior absorbing at 0.
fn phi_oracle(d: usize, rho: usize) -> Result<PhiValues> {
    let unit = Network::build(NetworkSpec::lattice(d))?;
    let region = Region::ball(&unit, rho);
    let prob = crate::green::DirichletProblem::new(&region, crate::green::Boundary::Absorbing)
        .absorb(unit.root(), 1.0);
    let f = crate::green::dirichlet_solve(&unit, &prob)?;
    let mut values = HashMap::new();
    for (i, &v) in region.vertices().iter().enumerate() {
        values.insert(unit.label(v), f[i]);
    }
    Ok(PhiValues { topo: Topology::Lattice { d, half: false }, values })
}

/// `Δf(v) = Σ_{x∼v} c_vx (f(x) − f(v))`.
pub fn laplacian_apply<F>(net: &Network, f: F, v: VertexId) -> Result<f64>
where
    F: Fn(VertexId) -> Option<f64>,
{
    let fv = f(v).ok_or_else(|| Error::Undefined(net.label(v)))?;
    let mut s = 0.0;
    for (x, c) in net.neighbors(v) {
        let fx = f(x).ok_or_else(|| Error::Undefined(net.label(x)))?;
        s += c * (fx - fv);
    }
    Ok(s)
}

pub const OUTSIDE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub struct Adj {
    pub id: VertexId,
    /// Local index inside the region, or [`OUTSIDE`].
    pub local: u32,
    pub c: f64,
}

/// A finite vertex set with its adjacency, conductance sums and boundary flags.
///
/// Boundary vertices are the members with at least one neighbor outside the set.
#[derive(Clone, Debug)]
pub struct Region {
    center: VertexId,
    radius: Option<usize>,
    vertices: Vec<VertexId>,
    dist: Vec<u32>,
    prefix: bool,
    lookup: HashMap<VertexId, u32>,
    adj_start: Vec<u32>,
    adj: Vec<Adj>,
    csum: Vec<f64>,
    boundary: Vec<bool>,
}

impl Region {
    /// The ball `B(∘, r)` in graph distance from the root.
    pub fn ball(net: &Network, r: usize) -> Region {
        let n = net.ball_size(r);
        let vertices: Vec<VertexId> = (0..n as u32).map(VertexId).collect();
        let dist = {
            let l = net.layers.read().unwrap();
            l.dist[..n].to_vec()
        };
        Self::assemble(net, net.root(), Some(r), vertices, dist, true)
    }

    /// The ball of radius `r` in graph distance around an arbitrary center.
    pub fn ball_around(net: &Network, center: VertexId, r: usize) -> Region {
        if center == net.root() {
            return Self::ball(net, r);
        }
        let mut seen: HashMap<VertexId, u32> = HashMap::new();
        seen.insert(center, 0);
        let mut order = vec![center];
        let mut q = VecDeque::from([center]);
        while let Some(v) = q.pop_front() {
            let dv = seen[&v];
            if dv as usize == r {
                continue;
            }
            for (u, _) in net.neighbors(v) {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(u) {
                    e.insert(dv + 1);
                    order.push(u);
                    q.push_back(u);
                }
            }
        }
        order.sort();
        let dist = order.iter().map(|v| seen[v]).collect();
        Self::assemble(net, center, Some(r), order, dist, false)
    }

    /// Arbitrary finite set containing the root; distances are measured from the root.
    pub fn from_vertices(net: &Network, vertices: impl IntoIterator<Item = VertexId>) -> Result<Region> {
        let mut vs: Vec<VertexId> = vertices.into_iter().collect();
        vs.sort();
        vs.dedup();
        if vs.first() != Some(&net.root()) {
            return Err(Error::Invalid("region must contain the root".into()));
        }
        let prefix = vs.last().map(|v| v.index() + 1) == Some(vs.len());
        let dist = vs.iter().map(|&v| net.dist(v) as u32).collect();
        Ok(Self::assemble(net, net.root(), None, vs, dist, prefix))
    }

    /// Connected component of the root inside `B(∘, max_radius) ∩ {keep}`.
    pub fn grow(net: &Network, max_radius: usize, keep: impl Fn(VertexId) -> bool) -> Result<Region> {
        let root = net.root();
        if !keep(root) {
            return Err(Error::Invalid("region predicate excludes the root".into()));
        }
        let mut seen = std::collections::HashSet::from([root]);
        let mut q = VecDeque::from([root]);
        while let Some(v) = q.pop_front() {
            for (u, _) in net.neighbors(v) {
                if net.dist(u) <= max_radius && !seen.contains(&u) && keep(u) {
                    seen.insert(u);
                    q.push_back(u);
                }
            }
        }
        Self::from_vertices(net, seen)
    }

    fn assemble(
        net: &Network,
        center: VertexId,
        radius: Option<usize>,
        vertices: Vec<VertexId>,
        dist: Vec<u32>,
        prefix: bool,
    ) -> Region {
        let lookup = if prefix {
            HashMap::new()
        } else {
            vertices.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect()
        };
        let n = vertices.len();
        let mut adj_start = Vec::with_capacity(n + 1);
        let mut adj = Vec::with_capacity(n * 4);
        let mut csum = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        adj_start.push(0u32);
        for &v in &vertices {
            let mut s = 0.0;
            let mut b = false;
            for (u, c) in net.neighbors(v) {
                let local = if prefix {
                    if u.index() < n {
                        u.0
                    } else {
                        OUTSIDE
                    }
                } else {
                    lookup.get(&u).copied().unwrap_or(OUTSIDE)
                };
                b |= local == OUTSIDE;
                s += c;
                adj.push(Adj { id: u, local, c });
            }
            adj_start.push(adj.len() as u32);
            csum.push(s);
            boundary.push(b);
        }
        Region { center, radius, vertices, dist, prefix, lookup, adj_start, adj, csum, boundary }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn center(&self) -> VertexId {
        self.center
    }

    pub fn radius(&self) -> Option<usize> {
        self.radius
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> VertexId {
        self.vertices[i]
    }

    #[inline]
    pub fn local(&self, v: VertexId) -> Option<usize> {
        if self.prefix {
            (v.index() < self.vertices.len()).then_some(v.index())
        } else {
            self.lookup.get(&v).map(|&i| i as usize)
        }
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.local(v).is_some()
    }

    #[inline]
    pub fn adj(&self, i: usize) -> &[Adj] {
        &self.adj[self.adj_start[i] as usize..self.adj_start[i + 1] as usize]
    }

    /// `c_v` for the local vertex `i`, over all network edges.
    #[inline]
    pub fn csum(&self, i: usize) -> f64 {
        self.csum[i]
    }

    #[inline]
    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Graph distance of local vertex `i` from the region's center.
    #[inline]
    pub fn dist(&self, i: usize) -> usize {
        self.dist[i] as usize
    }

    pub fn boundary_vertices(&self) -> Vec<VertexId> {
        (0..self.len()).filter(|&i| self.boundary[i]).map(|i| self.vertices[i]).collect()
    }

    pub fn interior_vertices(&self) -> Vec<VertexId> {
        (0..self.len()).filter(|&i| !self.boundary[i]).map(|i| self.vertices[i]).collect()
    }

    /// Vertices at distance exactly `r` from the center.
    pub fn sphere(&self, r: usize) -> Vec<VertexId> {
        (0..self.len()).filter(|&i| self.dist[i] as usize == r).map(|i| self.vertices[i]).collect()
    }

    /// Vertices outside the region adjacent to it, in id order.
    pub fn outer_boundary(&self) -> Vec<VertexId> {
        let mut out: Vec<VertexId> =
            self.adj.iter().filter(|a| a.local == OUTSIDE).map(|a| a.id).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Laplacian of a function given by its values on the region, at an interior vertex.
    pub fn laplacian(&self, f: &[f64], i: usize) -> Option<f64> {
        if self.boundary[i] {
            return None;
        }
        Some(self.adj(i).iter().map(|a| a.c * (f[a.local as usize] - f[i])).sum())
    }
}
