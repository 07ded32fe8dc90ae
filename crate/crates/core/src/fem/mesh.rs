use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Point, SymmetryOp};

pub const MESH_SCHEMA: &str = "hcband.mesh/1";

/// Phase label of a triangle. Inclusions carry the index of their placement
/// (0 for a single shape meshed on its own).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Material {
    Matrix,
    Inclusion(u32),
}

impl Material {
    pub fn is_inclusion(self) -> bool {
        matches!(self, Material::Inclusion(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    PeriodicMaster,
    PeriodicSlave,
    /// Material interface, or a traction-free hole boundary.
    Interface,
}

impl BoundaryTag {
    fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::PeriodicMaster => "periodic-master",
            BoundaryTag::PeriodicSlave => "periodic-slave",
            BoundaryTag::Interface => "interface",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dirichlet" => BoundaryTag::Dirichlet,
            "periodic-master" => BoundaryTag::PeriodicMaster,
            "periodic-slave" => BoundaryTag::PeriodicSlave,
            "interface" => BoundaryTag::Interface,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// A conforming P1 triangulation.
///
/// Periodic meshes keep slave nodes as separate geometric nodes; `periodic`
/// lists `(slave, master)` pairs and dofs are identified at assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub materials: Vec<Material>,
    pub edges: Vec<TaggedEdge>,
    pub periodic: Vec<(usize, usize)>,
    /// Side of the periodic square `[0, period)²`, if any.
    pub period: Option<f64>,
    pub h: f64,
}

pub(crate) fn tri_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        tri_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn material_area(&self, pred: impl Fn(Material) -> bool) -> f64 {
        (0..self.triangles.len()).filter(|&t| pred(self.materials[t])).map(|t| self.triangle_area(t)).sum()
    }

    pub fn edges_tagged(&self, tag: BoundaryTag) -> impl Iterator<Item = &TaggedEdge> {
        self.edges.iter().filter(move |e| e.tag == tag)
    }

    /// Sorted, deduplicated nodes touched by edges with the given tag.
    pub fn nodes_tagged(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges_tagged(tag).flat_map(|e| e.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// For each node, the node its dofs are identified with (itself unless
    /// it is a periodic slave).
    pub fn representatives(&self) -> Vec<usize> {
        let mut rep: Vec<usize> = (0..self.nodes.len()).collect();
        for &(s, m) in &self.periodic {
            rep[s] = m;
        }
        // masters are never slaves, but resolve chains defensively
        for i in 0..rep.len() {
            let mut r = rep[i];
            let mut guard = 0;
            while rep[r] != r && guard < 4 {
                r = rep[r];
                guard += 1;
            }
            rep[i] = r;
        }
        rep
    }

    /// Image of the mesh under `x ↦ offset + scale·op(x)`; orientation is
    /// restored for reflections so areas stay positive.
    pub fn mapped(&self, op: SymmetryOp, scale: f64, offset: Point) -> Mesh {
        let nodes = self
            .nodes
            .iter()
            .map(|&p| {
                let q = op.apply(p);
                [offset[0] + scale * q[0], offset[1] + scale * q[1]]
            })
            .collect();
        let triangles = if op.is_reflection() {
            self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect()
        } else {
            self.triangles.clone()
        };
        Mesh {
            nodes,
            triangles,
            materials: self.materials.clone(),
            edges: self.edges.clone(),
            periodic: self.periodic.clone(),
            period: self.period.map(|p| p * scale),
            h: self.h * scale,
        }
    }

    /// Checks the structural invariants: positive areas, in-range indices,
    /// conformity (every edge shared by at most two triangles, boundary
    /// edges exactly once), and periodic pairs matching up to a lattice shift.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.materials.len() != self.triangles.len() {
            return Err(Error::Mesh("material table length differs from triangle count".into()));
        }
        if self.nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        let tol = 1e-12 * self.h.max(1e-300).powi(2);
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            let a = self.triangle_area(t);
            if !(a > tol) {
                return Err(Error::Mesh(format!("triangle {t} has non-positive area {a:.3e}")));
            }
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::Mesh(format!("edge {e:?} shared by more than two triangles")));
        }
        for e in &self.edges {
            let [u, v] = e.nodes;
            let c = edge_count.get(&(u.min(v), u.max(v))).copied().unwrap_or(0);
            let ok = match e.tag {
                BoundaryTag::Interface => c >= 1,
                _ => c == 1,
            };
            if !ok {
                return Err(Error::Mesh(format!("tagged edge {:?} ({}) is not a mesh edge of the right kind", e.nodes, e.tag.as_str())));
            }
        }
        if !self.periodic.is_empty() {
            let l = self.period.ok_or_else(|| Error::Mesh("periodic pairs without a period".into()))?;
            let mut seen = vec![false; n];
            for &(s, m) in &self.periodic {
                if s >= n || m >= n || s == m {
                    return Err(Error::Mesh(format!("invalid periodic pair ({s}, {m})")));
                }
                if seen[s] {
                    return Err(Error::Mesh(format!("node {s} is paired twice")));
                }
                seen[s] = true;
                let (ps, pm) = (self.nodes[s], self.nodes[m]);
                for k in 0..2 {
                    let d = (ps[k] - pm[k]) / l;
                    if (d - d.round()).abs() > 1e-9 {
                        return Err(Error::Mesh(format!("periodic pair ({s}, {m}) does not match up to a lattice shift")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Plain-text serialization (see [`Mesh::from_text`]).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {MESH_SCHEMA}");
        let _ = writeln!(s, "h {}", self.h);
        match self.period {
            Some(p) => {
                let _ = writeln!(s, "period {p}");
            }
            None => s.push_str("period none\n"),
        }
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for (t, m) in self.triangles.iter().zip(&self.materials) {
            let mat = match m {
                Material::Matrix => "m".to_string(),
                Material::Inclusion(k) => format!("i{k}"),
            };
            let _ = writeln!(s, "{} {} {} {mat}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "edges {}", self.edges.len());
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.tag.as_str());
        }
        let _ = writeln!(s, "periodic {}", self.periodic.len());
        for (a, b) in &self.periodic {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    /// Parses the plain-text format:
    ///
    /// ```text
    /// # hcband.mesh/1
    /// h <f64>
    /// period <f64 | none>
    /// nodes <n>        then n lines "x y"
    /// triangles <n>    then n lines "a b c m|i<k>"
    /// edges <n>        then n lines "a b <tag>"
    /// periodic <n>     then n lines "slave master"
    /// ```
    ///
    /// The result is validated.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let err = |m: String| Error::parse("mesh", m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().ok_or_else(|| Error::parse("mesh", format!("unexpected end of input, expected {what}")))
        };
        let (_, header) = next("header")?;
        if header.strip_prefix('#').map(str::trim) != Some(MESH_SCHEMA) {
            return Err(err(format!("bad header {header:?}, expected \"# {MESH_SCHEMA}\"")));
        }
        fn keyed<'a>(line: (usize, &'a str), key: &str) -> Result<&'a str> {
            let (i, l) = line;
            let mut it = l.splitn(2, char::is_whitespace);
            if it.next() != Some(key) {
                return Err(Error::parse("mesh", format!("line {}: expected {key:?}", i + 1)));
            }
            Ok(it.next().unwrap_or("").trim())
        }
        fn num<T: std::str::FromStr>(s: &str, i: usize) -> Result<T> {
            s.parse().map_err(|_| Error::parse("mesh", format!("line {}: bad number {s:?}", i + 1)))
        }
        fn count(s: &str, i: usize) -> Result<usize> {
            let c: usize = num(s, i)?;
            if c > 50_000_000 {
                return Err(Error::parse("mesh", format!("line {}: count {c} too large", i + 1)));
            }
            Ok(c)
        }
        let l = next("h")?;
        let h: f64 = num(keyed(l, "h")?, l.0)?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(err(format!("h must be positive, got {h}")));
        }
        let l = next("period")?;
        let pv = keyed(l, "period")?;
        let period = if pv == "none" {
            None
        } else {
            let p: f64 = num(pv, l.0)?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(err(format!("period must be positive, got {p}")));
            }
            Some(p)
        };

        let l = next("nodes")?;
        let nn = count(keyed(l, "nodes")?, l.0)?;
        let mut nodes = Vec::with_capacity(nn.min(1 << 16));
        for _ in 0..nn {
            let (i, line) = next("node")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(err(format!("line {}: node needs 2 coordinates", i + 1)));
            }
            nodes.push([num(f[0], i)?, num(f[1], i)?]);
        }

        let l = next("triangles")?;
        let nt = count(keyed(l, "triangles")?, l.0)?;
        let mut triangles = Vec::with_capacity(nt.min(1 << 16));
        let mut materials = Vec::with_capacity(nt.min(1 << 16));
        for _ in 0..nt {
            let (i, line) = next("triangle")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(err(format!("line {}: triangle needs 3 indices and a material", i + 1)));
            }
            triangles.push([num(f[0], i)?, num(f[1], i)?, num(f[2], i)?]);
            materials.push(match f[3] {
                "m" => Material::Matrix,
                s => match s.strip_prefix('i') {
                    Some(k) => Material::Inclusion(num(k, i)?),
                    None => return Err(err(format!("line {}: bad material {s:?}", i + 1))),
                },
            });
        }

        let l = next("edges")?;
        let ne = count(keyed(l, "edges")?, l.0)?;
        let mut edges = Vec::with_capacity(ne.min(1 << 16));
        for _ in 0..ne {
            let (i, line) = next("edge")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err(format!("line {}: edge needs 2 indices and a tag", i + 1)));
            }
            let tag = BoundaryTag::parse(f[2]).ok_or_else(|| err(format!("line {}: bad tag {:?}", i + 1, f[2])))?;
            edges.push(TaggedEdge { nodes: [num(f[0], i)?, num(f[1], i)?], tag });
        }

        let l = next("periodic")?;
        let np = count(keyed(l, "periodic")?, l.0)?;
        let mut periodic = Vec::with_capacity(np.min(1 << 16));
        for _ in 0..np {
            let (i, line) = next("periodic pair")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(err(format!("line {}: periodic pair needs 2 indices", i + 1)));
            }
            periodic.push((num(f[0], i)?, num(f[1], i)?));
        }
        if let Some((i, _)) = lines.next() {
            return Err(err(format!("line {}: trailing content", i + 1)));
        }
        let mesh = Mesh { nodes, triangles, materials, edges, periodic, period, h };
        mesh.validate().map_err(|e| err(e.to_string()))?;
        Ok(mesh)
    }
}
