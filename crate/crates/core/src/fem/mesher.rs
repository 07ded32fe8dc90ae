//! Constrained Delaunay meshing of shapes, perforated periodic windows and
//! two-phase tori.
//!
//! Windows are meshed cell by cell. Every cell boundary is pre-split into
//! `m = ceil(1/h)` equal segments that refinement is not allowed to split,
//! so neighbouring cells share boundary nodes exactly and are glued through
//! integer lattice keys. Cells with identical content reuse one local mesh.

use std::collections::{BTreeMap, HashMap};

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use super::mesh::{tri_area, BoundaryTag, Material, Mesh, TaggedEdge};
use crate::error::{Error, Result};
use crate::geometry::{shape::point_in_polygon, Configuration, InclusionShape, Point};

/// What to mesh.
#[derive(Debug, Clone, Copy)]
pub enum Domain<'a> {
    /// The interior of one inclusion shape; its boundary is tagged Dirichlet.
    ShapeInterior(&'a InclusionShape),
    /// The matrix part of a periodic window `[0, L)²`; inclusions become
    /// holes whose boundary carries `hole_tag` (Dirichlet or Interface).
    PerforatedCell { cfg: &'a Configuration, hole_tag: BoundaryTag },
    /// Both phases of the window, rescaled to the torus `[0, εL)²`. The mesh
    /// size passed to [`build_mesh`] is measured in unit-cell coordinates.
    TwoPhaseTorus { cfg: &'a Configuration, epsilon: f64 },
}

struct Local {
    nodes: Vec<Point>,
    tris: Vec<[usize; 3]>,
    inside: Vec<bool>,
    /// Constraint edges of the inclusion boundary.
    hole_edges: Vec<[usize; 2]>,
}

fn split_loop(poly: &[Point], h: f64) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let k = (len / h).ceil().max(1.0) as usize;
        for j in 0..k {
            let t = j as f64 / k as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn loop_edges(offset: usize, n: usize) -> impl Iterator<Item = [usize; 2]> {
    (0..n).map(move |i| [offset + i, offset + (i + 1) % n])
}

/// Refined CDT of the given points and constraint edges. Returns node
/// positions, CCW triangles, and the constraint edges of the final mesh.
fn triangulate(points: Vec<Point>, edges: Vec<[usize; 2]>, h: f64, exclude_outer: bool) -> Result<Local> {
    let verts: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(verts, edges)
        .map_err(|e| Error::Mesh(format!("constrained triangulation failed: {e:?}")))?;
    let target = 3f64.sqrt() / 4.0 * h * h;
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_max_allowed_area(target)
        .keep_constraint_edges()
        .exclude_outer_faces(exclude_outer)
        .with_max_additional_vertices(20_000_000);
    let res = cdt.refine(params);
    if !res.refinement_complete {
        return Err(Error::Mesh("refinement ran out of vertices".into()));
    }
    let excluded: std::collections::HashSet<usize> = res.excluded_faces.iter().map(|f| f.index()).collect();
    let nodes: Vec<Point> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut tris = Vec::new();
    for f in cdt.inner_faces() {
        if excluded.contains(&f.fix().index()) {
            continue;
        }
        let [a, b, c] = f.vertices().map(|v| v.fix().index());
        if tri_area(nodes[a], nodes[b], nodes[c]) >= 0.0 {
            tris.push([a, b, c]);
        } else {
            tris.push([a, c, b]);
        }
    }
    let constraints: Vec<[usize; 2]> = cdt
        .undirected_edges()
        .filter(|e| e.is_constraint_edge())
        .map(|e| {
            let [a, b] = e.vertices();
            [a.fix().index(), b.fix().index()]
        })
        .collect();
    Ok(Local { nodes, tris, inside: Vec::new(), hole_edges: constraints })
}

fn centroid(nodes: &[Point], t: &[usize; 3]) -> Point {
    let mut c = [0.0; 2];
    for &i in t {
        c[0] += nodes[i][0] / 3.0;
        c[1] += nodes[i][1] / 3.0;
    }
    c
}

fn check_slivers(nodes: &[Point], tris: &[[usize; 3]], h: f64, what: &str) -> Result<()> {
    let tol = 1e-10 * h * h;
    for t in tris {
        let a = tri_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if !(a > tol) {
            let c = centroid(nodes, t);
            return Err(Error::Mesh(format!("{what}: sliver triangle of area {a:.3e} near ({:.6}, {:.6})", c[0], c[1])));
        }
    }
    Ok(())
}

/// Removes unreferenced nodes; returns the old→new map.
fn compact(nodes: &mut Vec<Point>, tris: &mut [[usize; 3]]) -> Vec<Option<usize>> {
    let mut used = vec![false; nodes.len()];
    for t in tris.iter() {
        for &i in t {
            used[i] = true;
        }
    }
    let mut map = vec![None; nodes.len()];
    let mut kept = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            map[i] = Some(kept.len());
            kept.push(nodes[i]);
        }
    }
    for t in tris.iter_mut() {
        for i in t.iter_mut() {
            *i = map[*i].expect("used node");
        }
    }
    *nodes = kept;
    map
}

fn mesh_shape(shape: &InclusionShape, h: f64) -> Result<Mesh> {
    let pts = split_loop(&shape.vertices, h);
    let n = pts.len();
    let edges: Vec<[usize; 2]> = loop_edges(0, n).collect();
    let local = triangulate(pts, edges, h, true)?;
    let mut nodes = local.nodes;
    let mut tris: Vec<[usize; 3]> =
        local.tris.into_iter().filter(|t| point_in_polygon(&shape.vertices, centroid(&nodes, t))).collect();
    if tris.is_empty() {
        return Err(Error::Mesh(format!("shape {:?} produced no triangles at h = {h}", shape.id)));
    }
    let map = compact(&mut nodes, &mut tris);
    check_slivers(&nodes, &tris, h, &format!("shape {:?}", shape.id))?;
    let edges = local
        .hole_edges
        .iter()
        .filter_map(|&[a, b]| Some(TaggedEdge { nodes: [map[a]?, map[b]?], tag: BoundaryTag::Dirichlet }))
        .collect();
    let materials = vec![Material::Inclusion(0); tris.len()];
    let mesh = Mesh { nodes, triangles: tris, materials, edges, periodic: Vec::new(), period: None, h };
    Ok(mesh)
}

/// Mesh of the unit cell `[0,1]²` with an optional inclusion polygon.
fn mesh_cell(poly: Option<&[Point]>, m: usize, h: f64) -> Result<Local> {
    let mut pts: Vec<Point> = Vec::with_capacity(4 * m);
    let s = |k: usize| k as f64 / m as f64;
    for k in 0..m {
        pts.push([s(k), 0.0]);
    }
    for k in 0..m {
        pts.push([1.0, s(k)]);
    }
    for k in 0..m {
        pts.push([s(m - k), 1.0]);
    }
    for k in 0..m {
        pts.push([0.0, s(m - k)]);
    }
    let mut edges: Vec<[usize; 2]> = loop_edges(0, 4 * m).collect();
    if let Some(p) = poly {
        let hp = split_loop(p, h);
        let off = pts.len();
        edges.extend(loop_edges(off, hp.len()));
        pts.extend(hp);
    }
    let mut local = triangulate(pts, edges, h, false)?;
    local.inside = match poly {
        Some(p) => local.tris.iter().map(|t| point_in_polygon(p, centroid(&local.nodes, t))).collect(),
        None => vec![false; local.tris.len()],
    };
    let nodes = &local.nodes;
    local.hole_edges.retain(|&[a, b]| {
        let mid = [(nodes[a][0] + nodes[b][0]) / 2.0, (nodes[a][1] + nodes[b][1]) / 2.0];
        !on_cell_boundary(mid)
    });
    check_slivers(&local.nodes, &local.tris, h, "cell")?;
    Ok(local)
}

fn on_cell_boundary(p: Point) -> bool {
    const T: f64 = 1e-12;
    p[0].abs() < T || (p[0] - 1.0).abs() < T || p[1].abs() < T || (p[1] - 1.0).abs() < T
}

fn mesh_window(cfg: &Configuration, h: f64, keep_inclusions: bool, hole_tag: BoundaryTag) -> Result<Mesh> {
    let l = cfg.window_side;
    if l == 0 {
        return Err(Error::Mesh("window side must be at least 1".into()));
    }
    let m = (1.0 / h).ceil().max(1.0) as usize;
    let big_n = (l * m) as i64;
    let mut by_cell: BTreeMap<[i64; 2], usize> = BTreeMap::new();
    for (i, p) in cfg.placements.iter().enumerate() {
        if p.cell[0] < 0 || p.cell[1] < 0 || p.cell[0] >= l as i64 || p.cell[1] >= l as i64 {
            return Err(Error::Mesh(format!("placement in cell {:?} lies outside the {l}x{l} window", p.cell)));
        }
        if by_cell.insert(p.cell, i).is_some() {
            return Err(Error::Mesh(format!("cell {:?} holds more than one inclusion", p.cell)));
        }
    }

    let mut cache: HashMap<(String, u8, u64), Local> = HashMap::new();
    let mut empty: Option<Local> = None;
    let mut nodes: Vec<Point> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut materials: Vec<Material> = Vec::new();
    let mut edges: Vec<TaggedEdge> = Vec::new();
    let mut keyed: HashMap<(i64, i64), usize> = HashMap::new();

    for cy in 0..l as i64 {
        for cx in 0..l as i64 {
            let placement = by_cell.get(&[cx, cy]).map(|&i| (i, &cfg.placements[i]));
            let local: &Local = match placement {
                None => {
                    if empty.is_none() {
                        empty = Some(mesh_cell(None, m, h)?);
                    }
                    empty.as_ref().expect("set")
                }
                Some((_, p)) => {
                    let key = (p.shape_id.clone(), p.op as u8, p.scale.to_bits());
                    if !cache.contains_key(&key) {
                        let shape = cfg.shape(&p.shape_id)?;
                        let poly = shape.placed(p.op, p.scale, [0.5, 0.5]);
                        cache.insert(key.clone(), mesh_cell(Some(&poly), m, h)?);
                    }
                    &cache[&key]
                }
            };
            let mut map = vec![0usize; local.nodes.len()];
            for (i, &q) in local.nodes.iter().enumerate() {
                if on_cell_boundary(q) {
                    let gx = cx * m as i64 + (q[0] * m as f64).round() as i64;
                    let gy = cy * m as i64 + (q[1] * m as f64).round() as i64;
                    map[i] = *keyed.entry((gx, gy)).or_insert_with(|| {
                        nodes.push([gx as f64 / m as f64, gy as f64 / m as f64]);
                        nodes.len() - 1
                    });
                } else {
                    nodes.push([cx as f64 + q[0], cy as f64 + q[1]]);
                    map[i] = nodes.len() - 1;
                }
            }
            let inc = placement.map(|(i, _)| i as u32);
            for (t, &inside) in local.tris.iter().zip(&local.inside) {
                if inside && !keep_inclusions {
                    continue;
                }
                tris.push([map[t[0]], map[t[1]], map[t[2]]]);
                materials.push(match (inside, inc) {
                    (true, Some(k)) => Material::Inclusion(k),
                    _ => Material::Matrix,
                });
            }
            for &[a, b] in &local.hole_edges {
                edges.push(TaggedEdge { nodes: [map[a], map[b]], tag: hole_tag });
            }
        }
    }

    // outer window faces: x = 0 and y = 0 are masters, x = N and y = N slaves
    let key = |gx: i64, gy: i64| keyed[&(gx, gy)];
    for j in 0..big_n {
        edges.push(TaggedEdge { nodes: [key(0, j), key(0, j + 1)], tag: BoundaryTag::PeriodicMaster });
        edges.push(TaggedEdge { nodes: [key(j, 0), key(j + 1, 0)], tag: BoundaryTag::PeriodicMaster });
        edges.push(TaggedEdge { nodes: [key(big_n, j), key(big_n, j + 1)], tag: BoundaryTag::PeriodicSlave });
        edges.push(TaggedEdge { nodes: [key(j, big_n), key(j + 1, big_n)], tag: BoundaryTag::PeriodicSlave });
    }
    let mut periodic: Vec<(usize, usize)> = keyed
        .iter()
        .filter(|(&(gx, gy), _)| gx == big_n || gy == big_n)
        .map(|(&(gx, gy), &s)| (s, key(gx % big_n, gy % big_n)))
        .collect();
    periodic.sort_unstable();

    if !keep_inclusions {
        let map = compact(&mut nodes, &mut tris);
        for e in &mut edges {
            e.nodes = [map[e.nodes[0]].expect("boundary node kept"), map[e.nodes[1]].expect("boundary node kept")];
        }
        for p in &mut periodic {
            *p = (map[p.0].expect("kept"), map[p.1].expect("kept"));
        }
    }
    Ok(Mesh { nodes, triangles: tris, materials, edges, periodic, period: Some(l as f64), h })
}

/// Meshes `domain` with target edge length `h`.
pub fn build_mesh(domain: &Domain, h: f64) -> Result<Mesh> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("mesh size must be positive, got {h}")));
    }
    let mesh = match *domain {
        Domain::ShapeInterior(shape) => mesh_shape(shape, h)?,
        Domain::PerforatedCell { cfg, hole_tag } => {
            if !matches!(hole_tag, BoundaryTag::Dirichlet | BoundaryTag::Interface) {
                return Err(Error::Parameter("hole boundaries must be tagged dirichlet or interface".into()));
            }
            mesh_window(cfg, h, false, hole_tag)?
        }
        Domain::TwoPhaseTorus { cfg, epsilon } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
            }
            let mesh = mesh_window(cfg, h, true, BoundaryTag::Interface)?;
            mesh.mapped(crate::geometry::SymmetryOp::Identity, epsilon, [0.0, 0.0])
        }
    };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Placement, SymmetryOp};

    fn one_cell(shape: InclusionShape, l: usize) -> Configuration {
        let mut placements = Vec::new();
        for cy in 0..l as i64 {
            for cx in 0..l as i64 {
                placements.push(Placement { cell: [cx, cy], shape_id: shape.id.clone(), op: SymmetryOp::Identity, scale: 1.0 });
            }
        }
        Configuration::new(l, placements, vec![shape], 0)
    }

    #[test]
    fn unit_square_interior() {
        let sq = InclusionShape::square("sq", 1.0).unwrap();
        let mesh = build_mesh(&Domain::ShapeInterior(&sq), 1.0 / 8.0).unwrap();
        assert!(mesh.triangles.len() >= 128, "{}", mesh.triangles.len());
        assert!((mesh.area() - 1.0).abs() < 1e-12);
        assert!(mesh.edges.iter().all(|e| e.tag == BoundaryTag::Dirichlet));
        let perim: f64 = mesh.edges.iter().map(|e| dist(&mesh, e)).sum();
        assert!((perim - 4.0).abs() < 1e-12);
    }

    fn dist(m: &Mesh, e: &TaggedEdge) -> f64 {
        let (a, b) = (m.nodes[e.nodes[0]], m.nodes[e.nodes[1]]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn nonconvex_shape_interior() {
        let l = InclusionShape::new("ell", vec![[0.0, 0.0], [0.3, 0.0], [0.3, 0.1], [0.1, 0.1], [0.1, 0.3], [0.0, 0.3]]).unwrap();
        let mesh = build_mesh(&Domain::ShapeInterior(&l), 0.02).unwrap();
        assert!((mesh.area() - l.area()).abs() < 1e-12);
    }

    #[test]
    fn perforated_cell_area() {
        let cfg = one_cell(InclusionShape::square("hole", 0.4).unwrap(), 1);
        let mesh = build_mesh(&Domain::PerforatedCell { cfg: &cfg, hole_tag: BoundaryTag::Interface }, 1.0 / 16.0).unwrap();
        assert!((mesh.material_area(|m| m == Material::Matrix) - 0.84).abs() < 1e-6);
        assert!(mesh.materials.iter().all(|&m| m == Material::Matrix));
        let hole: f64 = mesh.edges_tagged(BoundaryTag::Interface).map(|e| dist(&mesh, e)).sum();
        assert!((hole - 1.6).abs() < 1e-12);
        // every slave pairs with a master one period away
        assert_eq!(mesh.periodic.len(), 2 * 16 + 1);
    }

    #[test]
    fn two_phase_torus_area() {
        let shape = InclusionShape::disk("d", 0.3, 24).unwrap();
        let cfg = one_cell(shape.clone(), 2);
        let mesh = build_mesh(&Domain::TwoPhaseTorus { cfg: &cfg, epsilon: 0.5 }, 1.0 / 8.0).unwrap();
        let inc = mesh.material_area(Material::is_inclusion);
        assert!((inc - 4.0 * shape.area() * 0.25).abs() < 1e-12);
        assert!((mesh.area() - 1.0).abs() < 1e-12);
        assert_eq!(mesh.period, Some(1.0));
        assert!(mesh.materials.iter().any(|&m| m == Material::Matrix));
    }

    #[test]
    fn text_roundtrip() {
        let shape = InclusionShape::square("q", 0.3).unwrap();
        let cfg = one_cell(shape, 2);
        let mesh = build_mesh(&Domain::TwoPhaseTorus { cfg: &cfg, epsilon: 0.5 }, 0.25).unwrap();
        let back = Mesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(back, mesh);
        assert!(Mesh::from_text("# hcband.mesh/1\nh 0.1\n").is_err());
    }

    #[test]
    fn deterministic() {
        let shape = InclusionShape::disk("d", 0.35, 17).unwrap();
        let a = build_mesh(&Domain::ShapeInterior(&shape), 0.03).unwrap();
        let b = build_mesh(&Domain::ShapeInterior(&shape), 0.03).unwrap();
        assert_eq!(a, b);
    }
}
