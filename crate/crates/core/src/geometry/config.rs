use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::shape::{polygon_distance, InclusionShape, Point, SymmetryOp};
use crate::error::{Error, Result};

pub const CONFIG_SCHEMA: &str = "hcband.configuration/1";

/// Minimum distance between an inclusion and the boundary of its cell.
pub const CELL_MARGIN: f64 = 0.05;

/// Upper bound on inclusion diameters.
pub const MAX_DIAMETER: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cell: [i64; 2],
    pub shape_id: String,
    pub op: SymmetryOp,
    pub scale: f64,
}

impl Placement {
    /// Polygon of the inclusion in window coordinates (cell side 1).
    pub fn polygon(&self, shape: &InclusionShape) -> Vec<Point> {
        let c = self.center();
        shape.placed(self.op, self.scale, c)
    }

    pub fn center(&self) -> Point {
        [self.cell[0] as f64 + 0.5, self.cell[1] as f64 + 0.5]
    }

    pub(crate) fn check_fits(&self, shape: &InclusionShape) -> Result<()> {
        let e = shape.apply_symmetry(self.op).extent();
        let half = 0.5 - CELL_MARGIN;
        if !(self.scale > 0.0) || self.scale * e[0] / 2.0 > half || self.scale * e[1] / 2.0 > half {
            return Err(Error::CellFit {
                cell: self.cell,
                reason: format!(
                    "shape {:?} under {:?} scaled by {} has extent {:.4}x{:.4}; must stay {CELL_MARGIN} inside the cell",
                    shape.id,
                    self.op,
                    self.scale,
                    self.scale * e[0],
                    self.scale * e[1]
                ),
            });
        }
        Ok(())
    }
}

/// A sampled finite window `[0, L)²` of a lattice inclusion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    #[serde(default = "config_schema")]
    pub schema: String,
    pub window_side: usize,
    pub placements: Vec<Placement>,
    pub shapes: Vec<InclusionShape>,
    pub seed: u64,
}

fn config_schema() -> String {
    CONFIG_SCHEMA.to_string()
}

impl Configuration {
    pub fn new(window_side: usize, placements: Vec<Placement>, shapes: Vec<InclusionShape>, seed: u64) -> Self {
        Self { schema: CONFIG_SCHEMA.to_string(), window_side, placements, shapes, seed }
    }

    pub fn empty(window_side: usize) -> Self {
        Self::new(window_side, Vec::new(), Vec::new(), 0)
    }

    pub fn shape(&self, id: &str) -> Result<&InclusionShape> {
        self.shapes
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Geometry(format!("unknown shape id {id:?}")))
    }

    pub fn polygons(&self) -> Result<Vec<Vec<Point>>> {
        self.placements.iter().map(|p| Ok(p.polygon(self.shape(&p.shape_id)?))).collect()
    }

    /// Inclusion area located in each cell, keyed by cell index.
    pub fn cell_areas(&self) -> Result<BTreeMap<[i64; 2], f64>> {
        let mut m = BTreeMap::new();
        for p in &self.placements {
            let a = self.shape(&p.shape_id)?.area() * p.scale * p.scale;
            *m.entry(p.cell).or_insert(0.0) += a;
        }
        Ok(m)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::parse("configuration", e))?;
        if c.schema != CONFIG_SCHEMA {
            return Err(Error::parse("configuration", format!("unknown schema {:?}", c.schema)));
        }
        let mut shapes = Vec::with_capacity(c.shapes.len());
        for s in &c.shapes {
            shapes.push(InclusionShape::new(s.id.clone(), s.vertices.clone())?);
        }
        for p in &c.placements {
            if !(p.scale.is_finite() && p.scale > 0.0) {
                return Err(Error::parse("configuration", "placement scale must be positive"));
            }
            if p.cell.iter().any(|&z| z < 0 || z as u64 >= c.window_side as u64) {
                return Err(Error::parse("configuration", format!("cell {:?} outside the window", p.cell)));
            }
            if !shapes.iter().any(|s| s.id == p.shape_id) {
                return Err(Error::parse("configuration", format!("unknown shape id {:?}", p.shape_id)));
            }
        }
        Ok(Self { shapes, ..c })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionCheck {
    pub index: usize,
    pub cell: [i64; 2],
    pub diameter: f64,
    pub diameter_ok: bool,
    pub contained: bool,
    /// Smallest distance to another inclusion (infinite if alone).
    pub min_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub inclusions: Vec<InclusionCheck>,
    /// Index pairs of inclusions whose closures intersect.
    pub overlaps: Vec<(usize, usize)>,
    /// Cells hosting more than one inclusion.
    pub crowded_cells: Vec<[i64; 2]>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.inclusions {
            if !c.diameter_ok {
                out.push(format!("inclusion {} in cell {:?}: diameter {:.4} >= {MAX_DIAMETER}", c.index, c.cell, c.diameter));
            }
            if !c.contained {
                out.push(format!("inclusion {} not contained in cell {:?} with margin {CELL_MARGIN}", c.index, c.cell));
            }
        }
        for (i, j) in &self.overlaps {
            out.push(format!("inclusions {i} and {j} overlap"));
        }
        for c in &self.crowded_cells {
            out.push(format!("cell {c:?} holds more than one inclusion"));
        }
        out
    }
}

/// Checks diameter, containment and disjointness for every placed inclusion.
pub fn validate_assumptions(cfg: &Configuration) -> ValidationReport {
    let polys: Vec<Option<Vec<Point>>> = cfg
        .placements
        .iter()
        .map(|p| cfg.shape(&p.shape_id).ok().map(|s| p.polygon(s)))
        .collect();
    let mut inclusions = Vec::with_capacity(polys.len());
    for (i, (p, poly)) in cfg.placements.iter().zip(&polys).enumerate() {
        let Some(poly) = poly else {
            inclusions.push(InclusionCheck {
                index: i,
                cell: p.cell,
                diameter: f64::NAN,
                diameter_ok: false,
                contained: false,
                min_separation: f64::NAN,
            });
            continue;
        };
        let diameter = cfg.shape(&p.shape_id).map(|s| s.diameter() * p.scale).unwrap_or(f64::NAN);
        let lo = [p.cell[0] as f64 + CELL_MARGIN, p.cell[1] as f64 + CELL_MARGIN];
        let hi = [p.cell[0] as f64 + 1.0 - CELL_MARGIN, p.cell[1] as f64 + 1.0 - CELL_MARGIN];
        let contained = poly.iter().all(|v| v[0] >= lo[0] && v[0] <= hi[0] && v[1] >= lo[1] && v[1] <= hi[1]);
        inclusions.push(InclusionCheck {
            index: i,
            cell: p.cell,
            diameter,
            diameter_ok: diameter < MAX_DIAMETER,
            contained,
            min_separation: f64::INFINITY,
        });
    }

    // pairwise tests restricted to neighbouring cells
    let mut by_cell: BTreeMap<[i64; 2], Vec<usize>> = BTreeMap::new();
    for (i, p) in cfg.placements.iter().enumerate() {
        by_cell.entry(p.cell).or_default().push(i);
    }
    let crowded_cells = by_cell.iter().filter(|(_, v)| v.len() > 1).map(|(c, _)| *c).collect();
    let mut overlaps = Vec::new();
    for (i, p) in cfg.placements.iter().enumerate() {
        let Some(pi) = &polys[i] else { continue };
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(others) = by_cell.get(&[p.cell[0] + dx, p.cell[1] + dy]) else { continue };
                for &j in others {
                    if j <= i {
                        continue;
                    }
                    let Some(pj) = &polys[j] else { continue };
                    let d = polygon_distance(pi, pj);
                    inclusions[i].min_separation = inclusions[i].min_separation.min(d);
                    inclusions[j].min_separation = inclusions[j].min_separation.min(d);
                    if d == 0.0 {
                        overlaps.push((i, j));
                    }
                }
            }
        }
    }
    let passed = overlaps.is_empty()
        && inclusions.iter().all(|c| c.diameter_ok && c.contained)
        && by_cell.values().all(|v| v.len() == 1);
    ValidationReport { inclusions, overlaps, crowded_cells, passed }
}

/// Averages of the inclusion indicator over every aligned sub-square of side
/// `ell` cells (stride one cell), in row-major order of their lower corner.
pub fn volume_fraction_average(cfg: &Configuration, ell: usize) -> Result<Vec<f64>> {
    let l = cfg.window_side;
    if ell == 0 || ell > l {
        return Err(Error::Parameter(format!("sub-cube side {ell} must lie in 1..={l}")));
    }
    let areas = cfg.cell_areas()?;
    let mut grid = vec![0.0; l * l];
    for (c, a) in areas {
        grid[c[1] as usize * l + c[0] as usize] += a;
    }
    let n = l - ell + 1;
    let norm = (ell * ell) as f64;
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let mut s = 0.0;
            for j in y..y + ell {
                for i in x..x + ell {
                    s += grid[j * l + i];
                }
            }
            out.push(s / norm);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::model::{generate_configuration, InclusionModel, ScalingLaw};

    #[test]
    fn periodic_disk_passes() {
        let s = InclusionShape::disk("d", 0.2, 64).unwrap();
        let cfg = generate_configuration(&InclusionModel::periodic_single(s), 3, 0).unwrap();
        let r = validate_assumptions(&cfg);
        assert!(r.passed, "{:?}", r.failures());
        assert!(r.inclusions.iter().all(|c| c.min_separation > 0.5));
    }

    #[test]
    fn overlap_is_reported_with_both_indices() {
        let s = InclusionShape::square("s", 0.2).unwrap();
        let mk = |op| Placement { cell: [0, 0], shape_id: "s".into(), op, scale: 1.0 };
        let cfg = Configuration::new(1, vec![mk(SymmetryOp::Identity), mk(SymmetryOp::Rot90)], vec![s], 0);
        let r = validate_assumptions(&cfg);
        assert!(!r.passed);
        assert_eq!(r.overlaps, vec![(0, 1)]);
        assert!(r.failures().iter().any(|f| f.contains('0') && f.contains('1')));
    }

    #[test]
    fn diameter_rule() {
        let s = InclusionShape::disk("big", 0.3, 64).unwrap();
        let cfg = Configuration::new(
            1,
            vec![Placement { cell: [0, 0], shape_id: "big".into(), op: SymmetryOp::Identity, scale: 1.0 }],
            vec![s],
            0,
        );
        let r = validate_assumptions(&cfg);
        assert!(!r.passed);
        assert!(!r.inclusions[0].diameter_ok);
        assert!(r.inclusions[0].contained);
    }

    #[test]
    fn averages_for_periodic_and_empty() {
        let s = InclusionShape::rectangle("q", 0.2, 0.4).unwrap();
        let cfg = generate_configuration(&InclusionModel::periodic_single(s), 6, 0).unwrap();
        for ell in 1..=6 {
            for a in volume_fraction_average(&cfg, ell).unwrap() {
                assert!((a - 0.08).abs() < 1e-15);
            }
        }
        let e = generate_configuration(&InclusionModel::empty(), 4, 0).unwrap();
        assert!(volume_fraction_average(&e, 2).unwrap().iter().all(|a| *a == 0.0));
        assert!(volume_fraction_average(&e, 5).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let s = InclusionShape::rectangle("q", 0.2, 0.4).unwrap();
        let m = InclusionModel::iid_scaling(s, ScalingLaw::Uniform { r1: 0.5, r2: 0.9 }).unwrap();
        let cfg = generate_configuration(&m, 3, 11).unwrap();
        let back = Configuration::from_json_str(&cfg.to_json_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(Configuration::from_json_str("{}").is_err());
    }
}
