//! Text emitters. Every file starts with a schema tag: the first line of a
//! CSV table, the first key of a JSON document, a comment right after the
//! XML prologue of an SVG diagram.

use std::fmt::Write as _;

use hcband_core::zhikov::{GridRow, SetLabel, SpectralSet};
use serde::Serialize;

pub const GRID_SCHEMA: &str = "hcband.grid/1";
pub const SETS_SCHEMA: &str = "hcband.sets/1";
pub const EIGS_SCHEMA: &str = "hcband.eigs/1";
pub const BETA_INF_SCHEMA: &str = "hcband.beta-inf/1";
pub const EPS_SCHEMA: &str = "hcband.eps-spectrum/1";
pub const ENERGY_SCHEMA: &str = "hcband.rve-energies/1";
pub const BANDS_SCHEMA: &str = "hcband.bands/1";

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// A schema-tagged CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub schema: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(schema: &'static str, header: &[&str]) -> Self {
        Self { schema, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = format!("# schema: {}\n{}\n", self.schema, self.header.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn beta_columns(ncomp: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..ncomp {
        for j in i..ncomp {
            out.push(format!("beta_{}{}", i + 1, j + 1));
        }
    }
    out
}

/// The grid table: λ, upper triangle of 𝛃, β_max, β∞ and the band counts.
pub fn grid_csv(table: &[GridRow], ncomp: usize) -> String {
    let mut header = vec!["lambda".to_string()];
    header.extend(beta_columns(ncomp));
    header.extend(["beta_max", "beta_inf", "count_hom", "count_g", "in_sigma_a0"].map(String::from));
    let nb = ncomp * (ncomp + 1) / 2;
    let mut csv = Csv { schema: GRID_SCHEMA, header, rows: Vec::new() };
    for r in table {
        let mut row = vec![num(r.lambda)];
        match &r.beta {
            Some(b) => row.extend(b.iter().map(|&x| num(x))),
            None => row.extend(std::iter::repeat_n(String::new(), nb)),
        }
        row.push(opt(r.beta_max, num));
        row.push(opt(r.beta_inf, num));
        row.push(opt(r.count_hom, |c| c.to_string()));
        row.push(opt(r.count_g, |c| c.to_string()));
        row.push((r.in_sigma_a0 as u8).to_string());
        csv.push(row);
    }
    csv.render()
}

#[derive(Debug, Clone, Serialize)]
struct SetsFile<'a> {
    schema: &'static str,
    /// Number of displacement components; a band with fewer nonnegative
    /// β-eigenvalues than this is weak.
    ncomp: usize,
    sets: &'a [SpectralSet],
}

/// The sets as one JSON document.
pub fn sets_json(sets: &[SpectralSet], ncomp: usize) -> String {
    let mut s = serde_json::to_string_pretty(&SetsFile { schema: SETS_SCHEMA, ncomp, sets }).expect("serializable");
    s.push('\n');
    s
}

/// Reads a document written by [`sets_json`].
pub fn parse_sets_json(text: &str) -> Result<(Vec<SpectralSet>, usize), String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if v.get("schema").and_then(|s| s.as_str()) != Some(SETS_SCHEMA) {
        return Err(format!("expected schema {SETS_SCHEMA}"));
    }
    let ncomp = v.get("ncomp").and_then(|n| n.as_u64()).filter(|n| (1..=3).contains(n)).ok_or("ncomp must be 1, 2 or 3")?;
    let sets = v.get("sets").and_then(|s| s.as_array()).ok_or("missing sets array")?;
    let sets = sets
        .iter()
        .map(|s| SpectralSet::from_json_str(&s.to_string()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((sets, ncomp as usize))
}

/// Any serializable report as pretty JSON with a trailing newline.
pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

// diagram geometry, in SVG user units
pub const WIDTH: f64 = 800.0;
pub const LEFT: f64 = 110.0;
pub const RIGHT: f64 = 30.0;
pub const PLOT_W: f64 = WIDTH - LEFT - RIGHT;
const TOP: f64 = 20.0;
const LANE_H: f64 = 28.0;
const LANE_GAP: f64 = 14.0;

/// x-coordinate of `λ` on a diagram with axis `[0, λ_max]`.
pub fn axis_x(lambda: f64, lambda_max: f64) -> f64 {
    if lambda_max > 0.0 {
        LEFT + lambda / lambda_max * PLOT_W
    } else {
        LEFT
    }
}

fn label_text(l: SetLabel) -> &'static str {
    match l {
        SetLabel::SigmaA0 => "σ(A₀)",
        SetLabel::SigmaAhom => "σ(A^hom)",
        SetLabel::G => "𝒢",
    }
}

fn label_id(l: SetLabel) -> &'static str {
    match l {
        SetLabel::SigmaA0 => "sigma-a0",
        SetLabel::SigmaAhom => "sigma-hom",
        SetLabel::G => "g",
    }
}

fn color(l: SetLabel) -> &'static str {
    match l {
        SetLabel::SigmaA0 => "#555555",
        SetLabel::SigmaAhom => "#1f77b4",
        SetLabel::G => "#d62728",
    }
}

/// A colored piece of a lane; `weak` carries the propagating-mode count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub weak: Option<usize>,
}

/// Splits the intervals of `set` into strong and weak pieces using its
/// per-gridpoint annotation. Each sample owns the stretch up to the
/// midpoints with its neighbours.
pub fn band_pieces(set: &SpectralSet, ncomp: usize) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    for &[a, b] in &set.intervals {
        let inside: Vec<_> = set.annotation.iter().filter(|s| s.lambda >= a && s.lambda <= b).collect();
        let class = |c: Option<usize>| c.filter(|&c| c >= 1 && c < ncomp);
        if inside.is_empty() {
            out.push(Piece { lo: a, hi: b, weak: None });
            continue;
        }
        let mut lo = a;
        for (i, s) in inside.iter().enumerate() {
            let hi = inside.get(i + 1).map_or(b, |n| 0.5 * (s.lambda + n.lambda));
            let weak = class(s.count);
            match out.last_mut() {
                Some(p) if p.hi == lo && p.weak == weak => p.hi = hi,
                _ => out.push(Piece { lo, hi, weak }),
            }
            lo = hi;
        }
    }
    out
}

/// SVG band diagram: one lane per set along a shared λ-axis. Gaps are left
/// white, strong bands are filled, weak bands are hatched and labeled with
/// their count. σ(A₀), if among the sets, is overlaid on every lane.
pub fn emit_band_diagram(sets: &[SpectralSet], ncomp: usize) -> String {
    let lambda_max = sets.iter().map(|s| s.lambda_max).fold(0.0, f64::max);
    let lanes = sets.len() as f64;
    let axis_y = TOP + lanes * (LANE_H + LANE_GAP);
    let height = axis_y + 40.0;
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(s, "<!-- schema: {BANDS_SCHEMA} -->");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    s.push_str("<defs>\n");
    for set in sets {
        let _ = writeln!(
            s,
            "<pattern id=\"hatch-{}\" class=\"weak-hatch\" patternUnits=\"userSpaceOnUse\" width=\"6\" height=\"6\" patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"white\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"{}\" stroke-width=\"2.5\"/></pattern>",
            label_id(set.label),
            color(set.label)
        );
    }
    s.push_str("</defs>\n");
    let sigma0 = sets.iter().find(|x| x.label == SetLabel::SigmaA0);
    for (i, set) in sets.iter().enumerate() {
        let y = TOP + i as f64 * (LANE_H + LANE_GAP);
        let id = label_id(set.label);
        let _ = writeln!(s, "<g class=\"lane\" id=\"lane-{id}\">");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            LEFT - 8.0,
            y + LANE_H / 2.0 + 4.0,
            label_text(set.label)
        );
        let _ = writeln!(
            s,
            "<rect class=\"lane-frame\" x=\"{LEFT}\" y=\"{y}\" width=\"{PLOT_W}\" height=\"{LANE_H}\" fill=\"white\" stroke=\"#999999\"/>"
        );
        for p in band_pieces(set, ncomp) {
            let (x0, x1) = (axis_x(p.lo, lambda_max), axis_x(p.hi, lambda_max));
            match p.weak {
                None => {
                    let _ = writeln!(
                        s,
                        "<rect class=\"band strong\" x=\"{x0}\" y=\"{y}\" width=\"{}\" height=\"{LANE_H}\" fill=\"{}\"/>",
                        x1 - x0,
                        color(set.label)
                    );
                }
                Some(c) => {
                    let _ = writeln!(
                        s,
                        "<rect class=\"band weak\" x=\"{x0}\" y=\"{y}\" width=\"{}\" height=\"{LANE_H}\" fill=\"url(#hatch-{id})\" stroke=\"{}\"/>",
                        x1 - x0,
                        color(set.label)
                    );
                    let _ = writeln!(
                        s,
                        "<text class=\"count\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{c}</text>",
                        0.5 * (x0 + x1),
                        y - 2.0
                    );
                }
            }
        }
        for &pt in &set.points {
            let x = axis_x(pt, lambda_max);
            let _ = writeln!(
                s,
                "<line class=\"point\" x1=\"{x}\" y1=\"{y}\" x2=\"{x}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>",
                y + LANE_H,
                color(set.label)
            );
        }
        if let Some(s0) = sigma0 {
            let yb = y + LANE_H - 4.0;
            for &[a, b] in &s0.intervals {
                let (x0, x1) = (axis_x(a, lambda_max), axis_x(b, lambda_max));
                let _ = writeln!(
                    s,
                    "<rect class=\"sigma-a0\" x=\"{x0}\" y=\"{yb}\" width=\"{}\" height=\"4\" fill=\"black\"/>",
                    x1 - x0
                );
            }
            for &pt in &s0.points {
                let x = axis_x(pt, lambda_max);
                let _ = writeln!(
                    s,
                    "<circle class=\"sigma-a0\" cx=\"{x}\" cy=\"{}\" r=\"2.5\" fill=\"black\"/>",
                    y + LANE_H - 2.0
                );
            }
        }
        s.push_str("</g>\n");
    }
    // axis with five ticks
    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"black\"/>",
        LEFT + PLOT_W
    );
    for k in 0..=4 {
        let lam = lambda_max * k as f64 / 4.0;
        let x = axis_x(lam, lambda_max);
        let _ = writeln!(
            s,
            "<line x1=\"{x}\" y1=\"{axis_y}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/><text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{lam:.4}</text>",
            axis_y + 5.0,
            axis_y + 18.0
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">λ</text>", LEFT + PLOT_W / 2.0, axis_y + 34.0);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use hcband_core::zhikov::BandSample;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -2.5, 1e-9, 3.0e20, 0.1 + 0.2, 123.456] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn mixed_annotation_splits_into_pieces() {
        let mut set = SpectralSet::new(SetLabel::SigmaAhom, 10.0, vec![[0.0, 4.0]], vec![]);
        set.annotation = [0.0, 1.0, 2.0, 3.0, 4.0]
            .iter()
            .zip([2, 2, 1, 1, 2])
            .map(|(&lambda, c)| BandSample { lambda, count: Some(c) })
            .collect();
        let p = band_pieces(&set, 2);
        assert_eq!(
            p,
            vec![
                Piece { lo: 0.0, hi: 1.5, weak: None },
                Piece { lo: 1.5, hi: 3.5, weak: Some(1) },
                Piece { lo: 3.5, hi: 4.0, weak: None }
            ]
        );
    }

    proptest::proptest! {
        #[test]
        fn any_finite_number_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            proptest::prop_assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }

        #[test]
        fn pieces_tile_each_interval(counts in proptest::collection::vec(0usize..3, 2..20)) {
            let n = counts.len();
            let hi = (n - 1) as f64;
            let mut set = SpectralSet::new(SetLabel::G, hi, vec![[0.0, hi]], vec![]);
            set.annotation = counts.iter().enumerate().map(|(i, &c)| BandSample { lambda: i as f64, count: Some(c) }).collect();
            let p = band_pieces(&set, 2);
            proptest::prop_assert_eq!(p[0].lo, 0.0);
            proptest::prop_assert_eq!(p[p.len() - 1].hi, hi);
            for w in p.windows(2) {
                proptest::prop_assert_eq!(w[0].hi, w[1].lo);
                proptest::prop_assert!(w[0].weak != w[1].weak);
            }
        }
    }
}
