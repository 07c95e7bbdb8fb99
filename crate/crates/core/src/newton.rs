//! Newton polyhedra of two-variable Taylor data.
//!
//! The polyhedron is the convex hull of `⋃ (n + R²₊)` over the Taylor support.
//! Its boundary is a vertical ray, a chain of compact edges and a horizontal
//! ray; every face lies on a line `a₁n₁ + a₂n₂ = m` with nonnegative coprime
//! `(a₁, a₂)`. The Newton distance is `max m/(a₁+a₂)` over those lines, which
//! is computed exactly in rationals.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_integer::Integer;
use num_rational::Rational64;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::symbol::TaylorPolynomial;

/// Relative coefficient threshold used when none is supplied.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-9;

/// Roots of the edge polynomial closer than this are one multiple root.
pub const ROOT_CLUSTER_TOLERANCE: f64 = 1e-7;

pub type Exponent = (u32, u32);

/// `a₁ n₁ + a₂ n₂ = m` with `gcd(a₁, a₂) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportingLine {
    pub a1: i64,
    pub a2: i64,
    pub m: i64,
}

impl SupportingLine {
    fn through(p: Exponent, q: Exponent) -> Self {
        let a1 = p.1 as i64 - q.1 as i64;
        let a2 = q.0 as i64 - p.0 as i64;
        let g = a1.gcd(&a2);
        let (a1, a2) = (a1 / g, a2 / g);
        Self {
            a1,
            a2,
            m: a1 * p.0 as i64 + a2 * p.1 as i64,
        }
    }

    pub fn value(&self, n: Exponent) -> i64 {
        self.a1 * n.0 as i64 + self.a2 * n.1 as i64
    }

    pub fn diagonal_crossing(&self) -> Rational64 {
        Rational64::new(self.m, self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactEdge {
    /// Endpoint with the smaller `n₁`.
    pub left: Exponent,
    pub right: Exponent,
    pub line: SupportingLine,
    /// Every support point on the line, sorted by `n₁`.
    pub points: Vec<Exponent>,
}

impl CompactEdge {
    pub fn slope(&self) -> f64 {
        (self.right.1 as f64 - self.left.1 as f64) / (self.right.0 as f64 - self.left.0 as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonPolyhedron {
    pub support: Vec<Exponent>,
    /// Extreme points, sorted by increasing `n₁`.
    pub vertices: Vec<Exponent>,
    /// Ordered by decreasing slope (from the `n₁`-axis end towards the `n₂`-axis end).
    pub compact_edges: Vec<CompactEdge>,
    #[serde(skip)]
    coefficients: BTreeMap<Exponent, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceKind {
    Vertex,
    Edge,
    /// One of the two non-compact rays of the boundary.
    UnboundedEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adaptedness {
    Adapted,
    NotAdapted,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Height {
    Exact(Rational64),
    AtLeast(Rational64),
}

impl Serialize for Height {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Height::Exact(r) => s.serialize_str(&r.to_string()),
            Height::AtLeast(r) => s.serialize_str(&format!(">={r}")),
        }
    }
}

pub(crate) fn ser_rational<S: Serializer>(r: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipalFaceReport {
    #[serde(serialize_with = "ser_rational")]
    pub distance: Rational64,
    pub face_kind: FaceKind,
    pub supporting_line: Option<SupportingLine>,
    /// The vertex `(d, d)` when the face is a vertex.
    pub vertex: Option<Exponent>,
    pub adapted: Adaptedness,
    pub height: Height,
    /// How adaptedness was decided, for reports.
    pub criterion: Option<String>,
}

/// `1e-9 · max|coefficient|`.
pub fn default_threshold(taylor: &TaylorPolynomial) -> f64 {
    DEFAULT_RELATIVE_THRESHOLD * taylor.max_abs_coefficient()
}

pub fn build_polyhedron(taylor: &TaylorPolynomial, coeff_threshold: f64) -> Result<NewtonPolyhedron> {
    if taylor.dimension() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: taylor.dimension(),
        });
    }
    if !(coeff_threshold >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "coefficient threshold must be nonnegative, got {coeff_threshold}"
        )));
    }
    let coefficients: BTreeMap<Exponent, f64> = taylor
        .terms()
        .filter(|(_, c)| c.abs() > coeff_threshold)
        .map(|(e, c)| ((e[0], e[1]), c))
        .collect();
    from_coefficients(coefficients)
}

/// Polyhedron of a bare support set (all coefficients taken as 1).
pub fn polyhedron_from_support(support: &[Exponent]) -> Result<NewtonPolyhedron> {
    from_coefficients(support.iter().map(|&e| (e, 1.0)).collect())
}

fn cross(o: Exponent, a: Exponent, b: Exponent) -> i64 {
    let (ox, oy) = (o.0 as i64, o.1 as i64);
    (a.0 as i64 - ox) * (b.1 as i64 - oy) - (a.1 as i64 - oy) * (b.0 as i64 - ox)
}

fn from_coefficients(coefficients: BTreeMap<Exponent, f64>) -> Result<NewtonPolyhedron> {
    if coefficients.is_empty() {
        return Err(Error::InsufficientOrder);
    }
    let support: Vec<Exponent> = coefficients.keys().copied().collect();

    // Staircase of non-dominated points: n₁ increasing, n₂ strictly decreasing.
    let mut stairs: Vec<Exponent> = Vec::new();
    for &p in &support {
        match stairs.last() {
            Some(&last) if p.1 >= last.1 => {}
            Some(&last) if p.0 == last.0 => {
                stairs.pop();
                stairs.push(p);
            }
            _ => stairs.push(p),
        }
    }

    // Lower convex chain; collinear middle points are not vertices.
    let mut hull: Vec<Exponent> = Vec::new();
    for &p in &stairs {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }

    let mut compact_edges: Vec<CompactEdge> = hull
        .windows(2)
        .map(|w| {
            let line = SupportingLine::through(w[0], w[1]);
            let points = support.iter().copied().filter(|&n| line.value(n) == line.m).collect();
            CompactEdge {
                left: w[0],
                right: w[1],
                line,
                points,
            }
        })
        .collect();
    compact_edges.reverse();

    Ok(NewtonPolyhedron {
        support,
        vertices: hull,
        compact_edges,
        coefficients,
    })
}

impl NewtonPolyhedron {
    pub fn coefficient(&self, n: Exponent) -> f64 {
        self.coefficients.get(&n).copied().unwrap_or(0.0)
    }

    /// Every supporting line of the boundary, the two rays included.
    pub fn supporting_lines(&self) -> Vec<(SupportingLine, FaceKind)> {
        let first = self.vertices[0];
        let last = *self.vertices.last().expect("nonempty");
        let mut lines = vec![(
            SupportingLine {
                a1: 1,
                a2: 0,
                m: first.0 as i64,
            },
            FaceKind::UnboundedEdge,
        )];
        lines.extend(self.compact_edges.iter().map(|e| (e.line, FaceKind::Edge)));
        lines.push((
            SupportingLine {
                a1: 0,
                a2: 1,
                m: last.1 as i64,
            },
            FaceKind::UnboundedEdge,
        ));
        lines
    }

    pub fn edge_on(&self, line: &SupportingLine) -> Option<&CompactEdge> {
        self.compact_edges.iter().find(|e| e.line == *line)
    }

    /// Boundary path with the rays clipped at `extent`, in the style of the
    /// hull figures: `(0,3.5)--(0,3)--(2,0)--(3.5,0)`.
    pub fn coordinate_list(&self, extent: f64) -> String {
        let first = self.vertices[0];
        let last = *self.vertices.last().expect("nonempty");
        let mut pts = vec![(first.0 as f64, extent)];
        pts.extend(self.vertices.iter().map(|v| (v.0 as f64, v.1 as f64)));
        pts.push((extent, last.1 as f64));
        pts.iter()
            .map(|(x, y)| format!("({x},{y})"))
            .collect::<Vec<_>>()
            .join("--")
    }

    pub fn to_tikz(&self, extent: f64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\begin{{tikzpicture}}");
        let _ = writeln!(s, "  \\draw (-0.2,0)--({},0);", extent + 0.2);
        let _ = writeln!(s, "  \\draw (0,-0.2)--(0,{});", extent + 0.2);
        let _ = writeln!(s, "  \\draw [dashed](-0.2,-0.2)--({extent},{extent});");
        let _ = writeln!(
            s,
            "  \\fill [fill=gray!50][opacity=0.5] {}--({extent},{extent})-- cycle;",
            self.coordinate_list(extent)
        );
        for p in &self.support {
            let _ = writeln!(s, "  \\fill ({},{}) circle (1.5pt);", p.0, p.1);
        }
        let _ = writeln!(s, "\\end{{tikzpicture}}");
        s
    }

    pub fn to_svg(&self, extent: f64) -> String {
        let scale = 40.0;
        let size = (extent + 1.0) * scale;
        let tx = |x: f64| (x + 0.5) * scale;
        let ty = |y: f64| size - (y + 0.5) * scale;
        let first = self.vertices[0];
        let last = *self.vertices.last().expect("nonempty");
        let mut pts = vec![(first.0 as f64, extent)];
        pts.extend(self.vertices.iter().map(|v| (v.0 as f64, v.1 as f64)));
        pts.push((extent, last.1 as f64));
        pts.push((extent, extent));
        let poly = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", tx(x), ty(y)))
            .collect::<Vec<_>>()
            .join(" ");
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\">\n"
        );
        let _ = writeln!(s, "  <polygon points=\"{poly}\" fill=\"#bbb\" fill-opacity=\"0.5\" stroke=\"black\"/>");
        let _ = writeln!(
            s,
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-dasharray=\"4\"/>",
            tx(0.0),
            ty(0.0),
            tx(extent),
            ty(extent)
        );
        for p in &self.support {
            let _ = writeln!(
                s,
                "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\"/>",
                tx(p.0 as f64),
                ty(p.1 as f64)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Distance and principal face; adaptedness is left undetermined.
pub fn principal_face(poly: &NewtonPolyhedron) -> Result<PrincipalFaceReport> {
    if poly.vertices.is_empty() {
        return Err(Error::InsufficientOrder);
    }
    let lines = poly.supporting_lines();
    let distance = lines
        .iter()
        .map(|(l, _)| l.diagonal_crossing())
        .max()
        .expect("at least two lines");
    let active: Vec<&(SupportingLine, FaceKind)> = lines
        .iter()
        .filter(|(l, _)| l.diagonal_crossing() == distance)
        .collect();

    let (face_kind, supporting_line, vertex) = if active.len() >= 2 {
        debug_assert!(distance.is_integer());
        let v = *distance.numer() as u32;
        (FaceKind::Vertex, None, Some((v, v)))
    } else {
        (active[0].1, Some(active[0].0), None)
    };

    Ok(PrincipalFaceReport {
        distance,
        face_kind,
        supporting_line,
        vertex,
        adapted: Adaptedness::Undetermined,
        height: Height::AtLeast(distance),
        criterion: None,
    })
}

/// Real roots with multiplicities of `Σ c_k y^k` (coefficients in increasing
/// degree). Roots closer than [`ROOT_CLUSTER_TOLERANCE`] are merged.
pub fn real_root_multiplicities(coeffs: &[f64]) -> Vec<(f64, usize)> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.last().is_some_and(|&x| x == 0.0) {
        c.pop();
    }
    let zero_mult = c.iter().take_while(|&&x| x == 0.0).count();
    let c = &c[zero_mult..];
    let mut roots: Vec<f64> = Vec::new();
    let deg = c.len().saturating_sub(1);
    if deg >= 1 {
        let lead = c[deg];
        let mut comp = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            comp[(i, deg - 1)] = -c[i] / lead;
        }
        for z in comp.complex_eigenvalues().iter() {
            if z.im.abs() <= ROOT_CLUSTER_TOLERANCE * z.re.abs().max(1.0) {
                roots.push(z.re);
            }
        }
    }
    roots.extend(std::iter::repeat_n(0.0, zero_mult));
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));

    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in roots {
        match out.last_mut() {
            Some((v, k)) if (r - *v).abs() <= ROOT_CLUSTER_TOLERANCE * v.abs().max(1.0) => {
                *v = (*v * *k as f64 + r) / (*k as f64 + 1.0);
                *k += 1;
            }
            _ => out.push((r, 1)),
        }
    }
    out
}

/// Adaptedness of the coordinates the Taylor data is written in.
///
/// Adapted when both `a₁, a₂ > 1` on the principal line, or when the edge
/// polynomial `P(y₁) = f_Γ(y₁, 1)` has no real root of multiplicity above
/// `d = m/(a₁+a₂)`. Anything else, and every vertex or ray face, stays
/// undetermined.
pub fn adaptedness_check(
    taylor: &TaylorPolynomial,
    poly: &NewtonPolyhedron,
    report: &PrincipalFaceReport,
) -> Adaptedness {
    adaptedness_with_reason(taylor, poly, report).0
}

fn adaptedness_with_reason(
    taylor: &TaylorPolynomial,
    poly: &NewtonPolyhedron,
    report: &PrincipalFaceReport,
) -> (Adaptedness, Option<String>) {
    let line = match (report.face_kind, report.supporting_line) {
        (FaceKind::Edge, Some(l)) => l,
        _ => return (Adaptedness::Undetermined, None),
    };
    if line.a1 > 1 && line.a2 > 1 {
        return (
            Adaptedness::Adapted,
            Some(format!("coprime weights a1={} a2={} both exceed 1", line.a1, line.a2)),
        );
    }
    let Some(edge) = poly.edge_on(&line) else {
        return (Adaptedness::Undetermined, None);
    };
    let max_deg = edge.points.iter().map(|p| p.0).max().unwrap_or(0) as usize;
    let mut coeffs = vec![0.0; max_deg + 1];
    for p in &edge.points {
        let c = if taylor.dimension() == 2 {
            taylor.coefficient(&[p.0, p.1])
        } else {
            poly.coefficient(*p)
        };
        coeffs[p.0 as usize] += c;
    }
    let roots = real_root_multiplicities(&coeffs);
    let worst = roots.iter().map(|&(_, k)| k).max().unwrap_or(0);
    let bound = report.distance;
    if Rational64::from_integer(worst as i64) <= bound {
        (
            Adaptedness::Adapted,
            Some(format!("edge polynomial max real-root multiplicity {worst} <= d = {bound}")),
        )
    } else {
        (Adaptedness::Undetermined, None)
    }
}

/// Builds the polyhedron with the default threshold and returns the full
/// report: distance, face, adaptedness and height.
pub fn analyze(taylor: &TaylorPolynomial) -> Result<(NewtonPolyhedron, PrincipalFaceReport)> {
    let poly = build_polyhedron(taylor, default_threshold(taylor))?;
    let mut report = principal_face(&poly)?;
    let (verdict, reason) = adaptedness_with_reason(taylor, &poly, &report);
    report.adapted = verdict;
    report.criterion = reason;
    if verdict == Adaptedness::Adapted {
        report.height = Height::Exact(report.distance);
    }
    Ok((poly, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_of(terms: &[((u32, u32), f64)]) -> TaylorPolynomial {
        let mut t = TaylorPolynomial::new(2, 8);
        for &((a, b), c) in terms {
            t.add_term(&[a, b], c);
        }
        t
    }

    #[test]
    fn nondegenerate_quadratic() {
        let p = polyhedron_from_support(&[(2, 0), (0, 2)]).unwrap();
        assert_eq!(p.vertices, vec![(0, 2), (2, 0)]);
        assert_eq!(p.compact_edges.len(), 1);
        assert_eq!(p.compact_edges[0].line, SupportingLine { a1: 1, a2: 1, m: 2 });
        let r = principal_face(&p).unwrap();
        assert_eq!(r.distance, Rational64::from_integer(1));
        assert_eq!(r.face_kind, FaceKind::Edge);
    }

    #[test]
    fn a2_edge() {
        let p = polyhedron_from_support(&[(2, 0), (0, 3)]).unwrap();
        assert_eq!(p.compact_edges[0].line, SupportingLine { a1: 3, a2: 2, m: 6 });
        let r = principal_face(&p).unwrap();
        assert_eq!(r.distance, Rational64::new(6, 5));
        assert_eq!(r.supporting_line, Some(SupportingLine { a1: 3, a2: 2, m: 6 }));
    }

    #[test]
    fn a3_edge_with_middle_point() {
        let p = polyhedron_from_support(&[(2, 0), (1, 2), (0, 4)]).unwrap();
        assert_eq!(p.vertices, vec![(0, 4), (2, 0)]);
        assert_eq!(p.compact_edges.len(), 1);
        let e = &p.compact_edges[0];
        assert_eq!(e.line, SupportingLine { a1: 2, a2: 1, m: 4 });
        assert_eq!(e.points, vec![(0, 4), (1, 2), (2, 0)]);
        let r = principal_face(&p).unwrap();
        assert_eq!(r.distance, Rational64::new(4, 3));
    }

    #[test]
    fn vertex_and_ray_faces() {
        // (1,1) is a vertex on the diagonal.
        let p = polyhedron_from_support(&[(3, 0), (1, 1), (0, 3)]).unwrap();
        let r = principal_face(&p).unwrap();
        assert_eq!(r.face_kind, FaceKind::Vertex);
        assert_eq!(r.vertex, Some((1, 1)));
        assert_eq!(r.distance, Rational64::from_integer(1));
        let t = poly_of(&[((3, 0), 1.0), ((1, 1), 1.0), ((0, 3), 1.0)]);
        let (_, full) = analyze(&t).unwrap();
        assert_eq!(full.adapted, Adaptedness::Undetermined);
        assert_eq!(full.height, Height::AtLeast(Rational64::from_integer(1)));

        // x²(1 + y³): the diagonal meets the vertical ray n₁ = 2.
        let p = polyhedron_from_support(&[(2, 0), (2, 3)]).unwrap();
        let r = principal_face(&p).unwrap();
        assert_eq!(r.face_kind, FaceKind::UnboundedEdge);
        assert_eq!(r.distance, Rational64::from_integer(2));
    }

    #[test]
    fn edges_sorted_by_decreasing_slope() {
        let p = polyhedron_from_support(&[(0, 6), (1, 2), (4, 0)]).unwrap();
        assert_eq!(p.compact_edges.len(), 2);
        assert!(p.compact_edges[0].slope() > p.compact_edges[1].slope());
    }

    #[test]
    fn empty_support_is_insufficient_order() {
        let t = poly_of(&[((2, 0), 1e-14)]);
        assert!(matches!(build_polyhedron(&t, 1e-9), Err(Error::InsufficientOrder)));
    }

    #[test]
    fn adaptedness_by_weights() {
        let t = poly_of(&[((2, 0), 1.0), ((0, 3), -1.0), ((2, 1), -2.0)]);
        let (_, r) = analyze(&t).unwrap();
        assert_eq!(r.adapted, Adaptedness::Adapted);
        assert_eq!(r.height, Height::Exact(Rational64::new(6, 5)));
        assert!(r.criterion.unwrap().contains("a1=3 a2=2"));
    }

    #[test]
    fn adaptedness_by_root_multiplicity() {
        // P(y₁) = y₁² + 1: no real roots.
        let t = poly_of(&[((2, 0), 1.0), ((0, 2), 1.0)]);
        let (_, r) = analyze(&t).unwrap();
        assert_eq!(r.adapted, Adaptedness::Adapted);

        // P(u) = u² − 3u + 2: simple roots 1, 2.
        let t = poly_of(&[((2, 0), 1.0), ((1, 2), -3.0), ((0, 4), 2.0)]);
        let (_, r) = analyze(&t).unwrap();
        assert_eq!(r.distance, Rational64::new(4, 3));
        assert_eq!(r.adapted, Adaptedness::Adapted);

        // (u − y²)² has a double root: 2 > 4/3, so nothing is claimed.
        let t = poly_of(&[((2, 0), 1.0), ((1, 2), -2.0), ((0, 4), 1.0)]);
        let (_, r) = analyze(&t).unwrap();
        assert_eq!(r.adapted, Adaptedness::Undetermined);
    }

    #[test]
    fn root_clustering() {
        let r = real_root_multiplicities(&[2.0, -3.0, 1.0]);
        assert_eq!(r.len(), 2);
        assert!((r[0].0 - 1.0).abs() < 1e-12 && r[0].1 == 1);
        let r = real_root_multiplicities(&[1.0, -2.0, 1.0]);
        assert_eq!(r, vec![(r[0].0, 2)]);
        let r = real_root_multiplicities(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(r.iter().find(|(v, _)| *v == 0.0).unwrap().1, 2);
        assert!(real_root_multiplicities(&[1.0, 0.0, 1.0]).is_empty());
    }

    #[test]
    fn renderers_follow_the_boundary() {
        let p = polyhedron_from_support(&[(2, 0), (0, 3)]).unwrap();
        assert_eq!(p.coordinate_list(3.5), "(0,3.5)--(0,3)--(2,0)--(3.5,0)");
        assert!(p.to_tikz(3.5).contains("(0,3.5)--(0,3)--(2,0)--(3.5,0)"));
        assert!(p.to_svg(3.5).starts_with("<svg"));
    }

    #[test]
    fn report_serializes() {
        let t = poly_of(&[((2, 0), 1.0), ((0, 3), 1.0)]);
        let (p, r) = analyze(&t).unwrap();
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["distance"], "6/5");
        assert_eq!(j["height"], "6/5");
        assert_eq!(j["face_kind"], "edge");
        assert!(serde_json::to_string(&p).unwrap().contains("compact_edges"));
    }
}
