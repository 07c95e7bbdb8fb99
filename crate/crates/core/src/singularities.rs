//! Critical points of the King's-grid phase, their singularity type and
//! height, the degeneracy curve `det Hess ω = 0`, and the A₃ points on it.
//!
//! Classification reads the exact Taylor jet: after shearing away the
//! Hessian's range direction, the `v³` coefficient separates A₂ from the
//! rest and the reduced quartic `c − b²/4a` of `a u² + b u v² + c v⁴`
//! separates A₃ from higher degeneracy. Heights are cross-checked against
//! the Newton polyhedron of the sheared jet.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;

use crate::newton::{self, ser_rational, Adaptedness};
use crate::oscillatory::is_king_grid;
use crate::symbol::{reduce_angle, taylor_shifted_phase, torus_distance, wrap_signed, HalfGeneratorSet, TorusPoint, TWO_PI};
use crate::{Error, Result};

/// `|det| < DET_RELATIVE_TOLERANCE · max(1, ‖H‖²)` counts as degenerate.
pub const DET_RELATIVE_TOLERANCE: f64 = 1e-9;
/// Tolerance on `|cᵢ|` and `|cᵢ + 1/2|` for the special loci.
pub const LOCUS_TOLERANCE: f64 = 1e-9;
/// Jet coefficients below this are zero. Degenerate roots are only located to
/// about the square root of machine precision, and the cubic is linear in
/// the distance to an A₃ point.
pub const JET_TOLERANCE: f64 = 1e-6;
pub const NEWTON_RESIDUAL: f64 = 1e-12;
pub const DEDUP_DISTANCE: f64 = 1e-8;
/// Merge radius for roots with a nearly singular Hessian. Newton pins a root
/// of multiplicity m only to about `NEWTON_RESIDUAL^(1/m)`, so copies of an
/// A₃ point reached from different seeds can sit further apart than
/// `DEDUP_DISTANCE`.
pub const DEGENERATE_DEDUP_DISTANCE: f64 = 1e-5;
const MAX_NEWTON_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;
/// Roots with `|det|` below this fraction of the scale are snapped onto the
/// degeneracy curve when the velocity allows it.
const SNAP_BAND: f64 = 1e-4;
const TAYLOR_ORDER: usize = 6;

// ---------------------------------------------------------------------------
// Local jets

/// Gradient, Hessian and third derivatives of `ω` at a point.
#[derive(Clone, Copy, Debug)]
struct LocalJet {
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
    /// `ω_xxx, ω_xxy, ω_xyy, ω_yyy`.
    third: [f64; 4],
}

impl LocalJet {
    fn at(gens: &HalfGeneratorSet, p: [f64; 2]) -> LocalJet {
        let mut j = LocalJet {
            grad: [0.0; 2],
            hess: [[0.0; 2]; 2],
            third: [0.0; 4],
        };
        for h in gens.half_generators() {
            let (a, b) = (h[0] as f64, h[1] as f64);
            let (s, c) = (a * p[0] + b * p[1]).sin_cos();
            j.grad[0] += 2.0 * a * s;
            j.grad[1] += 2.0 * b * s;
            j.hess[0][0] += 2.0 * a * a * c;
            j.hess[0][1] += 2.0 * a * b * c;
            j.hess[1][1] += 2.0 * b * b * c;
            j.third[0] -= 2.0 * a * a * a * s;
            j.third[1] -= 2.0 * a * a * b * s;
            j.third[2] -= 2.0 * a * b * b * s;
            j.third[3] -= 2.0 * b * b * b * s;
        }
        j.hess[1][0] = j.hess[0][1];
        j
    }

    fn det(&self) -> f64 {
        self.hess[0][0] * self.hess[1][1] - self.hess[0][1] * self.hess[0][1]
    }

    fn det_gradient(&self) -> [f64; 2] {
        let [h11, h12, h22] = [self.hess[0][0], self.hess[0][1], self.hess[1][1]];
        let [t0, t1, t2, t3] = self.third;
        [
            t0 * h22 + h11 * t2 - 2.0 * h12 * t1,
            t1 * h22 + h11 * t3 - 2.0 * h12 * t2,
        ]
    }

    fn frobenius_sq(&self) -> f64 {
        self.hess.iter().flatten().map(|v| v * v).sum()
    }

    /// Unit vector spanning the (approximate) kernel of the Hessian, taken
    /// orthogonal to the row with the larger diagonal entry.
    fn kernel_direction(&self) -> [f64; 2] {
        let [h11, h12, h22] = [self.hess[0][0], self.hess[0][1], self.hess[1][1]];
        let k = if h11.abs() >= h22.abs() { [-h12, h11] } else { [h22, -h12] };
        let n = k[0].hypot(k[1]);
        [k[0] / n, k[1] / n]
    }

    /// Cubic Taylor term `(1/6) D³ω[k, k, k]`.
    fn cubic_along(&self, k: [f64; 2]) -> f64 {
        let [t0, t1, t2, t3] = self.third;
        (t0 * k[0].powi(3) + 3.0 * t1 * k[0] * k[0] * k[1] + 3.0 * t2 * k[0] * k[1] * k[1] + t3 * k[1].powi(3)) / 6.0
    }
}

fn degeneracy_scale(jet: &LocalJet) -> f64 {
    jet.frobenius_sq().max(1.0)
}

/// `4(c₁c₂(1+2c₁)(1+2c₂) − 4s₁²s₂²)`, the King's-grid Hessian determinant.
pub fn king_hessian_det(cs: [f64; 4]) -> f64 {
    let [c1, s1, c2, s2] = cs;
    4.0 * (c1 * c2 * (1.0 + 2.0 * c1) * (1.0 + 2.0 * c2) - 4.0 * s1 * s1 * s2 * s2)
}

pub fn cs_of(p: [f64; 2]) -> [f64; 4] {
    let (s1, c1) = p[0].sin_cos();
    let (s2, c2) = p[1].sin_cos();
    [c1, s1, c2, s2]
}

fn require_plane(gens: &HalfGeneratorSet) -> Result<()> {
    if gens.dimension() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: gens.dimension(),
        });
    }
    Ok(())
}

fn point2(p: &TorusPoint) -> [f64; 2] {
    [p.coordinates()[0], p.coordinates()[1]]
}

// ---------------------------------------------------------------------------
// Types

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    NonDegenerate,
    CaseI,
    CaseIIa,
    #[serde(rename = "CaseIIb_A2")]
    CaseIIbA2,
    #[serde(rename = "CaseIIb_A3")]
    CaseIIbA3,
    /// Degenerate point of a generator set other than the King's grid, where
    /// the case loci do not apply.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SingularityType {
    A1,
    A2,
    A3,
}

impl SingularityType {
    pub fn height(&self) -> Rational64 {
        match self {
            SingularityType::A1 => Rational64::from_integer(1),
            SingularityType::A2 => Rational64::new(6, 5),
            SingularityType::A3 => Rational64::new(4, 3),
        }
    }
}

/// Coefficients of the principal part after the shear
/// `u = x − 2s₁s₂/(c₁(1+2c₂))·y`, as closed forms from the Case II
/// analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CaseCoefficients {
    /// `2c₁c₂ + c₁`, the `u²` coefficient.
    pub leading: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `α² − 4(2c₁c₂ + c₁)γ`.
    pub discriminant: f64,
}

/// The closed forms for the `uv²`, `v³` and `v⁴` coefficients,
/// transcribed without correction.
///
/// These disagree with the exact jet: the closed-form cubic swaps the two mixed
/// third-order terms, so `beta` is not the `v³` coefficient of the phase.
/// They are kept for reproducing the algebraic certificate.
pub fn case_coefficients(cs: [f64; 4]) -> CaseCoefficients {
    let [c1, s1, c2, s2] = cs;
    let e = 2.0 * c2 + 1.0;
    let alpha = -4.0 * s1.powi(3) * s2.powi(2) / (c1.powi(2) * e.powi(2))
        - 8.0 * s1.powi(2) * s2.powi(3) / (c1 * e.powi(2))
        - 8.0 * c2 * s1.powi(2) * s2 / (c1 * e)
        - 2.0 * c1 * s2;
    let beta = -8.0 * s1.powi(4) * s2.powi(3) / (3.0 * c1.powi(3) * e.powi(3))
        - 16.0 * s1.powi(3) * s2.powi(4) / (3.0 * c1.powi(2) * e.powi(3))
        - 8.0 * c2 * s1.powi(3) * s2.powi(2) / (c1.powi(2) * e.powi(2))
        - 4.0 * s1 * s2.powi(2) / e
        - 2.0 * c2 * s1 / 3.0
        - s2 / 3.0;
    let s1s2_4 = s1.powi(4) * s2.powi(4);
    let gamma = 16.0 * s1s2_4 / (3.0 * c1.powi(3) * e.powi(3))
        - 8.0 * c2 * s1s2_4 / (3.0 * c1.powi(3) * e.powi(4))
        - 4.0 * s1s2_4 / (3.0 * c1.powi(3) * e.powi(4))
        + 4.0 * s1 * s1 * s2 * s2 / (3.0 * c1 * e)
        - 4.0 * c2 * s1 * s1 * s2 * s2 / (c1 * e.powi(2))
        - c1 * c2 / 6.0
        - c2 / 12.0;
    let leading = 2.0 * c1 * c2 + c1;
    CaseCoefficients {
        leading,
        alpha,
        beta,
        gamma,
        discriminant: alpha * alpha - 4.0 * leading * gamma,
    }
}

/// Sheared jet data at a degenerate point: `P(u, v) = a u² + b u v² + b₃ v³ + c v⁴ + …`
/// with `v` along the Hessian kernel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JetClassification {
    /// Rows of `M` in `δ = M (u, v)`.
    pub shear: [[f64; 2]; 2],
    pub quadratic: f64,
    pub kernel_cubic: f64,
    pub mixed: f64,
    pub quartic: f64,
    /// `c − b²/(4a)`.
    pub reduced_quartic: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub location: TorusPoint,
    pub velocity: [f64; 2],
    pub cs: [f64; 4],
    pub hessian_det: f64,
    pub case_tag: CaseTag,
    pub singularity_type: SingularityType,
    #[serde(serialize_with = "ser_rational")]
    pub height: Rational64,
    pub coeffs: Option<CaseCoefficients>,
    pub jet: Option<JetClassification>,
    /// Newton distance of the (sheared) Taylor data.
    #[serde(serialize_with = "ser_opt_rational")]
    pub newton_distance: Option<Rational64>,
    pub newton_adapted: Option<Adaptedness>,
}

fn ser_opt_rational<S: serde::Serializer>(r: &Option<Rational64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

impl CriticalPoint {
    /// Whether the Newton-polyhedron height matches the classified height.
    pub fn newton_agrees(&self) -> bool {
        self.newton_distance == Some(self.height) && self.newton_adapted == Some(Adaptedness::Adapted)
    }
}

// ---------------------------------------------------------------------------
// Classification

fn shear_for(jet: &LocalJet) -> Matrix2<f64> {
    let [h11, h12, h22] = [jet.hess[0][0], jet.hess[0][1], jet.hess[1][1]];
    if h11.abs() >= h22.abs() {
        // x = u − (H₁₂/H₁₁) v, y = v
        Matrix2::new(1.0, -h12 / h11, 0.0, 1.0)
    } else {
        // x = v, y = u − (H₁₂/H₂₂) v
        Matrix2::new(0.0, 1.0, 1.0, -h12 / h22)
    }
}

/// Classifies the critical point at `p0` (for its own velocity `∇ω(p0)`).
pub fn classify_singularity(gens: &HalfGeneratorSet, p0: &TorusPoint) -> Result<CriticalPoint> {
    require_plane(gens)?;
    let p = point2(p0);
    let jet = LocalJet::at(gens, p);
    let det = jet.det();
    let cs = cs_of(p);
    let taylor = taylor_shifted_phase(gens, p0, TAYLOR_ORDER)?;
    let king = is_king_grid(gens);

    let mut point = CriticalPoint {
        location: p0.clone(),
        velocity: jet.grad,
        cs,
        hessian_det: det,
        case_tag: CaseTag::NonDegenerate,
        singularity_type: SingularityType::A1,
        height: SingularityType::A1.height(),
        coeffs: None,
        jet: None,
        newton_distance: None,
        newton_adapted: None,
    };

    let analysed = if det.abs() > DET_RELATIVE_TOLERANCE * degeneracy_scale(&jet) {
        taylor
    } else {
        if jet.frobenius_sq().sqrt() < LOCUS_TOLERANCE {
            return Err(Error::Unclassifiable {
                x: p[0],
                y: p[1],
                reason: "Hessian vanishes (corank 2)".into(),
            });
        }
        let m = shear_for(&jet);
        let md = DMatrix::from_column_slice(2, 2, m.as_slice());
        let sheared = taylor.linear_substitution(&md)?;
        let a = sheared.coefficient(&[2, 0]);
        let b = sheared.coefficient(&[1, 2]);
        let b3 = sheared.coefficient(&[0, 3]);
        let c = sheared.coefficient(&[0, 4]);
        let reduced = c - b * b / (4.0 * a);
        let kind = if b3.abs() > JET_TOLERANCE {
            SingularityType::A2
        } else if reduced.abs() > JET_TOLERANCE {
            SingularityType::A3
        } else {
            return Err(Error::Unclassifiable {
                x: p[0],
                y: p[1],
                reason: format!("v³ coefficient {b3:.3e} and reduced quartic {reduced:.3e} both vanish"),
            });
        };
        point.singularity_type = kind;
        point.height = kind.height();
        point.jet = Some(JetClassification {
            shear: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            quadratic: a,
            kernel_cubic: b3,
            mixed: b,
            quartic: c,
            reduced_quartic: reduced,
        });
        point.case_tag = if !king {
            CaseTag::Degenerate
        } else {
            let [c1, _, c2, _] = cs;
            if c1.abs() < LOCUS_TOLERANCE || c2.abs() < LOCUS_TOLERANCE {
                CaseTag::CaseI
            } else if (c1 + 0.5).abs() < LOCUS_TOLERANCE || (c2 + 0.5).abs() < LOCUS_TOLERANCE {
                CaseTag::CaseIIa
            } else {
                point.coeffs = Some(case_coefficients(cs));
                match kind {
                    SingularityType::A3 => CaseTag::CaseIIbA3,
                    _ => CaseTag::CaseIIbA2,
                }
            }
        };
        sheared
    };

    if let Ok((_, report)) = newton::analyze(&analysed) {
        point.newton_distance = Some(report.distance);
        point.newton_adapted = Some(report.adapted);
    }
    Ok(point)
}

// ---------------------------------------------------------------------------
// Critical points

#[derive(Clone, Debug, Serialize)]
pub struct NewtonFailure {
    pub seed: [f64; 2],
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPointSearch {
    pub velocity: [f64; 2],
    pub grid_n: usize,
    pub points: Vec<TorusPoint>,
    /// Seeds from which Newton did not converge.
    pub diagnostics: Vec<NewtonFailure>,
}

fn residual(gens: &HalfGeneratorSet, p: [f64; 2], v: [f64; 2]) -> (f64, LocalJet) {
    let jet = LocalJet::at(gens, p);
    let r = (jet.grad[0] - v[0]).hypot(jet.grad[1] - v[1]);
    (r, jet)
}

fn damped_newton(gens: &HalfGeneratorSet, seed: [f64; 2], v: [f64; 2]) -> std::result::Result<[f64; 2], NewtonFailure> {
    let mut p = seed;
    let (mut r, mut jet) = residual(gens, p, v);
    for it in 0..MAX_NEWTON_ITERATIONS {
        if r < NEWTON_RESIDUAL {
            return Ok([reduce_angle(p[0]), reduce_angle(p[1])]);
        }
        let j = Matrix2::new(jet.hess[0][0], jet.hess[0][1], jet.hess[1][0], jet.hess[1][1]);
        let f = Vector2::new(jet.grad[0] - v[0], jet.grad[1] - v[1]);
        let step = match j.svd(true, true).solve(&f, 1e-14 * jet.frobenius_sq().sqrt().max(1e-300)) {
            Ok(s) => -s,
            Err(_) => {
                return Err(NewtonFailure {
                    seed,
                    iterations: it,
                    residual: r,
                })
            }
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = [p[0] + lambda * step[0], p[1] + lambda * step[1]];
            let (rt, jt) = residual(gens, trial, v);
            if rt < r {
                p = trial;
                r = rt;
                jet = jt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r < NEWTON_RESIDUAL {
        Ok([reduce_angle(p[0]), reduce_angle(p[1])])
    } else {
        Err(NewtonFailure {
            seed,
            iterations: MAX_NEWTON_ITERATIONS,
            residual: r,
        })
    }
}

/// Moves `p` onto `det Hess ω = 0` along the determinant gradient.
pub(crate) fn project_to_curve(gens: &HalfGeneratorSet, mut p: [f64; 2]) -> Option<[f64; 2]> {
    for _ in 0..60 {
        let jet = LocalJet::at(gens, p);
        let d = jet.det();
        let g = jet.det_gradient();
        let gg = g[0] * g[0] + g[1] * g[1];
        if gg == 0.0 {
            return None;
        }
        let step = d / gg;
        p = [p[0] - step * g[0], p[1] - step * g[1]];
        if (step * gg.sqrt()).abs() < 1e-15 {
            break;
        }
    }
    let jet = LocalJet::at(gens, p);
    (jet.det().abs() <= 1e-12 * degeneracy_scale(&jet)).then_some(p)
}

/// Minimises `‖∇ω − v‖` along the degeneracy curve near `p` by Gauss–Newton
/// in the curve tangent. Returns the point when the residual reaches the
/// Newton tolerance.
fn snap_to_degenerate(gens: &HalfGeneratorSet, p: [f64; 2], v: [f64; 2]) -> Option<[f64; 2]> {
    let mut q = project_to_curve(gens, p)?;
    let (mut r, mut jet) = residual(gens, q, v);
    for _ in 0..400 {
        if r < 1e-15 {
            break;
        }
        let g = jet.det_gradient();
        let n = g[0].hypot(g[1]);
        let tau = [-g[1] / n, g[0] / n];
        // dF/ds = H τ
        let js = [
            jet.hess[0][0] * tau[0] + jet.hess[0][1] * tau[1],
            jet.hess[1][0] * tau[0] + jet.hess[1][1] * tau[1],
        ];
        let f = [jet.grad[0] - v[0], jet.grad[1] - v[1]];
        let jj = js[0] * js[0] + js[1] * js[1];
        if jj == 0.0 {
            break;
        }
        let s = -(js[0] * f[0] + js[1] * f[1]) / jj;
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..=MAX_HALVINGS {
            if let Some(t) = project_to_curve(gens, [q[0] + lambda * s * tau[0], q[1] + lambda * s * tau[1]]) {
                let (rt, jt) = residual(gens, t, v);
                if rt < r {
                    q = t;
                    r = rt;
                    jet = jt;
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (r < NEWTON_RESIDUAL && torus_distance(&p, &q) < 1e-3).then(|| [reduce_angle(q[0]), reduce_angle(q[1])])
}

fn push_unique(points: &mut Vec<[f64; 2]>, p: [f64; 2]) {
    if !points.iter().any(|q| torus_distance(q, &p) < DEDUP_DISTANCE) {
        points.push(p);
    }
}

/// Collapses clusters of near-degenerate roots within
/// `DEGENERATE_DEDUP_DISTANCE`, keeping the member with the smallest residual.
fn merge_degenerate(gens: &HalfGeneratorSet, roots: Vec<[f64; 2]>, v: [f64; 2]) -> Vec<[f64; 2]> {
    let degenerate = |p: [f64; 2]| {
        let jet = LocalJet::at(gens, p);
        jet.det().abs() < SNAP_BAND * degeneracy_scale(&jet)
    };
    let mut kept: Vec<([f64; 2], f64, bool)> = Vec::new();
    for p in roots {
        let r = residual(gens, p, v).0;
        let d = degenerate(p);
        match kept
            .iter_mut()
            .find(|(q, _, dq)| d && *dq && torus_distance(q, &p) < DEGENERATE_DEDUP_DISTANCE)
        {
            Some(k) if r < k.1 => *k = (p, r, d),
            Some(_) => {}
            None => kept.push((p, r, d)),
        }
    }
    kept.into_iter().map(|(p, _, _)| p).collect()
}

/// All solutions of `∇ω(p) = velocity` on the torus.
///
/// Seeds come from grid cells where both gradient components change sign and
/// from grid-local minima of `‖∇ω − v‖`; each seed is refined by damped
/// Newton. Roots with a nearly singular Hessian are snapped onto the
/// degeneracy curve when the residual there still meets the tolerance.
pub fn find_critical_points(gens: &HalfGeneratorSet, velocity: [f64; 2], grid_n: usize) -> Result<CriticalPointSearch> {
    require_plane(gens)?;
    if grid_n < 64 {
        return Err(Error::InvalidInput(format!("grid_n must be at least 64, got {grid_n}")));
    }
    let mut search = CriticalPointSearch {
        velocity,
        grid_n,
        points: Vec::new(),
        diagnostics: Vec::new(),
    };
    if (0..2).any(|i| velocity[i].abs() > gens.gradient_bound(i) + 1e-12) {
        return Ok(search);
    }
    let n = grid_n;
    let h = TWO_PI / n as f64;
    let field: Vec<[f64; 2]> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let p = [(idx / n) as f64 * h, (idx % n) as f64 * h];
            let mut g = [0.0; 2];
            gens.gradient_at(&p, &mut g);
            [g[0] - velocity[0], g[1] - velocity[1]]
        })
        .collect();
    let at = |i: usize, j: usize| field[(i % n) * n + (j % n)];
    let norm = |f: [f64; 2]| f[0].hypot(f[1]);
    let lipschitz: f64 = gens
        .half_generators()
        .iter()
        .map(|g| 2.0 * (g[0].abs() + g[1].abs()).pow(2) as f64)
        .sum();
    let near = lipschitz * h;

    let seeds: Vec<[f64; 2]> = (0..n * n)
        .into_par_iter()
        .filter_map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let corners = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
            let straddles = (0..2).all(|k| {
                let lo = corners.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            });
            if straddles {
                return Some([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
            let here = norm(at(i, j));
            if here < near {
                let local_min = (0..3).all(|di| {
                    (0..3).all(|dj| {
                        (di == 1 && dj == 1) || norm(at(i + n + di - 1, j + n + dj - 1)) >= here
                    })
                });
                if local_min {
                    return Some([i as f64 * h, j as f64 * h]);
                }
            }
            None
        })
        .collect();

    let outcomes: Vec<std::result::Result<[f64; 2], NewtonFailure>> =
        seeds.par_iter().map(|&s| damped_newton(gens, s, velocity)).collect();
    let mut roots: Vec<[f64; 2]> = Vec::new();
    for o in outcomes {
        match o {
            Ok(p) => push_unique(&mut roots, p),
            Err(f) => search.diagnostics.push(f),
        }
    }

    // Near-degenerate roots: look for a partner across the fold and snap.
    let mut extra = Vec::new();
    for &p in &roots {
        let jet = LocalJet::at(gens, p);
        if jet.det().abs() < SNAP_BAND * degeneracy_scale(&jet) {
            let k = jet.kernel_direction();
            for eps in [1e-2, -1e-2, 1e-3, -1e-3] {
                if let Ok(q) = damped_newton(gens, [p[0] + eps * k[0], p[1] + eps * k[1]], velocity) {
                    extra.push(q);
                }
            }
        }
    }
    for q in extra {
        push_unique(&mut roots, q);
    }
    let mut snapped: Vec<[f64; 2]> = Vec::new();
    for p in roots {
        let jet = LocalJet::at(gens, p);
        let q = if jet.det().abs() < SNAP_BAND * degeneracy_scale(&jet) {
            snap_to_degenerate(gens, p, velocity).unwrap_or(p)
        } else {
            p
        };
        push_unique(&mut snapped, q);
    }
    let mut snapped = merge_degenerate(gens, snapped, velocity);
    snapped.sort_by(|a, b| a.partial_cmp(b).unwrap());
    search.points = snapped.into_iter().map(|p| TorusPoint::new(p.to_vec())).collect();
    Ok(search)
}

// ---------------------------------------------------------------------------
// Velocity classes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VelocityRegion {
    V0,
    V1,
    V2,
    V3,
}

#[derive(Clone, Debug, Serialize)]
pub struct VelocityClass {
    pub velocity: [f64; 2],
    pub class: VelocityRegion,
    pub witnesses: Vec<CriticalPoint>,
    pub diagnostics: Vec<NewtonFailure>,
}

pub fn region_of(witnesses: &[CriticalPoint]) -> VelocityRegion {
    match witnesses.iter().map(|w| w.singularity_type).max() {
        None => VelocityRegion::V0,
        Some(SingularityType::A1) => VelocityRegion::V1,
        Some(SingularityType::A2) => VelocityRegion::V2,
        Some(SingularityType::A3) => VelocityRegion::V3,
    }
}

pub fn classify_velocity(gens: &HalfGeneratorSet, velocity: [f64; 2], grid_n: usize) -> Result<VelocityClass> {
    let search = find_critical_points(gens, velocity, grid_n)?;
    let witnesses = search
        .points
        .iter()
        .map(|p| classify_singularity(gens, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(VelocityClass {
        velocity,
        class: region_of(&witnesses),
        witnesses,
        diagnostics: search.diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Degeneracy curve

#[derive(Clone, Debug, Serialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegenerateCurve {
    pub resolution: usize,
    pub polylines: Vec<Polyline>,
}

impl DegenerateCurve {
    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.polylines.iter().flat_map(|l| l.points.iter().copied())
    }

    /// Torus distance from `p` to the nearest traced segment.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for line in &self.polylines {
            let pts = &line.points;
            let count = if line.closed { pts.len() } else { pts.len().saturating_sub(1) };
            if pts.len() == 1 {
                best = best.min(torus_distance(&pts[0], &p));
            }
            for i in 0..count {
                best = best.min(segment_distance(pts[i], pts[(i + 1) % pts.len()], p));
            }
        }
        best
    }

    /// `(x, y, |det|)` rows for plotting.
    pub fn csv(&self, gens: &HalfGeneratorSet) -> String {
        let mut out = String::from("x,y,det_residual\n");
        for line in &self.polylines {
            for p in &line.points {
                out.push_str(&format!("{:.15},{:.15},{:.3e}\n", p[0], p[1], LocalJet::at(gens, *p).det().abs()));
            }
            out.push('\n');
        }
        out
    }
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    // Work in coordinates centred at `a`, unwrapped across the seam.
    let d = [wrap_signed(b[0] - a[0]), wrap_signed(b[1] - a[1])];
    let q = [wrap_signed(p[0] - a[0]), wrap_signed(p[1] - a[1])];
    let dd = d[0] * d[0] + d[1] * d[1];
    let s = if dd == 0.0 { 0.0 } else { ((q[0] * d[0] + q[1] * d[1]) / dd).clamp(0.0, 1.0) };
    (q[0] - s * d[0]).hypot(q[1] - s * d[1])
}

fn det_at(gens: &HalfGeneratorSet, p: [f64; 2]) -> f64 {
    LocalJet::at(gens, p).det()
}

/// Bisection for the zero of `det` on the segment `a → b` (unwrapped).
fn bisect_edge(gens: &HalfGeneratorSet, a: [f64; 2], b: [f64; 2], fa: f64) -> [f64; 2] {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let pos = |s: f64| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
    while (hi - lo) * len > 1e-11 {
        let mid = 0.5 * (lo + hi);
        let fm = det_at(gens, pos(mid));
        if (fm >= 0.0) == (fa >= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = pos(0.5 * (lo + hi));
    [reduce_angle(p[0]), reduce_angle(p[1])]
}

/// Zero set of `det Hess ω` by marching squares on a `resolution²` grid,
/// with each edge crossing refined by bisection.
pub fn trace_degenerate_curve(gens: &HalfGeneratorSet, resolution: usize) -> Result<DegenerateCurve> {
    require_plane(gens)?;
    if resolution < 256 {
        return Err(Error::InvalidInput(format!("resolution must be at least 256, got {resolution}")));
    }
    let n = resolution;
    let h = TWO_PI / n as f64;
    let vertex = |i: usize, j: usize| [(i % n) as f64 * h, (j % n) as f64 * h];
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| det_at(gens, vertex(idx / n, idx % n)))
        .collect();
    let val = |i: usize, j: usize| values[(i % n) * n + (j % n)];
    let positive = |v: f64| v >= 0.0;

    // Edge ids: 2·(i·n + j) is the edge (i,j)→(i+1,j); +1 is (i,j)→(i,j+1).
    let edge_h = |i: usize, j: usize| 2 * ((i % n) * n + (j % n));
    let edge_v = |i: usize, j: usize| 2 * ((i % n) * n + (j % n)) + 1;

    let crossings: Vec<(usize, [f64; 2])> = (0..n * n)
        .into_par_iter()
        .flat_map_iter(|idx| {
            let (i, j) = (idx / n, idx % n);
            let v0 = val(i, j);
            let mut out = Vec::with_capacity(2);
            let a = [i as f64 * h, j as f64 * h];
            if positive(v0) != positive(val(i + 1, j)) {
                out.push((edge_h(i, j), bisect_edge(gens, a, [a[0] + h, a[1]], v0)));
            }
            if positive(v0) != positive(val(i, j + 1)) {
                out.push((edge_v(i, j), bisect_edge(gens, a, [a[0], a[1] + h], v0)));
            }
            out
        })
        .collect();
    let mut location = std::collections::HashMap::with_capacity(crossings.len());
    for (id, p) in crossings {
        location.insert(id, p);
    }

    let mut adjacency: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..n {
        for j in 0..n {
            // Cell edges in cyclic order: bottom, right, top, left.
            let edges = [edge_h(i, j), edge_v(i + 1, j), edge_h(i, j + 1), edge_v(i, j)];
            let hit: Vec<usize> = edges.iter().copied().filter(|e| location.contains_key(e)).collect();
            let mut link = |a: usize, b: usize| {
                adjacency.entry(a).or_default().push(b);
                adjacency.entry(b).or_default().push(a);
            };
            match hit.len() {
                2 => link(hit[0], hit[1]),
                4 => {
                    let centre = det_at(gens, [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                    // Pair each crossing with the neighbour on the side that
                    // shares the sign of the corner between them.
                    if positive(centre) == positive(val(i + 1, j)) {
                        link(edges[0], edges[3]);
                        link(edges[1], edges[2]);
                    } else {
                        link(edges[0], edges[1]);
                        link(edges[2], edges[3]);
                    }
                }
                _ => {}
            }
        }
    }

    let mut ids: Vec<usize> = location.keys().copied().collect();
    ids.sort_unstable();
    let mut visited = std::collections::HashSet::with_capacity(ids.len());
    let mut polylines = Vec::new();
    // Open chains first (start at endpoints), then closed loops.
    let endpoints: Vec<usize> = ids
        .iter()
        .copied()
        .filter(|id| adjacency.get(id).map_or(0, |v| v.len()) < 2)
        .collect();
    for start in endpoints.into_iter().chain(ids.iter().copied()) {
        if visited.contains(&start) {
            continue;
        }
        let mut chain = vec![start];
        visited.insert(start);
        let mut current = start;
        let closed;
        loop {
            let next = adjacency
                .get(&current)
                .and_then(|nb| nb.iter().copied().find(|x| !visited.contains(x)));
            match next {
                Some(nx) => {
                    visited.insert(nx);
                    chain.push(nx);
                    current = nx;
                }
                None => {
                    closed = chain.len() > 2
                        && adjacency.get(&current).is_some_and(|nb| nb.contains(&start));
                    break;
                }
            }
        }
        polylines.push(Polyline {
            points: chain.iter().map(|id| location[id]).collect(),
            closed,
        });
    }
    Ok(DegenerateCurve { resolution, polylines })
}

// ---------------------------------------------------------------------------
// A₃ points

#[derive(Clone, Debug, Serialize)]
pub struct A3Search {
    pub resolution: usize,
    pub points: Vec<CriticalPoint>,
    /// Sign changes of the kernel cubic that did not refine to an A₃ point.
    pub rejected: Vec<[f64; 2]>,
}

/// Kernel cubic at `p`, with the kernel direction oriented along `reference`.
fn oriented_kernel_cubic(gens: &HalfGeneratorSet, p: [f64; 2], reference: Option<[f64; 2]>) -> (f64, [f64; 2]) {
    let jet = LocalJet::at(gens, p);
    let mut k = jet.kernel_direction();
    if let Some(r) = reference {
        if k[0] * r[0] + k[1] * r[1] < 0.0 {
            k = [-k[0], -k[1]];
        }
    }
    (jet.cubic_along(k), k)
}

/// Walks the degeneracy curve, brackets sign changes of the cubic Taylor term
/// along the Hessian kernel, bisects them on the curve and keeps the points
/// that classify as A₃.
pub fn find_a3_points(gens: &HalfGeneratorSet, resolution: usize) -> Result<A3Search> {
    if resolution < 512 {
        return Err(Error::InvalidInput(format!("resolution must be at least 512, got {resolution}")));
    }
    let curve = trace_degenerate_curve(gens, resolution)?;
    let mut brackets: Vec<([f64; 2], [f64; 2], [f64; 2])> = Vec::new();
    for line in &curve.polylines {
        let pts = &line.points;
        if pts.len() < 2 {
            continue;
        }
        let count = if line.closed { pts.len() } else { pts.len() - 1 };
        let (mut prev_c, mut prev_k) = oriented_kernel_cubic(gens, pts[0], None);
        if prev_c == 0.0 {
            brackets.push((pts[0], pts[0], prev_k));
        }
        for i in 0..count {
            let b = pts[(i + 1) % pts.len()];
            let (c, k) = oriented_kernel_cubic(gens, b, Some(prev_k));
            if c == 0.0 {
                // The traced curve passes exactly through a zero.
                if i + 1 < pts.len() {
                    brackets.push((b, b, k));
                }
            } else if prev_c * c < 0.0 {
                brackets.push((pts[i], b, prev_k));
            }
            prev_c = c;
            prev_k = k;
        }
    }

    let refined: Vec<Option<[f64; 2]>> = brackets
        .par_iter()
        .map(|&(a, b, k_ref)| {
            let d = [wrap_signed(b[0] - a[0]), wrap_signed(b[1] - a[1])];
            let at = |s: f64| project_to_curve(gens, [a[0] + s * d[0], a[1] + s * d[1]]);
            if a == b {
                return Some(a);
            }
            let (c_a, _) = oriented_kernel_cubic(gens, at(0.0)?, Some(k_ref));
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let len = d[0].hypot(d[1]);
            while (hi - lo) * len > 1e-13 {
                let mid = 0.5 * (lo + hi);
                let (c, _) = oriented_kernel_cubic(gens, at(mid)?, Some(k_ref));
                if (c >= 0.0) == (c_a >= 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            at(0.5 * (lo + hi)).map(|p| [reduce_angle(p[0]), reduce_angle(p[1])])
        })
        .collect();

    let mut search = A3Search {
        resolution,
        points: Vec::new(),
        rejected: Vec::new(),
    };
    let mut seen: Vec<[f64; 2]> = Vec::new();
    for (r, br) in refined.into_iter().zip(&brackets) {
        let Some(p) = r else {
            search.rejected.push(br.0);
            continue;
        };
        if seen.iter().any(|q| torus_distance(q, &p) < 1e-8) {
            continue;
        }
        seen.push(p);
        let cp = classify_singularity(gens, &TorusPoint::new(p.to_vec()))?;
        if cp.singularity_type == SingularityType::A3 {
            search.points.push(cp);
        } else {
            search.rejected.push(p);
        }
    }
    search.points.sort_by(|a, b| {
        a.location
            .coordinates()
            .partial_cmp(b.location.coordinates())
            .unwrap()
    });
    Ok(search)
}

/// A₃ counts at `resolution` and `2·resolution`.
#[derive(Clone, Debug, Serialize)]
pub struct A3Census {
    pub coarse: A3Search,
    pub fine: A3Search,
    pub counts_agree: bool,
}

pub fn a3_census(gens: &HalfGeneratorSet, resolution: usize) -> Result<A3Census> {
    let coarse = find_a3_points(gens, resolution)?;
    let fine = find_a3_points(gens, 2 * resolution)?;
    let counts_agree = coarse.points.len() == fine.points.len()
        && coarse.points.iter().all(|p| {
            fine.points
                .iter()
                .any(|q| p.location.distance(&q.location) < 1e-8)
        });
    Ok(A3Census {
        coarse,
        fine,
        counts_agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn king() -> HalfGeneratorSet {
        HalfGeneratorSet::king2d()
    }

    fn has_point(points: &[TorusPoint], p: [f64; 2]) -> bool {
        points.iter().any(|q| torus_distance(q.coordinates(), &p) < 1e-9)
    }

    #[test]
    fn critical_points_at_rest() {
        let s = find_critical_points(&king(), [0.0, 0.0], 128).unwrap();
        let t = 2.0 * PI / 3.0;
        for p in [[0.0, 0.0], [PI, 0.0], [0.0, PI], [PI, PI], [t, t], [t, 2.0 * t], [2.0 * t, t], [2.0 * t, 2.0 * t]] {
            assert!(has_point(&s.points, p), "{p:?}");
        }
        assert!(s.diagnostics.is_empty());
        for p in &s.points {
            let (r, _) = residual(&king(), point2(p), [0.0, 0.0]);
            assert!(r < NEWTON_RESIDUAL);
        }
        let mut sorted = s.points.clone();
        sorted.sort_by(|a, b| a.coordinates().partial_cmp(b.coordinates()).unwrap());
        assert_eq!(sorted, s.points);
    }

    #[test]
    fn critical_points_special_velocities() {
        let s = find_critical_points(&king(), [0.0, 6.0], 128).unwrap();
        assert!(has_point(&s.points, [0.0, FRAC_PI_2]));
        let s = find_critical_points(&king(), [10.0, 0.0], 128).unwrap();
        assert!(s.points.is_empty());
        assert!(find_critical_points(&king(), [0.0, 0.0], 32).is_err());
    }

    #[test]
    fn a3_point_is_reported_once() {
        for (v, count) in [([3.0 * 3f64.sqrt(), 0.0], 2), ([3f64.sqrt(), 0.0], 6)] {
            for n in [128, 256, 512] {
                let c = classify_velocity(&king(), v, n).unwrap();
                let a3 = c.witnesses.iter().filter(|w| w.singularity_type == SingularityType::A3).count();
                assert_eq!((a3, c.witnesses.len()), (1, count), "v = {v:?}, grid {n}");
            }
        }
    }

    #[test]
    fn classification_examples() {
        let o = classify_singularity(&king(), &TorusPoint::new(vec![0.0, 0.0])).unwrap();
        assert_eq!(o.singularity_type, SingularityType::A1);
        assert_eq!(o.height, Rational64::from_integer(1));
        assert!((o.hessian_det - 36.0).abs() < 1e-12);
        assert!(o.newton_agrees());

        let c = classify_singularity(&king(), &TorusPoint::new(vec![0.0, FRAC_PI_2])).unwrap();
        assert_eq!(c.case_tag, CaseTag::CaseI);
        assert_eq!(c.singularity_type, SingularityType::A2);
        assert_eq!(c.height, Rational64::new(6, 5));
        assert!(c.newton_agrees());
        assert!((c.velocity[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn case_two_a_points_are_a3() {
        let t = 2.0 * PI / 3.0;
        for p in [[t, 0.0], [t, PI], [2.0 * t, 0.0], [0.0, t], [PI, 2.0 * t]] {
            let c = classify_singularity(&king(), &TorusPoint::new(p.to_vec())).unwrap();
            assert_eq!(c.case_tag, CaseTag::CaseIIa, "{p:?}");
            assert_eq!(c.singularity_type, SingularityType::A3, "{p:?}");
            assert_eq!(c.height, Rational64::new(4, 3));
            assert!(c.newton_agrees(), "{p:?} {:?}", c.newton_distance);
            let jet = c.jet.unwrap();
            assert!(jet.reduced_quartic.abs() > 0.4);
        }
    }

    #[test]
    fn reference_witness_is_a2() {
        let p = [3.228_580_86, 1.541_945_03];
        let s = find_critical_points(&king(), {
            let j = LocalJet::at(&king(), p);
            j.grad
        }, 256)
        .unwrap();
        let q = s.points.iter().find(|q| torus_distance(q.coordinates(), &p) < 1e-6).unwrap();
        let c = classify_singularity(&king(), q).unwrap();
        assert_eq!(c.singularity_type, SingularityType::A2);
        assert_eq!(c.case_tag, CaseTag::CaseIIbA2);
        let coeffs = c.coeffs.unwrap();
        // The closed-form v³ coefficient nearly vanishes here; the exact one does not.
        assert!(coeffs.beta.abs() < 1e-6);
        assert!(c.jet.unwrap().kernel_cubic.abs() > 0.1);
    }

    #[test]
    fn det_closed_form_matches_hessian() {
        for &(x, y) in &[(0.3, 1.1), (2.0, -0.4), (PI, 0.7), (5.5, 5.9)] {
            let j = LocalJet::at(&king(), [x, y]);
            assert!((j.det() - king_hessian_det(cs_of([x, y]))).abs() < 1e-12);
            let h = king().hessian_at(&[x, y]);
            assert!((j.det() - h.determinant()).abs() < 1e-12);
        }
    }

    #[test]
    fn case_coefficients_are_the_shear_of_the_closed_form_cubic() {
        // Independent route: shear the closed-form cubic and read off v³.
        let [c1, s1, c2, s2] = cs_of([1.0, 2.3]);
        let r = 2.0 * s1 * s2 / (c1 * (1.0 + 2.0 * c2));
        let cubic = |x: f64, y: f64| {
            -(s1 + 2.0 * c1 * s2) / 3.0 * x.powi(3) - 2.0 * c2 * s1 * x * x * y - 2.0 * c1 * s2 * x * y * y
                - (2.0 * c2 * s1 + s2) / 3.0 * y.powi(3)
        };
        let quad_cross = -4.0 * s1 * s2;
        let a = c1 * (1.0 + 2.0 * c2);
        assert!((quad_cross + 2.0 * a * r).abs() < 1e-12);
        let beta = cubic(r, 1.0);
        let pc = case_coefficients([c1, s1, c2, s2]);
        assert!((pc.beta - beta).abs() < 1e-10, "{} vs {}", pc.beta, beta);
        assert!((pc.discriminant - (pc.alpha.powi(2) - 4.0 * pc.leading * pc.gamma)).abs() < 1e-12);
    }

    #[test]
    fn velocity_classes() {
        let g = king();
        assert_eq!(classify_velocity(&g, [100.0, 0.0], 128).unwrap().class, VelocityRegion::V0);
        assert_eq!(classify_velocity(&g, [0.0, 0.0], 128).unwrap().class, VelocityRegion::V1);
        assert_eq!(classify_velocity(&g, [0.0, 6.0], 128).unwrap().class, VelocityRegion::V2);
        let v3 = classify_velocity(&g, [3.0 * 3f64.sqrt(), 0.0], 128).unwrap();
        assert_eq!(v3.class, VelocityRegion::V3);
    }

    #[test]
    fn degenerate_curve_properties() {
        let g = king();
        let curve = trace_degenerate_curve(&g, 256).unwrap();
        assert!(curve.distance_to([0.0, FRAC_PI_2]) < 1e-10);
        let cell = TWO_PI / 256.0;
        let pts: Vec<[f64; 2]> = curve.points().collect();
        for p in pts.iter().step_by(7) {
            assert!(curve.distance_to([p[1], p[0]]) < cell);
            assert!(curve.distance_to([reduce_angle(-p[0]), reduce_angle(-p[1])]) < cell);
            assert!(LocalJet::at(&g, *p).det().abs() < 1e-8);
        }
        assert!(curve.polylines.iter().all(|l| l.closed));
        assert!(trace_degenerate_curve(&g, 128).is_err());
    }

    #[test]
    fn a3_points_are_the_case_two_a_points() {
        let g = king();
        let s = find_a3_points(&g, 512).unwrap();
        assert_eq!(s.points.len(), 8, "{:?}", s.points.iter().map(|p| p.location.clone()).collect::<Vec<_>>());
        let curve = trace_degenerate_curve(&g, 512).unwrap();
        for p in &s.points {
            assert_eq!(p.case_tag, CaseTag::CaseIIa);
            assert!(p.newton_agrees());
            assert!(curve.distance_to(point2(&p.location)) < 1e-8);
        }
    }

    #[test]
    fn jets_serialize() {
        let c = classify_singularity(&king(), &TorusPoint::new(vec![0.0, FRAC_PI_2])).unwrap();
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["height"], "6/5");
        assert_eq!(json["case_tag"], "CaseI");
    }
}
