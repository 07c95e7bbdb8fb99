//! Trigonometric dispersion symbols of `Z^d` Cayley graphs.
//!
//! A symbol is fixed by a set of half-generators `h` (one representative of
//! each `±h` pair) and reads
//!
//! ```text
//! ω(x) = Σ_h 2 (1 − cos(h·x)),   x ∈ T^d = [0, 2π)^d.
//! ```
//!
//! All derivatives are closed-form, so the classification pipeline never
//! touches finite differences.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Values within this distance below `2π` are folded onto `0`.
const SEAM_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfGeneratorSet {
    dimension: usize,
    half_generators: Vec<Vec<i64>>,
}

impl HalfGeneratorSet {
    pub fn new(dimension: usize, half_generators: Vec<Vec<i64>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidGenerators("dimension must be positive".into()));
        }
        if half_generators.is_empty() {
            return Err(Error::InvalidGenerators("no half-generators given".into()));
        }
        for (i, h) in half_generators.iter().enumerate() {
            if h.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: h.len(),
                });
            }
            if h.iter().all(|&c| c == 0) {
                return Err(Error::InvalidGenerators(format!(
                    "half-generator {i} is the zero vector"
                )));
            }
            for (j, g) in half_generators.iter().enumerate().take(i) {
                let neg: Vec<i64> = g.iter().map(|c| -c).collect();
                if h == g || *h == neg {
                    return Err(Error::InvalidGenerators(format!(
                        "half-generators {j} and {i} coincide up to sign"
                    )));
                }
            }
        }
        Ok(Self {
            dimension,
            half_generators,
        })
    }

    /// Layered King's grid: King moves in each `(x, y)` layer plus vertical edges.
    pub fn lkg3d() -> Self {
        Self::new(
            3,
            vec![
                vec![1, 0, 0],
                vec![0, 1, 0],
                vec![0, 0, 1],
                vec![1, 1, 0],
                vec![1, -1, 0],
            ],
        )
        .expect("preset is valid")
    }

    /// The two-dimensional King's graph factor of [`Self::lkg3d`].
    pub fn king2d() -> Self {
        Self::new(2, vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![1, -1]]).expect("preset is valid")
    }

    pub fn chain1d() -> Self {
        Self::new(1, vec![vec![1]]).expect("preset is valid")
    }

    /// Nearest-neighbour lattice `Z^d`.
    pub fn lattice_zd(dimension: usize) -> Result<Self> {
        let gens = (0..dimension)
            .map(|i| {
                let mut e = vec![0; dimension];
                e[i] = 1;
                e
            })
            .collect();
        Self::new(dimension, gens)
    }

    /// Named presets: `lkg3d`, `king2d`, `chain1d`, `lattice-zd` (with
    /// `dimension`) and the shorthand `lattice-z<d>`.
    pub fn preset(name: &str, dimension: Option<usize>) -> Result<Self> {
        match name {
            "lkg3d" => Ok(Self::lkg3d()),
            "king2d" => Ok(Self::king2d()),
            "chain1d" => Ok(Self::chain1d()),
            "lattice-zd" => Self::lattice_zd(dimension.unwrap_or(3)),
            other => match other.strip_prefix("lattice-z").map(str::parse::<usize>) {
                Some(Ok(d)) => Self::lattice_zd(d),
                _ => Err(Error::UnknownPreset(other.to_string())),
            },
        }
    }

    /// Parses one integer vector per line. Entries may be separated by
    /// whitespace or commas; `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gens: Vec<Vec<i64>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<i64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        message: format!("`{s}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = gens.first() {
                if first.len() != v.len() {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("expected {} entries, found {}", first.len(), v.len()),
                    });
                }
            }
            gens.push(v);
        }
        let dim = gens
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidGenerators("config contains no vectors".into()))?;
        Self::new(dim, gens)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_generators(&self) -> &[Vec<i64>] {
        &self.half_generators
    }

    /// Componentwise bound `|∂_i ω| ≤ Σ_h 2|h_i|`.
    pub fn gradient_bound(&self, axis: usize) -> f64 {
        self.half_generators
            .iter()
            .map(|h| 2.0 * h[axis].unsigned_abs() as f64)
            .sum()
    }

    /// Largest value the symbol can take, `4 · #generators`.
    pub fn symbol_bound(&self) -> f64 {
        4.0 * self.half_generators.len() as f64
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: len,
            });
        }
        Ok(())
    }

    #[inline]
    fn phase(h: &[i64], p: &[f64]) -> f64 {
        h.iter().zip(p).map(|(&hi, &pi)| hi as f64 * pi).sum()
    }

    /// Unchecked evaluation for hot loops; `p.len()` must equal the dimension.
    #[inline]
    pub fn symbol_at(&self, p: &[f64]) -> f64 {
        self.half_generators
            .iter()
            .map(|h| {
                let s = (0.5 * Self::phase(h, p)).sin();
                4.0 * s * s
            })
            .sum()
    }

    #[inline]
    pub fn gradient_at(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for h in &self.half_generators {
            let s = 2.0 * Self::phase(h, p).sin();
            for (o, &hi) in out.iter_mut().zip(h) {
                *o += s * hi as f64;
            }
        }
    }

    pub fn hessian_at(&self, p: &[f64]) -> DMatrix<f64> {
        let d = self.dimension;
        let mut m = DMatrix::zeros(d, d);
        for h in &self.half_generators {
            let c = 2.0 * Self::phase(h, p).cos();
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += c * (h[i] * h[j]) as f64;
                }
            }
        }
        m
    }
}

/// A point of the torus `[0, 2π)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coordinates: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coordinates: impl Into<Vec<f64>>) -> Self {
        let coordinates = coordinates.into().into_iter().map(reduce_angle).collect();
        Self { coordinates }
    }

    pub fn origin(dimension: usize) -> Self {
        Self {
            coordinates: vec![0.0; dimension],
        }
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    pub fn dimension(&self) -> usize {
        self.coordinates.len()
    }

    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_distance(&self.coordinates, &other.coordinates)
    }

    pub fn negated(&self) -> TorusPoint {
        TorusPoint::new(self.coordinates.iter().map(|c| -c).collect::<Vec<_>>())
    }
}

/// Reduces an angle into `[0, 2π)`, folding the seam onto zero.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if TWO_PI - r < SEAM_TOLERANCE {
        0.0
    } else {
        r
    }
}

/// Shortest signed representative of `x` modulo `2π`, in `[-π, π)`.
pub fn wrap_signed(x: f64) -> f64 {
    (x + PI).rem_euclid(TWO_PI) - PI
}

pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = wrap_signed(x - y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn eval_symbol(gens: &HalfGeneratorSet, p: &TorusPoint) -> Result<f64> {
    gens.check(p.dimension())?;
    Ok(gens.symbol_at(p.coordinates()))
}

pub fn grad_symbol(gens: &HalfGeneratorSet, p: &TorusPoint) -> Result<Vec<f64>> {
    gens.check(p.dimension())?;
    let mut g = vec![0.0; gens.dimension()];
    gens.gradient_at(p.coordinates(), &mut g);
    Ok(g)
}

pub fn hessian_symbol(gens: &HalfGeneratorSet, p: &TorusPoint) -> Result<DMatrix<f64>> {
    gens.check(p.dimension())?;
    Ok(gens.hessian_at(p.coordinates()))
}

/// Truncated Taylor data `Σ_α c_α δ^α` in `d` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPolynomial {
    dimension: usize,
    max_order: usize,
    coefficients: BTreeMap<Vec<u32>, f64>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exponent: Vec<u32>,
    coefficient: f64,
}

#[derive(Serialize, Deserialize)]
struct TaylorRepr {
    dimension: usize,
    max_order: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for TaylorPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TaylorRepr {
            dimension: self.dimension,
            max_order: self.max_order,
            terms: self
                .coefficients
                .iter()
                .map(|(e, &c)| TermRepr {
                    exponent: e.clone(),
                    coefficient: c,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TaylorPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TaylorRepr::deserialize(d)?;
        let mut poly = TaylorPolynomial::new(repr.dimension, repr.max_order);
        for t in repr.terms {
            if t.exponent.len() != repr.dimension {
                return Err(serde::de::Error::custom("exponent length differs from dimension"));
            }
            poly.add_term(&t.exponent, t.coefficient);
        }
        Ok(poly)
    }
}

impl TaylorPolynomial {
    pub fn new(dimension: usize, max_order: usize) -> Self {
        Self {
            dimension,
            max_order,
            coefficients: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn coefficient(&self, exponent: &[u32]) -> f64 {
        self.coefficients.get(exponent).copied().unwrap_or(0.0)
    }

    /// Adds `c · δ^exponent`; terms above `max_order` are dropped.
    pub fn add_term(&mut self, exponent: &[u32], c: f64) {
        debug_assert_eq!(exponent.len(), self.dimension);
        let degree: u32 = exponent.iter().sum();
        if degree as usize > self.max_order || c == 0.0 {
            return;
        }
        let entry = self.coefficients.entry(exponent.to_vec()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.coefficients.remove(exponent);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.coefficients.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coefficients.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// Homogeneous part of total degree `degree`.
    pub fn homogeneous_part(&self, degree: usize) -> TaylorPolynomial {
        let mut out = TaylorPolynomial::new(self.dimension, self.max_order);
        for (e, c) in self.terms() {
            if e.iter().sum::<u32>() as usize == degree {
                out.add_term(e, c);
            }
        }
        out
    }

    fn multiply(&self, other: &TaylorPolynomial) -> TaylorPolynomial {
        let mut out = TaylorPolynomial::new(self.dimension, self.max_order);
        let mut e = vec![0u32; self.dimension];
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                for i in 0..self.dimension {
                    e[i] = a[i] + b[i];
                }
                out.add_term(&e, ca * cb);
            }
        }
        out
    }

    /// Substitutes `δ = M u` and returns the polynomial in `u`, truncated at
    /// the same order.
    pub fn linear_substitution(&self, m: &DMatrix<f64>) -> Result<TaylorPolynomial> {
        let d = self.dimension;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.nrows(),
            });
        }
        // δ_i as a linear form in u.
        let forms: Vec<TaylorPolynomial> = (0..d)
            .map(|i| {
                let mut f = TaylorPolynomial::new(d, self.max_order);
                for j in 0..d {
                    let mut e = vec![0u32; d];
                    e[j] = 1;
                    f.add_term(&e, m[(i, j)]);
                }
                f
            })
            .collect();
        let mut one = TaylorPolynomial::new(d, self.max_order);
        one.add_term(&vec![0; d], 1.0);

        // Powers of each form, cached up to max_order.
        let powers: Vec<Vec<TaylorPolynomial>> = forms
            .iter()
            .map(|f| {
                let mut p = vec![one.clone()];
                for k in 1..=self.max_order {
                    let next = p[k - 1].multiply(f);
                    p.push(next);
                }
                p
            })
            .collect();

        let mut out = TaylorPolynomial::new(d, self.max_order);
        for (e, c) in self.terms() {
            let mut prod = one.clone();
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    prod = prod.multiply(&powers[i][k as usize]);
                }
            }
            for (pe, pc) in prod.terms() {
                out.add_term(pe, c * pc);
            }
        }
        Ok(out)
    }

    /// Drops coefficients with `|c| ≤ threshold`.
    pub fn pruned(&self, threshold: f64) -> TaylorPolynomial {
        TaylorPolynomial {
            dimension: self.dimension,
            max_order: self.max_order,
            coefficients: self
                .coefficients
                .iter()
                .filter(|(_, c)| c.abs() > threshold)
                .map(|(e, &c)| (e.clone(), c))
                .collect(),
        }
    }
}

/// All exponent tuples of total degree `degree` in `dim` variables.
pub(crate) fn multi_indices(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(dim, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree, &mut Vec::with_capacity(dim), &mut out);
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Taylor data of `ω(p0 + δ) − ω(p0) − ∇ω(p0)·δ` up to total degree `order`.
///
/// Each generator contributes `2 cos θ0 (1 − cos φ) + 2 sin θ0 (sin φ − φ)`
/// with `θ0 = h·p0` and `φ = h·δ`; the powers `φ^j` are expanded with the
/// multinomial theorem, so `j!` cancels and the coefficient of `δ^α` is
/// `trig_j · h^α / α!`.
pub fn taylor_shifted_phase(
    gens: &HalfGeneratorSet,
    p0: &TorusPoint,
    order: usize,
) -> Result<TaylorPolynomial> {
    if order < 2 {
        return Err(Error::OrderTooLow(order));
    }
    gens.check(p0.dimension())?;
    let d = gens.dimension();
    let mut poly = TaylorPolynomial::new(d, order);
    let indices: Vec<Vec<Vec<u32>>> = (0..=order as u32).map(|j| multi_indices(d, j)).collect();

    for h in gens.half_generators() {
        let theta = HalfGeneratorSet::phase(h, p0.coordinates());
        let (s, c) = theta.sin_cos();
        for j in 2..=order as u32 {
            let trig = if j % 2 == 0 {
                let sign = if (j / 2) % 2 == 1 { 1.0 } else { -1.0 };
                2.0 * c * sign
            } else {
                let sign = if ((j - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                2.0 * s * sign
            };
            if trig == 0.0 {
                continue;
            }
            for alpha in &indices[j as usize] {
                let mut hpow = 1.0;
                let mut afact = 1.0;
                for (&a, &hi) in alpha.iter().zip(h) {
                    hpow *= (hi as f64).powi(a as i32);
                    afact *= factorial(a);
                }
                if hpow != 0.0 {
                    poly.add_term(alpha, trig * hpow / afact);
                }
            }
        }
    }
    Ok(poly)
}
