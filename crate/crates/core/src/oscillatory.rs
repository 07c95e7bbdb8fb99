//! Fundamental-solution kernels of the lattice Schrödinger flow and the
//! oscillatory integral over the torus.
//!
//! `K_d(n; t) = (2π)^{-d} ∫ e^{-itω(x)} e^{in·x} dx`. Integer `n` makes the
//! integrand smooth and periodic, so the trapezoid rule is spectrally accurate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j_range_into;
use crate::symbol::{HalfGeneratorSet, TWO_PI};
use crate::{Error, Result};

/// Default memory budget for a full 2D grid, in bytes.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// Default cap on Gauss panels per axis.
pub const DEFAULT_PANEL_BUDGET: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMethod {
    PeriodicTrapezoidFft,
    PeriodicTrapezoidPoint,
    GaussPanels,
    /// King's grid only: one trapezoid sum in `x` over Bessel functions in `y`.
    BesselReduced,
}

impl QuadratureMethod {
    pub fn name(&self) -> &'static str {
        match self {
            QuadratureMethod::PeriodicTrapezoidFft => "periodic-trapezoid-fft",
            QuadratureMethod::PeriodicTrapezoidPoint => "periodic-trapezoid-point",
            QuadratureMethod::GaussPanels => "gauss-panels",
            QuadratureMethod::BesselReduced => "bessel-reduced",
        }
    }
}

/// Samples per axis: the smallest power of two `≥ factor·max(|t|, floor)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRule {
    pub factor: f64,
    pub floor: f64,
}

impl GridRule {
    /// One-dimensional chain; the kernel is supported in `|n| ≲ 2t`.
    pub const CHAIN: GridRule = GridRule {
        factor: 8.0,
        floor: 32.0,
    };
    /// King's grid; the kernel is supported in `|n|∞ ≲ 6t`, so wrap-around
    /// needs `N > 12t`.
    pub const PLANE: GridRule = GridRule {
        factor: 16.0,
        floor: 16.0,
    };

    pub fn samples(&self, t: f64) -> usize {
        let raw = (self.factor * t.abs().max(self.floor)).ceil() as usize;
        raw.next_power_of_two()
    }

    /// Samples for evaluating sites up to `|n|∞ = reach`: the nearest alias
    /// image of such a site stays at least half the base grid away.
    pub fn samples_reaching(&self, t: f64, reach: u64) -> usize {
        let base = self.samples(t);
        base.max((2 * reach as usize + base / 2).next_power_of_two())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub grid: GridRule,
    pub panel_order: usize,
    pub panel_budget: usize,
    pub memory_budget: usize,
}

impl QuadratureSpec {
    pub fn new(method: QuadratureMethod, grid: GridRule) -> Self {
        QuadratureSpec {
            method,
            grid,
            panel_order: 8,
            panel_budget: DEFAULT_PANEL_BUDGET,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn chain() -> Self {
        Self::new(QuadratureMethod::PeriodicTrapezoidFft, GridRule::CHAIN)
    }

    pub fn plane_fft() -> Self {
        Self::new(QuadratureMethod::PeriodicTrapezoidFft, GridRule::PLANE)
    }

    pub fn plane_point() -> Self {
        Self::new(QuadratureMethod::PeriodicTrapezoidPoint, GridRule::PLANE)
    }

    pub fn plane_bessel() -> Self {
        Self::new(QuadratureMethod::BesselReduced, GridRule::PLANE)
    }

    pub fn gauss_panels() -> Self {
        Self::new(QuadratureMethod::GaussPanels, GridRule::PLANE)
    }

    pub fn with_memory_budget(mut self, bytes: usize) -> Self {
        self.memory_budget = bytes;
        self
    }

    pub fn with_panel_budget(mut self, panels: usize) -> Self {
        self.panel_budget = panels;
        self
    }
}

fn cis(theta: f64) -> Complex64 {
    let (s, c) = theta.sin_cos();
    Complex64::new(c, s)
}

/// `cos(2πk/N)` for `k < N`.
fn cos_table(n: usize) -> Vec<f64> {
    (0..n).map(|k| (TWO_PI * k as f64 / n as f64).cos()).collect()
}

// ---------------------------------------------------------------------------
// 1D

/// `K₁(n; t)` for the chain symbol `2 − 2cos z` by a direct trapezoid sum.
pub fn kernel_1d(n: i64, t: f64, spec: &QuadratureSpec) -> Complex64 {
    let m = spec.grid.samples_reaching(t, n.unsigned_abs());
    let cosines = cos_table(m);
    let nm = n.rem_euclid(m as i64) as usize;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..m {
        let lin = TWO_PI * ((nm * k) % m) as f64 / m as f64;
        acc += cis(-t * (2.0 - 2.0 * cosines[k]) + lin);
    }
    acc / m as f64
}

/// All chain kernel values at one time, indexed by `n mod N`.
#[derive(Clone, Debug)]
pub struct ChainKernel {
    pub t: f64,
    pub samples: usize,
    pub values: Vec<Complex64>,
}

impl ChainKernel {
    pub fn get(&self, n: i64) -> Complex64 {
        self.values[n.rem_euclid(self.samples as i64) as usize]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn kernel_1d_all(t: f64, spec: &QuadratureSpec) -> ChainKernel {
    let m = spec.grid.samples(t);
    let cosines = cos_table(m);
    let mut values: Vec<Complex64> = cosines.iter().map(|c| cis(-t * (2.0 - 2.0 * c))).collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut values);
    let scale = 1.0 / m as f64;
    values.iter_mut().for_each(|v| *v *= scale);
    ChainKernel {
        t,
        samples: m,
        values,
    }
}

pub fn kernel_1d_sup(t: f64, spec: &QuadratureSpec) -> f64 {
    kernel_1d_all(t, spec).sup_abs()
}

// ---------------------------------------------------------------------------
// 2D grid

fn require_plane(gens: &HalfGeneratorSet) -> Result<()> {
    if gens.dimension() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: gens.dimension(),
        });
    }
    Ok(())
}

/// Every 2D kernel value at one time, row-major in `(n₁ mod N, n₂ mod N)`.
#[derive(Clone, Debug)]
pub struct PlaneKernel {
    pub t: f64,
    pub samples: usize,
    pub values: Vec<Complex64>,
}

impl PlaneKernel {
    pub fn get(&self, n1: i64, n2: i64) -> Complex64 {
        let m = self.samples as i64;
        self.values[(n1.rem_euclid(m) * m + n2.rem_euclid(m)) as usize]
    }

    /// Largest modulus and a lattice point attaining it (signed coordinates).
    pub fn sup(&self) -> (f64, (i64, i64)) {
        let m = self.samples;
        let (idx, best) = self
            .values
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, v)| {
                let a = v.norm();
                if a > bv {
                    (i, a)
                } else {
                    (bi, bv)
                }
            });
        let signed = |k: usize| -> i64 {
            if k > m / 2 {
                k as i64 - m as i64
            } else {
                k as i64
            }
        };
        (best, (signed(idx / m), signed(idx % m)))
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup().0
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Bytes needed for a full grid with `n` samples per axis.
pub fn plane_grid_bytes(n: usize) -> usize {
    n.saturating_mul(n).saturating_mul(std::mem::size_of::<Complex64>())
}

/// Samples `e^{-itω}` on the `N × N` grid, row-major.
fn fill_propagator(gens: &HalfGeneratorSet, t: f64, m: usize, values: &mut [Complex64]) {
    let cosines = cos_table(m);
    let gens: Vec<(i64, i64)> = gens.half_generators().iter().map(|h| (h[0], h[1])).collect();
    let mi = m as i64;
    values.par_chunks_mut(m).enumerate().for_each(|(k1, row)| {
        for (k2, v) in row.iter_mut().enumerate() {
            let mut omega = 0.0;
            for &(h1, h2) in &gens {
                let idx = (h1 * k1 as i64 + h2 * k2 as i64).rem_euclid(mi) as usize;
                omega += 2.0 - 2.0 * cosines[idx];
            }
            *v = cis(-t * omega);
        }
    });
}

fn transpose_in_place(values: &mut [Complex64], m: usize) {
    const B: usize = 32;
    for bi in (0..m).step_by(B) {
        for bj in (bi..m).step_by(B) {
            for i in bi..(bi + B).min(m) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(m) {
                    values.swap(i * m + j, j * m + i);
                }
            }
        }
    }
}

/// All kernel values by a 2D inverse FFT of `e^{-itω}`.
///
/// Refuses with [`Error::MemoryBudget`] when `N²` complex values exceed the
/// configured budget.
pub fn kernel_2d_grid(gens: &HalfGeneratorSet, t: f64, spec: &QuadratureSpec) -> Result<PlaneKernel> {
    require_plane(gens)?;
    let m = spec.grid.samples(t);
    let bytes = plane_grid_bytes(m);
    if bytes > spec.memory_budget {
        return Err(Error::MemoryBudget {
            required_n: m,
            required_bytes: bytes,
            budget_bytes: spec.memory_budget,
        });
    }
    let mut values = vec![Complex64::new(0.0, 0.0); m * m];
    fill_propagator(gens, t, m, &mut values);
    let fft = FftPlanner::new().plan_fft_inverse(m);
    let rows = |values: &mut [Complex64]| {
        values.par_chunks_mut(m).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    };
    rows(&mut values);
    transpose_in_place(&mut values, m);
    rows(&mut values);
    transpose_in_place(&mut values, m);
    let scale = 1.0 / (m as f64 * m as f64);
    values.par_iter_mut().for_each(|v| *v *= scale);
    Ok(PlaneKernel {
        t,
        samples: m,
        values,
    })
}

/// One kernel value by direct `N × N` trapezoid summation.
pub fn kernel_2d_point(gens: &HalfGeneratorSet, n: (i64, i64), t: f64, spec: &QuadratureSpec) -> Result<Complex64> {
    require_plane(gens)?;
    let m = spec.grid.samples_reaching(t, n.0.unsigned_abs().max(n.1.unsigned_abs()));
    let mi = m as i64;
    let cosines = cos_table(m);
    let gens: Vec<(i64, i64)> = gens.half_generators().iter().map(|h| (h[0], h[1])).collect();
    let (n1, n2) = (n.0.rem_euclid(mi), n.1.rem_euclid(mi));
    let rows: Vec<Complex64> = (0..m)
        .into_par_iter()
        .map(|k1| {
            let k1 = k1 as i64;
            let mut acc = Complex64::new(0.0, 0.0);
            for k2 in 0..mi {
                let mut omega = 0.0;
                for &(h1, h2) in &gens {
                    omega += 2.0 - 2.0 * cosines[(h1 * k1 + h2 * k2).rem_euclid(mi) as usize];
                }
                let lin = TWO_PI * ((n1 * k1 + n2 * k2) % mi) as f64 / m as f64;
                acc += cis(-t * omega + lin);
            }
            acc
        })
        .collect();
    let total: Complex64 = rows.iter().sum();
    Ok(total / (m as f64 * m as f64))
}

// ---------------------------------------------------------------------------
// King's grid, Bessel-reduced

/// Whether `gens` spans the same symbol as the King's grid.
pub fn is_king_grid(gens: &HalfGeneratorSet) -> bool {
    if gens.dimension() != 2 {
        return false;
    }
    let mut canon: Vec<(i64, i64)> = gens
        .half_generators()
        .iter()
        .map(|h| {
            let p = (h[0], h[1]);
            if p < (0, 0) {
                (-p.0, -p.1)
            } else {
                p
            }
        })
        .collect();
    canon.sort_unstable();
    canon == vec![(0, 1), (1, -1), (1, 0), (1, 1)]
}

/// `i^k` for integer `k`.
fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Half-period trapezoid nodes `x_k = 2πk/M`, `k = 0..=M/2`, with the weights
/// that fold the even integrand onto `[0, π]`.
fn half_nodes(m: usize) -> impl Iterator<Item = (f64, f64)> {
    (0..=m / 2).map(move |k| {
        let w = if k == 0 || k == m / 2 { 1.0 } else { 2.0 };
        (TWO_PI * k as f64 / m as f64, w)
    })
}

/// King's-grid kernel values on the square window `center ± half_width`.
///
/// Uses `ω = 8 − 2cos x − 2(1 + 2cos x)cos y`, which turns the `y` integral
/// into `i^{n₂} J_{n₂}(2t(1 + 2cos x))`. Values are row-major in
/// `(n₁ − c₁ + w, n₂ − c₂ + w)`.
pub fn king_kernel_window(center: (i64, i64), half_width: i64, t: f64, spec: &QuadratureSpec) -> Vec<Complex64> {
    let w = half_width.max(0);
    let side = (2 * w + 1) as usize;
    let reach = [center.0, center.1]
        .iter()
        .map(|c| c.unsigned_abs() + w as u64)
        .max()
        .unwrap_or(0);
    let m = spec.grid.samples_reaching(t, reach);
    let n1s: Vec<i64> = (center.0 - w..=center.0 + w).collect();
    let n2s: Vec<i64> = (center.1 - w..=center.1 + w).collect();
    let max_order = n2s.iter().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0);

    let nodes: Vec<(f64, f64)> = half_nodes(m).collect();
    let chunk = (nodes.len() / (4 * rayon::current_num_threads()).max(1)).max(64);
    let partials: Vec<Vec<Complex64>> = nodes
        .par_chunks(chunk)
        .map(|part| {
            let mut acc = vec![Complex64::new(0.0, 0.0); side * side];
            let mut js = Vec::new();
            let mut scratch = Vec::new();
            let mut jcol = vec![0.0; side];
            let mut cos_n1 = vec![0.0; side];
            for &(x, weight) in part {
                let c = x.cos();
                bessel_j_range_into(2.0 * t * (1.0 + 2.0 * c), max_order, &mut js, &mut scratch);
                for (slot, &n2) in jcol.iter_mut().zip(&n2s) {
                    let k = n2.unsigned_abs() as usize;
                    let v = js[k];
                    *slot = if n2 < 0 && k % 2 == 1 { -v } else { v };
                }
                for (slot, &n1) in cos_n1.iter_mut().zip(&n1s) {
                    *slot = (n1 as f64 * x).cos();
                }
                let base = cis(-t * (8.0 - 2.0 * c)) * weight;
                for (a, &cn) in cos_n1.iter().enumerate() {
                    let f = base * cn;
                    let row = &mut acc[a * side..(a + 1) * side];
                    for (r, &j) in row.iter_mut().zip(&jcol) {
                        *r += f * j;
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); side * side];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    let scale = 1.0 / m as f64;
    for (b, &n2) in n2s.iter().enumerate() {
        let phase = i_pow(n2) * scale;
        for a in 0..side {
            out[a * side + b] *= phase;
        }
    }
    out
}

/// One King's-grid kernel value through the Bessel reduction.
pub fn kernel_2d_bessel(n: (i64, i64), t: f64, spec: &QuadratureSpec) -> Complex64 {
    king_kernel_window(n, 0, t, spec)[0]
}

/// Largest `|K₂|` on the window `round(t·v) ± half_width`, and where it sits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WindowMax {
    pub t: f64,
    pub center: (i64, i64),
    pub argmax: (i64, i64),
    pub magnitude: f64,
}

pub fn lattice_point(velocity: [f64; 2], t: f64) -> (i64, i64) {
    ((t * velocity[0]).round() as i64, (t * velocity[1]).round() as i64)
}

pub fn king_window_max(velocity: [f64; 2], t: f64, half_width: i64, spec: &QuadratureSpec) -> WindowMax {
    let center = lattice_point(velocity, t);
    let vals = king_kernel_window(center, half_width, t, spec);
    let side = (2 * half_width.max(0) + 1) as usize;
    let (idx, magnitude) = vals
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v.norm() > bv { (i, v.norm()) } else { (bi, bv) });
    let w = half_width.max(0);
    WindowMax {
        t,
        center,
        argmax: (
            center.0 - w + (idx / side) as i64,
            center.1 - w + (idx % side) as i64,
        ),
        magnitude,
    }
}

/// `⌈√t⌉`, the default search half-width for sup continuation.
pub fn default_half_width(t: f64) -> i64 {
    t.abs().sqrt().ceil() as i64
}

/// `K₂(n; t)` by whichever per-point method `spec` names.
pub fn kernel_2d_value(gens: &HalfGeneratorSet, n: (i64, i64), t: f64, spec: &QuadratureSpec) -> Result<Complex64> {
    match spec.method {
        QuadratureMethod::PeriodicTrapezoidPoint => kernel_2d_point(gens, n, t, spec),
        QuadratureMethod::BesselReduced => {
            if !is_king_grid(gens) {
                return Err(Error::InvalidInput(
                    "the Bessel-reduced evaluator only applies to the King's grid".into(),
                ));
            }
            Ok(kernel_2d_bessel(n, t, spec))
        }
        QuadratureMethod::GaussPanels => {
            if t == 0.0 {
                return Ok(if n == (0, 0) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
            }
            let v = [n.0 as f64 / t, n.1 as f64 / t];
            Ok(eval_oscillatory_integral(gens, v, t, spec)? / (TWO_PI * TWO_PI))
        }
        QuadratureMethod::PeriodicTrapezoidFft => Ok(kernel_2d_grid(gens, t, spec)?.get(n.0, n.1)),
    }
}

// ---------------------------------------------------------------------------
// Oscillatory integral with arbitrary real velocity

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Panels per axis for the oscillatory integral at time `t`.
pub fn required_panels(gens: &HalfGeneratorSet, velocity: [f64; 2], t: f64) -> [usize; 2] {
    let per_axis = |axis: usize| {
        let osc = t.abs() * (gens.gradient_bound(axis) + velocity[axis].abs()) / TWO_PI;
        (4 * osc.ceil() as usize).max(1)
    };
    [per_axis(0), per_axis(1)]
}

fn composite_nodes(panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let h = TWO_PI / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            out.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// `I(v; t) = ∫_{[0,2π]²} e^{-it(ω(x) − v·x)} dx` by composite Gauss–Legendre
/// panels, for any real velocity.
///
/// Refuses with [`Error::PanelBudget`] when an axis needs more panels than
/// the budget allows.
pub fn eval_oscillatory_integral(
    gens: &HalfGeneratorSet,
    velocity: [f64; 2],
    t: f64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    require_plane(gens)?;
    let panels = required_panels(gens, velocity, t);
    let worst = panels[0].max(panels[1]);
    if worst > spec.panel_budget {
        return Err(Error::PanelBudget {
            required: worst,
            budget: spec.panel_budget,
        });
    }
    let xs = composite_nodes(panels[0], spec.panel_order);
    let ys = composite_nodes(panels[1], spec.panel_order);
    let gens: Vec<(f64, f64)> = gens
        .half_generators()
        .iter()
        .map(|h| (h[0] as f64, h[1] as f64))
        .collect();
    let g = gens.len();
    // cos/sin of h₂·y per node and generator, so each point costs one sincos.
    let mut ytab = Vec::with_capacity(ys.len() * g * 2);
    for &(y, _) in &ys {
        for &(_, h2) in &gens {
            let (s, c) = (h2 * y).sin_cos();
            ytab.push(c);
            ytab.push(s);
        }
    }
    let constant = 2.0 * g as f64;
    let partials: Vec<Complex64> = xs
        .par_iter()
        .map(|&(x, wx)| {
            let xtab: Vec<(f64, f64)> = gens.iter().map(|&(h1, _)| (h1 * x).sin_cos()).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &(y, wy)) in ys.iter().enumerate() {
                let row = &ytab[j * 2 * g..(j + 1) * 2 * g];
                let mut cos_sum = 0.0;
                for (k, &(sx, cx)) in xtab.iter().enumerate() {
                    cos_sum += cx * row[2 * k] - sx * row[2 * k + 1];
                }
                let omega = constant - 2.0 * cos_sum;
                let phase = -t * (omega - velocity[0] * x - velocity[1] * y);
                acc += cis(phase) * wy;
            }
            acc * wx
        })
        .collect();
    Ok(partials.iter().sum())
}

// ---------------------------------------------------------------------------
// 3D product

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LayeredSup {
    pub t: f64,
    pub plane_sup: f64,
    pub chain_sup: f64,
    pub value: f64,
}

/// `sup_n |K₃(n; t)|` for the layered King's grid, using the product
/// structure `ω₃ = ω_plane + ω_chain`.
pub fn kernel_3d_sup(
    plane: &HalfGeneratorSet,
    t: f64,
    plane_spec: &QuadratureSpec,
    chain_spec: &QuadratureSpec,
) -> Result<LayeredSup> {
    let plane_sup = kernel_2d_grid(plane, t, plane_spec)?.sup_abs();
    let chain_sup = kernel_1d_sup(t, chain_spec);
    Ok(LayeredSup {
        t,
        plane_sup,
        chain_sup,
        value: plane_sup * chain_sup,
    })
}

// ---------------------------------------------------------------------------
// Ray measurements

/// Largest `|K₂(round(t'·v); t')|` over `t' = t·(1 + span·k/samples)`,
/// `k < samples`. Interference between several stationary points can make a
/// single time land near a cancellation; the envelope follows the bound.
pub fn king_ray_envelope(velocity: [f64; 2], t: f64, samples: usize, span: f64, spec: &QuadratureSpec) -> f64 {
    (0..samples.max(1))
        .map(|k| {
            let tk = t * (1.0 + span * k as f64 / samples.max(1) as f64);
            kernel_2d_bessel(lattice_point(velocity, tk), tk, spec).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_j;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn grid_rules() {
        assert_eq!(GridRule::CHAIN.samples(0.0), 256);
        assert_eq!(GridRule::CHAIN.samples(100.0), 1024);
        assert_eq!(GridRule::PLANE.samples(64.0), 1024);
        for t in [0.0, 1.0, 17.0, 64.0, 300.0, 1000.0] {
            assert!(GridRule::CHAIN.samples(t) as f64 >= 6.0 * t + 64.0);
            assert!(GridRule::PLANE.samples(t) as f64 >= 12.0 * t + 64.0);
        }
    }

    #[test]
    fn chain_kernel_is_a_bessel_function() {
        let spec = QuadratureSpec::chain();
        assert!(close(kernel_1d(0, 0.0, &spec), Complex64::new(1.0, 0.0), 1e-15));
        for &t in &[0.5, 3.0, 17.25, 60.0] {
            let all = kernel_1d_all(t, &spec);
            for n in [-40i64, -3, 0, 1, 7, 33, 90] {
                let expect = cis(-2.0 * t) * i_pow(n) * bessel_j(n, 2.0 * t);
                assert!(close(kernel_1d(n, t, &spec), expect, 1e-12), "t={t} n={n}");
                assert!(close(all.get(n), expect, 1e-12));
            }
        }
    }

    #[test]
    fn plane_grid_trivial_time() {
        let k = kernel_2d_grid(&HalfGeneratorSet::king2d(), 0.0, &QuadratureSpec::plane_fft()).unwrap();
        assert!(close(k.get(0, 0), Complex64::new(1.0, 0.0), 1e-13));
        let off: f64 = k
            .values
            .iter()
            .skip(1)
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        assert!(off < 1e-13);
    }

    #[test]
    fn plane_grid_parseval_and_symmetry() {
        let gens = HalfGeneratorSet::king2d();
        for &t in &[3.0, 20.0, 45.5] {
            let k = kernel_2d_grid(&gens, t, &QuadratureSpec::plane_fft()).unwrap();
            assert!((k.squared_norm() - 1.0).abs() < 1e-10);
            for &(a, b) in &[(1i64, 2i64), (5, 0), (17, 40), (3, 3)] {
                let v = k.get(a, b);
                for w in [k.get(-a, b), k.get(a, -b), k.get(-a, -b), k.get(b, a)] {
                    assert!(close(v, w, 1e-12));
                }
            }
        }
    }

    #[test]
    fn memory_budget_refusal() {
        let spec = QuadratureSpec::plane_fft().with_memory_budget(1 << 20);
        match kernel_2d_grid(&HalfGeneratorSet::king2d(), 64.0, &spec) {
            Err(Error::MemoryBudget { required_n, .. }) => assert_eq!(required_n, 1024),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn point_grid_and_bessel_agree() {
        let gens = HalfGeneratorSet::king2d();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &t in &[5.0, 24.0] {
            let grid = kernel_2d_grid(&gens, t, &QuadratureSpec::plane_fft()).unwrap();
            for _ in 0..4 {
                let n = (rng.gen_range(-(6.0 * t) as i64..=(6.0 * t) as i64), rng.gen_range(-(3.0 * t) as i64..=(3.0 * t) as i64));
                let p = kernel_2d_point(&gens, n, t, &QuadratureSpec::plane_point()).unwrap();
                let b = kernel_2d_bessel(n, t, &QuadratureSpec::plane_bessel());
                assert!(close(p, grid.get(n.0, n.1), 1e-12), "{n:?}");
                assert!(close(b, p, 1e-12), "{n:?}");
            }
        }
    }

    #[test]
    fn bessel_window_matches_points() {
        let spec = QuadratureSpec::plane_bessel();
        let t = 40.0;
        let vals = king_kernel_window((150, -20), 3, t, &spec);
        for a in 0..7 {
            for b in 0..7 {
                let n = (147 + a as i64, -23 + b as i64);
                assert!(close(vals[a * 7 + b], kernel_2d_bessel(n, t, &spec), 1e-14));
            }
        }
        let wm = king_window_max([3.75, -0.5], t, 3, &spec);
        assert_eq!(wm.center, (150, -20));
    }

    #[test]
    fn king_grid_detection() {
        assert!(is_king_grid(&HalfGeneratorSet::king2d()));
        let flipped = HalfGeneratorSet::new(2, vec![vec![0, -1], vec![-1, 1], vec![1, 0], vec![-1, -1]]).unwrap();
        assert!(is_king_grid(&flipped));
        assert!(!is_king_grid(&HalfGeneratorSet::lattice_zd(2).unwrap()));
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_integral_at_rest_and_lattice_velocities() {
        let gens = HalfGeneratorSet::king2d();
        let spec = QuadratureSpec::gauss_panels();
        let i0 = eval_oscillatory_integral(&gens, [0.3, -1.7], 0.0, &spec).unwrap();
        assert!(close(i0, Complex64::new(TWO_PI * TWO_PI, 0.0), 1e-12));
        let t = 16.0;
        let n = (37i64, -12i64);
        let i = eval_oscillatory_integral(&gens, [n.0 as f64 / t, n.1 as f64 / t], t, &spec).unwrap();
        let k = kernel_2d_point(&gens, n, t, &QuadratureSpec::plane_point()).unwrap();
        assert!(close(i, k * TWO_PI * TWO_PI, 1e-8));
    }

    #[test]
    fn panel_budget_refusal() {
        let spec = QuadratureSpec::gauss_panels().with_panel_budget(100);
        match eval_oscillatory_integral(&HalfGeneratorSet::king2d(), [0.0, 0.0], 1000.0, &spec) {
            Err(Error::PanelBudget { required, budget }) => {
                assert_eq!(budget, 100);
                assert!(required > 100);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn layered_sup_is_a_product() {
        let s = kernel_3d_sup(
            &HalfGeneratorSet::king2d(),
            0.0,
            &QuadratureSpec::plane_fft(),
            &QuadratureSpec::chain(),
        )
        .unwrap();
        assert!((s.value - 1.0).abs() < 1e-13);
        let s = kernel_3d_sup(&HalfGeneratorSet::king2d(), 10.0, &QuadratureSpec::plane_fft(), &QuadratureSpec::chain()).unwrap();
        assert_eq!(s.value, s.plane_sup * s.chain_sup);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn plane_kernel_is_unitary_and_symmetric(t in 0.0f64..40.0, a in -200i64..200, b in -200i64..200) {
            let k = kernel_2d_grid(&HalfGeneratorSet::king2d(), t, &QuadratureSpec::plane_fft()).unwrap();
            prop_assert!((k.squared_norm() - 1.0).abs() < 1e-10);
            let v = k.get(a, b);
            prop_assert!(close(v, k.get(b, a), 1e-12));
            prop_assert!(close(v, k.get(-a, -b), 1e-12));
        }

        #[test]
        fn far_sites_are_not_aliased(t in 0.5f64..30.0, n in 0i64..2000) {
            let expect = cis(-2.0 * t) * i_pow(n) * bessel_j(n, 2.0 * t);
            prop_assert!(close(kernel_1d(n, t, &QuadratureSpec::chain()), expect, 1e-12));
        }

        #[test]
        fn reaching_grid_leaves_room(t in 0.0f64..500.0, reach in 0u64..100_000) {
            let base = GridRule::PLANE.samples(t);
            let m = GridRule::PLANE.samples_reaching(t, reach);
            prop_assert!(m.is_power_of_two() && m >= base);
            prop_assert!(m as u64 >= 2 * reach + base as u64 / 2);
        }
    }
}
