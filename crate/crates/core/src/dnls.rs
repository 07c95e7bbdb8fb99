//! Linear and nonlinear discrete Schrödinger evolution on a periodic box.
//!
//! `∂ₜu − iΔu ± i|u|^{2a}u = F` is split into the exact linear flow
//! (a Fourier multiplier `e^{−i·dt·ω(k)}`) and the exact pointwise phase
//! rotation, composed in Strang order.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Rational64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::decay::{fit_decay, geometric_ladder};
use crate::symbol::{HalfGeneratorSet, TWO_PI};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Fields

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    shape: Vec<usize>,
    values: Vec<Complex64>,
}

impl LatticeField {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&l| l == 0 || !l.is_power_of_two()) {
            return Err(Error::InvalidInput(format!(
                "box sides must be positive powers of two, got {shape:?}"
            )));
        }
        let len = shape.iter().product();
        Ok(LatticeField {
            shape: shape.to_vec(),
            values: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    pub fn from_values(shape: &[usize], values: Vec<Complex64>) -> Result<Self> {
        let mut f = Self::zeros(shape)?;
        if values.len() != f.values.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values for box {shape:?}, got {}",
                f.values.len(),
                values.len()
            )));
        }
        f.values = values;
        Ok(f)
    }

    /// Unit mass at the box centre, scaled to `amplitude`.
    pub fn delta(shape: &[usize], amplitude: f64) -> Result<Self> {
        let mut f = Self::zeros(shape)?;
        let centre: Vec<i64> = shape.iter().map(|&l| (l / 2) as i64).collect();
        let idx = f.index(&centre);
        f.values[idx] = Complex64::new(amplitude, 0.0);
        Ok(f)
    }

    /// Gaussian bump of the given width around the centre, normalised to
    /// `‖u‖ℓ² = amplitude`.
    pub fn gaussian(shape: &[usize], width: f64, amplitude: f64) -> Result<Self> {
        let mut f = Self::zeros(shape)?;
        let dims = shape.len();
        for (i, v) in f.values.iter_mut().enumerate() {
            let mut rest = i;
            let mut r2 = 0.0;
            for a in (0..dims).rev() {
                let l = shape[a];
                let k = rest % l;
                rest /= l;
                let d = k as f64 - (l / 2) as f64;
                r2 += d * d;
            }
            *v = Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0);
        }
        let n = f.norm(2.0);
        f.scale(amplitude / n);
        Ok(f)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major index of a (periodically wrapped) lattice site.
    pub fn index(&self, site: &[i64]) -> usize {
        let mut idx = 0usize;
        for (&n, &l) in site.iter().zip(&self.shape) {
            idx = idx * l + n.rem_euclid(l as i64) as usize;
        }
        idx
    }

    pub fn get(&self, site: &[i64]) -> Complex64 {
        self.values[self.index(site)]
    }

    pub fn scale(&mut self, s: f64) {
        self.values.par_iter_mut().for_each(|v| *v *= s);
    }

    /// `ℓ^r` norm; `r = ∞` gives the maximum modulus.
    pub fn norm(&self, r: f64) -> f64 {
        if r.is_infinite() {
            self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
        } else if r == 2.0 {
            self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
        } else if r == 4.0 {
            self.values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>().sqrt().sqrt()
        } else {
            self.values.iter().map(|v| v.norm().powf(r)).sum::<f64>().powf(1.0 / r)
        }
    }

    pub fn distance(&self, other: &LatticeField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Flat little-endian `(re, im)` pairs in row-major order.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(self.values.len() * 16);
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(shape: &[usize], mut r: impl Read) -> Result<Self> {
        let mut f = Self::zeros(shape)?;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() != f.values.len() * 16 {
            return Err(Error::InvalidInput(format!(
                "binary field has {} bytes, expected {}",
                buf.len(),
                f.values.len() * 16
            )));
        }
        for (v, chunk) in f.values.iter_mut().zip(buf.chunks_exact(16)) {
            let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
            let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
            *v = Complex64::new(re, im);
        }
        Ok(f)
    }
}

// ---------------------------------------------------------------------------
// Spectral machinery

/// FFT plans and the symbol sampled on the box's frequencies.
pub struct Spectral {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    symbol: Vec<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("shape", &self.shape).finish()
    }
}

impl Spectral {
    pub fn new(gens: &HalfGeneratorSet, shape: &[usize]) -> Result<Self> {
        if gens.dimension() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: gens.dimension(),
                found: shape.len(),
            });
        }
        LatticeField::zeros(shape)?;
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&l| planner.plan_fft_forward(l)).collect();
        let inverse = shape.iter().map(|&l| planner.plan_fft_inverse(l)).collect();
        let total: usize = shape.iter().product();
        let dims = shape.len();
        let symbol = (0..total)
            .into_par_iter()
            .map(|i| {
                let mut rest = i;
                let mut k = vec![0.0; dims];
                for a in (0..dims).rev() {
                    let l = shape[a];
                    k[a] = TWO_PI * (rest % l) as f64 / l as f64;
                    rest /= l;
                }
                gens.symbol_at(&k)
            })
            .collect();
        Ok(Spectral {
            shape: shape.to_vec(),
            forward,
            inverse,
            symbol,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn transform(&self, values: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let dims = self.shape.len();
        for axis in 0..dims {
            let len = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                values.par_chunks_mut(len).for_each_init(
                    || vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                    |scratch, line| plan.process_with_scratch(line, scratch),
                );
            } else {
                values.par_chunks_mut(len * stride).for_each(|block| {
                    let mut line = vec![Complex64::new(0.0, 0.0); len];
                    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                    for i in 0..stride {
                        for (k, slot) in line.iter_mut().enumerate() {
                            *slot = block[k * stride + i];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for (k, v) in line.iter().enumerate() {
                            block[k * stride + i] = *v;
                        }
                    }
                });
            }
        }
    }

    /// `e^{−i·dt·ω(k)} / N` on every frequency.
    pub fn multiplier(&self, dt: f64) -> Vec<Complex64> {
        let norm = 1.0 / self.symbol.len() as f64;
        self.symbol
            .par_iter()
            .map(|&w| {
                let (s, c) = (-dt * w).sin_cos();
                Complex64::new(c * norm, s * norm)
            })
            .collect()
    }

    pub fn apply_multiplier(&self, field: &mut LatticeField, multiplier: &[Complex64]) {
        self.transform(&mut field.values, false);
        field
            .values
            .par_iter_mut()
            .zip(multiplier.par_iter())
            .for_each(|(v, m)| *v *= m);
        self.transform(&mut field.values, true);
    }
}

/// One exact step of the linear flow `e^{i·dt·Δ}`.
pub fn linear_step(spectral: &Spectral, field: &mut LatticeField, dt: f64) {
    let m = spectral.multiplier(dt);
    spectral.apply_multiplier(field, &m);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearSign {
    /// `∂ₜu − iΔu + i|u|^{2a}u = 0`.
    Plus,
    /// `∂ₜu − iΔu − i|u|^{2a}u = 0`.
    Minus,
}

impl FromStr for NonlinearSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" | "plus" => Ok(NonlinearSign::Plus),
            "-" | "minus" => Ok(NonlinearSign::Minus),
            other => Err(Error::InvalidInput(format!("unknown sign `{other}`"))),
        }
    }
}

impl fmt::Display for NonlinearSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NonlinearSign::Plus => "plus",
            NonlinearSign::Minus => "minus",
        })
    }
}

/// Exact pointwise flow `u ↦ u·exp(∓i|u|^{2a}dt)`.
pub fn nonlinear_step(field: &mut LatticeField, dt: f64, a: f64, sign: NonlinearSign) {
    let s = match sign {
        NonlinearSign::Plus => -1.0,
        NonlinearSign::Minus => 1.0,
    };
    field.values.par_iter_mut().for_each(|v| {
        let m = v.norm();
        if m == 0.0 {
            return;
        }
        let (sn, cs) = (s * m.powf(2.0 * a) * dt).sin_cos();
        *v *= Complex64::new(cs, sn);
    });
}

// ---------------------------------------------------------------------------
// Evolution

/// Source term `F(n, t) = amplitude · δ_centre(n)` for `t < until`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub amplitude: f64,
    pub until: f64,
}

impl SourceSpec {
    fn field(&self, shape: &[usize], t: f64) -> Result<Option<LatticeField>> {
        if t >= self.until {
            return Ok(None);
        }
        LatticeField::delta(shape, self.amplitude).map(Some)
    }

    fn l2_at(&self, t: f64) -> f64 {
        if t < self.until {
            self.amplitude.abs()
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub a: f64,
    pub sign: NonlinearSign,
    pub source: Option<SourceSpec>,
    /// Record norms every `stride` steps.
    pub stride: usize,
    /// `ℓ^r` exponents to record; `inf` allowed.
    pub r_values: Vec<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            dt: 0.05,
            t_final: 10.0,
            a: 1.0,
            sign: NonlinearSign::Plus,
            source: None,
            stride: 10,
            r_values: vec![2.0, 4.0, f64::INFINITY],
        }
    }
}

fn parse_r(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t == "∞" {
        return Ok(f64::INFINITY);
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: f64 = n.trim().parse().map_err(|_| Error::InvalidInput(format!("bad exponent `{t}`")))?;
        let d: f64 = d.trim().parse().map_err(|_| Error::InvalidInput(format!("bad exponent `{t}`")))?;
        return Ok(n / d);
    }
    t.parse().map_err(|_| Error::InvalidInput(format!("bad exponent `{t}`")))
}

/// Run description read from a `key = value` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub shape: Vec<usize>,
    pub initial: String,
    pub amplitude: f64,
    pub width: f64,
    pub evolution: EvolutionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "lkg3d".into(),
            shape: vec![64, 64, 64],
            initial: "gaussian".into(),
            amplitude: 1e-2,
            width: 1.5,
            evolution: EvolutionConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut source_amp: Option<f64> = None;
        let mut source_until = f64::INFINITY;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::Parse { line: i + 1, message: m };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("`{k}` needs a number, got `{v}`")));
            match k {
                "preset" => cfg.preset = v.to_string(),
                "box" => {
                    cfg.shape = v
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<usize>().map_err(|_| bad(format!("bad box side `{s}`"))))
                        .collect::<Result<_>>()?
                }
                "initial" => cfg.initial = v.to_string(),
                "amplitude" => cfg.amplitude = num(v)?,
                "width" => cfg.width = num(v)?,
                "dt" => cfg.evolution.dt = num(v)?,
                "t_final" => cfg.evolution.t_final = num(v)?,
                "a" => cfg.evolution.a = num(v)?,
                "sign" => cfg.evolution.sign = v.parse().map_err(|e: Error| bad(e.to_string()))?,
                "stride" => {
                    cfg.evolution.stride = v.parse().map_err(|_| bad(format!("bad stride `{v}`")))?
                }
                "r_values" => {
                    cfg.evolution.r_values = v
                        .split(',')
                        .map(|s| parse_r(s).map_err(|e| bad(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "source_amplitude" => source_amp = Some(num(v)?),
                "source_until" => source_until = num(v)?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if let Some(amplitude) = source_amp {
            cfg.evolution.source = Some(SourceSpec {
                amplitude,
                until: source_until,
            });
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn generators(&self) -> Result<HalfGeneratorSet> {
        HalfGeneratorSet::preset(&self.preset, Some(self.shape.len()))
    }

    pub fn initial_field(&self) -> Result<LatticeField> {
        match self.initial.as_str() {
            "delta" => LatticeField::delta(&self.shape, self.amplitude),
            "gaussian" => LatticeField::gaussian(&self.shape, self.width, self.amplitude),
            other => Err(Error::InvalidInput(format!("unknown initial datum `{other}`"))),
        }
    }
}

/// Recorded norms: `norms[i][j]` is `‖u(times[i])‖_{r_values[j]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub times: Vec<f64>,
    pub r_values: Vec<f64>,
    pub norms: Vec<Vec<f64>>,
    /// `‖F(t)‖ℓ²` at the recorded times (zero without a source).
    pub source_l2: Vec<f64>,
}

impl NormSeries {
    fn column_index(&self, r: f64) -> Option<usize> {
        self.r_values
            .iter()
            .position(|&x| x == r || (x.is_infinite() && r.is_infinite()))
    }

    pub fn column(&self, r: f64) -> Option<Vec<f64>> {
        let j = self.column_index(r)?;
        Some(self.norms.iter().map(|row| row[j]).collect())
    }

    /// `‖u‖_{L^q_t ℓ^r}` over `[0, t_max]` by the composite trapezoid rule on
    /// the recorded times.
    pub fn mixed_norm(&self, q: f64, r: f64, t_max: f64) -> Option<f64> {
        let col = self.column(r)?;
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .copied()
            .zip(col)
            .take_while(|(t, _)| *t <= t_max * (1.0 + 1e-12))
            .collect();
        if q.is_infinite() {
            return Some(pts.iter().map(|p| p.1).fold(0.0, f64::max));
        }
        Some(trapezoid(&pts, |v| v.powf(q)).powf(1.0 / q))
    }

    /// `∫₀^{t_max} ‖F(t)‖ℓ² dt`, the `L¹_t ℓ²` norm of the source.
    pub fn source_dual_norm(&self, t_max: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .copied()
            .zip(self.source_l2.iter().copied())
            .take_while(|(t, _)| *t <= t_max * (1.0 + 1e-12))
            .collect();
        trapezoid(&pts, |v| v)
    }

    pub fn csv(&self) -> String {
        let label = |r: f64| if r.is_infinite() { "linf".to_string() } else { format!("l{r}") };
        let mut out = String::from("t");
        for &r in &self.r_values {
            out.push(',');
            out.push_str(&label(r));
        }
        out.push_str(",source_l2\n");
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for v in &self.norms[i] {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push_str(&format!(",{:.17e}\n", self.source_l2[i]));
        }
        out
    }
}

fn trapezoid(pts: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    pts.windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (f(w[0].1) + f(w[1].1)))
        .sum()
}

#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub series: NormSeries,
    pub final_field: LatticeField,
    pub steps: usize,
}

/// Strang splitting: half nonlinear, full linear, half nonlinear. A source
/// enters as the midpoint Duhamel kick `dt·F(t + dt/2)` between two half
/// linear steps, which keeps the composition symmetric.
pub fn evolve(gens: &HalfGeneratorSet, config: &EvolutionConfig, u0: &LatticeField) -> Result<EvolutionOutcome> {
    if !(config.dt > 0.0) || !(config.t_final >= 0.0) || config.a < 0.0 || config.stride == 0 {
        return Err(Error::InvalidInput(format!(
            "invalid evolution parameters: dt = {}, t_final = {}, a = {}, stride = {}",
            config.dt, config.t_final, config.a, config.stride
        )));
    }
    let spectral = Spectral::new(gens, u0.shape())?;
    let full = spectral.multiplier(config.dt);
    let half = config.source.map(|_| spectral.multiplier(0.5 * config.dt));
    let steps = (config.t_final / config.dt).round() as usize;
    let mut u = u0.clone();
    let mut series = NormSeries {
        times: Vec::new(),
        r_values: config.r_values.clone(),
        norms: Vec::new(),
        source_l2: Vec::new(),
    };
    let record = |series: &mut NormSeries, u: &LatticeField, t: f64| {
        series.times.push(t);
        series.norms.push(config.r_values.iter().map(|&r| u.norm(r)).collect());
        series.source_l2.push(config.source.map_or(0.0, |s| s.l2_at(t)));
    };
    record(&mut series, &u, 0.0);
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * config.dt;
        nonlinear_step(&mut u, 0.5 * config.dt, config.a, config.sign);
        match (config.source, half.as_ref()) {
            (Some(src), Some(half)) => {
                spectral.apply_multiplier(&mut u, half);
                if let Some(f) = src.field(u.shape(), t0 + 0.5 * config.dt)? {
                    u.values
                        .par_iter_mut()
                        .zip(f.values.par_iter())
                        .for_each(|(v, g)| *v += g * config.dt);
                }
                spectral.apply_multiplier(&mut u, half);
            }
            _ => spectral.apply_multiplier(&mut u, &full),
        }
        nonlinear_step(&mut u, 0.5 * config.dt, config.a, config.sign);
        if !u.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if step % config.stride == 0 || step == steps {
            record(&mut series, &u, step as f64 * config.dt);
        }
    }
    Ok(EvolutionOutcome {
        series,
        final_field: u,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Admissibility

/// A Lebesgue exponent in `[1, ∞]` held exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational64),
    Infinite,
}

impl Exponent {
    pub fn reciprocal(&self) -> Rational64 {
        match self {
            Exponent::Finite(r) => r.recip(),
            Exponent::Infinite => Rational64::from_integer(0),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Exponent::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            Exponent::Infinite => f64::INFINITY,
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t == "∞" {
            return Ok(Exponent::Infinite);
        }
        let bad = || Error::InvalidInput(format!("bad exponent `{t}`"));
        let r = match t.split_once('/') {
            Some((n, d)) => {
                let n: i64 = n.trim().parse().map_err(|_| bad())?;
                let d: i64 = d.trim().parse().map_err(|_| bad())?;
                if d == 0 {
                    return Err(bad());
                }
                Rational64::new(n, d)
            }
            None => Rational64::from_integer(t.parse().map_err(|_| bad())?),
        };
        Ok(Exponent::Finite(r))
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(r) => write!(f, "{r}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Admissibility {
    pub admissible: bool,
    /// `1/q + σ/r`.
    pub lhs: Rational64,
    /// `σ/2`.
    pub rhs: Rational64,
    pub on_boundary: bool,
}

/// The σ-admissibility conditions `q, r ≥ 2`, `(q, r, σ) ≠ (2, ∞, 1)` and
/// `1/q + σ/r ≤ σ/2`, checked in exact arithmetic.
pub fn admissibility(q: Exponent, r: Exponent, sigma: Rational64) -> Admissibility {
    let two = Rational64::from_integer(2);
    let at_least_two = |e: Exponent| match e {
        Exponent::Infinite => true,
        Exponent::Finite(v) => v >= two,
    };
    let excluded = q == Exponent::Finite(two) && r == Exponent::Infinite && sigma == Rational64::from_integer(1);
    let lhs = q.reciprocal() + sigma * r.reciprocal();
    let rhs = sigma / two;
    Admissibility {
        admissible: at_least_two(q) && at_least_two(r) && !excluded && lhs <= rhs,
        lhs,
        rhs,
        on_boundary: lhs == rhs,
    }
}

pub fn admissible(q: Exponent, r: Exponent, sigma: Rational64) -> bool {
    admissibility(q, r, sigma).admissible
}

/// The decay rate of the layered King's grid, `13/12`.
pub fn layered_sigma() -> Rational64 {
    Rational64::new(13, 12)
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzEntry {
    pub q: String,
    pub r: String,
    pub window: f64,
    pub mixed_norm: f64,
    pub data_norm: f64,
    pub ratio: f64,
}

/// Mixed norms of the recorded solution against `‖u₀‖ℓ² + ‖F‖_{L¹ℓ²}` for
/// each pair and window.
pub fn strichartz_report(
    series: &NormSeries,
    u0_l2: f64,
    pairs: &[(Exponent, Exponent)],
    windows: &[f64],
) -> Result<Vec<StrichartzEntry>> {
    let sigma = layered_sigma();
    let mut out = Vec::new();
    for &(q, r) in pairs {
        if !admissible(q, r, sigma) {
            return Err(Error::Inadmissible {
                q: q.to_string(),
                r: r.to_string(),
                sigma: sigma.to_string(),
            });
        }
        for &w in windows {
            let mixed = series.mixed_norm(q.to_f64(), r.to_f64(), w).ok_or_else(|| {
                Error::InvalidInput(format!("ℓ^{r} was not recorded; add it to r_values"))
            })?;
            let data = u0_l2 + series.source_dual_norm(w);
            out.push(StrichartzEntry {
                q: q.to_string(),
                r: r.to_string(),
                window: w,
                mixed_norm: mixed,
                data_norm: data,
                ratio: mixed / data,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Small-data experiment

#[derive(Clone, Debug, Serialize)]
pub struct GwpRun {
    pub epsilon: f64,
    pub completed: bool,
    pub failure: Option<String>,
    /// Slope of `log ℓ^∞` against `log t` on log-spaced samples in `[1, t_final]`.
    pub linf_slope: Option<f64>,
    /// The same fit over every recorded time `t ≥ 1`, which weights the late,
    /// box-saturated tail heavily.
    pub linf_slope_uniform: Option<f64>,
    pub series: NormSeries,
}

#[derive(Clone, Debug, Serialize)]
pub struct GwpReport {
    pub a: f64,
    pub t_final: f64,
    pub shape: Vec<usize>,
    pub runs: Vec<GwpRun>,
    /// Ratio of the final norms for consecutive ε, divided by the ε ratio.
    pub linearity: Vec<f64>,
}

const GWP_SAMPLES_PER_OCTAVE: usize = 4;

/// The recorded point nearest each node of a geometric ladder, without repeats.
fn log_spaced(pts: &[(f64, f64)], per_octave: usize) -> Vec<(f64, f64)> {
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return Vec::new();
    };
    let mut out: Vec<(f64, f64)> = Vec::new();
    for t in geometric_ladder(first.0, last.0, per_octave) {
        let p = *pts
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .unwrap();
        if out.last().map_or(true, |q| q.0 < p.0) {
            out.push(p);
        }
    }
    out
}

/// Evolves Gaussian data of `ℓ²` size `ε` for each `ε` in the ladder.
pub fn gwp_experiment(gens: &HalfGeneratorSet, shape: &[usize], width: f64, epsilons: &[f64], config: &EvolutionConfig) -> Result<GwpReport> {
    let mut runs = Vec::new();
    for &eps in epsilons {
        let u0 = LatticeField::gaussian(shape, width, eps)?;
        let mut cfg = config.clone();
        if !cfg.r_values.iter().any(|r| r.is_infinite()) {
            cfg.r_values.push(f64::INFINITY);
        }
        match evolve(gens, &cfg, &u0) {
            Ok(out) => {
                let linf = out.series.column(f64::INFINITY).unwrap_or_default();
                let pts: Vec<(f64, f64)> = out
                    .series
                    .times
                    .iter()
                    .copied()
                    .zip(linf)
                    .filter(|(t, _)| *t >= 1.0)
                    .collect();
                let logged = log_spaced(&pts, GWP_SAMPLES_PER_OCTAVE);
                runs.push(GwpRun {
                    epsilon: eps,
                    completed: true,
                    failure: None,
                    linf_slope: fit_decay(&logged).ok().map(|f| f.exponent),
                    linf_slope_uniform: fit_decay(&pts).ok().map(|f| f.exponent),
                    series: out.series,
                });
            }
            Err(e) => runs.push(GwpRun {
                epsilon: eps,
                completed: false,
                failure: Some(e.to_string()),
                linf_slope: None,
                linf_slope_uniform: None,
                series: NormSeries {
                    times: vec![],
                    r_values: cfg.r_values.clone(),
                    norms: vec![],
                    source_l2: vec![],
                },
            }),
        }
    }
    let linearity = runs
        .windows(2)
        .filter(|w| w[0].completed && w[1].completed)
        .map(|w| {
            let last = |r: &GwpRun| r.series.norms.last().map(|row| row[row.len() - 1]).unwrap_or(f64::NAN);
            (last(&w[1]) / last(&w[0])) / (w[1].epsilon / w[0].epsilon)
        })
        .collect();
    Ok(GwpReport {
        a: config.a,
        t_final: config.t_final,
        shape: shape.to_vec(),
        runs,
        linearity,
    })
}

/// JSON sidecar for a binary field dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldSidecar {
    #[serde(rename = "box")]
    pub shape: Vec<usize>,
    pub dt: f64,
    pub t_final: f64,
    pub a: f64,
    pub sign: NonlinearSign,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillatory::{kernel_2d_point, QuadratureSpec};
    use proptest::prelude::*;

    fn king() -> HalfGeneratorSet {
        HalfGeneratorSet::king2d()
    }

    #[test]
    fn box_validation() {
        assert!(LatticeField::zeros(&[64, 48]).is_err());
        assert!(LatticeField::zeros(&[]).is_err());
        assert_eq!(LatticeField::zeros(&[4, 8, 2]).unwrap().len(), 64);
    }

    #[test]
    fn linear_step_identity_and_unitarity() {
        let sp = Spectral::new(&king(), &[32, 32]).unwrap();
        let u0 = LatticeField::gaussian(&[32, 32], 2.0, 1.0).unwrap();
        let mut u = u0.clone();
        linear_step(&sp, &mut u, 0.0);
        assert!(u.distance(&u0) < 1e-15);
        for _ in 0..10 {
            linear_step(&sp, &mut u, 0.3);
        }
        assert!((u.norm(2.0) - 1.0).abs() < 1e-12);
        for _ in 0..10 {
            linear_step(&sp, &mut u, -0.3);
        }
        assert!(u.distance(&u0) < 1e-12);
    }

    #[test]
    fn delta_evolution_is_the_kernel() {
        // The box must exceed the kernel's support (about 6t per side).
        let shape = [512, 512];
        let sp = Spectral::new(&king(), &shape).unwrap();
        let mut u = LatticeField::delta(&shape, 1.0).unwrap();
        linear_step(&sp, &mut u, 32.0);
        let spec = QuadratureSpec::plane_point();
        for n in [(0i64, 0i64), (10, -3), (100, 50), (-150, 20), (60, 190)] {
            let k = kernel_2d_point(&king(), n, 32.0, &spec).unwrap();
            let v = u.get(&[256 + n.0, 256 + n.1]);
            assert!((k - v).norm() < 1e-8, "{n:?}: {k} vs {v}");
        }
    }

    #[test]
    fn nonlinear_step_closed_forms() {
        let mut z = LatticeField::zeros(&[8]).unwrap();
        nonlinear_step(&mut z, 1.0, 1.5, NonlinearSign::Plus);
        assert!(z.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));

        for sign in [NonlinearSign::Plus, NonlinearSign::Minus] {
            let mut u = LatticeField::delta(&[8], 1.0).unwrap();
            nonlinear_step(&mut u, std::f64::consts::PI, 1.0, sign);
            assert!((u.get(&[4]) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        }

        let u0 = LatticeField::gaussian(&[16, 16], 2.0, 3.0).unwrap();
        let mut u = u0.clone();
        nonlinear_step(&mut u, 0.7, 0.8, NonlinearSign::Minus);
        for (a, b) in u.values().iter().zip(u0.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-16 * b.norm().max(1.0));
        }
    }

    #[test]
    fn linear_evolution_matches_repeated_steps() {
        let shape = [32, 32];
        let u0 = LatticeField::gaussian(&shape, 1.5, 1.0).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.1,
            t_final: 2.0,
            a: 0.0,
            stride: 5,
            ..EvolutionConfig::default()
        };
        let out = evolve(&king(), &cfg, &u0).unwrap();
        let sp = Spectral::new(&king(), &shape).unwrap();
        let m = sp.multiplier(0.1);
        let mut u = u0.clone();
        // a = 0 rotates by a constant phase, exp(∓i dt), per step.
        for _ in 0..20 {
            sp.apply_multiplier(&mut u, &m);
        }
        let phase = Complex64::from_polar(1.0, -2.0);
        let expect: Vec<Complex64> = u.values().iter().map(|v| v * phase).collect();
        let expect = LatticeField::from_values(&shape, expect).unwrap();
        assert!(out.final_field.distance(&expect) < 1e-12);
        assert_eq!(out.series.times.len(), 5);
    }

    #[test]
    fn l2_conservation_and_second_order() {
        let shape = [32, 32];
        let u0 = LatticeField::gaussian(&shape, 2.0, 2.0).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.01,
            t_final: 10.0,
            a: 1.0,
            stride: 100,
            ..EvolutionConfig::default()
        };
        let out = evolve(&king(), &cfg, &u0).unwrap();
        let l2 = out.series.column(2.0).unwrap();
        assert!(l2.iter().all(|v| (v / l2[0] - 1.0).abs() < 1e-12));

        let run = |dt: f64| {
            let c = EvolutionConfig {
                dt,
                t_final: 1.0,
                a: 1.0,
                stride: 1000,
                ..EvolutionConfig::default()
            };
            evolve(&king(), &c, &u0).unwrap().final_field
        };
        let (a, b, c) = (run(0.04), run(0.02), run(0.01));
        let order = (a.distance(&b) / b.distance(&c)).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
    }

    #[test]
    fn admissibility_examples() {
        let e = |s: &str| s.parse::<Exponent>().unwrap();
        let sigma = layered_sigma();
        let r = admissibility(e("inf"), e("2"), sigma);
        assert!(r.admissible && r.on_boundary);
        assert!(!admissible(e("2"), e("inf"), Rational64::from_integer(1)));
        let r = admissibility(e("37/13"), e("74/13"), sigma);
        assert!(r.admissible && r.on_boundary);
        assert_eq!(r.lhs, Rational64::new(13, 24));
        assert!(!admissible(e("3/2"), e("4"), sigma));
        assert!(!admissible(e("2"), e("2"), sigma));
    }

    #[test]
    fn strichartz_ratios() {
        let shape = [64, 64];
        let u0 = LatticeField::delta(&shape, 1.0).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.1,
            t_final: 8.0,
            a: 0.0,
            stride: 1,
            r_values: vec![2.0, 74.0 / 13.0],
            ..EvolutionConfig::default()
        };
        let out = evolve(&king(), &cfg, &u0).unwrap();
        let e = |s: &str| s.parse::<Exponent>().unwrap();
        let rep = strichartz_report(&out.series, 1.0, &[(e("inf"), e("2")), (e("37/13"), e("74/13"))], &[4.0, 8.0]).unwrap();
        assert!((rep[0].ratio - 1.0).abs() < 1e-12);
        assert!(rep[3].ratio >= rep[2].ratio);
        assert!(strichartz_report(&out.series, 1.0, &[(e("2"), e("2"))], &[4.0]).is_err());
    }

    #[test]
    fn source_enters_through_duhamel() {
        let shape = [32, 32];
        let u0 = LatticeField::zeros(&shape).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.01,
            t_final: 0.5,
            a: 0.0,
            stride: 10,
            source: Some(SourceSpec {
                amplitude: 1.0,
                until: f64::INFINITY,
            }),
            ..EvolutionConfig::default()
        };
        let out = evolve(&king(), &cfg, &u0).unwrap();
        // With a = 0 each mode solves û' = −i(ω + 1)û + 1, so
        // û(t) = (1 − e^{−i(ω+1)t}) / (i(ω + 1)).
        let g = king();
        let mut exact = Complex64::new(0.0, 0.0);
        for j in 0..32 {
            for k in 0..32 {
                let p = [TWO_PI * j as f64 / 32.0, TWO_PI * k as f64 / 32.0];
                let w = g.symbol_at(&p) + 1.0;
                exact += (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -w * 0.5)) / Complex64::new(0.0, w);
            }
        }
        exact /= 1024.0;
        let c = out.final_field.get(&[16, 16]);
        assert!((c - exact).norm() < 1e-3 * exact.norm(), "{c} vs {exact}");
        assert!((out.series.source_dual_norm(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig::parse(
            "# small run\npreset = king2d\nbox = 32, 32\ndt = 0.02\nt_final = 1\na = 1\nsign = minus\nr_values = 2, 4, inf\nsource_amplitude = 0.1\nsource_until = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.shape, vec![32, 32]);
        assert_eq!(cfg.evolution.sign, NonlinearSign::Minus);
        assert!(cfg.evolution.r_values[2].is_infinite());
        assert_eq!(cfg.evolution.source.unwrap().until, 0.5);
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("dt 0.1").is_err());
    }

    #[test]
    fn binary_round_trip() {
        let u = LatticeField::gaussian(&[8, 4], 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        let v = LatticeField::read_binary(&[8, 4], &buf[..]).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn nan_aborts_with_step() {
        let mut u0 = LatticeField::delta(&[8, 8], 1.0).unwrap();
        u0.values_mut()[3] = Complex64::new(f64::NAN, 0.0);
        let cfg = EvolutionConfig {
            dt: 0.1,
            t_final: 1.0,
            ..EvolutionConfig::default()
        };
        match evolve(&king(), &cfg, &u0) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn l2_norm_is_conserved(a in 0.0f64..2.0, amp in 0.01f64..3.0, width in 0.5f64..4.0, minus in any::<bool>()) {
            let u0 = LatticeField::gaussian(&[16, 16], width, amp).unwrap();
            let cfg = EvolutionConfig {
                dt: 0.05,
                t_final: 2.0,
                a,
                sign: if minus { NonlinearSign::Minus } else { NonlinearSign::Plus },
                stride: 10,
                ..EvolutionConfig::default()
            };
            let out = evolve(&king(), &cfg, &u0).unwrap();
            let l2 = out.series.column(2.0).unwrap();
            prop_assert!(l2.iter().all(|v| (v / amp - 1.0).abs() < 1e-12));
        }

        #[test]
        fn sharp_pairs_are_admissible(num in 0i64..=120) {
            // 1/r ranges over [1/26, 1/2], where the matching q on the boundary is at least 2.
            let inv_r = Rational64::new(1, 26) + Rational64::new(12, 26) * Rational64::new(num, 120);
            let sigma = layered_sigma();
            let inv_q = sigma * (Rational64::new(1, 2) - inv_r);
            let exp = |inv: Rational64| if inv == Rational64::from_integer(0) { Exponent::Infinite } else { Exponent::Finite(inv.recip()) };
            let (q, r) = (exp(inv_q), exp(inv_r));
            let rep = admissibility(q, r, sigma);
            prop_assert!(rep.admissible && rep.on_boundary);
            // Raising r keeps the pair admissible; shrinking q breaks it.
            prop_assert!(admissible(q, Exponent::Infinite, sigma));
            prop_assert!(!admissible(exp(inv_q + Rational64::new(1, 1000)), r, sigma));
        }
    }
}
