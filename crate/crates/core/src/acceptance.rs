//! The acceptance suite: one measurement per criterion, each compared against
//! its stated tolerance.
//!
//! The oracles here are written independently of the routes they check: the
//! chain kernel is compared with Bessel values from [`crate::bessel`], and the
//! critical-point search with an exhaustive grid scan that shares no code
//! with the Newton pipeline.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::appendix::{self, Verdict, DEFAULT_BLOCKING_THRESHOLD, REFERENCE_WITNESS, WITNESS_RESIDUAL};
use crate::bessel::bessel_j;
use crate::decay::{doubling_ladder, fit_decay, DecayFit};
use crate::dnls::{self, admissibility, EvolutionConfig, Exponent, LatticeField};
use crate::oscillatory::{
    default_half_width, eval_oscillatory_integral, kernel_1d, kernel_1d_all, kernel_1d_sup, kernel_2d_bessel, kernel_2d_grid,
    kernel_2d_point, king_ray_envelope, king_window_max, lattice_point, QuadratureSpec,
};
use crate::singularities::{classify_singularity, find_critical_points, CaseTag, SingularityType, NEWTON_RESIDUAL};
use crate::symbol::{torus_distance, HalfGeneratorSet, TorusPoint, TWO_PI};
use crate::Result;

pub const CRITERIA: std::ops::RangeInclusive<u8> = 1..=11;

/// Seed for the random-velocity and random-pair suites.
pub const DEFAULT_SEED: u64 = 20240613;

/// Grid resolution for Newton seeding in the critical-point comparison.
pub const SEARCH_GRID: usize = 256;
/// Side of the exhaustive oracle grid.
pub const ORACLE_GRID: usize = 2048;

/// Envelope sampling for ray fits: `t' = t(1 + k·span/samples)`.
pub const RAY_ENVELOPE_SAMPLES: usize = 16;
pub const RAY_ENVELOPE_SPAN: f64 = 0.25;

/// One representative per symmetry class of A₃ velocities. The kernel is
/// invariant under `n ↦ −n` and under swapping the two coordinates, so
/// the other six velocities give identical values.
pub fn a3_velocities() -> [[f64; 2]; 2] {
    let r3 = 3f64.sqrt();
    [[3.0 * r3, 0.0], [r3, 0.0]]
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Measured values, compared with `tolerance`.
    pub measured: String,
    pub tolerance: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} [{}] ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.measured,
            self.tolerance,
            self.seconds
        )
    }
}

/// Shared state so the plane grids are computed once per run.
pub struct AcceptanceContext {
    pub seed: u64,
    plane_sups: OnceLock<Vec<(f64, f64)>>,
}

impl AcceptanceContext {
    pub fn new(seed: u64) -> Self {
        AcceptanceContext {
            seed,
            plane_sups: OnceLock::new(),
        }
    }

    fn plane_sups(&self) -> Result<&Vec<(f64, f64)>> {
        if let Some(v) = self.plane_sups.get() {
            return Ok(v);
        }
        let king = HalfGeneratorSet::king2d();
        let spec = QuadratureSpec::plane_fft();
        let mut out = Vec::new();
        for t in doubling_ladder(32.0, 512.0) {
            out.push((t, kernel_2d_grid(&king, t, &spec)?.sup_abs()));
        }
        Ok(self.plane_sups.get_or_init(|| out))
    }
}

impl Default for AcceptanceContext {
    fn default() -> Self {
        Self::new(DEFAULT_SEED)
    }
}

pub fn run_criterion(ctx: &AcceptanceContext, id: u8) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let (title, passed, measured, tolerance) = match id {
        1 => chain_bessel()?,
        2 => chain_rate()?,
        3 => plane_rate(ctx)?,
        4 => layered_rate(ctx)?,
        5 => region_rates()?,
        6 => sharpness_plateau()?,
        7 => singularity_pipeline()?,
        8 => critical_point_oracle(ctx.seed)?,
        9 => appendix_certificate()?,
        10 => dnls_checks()?,
        11 => cross_validation(ctx.seed)?,
        other => {
            return Err(crate::Error::InvalidInput(format!(
                "no acceptance criterion {other}; valid ids are 1..=11"
            )))
        }
    };
    Ok(CriterionOutcome {
        id,
        title,
        passed,
        measured,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(ctx: &AcceptanceContext) -> Result<Vec<CriterionOutcome>> {
    CRITERIA.map(|id| run_criterion(ctx, id)).collect()
}

type Measured = (&'static str, bool, String, String);

fn fit(points: &[(f64, f64)]) -> Result<DecayFit> {
    fit_decay(points)
}

// ---------------------------------------------------------------------------

fn chain_bessel() -> Result<Measured> {
    let spec = QuadratureSpec::chain();
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for t in [0.25, 1.0, 3.7, 10.0, 31.4, 64.0, 99.9, 100.0] {
        let all = kernel_1d_all(t, &spec);
        let rot = Complex64::from_polar(1.0, -2.0 * t);
        for n in -300i64..=300 {
            // The whole-line transform is periodic in n; beyond half its
            // period only the per-site route is meaningful.
            let k = if 2 * n.unsigned_abs() < all.samples as u64 { all.get(n) } else { kernel_1d(n, t, &spec) };
            let ipow = Complex64::new(0.0, 1.0).powi(n.rem_euclid(4) as i32);
            let oracle = rot * ipow * bessel_j(n, 2.0 * t);
            worst = worst.max((k - oracle).norm());
            count += 1;
        }
    }
    Ok((
        "chain kernel against Bessel values",
        worst < 1e-10,
        format!("max |K1 - e^(-2it) i^n J_n(2t)| = {worst:.2e} over {count} (n, t) pairs"),
        "< 1e-10".into(),
    ))
}

fn chain_rate() -> Result<Measured> {
    let spec = QuadratureSpec::chain();
    let pts: Vec<(f64, f64)> = doubling_ladder(64.0, 4096.0)
        .into_iter()
        .map(|t| (t, kernel_1d_sup(t, &spec)))
        .collect();
    let f = fit(&pts)?;
    Ok((
        "chain sup rate",
        f.within(-1.0 / 3.0, 0.03),
        format!("exponent {:.4} over t = 64..4096", f.exponent),
        "-1/3 +- 0.03".into(),
    ))
}

fn plane_rate(ctx: &AcceptanceContext) -> Result<Measured> {
    let full = fit(ctx.plane_sups()?)?;
    let spec = QuadratureSpec::plane_bessel();
    let ladder = doubling_ladder(256.0, 4096.0);
    let pts: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&t| {
            let m = a3_velocities()
                .iter()
                .map(|&v| king_window_max(v, t, default_half_width(t), &spec).magnitude)
                .fold(0.0, f64::max);
            (t, m)
        })
        .collect();
    let cont = fit(&pts)?;
    Ok((
        "plane sup rate",
        full.within(-0.75, 0.05) && cont.within(-0.75, 0.03),
        format!(
            "full grid {:.4} over t = 32..512; A3 continuation {:.4} over t = 256..4096",
            full.exponent, cont.exponent
        ),
        "-3/4 +- 0.05 and -3/4 +- 0.03".into(),
    ))
}

fn layered_rate(ctx: &AcceptanceContext) -> Result<Measured> {
    let chain = QuadratureSpec::chain();
    let pts: Vec<(f64, f64)> = ctx
        .plane_sups()?
        .iter()
        .map(|&(t, s)| (t, s * kernel_1d_sup(t, &chain)))
        .collect();
    let f = fit(&pts)?;
    Ok((
        "layered 3D sup rate",
        f.within(-13.0 / 12.0, 0.06),
        format!("exponent {:.4} over t = 32..512", f.exponent),
        "-13/12 +- 0.06".into(),
    ))
}

/// Envelope fit along the ray of velocity `v`, plus the plain pointwise fit.
pub fn ray_fits(v: [f64; 2], ladder: &[f64]) -> Result<(DecayFit, DecayFit)> {
    let spec = QuadratureSpec::plane_bessel();
    let env: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&t| (t, king_ray_envelope(v, t, RAY_ENVELOPE_SAMPLES, RAY_ENVELOPE_SPAN, &spec)))
        .collect();
    let plain: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&t| (t, kernel_2d_bessel(lattice_point(v, t), t, &spec).norm()))
        .collect();
    Ok((fit(&env)?, fit(&plain)?))
}

fn region_rates() -> Result<Measured> {
    let ladder = doubling_ladder(256.0, 4096.0);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut check = |label: &str, v: [f64; 2], target: f64, tol: f64| -> Result<()> {
        let (env, plain) = ray_fits(v, &ladder)?;
        let pass = env.within(target, tol);
        ok &= pass;
        parts.push(format!(
            "{label} ({:.4}, {:.4}): {:.4} (plain {:.4}){}",
            v[0],
            v[1],
            env.exponent,
            plain.exponent,
            if pass { "" } else { " out of range" }
        ));
        Ok(())
    };
    check("V1", [0.0, 0.0], -1.0, 0.05)?;
    check("V2", [0.0, 6.0], -5.0 / 6.0, 0.05)?;
    for v in a3_velocities() {
        check("V3", v, -0.75, 0.03)?;
    }
    let t = 200.0;
    let king = HalfGeneratorSet::king2d();
    let v0 = eval_oscillatory_integral(&king, [100.0, 0.0], t, &QuadratureSpec::gauss_panels())?.norm();
    // Same quantity at the lattice point n = t·v through the Bessel route.
    let v0_lattice = TWO_PI * TWO_PI * kernel_2d_bessel(lattice_point([100.0, 0.0], t), t, &QuadratureSpec::plane_bessel()).norm();
    let v0_pass = v0 < 1e-8;
    ok &= v0_pass;
    parts.push(format!("V0 (100, 0): |I| = {v0:.2e} at t = 200 (lattice route {v0_lattice:.2e})"));
    Ok((
        "region rates along rays",
        ok,
        parts.join("; "),
        "V1 -1 +- 0.05, V2 -5/6 +- 0.05, V3 -3/4 +- 0.03 (envelope fits, t = 256..4096), V0 |I| < 1e-8".into(),
    ))
}

/// `(2π)² t^{3/4} |K₂(round(t·v); t)|` on a ladder.
pub fn plateau_values(v: [f64; 2], ladder: &[f64]) -> Vec<f64> {
    let spec = QuadratureSpec::plane_bessel();
    ladder
        .iter()
        .map(|&t| TWO_PI * TWO_PI * t.powf(0.75) * kernel_2d_bessel(lattice_point(v, t), t, &spec).norm())
        .collect()
}

fn sharpness_plateau() -> Result<Measured> {
    let ladder = doubling_ladder(1024.0, 4096.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for v in a3_velocities() {
        let vals = plateau_values(v, &ladder);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let spread = (vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min)) / mean;
        let pass = spread < 0.15 && mean > 0.0;
        ok &= pass;
        parts.push(format!(
            "({:.4}, {:.4}): mean {:.4}, spread {:.1}%",
            v[0],
            v[1],
            mean,
            100.0 * spread
        ));
    }
    Ok((
        "sharpness plateau at A3 velocities",
        ok,
        parts.join("; "),
        "spread < 15%, mean > 0, t = 1024, 2048, 4096".into(),
    ))
}

fn singularity_pipeline() -> Result<Measured> {
    let king = HalfGeneratorSet::king2d();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut expect = |label: String, p: [f64; 2], tag: Option<CaseTag>, ty: SingularityType, h: Rational64| -> Result<()> {
        let cp = classify_singularity(&king, &TorusPoint::new(vec![p[0], p[1]]))?;
        let pass = tag.map_or(true, |t| cp.case_tag == t)
            && cp.singularity_type == ty
            && cp.height == h
            && cp.newton_agrees();
        ok &= pass;
        let mut line = format!(
            "{label}: {:?}/{:?} h = {} newton {}",
            cp.case_tag,
            cp.singularity_type,
            cp.height,
            cp.newton_distance.map_or("none".into(), |d| d.to_string())
        );
        if !pass {
            line += &format!(" (expected {ty:?} h = {h})");
        }
        parts.push(line);
        Ok(())
    };
    expect("(0, 0)".into(), [0.0, 0.0], None, SingularityType::A1, Rational64::from_integer(1))?;
    expect("(0, pi/2)".into(), [0.0, FRAC_PI_2], Some(CaseTag::CaseI), SingularityType::A2, Rational64::new(6, 5))?;
    let witnesses = appendix::system1_witnesses(1024)?;
    for (i, w) in witnesses.iter().enumerate() {
        expect(
            format!("System-1 witness {} ({:.6}, {:.6})", i + 1, w.x, w.y),
            [w.x, w.y],
            Some(CaseTag::CaseIIbA3),
            SingularityType::A3,
            Rational64::new(4, 3),
        )?;
    }
    Ok((
        "singularity classification",
        ok,
        parts.join("; "),
        "types, case tags and rational heights exact; Newton distance equal".into(),
    ))
}

// ---------------------------------------------------------------------------
// Exhaustive critical-point oracle

fn oracle_field(gens: &[(f64, f64)], v: [f64; 2], x: f64, y: f64) -> [f64; 2] {
    let mut f = [-v[0], -v[1]];
    for &(h1, h2) in gens {
        let s = 2.0 * (h1 * x + h2 * y).sin();
        f[0] += h1 * s;
        f[1] += h2 * s;
    }
    f
}

/// Minimum of `g` near `centre` by repeated exhaustive scans of square
/// windows. The window shrinks only once the best sample is interior, so
/// the scan can follow a long shallow valley.
fn zoom_scan(g: &impl Fn(f64, f64) -> f64, centre: [f64; 2], half_width: f64) -> [f64; 2] {
    const SIDE: usize = 41;
    let mut c = centre;
    let mut w = half_width;
    for _ in 0..400 {
        let step = 2.0 * w / (SIDE - 1) as f64;
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..SIDE {
            for b in 0..SIDE {
                let v = g(c[0] - w + a as f64 * step, c[1] - w + b as f64 * step);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        c = [c[0] - w + best.1 as f64 * step, c[1] - w + best.2 as f64 * step];
        let edge = |k: usize| k == 0 || k == SIDE - 1;
        if !edge(best.1) && !edge(best.2) {
            w = 2.0 * step;
            if w < 1e-13 {
                break;
            }
        }
    }
    [c[0].rem_euclid(TWO_PI), c[1].rem_euclid(TWO_PI)]
}

/// Solutions of `∇ω = v` located by scanning an `n × n` grid for local
/// minima of `‖∇ω − v‖²`, each polished by zoomed exhaustive scans.
pub fn brute_force_critical_points(gens: &HalfGeneratorSet, v: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let hs: Vec<(f64, f64)> = gens
        .half_generators()
        .iter()
        .map(|h| (h[0] as f64, h[1] as f64))
        .collect();
    let h = TWO_PI / n as f64;
    let g2 = |x: f64, y: f64| {
        let f = oracle_field(&hs, v, x, y);
        f[0] * f[0] + f[1] * f[1]
    };
    let grid: Vec<f64> = (0..n * n).map(|k| g2((k / n) as f64 * h, (k % n) as f64 * h)).collect();
    let at = |i: usize, j: usize| grid[(i % n) * n + (j % n)];
    // ‖DF‖ ≤ Σ 2|h|², so a root's nearest node has ‖F‖ below this.
    let lipschitz: f64 = hs.iter().map(|(a, b)| 2.0 * (a * a + b * b)).sum();
    let gate = (lipschitz * h).powi(2);
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let c = at(i, j);
            if c > gate {
                continue;
            }
            let mut is_min = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let o = at(
                        (i as i64 + di).rem_euclid(n as i64) as usize,
                        (j as i64 + dj).rem_euclid(n as i64) as usize,
                    );
                    // Ties go to the lexicographically first node.
                    if o < c || (o == c && (di, dj) < (0, 0)) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if !is_min {
                continue;
            }
            let p = zoom_scan(&g2, [i as f64 * h, j as f64 * h], 2.0 * h);
            let r = g2(p[0], p[1]).sqrt();
            // A spurious minimum keeps a residual well above roundoff.
            if r < 1e-8 && out.iter().all(|q| torus_distance(q, &p) > 1e-6) {
                out.push(p);
            }
        }
    }
    out
}

/// Whether two point sets match one-to-one within `tol` on the torus.
pub fn bijective_match(a: &[[f64; 2]], b: &[[f64; 2]], tol: f64) -> (bool, f64) {
    if a.len() != b.len() {
        return (false, f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    let mut used = vec![false; b.len()];
    for p in a {
        let best = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, q)| (k, torus_distance(p, q)))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match best {
            Some((k, d)) if d < tol => {
                used[k] = true;
                worst = worst.max(d);
            }
            Some((_, d)) => return (false, d),
            None => return (false, f64::INFINITY),
        }
    }
    (true, worst)
}

pub fn random_velocities(seed: u64, count: usize, radius: f64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = radius * rng.gen::<f64>().sqrt();
            let a = TWO_PI * rng.gen::<f64>();
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

fn critical_point_oracle(seed: u64) -> Result<Measured> {
    let king = HalfGeneratorSet::king2d();
    let mut mismatches = Vec::new();
    let mut worst_distance: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut total = 0usize;
    for v in random_velocities(seed, 100, 7.0) {
        let search = find_critical_points(&king, v, SEARCH_GRID)?;
        let newton: Vec<[f64; 2]> = search
            .points
            .iter()
            .map(|p| [p.coordinates()[0], p.coordinates()[1]])
            .collect();
        for p in &newton {
            let mut g = [0.0; 2];
            king.gradient_at(p, &mut g);
            worst_residual = worst_residual.max((g[0] - v[0]).hypot(g[1] - v[1]));
        }
        let oracle = brute_force_critical_points(&king, v, ORACLE_GRID);
        let (ok, d) = bijective_match(&newton, &oracle, 1e-3);
        total += newton.len();
        if ok {
            worst_distance = worst_distance.max(d);
        } else {
            mismatches.push(format!("({:.4}, {:.4}): {} vs {}", v[0], v[1], newton.len(), oracle.len()));
        }
    }
    let pass = mismatches.is_empty() && worst_residual < NEWTON_RESIDUAL;
    let mut measured = format!(
        "{total} points over 100 velocities; max match distance {worst_distance:.2e}; max residual {worst_residual:.2e}"
    );
    if !mismatches.is_empty() {
        measured += &format!("; mismatched: {}", mismatches.join(", "));
    }
    Ok((
        "critical points against exhaustive scan",
        pass,
        measured,
        "bijective within 1e-3, residual < 1e-12".into(),
    ))
}

fn appendix_certificate() -> Result<Measured> {
    let res = 1024;
    let s1 = appendix::verify_system1(res)?;
    let best = s1
        .witnesses
        .iter()
        .min_by(|a, b| a.cs_distance(REFERENCE_WITNESS).total_cmp(&b.cs_distance(REFERENCE_WITNESS)));
    let dist = best.map_or(f64::INFINITY, |w| w.cs_distance(REFERENCE_WITNESS));
    let max_res = s1.witnesses.iter().map(|w| w.residual()).fold(0.0, f64::max);
    let s1_ok = s1.verdict == Verdict::Solvable && max_res < WITNESS_RESIDUAL && dist < 1e-2;
    let mut ok = s1_ok;
    let mut parts = vec![format!(
        "System 1 {:?}, max residual {max_res:.1e}, reference distance {dist:.2e}",
        s1.verdict
    )];
    for (id, f) in [
        (2u8, appendix::verify_system2 as fn(usize, f64) -> Result<appendix::GammaSystemReport>),
        (3, appendix::verify_system3),
    ] {
        let a = f(res, DEFAULT_BLOCKING_THRESHOLD)?;
        let b = f(2 * res, DEFAULT_BLOCKING_THRESHOLD)?;
        let (ma, mb) = (a.min_blocking_value.unwrap_or(0.0), b.min_blocking_value.unwrap_or(0.0));
        let drift = (ma - mb).abs() / ma.max(mb);
        let pass = a.verdict == Verdict::NoSolutionFound && ma > 0.0 && mb > 0.0 && drift < 0.01;
        ok &= pass;
        parts.push(format!("System {id} {:?}, minimum {ma:.6} -> {mb:.6} ({:.3}% drift)", a.verdict, 100.0 * drift));
    }
    Ok((
        "appendix certificate",
        ok,
        parts.join("; "),
        "System 1 residual < 1e-10 and within 1e-2 of reference; blocking minima > 0, drift < 1%".into(),
    ))
}

// ---------------------------------------------------------------------------

fn dnls_checks() -> Result<Measured> {
    let lkg = HalfGeneratorSet::lkg3d();
    let mut parts = Vec::new();

    let shape = [32, 32, 32];
    let u0 = LatticeField::gaussian(&shape, 1.5, 2.0)?;
    let cfg = EvolutionConfig {
        dt: 0.01,
        t_final: 10.0,
        a: 1.0,
        stride: 100,
        r_values: vec![2.0],
        ..EvolutionConfig::default()
    };
    let out = dnls::evolve(&lkg, &cfg, &u0)?;
    let l2 = out.series.column(2.0).unwrap_or_default();
    let drift = l2.iter().map(|v| (v / l2[0] - 1.0).abs()).fold(0.0, f64::max);
    let drift_ok = drift < 1e-12;
    parts.push(format!("l2 drift {drift:.1e} over 1000 steps"));

    let run = |dt: f64| -> Result<LatticeField> {
        let c = EvolutionConfig {
            dt,
            t_final: 1.0,
            a: 1.0,
            stride: 1000,
            r_values: vec![2.0],
            ..EvolutionConfig::default()
        };
        Ok(dnls::evolve(&lkg, &c, &u0)?.final_field)
    };
    let (a, b, c) = (run(0.04)?, run(0.02)?, run(0.01)?);
    let order = (a.distance(&b) / b.distance(&c)).log2();
    let order_ok = (1.8..=2.2).contains(&order);
    parts.push(format!("splitting order {order:.3}"));

    let gwp_cfg = EvolutionConfig {
        dt: 0.2,
        t_final: 200.0,
        a: 1.0,
        stride: 1,
        r_values: vec![2.0, 4.0, f64::INFINITY],
        ..EvolutionConfig::default()
    };
    let rep = dnls::gwp_experiment(&lkg, &[64, 64, 64], 1.5, &[1e-1, 1e-2, 1e-3], &gwp_cfg)?;
    let mut gwp_ok = true;
    for r in &rep.runs {
        let pass = r.completed && r.linf_slope.is_some_and(|s| s < 0.0);
        gwp_ok &= pass;
        parts.push(format!(
            "eps {:.0e}: {} slope {} (uniform {})",
            r.epsilon,
            if r.completed { "completed" } else { "aborted" },
            r.linf_slope.map_or("n/a".into(), |s| format!("{s:.3}")),
            r.linf_slope_uniform.map_or("n/a".into(), |s| format!("{s:.3}"))
        ));
    }

    let e = |s: &str| s.parse::<Exponent>();
    let adm = admissibility(e("37/13")?, e("74/13")?, dnls::layered_sigma());
    let adm_ok = adm.admissible && adm.on_boundary;
    parts.push(format!(
        "(37/13, 74/13, 13/12): admissible {}, {} = {}",
        adm.admissible, adm.lhs, adm.rhs
    ));

    Ok((
        "DNLS solver",
        drift_ok && order_ok && gwp_ok && adm_ok,
        parts.join("; "),
        "drift < 1e-12, order in [1.8, 2.2], runs reach t = 200 with negative slope, boundary equality".into(),
    ))
}

fn cross_validation(seed: u64) -> Result<Measured> {
    let king = HalfGeneratorSet::king2d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let point = QuadratureSpec::plane_point();
    let panels = QuadratureSpec::gauss_panels();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t: f64 = rng.gen_range(1.0..=64.0);
        let reach = (6.0 * t) as i64;
        let n = (rng.gen_range(-reach..=reach), rng.gen_range(-reach..=reach));
        let v = [n.0 as f64 / t, n.1 as f64 / t];
        let i = eval_oscillatory_integral(&king, v, t, &panels)?;
        let k = kernel_2d_point(&king, n, t, &point)? * (TWO_PI * TWO_PI);
        worst = worst.max((i - k).norm());
    }
    Ok((
        "oscillatory integral against lattice kernel",
        worst < 1e-8,
        format!("max |I(n/t; t) - (2pi)^2 K2(n; t)| = {worst:.2e} over 20 pairs"),
        "< 1e-8".into(),
    ))
}
