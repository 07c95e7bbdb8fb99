mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lattice_dispersion::acceptance::{self, AcceptanceContext};
use lattice_dispersion::appendix::{self, DEFAULT_BLOCKING_THRESHOLD};
use lattice_dispersion::decay::{doubling_ladder, fit_decay, geometric_ladder};
use lattice_dispersion::dnls::{self, EvolutionConfig, Exponent, FieldSidecar, RunConfig};
use lattice_dispersion::newton;
use lattice_dispersion::oscillatory::{
    kernel_1d_all, kernel_2d_grid, king_ray_envelope, lattice_point, QuadratureSpec,
};
use lattice_dispersion::singularities::{
    a3_census, classify_singularity, classify_velocity, find_critical_points, trace_degenerate_curve,
};
use lattice_dispersion::symbol::{taylor_shifted_phase, HalfGeneratorSet, TaylorPolynomial, TorusPoint};

use output::{num, Artifacts, Csv};

#[derive(Parser, Debug)]
#[command(name = "lkgd", version, about = "Dispersive decay experiments on Z^d Cayley graphs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Global {
    /// Directory for artifacts; each command writes into its own subdirectory.
    #[arg(long, global = true, env = "LKGD_OUTPUT_DIR", default_value = "lkgd-out")]
    out_dir: PathBuf,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Seed for the random-velocity and random-pair suites.
    #[arg(long, global = true, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GeneratorArgs {
    /// Built-in generator set: lkg3d, king2d, chain1d, lattice-z<d>.
    #[arg(long)]
    preset: Option<String>,
    /// File with one integer half-generator per line.
    #[arg(long, conflicts_with = "preset")]
    generators: Option<PathBuf>,
}

impl GeneratorArgs {
    fn load(&self, default: &str) -> Result<HalfGeneratorSet> {
        Ok(match (&self.preset, &self.generators) {
            (_, Some(path)) => HalfGeneratorSet::from_file(path)?,
            (Some(name), None) => HalfGeneratorSet::preset(name, None)?,
            (None, None) => HalfGeneratorSet::preset(default, None)?,
        })
    }
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Sup-norm decay of the kernel over a ladder of times.
    KernelDecay {
        #[command(flatten)]
        gens: GeneratorArgs,
        /// `a..b` (doubling), `a..b/k` (k per octave) or a comma list.
        #[arg(long, default_value = "32..512")]
        t: String,
    },
    /// Decay along the ray of a fixed velocity (King's grid).
    RegionDecay {
        #[arg(long, value_parser = parse_pair)]
        v: [f64; 2],
        #[arg(long, default_value = "256..4096")]
        t: String,
        /// Times sampled per envelope; 1 gives the plain pointwise fit.
        #[arg(long, default_value_t = acceptance::RAY_ENVELOPE_SAMPLES)]
        envelope: usize,
        #[arg(long, default_value_t = acceptance::RAY_ENVELOPE_SPAN)]
        span: f64,
    },
    /// `(2π)² t^{3/4} |K₂(round(t·v); t)|` over a ladder.
    Sharpness {
        #[arg(long, value_parser = parse_pair, default_value = "5.196152422706632,0")]
        v: [f64; 2],
        #[arg(long, default_value = "1024..4096")]
        t: String,
    },
    /// All solutions of `∇ω = v`, classified.
    CriticalPoints {
        #[command(flatten)]
        gens: GeneratorArgs,
        #[arg(long, value_parser = parse_pair)]
        v: [f64; 2],
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
    /// The region V0..V3 a velocity belongs to, with witnesses.
    VelocityClass {
        #[command(flatten)]
        gens: GeneratorArgs,
        #[arg(long, value_parser = parse_pair)]
        v: [f64; 2],
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
    /// The zero set of the Hessian determinant as polylines.
    DegenerateCurve {
        #[command(flatten)]
        gens: GeneratorArgs,
        #[arg(long, default_value_t = 1024)]
        resolution: usize,
    },
    /// Points of the degenerate curve where the kernel cubic vanishes.
    A3Points {
        #[command(flatten)]
        gens: GeneratorArgs,
        #[arg(long, default_value_t = 1024)]
        resolution: usize,
    },
    /// Newton polyhedron, distance and height of a Taylor polynomial.
    Newton {
        #[command(flatten)]
        gens: GeneratorArgs,
        /// Expand the phase at this torus point.
        #[arg(long, value_parser = parse_pair, conflicts_with = "taylor")]
        point: Option<[f64; 2]>,
        /// Read the polynomial from JSON instead.
        #[arg(long)]
        taylor: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        order: usize,
    },
    /// Solvability of the three polynomial systems on the degenerate curve.
    VerifyAppendix {
        #[arg(long, default_value_t = 1024)]
        resolution: usize,
        #[arg(long, default_value_t = DEFAULT_BLOCKING_THRESHOLD)]
        threshold: f64,
    },
    /// Split-step evolution from a key-value config file.
    Dnls {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Strichartz pairs `q:r`, e.g. `inf:2,37/13:74/13`.
        #[arg(long, default_value = "inf:2,37/13:74/13")]
        pairs: String,
        /// Write the final field as binary plus a JSON sidecar.
        #[arg(long)]
        dump: bool,
    },
    /// Small-data runs over a ladder of sizes.
    Gwp {
        #[arg(long, default_value = "64,64,64")]
        r#box: String,
        #[arg(long, default_value_t = 200.0)]
        t_final: f64,
        #[arg(long, default_value_t = 0.2)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value = "1e-1,1e-2,1e-3")]
        eps: String,
        #[arg(long, default_value_t = 1.5)]
        width: f64,
    },
    /// Every acceptance criterion; exits nonzero if any fails.
    AllAcceptance {
        /// Comma list of criterion ids (default all).
        #[arg(long)]
        only: Option<String>,
    },
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let p = |x: &str| x.parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok([p(parts[0])?, p(parts[1])?])
}

fn parse_ladder(s: &str) -> Result<Vec<f64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (b, per) = match b.split_once('/') {
            Some((b, k)) => (b, Some(k.trim().parse::<usize>()?)),
            None => (b, None),
        };
        let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
        if !(a > 0.0 && b >= a) {
            bail!("ladder `{s}` needs 0 < start <= end");
        }
        return Ok(match per {
            Some(k) => geometric_ladder(a, b, k),
            None => doubling_ladder(a, b),
        });
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("`{x}`: {e}")))
        .collect()
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("`{x}`: {e}")))
        .collect()
}

#[derive(Serialize)]
struct RunConfigRecord<'a> {
    #[serde(flatten)]
    global: &'a Global,
    #[serde(flatten)]
    command: &'a Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether the command's own checks passed.
fn run(cli: &Cli) -> Result<bool> {
    let name = command_name(&cli.command);
    let mut out = Artifacts::create(&cli.global.out_dir, name)?;
    let ok = match &cli.command {
        Command::KernelDecay { gens, t } => kernel_decay(&mut out, &gens.load("lkg3d")?, &parse_ladder(t)?)?,
        Command::RegionDecay { v, t, envelope, span } => region_decay(&mut out, *v, &parse_ladder(t)?, *envelope, *span)?,
        Command::Sharpness { v, t } => sharpness(&mut out, *v, &parse_ladder(t)?)?,
        Command::CriticalPoints { gens, v, grid } => {
            let g = gens.load("king2d")?;
            let search = find_critical_points(&g, *v, *grid)?;
            let classified = search
                .points
                .iter()
                .map(|p| classify_singularity(&g, p))
                .collect::<lattice_dispersion::Result<Vec<_>>>()?;
            let mut csv = Csv::new(&["x", "y", "type", "height"]);
            for c in &classified {
                let p = c.location.coordinates();
                println!("({:.12}, {:.12}) {:?} h = {}", p[0], p[1], c.singularity_type, c.height);
                csv.row(&[num(p[0]), num(p[1]), format!("{:?}", c.singularity_type), c.height.to_string()]);
            }
            out.text("critical_points.csv", &csv.finish())?;
            out.json("critical_points.json", &serde_json::json!({
                "velocity": v,
                "grid_n": grid,
                "points": classified,
                "diagnostics": search.diagnostics,
            }))?;
            true
        }
        Command::VelocityClass { gens, v, grid } => {
            let g = gens.load("king2d")?;
            let class = classify_velocity(&g, *v, *grid)?;
            println!("velocity ({}, {}): {:?}", v[0], v[1], class.class);
            for w in &class.witnesses {
                let p = w.location.coordinates();
                println!("  witness ({:.12}, {:.12}) {:?} h = {}", p[0], p[1], w.singularity_type, w.height);
            }
            out.json("velocity_class.json", &class)?;
            true
        }
        Command::DegenerateCurve { gens, resolution } => {
            let g = gens.load("king2d")?;
            let curve = trace_degenerate_curve(&g, *resolution)?;
            println!("{} polylines, {} points", curve.polylines.len(), curve.points().count());
            out.text("degenerate_curve.csv", &curve.csv(&g))?;
            out.text(
                "degenerate_curve.gp",
                "set datafile separator ','\nset size square\nset xrange [0:2*pi]\nset yrange [0:2*pi]\nset terminal pngcairo size 700,700\nset output 'degenerate_curve.png'\nplot 'degenerate_curve.csv' every ::1 using 1:2 with dots notitle\n",
            )?;
            true
        }
        Command::A3Points { gens, resolution } => {
            let g = gens.load("king2d")?;
            let census = a3_census(&g, *resolution)?;
            for p in &census.fine.points {
                let c = p.location.coordinates();
                println!("({:.12}, {:.12}) {:?} h = {}", c[0], c[1], p.singularity_type, p.height);
            }
            println!(
                "{} points at resolution {}, {} at {}; counts agree: {}",
                census.coarse.points.len(),
                census.coarse.resolution,
                census.fine.points.len(),
                census.fine.resolution,
                census.counts_agree
            );
            out.json("a3_points.json", &census)?;
            census.counts_agree
        }
        Command::Newton { gens, point, taylor, order } => {
            let poly: TaylorPolynomial = match (point, taylor) {
                (_, Some(path)) => serde_json::from_str(
                    &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
                )?,
                (Some(p), None) => taylor_shifted_phase(&gens.load("king2d")?, &TorusPoint::new(p.to_vec()), *order)?,
                (None, None) => bail!("give --point or --taylor"),
            };
            let (polyhedron, report) = newton::analyze(&poly)?;
            println!("distance {} height {:?} face {:?} adapted {:?}", report.distance, report.height, report.face_kind, report.adapted);
            out.json("newton.json", &serde_json::json!({ "polyhedron": polyhedron, "report": report }))?;
            let extent = (report.distance.to_integer() as f64 + 3.0).max(6.0);
            out.text("newton.svg", &polyhedron.to_svg(extent))?;
            out.text("newton.tikz", &polyhedron.to_tikz(extent))?;
            true
        }
        Command::VerifyAppendix { resolution, threshold } => {
            let report = appendix::verify_appendix(*resolution, *threshold)?;
            let table = report.table();
            print!("{table}");
            out.text("verdicts.txt", &table)?;
            out.json("verdicts.json", &report)?;
            true
        }
        Command::Dnls { config, pairs, dump } => dnls_run(&mut out, config.as_deref(), pairs, *dump)?,
        Command::Gwp { r#box, t_final, dt, a, eps, width } => {
            let shape: Vec<usize> = r#box
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|e| anyhow!("`{s}`: {e}")))
                .collect::<Result<_>>()?;
            let gens = match shape.len() {
                3 => HalfGeneratorSet::lkg3d(),
                2 => HalfGeneratorSet::king2d(),
                1 => HalfGeneratorSet::chain1d(),
                d => bail!("no layered preset in dimension {d}"),
            };
            let cfg = EvolutionConfig {
                dt: *dt,
                t_final: *t_final,
                a: *a,
                stride: 1,
                ..EvolutionConfig::default()
            };
            let report = dnls::gwp_experiment(&gens, &shape, *width, &parse_list(eps)?, &cfg)?;
            let mut ok = true;
            for (i, r) in report.runs.iter().enumerate() {
                println!(
                    "eps {:e}: {} linf slope {} (uniform {})",
                    r.epsilon,
                    if r.completed { "completed" } else { "aborted" },
                    r.linf_slope.map_or("n/a".into(), |s| format!("{s:.4}")),
                    r.linf_slope_uniform.map_or("n/a".into(), |s| format!("{s:.4}"))
                );
                ok &= r.completed && r.linf_slope.is_some_and(|s| s < 0.0);
                out.text(&format!("norms_{i}.csv"), &r.series.csv())?;
            }
            out.json("gwp.json", &report)?;
            ok
        }
        Command::AllAcceptance { only } => {
            let ids: Vec<u8> = match only {
                Some(s) => s
                    .split(',')
                    .map(|x| x.trim().parse::<u8>().map_err(|e| anyhow!("`{x}`: {e}")))
                    .collect::<Result<_>>()?,
                None => acceptance::CRITERIA.collect(),
            };
            let ctx = AcceptanceContext::new(cli.global.seed);
            let mut outcomes = Vec::new();
            for id in ids {
                let o = acceptance::run_criterion(&ctx, id)?;
                println!("{o}");
                outcomes.push(o);
            }
            let lines: String = outcomes.iter().map(|o| format!("{o}\n")).collect();
            out.text("acceptance.txt", &lines)?;
            out.json("acceptance.json", &outcomes)?;
            outcomes.iter().all(|o| o.passed)
        }
    };
    let record = RunConfigRecord {
        global: &cli.global,
        command: &cli.command,
    };
    let dir = out.finish(name, &record)?;
    eprintln!("artifacts in {}", dir.display());
    Ok(ok)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::KernelDecay { .. } => "kernel-decay",
        Command::RegionDecay { .. } => "region-decay",
        Command::Sharpness { .. } => "sharpness",
        Command::CriticalPoints { .. } => "critical-points",
        Command::VelocityClass { .. } => "velocity-class",
        Command::DegenerateCurve { .. } => "degenerate-curve",
        Command::A3Points { .. } => "a3-points",
        Command::Newton { .. } => "newton",
        Command::VerifyAppendix { .. } => "verify-appendix",
        Command::Dnls { .. } => "dnls",
        Command::Gwp { .. } => "gwp",
        Command::AllAcceptance { .. } => "all-acceptance",
    }
}

fn write_fit(out: &mut Artifacts, rows: &[(f64, f64, usize, &str)], name: &str) -> Result<()> {
    let mut csv = Csv::new(&["t", "value", "N", "method"]);
    for &(t, v, n, m) in rows {
        csv.row(&[num(t), num(v), n.to_string(), m.to_string()]);
    }
    out.text(&format!("{name}.csv"), &csv.finish())?;
    out.loglog_plot(&format!("{name}.gp"), &format!("{name}.csv"), 1, 2, name)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let fit = fit_decay(&pts)?;
    println!("{name}: exponent {:.6} +- {:.6}", fit.exponent, fit.stderr);
    out.json(&format!("{name}_fit.json"), &fit)?;
    Ok(())
}

fn kernel_decay(out: &mut Artifacts, gens: &HalfGeneratorSet, ladder: &[f64]) -> Result<bool> {
    let chain = QuadratureSpec::chain();
    let plane = QuadratureSpec::plane_fft();
    let mut rows = Vec::new();
    match gens.dimension() {
        1 => {
            if *gens != HalfGeneratorSet::chain1d() {
                bail!("the one-dimensional kernel is implemented for the chain only");
            }
            for &t in ladder {
                let k = kernel_1d_all(t, &chain);
                rows.push((t, k.sup_abs(), k.samples, chain.method.name()));
            }
        }
        2 => {
            for &t in ladder {
                let k = kernel_2d_grid(gens, t, &plane)?;
                rows.push((t, k.sup_abs(), k.samples, plane.method.name()));
            }
        }
        3 => {
            if *gens != HalfGeneratorSet::lkg3d() {
                bail!("the three-dimensional kernel uses the layered product and needs --preset lkg3d");
            }
            let king = HalfGeneratorSet::king2d();
            for &t in ladder {
                let k = kernel_2d_grid(&king, t, &plane)?;
                let c = kernel_1d_all(t, &chain);
                rows.push((t, k.sup_abs() * c.sup_abs(), k.samples, "layered-product"));
            }
        }
        d => bail!("no kernel evaluator for dimension {d}"),
    }
    write_fit(out, &rows, "kernel_decay")?;
    Ok(true)
}

fn region_decay(out: &mut Artifacts, v: [f64; 2], ladder: &[f64], envelope: usize, span: f64) -> Result<bool> {
    let spec = QuadratureSpec::plane_bessel();
    let mut rows = Vec::new();
    for &t in ladder {
        let m = king_ray_envelope(v, t, envelope, span, &spec);
        let n = lattice_point(v, t);
        let samples = spec.grid.samples_reaching(t, n.0.unsigned_abs().max(n.1.unsigned_abs()));
        rows.push((t, m, samples, spec.method.name()));
    }
    write_fit(out, &rows, "region_decay")?;
    Ok(true)
}

fn sharpness(out: &mut Artifacts, v: [f64; 2], ladder: &[f64]) -> Result<bool> {
    let spec = QuadratureSpec::plane_bessel();
    let vals = acceptance::plateau_values(v, ladder);
    let mut csv = Csv::new(&["t", "value", "N", "method"]);
    for (&t, &p) in ladder.iter().zip(&vals) {
        let n = lattice_point(v, t);
        csv.row(&[
            num(t),
            num(p),
            spec.grid.samples_reaching(t, n.0.unsigned_abs().max(n.1.unsigned_abs())).to_string(),
            spec.method.name().to_string(),
        ]);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let spread = (vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min)) / mean;
    println!("plateau mean {mean:.6}, relative spread {:.2}%", 100.0 * spread);
    out.text("sharpness.csv", &csv.finish())?;
    out.json("sharpness.json", &serde_json::json!({ "velocity": v, "values": vals, "mean": mean, "spread": spread }))?;
    Ok(spread < 0.15 && mean > 0.0)
}

fn dnls_run(out: &mut Artifacts, config: Option<&std::path::Path>, pairs: &str, dump: bool) -> Result<bool> {
    let cfg = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let gens = cfg.generators()?;
    let u0 = cfg.initial_field()?;
    let mut evo = cfg.evolution.clone();
    let pairs: Vec<(Exponent, Exponent)> = pairs
        .split(',')
        .map(|p| {
            let (q, r) = p.split_once(':').ok_or_else(|| anyhow!("pair `{p}` must be `q:r`"))?;
            Ok((q.parse::<Exponent>()?, r.parse::<Exponent>()?))
        })
        .collect::<Result<_>>()?;
    for (_, r) in &pairs {
        let rv = r.to_f64();
        if !evo.r_values.iter().any(|&x| x == rv) {
            evo.r_values.push(rv);
        }
    }
    let res = dnls::evolve(&gens, &evo, &u0)?;
    out.text("norms.csv", &res.series.csv())?;
    out.loglog_plot("norms.gp", "norms.csv", 1, 4, "sup norm")?;
    let windows = [evo.t_final / 2.0, evo.t_final];
    let report = if gens.dimension() == 3 {
        Some(dnls::strichartz_report(&res.series, u0.norm(2.0), &pairs, &windows)?)
    } else {
        None
    };
    if let Some(r) = &report {
        for e in r {
            println!("(q, r) = ({}, {}) T = {}: ratio {:.6}", e.q, e.r, e.window, e.ratio);
        }
    }
    out.json("strichartz.json", &report)?;
    if dump {
        let f = std::fs::File::create(out.path("final_field.bin"))?;
        res.final_field.write_binary(std::io::BufWriter::new(f))?;
        out.note("final_field.bin");
        out.json(
            "final_field.json",
            &FieldSidecar {
                shape: cfg.shape.clone(),
                dt: evo.dt,
                t_final: evo.t_final,
                a: evo.a,
                sign: evo.sign,
            },
        )?;
    }
    println!("{} steps, final l2 {:.15}", res.steps, res.final_field.norm(2.0));
    Ok(true)
}
