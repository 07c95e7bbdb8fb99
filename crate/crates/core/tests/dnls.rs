use lattice_dispersion::dnls::{evolve, strichartz_report, EvolutionConfig, Exponent, LatticeField};
use lattice_dispersion::symbol::HalfGeneratorSet;

fn small_data_run(shape: &[usize], amplitude: f64, t_final: f64) -> lattice_dispersion::dnls::NormSeries {
    let u0 = LatticeField::gaussian(shape, 1.5, amplitude).unwrap();
    let cfg = EvolutionConfig {
        dt: 0.1,
        t_final,
        a: 1.0,
        stride: 10,
        ..EvolutionConfig::default()
    };
    evolve(&HalfGeneratorSet::lkg3d(), &cfg, &u0).unwrap().series
}

#[test]
fn strichartz_ratio_is_stable_as_the_window_doubles() {
    let shape = [64, 64, 64];
    let u0 = LatticeField::delta(&shape, 1.0).unwrap();
    let cfg = EvolutionConfig {
        dt: 0.25,
        t_final: 128.0,
        a: 0.0,
        stride: 1,
        r_values: vec![2.0, 74.0 / 13.0],
        ..EvolutionConfig::default()
    };
    let out = evolve(&HalfGeneratorSet::lkg3d(), &cfg, &u0).unwrap();
    let e = |s: &str| s.parse::<Exponent>().unwrap();
    let rep = strichartz_report(&out.series, 1.0, &[(e("37/13"), e("74/13"))], &[64.0, 128.0]).unwrap();
    let (short, long) = (rep[0].ratio, rep[1].ratio);
    println!("ratio T=64 {short:.6} T=128 {long:.6}");
    assert!(short.is_finite() && long.is_finite());
    assert!(long >= short && long < 2.0 * short);
}

#[test]
fn small_data_disperses() {
    let s = small_data_run(&[32, 32, 32], 1e-2, 100.0);
    let l4 = s.column(4.0).unwrap();
    let at = |t: f64| s.times.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
    println!("l4 t=1 {:.4e} t=100 {:.4e}", l4[at(1.0)], l4[at(100.0)]);
    assert!(l4[at(100.0)] < l4[at(1.0)]);
}

#[test]
fn halving_the_data_halves_the_norms() {
    let full = small_data_run(&[32, 32, 32], 1e-2, 50.0);
    let half = small_data_run(&[32, 32, 32], 5e-3, 50.0);
    let mut worst: f64 = 0.0;
    for (a, b) in full.norms.iter().zip(&half.norms) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((y / x - 0.5).abs() / 0.5);
        }
    }
    println!("worst relative deviation from 1/2: {worst:.3e}");
    assert!(worst < 0.1);
}

/// Doubling the periodic box should leave the recorded norms of the
/// standard small-data run within 5% up to t = 100. The box saturates long
/// before that (see the notes), so this fails for every box we can afford.
#[test]
fn doubling_the_box_leaves_norms_unchanged() {
    let small = small_data_run(&[32, 32, 32], 1e-2, 100.0);
    let large = small_data_run(&[64, 64, 64], 1e-2, 100.0);
    let mut worst = (0.0f64, 0.0, 0.0);
    for (k, t) in small.times.iter().enumerate() {
        for (j, r) in small.r_values.iter().enumerate() {
            let d = (small.norms[k][j] / large.norms[k][j] - 1.0).abs();
            if d > worst.0 {
                worst = (d, *t, *r);
            }
        }
    }
    println!("largest relative change {:.3e} at t = {} for r = {}", worst.0, worst.1, worst.2);
    assert!(worst.0 < 0.05, "largest relative change {:.3e} at t = {} for r = {}", worst.0, worst.1, worst.2);
}
