//! End-to-end acceptance criteria. Runs every criterion, prints one line each and
//! exits non-zero if any failed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simplex_obs::discretization::pullback_equivalence_check;
use simplex_obs::field::{ScalarField, ZeroField};
use simplex_obs::geometry::factorial;
use simplex_obs::observability::{oracle_report, rellich_check, remainder_sweep, FemProblem, FemSettings};
use simplex_obs::opalgebra::{random_spd, verify_commutator_lemma};
use simplex_obs::oracles::{order_simplex, EigenMode, StandingWave};
use simplex_obs::solver::MassMode;
use simplex_obs::Simplex;
use simplex_obs_cli::commands::verify_theorem;
use simplex_obs_cli::RunConfig;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_simplex(dim: usize, rng: &mut ChaCha8Rng) -> Simplex {
    loop {
        let pts: Vec<Vec<f64>> = (0..=dim).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        if let Ok(s) = Simplex::new(&pts) {
            if s.volume() > 0.02 * s.max_edge().powi(dim as i32) / factorial(dim) {
                return s;
            }
        }
    }
}

/// Volume from pairwise distances alone.
fn cayley_menger_volume(s: &Simplex) -> f64 {
    let n = s.dim();
    let m = n + 2;
    let mut cm = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            cm[(i, j)] = match (i, j) {
                (0, 0) => 0.0,
                (0, _) | (_, 0) => 1.0,
                _ => (s.vertex(i - 1) - s.vertex(j - 1)).norm_squared(),
            };
        }
    }
    let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
    let v2 = sign * cm.determinant() / (2f64.powi(n as i32) * factorial(n).powi(2));
    v2.sqrt()
}

fn commutator_lemma() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut residual_terms = 0;
    for i in 0..100 {
        let k = random_spd(2 + i % 4, &mut rng);
        residual_terms += verify_commutator_lemma(&k).residual.len();
    }
    let elapsed = start.elapsed();
    outcome(
        residual_terms == 0 && elapsed < Duration::from_secs(5),
        format!("100 matrices, dims 2-5: {residual_terms} residual terms in {elapsed:.2?} (limit 5 s)"),
    )
}

fn volume_and_determinant() -> Outcome {
    let worst_standard = (2..=6)
        .map(|n| (Simplex::standard(n).volume() - 1.0 / factorial(n)).abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_det: f64 = 0.0;
    for i in 0..50 {
        let n = 2 + i % 5;
        let s = random_simplex(n, &mut rng);
        let rel = (s.det().abs() - factorial(n) * cayley_menger_volume(&s)).abs() / s.det().abs();
        worst_det = worst_det.max(rel);
    }
    let mut worst_z: f64 = 0.0;
    for (k, s) in [Simplex::standard(2), random_simplex(3, &mut rng)].iter().enumerate() {
        let mc = s.monte_carlo_volume(1_000_000, 100 + k as u64).unwrap();
        worst_z = worst_z.max((mc.estimate - s.volume()).abs() / mc.std_error);
    }
    outcome(
        worst_standard <= 1e-14 && worst_det <= 1e-12 && worst_z <= 4.0,
        format!(
            "standard n=2..6 err {worst_standard:.1e} (<= 1e-14); |det A| vs n!·Vol rel {worst_det:.1e} (<= 1e-12); \
             Monte Carlo max |z| {worst_z:.2} (<= 4)"
        ),
    )
}

fn pushforward_gradient() -> Outcome {
    // g(y) on reference coordinates with its exact gradient.
    let g = |y: &DVector<f64>| (y[0] + 0.5 * y[1]).sin() + y[0] * y[2] * y[2] + (y[1] - y[2]).exp();
    let grad_g = |y: &DVector<f64>| {
        let c = (y[0] + 0.5 * y[1]).cos();
        let e = (y[1] - y[2]).exp();
        DVector::from_vec(vec![c + y[2] * y[2], 0.5 * c + e, 2.0 * y[0] * y[2] - e])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let s = random_simplex(3, &mut rng);
        for _ in 0..20 {
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let analytic = s.pushforward_gradient(&grad_g(&s.map_to_reference(&x)));
            let fd = DVector::from_fn(3, |k, _| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                (g(&s.map_to_reference(&xp)) - g(&s.map_to_reference(&xm))) / (2.0 * h)
            });
            worst = worst.max((analytic - &fd).norm() / fd.norm());
        }
    }
    outcome(worst <= 1e-6, format!("200 points on 10 simplices: max relative error {worst:.2e} (<= 1e-6)"))
}

fn energy_conservation() -> Outcome {
    let s = order_simplex(2);
    let mode = EigenMode::new(2, &[1, 2]).unwrap();
    let settings = FemSettings { levels: 4, dt_factor: 0.5, mass: MassMode::Consistent, ..Default::default() };
    let p = FemProblem::new(&s, 0, &mode, &ZeroField(2), &settings).unwrap();
    let horizon = 9_999.5 * p.dt;
    let (_, ledger, state) = p.run(horizon).unwrap();
    let lf = ledger.leapfrog_drift();
    let eh = ledger.continuous_drift();
    outcome(
        state.step_index == 10_000 && lf <= 1e-10 && eh <= 1e-3,
        format!(
            "{} steps, dt = {:.5}: E_lf drift {lf:.2e} (<= 1e-10), E_h drift {eh:.2e} (<= 1e-3)",
            state.step_index, p.dt
        ),
    )
}

fn rellich_identity() -> Outcome {
    let start = Instant::now();
    let modes: [&[u32]; 7] = [&[1, 2], &[1, 3], &[2, 3], &[1, 4], &[3, 4], &[1, 2, 3], &[1, 2, 4]];
    let mut worst: f64 = 0.0;
    for m in modes {
        let mode = EigenMode::new(m.len(), m).unwrap();
        let s = order_simplex(m.len());
        for face in 0..=m.len() {
            worst = worst.max(rellich_check(&s, &mode, face).unwrap().relative_error());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && elapsed < Duration::from_secs(30),
        format!("7 modes, all faces: max relative error {worst:.2e} (<= 1e-8) in {elapsed:.2?} (limit 30 s)"),
    )
}

fn closed_form_remainder() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in [&[1u32, 2][..], &[2, 3], &[1, 2, 3]] {
        let wave = StandingWave::new(EigenMode::new(m.len(), m).unwrap(), 1.0);
        let omega = wave.mode.frequency();
        for t in [5.0, 12.3, 40.0] {
            let r = oracle_report(&wave, 0, t).unwrap();
            worst = worst.max((r.remainder - (2.0 * omega * t).sin() / (2.0 * omega * t)).abs());
        }
    }
    outcome(worst <= 1e-10, format!("T in {{5, 12.3, 40}}: max |remainder - sin(2wT)/(2wT)| {worst:.2e} (<= 1e-10)"))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(t, r)| (t.ln(), r.abs().ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn fem_theorem_check() -> Outcome {
    let start = Instant::now();
    let s = order_simplex(2);
    let u0: Arc<dyn ScalarField> = Arc::new(EigenMode::new(2, &[1, 2]).unwrap());
    let settings = FemSettings { levels: 5, dt_factor: 0.25, mass: MassMode::Consistent, ..Default::default() };
    let horizons = [10.0, 20.0, 40.0, 80.0];
    let sweep = remainder_sweep(&s, 0, u0, Arc::new(ZeroField(2)), &horizons, &settings).unwrap();
    let elapsed = start.elapsed();
    let in_band = sweep.reports.iter().all(|r| (0.85..=1.15).contains(&r.ratio));
    let last = sweep.reports.last().unwrap().ratio;
    let slope_ok = (-1.5..=-0.6).contains(&sweep.slope);
    let ratios: Vec<String> = sweep.reports.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    // Slope of the exact continuum remainder at the same horizons, for reference.
    let omega = 5f64.sqrt();
    let exact: Vec<(f64, f64)> = horizons.iter().map(|&t| (t, (2.0 * omega * t).sin() / (2.0 * omega * t))).collect();
    outcome(
        in_band && (last - 1.0).abs() <= 0.08 && slope_ok && elapsed < Duration::from_secs(120),
        format!(
            "ratios [{}] (in [0.85, 1.15]: {in_band}); |ratio(80) - 1| {:.4} (<= 0.08); slope {:.3} (in [-1.5, -0.6]: {slope_ok}; \
             exact-continuum slope {:.3}); {elapsed:.2?} (limit 120 s)",
            ratios.join(", "),
            (last - 1.0).abs(),
            sweep.slope,
            least_squares_slope(&exact)
        ),
    )
}

fn three_dimensional_smoke() -> Outcome {
    let start = Instant::now();
    let s = order_simplex(3);
    let mode = EigenMode::new(3, &[1, 2, 3]).unwrap();
    let settings = FemSettings { levels: 3, ..Default::default() };
    let p = FemProblem::new(&s, 0, &mode, &ZeroField(3), &settings).unwrap();
    let r = p.report(40.0).unwrap();
    let elapsed = start.elapsed();
    outcome(
        (r.ratio - 1.0).abs() <= 0.15 && elapsed < Duration::from_secs(300),
        format!("order-3, mode (1,2,3), levels 3, T = 40: ratio {:.4} (within 0.15 of 1) in {elapsed:.2?} (limit 300 s)", r.ratio),
    )
}

fn pullback_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let (n, levels) = if i % 2 == 0 { (2, 3) } else { (3, 2) };
        let d = pullback_equivalence_check(&random_simplex(n, &mut rng), levels).unwrap();
        worst = worst.max(d.stiffness).max(d.mass);
    }
    outcome(worst <= 1e-10, format!("10 random simplices, n in {{2, 3}}: max relative discrepancy {worst:.2e} (<= 1e-10)"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, threads: usize| -> (Vec<u8>, Vec<u8>) {
        let csv = dir.path().join(format!("{tag}.csv"));
        let json = dir.path().join(format!("{tag}.json"));
        let text = format!(
            r#"{{"simplex": "order-2", "face": 1, "initial_data": {{"random": {{"max_mode": 4, "with_velocity": true}}}},
                "levels": 4, "t_list": [2, 4, 8], "seed": 31,
                "outputs": {{"csv": {csv:?}, "json": {json:?}}}}}"#
        );
        let config = RunConfig::from_json(&text).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| verify_theorem(&config)).unwrap();
        (std::fs::read(csv).unwrap(), std::fs::read(json).unwrap())
    };
    let a = run("a", 1);
    let b = run("b", 4);
    let c = run("c", 4);
    let same = a == b && b == c;
    outcome(same, format!("3 runs (1, 4, 4 threads): CSV and JSON byte-identical: {same}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("commutator [P, X] = 2P exactly", commutator_lemma),
        ("volume and determinant identities", volume_and_determinant),
        ("pushforward gradient vs finite differences", pushforward_gradient),
        ("leapfrog energy conservation", energy_conservation),
        ("face identity for exact eigenmodes", rellich_identity),
        ("closed-form remainder on the exact path", closed_form_remainder),
        ("FEM flux identity and remainder sweep", fem_theorem_check),
        ("3-D FEM smoke test", three_dimensional_smoke),
        ("pullback assembly equivalence", pullback_equivalence),
        ("deterministic verify-theorem output", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {name}: {}", i + 1, result.detail);
        if !result.passed {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
