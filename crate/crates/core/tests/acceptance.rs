//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are fixed here and nowhere else.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use krflow::analysis::{
    bump, certify_theorem, default_family, poincare_suite, trace_checks, INEQUALITY_TOL,
};
use krflow::cli::main_with_args;
use krflow::flow::{
    normalized_mean, renormalize_c, run, step, FlowConfig, FlowTrace, Stepper, Termination,
};
use krflow::functionals::{
    e1_energy, f_functional, jensen_gap_f, k_energy, k_energy_path, nu_minus_f, velocity,
};
use krflow::geometry::{
    ddbar_density, make_background, ricci_density, scalar_curvature, BackgroundGeometry,
    PotentialState, Profile,
};
use krflow::sampling::random_valid_potential;

const N: usize = 256;
const PERTURBED: Profile = Profile::Cubic { amplitude: 0.1 };

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn round_oracles() -> Outcome {
    let bg = make_background(N, Profile::Round).unwrap();
    let h = bg.ricci_potential().amax();
    let zero = PotentialState::zero(&bg);
    let r = scalar_curvature(&bg, &zero).add_scalar(-1.0).amax();
    let u = velocity(&bg, &zero).amax();
    let stepped = step(&bg, &zero, 0.1, Stepper::SemiImplicit)
        .unwrap()
        .potential()
        .amax();
    outcome(
        h < 1e-10 && r < 1e-8 && u < 1e-12 && stepped < 1e-12,
        format!(
            "sup|h| = {h:.1e}, sup|R-1| = {r:.1e}, sup|u| = {u:.1e}, sup|phi(0.1)| = {stepped:.1e}"
        ),
    )
}

fn functional_identities() -> Outcome {
    let bg = make_background(N, PERTURBED).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut trans, mut path, mut ident, mut min_gap, mut jensen) =
        (0.0f64, 0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    for k in 0..20 {
        let phi = random_valid_potential(&bg, &mut rng);
        let s = PotentialState::new(&bg, phi.clone()).unwrap();
        let shifted = PotentialState::new(&bg, phi.add_scalar(3.7 * (k as f64 - 9.5))).unwrap();
        let (nu, f, e1) = (k_energy(&bg, &s), f_functional(&bg, &s), e1_energy(&bg, &s));
        trans = trans
            .max((nu - k_energy(&bg, &shifted)).abs())
            .max((f - f_functional(&bg, &shifted)).abs())
            .max((e1 - e1_energy(&bg, &shifted)).abs());
        path = path.max((nu - k_energy_path(&bg, &s, 256).unwrap()).abs());
        let u = velocity(&bg, &s);
        ident = ident.max((nu_minus_f(&bg, &s, &u) - (nu - f)).abs());
        let gap = nu - f - bg.ricci_mean();
        min_gap = min_gap.min(gap);
        jensen = jensen.max((gap - jensen_gap_f(&bg, &s, &u)).abs());
    }
    outcome(
        trans < 1e-10 && path < 1e-6 && ident < 1e-9 && min_gap >= -1e-10 && jensen < 1e-9,
        format!(
            "translation {trans:.1e}, nu vs path {path:.1e}, nu_minus_f {ident:.1e}, min gap {min_gap:.1e}, gap - f {jensen:.1e}"
        ),
    )
}

struct Flagship {
    bg: BackgroundGeometry,
    trace: FlowTrace,
}

fn flagship() -> Flagship {
    let bg = make_background(N, Profile::Round).unwrap();
    let phi = bump(&bg, 0.3).phi;
    let trace = run(&bg, &phi, &FlowConfig::default()).unwrap();
    Flagship { bg, trace }
}

fn flow_monotonicity(fl: &Flagship) -> Outcome {
    let tr = &fl.trace;
    let last = tr.last().unwrap();
    let chk = trace_checks(tr);
    let end_gap = (last.f - (last.nu - fl.bg.ricci_mean())).abs();
    outcome(
        tr.termination == Termination::Converged
            && last.sup_grad_u_sq < 1e-8
            && last.t < 30.0
            && chk.max_nu_increase < 1e-10
            && chk.max_f_increase < 1e-10
            && chk.derivative_identity < 1e-3
            && end_gap < 1e-4,
        format!(
            "{:?} at t = {:.3} with sup|grad u|^2 = {:.1e}; max step increase nu {:.1e}, F {:.1e}; dnu/dt + eps rel {:.1e}; |F - nu| at end {:.1e}",
            tr.termination, last.t, last.sup_grad_u_sq, chk.max_nu_increase, chk.max_f_increase, chk.derivative_identity, end_gap
        ),
    )
}

fn synthetic_c_error(n: usize) -> f64 {
    let big_t = 4.0;
    let t: Vec<f64> = (0..=n).map(|i| big_t * i as f64 / n as f64).collect();
    let eps: Vec<f64> = t.iter().map(|x| (-2.0 * x).exp()).collect();
    let (c, _) = normalized_mean(&t, &eps);
    t.iter()
        .zip(&c)
        .map(|(&x, &ci)| (ci - ((-2.0 * x).exp() - (x - 3.0 * big_t).exp()) / 3.0).abs())
        .fold(0.0, f64::max)
}

fn gauge_normalization(fl: &Flagship) -> Outcome {
    let norm = renormalize_c(&fl.trace);
    let n = norm.c_norm.len();
    let positive = norm.c_norm[..n - 1].iter().all(|&c| c > 0.0);
    let end = norm.c_norm[n - 1];
    let budget = norm.nu_drop + 1e-8 - norm.integral_c_norm;
    let (e1, e2) = (synthetic_c_error(200), synthetic_c_error(400));
    let order = (e1 / e2).log2();
    // Linear interpolation error h²/8·sup|ε''| with h = 0.01, sup|ε''| = 4.
    let bound = 0.01f64.powi(2) / 8.0 * 4.0;
    outcome(
        positive && end == 0.0 && budget >= 0.0 && (order - 2.0).abs() < 0.05 && e2 <= bound,
        format!(
            "c~ > 0 before horizon: {positive}, c~(T) = {end:e}, int c~ = {:.6e} <= nu drop {:.6e}; synthetic error {e2:.1e}, order {order:.3}",
            norm.integral_c_norm, norm.nu_drop
        ),
    )
}

fn lemma_behaviour(fl: &Flagship) -> Outcome {
    let tr = &fl.trace;
    let norm = renormalize_c(tr);
    let (mut b_sup, mut b_at) = (0.0, 0.0);
    for (r, &s) in tr.records.iter().zip(&norm.sup_u) {
        if s > b_sup {
            (b_sup, b_at) = (s, r.t);
        }
    }
    let t_end = tr.last().unwrap().t;
    let b_end = *norm.b.last().unwrap();
    let ubar_end = norm.ubar.last().unwrap().abs();
    let best = tr
        .records
        .iter()
        .min_by(|a, b| a.sup_grad_u_sq.total_cmp(&b.sup_grad_u_sq))
        .unwrap();
    outcome(
        b_sup.is_finite() && b_at <= 0.5 * t_end && b_end < 1e-6 && ubar_end < 1e-3 && best.f_gap < 1e-6,
        format!(
            "B = {b_sup:.4} at t = {b_at:.3} (t_end {t_end:.3}); b(t_end) = {b_end:.1e}; |ubar(t_end)| = {ubar_end:.1e}; f at best time = {:.1e}",
            best.f_gap
        ),
    )
}

fn certificate() -> Outcome {
    let cfg = FlowConfig {
        snapshot_every: 0,
        ..FlowConfig::default()
    };
    let round = make_background(N, Profile::Round).unwrap();
    let rep_round = certify_theorem(&round, &default_family(&round), &cfg).unwrap();
    let pert = make_background(N, PERTURBED).unwrap();
    let rep_pert = certify_theorem(&pert, &default_family(&pert), &cfg).unwrap();
    let rows_ok = |rows: &[krflow::analysis::CertificateRow]| {
        rows.iter().all(|r| {
            r.valid
                && r.converged
                && r.min_gap >= -INEQUALITY_TOL
                && r.a1_margin >= -INEQUALITY_TOL
                && r.a3_margin >= -INEQUALITY_TOL
        })
    };
    let rr = rep_round.residual.unwrap_or(f64::INFINITY);
    let rp = rep_pert.residual.unwrap_or(f64::INFINITY);
    outcome(
        rep_round.rows.len() == 5 && rr < 1e-4 && rows_ok(&rep_round.rows) && rp < 1e-3 && rows_ok(&rep_pert.rows),
        format!(
            "round residual {rr:.1e} ({} converged rows), perturbed residual {rp:.1e} with (1/V)int h rho0 = {:.4e} ({} converged rows)",
            rep_round.converged_rows, rep_pert.background_constant, rep_pert.converged_rows
        ),
    )
}

fn poincare() -> Outcome {
    let round = make_background(N, Profile::Round).unwrap();
    let pert = make_background(N, PERTURBED).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let states = [
        (&round, PotentialState::zero(&round)),
        (&pert, PotentialState::zero(&pert)),
        (
            &pert,
            PotentialState::new(&pert, random_valid_potential(&pert, &mut rng)).unwrap(),
        ),
    ];
    let mut worst = f64::INFINITY;
    let mut ratio = f64::INFINITY;
    for (i, (bg, s)) in states.iter().enumerate() {
        let summary = poincare_suite(bg, s, 100, 100 + i as u64).unwrap();
        worst = worst.min(summary.worst_margin);
        ratio = ratio.min(summary.worst_ratio);
    }
    outcome(
        worst >= -1e-10,
        format!(
            "300 trials, worst margin {worst:.3e}, smallest gradient/variance ratio {ratio:.4}"
        ),
    )
}

fn spectral_errors(n: usize) -> (f64, f64) {
    let bg = make_background(
        n,
        Profile::Lorentzian {
            amplitude: 0.002,
            center: 0.3,
            width: 0.1,
        },
    )
    .unwrap();
    let g = bg.grid();
    let residual =
        (ricci_density(g, bg.rho0()) - bg.rho0() - ddbar_density(g, bg.ricci_potential())).amax();
    let s = PotentialState::new(&bg, bump(&bg, 0.2).phi).unwrap();
    let path = (k_energy(&bg, &s) - k_energy_path(&bg, &s, 256).unwrap()).abs();
    (residual, path)
}

fn spectral_convergence() -> Outcome {
    let (r128, p128) = spectral_errors(128);
    let (r256, p256) = spectral_errors(256);
    // Faster than any algebraic order up to 10.
    let factor = 2f64.powi(10);
    outcome(
        r256 * factor < r128 && p256 * factor < p128,
        format!(
            "defining-equation residual {r128:.1e} -> {r256:.1e} (x{:.0}), nu vs path {p128:.1e} -> {p256:.1e} (x{:.0})",
            r128 / r256,
            p128 / p256
        ),
    )
}

fn bytes_equal(a: &Path, b: &Path) -> bool {
    match (fs::read(a), fs::read(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut checked = Vec::new();
    let mut ok = true;
    for (name, background, phi0) in [
        ("round-zero", "round", "zero"),
        ("cubic-bump", "cubic:0.2", "bump:0.3"),
        ("cubic-random", "cubic:0.2", "random"),
    ] {
        let first = dir.path().join(name);
        let second = dir.path().join(format!("{name}-replay"));
        let code = main_with_args([
            "krflow",
            "run",
            "--grid",
            "128",
            "--background",
            background,
            "--phi0",
            phi0,
            "--seed",
            "5",
            "--t-max",
            "2",
            "--out",
            first.to_str().unwrap(),
        ]);
        let manifest = first.join("manifest.json");
        let replay = main_with_args([
            "krflow",
            "replay",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            second.to_str().unwrap(),
        ]);
        let same_trace = bytes_equal(&first.join("trace.csv"), &second.join("trace.csv"));
        let snaps: Vec<_> = fs::read_dir(first.join("snapshots"))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        let same_snaps = !snaps.is_empty()
            && snaps.iter().all(|f| {
                bytes_equal(
                    &first.join("snapshots").join(f),
                    &second.join("snapshots").join(f),
                )
            });
        ok &= code == replay && same_trace && same_snaps;
        checked.push(format!("{name} (exit {code}, {} snapshots)", snaps.len()));
    }
    outcome(
        ok,
        format!(
            "byte-identical trace.csv and snapshots on replay: {}",
            checked.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {id}. {name} ({:.1} s): {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failures += 1;
        }
    };
    report(1, "round-background oracles", &round_oracles);
    report(
        2,
        "functional identities on 20 random states",
        &functional_identities,
    );
    let start = Instant::now();
    let fl = flagship();
    println!(
        "      flagship run (round, bump:0.3, N = {N}) took {:.1} s",
        start.elapsed().as_secs_f64()
    );
    report(3, "flow monotonicity and dnu/dt = -eps", &|| {
        flow_monotonicity(&fl)
    });
    report(4, "gauge normalization of c", &|| gauge_normalization(&fl));
    report(5, "bounds on u, b, ubar and f", &|| lemma_behaviour(&fl));
    report(
        6,
        "inf F = inf nu - (1/V)int h rho0 certificate",
        &certificate,
    );
    report(7, "weighted Poincare inequality", &poincare);
    report(
        8,
        "spectral convergence from N = 128 to 256",
        &spectral_convergence,
    );
    report(9, "determinism of replayed manifests", &determinism);
    if failures == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
