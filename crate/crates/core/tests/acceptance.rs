//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! measured values and pinned tolerances, and exits non-zero on failure.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinlimit_core::dynamics::evolve_periodic;
use spinlimit_core::estimation::{ensemble_covariance, optimal_variance, CovarianceMode, MomentSample};
use spinlimit_core::figures::{figure_points, Figure, Scale};
use spinlimit_core::geometry::{rescale_cluster, sample_cluster};
use spinlimit_core::hamiltonians::RotatingHamiltonian;
use spinlimit_core::kernel::Spectrum;
use spinlimit_core::nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use spinlimit_core::{
    coherent_product_state, embed_operator, evolve_static, rotating_dd_hamiltonian, run_experiment,
    secular_dd_hamiltonian, spin_operators, ClusterGeometry, ClusterSpace, ExperimentConfig, ExperimentResult,
    OperatorMatrix, RunOptions, SpinSpecies, StateVector, C64,
};
use statrs::distribution::{ContinuousCDF, Gamma};
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

struct Check {
    ok: bool,
    detail: String,
}

impl Check {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }
}

fn combine(checks: Vec<Check>) -> (bool, String) {
    let ok = checks.iter().all(|c| c.ok);
    let detail = checks
        .iter()
        .map(|c| if c.ok { c.detail.clone() } else { format!("[FAILED] {}", c.detail) })
        .collect::<Vec<_>>()
        .join("; ");
    (ok, detail)
}

fn run(c: &ExperimentConfig) -> ExperimentResult {
    run_experiment(c, RunOptions::default()).expect("experiment runs")
}

fn er_min(r: &ExperimentResult) -> (f64, f64, f64) {
    let o = r.curve.optimum.expect("interior optimum");
    (o.er_min, r.curve.er_min_stderr.unwrap_or(f64::NAN), o.tau_opt)
}

fn desk_results(figure: Figure) -> Vec<ExperimentResult> {
    figure_points(figure, Scale::Desk, &ExperimentConfig::default())
        .iter()
        .map(|p| run(&p.config))
        .collect()
}

fn by_size(results: &[ExperimentResult], twice_spin: u32) -> Vec<(usize, f64, f64)> {
    results
        .iter()
        .filter(|r| r.config.species.twice_spin() == twice_spin)
        .map(|r| {
            let (e, se, _) = er_min(r);
            (r.config.cluster_size, e, se)
        })
        .collect()
}

fn non_increasing(series: &[(usize, f64, f64)], name: &str) -> Check {
    let bad: Vec<String> = series
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 + 2.0 * w[0].2.hypot(w[1].2))
        .map(|w| format!("M={}→{}", w[0].0, w[1].0))
        .collect();
    let values = series.iter().map(|(m, e, _)| format!("{m}:{e:.3}")).collect::<Vec<_>>().join(" ");
    Check::new(bad.is_empty(), format!("{name} non-increasing within 2 SE [{values}] {}", bad.join(",")))
}

fn fig1() -> (bool, String) {
    let p = &figure_points(Figure::Fig1, Scale::Desk, &ExperimentConfig::default())[0];
    let (e, se, t) = er_min(&run(&p.config));
    combine(vec![
        Check::new((e - 0.7).abs() <= 0.1, format!("er_min = {e:.4} ± {se:.4} (0.7 ± 0.1)")),
        Check::new((t - 0.5).abs() <= 0.15, format!("tau_opt = {t:.3} (0.5 ± 0.15)")),
    ])
}

fn fig2() -> (bool, String) {
    let results = desk_results(Figure::Fig2);
    let half = by_size(&results, 1);
    let one = by_size(&results, 2);
    let mut checks = vec![non_increasing(&half, "s=1/2"), non_increasing(&one, "s=1")];
    let lower = half
        .iter()
        .zip(&one)
        .filter(|(h, _)| h.0 >= 3)
        .all(|(h, o)| o.1 < h.1);
    checks.push(Check::new(lower, "s=1 below s=1/2 for M ≥ 3"));
    let e = |m: usize| half.iter().find(|x| x.0 == m).copied().expect("size present");
    let (e2, e3, e5, e6) = (e(2), e(3), e(5), e(6));
    checks.push(Check::new(
        e6.1 < e2.1 - 2.0 * e2.2.hypot(e6.2),
        format!("drop M=2→6 = {:.3} (> 2 SE)", e2.1 - e6.1),
    ));
    checks.push(Check::new(
        (e5.1 - e6.1).abs() < (e2.1 - e3.1).abs(),
        format!("flattening |Δ5,6| = {:.3} < |Δ2,3| = {:.3}", (e5.1 - e6.1).abs(), (e2.1 - e3.1).abs()),
    ));
    combine(checks)
}

fn fig3() -> (bool, String) {
    let results = desk_results(Figure::Fig3);
    let (secular, sse, _) = er_min(&results[0]);
    let full: Vec<(f64, f64)> = results[1..].iter().map(|r| (r.config.omega_ratio, er_min(r).0)).collect();
    let at = |ratio: f64| full.iter().find(|x| x.0 == ratio).expect("ratio present").1;
    let high = at(100.0);
    let plateau = 0.5 * (at(0.5) + at(1.0));
    let values = full.iter().map(|(r, e)| format!("{r}:{e:.3}")).collect::<Vec<_>>().join(" ");
    combine(vec![
        Check::new(true, format!("secular {secular:.3} ± {sse:.3}, full [{values}]")),
        Check::new(
            (high - secular).abs() <= 0.1 * secular,
            format!("ratio 100 vs secular {:+.1}% (within 10%)", 100.0 * (high / secular - 1.0)),
        ),
        Check::new(
            full.iter().filter(|x| x.0 <= 2.0).all(|x| x.1 > secular),
            "ratios ≤ 2 above secular",
        ),
        Check::new(
            (plateau / secular - 2.0).abs() <= 0.5,
            format!("plateau/secular = {:.2} (2.0 ± 0.5)", plateau / secular),
        ),
    ])
}

fn fig_s1() -> (bool, String) {
    let results = desk_results(Figure::FigS1);
    let series = by_size(&results, 1);
    let first = series[0];
    let last = *series.last().expect("points");
    combine(vec![
        non_increasing(&series, "rf"),
        Check::new(last.1 <= first.1, format!("M=5 {:.3} ≤ M=2 {:.3}", last.1, first.1)),
        Check::new((0.2..=0.45).contains(&last.1), format!("M=5 = {:.3} in [0.2, 0.45]", last.1)),
    ])
}

fn scale_invariance() -> (bool, String) {
    let base = ExperimentConfig {
        clusters: 2_000,
        seed: 41,
        ..ExperimentConfig::default()
    };
    let si = ExperimentConfig {
        rho: base.rho * 10.0,
        species: SpinSpecies::new(0.5, base.species.gamma() * 3.0).expect("spin"),
        ..base.clone()
    };
    let (a, b) = (run(&base), run(&si));
    let rel = a
        .curve
        .er_over_hbar
        .iter()
        .zip(&b.curve.er_over_hbar)
        .map(|(x, y)| ((x - y) / x).abs())
        .fold(0.0, f64::max);

    // same seed: the doubled run extends the original cluster sequence
    let doubled = run(&ExperimentConfig {
        clusters: 4_000,
        ..base.clone()
    });
    let worst = (0..a.curve.tau.len())
        .map(|i| (a.curve.er_over_hbar[i] - doubled.curve.er_over_hbar[i]).abs() / a.curve.stderr[i])
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let sp = SpinSpecies::spin_half();
    let mut scale_err: f64 = 0.0;
    for _ in 0..20 {
        let c = sample_cluster(3, &mut rng);
        let lambda = rng.random_range(0.1..10.0);
        let r = rescale_cluster(&c, lambda).expect("scale");
        for (h, hr) in [
            (secular_dd_hamiltonian(&c, sp), secular_dd_hamiltonian(&r, sp)),
            (rotating_dd_hamiltonian(&c, sp, 0.7), rotating_dd_hamiltonian(&r, sp, 0.7)),
        ] {
            let (h, hr) = (h.expect("h"), hr.expect("h"));
            scale_err = scale_err.max((&hr - &h.scale(lambda)).frobenius_norm() / (lambda * h.frobenius_norm()));
        }
    }
    combine(vec![
        Check::new(rel <= 1e-12, format!("SI round trip max rel {rel:.1e} (≤ 1e-12)")),
        Check::new(worst < 3.0, format!("Q doubling max |Δ|/SE over all τ = {worst:.2} (< 3)")),
        Check::new(scale_err <= 1e-12, format!("rescale max rel {scale_err:.1e} (≤ 1e-12)")),
    ])
}

fn total_ops(species: SpinSpecies, m: usize) -> [OperatorMatrix; 3] {
    let ops = spin_operators(species);
    let total = |op: &OperatorMatrix| {
        (0..m)
            .map(|i| embed_operator(op, i, m).expect("embed"))
            .reduce(|a, b| &a + &b)
            .expect("sites")
    };
    [total(&ops.x), total(&ops.y), total(&ops.z)]
}

fn pair(r: Vector3<f64>) -> ClusterGeometry {
    ClusterGeometry::new(vec![Vector3::zeros(), r]).expect("geometry")
}

fn taylor_propagator(h: &OperatorMatrix, tau: f64) -> DMatrix<C64> {
    let a = h.as_matrix() * C64::new(0.0, -tau);
    let n = a.nrows();
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..80 {
        term = &term * &a / C64::new(k as f64, 0.0);
        sum += &term;
    }
    sum
}

fn rk4(h: &OperatorMatrix, psi: &DVector<C64>, tau: f64, steps: usize) -> DVector<C64> {
    let f = |v: &DVector<C64>| h.as_matrix() * v * C64::new(0.0, -1.0);
    let dt = tau / steps as f64;
    let mut y = psi.clone();
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&(&y + &k1 * C64::new(dt / 2.0, 0.0)));
        let k3 = f(&(&y + &k2 * C64::new(dt / 2.0, 0.0)));
        let k4 = f(&(&y + &k3 * C64::new(dt, 0.0)));
        y += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    }
    y
}

fn oracles() -> (bool, String) {
    let sp = SpinSpecies::spin_half();
    let mut checks = Vec::new();

    let u: f64 = 0.8;
    let k = 1.0 / (4.0 * PI * 0.25 * u.powi(3));
    let h = secular_dd_hamiltonian(&pair(Vector3::new(0.0, 0.0, u)), sp).expect("h");
    let mut eig: Vec<f64> = Spectrum::new(&h).expect("spectrum").eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let expected = [-k / 2.0, -k / 2.0, 0.0, k];
    let err = eig.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(Check::new(err < 1e-12, format!("two-spin spectrum {err:.1e}")));

    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut quad_err: f64 = 0.0;
    for m in [2, 3, 4] {
        let c = sample_cluster(m, &mut rng);
        let h = secular_dd_hamiltonian(&c, sp).expect("h");
        let mut avg = OperatorMatrix::zeros(h.dim());
        for j in 0..256 {
            let phi = 2.0 * PI * j as f64 / 256.0;
            avg = &avg + &rotating_dd_hamiltonian(&c, sp, phi).expect("h").scale(1.0 / 256.0);
        }
        quad_err = quad_err.max((&avg - &h).frobenius_norm() / h.frobenius_norm());
    }
    checks.push(Check::new(quad_err < 1e-10, format!("secular vs quadrature {quad_err:.1e} (1e-10)")));

    let c = sample_cluster(3, &mut rng);
    let h = secular_dd_hamiltonian(&c, SpinSpecies::new(1.0, sp.gamma()).expect("spin")).expect("h");
    let scale = h.frobenius_norm();
    let tau = 1.0 / scale;
    let u = Spectrum::new(&h).expect("spectrum").propagator(tau);
    let taylor = (u.as_matrix() - taylor_propagator(&h, tau)).norm();
    checks.push(Check::new(taylor < 1e-8, format!("propagator vs Taylor {taylor:.1e} (1e-8)")));

    let c = pair(Vector3::new(0.4, -0.3, 0.5));
    let h = secular_dd_hamiltonian(&c, sp).expect("h");
    let psi0 = coherent_product_state(&Vector3::x(), sp, 2).expect("state");
    let exact = evolve_static(&h, &psi0, &[1.0]).expect("evolve");
    let ode = rk4(&h, psi0.amplitudes(), 1.0, 20_000);
    let ode_err = (exact.last().amplitudes() - ode).norm();
    checks.push(Check::new(ode_err < 1e-8, format!("propagator vs RK4 {ode_err:.1e} (1e-8)")));

    let mut mom_err: f64 = 0.0;
    for (species, m) in [(sp, 4), (SpinSpecies::new(1.5, sp.gamma()).expect("spin"), 2)] {
        let space = ClusterSpace::new(species, m).expect("space");
        let psi = StateVector::new(DVector::from_fn(space.dim(), |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }))
        .expect("state");
        let s = space.moments(psi.amplitudes().as_slice());
        let ops = total_ops(species, m);
        for a in 0..3 {
            mom_err = mom_err.max((s.mean[a] - psi.expectation(&ops[a]).expect("exp").re).abs());
            for b in 0..3 {
                let sym = (&(&ops[a] * &ops[b]) + &(&ops[b] * &ops[a])).scale(0.5);
                mom_err = mom_err.max((s.second[(a, b)] - psi.expectation(&sym).expect("exp").re).abs());
            }
        }
    }
    checks.push(Check::new(mom_err < 1e-12, format!("moments vs brute force {mom_err:.1e} (1e-12)")));

    let n = 100_000;
    let mut vols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let c = sample_cluster(4, &mut rng);
        for k in 1..4 {
            vols[k - 1].push(4.0 * PI / 3.0 * c.positions()[k].norm().powi(3));
        }
    }
    let mut p_min: f64 = 1.0;
    for (k, v) in vols.iter_mut().enumerate() {
        let law = Gamma::new((k + 1) as f64, 1.0).expect("gamma");
        p_min = p_min.min(common::ks_one_sample(v, |x| law.cdf(x)).1);
    }
    checks.push(Check::new(p_min > 0.01, format!("kNN vs Gamma KS min p = {p_min:.3} (> 0.01)")));

    let mut beaten = 0;
    for _ in 0..200 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let gamma = a * a.transpose();
        let g = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let best = optimal_variance(&gamma, &g).variance;
        for _ in 0..500 {
            let d = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0f64));
            let v = (d.transpose() * gamma * d)[0] / d.dot(&g).powi(2);
            if v < best * (1.0 - 1e-10) {
                beaten += 1;
            }
        }
    }
    checks.push(Check::new(beaten == 0, format!("readout never beaten ({beaten} of 1e5)")));
    combine(checks)
}

fn structure() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let sp = SpinSpecies::spin_half();
    let (mut herm, mut unit, mut comm, mut norm): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for m in [2, 3, 4] {
        let c = sample_cluster(m, &mut rng);
        let h = secular_dd_hamiltonian(&c, sp).expect("h");
        let sz = &total_ops(sp, m)[2];
        herm = herm.max(h.hermiticity_defect());
        for phi in [0.0, 1.1, 4.0] {
            herm = herm.max(rotating_dd_hamiltonian(&c, sp, phi).expect("h").hermiticity_defect());
        }
        let rot = RotatingHamiltonian::new(&c, sp).expect("h");
        let avg = OperatorMatrix::from_matrix(rot.average().clone()).expect("h");
        comm = comm.max(h.commutator(sz).frobenius_norm() / h.frobenius_norm());
        comm = comm.max(avg.commutator(sz).frobenius_norm() / avg.frobenius_norm());
        unit = unit.max(Spectrum::new(&h).expect("spectrum").propagator(2.3).unitarity_defect());
        let psi = coherent_product_state(&Vector3::x(), sp, m).expect("state");
        let grid: Vec<f64> = (1..=20).map(|k| 0.15 * k as f64).collect();
        for s in evolve_periodic(&c, sp, 3.0, &psi, &grid, 32).expect("evolve").states() {
            norm = norm.max((s.norm_sqr() - 1.0).abs());
        }
    }

    let space = ClusterSpace::new(sp, 3).expect("space");
    let psi0 = coherent_product_state(&Vector3::x(), sp, 3).expect("state");
    let samples: Vec<MomentSample> = (0..500)
        .map(|_| {
            let c = sample_cluster(3, &mut rng);
            let h = secular_dd_hamiltonian(&c, sp).expect("h");
            let s = evolve_static(&h, &psi0, &[0.8]).expect("evolve");
            space.moments(s.last().amplitudes().as_slice())
        })
        .collect();
    let mut psd = f64::INFINITY;
    for mode in [CovarianceMode::Joint, CovarianceMode::Averaged] {
        let (_, g) = ensemble_covariance(&samples, 1.0, mode).expect("covariance");
        psd = psd.min(g.symmetric_eigenvalues().min() / g.norm());
    }

    let magic = (1.0 / 3.0f64).sqrt().acos();
    let mh = secular_dd_hamiltonian(&pair(Vector3::new(magic.sin(), 0.0, magic.cos())), sp)
        .expect("h")
        .frobenius_norm();

    let base = pair(Vector3::new(0.0, 0.0, 0.7));
    let reference = secular_dd_hamiltonian(&base, sp).expect("h").frobenius_norm();
    let sphere = |n: usize, rng: &mut ChaCha8Rng| {
        let mut acc = OperatorMatrix::zeros(4);
        for _ in 0..n {
            let d: [f64; 3] = rand_distr::Distribution::sample(&rand_distr::UnitSphere, rng);
            let c = pair(Vector3::from(d) * 0.7);
            acc = &acc + &secular_dd_hamiltonian(&c, sp).expect("h").scale(1.0 / n as f64);
        }
        acc.frobenius_norm() / reference
    };
    let (small, large) = (sphere(1_000, &mut rng), sphere(16_000, &mut rng));

    combine(vec![
        Check::new(herm < 1e-14, format!("hermiticity {herm:.1e}")),
        Check::new(unit < 1e-12, format!("unitarity {unit:.1e}")),
        Check::new(norm < 1e-10, format!("norm {norm:.1e}")),
        Check::new(comm < 1e-14, format!("[H̄, ΣSz] {comm:.1e}")),
        Check::new(psd > -1e-12, format!("Γ min eigenvalue/‖Γ‖ {psd:.1e} (≥ 0)")),
        Check::new(mh < 1e-15, format!("magic angle {mh:.1e}")),
        Check::new(
            large < 0.1 && large < small,
            format!("spherical average {small:.3} → {large:.3} (n = 1e3 → 1.6e4)"),
        ),
    ])
}

type Criterion = (&'static str, fn() -> (bool, String));

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("dc secular minimum, s=1/2 M=2", fig1),
        ("cluster-size and spin trend", fig2),
        ("rotating-frame regime transition", fig3),
        ("rf protocol trend", fig_s1),
        ("scale invariance", scale_invariance),
        ("oracle equivalences", oracles),
        ("conservation and structure", structure),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {}. {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
