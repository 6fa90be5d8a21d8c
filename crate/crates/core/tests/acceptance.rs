//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::time::Instant;

use nls_gibbs::concentration::{
    collect_statistic, concentration_report, dirac_contour_statistic, empirical_log_mgf, parse_grid,
    standardized_grid, subgaussian_fit, ConcentrationOptions, Statistic,
};
use nls_gibbs::convexity::{
    certify_convexity, hessian_fd_oracle, hessian_form_v, lsi_lower_bound, ConvexityParams, Direction, Functional,
    Model, NormWeight,
};
use nls_gibbs::dirac::{self, DiracOperator};
use nls_gibbs::field::default_grid_size;
use nls_gibbs::flow::{
    conservation_check, evolve_backward, invariance_check, isospectral_refinement, split_step_evolve, trajectory,
    FlowParams, PERMUTATIONS, REFINEMENT_LEVELS,
};
use nls_gibbs::gibbs::{importance_ensemble, stream_rng, write_jsonl, GibbsEnsemble, GibbsParams};
use nls_gibbs::hill::{self, frame_bounds_estimate, frame_family, frame_ratio, HillOperator};
use nls_gibbs::spectral::{Characteristic, Kernel};
use nls_gibbs::{PeriodicField, TestFunction};
use num_complex::Complex64;
use rand::Rng;

type Outcome = (bool, String);

fn distance(a: &PeriodicField, b: &PeriodicField) -> f64 {
    a.sub(b).l2_norm_sq().sqrt()
}

fn random_field(cutoff: usize, scale: f64, rng: &mut impl Rng) -> PeriodicField {
    Direction::random(cutoff, rng).as_field().scale(scale)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let op = DiracOperator::new(&PeriodicField::zero(0)).unwrap();
    let free = |z: Complex64| 2.0 * (z * std::f64::consts::PI).cos();
    let mut worst: f64 = 0.0;
    for i in 0..=1200 {
        let z = Complex64::new(-6.0 + 0.01 * i as f64, 0.0);
        worst = worst.max((op.delta(z).unwrap() - free(z)).norm());
    }
    for i in 0..20 {
        for j in 0..10 {
            let z = Complex64::new(-6.0 + 12.0 * i as f64 / 19.0, -1.0 + 2.0 * j as f64 / 9.0);
            worst = worst.max((op.delta(z).unwrap() - free(z)).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (worst < 1e-7 && secs < 5.0, format!("max |Δ − 2cos πλ| = {worst:.2e}, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let data = hill::hill_periodic_spectrum(&PeriodicField::zero(0), 105.0, hill::DEFAULT_TOL).unwrap();
    let mut expected = vec![0.0];
    for n in 1..=10 {
        expected.extend([(n * n) as f64; 2]);
    }
    let ok_len = data.eigenvalues.len() == expected.len();
    let ev_err = data.eigenvalues.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let t_err = (0..=10).map(|n| (data.t(n).unwrap() - n as f64).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    (
        ok_len && ev_err < 1e-7 && t_err < 1e-7 && secs < 10.0,
        format!("{} eigenvalues, max error {ev_err:.2e}, max |t_n − n| = {t_err:.2e}, {secs:.2} s", data.eigenvalues.len()),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = stream_rng(3, 0);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let m = rng.random_range(1..=4);
        let p = [2.0, 3.0, 4.0, 5.0][case % 4];
        let field = random_field(m, rng.random_range(0.2..1.5), &mut rng);
        let dir = Direction::random(m, &mut rng);
        let grid = default_grid_size(m);
        let exact = hessian_form_v(&field, &dir, p, grid).unwrap();
        let fd = hessian_fd_oracle(&field, &dir, p, 1e-4, grid).unwrap();
        worst = worst.max((exact - fd).abs() / exact.abs().max(1e-12));
    }
    let mut p2: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let field = random_field(m, 1.0, &mut rng);
        let dir = Direction::random(m, &mut rng);
        let v = hessian_form_v(&field, &dir, 2.0, default_grid_size(m)).unwrap();
        p2 = p2.max((v - 2.0 * dir.norm_sq()).abs() / (2.0 * dir.norm_sq()));
    }
    (
        worst < 1e-4 && p2 < 1e-10,
        format!("max relative error vs finite differences {worst:.2e}; p = 2 closed form {p2:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = stream_rng(4, 0);
    let g = TestFunction::lorentzian(3.0);
    let stat = Statistic::Dirac {
        kernel: Kernel::Critical,
        g: g.clone(),
        m: 3,
    };
    let mut dirac_err: f64 = 0.0;
    let mut count_defect: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let q = random_field(m, 0.05, &mut rng);
        let direct = stat.eval(&q).unwrap();
        let op = DiracOperator::new(&q).unwrap();
        let centers = dirac::free_centers(Kernel::Critical, 3);
        let contour = dirac::linear_statistic_contour(&op, &g, Kernel::Critical, &centers, 0.2).unwrap();
        count_defect = contour.circles.iter().map(|c| (c.count - c.count.round()).abs()).fold(count_defect, f64::max);
        dirac_err = dirac_err.max((direct - contour.value).abs());
        debug_assert!((dirac_contour_statistic(&q, &g, 3, 0.2).unwrap() - contour.value).abs() < 1e-15);
    }
    let mut hill_err: f64 = 0.0;
    for eps in [0.05, 0.1] {
        let q = PeriodicField::from_modes(2, &[(-2, eps, 0.0), (2, eps, 0.0)]).unwrap();
        let op = HillOperator::new(&q).unwrap();
        let data = hill::spectrum_of(&op, 70.0, hill::DEFAULT_TOL).unwrap();
        for e in hill::pw_statistic_contour(&op, [2, 4, 6, 8]).unwrap() {
            let t = data.t(e.k as i64).unwrap();
            hill_err = hill_err.max((e.t_sq - t * t).abs());
            count_defect = count_defect.max((e.root_count - e.root_count.round()).abs());
        }
    }
    (
        dirac_err < 1e-5 && hill_err < 1e-5 && count_defect < 0.1,
        format!("Dirac critical {dirac_err:.2e}, Hill t_2n² {hill_err:.2e}, root-count defect {count_defect:.2e}"),
    )
}

/// Midpoint sequences `t_{−10..10}` of 50 rescaled sampled potentials.
fn borg_sequences() -> (Outcome, Vec<Vec<f64>>) {
    let ens = importance_ensemble(50, &GibbsParams::kdv(1.0, 5.0, 16), 5).unwrap();
    let mut violations = 0;
    let mut hypotheses = 0;
    let mut worst: f64 = 0.0;
    let mut sequences = Vec::new();
    for s in &ens.samples {
        let q = hill::rescale_to_borg(s, 0.45).unwrap();
        let data = hill::hill_periodic_spectrum(&q, 110.0, hill::DEFAULT_TOL).unwrap();
        let r = hill::borg_check(&q, &data, 10).unwrap();
        hypotheses += usize::from(r.hypotheses_hold);
        violations += r.violations.len();
        worst = worst.max(r.max_deviation);
        sequences.push(data.two_sided(10).unwrap());
    }
    (
        (
            hypotheses == 50 && violations == 0,
            format!("{hypotheses}/50 satisfy the hypotheses, {violations} violations, max |t_n − n| = {worst:.4}"),
        ),
        sequences,
    )
}

fn criterion_6(sequences: &[Vec<f64>]) -> Outcome {
    let family = frame_family(hill::FRAME_FAMILY_SIZE, hill::FRAME_FAMILY_SEED);
    let mut lower = f64::INFINITY;
    let mut ordered = true;
    let mut scale_err: f64 = 0.0;
    for t in sequences {
        let est = frame_bounds_estimate(t, &family).unwrap();
        lower = lower.min(est.lower);
        ordered &= est.lower <= est.upper;
        for probe in &family {
            let r = frame_ratio(t, |x| probe.eval(x), probe.norm_sq());
            for c in [1e-3, 0.5, 7.0] {
                let rc = frame_ratio(t, |x| probe.eval(x) * c, probe.norm_sq() * c * c);
                scale_err = scale_err.max((rc - r).abs());
            }
        }
    }
    (
        lower > 0.0 && ordered && scale_err < 1e-10,
        format!("min A_est = {lower:.4}, A <= B on all, scaling defect {scale_err:.1e}"),
    )
}

fn criterion_7(ens: &GibbsEnsemble) -> Outcome {
    let n = ens.len() as f64;
    let mut worst_z: f64 = 0.0;
    for k in (-10i64..=10).filter(|&k| k != 0) {
        for part in [0, 1] {
            let xs: Vec<f64> = ens
                .samples
                .iter()
                .map(|s| if part == 0 { s.coeff(k).re } else { s.coeff(k).im })
                .collect();
            let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
            let target = 1.0 / (k * k) as f64;
            let se = target * (2.0 / n).sqrt();
            worst_z = worst_z.max((var - target).abs() / se);
        }
    }
    let norms: Vec<f64> = ens.samples.iter().map(|s| s.l2_norm_sq()).collect();
    let mean = norms.iter().sum::<f64>() / n;
    let sd = (norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let exact = 4.0 * (1..=10).map(|k| 1.0 / (k * k) as f64).sum::<f64>();
    let z = (mean - exact).abs() / (sd / n.sqrt());
    (
        worst_z < 4.0 && z < 3.0 && (exact - 6.19907).abs() < 1e-5,
        format!("max per-mode variance deviation {worst_z:.2} SE; mean ‖φ‖² = {mean:.5} vs {exact:.5} ({z:.2} SE)"),
    )
}

fn criterion_8(gauss: &GibbsEnsemble) -> Outcome {
    let grid = parse_grid("-2:2:41").unwrap();
    let sample = collect_statistic(gauss, &Statistic::parse("coord:a1").unwrap()).unwrap();
    let fit_of = |s: &nls_gibbs::concentration::StatisticSample| {
        let curve = empirical_log_mgf(s, &standardized_grid(s, &grid), 200, 8).unwrap();
        subgaussian_fit(&curve, None)
    };
    let base = fit_of(&sample);
    let mut homog: f64 = 0.0;
    for c in [0.2, 3.0] {
        let f = fit_of(&sample.scaled(c));
        homog = homog.max((f.fitted_eta / (c * c) - base.fitted_eta).abs());
    }

    let params = GibbsParams::nls(4.0, -1.0, 1.0, 4);
    let ens = importance_ensemble(150, &params, 88).unwrap();
    let cp = ConvexityParams::defaults(4.0, params.cutoff).unwrap();
    let lsi = lsi_lower_bound(params.beta, params.p, params.ball_radius, None, &cp, Functional::GN.paper_bound(&cp));
    let options = ConcentrationOptions {
        lsi: Some(lsi),
        pair_count: 2000,
        ..ConcentrationOptions::default()
    };
    let mut passes = 0;
    let specs = [
        "dirac:critical:lorentzian:c=3:M=3",
        "dirac:critical:gaussian_cos:a=1:M=3",
        "hill:midpoint:lorentzian:c=3:M=3",
        "hill:midpoint:gaussian_cos:a=1:M=3",
    ];
    let mut worst_envelope: f64 = 0.0;
    let mut log_bound = f64::INFINITY;
    for spec in specs {
        let s = collect_statistic(&ens, &Statistic::parse(spec).unwrap()).unwrap();
        let r = concentration_report(&ens, &s, &options).unwrap();
        passes += usize::from(r.subgaussian_pass && r.convex);
        worst_envelope = worst_envelope.max(r.envelope_eta);
        log_bound = log_bound.min(r.lsi_log_predicted_eta.unwrap_or(f64::INFINITY));
    }
    (
        (0.4..=0.6).contains(&base.fitted_eta) && passes == specs.len() && homog < 1e-6,
        format!(
            "Gaussian η = {:.4}; spectral statistics pass {passes}/{} (max envelope η {worst_envelope:.3e}, \
             log LSI bound >= {log_bound:.3e}); homogeneity defect {homog:.1e}",
            base.fitted_eta,
            specs.len()
        ),
    )
}

fn smooth_field(m: usize) -> PeriodicField {
    PeriodicField::from_fn(m, |n| {
        let s = 0.3 / (1.0 + (n * n) as f64);
        Complex64::new(s * (0.7 * n as f64).cos(), s * (1.3 * n as f64).sin())
    })
}

fn criterion_9() -> Outcome {
    let u0 = importance_ensemble(1, &GibbsParams::nls(4.0, -1.0, 1.0, 32), 9).unwrap().samples[0].clone();
    let unit = FlowParams::new(4.0, -1.0, 1e-4, 1.0, 32).unwrap();
    let cons = conservation_check(&trajectory(&u0, &unit, 500).unwrap()).unwrap();
    let there = split_step_evolve(&u0, &unit).unwrap();
    let back = evolve_backward(&there, &unit).unwrap();
    let reversal = distance(&back, &u0.with_cutoff(back.cutoff()));

    let smooth = smooth_field(8);
    let run = |dt: f64| split_step_evolve(&smooth, &FlowParams::new(4.0, -1.0, dt, 0.5, 8).unwrap()).unwrap();
    let reference = run(1e-2 / 256.0);
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3, 1.25e-3].iter().map(|&dt| distance(&run(dt), &reference)).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));

    let iso_field = importance_ensemble(1, &GibbsParams::nls(4.0, -1.0, 1.0, 8), 19).unwrap().samples[0].clone();
    let study = isospectral_refinement(&iso_field, 2.0, 0.5, &REFINEMENT_LEVELS, [-4.3, 4.3]).unwrap();
    let drifts: Vec<String> = study.levels.iter().map(|l| format!("{:.1e}", l.drift)).collect();

    let ens = importance_ensemble(150, &GibbsParams::nls(4.0, -1.0, 1.0, 4), 29).unwrap();
    let obs = ["l2", "V:p=4", "stat:lorentzian"].map(|s| Statistic::parse(s).unwrap());
    let inv = invariance_check(&ens, &FlowParams::new(4.0, -1.0, 1e-3, 0.5, 4).unwrap(), &obs, PERMUTATIONS, 31).unwrap();
    let ks: Vec<String> = inv
        .observables
        .iter()
        .map(|o| format!("{} {:.3}<={:.3}", o.observable, o.split_ks, o.null_band))
        .collect();
    let ratio_txt: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    (
        cons.n_drift < 1e-8
            && cons.h_drift < 1e-6
            && order_ok
            && reversal < 1e-7
            && study.monotone
            && inv.all_within_band
            && inv.blow_ups == 0,
        format!(
            "L² drift {:.1e}, H drift {:.1e}; Strang ratios [{}]; reversal {reversal:.1e}; \
             isospectral drift [{}]; KS [{}]",
            cons.n_drift,
            cons.h_drift,
            ratio_txt.join(", "),
            drifts.join(" > "),
            ks.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let gp = GibbsParams::nls(4.0, -1.0, 1.0, 8);
    let ens = importance_ensemble(50, &gp, 10).unwrap();
    let cp = ConvexityParams::defaults(4.0, 8).unwrap();
    let model = Model {
        p: 4.0,
        beta: -1.0,
        ball_radius: 1.0,
        holder_k: 5.0,
    };
    let mut certified = 0;
    let mut worst = f64::INFINITY;
    for s in &ens.samples {
        let r = certify_convexity(Functional::GN, s, NormWeight::H1, &model, &cp).unwrap();
        certified += usize::from(r.certified);
        worst = worst.min(r.min_eigenvalue);
    }
    let free = Model { beta: 0.0, ..model };
    let kinetic = certify_convexity(Functional::H, &ens.samples[0], NormWeight::H1, &free, &cp).unwrap();
    (
        certified == 50 && kinetic.certified && kinetic.min_eigenvalue == 1.0,
        format!(
            "G_N certified on {certified}/50 (min eigenvalue {worst:.4} vs bound {}); kinetic min eigenvalue {}",
            Functional::GN.paper_bound(&cp),
            kinetic.min_eigenvalue
        ),
    )
}

fn pipeline_json() -> String {
    let params = GibbsParams::nls(4.0, -1.0, 1.0, 4);
    let ens = importance_ensemble(60, &params, 1234).unwrap();
    let mut out = Vec::new();
    write_jsonl(&ens, &mut out).unwrap();
    let stat = Statistic::parse("dirac:critical:lorentzian:c=3:M=2").unwrap();
    let s = collect_statistic(&ens, &stat).unwrap();
    let report = concentration_report(&ens, &s, &ConcentrationOptions::default()).unwrap();
    let q = hill::rescale_to_borg(&importance_ensemble(1, &GibbsParams::kdv(1.0, 5.0, 8), 7).unwrap().samples[0], 0.4).unwrap();
    let data = hill::hill_periodic_spectrum(&q, 40.0, hill::DEFAULT_TOL).unwrap();
    format!(
        "{}{}{}",
        String::from_utf8(out).unwrap(),
        serde_json::to_string(&report).unwrap(),
        serde_json::to_string(&data).unwrap()
    )
}

fn criterion_11() -> Outcome {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(pipeline_json)
    };
    let (one, eight) = (run(1), run(8));
    (one == eight, format!("{} bytes, identical = {}", one.len(), one == eight))
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let (ok, detail) = run();
        failures += usize::from(!ok);
        println!(
            "criterion {n:>2} {:<4} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "free Dirac discriminant", &mut criterion_1);
    report(2, "free Hill spectrum", &mut criterion_2);
    report(3, "Hessian formula", &mut criterion_3);
    report(4, "contour vs direct statistics", &mut criterion_4);
    let mut sequences = Vec::new();
    report(5, "Borg sampling property", &mut || {
        let (outcome, seqs) = borg_sequences();
        sequences = seqs;
        outcome
    });
    report(6, "frame bounds", &mut || criterion_6(&sequences));
    let gauss = importance_ensemble(100_000, &GibbsParams::nls(4.0, 0.0, 1e9, 10), 7).unwrap();
    report(7, "Gibbs sampler calibration", &mut || criterion_7(&gauss));
    report(8, "concentration", &mut || criterion_8(&gauss));
    drop(gauss);
    report(9, "flow", &mut criterion_9);
    report(10, "convexity certification", &mut criterion_10);
    report(11, "determinism", &mut criterion_11);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
