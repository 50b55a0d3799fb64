//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Each criterion recomputes its quantity from the library primitives and compares
//! it against a closed form or an identity, never against numbers stored elsewhere.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;
use strichlab::cli::{run_sweep, write_sweep, Experiment, ExperimentConfig};
use strichlab::field::{make_grid, sample, ClosedForm, SampledField};
use strichlab::hamflow::{check_lemh, default_steps, flow, flow_det, scaled_det};
use strichlab::norms::{amalgam_norm_with, RowSampling};
use strichlab::potentials::{compute_t1, constant_m, LemmaConstants, Potential, PotentialSpec};
use strichlab::propagate::{free_prop, stark_prop, FlowStepping, Parametrix};
use strichlab::stft::{adjoint_stft, evolved_window, stft, stft_at, Window};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn seeded(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    r.set_stream(stream);
    r
}

fn normalized(n: usize, l: f64, c: f64, s: f64, k: f64) -> SampledField {
    let g = make_grid(1, n, l).unwrap();
    sample(&g, &ClosedForm::normalized(vec![c], s, vec![k])).unwrap()
}

/// 50 modulated Gaussians with random centers, widths, momenta and amplitudes.
fn gaussian_class(n: usize) -> Vec<SampledField> {
    let grid = make_grid(1, n, 32.0).unwrap();
    let mut rng = seeded(1);
    (0..50)
        .map(|_| {
            let form = ClosedForm::modulated(rng.gen_range(-3.0..3.0), rng.gen_range(0.6..2.0), rng.gen_range(-3.0..3.0))
                .with_amplitude(Complex64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI)));
            sample(&grid, &form).unwrap()
        })
        .collect()
}

/// ‖u‖_{W(ℱL^1, L^∞)} for u = A e^{-a y²/2} with ‖u‖₂ = 1 and the unit Gaussian window.
fn gaussian_sup_l1(a: Complex64) -> f64 {
    let c = 1.0 / (1.0 + a);
    (a.re / PI).powf(0.25) * PI.powf(-0.25) * 2.0 * PI * c.norm().sqrt() / c.re.sqrt()
}

fn c1_plancherel() -> Outcome {
    let start = Instant::now();
    let fs = gaussian_class(1024);
    let g = Window::gaussian();
    let gnorm = g.sampled(fs[0].grid()).norm_l2();
    let mut worst: f64 = 0.0;
    for f in &fs {
        let v = stft(f, &g).unwrap();
        let expect = (2.0 * PI).sqrt() * gnorm * f.norm_l2();
        worst = worst.max((v.norm_l2() / expect - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-8 && secs < 10.0, format!("max rel err {worst:.3e} (tol 1e-8), {secs:.2} s at N = 1024 (limit 10 s)"))
}

fn c2_inversion() -> Outcome {
    let g = Window::gaussian();
    let mut worst: f64 = 0.0;
    for f in gaussian_class(1024) {
        let back = adjoint_stft(&stft(&f, &g).unwrap(), &g).unwrap();
        worst = worst.max(back.rel_l2_error(&f).unwrap());
    }
    outcome(worst <= 1e-8, format!("max ‖V*Vf - f‖/‖f‖ = {worst:.3e} (tol 1e-8)"))
}

fn c3_free_covariance() -> Outcome {
    // V_{g(t)}(U(t)f)(x, ξ) = e^{-itξ²/2} V_g f(x - tξ, ξ) on a node subset
    let f = normalized(1024, 32.0, 0.5, 1.0, 1.0);
    let g = Window::gaussian();
    let mut worst: f64 = 0.0;
    for t in [0.05, 0.1, 0.2, 0.3] {
        let u = free_prop(&f, t).unwrap();
        let gt = evolved_window(&g, t).unwrap();
        for i in 0..41 {
            for j in 0..41 {
                let x = -6.0 + 0.3 * i as f64;
                let xi = -5.0 + 0.25 * j as f64;
                let lhs = stft_at(&u, &gt, &[x], &[xi]);
                let rhs = Complex64::from_polar(1.0, -t * xi * xi / 2.0) * stft_at(&f, &g, &[x - t * xi], &[xi]);
                worst = worst.max((lhs - rhs).norm());
            }
        }
    }
    outcome(worst <= 1e-6, format!("max abs deviation {worst:.3e} over t in {{0.05, 0.1, 0.2, 0.3}} (tol 1e-6)"))
}

fn c4_stark_covariance() -> Outcome {
    let f = normalized(1024, 32.0, 0.5, 1.0, 1.0);
    let g = Window::gaussian();
    let rows = RowSampling::exact().with_continuous_sup(true);
    let mut worst: f64 = 0.0;
    for e in [0.5, 2.0] {
        for t in [0.1, 0.3] {
            let a = amalgam_norm_with(&stark_prop(&f, t, e).unwrap(), f64::INFINITY, 1.0, &g, &rows).unwrap();
            let b = amalgam_norm_with(&free_prop(&f, t).unwrap(), f64::INFINITY, 1.0, &g, &rows).unwrap();
            worst = worst.max((a - b).abs() / b);
        }
    }
    outcome(worst <= 1e-6, format!("max relative W^(inf,1) gap {worst:.3e} (tol 1e-6)"))
}

fn c5_liouville() -> Outcome {
    let mut rng = seeded(2);
    let seeds: Vec<(f64, f64)> = (0..1000).map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect();
    let pots = Potential::builtins();
    let mut worst: f64 = 0.0;
    for p in &pots {
        for t in [0.25, 0.5, 1.0] {
            let steps = default_steps(p, t);
            for &(x, xi) in &seeds {
                worst = worst.max((flow_det(&flow(p, t, x, xi, steps).unwrap()) - 1.0).abs());
            }
        }
    }
    let names: Vec<&str> = pots.iter().map(|p| p.name()).collect();
    outcome(worst <= 1e-8, format!("max |det J - 1| = {worst:.3e} on 1000 seeds x [{}] x 3 times (tol 1e-8)", names.join(", ")))
}

fn c6_separation() -> Outcome {
    let mut rng = seeded(3);
    let tuples: Vec<[f64; 4]> = (0..10_000).map(|_| [0; 4].map(|_: u8| rng.gen_range(-5.0..5.0))).collect();
    let mut parts = Vec::new();
    let mut total = 0;
    for p in [Potential::zero(), Potential::harmonic(), Potential::cosine()] {
        let t1 = compute_t1(constant_m(&p, 1));
        let rep = check_lemh(&p, 0.9 * t1, &tuples).unwrap();
        total += rep.violations();
        parts.push(format!("{} T1={t1:.4} viol={}", p.name(), rep.violations()));
    }
    outcome(total == 0, format!("{} on 10^4 tuples", parts.join("; ")))
}

fn c7_determinant() -> Outcome {
    let mut rng = seeded(4);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in Potential::builtins() {
        let t2 = LemmaConstants::of(&p, 1).t2;
        for _ in 0..1000 {
            let (x, xi, t) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-t2..=t2));
            let d = scaled_det(&p, t, x, xi, default_steps(&p, t)).unwrap();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    let h = Potential::harmonic();
    let gap = (scaled_det(&h, 0.3, 0.2, 1.1, 20_000).unwrap() - 0.3f64.sin() / 0.3).abs();
    let pass = lo >= 0.5 - 1e-6 && hi <= 2.0 + 1e-6 && gap <= 1e-8;
    outcome(pass, format!("range [{lo:.6}, {hi:.6}] over 1000 samples x 6 builtins; harmonic |det - sin t/t| = {gap:.3e} at t = 0.3"))
}

fn c8_dispersive() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(Some(Experiment::Dispersive));
    let out = run_sweep(&cfg, Experiment::Dispersive).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut pass = secs < 120.0;
    let mut parts = Vec::new();
    for s in &out.summaries {
        let slope = s.values["slope"];
        pass &= (slope + 1.0).abs() <= 0.15;
        parts.push(format!("{} slope {slope:.4}", s.cell.trim_start_matches("summary/")));
    }
    pass &= out.summaries.len() == 2;
    // the sampled free norms agree with the Gaussian closed form
    let sigma = cfg.data.sigma;
    let mut closed: f64 = 0.0;
    for r in out.records.iter().filter(|r| r.parameters["propagator"] == "free") {
        let t = r.parameters["t"].as_f64().unwrap();
        let a = 1.0 / Complex64::new(sigma * sigma, t);
        closed = closed.max((r.values["norm"] / gaussian_sup_l1(a) - 1.0).abs());
    }
    pass &= closed <= 1e-4;
    outcome(pass, format!("{}; free vs closed form {closed:.2e}; {secs:.1} s (limit 120 s)", parts.join(", ")))
}

fn c9_exactness() -> Outcome {
    let f = normalized(1024, 32.0, 0.5, 1.0, 1.0);
    let mut worst: f64 = 0.0;
    for t in [0.05, 0.1] {
        let u = Parametrix::new(Potential::zero()).u0(&f, t).unwrap();
        worst = worst.max(u.rel_l2_error(&free_prop(&f, t).unwrap()).unwrap());
        let u = Parametrix::new(Potential::stark(1.0)).u0(&f, t).unwrap();
        worst = worst.max(u.rel_l2_error(&stark_prop(&f, t, 1.0).unwrap()).unwrap());
    }
    outcome(worst <= 1e-6, format!("max ‖U0 f - U f‖/‖f‖ = {worst:.3e} for zero, stark(1) (tol 1e-6)"))
}

fn c10_defect() -> Outcome {
    let p = Parametrix::new(Potential::harmonic()).with_horizon(0.25).with_stepping(FlowStepping::Fixed(400));
    let f = normalized(1024, 32.0, 0.5, 1.0, 1.0);
    let c = p.defect_check(&f, 0.1, 0.02, 0.01).unwrap();
    let coarse = normalized(512, 32.0, 0.5, 1.0, 1.0);
    let d512 = p.defect(&coarse, 0.1).unwrap().norm_l2() / coarse.norm_l2();
    let drift = (c.defect_norm - d512).abs() / d512;
    let pass = c.order >= 1.8 && drift < 0.1 && c.defect_norm > 0.0;
    outcome(pass, format!("order {:.4} (min 1.8); ‖Rf‖/‖f‖ {d512:.6e} -> {:.6e}, drift {drift:.2e}", c.order, c.defect_norm))
}

fn c11_duhamel() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, pot) in [("harmonic", Potential::harmonic()), ("cosine", Potential::cosine())] {
        let p = Parametrix::new(pot.clone());
        let p = p.clone().with_horizon(p.horizon().max(0.2));
        let r0 = p.duhamel_residual(&normalized(1024, 32.0, 0.5, 1.0, 1.0), 0.2, 32, 2e-4).unwrap();
        let r1 = p.with_flow_level(1).duhamel_residual(&normalized(2048, 32.0, 0.5, 1.0, 1.0), 0.2, 64, 1e-4).unwrap();
        let ratio = r0.residual / r1.residual;
        pass &= ratio >= 3.0;
        parts.push(format!("{name} {:.3e} -> {:.3e} (x{ratio:.2})", r0.residual, r1.residual));
    }
    outcome(pass, format!("{}; need x3", parts.join("; ")))
}

fn c12_strichartz() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let one_d = [PotentialSpec::Zero, PotentialSpec::Harmonic];
    let mut runs = Vec::new();
    for spec in one_d {
        let mut cfg = ExperimentConfig::defaults(Some(Experiment::Strichartz));
        cfg.potential = spec;
        runs.push(cfg);
    }
    let mut cfg = ExperimentConfig::defaults(Some(Experiment::Strichartz));
    cfg.grid.dim = 2;
    cfg.grid.points = 32;
    cfg.grid.half_width = 6.0;
    cfg.time.horizon = 0.25;
    cfg.family.sigmas = vec![0.8, 0.85];
    cfg.family.momenta = vec![0.0, 0.3];
    cfg.pairs.list.clear();
    cfg.pairs.endpoint = true;
    runs.push(cfg);
    for cfg in &runs {
        let out = run_sweep(cfg, Experiment::Strichartz).unwrap();
        for s in &out.summaries {
            let (max, drift) = (s.values["max"], s.values["worst_drift"]);
            pass &= max < 1e6 && drift < 0.1;
            parts.push(format!("{}{} max {max:.3} drift {drift:.1e}", s.parameters["propagator"].as_str().unwrap_or("?"), s.cell.trim_start_matches("summary/")));
        }
    }
    pass &= parts.len() == 7;
    outcome(pass, parts.join("; "))
}

fn c13_determinism() -> Outcome {
    let mut cfgs = Vec::new();
    let mut s = ExperimentConfig::defaults(Some(Experiment::Strichartz));
    s.family.sigmas = vec![0.5, 1.0];
    s.family.momenta = vec![0.0, 2.0];
    s.pairs.list = vec![[4.0, 8.0]];
    cfgs.push((Experiment::Strichartz, s));
    cfgs.push((Experiment::Duhamel, ExperimentConfig::defaults(Some(Experiment::Duhamel))));
    let mut l = ExperimentConfig::defaults(Some(Experiment::Lemmas));
    l.suite.forms = 4;
    l.suite.flow_seeds = 200;
    l.suite.tuples = 2000;
    l.suite.det_samples = 200;
    cfgs.push((Experiment::Lemmas, l));
    let mut pass = true;
    let mut parts = Vec::new();
    for (e, cfg) in cfgs {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            write_sweep(d.path(), &run_sweep(&cfg, e).unwrap(), &cfg).unwrap();
        }
        let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let same = names.len() == 4
            && names.iter().all(|n| std::fs::read(dirs[0].path().join(n)).unwrap() == std::fs::read(dirs[1].path().join(n)).unwrap());
        pass &= same;
        parts.push(format!("{} {} files {}", e.name(), names.len(), if same { "identical" } else { "DIFFER" }));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("stft plancherel", c1_plancherel),
        ("stft inversion", c2_inversion),
        ("free covariance", c3_free_covariance),
        ("stark covariance", c4_stark_covariance),
        ("liouville", c5_liouville),
        ("flow separation", c6_separation),
        ("scaled determinant", c7_determinant),
        ("dispersive slope", c8_dispersive),
        ("parametrix exactness", c9_exactness),
        ("defect identity", c10_defect),
        ("duhamel residual", c11_duhamel),
        ("strichartz quotients", c12_strichartz),
        ("determinism", c13_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {} [{:.1} s]", i + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
