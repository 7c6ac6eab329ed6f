//! Acceptance gate: the eight pass/fail criteria for this artifact, from
//! autodiff correctness to desk-scale reproduction of the published error
//! table. Each test prints exactly one `PASS criterion N` line on success;
//! any failure message starts with `FAIL criterion N`.
//!
//! With one test thread the suite runs in criterion order; the two training
//! criteria (3 and 4) share the rarefaction ensemble through a `OnceLock`.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use wpinn::net::{Activation, GradientBuffer, NetworkParams};
use wpinn::oracle::{
    exact_solution, fv_solve, relative_errors, ExperimentPreset, FVGrid, PresetId, ReferenceKind,
};
use wpinn::residual::kruzkhov_q;
use wpinn::sample::{SampleCounts, SobolState};
use wpinn::testfn::AnalyticTestFn;
use wpinn::train::{
    layer_widths, run_ensemble, EnsembleResult, LossWeighting, ResidualForm, SamplerKind, Trainer,
    TrainingConfig,
};
use wpinn::Point;

macro_rules! check {
    ($cond:expr, $n:expr, $($msg:tt)+) => {
        assert!($cond, "FAIL criterion {}: {}", $n, format!($($msg)+));
    };
}

fn pass(n: usize, detail: String) {
    println!("PASS criterion {n}: {detail}");
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// ---------------------------------------------------------------- criterion 1

/// Every (slot, layer) coordinate of a network, for exhaustive or sampled
/// parameter sweeps through the public accessors.
#[derive(Clone, Copy, Debug)]
enum Slot {
    Weight(usize, usize, usize),
    Bias(usize, usize),
}

fn all_slots(net: &NetworkParams) -> Vec<Slot> {
    let mut slots = Vec::new();
    for k in 0..net.widths().len() - 1 {
        let (fan_in, fan_out) = net.layer_dims(k);
        for r in 0..fan_out {
            for c in 0..fan_in {
                slots.push(Slot::Weight(k, r, c));
            }
            slots.push(Slot::Bias(k, r));
        }
    }
    slots
}

fn get_slot(net: &NetworkParams, s: Slot) -> f64 {
    match s {
        Slot::Weight(k, r, c) => net.weight(k, r, c),
        Slot::Bias(k, r) => net.bias(k, r),
    }
}

fn set_slot(net: &mut NetworkParams, s: Slot, v: f64) {
    match s {
        Slot::Weight(k, r, c) => net.set_weight(k, r, c, v),
        Slot::Bias(k, r) => net.set_bias(k, r, v),
    }
}

fn grad_slot(g: &GradientBuffer, net: &NetworkParams, s: Slot) -> f64 {
    match s {
        Slot::Weight(k, r, c) => g.weight(k, r, c, net.layer_dims(k).0),
        Slot::Bias(k, r) => g.bias(k, r),
    }
}

fn random_widths(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let depth = 1 + (rng.next_u64() % 4) as usize;
    let width = 1 + (rng.next_u64() % 20) as usize;
    let mut w = vec![2];
    w.extend(std::iter::repeat(width).take(depth));
    w.push(1);
    w
}

fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    if rng.next_u64() % 2 == 0 {
        Activation::Tanh
    } else {
        Activation::Sin
    }
}

#[test]
fn criterion_1_autodiff_property_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAD1F);
    let preset = ExperimentPreset::from_id(PresetId::MovingShock);
    let mut jets_checked = 0usize;
    let mut grads_checked = 0usize;

    for net_index in 0..200u64 {
        let widths_theta = random_widths(&mut rng);
        let act_theta = random_activation(&mut rng);
        let theta_seed = 90_000 + 7 * net_index;
        let theta = NetworkParams::init(&widths_theta, act_theta, theta_seed).unwrap();

        // --- forward-mode input partials vs central differences
        for _ in 0..3 {
            let x = 2.0 * unit(&mut rng) - 1.0;
            let t = 0.5 * unit(&mut rng);
            let jet = theta.forward_jet(Point::new(x, t));
            let h = 1e-5;
            let fdx = (theta.forward_value(Point::new(x + h, t))
                - theta.forward_value(Point::new(x - h, t)))
                / (2.0 * h);
            let fdt = (theta.forward_value(Point::new(x, t + h))
                - theta.forward_value(Point::new(x, t - h)))
                / (2.0 * h);
            for (ad, fd, name) in [(jet.dx, fdx, "dx"), (jet.dt, fdt, "dt")] {
                let scale = ad.abs().max(fd.abs());
                let rel = if scale > 1e-9 { (ad - fd).abs() / scale } else { 0.0 };
                check!(
                    rel < 1e-6,
                    1,
                    "net {net_index} {name} at ({x}, {t}): forward {ad} vs fd {fd} (rel {rel:.3e})"
                );
                jets_checked += 1;
            }
        }

        // --- full-loss parameter gradients, entropy and naive forms mixed
        let mut cfg = TrainingConfig::for_preset(&preset);
        cfg.widths_theta = widths_theta.clone();
        cfg.activation_theta = act_theta;
        cfg.widths_eta = random_widths(&mut rng);
        cfg.activation_eta = random_activation(&mut rng);
        cfg.counts = SampleCounts { interior: 16, temporal: 5, spatial: 4 };
        cfg.c_count = 3;
        cfg.collocation_seed = 500 + net_index;
        cfg.residual_form =
            if net_index % 4 == 3 { ResidualForm::NaiveWeak } else { ResidualForm::Entropy };
        let mut tr = Trainer::new(&cfg, &preset).unwrap();

        // pick an eta whose gate is comfortably open so the finite
        // differences stay on one side of the ReLU kink (non-kink points)
        let mut chosen = None;
        for s in 0..200 {
            let eta =
                NetworkParams::init(&cfg.widths_eta, cfg.activation_eta, theta_seed + 1000 + s)
                    .unwrap();
            let rep = tr.evaluate(&theta, &eta).unwrap();
            if rep.j_pde > 1e-3 && !rep.floored {
                chosen = Some(eta);
                break;
            }
        }
        let eta = match chosen {
            Some(e) => e,
            // a tiny theta net can keep the residual sum negative for every
            // probed eta; the gated path is then structurally zero and
            // plenty of other nets in the suite cover it
            None => continue,
        };
        let (_, gt, ge) = tr.gradients(&theta, &eta).unwrap();
        let (gt, ge) = (gt.clone(), ge.clone());

        let theta_slots = all_slots(&theta);
        let eta_slots = all_slots(&eta);
        let gmax_theta = theta_slots
            .iter()
            .map(|&s| grad_slot(&gt, &theta, s).abs())
            .fold(0.0f64, f64::max);
        let gmax_eta =
            eta_slots.iter().map(|&s| grad_slot(&ge, &eta, s).abs()).fold(0.0f64, f64::max);

        // sampled coordinates on each side (descent and ascent objectives)
        for probe in 0..8 {
            let s = theta_slots[(rng.next_u64() as usize + probe) % theta_slots.len()];
            let p0 = get_slot(&theta, s);
            let h = 1e-6 * p0.abs().max(1.0);
            let mut pert = theta.clone();
            set_slot(&mut pert, s, p0 + h);
            let up = tr.evaluate(&pert, &eta).unwrap().objective;
            set_slot(&mut pert, s, p0 - h);
            let dn = tr.evaluate(&pert, &eta).unwrap().objective;
            let fd = (up - dn) / (2.0 * h);
            let g = grad_slot(&gt, &theta, s);
            check!(
                (fd - g).abs() <= 1e-4 * gmax_theta.max(1.0),
                1,
                "net {net_index} theta slot {s:?}: analytic {g} vs fd {fd}"
            );
            grads_checked += 1;
        }
        for probe in 0..8 {
            let s = eta_slots[(rng.next_u64() as usize + probe) % eta_slots.len()];
            let p0 = get_slot(&eta, s);
            let h = 1e-6 * p0.abs().max(1.0);
            let mut pert = eta.clone();
            set_slot(&mut pert, s, p0 + h);
            let up = tr.evaluate(&theta, &pert).unwrap().j_pde;
            set_slot(&mut pert, s, p0 - h);
            let dn = tr.evaluate(&theta, &pert).unwrap().j_pde;
            let fd = (up - dn) / (2.0 * h);
            let g = grad_slot(&ge, &eta, s);
            check!(
                (fd - g).abs() <= 1e-4 * gmax_eta.max(1.0),
                1,
                "net {net_index} eta slot {s:?}: analytic {g} vs fd {fd}"
            );
            grads_checked += 1;
        }
    }

    let elapsed = started.elapsed();
    check!(elapsed.as_secs() < 60, 1, "took {elapsed:.1?}, budget is one minute");
    pass(
        1,
        format!(
            "200 nets, {jets_checked} jet partials at rel 1e-6, {grads_checked} loss-gradient \
             coordinates at rel 1e-4, {elapsed:.1?}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_entropy_inequality_sanity() {
    let started = Instant::now();
    let preset = ExperimentPreset::from_id(PresetId::MovingShock);
    let (a, b) = preset.domain();
    let t_end = preset.t_final();
    // center x = 0.25 in physical coordinates = 0.625 on the rescaled unit
    // interval; the mollifier is built in rescaled space
    let phi = AnalyticTestFn::new(0.625, 0.25, 0.1, t_end).unwrap();

    let n = 400usize;
    let dx = (b - a) / n as f64;
    let dt = t_end / n as f64;
    // midpoint tensor grid, solution and test-function jets hoisted out of
    // the c loop
    let mut samples = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = a + (i as f64 + 0.5) * dx;
        for j in 0..n {
            let t = (j as f64 + 0.5) * dt;
            let u = exact_solution(&preset, x, t).unwrap();
            let jet = phi.eval_on_domain((a, b), x, t);
            samples.push((u, jet));
        }
    }

    let mut worst = f64::NEG_INFINITY;
    let mut worst_c = 0.0;
    for k in 0..10 {
        let c = -0.1 + 1.2 * k as f64 / 9.0;
        let mut acc = 0.0;
        for &(u, jet) in &samples {
            acc += (u - c).abs() * jet.dt + kruzkhov_q(preset.flux(), u, c) * jet.dx;
        }
        let r = -(acc * dx * dt);
        if r > worst {
            worst = r;
            worst_c = c;
        }
        check!(
            r <= 0.02,
            2,
            "entropy residual at c = {c}: R = {r:.5} exceeds +0.02 quadrature slack"
        );
    }

    let elapsed = started.elapsed();
    check!(elapsed.as_secs() < 60, 2, "took {elapsed:.1?}, budget is one minute");
    pass(
        2,
        format!(
            "moving-shock R <= +0.02 on all 10 entropy constants (worst {worst:.4} at c = \
             {worst_c:.2}), 400x400 grid, {elapsed:.1?}"
        ),
    );
}

// ------------------------------------------------------------ criteria 3 & 4

/// Desk-scale training budget: winning-range hyperparameters from the
/// published grids, reduced collocation budgets, five retrainings.
fn desk_config(preset: &ExperimentPreset) -> TrainingConfig {
    let mut cfg = TrainingConfig::for_preset(preset);
    cfg.widths_theta = layer_widths(4, 20);
    cfg.widths_eta = layer_widths(2, 10);
    cfg.activation_eta = Activation::Tanh;
    cfg.n_max = 8;
    cfg.reset_ratio = 0.025;
    // the published table was produced with the data term scaled up
    cfg.weighting = LossWeighting::ScaleBoundary;
    if preset.id() == PresetId::SineWave {
        cfg.epochs = 20_000;
        cfg.sampler = SamplerKind::Sobol;
        cfg.counts = SampleCounts { interior: 4096, temporal: 1024, spatial: 1024 };
    } else {
        cfg.epochs = 5_000;
        cfg.counts = SampleCounts { interior: 2048, temporal: 512, spatial: 512 };
    }
    cfg
}

const DESK_N_THETA: usize = 5;

fn average_error(runs: &[wpinn::train::TrainedModel], preset: &ExperimentPreset) -> (f64, f64) {
    let avg = |x: f64, t: f64| runs.iter().map(|r| r.predict(x, t)).sum::<f64>() / runs.len() as f64;
    let reference = if preset.has_closed_form() {
        ReferenceKind::Exact
    } else {
        ReferenceKind::FiniteVolume { n_cells: 16384, cfl: 0.5 }
    };
    relative_errors(&avg, preset, reference, 2048).unwrap()
}

fn rarefaction_entropy_ensemble() -> &'static EnsembleResult {
    static SHARED: OnceLock<EnsembleResult> = OnceLock::new();
    SHARED.get_or_init(|| {
        let preset = ExperimentPreset::from_id(PresetId::Rarefaction);
        run_ensemble(&desk_config(&preset), &preset, DESK_N_THETA, 1).unwrap()
    })
}

#[test]
fn criterion_3_error_table_reproduction_desk_scale() {
    // budget from the criterion: 30 core-minutes x 8 for each shock preset,
    // 2 core-hours x 8 for the sine wave
    let shock_budget = 240.0 * 60.0;
    let sine_budget = 960.0 * 60.0;
    let mut details = Vec::new();

    for (id, bound) in [
        (PresetId::StandingShock, 0.05),
        (PresetId::MovingShock, 0.06),
        (PresetId::Rarefaction, 0.07),
    ] {
        let preset = ExperimentPreset::from_id(id);
        let started = Instant::now();
        let owned;
        let result: &EnsembleResult = if id == PresetId::Rarefaction {
            rarefaction_entropy_ensemble()
        } else {
            owned = run_ensemble(&desk_config(&preset), &preset, DESK_N_THETA, 1).unwrap();
            &owned
        };
        let elapsed = started.elapsed();
        let (e_r_t, _e_r) = average_error(&result.runs, &preset);
        check!(
            e_r_t <= bound,
            3,
            "{}: ensemble-average relative error at final time {e_r_t:.4} exceeds {bound}",
            id.name()
        );
        check!(
            elapsed.as_secs_f64() <= shock_budget,
            3,
            "{}: {elapsed:.0?} exceeds the 240 core-minute budget",
            id.name()
        );
        details.push(format!(
            "{} E_r^T = {e_r_t:.3} (<= {bound}{})",
            id.name(),
            if result.diverged.is_empty() {
                String::new()
            } else {
                format!(", {} diverged", result.diverged.len())
            }
        ));
    }

    let preset = ExperimentPreset::from_id(PresetId::SineWave);
    let started = Instant::now();
    let result = run_ensemble(&desk_config(&preset), &preset, DESK_N_THETA, 1).unwrap();
    let elapsed = started.elapsed();
    let (_e_r_t, e_r) = average_error(&result.runs, &preset);
    check!(e_r <= 0.10, 3, "sine: ensemble-average space-time error {e_r:.4} exceeds 0.10");
    check!(
        elapsed.as_secs_f64() <= sine_budget,
        3,
        "sine: {elapsed:.0?} exceeds the 16 core-hour budget"
    );
    details.push(format!("sine E_r = {e_r:.3} (<= 0.10)"));

    pass(3, details.join(", "));
}

#[test]
fn criterion_4_entropy_selection_dichotomy() {
    let preset = ExperimentPreset::from_id(PresetId::Rarefaction);
    let t_end = preset.t_final();
    let (a, b) = preset.domain();

    // L1 distance at final time between an ensemble average and a candidate
    // profile, midpoint quadrature
    let l1 = |runs: &[wpinn::train::TrainedModel], target: &dyn Fn(f64) -> f64| {
        let n = 4000;
        let dx = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = a + (i as f64 + 0.5) * dx;
            let avg = runs.iter().map(|r| r.predict(x, t_end)).sum::<f64>() / runs.len() as f64;
            acc += (avg - target(x)).abs() * dx;
        }
        acc
    };
    let fan = |x: f64| exact_solution(&preset, x, t_end).unwrap();
    // the non-entropic competitor: the initial jump frozen in place, a valid
    // weak solution whose characteristics emanate from the shock
    let frozen_jump = |x: f64| preset.u0(x);

    let entropy = rarefaction_entropy_ensemble();
    let d_fan_entropy = l1(&entropy.runs, &fan);
    let d_jump_entropy = l1(&entropy.runs, &frozen_jump);
    check!(
        d_fan_entropy < d_jump_entropy,
        4,
        "entropy residual: distance to rarefaction {d_fan_entropy:.4} not below distance to \
         non-entropic shock {d_jump_entropy:.4}"
    );

    let mut naive_cfg = desk_config(&preset);
    naive_cfg.residual_form = ResidualForm::NaiveWeak;
    let naive = run_ensemble(&naive_cfg, &preset, DESK_N_THETA, 1).unwrap();
    let d_fan_naive = l1(&naive.runs, &fan);
    let d_jump_naive = l1(&naive.runs, &frozen_jump);
    check!(
        d_jump_naive < d_fan_naive,
        4,
        "naive residual: distance to non-entropic shock {d_jump_naive:.4} not below distance to \
         rarefaction {d_fan_naive:.4}"
    );

    pass(
        4,
        format!(
            "entropy picks the fan ({d_fan_entropy:.3} < {d_jump_entropy:.3}), naive picks the \
             frozen jump ({d_jump_naive:.3} < {d_fan_naive:.3})"
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_fv_reference_quality() {
    let preset = ExperimentPreset::from_id(PresetId::Rarefaction);
    let t_end = preset.t_final();
    let (a, b) = preset.domain();

    // per-step conservation and max principle, checked on every single step
    let mut grid = FVGrid::new(&preset, 512).unwrap();
    let mut steps = 0usize;
    while grid.time() < t_end {
        let mass_before = grid.mass();
        let info = grid.advance(&preset, 0.5, t_end);
        let expected = mass_before + info.dt * (info.influx - info.outflux);
        let drift = (grid.mass() - expected).abs();
        check!(drift <= 1e-13, 5, "step {steps}: conservation drift {drift:.3e}");
        for &v in grid.values() {
            check!(
                (-1.0 - 1e-14..=1.0 + 1e-14).contains(&v),
                5,
                "step {steps}: cell value {v} violates the max principle"
            );
        }
        steps += 1;
        check!(steps < 100_000, 5, "time stepping stalled");
    }

    // L1 convergence against the exact fan, 5-point Gauss per cell
    let gauss_x = [
        -0.906179845938664,
        -0.538469310105683,
        0.0,
        0.538469310105683,
        0.906179845938664,
    ];
    let gauss_w = [
        0.236926885056189,
        0.478628670499366,
        0.568888888888889,
        0.478628670499366,
        0.236926885056189,
    ];
    let resolutions = [256usize, 512, 1024, 2048, 4096, 8192];
    let mut errors = Vec::new();
    for &n in &resolutions {
        let g = fv_solve(&preset, n, 0.5, t_end).unwrap();
        let dx = (b - a) / n as f64;
        let mut e = 0.0;
        for i in 0..n {
            let xc = g.center(i);
            let ui = g.values()[i];
            for q in 0..5 {
                let x = xc + 0.5 * dx * gauss_x[q];
                e += 0.5 * dx * gauss_w[q] * (ui - exact_solution(&preset, x, t_end).unwrap()).abs();
            }
        }
        errors.push(e);
    }
    let mut ratios = Vec::new();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        check!(
            (1.6..=2.4).contains(&ratio),
            5,
            "L1 error ratio per doubling {ratio:.3} outside [1.6, 2.4] (errors {errors:?})"
        );
        ratios.push(format!("{ratio:.2}"));
    }
    let e4096 = errors[4];
    check!(e4096 < 0.01, 5, "L1 error at 4096 cells is {e4096:.4}, bound 0.01");

    pass(
        5,
        format!(
            "ratios [{}] within [1.6, 2.4], L1@4096 = {e4096:.5}, conservation and max principle \
             held over {steps} steps",
            ratios.join(", ")
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_lemma_property_sweeps() {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_wpinn"))
        .arg("check-lemmas")
        .output()
        .expect("binary should launch");
    let elapsed = started.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    check!(
        out.status.success(),
        6,
        "check-lemmas exited with {:?}\n{stdout}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    let passes = stdout.lines().filter(|l| l.starts_with("PASS ")).count();
    check!(passes == 6, 6, "expected 6 sweeps, saw {passes}:\n{stdout}");
    check!(!stdout.contains("FAIL"), 6, "sweep failure:\n{stdout}");
    check!(elapsed.as_secs() < 60, 6, "took {elapsed:.1?}, budget is one minute");
    pass(6, format!("all 6 sweeps passed in {elapsed:.1?}"));
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_sobol_correctness() {
    // radical inverse in base 2
    fn van_der_corput(mut n: u64) -> f64 {
        let mut v = 0.0;
        let mut f = 0.5;
        while n > 0 {
            if n & 1 == 1 {
                v += f;
            }
            f *= 0.5;
            n >>= 1;
        }
        v
    }

    let mut stream = SobolState::new(2).unwrap();
    for n in 1..=1024u64 {
        let p = stream.next_point().unwrap();
        check!(
            p[0] == van_der_corput(n),
            7,
            "dim 0 of index {n}: {} != van der Corput {}",
            p[0],
            van_der_corput(n)
        );
    }

    let s = SobolState::new(2).unwrap();
    for k in 1..=6u32 {
        let m = 1u64 << k;
        for p in 0..=k {
            let q = k - p;
            let (bx, by) = (1u64 << p, 1u64 << q);
            let mut hits = vec![0usize; m as usize];
            for n in 0..m {
                let pt = s.point_at(n);
                let ix = (pt[0] * bx as f64) as usize;
                let iy = (pt[1] * by as f64) as usize;
                hits[ix * by as usize + iy] += 1;
            }
            check!(
                hits.iter().all(|&h| h == 1),
                7,
                "first {m} points miss a dyadic box under the {p}/{q} split"
            );
        }
    }

    pass(7, "dim 0 = van der Corput for 1024 indices; dyadic equidistribution up to k = 6".into());
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_bit_identical_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("first"), tmp.path().join("second")];
    for dir in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_wpinn"))
            .args([
                "train",
                "--preset",
                "moving_shock",
                "--epochs",
                "100",
                "--seed",
                "11",
                "--run-dir",
                dir.to_str().unwrap(),
                "--set",
                "sampling.interior=512",
                "--set",
                "sampling.temporal=128",
                "--set",
                "sampling.spatial=128",
            ])
            .output()
            .expect("binary should launch");
        check!(
            out.status.success(),
            8,
            "train exited with {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["theta.wnet", "eta.wnet", "training_log.csv", "collocation.csv"] {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).unwrap();
        check!(a == b, 8, "{name} differs between identical invocations");
    }
    pass(8, "two seeded runs produced bit-identical checkpoints and CSVs".into());
}
