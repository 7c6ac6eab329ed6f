//! Property sweeps behind `check-lemmas`: numerical verification of the
//! bounds the training objective leans on, printed as one PASS/FAIL line
//! each.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use wpinn::residual::{kruzkhov_q, FluxSpec, SmoothedAbs};
use wpinn::testfn::{seminorm_estimate, AnalyticTestFn, Lp};

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub struct LemmaOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> LemmaOutcome {
    LemmaOutcome { name, passed, detail }
}

/// 0 <= |x|_eta - |x| <= eta and |d/dx |x|_eta| <= 1 on random samples.
fn smoothed_abs_bounds(rng: &mut ChaCha8Rng) -> LemmaOutcome {
    let etas = [1e-3, 1e-2, 0.1, 1.0];
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let eta = etas[i % etas.len()];
        let abs = SmoothedAbs::new(eta).unwrap();
        let x = 6.0 * unit(rng) - 3.0;
        let (v, d) = abs.eval(x);
        let gap = v - x.abs();
        if gap < -1e-12 || gap > eta + 1e-12 || d.abs() > 1.0 + 1e-15 {
            return outcome(
                "smoothed-abs bounds",
                false,
                format!("violated at x = {x}, eta = {eta}: gap = {gap}, deriv = {d}"),
            );
        }
        worst = worst.max(gap / eta);
    }
    outcome("smoothed-abs bounds", true, format!("{n} samples, max gap/eta = {worst:.3}"))
}

/// |Q(u,c) - Q(v,c)| <= 3 L_f |u - v| on random triples.
fn q_lipschitz(rng: &mut ChaCha8Rng) -> LemmaOutcome {
    let flux = FluxSpec::burgers((-1.0, 1.0));
    let n = 10_000;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let u = 2.0 * unit(rng) - 1.0;
        let v = 2.0 * unit(rng) - 1.0;
        let c = 2.4 * unit(rng) - 1.2;
        let lhs = (kruzkhov_q(&flux, u, c) - kruzkhov_q(&flux, v, c)).abs();
        let rhs = 3.0 * flux.lipschitz() * (u - v).abs();
        if lhs > rhs + 1e-12 {
            return outcome(
                "Q Lipschitz factor <= 3 L_f",
                false,
                format!("violated at (u,v,c) = ({u},{v},{c}): {lhs} > {rhs}"),
            );
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    outcome("Q Lipschitz factor <= 3 L_f", true, format!("{n} triples, max ratio = {worst:.3}"))
}

/// Q(u,c) = Q(c,u) exactly.
fn q_symmetry(rng: &mut ChaCha8Rng) -> LemmaOutcome {
    let flux = FluxSpec::burgers((-1.0, 1.0));
    let n = 10_000;
    for _ in 0..n {
        let u = 2.0 * unit(rng) - 1.0;
        let c = 2.0 * unit(rng) - 1.0;
        let a = kruzkhov_q(&flux, u, c);
        let b = kruzkhov_q(&flux, c, u);
        if a.to_bits() != b.to_bits() {
            return outcome("Q symmetry", false, format!("Q({u},{c}) = {a} but Q({c},{u}) = {b}"));
        }
    }
    let diag = kruzkhov_q(&flux, 0.3, 0.3);
    if diag != 0.0 {
        return outcome("Q symmetry", false, format!("Q(u,u) = {diag}, expected 0"));
    }
    outcome("Q symmetry", true, format!("{n} pairs bit-identical, Q(u,u) = 0"))
}

/// chi_eps(eps) <= eps over the sweep.
fn chi_tail(epsilons: &[f64]) -> LemmaOutcome {
    for &eps in epsilons {
        let f = AnalyticTestFn::new(0.5, 0.5, eps, 1.0).unwrap();
        let (v, _) = f.chi(eps);
        if !(v <= eps) {
            return outcome("chi ramp tail bound", false, format!("chi_{eps}({eps}) = {v} > {eps}"));
        }
    }
    outcome("chi ramp tail bound", true, format!("chi_eps(eps) <= eps for eps in {epsilons:?}"))
}

/// Mollifier mass in [1 - eps, 2] (machine-precision slack above 2).
fn rho_mass(epsilons: &[f64]) -> LemmaOutcome {
    for &eps in epsilons {
        let f = AnalyticTestFn::new(0.5, 0.5, eps, 1.0).unwrap();
        let mass = f.rho_mass(2000);
        if !(mass >= 1.0 - eps && mass <= 2.0 + 1e-9) {
            return outcome(
                "mollifier mass window",
                false,
                format!("integral of rho_{eps} = {mass} outside [1 - {eps}, 2]"),
            );
        }
    }
    outcome("mollifier mass window", true, format!("mass in window for eps in {epsilons:?}"))
}

/// sup-seminorm growth stays proportional to beta^3 across the sweep.
fn seminorm_band(epsilons: &[f64]) -> LemmaOutcome {
    for &eps in epsilons {
        let f = AnalyticTestFn::new(0.5, 0.5, eps, 1.0).unwrap();
        let sup = match seminorm_estimate(&f, Lp::Infinity, 300) {
            Ok(v) => v,
            Err(e) => {
                return outcome("W1inf seminorm scaling", false, format!("estimate failed: {e}"))
            }
        };
        let ratio = sup / f.beta().powi(3);
        if !(0.05..=5.0).contains(&ratio) {
            return outcome(
                "W1inf seminorm scaling",
                false,
                format!("sup/beta^3 = {ratio} at eps = {eps}, outside [0.05, 5]"),
            );
        }
    }
    outcome("W1inf seminorm scaling", true, format!("sup/beta^3 in band for eps in {epsilons:?}"))
}

/// Run every sweep; returns the outcomes in print order.
pub fn run_all(seed: u64) -> Vec<LemmaOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epsilons = [0.2, 0.1, 0.05];
    vec![
        smoothed_abs_bounds(&mut rng),
        q_lipschitz(&mut rng),
        q_symmetry(&mut rng),
        chi_tail(&epsilons),
        rho_mass(&epsilons),
        seminorm_band(&epsilons),
    ]
}
