//! Test functions for the weak formulation: the trainable family
//! `phi = omega(x) * xi(x,t)` built from a boundary cutoff and a network, and
//! the analytic mollifier family built from scaled tanh differences, used for
//! validation sweeps.

use crate::net::{Jet, NetworkParams};
use crate::{Error, Result};

/// Smooth spatial cutoff: zero on the domain faces, one on the plateau, cubic
/// smoothstep ramps of width `ramp_width` in between. Depends on x only.
#[derive(Clone, Copy, Debug)]
pub struct CutoffSpec {
    a: f64,
    b: f64,
    ramp_width: f64,
}

impl CutoffSpec {
    /// Default ramp width: a tenth of the domain length.
    pub fn new(domain: (f64, f64)) -> Self {
        CutoffSpec { a: domain.0, b: domain.1, ramp_width: 0.1 * (domain.1 - domain.0) }
    }

    pub fn with_ramp(domain: (f64, f64), ramp_width: f64) -> Result<Self> {
        let len = domain.1 - domain.0;
        if !(len > 0.0) || !domain.0.is_finite() || !domain.1.is_finite() {
            return Err(Error::Config(format!("bad cutoff domain [{}, {}]", domain.0, domain.1)));
        }
        if !(ramp_width > 0.0 && ramp_width <= 0.5 * len) {
            return Err(Error::Config(format!(
                "ramp width must lie in (0, {}], got {ramp_width}",
                0.5 * len
            )));
        }
        Ok(CutoffSpec { a: domain.0, b: domain.1, ramp_width })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn ramp_width(&self) -> f64 {
        self.ramp_width
    }

    /// Value and derivative of the cutoff at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if x < self.a || x > self.b {
            return Err(Error::Contract(format!("cutoff queried at {x} outside [{}, {}]", self.a, self.b)));
        }
        // distance to the nearest face and its x-derivative
        let (d, dsign) = if x - self.a <= self.b - x { (x - self.a, 1.0) } else { (self.b - x, -1.0) };
        let s = (d / self.ramp_width).clamp(0.0, 1.0);
        let value = s * s * (3.0 - 2.0 * s);
        let deriv = if s >= 1.0 { 0.0 } else { 6.0 * s * (1.0 - s) / self.ramp_width * dsign };
        Ok((value, deriv))
    }
}

/// Multiply a network jet by the cutoff: `phi = omega * xi`, with the product
/// rule in x and an untouched t-derivative.
pub fn apply_cutoff(spec: &CutoffSpec, x: f64, xi: Jet) -> Result<Jet> {
    let (w, wp) = spec.eval(x)?;
    Ok(Jet { value: w * xi.value, dx: wp * xi.value + w * xi.dx, dt: w * xi.dt })
}

/// Transpose of `apply_cutoff` as a linear map on jets: pulls a cotangent on
/// `phi` back to a cotangent on `xi`.
pub fn cutoff_pullback(spec: &CutoffSpec, x: f64, lam_phi: Jet) -> Result<Jet> {
    let (w, wp) = spec.eval(x)?;
    Ok(Jet {
        value: w * lam_phi.value + wp * lam_phi.dx,
        dx: w * lam_phi.dx,
        dt: w * lam_phi.dt,
    })
}

/// Trainable test function `phi(x,t) = omega(x) * xi(x,t)` evaluated as a jet.
pub fn neural_test_fn(xi: &NetworkParams, spec: &CutoffSpec, x: f64, t: f64) -> Result<Jet> {
    apply_cutoff(spec, x, xi.forward_jet(crate::Point::new(x, t)))
}

/// Analytic mollifier-type test function centered at `(y, s)`, defined on the
/// unit spatial interval times `[0, T]`. Built from tanh ramps: a temporal
/// plateau `chi` and twin bump factors `rho` in space and time. All scale
/// parameters follow from `epsilon` alone.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticTestFn {
    y: f64,
    s: f64,
    epsilon: f64,
    t_horizon: f64,
    alpha: f64,
    beta: f64,
    half_width: f64,
}

impl AnalyticTestFn {
    pub fn new(y: f64, s: f64, epsilon: f64, t_horizon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(t_horizon > 4.0 * epsilon) {
            return Err(Error::Config(format!(
                "time horizon must exceed 4 epsilon = {}, got {t_horizon}",
                4.0 * epsilon
            )));
        }
        if !(0.0..=1.0).contains(&y) || !(0.0..=t_horizon).contains(&s) {
            return Err(Error::Config(format!("center ({y}, {s}) outside [0,1] x [0,{t_horizon}]")));
        }
        let log_inv = (1.0 / epsilon).ln();
        Ok(AnalyticTestFn {
            y,
            s,
            epsilon,
            t_horizon,
            alpha: 3.0 * log_inv / epsilon,
            beta: 9.0 * log_inv / (epsilon * epsilon * epsilon),
            half_width: epsilon.powi(6),
        })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.y, self.s)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Temporal plateau factor and its derivative. Nonnegative for all t
    /// because the two ramps are ordered whenever T > 4 epsilon.
    pub fn chi(&self, t: f64) -> (f64, f64) {
        let norm = 0.5 / (self.alpha * self.epsilon).tanh();
        let z1 = self.alpha * (t - 2.0 * self.epsilon);
        let z2 = self.alpha * (t - self.t_horizon + 2.0 * self.epsilon);
        let (t1, t2) = (z1.tanh(), z2.tanh());
        let value = norm * (t1 - t2);
        let deriv = norm * self.alpha * ((1.0 - t1 * t1) - (1.0 - t2 * t2));
        (value, deriv)
    }

    /// Bump factor and its derivative: a difference of tanh ramps a distance
    /// `2 eps^6` apart, normalized by that separation.
    pub fn rho(&self, z: f64) -> (f64, f64) {
        let a = self.half_width;
        let zp = (self.beta * (z + a)).tanh();
        let zm = (self.beta * (z - a)).tanh();
        let value = (zp - zm) / (2.0 * a);
        let deriv = self.beta * ((1.0 - zp * zp) - (1.0 - zm * zm)) / (2.0 * a);
        (value, deriv)
    }

    /// Value and exact partials on the unit domain `[0,1] x [0,T]`.
    pub fn eval_unit(&self, x: f64, t: f64) -> Jet {
        let (chi, chi_d) = self.chi(0.5 * (t + self.s));
        let (rx, rx_d) = self.rho(x - self.y);
        let (rt, rt_d) = self.rho(t - self.s);
        Jet {
            value: chi * rx * rt,
            dx: chi * rx_d * rt,
            dt: 0.5 * chi_d * rx * rt + chi * rx * rt_d,
        }
    }

    /// Evaluation after affine rescaling of `[a, b]` onto the unit interval;
    /// the spatial derivative carries the chain factor `1/(b-a)`.
    pub fn eval_on_domain(&self, domain: (f64, f64), x: f64, t: f64) -> Jet {
        let len = domain.1 - domain.0;
        let j = self.eval_unit((x - domain.0) / len, t);
        Jet { value: j.value, dx: j.dx / len, dt: j.dt }
    }

    /// Integral of the spatial bump over the unit interval for a center `y`,
    /// by composite Simpson quadrature on a bump-refined grid.
    pub fn rho_mass(&self, grid_n: usize) -> f64 {
        let xs = refined_axis(0.0, 1.0, &[(self.y, self.window_rho())], grid_n);
        simpson(&xs, |x| self.rho(x - self.y).0)
    }

    // half-widths of the regions where each factor varies appreciably
    fn window_rho(&self) -> f64 {
        self.half_width + 14.0 / self.beta
    }

    fn window_chi(&self) -> f64 {
        30.0 / self.alpha
    }
}

/// Order parameter for `seminorm_estimate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lp {
    P(f64),
    Infinity,
}

/// Grid estimate of the first-order Sobolev seminorm of the analytic test
/// function over `[0,1] x [0,T]`: for finite p the p-th root of the summed
/// p-th powers of both partials; for p = infinity their maximum. The tensor
/// grid refines around the bump centers and ramp locations so the narrow
/// features are resolved.
pub fn seminorm_estimate(f: &AnalyticTestFn, p: Lp, grid_n: usize) -> Result<f64> {
    if grid_n < 100 {
        return Err(Error::Config(format!("seminorm grid too coarse: {grid_n}")));
    }
    if let Lp::P(q) = p {
        if !(q >= 1.0) {
            return Err(Error::Config(format!("Lp order must be >= 1, got {q}")));
        }
    }
    let (y, s) = f.center();
    let t_end = f.t_horizon();
    let eps = f.epsilon();
    let xs = refined_axis(0.0, 1.0, &[(y, f.window_rho())], grid_n);
    // temporal features: the rho bump at s and the two chi ramps, whose
    // centers solve (t + s)/2 = 2 eps resp. T - 2 eps
    let t_centers = [
        (s, f.window_rho()),
        (4.0 * eps - s, 2.0 * f.window_chi()),
        (2.0 * t_end - 4.0 * eps - s, 2.0 * f.window_chi()),
    ];
    let ts = refined_axis(0.0, t_end, &t_centers, grid_n);
    match p {
        Lp::Infinity => {
            let mut m: f64 = 0.0;
            for &t in &ts {
                for &x in &xs {
                    let j = f.eval_unit(x, t);
                    m = m.max(j.dx.abs()).max(j.dt.abs());
                }
            }
            Ok(m)
        }
        Lp::P(q) => {
            let wx = trapezoid_weights(&xs);
            let wt = trapezoid_weights(&ts);
            let mut acc = 0.0;
            for (j, &t) in ts.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    let jet = f.eval_unit(x, t);
                    acc += wt[j] * wx[i] * (jet.dx.abs().powf(q) + jet.dt.abs().powf(q));
                }
            }
            Ok(acc.powf(1.0 / q))
        }
    }
}

/// Union of a uniform grid over `[lo, hi]` and uniform fine windows around
/// each feature center, sorted with duplicates removed.
fn refined_axis(lo: f64, hi: f64, centers: &[(f64, f64)], grid_n: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=grid_n).map(|i| lo + (hi - lo) * i as f64 / grid_n as f64).collect();
    for &(c, w) in centers {
        let wl = (c - w).max(lo);
        let wr = (c + w).min(hi);
        if wr <= wl {
            continue;
        }
        for i in 0..=grid_n {
            xs.push(wl + (wr - wl) * i as f64 / grid_n as f64);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    xs
}

fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (xs[i + 1] - xs[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Composite Simpson over consecutive node pairs (midpoint refinement).
fn simpson(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() - 1 {
        let (a, b) = (xs[i], xs[i + 1]);
        let m = 0.5 * (a + b);
        acc += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    acc
}

/// Reference scale for the sup-norm growth of the analytic family; kept next
/// to the seminorm estimator because validation sweeps compare against it.
pub fn beta_cubed(f: &AnalyticTestFn) -> f64 {
    let b = f.beta();
    b * b * b
}
