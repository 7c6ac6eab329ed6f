//! Kruzkhov entropy machinery for `u_t + f(u)_x = 0`: the entropy flux Q,
//! a smoothed absolute value, the interior residual integrand, its naive
//! (non-entropic) weak-form counterpart, and boundary mismatches.

use crate::net::{Jet, NetworkParams};
use crate::oracle::ExperimentPreset;
use crate::{Error, Point, Result};

/// A scalar flux with its derivative, a Lipschitz constant valid on `range`,
/// and the interior stationary point of `f` (if any), which the Godunov
/// solver needs to evaluate min/max over an interval.
#[derive(Clone, Copy)]
pub struct FluxSpec {
    f: fn(f64) -> f64,
    df: fn(f64) -> f64,
    lipschitz: f64,
    range: (f64, f64),
    sonic: Option<f64>,
}

impl FluxSpec {
    pub fn new(f: fn(f64) -> f64, df: fn(f64) -> f64, lipschitz: f64, range: (f64, f64)) -> Self {
        let sonic = find_sonic(df, range);
        FluxSpec { f, df, lipschitz, range, sonic }
    }

    /// Burgers flux `u^2 / 2`.
    pub fn burgers(range: (f64, f64)) -> Self {
        let lipschitz = range.0.abs().max(range.1.abs());
        Self::new(|u| 0.5 * u * u, |u| u, lipschitz, range)
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn sonic(&self) -> Option<f64> {
        self.sonic
    }
}

impl std::fmt::Debug for FluxSpec {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("FluxSpec")
            .field("lipschitz", &self.lipschitz)
            .field("range", &self.range)
            .field("sonic", &self.sonic)
            .finish()
    }
}

/// Interior zero of `df` located by bisection; `None` when `df` has one sign
/// across the whole range (then interval extrema of `f` sit at endpoints).
fn find_sonic(df: fn(f64) -> f64, range: (f64, f64)) -> Option<f64> {
    let (mut lo, mut hi) = range;
    let (dlo, dhi) = (df(lo), df(hi));
    if dlo == 0.0 {
        return Some(lo);
    }
    if dhi == 0.0 {
        return Some(hi);
    }
    if dlo.signum() == dhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let dm = df(mid);
        if dm == 0.0 {
            return Some(mid);
        }
        if dm.signum() == dlo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Kruzkhov entropy flux `sgn(u - c) (f(u) - f(c))` with `sgn(0) = 0`.
#[inline]
pub fn kruzkhov_q(flux: &FluxSpec, u: f64, c: f64) -> f64 {
    let s = if u > c {
        1.0
    } else if u < c {
        -1.0
    } else {
        return 0.0;
    };
    s * (flux.f(u) - flux.f(c))
}

/// `|x|_eta = sqrt(x^2 + eta^2)` for `eta > 0`; the exact absolute value with
/// subgradient 0 at the kink when `eta == 0`. Satisfies
/// `0 <= |x|_eta - |x| <= eta` and `|d/dx |x|_eta| <= 1`.
#[derive(Clone, Copy, Debug)]
pub struct SmoothedAbs {
    eta: f64,
}

impl SmoothedAbs {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(Error::Config(format!("smoothing width must be >= 0, got {eta}")));
        }
        Ok(SmoothedAbs { eta })
    }

    pub fn exact() -> Self {
        SmoothedAbs { eta: 0.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// (|x|_eta, d/dx |x|_eta).
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        if self.eta == 0.0 {
            let s = if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            };
            (x.abs(), s)
        } else {
            let r = (x * x + self.eta * self.eta).sqrt();
            (r, x / r)
        }
    }

    /// Second derivative of the smoothed absolute value; 0 almost everywhere
    /// in the exact case.
    #[inline]
    pub fn curvature(&self, x: f64) -> f64 {
        if self.eta == 0.0 {
            0.0
        } else {
            let r2 = x * x + self.eta * self.eta;
            self.eta * self.eta / (r2 * r2.sqrt())
        }
    }
}

/// Pointwise interior entropy residual
/// `phi * d/dt |u - c| - Q[u; c] * dphi/dx`,
/// where the time derivative of the (smoothed) absolute value rides on the
/// network's t-tangent. Positive contributions signal entropy violations.
#[inline]
pub fn interior_integrand(flux: &FluxSpec, u: Jet, phi: Jet, c: f64, abs: SmoothedAbs) -> f64 {
    let (_, s) = abs.eval(u.value - c);
    phi.value * s * u.dt - kruzkhov_q(flux, u.value, c) * phi.dx
}

/// Naive weak-form integrand `u_t * phi - f(u) * dphi/dx`. Carries no
/// entropy information: it vanishes on any weak solution, entropic or not.
#[inline]
pub fn naive_weak_integrand(flux: &FluxSpec, u: Jet, phi: Jet) -> f64 {
    u.dt * phi.value - flux.f(u.value) * phi.dx
}

/// The adversary's candidate entropy heights: a uniform grid on
/// `[c_min, c_max]`, endpoints included for `count >= 2`.
#[derive(Clone, Debug)]
pub struct EntropyCSet {
    c_min: f64,
    c_max: f64,
    values: Vec<f64>,
}

impl EntropyCSet {
    pub fn new(c_min: f64, c_max: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("entropy grid needs at least one value".into()));
        }
        if !(c_min <= c_max) {
            return Err(Error::Config(format!("bad entropy bounds [{c_min}, {c_max}]")));
        }
        let values = if count == 1 {
            vec![0.5 * (c_min + c_max)]
        } else {
            (0..count)
                .map(|i| c_min + (c_max - c_min) * i as f64 / (count - 1) as f64)
                .collect()
        };
        Ok(EntropyCSet { c_min, c_max, values })
    }

    /// Grid over `range` widened by `margin * (hi - lo)` on each side.
    pub fn widened(range: (f64, f64), margin: f64, count: usize) -> Result<Self> {
        let pad = margin * (range.1 - range.0);
        Self::new(range.0 - pad, range.1 + pad, count)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c_min, self.c_max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A collocation point on one of the data boundaries.
#[derive(Clone, Copy, Debug)]
pub enum BoundaryPoint {
    /// On the initial slice `t = 0`.
    Temporal { x: f64 },
    /// On a spatial face `x = a` or `x = b`.
    Spatial { x: f64, t: f64 },
}

/// Mismatch between the network and the preset's data on a boundary point:
/// `u(x, 0) - u0(x)` on the initial slice, `u(x, t) - g(x, t)` on a face.
pub fn boundary_residual(
    net: &NetworkParams,
    preset: &ExperimentPreset,
    point: BoundaryPoint,
) -> Result<f64> {
    let (a, b) = preset.domain();
    match point {
        BoundaryPoint::Temporal { x } => {
            if !(a <= x && x <= b) {
                return Err(Error::Contract(format!(
                    "temporal boundary point x = {x} outside [{a}, {b}]"
                )));
            }
            Ok(net.forward_value(Point::new(x, 0.0)) - preset.u0(x))
        }
        BoundaryPoint::Spatial { x, t } => {
            if x != a && x != b {
                return Err(Error::Contract(format!(
                    "spatial boundary point x = {x} is on neither face of [{a}, {b}]"
                )));
            }
            if !(0.0 <= t && t <= preset.t_final()) {
                return Err(Error::Contract(format!(
                    "spatial boundary point t = {t} outside [0, {}]",
                    preset.t_final()
                )));
            }
            Ok(net.forward_value(Point::new(x, t)) - preset.boundary_trace(x, t))
        }
    }
}
