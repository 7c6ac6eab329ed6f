//! Reference machinery the learned solutions are judged against: the four
//! Riemann/sine experiment presets, closed-form entropy solutions, a Godunov
//! finite-volume solver, and relative space-time error norms.

use std::f64::consts::PI;
use std::path::Path;

use crate::residual::{EntropyCSet, FluxSpec};
use crate::sample::SampleCounts;
use crate::{Error, Result};

/// The four benchmark initial-value problems, all for Burgers flux on the
/// spatial domain `(-1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetId {
    StandingShock,
    MovingShock,
    Rarefaction,
    SineWave,
}

impl PresetId {
    pub fn all() -> [PresetId; 4] {
        [PresetId::StandingShock, PresetId::MovingShock, PresetId::Rarefaction, PresetId::SineWave]
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standing_shock" => Ok(PresetId::StandingShock),
            "moving_shock" => Ok(PresetId::MovingShock),
            "rarefaction" => Ok(PresetId::Rarefaction),
            "sine" => Ok(PresetId::SineWave),
            other => Err(Error::Parse(format!(
                "unknown experiment '{other}' (expected standing_shock, moving_shock, rarefaction, or sine)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PresetId::StandingShock => "standing_shock",
            PresetId::MovingShock => "moving_shock",
            PresetId::Rarefaction => "rarefaction",
            PresetId::SineWave => "sine",
        }
    }
}

/// A fully specified experiment: geometry, flux, initial and boundary data,
/// and the default collocation budget.
#[derive(Clone, Debug)]
pub struct ExperimentPreset {
    id: PresetId,
    domain: (f64, f64),
    t_final: f64,
    flux: FluxSpec,
    essential_range: (f64, f64),
    default_counts: SampleCounts,
}

impl ExperimentPreset {
    pub fn from_id(id: PresetId) -> Self {
        let (t_final, essential_range) = match id {
            PresetId::StandingShock => (0.5, (-1.0, 1.0)),
            PresetId::MovingShock => (0.5, (0.0, 1.0)),
            PresetId::Rarefaction => (0.5, (-1.0, 1.0)),
            PresetId::SineWave => (1.0, (-1.0, 1.0)),
        };
        ExperimentPreset {
            id,
            domain: (-1.0, 1.0),
            t_final,
            flux: FluxSpec::burgers(essential_range),
            essential_range,
            default_counts: SampleCounts { interior: 16384, temporal: 4096, spatial: 4096 },
        }
    }

    pub fn id(&self) -> PresetId {
        self.id
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn flux(&self) -> &FluxSpec {
        &self.flux
    }

    /// Range spanned by the exact solution, used to widen the entropy
    /// constant grid and to bound wave speeds.
    pub fn essential_range(&self) -> (f64, f64) {
        self.essential_range
    }

    pub fn default_counts(&self) -> SampleCounts {
        self.default_counts
    }

    /// Whether `exact_solution` is available (everything but the sine wave,
    /// which goes through its own characteristic solver).
    pub fn has_closed_form(&self) -> bool {
        self.id != PresetId::SineWave
    }

    pub fn u0(&self, x: f64) -> f64 {
        match self.id {
            PresetId::StandingShock => {
                if x <= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            PresetId::MovingShock => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PresetId::Rarefaction => {
                if x <= 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            PresetId::SineWave => -(PI * x).sin(),
        }
    }

    /// Dirichlet data on the spatial faces; constant in time for all four
    /// presets because no wave reaches the boundary before `t_final`.
    pub fn boundary_trace(&self, x: f64, _t: f64) -> f64 {
        let left = x < 0.5 * (self.domain.0 + self.domain.1);
        match self.id {
            PresetId::StandingShock => {
                if left {
                    1.0
                } else {
                    -1.0
                }
            }
            PresetId::MovingShock => {
                if left {
                    1.0
                } else {
                    0.0
                }
            }
            PresetId::Rarefaction => {
                if left {
                    -1.0
                } else {
                    1.0
                }
            }
            PresetId::SineWave => 0.0,
        }
    }

    /// Exact average of `u0` over `[xl, xr]`, for finite-volume
    /// initialization without quadrature error.
    pub fn u0_average(&self, xl: f64, xr: f64) -> f64 {
        assert!(xl < xr, "degenerate cell [{xl}, {xr}]");
        match self.id {
            PresetId::SineWave => ((PI * xr).cos() - (PI * xl).cos()) / (PI * (xr - xl)),
            _ => {
                // piecewise constant with a single jump at x = 0
                let (ul, ur) = (self.u0(-1.0), self.u0(1.0));
                if xr <= 0.0 {
                    ul
                } else if xl >= 0.0 {
                    ur
                } else {
                    (ul * (0.0 - xl) + ur * (xr - 0.0)) / (xr - xl)
                }
            }
        }
    }

    /// Entropy constants: a uniform grid over the essential range widened by
    /// ten percent of its length on each side.
    pub fn c_set(&self, count: usize) -> Result<EntropyCSet> {
        EntropyCSet::widened(self.essential_range, 0.1, count)
    }
}

/// Closed-form entropy solution for the piecewise-constant presets, taking
/// the left state on jump curves. The sine preset has no closed form and
/// returns a contract error.
pub fn exact_solution(preset: &ExperimentPreset, x: f64, t: f64) -> Result<f64> {
    match preset.id() {
        PresetId::StandingShock => Ok(if x <= 0.0 { 1.0 } else { -1.0 }),
        PresetId::MovingShock => Ok(if x <= 0.5 * t { 1.0 } else { 0.0 }),
        PresetId::Rarefaction => {
            if t == 0.0 {
                Ok(preset.u0(x))
            } else if x <= -t {
                Ok(-1.0)
            } else if x < t {
                Ok(x / t)
            } else {
                Ok(1.0)
            }
        }
        PresetId::SineWave => Err(Error::Contract(
            "sine preset has no closed-form solution; use sine_solution or a finite-volume reference".into(),
        )),
    }
}

/// Entropy solution of Burgers' equation with `u0(x) = -sin(pi x)` on
/// `[-1, 1]`, via characteristics `u = -sin(pi (x - u t))` resolved by a
/// bracketed scan plus safeguarded Newton iteration. Odd in `x`; a standing
/// shock forms at `x = 0` once `t >= 1/pi`, and the entropy branch is the
/// root whose characteristic foot lies farthest from the origin.
pub fn sine_solution(x: f64, t: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&x) || t < 0.0 {
        return Err(Error::Contract(format!("sine solution queried outside [-1,1] x [0,inf): ({x}, {t})")));
    }
    if t == 0.0 {
        return Ok(-(PI * x).sin());
    }
    if x == 0.0 || x.abs() >= 1.0 - 1e-15 {
        // u = 0 solves the characteristic equation at x in {-1, 0, 1} and is
        // the entropy value there for all t
        return Ok(0.0);
    }
    // solutions stay odd, so solve for x > 0 on the branch u in [-1, 0]
    let (xa, sign) = if x > 0.0 { (x, 1.0) } else { (-x, -1.0) };
    let g = |u: f64| u + (PI * (xa - u * t)).sin();
    // scan for sign changes; the entropy root has the largest foot |x - u t|,
    // i.e. the smallest u on this branch
    let n_scan = 256;
    let h = 1.0 / n_scan as f64;
    let mut bracket = None;
    for i in 0..n_scan {
        let lo = -1.0 + i as f64 * h;
        let hi = lo + h;
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            bracket = Some((lo, lo));
            break;
        }
        if glo * ghi < 0.0 {
            bracket = Some((lo, hi));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Oracle(format!("no characteristic root bracketed at ({x}, {t})"))
    })?;
    let mut u = 0.5 * (lo + hi);
    for iter in 0..200 {
        let gu = g(u);
        if gu.abs() <= tol || hi - lo <= f64::EPSILON * 4.0 {
            return Ok(sign * u);
        }
        if g(lo) * gu < 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let dg = 1.0 - PI * t * (PI * (xa - u * t)).cos();
        let newton = u - gu / dg;
        u = if dg.abs() > 1e-12 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let _ = iter;
    }
    Err(Error::Oracle(format!("characteristic solve stalled at ({x}, {t})")))
}

/// Godunov numerical flux: exact Riemann flux for a convex scalar law,
/// with the sonic point handled explicitly.
pub fn godunov_flux(flux: &FluxSpec, ul: f64, ur: f64) -> f64 {
    if ul <= ur {
        let mut f = flux.f(ul).min(flux.f(ur));
        if let Some(s) = flux.sonic() {
            if ul < s && s < ur {
                f = f.min(flux.f(s));
            }
        }
        f
    } else {
        flux.f(ul).max(flux.f(ur))
    }
}

/// Per-step bookkeeping returned by `FVGrid::advance`.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub dt: f64,
    /// Godunov flux through the left domain face during the step.
    pub influx: f64,
    /// Godunov flux through the right domain face during the step.
    pub outflux: f64,
}

/// First-order Godunov finite-volume state: cell averages on a uniform grid
/// with Dirichlet ghost cells.
#[derive(Clone, Debug)]
pub struct FVGrid {
    domain: (f64, f64),
    dx: f64,
    time: f64,
    u: Vec<f64>,
    scratch: Vec<f64>,
}

impl FVGrid {
    pub fn new(preset: &ExperimentPreset, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Config(format!("need at least 2 cells, got {n_cells}")));
        }
        let (a, b) = preset.domain();
        let dx = (b - a) / n_cells as f64;
        let u = (0..n_cells)
            .map(|i| {
                let xl = a + i as f64 * dx;
                preset.u0_average(xl, xl + dx)
            })
            .collect();
        Ok(FVGrid { domain: (a, b), dx, time: 0.0, u, scratch: Vec::new() })
    }

    #[cfg(test)]
    fn from_values(domain: (f64, f64), u: Vec<f64>) -> Self {
        let dx = (domain.1 - domain.0) / u.len() as f64;
        FVGrid { domain, dx, time: 0.0, u, scratch: Vec::new() }
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn center(&self, i: usize) -> f64 {
        self.domain.0 + (i as f64 + 0.5) * self.dx
    }

    /// Piecewise-constant evaluation; clamps to the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let i = ((x - self.domain.0) / self.dx).floor();
        let i = (i.max(0.0) as usize).min(self.u.len() - 1);
        self.u[i]
    }

    /// Total conserved quantity `sum(u_i) * dx`.
    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.dx
    }

    /// One forward-Euler Godunov step with CFL-limited `dt`, truncated so the
    /// grid never steps past `t_stop`.
    pub fn advance(&mut self, preset: &ExperimentPreset, cfl: f64, t_stop: f64) -> StepInfo {
        let (a, b) = self.domain;
        let gl = preset.boundary_trace(a, self.time);
        let gr = preset.boundary_trace(b, self.time);
        self.advance_raw(preset.flux(), gl, gr, cfl, t_stop)
    }

    fn advance_raw(&mut self, flux: &FluxSpec, gl: f64, gr: f64, cfl: f64, t_stop: f64) -> StepInfo {
        let n = self.u.len();
        let mut smax = flux.df(gl).abs().max(flux.df(gr).abs());
        for &u in &self.u {
            smax = smax.max(flux.df(u).abs());
        }
        let mut dt = if smax > 1e-14 { cfl * self.dx / smax } else { t_stop - self.time };
        dt = dt.min(t_stop - self.time);
        let mut fluxes = std::mem::take(&mut self.scratch);
        fluxes.clear();
        fluxes.reserve(n + 1);
        fluxes.push(godunov_flux(flux, gl, self.u[0]));
        for i in 1..n {
            fluxes.push(godunov_flux(flux, self.u[i - 1], self.u[i]));
        }
        fluxes.push(godunov_flux(flux, self.u[n - 1], gr));
        let r = dt / self.dx;
        for i in 0..n {
            self.u[i] -= r * (fluxes[i + 1] - fluxes[i]);
        }
        let info = StepInfo { dt, influx: fluxes[0], outflux: fluxes[n] };
        self.scratch = fluxes;
        self.time += dt;
        info
    }

    /// March to `t_end`.
    pub fn run_to(&mut self, preset: &ExperimentPreset, cfl: f64, t_end: f64) -> Result<()> {
        check_fv_args(cfl, t_end)?;
        while self.time < t_end - 1e-14 {
            self.advance(preset, cfl, t_end);
        }
        self.time = t_end;
        Ok(())
    }

    /// Dump `x_center,u` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x_center,u")?;
        for i in 0..self.u.len() {
            writeln!(out, "{:.16e},{:.16e}", self.center(i), self.u[i])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_fv_args(cfl: f64, t_end: f64) -> Result<()> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Config(format!("CFL number must lie in (0, 1], got {cfl}")));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Config(format!("end time must be nonnegative, got {t_end}")));
    }
    Ok(())
}

/// Reference solution at `t_end` on `n_cells` cells.
pub fn fv_solve(preset: &ExperimentPreset, n_cells: usize, cfl: f64, t_end: f64) -> Result<FVGrid> {
    let mut grid = FVGrid::new(preset, n_cells)?;
    grid.run_to(preset, cfl, t_end)?;
    Ok(grid)
}

/// Snapshots of one march at the given times, which must be nondecreasing.
pub fn fv_snapshots(
    preset: &ExperimentPreset,
    n_cells: usize,
    cfl: f64,
    times: &[f64],
) -> Result<Vec<FVGrid>> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("snapshot times must be nondecreasing".into()));
    }
    let mut grid = FVGrid::new(preset, n_cells)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        grid.run_to(preset, cfl, t)?;
        out.push(grid.clone());
    }
    Ok(out)
}

/// What to compare a prediction against.
#[derive(Clone, Copy, Debug)]
pub enum ReferenceKind {
    /// Closed form (or the characteristic solver for the sine preset).
    Exact,
    /// Godunov reference on `n_cells` cells.
    FiniteVolume { n_cells: usize, cfl: f64 },
}

/// Relative L1 errors of a predictor against a reference: at the final time
/// (trapezoid rule on `quad_n + 1` spatial nodes) and over the space-time
/// cylinder (tensor trapezoid, `quad_n / 4 + 1` temporal nodes).
pub fn relative_errors(
    predict: &dyn Fn(f64, f64) -> f64,
    preset: &ExperimentPreset,
    reference: ReferenceKind,
    quad_n: usize,
) -> Result<(f64, f64)> {
    if quad_n < 1000 {
        return Err(Error::Config(format!("quadrature resolution too small: {quad_n}")));
    }
    let (a, b) = preset.domain();
    let t_final = preset.t_final();
    let nx = quad_n;
    let nt = quad_n / 4;
    let ts: Vec<f64> = (0..=nt).map(|j| t_final * j as f64 / nt as f64).collect();
    // reference values reshaped as [time][space]
    let xs: Vec<f64> = (0..=nx).map(|i| a + (b - a) * i as f64 / nx as f64).collect();
    let mut reference_vals = vec![vec![0.0; xs.len()]; ts.len()];
    match reference {
        ReferenceKind::Exact => {
            for (j, &t) in ts.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    reference_vals[j][i] = if preset.has_closed_form() {
                        exact_solution(preset, x, t)?
                    } else {
                        sine_solution(x, t, 1e-12)?
                    };
                }
            }
        }
        ReferenceKind::FiniteVolume { n_cells, cfl } => {
            let snaps = fv_snapshots(preset, n_cells, cfl, &ts)?;
            for (j, snap) in snaps.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    reference_vals[j][i] = snap.eval(x);
                }
            }
        }
    }
    let wx = |i: usize| if i == 0 || i == nx { 0.5 } else { 1.0 };
    let wt = |j: usize| if j == 0 || j == nt { 0.5 } else { 1.0 };
    // final-time error
    let (mut num_t, mut den_t) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let r = reference_vals[nt][i];
        num_t += wx(i) * (predict(x, t_final) - r).abs();
        den_t += wx(i) * r.abs();
    }
    // space-time error
    let (mut num_st, mut den_st) = (0.0, 0.0);
    for (j, &t) in ts.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            let r = reference_vals[j][i];
            num_st += wt(j) * wx(i) * (predict(x, t) - r).abs();
            den_st += wt(j) * wx(i) * r.abs();
        }
    }
    if den_t <= 0.0 || den_st <= 0.0 {
        return Err(Error::Oracle("reference solution vanishes on the quadrature grid".into()));
    }
    Ok((num_t / den_t, num_st / den_st))
}
