//! Independent ground-truth generators: the Oleinik hull solver for scalar
//! Riemann problems, a first-order finite-volume reference scheme, and
//! L¹/convergence-rate utilities.
//!
//! Nothing here depends on the wave-curve machinery; the expected values in
//! the wave-curve and front-tracking tests are produced by this module, so
//! it has to stay an independent route to the same answers.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::system::{HyperbolicSystem, State};

/// Scalar flux in one of the three accepted forms. The polynomial and
/// smooth forms carry exact first derivatives; the sampled form falls back
/// to centered slopes on its grid.
#[derive(Clone)]
pub enum ScalarFlux {
    Polynomial(Vec<f64>),
    Smooth {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        fp: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// Values on a uniform grid; at least 10⁴ points for standalone use.
    Sampled { us: Vec<f64>, fs: Vec<f64> },
}

impl ScalarFlux {
    pub fn from_system(sys: &HyperbolicSystem) -> Result<Self> {
        if sys.n() != 1 {
            return Err(Error::Invalid("scalar flux requested from a system".into()));
        }
        let s1 = sys.clone();
        let s2 = sys.clone();
        Ok(ScalarFlux::Smooth {
            f: Arc::new(move |u| s1.flux(&DVector::from_element(1, u))[0]),
            fp: Arc::new(move |u| s2.jacobian(&DVector::from_element(1, u))[(0, 0)]),
        })
    }

    pub fn f(&self, u: f64) -> f64 {
        match self {
            ScalarFlux::Polynomial(c) => horner(c, u),
            ScalarFlux::Smooth { f, .. } => f(u),
            ScalarFlux::Sampled { us, fs } => sample_interp(us, fs, u),
        }
    }

    pub fn fp(&self, u: f64) -> f64 {
        match self {
            ScalarFlux::Polynomial(c) => horner(&poly_derivative(c), u),
            ScalarFlux::Smooth { fp, .. } => fp(u),
            ScalarFlux::Sampled { us, fs } => {
                let h = (us[us.len() - 1] - us[0]) / (us.len() as f64 - 1.0);
                (sample_interp(us, fs, u + h) - sample_interp(us, fs, u - h)) / (2.0 * h)
            }
        }
    }

    fn fpp(&self, u: f64) -> f64 {
        match self {
            ScalarFlux::Polynomial(c) => horner(&poly_derivative(&poly_derivative(c)), u),
            _ => {
                let h = 1e-5;
                (self.fp(u + h) - self.fp(u - h)) / (2.0 * h)
            }
        }
    }
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * u + ci)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &ci)| ci * i as f64).collect()
}

fn sample_interp(us: &[f64], fs: &[f64], u: f64) -> f64 {
    let n = us.len();
    if u <= us[0] {
        return fs[0];
    }
    if u >= us[n - 1] {
        return fs[n - 1];
    }
    let t = (u - us[0]) / (us[n - 1] - us[0]) * (n as f64 - 1.0);
    let i = (t.floor() as usize).min(n - 2);
    let frac = t - i as f64;
    fs[i] * (1.0 - frac) + fs[i + 1] * frac
}

/// One wave of a self-similar scalar solution, in traversal order
/// (increasing ξ from `u_left` to `u_right`).
#[derive(Debug, Clone)]
pub enum ScalarWave {
    Shock { u_minus: f64, u_plus: f64, sigma: f64 },
    Fan { u_from: f64, u_to: f64, xi_lo: f64, xi_hi: f64 },
}

/// Entropy solution of a scalar Riemann problem, built from the convex
/// (u_l < u_r) or concave (u_l > u_r) hull of the flux.
#[derive(Clone)]
pub struct ExactScalarSolution {
    pub u_left: f64,
    pub u_right: f64,
    pub waves: Vec<ScalarWave>,
    flux: ScalarFlux,
}

impl ExactScalarSolution {
    /// Self-similar profile; right-continuous at shocks.
    pub fn eval(&self, xi: f64) -> f64 {
        let mut u = self.u_left;
        for w in &self.waves {
            match *w {
                ScalarWave::Shock { u_plus, sigma, .. } => {
                    if xi >= sigma {
                        u = u_plus;
                    } else {
                        return u;
                    }
                }
                ScalarWave::Fan { u_from, u_to, xi_lo, xi_hi } => {
                    if xi < xi_lo {
                        return u;
                    }
                    if xi <= xi_hi {
                        return self.invert_fan(u_from, u_to, xi);
                    }
                    u = u_to;
                }
            }
        }
        u
    }

    /// Increasing sequence of wave-boundary speeds.
    pub fn xi_breaks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.waves {
            match *w {
                ScalarWave::Shock { sigma, .. } => out.push(sigma),
                ScalarWave::Fan { xi_lo, xi_hi, .. } => {
                    out.push(xi_lo);
                    out.push(xi_hi);
                }
            }
        }
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        out
    }

    /// Hull-derivative speed at the state value `m` between the data states:
    /// the shock speed within a jumped interval, λ(m) = f'(m) elsewhere.
    pub fn speed_at_m(&self, m: f64) -> f64 {
        for w in &self.waves {
            if let ScalarWave::Shock { u_minus, u_plus, sigma } = *w {
                let (lo, hi) = (u_minus.min(u_plus), u_minus.max(u_plus));
                if m >= lo - 1e-13 && m <= hi + 1e-13 {
                    return sigma;
                }
            }
        }
        self.flux.fp(m)
    }

    fn invert_fan(&self, u_from: f64, u_to: f64, xi: f64) -> f64 {
        // f' is monotone along the fan; bisect to machine precision.
        let (mut a, mut b) = (u_from, u_to);
        let fa = self.flux.fp(a) - xi;
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            let fm = self.flux.fp(mid) - xi;
            if (fm > 0.0) == (fa > 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Largest Rankine-Hugoniot and Oleinik-chord violations over all jumps
    /// (for validation; both should vanish by construction).
    pub fn jump_residuals(&self) -> (f64, f64) {
        let mut rh: f64 = 0.0;
        let mut ole: f64 = 0.0;
        for w in &self.waves {
            if let ScalarWave::Shock { u_minus, u_plus, sigma } = *w {
                rh = rh.max(
                    (self.flux.f(u_plus) - self.flux.f(u_minus) - sigma * (u_plus - u_minus))
                        .abs(),
                );
                for k in 1..64 {
                    let m = u_minus + (u_plus - u_minus) * k as f64 / 64.0;
                    let chord = (self.flux.f(m) - self.flux.f(u_minus)) / (m - u_minus);
                    // Entropy: σ minimal among chords from the left state.
                    ole = ole.max(sigma - chord);
                }
            }
        }
        (rh, ole)
    }
}

/// Oleinik construction with the default dense grid.
pub fn oleinik_riemann(flux: &ScalarFlux, u_l: f64, u_r: f64) -> ExactScalarSolution {
    oleinik_riemann_with_grid(flux, u_l, u_r, 10_000)
}

/// Hull solver on `grid` sample points; every breakpoint is polished with
/// the tangency equations afterwards, so the grid only fixes the topology.
pub fn oleinik_riemann_with_grid(
    flux: &ScalarFlux,
    u_l: f64,
    u_r: f64,
    grid: usize,
) -> ExactScalarSolution {
    if (u_r - u_l).abs() < 1e-14 {
        return ExactScalarSolution {
            u_left: u_l,
            u_right: u_r,
            waves: vec![],
            flux: flux.clone(),
        };
    }
    let a = u_l.min(u_r);
    let b = u_l.max(u_r);
    let convex = u_l < u_r;
    let n = grid.max(64);
    let us: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let fs: Vec<f64> = us.iter().map(|&u| flux.f(u)).collect();

    // Monotone chain keeping collinear points. For the concave hull run the
    // same chain on the negated ordinates.
    let sign = if convex { 1.0 } else { -1.0 };
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..=n {
        while hull.len() >= 2 {
            let k2 = hull[hull.len() - 1];
            let k1 = hull[hull.len() - 2];
            let cross = (us[k2] - us[k1]) * (sign * fs[i] - sign * fs[k1])
                - (us[i] - us[k1]) * (sign * fs[k2] - sign * fs[k1]);
            if cross < 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    // Edges with an index gap are chords strictly below (above) the flux:
    // shocks. Everything else is contact, i.e. rarefaction material.
    struct Chord {
        p: f64,
        q: f64,
        p_interior: bool,
        q_interior: bool,
    }
    let mut chords: Vec<Chord> = Vec::new();
    for w in hull.windows(2) {
        if w[1] - w[0] > 1 {
            chords.push(Chord {
                p: us[w[0]],
                q: us[w[1]],
                p_interior: w[0] != 0,
                q_interior: w[1] != n,
            });
        }
    }
    for c in &mut chords {
        if let Some((p, q)) = refine_chord(flux, c.p, c.q, c.p_interior, c.q_interior, a, b) {
            c.p = p;
            c.q = q;
        }
    }

    // Assemble traversal from the u_l side. In u-coordinates the chords are
    // ordered along [a, b]; contact intervals fill the gaps.
    chords.sort_by(|x, y| x.p.partial_cmp(&y.p).unwrap());
    let mut cuts: Vec<(f64, f64, bool)> = Vec::new(); // (lo, hi, is_shock)
    let mut pos = a;
    for c in &chords {
        if c.p > pos + 1e-13 {
            cuts.push((pos, c.p, false));
        }
        cuts.push((c.p, c.q, true));
        pos = c.q;
    }
    if pos < b - 1e-13 {
        cuts.push((pos, b, false));
    }
    if !convex {
        cuts.reverse();
    }

    let mut waves = Vec::new();
    for (lo, hi, is_shock) in cuts {
        let (u_from, u_to) = if convex { (lo, hi) } else { (hi, lo) };
        if is_shock {
            let sigma = (flux.f(u_to) - flux.f(u_from)) / (u_to - u_from);
            waves.push(ScalarWave::Shock { u_minus: u_from, u_plus: u_to, sigma });
        } else {
            waves.push(ScalarWave::Fan {
                u_from,
                u_to,
                xi_lo: flux.fp(u_from),
                xi_hi: flux.fp(u_to),
            });
        }
    }
    ExactScalarSolution { u_left: u_l, u_right: u_r, waves, flux: flux.clone() }
}

/// Newton polish of a hull chord: interior endpoints satisfy the tangency
/// condition f'(x) = chord slope. Returns None if Newton leaves [a, b].
fn refine_chord(
    flux: &ScalarFlux,
    mut p: f64,
    mut q: f64,
    p_int: bool,
    q_int: bool,
    a: f64,
    b: f64,
) -> Option<(f64, f64)> {
    if !p_int && !q_int {
        return Some((p, q));
    }
    for _ in 0..60 {
        let span = q - p;
        if span <= 0.0 || p < a - 1e-9 || q > b + 1e-9 {
            return None;
        }
        let df = flux.f(q) - flux.f(p);
        let f1 = if p_int { df - flux.fp(p) * span } else { 0.0 };
        let f2 = if q_int { df - flux.fp(q) * span } else { 0.0 };
        if f1.abs().max(f2.abs()) < 1e-14 * (1.0 + df.abs()) {
            return Some((p, q));
        }
        let (dp, dq);
        match (p_int, q_int) {
            (true, true) => {
                let j11 = -flux.fpp(p) * span;
                let j12 = flux.fp(q) - flux.fp(p);
                let j21 = flux.fp(q) - flux.fp(p);
                let j22 = -flux.fpp(q) * span;
                let det = j11 * j22 - j12 * j21;
                if det.abs() < 1e-300 {
                    return None;
                }
                dp = (f1 * j22 - f2 * j12) / det;
                dq = (j11 * f2 - j21 * f1) / det;
            }
            (true, false) => {
                let g = -flux.fpp(p) * span;
                if g.abs() < 1e-300 {
                    return None;
                }
                dp = f1 / g;
                dq = 0.0;
            }
            (false, true) => {
                let g = -flux.fpp(q) * span;
                if g.abs() < 1e-300 {
                    return None;
                }
                dp = 0.0;
                dq = f2 / g;
            }
            (false, false) => unreachable!(),
        }
        p -= dp;
        q -= dq;
    }
    Some((p, q))
}

/// Cell-averaged profile produced by the reference scheme.
#[derive(Debug, Clone)]
pub struct FvProfile {
    pub xs: Vec<f64>,
    pub dx: f64,
    pub us: Vec<State>,
}

impl FvProfile {
    pub fn total_mass(&self) -> State {
        let mut m = DVector::zeros(self.us[0].len());
        for u in &self.us {
            m += u * self.dx;
        }
        m
    }

    pub fn component(&self, k: usize) -> SampledProfile {
        SampledProfile {
            xs: self.xs.clone(),
            values: self.us.iter().map(|u| u[k]).collect(),
        }
    }
}

/// First-order reference solver: Godunov with per-interface Oleinik
/// solutions for scalar systems, local Lax-Friedrichs otherwise.
pub fn reference_fv(
    system: &HyperbolicSystem,
    u0: &dyn Fn(f64) -> State,
    domain: (f64, f64),
    t_end: f64,
    cells: usize,
    cfl: f64,
) -> Result<FvProfile> {
    if !system.is_conservative() {
        return Err(Error::NotConservative);
    }
    if cells < 100 {
        return Err(Error::Invalid("reference_fv needs at least 100 cells".into()));
    }
    if cfl <= 0.0 || cfl > 0.45 {
        return Err(Error::CFLViolation(cfl));
    }
    let n = system.n();
    let dx = (domain.1 - domain.0) / cells as f64;
    let xs: Vec<f64> = (0..cells).map(|i| domain.0 + (i as f64 + 0.5) * dx).collect();
    let mut us: Vec<State> = xs.iter().map(|&x| u0(x)).collect();

    let scalar_flux = if n == 1 { Some(ScalarFlux::from_system(system)?) } else { None };

    let max_speed = system
        .family_speed_bounds()
        .iter()
        .flat_map(|&(lo, hi)| [lo.abs(), hi.abs()])
        .fold(0.0_f64, f64::max)
        .max(1e-12);

    let mut t = 0.0;
    while t < t_end - 1e-14 {
        let dt = (cfl * dx / max_speed).min(t_end - t);
        let mut fluxes: Vec<State> = Vec::with_capacity(cells + 1);
        // Outflow boundaries: ghost cells copy the ends.
        for i in 0..=cells {
            let ul = if i == 0 { &us[0] } else { &us[i - 1] };
            let ur = if i == cells { &us[cells - 1] } else { &us[i] };
            let f = match &scalar_flux {
                Some(fl) => {
                    if (ul[0] - ur[0]).abs() < 1e-15 {
                        DVector::from_element(1, fl.f(ul[0]))
                    } else {
                        let sol = oleinik_riemann_with_grid(fl, ul[0], ur[0], 512);
                        DVector::from_element(1, fl.f(sol.eval(0.0)))
                    }
                }
                None => {
                    let fl_l = system.flux(ul);
                    let fl_r = system.flux(ur);
                    let el = system.eigensystem(ul)?;
                    let er = system.eigensystem(ur)?;
                    let alpha = el
                        .lambdas
                        .iter()
                        .chain(er.lambdas.iter())
                        .map(|l| l.abs())
                        .fold(0.0_f64, f64::max);
                    (fl_l + fl_r) * 0.5 - (ur - ul) * (0.5 * alpha)
                }
            };
            fluxes.push(f);
        }
        for i in 0..cells {
            let du = (&fluxes[i] - &fluxes[i + 1]) * (dt / dx);
            us[i] += du;
        }
        t += dt;
    }
    Ok(FvProfile { xs, dx, us })
}

/// A scalar profile sampled at increasing positions, interpreted as
/// piecewise linear between samples.
#[derive(Debug, Clone)]
pub struct SampledProfile {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledProfile {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.values[0];
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let i = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// Trapezoid L¹ distance on the union grid restricted to `window`.
pub fn l1_distance(a: &SampledProfile, b: &SampledProfile, window: (f64, f64)) -> f64 {
    let mut grid: Vec<f64> = a
        .xs
        .iter()
        .chain(b.xs.iter())
        .copied()
        .filter(|&x| x >= window.0 && x <= window.1)
        .collect();
    grid.push(window.0);
    grid.push(window.1);
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let mut acc = 0.0;
    for w in grid.windows(2) {
        let d0 = (a.eval(w[0]) - b.eval(w[0])).abs();
        let d1 = (a.eval(w[1]) - b.eval(w[1])).abs();
        acc += 0.5 * (d0 + d1) * (w[1] - w[0]);
    }
    acc
}

/// Least-squares slope of log(error) against log(epsilon).
pub fn convergence_rate(errors: &[f64], epsilons: &[f64]) -> f64 {
    assert_eq!(errors.len(), epsilons.len());
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .zip(epsilons)
        .filter(|(e, _)| **e > 0.0)
        .map(|(&e, &eps)| (eps.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in pts {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
