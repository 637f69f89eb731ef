//! Nonlinearity coefficients π_j^(k), critical exponents, the nondegeneracy
//! (ND) check, and a numeric finder for fully degenerate states.
//!
//! The recursion is π_j^(1) = r_j·∇λ_j and π_j^(k+1) = r_j·∇π_j^(k). For a
//! scalar flux this collapses to π^(k) = f^(k+1), which the built-in scalar
//! systems evaluate exactly; everything else goes through nested directional
//! central differences along r_j with one Richardson step per level and a
//! widening step schedule (high orders are too ill-conditioned for a fixed
//! step).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::{HyperbolicSystem, State};

/// Absolute threshold below which a coefficient counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// Maximum derivative order the numeric recursion accepts.
pub const K_MAX: usize = 6;

/// Box grid specification for [`nd_check`], centered at the base state.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub points_per_dim: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(points_per_dim: usize, half_width: f64) -> Self {
        GridSpec { points_per_dim, half_width }
    }

    fn states(&self, sys: &HyperbolicSystem) -> Vec<State> {
        let n = sys.n();
        let p = self.points_per_dim.max(1);
        let total = p.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut u = sys.base_state().clone();
            for d in 0..n {
                let i = rem % p;
                rem /= p;
                let t = if p == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (p as f64 - 1.0) };
                u[d] += t * self.half_width;
            }
            if sys.in_ball2(&u) {
                out.push(u);
            }
        }
        out
    }
}

/// Per-grid-point nonlinearity report for one family.
#[derive(Debug, Clone)]
pub struct NDReport {
    pub family: usize,
    pub grid: Vec<State>,
    pub pi_values: Vec<Vec<f64>>,
    /// Smallest k (1-based) with |π^(k)| > tolerance, or None when the state
    /// is degenerate up to the inspected order.
    pub critical_exponent: Vec<Option<usize>>,
    /// min over the grid of max_k |π^(k)|.
    pub min_max_pi: f64,
    pub k_max: usize,
    pub tolerance: f64,
}

impl NDReport {
    /// ND verdict: no grid state is degenerate through all inspected orders.
    pub fn nd_positive(&self) -> bool {
        self.min_max_pi > self.tolerance
    }
}

/// π_j^(1..K) at `u`, using the exact derivative chain for scalar built-ins
/// and the numeric recursion otherwise.
pub fn pi_coefficients(
    sys: &HyperbolicSystem,
    u: &State,
    j: usize,
    k_max: usize,
) -> Result<Vec<f64>> {
    sys.check_in_ball2(u)?;
    if k_max > K_MAX {
        return Err(Error::Invalid(format!("pi order {k_max} beyond K = {K_MAX}")));
    }
    if sys.n() == 1 && sys.scalar_flux_derivative(u[0], 0).is_some() {
        return Ok((1..=k_max)
            .map(|k| sys.scalar_flux_derivative(u[0], k + 1).unwrap())
            .collect());
    }
    pi_coefficients_numeric(sys, u, j, k_max)
}

/// Numeric directional-difference path, available for every system.
pub fn pi_coefficients_numeric(
    sys: &HyperbolicSystem,
    u: &State,
    j: usize,
    k_max: usize,
) -> Result<Vec<f64>> {
    if k_max > K_MAX {
        return Err(Error::Invalid(format!("pi order {k_max} beyond K = {K_MAX}")));
    }
    (1..=k_max).map(|k| pi_level(sys, u, j, k)).collect()
}

fn pi_level(sys: &HyperbolicSystem, u: &State, j: usize, level: usize) -> Result<f64> {
    if level == 0 {
        return sys.lambda(u, j);
    }
    let h = step_for(sys, level);
    let dir = sys.eigensystem(u)?.right[j].clone();
    let diff = |hh: f64| -> Result<f64> {
        let up = u + &dir * hh;
        let um = u - &dir * hh;
        if sys.radius(&up) > sys.delta1() || sys.radius(&um) > sys.delta1() {
            return Err(Error::StencilExitsBall);
        }
        Ok((pi_level(sys, &up, j, level - 1)? - pi_level(sys, &um, j, level - 1)?) / (2.0 * hh))
    };
    let d1 = diff(h)?;
    let d2 = diff(h / 2.0)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Step schedule h_k = h0^{1/k} scaled to the ball size (base step 1e-4).
fn step_for(sys: &HyperbolicSystem, level: usize) -> f64 {
    let h0: f64 = 1e-4;
    h0.powf(1.0 / level as f64) * sys.delta1().min(1.0)
}

/// Evaluate π_j^(1..K) with K = N + 1 (unless overridden) on a grid and
/// classify every state by its critical exponent.
pub fn nd_check(
    sys: &HyperbolicSystem,
    j: usize,
    grid: &GridSpec,
    k_max: Option<usize>,
    tolerance: Option<f64>,
) -> Result<NDReport> {
    let k_max = k_max.unwrap_or(sys.n() + 1);
    let tol = tolerance.unwrap_or(DEGENERACY_TOL);
    let states = grid.states(sys);
    let mut pi_values = Vec::with_capacity(states.len());
    let mut crit = Vec::with_capacity(states.len());
    let mut min_max = f64::INFINITY;
    for u in &states {
        let pis = pi_coefficients(sys, u, j, k_max)?;
        let mut exponent = None;
        let mut max_abs = 0.0_f64;
        for (k, &p) in pis.iter().enumerate() {
            max_abs = max_abs.max(p.abs());
            if exponent.is_none() && p.abs() > tol {
                exponent = Some(k + 1);
            }
        }
        min_max = min_max.min(max_abs);
        pi_values.push(pis);
        crit.push(exponent);
    }
    Ok(NDReport {
        family: j,
        grid: states,
        pi_values,
        critical_exponent: crit,
        min_max_pi: min_max,
        k_max,
        tolerance: tol,
    })
}

/// Look for a state where (π^(1), …, π^(N)) vanishes, by damped Newton on
/// that vector field seeded from a coarse grid. `None` is a legitimate
/// answer: genuinely nonlinear systems have no such state.
pub fn find_full_degeneracy(
    sys: &HyperbolicSystem,
    j: usize,
    ball_radius: f64,
) -> Result<Option<State>> {
    let n = sys.n();
    let tol = DEGENERACY_TOL;
    let w = |u: &State| -> Result<DVector<f64>> {
        Ok(DVector::from_vec(pi_coefficients_numeric(sys, u, j, n)?))
    };
    let seeds = GridSpec::new(if n <= 2 { 5 } else { 3 }, ball_radius).states(sys);
    for seed in seeds {
        let mut u = seed.clone();
        let Ok(mut val) = w(&u) else { continue };
        let mut converged = false;
        for _ in 0..40 {
            if val.norm() < tol {
                converged = true;
                break;
            }
            // Finite-difference Jacobian of the π stack.
            let mut jac = DMatrix::zeros(n, n);
            let fd = 1e-5 * sys.delta1();
            let mut ok = true;
            for c in 0..n {
                let mut up = u.clone();
                let mut um = u.clone();
                up[c] += fd;
                um[c] -= fd;
                match (w(&up), w(&um)) {
                    (Ok(a), Ok(b)) => jac.set_column(c, &((a - b) / (2.0 * fd))),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let Some(step) = jac.lu().solve(&val) else { break };
            let mut shrink = 1.0;
            let mut advanced = false;
            for _ in 0..20 {
                let cand = &u - &step * shrink;
                if sys.radius(&cand) <= ball_radius.min(sys.delta2()) {
                    if let Ok(v2) = w(&cand) {
                        if v2.norm() < val.norm() {
                            u = cand;
                            val = v2;
                            advanced = true;
                            break;
                        }
                    }
                }
                shrink *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        if converged || val.norm() < tol {
            return Ok(Some(u));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v: &[f64]) -> State {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn burgers_pi_is_one_zero() {
        let sys = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        for u in [-0.5, 0.0, 0.7] {
            let pis = pi_coefficients(&sys, &state(&[u]), 0, 2).unwrap();
            assert!((pis[0] - 1.0).abs() < 1e-12);
            assert!(pis[1].abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_pi_at_origin() {
        let sys = HyperbolicSystem::builtin("cubic", &[]).unwrap();
        let pis = pi_coefficients(&sys, &state(&[0.0]), 0, 2).unwrap();
        assert!(pis[0].abs() < 1e-12, "f''(0) = 0");
        assert!((pis[1] - 6.0).abs() < 1e-12, "f''' = 6");
    }

    #[test]
    fn scalar_numeric_matches_symbolic_up_to_k3() {
        for name in ["burgers", "cubic"] {
            let sys = HyperbolicSystem::builtin(name, &[]).unwrap();
            for u in [-0.8, -0.1, 0.4, 1.1] {
                let sym = pi_coefficients(&sys, &state(&[u]), 0, 3).unwrap();
                let num = pi_coefficients_numeric(&sys, &state(&[u]), 0, 3).unwrap();
                for k in 0..3 {
                    let denom = sym[k].abs().max(1.0);
                    assert!(
                        (sym[k] - num[k]).abs() / denom < 1e-4,
                        "{name} k={} sym {} num {}",
                        k + 1,
                        sym[k],
                        num[k]
                    );
                }
            }
        }
    }

    #[test]
    fn triangular_pi_matches_closed_form() {
        let sys = HyperbolicSystem::builtin("triangular_counterexample", &[2.0]).unwrap();
        for (u1, u2) in [(0.05, -0.08), (-0.1, 0.04), (0.0, 0.1)] {
            let pis = pi_coefficients_numeric(&sys, &state(&[u1, u2]), 1, 2).unwrap();
            let want1 = 2.0 * u1 + 12.0 * u2 * u2;
            let want2 = 24.0 * u2;
            assert!((pis[0] - want1).abs() < 1e-6, "pi1 {} vs {}", pis[0], want1);
            assert!((pis[1] - want2).abs() < 1e-6, "pi2 {} vs {}", pis[1], want2);
        }
    }

    #[test]
    fn nd_check_burgers_everywhere_gnl() {
        let sys = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        let rep = nd_check(&sys, 0, &GridSpec::new(21, 1.0), None, None).unwrap();
        assert!(rep.nd_positive());
        assert!(rep.critical_exponent.iter().all(|e| *e == Some(1)));
    }

    #[test]
    fn nd_check_cubic_exponent_two_at_origin() {
        let sys = HyperbolicSystem::builtin("cubic", &[]).unwrap();
        let rep = nd_check(&sys, 0, &GridSpec::new(21, 1.0), None, None).unwrap();
        assert!(rep.nd_positive());
        for (u, e) in rep.grid.iter().zip(&rep.critical_exponent) {
            if u[0].abs() < 1e-7 {
                assert_eq!(*e, Some(2), "inflection point");
            } else {
                assert_eq!(*e, Some(1), "away from the inflection");
            }
        }
    }

    #[test]
    fn nd_check_triangular_degenerate_at_origin_to_order_n() {
        let sys = HyperbolicSystem::builtin("triangular_counterexample", &[2.0]).unwrap();
        // K = N = 2: the origin is fully degenerate.
        let rep2 = nd_check(&sys, 1, &GridSpec::new(5, 0.1), Some(2), None).unwrap();
        let origin_idx = rep2
            .grid
            .iter()
            .position(|u| u.norm() < 1e-12)
            .expect("grid contains the origin");
        assert_eq!(rep2.critical_exponent[origin_idx], None);
        // K = N + 1 = 3 rescues it: π^(3) = 24.
        let rep3 = nd_check(&sys, 1, &GridSpec::new(5, 0.1), Some(3), None).unwrap();
        assert!(rep3.nd_positive());
        assert_eq!(rep3.critical_exponent[origin_idx], Some(3));
        assert!((rep3.pi_values[origin_idx][2] - 24.0).abs() < 1e-3);
    }

    #[test]
    fn degeneracy_finder_on_triangular_and_p_system() {
        let sys = HyperbolicSystem::builtin("triangular_counterexample", &[2.0]).unwrap();
        let u = find_full_degeneracy(&sys, 1, 0.1).unwrap().expect("degenerate state");
        assert!(u.norm() < 1e-5, "unperturbed root at the origin, got {u:?}");

        let perturbed = HyperbolicSystem::triangular_perturbed(2, 1e-3, 42).unwrap();
        let u = find_full_degeneracy(&perturbed, 1, 0.1)
            .unwrap()
            .expect("perturbed root survives");
        assert!(u.norm() < 0.1);
        let pis = pi_coefficients_numeric(&perturbed, &u, 1, 2).unwrap();
        assert!(pis.iter().all(|p| p.abs() < 1e-6));

        let ps = HyperbolicSystem::builtin("p_system", &[2.0]).unwrap();
        assert!(find_full_degeneracy(&ps, 1, 0.2).unwrap().is_none(), "GNL family");
    }
}
