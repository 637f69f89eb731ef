//! Strictly hyperbolic systems: flux, Jacobian, eigenstructure, the global
//! parameter `μ(u) = l̂·u`, and the built-in test systems.
//!
//! All wave-curve machinery downstream parametrizes curves by the value of
//! `μ`, so the covector `l̂` must satisfy `l̂·r_j(u) ≠ 0` for every family and
//! every state in the validity ball; this is checked on a sample grid at
//! construction time. Eigenvectors are normalized to unit length with the
//! sign fixed by `l̂·r_j > 0`, which makes curve continuation deterministic.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Conserved state vector. Solvers require states inside the δ2 ball of the
/// system they belong to; that is enforced at operation boundaries, not here.
pub type State = DVector<f64>;

type VecFn = Arc<dyn Fn(&State) -> State + Send + Sync>;
type MatFn = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;
/// k-th derivative of a scalar flux (k = 0 is the flux itself).
type ScalarDerivFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// Eigenvalues and bi-orthonormal eigenvector pairs at one state.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending eigenvalues λ_1 < … < λ_N.
    pub lambdas: Vec<f64>,
    /// Unit right eigenvectors, sign fixed by `l̂·r_j > 0`.
    pub right: Vec<DVector<f64>>,
    /// Left eigenvectors with `l_j·r_j = 1`, `l_i·r_j = 0` for i ≠ j.
    pub left: Vec<DVector<f64>>,
}

/// A strictly hyperbolic system of conservation laws on a ball around
/// `base_state`, together with the global-parameter covector and the
/// artificial-front speed used by the front-tracking scheme.
#[derive(Clone)]
pub struct HyperbolicSystem {
    name: String,
    params: Vec<f64>,
    n: usize,
    flux: VecFn,
    jacobian: MatFn,
    base_state: State,
    delta1: f64,
    delta2: f64,
    lhat: DVector<f64>,
    lambda_hat: f64,
    family_speed_bounds: Vec<(f64, f64)>,
    gap_tol: f64,
    /// Smallness budget on |u_r - u_l| accepted by the Riemann solver.
    riemann_budget: f64,
    /// Exact u-derivatives of the flux, available for scalar built-ins.
    scalar_derivs: Option<ScalarDerivFn>,
    conservative: bool,
}

impl std::fmt::Debug for HyperbolicSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HyperbolicSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("delta1", &self.delta1)
            .field("delta2", &self.delta2)
            .field("lambda_hat", &self.lambda_hat)
            .finish()
    }
}

pub const BUILTIN_NAMES: &[&str] = &[
    "burgers",
    "cubic",
    "buckley_leverett",
    "p_system",
    "shallow_water",
    "triangular_counterexample",
];

impl HyperbolicSystem {
    /// Builds one of the named test systems.
    ///
    /// Parameters: `buckley_leverett = [a]` (mobility ratio, default 1),
    /// `p_system = [gamma, a3]` with `p(v) = v^{-gamma} + a3 (v-1)^3`
    /// (defaults `[2, 0]`; a nonzero `a3` introduces an inflection of the
    /// characteristic speed inside the ball), `shallow_water = [g]`,
    /// `triangular_counterexample = [N]`.
    pub fn builtin(name: &str, params: &[f64]) -> Result<Self> {
        match name {
            "burgers" => Self::scalar_polynomial("burgers", &[0.0, 0.0, 0.5]),
            "cubic" => Self::scalar_polynomial("cubic", &[0.0, 0.0, 0.0, 1.0]),
            "buckley_leverett" => {
                let a = params.first().copied().unwrap_or(1.0);
                if a <= 0.0 {
                    return Err(Error::Invalid("buckley_leverett needs a > 0".into()));
                }
                let f = move |u: f64| u * u / (u * u + a * (1.0 - u) * (1.0 - u));
                let fp = move |u: f64| {
                    let d = u * u + a * (1.0 - u) * (1.0 - u);
                    2.0 * a * u * (1.0 - u) / (d * d)
                };
                Self::scalar_smooth("buckley_leverett", vec![a], Arc::new(f), Arc::new(fp))
            }
            "p_system" => {
                let gamma = params.first().copied().unwrap_or(2.0);
                let a3 = params.get(1).copied().unwrap_or(0.0);
                Self::p_system(gamma, a3)
            }
            "shallow_water" => {
                let g = params.first().copied().unwrap_or(1.0);
                if g <= 0.0 {
                    return Err(Error::Invalid("shallow_water needs g > 0".into()));
                }
                Self::shallow_water(g)
            }
            "triangular_counterexample" => {
                let n = params.first().copied().unwrap_or(2.0) as usize;
                Self::triangular(n, 0.0, 0)
            }
            other => Err(Error::UnknownSystem(other.to_string())),
        }
    }

    /// Triangular counterexample flux with a smooth trigonometric bump of the
    /// given amplitude added to the last flux component (`amplitude = 0`
    /// recovers the unperturbed polynomial flux).
    pub fn triangular_perturbed(n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        Self::triangular(n, amplitude, seed)
    }

    /// Assembles a custom system. `lhat = None` selects the default covector:
    /// the sum of left eigenvectors at the base state, rescaled so that
    /// `min_j l̂·r_j(base) = 1`.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: &str,
        params: Vec<f64>,
        n: usize,
        flux: VecFn,
        jacobian: MatFn,
        base_state: State,
        delta1: f64,
        delta2: f64,
        lhat: Option<DVector<f64>>,
        conservative: bool,
    ) -> Result<Self> {
        let mut sys = HyperbolicSystem {
            name: name.to_string(),
            params,
            n,
            flux,
            jacobian,
            base_state,
            delta1,
            delta2,
            lhat: DVector::zeros(n),
            lambda_hat: 0.0,
            family_speed_bounds: Vec::new(),
            gap_tol: 1e-6,
            riemann_budget: if n == 1 { 2.0 * delta2 } else { delta2 / 4.0 },
            scalar_derivs: None,
            conservative,
        };
        sys.finish_construction(lhat)?;
        Ok(sys)
    }

    fn scalar_polynomial(name: &str, coeffs: &[f64]) -> Result<Self> {
        let c: Vec<f64> = coeffs.to_vec();
        let c2 = c.clone();
        let deriv = Arc::new(move |u: f64, k: usize| poly_deriv(&c2, u, k));
        let cf = c.clone();
        let flux: VecFn = Arc::new(move |u: &State| DVector::from_element(1, poly_deriv(&cf, u[0], 0)));
        let cj = c;
        let jac: MatFn =
            Arc::new(move |u: &State| DMatrix::from_element(1, 1, poly_deriv(&cj, u[0], 1)));
        let mut sys = Self::custom(
            name,
            vec![],
            1,
            flux,
            jac,
            DVector::zeros(1),
            4.0,
            2.0,
            Some(DVector::from_element(1, 1.0)),
            true,
        )?;
        sys.scalar_derivs = Some(deriv);
        Ok(sys)
    }

    /// Scalar system from a smooth flux and its exact first derivative;
    /// higher derivatives fall back to central differences of the previous
    /// order on a widening step schedule.
    fn scalar_smooth(
        name: &str,
        params: Vec<f64>,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        fp: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        let f0 = f.clone();
        let fp0 = fp.clone();
        let deriv: ScalarDerivFn = Arc::new(move |u: f64, k: usize| match k {
            0 => f0(u),
            _ => fd_chain(&|x| fp0(x), u, k - 1),
        });
        let ff = f.clone();
        let flux: VecFn = Arc::new(move |u: &State| DVector::from_element(1, ff(u[0])));
        let jac: MatFn = Arc::new(move |u: &State| DMatrix::from_element(1, 1, fp(u[0])));
        let mut sys = Self::custom(
            name,
            params,
            1,
            flux,
            jac,
            DVector::zeros(1),
            4.0,
            2.0,
            Some(DVector::from_element(1, 1.0)),
            true,
        )?;
        sys.scalar_derivs = Some(deriv);
        Ok(sys)
    }

    /// p-system in Lagrangian coordinates, u = (v, w) with
    /// f = (-w, p(v)), p(v) = v^{-gamma} + a3 (v-1)^3, base state (1, 0).
    fn p_system(gamma: f64, a3: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::Invalid("p_system needs gamma > 0".into()));
        }
        let p = move |v: f64| v.powf(-gamma) + a3 * (v - 1.0).powi(3);
        let pp = move |v: f64| -gamma * v.powf(-gamma - 1.0) + 3.0 * a3 * (v - 1.0) * (v - 1.0);
        let flux: VecFn = Arc::new(move |u: &State| DVector::from_vec(vec![-u[1], p(u[0])]));
        let jac: MatFn = Arc::new(move |u: &State| {
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, pp(u[0]), 0.0])
        });
        let base = DVector::from_vec(vec![1.0, 0.0]);
        // p' must stay negative on the δ1 ball for strict hyperbolicity.
        let delta1 = 0.5;
        for k in 0..=100 {
            let v = 1.0 - delta1 + 2.0 * delta1 * (k as f64) / 100.0;
            if pp(v) >= -1e-6 {
                return Err(Error::Invalid(format!(
                    "p_system not hyperbolic at v = {v}: p'(v) = {:.3e}",
                    pp(v)
                )));
            }
        }
        Self::custom(
            "p_system",
            vec![gamma, a3],
            2,
            flux,
            jac,
            base,
            delta1,
            0.25,
            Some(DVector::from_vec(vec![1.0, 0.0])),
            true,
        )
    }

    /// Shallow water in (h, q): f = (q, q²/h + g h²/2), base state (1, 0).
    fn shallow_water(g: f64) -> Result<Self> {
        let flux: VecFn = Arc::new(move |u: &State| {
            DVector::from_vec(vec![u[1], u[1] * u[1] / u[0] + 0.5 * g * u[0] * u[0]])
        });
        let jac: MatFn = Arc::new(move |u: &State| {
            let (h, q) = (u[0], u[1]);
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, g * h - q * q / (h * h), 2.0 * q / h])
        });
        Self::custom(
            "shallow_water",
            vec![g],
            2,
            flux,
            jac,
            DVector::from_vec(vec![1.0, 0.0]),
            0.5,
            0.25,
            Some(DVector::from_vec(vec![1.0, 0.0])),
            true,
        )
    }

    /// Triangular flux: f_j = (j - N) u_j for j < N and
    /// f_N = u_1 u_N² + u_2 u_N³ + … + u_{N-1} u_N^N + u_N^{N+2},
    /// optionally perturbed by a smooth bump on the last component.
    fn triangular(n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("triangular flux needs N >= 2".into()));
        }
        let bump = TrigBump::new(n, amplitude, seed);
        let b2 = bump.clone();
        let flux: VecFn = Arc::new(move |u: &State| {
            let mut f = DVector::zeros(n);
            for j in 0..n - 1 {
                f[j] = (j as f64 + 1.0 - n as f64) * u[j];
            }
            let un = u[n - 1];
            let mut fn_ = un.powi(n as i32 + 2);
            for k in 0..n - 1 {
                fn_ += u[k] * un.powi(k as i32 + 2);
            }
            f[n - 1] = fn_ + bump.eval(u);
            f
        });
        let jac: MatFn = Arc::new(move |u: &State| {
            let mut a = DMatrix::zeros(n, n);
            for j in 0..n - 1 {
                a[(j, j)] = j as f64 + 1.0 - n as f64;
            }
            let un = u[n - 1];
            for k in 0..n - 1 {
                a[(n - 1, k)] = un.powi(k as i32 + 2) + b2.partial(u, k);
            }
            let mut dn = (n as f64 + 2.0) * un.powi(n as i32 + 1);
            for k in 0..n - 1 {
                dn += (k as f64 + 2.0) * u[k] * un.powi(k as i32 + 1);
            }
            a[(n - 1, n - 1)] = dn + b2.partial(u, n - 1);
            a
        });
        Self::custom(
            "triangular_counterexample",
            vec![n as f64],
            n,
            flux,
            jac,
            DVector::zeros(n),
            0.4,
            0.2,
            Some(DVector::from_element(n, 1.0)),
            true,
        )
    }

    fn finish_construction(&mut self, lhat: Option<DVector<f64>>) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("system dimension must be positive".into()));
        }
        if !(0.0 < self.delta2 && self.delta2 < self.delta1) {
            return Err(Error::Invalid("need 0 < delta2 < delta1".into()));
        }
        // Bootstrap covector from the base-state decomposition when not given.
        let lh = match lhat {
            Some(l) => l,
            None => {
                let eig = self.eigen_raw(&self.base_state.clone(), None)?;
                let mut sum = DVector::zeros(self.n);
                for l in &eig.left {
                    sum += l;
                }
                let mut min_proj = f64::INFINITY;
                for r in &eig.right {
                    let p = sum.dot(r).abs();
                    min_proj = min_proj.min(p);
                }
                if min_proj < 1e-10 {
                    return Err(Error::DegenerateProjection { j: 0, value: min_proj });
                }
                sum / min_proj
            }
        };
        self.lhat = lh;

        // Sample the δ1 ball: validate l̂·r_j ≠ 0, eigenvalue gaps, and
        // collect per-family speed ranges.
        let samples = self.sample_states(200);
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for u in &samples {
            let eig = self.eigen_raw(u, Some(&self.lhat.clone()))?;
            for j in 0..self.n {
                let proj = self.lhat.dot(&eig.right[j]).abs();
                if proj < 1e-8 {
                    return Err(Error::DegenerateProjection { j, value: proj });
                }
                lo[j] = lo[j].min(eig.lambdas[j]);
                hi[j] = hi[j].max(eig.lambdas[j]);
            }
        }
        for j in 0..self.n.saturating_sub(1) {
            if hi[j] >= lo[j + 1] {
                return Err(Error::HyperbolicityLoss(hi[j], lo[j + 1]));
            }
        }
        self.family_speed_bounds = lo.into_iter().zip(hi).collect();
        self.lambda_hat = self.family_speed_bounds[self.n - 1].1 + 1.0;
        Ok(())
    }

    fn sample_states(&self, count: usize) -> Vec<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut out = vec![self.base_state.clone()];
        for j in 0..self.n {
            for s in [-1.0, 1.0] {
                let mut u = self.base_state.clone();
                u[j] += s * 0.95 * self.delta1;
                out.push(u);
            }
        }
        while out.len() < count {
            let v = DVector::from_fn(self.n, |_, _| rng.gen_range(-1.0..1.0));
            if v.norm() <= 1.0 {
                out.push(&self.base_state + v * (0.95 * self.delta1));
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn base_state(&self) -> &State {
        &self.base_state
    }
    pub fn delta1(&self) -> f64 {
        self.delta1
    }
    pub fn delta2(&self) -> f64 {
        self.delta2
    }
    pub fn lhat(&self) -> &DVector<f64> {
        &self.lhat
    }
    /// Speed assigned to artificial fronts; strictly above every wave speed.
    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }
    pub fn family_speed_bounds(&self) -> &[(f64, f64)] {
        &self.family_speed_bounds
    }
    pub fn gap_tolerance(&self) -> f64 {
        self.gap_tol
    }
    pub fn riemann_budget(&self) -> f64 {
        self.riemann_budget
    }
    pub fn is_conservative(&self) -> bool {
        self.conservative
    }
    /// Exact k-th flux derivative for scalar built-ins, if available.
    pub fn scalar_flux_derivative(&self, u: f64, k: usize) -> Option<f64> {
        self.scalar_derivs.as_ref().map(|d| d(u, k))
    }

    pub fn flux(&self, u: &State) -> State {
        (self.flux)(u)
    }
    pub fn jacobian(&self, u: &State) -> DMatrix<f64> {
        (self.jacobian)(u)
    }

    /// Global parameter μ(u) = l̂·u.
    pub fn mu(&self, u: &State) -> f64 {
        self.lhat.dot(u)
    }

    /// Distance of `u` from the base state.
    pub fn radius(&self, u: &State) -> f64 {
        (u - &self.base_state).norm()
    }

    pub fn in_ball2(&self, u: &State) -> bool {
        self.radius(u) <= self.delta2
    }

    pub fn check_in_ball2(&self, u: &State) -> Result<()> {
        let r = self.radius(u);
        if r <= self.delta2 {
            Ok(())
        } else {
            Err(Error::OutOfBall(r))
        }
    }

    /// Full eigendecomposition at `u`, with the deterministic sign
    /// convention `l̂·r_j > 0`.
    pub fn eigensystem(&self, u: &State) -> Result<EigenDecomposition> {
        let lh = self.lhat.clone();
        self.eigen_raw(u, Some(&lh))
    }

    /// j-th eigenvalue at `u` (family index 0-based).
    pub fn lambda(&self, u: &State, j: usize) -> Result<f64> {
        Ok(self.eigensystem(u)?.lambdas[j])
    }

    /// Renormalized eigenvector r̃_j = r_j / (l̂·r_j), so that l̂·r̃_j = 1.
    pub fn normalized_eigenvector(&self, u: &State, j: usize) -> Result<DVector<f64>> {
        let eig = self.eigensystem(u)?;
        let proj = self.lhat.dot(&eig.right[j]);
        if proj.abs() < 1e-10 {
            return Err(Error::DegenerateProjection { j, value: proj.abs() });
        }
        Ok(&eig.right[j] / proj)
    }

    /// Decomposition with an optional sign-fixing covector. During
    /// construction the covector does not exist yet; the first nonzero
    /// component of each eigenvector fixes the sign instead.
    fn eigen_raw(&self, u: &State, sign_fix: Option<&DVector<f64>>) -> Result<EigenDecomposition> {
        let a = self.jacobian(u);
        let scale = a.norm().max(1.0);
        let (mut lambdas, mut right, mut left) = match self.n {
            1 => (vec![a[(0, 0)]], vec![DVector::from_element(1, 1.0)], vec![
                DVector::from_element(1, 1.0),
            ]),
            2 => eigen_2x2(&a)?,
            _ => eigen_schur(&a, scale, self.gap_tol)?,
        };
        for j in 0..self.n.saturating_sub(1) {
            if lambdas[j + 1] - lambdas[j] < self.gap_tol {
                return Err(Error::HyperbolicityLoss(lambdas[j], lambdas[j + 1]));
            }
        }
        for j in 0..self.n {
            let r = &mut right[j];
            r.normalize_mut();
            let s = match sign_fix {
                Some(lh) => lh.dot(r),
                None => *r.iter().find(|x| x.abs() > 1e-12).unwrap_or(&1.0),
            };
            if s < 0.0 {
                *r = -r.clone();
            }
            let dot = left[j].dot(r);
            if dot.abs() < 1e-14 * scale {
                return Err(Error::Invalid(format!("left/right pair {j} nearly orthogonal")));
            }
            left[j] /= dot;
            lambdas[j] = lambdas[j];
        }
        Ok(EigenDecomposition { lambdas, right, left })
    }
}

/// Closed-form decomposition of a real 2x2 matrix with distinct real
/// eigenvalues. Right vectors from the dominant row of (A - λI), left
/// vectors from the dominant column.
fn eigen_2x2(a: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let tr = p + s;
    let det = p * s - q * r;
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return Err(Error::NonReal((-disc).sqrt() / 2.0));
    }
    let sq = disc.sqrt();
    let l1 = 0.5 * (tr - sq);
    let l2 = 0.5 * (tr + sq);
    let rvec = |lam: f64| -> DVector<f64> {
        // (A - λ) v = 0; pick the better-conditioned row.
        let r0 = (p - lam, q);
        let r1 = (r, s - lam);
        let n0 = r0.0.abs() + r0.1.abs();
        let n1 = r1.0.abs() + r1.1.abs();
        let (ra, rb) = if n0 >= n1 { r0 } else { r1 };
        if ra.abs() + rb.abs() < 1e-300 {
            DVector::from_vec(vec![1.0, 0.0])
        } else {
            DVector::from_vec(vec![-rb, ra])
        }
    };
    let lvec = |lam: f64| -> DVector<f64> {
        let c0 = (p - lam, r);
        let c1 = (q, s - lam);
        let n0 = c0.0.abs() + c0.1.abs();
        let n1 = c1.0.abs() + c1.1.abs();
        let (ca, cb) = if n0 >= n1 { c0 } else { c1 };
        if ca.abs() + cb.abs() < 1e-300 {
            DVector::from_vec(vec![1.0, 0.0])
        } else {
            DVector::from_vec(vec![-cb, ca])
        }
    };
    Ok((
        vec![l1, l2],
        vec![rvec(l1), rvec(l2)],
        vec![lvec(l1), lvec(l2)],
    ))
}

/// General-N path: eigenvalues from the real Schur form, eigenvectors by
/// inverse iteration (the spectrum is simple with a known gap, so a few
/// iterations suffice).
fn eigen_schur(
    a: &DMatrix<f64>,
    scale: f64,
    gap_tol: f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Invalid("Schur iteration failed to converge".into()))?;
    let eigs = schur.complex_eigenvalues();
    let mut lambdas: Vec<f64> = Vec::with_capacity(n);
    for e in eigs.iter() {
        if e.im.abs() > 1e-9 * scale {
            return Err(Error::NonReal(e.im));
        }
        lambdas.push(e.re);
    }
    lambdas.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for j in 0..n - 1 {
        if lambdas[j + 1] - lambdas[j] < gap_tol {
            return Err(Error::HyperbolicityLoss(lambdas[j], lambdas[j + 1]));
        }
    }
    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    for &lam in &lambdas {
        right.push(inverse_iteration(a, lam, scale)?);
        left.push(inverse_iteration(&a.transpose(), lam, scale)?);
    }
    Ok((lambdas, right, left))
}

fn inverse_iteration(a: &DMatrix<f64>, lam: f64, scale: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let shift = lam + 1e-9 * scale;
    let b = a - DMatrix::identity(n, n) * shift;
    let lu = b.lu();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64 + 1.0));
    v.normalize_mut();
    for _ in 0..8 {
        let mut w = lu
            .solve(&v)
            .ok_or_else(|| Error::Invalid("singular shift in inverse iteration".into()))?;
        w.normalize_mut();
        let residual = (a * &w - &w * lam).norm();
        v = w;
        if residual <= 1e-12 * scale {
            break;
        }
    }
    let residual = (a * &v - &v * lam).norm();
    if residual > 1e-8 * scale {
        return Err(Error::Invalid(format!(
            "inverse iteration stalled (residual {residual:.3e})"
        )));
    }
    Ok(v)
}

/// Evaluate the k-th derivative of a polynomial Σ c_i u^i.
fn poly_deriv(coeffs: &[f64], u: f64, k: usize) -> f64 {
    let mut acc = 0.0;
    for (i, &c) in coeffs.iter().enumerate().skip(k) {
        let mut fall = 1.0;
        for m in 0..k {
            fall *= (i - m) as f64;
        }
        acc += c * fall * u.powi((i - k) as i32);
    }
    acc
}

/// Central-difference chain: k-th derivative of `g` with a widening step
/// schedule and one Richardson step per level.
fn fd_chain(g: &dyn Fn(f64) -> f64, u: f64, k: usize) -> f64 {
    if k == 0 {
        return g(u);
    }
    let h = 1e-4 * 10f64.powf((k as f64 - 1.0) / 2.0);
    let d = |step: f64| (fd_chain(g, u + step, k - 1) - fd_chain(g, u - step, k - 1)) / (2.0 * step);
    let d1 = d(h);
    let d2 = d(h / 2.0);
    (4.0 * d2 - d1) / 3.0
}

/// Smooth perturbation amp·Π_i cos(a_i u_i + b_i) with frequencies and
/// phases drawn deterministically from `seed`.
#[derive(Clone)]
struct TrigBump {
    amp: f64,
    freq: Vec<f64>,
    phase: Vec<f64>,
}

impl TrigBump {
    fn new(n: usize, amp: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freq = (0..n).map(|_| rng.gen_range(1.0..3.0)).collect();
        let phase = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        TrigBump { amp, freq, phase }
    }

    fn eval(&self, u: &State) -> f64 {
        if self.amp == 0.0 {
            return 0.0;
        }
        let mut p = self.amp;
        for i in 0..u.len() {
            p *= (self.freq[i] * u[i] + self.phase[i]).cos();
        }
        p
    }

    fn partial(&self, u: &State, k: usize) -> f64 {
        if self.amp == 0.0 {
            return 0.0;
        }
        let mut p = -self.amp * self.freq[k];
        for i in 0..u.len() {
            let arg = self.freq[i] * u[i] + self.phase[i];
            p *= if i == k { arg.sin() } else { arg.cos() };
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v: &[f64]) -> State {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn burgers_eigensystem_is_scalar_slope() {
        let sys = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        let eig = sys.eigensystem(&state(&[0.3])).unwrap();
        assert!((eig.lambdas[0] - 0.3).abs() < 1e-14);
        assert!((eig.right[0][0] - 1.0).abs() < 1e-14);
        assert!((eig.left[0][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn shallow_water_closed_form_at_base() {
        let sys = HyperbolicSystem::builtin("shallow_water", &[1.0]).unwrap();
        let eig = sys.eigensystem(&state(&[1.0, 0.0])).unwrap();
        // λ = q/h ∓ √(gh) evaluated at (1, 0).
        assert!((eig.lambdas[0] + 1.0).abs() < 1e-12);
        assert!((eig.lambdas[1] - 1.0).abs() < 1e-12);
        for (j, lam) in eig.lambdas.iter().enumerate() {
            let dir = &eig.right[j] / eig.right[j][0];
            assert!((dir[1] - lam).abs() < 1e-12, "r_j ∝ (1, λ_j)");
        }
    }

    #[test]
    fn p_system_sound_speed() {
        let sys = HyperbolicSystem::builtin("p_system", &[2.0]).unwrap();
        let eig = sys.eigensystem(&state(&[1.0, 0.0])).unwrap();
        // λ = ∓√(-p'(v)) with p(v) = v^{-2}: ∓√2 at v = 1.
        assert!((eig.lambdas[0] + 2f64.sqrt()).abs() < 1e-12);
        assert!((eig.lambdas[1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mu_is_the_lhat_projection() {
        let sys = HyperbolicSystem::custom(
            "proj",
            vec![],
            2,
            Arc::new(|u: &State| u.clone()),
            Arc::new(|u: &State| {
                let _ = u;
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])
            }),
            DVector::zeros(2),
            1.0,
            0.5,
            Some(DVector::from_vec(vec![1.0, 1.0])),
            false,
        )
        .unwrap();
        assert!((sys.mu(&state(&[0.1, 0.2])) - 0.3).abs() < 1e-15);
        assert_eq!(sys.mu(&state(&[0.0, 0.0])), 0.0);
        // p_system carries l̂ = (1, 0): μ projects onto the first component.
        let ps = HyperbolicSystem::builtin("p_system", &[]).unwrap();
        assert!((ps.mu(&state(&[0.4, 7.0])) - 0.4).abs() < 1e-15);
        let sys2 = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        assert!((sys2.mu(&state(&[0.1])) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn normalized_eigenvector_has_unit_projection() {
        for name in ["p_system", "shallow_water"] {
            let sys = HyperbolicSystem::builtin(name, &[]).unwrap();
            let u = state(&[1.05, 0.03]);
            for j in 0..2 {
                let rt = sys.normalized_eigenvector(&u, j).unwrap();
                assert!((sys.lhat().dot(&rt) - 1.0).abs() < 1e-12);
            }
        }
        let sw = HyperbolicSystem::builtin("shallow_water", &[1.0]).unwrap();
        let rt = sw.normalized_eigenvector(&state(&[1.0, 0.0]), 0).unwrap();
        assert!((rt[0] - 1.0).abs() < 1e-12 && (rt[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn builtin_unknown_name_is_rejected() {
        assert!(matches!(
            HyperbolicSystem::builtin("euler", &[]),
            Err(Error::UnknownSystem(_))
        ));
    }

    #[test]
    fn triangular_flux_matches_formula() {
        let sys = HyperbolicSystem::builtin("triangular_counterexample", &[2.0]).unwrap();
        let u = state(&[0.1, -0.05]);
        let f = sys.flux(&u);
        // f_2 = u1 u2² + u2⁴
        assert!((f[1] - (0.1 * 0.0025 + 0.05f64.powi(4))).abs() < 1e-15);
        // Lower-triangular Jacobian keeps r_N = e_N.
        let eig = sys.eigensystem(&u).unwrap();
        assert!(eig.right[1][0].abs() < 1e-12);
        assert!((eig.right[1][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_residuals_on_random_states() {
        for name in BUILTIN_NAMES {
            let sys = HyperbolicSystem::builtin(name, &[]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..100 {
                let v = DVector::from_fn(sys.n(), |_, _| rng.gen_range(-1.0..1.0));
                if v.norm() > 1.0 {
                    continue;
                }
                let u = sys.base_state() + v * (0.9 * sys.delta2());
                let a = sys.jacobian(&u);
                let eig = sys.eigensystem(&u).unwrap();
                for j in 0..sys.n() {
                    let res = (&a * &eig.right[j] - &eig.right[j] * eig.lambdas[j]).norm();
                    assert!(res < 1e-9, "{name}: eigen residual {res:.3e}");
                    for i in 0..sys.n() {
                        let d = eig.left[i].dot(&eig.right[j]);
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((d - want).abs() < 1e-9, "{name}: biorthogonality");
                    }
                }
                for j in 0..sys.n() - 1 {
                    assert!(eig.lambdas[j + 1] - eig.lambdas[j] > sys.gap_tolerance());
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_difference_of_flux() {
        for name in BUILTIN_NAMES {
            let sys = HyperbolicSystem::builtin(name, &[]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let v = DVector::from_fn(sys.n(), |_, _| rng.gen_range(-0.5..0.5));
                let u = sys.base_state() + v * sys.delta2();
                let a = sys.jacobian(&u);
                let h = 1e-6;
                for k in 0..sys.n() {
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[k] += h;
                    um[k] -= h;
                    let col = (sys.flux(&up) - sys.flux(&um)) / (2.0 * h);
                    for i in 0..sys.n() {
                        let denom = a[(i, k)].abs().max(1.0);
                        assert!(
                            (col[i] - a[(i, k)]).abs() / denom < 1e-4,
                            "{name}: dF/du mismatch at ({i},{k})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn family_bounds_disjoint_and_lambda_hat_supersonic() {
        for name in BUILTIN_NAMES {
            let sys = HyperbolicSystem::builtin(name, &[]).unwrap();
            let b = sys.family_speed_bounds();
            for j in 0..sys.n() - 1 {
                assert!(b[j].1 < b[j + 1].0, "{name}: family intervals overlap");
            }
            assert!(sys.lambda_hat() > b[sys.n() - 1].1);
        }
    }

    #[test]
    fn out_of_ball_is_reported() {
        let sys = HyperbolicSystem::builtin("p_system", &[]).unwrap();
        let far = state(&[2.0, 0.0]);
        assert!(matches!(sys.check_in_ball2(&far), Err(Error::OutOfBall(_))));
    }
}
