//! Parametrized-graph representation of a front-tracking trajectory: the
//! strictly increasing map σ(t,·), its generalized inverse X(t,·), the
//! Φ-completion of the state along vertical segments, and the regularity
//! checks on U across interaction times.
//!
//! σ(t,x) = x + (total strength of fronts at or left of x) + (mass of the
//! interaction measure inside the backward λ∞-cone of (t,x)). Every front
//! contributes a plateau of X whose width is its strength; every past
//! interaction contributes a ghost plateau traveling at λ∞ whose width is
//! the Q-drop of that interaction.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::front_tracking::{Front, Trajectory};
use crate::riemann::solve_riemann;
use crate::system::{HyperbolicSystem, State};

/// Dirac masses -[Q] at the interaction points of a trajectory.
#[derive(Debug, Clone)]
pub struct InteractionMeasure {
    /// (time, position, mass ≥ 0)
    pub atoms: Vec<(f64, f64, f64)>,
}

pub fn interaction_measure(traj: &Trajectory) -> InteractionMeasure {
    InteractionMeasure {
        atoms: traj
            .ledger
            .iter()
            .map(|r| (r.time, r.x, (-r.delta_q).max(0.0)))
            .collect(),
    }
}

/// Speed bounding every front and ghost ray: λ∞ = λ̂ + 1.
pub fn lambda_infinity(sys: &HyperbolicSystem) -> f64 {
    sys.lambda_hat() + 1.0
}

/// x ↦ x + Σ_{pos ≤ x} jump, as a sorted step list. The map is strictly
/// increasing and right-continuous; its generalized inverse has a plateau of
/// width `jump` at each step position.
#[derive(Debug, Clone)]
pub struct MonotoneStepMap {
    /// (position, jump > 0, state jump flag) sorted by position.
    pub steps: Vec<(f64, f64)>,
}

impl MonotoneStepMap {
    pub fn sigma(&self, x: f64) -> f64 {
        let mut acc = x;
        for &(pos, jump) in &self.steps {
            if pos <= x {
                acc += jump;
            } else {
                break;
            }
        }
        acc
    }

    /// Generalized inverse: constant on [σ(pos-), σ(pos+)] at each step.
    pub fn x_of(&self, s: f64) -> f64 {
        let mut base = 0.0; // cumulated jumps strictly left of the answer
        for &(pos, jump) in &self.steps {
            let lo = pos + base;
            if s < lo {
                return s - base;
            }
            if s <= lo + jump {
                return pos;
            }
            base += jump;
        }
        s - base
    }

    /// Plateaus (s_minus, s_plus, x).
    pub fn plateaus(&self) -> Vec<(f64, f64, f64)> {
        let mut base = 0.0;
        let mut out = Vec::with_capacity(self.steps.len());
        for &(pos, jump) in &self.steps {
            out.push((pos + base, pos + base + jump, pos));
            base += jump;
        }
        out
    }
}

/// The σ step structure at time t: front strengths plus ghost rays from all
/// past interactions, merged at equal positions.
pub fn sigma_steps(traj: &Trajectory, t: f64) -> Result<MonotoneStepMap> {
    if t < -1e-12 || t > traj.final_time + 1e-12 {
        return Err(Error::OutOfTimeRange(t));
    }
    let lam_inf = lambda_infinity(&traj.sys);
    let fronts = traj.fronts_at(t)?;
    let mut steps: Vec<(f64, f64)> = fronts
        .iter()
        .map(|f| (f.position(t), f.strength.abs()))
        .collect();
    for r in &traj.ledger {
        if r.time <= t + 1e-15 {
            let mass = (-r.delta_q).max(0.0);
            if mass > 0.0 {
                steps.push((r.x + lam_inf * (t - r.time), mass));
            }
        }
    }
    steps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Merge coincident positions.
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(steps.len());
    for (pos, jump) in steps {
        if jump <= 0.0 {
            continue;
        }
        match merged.last_mut() {
            Some(last) if (last.0 - pos).abs() < 1e-13 => last.1 += jump,
            _ => merged.push((pos, jump)),
        }
    }
    Ok(MonotoneStepMap { steps: merged })
}

/// σ^ε(t, x).
pub fn sigma_map(traj: &Trajectory, t: f64, x: f64) -> Result<f64> {
    Ok(sigma_steps(traj, t)?.sigma(x))
}

/// X^ε(t, ·) as a callable generalized inverse.
pub fn x_eps(traj: &Trajectory, t: f64) -> Result<MonotoneStepMap> {
    sigma_steps(traj, t)
}

/// A family of paths bridging jumps: Φ(0) = u_l, Φ(1) = u_r, Lipschitz with
/// constants proportional to |u_r - u_l|.
#[derive(Clone)]
pub struct PathFamily {
    pub name: &'static str,
    build: Arc<dyn Fn(&HyperbolicSystem, &State, &State) -> Result<Vec<State>> + Send + Sync>,
}

impl PathFamily {
    /// Straight segment Φ(s) = u_l + s (u_r - u_l).
    pub fn segment() -> Self {
        PathFamily {
            name: "segment",
            build: Arc::new(|_sys, ul, ur| {
                Ok(vec![ul.clone(), ur.clone()])
            }),
        }
    }

    /// State component of the exact Riemann solution between the endpoint
    /// states, traced in arc length; vertical-segment compatibility holds by
    /// construction.
    pub fn riemann_graph() -> Self {
        PathFamily {
            name: "riemann_graph",
            build: Arc::new(|sys, ul, ur| {
                if (ur - ul).norm() < 1e-14 {
                    return Ok(vec![ul.clone(), ur.clone()]);
                }
                let sol = solve_riemann(sys, ul, ur)?;
                let mut pts = vec![ul.clone()];
                for packet in &sol.packets {
                    for s in &packet.curve {
                        if (&s.state - pts.last().unwrap()).norm() > 1e-13 {
                            pts.push(s.state.clone());
                        }
                    }
                }
                if (ur - pts.last().unwrap()).norm() > 1e-13 {
                    pts.push(ur.clone());
                }
                Ok(pts)
            }),
        }
    }

    /// Piecewise-linear path points from u_l to u_r.
    pub fn path_points(&self, sys: &HyperbolicSystem, ul: &State, ur: &State) -> Result<Vec<State>> {
        (self.build)(sys, ul, ur)
    }

    /// Φ(s; u_l, u_r) by arc-length interpolation of the path points.
    pub fn evaluate(&self, sys: &HyperbolicSystem, s: f64, ul: &State, ur: &State) -> Result<State> {
        let pts = self.path_points(sys, ul, ur)?;
        Ok(eval_polyline(&pts, s))
    }
}

/// Arc-length evaluation of a polyline at normalized parameter s ∈ [0, 1].
fn eval_polyline(pts: &[State], s: f64) -> State {
    if pts.len() == 1 {
        return pts[0].clone();
    }
    let mut lens = Vec::with_capacity(pts.len());
    lens.push(0.0);
    for w in pts.windows(2) {
        let d = (&w[1] - &w[0]).norm();
        lens.push(lens.last().unwrap() + d);
    }
    let total = *lens.last().unwrap();
    if total < 1e-300 {
        return pts[0].clone();
    }
    let target = s.clamp(0.0, 1.0) * total;
    for i in 0..pts.len() - 1 {
        if target <= lens[i + 1] || i == pts.len() - 2 {
            let seg = lens[i + 1] - lens[i];
            let w = if seg < 1e-300 { 0.0 } else { (target - lens[i]) / seg };
            return &pts[i] * (1.0 - w) + &pts[i + 1] * w;
        }
    }
    pts.last().unwrap().clone()
}

/// Both built-in families.
pub fn default_path_families() -> (PathFamily, PathFamily) {
    (PathFamily::segment(), PathFamily::riemann_graph())
}

/// Monotone spatial component X and state component U over the parameter s.
#[derive(Debug, Clone)]
pub struct ParametrizedGraph {
    pub s_grid: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<State>,
    /// (s_minus, s_plus, position) of the maximal constancy intervals of X.
    pub vertical_segments: Vec<(f64, f64, f64)>,
}

impl ParametrizedGraph {
    pub fn eval(&self, s: f64) -> (f64, State) {
        let n = self.s_grid.len();
        if s <= self.s_grid[0] {
            return (self.x[0] - (self.s_grid[0] - s), self.u[0].clone());
        }
        if s >= self.s_grid[n - 1] {
            return (self.x[n - 1] + (s - self.s_grid[n - 1]), self.u[n - 1].clone());
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.s_grid[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = if (self.s_grid[hi] - self.s_grid[lo]).abs() < 1e-300 {
            0.0
        } else {
            (s - self.s_grid[lo]) / (self.s_grid[hi] - self.s_grid[lo])
        };
        (
            self.x[lo] * (1.0 - w) + self.x[hi] * w,
            &self.u[lo] * (1.0 - w) + &self.u[hi] * w,
        )
    }

    /// L¹(ds) distance of the state components over the common s-window.
    pub fn u_l1_distance(&self, other: &ParametrizedGraph) -> f64 {
        let lo = self.s_grid[0].min(other.s_grid[0]);
        let hi = self.s_grid[self.s_grid.len() - 1].max(other.s_grid[other.s_grid.len() - 1]);
        let mut grid: Vec<f64> = self
            .s_grid
            .iter()
            .chain(other.s_grid.iter())
            .copied()
            .collect();
        grid.push(lo);
        grid.push(hi);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut acc = 0.0;
        for w in grid.windows(2) {
            let d0 = (self.eval(w[0]).1 - other.eval(w[0]).1).norm();
            let d1 = (self.eval(w[1]).1 - other.eval(w[1]).1).norm();
            acc += 0.5 * (d0 + d1) * (w[1] - w[0]);
        }
        acc
    }
}

/// Φ-completion of u^ε(t): U(s) = u(t, X(s)) off the vertical segments and
/// the prescribed path (linearly reparametrized) on them.
pub fn phi_completion(
    traj: &Trajectory,
    t: f64,
    family: &PathFamily,
) -> Result<ParametrizedGraph> {
    for r in &traj.ledger {
        if (r.time - t).abs() < 1e-13 {
            return Err(Error::InteractionTime(t));
        }
    }
    let steps = sigma_steps(traj, t)?;
    let fronts = traj.fronts_at(t)?;
    let ambient = traj
        .initial_fronts
        .first()
        .map(|f| f.u_left.clone())
        .unwrap_or_else(|| DVector::zeros(traj.sys.n()));
    let plateaus = steps.plateaus();
    // Window covering all structure.
    let x_lo = plateaus.first().map(|p| p.2).unwrap_or(0.0) - 1.0;
    let x_hi = plateaus.last().map(|p| p.2).unwrap_or(0.0) + 1.0;

    let mut s_grid = Vec::new();
    let mut xs = Vec::new();
    let mut us = Vec::new();
    let mut vertical = Vec::new();

    let state_left_of = |x: f64| -> State {
        crate::front_tracking::profile_at(&fronts, t, x - 1e-11, &ambient)
    };
    let state_right_of =
        |x: f64| -> State { crate::front_tracking::profile_at(&fronts, t, x + 1e-11, &ambient) };

    let mut cursor_x = x_lo;
    let mut cursor_s = steps.sigma(x_lo);
    s_grid.push(cursor_s);
    xs.push(cursor_x);
    us.push(state_right_of(cursor_x));
    for (s_minus, s_plus, x) in &plateaus {
        // Flat stretch of u between the previous plateau and this one.
        let fill = 8;
        for i in 1..=fill {
            let xx = cursor_x + (x - cursor_x) * i as f64 / fill as f64;
            let ss = cursor_s + (s_minus - cursor_s) * i as f64 / fill as f64;
            s_grid.push(ss);
            xs.push(xx);
            us.push(if i == fill { state_left_of(*x) } else { state_right_of(xx) });
        }
        // Vertical segment: the path family bridges the jump (ghost
        // plateaus carry a constant path).
        let ul = state_left_of(*x);
        let ur = state_right_of(*x);
        let pts = family.path_points(&traj.sys, &ul, &ur)?;
        let k = 12;
        for i in 1..=k {
            let beta = i as f64 / k as f64;
            s_grid.push(s_minus + (s_plus - s_minus) * beta);
            xs.push(*x);
            us.push(eval_polyline(&pts, beta));
        }
        vertical.push((*s_minus, *s_plus, *x));
        cursor_x = *x;
        cursor_s = *s_plus;
    }
    let end_s = steps.sigma(x_hi);
    let fill = 8;
    for i in 1..=fill {
        let xx = cursor_x + (x_hi - cursor_x) * i as f64 / fill as f64;
        let ss = cursor_s + (end_s - cursor_s) * i as f64 / fill as f64;
        s_grid.push(ss);
        xs.push(xx);
        us.push(state_right_of(xx));
    }
    Ok(ParametrizedGraph { s_grid, x: xs, u: us, vertical_segments: vertical })
}

/// Sup distance of two graphs after aligning both by normalized arc length.
pub fn graph_distance(g1: &ParametrizedGraph, g2: &ParametrizedGraph) -> f64 {
    let arc = |g: &ParametrizedGraph| -> Vec<f64> {
        let mut acc = vec![0.0];
        for i in 1..g.s_grid.len() {
            let dx = (g.x[i] - g.x[i - 1]).abs();
            let du = (&g.u[i] - &g.u[i - 1]).norm();
            acc.push(acc.last().unwrap() + dx + du);
        }
        let total = *acc.last().unwrap();
        if total > 1e-300 {
            for a in &mut acc {
                *a /= total;
            }
        }
        acc
    };
    let a1 = arc(g1);
    let a2 = arc(g2);
    let sample = |g: &ParametrizedGraph, a: &[f64], q: f64| -> (f64, State) {
        let mut lo = 0;
        let mut hi = a.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if a[mid] <= q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = if (a[hi] - a[lo]).abs() < 1e-300 { 0.0 } else { (q - a[lo]) / (a[hi] - a[lo]) };
        (
            g.x[lo] * (1.0 - w) + g.x[hi] * w,
            &g.u[lo] * (1.0 - w) + &g.u[hi] * w,
        )
    };
    let mut sup = 0.0_f64;
    let m = 600;
    for i in 0..=m {
        let q = i as f64 / m as f64;
        let (x1, u1) = sample(g1, &a1, q);
        let (x2, u2) = sample(g2, &a2, q);
        sup = sup.max((x1 - x2).abs() + (u1 - u2).norm());
    }
    sup
}

/// L¹ distance of the (Λ, Φ) Riemann graph of (u_l, u_r) from the
/// arc-length concatenation of the graphs of (u_l, u_m) and (u_m, u_r),
/// reported with the interaction potential for the ratio check.
#[derive(Debug, Clone)]
pub struct GraphInteractionSlack {
    pub distance: f64,
    pub q: f64,
}

pub fn interaction_estimate_check(
    sys: &HyperbolicSystem,
    u_l: &State,
    u_m: &State,
    u_r: &State,
) -> Result<GraphInteractionSlack> {
    let mk_curve = |a: &State, b: &State| -> Result<Vec<(f64, State)>> {
        if (b - a).norm() < 1e-14 {
            return Ok(vec![(0.0, a.clone())]);
        }
        let sol = solve_riemann(sys, a, b)?;
        let mut out = Vec::new();
        for p in &sol.packets {
            for s in &p.curve {
                out.push((s.speed, s.state.clone()));
            }
        }
        if out.is_empty() {
            out.push((0.0, a.clone()));
        }
        Ok(out)
    };
    let lm = solve_riemann(sys, u_l, u_m)?;
    let mr = solve_riemann(sys, u_m, u_r)?;
    let q = crate::riemann::interaction_potential(sys, &lm, &mr)?.q;
    let whole = mk_curve(u_l, u_r)?;
    let mut concat = mk_curve(u_l, u_m)?;
    concat.extend(mk_curve(u_m, u_r)?);

    // L¹(0,1) over normalized arc length of (Λ, Φ).
    let arclen = |pts: &[(f64, State)]| -> Vec<f64> {
        let mut acc = vec![0.0];
        for w in pts.windows(2) {
            let d = (w[1].0 - w[0].0).abs() + (&w[1].1 - &w[0].1).norm();
            acc.push(acc.last().unwrap() + d);
        }
        let total = acc.last().copied().unwrap_or(0.0).max(1e-300);
        acc.iter().map(|a| a / total).collect()
    };
    let a1 = arclen(&whole);
    let a2 = arclen(&concat);
    let sample = |pts: &[(f64, State)], a: &[f64], t: f64| -> (f64, State) {
        if pts.len() == 1 {
            return pts[0].clone();
        }
        let mut lo = 0;
        let mut hi = a.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if a[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = if (a[hi] - a[lo]).abs() < 1e-300 { 0.0 } else { (t - a[lo]) / (a[hi] - a[lo]) };
        (
            pts[lo].0 * (1.0 - w) + pts[hi].0 * w,
            &pts[lo].1 * (1.0 - w) + &pts[hi].1 * w,
        )
    };
    let m = 400;
    let mut acc = 0.0;
    for i in 0..=m {
        let tq = i as f64 / m as f64;
        let (l1, p1) = sample(&whole, &a1, tq);
        let (l2, p2) = sample(&concat, &a2, tq);
        acc += ((l1 - l2).abs() + (p1 - p2).norm()) / (m as f64 + 1.0);
    }
    Ok(GraphInteractionSlack { distance: acc, q })
}

/// |X(t+δ, s) - X(t-δ, s)| over sampled s whose image lies strictly left of
/// the interaction point (the region untouched by the new cone atom).
pub fn x_continuity_at_event(traj: &Trajectory, event: usize, margin: f64) -> Result<f64> {
    let r = &traj.ledger[event];
    let dt = 1e-9 * (1.0 + r.time.abs());
    let before = sigma_steps(traj, r.time - dt)?;
    let after = sigma_steps(traj, r.time + dt)?;
    let s_at_event = before.sigma(r.x - margin);
    let mut worst = 0.0_f64;
    let m = 200;
    let s_lo = s_at_event - 5.0;
    for i in 0..=m {
        let s = s_lo + (s_at_event - s_lo) * i as f64 / m as f64;
        let xb = before.x_of(s);
        let xa = after.x_of(s);
        if xb < r.x - margin && xa < r.x - margin {
            worst = worst.max((xa - xb).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front_tracking::{init_approximation, run, InitialData, RecordLevel, SchemeParams};

    fn state(v: &[f64]) -> State {
        DVector::from_vec(v.to_vec())
    }

    fn burgers_traj(values: &[f64], xs: Vec<f64>, eps: f64, t_end: f64) -> Trajectory {
        let sys = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        let params = SchemeParams::new(&sys, eps).with_record(RecordLevel::Events);
        let data = InitialData::Breakpoints {
            xs,
            values: values.iter().map(|&v| state(&[v])).collect(),
        };
        let st = init_approximation(&sys, &data, params).unwrap();
        run(st, t_end).unwrap()
    }

    use crate::system::HyperbolicSystem;

    #[test]
    fn sigma_identity_without_fronts_and_steps_with_one() {
        let traj = burgers_traj(&[0.3, 0.3], vec![0.0], 0.1, 1.0);
        // No fronts, no interactions: σ = identity.
        for x in [-2.0, 0.0, 1.7] {
            assert_eq!(sigma_map(&traj, 0.5, x).unwrap(), x);
        }

        let traj = burgers_traj(&[0.8, 0.5], vec![2.0], 0.1, 0.0);
        // One front of strength 0.3 at x = 2.
        for x in [-1.0, 1.999] {
            assert!((sigma_map(&traj, 0.0, x).unwrap() - x).abs() < 1e-12);
        }
        for x in [2.0, 3.0] {
            assert!((sigma_map(&traj, 0.0, x).unwrap() - (x + 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn generalized_inverse_identities() {
        let traj = burgers_traj(&[1.0, 0.5, 0.0], vec![0.0, 1.0], 0.1, 10.0);
        for &t in &[0.5, 1.9, 2.5] {
            let m = sigma_steps(&traj, t).unwrap();
            for i in 0..=100 {
                let x = -2.0 + 6.0 * i as f64 / 100.0;
                let s = m.sigma(x);
                assert!((m.x_of(s) - x).abs() < 1e-10, "X(σ(x)) = x at x={x}");
            }
            // σ(X(s)) = s off plateaus; on plateaus X is the step position.
            for p in m.plateaus() {
                let mid = 0.5 * (p.0 + p.1);
                assert_eq!(m.x_of(mid), p.2);
            }
            // X is 1-Lipschitz in s.
            for i in 0..200 {
                let s0 = -1.0 + i as f64 * 0.04;
                let s1 = s0 + 0.04;
                assert!(m.x_of(s1) - m.x_of(s0) <= 0.04 + 1e-12);
                assert!(m.x_of(s1) >= m.x_of(s0) - 1e-12);
            }
        }
    }

    #[test]
    fn cone_mass_appears_after_interaction() {
        let traj = burgers_traj(&[1.0, 0.5, 0.0], vec![0.0, 1.0], 0.1, 10.0);
        let r = &traj.ledger[0];
        let mass = (-r.delta_q).max(0.0);
        assert!(mass > 0.0);
        let t = r.time + 0.5;
        // Far beyond the cone the ghost plateau has passed: σ gains the mass.
        let far = r.x + lambda_infinity(&traj.sys) * 0.5 + 1.0;
        let sig = sigma_map(&traj, t, far).unwrap();
        let fronts_contrib: f64 = traj
            .fronts_at(t)
            .unwrap()
            .iter()
            .filter(|f| f.position(t) <= far)
            .map(|f| f.strength.abs())
            .sum();
        assert!((sig - far - fronts_contrib - mass).abs() < 1e-10);
    }

    #[test]
    fn segment_family_satisfies_dlm_axioms() {
        let sys = HyperbolicSystem::builtin("p_system", &[2.0]).unwrap();
        let (seg, _) = default_path_families();
        let ul = state(&[1.01, 0.0]);
        let ur = state(&[0.99, 0.01]);
        let p0 = seg.evaluate(&sys, 0.0, &ul, &ur).unwrap();
        let p1 = seg.evaluate(&sys, 1.0, &ul, &ur).unwrap();
        assert_eq!((&p0 - &ul).norm(), 0.0, "Φ(0) = u_l exactly");
        assert_eq!((&p1 - &ur).norm(), 0.0, "Φ(1) = u_r exactly");
        // |∂_s Φ| = |u_r - u_l| for the straight segment.
        let m = 32;
        for i in 0..m {
            let s0 = i as f64 / m as f64;
            let s1 = (i + 1) as f64 / m as f64;
            let d = (seg.evaluate(&sys, s1, &ul, &ur).unwrap()
                - seg.evaluate(&sys, s0, &ul, &ur).unwrap())
            .norm();
            assert!((d * m as f64 - (&ur - &ul).norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn riemann_graph_on_scalar_shock_is_the_segment() {
        let sys = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        let (_, rg) = default_path_families();
        let ul = state(&[1.0]);
        let ur = state(&[0.0]);
        for s in [0.0, 0.3, 0.77, 1.0] {
            let p = rg.evaluate(&sys, s, &ul, &ur).unwrap();
            assert!((p[0] - (1.0 - s)).abs() < 1e-9, "scalar path is the interval");
        }
    }

    #[test]
    fn completion_is_continuous_and_traverses_jumps() {
        let traj = burgers_traj(&[1.0, 0.0], vec![0.0], 0.1, 1.0);
        let (seg, _) = default_path_families();
        let g = phi_completion(&traj, 0.5, &seg).unwrap();
        assert_eq!(g.vertical_segments.len(), 1);
        let (s_minus, s_plus, x) = g.vertical_segments[0];
        assert!((s_plus - s_minus - 1.0).abs() < 1e-12, "plateau width = strength");
        assert!((x - 0.25).abs() < 1e-12, "shock at x = t/2");
        // U continuous in s: adjacent samples close.
        for w in g.s_grid.windows(2).zip(g.u.windows(2)) {
            let ds = w.0[1] - w.0[0];
            let du = (&w.1[1] - &w.1[0]).norm();
            assert!(du <= 2.0 * ds + 1e-9, "U jump {du} over ds {ds}");
        }
        // Off-plateau values equal the profile.
        let (xv, uv) = g.eval(s_minus - 0.3);
        assert!(xv < x);
        assert!((uv[0] - 1.0).abs() < 1e-9);
        let (_, uv) = g.eval(s_plus + 0.3);
        assert!((uv[0] - 0.0).abs() < 1e-9);
        // At an interaction time the completion is refused.
        let traj2 = burgers_traj(&[1.0, 0.5, 0.0], vec![0.0, 1.0], 0.1, 10.0);
        let t0 = traj2.ledger[0].time;
        assert!(matches!(
            phi_completion(&traj2, t0, &seg),
            Err(Error::InteractionTime(_))
        ));
    }

    #[test]
    fn graph_distance_axioms() {
        let traj = burgers_traj(&[1.0, 0.0], vec![0.0], 0.1, 1.0);
        let (seg, _) = default_path_families();
        let g1 = phi_completion(&traj, 0.5, &seg).unwrap();
        assert_eq!(graph_distance(&g1, &g1), 0.0);
        let mut g2 = g1.clone();
        for u in &mut g2.u {
            u[0] += 0.25;
        }
        let d = graph_distance(&g1, &g2);
        assert!((d - 0.25).abs() < 1e-9, "constant state offset, got {d}");
    }

    #[test]
    fn x_continuity_left_of_the_cone() {
        let traj = burgers_traj(&[1.0, 0.5, 0.0], vec![0.0, 1.0], 0.1, 10.0);
        let jump = x_continuity_at_event(&traj, 0, 1e-6).unwrap();
        assert!(jump < 1e-9, "X continuous left of the interaction, jump {jump}");
    }

    #[test]
    fn u_jump_bounded_by_q_drop() {
        let traj = burgers_traj(&[1.0, 0.5, 0.0], vec![0.0, 1.0], 0.1, 10.0);
        let (seg, _) = default_path_families();
        let r = &traj.ledger[0];
        let dt = 1e-6;
        let before = phi_completion(&traj, r.time - dt, &seg).unwrap();
        let after = phi_completion(&traj, r.time + dt, &seg).unwrap();
        let du = before.u_l1_distance(&after);
        let qdrop = -r.delta_q;
        assert!(qdrop > 0.0);
        assert!(du <= 60.0 * qdrop, "‖U(t+)-U(t-)‖ = {du} vs Q drop {qdrop}");
    }

    #[test]
    fn interaction_estimate_against_q() {
        let sys = HyperbolicSystem::builtin("burgers", &[]).unwrap();
        // Merging same-sign shocks.
        let slack =
            interaction_estimate_check(&sys, &state(&[0.9]), &state(&[0.45]), &state(&[0.0]))
                .unwrap();
        assert!(slack.q > 0.0);
        assert!(slack.distance <= 30.0 * slack.q + 1e-6);
        // Midpoint of a single rarefaction: both distance and Q vanish.
        let slack0 =
            interaction_estimate_check(&sys, &state(&[0.0]), &state(&[0.3]), &state(&[0.6]))
                .unwrap();
        assert!(slack0.q < 1e-12);
        assert!(slack0.distance < 1e-6);
    }
}
