//! Full N-family Riemann solver, interaction potentials and amounts, the
//! generalized angle between same-family waves, and the inner-speed-variation
//! interaction bounds as checkable predicates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::{HyperbolicSystem, State};
use crate::wave_curves::{curve_endpoint, wave_curve, WavePacket};

/// Self-similar solution of a Riemann problem: N wave packets separated by
/// constant states, chained by u_{j+1} = ψ_j(μ(u_j) + s_j; u_j).
#[derive(Debug, Clone)]
pub struct RiemannSolution {
    pub u_left: State,
    pub u_right: State,
    /// Signed μ-strengths per family.
    pub strengths: Vec<f64>,
    pub packets: Vec<WavePacket>,
    /// u_0 = u_left, …, u_N = u_right (up to solver tolerance).
    pub intermediate_states: Vec<State>,
}

impl RiemannSolution {
    /// Residual of the endpoint chaining, for diagnostics.
    pub fn chain_residual(&self) -> f64 {
        (self.intermediate_states.last().unwrap() - &self.u_right).norm()
    }
}

/// Interaction potential and amount for a pair of chained Riemann problems.
#[derive(Debug, Clone)]
pub struct InteractionQuantities {
    pub q: f64,
    /// Amount of interaction; equals `q` for this solver.
    pub i_amount: f64,
    /// Generalized angles per same-family same-sign pair (family, θ).
    pub thetas: Vec<(usize, f64)>,
}

/// Solve the Riemann problem by damped Newton on the strength vector.
pub fn solve_riemann(sys: &HyperbolicSystem, u_l: &State, u_r: &State) -> Result<RiemannSolution> {
    sys.check_in_ball2(u_l)?;
    sys.check_in_ball2(u_r)?;
    let gap = (u_r - u_l).norm();
    if gap > sys.riemann_budget() {
        return Err(Error::OutOfBall(gap));
    }
    let n = sys.n();
    if n == 1 {
        let packet = wave_curve(sys, 0, u_l, sys.mu(u_r))?;
        return Ok(RiemannSolution {
            u_left: u_l.clone(),
            u_right: u_r.clone(),
            strengths: vec![packet.strength],
            intermediate_states: vec![u_l.clone(), packet.u_right.clone()],
            packets: vec![packet],
        });
    }

    // Composition map Ψ(s; u_l) evaluated through the composite curves.
    let compose = |s: &DVector<f64>| -> Result<Vec<State>> {
        let mut states = Vec::with_capacity(n + 1);
        states.push(u_l.clone());
        for j in 0..n {
            let prev = states.last().unwrap();
            let target = sys.mu(prev) + s[j];
            let next = curve_endpoint(sys, j, prev, target)?;
            states.push(next);
        }
        Ok(states)
    };

    // Seed from the linearized decomposition.
    let eig = sys.eigensystem(u_l)?;
    let mut s = DVector::from_fn(n, |j, _| eig.left[j].dot(&(u_r - u_l)));
    let mut states = compose(&s)?;
    let mut residual = states.last().unwrap() - u_r;
    for _ in 0..60 {
        if residual.norm() < 1e-11 {
            break;
        }
        // Finite-difference Jacobian of Ψ in the strength vector.
        let mut jac = DMatrix::zeros(n, n);
        let fd = 1e-7;
        for c in 0..n {
            let mut sp = s.clone();
            sp[c] += fd;
            let stp = compose(&sp)?;
            jac.set_column(c, &((stp.last().unwrap() - states.last().unwrap()) / fd));
        }
        let Some(step) = jac.lu().solve(&residual) else {
            return Err(Error::NewtonDivergence { m: 0.0, residual: residual.norm() });
        };
        let mut shrink = 1.0;
        let mut advanced = false;
        for _ in 0..20 {
            let cand = &s - &step * shrink;
            if let Ok(st2) = compose(&cand) {
                let r2 = st2.last().unwrap() - u_r;
                if r2.norm() < residual.norm() {
                    s = cand;
                    states = st2;
                    residual = r2;
                    advanced = true;
                    break;
                }
            }
            shrink *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    if residual.norm() > 1e-10 {
        return Err(Error::NewtonDivergence { m: 0.0, residual: residual.norm() });
    }

    let mut packets = Vec::with_capacity(n);
    for j in 0..n {
        let prev = &states[j];
        packets.push(wave_curve(sys, j, prev, sys.mu(prev) + s[j])?);
    }
    Ok(RiemannSolution {
        u_left: u_l.clone(),
        u_right: u_r.clone(),
        strengths: s.iter().copied().collect(),
        packets,
        intermediate_states: states,
    })
}

/// Evaluate the self-similar profile at ξ = x/t, right-continuous at shocks.
pub fn sample_riemann(sys: &HyperbolicSystem, sol: &RiemannSolution, xi: f64) -> State {
    let mut current = sol.u_left.clone();
    for packet in &sol.packets {
        if packet.is_empty() {
            continue;
        }
        if xi < packet.min_speed() {
            return current;
        }
        if xi < packet.max_speed() {
            return sample_packet(sys, packet, xi);
        }
        current = packet.u_right.clone();
    }
    current
}

/// State inside one packet at wave speed ξ (min_speed ≤ ξ ≤ max_speed).
pub fn sample_packet(sys: &HyperbolicSystem, packet: &WavePacket, xi: f64) -> State {
    let mut st = packet.u_left.clone();
    for (piece, span) in packet.pieces.iter().zip(&packet.spans) {
        let (lo, hi) = piece.speed_range();
        if xi < lo {
            return st;
        }
        if xi >= hi {
            st = match piece {
                crate::wave_curves::ElementaryWave::Shock { u_plus, .. } => u_plus.clone(),
                crate::wave_curves::ElementaryWave::Rarefaction { samples, .. } => {
                    samples.last().unwrap().state.clone()
                }
            };
            continue;
        }
        // Strictly inside a rarefaction: invert λ by bisection in m.
        let (mut a, mut b) = *span;
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if packet.speed_at(sys, mid) < xi {
                a = mid;
            } else {
                b = mid;
            }
        }
        return packet.state_at(sys, 0.5 * (a + b));
    }
    st
}

/// Generalized angle θ_j between two same-family packets: normalized double
/// integral of the negative part of the speed difference, by midpoint
/// tensor quadrature with refinement doubling until the change is < 1e-8.
pub fn generalized_angle(
    sys: &HyperbolicSystem,
    packet1: &WavePacket,
    packet2: &WavePacket,
) -> Result<f64> {
    if packet1.strength.abs() < 1e-14 || packet2.strength.abs() < 1e-14 {
        return Err(Error::ZeroStrength);
    }
    // Negative part vanishes when the right packet is everywhere faster.
    if packet2.min_speed() >= packet1.max_speed() {
        return Ok(0.0);
    }
    // Two single discontinuities: the integrand is constant.
    if let (Some(s1), Some(s2)) = (packet1.single_shock_speed(), packet2.single_shock_speed()) {
        return Ok((-(s2 - s1)).max(0.0));
    }
    let eval = |n: usize| -> f64 {
        let mut acc = 0.0;
        for a in 0..n {
            let ta = (a as f64 + 0.5) / n as f64;
            let ma = packet1.m_left + packet1.strength * ta;
            let sa = packet1.speed_at(sys, ma);
            for b in 0..n {
                let tb = (b as f64 + 0.5) / n as f64;
                let mb = packet2.m_left + packet2.strength * tb;
                let sb = packet2.speed_at(sys, mb);
                acc += (-(sb - sa)).max(0.0);
            }
        }
        acc / (n as f64 * n as f64)
    };
    let mut n = 8;
    let mut prev = eval(n);
    loop {
        n *= 2;
        let next = eval(n);
        if (next - prev).abs() < 1e-8 || n >= 1024 {
            return Ok(next);
        }
        prev = next;
    }
}

/// One side of a front pair for the pairwise potential.
pub enum PairSide<'a> {
    Physical { family: usize, strength: f64, packet: &'a WavePacket },
    /// Artificial front with strength |u_+ - u_-|.
    Artificial { jump: f64 },
}

/// Pairwise interaction potential Q_{αβ} for a left front α and right front
/// β, per the four-case table plus the artificial-front convention.
pub fn front_pair_potential(sys: &HyperbolicSystem, left: &PairSide, right: &PairSide) -> f64 {
    match (left, right) {
        (_, PairSide::Artificial { .. }) => 0.0,
        (PairSide::Artificial { jump }, PairSide::Physical { strength, .. }) => {
            jump * strength.abs()
        }
        (
            PairSide::Physical { family: i, strength: si, packet: pi },
            PairSide::Physical { family: jf, strength: sj, packet: pj },
        ) => {
            if i < jf {
                0.0
            } else if i > jf || si * sj <= 0.0 {
                (si * sj).abs()
            } else {
                let theta = generalized_angle(sys, pi, pj).unwrap_or(0.0);
                theta * (si * sj).abs()
            }
        }
    }
}

/// Interaction potential of two chained Riemann solutions: Σ_{i ≥ j} Θ_{ij}
/// |σ_i σ_j| over the packet pairs, with θ_j weighting same-family
/// same-sign pairs. The amount of interaction I equals Q for this solver.
pub fn interaction_potential(
    sys: &HyperbolicSystem,
    sol_lm: &RiemannSolution,
    sol_mr: &RiemannSolution,
) -> Result<InteractionQuantities> {
    let mismatch = (&sol_lm.u_right - &sol_mr.u_left).norm();
    if mismatch > 1e-8 {
        return Err(Error::ChainMismatch(mismatch));
    }
    let mut q = 0.0;
    let mut thetas = Vec::new();
    for (i, pi) in sol_lm.packets.iter().enumerate() {
        let si = sol_lm.strengths[i];
        if si.abs() < 1e-14 {
            continue;
        }
        for (j, pj) in sol_mr.packets.iter().enumerate() {
            let sj = sol_mr.strengths[j];
            if sj.abs() < 1e-14 || i < j {
                continue;
            }
            if i > j || si * sj <= 0.0 {
                q += (si * sj).abs();
            } else {
                let theta = generalized_angle(sys, pi, pj)?;
                thetas.push((i, theta));
                q += theta * (si * sj).abs();
            }
        }
    }
    Ok(InteractionQuantities { q, i_amount: q, thetas })
}

/// Per-family defect of the strength superposition estimate.
#[derive(Debug, Clone)]
pub struct StrengthReport {
    pub residuals: Vec<f64>,
    pub q: f64,
    /// max_k residual_k / Q; infinite when Q = 0 but a residual exceeds the
    /// solver tolerance.
    pub max_ratio: f64,
}

pub fn check_strength_estimate(
    sys: &HyperbolicSystem,
    u_l: &State,
    u_m: &State,
    u_r: &State,
) -> Result<StrengthReport> {
    let lm = solve_riemann(sys, u_l, u_m)?;
    let mr = solve_riemann(sys, u_m, u_r)?;
    let lr = solve_riemann(sys, u_l, u_r)?;
    let quantities = interaction_potential(sys, &lm, &mr)?;
    let mut residuals = Vec::with_capacity(sys.n());
    let mut max_ratio = 0.0_f64;
    for k in 0..sys.n() {
        let r = (lr.strengths[k] - lm.strengths[k] - mr.strengths[k]).abs();
        residuals.push(r);
        if quantities.q > 1e-14 {
            max_ratio = max_ratio.max(r / quantities.q);
        } else if r > 1e-9 {
            max_ratio = f64::INFINITY;
        }
    }
    Ok(StrengthReport { residuals, q: quantities.q, max_ratio })
}

/// Interaction configuration for the ISV bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsvCase {
    /// Same family j, strengths of equal sign, monotone along the curve.
    SameFamilyMonotone { family: usize },
    /// Same family j, strengths of opposite sign.
    SameFamilyOpposite { family: usize },
    /// A j-wave re-based across a different-family state change.
    DifferentFamily { family: usize },
}

/// Evaluation of one ISV interaction inequality: lhs ≤ rhs_base + C·scale.
#[derive(Debug, Clone)]
pub struct IsvReport {
    pub case: IsvCase,
    pub lhs: f64,
    pub rhs_base: f64,
    /// The O(1)-weighted term: I, min incoming strength, or |u_l-u_m|·|s|.
    pub scale: f64,
}

impl IsvReport {
    pub fn slack(&self, c: f64) -> f64 {
        self.rhs_base + c * self.scale - self.lhs
    }
}

pub fn isv_interaction_bounds(
    sys: &HyperbolicSystem,
    u_l: &State,
    u_m: &State,
    u_r: &State,
    case: IsvCase,
) -> Result<IsvReport> {
    match case {
        IsvCase::SameFamilyMonotone { family } | IsvCase::SameFamilyOpposite { family } => {
            let lm = solve_riemann(sys, u_l, u_m)?;
            let mr = solve_riemann(sys, u_m, u_r)?;
            for k in 0..sys.n() {
                if k != family && (lm.strengths[k].abs() > 1e-9 || mr.strengths[k].abs() > 1e-9) {
                    return Err(Error::CaseMismatch(format!("nonzero strength in family {k}")));
                }
            }
            let s1 = lm.strengths[family];
            let s2 = mr.strengths[family];
            let opposite = matches!(case, IsvCase::SameFamilyOpposite { .. });
            if (s1 * s2 > 0.0) == opposite {
                return Err(Error::CaseMismatch("sign pattern does not match case".into()));
            }
            let lr = solve_riemann(sys, u_l, u_r)?;
            let p1 = &lm.packets[family];
            let p2 = &mr.packets[family];
            let lhs = lr.packets[family].inner_speed_variation();
            let base = p1.inner_speed_variation().max(p2.inner_speed_variation());
            if opposite {
                let scale = (u_m - u_l).norm().min((u_r - u_m).norm());
                Ok(IsvReport { case, lhs, rhs_base: base, scale })
            } else {
                let q = interaction_potential(sys, &lm, &mr)?.i_amount;
                let gap = (p2.min_speed() - p1.min_speed()).max(0.0);
                Ok(IsvReport { case, lhs, rhs_base: base + gap, scale: q })
            }
        }
        IsvCase::DifferentFamily { family } => {
            // (u_m, u_r) is a j-wave; re-base the same strength at u_l.
            let mr = solve_riemann(sys, u_m, u_r)?;
            for k in 0..sys.n() {
                if k != family && mr.strengths[k].abs() > 1e-9 {
                    return Err(Error::CaseMismatch(format!(
                        "right wave has strength in family {k}"
                    )));
                }
            }
            let s = mr.strengths[family];
            let rebased = wave_curve(sys, family, u_l, sys.mu(u_l) + s)?;
            let lhs = rebased.inner_speed_variation();
            let rhs_base = mr.packets[family].inner_speed_variation();
            let scale = (u_l - u_m).norm() * s.abs();
            Ok(IsvReport { case, lhs, rhs_base, scale })
        }
    }
}
