use hypertrack_core::system::HyperbolicSystem;
use hypertrack_core::wave_curves::*;
use nalgebra::DVector;

fn show(sys: &HyperbolicSystem, j: usize, u0: DVector<f64>, m_target: f64) {
    println!("== from {:?} to m={}", u0.as_slice(), m_target);
    match wave_curve(sys, j, &u0, m_target) {
        Ok(packet) => {
            println!("pieces: {} mixed: {:?} proxy: {:?} exited: {}",
                packet.pieces.len(), packet.diagnostics.mixed_intervals,
                packet.diagnostics.proxy_intervals, packet.diagnostics.exited_ball);
            for (p, s) in packet.pieces.iter().zip(&packet.spans) {
                match p {
                    ElementaryWave::Shock { sigma, .. } => println!("  shock span=({:.5},{:.5}) sigma={:.6}", s.0, s.1, sigma),
                    ElementaryWave::Rarefaction { speed_lo, speed_hi, .. } => println!("  rare  span=({:.5},{:.5}) speeds=({:.6},{:.6})", s.0, s.1, speed_lo, speed_hi),
                }
            }
        }
        Err(e) => println!("ERROR: {e}"),
    }
}

fn main() {
    let ps = HyperbolicSystem::builtin("p_system", &[2.0, -20.0]).unwrap();
    show(&ps, 1, DVector::from_vec(vec![0.98, 0.0]), 1.10);
    let tri = HyperbolicSystem::builtin("triangular_counterexample", &[2.0]).unwrap();
    let u0 = DVector::from_vec(vec![-0.08, -0.17]);
    let mt = tri.mu(&DVector::from_vec(vec![-0.08, 0.17]));
    show(&tri, 1, u0, mt);
}
