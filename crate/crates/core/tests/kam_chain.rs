use qpcocycle::kam_engine::{build_schedule, convergent_chain, iterate_chain, ScheduleParams, StopReason};
use qpcocycle::linalg::{c, Mat, TAU};
use qpcocycle::torus_fourier::{FourierMap, UnitaryConstant};

fn golden() -> Vec<f64> {
    vec![(5f64.sqrt() - 1.0) / 2.0]
}

fn scalar_g(eps: f64, h: f64) -> FourierMap {
    let a = eps / (2.0 * (TAU * h).exp());
    let m = Mat::from_element(1, 1, c(0.0, a));
    FourierMap::from_coeffs(1, 1, [(vec![1], m.clone()), (vec![-1], m)]).with_skew(true)
}

#[test]
fn scalar_chain_to_floor() {
    let sched = build_schedule(&ScheduleParams::new(2.0, 1, 0.5, Some(1e-12))).unwrap();
    let a = UnitaryConstant::from_phases(&[0.0]);
    let g = scalar_g(0.9 * sched.eps0, sched.rows[0].h);
    let t = iterate_chain(&golden(), &a, std::slice::from_ref(&g), &sched).unwrap();
    for f in t.falsifications() {
        eprintln!("falsified m={} {:?}", f.m, f.check);
    }
    assert!(matches!(t.stop, StopReason::FloorReached { .. }));
    assert!(t.falsifications().is_empty());
    let conv = convergent_chain(&t, &sched, &golden(), &a.matrix, &[g]);
    eprintln!("m_star {:?} residual {:.3e} bound {:.3e}", conv.m_star, conv.final_residual, conv.final_bound);
    assert!(conv.all_pass());
}

#[test]
fn su2_chain_to_floor() {
    let sched = build_schedule(&ScheduleParams::new(10.0, 2, 0.5, Some(1e-12))).unwrap();
    let a = UnitaryConstant::from_phases(&[0.05, -0.05]);
    let x = Mat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.5, 0.0), c(-0.5, 0.0), c(0.0, -1.0)]);
    let g = FourierMap::from_coeffs(1, 2, [(vec![1], x.clone()), (vec![-1], -x.adjoint())]).project_skew();
    let g = g.scale(0.9 * sched.eps0 / g.wiener_norm(sched.rows[0].h));
    let t = iterate_chain(&golden(), &a, std::slice::from_ref(&g), &sched).unwrap();
    for f in t.falsifications() {
        eprintln!("falsified m={} {:?}", f.m, f.check);
    }
    eprintln!("steps {} max N {}", t.rows.len(), t.rows.iter().map(|r| r.n_m).max().unwrap());
    assert!(matches!(t.stop, StopReason::FloorReached { .. }));
    assert!(t.falsifications().is_empty());
    let conv = convergent_chain(&t, &sched, &golden(), &a.matrix, &[g]);
    eprintln!("m_star {:?} residual {:.3e} bound {:.3e}", conv.m_star, conv.final_residual, conv.final_bound);
    assert!(conv.all_pass());
}
