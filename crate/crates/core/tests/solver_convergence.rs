use elastocontact::constitutive::MaterialParams;
use elastocontact::grid::{Field, Grid};
use elastocontact::interface::build_background;
use elastocontact::linearized::BasicState;
use elastocontact::solver::sources::{InteriorSource, Side, Sources, TimeWindow};
use elastocontact::solver::{Diagnostics, RunOutput, RunSetup, Solver, TimeSpec};

fn run(n1: usize, n_tan: usize, dt_over_h: f64, t_final: f64) -> (Grid, RunOutput) {
    let params = MaterialParams::gamma_law(2, 1.4).unwrap();
    let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
    let grid = Grid::new(2, n1, 4.0, n_tan).unwrap();
    let basic = BasicState::background(&grid, &bg, &params).unwrap();
    let mut amp = vec![0.0; 8];
    amp[0] = 1.0;
    amp[1] = 0.5;
    let sources = Sources {
        interior: vec![InteriorSource {
            side: Side::Both,
            amplitude: amp,
            center: 1.0,
            width: 0.8,
            power: 6,
            mode: [1, 0],
            window: TimeWindow { center: 0.3, width: 0.3 },
        }],
        boundary: vec![],
    };
    let setup = RunSetup {
        basic,
        background: bg,
        sources,
        initial: None,
        time: TimeSpec { t_final, cfl: 0.4, dt_over_h: Some(dt_over_h), record_every: 1000 },
        diagnostics: Diagnostics::default(),
    };
    let out = Solver::new(setup).unwrap().run().unwrap();
    (grid, out)
}

/// L2 distance between a coarse solution and a finer one restricted to coarse nodes.
fn dist(gc: &Grid, a: &[Field; 2], gf: &Grid, b: &[Field; 2]) -> f64 {
    let r = gf.n1 / gc.n1;
    let nt = gc.n_tan_total();
    let n = a[0].ncomp;
    let mut acc = 0.0;
    for s in 0..2 {
        for i in 0..=gc.n1 {
            for t in 0..nt {
                let x = a[s].at(gc.node(i, t));
                let y = b[s].at(gf.node(i * r, t));
                for q in 0..n {
                    acc += (x[q] - y[q]).powi(2) * gc.weight(i);
                }
            }
        }
    }
    acc.sqrt()
}

#[test]
fn self_convergence_order() {
    let k = 0.05;
    let (g1, o1) = run(32, 8, k, 0.6);
    let (g2, o2) = run(64, 8, k, 0.6);
    let (g3, o3) = run(128, 8, k, 0.6);
    let e1 = dist(&g1, &o1.w, &g2, &o2.w);
    let e2 = dist(&g2, &o2.w, &g3, &o3.w);
    let order = (e1 / e2).log2();
    eprintln!("e1 {e1:e} e2 {e2:e} order {order}");
    assert!(order >= 1.8, "order {order}");
}
