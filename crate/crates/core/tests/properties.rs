use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elastocontact::cli::RunConfig;
use elastocontact::constitutive::{cauchy_stress, density_from_f, eos_eval, internal_energy, MaterialParams, ThermoState};
use elastocontact::grid::Grid;
use elastocontact::hyperbolic::FrontGeometry;
use elastocontact::interface::{build_background, rh_residual, JumpState};
use elastocontact::linearized::{bprime_e, solve_boundary_lift, BasicState, BoundaryBasicJet, BoundaryLinearJet};
use elastocontact::solver::{Diagnostics, RunSetup, Solver, TimeSpec};
use elastocontact::solver::sources::Sources;
use elastocontact::stability::{constants_3d, Stretches};

fn matrix(dim: usize, e: &[f64]) -> [[f64; 3]; 3] {
    let mut f = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            f[i][j] = e[i * 3 + j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    f
}

fn rotation(dim: usize, a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    if dim == 2 {
        return [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    }
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, c.cos(), -c.sin()], [0.0, c.sin(), c.cos()]];
    mul(&mul(&rz, &ry, 3), &rx, 3)
}

fn mul(p: &[[f64; 3]; 3], q: &[[f64; 3]; 3], dim: usize) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            r[i][j] = (0..dim).map(|k| p[i][k] * q[k][j]).sum();
        }
    }
    r
}

fn dims() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(3usize)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn energy_is_frame_indifferent(
        dim in dims(),
        e in prop::collection::vec(-0.3f64..0.3, 9),
        a in prop::collection::vec(0.5f64..2.0, 3),
        s in -1.0f64..1.0,
        ang in (0.0f64..6.3, 0.0f64..6.3, 0.0f64..6.3),
    ) {
        let base = MaterialParams::gamma_law(dim, 1.4).unwrap();
        let params = MaterialParams::with_coefficients(dim, a[..dim].to_vec(), base.eos).unwrap();
        let f = matrix(dim, &e);
        let q = rotation(dim, ang.0, ang.1, ang.2);
        let e0 = internal_energy(&f, s, &params).unwrap();
        let e1 = internal_energy(&mul(&q, &f, dim), s, &params).unwrap();
        prop_assert!((e1 - e0).abs() <= 1e-12 * (1.0 + e0.abs()), "{e0} vs {e1}");
    }

    #[test]
    fn density_scales_with_power_of_dimension(
        dim in dims(),
        e in prop::collection::vec(-0.3f64..0.3, 9),
        alpha in 0.2f64..5.0,
    ) {
        let f = matrix(dim, &e);
        let mut g = f;
        for row in g.iter_mut().take(dim) {
            for x in row.iter_mut().take(dim) {
                *x *= alpha;
            }
        }
        let r0 = density_from_f(&f, dim).unwrap();
        let r1 = density_from_f(&g, dim).unwrap();
        let expect = r0 * alpha.powi(-(dim as i32));
        prop_assert!((r1 - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn sound_speed_matches_pressure_difference_quotient(
        rho in 0.2f64..5.0,
        s in -1.0f64..1.0,
        gamma in 1.1f64..3.0,
    ) {
        let params = MaterialParams::gamma_law(2, gamma).unwrap();
        let h = 1e-6 * rho;
        let pp = eos_eval(rho + h, s, &params).unwrap().p;
        let pm = eos_eval(rho - h, s, &params).unwrap().p;
        let c2 = eos_eval(rho, s, &params).unwrap().c2;
        prop_assert!(((pp - pm) / (2.0 * h) - c2).abs() <= 1e-6 * c2);
    }

    #[test]
    fn stress_is_exactly_symmetric(
        dim in dims(),
        e in prop::collection::vec(-0.3f64..0.3, 9),
        p in 0.1f64..3.0,
    ) {
        let params = MaterialParams::gamma_law(dim, 1.4).unwrap();
        let st = ThermoState::new(dim, p, [0.0; 3], matrix(dim, &e), 0.0);
        let t = cauchy_stress(&st, &params).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                prop_assert_eq!(t[i][k].to_bits(), t[k][i].to_bits());
            }
        }
    }

    #[test]
    fn galilean_shift_keeps_background_a_jump_solution(
        dim in dims(),
        f11 in 0.8f64..1.5,
        frac in 0.4f64..0.95,
        f22 in 0.7f64..1.4,
        f33 in 0.7f64..1.4,
        s_plus in -0.5f64..0.5,
        w in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let params = MaterialParams::gamma_law(dim, 1.4).unwrap();
        // inadmissible stretch choices (negative minus-side pressure) are filtered out
        let bg = build_background([f11, f22, f33], frac * f11, s_plus, &params);
        prop_assume!(bg.is_ok());
        let bg = bg.unwrap();
        let (mut plus, mut minus) = (bg.state(1.0), bg.state(-1.0));
        let mut front = FrontGeometry::flat(dim);
        let n = front.normal();
        for i in 0..dim {
            plus.v[i] += w[i];
            minus.v[i] += w[i];
            front.dt += w[i] * n[i];
        }
        let r0 = rh_residual(&bg.jump_state(), &params).unwrap();
        let r1 = rh_residual(&JumpState::new(plus, minus, front), &params).unwrap();
        let scale = 1.0 + plus.p.abs() + w.iter().map(|x| x * x).sum::<f64>();
        for (a, b) in r0.iter().zip(&r1) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{r0:?} vs {r1:?}");
        }
    }

    #[test]
    fn d3_constant_products_agree(
        f11 in 0.2f64..5.0,
        frac in 0.01f64..0.99,
        f22 in 0.2f64..5.0,
        f33 in 0.2f64..5.0,
    ) {
        let c = constants_3d(&Stretches { dim: 3, f11_plus: f11, f11_minus: frac * f11, f22, f33 });
        let (l, r) = (c.c1 * c.c3, c.c2 * c.c4);
        prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()));
    }

    #[test]
    fn boundary_operator_is_linear(dim in dims(), seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MaterialParams::gamma_law(dim, 1.4).unwrap();
        let bj = BoundaryBasicJet::random(&mut rng, &params).unwrap();
        let (x, y) = (BoundaryLinearJet::random(&mut rng, dim), BoundaryLinearJet::random(&mut rng, dim));
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| a * s + b * t).collect::<Vec<_>>();
        let xy = BoundaryLinearJet {
            v_plus: mix(&x.v_plus, &y.v_plus),
            v_minus: mix(&x.v_minus, &y.v_minus),
            psi: a * x.psi + b * y.psi,
            psi_t: a * x.psi_t + b * y.psi_t,
            psi_tan: [a * x.psi_tan[0] + b * y.psi_tan[0], a * x.psi_tan[1] + b * y.psi_tan[1]],
        };
        let (bx, by, bxy) = (bprime_e(&bj, &x).unwrap(), bprime_e(&bj, &y).unwrap(), bprime_e(&bj, &xy).unwrap());
        for (z, e) in bxy.iter().zip(mix(&bx, &by)) {
            prop_assert!((z - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn boundary_lift_reproduces_data(dim in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MaterialParams::gamma_law(dim, 1.4).unwrap();
        let bj = BoundaryBasicJet::random(&mut rng, &params).unwrap();
        let data: Vec<f64> = (0..2 * dim + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (gp, gm) = solve_boundary_lift(&bj, &data).unwrap();
        let lin = BoundaryLinearJet { v_plus: gp, v_minus: gm, psi: 0.0, psi_t: 0.0, psi_tan: [0.0; 2] };
        for (z, e) in bprime_e(&bj, &lin).unwrap().iter().zip(&data) {
            prop_assert!((z - e).abs() <= 1e-10);
        }
    }

    #[test]
    fn resolved_config_round_trips(
        dim in dims(),
        seed in any::<u64>(),
        n1 in 8usize..512,
        n_tan in prop_oneof![Just(4usize), Just(8), Just(16)],
        f11 in 0.6f64..2.0,
        frac in 0.05f64..0.95,
        t_final in 0.01f64..10.0,
        cfl in 0.05f64..0.9,
    ) {
        let mut c = RunConfig::default();
        c.dim = dim;
        c.seed = seed;
        c.grid.n1 = n1;
        c.grid.n_tan = n_tan;
        c.background.f_plus[0] = f11;
        c.background.f11_minus = frac * f11;
        c.time.t_final = t_final;
        c.time.cfl = cfl;
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solver_preserves_zero_bitwise(dim in dims(), frac in 0.3f64..0.9, f22 in 0.8f64..1.2, t_final in 0.05f64..1.0) {
        let params = MaterialParams::gamma_law(dim, 1.4).unwrap();
        let bg = build_background([1.0, f22, 1.0], frac, 0.0, &params).unwrap();
        let grid = Grid::new(dim, 16, 4.0, 4).unwrap();
        let basic = BasicState::background(&grid, &bg, &params).unwrap();
        let setup = RunSetup {
            basic,
            background: bg,
            sources: Sources::default(),
            initial: None,
            time: TimeSpec { t_final, cfl: 0.4, dt_over_h: None, record_every: 5 },
            diagnostics: Diagnostics::default(),
        };
        let out = Solver::new(setup).unwrap().run().unwrap();
        prop_assert!(out.w.iter().all(|f| f.data.iter().all(|x| x.to_bits() == 0)));
        prop_assert!(out.psi.iter().all(|x| x.to_bits() == 0));
        for r in &out.ledger.rows {
            prop_assert!(r[1..].iter().all(|x| *x == 0.0));
        }
    }
}
