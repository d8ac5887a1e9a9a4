use std::ffi::{CStr, CString};
use std::ptr;

use elastocontact_ffi::*;

const RUN: &str = r#"
dim = 2
[grid]
n1 = 16
x_max = 4.0
n_tan = 4
[time]
t_final = 0.3
[[sources.boundary]]
amplitude = [0.2, 0.1, 0.0, 0.0, 0.0]
mode = [1, 0]
window = { center = 0.15, width = 0.15 }
"#;

fn last_error() -> String {
    let p = ec_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn stability_matches_library() {
    let mut v = std::mem::MaybeUninit::<EcStability>::uninit();
    let st = unsafe { ec_stability_evaluate(3, 1.0, 0.8, 1.0, 1.0, v.as_mut_ptr()) };
    assert_eq!(st, EcStatus::Ok);
    let v = unsafe { v.assume_init() };
    assert!(v.satisfied);
    assert!((v.rhs - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
    assert_eq!(v.classification, EcClassification::Satisfied);
}

#[test]
fn equality_is_boundary() {
    let mut v = std::mem::MaybeUninit::<EcStability>::uninit();
    assert_eq!(unsafe { ec_stability_evaluate(2, 2.0, 1.5, 1.0, 0.0, v.as_mut_ptr()) }, EcStatus::Ok);
    let v = unsafe { v.assume_init() };
    assert_eq!(v.classification, EcClassification::Boundary);
    assert!(!v.satisfied);
}

#[test]
fn errors_carry_status_and_message() {
    let mut v = std::mem::MaybeUninit::<EcStability>::uninit();
    let st = unsafe { ec_stability_evaluate(4, 1.0, 0.5, 1.0, 1.0, v.as_mut_ptr()) };
    assert_eq!(st, EcStatus::InvalidParameter);
    assert!(last_error().contains("dimension"));

    assert_eq!(unsafe { ec_stability_evaluate(2, 1.0, 0.5, 1.0, 1.0, ptr::null_mut()) }, EcStatus::NullPointer);

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ec_material_gamma_law(2, 0.9, &mut m) }, EcStatus::InvalidParameter);
    assert!(m.is_null());
}

#[test]
fn success_clears_the_last_error() {
    let mut m = ptr::null_mut();
    assert_ne!(unsafe { ec_material_gamma_law(5, 1.4, &mut m) }, EcStatus::Ok);
    assert!(!ec_last_error_message().is_null());
    assert_eq!(unsafe { ec_material_gamma_law(2, 1.4, &mut m) }, EcStatus::Ok);
    assert!(ec_last_error_message().is_null());
    unsafe { ec_material_free(m) };
}

#[test]
fn background_states_round_trip() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ec_material_gamma_law(3, 1.4, &mut m), EcStatus::Ok);
        let n = ec_material_n_unknowns(m);
        assert_eq!(n, 14);
        let mut bg = ptr::null_mut();
        let fp = [1.0, 0.9, 1.1];
        assert_eq!(ec_background_new(m, fp.as_ptr(), 0.8, 0.1, &mut bg), EcStatus::Ok);
        let (mut up, mut um) = (vec![0.0; n], vec![0.0; n]);
        let mut w = 0;
        assert_eq!(ec_background_state(bg, 1, up.as_mut_ptr(), n, &mut w), EcStatus::Ok);
        assert_eq!(ec_background_state(bg, -1, um.as_mut_ptr(), n, &mut w), EcStatus::Ok);
        assert_eq!(w, n);
        // F11 is the first deformation entry after p and v
        assert_eq!((up[4], um[4]), (1.0, 0.8));
        assert_eq!(up[13], 0.1);
        assert_eq!(ec_background_state(bg, 0, up.as_mut_ptr(), n, &mut w), EcStatus::InvalidParameter);

        let mut v = std::mem::MaybeUninit::<EcStability>::uninit();
        assert_eq!(ec_background_stability(bg, v.as_mut_ptr()), EcStatus::Ok);
        assert!((v.assume_init().lhs - 0.2).abs() < 1e-15);
        ec_background_free(bg);
        ec_material_free(m);
    }
}

#[test]
fn simulation_runs_once() {
    let text = CString::new(RUN).unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(ec_simulation_from_toml(text.as_ptr(), &mut sim), EcStatus::Ok);
        assert_eq!(ec_simulation_boundary_nodes(sim), 4);
        let mut psi = [0.0; 4];
        assert_eq!(ec_simulation_psi(sim, psi.as_mut_ptr(), 4, ptr::null_mut()), EcStatus::InvalidState);
        let mut s = std::mem::MaybeUninit::<EcRunSummary>::uninit();
        assert_eq!(ec_simulation_run(sim, s.as_mut_ptr()), EcStatus::Ok);
        let s = s.assume_init();
        assert!(s.steps > 0 && s.g_norm > 0.0 && s.ratio.is_finite());
        assert_eq!(ec_simulation_run(sim, ptr::null_mut()), EcStatus::InvalidState);
        assert_eq!(ec_simulation_psi(sim, psi.as_mut_ptr(), 4, ptr::null_mut()), EcStatus::Ok);
        assert!(psi.iter().any(|x| *x != 0.0));
        ec_simulation_free(sim);
    }
}

#[test]
fn bad_config_is_a_config_error() {
    let text = CString::new("dim = 2\nbogus = 1\n").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { ec_simulation_from_toml(text.as_ptr(), &mut sim) }, EcStatus::Config);
    assert!(sim.is_null());
}

#[test]
fn cfl_violation_surfaces() {
    let text = CString::new(RUN.replace("t_final = 0.3", "t_final = 0.3\ndt_over_h = 50.0")).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { ec_simulation_from_toml(text.as_ptr(), &mut sim) }, EcStatus::CflViolation);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
