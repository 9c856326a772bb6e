use std::ffi::CStr;
use std::path::Path;
use std::ptr;

use grac_ffi::*;

fn last_error() -> String {
    let p = grac_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn ground_state() -> f64 {
    let mut alpha = 0.0;
    assert_eq!(unsafe { grac_ground_state(2, &mut alpha) }, GracStatus::Ok);
    alpha
}

fn new_model(fit: GracFit, kappa: f64) -> *mut GracModel {
    let mut m = ptr::null_mut();
    let status = unsafe { grac_model_new(2, 3, 2, 1, fit, kappa, &mut m) };
    assert_eq!(status, GracStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(grac_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn ground_state_is_a_mild_stretch() {
    let alpha = ground_state();
    assert!(alpha > 0.9 && alpha < 1.1, "{alpha}");
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    assert_eq!(unsafe { grac_ground_state(2, ptr::null_mut()) }, GracStatus::NullPointer);
    assert!(last_error().contains("alpha"));
    assert_eq!(unsafe { grac_ground_state(7, &mut 0.0) }, GracStatus::Config);

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { grac_model_new(2, 3, 2, 3, GracFit::L2, 0.0, &mut m) }, GracStatus::InvalidArgument);
    assert!(m.is_null());
    assert_eq!(unsafe { grac_model_new(2, 3, 2, 1, GracFit::L2, -1.0, &mut m) }, GracStatus::InvalidArgument);
    assert_eq!(unsafe { grac_model_new(2, 3, 2, 1, GracFit::L2, 0.0, ptr::null_mut()) }, GracStatus::NullPointer);

    let mut n = 0usize;
    assert_eq!(unsafe { grac_model_num_dofs(ptr::null(), &mut n) }, GracStatus::NullPointer);
    unsafe { grac_model_free(ptr::null_mut()) };
}

#[test]
fn fitted_model_is_free_of_ghost_forces_and_identity_is_not() {
    let a = ground_state();
    let f = [a * 1.03, 0.0, 0.0, a * 1.03];
    let fitted = new_model(GracFit::L2, 0.0);
    let identity = new_model(GracFit::Identity, 0.0);
    let (mut g_fit, mut g_id) = (f64::NAN, f64::NAN);
    unsafe {
        assert_eq!(grac_model_ghost_force(fitted, f.as_ptr(), &mut g_fit), GracStatus::Ok);
        assert_eq!(grac_model_ghost_force(identity, f.as_ptr(), &mut g_id), GracStatus::Ok);
        assert_eq!(grac_model_ghost_force(fitted, ptr::null(), &mut g_fit), GracStatus::NullPointer);
        let bad = [f64::NAN, 0.0, 0.0, 1.0];
        assert_eq!(grac_model_ghost_force(fitted, bad.as_ptr(), &mut g_fit), GracStatus::InvalidArgument);
        grac_model_free(fitted);
        grac_model_free(identity);
    }
    assert!(g_fit < 1e-9, "{g_fit:e}");
    assert!(g_id > 1e-3, "{g_id:e}");
}

#[test]
fn minimise_then_query_the_stability() {
    let a = ground_state();
    let b = [a * 1.03, a * 0.03, 0.0, a * 1.03];
    let m = new_model(GracFit::L1, 1.0);
    let mut n = 0usize;
    let mut lambda = 0.0;
    unsafe {
        assert_eq!(grac_model_num_dofs(m, &mut n), GracStatus::Ok);
        assert!(n > 100);
        assert_eq!(grac_model_min_eigenvalue(m, &mut lambda), GracStatus::InvalidArgument);
        let mut energy = 0.0;
        let mut y = vec![f64::NAN; 2 * n];
        assert_eq!(grac_model_minimize(m, b.as_ptr(), 0.0, &mut energy, ptr::null_mut()), GracStatus::InvalidArgument);
        assert_eq!(grac_model_minimize(m, b.as_ptr(), 1e-8, &mut energy, y.as_mut_ptr()), GracStatus::Ok);
        // Relaxing from y = Bx can only lower the energy.
        assert!(energy < 0.0, "{energy}");
        assert!(y.iter().all(|v| v.is_finite()));
        assert_eq!(grac_model_min_eigenvalue(m, &mut lambda), GracStatus::Ok);
        grac_model_free(m);
    }
    assert!(lambda > 0.0, "{lambda}");
}

#[test]
fn slope_of_an_exact_power_law() {
    let dof = [10.0, 100.0, 1000.0];
    let err = [0.1, 0.01, 0.001];
    let mut s = 0.0;
    assert_eq!(unsafe { grac_fit_slope(dof.as_ptr(), err.as_ptr(), 3, &mut s) }, GracStatus::Ok);
    assert!((s + 1.0).abs() < 1e-12);
    assert_eq!(unsafe { grac_fit_slope(dof.as_ptr(), err.as_ptr(), 2, &mut s) }, GracStatus::InvalidArgument);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/grac.h")).unwrap();
    for name in [
        "grac_last_error",
        "grac_version",
        "grac_ground_state",
        "grac_model_new",
        "grac_model_free",
        "grac_model_num_dofs",
        "grac_model_ghost_force",
        "grac_model_minimize",
        "grac_model_min_eigenvalue",
        "grac_fit_slope",
        "typedef struct GracModel GracModel",
        "GRAC_STATUS_NOT_CONVERGED = 5",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"grac.h\"\nint main(void) { GracModel *m = 0; double a; \
         return grac_ground_state(2, &a) == GRAC_STATUS_OK && m == 0 ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .output();
    match out {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
}
