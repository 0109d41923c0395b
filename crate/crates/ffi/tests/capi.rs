use std::ffi::{CStr, CString};
use std::ptr;

use rwrs_ffi::*;

const PLANAR: &str =
    r#"{"d":2,"support":[[1,0],[-1,0],[0,1],[0,-1],[0,0]],"probs":[0.2,0.2,0.2,0.2,0.2]}"#;

fn model(json: &str) -> (RwrsStatus, *mut RwrsModel) {
    let json = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { rwrs_model_from_json(json.as_ptr(), &mut m) };
    (st, m)
}

#[test]
fn planar_model_round_trip() {
    let (st, m) = model(PLANAR);
    assert_eq!(st, RwrsStatus::Ok);
    unsafe {
        let mut regime = RwrsRegime::Transient;
        assert_eq!(rwrs_model_regime(m, &mut regime), RwrsStatus::Ok);
        assert_eq!(regime, RwrsRegime::Planar);
        assert_eq!(rwrs_model_dim(m), 2);
        let (mut c, mut eb) = (0.0, -1.0);
        assert_eq!(rwrs_limit_constant(m, &mut c, &mut eb), RwrsStatus::Ok);
        assert!((c - 5.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert_eq!(eb, 0.0);

        let mut p = ptr::null_mut();
        assert_eq!(rwrs_sample_path(m, 100, 7, &mut p), RwrsStatus::Ok);
        assert_eq!((rwrs_path_len(p), rwrs_path_dim(p)), (100, 2));
        let mut coords = vec![0i64; 200];
        assert_eq!(
            rwrs_path_coords(p, coords.as_mut_ptr(), coords.len()),
            RwrsStatus::Ok
        );
        // steps have sup-norm at most 1
        assert!(coords.chunks(2).all(|c| c[0].abs() + c[1].abs() <= 100));
        let mut small = vec![0i64; 10];
        assert_eq!(
            rwrs_path_coords(p, small.as_mut_ptr(), small.len()),
            RwrsStatus::BufferTooSmall
        );
        let mut marks = vec![0.0; 100];
        assert_eq!(
            rwrs_scenery_marks(p, 3, marks.as_mut_ptr(), 100),
            RwrsStatus::Ok
        );
        assert!(marks.iter().all(|x| (0.0..1.0).contains(x)));
        let mut t = 0.0;
        assert_eq!(
            rwrs_changepoint_statistic(marks.as_ptr(), 100, &mut t),
            RwrsStatus::Ok
        );
        assert!(t > 0.0);

        let mut q = ptr::null_mut();
        assert_eq!(rwrs_pillow_quantiles(20, 1000, 1, &mut q), RwrsStatus::Ok);
        let mut q0 = 1.0;
        assert_eq!(rwrs_quantiles_value(q, 0.0, &mut q0), RwrsStatus::Ok);
        assert_eq!(q0, 0.0);
        let mut res = RwrsTestResult::default();
        assert_eq!(
            rwrs_changepoint_test(marks.as_ptr(), 100, m, 1.0, q, &mut res),
            RwrsStatus::Ok
        );
        assert!(res.reject);
        assert!(res.normalized > 0.0);

        rwrs_quantiles_free(q);
        rwrs_path_free(p);
        rwrs_model_free(m);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let (st, m) = model(r#"{"d":1,"support":[[1],[-1]],"probs":[0.5,0.5]}"#);
    assert_eq!(st, RwrsStatus::NotAperiodic);
    assert!(m.is_null());
    let msg = unsafe { CStr::from_ptr(rwrs_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("periodic"));

    let (st, _) = model("{not json");
    assert_eq!(st, RwrsStatus::InvalidArgument);
    let (st, _) = model(r#"{"d":1,"support":[[1],[0]],"probs":[0.5,0.6]}"#);
    assert_eq!(st, RwrsStatus::InvalidLaw);

    unsafe {
        assert_eq!(
            rwrs_model_from_json(ptr::null(), &mut ptr::null_mut()),
            RwrsStatus::NullPointer
        );
        let mut t = 0.0;
        let one = [0.5];
        assert_eq!(
            rwrs_changepoint_statistic(one.as_ptr(), 1, &mut t),
            RwrsStatus::InvalidArgument
        );
        let bogus = CString::new("/nonexistent/quantiles.csv").unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(
            rwrs_quantiles_from_csv(bogus.as_ptr(), &mut q),
            RwrsStatus::Io
        );
        rwrs_model_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(rwrs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/rwrs.h");
    let text = std::fs::read_to_string(header).expect("header generated by build.rs");
    for f in [
        "rwrs_model_from_json",
        "rwrs_changepoint_test",
        "rwrs_last_error_message",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"rwrs.h\"\nint main(void) { RwrsModel *m = 0; return (int)rwrs_model_dim(m); }\n",
    )
    .unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .args(["-std=c99", "-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
