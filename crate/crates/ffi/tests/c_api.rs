use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use hklab::counterexample::synthesize_config_with_xi;
use hklab_ffi::*;

fn last_error() -> String {
    let p = hk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn two_point_heat_kernel_matches_closed_form() {
    unsafe {
        let mut space = ptr::null_mut();
        assert_eq!(hk_space_two_point(1.0, &mut space), HkStatus::Ok);
        let mut kernel = ptr::null_mut();
        assert_eq!(hk_kernel_constant(2, 1.0, &mut kernel), HkStatus::Ok);
        let mut form = ptr::null_mut();
        assert_eq!(hk_form_assemble(space, kernel, &mut form), HkStatus::Ok);
        assert_eq!(hk_form_size(form), 2);
        let mut lambda = f64::NAN;
        assert_eq!(hk_form_lambda1(form, &mut lambda), HkStatus::Ok);
        assert!(lambda.abs() < 1e-12);

        // Generator [[1,-1],[-1,1]], masses 1/2: p_t(0,0) = 1 + e^{-2t}.
        let t = 0.7;
        let mut buf = [0.0; 4];
        assert_eq!(
            hk_form_heat_kernel(form, t, buf.as_mut_ptr(), 4),
            HkStatus::Ok
        );
        let e = (-2.0 * t).exp();
        for (got, want) in buf.iter().zip([1.0 + e, 1.0 - e, 1.0 - e, 1.0 + e]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(
            hk_form_heat_kernel(form, t, buf.as_mut_ptr(), 3),
            HkStatus::BufferTooSmall
        );
        assert!(last_error().contains("4 are needed"));

        let mut volume = 0.0;
        assert_eq!(hk_space_volume(space, 0, 1.5, &mut volume), HkStatus::Ok);
        assert_eq!(volume, 1.0);
        assert_eq!(
            hk_space_volume(space, 5, 1.0, &mut volume),
            HkStatus::UnknownPoint
        );

        hk_form_free(form);
        hk_kernel_free(kernel);
        hk_space_free(space);
    }
}

#[test]
fn status_codes_and_messages() {
    unsafe {
        let mut space = ptr::null_mut();
        assert_eq!(
            hk_space_cantor(0.5, 3, 6, 100, &mut space),
            HkStatus::PointCap
        );
        assert!(space.is_null());
        assert!(last_error().contains("cap"));
        assert_eq!(
            hk_space_two_point(-1.0, &mut space),
            HkStatus::InvalidParameter
        );
        assert_eq!(
            hk_space_two_point(1.0, ptr::null_mut()),
            HkStatus::NullPointer
        );
        assert!(last_error().contains("`out`"));
        let mut v = 0.0;
        assert_eq!(
            hk_space_volume(ptr::null(), 0, 1.0, &mut v),
            HkStatus::NullPointer
        );
        assert_eq!(hk_space_len(ptr::null()), 0);
        assert_eq!(hk_space_two_point(1.0, &mut space), HkStatus::Ok);
        assert!(hk_last_error().is_null());

        let mut scale = ptr::null_mut();
        assert_eq!(hk_scale_constant(2, 1.0, 1.0, &mut scale), HkStatus::Ok);
        let mut kernel = ptr::null_mut();
        assert_eq!(
            hk_kernel_stable_like(space, scale, 1.0, &mut kernel),
            HkStatus::WrongSpace
        );
        hk_scale_free(scale);
        hk_space_free(space);
        hk_space_free(ptr::null_mut());
    }
}

#[test]
fn scale_phi_and_tail_mass_on_cantor() {
    unsafe {
        let mut space = ptr::null_mut();
        assert_eq!(
            hk_space_cantor(1.0 / 3.0, 1, 4, 1 << 12, &mut space),
            HkStatus::Ok
        );
        let n = hk_space_len(space);
        assert_eq!(n, 16);
        let betas: Vec<f64> = (0..n).map(|i| 1.5 + 0.01 * i as f64).collect();
        let mut scale = ptr::null_mut();
        assert_eq!(
            hk_scale_from_table(betas.as_ptr(), n, 1.5, 1.7, 1.0, &mut scale),
            HkStatus::Ok
        );
        let mut phi = 0.0;
        assert_eq!(hk_scale_phi(scale, 3, 0.5, &mut phi), HkStatus::Ok);
        assert!((phi - 0.5f64.powf(1.53)).abs() < 1e-15);
        assert_eq!(hk_scale_phi(scale, 3, 2.0, &mut phi), HkStatus::Ok);
        assert!((phi - 2.0f64.powf(1.5)).abs() < 1e-12);

        let mut kernel = ptr::null_mut();
        assert_eq!(
            hk_kernel_cantor_axis(space, scale, &mut kernel),
            HkStatus::Ok
        );
        let mut tail = 0.0;
        assert_eq!(
            hk_kernel_tail_mass(kernel, space, 0, 0.5, &mut tail),
            HkStatus::Ok
        );
        assert!(tail > 0.0);
        let radii = [0.05, 0.1, 0.5];
        let (mut best, mut passed) = (0.0, false);
        assert_eq!(
            hk_tj_check(
                kernel,
                space,
                scale,
                radii.as_ptr(),
                3,
                1e6,
                &mut best,
                &mut passed
            ),
            HkStatus::Ok
        );
        assert!(passed && best > 0.0);
        assert!(best >= phi_times_tail(scale, tail));
        hk_kernel_free(kernel);
        hk_scale_free(scale);
        hk_space_free(space);
    }
}

unsafe fn phi_times_tail(scale: *const HkScale, tail: f64) -> f64 {
    let mut phi = 0.0;
    assert_eq!(hk_scale_phi(scale, 0, 0.5, &mut phi), HkStatus::Ok);
    phi * tail
}

#[test]
fn counterexample_and_recursion() {
    unsafe {
        let mut c = HkCounterexampleConfig::default();
        assert_eq!(
            hk_counterexample_synthesize(4.0, 1.0 / 3.0, &mut c),
            HkStatus::Ok
        );
        let core = synthesize_config_with_xi(4.0, 1.0 / 3.0).unwrap();
        assert_eq!(c.n, core.n);
        assert_eq!(c.beta2, core.beta2);
        assert_eq!(
            hk_counterexample_synthesize(0.5, f64::NAN, &mut c),
            HkStatus::Ok
        );
        assert_eq!(c.xi, 0.875);
        assert_eq!(
            hk_counterexample_synthesize(-1.0, f64::NAN, &mut c),
            HkStatus::InvalidParameter
        );

        let mut space = ptr::null_mut();
        assert_eq!(
            hk_space_cantor(1.0 / 3.0, 2, 2, 1 << 12, &mut space),
            HkStatus::Ok
        );
        let mut scale = ptr::null_mut();
        assert_eq!(
            hk_scale_counterexample(space, 4.0, 1.0 / 3.0, 10.0, &mut scale),
            HkStatus::Ok
        );
        hk_scale_free(scale);
        hk_space_free(space);

        // Fixed point of p = 1 + sqrt(p)/2 + p/2: sqrt(p) = 2.
        let mut p = 0.0;
        assert_eq!(
            hk_recursion_limit(1.0, 0.5, 0.5, 0.0, 1e-13, &mut p),
            HkStatus::Ok
        );
        let want = 4.0;
        assert!((p - want).abs() < 1e-9, "{p} vs {want}");
        assert_eq!(
            hk_recursion_limit(1.0, 1.5, 0.5, 0.0, 1e-13, &mut p),
            HkStatus::InvalidParameter
        );
    }
}

#[test]
fn header_declares_api_and_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/hklab.h")).unwrap();
    for name in [
        "hk_last_error",
        "hk_space_cantor",
        "hk_scale_phi",
        "hk_kernel_tail_mass",
        "hk_tj_check",
        "hk_form_assemble",
        "hk_form_lambda1",
        "hk_form_heat_kernel",
        "hk_counterexample_synthesize",
        "hk_recursion_limit",
        "typedef struct HkSpace HkSpace",
        "HK_STATUS_POINT_CAP = 3",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    match Command::new("cc")
        .args([
            "-fsyntax-only",
            "-Wall",
            "-Werror",
            "-x",
            "c",
            &format!("{dir}/include/hklab.h"),
        ])
        .status()
    {
        Ok(status) => assert!(status.success(), "header does not compile as C"),
        Err(_) => eprintln!("no C compiler on PATH; skipping syntax check"),
    }
}
