use std::ffi::CStr;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use trapgap_ffi::*;

fn last_error() -> String {
    let p = tg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn gap_edges_and_inverse() {
    let (mut sigma, mut mu) = (0.0, 0.0);
    assert_eq!(tg_gap_edges(2, 1.0, 0.5, f64::NAN, &mut sigma, &mut mu), TgStatus::Ok);
    assert!((sigma / (2.0 * PI) - 1.0).abs() < 1e-12);
    assert!((mu / (8.0 * PI / 3.0) - 1.0).abs() < 1e-12);
    assert!(tg_last_error().is_null());
    let (mut d, mut b) = (0.0, 0.0);
    assert_eq!(tg_inverse_design(sigma, mu, 2, f64::NAN, &mut d, &mut b), TgStatus::Ok);
    assert!((d - 1.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
}

#[test]
fn invalid_arguments_report_a_message() {
    let (mut sigma, mut mu) = (0.0, 0.0);
    assert_eq!(tg_gap_edges(2, 1.0, 1.5, f64::NAN, &mut sigma, &mut mu), TgStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(tg_gap_edges(2, 1.0, 0.5, f64::NAN, ptr::null_mut(), &mut mu), TgStatus::NullPointer);
    let mut r = 0.0;
    assert_eq!(tg_hole_radius(2, 1.0, 0.5, -1.0, &mut r), TgStatus::InvalidArgument);
}

#[test]
fn two_screen_and_maxwell() {
    let mut e = [0.0; 4];
    assert_eq!(tg_two_screen(2, 1.0, 2.0, 0.3, 0.05, true, f64::NAN, e.as_mut_ptr()), TgStatus::Ok);
    assert!(e[0] < e[1] && e[1] < e[2] && e[2] < e[3]);
    assert_eq!(tg_maxwell_gap(4.0, 9.0, e.as_mut_ptr()), TgStatus::Ok);
    assert_eq!(e, [-3.0, -2.0, 2.0, 3.0]);
    assert_eq!(tg_maxwell_gap(9.0, 4.0, e.as_mut_ptr()), TgStatus::InvalidArgument);
}

#[test]
fn mesh_and_spectrum_handles() {
    let mut mesh = ptr::null_mut();
    assert_eq!(tg_mesh_build(0.5, 0.02, 1.0 / 16.0, &mut mesh), TgStatus::Ok);
    assert!(!mesh.is_null());
    let mut nodes = 0;
    assert_eq!(tg_mesh_node_count(mesh, &mut nodes), TgStatus::Ok);
    assert!(nodes > 100);
    let mut passed = false;
    assert_eq!(tg_mesh_validate(mesh, &mut passed), TgStatus::Ok);
    assert!(passed);

    let mut spec = ptr::null_mut();
    assert_eq!(
        tg_spectrum_compute(mesh, TgOuter::Neumann, 0.0, 0.0, false, 3, 0.0, 7, &mut spec),
        TgStatus::Ok
    );
    let mut len = 0;
    assert_eq!(tg_spectrum_len(spec, &mut len), TgStatus::Ok);
    assert_eq!(len, 3);
    let mut small = [0.0; 2];
    assert_eq!(tg_spectrum_values(spec, small.as_mut_ptr(), 2), TgStatus::BufferTooSmall);
    let mut vals = [0.0; 3];
    assert_eq!(tg_spectrum_values(spec, vals.as_mut_ptr(), 3), TgStatus::Ok);
    assert!(vals[0].abs() < 1e-8 && vals[1] > 0.0 && vals[1] <= vals[2]);
    tg_spectrum_free(spec);

    let mut bloch = ptr::null_mut();
    assert_eq!(
        tg_spectrum_compute(mesh, TgOuter::Bloch, 1.0, 2.0, false, 2, 0.0, 7, &mut bloch),
        TgStatus::Ok
    );
    let mut b = [0.0; 2];
    assert_eq!(tg_spectrum_values(bloch, b.as_mut_ptr(), 2), TgStatus::Ok);
    assert!(b[0] >= vals[0] - 1e-8);
    tg_spectrum_free(bloch);
    tg_mesh_free(mesh);
    tg_mesh_free(ptr::null_mut());
    tg_spectrum_free(ptr::null_mut());
}

#[test]
fn null_handles_are_rejected() {
    let mut n = 0;
    assert_eq!(tg_mesh_node_count(ptr::null(), &mut n), TgStatus::NullPointer);
    let mut spec = ptr::null_mut();
    assert_eq!(
        tg_spectrum_compute(ptr::null(), TgOuter::Neumann, 0.0, 0.0, false, 1, 0.0, 0, &mut spec),
        TgStatus::NullPointer
    );
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("trapgap.h");
    assert!(header.exists(), "header not generated");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["tg_gap_edges", "tg_mesh_build", "tg_spectrum_compute", "tg_spectrum_free", "tg_last_error"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let src = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        src.path(),
        "#include \"trapgap.h\"\nint main(void) { double s, m; return tg_gap_edges(2, 1.0, 0.5, 0.0, &s, &m); }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(src.path())
        .status()
    {
        Ok(status) => assert!(status.success(), "C compiler rejected the header"),
        Err(e) => eprintln!("no C compiler available, skipping ({e})"),
    }
}
