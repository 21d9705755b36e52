use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use nash_mtl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { nmtl_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn new_solver() -> *mut NmtlSolver {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nmtl_solver_new(&mut s) }, NmtlStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn solve_orthogonal_pair() {
    let s = new_solver();
    // columns (2, 0) and (0, 0.5): alpha = 1/|g_i|.
    let g = [2.0, 0.0, 0.0, 0.5];
    let (mut alpha, mut dir) = ([0.0; 2], [0.0; 2]);
    let mut status = NmtlSolveStatus::Degenerate;
    let mut res = f64::NAN;
    let rc = unsafe { nmtl_solve(s, g.as_ptr(), 2, 2, alpha.as_mut_ptr(), dir.as_mut_ptr(), &mut status, &mut res) };
    assert_eq!(rc, NmtlStatus::Ok, "{}", last_error());
    assert_eq!(status, NmtlSolveStatus::Exact);
    assert!((alpha[0] - 0.5).abs() < 1e-9 && (alpha[1] - 2.0).abs() < 1e-9, "{alpha:?}");
    assert!((dir[0] - 1.0).abs() < 1e-9 && (dir[1] - 1.0).abs() < 1e-9, "{dir:?}");
    assert!(res <= 1e-6);
    unsafe { nmtl_solver_free(s) };
}

#[test]
fn warm_started_solver_agrees() {
    let s = new_solver();
    assert_eq!(unsafe { nmtl_solver_configure(s, 1e-8, 20, true) }, NmtlStatus::Ok);
    let g = [1.0, 0.2, -0.1, -0.3, 1.0, 0.4, 0.1, 0.1, 1.0];
    let mut first = [0.0; 3];
    let mut dir = [0.0; 3];
    for round in 0..3 {
        let mut alpha = [0.0; 3];
        let rc = unsafe { nmtl_solve(s, g.as_ptr(), 3, 3, alpha.as_mut_ptr(), dir.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
        assert_eq!(rc, NmtlStatus::Ok);
        if round == 0 {
            first = alpha;
        }
        for i in 0..3 {
            assert!((alpha[i] - first[i]).abs() <= 1e-7 * first[i]);
        }
    }
    unsafe { nmtl_solver_free(s) };
}

#[test]
fn degenerate_input_reports_status() {
    let s = new_solver();
    let g = [1.0, 0.0, 2.0, 0.0];
    let (mut alpha, mut dir) = ([9.0; 2], [0.0; 2]);
    let mut status = NmtlSolveStatus::Exact;
    let rc = unsafe { nmtl_solve(s, g.as_ptr(), 2, 2, alpha.as_mut_ptr(), dir.as_mut_ptr(), &mut status, ptr::null_mut()) };
    assert_eq!(rc, NmtlStatus::Ok);
    assert_eq!(status, NmtlSolveStatus::Degenerate);
    assert_eq!(alpha, [0.0, 0.0]);
    unsafe { nmtl_solver_free(s) };
}

#[test]
fn errors_are_reported() {
    let s = new_solver();
    let mut out = [0.0; 2];
    let rc = unsafe { nmtl_solve(s, ptr::null(), 2, 2, out.as_mut_ptr(), out.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(rc, NmtlStatus::NullPointer);
    assert!(last_error().contains("null"));

    let g = [f64::NAN, 0.0, 0.0, 1.0];
    let rc = unsafe { nmtl_solve(s, g.as_ptr(), 2, 2, out.as_mut_ptr(), out.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(rc, NmtlStatus::InvalidArgument);

    let rc = unsafe { nmtl_solve(s, g.as_ptr(), 0, 2, out.as_mut_ptr(), out.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(rc, NmtlStatus::InvalidArgument);

    assert_eq!(unsafe { nmtl_solver_configure(s, -1.0, 5, false) }, NmtlStatus::InvalidArgument);
    unsafe { nmtl_solver_free(s) };
    unsafe { nmtl_solver_free(ptr::null_mut()) };

    let name = CString::new("adamw").unwrap();
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { nmtl_aggregator_new(name.as_ptr(), 0, &mut a) }, NmtlStatus::InvalidArgument);
    assert!(a.is_null());
    assert!(last_error().contains("adamw"));
}

#[test]
fn last_error_truncates() {
    let s = new_solver();
    let mut out = [0.0; 2];
    unsafe { nmtl_solve(s, ptr::null(), 2, 2, out.as_mut_ptr(), out.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    let mut buf = [1 as c_char; 4];
    let n = unsafe { nmtl_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 3);
    assert_eq!(buf[3], 0);
    assert_eq!(unsafe { nmtl_last_error(ptr::null_mut(), 0) }, n);
    unsafe { nmtl_solver_free(s) };
}

#[test]
fn aggregator_counts_solves() {
    let name = CString::new("nash").unwrap();
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { nmtl_aggregator_new(name.as_ptr(), 7, &mut a) }, NmtlStatus::Ok);
    let g = [1.0, 0.1, 0.2, 1.0];
    let losses = [1.0, 2.0];
    let mut dir = [0.0; 2];
    for _ in 0..4 {
        let rc = unsafe { nmtl_aggregator_step(a, g.as_ptr(), 2, 2, losses.as_ptr(), dir.as_mut_ptr()) };
        assert_eq!(rc, NmtlStatus::Ok, "{}", last_error());
    }
    assert_eq!(unsafe { nmtl_aggregator_solver_calls(a) }, 4);
    assert!((dir[0] * dir[0] + dir[1] * dir[1] - 2.0).abs() < 1e-6);
    unsafe { nmtl_aggregator_free(a) };
    assert_eq!(unsafe { nmtl_aggregator_solver_calls(ptr::null()) }, 0);
}

#[test]
fn mgda_and_toy() {
    let g = [1.0, 0.0, 0.0, 1.0];
    let (mut w, mut d) = ([0.0; 2], [0.0; 2]);
    assert_eq!(unsafe { nmtl_mgda(g.as_ptr(), 2, 2, w.as_mut_ptr(), d.as_mut_ptr()) }, NmtlStatus::Ok);
    assert!((w[0] - 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);

    let theta = [0.5, -1.0];
    let (mut l, mut grad) = ([0.0; 2], [0.0; 4]);
    assert_eq!(unsafe { nmtl_toy_losses(theta.as_ptr(), l.as_mut_ptr()) }, NmtlStatus::Ok);
    assert_eq!(unsafe { nmtl_toy_gradients(theta.as_ptr(), grad.as_mut_ptr()) }, NmtlStatus::Ok);
    let h = 1e-6;
    let mut lp = [0.0; 2];
    let mut lm = [0.0; 2];
    let tp = [theta[0] + h, theta[1]];
    let tm = [theta[0] - h, theta[1]];
    unsafe {
        nmtl_toy_losses(tp.as_ptr(), lp.as_mut_ptr());
        nmtl_toy_losses(tm.as_ptr(), lm.as_mut_ptr());
    }
    // column-major: task 0's gradient occupies the first two entries.
    assert!(((lp[0] - lm[0]) / (2.0 * h) - grad[0]).abs() < 1e-5);
    assert!(((lp[1] - lm[1]) / (2.0 * h) - grad[2]).abs() < 1e-5);
}

#[test]
fn delta_m_signs() {
    let values = [0.9, 11.0];
    let baseline = [1.0, 10.0];
    let hib = [true, false];
    let mut out = 0.0;
    assert_eq!(unsafe { nmtl_delta_m(values.as_ptr(), baseline.as_ptr(), hib.as_ptr(), 2, &mut out) }, NmtlStatus::Ok);
    assert!((out - 10.0).abs() < 1e-9, "{out}");
    let zero = [0.0, 10.0];
    assert_eq!(
        unsafe { nmtl_delta_m(values.as_ptr(), zero.as_ptr(), hib.as_ptr(), 2, &mut out) },
        NmtlStatus::InvalidArgument
    );
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nash_mtl.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["nmtl_solve", "nmtl_solver_new", "nmtl_aggregator_step", "nmtl_last_error", "NMTL_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile_dir();
    let src = dir.join("use_header.c");
    std::fs::write(&src, "#include \"nash_mtl.h\"\nint main(void) { NmtlSolver *s = 0; return nmtl_solver_new(&s) == NMTL_STATUS_OK ? 0 : 1; }\n").unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(header.parent().unwrap()).arg(&src).status() {
        Ok(st) => assert!(st.success(), "header does not compile"),
        Err(e) => eprintln!("skipping C compile: {e}"),
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("nmtl-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
