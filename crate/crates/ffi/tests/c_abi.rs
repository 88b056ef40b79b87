use std::ffi::{CStr, CString};
use std::ptr;

use otsm_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { otsm_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut OtsmConfig {
    let t = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { otsm_config_new(t.as_ptr(), &mut h) }, OtsmStatus::Ok);
    assert!(!h.is_null());
    h
}

const SMALL: &str = "[geometry]\nm = 8\nn = 8\nl_max = 1\n";

#[test]
fn modulate_demodulate_round_trip() {
    let h = config(SMALL);
    let (mut nm, mut k, mut len) = (0, 0, 0);
    let st = unsafe { otsm_config_sizes(h, &mut nm, &mut k, &mut len, ptr::null_mut()) };
    assert_eq!(st, OtsmStatus::Ok);
    assert_eq!((nm, k, len), (64, 40, 65));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let data: Vec<OtsmComplex> = (0..k)
        .map(|i| OtsmComplex {
            re: if i % 2 == 0 { s } else { -s },
            im: if i % 3 == 0 { s } else { -s },
        })
        .collect();
    let mut tx = vec![OtsmComplex::default(); len];
    let mut grid = vec![OtsmComplex::default(); nm];
    unsafe {
        assert_eq!(otsm_modulate(h, data.as_ptr(), k, tx.as_mut_ptr(), len), OtsmStatus::Ok);
        assert_eq!(
            otsm_demodulate(h, tx.as_ptr(), len, grid.as_mut_ptr(), nm),
            OtsmStatus::Ok
        );
        otsm_config_free(h);
    }
    for (a, b) in grid[..k].iter().zip(&data) {
        assert!((a.re - b.re).abs() < 1e-12 && (a.im - b.im).abs() < 1e-12);
    }
    assert!(grid[k..].iter().all(|z| z.re.abs() < 1e-12 && z.im.abs() < 1e-12));
}

#[test]
fn fwht_is_orthonormal_and_checks_length() {
    let mut v = vec![
        OtsmComplex { re: 1.0, im: 0.0 },
        OtsmComplex::default(),
        OtsmComplex::default(),
        OtsmComplex::default(),
    ];
    assert_eq!(unsafe { otsm_fwht(v.as_mut_ptr(), 4) }, OtsmStatus::Ok);
    assert!(v.iter().all(|z| (z.re - 0.5).abs() < 1e-15 && z.im == 0.0));
    assert_eq!(unsafe { otsm_fwht(v.as_mut_ptr(), 3) }, OtsmStatus::InvalidArgument);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut h = ptr::null_mut();
    let bad = CString::new("scenario = 7").unwrap();
    assert_eq!(unsafe { otsm_config_new(bad.as_ptr(), &mut h) }, OtsmStatus::Config);
    assert!(h.is_null());
    assert!(last_error().contains("unknown scenario preset"));

    assert_eq!(
        unsafe { otsm_config_new(ptr::null(), ptr::null_mut()) },
        OtsmStatus::NullPointer
    );
    assert_eq!(last_error(), "out is null");

    let h = config("");
    let kv = CString::new("detector.delta=2").unwrap();
    assert_eq!(unsafe { otsm_config_set(h, kv.as_ptr()) }, OtsmStatus::Config);
    assert!(last_error().contains("detector.delta"));
    let mut out = OtsmBoundPoint::default();
    // Default EVA taps are fractional at 10 MHz.
    assert_eq!(unsafe { otsm_bound_point(h, 10.0, &mut out) }, OtsmStatus::Unsupported);
    let mut data = [OtsmComplex::default(); 2];
    let mut out = [OtsmComplex::default(); 2];
    let st = unsafe { otsm_modulate(h, data.as_mut_ptr(), 2, out.as_mut_ptr(), 2) };
    assert_eq!(st, OtsmStatus::InvalidArgument);
    unsafe { otsm_config_free(h) };
}

#[test]
fn simulation_and_bound_through_handle() {
    let h = config(
        "[geometry]\nm = 4\nn = 2\nl_max = 0\n[channel]\nprofile = \"custom\"\ndelays_ns = [0.0]\npowers_db = [0.0]\n",
    );
    for kv in ["sim.min_bits=20000", "seed=5"] {
        let kv = CString::new(kv).unwrap();
        assert_eq!(unsafe { otsm_config_set(h, kv.as_ptr()) }, OtsmStatus::Ok);
    }
    let mut p = OtsmBerPoint::default();
    assert_eq!(unsafe { otsm_run_point(h, 10.0, &mut p) }, OtsmStatus::Ok);
    assert!(p.bits >= 20_000 && p.ber > 0.0 && p.ber < 0.5);
    let mut again = OtsmBerPoint::default();
    unsafe { otsm_run_point(h, 10.0, &mut again) };
    assert_eq!(p, again);

    let mut b = OtsmBoundPoint::default();
    assert_eq!(unsafe { otsm_bound_point(h, 10.0, &mut b) }, OtsmStatus::Ok);
    assert!(b.chiani > 0.0 && b.chiani <= 1.0 / 3.0 && b.kappa == 1);
    unsafe { otsm_config_free(h) };
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(otsm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/otsm.h")).unwrap();
    for sym in [
        "otsm_config_new",
        "otsm_run_point",
        "OTSM_STATUS_PANIC",
        "typedef struct OtsmConfig",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}
