use std::ffi::{CStr, CString};
use std::ptr;

use nilm_surprise::cutoff::{run_events, CutoffConfig};
use nilm_surprise::blockfilter::Event;
use nilm_surprise_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ns_last_error_message()) }.to_string_lossy().into_owned()
}

fn two_levels(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i % 2 == 0 { -800.0 } else { 600.0 } + (i % 7) as f64)
        .collect()
}

#[test]
fn divergences_and_errors() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(ns_divergence([1.0, 0.0].as_ptr(), [0.0, 1.0].as_ptr(), 2, NS_DIVERGENCE_JS, &mut v), NsStatus::Ok);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(ns_divergence([0.5, 0.5].as_ptr(), [0.25, 0.75].as_ptr(), 2, NS_DIVERGENCE_KL, &mut v), NsStatus::Ok);
        assert!((v - (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln())).abs() < 1e-12);
        let before = v;
        assert_eq!(
            ns_divergence([1.0, 0.0].as_ptr(), [0.0, 1.0].as_ptr(), 2, NS_DIVERGENCE_KL_STRICT, &mut v),
            NsStatus::InvalidArgument
        );
        assert_eq!(v, before, "out value untouched on failure");
        assert!(!last_error().is_empty());
        assert_eq!(ns_divergence([1.0].as_ptr(), [1.0].as_ptr(), 1, 9, &mut v), NsStatus::InvalidArgument);
        assert_eq!(ns_divergence(ptr::null(), [1.0].as_ptr(), 1, NS_DIVERGENCE_JS, &mut v), NsStatus::NullPointer);
        assert_eq!(ns_divergence([1.0].as_ptr(), [1.0].as_ptr(), 1, NS_DIVERGENCE_JS, &mut v), NsStatus::Ok);
        assert!(last_error().is_empty());
    }
}

#[test]
fn model_lifecycle() {
    let x = two_levels(80);
    unsafe {
        let mut m: *mut NsModel = ptr::null_mut();
        assert_eq!(ns_model_new(12, 1.0, [0.0].as_ptr(), 1, 2500.0, 0.01, 3.0, 4, &mut m), NsStatus::Ok);
        assert_eq!(ns_model_truncation(m), 12);
        assert_eq!(ns_model_dim(m), 1);
        let (mut it, mut conv) = (0usize, false);
        assert_eq!(ns_model_fit(m, x.as_ptr(), 40, 1, 1e-3, 500, &mut it, &mut conv), NsStatus::Ok);
        assert_eq!(ns_model_fit(m, x.as_ptr(), 80, 1, 1e-3, 500, ptr::null_mut(), ptr::null_mut()), NsStatus::Ok);
        assert_eq!(ns_model_observed(m), 80);
        assert_eq!(ns_model_effective_components(m, 0.01), 2);

        let mut w = vec![0.0; 12];
        assert_eq!(ns_model_weights(m, w.as_mut_ptr(), 12), NsStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(ns_model_weights(m, w.as_mut_ptr(), 3), NsStatus::InvalidArgument);

        let mut labels = vec![0usize; 80];
        assert_eq!(ns_model_assign(m, x.as_ptr(), 80, 1, labels.as_mut_ptr()), NsStatus::Ok);
        assert!(labels.iter().step_by(2).all(|&l| l == labels[0]));
        assert!(labels.iter().skip(1).step_by(2).all(|&l| l == labels[1]));
        assert_ne!(labels[0], labels[1]);

        let mut json = ptr::null_mut();
        assert_eq!(ns_model_to_json(m, &mut json), NsStatus::Ok);
        let mut copy: *mut NsModel = ptr::null_mut();
        assert_eq!(ns_model_from_json(json, &mut copy), NsStatus::Ok);
        ns_string_free(json);
        for at in [-800.0, 0.0, 603.0] {
            let (mut a, mut b) = (0.0, 0.0);
            assert_eq!(ns_model_density(m, [at].as_ptr(), 1, &mut a), NsStatus::Ok);
            assert_eq!(ns_model_density(copy, [at].as_ptr(), 1, &mut b), NsStatus::Ok);
            assert_eq!(a, b);
        }
        let mut d = 0.0;
        assert_eq!(ns_model_density(m, [0.0, 0.0].as_ptr(), 2, &mut d), NsStatus::InvalidArgument);
        ns_model_free(copy);
        ns_model_free(m);
        ns_model_free(ptr::null_mut());

        let bad = CString::new("{\"format_version\": 99}").unwrap();
        let mut none: *mut NsModel = ptr::null_mut();
        assert_eq!(ns_model_from_json(bad.as_ptr(), &mut none), NsStatus::Io);
        assert!(none.is_null());
        assert_eq!(ns_model_new(1, 1.0, [0.0].as_ptr(), 1, 1.0, 1.0, 3.0, 0, &mut none), NsStatus::Config);
        assert_eq!(ns_model_truncation(ptr::null()), 0);
    }
}

#[test]
fn transitional_scan_and_mae() {
    let z: Vec<usize> = (0..80).map(|i| i % 2).collect();
    let mut v = 0.0;
    unsafe {
        assert_eq!(ns_transitional_surprise(z.as_ptr(), z.len(), 50, 10, 2, 1.0, NS_DIVERGENCE_JS, &mut v), NsStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(
            ns_transitional_surprise(z.as_ptr(), z.len(), 75, 10, 2, 1.0, NS_DIVERGENCE_JS, &mut v),
            NsStatus::InvalidArgument
        );

        let so = [1.0, 0.5, 0.0, 0.0];
        let (mut found, mut trunc, mut c) = (false, false, 0i64);
        assert_eq!(ns_scan(so.as_ptr(), so.as_ptr(), 4, 5, 0.01, 0.05, &mut found, &mut trunc, &mut c), NsStatus::Ok);
        assert!(found && trunc);
        assert_eq!(c, 2);
        let loud = [1.0, 0.0, 0.9];
        assert_eq!(ns_scan(loud.as_ptr(), loud.as_ptr(), 3, 5, 0.01, 0.05, &mut found, &mut trunc, &mut c), NsStatus::Ok);
        assert!(!found);
        assert_eq!(c, -1);

        assert_eq!(ns_mean_absolute_error([1.0, 3.0].as_ptr(), [2.0, 1.0].as_ptr(), 2, &mut v), NsStatus::Ok);
        assert_eq!(v, 1.5);
    }
}

#[test]
fn pipeline_over_the_abi_matches_the_library() {
    let n = 2000;
    let x: Vec<f64> = (0..n)
        .map(|i| match i % 4 {
            0 => 150.0,
            1 => -150.0,
            2 => 1800.0,
            _ => -1800.0,
        } + ((i * 37) % 11) as f64)
        .collect();
    let times: Vec<f64> = (0..n).map(|i| 10.0 * i as f64).collect();
    let toml_text = "window_events = 50\npatience = 5\n";
    let cfg: CutoffConfig = toml::from_str(toml_text).unwrap();
    let events: Vec<Event> = x.iter().zip(&times).map(|(&v, &t)| Event::from_feature(t, vec![v])).collect();
    let direct = run_events(events, 20_000.0, &cfg, 3).unwrap().result;

    let config = CString::new(toml_text).unwrap();
    unsafe {
        let mut r: *mut NsResult = ptr::null_mut();
        assert_eq!(
            ns_run_events(x.as_ptr(), times.as_ptr(), n, 1, 20_000.0, config.as_ptr(), 3, &mut r),
            NsStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(ns_result_found(r), direct.found);
        assert_eq!(ns_result_committed(r), direct.committed());
        assert_eq!(ns_result_cutoff_window(r), direct.cutoff_window.map_or(-1, |c| c as i64));
        assert_eq!(ns_result_cutoff_event(r), direct.cutoff_event.map_or(-1, |c| c as i64));
        let windows = ns_result_window_count(r);
        assert_eq!(windows, direct.trace.rows.len());
        let mut col = vec![0.0; windows];
        assert_eq!(ns_result_trace(r, NS_TRACE_NORM_ST, col.as_mut_ptr(), windows), NsStatus::Ok);
        assert_eq!(col, direct.trace.norm_st());
        assert_eq!(ns_result_trace(r, 42, col.as_mut_ptr(), windows), NsStatus::InvalidArgument);
        let mut json = ptr::null_mut();
        assert_eq!(ns_result_to_json(r, &mut json), NsStatus::Ok);
        assert_eq!(CStr::from_ptr(json).to_str().unwrap(), direct.to_json().unwrap());
        ns_string_free(json);
        ns_result_free(r);

        let bad = CString::new("window_events = 0\n").unwrap();
        let mut none: *mut NsResult = ptr::null_mut();
        assert_eq!(ns_run_events(x.as_ptr(), ptr::null(), n, 1, 0.0, bad.as_ptr(), 3, &mut none), NsStatus::Config);
        assert!(last_error().contains("window_events"));
        assert_eq!(ns_run_events(x.as_ptr(), ptr::null(), 60, 1, 0.0, config.as_ptr(), 3, &mut none), NsStatus::InsufficientData);
        assert!(none.is_null());

        let series: Vec<f64> = (0..4000).map(|t| if (t / 50) % 2 == 0 { 100.0 } else { 400.0 }).collect();
        assert_eq!(ns_run_series(series.as_ptr(), series.len(), 0.0, 1.0, config.as_ptr(), 1, &mut none), NsStatus::InsufficientData);
        let small = CString::new("window_events = 10\npatience = 3\n").unwrap();
        let mut ok: *mut NsResult = ptr::null_mut();
        assert_eq!(ns_run_series(series.as_ptr(), series.len(), 0.0, 1.0, small.as_ptr(), 1, &mut ok), NsStatus::Ok);
        assert_eq!(ns_result_window_count(ok), 7);
        ns_result_free(ok);
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(ns_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nilm_surprise.h")).unwrap();
    for name in ["ns_model_new", "ns_run_events", "ns_result_trace", "typedef struct NsModel NsModel", "NS_STATUS_NULL_POINTER"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
