use std::ffi::{CStr, CString};
use std::ptr;

use lastar_ffi::*;

fn last_error() -> String {
    let p = lastar_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn simulate_search_and_compare() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(lastar_model_simulate(6, 2.0, 11, &mut model), LastarStatus::Ok);
        assert_eq!(lastar_model_num_vars(model), 6);

        let mut data = ptr::null_mut();
        assert_eq!(lastar_model_sample(model, 5000, 12, &mut data), LastarStatus::Ok);
        assert_eq!(lastar_dataset_num_samples(data), 5000);
        assert_eq!(lastar_dataset_num_vars(data), 6);

        let mut truth = ptr::null_mut();
        assert_eq!(lastar_model_true_cpdag(model, &mut truth), LastarStatus::Ok);

        let mut ss = ptr::null_mut();
        assert_eq!(lastar_estimate_superstructure(data, -1.0, &mut ss), LastarStatus::Ok);

        let mut dp = ptr::null_mut();
        assert_eq!(lastar_search(data, LastarMethod::Dp, ptr::null(), &mut dp), LastarStatus::Ok);
        let mut astar = ptr::null_mut();
        assert_eq!(lastar_search(data, LastarMethod::Astar, ptr::null(), &mut astar), LastarStatus::Ok);
        let mut local = ptr::null_mut();
        assert_eq!(lastar_search(data, LastarMethod::LocalAstar, ss, &mut local), LastarStatus::Ok);

        let mut shd = usize::MAX;
        assert_eq!(lastar_shd(dp, astar, &mut shd), LastarStatus::Ok);
        assert_eq!(shd, 0);
        assert_eq!(lastar_shd(dp, truth, &mut shd), LastarStatus::Ok);
        assert!(shd <= 6);

        let mut json = ptr::null_mut();
        assert_eq!(lastar_graph_to_json(dp, &mut json), LastarStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.starts_with("{\"d\":6,\"edges\":["));
        lastar_string_free(json);

        let mut mark = LastarMark::None;
        assert_eq!(lastar_graph_mark(ss, 0, 0, &mut mark), LastarStatus::Ok);
        assert_eq!(mark, LastarMark::None);
        assert_eq!(lastar_graph_mark(ss, 0, 6, &mut mark), LastarStatus::IndexOutOfRange);
        assert!(last_error().contains("out of range"));

        for g in [truth, ss, dp, astar, local] {
            lastar_graph_free(g);
        }
        lastar_dataset_free(data);
        lastar_model_free(model);
    }
}

#[test]
fn rows_and_csv_inputs() {
    unsafe {
        let values = [1.0, 2.0, 2.0, 4.1, 3.0, 5.9, 4.0, 8.2];
        let mut data = ptr::null_mut();
        assert_eq!(lastar_dataset_from_rows(values.as_ptr(), 4, 2, &mut data), LastarStatus::Ok);
        assert_eq!(lastar_dataset_num_samples(data), 4);
        lastar_dataset_free(data);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "X1,X2\n1,2\n2,4.1\n3,5.9\n").unwrap();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut data = ptr::null_mut();
        assert_eq!(lastar_dataset_from_csv(cpath.as_ptr(), &mut data), LastarStatus::Ok);
        assert_eq!(lastar_dataset_num_vars(data), 2);
        lastar_dataset_free(data);

        let missing = CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
        let mut data = ptr::null_mut();
        assert_eq!(lastar_dataset_from_csv(missing.as_ptr(), &mut data), LastarStatus::Io);
        assert!(data.is_null());
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(lastar_model_simulate(3, 5.0, 0, &mut model), LastarStatus::InvalidArgument);
        assert!(model.is_null());

        let values = [f64::NAN, 1.0];
        let mut data = ptr::null_mut();
        assert_ne!(lastar_dataset_from_rows(values.as_ptr(), 1, 2, &mut data), LastarStatus::Ok);

        assert_eq!(lastar_model_simulate(3, 1.0, 0, &mut model), LastarStatus::Ok);
        assert_eq!(lastar_model_sample(model, 50, 1, &mut data), LastarStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(
            lastar_search(data, LastarMethod::AstarSs, ptr::null(), &mut out),
            LastarStatus::NullPointer
        );
        assert_eq!(lastar_search(ptr::null(), LastarMethod::Dp, ptr::null(), &mut out), LastarStatus::NullPointer);
        lastar_dataset_free(data);
        lastar_model_free(model);
        lastar_graph_free(ptr::null_mut());
        lastar_string_free(ptr::null_mut());
    }
}
