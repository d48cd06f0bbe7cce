use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use gaitnet::evaluation::Predictor;
use gaitnet::model::save_params;
use gaitnet::vgrf::{write_walk_file, SubjectInfo};
use gaitnet::{Group, ModelConfig, Network, Task, Walk};
use gaitnet_ffi::*;

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let msg = gaitnet_last_error_message();
    assert!(!msg.is_null());
    unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_string()
}

fn saved_model(task: Task, dir: &Path) -> (PathBuf, Network) {
    let net = Network::new(ModelConfig::new(task), 21).unwrap();
    let path = dir.join(format!("{}.ckpt", task.name()));
    save_params(&net, None, &path).unwrap();
    (path, net)
}

fn load(path: &Path) -> *mut GaitnetModel {
    let mut model = ptr::null_mut();
    let status = unsafe { gaitnet_model_load(c_path(path).as_ptr(), &mut model) };
    assert_eq!(status, GaitnetStatus::Ok);
    assert!(gaitnet_last_error_message().is_null());
    model
}

fn ramp(timesteps: usize) -> Vec<f64> {
    (0..timesteps * GAITNET_NUM_CHANNELS)
        .map(|i| 5.0 + ((i % 37) as f64) * 0.3)
        .collect()
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(gaitnet_version()) };
    assert_eq!(v.to_str().unwrap(), gaitnet::VERSION);
}

#[test]
fn load_errors_have_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    let missing = dir.path().join("missing.ckpt");
    let status = unsafe { gaitnet_model_load(c_path(&missing).as_ptr(), &mut model) };
    assert_eq!(status, GaitnetStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("missing.ckpt"));

    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let status = unsafe { gaitnet_model_load(c_path(&junk).as_ptr(), &mut model) };
    assert_eq!(status, GaitnetStatus::Checkpoint);

    let status = unsafe { gaitnet_model_load(ptr::null(), &mut model) };
    assert_eq!(status, GaitnetStatus::NullArgument);
    let status = unsafe { gaitnet_model_load(c_path(&junk).as_ptr(), ptr::null_mut()) };
    assert_eq!(status, GaitnetStatus::NullArgument);
    unsafe { gaitnet_model_free(ptr::null_mut()) };
}

#[test]
fn model_properties_and_window_scores() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::Detection, Task::Severity] {
        let (path, net) = saved_model(task, dir.path());
        let model = load(&path);
        let (mut t, mut len, mut units) = (GaitnetTask::Detection, 0usize, 0usize);
        unsafe {
            assert_eq!(gaitnet_model_task(model, &mut t), GaitnetStatus::Ok);
            assert_eq!(gaitnet_model_window_len(model, &mut len), GaitnetStatus::Ok);
            assert_eq!(
                gaitnet_model_output_units(model, &mut units),
                GaitnetStatus::Ok
            );
        }
        let expected_task = if task == Task::Detection {
            GaitnetTask::Detection
        } else {
            GaitnetTask::Severity
        };
        assert_eq!(t, expected_task);
        assert_eq!(len, 100);
        assert_eq!(units, task.output_units());

        let count = 3;
        let windows = ramp(count * len);
        let mut out = vec![0.0; count * units];
        let status = unsafe {
            gaitnet_predict_windows(model, windows.as_ptr(), count, out.as_mut_ptr(), out.len())
        };
        assert_eq!(status, GaitnetStatus::Ok);
        let reference = Predictor::new(net, None)
            .predict_windows(&windows, count)
            .unwrap();
        assert_eq!(out, reference);

        let status = unsafe {
            gaitnet_predict_windows(
                model,
                windows.as_ptr(),
                count,
                out.as_mut_ptr(),
                out.len() - 1,
            )
        };
        assert_eq!(status, GaitnetStatus::InvalidArgument);
        assert!(last_error().contains("out_len"));
        unsafe { gaitnet_model_free(model) };
    }
}

#[test]
fn walk_classification_votes_over_windows() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::Detection, Task::Severity] {
        let (path, net) = saved_model(task, dir.path());
        let model = load(&path);
        let labels = task.output_units().max(2);
        let samples = ramp(300);
        let mut label = usize::MAX;
        let mut votes = vec![0usize; labels];
        let status = unsafe {
            gaitnet_classify_walk(
                model,
                samples.as_ptr(),
                300,
                50,
                &mut label,
                votes.as_mut_ptr(),
                labels,
            )
        };
        assert_eq!(status, GaitnetStatus::Ok);
        let reference = Predictor::new(net, None)
            .classify_walk(&samples, 50)
            .unwrap();
        assert_eq!(label, reference.label);
        assert_eq!(votes, reference.votes);
        assert_eq!(votes.iter().sum::<usize>(), 5);

        let short = ramp(99);
        let status = unsafe {
            gaitnet_classify_walk(
                model,
                short.as_ptr(),
                99,
                50,
                &mut label,
                votes.as_mut_ptr(),
                labels,
            )
        };
        assert_eq!(status, GaitnetStatus::NoFullWindows);
        assert!(last_error().contains("no full windows"));

        let status = unsafe {
            gaitnet_classify_walk(
                model,
                samples.as_ptr(),
                300,
                0,
                &mut label,
                votes.as_mut_ptr(),
                labels,
            )
        };
        assert_eq!(status, GaitnetStatus::InvalidArgument);
        unsafe { gaitnet_model_free(model) };
    }
}

#[test]
fn walk_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let info = SubjectInfo {
        group: Group::Parkinson,
        updrs_total: Some(12),
    };
    let samples = ramp(140);
    let walk = Walk::new("GaPt01_01", "GaPt01", info, samples.clone()).unwrap();
    let path = dir.path().join("GaPt01_01.txt");
    write_walk_file(&walk, &path).unwrap();

    let mut buf = ptr::null_mut();
    let mut timesteps = 0;
    let status =
        unsafe { gaitnet_walk_file_read(c_path(&path).as_ptr(), &mut buf, &mut timesteps) };
    assert_eq!(status, GaitnetStatus::Ok);
    assert_eq!(timesteps, 140);
    let read = unsafe { std::slice::from_raw_parts(buf, timesteps * GAITNET_NUM_CHANNELS) };
    assert_eq!(read, &samples[..]);
    unsafe { gaitnet_samples_free(buf, timesteps) };

    std::fs::write(&path, "0.00 1 2\n").unwrap();
    let status =
        unsafe { gaitnet_walk_file_read(c_path(&path).as_ptr(), &mut buf, &mut timesteps) };
    assert_eq!(status, GaitnetStatus::Data);
    assert!(buf.is_null());
}

#[test]
fn updrs_boundaries() {
    let cases = [
        (0, 1),
        (4, 1),
        (5, 2),
        (14, 2),
        (15, 3),
        (24, 3),
        (25, 4),
        (34, 4),
        (35, 5),
        (176, 5),
    ];
    for (score, class) in cases {
        let mut out = 0u8;
        assert_eq!(
            unsafe { gaitnet_updrs_to_class(score, &mut out) },
            GaitnetStatus::Ok
        );
        assert_eq!(out, class, "score {score}");
    }
    let mut out = 0u8;
    assert_eq!(
        unsafe { gaitnet_updrs_to_class(-1, &mut out) },
        GaitnetStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { gaitnet_updrs_to_class(177, &mut out) },
        GaitnetStatus::InvalidArgument
    );
}

#[test]
fn detection_metrics_mark_undefined_as_nan() {
    let mut m = GaitnetDetectionMetrics {
        sensitivity: 0.0,
        specificity: 0.0,
        accuracy: 0.0,
    };
    assert_eq!(
        unsafe { gaitnet_detection_metrics(9, 1, 7, 3, &mut m) },
        GaitnetStatus::Ok
    );
    assert_eq!((m.sensitivity, m.specificity, m.accuracy), (0.9, 0.7, 0.8));
    assert_eq!(
        unsafe { gaitnet_detection_metrics(0, 0, 4, 0, &mut m) },
        GaitnetStatus::Ok
    );
    assert!(m.sensitivity.is_nan());
    assert_eq!(m.specificity, 1.0);
}

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/gaitnet.h");
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn header_declares_every_entry_point() {
    let text = header();
    for name in [
        "gaitnet_version",
        "gaitnet_last_error_message",
        "gaitnet_model_load",
        "gaitnet_model_free",
        "gaitnet_model_task",
        "gaitnet_model_window_len",
        "gaitnet_model_output_units",
        "gaitnet_predict_windows",
        "gaitnet_classify_walk",
        "gaitnet_walk_file_read",
        "gaitnet_samples_free",
        "gaitnet_updrs_to_class",
        "gaitnet_detection_metrics",
    ] {
        let declared = text.contains(&format!(" {name}(")) || text.contains(&format!("*{name}("));
        assert!(declared, "{name} missing from header");
    }
    assert!(text.contains("typedef struct GaitnetModel GaitnetModel;"));
    assert!(text.contains("#define GAITNET_NUM_CHANNELS 18"));
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"gaitnet.h\"\nint main(void) { GaitnetModel *m = 0; size_t n = 0;\n\
         return gaitnet_model_window_len(m, &n) == GAITNET_STATUS_OK; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    match Command::new(&cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(_) => eprintln!("no C compiler ({cc}); skipping header compile check"),
    }
}

#[test]
fn models_can_be_shared_between_threads() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<GaitnetModel>();
}
