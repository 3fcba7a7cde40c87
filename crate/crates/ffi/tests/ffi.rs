use std::ffi::{CStr, CString};
use std::ptr;

use micronet_ffi::*;

fn last_error() -> Option<String> {
    let p = mn_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { mn_string_free(p) };
    Some(s)
}

fn arch(name: &str) -> *mut MnArch {
    let name = CString::new(name).unwrap();
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { mn_arch_new(name.as_ptr(), &mut a) }, MnStatus::Ok);
    a
}

#[test]
fn parameter_counts() {
    for (name, want) in [("micro", 1_055_920u64), ("bm2", 926_896), ("unet", 31_024_960)] {
        let a = arch(name);
        let mut n = 0;
        assert_eq!(unsafe { mn_arch_param_count(a, &mut n) }, MnStatus::Ok);
        assert_eq!(n, want, "{name}");
        unsafe { mn_arch_free(a) };
    }
    assert!(last_error().is_none());
}

#[test]
fn errors_carry_messages() {
    let name = CString::new("nope").unwrap();
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { mn_arch_new(name.as_ptr(), &mut a) }, MnStatus::InvalidArgument);
    assert!(a.is_null());
    assert!(last_error().unwrap().contains("nope"));

    assert_eq!(unsafe { mn_arch_new(ptr::null(), &mut a) }, MnStatus::NullArgument);
    assert_eq!(last_error().unwrap(), "name is null");
    let mut n = 0;
    assert_eq!(unsafe { mn_arch_param_count(ptr::null(), &mut n) }, MnStatus::NullArgument);

    let path = CString::new("/nonexistent/net.mnck").unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { mn_network_load(path.as_ptr(), &mut net) }, MnStatus::Io);

    // Freeing null handles is a no-op.
    unsafe {
        mn_arch_free(ptr::null_mut());
        mn_network_free(ptr::null_mut());
        mn_confusion_free(ptr::null_mut());
        mn_string_free(ptr::null_mut());
    }
}

#[test]
fn summary_csv() {
    let a = arch("micro");
    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { mn_arch_summary_csv(a, 500, &mut csv) }, MnStatus::Ok);
    let text = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_owned();
    unsafe { mn_string_free(csv) };
    assert_eq!(text.lines().nth(2), Some("fm 1,500x500x64,2,16,32,32,5168"));
    assert_eq!(unsafe { mn_arch_summary_csv(a, 30, &mut csv) }, MnStatus::Shape);
    unsafe { mn_arch_free(a) };
}

#[test]
fn forward_predict_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let a = arch("micro");
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { mn_network_init(a, 3, &mut net) }, MnStatus::Ok);
    let (h, w) = (16, 12);
    let image: Vec<f32> = (0..3 * h * w).map(|i| (i % 17) as f32 / 17.0).collect();
    let mut probs = vec![0f32; 2 * h * w];
    let st = unsafe { mn_network_forward(net, image.as_ptr(), 1, 3, h, w, probs.as_mut_ptr(), probs.len()) };
    assert_eq!(st, MnStatus::Ok);
    for p in 0..h * w {
        assert!((probs[p] + probs[h * w + p] - 1.0).abs() < 1e-6);
    }
    let st = unsafe { mn_network_forward(net, image.as_ptr(), 1, 3, h, w, probs.as_mut_ptr(), 10) };
    assert_eq!(st, MnStatus::Shape);
    let st = unsafe { mn_network_forward(net, image.as_ptr(), 1, 3, 6, 8, probs.as_mut_ptr(), probs.len()) };
    assert_eq!(st, MnStatus::Shape);
    assert!(last_error().unwrap().contains("not divisible by 4"));

    let mut labels = vec![9u8; h * w];
    assert_eq!(unsafe { mn_network_predict(net, image.as_ptr(), h, w, labels.as_mut_ptr()) }, MnStatus::Ok);
    for p in 0..h * w {
        assert_eq!(labels[p], u8::from(probs[h * w + p] > probs[p]));
    }

    let path = CString::new(dir.path().join("n.mnck").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { mn_network_save(net, path.as_ptr()) }, MnStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { mn_network_load(path.as_ptr(), &mut back) }, MnStatus::Ok);
    let mut again = vec![0f32; probs.len()];
    let st = unsafe { mn_network_forward(back, image.as_ptr(), 1, 3, h, w, again.as_mut_ptr(), again.len()) };
    assert_eq!(st, MnStatus::Ok);
    assert_eq!(again, probs);

    let bytes = std::fs::read(dir.path().join("n.mnck")).unwrap();
    std::fs::write(dir.path().join("n.mnck"), &bytes[..bytes.len() - 1]).unwrap();
    let mut broken = ptr::null_mut();
    assert_eq!(unsafe { mn_network_load(path.as_ptr(), &mut broken) }, MnStatus::Integrity);
    unsafe {
        mn_network_free(net);
        mn_network_free(back);
        mn_arch_free(a);
    }
}

#[test]
fn confusion_matrix() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { mn_confusion_new(2, &mut m) }, MnStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { mn_confusion_miou(m, &mut v) }, MnStatus::UndefinedMetric);
    let (pred, truth) = ([0u8, 1, 1, 1], [0u8, 0, 1, 1]);
    assert_eq!(unsafe { mn_confusion_accumulate(m, pred.as_ptr(), truth.as_ptr(), 2, 2) }, MnStatus::Ok);
    assert_eq!(unsafe { mn_confusion_miou(m, &mut v) }, MnStatus::Ok);
    assert!((v - 7.0 / 12.0).abs() < 1e-15);
    assert_eq!(unsafe { mn_confusion_acc(m, &mut v) }, MnStatus::Ok);
    assert_eq!(v, 0.75);
    let mut c = 0;
    assert_eq!(unsafe { mn_confusion_get(m, 0, 1, &mut c) }, MnStatus::Ok);
    assert_eq!(c, 1);
    assert_eq!(unsafe { mn_confusion_get(m, 2, 0, &mut c) }, MnStatus::InvalidArgument);
    let bad = [0u8, 0, 0, 5];
    assert_eq!(unsafe { mn_confusion_accumulate(m, bad.as_ptr(), truth.as_ptr(), 2, 2) }, MnStatus::InvalidArgument);
    assert_eq!(unsafe { mn_confusion_acc(m, &mut v) }, MnStatus::Ok);
    assert_eq!(v, 0.75);
    unsafe { mn_confusion_free(m) };
}

#[test]
fn train_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = format!(
        "epochs = 2\nseed = 3\nsynthetic_count = 4\nsynthetic_size = 16\noutput_dir = \"{out}\"\n"
    );
    let cfg = CString::new(cfg).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { mn_train(cfg.as_ptr(), &mut net) }, MnStatus::Ok, "{:?}", last_error());
    let mut n = 0;
    assert_eq!(unsafe { mn_network_param_count(net, &mut n) }, MnStatus::Ok);
    assert_eq!(n, 1_055_920);
    assert!(dir.path().join("checkpoint.mnck").is_file());
    assert_eq!(std::fs::read_to_string(dir.path().join("log.csv")).unwrap().lines().count(), 3);
    unsafe { mn_network_free(net) };

    let bad = CString::new("epochs = 0\n").unwrap();
    assert_eq!(unsafe { mn_train(bad.as_ptr(), &mut net) }, MnStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("epochs"));
}

/// The generated header must be valid C on its own.
#[test]
fn header_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/micronet.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["mn_arch_new", "mn_network_forward", "mn_confusion_miou", "MN_STATUS_NON_FINITE", "typedef struct MnArch MnArch"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler found, skipping syntax check");
        return;
    };
    assert!(status.success());
}
