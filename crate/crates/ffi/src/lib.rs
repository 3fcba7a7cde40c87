//! C ABI over the micronet library.
//!
//! Every function returns an [`MnStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be fetched
//! with [`mn_last_error_message`]. Handles are opaque and must be released
//! with their matching `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use micronet::config::RunConfig;
use micronet::data::{gen_synthetic, load_dataset, Dataset, LabelMap};
use micronet::graph::{build_architecture, render_csv, summarize, ArchitectureSpec, LayerGraph, Network};
use micronet::metrics::{argmax_labels, ConfusionMatrix};
use micronet::train::{init_network, load_checkpoint, save_checkpoint, train};
use micronet::{Error, Shape, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Shape = 3,
    Parse = 4,
    Integrity = 5,
    Io = 6,
    NonFinite = 7,
    UndefinedMetric = 8,
    Panic = 9,
}

/// An architecture and its layer graph.
pub struct MnArch {
    spec: ArchitectureSpec,
    graph: LayerGraph,
}

/// Single-precision network weights.
pub struct MnNetwork(Network<f32>);

/// Pixel confusion matrix.
pub struct MnConfusion(ConfusionMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MnStatus {
    match e {
        Error::Dimension { .. } | Error::Shape { .. } | Error::Indivisible { .. } => MnStatus::Shape,
        Error::Parse { .. } => MnStatus::Parse,
        Error::Integrity { .. } => MnStatus::Integrity,
        Error::Io { .. } => MnStatus::Io,
        Error::NonFinite { .. } => MnStatus::NonFinite,
        Error::UndefinedMetric(_) => MnStatus::UndefinedMetric,
        _ => MnStatus::InvalidArgument,
    }
}

/// Failure inside a call: a status plus the message to record.
struct Fail(MnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: MnStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Runs `f`, recording any error or panic for `mn_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            MnStatus::Panic
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(MnStatus::NullArgument, format!("{what} is null")),
    }
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(MnStatus::NullArgument, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s),
        Err(_) => fail(MnStatus::InvalidArgument, format!("{what} is not UTF-8")),
    }
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return fail(MnStatus::NullArgument, format!("{what} is null"));
    }
    p.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    match CString::new(s) {
        Ok(c) => Ok(c.into_raw()),
        Err(_) => fail(MnStatus::InvalidArgument, "text contains a nul byte"),
    }
}

/// Copy of the calling thread's last error message, or null if the last
/// call succeeded. Free with `mn_string_free`.
#[no_mangle]
pub extern "C" fn mn_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a named variant (`unet`, `bm1`, `bm2`, `bm3`, `micro`), or an
/// architecture TOML file when `name` is a path.
///
/// # Safety
/// `name` must be a nul-terminated string; `arch` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_arch_new(name: *const c_char, arch: *mut *mut MnArch) -> MnStatus {
    guard(|| {
        let spec = ArchitectureSpec::resolve(string(name, "name")?)?;
        let graph = build_architecture(&spec)?;
        out(arch, boxed(MnArch { spec, graph }), "arch")
    })
}

/// Builds an architecture from TOML text.
///
/// # Safety
/// `toml` must be a nul-terminated string; `arch` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_arch_from_toml(toml: *const c_char, arch: *mut *mut MnArch) -> MnStatus {
    guard(|| {
        let spec = ArchitectureSpec::from_toml(string(toml, "toml")?)?;
        let graph = build_architecture(&spec)?;
        out(arch, boxed(MnArch { spec, graph }), "arch")
    })
}

/// # Safety
/// `arch` must come from `mn_arch_new` or `mn_arch_from_toml`, or be null.
#[no_mangle]
pub unsafe extern "C" fn mn_arch_free(arch: *mut MnArch) {
    if !arch.is_null() {
        drop(Box::from_raw(arch));
    }
}

/// # Safety
/// `arch` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_arch_param_count(arch: *const MnArch, count: *mut u64) -> MnStatus {
    guard(|| {
        let a = reference(arch, "arch")?;
        out(count, a.graph.count_params() as u64, "count")
    })
}

/// Spatial sizes must be multiples of this value.
///
/// # Safety
/// `arch` must be a live handle; `divisor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_arch_spatial_divisor(arch: *const MnArch, divisor: *mut usize) -> MnStatus {
    guard(|| {
        let a = reference(arch, "arch")?;
        out(divisor, a.spec.spatial_divisor(), "divisor")
    })
}

/// Layer table for a `size`×`size` input as CSV. Free with `mn_string_free`.
///
/// # Safety
/// `arch` must be a live handle; `csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_arch_summary_csv(arch: *const MnArch, size: usize, csv: *mut *mut c_char) -> MnStatus {
    guard(|| {
        let a = reference(arch, "arch")?;
        a.graph.check_input(Shape::new(1, a.graph.in_channels(), size, size))?;
        out(csv, c_string(render_csv(&summarize(&a.graph, size, size)))?, "csv")
    })
}

/// He-initialised weights for `arch`.
///
/// # Safety
/// `arch` must be a live handle; `network` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_network_init(arch: *const MnArch, seed: u64, network: *mut *mut MnNetwork) -> MnStatus {
    guard(|| {
        let a = reference(arch, "arch")?;
        let net = init_network(a.graph.clone(), seed)?;
        out(network, boxed(MnNetwork(net)), "network")
    })
}

/// Loads weights from a checkpoint file. Optimizer state is discarded.
///
/// # Safety
/// `path` must be a nul-terminated string; `network` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_network_load(path: *const c_char, network: *mut *mut MnNetwork) -> MnStatus {
    guard(|| {
        let ck = load_checkpoint::<f32>(string(path, "path")?)?;
        out(network, boxed(MnNetwork(ck.network)), "network")
    })
}

/// # Safety
/// `network` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mn_network_save(network: *const MnNetwork, path: *const c_char) -> MnStatus {
    guard(|| {
        let n = reference(network, "network")?;
        save_checkpoint(string(path, "path")?, &n.0, None)?;
        Ok(())
    })
}

/// # Safety
/// `network` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn mn_network_free(network: *mut MnNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// # Safety
/// `network` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_network_param_count(network: *const MnNetwork, count: *mut u64) -> MnStatus {
    guard(|| {
        let n = reference(network, "network")?;
        out(count, n.0.count_params() as u64, "count")
    })
}

unsafe fn input_tensor(input: *const f32, n: usize, c: usize, h: usize, w: usize) -> Result<Tensor<f32>, Fail> {
    if input.is_null() {
        return fail(MnStatus::NullArgument, "input is null");
    }
    let shape = Shape::new(n, c, h, w);
    let data = std::slice::from_raw_parts(input, shape.len()).to_vec();
    Ok(Tensor::new(shape, data)?)
}

/// Class probabilities for an `(n, c, h, w)` row-major batch. `output` must
/// hold `output_len >= n * classes * h * w` floats.
///
/// # Safety
/// `input` must point at `n*c*h*w` floats and `output` at `output_len`.
#[no_mangle]
pub unsafe extern "C" fn mn_network_forward(
    network: *const MnNetwork,
    input: *const f32,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    output: *mut f32,
    output_len: usize,
) -> MnStatus {
    guard(|| {
        let net = &reference(network, "network")?.0;
        net.graph().check_input(Shape::new(n, c, h, w))?;
        let need = n * net.graph().n_classes() * h * w;
        if output.is_null() {
            return fail(MnStatus::NullArgument, "output is null");
        }
        if output_len < need {
            return fail(MnStatus::Shape, format!("output holds {output_len} floats, {need} needed"));
        }
        let probs = net.forward(&input_tensor(input, n, c, h, w)?)?;
        ptr::copy_nonoverlapping(probs.data().as_ptr(), output, need);
        Ok(())
    })
}

/// Per-pixel class labels for one `(3, h, w)` image with values in `[0, 1]`.
/// `labels` must hold `h * w` bytes.
///
/// # Safety
/// `image` must point at `3*h*w` floats and `labels` at `h*w` bytes.
#[no_mangle]
pub unsafe extern "C" fn mn_network_predict(
    network: *const MnNetwork,
    image: *const f32,
    h: usize,
    w: usize,
    labels: *mut u8,
) -> MnStatus {
    guard(|| {
        let net = &reference(network, "network")?.0;
        let shape = Shape::new(1, net.graph().in_channels(), h, w);
        net.graph().check_input(shape)?;
        if labels.is_null() {
            return fail(MnStatus::NullArgument, "labels is null");
        }
        let probs = net.forward(&input_tensor(image, 1, shape.c(), h, w)?)?;
        let map = argmax_labels(&probs).remove(0);
        ptr::copy_nonoverlapping(map.data().as_ptr(), labels, h * w);
        Ok(())
    })
}

/// Trains from a run config in TOML (the same keys the command line
/// accepts). Uses `data_dir` when set, otherwise generates synthetic data.
/// Writes the log and checkpoint named by the config.
///
/// # Safety
/// `config` must be a nul-terminated string; `network` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_train(config: *const c_char, network: *mut *mut MnNetwork) -> MnStatus {
    guard(|| {
        let cfg = RunConfig::resolve(Some(string(config, "config")?), &[])?;
        if network.is_null() {
            return fail(MnStatus::NullArgument, "network is null");
        }
        std::fs::create_dir_all(&cfg.data.output_dir).map_err(|e| {
            Fail(MnStatus::Io, format!("{}: {e}", cfg.data.output_dir.display()))
        })?;
        let dataset = match &cfg.data.data_dir {
            Some(dir) => load_dataset(PathBuf::from(dir))?,
            None => Dataset::from_patches(gen_synthetic(
                cfg.data.synthetic_count,
                cfg.data.synthetic_size,
                cfg.data.synthetic_seed,
            )?),
        };
        let graph = build_architecture(&cfg.arch)?;
        let outcome = train::<f32>(&graph, &dataset, &cfg.training, |_| {})?;
        out(network, boxed(MnNetwork(outcome.network)), "network")
    })
}

/// # Safety
/// `matrix` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_confusion_new(n_classes: usize, matrix: *mut *mut MnConfusion) -> MnStatus {
    guard(|| {
        if !(1..=256).contains(&n_classes) {
            return fail(MnStatus::InvalidArgument, format!("n_classes {n_classes} outside [1, 256]"));
        }
        out(matrix, boxed(MnConfusion(ConfusionMatrix::new(n_classes))), "matrix")
    })
}

/// # Safety
/// `matrix` must come from `mn_confusion_new`, or be null.
#[no_mangle]
pub unsafe extern "C" fn mn_confusion_free(matrix: *mut MnConfusion) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Adds `h * w` predicted and true labels. Nothing is counted on error.
///
/// # Safety
/// `matrix` must be a live handle; `predicted` and `truth` must point at
/// `h*w` bytes.
#[no_mangle]
pub unsafe extern "C" fn mn_confusion_accumulate(
    matrix: *mut MnConfusion,
    predicted: *const u8,
    truth: *const u8,
    h: usize,
    w: usize,
) -> MnStatus {
    guard(|| {
        let m = match matrix.as_mut() {
            Some(m) => m,
            None => return fail(MnStatus::NullArgument, "matrix is null"),
        };
        if predicted.is_null() || truth.is_null() {
            return fail(MnStatus::NullArgument, "label buffer is null");
        }
        let map = |p: *const u8| LabelMap::new(h, w, std::slice::from_raw_parts(p, h * w).to_vec());
        m.0.accumulate(&map(predicted)?, &map(truth)?)?;
        Ok(())
    })
}

/// Count of pixels with true class `truth` predicted as `pred`.
///
/// # Safety
/// `matrix` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_confusion_get(
    matrix: *const MnConfusion,
    truth: usize,
    pred: usize,
    count: *mut u64,
) -> MnStatus {
    guard(|| {
        let m = &reference(matrix, "matrix")?.0;
        if truth >= m.n_classes() || pred >= m.n_classes() {
            return fail(MnStatus::InvalidArgument, format!("class index out of range [0, {})", m.n_classes()));
        }
        out(count, m.get(truth, pred), "count")
    })
}

/// # Safety
/// `matrix` must be a live handle; `miou` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_confusion_miou(matrix: *const MnConfusion, miou: *mut f64) -> MnStatus {
    guard(|| {
        let v = reference(matrix, "matrix")?.0.miou()?;
        out(miou, v, "miou")
    })
}

/// # Safety
/// `matrix` must be a live handle; `acc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mn_confusion_acc(matrix: *const MnConfusion, acc: *mut f64) -> MnStatus {
    guard(|| {
        let v = reference(matrix, "matrix")?.0.acc()?;
        out(acc, v, "acc")
    })
}
