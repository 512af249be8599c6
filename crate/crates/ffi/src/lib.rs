//! C ABI over the cfaug toolkit.
//!
//! Objects cross the boundary as opaque handles created by `cfaug_*_new`-style
//! constructors and released with the matching `cfaug_*_free`. Every fallible
//! call returns a [`CfaugStatus`]; on failure the message is available from
//! [`cfaug_last_error`] on the same thread until the next failing call.
//! Panics never unwind into C: they are caught and reported as
//! [`CfaugStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cfaug::bias::{self, BiasedTrainSet};
use cfaug::data::{self, Dataset, SplitFractions};
use cfaug::experiment::{self, ExperimentConfig, ExperimentResult, TableFormat};
use cfaug::gan::{self, CfLabels, CganModel, GanConfig, GenerationMode};
use cfaug::seed;
use cfaug::synth::{self, SynthConfig};
use cfaug::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfaugStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidInput = 4,
    Io = 5,
    Untrained = 6,
    Unsupported = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

pub struct CfaugDataset(Dataset);
pub struct CfaugBiasedSet(BiasedTrainSet);
pub struct CfaugGan(CganModel);
pub struct CfaugCfLabels(Vec<(u64, f64)>);
pub struct CfaugResult(ExperimentResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CfaugStatus {
    match e {
        Error::InvalidConfig(_) | Error::Serde(_) => CfaugStatus::InvalidConfig,
        Error::Io { .. } => CfaugStatus::Io,
        Error::Untrained => CfaugStatus::Untrained,
        Error::Unsupported(_) => CfaugStatus::Unsupported,
        Error::InvalidInput(_)
        | Error::InvalidRow { .. }
        | Error::Schema(_)
        | Error::DimensionMismatch { .. }
        | Error::NoRows
        | Error::SingleClass
        | Error::Csv(_) => CfaugStatus::InvalidInput,
        _ => CfaugStatus::Other,
    }
}

struct Failure(CfaugStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfaugStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfaugStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CfaugStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CfaugStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string_arg(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(CfaugStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failing call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cfaug_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cfaug_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Synthetic binary dataset.
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn cfaug_synth_generate(
    n: usize,
    d_tab: usize,
    d_rich: usize,
    noise_sd: f64,
    positive_share: f64,
    weight_seed: u64,
    data_seed: u64,
    out: *mut *mut CfaugDataset,
) -> CfaugStatus {
    guard(|| {
        let cfg = SynthConfig {
            n,
            d_tab,
            d_rich,
            noise_sd,
            positive_share,
            continuous: false,
            weight_seed,
            data_seed,
        };
        let (d, _) = synth::generate_synthetic(&cfg)?;
        emit(out, CfaugDataset(d))
    })
}

/// # Safety
/// `d` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn cfaug_dataset_len(d: *const CfaugDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `d` must be a live dataset handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cfaug_dataset_write_csv(d: *const CfaugDataset, path: *const c_char) -> CfaugStatus {
    guard(|| {
        let d = borrow(d, "dataset")?;
        let p = PathBuf::from(string_arg(path, "path")?);
        Ok(d.0.write_csv(&p)?)
    })
}

/// # Safety
/// `d` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfaug_dataset_free(d: *mut CfaugDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Splits `d` with the default fractions, fits the tabular recommender on
/// the original split and masks labels of its training split.
///
/// # Safety
/// `d` must be a live dataset handle and `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cfaug_bias_induce(
    d: *const CfaugDataset,
    label_drop: f64,
    row_drop: f64,
    seed_value: u64,
    out: *mut *mut CfaugBiasedSet,
) -> CfaugStatus {
    guard(|| {
        let d = &borrow(d, "dataset")?.0;
        let splits = data::split_dataset(d, SplitFractions::default(), seed::derive(seed_value, "split"))?;
        let rec = bias::fit_tab_model(&splits.original, d.task(), seed::derive(seed_value, "recommender"))?;
        let r = bias::predict_recs(&rec, &splits.train_pool)?;
        let b = bias::induce_train_bias(&splits.train_pool, &r, label_drop, row_drop, seed::derive(seed_value, "mask"))?;
        emit(out, CfaugBiasedSet(b))
    })
}

/// Row and observed-label counts, optionally restricted to one
/// recommendation condition (`condition` 0 or 1; -1 for all rows).
///
/// # Safety
/// `b` must be a live handle; `rows` and `observed` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cfaug_biased_counts(
    b: *const CfaugBiasedSet,
    condition: i32,
    rows: *mut usize,
    observed: *mut usize,
) -> CfaugStatus {
    guard(|| {
        let b = &borrow(b, "biased set")?.0;
        if rows.is_null() || observed.is_null() {
            return Err(null("count output"));
        }
        let (n, o) = match condition {
            -1 => (b.len(), b.n_observed()),
            0 | 1 => {
                let c = b.condition_counts(condition == 1);
                (c.rows, c.observed)
            }
            other => {
                return Err(Failure(
                    CfaugStatus::InvalidInput,
                    format!("condition must be -1, 0 or 1, got {other}"),
                ))
            }
        };
        *rows = n;
        *observed = o;
        Ok(())
    })
}

/// # Safety
/// `b` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfaug_biased_free(b: *mut CfaugBiasedSet) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Trains the GAN. `config_toml` may be null for defaults; otherwise it holds
/// GAN settings in the configuration-file syntax.
///
/// # Safety
/// `b` must be a live handle, `config_toml` null or nul-terminated, `out`
/// valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cfaug_gan_train(
    b: *const CfaugBiasedSet,
    config_toml: *const c_char,
    seed_value: u64,
    out: *mut *mut CfaugGan,
) -> CfaugStatus {
    guard(|| {
        let b = &borrow(b, "biased set")?.0;
        let cfg: GanConfig = if config_toml.is_null() {
            GanConfig::default()
        } else {
            toml::from_str(&string_arg(config_toml, "config")?).map_err(Error::from)?
        };
        let m = gan::train_cgan(b, &cfg, b.task(), seed_value)?;
        emit(out, CfaugGan(m))
    })
}

/// Final accuracy of discriminator `index` on a fresh balanced batch.
///
/// # Safety
/// `g` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfaug_gan_discriminator_accuracy(
    g: *const CfaugGan,
    index: usize,
    value: *mut f64,
) -> CfaugStatus {
    guard(|| {
        let g = &borrow(g, "model")?.0;
        let acc = g
            .telemetry
            .final_discriminator_accuracy
            .get(index)
            .ok_or_else(|| Failure(CfaugStatus::InvalidInput, format!("no discriminator {index}")))?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = *acc;
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle; `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn cfaug_gan_save(g: *const CfaugGan, path: *const c_char) -> CfaugStatus {
    guard(|| {
        let g = borrow(g, "model")?;
        Ok(g.0.save(&PathBuf::from(string_arg(path, "path")?))?)
    })
}

/// # Safety
/// `path` nul-terminated; `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cfaug_gan_load(path: *const c_char, out: *mut *mut CfaugGan) -> CfaugStatus {
    guard(|| {
        let m = CganModel::load(&PathBuf::from(string_arg(path, "path")?))?;
        emit(out, CfaugGan(m))
    })
}

/// # Safety
/// `g` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfaug_gan_free(g: *mut CfaugGan) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Generated labels for every unobserved row of `b`, sorted by row id.
/// `sampled` nonzero draws from the generated distribution instead of taking
/// the most likely label.
///
/// # Safety
/// `g` and `b` must be live handles; `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cfaug_generate(
    g: *const CfaugGan,
    b: *const CfaugBiasedSet,
    seed_value: u64,
    sampled: i32,
    out: *mut *mut CfaugCfLabels,
) -> CfaugStatus {
    guard(|| {
        let g = &borrow(g, "model")?.0;
        let b = &borrow(b, "biased set")?.0;
        let mode = if sampled != 0 {
            GenerationMode::Sampled
        } else {
            GenerationMode::Expected
        };
        let cf: CfLabels = gan::generate_counterfactuals(g, b, seed_value, mode)?;
        emit(out, CfaugCfLabels(cf.labels.into_iter().collect()))
    })
}

/// # Safety
/// `cf` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cfaug_cf_len(cf: *const CfaugCfLabels) -> usize {
    cf.as_ref().map_or(0, |c| c.0.len())
}

/// The `index`-th `(id, label)` pair.
///
/// # Safety
/// `cf` must be a live handle; `id` and `label` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cfaug_cf_get(
    cf: *const CfaugCfLabels,
    index: usize,
    id: *mut u64,
    label: *mut f64,
) -> CfaugStatus {
    guard(|| {
        let cf = &borrow(cf, "labels")?.0;
        let &(i, y) = cf
            .get(index)
            .ok_or_else(|| Failure(CfaugStatus::InvalidInput, format!("index {index} out of range")))?;
        if id.is_null() || label.is_null() {
            return Err(null("output"));
        }
        *id = i;
        *label = y;
        Ok(())
    })
}

/// # Safety
/// `cf` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfaug_cf_free(cf: *mut CfaugCfLabels) {
    if !cf.is_null() {
        drop(Box::from_raw(cf));
    }
}

/// Runs a benchmark from an experiment configuration file, writing artifacts
/// to its output directory.
///
/// # Safety
/// `config_path` nul-terminated; `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cfaug_bench_run(config_path: *const c_char, out: *mut *mut CfaugResult) -> CfaugStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(&PathBuf::from(string_arg(config_path, "config path")?))?;
        let r = experiment::run_experiment(&cfg)?;
        emit(out, CfaugResult(r))
    })
}

/// 1 when every method succeeded on every seed, 0 otherwise.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cfaug_result_complete(r: *const CfaugResult) -> i32 {
    r.as_ref().map_or(0, |r| i32::from(r.0.is_complete()))
}

/// Renders result tables (`format`: plain, delimited or markup) into `buf`.
/// `needed` receives the size including the terminating nul; when `buf` is
/// null or `len` is too small nothing is copied and `BufferTooSmall` is
/// returned.
///
/// # Safety
/// `r` must be a live handle, `format` nul-terminated, `buf` null or valid
/// for `len` bytes, `needed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfaug_result_tables(
    r: *const CfaugResult,
    format: *const c_char,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> CfaugStatus {
    guard(|| {
        let r = &borrow(r, "result")?.0;
        let format: TableFormat = string_arg(format, "format")?.parse()?;
        let text = experiment::render_tables(r, format)?;
        if needed.is_null() {
            return Err(null("needed"));
        }
        *needed = text.len() + 1;
        if buf.is_null() || len < text.len() + 1 {
            return Err(Failure(CfaugStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1)));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `r` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfaug_result_free(r: *mut CfaugResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
