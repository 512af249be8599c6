use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cfaug_ffi::*;

fn last_error() -> String {
    let p = cfaug_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn dataset(n: usize) -> *mut CfaugDataset {
    let mut d = ptr::null_mut();
    let s = unsafe { cfaug_synth_generate(n, 4, 2, 0.5, 0.75, 0, 1, &mut d) };
    assert_eq!(s, CfaugStatus::Ok);
    d
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(cfaug_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn full_pipeline_through_handles() {
    let d = dataset(1500);
    assert_eq!(unsafe { cfaug_dataset_len(d) }, 1500);

    let mut b = ptr::null_mut();
    assert_eq!(unsafe { cfaug_bias_induce(d, 0.9, 0.35, 3, &mut b) }, CfaugStatus::Ok);
    let (mut rows, mut observed) = (0usize, 0usize);
    assert_eq!(unsafe { cfaug_biased_counts(b, -1, &mut rows, &mut observed) }, CfaugStatus::Ok);
    assert!(observed < rows);
    let (mut r1, mut o1) = (0usize, 0usize);
    assert_eq!(unsafe { cfaug_biased_counts(b, 1, &mut r1, &mut o1) }, CfaugStatus::Ok);
    assert_eq!(r1, o1);

    let cfg = CString::new("g_iters = 5\nhidden_size = 8\nd_steps = 1").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cfaug_gan_train(b, cfg.as_ptr(), 4, &mut g) }, CfaugStatus::Ok);
    let mut acc = f64::NAN;
    assert_eq!(unsafe { cfaug_gan_discriminator_accuracy(g, 1, &mut acc) }, CfaugStatus::Ok);
    assert!((0.0..=1.0).contains(&acc));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cfaug_gan_save(g, path.as_ptr()) }, CfaugStatus::Ok);
    let mut g2 = ptr::null_mut();
    assert_eq!(unsafe { cfaug_gan_load(path.as_ptr(), &mut g2) }, CfaugStatus::Ok);

    let (mut cf1, mut cf2) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { cfaug_generate(g, b, 9, 0, &mut cf1) }, CfaugStatus::Ok);
    assert_eq!(unsafe { cfaug_generate(g2, b, 9, 0, &mut cf2) }, CfaugStatus::Ok);
    let n = unsafe { cfaug_cf_len(cf1) };
    assert_eq!(n, rows - observed);
    for i in 0..n {
        let (mut id1, mut y1, mut id2, mut y2) = (0u64, 0.0, 0u64, 0.0);
        assert_eq!(unsafe { cfaug_cf_get(cf1, i, &mut id1, &mut y1) }, CfaugStatus::Ok);
        assert_eq!(unsafe { cfaug_cf_get(cf2, i, &mut id2, &mut y2) }, CfaugStatus::Ok);
        assert_eq!((id1, y1), (id2, y2));
        assert!(y1 == 0.0 || y1 == 1.0);
    }
    let (mut id, mut y) = (0u64, 0.0);
    assert_eq!(unsafe { cfaug_cf_get(cf1, n, &mut id, &mut y) }, CfaugStatus::InvalidInput);

    unsafe {
        cfaug_cf_free(cf1);
        cfaug_cf_free(cf2);
        cfaug_gan_free(g);
        cfaug_gan_free(g2);
        cfaug_biased_free(b);
        cfaug_dataset_free(d);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut d = ptr::null_mut();
    let s = unsafe { cfaug_synth_generate(0, 4, 2, 0.5, 0.75, 0, 1, &mut d) };
    assert_eq!(s, CfaugStatus::InvalidConfig);
    assert!(d.is_null());
    assert!(last_error().contains("n must be"));

    assert_eq!(unsafe { cfaug_dataset_write_csv(ptr::null(), ptr::null()) }, CfaugStatus::NullPointer);
    assert_eq!(unsafe { cfaug_dataset_len(ptr::null()) }, 0);

    let d = dataset(400);
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { cfaug_bias_induce(d, 0.9, 0.35, 1, &mut b) }, CfaugStatus::Ok);
    let zero = CString::new("g_iters = 0").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cfaug_gan_train(b, zero.as_ptr(), 0, &mut g) }, CfaugStatus::Untrained);
    assert_eq!(last_error(), "untrained model");
    let bad = CString::new("g_iters = \"many\"").unwrap();
    assert_eq!(unsafe { cfaug_gan_train(b, bad.as_ptr(), 0, &mut g) }, CfaugStatus::InvalidConfig);
    let missing = CString::new("/nonexistent/m.ckpt").unwrap();
    assert_eq!(unsafe { cfaug_gan_load(missing.as_ptr(), &mut g) }, CfaugStatus::Io);
    let bad_utf8 = [0xffu8, 0];
    assert_eq!(
        unsafe { cfaug_gan_load(bad_utf8.as_ptr().cast(), &mut g) },
        CfaugStatus::InvalidUtf8
    );
    unsafe {
        cfaug_biased_free(b);
        cfaug_dataset_free(d);
        cfaug_dataset_free(ptr::null_mut());
    }
}

#[test]
fn bench_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = format!(
        "name = \"ffi\"\nseeds = [0]\noutput_dir = \"{}\"\n[data]\nsource = \"synthetic\"\nn = 1500\n[methods]\ndragonnet = false\noracle = false\n[gan]\ng_iters = 5\n",
        out.display()
    );
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, cfg).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cfaug_bench_run(cpath.as_ptr(), &mut r) }, CfaugStatus::Ok);
    assert_eq!(unsafe { cfaug_result_complete(r) }, 1);

    let fmt = CString::new("markup").unwrap();
    let mut needed = 0usize;
    let s = unsafe { cfaug_result_tables(r, fmt.as_ptr(), ptr::null_mut(), 0, &mut needed) };
    assert_eq!(s, CfaugStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    let s = unsafe { cfaug_result_tables(r, fmt.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(s, CfaugStatus::Ok);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert!(text.contains("| CA |"));
    let bad = CString::new("html").unwrap();
    assert_eq!(
        unsafe { cfaug_result_tables(r, bad.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) },
        CfaugStatus::InvalidInput
    );
    unsafe { cfaug_result_free(r) };
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("cfaug.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["cfaug_gan_train", "cfaug_generate", "cfaug_result_tables", "CFAUG_STATUS_PANIC"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cfaug.h\"\nint main(void) { CfaugDataset *d = 0; return (int)cfaug_dataset_len(d); }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}
