use std::path::Path;

fn generate() -> String {
    let dir = env!("CARGO_MANIFEST_DIR");
    let config = cbindgen::Config::from_file(Path::new(dir).join("cbindgen.toml")).unwrap();
    let mut out = Vec::new();
    cbindgen::Builder::new().with_crate(dir).with_config(config).generate().unwrap().write(&mut out);
    String::from_utf8(out).unwrap()
}

/// Regenerate with IETLAB_WRITE_HEADER=1.
#[test]
fn shipped_header_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ietlab.h");
    let fresh = generate();
    if std::env::var_os("IETLAB_WRITE_HEADER").is_some() {
        std::fs::write(&path, &fresh).unwrap();
    }
    let shipped = std::fs::read_to_string(&path).unwrap_or_default();
    assert_eq!(shipped, fresh, "include/ietlab.h is stale");
    for f in ["ietlab_instance_from_catalog", "ietlab_correction", "ietlab_last_error", "IETLAB_STATUS_OK"] {
        assert!(fresh.contains(f), "{f} missing from header");
    }
}
