use std::env;
use std::path::PathBuf;

use cbindgen::{Config, Language, RenameRule};

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");

    let mut config = Config::default();
    config.language = Language::C;
    config.include_guard = Some("RBM_KPZ_H".into());
    config.cpp_compat = true;
    config.documentation = true;
    config.enumeration.prefix_with_name = true;
    config.enumeration.rename_variants = RenameRule::ScreamingSnakeCase;
    config.autogen_warning = Some("/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */".into());

    cbindgen::Builder::new()
        .with_config(config)
        .with_crate(&crate_dir)
        .generate()
        .expect("unable to generate C bindings")
        .write_to_file(crate_dir.join("include").join("rbm_kpz.h"));
}
