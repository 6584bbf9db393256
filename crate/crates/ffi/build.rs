use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("chd.h");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("CHD_H".to_string()),
        cpp_compat: true,
        documentation: true,
        header: Some(
            "/* C interface of the Cahn-Hilliard-Darcy solver. Generated; do not edit. */"
                .to_string(),
        ),
        usize_is_size_t: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen generates the C header")
        .write_to_file(header);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
