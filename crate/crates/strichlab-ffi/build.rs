use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("read cbindgen.toml");
    // parse only this crate's source; the header needs nothing from dependencies
    match cbindgen::Builder::new().with_config(config).with_src(dir.join("src/lib.rs")).generate() {
        Ok(bindings) => {
            bindings.write_to_file(dir.join("include/strichlab.h"));
        }
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}
