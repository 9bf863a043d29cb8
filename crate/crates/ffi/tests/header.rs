use std::path::Path;
use std::process::Command;

/// The generated header must compile as C on its own. Skipped when no C
/// compiler is on PATH.
#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tubekit.h");
    assert!(header.is_file(), "header not generated");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["tk_corpus_load", "tk_best_path", "tk_last_error", "TK_STATUS_NO_FEASIBLE_PATH"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
