//! Output plumbing: config hashing, stamped CSV/JSON writers and the
//! fixed-width table printer.
//!
//! Every output file embeds the engine version and a hash of the resolved
//! run configuration (seed included, output directory excluded), so any two
//! runs with the same configuration produce byte-identical files.

use crate::CliError;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// FNV-1a over the canonical JSON encoding of the config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Resolve the output directory: flag, then FRAGFIT_OUT_DIR, then default.
pub fn resolve_out_dir(out: &Option<String>) -> Result<PathBuf, CliError> {
    let dir = out
        .clone()
        .or_else(|| std::env::var("FRAGFIT_OUT_DIR").ok())
        .unwrap_or_else(|| "fragfit_out".to_string());
    let path = PathBuf::from(dir);
    std::fs::create_dir_all(&path).map_err(|e| {
        CliError::usage(format!("cannot create output dir {}: {e}", path.display()))
    })?;
    Ok(path)
}

/// Write a CSV file with the stamp comment line on top.
pub fn write_csv(path: &Path, hash: &str, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut buf = String::with_capacity(rows.len() * 32 + 64);
    buf.push_str(&format!("# fragfit v{ENGINE_VERSION} config {hash}\n"));
    buf.push_str(header);
    buf.push('\n');
    for r in rows {
        buf.push_str(r);
        buf.push('\n');
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(buf.as_bytes())
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Write a JSON report with the version/hash stamp wrapped around a payload.
pub fn write_json<T: Serialize>(path: &Path, hash: &str, payload: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Stamped<'a, T> {
        engine_version: &'static str,
        config_hash: &'a str,
        #[serde(flatten)]
        payload: &'a T,
    }
    let text = serde_json::to_string_pretty(&Stamped {
        engine_version: ENGINE_VERSION,
        config_hash: hash,
        payload,
    })
    .map_err(|e| CliError::compute(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Console line that ignores a closed stdout (e.g. piping through `head`);
/// the report files are the product, the console is a convenience.
pub fn emit(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

/// Fixed-width estimate table matching the report column layout.
pub fn print_estimate_table(
    model: &str,
    mode: &str,
    rows: &[(String, f64, f64, f64)], // term, estimate, std.error, z
) {
    emit(&format!("model {model} ({mode})"));
    emit(&format!(
        "{:<10} {:>12} {:>12} {:>12}",
        "term", "estimate", "std.error", "z_value"
    ));
    for (term, est, se, z) in rows {
        emit(&format!("{term:<10} {est:>12.4} {se:>12.4} {z:>12.3}"));
    }
    emit("");
}
