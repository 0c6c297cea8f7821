//! Output formatting shared by every CSV/JSON payload: fixed 12-significant-
//! digit decimals and versioned schema headers.

use crate::error::{Error, Result};

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_MINOR: u32 = 0;

/// Decimal with 12 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x == 0.0 {
        // folds -0.0 into 0
        "0.00000000000e0".to_string()
    } else {
        format!("{x:.11e}")
    }
}

/// Rounds to 12 significant digits so JSON payloads carry the same precision
/// as CSV ones.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn schema_tag(kind: &str) -> String {
    format!("catproj-{kind} v{SCHEMA_MAJOR}.{SCHEMA_MINOR}")
}

/// First line of every CSV table: `# catproj-<kind> v<major>.<minor>`.
pub fn csv_header(kind: &str) -> String {
    format!("# {}", schema_tag(kind))
}

/// Accepts `catproj-<kind> vX.Y` with a known major version.
pub fn check_schema_tag(tag: &str, kind: &str) -> Result<()> {
    let tag = tag.trim();
    let prefix = format!("catproj-{kind} v");
    let version = tag
        .strip_prefix(&prefix)
        .ok_or_else(|| Error::Ingestion(format!("expected a {kind} schema tag, found {tag:?}")))?;
    let major: u32 = version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| Error::Ingestion(format!("malformed schema version {version:?}")))?;
    if major != SCHEMA_MAJOR {
        return Err(Error::Ingestion(format!(
            "unsupported {kind} schema major version {major} (reader understands {SCHEMA_MAJOR})"
        )));
    }
    Ok(())
}

/// Checks the `# ...` first line of a CSV payload.
pub fn check_csv_header(line: &str, kind: &str) -> Result<()> {
    let tag = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Ingestion("missing schema header line".into()))?;
    check_schema_tag(tag, kind)
}
