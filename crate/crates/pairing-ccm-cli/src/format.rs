//! Numeric output with 17 significant digits, enough to reconstruct every
//! f64 bit-exactly on reload.

use std::io;

/// 17-significant-digit scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize a JSON value with every float at 17 significant digits.
pub fn to_json_17(value: &serde_json::Value) -> Result<String, super::ConfigError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    serde::Serialize::serialize(value, &mut ser)
        .map_err(|e| super::ConfigError(format!("serialization: {e}")))?;
    String::from_utf8(buf).map_err(|e| super::ConfigError(format!("utf8: {e}")))
}
