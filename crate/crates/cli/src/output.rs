use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::{Map, Value};

pub use sadsac::json_f64 as num;

/// Serializes `value`; non-finite floats inside plain `f64` fields become
/// `null`, so callers use [`num`] for anything that may be infinite.
pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<Value> {
    Ok(serde_json::to_value(value)?)
}

/// Prints `body` with `command` and `version` added. `serde_json::Map` is
/// ordered, so keys come out sorted.
pub fn emit(command: &str, body: Map<String, Value>) -> anyhow::Result<()> {
    let mut body = body;
    body.insert("command".into(), command.into());
    body.insert("version".into(), sadsac::VERSION.into());
    let mut text = serde_json::to_string_pretty(&Value::Object(body))?;
    text.push('\n');
    stdout(&text)
}

/// Writes to standard output; a closed pipe (`| head`) is not an error.
pub fn stdout(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

#[macro_export]
macro_rules! object {
    ($($key:expr => $value:expr),* $(,)?) => {{
        let mut map = serde_json::Map::new();
        $(map.insert($key.to_string(), serde_json::Value::from($value));)*
        map
    }};
}
