//! Canonical JSON: lexicographically sorted object keys, no insignificant
//! whitespace. Every file the engine writes goes through here.

use alloc::string::String;

use serde::Serialize;

/// Serialize `value` in canonical form.
///
/// Keys come out sorted because `serde_json::Value` is backed by a
/// `BTreeMap` (the `preserve_order` feature must stay off).
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let value = serde_json::to_value(value)?;
    serde_json::to_string(&value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let v = json!({"b": 1, "a": {"z": [1, 2], "c": null}});
        assert_eq!(to_canonical_string(&v).unwrap(), r#"{"a":{"c":null,"z":[1,2]},"b":1}"#);
    }
}
