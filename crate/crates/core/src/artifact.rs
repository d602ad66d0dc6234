//! Typed artifacts: schemas, validation, and the field mapping applied by
//! broker nodes.
//!
//! An artifact is a JSON object. A schema declares its fields, which of them
//! are required, and the kind of value each carries. Brokers move an artifact
//! from one schema to another by field-name match plus an explicit rename
//! table; list payloads are mapped element by element so no entry is ever
//! dropped or invented.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

/// Artifacts are plain JSON values; well-formed ones are objects.
pub type Artifact = Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Integer,
    Number,
    Boolean,
    Path,
    Record,
    List(Box<FieldKind>),
}

impl FieldKind {
    pub fn matches(&self, value: &Value) -> bool {
        match (self, value) {
            (Self::Text | Self::Path, Value::String(_)) => true,
            (Self::Integer, Value::Number(n)) => n.is_i64() || n.is_u64(),
            (Self::Number, Value::Number(_)) => true,
            (Self::Boolean, Value::Bool(_)) => true,
            (Self::Record, Value::Object(_)) => true,
            (Self::List(inner), Value::Array(items)) => items.iter().all(|v| inner.matches(v)),
            _ => false,
        }
    }

    /// Whether a value of kind `self` can be handed to a field of kind `target`.
    pub fn feeds(&self, target: &FieldKind) -> bool {
        match (self, target) {
            (a, b) if a == b => true,
            (Self::Text, Self::Path) | (Self::Path, Self::Text) => true,
            (Self::Integer, Self::Number) => true,
            (Self::List(a), Self::List(b)) => a.feeds(b),
            _ => false,
        }
    }

    fn placeholder(&self) -> Value {
        match self {
            Self::Text | Self::Path => Value::String(String::new()),
            Self::Integer => Value::from(0),
            Self::Number => Value::from(0.0),
            Self::Boolean => Value::Bool(false),
            Self::Record => Value::Object(Map::new()),
            Self::List(_) => Value::Array(Vec::new()),
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Text => f.write_str("text"),
            Self::Integer => f.write_str("integer"),
            Self::Number => f.write_str("number"),
            Self::Boolean => f.write_str("boolean"),
            Self::Path => f.write_str("path"),
            Self::Record => f.write_str("record"),
            Self::List(inner) => write!(f, "list<{inner}>"),
        }
    }
}

impl FromStr for FieldKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "text" => Self::Text,
            "integer" => Self::Integer,
            "number" => Self::Number,
            "boolean" => Self::Boolean,
            "path" => Self::Path,
            "record" => Self::Record,
            _ => match s.strip_prefix("list<").and_then(|r| r.strip_suffix('>')) {
                Some(inner) => Self::List(Box::new(inner.parse()?)),
                None => return Err(format!("unknown field kind `{s}`")),
            },
        })
    }
}

impl Serialize for FieldKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactSchema {
    pub id: String,
    pub fields: Vec<FieldSpec>,
    pub required: BTreeSet<String>,
    pub version: u32,
}

impl ArtifactSchema {
    /// Build a schema; every required name must be a declared field.
    pub fn new(
        id: impl Into<String>,
        fields: impl IntoIterator<Item = (&'static str, FieldKind)>,
        required: impl IntoIterator<Item = &'static str>,
    ) -> Result<Self, ArtifactError> {
        let schema = Self {
            id: id.into(),
            fields: fields
                .into_iter()
                .map(|(name, kind)| FieldSpec { name: name.to_string(), kind })
                .collect(),
            required: required.into_iter().map(String::from).collect(),
            version: 1,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<(), ArtifactError> {
        if self.version == 0 {
            return Err(ArtifactError::InvalidSchema(format!("{}: version must be positive", self.id)));
        }
        if let Some(r) = self.required.iter().find(|r| self.field(r).is_none()) {
            return Err(ArtifactError::InvalidSchema(format!("{}: required field `{r}` is not declared", self.id)));
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Smallest artifact that validates: required fields with empty values.
    pub fn placeholder(&self) -> Artifact {
        let mut map = Map::new();
        for f in self.fields.iter().filter(|f| self.required.contains(&f.name)) {
            map.insert(f.name.clone(), f.kind.placeholder());
        }
        Value::Object(map)
    }
}

/// First field of an artifact that does not satisfy its schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaViolation {
    pub schema: String,
    pub field: String,
    pub reason: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.schema, self.field, self.reason)
    }
}

/// Ok iff every required field is present with its declared kind.
pub fn validate_artifact(artifact: &Artifact, schema: &ArtifactSchema) -> Result<(), SchemaViolation> {
    let violation = |field: &str, reason: String| SchemaViolation {
        schema: schema.id.clone(),
        field: field.to_string(),
        reason,
    };
    let Value::Object(map) = artifact else {
        return Err(violation("<root>", "artifact is not an object".into()));
    };
    for spec in schema.fields.iter().filter(|f| schema.required.contains(&f.name)) {
        match map.get(&spec.name) {
            None | Some(Value::Null) => return Err(violation(&spec.name, "missing required field".into())),
            Some(v) if !spec.kind.matches(v) => {
                return Err(violation(&spec.name, format!("expected {}", spec.kind)));
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Rename `from` to `to`, optionally only between a given schema pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenameRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_schema: Option<String>,
    pub from: String,
    pub to: String,
}

impl RenameRule {
    fn applies(&self, source: &str, target: &str) -> bool {
        self.source_schema.as_deref().is_none_or(|s| s == source)
            && self.target_schema.as_deref().is_none_or(|t| t == target)
    }
}

/// Declared field mapping carried by a broker node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMapping {
    pub source_schema: String,
    pub target_schema: String,
    /// target field -> source field
    pub fields: BTreeMap<String, String>,
    /// key renames applied inside record elements of list payloads
    #[serde(default)]
    pub element_renames: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArtifactError {
    #[error("UnmappableSchemas: {source_schema} -> {target_schema}: {detail}")]
    UnmappableSchemas { source_schema: String, target_schema: String, detail: String },
    #[error("InvalidSource: {0}")]
    InvalidSource(SchemaViolation),
    #[error("UnknownSchema: {0}")]
    UnknownSchema(String),
    #[error("InvalidSchema: {0}")]
    InvalidSchema(String),
}

/// Known schemas plus the rename table used to derive broker mappings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaRegistry {
    #[serde(default)]
    pub schemas: BTreeMap<String, ArtifactSchema>,
    #[serde(default)]
    pub renames: Vec<RenameRule>,
}

impl SchemaRegistry {
    pub fn insert(&mut self, schema: ArtifactSchema) -> Result<(), ArtifactError> {
        schema.check()?;
        self.schemas.insert(schema.id.clone(), schema);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ArtifactSchema> {
        self.schemas.get(id)
    }

    pub fn add_rename(&mut self, from: impl Into<String>, to: impl Into<String>) {
        self.renames.push(RenameRule { source_schema: None, target_schema: None, from: from.into(), to: to.into() });
    }

    /// Derive the mapping a broker needs to turn `source` artifacts into
    /// `target` ones. Fails when some required target field has no source.
    pub fn mapping(&self, source: &str, target: &str) -> Result<FieldMapping, ArtifactError> {
        let src = self.get(source).ok_or_else(|| ArtifactError::UnknownSchema(source.to_string()))?;
        let tgt = self.get(target).ok_or_else(|| ArtifactError::UnknownSchema(target.to_string()))?;
        let rules: Vec<&RenameRule> = self.renames.iter().filter(|r| r.applies(source, target)).collect();
        let unmappable = |detail: String| ArtifactError::UnmappableSchemas {
            source_schema: source.to_string(),
            target_schema: target.to_string(),
            detail,
        };

        let mut fields = BTreeMap::new();
        for t in &tgt.fields {
            let candidate = src
                .field(&t.name)
                .or_else(|| rules.iter().filter(|r| r.to == t.name).find_map(|r| src.field(&r.from)));
            match candidate {
                Some(s) if s.kind.feeds(&t.kind) => {
                    fields.insert(t.name.clone(), s.name.clone());
                }
                Some(s) if tgt.required.contains(&t.name) => {
                    return Err(unmappable(format!("field `{}` is {} but `{}` needs {}", s.name, s.kind, t.name, t.kind)));
                }
                None if tgt.required.contains(&t.name) => {
                    return Err(unmappable(format!("no source for required field `{}`", t.name)));
                }
                _ => {}
            }
        }
        let element_renames = rules.iter().map(|r| (r.from.clone(), r.to.clone())).collect();
        Ok(FieldMapping { source_schema: source.to_string(), target_schema: target.to_string(), fields, element_renames })
    }

    /// Registry pre-loaded with the engine's own schemas.
    pub fn with_builtins() -> Self {
        let mut reg = Self::default();
        for s in builtin_schemas() {
            reg.schemas.insert(s.id.clone(), s);
        }
        reg
    }
}

pub const FREE_TEXT_SCHEMA: &str = "free_text";
pub const REPOSITORY_PROFILES_SCHEMA: &str = "repository_profiles";
pub const SANDBOX_SPECS_SCHEMA: &str = "sandbox_specs";
pub const EXECUTOR_BINDINGS_SCHEMA: &str = "executor_bindings";
pub const INTEGRATED_RESULT_SCHEMA: &str = "integrated_result";
pub const REPORT_SCHEMA: &str = "report";

/// Schemas the synthesizer may reference without the library declaring them.
pub fn builtin_schemas() -> Vec<ArtifactSchema> {
    use FieldKind::*;
    let list = |k: FieldKind| List(Box::new(k));
    [
        ArtifactSchema::new(FREE_TEXT_SCHEMA, [("text", Text)], ["text"]),
        ArtifactSchema::new(REPOSITORY_PROFILES_SCHEMA, [("profiles", list(Record))], ["profiles"]),
        ArtifactSchema::new(SANDBOX_SPECS_SCHEMA, [("sandboxes", list(Record))], ["sandboxes"]),
        ArtifactSchema::new(EXECUTOR_BINDINGS_SCHEMA, [("bindings", list(Record))], ["bindings"]),
        ArtifactSchema::new(INTEGRATED_RESULT_SCHEMA, [("summary", Text), ("parts", list(Record))], ["summary"]),
        ArtifactSchema::new(REPORT_SCHEMA, [("report", Text), ("format", Text)], ["report"]),
    ]
    .into_iter()
    .map(|s| s.expect("builtin schemas are well formed"))
    .collect()
}

/// Result of a broker transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub artifact: Artifact,
    /// List-valued target fields that came out empty.
    pub empty_lists: Vec<String>,
}

/// Apply `mapping`, then check the result against `target`.
///
/// List payloads keep their exact length: elements are copied one for one,
/// with record keys renamed by `mapping.element_renames`. Optional target
/// fields with no source value are left out.
pub fn broker_transform(
    artifact: &Artifact,
    mapping: &FieldMapping,
    target: &ArtifactSchema,
) -> Result<Transformed, ArtifactError> {
    let Value::Object(source) = artifact else {
        return Err(ArtifactError::InvalidSource(SchemaViolation {
            schema: mapping.source_schema.clone(),
            field: "<root>".into(),
            reason: "artifact is not an object".into(),
        }));
    };
    let mut out = Map::new();
    let mut empty_lists = Vec::new();
    for (target_field, source_field) in &mapping.fields {
        let Some(value) = source.get(source_field).filter(|v| !v.is_null()) else {
            continue;
        };
        let mapped = match value {
            Value::Array(items) => {
                if items.is_empty() {
                    empty_lists.push(target_field.clone());
                }
                Value::Array(items.iter().map(|item| rename_keys(item, &mapping.element_renames)).collect())
            }
            other => other.clone(),
        };
        out.insert(target_field.clone(), mapped);
    }
    let out = Value::Object(out);
    validate_artifact(&out, target).map_err(|v| ArtifactError::UnmappableSchemas {
        source_schema: mapping.source_schema.clone(),
        target_schema: mapping.target_schema.clone(),
        detail: v.to_string(),
    })?;
    Ok(Transformed { artifact: out, empty_lists })
}

fn rename_keys(item: &Value, renames: &BTreeMap<String, String>) -> Value {
    match item {
        Value::Object(map) if !renames.is_empty() => {
            let mut out = Map::new();
            for (k, v) in map {
                let key = renames.get(k).cloned().unwrap_or_else(|| k.clone());
                out.insert(key, v.clone());
            }
            Value::Object(out)
        }
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn gene_schema() -> ArtifactSchema {
        ArtifactSchema::new(
            "gene_set",
            [("genes", FieldKind::List(Box::new(FieldKind::Text))), ("count", FieldKind::Integer), ("note", FieldKind::Text)],
            ["genes", "count"],
        )
        .unwrap()
    }

    #[test]
    fn field_kind_text_round_trip() {
        for s in ["text", "integer", "list<record>", "list<list<number>>"] {
            assert_eq!(s.parse::<FieldKind>().unwrap().to_string(), s);
        }
        assert!("list<blob>".parse::<FieldKind>().is_err());
    }

    #[test]
    fn required_must_be_declared() {
        assert!(ArtifactSchema::new("x", [("a", FieldKind::Text)], ["b"]).is_err());
    }

    #[test]
    fn validation_names_first_bad_field() {
        let s = gene_schema();
        assert!(validate_artifact(&json!({"genes": ["A"], "count": 1}), &s).is_ok());
        let v = validate_artifact(&json!({"count": 1}), &s).unwrap_err();
        assert_eq!(v.field, "genes");
        let v = validate_artifact(&json!({"genes": [], "count": "three"}), &s).unwrap_err();
        assert_eq!(v.field, "count");
        let v = validate_artifact(&json!({"genes": [1], "count": 1}), &s).unwrap_err();
        assert_eq!(v.field, "genes");
        assert!(validate_artifact(&json!("flat"), &s).is_err());
    }

    #[test]
    fn integer_kind_mismatches() {
        let s = ArtifactSchema::new("n", [("n", FieldKind::Integer)], ["n"]).unwrap();
        let bad = [json!("1"), json!(1.5), json!(true), json!([1]), json!({"n": 1})];
        for b in bad {
            assert!(validate_artifact(&json!({ "n": b }), &s).is_err(), "{b} accepted");
        }
        assert!(validate_artifact(&json!({"n": -3}), &s).is_ok());
    }

    #[test]
    fn mapping_by_name_and_rename() {
        let mut reg = SchemaRegistry::default();
        reg.insert(ArtifactSchema::new("a", [("gene", FieldKind::Text), ("extra", FieldKind::Integer)], ["gene"]).unwrap())
            .unwrap();
        reg.insert(ArtifactSchema::new("b", [("symbol", FieldKind::Text), ("opt", FieldKind::Text)], ["symbol"]).unwrap())
            .unwrap();
        assert!(matches!(reg.mapping("a", "b"), Err(ArtifactError::UnmappableSchemas { .. })));
        reg.add_rename("gene", "symbol");
        let m = reg.mapping("a", "b").unwrap();
        assert_eq!(m.fields.get("symbol").map(String::as_str), Some("gene"));
        assert!(!m.fields.contains_key("opt"));
        let out = broker_transform(&json!({"gene": "NPPA", "extra": 3}), &m, reg.get("b").unwrap()).unwrap();
        assert_eq!(out.artifact, json!({"symbol": "NPPA"}));
    }

    #[test]
    fn rename_inside_rows_keeps_cardinality() {
        let rows = ArtifactSchema::new("rows", [("rows", FieldKind::List(Box::new(FieldKind::Record)))], ["rows"]).unwrap();
        let mapping = FieldMapping {
            source_schema: "rows".into(),
            target_schema: "rows".into(),
            fields: [("rows".to_string(), "rows".to_string())].into_iter().collect(),
            element_renames: [("gene".to_string(), "symbol".to_string())].into_iter().collect(),
        };
        let input = json!({"rows": (0..5).map(|i| json!({"gene": format!("G{i}"), "lfc": i})).collect::<Vec<_>>()});
        let out = broker_transform(&input, &mapping, &rows).unwrap();
        let items = out.artifact["rows"].as_array().unwrap();
        assert_eq!(items.len(), 5);
        assert!(items.iter().all(|r| r.get("symbol").is_some() && r.get("gene").is_none()));
        assert_eq!(items[3]["symbol"], "G3");
        assert!(out.empty_lists.is_empty());

        let empty = broker_transform(&json!({"rows": []}), &mapping, &rows).unwrap();
        assert_eq!(empty.empty_lists, vec!["rows".to_string()]);
    }

    #[test]
    fn placeholder_validates() {
        for s in builtin_schemas() {
            validate_artifact(&s.placeholder(), &s).unwrap();
        }
    }
}
