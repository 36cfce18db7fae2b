use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use chrono::DateTime;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ModelError;

/// Shape of identifiers such as `spot:51` or `weatherForecast:2020-08-03T09`.
static ENTITY_ID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z][A-Za-z0-9_\-]*:\S+$").expect("static regex"));

pub const TEXT: &str = "Text";
pub const NUMBER: &str = "Number";
pub const BOOLEAN: &str = "Boolean";
pub const DATE_TIME: &str = "DateTime";
pub const RELATIONSHIP: &str = "Relationship";
pub const STRUCTURED: &str = "StructuredValue";
pub const NONE: &str = "None";

/// Wire encoding of an entity document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Representation {
    #[default]
    Normalized,
    KeyValues,
}

impl FromStr for Representation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "keyValues" => Ok(Self::KeyValues),
            other => Err(ModelError::MalformedEntity(format!(
                "unknown representation `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Normalized => "normalized",
            Self::KeyValues => "keyValues",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: Value,
    #[serde(default)]
    pub metadata: BTreeMap<String, Metadata>,
}

impl Attribute {
    pub fn new(kind: impl Into<String>, value: Value) -> Self {
        Self {
            kind: kind.into(),
            value,
            metadata: BTreeMap::new(),
        }
    }

    /// Builds an attribute the way a `keyValues` document would be read.
    pub fn inferred(name: &str, value: Value) -> Self {
        let kind = infer_type(name, &value);
        Self::new(kind, value)
    }

    fn check(&self, name: &str) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::MalformedAttribute {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        if self.kind.is_empty() {
            return Err(bad("empty type"));
        }
        match self.kind.as_str() {
            NUMBER if !self.value.is_number() => Err(bad("Number attribute with non-numeric value")),
            DATE_TIME if !self.value.as_str().is_some_and(is_utc_timestamp) => {
                Err(bad("DateTime attribute is not an ISO-8601 UTC timestamp"))
            }
            _ => Ok(()),
        }
    }
}

/// A typed, identified object holding named attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntity {
    pub id: String,
    pub entity_type: String,
    pub attributes: BTreeMap<String, Attribute>,
}

impl ContextEntity {
    pub fn new(id: impl Into<String>, entity_type: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        let entity_type = entity_type.into();
        check_identifier("id", &id)?;
        check_identifier("type", &entity_type)?;
        Ok(Self {
            id,
            entity_type,
            attributes: BTreeMap::new(),
        })
    }

    pub fn with_attr(mut self, name: &str, attr: Attribute) -> Result<Self, ModelError> {
        check_attr_name(name)?;
        attr.check(name)?;
        self.attributes.insert(name.to_string(), attr);
        Ok(self)
    }

    pub fn attr_value(&self, name: &str) -> Option<&Value> {
        self.attributes.get(name).map(|a| &a.value)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_identifier("id", &self.id)?;
        check_identifier("type", &self.entity_type)?;
        for (name, attr) in &self.attributes {
            check_attr_name(name)?;
            attr.check(name)?;
        }
        Ok(())
    }
}

fn check_identifier(field: &str, value: &str) -> Result<(), ModelError> {
    if value.is_empty() {
        return Err(ModelError::MalformedEntity(format!("empty {field}")));
    }
    if value.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(ModelError::MalformedEntity(format!(
            "{field} contains whitespace or control characters"
        )));
    }
    Ok(())
}

fn check_attr_name(name: &str) -> Result<(), ModelError> {
    let bad = |reason: &str| ModelError::MalformedAttribute {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    if name == "id" || name == "type" {
        return Err(bad("reserved attribute name"));
    }
    if name.is_empty() {
        return Err(bad("empty attribute name"));
    }
    if name.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(bad("whitespace or control characters in name"));
    }
    Ok(())
}

pub fn is_entity_id(s: &str) -> bool {
    ENTITY_ID.is_match(s)
}

fn is_utc_timestamp(s: &str) -> bool {
    DateTime::parse_from_rfc3339(s).is_ok_and(|t| t.offset().local_minus_utc() == 0)
}

/// Semantic type of a bare `keyValues` value.
pub fn infer_type(name: &str, value: &Value) -> &'static str {
    match value {
        Value::Null => NONE,
        Value::Bool(_) => BOOLEAN,
        Value::Number(_) => NUMBER,
        Value::Array(_) | Value::Object(_) => STRUCTURED,
        Value::String(s) => {
            if name.len() > 3 && name.starts_with("ref") && is_entity_id(s) {
                RELATIONSHIP
            } else if is_utc_timestamp(s) {
                DATE_TIME
            } else {
                TEXT
            }
        }
    }
}

fn parse_attribute(name: &str, raw: &Value, repr: Representation) -> Result<Attribute, ModelError> {
    check_attr_name(name)?;
    let attr = match repr {
        Representation::KeyValues => Attribute::inferred(name, raw.clone()),
        Representation::Normalized => {
            let bad = |reason: &str| ModelError::MalformedAttribute {
                name: name.to_string(),
                reason: reason.to_string(),
            };
            let obj = raw.as_object().ok_or_else(|| bad("expected an object"))?;
            let value = obj.get("value").cloned().unwrap_or(Value::Null);
            let kind = match obj.get("type") {
                Some(Value::String(t)) => t.clone(),
                Some(_) => return Err(bad("type must be a string")),
                None => infer_type(name, &value).to_string(),
            };
            let metadata = match obj.get("metadata") {
                None | Some(Value::Null) => BTreeMap::new(),
                Some(m) => serde_json::from_value(m.clone())
                    .map_err(|e| bad(&format!("metadata: {e}")))?,
            };
            Attribute {
                kind,
                value,
                metadata,
            }
        }
    };
    attr.check(name)?;
    Ok(attr)
}

/// Parses an attribute map (the body of an attribute update).
pub fn normalize_attrs(
    doc: &Map<String, Value>,
    repr: Representation,
) -> Result<BTreeMap<String, Attribute>, ModelError> {
    doc.iter()
        .map(|(name, raw)| Ok((name.clone(), parse_attribute(name, raw, repr)?)))
        .collect()
}

pub fn normalize(doc: &Value, repr: Representation) -> Result<ContextEntity, ModelError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| ModelError::MalformedEntity("entity document must be an object".into()))?;
    let text_field = |field: &str| match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ModelError::MalformedEntity(format!("{field} must be a string"))),
        None => Err(ModelError::MalformedEntity(format!("missing {field}"))),
    };
    let mut entity = ContextEntity::new(text_field("id")?, text_field("type")?)?;
    for (name, raw) in obj {
        if name == "id" || name == "type" {
            continue;
        }
        entity
            .attributes
            .insert(name.clone(), parse_attribute(name, raw, repr)?);
    }
    Ok(entity)
}

pub fn render_attrs<'a>(
    attrs: impl IntoIterator<Item = (&'a String, &'a Attribute)>,
    repr: Representation,
) -> Map<String, Value> {
    attrs
        .into_iter()
        .map(|(name, attr)| {
            let rendered = match repr {
                Representation::KeyValues => attr.value.clone(),
                Representation::Normalized => {
                    serde_json::to_value(attr).expect("attribute serializes")
                }
            };
            (name.clone(), rendered)
        })
        .collect()
}

pub fn render(entity: &ContextEntity, repr: Representation) -> Value {
    let mut doc = render_attrs(&entity.attributes, repr);
    doc.insert("id".into(), Value::String(entity.id.clone()));
    doc.insert("type".into(), Value::String(entity.entity_type.clone()));
    Value::Object(doc)
}
