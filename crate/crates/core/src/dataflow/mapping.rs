//! Declarative JSON-to-entity mapping.
//!
//! Templates accept `{a.b}` (a dotted path into the source document) and
//! the clock builtins `{@hour}` (`2020-08-03T09`), `{@hourStart}`
//! (`2020-08-03T09:00:00.00Z`), `{@hourEnd}` (one hour later) and `{@now}`.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, DurationRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::DataflowError;
use crate::clock::{iso, parse_iso};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Cast {
    Number,
    Text,
    Datetime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldMap {
    pub source_path: String,
    /// Attribute name, or `attr.field` to nest one level.
    pub target_attr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cast: Option<Cast>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
}

impl FieldMap {
    pub fn new(source_path: &str, target_attr: &str) -> Self {
        Self {
            source_path: source_path.into(),
            target_attr: target_attr.into(),
            cast: None,
            optional: false,
        }
    }

    pub fn cast(mut self, cast: Cast) -> Self {
        self.cast = Some(cast);
        self
    }

    pub fn optional(mut self) -> Self {
        self.optional = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MappingSpec {
    pub target_type: String,
    pub id_template: String,
    #[serde(default)]
    pub field_maps: Vec<FieldMap>,
    /// String constants are templates.
    #[serde(default)]
    pub constants: BTreeMap<String, Value>,
}

const HOUR_FORMAT: &str = "%Y-%m-%dT%H";
const HOUR_STAMP_FORMAT: &str = "%Y-%m-%dT%H:00:00.00Z";

fn lookup<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |v, key| v.get(key))
}

fn valid_path(path: &str) -> bool {
    !path.is_empty() && path.split('.').all(|k| !k.is_empty())
}

fn builtin(name: &str, now: DateTime<Utc>) -> Option<String> {
    let hour = now.duration_trunc(Duration::hours(1)).ok()?;
    Some(match name {
        "hour" => hour.format(HOUR_FORMAT).to_string(),
        "hourStart" => hour.format(HOUR_STAMP_FORMAT).to_string(),
        "hourEnd" => (hour + Duration::hours(1)).format(HOUR_STAMP_FORMAT).to_string(),
        "now" => iso(now),
        _ => return None,
    })
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn render(template: &str, doc: &Value, now: DateTime<Utc>) -> Result<String, DataflowError> {
    let err = |why: String| DataflowError::Template(format!("`{template}`: {why}"));
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').ok_or_else(|| err("unclosed `{`".into()))? + open;
        let name = &rest[open + 1..close];
        if let Some(b) = name.strip_prefix('@') {
            out.push_str(&builtin(b, now).ok_or_else(|| err(format!("unknown builtin `{name}`")))?);
        } else {
            if !valid_path(name) {
                return Err(err(format!("bad path `{name}`")));
            }
            let v = lookup(doc, name).ok_or_else(|| DataflowError::MissingSourcePath(name.into()))?;
            out.push_str(&scalar_text(v).ok_or_else(|| err(format!("`{name}` is not a scalar")))?);
        }
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(err("stray `}`".into()));
    }
    out.push_str(rest);
    Ok(out)
}

fn apply_cast(path: &str, v: &Value, cast: Option<Cast>) -> Result<Value, DataflowError> {
    let bad = |reason: &str| DataflowError::BadCast {
        path: path.into(),
        reason: reason.into(),
    };
    Ok(match (cast, v) {
        (None, v) => v.clone(),
        (Some(Cast::Number), Value::Number(_)) => v.clone(),
        (Some(Cast::Number), Value::String(s)) => {
            let n: f64 = s.trim().parse().map_err(|_| bad("not a number"))?;
            json!(n)
        }
        (Some(Cast::Number), _) => return Err(bad("not a number")),
        (Some(Cast::Text), v) => Value::String(scalar_text(v).ok_or_else(|| bad("not a scalar"))?),
        (Some(Cast::Datetime), Value::String(s)) => {
            Value::String(iso(parse_iso(s).ok_or_else(|| bad("not an ISO-8601 timestamp"))?))
        }
        (Some(Cast::Datetime), _) => return Err(bad("not an ISO-8601 timestamp")),
    })
}

fn put(doc: &mut Map<String, Value>, target: &str, v: Value) -> Result<(), DataflowError> {
    match target.split_once('.') {
        None => {
            doc.insert(target.into(), v);
        }
        Some((attr, field)) => {
            let slot = doc.entry(attr).or_insert_with(|| Value::Object(Map::new()));
            let obj = slot
                .as_object_mut()
                .ok_or_else(|| DataflowError::InvalidSpec(format!("`{attr}` is both a value and an object")))?;
            obj.insert(field.into(), v);
        }
    }
    Ok(())
}

impl MappingSpec {
    pub fn check(&self) -> Result<(), DataflowError> {
        if self.target_type.is_empty() || self.id_template.is_empty() {
            return Err(DataflowError::InvalidSpec("targetType and idTemplate are required".into()));
        }
        for m in &self.field_maps {
            if !valid_path(&m.source_path) {
                return Err(DataflowError::InvalidSpec(format!("bad source path `{}`", m.source_path)));
            }
            if !valid_path(&m.target_attr) || m.target_attr.matches('.').count() > 1 {
                return Err(DataflowError::InvalidSpec(format!(
                    "target `{}` must be `attr` or `attr.field`",
                    m.target_attr
                )));
            }
        }
        Ok(())
    }

    /// Builds the `keyValues` entity document for `doc` as seen at `now`.
    pub fn transform(&self, doc: &Value, now: DateTime<Utc>) -> Result<Value, DataflowError> {
        self.check()?;
        let mut out = Map::new();
        out.insert("id".into(), Value::String(render(&self.id_template, doc, now)?));
        out.insert("type".into(), Value::String(self.target_type.clone()));
        for (attr, v) in &self.constants {
            let v = match v {
                Value::String(t) => Value::String(render(t, doc, now)?),
                other => other.clone(),
            };
            put(&mut out, attr, v)?;
        }
        for m in &self.field_maps {
            match lookup(doc, &m.source_path) {
                Some(v) => put(&mut out, &m.target_attr, apply_cast(&m.source_path, v, m.cast)?)?,
                None if m.optional => {}
                None => return Err(DataflowError::MissingSourcePath(m.source_path.clone())),
            }
        }
        Ok(Value::Object(out))
    }
}

/// The weather-API-to-`WeatherForecast` mapping, keyed by the poll hour.
pub fn weather_mapping() -> MappingSpec {
    MappingSpec {
        target_type: "WeatherForecast".into(),
        id_template: "weatherForecast:{@hour}".into(),
        field_maps: vec![
            FieldMap::new("temp", "temperature").cast(Cast::Number),
            FieldMap::new("precipitation", "precipitationProbability").cast(Cast::Number),
            FieldMap::new("tempmax", "dayMaximum.temperature").cast(Cast::Number),
            FieldMap::new("tempmin", "dayMinimum.temperature").cast(Cast::Number),
            FieldMap::new("wind.speed", "windSpeed").cast(Cast::Number),
        ],
        constants: BTreeMap::from([
            ("validFrom".into(), json!("{@hourStart}")),
            ("validTo".into(), json!("{@hourEnd}")),
        ]),
    }
}
