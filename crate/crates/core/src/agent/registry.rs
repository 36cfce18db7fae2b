//! Device registrations, expansion rules and the id template language.
//!
//! Templates substitute `{key}` with the value of measure `key`, `{key:04}`
//! with that value zero-padded to four digits, `{@entityId}` with the id of
//! the device's base entity and `{@seq}` with the sequence number allocated
//! to the base entity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ultralight::UlMeasure;
use super::AgentError;

/// Numbering for base entities whose id is not carried in the payload.
/// Each distinct value of measure `key` gets the next number, starting at
/// `start`, and keeps it afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdSequence {
    pub key: String,
    pub start: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityTemplate {
    pub id_template: String,
    pub entity_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<IdSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Adjust {
    pub attr_name: String,
    pub delta: i64,
}

/// A write against a derived entity. String values in `set_attrs` are
/// templates; other JSON values are written as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpansionAction {
    pub target_id_template: String,
    pub target_type: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set_attrs: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjust: Option<Adjust>,
}

/// Fires when its trigger key is present in a measure group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRule {
    pub trigger: String,
    pub actions: Vec<ExpansionAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceRegistration {
    pub device_key: String,
    pub entity: EntityTemplate,
    /// Measure key to attribute name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attr_map: BTreeMap<String, String>,
    /// Command name to the attribute whose changes drive it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub commands: BTreeMap<String, String>,
    /// Southbound URL that receives commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expansion_rules: Vec<ExpansionRule>,
}

impl DeviceRegistration {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |why: String| AgentError::InvalidRegistration(format!("{}: {why}", self.device_key));
        if self.device_key.is_empty() {
            return Err(AgentError::InvalidRegistration("empty device key".into()));
        }
        if self.entity.entity_type.is_empty() {
            return Err(bad("empty entity type".into()));
        }
        let mut templates = vec![self.entity.id_template.as_str()];
        for rule in &self.expansion_rules {
            if rule.trigger.is_empty() {
                return Err(bad("expansion rule with empty trigger".into()));
            }
            for action in &rule.actions {
                templates.push(&action.target_id_template);
                if action.set_attrs.is_empty() && action.adjust.is_none() {
                    return Err(bad(format!("action on `{}` does nothing", action.target_id_template)));
                }
                if action.adjust.as_ref().is_some_and(|a| a.delta == 0) {
                    return Err(bad("adjust delta must be non-zero".into()));
                }
                templates.extend(action.set_attrs.values().filter_map(Value::as_str));
            }
        }
        for t in templates {
            parse_template(t).map_err(|e| bad(e.to_string()))?;
        }
        if !self.commands.is_empty() {
            if self.endpoint.is_none() {
                return Err(bad("commands need an endpoint".into()));
            }
            if !is_literal(&self.entity.id_template) {
                return Err(bad("an actuator's entity id must be literal".into()));
            }
        }
        Ok(())
    }

    pub fn is_actuator(&self) -> bool {
        !self.commands.is_empty()
    }
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<Vec<DeviceRegistration>, AgentError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| AgentError::Io(format!("{}: {e}", path.as_ref().display())))?;
    let regs: Vec<DeviceRegistration> =
        serde_json::from_str(&text).map_err(|e| AgentError::InvalidRegistration(e.to_string()))?;
    for reg in &regs {
        reg.validate()?;
    }
    Ok(regs)
}

pub fn save_registry(path: impl AsRef<Path>, regs: &[DeviceRegistration]) -> Result<(), AgentError> {
    let text = serde_json::to_string_pretty(regs).expect("registrations serialize");
    std::fs::write(path.as_ref(), text)
        .map_err(|e| AgentError::Io(format!("{}: {e}", path.as_ref().display())))
}

#[derive(Debug, Clone, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    Measure { key: &'a str, width: Option<usize> },
    EntityId,
    Seq,
}

fn parse_template(t: &str) -> Result<Vec<Piece<'_>>, AgentError> {
    let err = |why: &str| AgentError::Template(format!("`{t}`: {why}"));
    let mut pieces = Vec::new();
    let mut rest = t;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Text(&rest[..open]));
        }
        let close = rest[open..].find('}').ok_or_else(|| err("unclosed `{`"))? + open;
        let inner = &rest[open + 1..close];
        pieces.push(match inner {
            "@entityId" => Piece::EntityId,
            "@seq" => Piece::Seq,
            _ if inner.starts_with('@') => return Err(err("unknown builtin")),
            _ => {
                let (key, width) = match inner.split_once(':') {
                    Some((k, w)) => {
                        let width = w
                            .strip_prefix('0')
                            .and_then(|w| w.parse().ok())
                            .ok_or_else(|| err("width must look like `:04`"))?;
                        (k, Some(width))
                    }
                    None => (inner, None),
                };
                if key.is_empty() || key.contains(['{', '}']) {
                    return Err(err("empty placeholder"));
                }
                Piece::Measure { key, width }
            }
        });
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(err("stray `}`"));
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    Ok(pieces)
}

fn is_literal(t: &str) -> bool {
    parse_template(t).is_ok_and(|p| p.iter().all(|p| matches!(p, Piece::Text(_))))
}

/// Values available to a template.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateCtx<'a> {
    pub measure: Option<&'a UlMeasure>,
    pub entity_id: Option<&'a str>,
    pub seq: Option<u64>,
}

pub fn render_template(t: &str, ctx: TemplateCtx<'_>) -> Result<String, AgentError> {
    let err = |why: String| AgentError::Template(format!("`{t}`: {why}"));
    let mut out = String::with_capacity(t.len());
    for piece in parse_template(t)? {
        match piece {
            Piece::Text(s) => out.push_str(s),
            Piece::EntityId => out.push_str(ctx.entity_id.ok_or_else(|| err("no base entity".into()))?),
            Piece::Seq => out.push_str(&ctx.seq.ok_or_else(|| err("no sequence number".into()))?.to_string()),
            Piece::Measure { key, width } => {
                let value = ctx
                    .measure
                    .and_then(|m| m.get(key))
                    .ok_or_else(|| err(format!("measure `{key}` missing")))?;
                match width {
                    Some(w) => {
                        let n: u64 = value
                            .parse()
                            .map_err(|_| err(format!("`{value}` is not a number")))?;
                        out.push_str(&format!("{n:0w$}"));
                    }
                    None => out.push_str(value),
                }
            }
        }
    }
    Ok(out)
}

/// Same as [`render_template`] for JSON values: strings are rendered,
/// everything else passes through.
pub fn render_value(v: &Value, ctx: TemplateCtx<'_>) -> Result<Value, AgentError> {
    match v {
        Value::String(s) => render_template(s, ctx).map(Value::String),
        other => Ok(other.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(m: &'a UlMeasure) -> TemplateCtx<'a> {
        TemplateCtx {
            measure: Some(m),
            entity_id: Some("vehicle:501"),
            seq: Some(501),
        }
    }

    #[test]
    fn placeholders() {
        let m = UlMeasure::new([("p", "51"), ("id", "123456")]);
        assert_eq!(render_template("spot:{p}", ctx(&m)).unwrap(), "spot:51");
        assert_eq!(render_template("bulb:{p:04}", ctx(&m)).unwrap(), "bulb:0051");
        assert_eq!(render_template("vehicle:{@seq}", ctx(&m)).unwrap(), "vehicle:501");
        assert_eq!(render_template("{@entityId}", ctx(&m)).unwrap(), "vehicle:501");
        assert_eq!(render_template("parking:1", ctx(&m)).unwrap(), "parking:1");
    }

    #[test]
    fn template_errors() {
        let m = UlMeasure::new([("p", "x")]);
        for bad in ["spot:{q}", "spot:{p:04}", "{p", "p}", "{@nope}", "{}", "{p:4}"] {
            assert!(matches!(render_template(bad, ctx(&m)), Err(AgentError::Template(_))), "{bad}");
        }
    }

    #[test]
    fn literal_detection() {
        assert!(is_literal("spot:51"));
        assert!(!is_literal("spot:{p}"));
    }

    #[test]
    fn actuator_needs_endpoint_and_literal_entity() {
        let mut reg = DeviceRegistration {
            device_key: "bulb:0001".into(),
            entity: EntityTemplate {
                id_template: "spot:{p}".into(),
                entity_type: "ParkingSpot".into(),
                sequence: None,
            },
            attr_map: BTreeMap::new(),
            commands: BTreeMap::from([("light".into(), "status".into())]),
            endpoint: None,
            expansion_rules: vec![],
        };
        assert!(reg.validate().is_err());
        reg.endpoint = Some("http://127.0.0.1:1/bulbs".into());
        assert!(reg.validate().is_err());
        reg.entity.id_template = "spot:1".into();
        reg.validate().unwrap();
    }
}
