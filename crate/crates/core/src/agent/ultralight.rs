//! Ultralight 2.0 text codec.
//!
//! Measures are `key|value` pairs chained with `|`, with `#` separating
//! independent measure groups: `id|123456|t|car|p|51`. Commands travel the
//! other way as `deviceId@command|value`.

use std::fmt;

use super::AgentError;

/// One measure group, pairs in wire order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UlMeasure {
    pub pairs: Vec<(String, String)>,
}

impl UlMeasure {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            pairs: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    /// First value recorded under `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }
}

impl fmt::Display for UlMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{k}|{v}")?;
        }
        Ok(())
    }
}

fn reserved(c: char) -> bool {
    c == '|' || c == '#'
}

pub fn parse_measure(text: &str) -> Result<Vec<UlMeasure>, AgentError> {
    let text = text.trim_end_matches(['\r', '\n']);
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split('#')
        .map(|group| {
            let tokens: Vec<&str> = group.split('|').collect();
            if tokens.len() % 2 != 0 {
                return Err(AgentError::MalformedPayload(format!(
                    "odd token count in `{group}`"
                )));
            }
            let pairs = tokens
                .chunks_exact(2)
                .map(|kv| {
                    if kv[0].is_empty() {
                        Err(AgentError::MalformedPayload(format!("empty key in `{group}`")))
                    } else {
                        Ok((kv[0].to_string(), kv[1].to_string()))
                    }
                })
                .collect::<Result<_, _>>()?;
            Ok(UlMeasure { pairs })
        })
        .collect()
}

pub fn render_measure(groups: &[UlMeasure]) -> Result<String, AgentError> {
    for (k, v) in groups.iter().flat_map(|g| &g.pairs) {
        if k.is_empty() || k.contains(reserved) || v.contains(reserved) {
            return Err(AgentError::MalformedPayload(format!(
                "pair ({k:?}, {v:?}) cannot be encoded"
            )));
        }
    }
    if groups.iter().any(|g| g.pairs.is_empty()) {
        return Err(AgentError::MalformedPayload("empty measure group".into()));
    }
    Ok(groups
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("#"))
}

/// An actuator command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UlCommand {
    pub device_id: String,
    pub command: String,
    pub value: String,
}

impl UlCommand {
    pub fn new(device_id: &str, command: &str, value: &str) -> Self {
        Self {
            device_id: device_id.into(),
            command: command.into(),
            value: value.into(),
        }
    }

    fn check(&self) -> Result<(), AgentError> {
        let bad = |why: &str| AgentError::MalformedCommand(format!("{why}: {self:?}"));
        if self.device_id.is_empty() || self.command.is_empty() || self.value.is_empty() {
            return Err(bad("empty field"));
        }
        if self.device_id.contains(['@', '|', '#']) {
            return Err(bad("device id contains a separator"));
        }
        if self.command.contains(['@', '|', '#']) || self.value.contains(reserved) {
            return Err(bad("command or value contains a separator"));
        }
        Ok(())
    }
}

pub fn render_command(cmd: &UlCommand) -> Result<String, AgentError> {
    cmd.check()?;
    Ok(format!("{}@{}|{}", cmd.device_id, cmd.command, cmd.value))
}

pub fn parse_command(text: &str) -> Result<UlCommand, AgentError> {
    let text = text.trim_end_matches(['\r', '\n']);
    let bad = || AgentError::MalformedCommand(format!("`{text}` is not deviceId@command|value"));
    let (device_id, rest) = text.split_once('@').ok_or_else(bad)?;
    let (command, value) = rest.split_once('|').ok_or_else(bad)?;
    let cmd = UlCommand::new(device_id, command, value);
    cmd.check()?;
    Ok(cmd)
}
