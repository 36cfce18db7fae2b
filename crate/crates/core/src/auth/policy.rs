//! Role-based access decisions over `(action, path)` pairs.

use std::collections::BTreeMap;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

use super::AuthError;

pub const ACTIONS: [&str; 5] = ["GET", "POST", "PATCH", "PUT", "DELETE"];

/// An HTTP action on a resource. A resource ending in `*` matches by
/// prefix; otherwise the path must be equal and every query parameter of
/// the resource must appear in the request with that value only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permission {
    pub action: String,
    pub resource: String,
}

impl Permission {
    pub fn new(action: &str, resource: &str) -> Self {
        Self {
            action: action.into(),
            resource: resource.into(),
        }
    }
}

/// Maps an abstract permission onto the concrete requests it stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alias {
    pub action: String,
    pub resource: String,
    pub grants: Vec<Permission>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Named permissions.
    pub permissions: BTreeMap<String, Vec<Permission>>,
    /// Role to permission names.
    pub roles: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub aliases: Vec<Alias>,
}

impl PolicyConfig {
    /// Roles admin, supervisor and user with the parking permissions.
    pub fn parking() -> Self {
        let perms = |list: &[(&str, &str)]| list.iter().map(|(a, r)| Permission::new(a, r)).collect::<Vec<_>>();
        Self {
            permissions: BTreeMap::from([
                (
                    "manage-subjects".into(),
                    perms(&[("POST", "/users"), ("POST", "/users/*"), ("DELETE", "/users/*")]),
                ),
                ("update-parking-spot".into(), perms(&[("POST", "/parkingSpot")])),
                ("retrieve-parking-spot".into(), perms(&[("GET", "/parkingSpot")])),
            ]),
            roles: BTreeMap::from([
                (
                    "admin".into(),
                    vec!["manage-subjects".into(), "update-parking-spot".into(), "retrieve-parking-spot".into()],
                ),
                (
                    "supervisor".into(),
                    vec!["update-parking-spot".into(), "retrieve-parking-spot".into()],
                ),
                ("user".into(), vec!["retrieve-parking-spot".into()]),
            ]),
            aliases: vec![
                Alias {
                    action: "POST".into(),
                    resource: "/parkingSpot".into(),
                    grants: perms(&[("PATCH", "/v2/entities/spot:*")]),
                },
                Alias {
                    action: "GET".into(),
                    resource: "/parkingSpot".into(),
                    grants: perms(&[("GET", "/v2/entities/spot:*"), ("GET", "/v2/entities?type=ParkingSpot")]),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pattern {
    Prefix(String),
    Exact { path: String, query: Vec<(String, String)> },
}

impl Pattern {
    fn parse(resource: &str) -> Self {
        if let Some(prefix) = resource.strip_suffix('*') {
            return Self::Prefix(prefix.to_string());
        }
        let (path, query) = resource.split_once('?').unwrap_or((resource, ""));
        Self::Exact {
            path: path.to_string(),
            query: parse_query(query),
        }
    }

    fn matches(&self, path: &str, query: &[(String, String)]) -> bool {
        match self {
            Self::Prefix(p) => path.starts_with(p.as_str()),
            Self::Exact { path: p, query: q } => {
                p == path
                    && q.iter().all(|(k, v)| {
                        let mut values = query.iter().filter(|(qk, _)| qk == k).peekable();
                        values.peek().is_some() && values.all(|(_, qv)| qv == v)
                    })
            }
        }
    }
}

fn decode(s: &str) -> String {
    percent_decode_str(s).decode_utf8_lossy().into_owned()
}

fn decode_form(s: &str) -> String {
    decode(&s.replace('+', " "))
}

fn parse_query(q: &str) -> Vec<(String, String)> {
    q.split('&')
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (k, v) = p.split_once('=').unwrap_or((p, ""));
            (decode_form(k), decode_form(v))
        })
        .collect()
}

/// Compiled role/permission tables.
#[derive(Debug, Clone)]
pub struct Policy {
    grants: BTreeMap<String, Vec<(String, Pattern)>>,
}

impl Policy {
    pub fn compile(config: &PolicyConfig) -> Result<Self, AuthError> {
        let check_action = |a: &str| {
            if ACTIONS.contains(&a) {
                Ok(())
            } else {
                Err(AuthError::InvalidConfig(format!("unknown action `{a}`")))
            }
        };
        let mut grants = BTreeMap::new();
        for (role, names) in &config.roles {
            let mut list = Vec::new();
            for name in names {
                let perms = config
                    .permissions
                    .get(name)
                    .ok_or_else(|| AuthError::InvalidConfig(format!("role `{role}` names unknown permission `{name}`")))?;
                for p in perms {
                    check_action(&p.action)?;
                    list.push((p.action.clone(), Pattern::parse(&p.resource)));
                    for alias in config
                        .aliases
                        .iter()
                        .filter(|a| a.action == p.action && a.resource == p.resource)
                    {
                        for g in &alias.grants {
                            check_action(&g.action)?;
                            list.push((g.action.clone(), Pattern::parse(&g.resource)));
                        }
                    }
                }
            }
            grants.insert(role.clone(), list);
        }
        Ok(Self { grants })
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.grants.keys().map(String::as_str)
    }

    /// Allow iff some role grants `action` on `target` (path with optional
    /// query). Paths are percent-decoded first; dot segments always deny.
    pub fn check<'a>(&self, roles: impl IntoIterator<Item = &'a str>, action: &str, target: &str) -> bool {
        let (raw_path, raw_query) = target.split_once('?').unwrap_or((target, ""));
        let path = decode(raw_path);
        if !path.starts_with('/') || path.split('/').any(|s| s == "." || s == "..") {
            return false;
        }
        let query = parse_query(raw_query);
        roles
            .into_iter()
            .filter_map(|r| self.grants.get(r))
            .flatten()
            .any(|(a, pattern)| a == action && pattern.matches(&path, &query))
    }
}

/// The three abstract permissions as `(action, path)` probes.
pub const MATRIX_PROBES: [(&str, &str, &str); 3] = [
    ("manage subjects", "POST", "/users"),
    ("update status", "PATCH", "/v2/entities/spot:51/attrs"),
    ("retrieve", "GET", "/v2/entities?type=ParkingSpot"),
];
