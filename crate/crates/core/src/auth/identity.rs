//! Users, roles and opaque bearer tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AuthError;
use crate::clock::SharedClock;

#[derive(Debug, Clone)]
struct Subject {
    salt: [u8; 16],
    hash: [u8; 32],
    roles: BTreeSet<String>,
}

fn digest(salt: &[u8], password: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    h.finalize().into()
}

/// Comparison whose time does not depend on where the inputs differ.
fn same(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, Clone)]
struct TokenRecord {
    username: String,
    expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedToken {
    pub access_token: String,
    pub token_type: String,
    pub expires_in: i64,
}

/// Introspection result. Inactive tokens carry no subject.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Introspection {
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub roles: BTreeSet<String>,
}

/// A user to create at startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub username: String,
    pub password: String,
    #[serde(default)]
    pub roles: BTreeSet<String>,
}

pub struct IdentityStore {
    users: RwLock<BTreeMap<String, Subject>>,
    tokens: RwLock<HashMap<String, TokenRecord>>,
    ttl: Duration,
    clock: SharedClock,
    /// Stands in for unknown users so that every login costs one digest.
    decoy: Subject,
}

impl IdentityStore {
    pub fn new(ttl: Duration, clock: SharedClock) -> Self {
        let mut salt = [0u8; 16];
        rand::rng().fill_bytes(&mut salt);
        Self {
            users: RwLock::default(),
            tokens: RwLock::default(),
            ttl,
            clock,
            decoy: Subject {
                salt,
                hash: [0; 32],
                roles: BTreeSet::new(),
            },
        }
    }

    pub fn create_user(&self, username: &str, password: &str, roles: BTreeSet<String>) -> Result<(), AuthError> {
        if username.is_empty() || username.contains('/') {
            return Err(AuthError::InvalidRequest("username must be non-empty without `/`".into()));
        }
        let mut users = self.users.write();
        if users.contains_key(username) {
            return Err(AuthError::DuplicateUser(username.into()));
        }
        let mut salt = [0u8; 16];
        rand::rng().fill_bytes(&mut salt);
        users.insert(
            username.into(),
            Subject {
                salt,
                hash: digest(&salt, password),
                roles,
            },
        );
        Ok(())
    }

    /// Removes the user; their tokens stop introspecting as active.
    pub fn delete_user(&self, username: &str) -> Result<(), AuthError> {
        self.users
            .write()
            .remove(username)
            .map(|_| ())
            .ok_or_else(|| AuthError::UnknownUser(username.into()))?;
        self.tokens.write().retain(|_, t| t.username != username);
        Ok(())
    }

    pub fn assign_role(&self, username: &str, role: &str) -> Result<(), AuthError> {
        let mut users = self.users.write();
        let user = users.get_mut(username).ok_or_else(|| AuthError::UnknownUser(username.into()))?;
        user.roles.insert(role.into());
        Ok(())
    }

    pub fn revoke_role(&self, username: &str, role: &str) -> Result<(), AuthError> {
        let mut users = self.users.write();
        let user = users.get_mut(username).ok_or_else(|| AuthError::UnknownUser(username.into()))?;
        user.roles.remove(role);
        Ok(())
    }

    pub fn roles(&self, username: &str) -> Option<BTreeSet<String>> {
        self.users.read().get(username).map(|u| u.roles.clone())
    }

    pub fn usernames(&self) -> Vec<String> {
        self.users.read().keys().cloned().collect()
    }

    /// Password grant. Unknown users and wrong passwords fail alike.
    pub fn issue_token(&self, username: &str, password: &str) -> Result<IssuedToken, AuthError> {
        let verified = {
            let users = self.users.read();
            let (subject, known) = match users.get(username) {
                Some(s) => (s, true),
                None => (&self.decoy, false),
            };
            known & same(&digest(&subject.salt, password), &subject.hash)
        };
        if !verified {
            return Err(AuthError::InvalidCredentials);
        }
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        self.tokens.write().insert(
            token.clone(),
            TokenRecord {
                username: username.into(),
                expires_at: self.clock.now() + self.ttl,
            },
        );
        Ok(IssuedToken {
            access_token: token,
            token_type: "Bearer".into(),
            expires_in: self.ttl.num_seconds(),
        })
    }

    /// Active iff the token exists, has not expired and its user still
    /// exists. Roles are read at call time.
    pub fn introspect(&self, token: &str) -> Introspection {
        let Some(record) = self.tokens.read().get(token).cloned() else {
            return Introspection::default();
        };
        if self.clock.now() >= record.expires_at {
            self.tokens.write().remove(token);
            return Introspection::default();
        }
        match self.roles(&record.username) {
            Some(roles) => Introspection {
                active: true,
                sub: Some(record.username),
                roles,
            },
            None => Introspection::default(),
        }
    }

    pub fn revoke_token(&self, token: &str) {
        self.tokens.write().remove(token);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use std::sync::Arc;

    fn store() -> (IdentityStore, ManualClock) {
        let clock = ManualClock::at("2020-08-03T09:00:00Z");
        let s = IdentityStore::new(Duration::seconds(3600), Arc::new(clock.clone()));
        s.create_user("sam", "pw-sam", BTreeSet::from(["supervisor".to_string()])).unwrap();
        (s, clock)
    }

    #[test]
    fn issue_and_introspect() {
        let (s, _) = store();
        let t = s.issue_token("sam", "pw-sam").unwrap();
        assert_eq!(t.access_token.len(), 64);
        assert_eq!(t.expires_in, 3600);
        let i = s.introspect(&t.access_token);
        assert!(i.active);
        assert_eq!(i.roles, BTreeSet::from(["supervisor".to_string()]));
        assert!(!s.introspect("0123456789abcdef").active);
    }

    #[test]
    fn bad_credentials_look_alike() {
        let (s, _) = store();
        assert_eq!(s.issue_token("sam", "nope"), Err(AuthError::InvalidCredentials));
        assert_eq!(s.issue_token("ghost", "pw-sam"), Err(AuthError::InvalidCredentials));
    }

    #[test]
    fn expiry_and_deletion() {
        let (s, clock) = store();
        let t = s.issue_token("sam", "pw-sam").unwrap().access_token;
        clock.advance(Duration::seconds(3599));
        assert!(s.introspect(&t).active);
        clock.advance(Duration::seconds(1));
        assert!(!s.introspect(&t).active);
        let t = s.issue_token("sam", "pw-sam").unwrap().access_token;
        s.delete_user("sam").unwrap();
        assert!(!s.introspect(&t).active);
        assert_eq!(s.delete_user("sam"), Err(AuthError::UnknownUser("sam".into())));
    }

    #[test]
    fn role_changes_apply_to_live_tokens() {
        let (s, _) = store();
        let t = s.issue_token("sam", "pw-sam").unwrap().access_token;
        s.assign_role("sam", "admin").unwrap();
        assert!(s.introspect(&t).roles.contains("admin"));
        s.revoke_role("sam", "admin").unwrap();
        assert!(!s.introspect(&t).roles.contains("admin"));
        assert!(matches!(s.create_user("sam", "x", BTreeSet::new()), Err(AuthError::DuplicateUser(_))));
    }
}
