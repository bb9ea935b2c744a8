//! Keyed rule database with an append-only audit log.
//!
//! One rule per (app, resource). Every mutation appends exactly one
//! [`RuleEvent`]; replaying the log from an empty store rebuilds the map.
//! Persistence is a single JSON document `{"rules": [...], "audit": [...]}`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::permission::{ResourceClass, Rule, Tick};

#[derive(Debug, thiserror::Error)]
pub enum RuleStoreError {
    #[error("stale write for ({app_id}, {resource}): tick {attempted} is older than stored tick {stored}")]
    StaleWrite {
        app_id: String,
        resource: ResourceClass,
        attempted: Tick,
        stored: Tick,
    },
    #[error("audit event {index} is inconsistent with the replayed state")]
    InconsistentAudit { index: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleEventKind {
    Inserted,
    Updated,
    Deleted,
}

/// One audit entry. `Inserted` has no `before`, `Deleted` has no `after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEvent {
    pub at: Tick,
    pub kind: RuleEventKind,
    pub before: Option<Rule>,
    pub after: Option<Rule>,
}

type Key = (String, ResourceClass);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleStore {
    rules: BTreeMap<Key, Rule>,
    audit: Vec<RuleEvent>,
}

#[derive(Serialize, Deserialize)]
struct RuleStoreDocument {
    rules: Vec<Rule>,
    audit: Vec<RuleEvent>,
}

impl RuleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, app_id: &str, resource: ResourceClass) -> Option<&Rule> {
        self.rules.get(&(app_id.to_owned(), resource))
    }

    /// Inserts or replaces the rule for its key, returning the displaced rule.
    pub fn upsert(&mut self, rule: Rule) -> Result<Option<Rule>, RuleStoreError> {
        let key = rule.key();
        if let Some(stored) = self.rules.get(&key) {
            if rule.decided_at < stored.decided_at {
                return Err(RuleStoreError::StaleWrite {
                    app_id: rule.app_id,
                    resource: rule.resource,
                    attempted: rule.decided_at,
                    stored: stored.decided_at,
                });
            }
        }
        let at = rule.decided_at;
        let previous = self.rules.insert(key, rule.clone());
        let kind = if previous.is_some() {
            RuleEventKind::Updated
        } else {
            RuleEventKind::Inserted
        };
        self.audit.push(RuleEvent {
            at,
            kind,
            before: previous.clone(),
            after: Some(rule),
        });
        Ok(previous)
    }

    /// Removes the rule for the pair. The event is stamped with `at`.
    pub fn delete(&mut self, app_id: &str, resource: ResourceClass, at: Tick) -> Option<Rule> {
        let removed = self.rules.remove(&(app_id.to_owned(), resource))?;
        self.audit.push(RuleEvent {
            at,
            kind: RuleEventKind::Deleted,
            before: Some(removed.clone()),
            after: None,
        });
        Some(removed)
    }

    /// Rules ordered by (app_id, resource), optionally restricted to one app.
    pub fn list_rules(&self, app_id: Option<&str>) -> Vec<Rule> {
        match app_id {
            Some(app) => self
                .rules
                .range((app.to_owned(), ResourceClass::ALL[0])..)
                .take_while(|((a, _), _)| a == app)
                .map(|(_, r)| r.clone())
                .collect(),
            None => self.rules.values().cloned().collect(),
        }
    }

    pub fn audit(&self) -> &[RuleEvent] {
        &self.audit
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Latest tick seen by any audit event, or 0.
    pub fn last_tick(&self) -> Tick {
        self.audit.iter().map(|e| e.at).max().unwrap_or(0)
    }

    /// Rebuilds a store from an audit log, checking each event's `before`
    /// against the state being rebuilt.
    pub fn replay(audit: &[RuleEvent]) -> Result<RuleStore, RuleStoreError> {
        let mut rules: BTreeMap<Key, Rule> = BTreeMap::new();
        for (index, event) in audit.iter().enumerate() {
            let bad = || RuleStoreError::InconsistentAudit { index };
            match event.kind {
                RuleEventKind::Inserted | RuleEventKind::Updated => {
                    let after = event.after.as_ref().ok_or_else(bad)?;
                    let current = rules.get(&after.key());
                    if current != event.before.as_ref() {
                        return Err(bad());
                    }
                    if (event.kind == RuleEventKind::Inserted) != event.before.is_none() {
                        return Err(bad());
                    }
                    rules.insert(after.key(), after.clone());
                }
                RuleEventKind::Deleted => {
                    let before = event.before.as_ref().ok_or_else(bad)?;
                    if event.after.is_some() || rules.remove(&before.key()).as_ref() != Some(before) {
                        return Err(bad());
                    }
                }
            }
        }
        Ok(RuleStore {
            rules,
            audit: audit.to_vec(),
        })
    }

    pub fn to_json(&self) -> String {
        let doc = RuleStoreDocument {
            rules: self.list_rules(None),
            audit: self.audit.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("rule store serializes");
        s.push('\n');
        s
    }

    /// Parses a persisted document. The rule list must agree with what the
    /// audit log replays to.
    pub fn from_json(text: &str) -> Result<RuleStore, RuleStoreError> {
        let doc: RuleStoreDocument = serde_json::from_str(text).map_err(|e| RuleStoreError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut rules = BTreeMap::new();
        for rule in doc.rules {
            rules.insert(rule.key(), rule);
        }
        Ok(RuleStore {
            rules,
            audit: doc.audit,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RuleStoreError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| RuleStoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RuleStore, RuleStoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RuleStoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permission::{PermissionStatus, RuleOrigin};

    fn rule(app: &str, res: ResourceClass, status: PermissionStatus, at: Tick) -> Rule {
        Rule::new(app, res, status, at, RuleOrigin::UserPrompt)
    }

    #[test]
    fn lookup_on_empty_store() {
        assert!(RuleStore::new().lookup("maps", ResourceClass::Location).is_none());
    }

    #[test]
    fn read_after_write_and_last_write_wins() {
        let mut s = RuleStore::new();
        let g = rule("maps", ResourceClass::Location, PermissionStatus::Grant, 1);
        assert_eq!(s.upsert(g.clone()).unwrap(), None);
        assert_eq!(s.audit().len(), 1);
        assert_eq!(s.lookup("maps", ResourceClass::Location), Some(&g));

        let d = rule("maps", ResourceClass::Location, PermissionStatus::Deny, 2);
        assert_eq!(s.upsert(d.clone()).unwrap(), Some(g));
        assert_eq!(s.lookup("maps", ResourceClass::Location), Some(&d));
        assert_eq!(s.audit()[1].kind, RuleEventKind::Updated);
    }

    #[test]
    fn stale_write_leaves_store_unchanged() {
        let mut s = RuleStore::new();
        s.upsert(rule("maps", ResourceClass::Location, PermissionStatus::Grant, 10)).unwrap();
        let before = s.clone();
        let err = s
            .upsert(rule("maps", ResourceClass::Location, PermissionStatus::Deny, 9))
            .unwrap_err();
        assert!(matches!(err, RuleStoreError::StaleWrite { attempted: 9, stored: 10, .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn delete_semantics() {
        let mut s = RuleStore::new();
        assert!(s.delete("maps", ResourceClass::Camera, 0).is_none());
        assert!(s.audit().is_empty());

        let r = rule("maps", ResourceClass::Camera, PermissionStatus::Deny, 3);
        s.upsert(r.clone()).unwrap();
        assert_eq!(s.delete("maps", ResourceClass::Camera, 4), Some(r));
        assert!(s.lookup("maps", ResourceClass::Camera).is_none());
        assert_eq!(s.audit().len(), 2);
        assert_eq!(s.audit()[1].kind, RuleEventKind::Deleted);
        assert!(s.audit()[1].after.is_none());
    }

    #[test]
    fn listing_is_sorted_and_filtered() {
        let mut s = RuleStore::new();
        assert!(s.list_rules(None).is_empty());
        s.upsert(rule("b", ResourceClass::Camera, PermissionStatus::Grant, 0)).unwrap();
        s.upsert(rule("a", ResourceClass::Storage, PermissionStatus::Grant, 0)).unwrap();
        s.upsert(rule("a", ResourceClass::Camera, PermissionStatus::Deny, 0)).unwrap();

        let a = s.list_rules(Some("a"));
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].resource, ResourceClass::Camera);
        assert_eq!(a[1].resource, ResourceClass::Storage);

        let all: Vec<_> = s
            .list_rules(None)
            .into_iter()
            .map(|r| (r.app_id, r.resource))
            .collect();
        assert_eq!(
            all,
            vec![
                ("a".to_string(), ResourceClass::Camera),
                ("a".to_string(), ResourceClass::Storage),
                ("b".to_string(), ResourceClass::Camera),
            ]
        );
        assert!(s.list_rules(Some("c")).is_empty());
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.json");
        RuleStore::new().save(&path).unwrap();
        assert_eq!(RuleStore::load(&path).unwrap(), RuleStore::new());
    }

    #[test]
    fn truncated_file_reports_position() {
        let mut s = RuleStore::new();
        s.upsert(rule("maps", ResourceClass::Location, PermissionStatus::Grant, 1)).unwrap();
        let text = s.to_json();
        let cut = &text[..text.len() / 2];
        match RuleStore::from_json(cut).unwrap_err() {
            RuleStoreError::Parse { line, column, .. } => {
                assert!(line > 1);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replay_rejects_tampered_log() {
        let mut s = RuleStore::new();
        s.upsert(rule("a", ResourceClass::Camera, PermissionStatus::Grant, 0)).unwrap();
        s.upsert(rule("a", ResourceClass::Camera, PermissionStatus::Deny, 1)).unwrap();
        let mut log = s.audit().to_vec();
        log.remove(0);
        assert!(matches!(
            RuleStore::replay(&log),
            Err(RuleStoreError::InconsistentAudit { index: 0 })
        ));
    }
}
