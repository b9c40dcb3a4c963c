//! A small deterministic stand-in for a multi-app mobile environment.
//!
//! Every universe exposes the same calendar, contacts and email tools over
//! its own data. Universes never share event ids, message ids or contact
//! addresses, so heuristics learned in one cannot leak facts into another.
//! Time is virtual: each universe fixes its own `now`.

mod scenario;
mod tools;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::EnvError;

pub use scenario::{load_scenarios, parse_scenarios, verify, Check, Scenario, Split};
pub use tools::{invoke, is_valid_email, tool_schemas, TOOL_NAMES};

/// Datetimes are written `YYYY-MM-DD HH:MM:SS`.
pub const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

pub(crate) mod datetime {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&dt.format(super::DATETIME_FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_datetime(&s).ok_or_else(|| {
            serde::de::Error::custom(format!("invalid datetime {s:?}, expected YYYY-MM-DD HH:MM:SS"))
        })
    }

    pub mod option {
        use chrono::NaiveDateTime;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(dt: &Option<NaiveDateTime>, s: S) -> Result<S::Ok, S::Error> {
            match dt {
                Some(dt) => super::serialize(dt, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDateTime>, D::Error> {
            let s = Option::<String>::deserialize(d)?;
            s.map(|s| {
                super::super::parse_datetime(&s)
                    .ok_or_else(|| serde::de::Error::custom(format!("invalid datetime {s:?}")))
            })
            .transpose()
        }
    }
}

/// Accepts `YYYY-MM-DD HH:MM:SS`, the same with a `T` separator, or without seconds.
pub fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact {
    pub name: String,
    pub email: String,
    pub age: u32,
    pub city: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarEvent {
    pub event_id: String,
    pub title: String,
    #[serde(with = "datetime")]
    pub start: NaiveDateTime,
    #[serde(with = "datetime")]
    pub end: NaiveDateTime,
    #[serde(default)]
    pub attendees: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Email {
    pub message_id: String,
    pub to: Vec<String>,
    pub subject: String,
    pub body: String,
    #[serde(with = "datetime")]
    pub sent_at: NaiveDateTime,
}

/// Immutable base data for one universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Universe {
    pub universe_id: String,
    #[serde(with = "datetime")]
    pub now: NaiveDateTime,
    #[serde(default)]
    pub contacts: Vec<Contact>,
    #[serde(default)]
    pub calendar_events: Vec<CalendarEvent>,
    #[serde(default)]
    pub emails: Vec<Email>,
}

impl Universe {
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = fs::read_to_string(path).map_err(|source| EnvError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, path)
    }

    pub fn from_json_str(text: &str, path: &Path) -> Result<Self, EnvError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let universe: Universe =
            serde_path_to_error::deserialize(de).map_err(|e| EnvError::Schema {
                path: path.to_path_buf(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        universe.validate(path)?;
        Ok(universe)
    }

    fn validate(&self, path: &Path) -> Result<(), EnvError> {
        let schema = |field: String, message: String| EnvError::Schema {
            path: path.to_path_buf(),
            field,
            message,
        };
        if self.universe_id.trim().is_empty() {
            return Err(schema("universe_id".into(), "empty".into()));
        }
        let mut seen = HashSet::new();
        for (i, e) in self.calendar_events.iter().enumerate() {
            if !seen.insert(e.event_id.as_str()) {
                return Err(schema(
                    format!("calendar_events[{i}].event_id"),
                    format!("duplicate event_id {}", e.event_id),
                ));
            }
            if e.end <= e.start {
                return Err(schema(
                    format!("calendar_events[{i}].end"),
                    "end must be after start".into(),
                ));
            }
        }
        let mut seen = HashSet::new();
        for (i, m) in self.emails.iter().enumerate() {
            if !seen.insert(m.message_id.as_str()) {
                return Err(schema(
                    format!("emails[{i}].message_id"),
                    format!("duplicate message_id {}", m.message_id),
                ));
            }
        }
        let mut seen = HashSet::new();
        for (i, c) in self.contacts.iter().enumerate() {
            if !is_valid_email(&c.email) {
                return Err(schema(
                    format!("contacts[{i}].email"),
                    format!("invalid address {}", c.email),
                ));
            }
            if !seen.insert(c.email.to_lowercase()) {
                return Err(schema(
                    format!("contacts[{i}].email"),
                    format!("duplicate address {}", c.email),
                ));
            }
        }
        Ok(())
    }

    /// A fresh mutable copy for one episode.
    pub fn working_copy(&self) -> WorldState {
        WorldState {
            universe_id: self.universe_id.clone(),
            now: self.now,
            contacts: self.contacts.clone(),
            calendar_events: self.calendar_events.clone(),
            emails: self.emails.clone(),
            next_event_seq: 1,
            next_message_seq: 1,
        }
    }
}

/// The mutable state of one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub universe_id: String,
    #[serde(with = "datetime")]
    pub now: NaiveDateTime,
    pub contacts: Vec<Contact>,
    pub calendar_events: Vec<CalendarEvent>,
    pub emails: Vec<Email>,
    next_event_seq: u64,
    next_message_seq: u64,
}

impl WorldState {
    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn event(&self, event_id: &str) -> Option<&CalendarEvent> {
        self.calendar_events.iter().find(|e| e.event_id == event_id)
    }

    fn fresh_event_id(&mut self) -> String {
        loop {
            let id = format!("{}-evt-n{}", self.universe_id, self.next_event_seq);
            self.next_event_seq += 1;
            if self.event(&id).is_none() {
                return id;
            }
        }
    }

    fn fresh_message_id(&mut self) -> String {
        loop {
            let id = format!("{}-msg-n{}", self.universe_id, self.next_message_seq);
            self.next_message_seq += 1;
            if !self.emails.iter().any(|m| m.message_id == id) {
                return id;
            }
        }
    }
}

/// A set of universes loaded from a directory.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    universes: BTreeMap<String, Arc<Universe>>,
}

impl Environment {
    pub fn new(universes: impl IntoIterator<Item = Universe>) -> Result<Self, EnvError> {
        let mut map = BTreeMap::new();
        for u in universes {
            map.insert(u.universe_id.clone(), Arc::new(u));
        }
        let env = Self { universes: map };
        env.check_disjoint()?;
        Ok(env)
    }

    /// Loads every `*.json` file in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self, EnvError> {
        let io_err = |source| EnvError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io_err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io_err)?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let universes = paths
            .iter()
            .map(|p| Universe::load(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(universes)
    }

    pub fn universe(&self, id: &str) -> Result<&Arc<Universe>, EnvError> {
        self.universes
            .get(id)
            .ok_or_else(|| EnvError::UnknownUniverse(id.to_string()))
    }

    pub fn universes(&self) -> impl Iterator<Item = &Arc<Universe>> {
        self.universes.values()
    }

    pub fn len(&self) -> usize {
        self.universes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universes.is_empty()
    }

    /// Fails if any two universes share an event id, message id or contact address.
    pub fn check_disjoint(&self) -> Result<(), EnvError> {
        let mut owners: HashMap<(&'static str, String), &str> = HashMap::new();
        for u in self.universes.values() {
            let keys = u
                .calendar_events
                .iter()
                .map(|e| ("event_id", e.event_id.clone()))
                .chain(u.emails.iter().map(|m| ("message_id", m.message_id.clone())))
                .chain(u.contacts.iter().map(|c| ("contact email", c.email.to_lowercase())));
            for key in keys {
                if let Some(first) = owners.get(&key) {
                    if *first != u.universe_id {
                        return Err(EnvError::NotDisjoint {
                            first: first.to_string(),
                            second: u.universe_id.clone(),
                            what: key.0,
                            value: key.1,
                        });
                    }
                }
                owners.insert(key, &u.universe_id);
            }
        }
        Ok(())
    }
}
