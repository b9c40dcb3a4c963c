//! Tool surface of the simulated environment.
//!
//! Observations are compact JSON. A failed call returns a [`ToolError`] and
//! leaves the state untouched.

use chrono::NaiveDateTime;
use serde_json::{json, Map, Value};

use crate::error::ToolError;
use crate::gateway::ToolSchema;

use super::{parse_datetime, CalendarEvent, Email, WorldState, DATETIME_FORMAT};

pub const TOOL_NAMES: [&str; 11] = [
    "Calendar__get_calendar_events_from_to",
    "Calendar__search_events",
    "Calendar__add_calendar_event",
    "Calendar__delete_calendar_event",
    "Contacts__get_contact",
    "Contacts__search_contacts",
    "Contacts__list_contacts",
    "Emails__send_email",
    "Emails__list_emails",
    "Emails__search_emails",
    "System__get_current_time",
];

/// An address is valid when it has a non-empty local part, a single `@` and a
/// dotted domain, with no whitespace.
pub fn is_valid_email(address: &str) -> bool {
    let Some((local, domain)) = address.split_once('@') else {
        return false;
    };
    !local.is_empty()
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !address.chars().any(char::is_whitespace)
}

struct Args<'a> {
    tool: &'a str,
    map: &'a Map<String, Value>,
}

impl<'a> Args<'a> {
    fn err(&self, message: impl Into<String>) -> ToolError {
        ToolError::Argument {
            tool: self.tool.to_string(),
            message: message.into(),
        }
    }

    fn string(&self, key: &str) -> Result<&'a str, ToolError> {
        match self.map.get(key) {
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(self.err(format!("{key} must be a string"))),
            None => Err(self.err(format!("missing {key}"))),
        }
    }

    fn datetime(&self, key: &str) -> Result<NaiveDateTime, ToolError> {
        let s = self.string(key)?;
        parse_datetime(s).ok_or_else(|| self.err(format!("{key} must be YYYY-MM-DD HH:MM:SS, got {s:?}")))
    }

    fn string_list(&self, key: &str, required: bool) -> Result<Vec<String>, ToolError> {
        match self.map.get(key) {
            None | Some(Value::Null) if !required => Ok(Vec::new()),
            None => Err(self.err(format!("missing {key}"))),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| self.err(format!("{key} must be a list of strings")))
                })
                .collect(),
            Some(Value::String(s)) => Ok(vec![s.clone()]),
            Some(_) => Err(self.err(format!("{key} must be a list of strings"))),
        }
    }
}

fn event_json(e: &CalendarEvent) -> Value {
    json!({
        "event_id": e.event_id,
        "title": e.title,
        "start": e.start.format(DATETIME_FORMAT).to_string(),
        "end": e.end.format(DATETIME_FORMAT).to_string(),
        "attendees": e.attendees,
    })
}

fn email_json(m: &Email) -> Value {
    json!({
        "message_id": m.message_id,
        "to": m.to,
        "subject": m.subject,
        "body": m.body,
        "sent_at": m.sent_at.format(DATETIME_FORMAT).to_string(),
    })
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Runs one tool call against `state`.
pub fn invoke(
    state: &mut WorldState,
    tool: &str,
    arguments: &Map<String, Value>,
) -> Result<String, ToolError> {
    let args = Args {
        tool,
        map: arguments,
    };
    let value = match tool {
        "Calendar__get_calendar_events_from_to" => {
            let from = args.datetime("start_datetime")?;
            let to = args.datetime("end_datetime")?;
            if to <= from {
                return Err(args.err("end_datetime must be after start_datetime"));
            }
            let events: Vec<Value> = state
                .calendar_events
                .iter()
                .filter(|e| e.start < to && e.end > from)
                .map(event_json)
                .collect();
            Value::Array(events)
        }
        "Calendar__search_events" => {
            let q = args.string("query")?;
            Value::Array(
                state
                    .calendar_events
                    .iter()
                    .filter(|e| contains_ci(&e.title, q))
                    .map(event_json)
                    .collect(),
            )
        }
        "Calendar__add_calendar_event" => {
            let title = args.string("title")?;
            let start = args.datetime("start_datetime")?;
            let end = args.datetime("end_datetime")?;
            let attendees = args.string_list("attendees", false)?;
            if title.trim().is_empty() {
                return Err(args.err("title must not be empty"));
            }
            if end <= start {
                return Err(args.err("end_datetime must be after start_datetime"));
            }
            let event_id = state.fresh_event_id();
            state.calendar_events.push(CalendarEvent {
                event_id: event_id.clone(),
                title: title.to_string(),
                start,
                end,
                attendees,
            });
            json!({ "event_id": event_id })
        }
        "Calendar__delete_calendar_event" => {
            let id = args.string("event_id")?;
            let pos = state
                .calendar_events
                .iter()
                .position(|e| e.event_id == id)
                .ok_or_else(|| ToolError::Domain(format!("Event not found: {id}")))?;
            state.calendar_events.remove(pos);
            json!({ "deleted": id })
        }
        "Contacts__get_contact" => {
            let name = args.string("name")?;
            let c = state
                .contacts
                .iter()
                .find(|c| c.name.eq_ignore_ascii_case(name.trim()))
                .ok_or_else(|| ToolError::Domain(format!("Contact not found: {name}")))?;
            serde_json::to_value(c).expect("contact serializes")
        }
        "Contacts__search_contacts" => {
            let q = args.string("query")?;
            Value::Array(
                state
                    .contacts
                    .iter()
                    .filter(|c| contains_ci(&c.name, q) || contains_ci(&c.email, q) || contains_ci(&c.city, q))
                    .map(|c| serde_json::to_value(c).expect("contact serializes"))
                    .collect(),
            )
        }
        "Contacts__list_contacts" => {
            serde_json::to_value(&state.contacts).expect("contacts serialize")
        }
        "Emails__send_email" => {
            let recipients = args.string_list("recipients", true)?;
            let subject = args.string("subject")?;
            let body = args.string("body")?;
            if recipients.is_empty() {
                return Err(args.err("recipients must not be empty"));
            }
            let invalid: Vec<&str> = recipients
                .iter()
                .map(String::as_str)
                .filter(|r| !is_valid_email(r))
                .collect();
            if !invalid.is_empty() {
                return Err(ToolError::Domain(format!(
                    "Invalid email address: {}",
                    invalid.join(", ")
                )));
            }
            let message_id = state.fresh_message_id();
            state.emails.push(Email {
                message_id: message_id.clone(),
                to: recipients,
                subject: subject.to_string(),
                body: body.to_string(),
                sent_at: state.now,
            });
            json!({ "message_id": message_id, "status": "sent" })
        }
        "Emails__list_emails" => Value::Array(state.emails.iter().map(email_json).collect()),
        "Emails__search_emails" => {
            let q = args.string("query")?;
            Value::Array(
                state
                    .emails
                    .iter()
                    .filter(|m| contains_ci(&m.subject, q) || contains_ci(&m.body, q))
                    .map(email_json)
                    .collect(),
            )
        }
        "System__get_current_time" => {
            json!({ "now": state.now.format(DATETIME_FORMAT).to_string() })
        }
        other => return Err(ToolError::UnknownTool(other.to_string())),
    };
    Ok(value.to_string())
}

/// Schemas for every tool, in [`TOOL_NAMES`] order.
pub fn tool_schemas() -> Vec<ToolSchema> {
    let dt = json!({"type": "string", "description": "YYYY-MM-DD HH:MM:SS"});
    let obj = |props: Value, required: &[&str]| {
        json!({"type": "object", "properties": props, "required": required})
    };
    let spec: [(&str, &str, Value); 11] = [
        (
            TOOL_NAMES[0],
            "List calendar events overlapping a time window.",
            obj(json!({"start_datetime": dt, "end_datetime": dt}), &["start_datetime", "end_datetime"]),
        ),
        (
            TOOL_NAMES[1],
            "Find calendar events whose title contains the query (case-insensitive).",
            obj(json!({"query": {"type": "string"}}), &["query"]),
        ),
        (
            TOOL_NAMES[2],
            "Create a calendar event. Attendees are contact names. Returns the new event_id.",
            obj(
                json!({"title": {"type": "string"}, "start_datetime": dt, "end_datetime": dt,
                       "attendees": {"type": "array", "items": {"type": "string"}}}),
                &["title", "start_datetime", "end_datetime"],
            ),
        ),
        (
            TOOL_NAMES[3],
            "Delete a calendar event by id.",
            obj(json!({"event_id": {"type": "string"}}), &["event_id"]),
        ),
        (
            TOOL_NAMES[4],
            "Get a contact by exact name.",
            obj(json!({"name": {"type": "string"}}), &["name"]),
        ),
        (
            TOOL_NAMES[5],
            "Search contacts by name, email or city (case-insensitive substring).",
            obj(json!({"query": {"type": "string"}}), &["query"]),
        ),
        (TOOL_NAMES[6], "List all contacts.", obj(json!({}), &[])),
        (
            TOOL_NAMES[7],
            "Send an email. Recipients must be email addresses.",
            obj(
                json!({"recipients": {"type": "array", "items": {"type": "string"}},
                       "subject": {"type": "string"}, "body": {"type": "string"}}),
                &["recipients", "subject", "body"],
            ),
        ),
        (TOOL_NAMES[8], "List all emails.", obj(json!({}), &[])),
        (
            TOOL_NAMES[9],
            "Find emails whose subject or body contains the query.",
            obj(json!({"query": {"type": "string"}}), &["query"]),
        ),
        (TOOL_NAMES[10], "Current date and time.", obj(json!({}), &[])),
    ];
    spec.into_iter()
        .map(|(name, description, parameters)| ToolSchema {
            name: name.to_string(),
            description: description.to_string(),
            parameters,
        })
        .collect()
}
