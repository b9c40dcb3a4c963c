#!/usr/bin/env python3
"""Writes the fixture corpus under crates/core/fixtures/.

Universes, scenarios, scripted backend sessions and golden prompts are all
produced here so that they stay consistent with each other. Run from the
repository root:

    python3 scripts/make_fixtures.py [--check-prompts SOURCE.tex]

With --check-prompts, the generation and retrieval templates are compared word
for word against the prompt boxes of the given LaTeX source before anything is
written.
"""

import argparse
import json
import re
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
CORE = ROOT / "crates" / "core"
OUT = CORE / "fixtures"
TEMPLATES = CORE / "templates"

NOW = "2024-10-15 09:00:00"


# ---------------------------------------------------------------- universes

def contact(name, email, age, city):
    return {"name": name, "email": email, "age": age, "city": city}


def event(uid, n, title, start, end, attendees=()):
    return {
        "event_id": f"{uid}-evt-{n}",
        "title": title,
        "start": start,
        "end": end,
        "attendees": list(attendees),
    }


def email(uid, n, to, subject, body, sent_at):
    return {
        "message_id": f"{uid}-msg-{n}",
        "to": list(to),
        "subject": subject,
        "body": body,
        "sent_at": sent_at,
    }


def universe(uid, contacts, events, emails=()):
    return {
        "universe_id": uid,
        "now": NOW,
        "contacts": contacts,
        "calendar_events": events,
        "emails": list(emails),
    }


U = {}
U["u01"] = universe("u01", [
    contact("Sergei Kuznetsov", "sergei.kuznetsov@u01.example.com", 52, "Riga"),
    contact("Viktor Kuznetsov", "viktor.kuznetsov@u01.example.com", 48, "Riga"),
    contact("Amelia Hart", "amelia.hart@u01.example.com", 33, "Leeds"),
], [
    event("u01", 1, "Dinner with colleagues", "2024-10-18 18:00:00", "2024-10-18 20:00:00",
          ["Sergei Kuznetsov", "Viktor Kuznetsov"]),
    event("u01", 2, "Dentist", "2024-10-22 08:00:00", "2024-10-22 08:45:00"),
], [
    email("u01", 1, ["amelia.hart@u01.example.com"], "Book club", "See you Thursday.", "2024-10-10 12:00:00"),
])
U["u02"] = universe("u02", [
    contact("Priya Raman", "priya.raman@u02.example.com", 39, "Pune"),
    contact("Jonas Weber", "jonas.weber@u02.example.com", 45, "Bremen"),
], [
    event("u02", 1, "Standup", "2024-10-16 09:30:00", "2024-10-16 09:45:00"),
    event("u02", 2, "Quarterly planning", "2024-10-22 15:00:00", "2024-10-22 16:00:00",
          ["Priya Raman", "Jonas Weber"]),
])
U["u03"] = universe("u03", [
    contact("Lena Fischer", "lena.fischer@u03.example.com", 41, "Graz"),
    contact("Marco Bellini", "marco.bellini@u03.example.com", 27, "Turin"),
], [
    event("u03", 1, "Yoga", "2024-10-17 07:00:00", "2024-10-17 08:00:00"),
])
U["u04"] = universe("u04", [
    contact("Chloe Martin", "chloe.martin@u04.example.com", 36, "Lyon"),
], [
    event("u04", 1, "Team lunch", "2024-10-21 12:00:00", "2024-10-21 13:00:00", ["Chloe Martin"]),
])
U["u05"] = universe("u05", [
    contact("Diego Alvarez", "diego.alvarez@u05.example.com", 30, "Seville"),
], [
    event("u05", 1, "Code review", "2024-10-15 11:00:00", "2024-10-15 12:00:00", ["Diego Alvarez"]),
])
U["u06"] = universe("u06", [
    contact("Fatima Zahra", "fatima.zahra@u06.example.com", 44, "Rabat"),
], [
    event("u06", 1, "Gym session", "2024-10-17 18:00:00", "2024-10-17 19:00:00"),
    event("u06", 2, "Gym session", "2024-10-24 18:00:00", "2024-10-24 19:00:00"),
])
U["u07"] = universe("u07", [
    contact("Rita Sousa", "rita.sousa@u07.example.com", 58, "Porto"),
    contact("Nuno Pires", "nuno.pires@u07.example.com", 31, "Porto"),
    contact("Ines Lopes", "ines.lopes@u07.example.com", 26, "Porto"),
    contact("Carla Dias", "carla.dias@u07.example.com", 49, "Lisbon"),
], [
    event("u07", 1, "Sailing", "2024-10-19 10:00:00", "2024-10-19 14:00:00"),
])
U["u08"] = universe("u08", [
    contact("Hana Sato", "hana.sato@u08.example.com", 35, "Osaka"),
    contact("Ken Ito", "ken.ito@u08.example.com", 40, "Kobe"),
], [
    event("u08", 1, "Call with Hana", "2024-10-17 16:00:00", "2024-10-17 16:30:00", ["Hana Sato"]),
])
U["u09"] = universe("u09", [
    contact("Ingrid Larsen", "ingrid.larsen@u09.example.com", 38, "Bergen"),
    contact("Omar Haddad", "omar.haddad@u09.example.com", 47, "Marseille"),
    contact("Paul Okafor", "paul.okafor@u09.example.com", 29, "Lagos"),
], [
    event("u09", 1, "Team offsite planning", "2024-10-23 10:00:00", "2024-10-23 11:30:00",
          ["Ingrid Larsen", "Omar Haddad"]),
    event("u09", 2, "Quarterly review", "2024-11-05 14:00:00", "2024-11-05 15:00:00", ["Ingrid Larsen"]),
])
U["u10"] = universe("u10", [
    contact("Rui Costa", "rui.costa@u10.example.com", 55, "Coimbra"),
    contact("Keiko Tanaka", "keiko.tanaka@u10.example.com", 42, "Sapporo"),
], [
    event("u10", 1, "Wine tasting", "2024-11-05 18:00:00", "2024-11-05 20:00:00", ["Rui Costa"]),
    event("u10", 2, "Budget prep", "2024-10-16 10:00:00", "2024-10-16 11:00:00"),
])


# ---------------------------------------------------------------- scenarios

def check(kind, **params):
    return {"kind": kind, "parameters": params}


def scenario(sid, uid, split, task, checks):
    return {"scenario_id": sid, "universe_id": uid, "split": split, "task": task, "checks": checks}


SOURCE = [
    scenario("S01", "u01", "execution",
             "Email the attendees of my 'Dinner with colleagues' event to tell them it now starts at 19:00.",
             [check("email_sent", recipients=["sergei.kuznetsov@u01.example.com",
                                              "viktor.kuznetsov@u01.example.com"])]),
    scenario("S02", "u02", "execution",
             "Reschedule my 'Quarterly planning' meeting to 2024-10-24 from 15:00 to 16:00.",
             [check("event_exists", title="Quarterly planning", start="2024-10-24 15:00:00",
                    end="2024-10-24 16:00:00", attendees=["Priya Raman", "Jonas Weber"]),
              check("event_absent", event_id="u02-evt-2")]),
    scenario("S03", "u03", "search", "How old is my contact Lena Fischer?",
             [check("answer_contains", substring="41")]),
    scenario("S04", "u04", "execution", "Add a 'Dentist appointment' on 21 October 2024 from 8:30 to 9:15 am.",
             [check("event_exists", title="Dentist appointment", start="2024-10-21 08:30:00",
                    end="2024-10-21 09:15:00")]),
    scenario("S05", "u05", "execution", "Block 'Focus time' in my calendar tomorrow from 13:00 to 15:00.",
             [check("event_exists", title="Focus time", start="2024-10-16 13:00:00", end="2024-10-16 15:00:00")]),
    scenario("S06", "u06", "execution", "Cancel my 'Gym session' on 2024-10-17.",
             [check("event_absent", event_id="u06-evt-1"),
              check("event_exists", title="Gym session", start="2024-10-24 18:00:00")]),
    scenario("S07", "u07", "search", "How many of my contacts live in Porto?",
             [check("answer_contains", substring="3")]),
    scenario("S08", "u08", "execution", "Email Hana Sato to confirm Thursday's call.",
             [check("email_sent", recipients=["hana.sato@u08.example.com"])]),
]

TEST = [
    scenario("T1", "u09", "execution",
             "Email the attendees of 'Team offsite planning' to share the draft agenda.",
             [check("email_sent", recipients=["ingrid.larsen@u09.example.com", "omar.haddad@u09.example.com"])]),
    scenario("T2", "u09", "execution",
             "Reschedule 'Quarterly review' to 2024-11-12 from 14:00 to 15:00.",
             [check("event_exists", title="Quarterly review", start="2024-11-12 14:00:00",
                    end="2024-11-12 15:00:00", attendees=["Ingrid Larsen"]),
              check("event_absent", event_id="u09-evt-2")]),
    scenario("T3", "u09", "search", "Which city does Omar Haddad live in?",
             [check("answer_contains", substring="Marseille")]),
    scenario("T4", "u10", "execution",
             "Replace my 'Wine tasting' on 2024-11-05 with an event called 'Wine Awakening' at the same time, "
             "with no attendees.",
             [check("event_exists", title="Wine Awakening", start="2024-11-05 18:00:00",
                    end="2024-11-05 20:00:00", attendees=[]),
              check("event_absent", event_id="u10-evt-1")]),
    scenario("T5", "u10", "execution", "Schedule 'Budget sync' this coming Friday from 10:00 to 10:30.",
             [check("event_exists", title="Budget sync", start="2024-10-18 10:00:00", end="2024-10-18 10:30:00")]),
    scenario("T6", "u10", "execution", "Email Keiko Tanaka to confirm our lunch.",
             [check("email_sent", recipients=["keiko.tanaka@u10.example.com"])]),
]


# ---------------------------------------------------------------- scripts

def tool(thought, tool_name, **arguments):
    return {"response_text": thought, "tool_call": {"name": tool_name, "arguments": arguments}}


def final(text, thought=""):
    body = f"{thought}\nFINAL ANSWER: {text}" if thought else f"FINAL ANSWER: {text}"
    return {"response_text": body}


def guarded(guard, entries):
    # the guard on the first turn is enough to prove the guidance was present
    first = dict(entries[0])
    first["guard_substring"] = guard
    return [first] + entries[1:]


def session(entries, cycle=True):
    return {"cycle": cycle, "entries": entries}


def reflection(analysis, guideline, trigger, action):
    return (f"1. **Analysis:** {analysis}\n"
            f"2. **Learned Guideline:** {guideline}\n"
            f"   - *Trigger:* [{trigger}]\n"
            f"   - *Action:* [{action}]")


RECIPIENTS_GUIDELINE = "Resolve and validate recipient addresses before sending."
RESCHEDULE_GUIDELINE = "Safe reschedule: create the replacement first, then delete the original."
DATETIME_ACTION = ("I must call System__get_current_time to anchor relative dates and write every datetime "
                   "as YYYY-MM-DD HH:MM:SS.")

ROLLOUTS = {
    "S01": [
        tool("I need the attendees of the dinner event.", "Calendar__search_events", query="Dinner with colleagues"),
        tool("The attendees are Sergei and Viktor Kuznetsov. I will email them.", "Emails__send_email",
             recipients=["Sergei Kuznetsov", "Viktor Kuznetsov"], subject="Dinner moved to 19:00",
             body="Hi both, the dinner now starts at 19:00."),
        final("I tried to email the attendees but the addresses were rejected.",
              "The email tool rejected the names."),
    ],
    "S02": [
        tool("Find the meeting first.", "Calendar__search_events", query="Quarterly planning"),
        tool("Create it at the new time with the same attendees.", "Calendar__add_calendar_event",
             title="Quarterly planning", start_datetime="2024-10-24 15:00:00", end_datetime="2024-10-24 16:00:00",
             attendees=["Priya Raman", "Jonas Weber"]),
        final("The meeting is now on 2024-10-24 from 15:00 to 16:00."),
    ],
    "S03": [
        tool("Look up the contact.", "Contacts__get_contact", name="Lena Fischer"),
        final("Lena Fischer is 41 years old."),
    ],
    "S04": [
        tool("Add the appointment.", "Calendar__add_calendar_event", title="Dentist appointment",
             start_datetime="10/21/2024 8:30 AM", end_datetime="10/21/2024 9:15 AM"),
        tool("The tool wants YYYY-MM-DD HH:MM:SS. Retrying.", "Calendar__add_calendar_event",
             title="Dentist appointment", start_datetime="2024-10-21 08:30:00", end_datetime="2024-10-21 09:15:00"),
        final("Added 'Dentist appointment' on 2024-10-21 from 08:30 to 09:15."),
    ],
    "S05": [
        tool("Tomorrow is 2024-10-15, so I will book it then.", "Calendar__add_calendar_event", title="Focus time",
             start_datetime="2024-10-15 13:00:00", end_datetime="2024-10-15 15:00:00"),
        final("Focus time is blocked for tomorrow from 13:00 to 15:00."),
    ],
    "S06": [
        tool("Find the gym sessions.", "Calendar__search_events", query="Gym session"),
        tool("u06-evt-1 is the one on 2024-10-17.", "Calendar__delete_calendar_event", event_id="u06-evt-1"),
        final("Cancelled the gym session on 2024-10-17."),
    ],
    "S07": [
        tool("Search contacts by city.", "Contacts__search_contacts", query="Porto"),
        final("3 of your contacts live in Porto."),
    ],
    "S08": [
        tool("Get Hana's address.", "Contacts__get_contact", name="Hana Sato"),
        tool("Send the confirmation.", "Emails__send_email", recipients=["hana.sato@u08.example.com"],
             subject="Thursday call", body="Confirming our call on Thursday at 16:00."),
        final("Sent Hana Sato a confirmation for Thursday's call."),
    ],
}

# S05 when the datetime lesson from S04 is in the prompt
ROLLOUT_S05_GUIDED = guarded("System__get_current_time to anchor relative dates", [
    tool("Per the guideline, check today's date first.", "System__get_current_time"),
    tool("Today is 2024-10-15, so tomorrow is 2024-10-16.", "Calendar__add_calendar_event", title="Focus time",
         start_datetime="2024-10-16 13:00:00", end_datetime="2024-10-16 15:00:00"),
    final("Focus time is blocked on 2024-10-16 from 13:00 to 15:00."),
])

REFLECTIONS = {
    "S01": reflection(
        "The email failed because I passed attendee names from the calendar event straight to Emails__send_email, "
        "which only accepts email addresses, and I gave up after the \"Invalid email address\" error.",
        RECIPIENTS_GUIDELINE,
        "When an email must go to people known by name, such as calendar attendees...",
        "I must look up each name with Contacts__get_contact, send to the returned email field, and fix the "
        "recipients after any \"Invalid email address\" error."),
    "S02": reflection(
        "I added the meeting at the new time but never deleted the original event, so the calendar kept a "
        "stale copy.",
        RESCHEDULE_GUIDELINE,
        "When asked to reschedule, move or replace an existing event...",
        "I must add the replacement with the requested title, times and attendees, confirm it was created, and "
        "then call Calendar__delete_calendar_event on the original event_id."),
    "S03": reflection(
        "The \"Winning Move\" was querying the contact by exact name, which returned the age directly.",
        "Answer attribute questions from the contact record.",
        "When a question asks for one attribute of a named contact...",
        "I must call Contacts__get_contact with the full name and answer from the returned fields."),
    "S04": reflection(
        "The first add failed on a US-style datetime; retrying in the tool's format succeeded.",
        "Normalize datetimes before calling calendar tools.",
        "When a task states a date or time in any form other than YYYY-MM-DD HH:MM:SS, or relative to today...",
        DATETIME_ACTION),
    "S05": reflection(
        "I assumed today's date instead of checking it and booked the block one day early.",
        "Never guess the current date.",
        "When a task uses relative dates such as today, tomorrow or next week...",
        "I must call System__get_current_time first and compute the target date from its result."),
    "S06": reflection(
        "Searching by title showed two sessions; deleting by the id of the one on the requested date was exact.",
        "Delete by verified event_id.",
        "When asked to cancel an event that may recur...",
        "I must search by title, pick the event whose date matches, and delete that event_id only."),
    "S07": reflection(
        "Searching contacts by city returned exactly the matching records, so counting them was reliable.",
        "Use filtered search for counting questions.",
        "When a question asks how many records match a property...",
        "I must use the narrowest search tool and count the returned items."),
    "S08": reflection(
        "I fetched the contact's address before sending, so the email went through on the first try.",
        "Fetch addresses before emailing.",
        "When emailing a named person...",
        "I must call Contacts__get_contact and use the email field as the recipient."),
}

REFLECTION_S05_GUIDED = reflection(
    "Checking the current time first gave the right date for 'tomorrow'.",
    "Anchor relative dates on the system clock.",
    "When a task uses relative dates...",
    "I must call System__get_current_time and derive the date from it before writing the event.")


def ranking(pairs):
    return json.dumps({sid: [why, score] for sid, why, score in pairs}, indent=2)


def baseline_rollouts():
    return {
        "T1": [
            tool("Find the offsite event.", "Calendar__search_events", query="Team offsite planning"),
            tool("Email the two attendees.", "Emails__send_email", recipients=["Ingrid Larsen", "Omar Haddad"],
                 subject="Draft agenda", body="Here is the draft agenda for the offsite."),
            final("I shared the draft agenda with the attendees."),
        ],
        "T2": [
            tool("Find the review.", "Calendar__search_events", query="Quarterly review"),
            tool("Create it at the new time.", "Calendar__add_calendar_event", title="Quarterly review",
                 start_datetime="2024-11-12 14:00:00", end_datetime="2024-11-12 15:00:00",
                 attendees=["Ingrid Larsen"]),
            final("Quarterly review is now on 2024-11-12 from 14:00 to 15:00."),
        ],
        "T3": [
            tool("Look up Omar.", "Contacts__get_contact", name="Omar Haddad"),
            final("Omar Haddad lives in Marseille."),
        ],
        "T4": [
            tool("Find the wine tasting.", "Calendar__search_events", query="Wine tasting"),
            tool("Remove the old event.", "Calendar__delete_calendar_event", event_id="u10-evt-1"),
            tool("Add the new one in the same slot.", "Calendar__add_calendar_event", title="Wine Awakening",
                 start_datetime="2024-11-05 18:00:00", end_datetime="2024-11-05 20:00:00", attendees=["Rui Costa"]),
            final("Replaced the wine tasting with Wine Awakening."),
        ],
        "T5": [
            tool("Check the date.", "System__get_current_time"),
            tool("Friday next week is 2024-10-25.", "Calendar__add_calendar_event", title="Budget sync",
                 start_datetime="2024-10-25 10:00:00", end_datetime="2024-10-25 10:30:00"),
            final("Budget sync is scheduled for 2024-10-25 from 10:00 to 10:30."),
        ],
        "T6": [
            tool("Get Keiko's address.", "Contacts__get_contact", name="Keiko Tanaka"),
            tool("Send the confirmation.", "Emails__send_email", recipients=["keiko.tanaka@u10.example.com"],
                 subject="Lunch", body="Confirming our lunch."),
            final("Sent Keiko Tanaka a lunch confirmation."),
        ],
    }


def erl_rollouts():
    base = baseline_rollouts()
    return {
        "T1": guarded("Resolve and validate recipient addresses", [
            tool("Find the offsite event.", "Calendar__search_events", query="Team offsite planning"),
            tool("Per the guideline, resolve each attendee's address.", "Contacts__get_contact", name="Ingrid Larsen"),
            tool("Next attendee.", "Contacts__get_contact", name="Omar Haddad"),
            tool("Send to the resolved addresses.", "Emails__send_email",
                 recipients=["ingrid.larsen@u09.example.com", "omar.haddad@u09.example.com"],
                 subject="Draft agenda", body="Here is the draft agenda for the offsite."),
            final("Shared the draft agenda with Ingrid Larsen and Omar Haddad."),
        ]),
        "T2": guarded("Safe reschedule", [
            tool("Find the review.", "Calendar__search_events", query="Quarterly review"),
            tool("Create the replacement first.", "Calendar__add_calendar_event", title="Quarterly review",
                 start_datetime="2024-11-12 14:00:00", end_datetime="2024-11-12 15:00:00",
                 attendees=["Ingrid Larsen"]),
            tool("Replacement exists; delete the original.", "Calendar__delete_calendar_event", event_id="u09-evt-2"),
            final("Quarterly review moved to 2024-11-12 14:00-15:00 and the old slot removed."),
        ]),
        "T3": base["T3"],
        "T4": guarded("Safe reschedule", [
            tool("Find the wine tasting.", "Calendar__search_events", query="Wine tasting"),
            tool("Per the safe reschedule guideline, create the replacement first, with no attendees.",
                 "Calendar__add_calendar_event", title="Wine Awakening",
                 start_datetime="2024-11-05 18:00:00", end_datetime="2024-11-05 20:00:00", attendees=[]),
            tool("Replacement created; now delete the original.", "Calendar__delete_calendar_event",
                 event_id="u10-evt-1"),
            final("Wine Awakening now occupies 2024-11-05 18:00-20:00 and the wine tasting is removed."),
        ]),
        "T5": base["T5"],
        "T6": base["T6"],
    }


ERL_RANKINGS = {
    "T1": [("S01", "Same failure mode: names passed where email addresses are required.", 96),
           ("S08", "Emailing a named contact.", 71), ("S03", "Contact lookup by name.", 35)],
    "T2": [("S02", "Rescheduling an existing meeting; the lesson covers deleting the original.", 95),
           ("S06", "Deleting a specific event by id.", 60), ("S04", "Datetime formatting.", 44)],
    "T3": [("S03", "Answering from a contact record.", 90), ("S07", "Contact search.", 55)],
    "T4": [("S02", "Replacing an event is a reschedule; create then delete.", 93),
           ("S06", "Deleting by verified id.", 62)],
    "T5": [("S05", "Relative dates.", 88), ("S04", "Datetime normalization.", 80)],
    "T6": [("S08", "Emailing a named contact.", 92), ("S01", "Recipient address resolution.", 85)],
}


def source_sessions(guided_s05):
    sessions = {}
    for s in SOURCE:
        sid = s["scenario_id"]
        rollout = ROLLOUTS[sid]
        text = REFLECTIONS[sid]
        if guided_s05 and sid == "S05":
            rollout, text = ROLLOUT_S05_GUIDED, REFLECTION_S05_GUIDED
        sessions[f"rollout/{sid}"] = session(rollout)
        sessions[f"generation/{sid}"] = session([{"guard_substring": s["task"], "response_text": text}])
    return sessions


def accumulate_script():
    sessions = source_sessions(guided_s05=False)
    # reward-free accumulation: the judge agrees with the verifier
    for s in SOURCE:
        verdict = "FAILURE" if s["scenario_id"] in ("S01", "S02", "S05") else "SUCCESS"
        sessions[f"self_assessment/{s['scenario_id']}"] = session(
            [{"response_text": f"Reviewed the trajectory.\nVERDICT: {verdict}"}])
    return {"sessions": sessions}


def iterative_script():
    order = [s["scenario_id"] for s in SOURCE[:6]]
    sessions = source_sessions(guided_s05=True)
    for sid in order[1:]:
        # the ranker names every source id, its own and later ones included;
        # only those already in the pool may survive parsing
        pairs = [(other, f"candidate {other}", 90 - i) for i, other in enumerate(order)]
        if sid == "S05":
            pairs = [("S04", "Datetime lesson.", 99)] + [p for p in pairs if p[0] != "S04"]
        sessions[f"retrieval/{sid}"] = session([{"response_text": ranking(pairs)}], cycle=False)
    for sid in list(sessions):
        if sid.split("/")[1] not in order:
            del sessions[sid]
    return {"sessions": sessions}


def baseline_script():
    return {"sessions": {f"rollout/{t}": session(e) for t, e in baseline_rollouts().items()}}


def erl_script():
    sessions = {f"rollout/{t}": session(e) for t, e in erl_rollouts().items()}
    for t, pairs in ERL_RANKINGS.items():
        sessions[f"retrieval/{t}"] = session([{"response_text": ranking(pairs)}], cycle=False)
    return {"sessions": sessions}


# ---------------------------------------------------------------- prompts

def latex_words(body):
    """Plain words of a LaTeX prompt box."""
    text = body.replace("\\{", "\x01").replace("\\}", "\x02")
    text = text.replace("``", '"').replace("''", '"').replace("--", "\u2013")
    text = re.sub(r"\\begin\{tcolorbox\}\[[^\]]*\]", " ", text)
    text = re.sub(r"\\(begin|end)\{[a-z*]+\}", " ", text)
    cmd = re.compile(r"\\(?:textbf|textit|texttt|subsection\*)\{([^{}]*)\}")
    while cmd.search(text):
        text = cmd.sub(r" \1 ", text)
    text = text.replace("\\item", " ").replace("\\smallskip", " ").replace("\\quad", " ")
    text = text.replace("\\_", "_").replace("\\\\", " ")
    text = text.replace("\x01", "{").replace("\x02", "}")
    return normalize(text)


def normalize(text):
    text = text.replace("*", " ").replace("#", " ").replace("`", "")
    text = re.sub(r"^\s*(\d+\.|-)\s", " ", text, flags=re.M)
    return re.sub(r"\s+", " ", text).strip().split(" ")


def prompt_box(source, label):
    m = re.search(r"\\begin\{promptfigure\}\{[^}]*\}\{" + re.escape(label) + r"\}(.*?)\\end\{promptfigure\}",
                  source, re.S)
    if not m:
        sys.exit(f"prompt box {label} not found")
    return m.group(1)


def check_prompts(source_path):
    source = Path(source_path).read_text()
    for label, file in [("fig:heuristic_prompt", "heuristic_generation.txt"),
                        ("fig:heuristic_retrieval_prompt", "heuristic_retrieval.txt")]:
        want = [w for w in latex_words(prompt_box(source, label)) if w]
        got = [w for w in normalize((TEMPLATES / file).read_text()) if w]
        if want != got:
            for i, (a, b) in enumerate(zip(want, got)):
                if a != b:
                    sys.exit(f"{file} differs from {label} at word {i}: source {want[i-3:i+4]} "
                             f"template {got[i-3:i+4]}")
            sys.exit(f"{file} differs from {label} in length: {len(want)} vs {len(got)} words")
        print(f"{file}: matches {label} ({len(want)} words)")


GOLDEN_GENERATION = {
    "task_info": "Email the attendees of my 'Dinner with colleagues' event to tell them it now starts at 19:00.",
    "validation_info": "FAILURE",
    "trajectory_text": "Step 1\nThought: The attendees are Sergei and Viktor Kuznetsov.\n"
                       "Action: Emails__send_email({\"recipients\":[\"Sergei Kuznetsov\"]})\n"
                       "Observation: Error: Invalid email address: Sergei Kuznetsov\n\n"
                       "Final answer: I could not send it.",
}

GOLDEN_RETRIEVAL = {
    "k": 20,
    "task": "Email the attendees of 'Team offsite planning' to share the draft agenda.",
    "heuristics": [
        {"scenario_id": "S01", "task": "Email the dinner attendees.", "outcome": "failure",
         "raw_text": "1. **Analysis:** Names were used as addresses.\n"
                     "2. **Learned Guideline:** Resolve addresses first.\n"
                     "   - *Trigger:* [When emailing people known by name...]\n"
                     "   - *Action:* [I must look up each address.]"},
        {"scenario_id": "S03", "task": "How old is Lena?", "outcome": "success",
         "raw_text": "1. **Analysis:** Direct lookup worked.\n"
                     "2. **Learned Guideline:** Read attributes from the record.\n"
                     "   - *Trigger:* [When asked about a contact...]\n"
                     "   - *Action:* [I must call Contacts__get_contact.]"},
    ],
}


def heuristics_list(entries):
    # one block per heuristic: id, task, reward, then the reflection itself
    return "\n\n".join(
        f"Scenario ID: {h['scenario_id']}\nTask: {h['task'].strip()}\nReward: {h['outcome']}\n{h['raw_text'].strip()}"
        for h in entries)


def render(template, values):
    # single pass, so braces inside substituted values stay literal
    return re.sub(r"\{([a-z_]+)\}", lambda m: values.get(m.group(1), m.group(0)), template)


# ---------------------------------------------------------------- main

def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n")


def large_pool():
    """One record per source task of a full-size split: 112 execution, 132 search."""
    records = []
    for split, count in [("execution", 112), ("search", 132)]:
        for i in range(count):
            failed = i % 3 == 0
            records.append({
                "scenario_id": f"{split[:3]}-{i:03d}",
                "task": f"{split} task {i}",
                "outcome": "failure" if failed else "success",
                "outcome_source": "env_reward",
                "analysis": f"Attempt {i} {'failed' if failed else 'succeeded'}.",
                "guideline_trigger": f"When facing {split} task {i}",
                "guideline_action": "Check the result before answering.",
                "raw_text": f"Analysis: attempt {i}.\nTrigger: {split} task {i}\nAction: check.",
                "created_at": f"2025-01-01T00:{i // 60:02d}:{i % 60:02d}Z",
            })
    return records


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check-prompts", metavar="SOURCE_TEX")
    args = ap.parse_args()
    if args.check_prompts:
        check_prompts(args.check_prompts)

    for uid, u in U.items():
        write_json(OUT / "universes" / f"{uid}.json", u)
    write_json(OUT / "scenarios" / "source.json", SOURCE)
    write_json(OUT / "scenarios" / "test.json", TEST)
    write_json(OUT / "scenarios" / "iterative.json", SOURCE[:6])
    write_json(OUT / "scripts" / "accumulate.json", accumulate_script())
    write_json(OUT / "scripts" / "iterative.json", iterative_script())
    write_json(OUT / "scripts" / "baseline.json", baseline_script())
    write_json(OUT / "scripts" / "erl.json", erl_script())
    (OUT / "pool_244.jsonl").write_text(
        "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in large_pool()))

    golden = OUT / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    (golden / "generation_inputs.json").write_text(json.dumps(GOLDEN_GENERATION, indent=2) + "\n")
    (golden / "retrieval_inputs.json").write_text(json.dumps(GOLDEN_RETRIEVAL, indent=2) + "\n")
    (golden / "generation_prompt.txt").write_text(
        render((TEMPLATES / "heuristic_generation.txt").read_text(), GOLDEN_GENERATION))
    (golden / "retrieval_prompt.txt").write_text(
        render((TEMPLATES / "heuristic_retrieval.txt").read_text(), {
            "k": str(GOLDEN_RETRIEVAL["k"]),
            "heuristics_list": heuristics_list(GOLDEN_RETRIEVAL["heuristics"]),
            "task": GOLDEN_RETRIEVAL["task"],
        }))
    print(f"wrote fixtures to {OUT.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
