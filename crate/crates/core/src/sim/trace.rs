use std::collections::VecDeque;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Pseudo-element name used for the environment.
pub const ENV: &str = "env";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Receive,
    Rendezvous,
    External,
    Fault,
    RouteUpdate,
    Blocked,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Receive => "receive",
            EventKind::Rendezvous => "rendezvous",
            EventKind::External => "external",
            EventKind::Fault => "fault",
            EventKind::RouteUpdate => "route_update",
            EventKind::Blocked => "blocked",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        [
            EventKind::Send,
            EventKind::Receive,
            EventKind::Rendezvous,
            EventKind::External,
            EventKind::Fault,
            EventKind::RouteUpdate,
            EventKind::Blocked,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub element: String,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// `step<TAB>element<TAB>kind<TAB>detail`, one event per line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", e.step, e.element, e.kind, e.detail);
        }
        s
    }
}

/// Matches events; absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPattern {
    pub element: Option<String>,
    pub kind: Option<EventKind>,
    pub detail_contains: Option<String>,
}

impl EventPattern {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn new(element: Option<&str>, kind: Option<EventKind>, detail_contains: Option<&str>) -> Self {
        EventPattern {
            element: element.map(str::to_string),
            kind,
            detail_contains: detail_contains.map(str::to_string),
        }
    }

    pub fn matches(&self, e: &TraceEvent) -> bool {
        self.element.as_ref().is_none_or(|x| *x == e.element)
            && self.kind.is_none_or(|k| k == e.kind)
            && self.detail_contains.as_ref().is_none_or(|d| e.detail.contains(d.as_str()))
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{} {} {}]",
            self.element.as_deref().unwrap_or("*"),
            self.kind.map_or("*", EventKind::as_str),
            self.detail_contains.as_deref().map_or("*".to_string(), |d| format!("~{d:?}"))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceProperty {
    /// Every request is followed by its own response (FIFO pairing) no more
    /// than `within` steps later.
    Responds {
        request: EventPattern,
        response: EventPattern,
        within: u64,
    },
    Never(EventPattern),
    /// Once `trigger` has occurred, `event` occurs after its last occurrence.
    EventuallyAfter { trigger: EventPattern, event: EventPattern },
}

impl fmt::Display for TraceProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceProperty::Responds {
                request,
                response,
                within,
            } => write!(f, "Responds({request}, {response}, {within})"),
            TraceProperty::Never(p) => write!(f, "Never({p})"),
            TraceProperty::EventuallyAfter { trigger, event } => write!(f, "EventuallyAfter({trigger}, {event})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    /// Index of the event that decided a failure, when there is one.
    pub witness: Option<usize>,
    pub explanation: String,
}

impl Verdict {
    fn pass(explanation: impl Into<String>) -> Self {
        Verdict {
            passed: true,
            witness: None,
            explanation: explanation.into(),
        }
    }

    fn fail(witness: Option<usize>, explanation: impl Into<String>) -> Self {
        Verdict {
            passed: false,
            witness,
            explanation: explanation.into(),
        }
    }
}

pub fn check_trace(trace: &Trace, prop: &TraceProperty) -> Verdict {
    match prop {
        TraceProperty::Never(p) => match trace.events.iter().position(|e| p.matches(e)) {
            Some(i) => Verdict::fail(Some(i), format!("event {i} matches {p}")),
            None => Verdict::pass("no matching event"),
        },
        TraceProperty::EventuallyAfter { trigger, event } => {
            let Some(last) = trace.events.iter().rposition(|e| trigger.matches(e)) else {
                return Verdict::pass("trigger never occurs");
            };
            match trace.events[last + 1..].iter().position(|e| event.matches(e)) {
                Some(k) => Verdict::pass(format!("event {} follows trigger {last}", last + 1 + k)),
                None => Verdict::fail(Some(last), format!("nothing matches {event} after trigger {last}")),
            }
        }
        TraceProperty::Responds {
            request,
            response,
            within,
        } => {
            let mut pending: VecDeque<(usize, u64)> = VecDeque::new();
            let mut answered = 0usize;
            for (i, e) in trace.events.iter().enumerate() {
                if let Some(&(ri, rs)) = pending.front() {
                    if e.step > rs + within {
                        return Verdict::fail(Some(ri), format!("request {ri} unanswered within {within} steps"));
                    }
                }
                if response.matches(e) {
                    if pending.pop_front().is_some() {
                        answered += 1;
                    }
                } else if request.matches(e) {
                    pending.push_back((i, e.step));
                }
            }
            match pending.front() {
                Some(&(ri, _)) => Verdict::fail(Some(ri), format!("request {ri} never answered")),
                None => Verdict::pass(format!("{answered} request(s) answered")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(step: u64, element: &str, kind: EventKind, detail: &str) -> TraceEvent {
        TraceEvent {
            step,
            element: element.into(),
            kind,
            detail: detail.into(),
        }
    }

    #[test]
    fn never_on_empty_trace_passes() {
        assert!(check_trace(&Trace::default(), &TraceProperty::Never(EventPattern::any())).passed);
    }

    #[test]
    fn responds_pairs_fifo_within_bound() {
        let req = EventPattern::new(Some("P"), Some(EventKind::Receive), None);
        let resp = EventPattern::new(Some(ENV), Some(EventKind::Receive), None);
        let t = Trace {
            events: vec![
                ev(1, "P", EventKind::Receive, "a"),
                ev(2, "P", EventKind::Receive, "b"),
                ev(5, ENV, EventKind::Receive, "a"),
                ev(9, ENV, EventKind::Receive, "b"),
            ],
        };
        let p = |within| TraceProperty::Responds {
            request: req.clone(),
            response: resp.clone(),
            within,
        };
        assert!(check_trace(&t, &p(7)).passed);
        assert!(!check_trace(&t, &p(6)).passed);
    }

    #[test]
    fn eventually_after_uses_last_trigger() {
        let t = Trace {
            events: vec![
                ev(1, "X", EventKind::Fault, "down"),
                ev(2, "Y", EventKind::Send, "ok"),
                ev(3, "X", EventKind::Fault, "down"),
            ],
        };
        let p = TraceProperty::EventuallyAfter {
            trigger: EventPattern::new(None, Some(EventKind::Fault), None),
            event: EventPattern::new(None, Some(EventKind::Send), None),
        };
        assert!(!check_trace(&t, &p).passed);
    }

    #[test]
    fn tsv_layout() {
        let t = Trace {
            events: vec![ev(3, "A", EventKind::RouteUpdate, "r := B")],
        };
        assert_eq!(t.to_tsv(), "3\tA\troute_update\tr := B\n");
    }
}
