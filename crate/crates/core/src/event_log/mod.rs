//! Indexed event logs: traces, steps, segments, prev/next navigation and the
//! component universe.
//!
//! Activity, resource and case names are interned into dense ids assigned in
//! lexicographic name order, so ordering by id is ordering by name.

mod csv_io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{TimeParseError, Timestamp};

pub use csv_io::{load_csv, load_csv_reader, write_csv, Schema};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// Position of an event in its source (row order).
    EventId
);
id_type!(ActivityId);
id_type!(ResourceId);
id_type!(CaseId);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0 + 1)
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("missing mandatory column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {source}")]
    Timestamp {
        row: usize,
        #[source]
        source: TimeParseError,
    },
    #[error("row {row}: empty value in mandatory column {column:?}")]
    EmptyCell { row: usize, column: String },
    #[error("empty file")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
}

/// An un-indexed input record, as read from a file or produced by a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub case: String,
    pub activity: String,
    pub timestamp: Timestamp,
    pub resource: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

impl RawEvent {
    pub fn new(case: &str, activity: &str, timestamp: Timestamp, resource: Option<&str>) -> Self {
        RawEvent {
            case: case.to_string(),
            activity: activity.to_string(),
            timestamp,
            resource: resource.map(str::to_string),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attribute(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: EventId,
    pub case: CaseId,
    pub activity: ActivityId,
    pub timestamp: Timestamp,
    pub resource: Option<ResourceId>,
    pub attributes: BTreeMap<String, String>,
}

/// A process component: an activity, a resource, or a segment (directly
/// following activity pair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentId {
    Activity(ActivityId),
    Resource(ResourceId),
    Segment(ActivityId, ActivityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentKind {
    Activity,
    Resource,
    Segment,
}

impl ComponentId {
    pub fn kind(self) -> ComponentKind {
        match self {
            ComponentId::Activity(_) => ComponentKind::Activity,
            ComponentId::Resource(_) => ComponentKind::Resource,
            ComponentId::Segment(..) => ComponentKind::Segment,
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Activity => "activity",
            ComponentKind::Resource => "resource",
            ComponentKind::Segment => "segment",
        })
    }
}

/// An immutable, fully indexed event log.
#[derive(Debug, Clone)]
pub struct EventLog {
    events: Vec<Event>,
    activities: Vec<String>,
    resources: Vec<String>,
    cases: Vec<String>,
    traces: Vec<Vec<EventId>>,
    prev: Vec<Option<EventId>>,
    next: Vec<Option<EventId>>,
    segments: BTreeMap<(ActivityId, ActivityId), Vec<EventId>>,
    by_activity: Vec<Vec<EventId>>,
    by_resource: Vec<Vec<EventId>>,
    into_activity: Vec<Vec<EventId>>,
    into_resource: Vec<Vec<EventId>>,
    attribute_names: Vec<String>,
}

fn intern<'a>(names: impl Iterator<Item = &'a str>) -> (Vec<String>, BTreeMap<&'a str, u32>) {
    let set: BTreeSet<&str> = names.collect();
    let table: Vec<String> = set.iter().map(|s| s.to_string()).collect();
    let lookup = set
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i as u32))
        .collect();
    (table, lookup)
}

impl EventLog {
    /// Builds and indexes a log. Event ids follow the record order; traces are
    /// ordered by `(timestamp, record index)`.
    pub fn from_records(records: Vec<RawEvent>) -> Result<Self, LogError> {
        if records.is_empty() {
            return Err(LogError::Empty);
        }
        let (activities, act_ix) = intern(records.iter().map(|r| r.activity.as_str()));
        let (resources, res_ix) = intern(records.iter().filter_map(|r| r.resource.as_deref()));
        let (cases, case_ix) = intern(records.iter().map(|r| r.case.as_str()));

        let mut attribute_names: BTreeSet<String> = BTreeSet::new();
        let events: Vec<Event> = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                attribute_names.extend(r.attributes.keys().cloned());
                Event {
                    id: EventId(i as u32),
                    case: CaseId(case_ix[r.case.as_str()]),
                    activity: ActivityId(act_ix[r.activity.as_str()]),
                    timestamp: r.timestamp,
                    resource: r.resource.as_deref().map(|s| ResourceId(res_ix[s])),
                    attributes: r.attributes.clone(),
                }
            })
            .collect();
        drop(records);

        let mut traces: Vec<Vec<EventId>> = vec![Vec::new(); cases.len()];
        for e in &events {
            traces[e.case.index()].push(e.id);
        }
        for trace in &mut traces {
            trace.sort_by_key(|id| (events[id.index()].timestamp, *id));
        }

        let n = events.len();
        let mut prev = vec![None; n];
        let mut next = vec![None; n];
        let mut segments: BTreeMap<(ActivityId, ActivityId), Vec<EventId>> = BTreeMap::new();
        for trace in &traces {
            for pair in trace.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                next[a.index()] = Some(b);
                prev[b.index()] = Some(a);
            }
        }

        let mut by_activity = vec![Vec::new(); activities.len()];
        let mut by_resource = vec![Vec::new(); resources.len()];
        let mut into_activity = vec![Vec::new(); activities.len()];
        let mut into_resource = vec![Vec::new(); resources.len()];
        for e in &events {
            by_activity[e.activity.index()].push(e.id);
            if let Some(r) = e.resource {
                by_resource[r.index()].push(e.id);
            }
            if let Some(nx) = next[e.id.index()] {
                let succ = &events[nx.index()];
                into_activity[succ.activity.index()].push(e.id);
                if let Some(r) = succ.resource {
                    into_resource[r.index()].push(e.id);
                }
                segments
                    .entry((e.activity, succ.activity))
                    .or_default()
                    .push(e.id);
            }
        }

        Ok(EventLog {
            events,
            activities,
            resources,
            cases,
            traces,
            prev,
            next,
            segments,
            by_activity,
            by_resource,
            into_activity,
            into_resource,
            attribute_names: attribute_names.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    #[inline]
    pub fn event(&self, id: EventId) -> &Event {
        &self.events[id.index()]
    }

    #[inline]
    pub fn time(&self, id: EventId) -> Timestamp {
        self.events[id.index()].timestamp
    }

    #[inline]
    pub fn activity_of(&self, id: EventId) -> ActivityId {
        self.events[id.index()].activity
    }

    #[inline]
    pub fn resource_of(&self, id: EventId) -> Option<ResourceId> {
        self.events[id.index()].resource
    }

    #[inline]
    pub fn case_of(&self, id: EventId) -> CaseId {
        self.events[id.index()].case
    }

    #[inline]
    pub fn next(&self, id: EventId) -> Option<EventId> {
        self.next[id.index()]
    }

    #[inline]
    pub fn prev(&self, id: EventId) -> Option<EventId> {
        self.prev[id.index()]
    }

    /// Whether any event carries a resource; resource-based aspects require it.
    pub fn has_resources(&self) -> bool {
        !self.resources.is_empty()
    }

    pub fn activities(&self) -> impl ExactSizeIterator<Item = ActivityId> + '_ {
        (0..self.activities.len() as u32).map(ActivityId)
    }

    pub fn resources(&self) -> impl ExactSizeIterator<Item = ResourceId> + '_ {
        (0..self.resources.len() as u32).map(ResourceId)
    }

    pub fn cases(&self) -> impl ExactSizeIterator<Item = CaseId> + '_ {
        (0..self.cases.len() as u32).map(CaseId)
    }

    pub fn num_cases(&self) -> usize {
        self.cases.len()
    }

    /// The segments `S(L)` in `(activity, activity)` id order.
    pub fn segments(&self) -> impl Iterator<Item = (ActivityId, ActivityId)> + '_ {
        self.segments.keys().copied()
    }

    pub fn has_segment(&self, a: ActivityId, b: ActivityId) -> bool {
        self.segments.contains_key(&(a, b))
    }

    /// All steps `(e, next(e))`, grouped by trace.
    pub fn steps(&self) -> impl Iterator<Item = (EventId, EventId)> + '_ {
        self.traces
            .iter()
            .flat_map(|t| t.windows(2).map(|p| (p[0], p[1])))
    }

    pub fn trace(&self, case: CaseId) -> &[EventId] {
        &self.traces[case.index()]
    }

    pub fn traces(&self) -> impl Iterator<Item = (CaseId, &[EventId])> + '_ {
        self.traces
            .iter()
            .enumerate()
            .map(|(i, t)| (CaseId(i as u32), t.as_slice()))
    }

    pub fn activity_name(&self, a: ActivityId) -> &str {
        &self.activities[a.index()]
    }

    pub fn resource_name(&self, r: ResourceId) -> &str {
        &self.resources[r.index()]
    }

    pub fn case_name(&self, c: CaseId) -> &str {
        &self.cases[c.index()]
    }

    pub fn activity_id(&self, name: &str) -> Option<ActivityId> {
        self.activities
            .binary_search_by(|s| s.as_str().cmp(name))
            .ok()
            .map(|i| ActivityId(i as u32))
    }

    pub fn resource_id(&self, name: &str) -> Option<ResourceId> {
        self.resources
            .binary_search_by(|s| s.as_str().cmp(name))
            .ok()
            .map(|i| ResourceId(i as u32))
    }

    pub fn case_id(&self, name: &str) -> Option<CaseId> {
        self.cases
            .binary_search_by(|s| s.as_str().cmp(name))
            .ok()
            .map(|i| CaseId(i as u32))
    }

    /// Events executing `a`, in id order.
    pub fn events_of_activity(&self, a: ActivityId) -> &[EventId] {
        &self.by_activity[a.index()]
    }

    pub fn events_of_resource(&self, r: ResourceId) -> &[EventId] {
        &self.by_resource[r.index()]
    }

    /// Events whose successor executes `a`.
    pub fn predecessors_of_activity(&self, a: ActivityId) -> &[EventId] {
        &self.into_activity[a.index()]
    }

    /// Events whose successor is handled by `r`.
    pub fn predecessors_of_resource(&self, r: ResourceId) -> &[EventId] {
        &self.into_resource[r.index()]
    }

    /// Source events `e` of the steps `(e, next(e))` realising segment `(a, b)`.
    pub fn segment_sources(&self, a: ActivityId, b: ActivityId) -> &[EventId] {
        self.segments.get(&(a, b)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The component universe `comp(L) = A(L) ∪ R(L) ∪ S(L)`.
    pub fn components(&self) -> Vec<ComponentId> {
        self.activities()
            .map(ComponentId::Activity)
            .chain(self.resources().map(ComponentId::Resource))
            .chain(self.segments().map(|(a, b)| ComponentId::Segment(a, b)))
            .collect()
    }

    pub fn contains_component(&self, c: ComponentId) -> bool {
        match c {
            ComponentId::Activity(a) => a.index() < self.activities.len(),
            ComponentId::Resource(r) => r.index() < self.resources.len(),
            ComponentId::Segment(a, b) => self.has_segment(a, b),
        }
    }

    /// Human-readable label: activity and resource names as-is, segments as `a->b`.
    pub fn component_label(&self, c: ComponentId) -> String {
        match c {
            ComponentId::Activity(a) => self.activity_name(a).to_string(),
            ComponentId::Resource(r) => self.resource_name(r).to_string(),
            ComponentId::Segment(a, b) => {
                format!("{}->{}", self.activity_name(a), self.activity_name(b))
            }
        }
    }

    /// Parses a component label. `a->b` names a segment; otherwise activities
    /// are tried before resources. `activity:x` / `resource:x` force the kind.
    pub fn parse_component(&self, label: &str) -> Result<ComponentId, LogError> {
        let unknown = || LogError::UnknownComponent(label.to_string());
        if let Some((a, b)) = label.split_once("->") {
            let a = self.activity_id(a.trim()).ok_or_else(unknown)?;
            let b = self.activity_id(b.trim()).ok_or_else(unknown)?;
            return if self.has_segment(a, b) {
                Ok(ComponentId::Segment(a, b))
            } else {
                Err(unknown())
            };
        }
        if let Some(name) = label.strip_prefix("activity:") {
            return self
                .activity_id(name)
                .map(ComponentId::Activity)
                .ok_or_else(unknown);
        }
        if let Some(name) = label.strip_prefix("resource:") {
            return self
                .resource_id(name)
                .map(ComponentId::Resource)
                .ok_or_else(unknown);
        }
        self.activity_id(label)
            .map(ComponentId::Activity)
            .or_else(|| self.resource_id(label).map(ComponentId::Resource))
            .ok_or_else(unknown)
    }

    /// Names of all extra (non-mapped) attributes seen in the log.
    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute(&self, id: EventId, name: &str) -> Option<&str> {
        self.events[id.index()]
            .attributes
            .get(name)
            .map(String::as_str)
    }

    /// Extra attributes whose value is the same for every event of each case.
    pub fn case_level_attributes(&self) -> Vec<String> {
        self.attribute_names
            .iter()
            .filter(|name| self.is_case_level(name))
            .cloned()
            .collect()
    }

    pub fn is_case_level(&self, name: &str) -> bool {
        self.traces.iter().all(|trace| {
            let mut values = trace.iter().map(|&e| self.attribute(e, name));
            match values.next() {
                Some(first) => values.all(|v| v == first),
                None => true,
            }
        })
    }

    /// The value of a case-level attribute for `case` (taken from its first event).
    pub fn case_attribute(&self, case: CaseId, name: &str) -> Option<&str> {
        self.traces[case.index()]
            .first()
            .and_then(|&e| self.attribute(e, name))
    }

    pub fn first_timestamp(&self) -> Timestamp {
        self.events
            .iter()
            .map(|e| e.timestamp)
            .min()
            .unwrap_or_default()
    }

    pub fn last_timestamp(&self) -> Timestamp {
        self.events
            .iter()
            .map(|e| e.timestamp)
            .max()
            .unwrap_or_default()
    }

    /// Sorted, de-duplicated case set of an event set.
    pub fn cases_of(&self, events: &[EventId]) -> Vec<CaseId> {
        let mut cases: Vec<CaseId> = events.iter().map(|&e| self.case_of(e)).collect();
        cases.sort_unstable();
        cases.dedup();
        cases
    }

    /// Converts the log back into input records (record order preserved).
    pub fn to_records(&self) -> Vec<RawEvent> {
        self.events
            .iter()
            .map(|e| RawEvent {
                case: self.case_name(e.case).to_string(),
                activity: self.activity_name(e.activity).to_string(),
                timestamp: e.timestamp,
                resource: e.resource.map(|r| self.resource_name(r).to_string()),
                attributes: e.attributes.clone(),
            })
            .collect()
    }
}
