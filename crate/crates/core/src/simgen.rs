//! Discrete-event simulation of a multi-stage process with shared resource
//! pools, FIFO queues, arrival bursts and queue-triggered service slowdowns.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{EventLog, LogError, RawEvent};
use crate::time::{Duration, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown activity {0:?}")]
    UnknownActivity(String),
    #[error("routing probabilities of {activity:?} sum to {sum}, not 1")]
    Routing { activity: String, sum: f64 },
    #[error("activity {0:?} has no resources")]
    EmptyPool(String),
    #[error("{0} must be positive")]
    NonPositive(String),
    #[error("attribute {0:?} needs positive weights")]
    Weights(String),
    #[error("the scenario produced no events")]
    NoEvents,
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

impl From<LogError> for SimError {
    fn from(_: LogError) -> Self {
        SimError::NoEvents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Poisson count per window, uniform times within it.
    #[default]
    Poisson,
    /// `round(rate)` evenly spaced arrivals per window.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrivals {
    #[serde(default)]
    pub process: ArrivalProcess,
    pub rate_per_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Service {
    Exponential { mean: Duration },
    Fixed { value: Duration },
    Uniform { min: Duration, max: Duration },
}

impl Service {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Service::Exponential { mean } => Exp::new(1.0 / mean.millis() as f64)
                .expect("positive mean")
                .sample(rng),
            Service::Fixed { value } => value.millis() as f64,
            Service::Uniform { min, max } => {
                if max.millis() > min.millis() {
                    rng.random_range(min.millis() as f64..max.millis() as f64)
                } else {
                    min.millis() as f64
                }
            }
        }
    }

    fn positive(&self) -> bool {
        match *self {
            Service::Exponential { mean } => mean.millis() > 0,
            Service::Fixed { value } => value.millis() > 0,
            Service::Uniform { min, max } => min.millis() > 0 && max >= min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub to: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySpec {
    pub name: String,
    pub resources: Vec<String>,
    pub service: Service,
    /// Empty for final activities.
    #[serde(default)]
    pub routes: Vec<Route>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Burst {
    /// First affected window, counted from the scenario start.
    pub window: usize,
    #[serde(default = "one")]
    pub length: usize,
    pub multiplier: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slowdown {
    pub activity: String,
    /// Service slows when more than this many tasks wait at service start.
    pub cutoff: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedValue {
    pub value: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseAttribute {
    pub name: String,
    pub values: Vec<WeightedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: Timestamp,
    pub window: Duration,
    pub horizon_windows: usize,
    pub start_activity: String,
    pub arrivals: Arrivals,
    pub activities: Vec<ActivitySpec>,
    #[serde(default)]
    pub bursts: Vec<Burst>,
    #[serde(default)]
    pub slowdowns: Vec<Slowdown>,
    #[serde(default)]
    pub attributes: Vec<CaseAttribute>,
}

fn default_start() -> Timestamp {
    Timestamp(1_704_067_200_000)
}

/// Injected anomalies, as window indexes counted from the scenario start.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub origin: Timestamp,
    pub window: Duration,
    /// Arrival-burst windows, keyed by the start activity.
    pub bursts: BTreeMap<String, Vec<i64>>,
    /// Windows in which a slowed-down task completed, keyed by segment `a->b`.
    pub slowdowns: BTreeMap<String, Vec<i64>>,
}

impl ScenarioConfig {
    pub const PRESETS: [&'static str; 2] = ["citizenship", "steady"];

    pub fn preset(name: &str) -> Result<Self, SimError> {
        match name {
            "citizenship" => Ok(citizenship()),
            "steady" => Ok(steady()),
            _ => Err(SimError::UnknownPreset(name.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let names: HashMap<&str, &ActivitySpec> = self
            .activities
            .iter()
            .map(|a| (a.name.as_str(), a))
            .collect();
        if !names.contains_key(self.start_activity.as_str()) {
            return Err(SimError::UnknownActivity(self.start_activity.clone()));
        }
        if self.window.millis() <= 0 {
            return Err(SimError::NonPositive("window".into()));
        }
        if self.horizon_windows == 0 {
            return Err(SimError::NonPositive("horizon_windows".into()));
        }
        if !(self.arrivals.rate_per_window > 0.0 && self.arrivals.rate_per_window.is_finite()) {
            return Err(SimError::NonPositive("arrivals.rate_per_window".into()));
        }
        for a in &self.activities {
            if a.resources.is_empty() {
                return Err(SimError::EmptyPool(a.name.clone()));
            }
            if !a.service.positive() {
                return Err(SimError::NonPositive(format!("service time of {}", a.name)));
            }
            for r in &a.routes {
                if !names.contains_key(r.to.as_str()) {
                    return Err(SimError::UnknownActivity(r.to.clone()));
                }
            }
            if !a.routes.is_empty() {
                let sum: f64 = a.routes.iter().map(|r| r.p).sum();
                if (sum - 1.0).abs() > 1e-9 || a.routes.iter().any(|r| r.p < 0.0) {
                    return Err(SimError::Routing {
                        activity: a.name.clone(),
                        sum,
                    });
                }
            }
        }
        for b in &self.bursts {
            if b.multiplier.is_nan() || b.multiplier <= 0.0 {
                return Err(SimError::NonPositive("burst multiplier".into()));
            }
        }
        for s in &self.slowdowns {
            if !names.contains_key(s.activity.as_str()) {
                return Err(SimError::UnknownActivity(s.activity.clone()));
            }
            if s.multiplier.is_nan() || s.multiplier <= 0.0 {
                return Err(SimError::NonPositive("slowdown multiplier".into()));
            }
        }
        for attr in &self.attributes {
            if attr.values.is_empty()
                || attr
                    .values
                    .iter()
                    .any(|v| v.weight.is_nan() || v.weight < 0.0)
                || attr.values.iter().all(|v| v.weight == 0.0)
            {
                return Err(SimError::Weights(attr.name.clone()));
            }
        }
        Ok(())
    }

    fn rate_multiplier(&self, window: usize) -> f64 {
        self.bursts
            .iter()
            .filter(|b| (b.window..b.window + b.length).contains(&window))
            .map(|b| b.multiplier)
            .product()
    }
}

fn exp(mean: &str) -> Service {
    Service::Exponential {
        mean: mean.parse().expect("valid literal"),
    }
}

/// Name, pool, service and routes of one activity.
type Spec<'a> = (&'a str, &'a [&'a str], Service, &'a [(&'a str, f64)]);

fn acts(specs: &[Spec<'_>]) -> Vec<ActivitySpec> {
    specs
        .iter()
        .map(|(name, res, service, routes)| ActivitySpec {
            name: name.to_string(),
            resources: res.iter().map(|r| r.to_string()).collect(),
            service: *service,
            routes: routes
                .iter()
                .map(|(to, p)| Route {
                    to: to.to_string(),
                    p: *p,
                })
                .collect(),
        })
        .collect()
}

fn channel() -> Vec<CaseAttribute> {
    vec![CaseAttribute {
        name: "channel".into(),
        values: vec![
            WeightedValue {
                value: "self".into(),
                weight: 0.7,
            },
            WeightedValue {
                value: "lawyer".into(),
                weight: 0.3,
            },
        ],
    }]
}

/// Citizenship applications: Jane registers submissions, Mike and Sarah
/// review, decide and request updates. Three five-fold submission bursts and
/// slower reviews under a long queue.
fn citizenship() -> ScenarioConfig {
    const STAFF: &[&str] = &["Mike", "Sarah"];
    ScenarioConfig {
        seed: 42,
        start: default_start(),
        window: Duration::from_secs(3600),
        horizon_windows: 100,
        start_activity: "submit".into(),
        arrivals: Arrivals {
            process: ArrivalProcess::Poisson,
            rate_per_window: 20.0,
        },
        activities: acts(&[
            ("submit", &["Jane"], exp("60s"), &[("review", 1.0)]),
            (
                "review",
                STAFF,
                exp("90s"),
                &[("approve", 0.6), ("deny", 0.2), ("update", 0.2)],
            ),
            ("update", STAFF, exp("60s"), &[("review", 1.0)]),
            ("approve", STAFF, exp("45s"), &[]),
            ("deny", STAFF, exp("45s"), &[]),
        ]),
        bursts: [20, 50, 80]
            .into_iter()
            .map(|window| Burst {
                window,
                length: 1,
                multiplier: 5.0,
            })
            .collect(),
        slowdowns: vec![Slowdown {
            activity: "review".into(),
            cutoff: 5,
            multiplier: 2.0,
        }],
        attributes: channel(),
    }
}

/// Evenly spaced submissions and long, fixed reviews by a large team; no
/// disruptions.
fn steady() -> ScenarioConfig {
    let team: Vec<String> = (1..=16).map(|i| format!("R{i:02}")).collect();
    let team: Vec<&str> = team.iter().map(String::as_str).collect();
    ScenarioConfig {
        seed: 7,
        start: default_start(),
        window: Duration::from_secs(3600),
        horizon_windows: 100,
        start_activity: "submit".into(),
        arrivals: Arrivals {
            process: ArrivalProcess::Periodic,
            rate_per_window: 4.0,
        },
        activities: acts(&[
            (
                "submit",
                &["Jane"],
                Service::Fixed {
                    value: Duration::from_secs(60),
                },
                &[("review", 1.0)],
            ),
            (
                "review",
                &team,
                Service::Fixed {
                    value: Duration::from_secs(3 * 3600),
                },
                &[],
            ),
        ]),
        bursts: Vec::new(),
        slowdowns: Vec::new(),
        attributes: channel(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Completion { resource: usize, task: usize },
    Arrival { case: usize },
}

struct Task {
    case: usize,
    activity: usize,
    ready: i64,
    prev_activity: Option<usize>,
}

struct Sim<'c> {
    cfg: &'c ScenarioConfig,
    rng: ChaCha8Rng,
    index: HashMap<&'c str, usize>,
    serves: Vec<Vec<usize>>,
    resource_names: Vec<String>,
    busy: Vec<bool>,
    queues: Vec<VecDeque<usize>>,
    tasks: Vec<Task>,
    agenda: BinaryHeap<Reverse<(i64, u64, Kind)>>,
    seq: u64,
    slowdown: Vec<Option<(usize, f64)>>,
    routes: Vec<Option<(WeightedIndex<f64>, Vec<usize>)>>,
    events: Vec<Completed>,
    slowed: BTreeMap<String, Vec<i64>>,
}

/// One finished task, in completion order.
struct Completed {
    case: usize,
    activity: usize,
    t: i64,
    resource: usize,
}

struct SimOutput {
    events: Vec<Completed>,
    slowed: BTreeMap<String, Vec<i64>>,
    resources: Vec<String>,
    n_cases: usize,
}

impl<'c> Sim<'c> {
    fn new(cfg: &'c ScenarioConfig) -> Self {
        let index: HashMap<&str, usize> = cfg
            .activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), i))
            .collect();
        let mut resource_names: Vec<String> = cfg
            .activities
            .iter()
            .flat_map(|a| a.resources.iter().cloned())
            .collect();
        resource_names.sort();
        resource_names.dedup();
        let serves = resource_names
            .iter()
            .map(|r| {
                (0..cfg.activities.len())
                    .filter(|&i| cfg.activities[i].resources.contains(r))
                    .collect()
            })
            .collect();
        let mut slowdown = vec![None; cfg.activities.len()];
        for s in &cfg.slowdowns {
            slowdown[index[s.activity.as_str()]] = Some((s.cutoff, s.multiplier));
        }
        let routes = cfg
            .activities
            .iter()
            .map(|a| {
                (!a.routes.is_empty()).then(|| {
                    let w = WeightedIndex::new(a.routes.iter().map(|r| r.p)).expect("validated");
                    (w, a.routes.iter().map(|r| index[r.to.as_str()]).collect())
                })
            })
            .collect();
        Sim {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            index,
            busy: vec![false; resource_names.len()],
            serves,
            resource_names,
            queues: vec![VecDeque::new(); cfg.activities.len()],
            tasks: Vec::new(),
            agenda: BinaryHeap::new(),
            seq: 0,
            slowdown,
            routes,
            events: Vec::new(),
            slowed: BTreeMap::new(),
        }
    }

    fn schedule(&mut self, t: i64, kind: Kind) {
        self.seq += 1;
        self.agenda.push(Reverse((t, self.seq, kind)));
    }

    fn arrivals(&mut self) -> Vec<i64> {
        let w = self.cfg.window.millis();
        let origin = self.cfg.start.millis();
        let mut times = Vec::new();
        for k in 0..self.cfg.horizon_windows {
            let rate = self.cfg.arrivals.rate_per_window * self.cfg.rate_multiplier(k);
            let base = origin + k as i64 * w;
            match self.cfg.arrivals.process {
                ArrivalProcess::Poisson => {
                    let n = Poisson::new(rate)
                        .expect("positive rate")
                        .sample(&mut self.rng) as usize;
                    let mut ts: Vec<i64> =
                        (0..n).map(|_| base + self.rng.random_range(0..w)).collect();
                    ts.sort_unstable();
                    times.extend(ts);
                }
                ArrivalProcess::Periodic => {
                    let n = rate.round() as i64;
                    times.extend((0..n).map(|i| base + (2 * i + 1) * w / (2 * n)));
                }
            }
        }
        times
    }

    fn release(&mut self, case: usize, activity: usize, t: i64, prev: Option<usize>) {
        self.tasks.push(Task {
            case,
            activity,
            ready: t,
            prev_activity: prev,
        });
        self.queues[activity].push_back(self.tasks.len() - 1);
    }

    /// Starts work for every idle resource with a waiting task.
    fn dispatch(&mut self, t: i64) {
        for r in 0..self.busy.len() {
            if self.busy[r] {
                continue;
            }
            let pick = self.serves[r]
                .iter()
                .filter_map(|&a| {
                    self.queues[a]
                        .front()
                        .map(|&task| (self.tasks[task].ready, task, a))
                })
                .min();
            let Some((_, task, a)) = pick else { continue };
            self.queues[a].pop_front();
            let spec = &self.cfg.activities[a];
            let mut service = spec.service.sample(&mut self.rng);
            let slowed = match self.slowdown[a] {
                Some((cutoff, mult)) if self.queues[a].len() > cutoff => {
                    service *= mult;
                    true
                }
                _ => false,
            };
            let done = t + (service.round() as i64).max(1);
            if slowed {
                let key = match self.tasks[task].prev_activity {
                    Some(p) => format!("{}->{}", self.cfg.activities[p].name, spec.name),
                    None => spec.name.clone(),
                };
                let window = (done - self.cfg.start.millis()).div_euclid(self.cfg.window.millis());
                self.slowed.entry(key).or_default().push(window);
            }
            self.busy[r] = true;
            self.schedule(done, Kind::Completion { resource: r, task });
        }
    }

    fn run(mut self) -> SimOutput {
        let start = self.index[self.cfg.start_activity.as_str()];
        let arrivals = self.arrivals();
        let n_cases = arrivals.len();
        for (case, t) in arrivals.into_iter().enumerate() {
            self.schedule(t, Kind::Arrival { case });
        }
        while let Some(Reverse((t, _, kind))) = self.agenda.pop() {
            match kind {
                Kind::Arrival { case } => self.release(case, start, t, None),
                Kind::Completion { resource, task } => {
                    self.busy[resource] = false;
                    let (case, a) = (self.tasks[task].case, self.tasks[task].activity);
                    self.events.push(Completed {
                        case,
                        activity: a,
                        t,
                        resource,
                    });
                    if let Some((dist, targets)) = &self.routes[a] {
                        let next = targets[dist.sample(&mut self.rng)];
                        self.release(case, next, t, Some(a));
                    }
                }
            }
            // Handle every simultaneous agenda entry before assigning work.
            if self
                .agenda
                .peek()
                .is_some_and(|Reverse((t2, _, _))| *t2 == t)
            {
                continue;
            }
            self.dispatch(t);
        }
        for v in self.slowed.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        SimOutput {
            events: self.events,
            slowed: self.slowed,
            resources: self.resource_names,
            n_cases,
        }
    }
}

/// Runs the scenario; deterministic for a fixed seed.
pub fn generate(cfg: &ScenarioConfig) -> Result<(EventLog, GroundTruth), SimError> {
    cfg.validate()?;
    let SimOutput {
        events,
        slowed,
        resources,
        n_cases,
    } = Sim::new(cfg).run();
    let mut attr_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a77e);
    let attrs: Vec<Vec<(String, String)>> = (0..n_cases)
        .map(|_| {
            cfg.attributes
                .iter()
                .map(|a| {
                    let w =
                        WeightedIndex::new(a.values.iter().map(|v| v.weight)).expect("validated");
                    (
                        a.name.clone(),
                        a.values[w.sample(&mut attr_rng)].value.clone(),
                    )
                })
                .collect()
        })
        .collect();
    let width = (n_cases.max(1) as f64).log10() as usize + 1;
    let records: Vec<RawEvent> = events
        .into_iter()
        .map(|e| {
            let mut rec = RawEvent::new(
                &format!("c{:0width$}", e.case),
                &cfg.activities[e.activity].name,
                Timestamp(e.t),
                Some(&resources[e.resource]),
            );
            for (k, v) in &attrs[e.case] {
                rec = rec.with_attribute(k, v);
            }
            rec
        })
        .collect();
    if records.is_empty() {
        return Err(SimError::NoEvents);
    }
    let log = EventLog::from_records(records)?;
    let mut truth = GroundTruth {
        origin: cfg.start,
        window: cfg.window,
        ..GroundTruth::default()
    };
    let bursts: Vec<i64> = (0..cfg.horizon_windows)
        .filter(|&k| cfg.rate_multiplier(k) != 1.0)
        .map(|k| k as i64)
        .collect();
    if !bursts.is_empty() {
        truth.bursts.insert(cfg.start_activity.clone(), bursts);
    }
    truth.slowdowns = slowed;
    Ok((log, truth))
}
