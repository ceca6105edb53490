//! Brute-force reference implementations, written straight from the
//! set-builder definitions over the raw records. Nothing here uses the
//! library's indexes.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hlevent_core::{RawEvent, Timestamp};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Comp {
    Activity(String),
    Resource(String),
    Segment(String, String),
}

pub struct Oracle<'r> {
    pub recs: &'r [RawEvent],
    pub origin: i64,
    pub width: i64,
    next: Vec<Option<usize>>,
    prev: Vec<Option<usize>>,
}

impl<'r> Oracle<'r> {
    pub fn new(recs: &'r [RawEvent], origin: i64, width: i64) -> Self {
        let n = recs.len();
        let key = |i: usize| (recs[i].timestamp.millis(), i);
        // next(e): the earliest later event of the same case.
        let next: Vec<Option<usize>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| recs[j].case == recs[i].case && key(j) > key(i))
                    .min_by_key(|&j| key(j))
            })
            .collect();
        let prev: Vec<Option<usize>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| recs[j].case == recs[i].case && key(j) < key(i))
                    .max_by_key(|&j| key(j))
            })
            .collect();
        Oracle {
            recs,
            origin,
            width,
            next,
            prev,
        }
    }

    pub fn next(&self, i: usize) -> Option<usize> {
        self.next[i]
    }

    pub fn prev(&self, i: usize) -> Option<usize> {
        self.prev[i]
    }

    fn t(&self, i: usize) -> i64 {
        self.recs[i].timestamp.millis()
    }

    fn start(&self, w: i64) -> i64 {
        self.origin + w * self.width
    }

    fn end(&self, w: i64) -> i64 {
        self.start(w) + self.width
    }

    /// `e ∈ E_w`.
    fn during(&self, i: usize, w: i64) -> bool {
        self.start(w) <= self.t(i) && self.t(i) < self.end(w)
    }

    /// `e ≤ w`: before or during.
    fn by(&self, i: usize, w: i64) -> bool {
        self.t(i) < self.end(w)
    }

    /// `next(e) ≥ w`: during or after.
    fn next_from(&self, i: usize, w: i64) -> bool {
        self.next[i].is_some_and(|n| self.t(n) >= self.start(w))
    }

    fn act(&self, i: usize) -> &str {
        &self.recs[i].activity
    }

    fn res(&self, i: usize) -> Option<&str> {
        self.recs[i].resource.as_deref()
    }

    fn next_act(&self, i: usize) -> Option<&str> {
        self.next[i].map(|n| self.act(n))
    }

    fn prev_act(&self, i: usize) -> Option<&str> {
        self.prev[i].map(|p| self.act(p))
    }

    fn next_res(&self, i: usize) -> Option<&str> {
        self.next[i].and_then(|n| self.res(n))
    }

    /// Windows from the earliest to the latest event.
    pub fn windows(&self) -> std::ops::RangeInclusive<i64> {
        let ws: Vec<i64> = (0..self.recs.len())
            .map(|i| {
                let mut w = 0;
                while self.t(i) < self.start(w) {
                    w -= 1;
                }
                while self.t(i) >= self.end(w) {
                    w += 1;
                }
                w
            })
            .collect();
        *ws.iter().min().unwrap()..=*ws.iter().max().unwrap()
    }

    pub fn components(&self) -> Vec<Comp> {
        let mut out: BTreeSet<Comp> = BTreeSet::new();
        for i in 0..self.recs.len() {
            out.insert(Comp::Activity(self.act(i).to_string()));
            if let Some(r) = self.res(i) {
                out.insert(Comp::Resource(r.to_string()));
            }
            if let Some(b) = self.next_act(i) {
                out.insert(Comp::Segment(self.act(i).to_string(), b.to_string()));
            }
        }
        out.into_iter().collect()
    }

    /// Event set (record indexes, ascending) and value of an aspect.
    pub fn eval(&self, aspect: &str, c: &Comp, w: i64) -> (Vec<usize>, Option<f64>) {
        let all = 0..self.recs.len();
        let set: Vec<usize> = match (aspect, c) {
            ("exec", Comp::Activity(a)) => all
                .filter(|&e| self.during(e, w) && self.act(e) == a)
                .collect(),
            ("enqueue", Comp::Activity(a)) => all
                .filter(|&e| self.during(e, w) && self.next_act(e) == Some(a.as_str()))
                .collect(),
            ("queue", Comp::Activity(a)) => all
                .filter(|&e| {
                    self.by(e, w) && self.next_from(e, w) && self.next_act(e) == Some(a.as_str())
                })
                .collect(),
            ("do", Comp::Resource(r)) => all
                .filter(|&e| self.during(e, w) && self.res(e) == Some(r.as_str()))
                .collect(),
            ("todo", Comp::Resource(r)) => all
                .filter(|&e| self.during(e, w) && self.next_res(e) == Some(r.as_str()))
                .collect(),
            ("workload", Comp::Resource(r)) => all
                .filter(|&e| {
                    self.by(e, w) && self.next_from(e, w) && self.next_res(e) == Some(r.as_str())
                })
                .collect(),
            ("enter" | "delayStart", Comp::Segment(a, b)) => all
                .filter(|&e| {
                    self.during(e, w) && self.act(e) == a && self.next_act(e) == Some(b.as_str())
                })
                .collect(),
            ("exit" | "handover" | "delayEnd", Comp::Segment(a, b)) => all
                .filter(|&e| {
                    self.during(e, w) && self.prev_act(e) == Some(a.as_str()) && self.act(e) == b
                })
                .collect(),
            ("cross" | "delayIn" | "delayNow", Comp::Segment(a, b)) => all
                .filter(|&e| {
                    self.by(e, w)
                        && self.next_from(e, w)
                        && self.act(e) == a
                        && self.next_act(e) == Some(b.as_str())
                })
                .collect(),
            _ => panic!("aspect {aspect} does not apply to {c:?}"),
        };
        let n = set.len();
        let mean_ms = |total: i64| (n > 0).then(|| total as f64 / n as f64 / 1000.0);
        let value = match aspect {
            "handover" => {
                let before: BTreeSet<&str> = set
                    .iter()
                    .filter_map(|&e| self.prev[e].and_then(|p| self.res(p)))
                    .collect();
                let now: BTreeSet<&str> = set.iter().filter_map(|&e| self.res(e)).collect();
                (!now.is_empty()).then(|| before.len() as f64 / now.len() as f64)
            }
            "delayStart" | "delayIn" => mean_ms(
                set.iter()
                    .map(|&e| self.t(self.next[e].unwrap()) - self.t(e))
                    .sum(),
            ),
            "delayEnd" => mean_ms(
                set.iter()
                    .map(|&e| self.t(e) - self.t(self.prev[e].unwrap()))
                    .sum(),
            ),
            "delayNow" => mean_ms(
                set.iter()
                    .map(|&e| {
                        let nx = self.next[e].unwrap();
                        if self.t(nx) < self.end(w) {
                            self.t(nx) - self.t(e)
                        } else {
                            self.end(w) - self.t(e)
                        }
                    })
                    .sum(),
            ),
            _ => Some(n as f64),
        };
        (set, value)
    }

    /// `|queue \ enqueue|` from the oracle's own sets.
    pub fn takeover(&self, a: &str, w: i64) -> usize {
        let c = Comp::Activity(a.to_string());
        let (q, _) = self.eval("queue", &c, w);
        let (en, _) = self.eval("enqueue", &c, w);
        q.iter().filter(|e| !en.contains(e)).count()
    }
}

pub const ASPECTS: [(&str, u8); 14] = [
    ("exec", 0),
    ("enqueue", 0),
    ("queue", 0),
    ("do", 1),
    ("todo", 1),
    ("workload", 1),
    ("enter", 2),
    ("exit", 2),
    ("cross", 2),
    ("handover", 2),
    ("delayStart", 2),
    ("delayEnd", 2),
    ("delayIn", 2),
    ("delayNow", 2),
];

pub fn applies(aspect_level: u8, c: &Comp) -> bool {
    matches!(
        (aspect_level, c),
        (0, Comp::Activity(_)) | (1, Comp::Resource(_)) | (2, Comp::Segment(..))
    )
}

/// A random log with at most `max_events` events, shuffled rows and frequent
/// timestamp ties. Timestamps are whole seconds.
pub fn random_records(
    rng: &mut ChaCha8Rng,
    max_events: usize,
    max_acts: usize,
    max_res: usize,
) -> Vec<RawEvent> {
    let n_acts = rng.random_range(1..=max_acts);
    let n_res = rng.random_range(1..=max_res);
    let target = rng.random_range(1..=max_events);
    let mut recs = Vec::new();
    let mut case = 0;
    while recs.len() < target {
        let len = rng.random_range(1..=8).min(target - recs.len());
        let mut t = rng.random_range(0..600i64);
        for _ in 0..len {
            let a = format!("a{}", rng.random_range(0..n_acts));
            let r = format!("r{}", rng.random_range(0..n_res));
            recs.push(RawEvent::new(
                &format!("c{case}"),
                &a,
                Timestamp::from_secs(t),
                Some(&r),
            ));
            t += rng.random_range(0..120);
        }
        case += 1;
    }
    recs.shuffle(rng);
    recs
}

/// Groups of `0..n` under the reflexive, symmetric, transitive closure of
/// `edges`, each group ascending, groups ordered by smallest member.
#[allow(clippy::needless_range_loop)]
pub fn closure_groups(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in edges {
        reach[a][b] = true;
        reach[b][a] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for i in 0..n {
        if !seen[i] {
            let g: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
            for &j in &g {
                seen[j] = true;
            }
            groups.push(g);
        }
    }
    groups
}

/// `Γ(a)` for integer and half-integer `a > 0`, by the recurrence.
fn gamma_half_integer(a: f64) -> f64 {
    let (mut g, mut x) = if (a - a.round()).abs() < 1e-12 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while x < a - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Chi-squared upper tail for small degrees of freedom from the power series
/// of the lower incomplete gamma, `γ(a, x) = x^a e^{-x} Σ x^k / (a (a+1) … (a+k))`.
pub fn chi2_sf_series(chi2: f64, dof: usize) -> f64 {
    let a = dof as f64 / 2.0;
    let x = chi2 / 2.0;
    if x <= 0.0 {
        return 1.0;
    }
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut k = 0.0;
    while term > sum * 1e-17 {
        k += 1.0;
        term *= x / (a + k);
        sum += term;
    }
    let lower = (a * x.ln() - x).exp() * sum / gamma_half_integer(a);
    1.0 - lower
}
