mod support {
    pub mod oracle;
}

use hlevent_core::robustness::QueueProfile;
use hlevent_core::{
    make_framing, AspectCategory, AspectEngine, AspectKind, ComponentId, Duration, EventLog,
    Timestamp,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracle::{applies, random_records, Comp, Oracle, ASPECTS};

fn component(log: &EventLog, c: &Comp) -> ComponentId {
    match c {
        Comp::Activity(a) => ComponentId::Activity(log.activity_id(a).unwrap()),
        Comp::Resource(r) => ComponentId::Resource(log.resource_id(r).unwrap()),
        Comp::Segment(a, b) => {
            ComponentId::Segment(log.activity_id(a).unwrap(), log.activity_id(b).unwrap())
        }
    }
}

fn check_log(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recs = random_records(&mut rng, 80, 5, 3);
    let log = EventLog::from_records(recs.clone()).unwrap();
    let width = 45_000 + (seed as i64 % 7) * 10_000;
    let origin = -((seed as i64 % 5) * 3_000);
    let windows = make_framing(&log, Duration(width), Some(Timestamp(origin))).unwrap();
    let engine = AspectEngine::new(&log, &windows);
    let oracle = Oracle::new(&recs, origin, width);
    assert_eq!(oracle.windows(), windows.first()..=windows.last());
    let comps = oracle.components();
    assert_eq!(comps.len(), log.components().len());
    for (name, level) in ASPECTS {
        let kind: AspectKind = name.parse().unwrap();
        for c in comps.iter().filter(|c| applies(level, c)) {
            let id = component(&log, c);
            let series = engine.series(kind, id).unwrap();
            for (ev, w) in series.iter().zip(oracle.windows()) {
                let (set, value) = oracle.eval(name, c, w);
                let got: Vec<usize> = ev.event_set.iter().map(|e| e.index()).collect();
                assert_eq!(got, set, "seed {seed} {name} {c:?} w{w}");
                assert_eq!(ev.value, value, "seed {seed} {name} {c:?} w{w}");
            }
        }
    }
}

#[test]
fn engine_matches_oracle() {
    for seed in 0..25 {
        check_log(seed);
    }
}

#[test]
fn navigation_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let recs = random_records(&mut rng, 150, 6, 4);
    let log = EventLog::from_records(recs.clone()).unwrap();
    let oracle = Oracle::new(&recs, 0, 1000);
    for e in log.events() {
        assert_eq!(log.next(e.id).map(|n| n.index()), oracle.next(e.id.index()));
        assert_eq!(log.prev(e.id).map(|n| n.index()), oracle.prev(e.id.index()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn action_sets_are_disjoint_across_windows(seed in any::<u64>(), width in 10_000i64..200_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = EventLog::from_records(random_records(&mut rng, 120, 6, 4)).unwrap();
        let windows = make_framing(&log, Duration(width), None).unwrap();
        let engine = AspectEngine::new(&log, &windows);
        for kind in AspectKind::ALL.into_iter().filter(|k| k.category() == AspectCategory::Action) {
            for c in engine.components_for(kind) {
                let mut seen = vec![false; log.len()];
                for ev in engine.series(kind, c).unwrap() {
                    for e in ev.event_set {
                        prop_assert!(!seen[e.index()], "{kind} {c:?}");
                        seen[e.index()] = true;
                    }
                }
            }
        }
    }

    #[test]
    fn takeover_plus_enqueue_is_queue(seed in any::<u64>(), width in 10_000i64..200_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = EventLog::from_records(random_records(&mut rng, 120, 6, 4)).unwrap();
        let windows = make_framing(&log, Duration(width), None).unwrap();
        let engine = AspectEngine::new(&log, &windows);
        for a in log.activities() {
            let p = QueueProfile::new(&engine, a);
            for w in p.windows() {
                prop_assert_eq!(p.takeover(w) + p.enqueue_len(w), p.queue_len(w));
            }
        }
    }

    #[test]
    fn counts_equal_set_sizes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = EventLog::from_records(random_records(&mut rng, 60, 4, 3)).unwrap();
        let windows = make_framing(&log, Duration(30_000), None).unwrap();
        let engine = AspectEngine::new(&log, &windows);
        for kind in AspectKind::ALL.into_iter().filter(|k| k.is_count()) {
            for c in engine.components_for(kind) {
                for ev in engine.series(kind, c).unwrap() {
                    prop_assert_eq!(ev.value, Some(ev.event_set.len() as f64));
                }
            }
        }
    }
}
