use std::collections::HashSet;

use bba_core::check::*;
use bba_core::explore::deadlocks;
use bba_core::lts::{normalize, parse_label, stats, Lts};
use bba_core::model::{Config, Faults};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lts(states: usize, ts: &[(usize, &str, usize)]) -> Lts {
    Lts::new(
        states,
        0,
        ts.iter().map(|&(s, l, d)| (s, parse_label(l).unwrap(), d)),
    )
    .unwrap()
}

#[test]
fn references_are_normalized_and_deadlock_free() {
    let refs = [
        ref_sync(),
        ref_hypercube(1),
        ref_hypercube(3),
        ref_hypercube(4),
        ref_selfprop(1).unwrap(),
        ref_selfprop(3).unwrap(),
        ref_interface(false),
        ref_interface(true),
    ];
    for r in &refs {
        assert_eq!(&normalize(r), r);
        assert!(deadlocks(r).is_empty());
    }
    let s = stats(&ref_sync());
    assert_eq!(
        (
            s.states,
            s.transitions,
            s.distinct_visible_labels,
            s.tau_transitions,
            s.deadlock_states
        ),
        (2, 2, 2, 0, 0)
    );
    let h = stats(&ref_hypercube(4));
    assert_eq!((h.states, h.transitions), (15, 32));
    for corrupted in [false, true] {
        let i = ref_interface(corrupted);
        assert_eq!((i.states(), i.transitions().len()), (4, 6));
    }
}

#[test]
fn selfprop_component_shape() {
    let c = selfprop_component(1).unwrap();
    assert_eq!((c.states(), c.transitions().len()), (4, 4));
    assert!(c.tau_label().is_some());
    assert_eq!(deadlocks(&c).len(), 1);
    let r = ref_selfprop(2).unwrap();
    assert!(r.tau_label().is_some());
    assert!(r
        .labels()
        .iter()
        .any(|l| l.to_string() == "SELF_PROPAGATE !2 !X"));
}

#[test]
fn inevitable_examples() {
    let chain = lts(3, &[(0, "a", 1), (1, "b", 2)]);
    let none: [&str; 0] = [];
    assert_eq!(inevitable(&chain, &["a"], &none, &["b"]).unwrap(), None);
    let looping = lts(2, &[(0, "a", 1), (1, "c", 1)]);
    let cex = inevitable(&looping, &["a"], &none, &["b"])
        .unwrap()
        .unwrap();
    assert_eq!(cex.trigger.texts(), ["a"]);
    match cex.escape {
        Escape::Lasso { stem, cycle } => {
            assert!(stem.is_empty());
            assert_eq!(cycle.texts(), ["c"]);
        }
        other => panic!("expected a lasso, got {other:?}"),
    }
    let forbidden = lts(3, &[(0, "a", 1), (1, "y", 2), (2, "b", 0)]);
    let cex = inevitable(&forbidden, &["a"], &["y"], &["b"])
        .unwrap()
        .unwrap();
    assert!(matches!(cex.escape, Escape::Forbidden(t) if t.texts() == ["y"]));
    // a goal label that is also forbidden counts as the goal
    assert_eq!(
        inevitable(&forbidden, &["a"], &["y"], &["y"]).unwrap(),
        None
    );
    let dead = lts(2, &[(0, "a", 1)]);
    let cex = inevitable(&dead, &["a"], &none, &["b"]).unwrap().unwrap();
    assert!(matches!(cex.escape, Escape::Deadlock(t) if t.is_empty()));
    assert!(inevitable(&dead, &["("], &none, &["b"]).is_err());
}

/// Enumerates simple paths from `s`; a path fails when it dead-ends, hits a
/// forbidden label before the goal, or closes a cycle without the goal.
fn all_paths_reach(
    l: &Lts,
    s: usize,
    y: &HashSet<usize>,
    z: &HashSet<usize>,
    on_path: &mut Vec<bool>,
) -> bool {
    if l.is_deadlock(s) {
        return false;
    }
    on_path[s] = true;
    let ok = l.outgoing(s).iter().all(|t| {
        if z.contains(&t.label) {
            true
        } else if y.contains(&t.label) || on_path[t.dst] {
            false
        } else {
            all_paths_reach(l, t.dst, y, z, on_path)
        }
    });
    on_path[s] = false;
    ok
}

fn oracle(l: &Lts, x: &str, y: &str, z: &str) -> bool {
    let ids = |name: &str| -> HashSet<usize> {
        l.labels()
            .iter()
            .enumerate()
            .filter(|(_, lab)| lab.to_string() == name)
            .map(|(i, _)| i)
            .collect()
    };
    let (xs, ys, zs) = (ids(x), ids(y), ids(z));
    l.transitions()
        .iter()
        .filter(|t| xs.contains(&t.label))
        .all(|t| all_paths_reach(l, t.dst, &ys, &zs, &mut vec![false; l.states()]))
}

#[test]
fn inevitable_agrees_with_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut holds = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(0..=3 * n);
        let names = ["a", "b", "c", "y"];
        let ts: Vec<_> = (0..m)
            .map(|_| {
                (
                    rng.gen_range(0..n),
                    parse_label(names[rng.gen_range(0..4)]).unwrap(),
                    rng.gen_range(0..n),
                )
            })
            .collect();
        let l = normalize(&Lts::new(n, 0, ts).unwrap());
        let got = inevitable(&l, &["a"], &["y"], &["b"]).unwrap();
        let expected = oracle(&l, "a", "y", "b");
        assert_eq!(got.is_none(), expected, "{l:?}");
        holds += usize::from(expected);
        if let Some(cex) = got {
            assert!(cex.trigger.replays(&l));
            assert_eq!(cex.trigger.0.last().unwrap().to_string(), "a");
        }
    }
    assert!(holds > 20 && holds < 180, "{holds}");
}

#[test]
fn slices_of_a_small_configuration() {
    let cfg = Config::new(2, 2, 2).unwrap();
    let report = run_suite(&cfg);
    assert!(report.passed(), "{}", report.table());
    let ids: Vec<&str> = report.properties.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9.1.0", "P9.1.1", "P9.2.0", "P9.2.1",
            "STYLE-EQ"
        ]
    );
    assert_eq!(report.get("P4").unwrap().verdict, Outcome::Skipped);
    let again = run_suite(&cfg);
    let verdicts = |r: &PropertyReport| {
        r.properties
            .iter()
            .map(|p| (p.verdict, p.diagnostic.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(verdicts(&report), verdicts(&again));
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["properties"][0]["verdict"], "pass");
    assert_eq!(json["config"]["n"], 2);
}

#[test]
fn baselines_freeze_then_compare() {
    let dir = std::env::temp_dir().join(format!("bba-baselines-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let cfg = Config::new(2, 1, 2).unwrap();
    let mut opts = SuiteOptions {
        baselines: Some(dir.clone()),
        freeze: true,
        ..Default::default()
    };
    let first = run_suite_with(&cfg, &opts);
    assert_eq!(first.get("P6").unwrap().verdict, Outcome::Skipped);
    assert!(dir.join(baseline_name("P6", &cfg)).exists());
    opts.freeze = false;
    let second = run_suite_with(&cfg, &opts);
    for id in ["P4", "P6", "P7"] {
        assert_eq!(
            second.get(id).unwrap().verdict,
            Outcome::Pass,
            "{}",
            second.table()
        );
    }
    // a baseline from another configuration is a regression
    let other = Config::new(2, 2, 2).unwrap();
    std::fs::copy(
        dir.join(baseline_name("P7", &cfg)),
        dir.join(baseline_name("P7", &other)),
    )
    .unwrap();
    std::fs::copy(
        dir.join(baseline_name("P4", &cfg)),
        dir.join(baseline_name("P4", &other)),
    )
    .unwrap();
    let third = run_suite_with(&other, &opts);
    assert_eq!(
        third.get("P4").unwrap().verdict,
        Outcome::Fail,
        "{}",
        third.table()
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn faults_are_caught() {
    let cfg = Config::new(2, 2, 2).unwrap();
    let opts = SuiteOptions {
        faults: Faults {
            no_counter_reset: true,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = run_suite_with(&cfg, &opts);
    let p3 = r.get("P3").unwrap();
    assert_eq!(p3.verdict, Outcome::Fail);
    assert!(p3.diagnostic.is_some());
    let opts = SuiteOptions {
        faults: Faults {
            honest_votes_one: true,
            ..Default::default()
        },
        ..Default::default()
    };
    assert_eq!(
        run_suite_with(&cfg, &opts).get("P8").unwrap().verdict,
        Outcome::Fail
    );
}

#[test]
fn generation_limit_aborts_the_suite() {
    let cfg = Config::new(2, 2, 2).unwrap();
    let opts = SuiteOptions {
        limits: bba_core::explore::Limits {
            max_states: 10,
            max_seconds: 60,
        },
        ..Default::default()
    };
    let r = run_suite_with(&cfg, &opts);
    assert!(r.aborted.is_some());
    assert!(r.properties.is_empty());
    assert!(!r.passed());
}
