use std::collections::{BTreeSet, HashMap, VecDeque};

use bba_core::equiv::{equivalent, Relation};
use bba_core::explore::{deadlocks, generate, product, trace_to, ExploreError, Limits};
use bba_core::lts::Pid;
use bba_core::lts::{normalize, parse_label, write_aut, Lts};
use bba_core::model::{build_network, counter_component, node_component, Config};
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

fn pid(i: u32) -> Pid {
    Pid::new(i).unwrap()
}

/// Reachable (K0, K1) pairs of a lone counter and its transition count,
/// following the counter's rules directly.
fn counter_oracle(n: u8, others: usize) -> (usize, usize) {
    let mut seen: HashMap<(u8, u8), ()> = HashMap::new();
    let mut queue = VecDeque::from([(0u8, 0u8)]);
    seen.insert((0, 0), ());
    let mut transitions = 0;
    while let Some((k0, k1)) = queue.pop_front() {
        let mut next = vec![(0, 0)];
        if k0 + k1 < n {
            // own vote, then each other node's vote, for both bits
            for _ in 0..=others {
                next.push((k0 + 1, k1));
                next.push((k0, k1 + 1));
            }
        }
        transitions += next.len();
        for s in next {
            if seen.insert(s, ()).is_none() {
                queue.push_back(s);
            }
        }
    }
    (seen.len(), transitions)
}

#[test]
fn lone_counter_matches_enumeration() {
    for n in 1..=4u8 {
        let cfg = Config::new(n, n, Config::default_threshold(n)).unwrap();
        let l = generate(&counter_component(&cfg, pid(1)).unwrap(), Limits::default()).unwrap();
        let (states, transitions) = counter_oracle(n, usize::from(n) - 1);
        assert_eq!(
            (l.states(), l.transitions().len()),
            (states, transitions),
            "n = {n}"
        );
        assert!(deadlocks(&l).is_empty());
    }
    assert_eq!(counter_oracle(4, 3).0, 15);
}

#[test]
fn deadlocks_and_traces() {
    let sync = lts(2, &[(0, "SYNC !BEGIN", 1), (1, "SYNC !END", 0)]);
    assert!(deadlocks(&sync).is_empty());
    let chain = lts(3, &[(0, "a", 1), (1, "b", 2)]);
    let d = deadlocks(&chain);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].0, 2);
    assert_eq!(d[0].1.texts(), ["a", "b"]);
    assert!(trace_to(&chain, 0).unwrap().is_empty());
    assert_eq!(trace_to(&chain, 2).unwrap().to_string(), "a; b");
    assert!(matches!(
        trace_to(&chain, 3),
        Err(ExploreError::Unreachable { target: 3 })
    ));
    let unreachable = Lts::new(2, 0, []).unwrap();
    assert!(matches!(
        trace_to(&unreachable, 1),
        Err(ExploreError::Unreachable { .. })
    ));
}

fn bfs_depths(l: &Lts) -> Vec<usize> {
    let mut depth = vec![usize::MAX; l.states()];
    depth[l.initial()] = 0;
    let mut queue = VecDeque::from([l.initial()]);
    while let Some(s) = queue.pop_front() {
        for t in l.outgoing(s) {
            if depth[t.dst] == usize::MAX {
                depth[t.dst] = depth[s] + 1;
                queue.push_back(t.dst);
            }
        }
    }
    depth
}

fn random_lts(rng: &mut ChaCha8Rng, n: usize, alphabet: &[&str]) -> Lts {
    let m = rng.gen_range(0..=2 * n);
    let ts: Vec<_> = (0..m)
        .map(|_| {
            (
                rng.gen_range(0..n),
                parse_label(alphabet[rng.gen_range(0..alphabet.len())]).unwrap(),
                rng.gen_range(0..n),
            )
        })
        .collect();
    normalize(&Lts::new(n, 0, ts).unwrap())
}

#[test]
fn traces_are_shortest_and_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.gen_range(1..=10);
        let l = random_lts(&mut rng, n, &["a", "b", "c"]);
        let depth = bfs_depths(&l);
        for (s, &d) in depth.iter().enumerate() {
            let t = trace_to(&l, s).unwrap();
            assert_eq!(t.len(), d);
            assert!(t.replays(&l));
        }
        for (s, t) in deadlocks(&l) {
            assert!(l.is_deadlock(s));
            assert!(t.replays(&l));
        }
    }
}

#[test]
fn product_examples() {
    let a = lts(1, &[(0, "a", 0)]);
    let b = lts(1, &[(0, "b", 0)]);
    let none: [&str; 0] = [];
    let ab = product(&a, &b, &none);
    assert_eq!((ab.states(), ab.transitions().len()), (1, 2));
    let aa = product(&a, &a, &["a"]);
    assert_eq!((aa.states(), aa.transitions().len()), (1, 1));
    // synchronized labels must agree on every offer
    let p0 = lts(2, &[(0, "SYNC !BEGIN", 1)]);
    let p1 = lts(2, &[(0, "SYNC !END", 1)]);
    let blocked = product(&p0, &p1, &["SYNC"]);
    assert_eq!((blocked.states(), blocked.transitions().len()), (1, 0));
}

#[test]
fn product_is_commutative_and_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let alphabet = ["a", "b", "c", "d"];
    for _ in 0..100 {
        let [x, y, z] = [0, 1, 2].map(|_| {
            let n = rng.gen_range(1..=4);
            random_lts(&mut rng, n, &alphabet)
        });
        let sync: Vec<&str> = alphabet
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let xy = product(&x, &y, &sync);
        let yx = product(&y, &x, &sync);
        assert!(equivalent(&xy, &yx, Relation::Strong).equal);
        assert_eq!(
            (xy.states(), xy.transitions().len()),
            (yx.states(), yx.transitions().len())
        );
        let left = product(&xy, &z, &sync);
        let right = product(&x, &product(&y, &z, &sync), &sync);
        assert!(equivalent(&left, &right, Relation::Strong).equal);
        assert_eq!(
            (left.states(), left.transitions().len()),
            (right.states(), right.transitions().len())
        );
    }
}

#[test]
fn compositional_generation_of_one_node() {
    let cfg = Config::new(1, 1, 1).unwrap();
    let whole = generate(&build_network(&cfg).unwrap(), Limits::default()).unwrap();
    let node = generate(&node_component(&cfg, pid(1)).unwrap(), Limits::default()).unwrap();
    let counter = generate(&counter_component(&cfg, pid(1)).unwrap(), Limits::default()).unwrap();
    let composed = product(&node, &counter, &["SELF_PROPAGATE", "TALLY"]);
    let v = equivalent(&composed, &whole, Relation::Strong);
    assert!(v.equal, "{v:?}");
    assert!(node.states() < whole.states() * 4);
}

#[test]
fn worker_count_does_not_change_output() {
    let cfg = Config::new(3, 2, 2).unwrap();
    let net = build_network(&cfg).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| write_aut(&generate(&net, Limits::default()).unwrap()))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn limits_report_the_frontier() {
    let cfg = Config::new(3, 3, 2).unwrap();
    let net = build_network(&cfg).unwrap();
    match generate(
        &net,
        Limits {
            max_states: 50,
            max_seconds: 60,
        },
    ) {
        Err(ExploreError::StateLimit { limit, at }) => {
            assert_eq!(limit, 50);
            assert!(at.states > 50 && at.depth > 0 && at.frontier > 0);
        }
        other => panic!("expected a state limit error, got {other:?}"),
    }
}

#[test]
fn generated_labels_use_the_model_alphabet() {
    let cfg = Config::new(2, 1, 2).unwrap();
    let l = generate(&build_network(&cfg).unwrap(), Limits::default()).unwrap();
    let gates: BTreeSet<&str> = l.labels().iter().filter_map(|x| x.gate()).collect();
    for g in &gates {
        assert!(bba_core::lts::gates::MODEL_ALPHABET.contains(g), "{g}");
    }
    assert_eq!(gates.len(), 12);
    assert!(l.tau_label().is_none());
}
