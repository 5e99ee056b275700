use std::collections::{HashSet, VecDeque};

use bba_core::equiv::{equivalent, Relation};
use bba_core::explore::{deadlocks, generate, Limits};
use bba_core::kernel::{GlobalState, ProcessNetwork, Role};
use bba_core::lts::{Lts, Pid, Value};
use bba_core::model::{build_network, node_component, Config, Style};

fn pid(i: u32) -> Pid {
    Pid::new(i).unwrap()
}

fn counts(net: &ProcessNetwork, s: &GlobalState, i: usize) -> (Value, Value) {
    let vals = net.valuation(s, i);
    let get = |name: &str| {
        vals.iter()
            .find(|(v, _)| &**v == name)
            .map(|(_, x)| x.clone())
            .unwrap()
    };
    (get("K0"), get("K1"))
}

/// Walks the reachable global states. Votes reach the own counter and the
/// other counters in two events, and each TALLY resets one counter, so
/// agreement is checked where it matters: every counter holds the same
/// totals once the END barrier has passed, and all TALLY events of a phase
/// report the same totals, with k0 + k1 ≤ n.
fn check_tally_agreement(cfg: &Config) -> usize {
    let net = build_network(cfg).unwrap();
    let counters: Vec<usize> = net
        .instances()
        .iter()
        .enumerate()
        .filter(|(_, x)| matches!(x.role, Role::Counter(_)))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(counters.len(), usize::from(cfg.n));
    let init = net.initial_state().unwrap();
    // the totals reported by the first TALLY of the current phase
    let mut seen: HashSet<(GlobalState, Option<(i64, i64)>)> =
        HashSet::from([(init.clone(), None)]);
    let mut queue = VecDeque::from([(init, None)]);
    let mut states = HashSet::new();
    while let Some((s, phase)) = queue.pop_front() {
        states.insert(s.clone());
        for (label, next) in net.successors(&s).unwrap() {
            let mut phase_next = phase;
            match (label.gate(), label.to_string().as_str()) {
                (_, "SYNC !END") => {
                    let first = counts(&net, &next, counters[0]);
                    for &c in &counters[1..] {
                        assert_eq!(
                            counts(&net, &next, c),
                            first,
                            "counters disagree after the barrier"
                        );
                    }
                }
                (_, "SYNC !BEGIN") => phase_next = None,
                (Some("TALLY"), _) => {
                    let k = |i: usize| label.offers()[i].as_int().unwrap();
                    let totals = (k(1), k(2));
                    assert!(totals.0 + totals.1 <= i64::from(cfg.n));
                    assert_eq!(
                        *phase_next.get_or_insert(totals),
                        totals,
                        "tallies of one phase differ"
                    );
                }
                _ => {}
            }
            if seen.insert((next.clone(), phase_next)) {
                queue.push_back((next, phase_next));
            }
        }
    }
    states.len()
}

#[test]
fn counters_agree_at_every_tally() {
    for (n, h, t) in [(2, 2, 2), (3, 1, 2), (4, 4, 3), (4, 2, 3)] {
        let cfg = Config::new(n, h, t).unwrap();
        let states = check_tally_agreement(&cfg);
        let l = generate(&build_network(&cfg).unwrap(), Limits::default()).unwrap();
        assert_eq!(states, l.states());
    }
}

#[test]
fn counters_start_empty() {
    let net = build_network(&Config::default()).unwrap();
    let s = net.initial_state().unwrap();
    assert_eq!(s.len(), 8);
    for (i, inst) in net.instances().iter().enumerate() {
        if matches!(inst.role, Role::Counter(_)) {
            assert_eq!(counts(&net, &s, i), (Value::Count(0), Value::Count(0)));
        }
    }
}

fn successors_of(l: &Lts, s: usize) -> Vec<(String, usize)> {
    l.outgoing(s)
        .iter()
        .map(|t| (l.label(t.label).to_string(), t.dst))
        .collect()
}

#[test]
fn honest_node_opens_a_round_with_a_coin() {
    for style in [Style::Loop, Style::Recursive] {
        let cfg = Config::default().with_style(style);
        let l = generate(&node_component(&cfg, pid(1)).unwrap(), Limits::default()).unwrap();
        let first = successors_of(&l, 0);
        let texts: Vec<&str> = first.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(
            texts,
            ["RECEIVE_BLOCK_PROPOSAL !0", "RECEIVE_BLOCK_PROPOSAL !1"]
        );
        for (_, s) in first {
            let coin = successors_of(&l, s);
            let texts: Vec<&str> = coin.iter().map(|(t, _)| t.as_str()).collect();
            assert_eq!(texts, ["P_ONE !1 !0.2576", "P_ZERO !1 !0.7424"]);
            for (c, d) in coin {
                let bit = if c.starts_with("P_ZERO") { 0 } else { 1 };
                let next: Vec<String> = successors_of(&l, d).into_iter().map(|(t, _)| t).collect();
                assert_eq!(next, [format!("SET_BIT !1 !0 !{bit}")]);
            }
        }
        assert!(deadlocks(&l).is_empty());
    }
}

/// Labels reachable from `from` without crossing a new block proposal.
fn round_alphabet(l: &Lts, from: usize) -> HashSet<String> {
    let mut seen = HashSet::from([from]);
    let mut queue = VecDeque::from([from]);
    let mut labels = HashSet::new();
    while let Some(s) = queue.pop_front() {
        for t in l.outgoing(s) {
            let text = l.label(t.label).to_string();
            if text.starts_with("RECEIVE_BLOCK_PROPOSAL") {
                continue;
            }
            labels.insert(text);
            if seen.insert(t.dst) {
                queue.push_back(t.dst);
            }
        }
    }
    labels
}

#[test]
fn attacking_node_fixes_every_bit_to_one() {
    let cfg = Config::new(4, 0, 3).unwrap();
    let l = generate(&node_component(&cfg, pid(1)).unwrap(), Limits::default()).unwrap();
    let after = |blk: &str| {
        let (_, s) = successors_of(&l, 0)
            .into_iter()
            .find(|(t, _)| t.ends_with(blk))
            .unwrap();
        round_alphabet(&l, s)
    };
    let attacking = after("!1");
    assert!(
        attacking
            .iter()
            .all(|t| !t.starts_with("P_ZERO") && !t.starts_with("P_ONE")),
        "{attacking:?}"
    );
    let set_bits: Vec<&String> = attacking
        .iter()
        .filter(|t| t.starts_with("SET_BIT"))
        .collect();
    assert!(!set_bits.is_empty());
    assert!(set_bits.iter().all(|t| t.ends_with("!1")));
    assert!(attacking
        .iter()
        .filter(|t| t.starts_with("SELF_PROPAGATE"))
        .all(|t| t.ends_with("!1")));
    // in a round on a block with bit 0 the same node behaves honestly
    let disguised = after("!0");
    assert!(disguised.iter().any(|t| t.starts_with("P_ZERO")));
    assert!(disguised.contains("SET_BIT !1 !0 !0"));
}

#[test]
fn styles_are_strongly_bisimilar_on_small_networks() {
    for (n, h, t) in [(1, 1, 1), (1, 0, 1), (2, 1, 1), (2, 2, 2), (3, 1, 2)] {
        let gen = |style| {
            let cfg = Config::new(n, h, t).unwrap().with_style(style);
            generate(&build_network(&cfg).unwrap(), Limits::default()).unwrap()
        };
        let (rec, lp) = (gen(Style::Recursive), gen(Style::Loop));
        assert!(
            equivalent(&rec, &lp, Relation::Strong).equal,
            "({n},{h},{t})"
        );
    }
}

#[test]
fn networks_are_deadlock_free() {
    for n in 1..=3u8 {
        for h in 0..=n {
            for t in 1..=n {
                let cfg = Config::new(n, h, t).unwrap();
                let l = generate(&build_network(&cfg).unwrap(), Limits::default()).unwrap();
                assert!(deadlocks(&l).is_empty(), "({n},{h},{t})");
            }
        }
    }
}
