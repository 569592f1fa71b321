//! Randomized and exhaustive properties of the checker, shared by the
//! `properties` and `acceptance` targets. Every proptest runs from a fixed
//! seed so failures reproduce.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

use xdi_check::checker::oracle::{default_bound, TraceOracle};
use xdi_check::circuit::{derive_deadlock_formula, find_deadlock, parse_netlist, Netlist};
use xdi_check::equations::eval_condition;
use xdi_check::formula::Expr;
use xdi_check::labeling::{check_unambiguous, compute_block_idle};
use xdi_check::library::{self, builtin_library};
use xdi_check::xdi::{Direction, StateEntry, StateKind, Transition};
use xdi_check::{
    parse_condition, parse_machine, reasonable_envs, verify_condition, Atom, Checker, Condition,
    Environment, Mode, Phase, Wire, WireKey, XdiMachine,
};

const SEED: u64 = 0x5EED_C11C;

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: None,
        ..Config::default()
    }
}

const HANDSHAKES: [&str; 3] = ["a", "b", "c"];

fn wire_key(k: usize) -> (&'static str, Phase) {
    let phase = if k.is_multiple_of(2) { Phase::Request } else { Phase::Ack };
    (HANDSHAKES[k / 2], phase)
}

/// Random machines with up to 6 states over handshakes a, b, c. Each wire
/// has one direction per machine, so machines are free of direction
/// conflicts; `s0` is the only initial state.
fn arb_machine() -> impl Strategy<Value = XdiMachine> {
    (1usize..=6, prop::collection::vec(any::<bool>(), 6)).prop_flat_map(|(n, inputs)| {
        let state = (any::<bool>(), prop::collection::vec((0..6usize, 0..n), 0..=3));
        prop::collection::vec(state, n).prop_map(move |states| {
            let entries = states
                .into_iter()
                .enumerate()
                .map(|(i, (transient, edges))| StateEntry {
                    id: format!("s{i}"),
                    init: i == 0,
                    kind: if transient { StateKind::Transient } else { StateKind::Box },
                    transitions: edges
                        .into_iter()
                        .map(|(k, t)| {
                            let (h, phase) = wire_key(k);
                            let dir = if inputs[k] { Direction::Input } else { Direction::Output };
                            Transition {
                                wire: Wire::new(h, phase, dir),
                                target: format!("s{t}"),
                            }
                        })
                        .collect(),
                })
                .collect();
            XdiMachine::new("m", entries)
        })
    })
}

/// A machine together with a random environment over its input wires.
fn arb_machine_env() -> impl Strategy<Value = (XdiMachine, Environment)> {
    arb_machine().prop_flat_map(|m| {
        let wires: Vec<WireKey> = m.input_wires().into_iter().collect();
        let n = wires.len();
        prop::collection::vec(any::<bool>(), n).prop_map(move |pick| {
            let env = wires
                .iter()
                .zip(&pick)
                .filter(|(_, &p)| p)
                .map(|(w, _)| w.clone())
                .collect();
            (m.clone(), env)
        })
    })
}

/// Every simple path from the initial state, with its parity on `h`.
fn simple_paths(m: &XdiMachine, h: &str) -> Vec<(Vec<usize>, bool)> {
    fn go(m: &XdiMachine, h: &str, path: &mut Vec<usize>, odd: bool, out: &mut Vec<(Vec<usize>, bool)>) {
        out.push((path.clone(), odd));
        let s = *path.last().unwrap();
        for (w, t) in m.edges(s) {
            if !path.contains(&t) {
                path.push(t);
                go(m, h, path, odd ^ (w.handshake == h), out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(m, h, &mut vec![m.initial().unwrap()], false, &mut out);
    out
}

fn assert_parity_sound(m: &XdiMachine, h: &str) -> Result<(), TestCaseError> {
    let report = check_unambiguous(m, h).unwrap();
    let transient_ok = report.transient_conflicts.is_empty();
    if report.ambiguous {
        // Both witness paths are real paths from the initial state to the
        // conflicting state, and can be walked with the claimed parity.
        for w in &report.witnesses {
            for (path, odd) in [(&w.idling_path, false), (&w.blocking_path, true)] {
                let ixs: Vec<usize> = path.iter().map(|s| m.state_ix(s).unwrap()).collect();
                prop_assert_eq!(ixs.first(), Some(&m.initial().unwrap()));
                prop_assert_eq!(ixs.last().unwrap(), &m.state_ix(&w.state).unwrap());
                let mut parities = BTreeSet::from([false]);
                for pair in ixs.windows(2) {
                    let flips: BTreeSet<bool> = m
                        .edges(pair[0])
                        .filter(|(_, t)| *t == pair[1])
                        .map(|(w, _)| w.handshake == h)
                        .collect();
                    prop_assert!(!flips.is_empty());
                    parities = parities
                        .iter()
                        .flat_map(|p| flips.iter().map(move |f| p ^ f))
                        .collect();
                }
                prop_assert!(parities.contains(&odd));
            }
        }
        return Ok(());
    }
    let labels = compute_block_idle(m, h).unwrap();
    for (path, odd) in simple_paths(m, h) {
        let end = *path.last().unwrap();
        if m.is_transient(end) && !transient_ok {
            continue;
        }
        prop_assert_eq!(
            labels.is_blocking(end),
            odd,
            "{} on {}: path {:?}",
            h,
            m.name(),
            path
        );
    }
    Ok(())
}

fn parity_soundness_on_library() {
    for spec in builtin_library() {
        for h in spec.machine.handshakes() {
            assert_parity_sound(&spec.machine, h).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(config(512))]

    fn parity_soundness_on_random_machines(m in arb_machine()) {
        for h in m.handshakes() {
            assert_parity_sound(&m, h)?;
        }
    }

    fn step_is_antitone_in_the_environment((m, big) in arb_machine_env(), mask in any::<u8>()) {
        let small: Environment = big
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> (i % 8) & 1 == 1)
            .map(|(_, w)| w.clone())
            .collect();
        prop_assert!(small.is_subset(&big));
        for s in m.states() {
            let more = m.step(&s.id, &small).unwrap();
            let fewer = m.step(&s.id, &big).unwrap();
            prop_assert!(fewer.is_subset(&more), "{}: {:?} vs {:?}", s.id, fewer, more);
        }
    }

    fn traces_are_prefix_closed(
        (m, env) in arb_machine_env(),
        walk in prop::collection::vec(any::<prop::sample::Index>(), 0..12),
        junk in prop::collection::vec(0usize..6, 0..6),
    ) {
        // A random walk is a trace; so is each of its prefixes.
        let mut ixs = vec![m.initial().unwrap()];
        for pick in &walk {
            let succ = m.successors(*ixs.last().unwrap(), &env);
            if succ.is_empty() {
                break;
            }
            ixs.push(succ[pick.index(succ.len())]);
        }
        let ids: Vec<String> = ixs.iter().map(|&i| m.state(i).id.clone()).collect();
        prop_assert!(m.is_trace(&xdi_check::Trace::new(ids.clone()), &env).unwrap());
        for k in 1..=ids.len() {
            prop_assert!(m.is_trace(&xdi_check::Trace::new(ids[..k].to_vec()), &env).unwrap());
        }
        // Arbitrary sequences: trace-ness is inherited by prefixes.
        let seq: Vec<usize> = junk.into_iter().filter(|&i| i < m.len()).collect();
        if m.is_trace_ix(&seq, &env) {
            for k in 0..=seq.len() {
                prop_assert!(m.is_trace_ix(&seq[..k], &env));
            }
        }
    }

    fn machine_text_round_trips(m in arb_machine()) {
        let text = m.to_string();
        prop_assert_eq!(parse_machine(&text).unwrap(), m);
    }
}

fn arb_condition() -> impl Strategy<Value = Condition> {
    let leaf = (0..3usize, any::<bool>()).prop_map(|(h, blocked)| {
        let h = HANDSHAKES[h].to_string();
        Expr::Atom(if blocked { Atom::Blocked(h) } else { Atom::Idle(h) })
    });
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::or(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::implies(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Expr::iff(l, r)),
        ]
    })
}

/// Negation normal form over `!`, `&`, `|` via de Morgan's laws.
fn nnf(e: &Condition, negate: bool) -> Condition {
    match e {
        Expr::Const(b) => Expr::Const(*b ^ negate),
        Expr::Atom(_) if negate => Expr::not(e.clone()),
        Expr::Atom(_) => e.clone(),
        Expr::Not(x) => nnf(x, !negate),
        Expr::And(l, r) if negate => Expr::or(nnf(l, true), nnf(r, true)),
        Expr::And(l, r) => Expr::and(nnf(l, false), nnf(r, false)),
        Expr::Or(l, r) if negate => Expr::and(nnf(l, true), nnf(r, true)),
        Expr::Or(l, r) => Expr::or(nnf(l, false), nnf(r, false)),
        Expr::Implies(l, r) => nnf(&Expr::or(Expr::not((**l).clone()), (**r).clone()), negate),
        Expr::Iff(l, r) => nnf(
            &Expr::or(
                Expr::and((**l).clone(), (**r).clone()),
                Expr::and(Expr::not((**l).clone()), Expr::not((**r).clone())),
            ),
            negate,
        ),
    }
}

/// Replaces every `x <-> y` by `(x -> y) & (y -> x)`.
fn split_iff(e: &Condition) -> Condition {
    match e {
        Expr::Const(_) | Expr::Atom(_) => e.clone(),
        Expr::Not(x) => Expr::not(split_iff(x)),
        Expr::And(l, r) => Expr::and(split_iff(l), split_iff(r)),
        Expr::Or(l, r) => Expr::or(split_iff(l), split_iff(r)),
        Expr::Implies(l, r) => Expr::implies(split_iff(l), split_iff(r)),
        Expr::Iff(l, r) => {
            let (l, r) = (split_iff(l), split_iff(r));
            Expr::and(Expr::implies(l.clone(), r.clone()), Expr::implies(r, l))
        }
    }
}

proptest! {
    #![proptest_config(config(256))]

    fn rewrites_preserve_verdicts(c in arb_condition()) {
        let m = library::join_machine();
        let checker = Checker::new(&m);
        let forms = [nnf(&c, false), split_iff(&c), Expr::not(Expr::not(c.clone()))];
        for env in reasonable_envs(&m) {
            let want = eval_condition(&c, &checker, &env).unwrap();
            for f in &forms {
                prop_assert_eq!(eval_condition(f, &checker, &env).unwrap(), want, "{} vs {}", c, f);
            }
        }
        let v = verify_condition(&c, &m).unwrap();
        prop_assert_eq!(verify_condition(&nnf(&c, false), &m).unwrap().holds_overall, v.holds_overall);
    }

    fn condition_text_round_trips(c in arb_condition()) {
        prop_assert_eq!(parse_condition(&c.to_string()).unwrap(), c);
    }
}

/// Handshakes whose labels are well defined (the checker refuses the rest).
fn labelled_handshakes(m: &XdiMachine) -> Vec<String> {
    m.handshakes()
        .into_iter()
        .filter(|h| compute_block_idle(m, h).is_ok())
        .map(String::from)
        .collect()
}

proptest! {
    #![proptest_config(config(256))]

    fn checker_matches_trace_oracle(m in arb_machine()) {
        let checker = Checker::new(&m);
        let bound = default_bound(&m);
        for h in labelled_handshakes(&m) {
            for env in reasonable_envs(&m) {
                for mode in Mode::ALL {
                    let q0 = checker.query(&h, mode, &env, None).unwrap();
                    let oracle = TraceOracle::new(&checker, &q0, bound).unwrap();
                    let longer = TraceOracle::new(&checker, &q0, bound + 3).unwrap();
                    let labels = checker.labels(&h).unwrap();
                    for start in 0..m.len() {
                        let q = xdi_check::TemporalQuery { start, ..q0.clone() };
                        let g = checker.g_check(&q).unwrap();
                        let fg = checker.fg_check(&q).unwrap();
                        prop_assert_eq!(g.holds, oracle.g(start), "G {} {} {} s{}", h, mode, env, start);
                        prop_assert_eq!(fg.holds, oracle.fg(start), "FG {} {} {} s{}", h, mode, env, start);
                        // A longer bound changes nothing.
                        prop_assert_eq!(longer.g(start), oracle.g(start));
                        prop_assert_eq!(longer.fg(start), oracle.fg(start));
                        if g.holds {
                            // Reach completeness and evidence soundness.
                            let reach: BTreeSet<String> = m
                                .reachable(start, &env)
                                .into_iter()
                                .map(|i| m.state(i).id.clone())
                                .collect();
                            let visited: BTreeSet<String> = g.visited.iter().cloned().collect();
                            prop_assert_eq!(&visited, &reach);
                            for s in &g.visited {
                                let ix = m.state_ix(s).unwrap();
                                let ok = m.is_transient(ix)
                                    || match mode {
                                        Mode::Blocking => labels.is_blocking(ix),
                                        Mode::Idling => labels.is_idling(ix),
                                    };
                                prop_assert!(ok);
                            }
                        } else {
                            let cex = g.counterexample.unwrap();
                            prop_assert!(m.is_trace(&cex, &env).unwrap());
                        }
                    }
                }
            }
        }
    }
}

const CORPUS_NETLISTS: [&str; 7] = [
    include_str!("../data/pipeline.net"),
    include_str!("../data/pipeline_stalled.net"),
    include_str!("../data/fork_two_sinks.net"),
    include_str!("../data/join_two_sources.net"),
    include_str!("../data/join_one_source.net"),
    include_str!("../data/storage_ring.net"),
    include_str!("../data/fork_join_chain.net"),
];

fn corpus() -> Vec<Netlist> {
    CORPUS_NETLISTS
        .iter()
        .chain([xdi_check::circuit::FORK_JOIN, xdi_check::circuit::FORK_JOIN_STARVED].iter())
        .map(|t| parse_netlist(t).unwrap())
        .collect()
}

fn netlist_text_round_trips() {
    for n in corpus() {
        assert_eq!(parse_netlist(&n.to_string()).unwrap(), n, "{}", n.name);
    }
}

fn deadlock_formula_agrees_with_product_search() {
    for n in corpus() {
        let witness = find_deadlock(&n).unwrap();
        let sat: Vec<&str> = n
            .channels
            .iter()
            .filter(|c| {
                derive_deadlock_formula(&n, &c.name)
                    .unwrap()
                    .is_satisfiable()
                    .unwrap()
            })
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(
            witness.is_some(),
            !sat.is_empty(),
            "{}: witness {:?}, satisfiable for {:?}",
            n.name,
            witness.map(|w| w.kind),
            sat
        );
    }
}

fn corpus_machines_are_valid() {
    for spec in builtin_library() {
        assert!(spec.machine.validate().is_valid(), "{}", spec.name);
        let text = spec.machine.to_string();
        assert_eq!(parse_machine(&text).unwrap(), spec.machine);
    }
}

/// Every property, by name. Each panics on failure.
pub const PROPERTIES: &[(&str, fn())] = &[
    ("parity soundness on library machines", parity_soundness_on_library),
    ("parity soundness on random machines", parity_soundness_on_random_machines),
    ("step antitone in the environment", step_is_antitone_in_the_environment),
    ("trace prefix closure", traces_are_prefix_closed),
    ("machine text round trip", machine_text_round_trips),
    ("rewrite invariance of verdicts", rewrites_preserve_verdicts),
    ("condition text round trip", condition_text_round_trips),
    ("checker matches trace oracle", checker_matches_trace_oracle),
    ("netlist text round trip", netlist_text_round_trips),
    ("deadlock formula agrees with product search", deadlock_formula_agrees_with_product_search),
    ("library machines valid", corpus_machines_are_valid),
];
