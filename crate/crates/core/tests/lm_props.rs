use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmshift::lm::context_graph;
use lmshift::{build_lm_graph, fixtures, Admg, ContextPattern, Error, LmGraph, NodeKind, ShiftSpec};

/// Random m-graph: substantive nodes in a random DAG, some of them missing
/// with an indicator (parents drawn from fully observed nodes and other
/// indicators) and a proxy, plus a random shift declaration.
fn random_lm(seed: u64) -> (Admg, ShiftSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..7);
    let names: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
    let missing: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let mut g = Admg::new();
    for (name, m) in names.iter().zip(&missing) {
        let kind = if *m { NodeKind::MissingAffected } else { NodeKind::Observed };
        g.add_node(name.as_str(), kind).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                g.add_directed(names[i].as_str(), names[j].as_str()).unwrap();
            }
            if rng.random_bool(0.1) {
                g.add_bidirected(names[i].as_str(), names[j].as_str()).unwrap();
            }
        }
    }
    let mut indicators = Vec::new();
    for i in (0..n).filter(|&i| missing[i]) {
        let r = format!("R_{}", names[i]);
        g.add_node(r.as_str(), NodeKind::Indicator { of: names[i].as_str().into() }).unwrap();
        g.add_node(format!("{}_obs", names[i]).as_str(), NodeKind::Proxy { of: names[i].as_str().into() }).unwrap();
        g.add_directed(names[i].as_str(), format!("{}_obs", names[i]).as_str()).unwrap();
        g.add_directed(r.as_str(), format!("{}_obs", names[i]).as_str()).unwrap();
        for j in (0..n).filter(|&j| !missing[j]) {
            if rng.random_bool(0.3) {
                g.add_directed(names[j].as_str(), r.as_str()).unwrap();
            }
        }
        for prev in &indicators {
            if rng.random_bool(0.3) {
                g.add_directed(prev as &str, r.as_str()).unwrap();
            }
        }
        indicators.push(r);
    }
    let mut spec = ShiftSpec::new();
    for i in (0..n).filter(|&i| missing[i]) {
        let kids: Vec<&str> = (i + 1..n)
            .filter(|&j| g.has_directed(&names[i], &names[j]) && rng.random_bool(0.6))
            .map(|j| names[j].as_str())
            .collect();
        if !kids.is_empty() {
            spec.insert(names[i].as_str(), kids);
        }
    }
    (g, spec)
}

fn patterns(lm: &LmGraph) -> Vec<ContextPattern> {
    let labeled: Vec<_> = lm
        .shift_indicators()
        .into_iter()
        .filter(|r| !lm.labels_of(r.as_str()).is_empty())
        .collect();
    ContextPattern::all_over(&labeled)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn build_invariants(seed in any::<u64>()) {
        let (base, spec) = random_lm(seed);
        match build_lm_graph(&base, &spec) {
            Ok(lm) => {
                prop_assert!(lm.graph().is_acyclic());
                prop_assert!(base.directed_edges().all(|(a, b)| lm.graph().has_directed(a.as_str(), b.as_str())));
                for (x, kids) in spec.iter() {
                    let r = base.indicator_of(x.as_str()).unwrap();
                    for z in kids {
                        prop_assert!(lm.graph().has_directed(r.as_str(), z.as_str()));
                        prop_assert_eq!(lm.is_labeled(x.as_str(), z.as_str()), !base.has_bidirected(x.as_str(), z.as_str()));
                    }
                }
                prop_assert!(lmshift::lm::check_regular_maximal(&lm));
                let round = LmGraph::from_json_str(&lm.to_json_string()).unwrap();
                prop_assert_eq!(round.graph(), lm.graph());
                prop_assert_eq!(round.labels(), lm.labels());
            }
            Err(Error::FeedbackRisk { .. }) | Err(Error::CycleDetected { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn context_graphs_are_monotone(seed in any::<u64>()) {
        let (base, spec) = random_lm(seed);
        let Ok(lm) = build_lm_graph(&base, &spec) else { return Ok(()) };
        for r in patterns(&lm) {
            let gr = context_graph(&lm, &r).unwrap();
            prop_assert!(gr.directed_edges().all(|(a, b)| lm.graph().has_directed(a.as_str(), b.as_str())));
            for (ind, v) in r.iter() {
                if v == 0 {
                    let more = r.clone().set(ind.clone(), 1);
                    let g1 = context_graph(&lm, &more).unwrap();
                    prop_assert!(gr.directed_edges().all(|(a, b)| g1.has_directed(a.as_str(), b.as_str())));
                }
            }
            if r.iter().all(|(_, v)| v == 1) {
                prop_assert_eq!(&gr, lm.graph());
            }
        }
    }
}

#[test]
fn fixture_context_graphs() {
    for name in fixtures::NAMES {
        let lm = fixtures::bundled(name).unwrap();
        assert_eq!(&context_graph(&lm, &ContextPattern::new()).unwrap(), lm.graph());
        for r in patterns(&lm) {
            let gr = context_graph(&lm, &r).unwrap();
            let removed = lm.graph().directed_edges().count() - gr.directed_edges().count();
            let expected: usize = r.iter().filter(|(_, v)| *v == 0).map(|(i, _)| lm.labels_of(i.as_str()).len()).sum();
            assert_eq!(removed, expected, "{name} {r}");
        }
    }
}
