use proptest::prelude::*;

use lmshift::graph::random_admg;
use lmshift::separation::{find_open_path, m_separated, m_separated_bruteforce, SeparationQuery};
use lmshift::{Admg, NodeId, NodeSet};

/// Splits the nodes into disjoint x, y, z (and unused) by `roles`.
fn partition(g: &Admg, roles: &[u8]) -> (NodeSet, NodeSet, NodeSet) {
    let (mut x, mut y, mut z) = (NodeSet::new(), NodeSet::new(), NodeSet::new());
    for (i, n) in g.node_ids().enumerate() {
        match roles[i % roles.len()] % 4 {
            0 => x.insert(n.clone()),
            1 => y.insert(n.clone()),
            2 => z.insert(n.clone()),
            _ => false,
        };
    }
    (x, y, z)
}

fn query_parts() -> impl Strategy<Value = (Admg, Vec<u8>)> {
    (2usize..9, 0.0f64..0.5, 0.0f64..0.4, any::<u64>(), prop::collection::vec(any::<u8>(), 9))
        .prop_map(|(n, p, q, seed, roles)| (random_admg(n, p, q, seed), roles))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn agrees_with_path_enumeration((g, roles) in query_parts()) {
        let (x, y, z) = partition(&g, &roles);
        let q = SeparationQuery::new(&g, x, y, z).unwrap();
        prop_assert_eq!(m_separated(&q), m_separated_bruteforce(&q).unwrap());
    }

    #[test]
    fn symmetric((g, roles) in query_parts()) {
        let (x, y, z) = partition(&g, &roles);
        let a = m_separated(&SeparationQuery::new(&g, x.clone(), y.clone(), z.clone()).unwrap());
        let b = m_separated(&SeparationQuery::new(&g, y, x, z).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn decomposition((g, roles) in query_parts()) {
        let (x, y, z) = partition(&g, &roles);
        if m_separated(&SeparationQuery::new(&g, x.clone(), y.clone(), z.clone()).unwrap()) {
            for v in &y {
                let part: NodeSet = std::iter::once(v.clone()).collect();
                prop_assert!(m_separated(&SeparationQuery::new(&g, x.clone(), part, z.clone()).unwrap()));
            }
        }
    }

    #[test]
    fn open_path_certificate((g, roles) in query_parts()) {
        let (x, y, z) = partition(&g, &roles);
        let q = SeparationQuery::new(&g, x.clone(), y.clone(), z.clone()).unwrap();
        match find_open_path(&q) {
            Some(p) => {
                prop_assert!(!m_separated(&q));
                prop_assert!(p.is_open_in(&g, &z).unwrap());
                let ends: [&NodeId; 2] = [&p.nodes[0], p.nodes.last().unwrap()];
                prop_assert!(x.contains(ends[0]) && y.contains(ends[1]));
            }
            None => prop_assert!(m_separated(&q)),
        }
    }
}
