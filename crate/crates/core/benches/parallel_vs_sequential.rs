use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lmshift::estimation::{dr_nate, EstimatorConfig};
use lmshift::graph::random_admg;
use lmshift::par::{map_indices, map_indices_seq};
use lmshift::scm::{appendix_a, APPENDIX_A_50};
use lmshift::separation::is_m_separated;
use lmshift::{node_set, NodeId};

fn separation_sweep(c: &mut Criterion) {
    let graphs: Vec<_> = (0..64).map(|s| random_admg(12, 0.25, 0.15, s)).collect();
    let one = |k: usize| {
        let g = &graphs[k % graphs.len()];
        let ids: Vec<NodeId> = g.node_ids().cloned().collect();
        let mut open = 0;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let z = node_set(ids.iter().enumerate().filter(|(t, _)| (t + k).is_multiple_of(3) && *t != i && *t != j).map(|(_, n)| n.as_str()));
                if !is_m_separated(g, &node_set([ids[i].as_str()]), &node_set([ids[j].as_str()]), &z).unwrap() {
                    open += 1;
                }
            }
        }
        open
    };
    let mut group = c.benchmark_group("separation_sweep");
    group.bench_function(BenchmarkId::new("parallel", 256), |b| b.iter(|| map_indices(256, one)));
    group.bench_function(BenchmarkId::new("sequential", 256), |b| b.iter(|| map_indices_seq(256, one)));
    group.finish();
}

fn replicated_estimates(c: &mut Criterion) {
    let scm = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1);
    let cfg = EstimatorConfig::appendix_a();
    let data: Vec<_> = (0..16).map(|s| scm.sample_observational(2000, s).unwrap()).collect();
    let one = |k: usize| dr_nate(&data[k], &cfg).unwrap().point;
    let mut group = c.benchmark_group("dr_nate_replications");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", 16), |b| b.iter(|| map_indices(16, one)));
    group.bench_function(BenchmarkId::new("sequential", 16), |b| b.iter(|| map_indices_seq(16, one)));
    group.finish();
}

criterion_group!(benches, separation_sweep, replicated_estimates);
criterion_main!(benches);
