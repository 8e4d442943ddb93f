use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use sapo_bench::{groups, packets, policy, specialties, SEED};
use sapo_core::node::assemble_training_set;
use sapo_core::seed;
use sapo_core::swarmnet::{deserialize, serialize};
use sapo_core::{NodeConfig, SwarmPool};

fn wire(c: &mut Criterion) {
    let state = policy(1, 32);
    let packet = packets("node-0", 0, &groups(&state, 1, 8, 40)).remove(0);
    let bytes = serialize(&packet).unwrap();
    c.bench_function("packet_serialize", |b| b.iter(|| serialize(&packet).unwrap()));
    c.bench_function("packet_deserialize", |b| b.iter(|| deserialize(&bytes).unwrap()));
}

fn pool(c: &mut Criterion) {
    let state = policy(1, 32);
    let shared = packets("node-1", 0, &groups(&state, 8, 8, 40));
    c.bench_function("pool_insert_poll_56", |b| {
        b.iter(|| {
            let pool = SwarmPool::default();
            for k in 0..7 {
                for p in &shared {
                    let mut p = p.clone();
                    p.sender = format!("node-{}", k + 1);
                    pool.insert(p);
                }
            }
            pool.poll("node-0", 1)
        })
    });
}

fn assembly(c: &mut Criterion) {
    let state = policy(1, 32);
    let local = groups(&state, 8, 8, 40);
    let pool: Vec<Arc<_>> = (1..8)
        .flat_map(|k| packets(&format!("node-{k}"), 0, &groups(&state, 8, 8, 40)))
        .map(Arc::new)
        .collect();
    let cfg = NodeConfig::new("node-0", specialties(), 2, 6, SEED);
    c.bench_function("assemble_2_6", |b| {
        b.iter(|| {
            let mut rng = seed::rng(SEED, &[]);
            assemble_training_set(local.clone(), &pool, &state, &cfg, 1, &mut rng).unwrap()
        })
    });
}

criterion_group!(benches, wire, pool, assembly);
criterion_main!(benches);
