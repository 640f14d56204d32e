use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparq::channel::{FsoParams, Transmissivity};
use sparq::quantum::{entanglement_swap, link_pair};
use sparq::routing::{find_path, shortest_path_baseline, train, Adam, Experience, QNetwork, TrainConfig};
use sparq::topology::{snapshot, NetworkConfig};

fn channel(c: &mut Criterion) {
    let fso = FsoParams::default();
    c.bench_function("fso_transmissivity_500km", |b| b.iter(|| fso.fso_transmissivity(black_box(5e5), 5e4)));
}

fn swap(c: &mut Criterion) {
    let ab = link_pair(Transmissivity::new(0.9).unwrap(), Transmissivity::new(0.8).unwrap());
    let bc = link_pair(Transmissivity::new(0.85).unwrap(), Transmissivity::ONE);
    c.bench_function("entanglement_swap", |b| b.iter(|| entanglement_swap(black_box(&ab), black_box(&bc))));
}

fn snapshots(c: &mut Criterion) {
    let config = NetworkConfig::bundled();
    c.bench_function("snapshot_bundled", |b| b.iter(|| snapshot(&config, black_box(300.0), 0.7)));
}

fn qnet(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = QNetwork::routing(60, 6, &mut rng).unwrap();
    let input = vec![0.5; 60];
    c.bench_function("qnet_forward", |b| b.iter(|| net.forward(black_box(&input))));

    let experience = Experience {
        state: sparq::routing::StateVector {
            neighbor_etas: vec![0.8; 6],
            dest_encoding: vec![0.0; 54],
        },
        action: 2,
        reward: -0.1,
        next_state: sparq::routing::StateVector {
            neighbor_etas: vec![0.9; 6],
            dest_encoding: vec![0.0; 54],
        },
        next_mask: vec![true; 6],
        terminal: false,
    };
    let batch: Vec<&Experience> = vec![&experience; 64];
    c.bench_function("train_step_batch64", |b| {
        let mut online = net.clone();
        let target = net.clone();
        let mut adam = Adam::new(&online, 0.001);
        b.iter(|| sparq::routing::train_step(&mut online, &target, &mut adam, black_box(&batch), 0.99))
    });
}

fn routing(c: &mut Criterion) {
    let config = NetworkConfig::bundled();
    let snap = snapshot(&config, 0.0, 0.7).unwrap();
    let train_config = TrainConfig {
        episodes: 5,
        mini_episodes: 20,
        ..TrainConfig::default()
    };
    let model = train(std::slice::from_ref(&snap), &train_config).unwrap().model;
    let (src, dst) = sparq::routing::routable_pairs(&snap)[0];
    c.bench_function("route_dqn", |b| b.iter(|| find_path(&model, &snap, black_box(src), dst, None)));
    c.bench_function("route_shortest_path", |b| b.iter(|| shortest_path_baseline(&snap, black_box(src), dst)));
}

criterion_group!(benches, channel, swap, snapshots, qnet, routing);
criterion_main!(benches);
