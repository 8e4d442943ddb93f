use std::sync::Arc;

use super::*;
use crate::grpo::{StandaloneTrainer, TrainerConfig};
use crate::policy::Architecture;
use crate::swarmnet::InMemoryTransport;
use crate::taskgen::{wrap_answer, SpecialtyId};

fn arch() -> Architecture {
    Architecture {
        layers: 1,
        hidden: 8,
        context_length: 160,
    }
}

fn specs() -> Vec<Specialty> {
    vec![
        Specialty::from(SpecialtyId::BasicArithmetic),
        Specialty::from(SpecialtyId::BaseConversion),
    ]
}

fn small(mut c: NodeConfig) -> NodeConfig {
    c.completions_per_question = 4;
    c.max_new_tokens = 10;
    c
}

#[test]
fn config_validation() {
    let ok = NodeConfig::new("n", specs(), 4, 4, 1);
    assert!(ok.validate().is_ok());
    assert_eq!(ok.shared_count(), 8);
    assert!(NodeConfig { local_samples: 0, external_samples: 8, ..ok.clone() }.validate().is_err());
    assert!(NodeConfig { external_samples: 5, ..ok.clone() }.validate().is_err());
    assert!(NodeConfig { completions_per_question: 1, ..ok.clone() }.validate().is_err());
    assert!(NodeConfig { share_fraction: 1.5, ..ok.clone() }.validate().is_err());
    assert!(NodeConfig { specialties: vec![], ..ok.clone() }.validate().is_err());
    assert_eq!(NodeConfig { share_fraction: 0.3, ..ok }.shared_count(), 3);
}

#[test]
fn batches_are_seeded_per_round() {
    let c = NodeConfig::new("n", specs(), 8, 0, 5);
    assert_eq!(sample_batch(&c, 3), sample_batch(&c, 3));
    assert_ne!(sample_batch(&c, 3), sample_batch(&c, 4));
    assert_eq!(sample_batch(&c, 0).len(), 8);
}

#[test]
fn lone_node_without_external_matches_standalone_trainer() {
    let init = PolicyState::init(arch(), 9).unwrap();
    let cfg = small(NodeConfig::new("solo", specs(), 8, 0, 21));
    let transport = Arc::new(InMemoryTransport::new());
    let pool = Arc::new(SwarmPool::default());
    transport.register("solo", pool.clone());
    let mut node = Node::new(cfg.clone(), init.clone(), pool, transport).unwrap();

    let mut tc = TrainerConfig::new(specs(), 21);
    tc.completions_per_question = 4;
    tc.max_new_tokens = 10;
    let mut trainer = StandaloneTrainer::new(tc, init).unwrap();
    for r in 0..3 {
        let report = node.run_round(r);
        assert!(report.error.is_none(), "{:?}", report.error);
        let (mean, loss) = trainer.step(r).unwrap();
        assert_eq!(report.mean_reward.to_bits(), mean.to_bits());
        assert_eq!(report.loss.unwrap().to_bits(), loss.to_bits());
        assert_eq!(node.state(), trainer.state());
    }
    assert_eq!(node.completed_rounds(), 3);
}

fn graded_packet(sender: &str, round: u64, seed: u64, correct: usize, total: usize) -> RolloutPacket {
    let q = generate(Specialty::from(SpecialtyId::BasicArithmetic), seed);
    let completions = (0..total)
        .map(|i| if i < correct { wrap_answer(&q.ground_truth) } else { "no".into() })
        .collect();
    RolloutPacket::new(sender, round, &q, completions)
}

fn local_groups(state: &PolicyState, cfg: &NodeConfig, round: u64) -> Vec<RolloutGroup> {
    rollout_batch(
        state,
        sample_batch(cfg, round),
        cfg.completions_per_question,
        cfg.sampling,
        cfg.max_new_tokens,
        cfg.seed,
        round,
        cfg.grpo.std_floor,
    )
    .unwrap()
}

#[test]
fn assembly_filters_zero_advantage_and_backfills() {
    let state = PolicyState::init(arch(), 2).unwrap();
    let cfg = small(NodeConfig::new("me", specs(), 2, 6, 4));
    let local = local_groups(&state, &cfg, 0);
    let pool: Vec<Arc<RolloutPacket>> = vec![
        Arc::new(graded_packet("a", 0, 1, 0, 4)),
        Arc::new(graded_packet("a", 0, 2, 4, 4)),
        Arc::new(graded_packet("b", 0, 3, 1, 4)),
        Arc::new(graded_packet("b", 0, 4, 3, 4)),
    ];
    let mut rng = seed::rng(1, &[]);
    let (set, stats) = assemble_training_set(local, &pool, &state, &cfg, 0, &mut rng).unwrap();
    assert_eq!(stats.external_filtered, 2);
    assert_eq!(stats.external_used, 2);
    assert_eq!(stats.backfilled, 4);
    assert_eq!(set.local_groups.len(), 2);
    assert_eq!(set.group_count(), 8);
    assert_eq!(set.completion_count(), 32);
    for g in &set.external_groups {
        assert!(!crate::grpo::is_zero_advantage(g));
        assert!(matches!(g.origin, Origin::External(_)));
        let s = &g.samples[0];
        assert_eq!(s.token_logprobs.len(), s.completion_tokens.len());
        assert_eq!(*s.completion_tokens.last().unwrap(), crate::policy::Vocab::EOS);
    }
}

#[test]
fn assembly_skips_unusable_packets() {
    let state = PolicyState::init(arch(), 2).unwrap();
    let cfg = small(NodeConfig::new("me", specs(), 4, 4, 4));
    let mut unknown = graded_packet("a", 0, 1, 1, 4);
    unknown.metadata.verifier = "mystery/v9".into();
    let mut exotic = graded_packet("a", 0, 2, 1, 4);
    exotic.completions[1] = "ünïcode".into();
    let pool = vec![Arc::new(unknown), Arc::new(exotic)];
    let local = local_groups(&state, &cfg, 0);
    let mut rng = seed::rng(1, &[]);
    let (set, stats) = assemble_training_set(local, &pool, &state, &cfg, 0, &mut rng).unwrap();
    assert_eq!(stats.external_skipped, 2);
    assert_eq!(stats.backfilled, 4);
    assert_eq!(set.group_count(), 8);
}

#[test]
fn external_rewards_are_recomputed_locally() {
    let state = PolicyState::init(arch(), 2).unwrap();
    let p = graded_packet("a", 0, 8, 2, 4);
    let g = emulate_external(&state, &p, 1e-4).unwrap();
    assert_eq!(g.rewards, vec![1.0, 1.0, 0.0, 0.0]);
    let tiny = Architecture {
        context_length: 8,
        ..arch()
    };
    assert!(convert_packet(&p, tiny.context_length, 1e-4).is_err());
}

#[test]
fn swarm_of_two_shares_rollouts() {
    let init = PolicyState::init(arch(), 3).unwrap();
    let transport = Arc::new(InMemoryTransport::new());
    let mut nodes: Vec<Node> = (0..2)
        .map(|k| {
            let id = format!("n{k}");
            let pool = Arc::new(SwarmPool::default());
            transport.register(&id, pool.clone());
            Node::new(small(NodeConfig::new(&id, specs(), 4, 4, k)), init.clone(), pool, transport.clone()).unwrap()
        })
        .collect();
    for r in 0..2 {
        for n in nodes.iter_mut() {
            let rep = n.run_round(r);
            assert!(rep.error.is_none());
            assert_eq!(rep.per_question_rewards.len(), 8);
            assert_eq!(
                rep.external_used + rep.backfilled,
                4,
                "every round trains on a full batch"
            );
        }
    }
    // Node 1 polls after node 0 broadcast round 0, so its pool is never empty.
    assert_eq!(nodes[1].pool().poll("n1", 0).len(), 8);
    assert_eq!(nodes[0].pool().len(), 8 * 2);
}

#[test]
fn failed_round_leaves_policy_untouched() {
    let tight = Architecture {
        context_length: 12,
        ..arch()
    };
    let init = PolicyState::init(tight, 3).unwrap();
    let transport = Arc::new(InMemoryTransport::new());
    let mut node = Node::new(
        small(NodeConfig::new("x", specs(), 8, 0, 1)),
        init.clone(),
        Arc::new(SwarmPool::default()),
        transport,
    )
    .unwrap();
    let rep = node.run_round(0);
    assert!(rep.error.is_some());
    assert_eq!(rep.loss, None);
    assert_eq!(node.state(), &init);
    assert_eq!(node.completed_rounds(), 0);
}

#[test]
fn report_serializes_as_one_line() {
    let rep = RoundReport {
        node_id: "n".into(),
        round: 2,
        per_question_rewards: vec![0.5],
        mean_reward: 0.5,
        loss: Some(-0.1),
        ..Default::default()
    };
    let line = serde_json::to_string(&rep).unwrap();
    assert!(!line.contains('\n'));
    assert!(!line.contains("error"));
    assert_eq!(serde_json::from_str::<RoundReport>(&line).unwrap(), rep);
}
