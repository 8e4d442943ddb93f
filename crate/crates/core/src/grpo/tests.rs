use super::*;
use crate::policy::{Architecture, Vocab};
use crate::taskgen::{generate, wrap_answer, Specialty, SpecialtyId};
use proptest::prelude::*;

fn cfg() -> GrpoConfig {
    GrpoConfig::default()
}

#[test]
fn advantages_half_split() {
    let a = compute_advantages(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1e-4).unwrap();
    let expected = 0.5 / (0.5 + 1e-4);
    for (i, v) in a.iter().enumerate() {
        let sign = if i < 4 { 1.0 } else { -1.0 };
        assert!((v - sign * expected).abs() < 1e-12);
    }
    assert!((a[0] - 0.99980).abs() < 1e-5);
}

#[test]
fn advantages_single_success() {
    let a = compute_advantages(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e-4).unwrap();
    let std = (7.0f64).sqrt() / 8.0;
    assert!((a[0] - 0.875 / (std + 1e-4)).abs() < 1e-12);
    assert!((a[1] + 0.125 / (std + 1e-4)).abs() < 1e-12);
    assert!((a[0] - 2.6449).abs() < 1e-3);
    assert!((a[1] + 0.3778).abs() < 1e-3);
    assert!(a.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn advantages_degenerate_and_errors() {
    assert_eq!(compute_advantages(&[1.0; 8], 1e-4).unwrap(), vec![0.0; 8]);
    assert_eq!(compute_advantages(&[0.0; 3], 1e-4).unwrap(), vec![0.0; 3]);
    assert!(matches!(compute_advantages(&[1.0], 1e-4), Err(Error::GroupTooSmall(1))));
    assert!(matches!(compute_advantages(&[], 1e-4), Err(Error::GroupTooSmall(0))));
}

#[test]
fn surrogate_examples() {
    assert!((token_surrogate(2.0, 1.0, &cfg()) + 1.28).abs() < 1e-12);
    assert!((token_surrogate(0.5, -1.0, &cfg()) - 0.8).abs() < 1e-12);
    assert!((token_surrogate(1.0, 0.7, &cfg()) + 0.7).abs() < 1e-12);
    assert_eq!(token_surrogate_grad(2.0, 1.0, &cfg()), 0.0);
    assert_eq!(token_surrogate_grad(0.5, -1.0, &cfg()), 0.0);
    assert_eq!(token_surrogate_grad(1.0, 0.7, &cfg()), -0.7);
    // Past the upper clip with a negative advantage the unclipped term stays.
    assert!((token_surrogate(2.0, -1.0, &cfg()) - 2.0).abs() < 1e-12);
    assert_eq!(token_surrogate_grad(2.0, -1.0, &cfg()), 2.0);
}

#[test]
fn surrogate_loss_is_token_mean() {
    let l = surrogate_loss(&[1.0, 2.0], &[1.0, 1.0], &cfg()).unwrap();
    assert!((l - (-1.0 - 1.28) / 2.0).abs() < 1e-12);
    assert!(surrogate_loss(&[1.0], &[1.0, 2.0], &cfg()).is_err());
    assert!(surrogate_loss(&[f64::NAN], &[1.0], &cfg()).is_err());
    assert!(surrogate_loss(&[0.0], &[1.0], &cfg()).is_err());
}

fn scalar_state() -> PolicyState {
    let arch = Architecture {
        layers: 1,
        hidden: 1,
        context_length: 4,
    };
    let mut s = PolicyState::zeros(arch).unwrap();
    s.params[0] = 1.0;
    s
}

#[test]
fn adam_single_and_two_steps_match_scalar_recursion() {
    let mut s = scalar_state();
    let n = s.params.len();
    let mut g = vec![0.0; n];
    g[0] = 0.5;
    adam_step(&mut s, &g, &cfg()).unwrap();
    assert!((s.params[0] - 0.99900000002).abs() < 1e-14);
    assert_eq!(s.step, 1);
    // Zero-gradient coordinates do not move.
    assert!(s.params[1..].iter().all(|p| *p == 0.0));
    g[0] = -1.0;
    adam_step(&mut s, &g, &cfg()).unwrap();
    assert!((s.params[0] - 0.9993661035424056).abs() < 1e-14);
    assert_eq!(s.step, 2);
}

#[test]
fn adam_constant_gradient_closed_form() {
    // With a constant gradient the bias-corrected moments equal g and g^2, so
    // every step moves by lr * g / (|g| + eps).
    let mut s = scalar_state();
    let mut g = vec![0.0; s.params.len()];
    g[0] = 0.3;
    for _ in 0..2 {
        adam_step(&mut s, &g, &cfg()).unwrap();
    }
    let per_step = 1e-3 * 0.3 / (0.3 + 1e-8);
    assert!((s.params[0] - (1.0 - 2.0 * per_step)).abs() < 1e-12);
}

#[test]
fn adam_rejects_bad_gradients_without_mutation() {
    let mut s = scalar_state();
    let before = s.clone();
    let mut g = vec![0.0; s.params.len()];
    g[3] = f64::INFINITY;
    assert!(adam_step(&mut s, &g, &cfg()).is_err());
    assert!(adam_step(&mut s, &[0.0], &cfg()).is_err());
    assert_eq!(s, before);
}

#[test]
fn config_validation() {
    assert!(cfg().validate().is_ok());
    assert!(GrpoConfig { kl_weight: 0.1, ..cfg() }.validate().is_err());
    assert!(GrpoConfig { eps_low: 0.5, eps_high: 0.2, ..cfg() }.validate().is_err());
    assert!(GrpoConfig { learning_rate: 0.0, ..cfg() }.validate().is_err());
}

fn group_with(correct: &[bool]) -> RolloutGroup {
    let q = generate(Specialty::from(SpecialtyId::BasicArithmetic), 4);
    let prompt_tokens = Vocab::encode_prompt(&q.prompt).unwrap();
    let samples = correct
        .iter()
        .map(|&ok| {
            let text = if ok { wrap_answer(&q.ground_truth) } else { "nope".to_string() };
            let completion_tokens = Vocab::encode_completion(&text).unwrap();
            Sample {
                prompt_tokens: prompt_tokens.clone(),
                token_logprobs: vec![0.0; completion_tokens.len()],
                completion_tokens,
                completion_text: text,
            }
        })
        .collect();
    RolloutGroup::score(q, samples, Origin::Local, 1e-4).unwrap()
}

#[test]
fn rollout_group_scoring() {
    let g = group_with(&[true, false, false, true]);
    assert_eq!(g.rewards, vec![1.0, 0.0, 0.0, 1.0]);
    assert_eq!(g.mean_reward(), 0.5);
    assert!(!is_zero_advantage(&g));
    assert!(is_zero_advantage(&group_with(&[false, false])));
    assert_eq!(surrogate_batch(&[g.clone(), g]).len(), 8);
}

#[test]
fn standalone_trainer_is_deterministic() {
    let arch = Architecture {
        layers: 1,
        hidden: 8,
        context_length: 96,
    };
    let mut tc = TrainerConfig::new(vec![Specialty::from(SpecialtyId::BasicArithmetic)], 3);
    tc.batch_size = 2;
    tc.completions_per_question = 3;
    tc.max_new_tokens = 8;
    let run = || {
        let mut t = StandaloneTrainer::new(tc.clone(), PolicyState::init(arch, 1).unwrap()).unwrap();
        for r in 0..3 {
            t.step(r).unwrap();
        }
        t.into_state()
    };
    assert_eq!(run(), run());
    assert!(StandaloneTrainer::new(
        TrainerConfig {
            completions_per_question: 1,
            ..tc.clone()
        },
        PolicyState::init(arch, 1).unwrap()
    )
    .is_err());
}

proptest! {
    #[test]
    fn advantages_sum_to_zero(rewards in proptest::collection::vec(0.0f64..1.0, 2..16)) {
        let a = compute_advantages(&rewards, 1e-4).unwrap();
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn clipped_gradient_matches_numeric_derivative(ratio in 0.05f64..3.0, adv in -3.0f64..3.0) {
        let c = cfg();
        // Stay away from the kinks at the clip bounds.
        prop_assume!((ratio - 0.8).abs() > 1e-4 && (ratio - 1.28).abs() > 1e-4);
        let h = 1e-7;
        let lp = ratio.ln();
        let numeric = (token_surrogate((lp + h).exp(), adv, &c) - token_surrogate((lp - h).exp(), adv, &c)) / (2.0 * h);
        prop_assert!((numeric - token_surrogate_grad(ratio, adv, &c)).abs() < 1e-5);
    }
}
