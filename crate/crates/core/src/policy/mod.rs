//! The node's policy: a small character-level autoregressive model with exact
//! token log-probabilities, temperature sampling, and analytic gradients.

mod checkpoint;
mod model;
mod trie;
mod vocab;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::{token_surrogate, token_surrogate_grad, GrpoConfig};
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use model::{Architecture, PolicyState};
pub use vocab::Vocab;

use model::{gru_step, log_softmax, readout, Input, Layout, CACHE_BLOCKS};
use trie::Trie;

pub const DEFAULT_MAX_NEW_TOKENS: usize = 160;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Argmax decoding, the zero-temperature limit.
    Greedy,
    Temperature(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub prompt_tokens: Vec<u32>,
    pub completion_tokens: Vec<u32>,
    pub completion_text: String,
    /// Untempered log-probabilities, aligned with `completion_tokens`.
    pub token_logprobs: Vec<f64>,
}

/// Incremental decoder state for one sequence.
struct Cursor<'a> {
    state: &'a PolicyState,
    layout: &'a Layout,
    hidden: Vec<f64>,
    cache: Vec<f64>,
    scratch: Vec<f64>,
    started: bool,
}

impl<'a> Cursor<'a> {
    fn new(state: &'a PolicyState, layout: &'a Layout) -> Self {
        let h = layout.hidden;
        let nl = layout.layers.len();
        Cursor {
            state,
            layout,
            hidden: vec![0.0; nl * h],
            cache: vec![0.0; CACHE_BLOCKS * h],
            scratch: vec![0.0; 6 * h],
            started: false,
        }
    }

    fn feed(&mut self, token: u32) {
        let h = self.layout.hidden;
        for (l, off) in self.layout.layers.iter().enumerate() {
            let (below, cur) = self.hidden.split_at_mut(l * h);
            let input = if l == 0 {
                Input::Token(token)
            } else {
                Input::Dense(&below[(l - 1) * h..])
            };
            let prev = self.started.then_some(&cur[..h]);
            gru_step(&self.state.params, off, h, input, prev, &mut self.cache, &mut self.scratch);
            cur[..h].copy_from_slice(&self.cache[..h]);
        }
        self.started = true;
    }

    fn logprobs(&self, out: &mut [f64]) {
        let h = self.layout.hidden;
        let top = (self.layout.layers.len() - 1) * h;
        readout(&self.state.params, self.layout, &self.hidden[top..top + h], out);
        log_softmax(out);
    }

    fn fork(&self) -> Self {
        Cursor {
            state: self.state,
            layout: self.layout,
            hidden: self.hidden.clone(),
            cache: self.cache.clone(),
            scratch: self.scratch.clone(),
            started: self.started,
        }
    }
}

fn choose<R: Rng>(logprobs: &[f64], sampling: Sampling, rng: &mut R) -> u32 {
    match sampling {
        Sampling::Greedy => {
            let mut best = 0;
            for (i, &lp) in logprobs.iter().enumerate() {
                if lp > logprobs[best] {
                    best = i;
                }
            }
            best as u32
        }
        Sampling::Temperature(t) => {
            let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logprobs.iter().map(|&lp| ((lp - max) / t).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return i as u32;
                }
                u -= w;
            }
            (weights.len() - 1) as u32
        }
    }
}

/// Draws `count` completions for `prompt` by ancestral sampling. Completion `i`
/// uses its own stream derived from `(seed, i)`.
pub fn sample_completions(
    state: &PolicyState,
    prompt: &str,
    count: usize,
    sampling: Sampling,
    max_new_tokens: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if count == 0 || max_new_tokens == 0 {
        return Err(Error::InvalidArgument("count and max_new_tokens must be positive".into()));
    }
    if let Sampling::Temperature(t) = sampling {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")));
        }
    }
    let prompt_tokens = Vocab::encode_prompt(prompt)?;
    let limit = state.arch.context_length;
    if prompt_tokens.len() >= limit {
        return Err(Error::ContextOverflow {
            len: prompt_tokens.len(),
            limit,
        });
    }
    let layout = state.layout();
    let mut base = Cursor::new(state, &layout);
    for &t in &prompt_tokens {
        base.feed(t);
    }
    let budget = max_new_tokens.min(limit - prompt_tokens.len());
    let mut row = vec![0.0; Vocab::SIZE];
    (0..count)
        .map(|i| {
            let mut rng = seed::rng(seed, &[seed::tag::COMPLETIONS, i as u64]);
            let mut cursor = base.fork();
            let mut completion_tokens = Vec::new();
            let mut token_logprobs = Vec::new();
            while completion_tokens.len() < budget {
                cursor.logprobs(&mut row);
                let t = choose(&row, sampling, &mut rng);
                completion_tokens.push(t);
                token_logprobs.push(row[t as usize]);
                if t == Vocab::EOS {
                    break;
                }
                cursor.feed(t);
            }
            Ok(Sample {
                prompt_tokens: prompt_tokens.clone(),
                completion_text: Vocab::decode(&completion_tokens),
                completion_tokens,
                token_logprobs,
            })
        })
        .collect()
}

fn check_sequence(state: &PolicyState, prompt: &[u32], completion: &[u32]) -> Result<()> {
    Vocab::check(prompt)?;
    Vocab::check(completion)?;
    if prompt.is_empty() {
        return Err(Error::InvalidArgument("prompt must contain at least BOS".into()));
    }
    let len = prompt.len() + completion.len();
    if len > state.arch.context_length {
        return Err(Error::ContextOverflow {
            len,
            limit: state.arch.context_length,
        });
    }
    Ok(())
}

/// Log-probability of each completion token given everything before it.
pub fn score_tokens(state: &PolicyState, prompt_tokens: &[u32], completion_tokens: &[u32]) -> Result<Vec<f64>> {
    Ok(score_group(state, prompt_tokens, &[completion_tokens.to_vec()])?.remove(0))
}

/// [`score_tokens`] for several completions of one prompt, sharing the prompt pass.
pub fn score_group(state: &PolicyState, prompt_tokens: &[u32], completions: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
    let mut trie = Trie::default();
    let mut targets = Vec::with_capacity(completions.len());
    for c in completions {
        check_sequence(state, prompt_tokens, c)?;
        let full: Vec<u32> = prompt_tokens.iter().chain(c).copied().collect();
        let ids = trie.insert(&full);
        targets.push(
            (0..c.len())
                .map(|k| (ids[prompt_tokens.len() + k - 1], c[k]))
                .collect::<Vec<_>>(),
        );
    }
    let mut needs = vec![false; trie.len()];
    for &(node, _) in targets.iter().flatten() {
        needs[node] = true;
    }
    let layout = state.layout();
    let fwd = trie::forward(state, &layout, &trie, &needs);
    Ok(targets
        .iter()
        .map(|ts| ts.iter().map(|&(node, t)| fwd.row(node)[t as usize]).collect())
        .collect())
}

/// Next-token log-distribution after `prefix` (which must start with BOS).
pub fn next_token_logprobs(state: &PolicyState, prefix: &[u32]) -> Result<Vec<f64>> {
    check_sequence(state, prefix, &[])?;
    let layout = state.layout();
    let mut cursor = Cursor::new(state, &layout);
    for &t in prefix {
        cursor.feed(t);
    }
    let mut row = vec![0.0; Vocab::SIZE];
    cursor.logprobs(&mut row);
    Ok(row)
}

/// One sequence of the clipped-surrogate batch.
#[derive(Clone, Copy, Debug)]
pub struct SurrogateSequence<'a> {
    pub prompt_tokens: &'a [u32],
    pub completion_tokens: &'a [u32],
    /// Log-probabilities under the policy that produced the rollout's baseline.
    pub old_logprobs: &'a [f64],
    pub advantage: f64,
}

/// Token-mean clipped surrogate over the batch and its exact gradient.
pub fn loss_and_gradient(
    state: &PolicyState,
    batch: &[SurrogateSequence<'_>],
    cfg: &GrpoConfig,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty surrogate batch".into()));
    }
    let mut trie = Trie::default();
    let mut targets = Vec::new();
    let mut token_count = 0usize;
    for (i, seq) in batch.iter().enumerate() {
        check_sequence(state, seq.prompt_tokens, seq.completion_tokens)?;
        if seq.old_logprobs.len() != seq.completion_tokens.len() {
            return Err(Error::InvalidArgument(format!(
                "sequence {i}: {} old log-probs for {} tokens",
                seq.old_logprobs.len(),
                seq.completion_tokens.len()
            )));
        }
        if !seq.advantage.is_finite() {
            return Err(Error::NonFinite(format!("advantage of sequence {i}")));
        }
        token_count += seq.completion_tokens.len();
        // A zero-advantage token contributes exactly zero loss and gradient at any
        // ratio; it only counts toward the token-mean denominator.
        if seq.advantage == 0.0 {
            continue;
        }
        let full: Vec<u32> = seq.prompt_tokens.iter().chain(seq.completion_tokens).copied().collect();
        let ids = trie.insert(&full);
        let p = seq.prompt_tokens.len();
        for (k, &t) in seq.completion_tokens.iter().enumerate() {
            targets.push((ids[p + k - 1], t, seq.old_logprobs[k], seq.advantage));
        }
    }
    if token_count == 0 {
        return Err(Error::InvalidArgument("surrogate batch has no completion tokens".into()));
    }
    let layout = state.layout();
    if targets.is_empty() {
        return Ok((0.0, vec![0.0; layout.total]));
    }
    let mut needs = vec![false; trie.len()];
    for &(node, ..) in &targets {
        needs[node] = true;
    }
    let fwd = trie::forward(state, &layout, &trie, &needs);

    let count = token_count as f64;
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; fwd.slot_count() * Vocab::SIZE];
    let mut coef_sum = vec![0.0; fwd.slot_count()];
    for &(node, t, old, adv) in &targets {
        let lp = fwd.row(node)[t as usize];
        let ratio = (lp - old).exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite(format!(
                "importance ratio exp({lp} - {old}) over {token_count} tokens"
            )));
        }
        loss += token_surrogate(ratio, adv, cfg);
        let coef = token_surrogate_grad(ratio, adv, cfg) / count;
        if coef != 0.0 {
            let s = fwd.slot(node).expect("target node has an output slot");
            dlogits[s * Vocab::SIZE + t as usize] += coef;
            coef_sum[s] += coef;
        }
    }
    loss /= count;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "surrogate loss over {} sequences / {token_count} tokens",
            batch.len()
        )));
    }
    // d logp_t / d logits = onehot(t) - softmax
    for (s, &c) in coef_sum.iter().enumerate() {
        if c != 0.0 {
            let row = &fwd.logprobs[s * Vocab::SIZE..(s + 1) * Vocab::SIZE];
            let d = &mut dlogits[s * Vocab::SIZE..(s + 1) * Vocab::SIZE];
            for (dv, lp) in d.iter_mut().zip(row) {
                *dv -= c * lp.exp();
            }
        }
    }
    let grad = trie::backward(state, &layout, &trie, &fwd, &dlogits);
    Ok((loss, grad))
}
