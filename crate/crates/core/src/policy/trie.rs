//! Batched forward/backward over a prefix trie of token sequences.
//!
//! Sequences in a training batch share long prefixes: every completion of a
//! question shares its prompt, and all prompts share the instruction line. Each
//! distinct prefix is one trie node and is computed once; gradients from all
//! sequences through a shared prefix are summed before flowing further back,
//! which gives exactly the same gradient as processing every sequence alone.

use std::collections::HashMap;

use super::model::{
    gru_backward, gru_step, log_softmax, readout, readout_backward, Input, Layout, PolicyState,
    CACHE_BLOCKS,
};
use super::Vocab;

const NONE: u32 = u32::MAX;

#[derive(Default)]
pub(crate) struct Trie {
    tokens: Vec<u32>,
    parents: Vec<u32>,
    index: HashMap<(u32, u32), u32>,
}

impl Trie {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Inserts `seq`, returning the node id for each position.
    pub fn insert(&mut self, seq: &[u32]) -> Vec<usize> {
        let mut parent = NONE;
        seq.iter()
            .map(|&t| {
                let next = self.tokens.len() as u32;
                let id = *self.index.entry((parent, t)).or_insert(next);
                if id == next {
                    self.tokens.push(t);
                    self.parents.push(parent);
                }
                parent = id;
                id as usize
            })
            .collect()
    }
}

pub(crate) struct Forward {
    layers: usize,
    hidden: usize,
    cache: Vec<f64>,
    slots: Vec<u32>,
    /// Log-probabilities over the vocabulary, one row per output slot.
    pub logprobs: Vec<f64>,
}

impl Forward {
    fn block(&self, node: usize, layer: usize) -> usize {
        (node * self.layers + layer) * CACHE_BLOCKS * self.hidden
    }

    pub fn hidden_top(&self, node: usize) -> &[f64] {
        let b = self.block(node, self.layers - 1);
        &self.cache[b..b + self.hidden]
    }

    /// Log-probability row predicting the token after `node`.
    pub fn row(&self, node: usize) -> &[f64] {
        let s = self.slots[node] as usize;
        &self.logprobs[s * Vocab::SIZE..(s + 1) * Vocab::SIZE]
    }

    pub fn slot(&self, node: usize) -> Option<usize> {
        match self.slots[node] {
            NONE => None,
            s => Some(s as usize),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.logprobs.len() / Vocab::SIZE
    }
}

pub(crate) fn forward(state: &PolicyState, layout: &Layout, trie: &Trie, needs_output: &[bool]) -> Forward {
    let h = layout.hidden;
    let nl = layout.layers.len();
    let stride = CACHE_BLOCKS * h;
    let n = trie.len();
    let mut cache = vec![0.0; n * nl * stride];
    let mut scratch = vec![0.0; 6 * h];
    let mut slots = vec![NONE; n];
    let mut next_slot = 0u32;
    for (node, slot) in slots.iter_mut().enumerate() {
        if needs_output[node] {
            *slot = next_slot;
            next_slot += 1;
        }
    }
    for node in 0..n {
        let parent = trie.parents[node];
        for (l, off) in layout.layers.iter().enumerate() {
            let at = (node * nl + l) * stride;
            let (done, rest) = cache.split_at_mut(at);
            let h_prev = (parent != NONE).then(|| {
                let p = (parent as usize * nl + l) * stride;
                &done[p..p + h]
            });
            let input = if l == 0 {
                Input::Token(trie.tokens[node])
            } else {
                let below = at - stride;
                Input::Dense(&done[below..below + h])
            };
            gru_step(&state.params, off, h, input, h_prev, &mut rest[..stride], &mut scratch);
        }
    }
    let mut logprobs = vec![0.0; next_slot as usize * Vocab::SIZE];
    for node in 0..n {
        if slots[node] != NONE {
            let s = slots[node] as usize;
            let top = (node * nl + nl - 1) * stride;
            let row = &mut logprobs[s * Vocab::SIZE..(s + 1) * Vocab::SIZE];
            readout(&state.params, layout, &cache[top..top + h], row);
            log_softmax(row);
        }
    }
    Forward {
        layers: nl,
        hidden: h,
        cache,
        slots,
        logprobs,
    }
}

/// Backpropagates `dlogits` (one row per output slot) through the trie.
pub(crate) fn backward(
    state: &PolicyState,
    layout: &Layout,
    trie: &Trie,
    fwd: &Forward,
    dlogits: &[f64],
) -> Vec<f64> {
    let h = layout.hidden;
    let nl = layout.layers.len();
    let stride = CACHE_BLOCKS * h;
    let n = trie.len();
    let mut grad = vec![0.0; layout.total];
    let mut dh = vec![0.0; n * nl * h];
    let mut scratch = vec![0.0; 6 * h];
    for node in (0..n).rev() {
        if let Some(s) = fwd.slot(node) {
            let top = (node * nl + nl - 1) * h;
            readout_backward(
                &state.params,
                layout,
                fwd.hidden_top(node),
                &dlogits[s * Vocab::SIZE..(s + 1) * Vocab::SIZE],
                &mut grad,
                &mut dh[top..top + h],
            );
        }
        let parent = trie.parents[node];
        for (l, off) in layout.layers.iter().enumerate().rev() {
            let at = (node * nl + l) * stride;
            let cache = &fwd.cache[at..at + stride];
            let h_prev = (parent != NONE).then(|| {
                let p = (parent as usize * nl + l) * stride;
                &fwd.cache[p..p + h]
            });
            let input = if l == 0 {
                Input::Token(trie.tokens[node])
            } else {
                let below = at - stride;
                Input::Dense(&fwd.cache[below..below + h])
            };
            // Blocks written here (parent at layer l, this node at layer l-1)
            // both sit before this node's layer-l block.
            let cur = (node * nl + l) * h;
            let (lower, upper) = dh.split_at_mut(cur);
            let dh_cur = &upper[..h];
            let (dh_prev, dx) = match (parent != NONE, l > 0) {
                (false, false) => (None, None),
                (true, false) => {
                    let p = (parent as usize * nl + l) * h;
                    (Some(&mut lower[p..p + h]), None)
                }
                (false, true) => {
                    let b = cur - h;
                    (None, Some(&mut lower[b..b + h]))
                }
                (true, true) => {
                    let p = (parent as usize * nl + l) * h;
                    let b = cur - h;
                    let (lo, hi) = lower.split_at_mut(b);
                    (Some(&mut lo[p..p + h]), Some(&mut hi[..h]))
                }
            };
            gru_backward(
                &state.params,
                off,
                h,
                input,
                h_prev,
                cache,
                dh_cur,
                &mut grad,
                dh_prev,
                dx,
                &mut scratch,
            );
        }
    }
    grad
}
