//! Replacement policies behind a common trait, registered by name and
//! selected at runtime through the configuration (`replacement = "lru"`).
//!
//! The latency analysis is policy-agnostic, so besides LRU there is a
//! scripted policy whose victims come from a caller-supplied sequence; the
//! adversarial search uses it to steer evictions.

use std::collections::VecDeque;

pub trait ReplacementPolicy: Send {
    fn name(&self) -> &'static str;

    /// A line in `(set, way)` was touched (hit or fill).
    fn on_access(&mut self, set: usize, way: usize);

    fn on_invalidate(&mut self, set: usize, way: usize);

    /// Pick a victim among `candidates` (all valid, all inside the allowed
    /// way mask). `candidates` is never empty.
    fn select_victim(&mut self, set: usize, candidates: &[usize]) -> usize;

    /// The most recently touched way among `candidates`, if the policy
    /// tracks recency. Callers use it to shield the freshest line from
    /// eviction; `None` means no way is shielded.
    fn most_recent(&self, _set: usize, _candidates: &[usize]) -> Option<usize> {
        None
    }

    fn clone_box(&self) -> Box<dyn ReplacementPolicy>;

    /// Canonical encoding of the mutable state, for state-space hashing.
    fn encode_state(&self, out: &mut Vec<u64>);
}

pub struct PolicyBox(pub Box<dyn ReplacementPolicy>);

impl std::fmt::Debug for PolicyBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PolicyBox({})", self.0.name())
    }
}

impl Clone for PolicyBox {
    fn clone(&self) -> Self {
        PolicyBox(self.0.clone_box())
    }
}

impl std::ops::Deref for PolicyBox {
    type Target = dyn ReplacementPolicy;
    fn deref(&self) -> &Self::Target {
        &*self.0
    }
}

impl std::ops::DerefMut for PolicyBox {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut *self.0
    }
}

/// Per-set recency stacks; front is MRU, back is LRU.
pub struct LruPolicy {
    stacks: Vec<Vec<u16>>,
}

impl LruPolicy {
    pub fn new(num_sets: usize) -> Self {
        Self {
            stacks: vec![Vec::new(); num_sets],
        }
    }
}

impl ReplacementPolicy for LruPolicy {
    fn name(&self) -> &'static str {
        "lru"
    }

    fn on_access(&mut self, set: usize, way: usize) {
        let stack = &mut self.stacks[set];
        if let Some(pos) = stack.iter().position(|&w| w as usize == way) {
            stack.remove(pos);
        }
        stack.insert(0, way as u16);
    }

    fn on_invalidate(&mut self, set: usize, way: usize) {
        let stack = &mut self.stacks[set];
        if let Some(pos) = stack.iter().position(|&w| w as usize == way) {
            stack.remove(pos);
        }
    }

    fn select_victim(&mut self, set: usize, candidates: &[usize]) -> usize {
        // Least recently used among the candidates.
        self.stacks[set]
            .iter()
            .rev()
            .map(|&w| w as usize)
            .find(|w| candidates.contains(w))
            .unwrap_or(candidates[0])
    }

    fn most_recent(&self, set: usize, candidates: &[usize]) -> Option<usize> {
        self.stacks[set]
            .iter()
            .map(|&w| w as usize)
            .find(|w| candidates.contains(w))
    }

    fn clone_box(&self) -> Box<dyn ReplacementPolicy> {
        Box::new(LruPolicy {
            stacks: self.stacks.clone(),
        })
    }

    fn encode_state(&self, out: &mut Vec<u64>) {
        for stack in &self.stacks {
            out.push(stack.len() as u64);
            let mut packed = 0u64;
            for &w in stack {
                packed = packed << 6 | w as u64;
            }
            out.push(packed);
        }
    }
}

/// Victims come from a pre-recorded sequence of way indices; once the
/// script runs out the policy falls back to the first candidate.
pub struct ScriptedPolicy {
    script: VecDeque<usize>,
}

impl ScriptedPolicy {
    pub fn new(script: Vec<usize>) -> Self {
        Self {
            script: script.into(),
        }
    }
}

impl ReplacementPolicy for ScriptedPolicy {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn on_access(&mut self, _set: usize, _way: usize) {}

    fn on_invalidate(&mut self, _set: usize, _way: usize) {}

    fn select_victim(&mut self, _set: usize, candidates: &[usize]) -> usize {
        match self.script.pop_front() {
            Some(w) if candidates.contains(&w) => w,
            _ => candidates[0],
        }
    }

    fn clone_box(&self) -> Box<dyn ReplacementPolicy> {
        Box::new(ScriptedPolicy {
            script: self.script.clone(),
        })
    }

    fn encode_state(&self, out: &mut Vec<u64>) {
        out.push(self.script.len() as u64);
    }
}

/// Build a policy instance by registered name.
pub fn make_policy(name: &str, num_sets: usize) -> Option<PolicyBox> {
    match name {
        "lru" => Some(PolicyBox(Box::new(LruPolicy::new(num_sets)))),
        "scripted" => Some(PolicyBox(Box::new(ScriptedPolicy::new(Vec::new())))),
        _ => None,
    }
}

pub fn policy_names() -> &'static [&'static str] {
    &["lru", "scripted"]
}
