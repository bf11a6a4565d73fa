//! Scripted decision source used by the adversarial state-space search.
//!
//! A `Chooser` replays a fixed prefix of decisions; the first decision past
//! the end of the script records its arity in `demand` so the search can
//! enumerate the alternatives from a cloned snapshot.

#[derive(Debug, Clone, Default)]
pub struct Chooser {
    script: Vec<usize>,
    pos: usize,
    pub demand: Option<usize>,
}

impl Chooser {
    pub fn new(script: Vec<usize>) -> Self {
        Self {
            script,
            pos: 0,
            demand: None,
        }
    }

    /// Pick one of `n` options. Deterministically 0 when there is no real
    /// choice or the script is exhausted.
    pub fn choose(&mut self, n: usize) -> usize {
        if n <= 1 {
            return 0;
        }
        if self.pos < self.script.len() {
            let c = self.script[self.pos];
            self.pos += 1;
            debug_assert!(c < n);
            c
        } else {
            if self.demand.is_none() {
                self.demand = Some(n);
            }
            0
        }
    }
}
