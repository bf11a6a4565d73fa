//! The shared TDM bus between the L2 controllers and the LLC: slot
//! ownership, the per-core pending request / pending write-back buffers,
//! and the round-robin pick between the two classes at each slot start.

use crate::cache::{AccessOp, LineAddr};
use crate::config::{CoreId, TdmSchedule};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("core {core} PWB overflow at slot {slot} (capacity {capacity})")]
pub struct PwbOverflow {
    pub core: CoreId,
    pub slot: u64,
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    Request,
    WriteBack,
    Response,
}

/// One bus transaction; exactly one is initiated per slot, by the owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusTransaction {
    pub kind: TxKind,
    pub core: CoreId,
    pub line: LineAddr,
    pub slot: u64,
}

pub fn slot_owner(schedule: &TdmSchedule, slot: u64) -> CoreId {
    schedule.owner(slot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingRequest {
    pub op: AccessOp,
    pub line: LineAddr,
    /// Slot at whose start the request entered the PRB; latency is
    /// measured from here.
    pub entry_slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingWriteBack {
    pub line: LineAddr,
    pub dirty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArbClass {
    Request,
    WriteBack,
}

/// Per-core PRB (capacity 1) and PWB (bounded FIFO), with the round-robin
/// state deciding which class goes on the bus when both are pending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingBuffers {
    pub prb: Option<PendingRequest>,
    pwb: VecDeque<PendingWriteBack>,
    capacity: usize,
    last_served: ArbClass,
}

impl PendingBuffers {
    pub fn new(capacity: usize) -> Self {
        Self {
            prb: None,
            pwb: VecDeque::new(),
            capacity,
            last_served: ArbClass::Request,
        }
    }

    pub fn pwb_len(&self) -> usize {
        self.pwb.len()
    }

    pub fn pwb_head(&self) -> Option<&PendingWriteBack> {
        self.pwb.front()
    }

    pub fn enqueue_writeback(
        &mut self,
        core: CoreId,
        slot: u64,
        wb: PendingWriteBack,
    ) -> Result<(), PwbOverflow> {
        if self.pwb.len() >= self.capacity {
            return Err(PwbOverflow {
                core,
                slot,
                capacity: self.capacity,
            });
        }
        self.pwb.push_back(wb);
        Ok(())
    }

    /// Class to serve this slot, given whether the PRB content is eligible
    /// to go on the bus (a queued sequencer request waits off-bus). The
    /// round-robin state advances to whichever class is served.
    pub fn arbitrate_with(&mut self, prb_eligible: bool) -> Option<ArbClass> {
        let req = prb_eligible && self.prb.is_some();
        let wb = !self.pwb.is_empty();
        let pick = match (req, wb) {
            (false, false) => return None,
            (true, false) => ArbClass::Request,
            (false, true) => ArbClass::WriteBack,
            (true, true) => match self.last_served {
                ArbClass::Request => ArbClass::WriteBack,
                ArbClass::WriteBack => ArbClass::Request,
            },
        };
        self.last_served = pick;
        Some(pick)
    }

    pub fn arbitrate(&mut self) -> Option<ArbClass> {
        self.arbitrate_with(true)
    }

    pub fn pop_writeback(&mut self) -> Option<PendingWriteBack> {
        self.pwb.pop_front()
    }

    pub fn pwb_contains(&self, line: LineAddr) -> bool {
        self.pwb.iter().any(|wb| wb.line == line)
    }

    /// FIFO position of `line`'s pending write-back (0 = head).
    pub fn pwb_position(&self, line: LineAddr) -> Option<usize> {
        self.pwb.iter().position(|wb| wb.line == line)
    }

    /// Drop the pending write-back for `line`, returning it if present.
    /// Used when the core re-requests a line it was about to write back.
    pub fn cancel_writeback(&mut self, line: LineAddr) -> Option<PendingWriteBack> {
        let pos = self.pwb.iter().position(|wb| wb.line == line)?;
        self.pwb.remove(pos)
    }

    pub fn encode_state(&self, out: &mut Vec<u64>) {
        out.push(match self.prb {
            Some(r) => r.line << 2 | 1,
            None => 0,
        });
        out.push(self.pwb.len() as u64);
        for wb in &self.pwb {
            out.push(wb.line << 1 | wb.dirty as u64);
        }
        out.push(self.last_served as u64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TdmSchedule;

    fn req(line: LineAddr) -> PendingRequest {
        PendingRequest {
            op: AccessOp::Read,
            line,
            entry_slot: 0,
        }
    }

    fn wb(line: LineAddr) -> PendingWriteBack {
        PendingWriteBack { line, dirty: true }
    }

    #[test]
    fn slot_owner_is_periodic() {
        let s = TdmSchedule::new(vec![0, 1, 2, 3]);
        assert_eq!(slot_owner(&s, 5), 1);
        let non_1s = TdmSchedule::new(vec![0, 1, 1]);
        assert_eq!(slot_owner(&non_1s, 2), 1);
        let single = TdmSchedule::new(vec![0]);
        assert_eq!(slot_owner(&single, 1234), 0);
    }

    #[test]
    fn arbitrate_serves_the_only_pending_class() {
        let mut b = PendingBuffers::new(4);
        b.prb = Some(req(1));
        assert_eq!(b.arbitrate(), Some(ArbClass::Request));
        assert_eq!(b.arbitrate(), Some(ArbClass::Request));
    }

    #[test]
    fn arbitrate_alternates_when_both_pending() {
        let mut b = PendingBuffers::new(4);
        b.prb = Some(req(1));
        b.enqueue_writeback(0, 0, wb(2)).unwrap();
        b.enqueue_writeback(0, 0, wb(3)).unwrap();
        // last served = request initially, so the write-back goes first.
        assert_eq!(b.arbitrate(), Some(ArbClass::WriteBack));
        assert_eq!(b.arbitrate(), Some(ArbClass::Request));
        assert_eq!(b.arbitrate(), Some(ArbClass::WriteBack));
    }

    #[test]
    fn arbitrate_idle_when_empty() {
        let mut b = PendingBuffers::new(4);
        assert_eq!(b.arbitrate(), None);
    }

    #[test]
    fn pwb_preserves_fifo_order() {
        let mut b = PendingBuffers::new(3);
        for l in [7, 8, 9] {
            b.enqueue_writeback(0, 0, wb(l)).unwrap();
        }
        let drained: Vec<_> = std::iter::from_fn(|| b.pop_writeback()).map(|w| w.line).collect();
        assert_eq!(drained, vec![7, 8, 9]);
    }

    #[test]
    fn pwb_overflow_is_an_error() {
        let mut b = PendingBuffers::new(3);
        for l in 0..3 {
            b.enqueue_writeback(2, 10, wb(l)).unwrap();
        }
        let err = b.enqueue_writeback(2, 10, wb(3)).unwrap_err();
        assert_eq!(err.core, 2);
        assert_eq!(err.slot, 10);
    }

    #[test]
    fn victim_writeback_served_after_n_minus_1_predecessors() {
        // n-1 write-backs queued ahead of the victim's: with the PRB kept
        // busy the victim drains in the (n-1)-th write-back service.
        let n = 4;
        let mut b = PendingBuffers::new(n - 1);
        for l in 0..(n as u64 - 2) {
            b.enqueue_writeback(0, 0, wb(100 + l)).unwrap();
        }
        b.enqueue_writeback(0, 0, wb(999)).unwrap();
        b.prb = Some(req(1));
        let mut wb_services = 0;
        loop {
            match b.arbitrate() {
                Some(ArbClass::WriteBack) => {
                    wb_services += 1;
                    if b.pop_writeback().unwrap().line == 999 {
                        break;
                    }
                }
                Some(ArbClass::Request) => {}
                None => unreachable!(),
            }
        }
        assert_eq!(wb_services, n - 1);
    }
}
