use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::NetError;

pub const DEFAULT_EVENT_BUDGET: u64 = 1_000_000;

struct Entry<E> {
    at: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    // Reversed so the max-heap pops the earliest (time, insertion) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Discrete-event queue over a virtual millisecond clock. Events fire in
/// `(time, insertion order)` order.
pub struct Scheduler<E> {
    now: u64,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    budget: u64,
    processed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            budget: DEFAULT_EVENT_BUDGET,
            processed: 0,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn is_idle(&self) -> bool {
        self.heap.is_empty()
    }

    /// Total events popped over the scheduler's lifetime.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule_at(&mut self, at: u64, event: E) {
        let at = at.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { at, seq, event });
    }

    pub fn schedule_in(&mut self, delay_ms: u64, event: E) {
        self.schedule_at(self.now + delay_ms, event);
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.at)
    }

    pub fn pop(&mut self) -> Option<E> {
        let e = self.heap.pop()?;
        self.now = e.at;
        self.processed += 1;
        Some(e.event)
    }

    /// Runs `handler` on events until the queue drains. Fails once more than
    /// `budget` events have been processed in this call.
    pub fn run_until_idle(
        &mut self,
        mut handler: impl FnMut(&mut Self, E),
    ) -> Result<u64, NetError> {
        let mut count = 0u64;
        while let Some(ev) = self.pop() {
            count += 1;
            if count > self.budget {
                return Err(NetError::BudgetExceeded {
                    budget: self.budget,
                    now_ms: self.now,
                    pending: self.heap.len(),
                });
            }
            handler(self, ev);
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_schedule_processes_nothing() {
        let mut s: Scheduler<()> = Scheduler::new();
        assert_eq!(s.run_until_idle(|_, _| {}).unwrap(), 0);
        assert_eq!(s.now(), 0);
    }

    #[test]
    fn time_then_insertion_order() {
        let mut s = Scheduler::new();
        s.schedule_at(5, "c");
        s.schedule_at(1, "a");
        s.schedule_at(5, "d");
        s.schedule_at(1, "b");
        let mut seen = Vec::new();
        s.run_until_idle(|s, e| seen.push((s.now(), e))).unwrap();
        assert_eq!(seen, vec![(1, "a"), (1, "b"), (5, "c"), (5, "d")]);
    }

    #[test]
    fn self_rescheduling_loop_hits_budget() {
        let mut s = Scheduler::new().with_budget(1000);
        s.schedule_at(0, ());
        let err = s.run_until_idle(|s, ()| s.schedule_in(1, ())).unwrap_err();
        assert!(matches!(err, NetError::BudgetExceeded { budget: 1000, .. }));
    }

    #[test]
    fn past_times_clamp_to_now() {
        let mut s = Scheduler::new();
        s.schedule_at(10, 1);
        s.pop();
        s.schedule_at(3, 2);
        s.pop();
        assert_eq!(s.now(), 10);
    }
}
