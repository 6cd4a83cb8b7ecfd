//! HSY elimination-backoff stack: Treiber fast path, and on contention a
//! rendezvous in a collision array where a push/pop pair exchanges the value
//! without touching the shared list.
//!
//! A collision slot is a single word: free, a waiting push carrying its
//! value, a waiting pop, or a completed exchange. Whichever side was waiting
//! resets the slot after observing completion, so a slot is reused only
//! after both parties are done with it.

use std::sync::atomic::{AtomicU64, Ordering};

use super::recorder::RemovalTag;
use super::treiber::{ListCore, PopAttempt};
use super::{InstrumentedStack, PopOutcome, PushInfo};

const TAG_SHIFT: u32 = 62;
const VALUE_MASK: u64 = (1 << TAG_SHIFT) - 1;
const FREE: u64 = 0;
const TAG_PUSH_WAIT: u64 = 1;
const TAG_POP_WAIT: u64 = 2;
const TAG_DONE: u64 = 3;

fn slot_word(tag: u64, value: u64) -> u64 {
    debug_assert!(value <= VALUE_MASK);
    (tag << TAG_SHIFT) | value
}

fn slot_tag(word: u64) -> u64 {
    word >> TAG_SHIFT
}

fn slot_value(word: u64) -> u64 {
    word & VALUE_MASK
}

#[derive(Debug, Clone)]
pub struct HsyConfig {
    /// Collision array size.
    pub slots: usize,
    /// Spins while waiting in a collision slot before backing out.
    pub spins: u32,
    /// Test hook: with the fast path disabled every operation must finish
    /// via the collision array.
    pub fast_path: bool,
}

impl Default for HsyConfig {
    fn default() -> HsyConfig {
        HsyConfig {
            slots: 4,
            spins: 256,
            fast_path: true,
        }
    }
}

pub struct HsyStack {
    core: ListCore,
    slots: Vec<AtomicU64>,
    config: HsyConfig,
}

enum Exchange {
    Done(u64),
    Missed,
}

impl HsyStack {
    pub fn new(threads: usize, per_thread: usize, config: HsyConfig) -> HsyStack {
        assert!(config.slots > 0);
        HsyStack {
            core: ListCore::new(threads, per_thread),
            slots: (0..config.slots).map(|_| AtomicU64::new(FREE)).collect(),
            config,
        }
    }

    fn pick_slot(&self, thread: usize, round: u32) -> &AtomicU64 {
        // Cheap deterministic spread; contention quality is irrelevant to
        // correctness.
        let i = (thread as u64)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(round as u64) as usize;
        &self.slots[i % self.slots.len()]
    }

    fn try_exchange_push(&self, slot: &AtomicU64, value: u64) -> Exchange {
        let word = slot.load(Ordering::Acquire);
        match slot_tag(word) {
            _ if word == FREE => {
                let waiting = slot_word(TAG_PUSH_WAIT, value);
                if slot
                    .compare_exchange(FREE, waiting, Ordering::AcqRel, Ordering::Acquire)
                    .is_err()
                {
                    return Exchange::Missed;
                }
                for spin in 0..self.config.spins {
                    if slot_tag(slot.load(Ordering::Acquire)) == TAG_DONE {
                        slot.store(FREE, Ordering::Release);
                        return Exchange::Done(value);
                    }
                    if spin % 16 == 15 {
                        std::thread::yield_now();
                    }
                    std::hint::spin_loop();
                }
                match slot.compare_exchange(waiting, FREE, Ordering::AcqRel, Ordering::Acquire) {
                    Ok(_) => Exchange::Missed,
                    Err(_) => {
                        // A pop took the value between timeout and reset.
                        while slot_tag(slot.load(Ordering::Acquire)) != TAG_DONE {
                            std::thread::yield_now();
                        }
                        slot.store(FREE, Ordering::Release);
                        Exchange::Done(value)
                    }
                }
            }
            TAG_POP_WAIT => {
                if slot
                    .compare_exchange(
                        word,
                        slot_word(TAG_DONE, value),
                        Ordering::AcqRel,
                        Ordering::Acquire,
                    )
                    .is_ok()
                {
                    // The waiting pop consumes the value and resets the slot.
                    Exchange::Done(value)
                } else {
                    Exchange::Missed
                }
            }
            _ => Exchange::Missed,
        }
    }

    fn try_exchange_pop(&self, slot: &AtomicU64) -> Exchange {
        let word = slot.load(Ordering::Acquire);
        match slot_tag(word) {
            TAG_PUSH_WAIT => {
                let value = slot_value(word);
                if slot
                    .compare_exchange(
                        word,
                        slot_word(TAG_DONE, value),
                        Ordering::AcqRel,
                        Ordering::Acquire,
                    )
                    .is_ok()
                {
                    // The waiting push resets the slot.
                    Exchange::Done(value)
                } else {
                    Exchange::Missed
                }
            }
            _ if word == FREE => {
                let waiting = slot_word(TAG_POP_WAIT, 0);
                if slot
                    .compare_exchange(FREE, waiting, Ordering::AcqRel, Ordering::Acquire)
                    .is_err()
                {
                    return Exchange::Missed;
                }
                for spin in 0..self.config.spins {
                    let seen = slot.load(Ordering::Acquire);
                    if slot_tag(seen) == TAG_DONE {
                        slot.store(FREE, Ordering::Release);
                        return Exchange::Done(slot_value(seen));
                    }
                    if spin % 16 == 15 {
                        std::thread::yield_now();
                    }
                    std::hint::spin_loop();
                }
                match slot.compare_exchange(waiting, FREE, Ordering::AcqRel, Ordering::Acquire) {
                    Ok(_) => Exchange::Missed,
                    Err(_) => {
                        let mut seen = slot.load(Ordering::Acquire);
                        while slot_tag(seen) != TAG_DONE {
                            std::thread::yield_now();
                            seen = slot.load(Ordering::Acquire);
                        }
                        slot.store(FREE, Ordering::Release);
                        Exchange::Done(slot_value(seen))
                    }
                }
            }
            _ => Exchange::Missed,
        }
    }
}

impl InstrumentedStack for HsyStack {
    fn push(&self, thread: usize, value: u64) -> PushInfo {
        let node = self.core.prepare_node(thread, value);
        let mut round = 0;
        loop {
            if self.config.fast_path && self.core.try_push(node) {
                return PushInfo::default();
            }
            let slot = self.pick_slot(thread, round);
            round = round.wrapping_add(1);
            if let Exchange::Done(_) = self.try_exchange_push(slot, value) {
                return PushInfo::default();
            }
        }
    }

    fn pop(&self, thread: usize) -> PopOutcome {
        let mut round = 0;
        loop {
            if self.config.fast_path {
                match self.core.try_pop() {
                    PopAttempt::Empty { observed_version } => {
                        return PopOutcome {
                            value: None,
                            tag: RemovalTag::keyed(observed_version as u64, 1),
                        }
                    }
                    PopAttempt::Got {
                        value,
                        installed_version,
                    } => {
                        return PopOutcome {
                            value: Some(value),
                            tag: RemovalTag::keyed(installed_version as u64, 0),
                        }
                    }
                    PopAttempt::Contended => {}
                }
            }
            let slot = self.pick_slot(thread.wrapping_add(1), round);
            round = round.wrapping_add(1);
            if let Exchange::Done(value) = self.try_exchange_pop(slot) {
                return PopOutcome {
                    value: Some(value),
                    tag: RemovalTag::Eliminated,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn uncontended_behaves_like_treiber() {
        let s = HsyStack::new(1, 8, HsyConfig::default());
        s.push(0, 10);
        s.push(0, 11);
        assert_eq!(s.pop(0).value, Some(11));
        assert_eq!(s.pop(0).value, Some(10));
        let empty = s.pop(0);
        assert_eq!(empty.value, None);
        assert!(matches!(empty.tag, RemovalTag::Key { .. }));
    }

    #[test]
    fn forced_collision_exchanges_the_value() {
        // Fast path disabled: the only way to finish is the collision array.
        let config = HsyConfig {
            slots: 1,
            spins: 10_000,
            fast_path: false,
        };
        let s = Arc::new(HsyStack::new(2, 4, config));
        let pusher = {
            let s = Arc::clone(&s);
            std::thread::spawn(move || s.push(0, 77))
        };
        let popper = {
            let s = Arc::clone(&s);
            std::thread::spawn(move || s.pop(1))
        };
        pusher.join().unwrap();
        let out = popper.join().unwrap();
        assert_eq!(out.value, Some(77));
        assert_eq!(out.tag, RemovalTag::Eliminated);
    }
}
