//! Event recording for instrumented runs.
//!
//! Every event emission takes one fetch-add on a shared counter and one
//! append to the emitting thread's local log, so recording is wait-free per
//! event and never serializes the stack operations being observed. Operation
//! ids are the invocation's sequence number. After all workers join, the
//! logs merge into a complete history; removal keys sort into dense ranks
//! and elimination marks become advisory metadata.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::history::{Event, EventPayload, History, OpId, PopResult};

/// How one pop's removal is ordered relative to the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalTag {
    /// Key of the removal action; ties on `primary` order reads (phase 1)
    /// after the update that installed the same version (phase 0), and the
    /// response sequence breaks what remains.
    Key { primary: u64, phase: u8 },
    /// The pop exchanged with a concurrent push and never touched the
    /// shared structure.
    Eliminated,
}

impl RemovalTag {
    pub fn keyed(primary: u64, phase: u8) -> RemovalTag {
        RemovalTag::Key { primary, phase }
    }
}

/// Render a value id as the globally unique token `t<thread>v<counter>`.
pub fn value_token(value: u64) -> String {
    format!("t{}v{}", value >> 32, value as u32)
}

/// Pack a (thread, counter) pair into a value id.
pub fn value_id(thread: usize, counter: u32) -> u64 {
    ((thread as u64) << 32) | counter as u64
}

#[derive(Debug, Default)]
pub struct Recorder {
    seq: AtomicU64,
}

impl Recorder {
    pub fn new() -> Recorder {
        Recorder::default()
    }

    fn next_seq(&self) -> u64 {
        self.seq.fetch_add(1, Ordering::AcqRel)
    }
}

#[derive(Debug, Clone, Copy)]
enum RawPayload {
    InvPush(u64),
    InvPop,
    RetPush,
    RetPopValue(u64),
    RetPopEmpty,
}

#[derive(Debug, Clone, Copy)]
struct RawEvent {
    seq: u64,
    op: u64,
    thread: usize,
    payload: RawPayload,
}

/// One worker's event log. Owned by its thread during the run, merged by the
/// harness afterwards.
#[derive(Debug)]
pub struct ThreadLog {
    thread: usize,
    events: Vec<RawEvent>,
    tags: Vec<(u64, RemovalTag)>,
    push_timestamps: Vec<(u64, (u64, u64))>,
}

impl ThreadLog {
    pub fn new(thread: usize) -> ThreadLog {
        ThreadLog {
            thread,
            events: Vec::new(),
            tags: Vec::new(),
            push_timestamps: Vec::new(),
        }
    }

    pub fn inv_push(&mut self, rec: &Recorder, value: u64) -> u64 {
        let seq = rec.next_seq();
        self.events.push(RawEvent {
            seq,
            op: seq,
            thread: self.thread,
            payload: RawPayload::InvPush(value),
        });
        seq
    }

    pub fn inv_pop(&mut self, rec: &Recorder) -> u64 {
        let seq = rec.next_seq();
        self.events.push(RawEvent {
            seq,
            op: seq,
            thread: self.thread,
            payload: RawPayload::InvPop,
        });
        seq
    }

    pub fn ret_push(&mut self, rec: &Recorder, op: u64) {
        let seq = rec.next_seq();
        self.events.push(RawEvent {
            seq,
            op,
            thread: self.thread,
            payload: RawPayload::RetPush,
        });
    }

    pub fn ret_pop(&mut self, rec: &Recorder, op: u64, value: Option<u64>) {
        let seq = rec.next_seq();
        self.events.push(RawEvent {
            seq,
            op,
            thread: self.thread,
            payload: match value {
                Some(v) => RawPayload::RetPopValue(v),
                None => RawPayload::RetPopEmpty,
            },
        });
    }

    pub fn tag(&mut self, op: u64, tag: RemovalTag) {
        self.tags.push((op, tag));
    }

    pub fn push_timestamp(&mut self, op: u64, ts: (u64, u64)) {
        self.push_timestamps.push((op, ts));
    }
}

/// Merged outcome of a recorded run.
#[derive(Debug)]
pub struct Materialized {
    pub history: History,
    pub warnings: Vec<String>,
    /// Timestamp interval per push op (timestamped stack only).
    pub push_timestamps: HashMap<OpId, (u64, u64)>,
}

/// Merge per-thread logs into a complete history. Removal keys sort by
/// (primary, phase, response seq) into gapless ranks 1..k over the ranked
/// pops; eliminated pops get `elim` marks instead.
pub fn materialize(logs: Vec<ThreadLog>) -> Materialized {
    let mut raw: Vec<RawEvent> = Vec::new();
    let mut tags: Vec<(u64, RemovalTag)> = Vec::new();
    let mut push_ts: Vec<(u64, (u64, u64))> = Vec::new();
    for log in logs {
        raw.extend(log.events);
        tags.extend(log.tags);
        push_ts.extend(log.push_timestamps);
    }
    raw.sort_by_key(|e| e.seq);

    let mut ret_seq: HashMap<u64, u64> = HashMap::new();
    for ev in &raw {
        match ev.payload {
            RawPayload::RetPush | RawPayload::RetPopValue(_) | RawPayload::RetPopEmpty => {
                ret_seq.insert(ev.op, ev.seq);
            }
            _ => {}
        }
    }

    let events: Vec<Event> = raw
        .iter()
        .map(|ev| Event {
            seq: ev.seq,
            op: OpId(ev.op),
            thread: format!("t{}", ev.thread),
            payload: match ev.payload {
                RawPayload::InvPush(v) => EventPayload::InvPush {
                    value: value_token(v),
                },
                RawPayload::InvPop => EventPayload::InvPop,
                RawPayload::RetPush => EventPayload::RetPush,
                RawPayload::RetPopValue(v) => EventPayload::RetPop {
                    result: PopResult::Value(value_token(v)),
                },
                RawPayload::RetPopEmpty => EventPayload::RetPop {
                    result: PopResult::Empty,
                },
            },
        })
        .collect();

    let mut keyed: Vec<(u64, u8, u64, u64)> = Vec::new();
    let mut elim: BTreeSet<OpId> = BTreeSet::new();
    for (op, tag) in tags {
        match tag {
            RemovalTag::Key { primary, phase } => {
                let ret = ret_seq.get(&op).copied().unwrap_or(u64::MAX);
                keyed.push((primary, phase, ret, op));
            }
            RemovalTag::Eliminated => {
                elim.insert(OpId(op));
            }
        }
    }
    keyed.sort();
    let removal: BTreeMap<OpId, u64> = keyed
        .iter()
        .enumerate()
        .map(|(i, (_, _, _, op))| (OpId(*op), i as u64 + 1))
        .collect();

    let (history, warnings) = History::assemble(events, removal, elim);
    let push_timestamps = push_ts
        .into_iter()
        .map(|(op, ts)| (OpId(op), ts))
        .collect();
    Materialized {
        history,
        warnings,
        push_timestamps,
    }
}
