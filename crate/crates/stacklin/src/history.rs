//! Event/history data model and the `stacklin-history v1` text format.
//!
//! A history is the complete record of one concurrent run: a totally ordered
//! sequence of invocation and response events, from which operations and the
//! happened-before relation are derived. Histories are immutable once built.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Identifier of one operation (a single push or pop call).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId(pub u64);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a completed pop handed back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PopResult {
    Value(String),
    Empty,
}

impl PopResult {
    pub fn value(&self) -> Option<&str> {
        match self {
            PopResult::Value(v) => Some(v),
            PopResult::Empty => None,
        }
    }
}

/// Payload of a single event line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    InvPush { value: String },
    InvPop,
    RetPush,
    RetPop { result: PopResult },
}

impl EventPayload {
    pub fn is_invocation(&self) -> bool {
        matches!(self, EventPayload::InvPush { .. } | EventPayload::InvPop)
    }
}

/// One invocation or response record. `seq` is the global position of the
/// event; within a `History` seqs are dense (0..n) and strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub op: OpId,
    pub thread: String,
    pub payload: EventPayload,
}

/// A completed method call: both events of one operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    Push { value: String },
    Pop { result: PopResult },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub id: OpId,
    pub thread: String,
    pub kind: OpKind,
    pub inv_seq: u64,
    pub ret_seq: u64,
}

impl Operation {
    pub fn is_push(&self) -> bool {
        matches!(self.kind, OpKind::Push { .. })
    }

    pub fn is_pop(&self) -> bool {
        matches!(self.kind, OpKind::Pop { .. })
    }

    /// Pushed value for pushes, returned value for value pops, None for
    /// empty pops.
    pub fn value(&self) -> Option<&str> {
        match &self.kind {
            OpKind::Push { value } => Some(value),
            OpKind::Pop { result } => result.value(),
        }
    }

    pub fn returned_empty(&self) -> bool {
        matches!(&self.kind, OpKind::Pop { result: PopResult::Empty })
    }
}

/// A complete history: every invocation has its matching response.
///
/// Incomplete inputs are completed at construction by dropping pending
/// invocations; the drops are reported as warnings, never silently.
#[derive(Debug, Clone)]
pub struct History {
    events: Vec<Event>,
    ops: Vec<Operation>,
    by_id: HashMap<OpId, usize>,
    removal_order: BTreeMap<OpId, u64>,
    elim_marks: BTreeSet<OpId>,
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events
            && self.removal_order == other.removal_order
            && self.elim_marks == other.elim_marks
    }
}

impl Eq for History {}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: duplicate operation id {op}")]
    DuplicateOpId { line: usize, op: OpId },
    #[error("line {line}: response for op {op} has no pending invocation")]
    RetWithoutInv { line: usize, op: OpId },
    #[error("line {line}: value {value:?} pushed more than once")]
    DuplicatePushValue { line: usize, value: String },
}

fn malformed(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

pub const HISTORY_HEADER: &str = "stacklin-history v1";

impl History {
    /// Assemble a history from raw events plus removal/elimination metadata.
    ///
    /// Pending invocations are dropped (returned as warnings) and sequence
    /// numbers are re-assigned densely in event order. The caller must supply
    /// structurally sound events: matched inv/ret payload kinds, unique op
    /// ids, distinct push values. The recorder and the parser both guarantee
    /// this; violations here are bugs, not input errors.
    pub fn assemble(
        mut events: Vec<Event>,
        removal_order: BTreeMap<OpId, u64>,
        elim_marks: BTreeSet<OpId>,
    ) -> (History, Vec<String>) {
        events.sort_by_key(|e| e.seq);

        let mut inv_of: HashMap<OpId, usize> = HashMap::new();
        let mut complete: BTreeSet<OpId> = BTreeSet::new();
        for (i, ev) in events.iter().enumerate() {
            if ev.payload.is_invocation() {
                let prev = inv_of.insert(ev.op, i);
                debug_assert!(prev.is_none(), "duplicate invocation for {}", ev.op);
            } else {
                debug_assert!(inv_of.contains_key(&ev.op), "response without invocation");
                complete.insert(ev.op);
            }
        }

        let mut warnings = Vec::new();
        for (op, idx) in &inv_of {
            if !complete.contains(op) {
                let ev = &events[*idx];
                warnings.push(format!(
                    "dropped pending invocation: op {} on thread {}",
                    op, ev.thread
                ));
            }
        }

        let mut kept: Vec<Event> = events
            .into_iter()
            .filter(|e| complete.contains(&e.op))
            .collect();
        for (seq, ev) in kept.iter_mut().enumerate() {
            ev.seq = seq as u64;
        }

        let mut ops = Vec::new();
        let mut pending: HashMap<OpId, (u64, String, EventPayload)> = HashMap::new();
        for ev in &kept {
            match &ev.payload {
                EventPayload::InvPush { .. } | EventPayload::InvPop => {
                    pending.insert(ev.op, (ev.seq, ev.thread.clone(), ev.payload.clone()));
                }
                EventPayload::RetPush => {
                    let (inv_seq, thread, inv) = pending.remove(&ev.op).expect("unmatched ret");
                    let value = match inv {
                        EventPayload::InvPush { value } => value,
                        _ => panic!("push response for non-push op {}", ev.op),
                    };
                    ops.push(Operation {
                        id: ev.op,
                        thread,
                        kind: OpKind::Push { value },
                        inv_seq,
                        ret_seq: ev.seq,
                    });
                }
                EventPayload::RetPop { result } => {
                    let (inv_seq, thread, inv) = pending.remove(&ev.op).expect("unmatched ret");
                    assert!(
                        matches!(inv, EventPayload::InvPop),
                        "pop response for non-pop op {}",
                        ev.op
                    );
                    ops.push(Operation {
                        id: ev.op,
                        thread,
                        kind: OpKind::Pop {
                            result: result.clone(),
                        },
                        inv_seq,
                        ret_seq: ev.seq,
                    });
                }
            }
        }
        ops.sort_by_key(|o| o.inv_seq);
        let by_id = ops.iter().enumerate().map(|(i, o)| (o.id, i)).collect();

        let removal_order: BTreeMap<OpId, u64> = removal_order
            .into_iter()
            .filter(|(op, _)| complete.contains(op))
            .collect();
        let elim_marks: BTreeSet<OpId> = elim_marks
            .into_iter()
            .filter(|op| complete.contains(op))
            .collect();

        (
            History {
                events: kept,
                ops,
                by_id,
                removal_order,
                elim_marks,
            },
            warnings,
        )
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// All operations, ordered by invocation.
    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn op(&self, id: OpId) -> &Operation {
        &self.ops[self.by_id[&id]]
    }

    pub fn get_op(&self, id: OpId) -> Option<&Operation> {
        self.by_id.get(&id).map(|i| &self.ops[*i])
    }

    pub fn pushes(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|o| o.is_push())
    }

    pub fn pops(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|o| o.is_pop())
    }

    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    pub fn removal_rank(&self, id: OpId) -> Option<u64> {
        self.removal_order.get(&id).copied()
    }

    pub fn removal_order(&self) -> &BTreeMap<OpId, u64> {
        &self.removal_order
    }

    /// Pops flagged by the recorder as having exchanged via elimination.
    /// Advisory only: pair detection derives from values and interleaving.
    pub fn elim_marks(&self) -> &BTreeSet<OpId> {
        &self.elim_marks
    }

    /// Sub-history containing only the given operations, with metadata
    /// restricted accordingly. Event order is preserved; seqs re-densify.
    pub fn restrict(&self, keep: &BTreeSet<OpId>) -> History {
        let events = self
            .events
            .iter()
            .filter(|e| keep.contains(&e.op))
            .cloned()
            .collect();
        let removal = self
            .removal_order
            .iter()
            .filter(|(op, _)| keep.contains(op))
            .map(|(op, r)| (*op, *r))
            .collect();
        let elim = self
            .elim_marks
            .iter()
            .filter(|op| keep.contains(op))
            .copied()
            .collect();
        let (h, warnings) = History::assemble(events, removal, elim);
        debug_assert!(warnings.is_empty(), "restrict of a complete history");
        h
    }
}

/// Outcome of parsing a history file.
#[derive(Debug)]
pub struct Parsed {
    pub history: History,
    pub warnings: Vec<String>,
}

fn check_token(line: usize, tok: &str, what: &str) -> Result<(), ParseError> {
    if tok.is_empty() || !tok.is_ascii() {
        return Err(malformed(line, format!("{what} must be a non-empty ASCII token")));
    }
    Ok(())
}

/// Parse the `stacklin-history v1` text format.
pub fn parse_history(text: &str) -> Result<Parsed, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first == HISTORY_HEADER => {}
        Some((_, other)) => {
            return Err(malformed(
                1,
                format!("expected header {HISTORY_HEADER:?}, found {other:?}"),
            ))
        }
        None => return Err(malformed(1, "empty input, expected header")),
    }

    let mut events: Vec<Event> = Vec::new();
    // Method and invocation thread per op id, filled while scanning.
    let mut inv_meta: HashMap<OpId, (bool, String)> = HashMap::new();
    let mut returned: BTreeSet<OpId> = BTreeSet::new();
    let mut push_values: HashMap<String, OpId> = HashMap::new();
    let mut removal: BTreeMap<OpId, u64> = BTreeMap::new();
    let mut ranks_seen: BTreeSet<u64> = BTreeSet::new();
    let mut elim: BTreeSet<OpId> = BTreeSet::new();
    let mut in_metadata = false;

    for (idx, raw) in lines {
        let lineno = idx + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            return Err(malformed(lineno, "blank line"));
        }
        match toks[0] {
            "inv" | "ret" => {
                if in_metadata {
                    return Err(malformed(lineno, "event line after metadata lines"));
                }
            }
            "rm" | "elim" => in_metadata = true,
            other => return Err(malformed(lineno, format!("unknown line kind {other:?}"))),
        }

        match toks[0] {
            "inv" => {
                if toks.len() < 4 {
                    return Err(malformed(lineno, "inv needs op id, thread and method"));
                }
                let op = OpId(toks[1]
                    .parse()
                    .map_err(|_| malformed(lineno, "op id must be an unsigned integer"))?);
                check_token(lineno, toks[2], "thread id")?;
                let thread = toks[2].to_string();
                if inv_meta.contains_key(&op) {
                    return Err(ParseError::DuplicateOpId { line: lineno, op });
                }
                let payload = match toks[3] {
                    "push" => {
                        if toks.len() != 5 {
                            return Err(malformed(lineno, "push invocation needs a value"));
                        }
                        check_token(lineno, toks[4], "value")?;
                        if toks[4] == "empty" {
                            return Err(malformed(lineno, "`empty` is reserved"));
                        }
                        let value = toks[4].to_string();
                        if push_values.insert(value.clone(), op).is_some() {
                            return Err(ParseError::DuplicatePushValue {
                                line: lineno,
                                value,
                            });
                        }
                        EventPayload::InvPush { value }
                    }
                    "pop" => {
                        if toks.len() != 4 {
                            return Err(malformed(lineno, "pop invocation takes no value"));
                        }
                        EventPayload::InvPop
                    }
                    other => return Err(malformed(lineno, format!("unknown method {other:?}"))),
                };
                inv_meta.insert(op, (matches!(payload, EventPayload::InvPush { .. }), thread.clone()));
                events.push(Event {
                    seq: events.len() as u64,
                    op,
                    thread,
                    payload,
                });
            }
            "ret" => {
                if toks.len() < 3 {
                    return Err(malformed(lineno, "ret needs op id and thread"));
                }
                let op = OpId(toks[1]
                    .parse()
                    .map_err(|_| malformed(lineno, "op id must be an unsigned integer"))?);
                check_token(lineno, toks[2], "thread id")?;
                let thread = toks[2].to_string();
                let Some((is_push, inv_thread)) = inv_meta.get(&op) else {
                    return Err(ParseError::RetWithoutInv { line: lineno, op });
                };
                if *inv_thread != thread || returned.contains(&op) {
                    return Err(ParseError::RetWithoutInv { line: lineno, op });
                }
                let payload = if *is_push {
                    if toks.len() != 3 {
                        return Err(malformed(lineno, "push response carries no value"));
                    }
                    EventPayload::RetPush
                } else {
                    if toks.len() != 4 {
                        return Err(malformed(lineno, "pop response needs a value or `empty`"));
                    }
                    check_token(lineno, toks[3], "value")?;
                    let result = if toks[3] == "empty" {
                        PopResult::Empty
                    } else {
                        PopResult::Value(toks[3].to_string())
                    };
                    EventPayload::RetPop { result }
                };
                returned.insert(op);
                events.push(Event {
                    seq: events.len() as u64,
                    op,
                    thread,
                    payload,
                });
            }
            "rm" => {
                if toks.len() != 3 {
                    return Err(malformed(lineno, "rm needs op id and rank"));
                }
                let op = OpId(toks[1]
                    .parse()
                    .map_err(|_| malformed(lineno, "op id must be an unsigned integer"))?);
                let rank: u64 = toks[2]
                    .parse()
                    .map_err(|_| malformed(lineno, "rank must be an unsigned integer"))?;
                if rank == 0 {
                    return Err(malformed(lineno, "ranks start at 1"));
                }
                match inv_meta.get(&op) {
                    Some((false, _)) if returned.contains(&op) => {}
                    _ => return Err(malformed(lineno, format!("rm refers to no completed pop {op}"))),
                }
                if removal.insert(op, rank).is_some() {
                    return Err(malformed(lineno, format!("duplicate rm for op {op}")));
                }
                if !ranks_seen.insert(rank) {
                    return Err(malformed(lineno, format!("duplicate removal rank {rank}")));
                }
            }
            "elim" => {
                if toks.len() != 2 {
                    return Err(malformed(lineno, "elim needs an op id"));
                }
                let op = OpId(toks[1]
                    .parse()
                    .map_err(|_| malformed(lineno, "op id must be an unsigned integer"))?);
                match inv_meta.get(&op) {
                    Some((false, _)) if returned.contains(&op) => {}
                    _ => return Err(malformed(lineno, format!("elim refers to no completed pop {op}"))),
                }
                if !elim.insert(op) {
                    return Err(malformed(lineno, format!("duplicate elim for op {op}")));
                }
            }
            _ => unreachable!(),
        }
    }

    let (history, warnings) = History::assemble(events, removal, elim);
    Ok(Parsed { history, warnings })
}

/// Render a history in the v1 text format. Round-trips with
/// [`parse_history`]: parse(emit(h)) equals h structurally.
pub fn emit_history(h: &History) -> String {
    let mut out = String::new();
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for ev in h.events() {
        match &ev.payload {
            EventPayload::InvPush { value } => {
                out.push_str(&format!("inv {} {} push {}\n", ev.op, ev.thread, value));
            }
            EventPayload::InvPop => {
                out.push_str(&format!("inv {} {} pop\n", ev.op, ev.thread));
            }
            EventPayload::RetPush => {
                out.push_str(&format!("ret {} {}\n", ev.op, ev.thread));
            }
            EventPayload::RetPop { result } => match result {
                PopResult::Value(v) => {
                    out.push_str(&format!("ret {} {} {}\n", ev.op, ev.thread, v));
                }
                PopResult::Empty => {
                    out.push_str(&format!("ret {} {} empty\n", ev.op, ev.thread));
                }
            },
        }
    }
    let mut by_rank: Vec<(u64, OpId)> = h
        .removal_order()
        .iter()
        .map(|(op, rank)| (*rank, *op))
        .collect();
    by_rank.sort();
    for (rank, op) in by_rank {
        out.push_str(&format!("rm {op} {rank}\n"));
    }
    for op in h.elim_marks() {
        out.push_str(&format!("elim {op}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fig7_text;

    #[test]
    fn parses_minimal_push() {
        let text = "stacklin-history v1\ninv 1 t0 push x\nret 1 t0\n";
        let parsed = parse_history(text).unwrap();
        assert!(parsed.warnings.is_empty());
        let ops = parsed.history.ops();
        assert_eq!(ops.len(), 1);
        assert_eq!(ops[0].id, OpId(1));
        assert_eq!(ops[0].kind, OpKind::Push { value: "x".into() });
    }

    #[test]
    fn drops_pending_invocation_with_warning() {
        let text = "stacklin-history v1\ninv 1 t0 push x\nret 1 t0\ninv 9 t3 pop\n";
        let parsed = parse_history(text).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("op 9"));
        assert!(parsed.history.get_op(OpId(9)).is_none());
        assert_eq!(parsed.history.op_count(), 1);
    }

    #[test]
    fn parses_figure_7_execution() {
        let parsed = parse_history(&fig7_text()).unwrap();
        let h = &parsed.history;
        assert_eq!(h.op_count(), 6);
        assert_eq!(h.pushes().count(), 3);
        assert_eq!(h.pops().count(), 3);
        assert_eq!(h.removal_rank(OpId(5)), Some(1));
        assert_eq!(h.removal_rank(OpId(2)), Some(2));
        assert_eq!(h.removal_rank(OpId(6)), Some(3));
        assert_eq!(h.op(OpId(2)).value(), Some("x"));
        assert_eq!(h.op(OpId(5)).value(), Some("z"));
        assert_eq!(h.op(OpId(6)).value(), Some("y"));
    }

    #[test]
    fn emit_empty_history_is_header_only() {
        let (h, _) = History::assemble(Vec::new(), BTreeMap::new(), BTreeSet::new());
        assert_eq!(emit_history(&h), "stacklin-history v1\n");
    }

    #[test]
    fn emit_single_push_is_three_lines() {
        let parsed = parse_history("stacklin-history v1\ninv 1 t0 push x\nret 1 t0\n").unwrap();
        let text = emit_history(&parsed.history);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn figure_7_round_trips_bit_exact() {
        let parsed = parse_history(&fig7_text()).unwrap();
        let emitted = emit_history(&parsed.history);
        assert_eq!(emitted, fig7_text());
        // header + 12 events + 3 rm lines
        assert_eq!(emitted.lines().count(), 16);
        let reparsed = parse_history(&emitted).unwrap();
        assert_eq!(reparsed.history, parsed.history);
    }

    #[test]
    fn rejects_missing_header() {
        let err = parse_history("inv 1 t0 push x\n").unwrap_err();
        assert!(matches!(err, ParseError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn rejects_duplicate_op_id() {
        let text = "stacklin-history v1\ninv 1 t0 push x\ninv 1 t1 pop\n";
        let err = parse_history(text).unwrap_err();
        assert_eq!(err, ParseError::DuplicateOpId { line: 3, op: OpId(1) });
    }

    #[test]
    fn rejects_ret_without_inv() {
        let text = "stacklin-history v1\nret 7 t0\n";
        let err = parse_history(text).unwrap_err();
        assert_eq!(err, ParseError::RetWithoutInv { line: 2, op: OpId(7) });
    }

    #[test]
    fn rejects_ret_on_wrong_thread() {
        let text = "stacklin-history v1\ninv 1 t0 push x\nret 1 t9\n";
        let err = parse_history(text).unwrap_err();
        assert!(matches!(err, ParseError::RetWithoutInv { line: 3, .. }));
    }

    #[test]
    fn rejects_duplicate_push_value() {
        let text = "stacklin-history v1\ninv 1 t0 push x\nret 1 t0\ninv 2 t0 push x\n";
        let err = parse_history(text).unwrap_err();
        assert!(matches!(err, ParseError::DuplicatePushValue { line: 4, .. }));
    }

    #[test]
    fn rejects_reserved_empty_value() {
        let text = "stacklin-history v1\ninv 1 t0 push empty\n";
        assert!(matches!(
            parse_history(text).unwrap_err(),
            ParseError::MalformedLine { line: 2, .. }
        ));
    }

    #[test]
    fn rejects_push_ret_with_value() {
        let text = "stacklin-history v1\ninv 1 t0 push x\nret 1 t0 x\n";
        assert!(matches!(
            parse_history(text).unwrap_err(),
            ParseError::MalformedLine { line: 3, .. }
        ));
    }

    #[test]
    fn rejects_rm_for_push() {
        let text = "stacklin-history v1\ninv 1 t0 push x\nret 1 t0\nrm 1 1\n";
        assert!(matches!(
            parse_history(text).unwrap_err(),
            ParseError::MalformedLine { line: 4, .. }
        ));
    }

    #[test]
    fn rejects_event_after_metadata() {
        let text = concat!(
            "stacklin-history v1\n",
            "inv 1 t0 pop\n",
            "ret 1 t0 empty\n",
            "rm 1 1\n",
            "inv 2 t0 push x\n",
        );
        assert!(matches!(
            parse_history(text).unwrap_err(),
            ParseError::MalformedLine { line: 5, .. }
        ));
    }

    #[test]
    fn stripped_rank_gaps_round_trip() {
        let text = concat!(
            "stacklin-history v1\n",
            "inv 1 t0 push a\n",
            "ret 1 t0\n",
            "inv 2 t0 pop\n",
            "ret 2 t0 a\n",
            "inv 3 t1 pop\n",
            "ret 3 t1 empty\n",
            "rm 2 1\n",
            "rm 3 3\n",
        );
        let parsed = parse_history(text).unwrap();
        assert_eq!(emit_history(&parsed.history), text);
    }
}
