//! Rank runtime and message passing.
//!
//! [`run_ranks`] executes one program per rank on its own thread. Ranks talk
//! through a [`Comm`]: tagged point-to-point messages with MPI-like matching
//! (per source, destination and tag, messages are received in send order)
//! plus the handful of collectives the grid needs.
//!
//! Sends are buffered, so a send handle is complete as soon as it is posted.
//! A receive declares the largest payload it accepts; anything larger is an
//! error at the receiver, never a truncation. If every live rank is blocked
//! on something that can no longer happen the runtime reports a deadlock
//! instead of hanging.

use std::any::Any;
use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use thiserror::Error;

pub type Rank = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("rank {rank} outside communicator of size {size}")]
    InvalidRank { rank: Rank, size: usize },
    #[error("message from rank {sender} with tag {tag} has {actual} bytes but the receive allows at most {max}")]
    ReceiveOverflow {
        sender: Rank,
        tag: Tag,
        actual: usize,
        max: usize,
    },
    #[error("deadlock detected: {0}")]
    Deadlock(String),
    #[error("aborted because rank {rank} failed: {message}")]
    Aborted { rank: Rank, message: String },
    #[error("rank {rank} called {got:?} while other ranks called {expected:?}")]
    CollectiveMismatch {
        rank: Rank,
        expected: CollectiveKind,
        got: CollectiveKind,
    },
    #[error("rank {rank} panicked: {message}")]
    Panicked { rank: Rank, message: String },
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(&'static str),
    #[error("a communicator needs at least one rank")]
    NoRanks,
}

/// Which part of the library a message belongs to. Stored in the upper half
/// of a [`Tag`] so that concurrent subsystems never match each other's
/// messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u32)]
pub enum Subsystem {
    User = 0,
    Exchange = 1,
    Structure = 2,
    Migration = 3,
    Gather = 4,
}

impl Subsystem {
    pub const ALL: [Subsystem; 5] = [
        Subsystem::User,
        Subsystem::Exchange,
        Subsystem::Structure,
        Subsystem::Migration,
        Subsystem::Gather,
    ];

    fn from_raw(v: u32) -> Option<Subsystem> {
        Subsystem::ALL.get(v as usize).copied()
    }
}

/// Message tag: subsystem in the high 32 bits, user tag in the low 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(u64);

impl Tag {
    pub fn new(subsystem: Subsystem, user: u32) -> Tag {
        Tag(((subsystem as u64) << 32) | user as u64)
    }

    pub fn user(user: u32) -> Tag {
        Tag::new(Subsystem::User, user)
    }

    pub fn from_raw(raw: u64) -> Option<Tag> {
        Subsystem::from_raw((raw >> 32) as u32).map(|_| Tag(raw))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn subsystem(self) -> Subsystem {
        Subsystem::from_raw((self.0 >> 32) as u32).expect("tags are built from valid subsystems")
    }

    pub fn user_tag(self) -> u32 {
        self.0 as u32
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.subsystem(), self.user_tag())
    }
}

/// A message in transit. The wire image is little-endian:
/// `u32 source, u32 destination, u64 tag, u64 payload length, payload`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub source: Rank,
    pub destination: Rank,
    pub tag: Tag,
    pub payload: Vec<u8>,
}

impl Envelope {
    const HEADER: usize = 4 + 4 + 8 + 8;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER + self.payload.len());
        out.extend_from_slice(&(self.source as u32).to_le_bytes());
        out.extend_from_slice(&(self.destination as u32).to_le_bytes());
        out.extend_from_slice(&self.tag.raw().to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Envelope, TransportError> {
        if bytes.len() < Self::HEADER {
            return Err(TransportError::MalformedEnvelope("truncated header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let tag = Tag::from_raw(u64_at(8)).ok_or(TransportError::MalformedEnvelope("unknown subsystem"))?;
        let len = u64_at(16) as usize;
        if bytes.len() - Self::HEADER != len {
            return Err(TransportError::MalformedEnvelope("payload length mismatch"));
        }
        Ok(Envelope {
            source: u32_at(0) as Rank,
            destination: u32_at(4) as Rank,
            tag,
            payload: bytes[Self::HEADER..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectiveKind {
    AllReduce,
    AllGather,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Min,
    Max,
    Sum,
}

/// Values that can travel through [`Comm::allreduce`].
pub trait Reducible: Copy {
    fn to_wire(self) -> [u8; 8];
    fn from_wire(bytes: [u8; 8]) -> Self;
    fn combine(self, other: Self, op: ReduceOp) -> Self;
}

impl Reducible for f64 {
    fn to_wire(self) -> [u8; 8] {
        self.to_le_bytes()
    }
    fn from_wire(bytes: [u8; 8]) -> Self {
        f64::from_le_bytes(bytes)
    }
    fn combine(self, other: Self, op: ReduceOp) -> Self {
        match op {
            ReduceOp::Min => self.min(other),
            ReduceOp::Max => self.max(other),
            ReduceOp::Sum => self + other,
        }
    }
}

macro_rules! int_reducible {
    ($($t:ty),*) => {$(
        impl Reducible for $t {
            fn to_wire(self) -> [u8; 8] {
                (self as u64).to_le_bytes()
            }
            fn from_wire(bytes: [u8; 8]) -> Self {
                u64::from_le_bytes(bytes) as $t
            }
            fn combine(self, other: Self, op: ReduceOp) -> Self {
                match op {
                    ReduceOp::Min => self.min(other),
                    ReduceOp::Max => self.max(other),
                    ReduceOp::Sum => self + other,
                }
            }
        }
    )*};
}

int_reducible!(u64, i64, usize);

/// Per-rank traffic counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    /// Messages sent, indexed by `Subsystem as usize`.
    pub messages_by_subsystem: [u64; 5],
    pub allreduces: u64,
    pub allgathers: u64,
    pub barriers: u64,
}

impl CommStats {
    pub fn collectives(&self) -> u64 {
        self.allreduces + self.allgathers + self.barriers
    }

    pub fn messages(&self, subsystem: Subsystem) -> u64 {
        self.messages_by_subsystem[subsystem as usize]
    }

    /// Adds `other` counter-wise.
    pub fn accumulate(&mut self, other: &CommStats) {
        self.messages_sent += other.messages_sent;
        self.bytes_sent += other.bytes_sent;
        for (a, b) in self.messages_by_subsystem.iter_mut().zip(other.messages_by_subsystem) {
            *a += b;
        }
        self.allreduces += other.allreduces;
        self.allgathers += other.allgathers;
        self.barriers += other.barriers;
    }

    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &CommStats) -> CommStats {
        let mut by = [0; 5];
        for (i, v) in by.iter_mut().enumerate() {
            *v = self.messages_by_subsystem[i] - earlier.messages_by_subsystem[i];
        }
        CommStats {
            messages_sent: self.messages_sent - earlier.messages_sent,
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            messages_by_subsystem: by,
            allreduces: self.allreduces - earlier.allreduces,
            allgathers: self.allgathers - earlier.allgathers,
            barriers: self.barriers - earlier.barriers,
        }
    }
}

#[must_use = "send handles should be completed with Comm::wait_send"]
#[derive(Debug)]
pub struct SendHandle {
    destination: Rank,
    tag: Tag,
}

impl SendHandle {
    pub fn destination(&self) -> Rank {
        self.destination
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }
}

#[must_use = "receive handles must be completed with Comm::wait_receive"]
#[derive(Debug)]
pub struct RecvHandle {
    source: Rank,
    tag: Tag,
    seq: u64,
    max_len: usize,
}

impl RecvHandle {
    pub fn source(&self) -> Rank {
        self.source
    }
}

#[derive(Default)]
struct Mailbox {
    sent: u64,
    pending: BTreeMap<u64, Vec<u8>>,
}

struct CollectiveSlot {
    kind: CollectiveKind,
    blocks: Vec<Option<Vec<u8>>>,
    arrived: usize,
    taken: usize,
}

#[derive(Debug, Clone)]
enum Waiting {
    Receive { source: Rank, tag: Tag, seq: u64 },
    Collective { seq: u64 },
}

#[derive(Debug, Clone)]
enum Failure {
    Rank { rank: Rank, message: String },
    Deadlock(String),
    Mismatch(TransportError),
}

struct State {
    mailboxes: FxHashMap<(Rank, Rank, Tag), Mailbox>,
    collectives: BTreeMap<u64, CollectiveSlot>,
    waiting: Vec<Option<Waiting>>,
    finished: Vec<bool>,
    failure: Option<Failure>,
}

impl State {
    fn satisfiable(&self, rank: Rank, w: &Waiting) -> bool {
        match w {
            Waiting::Receive { source, tag, seq } => self
                .mailboxes
                .get(&(*source, rank, *tag))
                .is_some_and(|m| m.pending.contains_key(seq)),
            Waiting::Collective { seq } => self
                .collectives
                .get(seq)
                .is_some_and(|s| s.arrived == s.blocks.len()),
        }
    }

    fn deadlock(&self) -> Option<String> {
        let all_stuck = (0..self.finished.len()).all(|r| {
            self.finished[r]
                || self.waiting[r]
                    .as_ref()
                    .is_some_and(|w| !self.satisfiable(r, w))
        });
        if !all_stuck {
            return None;
        }
        let mut parts = Vec::new();
        for (r, w) in self.waiting.iter().enumerate() {
            match w {
                Some(Waiting::Receive { source, tag, .. }) => {
                    parts.push(format!("rank {r} waits for a message from rank {source} with tag {tag}"))
                }
                Some(Waiting::Collective { seq }) => {
                    parts.push(format!("rank {r} waits in collective #{seq}"))
                }
                None => parts.push(format!("rank {r} has finished")),
            }
        }
        Some(parts.join("; "))
    }
}

struct Shared {
    size: usize,
    state: Mutex<State>,
    wake: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        // a panicking rank is reported through `Failure`; the state itself
        // stays consistent because every mutation is completed under the lock
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn fail(&self, failure: Failure) {
        let mut st = self.lock();
        if st.failure.is_none() {
            st.failure = Some(failure);
        }
        drop(st);
        self.wake.notify_all();
    }
}

/// Options for [`run_ranks_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// When set, every rank yields a seeded pseudo-random number of times
    /// before each send and blocking wait, perturbing the thread
    /// interleaving reproducibly.
    pub schedule_seed: Option<u64>,
}

/// Handle to the communicator for one rank.
pub struct Comm {
    rank: Rank,
    shared: Arc<Shared>,
    next_collective: Cell<u64>,
    posted: RefCell<FxHashMap<(Rank, Tag), u64>>,
    stats: RefCell<CommStats>,
    jitter: RefCell<Option<ChaCha8Rng>>,
}

impl fmt::Debug for Comm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Comm")
            .field("rank", &self.rank)
            .field("size", &self.shared.size)
            .finish()
    }
}

impl Comm {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.shared.size
    }

    pub fn stats(&self) -> CommStats {
        self.stats.borrow().clone()
    }

    fn check_rank(&self, rank: Rank) -> Result<(), TransportError> {
        if rank < self.size() {
            Ok(())
        } else {
            Err(TransportError::InvalidRank {
                rank,
                size: self.size(),
            })
        }
    }

    fn perturb(&self) {
        if let Some(rng) = self.jitter.borrow_mut().as_mut() {
            for _ in 0..rng.gen_range(0..4) {
                std::thread::yield_now();
            }
        }
    }

    /// Non-blocking send. The payload is buffered immediately.
    pub fn post_send(&self, destination: Rank, tag: Tag, payload: Vec<u8>) -> Result<SendHandle, TransportError> {
        self.check_rank(destination)?;
        self.perturb();
        {
            let mut stats = self.stats.borrow_mut();
            stats.messages_sent += 1;
            stats.bytes_sent += payload.len() as u64;
            stats.messages_by_subsystem[tag.subsystem() as usize] += 1;
        }
        let mut st = self.shared.lock();
        let mailbox = st.mailboxes.entry((self.rank, destination, tag)).or_default();
        let seq = mailbox.sent;
        mailbox.sent += 1;
        mailbox.pending.insert(seq, payload);
        drop(st);
        self.shared.wake.notify_all();
        Ok(SendHandle { destination, tag })
    }

    /// Non-blocking receive of at most `max_len` bytes. Receives posted for
    /// the same source and tag are matched to messages in posting order.
    pub fn post_receive(&self, source: Rank, tag: Tag, max_len: usize) -> Result<RecvHandle, TransportError> {
        self.check_rank(source)?;
        let mut posted = self.posted.borrow_mut();
        let counter = posted.entry((source, tag)).or_insert(0);
        let seq = *counter;
        *counter += 1;
        Ok(RecvHandle {
            source,
            tag,
            seq,
            max_len,
        })
    }

    pub fn wait_send(&self, handle: SendHandle) -> Result<(), TransportError> {
        // buffered sends complete at post time; only report aborts
        let _ = handle;
        let st = self.shared.lock();
        match &st.failure {
            Some(f) => Err(failure_error(f)),
            None => Ok(()),
        }
    }

    pub fn wait_receive(&self, handle: RecvHandle) -> Result<Vec<u8>, TransportError> {
        let key = (handle.source, self.rank, handle.tag);
        let seq = handle.seq;
        let payload = self.block_until(
            Waiting::Receive {
                source: handle.source,
                tag: handle.tag,
                seq,
            },
            |st| {
                let mailbox = st.mailboxes.get_mut(&key)?;
                mailbox.pending.remove(&seq)
            },
        )?;
        if payload.len() > handle.max_len {
            return Err(TransportError::ReceiveOverflow {
                sender: handle.source,
                tag: handle.tag,
                actual: payload.len(),
                max: handle.max_len,
            });
        }
        Ok(payload)
    }

    pub fn wait_all_sends(&self, handles: Vec<SendHandle>) -> Result<(), TransportError> {
        handles.into_iter().try_for_each(|h| self.wait_send(h))
    }

    pub fn wait_all_receives(&self, handles: Vec<RecvHandle>) -> Result<Vec<Vec<u8>>, TransportError> {
        handles.into_iter().map(|h| self.wait_receive(h)).collect()
    }

    /// Blocking convenience wrapper around post/wait.
    pub fn send(&self, destination: Rank, tag: Tag, payload: Vec<u8>) -> Result<(), TransportError> {
        let h = self.post_send(destination, tag, payload)?;
        self.wait_send(h)
    }

    pub fn receive(&self, source: Rank, tag: Tag, max_len: usize) -> Result<Vec<u8>, TransportError> {
        let h = self.post_receive(source, tag, max_len)?;
        self.wait_receive(h)
    }

    /// Every rank's block, ordered by rank, identical on all ranks.
    pub fn allgather_variable(&self, block: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError> {
        self.stats.borrow_mut().allgathers += 1;
        self.collective(CollectiveKind::AllGather, block)
    }

    /// Reduces one value over all ranks. The reduction is evaluated in
    /// ascending rank order on every rank, so sums are bitwise reproducible.
    pub fn allreduce<T: Reducible>(&self, value: T, op: ReduceOp) -> Result<T, TransportError> {
        self.stats.borrow_mut().allreduces += 1;
        let blocks = self.collective(CollectiveKind::AllReduce, value.to_wire().to_vec())?;
        let mut values = blocks
            .into_iter()
            .map(|b| T::from_wire(b.try_into().expect("allreduce blocks are 8 bytes")));
        let first = values.next().expect("communicators have at least one rank");
        Ok(values.fold(first, |acc, v| acc.combine(v, op)))
    }

    pub fn barrier(&self) -> Result<(), TransportError> {
        self.stats.borrow_mut().barriers += 1;
        self.collective(CollectiveKind::Barrier, Vec::new()).map(|_| ())
    }

    fn collective(&self, kind: CollectiveKind, block: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError> {
        self.perturb();
        let seq = self.next_collective.get();
        self.next_collective.set(seq + 1);
        let size = self.size();
        {
            let mut st = self.shared.lock();
            let slot = st.collectives.entry(seq).or_insert_with(|| CollectiveSlot {
                kind,
                blocks: vec![None; size],
                arrived: 0,
                taken: 0,
            });
            if slot.kind != kind {
                let err = TransportError::CollectiveMismatch {
                    rank: self.rank,
                    expected: slot.kind,
                    got: kind,
                };
                if st.failure.is_none() {
                    st.failure = Some(Failure::Mismatch(err.clone()));
                }
                drop(st);
                self.shared.wake.notify_all();
                return Err(err);
            }
            slot.blocks[self.rank] = Some(block);
            slot.arrived += 1;
        }
        self.shared.wake.notify_all();
        self.block_until(Waiting::Collective { seq }, |st| {
            let slot = st.collectives.get_mut(&seq)?;
            if slot.arrived < size {
                return None;
            }
            let out: Vec<Vec<u8>> = slot
                .blocks
                .iter()
                .map(|b| b.clone().expect("all blocks arrived"))
                .collect();
            slot.taken += 1;
            if slot.taken == size {
                st.collectives.remove(&seq);
            }
            Some(out)
        })
    }

    fn block_until<T>(
        &self,
        waiting: Waiting,
        mut take: impl FnMut(&mut State) -> Option<T>,
    ) -> Result<T, TransportError> {
        self.perturb();
        let mut st = self.shared.lock();
        loop {
            if let Some(f) = &st.failure {
                let err = failure_error(f);
                st.waiting[self.rank] = None;
                return Err(err);
            }
            if let Some(v) = take(&mut st) {
                st.waiting[self.rank] = None;
                return Ok(v);
            }
            st.waiting[self.rank] = Some(waiting.clone());
            if let Some(report) = st.deadlock() {
                st.failure = Some(Failure::Deadlock(report.clone()));
                st.waiting[self.rank] = None;
                drop(st);
                self.shared.wake.notify_all();
                return Err(TransportError::Deadlock(report));
            }
            st = self.shared.wake.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }
}

fn failure_error(f: &Failure) -> TransportError {
    match f {
        Failure::Rank { rank, message } => TransportError::Aborted {
            rank: *rank,
            message: message.clone(),
        },
        Failure::Deadlock(report) => TransportError::Deadlock(report.clone()),
        Failure::Mismatch(e) => e.clone(),
    }
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Runs `program` once per rank, each on its own thread, and returns the
/// per-rank results in rank order. If any rank fails, every rank is aborted
/// and the error of the first failing rank is returned.
pub fn run_ranks<T, E, F>(size: usize, program: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: From<TransportError> + fmt::Display + Send,
    F: Fn(Comm) -> Result<T, E> + Sync,
{
    run_ranks_with(size, RunOptions::default(), program)
}

pub fn run_ranks_with<T, E, F>(size: usize, options: RunOptions, program: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: From<TransportError> + fmt::Display + Send,
    F: Fn(Comm) -> Result<T, E> + Sync,
{
    if size == 0 {
        return Err(TransportError::NoRanks.into());
    }
    let shared = Arc::new(Shared {
        size,
        state: Mutex::new(State {
            mailboxes: FxHashMap::default(),
            collectives: BTreeMap::new(),
            waiting: vec![None; size],
            finished: vec![false; size],
            failure: None,
        }),
        wake: Condvar::new(),
    });

    enum Outcome<T, E> {
        Done(T),
        Failed(E),
        Panicked(String),
    }

    let program = &program;
    let outcomes: Vec<Outcome<T, E>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..size)
            .map(|rank| {
                let shared = Arc::clone(&shared);
                scope.spawn(move || {
                    let comm = Comm {
                        rank,
                        shared: Arc::clone(&shared),
                        next_collective: Cell::new(0),
                        posted: RefCell::new(FxHashMap::default()),
                        stats: RefCell::new(CommStats::default()),
                        jitter: RefCell::new(
                            options
                                .schedule_seed
                                .map(|s| ChaCha8Rng::seed_from_u64(s ^ (rank as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))),
                        ),
                    };
                    let outcome = match catch_unwind(AssertUnwindSafe(|| program(comm))) {
                        Ok(Ok(v)) => Outcome::Done(v),
                        Ok(Err(e)) => {
                            shared.fail(Failure::Rank {
                                rank,
                                message: e.to_string(),
                            });
                            Outcome::Failed(e)
                        }
                        Err(p) => {
                            let message = panic_message(p.as_ref());
                            shared.fail(Failure::Rank {
                                rank,
                                message: message.clone(),
                            });
                            Outcome::Panicked(message)
                        }
                    };
                    let mut st = shared.lock();
                    st.finished[rank] = true;
                    st.waiting[rank] = None;
                    drop(st);
                    shared.wake.notify_all();
                    outcome
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| Outcome::Panicked(panic_message(p.as_ref()))))
            .collect()
    });

    let failure = shared.lock().failure.clone();
    let originating = match &failure {
        Some(Failure::Rank { rank, .. }) => Some(*rank),
        _ => None,
    };
    let mut results = Vec::with_capacity(size);
    let mut first_error = None;
    for (rank, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Outcome::Done(v) => results.push(v),
            Outcome::Failed(e) => {
                if originating == Some(rank) {
                    return Err(e);
                }
                first_error.get_or_insert(e);
            }
            Outcome::Panicked(message) => {
                let e = E::from(TransportError::Panicked { rank, message });
                if originating == Some(rank) {
                    return Err(e);
                }
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(results),
    }
}
