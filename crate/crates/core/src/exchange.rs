//! Updating local copies of remote neighbors.
//!
//! Which cells travel where is decided from the replicated cell table
//! alone: a local cell is sent to every rank owning one of its neighbors
//! (in either arrow direction), and a remote neighbor is received from its
//! owner. The resulting [`TransferPlan`] is cached until the structure or
//! ownership of the grid changes. Exchanges use point-to-point messages
//! only.
//!
//! With [`Batching::PerRank`] all cells for one destination form one
//! message: a `u64` cell count, then per cell its `u64` id, `u32` byte
//! length and bytes, in ascending id order (all little-endian). With
//! [`Batching::PerCell`] every cell travels as its own message holding
//! just its bytes.

use std::collections::BTreeMap;

use crate::cell::{CellData, TransferTag};
use crate::error::GridError;
use crate::grid::Grid;
use crate::mesh::Mesh;
use crate::topology::CellId;
use crate::transport::{Rank, RecvHandle, SendHandle, Subsystem, Tag};
use crate::wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Batching {
    /// One message per cell and destination.
    PerCell,
    /// One message per destination rank.
    #[default]
    PerRank,
}

impl std::str::FromStr for Batching {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-cell" | "cell" => Ok(Batching::PerCell),
            "per-rank" | "rank" => Ok(Batching::PerRank),
            _ => Err(format!("unknown batching mode {s:?}, expected per-cell or per-rank")),
        }
    }
}

/// Send and receive lists of one rank, ascending by rank and by cell id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransferPlan {
    epoch: u64,
    pub send: BTreeMap<Rank, Vec<CellId>>,
    pub receive: BTreeMap<Rank, Vec<CellId>>,
}

impl TransferPlan {
    pub fn build(mesh: &Mesh) -> TransferPlan {
        let me = mesh.rank();
        let mut send: BTreeMap<Rank, Vec<CellId>> = BTreeMap::new();
        let mut dests = Vec::new();
        for &c in mesh.outer_cells() {
            dests.clear();
            let arrows = mesh
                .neighbors_of(c)
                .expect("outer cells are local")
                .iter()
                .chain(mesh.neighbors_to(c).expect("outer cells are local"));
            for nb in arrows {
                let owner = mesh.owners()[&nb.id];
                if owner != me {
                    dests.push(owner);
                }
            }
            dests.sort_unstable();
            dests.dedup();
            for &d in &dests {
                send.entry(d).or_default().push(c);
            }
        }
        let mut receive: BTreeMap<Rank, Vec<CellId>> = BTreeMap::new();
        for &c in mesh.remote_neighbors() {
            receive.entry(mesh.owners()[&c]).or_default().push(c);
        }
        TransferPlan {
            epoch: mesh.epoch(),
            send,
            receive,
        }
    }

    /// Mesh epoch the plan was computed for.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn is_empty(&self) -> bool {
        self.send.is_empty() && self.receive.is_empty()
    }
}

enum Expected {
    Batch(Vec<CellId>),
    Single(CellId),
}

struct PendingReceive {
    source: Rank,
    expected: Expected,
    handle: RecvHandle,
}

pub(crate) struct InFlight {
    tag: TransferTag,
    epoch: u64,
    receives: Option<Vec<PendingReceive>>,
    sends: Option<Vec<SendHandle>>,
    checksum: Option<u64>,
}

fn fnv(h: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
}

impl<D: CellData> Grid<D> {
    /// The current transfer plan, rebuilt if the grid changed since it was
    /// last computed.
    pub fn transfer_plan(&mut self) -> &TransferPlan {
        if self.plan.as_ref().map(TransferPlan::epoch) != Some(self.mesh.epoch()) {
            self.plan = Some(TransferPlan::build(&self.mesh));
        }
        self.plan.as_ref().expect("plan was just built")
    }

    pub fn message_batching(&self) -> Batching {
        self.batching
    }

    pub fn set_message_batching(&mut self, batching: Batching) -> Result<(), GridError> {
        if self.in_flight.is_some() {
            return Err(GridError::ExchangeInFlight);
        }
        self.batching = batching;
        Ok(())
    }

    pub fn exchange_in_flight(&self) -> bool {
        self.in_flight.is_some()
    }

    fn send_checksum(&self, plan: &TransferPlan, tag: TransferTag) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325;
        let mut buf = Vec::new();
        for cells in plan.send.values() {
            for c in cells {
                buf.clear();
                self.data[c].write_transfer(tag, &mut buf);
                fnv(&mut h, &buf);
            }
        }
        h
    }

    /// Starts sending local cells' `tag` slices to the ranks that need them
    /// and posts the matching receives. Collective in the sense that every
    /// rank with a non-empty plan must take part.
    pub fn start_remote_neighbor_copy_updates(&mut self, tag: TransferTag) -> Result<(), GridError> {
        if self.in_flight.is_some() {
            return Err(GridError::ExchangeInFlight);
        }
        self.transfer_plan();
        let plan = self.plan.take().expect("plan exists");
        let result = self.post_exchange(&plan, tag);
        self.plan = Some(plan);
        self.in_flight = Some(result?);
        Ok(())
    }

    fn post_exchange(&self, plan: &TransferPlan, tag: TransferTag) -> Result<InFlight, GridError> {
        let mtag = Tag::new(Subsystem::Exchange, tag);
        let mut receives = Vec::new();
        for (&source, cells) in &plan.receive {
            match self.batching {
                Batching::PerRank => {
                    let max = 8 + cells.iter().map(|c| 12 + self.remote[c].transfer_len(tag)).sum::<usize>();
                    let handle = self.comm.post_receive(source, mtag, max)?;
                    receives.push(PendingReceive {
                        source,
                        expected: Expected::Batch(cells.clone()),
                        handle,
                    });
                }
                Batching::PerCell => {
                    for c in cells {
                        let handle = self.comm.post_receive(source, mtag, self.remote[c].transfer_len(tag))?;
                        receives.push(PendingReceive {
                            source,
                            expected: Expected::Single(*c),
                            handle,
                        });
                    }
                }
            }
        }
        let mut sends = Vec::new();
        for (&dest, cells) in &plan.send {
            match self.batching {
                Batching::PerRank => {
                    let mut msg = Vec::new();
                    wire::put_u64(&mut msg, cells.len() as u64);
                    for c in cells {
                        let d = &self.data[c];
                        wire::put_u64(&mut msg, c.0);
                        wire::put_u32(&mut msg, d.transfer_len(tag) as u32);
                        let before = msg.len();
                        d.write_transfer(tag, &mut msg);
                        debug_assert_eq!(msg.len() - before, d.transfer_len(tag), "transfer_len disagrees with write_transfer");
                    }
                    sends.push(self.comm.post_send(dest, mtag, msg)?);
                }
                Batching::PerCell => {
                    for c in cells {
                        let mut msg = Vec::new();
                        self.data[c].write_transfer(tag, &mut msg);
                        sends.push(self.comm.post_send(dest, mtag, msg)?);
                    }
                }
            }
        }
        let checksum = cfg!(debug_assertions).then(|| self.send_checksum(plan, tag));
        Ok(InFlight {
            tag,
            epoch: plan.epoch(),
            receives: Some(receives),
            sends: Some(sends),
            checksum,
        })
    }

    fn in_flight_mut(&mut self) -> Result<&mut InFlight, GridError> {
        let epoch = self.mesh.epoch();
        let f = self.in_flight.as_mut().ok_or(GridError::NoExchangeInFlight)?;
        if f.epoch != epoch {
            return Err(GridError::StructureChangedDuringExchange);
        }
        Ok(f)
    }

    fn finish_if_done(&mut self) {
        if let Some(f) = &self.in_flight {
            if f.receives.is_none() && f.sends.is_none() {
                self.in_flight = None;
            }
        }
    }

    /// Waits until all remote copies of the started exchange are updated.
    pub fn wait_remote_neighbor_copy_update_receives(&mut self) -> Result<(), GridError> {
        let f = self.in_flight_mut()?;
        let tag = f.tag;
        let receives = f.receives.take().ok_or(GridError::AlreadyWaited("receives"))?;
        let result = self.complete_receives(tag, receives);
        self.finish_if_done();
        result
    }

    fn complete_receives(&mut self, tag: TransferTag, receives: Vec<PendingReceive>) -> Result<(), GridError> {
        for p in receives {
            let payload = self.comm.wait_receive(p.handle)?;
            match p.expected {
                Expected::Single(c) => self.store_copy(c, tag, &payload)?,
                Expected::Batch(cells) => {
                    let mut r = wire::Reader::new(&payload, p.source);
                    let count = r.u64()? as usize;
                    if count != cells.len() {
                        return Err(GridError::MalformedMessage {
                            sender: p.source,
                            reason: format!("{count} cells in batch, expected {}", cells.len()),
                        });
                    }
                    for c in cells {
                        let id = CellId(r.u64()?);
                        if id != c {
                            return Err(GridError::MalformedMessage {
                                sender: p.source,
                                reason: format!("got cell {id} where {c} was expected"),
                            });
                        }
                        let len = r.u32()? as usize;
                        let bytes = r.take(len)?;
                        self.store_copy(c, tag, bytes)?;
                    }
                    r.finish()?;
                }
            }
        }
        Ok(())
    }

    fn store_copy(&mut self, c: CellId, tag: TransferTag, bytes: &[u8]) -> Result<(), GridError> {
        let copy = self.remote.get_mut(&c).expect("planned receives have remote copies");
        let expected = copy.transfer_len(tag);
        if bytes.len() != expected {
            return Err(GridError::TransferLength {
                cell: c,
                expected,
                actual: bytes.len(),
            });
        }
        copy.read_transfer(tag, bytes).map_err(|e| GridError::Decode { cell: c, reason: e.0 })
    }

    /// Waits until local cell data of the started exchange may be modified
    /// again.
    pub fn wait_remote_neighbor_copy_update_sends(&mut self) -> Result<(), GridError> {
        let f = self.in_flight_mut()?;
        let tag = f.tag;
        let checksum = f.checksum;
        let sends = f.sends.take().ok_or(GridError::AlreadyWaited("sends"))?;
        let result = self.comm.wait_all_sends(sends).map_err(GridError::from).and_then(|()| {
            match (checksum, &self.plan) {
                (Some(sum), Some(plan)) if self.send_checksum(plan, tag) != sum => Err(GridError::SendBufferModified),
                _ => Ok(()),
            }
        });
        self.finish_if_done();
        result
    }

    /// Synchronous exchange: start, then wait for receives and sends.
    pub fn update_copies_of_remote_neighbors(&mut self, tag: TransferTag) -> Result<(), GridError> {
        self.start_remote_neighbor_copy_updates(tag)?;
        self.wait_remote_neighbor_copy_update_receives()?;
        self.wait_remote_neighbor_copy_update_sends()
    }

    /// Exchange of variable-size data in two rounds. The `count_tag` slice
    /// tells a receiver how much `payload_tag` data will follow; between
    /// the rounds `resize` is called for every remote copy so it can size
    /// itself for the incoming payload.
    pub fn two_phase_variable_exchange(
        &mut self,
        count_tag: TransferTag,
        payload_tag: TransferTag,
        mut resize: impl FnMut(CellId, &mut D),
    ) -> Result<(), GridError> {
        self.update_copies_of_remote_neighbors(count_tag)?;
        for (&c, copy) in self.remote.iter_mut() {
            resize(c, copy);
        }
        self.update_copies_of_remote_neighbors(payload_tag)
    }
}
