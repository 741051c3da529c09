//! Text dumps and legacy VTK export.
//!
//! A dump starts with the line `dccrg-dump 1 <nx> <ny> <nz> <L>` followed by
//! one line per existing cell, ascending by id:
//! `<id> <level> <ix> <iy> <iz> <values...>`, values written in the
//! shortest decimal form that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::cell::CellData;
use crate::error::GridError;
use crate::geometry::Geometry;
use crate::grid::Grid;
use crate::topology::{CellId, Indices, Topology};
use crate::transport::{Subsystem, Tag};
use crate::wire;

/// Values written for a cell in dumps and exports.
pub trait DumpValues {
    fn dump_values(&self, out: &mut Vec<f64>);

    /// Column names for exports, one per value.
    fn value_names() -> Vec<String> {
        vec!["value".to_string()]
    }
}

impl DumpValues for f64 {
    fn dump_values(&self, out: &mut Vec<f64>) {
        out.push(*self);
    }
}

impl DumpValues for () {
    fn dump_values(&self, _out: &mut Vec<f64>) {}

    fn value_names() -> Vec<String> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRecord {
    pub id: CellId,
    pub level: u32,
    pub indices: Indices,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub size: [u64; 3],
    pub max_level: u32,
    pub records: Vec<DumpRecord>,
}

const TAG_GATHER_LEN: u32 = 1;
const TAG_GATHER_DATA: u32 = 2;

/// Collective. Collects `(id, values)` of every cell on rank 0, ascending by
/// id; other ranks get `None`.
pub fn gather_values<D: CellData + DumpValues>(grid: &Grid<D>) -> Result<Option<Vec<(CellId, Vec<f64>)>>, GridError> {
    let comm = grid.comm();
    let mut values = Vec::new();
    if comm.rank() != 0 {
        let mut msg = Vec::new();
        for (c, d) in grid.local_data() {
            values.clear();
            d.dump_values(&mut values);
            wire::put_u64(&mut msg, c.0);
            wire::put_u32(&mut msg, values.len() as u32);
            for v in &values {
                msg.extend_from_slice(&v.to_le_bytes());
            }
        }
        comm.send(0, Tag::new(Subsystem::Gather, TAG_GATHER_LEN), (msg.len() as u64).to_le_bytes().to_vec())?;
        comm.send(0, Tag::new(Subsystem::Gather, TAG_GATHER_DATA), msg)?;
        return Ok(None);
    }
    let mut records: Vec<(CellId, Vec<f64>)> = Vec::with_capacity(grid.cell_count());
    for (c, d) in grid.local_data() {
        let mut v = Vec::new();
        d.dump_values(&mut v);
        records.push((c, v));
    }
    for source in 1..comm.size() {
        let len = comm.receive(source, Tag::new(Subsystem::Gather, TAG_GATHER_LEN), 8)?;
        let len = wire::Reader::new(&len, source).u64()? as usize;
        let msg = comm.receive(source, Tag::new(Subsystem::Gather, TAG_GATHER_DATA), len)?;
        let mut r = wire::Reader::new(&msg, source);
        while !r.is_done() {
            let c = CellId(r.u64()?);
            let count = r.u32()? as usize;
            let v = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            records.push((c, v));
        }
    }
    records.sort_unstable_by_key(|(c, _)| *c);
    Ok(Some(records))
}

/// Dump text of already gathered values.
pub fn render_dump(topology: &Topology, records: &[(CellId, Vec<f64>)]) -> Result<String, GridError> {
    let size = topology.size();
    let mut out = String::new();
    writeln!(out, "dccrg-dump 1 {} {} {} {}", size[0], size[1], size[2], topology.max_level()).unwrap();
    for (c, values) in records {
        let (level, Indices(ix)) = topology.locate(*c)?;
        write!(out, "{} {} {} {} {}", c.0, level, ix[0], ix[1], ix[2]).unwrap();
        for v in values {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Collective. Dump text on rank 0, `None` elsewhere.
pub fn dump_grid<D: CellData + DumpValues>(grid: &Grid<D>) -> Result<Option<String>, GridError> {
    match gather_values(grid)? {
        Some(records) => render_dump(grid.topology(), &records).map(Some),
        None => Ok(None),
    }
}

/// Collective. Rank 0 writes the dump to `path`.
pub fn write_dump<D: CellData + DumpValues>(grid: &Grid<D>, path: &Path) -> Result<(), GridError> {
    if let Some(text) = dump_grid(grid)? {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn parse_err(line: usize, what: &str) -> GridError {
    GridError::Io(format!("dump line {line}: {what}"))
}

pub fn parse_dump(text: &str) -> Result<Dump, GridError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "dccrg-dump" || fields[1] != "1" {
        return Err(parse_err(1, "bad header"));
    }
    let num = |s: &str, line: usize| s.parse::<u64>().map_err(|_| parse_err(line, "bad integer"));
    let size = [num(fields[2], 1)?, num(fields[3], 1)?, num(fields[4], 1)?];
    let max_level = num(fields[5], 1)? as u32;
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let mut next_int = || {
            parts
                .next()
                .ok_or_else(|| parse_err(line_no, "too few fields"))
                .and_then(|s| num(s, line_no))
        };
        let id = CellId(next_int()?);
        let level = next_int()? as u32;
        let indices = Indices([next_int()?, next_int()?, next_int()?]);
        let values = parts
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(line_no, "bad value")))
            .collect::<Result<_, _>>()?;
        records.push(DumpRecord {
            id,
            level,
            indices,
            values,
        });
    }
    Ok(Dump {
        size,
        max_level,
        records,
    })
}

/// Legacy ASCII VTK unstructured grid of hexahedra with the cell id, level
/// and the cells' dump values as cell data.
pub fn render_vtk<G: Geometry>(
    topology: &Topology,
    geometry: &G,
    names: &[String],
    records: &[(CellId, Vec<f64>)],
) -> Result<String, GridError> {
    let n = records.len();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 2.0\ngridforge cells\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {} double", 8 * n).unwrap();
    for (c, _) in records {
        let (lo, hi) = geometry.cell_bounding_box(topology, *c)?;
        for (x, y, z) in [
            (lo[0], lo[1], lo[2]),
            (hi[0], lo[1], lo[2]),
            (hi[0], hi[1], lo[2]),
            (lo[0], hi[1], lo[2]),
            (lo[0], lo[1], hi[2]),
            (hi[0], lo[1], hi[2]),
            (hi[0], hi[1], hi[2]),
            (lo[0], hi[1], hi[2]),
        ] {
            writeln!(out, "{x} {y} {z}").unwrap();
        }
    }
    writeln!(out, "CELLS {} {}", n, 9 * n).unwrap();
    for i in 0..n {
        let b = 8 * i;
        writeln!(out, "8 {} {} {} {} {} {} {} {}", b, b + 1, b + 2, b + 3, b + 4, b + 5, b + 6, b + 7).unwrap();
    }
    writeln!(out, "CELL_TYPES {n}").unwrap();
    for _ in 0..n {
        out.push_str("12\n");
    }
    writeln!(out, "CELL_DATA {n}").unwrap();
    out.push_str("SCALARS cell_id double 1\nLOOKUP_TABLE default\n");
    for (c, _) in records {
        writeln!(out, "{}", c.0).unwrap();
    }
    out.push_str("SCALARS level int 1\nLOOKUP_TABLE default\n");
    for (c, _) in records {
        writeln!(out, "{}", topology.level_of(*c)?).unwrap();
    }
    for (k, name) in names.iter().enumerate() {
        writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for (_, v) in records {
            writeln!(out, "{}", v.get(k).copied().unwrap_or(0.0)).unwrap();
        }
    }
    Ok(out)
}

/// Collective. Rank 0 writes a legacy VTK file to `path`.
pub fn export_vtk<D: CellData + DumpValues>(grid: &Grid<D>, path: &Path) -> Result<(), GridError> {
    if let Some(records) = gather_values(grid)? {
        let text = render_vtk(grid.topology(), grid.geometry(), &D::value_names(), &records)?;
        std::fs::write(path, text)?;
    }
    Ok(())
}
