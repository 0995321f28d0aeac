//! Topology as an edge list (`i j` per line, 0-based, meaning `i` receives
//! from `j`) and sensor positions as CSV (`id,x,y,z`).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::Adjacency;
use crate::error::{Error, Result};

/// Writes every non-self link. Self-loops are implied on import.
pub fn write_edge_list(adj: &Adjacency, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for (i, j) in adj.links() {
        writeln!(out, "{i} {j}")?;
    }
    Ok(())
}

/// Reads an edge list over `n` nodes and adds self-loops. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_edge_list(path: &Path, n: usize) -> Result<Adjacency> {
    let text = fs::read_to_string(path)?;
    let mut adj = Adjacency::self_loops(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)));
        if parts.len() != 2 {
            return Err(Error::Parse(format!("{}:{}: expected `i j`", path.display(), lineno + 1)));
        }
        let (i, j) = (parse(parts[0])?, parse(parts[1])?);
        if i >= n || j >= n {
            return Err(Error::Parse(format!("{}:{}: node index out of range for {n} nodes", path.display(), lineno + 1)));
        }
        adj.set(i, j, true);
    }
    Ok(adj)
}

pub fn write_positions_csv(positions: &[Vector3<f64>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "x", "y", "z"])?;
    for (i, p) in positions.iter().enumerate() {
        w.write_record([i.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_positions_csv(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows: Vec<(usize, Vector3<f64>)> = Vec::new();
    for (lineno, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::Parse(format!("{}: row {} is missing column {k}", path.display(), lineno + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}: row {}: {e}", path.display(), lineno + 2)))
        };
        let id = field(0)? as usize;
        rows.push((id, Vector3::new(field(1)?, field(2)?, field(3)?)));
    }
    rows.sort_by_key(|(id, _)| *id);
    for (expect, (id, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(Error::Parse(format!("{}: sensor ids must be 0..n without gaps", path.display())));
        }
    }
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}
