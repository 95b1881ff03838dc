//! Path serialization.
//!
//! Text: a header line `dim dt T eps_max`, then one line per node with `dim`
//! space-separated values. Floats are written with 17 significant digits,
//! which round-trips every finite `f64` exactly.
//!
//! Binary (all little-endian): `u64 dim`, `f64 dt`, `f64 T`, `f64 eps_max`,
//! `u64 count`, then `count` values as `f64`.

use std::io::{BufRead, Read, Write};

use super::grid::TimeGrid;
use super::path::{ProcessRole, SamplePath};
use crate::error::{Error, Result};

fn data_err(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}

pub fn write_text<W: Write>(path: &SamplePath, out: &mut W) -> Result<()> {
    let g = path.grid();
    writeln!(
        out,
        "{} {:.16e} {:.16e} {:.16e}",
        path.dim(),
        g.dt(),
        g.horizon(),
        g.margin()
    )?;
    for k in 0..path.n_nodes() {
        let row: Vec<String> = path.row(k).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

fn grid_from_header(dt: f64, horizon: f64, margin: f64) -> Result<TimeGrid> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(data_err(format!("bad dt {dt}")));
    }
    let n = (horizon / dt).round();
    if !(n >= 1.0) || ((n * dt - horizon).abs() > 1e-9 * horizon) {
        return Err(data_err(format!("T = {horizon} is not a multiple of dt = {dt}")));
    }
    let grid = TimeGrid::new(horizon, n as usize, margin)?;
    if grid.dt() != dt {
        return Err(data_err("header dt does not match T / n_steps"));
    }
    Ok(grid)
}

pub fn read_text<R: BufRead>(input: R, role: ProcessRole) -> Result<SamplePath> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| data_err("empty input"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(data_err(format!("header needs 4 fields, got {}", fields.len())));
    }
    let dim: usize = fields[0].parse().map_err(|_| data_err("bad dimension"))?;
    let nums: Vec<f64> = fields[1..]
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| data_err(format!("bad header number {s:?}"))))
        .collect::<Result<_>>()?;
    let grid = grid_from_header(nums[0], nums[1], nums[2])?;
    let mut values = Vec::with_capacity(grid.n_nodes() * dim);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| data_err(format!("row {i}: bad number {s:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(data_err(format!("row {i}: expected {dim} values, got {}", row.len())));
        }
        values.extend(row);
    }
    SamplePath::new(grid, dim, values, role)
}

pub fn write_binary<W: Write>(path: &SamplePath, out: &mut W) -> Result<()> {
    let g = path.grid();
    out.write_all(&(path.dim() as u64).to_le_bytes())?;
    for v in [g.dt(), g.horizon(), g.margin()] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(path.values().len() as u64).to_le_bytes())?;
    for v in path.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(input)?))
}

pub fn read_binary<R: Read>(mut input: R, role: ProcessRole) -> Result<SamplePath> {
    let dim = read_u64(&mut input)? as usize;
    let dt = read_f64(&mut input)?;
    let horizon = read_f64(&mut input)?;
    let margin = read_f64(&mut input)?;
    let count = read_u64(&mut input)? as usize;
    let grid = grid_from_header(dt, horizon, margin)?;
    if count != grid.n_nodes() * dim {
        return Err(data_err(format!("length prefix {count} does not match the grid")));
    }
    let values = (0..count).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?;
    SamplePath::new(grid, dim, values, role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathkit::simulate_brownian;
    use proptest::prelude::*;

    #[test]
    fn text_header_layout() {
        let g = TimeGrid::new(1.0, 2, 0.5).unwrap();
        let p = SamplePath::scalar(g, vec![0.0, 1.0, 0.0], ProcessRole::Driver).unwrap();
        let mut buf = Vec::new();
        write_text(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "1 5.0000000000000000e-1 1.0000000000000000e0 5.0000000000000000e-1");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let g = TimeGrid::new(1.0, 8, 0.0).unwrap();
        let p = simulate_brownian(&g, 1, 1).unwrap();
        let mut buf = Vec::new();
        write_binary(&p, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_binary(&buf[..], ProcessRole::Driver).is_err());
    }

    proptest! {
        #[test]
        fn round_trips_are_exact(seed in any::<u64>(), n in 1usize..40, d in 1usize..3) {
            let g = TimeGrid::new(0.7, n, 0.7 / n as f64).unwrap();
            let p = simulate_brownian(&g, seed, d).unwrap();

            let mut bin = Vec::new();
            write_binary(&p, &mut bin).unwrap();
            let back = read_binary(&bin[..], ProcessRole::Driver).unwrap();
            prop_assert_eq!(back.grid(), p.grid());
            prop_assert!(back.values().iter().zip(p.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

            let mut txt = Vec::new();
            write_text(&p, &mut txt).unwrap();
            let back = read_text(&txt[..], ProcessRole::Driver).unwrap();
            prop_assert_eq!(back.values(), p.values());
            prop_assert_eq!(back.grid().margin_steps(), 1);
        }
    }
}
