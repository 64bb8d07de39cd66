//! The `vxg1` map format and its JSON mirror.
//!
//! ```text
//! vxg1
//! resolution 0.05
//! origin -1.825 -0.775 -0.775
//! dims 176 32 32
//! F1204 O12 F88 ...
//! ```
//!
//! After the four header lines come whitespace-separated runs over the
//! x-fastest voxel order: `F<n>` is `n` free voxels, `O<n>` is `n` occupied
//! voxels. Writers emit 16 runs per line.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GridError, OccupancyGrid, TunnelSpec};
use crate::Vec3;

const MAGIC: &str = "vxg1";
const RUNS_PER_LINE: usize = 16;

fn runs(cells: &[bool]) -> Vec<(bool, usize)> {
    let mut out: Vec<(bool, usize)> = Vec::new();
    for &c in cells {
        match out.last_mut() {
            Some((v, n)) if *v == c => *n += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

/// Serializes `grid` as `vxg1` text.
pub fn write_vxg(grid: &OccupancyGrid) -> String {
    let o = grid.origin();
    let d = grid.dims();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "resolution {}", grid.resolution());
    let _ = writeln!(s, "origin {} {} {}", o.x, o.y, o.z);
    let _ = writeln!(s, "dims {} {} {}", d[0], d[1], d[2]);
    for chunk in runs(grid.cells()).chunks(RUNS_PER_LINE) {
        let line: Vec<String> = chunk
            .iter()
            .map(|&(v, n)| format!("{}{n}", if v { 'O' } else { 'F' }))
            .collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

fn parse_err(msg: impl Into<String>) -> GridError {
    GridError::Parse(msg.into())
}

fn header<'a>(line: Option<&'a str>, key: &str) -> Result<Vec<&'a str>, GridError> {
    let line = line.ok_or_else(|| parse_err(format!("missing `{key}` line")))?;
    let mut fields = line.split_whitespace();
    if fields.next() != Some(key) {
        return Err(parse_err(format!("expected `{key}` line, got `{line}`")));
    }
    Ok(fields.collect())
}

fn numbers<T: std::str::FromStr>(
    fields: &[&str],
    n: usize,
    key: &str,
) -> Result<Vec<T>, GridError> {
    if fields.len() != n {
        return Err(parse_err(format!("`{key}` expects {n} values")));
    }
    fields
        .iter()
        .map(|f| {
            f.parse()
                .map_err(|_| parse_err(format!("bad `{key}` value `{f}`")))
        })
        .collect()
}

/// Parses `vxg1` text.
pub fn read_vxg(text: &str) -> Result<OccupancyGrid, GridError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(parse_err("missing vxg1 magic line"));
    }
    let res: Vec<f64> = numbers(&header(lines.next(), "resolution")?, 1, "resolution")?;
    let origin: Vec<f64> = numbers(&header(lines.next(), "origin")?, 3, "origin")?;
    let dims: Vec<usize> = numbers(&header(lines.next(), "dims")?, 3, "dims")?;
    let dims = [dims[0], dims[1], dims[2]];
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err("dims overflow"))?;
    let mut cells = Vec::with_capacity(total);
    for token in lines.flat_map(str::split_whitespace) {
        let (kind, count) = token.split_at(1);
        let value = match kind {
            "F" => false,
            "O" => true,
            _ => return Err(parse_err(format!("bad run `{token}`"))),
        };
        let count: usize = count
            .parse()
            .map_err(|_| parse_err(format!("bad run `{token}`")))?;
        if cells.len() + count > total {
            return Err(parse_err("runs exceed grid size"));
        }
        cells.extend(std::iter::repeat_n(value, count));
    }
    OccupancyGrid::from_cells(
        Vec3::new(origin[0], origin[1], origin[2]),
        res[0],
        dims,
        cells,
    )
}

/// JSON mirror of the `vxg1` fields. `runs` holds `[occupied, count]` pairs.
/// When the map came from the tunnel generator, `tunnel` carries its spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapJson {
    pub format: String,
    pub resolution: f64,
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub runs: Vec<(u8, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tunnel: Option<TunnelSpec>,
}

impl MapJson {
    pub fn from_grid(grid: &OccupancyGrid, tunnel: Option<&TunnelSpec>) -> Self {
        let o = grid.origin();
        Self {
            format: MAGIC.to_string(),
            resolution: grid.resolution(),
            origin: [o.x, o.y, o.z],
            dims: grid.dims(),
            runs: runs(grid.cells())
                .into_iter()
                .map(|(v, n)| (u8::from(v), n))
                .collect(),
            tunnel: tunnel.cloned(),
        }
    }

    pub fn to_grid(&self) -> Result<OccupancyGrid, GridError> {
        let mut cells = Vec::new();
        for &(v, n) in &self.runs {
            cells.extend(std::iter::repeat_n(v != 0, n));
        }
        OccupancyGrid::from_cells(
            Vec3::new(self.origin[0], self.origin[1], self.origin[2]),
            self.resolution,
            self.dims,
            cells,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn vxg_round_trip(
            dims in (1usize..6, 1usize..6, 1usize..6),
            seed in proptest::collection::vec(any::<bool>(), 216),
            res in 0.01f64..1.0,
            ox in -5.0f64..5.0,
        ) {
            let dims = [dims.0, dims.1, dims.2];
            let n = dims[0] * dims[1] * dims[2];
            let grid = OccupancyGrid::from_cells(
                Vec3::new(ox, -ox * 0.5, 0.25), res, dims, seed[..n].to_vec()).unwrap();
            let text = write_vxg(&grid);
            prop_assert_eq!(read_vxg(&text).unwrap(), grid.clone());
            let json = serde_json::to_string(&MapJson::from_grid(&grid, None)).unwrap();
            let back: MapJson = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back.to_grid().unwrap(), grid);
        }
    }

    #[test]
    fn header_layout() {
        let mut grid = OccupancyGrid::new(Vec3::new(0.0, 1.0, 2.0), 0.5, [3, 1, 1]).unwrap();
        grid.set([1, 0, 0], true);
        assert_eq!(
            write_vxg(&grid),
            "vxg1\nresolution 0.5\norigin 0 1 2\ndims 3 1 1\nF1 O1 F1\n"
        );
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_vxg("vxg2\n").is_err());
        assert!(read_vxg("vxg1\nresolution 0.1\norigin 0 0\ndims 1 1 1\nF1\n").is_err());
        assert!(read_vxg("vxg1\nresolution 0.1\norigin 0 0 0\ndims 1 1 1\nX1\n").is_err());
        assert!(read_vxg("vxg1\nresolution 0.1\norigin 0 0 0\ndims 1 1 1\nF2\n").is_err());
        assert!(read_vxg("vxg1\nresolution 0.1\norigin 0 0 0\ndims 2 1 1\nF1\n").is_err());
    }
}
