//! OpenDX scalar fields on a uniform grid (x slowest, z fastest).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct DxGrid {
    pub counts: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl DxGrid {
    pub fn from_grid(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::Dimension(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.num_nodes()
            )));
        }
        Ok(Self {
            counts: [grid.n; 3],
            origin: [-grid.half_length; 3],
            spacing: [grid.h; 3],
            values,
        })
    }
}

pub fn write_dx<W: Write>(mut w: W, field: &DxGrid, comments: &[String]) -> Result<()> {
    let [nx, ny, nz] = field.counts;
    if field.values.len() != nx * ny * nz {
        return Err(Error::Dimension("value count does not match grid counts".into()));
    }
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "object 1 class gridpositions counts {nx} {ny} {nz}")?;
    let [ox, oy, oz] = field.origin;
    writeln!(w, "origin {ox:e} {oy:e} {oz:e}")?;
    let [hx, hy, hz] = field.spacing;
    writeln!(w, "delta {hx:e} 0 0")?;
    writeln!(w, "delta 0 {hy:e} 0")?;
    writeln!(w, "delta 0 0 {hz:e}")?;
    writeln!(w, "object 2 class gridconnections counts {nx} {ny} {nz}")?;
    writeln!(
        w,
        "object 3 class array type double rank 0 items {} data follows",
        field.values.len()
    )?;
    for chunk in field.values.chunks(3) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    writeln!(w, "attribute \"dep\" string \"positions\"")?;
    writeln!(w, "object \"regular positions regular connections\" class field")?;
    writeln!(w, "component \"positions\" value 1")?;
    writeln!(w, "component \"connections\" value 2")?;
    writeln!(w, "component \"data\" value 3")?;
    Ok(())
}

fn numbers<T: std::str::FromStr>(words: &[&str], line: usize) -> Result<Vec<T>> {
    words
        .iter()
        .map(|s| {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("expected a number, found '{s}'"),
            })
        })
        .collect()
}

pub fn read_dx<R: BufRead>(r: R) -> Result<DxGrid> {
    let mut counts = None;
    let mut origin = None;
    let mut deltas: Vec<f64> = Vec::new();
    let mut items = None;
    let mut values = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let no = no + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let words: Vec<&str> = t.split_whitespace().collect();
        if let Some(n) = items {
            if values.len() < n {
                values.extend(numbers::<f64>(&words, no)?);
                continue;
            }
        }
        match words[0] {
            "object" if t.contains("gridpositions") => {
                let c: Vec<usize> = numbers(&words[words.len() - 3..], no)?;
                counts = Some([c[0], c[1], c[2]]);
            }
            "origin" => {
                let o: Vec<f64> = numbers(&words[1..], no)?;
                if o.len() != 3 {
                    return Err(Error::Parse {
                        line: no,
                        message: "origin needs three coordinates".into(),
                    });
                }
                origin = Some([o[0], o[1], o[2]]);
            }
            "delta" => {
                let d: Vec<f64> = numbers(&words[1..], no)?;
                deltas.push(d.iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
            "object" if t.contains("class array") => {
                let pos = words.iter().position(|w| *w == "items").ok_or_else(|| Error::Parse {
                    line: no,
                    message: "array without item count".into(),
                })?;
                items = Some(numbers::<usize>(&words[pos + 1..pos + 2], no)?[0]);
            }
            _ => {}
        }
    }
    let counts = counts.ok_or_else(|| Error::Format("missing gridpositions".into()))?;
    let origin = origin.ok_or_else(|| Error::Format("missing origin".into()))?;
    if deltas.len() != 3 {
        return Err(Error::Format(format!("expected 3 delta lines, found {}", deltas.len())));
    }
    let n = items.ok_or_else(|| Error::Format("missing data array".into()))?;
    if values.len() != n || n != counts.iter().product::<usize>() {
        return Err(Error::Format(format!(
            "expected {} values, found {}",
            counts.iter().product::<usize>(),
            values.len()
        )));
    }
    Ok(DxGrid {
        counts,
        origin,
        spacing: [deltas[0], deltas[1], deltas[2]],
        values,
    })
}
