use std::fmt::{self, Write as _};

use super::time::{Granularity, Timestamp};
use crate::error::{Error, Result};

/// Dense features × granules matrix for one entity. Cells are `None` until filled.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    pub entity: String,
    pub granularity: Granularity,
    /// Timestamp at which column 0 begins.
    pub origin: Timestamp,
    pub features: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub column_count: usize,
}

impl EventTable {
    pub fn empty(
        entity: impl Into<String>,
        granularity: Granularity,
        origin: Timestamp,
        column_count: usize,
    ) -> Self {
        EventTable {
            entity: entity.into(),
            granularity,
            origin,
            features: Vec::new(),
            rows: Vec::new(),
            column_count,
        }
    }

    pub fn push_row(&mut self, feature: impl Into<String>, row: Vec<Option<f64>>) {
        assert_eq!(row.len(), self.column_count, "row length mismatch");
        self.features.push(feature.into());
        self.rows.push(row);
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(Option::is_some))
    }

    /// Time-major dense copy for matching. Fails if any cell is still empty.
    pub fn to_series(&self) -> Result<DenseSeries> {
        let dim = self.rows.len();
        let mut data = vec![0.0; dim * self.column_count];
        for (f, row) in self.rows.iter().enumerate() {
            for (t, cell) in row.iter().enumerate() {
                data[t * dim + f] = cell.ok_or_else(|| Error::EmptyRow {
                    entity: self.entity.clone(),
                    feature: self.features[f].clone(),
                })?;
            }
        }
        Ok(DenseSeries {
            dim,
            len: self.column_count,
            data,
        })
    }

    /// Parses one block written by the `Display` impl. The origin is not part of the
    /// export and comes back as 0.
    pub fn parse_block(text: &str) -> Result<EventTable> {
        let bad = |line: usize, message: String| Error::Data {
            path: "<event table>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let head: Vec<&str> = header.split(',').collect();
        if head.len() != 3 {
            return Err(bad(1, format!("expected entity,granularity,columns; got `{header}`")));
        }
        let granularity: Granularity = head[1].parse()?;
        let columns: usize = head[2]
            .trim()
            .parse()
            .map_err(|_| bad(1, "bad column count".into()))?;
        let mut table = EventTable::empty(head[0], granularity, 0, columns);
        for (no, line) in lines {
            let mut cells = line.split(',');
            let feature = cells.next().unwrap_or_default().to_string();
            let row = cells
                .map(|c| match c.trim() {
                    "" => Ok(None),
                    v => v
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| bad(no + 1, format!("bad cell `{v}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != columns {
                return Err(bad(no + 1, format!("expected {columns} cells, got {}", row.len())));
            }
            table.push_row(feature, row);
        }
        Ok(table)
    }
}

impl fmt::Display for EventTable {
    /// Header line `entity,granularity,columns`, then one line per feature.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{},{},{}", self.entity, self.granularity, self.column_count)?;
        for (name, row) in self.features.iter().zip(&self.rows) {
            let mut line = name.clone();
            for cell in row {
                line.push(',');
                if let Some(v) = cell {
                    write!(line, "{v}")?;
                }
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Complete multivariate series, stored time-major: `data[t * dim + feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSeries {
    dim: usize,
    len: usize,
    data: Vec<f64>,
}

impl DenseSeries {
    /// Builds a series from per-time-point vectors.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Arity {
                left: dim,
                right: p.len(),
            });
        }
        Ok(DenseSeries {
            dim,
            len: points.len(),
            data: points.concat(),
        })
    }

    pub fn univariate(values: &[f64]) -> Self {
        DenseSeries {
            dim: 1,
            len: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn point(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Reorders features; `order[i]` is the source index of output feature `i`.
    pub fn permute_features(&self, order: &[usize]) -> DenseSeries {
        let mut data = Vec::with_capacity(self.data.len());
        for t in 0..self.len {
            let p = self.point(t);
            data.extend(order.iter().map(|&i| p[i]));
        }
        DenseSeries {
            dim: order.len(),
            len: self.len,
            data,
        }
    }
}
