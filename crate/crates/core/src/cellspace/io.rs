use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{CellMap, Point, CELLMAP_VERSION};
use crate::error::{Error, Result};

/// One row of the trajectory text format: `trip_id,t,x,y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub trip_id: String,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

pub fn read_point_rows<R: Read>(reader: R) -> Result<Vec<PointRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<PointRow>().enumerate() {
        // row numbers count the header as row 1
        let row = rec.map_err(|e| Error::MalformedRow {
            row: i + 2,
            message: e.to_string(),
        })?;
        if !(row.t.is_finite() && row.x.is_finite() && row.y.is_finite()) {
            return Err(Error::MalformedRow {
                row: i + 2,
                message: "non-finite value".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_point_rows<W: Write>(writer: W, rows: &[PointRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `# cellmap-v1 radius=<R> cells=<N>` followed by `index,x,y` rows.
pub fn write_cellmap<W: Write>(mut writer: W, map: &CellMap) -> Result<()> {
    writeln!(writer, "# {} radius={} cells={}", CELLMAP_VERSION, map.radius(), map.len())?;
    for (i, c) in map.centroids().iter().enumerate() {
        writeln!(writer, "{},{},{}", i + 1, c.x, c.y)?;
    }
    Ok(())
}

pub fn read_cellmap<R: Read>(reader: R) -> Result<CellMap> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty cellmap file".into()))??;
    let mut fields = header.trim_start_matches('#').split_whitespace();
    if fields.next() != Some(CELLMAP_VERSION) {
        return Err(Error::Format(format!("unsupported cellmap header: {header}")));
    }
    let mut radius = None;
    let mut count = None;
    for f in fields {
        match f.split_once('=') {
            Some(("radius", v)) => radius = v.parse::<f64>().ok(),
            Some(("cells", v)) => count = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let radius = radius.ok_or_else(|| Error::Format("missing radius".into()))?;
    let mut centroids = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::MalformedRow {
            row: i + 2,
            message: m.to_string(),
        };
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad("expected index,x,y"));
        }
        let idx: usize = parts[0].parse().map_err(|_| bad("bad index"))?;
        if idx != centroids.len() + 1 {
            return Err(bad("cell indices must be dense and ascending"));
        }
        let x: f64 = parts[1].parse().map_err(|_| bad("bad x"))?;
        let y: f64 = parts[2].parse().map_err(|_| bad("bad y"))?;
        centroids.push(Point::new(x, y));
    }
    if let Some(n) = count {
        if n != centroids.len() {
            return Err(Error::Format(format!(
                "header declares {n} cells, found {}",
                centroids.len()
            )));
        }
    }
    CellMap::new(centroids, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cellmap_round_trip() {
        let map = CellMap::new(vec![Point::new(0.1, -3.0), Point::new(1e6 / 3.0, 2.5)], 300.0).unwrap();
        let mut buf = Vec::new();
        write_cellmap(&mut buf, &map).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# cellmap-v1 radius=300 cells=2\n"));
        assert_eq!(read_cellmap(&buf[..]).unwrap(), map);
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let text = "trip_id,t,x,y\na,0,1,2\na,zz,1,2\n";
        match read_point_rows(text.as_bytes()) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cellmap_rejects_sparse_indices() {
        let text = "# cellmap-v1 radius=10 cells=2\n1,0,0\n3,1,1\n";
        assert!(read_cellmap(text.as_bytes()).is_err());
    }
}
