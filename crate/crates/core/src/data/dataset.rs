//! Dataset CSV ingestion.
//!
//! Layout: a header row, then one sample per row with
//! `subject,action,frame`, 32 columns `j{i}_x2d, j{i}_y2d` (pixels) and
//! 48 columns `j{i}_x3d, j{i}_y3d, j{i}_z3d` (millimeters), joints in
//! canonical skeleton order. Floats are written with Rust's shortest
//! round-trip formatting, so a saved file reloads bit-identically.

use std::io::{Read, Write};
use std::path::Path;

use super::skeleton::{ActionLabel, NUM_JOINTS, ROOT};
use crate::error::{Error, Result};

pub const NUM_COLUMNS: usize = 3 + NUM_JOINTS * 2 + NUM_JOINTS * 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PosePair {
    pub pose2d: [[f64; 2]; NUM_JOINTS],
    /// Root-relative, millimeters.
    pub pose3d: [[f64; 3]; NUM_JOINTS],
    pub subject: String,
    pub action: ActionLabel,
    pub frame: u64,
}

impl PosePair {
    pub fn flat2d(&self) -> [f64; NUM_JOINTS * 2] {
        let mut out = [0.0; NUM_JOINTS * 2];
        for (j, p) in self.pose2d.iter().enumerate() {
            out[2 * j] = p[0];
            out[2 * j + 1] = p[1];
        }
        out
    }

    pub fn flat3d(&self) -> [f64; NUM_JOINTS * 3] {
        let mut out = [0.0; NUM_JOINTS * 3];
        for (j, p) in self.pose3d.iter().enumerate() {
            out[3 * j..3 * j + 3].copy_from_slice(p);
        }
        out
    }

    /// Shift the 3D pose so the root joint sits at the origin.
    pub fn recenter(&mut self) {
        let root = self.pose3d[ROOT];
        for p in self.pose3d.iter_mut() {
            for k in 0..3 {
                p[k] -= root[k];
            }
        }
    }
}

pub fn header() -> Vec<String> {
    let mut h = vec!["subject".to_string(), "action".to_string(), "frame".to_string()];
    for j in 0..NUM_JOINTS {
        h.push(format!("j{j}_x2d"));
        h.push(format!("j{j}_y2d"));
    }
    for j in 0..NUM_JOINTS {
        h.push(format!("j{j}_x3d"));
        h.push(format!("j{j}_y3d"));
        h.push(format!("j{j}_z3d"));
    }
    h
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PosePair>> {
    let f = std::fs::File::open(path.as_ref())?;
    read_dataset(f)
}

/// Parses a dataset; row numbers in errors count data rows from 1.
pub fn read_dataset(reader: impl Read) -> Result<Vec<PosePair>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let hdr = rdr.headers()?.clone();
    if hdr.len() != NUM_COLUMNS {
        return Err(Error::Parse {
            row: 0,
            msg: format!("header has {} columns, expected {NUM_COLUMNS}", hdr.len()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != NUM_COLUMNS {
            return Err(Error::Parse {
                row,
                msg: format!("{} columns, expected {NUM_COLUMNS}", rec.len()),
            });
        }
        let num = |c: usize| -> Result<f64> {
            let v: f64 = rec[c].trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("column {} ({}): not a number: {:?}", c + 1, &hdr[c], &rec[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("column {} ({}): non-finite value", c + 1, &hdr[c]),
                });
            }
            Ok(v)
        };
        let action: ActionLabel = rec[1]
            .trim()
            .parse()
            .map_err(|msg| Error::Parse { row, msg })?;
        let frame: u64 = rec[2].trim().parse().map_err(|_| Error::Parse {
            row,
            msg: format!("frame: not an integer: {:?}", &rec[2]),
        })?;
        let mut pose2d = [[0.0; 2]; NUM_JOINTS];
        let mut pose3d = [[0.0; 3]; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            for k in 0..2 {
                pose2d[j][k] = num(3 + 2 * j + k)?;
            }
            for k in 0..3 {
                pose3d[j][k] = num(3 + 2 * NUM_JOINTS + 3 * j + k)?;
            }
        }
        let mut pair = PosePair {
            pose2d,
            pose3d,
            subject: rec[0].trim().to_string(),
            action,
            frame,
        };
        pair.recenter();
        out.push(pair);
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, data: &[PosePair]) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(f);
    write_dataset(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset(writer: impl Write, data: &[PosePair]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header())?;
    for p in data {
        let mut rec = Vec::with_capacity(NUM_COLUMNS);
        rec.push(p.subject.clone());
        rec.push(p.action.name().to_string());
        rec.push(p.frame.to_string());
        rec.extend(p.flat2d().iter().map(|v| v.to_string()));
        rec.extend(p.flat3d().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PosePair {
        let mut pose2d = [[0.0; 2]; NUM_JOINTS];
        let mut pose3d = [[0.0; 3]; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            pose2d[j] = [500.0 + j as f64 * 1.25, 400.0 - j as f64 / 3.0];
            if j != ROOT {
                pose3d[j] = [j as f64 * 10.1, -(j as f64) * 7.7, 0.1 * j as f64];
            }
        }
        PosePair {
            pose2d,
            pose3d,
            subject: "S1".into(),
            action: ActionLabel::Posing,
            frame: 12,
        }
    }

    #[test]
    fn one_row_round_trip() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[sample()]).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, vec![sample()]);
    }

    #[test]
    fn short_row_names_row_one() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[sample()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cols: Vec<&str> = lines[1].split(',').collect();
        let short = cols[..79].join(",");
        lines[1] = &short;
        let err = read_dataset(lines.join("\n").as_bytes()).unwrap_err();
        match err {
            Error::Parse { row, msg } => {
                assert_eq!(row, 1);
                assert!(msg.contains("79"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_action_rejected() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[sample()]).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("Posing", "Juggling");
        let err = read_dataset(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("Juggling"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[sample()]).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("500", "NaN", 1);
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn ingestion_recenters_root() {
        let mut s = sample();
        for p in s.pose3d.iter_mut() {
            p[2] += 4500.0;
        }
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[s]).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        let r = back[0].pose3d[ROOT];
        assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }
}
