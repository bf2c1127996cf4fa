//! Trajectory files: JSON lines with fixed field order and every real
//! written with 17 significant digits.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::curves::{ArclengthGrid, Vec3};
use crate::reaction::{ConstraintRow, ContactKind};
use crate::stepper::{Frame, StemState};

/// Writes floats as `{:.16e}`, which round-trips every finite `f64`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_exact_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats);
    value.serialize(&mut ser).expect("records serialize");
    String::from_utf8(out).expect("JSON is UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub node: usize,
    pub normal: [f64; 3],
    pub distance: f64,
    pub rhs: f64,
    pub kind: ContactKind,
    pub tip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionRecord {
    pub contacts: Vec<ContactRecord>,
    pub multipliers: Vec<f64>,
    pub energy: f64,
    pub corrections: usize,
}

/// One line of `frames.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub tip: usize,
    pub ds: f64,
    pub s: Vec<f64>,
    pub gamma: Vec<[f64; 3]>,
    pub k: Vec<[f64; 3]>,
    /// Reaction used to advance from this frame; absent on terminal frames.
    pub reaction: Option<ReactionRecord>,
    pub min_distance: f64,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl FrameRecord {
    pub fn from_frame(frame: &Frame) -> Self {
        let state = &frame.state;
        let reaction = frame.reaction.as_ref().map(|r| ReactionRecord {
            contacts: r
                .contacts
                .contacts
                .iter()
                .zip(&r.rows)
                .map(|(c, row)| ContactRecord {
                    node: c.node,
                    normal: arr(&row.normal),
                    distance: c.distance,
                    rhs: row.rhs,
                    kind: c.kind,
                    tip: row.tip,
                })
                .collect(),
            multipliers: r.solution.multipliers.clone(),
            energy: r.solution.energy,
            corrections: r.corrections,
        });
        Self {
            t: state.t(),
            tip: state.tip(),
            ds: state.spacing(),
            s: state.grid().nodes().collect(),
            gamma: state.positions().iter().map(arr).collect(),
            k: state.tangents().iter().map(arr).collect(),
            reaction,
            min_distance: frame.min_distance,
        }
    }

    /// State exactly as stored, without re-deriving positions.
    pub fn state(&self) -> Result<StemState, String> {
        let grid = ArclengthGrid::new(self.ds, self.s.len()).map_err(|e| e.to_string())?;
        if self.gamma.len() != self.s.len() || self.k.len() != self.s.len() || self.tip >= self.s.len() {
            return Err("frame fields have inconsistent lengths".into());
        }
        Ok(StemState::from_parts_unchecked(
            grid,
            self.tip,
            self.gamma.iter().map(|p| Vec3::from(*p)).collect(),
            self.k.iter().map(|p| Vec3::from(*p)).collect(),
        ))
    }

    /// Constraint rows of the stored reaction, on the stored positions.
    pub fn rows(&self) -> Vec<ConstraintRow> {
        let Some(r) = &self.reaction else {
            return Vec::new();
        };
        r.contacts
            .iter()
            .map(|c| ConstraintRow {
                node: c.node,
                point: Vec3::from(self.gamma[c.node]),
                normal: Vec3::from(c.normal),
                rhs: c.rhs,
                tip: c.tip,
            })
            .collect()
    }
}

pub struct JsonLinesWriter {
    out: BufWriter<File>,
}

impl JsonLinesWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        self.out.write_all(to_exact_json(value).as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(value);
    }
    Ok(out)
}
