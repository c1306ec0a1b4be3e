//! CSV writers shared by every artifact. Files start with a comment line
//! naming the table kind and format version, then a header row.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::{ControlSignal, Vector};

pub const CSV_VERSION: u32 = 1;

/// Twelve significant digits, trailing zeros trimmed.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

/// A small CSV table with a versioned comment header.
pub struct Table {
    kind: String,
    header: Vec<String>,
    comments: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, header: Vec<String>) -> Self {
        Self {
            kind: kind.into(),
            header,
            comments: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt12(x)).collect());
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# fracopt {} v{CSV_VERSION}", self.kind)?;
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }


    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub(crate) fn indexed(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|k| format!("{prefix}_{k}")).collect()
}

pub fn control_table(u: &ControlSignal, grid: &TimeGrid) -> Table {
    let mut header = vec!["t_start".to_string()];
    header.extend(indexed("u", u.dim()));
    let mut t = Table::new("control", header);
    for i in 0..u.cells() {
        let mut row = vec![grid.node(i)];
        row.extend(u.cell(i).iter());
        t.push_numbers(&row);
    }
    t
}

/// Read a control CSV (`t_start,u_1..u_r`, one row per grid cell).
pub fn read_control(text: &str, grid: &TimeGrid) -> Result<ControlSignal> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let nums = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Shape(format!("control row {i}: `{s}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if nums.len() < 2 {
            return Err(Error::Shape(format!("control row {i}: expected t_start and values")));
        }
        if grid.index_of(nums[0]) != Some(i) {
            return Err(Error::Shape(format!(
                "control row {i}: t_start {} is not node {i} of the grid",
                nums[0]
            )));
        }
        values.push(Vector::from_column_slice(&nums[1..]));
    }
    if values.len() != grid.steps() {
        return Err(Error::Shape(format!(
            "control file has {} rows, grid has {} cells",
            values.len(),
            grid.steps()
        )));
    }
    ControlSignal::new(values)
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|_| std::fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}
