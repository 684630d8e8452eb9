//! Artifact writing: every file goes through a temp file in the target
//! directory and is renamed into place, so readers never see partial output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mlip::orbit::PortraitSample;
use mlip::sim::StepTrace;
use mlip::traj::ReferenceSample;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// Output directory; files are staged and committed one at a time.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let parent = target.parent().unwrap_or(&self.dir).to_path_buf();
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let mut tmp = NamedTempFile::new_in(&parent).map_err(|e| CliError::io(&parent, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(&target, e))?;
        tmp.as_file()
            .sync_all()
            .map_err(|e| CliError::io(&target, e))?;
        tmp.persist(&target)
            .map_err(|e| CliError::io(&target, e.error))?;
        log::info!("wrote {}", target.display());
        self.written.push(target);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write_bytes(name, &table.to_bytes()?)
    }
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits round-trip every f64
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::internal(e.to_string());
        w.write_record(&self.header).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(fail)?;
        }
        w.into_inner()
            .map_err(|e| CliError::internal(e.to_string()))
    }
}

pub fn trace_table(trace: &StepTrace) -> Table {
    let mut t = Table::new(&["t", "domain", "p", "L", "p_zmp", "u_cmd"]);
    for s in &trace.samples {
        t.push(vec![
            s.t.into(),
            s.domain.label().into(),
            s.p.into(),
            s.momentum.into(),
            s.p_zmp.into(),
            s.u_cmd.into(),
        ]);
    }
    t
}

pub fn steps_table(trace: &StepTrace) -> Table {
    let mut t = Table::new(&["k", "p_R", "L_R", "u_R", "w_p", "w_L"]);
    for r in &trace.steps {
        t.push(vec![
            r.k.into(),
            r.x.p.into(),
            r.x.momentum.into(),
            r.u.into(),
            r.w[0].into(),
            r.w[1].into(),
        ]);
    }
    t
}

pub fn portrait_table(samples: &[PortraitSample]) -> Table {
    let mut t = Table::new(&["t", "domain", "p", "L", "p_zmp"]);
    for s in samples {
        t.push(vec![
            s.t.into(),
            s.domain.label().into(),
            s.p.into(),
            s.momentum.into(),
            s.p_zmp.into(),
        ]);
    }
    t
}

pub fn reference_table(samples: &[ReferenceSample]) -> Table {
    let mut t = Table::new(&[
        "t",
        "x_com_ref",
        "v_com_ref",
        "p_zmp_ref",
        "theta_st_ref",
        "theta_sw_ref",
    ]);
    for s in samples {
        t.push(vec![
            s.t.into(),
            s.x_com_ref.into(),
            s.v_com_ref.into(),
            s.p_zmp_ref.into(),
            s.theta_st_ref.into(),
            s.theta_sw_ref.into(),
        ]);
    }
    t
}
