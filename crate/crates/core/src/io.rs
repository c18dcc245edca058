//! File formats: ".fld" ensemble fields, ".dic" dictionary exports, ".spm"
//! discovered models, and CSV target dumps.
//!
//! All three binary-ish formats share the same skeleton: a short ASCII
//! header terminated by `end`, then (for .fld/.dic) a raw little-endian f64
//! payload whose exact byte count is implied by the header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::features::Dictionary;
use crate::grid::{Boundary, Grid1d, TimeSpec};
use crate::sim::EnsembleField;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_line(reader: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(format_err(path, "unexpected end of header"));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn expect_key<'a>(line: &'a str, key: &str, path: &Path) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| format_err(path, format!("expected '{key} <value>', got '{line}'")))
}

fn parse_value<T: std::str::FromStr>(s: &str, what: &str, path: &Path) -> Result<T> {
    s.parse()
        .map_err(|_| format_err(path, format!("cannot parse {what} from '{s}'")))
}

// ---------------------------------------------------------------------------
// .fld ensemble fields
// ---------------------------------------------------------------------------

const FLD_MAGIC: &str = "SPDEFLD 1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FldHeader {
    pub n_ensembles: usize,
    pub n_steps: usize,
    pub n_nodes: usize,
    pub dt: f64,
    pub dx: f64,
    pub seed: u64,
}

impl FldHeader {
    pub fn payload_len(&self) -> usize {
        self.n_ensembles * self.n_steps * self.n_nodes
    }

    /// Reconstruct the grid; the boundary is not stored in the file and must
    /// come from the run configuration.
    pub fn grid(&self, boundary: Boundary) -> Result<Grid1d> {
        let length = match boundary {
            Boundary::Periodic => self.dx * self.n_nodes as f64,
            Boundary::DirichletZero => self.dx * (self.n_nodes + 1) as f64,
        };
        Grid1d::new(length, self.n_nodes, boundary)
    }

    pub fn time(&self) -> Result<TimeSpec> {
        TimeSpec::from_counts(self.dt, self.n_steps)
    }
}

fn write_fld_header(w: &mut impl Write, h: &FldHeader) -> Result<()> {
    writeln!(w, "{FLD_MAGIC}")?;
    writeln!(w, "ns {}", h.n_ensembles)?;
    writeln!(w, "nt {}", h.n_steps)?;
    writeln!(w, "nx {}", h.n_nodes)?;
    writeln!(w, "dt {}", h.dt)?;
    writeln!(w, "dx {}", h.dx)?;
    writeln!(w, "seed {}", h.seed)?;
    writeln!(w, "end")?;
    Ok(())
}

fn read_fld_header(reader: &mut impl BufRead, path: &Path) -> Result<FldHeader> {
    let magic = read_line(reader, path)?;
    if magic != FLD_MAGIC {
        return Err(format_err(path, format!("bad magic '{magic}'")));
    }
    let ns = parse_value(expect_key(&read_line(reader, path)?, "ns", path)?, "ns", path)?;
    let nt = parse_value(expect_key(&read_line(reader, path)?, "nt", path)?, "nt", path)?;
    let nx = parse_value(expect_key(&read_line(reader, path)?, "nx", path)?, "nx", path)?;
    let dt = parse_value(expect_key(&read_line(reader, path)?, "dt", path)?, "dt", path)?;
    let dx = parse_value(expect_key(&read_line(reader, path)?, "dx", path)?, "dx", path)?;
    let seed = parse_value(expect_key(&read_line(reader, path)?, "seed", path)?, "seed", path)?;
    let end = read_line(reader, path)?;
    if end != "end" {
        return Err(format_err(path, format!("expected 'end', got '{end}'")));
    }
    Ok(FldHeader {
        n_ensembles: ns,
        n_steps: nt,
        n_nodes: nx,
        dt,
        dx,
        seed,
    })
}

fn write_f64_block(w: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(64 * 1024);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
        if buf.len() >= 64 * 1024 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Incremental field writer used when trajectories stream straight to disk.
pub struct FldWriter {
    writer: BufWriter<File>,
    header: FldHeader,
    written: usize,
    path: std::path::PathBuf,
}

impl FldWriter {
    pub fn create(path: impl AsRef<Path>, header: FldHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut writer = BufWriter::new(File::create(&path)?);
        write_fld_header(&mut writer, &header)?;
        Ok(FldWriter {
            writer,
            header,
            written: 0,
            path,
        })
    }

    pub fn write_ensemble(&mut self, trajectory: ArrayView2<'_, f64>) -> Result<()> {
        if trajectory.nrows() != self.header.n_steps || trajectory.ncols() != self.header.n_nodes {
            return Err(format_err(
                &self.path,
                format!(
                    "trajectory shape ({}, {}) does not match header ({}, {})",
                    trajectory.nrows(),
                    trajectory.ncols(),
                    self.header.n_steps,
                    self.header.n_nodes
                ),
            ));
        }
        write_f64_block(&mut self.writer, trajectory.iter().copied())?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.n_ensembles {
            return Err(format_err(
                &self.path,
                format!(
                    "wrote {} ensembles, header promises {}",
                    self.written, self.header.n_ensembles
                ),
            ));
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// Write a whole in-memory field.
pub fn write_field(path: impl AsRef<Path>, field: &EnsembleField) -> Result<()> {
    let header = FldHeader {
        n_ensembles: field.n_ensembles(),
        n_steps: field.time.n_steps(),
        n_nodes: field.grid.n_nodes(),
        dt: field.time.step(),
        dx: field.grid.spacing(),
        seed: field.seed,
    };
    let mut writer = FldWriter::create(path, header)?;
    for s in 0..field.n_ensembles() {
        writer.write_ensemble(field.ensemble(s))?;
    }
    writer.finish()
}

/// Streaming field reader handing back one trajectory at a time.
pub struct FldReader {
    reader: BufReader<File>,
    header: FldHeader,
    read: usize,
    path: std::path::PathBuf,
}

impl FldReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let total = file.metadata()?.len();
        let mut reader = BufReader::with_capacity(1 << 20, file);
        let header = read_fld_header(&mut reader, &path)?;
        let header_len = header_byte_len(&header);
        let expected = header_len + header.payload_len() as u64 * 8;
        if total != expected {
            return Err(format_err(
                &path,
                format!("file is {total} bytes, header implies {expected}"),
            ));
        }
        Ok(FldReader {
            reader,
            header,
            read: 0,
            path,
        })
    }

    pub fn header(&self) -> &FldHeader {
        &self.header
    }

    /// Next trajectory of shape (N_t, N_x); `None` after the last ensemble.
    pub fn next_ensemble(&mut self) -> Result<Option<Array2<f64>>> {
        if self.read == self.header.n_ensembles {
            return Ok(None);
        }
        let count = self.header.n_steps * self.header.n_nodes;
        let mut bytes = vec![0u8; count * 8];
        self.reader.read_exact(&mut bytes)?;
        let mut values = Vec::with_capacity(count);
        for chunk in bytes.chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(format_err(&self.path, "non-finite field value"));
            }
            values.push(v);
        }
        self.read += 1;
        Ok(Some(
            Array2::from_shape_vec((self.header.n_steps, self.header.n_nodes), values)
                .expect("shape from header"),
        ))
    }
}

fn header_byte_len(h: &FldHeader) -> u64 {
    let mut buf = Vec::new();
    write_fld_header(&mut buf, h).expect("in-memory write");
    buf.len() as u64
}

/// Load a whole field into memory. The boundary condition is supplied by the
/// caller (the format does not store it).
pub fn read_field(path: impl AsRef<Path>, boundary: Boundary) -> Result<EnsembleField> {
    let mut reader = FldReader::open(&path)?;
    let header = *reader.header();
    let grid = header.grid(boundary)?;
    let time = header.time()?;
    let mut data = Array3::zeros((header.n_ensembles, header.n_steps, header.n_nodes));
    let mut s = 0;
    while let Some(block) = reader.next_ensemble()? {
        data.index_axis_mut(ndarray::Axis(0), s).assign(&block);
        s += 1;
    }
    Ok(EnsembleField {
        data,
        grid,
        time,
        seed: header.seed,
    })
}

// ---------------------------------------------------------------------------
// .dic dictionary export
// ---------------------------------------------------------------------------

const DIC_MAGIC: &str = "SPDEDIC 1";

/// Column-major dictionary export with one `term <name>` line per column.
pub fn write_dictionary(path: impl AsRef<Path>, dict: &Dictionary) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{DIC_MAGIC}")?;
    writeln!(w, "n {}", dict.n_rows())?;
    writeln!(w, "k {}", dict.n_terms())?;
    for name in dict.term_names() {
        writeln!(w, "term {name}")?;
    }
    writeln!(w, "end")?;
    write_f64_block(&mut w, dict.matrix.iter().copied())?; // nalgebra stores column-major
    w.flush()?;
    Ok(())
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let magic = read_line(&mut reader, path)?;
    if magic != DIC_MAGIC {
        return Err(format_err(path, format!("bad magic '{magic}'")));
    }
    let n: usize = parse_value(expect_key(&read_line(&mut reader, path)?, "n", path)?, "n", path)?;
    let k: usize = parse_value(expect_key(&read_line(&mut reader, path)?, "k", path)?, "k", path)?;
    let mut terms = Vec::with_capacity(k);
    for _ in 0..k {
        let line = read_line(&mut reader, path)?;
        let name = expect_key(&line, "term", path)?;
        let term = crate::features::parse_term_name(name)
            .ok_or_else(|| format_err(path, format!("unknown term name '{name}'")))?;
        terms.push(term);
    }
    let end = read_line(&mut reader, path)?;
    if end != "end" {
        return Err(format_err(path, format!("expected 'end', got '{end}'")));
    }
    let mut bytes = vec![0u8; n * k * 8];
    reader.read_exact(&mut bytes)?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Dictionary {
        matrix: nalgebra::DMatrix::from_vec(n, k, values),
        terms,
        standardization: None,
    })
}

// ---------------------------------------------------------------------------
// .spm discovered models
// ---------------------------------------------------------------------------

const SPM_MAGIC: &str = "SPDEMDL 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Drift,
    Diffusion,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Drift => "drift",
            Component::Diffusion => "diffusion",
        }
    }
}

/// One selected term of a discovered model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmTerm {
    pub name: String,
    pub pip: f64,
    pub mean: f64,
    pub std: f64,
}

/// Discovered drift or squared-diffusion model as stored in a ".spm" file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmModel {
    pub component: Component,
    /// Inference method; "vb" is the default and is not written to disk.
    pub method: String,
    pub terms: Vec<SpmTerm>,
    pub elbo: f64,
    pub iters: usize,
}

pub fn write_model(path: impl AsRef<Path>, model: &SpmModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "{SPM_MAGIC}")?;
    writeln!(w, "component {}", model.component.as_str())?;
    if model.method != "vb" {
        writeln!(w, "method {}", model.method)?;
    }
    for t in &model.terms {
        writeln!(w, "term {} {} {} {}", t.name, t.pip, t.mean, t.std)?;
    }
    writeln!(w, "elbo {}", model.elbo)?;
    writeln!(w, "iters {}", model.iters)?;
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SpmModel> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let magic = read_line(&mut reader, path)?;
    if magic != SPM_MAGIC {
        return Err(format_err(path, format!("bad magic '{magic}'")));
    }
    let comp_line = read_line(&mut reader, path)?;
    let component = match expect_key(&comp_line, "component", path)? {
        "drift" => Component::Drift,
        "diffusion" => Component::Diffusion,
        other => return Err(format_err(path, format!("unknown component '{other}'"))),
    };
    let mut method = "vb".to_string();
    let mut terms = Vec::new();
    let mut elbo = None;
    let mut iters = None;
    loop {
        let line = read_line(&mut reader, path)?;
        if line == "end" {
            break;
        } else if let Some(rest) = line.strip_prefix("method ") {
            method = rest.to_string();
        } else if let Some(rest) = line.strip_prefix("term ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(format_err(path, format!("malformed term line '{line}'")));
            }
            terms.push(SpmTerm {
                name: parts[0].to_string(),
                pip: parse_value(parts[1], "pip", path)?,
                mean: parse_value(parts[2], "mean", path)?,
                std: parse_value(parts[3], "std", path)?,
            });
        } else if let Some(rest) = line.strip_prefix("elbo ") {
            elbo = Some(parse_value(rest, "elbo", path)?);
        } else if let Some(rest) = line.strip_prefix("iters ") {
            iters = Some(parse_value(rest, "iters", path)?);
        } else {
            return Err(format_err(path, format!("unexpected line '{line}'")));
        }
    }
    Ok(SpmModel {
        component,
        method,
        terms,
        elbo: elbo.ok_or_else(|| format_err(path, "missing elbo line"))?,
        iters: iters.ok_or_else(|| format_err(path, "missing iters line"))?,
    })
}

// ---------------------------------------------------------------------------
// CSV target dump
// ---------------------------------------------------------------------------

/// Two-column `row_index,value` export for debugging.
pub fn write_targets_csv(path: impl AsRef<Path>, values: &DVector<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "row_index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_dictionary, generate_terms};
    use crate::model::SpdeModel;
    use crate::sim::{simulate_ensemble, InitialCondition};

    fn small_field() -> EnsembleField {
        let grid = Grid1d::new(6.0, 6, Boundary::Periodic).unwrap();
        let time = TimeSpec::new(0.05, 0.01).unwrap();
        let model = SpdeModel::new("m", 1.0, 0.8, vec![(1, 0.5)]).unwrap();
        simulate_ensemble(&model, &grid, &time, 4, &InitialCondition::Constant(0.3), 17).unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fld");
        let field = small_field();
        write_field(&path, &field).unwrap();
        let back = read_field(&path, Boundary::Periodic).unwrap();
        assert_eq!(field.data, back.data);
        assert_eq!(field.seed, back.seed);
        assert_eq!(field.grid, back.grid);
        assert_eq!(field.time, back.time);
    }

    #[test]
    fn truncated_field_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fld");
        let field = small_field();
        write_field(&path, &field).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 8).unwrap();
        assert!(matches!(
            FldReader::open(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn streaming_reader_matches_bulk_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fld");
        let field = small_field();
        write_field(&path, &field).unwrap();
        let mut r = FldReader::open(&path).unwrap();
        let mut s = 0;
        while let Some(block) = r.next_ensemble().unwrap() {
            assert_eq!(block, field.ensemble(s).to_owned());
            s += 1;
        }
        assert_eq!(s, 4);
    }

    #[test]
    fn dictionary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dic");
        let field = small_field();
        let dict = build_dictionary(&field, &generate_terms(2, 2, true)).unwrap();
        write_dictionary(&path, &dict).unwrap();
        let back = read_dictionary(&path).unwrap();
        assert_eq!(dict.terms, back.terms);
        assert_eq!(dict.matrix, back.matrix);
    }

    #[test]
    fn model_round_trip_with_and_without_method() {
        let dir = tempfile::tempdir().unwrap();
        let vb = SpmModel {
            component: Component::Drift,
            method: "vb".to_string(),
            terms: vec![
                SpmTerm {
                    name: "u_xx".into(),
                    pip: 0.999,
                    mean: 0.95123,
                    std: 0.0123,
                },
                SpmTerm {
                    name: "u^3".into(),
                    pip: 1.0,
                    mean: -1.002,
                    std: 0.05,
                },
            ],
            elbo: -14676.25,
            iters: 7,
        };
        let p1 = dir.path().join("drift.spm");
        write_model(&p1, &vb).unwrap();
        assert_eq!(read_model(&p1).unwrap(), vb);
        // no method line for the default
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(!text.contains("method"));

        let st = SpmModel {
            component: Component::Diffusion,
            method: "stlsq".to_string(),
            terms: vec![SpmTerm {
                name: "1".into(),
                pip: 1.0,
                mean: 0.93,
                std: 0.0,
            }],
            elbo: 0.0,
            iters: 3,
        };
        let p2 = dir.path().join("diff.spm");
        write_model(&p2, &st).unwrap();
        assert_eq!(read_model(&p2).unwrap(), st);
        let text = std::fs::read_to_string(&p2).unwrap();
        assert!(text.contains("method stlsq"));
    }

    #[test]
    fn targets_csv_has_row_per_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let v = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        write_targets_csv(&path, &v).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "row_index,value");
        assert_eq!(lines[2], "1,-2");
    }
}
