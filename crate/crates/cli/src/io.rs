//! CSV and JSON file formats.
//!
//! Every float is written with 17 significant digits in `%.17g` style, which
//! round-trips any `f64` exactly. Files use a header row, `,` separators and
//! LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use parity_forge::data::one_hot_encode;
use parity_forge::{GroupVector, LabelMatrix, TabularDataset};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const GROUPS_FILE: &str = "groups.csv";
/// Header of a hard-label file: one integer class id per row.
pub const HARD_LABEL_COLUMN: &str = "y";
pub const GROUP_COLUMN: &str = "g";

/// Formats like C's `%.17g`. Non-finite values become `NaN`, `inf`, `-inf`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    strip_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(field: &str, path: &Path, row: usize, col: usize) -> CliResult<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Parse(format!(
            "{}: row {}, column {}: {field:?} is not a number",
            path.display(),
            row + 1,
            col + 1
        ))
    })
}

fn parse_usize(field: &str, path: &Path, row: usize) -> CliResult<usize> {
    field.trim().parse::<usize>().map_err(|_| {
        CliError::Parse(format!(
            "{}: row {}: {field:?} is not a nonnegative integer",
            path.display(),
            row + 1
        ))
    })
}

/// A CSV file read as a header plus string records.
struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Parse(format!(
            "{}: missing header row",
            path.display()
        )));
    }
    let rows = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::csv(path, e))?;
    Ok(Table { header, rows })
}

fn to_matrix(table: &Table, path: &Path) -> CliResult<Array2<f64>> {
    let cols = table.header.len();
    let mut out = Array2::zeros((table.rows.len(), cols));
    for (i, record) in table.rows.iter().enumerate() {
        for (j, field) in record.iter().enumerate() {
            out[[i, j]] = parse_f64(field, path, i, j)?;
        }
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> CliResult<Array2<f64>> {
    to_matrix(&read_table(path)?, path)
}

/// Reads soft labels (`c0, c1, ...`) or hard labels (a single `y` column,
/// one-hot expanded to `max(y) + 1` classes).
pub fn read_labels(path: &Path) -> CliResult<LabelMatrix> {
    let table = read_table(path)?;
    if table.header.len() == 1 && table.header[0] == HARD_LABEL_COLUMN {
        let hard = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| parse_usize(&r[0], path, i))
            .collect::<CliResult<Vec<_>>>()?;
        let n_classes = hard.iter().max().map_or(0, |m| m + 1);
        return Ok(one_hot_encode(&hard, n_classes)?);
    }
    Ok(LabelMatrix::new(to_matrix(&table, path)?)?)
}

/// Reads a `g` column; the group count is `max(g) + 1`.
pub fn read_groups(path: &Path) -> CliResult<GroupVector> {
    let table = read_table(path)?;
    if table.header.len() != 1 {
        return Err(CliError::Parse(format!(
            "{}: expected a single {GROUP_COLUMN:?} column, found {}",
            path.display(),
            table.header.len()
        )));
    }
    let ids = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_usize(&r[0], path, i))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(GroupVector::from_assignment(ids)?)
}

/// Reads the `features.csv`, `labels.csv`, `groups.csv` triple from `dir`.
pub fn read_dataset(dir: &Path) -> CliResult<TabularDataset> {
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let labels = read_labels(&dir.join(LABELS_FILE))?;
    let groups = read_groups(&dir.join(GROUPS_FILE))?;
    Ok(TabularDataset::new(features, labels, groups)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writes rows of pre-formatted cells under `header`.
pub fn write_rows<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = create(path)?;
    let mut write = |line: String| writeln!(out, "{line}").map_err(|e| CliError::io(path, e));
    write(header.join(","))?;
    for row in rows {
        write(row.join(","))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a matrix with columns `{prefix}0, {prefix}1, ...`.
pub fn write_matrix(path: &Path, prefix: &str, m: &Array2<f64>) -> CliResult<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    write_rows(
        path,
        &header,
        m.rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| fmt_g17(v)).collect()),
    )
}

pub fn write_features(path: &Path, features: &Array2<f64>) -> CliResult<()> {
    write_matrix(path, "f", features)
}

pub fn write_labels(path: &Path, labels: &LabelMatrix) -> CliResult<()> {
    write_matrix(path, "c", &labels.view().to_owned())
}

pub fn write_groups(path: &Path, groups: &GroupVector) -> CliResult<()> {
    write_rows(
        path,
        &[GROUP_COLUMN.to_string()],
        groups.assignment().iter().map(|g| vec![g.to_string()]),
    )
}

pub fn write_dataset(dir: &Path, data: &TabularDataset) -> CliResult<()> {
    write_features(&dir.join(FEATURES_FILE), &data.features().to_owned())?;
    write_labels(&dir.join(LABELS_FILE), data.labels())?;
    write_groups(&dir.join(GROUPS_FILE), data.groups())
}

/// `serde_json` formatter that writes floats as [`fmt_g17`] and non-finite
/// floats as `null`.
struct G17Formatter(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for G17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_g17(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> CliResult<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        G17Formatter(serde_json::ser::PrettyFormatter::new()),
    );
    value.serialize(&mut ser).map_err(CliError::Json)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = to_json_string(value)?;
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}
