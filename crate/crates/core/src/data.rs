//! Dataset ingestion, deterministic splitting, and synthetic benchmark
//! generation.
//!
//! CSV dialect: comma-separated, optional single header row, `.` decimal
//! separator, no quoting of numerics.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::CaseMatrix;

/// Named feature matrix plus target vector.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub features: CaseMatrix,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    /// Number of cases.
    pub fn n(&self) -> usize {
        self.targets.len()
    }

    /// Number of features.
    pub fn d(&self) -> usize {
        self.features.cols()
    }
}

/// One side of a split: features plus aligned targets.
#[derive(Clone, Debug)]
pub struct Partition {
    pub features: CaseMatrix,
    pub targets: Vec<f64>,
}

/// Split fractions. Test rows are drawn first, then validation rows from
/// the remaining training rows.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.25,
            val_fraction_of_train: 0.10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_fraction", self.test_fraction),
            ("val_fraction_of_train", self.val_fraction_of_train),
        ] {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::config(format!("{name} must be in (0, 0.5], got {f}")));
            }
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Uniform random partition without replacement: `round(n * test)` test
/// rows first, then `round(remaining * val)` validation rows, rest train.
/// Row order inside each partition follows the original dataset order.
pub fn split<R: Rng + ?Sized>(
    data: &Dataset,
    spec: &SplitSpec,
    rng: &mut R,
) -> Result<(Partition, Partition, Partition)> {
    spec.validate()?;
    let n = data.n();
    let n_test = round_half_up(n as f64 * spec.test_fraction);
    let remaining = n.saturating_sub(n_test);
    let n_val = round_half_up(remaining as f64 * spec.val_fraction_of_train);
    let n_train = remaining.saturating_sub(n_val);
    if n_test == 0 || n_val == 0 || n_train == 0 {
        return Err(Error::config(format!(
            "degenerate split for n={n}: test={n_test}, val={n_val}, train={n_train}"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let mut test: Vec<usize> = indices[..n_test].to_vec();
    let mut val: Vec<usize> = indices[n_test..n_test + n_val].to_vec();
    let mut train: Vec<usize> = indices[n_test + n_val..].to_vec();
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();

    let take = |idx: &[usize]| Partition {
        features: data.features.select_rows(idx),
        targets: idx.iter().map(|&i| data.targets[i]).collect(),
    };
    Ok((take(&train), take(&val), take(&test)))
}

/// Target column selector for CSV loading.
#[derive(Clone, Debug)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl TargetColumn {
    /// Parses a CLI argument: a non-negative integer selects by position,
    /// anything else by header name.
    pub fn from_arg(arg: &str) -> TargetColumn {
        match arg.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(arg.to_string()),
        }
    }
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(Error::data(format!(
            "blank cell at row {}, column {}",
            row + 1,
            col + 1
        )));
    }
    trimmed.parse::<f64>().map_err(|_| {
        Error::data(format!(
            "non-numeric cell '{}' at row {}, column {}",
            trimmed,
            row + 1,
            col + 1
        ))
    })
}

/// Loads a rectangular numeric CSV. The first row is treated as a header
/// when any of its cells does not parse as a number.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let (header, rows) = parse_csv_text(&text)?;
    dataset_from_table(name, header, rows, target)
}

fn parse_csv_text(text: &str) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::data("empty CSV file"));
    }
    let first_cells: Vec<&str> = lines[0].1.split(',').collect();
    let is_header = first_cells
        .iter()
        .any(|c| c.trim().parse::<f64>().is_err());
    let header = if is_header {
        Some(first_cells.iter().map(|c| c.trim().to_string()).collect())
    } else {
        None
    };
    let n_cols = first_cells.len();
    let start = usize::from(is_header);

    let mut rows = Vec::with_capacity(lines.len() - start);
    for &(line_no, line) in &lines[start..] {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(Error::data(format!(
                "ragged row {}: {} cells, expected {}",
                line_no + 1,
                cells.len(),
                n_cols
            )));
        }
        let row = cells
            .iter()
            .enumerate()
            .map(|(col, cell)| parse_cell(cell, line_no, col))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data("CSV has a header but no data rows"));
    }
    Ok((header, rows))
}

fn dataset_from_table(
    name: String,
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
    target: &TargetColumn,
) -> Result<Dataset> {
    let n_cols = rows[0].len();
    let target_idx = match target {
        TargetColumn::Index(i) => {
            if *i >= n_cols {
                return Err(Error::config(format!(
                    "target column index {i} out of range (file has {n_cols} columns)"
                )));
            }
            *i
        }
        TargetColumn::Name(n) => match &header {
            None => {
                return Err(Error::config(format!(
                    "target column '{n}' requested by name but the file has no header"
                )))
            }
            Some(h) => h
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::config(format!("target column '{n}' not found in header")))?,
        },
    };

    let targets: Vec<f64> = rows.iter().map(|r| r[target_idx]).collect();
    let feature_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != target_idx)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect();
    let d = n_cols - 1;
    let feature_names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != target_idx)
            .map(|(_, c)| c.clone())
            .collect(),
        None => (0..d).map(|j| format!("x{j}")).collect(),
    };
    let target_name = header
        .as_ref()
        .map(|h| h[target_idx].clone())
        .unwrap_or_else(|| "target".to_string());
    Ok(Dataset {
        name,
        features: CaseMatrix::from_rows(&feature_rows)?,
        targets,
        feature_names,
        target_name,
    })
}

/// Loads a CSV where every column is a feature (for prediction inputs).
pub fn load_csv_features(path: impl AsRef<Path>) -> Result<CaseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let (_, rows) = parse_csv_text(&text)?;
    CaseMatrix::from_rows(&rows)
}

/// Writes the dataset with a header row; values round-trip exactly for
/// finite doubles.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&data.feature_names.join(","));
    out.push(',');
    out.push_str(&data.target_name);
    out.push('\n');
    for i in 0..data.n() {
        for j in 0..data.d() {
            out.push_str(&format!("{}", data.features.value(i, j)));
            out.push(',');
        }
        out.push_str(&format!("{}\n", data.targets[i]));
    }
    fs::write(path.as_ref(), out)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.as_ref().display())))
}

/// Default instance count of the synthetic 5-d unit-ball benchmark.
pub const UBALL5D_DEFAULT_N: usize = 6024;

/// Synthetic benchmark: 5 features uniform on [0.05, 6.05],
/// target `10 / (5 + sum_i (x_i - 3)^2)`.
pub fn gen_uball5d<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..6.05)).collect();
        targets.push(uball5d_value(&row));
        rows.push(row);
    }
    Dataset {
        name: "uball5d".to_string(),
        features: CaseMatrix::from_rows(&rows).expect("rectangular by construction"),
        targets,
        feature_names: (0..5).map(|j| format!("x{j}")).collect(),
        target_name: "y".to_string(),
    }
}

pub fn uball5d_value(x: &[f64]) -> f64 {
    let s: f64 = x.iter().map(|&v| (v - 3.0) * (v - 3.0)).sum();
    10.0 / (5.0 + s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tmp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_file_with_header() {
        let f = tmp_csv("x,y\n1,2\n3,4\n5,6\n");
        let d = load_csv(f.path(), &TargetColumn::Name("y".into())).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.d(), 1);
        assert_eq!(d.targets, vec![2.0, 4.0, 6.0]);
        assert_eq!(d.feature_names, vec!["x"]);
    }

    #[test]
    fn load_headerless_by_index() {
        let f = tmp_csv("1,2,10\n3,4,20\n");
        let d = load_csv(f.path(), &TargetColumn::Index(2)).unwrap();
        assert_eq!(d.d(), 2);
        assert_eq!(d.targets, vec![10.0, 20.0]);
        assert_eq!(d.feature_names, vec!["x0", "x1"]);
    }

    #[test]
    fn blank_cell_error_names_position() {
        let f = tmp_csv("x,y\n1,2\n3,\n");
        let err = load_csv(f.path(), &TargetColumn::Name("y".into())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("column 2"), "{msg}");
    }

    #[test]
    fn ragged_row_is_rejected() {
        let f = tmp_csv("1,2\n3,4,5\n");
        assert!(load_csv(f.path(), &TargetColumn::Index(0)).is_err());
    }

    #[test]
    fn missing_named_target_is_config_error() {
        let f = tmp_csv("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &TargetColumn::Name("z".into())),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn split_sizes_default_fractions() {
        let d = gen_uball5d(100, &mut rng(1));
        let (train, val, test) = split(&d, &SplitSpec::default(), &mut rng(2)).unwrap();
        assert_eq!(test.targets.len(), 25);
        assert_eq!(val.targets.len(), 8);
        assert_eq!(train.targets.len(), 67);
    }

    #[test]
    fn split_is_deterministic() {
        let d = gen_uball5d(50, &mut rng(3));
        let (a1, b1, c1) = split(&d, &SplitSpec::default(), &mut rng(4)).unwrap();
        let (a2, b2, c2) = split(&d, &SplitSpec::default(), &mut rng(4)).unwrap();
        assert_eq!(a1.targets, a2.targets);
        assert_eq!(b1.targets, b2.targets);
        assert_eq!(c1.targets, c2.targets);
    }

    #[test]
    fn split_n10_is_non_degenerate() {
        let d = gen_uball5d(10, &mut rng(5));
        let (train, val, test) = split(&d, &SplitSpec::default(), &mut rng(6)).unwrap();
        // round(10 * 0.25) = 3 test; round(7 * 0.10) = 1 val; 6 train.
        assert_eq!(test.targets.len(), 3);
        assert_eq!(val.targets.len(), 1);
        assert_eq!(train.targets.len(), 6);
        assert_eq!(train.targets.len() + val.targets.len() + test.targets.len(), 10);
    }

    #[test]
    fn split_partitions_are_disjoint_and_exhaustive() {
        // Targets are almost surely unique, so multiset equality suffices.
        let d = gen_uball5d(83, &mut rng(7));
        let (train, val, test) = split(&d, &SplitSpec::default(), &mut rng(8)).unwrap();
        let mut all: Vec<f64> = train
            .targets
            .iter()
            .chain(&val.targets)
            .chain(&test.targets)
            .copied()
            .collect();
        let mut orig = d.targets.clone();
        all.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(all, orig);
    }

    #[test]
    fn uball5d_center_and_offset_values() {
        assert_eq!(uball5d_value(&[3.0; 5]), 2.0);
        let v = uball5d_value(&[3.0, 3.0, 3.0, 3.0, 5.0]);
        assert!((v - 10.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn uball5d_targets_in_range() {
        let d = gen_uball5d(2000, &mut rng(9));
        assert!(d.targets.iter().all(|&t| t > 0.0 && t <= 2.0));
        assert!(d
            .features
            .column(0)
            .iter()
            .all(|&v| (0.05..6.05).contains(&v)));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = gen_uball5d(40, &mut rng(10));
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, f.path()).unwrap();
        let back = load_csv(f.path(), &TargetColumn::Name("y".into())).unwrap();
        assert_eq!(back.targets, d.targets);
        for j in 0..5 {
            assert_eq!(back.features.column(j), d.features.column(j));
        }
    }
}
