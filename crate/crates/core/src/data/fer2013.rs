use std::path::{Path, PathBuf};

use super::{resize_bilinear, Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FER2013_PIXELS: usize = 48 * 48;

/// Class names in the file's native label order (0–6).
pub const FER2013_CLASSES: [&str; 7] = ["angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"];

/// Published per-class image counts of the full file, by class name.
pub const FER2013_PAPER_COUNTS: [(&str, usize); 7] = [
    ("neutral", 6198),
    ("happy", 8989),
    ("sad", 6077),
    ("surprise", 4002),
    ("fear", 5121),
    ("disgust", 547),
    ("angry", 4953),
];

const SIDE: usize = 64;

struct Row {
    label: usize,
    split: Split,
    pixels: Vec<u8>,
}

fn parse_error(path: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), row, msg: msg.into() }
}

/// Streams validated rows; `row` numbers count data rows from 1.
fn for_each_row(path: &Path, keep_pixels: bool, mut f: impl FnMut(Row)) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_error(path, 0, format!("missing `{name}` column in header")))
    };
    let (ce, cp, cu) = (column("emotion")?, column("pixels")?, column("Usage")?);
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(path, row, e.to_string()))?;
        let field = |c: usize| record.get(c).ok_or_else(|| parse_error(path, row, "too few fields"));
        let label: usize = field(ce)?
            .trim()
            .parse()
            .map_err(|_| parse_error(path, row, format!("bad emotion `{}`", field(ce).unwrap_or(""))))?;
        if label >= FER2013_CLASSES.len() {
            return Err(parse_error(path, row, format!("emotion {label} outside 0..=6")));
        }
        let split = match field(cu)?.trim() {
            "Training" => Split::Train,
            "PublicTest" => Split::Validation,
            "PrivateTest" => Split::Test,
            other => return Err(parse_error(path, row, format!("unknown Usage `{other}`"))),
        };
        let mut pixels = Vec::with_capacity(if keep_pixels { FER2013_PIXELS } else { 0 });
        let mut count = 0;
        for tok in field(cp)?.split_ascii_whitespace() {
            let v: u8 = tok.parse().map_err(|_| parse_error(path, row, format!("bad pixel `{tok}`")))?;
            if keep_pixels {
                pixels.push(v);
            }
            count += 1;
        }
        if count != FER2013_PIXELS {
            return Err(parse_error(path, row, format!("expected {FER2013_PIXELS} pixels, found {count}")));
        }
        f(Row { label, split, pixels });
    }
    Ok(())
}

/// Per-class and per-split counts of a FER2013 file, every row validated
/// but no images kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fer2013Summary {
    pub path: PathBuf,
    pub class_counts: [usize; 7],
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Fer2013Summary {
    pub fn total(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn count_of(&self, class: &str) -> Option<usize> {
        FER2013_CLASSES.iter().position(|&c| c == class).map(|i| self.class_counts[i])
    }

    /// Whether the histogram equals the published per-class counts.
    pub fn matches_published(&self) -> bool {
        FER2013_PAPER_COUNTS.iter().all(|&(name, n)| self.count_of(name) == Some(n))
    }
}

pub fn scan_fer2013(path: impl AsRef<Path>) -> Result<Fer2013Summary> {
    let path = path.as_ref();
    let mut s = Fer2013Summary { path: path.into(), class_counts: [0; 7], train: 0, validation: 0, test: 0 };
    for_each_row(path, false, |row| {
        s.class_counts[row.label] += 1;
        match row.split {
            Split::Train => s.train += 1,
            Split::Validation => s.validation += 1,
            Split::Test => s.test += 1,
        }
    })?;
    Ok(s)
}

/// Loads the public FER2013 CSV (`emotion,pixels,Usage`): 48×48 grayscale
/// bytes scaled to `[0, 1]`, resized bilinearly to 64×64 and replicated to
/// three channels. `Training`/`PublicTest`/`PrivateTest` become the
/// train/validation/test splits.
pub fn load_fer2013(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for_each_row(path, true, |row| {
        let gray: Vec<f32> = row.pixels.iter().map(|&p| p as f32).collect();
        let resized = resize_bilinear(&gray, 48, 48, 1, SIDE, SIDE);
        for v in resized {
            let v = v / 255.0;
            data.extend_from_slice(&[v, v, v]);
        }
        labels.push(row.label);
        splits.push(row.split);
    })?;
    let n = labels.len();
    Ok(Dataset {
        name: format!("fer2013:{}", path.display()),
        images: Tensor::new([n, SIDE, SIDE, 3], data)?,
        labels,
        class_names: FER2013_CLASSES.iter().map(|s| s.to_string()).collect(),
        dimensional: None,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn row(label: &str, pixel: &str, count: usize, usage: &str) -> String {
        format!("{label},{},{usage}\n", vec![pixel; count].join(" "))
    }

    fn write(rows: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "emotion,pixels,Usage\n{}", rows.concat()).unwrap();
        f
    }

    #[test]
    fn constant_rows_decode_exactly() {
        let f = write(&[row("3", "0", 2304, "Training"), row("6", "128", 2304, "PrivateTest")]);
        let d = load_fer2013(f.path()).unwrap();
        assert_eq!(d.image_shape(), [64, 64, 3]);
        assert_eq!(d.labels, vec![3, 6]);
        assert_eq!(d.splits, vec![Split::Train, Split::Test]);
        let per = 64 * 64 * 3;
        assert!(d.images.data()[..per].iter().all(|&v| v == 0.0));
        assert!(d.images.data()[per..].iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn malformed_rows_name_their_row() {
        let f = write(&[row("0", "1", 2304, "Training"), row("0", "1", 2303, "Training")]);
        match scan_fer2013(f.path()) {
            Err(Error::Parse { row, msg, .. }) => {
                assert_eq!(row, 2);
                assert!(msg.contains("2303"));
            }
            other => panic!("{other:?}"),
        }
        let f = write(&[row("9", "1", 2304, "Training")]);
        assert!(matches!(load_fer2013(f.path()), Err(Error::Parse { row: 1, .. })));
        let f = write(&[row("1", "x", 2304, "Training")]);
        assert!(matches!(load_fer2013(f.path()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn scan_counts_classes_and_splits() {
        let f = write(&[
            row("0", "5", 2304, "Training"),
            row("0", "5", 2304, "PublicTest"),
            row("5", "5", 2304, "PrivateTest"),
        ]);
        let s = scan_fer2013(f.path()).unwrap();
        assert_eq!(s.class_counts, [2, 0, 0, 0, 0, 1, 0]);
        assert_eq!((s.train, s.validation, s.test), (1, 1, 1));
        assert!(!s.matches_published());
    }

    #[test]
    fn published_counts_total() {
        assert_eq!(FER2013_PAPER_COUNTS.iter().map(|c| c.1).sum::<usize>(), 35_887);
    }
}
