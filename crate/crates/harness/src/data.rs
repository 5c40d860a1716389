//! Data ingestion: the synthetic generator, IDX and CSV readers and writers.
//!
//! IDX files are big-endian. Images start with magic `0x00000803`, then the item
//! count, rows and columns, then one unsigned byte per pixel. Labels start with magic
//! `0x00000801`, then the item count, then one byte per label. Pixels are scaled to
//! `[0, 1]` by dividing by 255 and flattened row-major.
//!
//! CSV files have a header row; the last column is an integer label in `[0, k)` and
//! the other columns are real features.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use gradbound::bounds::{SigmaY, SigmaYSource};
use gradbound::distributions::{empirical_label_stats, sample_mixture};
use gradbound::{DataSource, Error, LabeledMixture, Sample};

use crate::config::{DataSourceConfig, RunConfig, SigmaYConfig};
use crate::error::{HarnessError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Core(Error::Format(msg.into()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| HarnessError::io(path, e))?;
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format_err(format!("{}: truncated header at byte {}", self.what, self.pos)))?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn rest(&self, expected: usize) -> Result<&[u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < expected {
            return Err(format_err(format!(
                "{}: truncated body, expected {expected} bytes, found {}",
                self.what,
                rest.len()
            )));
        }
        if rest.len() > expected {
            return Err(format_err(format!(
                "{}: {} trailing bytes after {expected} data bytes",
                self.what,
                rest.len() - expected
            )));
        }
        Ok(rest)
    }
}

/// Parses an IDX image file and an IDX label file held in memory.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Vec<Sample>> {
    let mut img = Cursor {
        bytes: images,
        pos: 0,
        what: "images",
    };
    let magic = img.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(format!(
            "images: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let n = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;

    let mut lab = Cursor {
        bytes: labels,
        pos: 0,
        what: "labels",
    };
    let magic = lab.u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(format!(
            "labels: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let n_labels = lab.u32()? as usize;
    if n != n_labels {
        return Err(format_err(format!("{n} images but {n_labels} labels")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("IDX data set has no items".into()).into());
    }
    let pixels = rows
        .checked_mul(cols)
        .filter(|&p| p > 0)
        .ok_or_else(|| format_err(format!("images: invalid shape {rows}×{cols}")))?;
    let body = img.rest(
        n.checked_mul(pixels)
            .ok_or_else(|| format_err("images: size overflows"))?,
    )?;
    let ys = lab.rest(n)?;
    Ok(body
        .chunks_exact(pixels)
        .zip(ys)
        .map(|(px, &y)| Sample::new(px.iter().map(|&b| f64::from(b) / 255.0).collect(), usize::from(y)))
        .collect())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Vec<Sample>> {
    let img = read_file(images)?;
    let lab = read_file(labels)?;
    parse_idx(&img, &lab).map_err(|e| match e {
        HarnessError::Core(Error::Format(m)) => format_err(format!("{} / {}: {m}", images.display(), labels.display())),
        other => other,
    })
}

/// Encodes samples as IDX image and label bytes. Pixels must lie in `[0, 1]` and are
/// rounded to the nearest multiple of 1/255; labels must fit in a byte.
pub fn encode_idx(samples: &[Sample], rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    let n = u32::try_from(samples.len()).map_err(|_| HarnessError::config("too many samples for IDX"))?;
    let mut images = Vec::with_capacity(16 + samples.len() * rows * cols);
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    for dim in [rows, cols] {
        let dim = u32::try_from(dim).map_err(|_| HarnessError::config("IDX dimension too large"))?;
        images.extend_from_slice(&dim.to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + samples.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != rows * cols {
            return Err(HarnessError::config(format!(
                "sample {i} has {} features, expected {rows}×{cols}",
                s.x.len()
            )));
        }
        for &v in &s.x {
            if !(0.0..=1.0).contains(&v) {
                return Err(HarnessError::config(format!("sample {i}: pixel {v} outside [0, 1]")));
            }
            images.push((v * 255.0).round() as u8);
        }
        labels.push(u8::try_from(s.y).map_err(|_| HarnessError::config(format!("sample {i}: label {} > 255", s.y)))?);
    }
    Ok((images, labels))
}

pub fn write_idx(samples: &[Sample], rows: usize, cols: usize, images: &Path, labels: &Path) -> Result<()> {
    let (img, lab) = encode_idx(samples, rows, cols)?;
    std::fs::write(images, img).map_err(|e| HarnessError::io(images, e))?;
    std::fs::write(labels, lab).map_err(|e| HarnessError::io(labels, e))?;
    Ok(())
}

/// Parses CSV text from `reader`. `name` is used in error messages.
pub fn parse_csv<R: Read>(reader: R, k: usize, name: &str) -> Result<Vec<Sample>> {
    let parse_err = |line: u64, message: String| HarnessError::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let width = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.len();
    if width < 2 {
        return Err(parse_err(
            1,
            "need at least one feature column and a label column".into(),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("row has {len} fields, expected {expected_len}")
                }
                _ => e.to_string(),
            };
            parse_err(line, message)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |j: usize| rec.get(j).unwrap_or("").trim();
        let x =
            (0..width - 1)
                .map(|j| {
                    cell(j).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        parse_err(line, format!("column {}: {:?} is not a finite number", j + 1, cell(j)))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
        let label = cell(width - 1);
        let y: usize = label
            .parse()
            .map_err(|_| parse_err(line, format!("label {label:?} is not a nonnegative integer")))?;
        if y >= k {
            return Err(parse_err(line, format!("label {y} out of range [0, {k})")));
        }
        out.push(Sample::new(x, y));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: no data rows")).into());
    }
    Ok(out)
}

pub fn load_csv(path: &Path, k: usize) -> Result<Vec<Sample>> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_csv(f, k, &path.display().to_string())
}

/// Writes samples with a `f0,...,label` header and 17 significant digits per value.
pub fn write_csv_to<W: Write>(samples: &[Sample], w: W) -> Result<()> {
    let d = samples.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| HarnessError::config(format!("CSV write failed: {e}"));
    let header: Vec<String> = (0..d).map(|j| format!("f{j}")).chain(["label".to_string()]).collect();
    w.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let row: Vec<String> =
            s.x.iter()
                .map(|v| format!("{v:.16e}"))
                .chain([s.y.to_string()])
                .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io("CSV output", e))?;
    Ok(())
}

pub fn write_csv(samples: &[Sample], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_csv_to(samples, BufWriter::new(f))
}

/// Training data, optional held-out data and the σ_y used by the bounds.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Option<Vec<Sample>>,
    pub classes: usize,
    /// Present for synthetic data.
    pub mixture: Option<LabeledMixture>,
    pub sigma_y: SigmaY,
    pub sigma_y_source: SigmaYSource,
}

fn check_labels(samples: &[Sample], k: usize, what: &str) -> Result<()> {
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.y >= k) {
        return Err(HarnessError::config(format!(
            "{what}: item {i} has label {} but data.classes = {k}",
            s.y
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let k = cfg.classes();
        let (train, test, mixture) = match &cfg.data {
            DataSourceConfig::Synthetic {
                mixture,
                n_train,
                n_test,
            } => {
                let train = sample_mixture(mixture, *n_train, cfg.seed.derive("train"))?;
                let test = if *n_test > 0 {
                    Some(sample_mixture(mixture, *n_test, cfg.seed.derive("test"))?)
                } else {
                    None
                };
                (train, test, Some(mixture.clone()))
            }
            DataSourceConfig::Idx {
                images, labels, test, ..
            } => {
                let train = load_idx(images, labels)?;
                check_labels(&train, k, &images.display().to_string())?;
                let test = match test {
                    Some((i, l)) => {
                        let t = load_idx(i, l)?;
                        check_labels(&t, k, &i.display().to_string())?;
                        Some(t)
                    }
                    None => None,
                };
                (train, test, None)
            }
            DataSourceConfig::Csv { path, test, .. } => {
                let train = load_csv(path, k)?;
                let test = test.as_deref().map(|p| load_csv(p, k)).transpose()?;
                (train, test, None)
            }
        };
        if train.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()).into());
        }
        let d = train[0].x.len();
        if let Some(t) = &test {
            if t.iter().any(|s| s.x.len() != d) {
                return Err(HarnessError::config("test set dimension differs from the training set"));
            }
        }
        let (sigma_y, sigma_y_source) = match cfg.sigma_y {
            SigmaYConfig::Mixture => (
                SigmaY::PerLabel(mixture.as_ref().expect("checked by config").label_stds()),
                SigmaYSource::Mixture,
            ),
            SigmaYConfig::Estimated => (
                SigmaY::PerLabel(empirical_label_stats(&train, k)?.into_iter().map(|s| s.std).collect()),
                SigmaYSource::Estimated,
            ),
            SigmaYConfig::Scalar(v) => (SigmaY::Scalar(v), SigmaYSource::Config),
        };
        Ok(Dataset {
            train,
            test,
            classes: k,
            mixture,
            sigma_y,
            sigma_y_source,
        })
    }

    pub fn dim(&self) -> usize {
        self.train[0].x.len()
    }

    /// Where expectations over the data distribution are taken: the mixture when
    /// known, otherwise the training sample.
    pub fn population(&self) -> DataSource<'_> {
        match &self.mixture {
            Some(m) => DataSource::Mixture(m),
            None => DataSource::Empirical {
                samples: &self.train,
                classes: self.classes,
            },
        }
    }

    /// Where held-out risk is measured, if anywhere.
    pub fn held_out(&self) -> Option<DataSource<'_>> {
        match (&self.mixture, &self.test) {
            (Some(m), _) => Some(DataSource::Mixture(m)),
            (None, Some(t)) => Some(DataSource::Empirical {
                samples: t,
                classes: self.classes,
            }),
            (None, None) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_bytes(n: u32, rows: u32, cols: u32, px: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend_from_slice(px);
        let mut lab = Vec::new();
        for v in [IDX_LABELS_MAGIC, labels.len() as u32] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend_from_slice(labels);
        (img, lab)
    }

    #[test]
    fn single_image() {
        let (img, lab) = idx_bytes(1, 2, 2, &[0, 255, 0, 255], &[3]);
        let s = parse_idx(&img, &lab).unwrap();
        assert_eq!(s, vec![Sample::new(vec![0.0, 1.0, 0.0, 1.0], 3)]);
    }

    #[test]
    fn wrong_magic_is_named() {
        let (mut img, lab) = idx_bytes(1, 1, 1, &[7], &[0]);
        img[3] = 0x02;
        let msg = parse_idx(&img, &lab).unwrap_err().to_string();
        assert!(msg.contains("0x00000802"), "{msg}");
    }

    #[test]
    fn truncation_count_mismatch_and_empty() {
        let (img, lab) = idx_bytes(2, 2, 2, &[1; 7], &[0, 1]);
        assert!(matches!(
            parse_idx(&img, &lab),
            Err(HarnessError::Core(Error::Format(_)))
        ));
        let (img, lab) = idx_bytes(2, 1, 1, &[1, 2], &[0]);
        assert!(matches!(
            parse_idx(&img, &lab),
            Err(HarnessError::Core(Error::Format(_)))
        ));
        let (img, lab) = idx_bytes(0, 2, 2, &[], &[]);
        assert!(matches!(
            parse_idx(&img, &lab),
            Err(HarnessError::Core(Error::InvalidInput(_)))
        ));
        assert!(parse_idx(&img[..6], &lab).is_err());
    }

    #[test]
    fn csv_single_row() {
        let s = parse_csv("f0,f1,label\n0.5,1.0,1".as_bytes(), 2, "t").unwrap();
        assert_eq!(s, vec![Sample::new(vec![0.5, 1.0], 1)]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let line = |text: &str| match parse_csv(text.as_bytes(), 2, "t") {
            Err(HarnessError::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line("a,label\n0.5,2\n"), 2);
        assert_eq!(line("a,b,label\n1,2,0\n1,0\n"), 3);
        assert_eq!(line("a,label\n1,0\nx,1\n"), 3);
        assert_eq!(line("a,label\n1,-1\n"), 2);
    }
}
