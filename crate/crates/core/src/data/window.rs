//! Sliding-window supervised dataset construction and binary persistence.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::data::frame::Frame;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"GFWNDS01";
const VERSION: u32 = 1;

/// Supervised windows over a frame: `inputs[j]` holds rows
/// `source_rows[j] - L .. source_rows[j]` of every column and `targets[j]`
/// is the target column at row `source_rows[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// `[count, L, features]`.
    pub inputs: Tensor,
    /// `[count]`.
    pub targets: Tensor,
    pub window_len: usize,
    pub feature_count: usize,
    /// Target row index in the source frame for each window; always a
    /// contiguous ascending run.
    pub source_rows: Vec<usize>,
}

impl WindowedDataset {
    pub fn count(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn empty(window_len: usize, feature_count: usize) -> Self {
        WindowedDataset {
            inputs: Tensor::zeros(&[0, window_len, feature_count]),
            targets: Tensor::zeros(&[0]),
            window_len,
            feature_count,
            source_rows: Vec::new(),
        }
    }

    /// Window `j` as a flat `[L * features]` slice.
    pub fn input(&self, j: usize) -> &[f64] {
        let w = self.window_len * self.feature_count;
        &self.inputs.data()[j * w..(j + 1) * w]
    }

    pub fn target(&self, j: usize) -> f64 {
        self.targets.data()[j]
    }

    /// Copies the windows at `indices` into a `[batch, L, features]` input
    /// tensor and a `[batch, 1]` target tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let w = self.window_len * self.feature_count;
        let mut x = Tensor::zeros(&[indices.len(), self.window_len, self.feature_count]);
        let mut y = Tensor::zeros(&[indices.len(), 1]);
        {
            let xd = x.data_mut();
            let yd = y.data_mut();
            for (b, &j) in indices.iter().enumerate() {
                xd[b * w..(b + 1) * w].copy_from_slice(self.input(j));
                yd[b] = self.target(j);
            }
        }
        (x, y)
    }

    /// The contiguous sub-dataset of windows `range.start..range.end`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.count() || range.start > range.end {
            return Err(Error::InvalidRange(format!(
                "window range {}..{} out of bounds for {} windows",
                range.start,
                range.end,
                self.count()
            )));
        }
        let w = self.window_len * self.feature_count;
        let inputs = Tensor::from_vec(
            self.inputs.data()[range.start * w..range.end * w].to_vec(),
            &[range.len(), self.window_len, self.feature_count],
        )?;
        let targets = Tensor::from_vec(
            self.targets.data()[range.clone()].to_vec(),
            &[range.len()],
        )?;
        Ok(WindowedDataset {
            inputs,
            targets,
            window_len: self.window_len,
            feature_count: self.feature_count,
            source_rows: self.source_rows[range].to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u64::<LittleEndian>(self.count() as u64)?;
        out.write_u32::<LittleEndian>(self.window_len as u32)?;
        out.write_u32::<LittleEndian>(self.feature_count as u32)?;
        let first = self.source_rows.first().copied().unwrap_or(self.window_len);
        out.write_u64::<LittleEndian>(first as u64)?;
        for &t in self.targets.data() {
            out.write_f64::<LittleEndian>(t)?;
        }
        for &v in self.inputs.data() {
            out.write_f64::<LittleEndian>(v)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut inp = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        inp.read_exact(&mut magic)
            .map_err(|_| Error::DatasetFormat(format!("{}: truncated header", path.display())))?;
        if &magic != MAGIC {
            return Err(Error::DatasetFormat(format!(
                "{}: bad magic {:?}",
                path.display(),
                magic
            )));
        }
        let version = inp.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::DatasetFormat(format!(
                "{}: unsupported version {}",
                path.display(),
                version
            )));
        }
        let count = inp.read_u64::<LittleEndian>()? as usize;
        let window_len = inp.read_u32::<LittleEndian>()? as usize;
        let feature_count = inp.read_u32::<LittleEndian>()? as usize;
        let first_row = inp.read_u64::<LittleEndian>()? as usize;

        let mut targets = vec![0.0; count];
        inp.read_f64_into::<LittleEndian>(&mut targets)
            .map_err(|_| Error::DatasetFormat(format!("{}: truncated targets", path.display())))?;
        let mut inputs = vec![0.0; count * window_len * feature_count];
        inp.read_f64_into::<LittleEndian>(&mut inputs)
            .map_err(|_| Error::DatasetFormat(format!("{}: truncated inputs", path.display())))?;
        let mut trailing = [0u8; 1];
        if inp.read(&mut trailing)? != 0 {
            return Err(Error::DatasetFormat(format!(
                "{}: trailing bytes after payload",
                path.display()
            )));
        }

        Ok(WindowedDataset {
            inputs: Tensor::from_vec(inputs, &[count, window_len, feature_count])?,
            targets: Tensor::from_vec(targets, &[count])?,
            window_len,
            feature_count,
            source_rows: (0..count).map(|j| first_row + j).collect(),
        })
    }
}

/// Builds all windows of `window_len` consecutive rows, each predicting
/// `target_col` at the row immediately after the window. A frame with
/// `n_rows <= window_len` yields an empty dataset, not an error.
pub fn make_windows(frame: &Frame, window_len: usize, target_col: &str) -> Result<WindowedDataset> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    let target = frame
        .column_index(target_col)
        .ok_or_else(|| Error::Schema(format!("frame has no column '{}'", target_col)))?;
    let (n, width) = (frame.n_rows(), frame.n_cols());
    if n <= window_len {
        return Ok(WindowedDataset::empty(window_len, width));
    }
    let count = n - window_len;
    let mut inputs = Tensor::zeros(&[count, window_len, width]);
    let mut targets = Tensor::zeros(&[count]);
    {
        let id = inputs.data_mut();
        let td = targets.data_mut();
        let w = window_len * width;
        for j in 0..count {
            id[j * w..(j + 1) * w].copy_from_slice(
                &frame.values()[j * width..(j + window_len) * width],
            );
            td[j] = frame.value(j + window_len, target);
        }
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        window_len,
        feature_count: width,
        source_rows: (window_len..n).collect(),
    })
}

/// Splits windows in time order: the first `floor(count * train_fraction)`
/// go to train, the rest to test. No shuffling.
pub fn chronological_split(
    dataset: &WindowedDataset,
    train_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {}",
            train_fraction
        )));
    }
    let n_train = (dataset.count() as f64 * train_fraction).floor() as usize;
    Ok((
        dataset.slice(0..n_train)?,
        dataset.slice(n_train..dataset.count())?,
    ))
}
