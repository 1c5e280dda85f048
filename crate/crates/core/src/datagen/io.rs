use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Provenance, Split};
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};

pub const DATASET_KIND: &str = "dataset";

fn push_matrix(c: &mut Container, name: &str, m: &Array2<f64>) {
    c.push(name, &[m.nrows(), m.ncols()], ArrayData::F64(m.iter().copied().collect()));
}

fn read_matrix(c: &Container, name: &str) -> Result<Array2<f64>> {
    let (shape, data) = c.f64_array(name)?;
    if shape.len() != 2 {
        return Err(c.format_error(format!("array `{name}` must be 2-D, got shape {shape:?}")));
    }
    Array2::from_shape_vec((shape[0], shape[1]), data.to_vec()).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

fn read_split(c: &Container, prefix: &str) -> Result<Split> {
    let inputs = read_matrix(c, &format!("{prefix}.inputs"))?;
    let latents = read_matrix(c, &format!("{prefix}.latents"))?;
    let (_, labels) = c.u8_array(&format!("{prefix}.labels"))?;
    if labels.len() != inputs.nrows() || latents.nrows() != inputs.nrows() {
        return Err(c.format_error(format!("`{prefix}` arrays disagree on row count")));
    }
    Ok(Split { inputs, labels: labels.to_vec(), latents })
}

impl Dataset {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(DATASET_KIND, serde_json::to_value(&self.provenance)?);
        if let Some(a) = &self.provenance.embedding_matrix {
            push_matrix(&mut c, "embedding", a);
        }
        for (prefix, split) in [("train", &self.train), ("test", &self.test)] {
            push_matrix(&mut c, &format!("{prefix}.inputs"), &split.inputs);
            c.push(&format!("{prefix}.labels"), &[split.len()], ArrayData::U8(split.labels.clone()));
            push_matrix(&mut c, &format!("{prefix}.latents"), &split.latents);
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(DATASET_KIND)?;
        let mut provenance: Provenance = serde_json::from_value(c.meta.clone())?;
        if c.arrays.iter().any(|a| a.name == "embedding") {
            provenance.embedding_matrix = Some(read_matrix(c, "embedding")?);
        }
        Ok(Dataset { provenance, train: read_split(c, "train")?, test: read_split(c, "test")? })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    /// Write `train.csv` and `test.csv` (`x0..x{D-1},label`) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, split) in [("train.csv", &self.train), ("test.csv", &self.test)] {
            write_split_csv(split, &dir.join(name))?;
        }
        Ok(())
    }
}

pub fn write_split_csv(split: &Split, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..split.inputs.ncols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (row, &y) in split.inputs.rows().into_iter().zip(&split.labels) {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v:?}")));
        record.push(y.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
