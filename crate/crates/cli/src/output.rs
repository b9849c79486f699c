//! CSV and PNG writers.

use anyhow::{Context, Result};
use ndarray::Array2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Output directory plus the flags that control optional artifacts.
#[derive(Debug, Clone)]
pub struct Sink {
    dir: PathBuf,
    png: bool,
}

impl Sink {
    pub fn new(dir: impl Into<PathBuf>, png: bool) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, png })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Row-major matrix, no header, one grid row per line. Also a PNG
    /// heatmap next to it when enabled.
    pub fn matrix(&self, stem: &str, m: &Array2<f64>) -> Result<PathBuf> {
        let path = self.path(&format!("{stem}.csv"));
        write_matrix_csv(&path, m)?;
        if self.png {
            write_heatmap_png(&self.path(&format!("{stem}.png")), m)?;
        }
        Ok(path)
    }

    pub fn table(&self, name: &str) -> Result<Table> {
        Table::create(&self.path(name))
    }
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    anyhow::ensure!(
        rows.iter().all(|r| r.len() == m),
        "ragged matrix in {}",
        path.display()
    );
    Ok(Array2::from_shape_vec(
        (n, m),
        rows.into_iter().flatten().collect(),
    )?)
}

/// Heatmap with a blue-to-yellow ramp, scaled to the data range.
pub fn write_heatmap_png(path: &Path, m: &Array2<f64>) -> Result<()> {
    let (h, w) = m.dim();
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for ((i, j), &v) in m.indexed_iter() {
        let t = ((v - lo) / span).clamp(0.0, 1.0);
        img.put_pixel(j as u32, (h - 1 - i) as u32, image::Rgb(ramp(t)));
    }
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn ramp(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let x = t * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[k][c] * (1.0 - f) + STOPS[k + 1][c] * f).round() as u8;
    }
    out
}

/// CSV table written line by line and flushed after every row, so partial
/// results survive a failure later in the run.
pub struct Table {
    w: BufWriter<File>,
}

impl Table {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            w: BufWriter::new(f),
        })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let line: Vec<String> = cells.into_iter().map(|c| c.to_string()).collect();
        writeln!(self.w, "{}", line.join(","))?;
        self.w.flush()?;
        Ok(())
    }
}
