use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

/// Collects the files one command writes and finishes with a manifest.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    threads: usize,
    files: &'a [String],
    wall_time_seconds: f64,
}

impl Artifacts {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        let dir = root.join(command);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir,
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    /// Records a file written by other means.
    pub fn note(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    /// A gnuplot script for a log-log plot of columns `x:y` of `csv`.
    pub fn loglog_plot(&mut self, name: &str, csv: &str, x: usize, y: usize, title: &str) -> Result<()> {
        let body = format!(
            "set datafile separator ','\nset logscale xy\nset key off\nset title '{title}'\nset terminal pngcairo size 800,600\nset output '{stem}.png'\nplot '{csv}' every ::1 using {x}:{y} with linespoints\n",
            stem = name.trim_end_matches(".gp"),
        );
        self.text(name, &body)
    }

    pub fn finish<C: Serialize>(mut self, command: &str, config: &C) -> Result<PathBuf> {
        let files = std::mem::take(&mut self.files);
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            threads: rayon::current_num_threads(),
            files: &files,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        let p = self.path("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(self.dir)
    }
}

/// CSV with a header row; values are written with full precision.
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Csv {
            body: columns.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        self.body
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}
