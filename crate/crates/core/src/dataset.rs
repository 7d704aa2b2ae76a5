//! Locating and loading a complete dataset: catalogue files, survey and
//! citation tables, and per-project raw scores.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::catalogue::{Catalogue, CatalogueError};
use crate::consensus::{self, ConsensusError, NameInputs};
use crate::scoring::{self, RawScoreRecord, ScoringError};
use crate::tsv::ParseError;

pub const RAW_SCORES_FILE: &str = "raw_scores.tsv";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing bundled file `{0}`")]
    MissingBundled(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Catalogue(#[from] CatalogueError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Somewhere the data files can be read from by name.
pub trait DataSource: fmt::Debug + Send + Sync {
    fn read(&self, name: &str) -> Result<String, DatasetError>;
    fn describe(&self) -> String;
}

/// Files in a directory on disk.
#[derive(Debug, Clone)]
pub struct DirSource {
    root: PathBuf,
}

impl DirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl DataSource for DirSource {
    fn read(&self, name: &str) -> Result<String, DatasetError> {
        let path = self.root.join(name);
        std::fs::read_to_string(&path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn describe(&self) -> String {
        self.root.display().to_string()
    }
}

/// The dataset compiled into the binary.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bundled;

macro_rules! bundled_files {
    ($($name:literal),* $(,)?) => {
        const BUNDLED: &[(&str, &str)] = &[
            $(($name, include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/", $name)))),*
        ];
    };
}

bundled_files!(
    "entries.tsv",
    "project_labels.tsv",
    "taxonomy.tsv",
    "facets.tsv",
    "crosswalk.tsv",
    "exclusions.tsv",
    "round1.tsv",
    "round2.tsv",
    "citations.tsv",
    "raw_scores.tsv",
);

impl Bundled {
    pub fn files() -> impl Iterator<Item = (&'static str, &'static str)> {
        BUNDLED.iter().copied()
    }

    /// Writes the bundled files into `dir`, e.g. to start a customised dataset.
    pub fn write_to(dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in Self::files() {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

impl DataSource for Bundled {
    fn read(&self, name: &str) -> Result<String, DatasetError> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| (*text).to_owned())
            .ok_or_else(|| DatasetError::MissingBundled(name.to_owned()))
    }

    fn describe(&self) -> String {
        "bundled".into()
    }
}

/// Interprets a `--data` style argument: `bundled` or a directory.
pub fn source_from_arg(arg: &str) -> Box<dyn DataSource> {
    if arg == "bundled" {
        Box::new(Bundled)
    } else {
        Box::new(DirSource::new(arg))
    }
}

/// Everything the analyses consume.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalogue: Catalogue,
    pub names: NameInputs,
    pub raw_scores: Vec<RawScoreRecord>,
}

impl Dataset {
    pub fn load(source: &dyn DataSource) -> Result<Self, DatasetError> {
        let catalogue = Catalogue::load(source)?;
        let names = consensus::load_name_inputs(source, &catalogue)?;
        let raw_scores = scoring::parse_raw_scores(RAW_SCORES_FILE, &source.read(RAW_SCORES_FILE)?)?;
        Ok(Self {
            catalogue,
            names,
            raw_scores,
        })
    }

    pub fn bundled() -> Result<Self, DatasetError> {
        Self::load(&Bundled)
    }
}
