//! Raw dataset loaders. Each produces a [`Loaded`] dataset: a schema whose
//! vocabularies are built from the data (sorted, so indices do not depend
//! on file order) and one [`Example`] per interaction, in file order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use avaew_core::features::{Example, FeatureSchema};

use crate::{Error, Result};

pub mod movielens;
pub mod taobao;

/// Counters for skipped input records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Warnings {
    pub malformed: usize,
    pub unknown_user: usize,
    pub unknown_item: usize,
}

impl Warnings {
    pub fn total(&self) -> usize {
        self.malformed + self.unknown_user + self.unknown_item
    }
}

impl fmt::Display for Warnings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} malformed, {} unknown user, {} unknown item",
            self.malformed, self.unknown_user, self.unknown_item
        )
    }
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub schema: FeatureSchema,
    pub examples: Vec<Example>,
    pub warnings: Warnings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Ml1m,
    Ml25m,
    Taobao,
}

impl DatasetFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::Ml1m => "ml1m",
            DatasetFormat::Ml25m => "ml25m",
            DatasetFormat::Taobao => "taobao",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Ml1m, Self::Ml25m, Self::Taobao].into_iter().find(|f| f.as_str() == s)
    }

    /// Input files, relative to the dataset directory.
    pub fn files(self) -> &'static [&'static str] {
        match self {
            DatasetFormat::Ml1m => &["ratings.dat", "movies.dat", "users.dat"],
            DatasetFormat::Ml25m => &["ratings.csv", "movies.csv"],
            DatasetFormat::Taobao => &["raw_sample.csv", "ad_feature.csv", "user_profile.csv"],
        }
    }

    pub fn load(self, dir: &Path) -> Result<Loaded> {
        match self {
            DatasetFormat::Ml1m => movielens::load_ml1m(dir),
            DatasetFormat::Ml25m => movielens::load_ml25m(dir),
            DatasetFormat::Taobao => taobao::load(dir),
        }
    }
}

/// Sorted value → index map.
#[derive(Clone, Debug, Default)]
pub struct Vocab<K: Ord> {
    index: BTreeMap<K, u32>,
}

impl<K: Ord + Clone> Vocab<K> {
    pub fn from_values(values: impl IntoIterator<Item = K>) -> Self {
        let set: BTreeSet<K> = values.into_iter().collect();
        Self {
            index: set.into_iter().enumerate().map(|(i, k)| (k, i as u32)).collect(),
        }
    }

    pub fn get(&self, k: &K) -> Option<u32> {
        self.index.get(k).copied()
    }

    /// At least 1, so that an empty corpus still yields a valid schema.
    pub fn size(&self) -> usize {
        self.index.len().max(1)
    }
}

/// Release year from a title ending in `(YYYY)`.
pub fn title_year(title: &str) -> Option<u16> {
    let t = title.trim_end();
    let open = t.rfind('(')?;
    let inner = t[open + 1..].strip_suffix(')')?;
    if inner.len() == 4 {
        inner.parse().ok()
    } else {
        None
    }
}

/// Decodes ISO-8859-1, the encoding of the MovieLens `.dat` files.
pub fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

/// Reads a file as latin-1 lines, without terminators.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        out.push(latin1(&buf));
    }
    Ok(out)
}
