//! Prepared-dataset cache.
//!
//! A tab-separated text file:
//!
//! ```text
//! AVAEW-DATASET v1
//! format    ml1m
//! n         200
//! k         20
//! seed      42
//! checksum  ratings.dat  <sha256 hex>        (one line per input file)
//! discarded <examples> <items>
//! field     <name> <kind> <vocab> <multi 0|1> (one line per schema field)
//! partition <old|warm-a|warm-b|warm-c|test> <count>
//! <label> <timestamp> <raw item id> <field 0 indices, comma-separated> ...
//! ```
//!
//! Writing the same dataset twice produces identical bytes.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use avaew_core::features::{Example, FeatureField, FeatureSchema, FieldKind, PhaseDataset};

use crate::data::{DatasetFormat, Warnings};
use crate::{Error, Result};

pub const MAGIC: &str = "AVAEW-DATASET v1";
const PARTITIONS: [&str; 5] = ["old", "warm-a", "warm-b", "warm-c", "test"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheHeader {
    pub format: DatasetFormat,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// `(file name, sha256 hex)` in [`DatasetFormat::files`] order.
    pub checksums: Vec<(String, String)>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub fn input_checksums(format: DatasetFormat, dir: &Path) -> Result<Vec<(String, String)>> {
    format
        .files()
        .iter()
        .map(|f| Ok((f.to_string(), sha256_file(&dir.join(f))?)))
        .collect()
}

/// Loads raw files, splits them and returns the dataset with its header.
pub fn prepare(
    format: DatasetFormat,
    dir: &Path,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(CacheHeader, PhaseDataset, Warnings)> {
    for f in format.files() {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::io(&p, std::io::ErrorKind::NotFound.into()));
        }
    }
    let checksums = input_checksums(format, dir)?;
    let loaded = format.load(dir)?;
    let data = PhaseDataset::build(loaded.schema, loaded.examples, n, k)?;
    let header = CacheHeader {
        format,
        n,
        k,
        seed,
        checksums,
    };
    Ok((header, data, loaded.warnings))
}

fn partitions(d: &PhaseDataset) -> [&[Example]; 5] {
    [&d.old, &d.warm_a, &d.warm_b, &d.warm_c, &d.test]
}

pub fn write_cache(path: &Path, header: &CacheHeader, data: &PhaseDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{MAGIC}").map_err(io)?;
    writeln!(w, "format\t{}", header.format.as_str()).map_err(io)?;
    writeln!(w, "n\t{}\nk\t{}\nseed\t{}", header.n, header.k, header.seed).map_err(io)?;
    for (f, sum) in &header.checksums {
        writeln!(w, "checksum\t{f}\t{sum}").map_err(io)?;
    }
    writeln!(w, "discarded\t{}\t{}", data.discarded, data.discarded_items).map_err(io)?;
    for f in data.schema.fields() {
        writeln!(
            w,
            "field\t{}\t{}\t{}\t{}",
            f.name,
            f.kind.as_str(),
            f.vocab_size,
            u8::from(f.multi_valued)
        )
        .map_err(io)?;
    }
    let mut line = String::new();
    for (name, part) in PARTITIONS.iter().zip(partitions(data)) {
        writeln!(w, "partition\t{name}\t{}", part.len()).map_err(io)?;
        for e in part {
            line.clear();
            let _ = write!(line, "{}\t{}\t{}", e.label, e.timestamp, e.item_id);
            for i in 0..e.num_fields() {
                line.push('\t');
                for (j, v) in e.field(i).iter().enumerate() {
                    if j > 0 {
                        line.push(',');
                    }
                    let _ = write!(line, "{v}");
                }
            }
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Lines {
    path: PathBuf,
    inner: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl Lines {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::io(&self.path, e)),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(&self.path, self.line, msg)
    }

    /// Next line as `key \t rest...`.
    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut parts = l.split('\t');
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.map(str::to_string).collect())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }
}

pub fn read_cache(path: &Path) -> Result<(CacheHeader, PhaseDataset)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Lines {
        path: path.to_path_buf(),
        inner: BufReader::new(file).lines(),
        line: 0,
    };
    if r.next()? != MAGIC {
        return Err(r.err(format!("not a dataset cache (expected `{MAGIC}`)")));
    }
    let fmt = r.keyed("format")?;
    let format = fmt
        .first()
        .and_then(|s| DatasetFormat::parse(s))
        .ok_or_else(|| r.err("unknown format"))?;
    let n = r.keyed("n")?.join("");
    let n = r.parse(&n)?;
    let k = r.keyed("k")?.join("");
    let k = r.parse(&k)?;
    let seed = r.keyed("seed")?.join("");
    let seed = r.parse(&seed)?;
    let mut checksums = Vec::new();
    let mut l = r.next()?;
    while let Some(rest) = l.strip_prefix("checksum\t") {
        let (f, sum) = rest.split_once('\t').ok_or_else(|| r.err("bad checksum line"))?;
        checksums.push((f.to_string(), sum.to_string()));
        l = r.next()?;
    }
    let disc: Vec<&str> = l.strip_prefix("discarded\t").ok_or_else(|| r.err("expected `discarded`"))?.split('\t').collect();
    if disc.len() != 2 {
        return Err(r.err("bad discarded line"));
    }
    let (discarded, discarded_items) = (r.parse(disc[0])?, r.parse(disc[1])?);

    let mut fields = Vec::new();
    l = r.next()?;
    while let Some(rest) = l.strip_prefix("field\t") {
        let p: Vec<&str> = rest.split('\t').collect();
        if p.len() != 4 {
            return Err(r.err("bad field line"));
        }
        let kind = FieldKind::parse(p[1]).ok_or_else(|| r.err(format!("unknown field kind `{}`", p[1])))?;
        let mut f = FeatureField::new(p[0], kind, r.parse(p[2])?);
        if p[3] == "1" {
            f = f.multi();
        }
        fields.push(f);
        l = r.next()?;
    }
    let schema = FeatureSchema::new(fields)?;

    let mut parts: Vec<Vec<Example>> = Vec::with_capacity(5);
    for (i, name) in PARTITIONS.iter().enumerate() {
        if i > 0 {
            l = r.next()?;
        }
        let p: Vec<&str> = l.split('\t').collect();
        if p.len() != 3 || p[0] != "partition" || p[1] != *name {
            return Err(r.err(format!("expected partition `{name}`")));
        }
        let count: usize = r.parse(p[2])?;
        let mut list = Vec::with_capacity(count);
        let mut bags: Vec<Vec<u32>> = vec![Vec::new(); schema.len()];
        for _ in 0..count {
            let line = r.next()?;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 + schema.len() {
                return Err(r.err(format!("expected {} columns, got {}", 3 + schema.len(), cols.len())));
            }
            for (bag, col) in bags.iter_mut().zip(&cols[3..]) {
                bag.clear();
                for v in col.split(',') {
                    bag.push(r.parse(v)?);
                }
            }
            let e = Example::new(bags.iter().map(Vec::as_slice), r.parse(cols[0])?, r.parse(cols[1])?, r.parse(cols[2])?);
            e.validate(&schema).map_err(|err| r.err(err.to_string()))?;
            list.push(e);
        }
        parts.push(list);
    }
    let mut it = parts.into_iter();
    let mut take = || it.next().expect("five partitions");
    let data = PhaseDataset {
        schema,
        old: take(),
        warm_a: take(),
        warm_b: take(),
        warm_c: take(),
        test: take(),
        n,
        k,
        discarded,
        discarded_items,
    };
    Ok((
        CacheHeader {
            format,
            n,
            k,
            seed,
            checksums,
        },
        data,
    ))
}

/// Human-readable split summary.
pub fn stats_report(data: &PhaseDataset, warnings: Option<&Warnings>) -> String {
    let s = data.stats();
    let users = data
        .schema
        .position("user")
        .map(|u| {
            let mut set = std::collections::BTreeSet::new();
            for part in partitions(data) {
                set.extend(part.iter().map(|e| e.field(u)[0]));
            }
            set.len()
        })
        .unwrap_or(0);
    let [b, c, t] = s.phase_ratios();
    let new_frac = s.new_item_fraction();
    let mut out = String::new();
    let _ = writeln!(out, "N\t{}\nK\t{}", data.n, data.k);
    let _ = writeln!(out, "users\t{users}");
    let _ = writeln!(out, "old_items\t{}", s.old_items);
    let _ = writeln!(out, "new_items\t{}", s.new_items);
    let _ = writeln!(out, "kept_new_items\t{}", s.kept_new_items);
    let _ = writeln!(out, "new_old_item_ratio\t{:.2}:{:.2}", 10.0 * new_frac, 10.0 * (1.0 - new_frac));
    let _ = writeln!(out, "old\t{}", s.old);
    let _ = writeln!(out, "warm_a\t{}\nwarm_b\t{}\nwarm_c\t{}\ntest\t{}", s.warm_a, s.warm_b, s.warm_c, s.test);
    let _ = writeln!(out, "discarded\t{}", s.discarded);
    let _ = writeln!(out, "phase_ratio\t1:{b:.3}:{c:.3}:{t:.3}");
    if let Some(w) = warnings {
        let _ = writeln!(out, "skipped_records\t{w}");
    }
    out
}
