//! Parameter checkpoints.
//!
//! ```text
//! AVAEW-PARAMS v1\n
//! meta\t<key>\t<value>\n                      (zero or more)
//! param\t<name>\t<serving 0|1>\t<rows>x<cols>\n
//! <rows * cols little-endian f32>             (raw bytes, row-major)
//! ...
//! end\n
//! ```
//!
//! Serving parameters are what inference needs; training-only networks
//! (the discriminator) are stored with `serving = 0`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use avaew_core::ndcore::{ParamStore, Tensor};

use crate::{Error, Result};

pub const MAGIC: &str = "AVAEW-PARAMS v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub serving: bool,
    pub tensor: Tensor<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn add_store(&mut self, store: &ParamStore<f32>, serving: bool) {
        for (name, t) in store.iter() {
            self.entries.push(Entry {
                name: name.to_string(),
                serving,
                tensor: t.clone(),
            });
        }
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Overwrites every tensor of `store` with the checkpoint entry of the
    /// same name; missing names or shape changes are errors.
    pub fn restore(&self, store: &mut ParamStore<f32>) -> Result<()> {
        for i in 0..store.len() {
            let name = store.name(i).to_string();
            let e = self
                .get(&name)
                .ok_or_else(|| Error::Data(format!("checkpoint has no parameter `{name}`")))?;
            if e.tensor.shape() != store.get(i).shape() {
                return Err(Error::Data(format!(
                    "parameter `{name}` has shape {:?} in the checkpoint, model expects {:?}",
                    e.tensor.shape(),
                    store.get(i).shape()
                )));
            }
            *store.get_mut(i) = e.tensor.clone();
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "{MAGIC}").map_err(io)?;
        for (k, v) in &self.meta {
            writeln!(w, "meta\t{k}\t{v}").map_err(io)?;
        }
        for e in &self.entries {
            let (r, c) = (e.tensor.rows(), e.tensor.cols());
            writeln!(w, "param\t{}\t{}\t{r}x{c}", e.name, u8::from(e.serving)).map_err(io)?;
            for x in e.tensor.data() {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        writeln!(w, "end").map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut line = String::new();
        let mut lineno = 0;
        let mut next_line = |r: &mut BufReader<File>, line: &mut String| -> Result<usize> {
            line.clear();
            lineno += 1;
            r.read_line(line).map_err(io)?;
            if !line.ends_with('\n') {
                return Err(Error::format(path, lineno, "truncated checkpoint"));
            }
            line.pop();
            Ok(lineno)
        };
        let ln = next_line(&mut r, &mut line)?;
        if line != MAGIC {
            return Err(Error::format(path, ln, format!("not a checkpoint (expected `{MAGIC}`)")));
        }
        let mut out = Checkpoint::new();
        loop {
            let ln = next_line(&mut r, &mut line)?;
            if line == "end" {
                return Ok(out);
            }
            let parts: Vec<&str> = line.split('\t').collect();
            match parts.as_slice() {
                ["meta", k, v] => out.meta.push((k.to_string(), v.to_string())),
                ["param", name, serving, dims] => {
                    let shape = dims
                        .split_once('x')
                        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
                    let (Some((rows, cols)), Ok(s @ (0 | 1))) = (shape, serving.parse::<u8>()) else {
                        return Err(Error::format(path, ln, "bad param header"));
                    };
                    let name = name.to_string();
                    let mut bytes = vec![0u8; rows * cols * 4];
                    r.read_exact(&mut bytes).map_err(io)?;
                    let data = bytes
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect();
                    let tensor = Tensor::matrix(rows, cols, data).map_err(|e| Error::format(path, ln, e.to_string()))?;
                    out.entries.push(Entry {
                        name,
                        serving: s == 1,
                        tensor,
                    });
                }
                _ => return Err(Error::format(path, ln, format!("unexpected line `{line}`"))),
            }
        }
    }
}
