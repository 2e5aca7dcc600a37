//! Edge-list parsing, normalization and shuffling.
//!
//! Input lines hold `u v t` or `u v weight t`, whitespace separated. Lines
//! starting with `%` or `#` and blank lines are skipped. The canonical
//! output is one `u v t` line per contact with a JSON sidecar describing
//! the graph.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Contact, ContactSet, GraphParams, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawRecord {
    pub u: i64,
    pub v: i64,
    pub t: i64,
}

fn field(tok: &str, line: usize, what: &str) -> Result<i64> {
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("{what} {tok:?} is not an integer") })
}

/// Parses an edge list. Line numbers in errors are 1-based.
pub fn parse(reader: impl BufRead) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let s = line.trim();
        if s.is_empty() || s.starts_with('%') || s.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        let t = match toks.len() {
            3 => toks[2],
            4 => {
                toks[2].parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("weight {:?} is not a number", toks[2]),
                })?;
                toks[3]
            }
            k => return Err(Error::Parse { line: lineno, msg: format!("expected 3 or 4 columns, found {k}") }),
        };
        out.push(RawRecord { u: field(toks[0], lineno, "vertex")?, v: field(toks[1], lineno, "vertex")?, t: field(t, lineno, "timestamp")? });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NormalizeOptions {
    pub undirected: bool,
    pub keep_duplicates: bool,
    pub keep_self_loops: bool,
}

/// A normalized contact list with its relabeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub params: GraphParams,
    /// In input order. Contains duplicates only if they were kept.
    pub contacts: Vec<Contact>,
    /// `labels[i]` is the original label of vertex `i`.
    pub labels: Vec<i64>,
}

impl Normalized {
    pub fn contact_set(&self) -> Result<ContactSet> {
        ContactSet::new(self.params, self.contacts.iter().copied())
    }
}

/// Relabels vertices densely in first-appearance order and shifts
/// timestamps so the smallest becomes 1. Self-loops are dropped; keeping
/// them is rejected because a self-loop is never part of a journey.
pub fn normalize(records: &[RawRecord], delta: u32, opts: NormalizeOptions) -> Result<Normalized> {
    if opts.keep_self_loops {
        return Err(Error::Unsupported("self-loop contacts cannot be stored".into()));
    }
    let usable: Vec<&RawRecord> = records.iter().filter(|r| r.u != r.v).collect();
    if usable.is_empty() {
        return Err(Error::NoUsableContacts);
    }
    let min_t = usable.iter().map(|r| r.t).min().expect("non-empty");
    let mut ids: HashMap<i64, u32> = HashMap::new();
    let mut labels = Vec::new();
    let mut id_of = |label: i64| {
        *ids.entry(label).or_insert_with(|| {
            labels.push(label);
            labels.len() as u32 - 1
        })
    };
    let mut contacts = Vec::with_capacity(usable.len() * (1 + opts.undirected as usize));
    let mut seen = BTreeSet::new();
    for r in usable {
        let shifted = i128::from(r.t) - i128::from(min_t) + 1;
        let t = Timestamp::try_from(shifted)
            .ok()
            .filter(|&t| t < u32::MAX)
            .ok_or_else(|| Error::InvalidParams(format!("timestamp span {shifted} does not fit in 32 bits")))?;
        let (u, v) = (id_of(r.u), id_of(r.v));
        let mut push = |c: Contact| {
            if opts.keep_duplicates || seen.insert(c) {
                contacts.push(c);
            }
        };
        push(Contact::new(u, v, t));
        if opts.undirected {
            push(Contact::new(v, u, t));
        }
    }
    let tau = contacts.iter().map(|c| c.t).max().expect("non-empty");
    let params = GraphParams::new(labels.len() as u32, tau, delta)?;
    Ok(Normalized { params, contacts, labels })
}

/// Seeded uniform permutation.
pub fn shuffle<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Metadata written next to a contact file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: u32,
    pub tau: u32,
    pub delta: u32,
    pub contact_count: usize,
    pub label_map_path: Option<String>,
}

impl Sidecar {
    pub fn params(&self) -> Result<GraphParams> {
        GraphParams::new(self.n, self.tau, self.delta)
    }
}

/// `graph.txt` -> `graph.json`.
pub fn sidecar_path(contacts: &Path) -> PathBuf {
    contacts.with_extension("json")
}

/// `graph.txt` -> `graph.labels.csv`.
pub fn labels_path(contacts: &Path) -> PathBuf {
    contacts.with_extension("labels.csv")
}

/// Writes `u v t` lines and the sidecar; also the label map if given.
pub fn write_contacts(path: &Path, params: GraphParams, contacts: &[Contact], labels: Option<&[i64]>) -> Result<Sidecar> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for c in contacts {
        writeln!(w, "{} {} {}", c.u, c.v, c.t)?;
    }
    w.flush()?;
    let label_map_path = match labels {
        Some(labels) => {
            let lp = labels_path(path);
            let mut csv = csv::Writer::from_path(&lp)?;
            csv.write_record(["id", "label"])?;
            for (i, l) in labels.iter().enumerate() {
                csv.write_record([i.to_string(), l.to_string()])?;
            }
            csv.flush()?;
            Some(lp.file_name().expect("file path").to_string_lossy().into_owned())
        }
        None => None,
    };
    let sc = Sidecar { n: params.n, tau: params.tau, delta: params.delta, contact_count: contacts.len(), label_map_path };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sc)? + "\n")?;
    Ok(sc)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => e.into(),
    })
}

pub fn read_sidecar(contacts: &Path) -> Result<Option<Sidecar>> {
    let sp = sidecar_path(contacts);
    if !sp.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_reader(open(&sp)?)?))
}

/// Reads a canonical contact file, in file order.
///
/// Parameters come from the sidecar when there is one, otherwise `n` is
/// one more than the largest vertex and `tau` the largest timestamp.
/// `delta` overrides the sidecar's latency; a conflict is an error.
pub fn read_contacts(path: &Path, delta: Option<u32>) -> Result<(GraphParams, Vec<Contact>)> {
    let records = parse(std::io::BufReader::new(open(path)?))?;
    let mut contacts = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let conv = |x: i64| {
            u32::try_from(x).map_err(|_| Error::Parse { line: i + 1, msg: format!("value {x} is not a normalized id or timestamp") })
        };
        contacts.push(Contact::new(conv(r.u)?, conv(r.v)?, conv(r.t)?));
    }
    let params = match read_sidecar(path)? {
        Some(sc) => {
            if let Some(d) = delta {
                if d != sc.delta {
                    return Err(Error::InvalidParams(format!("--delta {d} conflicts with sidecar delta {}", sc.delta)));
                }
            }
            sc.params()?
        }
        None => {
            if contacts.is_empty() {
                return Err(Error::NoUsableContacts);
            }
            let n = contacts.iter().map(|c| c.u.max(c.v)).max().expect("non-empty") + 1;
            let tau = contacts.iter().map(|c| c.t).max().expect("non-empty");
            GraphParams::new(n, tau, delta.unwrap_or(crate::types::DEFAULT_DELTA))?
        }
    };
    for c in &contacts {
        params.check_contact(c)?;
    }
    Ok((params, contacts))
}

/// Original labels from a label map written by [`write_contacts`].
pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            line: out.len() + 2,
            msg: "bad label row".into(),
        })?;
        out.push(label);
    }
    Ok(out)
}
