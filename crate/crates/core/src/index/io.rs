//! On-disk index format.
//!
//! Little-endian, single file:
//!
//! ```text
//! magic "SIMANNIX" | version u32 | meta (u64 len + JSON)
//! n_terms u64 | terms (u32 len + UTF-8)* | df u32* | idf f64-bits*
//! offsets u64 * (n_terms + 1) | post_docs u32* | post_counts u32*
//! n_docs u64 | doc ids* | doc_norm f64-bits* | per doc: u32 n_labels + labels*
//! end marker "END."
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{rank_ids, IndexMeta, InvertedIndex};
use crate::corpus::LabelCode;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SIMANNIX";
pub const FORMAT_VERSION: u32 = 1;
const END: &[u8; 4] = b"END.";

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.out.write_all(b)
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.u64(v.to_bits())
    }
    fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

struct Reader<R: Read> {
    inp: R,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::IndexFormat(msg.into())
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inp
            .read_exact(&mut buf)
            .map_err(|e| corrupt(format!("truncated file: {e}")))?;
        Ok(buf)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self, limit: u64) -> Result<usize> {
        let n = self.u64()?;
        if n > limit {
            return Err(corrupt(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }
    fn blob(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inp
            .read_exact(&mut buf)
            .map_err(|e| corrupt(format!("truncated file: {e}")))?;
        Ok(buf)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.blob(n)?).map_err(|_| corrupt("string is not UTF-8"))
    }
}

const MAX_LEN: u64 = 1 << 40;

impl InvertedIndex {
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = Writer { out };
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        w.u64(meta.len() as u64)?;
        w.bytes(&meta)?;

        w.u64(self.terms.len() as u64)?;
        for t in &self.terms {
            w.str(t)?;
        }
        for &d in &self.df {
            w.u32(d)?;
        }
        for &v in &self.idf {
            w.f64(v)?;
        }
        for &o in &self.offsets {
            w.u64(o)?;
        }
        for &d in &self.post_docs {
            w.u32(d)?;
        }
        for &c in &self.post_counts {
            w.u32(c)?;
        }

        w.u64(self.doc_ids.len() as u64)?;
        for id in &self.doc_ids {
            w.str(id)?;
        }
        for &n in &self.doc_norm {
            w.f64(n)?;
        }
        for labels in &self.doc_labels {
            w.u32(labels.len() as u32)?;
            for l in labels {
                w.str(l.as_str())?;
            }
        }
        w.bytes(END)?;
        w.out.flush()
    }

    pub fn read_from<R: Read>(inp: R) -> Result<Self> {
        let mut r = Reader { inp };
        if &r.exact::<8>()? != MAGIC {
            return Err(corrupt("not an index file (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = r.len(1 << 24)?;
        let meta: IndexMeta = serde_json::from_slice(&r.blob(meta_len)?)
            .map_err(|e| corrupt(format!("bad metadata: {e}")))?;

        let n_terms = r.len(MAX_LEN)?;
        let terms = (0..n_terms).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let df = (0..n_terms).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let idf = (0..n_terms).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let offsets = (0..=n_terms).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(corrupt("posting offsets are not monotone"));
        }
        let n_post = offsets[n_terms] as usize;
        let post_docs = (0..n_post).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let post_counts = (0..n_post).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;

        let n_docs = r.len(MAX_LEN)?;
        let doc_ids = (0..n_docs).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let doc_norm = (0..n_docs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut doc_labels = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let n = r.u32()?;
            let labels = (0..n)
                .map(|_| r.str().and_then(LabelCode::new))
                .collect::<Result<Vec<_>>>()?;
            doc_labels.push(labels);
        }
        if &r.exact::<4>()? != END {
            return Err(corrupt("missing end marker"));
        }

        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(corrupt("vocabulary is not sorted"));
        }
        for t in 0..n_terms {
            let docs = &post_docs[offsets[t] as usize..offsets[t + 1] as usize];
            if docs.windows(2).any(|w| w[0] >= w[1]) || docs.iter().any(|&d| d as usize >= n_docs)
            {
                return Err(corrupt(format!("postings of term {:?} are malformed", terms[t])));
            }
        }
        let term_ids = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let mut ordinals = HashMap::with_capacity(n_docs);
        for (i, id) in doc_ids.iter().enumerate() {
            if ordinals.insert(id.clone(), i as u32).is_some() {
                return Err(corrupt(format!("duplicate document id {id}")));
            }
        }
        let doc_rank = rank_ids(&doc_ids);
        Ok(InvertedIndex {
            meta,
            terms,
            term_ids,
            df,
            idf,
            offsets,
            post_docs,
            post_counts,
            doc_ids,
            doc_norm,
            doc_labels,
            doc_rank,
            ordinals,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}
