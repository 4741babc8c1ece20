//! Optional on-disk subgraph cache.
//!
//! A cache is an optimization only: extraction results served from it are
//! bit-identical to freshly computed ones, and lookups that miss fall back
//! to computing. Records are keyed by (head, relation, tail, directed-flag);
//! the hop count and node cap they were extracted under live in the file
//! header and must match at load time.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic      8 bytes "RPKGSUBC"
//! version    u32
//! hop        u32
//! max_nodes  u64
//! records    until EOF, each: record len u32, then the record body
//! ```
//!
//! Record body:
//!
//! ```text
//! head u64, relation u64, tail u64, directed_attempt u8, present u8
//! if present: directed u8, node count u32,
//!             per node: entity u64, d_head u32, d_tail u32,
//!             edge count u32, per edge: head u32, relation u64, tail u32,
//!             target: head u32, relation u64, tail u32
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{Graph, Triplet};
use crate::subgraph::{
    extract_directed, extract_undirected, ExtractError, ExtractOutcome, LocalEdge, Subgraph,
};

const MAGIC: &[u8; 8] = b"RPKGSUBC";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache format error: {0}")]
    Format(String),
    #[error("cache mismatch: built for hop={built_hop} max_nodes={built_cap}, need hop={hop} max_nodes={cap}")]
    Mismatch {
        built_hop: usize,
        built_cap: usize,
        hop: usize,
        cap: usize,
    },
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// In-memory cache of extraction outcomes for one (hop, max_nodes) setting.
pub struct SubgraphCache {
    hop: usize,
    max_nodes: usize,
    directed: HashMap<Triplet, Option<Subgraph>>,
    undirected: HashMap<Triplet, Option<Subgraph>>,
}

impl SubgraphCache {
    pub fn empty(hop: usize, max_nodes: usize) -> Self {
        Self {
            hop,
            max_nodes,
            directed: HashMap::new(),
            undirected: HashMap::new(),
        }
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn max_nodes(&self) -> usize {
        self.max_nodes
    }

    pub fn len(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directed.is_empty() && self.undirected.is_empty()
    }

    /// Precomputes both extraction modes for the given candidates.
    /// Degenerate candidates (head == tail) are skipped.
    pub fn build(
        g: &Graph,
        candidates: &[Triplet],
        hop: usize,
        max_nodes: usize,
    ) -> Result<Self, ExtractError> {
        let mut cache = Self::empty(hop, max_nodes);
        for &t in candidates {
            if t.head == t.tail || cache.directed.contains_key(&t) {
                continue;
            }
            let dir = extract_directed(g, t, hop, max_nodes)?;
            if dir.is_none() {
                cache
                    .undirected
                    .insert(t, extract_undirected(g, t, hop, max_nodes)?);
            }
            cache.directed.insert(t, dir);
        }
        Ok(cache)
    }

    /// Directed extraction, served from the cache when possible.
    pub fn directed(&self, g: &Graph, t: Triplet) -> Result<Option<Subgraph>, ExtractError> {
        match self.directed.get(&t) {
            Some(hit) => Ok(hit.clone()),
            None => extract_directed(g, t, self.hop, self.max_nodes),
        }
    }

    /// Undirected extraction, served from the cache when possible.
    pub fn undirected(&self, g: &Graph, t: Triplet) -> Result<Option<Subgraph>, ExtractError> {
        match self.undirected.get(&t) {
            Some(hit) => Ok(hit.clone()),
            None => extract_undirected(g, t, self.hop, self.max_nodes),
        }
    }

    /// Directed-with-fallback pipeline through the cache.
    pub fn with_fallback(&self, g: &Graph, t: Triplet) -> Result<ExtractOutcome, ExtractError> {
        if let Some(sub) = self.directed(g, t)? {
            return Ok(ExtractOutcome::Directed(sub));
        }
        Ok(match self.undirected(g, t)? {
            Some(sub) => ExtractOutcome::Fallback(sub),
            None => ExtractOutcome::Empty,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.hop as u32).to_le_bytes())?;
        w.write_all(&(self.max_nodes as u64).to_le_bytes())?;

        // Deterministic record order.
        let mut entries: Vec<(Triplet, bool, &Option<Subgraph>)> = self
            .directed
            .iter()
            .map(|(t, s)| (*t, true, s))
            .chain(self.undirected.iter().map(|(t, s)| (*t, false, s)))
            .collect();
        entries.sort_by_key(|(t, d, _)| (*t, *d));

        for (t, directed_attempt, sub) in entries {
            let body = encode_record(t, directed_attempt, sub.as_ref());
            w.write_all(&(body.len() as u32).to_le_bytes())?;
            w.write_all(&body)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a cache, rejecting files built under a different hop count or
    /// node cap.
    pub fn load(path: &Path, hop: usize, max_nodes: usize) -> Result<Self, CacheError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CacheError::Format("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(CacheError::Format(format!("unsupported version {version}")));
        }
        let built_hop = read_u32(&mut r)? as usize;
        let built_cap = read_u64(&mut r)? as usize;
        if built_hop != hop || built_cap != max_nodes {
            return Err(CacheError::Mismatch {
                built_hop,
                built_cap,
                hop,
                cap: max_nodes,
            });
        }
        let mut cache = Self::empty(hop, max_nodes);
        loop {
            let mut len_buf = [0u8; 4];
            match r.read_exact(&mut len_buf) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let len = u32::from_le_bytes(len_buf) as usize;
            let mut body = vec![0u8; len];
            r.read_exact(&mut body)?;
            let (t, directed_attempt, sub) = decode_record(&body)?;
            if directed_attempt {
                cache.directed.insert(t, sub);
            } else {
                cache.undirected.insert(t, sub);
            }
        }
        Ok(cache)
    }
}

fn encode_record(t: Triplet, directed_attempt: bool, sub: Option<&Subgraph>) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend((t.head as u64).to_le_bytes());
    b.extend((t.relation as u64).to_le_bytes());
    b.extend((t.tail as u64).to_le_bytes());
    b.push(directed_attempt as u8);
    b.push(sub.is_some() as u8);
    if let Some(s) = sub {
        b.push(s.directed as u8);
        b.extend((s.num_nodes() as u32).to_le_bytes());
        for (i, &n) in s.nodes.iter().enumerate() {
            b.extend((n as u64).to_le_bytes());
            b.extend(s.node_labels[i].0.to_le_bytes());
            b.extend(s.node_labels[i].1.to_le_bytes());
        }
        b.extend((s.num_edges() as u32).to_le_bytes());
        for e in &s.edges {
            b.extend((e.head as u32).to_le_bytes());
            b.extend((e.relation as u64).to_le_bytes());
            b.extend((e.tail as u32).to_le_bytes());
        }
        b.extend((s.target.head as u32).to_le_bytes());
        b.extend((s.target.relation as u64).to_le_bytes());
        b.extend((s.target.tail as u32).to_le_bytes());
    }
    b
}

fn decode_record(body: &[u8]) -> Result<(Triplet, bool, Option<Subgraph>), CacheError> {
    let mut cursor = Cursor { body, at: 0 };
    let head = cursor.u64()? as usize;
    let relation = cursor.u64()? as usize;
    let tail = cursor.u64()? as usize;
    let directed_attempt = cursor.u8()? != 0;
    let present = cursor.u8()? != 0;
    let t = Triplet::new(head, relation, tail);
    if !present {
        return Ok((t, directed_attempt, None));
    }
    let directed = cursor.u8()? != 0;
    let n = cursor.u32()? as usize;
    let mut nodes = Vec::with_capacity(n);
    let mut node_labels = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(cursor.u64()? as usize);
        let dh = cursor.u32()?;
        let dt = cursor.u32()?;
        node_labels.push((dh, dt));
    }
    let m = cursor.u32()? as usize;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let head = cursor.u32()? as usize;
        let relation = cursor.u64()? as usize;
        let tail = cursor.u32()? as usize;
        edges.push(LocalEdge {
            head,
            relation,
            tail,
        });
    }
    let target = LocalEdge {
        head: cursor.u32()? as usize,
        relation: cursor.u64()? as usize,
        tail: cursor.u32()? as usize,
    };
    Ok((
        t,
        directed_attempt,
        Some(Subgraph {
            nodes,
            node_labels,
            edges,
            target,
            directed,
        }),
    ))
}

struct Cursor<'a> {
    body: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CacheError> {
        if self.at + n > self.body.len() {
            return Err(CacheError::Format("truncated record".into()));
        }
        let s = &self.body[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CacheError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, CacheError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CacheError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
