//! Bag file format, version 1. All integers little-endian.
//!
//! ```text
//! header:
//!   magic        4 bytes  "NBAG"
//!   version      u16      1
//!   session_id   u16 length, then UTF-8 bytes
//!   epoch_ns     i64      wall-clock epoch of logical time 0 (informational)
//!   topic_count  u16
//!   per topic:   u16 id, u8 name length, name, u8 schema length, schema tag
//! records, in timestamp order:
//!   length       u32      byte count of everything after this field
//!   topic        u16
//!   seq          u64
//!   timestamp_ns i64
//!   payload      length - 18 bytes
//! index (last record, topic 0xFFFF):
//!   seq = number of data records, timestamp_ns = last data timestamp or 0,
//!   payload = u16 entry count, then per topic with records: u16 id, u64 count
//! ```
//!
//! A reader rejects trailing bytes, truncation, records on topics missing
//! from the header, and an index that disagrees with the body.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{BusError, Envelope, Result, Topic};

pub const BAG_MAGIC: &[u8; 4] = b"NBAG";
pub const BAG_VERSION: u16 = 1;
pub const INDEX_TOPIC_ID: u16 = 0xFFFF;
const RECORD_FIXED: usize = 2 + 8 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicCount {
    pub topic: Topic,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag {
    pub session_id: String,
    pub epoch_ns: i64,
    pub topics: Vec<Topic>,
    pub records: Vec<Envelope>,
}

fn corrupt(msg: impl Into<String>) -> BusError {
    BusError::CorruptBag(msg.into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt(format!("truncated {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn i64(&mut self, what: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self, n: usize, what: &str) -> Result<String> {
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| corrupt(format!("{what} is not UTF-8")))
    }
}

impl Bag {
    pub fn new(session_id: &str, epoch_ns: i64, topics: Vec<Topic>, records: Vec<Envelope>) -> Self {
        Self { session_id: session_id.to_string(), epoch_ns, topics, records }
    }

    pub fn counts(&self) -> Vec<TopicCount> {
        let mut m: BTreeMap<Topic, u64> = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.topic).or_default() += 1;
        }
        m.into_iter().map(|(topic, count)| TopicCount { topic, count }).collect()
    }

    pub fn on(&self, topic: Topic) -> impl Iterator<Item = &Envelope> {
        self.records.iter().filter(move |r| r.topic == topic)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BAG_MAGIC);
        out.extend_from_slice(&BAG_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.session_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.session_id.as_bytes());
        out.extend_from_slice(&self.epoch_ns.to_le_bytes());
        out.extend_from_slice(&(self.topics.len() as u16).to_le_bytes());
        for t in &self.topics {
            out.extend_from_slice(&t.id().to_le_bytes());
            out.push(t.name().len() as u8);
            out.extend_from_slice(t.name().as_bytes());
            out.push(t.schema_tag().len() as u8);
            out.extend_from_slice(t.schema_tag().as_bytes());
        }
        let push_record = |out: &mut Vec<u8>, topic: u16, seq: u64, ts: i64, payload: &[u8]| {
            out.extend_from_slice(&((RECORD_FIXED + payload.len()) as u32).to_le_bytes());
            out.extend_from_slice(&topic.to_le_bytes());
            out.extend_from_slice(&seq.to_le_bytes());
            out.extend_from_slice(&ts.to_le_bytes());
            out.extend_from_slice(payload);
        };
        for r in &self.records {
            push_record(&mut out, r.topic.id(), r.seq, r.timestamp_ns, &r.payload);
        }
        let counts = self.counts();
        let mut idx = (counts.len() as u16).to_le_bytes().to_vec();
        for c in &counts {
            idx.extend_from_slice(&c.topic.id().to_le_bytes());
            idx.extend_from_slice(&c.count.to_le_bytes());
        }
        let last_ts = self.records.last().map_or(0, |r| r.timestamp_ns);
        push_record(&mut out, INDEX_TOPIC_ID, self.records.len() as u64, last_ts, &idx);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4, "magic")? != BAG_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = c.u16("version")?;
        if version != BAG_VERSION {
            return Err(BusError::VersionMismatch { found: version, expected: BAG_VERSION });
        }
        let n = c.u16("session id length")? as usize;
        let session_id = c.string(n, "session id")?;
        let epoch_ns = c.i64("epoch")?;
        let tc = c.u16("topic count")?;
        let mut topics = Vec::new();
        for _ in 0..tc {
            let id = c.u16("topic id")?;
            let n = c.u8("topic name length")? as usize;
            let name = c.string(n, "topic name")?;
            let n = c.u8("schema length")? as usize;
            let _schema = c.string(n, "schema tag")?;
            let t = Topic::from_id(id).filter(|t| t.name() == name).ok_or_else(|| corrupt(format!("unknown topic {id} '{name}'")))?;
            topics.push(t);
        }
        let mut records = Vec::new();
        let mut index: Option<(u64, Vec<TopicCount>)> = None;
        while c.pos < buf.len() {
            if index.is_some() {
                return Err(corrupt("data after index"));
            }
            let len = c.u32("record length")? as usize;
            if len < RECORD_FIXED {
                return Err(corrupt(format!("record length {len} too short")));
            }
            let body = c.take(len, "record")?;
            let mut r = Cursor { buf: body, pos: 0 };
            let topic_id = r.u16("topic")?;
            let seq = r.u64("seq")?;
            let ts = r.i64("timestamp")?;
            let payload = body[RECORD_FIXED..].to_vec();
            if topic_id == INDEX_TOPIC_ID {
                let mut p = Cursor { buf: &payload, pos: 0 };
                let n = p.u16("index count")?;
                let mut counts = Vec::new();
                for _ in 0..n {
                    let id = p.u16("index topic")?;
                    let topic = Topic::from_id(id).ok_or_else(|| corrupt(format!("index names unknown topic {id}")))?;
                    counts.push(TopicCount { topic, count: p.u64("index count")? });
                }
                if p.pos != payload.len() {
                    return Err(corrupt("index has trailing bytes"));
                }
                index = Some((seq, counts));
                continue;
            }
            let topic = Topic::from_id(topic_id)
                .filter(|t| topics.contains(t))
                .ok_or_else(|| corrupt(format!("record on undeclared topic {topic_id}")))?;
            if records.last().is_some_and(|p: &Envelope| p.timestamp_ns > ts) {
                return Err(corrupt("records out of timestamp order"));
            }
            records.push(Envelope { topic, seq, timestamp_ns: ts, payload });
        }
        let (n, counts) = index.ok_or_else(|| corrupt("missing index"))?;
        let bag = Bag { session_id, epoch_ns, topics, records };
        if n != bag.records.len() as u64 || counts != bag.counts() {
            return Err(corrupt("index disagrees with body"));
        }
        Ok(bag)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| BusError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(&self.to_bytes()).map_err(|e| BusError::SinkFull(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| BusError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&buf)
    }

    /// One human-readable line per record, for `bagdump`.
    pub fn dump_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("# session {} epoch_ns {} records {}", self.session_id, self.epoch_ns, self.records.len())];
        for c in self.counts() {
            lines.push(format!("# topic {} ({}) count {}", c.topic, c.topic.schema_tag(), c.count));
        }
        for r in &self.records {
            let body = String::from_utf8_lossy(&r.payload);
            lines.push(format!("{} {} #{} {}", r.timestamp_ns, r.topic, r.seq, body));
        }
        lines
    }
}
