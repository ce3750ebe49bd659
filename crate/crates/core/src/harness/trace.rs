//! Time-indexed simulation records and their CSV form.
//!
//! Columns: `t`, then per DG `dg{i}.v, dg{i}.w, dg{i}.P, dg{i}.Q, dg{i}.Vn, dg{i}.wn`,
//! then per channel `ch.{src}->{dst}.{sig}.clean, ch.{src}->{dst}.{sig}.recv`,
//! then `load{k}.I`, then `attack_active`. Reals are written with 17
//! significant digits so a parse reproduces every value bit for bit.

use std::io::{Read, Write};

use thiserror::Error;

use crate::attack::{ChannelId, Signal, Source};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header column {index} `{name}`: {reason}")]
    Header { index: usize, name: String, reason: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("trace has no column `{0}`")]
    MissingSignal(String),
}

const DG_FIELDS: [&str; 6] = ["v", "w", "P", "Q", "Vn", "wn"];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLayout {
    pub dg_count: usize,
    pub channels: Vec<ChannelId>,
    pub load_count: usize,
}

impl TraceLayout {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for i in 1..=self.dg_count {
            h.extend(DG_FIELDS.iter().map(|f| format!("dg{i}.{f}")));
        }
        for c in &self.channels {
            h.push(format!("ch.{c}.clean"));
            h.push(format!("ch.{c}.recv"));
        }
        h.extend((1..=self.load_count).map(|k| format!("load{k}.I")));
        h.push("attack_active".into());
        h
    }

    pub fn channel_index(&self, id: &ChannelId) -> Option<usize> {
        self.channels.iter().position(|c| c == id)
    }

    fn parse_header(names: &[String]) -> Result<Self, TraceError> {
        let bad = |index: usize, reason: &str| TraceError::Header {
            index,
            name: names.get(index).cloned().unwrap_or_default(),
            reason: reason.into(),
        };
        if names.first().map(String::as_str) != Some("t") {
            return Err(bad(0, "first column must be `t`"));
        }
        let mut k = 1;
        let mut dg_count = 0;
        while names.get(k).is_some_and(|n| n.starts_with("dg")) {
            for f in DG_FIELDS {
                if names.get(k).map(String::as_str) != Some(format!("dg{}.{f}", dg_count + 1).as_str()) {
                    return Err(bad(k, &format!("expected dg{}.{f}", dg_count + 1)));
                }
                k += 1;
            }
            dg_count += 1;
        }
        let mut channels = Vec::new();
        while let Some(rest) = names.get(k).and_then(|n| n.strip_prefix("ch.")) {
            let base = rest.strip_suffix(".clean").ok_or_else(|| bad(k, "expected .clean column"))?;
            let id = parse_channel(base).ok_or_else(|| bad(k, "malformed channel name"))?;
            if names.get(k + 1).map(String::as_str) != Some(format!("ch.{base}.recv").as_str()) {
                return Err(bad(k + 1, "expected matching .recv column"));
            }
            channels.push(id);
            k += 2;
        }
        let mut load_count = 0;
        while names.get(k).map(String::as_str) == Some(format!("load{}.I", load_count + 1).as_str()) {
            load_count += 1;
            k += 1;
        }
        if names.get(k).map(String::as_str) != Some("attack_active") || k + 1 != names.len() {
            return Err(bad(k, "expected final column `attack_active`"));
        }
        Ok(Self { dg_count, channels, load_count })
    }
}

fn parse_channel(s: &str) -> Option<ChannelId> {
    let (src, rest) = s.split_once("->")?;
    let (dst, sig) = rest.split_once('.')?;
    let dg = |x: &str| x.strip_prefix("dg")?.parse::<usize>().ok()?.checked_sub(1);
    let src = if src == "ref" { Source::Reference } else { Source::Dg(dg(src)?) };
    let signal = match sig {
        "voltage" => Signal::Voltage,
        "frequency" => Signal::Frequency,
        _ => return None,
    };
    Some(ChannelId { src, dst: dg(dst)?, signal })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub voltage: Vec<f64>,
    pub frequency: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v_nom: Vec<f64>,
    pub w_nom: Vec<f64>,
    pub clean: Vec<f64>,
    pub received: Vec<f64>,
    pub load_current: Vec<f64>,
    pub attack_active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub layout: TraceLayout,
    pub records: Vec<TraceRecord>,
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

impl Trace {
    pub fn new(layout: TraceLayout) -> Self {
        Self { layout, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn dg_voltage(&self, dg: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.voltage[dg]).collect()
    }

    /// Time of the first record flagged as under attack.
    pub fn attack_onset(&self) -> Option<f64> {
        self.records.iter().find(|r| r.attack_active).map(|r| r.t)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.layout.header())?;
        let mut row: Vec<String> = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(fmt_real(r.t));
            for i in 0..self.layout.dg_count {
                for v in [r.voltage[i], r.frequency[i], r.p[i], r.q[i], r.v_nom[i], r.w_nom[i]] {
                    row.push(fmt_real(v));
                }
            }
            for (c, v) in r.clean.iter().zip(&r.received) {
                row.push(fmt_real(*c));
                row.push(fmt_real(*v));
            }
            row.extend(r.load_current.iter().map(|v| fmt_real(*v)));
            row.push(if r.attack_active { "1" } else { "0" }.into());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TraceError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let names: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let layout = TraceLayout::parse_header(&names)?;
        let mut records = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let err = |reason: String| TraceError::Row { row: row + 1, reason };
            if rec.len() != names.len() {
                return Err(err(format!("{} fields, expected {}", rec.len(), names.len())));
            }
            let num = |k: usize| -> Result<f64, TraceError> {
                rec[k].trim().parse::<f64>().map_err(|e| err(format!("column `{}`: {e}", names[k])))
            };
            let n = layout.dg_count;
            let mut r = TraceRecord {
                t: num(0)?,
                voltage: Vec::with_capacity(n),
                frequency: Vec::with_capacity(n),
                p: Vec::with_capacity(n),
                q: Vec::with_capacity(n),
                v_nom: Vec::with_capacity(n),
                w_nom: Vec::with_capacity(n),
                clean: Vec::with_capacity(layout.channels.len()),
                received: Vec::with_capacity(layout.channels.len()),
                load_current: Vec::with_capacity(layout.load_count),
                attack_active: false,
            };
            let mut k = 1;
            for _ in 0..n {
                r.voltage.push(num(k)?);
                r.frequency.push(num(k + 1)?);
                r.p.push(num(k + 2)?);
                r.q.push(num(k + 3)?);
                r.v_nom.push(num(k + 4)?);
                r.w_nom.push(num(k + 5)?);
                k += 6;
            }
            for _ in &layout.channels {
                r.clean.push(num(k)?);
                r.received.push(num(k + 1)?);
                k += 2;
            }
            for _ in 0..layout.load_count {
                r.load_current.push(num(k)?);
                k += 1;
            }
            r.attack_active = match rec[k].trim() {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("attack_active must be 0 or 1, got `{other}`"))),
            };
            records.push(r);
        }
        Ok(Self { layout, records })
    }
}
