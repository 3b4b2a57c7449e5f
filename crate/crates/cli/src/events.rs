//! JSONL event stream: one line per finished epoch or evaluation, enough to
//! plot a run without repeating it.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use taskdisc::model::EpochLog;

use crate::Result;

#[derive(Debug, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event<'a> {
    Start {
        command: &'a str,
        config_hash: &'a str,
    },
    Epoch {
        run: &'a str,
        epoch: usize,
        loss: f64,
        score: f64,
        examples: usize,
    },
    Score {
        run: &'a str,
        part: &'a str,
        overall: f64,
        oov: Option<f64>,
        in_vocab: Option<f64>,
    },
    Done {
        command: &'a str,
    },
}

pub struct EventLog {
    out: BufWriter<File>,
}

impl EventLog {
    /// Opens `path` for appending, so successive commands share one stream.
    pub fn append(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: BufWriter::new(f) })
    }

    /// Starts a fresh stream at `path`.
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn emit(&mut self, e: &Event<'_>) -> Result<()> {
        serde_json::to_writer(&mut self.out, e)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn epoch(&mut self, run: &str, log: &EpochLog) -> Result<()> {
        log::info!("{run} epoch {} loss {:.4} score {:.4}", log.epoch, log.loss, log.score);
        self.emit(&Event::Epoch {
            run,
            epoch: log.epoch,
            loss: log.loss,
            score: log.score,
            examples: log.examples,
        })
    }
}
