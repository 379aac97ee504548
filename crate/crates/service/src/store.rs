//! On-disk layout of a data directory.
//!
//! ```text
//! <dir>/log.jsonl            append-only entries, one per line
//! <dir>/episodes/<id>.json   episode documents, named by content digest
//! <dir>/episodes/order.txt   episode ids in the order they were produced
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mirror_core::episode::DecisionEpisode;

use crate::error::ServiceError;
use crate::log::{parse_log, LogEntry};

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

fn is_digest(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

fn append_line(path: &Path, line: &str) -> io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    file.write_all(b"\n")?;
    file.sync_data()
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("episodes"))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("log.jsonl")
    }

    pub fn read_log(&self) -> Result<Vec<LogEntry>, ServiceError> {
        match fs::read_to_string(self.log_path()) {
            Ok(text) => Ok(parse_log(&text)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn append(&self, entry: &LogEntry) -> io::Result<()> {
        append_line(&self.log_path(), &entry.to_line())
    }

    /// Store an episode under its digest. Writing the same episode twice is a no-op.
    pub fn put_episode(&self, episode: &DecisionEpisode) -> io::Result<bool> {
        let path = self.dir.join("episodes").join(format!("{}.json", episode.id));
        if path.exists() {
            return Ok(false);
        }
        let tmp = path.with_extension("json.tmp");
        let mut file = File::create(&tmp)?;
        file.write_all(episode.to_document().as_bytes())?;
        file.sync_data()?;
        fs::rename(tmp, path)?;
        append_line(&self.dir.join("episodes").join("order.txt"), &episode.id)?;
        Ok(true)
    }

    pub fn get_episode(&self, id: &str) -> Result<DecisionEpisode, ServiceError> {
        if !is_digest(id) {
            return Err(ServiceError::UnknownEpisode(id.to_string()));
        }
        let text = match fs::read_to_string(self.dir.join("episodes").join(format!("{id}.json"))) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ServiceError::UnknownEpisode(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("stored episode {id}: {e}")))
    }

    /// Episode ids, oldest first.
    pub fn episode_order(&self) -> io::Result<Vec<String>> {
        match fs::read_to_string(self.dir.join("episodes").join("order.txt")) {
            Ok(text) => Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }
}
