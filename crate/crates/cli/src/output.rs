//! Output files with a reproducibility header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, VERSION};
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Header {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Header {
            tool: "weakhom",
            version: VERSION,
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    /// `#`-prefixed comment lines placed above CSV data.
    pub fn comment_block(&self) -> String {
        format!(
            "# {} {}\n# command: {}\n# config_hash: {}\n# seed: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.command,
            self.config_hash,
            self.seed,
            serde_json::to_string(&self.config).expect("config serializes")
        )
    }
}

/// Reads the `config_hash` line of a header block.
pub fn read_config_hash(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config_hash: "))
}

pub fn out_path(config: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out)?;
    Ok(config.out.join(name))
}

pub fn write_json(path: &Path, header: &Header, body: Value) -> Result<(), CliError> {
    let mut doc = json!({ "header": header });
    if let (Some(d), Value::Object(b)) = (doc.as_object_mut(), body) {
        d.extend(b);
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Writes the header block followed by whatever `body` emits.
pub fn write_csv(
    path: &Path,
    header: &Header,
    body: impl FnOnce(&mut dyn Write) -> weakhom::Result<()>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header.comment_block().as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}
