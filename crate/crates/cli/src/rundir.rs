use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use auxnet::kvconfig::KvConfig;
use auxnet::{Error, Result};

/// First 12 hex digits of the SHA-256 of the canonical config text.
pub fn config_hash(cfg: &KvConfig) -> String {
    let digest = Sha256::digest(cfg.to_text().as_bytes());
    hex::encode(digest)[..12].to_string()
}

/// Creates `<out>/<cmd>-<hash>-<unix seconds>` (suffixed on collision) and
/// writes the resolved config into it.
pub fn create(out: &Path, cmd: &str, cfg: &KvConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = format!("{cmd}-{}-{ts}", config_hash(cfg));
    let mut dir = out.join(&base);
    let mut n = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = out.join(format!("{base}-{n}"));
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    write(&dir.join("config.txt"), cfg.to_text())?;
    println!("run directory: {}", dir.display());
    Ok(dir)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
