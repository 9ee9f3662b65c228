use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::hex;
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// File name only, so manifests do not depend on where a run lives.
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub version: String,
    pub settings: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: serde_json::Map<String, serde_json::Value>,
}

pub fn digest_file(path: &Path) -> io::Result<FileDigest> {
    let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut bytes = 0u64;
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        name: file_name(path),
        sha256: hex(&h.finalize()),
        bytes,
    })
}

pub fn digest_bytes(name: &str, data: &[u8]) -> FileDigest {
    FileDigest {
        name: name.to_owned(),
        sha256: hex(&Sha256::digest(data)),
        bytes: data.len() as u64,
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, data: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = temp_in(dir)?;
    tmp.write_all(data)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Temporary file that becomes a regular, world-readable output on persist.
pub fn temp_in(dir: &Path) -> io::Result<NamedTempFile> {
    let mut b = tempfile::Builder::new();
    b.prefix(".emerge-tmp");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        b.permissions(std::fs::Permissions::from_mode(0o644));
    }
    b.tempfile_in(dir)
}

/// Output files of one stage, committed together once the stage succeeded.
pub struct StageOutputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    extra: Vec<FileDigest>,
}

impl StageOutputs {
    pub fn new(dir: &Path) -> Self {
        StageOutputs {
            dir: dir.to_owned(),
            files: Vec::new(),
            extra: Vec::new(),
        }
    }

    /// `name` may contain a subdirectory.
    pub fn add(&mut self, name: impl Into<String>, data: impl Into<Vec<u8>>) {
        self.files.push((name.into(), data.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut data = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        data.push(b'\n');
        self.add(name, data);
        Ok(())
    }

    /// A file already written in place by the stage.
    pub fn add_existing(&mut self, digest: FileDigest) {
        self.extra.push(digest);
    }

    pub fn commit(self, mut manifest: Manifest) -> Result<(), CliError> {
        let mut outputs = self.extra;
        for (name, data) in &self.files {
            let path = self.dir.join(name);
            write_atomic(&path, data).map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
            outputs.push(digest_bytes(name, data));
        }
        outputs.sort_by(|a, b| a.name.cmp(&b.name));
        manifest.outputs = outputs;
        let mut data = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        data.push(b'\n');
        let path = self.dir.join(format!("manifest.{}.json", manifest.stage));
        write_atomic(&path, &data).map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))
    }
}

/// JSON artifact with the hash of the configuration that produced it.
#[derive(Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Deserialize)]
struct HashOnly {
    config_hash: String,
}

pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, expected_hash: &str, producer: &str) -> Result<T, CliError> {
    let path = dir.join(name);
    let data = std::fs::read(&path).map_err(|e| missing(&path, producer, e))?;
    let head: HashOnly =
        serde_json::from_slice(&data).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    check_hash(&path, &head.config_hash, expected_hash)?;
    let env: Envelope<T> =
        serde_json::from_slice(&data).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(env.body)
}

/// CSV artifacts open with `# config_hash=<hex>`.
pub fn csv_with_hash(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}

/// Data lines of a hashed CSV artifact, header row excluded.
pub fn read_csv(dir: &Path, name: &str, expected_hash: &str, producer: &str) -> Result<Vec<String>, CliError> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| missing(&path, producer, e))?;
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .ok_or_else(|| CliError::Input(format!("{}: missing config hash line", path.display())))?;
    check_hash(&path, hash, expected_hash)?;
    Ok(lines.skip(1).map(str::to_owned).collect())
}

fn missing(path: &Path, producer: &str, e: io::Error) -> CliError {
    if e.kind() == io::ErrorKind::NotFound {
        CliError::Input(format!("missing artifact {}; run `emerge {producer}` first", path.display()))
    } else {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

fn check_hash(path: &Path, found: &str, expected: &str) -> Result<(), CliError> {
    if found == expected {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "{} was produced with a different configuration ({} != {}); refusing to mix artifacts",
            path.display(),
            short(found),
            short(expected)
        )))
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn hash_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let env = Envelope {
            config_hash: "aaa".into(),
            body: serde_json::json!({ "x": 1 }),
        };
        std::fs::write(dir.path().join("a.json"), serde_json::to_vec(&env).unwrap()).unwrap();
        let ok: serde_json::Value = read_json(dir.path(), "a.json", "aaa", "build").unwrap();
        assert_eq!(ok["x"], 1);
        let err = read_json::<serde_json::Value>(dir.path(), "a.json", "bbb", "build").unwrap_err();
        assert!(matches!(err, CliError::Input(m) if m.contains("different configuration")));
    }

    #[test]
    fn digest_matches_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        std::fs::write(&p, b"abc").unwrap();
        let d = digest_file(&p).unwrap();
        assert_eq!(d, digest_bytes("f.bin", b"abc"));
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
