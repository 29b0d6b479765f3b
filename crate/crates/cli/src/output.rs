//! Output directories: atomic writes, config echoes and digest manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaisi::corpus::sha256_hex;
use serde::Serialize;

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

/// Writes through a sibling temp file so an interrupted run never leaves half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    files: BTreeMap<String, String>,
}

fn walk(
    root: &Path,
    dir: &Path,
    skip: &dyn Fn(&str) -> bool,
    out: &mut BTreeMap<String, String>,
) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
        if skip(&rel) {
            continue;
        }
        if e.file_type()?.is_dir() {
            walk(root, &path, skip, out)?;
        } else {
            out.insert(rel, sha256_hex(&std::fs::read(&path)?));
        }
    }
    Ok(())
}

fn digests(dir: &Path, skip: &dyn Fn(&str) -> bool) -> std::io::Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    walk(dir, dir, skip, &mut files)?;
    Ok(files)
}

fn write_manifest(dir: &Path, stage: &str, files: BTreeMap<String, String>) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(&Manifest { stage, files }).expect("manifest serialises");
    text.push('\n');
    write_atomic(&dir.join(MANIFEST), text.as_bytes())
}

/// Echoes the config into a stage directory, digests everything in it, then
/// refreshes the run-wide manifest under `out`.
pub fn seal_stage(cfg: &RunConfig, dir: &Path, stage: &str) -> std::io::Result<()> {
    write_atomic(&dir.join(CONFIG_ECHO), cfg.echo().as_bytes())?;
    let files = digests(dir, &|rel| rel == MANIFEST || rel.ends_with(".tmp"))?;
    write_manifest(dir, stage, files)?;
    seal_run(cfg)
}

/// The run-wide manifest covers every stage under `out` except the rating cache.
pub fn seal_run(cfg: &RunConfig) -> std::io::Result<()> {
    let out = &cfg.out;
    let cache = cfg.cache_dir();
    let cache_rel = cache.strip_prefix(out).ok().map(|p| p.to_string_lossy().replace('\\', "/"));
    let files = digests(out, &|rel| {
        rel == MANIFEST || rel.ends_with(".tmp") || cache_rel.as_deref().is_some_and(|c| rel == c)
    })?;
    write_manifest(out, "run", files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_sorted_and_skips_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { out: dir.path().to_path_buf(), ..RunConfig::default() };
        let stage = cfg.stage_dir("index");
        write_atomic(&stage.join("b.csv"), b"b").unwrap();
        write_atomic(&stage.join("a.csv"), b"a").unwrap();
        write_atomic(&cfg.cache_dir().join("x.json"), b"{}").unwrap();
        seal_stage(&cfg, &stage, "index").unwrap();
        let run: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
        let keys: Vec<&String> = run["files"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["index/a.csv", "index/b.csv", "index/config.toml", "index/manifest.json"]);
        assert_eq!(run["files"]["index/a.csv"], sha256_hex(b"a"));
    }
}
