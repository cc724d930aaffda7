//! Run bookkeeping: hashed inputs, the JSON manifest, and removal of partial
//! outputs when a command fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cordmetrics::io::{decode_volume, encode_volume, parse_gradient_table, Datatype, GradientScheme, MetricTable};
use cordmetrics::volume::Volume;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Reads input files once, remembering their SHA-256.
#[derive(Debug, Default)]
pub struct Inputs {
    hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.hashes.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    pub fn volume(&mut self, path: &Path) -> Result<Volume<f64>> {
        let bytes = self.read(path)?;
        decode_volume(&bytes).with_context(|| format!("decoding {}", path.display()))
    }

    pub fn mask(&mut self, path: &Path) -> Result<Volume<bool>> {
        Ok(self.volume(path)?.map(|v| v > 0.0))
    }

    pub fn table(&mut self, path: &Path) -> Result<MetricTable> {
        let bytes = self.read(path)?;
        MetricTable::from_csv_reader(&bytes[..]).with_context(|| format!("parsing {}", path.display()))
    }

    /// Concatenation of several tables; overlapping rows are an error.
    pub fn tables(&mut self, paths: &[PathBuf]) -> Result<MetricTable> {
        let mut all = MetricTable::new();
        for p in paths {
            let t = self.table(p)?;
            all.extend(&t).with_context(|| format!("merging {}", p.display()))?;
        }
        Ok(all)
    }

    pub fn scheme(&mut self, bval: &Path, bvec: &Path) -> Result<GradientScheme<f64>> {
        let bval_text = String::from_utf8(self.read(bval)?).context("bval is not UTF-8")?;
        let bvec_text = String::from_utf8(self.read(bvec)?).context("bvec is not UTF-8")?;
        parse_gradient_table(&bval_text, &bvec_text).context("parsing gradient table")
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    args: serde_json::Value,
    input_sha256: &'a BTreeMap<String, String>,
    seed: Option<u64>,
}

/// Files and directories created by the current command. Unless
/// [`Outputs::finish`] runs, everything recorded is removed on drop.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    /// Creates `dir` and any missing ancestors, recording the new ones.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        for d in missing.into_iter().rev() {
            fs::create_dir(&d).with_context(|| format!("creating {}", d.display()))?;
            self.dirs.push(d);
        }
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        if let Some(parent) = path.parent() {
            self.dir(parent)?;
        }
        self.files.push(path.to_path_buf());
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn volume(&mut self, path: &Path, volume: &Volume<f64>, datatype: Datatype) -> Result<()> {
        let bytes = encode_volume(volume, datatype).with_context(|| format!("encoding {}", path.display()))?;
        self.write(path, bytes)
    }

    /// Writes the manifest and keeps every output.
    pub fn finish(
        mut self,
        manifest: &Path,
        command: &str,
        args: &impl Serialize,
        inputs: &Inputs,
        seed: Option<u64>,
    ) -> Result<()> {
        let m = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            args: serde_json::to_value(args)?,
            input_sha256: &inputs.hashes,
            seed,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        self.write(manifest, text)?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}

/// Manifest path for a single-file output: `<out>.manifest.json`.
pub fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unfinished_outputs_are_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let nested = tmp.path().join("a/b");
        {
            let mut out = Outputs::default();
            out.write(&nested.join("x.txt"), "x").unwrap();
            out.write(&tmp.path().join("y.txt"), "y").unwrap();
            assert!(nested.join("x.txt").exists());
        }
        assert!(!tmp.path().join("a").exists());
        assert!(!tmp.path().join("y.txt").exists());
        assert!(tmp.path().exists());
    }

    #[test]
    fn finished_outputs_stay() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.write(&tmp.path().join("t.csv"), "a").unwrap();
        out.finish(&manifest_beside(&tmp.path().join("t.csv")), "x", &serde_json::json!({}), &Inputs::default(), None).unwrap();
        assert!(tmp.path().join("t.csv").exists());
        let m: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("t.csv.manifest.json")).unwrap()).unwrap();
        let keys: Vec<&String> = m.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["args", "command", "input_sha256", "seed", "version"]);
    }

    #[test]
    fn hashes_inputs() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("in.txt");
        fs::write(&p, "abc").unwrap();
        let mut inputs = Inputs::default();
        inputs.read(&p).unwrap();
        assert_eq!(
            inputs.hashes[&p.display().to_string()],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
