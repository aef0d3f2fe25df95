//! Output directory handling: data files first, manifest last as the commit
//! point, everything deterministic so reruns are byte-identical.

use std::path::{Path, PathBuf};

use mislearn::scenarios::Built;

/// 17 significant digits: round-trip exact for f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub struct OutputDir {
    dir: PathBuf,
    /// (name, content checksum) of every file written, in write order.
    written: Vec<(String, u64)>,
}

impl OutputDir {
    pub fn new(dir: &Path) -> Result<Self, String> {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<(), String> {
        std::fs::write(self.dir.join(name), content)
            .map_err(|e| format!("cannot write {name}: {e}"))?;
        self.written.push((name.to_string(), fnv1a(content.as_bytes())));
        Ok(())
    }

    /// Embeds the scenario spec so the directory is self-describing.
    pub fn write_scenario(&mut self, built: &Built<f64>) -> Result<(), String> {
        let text = match built {
            Built::Single(s) => s.to_spec().to_canonical_json(),
            Built::Game(g) => g.to_spec().to_canonical_json(),
        };
        self.write("scenario.json", &text)
    }

    /// Writes the run manifest last; its config checksum covers the config
    /// block and every data file, so a partial directory is detectable.
    pub fn finish_manifest(&mut self, config: serde_json::Value) -> Result<(), String> {
        let config_text = serde_json::to_string(&config).map_err(|e| e.to_string())?;
        let mut checksum = fnv1a(config_text.as_bytes());
        for (name, sum) in &self.written {
            checksum ^= fnv1a(name.as_bytes()).rotate_left(7) ^ sum;
        }
        let manifest = serde_json::json!({
            "config": config,
            "files": self.written.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_checksum": format!("{checksum:016x}"),
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
        text.push('\n');
        std::fs::write(self.dir.join("run-manifest.json"), text)
            .map_err(|e| format!("cannot write manifest: {e}"))?;
        Ok(())
    }
}
