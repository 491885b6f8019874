//! Demo config copies in scratch directories and a runner for the binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use lcot_cli::RunManifest;

pub fn demo_source() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo")
}

pub fn demo_table() -> toml::Table {
    let raw = std::fs::read_to_string(demo_source().join("demo.toml")).unwrap();
    raw.parse().unwrap()
}

pub struct Demo {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Demo {
    pub fn work(&self) -> PathBuf {
        self.dir.path().join("work")
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest::load(&self.work()).unwrap()
    }

    pub fn rewrite(&self, edit: impl FnOnce(&mut toml::Table)) {
        let mut table: toml::Table = std::fs::read_to_string(&self.config).unwrap().parse().unwrap();
        edit(&mut table);
        std::fs::write(&self.config, toml::to_string(&table).unwrap()).unwrap();
    }

    pub fn pipeline(&self, extra: &[&str]) -> Output {
        let mut args = vec!["pipeline", "--config", self.config.to_str().unwrap()];
        args.extend_from_slice(extra);
        lcot(&args)
    }
}

/// Demo config and curriculum copied into a fresh directory, `edit` applied to the config.
pub fn demo(edit: impl FnOnce(&mut toml::Table)) -> Demo {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(demo_source().join("curriculum.json"), dir.path().join("curriculum.json")).unwrap();
    let mut table = demo_table();
    edit(&mut table);
    let config = dir.path().join("demo.toml");
    std::fs::write(&config, toml::to_string(&table).unwrap()).unwrap();
    Demo { dir, config }
}

pub fn lcot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcot"))
        .args(args)
        .stdin(Stdio::null())
        .output()
        .unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn backend_mut<'a>(table: &'a mut toml::Table, id: &str) -> &'a mut toml::Table {
    table["backends"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .map(|b| b.as_table_mut().unwrap())
        .find(|b| b["backend_id"].as_str() == Some(id))
        .unwrap()
}

/// Makes every call to `id` fail with a non-retriable provider status.
pub fn break_backend(table: &mut toml::Table, id: &str) {
    let script = backend_mut(table, id)["transport"]["script"].as_table_mut().unwrap();
    let rule: toml::Table = toml::from_str("pattern = \"\"\nfail = { status = 400 }").unwrap();
    script.insert("rules".into(), toml::Value::Array(vec![toml::Value::Table(rule)]));
}

pub fn section<'a>(table: &'a mut toml::Table, name: &str) -> &'a mut toml::Table {
    table[name].as_table_mut().unwrap()
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for e in std::fs::read_dir(&p).unwrap() {
                stack.push(e.unwrap().path());
            }
        } else if p.is_file() {
            let rel = p.strip_prefix(root).unwrap().display().to_string();
            out.insert(rel, std::fs::read(&p).unwrap());
        }
    }
    out
}

/// Relative paths whose bytes differ or exist on one side only.
pub fn differing(
    a: &std::collections::BTreeMap<String, Vec<u8>>,
    b: &std::collections::BTreeMap<String, Vec<u8>>,
) -> Vec<String> {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
