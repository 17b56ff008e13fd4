use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

const PLACEHOLDERS: [&str; 3] = ["{src}", "{bin}", "{workdir}"];

/// Manifest shipped with the crate: python3, C, C++ and POSIX sh.
pub const DEFAULT_MANIFEST: &str = include_str!("../../assets/runtimes.toml");

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("reading runtime manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing runtime manifest: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("runtime {language}: {reason}")]
    Invalid { language: String, reason: String },
}

/// How to build and run one guest language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSpec {
    pub language_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_command: Option<Vec<String>>,
    pub run_command: Vec<String>,
    pub file_name: String,
    pub version_probe: Vec<String>,
    /// Driver appended to the submission for `function_call` tests.
    /// Placeholders: `{entry}` and `{args_json}` (the argument array as a
    /// JSON string literal).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_call_driver: Option<String>,
    /// Substrings of stderr that identify an allocation failure.
    #[serde(default)]
    pub oom_markers: Vec<String>,
    /// Substrings of stderr that identify an uncaught crash, for runtimes
    /// whose crash exit code collides with a meaningful one.
    #[serde(default)]
    pub crash_markers: Vec<String>,
}

impl RuntimeSpec {
    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |reason: String| ManifestError::Invalid { language: self.language_id.clone(), reason };
        if self.language_id.is_empty() {
            return Err(invalid("empty language_id".into()));
        }
        if self.run_command.is_empty() {
            return Err(invalid("run_command is empty".into()));
        }
        if self.version_probe.is_empty() {
            return Err(invalid("version_probe is empty".into()));
        }
        if self.file_name.is_empty() || self.file_name.contains('/') {
            return Err(invalid(format!("bad file_name {:?}", self.file_name)));
        }
        let templates = self
            .compile_command
            .iter()
            .flatten()
            .chain(&self.run_command)
            .chain(&self.version_probe);
        for arg in templates {
            if let Some(p) = undeclared_placeholder(arg) {
                return Err(invalid(format!("undeclared placeholder {p} in {arg:?}")));
            }
        }
        Ok(())
    }

    pub fn is_compiled(&self) -> bool {
        self.compile_command.is_some()
    }

    /// Runs the version probe; true when it exits 0 within five seconds.
    pub fn probe(&self) -> bool {
        let Some((cmd, args)) = self.version_probe.split_first() else {
            return false;
        };
        let child = Command::new(cmd)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn();
        let Ok(mut child) = child else { return false };
        match wait_timeout::ChildExt::wait_timeout(&mut child, std::time::Duration::from_secs(5)) {
            Ok(Some(status)) => status.success(),
            _ => {
                let _ = child.kill();
                let _ = child.wait();
                false
            }
        }
    }
}

fn undeclared_placeholder(arg: &str) -> Option<String> {
    let mut rest = arg;
    while let Some(start) = rest.find('{') {
        let tail = &rest[start..];
        let end = tail.find('}')?;
        let token = &tail[..=end];
        if !PLACEHOLDERS.contains(&token) {
            return Some(token.to_string());
        }
        rest = &tail[end + 1..];
    }
    None
}

pub(crate) fn expand(template: &[String], src: &Path, bin: &Path, workdir: &Path) -> Vec<String> {
    template
        .iter()
        .map(|a| {
            a.replace("{src}", &src.to_string_lossy())
                .replace("{bin}", &bin.to_string_lossy())
                .replace("{workdir}", &workdir.to_string_lossy())
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default, rename = "runtime")]
    runtimes: Vec<RuntimeSpec>,
}

/// The set of guest runtimes a worker can execute.
#[derive(Debug, Clone, Default)]
pub struct RuntimeManifest {
    runtimes: BTreeMap<String, RuntimeSpec>,
}

impl RuntimeManifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let file: ManifestFile = toml::from_str(text)?;
        Self::from_specs(file.runtimes)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_MANIFEST).expect("bundled manifest is valid")
    }

    pub fn from_specs(specs: impl IntoIterator<Item = RuntimeSpec>) -> Result<Self, ManifestError> {
        let mut runtimes = BTreeMap::new();
        for spec in specs {
            spec.validate()?;
            let id = spec.language_id.clone();
            if runtimes.insert(id.clone(), spec).is_some() {
                return Err(ManifestError::Invalid { language: id, reason: "declared twice".into() });
            }
        }
        Ok(Self { runtimes })
    }

    pub fn get(&self, language_id: &str) -> Option<&RuntimeSpec> {
        self.runtimes.get(language_id)
    }

    pub fn languages(&self) -> Vec<String> {
        self.runtimes.keys().cloned().collect()
    }

    pub fn insert(&mut self, spec: RuntimeSpec) -> Result<(), ManifestError> {
        spec.validate()?;
        self.runtimes.insert(spec.language_id.clone(), spec);
        Ok(())
    }

    /// Languages whose version probe failed.
    pub fn failing_probes(&self) -> Vec<String> {
        self.runtimes
            .values()
            .filter(|r| !r.probe())
            .map(|r| r.language_id.clone())
            .collect()
    }
}
