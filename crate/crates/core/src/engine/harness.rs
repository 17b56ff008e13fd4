use std::collections::BTreeMap;

use crate::engine::runtime::RuntimeSpec;
use crate::model::{TestCase, TestType};

/// The program actually executed for one test, plus what it reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Harness {
    pub test_id: String,
    pub entry_source: String,
    pub stdin_payload: Option<String>,
    /// Extra files materialized next to the source before launch.
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Harness {
    pub fn plain(test_id: impl Into<String>, source: impl Into<String>, stdin: Option<String>) -> Self {
        Self { test_id: test_id.into(), entry_source: source.into(), stdin_payload: stdin, files: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("runtime {language} has no driver for {test_type} tests")]
    UnsupportedType { language: String, test_type: TestType },
    #[error("function_call test {0} needs an entry point")]
    MissingEntryPoint(String),
}

pub fn build_harness(
    code: &str,
    test: &TestCase,
    runtime: &RuntimeSpec,
    entry_point: Option<&str>,
) -> Result<Harness, HarnessError> {
    match test.test_type {
        TestType::StdinStdout => Ok(Harness::plain(&test.id, code, Some(test.input.clone()))),
        TestType::Assert => {
            let assertion = test.assert_code.as_deref().unwrap_or_default();
            let mut source = String::with_capacity(code.len() + assertion.len() + 2);
            source.push_str(code);
            if !source.ends_with('\n') {
                source.push('\n');
            }
            source.push_str(assertion);
            Ok(Harness::plain(&test.id, source, None))
        }
        TestType::FunctionCall => {
            let driver = runtime.function_call_driver.as_deref().ok_or_else(|| HarnessError::UnsupportedType {
                language: runtime.language_id.clone(),
                test_type: TestType::FunctionCall,
            })?;
            let entry = entry_point
                .filter(|e| !e.trim().is_empty())
                .ok_or_else(|| HarnessError::MissingEntryPoint(test.id.clone()))?;
            let args_literal = serde_json::to_string(&test.input).expect("string encodes");
            let driver = driver.replace("{entry}", entry.trim()).replace("{args_json}", &args_literal);
            Ok(Harness::plain(&test.id, format!("{code}\n{driver}"), None))
        }
    }
}
