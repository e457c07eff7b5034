use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use super::{Exchange, LlmError, PromptRequest, Provider, ProviderResponse, Purpose};

#[derive(Default)]
struct Script {
    queues: BTreeMap<Purpose, VecDeque<String>>,
    consumed: BTreeMap<Purpose, usize>,
    prompts: Vec<Exchange>,
}

/// Replays canned replies. A script directory holds `NN-<purpose>.txt`
/// files; each purpose's files are served in `NN` order.
pub struct ScriptedProvider {
    script: Mutex<Script>,
}

impl ScriptedProvider {
    pub fn from_entries(entries: Vec<(Purpose, String)>) -> Self {
        let mut script = Script::default();
        for (purpose, text) in entries {
            script.queues.entry(purpose).or_default().push_back(text);
        }
        ScriptedProvider { script: Mutex::new(script) }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let read_err = |e: std::io::Error| LlmError::Script(format!("{}: {e}", dir.display()));
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).map_err(read_err)? {
            let entry = entry.map_err(read_err)?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".txt") else { continue };
            let Some((number, purpose)) = stem.split_once('-') else { continue };
            let Ok(number) = number.parse::<u32>() else { continue };
            let purpose = Purpose::parse(purpose)
                .ok_or_else(|| LlmError::Script(format!("{name}: `{purpose}` is not a purpose")))?;
            files.push((number, name, purpose, entry.path()));
        }
        if files.is_empty() {
            return Err(LlmError::Script(format!("{}: no NN-<purpose>.txt files", dir.display())));
        }
        files.sort();
        let mut entries = Vec::new();
        for (_, _, purpose, path) in files {
            let text = fs::read_to_string(&path).map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
            entries.push((purpose, text));
        }
        Ok(Self::from_entries(entries))
    }

    /// Every prompt received so far, in arrival order.
    pub fn prompts(&self) -> Vec<Exchange> {
        self.script.lock().unwrap_or_else(|e| e.into_inner()).prompts.clone()
    }

    pub fn remaining(&self, purpose: Purpose) -> usize {
        let script = self.script.lock().unwrap_or_else(|e| e.into_inner());
        script.queues.get(&purpose).map_or(0, VecDeque::len)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &PromptRequest, prompt: &str) -> Result<ProviderResponse, LlmError> {
        let mut script = self.script.lock().unwrap_or_else(|e| e.into_inner());
        let purpose = request.purpose;
        let next = script.queues.get_mut(&purpose).and_then(VecDeque::pop_front);
        script.prompts.push(Exchange { purpose, prompt: prompt.to_string(), response: next.clone() });
        match next {
            Some(text) => {
                *script.consumed.entry(purpose).or_default() += 1;
                Ok(ProviderResponse::complete(text))
            }
            None => Err(LlmError::ScriptExhausted {
                purpose,
                consumed: script.consumed.get(&purpose).copied().unwrap_or(0),
            }),
        }
    }
}
