//! Prompt rendering for candidate rationale generation, rationalization
//! with the gold label, and multiple-choice diagnosis (chain-of-thought or
//! standard k-shot).
//!
//! Whitespace is part of the contract: prompt bytes feed the completion
//! cache digest, and golden files under `tests/golden/` pin every template.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::Diagnosis;
use crate::jsonl::{self, JsonlError};
use crate::llm::{CompletionRequest, Message};

pub const CANDIDATE_PREAMBLE: &str = "Generate detailed medical rationales for the diagnosis (\"Diagnosis:\") based on the patient description.\nThese rationales should be the crucial cue for the diagnosis. Pretend that you don't know the diagnosis (\"Diagnosis\").";

pub const RATIONALIZATION_PREAMBLE: &str = "Generate detailed medical rationales for the diagnosis (\"Diagnosis:\") based on the patient description.\nThese rationales should be the crucial cue for the diagnosis. Pretend that you don't know the diagnosis (\"Diagnosis:\")";

pub const DIAGNOSIS_PREAMBLE: &str = "You are a doctor. Generate medical rationale and diagnose the patient based on the information your colleague gave you.\nYou can utilize the medical rationale. Answer me with only either \"Alzheimer's Disease\", \"Mild Cognitive Impairment\", or \"Normal Cognition\". You should follow the style of the history.";

pub const QUESTION: &str = "What is the diagnosis of this patient?";
pub const CHOICES: &str = "(A) Alzheimer's Disease (B) Mild Cognitive Impairment (C) Normal Cognition";
pub const DESCRIPTION_CUE: &str = "Patient Description:";
pub const RATIONALE_CUE: &str = "Medical Rationale:";
pub const DIAGNOSIS_CUE: &str = "Diagnosis:";

const BLOCK_SEP: &str = "\n\n";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("patient description is empty")]
    EmptyDescription,
    #[error("this prompt needs at least one exemplar")]
    NoExemplars,
    #[error("{k} shots requested but only {available} exemplars are available")]
    NotEnoughExemplars { k: usize, available: usize },
    #[error("exemplar {0} has an empty rationale")]
    EmptyRationale(usize),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// A worked example shown to the model: description, rationale, label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub description: String,
    pub rationale: String,
    pub diagnosis: Diagnosis,
}

/// Reads an exemplar file (one `{description, rationale, diagnosis}` per line).
pub fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>, PromptError> {
    let exemplars: Vec<Exemplar> = jsonl::read(path)?;
    check_rationales(&exemplars)?;
    Ok(exemplars)
}

pub fn save_exemplars(path: &Path, exemplars: &[Exemplar]) -> Result<(), PromptError> {
    Ok(jsonl::write(path, exemplars)?)
}

/// The exemplar set shipped with the crate.
pub fn builtin_exemplars() -> Vec<Exemplar> {
    include_str!("../data/exemplars.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled exemplar file is valid"))
        .collect()
}

fn check_rationales(exemplars: &[Exemplar]) -> Result<(), PromptError> {
    match exemplars.iter().position(|e| e.rationale.trim().is_empty()) {
        Some(i) => Err(PromptError::EmptyRationale(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// One sample per request, no resampling.
    pub greedy: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.7, max_tokens: 2000, greedy: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    Candidate,
    Rationalize,
    DiagnoseCot,
    DiagnoseStandard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnoseMode {
    Cot,
    Standard,
}

impl DiagnoseMode {
    pub fn prompt_mode(self) -> PromptMode {
        match self {
            DiagnoseMode::Cot => PromptMode::DiagnoseCot,
            DiagnoseMode::Standard => PromptMode::DiagnoseStandard,
        }
    }
}

impl std::str::FromStr for DiagnoseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cot" => Ok(DiagnoseMode::Cot),
            "standard" => Ok(DiagnoseMode::Standard),
            other => Err(format!("unknown diagnosis mode {other:?} (expected cot or standard)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_preamble: String,
    pub body: String,
    pub decode: DecodeParams,
    pub mode: PromptMode,
    pub shots: usize,
    /// Positions in the exemplar list of the shots, in rendered order.
    pub exemplar_indices: Vec<usize>,
}

impl PromptBundle {
    /// Preamble and body as one text, the way a person would read it.
    pub fn render(&self) -> String {
        format!("{}{BLOCK_SEP}{}", self.system_preamble, self.body)
    }

    /// The block holding the target patient (from its heading, if any).
    pub fn target_block(&self) -> &str {
        let start = self.body.rfind(DESCRIPTION_CUE).unwrap_or(0);
        let heading = format!("Example {}\n", self.shots + 1);
        match self.body[..start].strip_suffix(heading.as_str()) {
            Some(before) => &self.body[before.len()..],
            None => &self.body[start..],
        }
    }

    pub fn with_decode(mut self, decode: DecodeParams) -> Self {
        self.decode = decode;
        self
    }

    /// System message carries the preamble, user message the body.
    pub fn to_request(&self, model_id: &str) -> CompletionRequest {
        CompletionRequest {
            model_id: model_id.to_string(),
            messages: vec![Message::system(&self.system_preamble), Message::user(&self.body)],
            temperature: self.decode.temperature,
            max_tokens: self.decode.max_tokens,
            greedy: self.decode.greedy,
        }
    }
}

fn nonempty(description: &str) -> Result<&str, PromptError> {
    let d = description.trim_end();
    if d.trim().is_empty() {
        Err(PromptError::EmptyDescription)
    } else {
        Ok(d)
    }
}

fn bundle(preamble: &str, blocks: Vec<String>, mode: PromptMode, indices: Vec<usize>) -> PromptBundle {
    PromptBundle {
        system_preamble: preamble.to_string(),
        body: blocks.join(BLOCK_SEP),
        decode: DecodeParams::default(),
        mode,
        shots: indices.len(),
        exemplar_indices: indices,
    }
}

/// Zero-shot prompt asking for a rationale for the known label.
pub fn build_candidate_prompt(description: &str, gold: Diagnosis) -> Result<PromptBundle, PromptError> {
    let description = nonempty(description)?;
    let block = format!(
        "{DESCRIPTION_CUE} {description}\n{DIAGNOSIS_CUE} {}\n{RATIONALE_CUE}",
        gold.full_name()
    );
    Ok(bundle(CANDIDATE_PREAMBLE, vec![block], PromptMode::Candidate, Vec::new()))
}

/// Few-shot rationalization: every exemplar becomes a numbered example,
/// followed by the target with its gold label and an open rationale cue.
pub fn build_rationalization_prompt(
    exemplars: &[Exemplar],
    description: &str,
    gold: Diagnosis,
) -> Result<PromptBundle, PromptError> {
    let description = nonempty(description)?;
    if exemplars.is_empty() {
        return Err(PromptError::NoExemplars);
    }
    check_rationales(exemplars)?;
    let mut blocks: Vec<String> = exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "Example {}\n{DESCRIPTION_CUE} {}\n{DIAGNOSIS_CUE} {}\n{RATIONALE_CUE}\n{}",
                i + 1,
                e.description.trim_end(),
                e.diagnosis.full_name(),
                e.rationale.trim()
            )
        })
        .collect();
    blocks.push(format!(
        "Example {}\n{DESCRIPTION_CUE} {description}\n{DIAGNOSIS_CUE} {}\n{RATIONALE_CUE}",
        exemplars.len() + 1,
        gold.full_name()
    ));
    Ok(bundle(
        RATIONALIZATION_PREAMBLE,
        blocks,
        PromptMode::Rationalize,
        (0..exemplars.len()).collect(),
    ))
}

/// Shot indices for the standard prompt: the first `k` exemplars, or for
/// `k >= 3` a round-robin over AD, MCI, NC taking each class's exemplars in
/// file order (topped up in file order if a class runs out).
pub fn select_standard_shots(exemplars: &[Exemplar], k: usize) -> Result<Vec<usize>, PromptError> {
    if k > exemplars.len() {
        return Err(PromptError::NotEnoughExemplars { k, available: exemplars.len() });
    }
    if k < 3 {
        return Ok((0..k).collect());
    }
    let mut queues: Vec<std::collections::VecDeque<usize>> = Diagnosis::ALL
        .iter()
        .map(|d| (0..exemplars.len()).filter(|&i| exemplars[i].diagnosis == *d).collect())
        .collect();
    let mut picked = Vec::with_capacity(k);
    'outer: while picked.len() < k {
        let mut progressed = false;
        for q in queues.iter_mut() {
            if picked.len() == k {
                break 'outer;
            }
            if let Some(i) = q.pop_front() {
                picked.push(i);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(picked)
}

/// Multiple-choice diagnosis prompt. `Cot` uses the first `k` exemplars and
/// shows their rationales; `Standard` shows only the answer line.
pub fn build_diagnosis_prompt(
    exemplars: &[Exemplar],
    description: &str,
    mode: DiagnoseMode,
    k: usize,
) -> Result<PromptBundle, PromptError> {
    let description = nonempty(description)?;
    let indices = match mode {
        DiagnoseMode::Cot => {
            if k > exemplars.len() {
                return Err(PromptError::NotEnoughExemplars { k, available: exemplars.len() });
            }
            check_rationales(&exemplars[..k])?;
            (0..k).collect::<Vec<_>>()
        }
        DiagnoseMode::Standard => select_standard_shots(exemplars, k)?,
    };
    let mut blocks: Vec<String> = indices
        .iter()
        .enumerate()
        .map(|(n, &i)| {
            let e = &exemplars[i];
            let answer = format!("{DIAGNOSIS_CUE} ({}) {}", e.diagnosis.letter(), e.diagnosis.full_name());
            let mut block = format!(
                "Example {}\n{DESCRIPTION_CUE} {}\n{QUESTION}\n{CHOICES}\n",
                n + 1,
                e.description.trim_end()
            );
            if mode == DiagnoseMode::Cot {
                block.push_str(&format!("{RATIONALE_CUE}\n{}\n", e.rationale.trim()));
            }
            block.push_str(&answer);
            block
        })
        .collect();
    let mut target = String::new();
    if !indices.is_empty() {
        target.push_str(&format!("Example {}\n", indices.len() + 1));
    }
    target.push_str(&format!("{DESCRIPTION_CUE} {description}\n{QUESTION}\n{CHOICES}"));
    if mode == DiagnoseMode::Cot {
        target.push('\n');
        target.push_str(RATIONALE_CUE);
    }
    blocks.push(target);
    Ok(bundle(DIAGNOSIS_PREAMBLE, blocks, mode.prompt_mode(), indices))
}
