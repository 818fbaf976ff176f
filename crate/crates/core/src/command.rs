//! Steering input: grammar lookup, token dispatch and multi-source
//! arbitration.
//!
//! Recognition itself happens elsewhere. This module receives the text a
//! recognizer (or a keypad or pedal) produced and turns it into controller
//! actions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Axis, Direction, MotionMode, MotionRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandToken {
    Left,
    Right,
    Up,
    Down,
    In,
    Out,
    Stop,
    StepMode,
    ContinuousMode,
    ManualOn,
    ManualOff,
    Reset,
}

impl CommandToken {
    pub const ALL: [CommandToken; 12] = [
        CommandToken::Left,
        CommandToken::Right,
        CommandToken::Up,
        CommandToken::Down,
        CommandToken::In,
        CommandToken::Out,
        CommandToken::Stop,
        CommandToken::StepMode,
        CommandToken::ContinuousMode,
        CommandToken::ManualOn,
        CommandToken::ManualOff,
        CommandToken::Reset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandToken::Left => "LEFT",
            CommandToken::Right => "RIGHT",
            CommandToken::Up => "UP",
            CommandToken::Down => "DOWN",
            CommandToken::In => "IN",
            CommandToken::Out => "OUT",
            CommandToken::Stop => "STOP",
            CommandToken::StepMode => "STEP_MODE",
            CommandToken::ContinuousMode => "CONTINUOUS_MODE",
            CommandToken::ManualOn => "MANUAL_ON",
            CommandToken::ManualOff => "MANUAL_OFF",
            CommandToken::Reset => "RESET",
        }
    }

    /// Tokens that start joint motion.
    pub fn is_motion(self) -> bool {
        matches!(
            self,
            CommandToken::Left
                | CommandToken::Right
                | CommandToken::Up
                | CommandToken::Down
                | CommandToken::In
                | CommandToken::Out
        )
    }
}

impl fmt::Display for CommandToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CommandToken::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InputSource {
    Voice,
    Keypad,
    Pedal,
}

impl InputSource {
    pub fn as_str(self) -> &'static str {
        match self {
            InputSource::Voice => "VOICE",
            InputSource::Keypad => "KEYPAD",
            InputSource::Pedal => "PEDAL",
        }
    }
}

impl FromStr for InputSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "VOICE" => Ok(InputSource::Voice),
            "KEYPAD" => Ok(InputSource::Keypad),
            "PEDAL" => Ok(InputSource::Pedal),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("line {line}: expected `phrase = TOKEN`")]
    Syntax { line: usize },
    #[error("line {line}: unknown token `{token}`")]
    UnknownToken { line: usize, token: String },
    #[error("line {line}: unknown setting `{key}`")]
    UnknownSetting { line: usize, key: String },
    #[error("line {line}: setting `{key}` expects true or false")]
    BadFlag { line: usize, key: String },
    #[error("phrase `{phrase}` maps to both {first} and {second}")]
    Ambiguous {
        phrase: String,
        first: CommandToken,
        second: CommandToken,
    },
    #[error("no phrase produces {0}")]
    Unreachable(CommandToken),
    #[error("empty phrase")]
    EmptyPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown phrase `{0}`")]
pub struct UnknownPhrase(pub String);

/// Phrase-to-token vocabulary.
///
/// Phrases are stored normalized. Construction fails if one phrase would map
/// to two tokens or if some token cannot be produced by any phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GrammarData", into = "GrammarData")]
pub struct GrammarConfig {
    phrases: BTreeMap<String, CommandToken>,
    case_insensitive: bool,
    locale: String,
    invert_tilt: bool,
}

#[derive(Serialize, Deserialize)]
struct GrammarData {
    locale: String,
    case_insensitive: bool,
    invert_tilt: bool,
    phrases: Vec<(String, CommandToken)>,
}

impl TryFrom<GrammarData> for GrammarConfig {
    type Error = GrammarError;

    fn try_from(d: GrammarData) -> Result<Self, Self::Error> {
        GrammarConfig::new(d.phrases, d.case_insensitive, d.locale, d.invert_tilt)
    }
}

impl From<GrammarConfig> for GrammarData {
    fn from(g: GrammarConfig) -> Self {
        GrammarData {
            locale: g.locale,
            case_insensitive: g.case_insensitive,
            invert_tilt: g.invert_tilt,
            phrases: g.phrases.into_iter().collect(),
        }
    }
}

/// Shipped English vocabulary, in file form.
pub const DEFAULT_GRAMMAR: &str = include_str!("../grammars/en.grammar");

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig::parse_file(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }
}

fn normalize(text: &str, case_insensitive: bool) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if case_insensitive {
        collapsed.to_lowercase()
    } else {
        collapsed
    }
}

fn parse_flag(value: &str, key: &str, line: usize) -> Result<bool, GrammarError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(GrammarError::BadFlag {
            line,
            key: key.to_string(),
        }),
    }
}

impl GrammarConfig {
    pub fn new(
        entries: impl IntoIterator<Item = (String, CommandToken)>,
        case_insensitive: bool,
        locale: impl Into<String>,
        invert_tilt: bool,
    ) -> Result<Self, GrammarError> {
        let mut phrases = BTreeMap::new();
        for (phrase, token) in entries {
            let key = normalize(&phrase, case_insensitive);
            if key.is_empty() {
                return Err(GrammarError::EmptyPhrase);
            }
            match phrases.insert(key.clone(), token) {
                Some(prev) if prev != token => {
                    return Err(GrammarError::Ambiguous {
                        phrase: key,
                        first: prev,
                        second: token,
                    })
                }
                _ => {}
            }
        }
        let covered: BTreeSet<_> = phrases.values().copied().collect();
        if let Some(missing) = CommandToken::ALL.into_iter().find(|t| !covered.contains(t)) {
            return Err(GrammarError::Unreachable(missing));
        }
        Ok(GrammarConfig {
            phrases,
            case_insensitive,
            locale: locale.into(),
            invert_tilt,
        })
    }

    /// Reads the flat `phrase = TOKEN` format. `#` starts a comment line and
    /// `@key = value` lines set `locale`, `case_insensitive` or `invert_tilt`.
    pub fn parse_file(text: &str) -> Result<Self, GrammarError> {
        let mut entries = Vec::new();
        let mut case_insensitive = true;
        let mut locale = String::from("en");
        let mut invert_tilt = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = trimmed
                .rsplit_once('=')
                .ok_or(GrammarError::Syntax { line })?;
            let (lhs, rhs) = (lhs.trim(), rhs.trim());
            if let Some(key) = lhs.strip_prefix('@') {
                match key.trim() {
                    "locale" => locale = rhs.to_string(),
                    "case_insensitive" => case_insensitive = parse_flag(rhs, key, line)?,
                    "invert_tilt" => invert_tilt = parse_flag(rhs, key, line)?,
                    other => {
                        return Err(GrammarError::UnknownSetting {
                            line,
                            key: other.to_string(),
                        })
                    }
                }
                continue;
            }
            if lhs.is_empty() {
                return Err(GrammarError::Syntax { line });
            }
            let token = rhs
                .parse()
                .map_err(|token| GrammarError::UnknownToken { line, token })?;
            entries.push((lhs.to_string(), token));
        }
        GrammarConfig::new(entries, case_insensitive, locale, invert_tilt)
    }

    /// Renders back to the file format.
    pub fn to_file(&self) -> String {
        let mut out = format!(
            "@locale = {}\n@case_insensitive = {}\n@invert_tilt = {}\n",
            self.locale, self.case_insensitive, self.invert_tilt
        );
        for (phrase, token) in &self.phrases {
            out.push_str(&format!("{phrase} = {token}\n"));
        }
        out
    }

    /// Exact lookup after trimming, whitespace collapsing and (optionally)
    /// case folding. Never guesses.
    pub fn parse(&self, line: &str) -> Result<CommandToken, UnknownPhrase> {
        self.phrases
            .get(&normalize(line, self.case_insensitive))
            .copied()
            .ok_or_else(|| UnknownPhrase(line.to_string()))
    }

    pub fn phrases(&self) -> impl Iterator<Item = (&str, CommandToken)> {
        self.phrases.iter().map(|(p, t)| (p.as_str(), *t))
    }

    /// First phrase (in sorted order) that produces `token`.
    pub fn phrase_for(&self, token: CommandToken) -> &str {
        self.phrases
            .iter()
            .find(|(_, t)| **t == token)
            .map(|(p, _)| p.as_str())
            .expect("every token has a phrase")
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn case_insensitive(&self) -> bool {
        self.case_insensitive
    }

    pub fn invert_tilt(&self) -> bool {
        self.invert_tilt
    }

    pub fn dispatch(&self, token: CommandToken, mode: MotionMode) -> Action {
        dispatch(token, mode, self.invert_tilt)
    }
}

/// What a token asks of the controller or session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Move(MotionRequest),
    Stop,
    SetMotionMode(MotionMode),
    Manual(bool),
    ResetFault,
}

/// Maps a token to its action. LEFT/RIGHT drive pan, UP/DOWN drive tilt
/// (UP toward vertical unless `invert_tilt`), IN/OUT drive insertion.
pub fn dispatch(token: CommandToken, mode: MotionMode, invert_tilt: bool) -> Action {
    use Direction::{Negative, Positive};
    let motion = |axis, direction| Action::Move(MotionRequest::new(axis, direction, mode));
    let (up, down) = if invert_tilt {
        (Positive, Negative)
    } else {
        (Negative, Positive)
    };
    match token {
        CommandToken::Left => motion(Axis::Pan, Negative),
        CommandToken::Right => motion(Axis::Pan, Positive),
        CommandToken::Up => motion(Axis::Tilt, up),
        CommandToken::Down => motion(Axis::Tilt, down),
        CommandToken::In => motion(Axis::Insertion, Positive),
        CommandToken::Out => motion(Axis::Insertion, Negative),
        CommandToken::Stop => Action::Stop,
        CommandToken::StepMode => Action::SetMotionMode(MotionMode::Step),
        CommandToken::ContinuousMode => Action::SetMotionMode(MotionMode::Continuous),
        CommandToken::ManualOn => Action::Manual(true),
        CommandToken::ManualOff => Action::Manual(false),
        CommandToken::Reset => Action::ResetFault,
    }
}

/// One parsed input with its arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputEvent {
    pub at_ms: u64,
    pub source: InputSource,
    pub token: CommandToken,
}

pub const DEFAULT_DEBOUNCE_MS: u64 = 150;

/// Merges the input sources into one token stream.
///
/// Events pass through in arrival order and are never reordered or
/// delayed, so a STOP is never queued behind motion. A motion token
/// identical to one emitted less than the debounce window earlier (from any
/// source) is dropped. STOP clears the debounce memory, so a motion
/// command repeated right after a STOP is honoured.
#[derive(Debug, Clone)]
pub struct Arbiter {
    window_ms: u64,
    last_emitted: BTreeMap<CommandToken, u64>,
}

impl Default for Arbiter {
    fn default() -> Self {
        Arbiter::new(DEFAULT_DEBOUNCE_MS)
    }
}

impl Arbiter {
    pub fn new(window_ms: u64) -> Self {
        Arbiter {
            window_ms,
            last_emitted: BTreeMap::new(),
        }
    }

    /// Feeds one event; returns the token if it passes.
    pub fn push(&mut self, event: InputEvent) -> Option<CommandToken> {
        let token = event.token;
        if token == CommandToken::Stop {
            self.last_emitted.clear();
            return Some(token);
        }
        if token.is_motion() {
            if let Some(&last) = self.last_emitted.get(&token) {
                if event.at_ms.saturating_sub(last) < self.window_ms {
                    return None;
                }
            }
            self.last_emitted.insert(token, event.at_ms);
        }
        Some(token)
    }
}

/// Batch form of [`Arbiter`] with the default window.
pub fn arbitrate(events: &[InputEvent]) -> Vec<CommandToken> {
    let mut arbiter = Arbiter::default();
    events.iter().filter_map(|e| arbiter.push(*e)).collect()
}
