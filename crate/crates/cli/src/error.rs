use std::fmt::Display;

use music_vpr::adaptive::ControllerError;
use music_vpr::eval::EvalError;
use music_vpr::music::MusicError;
use music_vpr::sic::SicError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {field}: {message}")]
    Config { field: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Display) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn data(message: impl Display) -> Self {
        CliError::Data(message.to_string())
    }

    pub fn internal(message: impl Display) -> Self {
        CliError::Internal(message.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<SicError> for CliError {
    fn from(e: SicError) -> Self {
        match e {
            SicError::Provider(_) | SicError::Score(_) => CliError::data(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<MusicError> for CliError {
    fn from(e: MusicError) -> Self {
        match e {
            MusicError::Sic { technique, source } => match CliError::from(source) {
                CliError::Data(m) => CliError::Data(format!("{technique}: {m}")),
                other => other,
            },
            MusicError::ShapeMismatch(_) => CliError::data(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::InvalidConfig { field, message } => {
                let field = if field == "top_k" {
                    "sic.top_k".to_string()
                } else {
                    format!("adaptive.{field}")
                };
                CliError::Config { field, message }
            }
            ControllerError::Music(m) => m.into(),
            _ => CliError::internal(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadRange(_) => CliError::config("ground_truth", e),
            _ => CliError::data(e),
        }
    }
}
