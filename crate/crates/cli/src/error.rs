use std::fmt;

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Internal(_) => "internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Internal(m) => m,
        }
    }

    /// One line of JSON for stderr.
    pub fn to_json_line(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.message(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<emerge_core::Error> for CliError {
    fn from(e: emerge_core::Error) -> Self {
        use emerge_core::Error as E;
        match e {
            E::Io(_) | E::InvalidMatrix(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_is_single_line() {
        let e = CliError::Input("bad\nthing".into());
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"]["exit_code"], 2);
        assert_eq!(v["error"]["message"], "bad\nthing");
    }
}
