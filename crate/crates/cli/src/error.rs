use serde::Serialize;

/// Failure classes of the front end; each maps to one exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed arguments or configuration, rejected parameters.
    Config(String),
    /// The computation or the output writing failed.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            status: &'a str,
            kind: &'a str,
            message: &'a str,
        }
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Numerical(m) => ("numerical", m),
        };
        serde_json::to_string(&Report { status: "error", kind, message }).expect("error report serializes")
    }
}

impl From<resfluor::Error> for CliError {
    fn from(e: resfluor::Error) -> Self {
        use resfluor::Error as E;
        match e {
            E::InvalidDimension(_)
            | E::UnknownLabel(_)
            | E::DuplicateLabel(_)
            | E::InvalidParameter(_)
            | E::CascadeOverflow(_)
            | E::EmptyKeepSet => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
