use std::io::IsTerminal;

/// ANSI styling, off when `NO_COLOR` is set or stdout is not a terminal.
#[derive(Debug, Clone, Copy)]
pub struct Style {
    pub color: bool,
}

impl Style {
    pub fn detect() -> Self {
        Self::from_env(std::env::var_os("NO_COLOR"), std::io::stdout().is_terminal())
    }

    /// Any non-empty `NO_COLOR` disables color.
    pub fn from_env(no_color: Option<std::ffi::OsString>, tty: bool) -> Self {
        let disabled = no_color.is_some_and(|v| !v.is_empty());
        Self {
            color: tty && !disabled,
        }
    }

    fn paint(&self, code: &str, s: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    }

    pub fn bold(&self, s: &str) -> String {
        self.paint("1", s)
    }

    pub fn green(&self, s: &str) -> String {
        self.paint("32", s)
    }

    pub fn yellow(&self, s: &str) -> String {
        self.paint("33", s)
    }

    pub fn red(&self, s: &str) -> String {
        self.paint("31", s)
    }

    pub fn dim(&self, s: &str) -> String {
        self.paint("2", s)
    }
}
