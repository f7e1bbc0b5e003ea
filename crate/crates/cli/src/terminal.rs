//! Interactive gate prompts for copilot and semipilot runs without the service.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::Command;

use objevo_agents::gates::{ApprovalChannel, ApprovalGate, GateDecision, GateResolution, GateResolver};

use crate::style::Style;
use crate::view;

pub const RESOLVER: &str = "cli";

pub struct TerminalChannel {
    input: Box<dyn BufRead + Send>,
    output: Box<dyn Write + Send>,
    editor: Vec<String>,
    style: Style,
}

/// `$VISUAL`, then `$EDITOR`, then `vi`.
pub fn editor_command() -> Vec<String> {
    let raw = std::env::var("VISUAL")
        .ok()
        .filter(|v| !v.trim().is_empty())
        .or_else(|| std::env::var("EDITOR").ok().filter(|v| !v.trim().is_empty()))
        .unwrap_or_else(|| "vi".into());
    raw.split_whitespace().map(String::from).collect()
}

impl TerminalChannel {
    pub fn new(
        input: Box<dyn BufRead + Send>,
        output: Box<dyn Write + Send>,
        editor: Vec<String>,
        style: Style,
    ) -> Self {
        Self {
            input,
            output,
            editor,
            style,
        }
    }

    pub fn stdio(style: Style) -> Self {
        Self::new(
            Box::new(std::io::BufReader::new(std::io::stdin())),
            Box::new(std::io::stderr()),
            editor_command(),
            style,
        )
    }

    fn say(&mut self, msg: &str) {
        let _ = writeln!(self.output, "{msg}");
    }

    fn edit(&mut self, gate: &ApprovalGate) -> Result<String, String> {
        let path: PathBuf = std::env::temp_dir().join(format!("objevo-{}-{}.json", std::process::id(), gate.gate_id));
        std::fs::write(&path, view::editable(gate)).map_err(|e| e.to_string())?;
        let (prog, args) = self.editor.split_first().ok_or("no editor configured")?;
        let status = Command::new(prog).args(args).arg(&path).status();
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string());
        let _ = std::fs::remove_file(&path);
        match status {
            Ok(s) if s.success() => text,
            Ok(s) => Err(format!("editor exited with {s}")),
            Err(e) => Err(format!("could not start `{prog}`: {e}")),
        }
    }
}

impl ApprovalChannel for TerminalChannel {
    fn decide(&mut self, gate: &ApprovalGate, resolver: &GateResolver<'_>) -> GateDecision {
        let text = view::gate_text(gate, &self.style);
        self.say(&text);
        loop {
            let _ = write!(self.output, "accept [a], edit [e], park [p], abort [q]: ");
            let _ = self.output.flush();
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return GateDecision::Park,
                Ok(_) => {}
            }
            let res = match line.trim() {
                "a" | "accept" => GateResolution::accept(RESOLVER),
                "e" | "edit" => {
                    let revised = self.edit(gate).and_then(|t| view::parse_revision(gate.stage, &t, None));
                    match revised {
                        Ok(p) => GateResolution::revise(RESOLVER, p),
                        Err(e) => {
                            let msg = self.style.red(&format!("revision not applied: {e}"));
                            self.say(&msg);
                            continue;
                        }
                    }
                }
                "p" | "park" => return GateDecision::Park,
                "q" | "abort" => return GateDecision::Abort,
                _ => continue,
            };
            match resolver.resolve(&gate.gate_id, res) {
                Ok(_) => return GateDecision::Resolved,
                Err(e) => {
                    let msg = self.style.red(&e.to_string());
                    self.say(&msg);
                }
            }
        }
    }
}
