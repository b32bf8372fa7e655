//! Bookkeeping for the acceptance target.

/// Result of one criterion: overall verdict plus one line per measurement.
pub struct Outcome {
    pub pass: bool,
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn new() -> Self {
        Outcome {
            pass: true,
            lines: Vec::new(),
        }
    }

    pub fn record(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    /// A line that does not affect the verdict.
    pub fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

impl Default for Outcome {
    fn default() -> Self {
        Self::new()
    }
}
