//! Reporting for the acceptance suite in `tests/acceptance.rs`.

/// One acceptance criterion: a PASS/FAIL line plus indented details.
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    pub details: Vec<String>,
}

impl Criterion {
    pub fn new(id: u8, name: &'static str) -> Self {
        Criterion { id, name, pass: true, summary: String::new(), details: Vec::new() }
    }

    pub fn detail(&mut self, line: String) {
        self.details.push(line);
    }

    pub fn print(&self) {
        println!("{} {} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.summary);
        for d in &self.details {
            println!("       {d}");
        }
    }
}
