//! Terminal review of proposed contracts: `a` approve, `r` reject,
//! `e` edit (creates a revision), `s` skip, `q` quit.

use std::io::{BufRead, Write};

use crate::error::Error;
use crate::pipeline::Reviewer;
use crate::registry::{Actor, ContractRecord, Decision};
use crate::store::Store;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReviewTally {
    pub approved: usize,
    pub rejected: usize,
    pub revised: usize,
    pub skipped: usize,
    pub quit: bool,
}

pub struct TerminalReviewer<R, W> {
    input: R,
    output: W,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Internal(format!("terminal: {e}"))
}

impl<R: BufRead, W: Write> TerminalReviewer<R, W> {
    pub fn new(input: R, output: W) -> Self {
        TerminalReviewer { input, output }
    }

    pub fn into_output(self) -> W {
        self.output
    }

    /// `None` on end of input.
    fn ask(&mut self, prompt: &str) -> Result<Option<String>, Error> {
        write!(self.output, "{prompt}").map_err(io_err)?;
        self.output.flush().map_err(io_err)?;
        let mut line = String::new();
        if self.input.read_line(&mut line).map_err(io_err)? == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim_end_matches(['\n', '\r']).to_string()))
    }

    fn show(&mut self, record: &ContractRecord, task_title: &str) -> Result<(), Error> {
        let c = &record.clause;
        writeln!(self.output, "\n[{}] {} ({})", record.contract_id, task_title, record.status).map_err(io_err)?;
        writeln!(self.output, "  {} {}: {}", c.kind, c.element, c.normalized_text()).map_err(io_err)?;
        if let Some(original) = &record.original_text {
            writeln!(self.output, "  rewritten from: {original}").map_err(io_err)?;
        }
        Ok(())
    }

    /// One pass over everything pending (for one task, or all).
    pub fn review_pending(&mut self, store: &Store, task_id: Option<&str>) -> Result<ReviewTally, Error> {
        let mut tally = ReviewTally::default();
        let mut skipped: Vec<String> = Vec::new();
        loop {
            let next = store.read(|p| {
                p.pending_review(task_id).into_iter().find(|c| !skipped.contains(&c.contract_id)).map(|c| {
                    let title = p.task(&c.task_id).map(|t| t.title.clone()).unwrap_or_default();
                    (c.clone(), title)
                })
            });
            let Some((record, title)) = next else { return Ok(tally) };
            self.show(&record, &title)?;
            let Some(answer) = self.ask("  [a]pprove [r]eject [e]dit [s]kip [q]uit > ")? else {
                tally.quit = true;
                return Ok(tally);
            };
            match answer.trim() {
                "a" => {
                    store.write(|p| p.review(&record.contract_id, Decision::Approve, None, Actor::Human).map_err(Error::from))?;
                    tally.approved += 1;
                }
                "r" => {
                    let note = self.ask("  note (optional) > ")?.filter(|n| !n.trim().is_empty());
                    store.write(|p| p.review(&record.contract_id, Decision::Reject, note, Actor::Human).map_err(Error::from))?;
                    tally.rejected += 1;
                }
                "e" => {
                    let Some(text) = self.ask("  new expression > ")? else { continue };
                    match store.write(|p| p.revise(&record.contract_id, &text, None).map_err(Error::from)) {
                        Ok(revised) => {
                            writeln!(self.output, "  saved as {}", revised.contract_id).map_err(io_err)?;
                            tally.revised += 1;
                        }
                        Err(e) => writeln!(self.output, "  not saved: {e}").map_err(io_err)?,
                    }
                }
                "s" => {
                    skipped.push(record.contract_id.clone());
                    tally.skipped += 1;
                }
                "q" => {
                    tally.quit = true;
                    return Ok(tally);
                }
                other => writeln!(self.output, "  unknown key `{other}`").map_err(io_err)?,
            }
        }
    }
}

impl<R: BufRead, W: Write> Reviewer for TerminalReviewer<R, W> {
    fn await_review(&mut self, store: &Store, task_id: &str) -> Result<(), Error> {
        loop {
            let tally = self.review_pending(store, Some(task_id))?;
            let left = store.read(|p| p.pending_review(Some(task_id)).len());
            if left == 0 {
                return Ok(());
            }
            if tally.quit {
                return Err(Error::Usage(format!("review stopped with {left} contract(s) pending")));
            }
        }
    }
}
