use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{CallReply, HelloReply, Request, PROTOCOL_VERSION};
use super::reference::resolve_launch_command;
use super::{CallOutcome, CallRecord, HarnessError, SubjectDescriptor, UnitSignature, TIMEOUT_ERROR_KIND};
use crate::lang::Value;

pub const DEFAULT_CALL_DEADLINE: Duration = Duration::from_secs(5);

const STDERR_TAIL: usize = 4096;

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
}

impl Process {
    fn launch(argv: &[String]) -> Result<Process, HarnessError> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| HarnessError::Launch { command: argv.join(" "), source })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr_pipe = child.stderr.take().expect("stderr is piped");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = sink.lock().unwrap_or_else(|e| e.into_inner());
                tail.push_str(&String::from_utf8_lossy(&buf[..n]));
                if tail.len() > STDERR_TAIL {
                    let cut = tail.len() - STDERR_TAIL;
                    let cut = (cut..tail.len()).find(|i| tail.is_char_boundary(*i)).unwrap_or(0);
                    tail.drain(..cut);
                }
            }
        });
        Ok(Process { child, stdin, lines, stderr })
    }

    fn send(&mut self, request: &Request) -> Result<(), HarnessError> {
        let mut line = serde_json::to_string(request).expect("requests serialize");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| HarnessError::SessionDead(format!("write failed: {e}{}", self.stderr_note())))
    }

    fn stderr_note(&self) -> String {
        let tail = self.stderr.lock().unwrap_or_else(|e| e.into_inner());
        let tail = tail.trim();
        if tail.is_empty() {
            String::new()
        } else {
            format!(" (stderr: {tail})")
        }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A live connection to one subject process. One call in flight at a time.
pub struct Session {
    descriptor: SubjectDescriptor,
    argv: Vec<String>,
    deadline: Duration,
    process: Option<Process>,
    advertised: Vec<UnitSignature>,
    next_call: u64,
}

impl Session {
    /// Launches the subject and exchanges the handshake. The advertised unit
    /// list must match the descriptor exactly.
    pub fn spawn(descriptor: &SubjectDescriptor, deadline: Duration) -> Result<Session, HarnessError> {
        descriptor.validate().map_err(HarnessError::InvalidDescriptor)?;
        let argv = resolve_launch_command(&descriptor.launch_command);
        let mut session = Session {
            descriptor: descriptor.clone(),
            argv,
            deadline,
            process: None,
            advertised: Vec::new(),
            next_call: 0,
        };
        session.start()?;
        Ok(session)
    }

    pub fn descriptor(&self) -> &SubjectDescriptor {
        &self.descriptor
    }

    pub fn units(&self) -> &[UnitSignature] {
        &self.advertised
    }

    fn start(&mut self) -> Result<(), HarnessError> {
        let mut process = Process::launch(&self.argv)?;
        process.send(&Request::Hello { protocol: PROTOCOL_VERSION.into() })?;
        let line = match process.lines.recv_timeout(self.deadline) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                process.kill();
                return Err(HarnessError::Handshake("no hello reply before the deadline".into()));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let _ = process.child.wait();
                let note = process.stderr_note();
                return Err(HarnessError::Handshake(format!("subject exited before replying{note}")));
            }
        };
        let hello: HelloReply = serde_json::from_str(&line).map_err(|e| {
            process.kill();
            HarnessError::Handshake(format!("malformed hello reply: {e}"))
        })?;
        if hello.kind != "hello" || hello.protocol != PROTOCOL_VERSION {
            process.kill();
            return Err(HarnessError::Handshake(format!(
                "protocol mismatch: expected {PROTOCOL_VERSION}, subject speaks {}",
                hello.protocol
            )));
        }
        if let Some(diff) = unit_difference(&self.descriptor.units, &hello.units) {
            process.kill();
            return Err(HarnessError::Handshake(diff));
        }
        self.advertised = hello.units;
        self.process = Some(process);
        Ok(())
    }

    /// Invokes `unit` with `args` and transcribes the reply. A call that
    /// outlives the deadline comes back as `Raised { error_kind: "timeout" }`
    /// and the subject is restarted.
    pub fn call(
        &mut self,
        unit: &str,
        args: &BTreeMap<String, Value>,
    ) -> Result<CallRecord, HarnessError> {
        let signature = self
            .advertised
            .iter()
            .find(|u| u.unit_name == unit)
            .cloned()
            .ok_or_else(|| HarnessError::UnknownUnit(unit.to_string()))?;
        let args = bind_args(&signature, args)?;
        if self.process.is_none() {
            self.start()?;
        }
        self.next_call += 1;
        let call_id = format!("call-{}", self.next_call);
        let started = Instant::now();
        let process = self.process.as_mut().expect("started above");
        process.send(&Request::Call { call_id: call_id.clone(), unit: unit.to_string(), args: args.clone() })?;

        let line = match process.lines.recv_timeout(self.deadline) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                process.kill();
                self.process = None;
                return Ok(CallRecord {
                    call_id,
                    unit_name: unit.to_string(),
                    args,
                    pre_state: BTreeMap::new(),
                    outcome: CallOutcome::Raised {
                        error_kind: TIMEOUT_ERROR_KIND.into(),
                        message: format!("no reply within {} ms", self.deadline.as_millis()),
                    },
                    duration_ms: started.elapsed().as_millis() as u64,
                });
            }
            Err(RecvTimeoutError::Disconnected) => {
                let _ = process.child.wait();
                let note = process.stderr_note();
                self.process = None;
                return Err(HarnessError::SessionDead(format!("subject closed its output{note}")));
            }
        };
        let duration_ms = started.elapsed().as_millis() as u64;
        let reply: CallReply = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Protocol(format!("malformed reply `{}`: {e}", truncate(&line, 200))))?;
        if reply.call_id() != call_id {
            return Err(HarnessError::Protocol(format!(
                "reply for `{}` while awaiting `{call_id}`",
                reply.call_id()
            )));
        }
        let (pre_state, outcome) = match reply {
            CallReply::Returned { result, post_state, pre_state, .. } => {
                let post_state = bind_state(&signature, post_state, "post_state")?;
                let pre_state = match pre_state {
                    Some(state) => bind_state(&signature, state, "pre_state")?,
                    None => BTreeMap::new(),
                };
                (pre_state, CallOutcome::Returned { result, post_state })
            }
            CallReply::Raised { error, .. } => {
                if error.kind.trim().is_empty() {
                    return Err(HarnessError::Protocol("raised reply with empty error kind".into()));
                }
                (BTreeMap::new(), CallOutcome::Raised { error_kind: error.kind, message: error.message })
            }
        };
        Ok(CallRecord { call_id, unit_name: unit.to_string(), args, pre_state, outcome, duration_ms })
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(mut process) = self.process.take() {
            let _ = process.send(&Request::Shutdown);
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = process.child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            process.kill();
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.stop();
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn bind_args(
    signature: &UnitSignature,
    args: &BTreeMap<String, Value>,
) -> Result<BTreeMap<String, Value>, HarnessError> {
    let bad = |detail: String| HarnessError::BadArguments { unit: signature.unit_name.clone(), detail };
    if let Some(extra) = args.keys().find(|k| signature.param(k).is_none()) {
        return Err(bad(format!("unexpected argument `{extra}`")));
    }
    let mut bound = BTreeMap::new();
    for param in &signature.params {
        let value = args.get(&param.name).ok_or_else(|| bad(format!("missing argument `{}`", param.name)))?;
        let value = value.clone().coerce(param.ty).ok_or_else(|| {
            bad(format!("`{}` expects {}, got {}", param.name, param.ty, value.type_name()))
        })?;
        bound.insert(param.name.clone(), value);
    }
    Ok(bound)
}

fn bind_state(
    signature: &UnitSignature,
    mut state: BTreeMap<String, Value>,
    label: &str,
) -> Result<BTreeMap<String, Value>, HarnessError> {
    let mut bound = BTreeMap::new();
    for field in &signature.observable_fields {
        let value = state.remove(&field.name).ok_or_else(|| {
            HarnessError::Protocol(format!("{label} does not bind observable field `{}`", field.name))
        })?;
        let value = value.clone().coerce(field.ty).ok_or_else(|| {
            HarnessError::Protocol(format!(
                "{label} field `{}` should be {}, got {}",
                field.name,
                field.ty,
                value.type_name()
            ))
        })?;
        bound.insert(field.name.clone(), value);
    }
    // Extra reported fields are kept verbatim.
    bound.extend(state);
    Ok(bound)
}

fn unit_difference(expected: &[UnitSignature], advertised: &[UnitSignature]) -> Option<String> {
    let mut problems = Vec::new();
    for unit in expected {
        match advertised.iter().find(|u| u.unit_name == unit.unit_name) {
            None => problems.push(format!("missing unit `{}`", unit.unit_name)),
            Some(found) if found != unit => {
                problems.push(format!("unit `{}` advertised with a different signature", unit.unit_name))
            }
            Some(_) => {}
        }
    }
    for unit in advertised {
        if !expected.iter().any(|u| u.unit_name == unit.unit_name) {
            problems.push(format!("unexpected unit `{}`", unit.unit_name));
        }
    }
    (!problems.is_empty()).then(|| problems.join("; "))
}
