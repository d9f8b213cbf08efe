//! Evaluator backed by an external command, one process per evaluation.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::protocol::{EvalOutcome, EvalRequest, EvalResponse, Evaluator};

const POLL: Duration = Duration::from_millis(5);

/// Runs `argv` for every evaluation and speaks the line protocol from
/// [`crate::protocol`] over its stdin/stdout. Stderr is inherited.
#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    argv: Vec<String>,
}

impl ExternalEvaluator {
    pub fn new(argv: Vec<String>) -> Result<Self, String> {
        if argv.is_empty() || argv[0].is_empty() {
            return Err("evaluator command is empty".into());
        }
        Ok(Self { argv })
    }

    pub fn argv(&self) -> &[String] {
        &self.argv
    }

    fn spawn(&self) -> std::io::Result<Child> {
        let mut cmd = Command::new(&self.argv[0]);
        cmd.args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        cmd.spawn()
    }
}

fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    {
        // the child leads its own process group; take any grandchildren down too
        let pgid = child.id() as libc::pid_t;
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, request: &EvalRequest) -> EvalOutcome {
        let deadline = request
            .budget_seconds
            .map(|b| Instant::now() + Duration::from_secs_f64(b));
        let mut child = match self.spawn() {
            Ok(c) => c,
            Err(e) => return EvalOutcome::Failed(format!("cannot start '{}': {e}", self.argv[0])),
        };

        let mut stdin = child.stdin.take().expect("piped stdin");
        let line = request.to_line();
        // a child that exits without reading gives EPIPE here; its exit status decides
        let _ = stdin.write_all(line.as_bytes()).and_then(|_| stdin.write_all(b"\n"));
        drop(stdin);

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut first = String::new();
            let res = BufReader::new(stdout).read_line(&mut first).map(|_| first);
            let _ = tx.send(res);
        });

        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {}
                Err(e) => {
                    kill_tree(&mut child);
                    return EvalOutcome::Failed(format!("waiting for evaluator: {e}"));
                }
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                kill_tree(&mut child);
                return EvalOutcome::Timeout;
            }
            thread::sleep(POLL);
        };
        if !status.success() {
            return EvalOutcome::Failed(format!("evaluator exited with {status}"));
        }

        let wait = deadline
            .map(|d| d.saturating_duration_since(Instant::now()))
            .unwrap_or(Duration::from_secs(5))
            .max(Duration::from_millis(100));
        let line = match rx.recv_timeout(wait) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return EvalOutcome::Failed(format!("reading evaluator output: {e}")),
            Err(_) => return EvalOutcome::Failed("evaluator output not closed after exit".into()),
        };
        match EvalResponse::from_line(&line) {
            Ok(EvalResponse::Objective(f)) => EvalOutcome::Ok(f),
            Ok(EvalResponse::Error(e)) => EvalOutcome::Failed(format!("evaluator error: {e}")),
            Err(e) => EvalOutcome::Failed(format!("protocol violation: {e}")),
        }
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn sh(script: &str) -> ExternalEvaluator {
        ExternalEvaluator::new(vec!["sh".into(), "-c".into(), script.into()]).unwrap()
    }

    fn request(budget: Option<f64>) -> EvalRequest {
        EvalRequest {
            run_id: "t".into(),
            candidate_id: 0,
            generation: 0,
            budget_seconds: budget,
            params: vec![("x".to_string(), 0.5)].into(),
            genotype: vec![0.5],
        }
    }

    #[test]
    fn echo_objective() {
        let ev = sh(r#"read line; echo '{"objective": 0.5}'"#);
        assert_eq!(ev.evaluate(&request(None)), EvalOutcome::Ok(0.5));
    }

    #[test]
    fn request_reaches_stdin() {
        let ev = sh(r#"read line; case "$line" in *'"params":{"x":0.5}'*) echo '{"objective":1}';; *) echo '{"error":"bad"}';; esac"#);
        assert_eq!(ev.evaluate(&request(None)), EvalOutcome::Ok(1.0));
    }

    #[test]
    fn nonzero_exit_fails() {
        let ev = sh(r#"read line; echo '{"objective": 0.5}'; exit 1"#);
        assert!(matches!(ev.evaluate(&request(None)), EvalOutcome::Failed(_)));
    }

    #[test]
    fn nan_objective_fails() {
        let ev = sh(r#"read line; echo '{"objective": "NaN"}'"#);
        assert!(matches!(ev.evaluate(&request(None)), EvalOutcome::Failed(_)));
    }

    #[test]
    fn error_response_and_garbage_fail() {
        assert!(matches!(sh(r#"echo '{"error": "diverged"}'"#).evaluate(&request(None)), EvalOutcome::Failed(m) if m.contains("diverged")));
        assert!(matches!(sh("echo hello").evaluate(&request(None)), EvalOutcome::Failed(_)));
        assert!(matches!(sh("true").evaluate(&request(None)), EvalOutcome::Failed(_)));
    }

    #[test]
    fn missing_program_fails() {
        let ev = ExternalEvaluator::new(vec!["/nonexistent/evaluator".into()]).unwrap();
        assert!(matches!(ev.evaluate(&request(None)), EvalOutcome::Failed(_)));
        assert!(ExternalEvaluator::new(vec![]).is_err());
    }

    #[test]
    fn overrun_is_killed() {
        let ev = sh("sleep 30; echo '{\"objective\": 1}'");
        let start = Instant::now();
        assert_eq!(ev.evaluate(&request(Some(0.3))), EvalOutcome::Timeout);
        assert!(start.elapsed() < Duration::from_secs(2));
    }
}
