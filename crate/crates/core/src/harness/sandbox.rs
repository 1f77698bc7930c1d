use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{TestCase, TestResult, Verdict};
use crate::model::{IntegrationArtifact, PlatformProfile};

/// Raw outcome of one sandbox subprocess.
#[derive(Debug, Clone, PartialEq)]
pub struct SandboxRun {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration: Duration,
    pub timed_out: bool,
    pub spawn_error: Option<String>,
}

impl SandboxRun {
    pub fn verdict(&self) -> Verdict {
        if self.spawn_error.is_some() {
            Verdict::Errored
        } else if self.timed_out {
            Verdict::TimedOut
        } else if self.exit_code == Some(0) {
            Verdict::Passed
        } else {
            Verdict::Failed
        }
    }

    /// Exit status plus both streams, unmodified.
    pub fn diagnostics(&self) -> String {
        if let Some(e) = &self.spawn_error {
            return format!("sandbox could not start: {e}");
        }
        let status = match (self.timed_out, self.exit_code) {
            (true, _) => format!("timed out after {:.1}s", self.duration.as_secs_f64()),
            (false, Some(c)) => format!("exit status {c}"),
            (false, None) => "terminated by signal".to_string(),
        };
        format!("{status}\n--- stdout ---\n{}\n--- stderr ---\n{}", self.stdout, self.stderr)
    }
}

fn drain(mut r: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Materializes `artifact` and `script` in a fresh temporary directory and
/// runs the profile's sandbox command there. The directory is always
/// removed afterwards.
pub fn run_sandbox(
    profile: &PlatformProfile,
    artifact: &IntegrationArtifact,
    script: &str,
    device_endpoint: &str,
    timeout: Duration,
) -> SandboxRun {
    let failed = |e: String| SandboxRun {
        exit_code: None,
        stdout: String::new(),
        stderr: String::new(),
        duration: Duration::ZERO,
        timed_out: false,
        spawn_error: Some(e),
    };
    let tmp = match tempfile::Builder::new().prefix("iotbridge-sandbox-").tempdir() {
        Ok(t) => t,
        Err(e) => return failed(format!("tempdir: {e}")),
    };
    let artifact_dir = tmp.path().join("artifact");
    if let Err(e) = artifact.export(&artifact_dir) {
        return failed(format!("export artifact: {e}"));
    }
    let test_file = tmp.path().join(&profile.sandbox.test_file_name);
    if let Err(e) = std::fs::write(&test_file, script) {
        return failed(format!("write test file: {e}"));
    }
    let profile_dir = profile.base_dir.canonicalize().unwrap_or_else(|_| profile.base_dir.clone());
    let argv = profile.sandbox.render(&profile_dir, &artifact_dir, &test_file, device_endpoint);
    let run = execute(&argv, tmp.path(), timeout);
    drop(tmp);
    run
}

fn execute(argv: &[String], cwd: &Path, timeout: Duration) -> SandboxRun {
    let started = Instant::now();
    let Some((program, args)) = argv.split_first() else {
        return SandboxRun {
            exit_code: None,
            stdout: String::new(),
            stderr: String::new(),
            duration: Duration::ZERO,
            timed_out: false,
            spawn_error: Some("empty sandbox command".into()),
        };
    };
    let mut child = match Command::new(program)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => {
            return SandboxRun {
                exit_code: None,
                stdout: String::new(),
                stderr: String::new(),
                duration: started.elapsed(),
                timed_out: false,
                spawn_error: Some(format!("{program}: {e}")),
            }
        }
    };
    let out = drain(child.stdout.take().expect("piped stdout"));
    let err = drain(child.stderr.take().expect("piped stderr"));
    let status = child.wait_timeout(timeout).ok().flatten();
    let (exit_code, timed_out) = match status {
        Some(s) => (s.code(), false),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    let mut duration = started.elapsed();
    // a run that used up the whole allowance is a timeout, whatever its status
    let timed_out = timed_out || duration >= timeout;
    if timed_out {
        duration = duration.max(timeout);
    }
    SandboxRun {
        exit_code,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        duration,
        timed_out,
        spawn_error: None,
    }
}

/// Runs one test case with the profile's configured timeout.
pub fn run_test(artifact: &IntegrationArtifact, test: &TestCase, profile: &PlatformProfile, device_endpoint: &str) -> TestResult {
    let timeout = Duration::from_secs_f64(profile.sandbox.timeout_secs.max(0.001));
    run_test_with_timeout(artifact, test, profile, device_endpoint, timeout)
}

pub fn run_test_with_timeout(
    artifact: &IntegrationArtifact,
    test: &TestCase,
    profile: &PlatformProfile,
    device_endpoint: &str,
    timeout: Duration,
) -> TestResult {
    let run = run_sandbox(profile, artifact, &test.body, device_endpoint, timeout);
    TestResult {
        test_id: test.test_id.clone(),
        verdict: run.verdict(),
        diagnostics: run.diagnostics(),
        duration: run.duration,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::harness::{TestCategory, TestOrigin};
    use crate::model::sample_profile;

    fn artifact() -> IntegrationArtifact {
        let mut files = BTreeMap::new();
        files.insert("manifest.json".to_string(), "{}".to_string());
        IntegrationArtifact::new("a", "manifest.json", files, 0)
    }

    fn case(body: &str) -> TestCase {
        TestCase {
            test_id: "t1".into(),
            category: TestCategory::Registration,
            target_function: None,
            body: body.into(),
            origin: TestOrigin::Template,
        }
    }

    #[test]
    fn trivially_passing_body() {
        let r = run_test(&artifact(), &case("true\n"), &sample_profile(), "127.0.0.1:1");
        assert_eq!(r.verdict, Verdict::Passed, "{}", r.diagnostics);
    }

    #[test]
    fn failure_message_is_kept_verbatim() {
        let body = "echo 'assertion failed: entity missing' >&2\nexit 3\n";
        let r = run_test(&artifact(), &case(body), &sample_profile(), "127.0.0.1:1");
        assert_eq!(r.verdict, Verdict::Failed);
        assert!(r.diagnostics.contains("assertion failed: entity missing"));
        assert!(r.diagnostics.contains("exit status 3"));
    }

    #[test]
    fn artifact_and_endpoint_are_visible_to_the_sandbox() {
        let mut p = sample_profile();
        p.sandbox.command = vec!["sh".into(), "{test_file}".into(), "{artifact_dir}".into(), "{device_endpoint}".into()];
        let body = "test -f \"$1/manifest.json\" && test \"$2\" = 127.0.0.1:9\n";
        let r = run_test(&artifact(), &case(body), &p, "127.0.0.1:9");
        assert_eq!(r.verdict, Verdict::Passed, "{}", r.diagnostics);
    }

    #[test]
    fn sleeping_body_times_out() {
        let t = Duration::from_secs(1);
        let r = run_test_with_timeout(&artifact(), &case("sleep 30\n"), &sample_profile(), "x", t);
        assert_eq!(r.verdict, Verdict::TimedOut);
        assert!(r.duration >= t);
    }

    #[test]
    fn missing_binary_is_errored() {
        let mut p = sample_profile();
        p.sandbox.command = vec!["/nonexistent/sandbox-binary".into(), "{test_file}".into()];
        let r = run_test(&artifact(), &case("true"), &p, "x");
        assert_eq!(r.verdict, Verdict::Errored);
        assert!(r.diagnostics.contains("/nonexistent/sandbox-binary"));
    }

    #[test]
    fn same_inputs_same_verdict() {
        let p = sample_profile();
        let a = run_test(&artifact(), &case("exit 1"), &p, "x");
        let b = run_test(&artifact(), &case("exit 1"), &p, "x");
        assert_eq!((a.verdict, a.diagnostics), (b.verdict, b.diagnostics));
    }
}
