use std::time::Instant;

use lcot_mcp::{Sandbox, SandboxConfig, SandboxError};

const GRACE_S: f64 = 2.0;

fn sandbox() -> Sandbox {
    Sandbox::new(SandboxConfig::default())
}

#[test]
fn python_hello_prints_and_exits_zero() {
    let r = sandbox().execute("python", "print('hello')", 10.0).unwrap();
    assert_eq!(r.stdout, "hello\n");
    assert_eq!(r.exit_status, 0);
    assert!(!r.timed_out);
    assert_eq!(r.language, "python");
}

#[test]
fn c_snippet_compiles_and_runs() {
    let code = "#include <stdio.h>\nint main(void) { printf(\"%d\\n\", 6 * 7); return 0; }\n";
    let r = sandbox().execute("c", code, 20.0).unwrap();
    assert_eq!(r.stdout.trim(), "42", "stderr: {}", r.stderr);
    assert_eq!(r.exit_status, 0);
}

#[test]
fn c_compile_error_reports_nonzero_exit() {
    let r = sandbox().execute("c", "int main(void) { return }", 20.0).unwrap();
    assert_ne!(r.exit_status, 0);
    assert!(r.stderr.contains("error"), "{}", r.stderr);
}

#[test]
fn infinite_loop_is_killed_within_grace() {
    let started = Instant::now();
    let r = sandbox()
        .execute("python", "print('started', flush=True)\nwhile True:\n    pass\n", 2.0)
        .unwrap();
    let wall = started.elapsed().as_secs_f64();
    assert!(r.timed_out);
    assert!(r.elapsed_s >= 2.0);
    assert!(wall <= 2.0 + GRACE_S, "took {wall} s");
    assert_eq!(r.stdout, "started\n");
    assert_ne!(r.exit_status, 0);
}

#[test]
fn background_children_die_with_the_snippet() {
    let code = "import subprocess, time\n\
subprocess.Popen(['sleep', '30'])\n\
print('spawned', flush=True)\n\
time.sleep(30)\n";
    let started = Instant::now();
    let r = sandbox().execute("python", code, 1.0).unwrap();
    assert!(r.timed_out);
    assert!(started.elapsed().as_secs_f64() <= 1.0 + GRACE_S);
    assert_eq!(r.stdout, "spawned\n");
}

#[test]
fn zero_timeout_times_out_immediately() {
    let r = sandbox().execute("python", "print('x')", 0.0).unwrap();
    assert!(r.timed_out);
}

#[test]
fn outbound_network_is_blocked() {
    let code = r#"import socket
try:
    s = socket.create_connection(('1.1.1.1', 80), timeout=3)
    print('connected')
except OSError as e:
    print('blocked', e.errno)
"#;
    let r = sandbox().execute("python", code, 10.0).unwrap();
    assert!(r.stdout.starts_with("blocked"), "stdout: {} stderr: {}", r.stdout, r.stderr);
}

#[test]
fn loopback_sockets_are_blocked_too() {
    let code = r#"import socket
try:
    socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    print('created')
except OSError:
    print('blocked')
"#;
    let r = sandbox().execute("python", code, 10.0).unwrap();
    assert_eq!(r.stdout, "blocked\n", "stderr: {}", r.stderr);
}

#[test]
fn memory_cap_stops_large_allocations() {
    let code = "x = bytearray(1024 * 1024 * 1024)\nprint('allocated')\n";
    let r = sandbox().execute("python", code, 10.0).unwrap();
    assert_ne!(r.exit_status, 0);
    assert!(!r.stdout.contains("allocated"));
    assert!(r.stderr.contains("MemoryError"), "{}", r.stderr);
}

#[test]
fn larger_cap_admits_the_same_allocation() {
    let config = SandboxConfig {
        memory_mb: 2048,
        ..SandboxConfig::default()
    };
    let code = "x = bytearray(1024 * 1024 * 1024)\nprint('allocated')\n";
    let r = Sandbox::new(config).execute("python", code, 10.0).unwrap();
    assert_eq!(r.stdout, "allocated\n", "{}", r.stderr);
}

#[test]
fn output_is_capped() {
    let config = SandboxConfig {
        max_output_bytes: 1000,
        ..SandboxConfig::default()
    };
    let r = Sandbox::new(config)
        .execute("python", "print('y' * 100000)", 10.0)
        .unwrap();
    assert_eq!(r.exit_status, 0);
    assert!(r.stdout.starts_with(&"y".repeat(1000)));
    assert!(r.stdout.len() < 1100);
    assert!(r.stdout.ends_with("[output truncated]"));
}

#[test]
fn crash_reports_exit_status_and_stderr() {
    let r = sandbox().execute("python", "raise SystemExit(3)", 10.0).unwrap();
    assert_eq!(r.exit_status, 3);
    let r = sandbox().execute("python", "1/0", 10.0).unwrap();
    assert_eq!(r.exit_status, 1);
    assert!(r.stderr.contains("ZeroDivisionError"));
}

#[test]
fn unsupported_language_and_bad_timeout_are_errors() {
    assert!(matches!(
        sandbox().execute("cobol", "", 1.0),
        Err(SandboxError::Unsupported(l)) if l == "cobol"
    ));
    assert!(matches!(sandbox().execute("python", "", -1.0), Err(SandboxError::BadTimeout(_))));
    assert!(matches!(sandbox().execute("python", "", f64::NAN), Err(SandboxError::BadTimeout(_))));
}

#[test]
fn environment_is_scrubbed_and_scratch_dir_removed() {
    let root = tempfile::tempdir().unwrap();
    let config = SandboxConfig {
        root: Some(root.path().to_path_buf()),
        ..SandboxConfig::default()
    };
    std::env::set_var("LCOT_TEST_SECRET", "hunter2");
    let code = "import os\nprint(os.environ.get('LCOT_TEST_SECRET', 'absent'))\nprint(os.getcwd())\n";
    let r = Sandbox::new(config).execute("python", code, 10.0).unwrap();
    let mut lines = r.stdout.lines();
    assert_eq!(lines.next(), Some("absent"));
    assert!(lines.next().unwrap().starts_with(root.path().to_str().unwrap()));
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn languages_follow_config() {
    assert_eq!(sandbox().languages(), vec!["c".to_string(), "python".to_string()]);
    assert!(Sandbox::new(SandboxConfig::empty()).languages().is_empty());
}
