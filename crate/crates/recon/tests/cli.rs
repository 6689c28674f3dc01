use std::process::Command;

use qkdrecon::harness::read_csv;

fn qkdrecon(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qkdrecon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn simulate_writes_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let out = qkdrecon(&["simulate", "-n", "16384", "-p", "0.03", "--seed", "1", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("status        success"));
    let rows = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].protocol, "hamming-lfsr");
    assert!(rows[0].time_ms.is_some());
}

#[test]
fn abandoned_run_exits_with_two() {
    // At p = 0.05 the block load n0*p = 0.8 leaves this seed unreconciled.
    let out = qkdrecon(&["simulate", "-n", "65536", "-p", "0.05", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn config_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "volume = 11\n").unwrap();
    assert_eq!(qkdrecon(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(qkdrecon(&["simulate", "--no-such-flag"]).status.code(), Some(4));
    assert_eq!(qkdrecon(&["simulate", "-p", "0.7"]).status.code(), Some(4));
    assert_eq!(qkdrecon(&["serve"]).status.code(), Some(4));
}

#[test]
fn refused_connection_exits_with_three() {
    assert_eq!(qkdrecon(&["connect", "--peer", "127.0.0.1:1"]).status.code(), Some(3));
}

#[test]
fn config_file_drives_permtest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("perm.cfg");
    std::fs::write(&cfg, "# one-register check\nkey_length = 4096\nseed1 = 5\nseed2 = 78\n").unwrap();
    let out = qkdrecon(&["permtest", "--mode", "one-lfsr", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].protocol, "perm-1lfsr/n=16");
    assert_eq!(rows[1].protocol, "perm-2lfsr/n=16");
    assert!(rows[1].d_tot.unwrap() > rows[0].d_tot.unwrap());
}

#[test]
fn serve_and_connect_reconcile_over_tcp() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let addr = format!("127.0.0.1:{port}");
    let args = ["-n", "100000", "-p", "0.03", "--seed", "7", "--segment", "50000"];
    let server = Command::new(env!("CARGO_BIN_EXE_qkdrecon"))
        .args(["serve", "--listen", &addr])
        .args(args)
        .env("RUST_LOG", "warn")
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut client = None;
    for _ in 0..100 {
        std::thread::sleep(std::time::Duration::from_millis(50));
        let out = qkdrecon(&[&["connect", "--peer", &addr][..], &args].concat());
        if out.status.code() != Some(3) {
            client = Some(out);
            break;
        }
    }
    let client = client.expect("server never came up");
    let server = server.wait_with_output().unwrap();
    assert_eq!(client.status.code(), Some(0), "{}", String::from_utf8_lossy(&client.stdout));
    assert_eq!(server.status.code(), Some(0));
    let leaked = |o: &std::process::Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .find(|l| l.starts_with("leaked"))
            .map(str::to_string)
    };
    assert_eq!(leaked(&client), leaked(&server));
}
