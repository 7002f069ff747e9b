//! `qnc`: batch front end for the protocol verifier.
//!
//! Exit codes: 0 when every check passes, 1 on a failed check or refusal, 2 on bad input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qnc::conversion::{compile_circuit, simulate_by_standard_form, ConvertedCircuit};
use qnc::decomp::{kraus_cirac, op_number};
use qnc::implementability::{swap_impossibility_scan, ScanGrid};
use qnc::locc::{execute, validate, ExecOptions, ProtocolFile};
use qnc::network::build_cluster;
use qnc::protocols::{
    appendix_d_trace, grail_protocol, implement_full_two_qubit, implement_full_two_qubit_on, ladder_protocol, verify, Program, ProtocolError,
    Verdict, VerifyOptions,
};
use qnc::tensor::{gates, max_distance, phase_distance, CMatrix, MatrixJson, Qubit, StateVector, C64};

#[derive(Parser)]
#[command(name = "qnc", version, about = "Verify LOCC protocols for two-qubit gates over cluster networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for random test inputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Pass threshold; each command has its own default.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write the report here instead of stdout. A `.csv` path makes scan-fourqubit emit per-point rows.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical form, KC# and Op# of a two-qubit unitary.
    Kc {
        /// Matrix JSON file, or one of: swap, cnot, cz, identity.
        unitary: String,
    },
    /// Compile and check a protocol for a unitary on a network.
    Verify {
        /// butterfly, grail, ladder:N or cluster:k,N.
        network: String,
        /// Matrix JSON file, or one of: swap, cnot, cz, identity.
        unitary: String,
        /// Seeded random inputs in addition to the computational basis.
        #[arg(long, default_value_t = 20)]
        random_inputs: usize,
    },
    /// Schmidt-rank triples over the nine four-qubit families.
    ScanFourqubit {
        /// Grid JSON file; the default grid is used when omitted.
        grid: Option<PathBuf>,
    },
    /// Step-by-step butterfly states for eigenvector input `j`.
    #[command(allow_negative_numbers = true)]
    Trace { x: f64, y: f64, z: f64, j: usize },
    /// Check a converted circuit, rebuild it in standard form and compile it.
    Convert {
        circuit: PathBuf,
        /// Include a DOT rendering of the circuit.
        #[arg(long)]
        dot: bool,
    },
    /// Validate and run a raw protocol file.
    Simulate { protocol: PathBuf },
}

/// Bad input: exit code 2.
#[derive(Debug)]
struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

struct Outcome {
    report: Value,
    pass: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Kc { unitary } => cmd_kc(unitary, cli.tol.unwrap_or(1e-9)),
        Command::Verify { network, unitary, random_inputs } => cmd_verify(network, unitary, cli.seed, *random_inputs, cli.tol.unwrap_or(1e-9)),
        Command::ScanFourqubit { grid } => cmd_scan(grid.as_deref(), cli.out.as_deref()),
        Command::Trace { x, y, z, j } => cmd_trace(*x, *y, *z, *j, cli.tol.unwrap_or(1e-10)),
        Command::Convert { circuit, dot } => cmd_convert(circuit, *dot, cli.tol.unwrap_or(1e-9)),
        Command::Simulate { protocol } => cmd_simulate(protocol, cli.tol.unwrap_or(1e-10)),
    };
    match result {
        Ok(out) => {
            if let Err(e) = emit(&cli, &out.report) {
                eprintln!("error: {}", e.0);
                return ExitCode::from(2);
            }
            if out.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.0);
            ExitCode::from(2)
        }
    }
}

fn emit(cli: &Cli, report: &Value) -> Result<(), InputError> {
    let body = match cli.format {
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
        Format::Text => {
            let mut lines = Vec::new();
            flatten("", report, &mut lines);
            lines.join("\n") + "\n"
        }
    };
    match &cli.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => Ok(()),
        Some(p) => Ok(fs::write(p, body)?),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// `key: value` lines, one per JSON leaf; arrays of numbers stay on one line.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) if items.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let parts: Vec<String> = items.iter().map(scalar).collect();
            out.push(format!("{prefix}: [{}]", parts.join(", ")));
        }
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        other => out.push(format!("{prefix}: {}", scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn to_value<T: Serialize>(t: &T) -> Result<Value, InputError> {
    Ok(serde_json::to_value(t)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    let text = fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn load_unitary(spec: &str) -> Result<CMatrix, InputError> {
    let path = Path::new(spec);
    if !path.exists() {
        match spec {
            "swap" => return Ok(gates::swap()),
            "cnot" => return Ok(gates::cnot()),
            "cz" => return Ok(gates::controlled(&gates::id2(), &gates::z())),
            "identity" | "id" => return Ok(CMatrix::identity(4, 4)),
            _ => {}
        }
    }
    let m: MatrixJson = read_json(path)?;
    Ok(m.to_matrix()?)
}

fn cmd_kc(spec: &str, tol: f64) -> Result<Outcome, InputError> {
    let u = load_unitary(spec)?;
    let kc = kraus_cirac(&u)?;
    let residual = max_distance(&kc.reconstruct(), &u);
    let mut report = to_value(&kc.to_json())?;
    report["op_number"] = json!(op_number(&u)?);
    report["reconstruction_residual"] = json!(residual);
    Ok(Outcome { report, pass: residual <= tol })
}

fn parse_network(id: &str) -> Result<NetworkId, InputError> {
    let bad = || InputError(format!("unknown network `{id}`: expected butterfly, grail, ladder:N or cluster:k,N"));
    match id.split_once(':') {
        None if id == "butterfly" => Ok(NetworkId::Butterfly),
        None if id == "grail" => Ok(NetworkId::Grail),
        Some(("ladder", n)) => Ok(NetworkId::Ladder(n.parse().map_err(|_| bad())?)),
        Some(("cluster", kn)) => {
            let (k, n) = kn.split_once(',').ok_or_else(bad)?;
            Ok(NetworkId::Cluster(k.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?))
        }
        _ => Err(bad()),
    }
}

enum NetworkId {
    Butterfly,
    Grail,
    Ladder(usize),
    Cluster(usize, usize),
}

fn cmd_verify(network: &str, spec: &str, seed: u64, random_inputs: usize, tol: f64) -> Result<Outcome, InputError> {
    let id = parse_network(network)?;
    let u = load_unitary(spec)?;
    let compiled: Result<Program, ProtocolError> = match id {
        NetworkId::Butterfly => implement_full_two_qubit(&u),
        NetworkId::Grail => grail_protocol(&u),
        NetworkId::Ladder(n) | NetworkId::Cluster(2, n) => ladder_protocol(&u, n),
        NetworkId::Cluster(3, n) if n >= 2 => implement_full_two_qubit_on(build_cluster(3, n)?, &u),
        NetworkId::Cluster(k, n) => {
            let report = json!({
                "network": network,
                "verdict": "refused",
                "reason": format!("no two-qubit protocol for a ({k},{n}) cluster; use k = 2, or k = 3 with N >= 2"),
            });
            return Ok(Outcome { report, pass: false });
        }
    };
    let program = match compiled {
        Ok(p) => p,
        Err(ProtocolError::Refused { kc, n }) => {
            let report = json!({
                "network": network,
                "verdict": "refused",
                "kc": kc,
                "n": n,
                "reason": format!("KC# of the unitary is {kc}, more than the {n} columns of the ladder"),
            });
            return Ok(Outcome { report, pass: false });
        }
        Err(e) => return Err(e.into()),
    };
    let opts = VerifyOptions { seed, random_inputs, tol, ..VerifyOptions::default() };
    let report = verify(&program, &opts)?;
    let pass = report.verdict == Verdict::Implementable;
    let mut value = to_value(&report)?;
    value["network"] = json!(network);
    Ok(Outcome { report: value, pass })
}

fn cmd_scan(grid: Option<&Path>, out: Option<&Path>) -> Result<Outcome, InputError> {
    let mut grid: ScanGrid = match grid {
        Some(p) => read_json(p)?,
        None => ScanGrid::default(),
    };
    let csv = out.filter(|p| p.extension().is_some_and(|e| e == "csv"));
    if csv.is_some() {
        grid.record_points = true;
    }
    let report = swap_impossibility_scan(&grid)?;
    if let Some(p) = csv {
        fs::write(p, report.to_csv())?;
    }
    Ok(Outcome { pass: report.forbidden_unordered == 0, report: to_value(&report)? })
}

fn cmd_trace(x: f64, y: f64, z: f64, j: usize, tol: f64) -> Result<Outcome, InputError> {
    let trace = appendix_d_trace(x, y, z, j, tol)?;
    let pass = trace.steps.iter().all(|s| s.matches);
    Ok(Outcome { report: to_value(&trace)?, pass })
}

fn cmd_convert(path: &Path, dot: bool, tol: f64) -> Result<Outcome, InputError> {
    let circuit: ConvertedCircuit = read_json(path)?;
    if let Err(e) = circuit.check() {
        let report = json!({ "legal": false, "reason": e.to_string() });
        return Ok(Outcome { report, pass: false });
    }
    let standard = simulate_by_standard_form(&circuit)?;
    let distance = phase_distance(&standard.unitary(), &circuit.unitary());
    let (network, protocol) = compile_circuit(&circuit)?;
    let mut report = json!({
        "legal": true,
        "wires": circuit.wires,
        "columns": circuit.columns.len(),
        "standard_form": to_value(&standard)?,
        "standard_form_distance": distance,
        "consumed_edges": protocol.consumed_edges.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "network_edges": network.edges.len(),
        "measurements": protocol.measurement_count(),
    });
    if dot {
        report["dot"] = json!(circuit.to_dot());
    }
    Ok(Outcome { report, pass: distance <= tol })
}

fn cmd_simulate(path: &Path, tol: f64) -> Result<Outcome, InputError> {
    let file: ProtocolFile = read_json(path)?;
    let network = file.network.build()?;
    let check = validate(&file.protocol, &network);
    if !check.ok {
        let report = json!({ "valid": false, "violations": to_value(&check.violations)? });
        return Ok(Outcome { report, pass: false });
    }
    let inputs = &file.protocol.inputs;
    let amps = match &file.input {
        Some(m) => m.to_amplitudes()?,
        None => {
            let mut v = vec![C64::new(0.0, 0.0); 1 << inputs.len()];
            v[0] = C64::new(1.0, 0.0);
            v
        }
    };
    let reg = inputs.iter().map(|q| Qubit::new(q.label.clone(), q.node.clone())).collect();
    let input = StateVector::from_amplitudes(reg, amps)?;
    let set = execute(&file.protocol, &network, &input, &ExecOptions::default())?;
    let branches: Vec<Value> = set
        .branches
        .iter()
        .map(|b| {
            let mut v = json!({ "outcomes": b.transcripts, "multiplicity": b.multiplicity, "probability": b.probability });
            if b.state.num_qubits() <= 10 {
                v["state"] = to_value(&MatrixJson::from_state(&b.state)).unwrap_or(Value::Null);
            }
            v
        })
        .collect();
    let total = set.total_probability();
    let report = json!({
        "valid": true,
        "used_edges": check.used_edges.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "outcome_bits": set.vars,
        "transcripts": set.transcript_count(),
        "total_probability": total,
        "branches": branches,
    });
    Ok(Outcome { report, pass: (total - 1.0).abs() <= tol })
}
