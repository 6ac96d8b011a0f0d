//! Command-line job runner: input parsing, library dispatch, JSON report
//! documents and CSV quotient traces.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error as ThisError;

use crate::error::Error;
use crate::oracle::{self, ProbeLevel, ProbeOutcome, QuotientProbe};
use crate::spectral::{
    attach_oracle, composite_objective, critical_cone_definition_gap, critical_cone_member, second_semiderivative,
    spectral_prox, spectral_second_subderivative, spectral_subderivative, spectral_subgradient, spectral_value,
    SubgradientTriple,
};
use crate::symfun::{theta_gqf_certificate, theta_subgradients, SymmetricFunctionSpec};
use crate::symmat::{eig_default, EigenSystem, SymMatrix};
use crate::tol;
use crate::verify::{self, VerifyConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Command {
    Report,
    Subderiv,
    Ssub,
    Prox,
    Critcone,
    Semideriv,
    Verify,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Report,
        Command::Subderiv,
        Command::Ssub,
        Command::Prox,
        Command::Critcone,
        Command::Semideriv,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Report => "REPORT",
            Command::Subderiv => "SUBDERIV",
            Command::Ssub => "SSUB",
            Command::Prox => "PROX",
            Command::Critcone => "CRITCONE",
            Command::Semideriv => "SEMIDERIV",
            Command::Verify => "VERIFY",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
                format!("unknown command {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// Everything needed to run one command.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub command: Command,
    pub matrix_path: Option<PathBuf>,
    /// Inline JSON object or a path to a JSON file.
    pub theta: Option<String>,
    pub direction_path: Option<PathBuf>,
    pub subgradient: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub probe_t_grid: Option<Vec<f64>>,
    pub probe_samples: Option<usize>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub trace_csv: Option<PathBuf>,
    /// Trial-count multiplier for VERIFY.
    pub verify_scale: f64,
}

impl JobSpec {
    pub fn new(command: Command) -> Self {
        JobSpec {
            command,
            matrix_path: None,
            theta: None,
            direction_path: None,
            subgradient: None,
            gamma: None,
            probe_t_grid: None,
            probe_samples: None,
            seed: 42,
            output_path: None,
            trace_csv: None,
            verify_scale: 1.0,
        }
    }
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported point: {0}")]
    Unsupported(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Unsupported(_) => 3,
            CliError::Io(_) => 4,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnsupportedPoint { hypothesis } => CliError::Unsupported(hypothesis),
            Error::EigenFailure(_) | Error::Inconsistent(_) => CliError::Failure(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

/// A matrix exactly as read, before symmetrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixInput {
    pub n: usize,
    #[serde(deserialize_with = "flat_or_rows")]
    pub entries: Vec<f64>,
}

/// Row-major entries, given flat or as an array of rows.
fn flat_or_rows<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entries {
        Flat(Vec<f64>),
        Rows(Vec<Vec<f64>>),
    }
    Ok(match Entries::deserialize(d)? {
        Entries::Flat(v) => v,
        Entries::Rows(rows) => rows.concat(),
    })
}

impl MatrixInput {
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.entries[i * n + j] - self.entries[j * n + i]).abs());
            }
        }
        worst
    }

    pub fn to_sym(&self) -> Result<SymMatrix, CliError> {
        if self.entries.len() != self.n * self.n {
            return Err(CliError::Parse(format!(
                "matrix declares n = {} but has {} entries",
                self.n,
                self.entries.len()
            )));
        }
        Ok(SymMatrix::from_row_major(self.n, &self.entries)?)
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads `{"n", "entries"}` JSON (`.json`) or rows of comma-separated values (`.csv`).
pub fn read_matrix(path: &Path) -> Result<MatrixInput, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let text = read_text(path)?;
    let m = match ext.as_str() {
        "json" => serde_json::from_str::<MatrixInput>(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
        "csv" => parse_csv_matrix(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
        _ => {
            return Err(CliError::Parse(format!(
                "{}: matrix files must end in .json or .csv",
                path.display()
            )))
        }
    };
    if m.n == 0 || m.entries.len() != m.n * m.n {
        return Err(CliError::Parse(format!(
            "{}: expected a nonempty square matrix, got n = {} with {} entries",
            path.display(),
            m.n,
            m.entries.len()
        )));
    }
    Ok(m)
}

fn parse_csv_matrix(text: &str) -> Result<MatrixInput, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| format!("bad entry {c:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(format!("matrix is not square: {n} rows but a row of length {}", r.len()));
    }
    Ok(MatrixInput {
        n,
        entries: rows.into_iter().flatten().collect(),
    })
}

/// Parses an inline JSON object, or reads it from a file path.
pub fn parse_theta(arg: &str) -> Result<SymmetricFunctionSpec, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read_text(Path::new(arg))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("theta: {e}")))
}

/// Comma- or whitespace-separated reals, optionally wrapped in brackets.
pub fn parse_real_list(s: &str) -> Result<Vec<f64>, String> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|e| format!("bad number {p:?}: {e}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsEcho {
    pub matrix: Option<MatrixInput>,
    pub theta: Option<SymmetricFunctionSpec>,
    pub direction: Option<MatrixInput>,
    pub subgradient: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub probe: QuotientProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub lambda: Vec<f64>,
    /// Half-open index ranges `[start, end)` of the eigenvalue blocks.
    pub blocks: Vec<[usize; 2]>,
    pub mu: Vec<f64>,
    pub cluster_tol: f64,
    pub ambiguous: bool,
}

impl From<&EigenSystem> for EigenData {
    fn from(es: &EigenSystem) -> Self {
        EigenData {
            lambda: es.lambda().to_vec(),
            blocks: es.blocks().iter().map(|b| [b.start, b.end]).collect(),
            mu: es.mu().to_vec(),
            cluster_tol: es.cluster_tol(),
            ambiguous: es.is_ambiguous(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub cluster_rel: f64,
    pub subgradient_membership: f64,
    pub active_set: f64,
    pub critical_cone: f64,
    pub fan_equality: f64,
    pub critical_cone_definition: f64,
    pub richardson_agreement: f64,
    pub input_asymmetry_warn: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cluster_rel: tol::CLUSTER_REL,
            subgradient_membership: tol::SUBGRADIENT_MEMBERSHIP,
            active_set: tol::ACTIVE_SET,
            critical_cone: tol::CRITICAL_CONE,
            fan_equality: tol::FAN_EQUALITY,
            critical_cone_definition: tol::CRITICAL_CONE_DEFINITION,
            richardson_agreement: tol::RICHARDSON_AGREEMENT,
            input_asymmetry_warn: tol::INPUT_ASYMMETRY_WARN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub version: String,
    pub command: Command,
    pub seed: u64,
    /// Wall-clock stamp; the only field that varies between identical runs.
    pub generated_at: String,
    pub inputs: InputsEcho,
    pub eigen: Option<EigenData>,
    pub warnings: Vec<String>,
    pub tolerances: Tolerances,
    pub output: Value,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with `generated_at` blanked; identical for identical jobs.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.generated_at.clear();
        copy.to_json()
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub document: ReportDocument,
    pub exit_code: i32,
}

struct Loaded {
    inputs: InputsEcho,
    warnings: Vec<String>,
}

impl Loaded {
    fn spec(&self) -> Result<&SymmetricFunctionSpec, CliError> {
        self.inputs
            .theta
            .as_ref()
            .ok_or_else(|| CliError::Parse("--theta is required".into()))
    }

    fn matrix(&self) -> Result<SymMatrix, CliError> {
        self.inputs
            .matrix
            .as_ref()
            .ok_or_else(|| CliError::Parse("--matrix is required".into()))?
            .to_sym()
    }

    fn direction(&self, n: usize) -> Result<SymMatrix, CliError> {
        let h = self
            .inputs
            .direction
            .as_ref()
            .ok_or_else(|| CliError::Parse("--direction is required".into()))?
            .to_sym()?;
        if h.dim() != n {
            return Err(CliError::Parse(format!("direction is {}x{0} but matrix is {n}x{n}", h.dim())));
        }
        Ok(h)
    }

    fn gamma(&self) -> Result<f64, CliError> {
        self.inputs
            .gamma
            .ok_or_else(|| CliError::Parse("--gamma is required".into()))
    }
}

fn load(job: &JobSpec) -> Result<Loaded, CliError> {
    let mut warnings = Vec::new();
    let mut read_checked = |path: &Option<PathBuf>, what: &str| -> Result<Option<MatrixInput>, CliError> {
        let Some(p) = path else { return Ok(None) };
        let m = read_matrix(p)?;
        let asym = m.asymmetry();
        if asym > tol::INPUT_ASYMMETRY_WARN {
            warnings.push(format!("{what} asymmetry {asym:e} exceeds {:e}; symmetrized", tol::INPUT_ASYMMETRY_WARN));
        }
        Ok(Some(m))
    };
    let matrix = read_checked(&job.matrix_path, "matrix")?;
    let direction = read_checked(&job.direction_path, "direction")?;
    let theta = job.theta.as_deref().map(parse_theta).transpose()?;
    let mut probe = QuotientProbe::default().with_seed(job.seed);
    if let Some(g) = &job.probe_t_grid {
        probe.t_grid = g.clone();
    }
    if let Some(s) = job.probe_samples {
        probe.samples = s;
    }
    probe.validate()?;
    if let Some(g) = job.gamma {
        if !(g.is_finite() && g > 0.0) {
            return Err(CliError::Parse(format!("gamma must be positive, got {g}")));
        }
    }
    Ok(Loaded {
        inputs: InputsEcho {
            matrix,
            theta,
            direction,
            subgradient: job.subgradient.clone(),
            gamma: job.gamma,
            probe,
        },
        warnings,
    })
}

fn triple_json(t: &SubgradientTriple) -> Value {
    json!({
        "y": t.y(),
        "v": t.v(),
        "q": t.q().perm(),
        "big_y": t.big_y(),
    })
}

fn subgradient(
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    given: &Option<Vec<f64>>,
) -> Result<SubgradientTriple, CliError> {
    let y = match given {
        Some(y) => y.clone(),
        None => theta_subgradients(spec, &es.snapped_lambda())?.canonical_element(),
    };
    Ok(spectral_subgradient(spec, es, &y)?)
}

fn first_order_probe(l: &Loaded) -> QuotientProbe {
    let mut p = QuotientProbe::first_order().with_seed(l.inputs.probe.seed);
    p.samples = l.inputs.probe.samples.min(p.samples).max(1);
    p
}

fn subderiv_json(spec: &SymmetricFunctionSpec, es: &EigenSystem, h: &SymMatrix, l: &Loaded) -> Result<Value, CliError> {
    let formula = spectral_subderivative(spec, es, h)?;
    let f = composite_objective(spec, es.n());
    let out = oracle::numeric_subderivative(&f, &es.x().svec(), &h.svec(), &first_order_probe(l))?;
    Ok(json!({
        "dg": formula,
        "oracle_dg": out.estimate,
        "oracle_gap": out.estimate.finite().map(|o| (o - formula).abs()),
    }))
}

fn critcone_json(
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    t: &SubgradientTriple,
    h: &SymMatrix,
) -> Result<Value, CliError> {
    let member = critical_cone_member(spec, es, t, h)?;
    let gap = critical_cone_definition_gap(spec, es, t, h)?;
    let rep = spectral_second_subderivative(spec, es, t, h)?;
    Ok(json!({
        "in_critical_cone": member,
        "definition_gap": gap,
        "definition_member": gap.abs() <= tol::CRITICAL_CONE_DEFINITION,
        "fan_gaps": rep.fan_gaps,
        "lambda_prime": rep.eig_dir.d,
    }))
}

fn ssub_json(
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    t: &SubgradientTriple,
    h: &SymMatrix,
    probe: &QuotientProbe,
) -> Result<(Value, ProbeOutcome), CliError> {
    let mut rep = spectral_second_subderivative(spec, es, t, h)?;
    let trace = attach_oracle(&mut rep, spec, es, t, probe)?;
    let gqf = if spec.is_polyhedral() {
        Some(theta_gqf_certificate(spec, &es.snapped_lambda(), t.v())?)
    } else {
        None
    };
    Ok((
        json!({
            "report": rep,
            "oracle_levels": trace.levels,
            "gqf": gqf,
        }),
        trace,
    ))
}

/// Writes `t,min_quotient,at_w_quotient` rows; `+∞` cells are written as `+inf`.
pub fn write_trace_csv(levels: &[ProbeLevel], path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t", "min_quotient", "at_w_quotient"]).map_err(io)?;
    for l in levels {
        w.write_record([l.t.to_string(), l.min_quotient.to_string(), l.at_w_quotient.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Probes `Δ²_t g(X,Y)(H)` on `probe.t_grid` and writes the per-level trace.
pub fn emit_quotient_trace(
    spec: &SymmetricFunctionSpec,
    x: &SymMatrix,
    big_y: &SymMatrix,
    h: &SymMatrix,
    probe: &QuotientProbe,
    out_csv: &Path,
) -> Result<ProbeOutcome, CliError> {
    let out = crate::spectral::oracle_second_subderivative(spec, x, big_y, h, probe)?;
    write_trace_csv(&out.levels, out_csv)?;
    Ok(out)
}

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("unix:{secs}")
}

/// Runs one job. Errors carry their exit code; a VERIFY run with failures
/// returns a document with exit code 1.
pub fn run(job: &JobSpec) -> Result<RunOutcome, CliError> {
    let loaded = load(job)?;
    let mut trace: Option<ProbeOutcome> = None;
    let mut eigen = None;
    let mut exit_code = 0;
    let output = match job.command {
        Command::Verify => {
            if !(job.verify_scale.is_finite() && job.verify_scale > 0.0) {
                return Err(CliError::Parse("verify scale must be positive".into()));
            }
            let cfg = VerifyConfig {
                seed: job.seed,
                scale: job.verify_scale,
            };
            let suites = verify::run_all(&cfg);
            let passed = suites.iter().filter(|s| s.passed).count();
            let failed = suites.len() - passed;
            if failed > 0 {
                exit_code = 1;
            }
            json!({ "passed": passed, "failed": failed, "suites": suites })
        }
        Command::Prox => {
            let spec = loaded.spec()?;
            let x = loaded.matrix()?;
            let p = spectral_prox(spec, loaded.gamma()?, &x)?;
            eigen = Some(EigenData::from(&eig_default(&x)?));
            let mut out = json!({ "prox": p });
            if let Some(d) = loaded.inputs.direction.as_ref() {
                let d = d.to_sym()?;
                out["directional_derivative"] =
                    serde_json::to_value(crate::spectral::prox_directional_derivative(spec, loaded.gamma()?, &x, &d)?)
                        .expect("serializable");
            }
            out
        }
        cmd => {
            let spec = loaded.spec()?;
            let x = loaded.matrix()?;
            let es = eig_default(&x)?;
            eigen = Some(EigenData::from(&es));
            match cmd {
                Command::Subderiv => {
                    let h = loaded.direction(es.n())?;
                    subderiv_json(spec, &es, &h, &loaded)?
                }
                Command::Critcone => {
                    let h = loaded.direction(es.n())?;
                    let t = subgradient(spec, &es, &job.subgradient)?;
                    let mut out = critcone_json(spec, &es, &t, &h)?;
                    out["subgradient"] = triple_json(&t);
                    out
                }
                Command::Ssub => {
                    let h = loaded.direction(es.n())?;
                    let t = subgradient(spec, &es, &job.subgradient)?;
                    let (mut out, tr) = ssub_json(spec, &es, &t, &h, &loaded.inputs.probe)?;
                    out["subgradient"] = triple_json(&t);
                    trace = Some(tr);
                    out
                }
                Command::Semideriv => {
                    let h = loaded.direction(es.n())?;
                    json!({ "second_semiderivative": second_semiderivative(spec, &es, &h)? })
                }
                Command::Report => {
                    let t = subgradient(spec, &es, &job.subgradient)?;
                    let mut out = json!({
                        "value": spectral_value(spec, &x)?,
                        "subdifferential": theta_subgradients(spec, &es.snapped_lambda())?,
                        "subgradient": triple_json(&t),
                    });
                    if loaded.inputs.direction.is_some() {
                        let h = loaded.direction(es.n())?;
                        out["subderivative"] = subderiv_json(spec, &es, &h, &loaded)?;
                        out["critical_cone"] = critcone_json(spec, &es, &t, &h)?;
                        let (ss, tr) = ssub_json(spec, &es, &t, &h, &loaded.inputs.probe)?;
                        out["second_subderivative"] = ss;
                        trace = Some(tr);
                    }
                    if let Some(g) = loaded.inputs.gamma {
                        out["prox"] = serde_json::to_value(spectral_prox(spec, g, &x)?).expect("serializable");
                    }
                    out
                }
                Command::Prox | Command::Verify => unreachable!(),
            }
        }
    };
    if let Some(path) = &job.trace_csv {
        let tr = trace.ok_or_else(|| CliError::Parse("--trace-csv needs a command that probes Δ² (SSUB or REPORT with --direction)".into()))?;
        write_trace_csv(&tr.levels, path)?;
    }
    let document = ReportDocument {
        version: VERSION.to_string(),
        command: job.command,
        seed: job.seed,
        generated_at: timestamp(),
        inputs: loaded.inputs,
        eigen,
        warnings: loaded.warnings,
        tolerances: Tolerances::default(),
        output,
    };
    if let Some(path) = &job.output_path {
        fs::write(path, document.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(RunOutcome { document, exit_code })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().to_lowercase().parse::<Command>().unwrap(), c);
        }
        assert!("bogus".parse::<Command>().is_err());
    }

    #[test]
    fn real_lists() {
        assert_eq!(parse_real_list("[1, 0.5 ,-2]").unwrap(), vec![1.0, 0.5, -2.0]);
        assert_eq!(parse_real_list("1 2").unwrap(), vec![1.0, 2.0]);
        assert!(parse_real_list("1,x").is_err());
    }

    #[test]
    fn csv_matrices() {
        let m = parse_csv_matrix("2, 1\n1, 3\n").unwrap();
        assert_eq!(m, MatrixInput { n: 2, entries: vec![2.0, 1.0, 1.0, 3.0] });
        assert!(parse_csv_matrix("1,2\n3\n").is_err());
    }

    #[test]
    fn asymmetry_of_raw_input() {
        let m = MatrixInput { n: 2, entries: vec![1.0, 2.0, 2.5, 1.0] };
        assert_eq!(m.asymmetry(), 0.5);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::unsupported("x")).exit_code(), 3);
        assert_eq!(CliError::from(Error::param("x")).exit_code(), 2);
        assert_eq!(CliError::Io("x".into()).exit_code(), 4);
    }
}
