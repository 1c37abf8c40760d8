use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use datacycle::document::{
    import_csv, parse_model_document, parse_unchecked, render_document, render_json, render_suite, ConfigPayload,
    DocumentError, ModelDocument, SuiteFormat,
};
use datacycle::experiment::{resolve_instances, run_experiment, ExperimentConfig, ExperimentError, Instance};
use datacycle::sutgen::{generate_sut, SutGenConfig, SutGenError, PRESETS};
use datacycle::{
    build_transition_system, check_case, derive_crud_matrix, generate_suite, simulate, suggest_best_read,
    validate_matrix, validate_sut, ConsistencyFinding, CoverageCriterion, SimulationOptions,
};

#[derive(Parser)]
#[command(name = "datacycle", version, about = "Data cycle test generation from extended CRUD matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Criterion {
    #[value(name = "dcyt-1r")]
    Dcyt1R,
    #[value(name = "dcyt-nr")]
    DcytNR,
    Or,
    Ob,
    Ir,
    Iri,
    Nr,
    Nri,
}

impl From<Criterion> for CoverageCriterion {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::Dcyt1R => CoverageCriterion::Dcyt1R,
            Criterion::DcytNR => CoverageCriterion::DcytNR,
            Criterion::Or => CoverageCriterion::OR,
            Criterion::Ob => CoverageCriterion::OB,
            Criterion::Ir => CoverageCriterion::IR,
            Criterion::Iri => CoverageCriterion::IRI,
            Criterion::Nr => CoverageCriterion::NR,
            Criterion::Nri => CoverageCriterion::NRI,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a matrix, SUT, suite or config document.
    Validate { input: PathBuf },
    /// Convert a plain CRUD grid in CSV form into a matrix document.
    ImportCsv {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the best-read candidate of every entity.
    SuggestBestRead { matrix: PathBuf },
    /// Generate a test suite from a matrix.
    Generate {
        matrix: PathBuf,
        #[arg(long, value_enum)]
        criterion: Criterion,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Report steps a SUT cannot execute; exits 2 when any exist.
    Check {
        suite: PathBuf,
        #[arg(long)]
        sut: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Insert shortest enabling sequences before inconsistent steps.
    Repair {
        suite: PathBuf,
        #[arg(long)]
        sut: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a suite on a SUT and report inconsistency and leakage.
    Simulate {
        suite: PathBuf,
        #[arg(long)]
        sut: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ignore steps after the first inconsistent step of a case.
        #[arg(long)]
        strict_detection: bool,
        /// Match defect causes and activators by function only.
        #[arg(long)]
        function_only: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Derive the CRUD matrix a designer would write for a SUT.
    DeriveMatrix {
        sut: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        capture_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a random SUT from a config document or a preset.
    GenSut {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = PRESETS)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the evaluation pipeline and print a per-criterion table.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use fixed SUT documents instead of generated instances.
        #[arg(long)]
        sut: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        capture_ratio: Option<f64>,
        #[arg(long)]
        strict_detection: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Invalid(String),
    Findings,
    Unsatisfiable(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Findings => 2,
            Failure::Unsatisfiable(_) => 3,
        }
    }
}

impl From<DocumentError> for Failure {
    fn from(e: DocumentError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<SutGenError> for Failure {
    fn from(e: SutGenError) -> Self {
        match e {
            SutGenError::Unsatisfiable(_) => Failure::Unsatisfiable(e.to_string()),
            SutGenError::InvalidConfig(_) => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::SutGen { source: SutGenError::Unsatisfiable(_), .. } => Failure::Unsatisfiable(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).map_err(invalid)?;
        return Ok(text);
    }
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<ModelDocument, Failure> {
    parse_model_document(&read_input(path)?).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write_output(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) if path != Path::new("-") => {
            fs::write(path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
        }
        _ => io::stdout().write_all(text.as_bytes()).map_err(invalid),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { input } => {
            let doc = parse_unchecked(&read_input(&input)?)?;
            let report = match &doc {
                ModelDocument::Matrix(m) => validate_matrix(m),
                ModelDocument::Sut(s) => validate_sut(s),
                ModelDocument::Suite(_) => Default::default(),
                ModelDocument::Config(ConfigPayload::Sutgen(c)) => {
                    c.check()?;
                    Default::default()
                }
                ModelDocument::Config(ConfigPayload::Experiment(c)) => {
                    c.check()?;
                    Default::default()
                }
            };
            print!("{report}");
            if report.has_errors() {
                return Err(Failure::Invalid(format!("{} is not a valid {}", input.display(), doc.kind())));
            }
            println!("ok: {} {}", doc.kind(), input.display());
            Ok(())
        }
        Command::ImportCsv { input, output } => {
            let matrix = import_csv(&read_input(&input)?)?;
            write_output(output.as_deref(), &render_document(&ModelDocument::Matrix(matrix)))
        }
        Command::SuggestBestRead { matrix } => {
            let matrix = load(&matrix)?.into_matrix()?;
            let mut out = String::new();
            for e in matrix.entities() {
                let best = suggest_best_read(&matrix, &e.id).map_err(invalid)?;
                out.push_str(&format!("{} {}\n", e.id, best.map_or("-".to_string(), |f| f.to_string())));
            }
            write_output(None, &out)
        }
        Command::Generate { matrix, criterion, seed, format, output } => {
            let matrix = load(&matrix)?.into_matrix()?;
            let suite = generate_suite(&matrix, criterion.into(), seed).map_err(invalid)?;
            for s in &suite.skipped {
                eprintln!("skipped {}: {}", s.entity, s.reason);
            }
            let format = match format {
                Format::Json => SuiteFormat::Json,
                Format::Text => SuiteFormat::Text,
            };
            write_output(output.as_deref(), &render_suite(&suite, format))
        }
        Command::Check { suite, sut, output } => {
            let suite = load(&suite)?.into_suite()?;
            let ts = build_transition_system(&load(&sut)?.into_sut()?).map_err(invalid)?;
            #[derive(serde::Serialize)]
            struct CaseFindings<'a> {
                entity: &'a str,
                findings: Vec<ConsistencyFinding>,
            }
            let mut all = Vec::new();
            for case in &suite.cases {
                let findings = check_case(case, &ts).map_err(invalid)?;
                all.push(CaseFindings { entity: case.entity.as_str(), findings });
            }
            let found = all.iter().any(|c| !c.findings.is_empty());
            write_output(output.as_deref(), &render_json(&all))?;
            if found {
                return Err(Failure::Findings);
            }
            Ok(())
        }
        Command::Repair { suite, sut, output } => {
            let mut suite = load(&suite)?.into_suite()?;
            let ts = build_transition_system(&load(&sut)?.into_sut()?).map_err(invalid)?;
            for case in &mut suite.cases {
                let result = datacycle::repair_case(case, &ts).map_err(invalid)?;
                for i in &result.unrepairable {
                    eprintln!("{}: no enabling sequence before step {}", case.entity, i + 2);
                }
                *case = result.repaired;
            }
            write_output(output.as_deref(), &render_suite(&suite, SuiteFormat::Json))
        }
        Command::Simulate { suite, sut, seed, strict_detection, function_only, output } => {
            let suite = load(&suite)?.into_suite()?;
            let sut = load(&sut)?.into_sut()?;
            let options = SimulationOptions { strict_detection, match_op_kind: !function_only };
            let report = simulate(&suite, &sut, seed, options).map_err(invalid)?;
            write_output(output.as_deref(), &render_json(&report))
        }
        Command::DeriveMatrix { sut, capture_ratio, seed, output } => {
            let sut = load(&sut)?.into_sut()?;
            let matrix = derive_crud_matrix(&sut, capture_ratio, seed).map_err(invalid)?;
            write_output(output.as_deref(), &render_document(&ModelDocument::Matrix(matrix)))
        }
        Command::GenSut { config, preset, seed, output } => {
            let mut config = match (config, preset) {
                (Some(path), _) => match load(&path)?.into_config()? {
                    ConfigPayload::Sutgen(c) => c,
                    ConfigPayload::Experiment(_) => return Err(invalid("expected a sutgen config")),
                },
                (None, Some(name)) => SutGenConfig::preset(&name).ok_or_else(|| invalid(format!("unknown preset `{name}`")))?,
                (None, None) => return Err(invalid("either --config or --preset is required")),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let sut = generate_sut(&config)?;
            write_output(output.as_deref(), &render_document(&ModelDocument::Sut(sut)))
        }
        Command::Experiment { config, sut, seed, capture_ratio, strict_detection, format, output } => {
            let mut config = match config {
                Some(path) => match load(&path)?.into_config()? {
                    ConfigPayload::Experiment(c) => c,
                    ConfigPayload::Sutgen(_) => return Err(invalid("expected an experiment config")),
                },
                None => ExperimentConfig::default(),
            };
            if let Some(ratio) = capture_ratio {
                config.capture_ratio = ratio;
            }
            config.strict_detection |= strict_detection;
            let instances = if sut.is_empty() {
                resolve_instances(&config.instances)?
            } else {
                sut.iter()
                    .map(|path| {
                        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
                        Ok(Instance::Fixed { name, sut: load(path)?.into_sut()? })
                    })
                    .collect::<Result<Vec<_>, Failure>>()?
            };
            let report = run_experiment(&config, &instances, seed)?;
            let text = match format {
                Format::Json => render_json(&report),
                Format::Text => report.to_text(),
            };
            write_output(output.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Invalid(msg) | Failure::Unsatisfiable(msg) => eprintln!("error: {msg}"),
                Failure::Findings => eprintln!("inconsistent steps found"),
            }
            ExitCode::from(failure.code())
        }
    }
}
