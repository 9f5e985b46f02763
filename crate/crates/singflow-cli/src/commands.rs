//! Subcommand implementations. Each command parses its field and knobs into
//! a `RunConfig`, runs the core pipeline, and writes reports through
//! `report::write_report` plus plot-data CSVs where applicable.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use singflow_core::chainrec::{
    build_box_cover, build_transition_graph, BoxGraph, BoxSet, GraphSummary,
    DEFAULT_TIME_SAMPLES,
};
use singflow_core::field::{FieldSpec, Region};
use singflow_core::flow::sample_orbit;
use singflow_core::hypcheck::{
    check_equivalence_with, check_hyperbolic_with, check_singular_hyperbolic_with, class_seeds,
    classify_singularity, ClassCertificate, ClassOptions, ClassVerdict, Orientation, SeedPlan,
    SingularityClass, SingularityRecord, SplittingCertificate, DEFAULT_WINDOW,
};
use singflow_core::poincare::{normal_frame, project_cocycle};
use singflow_core::{Error, DEFAULT_TOL, SPEED_FLOOR};

use crate::config::{ClassSelector, RunConfig};
use crate::report::write_report;
use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum Command {
    /// Locate and classify the zeros of the field
    Singularities(SingularitiesArgs),
    /// Build the box transition graph and export its recurrent classes
    ChainClasses(ChainClassesArgs),
    /// Certify a chain class as hyperbolic or singular hyperbolic
    Certify(CertifyArgs),
    /// Compare tangent and linear Poincaré domination on shared seeds
    Equivalence(EquivalenceArgs),
    /// Integrate one orbit and dump position, speed, and cocycle data
    Trace(TraceArgs),
}

#[derive(Args)]
pub struct FieldArgs {
    /// Catalogue name (lorenz, linear, translation, suspension-saddle,
    /// double-sink) or a path to a field JSON file
    #[arg(long)]
    pub field: String,
    /// Catalogue parameters, comma-separated: sigma=10,rho=28
    #[arg(long)]
    pub params: Option<String>,
    /// Bounding region x0,x1,y0,y1,z0,z1 (default: catalogue choice)
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Args)]
pub struct OutArgs {
    /// Directory for reports and CSVs
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores). The pool is fixed by the first
    /// command in a process.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Args)]
pub struct CoverArgs {
    /// Box edge length of the cover
    #[arg(long = "box")]
    pub box_h: f64,
    /// Recurrence slack eps added to every image ball
    #[arg(long)]
    pub eps: f64,
    /// Flow times for graph edges, comma-separated, within [1, 2]
    #[arg(long)]
    pub time_samples: Option<String>,
    /// Maximum number of cover boxes
    #[arg(long, default_value_t = 8_000_000)]
    pub budget_boxes: usize,
}

#[derive(Args)]
pub struct SelectorArgs {
    /// Chain class id, as listed by chain-classes
    #[arg(long)]
    pub class: Option<i64>,
    /// Point x,y,z: select the chain class containing it
    #[arg(long, conflicts_with = "class")]
    pub at: Option<String>,
}

#[derive(Args)]
pub struct CertifyWindowArgs {
    /// Certificate window T
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: f64,
    /// Rate-law checkpoints, comma-separated (default: integer ladder)
    #[arg(long)]
    pub checkpoints: Option<String>,
    /// Seeds drawn per class
    #[arg(long, default_value_t = 100)]
    pub seed_count: usize,
    /// RNG seed for seed selection
    #[arg(long = "seed", default_value_t = 7)]
    pub rng_seed: u64,
}

#[derive(Args)]
pub struct SingularitiesArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Newton-start grid resolution per axis
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct ChainClassesArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub cover: CoverArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Forward,
    Reverse,
    /// Forward, retrying reversed when the spectra point the other way
    Auto,
}

#[derive(Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub cover: CoverArgs,
    #[command(flatten)]
    pub selector: SelectorArgs,
    #[command(flatten)]
    pub window: CertifyWindowArgs,
    /// Orientation for the singular-hyperbolic checker
    #[arg(long, value_enum, default_value_t = OrientationArg::Auto)]
    pub orientation: OrientationArg,
    /// Newton-start grid resolution for the singularity scan
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct EquivalenceArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Box edge length (needed with --class/--at)
    #[arg(long = "box")]
    pub box_h: Option<f64>,
    /// Recurrence slack eps (needed with --class/--at)
    #[arg(long)]
    pub eps: Option<f64>,
    /// Flow times for graph edges, comma-separated, within [1, 2]
    #[arg(long)]
    pub time_samples: Option<String>,
    /// Maximum number of cover boxes
    #[arg(long, default_value_t = 8_000_000)]
    pub budget_boxes: usize,
    #[command(flatten)]
    pub selector: SelectorArgs,
    #[command(flatten)]
    pub window: CertifyWindowArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Initial point x,y,z
    #[arg(long)]
    pub start: String,
    /// Total integration time
    #[arg(long)]
    pub t_total: f64,
    /// Output step
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Singularities(args) => cmd_singularities(args),
        Command::ChainClasses(args) => cmd_chain_classes(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Equivalence(args) => cmd_equivalence(args),
        Command::Trace(args) => cmd_trace(args),
    }
}

// --- argument parsing helpers --------------------------------------------

fn parse_floats(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("could not parse {what} entry '{s}'")))
        })
        .collect()
}

fn parse_point(text: &str, what: &str) -> CliResult<Vector3<f64>> {
    let v = parse_floats(text, what)?;
    if v.len() != 3 {
        return Err(CliError::Config(format!("{what} needs 3 coordinates, got {}", v.len())));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_region(text: &str) -> CliResult<Region> {
    let v = parse_floats(text, "--region")?;
    if v.len() != 6 {
        return Err(CliError::Config(format!("--region needs 6 bounds, got {}", v.len())));
    }
    Ok(Region::new([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]])?)
}

fn parse_params(text: Option<&str>) -> CliResult<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    let Some(text) = text else { return Ok(map) };
    for pair in text.split(',').filter(|p| !p.trim().is_empty()) {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(CliError::Config(format!(
                "parameter '{pair}' is not of the form name=value"
            )));
        };
        let value: f64 = value.trim().parse().map_err(|_| {
            CliError::Config(format!("parameter '{}' has a non-numeric value '{value}'", key.trim()))
        })?;
        map.insert(key.trim().to_string(), value);
    }
    Ok(map)
}

fn parse_field(args: &FieldArgs) -> CliResult<FieldSpec> {
    let region = args.region.as_deref().map(parse_region).transpose()?;
    let path = Path::new(&args.field);
    if path.is_file() {
        if args.params.is_some() || region.is_some() {
            return Err(CliError::Config(
                "--params/--region apply to catalogue fields; a field file fixes both".into(),
            ));
        }
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_owned(), e))?;
        return Ok(FieldSpec::from_json(&text)?);
    }
    let params = parse_params(args.params.as_deref())?;
    Ok(FieldSpec::from_catalogue(&args.field, &params, region)?)
}

fn parse_time_samples(text: Option<&str>) -> CliResult<Vec<f64>> {
    match text {
        None => Ok(DEFAULT_TIME_SAMPLES.to_vec()),
        Some(t) => parse_floats(t, "--time-samples"),
    }
}

fn parse_checkpoints(text: Option<&str>) -> CliResult<Option<Vec<f64>>> {
    text.map(|t| parse_floats(t, "--checkpoints")).transpose()
}

fn parse_selector(args: &SelectorArgs) -> CliResult<Option<ClassSelector>> {
    match (&args.class, &args.at) {
        (Some(id), None) => Ok(Some(ClassSelector::Class(*id))),
        (None, Some(text)) => {
            let p = parse_point(text, "--at")?;
            Ok(Some(ClassSelector::At([p.x, p.y, p.z])))
        }
        (None, None) => Ok(None),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn prepare_out(args: &OutArgs) -> CliResult<PathBuf> {
    if args.jobs > 0 {
        // First caller wins; later configurations in the same process are
        // no-ops, which only ever means more or fewer workers, never
        // different numbers.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build_global();
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(args.out.clone(), e))?;
    Ok(args.out.clone())
}

// --- singularities ---------------------------------------------------------

#[derive(Serialize)]
struct SingularitiesPayload {
    singularities: Vec<SingularityRecord>,
}

fn cmd_singularities(args: SingularitiesArgs) -> CliResult {
    let field = parse_field(&args.field)?;
    let out = prepare_out(&args.out)?;
    let mut config = RunConfig::new("singularities", &field);
    config.grid = Some(args.grid);

    let zeros = field.find_singularities(args.grid)?;
    let mut records = Vec::with_capacity(zeros.len());
    for z in &zeros {
        records.push(classify_singularity(&field, &z.point())?);
    }
    records.sort_by(|a, b| a.position.partial_cmp(&b.position).expect("finite positions"));

    let path = out.join("singularities.json");
    let assumptions =
        vec!["eigenvalue classification at finite precision; see resolution_limited flags".into()];
    write_report(&path, &config, &assumptions, SingularitiesPayload { singularities: records })?;
    println!("wrote {} ({} records)", path.display(), zeros.len());
    Ok(())
}

// --- chain classes -----------------------------------------------------------

#[derive(Serialize)]
struct ClassRow {
    class: i64,
    box_count: usize,
    smallest_box: u32,
    centroid: [f64; 3],
}

#[derive(Serialize)]
struct ChainPayload {
    summary: GraphSummary,
    classes: Vec<ClassRow>,
    scc_csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges_csv_skipped: Option<String>,
}

fn build_graph(field: &FieldSpec, cover_args: &CoverArgs) -> CliResult<BoxGraph> {
    let cover =
        build_box_cover(field.region.clone(), cover_args.box_h, cover_args.budget_boxes)?;
    let times = parse_time_samples(cover_args.time_samples.as_deref())?;
    Ok(build_transition_graph(field, &cover, cover_args.eps, &times)?)
}

fn class_rows(graph: &BoxGraph) -> Vec<ClassRow> {
    graph
        .class_labels()
        .iter()
        .map(|&class| {
            let boxes = graph.class_boxes(class);
            let set = BoxSet::new(graph.cover.clone(), boxes.clone());
            let centroid = set.centroid().expect("classes are non-empty");
            ClassRow {
                class,
                box_count: boxes.len(),
                smallest_box: boxes.iter().copied().min().expect("non-empty"),
                centroid: [centroid.x, centroid.y, centroid.z],
            }
        })
        .collect()
}

fn write_scc_csv(path: &Path, graph: &BoxGraph) -> CliResult {
    let file = File::create(path).map_err(|e| CliError::Io(path.to_owned(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| CliError::Io(path.to_owned(), e);
    writeln!(w, "box_id,class,cx,cy,cz").map_err(io_err)?;
    for b in graph.chain_recurrent_boxes() {
        let c = graph.cover.box_center(b);
        writeln!(w, "{b},{},{},{},{}", graph.scc[b as usize], c.x, c.y, c.z).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// EXIT edges are written with dst = -1. Graphs whose materialized edge
/// list would blow the in-memory cap skip the file and say so in the
/// report; the summary counts stay exact either way.
fn write_edges_csv(path: &Path, graph: &BoxGraph) -> CliResult<Result<(), String>> {
    let edges = match graph.edge_list() {
        Ok(edges) => edges,
        Err(Error::BudgetExceeded(msg)) => return Ok(Err(msg)),
        Err(e) => return Err(e.into()),
    };
    let file = File::create(path).map_err(|e| CliError::Io(path.to_owned(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| CliError::Io(path.to_owned(), e);
    writeln!(w, "src,dst").map_err(io_err)?;
    let exit = graph.exit_node();
    for (src, dst) in edges {
        if dst == exit {
            writeln!(w, "{src},-1").map_err(io_err)?;
        } else {
            writeln!(w, "{src},{dst}").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(Ok(()))
}

fn chain_config(command: &str, field: &FieldSpec, cover: &CoverArgs) -> CliResult<RunConfig> {
    let mut config = RunConfig::new(command, field);
    config.box_h = Some(cover.box_h);
    config.eps = Some(cover.eps);
    config.time_samples = Some(parse_time_samples(cover.time_samples.as_deref())?);
    config.budget_boxes = Some(cover.budget_boxes);
    Ok(config)
}

fn cmd_chain_classes(args: ChainClassesArgs) -> CliResult {
    let field = parse_field(&args.field)?;
    let out = prepare_out(&args.out)?;
    let config = chain_config("chain-classes", &field, &args.cover)?;

    let graph = build_graph(&field, &args.cover)?;

    let scc_path = out.join("scc.csv");
    write_scc_csv(&scc_path, &graph)?;
    let edges_path = out.join("edges.csv");
    let edges_written = write_edges_csv(&edges_path, &graph)?;

    let payload = ChainPayload {
        summary: graph.summary(),
        classes: class_rows(&graph),
        scc_csv: "scc.csv".into(),
        edges_csv: edges_written.is_ok().then(|| "edges.csv".into()),
        edges_csv_skipped: edges_written.err(),
    };
    let path = out.join("chain_classes.json");
    let assumptions = vec![
        "box graph over-approximates chain recurrence at the configured resolution".into(),
    ];
    write_report(&path, &config, &assumptions, payload)?;
    println!(
        "wrote {} ({} classes, {} recurrent boxes)",
        path.display(),
        graph.class_labels().len(),
        graph.recurrent_box_count
    );
    Ok(())
}

// --- certify -----------------------------------------------------------------

fn resolve_class(graph: &BoxGraph, selector: &ClassSelector) -> CliResult<BoxSet> {
    match selector {
        ClassSelector::Class(id) => {
            let labels = graph.class_labels();
            if !labels.contains(id) {
                return Err(CliError::Config(format!(
                    "class {id} not found; this config has classes {labels:?}"
                )));
            }
            Ok(graph.class_box_set(*id))
        }
        ClassSelector::At(p) => {
            let point = Vector3::from(*p);
            let ids = graph.chain_class_of(&point).map_err(|e| match e {
                Error::NotRecurrent { .. } | Error::InvalidArgument(_) => {
                    CliError::Config(e.to_string())
                }
                other => CliError::Core(other),
            })?;
            Ok(BoxSet::new(graph.cover.clone(), ids))
        }
    }
}

fn seed_plan(window: &CertifyWindowArgs) -> SeedPlan {
    SeedPlan {
        count: window.seed_count,
        random_boxes: window.seed_count / 2,
        rng_seed: window.rng_seed,
        ..SeedPlan::default()
    }
}

#[derive(Serialize)]
struct CertifyPayload {
    certificate: ClassCertificate,
}

fn cmd_certify(args: CertifyArgs) -> CliResult {
    let field = parse_field(&args.field)?;
    let out = prepare_out(&args.out)?;
    let selector = parse_selector(&args.selector)?
        .ok_or_else(|| CliError::Config("certify needs --class or --at".into()))?;
    let checkpoints = parse_checkpoints(args.window.checkpoints.as_deref())?;

    let mut config = chain_config("certify", &field, &args.cover)?;
    config.class = Some(selector.clone());
    config.orientation = Some(format!("{:?}", args.orientation).to_lowercase());
    config.window = Some(args.window.window);
    config.checkpoints = checkpoints.clone();
    config.seed_count = Some(args.window.seed_count);
    config.rng_seed = Some(args.window.rng_seed);
    config.grid = Some(args.grid);

    let graph = build_graph(&field, &args.cover)?;
    let class = resolve_class(&graph, &selector)?;
    let seeds = class_seeds(&field, &class, &seed_plan(&args.window));

    let opts = ClassOptions { checkpoints, grid_n: args.grid, ..ClassOptions::default() };

    let singular = field
        .find_singularities(args.grid)?
        .iter()
        .any(|s| class.contains_point_padded(&s.point(), 1));

    let certificate = if !singular {
        check_hyperbolic_with(&field, &class, &seeds, args.window.window, &opts)?
    } else {
        let first = match args.orientation {
            OrientationArg::Reverse => Orientation::Reverse,
            _ => Orientation::Forward,
        };
        let cert = check_singular_hyperbolic_with(
            &field,
            &class,
            &seeds,
            args.window.window,
            first,
            &opts,
        )?;
        let retry = args.orientation == OrientationArg::Auto
            && cert.verdict == ClassVerdict::StructuralFailure
            && !cert.singularities.is_empty()
            && cert
                .singularities
                .iter()
                .all(|r| r.classification == SingularityClass::LorenzLikeForMinusX);
        if retry {
            check_singular_hyperbolic_with(
                &field,
                &class,
                &seeds,
                args.window.window,
                Orientation::Reverse,
                &opts,
            )?
        } else {
            cert
        }
    };

    let path = out.join("certificate.json");
    let assumptions = certificate.assumptions_unchecked.clone();
    let verdict = certificate.verdict;
    write_report(&path, &config, &assumptions, CertifyPayload { certificate })?;
    println!("wrote {} (verdict: {:?})", path.display(), verdict);
    Ok(())
}

// --- equivalence ---------------------------------------------------------------

#[derive(Serialize)]
struct EquivalencePayload {
    agree: bool,
    tangent: SplittingCertificate,
    linear_poincare: SplittingCertificate,
}

/// Uniform region samples, singularity-shy, for class-free comparisons.
fn region_seeds(field: &FieldSpec, count: usize, rng_seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let (lo, hi) = (field.region.min(), field.region.max());
    let mut seeds = Vec::with_capacity(count);
    for _ in 0..count * 10 {
        if seeds.len() == count {
            break;
        }
        let p = Vector3::new(
            rng.gen_range(lo[0]..=hi[0]),
            rng.gen_range(lo[1]..=hi[1]),
            rng.gen_range(lo[2]..=hi[2]),
        );
        if field.evaluate(&p).norm() >= SPEED_FLOOR {
            seeds.push(p);
        }
    }
    seeds
}

fn cmd_equivalence(args: EquivalenceArgs) -> CliResult {
    let field = parse_field(&args.field)?;
    let out = prepare_out(&args.out)?;
    let selector = parse_selector(&args.selector)?;
    let checkpoints = parse_checkpoints(args.window.checkpoints.as_deref())?;

    let mut config = RunConfig::new("equivalence", &field);
    config.class = selector.clone();
    config.window = Some(args.window.window);
    config.checkpoints = checkpoints.clone();
    config.seed_count = Some(args.window.seed_count);
    config.rng_seed = Some(args.window.rng_seed);

    let (class, seeds) = match &selector {
        Some(sel) => {
            let (Some(box_h), Some(eps)) = (args.box_h, args.eps) else {
                return Err(CliError::Config(
                    "--class/--at needs --box and --eps to build the transition graph".into(),
                ));
            };
            let cover_args = CoverArgs {
                box_h,
                eps,
                time_samples: args.time_samples.clone(),
                budget_boxes: args.budget_boxes,
            };
            config.box_h = Some(box_h);
            config.eps = Some(eps);
            config.time_samples =
                Some(parse_time_samples(cover_args.time_samples.as_deref())?);
            config.budget_boxes = Some(args.budget_boxes);
            let graph = build_graph(&field, &cover_args)?;
            let class = resolve_class(&graph, sel)?;
            let seeds = class_seeds(&field, &class, &seed_plan(&args.window));
            (class, seeds)
        }
        None => {
            // No class: compare on seeds scattered over the whole region.
            let edge = field.region.edge_lengths().iter().cloned().fold(0.0, f64::max);
            let cover = build_box_cover(field.region.clone(), edge, 8)?;
            let seeds = region_seeds(&field, args.window.seed_count, args.window.rng_seed);
            (BoxSet::new(cover, Vec::new()), seeds)
        }
    };

    let opts = ClassOptions { checkpoints, ..ClassOptions::default() };
    let report = check_equivalence_with(&field, &class, &seeds, args.window.window, &opts)?;

    let path = out.join("equivalence.json");
    let assumptions = report.assumptions_unchecked.clone();
    let agree = report.agree;
    write_report(
        &path,
        &config,
        &assumptions,
        EquivalencePayload {
            agree: report.agree,
            tangent: report.tangent,
            linear_poincare: report.linear_poincare,
        },
    )?;
    println!("wrote {} (agree: {agree})", path.display());
    Ok(())
}

// --- trace --------------------------------------------------------------------

fn cmd_trace(args: TraceArgs) -> CliResult {
    let field = parse_field(&args.field)?;
    let out = prepare_out(&args.out)?;
    let start = parse_point(&args.start, "--start")?;
    if !(args.t_total > 0.0) || !(args.dt > 0.0) {
        return Err(CliError::Config("--t-total and --dt must be positive".into()));
    }

    let mut config = RunConfig::new("trace", &field);
    config.start = Some([start.x, start.y, start.z]);
    config.t_total = Some(args.t_total);
    config.dt = Some(args.dt);

    let segment = sample_orbit(&field, &start, args.t_total, args.dt, DEFAULT_TOL)?;
    let frame0 = normal_frame(&field, &segment.points[0])?;

    let path = out.join("trace.csv");
    let file = File::create(&path).map_err(|e| CliError::Io(path.clone(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| CliError::Io(path.clone(), e);
    writeln!(w, "t,x,y,z,speed,psi11,psi12,psi21,psi22,rpsi11,rpsi12,rpsi21,rpsi22")
        .map_err(io_err)?;
    let mut rows = 0usize;
    for k in 0..segment.times.len() {
        let frame = match normal_frame(&field, &segment.points[k]) {
            Ok(f) => f,
            Err(_) => {
                writeln!(w, "# frame unavailable at t={}", segment.times[k]).map_err(io_err)?;
                break;
            }
        };
        let psi = project_cocycle(&frame0, &frame, &segment.cocycle[k]);
        let rpsi = psi * (frame0.speed / frame.speed);
        let p = segment.points[k];
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            segment.times[k],
            p.x,
            p.y,
            p.z,
            frame.speed,
            psi[(0, 0)],
            psi[(0, 1)],
            psi[(1, 0)],
            psi[(1, 1)],
            rpsi[(0, 0)],
            rpsi[(0, 1)],
            rpsi[(1, 0)],
            rpsi[(1, 1)],
        )
        .map_err(io_err)?;
        rows += 1;
    }
    if let Some(tr) = &segment.truncation {
        writeln!(
            w,
            "# truncated at t={} near ({}, {}, {})",
            tr.t, tr.state.x, tr.state.y, tr.state.z
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    println!("wrote {} ({rows} rows)", path.display());
    Ok(())
}
